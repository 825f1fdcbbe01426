use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Fill value AVIRIS-NG products use for pixels outside the orthorectified
/// footprint.
pub const DEFAULT_NO_DATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Int16,
    Int32,
    Float32,
    Float64,
}

impl DataType {
    pub fn from_envi_code(code: u32) -> Result<Self> {
        match code {
            2 => Ok(Self::Int16),
            3 => Ok(Self::Int32),
            4 => Ok(Self::Float32),
            5 => Ok(Self::Float64),
            other => Err(Error::UnsupportedDataType(other)),
        }
    }

    pub fn envi_code(self) -> u32 {
        match self {
            Self::Int16 => 2,
            Self::Int32 => 3,
            Self::Float32 => 4,
            Self::Float64 => 5,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

/// Geometry and sample encoding of a BIL raster, independent of what the
/// bands mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterLayout {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data_type: DataType,
    pub byte_order: ByteOrder,
    pub header_offset: u64,
    pub no_data: Option<f64>,
}

impl RasterLayout {
    pub fn new(height: usize, width: usize, bands: usize, data_type: DataType) -> Self {
        Self {
            height,
            width,
            bands,
            data_type,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            no_data: None,
        }
    }

    pub fn data_bytes(&self) -> u64 {
        (self.height * self.width * self.bands * self.data_type.size()) as u64
    }
}

/// Radiance cube metadata: raster layout plus the wavelength of every band.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeMeta {
    pub layout: RasterLayout,
    pub interleave: Interleave,
    /// Band centres in nanometres, strictly increasing.
    pub wavelengths: Vec<f64>,
}

impl CubeMeta {
    pub fn new(
        height: usize,
        width: usize,
        wavelengths: Vec<f64>,
        data_type: DataType,
    ) -> Result<Self> {
        let mut layout = RasterLayout::new(height, width, wavelengths.len(), data_type);
        layout.no_data = Some(DEFAULT_NO_DATA);
        let meta = Self {
            layout,
            interleave: Interleave::Bil,
            wavelengths,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn height(&self) -> usize {
        self.layout.height
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    pub fn bands(&self) -> usize {
        self.layout.bands
    }

    pub fn no_data(&self) -> Option<f64> {
        self.layout.no_data
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        if l.height == 0 || l.width == 0 || l.bands == 0 {
            return Err(Error::BadGeometry(format!(
                "cube dimensions {}x{}x{} must be positive",
                l.height, l.width, l.bands
            )));
        }
        if self.wavelengths.len() != l.bands {
            return Err(Error::MalformedWavelengthList(format!(
                "{} wavelengths for {} bands",
                self.wavelengths.len(),
                l.bands
            )));
        }
        if self.wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::MalformedWavelengthList(
                "wavelengths are not strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Parsed ENVI header of any BIL raster. Keys are lower-cased with runs of
/// whitespace collapsed, so `Data Type` and `data  type` are the same key.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub layout: RasterLayout,
    pub interleave: Interleave,
    pub wavelengths: Option<Vec<f64>>,
    pub fields: BTreeMap<String, String>,
}

impl RasterHeader {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.get(&normalize_key(key)).map(String::as_str)
    }

    /// Splits a braced list field into trimmed items.
    pub fn list_field(&self, key: &str) -> Option<Vec<String>> {
        self.field(key).map(split_list)
    }
}

fn normalize_key(key: &str) -> String {
    key.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn split_list(value: &str) -> Vec<String> {
    value
        .trim()
        .trim_start_matches('{')
        .trim_end_matches('}')
        .split(',')
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

fn collect_fields(text: &str) -> BTreeMap<String, String> {
    let mut fields = BTreeMap::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let mut value = value.trim().to_owned();
        if value.starts_with('{') {
            while !value.contains('}') {
                match lines.next() {
                    Some(more) => {
                        value.push(' ');
                        value.push_str(more.trim());
                    }
                    None => break,
                }
            }
        }
        fields.insert(normalize_key(key), value);
    }
    fields
}

fn required<'a>(fields: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::MissingField(key.to_string()))
}

fn parse_usize(fields: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let raw = required(fields, key)?;
    raw.trim().parse().map_err(|_| Error::MalformedField {
        key: key.into(),
        value: raw.into(),
    })
}

/// Parses any ENVI raster header (cube, GLT, float map). Wavelengths are
/// optional here.
pub fn parse_raster_header(text: &str) -> Result<RasterHeader> {
    let fields = collect_fields(text);
    let width = parse_usize(&fields, "samples")?;
    let height = parse_usize(&fields, "lines")?;
    let bands = parse_usize(&fields, "bands")?;
    let interleave = required(&fields, "interleave")?;
    if !interleave.trim().eq_ignore_ascii_case("bil") {
        return Err(Error::UnsupportedInterleave(interleave.trim().into()));
    }
    let data_type = match fields.get("data type") {
        Some(raw) => {
            let code: u32 = raw.trim().parse().map_err(|_| Error::MalformedField {
                key: "data type".into(),
                value: raw.clone(),
            })?;
            DataType::from_envi_code(code)?
        }
        None => DataType::Float32,
    };
    let byte_order = match fields.get("byte order").map(|s| s.trim()) {
        None | Some("0") => ByteOrder::Little,
        Some("1") => ByteOrder::Big,
        Some(other) => {
            return Err(Error::MalformedField {
                key: "byte order".into(),
                value: other.into(),
            })
        }
    };
    let header_offset = match fields.get("header offset") {
        Some(raw) => raw.trim().parse().map_err(|_| Error::MalformedField {
            key: "header offset".into(),
            value: raw.clone(),
        })?,
        None => 0,
    };
    let no_data = match fields.get("data ignore value") {
        Some(raw) => Some(raw.trim().parse::<f64>().map_err(|_| Error::MalformedField {
            key: "data ignore value".into(),
            value: raw.clone(),
        })?),
        None => None,
    };
    let wavelengths = match fields.get("wavelength") {
        None => None,
        Some(raw) => {
            let scale = match fields.get("wavelength units").map(|s| s.trim().to_lowercase()) {
                Some(u) if u.starts_with("micro") || u == "um" => 1000.0,
                _ => 1.0,
            };
            let items = split_list(raw);
            let mut values = Vec::with_capacity(items.len());
            for item in &items {
                let v: f64 = item
                    .parse()
                    .map_err(|_| Error::MalformedWavelengthList(format!("bad entry `{item}`")))?;
                values.push(v * scale);
            }
            Some(values)
        }
    };
    Ok(RasterHeader {
        layout: RasterLayout {
            height,
            width,
            bands,
            data_type,
            byte_order,
            header_offset,
            no_data,
        },
        interleave: Interleave::Bil,
        wavelengths,
        fields,
    })
}

/// Parses a radiance-cube header. Requires a wavelength list with one entry
/// per band; the no-data value defaults to [`DEFAULT_NO_DATA`].
pub fn parse_envi_header(text: &str) -> Result<CubeMeta> {
    let header = parse_raster_header(text)?;
    let wavelengths = header
        .wavelengths
        .ok_or_else(|| Error::MissingField("wavelength".into()))?;
    let mut layout = header.layout;
    layout.no_data.get_or_insert(DEFAULT_NO_DATA);
    let meta = CubeMeta {
        layout,
        interleave: header.interleave,
        wavelengths,
    };
    meta.validate()?;
    Ok(meta)
}
