//! Raster files on disk: positioned reads for cubes and ENVI writers for
//! the float and integer rasters the pipeline emits.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use methanemapper_core::hsi::{
    encode_bil, parse_envi_header, parse_raster_header, BilReader, ByteSource, DataType, GeoGrid,
    GltMap, HyperCube, RasterLayout, DEFAULT_NO_DATA,
};
use methanemapper_core::{Error as CoreError, MaskedGrid};

use crate::error::{AppError, Context, Result};
use crate::Provenance;

/// Read-only file addressed by offset. Concurrent reads do not share a
/// cursor, so one handle can serve every worker thread.
#[derive(Debug)]
pub struct FileSource {
    file: File,
    len: u64,
}

impl FileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).at(path)?;
        let len = file.metadata().at(path)?.len();
        Ok(Self { file, len })
    }
}

impl ByteSource for FileSource {
    fn byte_len(&self) -> u64 {
        self.len
    }

    #[cfg(unix)]
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), CoreError> {
        use std::os::unix::fs::FileExt;
        self.file
            .read_exact_at(buf, offset)
            .map_err(|e| CoreError::IoFailure(format!("read of {} bytes at {offset}: {e}", buf.len())))
    }

    #[cfg(windows)]
    fn read_at(&self, offset: u64, mut buf: &mut [u8]) -> Result<(), CoreError> {
        use std::os::windows::fs::FileExt;
        let mut pos = offset;
        while !buf.is_empty() {
            match self.file.seek_read(buf, pos) {
                Ok(0) => return Err(CoreError::IoFailure(format!("unexpected end of file at {pos}"))),
                Ok(n) => {
                    buf = &mut buf[n..];
                    pos += n as u64;
                }
                Err(e) => return Err(CoreError::IoFailure(format!("read at {pos}: {e}"))),
            }
        }
        Ok(())
    }
}

/// Binary file that belongs to a header: `x.hdr` pairs with `x.img`,
/// `x.bil`, `x.dat` or a bare `x`, first match wins.
pub fn data_path(header: &Path) -> Result<PathBuf> {
    let stem = header.with_extension("");
    for ext in ["img", "bil", "dat"] {
        let p = stem.with_extension(ext);
        if p.is_file() {
            return Ok(p);
        }
    }
    if stem.is_file() && stem != header {
        return Ok(stem);
    }
    Err(AppError::user(format!(
        "no binary data next to header {}",
        header.display()
    )))
}

fn read_header_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).at(path)
}

pub fn open_cube(header: &Path) -> Result<HyperCube<FileSource>> {
    let meta = parse_envi_header(&read_header_text(header)?).at(header)?;
    let data = data_path(header)?;
    HyperCube::new(meta, FileSource::open(&data)?).at(&data)
}

pub fn open_raster(header: &Path) -> Result<BilReader<FileSource>> {
    let h = parse_raster_header(&read_header_text(header)?).at(header)?;
    let data = data_path(header)?;
    BilReader::new(h.layout, FileSource::open(&data)?).at(&data)
}

pub fn read_glt(header: &Path) -> Result<GltMap> {
    GltMap::read(&open_raster(header)?).at(header)
}

pub fn read_locations(header: &Path) -> Result<GeoGrid> {
    GeoGrid::read(&open_raster(header)?).at(header)
}

/// Description of a raster to be written next to its samples.
#[derive(Debug, Clone)]
pub struct RasterSpec<'a> {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub data_type: DataType,
    pub no_data: Option<f64>,
    pub wavelengths: Option<&'a [f64]>,
    pub band_names: &'a [&'a str],
    pub description: &'a str,
}

fn header_text(spec: &RasterSpec, prov: Option<&Provenance>) -> String {
    let mut s = String::from("ENVI\n");
    let _ = writeln!(s, "description = {{{}}}", spec.description);
    let _ = writeln!(s, "samples = {}", spec.cols);
    let _ = writeln!(s, "lines = {}", spec.rows);
    let _ = writeln!(s, "bands = {}", spec.bands);
    s.push_str("header offset = 0\nfile type = ENVI Standard\n");
    let _ = writeln!(s, "data type = {}", spec.data_type.envi_code());
    s.push_str("interleave = bil\nbyte order = 0\n");
    if let Some(nd) = spec.no_data {
        let _ = writeln!(s, "data ignore value = {nd}");
    }
    if let Some(w) = spec.wavelengths {
        let items: Vec<String> = w.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "wavelength units = Nanometers\nwavelength = {{{}}}", items.join(", "));
    }
    if !spec.band_names.is_empty() {
        let _ = writeln!(s, "band names = {{{}}}", spec.band_names.join(", "));
    }
    if let Some(p) = prov {
        let _ = writeln!(s, "config hash = {}\nseed = {}", p.config_hash, p.seed);
    }
    s
}

/// Writes `<base>.hdr` and `<base>.img`; `samples` are in
/// `(row, col, band)` order. Returns the header path.
pub fn write_raster(base: &Path, spec: &RasterSpec, samples: &[f64], prov: Option<&Provenance>) -> Result<PathBuf> {
    let mut layout = RasterLayout::new(spec.rows, spec.cols, spec.bands, spec.data_type);
    layout.no_data = spec.no_data;
    let bytes = encode_bil(&layout, samples).map_err(AppError::from)?;
    let hdr = base.with_extension("hdr");
    let img = base.with_extension("img");
    if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(&img, bytes).at(&img)?;
    fs::write(&hdr, header_text(spec, prov)).at(&hdr)?;
    Ok(hdr)
}

/// Single-band float32 map; invalid cells are stored as the no-data value.
pub fn write_float_map(base: &Path, grid: &MaskedGrid, description: &str, prov: Option<&Provenance>) -> Result<PathBuf> {
    let samples: Vec<f64> = (0..grid.rows * grid.cols)
        .map(|i| if grid.valid[i] { grid.values[i] } else { DEFAULT_NO_DATA })
        .collect();
    let spec = RasterSpec {
        rows: grid.rows,
        cols: grid.cols,
        bands: 1,
        data_type: DataType::Float32,
        no_data: Some(DEFAULT_NO_DATA),
        wavelengths: None,
        band_names: &[],
        description,
    };
    write_raster(base, &spec, &samples, prov)
}

/// First band of any raster as a masked grid.
pub fn read_float_map(header: &Path) -> Result<MaskedGrid> {
    let reader = open_raster(header)?;
    let l = reader.layout().clone();
    let block = reader.read_block(0..l.height, 0..l.width, 0..1).at(header)?;
    let mut grid = MaskedGrid::new_invalid(l.height, l.width);
    for r in 0..l.height {
        for c in 0..l.width {
            if block.pixel_valid(r, c) {
                grid.set(r, c, block.get(r, c, 0));
            }
        }
    }
    Ok(grid)
}
