//! 8-bit PNG output and the affine scaling used to render float maps.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use methanemapper_core::annotate::RgbMask;
use methanemapper_core::landcover::ClassMap;
use methanemapper_core::MaskedGrid;

use crate::error::{AppError, Context, Result};
use crate::Provenance;

/// Colour of cells without a valid value in rendered maps. Greys never take
/// this value.
pub const NO_DATA_RGB: [u8; 3] = [255, 0, 255];

/// Gray level of unlabeled pixels in a class-map image.
pub const UNLABELED_GRAY: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Png {
    pub rows: usize,
    pub cols: usize,
    pub channels: Channels,
    pub data: Vec<u8>,
}

impl Png {
    pub fn rgb(&self, r: usize, c: usize) -> [u8; 3] {
        let i = r * self.cols + c;
        match self.channels {
            Channels::Gray => [self.data[i]; 3],
            Channels::Rgb => [self.data[i * 3], self.data[i * 3 + 1], self.data[i * 3 + 2]],
        }
    }
}

pub fn write_png(path: &Path, img: &Png, prov: Option<&Provenance>) -> Result<()> {
    if img.data.len() != img.rows * img.cols * img.channels.count() {
        return Err(AppError::internal("image buffer does not match its size"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let file = File::create(path).at(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.cols as u32, img.rows as u32);
    enc.set_color(match img.channels {
        Channels::Gray => png::ColorType::Grayscale,
        Channels::Rgb => png::ColorType::Rgb,
    });
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| AppError::internal(format!("{}: {e}", path.display()));
    if let Some(p) = prov {
        enc.add_text_chunk("config_hash".into(), p.config_hash.clone()).map_err(png_err)?;
        enc.add_text_chunk("seed".into(), p.seed.to_string()).map_err(png_err)?;
    }
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&img.data).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(())
}

/// Reads an 8-bit gray or RGB image.
pub fn read_png(path: &Path) -> Result<Png> {
    let file = File::open(path).at(path)?;
    let dec = png::Decoder::new(std::io::BufReader::new(file));
    let bad = |e: png::DecodingError| AppError::user(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| AppError::user(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(AppError::user(format!("{}: only 8-bit images are supported", path.display())));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => Channels::Gray,
        png::ColorType::Rgb => Channels::Rgb,
        other => {
            return Err(AppError::user(format!("{}: unsupported colour type {other:?}", path.display())))
        }
    };
    buf.truncate(info.buffer_size());
    Ok(Png {
        rows: info.height as usize,
        cols: info.width as usize,
        channels,
        data: buf,
    })
}

/// `byte = round(255 (v - lo) / (hi - lo))`, clamped to `[0, 255]`; a
/// constant map (`hi == lo`) renders as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineScale {
    pub lo: f64,
    pub hi: f64,
}

impl AffineScale {
    /// Spans the valid range of the grid; `None` when nothing is valid.
    pub fn fit(grid: &MaskedGrid) -> Option<Self> {
        let mut it = grid.iter_valid().map(|(_, v)| v);
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { lo, hi })
    }

    pub fn gain(&self) -> f64 {
        if self.hi > self.lo {
            255.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    pub fn offset(&self) -> f64 {
        -self.lo * self.gain()
    }

    pub fn to_byte(&self, v: f64) -> u8 {
        (v * self.gain() + self.offset()).round().clamp(0.0, 255.0) as u8
    }
}

/// Gray rendering with [`NO_DATA_RGB`] for invalid cells.
pub fn render_map(grid: &MaskedGrid, scale: &AffineScale) -> Png {
    let mut data = Vec::with_capacity(grid.rows * grid.cols * 3);
    for i in 0..grid.rows * grid.cols {
        if grid.valid[i] {
            data.extend([scale.to_byte(grid.values[i]); 3]);
        } else {
            data.extend(NO_DATA_RGB);
        }
    }
    Png {
        rows: grid.rows,
        cols: grid.cols,
        channels: Channels::Rgb,
        data,
    }
}

/// Class labels as gray levels.
pub fn render_classes(cm: &ClassMap) -> Png {
    let data = (0..cm.rows * cm.cols)
        .map(|i| match cm.label(i / cm.cols, i % cm.cols) {
            Some(k) => u8::try_from(k).unwrap_or(UNLABELED_GRAY - 1),
            None => UNLABELED_GRAY,
        })
        .collect();
    Png {
        rows: cm.rows,
        cols: cm.cols,
        channels: Channels::Gray,
        data,
    }
}

pub fn render_rgb_mask(mask: &RgbMask) -> Png {
    Png {
        rows: mask.rows,
        cols: mask.cols,
        channels: Channels::Rgb,
        data: mask.pixels.iter().flatten().copied().collect(),
    }
}

/// Binary mask as 0 / 255.
pub fn render_binary(rows: usize, cols: usize, mask: &[bool]) -> Png {
    Png {
        rows,
        cols,
        channels: Channels::Gray,
        data: mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
    }
}
