//! Versioned binary sidecars: per-class background statistics and detector
//! weights. All numbers are little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use methanemapper_core::detector::{Detector, Params};
use methanemapper_core::landcover::{ClassStat, ClassStats};
use methanemapper_core::linalg::Matrix;
use methanemapper_core::stats::Background;

use crate::error::{AppError, Context, Result};
use crate::Provenance;

pub const STATS_MAGIC: &[u8; 8] = b"MMCSTATS";
pub const STATS_VERSION: u32 = 1;
pub const WEIGHTS_MAGIC: &[u8; 8] = b"MMWEIGHT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend(x.to_le_bytes()));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| AppError::user("sidecar is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| AppError::user("sidecar length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| AppError::user("sidecar string is not UTF-8"))
    }
    fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<()> {
        if self.take(8)? != magic {
            return Err(AppError::user("not a methanemapper sidecar of the expected kind"));
        }
        let v = self.u32()?;
        if v != version {
            return Err(AppError::user(format!("sidecar version {v}, expected {version}")));
        }
        Ok(())
    }
}

/// Layout: magic, version, config hash, seed, class count, band count,
/// eps scale, then per class the pixel count, mean and covariance.
pub fn encode_class_stats(stats: &ClassStats, prov: &Provenance) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend(STATS_MAGIC);
    w.u32(STATS_VERSION);
    w.str(&prov.config_hash);
    w.u64(prov.seed);
    let dim = stats.classes.first().map_or(0, |c| c.background.dim());
    w.u32(stats.classes.len() as u32);
    w.u32(dim as u32);
    w.f64s(&[stats.eps_scale]);
    for c in &stats.classes {
        w.u64(c.count() as u64);
        w.f64s(c.mean());
        w.f64s(&c.cov().data);
    }
    w.0
}

pub fn decode_class_stats(bytes: &[u8]) -> Result<(ClassStats, Provenance)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(STATS_MAGIC, STATS_VERSION)?;
    let config_hash = r.str()?;
    let seed = r.u64()?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let eps_scale = r.f64s(1)?[0];
    let mut classes = Vec::with_capacity(k);
    for _ in 0..k {
        let count = r.u64()? as usize;
        let mean = r.f64s(dim)?;
        let cov = Matrix::from_vec(dim, dim, r.f64s(dim * dim)?);
        let background = Background::new(mean, cov, count, eps_scale)?;
        let inverse = background.regularized_inverse();
        classes.push(ClassStat { background, inverse });
    }
    if r.pos != bytes.len() {
        return Err(AppError::user("trailing bytes after class statistics"));
    }
    Ok((ClassStats { classes, eps_scale }, Provenance { config_hash, seed }))
}

pub fn write_class_stats(path: &Path, stats: &ClassStats, prov: &Provenance) -> Result<()> {
    fs::write(path, encode_class_stats(stats, prov)).at(path)
}

pub fn read_class_stats(path: &Path) -> Result<(ClassStats, Provenance)> {
    decode_class_stats(&fs::read(path).at(path)?).at(path)
}

/// Text manifest: one `name length` line per parameter buffer, in the order
/// the buffers appear in the weights file.
pub fn weights_manifest(det: &Detector, prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_hash {}\n# seed {}", prov.config_hash, prov.seed);
    for (name, n) in det.manifest() {
        let _ = writeln!(s, "{name} {n}");
    }
    s
}

pub fn encode_weights(det: &Detector) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend(WEIGHTS_MAGIC);
    w.u32(WEIGHTS_VERSION);
    w.u64(det.parameter_count() as u64);
    det.visit("", &mut |_, v| w.f64s(v));
    w.0
}

/// Overwrites every parameter of `det` from an encoded weights buffer.
pub fn decode_weights_into(det: &mut Detector, bytes: &[u8]) -> Result<()> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
    let n = r.u64()? as usize;
    if n != det.parameter_count() {
        return Err(AppError::user(format!(
            "weights hold {n} parameters, the configured detector has {}",
            det.parameter_count()
        )));
    }
    let values = r.f64s(n)?;
    let mut at = 0;
    det.visit_mut("", &mut |_, v| {
        v.copy_from_slice(&values[at..at + v.len()]);
        at += v.len();
    });
    Ok(())
}

pub fn write_weights(base: &Path, det: &Detector, prov: &Provenance) -> Result<()> {
    let bin = base.with_extension("bin");
    let man = base.with_extension("manifest");
    fs::write(&bin, encode_weights(det)).at(&bin)?;
    fs::write(&man, weights_manifest(det, prov)).at(&man)
}

/// Loads weights after checking the manifest against the detector layout.
pub fn read_weights(base: &Path, det: &mut Detector) -> Result<()> {
    let man = base.with_extension("manifest");
    let text = fs::read_to_string(&man).at(&man)?;
    let listed: Vec<(String, usize)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (name, n) = l.rsplit_once(' ').ok_or_else(|| AppError::user(format!("bad manifest line `{l}`")))?;
            let n = n.parse().map_err(|_| AppError::user(format!("bad manifest line `{l}`")))?;
            Ok((name.to_string(), n))
        })
        .collect::<Result<_>>()
        .at(&man)?;
    if listed != det.manifest() {
        return Err(AppError::user("weights manifest does not match the configured detector").at(&man));
    }
    let bin = base.with_extension("bin");
    decode_weights_into(det, &fs::read(&bin).at(&bin)?).at(&bin)
}
