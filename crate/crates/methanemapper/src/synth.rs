//! Seeded synthetic flightlines: two land-cover types in horizontal bands
//! with distinct mean spectra and covariances, plus one additive methane
//! plume placed inside the second type.

use methanemapper_core::hsi::{CubeMeta, DataType, GeoGrid, GltMap, HyperCube};
use methanemapper_core::matchloss::BinaryMask;
use methanemapper_core::spectra::{load_target_signature, TargetSignature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AppError, Result};

/// Synthetic CH4 absorption table shipped with the crate.
pub const SYNTHETIC_SIGNATURE: &str = include_str!("../data/ch4_synthetic.txt");

/// Visible and index bands every synthetic cube carries ahead of its SWIR
/// bands.
pub const ANCHOR_NM: [f64; 6] = [450.0, 550.0, 650.0, 660.0, 880.0, 1240.0];
pub const SWIR_SPAN_NM: (f64, f64) = (2100.0, 2450.0);
pub const MIN_BANDS: usize = ANCHOR_NM.len() + 2;

/// Number of horizontal land-cover bands, alternating vegetation and soil.
pub const COVER_BANDS: usize = 4;
const RADIANCE_SCALE: f64 = 1000.0;
const FACTORS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// Multiplier on the signature added to plume pixels.
    pub plume_amplitude: f64,
    /// Plume disk radius in pixels.
    pub plume_radius: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 160,
            bands: 16,
            plume_amplitude: 1.0,
            plume_radius: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub wavelengths: Vec<f64>,
    /// `(row, col, band)` radiance.
    pub samples: Vec<f64>,
    /// Ground-truth cover type per pixel: 0 vegetation, 1 soil.
    pub cover: Vec<u8>,
    pub plume: BinaryMask,
    pub signature: TargetSignature,
    pub glt: GltMap,
    pub geo: GeoGrid,
}

pub fn wavelengths(bands: usize) -> Vec<f64> {
    let n = bands - ANCHOR_NM.len();
    let (lo, hi) = SWIR_SPAN_NM;
    ANCHOR_NM
        .iter()
        .copied()
        .chain((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Reflectance-like mean spectrum of a cover type.
fn mean_spectrum(cover: u8, w: f64) -> f64 {
    let r = match (cover, w as u32) {
        (0, 450) => 0.04,
        (0, 550) => 0.09,
        (0, 650) | (0, 660) => 0.04,
        (0, 880) => 0.50,
        (0, 1240) => 0.36,
        (0, _) => 0.20 * (1.0 + 0.30 * (w / 60.0).sin()),
        (_, 450) => 0.16,
        (_, 550) => 0.21,
        (_, 650) | (_, 660) => 0.27,
        (_, 880) => 0.30,
        (_, 1240) => 0.33,
        (_, _) => 0.35 * (1.0 + 0.20 * (w / 45.0).cos()) - 0.15 * (-((w - 2330.0) / 40.0).powi(2)).exp(),
    };
    r * RADIANCE_SCALE
}

/// Cover type of a row: bands of `rows / COVER_BANDS`, starting with
/// vegetation.
pub fn cover_of_row(row: usize, rows: usize) -> u8 {
    let band = (row * COVER_BANDS / rows.max(1)).min(COVER_BANDS - 1);
    (band % 2) as u8
}

/// Centre of the plume: middle of the first soil band, middle column.
pub fn plume_center(rows: usize, cols: usize) -> (f64, f64) {
    let band_h = rows as f64 / COVER_BANDS as f64;
    (band_h * 1.5, cols as f64 / 2.0)
}

pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    if spec.bands < MIN_BANDS {
        return Err(AppError::user(format!("synthetic cubes need at least {MIN_BANDS} bands")));
    }
    if spec.rows < 2 * COVER_BANDS || spec.cols < 2 {
        return Err(AppError::user("synthetic cube is too small"));
    }
    let (rows, cols, bands) = (spec.rows, spec.cols, spec.bands);
    let wl = wavelengths(bands);
    let signature = load_target_signature(SYNTHETIC_SIGNATURE, &wl)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // per-type relative loadings; visible and index bands vary less so the
    // cover types stay inside their NDVI bins
    let mut loadings = [vec![0.0; bands * FACTORS], vec![0.0; bands * FACTORS]];
    let spread = [0.030, 0.045];
    for (k, l) in loadings.iter_mut().enumerate() {
        for b in 0..bands {
            let damp = if b < ANCHOR_NM.len() { 0.15 } else { 1.0 };
            for f in 0..FACTORS {
                l[b * FACTORS + f] = spread[k] * damp * normal.sample(&mut rng);
            }
        }
    }
    let means: [Vec<f64>; 2] = [0u8, 1].map(|k| wl.iter().map(|w| mean_spectrum(k, *w)).collect());

    let (pr, pc) = plume_center(rows, cols);
    let plume = BinaryMask::from_fn(rows, cols, |r, c| {
        let (dy, dx) = (r as f64 + 0.5 - pr, c as f64 + 0.5 - pc);
        dy * dy + dx * dx <= spec.plume_radius * spec.plume_radius
    });
    let mut samples = vec![0.0; rows * cols * bands];
    let mut cover = vec![0u8; rows * cols];
    let mut z = [0.0; FACTORS];
    for r in 0..rows {
        let k = cover_of_row(r, rows);
        for c in 0..cols {
            cover[r * cols + c] = k;
            z.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            let in_plume = plume.get(r, c);
            let px = &mut samples[(r * cols + c) * bands..(r * cols + c + 1) * bands];
            for b in 0..bands {
                let m = means[k as usize][b];
                let factor: f64 = (0..FACTORS).map(|f| loadings[k as usize][b * FACTORS + f] * z[f]).sum();
                let noise = 0.004 * normal.sample(&mut rng);
                px[b] = m * (1.0 + factor + noise);
                if in_plume {
                    px[b] += spec.plume_amplitude * RADIANCE_SCALE * 0.01 * signature.values[b];
                }
            }
        }
    }
    let glt = GltMap::new(
        rows,
        cols,
        (0..rows * cols).map(|i| (i / cols + 1) as u32).collect(),
        (0..rows * cols).map(|i| (i % cols + 1) as u32).collect(),
    )?;
    let geo = GeoGrid {
        rows,
        cols,
        lon: (0..rows * cols).map(|i| lon_of(i % cols)).collect(),
        lat: (0..rows * cols).map(|i| lat_of(i / cols)).collect(),
    };
    Ok(Scene {
        spec: spec.clone(),
        wavelengths: wl,
        samples,
        cover,
        plume,
        signature,
        glt,
        geo,
    })
}

/// Geographic coordinates of the synthetic grid.
pub fn lon_of(col: usize) -> f64 {
    -118.0 + col as f64 * 1e-4
}

pub fn lat_of(row: usize) -> f64 {
    35.0 - row as f64 * 1e-4
}

impl Scene {
    pub fn meta(&self) -> Result<CubeMeta> {
        Ok(CubeMeta::new(self.spec.rows, self.spec.cols, self.wavelengths.clone(), DataType::Float32)?)
    }

    /// In-memory float64 cube.
    pub fn cube(&self) -> Result<HyperCube<Vec<u8>>> {
        Ok(HyperCube::from_samples(self.meta()?, &self.samples)?)
    }

    pub fn pixel(&self, r: usize, c: usize) -> &[f64] {
        let b = self.spec.bands;
        let i = (r * self.spec.cols + c) * b;
        &self.samples[i..i + b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec {
            rows: 16,
            cols: 12,
            ..SceneSpec::default()
        };
        let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_eq!(a.samples, b.samples);
        let c = generate(&SceneSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn layout_of_cover_and_plume() {
        let s = generate(&SceneSpec::default()).unwrap();
        let (rows, cols) = (s.spec.rows, s.spec.cols);
        assert_eq!(cover_of_row(0, rows), 0);
        assert_eq!(cover_of_row(rows / 4, rows), 1);
        assert_eq!(cover_of_row(rows - 1, rows), 1);
        let n = s.plume.count();
        assert!(n > 0 && (n as f64) < 0.01 * (rows * cols) as f64);
        for (i, &p) in s.plume.data.iter().enumerate() {
            if p {
                assert_eq!(s.cover[i], 1);
            }
        }
        assert_eq!(s.wavelengths.len(), s.spec.bands);
        assert!(s.wavelengths.windows(2).all(|w| w[0] < w[1]));
        assert!(s.signature.values.iter().any(|v| *v < 0.0));
    }

    #[test]
    fn too_few_bands() {
        assert!(generate(&SceneSpec {
            bands: 7,
            ..SceneSpec::default()
        })
        .is_err());
    }
}
