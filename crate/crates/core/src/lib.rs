//! Core algorithms for methane plume detection in imaging-spectrometer
//! flightlines.
//!
//! The crate is `no_std` and only needs `alloc`. Anything that touches a
//! filesystem, an image codec or a command line lives in the companion
//! `methanemapper` crate; here a radiance cube is reached through the
//! [`hsi::ByteSource`] trait so the same code runs over a memory buffer or a
//! positioned file reader.
//!
//! Module map:
//!
//! - [`hsi`]: ENVI headers, BIL cubes, geometric lookup tables, tiling.
//! - [`spectra`]: band selection, RGB composition, NDVI/NDWI, the CH4 target.
//! - [`landcover`]: index-based classes, class merging, per-class statistics.
//! - [`slf`]: the column-window matched filter and the per-class spectral
//!   linear filter.
//! - [`detector`]: a forward-only transformer detector with seeded weights.
//! - [`matchloss`]: Hungarian matching, GIoU, set losses, mAP and mIOU.
//! - [`annotate`]: homographies, nearest-neighbour warping, mask coding.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod annotate;
pub mod detector;
mod error;
pub mod grid;
pub mod hsi;
pub mod landcover;
pub mod linalg;
pub mod matchloss;
pub(crate) mod math;
pub mod slf;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use grid::MaskedGrid;
