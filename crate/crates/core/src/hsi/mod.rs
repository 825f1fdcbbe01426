//! Imaging-spectrometer rasters: ENVI headers, band-interleaved-by-line
//! cubes, geometric lookup tables and tile planning.

mod cube;
mod glt;
mod header;
mod tiles;

pub use cube::{encode_bil, Block, BilReader, ByteSource, HyperCube};
pub use glt::{GeoGrid, GltMap};
pub use header::{
    parse_envi_header, parse_raster_header, ByteOrder, CubeMeta, DataType, Interleave,
    RasterHeader, RasterLayout, DEFAULT_NO_DATA,
};
pub use tiles::{plan_tiles, TileRect};
pub(crate) use cube::STRIP_ROWS;
