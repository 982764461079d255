//! File formats: ESRI ASCII grids, RGB imagery with world files, GeoJSON.

pub mod geojson;
pub mod grid;
pub mod image;

pub use grid::{read_grid, write_grid};
