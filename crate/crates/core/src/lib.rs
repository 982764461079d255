//! Seasonal (leaf-on / leaf-off) clear-sky solar potential for parking lots
//! and roads, accounting for building and tree shade.
//!
//! The crate is organised as the stages of the workflow:
//!
//! * [`raster`]: georeferenced grids and pixel algebra
//! * [`lidar`]: point ingestion, DSM/DEM gridding and void filling
//! * [`solar`]: clear-sky daily irradiation with shadow casting
//! * [`classify`]: building/tree masks, Channel% and the evergreen split
//! * [`canopy`]: crown transparency from upward canopy photographs
//! * [`composite`]: leaf-on and leaf-off composites
//! * [`zonal`]: per-polygon means over parking lots and roads
//! * [`io`], [`config`], [`pipeline`]: file formats and orchestration
//! * [`synth`]: synthetic scenes for demos and tests

// `!(x > 0.0)` style checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canopy;
pub mod classify;
pub mod composite;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lidar;
pub mod pipeline;
pub mod raster;
pub mod solar;
pub mod synth;
pub mod zonal;

pub use error::{Error, Result};
