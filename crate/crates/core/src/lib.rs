//! Kernel-density "hot region" maps from weighted geographic points.
//!
//! The pipeline runs from publication records to rendered maps:
//! [`ingest`] selects highly cited records, counts city occurrences and
//! resolves them to coordinates; [`density`] evaluates the kernel density on a
//! latitude/longitude [`grid`]; [`color`] maps densities onto an absolute
//! white/green/yellow/red ramp; [`export`] writes PNG, KMZ and grid CSV.

pub mod color;
pub mod density;
pub mod error;
pub mod export;
pub mod geo;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod kernel;

pub use color::{ColorRamp, Rgba};
pub use density::{density_brute_force, density_fast, WeightedPoint, DEFAULT_U_MAX};
pub use error::{Error, Result};
pub use geo::{great_circle_distance, BoundingBox, GeoPoint, EARTH_RADIUS_KM};
pub use grid::{Raster, RasterSpec};
pub use kernel::{KernelKind, KernelSpec};
