//! Flood-extent mapping from paired SAR backscatter scenes.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`raster`]: single-band georeferenced rasters and the FLR1 file format
//! * [`features`]: scene pairing rules and the four change-detection features
//! * [`classifier`]: rule-based reference classifier and a small convolution engine
//! * [`postproc`]: false-positive filters, exclusion mask, buffering, smoothing
//! * [`aggregate`]: detection records, multi-scene composites, coarsening, overlays
//! * [`metrics`]: validation metrics and reference-dataset overlap statistics
//! * [`trend`]: monthly series, decomposition, dummy-variable OLS, tile trends
//! * [`synth`]: deterministic synthetic scenes and decades with planted truth

pub mod aggregate;
pub mod classifier;
mod error;
pub mod features;
pub mod geo;
pub mod kv;
pub mod metrics;
pub mod postproc;
pub mod raster;
pub mod synth;
pub mod trend;

pub use error::{Error, Result};
pub use raster::{DType, GeoTransform, Raster, TileWindow};
