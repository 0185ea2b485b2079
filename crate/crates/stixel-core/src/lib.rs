//! Multimodal stixel estimation for LiDAR range images.
//!
//! A scan is a grid of polar depth measurements organized as vertical
//! columns. Each column is segmented into a small stack of *stixels*:
//! contiguous row intervals carrying a structural class (ground, object or
//! sky), a semantic label, and a distance. Segmentation is a column-wise
//! exact MAP estimate under an energy that fuses
//!
//! * geometric evidence (range residuals, vertical gradients, sensor model),
//! * LiDAR-domain semantic class scores, and
//! * camera-domain semantic class scores,
//!
//! weighted per modality, plus a model-complexity prior on the number of
//! stixels per column.
//!
//! Module map:
//!
//! * [`model`] — core data types (scans, stixels, class sets, parameters)
//! * [`projection`] — polar/Cartesian conversion and inter-row gradients
//! * [`likelihood`] — per-measurement energy terms
//! * [`prior`] — complexity prior and segmentation consistency checks
//! * [`solver`] — exact dynamic-programming column solver
//! * [`metrics`] — outlier rate, semantic IoU, compression rate
//! * [`synthetic`] — deterministic synthetic scene generator
//! * [`formats`] — versioned text formats and PPM rendering
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the default `f64` instantiation.

pub mod formats;
pub mod likelihood;
pub mod metrics;
pub mod model;
pub mod prior;
pub mod projection;
pub mod scalar;
pub mod solver;
pub mod synthetic;

pub use scalar::Scalar;

/// Default `f64` scan.
pub type Scan64 = model::Scan<f64>;
/// Default `f64` stixel world.
pub type StixelWorld64 = model::StixelWorld<f64>;
/// Default `f64` model parameters.
pub type ModelParams64 = model::ModelParams<f64>;
/// Default `f64` scene description.
pub type SceneSpec64 = synthetic::SceneSpec<f64>;
/// Default `f64` evaluation report.
pub type EvalReport64 = metrics::EvalReport<f64>;

/// Single-precision scan.
pub type Scan32 = model::Scan<f32>;
/// Single-precision stixel world.
pub type StixelWorld32 = model::StixelWorld<f32>;
/// Single-precision model parameters.
pub type ModelParams32 = model::ModelParams<f32>;
