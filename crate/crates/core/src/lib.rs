//! Multi-person FMCW radar localization and vital-sign monitoring.
//!
//! The crate covers the whole chain from a simulated frame cube to
//! respiration and heart-rate tracks:
//!
//! - [`model`]: radar constants, range/angle dictionaries and the 1-bpm
//!   cosine dictionaries used for rate estimation.
//! - [`simulator`]: a software phantom rendering the bilinear beat-signal
//!   model with vibrating humans, clutter and chirp-averaged noise.
//! - [`localization`]: vital-band slow-time filtering, joint sparse recovery
//!   of the range-angle tensor by FISTA, and peak-based support detection.
//! - [`vitals`]: beamforming over the support, arctangent demodulation,
//!   harmonic-aware dictionary rate estimation and online refinement.
//! - [`evaluation`]: reference rates, AeCDF/success rates and RMSE reports.
//! - [`pipeline`]: config files and the end-to-end commands behind the CLI.

pub mod error;
pub mod evaluation;
pub mod io;
pub mod localization;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod simulator;
pub mod vitals;

pub use error::{Error, Result};
pub use par::Execution;
