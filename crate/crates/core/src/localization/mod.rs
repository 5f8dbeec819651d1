//! Localization: slow-time vital-band filtering, joint-sparse recovery of
//! the range-angle tensor and support detection.

pub mod detect;
pub mod filter;
pub mod map;
pub mod solver;

pub use detect::{detect_support, DetectionSettings, Roi, Support, SupportEntry};
pub use filter::{vital_band_filter, SpectralWindow};
pub use map::{angle_fft_map, range_angle_map, RangeAngleMap};
pub use solver::{
    backproject, compute_lipschitz, ralu_jsr, shrink_fiber, soft_threshold_3d, JointSparseSolution, SolverSettings,
};
