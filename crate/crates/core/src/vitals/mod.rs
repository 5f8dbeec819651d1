//! Vital Doppler extraction and continuous rate estimation per subject.

mod baseline;
mod beamform;
mod demod;
mod evsdr;
mod monitor;
mod refine;

pub use baseline::{band_peak, bpm_spectrum, fft_baseline, BandPeak, BaselineEstimate, CONFIDENCE_RATIO};
pub use beamform::{beamform_support, ComplexTrack};
pub use demod::{demodulate, unwrap_phase, VibrationTrack};
pub use evsdr::{evsdr_estimate, evsdr_trace, AtomBasis, EvsdrTrace, RateEstimate};
pub use monitor::{monitor, MonitorSettings, RateSample, RateTrack, Schedule, SubjectOutput};
pub use refine::{Rates, RefinementParams, RefinementState};
