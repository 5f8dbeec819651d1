//! Radar constants, grids and dictionaries.

pub mod config;
pub mod dictionaries;
pub mod vital;

pub use config::{RadarConfig, RadarParams, SPEED_OF_LIGHT};
pub use dictionaries::{steering_phase, AngleDictionary, RangeDictionary};
pub use vital::{split_harmonics, Band, HarmonicSplit, VitalDictionary, VitalGrid};
