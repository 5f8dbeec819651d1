//! Radar waveform and array constants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Raw radar parameters as written in a config file.
///
/// Keys follow the usual FMCW symbols; all quantities are SI (m, s, Hz, Hz/s)
/// except `delta_theta`, which is in degrees. `M` defaults to `N_bar / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarParams {
    pub lambda_max: f64,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    #[serde(rename = "f_ADC")]
    pub f_adc: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T_s")]
    pub t_s: f64,
    #[serde(rename = "N_bar")]
    pub n_bar: usize,
    #[serde(rename = "G")]
    pub g: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta_theta: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl RadarParams {
    /// The IWR1443 operating point with `receivers` (virtual) channels.
    pub fn iwr1443(receivers: usize) -> Self {
        Self {
            lambda_max: 3.9e-3,
            t_c: 57e-6,
            f_adc: 4e6,
            s: 70e12,
            t_s: 50e-3,
            n_bar: 200,
            g: 40,
            k: receivers,
            delta_theta: 1.0,
            m: None,
        }
    }
}

impl Default for RadarParams {
    fn default() -> Self {
        Self::iwr1443(8)
    }
}

/// Validated radar configuration with derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    /// Maximal chirp wavelength, m.
    pub lambda_max: f64,
    /// Chirp duration, s.
    pub chirp_duration: f64,
    /// ADC sampling rate, Hz.
    pub adc_rate: f64,
    /// Frequency sweep rate, Hz/s.
    pub sweep_rate: f64,
    /// Frame period, s.
    pub frame_period: f64,
    pub fast_time_samples: usize,
    pub chirps_per_frame: usize,
    pub receivers: usize,
    pub range_bins: usize,
    /// Angle grid spacing, degrees.
    pub angle_spacing: f64,
    pub angle_bins: usize,
}

impl RadarConfig {
    pub fn new(raw: &RadarParams) -> Result<Self> {
        let positive = [
            ("lambda_max", raw.lambda_max),
            ("T_c", raw.t_c),
            ("f_ADC", raw.f_adc),
            ("S", raw.s),
            ("T_s", raw.t_s),
            ("delta_theta", raw.delta_theta),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [("N_bar", raw.n_bar), ("G", raw.g), ("K", raw.k)] {
            if value == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        let ratio = 180.0 / raw.delta_theta;
        let angle_bins = ratio.round();
        if (ratio - angle_bins).abs() > 1e-9 || angle_bins < 1.0 {
            return Err(Error::config(format!(
                "delta_theta = {} does not divide 180",
                raw.delta_theta
            )));
        }
        let range_bins = raw.m.unwrap_or(raw.n_bar / 2);
        if range_bins == 0 || range_bins > raw.n_bar {
            return Err(Error::config(format!(
                "M = {range_bins} must lie in 1..=N_bar ({})",
                raw.n_bar
            )));
        }
        Ok(Self {
            lambda_max: raw.lambda_max,
            chirp_duration: raw.t_c,
            adc_rate: raw.f_adc,
            sweep_rate: raw.s,
            frame_period: raw.t_s,
            fast_time_samples: raw.n_bar,
            chirps_per_frame: raw.g,
            receivers: raw.k,
            range_bins,
            angle_spacing: raw.delta_theta,
            angle_bins: angle_bins as usize,
        })
    }

    pub fn params(&self) -> RadarParams {
        RadarParams {
            lambda_max: self.lambda_max,
            t_c: self.chirp_duration,
            f_adc: self.adc_rate,
            s: self.sweep_rate,
            t_s: self.frame_period,
            n_bar: self.fast_time_samples,
            g: self.chirps_per_frame,
            k: self.receivers,
            delta_theta: self.angle_spacing,
            m: Some(self.range_bins),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let raw: RadarParams = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e.message())))?;
        Self::new(&raw)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.params())
            .map_err(|e| Error::config(format!("cannot serialize radar config: {e}")))?;
        write_atomic(path, text.as_bytes())
    }

    /// Sweep bandwidth `B = S * T_c`, Hz.
    pub fn bandwidth(&self) -> f64 {
        self.sweep_rate * self.chirp_duration
    }

    /// Frame rate `f_s = 1 / T_s`, Hz.
    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_period
    }

    /// Nominal range resolution `c / 2B`, m.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// Distance between adjacent range-grid bins, m.
    pub fn range_bin_spacing(&self) -> f64 {
        SPEED_OF_LIGHT * self.adc_rate / (2.0 * self.sweep_rate * self.fast_time_samples as f64)
    }

    /// Beat frequency for a target at `distance` metres.
    pub fn beat_frequency(&self, distance: f64) -> f64 {
        2.0 * self.sweep_rate * distance / SPEED_OF_LIGHT
    }

    pub fn min_distance(&self) -> f64 {
        self.range_bin_spacing()
    }

    pub fn max_distance(&self) -> f64 {
        self.range_bin_spacing() * (self.range_bins - 1) as f64
    }

    /// Number of frames spanning `duration` seconds.
    pub fn frames_for(&self, duration: f64) -> usize {
        (duration * self.frame_rate()).round().max(0.0) as usize
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::new(&RadarParams::default()).expect("default radar parameters are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operating_point_grids() {
        let cfg = RadarConfig::default();
        assert!((cfg.bandwidth() - 3.99e9).abs() < 1e6);
        assert!((cfg.range_resolution() * 100.0 - 3.75).abs() < 0.01);
        assert!((cfg.min_distance() * 100.0 - 4.29).abs() < 0.01);
        assert!((cfg.max_distance() - 4.24).abs() < 0.01);
        assert_eq!(cfg.angle_bins, 180);
        assert_eq!(cfg.range_bins, 100);
        assert_eq!(cfg.frame_rate(), 20.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut raw = RadarParams::default();
        raw.t_c = 0.0;
        assert!(matches!(RadarConfig::new(&raw), Err(Error::Config(_))));

        let mut raw = RadarParams::default();
        raw.delta_theta = 7.0;
        assert!(matches!(RadarConfig::new(&raw), Err(Error::Config(_))));

        let mut raw = RadarParams::default();
        raw.m = Some(201);
        assert!(matches!(RadarConfig::new(&raw), Err(Error::Config(_))));

        let mut raw = RadarParams::default();
        raw.k = 0;
        assert!(RadarConfig::new(&raw).is_err());
    }

    #[test]
    fn angle_bins_follow_spacing() {
        let mut raw = RadarParams::default();
        raw.delta_theta = 0.5;
        assert_eq!(RadarConfig::new(&raw).unwrap().angle_bins, 360);
        raw.delta_theta = 1.0;
        assert_eq!(RadarConfig::new(&raw).unwrap().angle_bins, 180);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("radar.toml");
        let cfg = RadarConfig::new(&RadarParams::iwr1443(4)).unwrap();
        cfg.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["lambda_max", "T_c", "f_ADC", "S", "T_s", "N_bar", "G", "K", "delta_theta", "M"] {
            assert!(text.contains(&format!("{key} =")), "missing key {key}");
        }
        assert_eq!(RadarConfig::load(&path).unwrap(), cfg);
    }
}
