//! Thoracic and clutter vibration models.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_text;

/// What a tonal component represents, used to derive ground-truth references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VibrationRole {
    Respiration,
    Heartbeat,
    #[default]
    Other,
}

/// One tonal term `a cos(2 pi (g t + drift t^2 / 2) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationComponent {
    /// Displacement amplitude, m.
    pub amplitude_m: f64,
    /// Frequency at t = 0, Hz.
    pub frequency_hz: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub phase_rad: f64,
    /// Linear frequency drift, Hz/s.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub drift_hz_per_s: f64,
    #[serde(default)]
    pub role: VibrationRole,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl VibrationComponent {
    pub fn tone(amplitude_m: f64, frequency_hz: f64, role: VibrationRole) -> Self {
        Self {
            amplitude_m,
            frequency_hz,
            phase_rad: 0.0,
            drift_hz_per_s: 0.0,
            role,
        }
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }

    pub fn with_drift(mut self, drift_hz_per_s: f64) -> Self {
        self.drift_hz_per_s = drift_hz_per_s;
        self
    }

    /// Instantaneous frequency at time `t`, Hz.
    pub fn frequency_at(&self, t: f64) -> f64 {
        self.frequency_hz + self.drift_hz_per_s * t
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let phase = 2.0 * PI * (self.frequency_hz * t + 0.5 * self.drift_hz_per_s * t * t);
        self.amplitude_m * (phase + self.phase_rad).cos()
    }
}

/// A uniformly sampled displacement waveform, m.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationTrace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl VibrationTrace {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Linear interpolation at time `t` (clamped to the last sample).
    fn value_at(&self, t: f64) -> f64 {
        let x = t * self.sample_rate;
        let i = x.floor() as usize;
        if i + 1 >= self.samples.len() {
            return *self.samples.last().unwrap_or(&0.0);
        }
        let frac = x - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// Resamples the whole trace to `rate`, keeping its duration.
    pub fn resampled(&self, rate: f64) -> VibrationTrace {
        let count = (self.duration() * rate + 1e-9).floor() as usize;
        let samples = (0..count).map(|i| self.value_at(i as f64 / rate)).collect();
        VibrationTrace {
            samples,
            sample_rate: rate,
        }
    }

    /// Reads a trace file.
    ///
    /// Two layouts are accepted: two columns `time_s, displacement_m`
    /// (uniformly spaced), or a single column preceded by a
    /// `sample_rate=<Hz>` line. `#` starts a comment.
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::data(format!("{}: {msg}", origin.display()));
        let mut sample_rate = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() == "sample_rate" {
                    let rate: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad sample_rate", lineno + 1)))?;
                    sample_rate = Some(rate);
                    continue;
                }
                return Err(bad(format!("line {}: unknown key '{}'", lineno + 1, key.trim())));
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: '{s}' is not a number", lineno + 1)))
            };
            match fields.as_slice() {
                [v] => values.push(parse(v)?),
                [t, v] => {
                    // a non-numeric two-column line is a header
                    match (t.parse::<f64>(), v.parse::<f64>()) {
                        (Ok(t), Ok(v)) => {
                            times.push(t);
                            values.push(v);
                        }
                        _ if values.is_empty() => continue,
                        _ => return Err(bad(format!("line {}: malformed row", lineno + 1))),
                    }
                }
                _ => return Err(bad(format!("line {}: expected 1 or 2 columns", lineno + 1))),
            }
        }
        if values.is_empty() {
            return Err(bad("trace has no samples".into()));
        }
        if !times.is_empty() && times.len() != values.len() {
            return Err(bad("mixed one- and two-column rows".into()));
        }
        let rate = match (sample_rate, times.len()) {
            (Some(r), _) => r,
            (None, n) if n >= 2 => {
                let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
                let uniform = times
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs().max(1e-12));
                if !(dt > 0.0) || !uniform {
                    return Err(bad("time column is not uniformly increasing".into()));
                }
                1.0 / dt
            }
            _ => return Err(bad("missing sample_rate metadata".into())),
        };
        if !(rate.is_finite() && rate > 0.0) {
            return Err(bad(format!("sample rate must be positive, got {rate}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("trace contains non-finite samples".into()));
        }
        Ok(Self {
            samples: values,
            sample_rate: rate,
        })
    }

    /// Writes the single-column layout with a sample-rate header.
    pub fn to_text(&self) -> String {
        let mut out = format!("sample_rate={}\n", self.sample_rate);
        for v in &self.samples {
            out.push_str(&format!("{v:.9e}\n"));
        }
        out
    }
}

/// Vibration of one reflector: tonal components, optionally overridden by a trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VibrationSpec {
    pub components: Vec<VibrationComponent>,
    pub trace: Option<VibrationTrace>,
}

impl VibrationSpec {
    pub fn tonal(components: Vec<VibrationComponent>) -> Self {
        Self {
            components,
            trace: None,
        }
    }

    pub fn is_static(&self) -> bool {
        self.trace.is_none() && self.components.iter().all(|c| c.amplitude_m == 0.0)
    }

    /// Checks amplitudes and that every instantaneous frequency stays in `[0, f_s/2)`
    /// over `duration` seconds.
    pub fn validate(&self, frame_rate: f64, duration: f64) -> Result<()> {
        for c in &self.components {
            if !c.amplitude_m.is_finite() || !c.phase_rad.is_finite() {
                return Err(Error::config("vibration amplitude and phase must be finite"));
            }
            for f in [c.frequency_at(0.0), c.frequency_at(duration)] {
                if !(f.is_finite() && f >= 0.0 && f < frame_rate / 2.0) {
                    return Err(Error::config(format!(
                        "vibration frequency {f} Hz outside [0, {}) Hz",
                        frame_rate / 2.0
                    )));
                }
            }
        }
        if let Some(trace) = &self.trace {
            if trace.samples.is_empty() {
                return Err(Error::config("empty vibration trace"));
            }
        }
        Ok(())
    }

    /// Sum of the components with `role` sampled at `len` frames (traces ignored).
    pub fn role_waveform(&self, role: VibrationRole, len: usize, frame_period: f64) -> Vec<f64> {
        (0..len)
            .map(|l| {
                let t = l as f64 * frame_period;
                self.components
                    .iter()
                    .filter(|c| c.role == role)
                    .map(|c| c.value_at(t))
                    .sum()
            })
            .collect()
    }

    /// Instantaneous rate (bpm) of the strongest component with `role`, if any.
    pub fn planted_rate_bpm(&self, role: VibrationRole, t: f64) -> Option<f64> {
        self.components
            .iter()
            .filter(|c| c.role == role)
            .max_by(|a, b| a.amplitude_m.abs().total_cmp(&b.amplitude_m.abs()))
            .map(|c| c.frequency_at(t) * 60.0)
    }
}

/// Samples a vibration at `len` frames spaced `frame_period` apart, m.
pub fn synthesize_vibration(spec: &VibrationSpec, len: usize, frame_period: f64) -> Result<Vec<f64>> {
    if let Some(trace) = &spec.trace {
        let needed = (len.saturating_sub(1)) as f64 * frame_period;
        let available = (trace.samples.len().saturating_sub(1)) as f64 / trace.sample_rate;
        if needed > available + 1e-9 {
            return Err(Error::data(format!(
                "vibration trace covers {available:.3} s, {needed:.3} s required"
            )));
        }
        return Ok((0..len)
            .map(|l| trace.value_at(l as f64 * frame_period))
            .collect());
    }
    Ok((0..len)
        .map(|l| {
            let t = l as f64 * frame_period;
            spec.components.iter().map(|c| c.value_at(t)).sum()
        })
        .collect())
}

/// Loads a trace, removes its mean and rescales it to `peak_m` peak displacement.
pub fn load_vibration_trace(path: &Path, peak_m: f64) -> Result<VibrationSpec> {
    let mut trace = VibrationTrace::read(path)?;
    normalize_trace(&mut trace, peak_m);
    Ok(VibrationSpec {
        components: Vec::new(),
        trace: Some(trace),
    })
}

fn normalize_trace(trace: &mut VibrationTrace, peak_m: f64) {
    let mean = trace.samples.iter().sum::<f64>() / trace.samples.len() as f64;
    trace.samples.iter_mut().for_each(|v| *v -= mean);
    let peak = trace.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = peak_m / peak;
        trace.samples.iter_mut().for_each(|v| *v *= scale);
    } else {
        trace.samples.iter_mut().for_each(|v| *v = 0.0);
    }
}
