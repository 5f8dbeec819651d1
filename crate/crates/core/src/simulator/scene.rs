//! Ground-truth scenes and the scene file format.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::vibration::{load_vibration_trace, VibrationComponent, VibrationSpec};
use crate::error::{Error, Result};
use crate::io::read_text;
use crate::model::RadarConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Human,
    StaticClutter,
    OscillatingClutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    /// Radial distance, m.
    pub distance: f64,
    /// Azimuth, degrees.
    pub angle: f64,
    /// Complex reflectivity.
    pub amplitude: Complex64,
    pub vibration: VibrationSpec,
    pub kind: TargetKind,
}

impl TargetSpec {
    pub fn human(distance: f64, angle: f64, amplitude: f64, components: Vec<VibrationComponent>) -> Self {
        Self {
            distance,
            angle,
            amplitude: Complex64::new(amplitude, 0.0),
            vibration: VibrationSpec::tonal(components),
            kind: TargetKind::Human,
        }
    }

    pub fn static_clutter(distance: f64, angle: f64, amplitude: f64) -> Self {
        Self {
            distance,
            angle,
            amplitude: Complex64::new(amplitude, 0.0),
            vibration: VibrationSpec::default(),
            kind: TargetKind::StaticClutter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub targets: Vec<TargetSpec>,
    /// Per-chirp complex noise standard deviation.
    pub noise_sigma: f64,
    /// Duration, s.
    pub duration: f64,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self, config: &RadarConfig) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::config("scene has no targets"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) || config.frames_for(self.duration) == 0 {
            return Err(Error::config(format!("scene duration must be positive, got {}", self.duration)));
        }
        let d_max = config.max_distance();
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.distance.is_finite() && (0.0..=d_max).contains(&t.distance)) {
                return Err(Error::config(format!(
                    "target {i}: distance {} m outside [0, {d_max:.3}] m",
                    t.distance
                )));
            }
            if !(t.angle.is_finite() && (-90.0..90.0).contains(&t.angle)) {
                return Err(Error::config(format!("target {i}: angle {} outside [-90, 90)", t.angle)));
            }
            if !(t.amplitude.re.is_finite() && t.amplitude.im.is_finite()) {
                return Err(Error::config(format!("target {i}: non-finite amplitude")));
            }
            if t.kind == TargetKind::StaticClutter && !t.vibration.is_static() {
                return Err(Error::config(format!("target {i}: static clutter cannot vibrate")));
            }
            t.vibration
                .validate(config.frame_rate(), self.duration)
                .map_err(|e| Error::config(format!("target {i}: {e}")))?;
        }
        let humans: Vec<&TargetSpec> = self.humans().collect();
        for (i, a) in humans.iter().enumerate() {
            for b in &humans[i + 1..] {
                if a.distance == b.distance && a.angle == b.angle {
                    return Err(Error::config(format!(
                        "two humans share position ({} m, {} deg)",
                        a.distance, a.angle
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn humans(&self) -> impl Iterator<Item = &TargetSpec> {
        self.targets.iter().filter(|t| t.kind == TargetKind::Human)
    }

    pub fn frames(&self, config: &RadarConfig) -> usize {
        config.frames_for(self.duration)
    }

    /// Reads a scene file. Trace paths are resolved relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let file: SceneFile = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e.message())))?;
        file.into_scene(path.parent().unwrap_or(Path::new(".")))
    }

    /// Serializes a scene built from tonal components only.
    pub fn to_toml(&self) -> Result<String> {
        let targets = self
            .targets
            .iter()
            .map(|t| {
                if t.vibration.trace.is_some() {
                    return Err(Error::config("trace-driven targets cannot be serialized inline"));
                }
                Ok(TargetEntry {
                    kind: t.kind,
                    distance_m: t.distance,
                    angle_deg: t.angle,
                    amplitude: [t.amplitude.re, t.amplitude.im],
                    vibration: t.vibration.components.clone(),
                    trace: None,
                    trace_peak_m: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let file = SceneFile {
            duration_s: self.duration,
            noise_sigma: self.noise_sigma,
            seed: Some(self.seed),
            targets,
        };
        toml::to_string(&file).map_err(|e| Error::config(format!("cannot serialize scene: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    duration_s: f64,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    targets: Vec<TargetEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetEntry {
    kind: TargetKind,
    distance_m: f64,
    angle_deg: f64,
    /// `[re, im]`
    amplitude: [f64; 2],
    #[serde(default)]
    vibration: Vec<VibrationComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace_peak_m: Option<f64>,
}

impl SceneFile {
    fn into_scene(self, base: &Path) -> Result<Scene> {
        let targets = self
            .targets
            .into_iter()
            .map(|t| {
                let vibration = match t.trace {
                    Some(p) => {
                        let peak = t
                            .trace_peak_m
                            .ok_or_else(|| Error::config("trace targets need trace_peak_m"))?;
                        let path = if p.is_absolute() { p } else { base.join(p) };
                        load_vibration_trace(&path, peak)?
                    }
                    None => VibrationSpec::tonal(t.vibration),
                };
                Ok(TargetSpec {
                    distance: t.distance_m,
                    angle: t.angle_deg,
                    amplitude: Complex64::new(t.amplitude[0], t.amplitude[1]),
                    vibration,
                    kind: t.kind,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            targets,
            noise_sigma: self.noise_sigma,
            duration: self.duration_s,
            seed: self.seed.unwrap_or(0),
        })
    }
}
