//! Sliding-window monitoring of every detected subject.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::baseline::fft_baseline;
use super::beamform::beamform_support;
use super::demod::{demodulate, VibrationTrack};
use super::evsdr::{evsdr_estimate, AtomBasis, RateEstimate};
use super::refine::{Rates, RefinementParams, RefinementState};
use crate::error::{Error, Result};
use crate::io::{write_atomic, CsvTable};
use crate::localization::Support;
use crate::model::{AngleDictionary, Band, RangeDictionary, VitalDictionary, VitalGrid};
use crate::par::Execution;
use crate::simulator::FrameCube;

/// Localization span, estimation window and hop, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub t_loc: f64,
    pub t_win: f64,
    pub t_int: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_loc: 5.0,
            t_win: 30.0,
            t_int: 0.05,
        }
    }
}

impl Schedule {
    pub fn validate(&self, frame_rate: f64) -> Result<()> {
        for (name, v) in [("t_loc", self.t_loc), ("t_win", self.t_win), ("t_int", self.t_int)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("schedule.{name} must be positive, got {v}")));
            }
        }
        if self.t_loc > self.t_win {
            return Err(Error::config(format!(
                "schedule.t_loc ({}) must not exceed schedule.t_win ({})",
                self.t_loc, self.t_win
            )));
        }
        whole_frames("t_win", self.t_win, frame_rate)?;
        whole_frames("t_int", self.t_int, frame_rate)?;
        whole_frames("t_loc", self.t_loc, frame_rate)?;
        Ok(())
    }

    pub fn window_frames(&self, frame_rate: f64) -> Result<usize> {
        whole_frames("t_win", self.t_win, frame_rate)
    }

    pub fn step_frames(&self, frame_rate: f64) -> Result<usize> {
        whole_frames("t_int", self.t_int, frame_rate)
    }

    pub fn localization_frames(&self, frame_rate: f64) -> Result<usize> {
        whole_frames("t_loc", self.t_loc, frame_rate)
    }

    /// Number of estimates a stream of `frames` frames yields.
    pub fn estimates(&self, frames: usize, frame_rate: f64) -> Result<usize> {
        let win = self.window_frames(frame_rate)?;
        let step = self.step_frames(frame_rate)?;
        Ok(if frames < win { 0 } else { (frames - win) / step + 1 })
    }
}

fn whole_frames(name: &str, seconds: f64, frame_rate: f64) -> Result<usize> {
    let exact = seconds * frame_rate;
    let n = exact.round();
    if n < 1.0 || (exact - n).abs() > 1e-6 {
        return Err(Error::config(format!(
            "schedule.{name} = {seconds} s is not a whole number of frames at {frame_rate} Hz"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSettings {
    pub schedule: Schedule,
    pub refinement: RefinementParams,
    pub respiration: Band,
    pub heart: Band,
    pub basis: AtomBasis,
    /// Also emit the unrefined FFT-baseline track.
    pub baseline: bool,
    pub execution: Execution,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            refinement: RefinementParams::default(),
            respiration: Band::RESPIRATION,
            heart: Band::HEARTBEAT,
            basis: AtomBasis::default(),
            baseline: false,
            execution: Execution::default(),
        }
    }
}

/// One emitted estimate. Times are the window end in stream seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub time: f64,
    pub respiration_bpm: f64,
    pub heart_bpm: f64,
    pub respiration_raw_bpm: f64,
    pub heart_raw_bpm: f64,
    pub respiration_band: Band,
    pub heart_band: Band,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTrack {
    pub subject: usize,
    pub samples: Vec<RateSample>,
}

const TRACK_HEADER: &str = "time_s,subject_id,rr_bpm,hr_bpm,rr_raw_bpm,hr_raw_bpm,rr_band_lo_bpm,rr_band_hi_bpm,hr_band_lo_bpm,hr_band_hi_bpm";

impl RateTrack {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn heart(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.heart_bpm).collect()
    }

    pub fn respiration(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.respiration_bpm).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACK_HEADER);
        out.push('\n');
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.time,
                self.subject,
                s.respiration_bpm,
                s.heart_bpm,
                s.respiration_raw_bpm,
                s.heart_raw_bpm,
                s.respiration_band.low_bpm(),
                s.respiration_band.high_bpm(),
                s.heart_band.low_bpm(),
                s.heart_band.high_bpm()
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let col = |name: &str| table.column(name);
        let idx = [
            col("time_s")?,
            col("rr_bpm")?,
            col("hr_bpm")?,
            col("rr_raw_bpm")?,
            col("hr_raw_bpm")?,
            col("rr_band_lo_bpm")?,
            col("rr_band_hi_bpm")?,
            col("hr_band_lo_bpm")?,
            col("hr_band_hi_bpm")?,
        ];
        let subject_col = col("subject_id")?;
        let mut subject = None;
        let mut samples = Vec::with_capacity(table.rows.len());
        for row in 0..table.rows.len() {
            let z = table.usize_at(row, subject_col)?;
            if *subject.get_or_insert(z) != z {
                return Err(Error::data(format!("{}: mixes subjects in one track", path.display())));
            }
            let v: Vec<f64> = idx.iter().map(|&c| table.f64_at(row, c)).collect::<Result<_>>()?;
            samples.push(RateSample {
                time: v[0],
                respiration_bpm: v[1],
                heart_bpm: v[2],
                respiration_raw_bpm: v[3],
                heart_raw_bpm: v[4],
                respiration_band: Band::from_bpm(v[5], v[6]),
                heart_band: Band::from_bpm(v[7], v[8]),
            });
        }
        Ok(Self {
            subject: subject.unwrap_or(0),
            samples,
        })
    }
}

/// Monitoring output for one subject.
#[derive(Debug, Clone)]
pub struct SubjectOutput {
    pub track: RateTrack,
    pub baseline: Option<RateTrack>,
    /// Demodulated phase over the whole stream.
    pub vibration: VibrationTrack,
    /// Windows where a least-squares deflation was rank deficient.
    pub degenerate_windows: usize,
}

/// Runs the estimator over every window of the stream for each support entry.
pub fn monitor(
    cube: &FrameCube,
    support: &Support,
    a: &RangeDictionary,
    b: &AngleDictionary,
    settings: &MonitorSettings,
) -> Result<Vec<SubjectOutput>> {
    let fs = cube.frame_rate();
    settings.schedule.validate(fs)?;
    settings.refinement.validate()?;
    settings.respiration.validate(fs)?;
    settings.heart.validate(fs)?;
    if settings.respiration.overlaps(&settings.heart) {
        return Err(Error::config("respiration and heartbeat bands must be disjoint"));
    }
    let win = settings.schedule.window_frames(fs)?;
    let step = settings.schedule.step_frames(fs)?;
    if cube.frames() < win {
        return Err(Error::data(format!(
            "stream has {} frames but a window needs {win} ({} s)",
            cube.frames(),
            settings.schedule.t_win
        )));
    }
    let grid = VitalGrid::new(fs, win)?;
    let results = settings.execution.map_range(support.entries.len(), |z| {
        let track = beamform_support(cube, &support.entries[z], a, b)?;
        let vibration = demodulate(&track)?;
        run_subject(z, &vibration, &grid, win, step, settings)
    });
    results.into_iter().collect()
}

fn run_subject(
    subject: usize,
    vibration: &VibrationTrack,
    grid: &VitalGrid,
    win: usize,
    step: usize,
    settings: &MonitorSettings,
) -> Result<SubjectOutput> {
    let fs = vibration.frame_rate;
    let rest_r = VitalDictionary::from_grid(grid, settings.respiration)?;
    let rest_h = VitalDictionary::from_grid(grid, settings.heart)?;
    let mut state = RefinementState::new(settings.refinement, settings.respiration, settings.heart)?;
    let count = (vibration.samples.len() - win) / step + 1;
    let mut samples = Vec::with_capacity(count);
    let mut base = settings.baseline.then(|| Vec::with_capacity(count));
    let mut degenerate_windows = 0;
    let mut cached: Option<(Band, Band, VitalDictionary, VitalDictionary)> = None;

    for w in 0..count {
        let start = w * step;
        let window = &vibration.samples[start..start + win];
        let time = (start + win) as f64 / fs;
        let (rb, hb) = state.bands();
        let (dr, dh) = match &cached {
            Some((r, h, dr, dh)) if *r == rb && *h == hb => (dr, dh),
            _ => {
                let dr = VitalDictionary::from_grid(grid, rb)?;
                let dh = VitalDictionary::from_grid(grid, hb)?;
                let (_, _, dr, dh) = cached.insert((rb, hb, dr, dh));
                (&*dr, &*dh)
            }
        };
        let raw = match evsdr_estimate(window, dr, dh, settings.basis) {
            Ok(e) => e,
            // a narrow adaptive heart band can be all harmonics; fall back to the rest band
            Err(Error::Data(_)) => evsdr_estimate(window, dr, &rest_h, settings.basis)?,
            Err(e) => return Err(e),
        };
        let RateEstimate {
            respiration_bpm,
            heart_bpm,
            degenerate,
            ..
        } = raw;
        degenerate_windows += degenerate as usize;
        let refined = state.refine(
            Rates {
                respiration: respiration_bpm,
                heart: heart_bpm,
            },
            start as f64 / fs,
        )?;
        samples.push(RateSample {
            time,
            respiration_bpm: refined.respiration,
            heart_bpm: refined.heart,
            respiration_raw_bpm: respiration_bpm,
            heart_raw_bpm: heart_bpm,
            respiration_band: rb,
            heart_band: hb,
        });
        if let Some(base) = base.as_mut() {
            let e = fft_baseline(window, fs, &rest_r.band(), &rest_h.band())?;
            base.push(RateSample {
                time,
                respiration_bpm: e.respiration.bpm,
                heart_bpm: e.heart.bpm,
                respiration_raw_bpm: e.respiration.bpm,
                heart_raw_bpm: e.heart.bpm,
                respiration_band: rest_r.band(),
                heart_band: rest_h.band(),
            });
        }
    }
    Ok(SubjectOutput {
        track: RateTrack { subject, samples },
        baseline: base.map(|samples| RateTrack { subject, samples }),
        vibration: vibration.clone(),
        degenerate_windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::SupportEntry;
    use crate::model::{RadarConfig, RadarParams};
    use crate::simulator::{render_cube, Scene, TargetSpec, VibrationComponent, VibrationRole};

    fn small_radar() -> RadarConfig {
        let mut raw = RadarParams::iwr1443(4);
        raw.n_bar = 32;
        RadarConfig::new(&raw).unwrap()
    }

    fn subject_scene(cfg: &RadarConfig, duration: f64, hr_drift: f64) -> (Scene, Support) {
        let a = RangeDictionary::new(cfg);
        let b = AngleDictionary::new(cfg);
        let m = 5;
        let d = a.bin_distances()[m];
        let vib = vec![
            VibrationComponent::tone(2e-3, 0.25, VibrationRole::Respiration),
            VibrationComponent::tone(2e-4, 1.2, VibrationRole::Heartbeat).with_drift(hr_drift),
        ];
        let scene = Scene {
            targets: vec![TargetSpec::human(d, 0.0, 1.0, vib)],
            noise_sigma: 0.0,
            duration,
            seed: 3,
        };
        let support = Support {
            entries: vec![SupportEntry {
                range_bin: m,
                angle_bin: b.nearest_bin(0.0),
                distance: d,
                angle: 0.0,
                power: 1.0,
            }],
        };
        (scene, support)
    }

    #[test]
    fn schedule_counts() {
        let s = Schedule::default();
        assert_eq!(s.estimates(2400, 20.0).unwrap(), 1801);
        assert_eq!(s.estimates(599, 20.0).unwrap(), 0);
        assert_eq!(s.window_frames(20.0).unwrap(), 600);
        assert!(Schedule { t_int: 0.07, ..s }.validate(20.0).is_err());
        assert!(Schedule { t_loc: 40.0, ..s }.validate(20.0).is_err());
    }

    #[test]
    fn stationary_subject_gives_constant_track() {
        let cfg = small_radar();
        let (scene, support) = subject_scene(&cfg, 40.0, 0.0);
        let cube = render_cube(&scene, &cfg).unwrap();
        let settings = MonitorSettings {
            schedule: Schedule {
                t_int: 0.5,
                ..Schedule::default()
            },
            baseline: true,
            ..MonitorSettings::default()
        };
        let out = monitor(&cube, &support, &RangeDictionary::new(&cfg), &AngleDictionary::new(&cfg), &settings).unwrap();
        assert_eq!(out.len(), 1);
        let track = &out[0].track;
        assert_eq!(track.samples.len(), 21);
        assert_eq!(track.samples[0].time, 30.0);
        assert_eq!(track.samples[20].time, 40.0);
        for s in &track.samples {
            assert!((s.respiration_bpm - 15.0).abs() <= 1.0 && (s.heart_bpm - 72.0).abs() <= 1.0);
        }
        let base = out[0].baseline.as_ref().unwrap();
        assert_eq!(base.samples.len(), 21);
        assert_eq!(base.samples[0].heart_bpm, 72.0);
    }

    #[test]
    fn drift_is_followed() {
        let cfg = small_radar();
        // 72 -> 77 bpm over 120 s
        let (scene, support) = subject_scene(&cfg, 120.0, 5.0 / 60.0 / 120.0);
        let cube = render_cube(&scene, &cfg).unwrap();
        let settings = MonitorSettings {
            schedule: Schedule {
                t_int: 1.0,
                ..Schedule::default()
            },
            ..MonitorSettings::default()
        };
        let comp = &scene.targets[0].vibration.components[1];
        let out = monitor(&cube, &support, &RangeDictionary::new(&cfg), &AngleDictionary::new(&cfg), &settings).unwrap();
        for s in &out[0].track.samples {
            // the window's centre frequency
            let truth = comp.frequency_at(s.time - 15.0) * 60.0;
            assert!((s.heart_bpm - truth).abs() <= 2.0, "t={} est={} truth={truth}", s.time, s.heart_bpm);
        }
    }

    #[test]
    fn short_stream_and_bad_support_fail() {
        let cfg = small_radar();
        let (mut scene, support) = subject_scene(&cfg, 10.0, 0.0);
        let cube = render_cube(&scene, &cfg).unwrap();
        let a = RangeDictionary::new(&cfg);
        let b = AngleDictionary::new(&cfg);
        let err = monitor(&cube, &support, &a, &b, &MonitorSettings::default()).unwrap_err();
        assert_eq!(err.kind(), "data");
        scene.duration = 31.0;
        let cube = render_cube(&scene, &cfg).unwrap();
        let mut bad = support.clone();
        bad.entries[0].range_bin = 10_000;
        assert!(monitor(&cube, &bad, &a, &b, &MonitorSettings::default()).is_err());
        let none = monitor(&cube, &Support::default(), &a, &b, &MonitorSettings::default()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let track = RateTrack {
            subject: 2,
            samples: vec![RateSample {
                time: 30.05,
                respiration_bpm: 15.5,
                heart_bpm: 71.0,
                respiration_raw_bpm: 15.0,
                heart_raw_bpm: 70.0,
                respiration_band: Band::from_bpm(10.5, 20.5),
                heart_band: Band::from_bpm(66.0, 76.0),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        track.write(&path).unwrap();
        let back = RateTrack::read(&path).unwrap();
        assert_eq!(back.subject, 2);
        assert_eq!(back.samples[0].time, 30.05);
        assert!((back.samples[0].heart_band.high_bpm() - 76.0).abs() < 1e-9);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("time_s,subject_id,rr_bpm,hr_bpm"));
    }
}
