//! Reference rates from contact-style waveforms and the accuracy metrics.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::Band;
use crate::vitals::{band_peak, bpm_spectrum, RateTrack, Schedule};

/// Timestamps closer than this are the same instant.
const TIME_EPS: f64 = 1e-9;

/// A timestamped rate series in bpm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateSeries {
    pub times: Vec<f64>,
    pub bpm: Vec<f64>,
}

impl RateSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn heart(track: &RateTrack) -> Self {
        Self {
            times: track.times(),
            bpm: track.heart(),
        }
    }

    pub fn respiration(track: &RateTrack) -> Self {
        Self {
            times: track.times(),
            bpm: track.respiration(),
        }
    }
}

/// Per-window in-band spectral peak of a reference waveform, on the estimator's window grid.
pub fn reference_rates(waveform: &[f64], sample_rate: f64, band: &Band, schedule: &Schedule) -> Result<RateSeries> {
    schedule.validate(sample_rate)?;
    let win = schedule.window_frames(sample_rate)?;
    let step = schedule.step_frames(sample_rate)?;
    if waveform.len() < win {
        return Err(Error::data(format!(
            "reference waveform has {} samples, shorter than one {} s window",
            waveform.len(),
            schedule.t_win
        )));
    }
    let count = (waveform.len() - win) / step + 1;
    let mut out = RateSeries::default();
    let mut buf = vec![0.0; win];
    for w in 0..count {
        let start = w * step;
        buf.copy_from_slice(&waveform[start..start + win]);
        let mean = buf.iter().sum::<f64>() / win as f64;
        buf.iter_mut().for_each(|x| *x -= mean);
        let peak = band_peak(&bpm_spectrum(&buf, sample_rate)?, band)?;
        out.times.push((start + win) as f64 / sample_rate);
        out.bpm.push(peak.bpm);
    }
    Ok(out)
}

fn check_aligned(est: &RateSeries, reference: &RateSeries) -> Result<()> {
    if est.is_empty() || reference.is_empty() {
        return Err(Error::data("cannot score an empty rate series"));
    }
    if est.len() != reference.len() {
        return Err(Error::data(format!(
            "estimate has {} instants but reference has {}",
            est.len(),
            reference.len()
        )));
    }
    if let Some(i) = (0..est.len()).find(|&i| (est.times[i] - reference.times[i]).abs() > TIME_EPS) {
        return Err(Error::data(format!(
            "time grids differ at instant {i}: {} s vs {} s",
            est.times[i], reference.times[i]
        )));
    }
    Ok(())
}

fn check_pairs(est: &[RateSeries], refs: &[RateSeries]) -> Result<()> {
    if est.is_empty() || est.len() != refs.len() {
        return Err(Error::data(format!(
            "{} estimate tracks but {} reference tracks",
            est.len(),
            refs.len()
        )));
    }
    est.iter().zip(refs).try_for_each(|(e, r)| check_aligned(e, r))
}

/// Mean over subjects of the share of instants with `|est - ref| <= threshold`, in percent.
pub fn aecdf(est: &[RateSeries], refs: &[RateSeries], thresholds: &[f64]) -> Result<Vec<f64>> {
    check_pairs(est, refs)?;
    Ok(thresholds
        .iter()
        .map(|&tau| {
            let total: f64 = est
                .iter()
                .zip(refs)
                .map(|(e, r)| {
                    let hits = e.bpm.iter().zip(&r.bpm).filter(|(a, b)| (*a - *b).abs() <= tau).count();
                    hits as f64 / e.len() as f64
                })
                .sum();
            100.0 * total / est.len() as f64
        })
        .collect())
}

pub fn rmse(est: &RateSeries, reference: &RateSeries) -> Result<f64> {
    check_aligned(est, reference)?;
    let sq: f64 = est.bpm.iter().zip(&reference.bpm).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sq / est.len() as f64).sqrt())
}

pub fn mean_absolute_error(est: &RateSeries, reference: &RateSeries) -> Result<f64> {
    check_aligned(est, reference)?;
    let abs: f64 = est.bpm.iter().zip(&reference.bpm).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / est.len() as f64)
}

/// 0 to 10 bpm in 0.25 bpm steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.25).collect()
}

/// Thresholds at which the success rates are read off the curve.
pub const ASR_THRESHOLDS: [f64; 3] = [2.0, 3.0, 4.0];

/// Metrics for one vital across all subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub aecdf: Vec<f64>,
    /// Success rates at 2, 3 and 4 bpm, percent.
    pub asr: [f64; 3],
    pub rmse: Vec<f64>,
    pub mae: Vec<f64>,
    pub average_rmse: f64,
    pub median_rmse: f64,
}

pub fn class_metrics(est: &[RateSeries], refs: &[RateSeries], thresholds: &[f64]) -> Result<ClassMetrics> {
    let curve = aecdf(est, refs, thresholds)?;
    let asr_values = aecdf(est, refs, &ASR_THRESHOLDS)?;
    let rmse: Vec<f64> = est.iter().zip(refs).map(|(e, r)| rmse(e, r)).collect::<Result<_>>()?;
    let mae: Vec<f64> = est
        .iter()
        .zip(refs)
        .map(|(e, r)| mean_absolute_error(e, r))
        .collect::<Result<_>>()?;
    let mut sorted = rmse.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_rmse = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    Ok(ClassMetrics {
        aecdf: curve,
        asr: [asr_values[0], asr_values[1], asr_values[2]],
        average_rmse: rmse.iter().sum::<f64>() / rmse.len() as f64,
        median_rmse,
        rmse,
        mae,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub thresholds: Vec<f64>,
    pub heart: ClassMetrics,
    pub respiration: ClassMetrics,
}

/// Scores rate tracks against per-subject heart and respiration references (same order).
pub fn rmse_report(tracks: &[RateTrack], heart_refs: &[RateSeries], respiration_refs: &[RateSeries]) -> Result<MetricReport> {
    let thresholds = default_thresholds();
    let heart: Vec<RateSeries> = tracks.iter().map(RateSeries::heart).collect();
    let resp: Vec<RateSeries> = tracks.iter().map(RateSeries::respiration).collect();
    Ok(MetricReport {
        heart: class_metrics(&heart, heart_refs, &thresholds)?,
        respiration: class_metrics(&resp, respiration_refs, &thresholds)?,
        thresholds,
    })
}

impl MetricReport {
    pub fn aecdf_csv(&self) -> String {
        let mut out = String::from("threshold,aecdf_hr,aecdf_rr\n");
        for (i, t) in self.thresholds.iter().enumerate() {
            writeln!(out, "{t},{},{}", self.heart.aecdf[i], self.respiration.aecdf[i]).unwrap();
        }
        out
    }

    pub fn rmse_csv(&self) -> String {
        let mut out = String::from("subject,rmse_hr,rmse_rr\n");
        for (z, (h, r)) in self.heart.rmse.iter().zip(&self.respiration.rmse).enumerate() {
            writeln!(out, "{z},{h},{r}").unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, m) in [("HR", &self.heart), ("RR", &self.respiration)] {
            writeln!(
                out,
                "{name}: ASR2 {:.2}% ASR3 {:.2}% ASR4 {:.2}% ARMSE {:.3} bpm median RMSE {:.3} bpm",
                m.asr[0], m.asr[1], m.asr[2], m.average_rmse, m.median_rmse
            )
            .unwrap();
        }
        out
    }

    /// Writes `aecdf.csv`, `rmse.csv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("aecdf.csv"), self.aecdf_csv().as_bytes())?;
        write_atomic(&dir.join("rmse.csv"), self.rmse_csv().as_bytes())?;
        write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())
    }
}
