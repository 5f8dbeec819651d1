//! Median start-up, moving averages and adaptive bands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Band;

/// Refinement timing in seconds (relative to monitoring start) and band half-widths in bpm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementParams {
    pub t_ref: f64,
    pub t_avg_heart: f64,
    pub t_avg_respiration: f64,
    pub eps_respiration: f64,
    pub eps_heart: f64,
    /// Overwrite the stored history with the start-up median. When off, the
    /// first windowed means still see the raw start-up estimates.
    pub rewrite_history: bool,
}

impl Default for RefinementParams {
    fn default() -> Self {
        Self {
            t_ref: 5.0,
            t_avg_heart: 3.0,
            t_avg_respiration: 5.0,
            eps_respiration: 5.0,
            eps_heart: 5.0,
            rewrite_history: true,
        }
    }
}

impl RefinementParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("t_ref", self.t_ref),
            ("t_avg_heart", self.t_avg_heart),
            ("t_avg_respiration", self.t_avg_respiration),
            ("eps_respiration", self.eps_respiration),
            ("eps_heart", self.eps_heart),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("refinement.{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub respiration: f64,
    pub heart: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    rates: Rates,
}

/// Per-subject refinement state.
#[derive(Debug, Clone)]
pub struct RefinementState {
    params: RefinementParams,
    rest_respiration: Band,
    rest_heart: Band,
    respiration_band: Band,
    heart_band: Band,
    history: Vec<Entry>,
    started: bool,
}

impl RefinementState {
    pub fn new(params: RefinementParams, respiration: Band, heart: Band) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            rest_respiration: respiration,
            rest_heart: heart,
            respiration_band: respiration,
            heart_band: heart,
            history: Vec::new(),
            started: false,
        })
    }

    pub fn params(&self) -> &RefinementParams {
        &self.params
    }

    /// Bands for the next estimate.
    pub fn bands(&self) -> (Band, Band) {
        (self.respiration_band, self.heart_band)
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Consumes the raw estimate at monitoring time `t` and returns the emitted rates.
    pub fn refine(&mut self, raw: Rates, t: f64) -> Result<Rates> {
        if let Some(last) = self.history.last() {
            if t < last.time {
                return Err(Error::data(format!(
                    "refinement time {t} s precedes the previous estimate at {} s",
                    last.time
                )));
            }
        }
        self.history.push(Entry { time: t, rates: raw });
        let p = self.params;
        let out = if t < p.t_ref {
            return Ok(raw);
        } else if !self.started {
            self.started = true;
            let median = Rates {
                respiration: median(self.history.iter().map(|e| e.rates.respiration)),
                heart: median(self.history.iter().map(|e| e.rates.heart)),
            };
            if p.rewrite_history {
                self.history.iter_mut().for_each(|e| e.rates = median);
            }
            median
        } else {
            Rates {
                respiration: self.window_mean(t, p.t_avg_respiration, |r| r.respiration),
                heart: self.window_mean(t, p.t_avg_heart, |r| r.heart),
            }
        };
        self.respiration_band = adapt(out.respiration, p.eps_respiration, &self.rest_respiration);
        self.heart_band = adapt(out.heart, p.eps_heart, &self.rest_heart);
        Ok(out)
    }

    /// Mean over `(t - span, t]`; the newest estimate is always included.
    fn window_mean(&self, t: f64, span: f64, field: impl Fn(&Rates) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, e) in self.history.iter().enumerate().rev() {
            if i + 1 != self.history.len() && e.time <= t - span {
                break;
            }
            sum += field(&e.rates);
            n += 1;
        }
        sum / n as f64
    }
}

fn adapt(center_bpm: f64, eps_bpm: f64, rest: &Band) -> Band {
    Band::from_bpm(center_bpm - eps_bpm, center_bpm + eps_bpm)
        .clip_to(rest)
        .unwrap_or(*rest)
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}
