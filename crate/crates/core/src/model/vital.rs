//! Cosine dictionaries over the 1-bpm slow-time grid and the respiration
//! harmonic split of the heartbeat band.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid tolerance used when deciding whether a grid point lies in a band.
const BAND_EPS: f64 = 1e-9;

/// A closed frequency band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub const fn hz(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn from_bpm(low: f64, high: f64) -> Self {
        Self::hz(low / 60.0, high / 60.0)
    }

    /// Respiration band at rest, 0.1-0.5 Hz.
    pub const RESPIRATION: Band = Band::hz(0.1, 0.5);
    /// Heartbeat band at rest, 0.83-1.67 Hz.
    pub const HEARTBEAT: Band = Band::hz(0.83, 1.67);

    pub fn low_bpm(&self) -> f64 {
        self.low * 60.0
    }

    pub fn high_bpm(&self) -> f64 {
        self.high * 60.0
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.low - BAND_EPS && f <= self.high + BAND_EPS
    }

    pub fn overlaps(&self, other: &Band) -> bool {
        self.low <= other.high && other.low <= self.high
    }

    /// Intersection with `hull`, or `None` when empty.
    pub fn clip_to(&self, hull: &Band) -> Option<Band> {
        let low = self.low.max(hull.low);
        let high = self.high.min(hull.high);
        (low <= high).then_some(Band { low, high })
    }

    pub fn validate(&self, frame_rate: f64) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low < 0.0 || self.low > self.high {
            return Err(Error::config(format!(
                "band [{}, {}] Hz is not a valid interval",
                self.low, self.high
            )));
        }
        if self.high >= frame_rate / 2.0 {
            return Err(Error::config(format!(
                "band upper edge {} Hz must stay below f_s/2 = {} Hz",
                self.high,
                frame_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// Integer-bpm grid indices `h` with `h / 60` Hz inside `band` and below `f_s / 2`.
fn grid_indices(band: &Band, frame_rate: f64) -> Vec<usize> {
    let first = (band.low * 60.0 - BAND_EPS).ceil().max(0.0) as usize;
    let last = (band.high * 60.0 + BAND_EPS).floor();
    if last < 0.0 {
        return Vec::new();
    }
    let nyquist_bpm = 30.0 * frame_rate;
    (first..=last as usize)
        .filter(|&h| (h as f64) < nyquist_bpm - BAND_EPS)
        .collect()
}

/// The full slow-time grid `g_h = h f_s / Q`, `Q = 60 f_s`, for a fixed window length.
///
/// Dictionaries for any band can be cut from it without recomputing trig
/// functions, which matters when bands adapt at every monitoring step.
#[derive(Debug, Clone)]
pub struct VitalGrid {
    frame_rate: f64,
    len: usize,
    cos: Array2<f64>,
    sin: Array2<f64>,
}

impl VitalGrid {
    pub fn new(frame_rate: f64, len: usize) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::config(format!("frame rate must be positive, got {frame_rate}")));
        }
        if len == 0 {
            return Err(Error::config("vital dictionary length must be at least 1"));
        }
        let points = grid_indices(&Band::hz(0.0, frame_rate / 2.0), frame_rate).len();
        let cos = Array2::from_shape_fn((len, points), |(l, h)| atom_phase(h, l, frame_rate).cos());
        let sin = Array2::from_shape_fn((len, points), |(l, h)| atom_phase(h, l, frame_rate).sin());
        Ok(Self {
            frame_rate,
            len,
            cos,
            sin,
        })
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn atom_phase(h: usize, l: usize, frame_rate: f64) -> f64 {
    2.0 * PI * (h as f64 / 60.0) * (l as f64 / frame_rate)
}

/// Cosine dictionary `D(l, q) = cos(2 pi g_q l T_s)` over the grid points in a band.
///
/// The matching sine atoms are kept alongside for the quadrature projection.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalDictionary {
    band: Band,
    frame_rate: f64,
    grid_index: Vec<usize>,
    cos: Array2<f64>,
    sin: Array2<f64>,
}

impl VitalDictionary {
    pub fn new(band: Band, frame_rate: f64, len: usize) -> Result<Self> {
        Self::from_grid(&VitalGrid::new(frame_rate, len)?, band)
    }

    pub fn from_grid(grid: &VitalGrid, band: Band) -> Result<Self> {
        band.validate(grid.frame_rate)?;
        let grid_index = grid_indices(&band, grid.frame_rate);
        if grid_index.is_empty() {
            return Err(Error::config(format!(
                "band [{:.3}, {:.3}] bpm contains no 1-bpm grid point",
                band.low_bpm(),
                band.high_bpm()
            )));
        }
        let cos = grid.cos.select(ndarray::Axis(1), &grid_index);
        let sin = grid.sin.select(ndarray::Axis(1), &grid_index);
        Ok(Self {
            band,
            frame_rate: grid.frame_rate,
            grid_index,
            cos,
            sin,
        })
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// The `L x Q_band` cosine matrix.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.cos.view()
    }

    /// Sine atoms on the same grid points.
    pub fn quadrature(&self) -> ArrayView2<'_, f64> {
        self.sin.view()
    }

    pub fn len(&self) -> usize {
        self.cos.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.cos.nrows() == 0
    }

    pub fn atom_count(&self) -> usize {
        self.grid_index.len()
    }

    pub fn atom_bpm(&self, q: usize) -> f64 {
        self.grid_index[q] as f64
    }

    pub fn atoms_bpm(&self) -> Vec<f64> {
        self.grid_index.iter().map(|&h| h as f64).collect()
    }

    pub fn atom_frequencies(&self) -> Vec<f64> {
        self.grid_index.iter().map(|&h| h as f64 / 60.0).collect()
    }

    /// Grid spacing `f_s / Q`, always 1/60 Hz.
    pub fn grid_step(&self) -> f64 {
        1.0 / 60.0
    }
}

/// Partition of the heartbeat atoms into respiration-harmonic interferers and clean atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSplit {
    pub fundamental_bpm: f64,
    /// Heart-dictionary column indices flagged as harmonics.
    pub interferers: Vec<usize>,
    /// Complementary heart-dictionary column indices.
    pub clean: Vec<usize>,
    pub interferer_bpm: Vec<f64>,
    pub clean_bpm: Vec<f64>,
    /// Cosine atoms of the interferers, `L x Q_R'`.
    pub interferer_matrix: Array2<f64>,
    /// Cosine atoms of the clean set, `L x Q_H'`.
    pub clean_matrix: Array2<f64>,
}

/// Flags every heart atom that is the nearest grid point to `i * f_r` for some
/// `i >= 2` with `i * f_r` inside the heart band.
pub fn split_harmonics(fundamental_hz: f64, heart: &VitalDictionary) -> Result<HarmonicSplit> {
    if !(fundamental_hz.is_finite() && fundamental_hz > 0.0) {
        return Err(Error::data(format!(
            "respiration fundamental must be positive, got {fundamental_hz} Hz"
        )));
    }
    let band = heart.band();
    let atoms = heart.atoms_bpm();
    let fundamental_bpm = fundamental_hz * 60.0;

    let mut flagged = vec![false; atoms.len()];
    let mut i = 2usize;
    loop {
        let harmonic = i as f64 * fundamental_bpm;
        if harmonic > band.high_bpm() + BAND_EPS {
            break;
        }
        if harmonic >= band.low_bpm() - BAND_EPS {
            // ties go to the lower atom
            let mut best = 0;
            for (q, a) in atoms.iter().enumerate() {
                if (a - harmonic).abs() < (atoms[best] - harmonic).abs() {
                    best = q;
                }
            }
            flagged[best] = true;
        }
        i += 1;
    }

    let interferers: Vec<usize> = (0..atoms.len()).filter(|&q| flagged[q]).collect();
    let clean: Vec<usize> = (0..atoms.len()).filter(|&q| !flagged[q]).collect();
    if clean.is_empty() {
        return Err(Error::data(format!(
            "every heart atom is a harmonic of {fundamental_bpm:.2} bpm"
        )));
    }
    let d = heart.matrix();
    Ok(HarmonicSplit {
        fundamental_bpm,
        interferer_bpm: interferers.iter().map(|&q| atoms[q]).collect(),
        clean_bpm: clean.iter().map(|&q| atoms[q]).collect(),
        interferer_matrix: d.select(ndarray::Axis(1), &interferers),
        clean_matrix: d.select(ndarray::Axis(1), &clean),
        interferers,
        clean,
    })
}
