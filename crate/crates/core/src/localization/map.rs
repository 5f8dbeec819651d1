//! Range-angle power maps and their exports.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use super::solver::backproject;
use crate::error::Result;
use crate::io::write_atomic;
use crate::model::{AngleDictionary, RangeDictionary};
use crate::par::Execution;
use crate::simulator::FrameCube;

/// Nonnegative power over the `M x P` range-angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleMap {
    pub values: Array2<f64>,
    pub distances: Vec<f64>,
    pub angles: Vec<f64>,
}

impl RangeAngleMap {
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for (idx, &v) in self.values.indexed_iter() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((idx, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with the angle grid as header row and the distance grid as first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance_m");
        for a in &self.angles {
            write!(out, ",{a}").unwrap();
        }
        out.push('\n');
        for (m, row) in self.values.outer_iter().enumerate() {
            write!(out, "{}", self.distances[m]).unwrap();
            for v in row {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// 8-bit binary PGM, one pixel per cell, rows = range bins, scaled to the map max.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (rows, cols) = self.values.dim();
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        let max = self.max();
        for &v in self.values.iter() {
            let level = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }
}

/// Frame-averaged power of an `(M, P, L)` tensor.
pub fn range_angle_map(x: &Array3<Complex64>, a: &RangeDictionary, b: &AngleDictionary) -> RangeAngleMap {
    let frames = x.dim().2.max(1) as f64;
    let values = x.map_axis(Axis(2), |f| f.iter().map(|z| z.norm_sqr()).sum::<f64>() / frames);
    RangeAngleMap {
        values,
        distances: a.bin_distances().to_vec(),
        angles: b.grid_angles().to_vec(),
    }
}

/// Conventional beamformer map: frame-averaged `|A^H Y_l B^H|^2 / (N K)^2`.
///
/// The angle transform is evaluated on the same `P`-point grid as the sparse
/// solver so the two maps are directly comparable.
pub fn angle_fft_map(cube: &FrameCube, a: &RangeDictionary, b: &AngleDictionary, exec: Execution) -> Result<RangeAngleMap> {
    let c = backproject(cube, a, b, exec)?;
    let gain = (a.samples() * b.receivers()) as f64;
    let frames = c.dim().2.max(1) as f64;
    let values = c.map_axis(Axis(2), |f| f.iter().map(|z| z.norm_sqr()).sum::<f64>() / (frames * gain * gain));
    Ok(RangeAngleMap {
        values,
        distances: a.bin_distances().to_vec(),
        angles: b.grid_angles().to_vec(),
    })
}
