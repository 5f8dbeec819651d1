//! Per-subject slow-time extraction from the frame cube.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::localization::SupportEntry;
use crate::model::{AngleDictionary, RangeDictionary};
use crate::simulator::FrameCube;

/// Complex slow-time series of one support cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrack {
    pub samples: Vec<Complex64>,
    pub frame_rate: f64,
}

/// Matched filter of every frame onto cell `(range_bin, angle_bin)`, scaled by `1 / (N K)`.
pub fn beamform_support(
    cube: &FrameCube,
    entry: &SupportEntry,
    a: &RangeDictionary,
    b: &AngleDictionary,
) -> Result<ComplexTrack> {
    if entry.range_bin >= a.bins() || entry.angle_bin >= b.bins() {
        return Err(Error::data(format!(
            "support cell ({}, {}) is outside the {} x {} grid",
            entry.range_bin,
            entry.angle_bin,
            a.bins(),
            b.bins()
        )));
    }
    if cube.samples() != a.samples() || cube.receivers() != b.receivers() {
        return Err(Error::data(format!(
            "cube has {} samples x {} receivers but the dictionaries expect {} x {}",
            cube.samples(),
            cube.receivers(),
            a.samples(),
            b.receivers()
        )));
    }
    let range = a.matrix().column(entry.range_bin).mapv(|z| z.conj());
    let angle = b.matrix().row(entry.angle_bin).mapv(|z| z.conj());
    let scale = 1.0 / (a.samples() * b.receivers()) as f64;
    let samples = (0..cube.frames())
        .map(|l| {
            let frame = cube.frame(l);
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, row) in frame.outer_iter().enumerate() {
                let r: Complex64 = row.iter().zip(range.iter()).map(|(y, w)| y * w).sum();
                acc += r * angle[k];
            }
            acc * scale
        })
        .collect();
    Ok(ComplexTrack {
        samples,
        frame_rate: cube.frame_rate(),
    })
}
