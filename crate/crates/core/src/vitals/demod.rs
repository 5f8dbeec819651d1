//! Arctangent demodulation of the complex slow-time track.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use super::beamform::ComplexTrack;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Unwrapped, mean-removed phase in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationTrack {
    pub samples: Vec<f64>,
    pub frame_rate: f64,
}

impl VibrationTrack {
    /// Phase converted to radial displacement in meters.
    pub fn displacement(&self, wavelength: f64) -> Vec<f64> {
        let scale = wavelength / (4.0 * PI);
        self.samples.iter().map(|v| v * scale).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,phase_rad\n");
        for (l, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{v}", l as f64 / self.frame_rate).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Removes `2 pi` jumps: each step larger than `pi` in magnitude is folded back.
pub fn unwrap_phase(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let step = a - angles[i - 1];
            if step > PI {
                offset -= 2.0 * PI * ((step + PI) / (2.0 * PI)).floor();
            } else if step < -PI {
                offset += 2.0 * PI * ((-step + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(a + offset);
    }
    out
}

pub fn demodulate(track: &ComplexTrack) -> Result<VibrationTrack> {
    if let Some(l) = track.samples.iter().position(|z| z.norm() == 0.0) {
        return Err(Error::data(format!("zero-magnitude sample at frame {l}; phase is undefined")));
    }
    let angles: Vec<f64> = track.samples.iter().map(|z| z.arg()).collect();
    let mut samples = unwrap_phase(&angles);
    remove_mean(&mut samples);
    Ok(VibrationTrack {
        samples,
        frame_rate: track.frame_rate,
    })
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}
