//! Slow-time band-pass filtering of the frame cube.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::Band;
use crate::par::Execution;
use crate::simulator::FrameCube;

/// Weights over the `L` slow-time DFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWindow {
    mask: Vec<f64>,
    bands: Vec<Band>,
}

impl SpectralWindow {
    /// Binary mask passing every bin whose frequency, or its mirror, lies in one of `bands`.
    pub fn new(len: usize, frame_rate: f64, bands: &[Band]) -> Result<Self> {
        Self::tapered(len, frame_rate, bands, 0.0)
    }

    /// Like [`SpectralWindow::new`] with a raised-cosine roll-off of `taper_hz`
    /// outside each band edge.
    pub fn tapered(len: usize, frame_rate: f64, bands: &[Band], taper_hz: f64) -> Result<Self> {
        if len == 0 {
            return Err(Error::config("spectral window needs at least one bin"));
        }
        if !(taper_hz >= 0.0 && taper_hz.is_finite()) {
            return Err(Error::config(format!("taper width must be non-negative, got {taper_hz}")));
        }
        for band in bands {
            band.validate(frame_rate)?;
        }
        let mask = (0..len)
            .map(|j| {
                // the mirror bin carries the conjugate component of a real series
                let f = j.min(len - j) as f64 * frame_rate / len as f64;
                bands
                    .iter()
                    .map(|b| band_weight(f, b, taper_hz))
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Self {
            mask,
            bands: bands.to_vec(),
        })
    }

    pub fn all_pass(len: usize) -> Self {
        Self {
            mask: vec![1.0; len],
            bands: Vec::new(),
        }
    }

    /// Wraps arbitrary bin weights.
    pub fn from_mask(mask: Vec<f64>) -> Self {
        Self { mask, bands: Vec::new() }
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

fn band_weight(f: f64, band: &Band, taper: f64) -> f64 {
    let eps = 1e-9;
    if f >= band.low - eps && f <= band.high + eps {
        return 1.0;
    }
    let gap = if f < band.low { band.low - f } else { f - band.high };
    if taper > 0.0 && gap < taper {
        0.5 * (1.0 + (PI * gap / taper).cos())
    } else {
        0.0
    }
}

/// Filters every (receiver, sample) slow-time series of `cube` through `window`.
pub fn vital_band_filter(cube: &FrameCube, window: &SpectralWindow, exec: Execution) -> Result<FrameCube> {
    let (frames, receivers, samples) = cube.data().dim();
    if window.len() != frames {
        return Err(Error::data(format!(
            "spectral window has {} bins but the cube has {frames} frames",
            window.len()
        )));
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(frames);
    let inverse = planner.plan_fft_inverse(frames);
    let data = cube.data();
    let scale = 1.0 / frames as f64;

    // series-major scratch: one contiguous slow-time series per (k, n)
    let mut series = vec![Complex64::new(0.0, 0.0); frames * receivers * samples];
    exec.for_each_chunk_mut(&mut series, frames, |s, buf| {
        let (k, n) = (s / samples, s % samples);
        for (l, v) in buf.iter_mut().enumerate() {
            *v = data[[l, k, n]];
        }
        forward.process(buf);
        for (v, w) in buf.iter_mut().zip(window.mask()) {
            *v *= w * scale;
        }
        inverse.process(buf);
    });

    let out = Array3::from_shape_fn((frames, receivers, samples), |(l, k, n)| {
        series[(k * samples + n) * frames + l]
    });
    Ok(cube.with_data(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube_from_fn(frames: usize, f: impl Fn(usize, usize, usize) -> Complex64) -> FrameCube {
        FrameCube::new(Array3::from_shape_fn((frames, 2, 3), |(l, k, n)| f(l, k, n)), 20.0)
    }

    fn max_diff(a: &FrameCube, b: &FrameCube) -> f64 {
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mask_passes_band_and_mirror() {
        let w = SpectralWindow::new(200, 20.0, &[Band::RESPIRATION]).unwrap();
        // bin spacing 0.1 Hz: bins 1..=5 and their mirrors 195..=199
        let on: Vec<usize> = (0..200).filter(|&j| w.mask()[j] > 0.0).collect();
        assert_eq!(on, vec![1, 2, 3, 4, 5, 195, 196, 197, 198, 199]);
        assert_eq!(w.mask()[0], 0.0);
    }

    #[test]
    fn taper_rolls_off_outside_the_band() {
        let w = SpectralWindow::tapered(200, 20.0, &[Band::hz(1.0, 2.0)], 0.25).unwrap();
        assert_eq!(w.mask()[10], 1.0);
        assert!(w.mask()[8] > 0.0 && w.mask()[8] < 1.0);
        assert_eq!(w.mask()[5], 0.0);
    }

    #[test]
    fn all_pass_is_identity() {
        let cube = cube_from_fn(64, |l, k, n| Complex64::new((l * 7 + k) as f64 % 5.0, n as f64 - 1.5));
        let out = vital_band_filter(&cube, &SpectralWindow::all_pass(64), Execution::Sequential).unwrap();
        assert!(max_diff(&cube, &out) < 1e-10);
    }

    #[test]
    fn static_content_is_removed() {
        let cube = cube_from_fn(100, |_, k, n| Complex64::from_polar(3.0, (k + 2 * n) as f64));
        let w = SpectralWindow::new(100, 20.0, &[Band::RESPIRATION, Band::HEARTBEAT]).unwrap();
        let out = vital_band_filter(&cube, &w, Execution::Parallel).unwrap();
        let norm_in: f64 = cube.data().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let norm_out: f64 = out.data().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm_out <= 1e-9 * norm_in);
    }

    #[test]
    fn in_band_tone_survives() {
        // 0.3 Hz phase modulation on a carrier
        let len = 400;
        let cube = cube_from_fn(len, |l, _, _| {
            let t = l as f64 / 20.0;
            Complex64::from_polar(1.0, 0.5 * (2.0 * PI * 0.3 * t).cos())
        });
        let w = SpectralWindow::new(len, 20.0, &[Band::RESPIRATION]).unwrap();
        let out = vital_band_filter(&cube, &w, Execution::Sequential).unwrap();
        let tone_amp = |c: &FrameCube| {
            let series: Vec<Complex64> = (0..len).map(|l| c.data()[[l, 0, 0]]).collect();
            let mut spec = series.clone();
            FftPlanner::new().plan_fft_forward(len).process(&mut spec);
            spec[6].norm() / len as f64
        };
        let (a, b) = (tone_amp(&cube), tone_amp(&out));
        assert!(a > 0.1);
        assert!((a - b).abs() <= 0.01 * a);
    }

    #[test]
    fn filtering_is_idempotent_and_execution_independent() {
        let cube = cube_from_fn(50, |l, k, n| Complex64::new(((l * 31 + k * 7 + n) % 11) as f64, (l % 3) as f64));
        let w = SpectralWindow::new(50, 20.0, &[Band::HEARTBEAT]).unwrap();
        let once = vital_band_filter(&cube, &w, Execution::Parallel).unwrap();
        let twice = vital_band_filter(&once, &w, Execution::Parallel).unwrap();
        assert!(max_diff(&once, &twice) < 1e-10);
        let seq = vital_band_filter(&cube, &w, Execution::Sequential).unwrap();
        assert_eq!(seq, once);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let cube = cube_from_fn(10, |_, _, _| Complex64::new(1.0, 0.0));
        assert!(vital_band_filter(&cube, &SpectralWindow::all_pass(11), Execution::Sequential).is_err());
    }

    proptest! {
        #[test]
        fn binary_masks_are_symmetric(len in 2usize..300, lo in 0.05f64..3.0, width in 0.05f64..2.0) {
            let band = Band::hz(lo, (lo + width).min(9.9));
            let w = SpectralWindow::new(len, 20.0, &[band]).unwrap();
            for j in 1..len {
                prop_assert_eq!(w.mask()[j], w.mask()[len - j]);
            }
        }
    }
}
