//! Zero-padded FFT peak picking per band.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::demod::remove_mean;
use crate::error::{Error, Result};
use crate::model::Band;

/// A peak counts as confident when it is at least this many times the band median.
pub const CONFIDENCE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPeak {
    pub bpm: f64,
    pub magnitude: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEstimate {
    pub respiration: BandPeak,
    pub heart: BandPeak,
}

/// Magnitude spectrum on the 1-bpm grid: the series is zero-padded to the next multiple of `60 f_s` samples.
pub fn bpm_spectrum(series: &[f64], frame_rate: f64) -> Result<Vec<f64>> {
    let per_minute = (60.0 * frame_rate).round() as usize;
    if per_minute == 0 || ((60.0 * frame_rate) - per_minute as f64).abs() > 1e-9 {
        return Err(Error::config(format!(
            "60 f_s must be a whole number of samples, got {}",
            60.0 * frame_rate
        )));
    }
    let n = series.len().div_ceil(per_minute).max(1) * per_minute;
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // bin spacing is f_s / n; keep one value per integer bpm
    let stride = n / per_minute;
    Ok((0..per_minute / 2).map(|h| buf[h * stride].norm()).collect())
}

pub fn band_peak(spectrum: &[f64], band: &Band) -> Result<BandPeak> {
    let bins: Vec<usize> = (0..spectrum.len())
        .filter(|&h| band.contains(h as f64 / 60.0))
        .collect();
    let Some(&first) = bins.first() else {
        return Err(Error::config(format!(
            "band [{:.2}, {:.2}] bpm has no spectrum bin",
            band.low_bpm(),
            band.high_bpm()
        )));
    };
    let mut best = first;
    for &h in &bins {
        if spectrum[h] > spectrum[best] {
            best = h;
        }
    }
    let mut mags: Vec<f64> = bins.iter().map(|&h| spectrum[h]).collect();
    mags.sort_by(f64::total_cmp);
    let mid = mags.len() / 2;
    let median = if mags.len().is_multiple_of(2) {
        0.5 * (mags[mid - 1] + mags[mid])
    } else {
        mags[mid]
    };
    Ok(BandPeak {
        bpm: best as f64,
        magnitude: spectrum[best],
        low_confidence: spectrum[best] < CONFIDENCE_RATIO * median,
    })
}

pub fn fft_baseline(series: &[f64], frame_rate: f64, respiration: &Band, heart: &Band) -> Result<BaselineEstimate> {
    let mut v = series.to_vec();
    remove_mean(&mut v);
    let spectrum = bpm_spectrum(&v, frame_rate)?;
    Ok(BaselineEstimate {
        respiration: band_peak(&spectrum, respiration)?,
        heart: band_peak(&spectrum, heart)?,
    })
}
