//! Range and angle dictionaries for the bilinear model `Y = A X B`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use super::config::{RadarConfig, SPEED_OF_LIGHT};

/// Fast-time (range) dictionary: `A(n, m) = exp(j 2 pi i_m n / N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDictionary {
    matrix: Array2<Complex64>,
    bin_frequencies: Vec<f64>,
    bin_distances: Vec<f64>,
}

impl RangeDictionary {
    pub fn new(config: &RadarConfig) -> Self {
        let n_bar = config.fast_time_samples;
        let m = config.range_bins;
        let matrix = Array2::from_shape_fn((n_bar, m), |(n, i)| {
            // reduce the phase index first so large products stay exact
            let k = (n * i) % n_bar;
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n_bar as f64)
        });
        let bin_frequencies: Vec<f64> = (0..m)
            .map(|i| config.adc_rate * i as f64 / n_bar as f64)
            .collect();
        let bin_distances = bin_frequencies
            .iter()
            .map(|f| SPEED_OF_LIGHT * f / (2.0 * config.sweep_rate))
            .collect();
        Self {
            matrix,
            bin_frequencies,
            bin_distances,
        }
    }

    /// The `N x M` matrix.
    pub fn matrix(&self) -> ArrayView2<'_, Complex64> {
        self.matrix.view()
    }

    pub fn samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bins(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn bin_frequencies(&self) -> &[f64] {
        &self.bin_frequencies
    }

    pub fn bin_distances(&self) -> &[f64] {
        &self.bin_distances
    }

    /// Grid bin nearest to `distance` (clamped to the grid).
    pub fn nearest_bin(&self, distance: f64) -> usize {
        let step = self.bin_distances.get(1).copied().unwrap_or(1.0);
        let idx = (distance / step).round();
        idx.clamp(0.0, (self.bins() - 1) as f64) as usize
    }
}

/// Angle dictionary: `B(p, k) = exp(j pi k sin(theta_p))`, receivers indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDictionary {
    matrix: Array2<Complex64>,
    grid_angles: Vec<f64>,
    spacing: f64,
}

impl AngleDictionary {
    pub fn new(config: &RadarConfig) -> Self {
        let grid_angles: Vec<f64> = (0..config.angle_bins)
            .map(|i| -90.0 + i as f64 * config.angle_spacing)
            .collect();
        let matrix = Array2::from_shape_fn((config.angle_bins, config.receivers), |(p, k)| {
            steering_phase(grid_angles[p], k)
        });
        Self {
            matrix,
            grid_angles,
            spacing: config.angle_spacing,
        }
    }

    /// The `P x K` matrix, angle-major.
    pub fn matrix(&self) -> ArrayView2<'_, Complex64> {
        self.matrix.view()
    }

    /// The same matrix stored receiver-major, `K x P`.
    pub fn receiver_major(&self) -> ArrayView2<'_, Complex64> {
        self.matrix.t()
    }

    pub fn bins(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn receivers(&self) -> usize {
        self.matrix.ncols()
    }

    /// Grid angles in degrees.
    pub fn grid_angles(&self) -> &[f64] {
        &self.grid_angles
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Grid bin nearest to `angle_deg` (clamped to the grid).
    pub fn nearest_bin(&self, angle_deg: f64) -> usize {
        let idx = ((angle_deg + 90.0) / self.spacing).round();
        idx.clamp(0.0, (self.bins() - 1) as f64) as usize
    }
}

/// Receiver `k` (0-based) phasor of a half-wavelength ULA for a plane wave at `angle_deg`.
pub fn steering_phase(angle_deg: f64, k: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI * k as f64 * angle_deg.to_radians().sin())
}
