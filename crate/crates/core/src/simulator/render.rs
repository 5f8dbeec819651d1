//! Renders the beat-signal cube of a scene.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cube::FrameCube;
use super::scene::Scene;
use super::vibration::synthesize_vibration;
use crate::error::{Error, Result};
use crate::model::{steering_phase, RadarConfig};
use crate::par::Execution;

/// How chirp averaging is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// One draw per sample with variance `sigma^2 / G`.
    #[default]
    Averaged,
    /// `G` per-chirp draws with variance `sigma^2`, averaged.
    Materialized,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions {
    pub noise: NoiseMode,
    pub execution: Execution,
}

/// Noise generator for frame `l`, receiver `k`.
///
/// Streams are keyed by `l * K + k` on a ChaCha8 generator seeded with the
/// scene seed, so the cube does not depend on how frames are scheduled.
pub fn noise_stream(seed: u64, frame: usize, receiver: usize, receivers: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((frame * receivers + receiver) as u64);
    rng
}

struct RenderedTarget {
    fast_time: Vec<Complex64>,
    steering: Vec<Complex64>,
    slow_time: Vec<Complex64>,
}

pub fn render_cube(scene: &Scene, config: &RadarConfig) -> Result<FrameCube> {
    render_cube_with(scene, config, RenderOptions::default())
}

pub fn render_cube_with(scene: &Scene, config: &RadarConfig, options: RenderOptions) -> Result<FrameCube> {
    scene.validate(config)?;
    let frames = scene.frames(config);
    let receivers = config.receivers;
    let samples = config.fast_time_samples;
    let wavenumber = 4.0 * PI / config.lambda_max;

    let targets: Vec<RenderedTarget> = scene
        .targets
        .iter()
        .map(|t| {
            let f_beat = config.beat_frequency(t.distance);
            let fast_time = (0..samples)
                .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f_beat * n as f64 / config.adc_rate))
                .collect();
            let steering = (0..receivers).map(|k| steering_phase(t.angle, k)).collect();
            let displacement = synthesize_vibration(&t.vibration, frames, config.frame_period)?;
            let slow_time = displacement
                .iter()
                .map(|v| t.amplitude * Complex64::from_polar(1.0, wavenumber * (t.distance + v)))
                .collect();
            Ok(RenderedTarget {
                fast_time,
                steering,
                slow_time,
            })
        })
        .collect::<Result<_>>()?;

    let sigma = scene.noise_sigma;
    let chirps = config.chirps_per_frame;
    let mut data = Array3::<Complex64>::zeros((frames, receivers, samples));
    let buffer = data.as_slice_mut().expect("fresh array is contiguous");
    options
        .execution
        .for_each_chunk_mut(buffer, receivers * samples, |l, frame| {
            for (k, row) in frame.chunks_mut(samples).enumerate() {
                for t in &targets {
                    let w = t.slow_time[l] * t.steering[k];
                    for (y, a) in row.iter_mut().zip(&t.fast_time) {
                        *y += w * a;
                    }
                }
                if sigma > 0.0 {
                    let mut rng = noise_stream(scene.seed, l, k, receivers);
                    add_noise(row, &mut rng, sigma, chirps, options.noise);
                }
            }
        });

    let cube = FrameCube::new(data, config.frame_rate()).with_seed(scene.seed);
    if !cube.is_finite() {
        return Err(Error::numerical("rendered cube has non-finite samples"));
    }
    Ok(cube)
}

fn add_noise(row: &mut [Complex64], rng: &mut ChaCha8Rng, sigma: f64, chirps: usize, mode: NoiseMode) {
    let component = sigma / 2f64.sqrt();
    match mode {
        NoiseMode::Averaged => {
            let std = component / (chirps as f64).sqrt();
            for y in row.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *y += Complex64::new(re, im) * std;
            }
        }
        NoiseMode::Materialized => {
            let mut acc = vec![Complex64::new(0.0, 0.0); row.len()];
            for _ in 0..chirps {
                for a in acc.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *a += Complex64::new(re, im) * component;
                }
            }
            for (y, a) in row.iter_mut().zip(acc) {
                *y += a / chirps as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AngleDictionary, RangeDictionary};
    use crate::simulator::scene::TargetSpec;
    use crate::simulator::vibration::{VibrationComponent, VibrationRole};
    use rustfft::FftPlanner;

    fn small_config() -> RadarConfig {
        let mut raw = crate::model::RadarParams::iwr1443(4);
        raw.n_bar = 64;
        RadarConfig::new(&raw).unwrap()
    }

    fn on_grid_distance(cfg: &RadarConfig, bin: usize) -> f64 {
        cfg.range_bin_spacing() * bin as f64
    }

    #[test]
    fn noiseless_static_target_peaks_at_its_bin() {
        let cfg = small_config();
        let d = on_grid_distance(&cfg, 11);
        let scene = Scene {
            targets: vec![TargetSpec::static_clutter(d, 0.0, 1.0)],
            noise_sigma: 0.0,
            duration: 0.5,
            seed: 0,
        };
        let cube = render_cube(&scene, &cfg).unwrap();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fast_time_samples);
        for l in 0..cube.frames() {
            let mut col = cube.frame(l).row(2).to_vec();
            fft.process(&mut col);
            let peak = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
            assert_eq!(peak, 11);
        }
    }

    #[test]
    fn on_grid_target_matches_bilinear_model() {
        let cfg = small_config();
        let a = RangeDictionary::new(&cfg);
        let b = AngleDictionary::new(&cfg);
        let (m0, p0) = (7, b.nearest_bin(20.0));
        let d = a.bin_distances()[m0];
        let amp = Complex64::new(0.3, -0.2);
        let mut target = TargetSpec::static_clutter(d, b.grid_angles()[p0], 1.0);
        target.amplitude = amp;
        let scene = Scene {
            targets: vec![target],
            noise_sigma: 0.0,
            duration: 0.2,
            seed: 0,
        };
        let cube = render_cube(&scene, &cfg).unwrap();
        let x = amp * Complex64::from_polar(1.0, 4.0 * PI * d / cfg.lambda_max);
        for l in 0..cube.frames() {
            for k in 0..cfg.receivers {
                for n in 0..cfg.fast_time_samples {
                    let expect = a.matrix()[[n, m0]] * x * b.matrix()[[p0, k]];
                    assert!((cube.frame(l)[[k, n]] - expect).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn superposition_holds_without_noise() {
        let cfg = small_config();
        let human = TargetSpec::human(
            0.51,
            -12.5,
            0.2,
            vec![VibrationComponent::tone(2e-3, 0.3, VibrationRole::Respiration)],
        );
        let clutter = TargetSpec::static_clutter(1.17, 33.0, 2.0);
        let mk = |targets| Scene {
            targets,
            noise_sigma: 0.0,
            duration: 1.0,
            seed: 1,
        };
        let both = render_cube(&mk(vec![human.clone(), clutter.clone()]), &cfg).unwrap();
        let a = render_cube(&mk(vec![human]), &cfg).unwrap();
        let b = render_cube(&mk(vec![clutter]), &cfg).unwrap();
        for ((x, y), z) in both.data().iter().zip(a.data().iter()).zip(b.data().iter()) {
            assert!((x - y - z).norm() < 1e-10);
        }
    }

    #[test]
    fn vibration_amplitude_does_not_move_range_peak() {
        let cfg = small_config();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fast_time_samples);
        for amp in [0.0, 1e-3, 5e-3] {
            let scene = Scene {
                targets: vec![TargetSpec::human(
                    on_grid_distance(&cfg, 9) + 0.004,
                    0.0,
                    1.0,
                    vec![VibrationComponent::tone(amp, 0.4, VibrationRole::Respiration)],
                )],
                noise_sigma: 0.0,
                duration: 0.5,
                seed: 0,
            };
            let cube = render_cube(&scene, &cfg).unwrap();
            for l in 0..cube.frames() {
                let mut col = cube.frame(l).row(0).to_vec();
                fft.process(&mut col);
                let peak = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
                assert_eq!(peak, 9);
            }
        }
    }

    #[test]
    fn noise_variance_is_reduced_by_chirp_count() {
        let cfg = small_config();
        let sigma = 2.0;
        for mode in [NoiseMode::Averaged, NoiseMode::Materialized] {
            let scene = Scene {
                targets: vec![TargetSpec::static_clutter(1.0, 0.0, 0.0)],
                noise_sigma: sigma,
                duration: 25.0,
                seed: 42,
            };
            let cube = render_cube_with(
                &scene,
                &cfg,
                RenderOptions {
                    noise: mode,
                    execution: Execution::default(),
                },
            )
            .unwrap();
            assert!(cube.data().len() >= 100_000);
            let power = cube.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / cube.data().len() as f64;
            let expect = sigma * sigma / cfg.chirps_per_frame as f64;
            assert!((power / expect - 1.0).abs() < 0.05, "{mode:?}: {power} vs {expect}");
        }
    }

    #[test]
    fn same_seed_same_cube_any_execution() {
        let cfg = small_config();
        let scene = Scene {
            targets: vec![TargetSpec::static_clutter(1.0, 5.0, 1.0)],
            noise_sigma: 1.0,
            duration: 2.0,
            seed: 5,
        };
        let seq = render_cube_with(
            &scene,
            &cfg,
            RenderOptions {
                execution: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        let par = render_cube_with(
            &scene,
            &cfg,
            RenderOptions {
                execution: Execution::Parallel,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
        let mut other = scene.clone();
        other.seed = 6;
        assert_ne!(render_cube(&other, &cfg).unwrap(), seq);
    }

    #[test]
    fn empty_scene_is_rejected() {
        let scene = Scene {
            targets: vec![],
            noise_sigma: 0.0,
            duration: 1.0,
            seed: 0,
        };
        assert!(matches!(render_cube(&scene, &small_config()), Err(Error::Config(_))));
    }
}
