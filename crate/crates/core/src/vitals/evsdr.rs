//! Dictionary projection rate estimator with respiration-harmonic exclusion.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::demod::remove_mean;
use crate::error::{Error, Result};
use crate::model::{split_harmonics, VitalDictionary};

/// Which atoms represent one grid frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomBasis {
    /// Cosine atoms only; scores are `|d^T v|`.
    Cosine,
    /// Cosine and sine atoms; scores are the pair norm, so the pick does not depend on the tone's phase.
    #[default]
    Quadrature,
}

/// One E-VSDR output.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub respiration_bpm: f64,
    pub heart_bpm: f64,
    /// Heart-band atoms excluded as respiration harmonics, bpm.
    pub interferers_bpm: Vec<f64>,
    /// Set when a least-squares deflation fell back to per-atom projections.
    pub degenerate: bool,
}

/// Estimate plus the intermediate residuals.
#[derive(Debug, Clone)]
pub struct EvsdrTrace {
    pub estimate: RateEstimate,
    /// Mean-removed input.
    pub centered: Vec<f64>,
    /// Input with the selected respiration atom removed.
    pub respiration_residual: Vec<f64>,
    /// Above with the harmonic atoms removed as well.
    pub harmonic_residual: Vec<f64>,
    /// Atoms removed in the first deflation, `L x 1` or `L x 2`.
    pub respiration_atoms: Array2<f64>,
    /// Atoms removed in the second deflation.
    pub harmonic_atoms: Array2<f64>,
    pub respiration_scores: Vec<f64>,
    /// Scores over the clean heart atoms, in clean-atom order.
    pub heart_scores: Vec<f64>,
}

pub fn evsdr_estimate(
    vibration: &[f64],
    respiration: &VitalDictionary,
    heart: &VitalDictionary,
    basis: AtomBasis,
) -> Result<RateEstimate> {
    evsdr_trace(vibration, respiration, heart, basis).map(|t| t.estimate)
}

pub fn evsdr_trace(
    vibration: &[f64],
    respiration: &VitalDictionary,
    heart: &VitalDictionary,
    basis: AtomBasis,
) -> Result<EvsdrTrace> {
    let len = vibration.len();
    if respiration.len() != len || heart.len() != len {
        return Err(Error::data(format!(
            "vibration has {len} samples but dictionaries are built for {} and {}",
            respiration.len(),
            heart.len()
        )));
    }
    if vibration.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("vibration track contains non-finite samples"));
    }
    let mut centered = vibration.to_vec();
    remove_mean(&mut centered);
    let v = ArrayView1::from(&centered);

    let respiration_scores = scores(v, respiration.matrix(), respiration.quadrature(), basis);
    let r = argmax(&respiration_scores);
    let respiration_bpm = respiration.atom_bpm(r);
    let respiration_atoms = pick(respiration, &[r], basis);
    let (respiration_residual, fallback_r) = deflate(&centered, respiration_atoms.view());

    let split = split_harmonics(respiration_bpm / 60.0, heart)?;
    let harmonic_atoms = pick(heart, &split.interferers, basis);
    let (harmonic_residual, fallback_h) = deflate(&respiration_residual, harmonic_atoms.view());

    let clean_cos = heart.matrix().select(Axis(1), &split.clean);
    let clean_sin = heart.quadrature().select(Axis(1), &split.clean);
    let heart_scores = scores(
        ArrayView1::from(&harmonic_residual),
        clean_cos.view(),
        clean_sin.view(),
        basis,
    );
    let h = argmax(&heart_scores);

    Ok(EvsdrTrace {
        estimate: RateEstimate {
            respiration_bpm,
            heart_bpm: split.clean_bpm[h],
            interferers_bpm: split.interferer_bpm,
            degenerate: fallback_r || fallback_h,
        },
        centered,
        respiration_residual,
        harmonic_residual,
        respiration_atoms,
        harmonic_atoms,
        respiration_scores,
        heart_scores,
    })
}

fn scores(v: ArrayView1<f64>, cos: ArrayView2<f64>, sin: ArrayView2<f64>, basis: AtomBasis) -> Vec<f64> {
    let c = cos.t().dot(&v);
    match basis {
        AtomBasis::Cosine => c.iter().map(|x| x.abs()).collect(),
        AtomBasis::Quadrature => {
            let s = sin.t().dot(&v);
            c.iter().zip(s.iter()).map(|(a, b)| a.hypot(*b)).collect()
        }
    }
}

/// First index of the maximum, so the lowest frequency wins ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn pick(dict: &VitalDictionary, cols: &[usize], basis: AtomBasis) -> Array2<f64> {
    let cos = dict.matrix().select(Axis(1), cols);
    match basis {
        AtomBasis::Cosine => cos,
        AtomBasis::Quadrature => {
            let sin = dict.quadrature().select(Axis(1), cols);
            // a zero-frequency sine atom is identically zero
            let keep: Vec<usize> = (0..cols.len())
                .filter(|&j| sin.column(j).iter().any(|x| *x != 0.0))
                .collect();
            ndarray::concatenate![Axis(1), cos, sin.select(Axis(1), &keep)]
        }
    }
}

/// Gram matrices whose smallest Cholesky pivot falls this far below the largest are treated as singular.
const PIVOT_RATIO: f64 = 1e-12;

/// Least-squares removal of span(`atoms`) from `v`. Returns the residual and whether the fallback ran.
pub(crate) fn deflate(v: &[f64], atoms: ArrayView2<f64>) -> (Vec<f64>, bool) {
    let q = atoms.ncols();
    if q == 0 {
        return (v.to_vec(), false);
    }
    let len = v.len();
    let d = DMatrix::from_fn(len, q, |i, j| atoms[[i, j]]);
    let gram = d.transpose() * &d;
    let mut r = DVector::from_column_slice(v);
    if let Some(chol) = gram.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let lo = diag.iter().fold(f64::INFINITY, |a, b| a.min(b * b));
        let hi = diag.iter().fold(0.0f64, |a, b| a.max(b * b));
        if lo > PIVOT_RATIO * hi {
            // one refinement pass tightens orthogonality
            for _ in 0..2 {
                let coef = chol.solve(&(d.transpose() * &r));
                r -= &d * coef;
            }
            return (r.iter().copied().collect(), false);
        }
    }
    for j in 0..q {
        let col = d.column(j);
        let energy = col.dot(&col);
        if energy > 0.0 {
            let c = col.dot(&r) / energy;
            r.axpy(-c, &col, 1.0);
        }
    }
    (r.iter().copied().collect(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Band;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const FS: f64 = 20.0;

    fn dicts(len: usize) -> (VitalDictionary, VitalDictionary) {
        (
            VitalDictionary::new(Band::RESPIRATION, FS, len).unwrap(),
            VitalDictionary::new(Band::HEARTBEAT, FS, len).unwrap(),
        )
    }

    fn tones(len: usize, parts: &[(f64, f64, f64)]) -> Vec<f64> {
        (0..len)
            .map(|l| {
                let t = l as f64 / FS;
                parts.iter().map(|(a, f, ph)| a * (2.0 * PI * f * t + ph).cos()).sum()
            })
            .collect()
    }

    // projection onto a 0.01 bpm grid, independent of the dictionary code
    fn dense_peak(v: &[f64], lo: f64, hi: f64) -> f64 {
        let mut best = (lo, -1.0);
        let mut f = lo;
        while f <= hi + 1e-9 {
            let (mut c, mut s) = (0.0, 0.0);
            for (l, x) in v.iter().enumerate() {
                let ph = 2.0 * PI * f / 60.0 * l as f64 / FS;
                c += x * ph.cos();
                s += x * ph.sin();
            }
            if c.hypot(s) > best.1 {
                best = (f, c.hypot(s));
            }
            f += 0.01;
        }
        best.0
    }

    #[test]
    fn separated_tones_are_recovered() {
        let (r, h) = dicts(600);
        let v = tones(600, &[(1.0, 0.25, 0.0), (0.1, 1.2, 0.0)]);
        assert!((dense_peak(&v, 6.0, 30.0) - 15.0).abs() < 0.3);
        for basis in [AtomBasis::Cosine, AtomBasis::Quadrature] {
            let e = evsdr_estimate(&v, &r, &h, basis).unwrap();
            assert_eq!(e.respiration_bpm, 15.0);
            assert_eq!(e.heart_bpm, 72.0);
            assert!(!e.degenerate);
        }
    }

    #[test]
    fn harmonic_masking_is_avoided() {
        let (r, h) = dicts(600);
        let v = tones(600, &[(1.0, 0.3, 0.0), (0.3, 0.9, 0.0), (0.15, 7.0 / 6.0, 0.0)]);
        // the raw spectrum peaks on the harmonic
        assert!((dense_peak(&v, 50.0, 100.0) - 54.0).abs() < 0.3);
        for basis in [AtomBasis::Cosine, AtomBasis::Quadrature] {
            let e = evsdr_estimate(&v, &r, &h, basis).unwrap();
            assert_eq!(e.respiration_bpm, 18.0);
            assert_eq!(e.interferers_bpm, vec![54.0, 72.0, 90.0]);
            assert_eq!(e.heart_bpm, 70.0);
        }
    }

    #[test]
    fn respiration_only_input_does_not_fail() {
        let (r, h) = dicts(600);
        let v = tones(600, &[(1.0, 0.2, 0.4)]);
        let e = evsdr_estimate(&v, &r, &h, AtomBasis::Quadrature).unwrap();
        assert_eq!(e.respiration_bpm, 12.0);
        assert!(h.band().contains(e.heart_bpm / 60.0));
        assert!(!e.interferers_bpm.contains(&e.heart_bpm));
    }

    #[test]
    fn quadrature_is_phase_blind() {
        let (r, h) = dicts(600);
        // a cosine atom sees almost nothing of a sine at the same frequency
        let v = tones(600, &[(1.0, 0.25, -PI / 2.0), (0.2, 1.1, PI / 2.0)]);
        let e = evsdr_estimate(&v, &r, &h, AtomBasis::Quadrature).unwrap();
        assert_eq!((e.respiration_bpm, e.heart_bpm), (15.0, 66.0));
    }

    #[test]
    fn constant_input_picks_lowest_atoms() {
        let (r, h) = dicts(100);
        let e = evsdr_estimate(&[3.0; 100], &r, &h, AtomBasis::Cosine).unwrap();
        assert_eq!(e.respiration_bpm, 6.0);
        // 6 bpm flags 54, 60, ..., 96 so the first clean atom is 50
        assert_eq!(e.heart_bpm, 50.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (r, h) = dicts(100);
        assert!(evsdr_estimate(&[0.0; 99], &r, &h, AtomBasis::Cosine).is_err());
    }

    #[test]
    fn singular_atoms_use_the_fallback() {
        let col: Vec<f64> = (0..50).map(|l| (l as f64 * 0.3).cos()).collect();
        let atoms = Array2::from_shape_fn((50, 2), |(l, _)| col[l]);
        let v: Vec<f64> = (0..50).map(|l| col[l] + (l as f64 * 1.7).sin()).collect();
        let (res, fallback) = deflate(&v, atoms.view());
        assert!(fallback);
        let dot: f64 = res.iter().zip(&col).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
    }

    fn dot(a: &[f64], b: ArrayView1<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &[f64]) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn noisy(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rr = rng.random_range(8.0..28.0) / 60.0;
        let hr = rng.random_range(52.0..98.0) / 60.0;
        let n = Normal::new(0.0, 0.05).unwrap();
        let mut v = tones(
            len,
            &[
                (1.0, rr, rng.random_range(0.0..6.3)),
                (0.2, 3.0 * rr, rng.random_range(0.0..6.3)),
                (0.1, hr, rng.random_range(0.0..6.3)),
            ],
        );
        v.iter_mut().for_each(|x| *x += n.sample(&mut rng));
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn deflations_leave_orthogonal_residuals(seed in 0u64..10_000, quad in any::<bool>()) {
            let (r, h) = dicts(400);
            let basis = if quad { AtomBasis::Quadrature } else { AtomBasis::Cosine };
            let t = evsdr_trace(&noisy(seed, 400), &r, &h, basis).unwrap();
            let v1 = &t.respiration_residual;
            for d in t.respiration_atoms.columns() {
                let dn = d.dot(&d).sqrt();
                prop_assert!(dot(v1, d).abs() <= 1e-8 * norm(v1) * dn);
            }
            let v2 = &t.harmonic_residual;
            let fro = t.harmonic_atoms.iter().map(|x| x * x).sum::<f64>().sqrt();
            let proj = t.harmonic_atoms.t().dot(&ArrayView1::from(v2));
            prop_assert!(proj.dot(&proj).sqrt() <= 1e-6 * norm(v2) * fro.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn heart_pick_is_never_an_interferer(seed in 0u64..10_000) {
            let (r, h) = dicts(300);
            let e = evsdr_estimate(&noisy(seed, 300), &r, &h, AtomBasis::Quadrature).unwrap();
            prop_assert!(!e.interferers_bpm.contains(&e.heart_bpm));
            prop_assert!(h.band().contains(e.heart_bpm / 60.0));
            prop_assert!(r.band().contains(e.respiration_bpm / 60.0));
        }

        #[test]
        fn positive_scaling_keeps_the_picks(seed in 0u64..10_000, exp in -20i32..20, frac in 0.5f64..2.0) {
            let (r, h) = dicts(300);
            let v = noisy(seed, 300);
            let k = frac * 2f64.powi(exp);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let a = evsdr_estimate(&v, &r, &h, AtomBasis::Quadrature).unwrap();
            let b = evsdr_estimate(&scaled, &r, &h, AtomBasis::Quadrature).unwrap();
            prop_assert_eq!(a.respiration_bpm, b.respiration_bpm);
            prop_assert_eq!(a.heart_bpm, b.heart_bpm);
        }
    }
}
