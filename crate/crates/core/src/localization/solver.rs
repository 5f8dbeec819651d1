//! Joint-sparse recovery of the range-angle tensor by FISTA.
//!
//! Solves
//!
//! ```text
//! min_X  1/2 sum_l ||Y_l - A X_l B||_F^2 + gamma sum_{m,p} ||X[m, p, :]||_2
//! ```
//!
//! where every `(m, p)` fiber across frames is one group of the l2,1 penalty.
//! The columns of `A` are distinct DFT columns, so `A^H A = N I` and the
//! gradient never touches the fast-time axis: after forming `C = A^H Y B^H`
//! once, each step costs two small products with `B` per nonzero range row.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AngleDictionary, RangeDictionary};
use crate::par::Execution;
use crate::simulator::FrameCube;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Weight of the l2,1 penalty.
    pub gamma: f64,
    pub max_iters: usize,
    /// Step bound; computed from the dictionaries when `None`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Relative iterate change below which iterations stop.
    pub stop_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            max_iters: 1000,
            lipschitz: None,
            stop_tol: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return Err(Error::config(format!("stop_tol must be non-negative, got {}", self.stop_tol)));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config(format!("lipschitz bound must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// Solver output. `x` is laid out `(M, P, L)` so each fiber is contiguous.
#[derive(Debug, Clone)]
pub struct JointSparseSolution {
    pub x: Array3<Complex64>,
    /// Objective after each iteration.
    pub objective: Vec<f64>,
    /// Objective at the all-zero starting point.
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lipschitz: f64,
}

impl JointSparseSolution {
    /// Number of nonzero `(m, p)` fibers.
    pub fn support_size(&self) -> usize {
        let (m, p, _) = self.x.dim();
        let mut count = 0;
        for i in 0..m {
            for j in 0..p {
                if self.x.slice(ndarray::s![i, j, ..]).iter().any(|z| z.norm_sqr() > 0.0) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Largest eigenvalue of `A^H A` times that of `B^H B`.
pub fn compute_lipschitz(a: &RangeDictionary, b: &AngleDictionary) -> f64 {
    largest_eigenvalue(&gram(a.matrix())) * largest_eigenvalue(&gram(b.matrix()))
}

fn gram(m: ndarray::ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    let h = m.t().mapv(|z| z.conj());
    h.dot(&m)
}

/// Power iteration on a Hermitian positive semidefinite matrix.
fn largest_eigenvalue(g: &Array2<Complex64>) -> f64 {
    let n = g.nrows();
    // a fixed, generic start vector keeps the result deterministic
    let mut v = ndarray::Array1::from_shape_fn(n, |i| Complex64::new(1.0 + 0.01 * i as f64, 0.003 * i as f64));
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = g.dot(&v);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v = w / Complex64::new(norm, 0.0);
        if (next - lambda).abs() <= 1e-13 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Shrinks one fiber in place by `max(0, 1 - alpha / ||fiber||)`; returns whether it survived.
pub fn shrink_fiber(fiber: &mut [Complex64], alpha: f64) -> bool {
    let norm = fiber.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm <= alpha || norm == 0.0 {
        fiber.fill(Complex64::new(0.0, 0.0));
        return false;
    }
    let scale = 1.0 - alpha / norm;
    fiber.iter_mut().for_each(|z| *z *= scale);
    true
}

/// Group soft-threshold of an `(M, P, L)` tensor along its last axis.
pub fn soft_threshold_3d(g: &Array3<Complex64>, alpha: f64) -> Array3<Complex64> {
    let mut out = g.as_standard_layout().into_owned();
    let len = out.dim().2.max(1);
    if let Some(buf) = out.as_slice_mut() {
        for fiber in buf.chunks_mut(len) {
            shrink_fiber(fiber, alpha);
        }
    }
    out
}

/// `C[m, p, l] = (A^H Y_l B^H)[m, p]` in `(M, P, L)` layout.
pub fn backproject(cube: &FrameCube, a: &RangeDictionary, b: &AngleDictionary, exec: Execution) -> Result<Array3<Complex64>> {
    check_dims(cube, a, b)?;
    let (frames, receivers, samples) = cube.data().dim();
    let (bins, angles) = (a.bins(), b.bins());

    // range step: forward DFT of each fast-time row equals A^H y
    let fft = FftPlanner::new().plan_fft_forward(samples);
    let data = cube.data();
    let mut range = vec![Complex64::new(0.0, 0.0); frames * receivers * samples];
    exec.for_each_chunk_mut(&mut range, samples, |r, buf| {
        let (l, k) = (r / receivers, r % receivers);
        for (n, v) in buf.iter_mut().enumerate() {
            *v = data[[l, k, n]];
        }
        fft.process(buf);
    });

    let b_conj: Vec<Complex64> = b.matrix().iter().map(|z| z.conj()).collect();
    let mut c = vec![Complex64::new(0.0, 0.0); bins * angles * frames];
    exec.for_each_chunk_mut(&mut c, angles * frames, |m, row| {
        for l in 0..frames {
            for p in 0..angles {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..receivers {
                    acc += range[(l * receivers + k) * samples + m] * b_conj[p * receivers + k];
                }
                row[p * frames + l] = acc;
            }
        }
    });
    Ok(Array3::from_shape_vec((bins, angles, frames), c).expect("shape matches buffer"))
}

fn check_dims(cube: &FrameCube, a: &RangeDictionary, b: &AngleDictionary) -> Result<()> {
    if cube.samples() != a.samples() || cube.receivers() != b.receivers() {
        return Err(Error::data(format!(
            "cube has {} samples x {} receivers but the dictionaries expect {} x {}",
            cube.samples(),
            cube.receivers(),
            a.samples(),
            b.receivers()
        )));
    }
    if cube.frames() == 0 {
        return Err(Error::data("cube has no frames"));
    }
    Ok(())
}

struct RowStats {
    diff2: f64,
    prev2: f64,
    cross: f64,
    fit: f64,
    l21: f64,
    cells: Vec<bool>,
}

/// Read-only view of one range row of a buffer and its nonzero-fiber flags.
struct Row<'a> {
    data: &'a [Complex64],
    cells: &'a [bool],
}

struct Problem<'a> {
    c: &'a [Complex64],
    c_norm: &'a [f64],
    b: &'a [Complex64],
    /// `B B^H`, `P x P`.
    b_gram: &'a [Complex64],
    angles: usize,
    receivers: usize,
    frames: usize,
    samples: f64,
    lipschitz: f64,
    gamma: f64,
}

impl Problem<'_> {
    fn row_len(&self) -> usize {
        self.angles * self.frames
    }

    /// `||X_m B||_F^2` over the flagged fibers of one row.
    fn fit(&self, row: &Row<'_>) -> f64 {
        let (k_n, l_n) = (self.receivers, self.frames);
        let mut w = vec![Complex64::new(0.0, 0.0); k_n * l_n];
        for p in (0..self.angles).filter(|&p| row.cells[p]) {
            let fiber = &row.data[p * l_n..(p + 1) * l_n];
            for k in 0..k_n {
                let bk = self.b[p * k_n + k];
                for (acc, z) in w[k * l_n..(k + 1) * l_n].iter_mut().zip(fiber) {
                    *acc += z * bk;
                }
            }
        }
        w.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Gradient step and prox for range row `m`, written into `out`.
    ///
    /// `stale` flags the fibers of `out` that still hold nonzero data from an
    /// earlier iterate; everything else in `out` is already zero.
    fn step_row(&self, m: usize, z: Row<'_>, prev: Row<'_>, stale: &[bool], out: &mut [Complex64]) -> RowStats {
        let (p_n, l_n) = (self.angles, self.frames);
        let zero = Complex64::new(0.0, 0.0);
        let c = &self.c[m * self.row_len()..(m + 1) * self.row_len()];
        let alpha = self.gamma / self.lipschitz;
        let mut cells = vec![false; p_n];
        let active: Vec<usize> = (0..p_n).filter(|&p| z.cells[p]).collect();

        if !active.is_empty() {
            // Z_m B B^H accumulated from the nonzero fibers only
            let mut h = vec![zero; self.row_len()];
            for &q in &active {
                let zq = &z.data[q * l_n..(q + 1) * l_n];
                let gram = &self.b_gram[q * p_n..(q + 1) * p_n];
                for (p, g) in gram.iter().enumerate() {
                    for (acc, v) in h[p * l_n..(p + 1) * l_n].iter_mut().zip(zq) {
                        *acc += v * g;
                    }
                }
            }
            for p in 0..p_n {
                let fiber = &mut out[p * l_n..(p + 1) * l_n];
                let hp = &h[p * l_n..(p + 1) * l_n];
                let cp = &c[p * l_n..(p + 1) * l_n];
                let zp = &z.data[p * l_n..(p + 1) * l_n];
                for (((o, hv), cv), zv) in fiber.iter_mut().zip(hp).zip(cp).zip(zp) {
                    *o = zv - (hv * self.samples - cv) / self.lipschitz;
                }
                cells[p] = shrink_fiber(fiber, alpha);
            }
        } else {
            // zero row: the gradient step lands on C / L_f
            for p in 0..p_n {
                let fiber = &mut out[p * l_n..(p + 1) * l_n];
                let norm = self.c_norm[m * p_n + p];
                if norm > self.gamma {
                    let scale = (1.0 - self.gamma / norm) / self.lipschitz;
                    for (o, cv) in fiber.iter_mut().zip(&c[p * l_n..(p + 1) * l_n]) {
                        *o = cv * scale;
                    }
                    cells[p] = true;
                } else if stale[p] {
                    fiber.fill(zero);
                }
            }
        }

        let mut stats = RowStats {
            diff2: 0.0,
            prev2: 0.0,
            cross: 0.0,
            fit: 0.0,
            l21: 0.0,
            cells,
        };
        for p in 0..p_n {
            let span = p * l_n..(p + 1) * l_n;
            if stats.cells[p] {
                let mut norm2 = 0.0;
                for ((o, pv), cv) in out[span.clone()].iter().zip(&prev.data[span.clone()]).zip(&c[span]) {
                    stats.diff2 += (o - pv).norm_sqr();
                    stats.prev2 += pv.norm_sqr();
                    stats.cross += (cv.conj() * o).re;
                    norm2 += o.norm_sqr();
                }
                stats.l21 += norm2.sqrt();
            } else if prev.cells[p] {
                let p2: f64 = prev.data[span].iter().map(|v| v.norm_sqr()).sum();
                stats.diff2 += p2;
                stats.prev2 += p2;
            }
        }
        if stats.cells.iter().any(|&f| f) {
            stats.fit = self.fit(&Row {
                data: out,
                cells: &stats.cells,
            });
        }
        stats
    }
}

/// Runs FISTA on the (already filtered) cube.
pub fn ralu_jsr(
    cube: &FrameCube,
    a: &RangeDictionary,
    b: &AngleDictionary,
    settings: &SolverSettings,
    exec: Execution,
) -> Result<JointSparseSolution> {
    settings.validate()?;
    let bound = compute_lipschitz(a, b);
    let lipschitz = match settings.lipschitz {
        Some(l) if l < bound * (1.0 - 1e-9) => {
            return Err(Error::config(format!(
                "lipschitz bound {l} is below the dictionaries' bound {bound}"
            )))
        }
        Some(l) => l,
        None => bound,
    };

    let c = backproject(cube, a, b, exec)?;
    let (bins, angles, frames) = c.dim();
    let c = c.into_raw_vec_and_offset().0;
    let c_norm: Vec<f64> = c
        .chunks(frames)
        .map(|f| f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let y2: f64 = cube.data().iter().map(|z| z.norm_sqr()).sum();
    let b_mat: Vec<Complex64> = b.matrix().iter().copied().collect();
    let bh = b.matrix().t().mapv(|z| z.conj());
    let b_gram: Vec<Complex64> = b.matrix().dot(&bh).iter().copied().collect();
    let problem = Problem {
        c: &c,
        c_norm: &c_norm,
        b: &b_mat,
        b_gram: &b_gram,
        angles,
        receivers: b.receivers(),
        frames,
        samples: a.samples() as f64,
        lipschitz,
        gamma: settings.gamma,
    };
    let row_len = problem.row_len();

    let zero = Complex64::new(0.0, 0.0);
    let cells_len = bins * angles;
    let mut x = vec![zero; c.len()];
    let mut x_cells = vec![false; cells_len];
    // `next` holds the iterate before `x`
    let mut next = vec![zero; c.len()];
    let mut next_cells = vec![false; cells_len];
    let mut z = vec![zero; c.len()];
    let mut z_cells = vec![false; cells_len];
    let mut t = 1.0f64;
    let mut objective = Vec::new();
    let mut converged = false;

    for _ in 0..settings.max_iters {
        let stats = exec.map_chunks_mut(&mut next, row_len, |m, out| {
            let span = m * row_len..(m + 1) * row_len;
            let cs = m * angles..(m + 1) * angles;
            problem.step_row(
                m,
                Row {
                    data: &z[span.clone()],
                    cells: &z_cells[cs.clone()],
                },
                Row {
                    data: &x[span],
                    cells: &x_cells[cs.clone()],
                },
                &next_cells[cs],
                out,
            )
        });

        let (mut diff2, mut prev2, mut cross, mut fit, mut l21) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut new_cells = Vec::with_capacity(cells_len);
        for s in stats {
            diff2 += s.diff2;
            prev2 += s.prev2;
            cross += s.cross;
            fit += s.fit;
            l21 += s.l21;
            new_cells.extend(s.cells);
        }
        let value = 0.5 * (y2 - 2.0 * cross + problem.samples * fit) + settings.gamma * l21;
        if !value.is_finite() || !diff2.is_finite() {
            return Err(Error::numerical(format!(
                "solver diverged at iteration {} (objective {value})",
                objective.len() + 1
            )));
        }
        objective.push(value);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        t = t_next;
        let z_new = exec.map_chunks_mut(&mut z, row_len, |m, zr| {
            let span = m * row_len..(m + 1) * row_len;
            let (xn, xc) = (&next[span.clone()], &x[span]);
            let cs = m * angles..(m + 1) * angles;
            let mut flags = vec![false; angles];
            for p in 0..angles {
                let (fresh, old) = (new_cells[cs.start + p], x_cells[cs.start + p]);
                let f = p * frames..(p + 1) * frames;
                if fresh || old {
                    for ((zv, a), b) in zr[f.clone()].iter_mut().zip(&xn[f.clone()]).zip(&xc[f]) {
                        *zv = a + (a - b) * beta;
                    }
                    flags[p] = true;
                } else if z_cells[cs.start + p] {
                    zr[f].fill(zero);
                }
            }
            flags
        });
        z_cells = z_new.concat();
        std::mem::swap(&mut x, &mut next);
        next_cells = std::mem::replace(&mut x_cells, new_cells);

        let done = if prev2 == 0.0 {
            diff2 == 0.0
        } else {
            (diff2 / prev2).sqrt() < settings.stop_tol
        };
        if done {
            converged = true;
            break;
        }
    }

    Ok(JointSparseSolution {
        x: Array3::from_shape_vec((bins, angles, frames), x).expect("shape matches buffer"),
        iterations: objective.len(),
        objective,
        initial_objective: 0.5 * y2,
        converged,
        lipschitz,
    })
}
