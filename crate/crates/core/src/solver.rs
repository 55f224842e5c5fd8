//! Preconditioned conjugate gradients on the stabilized normal equations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{gershgorin_bounds, NormalSystem};
use crate::error::{Error, Result};
use crate::sparse::{cholesky_upper, dot, dot_f32, solve_upper_transpose, BlockSymMatrix, LeadingBlockMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    IncompleteCholesky,
    Jacobi,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Absolute bound on the residual max-norm.
    pub abs_tol: f64,
    /// Bound on the residual max-norm relative to `‖Aᵀb‖_∞`.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-26,
            rel_tol: 1e-12,
            max_iters: 100_000,
            preconditioner: Preconditioner::IncompleteCholesky,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// `‖G α − rhs‖_∞`, recomputed from the returned `α`.
    pub final_residual_inf: f64,
    pub epsilon_used: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// Preconditioner actually applied, after any breakdown fallback.
    pub preconditioner: Preconditioner,
    /// Diagonal shift factor the incomplete factorization needed.
    pub ic_shift: f64,
    /// CG energy `½ αᵀGα − αᵀrhs`, sampled every [`ENERGY_SAMPLE_INTERVAL`]
    /// iterations.
    pub energy: Vec<f64>,
}

pub const ENERGY_SAMPLE_INTERVAL: usize = 100;
const MAX_RESTARTS: usize = 3;
const IC_FIRST_SHIFT: f64 = 1e-6;
const IC_SHIFT_RETRIES: usize = 4;

/// Block zero-fill incomplete Cholesky `G ≈ UᵀU`: the factor keeps exactly
/// the stored block pattern of `G`.
#[derive(Clone, Debug)]
pub struct IncompleteCholesky {
    bs: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Factor blocks, stored in single precision: the preconditioner only
    /// has to be a fixed SPD approximation, and applying it is bound by
    /// memory traffic.
    vals: Vec<f32>,
}

impl IncompleteCholesky {
    /// Factorization of `G + shift·diag(G)`; `None` on breakdown.
    pub fn factor(g: &BlockSymMatrix, shift: f64) -> Option<Self> {
        let u = Self::factor_f64(g, shift)?;
        let (bs, nb) = (u.block_size(), u.num_block_rows());
        let mut row_ptr = Vec::with_capacity(nb + 1);
        let mut cols = Vec::with_capacity(u.num_stored_blocks());
        let mut vals = Vec::with_capacity(u.num_stored_blocks() * bs * bs);
        row_ptr.push(0);
        for i in 0..nb {
            for s in u.row_slots(i) {
                cols.push(u.slot_col(s));
                vals.extend(u.block(s).iter().map(|&v| v as f32));
            }
            row_ptr.push(cols.len());
        }
        Some(Self {
            bs,
            row_ptr,
            cols,
            vals,
        })
    }

    fn factor_f64(g: &BlockSymMatrix, shift: f64) -> Option<BlockSymMatrix> {
        let bs = g.block_size();
        let nb = g.num_block_rows();
        let mut u = g.clone();
        if shift > 0.0 {
            let d = g.diagonal();
            for i in 0..nb {
                let s = u.row_slots(i).start;
                let blk = u.block_mut(s);
                for a in 0..bs {
                    blk[a * bs + a] += shift * d[i * bs + a];
                }
            }
        }
        let mut scratch = vec![0.0; bs];
        let mut targets: Vec<Option<usize>> = Vec::new();
        for k in 0..nb {
            let slots = u.row_slots(k);
            let diag = slots.start;
            if !cholesky_upper(u.block_mut(diag), bs) {
                return None;
            }
            // U_kj = U_kk⁻ᵀ S_kj, one column at a time.
            let ukk = u.block(diag).to_vec();
            for s in slots.start + 1..slots.end {
                let blk = u.block_mut(s);
                for b in 0..bs {
                    for a in 0..bs {
                        scratch[a] = blk[a * bs + b];
                    }
                    solve_upper_transpose(&ukk, bs, &mut scratch);
                    for a in 0..bs {
                        blk[a * bs + b] = scratch[a];
                    }
                }
            }
            // S_jl -= U_kjᵀ U_kl for stored (j, l), k < j <= l.
            let off: Vec<usize> = (slots.start + 1..slots.end).collect();
            for (x, &sj) in off.iter().enumerate() {
                let j = u.slot_col(sj);
                targets.clear();
                targets.extend(off[x..].iter().map(|&sl| u.find(j, u.slot_col(sl))));
                let ukj = u.block(sj).to_vec();
                for (y, &sl) in off[x..].iter().enumerate() {
                    let Some(t) = targets[y] else { continue };
                    let ukl = u.block(sl).to_vec();
                    let dst = u.block_mut(t);
                    for c in 0..bs {
                        let src = &ukl[c * bs..(c + 1) * bs];
                        for a in 0..bs {
                            let w = ukj[c * bs + a];
                            if w == 0.0 {
                                continue;
                            }
                            for (d, &v) in dst[a * bs..(a + 1) * bs].iter_mut().zip(src) {
                                *d -= w * v;
                            }
                        }
                    }
                }
            }
        }
        Some(u)
    }

    /// `z = (UᵀU)⁻¹ r`
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let bs = self.bs;
        let nb = self.row_ptr.len() - 1;
        let q = bs * bs;
        let block = |s: usize| &self.vals[s * q..(s + 1) * q];
        z.copy_from_slice(r);
        for k in 0..nb {
            let (s0, s1) = (self.row_ptr[k], self.row_ptr[k + 1]);
            let (head, tail) = z.split_at_mut((k + 1) * bs);
            let zk = &mut head[k * bs..];
            let d = block(s0);
            for a in 0..bs {
                let mut s = zk[a];
                for i in 0..a {
                    s -= f64::from(d[i * bs + a]) * zk[i];
                }
                zk[a] = s / f64::from(d[a * bs + a]);
            }
            for s in s0 + 1..s1 {
                let j = self.cols[s];
                let blk = block(s);
                let zj = &mut tail[(j - k - 1) * bs..(j - k) * bs];
                for a in 0..bs {
                    let w = zk[a];
                    for (d, &v) in zj.iter_mut().zip(&blk[a * bs..(a + 1) * bs]) {
                        *d -= w * f64::from(v);
                    }
                }
            }
        }
        for k in (0..nb).rev() {
            let (s0, s1) = (self.row_ptr[k], self.row_ptr[k + 1]);
            let (head, tail) = z.split_at_mut((k + 1) * bs);
            let zk = &mut head[k * bs..];
            for s in s0 + 1..s1 {
                let j = self.cols[s];
                let blk = block(s);
                let zj = &tail[(j - k - 1) * bs..(j - k) * bs];
                for a in 0..bs {
                    zk[a] -= dot_f32(&blk[a * bs..(a + 1) * bs], zj);
                }
            }
            let d = block(s0);
            for a in (0..bs).rev() {
                let mut s = zk[a];
                for b in a + 1..bs {
                    s -= f64::from(d[a * bs + b]) * zk[b];
                }
                zk[a] = s / f64::from(d[a * bs + a]);
            }
        }
    }
}

enum Precond {
    Ic(IncompleteCholesky),
    Jacobi(Vec<f64>),
    Identity,
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Ic(ic) => ic.apply(r, z),
            Precond::Jacobi(inv) => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(inv) {
                    *z = r * d;
                }
            }
            Precond::Identity => z.copy_from_slice(r),
        }
    }
}

fn build_preconditioner(g: &BlockSymMatrix, kind: Preconditioner) -> (Precond, Preconditioner, f64) {
    let jacobi = || Precond::Jacobi(g.diagonal().iter().map(|d| 1.0 / d).collect());
    match kind {
        Preconditioner::None => (Precond::Identity, kind, 0.0),
        Preconditioner::Jacobi => (jacobi(), kind, 0.0),
        Preconditioner::IncompleteCholesky => {
            if let Some(ic) = IncompleteCholesky::factor(g, 0.0) {
                return (Precond::Ic(ic), kind, 0.0);
            }
            let mut shift = IC_FIRST_SHIFT;
            for _ in 0..IC_SHIFT_RETRIES {
                log::debug!("incomplete Cholesky breakdown, retrying with shift {shift:e}");
                if let Some(ic) = IncompleteCholesky::factor(g, shift) {
                    return (Precond::Ic(ic), kind, shift);
                }
                shift *= 10.0;
            }
            log::warn!("incomplete Cholesky failed after {IC_SHIFT_RETRIES} shifts, using Jacobi");
            (jacobi(), Preconditioner::Jacobi, 0.0)
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Conjugate gradients from a zero initial guess.
///
/// Iteration stops once the updated residual satisfies
/// `‖r‖_∞ <= max(abs_tol, rel_tol·‖rhs‖_∞)`; the true residual is then
/// recomputed and the iteration restarted from the current iterate if it
/// drifted above the threshold.
pub fn solve(ns: &NormalSystem, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let start = Instant::now();
    let g = &ns.g;
    let b = &ns.rhs;
    let n = g.n();
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    if let Some(k) = g.diagonal().iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NonPositiveDiagonal(k));
    }
    let threshold = opts.abs_tol.max(opts.rel_tol * inf_norm(b));
    let (pc, used, ic_shift) = build_preconditioner(g, opts.preconditioner);
    let op = LeadingBlockMatrix::new(g);

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut energy = Vec::new();
    let mut iterations = 0;
    let mut restarts = 0;

    loop {
        let mut done = inf_norm(&r) <= threshold;
        if !done {
            pc.apply(&r, &mut z);
            p.copy_from_slice(&z);
            let mut rz = dot(&r, &z);
            while iterations < opts.max_iters {
                iterations += 1;
                op.matvec(&p, &mut gp);
                let pgp = dot(&p, &gp);
                let step = rz / pgp;
                if !step.is_finite() {
                    return Err(Error::Divergence(iterations));
                }
                for k in 0..n {
                    x[k] += step * p[k];
                    r[k] -= step * gp[k];
                }
                if iterations % ENERGY_SAMPLE_INTERVAL == 0 {
                    energy.push(-0.5 * (dot(&x, b) + dot(&x, &r)));
                }
                let rn = inf_norm(&r);
                if !rn.is_finite() {
                    return Err(Error::Divergence(iterations));
                }
                if rn <= threshold {
                    done = true;
                    break;
                }
                pc.apply(&r, &mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..n {
                    p[k] = z[k] + beta * p[k];
                }
            }
        }
        // true residual
        op.matvec(&x, &mut gp);
        for k in 0..n {
            r[k] = b[k] - gp[k];
        }
        let true_res = inf_norm(&r);
        let converged = true_res <= threshold;
        if converged || !done || restarts == MAX_RESTARTS || iterations >= opts.max_iters {
            return Ok(SolveReport {
                alpha: x,
                iterations,
                final_residual_inf: true_res,
                epsilon_used: ns.epsilon,
                wall_time: start.elapsed().as_secs_f64(),
                converged,
                preconditioner: used,
                ic_shift,
                energy,
            });
        }
        restarts += 1;
        log::debug!("residual drifted to {true_res:e} (threshold {threshold:e}), restarting");
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionEstimate {
    /// Gershgorin bracket of the shifted matrix.
    pub gershgorin_max: f64,
    pub gershgorin_min: f64,
    /// Power-iteration estimate of the largest eigenvalue.
    pub power_max: f64,
}

pub const POWER_ITERATIONS: usize = 50;

pub fn condition_estimate(ns: &NormalSystem) -> ConditionEstimate {
    let g = &ns.g;
    let (hi, lo) = gershgorin_bounds(g);
    let n = g.n();
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.25 * (k as f64).sin()).collect();
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        g.matvec(&v, &mut w);
        lambda = dot(&v, &w);
        std::mem::swap(&mut v, &mut w);
    }
    ConditionEstimate {
        gershgorin_max: hi,
        gershgorin_min: lo,
        power_max: lambda,
    }
}
