//! Dense reference solvers and best-approximation diagnostics.
//!
//! Everything here works on explicit n×n arrays and exists to verify the
//! factored solvers and to measure true errors (`err-W`) in tests and runs at
//! moderate size. The Lyapunov equation is solved exactly in the analytic
//! sine eigenbasis of the 1D stencil; the cubic problem by damped Newton with
//! a preconditioned conjugate-gradient inner solve. The oracle is capped at
//! level 9 (n = 511): past that, reference solutions are out of scope and
//! the diagnostics that need them are reported as unavailable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::problems::apply_neg_laplacian;
use crate::transfer::GridLevel;

/// Largest level the dense oracle accepts (n = 511).
pub const ORACLE_MAX_LEVEL: u32 = 9;

/// A dense reference solution together with its achieved residual.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    /// The reference minimizer, densely.
    pub w_star: DMatrix<f64>,
    /// Residual of the optimality system at `w_star` (Frobenius norm).
    pub residual: f64,
    /// How the solution was computed.
    pub method: &'static str,
}

/// The analytic eigenbasis of the 1D stencil: `Q[i, j] = √(2h)·
/// sin((i+1)(j+1)πh)` (orthonormal) and eigenvalues
/// `λ_j = (2 − 2cos((j+1)πh))/h²`.
pub fn sine_eigenbasis(grid: GridLevel) -> (DMatrix<f64>, DVector<f64>) {
    let n = grid.n();
    let h = grid.h();
    let scale = (2.0 * h).sqrt();
    let q = DMatrix::from_fn(n, n, |i, j| {
        (((i + 1) * (j + 1)) as f64 * std::f64::consts::PI * h).sin() * scale
    });
    let lambda = DVector::from_fn(n, |j, _| {
        (2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI * h).cos()) / (h * h)
    });
    (q, lambda)
}

/// Solves the Lyapunov equation `AW + WA = Γ` exactly in the sine eigenbasis:
/// `W* = Q((QᵀΓQ) ⊘ (λ_i + λ_j))Qᵀ`.
pub fn solve_lyapunov_dense(grid: GridLevel, gamma: &DMatrix<f64>) -> Result<DenseSolution> {
    check_level(grid)?;
    check_dims(grid, gamma)?;
    let (q, lambda) = sine_eigenbasis(grid);
    let mut core = q.transpose() * gamma * &q;
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            core[(i, j)] /= lambda[i] + lambda[j];
        }
    }
    let w_star = &q * core * q.transpose();
    let residual = lyapunov_residual_dense(grid, &w_star, gamma);
    Ok(DenseSolution {
        w_star,
        residual,
        method: "sine-eigenbasis",
    })
}

/// Solves the cubic optimality system `AW + WA + λ(W∘W) + λW = Γ` by damped
/// Newton. Each Newton step is solved by conjugate gradients on the
/// (symmetric) Jacobian `E ↦ AE + EA + λE + 2λ W∘E`, preconditioned by the
/// exact inverse of its W-independent part in the sine eigenbasis. Stops at
/// residual ≤ 1e−9; step halving (≤ 30 times) safeguards descent of the
/// residual norm.
pub fn solve_nonlinear_dense(
    grid: GridLevel,
    gamma: &DMatrix<f64>,
    lambda: f64,
) -> Result<DenseSolution> {
    check_level(grid)?;
    check_dims(grid, gamma)?;
    let n = grid.n();
    let h = grid.h();
    let (q, ev) = sine_eigenbasis(grid);
    // Exact inverse of E ↦ AE + EA + λE, used as initializer and
    // preconditioner.
    let shifted_solve = |r: &DMatrix<f64>| -> DMatrix<f64> {
        let mut core = q.transpose() * r * &q;
        for i in 0..n {
            for j in 0..n {
                core[(i, j)] /= ev[i] + ev[j] + lambda;
            }
        }
        &q * core * q.transpose()
    };
    let residual_of = |w: &DMatrix<f64>| -> DMatrix<f64> {
        apply_neg_laplacian(w, h) + apply_neg_laplacian(&w.transpose(), h).transpose()
            + w.component_mul(w) * lambda
            + w * lambda
            - gamma
    };

    let mut w = shifted_solve(gamma);
    let mut res = residual_of(&w);
    let mut res_norm = res.norm();
    let tol = 1e-9;
    for _ in 0..50 {
        if res_norm <= tol {
            return Ok(DenseSolution {
                w_star: w,
                residual: res_norm,
                method: "damped-newton-pcg",
            });
        }
        // Newton direction: J[E] = −res, J[E] = AE + EA + λE + 2λ W∘E.
        let jacobian = |e: &DMatrix<f64>| -> DMatrix<f64> {
            apply_neg_laplacian(e, h) + apply_neg_laplacian(&e.transpose(), h).transpose()
                + e * lambda
                + w.component_mul(e) * 2.0 * lambda
        };
        let rhs = -&res;
        let e = pcg(&jacobian, &shifted_solve, &rhs, 1e-12, 500);
        // Damping: halve until the residual norm decreases.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = &w + &e * t;
            let trial_res = residual_of(&trial);
            if trial_res.norm() < res_norm {
                w = trial;
                res = trial_res;
                res_norm = res.norm();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::OracleDiverged(format!(
                "Newton stalled at residual {res_norm:e} (no decrease after 30 halvings)"
            )));
        }
    }
    if res_norm <= tol {
        Ok(DenseSolution {
            w_star: w,
            residual: res_norm,
            method: "damped-newton-pcg",
        })
    } else {
        Err(Error::OracleDiverged(format!(
            "Newton did not reach {tol:e} in 50 iterations; best residual {res_norm:e}"
        )))
    }
}

/// Preconditioned conjugate gradients for a symmetric positive-definite
/// operator on matrices, with Frobenius inner products.
fn pcg(
    op: &impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    precond: &impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    rhs: &DMatrix<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    let mut r = rhs.clone();
    let rhs_norm = rhs.norm().max(f64::MIN_POSITIVE);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.norm() <= rel_tol * rhs_norm {
            break;
        }
        let ap = op(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            // Curvature failure: the outer damping absorbs a short step.
            break;
        }
        let alpha = rz / pap;
        x += &p * alpha;
        r -= &ap * alpha;
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    x
}

/// Relative Frobenius error of the best rank-k approximation of `w_star`
/// (from its singular values).
pub fn best_rank_k_error(w_star: &DMatrix<f64>, k: usize) -> f64 {
    let sv = w_star.clone().singular_values();
    if k >= sv.len() {
        return 0.0;
    }
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let tail: f64 = sv.iter().skip(k).map(|s| s * s).sum();
    if total == 0.0 {
        0.0
    } else {
        (tail / total).sqrt()
    }
}

/// Relative dense error `‖W − W*‖_F / ‖W*‖_F` of a factored iterate against
/// the oracle solution. Errors with the dense cap when `W` is too large to
/// densify, in which case the caller reports the diagnostic as unavailable.
pub fn err_w(w: &FactoredMatrix, oracle: &DenseSolution) -> Result<f64> {
    let wd = w.to_dense()?;
    if wd.nrows() != oracle.w_star.nrows() || wd.ncols() != oracle.w_star.ncols() {
        return Err(Error::DimensionMismatch {
            context: "err_w",
            expected: format!("{}x{}", oracle.w_star.nrows(), oracle.w_star.ncols()),
            found: format!("{}x{}", wd.nrows(), wd.ncols()),
        });
    }
    Ok((wd - &oracle.w_star).norm() / oracle.w_star.norm())
}

/// Dense Lyapunov residual `‖AW + WA − Γ‖_F` via the matrix-free stencil.
pub fn lyapunov_residual_dense(grid: GridLevel, w: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    let h = grid.h();
    (apply_neg_laplacian(w, h) + apply_neg_laplacian(&w.transpose(), h).transpose() - gamma).norm()
}

fn check_level(grid: GridLevel) -> Result<()> {
    if grid.level() > ORACLE_MAX_LEVEL {
        return Err(Error::DenseCap {
            rows: grid.n(),
            cols: grid.n(),
            cap: GridLevel::new(ORACLE_MAX_LEVEL).expect("valid level").n(),
        });
    }
    Ok(())
}

fn check_dims(grid: GridLevel, gamma: &DMatrix<f64>) -> Result<()> {
    let n = grid.n();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "dense oracle",
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", gamma.nrows(), gamma.ncols()),
        });
    }
    Ok(())
}
