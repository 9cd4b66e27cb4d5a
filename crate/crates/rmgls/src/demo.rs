//! Euclidean steepest-descent demonstration of the line-search accuracy gap.
//!
//! Minimizes the quadratic `f(X) = ½·trace(XᵀAX) − trace(XᵀB)` over dense
//! n×n matrices, with `A` symmetric positive definite of prescribed condition
//! number and `B = A·X*` for a known solution `X*`. Steepest descent with a
//! weak-Wolfe line search stagnates once the true per-step decrease falls
//! under the rounding noise of `φ(t) − φ(0)` (≈ ε_mach·|f|, reached near
//! relative gradient √ε_mach), while the approximate-Wolfe test — built from
//! slopes only — keeps making progress down to the rounding floor of the
//! gradient itself. Both `φ` and `φ′` are evaluated honestly from the
//! defining formulas at every trial step; no closed-form shortcut is taken,
//! because the cancellation in `φ(t) − φ(0)` is the phenomenon being
//! demonstrated.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linesearch::{line_search, LineSearchConfig, WolfeMode};
use crate::random::{random_dense, random_orthonormal, seeded_rng};

/// The quadratic model problem: `f(X) = ½·trace(XᵀAX) − trace(XᵀB)` with a
/// known minimizer.
#[derive(Debug, Clone)]
pub struct QuadraticDemo {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    x_star: DMatrix<f64>,
    x0: DMatrix<f64>,
}

impl QuadraticDemo {
    /// Builds `A = Q·diag(λ)·Qᵀ` with eigenvalues linearly spaced in
    /// `[1, cond]` and a Haar-random orthogonal `Q`, plants the solution
    /// `X* ~ N(0,1)` via `B = A·X*`, and draws a random starting point.
    pub fn new(n: usize, cond: f64, seed: u64) -> Self {
        assert!(n >= 2, "demo problem needs n >= 2, got {n}");
        assert!(cond >= 1.0, "condition number must be >= 1, got {cond}");
        let mut rng = seeded_rng(seed);
        let q = random_orthonormal(n, n, &mut rng);
        let lambdas = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + (cond - 1.0) * i as f64 / (n - 1) as f64
            } else {
                0.0
            }
        });
        let a = &q * lambdas * q.transpose();
        // Symmetrize exactly so the gradient formula AX − B is the true
        // gradient of ½·tr(XᵀAX) − tr(XᵀB) (which otherwise needs ½(A+Aᵀ)X).
        let a = (&a + a.transpose()) * 0.5;
        let x_star = random_dense(n, n, &mut rng);
        let b = &a * &x_star;
        let x0 = random_dense(n, n, &mut rng);
        Self { a, b, x_star, x0 }
    }

    /// Problem size n.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// The random starting point drawn at construction.
    pub fn x0(&self) -> &DMatrix<f64> {
        &self.x0
    }

    /// The planted minimizer `X*`.
    pub fn x_star(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    /// `f(X)`, evaluated from the defining trace formulas.
    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        let ax = &self.a * x;
        0.5 * x.dot(&ax) - x.dot(&self.b)
    }

    /// `∇f(X) = AX − B`.
    pub fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * x - &self.b
    }

    /// `f(X*)`, the exact minimum value (computed honestly at `X*`).
    pub fn f_star(&self) -> f64 {
        self.objective(&self.x_star)
    }

    /// Relative error `‖X − X*‖_F / ‖X*‖_F`.
    pub fn relative_error(&self, x: &DMatrix<f64>) -> f64 {
        (x - &self.x_star).norm() / self.x_star.norm()
    }
}

/// Settings for one steepest-descent run of the demonstration.
#[derive(Debug, Clone)]
pub struct DemoConfig {
    /// Matrix dimension (the problem has n² unknowns).
    pub n: usize,
    /// Condition number of `A`.
    pub cond: f64,
    /// RNG seed for `A`, `X*`, and the starting point.
    pub seed: u64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Stop once `‖g_k‖/‖g_0‖` falls to this value.
    pub rel_grad_target: f64,
    /// Stop after this many iterations without a new relative-gradient low
    /// (the stagnation detector that ends a weak-Wolfe run).
    pub stall_window: usize,
    /// Line-search parameters; `line.mode` selects weak vs approximate Wolfe.
    pub line: LineSearchConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n: 100,
            cond: 10.0,
            seed: 0,
            max_iters: 600,
            rel_grad_target: 1e-13,
            stall_window: 60,
            line: LineSearchConfig::default(),
        }
    }
}

/// One recorded steepest-descent iteration.
#[derive(Debug, Clone, Copy)]
pub struct DemoIterate {
    /// Iteration index (0 = the starting point).
    pub iter: usize,
    /// Objective value `f(X_k)`.
    pub f: f64,
    /// Gradient norm `‖g_k‖_F`.
    pub grad_norm: f64,
    /// Relative gradient `‖g_k‖/‖g_0‖`.
    pub rel_grad: f64,
    /// Relative error against the planted solution.
    pub err: f64,
    /// Cumulative `(f, g)` evaluations, line-search trials included.
    pub fevals: usize,
    /// Step length accepted at this iteration (0 for the last row).
    pub step: f64,
}

/// Trajectory and summary of one demonstration run.
#[derive(Debug, Clone)]
pub struct DemoRun {
    /// Per-iteration records, starting with the initial point.
    pub history: Vec<DemoIterate>,
    /// Smallest relative gradient observed.
    pub min_rel_grad: f64,
    /// Total `(f, g)` evaluations across the run.
    pub total_fevals: usize,
    /// The line-search mode the run used.
    pub mode: WolfeMode,
}

impl DemoRun {
    /// Cumulative evaluations spent when `‖g‖/‖g_0‖` first reached `tol`,
    /// or `None` if the run never got there.
    pub fn fevals_to_rel_grad(&self, tol: f64) -> Option<usize> {
        self.history.iter().find(|row| row.rel_grad <= tol).map(|row| row.fevals)
    }

    /// Cumulative evaluations spent when the absolute gradient norm first
    /// reached `tol`, or `None` if the run never got there (a stagnating
    /// weak-Wolfe run plateaus orders of magnitude above small thresholds).
    pub fn fevals_to_grad_norm(&self, tol: f64) -> Option<usize> {
        self.history.iter().find(|row| row.grad_norm <= tol).map(|row| row.fevals)
    }
}

/// Runs steepest descent on [`QuadraticDemo`] under the configured
/// line-search mode and records the full trajectory.
///
/// The initial trial step is the exact Cauchy step `gᵀg/gᵀAg` (optimal for
/// the first steepest-descent iteration); afterwards each search starts from
/// the previously accepted step. A search that exhausts its budget
/// contributes its best admissible step, so a stagnating weak-Wolfe run keeps
/// producing (noise-level) iterates instead of aborting — exactly the
/// plateau the demonstration is about.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoRun> {
    cfg.line.validate()?;
    let problem = QuadraticDemo::new(cfg.n, cfg.cond, cfg.seed);
    let mut x = problem.x0().clone();
    let mut g = problem.gradient(&x);
    let mut f = problem.objective(&x);
    let g0_norm = g.norm();
    let mut fevals = 1usize;

    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut min_rel = f64::INFINITY;
    let mut min_rel_iter = 0usize;
    let mut prev_step: Option<f64> = None;

    for iter in 0..=cfg.max_iters {
        let grad_norm = g.norm();
        let rel_grad = grad_norm / g0_norm;
        if rel_grad < min_rel {
            min_rel = rel_grad;
            min_rel_iter = iter;
        }
        let mut row = DemoIterate {
            iter,
            f,
            grad_norm,
            rel_grad,
            err: problem.relative_error(&x),
            fevals,
            step: 0.0,
        };
        if rel_grad <= cfg.rel_grad_target
            || grad_norm == 0.0
            || iter == cfg.max_iters
            || iter - min_rel_iter > cfg.stall_window
        {
            history.push(row);
            break;
        }

        let phi0 = f;
        let dphi0 = -grad_norm * grad_norm;
        let direction = -&g;
        let mut line = |t: f64| -> Result<(f64, f64)> {
            let y = &x + &direction * t;
            let ay = &problem.a * &y;
            let phi = 0.5 * y.dot(&ay) - y.dot(&problem.b);
            let dphi = (&ay - &problem.b).dot(&direction);
            Ok((phi, dphi))
        };
        let t0 = prev_step.unwrap_or_else(|| {
            let ag = &problem.a * &g;
            grad_norm * grad_norm / g.dot(&ag)
        });
        let result = line_search(&mut line, phi0, dphi0, t0, &cfg.line)?;
        fevals += result.evals;
        prev_step = Some(result.t);
        row.step = result.t;
        history.push(row);

        x += &direction * result.t;
        g = problem.gradient(&x);
        f = problem.objective(&x);
        fevals += 1;
    }

    Ok(DemoRun { history, min_rel_grad: min_rel, total_fevals: fevals, mode: cfg.line.mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(mode: WolfeMode, seed: u64) -> DemoConfig {
        let mut cfg = DemoConfig { n: 24, seed, max_iters: 500, ..DemoConfig::default() };
        cfg.line.mode = mode;
        cfg
    }

    #[test]
    fn operator_has_requested_spectrum_and_symmetry() {
        let p = QuadraticDemo::new(30, 10.0, 3);
        let asym = (&p.a - p.a.transpose()).norm();
        assert!(asym <= 1e-13 * p.a.norm(), "A must be symmetric, defect {asym:e}");
        let eigs = p.a.clone().symmetric_eigen().eigenvalues;
        let lo = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().cloned().fold(0.0f64, f64::max);
        assert!((lo - 1.0).abs() <= 1e-10, "smallest eigenvalue {lo} should be 1");
        assert!((hi - 10.0).abs() <= 1e-9, "largest eigenvalue {hi} should be 10");
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = QuadraticDemo::new(8, 10.0, 5);
        let mut rng = seeded_rng(55);
        let x = random_dense(8, 8, &mut rng);
        let d = random_dense(8, 8, &mut rng);
        let g = p.gradient(&x);
        let analytic = g.dot(&d);
        let h = 1e-6;
        let fd = (p.objective(&(&x + &d * h)) - p.objective(&(&x - &d * h))) / (2.0 * h);
        assert!(
            (analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0),
            "directional derivative {analytic:e} vs finite difference {fd:e}"
        );
    }

    #[test]
    fn gradient_vanishes_at_planted_solution() {
        let p = QuadraticDemo::new(16, 10.0, 7);
        let g = p.gradient(p.x_star());
        assert!(
            g.norm() <= 1e-12 * p.b.norm(),
            "gradient at X* has norm {:e}",
            g.norm()
        );
        // f* is the minimum along random rays through X*.
        let mut rng = seeded_rng(77);
        let d = random_dense(16, 16, &mut rng);
        for t in [-0.5, -0.01, 0.01, 0.5] {
            let v = p.objective(&(p.x_star() + &d * t));
            assert!(v >= p.f_star(), "f(X* + {t}·D) = {v} must exceed f* = {}", p.f_star());
        }
    }

    #[test]
    fn approximate_mode_reaches_deep_gradient_accuracy() {
        let run = run_demo(&small_cfg(WolfeMode::Approximate, 11)).unwrap();
        assert!(
            run.min_rel_grad <= 1e-12,
            "approximate-Wolfe floor {:e} should be <= 1e-12",
            run.min_rel_grad
        );
        // The trajectory never increases f beyond the admissibility window.
        for w in run.history.windows(2) {
            assert!(
                w[1].f <= w[0].f + 1e-6 * w[0].f.abs() + 1e-12,
                "objective must not rise past the admissibility window: {} -> {}",
                w[0].f,
                w[1].f
            );
        }
    }

    #[test]
    fn weak_mode_stalls_well_above_approximate_mode_floor() {
        let ww = run_demo(&small_cfg(WolfeMode::Weak, 11)).unwrap();
        let hz = run_demo(&small_cfg(WolfeMode::Approximate, 11)).unwrap();
        assert!(
            ww.min_rel_grad >= 1e3 * hz.min_rel_grad,
            "weak-Wolfe floor {:e} should sit orders of magnitude above the \
             approximate-Wolfe floor {:e}",
            ww.min_rel_grad,
            hz.min_rel_grad
        );
        assert!(
            ww.min_rel_grad >= 1e-10,
            "weak-Wolfe floor {:e} should stagnate near sqrt(eps)",
            ww.min_rel_grad
        );
    }

    #[test]
    fn feval_accounting_is_monotone_and_queryable() {
        let run = run_demo(&small_cfg(WolfeMode::Approximate, 13)).unwrap();
        for w in run.history.windows(2) {
            assert!(w[1].fevals > w[0].fevals, "cumulative fevals must increase");
        }
        let hit = run.fevals_to_rel_grad(1e-6).expect("run reaches 1e-6");
        assert!(hit <= run.total_fevals);
        assert!(run.fevals_to_rel_grad(0.0).is_none(), "nothing reaches exactly zero");
        let last = run.history.last().unwrap();
        assert_eq!(run.total_fevals, last.fevals, "summary must match the last row");
    }

    #[test]
    fn identical_seeds_reproduce_identical_trajectories() {
        let a = run_demo(&small_cfg(WolfeMode::Approximate, 17)).unwrap();
        let b = run_demo(&small_cfg(WolfeMode::Approximate, 17)).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.f.to_bits(), rb.f.to_bits(), "objective column must be bit-identical");
            assert_eq!(ra.grad_norm.to_bits(), rb.grad_norm.to_bits());
            assert_eq!(ra.fevals, rb.fevals);
        }
    }
}
