//! Multilevel minimization on the fixed-rank manifold.
//!
//! One cycle at mesh width h: pre-smooth with Riemannian steepest descent,
//! restrict the iterate to width H = 2h, build the coarse surrogate
//! `ψ_H(x) = f_H(x) − g(R⁻¹_a(x), κ_H)` whose correction term
//! `κ_H = grad f_H(a) − Ĩ_h^H(grad f_h(x̄_h))` makes the coarse gradient at
//! the anchor `a` agree with the restricted fine gradient, minimize ψ_H
//! (recursively, or with a trust-region method on the coarsest grid), lift
//! the coarse update back as a tangent correction `η_h`, apply it through a
//! line search, and post-smooth. The outer driver repeats cycles until the
//! Riemannian gradient norm has dropped by `grad_tol` relative to the start,
//! recording per-iteration diagnostics; rank-adaptive warm starting wraps the
//! driver with a nondecreasing rank schedule.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factored::{concat_blkdiag, FactoredMatrix, RawFactored};
use crate::geometry::{
    inverse_retract, project, retract, riemannian_gradient, tangent_axpy, tangent_inner,
    TangentVector,
};
use crate::linesearch::{line_search, LineSearchConfig, RetractedLine};
use crate::oracle::{err_w, DenseSolution};
use crate::problems::{CostFunction, Problem};
use crate::random::{random_dense, seeded_rng};
use crate::transfer::{GridLevel, TransferPair, TransferScheme};

/// Singular value assigned to directions added by [`pad_rank`], relative to
/// the leading singular value of the padded iterate: large enough that the
/// factorization stays numerically rank-k, small enough not to perturb the
/// warm start.
pub const RANK_PAD_SCALE: f64 = 1e-8;

/// Trust-region acceptance threshold ρ′: a step is taken when the achieved
/// reduction exceeds this fraction of the model reduction.
const TR_ACCEPT: f64 = 0.1;

/// Cap on truncated-CG iterations per trust-region step.
const TCG_MAX_INNER: usize = 60;

/// Shape of the recursion below the finest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CycleKind {
    /// One recursive correction per level per iteration.
    #[default]
    V,
    /// Two successive recursive corrections per level per iteration.
    W,
}

/// Configuration for the multilevel solver.
#[derive(Debug, Clone)]
pub struct CycleConfig {
    /// Pre-smoothing steps ν₁ per level per cycle.
    pub nu1: usize,
    /// Post-smoothing steps ν₂ per level per cycle.
    pub nu2: usize,
    /// Grid level ℓ_c on which the recursion bottoms out.
    pub coarsest_level: u32,
    /// Outer stopping tolerance on the gradient norm relative to iteration 0.
    pub grad_tol: f64,
    /// Maximum number of outer cycles.
    pub max_cycles: usize,
    /// Coarsest-level solver tolerance on ‖grad ψ‖.
    pub coarse_solver_tol: f64,
    /// Coarsest-level solver iteration cap.
    pub coarse_solver_max_iters: usize,
    /// Whether the coarsest level runs a trust-region method; when false it
    /// falls back to steepest descent with the same line search.
    pub coarse_trust_region: bool,
    /// Line-search settings shared by smoothing and correction steps.
    pub line_search: LineSearchConfig,
    /// Fraction of the accepted line-search step actually taken by the
    /// smoother; one half makes a steepest-descent step mimic a damped
    /// Richardson sweep.
    pub smoother_step_factor: f64,
    /// V- or W-cycle recursion.
    pub kind: CycleKind,
    /// Seed for the random initial guess and rank padding.
    pub seed: u64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            nu1: 5,
            nu2: 5,
            coarsest_level: 5,
            grad_tol: 1e-12,
            max_cycles: 150,
            coarse_solver_tol: 1e-11,
            coarse_solver_max_iters: 200,
            coarse_trust_region: true,
            line_search: LineSearchConfig::default(),
            smoother_step_factor: 0.5,
            kind: CycleKind::V,
            seed: 0,
        }
    }
}

impl CycleConfig {
    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        if self.coarsest_level < 2 {
            return Err(Error::Config(format!(
                "coarsest level must be at least 2, got {}",
                self.coarsest_level
            )));
        }
        if self.nu1 == 0 && self.nu2 == 0 {
            return Err(Error::Config(
                "pre- and post-smoothing counts cannot both be zero".into(),
            ));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!(
                "gradient tolerance must be positive, got {:e}",
                self.grad_tol
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::Config("maximum cycle count must be positive".into()));
        }
        if !(self.coarse_solver_tol > 0.0) {
            return Err(Error::Config(format!(
                "coarse solver tolerance must be positive, got {:e}",
                self.coarse_solver_tol
            )));
        }
        if !(self.smoother_step_factor > 0.0 && self.smoother_step_factor <= 1.0) {
            return Err(Error::Config(format!(
                "smoother step factor must lie in (0, 1], got {}",
                self.smoother_step_factor
            )));
        }
        self.line_search.validate()
    }
}

/// The grid hierarchy for one problem: the objective re-discretized on every
/// level from the finest down to the coarsest, plus the transfer operators
/// between neighbouring levels.
#[derive(Debug)]
pub struct LevelStack {
    problems: Vec<Problem>,
    pairs: Vec<TransferPair>,
    scheme: TransferScheme,
}

impl LevelStack {
    /// Builds the hierarchy below `finest` down to `coarsest_level`.
    ///
    /// Requires `2 ≤ coarsest_level < finest level` so that the stack has at
    /// least two levels.
    pub fn new(finest: &Problem, coarsest_level: u32, scheme: TransferScheme) -> Result<Self> {
        let top = finest.grid().level();
        if coarsest_level < 2 {
            return Err(Error::Config(format!(
                "coarsest level must be at least 2, got {coarsest_level}"
            )));
        }
        if coarsest_level >= top {
            return Err(Error::Config(format!(
                "coarsest level {coarsest_level} must lie strictly below the finest level {top}"
            )));
        }
        let mut problems = Vec::with_capacity((top - coarsest_level + 1) as usize);
        let mut pairs = Vec::with_capacity((top - coarsest_level) as usize);
        for level in (coarsest_level..=top).rev() {
            let grid = GridLevel::new(level)?;
            problems.push(finest.at_level(grid)?);
            if level > coarsest_level {
                pairs.push(TransferPair::down_from(grid, scheme)?);
            }
        }
        Ok(Self { problems, pairs, scheme })
    }

    /// Number of levels in the hierarchy (≥ 2).
    pub fn num_levels(&self) -> usize {
        self.problems.len()
    }

    /// The finest-level objective.
    pub fn finest(&self) -> &Problem {
        &self.problems[0]
    }

    /// The objective at `depth` levels below the finest (0 = finest).
    pub fn problem(&self, depth: usize) -> &Problem {
        &self.problems[depth]
    }

    /// Transfer operators whose fine side sits at `depth`.
    pub fn pair(&self, depth: usize) -> &TransferPair {
        &self.pairs[depth]
    }

    /// Depth index of the coarsest level.
    pub fn coarsest_depth(&self) -> usize {
        self.problems.len() - 1
    }

    /// The tangent-transfer scheme the stack was built with.
    pub fn scheme(&self) -> TransferScheme {
        self.scheme
    }

    fn check_matches(&self, cfg: &CycleConfig) -> Result<()> {
        let bottom = self.problems[self.coarsest_depth()].grid().level();
        if bottom != cfg.coarsest_level {
            return Err(Error::Config(format!(
                "configuration names coarsest level {} but the stack bottoms out at {bottom}",
                cfg.coarsest_level
            )));
        }
        Ok(())
    }
}

/// Coarse surrogate objective `ψ(x) = f(x) − g_a(R⁻¹_a(x), κ)` anchored at
/// the restriction `a` of the current fine iterate.
///
/// Because the inverse orthographic retraction is affine in `x` and the
/// tangent projection at the anchor is self-adjoint with `P_a(κ) = κ`, the
/// correction term equals `⟨x − a, κ⟩` for every point, so the Euclidean
/// gradient of ψ is exactly `∇f(x) − κ` and its Riemannian gradient is the
/// projection of that difference at the current point. At the anchor this
/// reduces to `P_a(∇f(a)) − κ`, the restricted fine gradient.
pub struct CoarseModel<'a> {
    base: &'a dyn CostFunction,
    anchor: FactoredMatrix,
    kappa: TangentVector,
}

impl<'a> CoarseModel<'a> {
    /// Wraps a base objective with an anchored first-order correction.
    /// `kappa` must be a tangent vector at `anchor`.
    pub fn new(
        base: &'a dyn CostFunction,
        anchor: FactoredMatrix,
        kappa: TangentVector,
    ) -> Result<Self> {
        if !kappa.is_based_at(&anchor) {
            return Err(Error::BaseMismatch {
                context: "CoarseModel::new",
            });
        }
        Ok(Self { base, anchor, kappa })
    }

    /// The anchor point `a` (the restricted fine iterate).
    pub fn anchor(&self) -> &FactoredMatrix {
        &self.anchor
    }

    /// The correction term κ, a tangent vector at the anchor.
    pub fn kappa(&self) -> &TangentVector {
        &self.kappa
    }

    /// Riemannian gradient of ψ at `x`.
    pub fn gradient(&self, x: &FactoredMatrix) -> Result<TangentVector> {
        let raw = self.euclidean_gradient(x)?;
        riemannian_gradient(x, &raw)
    }
}

impl CostFunction for CoarseModel<'_> {
    fn value(&self, x: &FactoredMatrix) -> Result<f64> {
        let f = self.base.value(x)?;
        let lift = inverse_retract(&self.anchor, x)?;
        Ok(f - tangent_inner(&lift, &self.kappa)?)
    }

    fn euclidean_gradient(&self, x: &FactoredMatrix) -> Result<RawFactored> {
        let g = self.base.euclidean_gradient(x)?;
        let correction = self.kappa.as_raw(&self.anchor)?.scaled(-1.0);
        concat_blkdiag(&[&g, &correction])
    }
}

/// Restricts the smoothed fine iterate and assembles the coarse surrogate.
///
/// Returns the model together with its anchor, the restricted point that the
/// coarse minimization starts from. When the restriction numerically drops
/// rank (directions below the recompression threshold on the coarse grid),
/// the model simply lives on the lower-rank coarse manifold for this cycle;
/// the tangent transfers project across the rank mismatch. A restriction
/// losing *all* rank surfaces as [`Error::RankCollapse`] from the transfer.
pub fn build_coarse_model<'a>(
    fine_objective: &dyn CostFunction,
    coarse_base: &'a dyn CostFunction,
    x_bar: &FactoredMatrix,
    pair: &TransferPair,
) -> Result<(CoarseModel<'a>, FactoredMatrix)> {
    let anchor = pair.restrict_point(x_bar)?;
    let fine_grad = riemannian_gradient(x_bar, &fine_objective.euclidean_gradient(x_bar)?)?;
    let coarse_grad = riemannian_gradient(&anchor, &coarse_base.euclidean_gradient(&anchor)?)?;
    let restricted = pair.restrict_tangent(&fine_grad, x_bar, &anchor)?;
    let kappa = tangent_axpy(1.0, &coarse_grad, -1.0, &restricted)?;
    let model = CoarseModel::new(coarse_base, anchor.clone(), kappa)?;
    Ok((model, anchor))
}

/// Warm-start memory for one level: the last accepted line-search steps make
/// good trial steps for the next search in the same role.
#[derive(Debug, Default, Clone, Copy)]
struct LevelState {
    smoother_step: Option<f64>,
    correction_step: Option<f64>,
}

/// Event and work counters threaded through one cycle.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    fevals: usize,
    skipped_corrections: usize,
    stalled_smoothings: usize,
}

/// Diagnostics from one multilevel iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationInfo {
    /// Fine-level objective value right after pre-smoothing; the rest of the
    /// iteration never pushes the objective above this beyond roundoff.
    pub f_after_pre_smooth: f64,
    /// Objective/gradient evaluations consumed, summed over all levels.
    pub fevals: usize,
    /// Coarse corrections skipped because the interpolated direction was not
    /// a descent direction (or its search found no admissible step).
    pub skipped_corrections: usize,
    /// Smoothing sweeps cut short because no admissible step existed
    /// (typically at numerical stationarity).
    pub stalled_smoothings: usize,
}

/// A fixed number of Riemannian steepest-descent steps with line search,
/// taking `smoother_step_factor` (default one half) of each accepted step.
///
/// Returns early when the gradient vanishes at machine scale or when the
/// search cannot make admissible progress; the iterate is returned as-is in
/// those cases.
pub fn smooth(
    objective: &dyn CostFunction,
    x: FactoredMatrix,
    steps: usize,
    cfg: &CycleConfig,
) -> Result<FactoredMatrix> {
    let mut state = LevelState::default();
    let mut tally = Tally::default();
    smooth_inner(objective, x, steps, cfg, &mut state, &mut tally)
}

fn smooth_inner(
    objective: &dyn CostFunction,
    mut x: FactoredMatrix,
    steps: usize,
    cfg: &CycleConfig,
    state: &mut LevelState,
    tally: &mut Tally,
) -> Result<FactoredMatrix> {
    for _ in 0..steps {
        let egrad = objective.euclidean_gradient(&x)?;
        tally.fevals += 1;
        let grad = riemannian_gradient(&x, &egrad)?;
        let gnorm = grad.norm();
        if gnorm <= f64::EPSILON * (1.0 + x.norm()) {
            break;
        }
        let direction = grad.scaled(-1.0);
        let accepted = {
            let built = match RetractedLine::new(objective, &x, &direction) {
                Ok(built) => built,
                Err(Error::NotDescent { .. }) => {
                    tally.stalled_smoothings += 1;
                    break;
                }
                Err(e) => return Err(e),
            };
            let (mut line, phi0, dphi0) = built;
            tally.fevals += 1;
            let t0 = state.smoother_step.unwrap_or(1.0 / gnorm);
            match line_search(&mut line, phi0, dphi0, t0, &cfg.line_search) {
                Ok(res) => {
                    tally.fevals += res.evals;
                    // Only take steps the value guard admits; an exhausted
                    // search whose best point is above φ₀ + ε|φ₀| cannot
                    // improve the iterate.
                    if res.phi <= phi0 + cfg.line_search.epsilon * phi0.abs() {
                        Some(res.t)
                    } else {
                        None
                    }
                }
                Err(Error::LineSearchFailed(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let Some(t) = accepted else {
            tally.stalled_smoothings += 1;
            break;
        };
        state.smoother_step = Some(t);
        let damped = direction.scaled(cfg.smoother_step_factor * t);
        x = match retract(&x, &damped) {
            Ok(y) => y,
            // The search evaluated the full step successfully, so fall back
            // to it if the damped step happens to graze the domain boundary.
            Err(Error::RetractionDomain { .. }) => retract(&x, &direction.scaled(t))?,
            Err(e) => return Err(e),
        };
    }
    Ok(x)
}

/// Minimizes an objective on the coarsest grid to `coarse_solver_tol` on the
/// Riemannian gradient norm, by a trust-region method with truncated-CG
/// inner iterations (finite-difference Hessian products), or by steepest
/// descent with line search when `coarse_trust_region` is off.
pub fn coarse_solve(
    objective: &dyn CostFunction,
    x0: &FactoredMatrix,
    cfg: &CycleConfig,
) -> Result<FactoredMatrix> {
    let mut tally = Tally::default();
    coarse_solve_inner(objective, x0.clone(), cfg, &mut tally)
}

fn coarse_solve_inner(
    objective: &dyn CostFunction,
    x: FactoredMatrix,
    cfg: &CycleConfig,
    tally: &mut Tally,
) -> Result<FactoredMatrix> {
    if cfg.coarse_trust_region {
        trust_region_solve(objective, x, cfg, tally)
    } else {
        steepest_descent_solve(objective, x, cfg, tally)
    }
}

fn trust_region_solve(
    objective: &dyn CostFunction,
    mut x: FactoredMatrix,
    cfg: &CycleConfig,
    tally: &mut Tally,
) -> Result<FactoredMatrix> {
    let mut f = objective.value(&x)?;
    tally.fevals += 1;
    let mut grad = riemannian_gradient(&x, &objective.euclidean_gradient(&x)?)?;
    tally.fevals += 1;
    // Forcing-term refinement of the configured tolerance: surrogate solves
    // start at an anchor whose gradient equals the restricted fine-level
    // gradient, so once the outer iteration is nearly converged an absolute
    // threshold would accept coarse minimizers whose own error rivals the
    // correction being computed — the fine iteration then plateaus just
    // above its target. Demanding a fixed relative reduction instead keeps
    // corrections informative all the way down.
    let tol = (0.01 * grad.norm()).min(cfg.coarse_solver_tol).max(1e-15);
    let scale = 1.0 + x.norm();
    let delta_max = 64.0 * scale;
    let mut delta = scale / 8.0;
    let mut consecutive_rejects = 0usize;
    for _ in 0..cfg.coarse_solver_max_iters {
        if grad.norm() <= tol {
            break;
        }
        let (eta, h_eta, hit_boundary) = truncated_cg(objective, &x, &grad, delta, tol, tally)?;
        let predicted = -(tangent_inner(&grad, &eta)? + 0.5 * tangent_inner(&eta, &h_eta)?);
        if !(predicted > 0.0) {
            delta *= 0.25;
            if delta < 1e-16 * scale {
                break;
            }
            continue;
        }
        let (rho, candidate) = match retract(&x, &eta) {
            Ok(y) => {
                let fy = objective.value(&y)?;
                tally.fevals += 1;
                // Near the optimum the true decrease sinks below the
                // cancellation noise ε|f| of the subtraction; regularizing
                // numerator and denominator biases ρ toward 1 exactly when
                // both are at roundoff scale, so Newton-quality steps keep
                // being accepted instead of collapsing the radius.
                let reg = 1e3 * f64::EPSILON * f.abs().max(1.0);
                ((f - fy + reg) / (predicted + reg), Some((y, fy)))
            }
            // A step outside the retraction domain is simply rejected; the
            // shrunken radius retries closer to the current point.
            Err(Error::RetractionDomain { .. }) => (f64::NEG_INFINITY, None),
            Err(e) => return Err(e),
        };
        if rho < 0.25 {
            delta *= 0.25;
        } else if rho > 0.75 && hit_boundary {
            delta = (2.0 * delta).min(delta_max);
        }
        if rho > TR_ACCEPT {
            let (y, fy) = candidate.expect("accepted step was evaluated");
            assert!(
                fy <= f + 1e-12 * (1.0 + f.abs()),
                "accepted trust-region step increased the objective: {f:.17e} -> {fy:.17e}"
            );
            x = y;
            f = fy;
            grad = riemannian_gradient(&x, &objective.euclidean_gradient(&x)?)?;
            tally.fevals += 1;
            consecutive_rejects = 0;
        } else {
            // A long rejection streak means the radius has already shrunk
            // about six orders of magnitude without finding an acceptable
            // step — the finite-difference noise floor, not a hard region.
            consecutive_rejects += 1;
            if consecutive_rejects >= 10 {
                break;
            }
        }
        if delta < 1e-16 * scale {
            break;
        }
    }
    Ok(x)
}

/// Steihaug–Toint truncated CG for the trust-region subproblem at `x`:
/// approximately minimizes `⟨g, η⟩ + ½⟨η, H η⟩` over `‖η‖ ≤ delta`.
/// Returns `(η, Hη, hit_boundary)`; the accumulated `Hη` lets the caller
/// evaluate the model decrease without extra Hessian products.
fn truncated_cg(
    objective: &dyn CostFunction,
    x: &FactoredMatrix,
    grad: &TangentVector,
    delta: f64,
    outer_tol: f64,
    tally: &mut Tally,
) -> Result<(TangentVector, TangentVector, bool)> {
    let mut eta = TangentVector::zero(x);
    let mut h_eta = TangentVector::zero(x);
    let mut r = grad.clone();
    let mut d = grad.scaled(-1.0);
    let r0 = grad.norm();
    // Superlinear rule with an absolute floor: finite-difference Hessian
    // products cannot resolve residuals far below the outer tolerance.
    let inner_tol = (r0 * r0.min(0.1)).max(0.01 * outer_tol);
    let mut rr = tangent_inner(&r, &r)?;
    for _ in 0..TCG_MAX_INNER {
        if rr.sqrt() <= inner_tol {
            break;
        }
        let hd = hessian_fd(objective, x, grad, &d, tally)?;
        let dhd = tangent_inner(&d, &hd)?;
        if dhd <= 0.0 {
            let tau = boundary_step(&eta, &d, delta)?;
            eta = tangent_axpy(1.0, &eta, tau, &d)?;
            h_eta = tangent_axpy(1.0, &h_eta, tau, &hd)?;
            return Ok((eta, h_eta, true));
        }
        let alpha = rr / dhd;
        let eta_next = tangent_axpy(1.0, &eta, alpha, &d)?;
        if eta_next.norm() >= delta {
            let tau = boundary_step(&eta, &d, delta)?;
            eta = tangent_axpy(1.0, &eta, tau, &d)?;
            h_eta = tangent_axpy(1.0, &h_eta, tau, &hd)?;
            return Ok((eta, h_eta, true));
        }
        eta = eta_next;
        h_eta = tangent_axpy(1.0, &h_eta, alpha, &hd)?;
        r = tangent_axpy(1.0, &r, alpha, &hd)?;
        let rr_next = tangent_inner(&r, &r)?;
        let beta = rr_next / rr;
        d = tangent_axpy(-1.0, &r, beta, &d)?;
        rr = rr_next;
    }
    Ok((eta, h_eta, false))
}

/// Positive root τ of `‖η + τ d‖ = delta`.
fn boundary_step(eta: &TangentVector, d: &TangentVector, delta: f64) -> Result<f64> {
    let a = tangent_inner(d, d)?;
    if a <= 0.0 {
        return Ok(0.0);
    }
    let b = tangent_inner(eta, d)?;
    let c = tangent_inner(eta, eta)?;
    let disc = (b * b + a * (delta * delta - c)).max(0.0);
    Ok((disc.sqrt() - b) / a)
}

/// Finite-difference Hessian product: retracts a short step `s·v`, projects
/// the Euclidean gradient there back onto the tangent space at `x`, and
/// differences against the gradient at `x`. The step is
/// `√ε_mach · (1 + ‖x‖)/‖v‖`, shrunk when it leaves the retraction domain.
fn hessian_fd(
    objective: &dyn CostFunction,
    x: &FactoredMatrix,
    grad_at_x: &TangentVector,
    v: &TangentVector,
    tally: &mut Tally,
) -> Result<TangentVector> {
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Ok(TangentVector::zero(x));
    }
    let mut s = f64::EPSILON.sqrt() * (1.0 + x.norm()) / vnorm;
    let mut last_err = None;
    for _ in 0..4 {
        match retract(x, &v.scaled(s)) {
            Ok(y) => {
                let egrad = objective.euclidean_gradient(&y)?;
                tally.fevals += 1;
                let moved = project(x, &egrad)?;
                return tangent_axpy(1.0 / s, &moved, -1.0 / s, grad_at_x);
            }
            Err(e @ Error::RetractionDomain { .. }) => {
                last_err = Some(e);
                s *= 0.25;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop exits early unless a domain error occurred"))
}

fn steepest_descent_solve(
    objective: &dyn CostFunction,
    mut x: FactoredMatrix,
    cfg: &CycleConfig,
    tally: &mut Tally,
) -> Result<FactoredMatrix> {
    let mut state = LevelState::default();
    // Same forcing-term rule as the trust-region path; see there.
    let mut tol = None;
    for _ in 0..cfg.coarse_solver_max_iters {
        let egrad = objective.euclidean_gradient(&x)?;
        tally.fevals += 1;
        let grad = riemannian_gradient(&x, &egrad)?;
        let gnorm = grad.norm();
        let tol = *tol.get_or_insert((0.01 * gnorm).min(cfg.coarse_solver_tol).max(1e-15));
        if gnorm <= tol {
            break;
        }
        let direction = grad.scaled(-1.0);
        let accepted = {
            let built = match RetractedLine::new(objective, &x, &direction) {
                Ok(built) => built,
                Err(Error::NotDescent { .. }) => break,
                Err(e) => return Err(e),
            };
            let (mut line, phi0, dphi0) = built;
            tally.fevals += 1;
            let t0 = state.smoother_step.unwrap_or(1.0 / gnorm);
            match line_search(&mut line, phi0, dphi0, t0, &cfg.line_search) {
                Ok(res) => {
                    tally.fevals += res.evals;
                    if res.phi <= phi0 + cfg.line_search.epsilon * phi0.abs() {
                        Some(res.t)
                    } else {
                        None
                    }
                }
                Err(Error::LineSearchFailed(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let Some(t) = accepted else { break };
        state.smoother_step = Some(t);
        x = retract(&x, &direction.scaled(t))?;
    }
    Ok(x)
}

/// One multilevel iteration on the stack's finest level: pre-smooth,
/// coarse-grid correction through the surrogate model (recursing down to the
/// coarsest level), line-searched correction step, post-smooth.
pub fn rmgls_iteration(
    stack: &LevelStack,
    x: &FactoredMatrix,
    cfg: &CycleConfig,
) -> Result<(FactoredMatrix, IterationInfo)> {
    cfg.validate()?;
    stack.check_matches(cfg)?;
    let mut states = vec![LevelState::default(); stack.num_levels()];
    let mut tally = Tally::default();
    let (next, f_pre) = cycle_at(stack, 0, stack.finest(), x.clone(), cfg, &mut states, &mut tally)?;
    Ok((
        next,
        IterationInfo {
            f_after_pre_smooth: f_pre,
            fevals: tally.fevals,
            skipped_corrections: tally.skipped_corrections,
            stalled_smoothings: tally.stalled_smoothings,
        },
    ))
}

/// The recursive cycle body. `objective` is the level's working objective:
/// the plain discretized problem on the finest level, a [`CoarseModel`]
/// below it. Returns the new iterate and the objective value right after
/// pre-smoothing.
fn cycle_at(
    stack: &LevelStack,
    depth: usize,
    objective: &dyn CostFunction,
    x: FactoredMatrix,
    cfg: &CycleConfig,
    states: &mut Vec<LevelState>,
    tally: &mut Tally,
) -> Result<(FactoredMatrix, f64)> {
    // (1) Pre-smoothing.
    let mut xbar = smooth_inner(objective, x, cfg.nu1, cfg, &mut states[depth], tally)?;
    let f_pre = objective.value(&xbar)?;
    tally.fevals += 1;

    // (2) Coarse-grid correction: restrict, correct the coarse gradient,
    // minimize the surrogate, lift the update back as a tangent direction.
    let pair = stack.pair(depth);
    let coarse_base = stack.problem(depth + 1);
    let (model, anchor) = build_coarse_model(objective, coarse_base, &xbar, pair)?;
    tally.fevals += 2;

    let coarse_next = if depth + 1 == stack.coarsest_depth() {
        coarse_solve_inner(&model, anchor.clone(), cfg, tally)?
    } else {
        let (mut y, _) = cycle_at(stack, depth + 1, &model, anchor.clone(), cfg, states, tally)?;
        if cfg.kind == CycleKind::W {
            let (y2, _) = cycle_at(stack, depth + 1, &model, y, cfg, states, tally)?;
            y = y2;
        }
        y
    };

    let eta_coarse = inverse_retract(&anchor, &coarse_next)?;
    let eta = pair.interpolate_tangent(&eta_coarse, &anchor, &xbar)?;

    // (2g) Line search along the interpolated correction. The interpolated
    // direction is not guaranteed to point downhill; a non-descent direction
    // or a search without an admissible step skips the correction and the
    // iteration continues with post-smoothing.
    let accepted = {
        match RetractedLine::new(objective, &xbar, &eta) {
            Ok((mut line, phi0, dphi0)) => {
                tally.fevals += 1;
                let t0 = states[depth].correction_step.unwrap_or(1.0);
                match line_search(&mut line, phi0, dphi0, t0, &cfg.line_search) {
                    Ok(res) => {
                        tally.fevals += res.evals;
                        if res.phi <= phi0 + cfg.line_search.epsilon * phi0.abs() {
                            Some(res.t)
                        } else {
                            None
                        }
                    }
                    Err(Error::LineSearchFailed(_)) | Err(Error::StepUnbounded { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::NotDescent { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    match accepted {
        Some(t) => {
            states[depth].correction_step = Some(t);
            xbar = retract(&xbar, &eta.scaled(t))?;
        }
        None => tally.skipped_corrections += 1,
    }

    // (3) Post-smoothing.
    let next = smooth_inner(objective, xbar, cfg.nu2, cfg, &mut states[depth], tally)?;
    Ok((next, f_pre))
}

/// One row of the per-iteration convergence log.
#[derive(Debug, Clone)]
pub struct IterationRow {
    /// Outer iteration index; row 0 describes the initial guess.
    pub iter: usize,
    /// Objective value.
    pub f: f64,
    /// Relative objective gap `|f − f_ref|/|f_ref|`, where `f_ref` is the
    /// run's final objective value (filled in after the run).
    pub err_f: f64,
    /// Riemannian gradient norm (absolute).
    pub grad_norm: f64,
    /// Gradient norm relative to iteration 0.
    pub r_grad: f64,
    /// Relative distance to the unconstrained dense minimizer, when a dense
    /// reference solution was supplied.
    pub err_w: Option<f64>,
    /// Mesh-scaled residual `h²‖∇f‖_F` of the stationarity equation.
    pub residual: f64,
    /// Backward-error residual of the stationarity equation.
    pub residual_bw: f64,
    /// Rank of the iterate (varies in rank-adaptive runs).
    pub rank: usize,
    /// Cumulative objective/gradient evaluations spent by the optimization
    /// (diagnostics excluded).
    pub fevals: usize,
    /// Wall-clock seconds since the start of the run.
    pub seconds: f64,
}

/// Full convergence log of a run.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceRecord {
    /// One row per outer iteration, starting with the initial guess.
    pub rows: Vec<IterationRow>,
    /// Gradient norm at iteration 0 (the normalization of `r_grad`).
    pub grad_norm0: f64,
    /// Whether the relative gradient tolerance was reached.
    pub converged: bool,
    /// Total coarse corrections skipped across the run.
    pub skipped_corrections: usize,
    /// Total smoothing sweeps cut short across the run.
    pub stalled_smoothings: usize,
}

impl ConvergenceRecord {
    /// Number of multilevel cycles performed (excludes the initial row).
    pub fn cycles_run(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    /// The last logged row.
    pub fn final_row(&self) -> Option<&IterationRow> {
        self.rows.last()
    }

    /// Smallest `err_w` seen across the run, when a reference was supplied.
    pub fn min_err_w(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.err_w)
            .min_by(|a, b| a.partial_cmp(b).expect("errors are finite"))
    }

    /// First iteration index whose relative gradient is at or below `tol`.
    pub fn cycles_to_r_grad(&self, tol: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.r_grad <= tol).map(|r| r.iter)
    }
}

/// Random rank-k initial guess: orthonormalized Gaussian factors with all
/// singular values equal to one, drawn reproducibly from `seed`.
pub fn initial_guess(grid: GridLevel, rank: usize, seed: u64) -> Result<FactoredMatrix> {
    let n = grid.n();
    if rank < 1 || rank > n {
        return Err(Error::Config(format!(
            "rank must lie in 1..={n} on a {n}-point grid, got {rank}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let u = crate::random::random_orthonormal(n, rank, &mut rng);
    let v = crate::random::random_orthonormal(n, rank, &mut rng);
    FactoredMatrix::new(u, DVector::from_element(rank, 1.0), v)
}

/// Extends `q`'s orthonormal columns by `extra` random directions from its
/// orthogonal complement (two projection passes, then QR).
fn orthonormal_extension(
    q: &DMatrix<f64>,
    extra: usize,
    rng: &mut impl rand::Rng,
) -> DMatrix<f64> {
    let g = random_dense(q.nrows(), extra, rng);
    let mut a = &g - q * (q.transpose() * &g);
    a = &a - q * (q.transpose() * &a);
    let qr = a.qr();
    let mut out = qr.q();
    let r = qr.r();
    for j in 0..extra {
        if r[(j, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}

/// Pads a factored iterate up to `target_rank` with random orthonormal
/// directions at singular value [`RANK_PAD_SCALE`] times the leading one,
/// preserving the represented matrix to that relative scale (the warm start
/// of the next rank-adaptive stage).
pub fn pad_rank(x: &FactoredMatrix, target_rank: usize, seed: u64) -> Result<FactoredMatrix> {
    let k = x.rank();
    if target_rank < k {
        return Err(Error::Config(format!(
            "cannot pad rank {k} down to {target_rank}; rank schedules must be nondecreasing"
        )));
    }
    if target_rank == k {
        return Ok(x.clone());
    }
    let max_rank = x.nrows().min(x.ncols());
    if target_rank > max_rank {
        return Err(Error::Config(format!(
            "target rank {target_rank} exceeds the matrix dimension bound {max_rank}"
        )));
    }
    let extra = target_rank - k;
    let mut rng = seeded_rng(seed);
    let u_ext = orthonormal_extension(x.u(), extra, &mut rng);
    let v_ext = orthonormal_extension(x.v(), extra, &mut rng);
    let pad_sigma = RANK_PAD_SCALE * x.s()[0];
    let mut entries: Vec<(f64, usize)> = (0..target_rank)
        .map(|j| {
            let sigma = if j < k { x.s()[j] } else { pad_sigma };
            (sigma, j)
        })
        .collect();
    // The padded value can land anywhere in the existing spectrum; restore
    // the nonincreasing order the factorization requires.
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("singular values are finite"));
    let n = x.nrows();
    let mut u = DMatrix::zeros(n, target_rank);
    let mut v = DMatrix::zeros(x.ncols(), target_rank);
    let mut s = DVector::zeros(target_rank);
    for (dst, &(sigma, src)) in entries.iter().enumerate() {
        s[dst] = sigma;
        if src < k {
            u.set_column(dst, &x.u().column(src));
            v.set_column(dst, &x.v().column(src));
        } else {
            u.set_column(dst, &u_ext.column(src - k));
            v.set_column(dst, &v_ext.column(src - k));
        }
    }
    FactoredMatrix::new(u, s, v)
}

/// One stage of a rank-adaptive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankStage {
    /// Manifold rank during this stage.
    pub rank: usize,
    /// Number of multilevel cycles to run before moving on.
    pub cycles: usize,
}

/// Runs the multilevel driver from a random initial guess drawn with
/// `cfg.seed`; see [`solve_with_reference`].
pub fn solve(
    stack: &LevelStack,
    x0: &FactoredMatrix,
    cfg: &CycleConfig,
) -> Result<(FactoredMatrix, ConvergenceRecord)> {
    solve_with_reference(stack, x0, cfg, None)
}

/// Repeats multilevel iterations from `x0` until the Riemannian gradient
/// norm has dropped below `grad_tol` relative to iteration 0, or
/// `max_cycles` is hit. When a dense reference solution is supplied, each
/// row also carries the relative error against it.
pub fn solve_with_reference(
    stack: &LevelStack,
    x0: &FactoredMatrix,
    cfg: &CycleConfig,
    reference: Option<&DenseSolution>,
) -> Result<(FactoredMatrix, ConvergenceRecord)> {
    cfg.validate()?;
    stack.check_matches(cfg)?;
    let start = Instant::now();
    let mut states = vec![LevelState::default(); stack.num_levels()];
    let mut tally = Tally::default();
    let mut record = ConvergenceRecord::default();
    let mut x = x0.clone();

    let gnorm0 = push_row(stack, &x, 0, tally.fevals, &start, reference, None, &mut record)?;
    record.grad_norm0 = gnorm0;
    let norm0 = if gnorm0 > 0.0 { gnorm0 } else { 1.0 };
    record.converged = gnorm0 <= 0.0;

    for iter in 1..=cfg.max_cycles {
        if record.converged {
            break;
        }
        let (next, _f_pre) = cycle_at(stack, 0, stack.finest(), x, cfg, &mut states, &mut tally)?;
        x = next;
        let gnorm = push_row(
            stack,
            &x,
            iter,
            tally.fevals,
            &start,
            reference,
            Some(norm0),
            &mut record,
        )?;
        if gnorm / norm0 <= cfg.grad_tol {
            record.converged = true;
        }
    }
    record.skipped_corrections = tally.skipped_corrections;
    record.stalled_smoothings = tally.stalled_smoothings;
    fill_err_f(&mut record);
    Ok((x, record))
}

/// Rank-adaptive driver: runs each schedule stage with `solve`'s cycle loop,
/// padding the previous stage's iterate up to the next rank as a warm start.
/// Iteration indices, evaluation counts, and wall time continue across
/// stages; `r_grad` stays normalized by the first stage's initial gradient.
pub fn rank_adaptive_solve(
    stack: &LevelStack,
    cfg: &CycleConfig,
    schedule: &[RankStage],
    reference: Option<&DenseSolution>,
) -> Result<(FactoredMatrix, ConvergenceRecord)> {
    cfg.validate()?;
    stack.check_matches(cfg)?;
    if schedule.is_empty() {
        return Err(Error::Config("rank schedule must not be empty".into()));
    }
    for w in schedule.windows(2) {
        if w[1].rank < w[0].rank {
            return Err(Error::Config(format!(
                "rank schedule must be nondecreasing, got {} after {}",
                w[1].rank, w[0].rank
            )));
        }
    }
    if schedule.iter().any(|s| s.cycles == 0) {
        return Err(Error::Config("every schedule stage needs at least one cycle".into()));
    }

    let start = Instant::now();
    let mut states = vec![LevelState::default(); stack.num_levels()];
    let mut tally = Tally::default();
    let mut record = ConvergenceRecord::default();
    let mut x = initial_guess(stack.finest().grid(), schedule[0].rank, cfg.seed)?;

    let gnorm0 = push_row(stack, &x, 0, tally.fevals, &start, reference, None, &mut record)?;
    record.grad_norm0 = gnorm0;
    let norm0 = if gnorm0 > 0.0 { gnorm0 } else { 1.0 };
    record.converged = gnorm0 <= 0.0;

    let mut iter = 0usize;
    'stages: for (stage_index, stage) in schedule.iter().enumerate() {
        if x.rank() < stage.rank {
            x = pad_rank(&x, stage.rank, cfg.seed.wrapping_add(1 + stage_index as u64))?;
        }
        for _ in 0..stage.cycles {
            if record.converged {
                break 'stages;
            }
            iter += 1;
            let (next, _) = cycle_at(stack, 0, stack.finest(), x, cfg, &mut states, &mut tally)?;
            x = next;
            let gnorm = push_row(
                stack,
                &x,
                iter,
                tally.fevals,
                &start,
                reference,
                Some(norm0),
                &mut record,
            )?;
            if gnorm / norm0 <= cfg.grad_tol {
                record.converged = true;
            }
        }
    }
    record.skipped_corrections = tally.skipped_corrections;
    record.stalled_smoothings = tally.stalled_smoothings;
    fill_err_f(&mut record);
    Ok((x, record))
}

/// Evaluates the finest-level diagnostics at `x` and appends a row.
/// Returns the absolute gradient norm.
#[allow(clippy::too_many_arguments)]
fn push_row(
    stack: &LevelStack,
    x: &FactoredMatrix,
    iter: usize,
    fevals: usize,
    start: &Instant,
    reference: Option<&DenseSolution>,
    norm0: Option<f64>,
    record: &mut ConvergenceRecord,
) -> Result<f64> {
    let problem = stack.finest();
    let f = problem.value(x)?;
    let grad_norm = riemannian_gradient(x, &problem.euclidean_gradient(x)?)?.norm();
    let residual = problem.scaled_residual(x)?;
    let residual_bw = problem.residual_bw(x)?;
    let err_w_value = reference.map(|d| err_w(x, d)).transpose()?;
    let r_grad = match norm0 {
        Some(n0) => grad_norm / n0,
        None => {
            if grad_norm > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    };
    record.rows.push(IterationRow {
        iter,
        f,
        err_f: f64::NAN,
        grad_norm,
        r_grad,
        err_w: err_w_value,
        residual,
        residual_bw,
        rank: x.rank(),
        fevals,
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(grad_norm)
}

/// Fills the relative objective gap against the run's final value.
fn fill_err_f(record: &mut ConvergenceRecord) {
    let Some(f_ref) = record.rows.last().map(|r| r.f) else {
        return;
    };
    let denom = f_ref.abs().max(f64::MIN_POSITIVE);
    for row in &mut record.rows {
        row.err_f = (row.f - f_ref).abs() / denom;
    }
}
