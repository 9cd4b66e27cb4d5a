//! The benchmark variational objectives in factored form.
//!
//! Both problems discretize a variational principle on the unit square with
//! homogeneous Dirichlet boundary, on the dyadic grids of [`crate::transfer`]:
//!
//! * **Lyapunov problem** — minimize
//!   `𝓕_h(W) = (h²/2)(‖L W‖² + ‖W Lᵀ‖² − 2⟨Γ, W⟩)`, whose Euclidean gradient
//!   `h²(AW + WA − Γ)` vanishes exactly at the solution of the Lyapunov
//!   equation `AW + WA = Γ`.
//! * **Cubic-nonlinearity problem** — the same Dirichlet energy plus
//!   `λ‖W‖²/2 + (λ/3)Σ w³` (all scaled by h²), whose gradient is
//!   `h²(AW + WA + λ W∘W + λW − Γ)`, the discretization of
//!   `−Δw + λw(w+1) = γ`.
//!
//! Here `A` is the 1D three-point stencil of `−d²/dx²` and `L` the (n+1)×n
//! forward-difference map with both boundary rows, so `LᵀL = A` exactly and
//! the displayed gradient is the exact gradient of the discrete objective.
//! Everything is evaluated on the factors; objectives cost O(nk·(k+k_γ)) and
//! gradients are returned as raw factored block concatenations without ever
//! forming an n×n array.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factored::{
    hadamard_square, raw_frob_norm, FactoredMatrix, RawFactored, RECOMPRESS_TOL,
};
use crate::transfer::GridLevel;

/// Number of separable terms in the right-hand side γ.
pub const GAMMA_RANK: usize = 5;

/// A differentiable objective over factored matrices, exposing the value and
/// the Euclidean gradient in raw factored form. The multilevel solver works
/// against this interface so that coarse surrogate models compose with the
/// native objectives.
pub trait CostFunction {
    /// Objective value at `x`.
    fn value(&self, x: &FactoredMatrix) -> Result<f64>;

    /// Euclidean gradient at `x` as a raw factored product.
    fn euclidean_gradient(&self, x: &FactoredMatrix) -> Result<RawFactored>;
}

/// Builds the rank-5 right-hand side
/// `γ(x, y) = e^{x − 2y} Σ_{j=1..5} 2^{j−1} sin(jπx) sin(jπy)`
/// sampled at the interior nodes, directly in separable form: column factors
/// `e^x sin(jπx)`, row factors `e^{−2y} sin(jπy)`, weights `2^{j−1}`,
/// renormalized to compact SVD form.
pub fn gamma_factored(grid: GridLevel) -> Result<FactoredMatrix> {
    let n = grid.n();
    let h = grid.h();
    let mut cols = DMatrix::zeros(n, GAMMA_RANK);
    let mut rows = DMatrix::zeros(n, GAMMA_RANK);
    let mut weights = DVector::zeros(GAMMA_RANK);
    for j in 0..GAMMA_RANK {
        let freq = (j + 1) as f64 * std::f64::consts::PI;
        for i in 0..n {
            let t = (i as f64 + 1.0) * h;
            cols[(i, j)] = t.exp() * (freq * t).sin();
            rows[(i, j)] = (-2.0 * t).exp() * (freq * t).sin();
        }
        weights[j] = (1u32 << j) as f64;
    }
    let raw = RawFactored::new(cols, DMatrix::from_diagonal(&weights), rows)?;
    crate::factored::recompress(&raw, Some(GAMMA_RANK), RECOMPRESS_TOL)
}

/// Applies the 1D second-difference stencil `A = (1/h²)·tridiag(−1, 2, −1)`
/// to every column of `m` (matrix-free; O(n·width)).
pub fn apply_neg_laplacian(m: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let inv_h2 = 1.0 / (h * h);
    let mut out = DMatrix::zeros(n, m.ncols());
    for j in 0..m.ncols() {
        for i in 0..n {
            let left = if i > 0 { m[(i - 1, j)] } else { 0.0 };
            let right = if i + 1 < n { m[(i + 1, j)] } else { 0.0 };
            out[(i, j)] = (2.0 * m[(i, j)] - left - right) * inv_h2;
        }
    }
    out
}

/// Applies the (n+1)×n forward-difference map `L` (scaled by 1/h, both
/// boundary rows included) to every column of `m`. By construction
/// `LᵀL = A` exactly.
pub fn apply_forward_difference(m: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let inv_h = 1.0 / h;
    let mut out = DMatrix::zeros(n + 1, m.ncols());
    for j in 0..m.ncols() {
        out[(0, j)] = m[(0, j)] * inv_h;
        for i in 1..n {
            out[(i, j)] = (m[(i, j)] - m[(i - 1, j)]) * inv_h;
        }
        out[(n, j)] = -m[(n - 1, j)] * inv_h;
    }
    out
}

/// Spectral norm of the stencil `A`: the exact extreme eigenvalue
/// `(2 − 2cos(nπh)) / h²` of the tridiagonal second-difference matrix.
pub fn a_operator_norm(grid: GridLevel) -> f64 {
    let h = grid.h();
    let n = grid.n() as f64;
    (2.0 - 2.0 * (n * std::f64::consts::PI * h).cos()) / (h * h)
}

/// The Lyapunov-type linear problem on one grid level.
#[derive(Debug, Clone)]
pub struct LyapunovProblem {
    grid: GridLevel,
    gamma: FactoredMatrix,
}

impl LyapunovProblem {
    /// Sets up the problem on `grid`, building γ in factored form.
    pub fn new(grid: GridLevel) -> Result<Self> {
        Ok(Self {
            grid,
            gamma: gamma_factored(grid)?,
        })
    }

    /// The grid this instance is discretized on.
    pub fn grid(&self) -> GridLevel {
        self.grid
    }

    /// The factored right-hand side Γ.
    pub fn gamma(&self) -> &FactoredMatrix {
        &self.gamma
    }

    /// `𝓕_h(W) = (h²/2)(‖(LU)Σ‖² + ‖(LV)Σ‖² − 2·trace(Σ_γ(U_γᵀU)Σ(VᵀV_γ)))`.
    pub fn objective(&self, w: &FactoredMatrix) -> Result<f64> {
        self.check_grid(w, "lyapunov objective")?;
        let h = self.grid.h();
        let quad = dirichlet_energy(w, h);
        Ok(0.5 * h * h * (quad - 2.0 * gamma_inner(&self.gamma, w)))
    }

    /// Euclidean gradient `h²(AW + WA − Γ)` as the 3-block raw product
    /// `[AU, U, U_γ]·h²·blkdiag(Σ, Σ, −Σ_γ)·[V, AV, V_γ]ᵀ` (width 2k + k_γ).
    pub fn euclidean_gradient(&self, w: &FactoredMatrix) -> Result<RawFactored> {
        self.check_grid(w, "lyapunov gradient")?;
        let h2 = self.grid.h() * self.grid.h();
        Ok(residual_blocks_linear(w, &self.gamma, self.grid.h())
            .scale_core(h2)
            .into_raw())
    }

    /// Residual `r(W) = ‖AW + WA − Γ‖_F`, computed from the factored blocks
    /// by the QR-based norm (never densified).
    pub fn residual(&self, w: &FactoredMatrix) -> Result<f64> {
        self.check_grid(w, "lyapunov residual")?;
        let blocks = residual_blocks_linear(w, &self.gamma, self.grid.h());
        Ok(raw_frob_norm(&blocks.into_raw()))
    }

    /// Mesh-scaled residual `h²·r(W) = ‖h²(AW + WA − Γ)‖_F`, i.e. the
    /// Frobenius norm of the objective's Euclidean gradient. This is the
    /// scale on which the solver drivers report the `r` column: unlike the
    /// raw residual it is an honest discretization of `‖−Δw − γ‖_{L²(Ω²)}`
    /// and halves per refinement level at a fixed-rank optimum.
    pub fn scaled_residual(&self, w: &FactoredMatrix) -> Result<f64> {
        let h = self.grid.h();
        Ok(h * h * self.residual(w)?)
    }

    /// Backward-error relative residual
    /// `r_BW(W) = r(W) / (2‖A‖₂‖W‖_F + ‖Γ‖_F)`.
    pub fn residual_bw(&self, w: &FactoredMatrix) -> Result<f64> {
        let r = self.residual(w)?;
        Ok(r / (2.0 * a_operator_norm(self.grid) * w.norm() + self.gamma.norm()))
    }

    fn check_grid(&self, w: &FactoredMatrix, context: &'static str) -> Result<()> {
        check_on_grid(self.grid, w, context)
    }
}

/// The cubic-nonlinearity problem on one grid level.
#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    grid: GridLevel,
    gamma: FactoredMatrix,
    lambda: f64,
}

impl NonlinearProblem {
    /// Sets up the problem on `grid` with nonlinearity strength `lambda > 0`.
    pub fn new(grid: GridLevel, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "nonlinearity strength must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            grid,
            gamma: gamma_factored(grid)?,
            lambda,
        })
    }

    /// The grid this instance is discretized on.
    pub fn grid(&self) -> GridLevel {
        self.grid
    }

    /// The factored right-hand side Γ.
    pub fn gamma(&self) -> &FactoredMatrix {
        &self.gamma
    }

    /// The nonlinearity strength λ.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `𝓕_h(W) = (h²/2)(‖(LU)Σ‖² + ‖(LV)Σ‖² + λ‖Σ‖²
    ///            + (2/3)λ·trace(Σ(UᵀU_⊙)Σ_⊙(V_⊙ᵀV)) − 2⟨Γ, W⟩)`,
    /// with `W∘W = U_⊙Σ_⊙V_⊙ᵀ` formed by [`hadamard_square`].
    pub fn objective(&self, w: &FactoredMatrix) -> Result<f64> {
        self.check_grid(w, "nonlinear objective")?;
        let h = self.grid.h();
        let quad = dirichlet_energy(w, h);
        let sq = hadamard_square(w, RECOMPRESS_TOL)?;
        let norm_sq: f64 = w.s().iter().map(|s| s * s).sum();
        let cubic = crate::factored::frob_inner(w, &sq)?;
        Ok(0.5
            * h
            * h
            * (quad + self.lambda * norm_sq + (2.0 / 3.0) * self.lambda * cubic
                - 2.0 * gamma_inner(&self.gamma, w)))
    }

    /// Euclidean gradient `h²(AW + WA + λW∘W + λW − Γ)` as the 4-block raw
    /// product `[(A+λI)U, U, U_⊙, U_γ]·h²·blkdiag(Σ, Σ, λΣ_⊙, −Σ_γ)·
    /// [V, AV, V_⊙, V_γ]ᵀ` (width 2k + rank(W∘W) + k_γ).
    pub fn euclidean_gradient(&self, w: &FactoredMatrix) -> Result<RawFactored> {
        self.check_grid(w, "nonlinear gradient")?;
        let h2 = self.grid.h() * self.grid.h();
        Ok(self.residual_blocks(w)?.scale_core(h2).into_raw())
    }

    /// Residual `r(W) = ‖AW + WA + λW∘W + λW − Γ‖_F` via the QR-based norm.
    pub fn residual(&self, w: &FactoredMatrix) -> Result<f64> {
        self.check_grid(w, "nonlinear residual")?;
        Ok(raw_frob_norm(&self.residual_blocks(w)?.into_raw()))
    }

    /// Mesh-scaled residual `h²·r(W)`, the Frobenius norm of the objective's
    /// Euclidean gradient; see [`LyapunovProblem::scaled_residual`].
    pub fn scaled_residual(&self, w: &FactoredMatrix) -> Result<f64> {
        let h = self.grid.h();
        Ok(h * h * self.residual(w)?)
    }

    /// Backward-error relative residual, as for the linear problem with the
    /// λ-shifted operator norm `‖A + λI‖₂ = ‖A‖₂ + λ`.
    pub fn residual_bw(&self, w: &FactoredMatrix) -> Result<f64> {
        let r = self.residual(w)?;
        let shifted = a_operator_norm(self.grid) + self.lambda;
        Ok(r / (2.0 * shifted * w.norm() + self.gamma.norm()))
    }

    fn residual_blocks(&self, w: &FactoredMatrix) -> Result<ResidualBlocks> {
        let mut blocks = residual_blocks_linear(w, &self.gamma, self.grid.h());
        let k = w.rank();
        // Fold λW into the first block pair: (A + λI)U replaces AU.
        for j in 0..k {
            for i in 0..w.nrows() {
                let idx = (i, j);
                blocks.a[idx] += self.lambda * w.u()[idx];
            }
        }
        // Append the λ·W∘W block.
        let sq = hadamard_square(w, RECOMPRESS_TOL)?;
        blocks.push(
            sq.u().clone(),
            DMatrix::from_diagonal(&sq.s().clone().scale(self.lambda)),
            sq.v().clone(),
        );
        Ok(blocks)
    }

    fn check_grid(&self, w: &FactoredMatrix, context: &'static str) -> Result<()> {
        check_on_grid(self.grid, w, context)
    }
}

/// Either benchmark problem, with uniform access to residual diagnostics and
/// re-instantiation on other grid levels (used by the multilevel hierarchy).
#[derive(Debug, Clone)]
pub enum Problem {
    /// Lyapunov-type linear problem.
    Lyapunov(LyapunovProblem),
    /// Cubic-nonlinearity problem.
    Nonlinear(NonlinearProblem),
}

impl Problem {
    /// The Lyapunov problem on `grid`.
    pub fn lyapunov(grid: GridLevel) -> Result<Self> {
        Ok(Self::Lyapunov(LyapunovProblem::new(grid)?))
    }

    /// The cubic-nonlinearity problem on `grid`.
    pub fn nonlinear(grid: GridLevel, lambda: f64) -> Result<Self> {
        Ok(Self::Nonlinear(NonlinearProblem::new(grid, lambda)?))
    }

    /// The grid this instance lives on.
    pub fn grid(&self) -> GridLevel {
        match self {
            Self::Lyapunov(p) => p.grid(),
            Self::Nonlinear(p) => p.grid(),
        }
    }

    /// The same problem kind discretized natively on another grid level.
    pub fn at_level(&self, grid: GridLevel) -> Result<Self> {
        match self {
            Self::Lyapunov(_) => Self::lyapunov(grid),
            Self::Nonlinear(p) => Self::nonlinear(grid, p.lambda()),
        }
    }

    /// The factored right-hand side Γ on this level.
    pub fn gamma(&self) -> &FactoredMatrix {
        match self {
            Self::Lyapunov(p) => p.gamma(),
            Self::Nonlinear(p) => p.gamma(),
        }
    }

    /// Residual norm of the underlying equation at `w` (see the variants).
    pub fn residual(&self, w: &FactoredMatrix) -> Result<f64> {
        match self {
            Self::Lyapunov(p) => p.residual(w),
            Self::Nonlinear(p) => p.residual(w),
        }
    }

    /// Mesh-scaled residual `h²·r(w)`, the Euclidean-gradient norm.
    pub fn scaled_residual(&self, w: &FactoredMatrix) -> Result<f64> {
        match self {
            Self::Lyapunov(p) => p.scaled_residual(w),
            Self::Nonlinear(p) => p.scaled_residual(w),
        }
    }

    /// Backward-error relative residual at `w`.
    pub fn residual_bw(&self, w: &FactoredMatrix) -> Result<f64> {
        match self {
            Self::Lyapunov(p) => p.residual_bw(w),
            Self::Nonlinear(p) => p.residual_bw(w),
        }
    }
}

impl CostFunction for Problem {
    fn value(&self, x: &FactoredMatrix) -> Result<f64> {
        match self {
            Self::Lyapunov(p) => p.objective(x),
            Self::Nonlinear(p) => p.objective(x),
        }
    }

    fn euclidean_gradient(&self, x: &FactoredMatrix) -> Result<RawFactored> {
        match self {
            Self::Lyapunov(p) => p.euclidean_gradient(x),
            Self::Nonlinear(p) => p.euclidean_gradient(x),
        }
    }
}

/// Growable block accumulator for gradient/residual raw products:
/// `[A₁ A₂ …]·blkdiag(D₁, D₂, …)·[B₁ B₂ …]ᵀ`.
struct ResidualBlocks {
    a: DMatrix<f64>,
    d_blocks: Vec<DMatrix<f64>>,
    b: DMatrix<f64>,
}

impl ResidualBlocks {
    fn push(&mut self, a: DMatrix<f64>, d: DMatrix<f64>, b: DMatrix<f64>) {
        let (rows_a, old) = (self.a.nrows(), self.a.ncols());
        let add = a.ncols();
        let mut new_a = DMatrix::zeros(rows_a, old + add);
        new_a.view_mut((0, 0), (rows_a, old)).copy_from(&self.a);
        new_a.view_mut((0, old), (rows_a, add)).copy_from(&a);
        self.a = new_a;
        let rows_b = self.b.nrows();
        let mut new_b = DMatrix::zeros(rows_b, old + add);
        new_b.view_mut((0, 0), (rows_b, old)).copy_from(&self.b);
        new_b.view_mut((0, old), (rows_b, add)).copy_from(&b);
        self.b = new_b;
        self.d_blocks.push(d);
    }

    fn scale_core(self, c: f64) -> Self {
        Self {
            a: self.a,
            d_blocks: self.d_blocks.into_iter().map(|d| d.scale(c)).collect(),
            b: self.b,
        }
    }

    fn into_raw(self) -> RawFactored {
        let width = self.a.ncols();
        let mut d = DMatrix::zeros(width, width);
        let mut off = 0;
        for blk in &self.d_blocks {
            d.view_mut((off, off), (blk.nrows(), blk.ncols())).copy_from(blk);
            off += blk.nrows();
        }
        RawFactored {
            a: self.a,
            d,
            b: self.b,
        }
    }
}

/// The shared linear part `AW + WA − Γ` as blocks
/// `[AU, U, U_γ]·blkdiag(Σ, Σ, −Σ_γ)·[V, AV, V_γ]ᵀ`.
fn residual_blocks_linear(w: &FactoredMatrix, gamma: &FactoredMatrix, h: f64) -> ResidualBlocks {
    let k = w.rank();
    let kg = gamma.rank();
    let n = w.nrows();
    let au = apply_neg_laplacian(w.u(), h);
    let av = apply_neg_laplacian(w.v(), h);
    let mut a = DMatrix::zeros(n, 2 * k + kg);
    a.view_mut((0, 0), (n, k)).copy_from(&au);
    a.view_mut((0, k), (n, k)).copy_from(w.u());
    a.view_mut((0, 2 * k), (n, kg)).copy_from(gamma.u());
    let mut b = DMatrix::zeros(n, 2 * k + kg);
    b.view_mut((0, 0), (n, k)).copy_from(w.v());
    b.view_mut((0, k), (n, k)).copy_from(&av);
    b.view_mut((0, 2 * k), (n, kg)).copy_from(gamma.v());
    let sig = DMatrix::from_diagonal(w.s());
    ResidualBlocks {
        a,
        d_blocks: vec![
            sig.clone(),
            sig,
            DMatrix::from_diagonal(&(-gamma.s().clone())),
        ],
        b,
    }
}

/// `‖(LU)Σ‖² + ‖(LV)Σ‖²`, the Dirichlet-energy part of both objectives.
fn dirichlet_energy(w: &FactoredMatrix, h: f64) -> f64 {
    let lu = apply_forward_difference(w.u(), h);
    let lv = apply_forward_difference(w.v(), h);
    let mut acc = 0.0;
    for j in 0..w.rank() {
        let s2 = w.s()[j] * w.s()[j];
        acc += s2 * (lu.column(j).norm_squared() + lv.column(j).norm_squared());
    }
    acc
}

/// `⟨Γ, W⟩ = trace(Σ_γ (U_γᵀU) Σ (VᵀV_γ))` through k_γ×k intermediates.
fn gamma_inner(gamma: &FactoredMatrix, w: &FactoredMatrix) -> f64 {
    crate::factored::frob_inner(gamma, w).expect("gamma and W share the grid")
}

fn check_on_grid(grid: GridLevel, w: &FactoredMatrix, context: &'static str) -> Result<()> {
    let n = grid.n();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{n}x{n} on level {}", grid.level()),
            found: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    Ok(())
}
