//! Embedded-submanifold geometry of rank-k matrices.
//!
//! At a point `X = U diag(S) Vᵀ`, a tangent vector is parametrized as
//! `ξ = U M Vᵀ + U_p Vᵀ + U V_pᵀ` with the gauge conditions `UᵀU_p = 0`,
//! `VᵀV_p = 0`. This module provides the projection onto the tangent space,
//! the orthographic retraction and its explicit inverse, tangent arithmetic,
//! and the factored derivative of the retraction curve `t ↦ R_X(tη)` that the
//! line search differentiates along. All operations are O(nk²)-class and
//! never materialize an n×n array.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factored::{recompress, FactoredMatrix, RawFactored};

/// Relative singular-value threshold below which `Σ + tM` is declared
/// singular and the retraction refuses the step.
pub const RETRACTION_DOMAIN_TOL: f64 = 1e-14;

/// A tangent vector at a rank-k point `X = U diag(S) Vᵀ`, stored as the core
/// `M` (k×k) and the orthogonal complements `U_p` (m×k), `V_p` (n×k) with
/// `UᵀU_p = VᵀV_p = 0`. Its dense value is `U M Vᵀ + U_p Vᵀ + U V_pᵀ`.
///
/// The vector remembers a fingerprint of its base point; every binary
/// operation checks it, so vectors anchored at different points (or different
/// grid levels) cannot be combined silently.
#[derive(Debug, Clone)]
pub struct TangentVector {
    m: DMatrix<f64>,
    up: DMatrix<f64>,
    vp: DMatrix<f64>,
    base_fp: u64,
}

impl TangentVector {
    /// Builds a tangent vector at `base` from its components, re-enforcing
    /// the gauge conditions with one projection pass (`U_p ← U_p − U(UᵀU_p)`,
    /// likewise `V_p`). Gauge drift accumulates over repeated transfers, so
    /// every construction from raw components passes through here.
    pub fn new(
        base: &FactoredMatrix,
        m: DMatrix<f64>,
        up: DMatrix<f64>,
        vp: DMatrix<f64>,
    ) -> Result<Self> {
        let k = base.rank();
        if m.nrows() != k || m.ncols() != k || up.ncols() != k || vp.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "TangentVector::new",
                expected: format!("M {k}x{k}, U_p ?x{k}, V_p ?x{k}"),
                found: format!(
                    "M {}x{}, U_p {}x{}, V_p {}x{}",
                    m.nrows(),
                    m.ncols(),
                    up.nrows(),
                    up.ncols(),
                    vp.nrows(),
                    vp.ncols()
                ),
            });
        }
        if up.nrows() != base.nrows() || vp.nrows() != base.ncols() {
            return Err(Error::DimensionMismatch {
                context: "TangentVector::new",
                expected: format!("U_p {}x{k}, V_p {}x{k}", base.nrows(), base.ncols()),
                found: format!("U_p {}x{k}, V_p {}x{k}", up.nrows(), vp.nrows()),
            });
        }
        let up = &up - base.u() * (base.u().transpose() * &up);
        let vp = &vp - base.v() * (base.v().transpose() * &vp);
        Ok(Self {
            m,
            up,
            vp,
            base_fp: base.fingerprint(),
        })
    }

    /// The zero vector of the tangent space at `base`.
    pub fn zero(base: &FactoredMatrix) -> Self {
        let k = base.rank();
        Self {
            m: DMatrix::zeros(k, k),
            up: DMatrix::zeros(base.nrows(), k),
            vp: DMatrix::zeros(base.ncols(), k),
            base_fp: base.fingerprint(),
        }
    }

    /// Internal constructor for components already known to satisfy the
    /// gauge (linear combinations of gauged vectors cannot drift).
    fn from_gauged(m: DMatrix<f64>, up: DMatrix<f64>, vp: DMatrix<f64>, base_fp: u64) -> Self {
        Self { m, up, vp, base_fp }
    }

    /// Core block `M` (k×k).
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Left complement block `U_p` (m×k), orthogonal to the base's `U`.
    pub fn up(&self) -> &DMatrix<f64> {
        &self.up
    }

    /// Right complement block `V_p` (n×k), orthogonal to the base's `V`.
    pub fn vp(&self) -> &DMatrix<f64> {
        &self.vp
    }

    /// Whether this vector was constructed at `base` (fingerprint match).
    pub fn is_based_at(&self, base: &FactoredMatrix) -> bool {
        self.base_fp == base.fingerprint()
    }

    /// Frobenius norm; by the gauge conditions this is
    /// `sqrt(‖M‖² + ‖U_p‖² + ‖V_p‖²)`.
    pub fn norm(&self) -> f64 {
        (self.m.norm_squared() + self.up.norm_squared() + self.vp.norm_squared()).sqrt()
    }

    /// Scales every component by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_gauged(
            self.m.clone().scale(c),
            self.up.clone().scale(c),
            self.vp.clone().scale(c),
            self.base_fp,
        )
    }

    /// The dense value `U M Vᵀ + U_p Vᵀ + U V_pᵀ` as a width-2k raw product
    /// `[U U_p] [[M, I], [I, 0]] [V V_p]ᵀ`. The base must be the anchor the
    /// vector was constructed at.
    pub fn as_raw(&self, base: &FactoredMatrix) -> Result<RawFactored> {
        self.check_base(base, "TangentVector::as_raw")?;
        let k = base.rank();
        let m_rows = base.nrows();
        let n_rows = base.ncols();
        let mut a = DMatrix::zeros(m_rows, 2 * k);
        a.view_mut((0, 0), (m_rows, k)).copy_from(base.u());
        a.view_mut((0, k), (m_rows, k)).copy_from(&self.up);
        let mut b = DMatrix::zeros(n_rows, 2 * k);
        b.view_mut((0, 0), (n_rows, k)).copy_from(base.v());
        b.view_mut((0, k), (n_rows, k)).copy_from(&self.vp);
        let mut d = DMatrix::zeros(2 * k, 2 * k);
        d.view_mut((0, 0), (k, k)).copy_from(&self.m);
        for i in 0..k {
            d[(i, k + i)] = 1.0;
            d[(k + i, i)] = 1.0;
        }
        RawFactored::new(a, d, b)
    }

    /// Dense value of the vector (subject to the dense cap).
    pub fn to_dense(&self, base: &FactoredMatrix) -> Result<DMatrix<f64>> {
        self.as_raw(base)?.to_dense()
    }

    fn check_base(&self, base: &FactoredMatrix, context: &'static str) -> Result<()> {
        if !self.is_based_at(base) {
            return Err(Error::BaseMismatch { context });
        }
        Ok(())
    }
}

/// Orthogonal projection of `Z` onto the tangent space at `X`:
/// `M = UᵀZV`, `U_p = (I − UUᵀ)ZV`, `V_p = (I − VVᵀ)ZᵀU`.
/// Cost O(n·k·r) for a width-r raw `Z`; `Z` is never densified.
pub fn project(x: &FactoredMatrix, z: &RawFactored) -> Result<TangentVector> {
    if z.nrows() != x.nrows() || z.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "project",
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", z.nrows(), z.ncols()),
        });
    }
    // ZV = A (D (BᵀV)) and ZᵀU = B (Dᵀ (AᵀU)); all intermediates are r×k.
    let zv = &z.a * (&z.d * (z.b.transpose() * x.v()));
    let ztu = &z.b * (z.d.transpose() * (z.a.transpose() * x.u()));
    let m = x.u().transpose() * &zv;
    let up = &zv - x.u() * &m;
    let vp = &ztu - x.v() * m.transpose();
    // Components are constructed orthogonal up to rounding; the constructor
    // re-enforces the gauge once more.
    TangentVector::new(x, m, up, vp)
}

/// Riemannian gradient: the projection of the Euclidean gradient onto the
/// tangent space at `X`. The norm of the result is the first-order
/// stationarity measure reported by the solvers.
pub fn riemannian_gradient(x: &FactoredMatrix, euclid_grad: &RawFactored) -> Result<TangentVector> {
    project(x, euclid_grad)
}

/// Orthographic retraction: with `S₁ = Σ + M`,
/// `R_X(ξ) = [U S₁ + U_p] S₁⁻¹ [S₁ Vᵀ + V_pᵀ]`, renormalized to compact SVD
/// form at rank exactly k (generically). Errors with
/// [`Error::RetractionDomain`] when `S₁` is numerically singular — the step
/// left the retraction's domain and the caller must shrink it.
pub fn retract(x: &FactoredMatrix, xi: &TangentVector) -> Result<FactoredMatrix> {
    if !xi.is_based_at(x) {
        return Err(Error::BaseMismatch { context: "retract" });
    }
    if xi.norm() == 0.0 {
        return Ok(x.clone());
    }
    let k = x.rank();
    let mut s1 = xi.m().clone();
    for i in 0..k {
        s1[(i, i)] += x.s()[i];
    }
    let s1_inv = invert_core(&s1, "retract")?;
    let a = x.u() * &s1 + xi.up();
    let b = x.v() * s1.transpose() + xi.vp();
    let raw = RawFactored::new(a, s1_inv, b)?;
    // Renormalize keeping every numerically nonzero singular value up to
    // rank k: a relative cutoff here could spuriously collapse the rank when
    // the spectrum spans many orders of magnitude near convergence.
    recompress(&raw, Some(k), 0.0)
}

/// Inverse of the orthographic retraction: `R_X⁻¹(Y) = P_{T_X}(Y) − X`, i.e.
/// `M = UᵀYV − Σ`, `U_p = (I − UUᵀ)YV`, `V_p = (I − VVᵀ)YᵀU`. Defined for
/// every `Y`; only the round-trip property with [`retract`] is local.
pub fn inverse_retract(x: &FactoredMatrix, y: &FactoredMatrix) -> Result<TangentVector> {
    if y.nrows() != x.nrows() || y.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "inverse_retract",
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let yv = y.u() * (DMatrix::from_diagonal(y.s()) * (y.v().transpose() * x.v()));
    let ytu = y.v() * (DMatrix::from_diagonal(y.s()) * (y.u().transpose() * x.u()));
    let uyv = x.u().transpose() * &yv;
    let mut m = uyv.clone();
    for i in 0..x.rank() {
        m[(i, i)] -= x.s()[i];
    }
    let up = &yv - x.u() * &uyv;
    let vp = &ytu - x.v() * uyv.transpose();
    TangentVector::new(x, m, up, vp)
}

/// Linear combination `a·ξ + b·η` of two tangent vectors at the same base,
/// carried out componentwise in the factored format.
pub fn tangent_axpy(
    a: f64,
    xi: &TangentVector,
    b: f64,
    eta: &TangentVector,
) -> Result<TangentVector> {
    if xi.base_fp != eta.base_fp {
        return Err(Error::BaseMismatch {
            context: "tangent_axpy",
        });
    }
    Ok(TangentVector::from_gauged(
        xi.m() * a + eta.m() * b,
        xi.up() * a + eta.up() * b,
        xi.vp() * a + eta.vp() * b,
        xi.base_fp,
    ))
}

/// Inner product of two tangent vectors at the same base. The gauge
/// conditions make the cross terms vanish, so this is the sum of the
/// componentwise Frobenius inner products.
pub fn tangent_inner(xi: &TangentVector, eta: &TangentVector) -> Result<f64> {
    if xi.base_fp != eta.base_fp {
        return Err(Error::BaseMismatch {
            context: "tangent_inner",
        });
    }
    Ok(xi.m().dot(eta.m()) + xi.up().dot(eta.up()) + xi.vp().dot(eta.vp()))
}

/// Norm of a tangent vector; equals `sqrt(tangent_inner(ξ, ξ))`.
pub fn tangent_norm(xi: &TangentVector) -> f64 {
    xi.norm()
}

/// Factored derivative of the retraction curve: returns `(G, H)`, both n×3k,
/// with `G Hᵀ = d/dt R_X(tη)` at the given `t`.
///
/// With `S_t = Σ + tM`, `W = U + t U_p S_t⁻¹` and `W̃ = V + t V_p S_t⁻ᵀ`:
/// `G = [−W M | W | U M + U_p]`, `H = [W̃ | V Mᵀ + V_p | W̃]`.
/// At `t = 0` this reduces to `G Hᵀ = η`, the first-order retraction
/// property. Errors when `S_t` is numerically singular.
pub fn retraction_curve_factors(
    x: &FactoredMatrix,
    eta: &TangentVector,
    t: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !eta.is_based_at(x) {
        return Err(Error::BaseMismatch {
            context: "retraction_curve_factors",
        });
    }
    let k = x.rank();
    let mut st = eta.m().clone().scale(t);
    for i in 0..k {
        st[(i, i)] += x.s()[i];
    }
    let st_inv = invert_core(&st, "retraction_curve_factors")?;
    let w = x.u() + eta.up() * &st_inv * t;
    let w_tilde = x.v() + eta.vp() * st_inv.transpose() * t;
    let m_rows = x.nrows();
    let n_rows = x.ncols();
    let mut g = DMatrix::zeros(m_rows, 3 * k);
    g.view_mut((0, 0), (m_rows, k)).copy_from(&(-(&w * eta.m())));
    g.view_mut((0, k), (m_rows, k)).copy_from(&w);
    g.view_mut((0, 2 * k), (m_rows, k))
        .copy_from(&(x.u() * eta.m() + eta.up()));
    let mut h = DMatrix::zeros(n_rows, 3 * k);
    h.view_mut((0, 0), (n_rows, k)).copy_from(&w_tilde);
    h.view_mut((0, k), (n_rows, k))
        .copy_from(&(x.v() * eta.m().transpose() + eta.vp()));
    h.view_mut((0, 2 * k), (n_rows, k)).copy_from(&w_tilde);
    Ok((g, h))
}

/// Inverts the k×k core `Σ + tM`, first checking its extreme singular values
/// against [`RETRACTION_DOMAIN_TOL`].
fn invert_core(s1: &DMatrix<f64>, _context: &'static str) -> Result<DMatrix<f64>> {
    let sv: DVector<f64> = s1.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > RETRACTION_DOMAIN_TOL * sigma_max) || sigma_max == 0.0 {
        return Err(Error::RetractionDomain {
            sigma_min,
            sigma_max,
        });
    }
    s1.clone().try_inverse().ok_or(Error::RetractionDomain {
        sigma_min,
        sigma_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_dense, random_factored, seeded_rng};
    use rand::Rng;

    /// Random tangent vector at `x` obtained by projecting a random raw
    /// product, then rescaled to the requested norm.
    fn random_tangent(x: &FactoredMatrix, norm: f64, rng: &mut impl Rng) -> TangentVector {
        let r = x.rank().min(4);
        let z = RawFactored::new(
            random_dense(x.nrows(), r, rng),
            random_dense(r, r, rng),
            random_dense(x.ncols(), r, rng),
        )
        .unwrap();
        let xi = project(x, &z).unwrap();
        xi.scaled(norm / xi.norm())
    }

    /// Dense tangent-space projector oracle:
    /// `P(Z) = P_U Z P_V + (I − P_U) Z P_V + P_U Z (I − P_V)`.
    fn dense_project(x: &FactoredMatrix, z: &DMatrix<f64>) -> DMatrix<f64> {
        let pu = x.u() * x.u().transpose();
        let pv = x.v() * x.v().transpose();
        let eye_m = DMatrix::identity(x.nrows(), x.nrows());
        let eye_n = DMatrix::identity(x.ncols(), x.ncols());
        &pu * z * &pv + (&eye_m - &pu) * z * &pv + &pu * z * (&eye_n - &pv)
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = seeded_rng(101);
        let x = random_factored(10, 9, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, 1.0, &mut rng);
        let again = project(&x, &xi.as_raw(&x).unwrap()).unwrap();
        let diff = tangent_axpy(1.0, &xi, -1.0, &again).unwrap();
        assert!(
            diff.norm() <= 1e-12,
            "projecting a tangent vector moved it by {:e}",
            diff.norm()
        );
    }

    #[test]
    fn projection_of_the_base_point_is_diagonal() {
        let mut rng = seeded_rng(103);
        let x = random_factored(8, 8, 3, &mut rng).unwrap();
        let xi = project(&x, &x.as_raw()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { x.s()[i] } else { 0.0 };
                assert!(
                    (xi.m()[(i, j)] - target).abs() <= 1e-13,
                    "M[({i},{j})] = {} but expected {target}",
                    xi.m()[(i, j)]
                );
            }
        }
        assert!(xi.up().norm() <= 1e-13, "U_p should vanish for Z = X");
        assert!(xi.vp().norm() <= 1e-13, "V_p should vanish for Z = X");
    }

    #[test]
    fn projection_matches_dense_oracle() {
        let mut rng = seeded_rng(107);
        let x = random_factored(10, 10, 3, &mut rng).unwrap();
        let z = RawFactored::new(
            random_dense(10, 4, &mut rng),
            random_dense(4, 4, &mut rng),
            random_dense(10, 4, &mut rng),
        )
        .unwrap();
        let xi = project(&x, &z).unwrap();
        let expected = dense_project(&x, &z.to_dense().unwrap());
        let err = (xi.to_dense(&x).unwrap() - &expected).norm();
        assert!(err <= 1e-12, "projection diverged from dense oracle by {err:e}");
    }

    #[test]
    fn projection_is_self_adjoint() {
        let mut rng = seeded_rng(109);
        let x = random_factored(12, 11, 3, &mut rng).unwrap();
        for _ in 0..5 {
            let z = random_dense(12, 11, &mut rng);
            let y = random_dense(12, 11, &mut rng);
            let pz = dense_project(&x, &z);
            let py = dense_project(&x, &y);
            let lhs = pz.dot(&y);
            let rhs = z.dot(&py);
            assert!(
                (lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()),
                "⟨P(Z), Y⟩ = {lhs} but ⟨Z, P(Y)⟩ = {rhs}"
            );
        }
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let mut rng = seeded_rng(113);
        let x = random_factored(7, 7, 2, &mut rng).unwrap();
        let zero = RawFactored::new(
            DMatrix::zeros(7, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(7, 2),
        )
        .unwrap();
        let g = riemannian_gradient(&x, &zero).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn retract_at_zero_returns_the_base() {
        let mut rng = seeded_rng(127);
        let x = random_factored(9, 8, 3, &mut rng).unwrap();
        let y = retract(&x, &TangentVector::zero(&x)).unwrap();
        assert_eq!(x.u(), y.u(), "retracting the zero vector must not move U");
        assert_eq!(x.s(), y.s());
        assert_eq!(x.v(), y.v());
    }

    #[test]
    fn full_rank_retraction_is_translation() {
        // For square k = n the manifold is (an open subset of) the whole
        // space and the retraction reduces to X + ξ.
        let mut rng = seeded_rng(131);
        let x = random_factored(5, 5, 5, &mut rng).unwrap();
        let xi = random_tangent(&x, 0.05 * x.s()[4], &mut rng);
        let y = retract(&x, &xi).unwrap();
        let expected = x.to_dense().unwrap() + xi.to_dense(&x).unwrap();
        let err = (y.to_dense().unwrap() - expected).norm();
        assert!(err <= 1e-12, "full-rank retraction is off by {err:e}");
    }

    #[test]
    fn retraction_round_trips_small_steps() {
        let mut rng = seeded_rng(137);
        let x = random_factored(10, 9, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, 0.01 * x.s()[2], &mut rng);
        let y = retract(&x, &xi).unwrap();
        assert_eq!(y.rank(), 3, "generic retraction preserves the rank");
        let back = inverse_retract(&x, &y).unwrap();
        let diff = tangent_axpy(1.0, &back, -1.0, &xi).unwrap();
        assert!(
            diff.norm() <= 1e-10,
            "inverse retraction missed the original step by {:e}",
            diff.norm()
        );
    }

    #[test]
    fn round_trip_error_is_relatively_small_up_to_a_tenth_of_sigma_min() {
        let mut rng = seeded_rng(139);
        let x = random_factored(12, 12, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, 0.1 * x.s()[2], &mut rng);
        let back = inverse_retract(&x, &retract(&x, &xi).unwrap()).unwrap();
        let diff = tangent_axpy(1.0, &back, -1.0, &xi).unwrap();
        assert!(
            diff.norm() <= 1e-9 * xi.norm(),
            "round trip error {:e} exceeds 1e-9 of the step norm {:e}",
            diff.norm(),
            xi.norm()
        );
    }

    #[test]
    fn inverse_retract_of_the_base_is_zero() {
        let mut rng = seeded_rng(149);
        let x = random_factored(8, 7, 2, &mut rng).unwrap();
        let xi = inverse_retract(&x, &x).unwrap();
        assert!(xi.norm() <= 1e-13 * x.norm(), "R_X⁻¹(X) = {:e}", xi.norm());
    }

    #[test]
    fn inverse_retract_matches_dense_oracle() {
        let mut rng = seeded_rng(151);
        let x = random_factored(10, 10, 3, &mut rng).unwrap();
        let y = random_factored(10, 10, 4, &mut rng).unwrap();
        let xi = inverse_retract(&x, &y).unwrap();
        let expected = dense_project(&x, &y.to_dense().unwrap()) - x.to_dense().unwrap();
        let err = (xi.to_dense(&x).unwrap() - &expected).norm();
        assert!(err <= 1e-12 * (1.0 + expected.norm()), "dense oracle disagrees by {err:e}");
    }

    #[test]
    fn axpy_combines_componentwise() {
        let mut rng = seeded_rng(157);
        let x = random_factored(9, 9, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, 1.0, &mut rng);
        let eta = random_tangent(&x, 2.0, &mut rng);
        // ξ − ξ = 0.
        let zero = tangent_axpy(1.0, &xi, -1.0, &xi).unwrap();
        assert_eq!(zero.norm(), 0.0);
        // 2ξ + 0η doubles.
        let doubled = tangent_axpy(2.0, &xi, 0.0, &eta).unwrap();
        assert!((doubled.norm() - 2.0 * xi.norm()).abs() <= 1e-13);
        // Dense check on a random combination.
        let combo = tangent_axpy(0.3, &xi, -1.7, &eta).unwrap();
        let expected = xi.to_dense(&x).unwrap() * 0.3 - eta.to_dense(&x).unwrap() * 1.7;
        let err = (combo.to_dense(&x).unwrap() - &expected).norm();
        assert!(err <= 1e-13 * (1.0 + expected.norm()), "dense axpy oracle disagrees by {err:e}");
    }

    #[test]
    fn axpy_rejects_mismatched_bases() {
        let mut rng = seeded_rng(163);
        let x = random_factored(8, 8, 2, &mut rng).unwrap();
        let y = random_factored(8, 8, 2, &mut rng).unwrap();
        let xi = random_tangent(&x, 1.0, &mut rng);
        let eta = random_tangent(&y, 1.0, &mut rng);
        assert!(matches!(
            tangent_axpy(1.0, &xi, 1.0, &eta),
            Err(Error::BaseMismatch { .. })
        ));
        assert!(matches!(
            tangent_inner(&xi, &eta),
            Err(Error::BaseMismatch { .. })
        ));
    }

    #[test]
    fn inner_product_and_norm_match_dense_values() {
        let mut rng = seeded_rng(167);
        let x = random_factored(10, 10, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, 1.3, &mut rng);
        let eta = random_tangent(&x, 0.4, &mut rng);
        let got = tangent_inner(&xi, &eta).unwrap();
        let expected = xi.to_dense(&x).unwrap().dot(&eta.to_dense(&x).unwrap());
        assert!(
            (got - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
            "inner product {got} vs dense {expected}"
        );
        let dense_norm = xi.to_dense(&x).unwrap().norm();
        assert!(
            (xi.norm() - dense_norm).abs() <= 1e-12 * dense_norm,
            "factored norm {} vs dense {dense_norm}",
            xi.norm()
        );
        // Consistency and Cauchy–Schwarz.
        let self_inner = tangent_inner(&xi, &xi).unwrap();
        assert!((xi.norm().powi(2) - self_inner).abs() <= 1e-13 * self_inner);
        assert!(got.abs() <= xi.norm() * eta.norm() * (1.0 + 1e-12));
        assert_eq!(tangent_inner(&TangentVector::zero(&x), &xi).unwrap(), 0.0);
    }

    #[test]
    fn curve_factors_at_zero_equal_the_direction() {
        let mut rng = seeded_rng(173);
        let x = random_factored(10, 9, 3, &mut rng).unwrap();
        let eta = random_tangent(&x, 0.7, &mut rng);
        let (g, h) = retraction_curve_factors(&x, &eta, 0.0).unwrap();
        assert_eq!(g.ncols(), 9, "G must have 3k columns");
        assert_eq!(h.ncols(), 9, "H must have 3k columns");
        let err = (&g * h.transpose() - eta.to_dense(&x).unwrap()).norm();
        assert!(err <= 1e-12, "dR_X(tη)/dt at t=0 missed η by {err:e}");
    }

    #[test]
    fn curve_factors_match_finite_differences() {
        let mut rng = seeded_rng(179);
        let x = random_factored(10, 10, 3, &mut rng).unwrap();
        let eta = random_tangent(&x, 0.05 * x.s()[2], &mut rng);
        let t = 0.3;
        let (g, h) = retraction_curve_factors(&x, &eta, t).unwrap();
        let step = 1e-6;
        let plus = retract(&x, &eta.scaled(t + step)).unwrap().to_dense().unwrap();
        let minus = retract(&x, &eta.scaled(t - step)).unwrap().to_dense().unwrap();
        let fd = (plus - minus) / (2.0 * step);
        let got = &g * h.transpose();
        let rel = (&got - &fd).norm() / fd.norm();
        assert!(rel <= 1e-5, "curve derivative off by relative {rel:e}");
    }

    #[test]
    fn retraction_refuses_singular_core() {
        let mut rng = seeded_rng(181);
        let x = random_factored(8, 8, 2, &mut rng).unwrap();
        // M = −Σ makes Σ + M exactly singular.
        let m = -DMatrix::from_diagonal(x.s());
        let xi = TangentVector::new(&x, m, DMatrix::zeros(8, 2), DMatrix::zeros(8, 2)).unwrap();
        match retract(&x, &xi) {
            Err(Error::RetractionDomain { sigma_min, .. }) => {
                assert!(sigma_min.abs() <= 1e-12);
            }
            other => panic!("expected RetractionDomain, got {other:?}"),
        }
    }

    #[test]
    fn retraction_is_first_order_accurate() {
        // ‖R_X(tξ) − X − tξ‖ must shrink like t² (slope ≈ 2 in log-log).
        let mut rng = seeded_rng(191);
        let x = random_factored(12, 12, 3, &mut rng).unwrap();
        let xi = random_tangent(&x, x.s()[2], &mut rng);
        let x_dense = x.to_dense().unwrap();
        let xi_dense = xi.to_dense(&x).unwrap();
        let ts = [1e-1, 1e-2, 1e-3];
        let errs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let y = retract(&x, &xi.scaled(t)).unwrap().to_dense().unwrap();
                (y - &x_dense - &xi_dense * t).norm()
            })
            .collect();
        let slope = (errs[0] / errs[2]).ln() / (ts[0] / ts[2]).ln();
        assert!(
            slope >= 1.9 && slope <= 2.5,
            "expected quadratic decay, got slope {slope:.3} from errors {errs:?}"
        );
    }

    #[test]
    fn gauge_is_reenforced_on_construction() {
        let mut rng = seeded_rng(193);
        let x = random_factored(9, 9, 3, &mut rng).unwrap();
        // Deliberately contaminate U_p with a component along U.
        let up = random_dense(9, 3, &mut rng) + x.u() * 0.5;
        let vp = random_dense(9, 3, &mut rng);
        let xi = TangentVector::new(&x, DMatrix::zeros(3, 3), up, vp).unwrap();
        let drift_u = (x.u().transpose() * xi.up()).norm();
        let drift_v = (x.v().transpose() * xi.vp()).norm();
        assert!(drift_u <= 1e-12, "UᵀU_p = {drift_u:e} after re-enforcement");
        assert!(drift_v <= 1e-12, "VᵀV_p = {drift_v:e} after re-enforcement");
    }
}
