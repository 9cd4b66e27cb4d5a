//! Dyadic grid hierarchy and level transfer of factored points and tangents.
//!
//! Level ℓ carries n = 2^ℓ − 1 interior points of the unit interval with mesh
//! width h = 2^{−ℓ} and homogeneous Dirichlet boundary. Matrices on a level
//! are n×n grid functions; transfers act as 1D operators applied on both
//! sides (`R X Rᵀ`, `P ξ Pᵀ`) but are always computed column-by-column on the
//! factors, never on a dense n×n value.
//!
//! Tangent vectors are always moved by orthogonal projection of the
//! transferred value onto the target tangent space (`P ∘ I`, computed on the
//! factors). Two wirings of the underlying 1D operators are supported:
//!
//! * [`TransferScheme::InjectionLinear`] — restriction by injection,
//!   prolongation by linear interpolation. The two tangent maps are not
//!   adjoint to each other under this pairing.
//! * [`TransferScheme::TransposePaired`] — prolongation is still linear
//!   interpolation `P`, but restriction is its exact transpose `Pᵀ` (twice
//!   the full-weighting stencil). With this wiring tangent restriction and
//!   interpolation are adjoint, which is what makes the coarse model's
//!   first-order coherence identity hold to rounding.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factored::{recompress, FactoredMatrix, RawFactored, RECOMPRESS_TOL};
use crate::geometry::{project, TangentVector};

/// One level of the dyadic grid hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLevel {
    level: u32,
}

impl GridLevel {
    /// Level ℓ ≥ 1, carrying n = 2^ℓ − 1 interior points.
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 || level > 30 {
            return Err(Error::Config(format!(
                "grid level must be in 1..=30, got {level}"
            )));
        }
        Ok(Self { level })
    }

    /// The level index ℓ.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Interior points per direction, n = 2^ℓ − 1.
    pub fn n(&self) -> usize {
        (1usize << self.level) - 1
    }

    /// Mesh width h = 2^{−ℓ}; satisfies h·(n+1) = 1.
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// The next coarser level, if one exists.
    pub fn coarser(&self) -> Option<GridLevel> {
        (self.level >= 2).then(|| GridLevel { level: self.level - 1 })
    }
}

/// Choice of restriction/prolongation stencils — see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferScheme {
    /// Injection down, linear interpolation up.
    #[default]
    InjectionLinear,
    /// Linear interpolation up, its exact transpose (2× full weighting)
    /// down. Restriction and interpolation of tangents are adjoint under
    /// this wiring.
    TransposePaired,
}

/// A fine/coarse level pair with a fixed transfer scheme.
#[derive(Debug, Clone, Copy)]
pub struct TransferPair {
    fine: GridLevel,
    coarse: GridLevel,
    scheme: TransferScheme,
}

impl TransferPair {
    /// The pair connecting `fine` to the next coarser level.
    pub fn down_from(fine: GridLevel, scheme: TransferScheme) -> Result<Self> {
        let coarse = fine.coarser().ok_or_else(|| {
            Error::Config(format!(
                "level {} has no coarser level to transfer to",
                fine.level()
            ))
        })?;
        Ok(Self { fine, coarse, scheme })
    }

    /// Fine side of the pair.
    pub fn fine(&self) -> GridLevel {
        self.fine
    }

    /// Coarse side of the pair.
    pub fn coarse(&self) -> GridLevel {
        self.coarse
    }

    /// The active scheme.
    pub fn scheme(&self) -> TransferScheme {
        self.scheme
    }

    /// 1D restriction of a fine grid function (length n → length N).
    pub fn restrict_1d(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len(), self.fine.n(), "restrict_1d")?;
        Ok(match self.scheme {
            TransferScheme::InjectionLinear => injection(v, self.coarse.n()),
            TransferScheme::TransposePaired => full_weighting_2x(v, self.coarse.n()),
        })
    }

    /// 1D linear interpolation of a coarse grid function (length N → n).
    pub fn interpolate_1d(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len(), self.coarse.n(), "interpolate_1d")?;
        Ok(linear_interpolation(v, self.fine.n()))
    }

    /// Moves a factored point down: `X_H = R X_h Rᵀ`, computed as the
    /// recompression of `(R U) diag(S) (R V)ᵀ`. If restriction makes some
    /// directions numerically dependent the output rank drops accordingly.
    pub fn restrict_point(&self, x: &FactoredMatrix) -> Result<FactoredMatrix> {
        self.check_square_point(x, self.fine.n(), "restrict_point")?;
        let raw = RawFactored::new(
            self.apply_restriction(x.u()),
            DMatrix::from_diagonal(x.s()),
            self.apply_restriction(x.v()),
        )?;
        recompress(&raw, Some(x.rank()), RECOMPRESS_TOL)
    }

    /// Moves a factored point up: `X_h = P X_H Pᵀ` in the same fashion.
    pub fn interpolate_point(&self, x: &FactoredMatrix) -> Result<FactoredMatrix> {
        self.check_square_point(x, self.coarse.n(), "interpolate_point")?;
        let raw = RawFactored::new(
            self.apply_prolongation(x.u()),
            DMatrix::from_diagonal(x.s()),
            self.apply_prolongation(x.v()),
        )?;
        recompress(&raw, Some(x.rank()), RECOMPRESS_TOL)
    }

    /// Moves a tangent vector down a level, from `from_fine` (its base) to
    /// the tangent space at `to_coarse`.
    pub fn restrict_tangent(
        &self,
        xi: &TangentVector,
        from_fine: &FactoredMatrix,
        to_coarse: &FactoredMatrix,
    ) -> Result<TangentVector> {
        if !xi.is_based_at(from_fine) {
            return Err(Error::BaseMismatch {
                context: "restrict_tangent",
            });
        }
        self.check_square_point(from_fine, self.fine.n(), "restrict_tangent (source)")?;
        self.check_square_point(to_coarse, self.coarse.n(), "restrict_tangent (target)")?;
        let raw = xi.as_raw(from_fine)?;
        let moved = RawFactored::new(
            self.apply_restriction(&raw.a),
            raw.d,
            self.apply_restriction(&raw.b),
        )?;
        project(to_coarse, &moved)
    }

    /// Moves a tangent vector up a level, from `from_coarse` (its base) to
    /// the tangent space at `to_fine`.
    pub fn interpolate_tangent(
        &self,
        xi: &TangentVector,
        from_coarse: &FactoredMatrix,
        to_fine: &FactoredMatrix,
    ) -> Result<TangentVector> {
        if !xi.is_based_at(from_coarse) {
            return Err(Error::BaseMismatch {
                context: "interpolate_tangent",
            });
        }
        self.check_square_point(from_coarse, self.coarse.n(), "interpolate_tangent (source)")?;
        self.check_square_point(to_fine, self.fine.n(), "interpolate_tangent (target)")?;
        let raw = xi.as_raw(from_coarse)?;
        let moved = RawFactored::new(
            self.apply_prolongation(&raw.a),
            raw.d,
            self.apply_prolongation(&raw.b),
        )?;
        project(to_fine, &moved)
    }

    fn apply_restriction(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let op = |v: &DVector<f64>| match self.scheme {
            TransferScheme::InjectionLinear => injection(v, self.coarse.n()),
            TransferScheme::TransposePaired => full_weighting_2x(v, self.coarse.n()),
        };
        apply_columns(m, self.coarse.n(), op)
    }

    fn apply_prolongation(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        apply_columns(m, self.fine.n(), |v| linear_interpolation(v, self.fine.n()))
    }

    /// Dense matrix form of the 1D restriction (N×n); for tests and oracles.
    pub fn dense_restriction(&self) -> DMatrix<f64> {
        operator_matrix(self.coarse.n(), self.fine.n(), |v| {
            self.restrict_1d(v).expect("basis vector has the right length")
        })
    }

    /// Dense matrix form of the 1D prolongation (n×N); for tests and oracles.
    pub fn dense_prolongation(&self) -> DMatrix<f64> {
        operator_matrix(self.fine.n(), self.coarse.n(), |v| {
            self.interpolate_1d(v).expect("basis vector has the right length")
        })
    }

    fn check_len(&self, got: usize, want: usize, context: &'static str) -> Result<()> {
        if got != want {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("length {want}"),
                found: format!("length {got}"),
            });
        }
        Ok(())
    }

    fn check_square_point(
        &self,
        x: &FactoredMatrix,
        n: usize,
        context: &'static str,
    ) -> Result<()> {
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }
}

/// Injection: the coarse node at x = (i+1)·H coincides with the fine node at
/// index 2i+1, whose value is copied.
fn injection(fine: &DVector<f64>, n_coarse: usize) -> DVector<f64> {
    DVector::from_fn(n_coarse, |i, _| fine[2 * i + 1])
}

/// Twice the full-weighting stencil, `out[i] = (in[2i] + 2·in[2i+1] +
/// in[2i+2]) / 2`; this is exactly the transpose of linear interpolation.
fn full_weighting_2x(fine: &DVector<f64>, n_coarse: usize) -> DVector<f64> {
    DVector::from_fn(n_coarse, |i, _| {
        0.5 * fine[2 * i] + fine[2 * i + 1] + 0.5 * fine[2 * i + 2]
    })
}

/// Linear interpolation: coarse values are copied to coinciding fine nodes
/// (odd indices) and averaged to the midpoints (even indices), with the
/// homogeneous boundary supplying zeros past the ends.
fn linear_interpolation(coarse: &DVector<f64>, n_fine: usize) -> DVector<f64> {
    let n_coarse = coarse.len();
    DVector::from_fn(n_fine, |j, _| {
        if j % 2 == 1 {
            coarse[(j - 1) / 2]
        } else {
            let left = if j == 0 { 0.0 } else { coarse[j / 2 - 1] };
            let right = if j / 2 == n_coarse { 0.0 } else { coarse[j / 2] };
            0.5 * (left + right)
        }
    })
}

/// Applies a 1D operator to every column of `m`.
fn apply_columns(
    m: &DMatrix<f64>,
    out_rows: usize,
    op: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(out_rows, m.ncols());
    for j in 0..m.ncols() {
        let col = DVector::from_column_slice(m.column(j).as_slice());
        out.column_mut(j).copy_from(&op(&col));
    }
    out
}

/// Materializes a linear operator by applying it to basis vectors.
fn operator_matrix(
    rows: usize,
    cols: usize,
    op: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let mut e = DVector::zeros(cols);
        e[j] = 1.0;
        out.column_mut(j).copy_from(&op(&e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::frob_inner;
    use crate::geometry::{tangent_axpy, tangent_inner};
    use crate::random::{random_dense, random_factored, seeded_rng};
    use rand::Rng;

    fn pair(level: u32, scheme: TransferScheme) -> TransferPair {
        TransferPair::down_from(GridLevel::new(level).unwrap(), scheme).unwrap()
    }

    fn random_tangent(x: &FactoredMatrix, rng: &mut impl Rng) -> TangentVector {
        let z = RawFactored::new(
            random_dense(x.nrows(), x.rank(), rng),
            random_dense(x.rank(), x.rank(), rng),
            random_dense(x.ncols(), x.rank(), rng),
        )
        .unwrap();
        project(x, &z).unwrap()
    }

    /// Dense tangent projector at `x`, for oracle assembly.
    fn dense_project(x: &FactoredMatrix, z: &DMatrix<f64>) -> DMatrix<f64> {
        let pu = x.u() * x.u().transpose();
        let pv = x.v() * x.v().transpose();
        z - (DMatrix::identity(x.nrows(), x.nrows()) - &pu)
            * z
            * (DMatrix::identity(x.ncols(), x.ncols()) - &pv)
    }

    #[test]
    fn grid_level_dimensions() {
        for level in 1..=12u32 {
            let g = GridLevel::new(level).unwrap();
            assert_eq!(g.n(), (1usize << level) - 1);
            assert_eq!(g.h() * (g.n() as f64 + 1.0), 1.0, "h·(n+1) = 1 at level {level}");
        }
        assert!(GridLevel::new(0).is_err());
        assert!(GridLevel::new(1).unwrap().coarser().is_none());
    }

    #[test]
    fn injection_samples_linear_functions_exactly() {
        let p = pair(4, TransferScheme::InjectionLinear);
        let (n, nc) = (p.fine().n(), p.coarse().n());
        let h = p.fine().h();
        let fine = DVector::from_fn(n, |j, _| (j as f64 + 1.0) * h);
        let coarse = p.restrict_1d(&fine).unwrap();
        let hc = p.coarse().h();
        for i in 0..nc {
            assert_eq!(coarse[i], (i as f64 + 1.0) * hc, "sampling f(x) = x must be exact");
        }
    }

    #[test]
    fn interpolation_reproduces_piecewise_linear_functions() {
        // Hat function peaking at x = 1/2 (a coarse node): linear on each
        // coarse cell and zero on the boundary, so interpolation is exact.
        let p = pair(4, TransferScheme::InjectionLinear);
        let hat = |x: f64| 2.0 * x.min(1.0 - x);
        let hc = p.coarse().h();
        let coarse = DVector::from_fn(p.coarse().n(), |i, _| hat((i as f64 + 1.0) * hc));
        let fine = p.interpolate_1d(&coarse).unwrap();
        let h = p.fine().h();
        for j in 0..p.fine().n() {
            let want = hat((j as f64 + 1.0) * h);
            assert!(
                (fine[j] - want).abs() <= 1e-15,
                "interpolated hat at node {j}: {} vs {want}",
                fine[j]
            );
        }
    }

    #[test]
    fn dense_forms_match_the_stencils() {
        let mut rng = seeded_rng(211);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let r = p.dense_restriction();
            let pr = p.dense_prolongation();
            let vf = random_dense(p.fine().n(), 1, &mut rng).column(0).into_owned();
            let vc = random_dense(p.coarse().n(), 1, &mut rng).column(0).into_owned();
            assert!((&r * &vf - p.restrict_1d(&vf).unwrap()).norm() <= 1e-14);
            assert!((&pr * &vc - p.interpolate_1d(&vc).unwrap()).norm() <= 1e-14);
        }
    }

    #[test]
    fn transpose_paired_restriction_is_the_interpolation_transpose() {
        let p = pair(5, TransferScheme::TransposePaired);
        let r = p.dense_restriction();
        let pr = p.dense_prolongation();
        assert_eq!(r, pr.transpose(), "restriction must equal prolongationᵀ entry for entry");
    }

    #[test]
    fn restrict_point_matches_dense_conjugation() {
        let mut rng = seeded_rng(223);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let x = random_factored(p.fine().n(), p.fine().n(), 3, &mut rng).unwrap();
            let xc = p.restrict_point(&x).unwrap();
            let r = p.dense_restriction();
            let expected = &r * x.to_dense().unwrap() * r.transpose();
            let err = (xc.to_dense().unwrap() - &expected).norm();
            assert!(
                err <= 1e-12 * (1.0 + expected.norm()),
                "restricted point off dense oracle by {err:e} ({scheme:?})"
            );
        }
    }

    #[test]
    fn interpolate_point_matches_dense_conjugation() {
        let mut rng = seeded_rng(227);
        let p = pair(4, TransferScheme::InjectionLinear);
        let xc = random_factored(p.coarse().n(), p.coarse().n(), 2, &mut rng).unwrap();
        let xf = p.interpolate_point(&xc).unwrap();
        let pr = p.dense_prolongation();
        let expected = &pr * xc.to_dense().unwrap() * pr.transpose();
        let err = (xf.to_dense().unwrap() - &expected).norm();
        assert!(err <= 1e-12 * (1.0 + expected.norm()), "interpolated point off by {err:e}");
    }

    #[test]
    fn restriction_preserves_rank_one_and_orthonormality() {
        let mut rng = seeded_rng(229);
        let p = pair(4, TransferScheme::InjectionLinear);
        let x = random_factored(p.fine().n(), p.fine().n(), 1, &mut rng).unwrap();
        let xc = p.restrict_point(&x).unwrap();
        assert_eq!(xc.rank(), 1, "rank cannot grow under restriction");
        // The validating constructor enforces orthonormality; double-check
        // the defect explicitly anyway.
        let defect = (xc.u().transpose() * xc.u() - DMatrix::identity(1, 1)).norm();
        assert!(defect <= 1e-12);
    }

    #[test]
    fn restriction_drops_rank_when_directions_vanish_on_the_coarse_grid() {
        // Second column supported on even fine indices only: injection
        // (which samples odd indices) sends it to zero.
        let p = pair(4, TransferScheme::InjectionLinear);
        let n = p.fine().n();
        let mut u = DMatrix::zeros(n, 2);
        u[(1, 0)] = 1.0; // odd index: survives injection
        u[(2, 1)] = 1.0; // even index: vanishes under injection
        let mut v = DMatrix::zeros(n, 2);
        v[(1, 0)] = 1.0;
        v[(2, 1)] = 1.0;
        let x = FactoredMatrix::new(u, DVector::from_vec(vec![2.0, 1.0]), v).unwrap();
        let xc = p.restrict_point(&x).unwrap();
        assert_eq!(xc.rank(), 1, "direction invisible to the coarse grid must drop");
    }

    #[test]
    fn injection_round_trip_is_identity_on_coarse_points() {
        let mut rng = seeded_rng(233);
        let p = pair(4, TransferScheme::InjectionLinear);
        let xc = random_factored(p.coarse().n(), p.coarse().n(), 2, &mut rng).unwrap();
        let back = p.restrict_point(&p.interpolate_point(&xc).unwrap()).unwrap();
        assert_eq!(back.rank(), xc.rank());
        let err = (back.to_dense().unwrap() - xc.to_dense().unwrap()).norm();
        assert!(
            err <= 1e-12 * xc.norm(),
            "injection of interpolant must reproduce coarse values, off by {err:e}"
        );
    }

    #[test]
    fn zero_tangent_transfers_to_zero() {
        let mut rng = seeded_rng(239);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let xf = random_factored(p.fine().n(), p.fine().n(), 2, &mut rng).unwrap();
            let xc = p.restrict_point(&xf).unwrap();
            let down = p
                .restrict_tangent(&TangentVector::zero(&xf), &xf, &xc)
                .unwrap();
            assert_eq!(down.norm(), 0.0);
            let up = p
                .interpolate_tangent(&TangentVector::zero(&xc), &xc, &xf)
                .unwrap();
            assert_eq!(up.norm(), 0.0);
        }
    }

    #[test]
    fn transferred_tangents_satisfy_the_gauge() {
        let mut rng = seeded_rng(241);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let xf = random_factored(p.fine().n(), p.fine().n(), 3, &mut rng).unwrap();
            let xc = p.restrict_point(&xf).unwrap();
            let xi = random_tangent(&xf, &mut rng);
            let down = p.restrict_tangent(&xi, &xf, &xc).unwrap();
            assert!(down.is_based_at(&xc));
            let gauge_u = (xc.u().transpose() * down.up()).norm();
            let gauge_v = (xc.v().transpose() * down.vp()).norm();
            assert!(gauge_u <= 1e-12, "UᵀU_p = {gauge_u:e} after restriction ({scheme:?})");
            assert!(gauge_v <= 1e-12, "VᵀV_p = {gauge_v:e} after restriction ({scheme:?})");
        }
    }

    #[test]
    fn tangent_transfers_are_linear() {
        let mut rng = seeded_rng(251);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let xf = random_factored(p.fine().n(), p.fine().n(), 3, &mut rng).unwrap();
            let xc = p.restrict_point(&xf).unwrap();
            let xi = random_tangent(&xf, &mut rng);
            let eta = random_tangent(&xf, &mut rng);
            let combo = tangent_axpy(0.7, &xi, -1.3, &eta).unwrap();
            let t_combo = p.restrict_tangent(&combo, &xf, &xc).unwrap();
            let t_parts = tangent_axpy(
                0.7,
                &p.restrict_tangent(&xi, &xf, &xc).unwrap(),
                -1.3,
                &p.restrict_tangent(&eta, &xf, &xc).unwrap(),
            )
            .unwrap();
            let diff = tangent_axpy(1.0, &t_combo, -1.0, &t_parts).unwrap();
            assert!(
                diff.norm() <= 1e-12 * (1.0 + t_combo.norm()),
                "transfer is not linear under {scheme:?}: {:e}",
                diff.norm()
            );
        }
    }

    #[test]
    fn tangent_transfers_match_the_dense_projector_oracle() {
        // Under either wiring the transferred tangent is the exact projection
        // of R ξ Rᵀ (resp. P ξ Pᵀ) onto the target tangent space.
        let mut rng = seeded_rng(263);
        for scheme in [TransferScheme::InjectionLinear, TransferScheme::TransposePaired] {
            let p = pair(4, scheme);
            let xf = random_factored(p.fine().n(), p.fine().n(), 3, &mut rng).unwrap();
            let xc = p.restrict_point(&xf).unwrap();
            let r = p.dense_restriction();
            let pr = p.dense_prolongation();

            let xi = random_tangent(&xf, &mut rng);
            let down = p.restrict_tangent(&xi, &xf, &xc).unwrap();
            let expected = dense_project(&xc, &(&r * xi.to_dense(&xf).unwrap() * r.transpose()));
            let err = (down.to_dense(&xc).unwrap() - &expected).norm();
            assert!(
                err <= 1e-11 * (1.0 + expected.norm()),
                "restriction off by {err:e} ({scheme:?})"
            );

            let eta = random_tangent(&xc, &mut rng);
            let up = p.interpolate_tangent(&eta, &xc, &xf).unwrap();
            let expected = dense_project(&xf, &(&pr * eta.to_dense(&xc).unwrap() * pr.transpose()));
            let err = (up.to_dense(&xf).unwrap() - &expected).norm();
            assert!(
                err <= 1e-11 * (1.0 + expected.norm()),
                "interpolation off by {err:e} ({scheme:?})"
            );
        }
    }

    #[test]
    fn transpose_paired_tangent_transfers_are_adjoint() {
        // ⟨R̃ζ, ξ⟩_H = ⟨ζ, P̃ξ⟩_h: the defining property of the pairing, and
        // the mechanism behind first-order coherence of the coarse model.
        let mut rng = seeded_rng(269);
        let p = pair(4, TransferScheme::TransposePaired);
        let xf = random_factored(p.fine().n(), p.fine().n(), 3, &mut rng).unwrap();
        let xc = p.restrict_point(&xf).unwrap();
        for _ in 0..3 {
            let zeta = random_tangent(&xf, &mut rng);
            let xi = random_tangent(&xc, &mut rng);
            let lhs = tangent_inner(&p.restrict_tangent(&zeta, &xf, &xc).unwrap(), &xi).unwrap();
            let rhs = tangent_inner(&zeta, &p.interpolate_tangent(&xi, &xc, &xf).unwrap()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()),
                "⟨R̃ζ, ξ⟩ = {lhs} but ⟨ζ, P̃ξ⟩ = {rhs}"
            );
        }
    }

    #[test]
    fn injection_tangent_transfers_are_not_adjoint() {
        // Documents why the transpose-paired wiring exists: with injection
        // down / linear interpolation up the two tangent maps fail to be
        // adjoint by an O(1) relative margin.
        let mut rng = seeded_rng(271);
        let p = pair(4, TransferScheme::InjectionLinear);
        let xf = random_factored(p.fine().n(), p.fine().n(), 2, &mut rng).unwrap();
        let xc = p.restrict_point(&xf).unwrap();
        let zeta = random_tangent(&xf, &mut rng);
        let xi = random_tangent(&xc, &mut rng);
        let lhs = tangent_inner(&p.restrict_tangent(&zeta, &xf, &xc).unwrap(), &xi).unwrap();
        let rhs = tangent_inner(&zeta, &p.interpolate_tangent(&xi, &xc, &xf).unwrap()).unwrap();
        assert!(
            (lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()),
            "expected a visible adjointness defect, got {lhs} vs {rhs}"
        );
    }

    #[test]
    fn transfers_stay_factored_at_scale() {
        // Level 13 is past the dense cap (n = 8191 > 4096): if any transfer
        // materialized an n×n array via to_dense it would error, and a dense
        // code path would be unmissably slow. The whole round trip must run
        // in factored O(nk²) time.
        let mut rng = seeded_rng(277);
        let p = pair(13, TransferScheme::InjectionLinear);
        let n = p.fine().n();
        let x = random_factored(n, n, 3, &mut rng).unwrap();
        let xc = p.restrict_point(&x).unwrap();
        assert_eq!(xc.nrows(), p.coarse().n());
        let xi = random_tangent(&x, &mut rng);
        let down = p.restrict_tangent(&xi, &x, &xc).unwrap();
        let _up = p.interpolate_tangent(&down, &xc, &x).unwrap();
        let one = frob_inner(&xc, &xc).unwrap();
        assert!(one.is_finite());
    }
}
