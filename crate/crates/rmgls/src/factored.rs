//! Factored low-rank matrix algebra.
//!
//! Every matrix the solver touches is carried in the compact SVD-like form
//! `X = U diag(S) Vᵀ` with orthonormal `U` (m×k), `V` (n×k) and positive,
//! nonincreasing singular values `S`. Intermediate results of sums and
//! products are accumulated as *raw* factored products `A D Bᵀ` without
//! orthonormality, then renormalized by [`recompress`], which is the single
//! path back to the canonical form. No operation here ever materializes an
//! m×n array; [`FactoredMatrix::to_dense`] exists for oracles and small-scale
//! verification only and refuses to build matrices past a hard cap.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hard cap on dense materialization; anything larger is an error.
pub const DENSE_CAP: usize = 4096;

/// Orthonormality slack allowed on `UᵀU - I` and `VᵀV - I` (Frobenius norm).
pub const ORTHONORMALITY_TOL: f64 = 1e-12;

/// Relative singular-value cutoff used by default when renormalizing.
pub const RECOMPRESS_TOL: f64 = 1e-14;

/// Absolute floor under which a singular value is treated as exactly zero.
const SIGMA_FLOOR: f64 = 1e-300;

/// A rank-k matrix in compact SVD form `U diag(S) Vᵀ`.
///
/// Invariants, enforced at construction:
/// * `U` is m×k and `V` is n×k with `‖UᵀU - I‖_F ≤ 1e-12` (likewise `V`);
/// * `S` has length k, is strictly positive and nonincreasing;
/// * `k ≥ 1`.
///
/// The struct is immutable after construction; all algebra produces new
/// values, so instances can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
    fingerprint: u64,
}

impl FactoredMatrix {
    /// Builds a factored matrix, verifying the orthonormality and
    /// singular-value invariants.
    pub fn new(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let k = s.len();
        if k == 0 {
            return Err(Error::RankCollapse { sigma_max: 0.0 });
        }
        if u.ncols() != k || v.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "FactoredMatrix::new",
                expected: format!("U and V with {k} columns"),
                found: format!("U {}x{}, V {}x{}", u.nrows(), u.ncols(), v.nrows(), v.ncols()),
            });
        }
        if u.nrows() < k || v.nrows() < k {
            return Err(Error::InvalidFactors(format!(
                "rank {k} exceeds matrix dimensions {}x{}",
                u.nrows(),
                v.nrows()
            )));
        }
        for i in 0..k {
            let si = s[i];
            if !(si > 0.0) || !si.is_finite() {
                return Err(Error::InvalidFactors(format!(
                    "singular value S[{i}] = {si:e} is not strictly positive and finite"
                )));
            }
            if i > 0 && si > s[i - 1] {
                return Err(Error::InvalidFactors(format!(
                    "singular values not nonincreasing: S[{}] = {:e} < S[{i}] = {si:e}",
                    i - 1,
                    s[i - 1]
                )));
            }
        }
        let du = orthonormality_defect(&u);
        if du > ORTHONORMALITY_TOL {
            return Err(Error::InvalidFactors(format!(
                "left factor is not orthonormal: ‖UᵀU - I‖_F = {du:.3e}"
            )));
        }
        let dv = orthonormality_defect(&v);
        if dv > ORTHONORMALITY_TOL {
            return Err(Error::InvalidFactors(format!(
                "right factor is not orthonormal: ‖VᵀV - I‖_F = {dv:.3e}"
            )));
        }
        let fingerprint = content_fingerprint(&u, &s, &v);
        Ok(Self { u, s, v, fingerprint })
    }

    /// Truncated SVD of a dense matrix (oracle and test construction path).
    ///
    /// Keeps at most `target_rank` singular values (all, if `None`) after
    /// dropping those below `tol * sigma_max` and below the absolute floor.
    pub fn from_dense(a: &DMatrix<f64>, target_rank: Option<usize>, tol: f64) -> Result<Self> {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("SVD with left vectors requested");
        let vt = svd.v_t.expect("SVD with right vectors requested");
        build_truncated(u, svd.singular_values, vt.transpose(), target_rank, tol)
    }

    /// Number of rows of the represented matrix.
    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    /// Number of columns of the represented matrix.
    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// Rank of the factorization.
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Orthonormal left factor `U` (m×k).
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Singular values, strictly positive and nonincreasing.
    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    /// Orthonormal right factor `V` (n×k).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Frobenius norm, `sqrt(Σ S[i]²)`.
    pub fn norm(&self) -> f64 {
        self.s.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Content hash of the factors; used to pin tangent vectors to the base
    /// point they were constructed at.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Views the factorization as a raw product with `A = U`, `D = diag(S)`,
    /// `B = V`.
    pub fn as_raw(&self) -> RawFactored {
        RawFactored {
            a: self.u.clone(),
            d: DMatrix::from_diagonal(&self.s),
            b: self.v.clone(),
        }
    }

    /// Materializes the represented matrix. Refuses dimensions past
    /// [`DENSE_CAP`]; dense form is meant for oracles and small checks only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_dense_cap(self.nrows(), self.ncols())?;
        let mut us = self.u.clone();
        for j in 0..self.rank() {
            us.column_mut(j).scale_mut(self.s[j]);
        }
        Ok(us * self.v.transpose())
    }
}

/// An un-orthonormalized factored product `A D Bᵀ` with `A` m×r, `D` r×r,
/// `B` n×r. This is the accumulator type for factored sums and linear maps;
/// [`recompress`] turns it back into a [`FactoredMatrix`].
#[derive(Debug, Clone)]
pub struct RawFactored {
    /// Left block, m×r.
    pub a: DMatrix<f64>,
    /// Core block, r×r.
    pub d: DMatrix<f64>,
    /// Right block, n×r.
    pub b: DMatrix<f64>,
}

impl RawFactored {
    /// Builds a raw product after checking block shapes.
    pub fn new(a: DMatrix<f64>, d: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let r = d.nrows();
        if d.ncols() != r || a.ncols() != r || b.ncols() != r {
            return Err(Error::DimensionMismatch {
                context: "RawFactored::new",
                expected: format!("A (m x {r}), D ({r} x {r}), B (n x {r})"),
                found: format!(
                    "A {}x{}, D {}x{}, B {}x{}",
                    a.nrows(),
                    a.ncols(),
                    d.nrows(),
                    d.ncols(),
                    b.nrows(),
                    b.ncols()
                ),
            });
        }
        Ok(Self { a, d, b })
    }

    /// Number of rows of the represented matrix.
    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of columns of the represented matrix.
    pub fn ncols(&self) -> usize {
        self.b.nrows()
    }

    /// Width of the factored product (an upper bound on the rank).
    pub fn inner_rank(&self) -> usize {
        self.d.nrows()
    }

    /// Scales the represented matrix by `c` (applied to the core block).
    pub fn scaled(mut self, c: f64) -> Self {
        self.d.scale_mut(c);
        self
    }

    /// Materializes the represented matrix, subject to [`DENSE_CAP`].
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_dense_cap(self.nrows(), self.ncols())?;
        Ok(&self.a * &self.d * self.b.transpose())
    }
}

/// Renormalizes a raw product to compact SVD form.
///
/// Thin QR factorizations of the outer blocks reduce the problem to an SVD of
/// the small core `R_A D R_Bᵀ`; the total cost is O((m+n)r² + r³) and no m×n
/// array is ever formed. Singular values below `tol * sigma_max` (or the
/// absolute floor) are dropped, then the rank is capped at `target_rank` when
/// given. Dropping everything is reported as [`Error::RankCollapse`].
///
/// The result is sign-normalized: in each column of `U` the entry of largest
/// magnitude is made positive (flipping the matching column of `V`), so equal
/// inputs renormalize to bitwise-equal outputs.
pub fn recompress(
    raw: &RawFactored,
    target_rank: Option<usize>,
    tol: f64,
) -> Result<FactoredMatrix> {
    let (qa, ra) = thin_qr(&raw.a);
    let (qb, rb) = thin_qr(&raw.b);
    let core = &ra * &raw.d * rb.transpose();
    let svd = core.svd(true, true);
    let u_core = svd.u.expect("SVD with left vectors requested");
    let v_core = svd.v_t.expect("SVD with right vectors requested").transpose();
    // Rotate the small singular vectors back through the QR bases before
    // truncating; build_truncated then slices the leading columns.
    build_truncated(qa * u_core, svd.singular_values, qb * v_core, target_rank, tol)
}

/// Concatenates raw products into the raw form of their sum:
/// `[A₁ A₂ …] blkdiag(D₁, D₂, …) [B₁ B₂ …]ᵀ`. No renormalization happens
/// here, so exact cancellation between terms is preserved until the caller
/// recompresses.
pub fn concat_blkdiag(terms: &[&RawFactored]) -> Result<RawFactored> {
    let first = terms.first().ok_or(Error::DimensionMismatch {
        context: "concat_blkdiag",
        expected: "at least one term".to_string(),
        found: "empty slice".to_string(),
    })?;
    let (m, n) = (first.nrows(), first.ncols());
    let r_total: usize = terms.iter().map(|t| t.inner_rank()).sum();
    let mut a = DMatrix::zeros(m, r_total);
    let mut d = DMatrix::zeros(r_total, r_total);
    let mut b = DMatrix::zeros(n, r_total);
    let mut offset = 0;
    for term in terms {
        if term.nrows() != m || term.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "concat_blkdiag",
                expected: format!("{m}x{n} terms"),
                found: format!("{}x{}", term.nrows(), term.ncols()),
            });
        }
        let r = term.inner_rank();
        a.view_mut((0, offset), (m, r)).copy_from(&term.a);
        d.view_mut((offset, offset), (r, r)).copy_from(&term.d);
        b.view_mut((0, offset), (n, r)).copy_from(&term.b);
        offset += r;
    }
    Ok(RawFactored { a, d, b })
}

/// Entrywise square `X ∘ X` of a factored matrix, in factored form.
///
/// Uses the transposed Khatri–Rao identity: with `X = U diag(S) Vᵀ`,
/// `X ∘ X = (U ⊙ᵀ U) (S ⊗ S) (V ⊙ᵀ V)ᵀ` where `⊙ᵀ` pairs every column with
/// every column row-wise. The k² -wide raw product is recompressed at `tol`,
/// so the result rank never exceeds k² and is usually far smaller.
pub fn hadamard_square(x: &FactoredMatrix, tol: f64) -> Result<FactoredMatrix> {
    let k = x.rank();
    let a = row_khatri_rao(&x.u);
    let b = row_khatri_rao(&x.v);
    let mut d = DVector::zeros(k * k);
    for p in 0..k {
        for q in 0..k {
            d[p * k + q] = x.s[p] * x.s[q];
        }
    }
    recompress(
        &RawFactored {
            a,
            d: DMatrix::from_diagonal(&d),
            b,
        },
        None,
        tol,
    )
}

/// Frobenius inner product `⟨X, Y⟩ = trace(XᵀY)` computed through k×k
/// intermediates: `Σ_{a,b} S_x[a] (UᵀU_y)[a,b] S_y[b] (VᵀV_y)[a,b]`.
pub fn frob_inner(x: &FactoredMatrix, y: &FactoredMatrix) -> Result<f64> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "frob_inner",
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let p = x.u.transpose() * &y.u;
    let q = x.v.transpose() * &y.v;
    let mut acc = 0.0;
    for a in 0..x.rank() {
        for b in 0..y.rank() {
            acc += x.s[a] * p[(a, b)] * y.s[b] * q[(a, b)];
        }
    }
    Ok(acc)
}

/// Frobenius inner product of two raw products, `trace((A₁D₁B₁ᵀ)ᵀ A₂D₂B₂ᵀ)
/// = trace(D₁ᵀ (A₁ᵀA₂) D₂ (B₂ᵀB₁))`, through r×r intermediates.
pub fn raw_inner(x: &RawFactored, y: &RawFactored) -> Result<f64> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "raw_inner",
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let cross_a = x.a.transpose() * &y.a;
    let cross_b = y.b.transpose() * &x.b;
    Ok((x.d.transpose() * cross_a * &y.d * cross_b).trace())
}

/// Frobenius norm of a raw product without densifying: with thin QR
/// factorizations `A = Q_A R_A`, `B = Q_B R_B`, orthogonal invariance gives
/// `‖A D Bᵀ‖_F = ‖R_A D R_Bᵀ‖_F`.
///
/// This route is essential for tiny norms of nearly-cancelling sums: the
/// Gram-trace formula `trace(Dᵀ(AᵀA)D(BᵀB))` computes the *square* of the
/// norm by cancellation of O(‖terms‖²) quantities and loses twice the
/// digits, which is fatal when the norm is ~1e−8 against term norms of
/// order 10². The QR route loses digits only linearly in ‖terms‖.
pub fn raw_frob_norm(raw: &RawFactored) -> f64 {
    let (_, ra) = thin_qr(&raw.a);
    let (_, rb) = thin_qr(&raw.b);
    (ra * &raw.d * rb.transpose()).norm()
}

/// Thin QR of a (possibly wide) matrix: returns `(Q, R)` with `Q` m×p,
/// `R` p×r, `p = min(m, r)`.
fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

/// Shared truncation tail of [`recompress`] and [`FactoredMatrix::from_dense`]:
/// drops small singular values, caps the rank, applies the sign convention,
/// and validates the result.
fn build_truncated(
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
    target_rank: Option<usize>,
    tol: f64,
) -> Result<FactoredMatrix> {
    let sigma_max = if sigma.is_empty() { 0.0 } else { sigma[0] };
    let cutoff = (tol * sigma_max).max(SIGMA_FLOOR);
    let mut kept = sigma.iter().take_while(|&&s| s >= cutoff && s > 0.0).count();
    if let Some(k) = target_rank {
        kept = kept.min(k);
    }
    if kept == 0 {
        return Err(Error::RankCollapse { sigma_max });
    }
    let mut u = u.columns(0, kept).into_owned();
    let s = sigma.rows(0, kept).into_owned();
    let mut v = v.columns(0, kept).into_owned();
    apply_sign_convention(&mut u, &mut v);
    FactoredMatrix::new(u, s, v)
}

/// Makes the largest-magnitude entry of each `U` column positive, flipping
/// the paired `V` column, so the factorization is deterministic.
fn apply_sign_convention(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

/// Row-wise Khatri–Rao square: `out[i, p*k + q] = m[i, p] * m[i, q]`.
fn row_khatri_rao(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = (m.nrows(), m.ncols());
    let mut out = DMatrix::zeros(n, k * k);
    for p in 0..k {
        for q in 0..k {
            let col = p * k + q;
            for i in 0..n {
                out[(i, col)] = m[(i, p)] * m[(i, q)];
            }
        }
    }
    out
}

fn check_dense_cap(rows: usize, cols: usize) -> Result<()> {
    if rows > DENSE_CAP || cols > DENSE_CAP {
        return Err(Error::DenseCap {
            rows,
            cols,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    let gram = m.transpose() * m;
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = gram[(i, j)] - target;
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// FNV-1a over the dimensions and the raw bit patterns of all factor entries.
/// Deterministic across runs; collisions are astronomically unlikely for the
/// base-point pinning this is used for.
fn content_fingerprint(u: &DMatrix<f64>, s: &DVector<f64>, v: &DMatrix<f64>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    let mut eat = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(u.nrows() as u64);
    eat(v.nrows() as u64);
    eat(s.len() as u64);
    for x in s.iter() {
        eat(x.to_bits());
    }
    for x in u.iter() {
        eat(x.to_bits());
    }
    for x in v.iter() {
        eat(x.to_bits());
    }
    h
}
