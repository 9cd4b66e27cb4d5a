//! Deterministic random construction of dense and factored matrices.
//!
//! All randomness in the library flows through a counter-based generator
//! seeded explicitly, so a run is reproducible bit-for-bit from its seed.
//! These helpers build the random initial points used by the solver drivers
//! and the randomized instances used throughout the test suite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::factored::FactoredMatrix;

/// The generator used everywhere randomness is needed. Seeded explicitly;
/// identical seeds reproduce identical streams on every platform.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense m×n matrix with independent standard-normal entries.
pub fn random_dense(m: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal n×k matrix: thin QR of a Gaussian matrix, with each column's
/// sign fixed so the diagonal of R is positive (making the draw a
/// well-defined function of the Gaussian sample).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    assert!(k <= n, "cannot draw {k} orthonormal columns in dimension {n}");
    let g = random_dense(n, k, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random rank-k factored matrix with Gaussian orthonormal factors and
/// singular values `|N(0,1)|` sorted in decreasing order (shifted away from
/// zero so the rank is honest).
pub fn random_factored(
    m: usize,
    n: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<FactoredMatrix> {
    let u = random_orthonormal(m, k, rng);
    let v = random_orthonormal(n, k, rng);
    let mut sv: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g.abs() + 0.1
        })
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    FactoredMatrix::new(u, DVector::from_vec(sv), v)
}
