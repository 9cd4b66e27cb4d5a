//! Riemannian multigrid line search over fixed-rank matrix manifolds.
//!
//! This crate solves large-scale matrix optimization problems whose solutions
//! are well approximated at low rank — discretized variational problems such
//! as Lyapunov-type linear systems and cubic-nonlinearity equations — by
//! optimizing directly on the manifold of rank-k matrices across a hierarchy
//! of grids.
//!
//! The pieces, bottom up:
//!
//! * [`factored`] — compact `U diag(S) Vᵀ` representations, raw factored
//!   accumulation, and QR-based recompression; no dense n×n matrix is formed
//!   anywhere in the solve path.
//! * [`geometry`] — tangent spaces, projections, the orthographic retraction
//!   and its inverse, and exact derivatives along retraction curves.
//! * [`transfer`] — dyadic grid hierarchy and transfer of points and tangent
//!   vectors between levels, in factored form.
//! * [`linesearch`] — a Hager–Zhang-style bracketing line search supporting
//!   both weak Wolfe and approximate Wolfe acceptance; the approximate mode
//!   stays reliable when the directional derivative is at the scale of
//!   rounding noise in the objective.
//! * [`problems`] — the variational objectives, their factored Euclidean
//!   gradients, and residual diagnostics.
//! * [`cycle`] — smoothing, coarse-model construction, the recursive
//!   multigrid iteration, the outer solve driver, and rank adaptivity.
//! * [`oracle`] — small-scale dense reference solvers used to verify the
//!   factored implementations and to measure true errors in tests.
//! * [`demo`] — a self-contained dense quadratic problem exhibiting the
//!   line-search failure mode that motivates approximate Wolfe acceptance.

pub mod cycle;
pub mod demo;
pub mod error;
pub mod factored;
pub mod geometry;
pub mod linesearch;
pub mod oracle;
pub mod problems;
pub mod random;
pub mod transfer;

pub use error::{Error, Result};
