//! Computational core for antiferromagnetic 2-spin systems on random
//! bipartite Δ-regular multigraphs.
//!
//! The crate is organized around a single parameter object, [`SpinModel`],
//! and provides:
//!
//! * [`tree`] — fixed points of the (Δ−1)-ary tree recursion, the
//!   uniqueness/non-uniqueness classification, and the correlation
//!   quantities ω, ω*.
//! * [`scaling`] — the constrained entropy maximizer (matrix scaling /
//!   alternating marginal fitting) used by both moment exponents.
//! * [`moments`] — first/second-moment exponents Φ₁/Φ₂, their critical
//!   points and Hessian classification, exact finite-n moments, asymptotic
//!   prefactors, the moment-ratio limit, and gadget conditional-moment
//!   ratios.
//! * [`graphs`] — seeded samplers for the matching-union ensemble and the
//!   gadget ensemble, exact small-cycle counting, and the cycle-weight
//!   transition-matrix spectrum.
//! * [`oracle`] — exact desk-scale partition functions, occupancy tables,
//!   pair-overlap statistics, conditional partition functions and a
//!   heat-bath Glauber simulator.
//! * [`smallgraph`] — cycle-rate data (λᵢ, δᵢ) and the closed-form
//!   conditioned-variance sum.
//! * [`poly`] / [`certify`] — exact sparse multivariate polynomials over
//!   arbitrary-precision integers and the hard-core case-analysis sign
//!   certificates for d = 2, 3, 4.

pub mod certify;
pub mod graphs;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod poly;
pub mod rng;
pub mod scaling;
pub mod smallgraph;
pub mod tree;

pub use model::{Error, Result, SpinModel};
pub use scaling::{MarginalSpec, ScalingSolution};
pub use tree::{Regime, TreePhaseData};
