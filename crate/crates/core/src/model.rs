//! Model parameters for general 2-spin systems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("fixed-point solve did not converge: residual {residual:e} after {iters} iterations")]
    NonConvergence { residual: f64, iters: usize },

    #[error("operation requires degree at least {required}, model has {actual}")]
    DegreeTooSmall { required: u32, actual: u32 },

    #[error("infeasible marginals for the given support pattern: {0}")]
    Infeasible(String),

    #[error("{what} requires {constraint}, got {actual}")]
    GuardExceeded {
        what: &'static str,
        constraint: &'static str,
        actual: String,
    },

    #[error("point outside the admissible region: {0}")]
    OutOfRegion(String),

    #[error("argument error: {0}")]
    BadArgument(String),

    #[error("inexact polynomial division; remainder has {remainder_terms} terms, leading {leading}")]
    InexactDivision {
        remainder_terms: usize,
        leading: String,
    },

    #[error("internal consistency check failed: {0}")]
    ConsistencyFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Parameters of a 2-spin system.
///
/// A configuration σ: V → {−1, +1} has weight
/// λ^{#(−1 vertices)} · B₁^{#(−,−) edges} · B₂^{#(+,+) edges};
/// (+,−) edges carry weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinModel {
    /// Edge activity for (−,−) edges; ≥ 0 (0 encodes the hard constraint).
    pub b1: f64,
    /// Edge activity for (+,+) edges; > 0.
    pub b2: f64,
    /// Vertex activity for spin −1; > 0.
    pub lambda: f64,
    /// Graph degree Δ. Tree-recursion operations require Δ ≥ 3; the exact
    /// oracles and finite-n moment formulas accept any Δ ≥ 1.
    pub delta: u32,
}

impl SpinModel {
    pub fn new(b1: f64, b2: f64, lambda: f64, delta: u32) -> Result<Self> {
        if !(b1 >= 0.0) || !b1.is_finite() {
            return Err(Error::InvalidModel(format!("b1 must be finite and >= 0, got {b1}")));
        }
        if !(b2 > 0.0) || !b2.is_finite() {
            return Err(Error::InvalidModel(format!("b2 must be finite and > 0, got {b2}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidModel(format!(
                "lambda must be finite and > 0, got {lambda}"
            )));
        }
        if delta < 1 {
            return Err(Error::InvalidModel(format!("delta must be >= 1, got {delta}")));
        }
        Ok(Self { b1, b2, lambda, delta })
    }

    /// No-field Ising model: B₁ = B₂ = b, λ = 1.
    pub fn ising(b: f64, delta: u32) -> Result<Self> {
        Self::new(b, b, 1.0, delta)
    }

    /// Hard-core model: B₁ = 0, B₂ = 1 (occupied ↔ spin −1 with activity λ).
    pub fn hard_core(lambda: f64, delta: u32) -> Result<Self> {
        Self::new(0.0, 1.0, lambda, delta)
    }

    /// Branching degree d = Δ − 1 of the rooted tree recursion.
    pub fn d(&self) -> u32 {
        self.delta - 1
    }

    pub fn is_antiferromagnetic(&self) -> bool {
        self.b1 * self.b2 < 1.0
    }

    pub fn is_hard_core(&self) -> bool {
        self.b1 == 0.0 && self.b2 == 1.0
    }

    pub fn is_ising_no_field(&self) -> bool {
        self.b1 == self.b2 && self.lambda == 1.0
    }

    /// Edge weight between spins s and t (each ±1).
    pub fn edge_weight(&self, s: i8, t: i8) -> f64 {
        match (s, t) {
            (-1, -1) => self.b1,
            (1, 1) => self.b2,
            _ => 1.0,
        }
    }

    fn require_delta(&self, required: u32) -> Result<()> {
        if self.delta < required {
            Err(Error::DegreeTooSmall { required, actual: self.delta })
        } else {
            Ok(())
        }
    }

    /// Degree requirement for tree-recursion operations.
    pub fn require_tree_degree(&self) -> Result<()> {
        self.require_delta(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate() {
        assert!(SpinModel::new(-0.1, 1.0, 1.0, 3).is_err());
        assert!(SpinModel::new(0.0, 0.0, 1.0, 3).is_err());
        assert!(SpinModel::new(0.0, 1.0, 0.0, 3).is_err());
        assert!(SpinModel::new(0.0, 1.0, 1.0, 0).is_err());
        assert!(SpinModel::new(f64::NAN, 1.0, 1.0, 3).is_err());
        let m = SpinModel::hard_core(4.0, 3).unwrap();
        assert!(m.is_hard_core() && m.is_antiferromagnetic());
        assert_eq!(m.d(), 2);
        let m = SpinModel::ising(0.2, 3).unwrap();
        assert!(m.is_ising_no_field() && m.is_antiferromagnetic());
    }

    #[test]
    fn edge_weights() {
        let m = SpinModel::new(0.3, 0.7, 2.0, 3).unwrap();
        assert_eq!(m.edge_weight(-1, -1), 0.3);
        assert_eq!(m.edge_weight(1, 1), 0.7);
        assert_eq!(m.edge_weight(1, -1), 1.0);
        assert_eq!(m.edge_weight(-1, 1), 1.0);
    }
}
