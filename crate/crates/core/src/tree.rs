//! Fixed points of the (Δ−1)-ary tree recursion and the
//! uniqueness/non-uniqueness classification.
//!
//! The recursion for the odds ratio x = q/(1−q) of the root −1-marginal is
//!
//! ```text
//! x = λ ((B₁ y + 1)/(y + B₂))^{Δ−1},   y = λ ((B₁ x + 1)/(x + B₂))^{Δ−1}.
//! ```
//!
//! The symmetric solution (Q*, Q*) always exists; in the non-uniqueness
//! regime there are additionally the pair solutions (Q⁺, Q⁻) and (Q⁻, Q⁺)
//! with Q⁻ < Q* < Q⁺.

use serde::{Deserialize, Serialize};

use crate::model::{Error, Result, SpinModel};

/// Relative residual required of returned fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// |(Δ−1)²ω* − 1| below this is declared [`Regime::Boundary`]: the
/// downstream strict inequalities cannot be discriminated in f64 closer
/// than this.
pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Uniqueness,
    NonUniqueness,
    Boundary,
}

/// Solved tree-level data for a model.
///
/// Lower-case q are root −1-marginals on the (Δ−1)-ary tree, p the
/// corresponding marginals on the Δ-regular tree, capital Q the odds
/// ratios q/(1−q). In the uniqueness regime the ± quantities coincide
/// with the starred ones.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TreePhaseData {
    pub q_plus: f64,
    pub q_minus: f64,
    pub q_star: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_star: f64,
    #[serde(rename = "Q_plus")]
    pub big_q_plus: f64,
    #[serde(rename = "Q_minus")]
    pub big_q_minus: f64,
    #[serde(rename = "Q_star")]
    pub big_q_star: f64,
    pub omega: f64,
    pub omega_star: f64,
    pub regime: Regime,
}

/// One level of the recursion: f(x) = λ ((B₁x+1)/(x+B₂))^{Δ−1}.
pub fn one_step(m: &SpinModel, x: f64) -> f64 {
    m.lambda * ((m.b1 * x + 1.0) / (x + m.b2)).powi(m.d() as i32)
}

/// Derivative of [`one_step`]; strictly negative in the
/// antiferromagnetic regime B₁B₂ < 1.
pub fn one_step_deriv(m: &SpinModel, x: f64) -> f64 {
    let d = m.d() as i32;
    let r = (m.b1 * x + 1.0) / (x + m.b2);
    m.lambda * d as f64 * r.powi(d - 1) * (m.b1 * m.b2 - 1.0) / (x + m.b2).powi(2)
}

/// ω at a general pair (x, y) of odds ratios:
/// (1−B₁B₂)² x y / [(B₂+x)(B₂+y)(1+B₁x)(1+B₁y)].
///
/// Note the symmetric denominator: the factor pattern is
/// (1+B₁·)(1+B₁·)(B₂+·)(B₂+·), which makes ω the square of the two-step
/// contraction factor (1−B₁B₂)√(xy)/√((1+B₁x)(1+B₁y)(B₂+x)(B₂+y)) and
/// specializes to ω* under x = y = Q*.
pub fn omega_at(m: &SpinModel, x: f64, y: f64) -> f64 {
    let num = (1.0 - m.b1 * m.b2).powi(2) * x * y;
    let den = (m.b2 + x) * (m.b2 + y) * (1.0 + m.b1 * x) * (1.0 + m.b1 * y);
    num / den
}

/// Relative residual of the pair (x, y) against both recursion equations.
pub fn pair_residual(m: &SpinModel, x: f64, y: f64) -> f64 {
    let rx = (one_step(m, y) - x).abs() / x.abs().max(1.0);
    let ry = (one_step(m, x) - y).abs() / y.abs().max(1.0);
    rx.max(ry)
}

/// Upper bound of the range of [`one_step`] on (0, ∞).
fn range_hi(m: &SpinModel) -> f64 {
    // (B₁x+1)/(x+B₂) is monotone in x between 1/B₂ (x→0) and B₁ (x→∞).
    m.lambda * (m.b1.max(1.0 / m.b2)).powi(m.d() as i32)
}

/// Lower bound of the range of [`one_step`] on (0, ∞).
fn range_lo(m: &SpinModel) -> f64 {
    m.lambda * (m.b1.min(1.0 / m.b2)).powi(m.d() as i32)
}

/// Solve f(x) = x by bisection (f is strictly decreasing, so the crossing
/// is unique) followed by Newton polish.
fn solve_symmetric(m: &SpinModel) -> Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = range_hi(m) + 1.0;
    debug_assert!(one_step(m, lo) - lo > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if one_step(m, mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    // Newton on g(x) = f(x) − x; g' = f' − 1 ≤ −1, so the iteration is
    // well-conditioned even at the uniqueness boundary.
    for _ in 0..60 {
        let g = one_step(m, x) - x;
        let gp = one_step_deriv(m, x) - 1.0;
        let step = g / gp;
        x -= step;
        if step.abs() <= 1e-16 * x.abs() {
            break;
        }
    }
    let res = pair_residual(m, x, x);
    if res <= FIXED_POINT_TOL {
        Ok(x)
    } else {
        Err(Error::NonConvergence { residual: res, iters: 200 })
    }
}

/// Solve the two-step recursion x = f(f(x)) by monotone iteration from a
/// bracketing start, then Newton polish.
fn solve_two_step_from(m: &SpinModel, start: f64) -> f64 {
    let mut x = start;
    for _ in 0..500_000 {
        let next = one_step(m, one_step(m, x));
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    // Newton on g(x) = f(f(x)) − x.
    for _ in 0..100 {
        let fx = one_step(m, x);
        let g = one_step(m, fx) - x;
        let gp = one_step_deriv(m, fx) * one_step_deriv(m, x) - 1.0;
        if gp.abs() < 1e-300 {
            break;
        }
        let step = g / gp;
        let next = x - step;
        if next <= 0.0 {
            break;
        }
        x = next;
        if step.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// Solve all fixed points and derived quantities.
///
/// The two-step map f∘f is monotone increasing, so iterating from above
/// the range of f converges monotonically down to Q⁺ and iterating from
/// below the range converges up to Q⁻; Q* is the unique one-step crossing.
pub fn solve_tree_fixed_points(m: &SpinModel) -> Result<TreePhaseData> {
    m.require_tree_degree()?;
    if !m.is_antiferromagnetic() {
        return Err(Error::InvalidModel(
            "tree phase analysis requires the antiferromagnetic regime b1*b2 < 1".into(),
        ));
    }
    let q_star = solve_symmetric(m)?;
    let omega_star = omega_at(m, q_star, q_star);
    let dd = (m.d() as f64).powi(2);
    let regime = if (dd * omega_star - 1.0).abs() < BOUNDARY_TOL {
        Regime::Boundary
    } else if dd * omega_star < 1.0 {
        Regime::Uniqueness
    } else {
        Regime::NonUniqueness
    };

    let (qp, qm) = if regime == Regime::NonUniqueness {
        let mut qp = solve_two_step_from(m, range_hi(m));
        let mut qm = solve_two_step_from(m, range_lo(m).max(0.0));
        // Joint Newton polish on (x − f(y), y − f(x)) = 0: near the
        // uniqueness boundary the single-variable iterations are
        // ill-conditioned, but the pair system stays solvable.
        for _ in 0..50 {
            let rx = one_step(m, qm) - qp;
            let ry = one_step(m, qp) - qm;
            let fpm = one_step_deriv(m, qm);
            let fpp = one_step_deriv(m, qp);
            let det = 1.0 - fpm * fpp;
            if det.abs() < 1e-300 {
                break;
            }
            let dx = (rx + fpm * ry) / det;
            let dy = (fpp * rx + ry) / det;
            if qp + dx <= 0.0 || qm + dy <= 0.0 {
                break;
            }
            qp += dx;
            qm += dy;
            if dx.abs() <= 1e-16 * qp.abs() && dy.abs() <= 1e-16 * qm.abs().max(1e-300) {
                break;
            }
        }
        let res = pair_residual(m, qp, qm);
        if res > FIXED_POINT_TOL {
            return Err(Error::NonConvergence { residual: res, iters: 500_000 });
        }
        (qp, qm)
    } else {
        (q_star, q_star)
    };

    let e1 = m.b2 + qp + qm + m.b1 * qp * qm;
    let e1s = m.b2 + 2.0 * q_star + m.b1 * q_star * q_star;
    Ok(TreePhaseData {
        q_plus: qp / (1.0 + qp),
        q_minus: qm / (1.0 + qm),
        q_star: q_star / (1.0 + q_star),
        p_plus: qp * (1.0 + m.b1 * qm) / e1,
        p_minus: qm * (1.0 + m.b1 * qp) / e1,
        p_star: q_star * (1.0 + m.b1 * q_star) / e1s,
        big_q_plus: qp,
        big_q_minus: qm,
        big_q_star: q_star,
        omega: omega_at(m, qp, qm),
        omega_star,
        regime,
    })
}

/// Classification report with the closed-form threshold where one exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub regime: Regime,
    /// The decision quantity (Δ−1)²ω*.
    pub criterion: f64,
    /// Closed-form critical value (λ_c for hard-core, B_c for no-field
    /// Ising), when the model family has one.
    pub threshold: Option<f64>,
    /// Signed distance of the model parameter from the threshold
    /// (λ − λ_c, or B − B_c); positive means the uniqueness side.
    pub signed_distance: Option<f64>,
}

/// Critical activity of the hard-core model on the Δ-regular tree:
/// λ_c = (Δ−1)^{Δ−1}/(Δ−2)^Δ.
pub fn hardcore_lambda_c(delta: u32) -> f64 {
    let d = delta as f64;
    (d - 1.0).powi(delta as i32 - 1) / (d - 2.0).powi(delta as i32)
}

/// Critical edge activity of the no-field Ising model: B_c = (Δ−2)/Δ.
/// Non-uniqueness holds for B < B_c.
pub fn ising_b_c(delta: u32) -> f64 {
    (delta as f64 - 2.0) / delta as f64
}

/// Classify the model via the (Δ−1)²ω* ≤ 1 uniqueness criterion.
pub fn classify_uniqueness(m: &SpinModel) -> Result<ClassifyReport> {
    let data = solve_tree_fixed_points(m)?;
    let criterion = (m.d() as f64).powi(2) * data.omega_star;
    let (threshold, signed_distance) = if m.is_hard_core() && m.delta >= 3 {
        let lc = hardcore_lambda_c(m.delta);
        (Some(lc), Some(lc - m.lambda))
    } else if m.is_ising_no_field() && m.delta >= 3 {
        let bc = ising_b_c(m.delta);
        (Some(bc), Some(m.b1 - bc))
    } else {
        (None, None)
    };
    Ok(ClassifyReport { regime: data.regime, criterion, threshold, signed_distance })
}

/// Report of the non-uniqueness inequality suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonUniquenessReport {
    /// (Δ−1)²ω — must be < 1.
    pub lhs: f64,
    /// (Δ−1)²ω* — must be > 1.
    pub rhs: f64,
    /// W = B₁xy + B₁B₂(x+y) + B₂ at (x,y) = (Q⁺,Q⁻).
    pub w: f64,
    /// (d−1)(1−B₁B₂)√(xy): W must not fall below this.
    pub w_bound: f64,
    pub pass: bool,
}

/// Check (Δ−1)²ω < 1 < (Δ−1)²ω* plus the stronger supporting bound
/// W ≥ (d−1)(1−B₁B₂)√(Q⁺Q⁻).
///
/// The W-bound is attained with equality for no-field Ising at Δ = 3
/// (W = 1 − B² identically there), so it is checked with a relative
/// tolerance rather than strictly.
pub fn check_nonuniqueness_inequality(m: &SpinModel) -> Result<NonUniquenessReport> {
    let data = solve_tree_fixed_points(m)?;
    if data.regime == Regime::Uniqueness {
        return Err(Error::OutOfRegion("model is in the uniqueness regime".into()));
    }
    let dd = (m.d() as f64).powi(2);
    let lhs = dd * data.omega;
    let rhs = dd * data.omega_star;
    let (x, y) = (data.big_q_plus, data.big_q_minus);
    let w = m.b1 * x * y + m.b1 * m.b2 * (x + y) + m.b2;
    let w_bound = (m.d() as f64 - 1.0) * (1.0 - m.b1 * m.b2) * (x * y).sqrt();
    let tol = 1e-9;
    let boundary = data.regime == Regime::Boundary;
    let pass = lhs < 1.0 + tol
        && (rhs > 1.0 - tol || boundary)
        && w >= w_bound - tol * w_bound.abs().max(1.0);
    if !pass {
        return Err(Error::ConsistencyFailure(format!(
            "non-uniqueness inequalities violated: (d^2)omega={lhs}, (d^2)omega*={rhs}, W={w}, bound={w_bound}"
        )));
    }
    Ok(NonUniquenessReport { lhs, rhs, w, w_bound, pass })
}

/// Witness of a monotonicity violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FerroCheckReport {
    pub pass: bool,
    pub witness: Option<f64>,
}

/// Verify z^{1/d} > (B′z+1)/(z+B′) for z > 1 (and the reversed inequality
/// for z < 1) on a log-spaced grid — the monotone comparison that pins the
/// ferromagnetic one-step recursion against the identity.
pub fn ferro_monotonicity_check(b_prime: f64, d: u32, grid_points: usize) -> Result<FerroCheckReport> {
    if d < 2 {
        return Err(Error::BadArgument("d must be >= 2".into()));
    }
    if !(b_prime > 0.0) || b_prime > (d as f64 + 1.0) / (d as f64 - 1.0) {
        return Err(Error::BadArgument(format!(
            "B' must lie in (0, (d+1)/(d-1)], got {b_prime}"
        )));
    }
    let n = grid_points.max(2);
    let check = |z: f64| -> bool {
        let lhs = z.powf(1.0 / d as f64);
        let rhs = (b_prime * z + 1.0) / (z + b_prime);
        if z > 1.0 {
            lhs > rhs
        } else {
            lhs < rhs
        }
    };
    for k in 0..n {
        let t = (k as f64 + 0.5) / n as f64;
        // z in (1, 10^6]
        let z_hi = 10f64.powf(6.0 * t);
        // z in [10^-6, 1)
        let z_lo = 10f64.powf(-6.0 * t);
        if !check(z_hi) {
            return Ok(FerroCheckReport { pass: false, witness: Some(z_hi) });
        }
        if !check(z_lo) {
            return Ok(FerroCheckReport { pass: false, witness: Some(z_lo) });
        }
    }
    Ok(FerroCheckReport { pass: true, witness: None })
}
