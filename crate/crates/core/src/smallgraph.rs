//! Small-cycle conditioning quantities: the limiting Poisson rates λᵢ of
//! short cycles, their conditioned perturbations δᵢ, the closed-form
//! exponential sum that reproduces the moment-ratio limit, and oracle-
//! backed Monte Carlo checks of the conditioned cycle moments.

use serde::{Deserialize, Serialize};

use crate::graphs::{count_cycles, expected_cycle_rate, sample_bipartite_regular};
use crate::model::{Error, Result, SpinModel};
use crate::moments::ratio_limit_from_omega;
use crate::oracle::{z_alpha_beta_table, OracleGraph};
use crate::tree::{solve_tree_fixed_points, Regime};

/// λᵢ and δᵢ for even cycle lengths i = 2, 4, …, max_len, together with
/// the running sums of λᵢδᵢ² and the closed form they converge to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditioningData {
    pub max_len: usize,
    /// Even cycle lengths (edge count) covered, in order.
    pub lengths: Vec<usize>,
    /// λᵢ = ((Δ−1)ⁱ + (Δ−1))/i for even i.
    pub lambdas: Vec<f64>,
    /// δᵢ = ω^{i/2}.
    pub deltas: Vec<f64>,
    /// Running Σ λᵢδᵢ² over even i up to each length.
    pub partial_sums: Vec<f64>,
    /// exp(Σ_{even i≥2} λᵢδᵢ²) = (1−ω²)^{−(Δ−1)/2}(1−(Δ−1)²ω²)^{−1/2}.
    pub sum_closed_form: f64,
    /// Geometric bound on the truncated tail of the log-sum:
    /// ((Δ−1)ω)^{max_len+2}/(1 − ((Δ−1)ω)²).
    pub tail_bound: f64,
}

/// Compute λᵢ, δᵢ and the convergent sum for a model in non-uniqueness.
pub fn conditioning_data(m: &SpinModel, max_len: usize) -> Result<ConditioningData> {
    let data = solve_tree_fixed_points(m)?;
    if data.regime == Regime::Uniqueness {
        return Err(Error::OutOfRegion(
            "conditioning quantities require non-uniqueness fixed points".into(),
        ));
    }
    let dm1 = m.d() as f64;
    let om = data.omega;
    if dm1 * om >= 1.0 {
        return Err(Error::OutOfRegion(format!(
            "(Δ−1)ω = {} >= 1: conditioned moments diverge",
            dm1 * om
        )));
    }
    // Cross-module identity: δ₂ from its component formula equals ω.
    let (qp, qm) = (data.big_q_plus, data.big_q_minus);
    let delta2 = (1.0 - m.b1 * m.b2).powi(2) * qp * qm
        / ((1.0 + m.b1 * qp) * (1.0 + m.b1 * qm) * (m.b2 + qp) * (m.b2 + qm));
    if (delta2 - om).abs() > 1e-12 * om.max(1.0) {
        return Err(Error::ConsistencyFailure(format!(
            "delta_2 = {delta2} disagrees with omega = {om}"
        )));
    }

    let mut lengths = Vec::new();
    let mut lambdas = Vec::new();
    let mut deltas = Vec::new();
    let mut partial_sums = Vec::new();
    let mut sum = 0.0;
    let mut i = 2usize;
    while i <= max_len {
        let lam = expected_cycle_rate(m.delta, i as u32);
        let del = om.powi((i / 2) as i32);
        sum += lam * del * del;
        lengths.push(i);
        lambdas.push(lam);
        deltas.push(del);
        partial_sums.push(sum);
        i += 2;
    }
    let closed = ratio_limit_from_omega(om, m.delta);
    let x = dm1 * om;
    let tail_bound = x.powi(max_len as i32 + 2) / (1.0 - x * x);
    // Partial sums increase toward ln(closed), within the tail bound.
    let log_closed = closed.ln();
    if let Some(&last) = partial_sums.last() {
        if last > log_closed + 1e-12 || log_closed - last > tail_bound + 1e-12 {
            return Err(Error::ConsistencyFailure(format!(
                "partial sum {last} vs closed-form log {log_closed} (tail bound {tail_bound})"
            )));
        }
    }
    Ok(ConditioningData {
        max_len,
        lengths,
        lambdas,
        deltas,
        partial_sums,
        sum_closed_form: closed,
        tail_bound,
    })
}

/// Monte Carlo estimate of the conditioned cycle moment
/// E[Z^{α,β}·Xᵢ]/E[Z^{α,β}] at (α,β) the dominant occupancy pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleMomentMc {
    pub n: usize,
    pub len: usize,
    pub trials: usize,
    /// Integral occupancies used for the restricted partition function.
    pub a_n: usize,
    pub b_n: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// Plain (unconditioned) mean of Xᵢ over the sample.
    pub unweighted_mean: f64,
    /// The n→∞ prediction λᵢ(1+δᵢ).
    pub predicted_limit: f64,
}

/// Estimate E[Z^{α,β}Xᵢ]/E[Z^{α,β}] by exact per-graph evaluation of the
/// restricted partition function (oracle) and the cycle count, over
/// `trials` sampled Δ-regular bipartite multigraphs.
pub fn conditioned_cycle_moment_mc(
    m: &SpinModel,
    n: usize,
    len: usize,
    trials: usize,
    seed: u64,
) -> Result<CycleMomentMc> {
    if n > 12 {
        return Err(Error::GuardExceeded {
            what: "conditioned_cycle_moment_mc",
            constraint: "n <= 12 (exact oracle per trial)",
            actual: n.to_string(),
        });
    }
    if trials < 1000 {
        return Err(Error::GuardExceeded {
            what: "conditioned_cycle_moment_mc",
            constraint: "trials >= 1000",
            actual: trials.to_string(),
        });
    }
    // The edge-trivial model (B₁ = B₂ = 1) has no tree phase data; its
    // dominant occupancies are the symmetric ones and ω = 0.
    let (alpha, beta, omega) = if m.b1 == 1.0 && m.b2 == 1.0 {
        let p = m.lambda / (1.0 + m.lambda);
        (p, p, 0.0)
    } else {
        let data = solve_tree_fixed_points(m)?;
        if data.regime == Regime::NonUniqueness {
            (data.p_plus, data.p_minus, data.omega)
        } else {
            (data.p_star, data.p_star, data.omega_star)
        }
    };
    let a_n = (alpha * n as f64).round() as usize;
    let b_n = (beta * n as f64).round() as usize;

    let mut log_ws = Vec::with_capacity(trials);
    let mut xs = Vec::with_capacity(trials);
    for t in 0..trials {
        let g = sample_bipartite_regular(n, m.delta, crate::rng::derive_seed(seed, t as u64));
        let counts = count_cycles(&g, len.min(12))?;
        let x = if len >= 2 && len <= 12 { counts[len - 2] as f64 } else { 0.0 };
        let og = OracleGraph::from_bipartite(&g);
        let log_w = z_alpha_beta_table(&og, m)?.log_z_table[a_n][b_n];
        log_ws.push(log_w);
        xs.push(x);
    }
    let max_lw = log_ws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = log_ws.iter().map(|&lw| (lw - max_lw).exp()).collect();
    let wsum: f64 = ws.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::ConsistencyFailure(
            "all sampled graphs have zero restricted partition function".into(),
        ));
    }
    let estimate: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / wsum;
    // Delta-method standard error of the ratio estimator.
    let var: f64 = ws
        .iter()
        .zip(&xs)
        .map(|(w, x)| (w * (x - estimate)).powi(2))
        .sum::<f64>()
        / (wsum * wsum);
    let unweighted_mean = xs.iter().sum::<f64>() / trials as f64;
    let delta = omega.powf(len as f64 / 2.0);
    let predicted_limit = expected_cycle_rate(m.delta, len as u32) * (1.0 + delta);
    Ok(CycleMomentMc {
        n,
        len,
        trials,
        a_n,
        b_n,
        estimate,
        std_error: var.sqrt(),
        unweighted_mean,
        predicted_limit,
    })
}

/// Mean falling factorial E[x(x−1)⋯(x−m+1)] of a sample; for Poisson(λ)
/// data this converges to λ^m.
pub fn falling_factorial_mean(samples: &[u64], m: u32) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|&x| {
            let mut p = 1.0;
            for j in 0..m as u64 {
                if x <= j {
                    return 0.0;
                }
                p *= (x - j) as f64;
            }
            p
        })
        .sum();
    total / samples.len() as f64
}
