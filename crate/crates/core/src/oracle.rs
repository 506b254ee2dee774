//! Exact desk-scale oracles: partition functions, occupancy-resolved
//! tables Z^{α,β}, bimodality ratios, pair-overlap statistics, gadget
//! conditional partition functions, and a heat-bath Glauber simulator.
//!
//! All enumeration is over one side of the bipartition: fixing σ on V₁
//! factorizes the V₂ sum into independent per-vertex factors
//! λ·B₁^{m_v} + B₂^{deg(v)−m_v}, where m_v counts −1 neighbors of v.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graphs::{BipartiteMultigraph, GadgetGraph};
use crate::model::{Error, Result, SpinModel};
use crate::rng::rng_for;

/// log(e^a + e^b), safe for −∞ operands.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ e^{x_i}.
pub fn logsumexp(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, logaddexp)
}

/// Bipartite multigraph in adjacency form, as the oracles consume it.
/// Sides may have different sizes and vertices different degrees;
/// `adj[i]` lists the right neighbors of left vertex i with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGraph {
    pub n1: usize,
    pub n2: usize,
    pub adj: Vec<Vec<u32>>,
}

impl OracleGraph {
    pub fn new(n1: usize, n2: usize, adj: Vec<Vec<u32>>) -> Result<Self> {
        if adj.len() != n1 {
            return Err(Error::BadArgument("adjacency length != n1".into()));
        }
        if adj.iter().flatten().any(|&r| r as usize >= n2) {
            return Err(Error::BadArgument("right index out of range".into()));
        }
        Ok(Self { n1, n2, adj })
    }

    pub fn from_bipartite(g: &BipartiteMultigraph) -> Self {
        let adj = (0..g.n)
            .map(|i| g.matchings.iter().map(|m| m[i]).collect())
            .collect();
        Self { n1: g.n, n2: g.n, adj }
    }

    /// The gadget core: Δ−1 full matchings over W ∪ U plus the W₊↔W₋
    /// matching. Trees are not part of the core.
    pub fn from_gadget_core(g: &GadgetGraph) -> Self {
        let side = g.side_size();
        let adj = (0..side)
            .map(|i| {
                let mut nb: Vec<u32> = g.full_matchings.iter().map(|m| m[i]).collect();
                if i < g.n {
                    nb.push(g.w_matching[i]);
                }
                nb
            })
            .collect();
        Self { n1: side, n2: side, adj }
    }

    /// Right-vertex degrees (with multiplicity).
    pub fn right_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n2];
        for nb in &self.adj {
            for &r in nb {
                deg[r as usize] += 1;
            }
        }
        deg
    }

    /// Left neighbors of each right vertex, with multiplicity.
    pub fn right_adj(&self) -> Vec<Vec<u32>> {
        let mut radj = vec![Vec::new(); self.n2];
        for (i, nb) in self.adj.iter().enumerate() {
            for &r in nb {
                radj[r as usize].push(i as u32);
            }
        }
        radj
    }
}

/// Per-right-vertex factor tables: p[m] = λB₁^m (the −1 branch),
/// q[m] = B₂^{deg−m} (the +1 branch), for m = 0..=deg.
fn factor_tables(model: &SpinModel, degrees: &[usize]) -> Vec<(Vec<f64>, Vec<f64>)> {
    degrees
        .iter()
        .map(|&d| {
            let p: Vec<f64> = (0..=d).map(|m| model.lambda * model.b1.powi(m as i32)).collect();
            let q: Vec<f64> = (0..=d).map(|m| model.b2.powi((d - m) as i32)).collect();
            (p, q)
        })
        .collect()
}

/// Exact log Z by one-side enumeration in Gray-code order, O(2^{n1}·Δ)
/// with a periodic from-scratch refresh to bound floating drift.
pub fn partition_function(g: &OracleGraph, model: &SpinModel) -> Result<f64> {
    if g.n1 > 24 {
        return Err(Error::GuardExceeded {
            what: "partition_function",
            constraint: "n1 <= 24",
            actual: g.n1.to_string(),
        });
    }
    let degrees = g.right_degrees();
    let tables = factor_tables(model, &degrees);
    let ln_f: Vec<Vec<f64>> = tables
        .iter()
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a + b).ln()).collect())
        .collect();
    let ln_lambda = model.lambda.ln();

    let mut m = vec![0usize; g.n2];
    let mut sum_lnf: f64 = ln_f.iter().map(|t| t[0]).sum();
    let mut minus: i64 = 0;
    let mut log_z = minus as f64 * ln_lambda + sum_lnf;

    let total: u64 = 1u64 << g.n1;
    let mut in_set = vec![false; g.n1];
    for gg in 1..total {
        let i = gg.trailing_zeros() as usize; // left vertex flipped
        let entering = !in_set[i];
        in_set[i] = entering;
        minus += if entering { 1 } else { -1 };
        for &r in &g.adj[i] {
            let r = r as usize;
            sum_lnf -= ln_f[r][m[r]];
            m[r] = if entering { m[r] + 1 } else { m[r] - 1 };
            sum_lnf += ln_f[r][m[r]];
        }
        if gg & 0xffff == 0 {
            sum_lnf = (0..g.n2).map(|r| ln_f[r][m[r]]).sum();
        }
        log_z = logaddexp(log_z, minus as f64 * ln_lambda + sum_lnf);
    }
    Ok(log_z)
}

/// Occupancy-resolved partition function table and derived masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsSummary {
    /// Number of counted vertices per side (table dimensions −1).
    pub n1: usize,
    pub n2: usize,
    pub log_z: f64,
    /// log Z^{α,β} at (αn₁, βn₂) = (a, b); −∞ marks empty classes.
    pub log_z_table: Vec<Vec<f64>>,
    /// μ(Σ^Bal) = Σ_{a/n₁ = b/n₂} μ(Σ^{a,b}).
    pub mu_balanced: f64,
    /// argmax cell (a, b).
    pub dominant_cell: (usize, usize),
}

impl GibbsSummary {
    pub fn from_table(n1: usize, n2: usize, log_z_table: Vec<Vec<f64>>) -> Self {
        let log_z = logsumexp(log_z_table.iter().flatten().copied());
        let mut mu_balanced = 0.0;
        let mut dominant_cell = (0, 0);
        let mut best = f64::NEG_INFINITY;
        for (a, row) in log_z_table.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if a * n2 == b * n1 {
                    mu_balanced += (v - log_z).exp();
                }
                if v > best {
                    best = v;
                    dominant_cell = (a, b);
                }
            }
        }
        GibbsSummary { n1, n2, log_z, log_z_table, mu_balanced, dominant_cell }
    }

    /// μ(Σ^ρ): total mass of cells with |a/n₁ − b/n₂| ≥ ρ.
    pub fn mu_unbalanced(&self, rho: f64) -> f64 {
        let mut mass = 0.0;
        for (a, row) in self.log_z_table.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                let gap = (a as f64 / self.n1 as f64 - b as f64 / self.n2 as f64).abs();
                if gap >= rho - 1e-12 {
                    mass += (v - self.log_z).exp();
                }
            }
        }
        mass
    }
}

/// Core table builder. `clamp1`/`clamp2` fix spins of selected vertices;
/// `counted1`/`counted2` select which vertices enter the (a, b) indices.
/// Clamped vertices must be uncounted. Free uncounted right vertices are
/// summed out; free uncounted left vertices are enumerated but unbinned.
fn z_table_general(
    g: &OracleGraph,
    model: &SpinModel,
    clamp1: &[Option<i8>],
    clamp2: &[Option<i8>],
    counted1: &[bool],
    counted2: &[bool],
) -> Result<Vec<Vec<f64>>> {
    let free1: Vec<usize> = (0..g.n1).filter(|&i| clamp1[i].is_none()).collect();
    if free1.len() > 20 {
        return Err(Error::GuardExceeded {
            what: "z_alpha_beta_table",
            constraint: "free left side <= 20",
            actual: free1.len().to_string(),
        });
    }
    for i in 0..g.n1 {
        if clamp1[i].is_some() && counted1[i] {
            return Err(Error::BadArgument("clamped vertices cannot be counted".into()));
        }
    }
    for r in 0..g.n2 {
        if clamp2[r].is_some() && counted2[r] {
            return Err(Error::BadArgument("clamped vertices cannot be counted".into()));
        }
    }
    let n1c = counted1.iter().filter(|&&c| c).count();
    let n2c = counted2.iter().filter(|&&c| c).count();
    let degrees = g.right_degrees();
    let tables = factor_tables(model, &degrees);
    let ln_lambda = model.lambda.ln();

    // λ-exponent and −1-neighbor seeds from clamped left vertices.
    let clamped_minus1 = clamp1.iter().filter(|c| **c == Some(-1)).count();
    let mut m0 = vec![0usize; g.n2];
    for (i, c) in clamp1.iter().enumerate() {
        if *c == Some(-1) {
            for &r in &g.adj[i] {
                m0[r as usize] += 1;
            }
        }
    }

    let mut table = vec![vec![f64::NEG_INFINITY; n2c + 1]; n1c + 1];
    let mut m = m0;
    let mut in_set = vec![false; free1.len()];
    let mut minus_counted = 0usize;
    let mut minus_total = clamped_minus1;
    let total: u64 = 1u64 << free1.len();
    let mut poly = vec![0.0f64; n2c + 1];

    for gg in 0..total {
        if gg > 0 {
            let t = gg.trailing_zeros() as usize;
            let i = free1[t];
            let entering = !in_set[t];
            in_set[t] = entering;
            let delta: i64 = if entering { 1 } else { -1 };
            minus_total = (minus_total as i64 + delta) as usize;
            if counted1[i] {
                minus_counted = (minus_counted as i64 + delta) as usize;
            }
            for &r in &g.adj[i] {
                let r = r as usize;
                m[r] = (m[r] as i64 + delta) as usize;
            }
        }

        // Right side: scalar factors into the log offset, binomial
        // factors (p·t + q) into the occupancy polynomial.
        let mut off = minus_total as f64 * ln_lambda;
        poly.iter_mut().for_each(|c| *c = 0.0);
        poly[0] = 1.0;
        let mut deg = 0usize;
        let mut dead = false;
        for r in 0..g.n2 {
            let (p, q) = (&tables[r].0[m[r]], &tables[r].1[m[r]]);
            match clamp2[r] {
                Some(-1) => {
                    if *p == 0.0 {
                        dead = true;
                        break;
                    }
                    off += p.ln();
                }
                Some(_) => off += q.ln(),
                None if !counted2[r] => off += (p + q).ln(),
                None => {
                    for b in (0..=deg).rev() {
                        let c = poly[b];
                        poly[b] = q * c;
                        poly[b + 1] += p * c;
                    }
                    deg += 1;
                    let mx = poly[..=deg].iter().cloned().fold(0.0f64, f64::max);
                    if mx > 1e250 {
                        poly[..=deg].iter_mut().for_each(|c| *c /= mx);
                        off += mx.ln();
                    }
                }
            }
        }
        if dead {
            continue;
        }
        for (b, &c) in poly.iter().enumerate() {
            if c > 0.0 {
                let cell = &mut table[minus_counted][b];
                *cell = logaddexp(*cell, off + c.ln());
            }
        }
    }
    Ok(table)
}

/// Exact Z^{α,β} table over minus-counts (a, b) of the two sides.
pub fn z_alpha_beta_table(g: &OracleGraph, model: &SpinModel) -> Result<GibbsSummary> {
    if g.n1 > 20 || g.n2 > 20 {
        return Err(Error::GuardExceeded {
            what: "z_alpha_beta_table",
            constraint: "n1, n2 <= 20",
            actual: format!("({}, {})", g.n1, g.n2),
        });
    }
    let table = z_table_general(
        g,
        model,
        &vec![None; g.n1],
        &vec![None; g.n2],
        &vec![true; g.n1],
        &vec![true; g.n2],
    )?;
    Ok(GibbsSummary::from_table(g.n1, g.n2, table))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BimodalityReport {
    pub rho: f64,
    pub mu_balanced: f64,
    pub mu_rho: f64,
    /// μ(Σ^Bal)/μ(Σ^ρ); +∞ if μ(Σ^ρ) = 0.
    pub ratio: f64,
}

/// Balanced-vs-unbalanced mass comparison at unbalance threshold ρ.
pub fn bimodality_report(g: &OracleGraph, model: &SpinModel, rho: f64) -> Result<BimodalityReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::BadArgument(format!("rho must lie in (0,1), got {rho}")));
    }
    let summary = z_alpha_beta_table(g, model)?;
    let mu_rho = summary.mu_unbalanced(rho);
    Ok(BimodalityReport {
        rho,
        mu_balanced: summary.mu_balanced,
        mu_rho,
        ratio: summary.mu_balanced / mu_rho,
    })
}

/// Pair-overlap table: entry (γn, δn) holds Σ w(σ)w(σ′) over ordered
/// pairs in Σ^{α,β} × Σ^{α,β} whose sides share γn (resp. δn) common
/// −1 vertices on V₁ (resp. V₂). Linear-domain f64 (desk scale only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairOverlapTable {
    pub a_n: usize,
    pub b_n: usize,
    pub table: Vec<Vec<f64>>,
}

pub fn pair_overlap_statistics(
    g: &OracleGraph,
    model: &SpinModel,
    alpha: f64,
    beta: f64,
) -> Result<PairOverlapTable> {
    if g.n1 > 10 || g.n2 > 10 {
        return Err(Error::GuardExceeded {
            what: "pair_overlap_statistics",
            constraint: "n1, n2 <= 10",
            actual: format!("({}, {})", g.n1, g.n2),
        });
    }
    let round_frac = |x: f64, n: usize, name: &str| -> Result<usize> {
        let v = x * n as f64;
        if (v - v.round()).abs() > 1e-9 || !(0.0..=n as f64 + 0.5).contains(&v) {
            return Err(Error::BadArgument(format!("{name}·n = {v} is not integral")));
        }
        Ok(v.round() as usize)
    };
    let a_n = round_frac(alpha, g.n1, "alpha")?;
    let b_n = round_frac(beta, g.n2, "beta")?;
    let degrees = g.right_degrees();
    let tables = factor_tables(model, &degrees);
    let lam_pow = model.lambda.powi(2 * a_n as i32);

    // Left configurations with exactly a_n minus spins, and each one's
    // minus-neighbor counts on the right.
    let masks: Vec<u32> =
        (0u32..1 << g.n1).filter(|s| s.count_ones() as usize == a_n).collect();
    let m_of: Vec<Vec<usize>> = masks
        .iter()
        .map(|&s| {
            let mut m = vec![0usize; g.n2];
            for i in 0..g.n1 {
                if s >> i & 1 == 1 {
                    for &r in &g.adj[i] {
                        m[r as usize] += 1;
                    }
                }
            }
            m
        })
        .collect();

    let mut out = vec![vec![0.0f64; b_n + 1]; a_n + 1];
    let dim_b = b_n + 1;
    let dim_d = b_n + 1;
    // dp[(b·dim + b′)·dim_d + d]: right-side weight with b (resp. b′)
    // minus spins so far in the two copies, d of them shared.
    let mut dp = vec![0.0f64; dim_b * dim_b * dim_d];
    let mut next = dp.clone();
    for (s_idx, &s) in masks.iter().enumerate() {
        for (t_idx, &t) in masks.iter().enumerate() {
            let gamma = (s & t).count_ones() as usize;
            let (ms, mt) = (&m_of[s_idx], &m_of[t_idx]);
            dp.iter_mut().for_each(|x| *x = 0.0);
            dp[0] = 1.0;
            for r in 0..g.n2 {
                let (p, q) = (&tables[r].0, &tables[r].1);
                let (ps, qs) = (p[ms[r]], q[ms[r]]);
                let (pt, qt) = (p[mt[r]], q[mt[r]]);
                next.iter_mut().for_each(|x| *x = 0.0);
                let b_hi = (r + 1).min(b_n);
                for b in 0..=b_hi.min(r) {
                    for bp in 0..=b_hi.min(r) {
                        for d in 0..=b.min(bp) {
                            let w = dp[(b * dim_b + bp) * dim_d + d];
                            if w == 0.0 {
                                continue;
                            }
                            next[(b * dim_b + bp) * dim_d + d] += qs * qt * w;
                            if b < b_n {
                                next[((b + 1) * dim_b + bp) * dim_d + d] += ps * qt * w;
                            }
                            if bp < b_n {
                                next[(b * dim_b + bp + 1) * dim_d + d] += qs * pt * w;
                            }
                            if b < b_n && bp < b_n {
                                next[((b + 1) * dim_b + bp + 1) * dim_d + d + 1] +=
                                    ps * pt * w;
                            }
                        }
                    }
                }
                std::mem::swap(&mut dp, &mut next);
            }
            for d in 0..=b_n {
                out[gamma][d] += lam_pow * dp[(b_n * dim_b + b_n) * dim_d + d];
            }
        }
    }
    Ok(PairOverlapTable { a_n, b_n, table: out })
}

/// Conditional table Z^{α,β}(η) of the gadget core with U clamped to η;
/// (a, b) count minus spins on W₊, W₋ only. λ-weights of clamped −1
/// vertices are included.
pub fn gadget_conditional_z(
    g: &GadgetGraph,
    model: &SpinModel,
    eta_plus: &[i8],
    eta_minus: &[i8],
) -> Result<GibbsSummary> {
    let side = g.side_size();
    if side > 18 {
        return Err(Error::GuardExceeded {
            what: "gadget_conditional_z",
            constraint: "n + m' <= 18",
            actual: side.to_string(),
        });
    }
    if eta_plus.len() != g.params.m_prime || eta_minus.len() != g.params.m_prime {
        return Err(Error::BadArgument("eta length != m'".into()));
    }
    if eta_plus.iter().chain(eta_minus).any(|&s| s != 1 && s != -1) {
        return Err(Error::BadArgument("eta entries must be ±1".into()));
    }
    let og = OracleGraph::from_gadget_core(g);
    let clamp = |eta: &[i8]| -> Vec<Option<i8>> {
        (0..side).map(|i| if i < g.n { None } else { Some(eta[i - g.n]) }).collect()
    };
    let counted: Vec<bool> = (0..side).map(|i| i < g.n).collect();
    let table = z_table_general(
        &og,
        model,
        &clamp(eta_plus),
        &clamp(eta_minus),
        &counted,
        &counted,
    )?;
    Ok(GibbsSummary::from_table(g.n, g.n, table))
}

/// Heat-bath Glauber dynamics record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlauberReport {
    pub steps: u64,
    /// Fractions of steps with sign(#−V₁ − #−V₂) = +1 / −1 / 0.
    pub plus_fraction: f64,
    pub minus_fraction: f64,
    pub zero_fraction: f64,
    /// Fraction of steps with |#−V₁ − #−V₂| ≤ 1 (balanced or adjacent).
    pub balanced_adjacent_fraction: f64,
    /// Transitions between the two strict signs (ignoring zero steps).
    pub sign_flips: u64,
    /// Median waiting time between strict-sign flips; equals `steps`
    /// (censored) when fewer than two flips occur.
    pub median_flip_wait: f64,
    pub censored: bool,
    /// Per-vertex empirical −1 frequency (left vertices then right).
    pub minus_marginals: Vec<f64>,
    pub final_spins: Vec<i8>,
}

pub fn glauber_run(
    g: &OracleGraph,
    model: &SpinModel,
    steps: u64,
    seed: u64,
) -> Result<GlauberReport> {
    if steps < 1 {
        return Err(Error::BadArgument("steps must be >= 1".into()));
    }
    let n = g.n1 + g.n2;
    let radj = g.right_adj();
    let degrees_r = g.right_degrees();
    let degrees_l: Vec<usize> = g.adj.iter().map(|nb| nb.len()).collect();
    let mut rng = rng_for(seed, 0);
    let mut spins: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    let minus_count = |spins: &[i8], lo: usize, hi: usize| {
        spins[lo..hi].iter().filter(|&&s| s == -1).count() as i64
    };
    let mut minus_l = minus_count(&spins, 0, g.n1);
    let mut minus_r = minus_count(&spins, g.n1, n);

    let mut plus_steps = 0u64;
    let mut minus_steps = 0u64;
    let mut zero_steps = 0u64;
    let mut adj_steps = 0u64;
    let mut minus_time = vec![0u64; n];
    let mut last_sign = 0i8;
    let mut last_flip_step: Option<u64> = None;
    let mut waits: Vec<u64> = Vec::new();
    let mut flips = 0u64;

    for step in 0..steps {
        let v = rng.gen_range(0..n);
        let (deg, m) = if v < g.n1 {
            let m = g.adj[v].iter().filter(|&&r| spins[g.n1 + r as usize] == -1).count();
            (degrees_l[v], m)
        } else {
            let r = v - g.n1;
            let m = radj[r].iter().filter(|&&i| spins[i as usize] == -1).count();
            (degrees_r[r], m)
        };
        let w_minus = model.lambda * model.b1.powi(m as i32);
        let w_plus = model.b2.powi((deg - m) as i32);
        let new = if rng.gen::<f64>() < w_minus / (w_minus + w_plus) { -1 } else { 1 };
        if new != spins[v] {
            let d = if new == -1 { 1 } else { -1 };
            if v < g.n1 {
                minus_l += d;
            } else {
                minus_r += d;
            }
            spins[v] = new;
        }

        let diff = minus_l - minus_r;
        match diff.signum() {
            1 => plus_steps += 1,
            -1 => minus_steps += 1,
            _ => zero_steps += 1,
        }
        if diff.abs() <= 1 {
            adj_steps += 1;
        }
        let sign = diff.signum() as i8;
        if sign != 0 {
            if last_sign != 0 && sign != last_sign {
                flips += 1;
                if let Some(prev) = last_flip_step {
                    waits.push(step - prev);
                }
                last_flip_step = Some(step);
            }
            last_sign = sign;
        }
        for (v, s) in spins.iter().enumerate() {
            if *s == -1 {
                minus_time[v] += 1;
            }
        }
    }

    let median_flip_wait;
    let censored;
    if waits.is_empty() {
        median_flip_wait = steps as f64;
        censored = true;
    } else {
        let mut w = waits.clone();
        w.sort_unstable();
        let mid = w.len() / 2;
        median_flip_wait = if w.len() % 2 == 1 {
            w[mid] as f64
        } else {
            (w[mid - 1] + w[mid]) as f64 / 2.0
        };
        censored = false;
    }
    let sf = steps as f64;
    Ok(GlauberReport {
        steps,
        plus_fraction: plus_steps as f64 / sf,
        minus_fraction: minus_steps as f64 / sf,
        zero_fraction: zero_steps as f64 / sf,
        balanced_adjacent_fraction: adj_steps as f64 / sf,
        sign_flips: flips,
        median_flip_wait,
        censored,
        minus_marginals: minus_time.iter().map(|&t| t as f64 / sf).collect(),
        final_spins: spins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{sample_bipartite_regular, sample_gadget, GadgetGraph, GadgetParams};
    use approx::assert_relative_eq;

    fn binom(n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn single_edge() {
        let g = OracleGraph::new(1, 1, vec![vec![0]]).unwrap();
        let m = SpinModel::new(0.3, 0.7, 2.0, 1).unwrap();
        // λ²B₁ + 2λ + B₂ over the 4 configurations.
        let z: f64 = 4.0 * 0.3 + 4.0 + 0.7;
        assert_relative_eq!(partition_function(&g, &m).unwrap(), z.ln(), max_relative = 1e-12);
    }

    #[test]
    fn four_cycle_ising() {
        let g = OracleGraph::new(2, 2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let b = 0.5;
        let m = SpinModel::ising(b, 2).unwrap();
        let z = 2.0 * b.powi(4) + 12.0 * b * b + 2.0;
        assert_relative_eq!(partition_function(&g, &m).unwrap(), z.ln(), max_relative = 1e-12);
    }

    #[test]
    fn path_hardcore() {
        // Path on 3 vertices: center on the left, two ends on the right.
        let g = OracleGraph::new(1, 2, vec![vec![0, 1]]).unwrap();
        let lam = 2.0;
        let m = SpinModel::hard_core(lam, 2).unwrap();
        let z = 1.0 + 3.0 * lam + lam * lam;
        assert_relative_eq!(partition_function(&g, &m).unwrap(), z.ln(), max_relative = 1e-12);
    }

    #[test]
    fn trivial_model_table_is_binomial() {
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(3, 2, 1));
        let m = SpinModel::new(1.0, 1.0, 1.0, 2).unwrap();
        let s = z_alpha_beta_table(&g, &m).unwrap();
        for a in 0..=3usize {
            for b in 0..=3usize {
                assert_relative_eq!(
                    s.log_z_table[a][b],
                    (binom(3, a) * binom(3, b)).ln(),
                    max_relative = 1e-12
                );
            }
        }
        assert_relative_eq!(s.log_z, 64f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn table_sums_to_partition_function() {
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(6, 3, 5));
        for m in [
            SpinModel::hard_core(8.0, 3).unwrap(),
            SpinModel::ising(0.2, 3).unwrap(),
            SpinModel::new(0.4, 1.7, 2.5, 3).unwrap(),
        ] {
            let s = z_alpha_beta_table(&g, &m).unwrap();
            let lz = partition_function(&g, &m).unwrap();
            assert_relative_eq!(s.log_z, lz, max_relative = 1e-10);
        }
    }

    #[test]
    fn spin_flip_covariance() {
        // Exchanging spin labels maps (B₁,B₂,λ) → (B₂,B₁,1/λ) and scales
        // each configuration weight by λ^{n₁+n₂}.
        for seed in 0..3u64 {
            let g = OracleGraph::from_bipartite(&sample_bipartite_regular(5, 3, seed));
            let m = SpinModel::new(0.3, 1.4, 2.0, 3).unwrap();
            let flipped = SpinModel::new(m.b2, m.b1, 1.0 / m.lambda, 3).unwrap();
            let lhs = partition_function(&g, &m).unwrap();
            let rhs =
                10.0 * m.lambda.ln() + partition_function(&g, &flipped).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn bimodality_trivial_model_favors_balanced() {
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(10, 2, 0));
        let m = SpinModel::new(1.0, 1.0, 1.0, 2).unwrap();
        let r = bimodality_report(&g, &m, 0.5).unwrap();
        // μ(Bal) = C(20,10)/4¹⁰ (Vandermonde); μ(Σ^{1/2}) covers |a−b| ≥ 5,
        // and Σ_a C(10,a)C(10,a+d) = C(20,10−d) gives the exact ratio.
        let unbalanced: f64 = 2.0 * (0..=5u64).map(|k| binom(20, k as usize)).sum::<f64>();
        assert_relative_eq!(r.ratio, binom(20, 10) / unbalanced, max_relative = 1e-10);
        assert!(r.ratio > 1.0, "balanced mass should dominate, ratio {}", r.ratio);
        // ρ → 0⁺ captures the whole space.
        let s = z_alpha_beta_table(&g, &m).unwrap();
        assert_relative_eq!(s.mu_unbalanced(1e-15), 1.0, max_relative = 1e-10);
        assert!(bimodality_report(&g, &m, 0.0).is_err());
        assert!(bimodality_report(&g, &m, 1.0).is_err());
    }

    #[test]
    fn hardcore_dominant_cell_off_diagonal() {
        let mut hits = 0;
        for seed in 0..5u64 {
            let g = OracleGraph::from_bipartite(&sample_bipartite_regular(8, 3, seed));
            let m = SpinModel::hard_core(8.0, 3).unwrap();
            let s = z_alpha_beta_table(&g, &m).unwrap();
            if s.dominant_cell.0 != s.dominant_cell.1 {
                hits += 1;
            }
        }
        assert!(hits >= 4, "only {hits}/5 off-diagonal");
    }

    #[test]
    fn pair_overlap_trivial_counts() {
        // B₁=B₂=λ=1: entry (γ,δ) counts pairs of configurations, i.e.
        // C(n,an)C(an,γ)C(n−an,an−γ) × (same on the other side).
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(4, 2, 2));
        let m = SpinModel::new(1.0, 1.0, 1.0, 2).unwrap();
        let t = pair_overlap_statistics(&g, &m, 0.5, 0.5).unwrap();
        for gm in 0..=2usize {
            for dl in 0..=2usize {
                let side = |k: usize| binom(4, 2) * binom(2, k) * binom(2, 2 - k);
                assert_relative_eq!(t.table[gm][dl], side(gm) * side(dl), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn pair_overlap_matches_brute_force() {
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(4, 2, 7));
        let m = SpinModel::ising(0.5, 2).unwrap();
        let (a_n, b_n) = (2usize, 2usize);
        let t = pair_overlap_statistics(&g, &m, 0.5, 0.5).unwrap();

        // Independent double loop over full configurations of both sides.
        let weight = |s1: u32, s2: u32| -> f64 {
            let mut w = m.lambda.powi((s1.count_ones() + s2.count_ones()) as i32);
            for i in 0..4 {
                for &r in &g.adj[i] {
                    let a = if s1 >> i & 1 == 1 { -1 } else { 1 };
                    let b = if s2 >> r & 1 == 1 { -1 } else { 1 };
                    w *= m.edge_weight(a, b);
                }
            }
            w
        };
        let mut expect = vec![vec![0.0f64; b_n + 1]; a_n + 1];
        for s1 in 0u32..16 {
            for s2 in 0u32..16 {
                if s1.count_ones() as usize != a_n || s2.count_ones() as usize != b_n {
                    continue;
                }
                for t1 in 0u32..16 {
                    for t2 in 0u32..16 {
                        if t1.count_ones() as usize != a_n || t2.count_ones() as usize != b_n {
                            continue;
                        }
                        let gm = (s1 & t1).count_ones() as usize;
                        let dl = (s2 & t2).count_ones() as usize;
                        expect[gm][dl] += weight(s1, s2) * weight(t1, t2);
                    }
                }
            }
        }
        for gm in 0..=a_n {
            for dl in 0..=b_n {
                assert_relative_eq!(t.table[gm][dl], expect[gm][dl], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gadget_empty_clamp_reduces_to_table() {
        // An m′=0 gadget core is just a Δ-regular graph on W ∪ W.
        let n = 6;
        let mut g = sample_gadget(64, 3, 0.2, 0.4, 9).unwrap();
        g.n = n;
        g.params = GadgetParams { theta: 0.0, psi: 0.0, k: 0, ell: 0, m_prime: 0, size_warning: false };
        let base = sample_bipartite_regular(n, 3, 9);
        g.full_matchings = base.matchings[..2].to_vec();
        g.w_matching = base.matchings[2].clone();
        let m = SpinModel::hard_core(3.0, 3).unwrap();
        let cond = gadget_conditional_z(&g, &m, &[], &[]).unwrap();
        let full = z_alpha_beta_table(&OracleGraph::from_bipartite(&base), &m).unwrap();
        for a in 0..=n {
            for b in 0..=n {
                assert_relative_eq!(
                    cond.log_z_table[a][b],
                    full.log_z_table[a][b],
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn hardcore_plus_clamp_equals_deletion() {
        let g = sample_gadget(16, 3, 0.25, 0.1, 3).unwrap();
        assert_eq!(g.params.m_prime, 2);
        let m = SpinModel::hard_core(2.0, 3).unwrap();
        let cond = gadget_conditional_z(&g, &m, &[1, 1], &[1, 1]).unwrap();

        // Same core with U deleted: drop U vertices and incident edges.
        let og = OracleGraph::from_gadget_core(&g);
        let adj: Vec<Vec<u32>> = (0..g.n)
            .map(|i| og.adj[i].iter().copied().filter(|&r| (r as usize) < g.n).collect())
            .collect();
        let reduced = OracleGraph::new(g.n, g.n, adj).unwrap();
        let full = z_alpha_beta_table(&reduced, &m).unwrap();
        for a in 0..=g.n {
            for b in 0..=g.n {
                let (x, y) = (cond.log_z_table[a][b], full.log_z_table[a][b]);
                if x == f64::NEG_INFINITY && y == f64::NEG_INFINITY {
                    continue;
                }
                assert_relative_eq!(x, y, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn glauber_uniform_marginals() {
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(4, 2, 1));
        let m = SpinModel::new(1.0, 1.0, 1.0, 2).unwrap();
        let r = glauber_run(&g, &m, 200_000, 11).unwrap();
        for &p in &r.minus_marginals {
            assert!((p - 0.5).abs() < 0.05, "marginal {p}");
        }
        assert!(r.sign_flips > 10);
        assert!(!r.censored);
    }

    #[test]
    fn glauber_stationarity_vs_exact() {
        // n=3 per side, exact per-vertex marginals by brute force.
        let g = OracleGraph::from_bipartite(&sample_bipartite_regular(3, 2, 4));
        let m = SpinModel::new(0.5, 1.5, 2.0, 2).unwrap();
        let mut z = 0.0f64;
        let mut minus_mass = vec![0.0f64; 6];
        for s1 in 0u32..8 {
            for s2 in 0u32..8 {
                let mut w = m.lambda.powi((s1.count_ones() + s2.count_ones()) as i32);
                for i in 0..3 {
                    for &r in &g.adj[i] {
                        let a = if s1 >> i & 1 == 1 { -1 } else { 1 };
                        let b = if s2 >> r & 1 == 1 { -1 } else { 1 };
                        w *= m.edge_weight(a, b);
                    }
                }
                z += w;
                for v in 0..3 {
                    if s1 >> v & 1 == 1 {
                        minus_mass[v] += w;
                    }
                    if s2 >> v & 1 == 1 {
                        minus_mass[3 + v] += w;
                    }
                }
            }
        }
        let r = glauber_run(&g, &m, 1_000_000, 2).unwrap();
        for v in 0..6 {
            let exact = minus_mass[v] / z;
            assert!(
                (r.minus_marginals[v] - exact).abs() < 0.01,
                "vertex {v}: {} vs {exact}",
                r.minus_marginals[v]
            );
        }
    }

    #[test]
    fn gadget_guard() {
        let g = GadgetGraph {
            n: 17,
            delta: 3,
            full_matchings: vec![],
            w_matching: vec![],
            params: GadgetParams { theta: 0.2, psi: 0.4, k: 2, ell: 0, m_prime: 2, size_warning: false },
            seed: 0,
        };
        let m = SpinModel::hard_core(1.0, 3).unwrap();
        assert!(matches!(
            gadget_conditional_z(&g, &m, &[1, 1], &[1, 1]),
            Err(Error::GuardExceeded { .. })
        ));
    }
}
