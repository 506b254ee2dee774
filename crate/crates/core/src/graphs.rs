//! Random bipartite Δ-regular multigraphs (unions of perfect matchings),
//! the two-layer gadget ensemble, exact small-cycle counting, and the
//! cycle-weight transition-matrix spectrum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{Error, Result, SpinModel};
use crate::rng::{random_permutation, rng_for, RNG_ID};
use crate::tree::TreePhaseData;

/// Bipartite multigraph on n+n vertices formed by Δ perfect matchings;
/// matching k joins left vertex i to right vertex `matchings[k][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteMultigraph {
    pub n: usize,
    pub delta: u32,
    pub matchings: Vec<Vec<u32>>,
    pub seed: u64,
}

impl BipartiteMultigraph {
    /// Inverse of matching k: `inv[k][r]` is the left endpoint of the
    /// color-k edge at right vertex r.
    pub fn inverse_matchings(&self) -> Vec<Vec<u32>> {
        self.matchings
            .iter()
            .map(|m| {
                let mut inv = vec![0u32; self.n];
                for (i, &r) in m.iter().enumerate() {
                    inv[r as usize] = i as u32;
                }
                inv
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.matchings.len() != self.delta as usize {
            return Err(Error::BadArgument("matching count != delta".into()));
        }
        for m in &self.matchings {
            if m.len() != self.n {
                return Err(Error::BadArgument("matching length != n".into()));
            }
            let mut seen = vec![false; self.n];
            for &r in m {
                let r = r as usize;
                if r >= self.n || seen[r] {
                    return Err(Error::BadArgument("matching is not a permutation".into()));
                }
                seen[r] = true;
            }
        }
        Ok(())
    }
}

/// Draw Δ independent uniform matchings from the seeded generator.
pub fn sample_bipartite_regular(n: usize, delta: u32, seed: u64) -> BipartiteMultigraph {
    let mut rng = rng_for(seed, 0);
    let matchings = (0..delta).map(|_| random_permutation(n, &mut rng)).collect();
    BipartiteMultigraph { n, delta, matchings, seed }
}

/// Gadget ensemble parameters derived from (n, Δ, θ, ψ):
/// k = (Δ−1)^⌊θ log_{Δ−1} n⌋, ℓ = 2⌊(ψ/2) log_{Δ−1} n⌋, m′ = k(Δ−1)^ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GadgetParams {
    pub theta: f64,
    pub psi: f64,
    pub k: usize,
    pub ell: u32,
    pub m_prime: usize,
    /// Set when m′ ≥ n^{1/4}: the construction is outside its intended
    /// asymptotic regime at this size.
    pub size_warning: bool,
}

impl GadgetParams {
    pub fn derive(n: usize, delta: u32, theta: f64, psi: f64) -> Result<Self> {
        if delta < 3 {
            return Err(Error::DegreeTooSmall { required: 3, actual: delta });
        }
        if n < 2 || !(theta > 0.0) || !(psi > 0.0) {
            return Err(Error::BadArgument("need n >= 2, theta > 0, psi > 0".into()));
        }
        let base = (delta - 1) as f64;
        let log_n = (n as f64).ln() / base.ln();
        let k = base.powi((theta * log_n).floor() as i32) as usize;
        let ell = 2 * ((psi / 2.0) * log_n).floor() as u32;
        let m_prime = k * (delta as usize - 1).pow(ell);
        let size_warning = (m_prime as f64) >= (n as f64).powf(0.25);
        Ok(Self { theta, psi, k, ell, m_prime, size_warning })
    }
}

/// The gadget graph: a bipartite core on sides W ∪ U of size n + m′
/// (Δ−1 full matchings plus one matching joining W₊ to W₋ only), with k
/// disjoint (Δ−1)-ary trees of depth ℓ appended per side whose leaves
/// partition U. Side layout: vertices 0..n are W, n..n+m′ are U.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetGraph {
    pub n: usize,
    pub delta: u32,
    /// Δ−1 permutations of {0..n+m′−1}.
    pub full_matchings: Vec<Vec<u32>>,
    /// Permutation of {0..n−1}: the W₊↔W₋ matching.
    pub w_matching: Vec<u32>,
    pub params: GadgetParams,
    pub seed: u64,
}

impl GadgetGraph {
    pub fn side_size(&self) -> usize {
        self.n + self.params.m_prime
    }

    /// Number of internal (non-leaf) vertices of one appended tree:
    /// Σ_{j<ℓ} (Δ−1)^j. Zero when ℓ = 0 (the tree degenerates to its
    /// root, which is then the U vertex itself).
    pub fn internal_nodes_per_tree(&self) -> usize {
        let b = self.delta as usize - 1;
        (0..self.params.ell).map(|j| b.pow(j)).sum()
    }

    /// Total vertex count of the full gadget (core plus tree internals).
    pub fn total_vertices(&self) -> usize {
        2 * self.side_size() + 2 * self.params.k * self.internal_nodes_per_tree()
    }

    /// Leaf U-index (0-based within U) of leaf q of tree t: leaves are
    /// assigned to U in index order, deterministically.
    pub fn leaf_u_index(&self, tree: usize, leaf: usize) -> usize {
        tree * (self.delta as usize - 1).pow(self.params.ell) + leaf
    }

    /// Degrees of all vertices of the full gadget, grouped by class.
    pub fn degree_audit(&self) -> DegreeAudit {
        let b = self.delta as usize - 1;
        let ell = self.params.ell;
        // Core side vertices: Δ−1 matching edges each; W additionally one
        // W-matching edge; U additionally one tree edge when ℓ > 0.
        let w_degree = b + 1;
        let u_degree = if ell > 0 { b + 1 } else { b };
        // Tree internals: the root has Δ−1 children; deeper internal
        // vertices have Δ−1 children plus a parent.
        let root_degree = if ell > 0 { b } else { u_degree };
        let internal_degree = b + 1;
        DegreeAudit {
            w_degree,
            u_degree,
            root_degree,
            internal_degree,
            internal_per_tree: self.internal_nodes_per_tree(),
            total_vertices: self.total_vertices(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeAudit {
    pub w_degree: usize,
    pub u_degree: usize,
    pub root_degree: usize,
    pub internal_degree: usize,
    pub internal_per_tree: usize,
    pub total_vertices: usize,
}

/// Sample a gadget: Δ−1 uniform matchings over the full sides, one
/// uniform matching on W, deterministic trees.
pub fn sample_gadget(n: usize, delta: u32, theta: f64, psi: f64, seed: u64) -> Result<GadgetGraph> {
    let params = GadgetParams::derive(n, delta, theta, psi)?;
    let mut rng = rng_for(seed, 0);
    let side = n + params.m_prime;
    let full_matchings =
        (0..delta - 1).map(|_| random_permutation(side, &mut rng)).collect();
    let w_matching = random_permutation(n, &mut rng);
    Ok(GadgetGraph { n, delta, full_matchings, w_matching, params, seed })
}

/// Phase of a configuration on the gadget: + iff W₊ carries strictly
/// more −1 spins than W₋; ties (and deficits) map to −.
pub fn phase(sigma_plus_w: &[i8], sigma_minus_w: &[i8]) -> i8 {
    let minus = |s: &[i8]| s.iter().filter(|&&x| x == -1).count();
    if minus(sigma_plus_w) > minus(sigma_minus_w) {
        1
    } else {
        -1
    }
}

/// Expected number of i-cycles in the matching-union ensemble:
/// λ_i = r(Δ, i)/i with r(Δ, i) = (Δ−1)^i + (−1)^i (Δ−1).
pub fn expected_cycle_rate(delta: u32, i: u32) -> f64 {
    let d = delta as f64 - 1.0;
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    (d.powi(i as i32) + sign * d) / i as f64
}

/// Exact counts of cycles of length 2..=max_len (odd entries are zero in
/// a bipartite graph). A 2-cycle is an unordered pair of parallel edges;
/// every cycle is counted once, not per rooting or orientation.
pub fn count_cycles(g: &BipartiteMultigraph, max_len: usize) -> Result<Vec<u64>> {
    if max_len > 12 {
        return Err(Error::GuardExceeded {
            what: "count_cycles",
            constraint: "max_len <= 12",
            actual: max_len.to_string(),
        });
    }
    g.validate()?;
    let inv = g.inverse_matchings();
    let delta = g.delta as usize;
    let mut twice_counts = vec![0u64; max_len + 1]; // index = length
    // Edges are identified by (left endpoint, color). A cycle visits
    // alternating left/right vertices; we root it at its smallest left
    // vertex s and walk in both directions, so each cycle is found twice.
    let mut visited_l = vec![false; g.n];
    let mut visited_r = vec![false; g.n];

    struct Ctx<'a> {
        g: &'a BipartiteMultigraph,
        inv: &'a [Vec<u32>],
        delta: usize,
        max_len: usize,
    }

    fn dfs(
        ctx: &Ctx,
        s: usize,
        u: usize,
        len: usize,
        visited_l: &mut [bool],
        visited_r: &mut [bool],
        counts: &mut [u64],
    ) {
        for k in 0..ctx.delta {
            let r = ctx.g.matchings[k][u] as usize;
            if visited_r[r] {
                continue;
            }
            for k2 in 0..ctx.delta {
                let l = ctx.inv[k2][r] as usize;
                if l == u && k2 == k {
                    continue; // same edge
                }
                if l == s {
                    // Cycle of length len + 2 closes at the root.
                    counts[len + 2] += 1;
                } else if l > s && !visited_l[l] && len + 4 <= ctx.max_len {
                    visited_r[r] = true;
                    visited_l[l] = true;
                    dfs(ctx, s, l, len + 2, visited_l, visited_r, counts);
                    visited_l[l] = false;
                    visited_r[r] = false;
                }
            }
        }
    }

    let ctx = Ctx { g, inv: &inv, delta, max_len };
    for s in 0..g.n {
        visited_l[s] = true;
        dfs(&ctx, s, s, 0, &mut visited_l, &mut visited_r, &mut twice_counts);
        visited_l[s] = false;
    }

    Ok((2..=max_len).map(|len| twice_counts[len] / 2).collect())
}

/// Spectrum report for the cycle-weight transition matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Numeric eigenvalues, descending.
    pub eigenvalues: [f64; 4],
    /// Closed forms: e₁ = −e₂, e₃ = −e₄.
    pub e1_closed: f64,
    pub e3_closed: f64,
    /// The scale factor x multiplying the eigenvalues in the walk sum.
    pub x: f64,
    /// (x·e₁)² — must equal ω.
    pub xe1_squared: f64,
}

/// Build the 4×4 transition matrix whose closed walks weight the
/// conditioned cycle moments, compute its spectrum numerically, and
/// compare with the closed-form eigenvalues. Requires B₁ > 0.
pub fn transition_matrix_spectrum(m: &SpinModel, data: &TreePhaseData) -> Result<SpectrumReport> {
    if !(m.b1 > 0.0) {
        return Err(Error::BadArgument(
            "transition matrix entries are only defined for b1 > 0".into(),
        ));
    }
    let (qp, qm) = (data.big_q_plus, data.big_q_minus);
    let (b1, b2) = (m.b1, m.b2);
    let x = 1.0 / (b1 * ((b2 + qm) * (b2 + qp)).sqrt());
    let y = b1 * b1 * qp * (b2 + qm) / (1.0 + b1 * qm);
    let z = b1 * b1 * qm * (b2 + qp) / (1.0 + b1 * qp);
    let w = b1 * b2;
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, y, 0.0, y, //
            z, 0.0, z, 0.0, //
            0.0, 1.0, 0.0, w, //
            1.0, 0.0, w, 0.0,
        ],
    );
    let eig = a
        .eigenvalues()
        .ok_or_else(|| Error::ConsistencyFailure("transition matrix has complex spectrum".into()))?;
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|p, q| q.partial_cmp(p).unwrap());
    let e1_closed = b1 * (1.0 - b1 * b2) * (qp * qm / ((1.0 + b1 * qp) * (1.0 + b1 * qm))).sqrt();
    let e3_closed = b1 * ((b2 + qp) * (b2 + qm)).sqrt();
    let report = SpectrumReport {
        eigenvalues: [ev[0], ev[1], ev[2], ev[3]],
        e1_closed,
        e3_closed,
        x,
        xe1_squared: (x * e1_closed).powi(2),
    };
    // Numeric spectrum must be {±e₁, ±e₃}.
    let mut expect = [e1_closed, -e1_closed, e3_closed, -e3_closed];
    expect.sort_by(|p, q| q.partial_cmp(p).unwrap());
    for (num, cl) in report.eigenvalues.iter().zip(expect.iter()) {
        if (num - cl).abs() > 1e-9 * cl.abs().max(1.0) {
            return Err(Error::ConsistencyFailure(format!(
                "spectrum mismatch: numeric {num}, closed form {cl}"
            )));
        }
    }
    Ok(report)
}

/// On-disk JSON form of a graph artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub kind: String,
    pub n: usize,
    pub delta: u32,
    pub matchings: Vec<Vec<u32>>,
    pub labels: serde_json::Value,
    pub seed: u64,
    pub rng: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_matching: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gadget_params: Option<GadgetParams>,
}

impl GraphJson {
    pub fn from_bipartite(g: &BipartiteMultigraph) -> Self {
        GraphJson {
            kind: "bipartite_regular".into(),
            n: g.n,
            delta: g.delta,
            matchings: g.matchings.clone(),
            labels: serde_json::json!({}),
            seed: g.seed,
            rng: RNG_ID.into(),
            w_matching: None,
            gadget_params: None,
        }
    }

    pub fn from_gadget(g: &GadgetGraph) -> Self {
        GraphJson {
            kind: "gadget".into(),
            n: g.n,
            delta: g.delta,
            matchings: g.full_matchings.clone(),
            labels: serde_json::json!({
                "w": format!("0..{}", g.n),
                "u": format!("{}..{}", g.n, g.side_size()),
            }),
            seed: g.seed,
            rng: RNG_ID.into(),
            w_matching: Some(g.w_matching.clone()),
            gadget_params: Some(g.params),
        }
    }

    pub fn to_bipartite(&self) -> Result<BipartiteMultigraph> {
        if self.kind != "bipartite_regular" {
            return Err(Error::BadArgument(format!("expected bipartite_regular, got {}", self.kind)));
        }
        let g = BipartiteMultigraph {
            n: self.n,
            delta: self.delta,
            matchings: self.matchings.clone(),
            seed: self.seed,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_gadget(&self) -> Result<GadgetGraph> {
        if self.kind != "gadget" {
            return Err(Error::BadArgument(format!("expected gadget, got {}", self.kind)));
        }
        let params = self
            .gadget_params
            .ok_or_else(|| Error::BadArgument("gadget JSON missing gadget_params".into()))?;
        let w_matching = self
            .w_matching
            .clone()
            .ok_or_else(|| Error::BadArgument("gadget JSON missing w_matching".into()))?;
        Ok(GadgetGraph {
            n: self.n,
            delta: self.delta,
            full_matchings: self.matchings.clone(),
            w_matching,
            params,
            seed: self.seed,
        })
    }
}
