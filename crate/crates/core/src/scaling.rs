//! Constrained entropy maximization by matrix scaling.
//!
//! Maximizes g(Z) = ΣΣ (Z_ij ln M_ij − Z_ij ln Z_ij) over nonnegative Z
//! with prescribed row sums α and column sums β (Z_ij forced to 0 where
//! M_ij = 0). The maximizer has the product form Z*_ij = M_ij R_i C_j for
//! positive scalers R, C, which are found by alternating marginal fitting.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{Error, Result};

/// Default maximum marginal residual.
pub const SCALING_TOL: f64 = 1e-13;
/// Default sweep cap.
pub const SCALING_MAX_SWEEPS: usize = 100_000;

/// Prescribed row/column marginals; both must sum to the same total
/// (normalized to 1 in all uses here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

impl MarginalSpec {
    pub fn new(rows: Vec<f64>, cols: Vec<f64>) -> Result<Self> {
        if rows.iter().chain(cols.iter()).any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::BadArgument("marginals must be finite and >= 0".into()));
        }
        let sr: f64 = rows.iter().sum();
        let sc: f64 = cols.iter().sum();
        if (sr - sc).abs() > 1e-12 * sr.abs().max(1.0) {
            return Err(Error::BadArgument(format!(
                "row marginals sum to {sr}, column marginals to {sc}"
            )));
        }
        Ok(Self { rows, cols })
    }
}

/// Maximizer of the constrained entropy program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingSolution {
    /// Row scalers, gauge-fixed so the first row with positive marginal
    /// has R = 1. Rows with zero marginal carry R = 0.
    pub r: Vec<f64>,
    /// Column scalers; columns with zero marginal carry C = 0.
    pub c: Vec<f64>,
    /// The maximizing matrix, Z*_ij = M_ij R_i C_j.
    pub z: Vec<Vec<f64>>,
    /// Optimum value g(Z*) in nats.
    pub g_star: f64,
    /// Final maximum marginal residual.
    pub residual: f64,
    /// Sweeps used.
    pub sweeps: usize,
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Direct evaluation of g(Z) = ΣΣ (Z ln M − Z ln Z) with the 0·ln 0 = 0
/// convention; −∞ if some Z_ij > 0 where M_ij = 0.
pub fn entropy_objective(m: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let mut g = 0.0;
    for (mr, zr) in m.iter().zip(z.iter()) {
        for (&mij, &zij) in mr.iter().zip(zr.iter()) {
            if zij > 0.0 {
                if mij <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                g += zij * mij.ln() - xlnx(zij);
            }
        }
    }
    g
}

/// Feasibility of the transportation polytope restricted to the support
/// of M, by the Hall-type condition: for every subset S of rows,
/// Σ_{i∈S} α_i ≤ Σ_{j reachable from S} β_j (and symmetrically).
/// Matrices here are tiny, so the 2^m subset scan is fine.
fn check_support_feasible(m: &[Vec<f64>], spec: &MarginalSpec) -> Result<()> {
    let (nr, nc) = (spec.rows.len(), spec.cols.len());
    let tol = 1e-12;
    for mask in 1u32..(1 << nr) {
        let mut need = 0.0;
        let mut have = 0.0;
        for j in 0..nc {
            if (0..nr).any(|i| mask & (1 << i) != 0 && m[i][j] > 0.0) {
                have += spec.cols[j];
            }
        }
        for (i, &a) in spec.rows.iter().enumerate() {
            if mask & (1 << i) != 0 {
                need += a;
            }
        }
        if need > have + tol {
            return Err(Error::Infeasible(format!(
                "row set {mask:#b} demands mass {need} but its support columns only offer {have}"
            )));
        }
    }
    for mask in 1u32..(1 << nc) {
        let mut need = 0.0;
        let mut have = 0.0;
        for i in 0..nr {
            if (0..nc).any(|j| mask & (1 << j) != 0 && m[i][j] > 0.0) {
                have += spec.rows[i];
            }
        }
        for (j, &b) in spec.cols.iter().enumerate() {
            if mask & (1 << j) != 0 {
                need += b;
            }
        }
        if need > have + tol {
            return Err(Error::Infeasible(format!(
                "column set {mask:#b} demands mass {need} but its support rows only offer {have}"
            )));
        }
    }
    Ok(())
}

fn validate_inputs(m: &[Vec<f64>], spec: &MarginalSpec) -> Result<()> {
    let (nr, nc) = (spec.rows.len(), spec.cols.len());
    if m.len() != nr || m.iter().any(|r| r.len() != nc) {
        return Err(Error::BadArgument("matrix shape does not match marginals".into()));
    }
    if nr > 16 || nc > 16 {
        return Err(Error::GuardExceeded {
            what: "maximize_entropy",
            constraint: "matrix side <= 16",
            actual: format!("{nr}x{nc}"),
        });
    }
    if m.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::BadArgument("matrix entries must be finite and >= 0".into()));
    }
    for (i, &a) in spec.rows.iter().enumerate() {
        if a > 0.0 && m[i].iter().all(|&x| x == 0.0) {
            return Err(Error::Infeasible(format!("row {i} has positive marginal but empty support")));
        }
    }
    for (j, &b) in spec.cols.iter().enumerate() {
        if b > 0.0 && (0..nr).all(|i| m[i][j] == 0.0) {
            return Err(Error::Infeasible(format!(
                "column {j} has positive marginal but empty support"
            )));
        }
    }
    check_support_feasible(m, spec)
}

/// When a Hall condition is tight — a row set S whose support columns
/// N(S) have exactly the mass S demands — every feasible Z gives all of
/// N(S) to S, so the complement rows carry zero there. Zeroing those
/// entries decouples the blocks; without this the alternating updates
/// converge only at rate 1/k on such instances.
fn pin_tight_blocks(m: &mut [Vec<f64>], spec: &MarginalSpec) {
    let (nr, nc) = (spec.rows.len(), spec.cols.len());
    let tol = 1e-12;
    let mut changed = true;
    while changed {
        changed = false;
        for mask in 1u32..((1 << nr) - 1) {
            let cols: Vec<usize> = (0..nc)
                .filter(|&j| (0..nr).any(|i| mask & (1 << i) != 0 && m[i][j] > 0.0))
                .collect();
            let need: f64 =
                (0..nr).filter(|&i| mask & (1 << i) != 0).map(|i| spec.rows[i]).sum();
            let have: f64 = cols.iter().map(|&j| spec.cols[j]).sum();
            if (need - have).abs() <= tol {
                for i in (0..nr).filter(|&i| mask & (1 << i) == 0) {
                    for &j in &cols {
                        if m[i][j] > 0.0 {
                            m[i][j] = 0.0;
                            changed = true;
                        }
                    }
                }
            }
        }
        for mask in 1u32..((1 << nc) - 1) {
            let rows: Vec<usize> = (0..nr)
                .filter(|&i| (0..nc).any(|j| mask & (1 << j) != 0 && m[i][j] > 0.0))
                .collect();
            let need: f64 =
                (0..nc).filter(|&j| mask & (1 << j) != 0).map(|j| spec.cols[j]).sum();
            let have: f64 = rows.iter().map(|&i| spec.rows[i]).sum();
            if (need - have).abs() <= tol {
                for j in (0..nc).filter(|&j| mask & (1 << j) == 0) {
                    for &i in &rows {
                        if m[i][j] > 0.0 {
                            m[i][j] = 0.0;
                            changed = true;
                        }
                    }
                }
            }
        }
    }
}

/// Maximize with explicit tolerance and sweep cap.
pub fn maximize_entropy_with(
    m: &[Vec<f64>],
    spec: &MarginalSpec,
    tol: f64,
    max_sweeps: usize,
) -> Result<ScalingSolution> {
    validate_inputs(m, spec)?;
    let mut m_owned: Vec<Vec<f64>> = m.to_vec();
    pin_tight_blocks(&mut m_owned, spec);
    let g_of = m; // original matrix, used only for the objective value
    let m = &m_owned;
    let (nr, nc) = (spec.rows.len(), spec.cols.len());

    // Rows/columns with zero marginal are dropped (their Z entries are 0).
    let active_row: Vec<bool> = spec.rows.iter().map(|&a| a > 0.0).collect();
    let active_col: Vec<bool> = spec.cols.iter().map(|&b| b > 0.0).collect();

    let mut r = vec![0.0f64; nr];
    let mut c: Vec<f64> = (0..nc).map(|j| if active_col[j] { 1.0 } else { 0.0 }).collect();

    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < max_sweeps {
        sweeps += 1;
        for i in 0..nr {
            if active_row[i] {
                let s: f64 = (0..nc).map(|j| m[i][j] * c[j]).sum();
                r[i] = spec.rows[i] / s;
            }
        }
        for j in 0..nc {
            if active_col[j] {
                let s: f64 = (0..nr).map(|i| m[i][j] * r[i]).sum();
                c[j] = spec.cols[j] / s;
            }
        }
        // Column sums are exact right after the C update; measure rows.
        residual = 0.0;
        for i in 0..nr {
            let s: f64 = (0..nc).map(|j| m[i][j] * r[i] * c[j]).sum();
            residual = residual.max((s - spec.rows[i]).abs());
        }
        if residual < tol {
            break;
        }
    }
    if !(residual < tol.max(1e-12)) {
        return Err(Error::NonConvergence { residual, iters: sweeps });
    }

    // Gauge: first active row gets R = 1.
    if let Some(i0) = (0..nr).find(|&i| active_row[i]) {
        let t = r[i0];
        for ri in r.iter_mut() {
            *ri /= t;
        }
        for cj in c.iter_mut() {
            *cj *= t;
        }
    }

    let z: Vec<Vec<f64>> =
        (0..nr).map(|i| (0..nc).map(|j| m[i][j] * r[i] * c[j]).collect()).collect();
    let g_star = entropy_objective(g_of, &z);
    Ok(ScalingSolution { r, c, z, g_star, residual, sweeps })
}

/// Maximize the constrained entropy program with default tolerances.
pub fn maximize_entropy(m: &[Vec<f64>], spec: &MarginalSpec) -> Result<ScalingSolution> {
    maximize_entropy_with(m, spec, SCALING_TOL, SCALING_MAX_SWEEPS)
}

/// Envelope derivative of g* along a marginal perturbation:
/// dg*/du = −Σ ln(R_i)·dα_i/du − Σ ln(C_j)·dβ_j/du.
///
/// Requires strictly positive marginals (interior point); the value is
/// gauge-independent because Σ dα_i = Σ dβ_j holds for admissible
/// perturbations (total mass is conserved).
pub fn gstar_gradient(
    sol: &ScalingSolution,
    spec: &MarginalSpec,
    dalpha: &[f64],
    dbeta: &[f64],
) -> Result<f64> {
    if spec.rows.iter().any(|&a| a <= 0.0) || spec.cols.iter().any(|&b| b <= 0.0) {
        return Err(Error::BadArgument(
            "gradient formula requires strictly positive marginals".into(),
        ));
    }
    let da: f64 = dalpha.iter().sum();
    let db: f64 = dbeta.iter().sum();
    if (da - db).abs() > 1e-9 {
        return Err(Error::BadArgument(
            "marginal perturbation must conserve total mass".into(),
        ));
    }
    let mut g = 0.0;
    for (ri, &d) in sol.r.iter().zip(dalpha) {
        g -= ri.ln() * d;
    }
    for (cj, &d) in sol.c.iter().zip(dbeta) {
        g -= cj.ln() * d;
    }
    Ok(g)
}

/// Check that g decays quadratically at Z*: the Hessian of the
/// full-dimensional representation (free variables Z_ij with the last row
/// and column eliminated through the marginals) is negative definite.
/// Requires strictly positive M (interior maximizer).
pub fn quadratic_decay_check(m: &[Vec<f64>], spec: &MarginalSpec) -> Result<bool> {
    if m.iter().flatten().any(|&x| x <= 0.0) {
        return Err(Error::BadArgument(
            "quadratic decay check requires strictly positive support".into(),
        ));
    }
    let sol = maximize_entropy(m, spec)?;
    let (nr, nc) = (spec.rows.len(), spec.cols.len());
    let nfree = (nr - 1) * (nc - 1);
    if nfree == 0 {
        return Ok(true);
    }
    // g = Σ (Z_kl ln M_kl − Z_kl ln Z_kl) with all 16 entries affine in the
    // free block; Hess = −Σ_kl (1/Z_kl) ∇Z_kl ∇Z_klᵀ with constant ∇Z_kl:
    //   ∂Z_kl/∂Z_ij = [k=i][l=j] − [k=i][l=n−1] − [k=m−1][l=j] + [k=m−1][l=n−1]
    // for free (i,j), i<m−1, j<n−1.
    let mut h = DMatrix::<f64>::zeros(nfree, nfree);
    let idx = |i: usize, j: usize| i * (nc - 1) + j;
    for k in 0..nr {
        for l in 0..nc {
            let w = -1.0 / sol.z[k][l];
            let mut grad = vec![0.0f64; nfree];
            for i in 0..nr - 1 {
                for j in 0..nc - 1 {
                    let mut g = 0.0;
                    if k == i && l == j {
                        g += 1.0;
                    }
                    if k == i && l == nc - 1 {
                        g -= 1.0;
                    }
                    if k == nr - 1 && l == j {
                        g -= 1.0;
                    }
                    if k == nr - 1 && l == nc - 1 {
                        g += 1.0;
                    }
                    grad[idx(i, j)] = g;
                }
            }
            for a in 0..nfree {
                for b in 0..nfree {
                    h[(a, b)] += w * grad[a] * grad[b];
                }
            }
        }
    }
    let eig = h.symmetric_eigenvalues();
    Ok(eig.iter().all(|&e| e < 0.0))
}
