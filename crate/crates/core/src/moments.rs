//! First- and second-moment exponents of the occupancy-resolved partition
//! function on random bipartite Δ-regular graphs: the functions φ₁/φ₂ and
//! their critical-point structure, exact finite-n moments, asymptotic
//! prefactors, the moment-ratio limit, and gadget conditional-moment
//! ratios.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::model::{Error, Result, SpinModel};
use crate::oracle::logaddexp;
use crate::scaling::{
    gstar_gradient, maximize_entropy, MarginalSpec, ScalingSolution,
};
use crate::tree::{solve_tree_fixed_points, Regime, TreePhaseData};

/// 2×2 interaction matrix of single-configuration edge types, indexed by
/// the two endpoint spins in the order (−, +).
pub fn interaction_matrix_2(m: &SpinModel) -> Vec<Vec<f64>> {
    vec![vec![m.b1, 1.0], vec![1.0, m.b2]]
}

/// 4×4 interaction matrix of configuration-pair edge types, indexed by
/// spin pairs in the order (−−, −+, +−, ++).
pub fn interaction_matrix_4(m: &SpinModel) -> Vec<Vec<f64>> {
    let (b1, b2) = (m.b1, m.b2);
    vec![
        vec![b1 * b1, b1, b1, 1.0],
        vec![b1, b1 * b2, 1.0, b2],
        vec![b1, 1.0, b1 * b2, b2],
        vec![1.0, b2, b2, b2 * b2],
    ]
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// First-moment evaluation point: exponent φ₁(α,β) and maximizing 2×2
/// edge-type matrix X (row sums α,1−α; column sums β,1−β).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstMomentPoint {
    pub alpha: f64,
    pub beta: f64,
    pub x: [[f64; 2]; 2],
    /// Exponent in nats per side-vertex; −∞ when the occupancy pair is
    /// infeasible for the support (hard-core with α+β > 1).
    pub phi1: f64,
}

/// Second-moment evaluation point at fixed (α,β): exponent φ₂(γ,δ) and
/// maximizing 4×4 pair-edge-type matrix Y.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondMomentPoint {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub y: [[f64; 4]; 4],
    pub phi2: f64,
}

fn phi1_with_solution(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
) -> Result<(FirstMomentPoint, Option<ScalingSolution>)> {
    if !in_unit(alpha) || !in_unit(beta) {
        return Err(Error::BadArgument(format!("(alpha, beta) = ({alpha}, {beta}) not in [0,1]²")));
    }
    let spec = MarginalSpec::new(vec![alpha, 1.0 - alpha], vec![beta, 1.0 - beta])?;
    let sol = match maximize_entropy(&interaction_matrix_2(m), &spec) {
        Ok(sol) => sol,
        Err(Error::Infeasible(_)) => {
            let point = FirstMomentPoint {
                alpha,
                beta,
                x: [[0.0; 2]; 2],
                phi1: f64::NEG_INFINITY,
            };
            return Ok((point, None));
        }
        Err(e) => return Err(e),
    };
    let f1 = xlnx(alpha) + xlnx(1.0 - alpha) + xlnx(beta) + xlnx(1.0 - beta);
    let phi = (alpha + beta) * m.lambda.ln() + (m.delta as f64 - 1.0) * f1
        + m.delta as f64 * sol.g_star;
    let x = [[sol.z[0][0], sol.z[0][1]], [sol.z[1][0], sol.z[1][1]]];
    Ok((FirstMomentPoint { alpha, beta, x, phi1: phi }, Some(sol)))
}

/// First-moment exponent φ₁(α,β) = (α+β)ln λ + (Δ−1)f₁ + Δg₁ with f₁ the
/// negative occupancy entropy and g₁ the entropy-scaling optimum.
pub fn phi1(m: &SpinModel, alpha: f64, beta: f64) -> Result<FirstMomentPoint> {
    Ok(phi1_with_solution(m, alpha, beta)?.0)
}

/// Overlap simplex of the second moment at fixed (α,β): the four pair
/// classes (−−, −+, +−, ++) have masses (γ, α−γ, α−γ, 1−2α+γ).
fn overlap_classes(total: f64, joint: f64) -> Result<[f64; 4]> {
    let tol = 1e-12;
    let parts = [joint, total - joint, total - joint, 1.0 - 2.0 * total + joint];
    if parts.iter().any(|&p| p < -tol) {
        return Err(Error::OutOfRegion(format!(
            "overlap {joint} infeasible at occupancy {total}"
        )));
    }
    Ok(parts.map(|p| p.max(0.0)))
}

fn phi2_with_solution(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<(SecondMomentPoint, Option<ScalingSolution>)> {
    let l = overlap_classes(alpha, gamma)?;
    let r = overlap_classes(beta, delta)?;
    let spec = MarginalSpec::new(l.to_vec(), r.to_vec())?;
    let sol = match maximize_entropy(&interaction_matrix_4(m), &spec) {
        Ok(sol) => sol,
        Err(Error::Infeasible(_)) => {
            let point = SecondMomentPoint {
                alpha,
                beta,
                gamma,
                delta,
                y: [[0.0; 4]; 4],
                phi2: f64::NEG_INFINITY,
            };
            return Ok((point, None));
        }
        Err(e) => return Err(e),
    };
    let f2: f64 = l.iter().chain(r.iter()).map(|&p| xlnx(p)).sum();
    let phi = 2.0 * (alpha + beta) * m.lambda.ln() + (m.delta as f64 - 1.0) * f2
        + m.delta as f64 * sol.g_star;
    let mut y = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            y[i][j] = sol.z[i][j];
        }
    }
    Ok((SecondMomentPoint { alpha, beta, gamma, delta, y, phi2: phi }, Some(sol)))
}

/// Second-moment exponent φ₂(γ,δ) at fixed (α,β).
pub fn phi2(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<SecondMomentPoint> {
    Ok(phi2_with_solution(m, alpha, beta, gamma, delta)?.0)
}

/// Analytic gradient (∂φ₁/∂α, ∂φ₁/∂β) at an interior point.
pub fn phi1_gradient(m: &SpinModel, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let (_, sol) = phi1_with_solution(m, alpha, beta)?;
    let sol = sol.ok_or_else(|| Error::OutOfRegion("infeasible point".into()))?;
    let spec = MarginalSpec::new(vec![alpha, 1.0 - alpha], vec![beta, 1.0 - beta])?;
    let dm1 = m.delta as f64 - 1.0;
    let ga = m.lambda.ln()
        + dm1 * (alpha.ln() - (1.0 - alpha).ln())
        + m.delta as f64 * gstar_gradient(&sol, &spec, &[1.0, -1.0], &[0.0, 0.0])?;
    let gb = m.lambda.ln()
        + dm1 * (beta.ln() - (1.0 - beta).ln())
        + m.delta as f64 * gstar_gradient(&sol, &spec, &[0.0, 0.0], &[1.0, -1.0])?;
    Ok((ga, gb))
}

/// Analytic gradient (∂φ₂/∂γ, ∂φ₂/∂δ) at an interior overlap point.
pub fn phi2_gradient(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let (_, sol) = phi2_with_solution(m, alpha, beta, gamma, delta)?;
    let sol = sol.ok_or_else(|| Error::OutOfRegion("infeasible point".into()))?;
    let l = overlap_classes(alpha, gamma)?;
    let r = overlap_classes(beta, delta)?;
    let spec = MarginalSpec::new(l.to_vec(), r.to_vec())?;
    let dm1 = m.delta as f64 - 1.0;
    let dl = [1.0, -1.0, -1.0, 1.0];
    let zero = [0.0; 4];
    let gg = dm1 * (gamma.ln() - 2.0 * (alpha - gamma).ln() + (1.0 - 2.0 * alpha + gamma).ln())
        + m.delta as f64 * gstar_gradient(&sol, &spec, &dl, &zero)?;
    let gd = dm1 * (delta.ln() - 2.0 * (beta - delta).ln() + (1.0 - 2.0 * beta + delta).ln())
        + m.delta as f64 * gstar_gradient(&sol, &spec, &zero, &dl)?;
    Ok((gg, gd))
}

/// Closed-form first-moment maximizer at (α,β) = (p⁺,p⁻):
/// X* = (1/E₁)[[B₁Q⁻Q⁺, Q⁺],[Q⁻, B₂]].
pub fn closed_form_x_star(m: &SpinModel, data: &TreePhaseData) -> [[f64; 2]; 2] {
    let (qp, qm) = (data.big_q_plus, data.big_q_minus);
    let e1 = m.b2 + qp + qm + m.b1 * qp * qm;
    [[m.b1 * qm * qp / e1, qp / e1], [qm / e1, m.b2 / e1]]
}

/// Closed-form second-moment maximizer at (γ,δ) = (p⁺²,p⁻²): the tensor
/// square of X*.
pub fn closed_form_y_star(m: &SpinModel, data: &TreePhaseData) -> [[f64; 4]; 4] {
    let x = closed_form_x_star(m, data);
    let mut y = [[0.0; 4]; 4];
    for i1 in 0..2 {
        for i2 in 0..2 {
            for j1 in 0..2 {
                for j2 in 0..2 {
                    y[i1 * 2 + i2][j1 * 2 + j2] = x[i1][j1] * x[i2][j2];
                }
            }
        }
    }
    y
}

/// Exact finite-n first moment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactFirstMoment {
    pub n: usize,
    /// The integral occupancies actually used.
    pub a_n: usize,
    pub b_n: usize,
    /// log E[Z^{α,β}] over the Δ-matching ensemble.
    pub log_value: f64,
}

fn integral_count(x: f64, n: usize, name: &str) -> Result<usize> {
    let v = x * n as f64;
    let r = v.round();
    if (v - r).abs() > 1e-9 || r < -0.5 || r > n as f64 + 0.5 {
        return Err(Error::BadArgument(format!(
            "{name}·n = {v} is not an integer in [0, {n}]; round before calling"
        )));
    }
    Ok(r as usize)
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// k·ln x with the 0·ln 0 = 0 convention (−∞ for x = 0, k > 0).
fn pow_ln(x: f64, k: i64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.ln()
    }
}

/// Exact log E[Z^{α,β}]: per matching, the edge-type split between the
/// minus-classes of the two sides is hypergeometric, so
/// E = λ^{(α+β)n} C(n,αn) C(n,βn) · S^Δ with
/// S = Σ_x C(αn,xn) C((1−α)n,(β−x)n) / C(n,βn) · B₁^{xn} B₂^{(1−α−β+x)n}.
pub fn exact_first_moment(
    m: &SpinModel,
    n: usize,
    alpha: f64,
    beta: f64,
) -> Result<ExactFirstMoment> {
    let a = integral_count(alpha, n, "alpha")?;
    let b = integral_count(beta, n, "beta")?;
    let lo = (a + b).saturating_sub(n);
    let hi = a.min(b);
    let mut log_s = f64::NEG_INFINITY;
    for x in lo..=hi {
        let t = ln_binom(a, x) + ln_binom(n - a, b - x) - ln_binom(n, b)
            + pow_ln(m.b1, x as i64)
            + pow_ln(m.b2, n as i64 - a as i64 - b as i64 + x as i64);
        log_s = logaddexp(log_s, t);
    }
    let log_value = (a + b) as f64 * m.lambda.ln()
        + ln_binom(n, a)
        + ln_binom(n, b)
        + m.delta as f64 * log_s;
    Ok(ExactFirstMoment { n, a_n: a, b_n: b, log_value })
}

/// Exact finite-n second-moment term at one overlap cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactSecondMoment {
    pub n: usize,
    pub l_counts: [usize; 4],
    pub r_counts: [usize; 4],
    /// log E[Y^{γ,δ}] = log Σ_pairs w(σ)w(σ′) over the overlap cell.
    pub log_value: f64,
}

/// Exact log E[Y^{γ,δ}]: multinomials over the pair classes times the
/// Δ-th power of the hypergeometric table sum over 4×4 contingency
/// tables with the prescribed margins.
pub fn exact_second_moment_term(
    m: &SpinModel,
    n: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<ExactSecondMoment> {
    if n > 40 {
        return Err(Error::GuardExceeded {
            what: "exact_second_moment_term",
            constraint: "n <= 40 (use Monte Carlo beyond)",
            actual: n.to_string(),
        });
    }
    let a = integral_count(alpha, n, "alpha")?;
    let b = integral_count(beta, n, "beta")?;
    let g = integral_count(gamma, n, "gamma")?;
    let d = integral_count(delta, n, "delta")?;
    let classes = |tot: usize, joint: usize, name: &str| -> Result<[usize; 4]> {
        if joint > tot || tot > n || 2 * tot > n + joint {
            return Err(Error::OutOfRegion(format!(
                "{name}: counts (total {tot}, joint {joint}) outside the overlap region"
            )));
        }
        Ok([joint, tot - joint, tot - joint, n + joint - 2 * tot])
    };
    let l = classes(a, g, "left")?;
    let r = classes(b, d, "right")?;
    let mat = interaction_matrix_4(m);
    let ln_m: Vec<Vec<Option<f64>>> = mat
        .iter()
        .map(|row| row.iter().map(|&x| if x > 0.0 { Some(x.ln()) } else { None }).collect())
        .collect();
    let ln_mult = |tot: usize, parts: &[usize]| -> f64 {
        ln_gamma(tot as f64 + 1.0)
            - parts.iter().map(|&p| ln_gamma(p as f64 + 1.0)).sum::<f64>()
    };
    let base: f64 = r.iter().map(|&x| ln_gamma(x as f64 + 1.0)).sum::<f64>()
        - ln_gamma(n as f64 + 1.0);

    // Enumerate 4×4 tables y with row sums l and column sums r: rows 0–2
    // free (pruned by column remainders), row 3 forced.
    let mut log_bracket = f64::NEG_INFINITY;
    let mut y = [[0usize; 4]; 4];
    let mut rem = r;
    // Recursive enumeration kept iterative-friendly via nested closures
    // would be unwieldy; use an explicit recursive helper.
    fn rec(
        row: usize,
        l: &[usize; 4],
        rem: &mut [usize; 4],
        y: &mut [[usize; 4]; 4],
        ln_m: &[Vec<Option<f64>>],
        ln_mult: &dyn Fn(usize, &[usize]) -> f64,
        base: f64,
        acc: &mut f64,
    ) {
        if row == 3 {
            // Forced final row.
            if rem.iter().sum::<usize>() != l[3] {
                return;
            }
            for j in 0..4 {
                y[3][j] = rem[j];
            }
            let mut t = base;
            for i in 0..4 {
                t += ln_mult(l[i], &y[i]);
                for j in 0..4 {
                    match ln_m[i][j] {
                        Some(lm) => t += y[i][j] as f64 * lm,
                        None if y[i][j] > 0 => return,
                        None => {}
                    }
                }
            }
            *acc = logaddexp(*acc, t);
            return;
        }
        let li = l[row];
        for y0 in 0..=li.min(rem[0]) {
            for y1 in 0..=(li - y0).min(rem[1]) {
                for y2 in 0..=(li - y0 - y1).min(rem[2]) {
                    let y3 = li - y0 - y1 - y2;
                    if y3 > rem[3] {
                        continue;
                    }
                    y[row] = [y0, y1, y2, y3];
                    rem[0] -= y0;
                    rem[1] -= y1;
                    rem[2] -= y2;
                    rem[3] -= y3;
                    rec(row + 1, l, rem, y, ln_m, ln_mult, base, acc);
                    rem[0] += y0;
                    rem[1] += y1;
                    rem[2] += y2;
                    rem[3] += y3;
                }
            }
        }
    }
    rec(0, &l, &mut rem, &mut y, &ln_m, &ln_mult, base, &mut log_bracket);

    let log_value = 2.0 * (a + b) as f64 * m.lambda.ln()
        + ln_mult(n, &l)
        + ln_mult(n, &r)
        + m.delta as f64 * log_bracket;
    Ok(ExactSecondMoment { n, l_counts: l, r_counts: r, log_value })
}

/// Critical points of φ₁: (p⁺,p⁻), (p⁻,p⁺), (p*,p*) in non-uniqueness,
/// only (p*,p*) in uniqueness; each verified stationary, ‖∇φ₁‖ < 1e−8.
pub fn find_phi1_critical_points(m: &SpinModel) -> Result<Vec<(f64, f64)>> {
    let data = solve_tree_fixed_points(m)?;
    let points: Vec<(f64, f64)> = match data.regime {
        Regime::NonUniqueness => vec![
            (data.p_plus, data.p_minus),
            (data.p_minus, data.p_plus),
            (data.p_star, data.p_star),
        ],
        _ => vec![(data.p_star, data.p_star)],
    };
    for &(a, b) in &points {
        let (ga, gb) = phi1_gradient(m, a, b)?;
        let norm = ga.hypot(gb);
        if norm >= 1e-8 {
            return Err(Error::ConsistencyFailure(format!(
                "({a}, {b}) is not stationary: |grad phi1| = {norm:e}"
            )));
        }
    }
    Ok(points)
}

/// Full-dimensional Hessian of Φ₁ in the variables (α, β, x₁₁) with the
/// other X entries eliminated through the marginals. All entries of the
/// entropy part are −Σ_kl (1/x_kl)∇x_kl∇x_klᵀ with constant ∇x_kl.
fn phi1_full_hessian(m: &SpinModel, alpha: f64, beta: f64, x11: f64) -> DMatrix<f64> {
    let x = [
        [x11, alpha - x11],
        [beta - x11, 1.0 - alpha - beta + x11],
    ];
    // Gradients of the four entries w.r.t. (α, β, x₁₁).
    let grads = [
        ([0.0, 0.0, 1.0], x[0][0]),
        ([1.0, 0.0, -1.0], x[0][1]),
        ([0.0, 1.0, -1.0], x[1][0]),
        ([-1.0, -1.0, 1.0], x[1][1]),
    ];
    let mut h = DMatrix::<f64>::zeros(3, 3);
    let dm1 = m.delta as f64 - 1.0;
    h[(0, 0)] = dm1 * (1.0 / alpha + 1.0 / (1.0 - alpha));
    h[(1, 1)] = dm1 * (1.0 / beta + 1.0 / (1.0 - beta));
    for (v, xv) in grads {
        let w = -(m.delta as f64) / xv;
        for a in 0..3 {
            for b in 0..3 {
                h[(a, b)] += w * v[a] * v[b];
            }
        }
    }
    h
}

/// Determinants of the bottom-right k×k blocks of −H, k = 1..=dim.
fn bottom_right_minors(h: &DMatrix<f64>) -> Vec<f64> {
    let n = h.nrows();
    (1..=n)
        .map(|k| {
            let sub = h.view((n - k, n - k), (k, k)).map(|x| -x);
            sub.determinant()
        })
        .collect()
}

/// Classification of one φ₁ critical point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phi1Classification {
    pub alpha: f64,
    pub beta: f64,
    /// Bottom-right principal minors of the negated Hessian, variable
    /// order (α, β, x₁₁) for B₁B₂ > 0 (3 minors), (α, β) reduced for
    /// hard-core (2 minors).
    pub minors: Vec<f64>,
    /// Closed forms P₁, P₂, P₃ (only for B₁B₂ > 0).
    pub closed_form: Option<[f64; 3]>,
    pub is_local_max: bool,
}

fn closed_p123(m: &SpinModel, qx: f64, qy: f64, om: f64) -> [f64; 3] {
    let d = m.delta as f64;
    let dm1 = d - 1.0;
    let (b1, b2) = (m.b1, m.b2);
    let e1 = b2 + qx + qy + b1 * qx * qy;
    let e2 = b1 * qx * qy + b1 * b2 * (qx + qy) + b2;
    let p1 = d * e1 * e2 / (b1 * b2 * qx * qy);
    let p2 = d * e1 * e1 * (b2 + qy) * (1.0 + b1 * qy) * (1.0 + dm1 * om)
        / (b1 * b2 * qy * qy * qx);
    let p3 = d * e1.powi(4) * (1.0 - dm1 * dm1 * om) / (b1 * b2 * (qx * qy).powi(2));
    [p1, p2, p3]
}

/// Classify the φ₁ critical points via the closed-form Hessian minors
/// (B₁B₂ > 0), cross-checked against the assembled full-dimensional
/// Hessian within 1e−6 relative; hard-core uses a finite-difference
/// Hessian of the reduced φ₁(α,β).
pub fn classify_phi1_critical_points(m: &SpinModel) -> Result<Vec<Phi1Classification>> {
    let data = solve_tree_fixed_points(m)?;
    // Per point: (α, β, Q on the α side, Q on the β side, matching ω).
    let mut points: Vec<(f64, f64, f64, f64, f64)> = Vec::new();
    if data.regime == Regime::NonUniqueness {
        points.push((data.p_plus, data.p_minus, data.big_q_plus, data.big_q_minus, data.omega));
        points.push((data.p_minus, data.p_plus, data.big_q_minus, data.big_q_plus, data.omega));
    }
    points.push((data.p_star, data.p_star, data.big_q_star, data.big_q_star, data.omega_star));

    let mut out = Vec::new();
    for (a, b, qx, qy, om) in points {
        if m.b1 * m.b2 > 0.0 {
            let closed = closed_p123(m, qx, qy, om);
            let e1 = m.b2 + qx + qy + m.b1 * qx * qy;
            let x11 = m.b1 * qx * qy / e1;
            let h = phi1_full_hessian(m, a, b, x11);
            let minors = bottom_right_minors(&h);
            for (num, cl) in minors.iter().zip(closed.iter()) {
                if (num - cl).abs() > 1e-6 * cl.abs().max(1.0) {
                    return Err(Error::ConsistencyFailure(format!(
                        "Hessian minor mismatch at ({a}, {b}): numeric {num}, closed form {cl}"
                    )));
                }
            }
            let is_local_max = minors.iter().all(|&p| p > 0.0);
            out.push(Phi1Classification {
                alpha: a,
                beta: b,
                minors,
                closed_form: Some(closed),
                is_local_max,
            });
        } else {
            // Reduced 2×2 Hessian of φ₁(α,β) by central differences of
            // the analytic gradient.
            let h = 1e-6;
            let g = |x: f64, y: f64| phi1_gradient(m, x, y);
            let (gap, _) = g(a + h, b)?;
            let (gam, _) = g(a - h, b)?;
            let (gbp_a, gbp) = g(a, b + h)?;
            let (gbm_a, gbm) = g(a, b - h)?;
            let haa = (gap - gam) / (2.0 * h);
            let hbb = (gbp - gbm) / (2.0 * h);
            let hab = (gbp_a - gbm_a) / (2.0 * h);
            let minors = vec![-hbb, haa * hbb - hab * hab];
            let is_local_max = minors[0] > 0.0 && minors[1] > 0.0;
            out.push(Phi1Classification {
                alpha: a,
                beta: b,
                minors,
                closed_form: None,
                is_local_max,
            });
        }
    }
    Ok(out)
}

/// Full-dimensional Hessian of Φ₂ in (γ, δ, y₁₁..y₃₃): 11 variables,
/// with the last row/column of Y eliminated through the margins.
fn phi2_full_hessian(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    y: &[[f64; 4]; 4],
) -> DMatrix<f64> {
    let dim = 11;
    let dm1 = m.delta as f64 - 1.0;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    h[(0, 0)] = dm1
        * (1.0 / gamma + 2.0 / (alpha - gamma) + 1.0 / (1.0 - 2.0 * alpha + gamma));
    h[(1, 1)] =
        dm1 * (1.0 / delta + 2.0 / (beta - delta) + 1.0 / (1.0 - 2.0 * beta + delta));

    // dL_k/dγ = dR_k/dδ = (1, −1, −1, 1).
    let dmarg = [1.0, -1.0, -1.0, 1.0];
    let idx = |k: usize, l: usize| 2 + 3 * k + l; // free y_kl, k,l ∈ {0,1,2}
    for k in 0..4 {
        for l in 0..4 {
            let mut v = vec![0.0f64; dim];
            match (k < 3, l < 3) {
                (true, true) => v[idx(k, l)] = 1.0,
                (true, false) => {
                    // y_k4 = L_k − Σ_{l<3} y_kl
                    v[0] = dmarg[k];
                    for l2 in 0..3 {
                        v[idx(k, l2)] = -1.0;
                    }
                }
                (false, true) => {
                    // y_4l = R_l − Σ_{k<3} y_kl
                    v[1] = dmarg[l];
                    for k2 in 0..3 {
                        v[idx(k2, l)] = -1.0;
                    }
                }
                (false, false) => {
                    // y_44 = L_4 − (R_1+R_2+R_3) + Σ_{k,l<3} y_kl
                    v[0] = dmarg[3];
                    v[1] = -(dmarg[0] + dmarg[1] + dmarg[2]);
                    for k2 in 0..3 {
                        for l2 in 0..3 {
                            v[idx(k2, l2)] = 1.0;
                        }
                    }
                }
            }
            let w = -(m.delta as f64) / y[k][l];
            for a in 0..dim {
                if v[a] == 0.0 {
                    continue;
                }
                for b in 0..dim {
                    h[(a, b)] += w * v[a] * v[b];
                }
            }
        }
    }
    h
}

/// Report of the global-maximum verification of φ₂.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phi2MaxReport {
    pub alpha: f64,
    pub beta: f64,
    pub argmax: (f64, f64),
    pub phi2_max: f64,
    pub phi1_value: f64,
    /// ‖argmax − (α², β²)‖∞.
    pub position_error: f64,
    /// Closed forms of the 10×10 and 11×11 negated-Hessian minors
    /// (B₁B₂ > 0 only), and their assembled-Hessian counterparts.
    pub p10: Option<f64>,
    pub p11: Option<f64>,
    pub p10_numeric: Option<f64>,
    pub p11_numeric: Option<f64>,
}

/// Newton polish of φ₂ over (γ,δ) from a starting point, using the
/// analytic gradient and a finite-difference Hessian of it.
fn polish_phi2(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    mut g: f64,
    mut d: f64,
) -> Result<(f64, f64, f64)> {
    let (glo, ghi) = ((2.0 * alpha - 1.0).max(0.0), alpha);
    let (dlo, dhi) = ((2.0 * beta - 1.0).max(0.0), beta);
    let eps_g = 1e-12 * (ghi - glo).max(1e-6);
    let eps_d = 1e-12 * (dhi - dlo).max(1e-6);
    let clamp = |x: f64, lo: f64, hi: f64, e: f64| x.max(lo + e).min(hi - e);
    g = clamp(g, glo, ghi, eps_g);
    d = clamp(d, dlo, dhi, eps_d);
    for _ in 0..200 {
        let (gg, gd) = phi2_gradient(m, alpha, beta, g, d)?;
        if gg.hypot(gd) < 1e-11 {
            break;
        }
        let h = 1e-7;
        let (ggp, gdp) = phi2_gradient(m, alpha, beta, clamp(g + h, glo, ghi, eps_g), d)?;
        let (ggm, gdm) = phi2_gradient(m, alpha, beta, clamp(g - h, glo, ghi, eps_g), d)?;
        let (ggp2, gdp2) = phi2_gradient(m, alpha, beta, g, clamp(d + h, dlo, dhi, eps_d))?;
        let (ggm2, gdm2) = phi2_gradient(m, alpha, beta, g, clamp(d - h, dlo, dhi, eps_d))?;
        let h11 = (ggp - ggm) / (2.0 * h);
        let h22 = (gdp2 - gdm2) / (2.0 * h);
        let h12 = 0.5 * ((gdp - gdm) / (2.0 * h) + (ggp2 - ggm2) / (2.0 * h));
        let det = h11 * h22 - h12 * h12;
        let (sg, sd) = if det > 0.0 && h11 < 0.0 {
            // Newton step: solve H s = −grad.
            ((-gg * h22 + gd * h12) / det, (-gd * h11 + gg * h12) / det)
        } else {
            // Ascent fallback.
            (gg * 1e-4, gd * 1e-4)
        };
        let mut t = 1.0;
        let f0 = phi2(m, alpha, beta, g, d)?.phi2;
        loop {
            let (ng, nd) = (clamp(g + t * sg, glo, ghi, eps_g), clamp(d + t * sd, dlo, dhi, eps_d));
            let f1 = phi2(m, alpha, beta, ng, nd)?.phi2;
            if f1 >= f0 || t < 1e-8 {
                g = ng;
                d = nd;
                break;
            }
            t *= 0.5;
        }
        if (t * sg).abs() < 1e-14 && (t * sd).abs() < 1e-14 {
            break;
        }
    }
    let val = phi2(m, alpha, beta, g, d)?.phi2;
    Ok((g, d, val))
}

fn closed_p10_p11(m: &SpinModel, data: &TreePhaseData) -> (f64, f64) {
    let d = m.delta as f64;
    let dm1 = d - 1.0;
    let (b1, b2) = (m.b1, m.b2);
    let (qp, qm, om) = (data.big_q_plus, data.big_q_minus, data.omega);
    let e1 = b2 + qp + qm + b1 * qp * qm;
    let e2 = b1 * qp * qm + b1 * b2 * (qp + qm) + b2;
    let p10 = d.powi(9) * e1.powi(22) * e2 * e2 * (b2 + qm).powi(2) * (1.0 + b1 * qm).powi(2)
        * (1.0 + dm1 * om * om)
        / ((b1 * b2).powi(8) * qm.powi(14) * qp.powi(12));
    let p11 = d.powi(9) * e1.powi(26) * e2 * e2 * (1.0 - dm1 * dm1 * om * om)
        / ((b1 * b2).powi(8) * qm.powi(14) * qp.powi(14));
    (p10, p11)
}

/// Verify that φ₂(γ,δ) attains its global maximum at (α²,β²): 41×41 grid
/// over the overlap region, Newton polish from the best cells, and the
/// closed-form/numeric Hessian minors P₁₀, P₁₁ (for B₁B₂ > 0).
pub fn verify_phi2_maximum(m: &SpinModel, alpha: f64, beta: f64) -> Result<Phi2MaxReport> {
    let (glo, ghi) = ((2.0 * alpha - 1.0).max(0.0), alpha);
    let (dlo, dhi) = ((2.0 * beta - 1.0).max(0.0), beta);
    let steps = 41usize;
    let mut cells: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..steps {
        for j in 0..steps {
            let g = glo + (ghi - glo) * (i as f64 + 0.5) / steps as f64;
            let d = dlo + (dhi - dlo) * (j as f64 + 0.5) / steps as f64;
            let v = phi2(m, alpha, beta, g, d)?.phi2;
            if v.is_finite() {
                cells.push((v, g, d));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::OutOfRegion("phi2 is -inf on the whole overlap grid".into()));
    }
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &(_, g, d) in cells.iter().take(5) {
        let (pg, pd, pv) = polish_phi2(m, alpha, beta, g, d)?;
        if pv > best.0 {
            best = (pv, pg, pd);
        }
    }
    let (phi2_max, g_star, d_star) = best;
    let target = (alpha * alpha, beta * beta);
    let position_error = (g_star - target.0).abs().max((d_star - target.1).abs());
    if position_error > 1e-7 {
        return Err(Error::ConsistencyFailure(format!(
            "competing phi2 maximum at ({g_star}, {d_star}), value {phi2_max}; expected ({}, {})",
            target.0, target.1
        )));
    }
    let phi1_value = phi1(m, alpha, beta)?.phi1;

    let (mut p10, mut p11, mut p10n, mut p11n) = (None, None, None, None);
    if m.b1 * m.b2 > 0.0 {
        let data = solve_tree_fixed_points(m)?;
        let (c10, c11) = closed_p10_p11(m, &data);
        let y = closed_form_y_star(m, &data);
        let h = phi2_full_hessian(m, alpha, beta, target.0, target.1, &y);
        let minors = bottom_right_minors(&h);
        let (n10, n11) = (minors[9], minors[10]);
        for (num, cl) in [(n10, c10), (n11, c11)] {
            if (num - cl).abs() > 1e-6 * cl.abs().max(1.0) {
                return Err(Error::ConsistencyFailure(format!(
                    "phi2 Hessian minor mismatch: numeric {num}, closed form {cl}"
                )));
            }
        }
        p10 = Some(c10);
        p11 = Some(c11);
        p10n = Some(n10);
        p11n = Some(n11);
    }
    Ok(Phi2MaxReport {
        alpha,
        beta,
        argmax: (g_star, d_star),
        phi2_max,
        phi1_value,
        position_error,
        p10,
        p11,
        p10_numeric: p10n,
        p11_numeric: p11n,
    })
}

/// The limiting ratio E[(Z^{α,β})²]/E[Z^{α,β}]² at (α,β)=(p⁺,p⁻):
/// (1−ω²)^{−(Δ−1)/2} (1−(Δ−1)²ω²)^{−1/2}.
pub fn ratio_limit_from_omega(omega: f64, delta: u32) -> f64 {
    let dm1 = delta as f64 - 1.0;
    (1.0 - omega * omega).powf(-dm1 / 2.0) * (1.0 - dm1 * dm1 * omega * omega).powf(-0.5)
}

pub fn moment_ratio_limit(m: &SpinModel) -> Result<f64> {
    let data = solve_tree_fixed_points(m)?;
    if data.regime == Regime::Uniqueness {
        return Err(Error::OutOfRegion("moment ratio limit requires non-uniqueness".into()));
    }
    let dm1 = m.d() as f64;
    if dm1 * dm1 * data.omega >= 1.0 {
        return Err(Error::ConsistencyFailure(format!(
            "(Δ−1)²ω = {} >= 1; upstream fixed points are wrong",
            dm1 * dm1 * data.omega
        )));
    }
    Ok(ratio_limit_from_omega(data.omega, m.delta))
}

/// The asymptotic constants of the first and second moments at
/// (α,β) = (p⁺,p⁻): E[Z] ~ (C₁/n)e^{nΦ₁}, E[Z²] ~ (C₂/n²)e^{nΦ₂}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub first_prefactor: f64,
    pub second_prefactor: f64,
    pub ratio_limit: f64,
    /// The Gaussian determinant 4DF−E² of the second-moment Laplace
    /// expansion: E₁⁷/((Q⁺Q⁻)²E₂E₃)·(1−(Δ−1)²ω²).
    pub gaussian_det: f64,
}

pub fn asymptotic_prefactors(m: &SpinModel) -> Result<AsymptoticConstants> {
    let data = solve_tree_fixed_points(m)?;
    if data.regime != Regime::NonUniqueness {
        return Err(Error::OutOfRegion("prefactors are defined at (p⁺,p⁻) in non-uniqueness".into()));
    }
    let d = m.delta as f64;
    let dm1 = d - 1.0;
    let (b1, b2) = (m.b1, m.b2);
    let (qp, qm, om) = (data.big_q_plus, data.big_q_minus, data.omega);
    let e1 = b2 + qp + qm + b1 * qp * qm;
    let e2 = b1 * qp * qm + b1 * b2 * (qp + qm) + b2;
    let e3 = (1.0 - b1 * b2).powi(2) * qp * qm
        + (1.0 + b1 * (qp + qm) + b1 * b1 * qp * qm)
            * (b2 * b2 + b2 * (qp + qm) + qp * qm);
    let den = (b2 + qm) * (b2 + qp) * (1.0 + b1 * qm) * (1.0 + b1 * qp);
    let identity = e1 * e2 * e3 / (den * den);
    if (identity - (1.0 - om * om)).abs() > 1e-10 {
        return Err(Error::ConsistencyFailure(format!(
            "E-identity violated: E1E2E3/den² = {identity}, 1−ω² = {}",
            1.0 - om * om
        )));
    }
    let (alpha, beta) = (data.p_plus, data.p_minus);
    let occ = alpha * beta * (1.0 - alpha) * (1.0 - beta);
    let first = (1.0 / (2.0 * std::f64::consts::PI))
        * occ.powf(dm1 / 2.0)
        * (qp * qm * e2 / e1.powi(3)).powf(-d / 2.0);
    let second = (1.0 / (4.0 * std::f64::consts::PI.powi(2)))
        * occ.powf(2.0 * dm1)
        * ((qp * qm).powi(4) * e2.powi(3) * e3 / e1.powi(13)).powf(-d / 2.0)
        * ((qp * qm).powi(2) * e2 * e3 / e1.powi(7)).sqrt()
        * (1.0 - dm1 * dm1 * om * om).powf(-0.5);
    let ratio = ratio_limit_from_omega(om, m.delta);
    let gaussian_det =
        e1.powi(7) / ((qp * qm).powi(2) * e2 * e3) * (1.0 - dm1 * dm1 * om * om);
    // The prefactors must reproduce the ratio limit: C₂/C₁² = ratio.
    let implied = second / (first * first);
    if (implied - ratio).abs() > 1e-9 * ratio {
        return Err(Error::ConsistencyFailure(format!(
            "prefactor ratio {implied} disagrees with the closed-form limit {ratio}"
        )));
    }
    Ok(AsymptoticConstants {
        e1,
        e2,
        e3,
        first_prefactor: first,
        second_prefactor: second,
        ratio_limit: ratio,
        gaussian_det,
    })
}

/// Boundary-condition counts on the gadget's clamped set U: η₁⁻/η₁⁺ count
/// −1/+1 clamps on U₊ and η₂⁻/η₂⁺ on U₋; each side sums to m′.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaCounts {
    pub eta1_minus: usize,
    pub eta1_plus: usize,
    pub eta2_minus: usize,
    pub eta2_plus: usize,
}

impl EtaCounts {
    pub fn m_prime(&self) -> Result<usize> {
        let m1 = self.eta1_minus + self.eta1_plus;
        let m2 = self.eta2_minus + self.eta2_plus;
        if m1 != m2 {
            return Err(Error::BadArgument(format!(
                "eta side sums differ: {m1} vs {m2}"
            )));
        }
        Ok(m1)
    }
}

/// The unique nonnegative root x* of B₁B₂(α−x)(β−x) = x(1−α−β+x).
pub fn overlap_root(m: &SpinModel, alpha: f64, beta: f64) -> f64 {
    let c = m.b1 * m.b2;
    if c == 1.0 {
        return alpha * beta;
    }
    let b = 1.0 - alpha - beta + c * (alpha + beta);
    let disc = b * b + 4.0 * (1.0 - c) * c * alpha * beta;
    (-b + disc.sqrt()) / (2.0 * (1.0 - c))
}

/// Limiting conditional first-moment ratio E[Z^{α,β}(η)]/E[Z^{α,β}] of
/// the gadget core as n → ∞ at fixed clamp counts η.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GadgetFirstMomentRatio {
    pub x_star: f64,
    pub ratio: f64,
    /// The equivalent product-measure form C*·(Q⁺)^{η₁⁻}(Q⁻)^{η₂⁻},
    /// evaluated when (α,β) = (p⁺,p⁻); both forms must agree to 1e−10.
    pub product_form: Option<f64>,
}

fn c_star(m: &SpinModel, data: &TreePhaseData, m_prime: usize) -> f64 {
    let (qp, qm) = (data.big_q_plus, data.big_q_minus);
    let e1 = m.b2 + qp + qm + m.b1 * qp * qm;
    ((m.b2 + qp) * (m.b2 + qm) / e1).powi((m.delta as i32 - 1) * m_prime as i32)
}

pub fn gadget_first_moment_ratio(
    m: &SpinModel,
    alpha: f64,
    beta: f64,
    eta: &EtaCounts,
) -> Result<GadgetFirstMomentRatio> {
    eta.m_prime()?;
    let x = overlap_root(m, alpha, beta);
    let (e1m, e1p) = (eta.eta1_minus as f64, eta.eta1_plus as f64);
    let e2m = eta.eta2_minus as f64;
    let e2p = eta.eta2_plus as f64;
    let core = alpha.powf(e1m) * (1.0 - alpha).powf(e1p) * beta.powf(e2m)
        * (1.0 - beta).powf(e2p)
        / ((alpha - x).powf(e1m)
            * (1.0 - alpha - beta + x).powf(e1p - e2m)
            * (beta - x).powf(e2m))
        * m.b2.powf(e1p - e2m);
    let ratio = core.powi(m.delta as i32 - 1) * m.lambda.powf(e1m + e2m);

    let mut product_form = None;
    if let Ok(data) = solve_tree_fixed_points(m) {
        if data.regime == Regime::NonUniqueness
            && (alpha - data.p_plus).abs() < 1e-9
            && (beta - data.p_minus).abs() < 1e-9
        {
            let pf = c_star(m, &data, eta.m_prime()?)
                * data.big_q_plus.powf(e1m)
                * data.big_q_minus.powf(e2m);
            if (pf - ratio).abs() > 1e-10 * ratio.abs().max(1.0) {
                return Err(Error::ConsistencyFailure(format!(
                    "gadget first-moment forms disagree: overlap-root {ratio}, product {pf}"
                )));
            }
            product_form = Some(pf);
        }
    }
    Ok(GadgetFirstMomentRatio { x_star: x, ratio, product_form })
}

/// Limiting conditional second-moment ratio of the gadget core:
/// (C*)²(Q⁺)^{2η₁⁻}(Q⁻)^{2η₂⁻}, where the Q powers arise from the tree
/// fixed-point identity λ((1+B₁Q∓)/(B₂+Q∓))^{Δ−1} = Q±.
pub fn gadget_second_moment_ratio(m: &SpinModel, eta: &EtaCounts) -> Result<f64> {
    let mp = eta.m_prime()?;
    let data = solve_tree_fixed_points(m)?;
    if data.regime != Regime::NonUniqueness {
        return Err(Error::OutOfRegion("gadget moments require non-uniqueness".into()));
    }
    let (qp, qm) = (data.big_q_plus, data.big_q_minus);
    let dm1 = m.delta as i32 - 1;
    let f_plus = m.lambda * ((1.0 + m.b1 * qm) / (m.b2 + qm)).powi(dm1);
    let f_minus = m.lambda * ((1.0 + m.b1 * qp) / (m.b2 + qp)).powi(dm1);
    if (f_plus - qp).abs() > 1e-9 * qp || (f_minus - qm).abs() > 1e-9 * qm {
        return Err(Error::ConsistencyFailure(format!(
            "fixed-point identity violated: {f_plus} vs {qp}, {f_minus} vs {qm}"
        )));
    }
    let cs = c_star(m, &data, mp);
    Ok(cs * cs
        * f_plus.powi(2 * eta.eta1_minus as i32)
        * f_minus.powi(2 * eta.eta2_minus as i32))
}

/// Multinomial perturbation ratio: exact value of
/// C(a+x; b+y)/C(a; b) (a = Σb, x = Σy) against the approximation
/// a^x/∏bᵢ^{yᵢ}, with the first-order error bound Σyᵢ²/bᵢ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultinomialRatio {
    pub exact: f64,
    pub approx: f64,
    pub rel_error: f64,
    pub error_bound: f64,
}

pub fn multinomial_ratio_approx(b: &[u64], y: &[i64]) -> Result<MultinomialRatio> {
    if b.len() != y.len() || b.is_empty() {
        return Err(Error::BadArgument("b and y must be equal-length, nonempty".into()));
    }
    for (&bi, &yi) in b.iter().zip(y) {
        if (yi * yi) as u64 > bi {
            return Err(Error::BadArgument(format!(
                "precondition y² <= b violated: y = {yi}, b = {bi}"
            )));
        }
        if yi < 0 && bi < (-yi) as u64 {
            return Err(Error::BadArgument("b + y must be nonnegative".into()));
        }
    }
    let a: u64 = b.iter().sum();
    let x: i64 = y.iter().sum();
    let ln_fact = |n: f64| ln_gamma(n + 1.0);
    let mut log_exact = ln_fact(a as f64 + x as f64) - ln_fact(a as f64);
    let mut log_approx = x as f64 * (a as f64).ln();
    for (&bi, &yi) in b.iter().zip(y) {
        log_exact -= ln_fact(bi as f64 + yi as f64) - ln_fact(bi as f64);
        log_approx -= yi as f64 * (bi as f64).ln();
    }
    let exact = log_exact.exp();
    let approx = log_approx.exp();
    let error_bound: f64 = b.iter().zip(y).map(|(&bi, &yi)| (yi * yi) as f64 / bi as f64).sum();
    Ok(MultinomialRatio {
        exact,
        approx,
        rel_error: (exact / approx - 1.0).abs(),
        error_bound,
    })
}
