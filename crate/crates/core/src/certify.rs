//! Machine-checked sign certificates for the hard-core second-moment
//! case analysis: build the case polynomial for d = Δ−1 ∈ {2,3,4},
//! substitute the radical parameterization, reduce, extract the four
//! radical coefficients, and certify their sign pattern exactly. Also
//! houses the numeric bias-bound checks for the Ising counterpart
//! (Δ = 3), which has no polynomial certificate.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Error, Result, SpinModel};
use crate::poly::{MultiPoly, VAR_A, VAR_B, VAR_QA, VAR_QB, VAR_T, VAR_X, VAR_Y};
use crate::scaling::{maximize_entropy, MarginalSpec};
use crate::tree::{solve_tree_fixed_points, Regime};

fn one() -> MultiPoly {
    MultiPoly::constant(1)
}

/// The stationarity polynomial before radical substitution:
/// F = (y(1+a)²−1−a+ab)(x(1+b)²+ab+a)^d − (x(1+b)²−1−b+ab)(y(1+a)²+ab+b)^d,
/// divided exactly by x(b+1)² − y(a+1)² + a − b.
fn stationarity_quotient(d: u32) -> Result<MultiPoly> {
    let x = MultiPoly::var(VAR_X);
    let y = MultiPoly::var(VAR_Y);
    let a = MultiPoly::var(VAR_A);
    let b = MultiPoly::var(VAR_B);
    let ab = a.mul(&b);
    let ya2 = y.mul(&one().add(&a).pow(2));
    let xb2 = x.mul(&one().add(&b).pow(2));
    let p1 = ya2.sub(&one()).sub(&a).add(&ab);
    let p2 = xb2.add(&ab).add(&a);
    let p3 = xb2.sub(&one()).sub(&b).add(&ab);
    let p4 = ya2.add(&ab).add(&b);
    let f = p1.mul(&p2.pow(d)).sub(&p3.mul(&p4.pow(d)));
    let den = xb2.sub(&ya2).add(&a).sub(&b);
    f.exact_divide(&den)
}

/// Build the reduced case polynomial H = c₀₀ + c₁₀qa + c₀₁qb + c₁₁qaqb:
/// substitute a = (−1+y+qa)/(x^d−y) and b = (−1+x+qb)/(y^d−x) into the
/// stationarity quotient, clearing (x^d−y)^{2d−1}(y^d−x)^{2d−1}, then
/// reduce qa² → (1−x^d−y+x^d y) and qb² → (1−y^d−x+y^d x).
pub fn build_case_polynomial(d: u32) -> Result<MultiPoly> {
    if !(2..=4).contains(&d) {
        return Err(Error::BadArgument(format!("d must be 2, 3, or 4, got {d}")));
    }
    let g = stationarity_quotient(d)?;
    let x = MultiPoly::var(VAR_X);
    let y = MultiPoly::var(VAR_Y);
    let qa = MultiPoly::var(VAR_QA);
    let qb = MultiPoly::var(VAR_QB);
    let cap = (2 * d - 1) as u16;
    let xd = x.pow(d);
    let yd = y.pow(d);

    // b first, then immediate qb² reduction to keep sizes small.
    let num_b = qb.add(&x).sub(&one());
    let den_b = yd.sub(&x);
    let rep_qb = one().sub(&yd).sub(&x).add(&yd.mul(&x));
    let h = g
        .substitute_cleared(VAR_B, &num_b, &den_b, cap)?
        .reduce_square(VAR_QB, &rep_qb);

    let num_a = qa.add(&y).sub(&one());
    let den_a = xd.sub(&y);
    let rep_qa = one().sub(&xd).sub(&y).add(&xd.mul(&y));
    let h = h
        .substitute_cleared(VAR_A, &num_a, &den_a, cap)?
        .reduce_square(VAR_QA, &rep_qa);
    Ok(h)
}

/// Split H into (c₀₀, c₀₁, c₁₀, c₁₁): the coefficients of qa^i qb^j with
/// c₀₁ on qb and c₁₀ on qa.
pub fn extract_c_coefficients(h: &MultiPoly) -> Result<[MultiPoly; 4]> {
    if h.degree_in(VAR_QA) > 1 || h.degree_in(VAR_QB) > 1 {
        return Err(Error::BadArgument(
            "case polynomial is not reduced to degree <= 1 in the radicals".into(),
        ));
    }
    let by_qa = h.coefficients_in(VAR_QA);
    let mut out = [MultiPoly::zero(), MultiPoly::zero(), MultiPoly::zero(), MultiPoly::zero()];
    for (i, part) in by_qa.into_iter().enumerate() {
        let by_qb = part.coefficients_in(VAR_QB);
        for (j, c) in by_qb.into_iter().enumerate() {
            // order: [c00, c01, c10, c11], index = 2i + j.
            out[2 * i + j] = c;
        }
    }
    Ok(out)
}

pub const C_NAMES: [&str; 4] = ["c00", "c01", "c10", "c11"];

/// Certificate for one radical coefficient after the reparameterization
/// x = (ty + y^d)/(t+1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientCertificate {
    pub name: String,
    pub is_zero: bool,
    /// (1+t)-clearing exponent used by the reparameterization (the
    /// x-degree of the coefficient).
    pub clearing_power: u32,
    pub y_power: u32,
    pub y_minus_one_power: u32,
    pub one_plus_t_power: u32,
    /// Stripped powers of 1+y+…+y^k for k = 1..d−1.
    pub cyclo_powers: Vec<u32>,
    /// Stripped powers of t+1+y+…+y^k for k = 1..d−1.
    pub mixed_powers: Vec<u32>,
    /// Integer content removed from the residual (signed).
    pub content: String,
    pub residual_terms: usize,
    pub residual_hash: String,
    /// Residual coefficients of t^k y^0, k = 0..=8 (primitive residual).
    pub residual_t_y0: Vec<String>,
    /// All residual coefficients share one sign (+1 after content
    /// extraction by construction, unless mixed).
    pub one_signed: bool,
    /// Sign of the coefficient on t > 0, y > 1 (0 for the zero poly).
    pub sign: i8,
}

/// Full sign certificate for one d: per-coefficient factor data plus the
/// two case conclusions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignCertificate {
    pub d: u32,
    pub coefficients: Vec<CoefficientCertificate>,
    /// Region y > 1, both radicals positive: the four terms share a sign,
    /// so the stationarity sum cannot vanish.
    pub case1_contradiction: bool,
    /// Region y < 1, both radicals negative: the sign pattern
    /// (s, −s, −s, s) again forces a one-signed sum.
    pub case2_contradiction: bool,
    pub pass: bool,
}

fn cyclotomic_sum(k: u32) -> MultiPoly {
    let y = MultiPoly::var(VAR_Y);
    let mut p = MultiPoly::zero();
    for j in 0..=k {
        p = p.add(&y.pow(j));
    }
    p
}

fn integer_content(p: &MultiPoly) -> BigInt {
    fn gcd(mut a: BigInt, mut b: BigInt) -> BigInt {
        while !b.is_zero() {
            let r = &a % &b;
            a = b;
            b = r;
        }
        a
    }
    let mut g = BigInt::zero();
    let mut lead_sign = 1;
    for (_, c) in p.terms() {
        g = gcd(g, c.abs());
    }
    if let Some((_, c)) = p.leading() {
        if c.is_negative() {
            lead_sign = -1;
        }
    }
    if g.is_zero() {
        BigInt::from(1)
    } else {
        g * lead_sign
    }
}

fn certify_coefficient(name: &str, c: &MultiPoly, d: u32) -> Result<CoefficientCertificate> {
    if c.is_zero() {
        return Ok(CoefficientCertificate {
            name: name.into(),
            is_zero: true,
            clearing_power: 0,
            y_power: 0,
            y_minus_one_power: 0,
            one_plus_t_power: 0,
            cyclo_powers: vec![0; d as usize - 1],
            mixed_powers: vec![0; d as usize - 1],
            content: "0".into(),
            residual_terms: 0,
            residual_hash: MultiPoly::zero().content_hash(),
            residual_t_y0: vec![],
            one_signed: false,
            sign: 0,
        });
    }
    let t = MultiPoly::var(VAR_T);
    let y = MultiPoly::var(VAR_Y);
    let e = c.degree_in(VAR_X);
    let num = t.mul(&y).add(&y.pow(d));
    let den = t.add(&one());
    let mut cur = c.substitute_cleared(VAR_X, &num, &den, e)?;

    let strip = |cur: &mut MultiPoly, f: &MultiPoly| -> u32 {
        let mut k = 0;
        while let Ok(q) = cur.exact_divide(f) {
            *cur = q;
            k += 1;
        }
        k
    };
    let y_power = strip(&mut cur, &y);
    let y_minus_one_power = strip(&mut cur, &y.sub(&one()));
    let one_plus_t_power = strip(&mut cur, &den);
    let mut cyclo_powers = Vec::new();
    let mut mixed_powers = Vec::new();
    for k in 1..d {
        let cy = cyclotomic_sum(k);
        cyclo_powers.push(strip(&mut cur, &cy));
        mixed_powers.push(strip(&mut cur, &t.add(&cy)));
    }
    let content = integer_content(&cur);
    let residual = cur.exact_divide(&MultiPoly::monomial([0; 7], content.clone()))?;
    let res_sign = residual.uniform_sign();
    let one_signed = res_sign == Some(1); // content carries the sign
    // Sign of c on t > 0, y > 1: all stripped factors positive there.
    let sign = if content.is_negative() { -1 } else { 1 };
    let mut residual_t_y0 = Vec::new();
    for k in 0..=8u16 {
        let mut e = [0u16; 7];
        e[VAR_T] = k;
        residual_t_y0.push(residual.coefficient(&e).to_string());
    }
    Ok(CoefficientCertificate {
        name: name.into(),
        is_zero: false,
        clearing_power: e as u32,
        y_power,
        y_minus_one_power,
        one_plus_t_power,
        cyclo_powers,
        mixed_powers,
        content: content.to_string(),
        residual_terms: residual.num_terms(),
        residual_hash: residual.content_hash(),
        residual_t_y0,
        one_signed,
        sign,
    })
}

/// Certify the sign pattern of the four radical coefficients.
pub fn verify_sign_pattern(cs: &[MultiPoly; 4], d: u32) -> Result<SignCertificate> {
    let mut coefficients = Vec::with_capacity(4);
    for (name, c) in C_NAMES.iter().zip(cs.iter()) {
        coefficients.push(certify_coefficient(name, c, d)?);
    }
    let all_signed = coefficients.iter().all(|c| c.one_signed && !c.is_zero);
    // Parity of (y−1): even in c00, c11; odd in c01, c10.
    let parity_ok = all_signed
        && coefficients[0].y_minus_one_power % 2 == 0
        && coefficients[1].y_minus_one_power % 2 == 1
        && coefficients[2].y_minus_one_power % 2 == 1
        && coefficients[3].y_minus_one_power % 2 == 0;
    // At y > 1 the sign of each coefficient is `sign`; all four equal
    // means c00 + c10·qa + c01·qb + c11·qa·qb ≠ 0 when qa, qb > 0.
    let s = coefficients[0].sign;
    let case1 = all_signed && coefficients.iter().all(|c| c.sign == s);
    // At y < 1 each sign flips by (−1)^{(y−1) power}; with qa, qb < 0 the
    // four summands are one-signed iff the pattern is (s', −s', −s', s').
    let flip = |c: &CoefficientCertificate| {
        if c.y_minus_one_power % 2 == 0 {
            c.sign
        } else {
            -c.sign
        }
    };
    let s0 = flip(&coefficients[0]);
    let case2 = all_signed
        && flip(&coefficients[1]) == -s0
        && flip(&coefficients[2]) == -s0
        && flip(&coefficients[3]) == s0;
    let pass = all_signed && parity_ok && case1 && case2;
    Ok(SignCertificate {
        d,
        coefficients,
        case1_contradiction: case1,
        case2_contradiction: case2,
        pass,
    })
}

/// Full per-d report: the reduced polynomial's fingerprint plus the sign
/// certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardcoreCaseReport {
    pub d: u32,
    pub h_terms: usize,
    pub h_hash: String,
    pub certificate: SignCertificate,
    pub pass: bool,
}

/// Run the whole pipeline for one d: passing certifies that the
/// restricted second-moment stationarity equation has no solution off
/// the uncorrelated overlap, for the hard-core model at degree Δ = d+1.
pub fn verify_hardcore_case(d: u32) -> Result<HardcoreCaseReport> {
    let h = build_case_polynomial(d)?;
    let cs = extract_c_coefficients(&h)?;
    let certificate = verify_sign_pattern(&cs, d)?;
    let pass = certificate.pass;
    Ok(HardcoreCaseReport {
        d,
        h_terms: h.num_terms(),
        h_hash: h.content_hash(),
        certificate,
        pass,
    })
}

/// Numeric cross-check of the exact pipeline: at random points on the
/// reparameterized curve, the floating evaluation of H must match the
/// cleared rational evaluation of the original stationarity quotient
/// through the a, b substitution. Returns the maximum relative error.
pub fn numeric_cross_check(d: u32, samples: usize, seed: u64) -> Result<f64> {
    let h = build_case_polynomial(d)?;
    let g = stationarity_quotient(d)?;
    let mut rng = crate::rng::rng_for(seed, 0);
    let mut max_rel: f64 = 0.0;
    for _ in 0..samples {
        // Stay away from y = 1 (a genuine root) for float headroom.
        let y: f64 = if rng.gen::<bool>() {
            rng.gen_range(0.3..0.9)
        } else {
            rng.gen_range(1.2..3.0)
        };
        let t: f64 = rng.gen_range(0.5..10.0);
        let x = (t * y + y.powi(d as i32)) / (t + 1.0);
        let ra = (y - 1.0) * (x.powi(d as i32) - 1.0);
        let rb = (x - 1.0) * (y.powi(d as i32) - 1.0);
        debug_assert!(ra >= 0.0 && rb >= 0.0);
        for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let qa = sa * ra.sqrt();
            let qb = sb * rb.sqrt();
            let da = x.powi(d as i32) - y;
            let db = y.powi(d as i32) - x;
            let a = (-1.0 + y + qa) / da;
            let b = (-1.0 + x + qb) / db;
            let mut vals = [0.0f64; 7];
            vals[VAR_X] = x;
            vals[VAR_Y] = y;
            vals[VAR_A] = a;
            vals[VAR_B] = b;
            let lhs = g.eval(&vals) * da.powi(2 * d as i32 - 1) * db.powi(2 * d as i32 - 1);
            let mut hvals = [0.0f64; 7];
            hvals[VAR_X] = x;
            hvals[VAR_Y] = y;
            hvals[VAR_QA] = qa;
            hvals[VAR_QB] = qb;
            let rhs = h.eval(&hvals);
            if !lhs.is_finite() || !rhs.is_finite() {
                return Err(Error::ConsistencyFailure("non-finite cross-check value".into()));
            }
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

/// Numeric bias bounds for the Ising counterpart at Δ = 3 (d = 2): the
/// dominant-phase occupancy odds and the pair-program scalers are bounded
/// below for B < 3 − 2√2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsingBiasReport {
    pub b: f64,
    pub alpha: f64,
    /// α/(1−α), bounded below by (4/9)B⁻³.
    pub odds: f64,
    pub odds_bound: f64,
    /// Row scaler ratio r₁ of the 4×4 pair program at (α²,β²): equals Q⁺.
    pub r1: f64,
    /// Column scaler ratio c₄: equals Q⁺ for the symmetric Ising model.
    pub c4: f64,
    /// Lower bound (1/3)B⁻² on r₁ and c₄.
    pub scaler_bound: f64,
    pub pass: bool,
}

pub fn verify_ising_bias_bounds(b: f64) -> Result<IsingBiasReport> {
    let threshold = 3.0 - 2.0 * 2.0f64.sqrt();
    if !(0.0 < b && b < threshold) {
        return Err(Error::BadArgument(format!(
            "bias bounds require 0 < B < 3 − 2√2 ≈ {threshold:.6}, got {b}"
        )));
    }
    let m = SpinModel::ising(b, 3)?;
    let data = solve_tree_fixed_points(&m)?;
    if data.regime != Regime::NonUniqueness {
        return Err(Error::OutOfRegion(format!("B = {b} is not in non-uniqueness")));
    }
    let alpha = data.p_plus;
    let beta = data.p_minus;
    let odds = alpha / (1.0 - alpha);
    let odds_bound = (4.0 / 9.0) / (b * b * b);

    // Pair program at the uncorrelated overlap.
    let l = [alpha * alpha, alpha * (1.0 - alpha), alpha * (1.0 - alpha), (1.0 - alpha).powi(2)];
    let r = [beta * beta, beta * (1.0 - beta), beta * (1.0 - beta), (1.0 - beta).powi(2)];
    let spec = MarginalSpec::new(l.to_vec(), r.to_vec())?;
    let sol = maximize_entropy(&crate::moments::interaction_matrix_4(&m), &spec)?;
    let r1 = sol.r[0] / sol.r[1];
    let c4 = sol.c[3] / sol.c[1];
    for (v, name) in [(r1, "r1"), (c4, "c4")] {
        if (v - data.big_q_plus).abs() > 1e-6 * data.big_q_plus {
            return Err(Error::ConsistencyFailure(format!(
                "{name} = {v} does not match Q+ = {}",
                data.big_q_plus
            )));
        }
    }
    let scaler_bound = (1.0 / 3.0) / (b * b);
    let pass = odds > odds_bound && r1 > scaler_bound && c4 > scaler_bound;
    Ok(IsingBiasReport { b, alpha, odds, odds_bound, r1, c4, scaler_bound, pass })
}
