//! Sparse multivariate polynomials with arbitrary-precision integer
//! coefficients over the fixed variable set {x, y, t, a, b, qa, qb},
//! supporting the exact arithmetic (including exact division) needed by
//! the hard-core sign-certificate pipeline.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use sha2::{Digest, Sha256};

use crate::model::{Error, Result};

pub const NUM_VARS: usize = 7;
pub const VAR_NAMES: [&str; NUM_VARS] = ["x", "y", "t", "a", "b", "qa", "qb"];

pub const VAR_X: usize = 0;
pub const VAR_Y: usize = 1;
pub const VAR_T: usize = 2;
pub const VAR_A: usize = 3;
pub const VAR_B: usize = 4;
pub const VAR_QA: usize = 5;
pub const VAR_QB: usize = 6;

pub type Exponents = [u16; NUM_VARS];

/// Sparse polynomial: exponent vector → nonzero coefficient. The BTreeMap
/// key order (lexicographic on the exponent vector) doubles as the
/// monomial order for division and for deterministic serialization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultiPoly {
    terms: BTreeMap<Exponents, BigInt>,
}

impl MultiPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant<T: Into<BigInt>>(c: T) -> Self {
        Self::monomial([0; NUM_VARS], c.into())
    }

    pub fn var(idx: usize) -> Self {
        let mut e = [0u16; NUM_VARS];
        e[idx] = 1;
        Self::monomial(e, BigInt::from(1))
    }

    pub fn monomial(e: Exponents, c: BigInt) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(e, c);
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigInt)> {
        self.terms.iter()
    }

    pub fn degree_in(&self, var: usize) -> u16 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    /// Leading (lexicographically largest) term.
    pub fn leading(&self) -> Option<(&Exponents, &BigInt)> {
        self.terms.iter().next_back()
    }

    fn insert_add(&mut self, e: Exponents, c: BigInt) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_add(*e, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_add(*e, -c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let mut e = [0u16; NUM_VARS];
                for k in 0..NUM_VARS {
                    e[k] = e1[k] + e2[k];
                }
                out.insert_add(e, c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(e, v)| (*e, v * c)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::constant(1);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                out = out.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    fn format_term(e: &Exponents, c: &BigInt) -> String {
        let mut s = c.to_string();
        for (k, &p) in e.iter().enumerate() {
            if p > 0 {
                s.push_str(&format!("*{}^{}", VAR_NAMES[k], p));
            }
        }
        s
    }

    /// Exact division: returns p/q, erroring with the remainder's leading
    /// term if q does not divide self exactly over ℤ.
    pub fn exact_divide(&self, q: &Self) -> Result<Self> {
        let (ltq_e, ltq_c) = q
            .leading()
            .ok_or_else(|| Error::BadArgument("division by the zero polynomial".into()))?;
        let mut rem = self.clone();
        let mut quot = Self::zero();
        while let Some((lte, ltc)) = rem.leading() {
            let mut de = [0u16; NUM_VARS];
            let mut divisible = true;
            for k in 0..NUM_VARS {
                if lte[k] < ltq_e[k] {
                    divisible = false;
                    break;
                }
                de[k] = lte[k] - ltq_e[k];
            }
            let dc = if divisible {
                let (d, r) = num_integer_div_rem(ltc, ltq_c);
                if r.is_zero() {
                    Some(d)
                } else {
                    None
                }
            } else {
                None
            };
            let Some(dc) = dc else {
                return Err(Error::InexactDivision {
                    remainder_terms: rem.num_terms(),
                    leading: Self::format_term(lte, ltc),
                });
            };
            let t = Self::monomial(de, dc);
            rem = rem.sub(&t.mul(q));
            quot = quot.add(&t);
        }
        Ok(quot)
    }

    /// Substitute an entire polynomial for one variable whose maximum
    /// degree is `cap`, clearing the denominator `den` to power `cap`:
    /// each term v^k ↦ num^k · den^{cap−k}. The result equals
    /// self(v → num/den) · den^cap.
    pub fn substitute_cleared(&self, var: usize, num: &Self, den: &Self, cap: u16) -> Result<Self> {
        if self.degree_in(var) > cap {
            return Err(Error::BadArgument(format!(
                "degree in {} exceeds clearing cap {cap}",
                VAR_NAMES[var]
            )));
        }
        let mut num_pows = Vec::with_capacity(cap as usize + 1);
        let mut den_pows = Vec::with_capacity(cap as usize + 1);
        num_pows.push(Self::constant(1));
        den_pows.push(Self::constant(1));
        for k in 1..=cap as usize {
            num_pows.push(num_pows[k - 1].mul(num));
            den_pows.push(den_pows[k - 1].mul(den));
        }
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            let k = e[var] as usize;
            let mut e0 = *e;
            e0[var] = 0;
            let base = Self::monomial(e0, c.clone());
            out = out.add(&base.mul(&num_pows[k]).mul(&den_pows[cap as usize - k]));
        }
        Ok(out)
    }

    /// Rewrite v² → rep until the degree in v is ≤ 1 (rep must not
    /// contain v).
    pub fn reduce_square(&self, var: usize, rep: &Self) -> Self {
        let mut cur = self.clone();
        while cur.degree_in(var) > 1 {
            let mut next = Self::zero();
            for (e, c) in &cur.terms {
                if e[var] >= 2 {
                    let mut e2 = *e;
                    e2[var] -= 2;
                    next = next.add(&Self::monomial(e2, c.clone()).mul(rep));
                } else {
                    next.insert_add(*e, c.clone());
                }
            }
            cur = next;
        }
        cur
    }

    /// Coefficients split by the exponents of one variable: result[k] has
    /// the v^k part with v removed.
    pub fn coefficients_in(&self, var: usize) -> Vec<Self> {
        let d = self.degree_in(var) as usize;
        let mut out = vec![Self::zero(); d + 1];
        for (e, c) in &self.terms {
            let mut e0 = *e;
            let k = e0[var] as usize;
            e0[var] = 0;
            out[k].insert_add(e0, c.clone());
        }
        out
    }

    /// Coefficient of a specific monomial.
    pub fn coefficient(&self, e: &Exponents) -> BigInt {
        self.terms.get(e).cloned().unwrap_or_else(BigInt::zero)
    }

    /// Signs of the coefficients: (+1/−1) if all nonzero coefficients
    /// share that sign, None for a mixed-sign polynomial or zero.
    pub fn uniform_sign(&self) -> Option<i8> {
        let mut sign = 0i8;
        for c in self.terms.values() {
            let s = if c.is_positive() { 1 } else { -1 };
            if sign == 0 {
                sign = s;
            } else if sign != s {
                return None;
            }
        }
        if sign == 0 {
            None
        } else {
            Some(sign)
        }
    }

    /// Floating evaluation (for cross-checks only; exactness lives in the
    /// integer arithmetic).
    pub fn eval(&self, vals: &[f64; NUM_VARS]) -> f64 {
        let mut sum = 0.0;
        for (e, c) in &self.terms {
            let mut m = c.to_f64().unwrap_or(f64::NAN);
            for k in 0..NUM_VARS {
                if e[k] > 0 {
                    m *= vals[k].powi(e[k] as i32);
                }
            }
            sum += m;
        }
        sum
    }

    /// Deterministic serialization: terms in exponent-lex order.
    pub fn serialize(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(e, c)| Self::format_term(e, c))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    /// SHA-256 content hash of the canonical serialization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.serialize().as_bytes());
        format!("{:x}", h.finalize())
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn num_integer_div_rem(a: &BigInt, b: &BigInt) -> (BigInt, BigInt) {
    (a / b, a % b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y() -> MultiPoly {
        MultiPoly::var(VAR_Y)
    }

    fn one() -> MultiPoly {
        MultiPoly::constant(1)
    }

    #[test]
    fn product_difference_of_squares() {
        let p = y().sub(&one()).mul(&y().add(&one()));
        let expect = y().mul(&y()).sub(&one());
        assert_eq!(p, expect);
    }

    #[test]
    fn exact_division_roundtrip() {
        let p = y().mul(&y()).sub(&one());
        let q = y().sub(&one());
        assert_eq!(p.exact_divide(&q).unwrap(), y().add(&one()));
    }

    #[test]
    fn inexact_division_errors() {
        let p = y().mul(&y()).add(&one());
        let q = y().sub(&one());
        match p.exact_divide(&q) {
            Err(Error::InexactDivision { remainder_terms, .. }) => {
                assert_eq!(remainder_terms, 1); // remainder 2
            }
            other => panic!("expected inexact division, got {other:?}"),
        }
    }

    #[test]
    fn multivariate_exact_division() {
        let x = MultiPoly::var(VAR_X);
        let t = MultiPoly::var(VAR_T);
        // (x + y + t)(xy − t²) / (xy − t²)
        let a = x.add(&y()).add(&t);
        let b = x.mul(&y()).sub(&t.mul(&t));
        assert_eq!(a.mul(&b).exact_divide(&b).unwrap(), a);
    }

    #[test]
    fn pow_and_degree() {
        let p = y().add(&one()).pow(5);
        assert_eq!(p.degree_in(VAR_Y), 5);
        assert_eq!(p.coefficient(&{
            let mut e = [0u16; NUM_VARS];
            e[VAR_Y] = 2;
            e
        }), BigInt::from(10));
        assert_eq!(p.num_terms(), 6);
    }

    #[test]
    fn reduce_square_works() {
        // (qa² + qa + 1) with qa² → y + 1 gives qa + y + 2.
        let qa = MultiPoly::var(VAR_QA);
        let p = qa.mul(&qa).add(&qa).add(&one());
        let r = p.reduce_square(VAR_QA, &y().add(&one()));
        assert_eq!(r, qa.add(&y()).add(&MultiPoly::constant(2)));
        assert_eq!(r.degree_in(VAR_QA), 1);
    }

    #[test]
    fn substitution_with_clearing() {
        // p = y², substitute y → t/(t+1) with cap 3:
        // result = t²(t+1).
        let t = MultiPoly::var(VAR_T);
        let den = t.add(&one());
        let p = y().pow(2);
        let s = p.substitute_cleared(VAR_Y, &t, &den, 3).unwrap();
        assert_eq!(s, t.pow(2).mul(&den));
    }

    #[test]
    fn serialization_is_deterministic_and_hashable() {
        let p = y().add(&MultiPoly::var(VAR_X)).pow(3);
        let q = MultiPoly::var(VAR_X).add(&y()).pow(3);
        assert_eq!(p.serialize(), q.serialize());
        assert_eq!(p.content_hash(), q.content_hash());
        assert!(p.serialize().contains("3*x^1*y^2"));
    }

    #[test]
    fn uniform_sign_detection() {
        assert_eq!(y().add(&one()).uniform_sign(), Some(1));
        assert_eq!(y().add(&one()).neg().uniform_sign(), Some(-1));
        assert_eq!(y().sub(&one()).uniform_sign(), None);
        assert_eq!(MultiPoly::zero().uniform_sign(), None);
    }

    #[test]
    fn eval_matches_structure() {
        let p = y().add(&one()).pow(4);
        let mut v = [0.0; NUM_VARS];
        v[VAR_Y] = 2.0;
        assert!((p.eval(&v) - 81.0).abs() < 1e-12);
    }
}
