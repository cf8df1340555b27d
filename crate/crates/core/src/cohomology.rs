//! The cohomology ring `H*((S²)^k) = ℤ[x₁..x_k]/(x_i²)` and the Chern-class
//! obstruction to embedding `L^{×k}` into a trivial bundle.
//!
//! Monomials are square-free, so one is just a subset of `{1..k}` stored as
//! a bit pattern; multiplying two monomials that share a generator gives 0.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact;

/// Largest `k` for which the ring is expanded term by term (2^k monomials).
pub const BRUTE_FORCE_CAP: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CohomologyError {
    #[error("k = {k} exceeds the brute-force cap {cap}; use chern_inverse_coeff for closed forms")]
    AboveCap { k: usize, cap: usize },
    #[error("expected {expected} signs, got {got}")]
    SignCount { expected: usize, got: usize },
    #[error("sign must be +1 or -1, got {0}")]
    BadSign(i8),
    #[error("ring mismatch: (S²)^{left} vs (S²)^{right}")]
    RingMismatch { left: usize, right: usize },
    #[error("coefficient overflow")]
    Overflow,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Monomial(pub u64);

impl Monomial {
    pub const ONE: Monomial = Monomial(0);

    /// The generator `x_i`, 1-based.
    pub fn generator(i: usize) -> Self {
        assert!((1..=64).contains(&i));
        Monomial(1 << (i - 1))
    }

    pub fn degree(self) -> u32 {
        self.0.count_ones()
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |b| self.0 >> b & 1 == 1).map(|b| b + 1)
    }

    pub fn times(self, other: Monomial) -> Option<Monomial> {
        (self.0 & other.0 == 0).then_some(Monomial(self.0 | other.0))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.indices().map(|i| format!("x{i}")).collect();
        write!(f, "{}", parts.join("*"))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CohomologyElement {
    k: usize,
    terms: BTreeMap<Monomial, i64>,
}

impl CohomologyElement {
    pub fn zero(k: usize) -> Self {
        assert!(k <= 64);
        CohomologyElement {
            k,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(k: usize) -> Self {
        Self::monomial(k, Monomial::ONE, 1)
    }

    pub fn monomial(k: usize, m: Monomial, coeff: i64) -> Self {
        let mut e = Self::zero(k);
        assert!(k == 64 || m.0 >> k == 0, "monomial outside the ring");
        if coeff != 0 {
            e.terms.insert(m, coeff);
        }
        e
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> impl Iterator<Item = (Monomial, i64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: Monomial) -> i64 {
        self.terms.get(&m).copied().unwrap_or(0)
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.coefficient(Monomial::ONE) == 1
    }

    /// Highest degree carrying a nonzero coefficient.
    pub fn top_degree(&self) -> Option<u32> {
        self.terms.keys().map(|m| m.degree()).max()
    }

    pub fn degree_part(&self, j: u32) -> CohomologyElement {
        CohomologyElement {
            k: self.k,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == j)
                .map(|(m, c)| (*m, *c))
                .collect(),
        }
    }

    fn add_term(&mut self, m: Monomial, c: i64) -> Result<(), CohomologyError> {
        let entry = self.terms.entry(m).or_insert(0);
        *entry = entry.checked_add(c).ok_or(CohomologyError::Overflow)?;
        if *entry == 0 {
            self.terms.remove(&m);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, CohomologyError> {
        self.same_ring(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m, c)?;
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, CohomologyError> {
        self.same_ring(other)?;
        let mut out = Self::zero(self.k);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                if let Some(ab) = a.times(b) {
                    let c = ca.checked_mul(cb).ok_or(CohomologyError::Overflow)?;
                    out.add_term(ab, c)?;
                }
            }
        }
        Ok(out)
    }

    fn same_ring(&self, other: &Self) -> Result<(), CohomologyError> {
        if self.k != other.k {
            return Err(CohomologyError::RingMismatch {
                left: self.k,
                right: other.k,
            });
        }
        Ok(())
    }
}

impl fmt::Display for CohomologyElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.unsigned_abs();
            if !first {
                write!(f, " ")?;
            }
            match (mag, m == Monomial::ONE) {
                (1, false) => write!(f, "{sign}{m}")?,
                (_, true) => write!(f, "{sign}{mag}")?,
                _ => write!(f, "{sign}{mag}*{m}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Expands `Π (1 + sign_i · x_i)`, the total Chern class of an external sum
/// of line bundles (sign −1 gives the inverse class of `L^{×k}`).
pub fn total_chern_external_sum(
    k: usize,
    signs: &[i8],
) -> Result<CohomologyElement, CohomologyError> {
    if k > BRUTE_FORCE_CAP {
        return Err(CohomologyError::AboveCap {
            k,
            cap: BRUTE_FORCE_CAP,
        });
    }
    if signs.len() != k {
        return Err(CohomologyError::SignCount {
            expected: k,
            got: signs.len(),
        });
    }
    let mut acc: Vec<(Monomial, i64)> = vec![(Monomial::ONE, 1)];
    for (i, &sign) in signs.iter().enumerate() {
        if sign != 1 && sign != -1 {
            return Err(CohomologyError::BadSign(sign));
        }
        let x = Monomial::generator(i + 1);
        let extended: Vec<(Monomial, i64)> = acc
            .iter()
            .map(|&(m, c)| (Monomial(m.0 | x.0), c * sign as i64))
            .collect();
        acc.extend(extended);
    }
    Ok(CohomologyElement {
        k,
        terms: acc.into_iter().collect(),
    })
}

/// Degree-`j` coefficient in the closed form for `Π (1 − x_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChernCoefficient {
    /// `(−1)^j · C(k, j)`: the sum of all degree-`j` coefficients.
    pub value: BigInt,
    /// Set when `j > k`; the value is then 0 because no such monomial exists.
    pub vacuous: bool,
}

pub fn chern_inverse_coeff(k: u64, j: u64) -> ChernCoefficient {
    if j > k {
        return ChernCoefficient {
            value: BigInt::zero(),
            vacuous: true,
        };
    }
    let magnitude = binomial(k, j);
    let value = if j.is_multiple_of(2) {
        BigInt::from(magnitude)
    } else {
        -BigInt::from(magnitude)
    };
    ChernCoefficient {
        value,
        vacuous: false,
    }
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Embeddable,
    Obstructed,
}

/// Whether `L^{×k}` over `(S²)^k` can sit inside the trivial bundle of rank `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstructionCertificate {
    #[serde(with = "exact::serde_biguint")]
    pub k: BigUint,
    #[serde(with = "exact::serde_biguint")]
    pub r: BigUint,
    pub verdict: Verdict,
    /// `r − k`, negative when even the sub-bundle itself does not fit.
    pub complement_rank: String,
    /// Degree `k` of the top Chern class `c_k(complement)`, when obstructed.
    pub witness_degree: Option<String>,
    /// Coefficient `(−1)^k` of `x₁⋯x_k` in `Π (1 − x_i)`, when obstructed.
    pub coefficient: Option<i8>,
}

impl ObstructionCertificate {
    pub fn is_obstructed(&self) -> bool {
        self.verdict == Verdict::Obstructed
    }

    pub fn explanation(&self) -> String {
        match self.verdict {
            Verdict::Embeddable => format!(
                "L^x{} embeds in the trivial rank-{} bundle (r >= 2k)",
                self.k, self.r
            ),
            Verdict::Obstructed => format!(
                "a complement would have rank {} but c_{}(complement) = {}·x1···x{} is nonzero",
                self.complement_rank,
                self.k,
                self.coefficient.unwrap_or(0),
                self.k
            ),
        }
    }
}

/// Closed-form threshold: obstructed iff `r < 2k`.
pub fn embeds_in_trivial(k: &BigUint, r: &BigUint) -> ObstructionCertificate {
    let two_k = k * 2u32;
    let complement = BigInt::from(r.clone()) - BigInt::from(k.clone());
    if *r < two_k {
        ObstructionCertificate {
            k: k.clone(),
            r: r.clone(),
            verdict: Verdict::Obstructed,
            complement_rank: complement.to_string(),
            witness_degree: Some(k.to_string()),
            coefficient: Some(if k.is_odd() { -1 } else { 1 }),
        }
    } else {
        ObstructionCertificate {
            k: k.clone(),
            r: r.clone(),
            verdict: Verdict::Embeddable,
            complement_rank: complement.to_string(),
            witness_degree: None,
            coefficient: None,
        }
    }
}

/// Same verdict reached by expanding `c(L^{×k})^{-1} = Π (1 − x_i)` and
/// comparing its top nonzero degree against the complement's rank budget.
pub fn obstruction_by_expansion(
    k: usize,
    r: usize,
) -> Result<ObstructionCertificate, CohomologyError> {
    let inverse = total_chern_external_sum(k, &vec![-1; k])?;
    let complement_rank = r as i64 - k as i64;
    let top = inverse.top_degree().unwrap_or(0);
    let k_big = BigUint::from(k);
    let r_big = BigUint::from(r);
    if top as i64 > complement_rank {
        let top_monomial = inverse
            .degree_part(top)
            .terms()
            .next()
            .expect("top degree has a term");
        Ok(ObstructionCertificate {
            k: k_big,
            r: r_big,
            verdict: Verdict::Obstructed,
            complement_rank: complement_rank.to_string(),
            witness_degree: Some(top.to_string()),
            coefficient: Some(top_monomial.1 as i8),
        })
    } else {
        Ok(ObstructionCertificate {
            k: k_big,
            r: r_big,
            verdict: Verdict::Embeddable,
            complement_rank: complement_rank.to_string(),
            witness_degree: None,
            coefficient: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(indices: &[usize]) -> Monomial {
        Monomial(indices.iter().fold(0, |acc, i| acc | 1 << (i - 1)))
    }

    #[test]
    fn two_positive_lines() {
        let c = total_chern_external_sum(2, &[1, 1]).unwrap();
        let expected = [m(&[]), m(&[1]), m(&[2]), m(&[1, 2])];
        assert_eq!(c.len(), 4);
        for mono in expected {
            assert_eq!(c.coefficient(mono), 1);
        }
        assert_eq!(c.to_string(), "1 +x1 +x2 +x1*x2");
    }

    #[test]
    fn empty_product_is_one() {
        assert!(total_chern_external_sum(0, &[]).unwrap().is_one());
    }

    #[test]
    fn three_negative_lines() {
        let c = total_chern_external_sum(3, &[-1, -1, -1]).unwrap();
        for pair in [[1, 2], [1, 3], [2, 3]] {
            assert_eq!(c.coefficient(m(&pair)), 1);
        }
        assert_eq!(c.coefficient(m(&[1, 2, 3])), -1);
        assert_eq!(c.coefficient(m(&[2])), -1);
    }

    #[test]
    fn refuses_above_cap_and_bad_input() {
        assert!(matches!(
            total_chern_external_sum(15, &[1; 15]),
            Err(CohomologyError::AboveCap { k: 15, .. })
        ));
        assert!(matches!(
            total_chern_external_sum(2, &[1]),
            Err(CohomologyError::SignCount { .. })
        ));
        assert!(matches!(
            total_chern_external_sum(1, &[2]),
            Err(CohomologyError::BadSign(2))
        ));
    }

    #[test]
    fn square_free_product() {
        let x1 = CohomologyElement::monomial(2, Monomial::generator(1), 1);
        assert!(x1.mul(&x1).unwrap().is_empty());
        let x2 = CohomologyElement::monomial(2, Monomial::generator(2), 3);
        assert_eq!(x1.mul(&x2).unwrap().coefficient(m(&[1, 2])), 3);
        assert!(x1.mul(&CohomologyElement::one(3)).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let brute = total_chern_external_sum(4, &[-1; 4]).unwrap();
        let degree_two: i64 = brute.degree_part(2).terms().map(|(_, c)| c).sum();
        assert_eq!(chern_inverse_coeff(4, 2).value, BigInt::from(degree_two));
        assert_eq!(chern_inverse_coeff(4, 2).value, BigInt::from(6));

        let brute = total_chern_external_sum(7, &[-1; 7]).unwrap();
        assert_eq!(brute.coefficient(Monomial((1 << 7) - 1)), -1);
        assert_eq!(chern_inverse_coeff(7, 7).value, BigInt::from(-1));

        assert_eq!(chern_inverse_coeff(5, 0).value, BigInt::one());
        let vacuous = chern_inverse_coeff(3, 4);
        assert!(vacuous.vacuous && vacuous.value.is_zero());
    }

    #[test]
    fn embedding_threshold_examples() {
        let b = |v: u64| BigUint::from(v);
        assert!(embeds_in_trivial(&b(1), &b(1)).is_obstructed());
        assert!(!embeds_in_trivial(&b(1), &b(2)).is_obstructed());
        let cert = embeds_in_trivial(&b(5), &b(9));
        assert!(cert.is_obstructed());
        assert_eq!(cert.witness_degree.as_deref(), Some("5"));
        assert_eq!(cert.coefficient, Some(-1));
        assert!(!embeds_in_trivial(&b(5), &b(10)).is_obstructed());
        assert!(cert.explanation().contains("rank 4"));
    }

    #[test]
    fn expansion_route_matches_closed_form() {
        for k in 1..=10usize {
            for r in 0..=(2 * k + 2) {
                let closed = embeds_in_trivial(&BigUint::from(k), &BigUint::from(r));
                let brute = obstruction_by_expansion(k, r).unwrap();
                assert_eq!(closed, brute, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn inverse_identity_small() {
        for k in 0..=8 {
            let plus = total_chern_external_sum(k, &vec![1; k]).unwrap();
            let minus = total_chern_external_sum(k, &vec![-1; k]).unwrap();
            assert!(plus.mul(&minus).unwrap().is_one(), "k={k}");
        }
    }

    proptest! {
        #[test]
        fn verdict_monotone_in_rank(k in 1u64..1_000_000, r in 0u64..3_000_000) {
            let here = embeds_in_trivial(&BigUint::from(k), &BigUint::from(r));
            let next = embeds_in_trivial(&BigUint::from(k), &BigUint::from(r + 1));
            if !here.is_obstructed() {
                prop_assert!(!next.is_obstructed());
            }
        }

        #[test]
        fn mixed_signs_invert(signs in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 0..9)) {
            let k = signs.len();
            let c = total_chern_external_sum(k, &signs).unwrap();
            let flipped: Vec<i8> = signs.iter().map(|s| -s).collect();
            let inv = total_chern_external_sum(k, &flipped).unwrap();
            prop_assert!(c.mul(&inv).unwrap().is_one());
        }
    }
}
