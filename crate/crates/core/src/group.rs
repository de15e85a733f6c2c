//! Exact arithmetic in `Z_{p^alpha} + Z_{p^beta}` and the action of the unit weights on it.
//!
//! Residues are kept in least-nonnegative form. Products go through `u128`, so every
//! modulus that fits in a `u64` is handled without overflow.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("p = {0} is not an odd prime")]
    NotOddPrime(u64),
    #[error("alpha must be at least 1")]
    ZeroAlpha,
    #[error("beta = 0 is only available through GroupParams::rank_one")]
    ZeroBeta,
    #[error("beta = {beta} exceeds alpha = {alpha}")]
    BetaExceedsAlpha { alpha: u32, beta: u32 },
    #[error("p^{exp} does not fit in 64 bits for p = {p}")]
    ModulusOverflow { p: u64, exp: u32 },
    #[error("{0} is not a unit modulo p")]
    NotAUnit(u64),
    #[error("element ({a}, {b}) is out of range for the group")]
    OutOfRange { a: u64, b: u64 },
}

/// The group `Z_{p^alpha} + Z_{p^beta}` with `alpha >= beta`, together with the weight set
/// of units modulo `p^alpha`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GroupParams {
    p: u64,
    alpha: u32,
    beta: u32,
    mod_a: u64,
    mod_b: u64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    p: u64,
    alpha: u32,
    beta: u32,
}

impl TryFrom<RawParams> for GroupParams {
    type Error = GroupError;

    fn try_from(raw: RawParams) -> Result<Self, GroupError> {
        if raw.beta == 0 {
            GroupParams::rank_one(raw.p, raw.alpha)
        } else {
            GroupParams::new(raw.p, raw.alpha, raw.beta)
        }
    }
}

impl From<GroupParams> for RawParams {
    fn from(g: GroupParams) -> Self {
        RawParams { p: g.p, alpha: g.alpha, beta: g.beta }
    }
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupParams(p={}, alpha={}, beta={})", self.p, self.alpha, self.beta)
    }
}

impl fmt::Display for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.p, self.alpha, self.beta)
    }
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub(crate) fn checked_pow(p: u64, exp: u32) -> Result<u64, GroupError> {
    p.checked_pow(exp).ok_or(GroupError::ModulusOverflow { p, exp })
}

#[inline]
pub(crate) fn mul_mod(x: u64, y: u64, m: u64) -> u64 {
    ((x as u128 * y as u128) % m as u128) as u64
}

#[inline]
pub(crate) fn add_mod(x: u64, y: u64, m: u64) -> u64 {
    ((x as u128 + y as u128) % m as u128) as u64
}

#[inline]
pub(crate) fn sub_mod(x: u64, y: u64, m: u64) -> u64 {
    let (x, y) = (x % m, y % m);
    if x >= y {
        x - y
    } else {
        m - (y - x)
    }
}

/// Extended Euclid; returns `v` with `u * v = 1 (mod m)` when `gcd(u, m) = 1`.
pub(crate) fn inverse_mod(u: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (m as i128, (u % m) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(m as i128) as u64)
}

/// `p`-adic valuation of `x` capped at `cap` (so `v_p(0) = cap`).
pub(crate) fn valuation(mut x: u64, p: u64, cap: u32) -> u32 {
    if x == 0 {
        return cap;
    }
    let mut v = 0;
    while x.is_multiple_of(p) && v < cap {
        x /= p;
        v += 1;
    }
    v
}

impl GroupParams {
    /// Rank-two group; requires `p` an odd prime and `1 <= beta <= alpha`.
    pub fn new(p: u64, alpha: u32, beta: u32) -> Result<Self, GroupError> {
        if beta == 0 {
            return Err(GroupError::ZeroBeta);
        }
        Self::build(p, alpha, beta)
    }

    /// Cyclic group `Z_{p^alpha}`, modelled with a trivial second coordinate. Only used for
    /// cross-checks against the rank-one constant.
    pub fn rank_one(p: u64, alpha: u32) -> Result<Self, GroupError> {
        Self::build(p, alpha, 0)
    }

    fn build(p: u64, alpha: u32, beta: u32) -> Result<Self, GroupError> {
        if p < 3 || !is_prime(p) {
            return Err(GroupError::NotOddPrime(p));
        }
        if alpha == 0 {
            return Err(GroupError::ZeroAlpha);
        }
        if beta > alpha {
            return Err(GroupError::BetaExceedsAlpha { alpha, beta });
        }
        let mod_a = checked_pow(p, alpha)?;
        let mod_b = checked_pow(p, beta)?;
        Ok(GroupParams { p, alpha, beta, mod_a, mod_b })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn modulus_a(&self) -> u64 {
        self.mod_a
    }

    pub fn modulus_b(&self) -> u64 {
        self.mod_b
    }

    pub fn is_rank_one(&self) -> bool {
        self.beta == 0
    }

    /// `exp(G) = p^alpha`.
    pub fn exponent(&self) -> u64 {
        self.mod_a
    }

    /// `|G|`, or `None` if it does not fit in a `usize`.
    pub fn order(&self) -> Option<usize> {
        self.mod_a.checked_mul(self.mod_b).and_then(|n| usize::try_from(n).ok())
    }

    /// Number of weights, `p^(alpha-1) (p-1)`.
    pub fn unit_count(&self) -> u64 {
        self.mod_a / self.p * (self.p - 1)
    }

    /// The weight set in increasing order.
    pub fn units(&self) -> Vec<u64> {
        (1..self.mod_a).filter(|u| u % self.p != 0).collect()
    }

    /// Builds an element, reducing both coordinates.
    pub fn element(&self, a: u64, b: u64) -> Element {
        Element { a: a % self.mod_a, b: b % self.mod_b }
    }

    /// Builds an element from already-reduced residues.
    pub fn checked_element(&self, a: u64, b: u64) -> Result<Element, GroupError> {
        if a < self.mod_a && b < self.mod_b {
            Ok(Element { a, b })
        } else {
            Err(GroupError::OutOfRange { a, b })
        }
    }

    pub fn contains(&self, x: Element) -> bool {
        x.a < self.mod_a && x.b < self.mod_b
    }

    pub fn zero(&self) -> Element {
        Element { a: 0, b: 0 }
    }

    pub fn add(&self, x: Element, y: Element) -> Element {
        Element { a: add_mod(x.a, y.a, self.mod_a), b: add_mod(x.b, y.b, self.mod_b) }
    }

    pub fn neg(&self, x: Element) -> Element {
        Element { a: sub_mod(0, x.a, self.mod_a), b: sub_mod(0, x.b, self.mod_b) }
    }

    pub fn sub(&self, x: Element, y: Element) -> Element {
        self.add(x, self.neg(y))
    }

    pub fn scalar_mul(&self, u: u64, x: Element) -> Element {
        Element { a: mul_mod(u, x.a, self.mod_a), b: mul_mod(u, x.b, self.mod_b) }
    }

    /// `1 <= u <= p^alpha` and `gcd(u, p) = 1`.
    pub fn is_valid_weight(&self, u: u64) -> bool {
        u >= 1 && u <= self.mod_a && !u.is_multiple_of(self.p)
    }

    /// The `j` with `ord(x) = p^j`.
    pub fn element_order(&self, x: Element) -> u32 {
        let ja = self.alpha - valuation(x.a, self.p, self.alpha);
        let jb = self.beta - valuation(x.b, self.p, self.beta);
        ja.max(jb)
    }

    /// Inverse of `u` modulo `p^alpha`, in `[1, p^alpha)`.
    pub fn mod_inverse(&self, u: u64) -> Result<u64, GroupError> {
        if u.is_multiple_of(self.p) {
            return Err(GroupError::NotAUnit(u));
        }
        inverse_mod(u, self.mod_a).ok_or(GroupError::NotAUnit(u))
    }

    /// Reduction `Z_{p^alpha} -> Z_{p^beta}`.
    pub fn mu(&self, u: u64) -> u64 {
        u % self.mod_b
    }

    /// The automorphism sending `x0` to `(1, 0)` and fixing `(0, 1)`.
    pub fn theta_for(&self, x0: Element) -> Result<Automorphism, GroupError> {
        let a_inv = self.mod_inverse(x0.a)?;
        Ok(Automorphism { params: *self, a_inv, a: x0.a % self.mod_a, b0: x0.b % self.mod_b })
    }

    /// Orbit of `x` under multiplication by units, sorted, with its least member as representative.
    pub fn unit_orbit(&self, x: Element) -> (Element, Vec<Element>) {
        let mut orbit = self.orbit_elements(x);
        orbit.sort_unstable();
        orbit.dedup();
        (orbit[0], orbit)
    }

    fn orbit_elements(&self, x: Element) -> Vec<Element> {
        // u.x only depends on u modulo ord(x), so scanning units below ord(x) suffices.
        let ord = checked_pow(self.p, self.element_order(x)).unwrap_or(self.mod_a);
        (1..ord.max(1) + 1).filter(|u| *u % self.p != 0).map(|u| self.scalar_mul(u, x)).collect()
    }

    /// Least unit `u` with `u x = y`, if any.
    pub fn weight_between(&self, x: Element, y: Element) -> Option<u64> {
        (1..self.mod_a).filter(|u| u % self.p != 0).find(|&u| self.scalar_mul(u, x) == y)
    }

    /// Dense index `a * p^beta + b`.
    pub fn index_of(&self, x: Element) -> usize {
        (x.a * self.mod_b + x.b) as usize
    }

    pub fn element_at(&self, index: usize) -> Element {
        let i = index as u64;
        Element { a: i / self.mod_b, b: i % self.mod_b }
    }

    /// All elements in lexicographic order. Panics if `|G|` exceeds `usize`.
    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        let n = self.order().expect("group too large to enumerate");
        (0..n).map(move |i| self.element_at(i))
    }
}

/// A residue pair `(a, b)` with `0 <= a < p^alpha` and `0 <= b < p^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element {
    a: u64,
    b: u64,
}

impl Element {
    pub fn a(&self) -> u64 {
        self.a
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// `(x, y) -> (x a^{-1}, y - b0 mu(a^{-1} x))` for a fixed `(a, b0)` with `a` a unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Automorphism {
    params: GroupParams,
    a_inv: u64,
    a: u64,
    b0: u64,
}

impl Automorphism {
    pub fn a_inv(&self) -> u64 {
        self.a_inv
    }

    pub fn b0(&self) -> u64 {
        self.b0
    }

    pub fn apply(&self, x: Element) -> Element {
        let g = &self.params;
        let first = mul_mod(x.a, self.a_inv, g.mod_a);
        let second = sub_mod(x.b, mul_mod(self.b0, g.mu(first), g.mod_b), g.mod_b);
        Element { a: first, b: second }
    }

    pub fn apply_inverse(&self, y: Element) -> Element {
        let g = &self.params;
        let first = mul_mod(y.a, self.a, g.mod_a);
        let second = add_mod(y.b, mul_mod(self.b0, g.mu(y.a), g.mod_b), g.mod_b);
        Element { a: first, b: second }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(p: u64, a: u32, b: u32) -> GroupParams {
        GroupParams::new(p, a, b).unwrap()
    }

    #[test]
    fn construction_rejects_bad_params() {
        assert_eq!(GroupParams::new(2, 1, 1), Err(GroupError::NotOddPrime(2)));
        assert_eq!(GroupParams::new(9, 1, 1), Err(GroupError::NotOddPrime(9)));
        assert_eq!(GroupParams::new(3, 1, 2), Err(GroupError::BetaExceedsAlpha { alpha: 1, beta: 2 }));
        assert_eq!(GroupParams::new(3, 1, 0), Err(GroupError::ZeroBeta));
        assert_eq!(GroupParams::new(3, 0, 0), Err(GroupError::ZeroBeta));
        assert!(matches!(GroupParams::new(3, 41, 1), Err(GroupError::ModulusOverflow { .. })));
        assert!(GroupParams::new(3, 40, 40).is_ok());
        assert!(GroupParams::rank_one(5, 2).unwrap().is_rank_one());
    }

    #[test]
    fn add_examples() {
        let g = g(3, 2, 1);
        assert_eq!(g.add(g.element(8, 2), g.element(1, 1)), g.zero());
        assert_eq!(g.add(g.element(4, 2), g.element(7, 2)), g.element(2, 1));
        let x = g.element(5, 1);
        assert_eq!(g.add(x, g.zero()), x);
    }

    #[test]
    fn scalar_mul_examples() {
        let g = g(3, 2, 1);
        assert_eq!(g.scalar_mul(2, g.element(3, 1)), g.element(6, 2));
        assert_eq!(g.scalar_mul(1, g.element(7, 2)), g.element(7, 2));
        assert_eq!(g.scalar_mul(0, g.element(5, 2)), g.zero());
    }

    #[test]
    fn weight_predicate() {
        let g = g(3, 2, 1);
        assert!(g.is_valid_weight(5));
        assert!(!g.is_valid_weight(6));
        assert!(!g.is_valid_weight(9));
        assert!(!g.is_valid_weight(0));
        assert!(g.is_valid_weight(8));
        assert_eq!(g.units(), vec![1, 2, 4, 5, 7, 8]);
        assert_eq!(g.unit_count(), 6);
    }

    #[test]
    fn element_order_examples() {
        let g = g(3, 2, 1);
        assert_eq!(g.element_order(g.zero()), 0);
        assert_eq!(g.element_order(g.element(1, 0)), 2);
        assert_eq!(g.element_order(g.element(3, 1)), 1);
        assert_eq!(g.element_order(g.element(0, 2)), 1);
    }

    #[test]
    fn element_order_matches_repeated_multiplication() {
        for g in [g(3, 1, 1), g(3, 2, 1), g(3, 2, 2), g(5, 2, 1), g(7, 1, 1)] {
            for x in g.elements() {
                let j = g.element_order(x);
                assert!(g.scalar_mul(g.p().pow(j), x).is_zero());
                if j >= 1 {
                    assert!(!g.scalar_mul(g.p().pow(j - 1), x).is_zero());
                }
            }
        }
    }

    #[test]
    fn mod_inverse_examples() {
        let g = g(3, 2, 1);
        assert_eq!(g.mod_inverse(2), Ok(5));
        assert_eq!(g.mod_inverse(1), Ok(1));
        assert_eq!(g.mod_inverse(8), Ok(8));
        assert_eq!(g.mod_inverse(6), Err(GroupError::NotAUnit(6)));
    }

    #[test]
    fn mod_inverse_all_small_units() {
        for (p, alpha) in [(3u64, 10u32), (5, 7), (7, 5), (101, 2), (99991, 1)] {
            let g = GroupParams::rank_one(p, alpha).unwrap();
            for u in (1..100_000u64).filter(|u| u % p != 0) {
                let v = g.mod_inverse(u).unwrap();
                assert_eq!(mul_mod(u, v, g.modulus_a()), 1 % g.modulus_a(), "p={p} u={u}");
            }
        }
    }

    #[test]
    fn large_moduli_do_not_overflow() {
        let g = GroupParams::new(3, 40, 40).unwrap();
        let m = g.modulus_a();
        let x = g.element(m - 1, m - 2);
        assert_eq!(g.add(x, g.element(1, 2)), g.zero());
        let u = m - 1;
        assert_eq!(g.scalar_mul(u, g.element(1, 1)), g.element(m - 1, m - 1));
        assert_eq!(mul_mod(u, g.mod_inverse(u).unwrap(), m), 1);
    }

    #[test]
    fn mu_examples() {
        assert_eq!(g(3, 2, 1).mu(5), 2);
        assert_eq!(g(3, 2, 1).mu(0), 0);
        assert_eq!(g(3, 3, 2).mu(13), 4);
    }

    #[test]
    fn theta_examples() {
        let g = g(3, 2, 1);
        let theta = g.theta_for(g.element(2, 1)).unwrap();
        assert_eq!(theta.a_inv(), 5);
        assert_eq!(theta.apply(g.element(2, 1)), g.element(1, 0));
        assert_eq!(theta.apply(g.element(0, 1)), g.element(0, 1));
        assert_eq!(theta.apply(g.element(1, 0)), g.element(5, 1));
        assert_eq!(theta.apply_inverse(g.element(5, 1)), g.element(1, 0));
        assert_eq!(g.theta_for(g.element(3, 1)), Err(GroupError::NotAUnit(3)));
    }

    #[test]
    fn theta_is_order_preserving_bijection() {
        for g in [g(3, 1, 1), g(3, 2, 1), g(3, 2, 2), g(5, 2, 1), g(3, 3, 2)] {
            let n = g.order().unwrap();
            for x0 in g.elements().filter(|x| x.a() % g.p() != 0) {
                let theta = g.theta_for(x0).unwrap();
                assert_eq!(theta.apply(x0), g.element(1, 0));
                assert_eq!(theta.apply(g.element(0, 1)), g.element(0, 1));
                let mut seen = vec![false; n];
                for x in g.elements() {
                    let y = theta.apply(x);
                    assert!(g.contains(y));
                    assert!(!seen[g.index_of(y)]);
                    seen[g.index_of(y)] = true;
                    assert_eq!(theta.apply_inverse(y), x);
                    assert_eq!(g.element_order(y), g.element_order(x));
                }
            }
        }
    }

    #[test]
    fn theta_is_additive() {
        let g = g(5, 2, 1);
        let theta = g.theta_for(g.element(7, 3)).unwrap();
        for x in g.elements().step_by(7) {
            for y in g.elements().step_by(11) {
                assert_eq!(theta.apply(g.add(x, y)), g.add(theta.apply(x), theta.apply(y)));
            }
        }
    }

    #[test]
    fn orbit_examples() {
        let g311 = g(3, 1, 1);
        let g321 = g(3, 2, 1);
        assert_eq!(g321.unit_orbit(g321.zero()), (g321.zero(), vec![g321.zero()]));
        assert_eq!(g321.unit_orbit(g321.element(3, 1)), (g321.element(3, 1), vec![g321.element(3, 1), g321.element(6, 2)]));
        assert_eq!(g311.unit_orbit(g311.element(1, 0)), (g311.element(1, 0), vec![g311.element(1, 0), g311.element(2, 0)]));
        let (rep, orbit) = g321.unit_orbit(g321.element(8, 0));
        assert_eq!(rep, g321.element(1, 0));
        assert_eq!(orbit.len(), 6);
    }

    #[test]
    fn orbit_matches_full_unit_scan() {
        for g in [g(3, 2, 1), g(3, 2, 2), g(5, 1, 1), g(3, 3, 1)] {
            let units = g.units();
            for x in g.elements() {
                let mut full: Vec<Element> = units.iter().map(|&u| g.scalar_mul(u, x)).collect();
                full.sort();
                full.dedup();
                assert_eq!(g.unit_orbit(x).1, full);
            }
        }
    }

    #[test]
    fn orbits_partition_group() {
        for g in [g(3, 1, 1), g(3, 2, 1), g(3, 2, 2), g(5, 2, 2), g(7, 2, 1)] {
            let n = g.order().unwrap();
            let mut owner: Vec<Option<Element>> = vec![None; n];
            for x in g.elements() {
                let (rep, orbit) = g.unit_orbit(x);
                assert!(orbit.contains(&x));
                for y in orbit {
                    match owner[g.index_of(y)] {
                        Some(r) => assert_eq!(r, rep),
                        None => owner[g.index_of(y)] = Some(rep),
                    }
                }
            }
        }
    }

    #[test]
    fn rank_one_mode() {
        let g = GroupParams::rank_one(3, 2).unwrap();
        assert_eq!(g.order(), Some(9));
        assert_eq!(g.element(10, 5), g.element(1, 0));
        let theta = g.theta_for(g.element(2, 0)).unwrap();
        assert_eq!(theta.apply(g.element(2, 0)), g.element(1, 0));
    }

    #[test]
    fn params_serde_validates() {
        let g: GroupParams = serde_json::from_str(r#"{"p":3,"alpha":2,"beta":1}"#).unwrap();
        assert_eq!(g, GroupParams::new(3, 2, 1).unwrap());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"p":3,"alpha":2,"beta":1}"#);
        assert!(serde_json::from_str::<GroupParams>(r#"{"p":4,"alpha":2,"beta":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn weights_compose(a in 0u64..81, b in 0u64..27, u in 1u64..81, v in 1u64..81) {
            let g = GroupParams::new(3, 4, 3).unwrap();
            prop_assume!(u % 3 != 0 && v % 3 != 0);
            let x = g.element(a, b);
            prop_assert_eq!(
                g.scalar_mul(u, g.scalar_mul(v, x)),
                g.scalar_mul(mul_mod(u, v, g.modulus_a()), x)
            );
        }

        #[test]
        fn theta_round_trip(a0 in 0u64..125, b0 in 0u64..25, a in 0u64..125, b in 0u64..25) {
            let g = GroupParams::new(5, 3, 2).unwrap();
            prop_assume!(a0 % 5 != 0);
            let theta = g.theta_for(g.element(a0, b0)).unwrap();
            let x = g.element(a, b);
            prop_assert_eq!(theta.apply_inverse(theta.apply(x)), x);
        }
    }
}
