//! Sequences over the group, their order profiles, canonical forms under term-wise unit
//! scaling, and the standard zero-sum-free constructions.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Element, GroupError, GroupParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("term {index} ({a},{b}) is out of range")]
    TermOutOfRange { index: usize, a: u64, b: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// An indexed list of group elements. Positions are 0-based in code and 1-based in
/// certificates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    params: GroupParams,
    terms: Vec<Element>,
}

impl Sequence {
    pub fn new(params: GroupParams, terms: Vec<Element>) -> Result<Self, SequenceError> {
        for (index, x) in terms.iter().enumerate() {
            if !params.contains(*x) {
                return Err(SequenceError::TermOutOfRange { index, a: x.a(), b: x.b() });
            }
        }
        Ok(Sequence { params, terms })
    }

    /// Builds a sequence from raw pairs, reducing each coordinate.
    pub fn from_pairs(params: GroupParams, pairs: &[(u64, u64)]) -> Self {
        let terms = pairs.iter().map(|&(a, b)| params.element(a, b)).collect();
        Sequence { params, terms }
    }

    pub fn empty(params: GroupParams) -> Self {
        Sequence { params, terms: Vec::new() }
    }

    pub fn params(&self) -> GroupParams {
        self.params
    }

    pub fn terms(&self) -> &[Element] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<Element> {
        self.terms.get(index).copied()
    }

    pub fn push(&mut self, x: Element) {
        assert!(self.params.contains(x), "element {x} outside group {}", self.params);
        self.terms.push(x);
    }

    pub fn concat(&self, other: &Sequence) -> Sequence {
        assert_eq!(self.params, other.params);
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Sequence { params: self.params, terms }
    }

    /// Terms at the given 0-based positions, in that order.
    pub fn extract(&self, positions: &[usize]) -> Sequence {
        let terms = positions.iter().map(|&i| self.terms[i]).collect();
        Sequence { params: self.params, terms }
    }

    /// The sequence with the given 0-based positions removed.
    pub fn remove(&self, positions: &[usize]) -> Sequence {
        let terms = self.terms.iter().enumerate().filter(|(i, _)| !positions.contains(i)).map(|(_, x)| *x).collect();
        Sequence { params: self.params, terms }
    }

    /// Term-wise scaling `u_i x_i`.
    pub fn scale(&self, weights: &[u64]) -> Sequence {
        assert_eq!(weights.len(), self.terms.len());
        let terms = self.terms.iter().zip(weights).map(|(x, &u)| self.params.scalar_mul(u, *x)).collect();
        Sequence { params: self.params, terms }
    }

    pub fn map(&self, f: impl Fn(Element) -> Element) -> Sequence {
        let terms = self.terms.iter().map(|&x| f(x)).collect();
        Sequence { params: self.params, terms }
    }

    /// Multiset equality.
    pub fn same_multiset(&self, other: &Sequence) -> bool {
        let mut a = self.terms.clone();
        let mut b = other.terms.clone();
        a.sort_unstable();
        b.sort_unstable();
        self.params == other.params && a == b
    }

    /// Counts of terms of order `p^j` for `j = 0..=alpha`.
    pub fn order_profile(&self) -> OrderProfile {
        let mut delta = vec![0u64; self.params.alpha() as usize + 1];
        for &x in &self.terms {
            delta[self.params.element_order(x) as usize] += 1;
        }
        OrderProfile { delta }
    }

    /// Replaces every term by its orbit representative and sorts.
    pub fn canonicalize(&self) -> Sequence {
        let mut terms: Vec<Element> = self.terms.iter().map(|&x| self.params.unit_orbit(x).0).collect();
        terms.sort_unstable();
        Sequence { params: self.params, terms }
    }

    /// Header line `p alpha beta`, then one `a,b` line per term.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.params.p(), self.params.alpha(), self.params.beta());
        for x in &self.terms {
            let _ = writeln!(out, "{},{}", x.a(), x.b());
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Sequence, SequenceError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or(SequenceError::Parse { line: 1, message: "missing header line".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_err = |line: usize, message: String| SequenceError::Parse { line, message };
        if fields.len() != 3 {
            return Err(parse_err(1, format!("expected `p alpha beta`, got `{header}`")));
        }
        let p: u64 = fields[0].parse().map_err(|_| parse_err(1, format!("bad p `{}`", fields[0])))?;
        let alpha: u32 = fields[1].parse().map_err(|_| parse_err(1, format!("bad alpha `{}`", fields[1])))?;
        let beta: u32 = fields[2].parse().map_err(|_| parse_err(1, format!("bad beta `{}`", fields[2])))?;
        let params = if beta == 0 { GroupParams::rank_one(p, alpha)? } else { GroupParams::new(p, alpha, beta)? };
        let mut terms = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            terms.push(parse_term(&params, line).map_err(|m| parse_err(i + 1, m))?);
        }
        Ok(Sequence { params, terms })
    }

    /// Inline form `a,b;a,b;...` for a known group. The empty string is the empty sequence.
    pub fn parse_inline(params: GroupParams, text: &str) -> Result<Sequence, SequenceError> {
        let mut terms = Vec::new();
        for (i, chunk) in text.split(';').enumerate() {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            terms.push(parse_term(&params, chunk).map_err(|message| SequenceError::Parse { line: i + 1, message })?);
        }
        Ok(Sequence { params, terms })
    }
}

fn parse_term(params: &GroupParams, s: &str) -> Result<Element, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad residue `{a}`"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad residue `{b}`"))?;
    params.checked_element(a, b).map_err(|e| e.to_string())
}

/// `delta[j]` is the number of terms of order exactly `p^j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderProfile {
    pub delta: Vec<u64>,
}

impl OrderProfile {
    pub fn get(&self, j: usize) -> u64 {
        self.delta.get(j).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.delta.iter().sum()
    }

    /// Number of non-zero terms.
    pub fn nonzero(&self) -> u64 {
        self.delta.iter().skip(1).sum()
    }

    /// Shape of a zero-sum-free sequence of length `p^alpha + alpha + beta - 1`:
    /// `p^alpha - 1` zeros, every order `p^1..p^alpha` present, `alpha + beta` non-zero terms.
    pub fn matches_s_extremal(&self, params: &GroupParams) -> bool {
        self.get(0) == params.exponent() - 1
            && self.covers_all_orders(params)
            && self.nonzero() == (params.alpha() + params.beta()) as u64
    }

    /// Shape of a sequence of length `alpha + beta` with no zero-sum of length at most `p^alpha`.
    pub fn matches_eta_extremal(&self, params: &GroupParams) -> bool {
        self.get(0) == 0 && self.covers_all_orders(params) && self.nonzero() == (params.alpha() + params.beta()) as u64
    }

    fn covers_all_orders(&self, params: &GroupParams) -> bool {
        (1..=params.alpha() as usize).all(|j| self.get(j) >= 1)
    }
}

/// `p^alpha - 1` zeros, then `(p^i, 0)` for `i < alpha`, then `(0, p^i)` for `i < beta`.
pub fn extremal_s_sequence(params: GroupParams) -> Sequence {
    let zeros = (params.exponent() - 1) as usize;
    let mut terms = vec![params.zero(); zeros];
    terms.extend(powers(params, params.alpha()).map(|q| params.element(q, 0)));
    terms.extend(powers(params, params.beta()).map(|q| params.element(0, q)));
    Sequence { params, terms }
}

/// `(0, p^i)` for `i < beta`, then `(p^i, 0)` for `i < alpha`.
pub fn extremal_eta_sequence(params: GroupParams) -> Sequence {
    let mut terms: Vec<Element> = powers(params, params.beta()).map(|q| params.element(0, q)).collect();
    terms.extend(powers(params, params.alpha()).map(|q| params.element(q, 0)));
    Sequence { params, terms }
}

fn powers(params: GroupParams, count: u32) -> impl Iterator<Item = u64> {
    (0..count).map(move |i| params.p().pow(i))
}

/// Orbit representatives of the unit action, sorted lexicographically, with a lookup from
/// every element to its orbit.
#[derive(Debug)]
pub struct OrbitTable {
    params: GroupParams,
    reps: Vec<Element>,
    orbits: Vec<Vec<Element>>,
    rep_of: Vec<u32>,
}

impl OrbitTable {
    pub fn new(params: GroupParams) -> Arc<Self> {
        let n = params.order().expect("group too large for an orbit table");
        let mut rep_of = vec![u32::MAX; n];
        let mut reps = Vec::new();
        let mut orbits = Vec::new();
        for x in params.elements() {
            if rep_of[params.index_of(x)] != u32::MAX {
                continue;
            }
            // Elements are visited in lexicographic order, so x is its orbit's minimum.
            let (rep, orbit) = params.unit_orbit(x);
            debug_assert_eq!(rep, x);
            let id = reps.len() as u32;
            for y in &orbit {
                rep_of[params.index_of(*y)] = id;
            }
            reps.push(rep);
            orbits.push(orbit);
        }
        Arc::new(OrbitTable { params, reps, orbits, rep_of })
    }

    pub fn params(&self) -> GroupParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn reps(&self) -> &[Element] {
        &self.reps
    }

    pub fn orbit(&self, id: usize) -> &[Element] {
        &self.orbits[id]
    }

    pub fn orbit_id(&self, x: Element) -> usize {
        self.rep_of[self.params.index_of(x)] as usize
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// All multisets of orbit representatives of a fixed length, addressed by colexicographic
/// rank. A multiset `c_0 <= c_1 <= ...` corresponds to the strictly increasing combination
/// `d_i = c_i + i` of `[0, R + length - 1)`.
#[derive(Debug, Clone)]
pub struct CanonicalSpace {
    table: Arc<OrbitTable>,
    length: usize,
    total: u128,
}

impl CanonicalSpace {
    pub fn new(table: Arc<OrbitTable>, length: usize) -> Option<Self> {
        let r = table.len() as u64;
        let total = binomial(r + length as u64 - 1, length as u64)?;
        Some(CanonicalSpace { table, length, total })
    }

    pub fn table(&self) -> &Arc<OrbitTable> {
        &self.table
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// `C(R + length - 1, length)`.
    pub fn total(&self) -> u128 {
        self.total
    }

    /// Orbit ids of the multiset with the given rank.
    pub fn unrank(&self, mut rank: u128) -> Vec<usize> {
        assert!(rank < self.total, "rank {rank} out of range");
        let mut ids = vec![0usize; self.length];
        let mut hi = self.table.len() + self.length - 1;
        for i in (0..self.length).rev() {
            // Largest d < hi with C(d, i + 1) <= rank.
            let mut d = hi - 1;
            loop {
                let c = binomial(d as u64, i as u64 + 1).expect("rank arithmetic overflow");
                if c <= rank {
                    rank -= c;
                    break;
                }
                d -= 1;
            }
            ids[i] = d - i;
            hi = d;
        }
        ids
    }

    pub fn rank(&self, ids: &[usize]) -> u128 {
        assert_eq!(ids.len(), self.length);
        ids.iter().enumerate().map(|(i, &c)| binomial((c + i) as u64, i as u64 + 1).expect("rank arithmetic overflow")).sum()
    }

    /// Multisets with ranks in `start..end`, in rank order.
    pub fn iter_range(&self, start: u128, end: u128) -> CanonicalIter {
        let end = end.min(self.total);
        let current = (start < end).then(|| self.unrank(start));
        CanonicalIter { r: self.table.len(), remaining: end.saturating_sub(start), current }
    }

    pub fn iter(&self) -> CanonicalIter {
        self.iter_range(0, self.total)
    }

    pub fn sequence(&self, ids: &[usize]) -> Sequence {
        let terms = ids.iter().map(|&c| self.table.reps()[c]).collect();
        Sequence { params: self.table.params(), terms }
    }

    /// Orbit ids of an arbitrary sequence of the right length, sorted.
    pub fn ids_of(&self, seq: &Sequence) -> Vec<usize> {
        let mut ids: Vec<usize> = seq.terms().iter().map(|&x| self.table.orbit_id(x)).collect();
        ids.sort_unstable();
        ids
    }
}

/// Successive multisets in colex order.
#[derive(Debug, Clone)]
pub struct CanonicalIter {
    r: usize,
    remaining: u128,
    current: Option<Vec<usize>>,
}

impl Iterator for CanonicalIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current.take()?;
        if self.remaining > 0 {
            let mut next = out.clone();
            advance_colex(&mut next, self.r);
            self.current = Some(next);
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, usize::try_from(self.remaining).ok())
    }
}

/// Colex successor on non-decreasing ids: bump the first position that can grow without
/// passing its right neighbour, and reset everything before it to zero.
fn advance_colex(ids: &mut [usize], r: usize) {
    let len = ids.len();
    for i in 0..len {
        let limit = if i + 1 < len { ids[i + 1] } else { r - 1 };
        if ids[i] < limit {
            ids[i] += 1;
            ids[..i].iter_mut().for_each(|c| *c = 0);
            return;
        }
    }
}
