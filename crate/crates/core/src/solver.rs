//! Decision procedure and witness extraction for unit-weighted zero-sum subsequences.
//!
//! For a term `x` the set `{u x : u a unit}` is exactly the unit orbit of `x`, and weights
//! are chosen independently per term. The reachable weighted sums of `l`-term subsequences
//! therefore follow a dynamic program over `(l, g)` whose transition for `x` is a
//! translation by every member of its orbit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Element, GroupParams};
use crate::sequence::{OrbitTable, Sequence};

/// Largest group the dense tables are built for.
pub const MAX_TABLE_ORDER: usize = 1 << 24;

/// Default cap on weight-vector evaluations for [`brute_force_zero_sum`].
pub const DEFAULT_BRUTE_FORCE_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("requested length {n} exceeds sequence length {len}")]
    LengthExceedsSequence { n: usize, len: usize },
    #[error("mode at_most needs n >= 1")]
    ZeroAtMost,
    #[error("group of order {0:?} is too large for dense tables")]
    GroupTooLarge(Option<usize>),
    #[error("brute force over |S| = {len}, n = {n} needs about {estimate} weight evaluations, budget is {budget}")]
    BudgetExceeded { len: usize, n: usize, estimate: u128, budget: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Length exactly `n`.
    Exact,
    /// Length in `1..=n`.
    AtMost,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::AtMost => "at_most",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "at_most" | "at-most" => Ok(Mode::AtMost),
            other => Err(format!("unknown mode `{other}` (expected exact or at_most)")),
        }
    }
}

/// Witness of a weighted zero-sum: 1-based positions into the host sequence and one unit
/// weight per position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub indices: Vec<usize>,
    pub weights: Vec<u64>,
    pub mode: Mode,
    pub n: usize,
}

impl Certificate {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Builds a certificate from `(0-based position, weight)` pairs, sorting by position.
    pub fn from_picks(mut picks: Vec<(usize, u64)>, mode: Mode, n: usize) -> Self {
        picks.sort_unstable();
        let (indices, weights) = picks.into_iter().map(|(i, w)| (i + 1, w)).unzip();
        Certificate { indices, weights, mode, n }
    }
}

/// Why a certificate was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("certificate is for {found:?} n={found_n}, expected {expected:?} n={expected_n}")]
    ModeMismatch { expected: Mode, expected_n: usize, found: Mode, found_n: usize },
    #[error("{indices} indices but {weights} weights")]
    ArityMismatch { indices: usize, weights: usize },
    #[error("length {len} does not satisfy the mode")]
    WrongLength { len: usize },
    #[error("index {0} outside the sequence")]
    IndexOutOfRange(usize),
    #[error("indices not strictly increasing at {0}")]
    NotIncreasing(usize),
    #[error("weight {0} is not a unit")]
    InvalidWeight(u64),
    #[error("weighted sum is {0}, not zero")]
    NonZeroSum(Element),
}

impl Rejection {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::ModeMismatch { .. } => "mode_mismatch",
            Rejection::ArityMismatch { .. } => "arity_mismatch",
            Rejection::WrongLength { .. } => "wrong_length",
            Rejection::IndexOutOfRange(_) => "index_out_of_range",
            Rejection::NotIncreasing(_) => "not_increasing",
            Rejection::InvalidWeight(_) => "invalid_weight",
            Rejection::NonZeroSum(_) => "nonzero_sum",
        }
    }
}

/// Recomputes the weighted sum directly; shares nothing with the dynamic program.
pub fn check_certificate(seq: &Sequence, cert: &Certificate, n: usize, mode: Mode) -> Result<(), Rejection> {
    if cert.mode != mode || cert.n != n {
        return Err(Rejection::ModeMismatch { expected: mode, expected_n: n, found: cert.mode, found_n: cert.n });
    }
    if cert.indices.len() != cert.weights.len() {
        return Err(Rejection::ArityMismatch { indices: cert.indices.len(), weights: cert.weights.len() });
    }
    let len = cert.indices.len();
    let length_ok = match mode {
        Mode::Exact => len == n,
        Mode::AtMost => len >= 1 && len <= n,
    };
    if !length_ok {
        return Err(Rejection::WrongLength { len });
    }
    let g = seq.params();
    let mut sum = g.zero();
    let mut prev = 0usize;
    for (k, (&i, &u)) in cert.indices.iter().zip(&cert.weights).enumerate() {
        if i == 0 || i > seq.len() {
            return Err(Rejection::IndexOutOfRange(i));
        }
        if k > 0 && i <= prev {
            return Err(Rejection::NotIncreasing(i));
        }
        prev = i;
        if !g.is_valid_weight(u) {
            return Err(Rejection::InvalidWeight(u));
        }
        sum = g.add(sum, g.scalar_mul(u, seq.terms()[i - 1]));
    }
    if sum.is_zero() {
        Ok(())
    } else {
        Err(Rejection::NonZeroSum(sum))
    }
}

pub fn verify_certificate(seq: &Sequence, cert: &Certificate, n: usize, mode: Mode) -> bool {
    check_certificate(seq, cert, n, mode).is_ok()
}

type Layer = Vec<u64>;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn set_bit(layer: &mut [u64], i: usize) {
    layer[i >> 6] |= 1 << (i & 63);
}

#[inline]
fn test_bit(layer: &[u64], i: usize) -> bool {
    layer[i >> 6] >> (i & 63) & 1 == 1
}

fn for_each_bit(layer: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in layer.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let t = bits.trailing_zeros() as usize;
            f(w * 64 + t);
            bits &= bits - 1;
        }
    }
}

fn table_order(params: &GroupParams) -> Result<usize, SolverError> {
    match params.order() {
        Some(n) if n <= MAX_TABLE_ORDER => Ok(n),
        other => Err(SolverError::GroupTooLarge(other)),
    }
}

/// `dst |= { g + y : g in src, y in orbit }`.
fn translate_into(params: &GroupParams, dst: &mut [u64], src: &[u64], orbit: &[Element]) {
    let (ma, mb) = (params.modulus_a() as usize, params.modulus_b() as usize);
    for_each_bit(src, |gi| {
        let (ga, gb) = (gi / mb, gi % mb);
        for y in orbit {
            let a = (ga + y.a() as usize) % ma;
            let b = (gb + y.b() as usize) % mb;
            set_bit(dst, a * mb + b);
        }
    });
}

/// Reachable weighted sums by subsequence length, with the per-suffix layers kept so one
/// witness can be rebuilt for every reachable `(l, g)`.
#[derive(Debug, Clone)]
pub struct ReachTable {
    params: GroupParams,
    n: usize,
    // suffix[k][l]: sums of l-term subsequences of terms k.. ; suffix[len] is the base case.
    suffix: Vec<Vec<Layer>>,
}

impl ReachTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Whether some `l`-term subsequence with unit weights sums to `g`.
    pub fn reachable(&self, l: usize, g: Element) -> bool {
        l <= self.n && test_bit(&self.suffix[0][l], self.params.index_of(g))
    }

    /// All group elements reachable with exactly `l` terms.
    pub fn level(&self, l: usize) -> Vec<Element> {
        let mut out = Vec::new();
        if l <= self.n {
            for_each_bit(&self.suffix[0][l], |i| out.push(self.params.element_at(i)));
        }
        out
    }

    /// Witness for `(l, target)` preferring the smallest position, then the smallest weight,
    /// at every step.
    fn witness(&self, seq: &Sequence, l: usize, target: Element) -> Option<Vec<(usize, u64)>> {
        if !self.reachable(l, target) {
            return None;
        }
        let g = &self.params;
        let units = g.units();
        let mut need = target;
        let mut left = l;
        let mut picks = Vec::with_capacity(l);
        for (i, &x) in seq.terms().iter().enumerate() {
            if left == 0 {
                break;
            }
            let next = &self.suffix[i + 1];
            let chosen = units.iter().copied().find(|&u| {
                let rest = g.sub(need, g.scalar_mul(u, x));
                test_bit(&next[left - 1], g.index_of(rest))
            });
            if let Some(u) = chosen {
                need = g.sub(need, g.scalar_mul(u, x));
                left -= 1;
                picks.push((i, u));
            } else {
                debug_assert!(test_bit(&next[left], g.index_of(need)));
            }
        }
        debug_assert!(left == 0 && need.is_zero());
        Some(picks)
    }
}

/// Builds the reach table for lengths `0..=n`.
pub fn reach_exact(seq: &Sequence, n: usize) -> Result<ReachTable, SolverError> {
    if n > seq.len() {
        return Err(SolverError::LengthExceedsSequence { n, len: seq.len() });
    }
    let params = seq.params();
    let order = table_order(&params)?;
    let words = words_for(order);
    let mut layers: Vec<Layer> = vec![vec![0; words]; n + 1];
    set_bit(&mut layers[0], params.index_of(params.zero()));
    let mut suffix = vec![layers.clone(); seq.len() + 1];
    let mut cache: Vec<(Element, Vec<Element>)> = Vec::new();
    for (k, &x) in seq.terms().iter().enumerate().rev() {
        let orbit = match cache.iter().find(|(y, _)| *y == x) {
            Some((_, o)) => o.clone(),
            None => {
                let o = params.unit_orbit(x).1;
                cache.push((x, o.clone()));
                o
            }
        };
        let used = seq.len() - k;
        for l in (1..=n.min(used)).rev() {
            let (lower, upper) = layers.split_at_mut(l);
            translate_into(&params, &mut upper[0], &lower[l - 1], &orbit);
        }
        suffix[k] = layers.clone();
    }
    Ok(ReachTable { params, n, suffix })
}

fn effective_n(seq: &Sequence, n: usize, mode: Mode) -> Result<usize, SolverError> {
    match mode {
        Mode::Exact if n > seq.len() => Err(SolverError::LengthExceedsSequence { n, len: seq.len() }),
        Mode::Exact => Ok(n),
        Mode::AtMost if n == 0 => Err(SolverError::ZeroAtMost),
        Mode::AtMost => Ok(n.min(seq.len())),
    }
}

pub fn has_weighted_zero_sum(seq: &Sequence, n: usize, mode: Mode) -> Result<bool, SolverError> {
    let top = effective_n(seq, n, mode)?;
    let table = reach_exact(seq, top)?;
    let zero = seq.params().zero();
    Ok(match mode {
        Mode::Exact => table.reachable(n, zero),
        Mode::AtMost => (1..=top).any(|l| table.reachable(l, zero)),
    })
}

/// A certificate whenever [`has_weighted_zero_sum`] holds. In `at_most` mode the shortest
/// length is used.
pub fn find_certificate(seq: &Sequence, n: usize, mode: Mode) -> Result<Option<Certificate>, SolverError> {
    let top = effective_n(seq, n, mode)?;
    let table = reach_exact(seq, top)?;
    let zero = seq.params().zero();
    let length = match mode {
        Mode::Exact => Some(n).filter(|&l| table.reachable(l, zero)),
        Mode::AtMost => (1..=top).find(|&l| table.reachable(l, zero)),
    };
    Ok(length.and_then(|l| table.witness(seq, l, zero)).map(|picks| Certificate::from_picks(picks, mode, n)))
}

/// Independent oracle: enumerates index subsets and weight vectors directly.
///
/// A weighted zero-sum stays one after multiplying every weight by the same unit, so the
/// weight of the first chosen term is fixed to 1. The budget is checked up front against
/// `(#units)^l * C(|S|, l)` summed over the lengths examined.
pub fn brute_force_zero_sum(seq: &Sequence, n: usize, mode: Mode, budget: u128) -> Result<bool, SolverError> {
    let top = effective_n(seq, n, mode)?;
    let lengths: Vec<usize> = match mode {
        Mode::Exact => vec![n],
        Mode::AtMost => (1..=top).collect(),
    };
    let g = seq.params();
    let units = g.units();
    let estimate: u128 = lengths
        .iter()
        .map(|&l| {
            let subsets = crate::sequence::binomial(seq.len() as u64, l as u64).unwrap_or(u128::MAX);
            (units.len() as u128).saturating_pow(l as u32).saturating_mul(subsets)
        })
        .fold(0u128, |a, b| a.saturating_add(b));
    if estimate > budget {
        return Err(SolverError::BudgetExceeded { len: seq.len(), n, estimate, budget });
    }
    for l in lengths {
        if l == 0 {
            return Ok(true);
        }
        let mut subset: Vec<usize> = (0..l).collect();
        loop {
            let terms: Vec<Element> = subset.iter().map(|&i| seq.terms()[i]).collect();
            if weights_reach_zero(&g, &units, &terms[1..], terms[0]) {
                return Ok(true);
            }
            if !next_subset(&mut subset, seq.len()) {
                break;
            }
        }
    }
    Ok(false)
}

fn weights_reach_zero(g: &GroupParams, units: &[u64], rest: &[Element], partial: Element) -> bool {
    match rest.split_first() {
        None => partial.is_zero(),
        Some((&x, tail)) => units.iter().any(|&u| weights_reach_zero(g, units, tail, g.add(partial, g.scalar_mul(u, x)))),
    }
}

/// Lexicographic successor of a strictly increasing index set.
fn next_subset(subset: &mut [usize], len: usize) -> bool {
    let k = subset.len();
    for i in (0..k).rev() {
        if subset[i] < len - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Decision kernel for multisets of orbit representatives, as produced by
/// [`crate::sequence::CanonicalSpace`]. Holds the translate-by-orbit masks for every
/// `(orbit, g)` pair when they fit in memory.
#[derive(Debug)]
pub struct OrbitKernel {
    params: GroupParams,
    order: usize,
    words: usize,
    orbits: Vec<Vec<Element>>,
    masks: Option<Vec<u64>>,
}

const KERNEL_MASK_WORDS: usize = 1 << 23;

impl OrbitKernel {
    pub fn new(table: &OrbitTable) -> Result<Self, SolverError> {
        let params = table.params();
        let order = table_order(&params)?;
        let words = words_for(order);
        let orbits: Vec<Vec<Element>> = (0..table.len()).map(|id| table.orbit(id).to_vec()).collect();
        let masks = (orbits.len().saturating_mul(order).saturating_mul(words) <= KERNEL_MASK_WORDS).then(|| {
            let mut masks = vec![0u64; orbits.len() * order * words];
            let mut single = vec![0u64; words];
            for (id, orbit) in orbits.iter().enumerate() {
                for gi in 0..order {
                    single.iter_mut().for_each(|w| *w = 0);
                    set_bit(&mut single, gi);
                    let start = (id * order + gi) * words;
                    translate_into(&params, &mut masks[start..start + words], &single, orbit);
                }
            }
            masks
        });
        Ok(OrbitKernel { params, order, words, orbits, masks })
    }

    fn step(&self, dst: &mut [u64], src: &[u64], id: usize) {
        match &self.masks {
            Some(masks) => for_each_bit(src, |gi| {
                let start = (id * self.order + gi) * self.words;
                for (d, m) in dst.iter_mut().zip(&masks[start..start + self.words]) {
                    *d |= m;
                }
            }),
            None => translate_into(&self.params, dst, src, &self.orbits[id]),
        }
    }

    /// Exact-length decision for the multiset given by orbit ids.
    pub fn decide(&self, ids: &[usize], n: usize, mode: Mode) -> bool {
        let len = ids.len();
        let top = match mode {
            Mode::Exact if n > len => return false,
            Mode::Exact => n,
            Mode::AtMost => n.min(len),
        };
        if mode == Mode::Exact && n == 0 {
            return true;
        }
        if mode == Mode::AtMost && top == 0 {
            return false;
        }
        let mut layers = vec![0u64; (top + 1) * self.words];
        set_bit(&mut layers[..self.words], 0);
        for (k, &id) in ids.iter().enumerate() {
            let remaining_after = len - k - 1;
            let hi = top.min(k + 1);
            // In exact mode a level below n - remaining can no longer reach n.
            let lo = match mode {
                Mode::Exact => n.saturating_sub(remaining_after).max(1),
                Mode::AtMost => 1,
            };
            for l in (lo..=hi).rev() {
                let (lower, upper) = layers.split_at_mut(l * self.words);
                self.step(&mut upper[..self.words], &lower[(l - 1) * self.words..], id);
            }
            if mode == Mode::AtMost && (1..=hi).any(|l| layers[l * self.words] & 1 == 1) {
                return true;
            }
        }
        match mode {
            Mode::Exact => layers[top * self.words] & 1 == 1,
            Mode::AtMost => false,
        }
    }
}
