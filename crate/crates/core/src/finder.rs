//! Constructive search for a unit-weighted zero-sum of length `p^alpha` in any sequence of
//! `p^alpha + alpha + beta` terms, by quotienting, normalizing automorphisms and explicit
//! cancellation identities. The general dynamic program is only used as a last resort and
//! every such use is counted.
//!
//! Working terms remember which original positions they stand for and with which weight
//! factor, so any zero-sum found in a quotient or transformed group lifts to a zero-sum of
//! the original sequence just by expanding those parts.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::group::{add_mod, checked_pow, inverse_mod, mul_mod, sub_mod, GroupError, GroupParams};
use crate::lemmas::{count_solutions, select_mod_p_zero, unit_pair_weights, LemmaError};
use crate::sequence::{Sequence, SequenceError};
use crate::solver::{check_certificate, find_certificate, Certificate, Mode, Rejection, SolverError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinderError {
    #[error("sequence has {len} terms, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("sequence does not have the required shape: {0}")]
    Shape(String),
    #[error("no cancellation found")]
    NotFound,
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Lemma(#[from] LemmaError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

/// One step of a structured search. `data` may carry a `claim`: a zero-sum certificate over
/// the original sequence established by that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub lemma: String,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredTrace {
    pub steps: Vec<TraceStep>,
    pub certificate: Certificate,
    pub fallbacks: usize,
}

impl StructuredTrace {
    pub fn used_fallback(&self) -> bool {
        self.fallbacks > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("step {index} ({lemma}): malformed claim: {message}")]
    MalformedClaim { index: usize, lemma: String, message: String },
    #[error("step {index} ({lemma}): claim rejected: {rejection}")]
    Step { index: usize, lemma: String, rejection: Rejection },
    #[error("final certificate rejected: {0}")]
    Final(Rejection),
    #[error("trace declares {declared} fallbacks but records {found}")]
    FallbackCount { declared: usize, found: usize },
}

/// Re-verifies every intermediate claim and the final certificate against `seq`.
pub fn replay(seq: &Sequence, trace: &StructuredTrace) -> Result<(), ReplayError> {
    let mut found = 0;
    for (index, step) in trace.steps.iter().enumerate() {
        if step.lemma == FALLBACK {
            found += 1;
        }
        let Some(claim) = step.data.get("claim") else { continue };
        let lemma = step.lemma.clone();
        let cert: Certificate = serde_json::from_value(claim.clone()).map_err(|e| ReplayError::MalformedClaim {
            index,
            lemma: lemma.clone(),
            message: e.to_string(),
        })?;
        check_certificate(seq, &cert, cert.n, Mode::Exact).map_err(|rejection| ReplayError::Step { index, lemma, rejection })?;
    }
    let n = seq.params().modulus_a() as usize;
    check_certificate(seq, &trace.certificate, n, Mode::Exact).map_err(ReplayError::Final)?;
    if found != trace.fallbacks {
        return Err(ReplayError::FallbackCount { declared: trace.fallbacks, found });
    }
    Ok(())
}

/// Finds a zero-sum of length exactly `p^alpha` among the first `p^alpha + alpha + beta`
/// terms of `seq`, recording each step.
pub fn structured_find(seq: &Sequence) -> Result<StructuredTrace, FinderError> {
    let params = seq.params();
    let local = Local::new(params.p(), params.alpha(), params.beta());
    let need = local.need();
    if seq.len() < need {
        return Err(FinderError::TooShort { len: seq.len(), need });
    }
    let mut b = Builder::new(seq);
    let claim = b.solve(local, b.initial_terms(0..need))?;
    let n = local.n();
    let certificate = b.certificate(claim, n)?;
    Ok(StructuredTrace { steps: b.steps, certificate, fallbacks: b.fallbacks })
}

/// Length-`m` zero-sum from `m + 1` terms shaped as `(1, 0)`, then `(a, b)` with `p | a` and
/// `b` a unit, then terms containing some `x_i, x_j` with `a_i b_j` a unit. Only the first
/// `m + 1` terms are used. The cancellation always exists for `m >= 5`.
pub fn pair_cancellation(seq: &Sequence, m: usize) -> Result<Certificate, FinderError> {
    let params = seq.params();
    let p = params.p();
    if m < 3 {
        return Err(FinderError::Shape(format!("length {m} is below 3")));
    }
    if seq.len() < m + 1 {
        return Err(FinderError::TooShort { len: seq.len(), need: m + 1 });
    }
    let t = &seq.terms()[..=m];
    if t[0] != params.element(1, 0) {
        return Err(FinderError::Shape("first term must be (1,0)".into()));
    }
    if !t[1].a().is_multiple_of(p) || t[1].b().is_multiple_of(p) {
        return Err(FinderError::Shape("second term must be (a,b) with p | a and b a unit".into()));
    }
    let rest = &t[2..];
    if !rest.iter().any(|x| x.a() % p != 0) || !rest.iter().any(|x| x.b() % p != 0) {
        return Err(FinderError::Shape("remaining terms need a unit first and a unit second coordinate".into()));
    }
    let local = Local::new(p, params.alpha(), params.beta());
    let mut b = Builder::new(seq);
    let terms = b.initial_terms(0..m + 1);
    let claim = b.pair_cancel(local, &terms, 0, 1, m)?.ok_or(FinderError::NotFound)?;
    b.certificate(claim, m)
}

/// Length-`ell` zero-sum from a sequence of at least `ell + beta` terms, two of which are
/// equal with a unit first coordinate (`ell >= 4`).
pub fn repeated_unit(seq: &Sequence, ell: usize) -> Result<Certificate, FinderError> {
    let params = seq.params();
    check_ell(seq, ell, 4)?;
    let (i, j) =
        repeated_unit_pair(seq).ok_or_else(|| FinderError::Shape("no repeated term with a unit first coordinate".into()))?;
    let mut b = Builder::new(seq);
    let order: Vec<usize> = [i, j].into_iter().chain((0..seq.len()).filter(|&k| k != i && k != j)).collect();
    let terms = b.initial_terms(order);
    let local = Local::new(params.p(), params.alpha(), params.beta());
    let claim = b.repeated_unit(local, terms, ell)?;
    b.certificate(claim, ell)
}

/// Length-`ell` zero-sum (`ell >= 9`) when the term at `target` (0-based, unit first
/// coordinate) equals `sum u_i x_i` over `relation`: the relation terms are merged into one
/// copy of `x_target`, reducing to [`repeated_unit`] with `ell - k + 1`.
pub fn absorption(seq: &Sequence, ell: usize, target: usize, relation: &[(usize, u64)]) -> Result<Certificate, FinderError> {
    let params = seq.params();
    check_ell(seq, ell, 9)?;
    let k = relation.len();
    if k == 0 || ell + 1 < k + 4 {
        return Err(FinderError::Shape(format!("relation of {k} terms leaves fewer than 4 for length {ell}")));
    }
    let mut seen = HashSet::new();
    for &(pos, u) in relation {
        if pos >= seq.len() || pos == target || !seen.insert(pos) {
            return Err(FinderError::Shape(format!("bad relation position {pos}")));
        }
        if !params.is_valid_weight(u) {
            return Err(FinderError::Shape(format!("relation weight {u} is not a unit")));
        }
    }
    let x = seq.get(target).ok_or_else(|| FinderError::Shape(format!("target {target} outside the sequence")))?;
    if x.a() % params.p() == 0 {
        return Err(FinderError::Shape("target needs a unit first coordinate".into()));
    }
    let sum = relation.iter().fold(params.zero(), |acc, &(pos, u)| params.add(acc, params.scalar_mul(u, seq.terms()[pos])));
    if sum != x {
        return Err(FinderError::Shape(format!("relation sums to {sum}, not {x}")));
    }
    let mut b = Builder::new(seq);
    let terms = b.initial_terms(0..seq.len());
    let local = Local::new(params.p(), params.alpha(), params.beta());
    let claim =
        b.absorb(local, &terms, target, relation, ell)?.ok_or_else(|| FinderError::Internal("absorption refused".into()))?;
    b.certificate(claim, ell)
}

fn check_ell(seq: &Sequence, ell: usize, min: usize) -> Result<(), FinderError> {
    if ell < min {
        return Err(FinderError::Shape(format!("length {ell} is below {min}")));
    }
    let need = ell + seq.params().beta() as usize;
    if seq.len() < need {
        return Err(FinderError::TooShort { len: seq.len(), need });
    }
    Ok(())
}

fn repeated_unit_pair(seq: &Sequence) -> Option<(usize, usize)> {
    let t = seq.terms();
    let p = seq.params().p();
    (0..t.len()).filter(|&i| !t[i].a().is_multiple_of(p)).find_map(|i| (i + 1..t.len()).find(|&j| t[j] == t[i]).map(|j| (i, j)))
}

const FALLBACK: &str = "fallback";

/// `Z_{p^ea} (+) Z_{p^eb}` with either exponent allowed to be zero.
#[derive(Clone, Copy, Debug)]
struct Local {
    p: u64,
    ea: u32,
    eb: u32,
    ma: u64,
    mb: u64,
}

impl Local {
    fn new(p: u64, ea: u32, eb: u32) -> Self {
        let pow = |e| checked_pow(p, e).expect("local exponents never exceed the host group's");
        Local { p, ea, eb, ma: pow(ea), mb: pow(eb) }
    }

    fn swapped(self) -> Self {
        Local::new(self.p, self.eb, self.ea)
    }

    fn n(&self) -> usize {
        self.ma.max(self.mb) as usize
    }

    fn need(&self) -> usize {
        self.n() + (self.ea + self.eb) as usize
    }

    fn unit(&self, x: u64) -> bool {
        !x.is_multiple_of(self.p)
    }

    fn params(&self) -> Result<GroupParams, GroupError> {
        if self.eb == 0 {
            GroupParams::rank_one(self.p, self.ea)
        } else {
            GroupParams::new(self.p, self.ea, self.eb)
        }
    }

    fn dims(&self) -> Value {
        json!([self.ea, self.eb])
    }
}

#[derive(Clone, Debug)]
struct Term {
    a: u64,
    b: u64,
    /// `(original 0-based position, weight factor)`.
    parts: Vec<(usize, u64)>,
}

impl Term {
    fn swapped(self) -> Term {
        Term { a: self.b, b: self.a, ..self }
    }

    fn origin(&self) -> usize {
        self.parts[0].0
    }
}

type Claim = Vec<(usize, u64)>;

struct Builder<'s> {
    seq: &'s Sequence,
    p: u64,
    /// `p^alpha` of the host group; every local modulus divides it.
    top: u64,
    steps: Vec<TraceStep>,
    fallbacks: usize,
}

impl<'s> Builder<'s> {
    fn new(seq: &'s Sequence) -> Self {
        let params = seq.params();
        Builder { seq, p: params.p(), top: params.modulus_a(), steps: Vec::new(), fallbacks: 0 }
    }

    fn initial_terms(&self, positions: impl IntoIterator<Item = usize>) -> Vec<Term> {
        positions
            .into_iter()
            .map(|i| {
                let x = self.seq.terms()[i];
                Term { a: x.a(), b: x.b(), parts: vec![(i, 1)] }
            })
            .collect()
    }

    fn certificate(&self, claim: Claim, n: usize) -> Result<Certificate, FinderError> {
        let cert = Certificate::from_picks(claim, Mode::Exact, n);
        check_certificate(self.seq, &cert, n, Mode::Exact)
            .map_err(|e| FinderError::Internal(format!("assembled certificate rejected: {e}")))?;
        Ok(cert)
    }

    fn expand(&self, terms: &[Term], picks: &[(usize, u64)]) -> Claim {
        picks
            .iter()
            .flat_map(|&(pos, w)| terms[pos].parts.iter().map(move |&(orig, f)| (orig, mul_mod(w % self.top, f, self.top))))
            .collect()
    }

    fn record(&mut self, lemma: &str, mut data: Value, claim: Option<&Claim>) {
        if let Some(claim) = claim {
            let cert = Certificate::from_picks(claim.clone(), Mode::Exact, claim.len());
            data["claim"] = serde_json::to_value(cert).expect("certificate serializes");
        }
        self.steps.push(TraceStep { lemma: lemma.to_string(), data });
    }

    fn scale(&self, loc: Local, t: &mut Term, c: u64) {
        t.a = mul_mod(t.a, c, loc.ma);
        t.b = mul_mod(t.b, c, loc.mb);
        for part in &mut t.parts {
            part.1 = mul_mod(part.1, c, self.top);
        }
    }

    /// Applies the automorphism sending `terms[pivot]` to `(1, 0)`.
    fn normalize(&mut self, loc: Local, terms: &mut [Term], pivot: usize) -> Result<(), FinderError> {
        let params = loc.params()?;
        let theta = params.theta_for(params.checked_element(terms[pivot].a, terms[pivot].b)?)?;
        for t in terms.iter_mut() {
            let y = theta.apply(params.checked_element(t.a, t.b)?);
            (t.a, t.b) = (y.a(), y.b());
        }
        let data = json!({ "pivot": terms[pivot].origin() + 1, "image": "(1,0)", "group": loc.dims() });
        self.record("normalize", data, None);
        Ok(())
    }

    /// Same with the coordinates exchanged: sends `terms[pivot]` to `(0, 1)`. Needs `ea == eb`.
    fn normalize_second(&mut self, loc: Local, terms: &mut [Term], pivot: usize) -> Result<(), FinderError> {
        let params = loc.params()?;
        let theta = params.theta_for(params.checked_element(terms[pivot].b, terms[pivot].a)?)?;
        for t in terms.iter_mut() {
            let y = theta.apply(params.checked_element(t.b, t.a)?);
            (t.a, t.b) = (y.b(), y.a());
        }
        let data = json!({ "pivot": terms[pivot].origin() + 1, "image": "(0,1)", "group": loc.dims() });
        self.record("normalize", data, None);
        Ok(())
    }

    fn solve(&mut self, loc: Local, terms: Vec<Term>) -> Result<Claim, FinderError> {
        let (loc, mut terms) =
            if loc.ea < loc.eb { (loc.swapped(), terms.into_iter().map(Term::swapped).collect()) } else { (loc, terms) };
        let need = loc.need();
        if terms.len() < need {
            return Err(FinderError::Internal(format!("{} terms for a group needing {need}", terms.len())));
        }
        terms.truncate(need);
        if loc.eb == 0 {
            return self.cyclic(loc, terms);
        }
        if let Some(claim) = self.try_quotient(loc, &terms)? {
            return Ok(claim);
        }
        if loc.ea == loc.eb {
            self.equal_exponents(loc, terms)
        } else {
            self.unequal_exponents(loc, terms)
        }
    }

    /// When all but at most one term lie in a subgroup of index `p`, solve there instead.
    fn try_quotient(&mut self, loc: Local, terms: &[Term]) -> Result<Option<Claim>, FinderError> {
        let m = terms.len();
        let p = self.p;
        let in_b: Vec<&Term> = terms.iter().filter(|t| t.b % p == 0).collect();
        if in_b.len() + 1 >= m {
            let sub: Vec<Term> = in_b.into_iter().take(m - 1).map(|t| Term { b: t.b / p, ..t.clone() }).collect();
            let inner = Local::new(p, loc.ea, loc.eb - 1);
            let claim = self.solve(inner, sub)?;
            self.record("quotient", json!({ "coordinate": 2, "group": loc.dims(), "into": inner.dims() }), Some(&claim));
            return Ok(Some(claim));
        }
        let in_a: Vec<Term> = terms.iter().filter(|t| t.a % p == 0).map(|t| Term { a: t.a / p, ..t.clone() }).collect();
        if in_a.len() + 1 < m {
            return Ok(None);
        }
        let inner = Local::new(p, loc.ea - 1, loc.eb);
        if loc.ea == loc.eb {
            let sub = in_a.into_iter().take(m - 1).collect();
            let claim = self.solve(inner, sub)?;
            self.record("quotient", json!({ "coordinate": 1, "group": loc.dims(), "into": inner.dims() }), Some(&claim));
            return Ok(Some(claim));
        }
        self.blocks(loc, inner, in_a).map(Some)
    }

    /// `p` disjoint zero-sums of length `p^(e-1)` in the subgroup `p G` joined into one of
    /// length `p^e`.
    fn blocks(&mut self, loc: Local, inner: Local, mut pool: Vec<Term>) -> Result<Claim, FinderError> {
        let mut claim = Claim::new();
        for _ in 0..self.p {
            let chunk: Vec<Term> = pool.iter().take(inner.need()).cloned().collect();
            let part = self.solve(inner, chunk)?;
            let used: HashSet<usize> = part.iter().map(|&(i, _)| i).collect();
            pool.retain(|t| !used.contains(&t.origin()));
            claim.extend(part);
        }
        self.record("block-sum", json!({ "blocks": self.p, "group": loc.dims(), "into": inner.dims() }), Some(&claim));
        Ok(claim)
    }

    fn cyclic(&mut self, loc: Local, mut terms: Vec<Term>) -> Result<Claim, FinderError> {
        let n = loc.ma as usize;
        terms.truncate(n + loc.ea as usize);
        if loc.ea == 0 {
            return Ok(self.expand(&terms, &[(0, 1)]));
        }
        let units: Vec<usize> = (0..terms.len()).filter(|&i| loc.unit(terms[i].a)).collect();
        if units.len() >= 2 {
            let (u0, u1) = (units[0], units[1]);
            let mut chosen = vec![u0, u1];
            chosen.extend((0..terms.len()).filter(|&i| i != u0 && i != u1).take(n - 2));
            chosen.sort_unstable();
            let coeffs: Vec<u64> = chosen.iter().map(|&i| terms[i].a).collect();
            let weights = unit_pair_weights(self.p, loc.ma, &coeffs, 0)?;
            let picks: Vec<(usize, u64)> = chosen.into_iter().zip(weights).collect();
            let claim = self.expand(&terms, &picks);
            self.record("unit-pair", json!({ "modulus": loc.ma, "coefficients": coeffs }), Some(&claim));
            return Ok(claim);
        }
        let pool: Vec<Term> = terms.iter().filter(|t| !loc.unit(t.a)).map(|t| Term { a: t.a / self.p, ..t.clone() }).collect();
        self.blocks(loc, Local::new(self.p, loc.ea - 1, 0), pool)
    }

    fn equal_exponents(&mut self, loc: Local, mut terms: Vec<Term>) -> Result<Claim, FinderError> {
        let n = loc.n();
        let jb = (0..terms.len())
            .find(|&i| loc.unit(terms[i].b))
            .ok_or_else(|| FinderError::Internal("no unit second coordinate".into()))?;
        self.normalize_second(loc, &mut terms, jb)?;
        if let Some(claim) = self.try_quotient(loc, &terms)? {
            return Ok(claim);
        }
        let ja = (0..terms.len())
            .find(|&i| loc.unit(terms[i].a))
            .ok_or_else(|| FinderError::Internal("no unit first coordinate".into()))?;
        self.normalize(loc, &mut terms, ja)?;
        if let Some(claim) = self.try_quotient(loc, &terms)? {
            return Ok(claim);
        }
        match self.pair_cancel(loc, &terms, ja, jb, n)? {
            Some(claim) => Ok(claim),
            None => self.fallback(loc, &terms, n, "pair cancellation found nothing"),
        }
    }

    fn unequal_exponents(&mut self, loc: Local, mut terms: Vec<Term>) -> Result<Claim, FinderError> {
        let n = loc.n();
        let (p, top) = (self.p, self.top);
        let ja = (0..terms.len())
            .find(|&i| loc.unit(terms[i].a))
            .ok_or_else(|| FinderError::Internal("no unit first coordinate".into()))?;
        self.normalize(loc, &mut terms, ja)?;
        if let Some(claim) = self.try_quotient(loc, &terms)? {
            return Ok(claim);
        }
        let rest: Vec<usize> = (0..terms.len()).filter(|&i| i != ja).collect();
        if let Some(&h) = rest.iter().find(|&&i| !loc.unit(terms[i].a) && loc.unit(terms[i].b)) {
            return match self.pair_cancel(loc, &terms, ja, h, n)? {
                Some(claim) => Ok(claim),
                None => self.fallback(loc, &terms, n, "pair cancellation found nothing"),
            };
        }
        let both: Vec<usize> = rest.iter().copied().filter(|&i| loc.unit(terms[i].a) && loc.unit(terms[i].b)).collect();
        if both.len() < 2 {
            return Err(FinderError::Internal("fewer than two terms with both coordinates units".into()));
        }
        for &i in &both {
            let c = inverse_mod(terms[i].a, loc.ma).expect("unit");
            self.scale(loc, &mut terms[i], c);
        }
        self.record(
            "scale",
            json!({ "terms": both.iter().map(|&i| terms[i].origin() + 1).collect::<Vec<_>>(), "image": "(1,b)" }),
            None,
        );

        let (x2, x3) = (both[0], both[1]);
        let relation: Option<Vec<(usize, u64)>> =
            if let Some(&i) = rest.iter().find(|&&i| i != x2 && i != x3 && loc.unit(terms[i].a) && !loc.unit(terms[i].b)) {
                let (ai, bi, b2, b3) = (terms[i].a, terms[i].b, terms[x2].b, terms[x3].b);
                let d = sub_mod(mul_mod(ai, b3, top), bi, top);
                let w = inverse_mod(d % loc.ma, loc.ma).expect("unit");
                Some(vec![(x2, mul_mod(w, d, top)), (x3, top - mul_mod(mul_mod(w, ai, top), b2, top)), (i, mul_mod(w, b2, top))])
            } else {
                both.iter().enumerate().find_map(|(k, &s)| {
                    both[k + 1..].iter().find(|&&t| !(terms[s].b + p - terms[t].b % p).is_multiple_of(p)).map(|&t| {
                        let d = sub_mod(terms[s].b, terms[t].b, top);
                        let w = inverse_mod(d % loc.ma, loc.ma).expect("unit");
                        vec![(t, mul_mod(w, terms[s].b, top)), (s, top - mul_mod(w, terms[t].b, top))]
                    })
                })
            };
        if let Some(relation) = relation {
            return match self.absorb(loc, &terms, ja, &relation, n)? {
                Some(claim) => Ok(claim),
                None => self.fallback(loc, &terms, n, "absorption needs a longer sequence"),
            };
        }
        // Every scaled term is (1, b) with the same b mod p: shear it away.
        let b2 = terms[x2].b;
        let mut shifted = terms.clone();
        let params = loc.params()?;
        let shear = params.theta_for(params.element(1, b2))?;
        for t in shifted.iter_mut() {
            let y = shear.apply(params.checked_element(t.a, t.b)?);
            (t.a, t.b) = (y.a(), y.b());
        }
        self.record("normalize", json!({ "pivot": terms[x2].origin() + 1, "image": "(1,0)", "group": loc.dims() }), None);
        self.try_quotient(loc, &shifted)?.ok_or_else(|| FinderError::Internal("shear did not produce a quotient".into()))
    }

    /// Zero-sum of length `m` using `terms[first] = (1, 0)` and `terms[second]` with `p | a`,
    /// `b` a unit, plus `m - 2` of the others with multipliers in `[1, p-1]` whose weighted
    /// coordinate sums `A`, `B` are both non-zero mod `p`. With such multipliers `v`,
    /// `(b2 A - a2 B) x_first + B x_second = b2 sum v_k x_k`, which rearranges into the
    /// zero-sum.
    fn pair_cancel(
        &mut self,
        loc: Local,
        terms: &[Term],
        first: usize,
        second: usize,
        m: usize,
    ) -> Result<Option<Claim>, FinderError> {
        let p = self.p;
        let top = self.top;
        let rest: Vec<usize> = (0..terms.len()).filter(|&i| i != first && i != second).collect();
        if rest.len() + 1 < m - 1 {
            return Err(FinderError::Internal("too few terms for pair cancellation".into()));
        }
        let both = rest.iter().copied().find(|&i| loc.unit(terms[i].a) && loc.unit(terms[i].b));
        let (i, j) = match both {
            Some(i) => (i, i),
            None => {
                let i = rest.iter().copied().find(|&i| loc.unit(terms[i].a));
                let j = rest.iter().copied().find(|&j| loc.unit(terms[j].b));
                match (i, j) {
                    (Some(i), Some(j)) => (i, j),
                    _ => return Err(FinderError::Internal("no pair with a_i b_j a unit".into())),
                }
            }
        };
        let mut cand = vec![i];
        if j != i {
            cand.push(j);
        }
        cand.extend(rest.iter().copied().filter(|&k| k != i && k != j));
        cand.truncate(m - 1);

        // Try the drop suggested by a mod-p zero selection among the candidates after `i`,
        // then every other drop.
        let mut drops: Vec<usize> = Vec::new();
        let mut guided = None;
        if cand.len() >= 4 {
            let coeffs: Vec<u64> = cand[1..].iter().map(|&k| terms[k].a).collect();
            let kept = select_mod_p_zero(&coeffs, p)?.positions;
            let dropped = (0..coeffs.len()).find(|k| !kept.contains(k)).expect("one entry dropped");
            if cand[1 + dropped] != j {
                guided = Some(1 + dropped);
                drops.push(1 + dropped);
            }
        }
        drops.extend((0..cand.len()).rev().filter(|&d| Some(d) != guided));

        for d in drops {
            let chosen: Vec<usize> = cand.iter().enumerate().filter(|&(k, _)| k != d).map(|(_, &k)| k).collect();
            let residues: Vec<(u64, u64)> = chosen.iter().map(|&k| (terms[k].a % p, terms[k].b % p)).collect();
            let Some(v) = nonzero_multipliers(&residues, p) else { continue };
            let big_a = chosen.iter().zip(&v).fold(0, |acc, (&k, &vk)| add_mod(acc, mul_mod(vk, terms[k].a, top), top));
            let big_b = chosen.iter().zip(&v).fold(0, |acc, (&k, &vk)| add_mod(acc, mul_mod(vk, terms[k].b, top), top));
            let (a2, b2) = (terms[second].a, terms[second].b);
            let w1 = sub_mod(mul_mod(big_b, a2, top), mul_mod(b2, big_a, top), top);
            let w2 = (top - big_b) % top;
            let mut picks = vec![(first, w1), (second, w2)];
            picks.extend(chosen.iter().zip(&v).map(|(&k, &vk)| (k, mul_mod(b2, vk, top))));
            let claim = self.expand(terms, &picks);
            let mut data = json!({
                "m": m,
                "dropped": terms[cand[d]].origin() + 1,
                "guided": Some(d) == guided,
                "multipliers": v,
            });
            let a_res: Vec<u64> = residues.iter().map(|r| r.0).collect();
            let b_res: Vec<u64> = residues.iter().map(|r| r.1).collect();
            if let (Ok(na), Ok(nb)) = (count_solutions(&a_res, p), count_solutions(&b_res, p)) {
                data["solutions_first"] = json!(na.to_string());
                data["solutions_second"] = json!(nb.to_string());
            }
            self.record("pair-cancellation", data, Some(&claim));
            return Ok(Some(claim));
        }
        if m >= 5 {
            return Err(FinderError::Internal(format!("pair cancellation failed for m = {m}")));
        }
        Ok(None)
    }

    /// Merges the `relation` terms (weighted sum equal to `terms[target]`) into a second copy
    /// of `terms[target]` and solves the repeated-term problem with the shorter length.
    fn absorb(
        &mut self,
        loc: Local,
        terms: &[Term],
        target: usize,
        relation: &[(usize, u64)],
        ell: usize,
    ) -> Result<Option<Claim>, FinderError> {
        let k = relation.len();
        if ell < 9 || ell + 1 < k + 4 {
            return Ok(None);
        }
        let reduced = ell + 1 - k;
        let mut rel_picks = relation.to_vec();
        rel_picks.push((target, self.top - 1));
        let rel_claim = self.expand(terms, &rel_picks);
        self.record("absorption", json!({ "k": k, "target": terms[target].origin() + 1, "length": reduced }), Some(&rel_claim));

        let combined = Term { a: terms[target].a, b: terms[target].b, parts: self.expand(terms, relation) };
        let in_relation: HashSet<usize> = relation.iter().map(|&(i, _)| i).collect();
        let mut merged = vec![terms[target].clone(), combined];
        merged.extend((0..terms.len()).filter(|i| *i != target && !in_relation.contains(i)).map(|i| terms[i].clone()));
        let claim = self.repeated_unit(loc, merged, reduced)?;
        if claim.len() != ell {
            return Err(FinderError::Internal("merged term was not used".into()));
        }
        Ok(Some(claim))
    }

    /// `terms[0] == terms[1]` with unit first coordinate, at least `ell + eb` terms, `ell >= 4`.
    /// Both copies always appear in the result.
    fn repeated_unit(&mut self, loc: Local, mut terms: Vec<Term>, ell: usize) -> Result<Claim, FinderError> {
        let p = self.p;
        if terms.len() < ell + loc.eb as usize || ell < 4 {
            return Err(FinderError::Internal("repeated-term input too short".into()));
        }
        if loc.ea >= 1 && (terms[0].a, terms[0].b) != (1, 0) {
            self.normalize(loc, &mut terms, 0)?;
        }
        if loc.eb == 0 {
            let coeffs: Vec<u64> = terms[..ell].iter().map(|t| t.a).collect();
            let weights = unit_pair_weights(p, loc.ma, &coeffs, 0)?;
            let picks: Vec<(usize, u64)> = weights.into_iter().enumerate().collect();
            let claim = self.expand(&terms, &picks);
            self.record("repeated-unit", json!({ "length": ell, "group": loc.dims() }), Some(&claim));
            return Ok(claim);
        }
        let b_units: Vec<usize> = (2..terms.len()).filter(|&i| loc.unit(terms[i].b)).collect();
        if b_units.len() >= 2 {
            let (u0, u1) = (b_units[0], b_units[1]);
            let mut chosen = vec![u0, u1];
            chosen.extend((2..terms.len()).filter(|&i| i != u0 && i != u1).take(ell - 4));
            chosen.sort_unstable();
            let b_coeffs: Vec<u64> = chosen.iter().map(|&i| terms[i].b).collect();
            let u = unit_pair_weights(p, loc.mb, &b_coeffs, 0)?;
            let sa = chosen.iter().zip(&u).fold(0, |acc, (&i, &w)| add_mod(acc, mul_mod(w, terms[i].a, loc.ma), loc.ma));
            let head = unit_pair_weights(p, loc.ma, &[1, 1], sub_mod(0, sa, loc.ma))?;
            let mut picks = vec![(0, head[0]), (1, head[1])];
            picks.extend(chosen.into_iter().zip(u));
            let claim = self.expand(&terms, &picks);
            self.record("repeated-unit", json!({ "length": ell, "group": loc.dims() }), Some(&claim));
            return Ok(claim);
        }
        let drop = b_units.first().copied();
        let sub: Vec<Term> =
            terms.into_iter().enumerate().filter(|&(i, _)| Some(i) != drop).map(|(_, t)| Term { b: t.b / p, ..t }).collect();
        self.repeated_unit(Local::new(p, loc.ea, loc.eb - 1), sub, ell)
    }

    fn fallback(&mut self, loc: Local, terms: &[Term], n: usize, reason: &str) -> Result<Claim, FinderError> {
        let params = loc.params()?;
        let elements = terms.iter().map(|t| params.checked_element(t.a, t.b)).collect::<Result<Vec<_>, _>>()?;
        let local_seq = Sequence::new(params, elements)?;
        let cert = find_certificate(&local_seq, n, Mode::Exact)?
            .ok_or_else(|| FinderError::Internal(format!("no zero-sum of length {n} among {} terms", terms.len())))?;
        let picks: Vec<(usize, u64)> = cert.indices.iter().map(|i| i - 1).zip(cert.weights.iter().copied()).collect();
        let claim = self.expand(terms, &picks);
        self.fallbacks += 1;
        self.record(FALLBACK, json!({ "reason": reason, "group": loc.dims(), "terms": terms.len() }), Some(&claim));
        Ok(claim)
    }
}

/// Lexicographically least `v` in `[1, p-1]^k` with `sum v_i a_i` and `sum v_i b_i` both
/// non-zero mod `p`, via backward reachability over the `p^2` partial-sum states.
fn nonzero_multipliers(residues: &[(u64, u64)], p: u64) -> Option<Vec<u64>> {
    let pu = p as usize;
    let idx = |sa: u64, sb: u64| (sa * p + sb) as usize;
    let k = residues.len();
    let mut feasible = vec![vec![false; pu * pu]; k + 1];
    for sa in 1..p {
        for sb in 1..p {
            feasible[k][idx(sa, sb)] = true;
        }
    }
    for pos in (0..k).rev() {
        let (ra, rb) = residues[pos];
        for sa in 0..p {
            for sb in 0..p {
                feasible[pos][idx(sa, sb)] = (1..p).any(|v| feasible[pos + 1][idx((sa + v * ra) % p, (sb + v * rb) % p)]);
            }
        }
    }
    if !feasible[0][0] {
        return None;
    }
    let (mut sa, mut sb) = (0, 0);
    let mut out = Vec::with_capacity(k);
    for (pos, &(ra, rb)) in residues.iter().enumerate() {
        let v = (1..p).find(|v| feasible[pos + 1][idx((sa + v * ra) % p, (sb + v * rb) % p)])?;
        sa = (sa + v * ra) % p;
        sb = (sb + v * rb) % p;
        out.push(v);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::tests::random_sequence;
    use crate::solver::verify_certificate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(p: u64, a: u32, b: u32) -> GroupParams {
        GroupParams::new(p, a, b).unwrap()
    }

    #[test]
    fn pair_cancellation_example() {
        let s = Sequence::from_pairs(g(3, 2, 1), &[(1, 0), (0, 1), (1, 1), (1, 0), (1, 0), (3, 0), (0, 0)]);
        let cert = pair_cancellation(&s, 6).unwrap();
        assert!(verify_certificate(&s, &cert, 6, Mode::Exact));
    }

    #[test]
    fn pair_cancellation_shape_errors() {
        let s = Sequence::from_pairs(g(3, 2, 1), &[(2, 0), (0, 1), (1, 1), (1, 0), (1, 0), (3, 0), (0, 0)]);
        assert!(matches!(pair_cancellation(&s, 6), Err(FinderError::Shape(_))));
        let s = Sequence::from_pairs(g(3, 2, 1), &[(1, 0), (1, 1), (1, 1), (1, 0), (1, 0), (3, 0), (0, 0)]);
        assert!(matches!(pair_cancellation(&s, 6), Err(FinderError::Shape(_))));
        let s = Sequence::from_pairs(g(3, 2, 1), &[(1, 0), (0, 1), (1, 1)]);
        assert!(matches!(pair_cancellation(&s, 6), Err(FinderError::TooShort { .. })));
    }

    #[test]
    fn pair_cancellation_always_succeeds_from_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for params in [g(3, 2, 1), g(5, 1, 1), g(3, 2, 2), g(7, 1, 1)] {
            let mut hits = 0;
            while hits < 300 {
                let m = rand::Rng::gen_range(&mut rng, 5..12);
                let mut s = random_sequence(&mut rng, params, m + 1);
                let mut terms = s.terms().to_vec();
                terms[0] = params.element(1, 0);
                terms[1] = params.element(
                    params.p() * rand::Rng::gen_range(&mut rng, 0..3),
                    1 + rand::Rng::gen_range(&mut rng, 0..params.p() - 1),
                );
                s = Sequence::new(params, terms).unwrap();
                match pair_cancellation(&s, m) {
                    Ok(cert) => {
                        assert!(verify_certificate(&s, &cert, m, Mode::Exact));
                        hits += 1;
                    }
                    Err(FinderError::Shape(_)) => {}
                    Err(e) => panic!("{e} on {s:?}"),
                }
            }
        }
    }

    #[test]
    fn repeated_unit_example() {
        let s = Sequence::from_pairs(g(3, 1, 1), &[(1, 0), (1, 0), (0, 1), (0, 1), (1, 1)]);
        let cert = repeated_unit(&s, 4).unwrap();
        assert!(verify_certificate(&s, &cert, 4, Mode::Exact));
    }

    #[test]
    fn repeated_unit_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in [g(3, 1, 1), g(3, 2, 1), g(3, 2, 2), g(5, 1, 1), g(5, 2, 2), g(3, 3, 2)] {
            for _ in 0..300 {
                let ell = rand::Rng::gen_range(&mut rng, 4..14);
                let len = ell + params.beta() as usize + rand::Rng::gen_range(&mut rng, 0..3);
                let mut terms = random_sequence(&mut rng, params, len).terms().to_vec();
                let x = params.element(
                    1 + params.p() * rand::Rng::gen_range(&mut rng, 0..2),
                    rand::Rng::gen_range(&mut rng, 0..params.modulus_b()),
                );
                let i = rand::Rng::gen_range(&mut rng, 0..len);
                let j = (i + 1 + rand::Rng::gen_range(&mut rng, 0..len - 1)) % len;
                terms[i] = x;
                terms[j] = x;
                let s = Sequence::new(params, terms).unwrap();
                let cert = repeated_unit(&s, ell).unwrap();
                assert!(verify_certificate(&s, &cert, ell, Mode::Exact), "{s:?}");
            }
        }
    }

    #[test]
    fn repeated_unit_requires_a_pair() {
        let s = Sequence::from_pairs(g(3, 1, 1), &[(1, 0), (2, 0), (0, 1), (0, 1), (1, 1)]);
        assert!(matches!(repeated_unit(&s, 4), Err(FinderError::Shape(_))));
        assert!(matches!(repeated_unit(&s, 3), Err(FinderError::Shape(_))));
    }

    #[test]
    fn absorption_merges_relation() {
        let params = g(3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut terms = random_sequence(&mut rng, params, 12).terms().to_vec();
            let y = params.element(1 + 3 * rand::Rng::gen_range(&mut rng, 0..3), 0);
            let z = terms[5];
            // x_0 = y + 2 z, via the relation terms at 3 and 5.
            terms[3] = y;
            terms[0] = params.add(y, params.scalar_mul(2, z));
            if terms[0].a() % 3 == 0 {
                continue;
            }
            let s = Sequence::new(params, terms).unwrap();
            let cert = absorption(&s, 9, 0, &[(3, 1), (5, 2)]).unwrap();
            assert!(verify_certificate(&s, &cert, 9, Mode::Exact));
        }
        let s = Sequence::from_pairs(params, &[(1, 0); 12]);
        let cert = absorption(&s, 9, 0, &[(3, 1)]).unwrap();
        assert!(verify_certificate(&s, &cert, 9, Mode::Exact));
        assert!(matches!(absorption(&s, 9, 0, &[(3, 2)]), Err(FinderError::Shape(_))));
        assert!(matches!(absorption(&s, 9, 0, &[(0, 1)]), Err(FinderError::Shape(_))));
        assert!(absorption(&s, 8, 0, &[(3, 1)]).is_err());
    }

    #[test]
    fn structured_find_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for params in [g(3, 1, 1), g(3, 2, 1), g(3, 2, 2), g(5, 1, 1), g(5, 2, 1), g(3, 3, 1), g(3, 3, 2), g(7, 1, 1)] {
            let need = params.modulus_a() as usize + (params.alpha() + params.beta()) as usize;
            for _ in 0..200 {
                let s = random_sequence(&mut rng, params, need);
                let trace = structured_find(&s).unwrap_or_else(|e| panic!("{e} on {s:?}"));
                replay(&s, &trace).unwrap();
            }
        }
    }

    #[test]
    fn structured_find_on_extremal_padding() {
        for params in [g(3, 1, 1), g(3, 2, 1), g(5, 1, 1)] {
            let mut s = crate::sequence::extremal_s_sequence(params);
            s.push(params.element(1, 1));
            let trace = structured_find(&s).unwrap();
            replay(&s, &trace).unwrap();
        }
    }

    #[test]
    fn structured_find_too_short() {
        let s = Sequence::from_pairs(g(3, 1, 1), &[(1, 0)]);
        assert_eq!(structured_find(&s).unwrap_err(), FinderError::TooShort { len: 1, need: 5 });
    }

    #[test]
    fn replay_rejects_tampering() {
        let s = Sequence::from_pairs(g(3, 1, 1), &[(1, 0), (1, 1), (0, 1), (2, 2), (1, 2)]);
        let trace = structured_find(&s).unwrap();
        replay(&s, &trace).unwrap();
        let mut bad = trace.clone();
        bad.certificate.weights[0] = if bad.certificate.weights[0] == 1 { 2 } else { 1 };
        assert!(matches!(replay(&s, &bad), Err(ReplayError::Final(_))));
        let mut bad = trace.clone();
        bad.fallbacks += 1;
        assert!(matches!(replay(&s, &bad), Err(ReplayError::FallbackCount { .. })));
        let mut bad = trace;
        bad.steps.push(TraceStep {
            lemma: "x".into(),
            data: json!({ "claim": { "indices": [1], "weights": [1], "mode": "exact", "n": 1 } }),
        });
        assert!(matches!(replay(&s, &bad), Err(ReplayError::Step { .. })));
    }

    #[test]
    fn trace_json_shape() {
        let s = Sequence::from_pairs(g(3, 1, 1), &[(1, 0), (1, 1), (0, 1), (2, 2), (1, 2)]);
        let trace = structured_find(&s).unwrap();
        let v = serde_json::to_value(&trace).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["certificate", "fallbacks", "steps"]);
        let back: StructuredTrace = serde_json::from_value(v).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn multipliers_found_when_possible() {
        assert_eq!(nonzero_multipliers(&[(1, 1)], 3), Some(vec![1]));
        assert_eq!(nonzero_multipliers(&[(1, 0)], 3), None);
        assert_eq!(nonzero_multipliers(&[(1, 0), (0, 1)], 3), Some(vec![1, 1]));
        assert_eq!(nonzero_multipliers(&[(1, 2), (2, 1)], 3), Some(vec![1, 2]));
    }

    fn lemmas_of(trace: &StructuredTrace) -> Vec<&str> {
        trace.steps.iter().map(|s| s.lemma.as_str()).collect()
    }

    fn run(params: GroupParams, pairs: &[(u64, u64)]) -> StructuredTrace {
        let s = Sequence::from_pairs(params, pairs);
        let trace = structured_find(&s).unwrap();
        replay(&s, &trace).unwrap();
        assert_eq!(trace.fallbacks, 0);
        trace
    }

    #[test]
    fn unequal_exponent_branches() {
        let params = g(3, 2, 1);
        let mut pairs = vec![(1, 0), (1, 1), (1, 1), (1, 1), (1, 1)];
        pairs.extend([(3, 0); 7]);
        let t = run(params, &pairs);
        assert_eq!(lemmas_of(&t).last(), Some(&"quotient"));
        assert!(!lemmas_of(&t).contains(&"absorption"));

        let mut pairs = vec![(1, 0), (1, 1), (1, 2)];
        pairs.extend([(3, 0); 9]);
        let t = run(params, &pairs);
        let step = t.steps.iter().find(|s| s.lemma == "absorption").unwrap();
        assert_eq!(step.data["k"], 2);

        let mut pairs = vec![(1, 0), (1, 1), (2, 2), (4, 0)];
        pairs.extend([(6, 0); 8]);
        let t = run(params, &pairs);
        let step = t.steps.iter().find(|s| s.lemma == "absorption").unwrap();
        assert_eq!(step.data["k"], 3);

        let mut pairs = vec![(1, 0)];
        pairs.extend([(3, 1); 11]);
        let t = run(params, &pairs);
        assert!(lemmas_of(&t).contains(&"block-sum"));
    }

    #[test]
    fn equal_exponent_quotients() {
        let params = g(3, 2, 2);
        let mut pairs = vec![(1, 1)];
        pairs.extend([(3, 1); 12]);
        let t = run(params, &pairs);
        assert!(lemmas_of(&t).contains(&"quotient"));
        let mut pairs = vec![(1, 1)];
        pairs.extend([(0, 3); 12]);
        let t = run(params, &pairs);
        assert!(lemmas_of(&t).contains(&"quotient"));
    }
}
