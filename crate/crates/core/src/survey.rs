//! Computes `s_A` and `eta_A` with explicit evidence, classifies extremal zero-sum-free
//! sequences and aggregates everything into reports.
//!
//! Upper bounds are checked over canonical multisets of unit-orbit representatives. A space
//! that fits the budget (one unit per dynamic-program run) is enumerated in full, otherwise
//! a seeded uniform sample of ranks is checked and the report says so.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finder::{replay, structured_find};
use crate::group::GroupParams;
use crate::sequence::{extremal_eta_sequence, extremal_s_sequence, CanonicalSpace, OrbitTable, Sequence};
use crate::solver::{has_weighted_zero_sum, verify_certificate, Certificate, Mode, OrbitKernel, SolverError};

pub const ARTIFACT_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: u64 = 10_000_000;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_STRUCTURED_SAMPLES: usize = 1_000;
pub const DEFAULT_SEED: u64 = 1;

const CHUNK: u128 = 2_048;
const STREAM_S: u64 = 1;
const STREAM_ETA: u64 = 2;
const STREAM_STRUCTURED: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("canonical space of length {0} is too large to index")]
    SpaceOverflow(usize),
    #[error("{needed} dynamic-program runs needed, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("the {0} bound was not verified exhaustively")]
    NotExhaustive(&'static str),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct SurveyConfig {
    /// Dynamic-program runs allowed per upper bound; 0 skips verification entirely.
    pub budget: u64,
    pub seed: u64,
    /// Sample size when a space exceeds the budget (capped by the budget).
    pub samples: u64,
    pub structured_samples: usize,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Include wall-clock timings in reports. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        SurveyConfig {
            budget: DEFAULT_BUDGET,
            seed: DEFAULT_SEED,
            samples: DEFAULT_SAMPLES,
            structured_samples: DEFAULT_STRUCTURED_SAMPLES,
            threads: None,
            timing: false,
        }
    }
}

impl SurveyConfig {
    fn pool(&self) -> Result<rayon::ThreadPool, SurveyError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| SurveyError::Pool(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Evidence {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
    FormulaOnly,
}

impl Evidence {
    pub fn label(&self) -> String {
        match self {
            Evidence::Exhaustive => "exhaustive".into(),
            Evidence::Sampled { count, seed } => format!("sampled(count={count};seed={seed})"),
            Evidence::FormulaOnly => "formula-only".into(),
        }
    }
}

/// A constant together with how its two bounds were established.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantValue {
    pub value: u64,
    pub status: Evidence,
    /// The extremal construction of length `value - 1` has no qualifying zero-sum.
    pub lower_bound_ok: bool,
    /// Canonical sequences of length `value`.
    pub space: u128,
    /// Dynamic-program runs spent on the upper bound.
    pub checked: u64,
    /// A canonical sequence of length `value` without a qualifying zero-sum, if one was met.
    pub counterexample: Option<Vec<[u64; 2]>>,
}

impl InvariantValue {
    pub fn ok(&self) -> bool {
        self.lower_bound_ok && self.counterexample.is_none()
    }

    fn verified(&self) -> bool {
        self.ok() && self.status != Evidence::FormulaOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalKind {
    /// Length `s_A - 1`, no zero-sum of length exactly `p^alpha`.
    S,
    /// Length `eta_A - 1`, no zero-sum of length at most `p^alpha`.
    Eta,
}

impl ExtremalKind {
    fn mode(self) -> Mode {
        match self {
            ExtremalKind::S => Mode::Exact,
            ExtremalKind::Eta => Mode::AtMost,
        }
    }

    fn stream(self) -> u64 {
        match self {
            ExtremalKind::S => STREAM_S,
            ExtremalKind::Eta => STREAM_ETA,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ExtremalKind::S => "s_A",
            ExtremalKind::Eta => "eta_A",
        }
    }

    pub fn value(self, params: &GroupParams) -> u64 {
        let rank = (params.alpha() + params.beta()) as u64;
        match self {
            ExtremalKind::S => params.exponent() + rank,
            ExtremalKind::Eta => rank + 1,
        }
    }

    fn conforms(self, seq: &Sequence) -> bool {
        let profile = seq.order_profile();
        let params = seq.params();
        match self {
            ExtremalKind::S => profile.matches_s_extremal(&params),
            ExtremalKind::Eta => profile.matches_eta_extremal(&params),
        }
    }
}

impl std::str::FromStr for ExtremalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "s" => Ok(ExtremalKind::S),
            "eta" => Ok(ExtremalKind::Eta),
            other => Err(format!("unknown kind `{other}` (expected s or eta)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalSummary {
    pub kind: ExtremalKind,
    pub length: usize,
    pub searched: u128,
    /// Canonical sequences of `length` with no qualifying zero-sum.
    pub count: u64,
    pub all_conform: bool,
    pub counterexample: Option<Vec<[u64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSummary {
    pub samples: usize,
    pub successes: usize,
    pub fallback_runs: usize,
}

impl StructuredSummary {
    pub fn fallback_rate(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.fallback_runs as f64 / self.samples as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub params: GroupParams,
    #[serde(rename = "s_A")]
    pub s_a: InvariantValue,
    #[serde(rename = "eta_A")]
    pub eta_a: InvariantValue,
    pub corollary_check: bool,
    pub extremal_s: Option<ExtremalSummary>,
    pub extremal_eta: Option<ExtremalSummary>,
    pub structured: Option<StructuredSummary>,
    pub fallback_rate: Option<f64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

/// `s_A`, `eta_A` and the relation between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub params: GroupParams,
    #[serde(rename = "s_A")]
    pub s_a: InvariantValue,
    #[serde(rename = "eta_A")]
    pub eta_a: InvariantValue,
    pub corollary_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfigEcho {
    pub version: u32,
    pub budget: u64,
    pub seed: u64,
    pub samples: u64,
    pub structured_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfigEcho,
    pub reports: Vec<SurveyReport>,
    pub ok: bool,
}

/// A suite report plus non-fatal problems met on the way (unreadable cache files and such).
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    pub warnings: Vec<String>,
}

/// The parameter sets checked by default.
pub fn default_suite() -> Vec<GroupParams> {
    [(3, 1, 1), (3, 2, 1), (3, 2, 2), (5, 1, 1)]
        .into_iter()
        .map(|(p, a, b)| GroupParams::new(p, a, b).expect("valid default parameters"))
        .collect()
}

pub fn compute_s_a(params: GroupParams, config: &SurveyConfig) -> Result<InvariantValue, SurveyError> {
    let pool = config.pool()?;
    compute_invariant(params, ExtremalKind::S, config, &pool)
}

pub fn compute_eta_a(params: GroupParams, config: &SurveyConfig) -> Result<InvariantValue, SurveyError> {
    let pool = config.pool()?;
    compute_invariant(params, ExtremalKind::Eta, config, &pool)
}

pub fn compute_constants(params: GroupParams, config: &SurveyConfig) -> Result<ConstantsReport, SurveyError> {
    let pool = config.pool()?;
    let s_a = compute_invariant(params, ExtremalKind::S, config, &pool)?;
    let eta_a = compute_invariant(params, ExtremalKind::Eta, config, &pool)?;
    let corollary_check = corollary_holds(&params, &s_a, &eta_a);
    Ok(ConstantsReport { params, s_a, eta_a, corollary_check })
}

fn corollary_holds(params: &GroupParams, s_a: &InvariantValue, eta_a: &InvariantValue) -> bool {
    s_a.verified() && eta_a.verified() && s_a.value == eta_a.value + params.exponent() - 1
}

fn pairs(seq: &Sequence) -> Vec<[u64; 2]> {
    seq.terms().iter().map(|x| [x.a(), x.b()]).collect()
}

fn space_for(params: GroupParams, length: usize) -> Result<CanonicalSpace, SurveyError> {
    CanonicalSpace::new(OrbitTable::new(params), length).ok_or(SurveyError::SpaceOverflow(length))
}

fn extremal_construction(params: GroupParams, kind: ExtremalKind) -> Sequence {
    match kind {
        ExtremalKind::S => extremal_s_sequence(params),
        ExtremalKind::Eta => extremal_eta_sequence(params),
    }
}

fn compute_invariant(
    params: GroupParams,
    kind: ExtremalKind,
    config: &SurveyConfig,
    pool: &rayon::ThreadPool,
) -> Result<InvariantValue, SurveyError> {
    let n = params.exponent() as usize;
    let mode = kind.mode();
    let value = kind.value(&params);
    let lower_bound_ok = !has_weighted_zero_sum(&extremal_construction(params, kind), n, mode)?;
    let space = space_for(params, value as usize)?;
    let total = space.total();
    let mut result =
        InvariantValue { value, status: Evidence::FormulaOnly, lower_bound_ok, space: total, checked: 0, counterexample: None };
    if config.budget == 0 {
        return Ok(result);
    }
    let kernel = OrbitKernel::new(space.table())?;
    let (checked, failing) = if total <= config.budget as u128 {
        result.status = Evidence::Exhaustive;
        scan_exhaustive(&space, &kernel, n, mode, pool)
    } else {
        let count = config.samples.min(config.budget);
        result.status = Evidence::Sampled { count, seed: config.seed };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(kind.stream());
        let ranks: Vec<u128> = (0..count).map(|_| rng.gen_range(0..total)).collect();
        scan_ranks(&space, &kernel, &ranks, n, mode, pool)
    };
    result.checked = checked;
    result.counterexample = failing.map(|rank| pairs(&space.sequence(&space.unrank(rank))));
    Ok(result)
}

/// Checks every rank; returns the number of runs and the least failing rank.
fn scan_exhaustive(
    space: &CanonicalSpace,
    kernel: &OrbitKernel,
    n: usize,
    mode: Mode,
    pool: &rayon::ThreadPool,
) -> (u64, Option<u128>) {
    let total = space.total();
    let chunks = total.div_ceil(CHUNK) as u64;
    let per_chunk: Vec<(u64, Option<u128>)> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c as u128 * CHUNK;
                let mut runs = 0;
                for (k, ids) in space.iter_range(start, start + CHUNK).enumerate() {
                    runs += 1;
                    if !kernel.decide(&ids, n, mode) {
                        return (runs, Some(start + k as u128));
                    }
                }
                (runs, None)
            })
            .collect()
    });
    aggregate(per_chunk)
}

fn scan_ranks(
    space: &CanonicalSpace,
    kernel: &OrbitKernel,
    ranks: &[u128],
    n: usize,
    mode: Mode,
    pool: &rayon::ThreadPool,
) -> (u64, Option<u128>) {
    let per_chunk: Vec<(u64, Option<u128>)> = pool.install(|| {
        ranks
            .par_chunks(CHUNK as usize)
            .map(|chunk| {
                let mut runs = 0;
                for &rank in chunk {
                    runs += 1;
                    if !kernel.decide(&space.unrank(rank), n, mode) {
                        return (runs, Some(rank));
                    }
                }
                (runs, None)
            })
            .collect()
    });
    aggregate(per_chunk)
}

fn aggregate(parts: Vec<(u64, Option<u128>)>) -> (u64, Option<u128>) {
    let runs = parts.iter().map(|p| p.0).sum();
    (runs, parts.iter().filter_map(|p| p.1).min())
}

/// Canonical sequences of length `value - 1` with no qualifying zero-sum, in rank order.
/// Requires the matching upper bound to have been verified exhaustively.
pub fn extremal_survivors(
    params: GroupParams,
    kind: ExtremalKind,
    bound: &InvariantValue,
    config: &SurveyConfig,
) -> Result<Vec<Sequence>, SurveyError> {
    let pool = config.pool()?;
    let (space, ranks) = survivor_ranks(params, kind, bound, config, &pool)?;
    Ok(ranks.into_iter().map(|r| space.sequence(&space.unrank(r))).collect())
}

pub fn enumerate_extremal(
    params: GroupParams,
    kind: ExtremalKind,
    bound: &InvariantValue,
    config: &SurveyConfig,
) -> Result<ExtremalSummary, SurveyError> {
    let pool = config.pool()?;
    classify(params, kind, bound, config, &pool)
}

fn survivor_ranks(
    params: GroupParams,
    kind: ExtremalKind,
    bound: &InvariantValue,
    config: &SurveyConfig,
    pool: &rayon::ThreadPool,
) -> Result<(CanonicalSpace, Vec<u128>), SurveyError> {
    if bound.status != Evidence::Exhaustive || !bound.ok() || bound.value != kind.value(&params) {
        return Err(SurveyError::NotExhaustive(kind.name()));
    }
    let space = space_for(params, bound.value as usize - 1)?;
    let total = space.total();
    if total > config.budget as u128 {
        return Err(SurveyError::BudgetExceeded { needed: total, budget: config.budget });
    }
    let kernel = OrbitKernel::new(space.table())?;
    let n = params.exponent() as usize;
    let mode = kind.mode();
    let chunks = total.div_ceil(CHUNK) as u64;
    let ranks: Vec<u128> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let start = c as u128 * CHUNK;
                space
                    .iter_range(start, start + CHUNK)
                    .enumerate()
                    .filter(|(_, ids)| !kernel.decide(ids, n, mode))
                    .map(move |(k, _)| start + k as u128)
                    .collect::<Vec<_>>()
            })
            .collect()
    });
    Ok((space, ranks))
}

fn classify(
    params: GroupParams,
    kind: ExtremalKind,
    bound: &InvariantValue,
    config: &SurveyConfig,
    pool: &rayon::ThreadPool,
) -> Result<ExtremalSummary, SurveyError> {
    let (space, ranks) = survivor_ranks(params, kind, bound, config, pool)?;
    let counterexample = ranks.iter().map(|&r| space.sequence(&space.unrank(r))).find(|s| !kind.conforms(s));
    Ok(ExtremalSummary {
        kind,
        length: space.length(),
        searched: space.total(),
        count: ranks.len() as u64,
        all_conform: counterexample.is_none(),
        counterexample: counterexample.as_ref().map(pairs),
    })
}

fn structured_samples(params: GroupParams, count: usize, seed: u64) -> Vec<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_STRUCTURED);
    let len = params.exponent() as usize + (params.alpha() + params.beta()) as usize;
    (0..count)
        .map(|_| {
            let terms: Vec<(u64, u64)> =
                (0..len).map(|_| (rng.gen_range(0..params.modulus_a()), rng.gen_range(0..params.modulus_b()))).collect();
            Sequence::from_pairs(params, &terms)
        })
        .collect()
}

/// Runs the structured finder on seeded random sequences of length `p^alpha + alpha + beta`.
/// Returns the summary and the certificates (one per sample, `None` on failure).
pub fn sample_structured(
    params: GroupParams,
    count: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<(StructuredSummary, Vec<Option<Certificate>>), SurveyError> {
    let pool = SurveyConfig { threads, ..SurveyConfig::default() }.pool()?;
    Ok(run_structured(params, count, seed, &pool))
}

fn run_structured(
    params: GroupParams,
    count: usize,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> (StructuredSummary, Vec<Option<Certificate>>) {
    let samples = structured_samples(params, count, seed);
    let n = params.exponent() as usize;
    let results: Vec<(Option<Certificate>, bool)> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| match structured_find(s) {
                Ok(trace) if replay(s, &trace).is_ok() && verify_certificate(s, &trace.certificate, n, Mode::Exact) => {
                    let fell_back = trace.used_fallback();
                    (Some(trace.certificate), fell_back)
                }
                _ => (None, false),
            })
            .collect()
    });
    let summary = StructuredSummary {
        samples: count,
        successes: results.iter().filter(|r| r.0.is_some()).count(),
        fallback_runs: results.iter().filter(|r| r.1).count(),
    };
    (summary, results.into_iter().map(|r| r.0).collect())
}

/// Full check of one parameter set. Also returns the structured-finder certificates, which
/// the cache stores for re-verification.
fn verify_params(
    params: GroupParams,
    config: &SurveyConfig,
    pool: &rayon::ThreadPool,
) -> Result<(SurveyReport, Vec<Option<Certificate>>), SurveyError> {
    let mut timing = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut BTreeMap<String, f64>| {
        timing.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let s_a = compute_invariant(params, ExtremalKind::S, config, pool)?;
    lap("s_A", &mut timing);
    let eta_a = compute_invariant(params, ExtremalKind::Eta, config, pool)?;
    lap("eta_A", &mut timing);
    let extremal_s = classify(params, ExtremalKind::S, &s_a, config, pool).ok();
    lap("extremal_s", &mut timing);
    let extremal_eta = classify(params, ExtremalKind::Eta, &eta_a, config, pool).ok();
    lap("extremal_eta", &mut timing);
    let (structured, certificates) = if config.structured_samples > 0 {
        let (summary, certs) = run_structured(params, config.structured_samples, config.seed, pool);
        (Some(summary), certs)
    } else {
        (None, Vec::new())
    };
    lap("structured", &mut timing);

    let corollary_check = corollary_holds(&params, &s_a, &eta_a);
    let ok = s_a.ok()
        && eta_a.ok()
        && corollary_check
        && [&extremal_s, &extremal_eta].iter().all(|e| e.as_ref().is_none_or(|e| e.all_conform))
        && structured.as_ref().is_none_or(|s| s.successes == s.samples);
    let report = SurveyReport {
        params,
        fallback_rate: structured.as_ref().and_then(StructuredSummary::fallback_rate),
        s_a,
        eta_a,
        corollary_check,
        extremal_s,
        extremal_eta,
        structured,
        ok,
        timing: config.timing.then_some(timing),
    };
    Ok((report, certificates))
}

/// Checks every parameter set, reusing verified cache entries from `cache_dir` if given.
pub fn verify_paper(
    params_list: &[GroupParams],
    config: &SurveyConfig,
    cache_dir: Option<&Path>,
) -> Result<SuiteOutcome, SurveyError> {
    let pool = config.pool()?;
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    for &params in params_list {
        let cached = cache_dir.and_then(|dir| load_cache(dir, params, config, &mut warnings));
        let report = match cached {
            Some(report) => report,
            None => {
                let (report, certificates) = verify_params(params, config, &pool)?;
                if let Some(dir) = cache_dir {
                    store_cache(dir, &report, &certificates, config, &mut warnings);
                }
                report
            }
        };
        reports.push(report);
    }
    let ok = reports.iter().all(|r| r.ok);
    let config_echo = SuiteConfigEcho {
        version: ARTIFACT_VERSION,
        budget: config.budget,
        seed: config.seed,
        samples: config.samples,
        structured_samples: config.structured_samples,
    };
    Ok(SuiteOutcome { report: SuiteReport { config: config_echo, reports, ok }, warnings })
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    version: u32,
    budget: u64,
    seed: u64,
    samples: u64,
    structured_samples: usize,
    report: SurveyReport,
    certificates: Vec<Option<Certificate>>,
}

pub fn cache_path(dir: &Path, params: GroupParams) -> PathBuf {
    dir.join(format!("p{}_a{}_b{}.json", params.p(), params.alpha(), params.beta()))
}

fn load_cache(dir: &Path, params: GroupParams, config: &SurveyConfig, warnings: &mut Vec<String>) -> Option<SurveyReport> {
    let path = cache_path(dir, params);
    let text = std::fs::read_to_string(&path).ok()?;
    let entry: CacheEntry = match serde_json::from_str(&text) {
        Ok(entry) => entry,
        Err(e) => {
            warnings.push(format!("ignoring corrupt cache file {}: {e}", path.display()));
            return None;
        }
    };
    let matches = entry.version == ARTIFACT_VERSION
        && entry.budget == config.budget
        && entry.seed == config.seed
        && entry.samples == config.samples
        && entry.structured_samples == config.structured_samples;
    if !matches {
        return None;
    }
    match reverify(params, &entry) {
        Ok(()) => {
            let mut report = entry.report;
            report.timing = config.timing.then(BTreeMap::new);
            Some(report)
        }
        Err(reason) => {
            warnings.push(format!("ignoring cache file {}: {reason}", path.display()));
            None
        }
    }
}

/// Checks what a cache entry asserts without redoing the enumeration: its parameters, the
/// lower-bound constructions, any counterexample, and every stored certificate.
fn reverify(params: GroupParams, entry: &CacheEntry) -> Result<(), String> {
    let report = &entry.report;
    if report.params != params {
        return Err("parameters do not match the file name".into());
    }
    let n = params.exponent() as usize;
    for (kind, value) in [(ExtremalKind::S, &report.s_a), (ExtremalKind::Eta, &report.eta_a)] {
        let free = !has_weighted_zero_sum(&extremal_construction(params, kind), n, kind.mode()).map_err(|e| e.to_string())?;
        if free != value.lower_bound_ok {
            return Err(format!("{} lower bound does not re-verify", kind.name()));
        }
        if let Some(c) = &value.counterexample {
            let pairs: Vec<(u64, u64)> = c.iter().map(|t| (t[0], t[1])).collect();
            let seq = Sequence::from_pairs(params, &pairs);
            if has_weighted_zero_sum(&seq, n, kind.mode()).map_err(|e| e.to_string())? {
                return Err(format!("{} counterexample does not re-verify", kind.name()));
            }
        }
    }
    let samples = structured_samples(params, entry.structured_samples, entry.seed);
    if entry.certificates.len() != samples.len() {
        return Err("certificate count does not match the sample count".into());
    }
    let mut successes = 0;
    for (seq, cert) in samples.iter().zip(&entry.certificates) {
        if let Some(cert) = cert {
            if !verify_certificate(seq, cert, n, Mode::Exact) {
                return Err("stored certificate fails verification".into());
            }
            successes += 1;
        }
    }
    if report.structured.as_ref().map_or(0, |s| s.successes) != successes {
        return Err("stored success count does not match the certificates".into());
    }
    Ok(())
}

fn store_cache(
    dir: &Path,
    report: &SurveyReport,
    certificates: &[Option<Certificate>],
    config: &SurveyConfig,
    warnings: &mut Vec<String>,
) {
    let entry = CacheEntry {
        version: ARTIFACT_VERSION,
        budget: config.budget,
        seed: config.seed,
        samples: config.samples,
        structured_samples: config.structured_samples,
        report: SurveyReport { timing: None, ..report.clone() },
        certificates: certificates.to_vec(),
    };
    let path = cache_path(dir, report.params);
    let result = std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, serde_json::to_string(&entry).expect("cache entry serializes")));
    if let Err(e) = result {
        warnings.push(format!("cannot write cache file {}: {e}", path.display()));
    }
}

pub const CSV_HEADER: &str =
    "p,alpha,beta,s_A,s_A_status,eta_A,eta_A_status,corollary_ok,extremal_s_ok,extremal_eta_ok,fallback_rate";

/// One summary row per report; empty cells where a check was not run.
pub fn to_csv(reports: &[SurveyReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let flag = |e: &Option<ExtremalSummary>| e.as_ref().map(|e| e.all_conform.to_string()).unwrap_or_default();
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.params.p(),
            r.params.alpha(),
            r.params.beta(),
            r.s_a.value,
            r.s_a.status.label(),
            r.eta_a.value,
            r.eta_a.status.label(),
            r.corollary_check,
            flag(&r.extremal_s),
            flag(&r.extremal_eta),
            r.fallback_rate.map(|f| format!("{f:.4}")).unwrap_or_default(),
        );
    }
    out
}

pub fn to_text(reports: &[SurveyReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let g = &r.params;
        let _ = writeln!(out, "G = Z_{}^{} + Z_{}^{}: {}", g.p(), g.alpha(), g.p(), g.beta(), if r.ok { "ok" } else { "FAILED" });
        let _ = writeln!(out, "  s_A={} ({})", r.s_a.value, r.s_a.status.label());
        let _ = writeln!(out, "  eta_A={} ({})", r.eta_a.value, r.eta_a.status.label());
        let _ = writeln!(out, "  corollary_ok={}", r.corollary_check);
        for (name, e) in [("extremal_s", &r.extremal_s), ("extremal_eta", &r.extremal_eta)] {
            match e {
                Some(e) => {
                    let _ =
                        writeln!(out, "  {name}: {} survivors of length {}, all_conform={}", e.count, e.length, e.all_conform);
                }
                None => {
                    let _ = writeln!(out, "  {name}: not run");
                }
            }
        }
        if let Some(s) = &r.structured {
            let _ = writeln!(
                out,
                "  structured: {}/{} verified, fallback_rate={:.4}",
                s.successes,
                s.samples,
                s.fallback_rate().unwrap_or(0.0)
            );
        }
    }
    out
}
