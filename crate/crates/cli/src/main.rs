use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wzs_core::solver::DEFAULT_BRUTE_FORCE_BUDGET;
use wzs_core::survey::{
    compute_constants, compute_eta_a, compute_s_a, default_suite, enumerate_extremal, to_csv, to_text, ConstantsReport,
    CSV_HEADER, DEFAULT_BUDGET, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_STRUCTURED_SAMPLES,
};
use wzs_core::{
    brute_force_zero_sum, check_certificate, find_certificate, has_weighted_zero_sum, replay, structured_find, verify_paper,
    Certificate, ExtremalKind, GroupParams, Mode, Sequence, SolverError, StructuredTrace, SurveyConfig, SurveyError,
};

#[derive(Parser)]
#[command(name = "wzs", version, about = "Unit-weighted zero-sums over Z_{p^alpha} + Z_{p^beta}")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Whether the sequence has a unit-weighted zero-sum of the requested length.
    Decide {
        #[command(flatten)]
        input: SeqArgs,
        #[command(flatten)]
        target: TargetArgs,
        /// Use the direct enumeration instead of the dynamic program.
        #[arg(long)]
        brute_force: bool,
        /// Weight-vector evaluations allowed with --brute-force.
        #[arg(long)]
        budget: Option<u128>,
    },
    /// Print a certificate for the requested zero-sum, or "none".
    Find {
        #[command(flatten)]
        input: SeqArgs,
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the constructive finder on the first p^alpha + alpha + beta terms and print its trace.
    StructuredFind {
        #[command(flatten)]
        input: SeqArgs,
    },
    /// Check a certificate or a structured trace against a sequence.
    Verify {
        #[command(flatten)]
        input: SeqArgs,
        /// Certificate JSON file.
        #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
        certificate: Option<PathBuf>,
        /// Structured trace JSON file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// s_A and eta_A with the evidence behind them.
    Constants {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Enumerate and classify the extremal zero-sum-free sequences.
    Extremal {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value = "s")]
        kind: ExtremalKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run every check on a list of groups (default: the desk suite).
    VerifyPaper {
        /// Groups as "p,alpha,beta;p,alpha,beta".
        #[arg(long)]
        params: Option<String>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = DEFAULT_STRUCTURED_SAMPLES)]
        structured_samples: usize,
        #[arg(long, env = "WZS_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
        /// Include wall-clock timings (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long)]
    p: Option<u64>,
    #[arg(long)]
    alpha: Option<u32>,
    #[arg(long)]
    beta: Option<u32>,
}

#[derive(Args)]
struct SeqArgs {
    #[command(flatten)]
    group: GroupArgs,
    /// Sequence file, "-" for standard input, or inline "a,b;a,b;...".
    #[arg(long)]
    seq: String,
}

#[derive(Args)]
struct TargetArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "exact")]
    mode: Mode,
}

#[derive(Args)]
struct RunArgs {
    /// Dynamic-program runs per bound; 0 reports formula values only.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Sample size for spaces larger than the budget.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl RunArgs {
    fn config(&self) -> SurveyConfig {
        SurveyConfig {
            budget: self.budget,
            seed: self.seed,
            samples: self.samples,
            threads: self.threads,
            ..SurveyConfig::default()
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "usage", code: 2, message: message.into() }
}

fn budget(message: impl Into<String>) -> Failure {
    Failure { kind: "budget", code: 3, message: message.into() }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BudgetExceeded { .. } | SolverError::GroupTooLarge(_) => budget(e.to_string()),
            SolverError::LengthExceedsSequence { .. } | SolverError::ZeroAtMost => usage(e.to_string()),
        }
    }
}

impl From<SurveyError> for Failure {
    fn from(e: SurveyError) -> Self {
        match e {
            SurveyError::Solver(s) => s.into(),
            SurveyError::BudgetExceeded { .. } | SurveyError::NotExhaustive(_) | SurveyError::SpaceOverflow(_) => {
                budget(e.to_string())
            }
            SurveyError::Pool(_) => Failure { kind: "internal", code: 1, message: e.to_string() },
        }
    }
}

/// Output plus exit code of a command that ran to completion.
struct Outcome {
    stdout: String,
    code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }

    fn checked(stdout: String, passed: bool) -> Self {
        Outcome { stdout, code: if passed { 0 } else { 1 } }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = match e.kind() {
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "a subcommand is required (see --help)",
                _ => rendered.lines().next().unwrap_or_default().trim_start_matches("error: "),
            };
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.code)
        }
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Decide { input, target, brute_force, budget } => {
            let seq = load_sequence(&input)?;
            let result = if brute_force {
                brute_force_zero_sum(&seq, target.n, target.mode, budget.unwrap_or(DEFAULT_BRUTE_FORCE_BUDGET))?
            } else {
                has_weighted_zero_sum(&seq, target.n, target.mode)?
            };
            Ok(Outcome::ok(format!("{result}\n")))
        }
        Command::Find { input, target, format } => {
            let seq = load_sequence(&input)?;
            let cert = find_certificate(&seq, target.n, target.mode)?;
            let out = match (format, cert) {
                (Format::Csv, _) => return Err(usage("find supports --format json or text")),
                (_, Some(cert)) => json_line(&cert),
                (Format::Json, None) => "null\n".to_string(),
                (Format::Text, None) => "none\n".to_string(),
            };
            Ok(Outcome::ok(out))
        }
        Command::StructuredFind { input } => {
            let seq = load_sequence(&input)?;
            match structured_find(&seq) {
                Ok(trace) => Ok(Outcome::ok(json_pretty(&trace))),
                Err(wzs_core::FinderError::TooShort { len, need }) => {
                    Err(usage(format!("sequence has {len} terms, the finder needs {need}")))
                }
                Err(e) => Err(Failure { kind: "internal", code: 1, message: e.to_string() }),
            }
        }
        Command::Verify { input, certificate, trace } => {
            let seq = load_sequence(&input)?;
            if let Some(path) = certificate {
                let cert: Certificate = read_json(&path)?;
                let verdict = check_certificate(&seq, &cert, cert.n, cert.mode);
                Ok(verdict_outcome(verdict.map_err(|r| format!("{}: {r}", r.code()))))
            } else {
                let path = trace.expect("clap enforces one of --certificate/--trace");
                let trace: StructuredTrace = read_json(&path)?;
                Ok(verdict_outcome(replay(&seq, &trace).map_err(|e| e.to_string())))
            }
        }
        Command::Constants { group, run } => {
            let params = require_params(&group)?;
            let report = compute_constants(params, &run.config())?;
            let out = match run.format {
                Format::Json => json_pretty(&report),
                Format::Csv => constants_csv(&report),
                Format::Text => format!(
                    "s_A={} ({})\neta_A={} ({})\ncorollary_ok={}\n",
                    report.s_a.value,
                    report.s_a.status.label(),
                    report.eta_a.value,
                    report.eta_a.status.label(),
                    report.corollary_check
                ),
            };
            let passed = report.s_a.ok() && report.eta_a.ok();
            Ok(Outcome::checked(out, passed))
        }
        Command::Extremal { group, kind, run } => {
            let params = require_params(&group)?;
            let config = run.config();
            let bound = match kind {
                ExtremalKind::S => compute_s_a(params, &config)?,
                ExtremalKind::Eta => compute_eta_a(params, &config)?,
            };
            let summary = enumerate_extremal(params, kind, &bound, &config)?;
            let out = match run.format {
                Format::Json => json_pretty(&summary),
                Format::Csv => format!(
                    "kind,length,searched,survivors,all_conform\n{},{},{},{},{}\n",
                    kind_name(kind),
                    summary.length,
                    summary.searched,
                    summary.count,
                    summary.all_conform
                ),
                Format::Text => {
                    let mut out = format!(
                        "kind={} length={} searched={} survivors={} all_conform={}\n",
                        kind_name(kind),
                        summary.length,
                        summary.searched,
                        summary.count,
                        summary.all_conform
                    );
                    if let Some(c) = &summary.counterexample {
                        let terms: String = c.iter().map(|t| format!("({},{})", t[0], t[1])).collect();
                        out.push_str(&format!("counterexample={terms}\n"));
                    }
                    out
                }
            };
            Ok(Outcome::checked(out, summary.all_conform))
        }
        Command::VerifyPaper { params, run, structured_samples, cache_dir, timing } => {
            let list = match params {
                Some(text) => parse_params_list(&text)?,
                None => default_suite(),
            };
            let config = SurveyConfig { structured_samples, timing, ..run.config() };
            let outcome = verify_paper(&list, &config, cache_dir.as_deref())?;
            for w in &outcome.warnings {
                eprintln!("warning[cache]: {w}");
            }
            let out = match run.format {
                Format::Json => json_pretty(&outcome.report),
                Format::Csv => to_csv(&outcome.report.reports),
                Format::Text => {
                    let mut out = to_text(&outcome.report.reports);
                    out.push_str(if outcome.report.ok { "all checks passed\n" } else { "some checks FAILED\n" });
                    out
                }
            };
            Ok(Outcome::checked(out, outcome.report.ok))
        }
    }
}

fn kind_name(kind: ExtremalKind) -> &'static str {
    match kind {
        ExtremalKind::S => "s",
        ExtremalKind::Eta => "eta",
    }
}

fn verdict_outcome(verdict: Result<(), String>) -> Outcome {
    match verdict {
        Ok(()) => Outcome::ok("valid\n".into()),
        Err(reason) => Outcome::checked(format!("invalid: {reason}\n"), false),
    }
}

fn constants_csv(r: &ConstantsReport) -> String {
    format!(
        "{CSV_HEADER}\n{},{},{},{},{},{},{},{},,,\n",
        r.params.p(),
        r.params.alpha(),
        r.params.beta(),
        r.s_a.value,
        r.s_a.status.label(),
        r.eta_a.value,
        r.eta_a.status.label(),
        r.corollary_check
    )
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    format!("{}\n", serde_json::to_string(value).expect("serializable"))
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    format!("{}\n", serde_json::to_string_pretty(value).expect("serializable"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn make_params(p: u64, alpha: u32, beta: u32) -> Result<GroupParams, Failure> {
    let params = if beta == 0 { GroupParams::rank_one(p, alpha) } else { GroupParams::new(p, alpha, beta) };
    params.map_err(|e| usage(e.to_string()))
}

fn optional_params(g: &GroupArgs) -> Result<Option<GroupParams>, Failure> {
    match (g.p, g.alpha, g.beta) {
        (None, None, None) => Ok(None),
        (Some(p), Some(alpha), Some(beta)) => make_params(p, alpha, beta).map(Some),
        _ => Err(usage("--p, --alpha and --beta must be given together")),
    }
}

fn require_params(g: &GroupArgs) -> Result<GroupParams, Failure> {
    optional_params(g)?.ok_or_else(|| usage("--p, --alpha and --beta are required"))
}

fn parse_params_list(text: &str) -> Result<Vec<GroupParams>, Failure> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let fields: Vec<&str> = item.split(',').map(str::trim).collect();
            let bad = || usage(format!("expected p,alpha,beta, got `{item}`"));
            let [p, a, b] = fields.as_slice() else { return Err(bad()) };
            make_params(p.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
        })
        .collect()
}

/// A sequence from a file, standard input or inline text. Text input may omit the header
/// when the group flags are given; if both are present they must agree.
fn load_sequence(input: &SeqArgs) -> Result<Sequence, Failure> {
    let flags = optional_params(&input.group)?;
    let text = if input.seq == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf).map_err(|e| usage(format!("cannot read standard input: {e}")))?;
        Some(buf)
    } else if std::path::Path::new(&input.seq).is_file() {
        Some(std::fs::read_to_string(&input.seq).map_err(|e| usage(format!("cannot read {}: {e}", input.seq)))?)
    } else {
        None
    };
    let Some(text) = text else {
        let params = flags.ok_or_else(|| usage("inline sequences need --p, --alpha and --beta"))?;
        return Sequence::parse_inline(params, &input.seq).map_err(|e| usage(format!("sequence: {e}")));
    };
    let has_header =
        text.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.split_whitespace().count() == 3 && !l.contains(','));
    let seq = if has_header {
        Sequence::parse_text(&text).map_err(|e| usage(format!("sequence: {e}")))?
    } else {
        let params = flags.ok_or_else(|| usage("sequence text without a `p alpha beta` header needs --p, --alpha and --beta"))?;
        let header = format!("{} {} {}\n", params.p(), params.alpha(), params.beta());
        Sequence::parse_text(&(header + &text)).map_err(|e| usage(format!("sequence: {e}")))?
    };
    if let Some(params) = flags {
        if params != seq.params() {
            return Err(usage("group flags do not match the sequence header"));
        }
    }
    Ok(seq)
}
