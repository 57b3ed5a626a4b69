//! The `qbh` command line: identity verification, BH campaigns, learning runs,
//! eigensystem dumps and noise-stability checks, reported as JSON or CSV.
//!
//! Exit codes: 0 when every check passes, 1 for usage or configuration errors,
//! 2 when a verification fails.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bh::{self, BhConstants, CampaignConfig};
use crate::coeffs::{random_observable, CoeffsDocument, Family, FourierCoeffs, SiteBasis};
use crate::error::{Error, Result};
use crate::hw::{self, gcd_star, HwLabel};
use crate::identities::{self, CheckResult};
use crate::learner::{self, ArbitraryOptions, LearningConfig, DEFAULT_MAX_SAMPLES};
use crate::noise::{self, NoiseConfig};
use crate::rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

pub const K_RANGE: (usize, usize) = (2, 8);
pub const N_RANGE: (usize, usize) = (1, 4);
/// Largest K^n accepted by commands that need dense operator norms.
pub const MAX_DENSE_DIM: usize = 256;

#[derive(Parser, Debug)]
#[command(name = "qbh", version, about = "Qudit GM/HW Fourier analysis, BH ratio checks and low-degree learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LearnMode {
    LowDegree,
    Arbitrary,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the GM, HW and eigenvector identity suites.
    Verify {
        /// A single K or an inclusive range such as 2-6.
        #[arg(long = "K", default_value = "2-6")]
        k: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// BH ratio campaign over seeded random observables.
    Bh {
        #[arg(long, default_value = "gm", value_parser = parse_family)]
        basis: Family,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials whose reduction is verified exhaustively (default depends on table size).
        #[arg(long)]
        checks: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Learn GM observables from simulated product-state samples.
    Learn {
        #[arg(long, value_enum, default_value = "low-degree")]
        mode: LearnMode,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Repetitions.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed sample count per repetition.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_MAX_SAMPLES)]
        max_samples: u64,
        /// Coefficient document to learn instead of random targets.
        #[arg(long)]
        target: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-form eigensystems of the HW basis elements.
    Eigen {
        #[arg(long = "K", default_value_t = 3)]
        k: usize,
        /// A single label such as (1,2); all gcd-coprime labels otherwise.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Haar moment channel and noise-stability checks.
    Noise {
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Random observables.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Monte Carlo states per observable.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Haar unitaries per moment-channel pair; 0 skips the check.
        #[arg(long, default_value_t = 20_000)]
        moment_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

/// A finished report: pass/fail plus its JSON and CSV renderings.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub json: String,
    pub csv: String,
}

impl Outcome {
    fn new<R: Serialize, T: Serialize>(passed: bool, report: &R, rows: &[T]) -> Result<Self> {
        let mut json = serde_json::to_string_pretty(report)?;
        json.push('\n');
        Ok(Self { passed, json, csv: to_csv(rows)? })
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(format!("csv: {e}")))
}

fn in_range(name: &str, v: usize, (lo, hi): (usize, usize)) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::Input(format!("{name}={v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Input(format!("{name}={v} must lie in (0,1)")));
    }
    Ok(())
}

fn dense_dim(k: usize, n: usize) -> Result<()> {
    match k.checked_pow(n as u32) {
        Some(dim) if dim <= MAX_DENSE_DIM => Ok(()),
        _ => Err(Error::Capacity(format!("K^n = {k}^{n} exceeds {MAX_DENSE_DIM}"))),
    }
}

/// Range checks shared by the commands: 2 ≤ K ≤ 8, 1 ≤ n ≤ 4, 1 ≤ d ≤ n for GM and
/// 1 ≤ d ≤ 2(K−1)n for HW.
pub fn validate_knd(family: Family, k: usize, n: usize, d: usize) -> Result<()> {
    in_range("K", k, K_RANGE)?;
    in_range("n", n, N_RANGE)?;
    let max_d = match family {
        Family::Gm => n,
        Family::Hw => 2 * (k - 1) * n,
    };
    in_range("d", d, (1, max_d))
}

pub fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Input(format!("cannot parse K range '{s}'"));
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    in_range("K", lo, K_RANGE)?;
    in_range("K", hi, K_RANGE)?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    schema: u32,
    #[serde(rename = "K")]
    k: &'a [usize],
    seed: u64,
    passed: bool,
    failures: Vec<String>,
    checks: &'a [CheckResult],
}

pub fn cmd_verify(k: &str, seed: u64) -> Result<Outcome> {
    let ks = parse_k_range(k)?;
    let mut checks = Vec::new();
    for &k in &ks {
        checks.extend(identities::verify_all(k, seed)?);
    }
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}/{} K={}: {}", c.suite, c.name, c.k, c.detail))
        .collect();
    let passed = failures.is_empty();
    let report = VerifyReport { schema: 1, k: &ks, seed, passed, failures, checks: &checks };
    Outcome::new(passed, &report, &checks)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bh(basis: Family, k: usize, n: usize, d: usize, trials: usize, seed: u64, checks: Option<usize>) -> Result<Outcome> {
    validate_knd(basis, k, n, d)?;
    dense_dim(k, n)?;
    if trials == 0 {
        return Err(Error::Input("trials must be positive".into()));
    }
    let cfg = CampaignConfig {
        basis,
        k,
        n,
        d,
        trials,
        seed,
        constants: BhConstants::default(),
        verify_reductions: checks
            .unwrap_or_else(|| bh::default_reduction_checks(basis, k, n, trials))
            .min(trials),
    };
    let report = bh::run_campaign(&cfg)?;
    Outcome::new(report.passed, &report, &report.records)
}

#[derive(Clone, Debug, Serialize)]
pub struct LowDegreeRow {
    pub rep: usize,
    pub seed: u64,
    pub s: u64,
    pub capped: bool,
    pub eta: f64,
    pub t: f64,
    pub eta_certified: f64,
    pub l2_sq_error: f64,
    pub l2_sq_error_trace: f64,
    pub success: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArbitraryRow {
    pub rep: usize,
    pub seed: u64,
    pub d: usize,
    pub s: u64,
    pub capped: bool,
    pub truncated_op_norm: f64,
    pub truncation_haar: f64,
    pub truncation_bound: f64,
    pub truncation_bound_alt: f64,
    pub learned_l2_sq_error: f64,
    pub guarantee: f64,
    pub final_haar: f64,
    pub final_haar_mc: Option<f64>,
    pub final_haar_mc_stderr: Option<f64>,
    pub success: bool,
}

#[derive(Serialize)]
struct LearnReport<'a, R: Serialize, E: Serialize> {
    schema: u32,
    mode: &'static str,
    #[serde(rename = "K")]
    k: usize,
    n: usize,
    d: usize,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    failures: usize,
    failure_rate: f64,
    passed: bool,
    rows: &'a [R],
    example: Option<&'a E>,
}

pub struct LearnArgs {
    pub mode: LearnMode,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub samples: Option<u64>,
    pub max_samples: u64,
    pub target: Option<FourierCoeffs>,
}

fn learn_target(a: &LearnArgs, basis: &SiteBasis, seed: u64, d: usize) -> Result<FourierCoeffs> {
    match &a.target {
        Some(t) => Ok(t.clone()),
        None => random_observable(basis, a.n, d, 1.0, &mut rng::seeded(rng::mix(seed, 0x7a4))),
    }
}

pub fn cmd_learn(a: &LearnArgs) -> Result<Outcome> {
    let (k, n) = match &a.target {
        Some(t) => {
            if t.family() != Family::Gm {
                return Err(Error::Input("learning targets must be GM coefficient documents".into()));
            }
            (t.k(), t.n())
        }
        None => (a.k, a.n),
    };
    validate_knd(Family::Gm, k, n, a.d.max(1))?;
    dense_dim(k, n)?;
    unit_open("epsilon", a.epsilon)?;
    unit_open("delta", a.delta)?;
    if a.trials == 0 {
        return Err(Error::Input("trials must be positive".into()));
    }
    let a = LearnArgs { k, n, ..clone_args(a) };
    let basis = SiteBasis::gm(k)?;
    let summarize = |failures: usize| {
        let rate = failures as f64 / a.trials as f64;
        (rate, rate <= a.delta)
    };
    match a.mode {
        LearnMode::LowDegree => {
            let mut rows = Vec::with_capacity(a.trials);
            let mut example = None;
            for rep in 0..a.trials {
                let seed = bh::trial_seed(a.seed, rep);
                let target = learn_target(&a, &basis, seed, a.d)?;
                let mut cfg = LearningConfig::new(k, n, a.d, a.epsilon, a.delta, seed);
                cfg.samples = a.samples;
                cfg.max_samples = a.max_samples;
                let rep_report = learner::learn_low_degree(&target, &cfg)?;
                rows.push(LowDegreeRow {
                    rep,
                    seed,
                    s: rep_report.s,
                    capped: rep_report.capped,
                    eta: rep_report.eta,
                    t: rep_report.t,
                    eta_certified: rep_report.eta_certified,
                    l2_sq_error: rep_report.l2_sq_error,
                    l2_sq_error_trace: rep_report.l2_sq_error_trace,
                    success: rep_report.l2_sq_error <= a.epsilon,
                });
                if rep == 0 {
                    example = Some(rep_report);
                }
            }
            let failures = rows.iter().filter(|r| !r.success).count();
            let (failure_rate, passed) = summarize(failures);
            let report = LearnReport {
                schema: 1,
                mode: "low-degree",
                k,
                n,
                d: a.d,
                epsilon: a.epsilon,
                delta: a.delta,
                trials: a.trials,
                seed: a.seed,
                failures,
                failure_rate,
                passed,
                rows: &rows,
                example: example.as_ref(),
            };
            Outcome::new(passed, &report, &rows)
        }
        LearnMode::Arbitrary => {
            let opts = ArbitraryOptions { samples: a.samples, max_samples: a.max_samples, ..Default::default() };
            let mut rows = Vec::with_capacity(a.trials);
            let mut example = None;
            let d = learner::arbitrary_degree(k, n, a.epsilon);
            for rep in 0..a.trials {
                let seed = bh::trial_seed(a.seed, rep);
                let target = learn_target(&a, &basis, seed, n)?;
                let r = learner::learn_arbitrary(&target, a.epsilon, a.delta, seed, &opts)?;
                rows.push(ArbitraryRow {
                    rep,
                    seed,
                    d: r.d,
                    s: r.low_degree.s,
                    capped: r.low_degree.capped,
                    truncated_op_norm: r.truncated_op_norm,
                    truncation_haar: r.truncation_haar,
                    truncation_bound: r.truncation_bound,
                    truncation_bound_alt: r.truncation_bound_alt,
                    learned_l2_sq_error: r.low_degree.l2_sq_error,
                    guarantee: r.guarantee,
                    final_haar: r.final_haar,
                    final_haar_mc: r.final_haar_mc.map(|e| e.mean),
                    final_haar_mc_stderr: r.final_haar_mc.map(|e| e.stderr),
                    success: r.passed,
                });
                if rep == 0 {
                    example = Some(r);
                }
            }
            let failures = rows.iter().filter(|r| !r.success).count();
            let (failure_rate, passed) = summarize(failures);
            let report = LearnReport {
                schema: 1,
                mode: "arbitrary",
                k,
                n,
                d,
                epsilon: a.epsilon,
                delta: a.delta,
                trials: a.trials,
                seed: a.seed,
                failures,
                failure_rate,
                passed,
                rows: &rows,
                example: example.as_ref(),
            };
            Outcome::new(passed, &report, &rows)
        }
    }
}

fn clone_args(a: &LearnArgs) -> LearnArgs {
    LearnArgs {
        mode: a.mode,
        k: a.k,
        n: a.n,
        d: a.d,
        epsilon: a.epsilon,
        delta: a.delta,
        trials: a.trials,
        seed: a.seed,
        samples: a.samples,
        max_samples: a.max_samples,
        target: a.target.clone(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenRow {
    pub label: String,
    pub class: hw::SpectrumClass,
    pub column: usize,
    pub exponent_2k: usize,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Serialize)]
struct EigenReport<'a> {
    schema: u32,
    #[serde(rename = "K")]
    k: usize,
    generators: hw::GeneratorSet,
    tolerance: f64,
    max_residual: f64,
    passed: bool,
    systems: &'a [hw::HwEigensystem],
}

pub fn cmd_eigen(k: usize, label: Option<&str>) -> Result<Outcome> {
    in_range("K", k, K_RANGE)?;
    let labels: Vec<HwLabel> = match label {
        Some(s) => vec![s.parse()?],
        None => (0..k)
            .flat_map(|l| (0..k).map(move |m| HwLabel::new(l, m)))
            .filter(|g| gcd_star(k, g.ell, g.m) == 1)
            .collect(),
    };
    let systems = labels
        .iter()
        .map(|&g| hw::hw_eigensystem(k, g))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for sys in &systems {
        for (c, (&e, z)) in sys.exponents_2k.iter().zip(&sys.eigenvalues).enumerate() {
            rows.push(EigenRow {
                label: sys.label.to_string(),
                class: sys.class,
                column: c,
                exponent_2k: e,
                re: z.re,
                im: z.im,
                residual: sys.residuals[c],
            });
        }
    }
    let max_residual = systems.iter().map(|s| s.max_residual()).fold(0.0, f64::max);
    let passed = max_residual <= hw::EIGEN_TOL;
    let report = EigenReport {
        schema: 1,
        k,
        generators: hw::generator_set(k)?,
        tolerance: hw::EIGEN_TOL,
        max_residual,
        passed,
        systems: &systems,
    };
    Outcome::new(passed, &report, &rows)
}

pub fn cmd_noise(cfg: &NoiseConfig) -> Result<Outcome> {
    validate_knd(Family::Gm, cfg.k, cfg.n, cfg.d)?;
    dense_dim(cfg.k, cfg.n)?;
    if cfg.observables == 0 || cfg.samples < 2 {
        return Err(Error::Input("need at least one observable and two samples".into()));
    }
    let report = noise::noise_campaign(cfg)?;
    Outcome::new(report.passed, &report, &report.rows)
}

fn read_target(path: &PathBuf) -> Result<FourierCoeffs> {
    let text = std::fs::read_to_string(path)?;
    let doc: CoeffsDocument = serde_json::from_str(&text)?;
    FourierCoeffs::from_document(&doc)
}

/// Runs one parsed command, returning the report and the pass flag.
pub fn execute(cmd: &Command) -> Result<(Outcome, &OutputArgs)> {
    let out = match cmd {
        Command::Verify { k, seed, output } => (cmd_verify(k, *seed)?, output),
        Command::Bh { basis, k, n, d, trials, seed, checks, output } => {
            (cmd_bh(*basis, *k, *n, *d, *trials, *seed, *checks)?, output)
        }
        Command::Learn { mode, k, n, d, epsilon, delta, trials, seed, samples, max_samples, target, output } => {
            let target = target.as_ref().map(read_target).transpose()?;
            let args = LearnArgs {
                mode: *mode,
                k: *k,
                n: *n,
                d: *d,
                epsilon: *epsilon,
                delta: *delta,
                trials: *trials,
                seed: *seed,
                samples: *samples,
                max_samples: *max_samples,
                target,
            };
            (cmd_learn(&args)?, output)
        }
        Command::Eigen { k, label, output } => (cmd_eigen(*k, label.as_deref())?, output),
        Command::Noise { k, n, d, trials, samples, moment_samples, seed, output } => {
            let cfg = NoiseConfig {
                k: *k,
                n: *n,
                d: *d,
                observables: *trials,
                samples: *samples,
                moment_samples: *moment_samples,
                seed: *seed,
            };
            (cmd_noise(&cfg)?, output)
        }
    };
    Ok(out)
}

/// Exit code for an error: numerical and contract failures count as verification
/// failures, everything else as a configuration problem.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::Contract(_) => EXIT_FAILED,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QBH_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("QBH_THREADS='{v}' is not a thread count")))?;
        if n == 0 {
            return Err(Error::Input("QBH_THREADS must be positive".into()));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and writes the report.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let (outcome, output) = match execute(&cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    let text = match output.format {
        Format::Json => &outcome.json,
        Format::Csv => &outcome.csv,
    };
    match &output.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{text}"),
    }
    if outcome.passed {
        EXIT_OK
    } else {
        eprintln!("verification failed");
        EXIT_FAILED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("3").unwrap(), vec![3]);
        assert_eq!(parse_k_range("2-4").unwrap(), vec![2, 3, 4]);
        assert!(parse_k_range("1").is_err());
        assert!(parse_k_range("5-3").is_err());
        assert!(parse_k_range("x").is_err());
    }

    #[test]
    fn degree_ranges() {
        assert!(validate_knd(Family::Gm, 2, 2, 2).is_ok());
        assert!(validate_knd(Family::Gm, 2, 2, 3).is_err());
        assert!(validate_knd(Family::Hw, 3, 1, 4).is_ok());
        assert!(validate_knd(Family::Hw, 3, 1, 5).is_err());
        assert!(validate_knd(Family::Gm, 9, 1, 1).is_err());
        assert!(validate_knd(Family::Gm, 2, 5, 1).is_err());
    }

    #[test]
    fn usage_codes() {
        assert_eq!(run(["qbh", "verify", "--K", "1"]), EXIT_USAGE);
        assert_eq!(run(["qbh", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["qbh", "learn", "--epsilon", "0"]), EXIT_USAGE);
    }
}
