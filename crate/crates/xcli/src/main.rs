//! Experiment runner: reproducible verification suites, measured
//! experiments, combinatorial enumerations, cromulence estimation, and
//! Feistel distinguishers over the `cosim` library.
//!
//! Configuration precedence is flags > config file > defaults; the
//! config file is plain `key = value` lines (`#` comments).  Every
//! stochastic run takes a seed, and the same config plus seed produces
//! byte-identical result documents.  Exit codes: 0 pass, 1 assertion
//! failure, 2 usage error, 3 budget exceeded.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use cosim::cfo::{
    fundamental_lemma_check, random_adversary, run_compressed_experiment, run_standard_experiment,
    AdversaryCircuit, FunctionOracleConfig,
};
use cosim::cpo::{
    perm_fundamental_lemma_check, run_cp_experiment, run_perm_standard_experiment,
    PermOracleConfig,
};
use cosim::databases::{enumerate_space, InjectiveDatabase, SpaceKind};
use cosim::feistel_core::{
    census_of, enumerate_allowable, enumerate_canonical, expected_census, FeistelParams,
};
use cosim::fixtures::{FixtureStore, DEFAULT_TOLERANCE};
use cosim::games::{
    brute_sparsity, commutator_check, cycle_predicate, distinguisher_suite, dm_collision_predicate,
    dm_zero_preimage_predicate, dszs_predicate, feistel_view_distance, one_more_predicate,
    play_compressed_game, search_bound_check, any_pair_predicate, CompressionVariant, Predicate,
};
use cosim::mforacle::{
    estimate_cromulence, orthonormality_deviation, remark_deviations, run_soundness_experiment,
    PurificationSpace, TwirlDistribution,
};
use cosim::qlinalg::trace_distance;
use cosim::rng::SplitRng;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum RunError {
    /// Exit 1: a verified property failed or a fixture drifted.
    Assertion(String),
    /// Exit 2: bad flags, config, or preconditions.
    Usage(String),
    /// Exit 3: enumeration or sampling budget exceeded.
    Budget(String),
}

impl From<cosim::Error> for RunError {
    fn from(e: cosim::Error) -> Self {
        match e {
            cosim::Error::CapExceeded { .. } | cosim::Error::BudgetExceeded(_) => {
                RunError::Budget(e.to_string())
            }
            cosim::Error::InvalidArgument(_)
            | cosim::Error::UnknownRegister(_)
            | cosim::Error::CardinalityMismatch { .. }
            | cosim::Error::Io(_)
            | cosim::Error::Json(_) => RunError::Usage(e.to_string()),
            other => RunError::Assertion(other.to_string()),
        }
    }
}

type RunResult<T> = Result<T, RunError>;

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "xcli",
    about = "Experiment runner for the compressed-oracle simulator",
    version
)]
struct Cli {
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the result document to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an assertion suite; exit 0 only if every check passes.
    Verify {
        #[arg(value_enum)]
        suite: VerifySuite,
        #[command(flatten)]
        flags: Flags,
    },
    /// Measure a quantity, optionally recording/asserting a fixture.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[command(flatten)]
        flags: Flags,
    },
    /// Dump a combinatorial enumeration as CSV or JSON.
    Enumerate {
        #[arg(value_enum)]
        what: EnumerateWhat,
        #[command(flatten)]
        flags: Flags,
    },
    /// Estimate the cromulence conditions of a twirl distribution.
    Cromulence {
        #[command(flatten)]
        flags: Flags,
    },
    /// Run the exact Feistel distinguisher at the given round count.
    Distinguish {
        #[command(flatten)]
        flags: Flags,
    },
    /// Print the catalog of registered experiments.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifySuite {
    CfoSoundness,
    CfoGrowth,
    FundamentalLemma,
    PermFundamentalLemma,
    ChainCensus,
    OneMore,
    CycleCommutator,
    SparsityCommutator,
    SearchBound,
    Intertwining,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    CpDistance,
    FeistelDistance,
    MfSoundness,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnumerateWhat {
    Allowable,
    Canonical,
    Injective,
    TwirlWeights,
    Sparsity,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum FixtureMode {
    Record,
    Assert,
    Off,
}

/// Shared option surface; unset flags fall back to the config file,
/// then to per-command defaults.
#[derive(clap::Args, Clone)]
struct Flags {
    /// Function-oracle domain size M.
    #[arg(long)]
    m: Option<usize>,
    /// Codomain / permutation size N (or half-width n for Feistel).
    #[arg(long)]
    n: Option<usize>,
    /// Number of oracle queries q.
    #[arg(long)]
    q: Option<usize>,
    /// Output tuple length l.
    #[arg(long)]
    l: Option<usize>,
    /// Database size bound t.
    #[arg(long)]
    t: Option<usize>,
    /// RNG seed (mandatory for stochastic runs; defaults provided).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Monte Carlo sample budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Feistel round count (3, 4, or 7).
    #[arg(long)]
    rounds: Option<usize>,
    /// Twirl distribution: uniform | feistel2.
    #[arg(long)]
    twirl: Option<String>,
    /// Predicate name: one-more | cycle | dszs | dm-zero-preimage |
    /// dm-collision | any-pair.
    #[arg(long)]
    predicate: Option<String>,
    /// Fixture handling for measured experiments.
    #[arg(long, value_enum)]
    fixtures: Option<FixtureMode>,
}

/// Flags merged with the config file.
struct Settings {
    flags: Flags,
    file: HashMap<String, String>,
}

impl Settings {
    fn load(flags: &Flags, config: &Option<PathBuf>) -> RunResult<Self> {
        let mut file = HashMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Usage(format!("config {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    RunError::Usage(format!("config line {}: expected `key = value`", lineno + 1))
                })?;
                file.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self {
            flags: flags.clone(),
            file,
        })
    }

    fn resolve<T: FromStr + Copy>(&self, key: &str, flag: Option<T>, default: T) -> RunResult<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| RunError::Usage(format!("config key `{key}`: bad value `{raw}`"))),
            None => Ok(default),
        }
    }

    fn resolve_str(&self, key: &str, flag: &Option<String>, default: &str) -> String {
        flag.clone()
            .or_else(|| self.file.get(key).cloned())
            .unwrap_or_else(|| default.to_string())
    }

    fn fixture_mode(&self) -> RunResult<FixtureMode> {
        if let Some(m) = self.flags.fixtures {
            return Ok(m);
        }
        match self.file.get("fixtures").map(String::as_str) {
            Some("record") => Ok(FixtureMode::Record),
            Some("assert") => Ok(FixtureMode::Assert),
            Some("off") | None => Ok(FixtureMode::Off),
            Some(other) => Err(RunError::Usage(format!("bad fixtures mode `{other}`"))),
        }
    }
}

fn twirl_of(name: &str) -> RunResult<TwirlDistribution> {
    match name {
        "uniform" => Ok(TwirlDistribution::Uniform),
        "feistel2" => Ok(TwirlDistribution::Feistel2Pair),
        other => Err(RunError::Usage(format!("unknown twirl `{other}`"))),
    }
}

/// `n` is the permutation size N; `q` feeds the one-more arity.
fn predicate_of(name: &str, n: usize, q: usize) -> RunResult<Predicate> {
    match name {
        "one-more" => Ok(one_more_predicate(q)),
        "cycle" => Ok(cycle_predicate()),
        "dszs" => {
            let half = (usize::BITS - 1 - n.leading_zeros()) as usize / 2;
            if 1 << (2 * half) != n {
                return Err(RunError::Usage(format!(
                    "dszs needs N = 2^(2n), got N = {n}"
                )));
            }
            Ok(dszs_predicate(half))
        }
        "dm-zero-preimage" => Ok(dm_zero_preimage_predicate()),
        "dm-collision" => Ok(dm_collision_predicate()),
        "any-pair" => Ok(any_pair_predicate()),
        other => Err(RunError::Usage(format!("unknown predicate `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Result documents
// ---------------------------------------------------------------------------

enum Document {
    Json(String),
    Csv(String),
}

impl Document {
    fn json<T: Serialize>(value: &T) -> RunResult<Self> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| RunError::Usage(e.to_string()))?;
        Ok(Document::Json(text + "\n"))
    }

    fn text(&self) -> &str {
        match self {
            Document::Json(t) | Document::Csv(t) => t,
        }
    }
}

fn emit(doc: &Document, out: &Option<PathBuf>) -> RunResult<()> {
    match out {
        Some(path) => std::fs::write(path, doc.text())
            .map_err(|e| RunError::Usage(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{}", doc.text());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CatalogEntry {
    name: &'static str,
    invocation: &'static str,
    operation: &'static str,
    summary: &'static str,
}

fn catalog() -> Vec<CatalogEntry> {
    fn e(
        name: &'static str,
        invocation: &'static str,
        operation: &'static str,
        summary: &'static str,
    ) -> CatalogEntry {
        CatalogEntry {
            name,
            invocation,
            operation,
            summary,
        }
    }
    vec![
        e("cfo-soundness", "verify cfo-soundness --m 4 --n 4 --q 2 --seed 7",
          "cfo::run_compressed_experiment",
          "trace distance between standard and compressed function-oracle views is ≤ 1e-9"),
        e("cfo-growth", "verify cfo-growth --m 4 --n 4 --q 2 --seed 7",
          "cfo::run_compressed_experiment",
          "amplitude on databases larger than the query count stays ≤ 1e-12"),
        e("fundamental-lemma", "verify fundamental-lemma --m 4 --n 4 --q 2 --l 1 --seed 7",
          "cfo::fundamental_lemma_check",
          "√p(find) ≤ √p(db) + √(l/N) on seeded random adversaries"),
        e("perm-fundamental-lemma", "verify perm-fundamental-lemma --n 4 --q 2 --l 1 --seed 7",
          "cpo::perm_fundamental_lemma_check",
          "the two-way permutation variant of the fundamental lemma"),
        e("chain-census", "verify chain-census --n 2 --t 2",
          "feistel_core::census_of",
          "semi-chain census of every canonical triple matches the closed-form counts"),
        e("one-more", "verify one-more --n 4 --q 2 --seed 7",
          "games::play_compressed_game",
          "compressed win probability of producing q+1 pairs after q queries is exactly 0"),
        e("cycle-commutator", "verify cycle-commutator --n 4 --t 3",
          "games::commutator_check",
          "the cycle-avoiding compression commutes exactly with the cycle projector"),
        e("sparsity-commutator", "verify sparsity-commutator --n 4 --predicate dm-zero-preimage",
          "games::commutator_check",
          "sparsity-restricted compressions commute with their predicate projectors"),
        e("search-bound", "verify search-bound --n 4 --q 1 --l 1 --seed 7 --trials 5",
          "games::search_bound_check",
          "√p1 ≤ √p2 + l/√(N−q−l) + Adv on seeded (adversary, predicate) pairs"),
        e("intertwining", "verify intertwining --twirl uniform --trials 4 --seed 113",
          "mforacle::remark_deviations",
          "sophisticated-state orthonormality and the four exact intertwining identities"),
        e("cp-distance", "experiment cp-distance --n 4 --q 2 --seed 7",
          "cpo::run_cp_experiment",
          "measured trace distance between the real and compressed permutation views"),
        e("feistel-distance", "experiment feistel-distance --n 1 --rounds 7 --q 2",
          "games::feistel_view_distance",
          "trace distance of the probe adversary's view against r-round Feistel"),
        e("mf-soundness", "experiment mf-soundness --n 1 --q 2 --seed 7 --twirl uniform",
          "mforacle::run_soundness_experiment",
          "end-to-end purified masked-Feistel soundness report with hybrid deviations"),
        e("allowable", "enumerate allowable --n 1 --t 2",
          "feistel_core::enumerate_allowable",
          "counts of allowable injective databases by size"),
        e("canonical", "enumerate canonical --n 1 --t 2",
          "feistel_core::enumerate_canonical",
          "counts of canonical database triples by size, with census columns"),
        e("injective", "enumerate injective --n 4 --t 2",
          "databases::enumerate_space",
          "counts of injective partial functions by size"),
        e("twirl-weights", "enumerate twirl-weights --twirl feistel2 --n 1",
          "mforacle::TwirlDistribution::enumerate_weights",
          "the exact joint weight table of a twirl distribution"),
        e("sparsity", "enumerate sparsity --predicate dm-collision --n 8 --t 2",
          "games::brute_sparsity",
          "brute-force t-sparsity of a predicate with its maximizing witness"),
        e("cromulence", "cromulence --twirl uniform --n 1 --seed 7",
          "mforacle::estimate_cromulence",
          "the four cromulence conditions, exact at n = 1 and Monte Carlo beyond"),
        e("distinguish", "distinguish --n 1 --rounds 3",
          "games::distinguisher_suite",
          "exact XOR-statistic advantage and trace-distance ceiling vs r-round Feistel"),
        e("list", "list --json",
          "xcli::catalog",
          "this catalog, machine-readable with --json"),
    ]
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyReport<T: Serialize> {
    suite: String,
    pass: bool,
    detail: T,
}

fn assert_pass<T: Serialize>(suite: &str, pass: bool, detail: T) -> RunResult<Document> {
    let doc = Document::json(&VerifyReport {
        suite: suite.to_string(),
        pass,
        detail,
    })?;
    if pass {
        Ok(doc)
    } else {
        // Still print the report so the failure is inspectable.
        print!("{}", doc.text());
        Err(RunError::Assertion(format!("suite `{suite}` failed")))
    }
}

fn tuple_workspace(m: usize, n: usize, l: usize) -> Vec<usize> {
    (0..l).flat_map(|_| [m, n]).collect()
}

fn run_verify(suite: VerifySuite, s: &Settings) -> RunResult<Document> {
    match suite {
        VerifySuite::CfoSoundness => {
            let m = s.resolve("m", s.flags.m, 4)?;
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let cfg = FunctionOracleConfig::new(m, n, q, vec![])?;
            let split = SplitRng::new(seed);
            let mut worst = 0.0f64;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                let standard = run_standard_experiment(&cfg, &adv)?;
                let (_, view) = run_compressed_experiment(&cfg, &adv)?;
                worst = worst.max(trace_distance(&standard, &view)?);
            }
            #[derive(Serialize)]
            struct D { m: usize, n: usize, q: usize, seed: u64, trials: usize, max_trace_distance: f64 }
            assert_pass("cfo-soundness", worst <= 1e-9,
                        D { m, n, q, seed, trials, max_trace_distance: worst })
        }
        VerifySuite::CfoGrowth => {
            let m = s.resolve("m", s.flags.m, 4)?;
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let cfg = FunctionOracleConfig::new(m, n, q + 1, vec![])?;
            let space = cfg.space()?;
            let layout = cfg.full_layout(&space);
            let db_pos = layout.position("db")?;
            let split = SplitRng::new(seed);
            let mut worst = 0.0f64;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                let (psi, _) = run_compressed_experiment(&cfg, &adv)?;
                let leak: f64 = psi
                    .iter()
                    .filter(|&(idx, _)| space.database(layout.value_at(idx, db_pos)).size() > q)
                    .map(|(_, amp)| amp.norm_sqr())
                    .sum();
                worst = worst.max(leak);
            }
            #[derive(Serialize)]
            struct D { m: usize, n: usize, q: usize, seed: u64, trials: usize, max_overflow_mass: f64 }
            assert_pass("cfo-growth", worst <= 1e-12,
                        D { m, n, q, seed, trials, max_overflow_mass: worst })
        }
        VerifySuite::FundamentalLemma => {
            let m = s.resolve("m", s.flags.m, 4)?;
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let l = s.resolve("l", s.flags.l, 1)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let cfg = FunctionOracleConfig::new(m, n, q + 1, tuple_workspace(m, n, l))?;
            let split = SplitRng::new(seed);
            let mut checks = Vec::with_capacity(trials);
            let mut pass = true;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                let check = fundamental_lemma_check(&cfg, &adv, l)?;
                pass &= check.holds(1e-9);
                checks.push(check);
            }
            #[derive(Serialize)]
            struct D { m: usize, n: usize, q: usize, l: usize, seed: u64, checks: Vec<cosim::cfo::LemmaCheck> }
            assert_pass("fundamental-lemma", pass, D { m, n, q, l, seed, checks })
        }
        VerifySuite::PermFundamentalLemma => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let l = s.resolve("l", s.flags.l, 1)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let cfg = PermOracleConfig::new(n, q + 1, tuple_workspace(n, n, l))?;
            let split = SplitRng::new(seed);
            let mut checks = Vec::with_capacity(trials);
            let mut pass = true;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                let check = perm_fundamental_lemma_check(&cfg, &adv, l)?;
                pass &= check.holds(1e-9);
                checks.push(check);
            }
            #[derive(Serialize)]
            struct D { n: usize, q: usize, l: usize, seed: u64, checks: Vec<cosim::cpo::PermLemmaCheck> }
            assert_pass("perm-fundamental-lemma", pass, D { n, q, l, seed, checks })
        }
        VerifySuite::ChainCensus => {
            let n = s.resolve("n", s.flags.n, 2)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let mut rows = String::from("n,t,count,chains,semi2,semi1,semi0,pass\n");
            let mut pass = true;
            for size in 0..=t {
                let triples = enumerate_canonical(params, size);
                let expected = expected_census(params, size);
                let ok = triples.iter().all(|d| census_of(params, d) == expected);
                pass &= ok;
                writeln!(
                    rows,
                    "{n},{size},{},{},{},{},{},{ok}",
                    triples.len(), expected.chains, expected.semi2, expected.semi1, expected.semi0
                )
                .unwrap();
            }
            if !pass {
                print!("{rows}");
                return Err(RunError::Assertion("suite `chain-census` failed".into()));
            }
            Ok(Document::Csv(rows))
        }
        VerifySuite::OneMore => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let cfg = PermOracleConfig::new(n, q + 1, vec![])?;
            let p = one_more_predicate(q);
            let split = SplitRng::new(seed);
            let mut worst = 0.0f64;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                worst = worst.max(play_compressed_game(&cfg, &p, &adv)?);
            }
            #[derive(Serialize)]
            struct D { n: usize, q: usize, seed: u64, trials: usize, max_p2: f64 }
            assert_pass("one-more", worst <= 1e-15, D { n, q, seed, trials, max_p2: worst })
        }
        VerifySuite::CycleCommutator => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let t = s.resolve("t", s.flags.t, 3)?;
            let cfg = PermOracleConfig::new(n, t, vec![])?;
            let variant = CompressionVariant::NonDomainImage;
            let report = commutator_check(&cfg, &cycle_predicate(), &variant, &variant, t - 1)?;
            let pass = report.commutator_norm <= 1e-10;
            assert_pass("cycle-commutator", pass, report)
        }
        VerifySuite::SparsityCommutator => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 1)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let name = s.resolve_str("predicate", &s.flags.predicate, "dm-zero-preimage");
            let p = predicate_of(&name, n, q)?;
            let sparsity = brute_sparsity(&p, n, t.saturating_sub(1))?.s_t.max(1);
            let cfg = PermOracleConfig::new(n, t, vec![])?;
            let fwd = CompressionVariant::AvoidForward(p.clone());
            let inv = CompressionVariant::AvoidInverse(p.clone());
            let report = commutator_check(&cfg, &p, &fwd, &inv, sparsity)?;
            let pass = report.commutator_norm <= 1e-10;
            assert_pass("sparsity-commutator", pass, report)
        }
        VerifySuite::SearchBound => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 1)?;
            let l = s.resolve("l", s.flags.l, 1)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let trials = s.resolve("trials", s.flags.trials, 5)?;
            let name = s.resolve_str("predicate", &s.flags.predicate, "any-pair");
            let p = predicate_of(&name, n, q)?;
            let cfg = PermOracleConfig::new(n, q + 1, tuple_workspace(n, n, l))?;
            let split = SplitRng::new(seed);
            let mut rows = String::from("predicate,N,q,l,p1,p2,bound_rhs,seed\n");
            let mut pass = true;
            for trial in 0..trials {
                let adv = random_adversary(&cfg.adversary_layout(), q, &mut split.stream(trial as u64));
                let r = search_bound_check(&cfg, &p, &adv, l)?;
                pass &= r.holds(1e-8);
                writeln!(rows, "{},{n},{q},{l},{},{},{},{seed}", p.name, r.p1, r.p2, r.bound_rhs)
                    .unwrap();
            }
            if !pass {
                print!("{rows}");
                return Err(RunError::Assertion("suite `search-bound` failed".into()));
            }
            Ok(Document::Csv(rows))
        }
        VerifySuite::Intertwining => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let trials = s.resolve("trials", s.flags.trials, 4)?;
            let seed = s.resolve("seed", s.flags.seed, 113)?;
            let twirl = twirl_of(&s.resolve_str("twirl", &s.flags.twirl, "uniform"))?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let space = PurificationSpace::new(params, 2, vec![])?;
            let ortho = orthonormality_deviation(&space, &twirl)?;
            let remarks = remark_deviations(&space, &twirl, trials, seed)?;
            let pass = ortho <= 1e-10 && remarks.iter().all(|(_, d)| *d <= 1e-10);
            #[derive(Serialize)]
            struct D { n: usize, seed: u64, orthonormality_deviation: f64, remarks: Vec<(String, f64)> }
            assert_pass("intertwining", pass,
                        D { n, seed, orthonormality_deviation: ortho, remarks })
        }
    }
}

/// The two-query classical probe used for Feistel view distances: both
/// queries share the left input half.
fn probe_adversary(params: FeistelParams, cfg: &PermOracleConfig) -> AdversaryCircuit {
    let layout = cfg.adversary_layout();
    let w0 = layout.position("w0").unwrap();
    let x = layout.position("x").unwrap();
    let y = layout.position("y").unwrap();
    let x1 = params.concat(0, 0);
    let x2 = params.concat(0, 1);
    let steps: Vec<Box<dyn Fn(&mut Vec<usize>)>> = vec![
        Box::new(move |v| v[x] ^= x1),
        Box::new(move |v| {
            v[w0] ^= v[y];
            v[y] ^= v[w0];
            v[x] ^= x1 ^ x2;
        }),
        Box::new(|_| {}),
    ];
    AdversaryCircuit {
        unitaries: steps
            .into_iter()
            .map(|f| cosim::cfo::basis_permutation_op(&layout, f))
            .collect(),
        initial_index: 0,
    }
}

fn check_fixture(s: &Settings, key: &str, value: f64) -> RunResult<Option<String>> {
    match s.fixture_mode()? {
        FixtureMode::Off => Ok(None),
        FixtureMode::Record => {
            let mut store = FixtureStore::load_default()?;
            let overwrite = std::env::var("COSIM_FIXTURES_OVERWRITE").as_deref() == Ok("1");
            store.record(key, value, DEFAULT_TOLERANCE, overwrite)?;
            Ok(Some(format!("recorded `{key}`")))
        }
        FixtureMode::Assert => {
            let store = FixtureStore::load_default()?;
            store
                .assert_value(key, value)
                .map_err(|e| RunError::Assertion(e.to_string()))?;
            Ok(Some(format!("matched `{key}`")))
        }
    }
}

fn run_experiment(name: ExperimentName, s: &Settings) -> RunResult<Document> {
    match name {
        ExperimentName::CpDistance => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let cfg = PermOracleConfig::new(n, q + 1, vec![])?;
            let adv = random_adversary(&cfg.adversary_layout(), q, &mut cosim::rng::seeded(seed));
            let standard = run_perm_standard_experiment(&cfg, &adv)?;
            let (_, view) = run_cp_experiment(&cfg, &adv)?;
            let distance = trace_distance(&standard, &view)?;
            let fixture = check_fixture(s, &format!("cp-distance-n{n}-q{q}-seed{seed}"), distance)?;
            #[derive(Serialize)]
            struct D { n: usize, q: usize, seed: u64, trace_distance: f64, fixture: Option<String> }
            Document::json(&D { n, q, seed, trace_distance: distance, fixture })
        }
        ExperimentName::FeistelDistance => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let rounds = s.resolve("rounds", s.flags.rounds, 7)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            if q != 2 {
                return Err(RunError::Usage("the probe adversary uses q = 2".into()));
            }
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let cfg = PermOracleConfig::new(params.full(), q + 1, vec![params.full()])?;
            let adv = probe_adversary(params, &cfg);
            let distance = feistel_view_distance(params, rounds, &cfg, &adv)?;
            let fixture =
                check_fixture(s, &format!("feistel-distance-n{n}-r{rounds}-q{q}"), distance)?;
            #[derive(Serialize)]
            struct D { n: usize, rounds: usize, q: usize, trace_distance: f64, fixture: Option<String> }
            Document::json(&D { n, rounds, q, trace_distance: distance, fixture })
        }
        ExperimentName::MfSoundness => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let q = s.resolve("q", s.flags.q, 2)?;
            let seed = s.resolve("seed", s.flags.seed, 7)?;
            let twirl = twirl_of(&s.resolve_str("twirl", &s.flags.twirl, "uniform"))?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let space = PurificationSpace::new(params, q + 1, vec![])?;
            let adv = random_adversary(
                &PermOracleConfig::new(params.full(), q + 1, vec![])?.adversary_layout(),
                q,
                &mut cosim::rng::seeded(seed),
            );
            let report = run_soundness_experiment(&space, &twirl, &adv)?;
            Document::json(&report)
        }
    }
}

fn run_enumerate(what: EnumerateWhat, s: &Settings) -> RunResult<Document> {
    match what {
        EnumerateWhat::Allowable => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let mut rows = String::from("n,size,count\n");
            for size in 0..=t {
                let count = enumerate_allowable(params, size).len();
                writeln!(rows, "{n},{size},{count}").unwrap();
            }
            Ok(Document::Csv(rows))
        }
        EnumerateWhat::Canonical => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let mut rows = String::from("n,size,count,chains,semi2,semi1,semi0\n");
            for size in 0..=t {
                let count = enumerate_canonical(params, size).len();
                let c = expected_census(params, size);
                writeln!(rows, "{n},{size},{count},{},{},{},{}", c.chains, c.semi2, c.semi1, c.semi0)
                    .unwrap();
            }
            Ok(Document::Csv(rows))
        }
        EnumerateWhat::Injective => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let space = enumerate_space(SpaceKind::Injective, n, n, t)?;
            let mut rows = String::from("N,size,count\n");
            for size in 0..=t {
                let count = (0..space.len())
                    .filter(|&i| space.injective(i).size() == size)
                    .count();
                writeln!(rows, "{n},{size},{count}").unwrap();
            }
            Ok(Document::Csv(rows))
        }
        EnumerateWhat::TwirlWeights => {
            let n = s.resolve("n", s.flags.n, 1)?;
            let twirl = twirl_of(&s.resolve_str("twirl", &s.flags.twirl, "uniform"))?;
            let params = FeistelParams::new(n).map_err(RunError::from)?;
            let weights = twirl.enumerate_weights(params)?;
            let mut rows = String::from("pi,omega,weight\n");
            for (pi, row) in weights.iter().enumerate() {
                for (om, w) in row.iter().enumerate() {
                    writeln!(rows, "{pi},{om},{w}").unwrap();
                }
            }
            Ok(Document::Csv(rows))
        }
        EnumerateWhat::Sparsity => {
            let n = s.resolve("n", s.flags.n, 4)?;
            let t = s.resolve("t", s.flags.t, 2)?;
            let q = s.resolve("q", s.flags.q, 1)?;
            let name = s.resolve_str("predicate", &s.flags.predicate, "dm-zero-preimage");
            let p = predicate_of(&name, n, q)?;
            let report = brute_sparsity(&p, n, t)?;
            Document::json(&report)
        }
    }
}

fn run_cromulence(s: &Settings) -> RunResult<Document> {
    let n = s.resolve("n", s.flags.n, 1)?;
    let budget = s.resolve("budget", s.flags.budget, 100_000)?;
    let seed = s.resolve("seed", s.flags.seed, 7)?;
    let twirl = twirl_of(&s.resolve_str("twirl", &s.flags.twirl, "uniform"))?;
    let params = FeistelParams::new(n).map_err(RunError::from)?;
    let i = InjectiveDatabase::empty(params.full());
    let report = estimate_cromulence(&twirl, params, &i, 0, budget, seed)?;
    Document::json(&report)
}

fn run_distinguish(s: &Settings) -> RunResult<Document> {
    let n = s.resolve("n", s.flags.n, 1)?;
    let rounds = s.resolve("rounds", s.flags.rounds, 3)?;
    let params = FeistelParams::new(n).map_err(RunError::from)?;
    let report = distinguisher_suite(params, rounds)?;
    let fixture = check_fixture(s, &format!("distinguish-n{n}-r{rounds}-ceiling"), report.ceiling)?;
    #[derive(Serialize)]
    struct D {
        #[serde(flatten)]
        report: cosim::games::DistinguisherReport,
        fixture: Option<String>,
    }
    Document::json(&D { report, fixture })
}

fn run_list(json: bool) -> RunResult<Document> {
    let entries = catalog();
    if json {
        Document::json(&entries)
    } else {
        let mut text = String::new();
        for e in &entries {
            writeln!(text, "{:<24} {:<60} {}", e.name, e.invocation, e.operation).unwrap();
        }
        Ok(Document::Csv(text))
    }
}

fn run(cli: &Cli) -> RunResult<Document> {
    match &cli.cmd {
        Cmd::Verify { suite, flags } => run_verify(*suite, &Settings::load(flags, &cli.config)?),
        Cmd::Experiment { name, flags } => {
            run_experiment(*name, &Settings::load(flags, &cli.config)?)
        }
        Cmd::Enumerate { what, flags } => run_enumerate(*what, &Settings::load(flags, &cli.config)?),
        Cmd::Cromulence { flags } => run_cromulence(&Settings::load(flags, &cli.config)?),
        Cmd::Distinguish { flags } => run_distinguish(&Settings::load(flags, &cli.config)?),
        Cmd::List { json } => run_list(*json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(doc) => match emit(&doc, &cli.out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        Err(e) => fail(e),
    }
}

fn fail(e: RunError) -> ExitCode {
    match e {
        RunError::Assertion(msg) => {
            eprintln!("assertion failure: {msg}");
            ExitCode::from(1)
        }
        RunError::Usage(msg) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        RunError::Budget(msg) => {
            eprintln!("budget exceeded: {msg}");
            ExitCode::from(3)
        }
    }
}
