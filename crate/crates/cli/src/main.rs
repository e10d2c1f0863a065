use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use hardball::config::{Method, RunConfig};
use hardball::error::{Error, ErrorClass, Result};
use hardball::experiment::{aggregate, richness_seed, run_lyapunov, run_simulate, survey_seed};
use hardball::io::{self, LyapunovSummary, RichnessTable, SpectrumTable, Summary, SurveyTable};
use hardball::lyapunov::Verdict;
use hardball::selftest::{self, Fault};

const EXIT_CONFIG: u8 = 2;
const EXIT_CONSISTENCY: u8 = 3;
const EXIT_DEGENERACY: u8 = 4;

/// Hard balls on the flat torus: simulation, neutral spaces, richness and
/// Lyapunov spectra.
#[derive(Parser, Debug)]
#[command(name = "hardball", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate one trajectory; writes events.jsonl and summary.json.
    Simulate,
    /// Sufficiency survey over an ensemble of seeds; writes survey.csv and summary.json.
    Sufficiency,
    /// Lyapunov spectrum and verdict; writes spectrum.csv and summary.json.
    Lyapunov,
    /// Richness and Property (A) over an ensemble of seeds; writes richness.csv.
    Richness,
    /// Run the bundled invariant suites.
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true, alias = "n_balls")]
    n_balls: Option<usize>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, alias = "torus_side")]
    torus_side: Option<f64>,
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Comma-separated masses.
    #[arg(long, global = true, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    /// `LO,HI`: masses drawn uniformly per seed.
    #[arg(long, global = true, alias = "mass_range", value_delimiter = ',')]
    mass_range: Option<Vec<f64>>,
    #[arg(long, global = true, alias = "n_collisions")]
    n_collisions: Option<usize>,
    #[arg(long, global = true, alias = "total_time")]
    total_time: Option<f64>,
    #[arg(long, global = true, alias = "segment_length")]
    segment_length: Option<usize>,
    #[arg(long, global = true, alias = "ensemble_size")]
    ensemble_size: Option<usize>,
    #[arg(long, global = true, alias = "renorm_every")]
    renorm_every: Option<usize>,
    #[arg(long, global = true, alias = "frame_size")]
    frame_size: Option<usize>,
    #[arg(long, global = true, alias = "min_richness")]
    min_richness: Option<usize>,
    /// Comma-separated subset of direct, cpf, jacobian.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, global = true, alias = "rank_tol")]
    rank_tol: Option<f64>,
    #[arg(long, global = true, alias = "tol_zero")]
    tol_zero: Option<f64>,
    #[arg(long, global = true, alias = "resync_every")]
    resync_every: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Consistency => EXIT_CONSISTENCY,
                ErrorClass::Degeneracy => EXIT_DEGENERACY,
            })
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    if let Command::Selftest { inject_fault } = cli.command {
        return Ok(cmd_selftest(inject_fault));
    }
    let cfg = load_config(cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("hardball-out"));
    fs::create_dir_all(&out)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Sufficiency => cmd_sufficiency(&cfg, &out),
        Command::Lyapunov => cmd_lyapunov(&cfg, &out),
        Command::Richness => cmd_richness(&cfg, &out),
        Command::Selftest { .. } => unreachable!("handled above"),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let o = &cli.overrides;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            // Validated after the flags are applied.
            RunConfig::parse_unvalidated(&text)?
        }
        None => match (o.n_balls, o.dim, o.torus_side, o.radius) {
            (Some(n), Some(d), Some(l), Some(r)) => RunConfig::new(n, d, l, r),
            _ => {
                return Err(Error::Config(
                    "give --config or all of --n-balls, --dim, --torus-side, --radius".into(),
                ))
            }
        },
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = o.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(n_balls, dim, torus_side, radius, n_collisions, segment_length, ensemble_size, renorm_every, methods);
    if let Some(m) = o.masses.clone() {
        cfg.masses = Some(m);
        cfg.mass_range = None;
    }
    if let Some(r) = &o.mass_range {
        let &[lo, hi] = r.as_slice() else {
            return Err(Error::Config("--mass-range takes LO,HI".into()));
        };
        cfg.mass_range = Some([lo, hi]);
        cfg.masses = None;
    }
    if o.total_time.is_some() {
        cfg.total_time = o.total_time;
    }
    if o.frame_size.is_some() {
        cfg.frame_size = o.frame_size;
    }
    if o.min_richness.is_some() {
        cfg.min_richness = o.min_richness;
    }
    if o.resync_every.is_some() {
        cfg.resync_every = o.resync_every;
    }
    if let Some(t) = o.rank_tol {
        cfg.tolerances.rank_tol = t;
    }
    if o.tol_zero.is_some() {
        cfg.tolerances.tol_zero = o.tol_zero;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = out.join(name);
    info!("writing {}", path.display());
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_summary(out: &Path, summary: &Summary) -> Result<()> {
    io::write_summary(create(out, "summary.json")?, summary)
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let (segment, stats) = run_simulate(cfg)?;
    io::write_events(create(out, "events.jsonl")?, &segment)?;
    let mut summary = Summary::new("simulate", cfg.seed, segment.params.clone());
    println!(
        "{} collisions up to t = {}; |H - H0| = {:e}, |P| = {:e}, max contact residue {:e}",
        stats.events, stats.final_time, stats.energy_drift, stats.momentum_norm, stats.max_contact_residue
    );
    summary.simulate = Some(stats);
    write_summary(out, &summary)?;
    Ok(0)
}

fn cmd_sufficiency(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let seeds: Vec<u64> = cfg.seeds().collect();
    let records: Vec<_> = seeds.par_iter().map(|&s| survey_seed(cfg, s)).collect();
    for r in records.iter().filter(|r| r.error.is_some()) {
        warn!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or_default());
    }
    let agg = aggregate(&records, cfg.richness_threshold());
    let table = SurveyTable {
        n_balls: cfg.n_balls,
        dim: cfg.dim,
        torus_side: cfg.torus_side,
        radius: cfg.radius,
        segment_length: cfg.segment_length,
        methods: cfg.methods.clone(),
        rank_tol: cfg.tolerances.rank_tol,
        aggregate: agg.clone(),
        records,
    };
    io::write_survey(create(out, "survey.csv")?, &table)?;
    let mut summary = Summary::new("sufficiency", cfg.seed, cfg.params_for_seed(cfg.seed)?);
    summary.sufficiency = Some(agg.clone());
    write_summary(out, &summary)?;
    println!(
        "richness >= {}: {}/{} sufficient ({} segments, {} failed)",
        agg.min_richness, agg.rich_sufficient, agg.rich, agg.segments, agg.failures
    );
    if !agg.rich_not_sufficient.is_empty() {
        println!("rich but not sufficient: seeds {:?}", agg.rich_not_sufficient);
    }
    if agg.tainted {
        eprintln!("error: survey tainted by an internal-consistency failure");
        return Ok(EXIT_CONSISTENCY);
    }
    Ok(0)
}

fn cmd_lyapunov(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let run = run_lyapunov(cfg)?;
    let s = &run.spectrum;
    let params = cfg.params_for_seed(cfg.seed)?;
    let table = SpectrumTable {
        params: params.clone(),
        seed: cfg.seed,
        total_time: s.total_time,
        renorm_every: cfg.renorm_every,
        collisions: s.collisions,
        tol_zero: run.tol_zero,
        verdict: run.verdict,
        exponents: s.exponents.clone(),
        convergence: s.convergence.clone(),
    };
    io::write_spectrum(create(out, "spectrum.csv")?, &table)?;
    let mut summary = Summary::new("lyapunov", cfg.seed, params);
    summary.lyapunov = Some(LyapunovSummary {
        verdict: run.verdict,
        tol_zero: run.tol_zero,
        lambda_max: s.exponents.first().copied().unwrap_or(0.0),
        collisions: s.collisions,
    });
    write_summary(out, &summary)?;
    for (k, (l, c)) in s.exponents.iter().zip(&s.convergence).enumerate() {
        println!("lambda_{:<3} {l:>+.6e}  (half-sample difference {c:.1e})", k + 1);
    }
    let note = if run.verdict == Verdict::Unavailable {
        " (partial frame)"
    } else {
        ""
    };
    println!("tol_zero = {:.3e}; verdict: {}{note}", run.tol_zero, run.verdict);
    Ok(0)
}

fn cmd_richness(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let seeds: Vec<u64> = cfg.seeds().collect();
    let records: Vec<_> = seeds.par_iter().map(|&s| richness_seed(cfg, s)).collect();
    let required = hardball::combinatorics::required_richness(cfg.n_balls);
    let rich = records.iter().filter(|r| r.error.is_none() && r.richness >= required).count();
    let violations = records.iter().filter(|r| r.property_a_violation.is_some()).count();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let table = RichnessTable {
        n_balls: cfg.n_balls,
        dim: cfg.dim,
        segment_length: cfg.segment_length,
        required_richness: required,
        records,
    };
    io::write_richness(create(out, "richness.csv")?, &table)?;
    println!(
        "richness >= {required}: {rich}/{} segments; Property (A) violated on {violations}; {failed} failed",
        table.records.len()
    );
    Ok(0)
}

fn cmd_selftest(fault: Option<Fault>) -> u8 {
    let results = selftest::run_all(fault);
    for r in &results {
        println!("{:<14} {}  {}", r.name, if r.passed { "pass" } else { "FAIL" }, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        0
    } else {
        EXIT_CONSISTENCY
    }
}
