use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use falsify_core::dataset::{load_csv, save_csv, simulate, DGPConfig};
use falsify_core::harness::{
    analyze_cohort, cohort_signals, emit_report, presets, prop2_oracle_check, run_replications_with, Allocation,
    AnalysisConfig, ExperimentConfig, KindOutcome, ReportFormat,
};
use falsify_core::mmr::{Bandwidth, KernelSpec, WitnessEvaluator};
use falsify_core::nuisance::NuisanceOptions;
use falsify_core::{Error, SignalKind, SupportPolicy};

#[derive(Parser)]
#[command(name = "falsify", version, about = "Falsification tests for observational studies under right-censoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocationArg {
    Balanced,
    Iid,
}

#[derive(clap::Args)]
struct ConfigSource {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `falsify preset --list`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated experiments and write a rejection-rate table.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Concurrent replications (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Override the configured replication count.
        #[arg(long)]
        replications: Option<usize>,
        /// Override the configured signal kinds (comma separated).
        #[arg(long, value_delimiter = ',')]
        signals: Option<Vec<String>>,
    },
    /// Monte Carlo check of the discrete counterexample worlds.
    OracleProp2 {
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "balanced")]
        allocation: AllocationArg,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one cohort and save it as CSV.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
        /// Seed (defaults to the config's base seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Test a saved cohort with fitted nuisances.
    Test {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "cdr")]
        signal: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed RBF bandwidth on raw covariates instead of the median heuristic.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        cross_fit: usize,
        /// Fail on survival probabilities below the support floor instead of clamping.
        #[arg(long)]
        strict: bool,
        /// Also write the per-record signal to this CSV.
        #[arg(long)]
        signals_out: Option<PathBuf>,
        /// Ridge penalty for the Cox and logistic fits.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Evaluate the normalized witness function on a covariate grid.
    Witness {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "cdr")]
        signal: String,
        /// `name=lo:hi:steps`, comma separated; other covariates sit at their means.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ridge penalty for the Cox and logistic fits.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Print a bundled preset as JSON.
    Preset {
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Threshold(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::TooManyFailures { .. } => Failure::Threshold(e.to_string()),
            e if e.is_config() => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load_config(source: &ConfigSource) -> Result<ExperimentConfig, Failure> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Ok(ExperimentConfig::from_json(&text)?)
        }
        (None, Some(name)) => Ok(presets::preset(name)?),
        (None, None) => Err(Failure::Config("pass --config or --preset".into())),
    }
}

fn parse_kinds(names: &[String]) -> Result<Vec<SignalKind>, Failure> {
    names
        .iter()
        .map(|n| n.parse::<SignalKind>().map_err(|e| Failure::Config(e.to_string())))
        .collect()
}

fn kernel_for(bandwidth: Option<f64>) -> KernelSpec {
    match bandwidth {
        Some(s) => KernelSpec::fixed(s),
        None => KernelSpec::median_heuristic(),
    }
}

fn fit_options(ridge: Option<f64>) -> Result<NuisanceOptions, Failure> {
    if let Some(r) = ridge {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Failure::Config(format!("ridge must be a finite non-negative number, got {r}")));
        }
    }
    let mut opts = NuisanceOptions::default();
    opts.cox.ridge = ridge;
    opts.logistic.ridge = ridge;
    Ok(opts)
}

fn run(
    source: &ConfigSource,
    jobs: Option<usize>,
    out: Option<&Path>,
    format: Format,
    replications: Option<usize>,
    signals: Option<&[String]>,
) -> Result<(), Failure> {
    let mut config = load_config(source)?;
    if let Some(r) = replications {
        config.replications = r;
    }
    if let Some(names) = signals {
        config.analysis.signal_kinds = parse_kinds(names)?;
    }
    let table = run_replications_with(&config, jobs)?;
    for f in &table.failures {
        let what = f.signal.map(|k| k.to_string()).unwrap_or_else(|| "replication".into());
        eprintln!("replication {} failed ({what}): {}", f.index, f.reason);
    }
    println!("setup\tsignal\trate\treps\tfailed\tmean_p");
    for r in &table.rows {
        println!(
            "{}\t{}\t{:.3}\t{}\t{}\t{:.3}",
            r.setup, r.signal, r.rejection_rate, r.replications, r.failures, r.mean_p_value
        );
    }
    if let Some(path) = out.map(Path::to_path_buf).or_else(|| config.output_path.clone()) {
        emit_report(&table, format.into(), &path)?;
    }
    Ok(())
}

fn oracle_prop2(draws: usize, seed: u64, allocation: AllocationArg, json: bool) -> Result<(), Failure> {
    if draws < 100_000 {
        eprintln!("warning: fewer than 100000 draws; tolerances are sized for 10^6");
    }
    let allocation = match allocation {
        AllocationArg::Balanced => Allocation::Balanced,
        AllocationArg::Iid => Allocation::Iid,
    };
    let report = prop2_oracle_check(draws, seed, allocation)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?);
        return Ok(());
    }
    let line = |e: &falsify_core::harness::Estimate| {
        println!(
            "{:<12} mean {:>10.6}  se {:.6}  target {:>10.6}  tol {:.3}  {}",
            e.label,
            e.mean,
            e.std_error,
            e.target,
            e.tolerance,
            if e.pass { "PASS" } else { "FAIL" }
        )
    };
    line(&report.ipw_ytilde);
    for e in &report.stratum_means {
        line(e);
    }
    line(&report.cdr);
    println!("draws {} seed {} overall {}", report.draws, report.seed, if report.pass { "PASS" } else { "FAIL" });
    Ok(())
}

fn simulate_cmd(source: &ConfigSource, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    // a bare simulation config is accepted as well as a full experiment
    let (dgp, base_seed) = match load_config(source) {
        Ok(c) => (c.dgp, c.base_seed),
        Err(first) => {
            let Some(path) = &source.config else { return Err(first) };
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            match serde_json::from_str::<DGPConfig>(&text) {
                Ok(d) => {
                    d.validate()?;
                    (d, 0)
                }
                Err(_) => return Err(first),
            }
        }
    };
    let sim = simulate(&dgp, seed.unwrap_or(base_seed))?;
    save_csv(&sim.cohort, out)?;
    eprintln!("wrote {} records to {}", sim.cohort.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn test_cmd(
    cohort: &Path,
    signal: &str,
    alpha: f64,
    bootstrap: usize,
    seed: u64,
    bandwidth: Option<f64>,
    cross_fit: usize,
    strict: bool,
    signals_out: Option<&Path>,
    ridge: Option<f64>,
) -> Result<(), Failure> {
    let kind: SignalKind = signal.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let config = AnalysisConfig {
        signal_kinds: vec![kind],
        kernel: kernel_for(bandwidth),
        bootstrap_b: bootstrap,
        alpha,
        cross_fit_folds: cross_fit,
        policy: if strict { SupportPolicy::Strict } else { SupportPolicy::Clamp },
        nuisance_options: fit_options(ridge)?,
        ..AnalysisConfig::default()
    };
    config.validate()?;
    let cohort = load_csv(cohort)?;
    if let Some(path) = signals_out {
        let sv = cohort_signals(&config, None, &cohort, kind, seed)?;
        let file = File::create(path).map_err(|e| io_failure(path, e))?;
        sv.write_csv(&cohort.covariate_names, BufWriter::new(file))?;
    }
    let (n_trimmed, outcomes) = analyze_cohort(&config, None, &cohort, seed)?;
    match &outcomes[&kind] {
        KindOutcome::Tested { result, clamped } => {
            let sigma = match result.kernel.bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Rule(_) => f64::NAN,
            };
            let summary = serde_json::json!({
                "signal": kind.as_str(),
                "n_records": cohort.len(),
                "n_trimmed": n_trimmed,
                "statistic": result.statistic,
                "p_value": result.p_value,
                "alpha": result.alpha,
                "reject": result.reject,
                "bandwidth": sigma,
                "clamped": clamped,
            });
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.to_string()))?);
            Ok(())
        }
        KindOutcome::Failed { reason } => Err(Failure::Runtime(reason.clone())),
    }
}

struct Axis {
    column: usize,
    values: Vec<f64>,
}

fn parse_grid(spec: &str, names: &[String]) -> Result<Vec<Axis>, Failure> {
    let bad = |msg: String| Failure::Config(format!("bad grid {spec:?}: {msg}"));
    let mut axes = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, range) = part.split_once('=').ok_or_else(|| bad("expected name=lo:hi:steps".into()))?;
        let column = names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| bad(format!("unknown covariate {name}")))?;
        let fields: Vec<&str> = range.split(':').collect();
        let [lo, hi, steps] = fields.as_slice() else {
            return Err(bad("expected lo:hi:steps".into()));
        };
        let lo: f64 = lo.parse().map_err(|_| bad(format!("bad lower bound {lo}")))?;
        let hi: f64 = hi.parse().map_err(|_| bad(format!("bad upper bound {hi}")))?;
        let steps: usize = steps.parse().map_err(|_| bad(format!("bad step count {steps}")))?;
        if steps == 0 || !(hi >= lo) {
            return Err(bad("need steps ≥ 1 and hi ≥ lo".into()));
        }
        let values = if steps == 1 {
            vec![lo]
        } else {
            (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
        };
        axes.push(Axis { column, values });
    }
    if axes.is_empty() {
        return Err(bad("no axes".into()));
    }
    Ok(axes)
}

fn witness_cmd(
    cohort: &Path,
    signal: &str,
    grid: &str,
    out: &Path,
    bandwidth: Option<f64>,
    seed: u64,
    ridge: Option<f64>,
) -> Result<(), Failure> {
    let kind: SignalKind = signal.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let cohort = load_csv(cohort)?;
    let axes = parse_grid(grid, &cohort.covariate_names)?;
    let kernel = kernel_for(bandwidth);
    let config = AnalysisConfig {
        signal_kinds: vec![kind],
        kernel,
        nuisance_options: fit_options(ridge)?,
        ..AnalysisConfig::default()
    };
    let sv = cohort_signals(&config, None, &cohort, kind, seed)?;
    let evaluator = WitnessEvaluator::new(&sv, &kernel)?;
    let d = cohort.dim();
    let base: Vec<f64> = (0..d).map(|j| sv.x_rows.column(j).mean().unwrap_or(0.0)).collect();

    let file = File::create(out).map_err(|e| io_failure(out, e))?;
    let mut w = BufWriter::new(file);
    let write_err = |e: io::Error| io_failure(out, e);
    writeln!(w, "{},witness", cohort.covariate_names.join(",")).map_err(write_err)?;
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut point = base;
    for flat in 0..total {
        let mut rest = flat;
        for axis in axes.iter().rev() {
            point[axis.column] = axis.values[rest % axis.values.len()];
            rest /= axis.values.len();
        }
        let value = evaluator.evaluate(&point);
        let row: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{value}", row.join(",")).map_err(write_err)?;
    }
    w.flush().map_err(write_err)?;
    eprintln!("wrote {total} grid points to {}", out.display());
    Ok(())
}

fn preset_cmd(name: Option<&str>, list: bool, out: Option<&Path>) -> Result<(), Failure> {
    if list || name.is_none() {
        for n in presets::PRESET_NAMES {
            println!("{n}");
        }
        return Ok(());
    }
    let config = presets::preset(name.expect("checked above"))?;
    let text = serde_json::to_string_pretty(&config).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            source,
            jobs,
            out,
            format,
            replications,
            signals,
        } => run(source, *jobs, out.as_deref(), *format, *replications, signals.as_deref()),
        Command::OracleProp2 {
            draws,
            seed,
            allocation,
            json,
        } => oracle_prop2(*draws, *seed, *allocation, *json),
        Command::Simulate { source, out, seed } => simulate_cmd(source, out, *seed),
        Command::Test {
            cohort,
            signal,
            alpha,
            bootstrap,
            seed,
            bandwidth,
            cross_fit,
            strict,
            signals_out,
            ridge,
        } => test_cmd(
            cohort,
            signal,
            *alpha,
            *bootstrap,
            *seed,
            *bandwidth,
            *cross_fit,
            *strict,
            signals_out.as_deref(),
            *ridge,
        ),
        Command::Witness {
            cohort,
            signal,
            grid,
            out,
            bandwidth,
            seed,
            ridge,
        } => witness_cmd(cohort, signal, grid, out, *bandwidth, *seed, *ridge),
        Command::Preset { name, list, out } => preset_cmd(name.as_deref(), *list, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
