//! `ergo-growth`: simulate multiplicative income growth, estimate growth
//! rates from quantile data, and run the finite-population study.
//!
//! Exit status: 0 on success, 1 on runtime errors, 2 on usage errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ergo_growth::data_io::{
    build_series_report, emit_report_with_config, load_quantile_csv, Format, PanelSummary, Report, RunConfig,
};
use ergo_growth::finite_n::{
    democratic_closeness_fraction_mc, democratic_closeness_grid, plutocratic_closeness_fraction, Preset,
};
use ergo_growth::quantile::{truncation_sweep, Basis};
use ergo_growth::{simulate_trajectories, uniform_grid, GbmParams, InitialDistribution, RandomSource, Scheme};

#[derive(Parser)]
#[command(
    name = "ergo-growth",
    version,
    about = "Ensemble-average versus time-average income growth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population of incomes under geometric Brownian motion.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Per-year levels and growth rates from a quantile CSV file.
    #[command(allow_negative_numbers = true)]
    Estimate(EstimateArgs),
    /// How often finite-population growth rates land near their limits.
    #[command(name = "finite-n", allow_negative_numbers = true)]
    FiniteN(FiniteNArgs),
    /// Cumulative GDP and DDP growth for every bottom-truncation percentile.
    TruncationSweep(SweepArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; `-` writes to stdout.
    #[arg(long, value_name = "PATH", default_value = "-")]
    out: PathBuf,
    /// Output format [default: from the --out extension, else csv].
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// Drift, per year.
    #[arg(long, default_value_t = 0.05, value_parser = finite)]
    mu: f64,
    /// Volatility, per square-root year.
    #[arg(long, default_value_t = 0.2, value_parser = non_negative)]
    sigma: f64,
    /// Population size.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Simulated horizon, years.
    #[arg(long, default_value_t = 50.0, value_parser = positive)]
    years: f64,
    /// Observation interval, years.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    dt: f64,
    /// Integration scheme.
    #[arg(long, value_enum, default_value_t = SchemeArg::Exact)]
    scheme: SchemeArg,
    /// Euler sub-steps per observation interval (euler scheme only).
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    substeps: u32,
    /// Common starting income, currency/year. Ignored if --sdlog is given.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    x0: f64,
    /// Mean of log starting income (lognormal start, with --sdlog).
    #[arg(long, default_value_t = 0.0, value_parser = finite, requires = "sdlog")]
    meanlog: f64,
    /// Standard deviation of log starting income; selects a lognormal start.
    #[arg(long, value_parser = non_negative)]
    sdlog: Option<f64>,
    /// Write per-time GDP, DDP, gap and top-10% share instead of trajectories.
    #[arg(long)]
    summary: bool,
    /// Random seed [default: generated and printed to stderr].
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SchemeArg {
    Exact,
    Euler,
}

#[derive(Args)]
struct EstimateArgs {
    /// Quantile CSV (columns year,quantile,average,lower,upper[,concept]).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Fraction of the population removed from the bottom before estimation.
    #[arg(long, default_value_t = 0.10, value_parser = fraction)]
    truncate: f64,
    /// Which per-quantile value stands in for the incomes of a quantile.
    #[arg(long, value_enum, default_value_t = BasisArg::Average)]
    basis: BasisArg,
    /// Year whose levels are indexed to 100 [default: first year].
    #[arg(long)]
    anchor_year: Option<i32>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Average,
    Lower,
    Upper,
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Average => Basis::Average,
            BasisArg::Lower => Basis::Lower,
            BasisArg::Upper => Basis::Upper,
        }
    }
}

#[derive(Args)]
struct FiniteNArgs {
    /// Axes and repetitions: desk (minutes) or full (hours).
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    /// Statistic to tabulate.
    #[arg(long, value_enum, default_value_t = MeasureArg::Plutocratic)]
    measure: MeasureArg,
    /// Drift, per year.
    #[arg(long, default_value_t = 0.02, value_parser = finite)]
    mu: f64,
    /// Length of the single simulated step, years.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    dt: f64,
    /// Comma-separated variances sigma^2, per year, overriding the preset axis.
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    sigma2: Option<Vec<f64>>,
    /// Comma-separated population sizes, overriding the preset axis.
    #[arg(long = "n-values", value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    n_values: Option<Vec<u64>>,
    /// Repetitions per cell, overriding the preset.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: Option<u64>,
    /// Mean of log starting income.
    #[arg(long, default_value_t = 10_000f64.ln(), value_parser = finite)]
    meanlog: f64,
    /// Standard deviation of log starting income.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    sdlog: f64,
    /// Random seed [default: generated and printed to stderr].
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Full,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MeasureArg {
    /// Fraction of runs with ensemble-average rate nearer mu (Monte Carlo).
    Plutocratic,
    /// Closed-form probability that the time-average rate is nearer mu - sigma^2/2.
    Democratic,
    /// Monte Carlo estimate of the same probability.
    DemocraticMc,
}

#[derive(Args)]
struct SweepArgs {
    /// Percentile CSV (Q = 100) with at least two years.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn finite(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err("must be > 0".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err("must be >= 0".into())
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    let x = finite(s)?;
    if (0.0..1.0).contains(&x) {
        Ok(x)
    } else {
        Err("must lie in [0, 1)".into())
    }
}

type Outcome = Result<(), Box<dyn std::error::Error>>;

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let seed = (nanos as u64) ^ ((nanos >> 64) as u64);
        eprintln!("seed: {seed}");
        seed
    })
}

fn name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

fn config(command: &str, entries: &[(&str, String)]) -> RunConfig {
    let mut c = RunConfig::new();
    c.insert("command".into(), command.into());
    c.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    for (k, v) in entries {
        c.insert((*k).into(), v.clone());
    }
    c
}

fn write_output<R: Report>(report: &R, output: &OutputArgs, config: &RunConfig) -> Outcome {
    let format = match output.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => Format::from_path(&output.out).unwrap_or_default(),
    };
    if output.out == Path::new("-") {
        emit_report_with_config(report, format, config, io::stdout().lock())?;
    } else {
        // Render first so a failed run leaves no partial file behind.
        let mut buf = Vec::new();
        emit_report_with_config(report, format, config, &mut buf)?;
        let mut file = BufWriter::new(File::create(&output.out)?);
        file.write_all(&buf)?;
        file.flush()?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let seed = resolve_seed(a.seed);
    let steps = (a.years / a.dt).round();
    let initial = match a.sdlog {
        Some(sdlog) => InitialDistribution::Lognormal {
            meanlog: a.meanlog,
            sdlog,
        },
        None => InitialDistribution::Degenerate { x0: a.x0 },
    };
    let scheme = match a.scheme {
        SchemeArg::Exact => Scheme::Exact,
        SchemeArg::Euler => Scheme::Euler { substeps: a.substeps },
    };
    let params = GbmParams::new(a.mu, a.sigma)?;
    let grid = uniform_grid(a.dt, steps as usize);
    let panel = simulate_trajectories(
        params,
        a.n as usize,
        &grid,
        &mut RandomSource::new(seed),
        scheme,
        initial,
    )?;
    let mut entries = vec![
        ("mu", a.mu.to_string()),
        ("sigma", a.sigma.to_string()),
        ("n", a.n.to_string()),
        ("years", a.years.to_string()),
        ("dt", a.dt.to_string()),
        ("scheme", name(&a.scheme)),
        ("seed", seed.to_string()),
    ];
    match initial {
        InitialDistribution::Degenerate { x0 } => entries.push(("x0", x0.to_string())),
        InitialDistribution::Lognormal { meanlog, sdlog } => {
            entries.push(("meanlog", meanlog.to_string()));
            entries.push(("sdlog", sdlog.to_string()));
        }
    }
    if a.scheme == SchemeArg::Euler {
        entries.push(("substeps", a.substeps.to_string()));
    }
    let config = config("simulate", &entries);
    if a.summary {
        write_output(&PanelSummary::from_panel(&panel)?, &a.output, &config)
    } else {
        write_output(&panel, &a.output, &config)
    }
}

fn estimate(a: &EstimateArgs) -> Outcome {
    let tables = load_quantile_csv(File::open(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?)
        .map_err(|e| format!("{}: {e}", a.input.display()))?;
    let report = build_series_report(&tables, a.truncate, a.basis.into(), a.anchor_year)?;
    let config = config(
        "estimate",
        &[
            ("input", a.input.display().to_string()),
            ("truncate", a.truncate.to_string()),
            ("basis", name(&a.basis)),
            ("anchor_year", report.anchor_year.to_string()),
        ],
    );
    write_output(&report, &a.output, &config)
}

fn finite_n(a: &FiniteNArgs) -> Outcome {
    let preset = match a.preset {
        PresetArg::Desk => Preset::desk(),
        PresetArg::Full => Preset::full(),
    };
    let sigma_axis = match &a.sigma2 {
        Some(v) => v.iter().map(|s2| s2.sqrt()).collect(),
        None => preset.sigma_axis,
    };
    let n_axis = a.n_values.clone().unwrap_or(preset.n_axis);
    let reps = a.reps.unwrap_or(preset.reps);
    let initial = InitialDistribution::Lognormal {
        meanlog: a.meanlog,
        sdlog: a.sdlog,
    };
    let list = |v: Vec<String>| v.join(",");
    let mut entries = vec![
        ("preset", name(&a.preset)),
        ("measure", name(&a.measure)),
        ("mu", a.mu.to_string()),
        ("dt", a.dt.to_string()),
        ("sigma", list(sigma_axis.iter().map(|s: &f64| s.to_string()).collect())),
        ("n_values", list(n_axis.iter().map(u64::to_string).collect())),
        ("meanlog", a.meanlog.to_string()),
        ("sdlog", a.sdlog.to_string()),
    ];
    let grid = if a.measure == MeasureArg::Democratic {
        democratic_closeness_grid(a.mu, &sigma_axis, &n_axis, a.dt)?
    } else {
        let seed = resolve_seed(a.seed);
        entries.push(("seed", seed.to_string()));
        entries.push(("reps", reps.to_string()));
        let mut rng = RandomSource::new(seed);
        let run = if a.measure == MeasureArg::Plutocratic {
            plutocratic_closeness_fraction
        } else {
            democratic_closeness_fraction_mc
        };
        run(a.mu, &sigma_axis, &n_axis, reps, a.dt, initial, &mut rng)?
    };
    write_output(&grid, &a.output, &config("finite-n", &entries))
}

fn sweep(a: &SweepArgs) -> Outcome {
    let tables = load_quantile_csv(File::open(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?)
        .map_err(|e| format!("{}: {e}", a.input.display()))?;
    let result = truncation_sweep(&tables)?;
    write_output(
        &result,
        &a.output,
        &config("truncation-sweep", &[("input", a.input.display().to_string())]),
    )
}

/// Checks that span several flags; single values are checked while parsing.
fn validate(cli: &Cli) -> Result<(), String> {
    match &cli.command {
        Command::Simulate(a) => {
            let steps = (a.years / a.dt).round();
            if steps < 1.0 || (steps * a.dt - a.years).abs() > 1e-9 * a.years {
                return Err(format!(
                    "--years {} is not a whole number of --dt {} intervals",
                    a.years, a.dt
                ));
            }
        }
        Command::FiniteN(a) => {
            if let Some(v) = &a.sigma2 {
                if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("--sigma2 values must be strictly increasing".into());
                }
            }
            if let Some(v) = &a.n_values {
                if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("--n-values must be strictly increasing".into());
                }
            }
        }
        Command::Estimate(_) | Command::TruncationSweep(_) => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse().and_then(|cli| {
        validate(&cli).map_err(|m| Cli::command().error(ErrorKind::ValueValidation, m))?;
        Ok(cli)
    }) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::FiniteN(a) => finite_n(a),
        Command::TruncationSweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
