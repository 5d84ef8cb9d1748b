//! Command-line interface: fit real datasets, run the Monte Carlo study,
//! and emit product-limit curves.
//!
//! Exit codes: 0 on success, 2 on argument or data errors, 3 on estimation
//! failures. `CENSIM_THREADS` caps the simulation worker pool; reports are
//! byte-identical for any pool size.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use censim::dataset;
use censim::error::Error;
use censim::estimate::{fit, FitConfig, FitResult, Method};
use censim::simulate::{calibrate_censoring, run_monte_carlo, ConfigId, MseReport, SimulationConfig};
use censim::smooth::BandwidthRule;
use censim::survival::{km_fit, KmTarget};

#[derive(Parser)]
#[command(name = "censim", version, about = "Censored single-index regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the index direction on a CSV dataset (header t,delta,x1,...,xd).
    Fit(FitArgs),
    /// Run the Monte Carlo study on a built-in configuration.
    Simulate(SimulateArgs),
    /// Emit a product-limit curve as CSV rows time,cdf.
    Km(KmArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input dataset path.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Wls)]
    method: MethodArg,
    /// Bandwidth constant c_h in h = c_h s (log n / n)^{1/5}.
    #[arg(long = "bandwidth-const", default_value_t = 1.0)]
    bandwidth_const: f64,
    /// Density-trimming threshold as a fraction of the peak index density.
    #[arg(long = "trim-frac", default_value_t = 0.1)]
    trim_frac: f64,
    /// Seed for the optimizer restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FitOutputFormat::Json)]
    output: FitOutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Configuration number: 1, 2 or 3.
    #[arg(long)]
    config: u8,
    /// Censoring parameter: uniform upper bound (config 1) or exponential
    /// rate (configs 2 and 3).
    #[arg(long = "cens-param", conflicts_with = "cens_target")]
    cens_param: Option<f64>,
    /// Target censoring fraction in (0,1); the parameter is calibrated by
    /// bisection on pilot draws.
    #[arg(long = "cens-target")]
    cens_target: Option<f64>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimators to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Wls, MethodArg::Sd])]
    methods: Vec<MethodArg>,
    #[arg(long = "bandwidth-const", default_value_t = 1.0)]
    bandwidth_const: f64,
    #[arg(long = "trim-frac", default_value_t = 0.1)]
    trim_frac: f64,
    #[arg(long, value_enum, default_value_t = SimOutputFormat::Table)]
    output: SimOutputFormat,
}

#[derive(Args)]
struct KmArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TargetArg::Event)]
    target: TargetArg,
    #[arg(long, value_enum, default_value_t = KmOutputFormat::Csv)]
    output: KmOutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Wls,
    Sd,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Method {
        match value {
            MethodArg::Wls => Method::Wls,
            MethodArg::Sd => Method::Sd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Event,
    Censoring,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitOutputFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimOutputFormat {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KmOutputFormat {
    Csv,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Km(args) => cmd_km(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("censim: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Data and argument problems exit 2; estimation failures exit 3.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Dataset { .. } | Error::Io(_) | Error::InvalidInput(_) | Error::EmptySample => 2,
        _ => 3,
    }
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("CENSIM_THREADS") {
        if let Ok(threads) = raw.trim().parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    standard_errors: Vec<f64>,
    trimmed_fraction: f64,
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let sample = dataset::read_csv(&args.input)?;
    let config = FitConfig {
        bandwidth: BandwidthRule::new(args.bandwidth_const),
        trim_fraction: args.trim_frac,
        seed: args.seed,
        ..FitConfig::default()
    };
    let result = fit(&sample, args.method.into(), &config)?;
    let out = FitOutput {
        standard_errors: result.standard_errors(),
        trimmed_fraction: result.trimmed_fraction(),
        result: &result,
    };
    match args.output {
        FitOutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"))
        }
        FitOutputFormat::Table => print_fit_table(&result),
    }
    Ok(())
}

fn print_fit_table(result: &FitResult) {
    println!("{:<16}{}", "method", result.method.name());
    println!("{:<16}{}", "n", result.n);
    print!("{:<16}", "theta-hat");
    for v in result.theta_hat.as_slice() {
        print!("{v} ");
    }
    println!();
    print!("{:<16}{:<8}", "se", "-");
    for se in result.standard_errors() {
        print!("{se} ");
    }
    println!();
    println!("{:<16}{}", "criterion", result.criterion_value);
    println!("{:<16}{}", "bandwidth", result.bandwidth);
    println!("{:<16}{}", "censoring", result.censoring_fraction);
    println!("{:<16}{}", "trimmed", result.trimmed_fraction());
    println!("{:<16}{}", "defect-mass", result.defect_mass);
    println!("{:<16}{}", "converged", result.converged);
    println!("{:<16}{}", "evaluations", result.evaluations);
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let config_id = ConfigId::from_index(args.config)?;
    let censoring_param = match (args.cens_param, args.cens_target) {
        (Some(p), None) => p,
        (None, Some(target)) => calibrate_censoring(config_id, target, args.seed)?,
        (None, None) => {
            return Err(Error::InvalidInput(
                "provide either --cens-param or --cens-target".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if args.n.is_empty() {
        return Err(Error::InvalidInput("no sample sizes given".into()));
    }

    let mut reports = Vec::with_capacity(args.n.len());
    for &n in &args.n {
        let config = SimulationConfig {
            config_id,
            censoring_param,
            n,
            replications: args.reps,
            seed: args.seed,
            methods: args.methods.iter().copied().map(Method::from).collect(),
            bandwidth_constant: args.bandwidth_const,
            trim_fraction: args.trim_frac,
        };
        reports.push(run_monte_carlo(&config)?);
    }

    match args.output {
        SimOutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&reports).expect("serializable"))
        }
        SimOutputFormat::Table => print_simulation_table(&reports),
    }
    Ok(())
}

/// Aligned metrics table: one column per sample size, methods as rows,
/// matching the layout of the study this reproduces.
fn print_simulation_table(reports: &[MseReport]) {
    let first = &reports[0];
    println!(
        "config {}   censoring-param {}   reps {}   seed {}   bandwidth-const {}   trim-frac {}",
        first.config_id,
        first.censoring_param,
        first.replications,
        first.seed,
        first.bandwidth_constant,
        first.trim_fraction,
    );
    print!("{:<14}{:<8}", "metric", "method");
    for report in reports {
        print!("{:>18}", format!("n={}", report.n));
    }
    println!();

    type Renderer = fn(&censim::simulate::MethodSummary) -> String;
    let metrics: [(&str, Renderer); 6] = [
        ("mse", |m| format!("{:.6e}", m.mse)),
        ("mc-se", |m| format!("{:.6e}", m.mse_standard_error)),
        ("median-error", |m| format!("{:.6e}", m.median_error)),
        ("censoring", |m| format!("{:.4}", m.mean_censoring_fraction)),
        ("trimmed", |m| format!("{:.4}", m.mean_trimmed_fraction)),
        ("failures", |m| format!("{}", m.failures)),
    ];
    let n_methods = first.methods.len();
    for (name, render) in metrics {
        for k in 0..n_methods {
            print!("{:<14}{:<8}", name, first.methods[k].method.name());
            for report in reports {
                print!("{:>18}", render(&report.methods[k]));
            }
            println!();
        }
    }
}

fn cmd_km(args: KmArgs) -> Result<(), Error> {
    let sample = dataset::read_csv(&args.input)?;
    let target = match args.target {
        TargetArg::Event => KmTarget::Event,
        TargetArg::Censoring => KmTarget::Censoring,
    };
    let curve = km_fit(&sample, target)?;
    if curve.jump_times().is_empty() {
        eprintln!("censim: warning: no jumps (every observation lies on the other side)");
    }
    let KmOutputFormat::Csv = args.output;
    let mut cum = 0.0;
    for (time, mass) in curve.jumps() {
        cum += mass;
        println!("{time},{cum:.10}");
    }
    Ok(())
}
