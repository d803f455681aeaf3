//! Argument handling and dispatch for the `fedaf` binary.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;
use fedaf_core::datastream::load_dataset;
use fedaf_core::sweep::{export_results, render_csv, run_single, run_sweep};
use fedaf_core::{DataFormat, ExperimentConfig, SweepSpec, SweepTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const THREADS_ENV: &str = "FEDAF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fedaf", version, about = "Federated active forest experiments")]
struct Args {
    /// Airlines-style dataset (ARFF or CSV).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "arff", value_parser = parse_format)]
    format: DataFormat,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    clients: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    rounds: u64,
    /// Fraction of each client's post-seed stream that may be sent to the oracle.
    #[arg(long, default_value_t = 0.10, value_parser = parse_fraction)]
    budget: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    grace: u64,
    #[arg(long, default_value_t = 0.05, value_parser = parse_open_unit)]
    delta: f64,
    #[arg(long = "tie-threshold", default_value_t = 0.05)]
    tie_threshold: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV results file; a `.json` sidecar with per-round series goes next to it.
    /// Without it the table is printed to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep one parameter, e.g. `clients=1,2,3`.
    #[arg(long, value_name = "PARAM=v1,v2,...")]
    sweep: Option<String>,
    /// Write the final forest of the first fold in the forest wire format.
    #[arg(long = "forest-out")]
    forest_out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<DataFormat, String> {
    s.parse().map_err(|e: fedaf_core::Error| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Single(ExperimentConfig),
    Sweep(SweepSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub plan: Plan,
    pub out: Option<PathBuf>,
    pub forest_out: Option<PathBuf>,
}

impl Invocation {
    pub fn base(&self) -> &ExperimentConfig {
        match &self.plan {
            Plan::Single(config) => config,
            Plan::Sweep(spec) => &spec.base,
        }
    }
}

/// Usage errors and `--help` / `--version` requests.
#[derive(Debug)]
pub struct UsageError {
    pub message: String,
    pub exit_code: i32,
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for UsageError {}

impl From<clap::Error> for UsageError {
    fn from(e: clap::Error) -> Self {
        let exit_code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_USAGE,
        };
        UsageError {
            message: e.render().to_string(),
            exit_code,
        }
    }
}

fn usage(message: impl Into<String>) -> UsageError {
    UsageError {
        message: format!("error: {}", message.into()),
        exit_code: EXIT_USAGE,
    }
}

/// `argv[0]` is the program name.
pub fn parse_cli<I, T>(argv: I) -> Result<Invocation, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv)?;
    let config = ExperimentConfig {
        dataset: args.dataset,
        format: args.format,
        clients: args.clients as usize,
        rounds: args.rounds as usize,
        budget: args.budget,
        grace: args.grace as usize,
        delta: args.delta,
        tie_threshold: args.tie_threshold,
        seed: args.seed,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let plan = match args.sweep {
        Some(text) => Plan::Sweep(SweepSpec::parse(&text, config).map_err(|e| usage(e.to_string()))?),
        None => Plan::Single(config),
    };
    if args.forest_out.is_some() && matches!(plan, Plan::Sweep(_)) {
        return Err(usage("--forest-out applies to single runs only"));
    }
    Ok(Invocation {
        plan,
        out: args.out,
        forest_out: args.forest_out,
    })
}

/// Reads `FEDAF_THREADS`; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, UsageError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Loads the dataset and executes the plan. Failed sweep cells are kept in
/// the table.
pub fn execute(invocation: &Invocation) -> fedaf_core::Result<SweepTable> {
    let base = invocation.base();
    let dataset = load_dataset(&base.dataset, base.format)?;
    let table = match &invocation.plan {
        Plan::Single(config) => run_single(&dataset, config),
        Plan::Sweep(spec) => run_sweep(&dataset, spec),
    };
    if let Some(path) = &invocation.forest_out {
        let forest = table
            .rows
            .first()
            .and_then(|r| r.outcome.as_ref().ok())
            .and_then(|c| c.report.folds.first())
            .and_then(|f| f.final_forest.as_ref())
            .ok_or_else(|| fedaf_core::Error::invalid("no forest to dump"))?;
        std::fs::write(path, forest.to_bytes()).map_err(|e| fedaf_core::Error::io(path, e))?;
    }
    match &invocation.out {
        Some(path) => export_results(&table, path)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(render_csv(&table).as_bytes())
                .map_err(|e| fedaf_core::Error::io("<stdout>", e))?;
        }
    }
    Ok(table)
}

/// Full command: parse, configure the thread pool, run. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let invocation = match parse_cli(argv).and_then(|inv| thread_cap().map(|cap| (inv, cap))) {
        Ok((inv, cap)) => {
            if let Some(n) = cap {
                // Fails only if a pool already exists, e.g. a second call in one process.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            inv
        }
        Err(e) => {
            if e.exit_code == EXIT_OK {
                print!("{e}");
            } else {
                eprint!("{e}");
                if !e.message.ends_with('\n') {
                    eprintln!();
                }
            }
            return e.exit_code;
        }
    };
    match execute(&invocation) {
        Ok(table) => {
            let failed: Vec<_> = table.rows.iter().filter_map(|r| r.outcome.as_ref().err()).collect();
            for message in &failed {
                eprintln!("cell failed: {message}");
            }
            if failed.len() == table.rows.len() {
                EXIT_RUNTIME
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
