mod resolve;
mod run;
mod svg;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hybridmac_core::config::{GridChoice, VariantChoice};
use hybridmac_core::metrics::EnergyAccounting;
use hybridmac_core::validate;

/// Simulator, analytical model and optimizer for a hybrid
/// contention/reservation MAC.
///
/// Without a mode flag the scenario is optimized and simulated and the
/// results are written to the output directory.
#[derive(Debug, Parser)]
#[command(name = "hybridmac", version)]
pub struct Args {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Protocols to run.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<VariantChoice>,

    /// Frames per run after the warm-up frame.
    #[arg(long)]
    pub frames: Option<usize>,

    /// Comma-separated seed list, e.g. `1,2,3` or a range `1..=10`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedList>,

    /// Grid sweep, e.g. `alpha=0.5,1,p_inl=0.1,0.2,lambda=1,2,k=500,800`.
    #[arg(long)]
    pub sweep: Option<String>,

    /// Simulate every sweep cell (implied when the variant is not hybrid).
    #[arg(long)]
    pub simulate: bool,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Plan file to use instead of running the optimizer.
    #[arg(long)]
    pub plan: Option<PathBuf>,

    /// Write per-event trace CSVs.
    #[arg(long)]
    pub trace: bool,

    /// Also write SVG line charts.
    #[arg(long)]
    pub svg: bool,

    /// Print the resolved scenario and exit.
    #[arg(long)]
    pub print_config: bool,

    /// Run the validation suite and exit.
    #[arg(long)]
    pub validate: bool,

    /// Packet arrival rate per device, packets per second.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Incremental indicator.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Initial contending probability.
    #[arg(long)]
    pub p_inl: Option<f64>,

    /// Class sizes, highest index is the highest priority, e.g. `1180,10,10`.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<u64>>,

    /// Transmit probability of the CSMA baseline.
    #[arg(long)]
    pub csma_p: Option<f64>,

    /// Optimizer search lattice.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridChoice>,

    /// Energy accounting convention for frame CSVs and the summary.
    #[arg(long, value_enum, default_value_t = Accounting::Physical)]
    pub accounting: Accounting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Accounting {
    Physical,
    PerEvent,
    SleepingLosers,
}

impl From<Accounting> for EnergyAccounting {
    fn from(a: Accounting) -> Self {
        match a {
            Accounting::Physical => EnergyAccounting::Physical,
            Accounting::PerEvent => EnergyAccounting::PerEvent,
            Accounting::SleepingLosers => EnergyAccounting::SleepingLosers,
        }
    }
}

fn parse_variant(s: &str) -> Result<VariantChoice, String> {
    s.parse().map_err(|e: hybridmac_core::Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<GridChoice, String> {
    match s {
        "table" => Ok(GridChoice::Table),
        "extended" => Ok(GridChoice::Extended),
        _ => Err(format!("unknown grid `{s}` (expected table or extended)")),
    }
}

#[derive(Clone, Debug)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    parse_seed_values(s).map(SeedList)
}

fn parse_seed_values(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| s.to_string())?, b.trim().parse().map_err(|_| s.to_string())?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| format!("bad seed `{t}`"))).collect()
}

/// A failure with its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

/// Sorts core errors into configuration and runtime failures.
impl From<hybridmac_core::Error> for Failure {
    fn from(e: hybridmac_core::Error) -> Self {
        use hybridmac_core::Error::*;
        match e {
            InvalidConfig(_) | Parse(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn workers() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HYBRIDMAC_WORKERS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(anyhow::anyhow!("HYBRIDMAC_WORKERS={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::Runtime(e.into()))
}

fn execute(args: Args) -> Result<(), Failure> {
    if args.validate {
        let outcomes = validate::run_all();
        for o in &outcomes {
            println!("{:<24} {:<4} {}", o.name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        }
        let failed = outcomes.iter().filter(|o| !o.passed).count();
        return if failed == 0 {
            Ok(())
        } else {
            Err(Failure::Runtime(anyhow::anyhow!("{failed} validation check(s) failed")))
        };
    }
    let resolved = resolve::resolve(&args)?;
    if args.print_config {
        print!("{}", resolved.scenario.to_toml_string()?);
        return Ok(());
    }
    let pool = workers()?;
    pool.install(|| match &resolved.scenario.sweep {
        Some(axes) if args.sweep.is_some() || !axes.is_empty() => sweep::sweep(&args, &resolved, axes),
        _ => run::run(&args, &resolved),
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
