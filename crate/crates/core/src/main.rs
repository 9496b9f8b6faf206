use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use inclusion_pd::harness::{
    cmd_moment_compare, cmd_partition_tv, cmd_simulate, cmd_sweep, cmd_verify, write_sweep_csv,
    ExperimentConfig, Fault, ResultRecord, VerifyOptions,
};
use inclusion_pd::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "inclusion-pd", version, about = "Inclusion process versus Dirichlet process: exact oracles, Monte Carlo and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CorruptStationaryWeight,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suites and print a per-suite table.
    Verify {
        /// Only run suites whose name contains this string.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        /// Write the full report, including failing cases, as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Compare E h(W) with E h(Z) and with the moment bound.
    MomentCompare {
        #[arg(long)]
        config: PathBuf,
        /// Directory for result.json and results.csv (default: the config's
        /// output field, else the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Total-variation distance between sampling-partition laws.
    PartitionTv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moment comparison over N with L = round(N/theta); CSV on stdout.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<u32>,
        /// Also write the CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulator from the balanced configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        events: u64,
        /// Write every event as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::TooLarge { .. }
        | Error::OrderCap { .. }
        | Error::MismatchedN(..)
        | Error::Json(_)
        | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_VIOLATION,
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_USAGE)
    })
}

fn finish_record(record: ResultRecord, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let dir = out
        .or_else(|| record.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    record.persist(&dir)?;
    println!(
        "{} N={} L={} theta={} order={} method={} estimate={:.6e} se={:.3e} bound={:.6e} pass={}{}",
        record.experiment,
        record.bound.particles,
        record.bound.sites,
        record.bound.theta,
        record.order(),
        record.config.method.name(),
        record.estimate,
        record.standard_error,
        record.bound.total,
        record.pass,
        if record.gated { "" } else { " (informative)" }
    );
    Ok(if record.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let report_err = |e: Error| {
        eprintln!("error: {e}");
        ExitCode::from(exit_for(&e))
    };
    match cli.command {
        Command::Verify {
            suite,
            seed,
            report,
            inject_fault,
        } => {
            let opts = VerifyOptions {
                suite,
                fault: inject_fault.map(|FaultArg::CorruptStationaryWeight| Fault::CorruptStationaryWeight),
                seed,
            };
            let r = cmd_verify(&opts).map_err(report_err)?;
            print!("{}", r.table());
            for f in r.failures() {
                eprintln!("FAIL {}: {}", f.name, serde_json::to_string(&f.failure).unwrap_or_default());
            }
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&r).map_err(|e| report_err(e.into()))?;
                std::fs::write(path, json).map_err(|e| report_err(e.into()))?;
            }
            Ok(if r.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            })
        }
        Command::MomentCompare { config, out } => {
            let c = load(&config)?;
            let r = cmd_moment_compare(&c).map_err(report_err)?;
            finish_record(r, out).map_err(report_err)
        }
        Command::PartitionTv { config, out } => {
            let c = load(&config)?;
            let r = cmd_partition_tv(&c).map_err(report_err)?;
            finish_record(r, out).map_err(report_err)
        }
        Command::Sweep { config, ns, out } => {
            let c = load(&config)?;
            let rows = cmd_sweep(&c, &ns).map_err(report_err)?;
            write_sweep_csv(io::stdout().lock(), &rows).map_err(report_err)?;
            if let Some(path) = out {
                let file = File::create(path).map_err(|e| report_err(e.into()))?;
                write_sweep_csv(file, &rows).map_err(report_err)?;
            }
            Ok(if rows.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            })
        }
        Command::Simulate { config, events, trace } => {
            let c = load(&config)?;
            let s = cmd_simulate(&c, events, trace.as_deref()).map_err(report_err)?;
            let json = serde_json::to_string(&s).map_err(|e| report_err(e.into()))?;
            writeln!(io::stdout(), "{json}").map_err(|e| report_err(e.into()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) | Err(code) => code,
    }
}
