use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rateloss::experiments::{self, ExperimentConfig, ExperimentKind, Overrides};
use rateloss::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "rateloss", version, about = "Rate versus generalization-error experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generalization error against training length, with closed form and bounds.
    AsymptoticSweep(RunArgs),
    /// Rates and reconstruction distortion across a distortion grid.
    Tradeoff(RunArgs),
    /// Finite-blocklength rate/loss frontier, CSV plus optional SVG.
    RateLossRegion(RunArgs),
    /// Every module invariant as a JSON pass/fail report.
    PropertySuite(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; omitted keys take the reference-setup defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the SVG plot (rate-loss-region only).
    #[arg(long, overrides_with = "no_plot")]
    plot: bool,
    #[arg(long, overrides_with = "plot")]
    no_plot: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::AsymptoticSweep(a) => (ExperimentKind::AsymptoticSweep, a),
            Command::Tradeoff(a) => (ExperimentKind::Tradeoff, a),
            Command::RateLossRegion(a) => (ExperimentKind::RateLossRegion, a),
            Command::PropertySuite(a) => (ExperimentKind::PropertySuite, a),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'")
}

fn fail(code: &str, exit: u8, message: &str) -> ExitCode {
    eprintln!("error code={code} exit={exit} message=\"{}\"", one_line(message));
    ExitCode::from(exit)
}

fn fail_with(e: &Error) -> ExitCode {
    let exit = if e.is_usage() { EXIT_CONFIG } else { EXIT_NUMERICAL };
    fail(e.code(), exit, &e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail("USAGE_ERROR", EXIT_CONFIG, first);
        }
    };
    let (kind, args) = cli.command.split();

    let overrides = Overrides {
        seed: args.seed,
        output_dir: args.out.clone(),
        plot: match (args.plot, args.no_plot) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        },
    };
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path, kind, &overrides),
        None => ExperimentConfig::resolve(Default::default(), kind, &overrides),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => return fail_with(&e),
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return fail("CONFIG_ERROR", EXIT_CONFIG, "--threads: must be at least 1");
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail("IO_ERROR", EXIT_CONFIG, &format!("cannot start worker threads: {e}")),
    };

    match pool.install(|| experiments::run(&config)) {
        Ok(summary) => {
            for o in &summary.manifest.outputs {
                println!("{}  {}", o.sha256, summary.output_dir.join(&o.file).display());
            }
            println!("manifest {}", summary.output_dir.join(experiments::MANIFEST_FILE).display());
            if summary.invariant_failures > 0 {
                return fail(
                    "INVARIANT_FAILURE",
                    EXIT_INVARIANT,
                    &format!("{} property-suite entries failed", summary.invariant_failures),
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail_with(&e),
    }
}
