use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geogossip::config::ExperimentConfig;
use geogossip::engine::Algorithm;
use geogossip::experiment::{run_to_output, sweep, SweepSpec};
use geogossip::fit::fit_scaling;
use geogossip::geometry::sample_points;
use geogossip::hierarchy::build_hierarchy;
use geogossip::verify::kernel_verify;

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_FAULTS: u8 = 3;

#[derive(Parser)]
#[command(name = "geogossip", version, about = "Hierarchical geographic gossip simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its metrics CSV.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run every (algorithm, n, seed) combination and write one merged CSV.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Comma-separated algorithms; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
    },
    /// Fit transmission scaling exponents from one or more CSVs.
    Fit {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        target: f64,
    },
    /// Check the affine kernel against its exact and Monte Carlo bounds.
    KernelVerify {
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the square hierarchy for a placement.
    DumpHierarchy {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Leaf threshold; defaults to (ln n)^8.
        #[arg(long)]
        tau: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn load(&self, mut forced: Vec<(String, String)>) -> Result<ExperimentConfig, String> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        if let Some(a) = &self.algorithm {
            overrides.push(("algorithm".to_string(), a.clone()));
        }
        if let Some(o) = &self.output {
            overrides.push(("output".to_string(), o.display().to_string()));
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        overrides.append(&mut forced);
        ExperimentConfig::parse(&text, &overrides).map_err(|e| e.to_string())
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { run, seed, n } => {
            let mut forced = vec![("seed".to_string(), seed.to_string())];
            if let Some(n) = n {
                forced.push(("n".to_string(), n.to_string()));
            }
            let cfg = match run.load(forced) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match run_to_output(&cfg) {
                Ok(summary) => {
                    eprintln!("{summary}");
                    if summary.fault_limit_exceeded {
                        return ExitCode::from(EXIT_FAULTS);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Command::Sweep { run, sizes, seeds, algorithms } => {
            if sizes.iter().any(|&n| n < 2) {
                return fail(EXIT_CONFIG, "every size must be at least 2");
            }
            let forced = vec![
                ("n".to_string(), sizes[0].to_string()),
                ("seed".to_string(), seeds[0].to_string()),
            ];
            let base = match run.load(forced) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let algorithms = if algorithms.is_empty() {
                vec![base.algorithm]
            } else {
                match algorithms.iter().map(|a| a.parse()).collect::<Result<Vec<Algorithm>, _>>() {
                    Ok(a) => a,
                    Err(e) => return fail(EXIT_CONFIG, e),
                }
            };
            let output = base.output.clone();
            let spec = SweepSpec { base, algorithms, sizes, seeds };
            let result = match &output {
                Some(path) => match File::create(path) {
                    Ok(f) => sweep(&spec, BufWriter::new(f)),
                    Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", path.display())),
                },
                None => sweep(&spec, std::io::stdout().lock()),
            };
            match result {
                Ok(summaries) => {
                    for s in &summaries {
                        eprintln!("{s}");
                    }
                    if summaries.iter().any(|s| s.fault_limit_exceeded) {
                        return ExitCode::from(EXIT_FAULTS);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Command::Fit { files, target } => {
            let mut all = Vec::new();
            for path in &files {
                let read = File::open(path).and_then(|mut f| f.read_to_end(&mut all));
                if let Err(e) = read {
                    return fail(EXIT_CONFIG, format!("{}: {e}", path.display()));
                }
                if !all.ends_with(b"\n") {
                    all.push(b'\n');
                }
            }
            match fit_scaling(all.as_slice(), target) {
                Ok(report) => {
                    print!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Command::KernelVerify { trials, seed } => match kernel_verify(trials, seed) {
            Ok(report) => {
                print!("{report}");
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_VERIFY)
                }
            }
            Err(e) => fail(EXIT_VERIFY, e),
        },
        Command::DumpHierarchy { n, seed, tau } => {
            let points = match sample_points(n, seed) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let tau = tau.unwrap_or_else(|| geogossip::hierarchy::default_threshold(n));
            match build_hierarchy(&points, tau) {
                Ok(h) => {
                    print!("{}", h.dump());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
    }
}
