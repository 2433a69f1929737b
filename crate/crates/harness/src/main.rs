use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapefit::altmin::AltMinOptions;
use shapefit::convex::SolverOptions;
use shapefit::dictionary::DictLearnOptions;
use shapefit_harness::benchmark::{far_from_mean_benchmark, write_benchmark, BenchmarkConfig};
use shapefit_harness::evaluate::run_evaluate;
use shapefit_harness::formats::{read_dictionary, read_landmarks};
use shapefit_harness::learn::{run_learn_dict, DEFAULT_BETA, DEFAULT_K};
use shapefit_harness::methods::{reconstruct, Method, MethodOptions};
use shapefit_harness::phase::{run_phase_transition, PhaseConfig};
use shapefit_harness::{HarnessError, Result};

/// Single-image 3D shape reconstruction from 2D landmarks.
#[derive(Parser)]
#[command(name = "shapefit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight of the sparsity penalty.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// ADMM stopping tolerance [default: 1e-4; 1e-7 for simulate]
    #[arg(long)]
    tol: Option<f64>,
    /// ADMM iteration cap [default: 500; 5000 for simulate]
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Output file (a directory for `simulate --kind benchmark`).
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn solver(&self, defaults: SolverOptions) -> SolverOptions {
        SolverOptions {
            lambda: self.lambda,
            tolerance: self.tol.unwrap_or(defaults.tolerance),
            max_iterations: self.max_iter.unwrap_or(defaults.max_iterations),
            ..defaults
        }
    }

    fn methods(&self) -> MethodOptions {
        MethodOptions {
            convex: self.solver(SolverOptions::default()),
            altmin: AltMinOptions::default(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimulateKind {
    /// Exact-recovery frequency grid (CSV).
    Phase,
    /// Far-from-mean evaluation dataset (directory).
    Benchmark,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-recovery grid or write a synthetic evaluation dataset.
    Simulate {
        #[arg(long, value_enum, default_value = "phase")]
        kind: SimulateKind,
        #[arg(long = "p-list", value_delimiter = ',', default_values_t = PhaseConfig::default().p_list)]
        p_list: Vec<usize>,
        #[arg(long = "z-list", value_delimiter = ',', default_values_t = PhaseConfig::default().z_list)]
        z_list: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Number of items for `--kind benchmark`.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct one shape from a landmark file.
    Solve {
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value = "convex")]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Score methods against ground truth over a dataset directory.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "convex,altmin,altmin_warm")]
        methods: Vec<Method>,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a shape dictionary from a directory of `x,y,z` shape files.
    LearnDict {
        #[arg(long)]
        shapes: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        /// Alternation cap.
        #[arg(long, default_value_t = 100)]
        alternations: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            kind,
            p_list,
            z_list,
            k,
            trials,
            instances,
            common,
        } => match kind {
            SimulateKind::Phase => {
                let config = PhaseConfig {
                    p_list,
                    z_list,
                    k,
                    trials,
                    seed: common.seed,
                    solver: common.solver(PhaseConfig::default().solver),
                };
                let rows = run_phase_transition(&config, &common.out)?;
                let perfect = rows.iter().filter(|r| r.frequency == 1.0).count();
                println!("{} cells, {perfect} with full recovery", rows.len());
            }
            SimulateKind::Benchmark => {
                let bench = far_from_mean_benchmark(&BenchmarkConfig {
                    instances,
                    seed: common.seed,
                    ..Default::default()
                })?;
                write_benchmark(&bench, &common.out)?;
                println!("{} items", bench.items.len());
            }
        },
        Command::Solve {
            landmarks,
            dict,
            method,
            common,
        } => {
            let dictionary = read_dictionary(&dict)?;
            let w = read_landmarks(&landmarks)?;
            if w.len() != dictionary.num_landmarks() {
                return Err(shapefit::Error::LandmarkCountMismatch {
                    expected: dictionary.num_landmarks(),
                    found: w.len(),
                }
                .into());
            }
            let result = reconstruct(method, &w, &dictionary, &common.methods())?;
            std::fs::write(&common.out, result.to_json())
                .map_err(|e| HarnessError::Io {
                    path: common.out.clone(),
                    source: e,
                })?;
        }
        Command::Evaluate {
            dataset,
            dict,
            methods,
            common,
        } => {
            let table = run_evaluate(&dataset, &dict, &methods, &common.methods(), &common.out)?;
            for m in &table.methods {
                match table.mean(*m) {
                    Some(e) => println!("{m}: mean error {e:.6}"),
                    None => println!("{m}: no scored items"),
                }
            }
        }
        Command::LearnDict {
            shapes,
            k,
            beta,
            alternations,
            common,
        } => {
            let opts = DictLearnOptions {
                max_iterations: alternations,
                seed: common.seed,
                ..Default::default()
            };
            let report = run_learn_dict(&shapes, k, beta, &opts, &common.out)?;
            println!("shapes: {}", report.num_shapes);
            println!("objective: {:.9e}", report.learned.objective());
            println!("max relative residual: {:.3e}", report.max_residual);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
