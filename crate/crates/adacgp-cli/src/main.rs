//! Command-line front end: synthetic data generation, estimation runs,
//! hyper-parameter search, scaling benchmarks and metric reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adacgp::error::{Error, Result};
use adacgp::estimator::{run_adacgp_with, TraceOptions};
use adacgp::experiment::{
    benchmark_complexity, generate_run_data, hyperparameter_search, ingest_stream,
    run_experiment_to_dir, ExperimentConfig, TraceLine, Variant,
};
use adacgp::graph::Topology;
use adacgp::io;
use adacgp::metrics::{classify_edges, nmse_gso};

#[derive(Parser)]
#[command(
    name = "adacgp",
    about = "Online graph shift operator estimation from multivariate time series",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the experiment-driven subcommands.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment configuration (see docs/config.example.toml).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph topology: random | er | kr | sbm.
    #[arg(long)]
    topology: Option<Topology>,
    /// Estimator variant: p1xdebias | p1xalt-debias | p2xdebias |
    /// p2xalt-debias | adaptive-var.
    #[arg(long)]
    variant: Option<Variant>,
    /// Node count.
    #[arg(long)]
    n: Option<usize>,
    /// Model order P.
    #[arg(long)]
    order: Option<usize>,
    /// Retained samples per run.
    #[arg(long)]
    t: Option<usize>,
    /// Discarded leading samples.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text).map_err(|e| Error::Parse {
                    line: 0,
                    msg: format!("{}: {e}", path.display()),
                })?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(t) = self.topology {
            config.topology = t;
            if self.config.is_none() {
                config.hyper = adacgp::experiment::HyperParams::tuned(t, config.order);
            }
        }
        if let Some(v) = self.variant {
            config.variant = v;
        }
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(p) = self.order {
            config.order = p;
            if config.hyper.mu.len() != p {
                let mu1 = config.hyper.mu.first().copied().unwrap_or(4e-4);
                let mu_rest = config.hyper.mu.last().copied().unwrap_or(3e-3);
                let mut mu = vec![mu_rest; p];
                mu[0] = mu1;
                config.hyper.mu = mu;
            }
        }
        if let Some(t) = self.t {
            config.t_len = t;
        }
        if let Some(b) = self.burn_in {
            config.burn_in = b;
        }
        if let Some(r) = self.runs {
            config.monte_carlo_runs = r;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth graph, filter coefficients and a signal
    /// stream, written as CSV files.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an estimator. With synthetic data (default) this executes the
    /// full Monte Carlo experiment against the generated ground truth;
    /// with --input it processes an external stream.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// External stream CSV instead of synthetic data.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Allowed-edge mask CSV (external streams only).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Skip per-channel normalisation of external streams.
        #[arg(long)]
        no_normalize: bool,
        /// Record full GSO snapshots in the trace.
        #[arg(long)]
        snapshots: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyper-parameter search minimising the steady-state
    /// coefficient prediction error.
    Search {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of sampled configurations.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Search seed (independent of the experiment seed).
        #[arg(long, default_value_t = 7)]
        search_seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-iteration wall-time scaling over a list of network sizes.
    Bench {
        /// Comma-separated network sizes, ascending.
        #[arg(long, value_delimiter = ',', default_values_t = [25, 50, 100, 200, 400])]
        sizes: Vec<usize>,
        /// Initial timing repetitions per size.
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Edge-classification and error report between two GSO CSV files.
    Metrics {
        /// Ground-truth GSO CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Estimated GSO CSV.
        #[arg(long)]
        estimate: PathBuf,
        /// Magnitude above which an entry counts as an edge.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        /// Optional output directory for report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn simulate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = generate_run_data(config, 0)?;
    io::write_gso_csv(&out.join("gso_true.csv"), data.gso.weights())?;
    io::write_gso_triplets(&out.join("gso_true_triplets.csv"), data.gso.weights())?;
    io::write_stream_csv(&out.join("stream.csv"), &data.stream)?;
    let coeff_line: Vec<String> =
        data.coeffs.values().iter().map(|v| format!("{v:.16e}")).collect();
    std::fs::write(out.join("coeffs.csv"), format!("{}\n", coeff_line.join(",")))?;
    println!(
        "simulated {:?} n={} T={} (burn-in {}) -> {}",
        config.topology,
        config.n,
        data.stream.len(),
        config.burn_in,
        out.display()
    );
    Ok(())
}

fn estimate_external(
    config: &ExperimentConfig,
    input: &Path,
    mask: Option<&Path>,
    normalize: bool,
    snapshots: bool,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let (stream, mask) = ingest_stream(input, mask, normalize)?;
    let mut est_cfg = config.estimator_config()?;
    est_cfg.mask = mask;
    let options = TraceOptions {
        snapshot_stride: config.snapshot_stride,
        snapshot_matrices: snapshots,
    };
    let trace = run_adacgp_with(&stream, est_cfg, options, |_, _| {})?;
    for snap in &trace.snapshots {
        io::write_gso_csv(&out.join(format!("gso_est_step{:06}.csv", snap.step)), &snap.w)?;
    }
    let lines = trace.records.iter().map(|r| TraceLine {
        step: r.step,
        nmse_psi: r.nmse_psi,
        nmse_h: r.nmse_h,
        nnz_w: r.nnz_w,
        debiasing: r.debiasing,
        snapshot: (snapshots && config.snapshot_stride > 0 && r.step % config.snapshot_stride == 0)
            .then(|| format!("gso_est_step{:06}.csv", r.step)),
    });
    io::write_jsonl(&out.join("trace.jsonl"), lines)?;
    io::write_gso_csv(&out.join("gso_est.csv"), &trace.final_gso)?;
    let summary = serde_json::json!({
        "input": input.display().to_string(),
        "n": stream.n(),
        "samples": stream.len(),
        "terminal_step": trace.terminal_step,
        "debias_onset": trace.debias_onset,
        "nnz_w": trace.final_gso.iter().filter(|v| **v != 0.0).count(),
    });
    io::write_json(&out.join("results.json"), &summary)?;
    println!("estimated {} steps -> {}", trace.terminal_step, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config.resolve()?, &out),
        Command::Estimate { config, input, mask, no_normalize, snapshots, out } => {
            let mut config = config.resolve()?;
            config.snapshot_matrices = snapshots || config.snapshot_matrices;
            match input {
                Some(input) => estimate_external(
                    &config,
                    &input,
                    mask.as_deref(),
                    !no_normalize,
                    snapshots,
                    &out,
                ),
                None => {
                    let set = run_experiment_to_dir(&config, &out)?;
                    if let Some(nmse_w) = set.aggregate.nmse_w {
                        println!(
                            "{:?} {:?}: NMSE(W) {:.4} +/- {:.4} over {} runs -> {}",
                            config.topology,
                            config.variant,
                            nmse_w.mean,
                            nmse_w.std,
                            set.aggregate.runs,
                            out.display()
                        );
                    } else {
                        println!("all runs failed; see {}", out.join("results.json").display());
                    }
                    Ok(())
                }
            }
        }
        Command::Search { config, trials, search_seed, out } => {
            let config = config.resolve()?;
            let outcome = hyperparameter_search(&config, trials, search_seed)?;
            std::fs::create_dir_all(&out)?;
            io::write_json(&out.join("search.json"), &outcome)?;
            let best = &outcome.leaderboard[0];
            println!(
                "best objective {:?} with mu {:?}, eta {}, gamma {}, lambda {} -> {}",
                best.objective,
                best.hyper.mu,
                best.hyper.eta,
                best.hyper.gamma,
                best.hyper.lambda,
                out.display()
            );
            Ok(())
        }
        Command::Bench { sizes, reps, out } => {
            let report = benchmark_complexity(&sizes, reps)?;
            std::fs::create_dir_all(&out)?;
            report.write_csv(&out.join("scaling.csv"))?;
            io::write_json(&out.join("scaling.json"), &report)?;
            for (alg, exp) in &report.exponents {
                match exp {
                    Some(e) => println!("{alg}: O(N^{e:.2})"),
                    None => println!("{alg}: single size, exponent undefined"),
                }
            }
            Ok(())
        }
        Command::Metrics { truth, estimate, tol, out } => {
            let w_true = io::read_gso_csv(&truth)?;
            let w_est = io::read_gso_csv(&estimate)?;
            let report = classify_edges(w_true.view(), w_est.view(), tol)?;
            let nmse = nmse_gso(w_true.view(), w_est.view())?;
            let payload = serde_json::json!({
                "nmse_w": nmse,
                "precision": report.precision,
                "recall": report.recall,
                "f1": report.f1,
                "p_miss": report.p_miss,
                "p_false_alarm": report.p_false_alarm,
                "true_nnz": report.true_nnz,
                "est_nnz": report.est_nnz,
            });
            println!("{}", serde_json::to_string_pretty(&payload).unwrap());
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                io::write_json(&out.join("report.json"), &payload)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
