//! `cado`: planted-partition experiments from the command line.
//!
//! Subcommands: `generate` an instance directory, `solve` one instance
//! with the conditional-gradient solver, run the spectral `baseline`,
//! `check` recovery diagnostics, and execute a `sweep` from a key=value
//! config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cado_core::baseline::{spectral_cluster, LaplacianKind, SpectralConfig};
use cado_core::cado::{solve, test_accuracy, SolverConfig};
use cado_core::datagen::{generate, GenParams, PlantedInstance};
use cado_core::error::Result;
use cado_core::harness::{
    parse_sweep_spec, run_sweep, summarize, Configuration, SweepSpec,
};
use cado_core::objective::TermWeights;
use cado_core::recovery::full_report;
use cado_core::{io, Error};

#[derive(Parser)]
#[command(name = "cado", version, about = "Transductive node classification by atomic decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Instance-generation parameters (mirrors the generator's fields).
#[derive(Args, Clone)]
struct GenArgs {
    /// Cluster count.
    #[arg(long, default_value_t = GenParams::default().k)]
    k: usize,
    /// Nodes per cluster.
    #[arg(long, default_value_t = GenParams::default().n0)]
    n0: usize,
    /// Intra-cluster edge probability.
    #[arg(long, default_value_t = GenParams::default().p)]
    p: f64,
    /// Inter-cluster edge probability.
    #[arg(long, default_value_t = GenParams::default().q)]
    q: f64,
    /// Feature dimension.
    #[arg(long, default_value_t = GenParams::default().m)]
    m: usize,
    /// Count of noise-scale feature directions.
    #[arg(long, default_value_t = GenParams::default().m_omega)]
    m_omega: usize,
    /// Noise standard-deviation scale.
    #[arg(long, default_value_t = GenParams::default().omega)]
    omega: f64,
    /// Signal standard-deviation scale.
    #[arg(long, default_value_t = GenParams::default().sigma)]
    sigma: f64,
    /// Fraction of each cluster labeled for training.
    #[arg(long, default_value_t = GenParams::default().train_ratio)]
    train_ratio: f64,
    /// Probability a training label is correct.
    #[arg(long, default_value_t = GenParams::default().pi_correct)]
    pi_correct: f64,
    /// Generation seed.
    #[arg(long, default_value_t = GenParams::default().seed)]
    seed: u64,
}

impl GenArgs {
    fn to_params(&self) -> GenParams {
        GenParams {
            k: self.k,
            n0: self.n0,
            p: self.p,
            q: self.q,
            m: self.m,
            m_omega: self.m_omega,
            omega: self.omega,
            sigma: self.sigma,
            train_ratio: self.train_ratio,
            pi_correct: self.pi_correct,
            seed: self.seed,
        }
    }
}

/// Solver parameters (mirrors the solver's fields).
#[derive(Args, Clone)]
struct SolverArgs {
    /// Atom count.
    #[arg(long, default_value_t = SolverConfig::default().r)]
    r: usize,
    /// Graph-term weight.
    #[arg(long, default_value_t = SolverConfig::default().weights.beta_g)]
    beta_g: f64,
    /// Feature-term weight.
    #[arg(long, default_value_t = SolverConfig::default().weights.beta_f)]
    beta_f: f64,
    /// Label-term weight.
    #[arg(long, default_value_t = SolverConfig::default().weights.beta_l)]
    beta_l: f64,
    /// Covariance eigenvalue lower bound.
    #[arg(long, default_value_t = SolverConfig::default().rho_minus)]
    rho_minus: f64,
    /// Covariance eigenvalue upper bound.
    #[arg(long, default_value_t = SolverConfig::default().rho_plus)]
    rho_plus: f64,
    /// Structural-gradient denominator floor.
    #[arg(long, default_value_t = SolverConfig::default().eps_floor)]
    eps_floor: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    max_iters: usize,
    /// Relative objective-change stopping tolerance.
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    /// Solver seed (initialization and sweep-order shuffling).
    #[arg(long, default_value_t = SolverConfig::default().seed)]
    solver_seed: u64,
    /// Model configuration (which objective terms participate).
    #[arg(long, default_value = "GFL")]
    configuration: String,
}

impl SolverArgs {
    fn to_config(&self) -> Result<SolverConfig> {
        let configuration: Configuration = self.configuration.parse()?;
        if !configuration.uses_solver() {
            return Err(Error::Unsupported(format!(
                "configuration {configuration} runs the spectral baseline; use the `baseline` subcommand"
            )));
        }
        let base = SolverConfig {
            r: self.r,
            weights: TermWeights {
                beta_g: self.beta_g,
                beta_f: self.beta_f,
                beta_l: self.beta_l,
            },
            rho_minus: self.rho_minus,
            rho_plus: self.rho_plus,
            eps_floor: self.eps_floor,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.solver_seed,
            ..SolverConfig::default()
        };
        Ok(configuration.apply(&base))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LaplacianArg {
    Unnormalized,
    Symmetric,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted instance and write it to a directory.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Output directory for the instance files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the solver on an instance and print test accuracy.
    Solve {
        #[command(flatten)]
        gen: GenArgs,
        /// Load this instance directory instead of generating.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the objective trace CSV here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write the per-node prediction CSV here.
        #[arg(long)]
        prediction_out: Option<PathBuf>,
    },
    /// Run the spectral baseline and print clustering/test accuracy.
    Baseline {
        #[command(flatten)]
        gen: GenArgs,
        /// Load this instance directory instead of generating.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Laplacian variant.
        #[arg(long, value_enum, default_value_t = LaplacianArg::Symmetric)]
        laplacian: LaplacianArg,
        /// k-means restarts.
        #[arg(long, default_value_t = SpectralConfig::default().kmeans_restarts)]
        restarts: usize,
        /// Write the node,cluster assignment CSV here.
        #[arg(long)]
        assignment_out: Option<PathBuf>,
    },
    /// Compute the recovery-diagnostics report.
    Check {
        #[command(flatten)]
        gen: GenArgs,
        /// Load this instance directory instead of generating.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Certificate bound scale (bound_i = gamma * n_i / n).
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Write the flat key=value report here.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Write the per-cluster report CSV here.
        #[arg(long)]
        report_csv_out: Option<PathBuf>,
    },
    /// Run a sweep described by a key=value config file.
    Sweep {
        /// Sweep config file (axis, values, configurations, seeds, output,
        /// and gen./solver. overrides).
        #[arg(long)]
        config: PathBuf,
        /// Override the config file's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_or_generate(instance: &Option<PathBuf>, gen: &GenArgs) -> Result<PlantedInstance> {
    match instance {
        Some(dir) => io::load_instance(dir).map_err(|e| e.in_stage("load")),
        None => generate(&gen.to_params()).map_err(|e| e.in_stage("generate")),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { gen, out } => {
            let instance = generate(&gen.to_params()).map_err(|e| e.in_stage("generate"))?;
            io::save_instance(&instance, &out).map_err(|e| e.in_stage("save"))?;
            let edges: usize = instance.adjacency.iter().map(|&a| a as usize).sum();
            println!(
                "wrote instance: n={} m={} edges={} dir={}",
                instance.n,
                instance.params.m,
                edges / 2,
                out.display()
            );
        }
        Command::Solve {
            gen,
            instance,
            solver,
            trace_out,
            prediction_out,
        } => {
            let inst = load_or_generate(&instance, &gen)?;
            let config = solver.to_config()?;
            let (state, prediction) = solve(&inst, &config).map_err(|e| e.in_stage("solve"))?;
            let accuracy = test_accuracy(&inst, &prediction);
            println!(
                "configuration={} iterations={} final_objective={} test_accuracy={accuracy}",
                solver.configuration,
                state.t,
                state
                    .objective_trace
                    .last()
                    .map(|o| o.to_string())
                    .unwrap_or_default()
            );
            if let Some(path) = trace_out {
                io::write_trace_csv(&path, &state.objective_trace)
                    .map_err(|e| e.in_stage("write-trace"))?;
            }
            if let Some(path) = prediction_out {
                io::write_prediction_csv(&path, &inst, &prediction)
                    .map_err(|e| e.in_stage("write-prediction"))?;
            }
        }
        Command::Baseline {
            gen,
            instance,
            laplacian,
            restarts,
            assignment_out,
        } => {
            let inst = load_or_generate(&instance, &gen)?;
            let config = SpectralConfig {
                k: inst.params.k,
                laplacian_kind: match laplacian {
                    LaplacianArg::Unnormalized => LaplacianKind::Unnormalized,
                    LaplacianArg::Symmetric => LaplacianKind::SymmetricNormalized,
                },
                kmeans_restarts: restarts,
                seed: inst.params.seed,
                ..SpectralConfig::default()
            };
            let assignment = spectral_cluster(&inst.adjacency.view(), &config)
                .map_err(|e| e.in_stage("baseline"))?;
            let accuracy = cado_core::baseline::best_permutation_accuracy(
                &assignment,
                &inst.true_labels,
                inst.params.k,
            );
            println!("clustering_accuracy={accuracy}");
            if let Some(path) = assignment_out {
                io::write_assignment_csv(&path, &assignment)
                    .map_err(|e| e.in_stage("write-assignment"))?;
            }
        }
        Command::Check {
            gen,
            instance,
            solver,
            gamma,
            report_out,
            report_csv_out,
        } => {
            let inst = load_or_generate(&instance, &gen)?;
            let config = solver.to_config()?;
            // The converged models stand in for the per-cluster optima the
            // certificate is defined against.
            let (state, _) = solve(&inst, &config).map_err(|e| e.in_stage("solve"))?;
            let report =
                full_report(&inst, gamma, &state.models).map_err(|e| e.in_stage("check"))?;
            println!(
                "homogeneity_margin={} visibility_margin={}",
                report.homogeneity_margin, report.visibility_margin
            );
            for (i, c) in report.node_only_bound.iter().enumerate() {
                println!(
                    "cluster={i} certificate_rho={} certificate_bound={} satisfied={}",
                    c.rho, c.bound, c.satisfied
                );
            }
            if let Some(path) = report_out {
                io::write_recovery_report_txt(&path, &report)
                    .map_err(|e| e.in_stage("write-report"))?;
            }
            if let Some(path) = report_csv_out {
                io::write_recovery_report_csv(&path, &report)
                    .map_err(|e| e.in_stage("write-report"))?;
            }
        }
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(Error::Io)?;
            let mut spec: SweepSpec = parse_sweep_spec(&text).map_err(|e| e.in_stage("config"))?;
            if let Some(path) = out {
                spec.output_path = Some(path);
            }
            let result = run_sweep(&spec).map_err(|e| e.in_stage("sweep"))?;
            for row in summarize(&result) {
                println!(
                    "axis={} value={} configuration={} median={} iqr={} runs={}",
                    result.axis,
                    row.axis_value,
                    row.configuration,
                    row.median,
                    row.iqr,
                    row.count
                );
            }
            let failures = result.rows.iter().filter(|r| r.error.is_some()).count();
            if failures > 0 {
                eprintln!("{failures} run(s) failed; see the error column");
            }
            if let Some(path) = &spec.output_path {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
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
