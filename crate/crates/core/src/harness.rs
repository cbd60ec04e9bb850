//! Experiment orchestration: named model configurations, single runs,
//! axis sweeps with CSV persistence, and summary statistics.
//!
//! A configuration picks which objective terms participate (ablations zero
//! the corresponding term weights); the graph-only settings route to the
//! spectral baseline. Sweeps execute the Cartesian product of axis values,
//! configurations, and seeds, in deterministic spec order, parallelized
//! across runs. The main CSV holds everything except wall-clock timing,
//! which goes to a sidecar file so repeated runs of the same spec produce
//! byte-identical primary artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::baseline::{spectral_cluster, SpectralConfig};
use crate::cado::{hungarian_min, solve, test_accuracy, SolverConfig, SolverState};
use crate::datagen::{generate, GenParams, PlantedInstance};
use crate::error::{Error, Result};
use crate::io::parse_key_values;

/// Which objective terms (or baseline) a run uses. `G` and `GSpectral`
/// both run the spectral baseline: the solver's graph term alone has no
/// label decoder, and the reference experiments use spectral clustering
/// for the graph-only setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Configuration {
    G,
    F,
    Gf,
    Gl,
    Fl,
    Gfl,
    GSpectral,
}

impl Configuration {
    pub const ALL: [Configuration; 7] = [
        Configuration::G,
        Configuration::F,
        Configuration::Gf,
        Configuration::Gl,
        Configuration::Fl,
        Configuration::Gfl,
        Configuration::GSpectral,
    ];

    /// True when the run uses the conditional-gradient solver rather than
    /// the spectral baseline.
    pub fn uses_solver(self) -> bool {
        !matches!(self, Configuration::G | Configuration::GSpectral)
    }

    /// (graph, feature, label) term participation.
    fn terms(self) -> (bool, bool, bool) {
        match self {
            Configuration::G | Configuration::GSpectral => (true, false, false),
            Configuration::F => (false, true, false),
            Configuration::Gf => (true, true, false),
            Configuration::Gl => (true, false, true),
            Configuration::Fl => (false, true, true),
            Configuration::Gfl => (true, true, true),
        }
    }

    /// Applies the ablation to a base solver config: disabled terms get
    /// their weight zeroed and their term switched off.
    pub fn apply(self, base: &SolverConfig) -> SolverConfig {
        let (g, f, l) = self.terms();
        let mut config = base.clone();
        config.use_graph = g;
        config.use_feature = f;
        config.use_label = l;
        if !g {
            config.weights.beta_g = 0.0;
        }
        if !f {
            config.weights.beta_f = 0.0;
        }
        if !l {
            config.weights.beta_l = 0.0;
        }
        config
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Configuration::G => "G",
            Configuration::F => "F",
            Configuration::Gf => "GF",
            Configuration::Gl => "GL",
            Configuration::Fl => "FL",
            Configuration::Gfl => "GFL",
            Configuration::GSpectral => "G-spectral",
        };
        f.write_str(s)
    }
}

impl FromStr for Configuration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "G" => Ok(Configuration::G),
            "F" => Ok(Configuration::F),
            "GF" => Ok(Configuration::Gf),
            "GL" => Ok(Configuration::Gl),
            "FL" => Ok(Configuration::Fl),
            "GFL" => Ok(Configuration::Gfl),
            "G-SPECTRAL" => Ok(Configuration::GSpectral),
            other => Err(Error::Parse(format!("unknown configuration `{other}`"))),
        }
    }
}

/// Generates an instance and runs the solver; returns the test accuracy
/// and the final state. Errors carry the failing stage's name.
pub fn run_single(gen: &GenParams, solver: &SolverConfig) -> Result<(f64, SolverState)> {
    let instance = generate(gen).map_err(|e| e.in_stage("generate"))?;
    let (state, prediction) = solve(&instance, solver).map_err(|e| e.in_stage("solve"))?;
    Ok((test_accuracy(&instance, &prediction), state))
}

/// Spectral-baseline run: cluster, map clusters to classes by maximum
/// agreement with the training labels, and score the test split.
fn run_spectral(gen: &GenParams) -> Result<f64> {
    let instance = generate(gen).map_err(|e| e.in_stage("generate"))?;
    let config = SpectralConfig {
        k: gen.k,
        seed: gen.seed,
        ..SpectralConfig::default()
    };
    let assignment =
        spectral_cluster(&instance.adjacency.view(), &config).map_err(|e| e.in_stage("baseline"))?;
    let mapping = cluster_to_class(&instance, &assignment, gen.k);
    let mut total = 0usize;
    let mut correct = 0usize;
    for v in 0..instance.n {
        if instance.train_mask[v] {
            continue;
        }
        total += 1;
        if mapping[assignment[v]] == instance.true_labels[v] {
            correct += 1;
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    })
}

/// Maximum-agreement cluster→class mapping from the training split's
/// noisy labels (assignment problem on negated co-occurrence counts).
fn cluster_to_class(instance: &PlantedInstance, assignment: &[usize], k: usize) -> Vec<usize> {
    let mut counts = Array2::<f64>::zeros((k, k));
    for v in 0..instance.n {
        if !instance.train_mask[v] {
            continue;
        }
        if let Some(label) = instance.noisy_labels[v] {
            counts[[assignment[v], label]] += 1.0;
        }
    }
    hungarian_min(&counts.mapv(|c| -c))
}

/// Outcome of one (configuration, instance) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub test_accuracy: f64,
    /// None for baseline runs, which optimize no explicit objective.
    pub final_objective: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: u64,
}

/// Runs one configuration end to end (solver or spectral baseline).
pub fn run_configuration(
    configuration: Configuration,
    gen: &GenParams,
    solver_base: &SolverConfig,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let outcome = if configuration.uses_solver() {
        let (accuracy, state) = run_single(gen, &configuration.apply(solver_base))?;
        RunOutcome {
            test_accuracy: accuracy,
            final_objective: state.objective_trace.last().copied(),
            iterations: Some(state.t),
            wall_ms: 0,
        }
    } else {
        RunOutcome {
            test_accuracy: run_spectral(gen)?,
            final_objective: None,
            iterations: None,
            wall_ms: 0,
        }
    };
    Ok(RunOutcome {
        wall_ms: start.elapsed().as_millis() as u64,
        ..outcome
    })
}

/// The quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    P,
    Omega,
    TrainRatio,
    BetaG,
    BetaF,
    BetaL,
    N,
    M,
    K,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::P => "p",
            Axis::Omega => "omega",
            Axis::TrainRatio => "train_ratio",
            Axis::BetaG => "beta_g",
            Axis::BetaF => "beta_f",
            Axis::BetaL => "beta_l",
            Axis::N => "n",
            Axis::M => "m",
            Axis::K => "K",
        };
        f.write_str(s)
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(Axis::P),
            "omega" => Ok(Axis::Omega),
            "train_ratio" => Ok(Axis::TrainRatio),
            "beta_g" => Ok(Axis::BetaG),
            "beta_f" => Ok(Axis::BetaF),
            "beta_l" => Ok(Axis::BetaL),
            "n" => Ok(Axis::N),
            "m" => Ok(Axis::M),
            "K" | "k" => Ok(Axis::K),
            other => Err(Error::Parse(format!("unknown axis `{other}`"))),
        }
    }
}

fn integral(axis: Axis, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(Error::InvalidParam {
            field: "values",
            reason: format!("axis {axis} needs positive integers, got {value}"),
        });
    }
    Ok(value as usize)
}

/// Applies one axis value to copies of the base parameters. The `n` axis
/// sets the total node count (split evenly across the K clusters); the `K`
/// axis also sets the solver's atom count so label decoding stays defined.
fn apply_axis(
    axis: Axis,
    value: f64,
    gen: &GenParams,
    solver: &SolverConfig,
) -> Result<(GenParams, SolverConfig)> {
    let mut gen = gen.clone();
    let mut solver = solver.clone();
    match axis {
        Axis::P => gen.p = value,
        Axis::Omega => gen.omega = value,
        Axis::TrainRatio => gen.train_ratio = value,
        Axis::BetaG => solver.weights.beta_g = value,
        Axis::BetaF => solver.weights.beta_f = value,
        Axis::BetaL => solver.weights.beta_l = value,
        Axis::N => {
            let n = integral(axis, value)?;
            if n % gen.k != 0 {
                return Err(Error::InvalidParam {
                    field: "values",
                    reason: format!("n={n} not divisible by K={}", gen.k),
                });
            }
            gen.n0 = n / gen.k;
        }
        Axis::M => gen.m = integral(axis, value)?,
        Axis::K => {
            let k = integral(axis, value)?;
            gen.k = k;
            solver.r = k;
        }
    }
    Ok((gen, solver))
}

/// A sweep request: vary one axis over `values`, running every listed
/// configuration on every seed.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base_gen: GenParams,
    pub base_solver: SolverConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub configurations: Vec<Configuration>,
    pub seeds: Vec<u64>,
    /// Main CSV destination; a `.timing.csv` sidecar lands next to it.
    /// None keeps the result in memory only.
    pub output_path: Option<PathBuf>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParam {
                field: "values",
                reason: "empty".into(),
            });
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParam {
                field: "values",
                reason: "must be strictly increasing".into(),
            });
        }
        if self.configurations.is_empty() {
            return Err(Error::InvalidParam {
                field: "configurations",
                reason: "empty".into(),
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParam {
                field: "seeds",
                reason: "empty".into(),
            });
        }
        Ok(())
    }
}

/// One sweep row. A populated `error` marks a failed run; its metric
/// fields are then None.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub configuration: Configuration,
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub final_objective: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

/// Executes the sweep: Cartesian product in spec order (values outermost,
/// then configurations, then seeds), runs in parallel, rows collected in
/// deterministic order. Failed runs become marker rows rather than
/// aborting the sweep. Writes the CSVs when an output path is set.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &value in &spec.values {
        for &configuration in &spec.configurations {
            for &seed in &spec.seeds {
                jobs.push((value, configuration, seed));
            }
        }
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(value, configuration, seed)| {
            let run = apply_axis(spec.axis, value, &spec.base_gen, &spec.base_solver).and_then(
                |(mut gen, solver)| {
                    gen.seed = seed;
                    run_configuration(configuration, &gen, &solver)
                },
            );
            match run {
                Ok(outcome) => SweepRow {
                    axis_value: value,
                    configuration,
                    seed,
                    test_accuracy: Some(outcome.test_accuracy),
                    final_objective: outcome.final_objective,
                    iterations: outcome.iterations,
                    wall_ms: outcome.wall_ms,
                    error: None,
                },
                Err(e) => SweepRow {
                    axis_value: value,
                    configuration,
                    seed,
                    test_accuracy: None,
                    final_objective: None,
                    iterations: None,
                    wall_ms: 0,
                    // Keep the message single-cell safe.
                    error: Some(e.to_string().replace([',', '\n'], ";")),
                },
            }
        })
        .collect();
    let result = SweepResult {
        axis: spec.axis,
        rows,
    };
    if let Some(path) = &spec.output_path {
        std::fs::write(path, serialize_result(&result))?;
        std::fs::write(timing_path(path), serialize_timing(&result))?;
    }
    Ok(result)
}

/// Sidecar path for wall-clock timings: `sweep.csv` → `sweep.timing.csv`.
pub fn timing_path(main: &Path) -> PathBuf {
    let stem = main.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    main.with_file_name(format!("{stem}.timing.csv"))
}

/// Main CSV: everything except wall-clock time, so identical specs yield
/// byte-identical files.
pub fn serialize_result(result: &SweepResult) -> String {
    let mut out = format!(
        "axis,axis_value,configuration,seed,test_accuracy,final_objective,iterations,error\n"
    );
    for r in &result.rows {
        let opt_f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            result.axis,
            r.axis_value,
            r.configuration,
            r.seed,
            opt_f(&r.test_accuracy),
            opt_f(&r.final_objective),
            opt_u(&r.iterations),
            r.error.as_deref().unwrap_or_default()
        ));
    }
    out
}

/// Timing sidecar CSV.
pub fn serialize_timing(result: &SweepResult) -> String {
    let mut out = String::from("axis_value,configuration,seed,wall_ms\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.axis_value, r.configuration, r.seed, r.wall_ms
        ));
    }
    out
}

/// Parses a main CSV (timings default to zero; pair with the sidecar to
/// restore them).
pub fn parse_result(main_csv: &str) -> Result<SweepResult> {
    let mut lines = main_csv.lines();
    let header = lines.next().unwrap_or_default();
    if header != "axis,axis_value,configuration,seed,test_accuracy,final_objective,iterations,error"
    {
        return Err(Error::Parse(format!("bad sweep header `{header}`")));
    }
    let mut axis = None;
    let mut rows = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.splitn(8, ',').collect();
        if cells.len() != 8 {
            return Err(Error::Parse(format!("bad sweep row `{line}`")));
        }
        let row_axis: Axis = cells[0].parse()?;
        match axis {
            None => axis = Some(row_axis),
            Some(a) if a == row_axis => {}
            Some(a) => {
                return Err(Error::Parse(format!(
                    "mixed axes `{a}` and `{row_axis}` in one result"
                )))
            }
        }
        let num = |c: &str, what: &str| -> Result<f64> {
            c.parse()
                .map_err(|e| Error::Parse(format!("{what} `{c}`: {e}")))
        };
        let opt_f = |c: &str, what: &str| -> Result<Option<f64>> {
            if c.is_empty() {
                Ok(None)
            } else {
                num(c, what).map(Some)
            }
        };
        rows.push(SweepRow {
            axis_value: num(cells[1], "axis_value")?,
            configuration: cells[2].parse()?,
            seed: cells[3]
                .parse()
                .map_err(|e| Error::Parse(format!("seed `{}`: {e}", cells[3])))?,
            test_accuracy: opt_f(cells[4], "test_accuracy")?,
            final_objective: opt_f(cells[5], "final_objective")?,
            iterations: if cells[6].is_empty() {
                None
            } else {
                Some(
                    cells[6]
                        .parse()
                        .map_err(|e| Error::Parse(format!("iterations `{}`: {e}", cells[6])))?,
                )
            },
            wall_ms: 0,
            error: if cells[7].is_empty() {
                None
            } else {
                Some(cells[7].to_string())
            },
        });
    }
    Ok(SweepResult {
        axis: axis.ok_or_else(|| Error::Parse("empty sweep result".into()))?,
        rows,
    })
}

/// Restores wall-clock timings from a sidecar CSV into a parsed result.
pub fn apply_timing(result: &mut SweepResult, timing_csv: &str) -> Result<()> {
    let mut lines = timing_csv.lines();
    let header = lines.next().unwrap_or_default();
    if header != "axis_value,configuration,seed,wall_ms" {
        return Err(Error::Parse(format!("bad timing header `{header}`")));
    }
    for (row, line) in result.rows.iter_mut().zip(lines) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::Parse(format!("bad timing row `{line}`")));
        }
        row.wall_ms = cells[3]
            .parse()
            .map_err(|e| Error::Parse(format!("wall_ms `{}`: {e}", cells[3])))?;
    }
    Ok(())
}

/// Median and interquartile range of test accuracy for one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis_value: f64,
    pub configuration: Configuration,
    pub median: f64,
    pub iqr: f64,
    pub count: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between closest ranks.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Groups successful rows by (axis_value, configuration) in order of first
/// appearance and reports median and interquartile range of accuracy.
pub fn summarize(result: &SweepResult) -> Vec<SummaryRow> {
    let mut groups: Vec<((f64, Configuration), Vec<f64>)> = Vec::new();
    for row in &result.rows {
        let Some(acc) = row.test_accuracy else {
            continue;
        };
        let key = (row.axis_value, row.configuration);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, accs)) => accs.push(acc),
            None => groups.push((key, vec![acc])),
        }
    }
    groups
        .into_iter()
        .map(|((axis_value, configuration), mut accs)| {
            accs.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracies"));
            SummaryRow {
                axis_value,
                configuration,
                median: quantile(&accs, 0.5),
                iqr: quantile(&accs, 0.75) - quantile(&accs, 0.25),
                count: accs.len(),
            }
        })
        .collect()
}

fn set_gen_field(gen: &mut GenParams, key: &str, value: &str) -> Result<()> {
    let bad = |e: &dyn fmt::Display| Error::Parse(format!("gen.{key}: {e}"));
    match key {
        "k" | "K" => gen.k = value.parse().map_err(|e| bad(&e))?,
        "n0" => gen.n0 = value.parse().map_err(|e| bad(&e))?,
        "p" => gen.p = value.parse().map_err(|e| bad(&e))?,
        "q" => gen.q = value.parse().map_err(|e| bad(&e))?,
        "m" => gen.m = value.parse().map_err(|e| bad(&e))?,
        "m_omega" => gen.m_omega = value.parse().map_err(|e| bad(&e))?,
        "omega" => gen.omega = value.parse().map_err(|e| bad(&e))?,
        "sigma" => gen.sigma = value.parse().map_err(|e| bad(&e))?,
        "train_ratio" => gen.train_ratio = value.parse().map_err(|e| bad(&e))?,
        "pi_correct" => gen.pi_correct = value.parse().map_err(|e| bad(&e))?,
        "seed" => gen.seed = value.parse().map_err(|e| bad(&e))?,
        other => return Err(Error::Parse(format!("unknown gen key `{other}`"))),
    }
    Ok(())
}

fn set_solver_field(solver: &mut SolverConfig, key: &str, value: &str) -> Result<()> {
    let bad = |e: &dyn fmt::Display| Error::Parse(format!("solver.{key}: {e}"));
    match key {
        "r" => solver.r = value.parse().map_err(|e| bad(&e))?,
        "beta_g" => solver.weights.beta_g = value.parse().map_err(|e| bad(&e))?,
        "beta_f" => solver.weights.beta_f = value.parse().map_err(|e| bad(&e))?,
        "beta_l" => solver.weights.beta_l = value.parse().map_err(|e| bad(&e))?,
        "rho_minus" => solver.rho_minus = value.parse().map_err(|e| bad(&e))?,
        "rho_plus" => solver.rho_plus = value.parse().map_err(|e| bad(&e))?,
        "eps_floor" => solver.eps_floor = value.parse().map_err(|e| bad(&e))?,
        "max_iters" => solver.max_iters = value.parse().map_err(|e| bad(&e))?,
        "tol" => solver.tol = value.parse().map_err(|e| bad(&e))?,
        "seed" => solver.seed = value.parse().map_err(|e| bad(&e))?,
        "use_graph" => solver.use_graph = value.parse().map_err(|e| bad(&e))?,
        "use_feature" => solver.use_feature = value.parse().map_err(|e| bad(&e))?,
        "use_label" => solver.use_label = value.parse().map_err(|e| bad(&e))?,
        other => return Err(Error::Parse(format!("unknown solver key `{other}`"))),
    }
    Ok(())
}

/// Parses a sweep spec from flat key=value text. Base parameters use
/// `gen.` and `solver.` prefixes (e.g. `gen.p=0.1`, `solver.beta_f=2.5`);
/// sweep-level keys are `axis`, `values`, `configurations`, `seeds`
/// (comma-separated lists), and `output`.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec> {
    let mut spec = SweepSpec {
        base_gen: GenParams::default(),
        base_solver: SolverConfig::default(),
        axis: Axis::P,
        values: Vec::new(),
        configurations: Vec::new(),
        seeds: vec![0, 1, 2, 3, 4],
        output_path: None,
    };
    let mut saw_axis = false;
    for (key, value) in parse_key_values(text)? {
        if let Some(field) = key.strip_prefix("gen.") {
            set_gen_field(&mut spec.base_gen, field, &value)?;
        } else if let Some(field) = key.strip_prefix("solver.") {
            set_solver_field(&mut spec.base_solver, field, &value)?;
        } else {
            match key.as_str() {
                "axis" => {
                    spec.axis = value.parse()?;
                    saw_axis = true;
                }
                "values" => {
                    spec.values = value
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse()
                                .map_err(|e| Error::Parse(format!("values `{v}`: {e}")))
                        })
                        .collect::<Result<_>>()?;
                }
                "configurations" => {
                    spec.configurations = value
                        .split(',')
                        .map(|c| c.trim().parse())
                        .collect::<Result<_>>()?;
                }
                "seeds" => {
                    spec.seeds = value
                        .split(',')
                        .map(|s| {
                            s.trim()
                                .parse()
                                .map_err(|e| Error::Parse(format!("seeds `{s}`: {e}")))
                        })
                        .collect::<Result<_>>()?;
                }
                "output" => spec.output_path = Some(PathBuf::from(value)),
                other => return Err(Error::Parse(format!("unknown sweep key `{other}`"))),
            }
        }
    }
    if !saw_axis {
        return Err(Error::Parse("sweep spec missing `axis`".into()));
    }
    spec.validate()?;
    Ok(spec)
}
