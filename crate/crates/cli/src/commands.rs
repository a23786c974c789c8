use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swingnet::datasets::{
    collocation_grid, generate, generate_offset_validation, load_dataset, save_dataset, Dataset,
    Scenario,
};
use swingnet::eval::{
    critical_n, emit_report, evaluate_accuracy, time_nn, time_solver, BenchmarkReport, CostModel,
    CostRow,
};
use swingnet::grid::{Disturbance, NetworkModel};
use swingnet::nn::{load_model, save_model, Surrogate};
use swingnet::solver::{self, write_trajectory, SolverConfig, TrajectoryManifest};
use swingnet::training::{train as train_model, TrainSetup};

use crate::config::{resolve_case, RunConfig, RunFile};

fn load_network(case: &str, root: &Path) -> Result<NetworkModel> {
    let case = resolve_case(case, root);
    NetworkModel::load(&case).with_context(|| format!("loading case {case}"))
}

fn tolerance_dir(data_dir: &Path, case: &str, eps: f64) -> PathBuf {
    data_dir.join(case).join(format!("eps{eps:e}"))
}

/// Loads `<dir>/<stem>` if present, otherwise generates and stores it.
fn cached(dir: &Path, stem: &str, make: impl FnOnce() -> Result<Dataset>) -> Result<Dataset> {
    if dir.join(format!("{stem}.json")).exists() {
        let (ds, _) = load_dataset(dir, stem).with_context(|| format!("loading dataset {stem}"))?;
        return Ok(ds);
    }
    let ds = make()?;
    save_dataset(&ds, dir, stem)?;
    Ok(ds)
}

fn scenario_data(
    net: &NetworkModel,
    scenario: Scenario,
    dir: &Path,
    cfg: &SolverConfig,
) -> Result<Dataset> {
    cached(dir, scenario.label(), || {
        Ok(generate(scenario.label(), &scenario.grid(), net, cfg)?)
    })
}

fn validation_data(
    net: &NetworkModel,
    scenario: Scenario,
    dir: &Path,
    cfg: &SolverConfig,
) -> Result<Dataset> {
    cached(dir, &format!("{}-validation", scenario.label()), || {
        Ok(generate_offset_validation(scenario, net, cfg)?)
    })
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("'{v}': {e}")))
        .collect()
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Bundled case name or case file.
    #[arg(long, default_value = "kundur11")]
    case: String,
    /// Load lost at the disturbance bus, in pu.
    #[arg(long)]
    disturbance: f64,
    /// Bus index of the disturbance; the case default when omitted.
    #[arg(long)]
    bus: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value = "trajectories")]
    out: PathBuf,
}

pub fn simulate(root: &Path, a: SimulateArgs) -> Result<()> {
    let net = load_network(&a.case, root)?;
    let bus = match a.bus.or(net.default_disturbance_bus) {
        Some(b) => b,
        None => bail!("case {} has no default disturbance bus; pass --bus", net.name),
    };
    if !(a.t_max > 0.0) {
        bail!("t-max must be positive");
    }
    let cfg = SolverConfig::with_tolerance(a.tolerance);
    let dist = Disturbance::new(bus, a.disturbance);
    let start = Instant::now();
    let traj = solver::simulate(&net, dist, a.t_max, &cfg)?;
    let manifest = TrajectoryManifest {
        case: net.name.clone(),
        disturbance: dist,
        config: cfg,
        wall_time_s: start.elapsed().as_secs_f64(),
        stats: traj.stats,
        columns: net.layout.state_names(),
    };
    let stem = format!("{}_bus{}_p{}", net.name, bus, a.disturbance);
    let out = root.join(&a.out);
    write_trajectory(&out, &stem, &traj, &manifest)?;
    println!(
        "{} steps, {:.3} s -> {}",
        traj.stats.accepted_steps,
        manifest.wall_time_s,
        out.join(format!("{stem}.csv")).display()
    );
    Ok(())
}


#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "kundur11")]
    case: String,
    /// A to E, or `test`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

pub fn generate_data(root: &Path, a: GenerateArgs) -> Result<()> {
    let net = load_network(&a.case, root)?;
    let scenario: Scenario = a.scenario.parse()?;
    let cfg = SolverConfig::with_tolerance(a.tolerance);
    cfg.validate()?;
    let dir = tolerance_dir(&root.join(&a.out), &net.name, a.tolerance);
    let mut sets = vec![generate(scenario.label(), &scenario.grid(), &net, &cfg)?];
    if scenario != Scenario::Test {
        sets.push(generate_offset_validation(scenario, &net, &cfg)?);
    }
    for ds in &sets {
        let m = save_dataset(ds, &dir, &ds.scenario)?;
        println!(
            "{}: {} rows, {:.2} s, sha256 {}",
            ds.scenario, m.row_count, m.wall_time_s, m.content_hash
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the first seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Up-front cost of a trained model, read by `benchmark`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpfrontCost {
    pub data_generation_s: f64,
    pub training_s: f64,
}

fn read_config(root: &Path, path: &Path) -> Result<RunConfig> {
    RunFile::read(&root.join(path))?.resolve(root)
}

fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.output_dir
        .join(format!("{}-{}-seed{}", cfg.flavour, cfg.scenario.label(), seed))
}

struct Prepared {
    net: NetworkModel,
    train: Dataset,
    validation: Dataset,
    collocation: Dataset,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let net = NetworkModel::load(&cfg.case).with_context(|| format!("loading case {}", cfg.case))?;
    let dir = tolerance_dir(&cfg.data_dir, &net.name, cfg.solver.rel_tol.max(cfg.solver.abs_tol));
    let train = scenario_data(&net, cfg.scenario, &dir, &cfg.solver)?;
    let validation = validation_data(&net, cfg.scenario, &dir, &cfg.solver)?;
    let collocation = collocation_grid(&Scenario::collocation_grid(), &net.name)?;
    Ok(Prepared {
        net,
        train,
        validation,
        collocation,
    })
}

fn train_one(p: &Prepared, cfg: &RunConfig, seed: u64) -> Result<PathBuf> {
    let mut hyper = cfg.hyperparameters.clone();
    hyper.seed = seed;
    let setup = TrainSetup {
        network: &p.net,
        train: &p.train,
        validation: &p.validation,
        collocation: Some(&p.collocation),
    };
    let out = train_model(&setup, cfg.flavour, &hyper)
        .with_context(|| format!("training {} seed {seed}", cfg.flavour))?;
    let dir = run_dir(cfg, seed);
    std::fs::create_dir_all(&dir)?;
    save_model(&out.model, &dir.join("model.swnn"))?;
    out.record.write(&dir, "train")?;
    let cost = UpfrontCost {
        data_generation_s: p.train.wall_time_s + p.validation.wall_time_s,
        training_s: out.record.total_wall_s(),
    };
    std::fs::write(dir.join("cost.json"), serde_json::to_string_pretty(&cost)?)?;
    let mut resolved = cfg.clone();
    resolved.seeds = vec![seed];
    resolved.hyperparameters = hyper;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&resolved)?)?;
    println!(
        "{}: best epoch {} of {}, validation Lx {:e}",
        dir.display(),
        out.record.best_epoch,
        out.record.epochs.len(),
        out.record.best_val_lx
    );
    Ok(dir)
}

pub fn train(root: &Path, a: TrainArgs) -> Result<()> {
    let mut cfg = read_config(root, &a.config)?;
    if let Some(e) = a.max_epochs {
        cfg.hyperparameters.max_epochs = e;
        cfg.hyperparameters.validate(cfg.flavour)?;
    }
    if let Some(o) = a.out {
        cfg.output_dir = root.join(o);
    }
    let seed = a.seed.unwrap_or(cfg.seeds[0]);
    let prepared = prepare(&cfg)?;
    train_one(&prepared, &cfg, seed)?;
    Ok(())
}

#[derive(Args)]
pub struct SeedMatrixArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seeds as a comma list or a half-open range `a..b`; the config's when omitted.
    #[arg(long)]
    seeds: Option<String>,
    /// Concurrent training runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    max_epochs: Option<usize>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {s}");
        }
        return Ok((a..b).collect());
    }
    parse_list(s)
}

pub fn seed_matrix(root: &Path, a: SeedMatrixArgs) -> Result<()> {
    let mut cfg = read_config(root, &a.config)?;
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(e) = a.max_epochs {
        cfg.hyperparameters.max_epochs = e;
    }
    if a.workers == 0 {
        bail!("workers must be at least 1");
    }
    let prepared = prepare(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .context("building worker pool")?;
    let dirs: Vec<PathBuf> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| train_one(&prepared, &cfg, s))
            .collect::<Result<_>>()
    })?;
    println!("{} models trained", dirs.len());
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Model files.
    #[arg(long, required = true, num_args = 1..)]
    model: Vec<PathBuf>,
    #[arg(long, default_value = "kundur11")]
    case: String,
    #[arg(long, default_value = "test")]
    scenario: String,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

/// Name of a model from its run directory, or its file stem.
fn model_name(path: &Path) -> String {
    match (path.file_stem(), path.parent().and_then(|p| p.file_name())) {
        (Some(stem), Some(parent)) if stem == "model" => parent.to_string_lossy().into_owned(),
        (Some(stem), _) => stem.to_string_lossy().into_owned(),
        _ => path.to_string_lossy().into_owned(),
    }
}

fn load_models(root: &Path, paths: &[PathBuf]) -> Result<Vec<(String, Surrogate, PathBuf)>> {
    paths
        .iter()
        .map(|p| {
            let full = root.join(p);
            let m = load_model(&full).with_context(|| format!("loading model {}", full.display()))?;
            Ok((model_name(&full), m, full))
        })
        .collect()
}

pub fn evaluate(root: &Path, a: EvaluateArgs) -> Result<()> {
    let net = load_network(&a.case, root)?;
    let scenario: Scenario = a.scenario.parse()?;
    let models = load_models(root, &a.model)?;
    let cfg = SolverConfig::with_tolerance(a.tolerance);
    let dir = tolerance_dir(&root.join(&a.data_dir), &net.name, a.tolerance);
    let test = scenario_data(&net, scenario, &dir, &cfg)?;
    let n_angles = net.layout.relative_angles();
    let out = root.join(&a.out);
    let mut summary = BenchmarkReport::default();
    for (name, model, _) in &models {
        if model.n_out() != net.layout.relative_len() {
            bail!("model {name} predicts {} states, case has {}", model.n_out(), net.layout.relative_len());
        }
        let acc = evaluate_accuracy(model, name, &test, n_angles)?;
        let per_model = BenchmarkReport {
            accuracy: vec![acc.row.clone()],
            distribution: acc.by_t.into_iter().chain(acc.by_p).collect(),
            ..Default::default()
        };
        emit_report(&per_model, &out.join(name))?;
        println!(
            "{name}: max AE delta {:.6} rad, max AE omega {:.3e} pu",
            acc.row.max_ae_delta, acc.row.max_ae_domega
        );
        summary.accuracy.push(acc.row);
    }
    emit_report(&summary, &out)?;
    Ok(())
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[arg(long, num_args = 1..)]
    model: Vec<PathBuf>,
    #[arg(long, default_value = "kundur11")]
    case: String,
    /// Solver tolerances, comma separated.
    #[arg(long, default_value = "1e-6")]
    tolerances: String,
    /// Prediction times, comma separated.
    #[arg(long, default_value = "1,5,10,20")]
    times: String,
    #[arg(long, default_value_t = 6.09)]
    disturbance: f64,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value = "benchmark")]
    out: PathBuf,
}

pub fn benchmark(root: &Path, a: BenchmarkArgs) -> Result<()> {
    let net = load_network(&a.case, root)?;
    let models = load_models(root, &a.model)?;
    let eps: Vec<f64> = parse_list(&a.tolerances)?;
    let times: Vec<f64> = parse_list(&a.times)?;
    if eps.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
        bail!("need at least one tolerance and positive times");
    }
    let queries: Vec<(f64, f64)> = times.iter().map(|&t| (t, a.disturbance)).collect();
    let mut report = BenchmarkReport::default();
    for e in &eps {
        let rows = time_solver(&net, &queries, &SolverConfig::with_tolerance(*e), a.reps)?;
        report.timing.extend(rows);
    }
    // the solver's cost per query at the longest horizon and the first tolerance
    let solver_run = report
        .timing
        .iter()
        .take(queries.len())
        .map(|r| r.median_s)
        .fold(0.0, f64::max);
    for (name, model, path) in &models {
        let rows = time_nn(model, &net.name, &queries, a.reps)?;
        let nn_run = rows.iter().map(|r| r.median_s).fold(0.0, f64::max);
        let upfront = path
            .parent()
            .map(|d| d.join("cost.json"))
            .filter(|p| p.exists())
            .map(|p| -> Result<f64> {
                let c: UpfrontCost = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                Ok(c.data_generation_s + c.training_s)
            })
            .transpose()?
            .unwrap_or(0.0);
        let nn = CostModel::new(upfront, nn_run);
        let solver = CostModel::new(0.0, solver_run);
        report.cost.push(CostRow {
            model: name.clone(),
            case: net.name.clone(),
            nn_upfront_s: upfront,
            nn_runtime_s: nn_run,
            solver_runtime_s: solver_run,
            critical_n: critical_n(&nn, &solver),
        });
        for r in rows {
            report.timing.push(r);
        }
    }
    let out = root.join(&a.out);
    emit_report(&report, &out)?;
    for r in &report.timing {
        println!("{:7} {:>24} t = {:5} s: {:.3e} s", r.method, r.setting, r.t, r.median_s);
    }
    for c in &report.cost {
        match c.critical_n {
            Some(n) => println!("{}: breaks even after {n} queries", c.model),
            None => println!("{}: never breaks even", c.model),
        }
    }
    Ok(())
}
