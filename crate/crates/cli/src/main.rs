//! `swingnet` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swingnet::datasets::DatasetError;
use swingnet::eval::EvalError;
use swingnet::grid::GridError;
use swingnet::solver::SolverError;
use swingnet::training::TrainError;

#[derive(Parser)]
#[command(name = "swingnet", version, about = "Swing-equation solver and neural surrogates")]
struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one disturbance and write the trajectory.
    Simulate(commands::SimulateArgs),
    /// Generate a scenario dataset (and its validation set).
    GenerateData(commands::GenerateArgs),
    /// Train one model from a run config.
    Train(commands::TrainArgs),
    /// Accuracy of trained models on the test grid.
    Evaluate(commands::EvaluateArgs),
    /// Query timings of models and the solver, with break-even counts.
    Benchmark(commands::BenchmarkArgs),
    /// Train every seed of a run config in a worker pool.
    SeedMatrix(commands::SeedMatrixArgs),
}

fn grid_numerical(e: &GridError) -> bool {
    matches!(e, GridError::NonConvergence { .. } | GridError::Unbalanced { .. })
}

fn solver_numerical(e: &SolverError) -> bool {
    match e {
        SolverError::StepRejected | SolverError::IntegrationFailed { .. } => true,
        SolverError::Grid(g) => grid_numerical(g),
        _ => false,
    }
}

fn dataset_numerical(e: &DatasetError) -> bool {
    match e {
        DatasetError::Trajectory { .. } => true,
        DatasetError::Solver(s) => solver_numerical(s),
        _ => false,
    }
}

/// 1 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    // transparent wrappers hide the inner error from the source chain
    let numerical = err.chain().any(|cause| {
        cause.downcast_ref::<SolverError>().is_some_and(solver_numerical)
            || cause.downcast_ref::<GridError>().is_some_and(grid_numerical)
            || cause.downcast_ref::<DatasetError>().is_some_and(dataset_numerical)
            || matches!(cause.downcast_ref::<TrainError>(), Some(TrainError::NonFinite(_)))
            || match cause.downcast_ref::<EvalError>() {
                Some(EvalError::Solver(s)) => solver_numerical(s),
                Some(EvalError::Grid(g)) => grid_numerical(g),
                Some(EvalError::Train(TrainError::NonFinite(_))) => true,
                _ => false,
            }
    });
    if numerical {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.root;
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&root, a),
        Command::GenerateData(a) => commands::generate_data(&root, a),
        Command::Train(a) => commands::train(&root, a),
        Command::Evaluate(a) => commands::evaluate(&root, a),
        Command::Benchmark(a) => commands::benchmark(&root, a),
        Command::SeedMatrix(a) => commands::seed_matrix(&root, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
