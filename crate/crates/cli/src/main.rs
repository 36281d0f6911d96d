use clap::{Args, Parser, Subcommand};
use qmemtime_cli::commands::{self, Command, RunOptions};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "qmemtime",
    about = "Analysis of temporarily isolated subsystems of open quantum harmonic oscillators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory for artifacts; created if absent.
    #[arg(long)]
    out: PathBuf,

    /// Relative threshold level; overrides the scenario's analysis section.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Time horizon; overrides the scenario's analysis section.
    #[arg(long = "t-max")]
    t_max: Option<f64>,

    /// Number of time-grid steps; overrides the scenario's analysis section.
    #[arg(long)]
    grid: Option<usize>,

    /// Accept an initial covariance that fails the uncertainty-principle
    /// check instead of rejecting the scenario.
    #[arg(long = "allow-unphysical-P")]
    allow_unphysical_p: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Realize the scenario's state-space matrices.
    Realize(CommonArgs),
    /// Construct the isolated-subsystem basis and transformed blocks.
    Isolate(CommonArgs),
    /// Tabulate the mean-square deviation trajectory.
    Simulate(CommonArgs),
    /// Compute the threshold crossing time at one level.
    Decohere(CommonArgs),
    /// Sweep the crossing time over a grid of threshold levels.
    Sweep(CommonArgs),
    /// Retune the direct coupling to minimize the isolated-subsystem gain.
    Optimize(CommonArgs),
    /// Run the deterministic invariant suite and write a report.
    Verify(CommonArgs),
}

fn split(cmd: Cmd) -> (Command, CommonArgs) {
    match cmd {
        Cmd::Realize(a) => (Command::Realize, a),
        Cmd::Isolate(a) => (Command::Isolate, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Decohere(a) => (Command::Decohere, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Verify(a) => (Command::Verify, a),
    }
}

/// `QMEMTIME_THREADS` caps the worker pool; unset or invalid values leave
/// the default.
fn configure_threads() {
    if let Ok(raw) = std::env::var("QMEMTIME_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() {
    configure_threads();
    let cli = Cli::parse();
    let (command, args) = split(cli.command);
    let opts = RunOptions {
        epsilon: args.epsilon,
        t_max: args.t_max,
        grid: args.grid,
        allow_unphysical_p: args.allow_unphysical_p,
    };
    if let Err(e) = commands::run(command, &args.scenario, &args.out, &opts) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
