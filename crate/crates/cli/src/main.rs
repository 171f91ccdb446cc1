use bdf_cli::{run, RunOptions, Subcommand};
use clap::{Args, Parser};
use std::path::PathBuf;
use std::process::ExitCode;

/// Momentum-space Bogoliubov–Dirac–Fock solver for graphene.
///
/// Exit codes: 0 success, 2 config error, 3 non-convergence, 4 invariant
/// violation.
#[derive(Parser)]
#[command(name = "bdf", version)]
enum Cli {
    /// Tabulate g(R) over a log-spaced ladder.
    Gfunc(Common),
    /// Tabulate the effective Fermi velocity near p = 0.
    Veff(Common),
    /// Estimate h(v_F) and the critical velocity.
    Critical(Common),
    /// Solve for the self-consistent ground state.
    Scf(Common),
    /// Propagate a state in time.
    Evolve(Common),
    /// Run the invariant suite on seeded random states.
    Check(Common),
    /// Time the naive and blocked exchange assembly.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (command, args) = match Cli::parse() {
        Cli::Gfunc(a) => (Subcommand::Gfunc, a),
        Cli::Veff(a) => (Subcommand::Veff, a),
        Cli::Critical(a) => (Subcommand::Critical, a),
        Cli::Scf(a) => (Subcommand::Scf, a),
        Cli::Evolve(a) => (Subcommand::Evolve, a),
        Cli::Check(a) => (Subcommand::Check, a),
        Cli::Bench(a) => (Subcommand::Bench, a),
    };
    let code = run(command, &RunOptions { config: args.config, out: args.out, seed: args.seed });
    ExitCode::from(code as u8)
}
