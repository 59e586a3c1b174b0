use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod output;

use args::{AlternativeArgs, BaseArgs, DirectionArg, DistanceArgs, ExampleArgs, GameArg, MeasureArgs, ModuliArgs, SolveArgs};

/// Solve continuous Bayesian games, bound equilibrium drift under belief
/// perturbations and verify reference examples.
#[derive(Parser)]
#[command(name = "cbne", version)]
struct Cli {
    /// Directory receiving JSON and CSV reports.
    #[arg(long, global = true, env = "CBNE_OUT_DIR", default_value = "reports")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve by contraction iteration.
    Solve {
        #[command(flatten)]
        game: GameArg,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        moduli: ModuliArgs,
    },
    /// Monotone iteration from the top and/or bottom profile.
    Monotone {
        #[command(flatten)]
        game: GameArg,
        #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
        direction: DirectionArg,
        /// Skip the sampled complementarity check.
        #[arg(long)]
        skip_order_check: bool,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        moduli: ModuliArgs,
    },
    /// Report moduli and the contraction constant.
    Moduli {
        #[command(flatten)]
        game: GameArg,
        /// Also test the best-response Lipschitz bounds on random draws.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[command(flatten)]
        moduli: ModuliArgs,
    },
    /// Distances between the game's type distribution and an alternative.
    Distance {
        #[command(flatten)]
        game: GameArg,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        alternative: AlternativeArgs,
        #[command(flatten)]
        distance: DistanceArgs,
        #[command(flatten)]
        moduli: ModuliArgs,
    },
    /// Equilibrium drift under a perturbed distribution against its bounds.
    Stability {
        #[command(flatten)]
        game: GameArg,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        alternative: AlternativeArgs,
        /// Mixture weight; the perturbation is the alternative itself when absent.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        moduli: ModuliArgs,
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Drift along the mixture path toward an alternative distribution.
    Sweep {
        #[command(flatten)]
        game: GameArg,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        alternative: AlternativeArgs,
        /// Strictly decreasing mixture weights in [0, 0.5].
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
        eps: Vec<f64>,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        moduli: ModuliArgs,
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Rebuild a reference Cournot game and check it against closed forms.
    VerifyExample {
        #[command(flatten)]
        example: ExampleArgs,
    },
}

/// Core errors that mean a certified assertion failed rather than bad input.
fn assertion_failure(e: &anyhow::Error) -> Option<&'static str> {
    match e.downcast_ref::<cbne::Error>()? {
        cbne::Error::Convergence { .. } => Some("convergence"),
        cbne::Error::OrderCondition(_) => Some("order_condition"),
        cbne::Error::Certification { .. } => Some("strong_concavity"),
        _ => None,
    }
}

fn run(cli: &Cli) -> anyhow::Result<commands::Outcome> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Solve { game, solve, moduli } => commands::solve(out, &game.game, solve, moduli),
        Command::Monotone {
            game,
            direction,
            skip_order_check,
            solve,
            moduli,
        } => commands::monotone(out, &game.game, solve, moduli, *direction, *skip_order_check),
        Command::Moduli {
            game,
            check,
            trials,
            moduli,
        } => commands::moduli(out, &game.game, moduli, *check, *trials),
        Command::Distance {
            game,
            base,
            alternative,
            distance,
            moduli,
        } => commands::distance(out, &game.game, base, alternative, distance, moduli),
        Command::Stability {
            game,
            base,
            alternative,
            epsilon,
            solve,
            moduli,
            measure,
        } => commands::stability(out, &game.game, base, alternative, *epsilon, solve, moduli, measure),
        Command::Sweep {
            game,
            base,
            alternative,
            eps,
            solve,
            moduli,
            measure,
        } => commands::sweep(out, &game.game, base, alternative, eps, solve, moduli, measure),
        Command::VerifyExample { example } => commands::verify_example(out, example),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("report: {}", outcome.written.json.display());
            for path in &outcome.written.csv {
                println!("csv: {}", path.display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                eprintln!("failed checks: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => match assertion_failure(&e) {
            Some(check) => {
                eprintln!("FAIL {check}: {e:#}");
                ExitCode::from(1)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
