use std::path::PathBuf;
use std::process::ExitCode;

use brsmg::config::ExperimentConfig;
use brsmg::experiment::{
    cmd_baseline, cmd_eval, cmd_gen_demos, cmd_gradcheck, cmd_learn, cmd_simulate, cmd_solve, Context,
};
use brsmg::parallel::pool;
use brsmg::{Error, Result};
use brsmg_core::RiskMode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "brsmg", version, about = "Bounded risk-sensitive Markov games: solve, simulate and learn")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Experiment config (TOML). Without it every default applies and
    /// --seed is required.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Restrict solving and simulation to one risk mode.
    #[arg(long, global = true, value_enum)]
    risk_mode: Option<Mode>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Solve the true model and dump the policy tables.
    Solve,
    /// Roll out the true policies in every scenario.
    Simulate,
    /// Generate demonstrations from the true model.
    GenDemos,
    /// Learn exponents and rewards from demonstrations.
    Learn,
    /// Fit the risk-neutral MaxEnt IRL baseline.
    Baseline,
    /// Evaluate learned (or true) parameters.
    Eval,
    /// Check analytic gradients against finite differences.
    Gradcheck,
}

#[derive(ValueEnum, Clone, Copy)]
enum Mode {
    Cpt,
    Neutral,
}

fn context(cli: &Cli) -> Result<Context> {
    let mut cfg = match (&cli.config, cli.seed) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(seed)) => ExperimentConfig::with_seed(seed),
        (None, None) => return Err(Error::Config("either --config or --seed is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut ctx = Context::new(cfg);
    if let Some(out) = &cli.out {
        ctx.out_root = out.clone();
    }
    ctx.risk_mode = cli.risk_mode.map(|m| match m {
        Mode::Cpt => RiskMode::Cpt,
        Mode::Neutral => RiskMode::Neutral,
    });
    Ok(ctx)
}

fn run(cli: &Cli) -> Result<bool> {
    let ctx = context(cli)?;
    let dir = match cli.verb {
        Verb::Solve => {
            let out = cmd_solve(&ctx)?;
            for (mode, set) in &out.sets {
                let worst = brsmg_core::Agent::BOTH
                    .iter()
                    .flat_map(|&a| (1..=set.k_max()).map(move |k| set.level(a, k).residual()))
                    .fold(0.0, f64::max);
                println!("{mode:?}: max final residual {worst:.3e}");
            }
            out.dir
        }
        Verb::Simulate => {
            let out = cmd_simulate(&ctx)?;
            for r in &out.rs {
                println!("{:?} {}: RS {:.3} over {}", r.risk_mode, r.scenario, r.rs, r.episodes);
            }
            out.dir
        }
        Verb::GenDemos => {
            let out = cmd_gen_demos(&ctx)?;
            println!("{} demos", out.demos.len());
            out.dir
        }
        Verb::Learn => {
            let out = cmd_learn(&ctx)?;
            for (i, t) in out.trials.iter().enumerate() {
                if let (Some(a), Some(b)) = (t.trace.first(), t.trace.last()) {
                    println!(
                        "trial {i}: loglik {:.3} -> {:.3}, PPE {:.4} -> {:.4}, PL {:.5} -> {:.5}",
                        a.loglik, b.loglik, a.ppe, b.ppe, a.pl, b.pl
                    );
                }
            }
            out.dir
        }
        Verb::Baseline => {
            let out = cmd_baseline(&ctx)?;
            println!("best trial {} (loglik {:.3})", out.best, out.trials[out.best].loglik);
            out.dir
        }
        Verb::Eval => {
            let out = cmd_eval(&ctx)?;
            for (m, v) in brsmg::formats::report_rows(&out.report) {
                println!("{m} {v:.6}");
            }
            out.dir
        }
        Verb::Gradcheck => {
            let out = cmd_gradcheck(&ctx)?;
            let r = &out.report;
            println!(
                "{} of {} comparisons within tolerance",
                r.rows.len() - r.failed(),
                r.rows.len()
            );
            println!("{}", out.dir.display());
            return Ok(r.passed());
        }
    };
    println!("{}", dir.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = pool(cli.workers).and_then(|p| p.install(|| run(&cli)));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
