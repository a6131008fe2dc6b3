use anyhow::Result;
use benchcert_core::synth::{
    run_completion_policy_experiment, run_constrained_fiber_experiment, run_leaderboard_experiment,
    run_residual_correlation, run_transfer_experiment, run_zero_error_control, CompletionPolicyConfig,
    ConstrainedConfig, CorrelationConfig, ExperimentResult, LeaderboardConfig, TransferConfig, ZeroErrorConfig,
};
use serde_json::json;

use crate::args::{ExperimentName, SynthArgs};
use crate::error::usage;
use crate::report::{cell, OutputDir, Params, Report};

/// Rejects flags the chosen experiment does not read.
fn check_flags(args: &SynthArgs) -> Result<()> {
    use ExperimentName::*;
    let e = args.experiment;
    let given = [
        ("--sigma", args.sigma.is_some(), &[Transfer, Correlation, Completion][..]),
        ("--alpha", args.alpha.is_some(), &[Transfer, Leaderboard, Correlation, Completion][..]),
        ("--radius", args.radius.is_some(), &[Transfer, ZeroError, Leaderboard, Correlation, Completion][..]),
        ("--g-grid", !args.g_grid.is_empty(), &[Transfer, ZeroError][..]),
        ("--headline-g", args.headline_g.is_some(), &[Transfer][..]),
        ("--g", args.g.is_some(), &[Correlation, Completion][..]),
        ("--pool-size", args.pool_size.is_some(), &[Correlation, Completion][..]),
        ("--steps", args.steps.is_some(), &[Completion][..]),
        ("--coupling", args.coupling.is_some(), &[Constrained][..]),
        ("--band", args.band.is_some(), &[Constrained][..]),
        ("--ambient-bound", args.ambient_bound.is_some(), &[Constrained][..]),
    ];
    for (flag, set, owners) in given {
        if set && !owners.contains(&e) {
            return Err(usage(format!("{flag} does not apply to --experiment {}", e.as_str())));
        }
    }
    Ok(())
}

fn correlation_config(args: &SynthArgs, base: CorrelationConfig, p: &mut Params) -> CorrelationConfig {
    let c = CorrelationConfig {
        g: args.g.unwrap_or(base.g),
        sigma: args.sigma.unwrap_or(base.sigma),
        alpha: args.alpha.unwrap_or(base.alpha),
        radius: args.radius.or(base.radius),
        tau: args.tau.unwrap_or(base.tau),
        pool_size: args.pool_size.unwrap_or(base.pool_size),
        n_candidates: args.n_candidates.unwrap_or(base.n_candidates),
        n_seeds: args.seeds.unwrap_or(base.n_seeds),
        seed: args.seed,
        ..base
    };
    p.set("g", c.g);
    p.set("sigma", c.sigma);
    p.set("alpha", c.alpha);
    p.set_opt("radius", c.radius);
    p.set("tau", c.tau);
    p.set("pool-size", c.pool_size);
    p.set("n-candidates", c.n_candidates);
    p.set("seeds", c.n_seeds);
    c
}

fn run_experiment(args: &SynthArgs, p: &mut Params) -> Result<ExperimentResult> {
    p.set("experiment", args.experiment.as_str());
    p.set("seed", args.seed);
    let result = match args.experiment {
        ExperimentName::Transfer => {
            let d = TransferConfig::default();
            let mut c = TransferConfig {
                headline_g: args.headline_g.unwrap_or(d.headline_g),
                radius: args.radius.or(d.radius),
                base: d.base,
            };
            let b = &mut c.base;
            b.sigma = args.sigma.unwrap_or(b.sigma);
            b.alpha = args.alpha.unwrap_or(b.alpha);
            b.tau = args.tau.unwrap_or(b.tau);
            if !args.g_grid.is_empty() {
                b.g_grid = args.g_grid.clone();
            }
            b.n_candidates = args.n_candidates.unwrap_or(b.n_candidates);
            b.n_seeds = args.seeds.unwrap_or(b.n_seeds);
            b.seed = args.seed;
            p.set("sigma", b.sigma);
            p.set("alpha", b.alpha);
            p.set("tau", b.tau);
            p.list("g-grid", &b.g_grid);
            p.set("n-candidates", b.n_candidates);
            p.set("seeds", b.n_seeds);
            p.set("headline-g", c.headline_g);
            p.set_opt("radius", c.radius);
            run_transfer_experiment(&c)?
        }
        ExperimentName::ZeroError => {
            let d = ZeroErrorConfig::default();
            let c = ZeroErrorConfig {
                g_grid: if args.g_grid.is_empty() { d.g_grid.clone() } else { args.g_grid.clone() },
                radius: args.radius.unwrap_or(d.radius),
                tau: args.tau.unwrap_or(d.tau),
                n_candidates: args.n_candidates.unwrap_or(d.n_candidates),
                n_seeds: args.seeds.unwrap_or(d.n_seeds),
                seed: args.seed,
                ..d
            };
            p.list("g-grid", &c.g_grid);
            p.set("radius", c.radius);
            p.set("tau", c.tau);
            p.set("n-candidates", c.n_candidates);
            p.set("seeds", c.n_seeds);
            run_zero_error_control(&c)?
        }
        ExperimentName::Leaderboard => {
            let d = LeaderboardConfig::default();
            let c = LeaderboardConfig {
                alpha: args.alpha.unwrap_or(d.alpha),
                radius: args.radius.unwrap_or(d.radius),
                tau: args.tau.unwrap_or(d.tau),
                n_candidates: args.n_candidates.unwrap_or(d.n_candidates),
                n_seeds: args.seeds.unwrap_or(d.n_seeds),
                seed: args.seed,
                ..d
            };
            p.set("alpha", c.alpha);
            p.set("radius", c.radius);
            p.set("tau", c.tau);
            p.set("n-candidates", c.n_candidates);
            p.set("seeds", c.n_seeds);
            run_leaderboard_experiment(&c)?
        }
        ExperimentName::Correlation => {
            let c = correlation_config(args, CorrelationConfig::default(), p);
            run_residual_correlation(&c)?
        }
        ExperimentName::Constrained => {
            let d = ConstrainedConfig::default();
            let c = ConstrainedConfig {
                coupling: args.coupling.unwrap_or(d.coupling),
                band: args.band.unwrap_or(d.band),
                ambient_bound: args.ambient_bound.unwrap_or(d.ambient_bound),
                tau: args.tau.unwrap_or(d.tau),
                n_candidates: args.n_candidates.unwrap_or(d.n_candidates),
                n_seeds: args.seeds.unwrap_or(d.n_seeds),
                seed: args.seed,
            };
            p.set("coupling", c.coupling);
            p.set("band", c.band);
            p.set("ambient-bound", c.ambient_bound);
            p.set("tau", c.tau);
            p.set("n-candidates", c.n_candidates);
            p.set("seeds", c.n_seeds);
            run_constrained_fiber_experiment(&c)?
        }
        ExperimentName::Completion => {
            let d = CompletionPolicyConfig::default();
            let correlation = correlation_config(args, d.correlation.clone(), p);
            let c = CompletionPolicyConfig {
                correlation,
                steps: args.steps.unwrap_or(d.steps),
                ..d
            };
            p.set("steps", c.steps);
            run_completion_policy_experiment(&c)?
        }
    };
    Ok(result)
}

pub fn run(args: &SynthArgs) -> Result<String> {
    check_flags(args)?;
    let mut report = Report::new("synth");
    let result = run_experiment(args, &mut report.parameters)?;
    let mut dir = OutputDir::create(&args.out.out)?;
    for (name, table) in result.tables.iter().chain(std::iter::once((&"per_seed".to_owned(), &result.per_seed_table()))) {
        let header: Vec<&str> = table.columns.iter().map(String::as_str).collect();
        dir.csv(&format!("{name}.csv"), &header, table.rows.iter().map(|r| r.iter().map(cell).collect()))?;
    }
    report.metrics = json!({
        "experiment": result.experiment,
        "configuration": result.parameters,
        "aggregate": result.aggregate,
    });
    dir.finish(report)
}
