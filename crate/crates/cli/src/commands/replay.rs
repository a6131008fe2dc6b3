use anyhow::{Context, Result};
use benchcert_core::replay::{
    aggregate, asymmetric_sweep, calibrate, calibration_mae, lock_manifest, log_ratio_grid, plan_split, plan_splits,
    score_split, score_splits, write_manifest, AcquisitionOracle, CalibrationMode, CalibrationRule, CostModel,
    ReplayConfig, ReplayOutcome, SplitPlan,
};
use benchcert_core::FiberRule;
use serde_json::{json, Value};

use crate::args::{ModeName, OracleName, ReplayArgs, RuleName};
use crate::error::{data, usage};
use crate::ingest::ingest_candidates;
use crate::report::{num, opt_count, opt_num, OutputDir, Report};

use super::{load_schema, resolve_rule};

const DEFAULT_SPLITS: usize = 100;
const DEFAULT_FRACTION: f64 = 0.5;

fn calibration_rule(args: &ReplayArgs, report: &mut Report) -> Result<CalibrationRule> {
    let p = &mut report.parameters;
    p.set("min-support", args.min_support);
    let mode = match args.mode {
        ModeName::Unanimity => {
            if args.tau_bound.is_some() || args.delta.is_some() || args.multiplicity.is_some() {
                return Err(usage("--tau-bound, --delta and --multiplicity apply to --mode clopper-pearson"));
            }
            p.set("mode", "unanimity");
            CalibrationMode::Unanimity
        }
        ModeName::ClopperPearson => {
            let tau_bound = args.tau_bound.ok_or_else(|| usage("--mode clopper-pearson needs --tau-bound"))?;
            let delta = args.delta.unwrap_or(0.05);
            let multiplicity = args.multiplicity.unwrap_or(1);
            p.set("mode", "clopper-pearson");
            p.set("tau-bound", tau_bound);
            p.set("delta", delta);
            p.set("multiplicity", multiplicity);
            CalibrationMode::ClopperPearson { tau_bound, delta, multiplicity }
        }
    };
    let rule = CalibrationRule { min_support: args.min_support, mode };
    rule.validate()?;
    Ok(rule)
}

fn oracle(args: &ReplayArgs, report: &mut Report) -> Result<AcquisitionOracle> {
    let o = match (args.oracle, args.flip_rate) {
        (OracleName::Exact, None) => AcquisitionOracle::Exact,
        (OracleName::Exact, Some(_)) => return Err(usage("--flip-rate applies to --oracle noisy")),
        (OracleName::Noisy, Some(flip_rate)) => {
            report.parameters.set("flip-rate", flip_rate);
            AcquisitionOracle::Noisy { flip_rate }
        }
        (OracleName::Noisy, None) => return Err(usage("--oracle noisy needs --flip-rate")),
    };
    report.parameters.set("oracle", if args.oracle == OracleName::Exact { "exact" } else { "noisy" });
    o.validate()?;
    Ok(o)
}

fn costs(args: &ReplayArgs, report: &mut Report) -> Result<Option<CostModel>> {
    match (args.cost_fp, args.cost_fn, args.cost_acq) {
        (None, None, None) => Ok(None),
        (Some(fp), Some(fn_), Some(acq)) => {
            report.parameters.set("cost-fp", fp);
            report.parameters.set("cost-fn", fn_);
            report.parameters.set("cost-acq", acq);
            Ok(Some(CostModel::new(fp, fn_, acq)?))
        }
        _ => Err(usage("--cost-fp, --cost-fn and --cost-acq must be given together")),
    }
}

fn outcome_row(o: &ReplayOutcome) -> Vec<String> {
    vec![
        o.split.to_string(),
        o.n_calibration.to_string(),
        o.n_heldout.to_string(),
        o.certified_fibers.to_string(),
        o.decided_immediately.to_string(),
        o.deferred.to_string(),
        o.acquired.to_string(),
        o.unseen.to_string(),
        o.false_before.to_string(),
        o.false_after.to_string(),
        o.false_after_certified.to_string(),
        opt_count(o.fp_before),
        opt_count(o.fn_before),
        opt_count(o.fp_after),
        opt_count(o.fn_after),
        num(o.false_before_rate),
        num(o.false_after_rate),
        num(o.deferred_rate),
        opt_num(o.break_even),
    ]
}

const OUTCOME_COLUMNS: [&str; 19] = [
    "split",
    "n_calibration",
    "n_heldout",
    "certified_fibers",
    "decided_immediately",
    "deferred",
    "acquired",
    "unseen",
    "false_before",
    "false_after",
    "false_after_certified",
    "fp_before",
    "fn_before",
    "fp_after",
    "fn_after",
    "false_before_rate",
    "false_after_rate",
    "deferred_rate",
    "break_even",
];

fn lock(args: &ReplayArgs, report: &Report, dir: &mut OutputDir, plans: &[SplitPlan]) -> Result<Option<String>> {
    if !args.lock {
        return Ok(None);
    }
    let content = json!({
        "tool": report.tool,
        "version": report.version,
        "inputs": report.inputs,
        "parameters": report.parameters,
        "plans": plans,
    });
    let manifest = lock_manifest(&content, args.timestamp.clone())?;
    let path = dir.path("lock.json");
    write_manifest(&manifest, &path).with_context(|| format!("cannot write {}", path.display()))?;
    dir.record("lock.json");
    dir.record("lock.json.sha256");
    Ok(Some(manifest.digest))
}

pub fn run(args: &ReplayArgs) -> Result<String> {
    let mut report = Report::new("replay");
    let schema = load_schema(args.schema.as_deref(), &mut report)?;
    let mut rule_args = args.rule.clone();
    if args.window_from_mae {
        if rule_args.rule != RuleName::Window {
            return Err(usage("--window-from-mae needs --rule window"));
        }
        rule_args.tol.get_or_insert(0.0);
    }
    let rule = resolve_rule(&rule_args, &mut report.parameters)?;
    report.parameters.flag("window-from-mae", args.window_from_mae);
    let cal_rule = calibration_rule(args, &mut report)?;
    let oracle = oracle(args, &mut report)?;
    let cost_model = costs(args, &mut report)?;
    report.parameters.set_opt("cost-sweep", args.cost_sweep);
    report.parameters.flag("lock", args.lock);
    report.parameters.set_opt("timestamp", args.timestamp.clone());
    report.parameters.set("seed", args.seed);

    let mut dir = OutputDir::create(&args.out.out)?;
    let (plans, outcomes) = match (&args.candidates, &args.calibration, &args.heldout) {
        (Some(path), None, None) => {
            report.input("candidates", path)?;
            let splits = args.splits.unwrap_or(DEFAULT_SPLITS);
            let frac = args.frac.unwrap_or(DEFAULT_FRACTION);
            report.parameters.set("splits", splits);
            report.parameters.set("frac", frac);
            let ingested = ingest_candidates(path, &schema)?;
            report.warnings.extend(ingested.warnings);
            let table = ingested.table;
            let config = ReplayConfig {
                rule,
                cal_rule,
                oracle,
                calibration_fraction: frac,
                splits,
                seed: args.seed,
                window_from_mae: args.window_from_mae,
            };
            let planned = plan_splits(&table, &config)?;
            let plans: Vec<SplitPlan> = planned.iter().map(|(_, _, p)| p.clone()).collect();
            lock(args, &report, &mut dir, &plans)?;
            let run = score_splits(&table, &planned, oracle)?;
            (run.plans, run.outcomes)
        }
        (None, Some(cal_path), Some(held_path)) => {
            if args.splits.is_some() || args.frac.is_some() {
                return Err(usage("--splits and --frac apply to --candidates, not to --calibration/--heldout"));
            }
            report.input("calibration", cal_path)?;
            report.input("heldout", held_path)?;
            let cal = ingest_candidates(cal_path, &schema)?;
            let held = ingest_candidates(held_path, &schema)?;
            report.warnings.extend(cal.warnings);
            report.warnings.extend(held.warnings);
            let rule = match rule {
                FiberRule::ErrorWindow { .. } if args.window_from_mae => {
                    FiberRule::ErrorWindow { tolerance: calibration_mae(&cal.table)? }
                }
                r => r,
            };
            let map = calibrate(&cal.table, rule, cal_rule)?;
            if map.alphabet != *held.table.alphabet().ok_or_else(|| data("held-out table has no d_label column"))? {
                return Err(data("calibration and held-out label alphabets differ; declare one with --schema"));
            }
            let plan = plan_split(&map, &held.table, 0, Some(args.seed))?;
            lock(args, &report, &mut dir, std::slice::from_ref(&plan))?;
            let outcome = score_split(&plan, &map, &held.table, oracle, args.seed)?;
            (vec![plan], vec![outcome])
        }
        _ => return Err(usage("give either --candidates or both --calibration and --heldout")),
    };
    let agg = aggregate(&outcomes)?;

    dir.csv("replay_splits.csv", &OUTCOME_COLUMNS, outcomes.iter().map(outcome_row))?;
    dir.csv(
        "decisions.csv",
        &["split", "id", "fiber", "route", "action", "benchmark_action"],
        plans.iter().flat_map(|p| {
            p.decisions.iter().map(move |d| {
                vec![
                    p.split.to_string(),
                    d.id.clone(),
                    d.fiber.clone().unwrap_or_default(),
                    serde_json::to_value(d.route).map(|v| crate::report::cell(&v)).unwrap_or_default(),
                    d.action.clone().unwrap_or_default(),
                    d.benchmark_action.clone(),
                ]
            })
        }),
    )?;

    let binary = outcomes.iter().all(|o| o.fp_before.is_some());
    let sum = |f: fn(&ReplayOutcome) -> Option<usize>| outcomes.iter().filter_map(f).sum::<usize>();
    let (fp_b, fn_b, fp_a, fn_a) = (
        sum(|o| o.fp_before),
        sum(|o| o.fn_before),
        sum(|o| o.fp_after),
        sum(|o| o.fn_after),
    );
    let mut metrics = json!({ "aggregate": agg });
    if binary {
        metrics["pooled_errors"] = json!({
            "fp_before": fp_b, "fn_before": fn_b, "fp_after": fp_a, "fn_after": fn_a,
        });
    }
    if let Some(c) = cost_model {
        if !binary {
            return Err(data("cost accounting needs a binary action alphabet"));
        }
        metrics["costs"] = json!({
            "benchmark": c.benchmark_cost(fp_b, fn_b),
            "completion": c.completion_cost(fp_a, fn_a, agg.total_acquired),
        });
    }
    if let Some(points) = args.cost_sweep {
        if !binary {
            return Err(data("the cost sweep needs a binary action alphabet"));
        }
        let rows = asymmetric_sweep(fp_b, fn_b, fp_a, fn_a, agg.total_acquired, &log_ratio_grid(points))?;
        dir.csv(
            "cost_sweep.csv",
            &["ratio", "c_fp", "c_fn", "break_even_acq", "cost_effective"],
            rows.iter().map(|r| {
                vec![num(r.ratio), num(r.c_fp), num(r.c_fn), num(r.break_even_acq), r.cost_effective.to_string()]
            }),
        )?;
        metrics["cost_sweep"] = serde_json::to_value(&rows)?;
    }
    if outcomes.iter().any(|o| o.unseen > 0) {
        report
            .warnings
            .push("some held-out rows fell in fibers unseen during calibration; they were deferred".to_owned());
    }
    metrics["outcomes"] = Value::Array(outcomes.iter().map(serde_json::to_value).collect::<Result<_, _>>()?);
    report.metrics = metrics;
    dir.finish(report)
}
