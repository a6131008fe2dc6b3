use std::collections::BTreeMap;

use anyhow::Result;
use benchcert_core::completion::benchmark_alignment;
use benchcert_core::linalg::dot;
use benchcert_core::{
    certify_interval, completion_curve, delta_q, kappa_epsilon, updated_residual, CandidateBound, CompletionPolicy,
    Probe, ProbePool, ResponseGeometry,
};
use serde_json::json;

use crate::args::{CompleteArgs, PolicyName};
use crate::error::{data, usage};
use crate::ingest::{ingest_vectors, VectorFile};
use crate::report::{num, OutputDir, Report};

fn same_coordinates(a: &VectorFile, b: &VectorFile, what: &str) -> Result<()> {
    if a.coordinates != b.coordinates {
        return Err(data(format!(
            "{what} coordinates {:?} differ from the benchmark probe coordinates {:?}",
            b.coordinates, a.coordinates
        )));
    }
    Ok(())
}

pub fn run(args: &CompleteArgs) -> Result<String> {
    let mut report = Report::new("complete");
    report.input("probes", &args.probes)?;
    report.input("deployment", &args.deployment)?;
    report.input("pool", &args.pool)?;
    if let Some(s) = &args.states {
        report.input("states", s)?;
    }
    let p = &mut report.parameters;
    p.set("policy", args.policy.as_str());
    p.list("budgets", &args.budgets);
    p.set_opt("epsilon", args.epsilon);
    p.set("delta", args.delta);
    p.set("radius", args.radius);
    p.set("tau", args.tau);
    p.set("seed", args.seed);

    let probes = ingest_vectors(&args.probes, false)?;
    let deployment = ingest_vectors(&args.deployment, false)?;
    let pool_file = ingest_vectors(&args.pool, true)?;
    same_coordinates(&probes, &deployment, "deployment probe")?;
    same_coordinates(&probes, &pool_file, "pool")?;
    if deployment.vectors.len() != 1 {
        return Err(data(format!(
            "{}: expected exactly one deployment probe, found {}",
            args.deployment.display(),
            deployment.vectors.len()
        )));
    }
    let states = match &args.states {
        Some(path) => {
            let s = ingest_vectors(path, false)?;
            same_coordinates(&probes, &s, "state")?;
            Some(s.vectors)
        }
        None => None,
    };
    let costs = pool_file.costs.clone().expect("pool has costs");
    let pool = ProbePool::new(
        pool_file
            .ids
            .iter()
            .zip(&pool_file.vectors)
            .zip(&costs)
            .map(|((id, v), &cost)| Probe {
                id: id.clone(),
                vector: v.clone(),
                cost,
            })
            .collect(),
    )?;
    let start = ResponseGeometry::with_default_tolerance(&probes.vectors, &deployment.vectors[0])?;

    let policy = match args.policy {
        PolicyName::ResidualGreedy => CompletionPolicy::ResidualGreedy,
        PolicyName::Random => CompletionPolicy::Random { seed: args.seed },
        PolicyName::BenchmarkAligned => CompletionPolicy::BenchmarkAligned,
        PolicyName::Uncertainty => CompletionPolicy::Uncertainty,
        PolicyName::Diversity => CompletionPolicy::Diversity,
        PolicyName::Oracle => CompletionPolicy::OracleUpperBound,
    };
    if policy == CompletionPolicy::Uncertainty && states.is_none() {
        return Err(usage("--policy uncertainty needs --states"));
    }
    let measured: Option<BTreeMap<String, Vec<f64>>> = states.as_ref().map(|st| {
        pool.probes()
            .iter()
            .map(|p| (p.id.clone(), st.iter().map(|s| dot(&p.vector, s)).collect()))
            .collect()
    });

    let (delta, radius, tau) = (args.delta, args.radius, args.tau);
    CandidateBound::new(0.0, delta, radius)?;
    let certifier = |geo: &ResponseGeometry| -> benchcert_core::Result<f64> {
        match &states {
            Some(st) => {
                let g = geo.residual_norm();
                let certified = st
                    .iter()
                    .filter(|s| {
                        let b = CandidateBound { center: geo.center(s), delta, radius };
                        certify_interval(b, g, tau).class.is_certified()
                    })
                    .count();
                Ok(certified as f64 / st.len() as f64)
            }
            None => Ok(if geo.residual_norm() == 0.0 { 1.0 } else { 0.0 }),
        }
    };
    if states.is_none() {
        report
            .warnings
            .push("no --states given: certified fraction is 1 when the residual vanishes and 0 otherwise".to_owned());
    }

    let curve = completion_curve(&start, &pool, policy, &certifier, &args.budgets, measured.as_ref())?;
    let kappa = args.epsilon.map(|e| kappa_epsilon(&curve, e)).transpose()?;
    if curve.upper_bound_only {
        report
            .warnings
            .push("the oracle policy uses realized gains; its curve is an upper bound, not a deployable policy".to_owned());
    }

    let mut dir = OutputDir::create(&args.out.out)?;
    dir.csv(
        "completion_curve.csv",
        &["budget", "spent", "probes", "residual_norm", "certified_fraction"],
        curve.points.iter().map(|p| {
            vec![num(p.budget), num(p.spent), p.probes.to_string(), num(p.residual_norm), num(p.certified_fraction)]
        }),
    )?;
    dir.csv(
        "selection_order.csv",
        &["step", "probe_id", "cost", "cumulative_cost", "residual_norm", "certified_fraction"],
        curve.steps.iter().map(|s| {
            vec![
                s.step.to_string(),
                s.probe_id.clone(),
                num(s.cost),
                num(s.cumulative_cost),
                num(s.residual_norm),
                num(s.certified_fraction),
            ]
        }),
    )?;
    let mut scores = Vec::with_capacity(pool.len());
    for p in pool.probes() {
        scores.push(vec![
            p.id.clone(),
            num(p.cost),
            num(delta_q(&start, &p.vector)?),
            num(updated_residual(&start, &p.vector)?),
            num(benchmark_alignment(&start, &p.vector)?),
        ]);
    }
    dir.csv(
        "probe_scores.csv",
        &["probe_id", "cost", "delta_q", "updated_residual", "benchmark_alignment"],
        scores,
    )?;

    report.metrics = json!({
        "dimension": start.dim(),
        "benchmark_rank": start.rank(),
        "residual_norm": start.residual_norm(),
        "policy": curve.policy,
        "upper_bound_only": curve.upper_bound_only,
        "start_fraction": curve.start_fraction,
        "points": curve.points,
        "order": curve.order,
        "kappa_epsilon": kappa.flatten(),
    });
    dir.finish(report)
}
