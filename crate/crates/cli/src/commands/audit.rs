use anyhow::Result;
use benchcert_core::{run_audit, AuditReport, FiberRule};
use serde_json::{json, Value};

use crate::args::AuditArgs;
use crate::error::usage;
use crate::ingest::ingest_candidates;
use crate::report::{num, opt_num, OutputDir, Report};

use super::{load_schema, resolve_rule};

fn summary(r: &AuditReport) -> Result<Value> {
    let mut v = serde_json::to_value(r)?;
    if let Value::Object(m) = &mut v {
        m.remove("per_fiber");
        m.remove("warnings");
    }
    Ok(v)
}

pub fn run(args: &AuditArgs) -> Result<String> {
    let mut report = Report::new("audit");
    report.input("candidates", &args.candidates)?;
    let schema = load_schema(args.schema.as_deref(), &mut report)?;
    let rule = resolve_rule(&args.rule, &mut report.parameters)?;
    report.parameters.set_opt("tau", args.tau);
    report.parameters.set_opt("epsilon", args.epsilon);
    if !args.bins_sweep.is_empty() {
        if args.bins_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return Err(usage("--bins-sweep must be strictly increasing"));
        }
        report.parameters.list("bins-sweep", &args.bins_sweep);
    }
    let out = &args.out.out;

    let ingested = ingest_candidates(&args.candidates, &schema)?;
    report.warnings.extend(ingested.warnings);
    let table = ingested.table;
    let audit = run_audit(&table, rule, args.tau, args.epsilon)?;
    report.warnings.extend(audit.warnings.iter().cloned());

    let mut dir = OutputDir::create(out)?;
    if !audit.per_fiber.is_empty() {
        let tokens: Vec<String> = table
            .alphabet()
            .filter(|_| table.has_labels())
            .map(|a| a.tokens().to_vec())
            .unwrap_or_default();
        let mut header = vec!["fiber".to_owned(), "size".to_owned()];
        header.extend(tokens.iter().map(|t| format!("label_{t}")));
        header.extend(["pure", "threshold_class", "minimax_regret"].map(String::from));
        let rows = audit.per_fiber.iter().map(|f| {
            let mut row = vec![f.key.to_string(), f.size.to_string()];
            row.extend(tokens.iter().map(|t| f.labels.get(t).copied().unwrap_or(0).to_string()));
            row.push(if table.has_labels() { f.pure.to_string() } else { String::new() });
            row.push(f.threshold_class.map(|c| c.as_str().to_owned()).unwrap_or_default());
            row.push(opt_num(f.minimax_regret));
            row
        });
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        dir.csv("fibers.csv", &header_refs, rows)?;
    }

    let mut metrics = json!({ "audit": summary(&audit)? });
    if !args.bins_sweep.is_empty() {
        let mut sweep = Vec::new();
        for &bins in &args.bins_sweep {
            let r = run_audit(&table, FiberRule::Quantile { bins_per_dim: bins }, args.tau, args.epsilon)?;
            sweep.push((bins, r));
        }
        dir.csv(
            "quantile_sweep.csv",
            &[
                "bins",
                "fiber_count",
                "median_fiber_size",
                "cert_fraction",
                "amb_fraction",
                "bayes_error",
                "rho",
                "threshold_certified_fraction",
            ],
            sweep.iter().map(|(bins, r)| {
                vec![
                    bins.to_string(),
                    r.fiber_count.to_string(),
                    r.median_fiber_size.to_string(),
                    num(r.cert_fraction),
                    num(r.amb_fraction),
                    opt_num(r.bayes_error),
                    opt_num(r.rho),
                    opt_num(r.threshold.as_ref().map(|t| t.certified_fraction)),
                ]
            }),
        )?;
        metrics["quantile_sweep"] =
            Value::Array(sweep.iter().map(|(_, r)| summary(r)).collect::<Result<_>>()?);
    }
    report.metrics = metrics;
    dir.finish(report)
}
