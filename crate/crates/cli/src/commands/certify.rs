use anyhow::Result;
use benchcert_core::{certify_interval, radius_sensitivity, CandidateBound, ThresholdClass};
use serde_json::json;

use crate::args::CertifyArgs;
use crate::error::{data, CliError};
use crate::ingest::ingest_bounds;
use crate::report::{num, OutputDir, Report};

pub fn run(args: &CertifyArgs) -> Result<String> {
    let mut report = Report::new("certify");
    report.input("candidates", &args.candidates)?;
    report.parameters.set("g", args.g);
    report.parameters.set("tau", args.tau);
    report.parameters.set_opt("radius", args.radius);
    report.parameters.flag("radius-sweep", args.radius_sweep);
    if !(args.g.is_finite() && args.g >= 0.0) {
        return Err(data(format!("--g must be finite and nonnegative, got {}", args.g)));
    }
    if !args.tau.is_finite() {
        return Err(data("--tau must be finite"));
    }

    let rows = ingest_bounds(&args.candidates, args.radius)?;
    let n = rows.ids.len();
    let bounds = (0..n)
        .map(|i| {
            CandidateBound::new(rows.y_hat[i], rows.delta[i], rows.radius[i])
                .map_err(|e| data(format!("{}: candidate {:?}: {e}", args.candidates.display(), rows.ids[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let certs: Vec<_> = bounds.iter().map(|&b| certify_interval(b, args.g, args.tau)).collect();
    if let Some(i) = certs.iter().position(|c| !(c.lo.is_finite() && c.hi.is_finite())) {
        return Err(CliError::Numerical(format!(
            "interval for candidate {:?} overflows: y_hat ± (delta + radius·g) is not finite",
            rows.ids[i]
        ))
        .into());
    }

    let count = |c: ThresholdClass| certs.iter().filter(|x| x.class == c).count();
    let positive = count(ThresholdClass::CertifiedPositive);
    let negative = count(ThresholdClass::CertifiedNegative);
    let ambiguous = count(ThresholdClass::Ambiguous);
    let mut metrics = json!({
        "n": n,
        "certified_positive": positive,
        "certified_negative": negative,
        "ambiguous": ambiguous,
        "certified_fraction": (positive + negative) as f64 / n as f64,
        "ambiguous_fraction": ambiguous as f64 / n as f64,
    });

    let mut dir = OutputDir::create(&args.out.out)?;
    let mut header = vec!["id", "y_hat", "delta", "radius", "lo", "hi", "class"];
    if let Some(ys) = &rows.y_star {
        header.extend(["y_star", "covered", "false_certificate"]);
        let known: Vec<(usize, f64)> = ys.iter().enumerate().filter_map(|(i, y)| y.map(|v| (i, v))).collect();
        let covered = known.iter().filter(|(i, y)| certs[*i].contains(*y)).count();
        let false_certs = known
            .iter()
            .filter(|(i, y)| {
                let c = certs[*i].class;
                c.is_certified() && (c == ThresholdClass::CertifiedPositive) != (*y > args.tau)
            })
            .count();
        metrics["labelled"] = json!(known.len());
        metrics["coverage"] = json!((!known.is_empty()).then(|| covered as f64 / known.len() as f64));
        metrics["false_certificates"] = json!(false_certs);
    }
    let out_rows = (0..n).map(|i| {
        let c = &certs[i];
        let mut row = vec![
            rows.ids[i].clone(),
            num(rows.y_hat[i]),
            num(rows.delta[i]),
            num(rows.radius[i]),
            num(c.lo),
            num(c.hi),
            c.class.as_str().to_owned(),
        ];
        if let Some(ys) = &rows.y_star {
            match ys[i] {
                Some(y) => {
                    let wrong = c.class.is_certified() && (c.class == ThresholdClass::CertifiedPositive) != (y > args.tau);
                    row.extend([num(y), c.contains(y).to_string(), wrong.to_string()]);
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        row
    });
    dir.csv("certificates.csv", &header, out_rows)?;

    if args.radius_sweep {
        let sweep = radius_sensitivity(&bounds, args.g, args.tau);
        dir.csv(
            "radius_sensitivity.csv",
            &["factor", "certified", "certified_fraction"],
            sweep.iter().map(|r| vec![num(r.factor), r.certified.to_string(), num(r.certified_fraction)]),
        )?;
        metrics["radius_sensitivity"] = serde_json::to_value(&sweep)?;
    }
    report.metrics = metrics;
    dir.finish(report)
}
