//! Command implementations. Each returns the report JSON it wrote.

pub mod audit;
pub mod certify;
pub mod complete;
pub mod replay;
pub mod synth;
pub mod verify;

use std::path::Path;

use anyhow::Result;
use benchcert_core::FiberRule;

use crate::args::{RuleArgs, RuleName};
use crate::error::usage;
use crate::ingest::Schema;
use crate::report::{Params, Report};

/// Resolves the rule flags, rejecting parameters that belong to another rule.
pub(crate) fn resolve_rule(args: &RuleArgs, params: &mut Params) -> Result<FiberRule> {
    let rule = args.rule;
    let stray = [
        ("--bins", args.bins.is_some(), RuleName::Quantile),
        ("--k", args.k.is_some(), RuleName::Knn),
        ("--tol", args.tol.is_some(), RuleName::Window),
    ];
    for (flag, given, owner) in stray {
        if given && owner != rule {
            return Err(usage(format!("{flag} applies to --rule {}, not --rule {}", owner.as_str(), rule.as_str())));
        }
    }
    params.set("rule", rule.as_str());
    let missing = |flag: &str| usage(format!("--rule {} needs {flag}", rule.as_str()));
    Ok(match rule {
        RuleName::Exact => FiberRule::ExactPattern,
        RuleName::Quantile => {
            let bins = args.bins.ok_or_else(|| missing("--bins"))?;
            params.set("bins", bins);
            FiberRule::Quantile { bins_per_dim: bins }
        }
        RuleName::Knn => {
            let k = args.k.ok_or_else(|| missing("--k"))?;
            params.set("k", k);
            FiberRule::NearestNeighbour { k }
        }
        RuleName::Window => {
            let tol = args.tol.ok_or_else(|| missing("--tol"))?;
            params.set("tol", tol);
            FiberRule::ErrorWindow { tolerance: tol }
        }
    })
}

pub(crate) fn load_schema(path: Option<&Path>, report: &mut Report) -> Result<Schema> {
    match path {
        Some(p) => {
            report.input("schema", p)?;
            Schema::load(p)
        }
        None => Ok(Schema::default()),
    }
}
