//! Claim-completeness auditing for benchmark evidence.
//!
//! The crate answers one question about a benchmark report: does the recorded
//! evidence determine the deployment action? It provides
//!
//! * finite fiber audits over candidate tables ([`fiber`], [`audit`]),
//! * linear response-rank geometry and interval certificates ([`geometry`]),
//! * probe completion, completion curves and loss-aware value of evidence
//!   ([`completion`], [`risk`]),
//! * calibration-certified held-out replays with cost accounting and locked
//!   manifests ([`replay`]),
//! * synthetic response-space experiments ([`synth`]).
//!
//! Every operation is a pure function over immutable inputs.

pub mod audit;
pub mod completion;
pub mod error;
pub mod fiber;
pub mod geometry;
pub mod linalg;
pub mod replay;
pub mod risk;
pub mod stats;
pub mod synth;
pub mod table;

pub use audit::{
    bayes_error, certifiable_fraction, classify_threshold_fibers, epsilon_robust_fibers,
    neighbourhood_decision_risk, neighbourhood_purity, residual_ambiguity, run_audit,
    AuditReport, FiberSummary, NeighbourhoodRisk, ThresholdClass,
};
pub use completion::{
    completion_curve, delta_q, kappa_epsilon, select_probe, updated_residual, CompletionCurve,
    CompletionPolicy, CurvePoint, Probe, ProbePool, SelectionContext,
};
pub use error::{CoreError, Result};
pub use fiber::{build_fibers, FiberKey, FiberPartition, FiberRule, Grouping};
pub use geometry::{
    certify_interval, fiber_variation_bound, linearized_residual, radius_sensitivity,
    witness_pair, CandidateBound, IntervalCertificate, ResponseGeometry, WitnessPair,
    RADIUS_SENSITIVITY_FACTORS,
};
pub use risk::{empirical_bayes_risk, expected_value_of_information, LossMatrix};
pub use table::{ActionAlphabet, CandidateTable, EvidenceColumn, EvidenceKind};
