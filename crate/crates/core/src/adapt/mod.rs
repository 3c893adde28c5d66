//! Annotation rounds: candidate extraction, stratified sampling, per-path
//! precision, replace/restrict adaptation and the stopping condition.

mod candidates;
mod config;
mod metrics;
mod plan;
mod sample;
mod session;
mod stability;

pub use candidates::{concept_key, extract_candidates, keyword_key, Candidate, CandidateSet, KEYWORD_PREFIX};
pub use config::{AdaptConfig, ConfigError};
pub use metrics::{prf_metrics, Prf};
pub use plan::{
    adapt_rule, decide_actions, node_counts, path_precision, path_status, path_verdicts, Action, AdaptationLog,
    LogEntry, PathStatus,
};
pub use sample::{allocate, sample_size, strata, stratified_sample, SampleSet, SampledItem, NO_STRATUM};
pub use session::{
    evaluate_rule, CandidateCounts, Env, Evaluation, PathReport, PendingRound, RoundReport, RuleState, VerdictCounts,
};
pub use stability::{smoothed, update_stability, StabilityWindow};

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Rule(#[from] crate::rule::RuleError),
    #[error(transparent)]
    Ledger(#[from] crate::bandit::BanditError),
    #[error(transparent)]
    Feedback(#[from] crate::feedback::FeedbackError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("round {got} is not the next round {expected}")]
    StaleRound { expected: u32, got: u32 },
}
