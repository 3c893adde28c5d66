use std::fmt::Write as _;

use curation_core::adapt::{AdaptConfig, Evaluation, RoundReport};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u32,
    pub items_annotated: usize,
    pub sample_size: usize,
    pub estimated_precision: Option<f64>,
    pub paths_before: usize,
    pub paths_after: usize,
    pub actions: usize,
    pub stabilized_paths: usize,
    pub cost: f64,
    /// The adapted rule over the whole corpus, when labels were given.
    pub evaluation: Option<Evaluation>,
}

impl RoundRow {
    pub fn from_report(r: &RoundReport) -> Self {
        Self {
            round: r.round,
            items_annotated: r.items_annotated,
            sample_size: r.sample_size,
            estimated_precision: r.estimated_precision,
            paths_before: r.actions.paths_before.len(),
            paths_after: r.actions.paths_after.len(),
            actions: r.actions.entries.len(),
            stabilized_paths: r.stabilized_paths.len(),
            cost: r.cost,
            evaluation: r.evaluation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rule_id: String,
    pub seed: u64,
    pub feedback: String,
    pub config: AdaptConfig,
    pub corpus_docs: usize,
    pub corpus_header: Option<Value>,
    pub initial_rule: String,
    pub final_rule: String,
    pub initial_evaluation: Option<Evaluation>,
    pub total_cost: f64,
    pub rounds: Vec<RoundRow>,
}

pub fn pct(p: Option<f64>) -> String {
    p.map_or_else(|| "-".to_string(), |p| format!("{:.2}%", p * 100.0))
}

/// Per-round precision table. The estimated column is the precision of the
/// verified sample; the others score the rule after that round's adaptation
/// over the whole corpus.
pub fn render_table(s: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rule {} (seed {}, {} feedback, K={})", s.rule_id, s.seed, s.feedback, s.config.children_cap);
    let _ = writeln!(
        out,
        "{:>5}  {:>9}  {:>7}  {:>9}  {:>9}  {:>9}  {:>9}  {:>5}  {:>6}",
        "round", "annotated", "sampled", "est.prec", "precision", "recall", "f1", "paths", "stable"
    );
    if let Some(e) = &s.initial_evaluation {
        let _ = writeln!(
            out,
            "{:>5}  {:>9}  {:>7}  {:>9}  {:>9}  {:>9}  {:>9}  {:>5}  {:>6}",
            0,
            e.annotated,
            "-",
            "-",
            pct(e.metrics.precision),
            pct(e.metrics.recall),
            pct(e.metrics.f1),
            s.rounds.first().map_or(0, |r| r.paths_before),
            "-"
        );
    }
    for r in &s.rounds {
        let (p, rc, f) =
            r.evaluation.map_or((None, None, None), |e| (e.metrics.precision, e.metrics.recall, e.metrics.f1));
        let _ = writeln!(
            out,
            "{:>5}  {:>9}  {:>7}  {:>9}  {:>9}  {:>9}  {:>9}  {:>5}  {:>6}",
            r.round,
            r.evaluation.map_or(r.items_annotated, |e| e.annotated),
            r.sample_size,
            pct(r.estimated_precision),
            pct(p),
            pct(rc),
            pct(f),
            r.paths_after,
            r.stabilized_paths
        );
    }
    let _ = writeln!(out, "verdicts paid: {}", s.total_cost);
    out
}
