use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::candidates::{extract_candidates, keyword_key, CandidateSet};
use super::config::AdaptConfig;
use super::metrics::{prf_metrics, Prf};
use super::plan::{adapt_rule, decide_actions, path_precision, path_verdicts, AdaptationLog};
use super::sample::{strata, stratified_sample, SampleSet};
use super::stability::StabilityWindow;
use super::AdaptError;
use crate::bandit::{derive_seed, posterior_mean, sample_theta, Answer, Counts, FeedbackLedger, Observation};
use crate::corpus::{Corpus, GroundTruth};
use crate::eval::{annotate_corpus, AnnotationBatch, CompiledRule, ConceptRegistry, EvalContext};
use crate::feedback::{FeedbackSource, LabelTask, ResolvedVerdict};
use crate::knowledge::Knowledge;
use crate::lang::render;
use crate::rule::{PathId, RuleTree};
use crate::text::TextPipeline;

const SAMPLE_STREAM: u64 = 1;
const THETA_STREAM: u64 = 2;

/// Everything a round reads but never changes.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub corpus: &'a Corpus,
    pub knowledge: &'a Knowledge,
    pub pipeline: &'a TextPipeline,
    pub concepts: &'a ConceptRegistry,
    pub config: &'a AdaptConfig,
}

impl Env<'_> {
    fn ctx(&self) -> EvalContext<'_> {
        EvalContext { pipeline: self.pipeline, concepts: self.concepts }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub relevant: u64,
    pub irrelevant: u64,
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub path: PathId,
    pub features: String,
    pub annotated: usize,
    pub round: Counts,
    pub cumulative: Counts,
    pub precision: Option<f64>,
    pub cumulative_precision: Option<f64>,
    pub stabilized: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCounts {
    pub syntactic: usize,
    pub conceptual: usize,
    /// Candidates with feedback evidence, i.e. the bandit's arms.
    pub arms: usize,
}

/// Precision and recall of a rule over the whole corpus against labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub annotated: usize,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// Annotated items without a label.
    pub unlabeled: u64,
    #[serde(flatten)]
    pub metrics: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub rule_id: String,
    pub tag: String,
    pub items_annotated: usize,
    pub sample_size: usize,
    pub verdicts: VerdictCounts,
    /// Precision of this round's verified items.
    pub estimated_precision: Option<f64>,
    pub paths: Vec<PathReport>,
    pub actions: AdaptationLog,
    pub rule_before: String,
    pub rule_after: String,
    pub stabilized_paths: Vec<PathId>,
    pub cost: f64,
    pub candidates: CandidateCounts,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

/// A round that has been annotated and sampled but not yet verified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRound {
    pub round: u32,
    pub batch: AnnotationBatch,
    pub candidates: CandidateSet,
    pub sample: SampleSet,
    pub tasks: Vec<LabelTask>,
}

/// The mutable state of one rule across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleState {
    pub rule: RuleTree,
    pub ledger: FeedbackLedger,
    /// Cumulative verified counts per path.
    pub path_counts: BTreeMap<PathId, Counts>,
    pub stability: StabilityWindow,
    /// Last completed round; 0 before the first.
    pub round: u32,
}

impl RuleState {
    pub fn new(rule: RuleTree, config: &AdaptConfig) -> Self {
        Self {
            rule,
            ledger: FeedbackLedger::new(config.prior()),
            path_counts: BTreeMap::new(),
            stability: StabilityWindow::new(config.window, config.epsilon),
            round: 0,
        }
    }

    /// Annotates and samples the next round without changing any state.
    pub fn begin_round(&self, env: &Env<'_>) -> Result<PendingRound, AdaptError> {
        let round = self.round + 1;
        let compiled = CompiledRule::compile(&self.rule, env.ctx())?;
        let batch = annotate_corpus(&compiled, env.corpus, round);
        let candidates = if batch.is_empty() {
            CandidateSet { round, ..Default::default() }
        } else {
            extract_candidates(&batch, env.corpus, env.knowledge, env.pipeline, &self.rule, env.config.conceptual)
        };
        let items = strata(&batch, env.corpus, &candidates, self.stability.stabilized());
        let sample = stratified_sample(
            &items,
            env.config.sample_rate,
            derive_seed(env.config.seed, round, SAMPLE_STREAM),
            round,
        );
        let tag = self.rule.tag.as_str();
        let tasks = sample
            .items
            .iter()
            .map(|it| {
                let text = env.corpus.index_of(&it.doc_id).map_or("", |i| env.corpus.doc(i).text.as_str());
                LabelTask::new(round, &it.doc_id, text, tag)
            })
            .collect();
        Ok(PendingRound { round, batch, candidates, sample, tasks })
    }

    /// Applies the verdicts of a pending round. Either every piece of state
    /// advances or none does.
    pub fn complete_round(
        &mut self,
        env: &Env<'_>,
        pending: &PendingRound,
        verdicts: &[ResolvedVerdict],
    ) -> Result<RoundReport, AdaptError> {
        if pending.round != self.round + 1 {
            return Err(AdaptError::StaleRound { expected: self.round + 1, got: pending.round });
        }
        let config = env.config;
        let sampled = pending.sample.ids();
        let mut seen = BTreeSet::new();
        let verdicts: Vec<&ResolvedVerdict> = verdicts.iter().filter(|v| seen.insert(v.doc_id.clone())).collect();
        let observations: Vec<Observation> = verdicts
            .iter()
            .map(|v| Observation {
                item: v.doc_id.clone(),
                answer: v.answer,
                features: env
                    .corpus
                    .index_of(&v.doc_id)
                    .map(|i| env.corpus.view(i).token_set.iter().map(|t| keyword_key(t)).collect())
                    .unwrap_or_default(),
            })
            .collect();
        let mut ledger = self.ledger.clone();
        ledger.apply_verdicts(pending.round, &observations, &sampled)?;

        let owned: Vec<ResolvedVerdict> = verdicts.iter().map(|v| (*v).clone()).collect();
        let round_counts = path_verdicts(&pending.batch, &owned);
        let mut cumulative = self.path_counts.clone();
        for (p, c) in &round_counts {
            *cumulative.entry(*p).or_default() += *c;
        }

        // arms: candidates with evidence; a concept pools its members
        let mut arms: BTreeMap<String, Counts> = BTreeMap::new();
        for c in &pending.candidates.syntactic {
            let n = ledger.counts(&c.key);
            if n.total() > 0 {
                arms.insert(c.key.clone(), n);
            }
        }
        for c in &pending.candidates.conceptual {
            let n = ledger.aggregate(c.members.iter().map(String::as_str));
            if n.total() > 0 {
                arms.insert(c.key.clone(), n);
            }
        }
        let seed = derive_seed(config.seed, pending.round, THETA_STREAM);
        let theta = sample_theta(&arms, ledger.prior, seed);
        let plan = if pending.batch.is_empty() {
            Vec::new()
        } else {
            decide_actions(&self.rule, &pending.batch, &cumulative, config)
        };
        let (rule, log) = adapt_rule(&self.rule, &plan, &theta, &arms, &pending.candidates, config);
        rule.validate()?;

        let mut stability = self.stability.clone();
        let surviving: BTreeSet<PathId> = rule.paths().iter().map(|p| p.id).collect();
        for p in self.rule.paths().iter().filter(|p| surviving.contains(&p.id)) {
            if let Some(c) = cumulative.get(&p.id).filter(|c| c.total() > 0) {
                stability.update(p.id, posterior_mean(*c, ledger.prior));
            }
        }

        let annotated = pending.batch.path_counts();
        let paths = self
            .rule
            .paths()
            .iter()
            .map(|p| {
                let round = round_counts.get(&p.id).copied().unwrap_or_default();
                let cum = cumulative.get(&p.id).copied().unwrap_or_default();
                PathReport {
                    path: p.id,
                    features: p.to_string(),
                    annotated: annotated.get(&p.id).copied().unwrap_or(0),
                    round,
                    cumulative: cum,
                    precision: path_precision(round),
                    cumulative_precision: path_precision(cum),
                    stabilized: stability.is_stabilized(p.id),
                }
            })
            .collect();
        let mut vc = VerdictCounts::default();
        for v in &verdicts {
            match v.answer {
                Answer::Relevant => vc.relevant += 1,
                Answer::Irrelevant => vc.irrelevant += 1,
                Answer::Unknown => vc.unknown += 1,
            }
        }
        let report = RoundReport {
            round: pending.round,
            rule_id: rule.rule_id.clone(),
            tag: rule.tag.to_string(),
            items_annotated: pending.batch.len(),
            sample_size: pending.sample.len(),
            verdicts: vc,
            estimated_precision: path_precision(Counts { r: vc.relevant, d: vc.irrelevant }),
            paths,
            actions: log,
            rule_before: render(&self.rule),
            rule_after: render(&rule),
            stabilized_paths: rule.paths().iter().map(|p| p.id).filter(|p| stability.is_stabilized(*p)).collect(),
            cost: verdicts.len() as f64 * config.cost_per_verdict,
            candidates: CandidateCounts {
                syntactic: pending.candidates.syntactic.len(),
                conceptual: pending.candidates.conceptual.len(),
                arms: arms.len(),
            },
            seed: config.seed,
            evaluation: None,
        };

        self.rule = rule;
        self.ledger = ledger;
        self.path_counts = cumulative;
        self.stability = stability;
        self.round = pending.round;
        Ok(report)
    }

    /// One full round against a feedback source. A failing source leaves the
    /// state untouched.
    pub fn run_round(&mut self, env: &Env<'_>, source: &mut dyn FeedbackSource) -> Result<RoundReport, AdaptError> {
        let pending = self.begin_round(env)?;
        let verdicts = source.verdicts(&pending.tasks)?;
        self.complete_round(env, &pending, &verdicts)
    }
}

/// Scores `rule` over the whole corpus against ground-truth labels.
pub fn evaluate_rule(rule: &RuleTree, env: &Env<'_>, truth: &GroundTruth) -> Result<Evaluation, AdaptError> {
    let compiled = CompiledRule::compile(rule, env.ctx())?;
    let batch = annotate_corpus(&compiled, env.corpus, 0);
    let tag = rule.tag.as_str();
    let annotated: BTreeSet<&str> = batch.doc_ids().collect();
    let mut e = Evaluation { annotated: batch.len(), ..Default::default() };
    for id in &annotated {
        match truth.get(id, tag) {
            Some(true) => e.true_positives += 1,
            Some(false) => e.false_positives += 1,
            None => e.unlabeled += 1,
        }
    }
    for d in env.corpus.documents() {
        if truth.get(&d.id, tag) == Some(true) && !annotated.contains(d.id.as_str()) {
            e.false_negatives += 1;
        }
    }
    e.metrics = prf_metrics(e.true_positives, e.false_positives, e.false_negatives);
    Ok(e)
}
