use std::collections::BTreeMap;

use curation_core::adapt::*;
use curation_core::bandit::{Answer, Counts, ThetaEstimate};
use curation_core::corpus::{Corpus, GroundTruth};
use curation_core::eval::{AnnotationBatch, BatchEntry, ConceptRegistry};
use curation_core::feedback::{FeedbackError, FeedbackSource, LabelTask, OracleSource, ResolvedVerdict};
use curation_core::knowledge::Knowledge;
use curation_core::lang::{parse_rule_file, to_dnf, DnfOptions};
use curation_core::rule::{Feature, PathId, RuleTree, Tag};
use curation_core::synth::{generate, SynthConfig};
use curation_core::text::TextPipeline;
use proptest::prelude::*;

struct World {
    pipeline: TextPipeline,
    corpus: Corpus,
    knowledge: Knowledge,
    truth: GroundTruth,
    registry: ConceptRegistry,
    seed_rule: String,
}

fn world(docs: usize, seed: u64) -> World {
    let pipeline = TextPipeline::default();
    let s = generate(&SynthConfig { docs, seed, ..Default::default() }, &pipeline);
    let (corpus, knowledge, truth) = s.materialize(&pipeline);
    let registry = ConceptRegistry::from_knowledge(&knowledge);
    World { pipeline, corpus, knowledge, truth, registry, seed_rule: s.seed_rule() }
}

impl World {
    fn env<'a>(&'a self, config: &'a AdaptConfig) -> Env<'a> {
        Env {
            corpus: &self.corpus,
            knowledge: &self.knowledge,
            pipeline: &self.pipeline,
            concepts: &self.registry,
            config,
        }
    }

    fn state(&self, config: &AdaptConfig) -> RuleState {
        let rf = parse_rule_file(&self.seed_rule).unwrap();
        RuleState::new(to_dnf(&rf.expr, "r1", rf.tag, config.children_cap, DnfOptions::default()).unwrap(), config)
    }
}

struct Broken;

impl FeedbackSource for Broken {
    fn verdicts(&mut self, _: &[LabelTask]) -> Result<Vec<ResolvedVerdict>, FeedbackError> {
        Err(FeedbackError::Unavailable("offline".into()))
    }
}

fn snapshot(s: &RuleState) -> String {
    serde_json::to_string(s).unwrap()
}

#[test]
fn failed_round_leaves_state_untouched() {
    let w = world(3000, 1);
    let config = AdaptConfig { seed: 1, sample_rate: 0.1, ..Default::default() };
    let env = w.env(&config);
    let mut st = w.state(&config);
    st.run_round(&env, &mut OracleSource::new(w.truth.clone())).unwrap();
    let before = snapshot(&st);
    assert!(st.run_round(&env, &mut Broken).is_err());
    assert_eq!(snapshot(&st), before);

    // a verdict for an item outside the sample is rejected as a whole
    let pending = st.begin_round(&env).unwrap();
    let outsider = w.corpus.documents().iter().find(|d| !pending.sample.ids().contains(&d.id)).unwrap();
    let bad = vec![ResolvedVerdict { task_id: "x".into(), doc_id: outsider.id.clone(), answer: Answer::Relevant }];
    assert!(st.complete_round(&env, &pending, &bad).is_err());
    assert_eq!(snapshot(&st), before);
}

#[test]
fn empty_batch_round() {
    let w = world(500, 2);
    let config = AdaptConfig::default();
    let env = w.env(&config);
    let rule =
        RuleTree::from_paths("r", Tag::new("Budget").unwrap(), 10, &[vec![Feature::keyword("zzzzqqq")]]).unwrap();
    let mut st = RuleState::new(rule.clone(), &config);
    let report = st.run_round(&env, &mut OracleSource::new(w.truth.clone())).unwrap();
    assert_eq!(report.items_annotated, 0);
    assert_eq!(report.sample_size, 0);
    assert!(report.actions.is_empty());
    assert_eq!(st.rule, rule);
    assert_eq!(st.round, 1);
}

#[test]
fn stabilized_rule_stops_sampling_and_budget_adds_up() {
    let w = world(4000, 3);
    let config = AdaptConfig { seed: 3, sample_rate: 0.5, ..Default::default() };
    let env = w.env(&config);
    let mut st = w.state(&config);
    let mut oracle = OracleSource::new(w.truth.clone());
    let mut consumed = 0.0;
    let mut sampled = 0;
    let mut halted = false;
    for _ in 0..25 {
        let pending = st.begin_round(&env).unwrap();
        let all_stable = st.rule.paths().iter().all(|p| st.stability.is_stabilized(p.id));
        if all_stable {
            assert!(pending.tasks.is_empty());
            halted = true;
        }
        let verdicts = oracle.verdicts(&pending.tasks).unwrap();
        let report = st.complete_round(&env, &pending, &verdicts).unwrap();
        consumed += report.cost;
        sampled += report.sample_size;
        for p in &report.paths {
            if let Some(x) = p.precision {
                assert!((0.0..=1.0).contains(&x));
            }
        }
    }
    assert!(halted, "rule never stabilized in 25 rounds");
    assert_eq!(consumed, sampled as f64);
}

#[test]
fn identical_seeds_give_identical_reports() {
    let w = world(3000, 4);
    let run = |seed| {
        let config = AdaptConfig { seed, sample_rate: 0.05, ..Default::default() };
        let env = w.env(&config);
        let mut st = w.state(&config);
        let mut oracle = OracleSource::new(w.truth.clone());
        let reports: Vec<RoundReport> = (0..4).map(|_| st.run_round(&env, &mut oracle).unwrap()).collect();
        serde_json::to_string(&reports).unwrap()
    };
    assert_eq!(run(9), run(9));
}

#[test]
fn feedback_reaches_the_ledger() {
    let w = world(2000, 5);
    let config = AdaptConfig { seed: 5, ..Default::default() };
    let env = w.env(&config);
    let mut st = w.state(&config);
    let report = st.run_round(&env, &mut OracleSource::new(w.truth.clone())).unwrap();
    let total: u64 = st.ledger.all_counts().values().map(|c| c.total()).sum();
    assert!(total > 0);
    assert_eq!(report.verdicts.relevant + report.verdicts.irrelevant, report.sample_size as u64);
    assert_eq!(st.ledger.last_round(), Some(1));
}

fn arb_rule() -> impl Strategy<Value = RuleTree> {
    // up to 3 levels of keyword children under one root
    prop::collection::vec(prop::collection::vec(0usize..6, 1..3), 1..6).prop_map(|paths| {
        let mut seqs: Vec<Vec<Feature>> = Vec::new();
        for p in paths {
            let mut seq = vec![Feature::keyword("root")];
            for (depth, x) in p.into_iter().enumerate() {
                seq.push(Feature::keyword(format!("n{depth}x{x}")));
            }
            if !seqs.iter().any(|s| s.starts_with(&seq) || seq.starts_with(s)) {
                seqs.push(seq);
            }
        }
        RuleTree::from_paths("r", Tag::new("t").unwrap(), 3, &seqs).unwrap_or_else(|_| {
            RuleTree::from_paths("r", Tag::new("t").unwrap(), 3, &[vec![Feature::keyword("root")]]).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn plans_keep_the_tree_valid(
        rule in arb_rule(),
        sizes in prop::collection::vec(0usize..30, 8),
        precision in prop::collection::vec((0u64..10, 0u64..10), 8),
        theta in prop::collection::vec(0.0f64..1.0, 12),
    ) {
        let config = AdaptConfig { children_cap: 3, ..Default::default() };
        let paths = rule.paths();
        let mut entries = Vec::new();
        for (i, p) in paths.iter().enumerate() {
            for j in 0..sizes[i % sizes.len()] {
                entries.push(BatchEntry { doc_id: format!("{}-{j}", p.id), paths: vec![p.id] });
            }
        }
        let batch = AnnotationBatch { round: 1, rule_id: "r".into(), tag: rule.tag.clone(), entries };
        let counts: BTreeMap<PathId, Counts> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id, Counts { r: precision[i % 8].0, d: precision[i % 8].1 }))
            .collect();
        let plan = decide_actions(&rule, &batch, &counts, &config);
        let cands: Vec<Candidate> = (0..12)
            .map(|i| {
                let name = if i < 6 { format!("n1x{i}") } else { format!("c{i}") };
                Candidate { key: keyword_key(&name), feature: Feature::keyword(name.as_str()), frequency: 1, members: vec![] }
            })
            .collect();
        let arms: BTreeMap<String, Counts> = cands.iter().map(|c| (c.key.clone(), Counts { r: 1, d: 1 })).collect();
        let est = ThetaEstimate { seed: 0, theta: cands.iter().zip(&theta).map(|(c, t)| (c.key.clone(), *t)).collect() };
        let set = CandidateSet { round: 1, syntactic: cands, conceptual: vec![] };
        let (after, log) = adapt_rule(&rule, &plan, &est, &arms, &set, &config);
        prop_assert!(after.validate().is_ok());
        prop_assert_eq!(log.entries.len(), plan.len());
        for e in &log.entries {
            match e.action {
                Action::Replace { node, .. } => {
                    prop_assert!(!rule.is_root(node));
                    if e.warning.is_none() {
                        prop_assert!(after.node(node).is_none());
                        prop_assert_eq!(e.added.len(), 1);
                    }
                }
                Action::Restrict { .. } => prop_assert!(e.added.len() <= config.children_cap),
            }
        }
        for n in after.nodes() {
            prop_assert!(n.children.len() <= config.children_cap);
        }
    }
}
