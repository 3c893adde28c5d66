use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::eval::AnnotationBatch;
use crate::knowledge::{Knowledge, SummaryKind};
use crate::rule::{Feature, Function, Operator, RuleTree};
use crate::summarize::summarize_features;
use crate::text::TextPipeline;

/// A feature the engine may add to a rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Ledger-style key: `keyword:<token>` or `<kind>:<label>`.
    pub key: String,
    pub feature: Feature,
    /// Batch items containing the keyword, or any member of the concept.
    pub frequency: usize,
    /// Keyword keys the concept aggregates; empty for keywords.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub round: u32,
    pub syntactic: Vec<Candidate>,
    pub conceptual: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.syntactic.len() + self.conceptual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.syntactic.iter().chain(&self.conceptual)
    }

    pub fn get(&self, key: &str) -> Option<&Candidate> {
        self.iter().find(|c| c.key == key)
    }

    /// Keyword frequencies by token.
    pub fn keyword_frequencies(&self) -> HashMap<&str, usize> {
        self.syntactic.iter().map(|c| (c.key.strip_prefix(KEYWORD_PREFIX).unwrap_or(&c.key), c.frequency)).collect()
    }
}

pub const KEYWORD_PREFIX: &str = "keyword:";

pub fn keyword_key(token: &str) -> String {
    format!("{KEYWORD_PREFIX}{token}")
}

pub fn concept_key(kind: SummaryKind, label: &str) -> String {
    format!("{kind}:{label}")
}

/// Tokens and concept labels the rule already uses.
fn rule_vocabulary(rule: &RuleTree, pipeline: &TextPipeline) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut tokens = BTreeSet::new();
    let mut concepts = BTreeSet::new();
    for n in rule.nodes() {
        let f = &n.feature;
        match (f.function, f.operator) {
            (Function::Keyword, _) => {
                tokens.insert(f.argument.trim().to_lowercase());
                if let Some(t) = pipeline.normalize_term(&f.argument) {
                    tokens.extend(t.split(' ').map(str::to_string));
                }
            }
            (func, Operator::InGroup) => {
                if let Some(kind) = func.group_kind() {
                    concepts.insert(concept_key(kind, &f.argument.trim().to_lowercase()));
                }
            }
            _ => {}
        }
    }
    (tokens, concepts)
}

/// Keywords are the preprocessed tokens of the batch items minus those the
/// rule already uses; concepts group those keywords by hypernym and by
/// category. Only mapped groups become concept candidates.
pub fn extract_candidates(
    batch: &AnnotationBatch,
    corpus: &Corpus,
    knowledge: &Knowledge,
    pipeline: &TextPipeline,
    rule: &RuleTree,
    conceptual: bool,
) -> CandidateSet {
    let (used_tokens, used_concepts) = rule_vocabulary(rule, pipeline);
    let docs: Vec<usize> = batch.doc_ids().filter_map(|id| corpus.index_of(id)).collect();
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for &d in &docs {
        for t in &corpus.view(d).token_set {
            if !used_tokens.contains(t) {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let syntactic = freq
        .iter()
        .map(|(t, &n)| Candidate {
            key: keyword_key(t),
            feature: Feature::new("Tweet", Function::Keyword, Operator::Contains, *t).expect("tokens are non-empty"),
            frequency: n,
            members: Vec::new(),
        })
        .collect();

    let mut concepts = Vec::new();
    if conceptual {
        let tokens: Vec<String> = freq.keys().map(|t| t.to_string()).collect();
        let kinds = [(SummaryKind::Topic, Function::Topic), (SummaryKind::Category, Function::Category)];
        for (kind, function) in kinds {
            if !knowledge.supports(kind) {
                continue;
            }
            let groups = summarize_features(&tokens, |t| match kind {
                SummaryKind::Topic => knowledge.hypernym(t).map(str::to_string),
                _ => knowledge.category(t).map(str::to_string),
            });
            for g in groups.into_iter().filter(|g| g.mapped) {
                let key = concept_key(kind, &g.label);
                if used_concepts.contains(&concept_key(kind, &g.label.to_lowercase())) {
                    continue;
                }
                let members: BTreeSet<&str> = g.members.iter().map(String::as_str).collect();
                let frequency =
                    docs.iter().filter(|&&d| members.iter().any(|m| corpus.view(d).token_set.contains(*m))).count();
                let Ok(feature) = Feature::new("Tweet", function, Operator::InGroup, g.label.as_str()) else {
                    continue;
                };
                concepts.push(Candidate {
                    key,
                    feature,
                    frequency,
                    members: g.members.iter().map(|m| keyword_key(m)).collect(),
                });
            }
        }
        concepts.sort_by(|a, b| a.key.cmp(&b.key));
    }
    CandidateSet { round: batch.round, syntactic, conceptual: concepts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::eval::{annotate_corpus, CompiledRule, ConceptRegistry, EvalContext};
    use crate::knowledge::HypernymLexicon;
    use crate::rule::Tag;

    fn setup(texts: &[&str]) -> (Corpus, TextPipeline, Knowledge) {
        let pipeline = TextPipeline::default();
        let mut h = HypernymLexicon::default();
        for (k, d) in [("fund", "Economy"), ("budget", "Economy"), ("ill", "Health"), ("diseas", "Health")] {
            h.insert(k.into(), d.into());
        }
        let knowledge = Knowledge { hypernyms: Some(h), ..Default::default() };
        let mut corpus = Corpus::new();
        for (i, t) in texts.iter().enumerate() {
            corpus.insert(
                Document { id: format!("d{i}"), text: t.to_string(), created_at: None, meta: Default::default() },
                &pipeline,
                None,
            );
        }
        (corpus, pipeline, knowledge)
    }

    fn run(texts: &[&str], seed: &str) -> CandidateSet {
        let (corpus, pipeline, knowledge) = setup(texts);
        let rule = RuleTree::from_paths("r", Tag::new("t").unwrap(), 10, &[vec![Feature::keyword(seed)]]).unwrap();
        let reg = ConceptRegistry::from_knowledge(&knowledge);
        let ctx = EvalContext { pipeline: &pipeline, concepts: &reg };
        let batch = annotate_corpus(&CompiledRule::compile(&rule, ctx).unwrap(), &corpus, 1);
        extract_candidates(&batch, &corpus, &knowledge, &pipeline, &rule, true)
    }

    #[test]
    fn concepts_over_batch_tokens() {
        let c = run(&["news fund illness budget disease"], "news");
        let keys: Vec<&str> = c.syntactic.iter().map(|c| c.key.as_str()).collect();
        assert_eq!(keys.len(), 4);
        assert!(!keys.contains(&"keyword:news"));
        let concepts: Vec<&str> = c.conceptual.iter().map(|c| c.key.as_str()).collect();
        assert_eq!(concepts, vec!["topic:Economy", "topic:Health"]);
        for con in &c.conceptual {
            assert_eq!(con.members.len(), 2);
            assert!(con.members.iter().all(|m| c.get(m).is_some()));
        }
    }

    #[test]
    fn single_novel_token() {
        let c = run(&["news zebra", "other"], "news");
        assert_eq!(c.syntactic.len(), 1);
        assert_eq!(c.syntactic[0].frequency, 1);
    }

    #[test]
    fn nothing_new() {
        let c = run(&["news", "other"], "news");
        assert!(c.is_empty());
    }
}
