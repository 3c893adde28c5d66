//! Rule evaluation against preprocessed documents.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocView};
use crate::knowledge::{EntityKind, Knowledge, SummaryKind};
use crate::rule::{Feature, Function, NodeId, Operator, PathId, RuleTree, Tag};
use crate::text::TextPipeline;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown {kind} concept `{label}`")]
    UnknownConcept { kind: SummaryKind, label: String },
    #[error("invalid rule: {0}")]
    Rule(#[from] crate::rule::RuleError),
}

/// A named group of attributes. Topic and category members are normalized
/// tokens (space-joined for multi-word terms); entity members are lowercased
/// surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub kind: SummaryKind,
    pub label: String,
    pub members: BTreeSet<String>,
}

/// Concepts addressable by `in_group` features, keyed by kind and
/// case-insensitive label.
#[derive(Debug, Clone, Default)]
pub struct ConceptRegistry {
    concepts: BTreeMap<(SummaryKind, String), Arc<Concept>>,
}

impl ConceptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hypernym groups become topic concepts, category assignments over the
    /// seed terms and embedding vocabulary become category concepts, and every
    /// gazetteer surface is a singleton entity concept of its kind.
    pub fn from_knowledge(knowledge: &Knowledge) -> Self {
        let mut reg = Self::new();
        if let Some(h) = &knowledge.hypernyms {
            for (desc, members) in h.groups() {
                reg.register(SummaryKind::Topic, desc, members.iter().cloned());
            }
        }
        if let Some(c) = &knowledge.categories {
            let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for cat in c.categories() {
                groups.entry(cat.name.clone()).or_default().extend(cat.seeds.iter().cloned());
            }
            if let Some(emb) = &knowledge.embeddings {
                for tok in emb.tokens() {
                    if let Some(name) = c.assign(tok, Some(emb)) {
                        groups.entry(name.to_string()).or_default().insert(tok.clone());
                    }
                }
            }
            for (name, members) in groups {
                reg.register(SummaryKind::Category, &name, members);
            }
        }
        if let Some(g) = &knowledge.gazetteer {
            for e in g.entries() {
                reg.register(e.kind.into(), &e.surface, [e.surface.to_lowercase()]);
            }
        }
        reg
    }

    /// Adds members to the concept, creating it if needed.
    pub fn register<I, S>(&mut self, kind: SummaryKind, label: &str, members: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let key = (kind, label.trim().to_lowercase());
        let entry = self
            .concepts
            .entry(key)
            .or_insert_with(|| Arc::new(Concept { kind, label: label.trim().to_string(), members: BTreeSet::new() }));
        let concept = Arc::make_mut(entry);
        concept.members.extend(members.into_iter().map(Into::into));
    }

    pub fn get(&self, kind: SummaryKind, label: &str) -> Option<&Concept> {
        self.concepts.get(&(kind, label.trim().to_lowercase())).map(|c| c.as_ref())
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values().map(|c| c.as_ref())
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// What a feature needs at evaluation time.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub pipeline: &'a TextPipeline,
    pub concepts: &'a ConceptRegistry,
}

#[derive(Debug, Clone)]
enum Pred {
    Never,
    /// All normalized tokens present, or the literal stem itself.
    Tokens(Vec<String>, String),
    Raw(String),
    HashtagStem(String),
    HashtagExact(String),
    TokenGroup(Arc<Vec<Vec<String>>>),
    EntityGroup(EntityKind, Arc<HashSet<String>>),
}

/// A feature with its argument resolved against the pipeline and registry.
#[derive(Debug, Clone)]
pub struct CompiledFeature {
    pred: Pred,
    negated: bool,
}

impl CompiledFeature {
    pub fn compile(feature: &Feature, ctx: EvalContext<'_>) -> Result<Self, EvalError> {
        feature.validate()?;
        let arg = feature.argument.trim();
        let pred = match (feature.function, feature.operator) {
            (Function::Keyword, Operator::Contains) => match ctx.pipeline.normalize_term(arg) {
                Some(t) => Pred::Tokens(t.split(' ').map(str::to_string).collect(), arg.to_lowercase()),
                None => Pred::Never,
            },
            (Function::Keyword, _) => Pred::Raw(arg.to_lowercase()),
            (Function::Hashtag, Operator::Contains) => {
                Pred::HashtagStem(ctx.pipeline.normalize_word(&arg.trim_start_matches('#').to_lowercase()))
            }
            (Function::Hashtag, _) => Pred::HashtagExact(arg.trim_start_matches('#').to_lowercase()),
            (f, _) => {
                let kind = f.group_kind().expect("in_group functions have a concept kind");
                let concept = ctx
                    .concepts
                    .get(kind, arg)
                    .ok_or_else(|| EvalError::UnknownConcept { kind, label: arg.to_string() })?;
                match kind.entity() {
                    Some(ek) => {
                        Pred::EntityGroup(ek, Arc::new(concept.members.iter().map(|m| m.to_lowercase()).collect()))
                    }
                    None => Pred::TokenGroup(Arc::new(
                        concept.members.iter().map(|m| m.split(' ').map(str::to_string).collect()).collect(),
                    )),
                }
            }
        };
        Ok(Self { pred, negated: feature.negated })
    }

    pub fn eval(&self, view: &DocView) -> bool {
        let base = match &self.pred {
            Pred::Never => false,
            Pred::Tokens(toks, literal) => {
                toks.iter().all(|t| view.token_set.contains(t)) || view.token_set.contains(literal)
            }
            Pred::Raw(term) => view.raw_terms.contains(term),
            Pred::HashtagStem(s) => view.hashtag_stems.contains(s),
            Pred::HashtagExact(h) => view.hashtags.iter().any(|x| x == h),
            Pred::TokenGroup(members) => members.iter().any(|m| m.iter().all(|t| view.token_set.contains(t))),
            Pred::EntityGroup(kind, members) => {
                view.entities.iter().any(|e| e.kind == *kind && members.contains(&e.surface.to_lowercase()))
            }
        };
        base != self.negated
    }
}

pub fn evaluate_feature(feature: &Feature, view: &DocView, ctx: EvalContext<'_>) -> Result<bool, EvalError> {
    Ok(CompiledFeature::compile(feature, ctx)?.eval(view))
}

#[derive(Debug, Clone)]
struct CNode {
    feature: CompiledFeature,
    children: Vec<usize>,
    leaf: Option<PathId>,
}

/// A rule ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    rule_id: String,
    tag: Tag,
    nodes: Vec<CNode>,
    roots: Vec<usize>,
}

impl CompiledRule {
    pub fn compile(rule: &RuleTree, ctx: EvalContext<'_>) -> Result<Self, EvalError> {
        rule.validate()?;
        let mut nodes = Vec::with_capacity(rule.len());
        let mut roots = Vec::new();
        for &r in rule.roots() {
            roots.push(Self::add(rule, r, ctx, &mut nodes)?);
        }
        Ok(Self { rule_id: rule.rule_id.clone(), tag: rule.tag.clone(), nodes, roots })
    }

    fn add(rule: &RuleTree, id: NodeId, ctx: EvalContext<'_>, nodes: &mut Vec<CNode>) -> Result<usize, EvalError> {
        let node = rule.node(id).expect("tree nodes exist");
        let idx = nodes.len();
        nodes.push(CNode {
            feature: CompiledFeature::compile(&node.feature, ctx)?,
            children: Vec::new(),
            leaf: node.children.is_empty().then_some(PathId(id.0)),
        });
        for &c in &node.children {
            let ci = Self::add(rule, c, ctx, nodes)?;
            nodes[idx].children.push(ci);
        }
        Ok(idx)
    }

    /// Ids of every fully matching path, in enumeration order.
    pub fn matching_paths(&self, view: &DocView) -> Vec<PathId> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            if !n.feature.eval(view) {
                continue;
            }
            match n.leaf {
                Some(p) => out.push(p),
                None => stack.extend(n.children.iter().rev()),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub doc_id: String,
    pub paths: Vec<PathId>,
    pub tag: Tag,
}

pub fn match_rule(rule: &CompiledRule, doc_id: &str, view: &DocView) -> Option<MatchResult> {
    let paths = rule.matching_paths(view);
    (!paths.is_empty()).then(|| MatchResult { doc_id: doc_id.to_string(), paths, tag: rule.tag.clone() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub doc_id: String,
    pub paths: Vec<PathId>,
}

/// Documents a rule matched in one round, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    pub round: u32,
    pub rule_id: String,
    pub tag: Tag,
    pub entries: Vec<BatchEntry>,
}

impl AnnotationBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// Number of annotated items per path.
    pub fn path_counts(&self) -> BTreeMap<PathId, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            for p in &e.paths {
                *out.entry(*p).or_default() += 1;
            }
        }
        out
    }
}

pub fn annotate_corpus(rule: &CompiledRule, corpus: &Corpus, round: u32) -> AnnotationBatch {
    let entries: Vec<BatchEntry> = (0..corpus.len())
        .into_par_iter()
        .filter_map(|i| {
            let paths = rule.matching_paths(corpus.view(i));
            (!paths.is_empty()).then(|| BatchEntry { doc_id: corpus.doc(i).id.clone(), paths })
        })
        .collect();
    AnnotationBatch { round, rule_id: rule.rule_id.clone(), tag: rule.tag.clone(), entries }
}

/// Bag-of-words baseline: any normalized term of the bag occurs in the doc.
pub fn keym_match(bag: &BTreeSet<String>, view: &DocView) -> bool {
    bag.iter().any(|t| view.token_set.contains(t))
}

/// Normalizes raw bag terms for [`keym_match`].
pub fn keym_bag<'a>(terms: impl IntoIterator<Item = &'a str>, pipeline: &TextPipeline) -> BTreeSet<String> {
    terms
        .into_iter()
        .filter_map(|t| pipeline.normalize_term(t))
        .flat_map(|t| t.split(' ').map(str::to_string).collect::<Vec<_>>())
        .collect()
}

/// Doc index → matched path ids, for quick lookups.
pub fn batch_index(batch: &AnnotationBatch) -> HashMap<&str, &[PathId]> {
    batch.entries.iter().map(|e| (e.doc_id.as_str(), e.paths.as_slice())).collect()
}
