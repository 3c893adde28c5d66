//! Concept summaries: descriptor grouping, embedding grouping and per-kind
//! corpus summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::eval::ConceptRegistry;
use crate::knowledge::{add_into, cosine, EmbeddingTable, Vector};
use crate::knowledge::{EntityKind, Knowledge, SummaryKind};
use crate::text::TextPipeline;

pub const DEFAULT_WEDGES: usize = 50;
pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const MAX_WEIGHT: f64 = 10.0;

/// One output group of [`summarize_features`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    /// The shared descriptor, or the attribute itself for an unmapped one.
    pub label: String,
    pub members: Vec<String>,
    pub mapped: bool,
}

/// Collects the distinct descriptors of `attributes`, then gathers each
/// attribute under its descriptor. Attributes without a descriptor become
/// singleton groups. Groups come in first-seen order.
pub fn summarize_features<F>(attributes: &[String], mut mapper: F) -> Vec<FeatureGroup>
where
    F: FnMut(&str) -> Option<String>,
{
    let mut seen = HashSet::new();
    let distinct: Vec<&String> = attributes.iter().filter(|a| seen.insert(a.as_str())).collect();
    let mapped: Vec<Option<String>> = distinct.iter().map(|a| mapper(a)).collect();
    let mut set_map: Vec<&str> = Vec::new();
    for d in mapped.iter().flatten() {
        if !set_map.contains(&d.as_str()) {
            set_map.push(d);
        }
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<FeatureGroup> = set_map
        .iter()
        .enumerate()
        .map(|(i, d)| {
            index.insert(d, i);
            FeatureGroup { label: d.to_string(), members: Vec::new(), mapped: true }
        })
        .collect();
    for (a, d) in distinct.iter().zip(&mapped) {
        match d {
            Some(d) => groups[index[d.as_str()]].members.push(a.to_string()),
            None => groups.push(FeatureGroup { label: a.to_string(), members: vec![a.to_string()], mapped: false }),
        }
    }
    groups
}

/// Sum of the embeddings of the descriptor's tokens; `None` when every token
/// is out of vocabulary.
pub fn embed_annotation(descriptor: &str, table: &EmbeddingTable, pipeline: &TextPipeline) -> Option<Vector> {
    let terms = pipeline.normalize_term(descriptor)?;
    let mut acc = vec![0.0; table.dim()];
    let mut hit = false;
    for t in terms.split(' ') {
        if let Some(v) = table.get(t) {
            add_into(&mut acc, v);
            hit = true;
        }
    }
    hit.then_some(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub attribute: String,
    pub frequency: usize,
    pub vector: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGroup {
    /// Highest-frequency member.
    pub label: String,
    pub seed: Vector,
    pub members: Vec<String>,
}

/// Greedy grouping in descending frequency: an attribute joins the first
/// group whose seed has cosine ≥ `threshold` with it, otherwise it seeds a
/// new group.
pub fn group_by_embedding(items: &[Embedded], threshold: f64) -> Vec<EmbeddingGroup> {
    let mut order: Vec<&Embedded> = items.iter().collect();
    order.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.attribute.cmp(&b.attribute)));
    let mut groups: Vec<EmbeddingGroup> = Vec::new();
    for e in order {
        match groups.iter_mut().find(|g| cosine(&g.seed, &e.vector) >= threshold) {
            Some(g) => {
                if !g.members.contains(&e.attribute) {
                    g.members.push(e.attribute.clone());
                }
            }
            None => groups.push(EmbeddingGroup {
                label: e.attribute.clone(),
                seed: e.vector.clone(),
                members: vec![e.attribute.clone()],
            }),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConcept {
    pub label: String,
    pub kind: SummaryKind,
    pub members: Vec<String>,
    /// W_C: mean over members of their average TF-IDF in the documents
    /// containing them.
    pub weight: f64,
    /// Documents containing at least one member.
    pub frequency: usize,
    /// frequency / max frequency within the kind.
    pub relevancy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummarySet {
    pub wedge_count: usize,
    pub kinds: BTreeMap<SummaryKind, Vec<SummaryConcept>>,
    /// Kinds that could not be built, with the reason.
    pub errors: BTreeMap<SummaryKind, String>,
}

impl SummarySet {
    pub fn kind(&self, kind: SummaryKind) -> &[SummaryConcept] {
        self.kinds.get(&kind).map_or(&[], Vec::as_slice)
    }

    /// Makes every summary concept addressable by `in_group` features.
    pub fn register_into(&self, registry: &mut ConceptRegistry) {
        for concepts in self.kinds.values() {
            for c in concepts {
                if c.kind == SummaryKind::Keyword {
                    continue;
                }
                let members =
                    c.members.iter().map(|m| if c.kind.entity().is_some() { m.to_lowercase() } else { m.clone() });
                registry.register(c.kind, &c.label, members);
            }
        }
    }
}

/// Average TF-IDF of an attribute over the documents holding all of its
/// tokens; 0 if none do.
pub fn attribute_tfidf(corpus: &Corpus, tokens: &[String]) -> f64 {
    let Some(first) = tokens.first() else { return 0.0 };
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(doc, _) in corpus.postings(first) {
        let i = doc as usize;
        if tokens.iter().all(|t| corpus.tf(t, i) > 0) {
            sum += tokens.iter().map(|t| corpus.tfidf_at(t, i)).sum::<f64>() / tokens.len() as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

struct Draft {
    label: String,
    members: Vec<String>,
    docs: BTreeSet<u32>,
    weight: f64,
}

fn finish(kind: SummaryKind, mut drafts: Vec<Draft>, wedges: usize) -> Vec<SummaryConcept> {
    drafts.retain(|d| !d.docs.is_empty());
    drafts.sort_by(|a, b| b.docs.len().cmp(&a.docs.len()).then(a.label.cmp(&b.label)));
    drafts.truncate(wedges);
    let max = drafts.first().map_or(1, |d| d.docs.len()).max(1);
    drafts
        .into_iter()
        .map(|d| SummaryConcept {
            relevancy: d.docs.len() as f64 / max as f64,
            frequency: d.docs.len(),
            label: d.label,
            kind,
            members: d.members,
            weight: d.weight,
        })
        .collect()
}

fn token_drafts(corpus: &Corpus, groups: Vec<FeatureGroup>) -> Vec<Draft> {
    groups
        .into_iter()
        .filter(|g| g.mapped)
        .map(|g| {
            let mut docs = BTreeSet::new();
            let mut wsum = 0.0;
            for m in &g.members {
                docs.extend(corpus.postings(m).iter().map(|&(d, _)| d));
                wsum += attribute_tfidf(corpus, std::slice::from_ref(m));
            }
            let weight = wsum / g.members.len() as f64;
            Draft { label: g.label, members: g.members, docs, weight }
        })
        .collect()
}

fn entity_kind_drafts(corpus: &Corpus, knowledge: &Knowledge, pipeline: &TextPipeline, kind: EntityKind) -> Vec<Draft> {
    let gaz = knowledge.gazetteer.as_ref().expect("caller checked support");
    let mut docs_of: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for i in 0..corpus.len() {
        for m in &corpus.view(i).entities {
            if m.kind == kind {
                docs_of.entry(m.surface.clone()).or_default().insert(i as u32);
            }
        }
    }
    let weight_of = |surface: &str| {
        let toks: Vec<String> =
            pipeline.normalize_term(surface).map(|t| t.split(' ').map(str::to_string).collect()).unwrap_or_default();
        attribute_tfidf(corpus, &toks)
    };
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    if kind == EntityKind::Location {
        // grouped by the region named in the descriptor's last comma segment
        let mut by_region: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (s, docs) in &docs_of {
            let desc = gaz.lookup(s).map_or(s.as_str(), |e| e.descriptor.as_str());
            let region = desc.rsplit(',').next().unwrap_or(desc).trim().to_string();
            by_region.entry(region).or_default().push((docs.len(), s.clone()));
        }
        for (_, mut members) in by_region {
            members.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let label = members[0].1.clone();
            groups.push((label, members.into_iter().map(|m| m.1).collect()));
        }
    } else {
        let mut embedded = Vec::new();
        for (s, docs) in &docs_of {
            let vector = knowledge.embeddings.as_ref().and_then(|t| {
                let desc = gaz.lookup(s).map_or(s.as_str(), |e| e.descriptor.as_str());
                embed_annotation(desc, t, pipeline)
            });
            match vector {
                Some(vector) => embedded.push(Embedded { attribute: s.clone(), frequency: docs.len(), vector }),
                // no vector: the entity stays a concept of its own
                None => groups.push((s.clone(), vec![s.clone()])),
            }
        }
        for g in group_by_embedding(&embedded, DEFAULT_THRESHOLD) {
            groups.push((g.label, g.members));
        }
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let mut docs = BTreeSet::new();
            for m in &members {
                docs.extend(docs_of[m].iter().copied());
            }
            let weight = members.iter().map(|m| weight_of(m)).sum::<f64>() / members.len() as f64;
            Draft { label, members, docs, weight }
        })
        .collect()
}

/// Builds the requested summary kinds. A kind whose lexicon is missing is
/// reported in `errors` while the others are still produced.
pub fn build_summaries(
    corpus: &Corpus,
    knowledge: &Knowledge,
    pipeline: &TextPipeline,
    kinds: &[SummaryKind],
    wedge_count: usize,
) -> SummarySet {
    let mut out = SummarySet { wedge_count, ..Default::default() };
    let vocab: Vec<String> = {
        let mut v: Vec<(&String, usize)> = corpus.vocabulary().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v.into_iter().map(|(t, _)| t.clone()).collect()
    };
    for &kind in kinds {
        if !knowledge.supports(kind) {
            out.errors.insert(kind, format!("no lexicon loaded for {kind} summaries"));
            continue;
        }
        let drafts = match kind {
            SummaryKind::Topic => {
                token_drafts(corpus, summarize_features(&vocab, |t| knowledge.hypernym(t).map(str::to_string)))
            }
            SummaryKind::Category => {
                token_drafts(corpus, summarize_features(&vocab, |t| knowledge.category(t).map(str::to_string)))
            }
            SummaryKind::Keyword => vocab
                .iter()
                .take(wedge_count)
                .map(|t| Draft {
                    label: t.clone(),
                    members: vec![t.clone()],
                    docs: corpus.postings(t).iter().map(|&(d, _)| d).collect(),
                    weight: attribute_tfidf(corpus, std::slice::from_ref(t)),
                })
                .collect(),
            k => entity_kind_drafts(corpus, knowledge, pipeline, k.entity().expect("entity kind")),
        };
        out.kinds.insert(kind, finish(kind, drafts, wedge_count));
    }
    out
}
