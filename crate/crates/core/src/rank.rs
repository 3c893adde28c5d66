//! Concept-based ranking.
//!
//! A preference is a list of weighted concepts. Its queries are the cartesian
//! product of the concepts' attributes. A document scores
//! `S(d, q) = Σ_t tfidf(t, d) · W_C(t) / (‖d‖ · ‖q‖)` against each query,
//! where `q` is the binary vector of the query's terms and `W_C(t)` the weight
//! of the heaviest concept that contributed `t`. The document keeps its best query.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocView};
use crate::text::TextPipeline;

/// Refuse preferences that expand past this many queries.
pub const MAX_QUERIES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("preference has no concepts")]
    EmptyPreference,
    #[error("concept `{0}` has no members")]
    EmptyConcept(String),
    #[error("concept `{label}` has weight {weight}; weights must be positive")]
    BadWeight { label: String, weight: f64 },
    #[error("preference expands to more than {MAX_QUERIES} queries")]
    TooManyQueries,
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown document `{0}`")]
    UnknownDoc(String),
    #[error("concept rule, offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedConcept {
    pub label: String,
    pub members: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub concepts: Vec<WeightedConcept>,
}

impl Preference {
    pub fn validate(&self) -> Result<(), RankError> {
        if self.concepts.is_empty() {
            return Err(RankError::EmptyPreference);
        }
        for c in &self.concepts {
            if c.members.is_empty() {
                return Err(RankError::EmptyConcept(c.label.clone()));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(RankError::BadWeight { label: c.label.clone(), weight: c.weight });
            }
        }
        Ok(())
    }
}

/// One attribute per concept, in preference order (indices into members).
pub type ConceptQuery = Vec<usize>;

/// Cartesian product of member indices, last concept varying fastest.
pub fn concept_queries(pref: &Preference) -> Result<Vec<ConceptQuery>, RankError> {
    pref.validate()?;
    let mut total: usize = 1;
    for c in &pref.concepts {
        total = total.checked_mul(c.members.len()).filter(|&n| n <= MAX_QUERIES).ok_or(RankError::TooManyQueries)?;
    }
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0usize; pref.concepts.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for i in (0..cur.len()).rev() {
            cur[i] += 1;
            if cur[i] < pref.concepts[i].members.len() {
                break;
            }
            cur[i] = 0;
        }
    }
    Ok(out)
}

/// Index tokens of an attribute. Attributes already in index form are kept
/// as they are; anything else goes through the pipeline.
pub fn attribute_terms(attribute: &str, corpus: &Corpus, pipeline: &TextPipeline) -> Vec<String> {
    let parts: Vec<&str> = attribute.split_whitespace().collect();
    if !parts.is_empty() && parts.iter().all(|p| corpus.df(p) > 0) {
        return parts.iter().map(|p| p.to_string()).collect();
    }
    pipeline.normalize_term(attribute).map(|t| t.split(' ').map(str::to_string).collect()).unwrap_or_default()
}

/// A preference with every attribute resolved to index terms.
#[derive(Debug, Clone)]
pub struct CompiledPreference {
    labels: Vec<String>,
    weights: Vec<f64>,
    /// concept → member → terms
    terms: Vec<Vec<Vec<String>>>,
    queries: Vec<ConceptQuery>,
}

impl CompiledPreference {
    pub fn new(pref: &Preference, corpus: &Corpus, pipeline: &TextPipeline) -> Result<Self, RankError> {
        let queries = concept_queries(pref)?;
        Ok(Self {
            labels: pref.concepts.iter().map(|c| c.label.clone()).collect(),
            weights: pref.concepts.iter().map(|c| c.weight).collect(),
            terms: pref
                .concepts
                .iter()
                .map(|c| c.members.iter().map(|m| attribute_terms(m, corpus, pipeline)).collect())
                .collect(),
            queries,
        })
    }

    pub fn queries(&self) -> &[ConceptQuery] {
        &self.queries
    }

    /// Distinct terms of a query. A term brought by several concepts takes
    /// the heaviest weight, credited to the earliest such concept, which
    /// keeps every score within [0, max W_C].
    fn query_terms(&self, q: &ConceptQuery) -> BTreeMap<&str, (usize, f64)> {
        let mut out: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for (ci, &mi) in q.iter().enumerate() {
            for t in &self.terms[ci][mi] {
                let w = self.weights[ci];
                out.entry(t.as_str())
                    .and_modify(|e| {
                        if w > e.1 {
                            *e = (ci, w);
                        }
                    })
                    .or_insert((ci, w));
            }
        }
        out
    }

    fn all_terms(&self) -> BTreeSet<&str> {
        self.terms.iter().flatten().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub concept: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub doc_id: String,
    pub score: f64,
    /// The best query: one attribute per concept.
    pub query: Vec<String>,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq)]
struct Scored {
    score: f64,
    query: usize,
    contributions: Vec<f64>,
}

fn score_at(pref: &CompiledPreference, corpus: &Corpus, doc: usize) -> Scored {
    let norm = corpus.doc_norm(doc);
    let mut best = Scored { score: 0.0, query: 0, contributions: vec![0.0; pref.labels.len()] };
    if norm == 0.0 {
        return best;
    }
    for (qi, q) in pref.queries.iter().enumerate() {
        let terms = pref.query_terms(q);
        let qnorm = (terms.len() as f64).sqrt();
        if qnorm == 0.0 {
            continue;
        }
        let mut contrib = vec![0.0; pref.labels.len()];
        for (t, &(ci, wc)) in &terms {
            // grouped so that mathematically tied documents tie exactly
            contrib[ci] += (corpus.tfidf_at(t, doc) / norm) * (wc / qnorm);
        }
        let s: f64 = contrib.iter().sum();
        if s > best.score {
            best = Scored { score: s, query: qi, contributions: contrib };
        }
    }
    best
}

fn item(pref: &CompiledPreference, source: &Preference, corpus: &Corpus, doc: usize, s: Scored) -> RankedItem {
    let q = &pref.queries[s.query];
    RankedItem {
        doc_id: corpus.doc(doc).id.clone(),
        score: s.score,
        query: q.iter().enumerate().map(|(ci, &mi)| source.concepts[ci].members[mi].clone()).collect(),
        contributions: pref
            .labels
            .iter()
            .zip(s.contributions)
            .map(|(l, score)| Contribution { concept: l.clone(), score })
            .collect(),
    }
}

/// Best-query score of one document.
pub fn score_document(
    doc_id: &str,
    pref: &Preference,
    corpus: &Corpus,
    pipeline: &TextPipeline,
) -> Result<RankedItem, RankError> {
    let idx = corpus.index_of(doc_id).ok_or_else(|| RankError::UnknownDoc(doc_id.to_string()))?;
    let compiled = CompiledPreference::new(pref, corpus, pipeline)?;
    let s = score_at(&compiled, corpus, idx);
    Ok(item(&compiled, pref, corpus, idx, s))
}

/// Scores agreeing to 12 significant digits count as tied, so that ties
/// reached through different float roundings still fall back to the id.
fn order_key(s: f64) -> f64 {
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    let f = 10f64.powi(11 - s.abs().log10().floor() as i32);
    (s * f).round() / f
}

fn sort_items(items: &mut [RankedItem]) {
    items.sort_by(|a, b| order_key(b.score).total_cmp(&order_key(a.score)).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

/// Documents with a positive score, best first, ties by document id.
pub fn rank(
    pref: &Preference,
    corpus: &Corpus,
    pipeline: &TextPipeline,
    top_n: usize,
) -> Result<Vec<RankedItem>, RankError> {
    let compiled = CompiledPreference::new(pref, corpus, pipeline)?;
    let docs: BTreeSet<usize> =
        compiled.all_terms().iter().flat_map(|t| corpus.postings(t).iter().map(|&(d, _)| d as usize)).collect();
    rank_docs(&compiled, pref, corpus, docs, top_n, false)
}

fn rank_docs(
    compiled: &CompiledPreference,
    pref: &Preference,
    corpus: &Corpus,
    docs: impl IntoIterator<Item = usize>,
    top_n: usize,
    keep_zero: bool,
) -> Result<Vec<RankedItem>, RankError> {
    let mut items: Vec<RankedItem> = docs
        .into_iter()
        .map(|d| (d, score_at(compiled, corpus, d)))
        .filter(|(_, s)| keep_zero || s.score > 0.0)
        .map(|(d, s)| item(compiled, pref, corpus, d, s))
        .collect();
    sort_items(&mut items);
    items.truncate(top_n);
    Ok(items)
}

/// Boolean expression over concept names: `AND`, `OR`, `[ ]` and `( )`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "snake_case")]
pub enum ConceptExpr {
    Concept(String),
    And(Vec<ConceptExpr>),
    Or(Vec<ConceptExpr>),
}

impl ConceptExpr {
    pub fn names(&self) -> BTreeSet<&str> {
        match self {
            ConceptExpr::Concept(n) => [n.as_str()].into(),
            ConceptExpr::And(xs) | ConceptExpr::Or(xs) => xs.iter().flat_map(|x| x.names()).collect(),
        }
    }

    pub fn eval(&self, holds: &mut impl FnMut(&str) -> bool) -> bool {
        match self {
            ConceptExpr::Concept(n) => holds(n),
            ConceptExpr::And(xs) => xs.iter().all(|x| x.eval(holds)),
            ConceptExpr::Or(xs) => xs.iter().any(|x| x.eval(holds)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open(char),
    Close(char),
    And,
    Or,
    Name(String),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, RankError> {
    let mut out: Vec<(usize, Tok)> = Vec::new();
    let mut words: Vec<(usize, String)> = Vec::new();
    let flush = |words: &mut Vec<(usize, String)>, out: &mut Vec<(usize, Tok)>| {
        if let Some((start, _)) = words.first() {
            let name = words.iter().map(|(_, w)| w.as_str()).collect::<Vec<_>>().join(" ");
            out.push((*start, Tok::Name(name)));
            words.clear();
        }
    };
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '[' | '(' => {
                flush(&mut words, &mut out);
                out.push((i, Tok::Open(c)));
                chars.next();
            }
            ']' | ')' => {
                flush(&mut words, &mut out);
                out.push((i, Tok::Close(c)));
                chars.next();
            }
            '"' | '\'' => {
                flush(&mut words, &mut out);
                chars.next();
                let mut name = String::new();
                let mut closed = false;
                for (_, ch) in chars.by_ref() {
                    if ch == c {
                        closed = true;
                        break;
                    }
                    name.push(ch);
                }
                if !closed {
                    return Err(RankError::Syntax { offset: i, message: "unterminated quoted name".into() });
                }
                out.push((i, Tok::Name(name.trim().to_string())));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut w = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if ch.is_whitespace() || "[]()\"'".contains(ch) {
                        break;
                    }
                    w.push(ch);
                    chars.next();
                }
                match w.to_ascii_uppercase().as_str() {
                    "AND" => {
                        flush(&mut words, &mut out);
                        out.push((i, Tok::And));
                    }
                    "OR" => {
                        flush(&mut words, &mut out);
                        out.push((i, Tok::Or));
                    }
                    _ => words.push((i, w)),
                }
            }
        }
    }
    flush(&mut words, &mut out);
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn err<T>(&self, message: &str) -> Result<T, RankError> {
        Err(RankError::Syntax {
            offset: self.toks.get(self.pos).map_or(self.len, |t| t.0),
            message: message.to_string(),
        })
    }

    fn or(&mut self) -> Result<ConceptExpr, RankError> {
        let mut xs = vec![self.and()?];
        while matches!(self.toks.get(self.pos), Some((_, Tok::Or))) {
            self.pos += 1;
            xs.push(self.and()?);
        }
        Ok(if xs.len() == 1 { xs.remove(0) } else { ConceptExpr::Or(xs) })
    }

    fn and(&mut self) -> Result<ConceptExpr, RankError> {
        let mut xs = vec![self.atom()?];
        while matches!(self.toks.get(self.pos), Some((_, Tok::And))) {
            self.pos += 1;
            xs.push(self.atom()?);
        }
        Ok(if xs.len() == 1 { xs.remove(0) } else { ConceptExpr::And(xs) })
    }

    fn atom(&mut self) -> Result<ConceptExpr, RankError> {
        match self.toks.get(self.pos).cloned() {
            Some((_, Tok::Name(n))) if !n.is_empty() => {
                self.pos += 1;
                Ok(ConceptExpr::Concept(n))
            }
            Some((_, Tok::Open(o))) => {
                self.pos += 1;
                let inner = self.or()?;
                let want = if o == '[' { ']' } else { ')' };
                match self.toks.get(self.pos) {
                    Some((_, Tok::Close(c))) if *c == want => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => self.err(&format!("expected `{want}`")),
                }
            }
            _ => self.err("expected a concept name or `[`"),
        }
    }
}

pub fn parse_concept_rule(src: &str) -> Result<ConceptExpr, RankError> {
    let mut p = Parser { toks: lex(src)?, pos: 0, len: src.len() };
    let e = p.or()?;
    if p.pos < p.toks.len() {
        return p.err("unexpected input after expression");
    }
    Ok(e)
}

/// Whether the document holds every term of at least one member.
pub fn contains_concept(view: &DocView, member_terms: &[Vec<String>]) -> bool {
    member_terms.iter().any(|ts| !ts.is_empty() && ts.iter().all(|t| view.token_set.contains(t)))
}

/// Documents satisfying `expr` ("contains a concept" = contains one of its
/// members), ranked by the preference over the referenced concepts.
/// `concepts` supplies members and weights by case-insensitive name.
pub fn eval_concept_rule(
    expr: &ConceptExpr,
    concepts: &[WeightedConcept],
    corpus: &Corpus,
    pipeline: &TextPipeline,
    top_n: usize,
) -> Result<Vec<RankedItem>, RankError> {
    let mut used: Vec<WeightedConcept> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for name in expr.names() {
        let key = name.to_lowercase();
        if index.contains_key(&key) {
            continue;
        }
        let c = concepts
            .iter()
            .find(|c| c.label.to_lowercase() == key)
            .ok_or_else(|| RankError::UnknownConcept(name.to_string()))?;
        index.insert(key, used.len());
        used.push(c.clone());
    }
    let pref = Preference { concepts: used };
    let compiled = CompiledPreference::new(&pref, corpus, pipeline)?;
    let passers = (0..corpus.len()).filter(|&d| {
        let view = corpus.view(d);
        expr.eval(&mut |n| contains_concept(view, &compiled.terms[index[&n.to_lowercase()]]))
    });
    rank_docs(&compiled, &pref, corpus, passers.collect::<Vec<_>>(), top_n, true)
}
