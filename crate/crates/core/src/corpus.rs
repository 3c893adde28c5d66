//! Document store, preprocessing views and the TF-IDF inverted index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::knowledge::{EntityMention, Knowledge};
use crate::text::{TextPipeline, TokenView};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: document id `{id}` conflicts with an existing document")]
    Conflict { line: usize, id: String },
    #[error("unknown document `{0}`")]
    UnknownDoc(String),
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

/// Preprocessed document as seen by rule evaluation and ranking.
#[derive(Debug, Clone, Default)]
pub struct DocView {
    pub tokens: Vec<String>,
    pub token_set: HashSet<String>,
    /// Lowercased surface forms.
    pub raw_terms: HashSet<String>,
    pub hashtags: Vec<String>,
    pub hashtag_stems: HashSet<String>,
    pub entities: Vec<EntityMention>,
}

impl DocView {
    pub fn build(
        text: &str,
        meta: &BTreeMap<String, Value>,
        pipeline: &TextPipeline,
        knowledge: Option<&Knowledge>,
    ) -> Self {
        let tv = pipeline.preprocess(text);
        Self::from_parts(
            tv,
            meta,
            pipeline,
            knowledge.and_then(|k| k.gazetteer.as_ref()).map(|g| g.find_mentions(text, pipeline)),
        )
    }

    fn from_parts(
        tv: TokenView,
        meta: &BTreeMap<String, Value>,
        pipeline: &TextPipeline,
        entities: Option<Vec<EntityMention>>,
    ) -> Self {
        let mut hashtags = tv.hashtags;
        if let Some(Value::Array(extra)) = meta.get("hashtags") {
            for h in extra.iter().filter_map(Value::as_str) {
                let h = h.trim_start_matches('#').to_lowercase();
                if !h.is_empty() && !hashtags.contains(&h) {
                    hashtags.push(h);
                }
            }
        }
        let hashtag_stems = hashtags.iter().map(|h| pipeline.normalize_word(h)).collect();
        Self {
            token_set: tv.tokens.iter().cloned().collect(),
            tokens: tv.tokens,
            raw_terms: tv.raw_terms.iter().map(|t| t.to_lowercase()).collect(),
            hashtags,
            hashtag_stems,
            entities: entities.unwrap_or_default(),
        }
    }

    /// View over a bare token list, for tests and ad-hoc evaluation.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        Self {
            token_set: tokens.iter().cloned().collect(),
            raw_terms: tokens.iter().cloned().collect(),
            tokens,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub vocabulary: usize,
    pub postings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub added: usize,
    /// Records identical to an already stored document.
    pub skipped: usize,
    pub stats: IndexStats,
}

#[derive(Debug, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    views: Vec<DocView>,
    by_id: HashMap<String, usize>,
    // token → (doc index, tf), doc indices ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
    header: Option<Value>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<Value>,
    text: Option<Value>,
    #[serde(default)]
    created_at: Option<Value>,
    #[serde(default)]
    meta: Option<Value>,
}

fn parse_record(line: &str, lineno: usize) -> Result<Document, CorpusError> {
    let bad = |message: String| CorpusError::Malformed { line: lineno, message };
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let id = match raw.id {
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(_) => return Err(bad("`id` must be a non-empty string".into())),
        None => return Err(bad("missing `id`".into())),
    };
    let text = match raw.text {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        Some(_) => return Err(bad("`text` must be a non-empty string".into())),
        None => return Err(bad("missing `text`".into())),
    };
    let created_at = match raw.created_at {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            chrono::DateTime::parse_from_rfc3339(&s).map_err(|e| bad(format!("`created_at` is not RFC 3339: {e}")))?;
            Some(s)
        }
        Some(_) => return Err(bad("`created_at` must be a string".into())),
    };
    let meta = match raw.meta {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m.into_iter().collect(),
        Some(_) => return Err(bad("`meta` must be an object".into())),
    };
    Ok(Document { id, text, created_at, meta })
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ingests JSON Lines. The whole input is validated before anything is
    /// stored; a record whose id already exists with identical content is
    /// skipped, a differing one is a conflict. A first line of the form
    /// `{"header": {...}}` is kept as corpus metadata.
    pub fn ingest_jsonl(
        &mut self,
        reader: impl BufRead,
        pipeline: &TextPipeline,
        knowledge: Option<&Knowledge>,
    ) -> Result<IngestOutcome, CorpusError> {
        let mut fresh: Vec<Document> = Vec::new();
        let mut fresh_ids: HashMap<String, usize> = HashMap::new();
        let mut skipped = 0;
        let mut header = None;
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if std::mem::take(&mut first) {
                if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&line) {
                    if obj.len() == 1 && obj.contains_key("header") {
                        header = obj.get("header").cloned();
                        continue;
                    }
                }
            }
            let doc = parse_record(&line, lineno)?;
            if let Some(&idx) = self.by_id.get(&doc.id) {
                if self.docs[idx] == doc {
                    skipped += 1;
                    continue;
                }
                return Err(CorpusError::Conflict { line: lineno, id: doc.id });
            }
            if let Some(&idx) = fresh_ids.get(&doc.id) {
                if fresh[idx] == doc {
                    skipped += 1;
                    continue;
                }
                return Err(CorpusError::Conflict { line: lineno, id: doc.id });
            }
            fresh_ids.insert(doc.id.clone(), fresh.len());
            fresh.push(doc);
        }
        let added = fresh.len();
        for doc in fresh {
            self.insert(doc, pipeline, knowledge);
        }
        if header.is_some() && self.header.is_none() {
            self.header = header;
        }
        Ok(IngestOutcome { added, skipped, stats: self.stats() })
    }

    /// Adds one document. Panics on a duplicate id; use `ingest_jsonl` for
    /// untrusted input.
    pub fn insert(&mut self, doc: Document, pipeline: &TextPipeline, knowledge: Option<&Knowledge>) {
        assert!(!self.by_id.contains_key(&doc.id), "duplicate document id {}", doc.id);
        let view = DocView::build(&doc.text, &doc.meta, pipeline, knowledge);
        let idx = self.docs.len() as u32;
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &view.tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            self.postings.entry(t.to_string()).or_default().push((idx, n));
        }
        self.by_id.insert(doc.id.clone(), idx as usize);
        self.docs.push(doc);
        self.views.push(view);
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn header(&self) -> Option<&Value> {
        self.header.as_ref()
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            doc_count: self.docs.len(),
            vocabulary: self.postings.len(),
            postings: self.postings.values().map(Vec::len).sum(),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, idx: usize) -> &Document {
        &self.docs[idx]
    }

    pub fn view(&self, idx: usize) -> &DocView {
        &self.views[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn view_by_id(&self, id: &str) -> Result<&DocView, CorpusError> {
        self.index_of(id).map(|i| &self.views[i]).ok_or_else(|| CorpusError::UnknownDoc(id.to_string()))
    }

    pub fn df(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, Vec::len)
    }

    pub fn postings(&self, token: &str) -> &[(u32, u32)] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = (&String, usize)> {
        self.postings.iter().map(|(t, p)| (t, p.len()))
    }

    pub fn tf(&self, token: &str, doc_idx: usize) -> u32 {
        let list = self.postings(token);
        list.binary_search_by_key(&(doc_idx as u32), |p| p.0).map(|i| list[i].1).unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df(token);
        if df == 0 {
            0.0
        } else {
            (self.docs.len() as f64 / df as f64).ln()
        }
    }

    /// `tf(term, doc) · ln(N / df(term))` over normalized tokens.
    pub fn tfidf(&self, token: &str, doc_id: &str) -> Result<f64, CorpusError> {
        let idx = self.index_of(doc_id).ok_or_else(|| CorpusError::UnknownDoc(doc_id.to_string()))?;
        Ok(self.tfidf_at(token, idx))
    }

    pub fn tfidf_at(&self, token: &str, doc_idx: usize) -> f64 {
        let tf = self.tf(token, doc_idx);
        if tf == 0 {
            0.0
        } else {
            tf as f64 * self.idf(token)
        }
    }

    /// Euclidean norm of a document's TF-IDF vector.
    pub fn doc_norm(&self, doc_idx: usize) -> f64 {
        let mut seen = HashSet::new();
        let mut sum = 0.0;
        for t in &self.views[doc_idx].tokens {
            if seen.insert(t.as_str()) {
                let w = self.tfidf_at(t, doc_idx);
                sum += w * w;
            }
        }
        sum.sqrt()
    }
}

/// `{id, tag, relevant}` ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: String,
    pub tag: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    labels: HashMap<(String, String), bool>,
}

impl GroundTruth {
    pub fn parse_jsonl(reader: impl BufRead) -> Result<Self, CorpusError> {
        let mut gt = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Label = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
            gt.insert(l);
        }
        Ok(gt)
    }

    pub fn insert(&mut self, label: Label) {
        self.labels.insert((label.id, label.tag), label.relevant);
    }

    pub fn get(&self, doc_id: &str, tag: &str) -> Option<bool> {
        self.labels.get(&(doc_id.to_string(), tag.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of documents labelled relevant to `tag`.
    pub fn relevant_count(&self, tag: &str) -> usize {
        self.labels.iter().filter(|((_, t), r)| t == tag && **r).count()
    }
}
