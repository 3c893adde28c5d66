//! The workspace directory: corpus, labels, lexicons, default config and
//! one subdirectory per rule.
//!
//! ```text
//! corpus.jsonl  labels.jsonl  config.toml  summaries.json
//! lexicon/{hypernyms.tsv, gazetteer.tsv, categories.json, embeddings.txt, stopwords.txt, lemmas.tsv}
//! rules/<id>/...
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use curation_core::adapt::{AdaptConfig, Env};
use curation_core::corpus::{Corpus, GroundTruth, IngestOutcome, Label};
use curation_core::eval::ConceptRegistry;
use curation_core::knowledge::{
    Knowledge, KnowledgeFiles, CATEGORIES_FILE, EMBEDDINGS_FILE, GAZETTEER_FILE, HYPERNYMS_FILE,
};
use curation_core::summarize::SummarySet;
use curation_core::text::TextPipeline;
use serde::Serialize;

use crate::error::ApiError;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARIES_FILE: &str = "summaries.json";
pub const LEXICON_DIR: &str = "lexicon";
pub const RULES_DIR: &str = "rules";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const LEMMAS_FILE: &str = "lemmas.tsv";

/// Upload part names accepted for lexicon files, with their file names.
pub const LEXICON_PARTS: [(&str, &str); 4] = [
    ("hypernyms", HYPERNYMS_FILE),
    ("gazetteer", GAZETTEER_FILE),
    ("categories", CATEGORIES_FILE),
    ("embeddings", EMBEDDINGS_FILE),
];

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

/// Writes through a temporary file so readers never see half a file.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ApiError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path)).map_err(|e| io_err(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ApiError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| ApiError::internal(e.to_string()))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

/// Corpus, knowledge and labels of a workspace, plus derived indexes.
pub struct Data {
    pub root: PathBuf,
    pub pipeline: TextPipeline,
    pub corpus: Corpus,
    pub knowledge: Knowledge,
    pub registry: ConceptRegistry,
    pub truth: Option<GroundTruth>,
    pub defaults: AdaptConfig,
    /// Summaries over every supported kind at the default wedge count.
    pub summaries: Option<SummarySet>,
}

fn startup(e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("cannot open workspace: {e}"))
}

fn lexicon_files(dir: &Path) -> KnowledgeFiles {
    KnowledgeFiles::from_dir(dir)
}

impl Data {
    pub fn open(root: &Path) -> Result<Self, ApiError> {
        fs::create_dir_all(root.join(RULES_DIR)).map_err(|e| io_err(root, e))?;
        let lex = root.join(LEXICON_DIR);
        let pick = |name: &str| {
            let p = lex.join(name);
            p.is_file().then_some(p)
        };
        let pipeline =
            TextPipeline::from_files(pick(STOPWORDS_FILE).as_deref(), pick(LEMMAS_FILE).as_deref()).map_err(startup)?;
        let knowledge = Knowledge::load(&lexicon_files(&lex), &pipeline).map_err(startup)?;
        let mut corpus = Corpus::new();
        let corpus_path = root.join(CORPUS_FILE);
        if corpus_path.is_file() {
            let f = fs::File::open(&corpus_path).map_err(|e| io_err(&corpus_path, e))?;
            corpus
                .ingest_jsonl(std::io::BufReader::new(f), &pipeline, Some(&knowledge))
                .map_err(|e| startup(format!("{}: {e}", corpus_path.display())))?;
        }
        let labels_path = root.join(LABELS_FILE);
        let truth = if labels_path.is_file() {
            let f = fs::File::open(&labels_path).map_err(|e| io_err(&labels_path, e))?;
            Some(
                GroundTruth::parse_jsonl(std::io::BufReader::new(f))
                    .map_err(|e| startup(format!("{}: {e}", labels_path.display())))?,
            )
        } else {
            None
        };
        let config_path = root.join(CONFIG_FILE);
        let defaults = if config_path.is_file() {
            AdaptConfig::load(&config_path).map_err(startup)?
        } else {
            AdaptConfig::default()
        };
        let summaries = match fs::read_to_string(root.join(SUMMARIES_FILE)) {
            Ok(text) => serde_json::from_str(&text).ok(),
            Err(_) => None,
        };
        let mut data = Self {
            root: root.to_path_buf(),
            pipeline,
            corpus,
            knowledge,
            registry: ConceptRegistry::new(),
            truth,
            defaults,
            summaries,
        };
        data.rebuild_registry();
        Ok(data)
    }

    pub fn rebuild_registry(&mut self) {
        let mut reg = ConceptRegistry::from_knowledge(&self.knowledge);
        if let Some(s) = &self.summaries {
            s.register_into(&mut reg);
        }
        self.registry = reg;
    }

    pub fn env<'a>(&'a self, config: &'a AdaptConfig) -> Env<'a> {
        Env {
            corpus: &self.corpus,
            knowledge: &self.knowledge,
            pipeline: &self.pipeline,
            concepts: &self.registry,
            config,
        }
    }

    /// Ingests an upload. Everything is validated before the workspace
    /// changes: lexicons first, then the corpus against the new lexicons,
    /// then the labels.
    pub fn ingest(&mut self, upload: Upload) -> Result<IngestReport, ApiError> {
        let lex_dir = self.root.join(LEXICON_DIR);
        let staged = if upload.lexicons.is_empty() {
            None
        } else {
            let stage = self.root.join(".upload");
            let _ = fs::remove_dir_all(&stage);
            fs::create_dir_all(&stage).map_err(|e| io_err(&stage, e))?;
            let mut files = lexicon_files(&lex_dir);
            for (name, bytes) in &upload.lexicons {
                let p = stage.join(name);
                fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
                match name.as_str() {
                    HYPERNYMS_FILE => files.hypernyms = Some(p),
                    GAZETTEER_FILE => files.gazetteer = Some(p),
                    CATEGORIES_FILE => files.categories = Some(p),
                    _ => files.embeddings = Some(p),
                }
            }
            let knowledge = Knowledge::load(&files, &self.pipeline)
                .map_err(|e| ApiError::bad_request("invalid_lexicon", e.to_string()))?;
            Some((stage, knowledge))
        };

        let labels = match &upload.labels {
            Some(bytes) => parse_labels(bytes)?,
            None => Vec::new(),
        };

        let (corpus, knowledge, outcome) = match &staged {
            Some((_, knowledge)) => {
                // views depend on the lexicons, so the whole corpus is rebuilt
                let mut corpus = Corpus::new();
                let existing = corpus_jsonl(&self.corpus);
                corpus.ingest_jsonl(Cursor::new(existing.as_bytes()), &self.pipeline, Some(knowledge))?;
                let outcome = match &upload.corpus {
                    Some(bytes) => corpus.ingest_jsonl(Cursor::new(bytes), &self.pipeline, Some(knowledge))?,
                    None => IngestOutcome { stats: corpus.stats(), ..Default::default() },
                };
                (Some(corpus), Some(knowledge.clone()), outcome)
            }
            None => {
                let outcome = match &upload.corpus {
                    Some(bytes) => {
                        self.corpus.ingest_jsonl(Cursor::new(bytes), &self.pipeline, Some(&self.knowledge))?
                    }
                    None => IngestOutcome { stats: self.corpus.stats(), ..Default::default() },
                };
                (None, None, outcome)
            }
        };

        if let Some((stage, _)) = &staged {
            fs::create_dir_all(&lex_dir).map_err(|e| io_err(&lex_dir, e))?;
            for (name, _) in &upload.lexicons {
                let to = lex_dir.join(name);
                fs::rename(stage.join(name), &to).map_err(|e| io_err(&to, e))?;
            }
            let _ = fs::remove_dir_all(stage);
        }
        if let Some(c) = corpus {
            self.corpus = c;
        }
        if let Some(k) = knowledge {
            self.knowledge = k;
        }
        if outcome.added > 0 || staged.is_some() {
            write_atomic(&self.root.join(CORPUS_FILE), corpus_jsonl(&self.corpus).as_bytes())?;
            self.summaries = None;
            let _ = fs::remove_file(self.root.join(SUMMARIES_FILE));
        }
        if !labels.is_empty() {
            let truth = self.truth.get_or_insert_with(GroundTruth::default);
            let mut text = String::new();
            for l in &labels {
                truth.insert(l.clone());
                text.push_str(&serde_json::to_string(l).expect("labels serialize"));
                text.push('\n');
            }
            let path = self.root.join(LABELS_FILE);
            let mut all = fs::read_to_string(&path).unwrap_or_default();
            if !all.is_empty() && !all.ends_with('\n') {
                all.push('\n');
            }
            all.push_str(&text);
            write_atomic(&path, all.as_bytes())?;
        }
        self.rebuild_registry();
        Ok(IngestReport {
            added: outcome.added,
            skipped: outcome.skipped,
            stats: outcome.stats,
            labels: labels.len(),
            lexicons: upload.lexicons.iter().map(|(n, _)| n.clone()).collect(),
        })
    }
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<Label>, ApiError> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| ApiError::bad_request("malformed_labels", "labels are not UTF-8"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Label = serde_json::from_str(line)
            .map_err(|e| ApiError::bad_request("malformed_labels", format!("line {}: {e}", i + 1)))?;
        out.push(l);
    }
    Ok(out)
}

/// The corpus as JSON Lines, header first.
pub fn corpus_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    if let Some(h) = corpus.header() {
        out.push_str(&serde_json::json!({ "header": h }).to_string());
        out.push('\n');
    }
    for d in corpus.documents() {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

/// Parts of a corpus upload.
#[derive(Debug, Default)]
pub struct Upload {
    pub corpus: Option<Vec<u8>>,
    pub labels: Option<Vec<u8>>,
    /// (file name, contents)
    pub lexicons: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub added: usize,
    pub skipped: usize,
    pub stats: curation_core::corpus::IndexStats,
    pub labels: usize,
    pub lexicons: Vec<String>,
}
