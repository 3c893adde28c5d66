//! File-backed knowledge: hypernyms, categories, gazetteer and embeddings.
//!
//! Lexicons are loaded once and are read-only afterwards.

mod embedding;
mod lexicon;
pub mod similarity;

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use embedding::{add_into, cosine, EmbeddingTable, Vector};
pub use lexicon::{Category, CategoryModel, EntityMention, Gazetteer, GazetteerEntry, HypernymLexicon};
pub use similarity::{link_entity, string_similarity, LinkResult, Metric, SimilarityError};

use crate::text::TextPipeline;

pub const HYPERNYMS_FILE: &str = "hypernyms.tsv";
pub const GAZETTEER_FILE: &str = "gazetteer.tsv";
pub const CATEGORIES_FILE: &str = "categories.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("vector dimension {found} does not match table dimension {expected}")]
    Dimension { expected: usize, found: usize },
}

impl KnowledgeError {
    pub(crate) fn io(path: &str, source: std::io::Error) -> Self {
        Self::Io { path: path.to_string(), source }
    }

    pub(crate) fn format(path: &str, line: usize, message: &str) -> Self {
        Self::Format { path: path.to_string(), line, message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Person,
    Organization,
    Location,
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "person" | "per" => Ok(Self::Person),
            "organization" | "organisation" | "org" => Ok(Self::Organization),
            "location" | "loc" => Ok(Self::Location),
            other => Err(other.to_string()),
        }
    }
}

/// The six summary kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Topic,
    Category,
    Person,
    Organization,
    Location,
    Keyword,
}

impl SummaryKind {
    pub const ALL: [SummaryKind; 6] = [
        SummaryKind::Topic,
        SummaryKind::Category,
        SummaryKind::Person,
        SummaryKind::Organization,
        SummaryKind::Location,
        SummaryKind::Keyword,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SummaryKind::Topic => "topic",
            SummaryKind::Category => "category",
            SummaryKind::Person => "person",
            SummaryKind::Organization => "organization",
            SummaryKind::Location => "location",
            SummaryKind::Keyword => "keyword",
        }
    }

    pub fn entity(self) -> Option<EntityKind> {
        match self {
            SummaryKind::Person => Some(EntityKind::Person),
            SummaryKind::Organization => Some(EntityKind::Organization),
            SummaryKind::Location => Some(EntityKind::Location),
            _ => None,
        }
    }
}

impl From<EntityKind> for SummaryKind {
    fn from(k: EntityKind) -> Self {
        match k {
            EntityKind::Person => SummaryKind::Person,
            EntityKind::Organization => SummaryKind::Organization,
            EntityKind::Location => SummaryKind::Location,
        }
    }
}

impl fmt::Display for SummaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SummaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        SummaryKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(s)
    }
}

/// An attribute described by the knowledge base: `c ↦ ℓ(c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub attribute: String,
    pub descriptor: String,
    pub kind: SummaryKind,
}

/// Paths of the lexicon files to load. `None` means "not configured".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeFiles {
    pub hypernyms: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

impl KnowledgeFiles {
    /// Picks up the standard file names that exist under `dir`.
    pub fn from_dir(dir: &Path) -> Self {
        let pick = |name: &str| {
            let p = dir.join(name);
            p.is_file().then_some(p)
        };
        Self {
            hypernyms: pick(HYPERNYMS_FILE),
            gazetteer: pick(GAZETTEER_FILE),
            categories: pick(CATEGORIES_FILE),
            embeddings: pick(EMBEDDINGS_FILE),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    pub hypernyms: Option<HypernymLexicon>,
    pub gazetteer: Option<Gazetteer>,
    pub categories: Option<CategoryModel>,
    pub embeddings: Option<EmbeddingTable>,
}

fn read(path: &Path) -> Result<String, KnowledgeError> {
    fs::read_to_string(path).map_err(|e| KnowledgeError::io(&path.display().to_string(), e))
}

impl Knowledge {
    /// Loads every configured file. A configured but missing file is an
    /// error here, never later at lookup time.
    pub fn load(files: &KnowledgeFiles, pipeline: &TextPipeline) -> Result<Self, KnowledgeError> {
        let embeddings = match &files.embeddings {
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| KnowledgeError::io(&p.display().to_string(), e))?;
                Some(EmbeddingTable::parse(BufReader::new(f), &p.display().to_string(), pipeline)?)
            }
            None => None,
        };
        let hypernyms = match &files.hypernyms {
            Some(p) => Some(HypernymLexicon::parse(&read(p)?, &p.display().to_string(), pipeline)?),
            None => None,
        };
        let gazetteer = match &files.gazetteer {
            Some(p) => Some(Gazetteer::parse(&read(p)?, &p.display().to_string(), pipeline)?),
            None => None,
        };
        let categories = match &files.categories {
            Some(p) => Some(CategoryModel::parse(&read(p)?, &p.display().to_string(), pipeline, embeddings.as_ref())?),
            None => None,
        };
        Ok(Self { hypernyms, gazetteer, categories, embeddings })
    }

    /// Whether the lexicon backing `kind` is loaded.
    pub fn supports(&self, kind: SummaryKind) -> bool {
        match kind {
            SummaryKind::Topic => self.hypernyms.is_some(),
            SummaryKind::Category => self.categories.is_some(),
            SummaryKind::Person | SummaryKind::Organization | SummaryKind::Location => self.gazetteer.is_some(),
            SummaryKind::Keyword => true,
        }
    }

    /// Hypernym descriptor of a normalized token.
    pub fn hypernym(&self, token: &str) -> Option<&str> {
        self.hypernyms.as_ref()?.lookup(token)
    }

    /// Category of a normalized token.
    pub fn category(&self, token: &str) -> Option<&str> {
        self.categories.as_ref()?.assign(token, self.embeddings.as_ref())
    }

    /// Describes `attribute` as `kind`. Topic and category attributes are
    /// normalized tokens (or raw words, which get normalized); entity
    /// attributes are surface forms. Keywords have no descriptor.
    pub fn annotate_attribute(
        &self,
        attribute: &str,
        kind: SummaryKind,
        pipeline: &TextPipeline,
    ) -> Option<Annotation> {
        let descriptor = match kind {
            SummaryKind::Topic | SummaryKind::Category => {
                let token = self.token_key(attribute, pipeline)?;
                if kind == SummaryKind::Topic {
                    self.hypernym(&token)?.to_string()
                } else {
                    self.category(&token)?.to_string()
                }
            }
            SummaryKind::Person | SummaryKind::Organization | SummaryKind::Location => {
                let entry = self.gazetteer.as_ref()?.lookup(attribute)?;
                if SummaryKind::from(entry.kind) != kind {
                    return None;
                }
                entry.descriptor.clone()
            }
            SummaryKind::Keyword => return None,
        };
        Some(Annotation { attribute: attribute.to_string(), descriptor, kind })
    }

    /// Annotation under the first kind that knows the attribute, in the order
    /// gazetteer, hypernym, category.
    pub fn classify_attribute(&self, attribute: &str, pipeline: &TextPipeline) -> Option<Annotation> {
        if let Some(e) = self.gazetteer.as_ref().and_then(|g| g.lookup(attribute)) {
            return self.annotate_attribute(attribute, e.kind.into(), pipeline);
        }
        self.annotate_attribute(attribute, SummaryKind::Topic, pipeline)
            .or_else(|| self.annotate_attribute(attribute, SummaryKind::Category, pipeline))
    }

    fn token_key(&self, attribute: &str, pipeline: &TextPipeline) -> Option<String> {
        let direct = attribute.trim();
        let known = self.hypernyms.as_ref().is_some_and(|h| h.lookup(direct).is_some())
            || self.embeddings.as_ref().is_some_and(|e| e.get(direct).is_some());
        if known {
            return Some(direct.to_string());
        }
        pipeline.normalize_term(direct)
    }
}
