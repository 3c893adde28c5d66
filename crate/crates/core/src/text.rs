//! Tokenization, normalization and noise removal.
//!
//! The pipeline is shared by the corpus, the knowledge lexicons and the rule
//! evaluator so that every side of a comparison is normalized the same way:
//! lowercase, strip URLs/mentions/emoji/punctuation, drop stopwords, then map
//! each word through the lemma lexicon (when present) and the English stemmer.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_LEMMAS: &str = include_str!("../data/lemmas.tsv");

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `form<TAB>lemma`")]
    BadLemmaLine { path: String, line: usize },
}

/// Preprocessed view of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenView {
    /// Normalized (lemmatized, stemmed, lowercase) tokens in text order.
    pub tokens: Vec<String>,
    /// Hashtags, lowercased, without the leading `#`.
    pub hashtags: Vec<String>,
    /// Surface forms of the words that survived noise removal, in text order.
    pub raw_terms: Vec<String>,
}

impl TokenView {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty() && self.hashtags.is_empty()
    }
}

pub struct TextPipeline {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
    stemmer: Stemmer,
}

impl std::fmt::Debug for TextPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TextPipeline")
            .field("stopwords", &self.stopwords.len())
            .field("lemmas", &self.lemmas.len())
            .finish()
    }
}

impl Default for TextPipeline {
    fn default() -> Self {
        Self::new(
            parse_stopwords(DEFAULT_STOPWORDS),
            parse_lemmas(DEFAULT_LEMMAS, "<builtin>").expect("builtin lemma table is well formed"),
        )
    }
}

impl TextPipeline {
    pub fn new(stopwords: HashSet<String>, lemmas: HashMap<String, String>) -> Self {
        Self { stopwords, lemmas, stemmer: Stemmer::create(Algorithm::English) }
    }

    /// Builds a pipeline from optional override files; absent files fall back
    /// to the bundled English lists.
    pub fn from_files(stopwords: Option<&Path>, lemmas: Option<&Path>) -> Result<Self, TextError> {
        let stop = match stopwords {
            Some(p) => parse_stopwords(&read(p)?),
            None => parse_stopwords(DEFAULT_STOPWORDS),
        };
        let lem = match lemmas {
            Some(p) => parse_lemmas(&read(p)?, &p.display().to_string())?,
            None => parse_lemmas(DEFAULT_LEMMAS, "<builtin>")?,
        };
        Ok(Self::new(stop, lem))
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Lemma-first normalization of a single lowercase word.
    pub fn normalize_word(&self, word: &str) -> String {
        let base = self.lemmas.get(word).map(String::as_str).unwrap_or(word);
        self.stemmer.stem(base).into_owned()
    }

    /// Normalizes a free-text term (possibly several words) to its token
    /// sequence joined by single spaces. Returns `None` when nothing survives.
    pub fn normalize_term(&self, term: &str) -> Option<String> {
        let view = self.preprocess(term);
        if view.tokens.is_empty() {
            None
        } else {
            Some(view.tokens.join(" "))
        }
    }

    pub fn preprocess(&self, text: &str) -> TokenView {
        let mut view = TokenView::default();
        for chunk in text.split_whitespace() {
            if is_url(chunk) || chunk.starts_with('@') {
                continue;
            }
            if let Some(tag) = chunk.strip_prefix('#') {
                let tag: String =
                    tag.chars().take_while(|c| c.is_alphanumeric() || *c == '_').flat_map(char::to_lowercase).collect();
                if !tag.is_empty() {
                    view.hashtags.push(tag);
                }
                continue;
            }
            for word in split_words(chunk) {
                let lower: String = word.chars().filter(|c| *c != '\'').flat_map(char::to_lowercase).collect();
                if lower.chars().count() < 2 || self.stopwords.contains(&lower) {
                    continue;
                }
                view.tokens.push(self.normalize_word(&lower));
                view.raw_terms.push(word.to_string());
            }
        }
        view
    }

    /// Lowercased words of `text` after URL/mention/punctuation removal but
    /// without stopword removal or stemming. Used for gazetteer matching.
    pub fn surface_words(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter(|c| !is_url(c) && !c.starts_with('@'))
            .flat_map(|c| split_words(c.trim_start_matches('#')))
            .map(|w| w.chars().filter(|c| *c != '\'').flat_map(char::to_lowercase).collect::<String>())
            .filter(|w| !w.is_empty())
            .collect()
    }
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits a whitespace chunk into alphanumeric runs; apostrophes inside a word
/// are kept so that contractions stay one word.
fn split_words(chunk: &str) -> impl Iterator<Item = &str> {
    chunk.split(|c: char| !(c.is_alphanumeric() || c == '\'')).map(|w| w.trim_matches('\'')).filter(|w| !w.is_empty())
}

fn read(path: &Path) -> Result<String, TextError> {
    fs::read_to_string(path).map_err(|source| TextError::Io { path: path.display().to_string(), source })
}

fn parse_stopwords(src: &str) -> HashSet<String> {
    src.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect()
}

fn parse_lemmas(src: &str, path: &str) -> Result<HashMap<String, String>, TextError> {
    let mut out = HashMap::new();
    for (i, line) in src.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next()) {
            (Some(form), Some(lemma)) if !form.trim().is_empty() && !lemma.trim().is_empty() => {
                out.entry(form.trim().to_lowercase()).or_insert_with(|| lemma.trim().to_lowercase());
            }
            _ => return Err(TextError::BadLemmaLine { path: path.to_string(), line: i + 1 }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tweet_pipeline() {
        let p = TextPipeline::default();
        let v = p.preprocess("Mental health services are failing! http://t.co/x");
        assert_eq!(v.tokens, vec!["mental", "health", "servic", "fail"]);
        assert_eq!(v.raw_terms, vec!["Mental", "health", "services", "failing"]);
    }

    #[test]
    fn empty_text() {
        let p = TextPipeline::default();
        assert_eq!(p.preprocess(""), TokenView::default());
        assert!(p.preprocess("   ").is_empty());
    }

    #[test]
    fn health_family_collapses() {
        let p = TextPipeline::default();
        let v = p.preprocess("healthy healthier healthiest");
        assert_eq!(v.tokens.len(), 3);
        assert!(v.tokens.iter().all(|t| t == &v.tokens[0]), "{:?}", v.tokens);
    }

    #[test]
    fn hashtags_mentions_and_emoji() {
        let p = TextPipeline::default();
        let v = p.preprocess("@minister #MentalHealth funding 😡😡 cuts!!! www.example.com");
        assert_eq!(v.hashtags, vec!["mentalhealth"]);
        assert_eq!(v.tokens, vec!["fund", "cut"]);
    }

    #[test]
    fn normalize_term_multiword() {
        let p = TextPipeline::default();
        assert_eq!(p.normalize_term("Health Minister of Australia").as_deref(), Some("health minist australia"));
        assert_eq!(p.normalize_term("the"), None);
    }

    #[test]
    fn deterministic() {
        let p = TextPipeline::default();
        let t = "Doctors and physicians said the hospital budget was cut";
        assert_eq!(p.preprocess(t), p.preprocess(t));
    }
}
