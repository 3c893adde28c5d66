//! Seeded synthetic corpora with planted topics, for end-to-end runs.
//!
//! Every document belongs to one topic and mixes a few words of that topic
//! with Zipf-distributed background words. Topic vocabularies are split into
//! subtopics, and the generated hypernym lexicon maps each word to its
//! subtopic. A seed keyword occurs in a share of the target topic's documents
//! and in enough other documents to give the seed rule a chosen precision.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::derive_seed;
use crate::corpus::{Corpus, Document, GroundTruth, Label};
use crate::knowledge::{HypernymLexicon, Knowledge};
use crate::text::TextPipeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub docs: usize,
    pub topics: usize,
    pub subtopics: usize,
    pub words_per_subtopic: usize,
    pub background_words: usize,
    pub topic_words_per_doc: usize,
    pub background_per_doc: usize,
    /// Share of target-topic documents carrying the seed keyword.
    pub seed_coverage: f64,
    /// Oracle precision of the seed rule.
    pub seed_precision: f64,
    /// Chance that a document also carries one word of another topic.
    pub leakage: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 50_000,
            topics: 3,
            subtopics: 6,
            words_per_subtopic: 20,
            background_words: 300,
            topic_words_per_doc: 2,
            background_per_doc: 4,
            seed_coverage: 0.5,
            seed_precision: 0.55,
            leakage: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicVocab {
    pub name: String,
    /// subtopic label → words
    pub subtopics: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub tag: String,
    pub seed_keyword: String,
    pub topics: Vec<TopicVocab>,
    pub background: Vec<String>,
    pub documents: Vec<Document>,
    pub labels: Vec<Label>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aiou";

/// Pronounceable pseudo-words that survive normalization unchanged.
fn vocabulary(n: usize, rng: &mut ChaCha8Rng, pipeline: &TextPipeline, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        if pipeline.is_stopword(&w) || pipeline.normalize_word(&w) != w || !taken.insert(w.clone()) {
            continue;
        }
        out.push(w);
    }
    out
}

pub const TOPIC_NAMES: [&str; 6] = ["Budget", "Health", "Sport", "Travel", "Science", "Music"];

pub fn generate(config: &SynthConfig, pipeline: &TextPipeline) -> SynthCorpus {
    assert!(config.topics >= 2 && config.topics <= TOPIC_NAMES.len(), "2 to 6 topics");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, 0x5157));
    let mut taken = BTreeSet::new();
    let seed_keyword = vocabulary(1, &mut rng, pipeline, &mut taken).remove(0);
    let topics: Vec<TopicVocab> = (0..config.topics)
        .map(|t| TopicVocab {
            name: TOPIC_NAMES[t].to_string(),
            subtopics: (0..config.subtopics)
                .map(|s| {
                    (
                        format!("{}_{}", TOPIC_NAMES[t].to_lowercase(), s + 1),
                        vocabulary(config.words_per_subtopic, &mut rng, pipeline, &mut taken),
                    )
                })
                .collect(),
        })
        .collect();
    let background = vocabulary(config.background_words, &mut rng, pipeline, &mut taken);
    let zipf = WeightedIndex::new((1..=background.len()).map(|r| 1.0 / r as f64)).expect("non-empty background");

    // P(seed | other topic) such that the seed rule has the wanted precision
    let others = (config.topics - 1) as f64;
    let off_rate = (config.seed_coverage * (1.0 / config.seed_precision - 1.0) / others).min(1.0);

    let mut documents = Vec::with_capacity(config.docs);
    let mut labels = Vec::with_capacity(config.docs);
    let tag = topics[0].name.clone();
    for i in 0..config.docs {
        let topic = i % config.topics;
        let mut words: Vec<&str> = Vec::new();
        let vocab = &topics[topic];
        for _ in 0..config.topic_words_per_doc {
            let (_, sub) = &vocab.subtopics[rng.random_range(0..vocab.subtopics.len())];
            words.push(&sub[rng.random_range(0..sub.len())]);
        }
        if rng.random_bool(config.leakage) {
            let other = (topic + rng.random_range(1..config.topics)) % config.topics;
            let subs = &topics[other].subtopics;
            let (_, sub) = &subs[rng.random_range(0..subs.len())];
            words.push(&sub[rng.random_range(0..sub.len())]);
        }
        for _ in 0..config.background_per_doc {
            words.push(&background[zipf.sample(&mut rng)]);
        }
        let p_seed = if topic == 0 { config.seed_coverage } else { off_rate };
        if rng.random_bool(p_seed) {
            words.push(&seed_keyword);
        }
        // shuffle so position carries no signal
        for j in (1..words.len()).rev() {
            words.swap(j, rng.random_range(0..=j));
        }
        let id = format!("s{i:06}");
        documents.push(Document { id: id.clone(), text: words.join(" "), created_at: None, meta: Default::default() });
        labels.push(Label { id, tag: tag.clone(), relevant: topic == 0 });
    }
    SynthCorpus { config: config.clone(), tag, seed_keyword, topics, background, documents, labels }
}

impl SynthCorpus {
    /// `keyword<TAB>subtopic` for every topic word.
    pub fn hypernyms_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            for (label, words) in &t.subtopics {
                for w in words {
                    let _ = writeln!(out, "{w}\t{label}");
                }
            }
        }
        out
    }

    pub fn seed_rule(&self) -> String {
        format!("tag: {}\nTweet.Keyword.Contains('{}')\n", self.tag, self.seed_keyword)
    }

    pub fn corpus_jsonl(&self) -> String {
        let header = serde_json::json!({ "header": { "generator": "synth", "config": self.config, "tag": self.tag } });
        let mut out = header.to_string();
        out.push('\n');
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("documents serialize"));
            out.push('\n');
        }
        out
    }

    pub fn labels_jsonl(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(&serde_json::to_string(l).expect("labels serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes corpus.jsonl, labels.jsonl, seed.rule and lexicon/hypernyms.tsv.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir.join("lexicon"))?;
        fs::write(dir.join("corpus.jsonl"), self.corpus_jsonl())?;
        fs::write(dir.join("labels.jsonl"), self.labels_jsonl())?;
        fs::write(dir.join("seed.rule"), self.seed_rule())?;
        fs::write(dir.join("lexicon").join(crate::knowledge::HYPERNYMS_FILE), self.hypernyms_tsv())
    }

    /// In-memory corpus, knowledge and labels, skipping the files.
    pub fn materialize(&self, pipeline: &TextPipeline) -> (Corpus, Knowledge, GroundTruth) {
        let mut corpus = Corpus::new();
        for d in &self.documents {
            corpus.insert(d.clone(), pipeline, None);
        }
        let mut lex = HypernymLexicon::default();
        for t in &self.topics {
            for (label, words) in &t.subtopics {
                for w in words {
                    lex.insert(w.clone(), label.clone());
                }
            }
        }
        let knowledge = Knowledge { hypernyms: Some(lex), ..Default::default() };
        let mut truth = GroundTruth::default();
        for l in &self.labels {
            truth.insert(l.clone());
        }
        (corpus, knowledge, truth)
    }
}
