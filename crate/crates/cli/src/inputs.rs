use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use curation_core::corpus::{Corpus, GroundTruth, IngestOutcome};
use curation_core::eval::ConceptRegistry;
use curation_core::knowledge::{Knowledge, KnowledgeFiles};
use curation_core::text::TextPipeline;
use curation_service::store::{LEMMAS_FILE, LEXICON_DIR, STOPWORDS_FILE};

use crate::{Failure, Sources};

pub struct Loaded {
    pub pipeline: TextPipeline,
    pub corpus: Corpus,
    pub knowledge: Knowledge,
    pub registry: ConceptRegistry,
    pub outcome: IngestOutcome,
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn lexicon_dir(sources: &Sources) -> Result<Option<PathBuf>, Failure> {
    match &sources.lexicon {
        Some(d) if d.is_dir() => Ok(Some(d.clone())),
        Some(d) => Err(Failure::data(format!("lexicon directory {} does not exist", d.display()))),
        None => {
            let sibling = sources.corpus.parent().unwrap_or(Path::new(".")).join(LEXICON_DIR);
            Ok(sibling.is_dir().then_some(sibling))
        }
    }
}

pub fn load(sources: &Sources) -> Result<Loaded, Failure> {
    let lex = lexicon_dir(sources)?;
    let pick = |name: &str| lex.as_ref().map(|d| d.join(name)).filter(|p| p.is_file());
    let pipeline = TextPipeline::from_files(pick(STOPWORDS_FILE).as_deref(), pick(LEMMAS_FILE).as_deref())
        .map_err(Failure::data)?;
    let knowledge = match &lex {
        Some(d) => Knowledge::load(&KnowledgeFiles::from_dir(d), &pipeline).map_err(Failure::data)?,
        None => Knowledge::default(),
    };
    let mut corpus = Corpus::new();
    let outcome = corpus
        .ingest_jsonl(open(&sources.corpus)?, &pipeline, Some(&knowledge))
        .map_err(|e| Failure::data(format!("{}: {e}", sources.corpus.display())))?;
    let registry = ConceptRegistry::from_knowledge(&knowledge);
    Ok(Loaded { pipeline, corpus, knowledge, registry, outcome })
}

pub fn labels(path: &Path) -> Result<GroundTruth, Failure> {
    GroundTruth::parse_jsonl(open(path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
