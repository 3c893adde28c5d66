//! Relevance verdicts: ground-truth oracle, scripted replay and a persistent
//! labeling queue for human workers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use crate::bandit::Answer;
use crate::corpus::GroundTruth;

pub const DEFAULT_INSTRUCTIONS: &str = "Is this item relevant to the tag? Answer yes, no, or I don't know.";
pub const TASKS_PER_PAGE: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum FeedbackError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("duplicate task `{0}`")]
    DuplicateTask(String),
    #[error("quorum must be at least 1")]
    ZeroQuorum,
    #[error("feedback source unavailable: {0}")]
    Unavailable(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTask {
    pub task_id: String,
    pub doc_id: String,
    pub text: String,
    pub tag: String,
    pub round: u32,
    pub instructions: String,
}

impl LabelTask {
    pub fn new(round: u32, doc_id: &str, text: &str, tag: &str) -> Self {
        Self {
            task_id: task_id(round, doc_id),
            doc_id: doc_id.to_string(),
            text: text.to_string(),
            tag: tag.to_string(),
            round,
            instructions: DEFAULT_INSTRUCTIONS.to_string(),
        }
    }
}

pub fn task_id(round: u32, doc_id: &str) -> String {
    format!("r{round}:{doc_id}")
}

/// One worker's answer to one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub task_id: String,
    pub worker_id: String,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// The settled answer for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedVerdict {
    pub task_id: String,
    pub doc_id: String,
    pub answer: Answer,
}

/// Majority of the non-unknown answers once `quorum` answers are in; a tie
/// or no decisive answer gives `Unknown`. `None` while still short of quorum.
pub fn resolve(answers: &[Answer], quorum: usize) -> Option<Answer> {
    let quorum = quorum.max(1);
    if answers.len() < quorum {
        return None;
    }
    let yes = answers.iter().filter(|a| **a == Answer::Relevant).count();
    let no = answers.iter().filter(|a| **a == Answer::Irrelevant).count();
    Some(match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Answer::Relevant,
        std::cmp::Ordering::Less => Answer::Irrelevant,
        std::cmp::Ordering::Equal => Answer::Unknown,
    })
}

/// Relevant iff the document is labeled relevant for the task's tag;
/// unlabeled documents give Unknown. Output follows task order.
pub fn oracle_verdicts(tasks: &[LabelTask], truth: &GroundTruth) -> Vec<Verdict> {
    tasks
        .iter()
        .map(|t| Verdict {
            task_id: t.task_id.clone(),
            worker_id: "oracle".into(),
            answer: match truth.get(&t.doc_id, &t.tag) {
                Some(true) => Answer::Relevant,
                Some(false) => Answer::Irrelevant,
                None => Answer::Unknown,
            },
            timestamp: None,
        })
        .collect()
}

/// Anything that can answer a round's tasks in one go.
pub trait FeedbackSource {
    fn verdicts(&mut self, tasks: &[LabelTask]) -> Result<Vec<ResolvedVerdict>, FeedbackError>;
}

pub struct OracleSource {
    truth: GroundTruth,
}

impl OracleSource {
    pub fn new(truth: GroundTruth) -> Self {
        Self { truth }
    }

    pub fn from_file(path: &Path) -> Result<Self, FeedbackError> {
        let f = fs::File::open(path)
            .map_err(|e| FeedbackError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let truth = GroundTruth::parse_jsonl(std::io::BufReader::new(f))
            .map_err(|e| FeedbackError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Ok(Self { truth })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }
}

impl FeedbackSource for OracleSource {
    fn verdicts(&mut self, tasks: &[LabelTask]) -> Result<Vec<ResolvedVerdict>, FeedbackError> {
        Ok(oracle_verdicts(tasks, &self.truth)
            .into_iter()
            .zip(tasks)
            .map(|(v, t)| ResolvedVerdict { task_id: v.task_id, doc_id: t.doc_id.clone(), answer: v.answer })
            .collect())
    }
}

#[derive(Debug, Deserialize)]
struct ScriptLine {
    doc_id: String,
    answer: Answer,
}

/// Replays recorded answers keyed by document id; documents without a
/// recorded answer get Unknown.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    answers: BTreeMap<String, Answer>,
}

impl ScriptedSource {
    pub fn new(answers: BTreeMap<String, Answer>) -> Self {
        Self { answers }
    }

    /// JSON lines of `{"doc_id": ..., "answer": "relevant" | "irrelevant" | "unknown"}`.
    pub fn parse_jsonl(reader: impl BufRead) -> Result<Self, FeedbackError> {
        let mut answers = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| FeedbackError::Malformed { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let s: ScriptLine = serde_json::from_str(&line)
                .map_err(|e| FeedbackError::Malformed { line: i + 1, message: e.to_string() })?;
            answers.insert(s.doc_id, s.answer);
        }
        Ok(Self { answers })
    }
}

impl FeedbackSource for ScriptedSource {
    fn verdicts(&mut self, tasks: &[LabelTask]) -> Result<Vec<ResolvedVerdict>, FeedbackError> {
        Ok(tasks
            .iter()
            .map(|t| ResolvedVerdict {
                task_id: t.task_id.clone(),
                doc_id: t.doc_id.clone(),
                answer: self.answers.get(&t.doc_id).copied().unwrap_or(Answer::Unknown),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Stored,
    /// The (task, worker) pair already had a verdict; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collected {
    pub resolved: Vec<ResolvedVerdict>,
    pub pending: Vec<String>,
}

/// Persistent labeling queue. The first verdict of a worker on a task wins.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaskQueue {
    quorum: usize,
    tasks: BTreeMap<String, LabelTask>,
    verdicts: BTreeMap<String, BTreeMap<String, Verdict>>,
    #[serde(skip)]
    path: Option<PathBuf>,
}

impl TaskQueue {
    pub fn new(quorum: usize) -> Result<Self, FeedbackError> {
        if quorum == 0 {
            return Err(FeedbackError::ZeroQuorum);
        }
        Ok(Self { quorum, ..Default::default() })
    }

    /// Opens the queue stored at `path`, or an empty one if the file does
    /// not exist yet. Every mutation is written back.
    pub fn open(path: &Path, quorum: usize) -> Result<Self, FeedbackError> {
        let mut q = if path.exists() {
            let text = fs::read_to_string(path)
                .map_err(|e| FeedbackError::Io { path: path.display().to_string(), message: e.to_string() })?;
            serde_json::from_str(&text)
                .map_err(|e| FeedbackError::Io { path: path.display().to_string(), message: e.to_string() })?
        } else {
            Self::new(quorum)?
        };
        q.path = Some(path.to_path_buf());
        Ok(q)
    }

    fn persist(&self) -> Result<(), FeedbackError> {
        let Some(path) = &self.path else { return Ok(()) };
        let text = serde_json::to_string_pretty(self).expect("queue serializes");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| FeedbackError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn enqueue(&mut self, tasks: &[LabelTask]) -> Result<(), FeedbackError> {
        let mut seen = BTreeSet::new();
        for t in tasks {
            if self.tasks.contains_key(&t.task_id) || !seen.insert(&t.task_id) {
                return Err(FeedbackError::DuplicateTask(t.task_id.clone()));
            }
        }
        for t in tasks {
            self.tasks.insert(t.task_id.clone(), t.clone());
        }
        self.persist()
    }

    pub fn task(&self, id: &str) -> Option<&LabelTask> {
        self.tasks.get(id)
    }

    pub fn tasks(&self, round: Option<u32>) -> Vec<&LabelTask> {
        self.tasks.values().filter(|t| round.is_none_or(|r| t.round == r)).collect()
    }

    pub fn has_verdict(&self, task_id: &str, worker_id: &str) -> bool {
        self.verdicts.get(task_id).is_some_and(|m| m.contains_key(worker_id))
    }

    pub fn submit(&mut self, verdict: Verdict) -> Result<SubmitOutcome, FeedbackError> {
        if !self.tasks.contains_key(&verdict.task_id) {
            return Err(FeedbackError::UnknownTask(verdict.task_id));
        }
        let slot = self.verdicts.entry(verdict.task_id.clone()).or_default();
        if slot.contains_key(&verdict.worker_id) {
            return Ok(SubmitOutcome::Duplicate);
        }
        slot.insert(verdict.worker_id.clone(), verdict);
        self.persist()?;
        Ok(SubmitOutcome::Stored)
    }

    /// Snapshot of one round: tasks with a settled answer and those still
    /// waiting for verdicts.
    pub fn collect(&self, round: u32) -> Collected {
        let mut out = Collected::default();
        for t in self.tasks.values().filter(|t| t.round == round) {
            let answers: Vec<Answer> =
                self.verdicts.get(&t.task_id).map(|m| m.values().map(|v| v.answer).collect()).unwrap_or_default();
            match resolve(&answers, self.quorum) {
                Some(answer) => {
                    out.resolved.push(ResolvedVerdict { task_id: t.task_id.clone(), doc_id: t.doc_id.clone(), answer })
                }
                None => out.pending.push(t.task_id.clone()),
            }
        }
        out
    }

    pub fn verdict_count(&self) -> usize {
        self.verdicts.values().map(BTreeMap::len).sum()
    }
}
