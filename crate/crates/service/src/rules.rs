//! Rules hosted by the service and the rounds run on them.
//!
//! Each rule owns a directory:
//!
//! ```text
//! rule.json  state.json  queue.json  events.jsonl  pending.json  reports/round-NNN.json
//! ```
//!
//! At most one round is in flight per rule. An oracle round runs to
//! completion in the background; a human round stays open until every one of
//! its labeling tasks has a resolved verdict.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use curation_core::adapt::{AdaptConfig, PendingRound, RoundReport, RuleState};
use curation_core::feedback::{
    oracle_verdicts, Collected, LabelTask, ResolvedVerdict, SubmitOutcome, TaskQueue, Verdict,
};
use curation_core::lang::render;
use curation_core::rule::{PathId, RuleTree};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::store::{io_err, write_json, Data};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Oracle,
    Human,
}

impl std::str::FromStr for FeedbackMode {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, ApiError> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "human" => Ok(Self::Human),
            _ => Err(ApiError::bad_request("bad_feedback", format!("feedback must be `oracle` or `human`, not `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    RoundStarted { feedback: FeedbackMode },
    SampleIssued { annotated: usize, tasks: usize },
    Verdicts { received: usize, expected: usize },
    Adapted { actions: usize, paths_before: usize, paths_after: usize },
    ReportReady { estimated_precision: Option<f64> },
    RoundFailed { code: String, message: String },
}

impl EventKind {
    fn ends_round(&self) -> bool {
        matches!(self, Self::ReportReady { .. } | Self::RoundFailed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub round: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// How the rule was created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMeta {
    pub id: String,
    pub source: String,
    pub config: AdaptConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathView {
    pub id: PathId,
    pub features: String,
}

pub fn path_views(rule: &RuleTree) -> Vec<PathView> {
    rule.paths().iter().map(|p| PathView { id: p.id, features: p.to_string() }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InFlight {
    pub round: u32,
    pub feedback: FeedbackMode,
    pub tasks: usize,
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleView {
    pub id: String,
    pub tag: String,
    pub rule: String,
    pub paths: Vec<PathView>,
    /// Last completed round.
    pub round: u32,
    pub stabilized_paths: Vec<PathId>,
    pub in_flight: Option<InFlight>,
    pub config: AdaptConfig,
}

pub(crate) struct Inner {
    pub state: RuleState,
    pub queue: TaskQueue,
    /// Set while a round is in flight.
    pub running: Option<(u32, FeedbackMode)>,
    /// The open human round.
    pub pending: Option<PendingRound>,
    pub events: Vec<Event>,
    pub reports: Vec<RoundReport>,
}

pub struct RuleSlot {
    pub meta: RuleMeta,
    dir: PathBuf,
    inner: Mutex<Inner>,
}

const META_FILE: &str = "rule.json";
const STATE_FILE: &str = "state.json";
const QUEUE_FILE: &str = "queue.json";
const EVENTS_FILE: &str = "events.jsonl";
const PENDING_FILE: &str = "pending.json";
const REPORTS_DIR: &str = "reports";

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ApiError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn report_file(round: u32) -> String {
    format!("round-{round:03}.json")
}

impl RuleSlot {
    pub fn create(dir: PathBuf, meta: RuleMeta, rule: RuleTree) -> Result<Self, ApiError> {
        let state = RuleState::new(rule, &meta.config);
        write_json(&dir.join(META_FILE), &meta)?;
        write_json(&dir.join(STATE_FILE), &state)?;
        let queue = TaskQueue::open(&dir.join(QUEUE_FILE), 1)?;
        Ok(Self {
            meta,
            dir,
            inner: Mutex::new(Inner {
                state,
                queue,
                running: None,
                pending: None,
                events: Vec::new(),
                reports: Vec::new(),
            }),
        })
    }

    pub fn load(dir: PathBuf) -> Result<Self, ApiError> {
        let meta: RuleMeta = read_json(&dir.join(META_FILE))?;
        let state: RuleState = read_json(&dir.join(STATE_FILE))?;
        let queue = TaskQueue::open(&dir.join(QUEUE_FILE), 1)?;
        let mut events: Vec<Event> = Vec::new();
        if let Ok(text) = fs::read_to_string(dir.join(EVENTS_FILE)) {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                // a torn last line from a crash is dropped
                if let Ok(e) = serde_json::from_str(line) {
                    events.push(e);
                }
            }
        }
        let mut reports = Vec::new();
        for round in 1..=state.round {
            let p = dir.join(REPORTS_DIR).join(report_file(round));
            reports.push(read_json(&p)?);
        }
        let pending: Option<PendingRound> = match dir.join(PENDING_FILE) {
            p if p.is_file() => Some(read_json(&p)?),
            _ => None,
        };
        let pending = pending.filter(|p| p.round == state.round + 1);
        let running = pending.as_ref().map(|p| (p.round, FeedbackMode::Human));
        let slot = Self { meta, dir, inner: Mutex::new(Inner { state, queue, running, pending, events, reports }) };
        {
            let mut g = slot.lock();
            // a round cut short by a restart is closed in the event log
            let open = g.events.last().filter(|e| !e.kind.ends_round()).map(|e| e.round);
            if let Some(round) = open {
                if g.running.is_none() {
                    let kind = EventKind::RoundFailed {
                        code: "interrupted".into(),
                        message: "the service stopped before the round finished".into(),
                    };
                    slot.emit(&mut g, round, kind);
                }
            }
        }
        Ok(slot)
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub(crate) fn emit(&self, g: &mut Inner, round: u32, kind: EventKind) {
        let event = Event { index: g.events.len(), round, kind };
        let path = self.dir.join(EVENTS_FILE);
        let line = serde_json::to_string(&event).expect("events serialize");
        let written =
            fs::OpenOptions::new().create(true).append(true).open(&path).and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            eprintln!("warning: cannot append to {}: {e}", path.display());
        }
        g.events.push(event);
    }

    pub fn view(&self) -> RuleView {
        let g = self.lock();
        let in_flight = g.running.map(|(round, feedback)| {
            let c = g.queue.collect(round);
            InFlight { round, feedback, tasks: c.resolved.len() + c.pending.len(), resolved: c.resolved.len() }
        });
        RuleView {
            id: self.meta.id.clone(),
            tag: g.state.rule.tag.to_string(),
            rule: render(&g.state.rule),
            paths: path_views(&g.state.rule),
            round: g.state.round,
            stabilized_paths: g.state.stability.stabilized().iter().copied().collect(),
            in_flight,
            config: self.meta.config.clone(),
        }
    }

    pub fn reports(&self) -> Vec<RoundReport> {
        self.lock().reports.clone()
    }

    /// Events from `from` on, and whether the stream has ended (no round in
    /// flight).
    pub fn events(&self, from: usize) -> (Vec<Event>, bool) {
        let g = self.lock();
        let tail = g.events.get(from..).map(<[Event]>::to_vec).unwrap_or_default();
        (tail, g.running.is_none())
    }

    pub(crate) fn tasks(&self) -> (Vec<LabelTask>, Vec<String>) {
        let g = self.lock();
        let tasks: Vec<LabelTask> = g.queue.tasks(None).into_iter().cloned().collect();
        let mut resolved = Vec::new();
        let rounds: BTreeSet<u32> = tasks.iter().map(|t| t.round).collect();
        for r in rounds {
            resolved.extend(g.queue.collect(r).resolved.into_iter().map(|v| v.task_id));
        }
        (tasks, resolved)
    }

    /// Claims the next round. Fails while another round is in flight or when
    /// `expect` names a round other than the next one.
    pub fn start_round(&self, mode: FeedbackMode, expect: Option<u32>) -> Result<u32, ApiError> {
        let mut g = self.lock();
        if let Some((round, _)) = g.running {
            return Err(ApiError::conflict(
                "round_in_progress",
                format!("round {round} of rule `{}` is still in flight", self.meta.id),
            ));
        }
        let next = g.state.round + 1;
        if let Some(e) = expect.filter(|&e| e != next) {
            return Err(ApiError::conflict("stale_round", format!("the next round is {next}, not {e}")));
        }
        g.running = Some((next, mode));
        self.emit(&mut g, next, EventKind::RoundStarted { feedback: mode });
        Ok(next)
    }

    /// Records a failure of the in-flight round and releases it.
    pub fn fail_round(&self, round: u32, err: &ApiError) {
        let mut g = self.lock();
        if g.running.map(|(r, _)| r) != Some(round) {
            return;
        }
        g.running = None;
        g.pending = None;
        let _ = fs::remove_file(self.dir.join(PENDING_FILE));
        let kind = EventKind::RoundFailed { code: err.code.to_string(), message: err.message.clone() };
        self.emit(&mut g, round, kind);
    }

    fn sample(&self, data: &Data) -> Result<PendingRound, ApiError> {
        let state = self.lock().state.clone();
        let pending = state.begin_round(&data.env(&self.meta.config))?;
        let mut g = self.lock();
        let fresh: Vec<LabelTask> =
            pending.tasks.iter().filter(|t| g.queue.task(&t.task_id).is_none()).cloned().collect();
        g.queue.enqueue(&fresh)?;
        let kind = EventKind::SampleIssued { annotated: pending.batch.len(), tasks: pending.tasks.len() };
        self.emit(&mut g, pending.round, kind);
        Ok(pending)
    }

    fn progress(&self, g: &mut Inner, round: u32) -> Collected {
        let c = g.queue.collect(round);
        let kind = EventKind::Verdicts { received: c.resolved.len(), expected: c.resolved.len() + c.pending.len() };
        self.emit(g, round, kind);
        c
    }

    /// Runs a claimed round against the workspace labels.
    pub fn run_oracle(&self, data: &Data, round: u32) -> Result<RoundReport, ApiError> {
        let truth = data
            .truth
            .as_ref()
            .ok_or_else(|| ApiError::bad_request("labels_missing", "oracle feedback needs labels in the workspace"))?;
        let pending = self.sample(data)?;
        debug_assert_eq!(pending.round, round);
        let resolved = {
            let mut g = self.lock();
            for v in oracle_verdicts(&pending.tasks, truth) {
                g.queue.submit(v)?;
            }
            self.progress(&mut g, round).resolved
        };
        self.finish(data, &pending, &resolved)
    }

    /// Samples a claimed round and leaves it open for human verdicts. A round
    /// with nothing to label completes at once.
    pub fn open_human(&self, data: &Data, round: u32) -> Result<Option<RoundReport>, ApiError> {
        let pending = self.sample(data)?;
        debug_assert_eq!(pending.round, round);
        if pending.tasks.is_empty() {
            return self.finish(data, &pending, &[]).map(Some);
        }
        write_json(&self.dir.join(PENDING_FILE), &pending)?;
        let mut g = self.lock();
        self.progress(&mut g, round);
        g.pending = Some(pending);
        Ok(None)
    }

    /// Whether `verdict` would be a repeat of a stored one.
    pub(crate) fn check_verdict(&self, verdict: &Verdict) -> Result<bool, ApiError> {
        let g = self.lock();
        let task = g
            .queue
            .task(&verdict.task_id)
            .ok_or_else(|| ApiError::not_found("unknown_task", format!("unknown task `{}`", verdict.task_id)))?;
        if g.queue.has_verdict(&verdict.task_id, &verdict.worker_id) {
            return Ok(true);
        }
        let open = g.pending.as_ref().map(|p| p.round);
        if open != Some(task.round) {
            return Err(ApiError::conflict(
                "round_closed",
                format!("task `{}` belongs to round {}, which is not open for verdicts", verdict.task_id, task.round),
            ));
        }
        Ok(false)
    }

    /// Stores checked verdicts. When they complete the open round, the round
    /// is finished and its report returned.
    pub(crate) fn submit(
        &self,
        data: &Data,
        verdicts: Vec<Verdict>,
    ) -> Result<(Vec<SubmitOutcome>, Option<RoundReport>), ApiError> {
        let mut g = self.lock();
        let mut outcomes = Vec::with_capacity(verdicts.len());
        let mut stored = false;
        for v in verdicts {
            let o = g.queue.submit(v)?;
            stored |= o == SubmitOutcome::Stored;
            outcomes.push(o);
        }
        let Some(round) = g.pending.as_ref().map(|p| p.round) else {
            return Ok((outcomes, None));
        };
        if !stored {
            return Ok((outcomes, None));
        }
        let c = self.progress(&mut g, round);
        if !c.pending.is_empty() {
            return Ok((outcomes, None));
        }
        let pending = g.pending.take().expect("open round");
        drop(g);
        match self.finish(data, &pending, &c.resolved) {
            Ok(report) => Ok((outcomes, Some(report))),
            Err(e) => {
                self.fail_round(round, &e);
                Err(e)
            }
        }
    }

    fn finish(
        &self,
        data: &Data,
        pending: &PendingRound,
        resolved: &[ResolvedVerdict],
    ) -> Result<RoundReport, ApiError> {
        let mut state = self.lock().state.clone();
        let report = state.complete_round(&data.env(&self.meta.config), pending, resolved)?;
        write_json(&self.dir.join(REPORTS_DIR).join(report_file(report.round)), &report)?;
        write_json(&self.dir.join(STATE_FILE), &state)?;
        let _ = fs::remove_file(self.dir.join(PENDING_FILE));
        let mut g = self.lock();
        g.state = state;
        g.reports.push(report.clone());
        g.pending = None;
        g.running = None;
        let log = &report.actions;
        let adapted = EventKind::Adapted {
            actions: log.entries.len(),
            paths_before: log.paths_before.len(),
            paths_after: log.paths_after.len(),
        };
        self.emit(&mut g, report.round, adapted);
        let ready = EventKind::ReportReady { estimated_precision: report.estimated_precision };
        self.emit(&mut g, report.round, ready);
        Ok(report)
    }
}
