use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::candidates::CandidateSet;
use super::config::AdaptConfig;
use crate::bandit::{top_k, Answer, Counts, ThetaEstimate};
use crate::eval::AnnotationBatch;
use crate::feedback::ResolvedVerdict;
use crate::rule::{Feature, NodeId, PathId, RuleTree};

/// relevant / (relevant + irrelevant); absent without verified items.
pub fn path_precision(c: Counts) -> Option<f64> {
    (c.total() > 0).then(|| c.r as f64 / c.total() as f64)
}

/// Verified counts per matched path. Unknown answers count nowhere.
pub fn path_verdicts(batch: &AnnotationBatch, verdicts: &[ResolvedVerdict]) -> BTreeMap<PathId, Counts> {
    let answers: BTreeMap<&str, Answer> = verdicts.iter().map(|v| (v.doc_id.as_str(), v.answer)).collect();
    let mut out: BTreeMap<PathId, Counts> = BTreeMap::new();
    for e in &batch.entries {
        let inc = match answers.get(e.doc_id.as_str()) {
            Some(Answer::Relevant) => Counts { r: 1, d: 0 },
            Some(Answer::Irrelevant) => Counts { r: 0, d: 1 },
            _ => continue,
        };
        for p in &e.paths {
            *out.entry(*p).or_default() += inc;
        }
    }
    out
}

/// Items annotated through each node: an item counts once for every node on
/// any of its matched paths.
pub fn node_counts(rule: &RuleTree, batch: &AnnotationBatch) -> BTreeMap<NodeId, usize> {
    let mut out: BTreeMap<NodeId, usize> = rule.nodes().map(|n| (n.id, 0)).collect();
    let mut through = BTreeSet::new();
    for e in &batch.entries {
        through.clear();
        for p in &e.paths {
            through.extend(rule.ancestry(NodeId(p.0)));
        }
        for n in &through {
            if let Some(c) = out.get_mut(n) {
                *c += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Swap out `node`, which annotates fewer items than its siblings do on
    /// average.
    Replace { path: PathId, node: NodeId },
    /// Append children under the leaf of `path`.
    Restrict { path: PathId, node: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Precise,
    Imprecise,
    /// Too little evidence to judge.
    Open,
}

pub fn path_status(c: Counts, config: &AdaptConfig) -> PathStatus {
    match path_precision(c) {
        Some(p) if p >= config.precision_threshold => PathStatus::Precise,
        Some(_) if c.total() >= config.min_path_evidence => PathStatus::Imprecise,
        _ => PathStatus::Open,
    }
}

/// For every imprecise path, the shallowest non-root feature that annotates
/// strictly fewer items than the mean over its sibling group (itself
/// included) and lies on no precise path is replaced. Otherwise the path is
/// restricted at its leaf. Replacements come first in the plan.
pub fn decide_actions(
    rule: &RuleTree,
    batch: &AnnotationBatch,
    path_counts: &BTreeMap<PathId, Counts>,
    config: &AdaptConfig,
) -> Vec<Action> {
    let paths = rule.paths();
    let status = |p: PathId| path_status(path_counts.get(&p).copied().unwrap_or_default(), config);
    let on_precise: BTreeSet<NodeId> =
        paths.iter().filter(|p| status(p.id) == PathStatus::Precise).flat_map(|p| p.nodes.iter().copied()).collect();
    let counts = node_counts(rule, batch);
    let mut replace = BTreeSet::new();
    let mut restrict = BTreeSet::new();
    for p in paths.iter().filter(|p| status(p.id) == PathStatus::Imprecise) {
        let weak = p.nodes.iter().copied().find(|&n| {
            if rule.is_root(n) || on_precise.contains(&n) {
                return false;
            }
            let group = rule.siblings(n);
            let total: usize = group.iter().map(|s| counts[s]).sum::<usize>() + counts[&n];
            let mean = total as f64 / (group.len() + 1) as f64;
            (counts[&n] as f64) < mean
        });
        match weak {
            Some(n) => replace.insert(Action::Replace { path: p.id, node: n }),
            None => restrict.insert(Action::Restrict { path: p.id, node: p.leaf() }),
        };
    }
    // one replacement per node
    let mut seen = BTreeSet::new();
    replace
        .into_iter()
        .filter(|a| matches!(a, Action::Replace { node, .. } if seen.insert(*node)))
        .chain(restrict)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    #[serde(flatten)]
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<String>,
    pub added: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptationLog {
    pub entries: Vec<LogEntry>,
    pub paths_before: Vec<String>,
    pub paths_after: Vec<String>,
}

impl AdaptationLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn path_strings(rule: &RuleTree) -> Vec<String> {
    rule.paths().iter().map(|p| format!("{}: {p}", p.id)).collect()
}

/// Applies a plan. Candidates are ranked by θ; a candidate is skipped when it
/// is already on the path or among the new node's siblings. A replace with
/// no usable candidate is skipped with a warning.
pub fn adapt_rule(
    rule: &RuleTree,
    plan: &[Action],
    theta: &ThetaEstimate,
    arms: &BTreeMap<String, Counts>,
    candidates: &CandidateSet,
    config: &AdaptConfig,
) -> (RuleTree, AdaptationLog) {
    let mut tree = rule.clone();
    let mut log = AdaptationLog { paths_before: path_strings(rule), ..Default::default() };
    let ranked: Vec<&Feature> =
        top_k(theta, arms, arms.len()).iter().filter_map(|k| candidates.get(k).map(|c| &c.feature)).collect();
    let blocked = |tree: &RuleTree, parent: Option<NodeId>, f: &Feature| {
        let on_path = parent.is_some_and(|p| {
            tree.ancestry(p).iter().any(|a| tree.node(*a).is_some_and(|n| n.feature.positive() == *f))
        });
        let level = match parent {
            Some(p) => tree.children(p).to_vec(),
            None => tree.roots().to_vec(),
        };
        on_path || level.iter().any(|n| tree.node(*n).is_some_and(|x| x.feature == *f))
    };
    for &action in plan {
        let mut entry = LogEntry { action, removed: None, added: Vec::new(), warning: None };
        match action {
            Action::Replace { node, .. } => {
                let Some(parent) = tree.node(node).map(|n| n.parent) else {
                    entry.warning = Some(format!("{node} no longer exists"));
                    log.entries.push(entry);
                    continue;
                };
                let old = tree.node(node).expect("checked").feature.clone();
                let pick = ranked.iter().find(|f| **f != &old && !blocked(&tree, parent, f));
                match pick {
                    Some(f) => {
                        let new = tree.replace(node, (*f).clone()).expect("candidate passes sibling checks");
                        entry.removed = Some(old.to_string());
                        entry.added.push(format!("{new}: {f}"));
                    }
                    None => entry.warning = Some("no candidate available for replacement".into()),
                }
            }
            Action::Restrict { node, .. } => {
                if tree.node(node).is_none() {
                    entry.warning = Some(format!("{node} no longer exists"));
                } else if tree.ancestry(node).len() >= config.max_depth {
                    entry.warning = Some(format!("{node} is at the depth limit"));
                } else {
                    let room = config.children_cap.min(tree.children_cap).saturating_sub(tree.children(node).len());
                    for f in &ranked {
                        if entry.added.len() >= room {
                            break;
                        }
                        if blocked(&tree, Some(node), f) {
                            continue;
                        }
                        let id = tree.add_child(node, (*f).clone()).expect("candidate passes cap and path checks");
                        entry.added.push(format!("{id}: {f}"));
                    }
                    if entry.added.is_empty() {
                        entry.warning = Some("no candidate available for restriction".into());
                    }
                }
            }
        }
        log.entries.push(entry);
    }
    debug_assert!(tree.validate().is_ok());
    log.paths_after = path_strings(&tree);
    (tree, log)
}
