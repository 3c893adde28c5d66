//! Features, rule trees and paths.
//!
//! A rule is a forest of feature nodes (normally a single root). Every
//! root-to-leaf sequence is a path and is read as a conjunction; the rule
//! matches a document when any path does.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::knowledge::SummaryKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("function `{function}` does not accept operator `{operator}`")]
    Incompatible { function: Function, operator: Operator },
    #[error("feature argument is empty")]
    EmptyArgument,
    #[error("tag label is empty")]
    EmptyTag,
    #[error("children cap must be positive")]
    ZeroCap,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {node} already has {cap} children")]
    ChildCap { node: NodeId, cap: usize },
    #[error("too many roots: at most {cap}")]
    RootCap { cap: usize },
    #[error("duplicate sibling feature {0}")]
    DuplicateSibling(String),
    #[error("path {0} has no non-negated feature")]
    AllNegative(PathId),
    #[error("feature {feature} repeats or contradicts itself on path {path}")]
    RepeatedOnPath { path: PathId, feature: String },
    #[error("rule has no features")]
    Empty,
}

/// Extractor kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    Keyword,
    Hashtag,
    Topic,
    Category,
    EntityPerson,
    EntityOrg,
    EntityLocation,
}

impl Function {
    pub const ALL: [Function; 7] = [
        Function::Keyword,
        Function::Hashtag,
        Function::Topic,
        Function::Category,
        Function::EntityPerson,
        Function::EntityOrg,
        Function::EntityLocation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Function::Keyword => "keyword",
            Function::Hashtag => "hashtag",
            Function::Topic => "topic",
            Function::Category => "category",
            Function::EntityPerson => "entity_person",
            Function::EntityOrg => "entity_org",
            Function::EntityLocation => "entity_location",
        }
    }

    pub fn accepts(self, op: Operator) -> bool {
        match self {
            Function::Keyword | Function::Hashtag => matches!(op, Operator::Contains | Operator::Exact),
            _ => op == Operator::InGroup,
        }
    }

    /// Concept namespace searched by `in_group` arguments of this function.
    pub fn group_kind(self) -> Option<SummaryKind> {
        match self {
            Function::Topic => Some(SummaryKind::Topic),
            Function::Category => Some(SummaryKind::Category),
            Function::EntityPerson => Some(SummaryKind::Person),
            Function::EntityOrg => Some(SummaryKind::Organization),
            Function::EntityLocation => Some(SummaryKind::Location),
            Function::Keyword | Function::Hashtag => None,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Function {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Function::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| s.to_string())
    }
}

/// Predicate kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Contains,
    Exact,
    InGroup,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Contains => "contains",
            Operator::Exact => "exact",
            Operator::InGroup => "in_group",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `⟨dataset.function.operator⟩(argument)`, optionally negated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub dataset: String,
    pub function: Function,
    pub operator: Operator,
    pub argument: String,
    #[serde(default)]
    pub negated: bool,
}

impl Feature {
    pub fn new(
        dataset: impl Into<String>,
        function: Function,
        operator: Operator,
        argument: impl Into<String>,
    ) -> Result<Self, RuleError> {
        let argument = argument.into();
        if !function.accepts(operator) {
            return Err(RuleError::Incompatible { function, operator });
        }
        if argument.trim().is_empty() {
            return Err(RuleError::EmptyArgument);
        }
        Ok(Self { dataset: dataset.into(), function, operator, argument, negated: false })
    }

    pub fn keyword(argument: impl Into<String>) -> Self {
        Self::new("Tweet", Function::Keyword, Operator::Contains, argument).expect("keyword argument must be non-empty")
    }

    pub fn topic(argument: impl Into<String>) -> Self {
        Self::new("Tweet", Function::Topic, Operator::InGroup, argument).expect("topic argument must be non-empty")
    }

    pub fn negate(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    pub fn positive(&self) -> Feature {
        Feature { negated: false, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if !self.function.accepts(self.operator) {
            return Err(RuleError::Incompatible { function: self.function, operator: self.operator });
        }
        if self.argument.trim().is_empty() {
            return Err(RuleError::EmptyArgument);
        }
        Ok(())
    }
}

impl fmt::Display for Feature {
    /// Canonical DSL form, e.g. `Tweet.Keyword.Contains('mental')`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("NOT ")?;
        }
        let (func, op) = match (self.function, self.operator) {
            (Function::Keyword, Operator::Contains) => ("Keyword", "Contains"),
            (Function::Keyword, _) => ("Keyword", "Exact"),
            (Function::Hashtag, Operator::Contains) => ("Hashtag", "Contains"),
            (Function::Hashtag, _) => ("Hashtag", "Exact"),
            (Function::Topic, _) => ("Topic", "InGroup"),
            (Function::Category, _) => ("Category", "InGroup"),
            (Function::EntityPerson, _) => ("Entity", "Person"),
            (Function::EntityOrg, _) => ("Entity", "Organization"),
            (Function::EntityLocation, _) => ("Entity", "Location"),
        };
        let mut arg = String::with_capacity(self.argument.len());
        for c in self.argument.chars() {
            if c == '\'' || c == '\\' {
                arg.push('\\');
            }
            arg.push(c);
        }
        write!(f, "{}.{}.{}('{}')", self.dataset, func, op, arg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tag(String);

impl Tag {
    pub fn new(label: impl Into<String>) -> Result<Self, RuleError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(RuleError::EmptyTag);
        }
        Ok(Self(label.trim().to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A path is identified by its leaf node, so the id is stable for as long as
/// that leaf stays a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathId(pub u32);

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub feature: Feature,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub id: PathId,
    pub nodes: Vec<NodeId>,
    pub features: Vec<Feature>,
}

impl Path {
    pub fn leaf(&self) -> NodeId {
        *self.nodes.last().expect("paths are non-empty")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.features.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" AND "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTree {
    pub rule_id: String,
    pub tag: Tag,
    pub children_cap: usize,
    roots: Vec<NodeId>,
    nodes: BTreeMap<NodeId, Node>,
    next_id: u32,
}

impl RuleTree {
    pub fn new(rule_id: impl Into<String>, tag: Tag, children_cap: usize) -> Result<Self, RuleError> {
        if children_cap == 0 {
            return Err(RuleError::ZeroCap);
        }
        Ok(Self { rule_id: rule_id.into(), tag, children_cap, roots: Vec::new(), nodes: BTreeMap::new(), next_id: 0 })
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.nodes.get(&id).map_or(&[], |n| n.children.as_slice())
    }

    /// Nodes sharing `id`'s parent (or the other roots), excluding `id`.
    pub fn siblings(&self, id: NodeId) -> Vec<NodeId> {
        let level = match self.nodes.get(&id).and_then(|n| n.parent) {
            Some(p) => self.children(p),
            None => &self.roots,
        };
        level.iter().copied().filter(|&n| n != id).collect()
    }

    pub fn is_root(&self, id: NodeId) -> bool {
        self.roots.contains(&id)
    }

    pub fn depth(&self) -> usize {
        self.paths().iter().map(|p| p.nodes.len()).max().unwrap_or(0)
    }

    fn level(&self, parent: Option<NodeId>) -> Result<&[NodeId], RuleError> {
        match parent {
            Some(p) => Ok(&self.nodes.get(&p).ok_or(RuleError::UnknownNode(p))?.children),
            None => Ok(&self.roots),
        }
    }

    fn check_insert(&self, parent: Option<NodeId>, feature: &Feature) -> Result<(), RuleError> {
        feature.validate()?;
        let level = self.level(parent)?;
        if level.len() >= self.children_cap {
            return Err(match parent {
                Some(node) => RuleError::ChildCap { node, cap: self.children_cap },
                None => RuleError::RootCap { cap: self.children_cap },
            });
        }
        if level.iter().any(|n| self.nodes[n].feature == *feature) {
            return Err(RuleError::DuplicateSibling(feature.to_string()));
        }
        Ok(())
    }

    fn alloc(&mut self, parent: Option<NodeId>, feature: Feature) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(id, Node { id, feature, parent, children: Vec::new() });
        id
    }

    pub fn add_root(&mut self, feature: Feature) -> Result<NodeId, RuleError> {
        self.check_insert(None, &feature)?;
        let id = self.alloc(None, feature);
        self.roots.push(id);
        Ok(id)
    }

    pub fn add_child(&mut self, parent: NodeId, feature: Feature) -> Result<NodeId, RuleError> {
        self.check_insert(Some(parent), &feature)?;
        let id = self.alloc(Some(parent), feature);
        self.nodes.get_mut(&parent).expect("checked").children.push(id);
        Ok(id)
    }

    /// Removes `id` and its whole subtree.
    pub fn remove_subtree(&mut self, id: NodeId) -> Result<Feature, RuleError> {
        let node = self.nodes.get(&id).ok_or(RuleError::UnknownNode(id))?;
        let parent = node.parent;
        match parent {
            Some(p) => self.nodes.get_mut(&p).expect("parent exists").children.retain(|&c| c != id),
            None => self.roots.retain(|&r| r != id),
        }
        let mut stack = vec![id];
        let mut removed = None;
        while let Some(n) = stack.pop() {
            let node = self.nodes.remove(&n).expect("subtree nodes exist");
            stack.extend(node.children.iter().copied());
            if n == id {
                removed = Some(node.feature);
            }
        }
        Ok(removed.expect("removed root of subtree"))
    }

    /// Swaps `id` (with its subtree) for a fresh leaf carrying `feature`, at
    /// the same position among its siblings.
    pub fn replace(&mut self, id: NodeId, feature: Feature) -> Result<NodeId, RuleError> {
        let node = self.nodes.get(&id).ok_or(RuleError::UnknownNode(id))?;
        let parent = node.parent;
        feature.validate()?;
        let level = self.level(parent)?;
        if level.iter().any(|n| *n != id && self.nodes[n].feature == feature) {
            return Err(RuleError::DuplicateSibling(feature.to_string()));
        }
        let pos = level.iter().position(|&n| n == id).expect("node is on its level");
        self.remove_subtree(id)?;
        let new = self.alloc(parent, feature);
        match parent {
            Some(p) => self.nodes.get_mut(&p).expect("parent exists").children.insert(pos, new),
            None => self.roots.insert(pos, new),
        }
        Ok(new)
    }

    /// Root-to-leaf paths, depth first in sibling insertion order.
    pub fn paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut trail = Vec::new();
        for &r in &self.roots {
            self.collect_paths(r, &mut trail, &mut out);
        }
        out
    }

    fn collect_paths(&self, id: NodeId, trail: &mut Vec<NodeId>, out: &mut Vec<Path>) {
        trail.push(id);
        let node = &self.nodes[&id];
        if node.children.is_empty() {
            out.push(Path {
                id: PathId(id.0),
                nodes: trail.clone(),
                features: trail.iter().map(|n| self.nodes[n].feature.clone()).collect(),
            });
        } else {
            for &c in &node.children {
                self.collect_paths(c, trail, out);
            }
        }
        trail.pop();
    }

    pub fn path(&self, id: PathId) -> Option<Path> {
        self.paths().into_iter().find(|p| p.id == id)
    }

    /// Nodes on the way from a root to `id`, inclusive.
    pub fn ancestry(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            out.push(n);
            cur = self.nodes.get(&n).and_then(|x| x.parent);
        }
        out.reverse();
        out
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), RuleError> {
        if self.children_cap == 0 {
            return Err(RuleError::ZeroCap);
        }
        if self.roots.is_empty() {
            return Err(RuleError::Empty);
        }
        if self.roots.len() > self.children_cap {
            return Err(RuleError::RootCap { cap: self.children_cap });
        }
        let mut levels: Vec<&[NodeId]> = vec![&self.roots];
        for node in self.nodes.values() {
            node.feature.validate()?;
            if node.children.len() > self.children_cap {
                return Err(RuleError::ChildCap { node: node.id, cap: self.children_cap });
            }
            levels.push(&node.children);
        }
        for level in levels {
            for (i, a) in level.iter().enumerate() {
                if level[..i].iter().any(|b| self.nodes[b].feature == self.nodes[a].feature) {
                    return Err(RuleError::DuplicateSibling(self.nodes[a].feature.to_string()));
                }
            }
        }
        for path in self.paths() {
            if path.features.iter().all(|f| f.negated) {
                return Err(RuleError::AllNegative(path.id));
            }
            for (i, f) in path.features.iter().enumerate() {
                if path.features[..i].iter().any(|g| g.positive() == f.positive()) {
                    return Err(RuleError::RepeatedOnPath { path: path.id, feature: f.to_string() });
                }
            }
        }
        Ok(())
    }

    /// Evaluates the rule under an assignment of base (un-negated)
    /// predicate values.
    pub fn eval_with(&self, mut truth: impl FnMut(&Feature) -> bool) -> bool {
        self.paths().iter().any(|p| p.features.iter().all(|f| truth(f) != f.negated))
    }

    /// Builds a tree from path feature sequences, sharing common prefixes.
    pub fn from_paths(
        rule_id: impl Into<String>,
        tag: Tag,
        children_cap: usize,
        paths: &[Vec<Feature>],
    ) -> Result<Self, RuleError> {
        let mut tree = Self::new(rule_id, tag, children_cap)?;
        for seq in paths {
            let mut parent: Option<NodeId> = None;
            for f in seq {
                let level = tree.level(parent)?;
                let existing = level.iter().copied().find(|n| tree.nodes[n].feature == *f);
                parent = Some(match existing {
                    Some(n) => n,
                    None => match parent {
                        Some(p) => tree.add_child(p, f.clone())?,
                        None => tree.add_root(f.clone())?,
                    },
                });
            }
        }
        tree.validate()?;
        Ok(tree)
    }
}
