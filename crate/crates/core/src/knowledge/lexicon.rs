use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::embedding::{add_into, cosine, EmbeddingTable, Vector};
use super::{EntityKind, KnowledgeError};
use crate::text::TextPipeline;

/// keyword → immediate hypernym descriptor. Keys are normalized tokens.
#[derive(Debug, Clone, Default)]
pub struct HypernymLexicon {
    map: HashMap<String, String>,
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl HypernymLexicon {
    pub fn parse(src: &str, source: &str, pipeline: &TextPipeline) -> Result<Self, KnowledgeError> {
        let mut lex = Self::default();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(key), Some(desc)) = (cols.next(), cols.next()) else {
                return Err(KnowledgeError::format(source, i + 1, "expected `keyword<TAB>hypernym`"));
            };
            let desc = desc.trim();
            if desc.is_empty() {
                return Err(KnowledgeError::format(source, i + 1, "empty hypernym"));
            }
            let Some(key) = pipeline.normalize_term(key.trim()) else {
                continue;
            };
            lex.insert(key, desc.to_string());
        }
        Ok(lex)
    }

    pub fn insert(&mut self, key: String, descriptor: String) {
        if self.map.contains_key(&key) {
            return;
        }
        self.groups.entry(descriptor.clone()).or_default().insert(key.clone());
        self.map.insert(key, descriptor);
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.map.get(token).map(String::as_str)
    }

    /// Every descriptor with all keywords that map to it.
    pub fn groups(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub surface: String,
    pub kind: EntityKind,
    pub descriptor: String,
}

/// Surface form → (kind, descriptor), with a longest-match mention finder.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_surface: HashMap<String, usize>,
    // first surface word → (entry words, entry index), longest first
    starts: HashMap<String, Vec<(Vec<String>, usize)>>,
}

/// A gazetteer entry found in a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub kind: EntityKind,
    pub surface: String,
}

impl Gazetteer {
    pub fn parse(src: &str, source: &str, pipeline: &TextPipeline) -> Result<Self, KnowledgeError> {
        let mut gaz = Self::default();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() < 3 {
                return Err(KnowledgeError::format(source, i + 1, "expected `surface<TAB>kind<TAB>descriptor`"));
            }
            let kind: EntityKind = cols[1]
                .parse()
                .map_err(|_| KnowledgeError::format(source, i + 1, &format!("unknown entity kind `{}`", cols[1])))?;
            if cols[0].is_empty() || cols[2].is_empty() {
                return Err(KnowledgeError::format(source, i + 1, "empty surface or descriptor"));
            }
            gaz.insert(
                GazetteerEntry { surface: cols[0].to_string(), kind, descriptor: cols[2].to_string() },
                pipeline,
            );
        }
        Ok(gaz)
    }

    pub fn insert(&mut self, entry: GazetteerEntry, pipeline: &TextPipeline) {
        let key = entry.surface.to_lowercase();
        if self.by_surface.contains_key(&key) {
            return;
        }
        let words = pipeline.surface_words(&entry.surface);
        let idx = self.entries.len();
        if let Some(first) = words.first() {
            let list = self.starts.entry(first.clone()).or_default();
            list.push((words, idx));
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        self.by_surface.insert(key, idx);
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, surface: &str) -> Option<&GazetteerEntry> {
        self.by_surface.get(&surface.trim().to_lowercase()).map(|&i| &self.entries[i])
    }

    /// Non-overlapping, leftmost-longest gazetteer mentions in `text`.
    pub fn find_mentions(&self, text: &str, pipeline: &TextPipeline) -> Vec<EntityMention> {
        let words = pipeline.surface_words(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let hit = self.starts.get(&words[i]).and_then(|cands| {
                cands.iter().find(|(w, _)| words.len() - i >= w.len() && words[i..i + w.len()] == w[..])
            });
            match hit {
                Some((w, idx)) => {
                    let e = &self.entries[*idx];
                    out.push(EntityMention { kind: e.kind, surface: e.surface.clone() });
                    i += w.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CategorySpec {
    name: String,
    #[serde(default)]
    seeds: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Category {
    pub name: String,
    pub seeds: BTreeSet<String>,
    pub centroid: Option<Vector>,
}

/// Named categories with seed terms; centroids are the mean seed embedding.
#[derive(Debug, Clone, Default)]
pub struct CategoryModel {
    categories: Vec<Category>,
    seed_index: HashMap<String, usize>,
}

impl CategoryModel {
    pub fn parse(
        src: &str,
        source: &str,
        pipeline: &TextPipeline,
        embeddings: Option<&EmbeddingTable>,
    ) -> Result<Self, KnowledgeError> {
        let specs: Vec<CategorySpec> =
            serde_json::from_str(src).map_err(|e| KnowledgeError::format(source, e.line(), &e.to_string()))?;
        let mut sorted: Vec<CategorySpec> = specs;
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut model = Self::default();
        for spec in sorted {
            if spec.name.trim().is_empty() {
                return Err(KnowledgeError::format(source, 0, "category with empty name"));
            }
            if model.categories.iter().any(|c| c.name == spec.name) {
                return Err(KnowledgeError::format(source, 0, &format!("duplicate category `{}`", spec.name)));
            }
            let seeds: BTreeSet<String> = spec.seeds.iter().filter_map(|s| pipeline.normalize_term(s)).collect();
            let centroid = embeddings.and_then(|table| {
                let mut acc = vec![0.0; table.dim()];
                let mut n = 0usize;
                for s in &seeds {
                    if let Some(v) = table.get(s) {
                        add_into(&mut acc, v);
                        n += 1;
                    }
                }
                (n > 0).then(|| acc.into_iter().map(|x| x / n as f64).collect())
            });
            let idx = model.categories.len();
            for s in &seeds {
                model.seed_index.entry(s.clone()).or_insert(idx);
            }
            model.categories.push(Category { name: spec.name, seeds, centroid });
        }
        Ok(model)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Seed terms map to their own category. Other tokens take the category
    /// whose centroid has the highest cosine with the token's vector; ties go
    /// to the lexicographically smallest name (categories are kept sorted).
    pub fn assign(&self, token: &str, embeddings: Option<&EmbeddingTable>) -> Option<&str> {
        if let Some(&i) = self.seed_index.get(token) {
            return Some(&self.categories[i].name);
        }
        let v = embeddings?.get(token)?;
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in self.categories.iter().enumerate() {
            let Some(centroid) = &c.centroid else { continue };
            let s = cosine(v, centroid);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, i));
            }
        }
        best.map(|(_, i)| self.categories[i].name.as_str())
    }
}
