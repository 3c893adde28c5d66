use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::candidates::CandidateSet;
use crate::corpus::Corpus;
use crate::eval::AnnotationBatch;
use crate::rule::PathId;

/// Stratum of items whose tokens carry no candidate.
pub const NO_STRATUM: &str = "_none";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledItem {
    pub doc_id: String,
    pub stratum: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub round: u32,
    pub items: Vec<SampledItem>,
    pub allocation: BTreeMap<String, usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.items.iter().map(|i| i.doc_id.clone()).collect()
    }
}

/// max(1, ⌈rate × n⌉), or 0 for an empty population.
pub fn sample_size(n: usize, rate: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // guard against 0.03 * 100 = 3.0000000000000004
    let raw = (rate * n as f64 * 1e9).round() / 1e9;
    (raw.ceil() as usize).clamp(1, n)
}

/// Largest-remainder apportionment of `total` over strata sizes. Leftover
/// units go to the largest fractional parts, then to larger strata, then
/// to the smaller key.
pub fn allocate(sizes: &BTreeMap<String, usize>, total: usize) -> BTreeMap<String, usize> {
    let n: usize = sizes.values().sum();
    let mut out: BTreeMap<String, usize> = sizes.keys().map(|k| (k.clone(), 0)).collect();
    if n == 0 || total == 0 {
        return out;
    }
    let total = total.min(n);
    // exact integer arithmetic: quota = size * total / n
    let mut rems: Vec<(&String, usize, usize)> = Vec::new();
    let mut given = 0;
    for (k, &s) in sizes {
        let q = s * total / n;
        let r = s * total % n;
        out.insert(k.clone(), q);
        given += q;
        rems.push((k, r, s));
    }
    rems.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    for (k, _, s) in rems.into_iter().cycle().take(4 * sizes.len() + total) {
        if given == total {
            break;
        }
        let slot = out.get_mut(k).expect("known stratum");
        if *slot < s {
            *slot += 1;
            given += 1;
        }
    }
    out
}

/// Each eligible item's stratum: its most frequent keyword candidate (ties
/// to the smaller key). Items whose every matched path is stabilized are
/// not eligible.
pub fn strata(
    batch: &AnnotationBatch,
    corpus: &Corpus,
    candidates: &CandidateSet,
    stabilized: &BTreeSet<PathId>,
) -> Vec<SampledItem> {
    let freq = candidates.keyword_frequencies();
    batch
        .entries
        .iter()
        .filter(|e| e.paths.iter().any(|p| !stabilized.contains(p)))
        .map(|e| {
            let stratum = corpus
                .index_of(&e.doc_id)
                .and_then(|i| {
                    corpus
                        .view(i)
                        .token_set
                        .iter()
                        .filter_map(|t| freq.get(t.as_str()).map(|&n| (n, t)))
                        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(a.1)))
                        .map(|(_, t)| t.clone())
                })
                .unwrap_or_else(|| NO_STRATUM.to_string());
            SampledItem { doc_id: e.doc_id.clone(), stratum }
        })
        .collect()
}

/// Draws `sample_size(|items|, rate)` items, apportioned over strata by
/// largest remainder and picked uniformly within each stratum.
pub fn stratified_sample(items: &[SampledItem], rate: f64, seed: u64, round: u32) -> SampleSet {
    let mut groups: BTreeMap<String, Vec<&SampledItem>> = BTreeMap::new();
    for it in items {
        groups.entry(it.stratum.clone()).or_default().push(it);
    }
    let sizes = groups.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let allocation = allocate(&sizes, sample_size(items.len(), rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for (k, mut members) in groups {
        members.shuffle(&mut rng);
        picked.extend(members.into_iter().take(allocation[&k]).cloned());
    }
    SampleSet { round, items: picked, allocation: allocation.into_iter().filter(|(_, n)| *n > 0).collect() }
}
