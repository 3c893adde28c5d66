//! Beta-Bernoulli Thompson sampling over reward/demote counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BanditError {
    #[error("verdict for item `{0}` which was not sampled")]
    Unsampled(String),
    #[error("round {round} is not after the last recorded round {last}")]
    StaleRound { round: u32, last: u32 },
    #[error("invalid prior ({0}, {1}): both parameters must be positive")]
    Prior(f64, f64),
    #[error("ledger file {path}: {message}")]
    Io { path: String, message: String },
}

/// A worker's answer: "Yes", "No" or "I don't know".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    #[serde(alias = "yes", alias = "Relevant")]
    Relevant,
    #[serde(alias = "no", alias = "Irrelevant")]
    Irrelevant,
    #[serde(alias = "dont_know", alias = "Unknown")]
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub r: u64,
    pub d: u64,
}

impl Counts {
    pub fn total(self) -> u64 {
        self.r + self.d
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.r += o.r;
        self.d += o.d;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl Prior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, BanditError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(BanditError::Prior(alpha, beta));
        }
        Ok(Self { alpha, beta })
    }
}

/// (α₀ + r) / (α₀ + β₀ + r + d).
pub fn posterior_mean(c: Counts, prior: Prior) -> f64 {
    (prior.alpha + c.r as f64) / (prior.alpha + prior.beta + c.r as f64 + c.d as f64)
}

/// One verified item and the features present in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub item: String,
    pub answer: Answer,
    pub features: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDelta {
    pub round: u32,
    pub deltas: BTreeMap<String, Counts>,
}

/// Cumulative reward/demote counts per feature key, with per-round deltas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLedger {
    pub prior: Prior,
    counts: BTreeMap<String, Counts>,
    history: Vec<RoundDelta>,
}

impl FeedbackLedger {
    pub fn new(prior: Prior) -> Self {
        Self { prior, ..Default::default() }
    }

    pub fn counts(&self, key: &str) -> Counts {
        self.counts.get(key).copied().unwrap_or_default()
    }

    pub fn all_counts(&self) -> &BTreeMap<String, Counts> {
        &self.counts
    }

    pub fn history(&self) -> &[RoundDelta] {
        &self.history
    }

    pub fn last_round(&self) -> Option<u32> {
        self.history.last().map(|h| h.round)
    }

    /// Summed counts of `members`.
    pub fn aggregate<'a>(&self, members: impl IntoIterator<Item = &'a str>) -> Counts {
        let mut c = Counts::default();
        for m in members {
            c += self.counts(m);
        }
        c
    }

    /// Rewards every feature present in a relevant item and demotes every
    /// feature present in an irrelevant one; unknown answers are ignored.
    /// Each feature counts once per item. Nothing changes on error.
    pub fn apply_verdicts(
        &mut self,
        round: u32,
        observations: &[Observation],
        sampled: &BTreeSet<String>,
    ) -> Result<RoundDelta, BanditError> {
        if let Some(last) = self.last_round() {
            if round <= last {
                return Err(BanditError::StaleRound { round, last });
            }
        }
        if let Some(o) = observations.iter().find(|o| !sampled.contains(&o.item)) {
            return Err(BanditError::Unsampled(o.item.clone()));
        }
        let mut deltas: BTreeMap<String, Counts> = BTreeMap::new();
        for o in observations {
            let inc = match o.answer {
                Answer::Relevant => Counts { r: 1, d: 0 },
                Answer::Irrelevant => Counts { r: 0, d: 1 },
                Answer::Unknown => continue,
            };
            for f in &o.features {
                *deltas.entry(f.clone()).or_default() += inc;
            }
        }
        for (k, c) in &deltas {
            *self.counts.entry(k.clone()).or_default() += *c;
        }
        let delta = RoundDelta { round, deltas };
        self.history.push(delta.clone());
        Ok(delta)
    }

    pub fn save(&self, path: &Path) -> Result<(), BanditError> {
        let io = |e: String| BanditError::Io { path: path.display().to_string(), message: e };
        let text = serde_json::to_string_pretty(self).map_err(|e| io(e.to_string()))?;
        fs::write(path, text).map_err(|e| io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BanditError> {
        let io = |e: String| BanditError::Io { path: path.display().to_string(), message: e };
        let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub seed: u64,
    pub theta: BTreeMap<String, f64>,
}

/// Draws θ ~ Beta(α₀ + r, β₀ + d) for every arm, visiting arms in key order
/// with one seeded generator, so equal inputs give equal draws.
pub fn sample_theta(arms: &BTreeMap<String, Counts>, prior: Prior, seed: u64) -> ThetaEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = arms
        .iter()
        .map(|(k, c)| {
            let dist = Beta::new(prior.alpha + c.r as f64, prior.beta + c.d as f64).expect("positive parameters");
            let x: f64 = dist.sample(&mut rng);
            // keep θ strictly inside (0, 1)
            let x = x.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
            (k.clone(), x)
        })
        .collect();
    ThetaEstimate { seed, theta }
}

/// The `k` arms with highest θ; ties go to more evidence, then to the
/// smaller key.
pub fn top_k(est: &ThetaEstimate, arms: &BTreeMap<String, Counts>, k: usize) -> Vec<String> {
    let mut keys: Vec<(&String, f64, u64)> =
        est.theta.iter().map(|(key, &t)| (key, t, arms.get(key).map_or(0, |c| c.total()))).collect();
    keys.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    keys.into_iter().take(k).map(|(key, _, _)| key.clone()).collect()
}

/// Mixes a base seed with a round number and a purpose tag into an
/// independent stream seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, round: u32, purpose: u64) -> u64 {
    let mut z =
        seed ^ (u64::from(round)).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn arms(list: &[(&str, u64, u64)]) -> BTreeMap<String, Counts> {
        list.iter().map(|&(k, r, d)| (k.to_string(), Counts { r, d })).collect()
    }

    fn obs(item: &str, answer: Answer, feats: &[&str]) -> Observation {
        Observation { item: item.into(), answer, features: feats.iter().map(|s| s.to_string()).collect() }
    }

    fn sampled(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn posterior_mean_examples() {
        let p = Prior::default();
        assert_eq!(posterior_mean(Counts { r: 0, d: 0 }, p), 0.5);
        assert!((posterior_mean(Counts { r: 3, d: 1 }, p) - 4.0 / 6.0).abs() < 1e-12);
        assert!((posterior_mean(Counts { r: 0, d: 100 }, p) - 1.0 / 102.0).abs() < 1e-12);
    }

    #[test]
    fn reward_demote_schema() {
        let mut l = FeedbackLedger::default();
        l.apply_verdicts(
            1,
            &[obs("item1", Answer::Relevant, &["health", "fund"]), obs("item2", Answer::Irrelevant, &["qanda"])],
            &sampled(&["item1", "item2"]),
        )
        .unwrap();
        assert_eq!(l.counts("health"), Counts { r: 1, d: 0 });
        assert_eq!(l.counts("fund"), Counts { r: 1, d: 0 });
        assert_eq!(l.counts("qanda"), Counts { r: 0, d: 1 });

        let before = l.clone();
        l.apply_verdicts(2, &[obs("item1", Answer::Unknown, &["health"])], &sampled(&["item1"])).unwrap();
        assert_eq!(l.all_counts(), before.all_counts());
    }

    #[test]
    fn concept_counts_are_member_sums() {
        let mut l = FeedbackLedger::default();
        l.apply_verdicts(
            1,
            &[
                obs("a", Answer::Relevant, &["doctor", "dentist"]),
                obs("b", Answer::Irrelevant, &["physician"]),
                obs("c", Answer::Relevant, &["physician", "doctor"]),
            ],
            &sampled(&["a", "b", "c"]),
        )
        .unwrap();
        let concept = l.aggregate(["doctor", "dentist", "physician"]);
        let sum = Counts {
            r: l.counts("doctor").r + l.counts("dentist").r + l.counts("physician").r,
            d: l.counts("doctor").d + l.counts("dentist").d + l.counts("physician").d,
        };
        assert_eq!(concept, sum);
        assert_eq!(concept, Counts { r: 4, d: 1 });
    }

    #[test]
    fn rejects_unsampled_and_stale() {
        let mut l = FeedbackLedger::default();
        let err = l.apply_verdicts(1, &[obs("zz", Answer::Relevant, &["x"])], &sampled(&["a"])).unwrap_err();
        assert!(err.to_string().contains("zz"));
        assert!(l.all_counts().is_empty());
        l.apply_verdicts(2, &[], &sampled(&[])).unwrap();
        assert!(matches!(l.apply_verdicts(2, &[], &sampled(&[])), Err(BanditError::StaleRound { .. })));
    }

    #[test]
    fn strong_arm_beats_weak_arm() {
        let a = arms(&[("good", 50, 0), ("bad", 0, 50)]);
        let wins = (0..1000u64)
            .filter(|&s| {
                let t = sample_theta(&a, Prior::default(), s);
                t.theta["good"] > t.theta["bad"]
            })
            .count();
        assert!(wins >= 990, "{wins}");
    }

    #[test]
    fn uniform_prior_mean() {
        let a = arms(&[("x", 0, 0)]);
        let mean: f64 =
            (0..10_000u64).map(|s| sample_theta(&a, Prior::default(), s).theta["x"]).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() <= 0.02, "{mean}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = arms(&[("x", 3, 4), ("y", 1, 0), ("z", 0, 9)]);
        assert_eq!(sample_theta(&a, Prior::default(), 7), sample_theta(&a, Prior::default(), 7));
        assert_ne!(sample_theta(&a, Prior::default(), 7), sample_theta(&a, Prior::default(), 8));
    }

    #[test]
    fn top_k_examples() {
        let a = arms(&[("a", 1, 0), ("b", 5, 5), ("c", 0, 0)]);
        let est = ThetaEstimate {
            seed: 0,
            theta: [("a".to_string(), 0.9), ("b".to_string(), 0.4), ("c".to_string(), 0.7)].into(),
        };
        assert_eq!(top_k(&est, &a, 2), vec!["a", "c"]);
        assert_eq!(top_k(&est, &a, 10), vec!["a", "c", "b"]);
        let tie = ThetaEstimate {
            seed: 0,
            theta: [("a".to_string(), 0.5), ("b".to_string(), 0.5), ("c".to_string(), 0.5)].into(),
        };
        assert_eq!(top_k(&tie, &a, 3), vec!["b", "a", "c"]);
    }

    #[test]
    fn posterior_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &p in &[0.1, 0.5, 0.7, 0.95] {
            let mut c = Counts::default();
            for _ in 0..1000 {
                if rng.random_bool(p) {
                    c.r += 1
                } else {
                    c.d += 1
                }
            }
            assert!((posterior_mean(c, Prior::default()) - p).abs() <= 0.05);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = FeedbackLedger::default();
        l.apply_verdicts(1, &[obs("a", Answer::Relevant, &["x"])], &sampled(&["a"])).unwrap();
        let p = dir.path().join("ledger.json");
        l.save(&p).unwrap();
        assert_eq!(FeedbackLedger::load(&p).unwrap(), l);
    }

    proptest! {
        #[test]
        fn monotone_in_counts(r in 0u64..500, d in 0u64..500) {
            let p = Prior::default();
            let m = posterior_mean(Counts { r, d }, p);
            prop_assert!(m > 0.0 && m < 1.0);
            let up = posterior_mean(Counts { r: r + 1, d }, p);
            let down = posterior_mean(Counts { r, d: d + 1 }, p);
            prop_assert!(up > m);
            prop_assert!(down < m);
        }

        #[test]
        fn theta_in_open_interval(r in 0u64..10_000, d in 0u64..10_000, seed in any::<u64>()) {
            let t = sample_theta(&arms(&[("k", r, d)]), Prior::default(), seed).theta["k"];
            prop_assert!(t > 0.0 && t < 1.0);
        }

        #[test]
        fn counts_never_decrease(rounds in prop::collection::vec(prop::collection::vec((0usize..4, 0u8..3, prop::collection::btree_set(0usize..5, 0..4)), 0..6), 1..5)) {
            let mut l = FeedbackLedger::default();
            for (ri, items) in rounds.iter().enumerate() {
                let obs: Vec<Observation> = items
                    .iter()
                    .map(|(i, a, fs)| Observation {
                        item: format!("i{i}"),
                        answer: [Answer::Relevant, Answer::Irrelevant, Answer::Unknown][*a as usize],
                        features: fs.iter().map(|f| format!("f{f}")).collect(),
                    })
                    .collect();
                let before = l.clone();
                l.apply_verdicts(ri as u32 + 1, &obs, &(0..4).map(|i| format!("i{i}")).collect()).unwrap();
                for (k, c) in before.all_counts() {
                    let now = l.counts(k);
                    prop_assert!(now.r >= c.r && now.d >= c.d);
                }
                let concept = l.aggregate(["f0", "f1", "f2"]);
                prop_assert_eq!(concept.r, l.counts("f0").r + l.counts("f1").r + l.counts("f2").r);
            }
        }
    }
}
