//! String similarity metrics and similarity-based entity linking.
//!
//! Inputs are compared as names: casefolded, punctuation removed and
//! whitespace collapsed. Every metric returns a score in `[0, 1]` and scores
//! identical names exactly `1.0`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lexicon::{Gazetteer, GazetteerEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Jaccard,
    LevenshteinNorm,
    Jaro,
    CosineTfidf,
    Dice,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::Jaccard, Metric::LevenshteinNorm, Metric::Jaro, Metric::CosineTfidf, Metric::Dice];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::LevenshteinNorm => "levenshtein_norm",
            Metric::Jaro => "jaro",
            Metric::CosineTfidf => "cosine_tfidf",
            Metric::Dice => "dice",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("unknown similarity metric `{0}` (expected jaccard, levenshtein_norm, jaro, cosine_tfidf or dice)")]
    UnknownMetric(String),
    #[error("at least one similarity metric is required")]
    NoMetrics,
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
}

impl FromStr for Metric {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SimilarityError::UnknownMetric(s.to_string()))
    }
}

/// Casefold, drop punctuation, collapse whitespace.
pub fn normalize_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Inverse document frequencies over a name collection, used by
/// `cosine_tfidf`. Tokens missing from the collection weigh `1.0`.
#[derive(Debug, Clone, Default)]
pub struct IdfWeights {
    idf: BTreeMap<String, f64>,
}

impl IdfWeights {
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for name in names {
            n += 1;
            let toks: BTreeSet<String> = normalize_name(name).split(' ').map(str::to_string).collect();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        let idf = df.into_iter().map(|(t, d)| (t, 1.0 + (n as f64 / d as f64).ln())).collect();
        Self { idf }
    }

    fn weight(&self, token: &str) -> f64 {
        self.idf.get(token).copied().unwrap_or(1.0)
    }
}

pub fn string_similarity(a: &str, b: &str, metric: Metric) -> f64 {
    similarity_with(a, b, metric, &IdfWeights::default())
}

pub fn similarity_with(a: &str, b: &str, metric: Metric, idf: &IdfWeights) -> f64 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    if a == b {
        return 1.0;
    }
    let s = match metric {
        Metric::Jaccard => {
            let (x, y) = (token_set(&a), token_set(&b));
            ratio(x.intersection(&y).count(), x.union(&y).count())
        }
        Metric::Dice => {
            let (x, y) = (bigrams(&a), bigrams(&b));
            ratio(2 * x.intersection(&y).count(), x.len() + y.len())
        }
        Metric::LevenshteinNorm => {
            let max = a.chars().count().max(b.chars().count());
            if max == 0 {
                1.0
            } else {
                1.0 - strsim::levenshtein(&a, &b) as f64 / max as f64
            }
        }
        Metric::Jaro => strsim::jaro(&a, &b),
        Metric::CosineTfidf => tfidf_cosine(&a, &b, idf),
    };
    s.clamp(0.0, 1.0)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn token_set(s: &str) -> BTreeSet<&str> {
    s.split(' ').filter(|t| !t.is_empty()).collect()
}

fn bigrams(s: &str) -> BTreeSet<(char, char)> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() == 1 {
        return BTreeSet::from([(chars[0], '\0')]);
    }
    chars.windows(2).map(|w| (w[0], w[1])).collect()
}

fn tfidf_cosine(a: &str, b: &str, idf: &IdfWeights) -> f64 {
    fn vec<'a>(s: &'a str, idf: &IdfWeights) -> BTreeMap<&'a str, f64> {
        let mut v: BTreeMap<&str, f64> = BTreeMap::new();
        for t in s.split(' ').filter(|t| !t.is_empty()) {
            *v.entry(t).or_default() += 1.0;
        }
        for (t, w) in v.iter_mut() {
            *w *= idf.weight(t);
        }
        v
    }
    let (x, y) = (vec(a, idf), vec(b, idf));
    let dot: f64 = x.iter().filter_map(|(t, w)| y.get(t).map(|u| w * u)).sum();
    let nx: f64 = x.values().map(|w| w * w).sum::<f64>().sqrt();
    let ny: f64 = y.values().map(|w| w * w).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub entry: GazetteerEntry,
    pub score: f64,
}

/// Links `mention` to the gazetteer entry with the highest mean score over
/// `metrics`, provided that mean reaches `threshold`. Ties go to the
/// lexicographically smallest surface form.
pub fn link_entity(
    mention: &str,
    gazetteer: &Gazetteer,
    metrics: &[Metric],
    threshold: f64,
) -> Result<Option<LinkResult>, SimilarityError> {
    if metrics.is_empty() {
        return Err(SimilarityError::NoMetrics);
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SimilarityError::Threshold(threshold));
    }
    let idf = IdfWeights::from_names(gazetteer.entries().iter().map(|e| e.surface.as_str()));
    let mut best: Option<(f64, &GazetteerEntry)> = None;
    for entry in gazetteer.entries() {
        let mean = metrics.iter().map(|&m| similarity_with(mention, &entry.surface, m, &idf)).sum::<f64>()
            / metrics.len() as f64;
        let better = match best {
            None => true,
            Some((s, e)) => mean > s || (mean == s && entry.surface < e.surface),
        };
        if better {
            best = Some((mean, entry));
        }
    }
    Ok(best.filter(|(s, _)| *s >= threshold).map(|(score, e)| LinkResult { entry: e.clone(), score }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::TextPipeline;

    /// Jaro written independently of `strsim`, with the strcmp95 convention
    /// of halving the transposition count by integer division.
    fn jaro_oracle(s: &str, t: &str) -> f64 {
        let (s, t): (Vec<char>, Vec<char>) = (s.chars().collect(), t.chars().collect());
        if s == t {
            return 1.0;
        }
        let window = (s.len().max(t.len()) / 2).saturating_sub(1);
        let mut sm = vec![false; s.len()];
        let mut tm = vec![false; t.len()];
        let mut m = 0usize;
        for i in 0..s.len() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(t.len());
            for j in lo..hi {
                if !tm[j] && s[i] == t[j] {
                    sm[i] = true;
                    tm[j] = true;
                    m += 1;
                    break;
                }
            }
        }
        if m == 0 {
            return 0.0;
        }
        let (mut k, mut trans) = (0usize, 0usize);
        for i in 0..s.len() {
            if sm[i] {
                while !tm[k] {
                    k += 1;
                }
                if s[i] != t[k] {
                    trans += 1;
                }
                k += 1;
            }
        }
        let m = m as f64;
        (m / s.len() as f64 + m / t.len() as f64 + (m - (trans / 2) as f64) / m) / 3.0
    }

    #[test]
    fn jaccard_token_sets() {
        assert!((string_similarity("a b", "b c", Metric::Jaccard) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn turnbull_jaro() {
        let s = string_similarity("M. Turnbull", "Malcolm Turnbull", Metric::Jaro);
        assert!((0.72..=0.76).contains(&s), "{s}");
        assert!((s - jaro_oracle("m turnbull", "malcolm turnbull")).abs() < 1e-12);
    }

    #[test]
    fn identity_is_one() {
        for m in Metric::ALL {
            assert_eq!(string_similarity("health", "health", m), 1.0, "{m}");
            assert_eq!(string_similarity("Health", "health", m), 1.0, "{m}");
        }
    }

    #[test]
    fn unknown_metric() {
        assert_eq!("soundex".parse::<Metric>(), Err(SimilarityError::UnknownMetric("soundex".into())));
        assert_eq!("Jaro".parse::<Metric>(), Ok(Metric::Jaro));
    }

    fn gaz(lines: &str) -> Gazetteer {
        Gazetteer::parse(lines, "g", &TextPipeline::default()).unwrap()
    }

    #[test]
    fn links_turnbull() {
        let g = gaz(
            "Malcolm Turnbull\tperson\tPrime Minister of Australia\nGreg Hunt\tperson\tHealth Minister of Australia\n",
        );
        let r = link_entity("M. Turnbull", &g, &[Metric::Jaro], 0.7).unwrap().unwrap();
        assert_eq!(r.entry.surface, "Malcolm Turnbull");
        let exact = link_entity("Greg Hunt", &g, &Metric::ALL, 0.7).unwrap().unwrap();
        assert_eq!(exact.entry.surface, "Greg Hunt");
        assert_eq!(exact.score, 1.0);
    }

    #[test]
    fn gibberish_does_not_link() {
        let g = gaz("Malcolm Turnbull\tperson\tPM\nGreg Hunt\tperson\tHealth Minister\nSydney\tlocation\tCity\n");
        // brute force: every entry's mean over all metrics is below 0.7
        for e in g.entries() {
            let mean: f64 = Metric::ALL.iter().map(|&m| string_similarity("qwxyz", &e.surface, m)).sum::<f64>() / 5.0;
            assert!(mean < 0.7);
        }
        assert_eq!(link_entity("qwxyz", &g, &Metric::ALL, 0.7).unwrap(), None);
    }

    #[test]
    fn link_errors() {
        let g = gaz("A\tperson\tx\n");
        assert_eq!(link_entity("a", &g, &[], 0.5), Err(SimilarityError::NoMetrics));
        assert_eq!(link_entity("a", &g, &[Metric::Jaro], 1.5), Err(SimilarityError::Threshold(1.5)));
    }

    #[test]
    fn tie_breaks_lexicographically() {
        let g = gaz("Bob\tperson\tx\nBoa\tperson\ty\n");
        let r = link_entity("Bo", &g, &[Metric::LevenshteinNorm], 0.0).unwrap().unwrap();
        assert_eq!(r.entry.surface, "Boa");
    }

    proptest::proptest! {
        #[test]
        fn metrics_bounded_and_symmetric(a in "[a-zA-Z .]{1,16}", b in "[a-zA-Z .]{1,16}") {
            for m in Metric::ALL {
                let x = string_similarity(&a, &b, m);
                proptest::prop_assert!((0.0..=1.0).contains(&x));
                let y = string_similarity(&b, &a, m);
                proptest::prop_assert!((x - y).abs() < 1e-12, "{} {} {}", m, x, y);
            }
            proptest::prop_assert_eq!(string_similarity(&a, &a, Metric::Jaro), 1.0);
        }

        #[test]
        fn jaro_matches_oracle(a in "[a-z ]{1,12}", b in "[a-z ]{1,12}") {
            let (na, nb) = (normalize_name(&a), normalize_name(&b));
            proptest::prop_assume!(!na.is_empty() && !nb.is_empty());
            let got = string_similarity(&a, &b, Metric::Jaro);
            proptest::prop_assert!((got - jaro_oracle(&na, &nb)).abs() < 1e-9);
        }
    }
}
