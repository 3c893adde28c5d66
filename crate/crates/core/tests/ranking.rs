use std::collections::BTreeMap;

use curation_core::corpus::{Corpus, Document};
use curation_core::rank::{rank, score_document, Preference, WeightedConcept};
use curation_core::text::TextPipeline;
use proptest::prelude::*;

const WORDS: [&str; 8] = ["alpha", "bravo", "delta", "kilo", "lima", "oscar", "tango", "zulu"];

fn build(docs: &[Vec<usize>]) -> (Corpus, TextPipeline) {
    let p = TextPipeline::default();
    let mut c = Corpus::new();
    for (i, d) in docs.iter().enumerate() {
        let text: Vec<&str> = d.iter().map(|&w| WORDS[w]).collect();
        c.insert(
            Document { id: format!("d{i:02}"), text: text.join(" "), created_at: None, meta: Default::default() },
            &p,
            None,
        );
    }
    (c, p)
}

/// Dense vectors over the whole vocabulary, every query enumerated by hand.
fn brute(c: &Corpus, p: &TextPipeline, pref: &Preference) -> BTreeMap<String, f64> {
    let vocab: Vec<String> = WORDS.iter().map(|w| p.normalize_word(w)).collect();
    let n = c.len() as f64;
    let mut out = BTreeMap::new();
    for i in 0..c.len() {
        let view = c.view(i);
        let d: Vec<f64> = vocab
            .iter()
            .map(|t| {
                let tf = view.tokens.iter().filter(|x| *x == t).count() as f64;
                let df = (0..c.len()).filter(|&j| c.view(j).token_set.contains(t)).count() as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    tf * (n / df).ln()
                }
            })
            .collect();
        let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut best = 0.0f64;
        let sizes: Vec<usize> = pref.concepts.iter().map(|c| c.members.len()).collect();
        let total: usize = sizes.iter().product();
        for mut k in 0..total {
            let mut pick = vec![0; sizes.len()];
            for ci in (0..sizes.len()).rev() {
                pick[ci] = k % sizes[ci];
                k /= sizes[ci];
            }
            let mut weight = vec![0.0; vocab.len()];
            let mut present = vec![false; vocab.len()];
            for (ci, &mi) in pick.iter().enumerate() {
                let t = p.normalize_word(&pref.concepts[ci].members[mi]);
                let vi = vocab.iter().position(|v| *v == t).unwrap();
                weight[vi] = f64::max(weight[vi], pref.concepts[ci].weight);
                present[vi] = true;
            }
            let qn = (present.iter().filter(|x| **x).count() as f64).sqrt();
            if dn == 0.0 {
                continue;
            }
            let s: f64 = (0..vocab.len()).map(|v| d[v] * weight[v]).sum::<f64>() / (dn * qn);
            best = best.max(s);
        }
        out.insert(c.doc(i).id.clone(), best);
    }
    out
}

fn arb_pref() -> impl Strategy<Value = Preference> {
    prop::collection::vec((prop::collection::btree_set(0usize..8, 1..4), 0.1f64..5.0), 1..4).prop_map(|cs| Preference {
        concepts: cs
            .into_iter()
            .enumerate()
            .map(|(i, (m, w))| WeightedConcept {
                label: format!("C{i}"),
                members: m.into_iter().map(|x| WORDS[x].to_string()).collect(),
                weight: w,
            })
            .collect(),
    })
}

fn arb_docs() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..8, 1..6), 1..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_matches_brute_force(docs in arb_docs(), pref in arb_pref()) {
        let (c, p) = build(&docs);
        let want = brute(&c, &p, &pref);
        let got = rank(&pref, &c, &p, 100).unwrap();
        for item in &got {
            prop_assert!((item.score - want[&item.doc_id]).abs() < 1e-9);
            let sum: f64 = item.contributions.iter().map(|x| x.score).sum();
            prop_assert!((sum - item.score).abs() < 1e-9);
            let max_w = pref.concepts.iter().map(|c| c.weight).fold(0.0, f64::max);
            prop_assert!(item.score <= max_w + 1e-9);
        }
        let positive = want.values().filter(|s| **s > 1e-12).count();
        prop_assert_eq!(got.len(), positive);
        for w in got.windows(2) {
            prop_assert!(w[0].score > w[1].score - 1e-12 * w[0].score.abs());
            if (w[0].score - w[1].score).abs() <= 1e-15 {
                prop_assert!(w[0].doc_id < w[1].doc_id);
            }
        }
        for (id, s) in &want {
            prop_assert!((score_document(id, &pref, &c, &p).unwrap().score - s).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_weight_scaling_keeps_order(docs in arb_docs(), pref in arb_pref(), k in 0.5f64..4.0) {
        let (c, p) = build(&docs);
        let mut scaled = pref.clone();
        for wc in &mut scaled.concepts {
            wc.weight *= k;
        }
        let a: Vec<String> = rank(&pref, &c, &p, 100).unwrap().into_iter().map(|i| i.doc_id).collect();
        let b: Vec<String> = rank(&scaled, &c, &p, 100).unwrap().into_iter().map(|i| i.doc_id).collect();
        prop_assert_eq!(a, b);
    }
}
