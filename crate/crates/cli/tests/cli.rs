use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn curate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curate")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = curate(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, docs: usize, seed: u64) {
    ok(&["synth", "--docs", &docs.to_string(), "--seed", &seed.to_string(), "--out", s(dir)]);
}

#[test]
fn synth_is_seeded_and_self_describing() {
    let t = tempfile::tempdir().unwrap();
    synth(&t.path().join("a"), 800, 4);
    synth(&t.path().join("b"), 800, 4);
    synth(&t.path().join("c"), 800, 5);
    for f in ["corpus.jsonl", "labels.jsonl", "seed.rule", "lexicon/hypernyms.tsv"] {
        let a = fs::read(t.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
    let a = fs::read(t.path().join("a/corpus.jsonl")).unwrap();
    assert_ne!(a, fs::read(t.path().join("c/corpus.jsonl")).unwrap());
    let header: Value =
        serde_json::from_str(fs::read_to_string(t.path().join("a/corpus.jsonl")).unwrap().lines().next().unwrap())
            .unwrap();
    assert_eq!(header["header"]["config"]["seed"], 4);
    assert_eq!(header["header"]["config"]["docs"], 800);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), 300, 1);
    let corpus = t.path().join("corpus.jsonl");
    let rule = t.path().join("seed.rule");
    let out = t.path().join("out");
    let code = |args: &[&str]| curate(args).status.code();

    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["run", "--corpus", s(&corpus)]), Some(1));
    assert_eq!(code(&["synth", "--docs", "10", "--topics", "9", "--out", s(&out)]), Some(1));
    assert_eq!(
        code(&["run", "--corpus", s(&corpus), "--rule", s(&rule), "--out", s(&out)]),
        Some(1),
        "oracle without labels"
    );
    let base =
        ["run", "--corpus", s(&corpus), "--rule", s(&rule), "--labels", "/nonexistent/labels.jsonl", "--out", s(&out)];
    assert_eq!(code(&base), Some(2));

    let bad = t.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": \"x\"}\n").unwrap();
    let r = curate(&["ingest", "--corpus", s(&bad)]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8(r.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("line 1"), "{err}");

    let bad_rule = t.path().join("bad.rule");
    fs::write(&bad_rule, "tag: X\nTweet.Keyword.Contains(").unwrap();
    let labels = t.path().join("labels.jsonl");
    let args = ["run", "--corpus", s(&corpus), "--rule", s(&bad_rule), "--labels", s(&labels), "--out", s(&out)];
    assert_eq!(code(&args), Some(2));
    let args = [
        "run",
        "--corpus",
        s(&corpus),
        "--rule",
        s(&rule),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "--set",
        "window=1",
    ];
    assert_eq!(code(&args), Some(1));
    assert_eq!(code(&["report", s(&t.path().join("missing"))]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn run_writes_reports_and_table() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), 4000, 7);
    let out = t.path().join("out");
    let cfg = t.path().join("adapt.toml");
    fs::write(&cfg, "sample_rate = 0.05\nchildren_cap = 5\n").unwrap();
    let table = ok(&[
        "run",
        "--corpus",
        s(&t.path().join("corpus.jsonl")),
        "--rule",
        s(&t.path().join("seed.rule")),
        "--labels",
        s(&t.path().join("labels.jsonl")),
        "--rounds",
        "5",
        "--feedback",
        "oracle",
        "--seed",
        "7",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    for r in 1..=5 {
        let report: Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("round-{r:03}.json"))).unwrap()).unwrap();
        assert_eq!(report["round"], r);
        assert_eq!(report["seed"], 7);
        assert!(report["evaluation"]["precision"].is_number());
    }
    let run: Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 7);
    assert_eq!(run["config"]["children_cap"], 5);
    assert_eq!(run["config"]["sample_rate"], 0.05);
    assert_eq!(run["rounds"].as_array().unwrap().len(), 5);
    let final_rule = fs::read_to_string(out.join("final.rule")).unwrap();
    assert!(final_rule.starts_with("tag: Budget\n"));
    assert_eq!(final_rule.lines().nth(1).unwrap(), run["final_rule"].as_str().unwrap());

    assert!(table.contains("round  annotated"));
    assert_eq!(table.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 6);
    assert_eq!(ok(&["report", s(&out)]), table);
    let as_json: Value = serde_json::from_str(&ok(&["report", s(&out), "--json"])).unwrap();
    assert_eq!(as_json, run);

    // the final rule file is itself a valid rule
    let again = t.path().join("again");
    ok(&[
        "run",
        "--corpus",
        s(&t.path().join("corpus.jsonl")),
        "--rule",
        s(&out.join("final.rule")),
        "--labels",
        s(&t.path().join("labels.jsonl")),
        "--rounds",
        "1",
        "--out",
        s(&again),
    ]);
}

#[test]
fn scripted_feedback_replays_verdicts() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), 2000, 3);
    // replaying the labels as scripted verdicts gives the oracle's run
    let script: String = fs::read_to_string(t.path().join("labels.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            let answer = if v["relevant"] == true { "relevant" } else { "irrelevant" };
            format!("{{\"doc_id\":{},\"answer\":\"{answer}\"}}\n", v["id"])
        })
        .collect();
    fs::write(t.path().join("script.jsonl"), script).unwrap();
    let common = |out: &Path| {
        vec![
            "run".to_string(),
            "--corpus".into(),
            s(&t.path().join("corpus.jsonl")).into(),
            "--rule".into(),
            s(&t.path().join("seed.rule")).into(),
            "--rounds".into(),
            "3".into(),
            "--seed".into(),
            "2".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let mut a = common(&t.path().join("oracle"));
    a.extend(["--labels".into(), s(&t.path().join("labels.jsonl")).into()]);
    let mut b = common(&t.path().join("scripted"));
    b.extend(["--feedback".into(), "scripted".into(), "--verdicts".into(), s(&t.path().join("script.jsonl")).into()]);
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    for r in 1..=3 {
        let f = format!("round-{r:03}.json");
        let mut x: Value =
            serde_json::from_str(&fs::read_to_string(t.path().join("oracle").join(&f)).unwrap()).unwrap();
        let y: Value = serde_json::from_str(&fs::read_to_string(t.path().join("scripted").join(&f)).unwrap()).unwrap();
        // only the oracle run has labels to evaluate against
        x.as_object_mut().unwrap().remove("evaluation");
        assert_eq!(x, y, "round {r}");
    }
}

#[test]
fn rank_summarize_ingest() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), 1500, 2);
    let corpus = t.path().join("corpus.jsonl");
    let lex = fs::read_to_string(t.path().join("lexicon/hypernyms.tsv")).unwrap();
    let words: Vec<&str> = lex.lines().take(40).map(|l| l.split('\t').next().unwrap()).collect();
    let pref = serde_json::json!({ "concepts": [
        { "label": "A", "members": &words[..20], "weight": 1.0 },
        { "label": "B", "members": &words[20..], "weight": 0.5 },
    ]});
    fs::write(t.path().join("pref.json"), pref.to_string()).unwrap();
    let v: Value = serde_json::from_str(&ok(&[
        "rank",
        "--corpus",
        s(&corpus),
        "--preference",
        s(&t.path().join("pref.json")),
        "--top",
        "20",
    ]))
    .unwrap();
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 20);
    assert!(items.windows(2).all(|w| w[0]["score"].as_f64() >= w[1]["score"].as_f64()));

    let out = t.path().join("o");
    ok(&["summarize", "--corpus", s(&corpus), "--kinds", "topic,keyword", "--wedges", "4", "--out", s(&out)]);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("summaries.json")).unwrap()).unwrap();
    assert_eq!(v["summaries"]["kinds"]["topic"].as_array().unwrap().len(), 4);
    assert_eq!(v["summaries"]["kinds"]["keyword"].as_array().unwrap().len(), 4);
    assert_eq!(curate(&["summarize", "--corpus", s(&corpus), "--kinds", "nope"]).status.code(), Some(1));

    let v: Value = serde_json::from_str(&ok(&["ingest", "--corpus", s(&corpus)])).unwrap();
    assert_eq!(v["added"], 1500);
    assert_eq!(v["stats"]["doc_count"], 1500);
}
