use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use curation_core::adapt::{evaluate_rule, AdaptConfig, Env, Evaluation, RuleState};
use curation_core::eval::{CompiledRule, EvalContext};
use curation_core::feedback::{FeedbackSource, OracleSource, ScriptedSource};
use curation_core::knowledge::SummaryKind;
use curation_core::lang::{parse_rule_file, render, render_rule_file, to_dnf, DnfOptions};
use curation_core::rank::{rank as rank_docs, Preference};
use curation_core::rule::RuleTree;
use curation_core::summarize::build_summaries;
use curation_core::synth::{generate, SynthConfig, TOPIC_NAMES};
use curation_core::text::TextPipeline;
use curation_service::ServiceConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::inputs::{self, Loaded};
use crate::table::{render_table, RoundRow, RunSummary};
use crate::{AdaptFlags, Failure, Feedback, Sources};

pub const RUN_FILE: &str = "run.json";
pub const FINAL_RULE_FILE: &str = "final.rule";

pub fn round_file(round: u32) -> String {
    format!("round-{round:03}.json")
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes to stdout; a closed pipe (`curate ... | head`) is not an error.
fn say(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(out: Option<&Path>, name: &str, value: &Value) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let p = write_json(dir, name, value)?;
            eprintln!("wrote {}", p.display());
        }
        None => say(&(serde_json::to_string_pretty(value).map_err(Failure::data)? + "\n")),
    }
    Ok(())
}

pub fn ingest(sources: &Sources, out: Option<&Path>, seed: u64) -> Result<(), Failure> {
    let Loaded { corpus, outcome, .. } = inputs::load(sources)?;
    let value = json!({
        "seed": seed,
        "added": outcome.added,
        "skipped": outcome.skipped,
        "stats": outcome.stats,
        "header": corpus.header(),
    });
    emit(out, "ingest.json", &value)
}

fn parse_kinds(spec: Option<&str>) -> Result<Vec<SummaryKind>, Failure> {
    match spec {
        None => Ok(SummaryKind::ALL.to_vec()),
        Some(s) => {
            s.split(',').map(|k| k.parse().map_err(|k| Failure::usage(format!("unknown summary kind `{k}`")))).collect()
        }
    }
}

pub fn summarize(
    sources: &Sources,
    kinds: Option<&str>,
    wedges: usize,
    out: Option<&Path>,
    seed: u64,
) -> Result<(), Failure> {
    let kinds = parse_kinds(kinds)?;
    if wedges == 0 {
        return Err(Failure::usage("--wedges must be at least 1"));
    }
    let l = inputs::load(sources)?;
    let set = build_summaries(&l.corpus, &l.knowledge, &l.pipeline, &kinds, wedges);
    for (kind, why) in &set.errors {
        eprintln!("warning: {kind}: {why}");
    }
    emit(out, "summaries.json", &json!({ "seed": seed, "summaries": set }))
}

pub fn rank(sources: &Sources, preference: &Path, top: usize, out: Option<&Path>, seed: u64) -> Result<(), Failure> {
    if top == 0 {
        return Err(Failure::usage("--top must be at least 1"));
    }
    let text = fs::read_to_string(preference).map_err(|e| Failure::data(format!("{}: {e}", preference.display())))?;
    let pref: Preference =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", preference.display())))?;
    let l = inputs::load(sources)?;
    let items = rank_docs(&pref, &l.corpus, &l.pipeline, top).map_err(Failure::data)?;
    emit(out, "rank.json", &json!({ "seed": seed, "top": top, "items": items }))
}

pub struct RunArgs {
    pub sources: Sources,
    pub rule: PathBuf,
    pub rounds: u32,
    pub feedback: Feedback,
    pub labels: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub seed: Option<u64>,
    pub adapt: AdaptFlags,
    pub out: PathBuf,
}

fn adapt_config(flags: &AdaptFlags, seed: Option<u64>) -> Result<AdaptConfig, Failure> {
    let mut c = match &flags.config {
        Some(p) => AdaptConfig::load(p).map_err(Failure::data)?,
        None => AdaptConfig::default(),
    };
    let named = [
        ("precision_threshold", &flags.precision_threshold),
        ("children_cap", &flags.children_cap),
        ("sample_rate", &flags.sample_rate),
        ("epsilon", &flags.epsilon),
        ("window", &flags.window),
        ("min_path_evidence", &flags.min_path_evidence),
        ("max_depth", &flags.max_depth),
        ("conceptual", &flags.conceptual),
        ("cost_per_verdict", &flags.cost_per_verdict),
        ("prior_alpha", &flags.prior_alpha),
        ("prior_beta", &flags.prior_beta),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            c.set(key, v).map_err(Failure::usage)?;
        }
    }
    for kv in &flags.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k, v).map_err(Failure::usage)?;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate().map_err(Failure::usage)?;
    Ok(c)
}

pub fn run(a: RunArgs) -> Result<(), Failure> {
    let config = adapt_config(&a.adapt, a.seed)?;
    if a.rounds == 0 {
        return Err(Failure::usage("--rounds must be at least 1"));
    }
    let started = Instant::now();
    let src = fs::read_to_string(&a.rule).map_err(|e| Failure::data(format!("{}: {e}", a.rule.display())))?;
    let file = parse_rule_file(&src).map_err(|e| Failure::data(format!("{}: {e}", a.rule.display())))?;
    let rule_id = a.rule.file_stem().and_then(|s| s.to_str()).unwrap_or("rule").to_string();
    let opts = DnfOptions { max_depth: config.max_depth, ..Default::default() };
    let tree = to_dnf(&file.expr, &rule_id, file.tag, config.children_cap, opts)
        .map_err(|e| Failure::data(format!("{}: {e}", a.rule.display())))?;

    let truth = a.labels.as_deref().map(inputs::labels).transpose()?;
    let mut source: Box<dyn FeedbackSource> = match a.feedback {
        Feedback::Oracle => {
            let t = truth.clone().ok_or_else(|| Failure::usage("oracle feedback needs --labels"))?;
            Box::new(OracleSource::new(t))
        }
        Feedback::Scripted => {
            let p = a.verdicts.as_deref().ok_or_else(|| Failure::usage("scripted feedback needs --verdicts"))?;
            let f = fs::File::open(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            Box::new(
                ScriptedSource::parse_jsonl(std::io::BufReader::new(f))
                    .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
            )
        }
    };

    let l = inputs::load(&a.sources)?;
    let env = Env {
        corpus: &l.corpus,
        knowledge: &l.knowledge,
        pipeline: &l.pipeline,
        concepts: &l.registry,
        config: &config,
    };
    let ctx = EvalContext { pipeline: &l.pipeline, concepts: &l.registry };
    CompiledRule::compile(&tree, ctx).map_err(|e| Failure::data(format!("{}: {e}", a.rule.display())))?;

    let evaluate = |rule: &RuleTree| -> Result<Option<Evaluation>, Failure> {
        truth.as_ref().map(|t| evaluate_rule(rule, &env, t)).transpose().map_err(Failure::data)
    };
    let mut state = RuleState::new(tree, &config);
    let initial_rule = render(&state.rule);
    let initial = evaluate(&state.rule)?;
    let mut rows = Vec::new();
    for _ in 0..a.rounds {
        let mut report = state.run_round(&env, source.as_mut()).map_err(Failure::data)?;
        report.evaluation = evaluate(&state.rule)?;
        write_json(&a.out, &round_file(report.round), &report)?;
        let row = RoundRow::from_report(&report);
        eprintln!(
            "round {}: {} annotated, {} verified, estimated precision {}",
            report.round,
            report.items_annotated,
            report.sample_size,
            crate::table::pct(report.estimated_precision)
        );
        rows.push(row);
    }
    fs::write(a.out.join(FINAL_RULE_FILE), render_rule_file(&state.rule))
        .map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    let summary = RunSummary {
        rule_id,
        seed: config.seed,
        feedback: match a.feedback {
            Feedback::Oracle => "oracle".into(),
            Feedback::Scripted => "scripted".into(),
        },
        config: config.clone(),
        corpus_docs: l.corpus.len(),
        corpus_header: l.corpus.header().cloned(),
        initial_rule,
        final_rule: render(&state.rule),
        initial_evaluation: initial,
        total_cost: rows.iter().map(|r| r.cost).sum(),
        rounds: rows,
    };
    write_json(&a.out, RUN_FILE, &summary)?;
    say(&render_table(&summary));
    eprintln!("finished in {:.1}s; artifacts in {}", started.elapsed().as_secs_f64(), a.out.display());
    Ok(())
}

pub fn report(dir: &Path, as_json: bool) -> Result<(), Failure> {
    let path = dir.join(RUN_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if as_json {
        say(&text);
        return Ok(());
    }
    let summary: RunSummary =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    say(&render_table(&summary));
    Ok(())
}

pub fn serve(workspace: Option<PathBuf>, port: Option<u16>) -> Result<(), Failure> {
    let mut config = ServiceConfig::from_env().map_err(Failure::usage)?;
    if let Some(w) = workspace {
        config.workspace = w;
    }
    if let Some(p) = port {
        config.port = p;
    }
    let rt = tokio::runtime::Runtime::new().map_err(Failure::data)?;
    rt.block_on(curation_service::serve(config)).map_err(Failure::data)
}

#[derive(Serialize, Deserialize)]
struct SynthSummary {
    documents: usize,
    tag: String,
    seed_keyword: String,
    seed: u64,
}

pub fn synth(docs: usize, topics: usize, seed: u64, seed_precision: f64, out: &Path) -> Result<(), Failure> {
    if docs == 0 {
        return Err(Failure::usage("--docs must be at least 1"));
    }
    if !(2..=TOPIC_NAMES.len()).contains(&topics) {
        return Err(Failure::usage(format!("--topics must be between 2 and {}", TOPIC_NAMES.len())));
    }
    if !(seed_precision > 0.0 && seed_precision <= 1.0) {
        return Err(Failure::usage("--seed-precision must be in (0, 1]"));
    }
    let cfg = SynthConfig { docs, topics, seed, seed_precision, ..Default::default() };
    let s = generate(&cfg, &TextPipeline::default());
    s.write_to(out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))?;
    let summary =
        SynthSummary { documents: s.documents.len(), tag: s.tag.clone(), seed_keyword: s.seed_keyword.clone(), seed };
    say(&(serde_json::to_string(&summary).map_err(Failure::data)? + "\n"));
    Ok(())
}
