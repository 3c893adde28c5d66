use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curation_core::adapt::RoundReport;
use curation_core::eval::{CompiledRule, EvalContext};
use curation_core::feedback::{LabelTask, SubmitOutcome, Verdict};
use curation_core::knowledge::SummaryKind;
use curation_core::lang::{parse_rule_file, render, to_dnf, DnfOptions};
use curation_core::rank::{eval_concept_rule, parse_concept_rule, rank, Preference, RankedItem, WeightedConcept};
use curation_core::summarize::{build_summaries, SummarySet, DEFAULT_WEDGES};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::ApiError;
use crate::rules::{path_views, FeedbackMode, PathView, RuleMeta, RuleSlot};
use crate::store::{write_json, Data, Upload, LEXICON_PARTS, RULES_DIR, SUMMARIES_FILE};
use crate::AppState;

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

const MAX_UPLOAD: usize = 512 * 1024 * 1024;
const DEFAULT_TOP: usize = 20;
pub const TASKS_PER_PAGE: usize = curation_core::feedback::TASKS_PER_PAGE;

pub fn router(state: Shared) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any)
        .allow_origin(match state.ui_origin.as_deref().map(HeaderValue::from_str) {
            Some(Ok(origin)) => AllowOrigin::exact(origin),
            _ => AllowOrigin::any(),
        });
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/corpora", post(post_corpora))
        .route("/v1/summaries", get(get_summaries))
        .route("/v1/rules", post(post_rules).get(list_rules))
        .route("/v1/rules/{id}", get(get_rule))
        .route("/v1/rules/{id}/rounds", post(post_round))
        .route("/v1/rules/{id}/report", get(get_report))
        .route("/v1/rules/{id}/events", get(get_events))
        .route("/v1/tasks", get(get_tasks))
        .route("/v1/verdicts", post(post_verdicts))
        .route("/v1/rank", post(post_rank))
        .route("/v1/concept-rule", post(post_concept_rule))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .layer(cors)
        .with_state(state)
}

async fn auth(State(st): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        if req.method() != Method::OPTIONS {
            let given = req
                .headers()
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "));
            if given != Some(token.as_str()) {
                return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                    .into_response();
            }
        }
    }
    next.run(req).await
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_json", e.to_string()))
}

fn query<T: DeserializeOwned>(uri: &Uri) -> ApiResult<T> {
    Query::<T>::try_from_uri(uri).map(|q| q.0).map_err(|e| ApiError::bad_request("bad_query", e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(st): State<Shared>) -> Json<Value> {
    let ingesting = st.ingesting.load(Ordering::Acquire);
    Json(json!({ "status": if ingesting { "ingesting" } else { "ok" } }))
}

// ---- corpora

/// Clears the ingestion flag even if the worker panics.
struct IngestGuard(Shared);

impl Drop for IngestGuard {
    fn drop(&mut self) {
        self.0.ingesting.store(false, Ordering::Release);
    }
}

async fn read_upload(req: Request) -> ApiResult<Upload> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        let body =
            Bytes::from_request(req, &()).await.map_err(|e| ApiError::bad_request("bad_upload", e.body_text()))?;
        return Ok(Upload { corpus: Some(body.to_vec()), ..Default::default() });
    }
    let mut form =
        Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request("bad_upload", e.body_text()))?;
    let mut up = Upload::default();
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request("bad_upload", e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request("bad_upload", e.body_text()))?.to_vec();
        match name.as_str() {
            "corpus" | "file" => up.corpus = Some(bytes),
            "labels" => up.labels = Some(bytes),
            other => match LEXICON_PARTS.iter().find(|(part, _)| *part == other) {
                Some((_, file)) => up.lexicons.push((file.to_string(), bytes)),
                None => {
                    return Err(ApiError::bad_request(
                        "bad_upload",
                        format!("unexpected part `{other}`; expected corpus, labels, hypernyms, gazetteer, categories or embeddings"),
                    ))
                }
            },
        }
    }
    if up.corpus.is_none() && up.labels.is_none() && up.lexicons.is_empty() {
        return Err(ApiError::bad_request("bad_upload", "the upload has no parts"));
    }
    Ok(up)
}

async fn post_corpora(State(st): State<Shared>, req: Request) -> ApiResult<Response> {
    let upload = read_upload(req).await?;
    if st.ingesting.swap(true, Ordering::AcqRel) {
        return Err(ApiError::ingesting());
    }
    let guard = IngestGuard(st.clone());
    let report = blocking(move || {
        let _guard = guard;
        let mut data = st.write();
        data.ingest(upload)
    })
    .await?;
    Ok((StatusCode::OK, Json(report)).into_response())
}

// ---- summaries

#[derive(Deserialize)]
struct SummaryQuery {
    kind: Option<String>,
    wedges: Option<usize>,
}

fn parse_kinds(spec: Option<&str>) -> ApiResult<Vec<SummaryKind>> {
    match spec.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(SummaryKind::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(|k| {
                k.parse::<SummaryKind>()
                    .map_err(|k| ApiError::bad_request("unknown_kind", format!("unknown summary kind `{k}`")))
            })
            .collect(),
    }
}

fn filter_kinds(set: &SummarySet, kinds: &[SummaryKind]) -> SummarySet {
    SummarySet {
        wedge_count: set.wedge_count,
        kinds: set.kinds.iter().filter(|(k, _)| kinds.contains(k)).map(|(k, v)| (*k, v.clone())).collect(),
        errors: set.errors.iter().filter(|(k, _)| kinds.contains(k)).map(|(k, v)| (*k, v.clone())).collect(),
    }
}

/// The cached default summaries, built on first use. Building registers the
/// summary concepts so rules can address them.
fn default_summaries(st: &AppState) -> ApiResult<SummarySet> {
    if let Some(s) = &st.read()?.summaries {
        return Ok(s.clone());
    }
    if st.ingesting.load(Ordering::Acquire) {
        return Err(ApiError::ingesting());
    }
    let mut data = st.write();
    if let Some(s) = &data.summaries {
        return Ok(s.clone());
    }
    let set = build_summaries(&data.corpus, &data.knowledge, &data.pipeline, &SummaryKind::ALL, DEFAULT_WEDGES);
    write_json(&data.root.join(SUMMARIES_FILE), &set)?;
    data.summaries = Some(set.clone());
    data.rebuild_registry();
    Ok(set)
}

async fn get_summaries(State(st): State<Shared>, uri: Uri) -> ApiResult<Json<SummarySet>> {
    let q: SummaryQuery = query(&uri)?;
    let kinds = parse_kinds(q.kind.as_deref())?;
    let wedges = q.wedges.unwrap_or(DEFAULT_WEDGES);
    if wedges == 0 {
        return Err(ApiError::bad_request("bad_query", "wedges must be at least 1"));
    }
    blocking(move || {
        if wedges == DEFAULT_WEDGES {
            return Ok(Json(filter_kinds(&default_summaries(&st)?, &kinds)));
        }
        let data = st.read()?;
        Ok(Json(build_summaries(&data.corpus, &data.knowledge, &data.pipeline, &kinds, wedges)))
    })
    .await
}

// ---- rules

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRequest {
    /// Rule file text: `tag: <label>` line, then the expression.
    rule: String,
    id: Option<String>,
    #[serde(default)]
    config: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct RuleCreated {
    id: String,
    tag: String,
    rule: String,
    paths: Vec<PathView>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn post_rules(State(st): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: RuleRequest = json_body(&body)?;
    blocking(move || {
        let data = st.read()?;
        let mut config = data.defaults.clone();
        for (k, v) in &req.config {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            config.set(k, &v)?;
        }
        config.validate()?;
        let file = parse_rule_file(&req.rule)?;

        let mut rules = st.rules();
        let id = match &req.id {
            Some(id) if !valid_id(id) => {
                return Err(ApiError::bad_request("bad_rule_id", "rule ids are 1 to 64 letters, digits, `-` or `_`"))
            }
            Some(id) => id.clone(),
            None => (1..).map(|n| format!("rule-{n}")).find(|c| !rules.contains_key(c)).expect("ids available"),
        };
        if let Some(existing) = rules.get(&id) {
            // repeating a creation is harmless, redefining an id is not
            if existing.meta.source == req.rule && existing.meta.config == config {
                let view = existing.view();
                let created = RuleCreated { id, tag: view.tag, rule: view.rule, paths: view.paths };
                return Ok((StatusCode::OK, Json(created)).into_response());
            }
            return Err(ApiError::conflict(
                "rule_exists",
                format!("rule `{id}` already exists with a different definition"),
            ));
        }
        let opts = DnfOptions { max_depth: config.max_depth, ..Default::default() };
        let tree = to_dnf(&file.expr, &id, file.tag, config.children_cap, opts)?;
        let ctx = EvalContext { pipeline: &data.pipeline, concepts: &data.registry };
        CompiledRule::compile(&tree, ctx)?;
        let created =
            RuleCreated { id: id.clone(), tag: tree.tag.to_string(), rule: render(&tree), paths: path_views(&tree) };
        let meta = RuleMeta { id: id.clone(), source: req.rule, config };
        let slot = RuleSlot::create(data.root.join(RULES_DIR).join(&id), meta, tree)?;
        rules.insert(id, Arc::new(slot));
        Ok((StatusCode::CREATED, Json(created)).into_response())
    })
    .await
}

async fn list_rules(State(st): State<Shared>) -> Json<Value> {
    let slots: Vec<Arc<RuleSlot>> = st.rules().values().cloned().collect();
    let views: Vec<_> = slots.iter().map(|s| s.view()).collect();
    Json(json!({ "rules": views }))
}

async fn get_rule(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(st.slot(&id)?.view()).into_response())
}

// ---- rounds

#[derive(Deserialize)]
struct RoundQuery {
    feedback: Option<String>,
    /// The round the caller expects to start; guards retried requests.
    round: Option<u32>,
    /// Answer once an oracle round has finished, with its report.
    #[serde(default)]
    wait: bool,
}

#[derive(Serialize)]
struct RoundAccepted {
    rule_id: String,
    round: u32,
    feedback: FeedbackMode,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<usize>,
    events: String,
}

async fn post_round(State(st): State<Shared>, Path(id): Path<String>, uri: Uri) -> ApiResult<Response> {
    let q: RoundQuery = query(&uri)?;
    let mode: FeedbackMode = q.feedback.as_deref().unwrap_or("oracle").parse()?;
    let slot = st.slot(&id)?;
    if st.ingesting.load(Ordering::Acquire) {
        return Err(ApiError::ingesting());
    }
    if mode == FeedbackMode::Oracle && st.read_wait().truth.is_none() {
        return Err(ApiError::bad_request("labels_missing", "oracle feedback needs labels in the workspace"));
    }
    let from = slot.events(0).0.len();
    let round = slot.start_round(mode, q.round)?;
    let accepted = |status, tasks| RoundAccepted {
        rule_id: id.clone(),
        round,
        feedback: mode,
        status,
        tasks,
        events: format!("/v1/rules/{id}/events?from={from}"),
    };
    match mode {
        FeedbackMode::Oracle => {
            let (st2, slot2) = (st.clone(), slot.clone());
            let work = tokio::task::spawn_blocking(move || {
                let data = st2.read_wait();
                let out = slot2.run_oracle(&data, round);
                if let Err(e) = &out {
                    slot2.fail_round(round, e);
                }
                out
            });
            if q.wait {
                let report = work.await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
                return Ok((StatusCode::OK, Json(report)).into_response());
            }
            Ok((StatusCode::ACCEPTED, Json(accepted("running", None))).into_response())
        }
        FeedbackMode::Human => {
            let slot2 = slot.clone();
            let out = blocking(move || {
                let data = st.read_wait();
                let out = slot2.open_human(&data, round);
                if let Err(e) = &out {
                    slot2.fail_round(round, e);
                }
                out
            })
            .await?;
            let body = match out {
                Some(_) => accepted("completed", Some(0)),
                None => {
                    let view = slot.view();
                    accepted("open", view.in_flight.map(|f| f.tasks))
                }
            };
            Ok((StatusCode::ACCEPTED, Json(body)).into_response())
        }
    }
}

#[derive(Deserialize)]
struct ReportQuery {
    round: Option<u32>,
}

#[derive(Serialize)]
struct ReportView {
    rule_id: String,
    round: u32,
    reports: Vec<RoundReport>,
}

async fn get_report(State(st): State<Shared>, Path(id): Path<String>, uri: Uri) -> ApiResult<Response> {
    let q: ReportQuery = query(&uri)?;
    let slot = st.slot(&id)?;
    let reports = slot.reports();
    if let Some(r) = q.round {
        let report = reports
            .into_iter()
            .find(|x| x.round == r)
            .ok_or_else(|| ApiError::not_found("unknown_round", format!("rule `{id}` has no report for round {r}")))?;
        return Ok(Json(report).into_response());
    }
    let view = ReportView { rule_id: id, round: reports.last().map_or(0, |r| r.round), reports };
    Ok(Json(view).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from: usize,
}

async fn get_events(State(st): State<Shared>, Path(id): Path<String>, uri: Uri) -> ApiResult<Json<Value>> {
    let q: EventsQuery = query(&uri)?;
    let (events, done) = st.slot(&id)?.events(q.from);
    let next = q.from + events.len();
    Ok(Json(json!({ "events": events, "next": next, "done": done })))
}

// ---- labeling

/// API task ids carry the rule: `<rule id>/<task id>`.
fn qualified(rule: &str, task: &str) -> String {
    format!("{rule}/{task}")
}

fn split_task_id(id: &str) -> ApiResult<(&str, &str)> {
    id.split_once('/')
        .filter(|(r, t)| !r.is_empty() && !t.is_empty())
        .ok_or_else(|| ApiError::not_found("unknown_task", format!("unknown task `{id}`")))
}

#[derive(Deserialize)]
struct TaskQuery {
    round: Option<u32>,
    rule: Option<String>,
    /// `pending`, `resolved` or `all` (default).
    status: Option<String>,
    /// 1-based page of `TASKS_PER_PAGE` tasks; all tasks when absent.
    page: Option<usize>,
}

#[derive(Serialize)]
struct TaskView {
    #[serde(flatten)]
    task: LabelTask,
    rule_id: String,
    resolved: bool,
}

async fn get_tasks(State(st): State<Shared>, uri: Uri) -> ApiResult<Json<Value>> {
    let q: TaskQuery = query(&uri)?;
    let status = q.status.as_deref().unwrap_or("all");
    if !matches!(status, "all" | "pending" | "resolved") {
        return Err(ApiError::bad_request("bad_query", "status must be pending, resolved or all"));
    }
    let slots: Vec<Arc<RuleSlot>> = match &q.rule {
        Some(id) => vec![st.slot(id)?],
        None => st.rules().values().cloned().collect(),
    };
    let mut out = Vec::new();
    for slot in slots {
        let (tasks, resolved) = slot.tasks();
        let mut tasks: Vec<LabelTask> = tasks.into_iter().filter(|t| q.round.is_none_or(|r| t.round == r)).collect();
        tasks.sort_by(|a, b| a.round.cmp(&b.round).then_with(|| a.doc_id.cmp(&b.doc_id)));
        for mut task in tasks {
            let done = resolved.contains(&task.task_id);
            if (status == "pending" && done) || (status == "resolved" && !done) {
                continue;
            }
            task.task_id = qualified(&slot.meta.id, &task.task_id);
            out.push(TaskView { task, rule_id: slot.meta.id.clone(), resolved: done });
        }
    }
    let total = out.len();
    let page = match q.page {
        Some(0) => return Err(ApiError::bad_request("bad_query", "pages start at 1")),
        Some(p) => {
            out = out.into_iter().skip((p - 1) * TASKS_PER_PAGE).take(TASKS_PER_PAGE).collect();
            Some(p)
        }
        None => None,
    };
    Ok(Json(json!({ "tasks": out, "total": total, "page": page, "per_page": TASKS_PER_PAGE })))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VerdictBody {
    Wrapped { verdicts: Vec<Verdict> },
    Many(Vec<Verdict>),
    One(Verdict),
}

#[derive(Serialize)]
struct VerdictResult {
    task_id: String,
    outcome: SubmitOutcome,
}

#[derive(Serialize)]
struct CompletedRound {
    rule_id: String,
    round: u32,
    estimated_precision: Option<f64>,
}

async fn post_verdicts(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let verdicts = match json_body::<VerdictBody>(&body)? {
        VerdictBody::Wrapped { verdicts } | VerdictBody::Many(verdicts) => verdicts,
        VerdictBody::One(v) => vec![v],
    };
    if verdicts.is_empty() {
        return Err(ApiError::bad_request("bad_json", "no verdicts given"));
    }
    blocking(move || {
        let data = st.read()?;
        // check everything first so a bad verdict rejects the whole request
        let mut by_rule: BTreeMap<String, (Arc<RuleSlot>, Vec<Verdict>)> = BTreeMap::new();
        let mut order = Vec::with_capacity(verdicts.len());
        for v in verdicts {
            if v.worker_id.trim().is_empty() {
                return Err(ApiError::bad_request("bad_json", "worker_id must not be empty"));
            }
            let (rule, task) = split_task_id(&v.task_id)?;
            let slot = st
                .slot(rule)
                .map_err(|_| ApiError::not_found("unknown_task", format!("unknown task `{}`", v.task_id)))?;
            let local = Verdict { task_id: task.to_string(), ..v.clone() };
            slot.check_verdict(&local)?;
            order.push(v.task_id.clone());
            by_rule.entry(rule.to_string()).or_insert_with(|| (slot, Vec::new())).1.push(local);
        }
        let mut outcomes: BTreeMap<String, Vec<SubmitOutcome>> = BTreeMap::new();
        let mut completed = Vec::new();
        for (rule, (slot, vs)) in by_rule {
            let (out, report) = slot.submit(&data, vs)?;
            outcomes.insert(rule.clone(), out);
            if let Some(r) = report {
                completed.push(CompletedRound {
                    rule_id: rule,
                    round: r.round,
                    estimated_precision: r.estimated_precision,
                });
            }
        }
        let mut taken: BTreeMap<String, usize> = BTreeMap::new();
        let results: Vec<VerdictResult> = order
            .into_iter()
            .map(|task_id| {
                let rule = split_task_id(&task_id).expect("checked").0.to_string();
                let i = taken.entry(rule.clone()).or_default();
                let outcome = outcomes[&rule][*i];
                *i += 1;
                VerdictResult { task_id, outcome }
            })
            .collect();
        Ok(Json(json!({ "results": results, "completed": completed })))
    })
    .await
}

// ---- ranking

/// A concept in a ranking request. Members may be omitted to use those of
/// the summary concept with the same label.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptSpec {
    label: String,
    members: Option<Vec<String>>,
    #[serde(default = "unit_weight")]
    weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

fn summary_members(set: &SummarySet, label: &str) -> Option<Vec<String>> {
    let key = label.trim().to_lowercase();
    set.kinds.values().flatten().find(|c| c.label.to_lowercase() == key).map(|c| c.members.clone())
}

fn resolve_concepts(st: &AppState, specs: Vec<ConceptSpec>) -> ApiResult<Vec<WeightedConcept>> {
    let mut summaries = None;
    let mut out = Vec::with_capacity(specs.len());
    for s in specs {
        let members = match s.members {
            Some(m) => m,
            None => {
                if summaries.is_none() {
                    summaries = Some(default_summaries(st)?);
                }
                summary_members(summaries.as_ref().expect("loaded"), &s.label).ok_or_else(|| {
                    ApiError::bad_request(
                        "unknown_concept",
                        format!("no summary concept `{}`; give its members", s.label),
                    )
                })?
            }
        };
        out.push(WeightedConcept { label: s.label, members, weight: s.weight });
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankRequest {
    concepts: Vec<ConceptSpec>,
    top: Option<usize>,
}

fn top_n(top: Option<usize>) -> ApiResult<usize> {
    match top.unwrap_or(DEFAULT_TOP) {
        0 => Err(ApiError::bad_request("bad_json", "top must be at least 1")),
        n => Ok(n),
    }
}

fn ranked(items: Vec<RankedItem>) -> Json<Value> {
    Json(json!({ "total": items.len(), "items": items }))
}

async fn post_rank(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RankRequest = json_body(&body)?;
    let top = top_n(req.top)?;
    blocking(move || {
        let pref = Preference { concepts: resolve_concepts(&st, req.concepts)? };
        let data: std::sync::RwLockReadGuard<'_, Data> = st.read()?;
        Ok(ranked(rank(&pref, &data.corpus, &data.pipeline, top)?))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptRuleRequest {
    expr: String,
    #[serde(default)]
    concepts: Vec<ConceptSpec>,
    top: Option<usize>,
}

async fn post_concept_rule(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ConceptRuleRequest = json_body(&body)?;
    let top = top_n(req.top)?;
    let expr = parse_concept_rule(&req.expr)?;
    blocking(move || {
        let mut specs = req.concepts;
        // names the request does not define come from the summaries
        for name in expr.names() {
            if !specs.iter().any(|s| s.label.eq_ignore_ascii_case(name)) {
                specs.push(ConceptSpec { label: name.to_string(), members: None, weight: 1.0 });
            }
        }
        let concepts = resolve_concepts(&st, specs)?;
        let data = st.read()?;
        Ok(ranked(eval_concept_rule(&expr, &concepts, &data.corpus, &data.pipeline, top)?))
    })
    .await
}
