use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use curation_core::synth::{generate, SynthConfig};
use curation_core::text::TextPipeline;
use curation_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn synth_workspace(dir: &Path, docs: usize) -> String {
    let s = generate(&SynthConfig { docs, seed: 1, ..Default::default() }, &TextPipeline::default());
    s.write_to(dir).unwrap();
    s.seed_rule()
}

fn app_at(dir: &Path) -> Router {
    let config = ServiceConfig { workspace: dir.to_path_buf(), ..Default::default() };
    router(AppState::open(&config).unwrap())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req =
        Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap();
    send(app, req).await
}

fn code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

async fn create_rule(app: &Router, rule: &str, config: Value) -> String {
    let (s, v) = post(app, "/v1/rules", json!({ "rule": rule, "config": config })).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_done(app: &Router, id: &str) -> Vec<Value> {
    for _ in 0..600 {
        let (_, v) = get(app, &format!("/v1/rules/{id}/events")).await;
        if v["done"] == json!(true) {
            return v["events"].as_array().unwrap().clone();
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("round did not finish");
}

#[tokio::test]
async fn unknown_routes_and_resources_are_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let (s, v) = get(&app, "/v1/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&v), "no_route");
    let (s, v) = get(&app, "/v1/rules/missing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&v), "unknown_rule");
    assert!(v["error"]["message"].as_str().unwrap().contains("missing"));
    let (s, v) = post(&app, "/v1/rules", json!({ "nope": 1 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(code(&v), "bad_json");
}

#[tokio::test]
async fn corpus_upload_raw_and_multipart() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let jsonl =
        "{\"id\":\"a\",\"text\":\"hospital funding cut\"}\n{\"id\":\"b\",\"text\":\"football final tonight\"}\n";
    let req = Request::post("/v1/corpora").body(Body::from(jsonl)).unwrap();
    let (s, v) = send(&app, req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["added"], 2);

    // the same records again are skipped, a changed one conflicts
    let req = Request::post("/v1/corpora").body(Body::from(jsonl)).unwrap();
    let (_, v) = send(&app, req).await;
    assert_eq!((v["added"].as_u64(), v["skipped"].as_u64()), (Some(0), Some(2)));
    let req = Request::post("/v1/corpora").body(Body::from("{\"id\":\"a\",\"text\":\"other\"}\n")).unwrap();
    let (s, v) = send(&app, req).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(code(&v), "document_conflict");
    let req = Request::post("/v1/corpora").body(Body::from("{\"id\":\"c\"}\n")).unwrap();
    let (s, v) = send(&app, req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(code(&v), "malformed_jsonl");

    let boundary = "XBOUNDARY";
    let mut body = String::new();
    for (name, content) in [
        ("corpus", "{\"id\":\"c\",\"text\":\"clinic budget rise\"}\n"),
        ("labels", "{\"id\":\"c\",\"tag\":\"Health\",\"relevant\":true}\n"),
        ("hypernyms", "clinic\tcare\nhospital\tcare\n"),
    ] {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n{content}\r\n"
        ));
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    let req = Request::post("/v1/corpora")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (s, v) = send(&app, req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!((v["added"].as_u64(), v["labels"].as_u64()), (Some(1), Some(1)));
    assert!(dir.path().join("lexicon/hypernyms.tsv").is_file());

    // the uploaded lexicon makes the topic concept usable in rules
    let id = create_rule(&app, "tag: Health\nTweet.Topic.InGroup('care')", json!({})).await;
    let (_, v) = get(&app, &format!("/v1/rules/{id}")).await;
    assert_eq!(v["paths"].as_array().unwrap().len(), 1);

    // everything survives a restart
    drop(app);
    let app = app_at(dir.path());
    let (s, v) = get(&app, &format!("/v1/rules/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["tag"], "Health");
    let (_, v) = post(&app, "/v1/rank", json!({ "concepts": [{ "label": "care", "members": ["clinic"] }] })).await;
    assert_eq!(v["items"][0]["doc_id"], "c");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reads_during_ingestion_get_503() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let s = generate(&SynthConfig { docs: 40_000, seed: 2, ..Default::default() }, &TextPipeline::default());
    let upload = s.corpus_jsonl();
    let uploader = {
        let app = app.clone();
        tokio::spawn(async move { send(&app, Request::post("/v1/corpora").body(Body::from(upload)).unwrap()).await })
    };
    let rank = json!({ "concepts": [{ "label": "k", "members": [s.seed_keyword.clone()] }] });
    let mut refused = 0;
    while !uploader.is_finished() {
        let (status, v) = post(&app, "/v1/rank", rank.clone()).await;
        if status == StatusCode::SERVICE_UNAVAILABLE {
            assert_eq!(code(&v), "ingesting");
            refused += 1;
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    let (status, v) = uploader.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["added"], 40_000);
    assert!(refused > 0, "no request saw the ingestion window");
    let (status, _) = post(&app, "/v1/rank", rank).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn rule_creation_contract() {
    let dir = tempfile::tempdir().unwrap();
    let seed = synth_workspace(dir.path(), 600);
    let app = app_at(dir.path());
    let body = json!({ "rule": seed, "id": "budget" });
    let (s, v) = post(&app, "/v1/rules", body.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["id"], "budget");
    assert_eq!(v["tag"], "Budget");
    assert_eq!(v["paths"].as_array().unwrap().len(), 1);
    assert!(v["paths"][0]["features"].as_str().unwrap().contains("Keyword.Contains"));

    // repeating the creation is idempotent, redefining the id is a conflict
    let (s, again) = post(&app, "/v1/rules", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again, v);
    let (s, v) =
        post(&app, "/v1/rules", json!({ "rule": "tag: Budget\nTweet.Keyword.Contains('x')", "id": "budget" })).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "rule_exists"));

    let (s, v) = post(&app, "/v1/rules", json!({ "rule": "tag: Budget\nTweet.Keyword.Contains(" })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_rule"));
    let (s, v) = post(&app, "/v1/rules", json!({ "rule": "tag: Budget\nTweet.Topic.InGroup('nowhere')" })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "unknown_concept"));
    let (s, v) = post(&app, "/v1/rules", json!({ "rule": seed, "config": { "sample_rate": 2.0 } })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_config"));
    let (s, v) = post(&app, "/v1/rules", json!({ "rule": seed, "config": { "bogus": 1 } })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_config"));

    let (s, v) = get(&app, "/v1/rules/budget").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["round"], 0);
    assert_eq!(v["in_flight"], Value::Null);
    let (_, v) = get(&app, "/v1/rules").await;
    assert_eq!(v["rules"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn human_round_through_the_labeling_queue() {
    let dir = tempfile::tempdir().unwrap();
    let seed = synth_workspace(dir.path(), 2000);
    let app = app_at(dir.path());
    let id = create_rule(&app, &seed, json!({ "sample_rate": 0.05, "seed": 3 })).await;

    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds?feedback=human"), json!(null)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["status"], "open");
    let n = v["tasks"].as_u64().unwrap() as usize;
    assert!(n > 10);

    // one round at a time
    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds?feedback=oracle"), json!(null)).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "round_in_progress"));

    let (_, v) = get(&app, &format!("/v1/tasks?rule={id}&round=1")).await;
    assert_eq!(v["total"], n);
    let tasks = v["tasks"].as_array().unwrap().clone();
    let (_, page) = get(&app, "/v1/tasks?round=1&page=1").await;
    assert_eq!(page["tasks"].as_array().unwrap().len(), 10);
    assert_eq!(page["tasks"][0], tasks[0]);
    assert_eq!(tasks[0]["rule_id"], id.as_str());
    assert_eq!(tasks[0]["tag"], "Budget");

    let first = tasks[0]["task_id"].as_str().unwrap();
    let (s, v) = post(&app, "/v1/verdicts", json!({ "task_id": first, "worker_id": "w1", "answer": "relevant" })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["results"][0]["outcome"], "stored");
    // a repeated click by the same worker changes nothing
    let (s, v) =
        post(&app, "/v1/verdicts", json!({ "task_id": first, "worker_id": "w1", "answer": "irrelevant" })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["results"][0]["outcome"], "duplicate");
    let (_, v) = get(&app, &format!("/v1/tasks?rule={id}&status=resolved")).await;
    assert_eq!(v["total"], 1);
    let (_, v) = get(&app, &format!("/v1/rules/{id}")).await;
    assert_eq!(v["in_flight"]["resolved"], 1);

    let (s, v) =
        post(&app, "/v1/verdicts", json!({ "task_id": format!("{id}/r1:nope"), "worker_id": "w1", "answer": "yes" }))
            .await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "unknown_task"));
    // an unknown task anywhere in a batch rejects the batch
    let batch = json!([
        { "task_id": tasks[1]["task_id"], "worker_id": "w1", "answer": "no" },
        { "task_id": "zzz/r1:x", "worker_id": "w1", "answer": "no" },
    ]);
    let (s, _) = post(&app, "/v1/verdicts", batch).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, v) = get(&app, &format!("/v1/tasks?rule={id}&status=resolved")).await;
    assert_eq!(v["total"], 1);

    // answer the rest from the labels file
    let labels = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    let relevant: std::collections::BTreeMap<String, bool> = labels
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .map(|l| (l["id"].as_str().unwrap().to_string(), l["relevant"].as_bool().unwrap()))
        .collect();
    let rest: Vec<Value> = tasks[1..]
        .iter()
        .map(|t| {
            let answer = if relevant[t["doc_id"].as_str().unwrap()] { "yes" } else { "no" };
            json!({ "task_id": t["task_id"], "worker_id": "w1", "answer": answer })
        })
        .collect();
    let (s, v) = post(&app, "/v1/verdicts", json!({ "verdicts": rest })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["completed"][0]["round"], 1);

    let (_, report) = get(&app, &format!("/v1/rules/{id}/report?round=1")).await;
    assert_eq!(report["sample_size"], n);
    assert_eq!(
        report["verdicts"]["relevant"].as_u64().unwrap() + report["verdicts"]["irrelevant"].as_u64().unwrap(),
        n as u64
    );
    assert_eq!(v["completed"][0]["estimated_precision"], report["estimated_precision"]);
    // the API serves exactly the persisted report
    let on_disk: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join(format!("rules/{id}/reports/round-001.json"))).unwrap(),
    )
    .unwrap();
    assert_eq!(report, on_disk);

    // late duplicates stay harmless, late new verdicts are refused
    let (s, v) = post(&app, "/v1/verdicts", json!({ "task_id": first, "worker_id": "w1", "answer": "no" })).await;
    assert_eq!((s, v["results"][0]["outcome"].as_str()), (StatusCode::OK, Some("duplicate")));
    let (s, v) = post(&app, "/v1/verdicts", json!({ "task_id": first, "worker_id": "w2", "answer": "no" })).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "round_closed"));

    let (_, v) = get(&app, &format!("/v1/rules/{id}/events")).await;
    assert_eq!(v["done"], true);
    let kinds: Vec<&str> = v["events"].as_array().unwrap().iter().map(|e| e["type"].as_str().unwrap()).collect();
    assert_eq!(kinds.first(), Some(&"round_started"));
    assert_eq!(kinds[1], "sample_issued");
    assert_eq!(&kinds[kinds.len() - 2..], &["adapted", "report_ready"]);
    assert!(kinds[2..kinds.len() - 2].iter().all(|k| *k == "verdicts"));
    for (i, e) in v["events"].as_array().unwrap().iter().enumerate() {
        assert_eq!(e["index"], i);
    }
    // resuming from an index replays the tail
    let (_, tail) = get(&app, &format!("/v1/rules/{id}/events?from=2")).await;
    assert_eq!(tail["events"].as_array().unwrap()[..], v["events"].as_array().unwrap()[2..]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_round_requests_get_one_202_and_one_409() {
    let dir = tempfile::tempdir().unwrap();
    let seed = synth_workspace(dir.path(), 1500);
    let app = app_at(dir.path());
    let id = create_rule(&app, &seed, json!({})).await;
    let uri = format!("/v1/rules/{id}/rounds?feedback=human");
    let (a, b) = tokio::join!(post(&app, &uri, json!(null)), post(&app, &uri, json!(null)));
    let mut statuses = [a.0, b.0];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::ACCEPTED, StatusCode::CONFLICT]);
}

#[tokio::test]
async fn oracle_rounds_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let seed = synth_workspace(dir.path(), 3000);
    let app = app_at(dir.path());
    let (_, v) = get(&app, "/v1/rules/x/events").await;
    assert_eq!(code(&v), "unknown_rule");
    let id = create_rule(&app, &seed, json!({ "sample_rate": 0.05, "seed": 9 })).await;

    // an idle rule has an empty, finished stream
    let (_, v) = get(&app, &format!("/v1/rules/{id}/events")).await;
    assert_eq!((v["events"].as_array().unwrap().len(), v["done"].as_bool()), (0, Some(true)));

    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds?feedback=oracle"), json!(null)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!((v["round"].as_u64(), v["status"].as_str()), (Some(1), Some("running")));
    let events = wait_done(&app, &id).await;
    assert_eq!(events.last().unwrap()["type"], "report_ready");

    // a retried request naming a finished round is refused
    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds?feedback=oracle&round=1"), json!(null)).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "stale_round"));
    let (s, report2) =
        post(&app, &format!("/v1/rules/{id}/rounds?feedback=oracle&round=2&wait=true"), json!(null)).await;
    assert_eq!(s, StatusCode::OK, "{report2}");
    assert_eq!(report2["round"], 2);

    let (_, all) = get(&app, &format!("/v1/rules/{id}/report")).await;
    assert_eq!(all["round"], 2);
    assert_eq!(all["reports"][1], report2);
    let (_, r1) = get(&app, &format!("/v1/rules/{id}/report?round=1")).await;
    assert_eq!(all["reports"][0], r1);
    assert!(r1["estimated_precision"].as_f64().unwrap() > 0.3);
    let (s, v) = get(&app, &format!("/v1/rules/{id}/report?round=7")).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "unknown_round"));

    let (_, rule) = get(&app, &format!("/v1/rules/{id}")).await;
    assert_eq!(rule["round"], 2);
    assert_eq!(rule["rule"], report2["rule_after"]);

    // oracle tasks and verdicts are visible in the queue too
    let (_, v) = get(&app, &format!("/v1/tasks?rule={id}&round=1&status=pending")).await;
    assert_eq!(v["total"], 0);
    let (_, v) = get(&app, &format!("/v1/tasks?rule={id}&round=1")).await;
    assert_eq!(v["total"], r1["sample_size"]);
}

#[tokio::test]
async fn oracle_needs_labels() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path(), 300);
    std::fs::remove_file(dir.path().join("labels.jsonl")).unwrap();
    let app = app_at(dir.path());
    let id = create_rule(&app, "tag: Budget\nTweet.Keyword.Contains('a')", json!({})).await;
    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds"), json!(null)).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "labels_missing"));
    let (s, v) = post(&app, &format!("/v1/rules/{id}/rounds?feedback=crowd"), json!(null)).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_feedback"));
}

#[tokio::test]
async fn summaries_and_ranking() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path(), 1500);
    let app = app_at(dir.path());

    let (s, v) = get(&app, "/v1/summaries?kind=topic").await;
    assert_eq!(s, StatusCode::OK);
    let topics = v["kinds"]["topic"].as_array().unwrap();
    assert_eq!(topics.len(), 18);
    assert!(v["kinds"].get("keyword").is_none());
    let (_, v) = get(&app, "/v1/summaries?kind=person").await;
    assert!(v["errors"]["person"].is_string());
    let (s, v) = get(&app, "/v1/summaries?kind=bogus").await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "unknown_kind"));
    let (_, v) = get(&app, "/v1/summaries?kind=keyword&wedges=5").await;
    assert_eq!(v["kinds"]["keyword"].as_array().unwrap().len(), 5);

    let a = topics[0]["label"].as_str().unwrap();
    let b = topics[1]["label"].as_str().unwrap();
    // members come from the summaries when omitted
    let (s, v) =
        post(&app, "/v1/rank", json!({ "concepts": [{ "label": a, "weight": 2.0 }, { "label": b }], "top": 5 })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 5);
    for w in items.windows(2) {
        assert!(w[0]["score"].as_f64() >= w[1]["score"].as_f64());
    }
    for it in items {
        let sum: f64 = it["contributions"].as_array().unwrap().iter().map(|c| c["score"].as_f64().unwrap()).sum();
        assert!((sum - it["score"].as_f64().unwrap()).abs() < 1e-9);
    }
    let (s, v) = post(&app, "/v1/rank", json!({ "concepts": [] })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_preference"));
    let (s, v) =
        post(&app, "/v1/rank", json!({ "concepts": [{ "label": "x", "members": ["y"], "weight": -1 }] })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "invalid_preference"));
    let (s, v) = post(&app, "/v1/rank", json!({ "concepts": [{ "label": "nothing-like-this" }] })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "unknown_concept"));

    let (s, v) = post(&app, "/v1/concept-rule", json!({ "expr": format!("[{a} AND {b}] OR {a}"), "top": 1000 })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, only_a) = post(&app, "/v1/concept-rule", json!({ "expr": a, "top": 1000 })).await;
    assert_eq!(v["total"], only_a["total"]);
    let (s, v) = post(&app, "/v1/concept-rule", json!({ "expr": "[A AND" })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "concept_rule_syntax"));
    let (s, v) = post(&app, "/v1/concept-rule", json!({ "expr": "Mystery" })).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "unknown_concept"));

    // summary concepts become addressable in rules
    let rule = format!("tag: Budget\nTweet.Topic.InGroup('{a}')");
    let (s, _) = post(&app, "/v1/rules", json!({ "rule": rule })).await;
    assert_eq!(s, StatusCode::CREATED);
}

#[tokio::test]
async fn static_token_and_cors() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        workspace: dir.path().to_path_buf(),
        token: Some("sesame".into()),
        ui_origin: Some("http://localhost:5173".into()),
        ..Default::default()
    };
    let app = router(AppState::open(&config).unwrap());
    let (s, v) = get(&app, "/v1/health").await;
    assert_eq!((s, code(&v)), (StatusCode::UNAUTHORIZED, "unauthorized"));
    let req = Request::get("/v1/health")
        .header(header::AUTHORIZATION, "Bearer sesame")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let preflight = Request::builder()
        .method("OPTIONS")
        .uri("/v1/rank")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(preflight).await.unwrap();
    assert!(resp.status().is_success());
}
