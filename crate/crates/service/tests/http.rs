use std::fs;
use std::path::{Path, PathBuf};

use coverdx_service::{spawn, RunningService, Service, ServiceConfig, ServiceError, SessionView};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tempfile::TempDir;

const KB3: &str = include_str!("../../../kb/kb3.json");

struct Dirs {
    _root: TempDir,
    kb: PathBuf,
    store: PathBuf,
}

fn dirs() -> Dirs {
    let root = tempfile::tempdir().unwrap();
    let kb = root.path().join("kb");
    let store = root.path().join("sessions");
    fs::create_dir_all(&kb).unwrap();
    fs::write(kb.join("kb3.json"), KB3).unwrap();
    Dirs { _root: root, kb, store }
}

fn config(d: &Dirs) -> ServiceConfig {
    ServiceConfig {
        port: 0,
        kb_dir: d.kb.clone(),
        store: d.store.clone(),
        max_sessions: 16,
        ..ServiceConfig::default()
    }
}

async fn start(d: &Dirs) -> RunningService {
    spawn(config(d)).await.unwrap()
}

async fn create(client: &Client, svc: &RunningService) -> SessionView {
    let res = client
        .post(format!("{}/sessions", svc.base_url()))
        .json(&json!({"kb": "kb3"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::CREATED);
    res.json().await.unwrap()
}

async fn answer(client: &Client, svc: &RunningService, id: &str, symptom: &str, finding: &str) -> reqwest::Response {
    client
        .post(format!("{}/sessions/{id}/answers", svc.base_url()))
        .json(&json!({"symptom": symptom, "finding": finding}))
        .send()
        .await
        .unwrap()
}

async fn get_json(client: &Client, url: String) -> (StatusCode, Value) {
    let res = client.get(url).send().await.unwrap();
    let status = res.status();
    (status, res.json().await.unwrap())
}

fn top(view: &Value) -> Vec<String> {
    view["candidates"][0]["faults"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_owned())
        .collect()
}

#[tokio::test]
async fn create_answer_and_conclude() {
    let d = dirs();
    let svc = start(&d).await;
    let client = Client::new();

    let created = create(&client, &svc).await;
    assert_eq!(created.status.to_string(), "in-progress");
    let q = created.next_question.as_ref().expect("first question");
    assert_eq!(q.question, format!("Is {} present?", q.symptom));

    let res = answer(&client, &svc, &created.id.to_string(), "s4", "present").await;
    assert_eq!(res.status(), StatusCode::OK);
    let view: Value = res.json().await.unwrap();
    assert_eq!(view["status"], "concluded");
    assert_eq!(view["stopping_reason"], "threshold-met");
    assert_eq!(top(&view), ["f3"]);
    assert_eq!(view["next_question"], Value::Null);
    assert_eq!(view["transcript"], json!([{"symptom": "s4", "finding": "present"}]));

    let (status, summary) = get_json(&client, format!("{}/sessions/{}/summary", svc.base_url(), created.id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["explanations"][0]["faults"], json!(["f3"]));
    assert_eq!(summary["uncovered_symptoms"], json!([]));
    assert!(summary["note"].as_str().unwrap().contains("normalized"));

    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn error_statuses() {
    let d = dirs();
    let svc = start(&d).await;
    let client = Client::new();
    let id = create(&client, &svc).await.id.to_string();

    assert_eq!(answer(&client, &svc, &id, "s2", "present").await.status(), StatusCode::OK);
    let dup = answer(&client, &svc, &id, "s2", "absent").await;
    assert_eq!(dup.status(), StatusCode::CONFLICT);
    let body: Value = dup.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("already observed"));

    assert_eq!(
        answer(&client, &svc, &id, "s9", "present").await.status(),
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let missing = uuid::Uuid::new_v4().to_string();
    assert_eq!(answer(&client, &svc, &missing, "s1", "present").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(answer(&client, &svc, "not-a-uuid", "s1", "present").await.status(), StatusCode::NOT_FOUND);

    let bad = client
        .post(format!("{}/sessions/{id}/answers", svc.base_url()))
        .header("content-type", "application/json")
        .body("{\"symptom\": \"s1\", \"finding\": \"maybe\"}")
        .send()
        .await
        .unwrap();
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);

    let unknown_kb = client
        .post(format!("{}/sessions", svc.base_url()))
        .json(&json!({"kb": "nope"}))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown_kb.status(), StatusCode::NOT_FOUND);

    let bad_config = client
        .post(format!("{}/sessions", svc.base_url()))
        .json(&json!({"kb": "kb3", "config": {"conclusion_threshold": 1.5}}))
        .send()
        .await
        .unwrap();
    assert_eq!(bad_config.status(), StatusCode::UNPROCESSABLE_ENTITY);

    // Answering a concluded session is a conflict too.
    let done = create(&client, &svc).await.id.to_string();
    assert_eq!(answer(&client, &svc, &done, "s4", "present").await.status(), StatusCode::OK);
    assert_eq!(answer(&client, &svc, &done, "s1", "absent").await.status(), StatusCode::CONFLICT);

    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn what_if_and_reads_do_not_mutate() {
    let d = dirs();
    let svc = start(&d).await;
    let client = Client::new();
    let id = create(&client, &svc).await.id.to_string();
    let url = format!("{}/sessions/{id}", svc.base_url());

    let (_, before) = get_json(&client, url.clone()).await;
    let preview: Value = client
        .post(format!("{url}/whatif"))
        .json(&json!({"symptom": "s4", "finding": "present"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(preview["status"], "concluded");
    assert_eq!(top(&preview), ["f3"]);
    let _ = get_json(&client, format!("{url}/summary")).await;
    let (_, after) = get_json(&client, url.clone()).await;
    assert_eq!(before, after);
    assert_eq!(after["transcript"], json!([]));

    // The previewed answer is still open for a real submission.
    assert_eq!(answer(&client, &svc, &id, "s4", "present").await.status(), StatusCode::OK);
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn kb_upload_and_fetch() {
    let d = dirs();
    let svc = start(&d).await;
    let client = Client::new();
    let base = svc.base_url();

    let (status, doc) = get_json(&client, format!("{base}/kb/kb3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["faults"].as_array().unwrap().len(), 3);

    let mut broken = doc.clone();
    broken["links"][0]["causal_strength"] = json!(1.5);
    broken["links"][1]["fault"] = json!("f9");
    let res = client.put(format!("{base}/kb/broken")).json(&broken).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = res.json().await.unwrap();
    assert_eq!(body["violations"].as_array().unwrap().len(), 2);
    assert_eq!(get_json(&client, format!("{base}/kb/broken")).await.0, StatusCode::NOT_FOUND);

    let mut copy = doc.clone();
    copy["meta"]["name"] = json!("copy");
    let res = client.put(format!("{base}/kb/copy")).json(&copy).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert!(d.kb.join("copy.json").is_file());
    let (status, fetched) = get_json(&client, format!("{base}/kb/copy")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, copy);

    let res = client
        .post(format!("{base}/sessions"))
        .json(&json!({"kb": "copy", "config": {"mode": "multiple-fault"}}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::CREATED);

    let res = client.put(format!("{base}/kb/..bad")).json(&copy).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn session_limit_counts_open_sessions() {
    let d = dirs();
    let svc = spawn(ServiceConfig {
        max_sessions: 2,
        ..config(&d)
    })
    .await
    .unwrap();
    let client = Client::new();
    let a = create(&client, &svc).await.id.to_string();
    create(&client, &svc).await;
    let res = client
        .post(format!("{}/sessions", svc.base_url()))
        .json(&json!({"kb": "kb3"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::SERVICE_UNAVAILABLE);

    // Concluding one session frees its slot.
    assert_eq!(answer(&client, &svc, &a, "s4", "present").await.status(), StatusCode::OK);
    create(&client, &svc).await;
    svc.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_to_one_session_are_serialized() {
    let d = dirs();
    let svc = start(&d).await;
    let client = Client::new();
    let id = create(&client, &svc).await.id.to_string();

    let url = format!("{}/sessions/{id}/answers", svc.base_url());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (client, url) = (client.clone(), url.clone());
            tokio::spawn(async move {
                client
                    .post(url)
                    .json(&json!({"symptom": "s2", "finding": "present"}))
                    .send()
                    .await
                    .unwrap()
                    .status()
            })
        })
        .collect();
    let mut statuses = Vec::new();
    for h in handles {
        statuses.push(h.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1, "{statuses:?}");
    assert!(statuses.iter().all(|s| *s == StatusCode::OK || *s == StatusCode::CONFLICT));

    let (_, view) = get_json(&client, format!("{}/sessions/{id}", svc.base_url())).await;
    assert_eq!(view["transcript"].as_array().unwrap().len(), 1);
    svc.shutdown().await.unwrap();
}

fn session_logs(store: &Path) -> Vec<PathBuf> {
    let mut logs: Vec<PathBuf> = fs::read_dir(store)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    logs.sort();
    logs
}

#[tokio::test]
async fn restart_replays_sessions() {
    let d = dirs();
    let client = Client::new();
    let svc = start(&d).await;
    let open = create(&client, &svc).await.id.to_string();
    answer(&client, &svc, &open, "s2", "present").await;
    answer(&client, &svc, &open, "s1", "absent").await;
    let done = create(&client, &svc).await.id.to_string();
    answer(&client, &svc, &done, "s4", "present").await;

    let (_, open_before) = get_json(&client, format!("{}/sessions/{open}", svc.base_url())).await;
    let (_, done_before) = get_json(&client, format!("{}/sessions/{done}", svc.base_url())).await;
    svc.kill().await;

    // The KB file changing on disk does not affect replay: the log carries
    // its own snapshot.
    let mut doc: Value = serde_json::from_str(KB3).unwrap();
    doc["links"][0]["causal_strength"] = json!(0.2);
    fs::write(d.kb.join("kb3.json"), doc.to_string()).unwrap();

    let svc = start(&d).await;
    assert_eq!(svc.service().session_count(), 2);
    let (_, open_after) = get_json(&client, format!("{}/sessions/{open}", svc.base_url())).await;
    let (_, done_after) = get_json(&client, format!("{}/sessions/{done}", svc.base_url())).await;
    assert_eq!(open_before, open_after);
    assert_eq!(done_before, done_after);

    // The replayed session keeps accepting answers and logging them.
    let res = answer(&client, &svc, &open, "s3", "present").await;
    assert_eq!(res.status(), StatusCode::OK);
    let (_, open_later) = get_json(&client, format!("{}/sessions/{open}", svc.base_url())).await;
    svc.kill().await;
    let svc = start(&d).await;
    let (_, replayed) = get_json(&client, format!("{}/sessions/{open}", svc.base_url())).await;
    assert_eq!(open_later, replayed);
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn torn_trailing_record_is_dropped() {
    let d = dirs();
    let client = Client::new();
    let svc = start(&d).await;
    let id = create(&client, &svc).await.id.to_string();
    answer(&client, &svc, &id, "s2", "present").await;
    let (_, before) = get_json(&client, format!("{}/sessions/{id}", svc.base_url())).await;
    svc.kill().await;

    let log = session_logs(&d.store).pop().unwrap();
    let mut text = fs::read_to_string(&log).unwrap();
    let clean_len = text.len();
    text.push_str("{\"event\":\"answer\",\"symp");
    fs::write(&log, text).unwrap();

    let svc = start(&d).await;
    let (_, after) = get_json(&client, format!("{}/sessions/{id}", svc.base_url())).await;
    assert_eq!(before, after);
    assert_eq!(fs::metadata(&log).unwrap().len() as usize, clean_len);
    svc.shutdown().await.unwrap();
}

#[test]
fn startup_refuses_invalid_kb() {
    let d = dirs();
    let mut doc: Value = serde_json::from_str(KB3).unwrap();
    doc["faults"][0]["prior"] = json!(2.0);
    fs::write(d.kb.join("bad.json"), doc.to_string()).unwrap();
    let err = Service::open(config(&d)).unwrap_err();
    assert!(matches!(err, ServiceError::InvalidKb { ref name, .. } if name == "bad"), "{err}");
    assert_eq!(err.violations().len(), 1);
}

#[test]
fn startup_needs_a_kb() {
    let d = dirs();
    fs::remove_file(d.kb.join("kb3.json")).unwrap();
    assert!(matches!(Service::open(config(&d)), Err(ServiceError::NoKnowledgeBase(_))));
}

#[test]
fn corrupt_log_refuses_startup() {
    let d = dirs();
    fs::create_dir_all(&d.store).unwrap();
    fs::write(d.store.join("x.jsonl"), "{\"event\":\"answer\",\"symptom\":\"s1\",\"finding\":\"present\"}\n").unwrap();
    assert!(matches!(Service::open(config(&d)), Err(ServiceError::Recovery { .. })));
}

#[test]
fn kb_dir_env_override() {
    let d = dirs();
    std::env::set_var(coverdx_service::KB_DIR_ENV, &d.kb);
    let cfg = ServiceConfig::default().with_env_overrides();
    std::env::remove_var(coverdx_service::KB_DIR_ENV);
    assert_eq!(cfg.kb_dir, d.kb);
}
