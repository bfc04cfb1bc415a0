//! Ingestion against a local HTTP forge double.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use mrscope_core::ingest::{export_archive, import_archive};
use mrscope_core::ingest::gitlab::{ClientConfig, GitLabClient};
use serde_json::json;
use tiny_http::{Header, Response, Server};

const TOKEN: &str = "glpat-test";
const TOTAL: usize = 60;
const PER_PAGE: usize = 20;

struct Forge {
    url: String,
    hits: Arc<AtomicUsize>,
}

fn query_param<'a>(url: &'a str, key: &str) -> Option<&'a str> {
    url.split_once('?')?
        .1
        .split('&')
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

fn mr(i: usize) -> serde_json::Value {
    json!({
        "id": 5000 + i, "iid": i, "project_id": 42, "title": format!("Change {i}"),
        "description": "body", "state": if i % 3 == 0 { "opened" } else { "merged" },
        "created_at": format!("2024-03-{:02}T10:00:00Z", 1 + i % 28),
        "updated_at": "2024-04-01T00:00:00Z",
        "merged_at": if i % 3 == 0 { serde_json::Value::Null } else { json!(format!("2024-03-{:02}T18:00:00Z", 1 + i % 28)) },
        "source_branch": format!("topic-{i}"), "target_branch": "main", "labels": [],
        "draft": false, "author": {"id": 3, "username": "dev"}, "assignees": [], "reviewers": [{"id": 8}]
    })
}

fn start() -> Forge {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for req in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let token_ok = req
                .headers()
                .iter()
                .any(|h| h.field.equiv("PRIVATE-TOKEN") && h.value.as_str() == TOKEN);
            let target = req.url().to_string();
            let path = target.split('?').next().unwrap().to_string();
            let mut headers: Vec<Header> = Vec::new();
            let (status, body) = if !token_ok {
                (401, json!({"message": "401 Unauthorized"}))
            } else if path == "/api/v4/projects/42" {
                (200, json!({"id": 42, "path_with_namespace": "team/service", "created_at": "2023-01-01T00:00:00Z"}))
            } else if path == "/api/v4/projects/42/merge_requests" {
                let page: usize = query_param(&target, "page").and_then(|p| p.parse().ok()).unwrap_or(1);
                let fresh = query_param(&target, "updated_after").is_none_or(|t| t < "2024-04-01");
                let total = if fresh { TOTAL } else { 0 };
                let pages = total.div_ceil(PER_PAGE);
                let items: Vec<_> = ((page - 1) * PER_PAGE + 1..=(page * PER_PAGE).min(total)).map(mr).collect();
                let next = if page < pages { (page + 1).to_string() } else { String::new() };
                for (k, v) in [("X-Total", total.to_string()), ("X-Total-Pages", pages.to_string()), ("X-Next-Page", next)] {
                    headers.push(Header::from_bytes(k, v).unwrap());
                }
                (200, json!(items))
            } else if path.ends_with("/commits") {
                (200, json!([{"id": format!("sha-{path}"), "message": "work", "author_name": "dev", "committed_date": "2024-03-01T09:00:00Z"}]))
            } else if path.ends_with("/diffs") {
                (200, json!([{"old_path": "src/lib.rs", "new_path": "src/lib.rs", "diff": "@@ -1 +1,2 @@\n-a\n+b\n+c\n"}]))
            } else if path.ends_with("/notes") {
                (200, json!([]))
            } else if path.ends_with("/approvals") {
                (200, json!({"approved_by": []}))
            } else {
                (404, json!({"message": "404 Not Found"}))
            };
            let mut resp = Response::from_string(body.to_string()).with_status_code(status);
            for h in headers {
                resp.add_header(h);
            }
            let _ = req.respond(resp);
        }
    });
    Forge { url, hits }
}

fn client(forge: &Forge, token: &str) -> GitLabClient {
    let mut cfg = ClientConfig::new(forge.url.clone());
    cfg.page_size = PER_PAGE as u32;
    cfg.retry.base_delay = Duration::from_millis(1);
    GitLabClient::connect(cfg, token.to_string())
}

fn fetched_at() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 4, 2, 0, 0, 0).unwrap()
}

#[test]
fn three_pages_become_sixty_records() {
    let forge = start();
    let corpus = client(&forge, TOKEN).fetch_corpus("team", &[42], None, fetched_at()).unwrap();
    assert_eq!(corpus.len(), TOTAL);
    assert_eq!(corpus.records.iter().filter(|r| r.is_merged()).count(), 40);
    assert!(corpus.records.iter().all(|r| r.churn() == 3));
    assert_eq!(corpus.meta.projects[0].path.as_deref(), Some("team/service"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    export_archive(&corpus, &path).unwrap();
    assert_eq!(import_archive(&path).unwrap(), corpus);
}

#[test]
fn nothing_new_since_last_fetch() {
    let forge = start();
    let since = Utc.with_ymd_and_hms(2024, 4, 5, 0, 0, 0).unwrap();
    let corpus = client(&forge, TOKEN).fetch_corpus("team", &[42], Some(since), fetched_at()).unwrap();
    assert!(corpus.is_empty());
    assert_eq!(corpus.meta.projects.len(), 1);
}

#[test]
fn rejected_token_stops_before_any_record() {
    let forge = start();
    let err = client(&forge, "wrong").fetch_corpus("team", &[42], None, fetched_at()).unwrap_err();
    assert_eq!(err.class(), "credential");
    assert!(err.to_string().contains("401"), "{err}");
    // no retries on credential failures
    assert_eq!(forge.hits.load(Ordering::SeqCst), 1);
}
