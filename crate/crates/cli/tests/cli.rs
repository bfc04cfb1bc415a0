use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_mrscope");

fn mrscope(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MRSCOPE_TOKEN")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = mrscope(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Exit code and the error class from the single stderr error line.
fn failure(o: &Output) -> (i32, String) {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().find(|l| l.starts_with("mrscope: error[")).unwrap_or_else(|| panic!("{stderr}"));
    let class = line["mrscope: error[".len()..].split(']').next().unwrap().to_string();
    (o.status.code().unwrap(), class)
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const QUICK: &str = r#"
[impact]
n_boot = 3
seed = 5
[[impact.models]]
kind = "bagged_random_trees"
n_trees = 12
[[impact.models]]
kind = "gradient_boosted_trees"
n_trees = 12
"#;

fn quick_config(dir: &Path) -> PathBuf {
    let p = dir.join("quick.toml");
    fs::write(&p, QUICK).unwrap();
    p
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let commands: &[&[&str]] = &[
        &[],
        &["ingest"],
        &["sample"],
        &["detect"],
        &["annotate"],
        &["annotate", "import"],
        &["annotate", "diff"],
        &["classify"],
        &["features"],
        &["impact"],
        &["report"],
        &["synth"],
    ];
    for cmd in commands {
        let o = Command::new(BIN).args(*cmd).arg("--help").output().unwrap();
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        let file = golden.join(format!("{}.txt", if cmd.is_empty() { "mrscope".into() } else { cmd.join("_") }));
        if update {
            fs::write(&file, &text).unwrap();
        } else {
            let want = fs::read_to_string(&file).unwrap_or_else(|_| panic!("missing {}", file.display()));
            assert_eq!(text, want, "help for {cmd:?} drifted; rerun with UPDATE_GOLDEN=1 after review");
        }
    }
}

#[test]
fn sample_for_known_population() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ok(dir.path(), &["sample", "--population", "6344"]).trim(), "363");
    let template = fs::read_to_string(dir.path().join("annotation_template.csv")).unwrap();
    let mut lines = template.lines();
    assert_eq!(lines.next(), Some("mr_id,url,label,note"));
    assert_eq!(lines.count(), 363);
    let plan: Value = serde_json::from_slice(&fs::read(dir.path().join("sample_plan.json")).unwrap()).unwrap();
    assert_eq!(plan["plan"]["size"], 363);
}

#[test]
fn detection_on_injected_corpus_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--normal", "300", "--deviations", "20", "--seed", "4"]);
    assert_eq!(ok(dir.path(), &["detect"]).trim(), "140 of 440 MRs deviate (31.82%)");

    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let mut expected = std::collections::BTreeMap::new();
    for v in manifest["expected"].as_object().unwrap().values() {
        if let Some(code) = v.as_str() {
            *expected.entry(code.to_string()).or_insert(0u64) += 1;
        }
    }
    let prevalence: Value = serde_json::from_slice(&fs::read(dir.path().join("prevalence.json")).unwrap()).unwrap();
    let reported: std::collections::BTreeMap<String, u64> = prevalence["overall"]["shares"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["code"].as_str().unwrap().to_string(), s["count"].as_u64().unwrap()))
        .collect();
    assert_eq!(reported, expected);
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run_all = |d: &Path| {
        ok(d, &["synth", "--kind", "impact", "--normal", "150", "--deviations", "60", "--seed", "2"]);
        ok(d, &["detect"]);
        ok(d, &["features"]);
        ok(d, &["sample", "--seed", "3"]);
        ok(d, &["--config", cfg, "impact", "--interpretation"]);
        ok(d, &["--config", cfg, "report"]);
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_all(&a);
    let first = files(&a);
    run_all(&a);
    assert_eq!(first, files(&a), "rerun in place changed outputs");
    run_all(&b);
    assert_eq!(first, files(&b), "fresh directory differs");
    let names: Vec<String> = first.iter().map(|(p, _)| p.to_string_lossy().into_owned()).collect();
    for want in ["impact.csv", "impact.md", "interpretation.csv", "report/report.md", "report/categories_overall.svg"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
}

#[test]
fn service_backend_all_normal_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    ok(dir.path(), &["synth", "--kind", "impact", "--normal", "120", "--deviations", "40"]);
    let script = r#"sed -u 's/^{"id":"\([^"]*\)".*/{"id":"\1","label":"NORMAL","score":0.9}/'"#;
    let out = ok(dir.path(), &["classify", "--backend", "service", "--", "sh", "-c", script]);
    assert!(out.starts_with("0 of 160 MRs deviate"), "{out}");
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "impact"]);
    let csv = fs::read_to_string(dir.path().join("impact.csv")).unwrap();
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        for c in ["mse_ratio", "mae_ratio", "sa_ratio", "kendall", "t1", "t3", "t5"] {
            assert_eq!(cells[col(c)], "1", "{c} in {row}");
        }
    }
}

#[test]
fn failing_service_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--normal", "30", "--deviations", "2"]);
    let o = mrscope(dir.path(), &["classify", "--backend", "service", "--", "sh", "-c", "read line; echo '{\"error\":\"boom\"}'"]);
    assert_eq!(failure(&o), (3, "protocol".to_string()));
    assert!(!dir.path().join("verdicts.jsonl").exists());
    assert!(!dir.path().join("prevalence.json").exists());

    let o = mrscope(dir.path(), &["classify", "--backend", "service"]);
    assert_eq!(failure(&o), (2, "config".to_string()));
}

#[test]
fn error_classes_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = mrscope(d, &["detect"]);
    assert_eq!(failure(&o), (3, "io".to_string()));

    fs::write(d.join("bad.toml"), "[rules]\nhuge_comits = 3\n").unwrap();
    let o = mrscope(d, &["--config", d.join("bad.toml").to_str().unwrap(), "detect"]);
    assert_eq!(failure(&o), (2, "config".to_string()));

    let o = mrscope(d, &["impact", "--full", "--n-boot", "3"]);
    assert_eq!(failure(&o), (2, "usage".to_string()));

    let o = mrscope(d, &["ingest", "--host", "http://127.0.0.1:9", "--project", "1", "--token", "secret"]);
    assert_eq!(failure(&o), (2, "usage".to_string()), "tokens are never taken from the command line");

    ok(d, &["synth", "--kind", "impact", "--normal", "40", "--deviations", "20"]);
    ok(d, &["detect"]);
    let o = mrscope(d, &["--config", quick_config(d).to_str().unwrap(), "impact"]);
    assert_eq!(failure(&o), (5, "insufficient_data".to_string()));
    assert!(!d.join("impact.csv").exists());

    fs::write(d.join("corrupt.jsonl"), "{not json\n").unwrap();
    let o = mrscope(d, &["detect", "--corpus", "corrupt.jsonl"]);
    assert_eq!(failure(&o), (3, "parse".to_string()));
}

fn forge_rejecting_everything() -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    thread::spawn(move || {
        for req in server.incoming_requests() {
            let _ = req.respond(tiny_http::Response::from_string("{\"message\":\"401 Unauthorized\"}").with_status_code(401));
        }
    });
    url
}

#[test]
fn rejected_credentials_persist_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let url = forge_rejecting_everything();
    let o = Command::new(BIN)
        .args(["--out", dir.path().to_str().unwrap(), "ingest", "--host", &url, "--project", "3"])
        .env("MRSCOPE_TOKEN", "expired")
        .output()
        .unwrap();
    assert_eq!(failure(&o), (4, "credential".to_string()));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("expired"), "token leaked into the error");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unreachable_forge_is_a_network_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = String::from("[api]\nmax_attempts = 1\n");
    cfg.push_str("host = \"http://127.0.0.1:9\"\nprojects = [1]\n");
    fs::write(dir.path().join("api.toml"), cfg).unwrap();
    let o = Command::new(BIN)
        .args(["--out", dir.path().to_str().unwrap(), "--config"])
        .arg(dir.path().join("api.toml"))
        .arg("ingest")
        .env("MRSCOPE_TOKEN", "t")
        .output()
        .unwrap();
    assert_eq!(failure(&o).0, 4);
    assert!(!dir.path().join("corpus.jsonl").exists());
}

#[test]
fn annotation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("alice.csv"), "mr_id,url,label,note\n1,u,LU,\n2,u,NORMAL,\n3,u,CC,\n4,u,,\n").unwrap();
    fs::write(d.join("bob.csv"), "mr_id,url,label,note\n1,u,LU,\n2,u,CC,\n3,u,CC,\n4,u,EOW,\n").unwrap();
    let out = ok(d, &["annotate", "import", "alice.csv", "bob.csv"]);
    assert!(out.contains("alice: 4 entries (CC=1 LU=1 NORMAL=1 PENDING=1)"), "{out}");
    assert!(d.join("annotations/bob.json").exists());
    let out = ok(d, &["annotate", "diff", "alice.csv", "bob.csv"]);
    assert!(out.starts_with("3 compared, 66.67% agreement"), "{out}");
    let report: Value = serde_json::from_slice(&fs::read(d.join("agreement_alice_bob.json")).unwrap()).unwrap();
    assert_eq!(report["disagreements"], serde_json::json!([2]));
    assert_eq!(report["pending"], serde_json::json!([4]));

    fs::write(d.join("carol.csv"), "mr_id,url,label,note\n1,u,BOGUS,\n").unwrap();
    let o = mrscope(d, &["annotate", "import", "carol.csv"]);
    assert_eq!(failure(&o).0, 3);
}

#[test]
fn report_includes_classifier_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--normal", "40", "--deviations", "3"]);
    ok(d, &["detect"]);
    let mut eval = String::from("method,param,iteration,accuracy,precision,recall,f1\n");
    for i in 0..10 {
        let jitter = i as f64 * 0.001;
        eval.push_str(&format!("fewshot,k=15,{i},{},0.9,0.9,0.9\n", 0.90 + jitter));
        eval.push_str(&format!("encoder_finetune,full,{i},{},0.7,0.7,0.7\n", 0.70 + jitter));
    }
    fs::write(d.join("eval.csv"), eval).unwrap();
    ok(d, &["report", "--eval", "eval.csv"]);
    let summary = fs::read_to_string(d.join("report/eval_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,param,iterations,accuracy,precision,recall,f1,rank");
    assert!(lines.iter().any(|l| l.starts_with("fewshot,k=15,10,") && l.ends_with(",1")), "{summary}");
    assert!(lines.iter().any(|l| l.starts_with("encoder_finetune,full,10,") && l.ends_with(",2")), "{summary}");
    let md = fs::read_to_string(d.join("report/report.md")).unwrap();
    assert!(md.contains("## Classifier configurations"));
    assert!(!md.contains("## Impact"), "no impact.json was produced");
    let svg = fs::read_to_string(d.join("report/deviation_rate.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}
