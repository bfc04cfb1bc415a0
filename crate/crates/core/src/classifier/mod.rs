//! Client side of the external text-classifier service, plus import of its
//! offline evaluation records.
//!
//! The service reads one JSON object per line, `{"id": .., "text": ..}`,
//! and answers each with `{"id": .., "label": .., "score": ..}` or
//! `{"id": .., "error": ..}` in any order. Labels are `NORMAL`,
//! `DEVIATION` or a category code.

mod eval;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::{Corpus, MergeRequestRecord};
use crate::metrics::file_type;
use crate::taxonomy::{Category, DeviationVerdict, RuleMatch};

pub use eval::{read_eval_records, summarize_eval, ConfigurationSummary, EvalRecord, EVAL_HEADER};

pub const TEXT_SEPARATOR: &str = " [SEP] ";

fn churn_bucket(churn: u64) -> &'static str {
    match churn {
        0 => "none",
        1..=10 => "tiny",
        11..=100 => "small",
        101..=1000 => "medium",
        1001..=10_000 => "large",
        _ => "huge",
    }
}

/// Title, description and compact metadata tags, in that order.
pub fn serialize_mr_text(record: &MergeRequestRecord) -> String {
    let types: BTreeSet<String> = record.file_changes.iter().map(|f| file_type(&f.path)).collect();
    let tags = format!(
        "files:{} churn:{} source:{} target:{}",
        types.into_iter().collect::<Vec<_>>().join(","),
        churn_bucket(record.churn()),
        record.source_branch,
        record.target_branch
    );
    [record.title.as_str(), record.description.as_str(), tags.as_str()].join(TEXT_SEPARATOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictedLabel {
    Normal,
    Deviation,
    Category(Category),
}

impl PredictedLabel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "NORMAL" => Ok(PredictedLabel::Normal),
            "DEVIATION" => Ok(PredictedLabel::Deviation),
            code => code
                .parse()
                .map(PredictedLabel::Category)
                .map_err(|_| Error::Protocol(format!("unknown label {code:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub id: String,
    pub label: PredictedLabel,
    pub score: f64,
}

/// Request key for an MR: `project_id:mr_id`.
pub fn request_id(record: &MergeRequestRecord) -> String {
    format!("{}:{}", record.project_id, record.id)
}

fn parse_request_id(id: &str) -> Option<(u64, u64)> {
    let (p, m) = id.split_once(':')?;
    Some((p.parse().ok()?, m.parse().ok()?))
}

pub fn requests_for(corpus: &Corpus) -> Vec<ClassifyRequest> {
    corpus
        .records
        .iter()
        .map(|r| ClassifyRequest { id: request_id(r), text: serialize_mr_text(r) })
        .collect()
}

enum Line {
    Answer(ClassifyResponse),
    Failure { id: Option<String>, error: String },
}

fn parse_line(line: &str) -> Result<Line> {
    let v: Value = serde_json::from_str(line).map_err(|e| Error::Protocol(format!("unparseable response {line:?}: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Protocol(format!("response is not an object: {line:?}")))?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Null) | None => None,
        Some(other) => Some(other.to_string()),
    };
    if let Some(err) = obj.get("error") {
        return Ok(Line::Failure {
            id,
            error: err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string()),
        });
    }
    let id = id.ok_or_else(|| Error::Protocol(format!("response without id: {line:?}")))?;
    let label = obj
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Protocol(format!("response {id} has no label")))?;
    let score = obj
        .get("score")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Protocol(format!("response {id} has no numeric score")))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Protocol(format!("response {id} has score {score} outside [0,1]")));
    }
    Ok(Line::Answer(ClassifyResponse { id, label: PredictedLabel::parse(label)?, score }))
}

/// Pipeline `requests` into `to_service` while collecting answers from
/// `from_service`. Responses come back in request order. Any error record,
/// unknown or duplicated id, or missing answer fails the whole batch.
pub fn classify_stream<W, R>(requests: &[ClassifyRequest], to_service: W, from_service: R) -> Result<Vec<ClassifyResponse>>
where
    W: Write + Send,
    R: BufRead,
{
    classify_stream_with_abort(requests, to_service, from_service, || {})
}

/// As [`classify_stream`]; `abort` runs before waiting on the request
/// writer when reading fails, so a stalled service can be torn down.
fn classify_stream_with_abort<W, R>(
    requests: &[ClassifyRequest],
    to_service: W,
    from_service: R,
    abort: impl FnOnce(),
) -> Result<Vec<ClassifyResponse>>
where
    W: Write + Send,
    R: BufRead,
{
    let position: HashMap<&str, usize> = requests.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    if position.len() != requests.len() {
        return Err(Error::Protocol("duplicate request ids".into()));
    }
    std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<()> {
            let mut w = BufWriter::new(to_service);
            for r in requests {
                serde_json::to_writer(&mut w, r).map_err(|e| Error::Protocol(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            Ok(())
        });
        let read = collect_answers(requests.len(), &position, from_service);
        if read.is_err() {
            abort();
        }
        let written = writer.join().map_err(|_| Error::Protocol("request writer panicked".into()))?;
        let answers = read?;
        if let Err(e) = written {
            return Err(Error::Protocol(format!("service stopped reading requests: {e}")));
        }
        Ok(answers)
    })
}

fn collect_answers<R: BufRead>(
    expected: usize,
    position: &HashMap<&str, usize>,
    from_service: R,
) -> Result<Vec<ClassifyResponse>> {
    let mut answers: Vec<Option<ClassifyResponse>> = vec![None; expected];
    let mut failures = Vec::new();
    let mut received = 0;
    for line in from_service.lines() {
        if received == expected {
            break;
        }
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line)? {
            Line::Failure { id, error } => failures.push(format!("{}: {error}", id.as_deref().unwrap_or("?"))),
            Line::Answer(a) => {
                let i = *position
                    .get(a.id.as_str())
                    .ok_or_else(|| Error::Protocol(format!("response for unknown id {}", a.id)))?;
                if answers[i].is_some() {
                    return Err(Error::Protocol(format!("duplicate response for id {}", a.id)));
                }
                answers[i] = Some(a);
            }
        }
        received += 1;
    }
    if !failures.is_empty() {
        return Err(Error::Protocol(format!(
            "{} request(s) failed, first: {}",
            failures.len(),
            failures[0]
        )));
    }
    let missing = answers.iter().filter(|a| a.is_none()).count();
    if missing > 0 {
        return Err(Error::Protocol(format!("{missing} request(s) received no response")));
    }
    Ok(answers.into_iter().flatten().collect())
}

/// Spawn `program args..` and stream the requests through its stdio.
pub fn classify_with_process(program: &str, args: &[String], requests: &[ClassifyRequest]) -> Result<Vec<ClassifyResponse>> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Protocol(format!("cannot start classifier {program:?}: {e}")))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
    let result = classify_stream_with_abort(requests, stdin, stdout, || {
        let _ = child.kill();
    });
    let status = child.wait()?;
    let responses = result?;
    if !status.success() {
        return Err(Error::Protocol(format!("classifier exited with {status}")));
    }
    Ok(responses)
}

/// Turn service answers into verdicts. A bare `DEVIATION` label flags the
/// MR without naming a category.
pub fn responses_to_verdicts(responses: &[ClassifyResponse]) -> Result<Vec<DeviationVerdict>> {
    responses
        .iter()
        .map(|r| {
            let (project_id, mr_id) = parse_request_id(&r.id)
                .ok_or_else(|| Error::Protocol(format!("malformed response id {}", r.id)))?;
            Ok(match r.label {
                PredictedLabel::Normal => DeviationVerdict::normal(project_id, mr_id),
                PredictedLabel::Deviation => DeviationVerdict {
                    is_deviation: true,
                    ..DeviationVerdict::normal(project_id, mr_id)
                },
                PredictedLabel::Category(category) => DeviationVerdict::from_matches(
                    project_id,
                    mr_id,
                    vec![RuleMatch { category, evidence: format!("classifier score {:.3}", r.score) }],
                ),
            })
        })
        .collect()
}
