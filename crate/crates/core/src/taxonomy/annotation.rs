//! Manual annotation files (`mr_id,url,label,note`) and inter-annotator
//! agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::Category;
use crate::error::{Error, Result};
use crate::ingest::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "String")]
pub enum Label {
    Normal,
    Deviation(Category),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("NORMAL"),
            Label::Deviation(c) => f.write_str(c.code()),
        }
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.to_string()
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NORMAL" => Ok(Label::Normal),
            other => other.parse().map(Label::Deviation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationEntry {
    pub mr_id: u64,
    pub url: String,
    /// `None` while the MR is not annotated yet.
    pub label: Option<Label>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationSet {
    pub annotator: String,
    pub entries: Vec<AnnotationEntry>,
}

impl AnnotationSet {
    pub fn ids(&self) -> BTreeSet<u64> {
        self.entries.iter().map(|e| e.mr_id).collect()
    }
}

pub fn read_annotations<R: Read>(annotator: &str, input: R) -> Result<AnnotationSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["mr_id", "url", "label", "note"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            id: None,
            msg: format!("expected header {}, got {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let mr_id: u64 = row[0].parse().map_err(|e| Error::Parse {
            line,
            id: None,
            msg: format!("mr_id {:?}: {e}", &row[0]),
        })?;
        if !seen.insert(mr_id) {
            return Err(Error::Parse {
                line,
                id: Some(mr_id),
                msg: "duplicate mr_id".into(),
            });
        }
        let label = match &row[2] {
            "" => None,
            token => Some(token.parse::<Label>().map_err(|_| Error::Parse {
                line,
                id: Some(mr_id),
                msg: format!("unknown label {token:?}"),
            })?),
        };
        entries.push(AnnotationEntry {
            mr_id,
            url: row[1].to_string(),
            label,
            note: Some(row[3].to_string()).filter(|n| !n.is_empty()),
        });
    }
    Ok(AnnotationSet {
        annotator: annotator.to_string(),
        entries,
    })
}

/// Annotator id defaults to the file stem.
pub fn import_annotations(path: &Path) -> Result<AnnotationSet> {
    let annotator = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_annotations(&annotator, File::open(path)?)
}

/// Empty-label template rows for the sampled ids.
pub fn write_annotation_template<W: Write>(corpus: &Corpus, ids: &[u64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mr_id", "url", "label", "note"])?;
    for id in ids {
        let url = corpus.get(*id).map(|r| corpus.mr_url(r)).unwrap_or_default();
        w.write_record([id.to_string(), url, String::new(), String::new()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// MRs labeled by both annotators.
    pub compared: usize,
    pub matches: usize,
    /// `matches / compared`, in percent.
    pub agreement_pct: f64,
    /// Cohen's kappa over the compared MRs; `None` when undefined.
    pub kappa: Option<f64>,
    /// `(label_a, label_b) -> count`.
    #[serde(serialize_with = "confusion_rows")]
    pub confusion: BTreeMap<(String, String), usize>,
    pub disagreements: Vec<u64>,
    /// MRs unlabeled by at least one annotator.
    pub pending: Vec<u64>,
}

fn confusion_rows<S: serde::Serializer>(m: &BTreeMap<(String, String), usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for ((a, b), n) in m {
        seq.serialize_element(&(a, b, n))?;
    }
    seq.end()
}

pub fn diff_annotations(a: &AnnotationSet, b: &AnnotationSet) -> Result<AgreementReport> {
    if a.ids() != b.ids() {
        let only_a = a.ids().difference(&b.ids()).count();
        let only_b = b.ids().difference(&a.ids()).count();
        return Err(Error::domain(format!(
            "annotation sets cover different MRs ({only_a} only in {}, {only_b} only in {})",
            a.annotator, b.annotator
        )));
    }
    let b_by_id: BTreeMap<u64, Option<Label>> = b.entries.iter().map(|e| (e.mr_id, e.label)).collect();
    let mut pairs = Vec::new();
    let mut pending = Vec::new();
    for e in &a.entries {
        match (e.label, b_by_id[&e.mr_id]) {
            (Some(x), Some(y)) => pairs.push((e.mr_id, x, y)),
            _ => pending.push(e.mr_id),
        }
    }
    pairs.sort_by_key(|p| p.0);
    pending.sort_unstable();

    let compared = pairs.len();
    let mut confusion = BTreeMap::new();
    let mut disagreements = Vec::new();
    for &(id, x, y) in &pairs {
        *confusion.entry((x.to_string(), y.to_string())).or_insert(0) += 1;
        if x != y {
            disagreements.push(id);
        }
    }
    let matches = compared - disagreements.len();
    let kappa = (compared > 0).then(|| {
        let n = compared as f64;
        let mut marg_a: BTreeMap<Label, f64> = BTreeMap::new();
        let mut marg_b: BTreeMap<Label, f64> = BTreeMap::new();
        for &(_, x, y) in &pairs {
            *marg_a.entry(x).or_default() += 1.0;
            *marg_b.entry(y).or_default() += 1.0;
        }
        let pe: f64 = marg_a
            .iter()
            .map(|(l, ca)| ca * marg_b.get(l).copied().unwrap_or(0.0))
            .sum::<f64>()
            / (n * n);
        let po = matches as f64 / n;
        (pe < 1.0).then(|| (po - pe) / (1.0 - pe))
    });
    Ok(AgreementReport {
        compared,
        matches,
        agreement_pct: if compared == 0 { 0.0 } else { 100.0 * matches as f64 / compared as f64 },
        kappa: kappa.flatten(),
        confusion,
        disagreements,
        pending,
    })
}
