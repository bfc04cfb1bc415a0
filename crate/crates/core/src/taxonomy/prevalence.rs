use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Category, DeviationVerdict};
use crate::error::{Error, Result};
use crate::ingest::Corpus;

/// Bucket for deviations flagged without a category (binary classifiers).
pub const UNCATEGORIZED: &str = "UNCATEGORIZED";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub code: String,
    pub count: usize,
    /// Percent of this project's deviations.
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectPrevalence {
    /// `None` for the corpus-wide row.
    pub project_id: Option<u64>,
    pub total: usize,
    pub deviations: usize,
    pub deviation_pct: f64,
    pub shares: Vec<CategoryShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceReport {
    pub group: String,
    pub projects: Vec<ProjectPrevalence>,
    pub overall: ProjectPrevalence,
}

fn summarize(project_id: Option<u64>, verdicts: &[&DeviationVerdict]) -> ProjectPrevalence {
    let mut counts: BTreeMap<Option<Category>, usize> = BTreeMap::new();
    let mut deviations = 0;
    for v in verdicts.iter().filter(|v| v.is_deviation) {
        deviations += 1;
        *counts.entry(v.primary).or_default() += 1;
    }
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let mut shares: Vec<CategoryShare> = Category::PRIORITY
        .iter()
        .filter_map(|c| counts.get(&Some(*c)).map(|&n| (c.code().to_string(), n)))
        .chain(counts.get(&None).map(|&n| (UNCATEGORIZED.to_string(), n)))
        .map(|(code, count)| CategoryShare {
            code,
            count,
            pct: pct(count, deviations),
        })
        .collect();
    shares.retain(|s| s.count > 0);
    ProjectPrevalence {
        project_id,
        total: verdicts.len(),
        deviations,
        deviation_pct: pct(deviations, verdicts.len()),
        shares,
    }
}

pub fn prevalence_report(verdicts: &[DeviationVerdict], corpus: &Corpus) -> Result<PrevalenceReport> {
    let record_keys: BTreeSet<(u64, u64)> = corpus.records.iter().map(|r| (r.project_id, r.id)).collect();
    let mut verdict_keys = BTreeSet::new();
    for v in verdicts {
        if !verdict_keys.insert((v.project_id, v.mr_id)) {
            return Err(Error::Consistency(format!("two verdicts for MR {}", v.mr_id)));
        }
    }
    if record_keys != verdict_keys {
        let missing = record_keys.difference(&verdict_keys).count();
        let extra = verdict_keys.difference(&record_keys).count();
        return Err(Error::Consistency(format!(
            "verdicts do not match corpus: {missing} records without verdict, {extra} verdicts without record"
        )));
    }
    let mut by_project: BTreeMap<u64, Vec<&DeviationVerdict>> = BTreeMap::new();
    for v in verdicts {
        by_project.entry(v.project_id).or_default().push(v);
    }
    Ok(PrevalenceReport {
        group: corpus.meta.group.clone(),
        projects: by_project
            .iter()
            .map(|(pid, vs)| summarize(Some(*pid), vs))
            .collect(),
        overall: summarize(None, &verdicts.iter().collect::<Vec<_>>()),
    })
}
