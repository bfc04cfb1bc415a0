//! Predictors of review completion time, restricted to information that
//! exists when the MR is created.
//!
//! "Prior" below always means created strictly before the focal MR, and
//! events of prior MRs only count once they happened before that instant.
//! The focal MR contributes only its creation-time state: its description,
//! diff stats, assignees and the commits pushed up to creation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hours_between;
use crate::error::Result;
use crate::ingest::{Corpus, MergeRequestRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionFeatureVector {
    pub delta_time: f64,
    pub associated_sprint: u64,
    pub n_committers: usize,
    pub has_assignee: bool,
    pub n_authored_commits: usize,
    pub n_committed_commits: usize,
    pub change_churn: u64,
    pub additions: u64,
    pub deletions: u64,
    pub title_length: usize,
    pub description_length: usize,
    pub is_hashtag: bool,
    pub is_at_tag: bool,
    pub source_branch_open_mrs: usize,
    pub source_branch_avg_approval_hours: f64,
    pub target_branch_open_mrs: usize,
    pub target_branch_avg_approval_hours: f64,
    pub n_major_contributors: usize,
    pub n_minor_contributors: usize,
    pub n_mrs_without_discussion: usize,
    pub n_self_approved_mrs: usize,
    pub n_open_mrs_history: usize,
    pub avg_historical_approval_hours: f64,
    pub historical_entropy: f64,
    pub historical_mr_size: f64,
    pub n_initial_files: usize,
}

pub const COMPLETION_FIELDS: [&str; 26] = [
    "delta_time",
    "associated_sprint",
    "n_committers",
    "has_assignee",
    "n_authored_commits",
    "n_committed_commits",
    "change_churn",
    "additions",
    "deletions",
    "title_length",
    "description_length",
    "is_hashtag",
    "is_at_tag",
    "source_branch_open_mrs",
    "source_branch_avg_approval_hours",
    "target_branch_open_mrs",
    "target_branch_avg_approval_hours",
    "n_major_contributors",
    "n_minor_contributors",
    "n_mrs_without_discussion",
    "n_self_approved_mrs",
    "n_open_mrs_history",
    "avg_historical_approval_hours",
    "historical_entropy",
    "historical_mr_size",
    "n_initial_files",
];

impl CompletionFeatureVector {
    /// Numeric view in `COMPLETION_FIELDS` order; booleans become 0/1.
    pub fn values(&self) -> [f64; 26] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        [
            self.delta_time,
            self.associated_sprint as f64,
            self.n_committers as f64,
            b(self.has_assignee),
            self.n_authored_commits as f64,
            self.n_committed_commits as f64,
            self.change_churn as f64,
            self.additions as f64,
            self.deletions as f64,
            self.title_length as f64,
            self.description_length as f64,
            b(self.is_hashtag),
            b(self.is_at_tag),
            self.source_branch_open_mrs as f64,
            self.source_branch_avg_approval_hours,
            self.target_branch_open_mrs as f64,
            self.target_branch_avg_approval_hours,
            self.n_major_contributors as f64,
            self.n_minor_contributors as f64,
            self.n_mrs_without_discussion as f64,
            self.n_self_approved_mrs as f64,
            self.n_open_mrs_history as f64,
            self.avg_historical_approval_hours,
            self.historical_entropy,
            self.historical_mr_size,
            self.n_initial_files as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistoryConfig {
    /// Number of the author's most recent prior MRs feeding the entropy;
    /// `None` uses all of them.
    pub entropy_window: Option<usize>,
    /// Share of prior churn separating major from minor contributors.
    pub contributor_share: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        HistoryConfig {
            entropy_window: None,
            contributor_share: 0.05,
        }
    }
}

/// Fallbacks for averages over an empty history window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryDefaults {
    pub approval_hours: f64,
    pub mr_size: f64,
}

impl HistoryDefaults {
    /// Corpus-wide medians; zero when nothing qualifies.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let approvals: Vec<f64> = corpus
            .records
            .iter()
            .filter_map(|r| approval_event(r).map(|t| hours_between(r.created_at, t)))
            .collect();
        let sizes: Vec<f64> = corpus.records.iter().map(|r| r.churn() as f64).collect();
        HistoryDefaults {
            approval_hours: median(approvals),
            mr_size: median(sizes),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// First approval, or the merge when nobody approved explicitly.
fn approval_event(r: &MergeRequestRecord) -> Option<DateTime<Utc>> {
    r.approvals.iter().map(|a| a.approved_at).min().or(r.merged_at)
}

fn mean_or(values: impl Iterator<Item = f64>, default: f64) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        default
    } else {
        sum / n as f64
    }
}

/// `#` or `@` directly followed by a word character, not glued to a
/// preceding word (so `a@b.com` is not a mention).
fn has_tag(text: &str, marker: char) -> bool {
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().any(|(i, &c)| {
        c == marker
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric() || *n == '_')
            && (i == 0 || !chars[i - 1].is_alphanumeric())
    })
}

/// Milestone id when present, otherwise `iso_year * 100 + iso_week`.
fn sprint(record: &MergeRequestRecord) -> u64 {
    record.milestone_id.unwrap_or_else(|| {
        let w = record.created_at.iso_week();
        w.year().max(0) as u64 * 100 + u64::from(w.week())
    })
}

/// Normalized Shannon entropy of the churn distribution over distinct files.
pub fn historical_entropy(prior_changes: &[(String, u64)]) -> f64 {
    let mut per_file: BTreeMap<&str, u64> = BTreeMap::new();
    for (path, churn) in prior_changes {
        *per_file.entry(path.as_str()).or_default() += churn;
    }
    let n = per_file.len();
    let total: u64 = per_file.values().sum();
    if n <= 1 || total == 0 {
        return 0.0;
    }
    let h: f64 = per_file
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

pub fn extract_completion_features(
    record: &MergeRequestRecord,
    history: &Corpus,
    defaults: &HistoryDefaults,
    config: &HistoryConfig,
) -> CompletionFeatureVector {
    let t = record.created_at;
    let prior: Vec<&MergeRequestRecord> = history
        .records
        .iter()
        .filter(|r| r.created_at < t && !(r.id == record.id && r.project_id == record.project_id))
        .collect();

    let initial_commits: Vec<_> = record.commits.iter().filter(|c| c.committed_at <= t).collect();
    let committers: BTreeSet<u64> = initial_commits.iter().map(|c| c.author).collect();

    let project_start = history
        .project(record.project_id)
        .and_then(|p| p.created_at)
        .into_iter()
        .chain(
            history
                .records
                .iter()
                .filter(|r| r.project_id == record.project_id)
                .map(|r| r.created_at),
        )
        .chain(std::iter::once(t))
        .min()
        .unwrap_or(t);

    let approval_before = |r: &MergeRequestRecord| {
        approval_event(r)
            .filter(|e| *e < t)
            .map(|e| hours_between(r.created_at, e))
    };
    let same_project = |r: &&&MergeRequestRecord| r.project_id == record.project_id;
    let open_at_t = |r: &&MergeRequestRecord| r.is_open_at(t);

    let source_prior = prior
        .iter()
        .filter(same_project)
        .filter(|r| r.source_branch == record.source_branch);
    let target_prior = prior
        .iter()
        .filter(same_project)
        .filter(|r| r.target_branch == record.target_branch);

    let mut churn_by_author: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &prior {
        *churn_by_author.entry(r.author).or_default() += r.churn();
    }
    let total_prior_churn: u64 = churn_by_author.values().sum();
    let mut contributors = committers.clone();
    contributors.insert(record.author);
    let (mut major, mut minor) = (0, 0);
    if total_prior_churn > 0 {
        for c in &contributors {
            let share = *churn_by_author.get(c).unwrap_or(&0) as f64 / total_prior_churn as f64;
            if share > config.contributor_share {
                major += 1;
            } else if share < config.contributor_share {
                minor += 1;
            }
        }
    }

    let mut author_prior: Vec<&&MergeRequestRecord> =
        prior.iter().filter(|r| r.author == record.author).collect();
    author_prior.sort_by_key(|r| (r.created_at, r.id));
    let window_start = config
        .entropy_window
        .map_or(0, |w| author_prior.len().saturating_sub(w));
    let entropy_input: Vec<(String, u64)> = author_prior[window_start..]
        .iter()
        .flat_map(|r| r.file_changes.iter().map(|f| (f.path.clone(), f.additions + f.deletions)))
        .collect();

    let additions = record.additions();
    let deletions = record.deletions();

    CompletionFeatureVector {
        delta_time: hours_between(project_start, t),
        associated_sprint: sprint(record),
        n_committers: committers.len(),
        has_assignee: !record.assignees.is_empty(),
        n_authored_commits: prior
            .iter()
            .flat_map(|r| r.commits.iter())
            .filter(|c| c.author == record.author && c.committed_at < t)
            .count(),
        n_committed_commits: initial_commits.len(),
        change_churn: additions + deletions,
        additions,
        deletions,
        title_length: record.title.chars().count(),
        description_length: record.description.chars().count(),
        is_hashtag: has_tag(&record.description, '#'),
        is_at_tag: has_tag(&record.description, '@'),
        source_branch_open_mrs: source_prior.clone().copied().filter(open_at_t).count(),
        source_branch_avg_approval_hours: mean_or(
            source_prior.filter_map(|r| approval_before(r)),
            defaults.approval_hours,
        ),
        target_branch_open_mrs: target_prior.clone().copied().filter(open_at_t).count(),
        target_branch_avg_approval_hours: mean_or(
            target_prior.filter_map(|r| approval_before(r)),
            defaults.approval_hours,
        ),
        n_major_contributors: major,
        n_minor_contributors: minor,
        n_mrs_without_discussion: prior
            .iter()
            .filter(|r| r.ended_at().is_some_and(|e| e < t))
            .filter(|r| !r.notes.iter().any(|n| !n.is_system && n.created_at < t))
            .count(),
        n_self_approved_mrs: prior
            .iter()
            .filter(|r| r.approvals.iter().any(|a| a.actor == r.author && a.approved_at < t))
            .count(),
        n_open_mrs_history: prior.iter().copied().filter(open_at_t).count(),
        avg_historical_approval_hours: mean_or(
            prior.iter().filter_map(|r| approval_before(r)),
            defaults.approval_hours,
        ),
        historical_entropy: historical_entropy(&entropy_input),
        historical_mr_size: mean_or(prior.iter().map(|r| r.churn() as f64), defaults.mr_size),
        n_initial_files: record.file_changes.len(),
    }
}

/// Features for the selected records, with history = the whole corpus and
/// defaults computed once. Output order follows `records`.
pub fn extract_all(
    corpus: &Corpus,
    records: &[&MergeRequestRecord],
    config: &HistoryConfig,
) -> Vec<CompletionFeatureVector> {
    let defaults = HistoryDefaults::from_corpus(corpus);
    records
        .par_iter()
        .map(|r| extract_completion_features(r, corpus, &defaults, config))
        .collect()
}

pub fn write_completion_csv<W: Write>(rows: &[(u64, CompletionFeatureVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id"];
    header.extend(COMPLETION_FIELDS);
    w.write_record(&header)?;
    for (id, f) in rows {
        let mut row = vec![id.to_string()];
        row.extend(f.values().iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
