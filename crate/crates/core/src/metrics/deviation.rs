use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use super::hours_between;
use crate::error::Result;
use crate::ingest::MergeRequestRecord;

/// Signals an annotator looks at when deciding whether an MR deviates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationFeatureVector {
    pub title: String,
    pub description: String,
    pub file_types: BTreeSet<String>,
    pub code_churn: u64,
    pub additions: u64,
    pub deletions: u64,
    pub review_duration: Option<f64>,
    pub reviewer_participation: usize,
    pub n_commits: usize,
    pub n_committers: usize,
    pub source_branch: String,
    pub target_branch: String,
    pub commit_messages: Vec<String>,
    pub n_comments: usize,
    pub comment_messages: Vec<String>,
    pub labels: Vec<String>,
    pub n_reviewers: usize,
    pub reviewer_comments: Vec<String>,
    pub time_to_first_review: Option<f64>,
}

pub const DEVIATION_FIELDS: [&str; 19] = [
    "title",
    "description",
    "file_types",
    "code_churn",
    "additions",
    "deletions",
    "review_duration",
    "reviewer_participation",
    "n_commits",
    "n_committers",
    "source_branch",
    "target_branch",
    "commit_messages",
    "n_comments",
    "comment_messages",
    "labels",
    "n_reviewers",
    "reviewer_comments",
    "time_to_first_review",
];

/// Extension of a path, or the file name itself for extensionless files
/// such as `Dockerfile`.
pub fn file_type(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => format!(".{}", ext.to_ascii_lowercase()),
        _ => name.to_string(),
    }
}

pub fn extract_deviation_features(record: &MergeRequestRecord) -> DeviationFeatureVector {
    let additions = record.additions();
    let deletions = record.deletions();
    let human_notes: Vec<_> = record.notes.iter().filter(|n| !n.is_system).collect();
    let reviewer_notes: Vec<_> = human_notes.iter().filter(|n| n.author != record.author).collect();

    let mut participants: BTreeSet<u64> = reviewer_notes.iter().map(|n| n.author).collect();
    participants.extend(record.approvals.iter().map(|a| a.actor).filter(|a| *a != record.author));

    let reviewers: BTreeSet<u64> = record.reviewers.iter().copied().collect();
    let committers: BTreeSet<u64> = record.commits.iter().map(|c| c.author).collect();

    DeviationFeatureVector {
        title: record.title.clone(),
        description: record.description.clone(),
        file_types: record.file_changes.iter().map(|f| file_type(&f.path)).collect(),
        code_churn: additions + deletions,
        additions,
        deletions,
        review_duration: record
            .merged_at
            .map(|m| hours_between(record.created_at, m).max(0.0)),
        reviewer_participation: participants.len(),
        n_commits: record.commits.len(),
        n_committers: committers.len(),
        source_branch: record.source_branch.clone(),
        target_branch: record.target_branch.clone(),
        commit_messages: record.commits.iter().map(|c| c.message.clone()).collect(),
        n_comments: human_notes.len(),
        comment_messages: human_notes.iter().map(|n| n.body.clone()).collect(),
        labels: record.labels.clone(),
        n_reviewers: reviewers.len(),
        reviewer_comments: reviewer_notes.iter().map(|n| n.body.clone()).collect(),
        time_to_first_review: reviewer_notes
            .iter()
            .map(|n| n.created_at)
            .min()
            .map(|t| hours_between(record.created_at, t)),
    }
}

/// One row per MR; list-valued cells are joined with `;`, absent values are empty.
pub fn write_deviation_csv<W: Write>(rows: &[(u64, DeviationFeatureVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id"];
    header.extend(DEVIATION_FIELDS);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for (id, f) in rows {
        w.write_record([
            id.to_string(),
            f.title.clone(),
            f.description.clone(),
            f.file_types.iter().cloned().collect::<Vec<_>>().join(";"),
            f.code_churn.to_string(),
            f.additions.to_string(),
            f.deletions.to_string(),
            opt(f.review_duration),
            f.reviewer_participation.to_string(),
            f.n_commits.to_string(),
            f.n_committers.to_string(),
            f.source_branch.clone(),
            f.target_branch.clone(),
            f.commit_messages.join(";"),
            f.n_comments.to_string(),
            f.comment_messages.join(";"),
            f.labels.join(";"),
            f.n_reviewers.to_string(),
            f.reviewer_comments.join(";"),
            opt(f.time_to_first_review),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::*;
    use crate::ingest::{Approval, MrState, Note};

    #[test]
    fn churn_sums_per_file_counts() {
        let mut r = record(1);
        r.file_changes = vec![file("src/a.rs", 10, 3), file("src/b.rs", 0, 7)];
        let f = extract_deviation_features(&r);
        assert_eq!((f.additions, f.deletions, f.code_churn), (10, 10, 20));
        assert_eq!(f.file_types.iter().collect::<Vec<_>>(), vec![".rs"]);
    }

    #[test]
    fn no_notes_means_no_first_review() {
        let f = extract_deviation_features(&record(1));
        assert_eq!(f.n_comments, 0);
        assert_eq!(f.time_to_first_review, None);
        assert_eq!(f.review_duration, None);
    }

    #[test]
    fn instant_merge_has_zero_duration() {
        let mut r = record(1);
        r.state = MrState::Merged;
        r.merged_at = Some(r.created_at);
        assert_eq!(extract_deviation_features(&r).review_duration, Some(0.0));
    }

    #[test]
    fn reviewer_signals_exclude_author_and_system() {
        let mut r = record(1);
        let note = |author, h, system| Note {
            author,
            body: format!("n{author}{h}"),
            created_at: ts(h),
            is_system: system,
        };
        r.notes = vec![note(7, 1, false), note(8, 3, true), note(9, 5, false)];
        r.approvals = vec![Approval { actor: 10, approved_at: ts(6) }];
        r.reviewers = vec![9, 9, 10];
        let f = extract_deviation_features(&r);
        assert_eq!(f.n_comments, 2);
        assert_eq!(f.reviewer_comments, vec!["n95".to_string()]);
        assert_eq!(f.time_to_first_review, Some(5.0));
        assert_eq!(f.reviewer_participation, 2);
        assert_eq!(f.n_reviewers, 2);
    }

    #[test]
    fn file_types_of_odd_names() {
        assert_eq!(file_type("docker/Dockerfile"), "Dockerfile");
        assert_eq!(file_type(".gitlab-ci.yml"), ".yml");
        assert_eq!(file_type(".env"), ".env");
        assert_eq!(file_type("README.MD"), ".md");
    }

    #[test]
    fn csv_header_matches_field_names() {
        let mut buf = Vec::new();
        write_deviation_csv(&[(3, extract_deviation_features(&record(3)))], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, format!("id,{}", DEVIATION_FIELDS.join(",")));
        assert_eq!(text.lines().count(), 2);
    }
}
