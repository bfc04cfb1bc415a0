//! Merge-request records, corpus archives and the forge client.

mod archive;
pub mod gitlab;
mod summary;

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use archive::{export_archive, import_archive, read_archive, write_archive, ARCHIVE_FORMAT};
pub use summary::{corpus_stats, CorpusStats, ProjectStats};

/// Stable numeric forge user id.
pub type ActorId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MrState {
    Open,
    Merged,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitInfo {
    pub sha: String,
    pub message: String,
    pub author: ActorId,
    pub committed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub additions: u64,
    pub deletions: u64,
    pub is_new_file: bool,
    pub is_deleted_file: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub author: ActorId,
    pub body: String,
    pub created_at: DateTime<Utc>,
    /// Forge-generated event (label change, approval, push), not a human comment.
    pub is_system: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub actor: ActorId,
    pub approved_at: DateTime<Utc>,
}

/// One merge request with everything needed by the feature extractors.
///
/// `id` is the forge-global id. `iid` is the project-scoped number used in
/// URLs and sub-resource calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRequestRecord {
    pub id: u64,
    pub iid: u64,
    pub project_id: u64,
    pub title: String,
    pub description: String,
    pub state: MrState,
    pub created_at: DateTime<Utc>,
    pub merged_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub closed_at: Option<DateTime<Utc>>,
    pub source_branch: String,
    pub target_branch: String,
    pub labels: Vec<String>,
    pub is_draft_flag: bool,
    #[serde(default)]
    pub milestone_id: Option<u64>,
    #[serde(default)]
    pub web_url: Option<String>,
    pub commits: Vec<CommitInfo>,
    pub file_changes: Vec<FileChange>,
    pub notes: Vec<Note>,
    pub reviewers: Vec<ActorId>,
    pub assignees: Vec<ActorId>,
    pub approvals: Vec<Approval>,
    pub author: ActorId,
}

impl MergeRequestRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation { id: self.id, msg });
        match (self.state, self.merged_at) {
            (MrState::Merged, None) => return fail("state is merged but merged_at is absent".into()),
            (MrState::Open | MrState::Closed, Some(_)) => {
                return fail("merged_at present on an unmerged record".into())
            }
            (MrState::Merged, Some(m)) if m < self.created_at => {
                return fail(format!("merged_at {m} precedes created_at {}", self.created_at))
            }
            _ => {}
        }
        if let Some(c) = self.closed_at {
            if c < self.created_at {
                return fail(format!("closed_at {c} precedes created_at {}", self.created_at));
            }
        }
        let mut shas = HashSet::new();
        for pair in self.commits.windows(2) {
            if pair[1].committed_at < pair[0].committed_at {
                return fail(format!("commit {} is out of timestamp order", pair[1].sha));
            }
        }
        for c in &self.commits {
            if c.sha.is_empty() {
                return fail("commit with empty sha".into());
            }
            if !shas.insert(c.sha.as_str()) {
                return fail(format!("duplicate commit sha {}", c.sha));
            }
        }
        for f in &self.file_changes {
            if f.path.is_empty() {
                return fail("file change with empty path".into());
            }
            if f.is_deleted_file && f.additions != 0 {
                return fail(format!("deleted file {} reports additions", f.path));
            }
        }
        Ok(())
    }

    pub fn is_merged(&self) -> bool {
        self.state == MrState::Merged
    }

    pub fn additions(&self) -> u64 {
        self.file_changes.iter().map(|f| f.additions).sum()
    }

    pub fn deletions(&self) -> u64 {
        self.file_changes.iter().map(|f| f.deletions).sum()
    }

    pub fn churn(&self) -> u64 {
        self.additions() + self.deletions()
    }

    /// Instant at which the MR stopped being open, if it did.
    pub fn ended_at(&self) -> Option<DateTime<Utc>> {
        match self.state {
            MrState::Merged => self.merged_at,
            MrState::Closed => self.closed_at.or(Some(self.created_at)),
            MrState::Open => None,
        }
    }

    pub fn is_open_at(&self, t: DateTime<Utc>) -> bool {
        self.created_at < t && self.ended_at().is_none_or(|end| end > t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub id: u64,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

/// Header metadata stored on the first archive line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub host: String,
    pub group: String,
    pub projects: Vec<ProjectMeta>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub meta: CorpusMeta,
    pub records: Vec<MergeRequestRecord>,
}

impl Corpus {
    pub fn new(meta: CorpusMeta, records: Vec<MergeRequestRecord>) -> Result<Self> {
        let corpus = Corpus { meta, records };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn empty(host: impl Into<String>, group: impl Into<String>, fetched_at: DateTime<Utc>) -> Self {
        Corpus {
            meta: CorpusMeta {
                host: host.into(),
                group: group.into(),
                projects: Vec::new(),
                fetched_at,
            },
            records: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert((r.project_id, r.id)) {
                return Err(Error::Validation {
                    id: r.id,
                    msg: format!("duplicate id in project {}", r.project_id),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sort records by (project_id, id), the canonical archive order.
    pub fn canonicalize(&mut self) {
        self.records.sort_by_key(|r| (r.project_id, r.id));
        self.meta.projects.sort_by_key(|p| p.id);
    }

    pub fn project(&self, id: u64) -> Option<&ProjectMeta> {
        self.meta.projects.iter().find(|p| p.id == id)
    }

    pub fn get(&self, id: u64) -> Option<&MergeRequestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Browser URL of an MR, falling back to the API resource path.
    pub fn mr_url(&self, record: &MergeRequestRecord) -> String {
        if let Some(url) = &record.web_url {
            return url.clone();
        }
        let host = self.meta.host.trim_end_matches('/');
        match self.project(record.project_id).and_then(|p| p.path.as_deref()) {
            Some(path) => format!("{host}/{path}/-/merge_requests/{}", record.iid),
            None => format!(
                "{host}/api/v4/projects/{}/merge_requests/{}",
                record.project_id, record.iid
            ),
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn ts(h: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(h)
    }

    pub fn record(id: u64) -> MergeRequestRecord {
        MergeRequestRecord {
            id,
            iid: id,
            project_id: 1,
            title: format!("Add feature {id}"),
            description: String::new(),
            state: MrState::Open,
            created_at: ts(0),
            merged_at: None,
            closed_at: None,
            source_branch: format!("feature-{id}"),
            target_branch: "main".into(),
            labels: vec![],
            is_draft_flag: false,
            milestone_id: None,
            web_url: None,
            commits: vec![],
            file_changes: vec![],
            notes: vec![],
            reviewers: vec![],
            assignees: vec![],
            approvals: vec![],
            author: 7,
        }
    }

    pub fn file(path: &str, additions: u64, deletions: u64) -> FileChange {
        FileChange {
            path: path.into(),
            additions,
            deletions,
            is_new_file: false,
            is_deleted_file: false,
        }
    }
}
