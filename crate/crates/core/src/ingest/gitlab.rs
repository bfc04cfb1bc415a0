//! Client for the GitLab REST API v4.
//!
//! Lists MRs page by page and enriches each with commits, per-file diff
//! stats, notes and approvals. Pagination is followed to exhaustion and
//! cross-checked against the `X-Total`/`X-Total-Pages` headers when the
//! server sends them.

use std::collections::HashMap;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{
    Approval, CommitInfo, Corpus, CorpusMeta, FileChange, MergeRequestRecord, MrState, Note,
    ProjectMeta,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names lower-cased.
    pub headers: HashMap<String, String>,
    pub body: String,
}

impl HttpResponse {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(String::as_str).filter(|v| !v.is_empty())
    }
}

/// Minimal blocking GET transport, swappable for tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, token: &str) -> Result<HttpResponse>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, token: &str) -> Result<HttpResponse> {
        let mut resp = self
            .agent
            .get(url)
            .header("PRIVATE-TOKEN", token)
            .call()
            .map_err(|e| Error::Network(e.to_string()))?;
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_ascii_lowercase(),
                    v.to_str().unwrap_or_default().to_string(),
                )
            })
            .collect();
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Network(e.to_string()))?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): base * 2^attempt,
    /// capped, with up to 50% random extra when jitter is on.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_delay);
        if self.jitter && !exp.is_zero() {
            exp.mul_f64(1.0 + 0.5 * rng.random::<f64>()).min(self.max_delay)
        } else {
            exp
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Base URL such as `https://gitlab.example.com`.
    pub host: String,
    pub page_size: u32,
    pub retry: RetryPolicy,
    /// Concurrent sub-resource requests while enriching MRs.
    pub fan_out: usize,
}

impl ClientConfig {
    pub fn new(host: impl Into<String>) -> Self {
        ClientConfig {
            host: host.into(),
            page_size: 100,
            retry: RetryPolicy::default(),
            fan_out: 4,
        }
    }
}

pub struct GitLabClient<T: Transport = UreqTransport> {
    transport: T,
    token: String,
    config: ClientConfig,
}

impl GitLabClient<UreqTransport> {
    pub fn connect(config: ClientConfig, token: String) -> Self {
        Self::with_transport(UreqTransport::default(), config, token)
    }
}

impl<T: Transport> GitLabClient<T> {
    pub fn with_transport(transport: T, config: ClientConfig, token: String) -> Self {
        GitLabClient {
            transport,
            token,
            config,
        }
    }

    fn api(&self, path: &str) -> String {
        format!("{}/api/v4{}", self.config.host.trim_end_matches('/'), path)
    }

    fn get(&self, url: &str) -> Result<HttpResponse> {
        let policy = &self.config.retry;
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(url.as_bytes()));
        let attempts = policy.max_attempts.max(1);
        let mut last_err = None;
        for attempt in 0..attempts {
            let retry_after = match self.transport.get(url, &self.token) {
                Ok(resp) => match resp.status {
                    200..=299 => return Ok(resp),
                    401 | 403 => {
                        return Err(Error::Credential {
                            url: url.to_string(),
                            status: resp.status,
                        })
                    }
                    429 => {
                        last_err = Some(Error::RateLimited {
                            url: url.to_string(),
                            attempts,
                        });
                        resp.header("retry-after")
                            .and_then(|v| v.parse::<u64>().ok())
                            .map(Duration::from_secs)
                    }
                    500..=599 => {
                        last_err = Some(Error::Http {
                            url: url.to_string(),
                            status: resp.status,
                        });
                        None
                    }
                    status => {
                        return Err(Error::Http {
                            url: url.to_string(),
                            status,
                        })
                    }
                },
                Err(e) => {
                    last_err = Some(e);
                    None
                }
            };
            if attempt + 1 < attempts {
                let backoff = policy.delay(attempt, &mut rng);
                let wait = retry_after.map_or(backoff, |ra| ra.min(policy.max_delay).max(backoff));
                log::debug!("retrying {url} in {wait:?} (attempt {})", attempt + 1);
                std::thread::sleep(wait);
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn get_one<D: DeserializeOwned>(&self, url: &str) -> Result<D> {
        let resp = self.get(url)?;
        serde_json::from_str(&resp.body).map_err(|e| Error::Parse {
            line: 0,
            id: None,
            msg: format!("{url}: {e}"),
        })
    }

    /// Follow `page`/`per_page` pagination until the server reports no next page.
    pub fn get_paginated<D: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<Vec<D>> {
        let per_page = self.config.page_size.max(1);
        let base = self.api(path);
        let mut items: Vec<D> = Vec::new();
        let mut page: u32 = 1;
        let mut expected_total: Option<usize> = None;
        let mut expected_pages: Option<u32> = None;
        let mut pages_seen = 0u32;
        loop {
            let mut url = format!("{base}?page={page}&per_page={per_page}");
            for (k, v) in query {
                url.push('&');
                url.push_str(k);
                url.push('=');
                url.push_str(&encode_query(v));
            }
            let resp = self.get(&url)?;
            pages_seen += 1;
            let batch: Vec<D> = serde_json::from_str(&resp.body).map_err(|e| Error::Parse {
                line: 0,
                id: None,
                msg: format!("{url}: {e}"),
            })?;
            let batch_len = batch.len();
            items.extend(batch);
            if let Some(total) = resp.header("x-total").and_then(|v| v.parse().ok()) {
                expected_total.get_or_insert(total);
            }
            if let Some(pages) = resp.header("x-total-pages").and_then(|v| v.parse().ok()) {
                expected_pages.get_or_insert(pages);
            }
            let next = resp.header("x-next-page").and_then(|v| v.parse::<u32>().ok());
            let has_pagination_headers = resp.headers.contains_key("x-next-page")
                || resp.headers.contains_key("x-total-pages");
            match next {
                Some(n) if n > page => page = n,
                Some(_) => {
                    return Err(Error::Incomplete {
                        url: base,
                        detail: format!("next page header does not advance past {page}"),
                    })
                }
                None if !has_pagination_headers && batch_len == per_page as usize => page += 1,
                None => break,
            }
        }
        if let Some(total) = expected_total {
            if items.len() != total {
                return Err(Error::Incomplete {
                    url: base,
                    detail: format!("received {} items, server reported {total}", items.len()),
                });
            }
        }
        if let Some(pages) = expected_pages {
            if pages_seen < pages {
                return Err(Error::Incomplete {
                    url: base,
                    detail: format!("stopped after {pages_seen} of {pages} pages"),
                });
            }
        }
        Ok(items)
    }

    pub fn fetch_project(&self, project_id: u64) -> Result<ProjectMeta> {
        let p: ApiProject = self.get_one(&self.api(&format!("/projects/{project_id}")))?;
        Ok(ProjectMeta {
            id: p.id,
            path: p.path_with_namespace,
            created_at: p.created_at,
        })
    }

    /// Every MR of the project updated at or after `since`, fully enriched.
    pub fn fetch_project_mrs(
        &self,
        project_id: u64,
        since: Option<DateTime<Utc>>,
    ) -> Result<Vec<MergeRequestRecord>> {
        let mut query = vec![
            ("state", "all".to_string()),
            ("order_by", "created_at".to_string()),
            ("sort", "asc".to_string()),
        ];
        if let Some(t) = since {
            query.push(("updated_after", t.to_rfc3339_opts(SecondsFormat::Secs, true)));
        }
        let listed: Vec<ApiMergeRequest> =
            self.get_paginated(&format!("/projects/{project_id}/merge_requests"), &query)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.fan_out.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            listed
                .into_par_iter()
                .map(|mr| self.enrich(project_id, mr))
                .collect()
        })
    }

    pub fn fetch_corpus(
        &self,
        group: &str,
        project_ids: &[u64],
        since: Option<DateTime<Utc>>,
        fetched_at: DateTime<Utc>,
    ) -> Result<Corpus> {
        let mut projects = Vec::new();
        let mut records = Vec::new();
        for &pid in project_ids {
            projects.push(self.fetch_project(pid)?);
            records.extend(self.fetch_project_mrs(pid, since)?);
        }
        let mut corpus = Corpus::new(
            CorpusMeta {
                host: self.config.host.clone(),
                group: group.to_string(),
                projects,
                fetched_at,
            },
            records,
        )?;
        corpus.canonicalize();
        Ok(corpus)
    }

    fn enrich(&self, project_id: u64, mr: ApiMergeRequest) -> Result<MergeRequestRecord> {
        let base = format!("/projects/{project_id}/merge_requests/{}", mr.iid);
        let api_commits: Vec<ApiCommit> = self.get_paginated(&format!("{base}/commits"), &[])?;
        let diffs: Vec<ApiDiff> = self.get_paginated(&format!("{base}/diffs"), &[])?;
        let api_notes: Vec<ApiNote> = self.get_paginated(
            &format!("{base}/notes"),
            &[("sort", "asc".into()), ("order_by", "created_at".into())],
        )?;
        let approvals: ApiApprovals = self.get_one(&self.api(&format!("{base}/approvals")))?;

        let author_names = [mr.author.username.as_deref(), mr.author.name.as_deref()];
        let mut commits: Vec<CommitInfo> = api_commits
            .into_iter()
            .map(|c| {
                let by_author = c.author_name.as_deref().is_some_and(|n| author_names.contains(&Some(n)));
                CommitInfo {
                    author: if by_author {
                        mr.author.id
                    } else {
                        pseudo_actor(c.author_email.as_deref().or(c.author_name.as_deref()).unwrap_or(""))
                    },
                    committed_at: c.committed_date.or(c.created_at).unwrap_or(mr.created_at),
                    sha: c.id,
                    message: c.message.unwrap_or_default(),
                }
            })
            .collect();
        commits.sort_by(|a, b| a.committed_at.cmp(&b.committed_at).then_with(|| a.sha.cmp(&b.sha)));

        let file_changes = diffs
            .into_iter()
            .map(|d| {
                let (additions, deletions) = count_diff_lines(d.diff.as_deref().unwrap_or(""));
                FileChange {
                    path: if d.deleted_file { d.old_path } else { d.new_path },
                    additions,
                    deletions,
                    is_new_file: d.new_file,
                    is_deleted_file: d.deleted_file,
                }
            })
            .collect();

        let notes: Vec<Note> = api_notes
            .into_iter()
            .map(|n| Note {
                author: n.author.id,
                body: n.body.unwrap_or_default(),
                created_at: n.created_at,
                is_system: n.system,
            })
            .collect();

        let state = match mr.state.as_str() {
            "merged" => MrState::Merged,
            "closed" => MrState::Closed,
            _ => MrState::Open,
        };
        let merged_at = match state {
            MrState::Merged => Some(mr.merged_at.or(mr.closed_at).unwrap_or(mr.updated_at).max(mr.created_at)),
            _ => None,
        };
        let fallback_approval = merged_at.unwrap_or(mr.updated_at);
        let approvals = approvals
            .approved_by
            .into_iter()
            .map(|a| Approval {
                actor: a.user.id,
                approved_at: approval_time(&notes, a.user.id).unwrap_or(fallback_approval),
            })
            .collect();

        Ok(MergeRequestRecord {
            id: mr.id,
            iid: mr.iid,
            project_id,
            title: mr.title,
            description: mr.description.unwrap_or_default(),
            state,
            created_at: mr.created_at,
            merged_at,
            closed_at: match state {
                MrState::Closed => mr.closed_at.map(|c| c.max(mr.created_at)),
                _ => None,
            },
            source_branch: mr.source_branch,
            target_branch: mr.target_branch,
            labels: mr.labels,
            is_draft_flag: mr.draft || mr.work_in_progress,
            milestone_id: mr.milestone.map(|m| m.id),
            web_url: mr.web_url,
            commits,
            file_changes,
            notes,
            reviewers: mr.reviewers.into_iter().map(|u| u.id).collect(),
            assignees: mr.assignees.into_iter().map(|u| u.id).collect(),
            approvals,
            author: mr.author.id,
        })
    }
}

/// Approval instant from the forge's "approved this merge request" system note.
fn approval_time(notes: &[Note], actor: u64) -> Option<DateTime<Utc>> {
    notes
        .iter()
        .filter(|n| n.is_system && n.author == actor && n.body.starts_with("approved this merge request"))
        .map(|n| n.created_at)
        .max()
}

/// Added and removed lines of a unified diff hunk body.
pub fn count_diff_lines(diff: &str) -> (u64, u64) {
    let mut add = 0;
    let mut del = 0;
    for line in diff.lines() {
        if line.starts_with("+++ ") || line.starts_with("--- ") {
            continue;
        }
        if line.starts_with('+') {
            add += 1;
        } else if line.starts_with('-') {
            del += 1;
        }
    }
    (add, del)
}

/// Stable id for a commit author the forge does not resolve to a user.
/// The top bit keeps these disjoint from real forge ids.
fn pseudo_actor(key: &str) -> u64 {
    fnv1a(key.trim().to_ascii_lowercase().as_bytes()) | (1 << 63)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x100000001b3)
    })
}

fn encode_query(v: &str) -> String {
    v.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

#[derive(Deserialize)]
struct ApiUser {
    id: u64,
    #[serde(default)]
    username: Option<String>,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
struct ApiMilestone {
    id: u64,
}

#[derive(Deserialize)]
struct ApiMergeRequest {
    id: u64,
    iid: u64,
    title: String,
    #[serde(default)]
    description: Option<String>,
    state: String,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    #[serde(default)]
    merged_at: Option<DateTime<Utc>>,
    #[serde(default)]
    closed_at: Option<DateTime<Utc>>,
    source_branch: String,
    target_branch: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    draft: bool,
    #[serde(default)]
    work_in_progress: bool,
    #[serde(default)]
    milestone: Option<ApiMilestone>,
    #[serde(default)]
    web_url: Option<String>,
    author: ApiUser,
    #[serde(default)]
    assignees: Vec<ApiUser>,
    #[serde(default)]
    reviewers: Vec<ApiUser>,
}

#[derive(Deserialize)]
struct ApiCommit {
    id: String,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    author_name: Option<String>,
    #[serde(default)]
    author_email: Option<String>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    committed_date: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct ApiDiff {
    old_path: String,
    new_path: String,
    #[serde(default)]
    diff: Option<String>,
    #[serde(default)]
    new_file: bool,
    #[serde(default)]
    deleted_file: bool,
}

#[derive(Deserialize)]
struct ApiNote {
    #[serde(default)]
    body: Option<String>,
    author: ApiUser,
    created_at: DateTime<Utc>,
    #[serde(default)]
    system: bool,
}

#[derive(Deserialize)]
struct ApiApprovedBy {
    user: ApiUser,
}

#[derive(Deserialize)]
struct ApiApprovals {
    #[serde(default)]
    approved_by: Vec<ApiApprovedBy>,
}

#[derive(Deserialize)]
struct ApiProject {
    id: u64,
    #[serde(default)]
    path_with_namespace: Option<String>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
}
