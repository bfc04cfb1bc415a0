//! Seeded synthetic corpora for exercising the detector and the impact
//! pipeline without forge access.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{Approval, CommitInfo, Corpus, CorpusMeta, FileChange, MergeRequestRecord, MrState, Note, ProjectMeta};
use crate::taxonomy::Category;

pub const SYNTH_HOST: &str = "https://forge.invalid";
pub const SYNTH_PROJECT: u64 = 1;

const WORDS: [&str; 16] = [
    "parser", "cache", "index", "session", "router", "encoder", "scheduler", "buffer", "metrics", "queue",
    "config", "loader", "storage", "payload", "handler", "filter",
];
const MODULES: [&str; 6] = ["core", "api", "net", "db", "ui", "util"];

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 2, 8, 0, 0).unwrap()
}

fn meta(group: &str) -> CorpusMeta {
    CorpusMeta {
        host: SYNTH_HOST.to_string(),
        group: group.to_string(),
        projects: vec![ProjectMeta {
            id: SYNTH_PROJECT,
            path: Some(format!("{group}/app")),
            created_at: Some(epoch()),
        }],
        fetched_at: epoch() + Duration::days(3650),
    }
}

/// Text of exactly `len` characters built from the word list.
fn text_of_len(rng: &mut ChaCha8Rng, prefix: &str, len: usize) -> String {
    let mut s = prefix.to_string();
    while s.chars().count() < len {
        s.push(' ');
        s.push_str(WORDS[rng.random_range(0..WORDS.len())]);
    }
    s.chars().take(len.max(prefix.chars().count())).collect()
}

/// Observable traits the target generator reads back.
#[derive(Debug, Clone, Copy)]
struct Traits {
    churn: u64,
    title_len: usize,
    desc_len: usize,
    commits: usize,
    assignee: bool,
}

/// A merged, review-shaped MR with source files only; matches no rule.
fn regular(id: u64, created: DateTime<Utc>, rng: &mut ChaCha8Rng) -> (MergeRequestRecord, Traits) {
    let author = rng.random_range(1..=12u64);
    let reviewer = 100 + rng.random_range(1..=6u64);
    let n_files = rng.random_range(1..=5usize);
    let module = MODULES[rng.random_range(0..MODULES.len())];
    let total_add = rng.random_range(5..=600u64);
    let total_del = rng.random_range(0..=total_add / 2);
    let mut file_changes = Vec::with_capacity(n_files);
    let (mut add_left, mut del_left) = (total_add, total_del);
    for f in 0..n_files {
        let last = f + 1 == n_files;
        let a = if last { add_left } else { rng.random_range(0..=add_left / 2) };
        let d = if last { del_left } else { rng.random_range(0..=del_left / 2) };
        add_left -= a;
        del_left -= d;
        file_changes.push(FileChange {
            path: format!("src/{module}/{}_{f}.rs", WORDS[rng.random_range(0..WORDS.len())]),
            additions: a,
            deletions: d,
            is_new_file: f == 0 && rng.random_bool(0.2),
            is_deleted_file: false,
        });
    }
    let n_commits = rng.random_range(1..=8usize);
    let commits = (0..n_commits)
        .map(|c| CommitInfo {
            sha: format!("{id:08x}{c:04x}"),
            message: format!("Work on {} {c}", WORDS[c % WORDS.len()]),
            author: if rng.random_bool(0.85) { author } else { rng.random_range(1..=12u64) },
            committed_at: created - Duration::minutes(30 * (n_commits - c) as i64),
        })
        .collect();
    let title_len = rng.random_range(12..=90usize);
    let desc_len = if rng.random_bool(0.2) { 0 } else { rng.random_range(20..=800usize) };
    let assignee = rng.random_bool(0.6);
    let record = MergeRequestRecord {
        id,
        iid: id,
        project_id: SYNTH_PROJECT,
        title: text_of_len(rng, "Improve", title_len),
        description: text_of_len(rng, "", desc_len),
        state: MrState::Merged,
        created_at: created,
        merged_at: Some(created),
        closed_at: None,
        source_branch: format!("feature/{id}"),
        target_branch: "main".into(),
        labels: vec!["feature".into()],
        is_draft_flag: false,
        milestone_id: None,
        web_url: None,
        commits,
        file_changes,
        notes: vec![Note {
            author: reviewer,
            body: "Looks reasonable, one nit inline.".into(),
            created_at: created + Duration::minutes(20),
            is_system: false,
        }],
        reviewers: vec![reviewer],
        assignees: if assignee { vec![reviewer] } else { vec![] },
        approvals: vec![],
        author,
    };
    let traits = Traits {
        churn: total_add + total_del,
        title_len,
        desc_len,
        commits: n_commits,
        assignee,
    };
    (record, traits)
}

fn set_merge(record: &mut MergeRequestRecord, hours: f64) {
    let merged = record.created_at + Duration::seconds((hours * 3600.0).round() as i64);
    record.merged_at = Some(merged);
    let reviewer = record.reviewers.first().copied().unwrap_or(100);
    if let Some(n) = record.notes.first_mut() {
        n.created_at = record.created_at + (merged - record.created_at) / 4;
    }
    record.approvals = vec![Approval {
        actor: reviewer,
        approved_at: merged,
    }];
}

fn next_created(rng: &mut ChaCha8Rng, at: &mut DateTime<Utc>) -> DateTime<Utc> {
    *at += Duration::minutes(rng.random_range(30..=300));
    *at
}

// ---------------------------------------------------------------------------
// detector injection corpus

/// Expected verdict per MR id: `None` for NORMAL, otherwise the only rule
/// the record satisfies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub expected: BTreeMap<u64, Option<Category>>,
}

impl InjectionManifest {
    pub fn counts(&self) -> BTreeMap<Option<Category>, usize> {
        let mut out = BTreeMap::new();
        for c in self.expected.values() {
            *out.entry(*c).or_default() += 1;
        }
        out
    }
}

/// Categories the default rule set can detect.
pub const INJECTABLE: [Category; 7] = [
    Category::EmptyChangeSet,
    Category::HugeChange,
    Category::RevertCommit,
    Category::ExperimentalOrWip,
    Category::LibraryUpdate,
    Category::BuildOrConfig,
    Category::CodeCleaning,
];

fn inject(record: &mut MergeRequestRecord, category: Category, rng: &mut ChaCha8Rng) {
    match category {
        Category::EmptyChangeSet => {
            if rng.random_bool(0.5) {
                record.file_changes.clear();
            } else {
                for f in &mut record.file_changes {
                    f.additions = 0;
                    f.deletions = 0;
                }
            }
        }
        Category::HugeChange => {
            let f = &mut record.file_changes[0];
            f.additions = rng.random_range(9_000..=20_000);
            f.deletions = rng.random_range(1_000..=2_000);
        }
        Category::RevertCommit => {
            let original = record.title.clone();
            record.title = format!("Revert \"{original}\"");
            for c in &mut record.commits {
                c.message = format!("Revert \"{original}\"");
            }
        }
        Category::ExperimentalOrWip => match rng.random_range(0..3) {
            0 => record.is_draft_flag = true,
            1 => record.title = format!("Draft: {}", record.title),
            _ => record.labels.push("WIP".into()),
        },
        Category::LibraryUpdate => {
            let manifests = ["Cargo.lock", "package.json", "requirements.txt", "go.sum", "pom.xml"];
            let a = rng.random_range(2..=10u64);
            let d = rng.random_range(1..=a);
            record.file_changes = vec![FileChange {
                path: manifests[rng.random_range(0..manifests.len())].into(),
                additions: a,
                deletions: d,
                is_new_file: false,
                is_deleted_file: false,
            }];
        }
        Category::BuildOrConfig => {
            let build = [".gitlab-ci.yml", "Dockerfile", "ci/build.yml", "deploy/values.yaml", "CMakeLists.txt"];
            let n = rng.random_range(1..=3usize);
            record.file_changes = (0..n)
                .map(|i| {
                    let a = rng.random_range(3..=60u64);
                    FileChange {
                        path: build[(i + rng.random_range(0..build.len())) % build.len()].into(),
                        additions: a,
                        deletions: rng.random_range(0..=a),
                        is_new_file: false,
                        is_deleted_file: false,
                    }
                })
                .collect();
            record.file_changes.dedup_by(|a, b| a.path == b.path);
        }
        Category::CodeCleaning => {
            for f in &mut record.file_changes {
                f.deletions = rng.random_range(50..=800);
                f.additions = rng.random_range(0..=f.deletions / 20);
                f.is_new_file = false;
            }
        }
        Category::DocumentationUpdate => {
            record.file_changes = vec![FileChange {
                path: "docs/guide.md".into(),
                additions: rng.random_range(1..=40),
                deletions: 0,
                is_new_file: false,
                is_deleted_file: false,
            }];
            record.notes.clear();
            record.reviewers.clear();
            record.assignees.clear();
        }
    }
}

/// `n_normal` rule-clean MRs plus `per_category` MRs for each injectable
/// category, interleaved in random order.
pub fn injected_corpus(n_normal: usize, per_category: usize, seed: u64) -> Result<(Corpus, InjectionManifest)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan: Vec<Option<Category>> = vec![None; n_normal];
    for c in INJECTABLE {
        plan.extend(std::iter::repeat_n(Some(c), per_category));
    }
    plan.shuffle(&mut rng);
    let mut at = epoch();
    let mut records = Vec::with_capacity(plan.len());
    let mut expected = BTreeMap::new();
    for (i, kind) in plan.into_iter().enumerate() {
        let id = i as u64 + 1;
        let created = next_created(&mut rng, &mut at);
        let (mut r, _) = regular(id, created, &mut rng);
        set_merge(&mut r, rng.random_range(1.0..72.0));
        if let Some(c) = kind {
            inject(&mut r, c, &mut rng);
        }
        expected.insert(id, kind);
        records.push(r);
    }
    Ok((Corpus::new(meta("injected"), records)?, InjectionManifest { expected }))
}

// ---------------------------------------------------------------------------
// completion-time scenarios

/// How a cohort's completion time relates to its features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetModel {
    /// Churn, title and description length, commit count and assignee.
    Mixed,
    ChurnOnly,
    TitleOnly,
    /// Log-uniform over the range of `Mixed`, independent of features.
    Random,
}

/// Lower and upper bound of `ln(1 + hours)` produced by the target models.
const LOG_LO: f64 = 0.8;
const LOG_HI: f64 = 4.8;

fn unit_churn(churn: u64) -> f64 {
    ((churn as f64).ln_1p() / 901f64.ln()).min(1.0)
}

fn target_hours(model: TargetModel, t: &Traits, rng: &mut ChaCha8Rng) -> f64 {
    let noise = |rng: &mut ChaCha8Rng, s: f64| rng.random_range(-s..s);
    let u_title = (t.title_len as f64 - 12.0) / 78.0;
    let log = match model {
        TargetModel::Mixed => {
            LOG_LO
                + 1.4 * unit_churn(t.churn)
                + 1.0 * u_title
                + 0.7 * (t.desc_len as f64 / 800.0)
                + 0.5 * (t.commits as f64 - 1.0) / 7.0
                + if t.assignee { 0.4 } else { 0.0 }
                + noise(rng, 0.1)
        }
        TargetModel::ChurnOnly => LOG_LO + 3.5 * unit_churn(t.churn) + noise(rng, 0.1),
        TargetModel::TitleOnly => LOG_LO + 3.5 * u_title + noise(rng, 0.1),
        TargetModel::Random => rng.random_range(LOG_LO..LOG_HI),
    };
    log.max(0.0).exp_m1()
}

/// Marks that make a regular-looking MR a rule-detected deviation without
/// touching any completion-time feature.
fn mark_deviation(record: &mut MergeRequestRecord, rng: &mut ChaCha8Rng) {
    match rng.random_range(0..3) {
        0 => record.is_draft_flag = true,
        1 => record.labels.push("experimental".into()),
        _ => {
            let dirs = ["ci", "deploy", "k8s", "helm"];
            for (i, f) in record.file_changes.iter_mut().enumerate() {
                f.path = format!("{}/{i}-{}.yaml", dirs[i % dirs.len()], WORDS[i % WORDS.len()]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub count: usize,
    pub deviation: bool,
    pub target: TargetModel,
}

/// Merged MRs from the given cohorts, interleaved in time. Deviation cohorts
/// carry draft/label/build-path markers the default rules detect.
pub fn scenario_corpus(group: &str, cohorts: &[Cohort], seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan: Vec<(bool, TargetModel)> = cohorts
        .iter()
        .flat_map(|c| std::iter::repeat_n((c.deviation, c.target), c.count))
        .collect();
    plan.shuffle(&mut rng);
    let mut at = epoch();
    let mut records = Vec::with_capacity(plan.len());
    for (i, (deviation, model)) in plan.into_iter().enumerate() {
        let id = i as u64 + 1;
        let created = next_created(&mut rng, &mut at);
        let (mut r, traits) = regular(id, created, &mut rng);
        let hours = target_hours(model, &traits, &mut rng);
        set_merge(&mut r, hours);
        if deviation {
            mark_deviation(&mut r, &mut rng);
        }
        records.push(r);
    }
    Corpus::new(meta(group), records)
}

/// Regular MRs with feature-driven completion times plus deviations whose
/// completion times ignore their features.
pub fn impact_corpus(n_regular: usize, n_deviation: usize, seed: u64) -> Result<Corpus> {
    scenario_corpus(
        "impact",
        &[
            Cohort { count: n_regular, deviation: false, target: TargetModel::Mixed },
            Cohort { count: n_deviation, deviation: true, target: TargetModel::Random },
        ],
        seed,
    )
}
