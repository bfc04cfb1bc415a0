use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Category, DeviationVerdict, RuleMatch};
use crate::error::{Error, Result};
use crate::ingest::{Corpus, MergeRequestRecord};
use crate::metrics::{extract_deviation_features, DeviationFeatureVector};

/// Thresholds and path lists for the `rules.*` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleConfig {
    /// HC when the commit count is strictly above this.
    pub huge_commits: usize,
    /// HC when churn is at or above this.
    pub huge_churn: u64,
    /// LU only when churn stays at or below this.
    pub library_update_max_churn: u64,
    /// CC when additions <= ratio * deletions.
    pub cleaning_max_addition_ratio: f64,
    pub wip_title_prefixes: Vec<String>,
    pub wip_labels: Vec<String>,
    pub revert_prefixes: Vec<String>,
    pub dependency_globs: Vec<String>,
    pub build_globs: Vec<String>,
    pub doc_globs: Vec<String>,
    pub enable_documentation_updates: bool,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            huge_commits: 500,
            huge_churn: 10_000,
            library_update_max_churn: 20,
            cleaning_max_addition_ratio: 0.1,
            wip_title_prefixes: strings(&["draft:", "wip", "[wip]", "[draft]", "(draft)"]),
            wip_labels: strings(&["wip", "draft", "work in progress", "experimental"]),
            revert_prefixes: strings(&["revert \""]),
            dependency_globs: strings(&[
                "**/Cargo.lock",
                "**/Cargo.toml",
                "**/package.json",
                "**/package-lock.json",
                "**/yarn.lock",
                "**/pnpm-lock.yaml",
                "**/requirements*.txt",
                "**/poetry.lock",
                "**/Pipfile",
                "**/Pipfile.lock",
                "**/pyproject.toml",
                "**/go.mod",
                "**/go.sum",
                "**/pom.xml",
                "**/Gemfile",
                "**/Gemfile.lock",
                "**/composer.json",
                "**/composer.lock",
                "**/conanfile.txt",
                "**/conanfile.py",
                "**/vcpkg.json",
                "**/*.csproj",
                "**/packages.config",
                "**/.gitmodules",
            ]),
            build_globs: strings(&[
                "**/.gitlab-ci.yml",
                "**/.gitlab-ci/**",
                ".gitlab/**",
                ".github/workflows/**",
                "**/Jenkinsfile",
                "**/Dockerfile",
                "**/Dockerfile.*",
                "**/*.dockerfile",
                "**/docker-compose*.yml",
                "**/docker-compose*.yaml",
                "**/.dockerignore",
                "**/Makefile",
                "**/*.mk",
                "**/CMakeLists.txt",
                "**/*.cmake",
                "**/meson.build",
                "**/BUILD",
                "**/BUILD.bazel",
                "**/WORKSPACE",
                "**/*.bzl",
                "**/build.gradle",
                "**/build.gradle.kts",
                "**/build.sh",
                "**/build.rs",
                "**/helm/**",
                "**/charts/**",
                "**/k8s/**",
                "**/kubernetes/**",
                "**/deploy/**",
                "**/ci/**",
                "**/scripts/ci/**",
                "**/.env",
                "**/.env.*",
            ]),
            doc_globs: strings(&[
                "**/*.md",
                "**/*.rst",
                "**/*.adoc",
                "**/*.txt",
                "docs/**",
                "doc/**",
                "**/*.po",
                "**/*.pot",
                "**/locales/**",
                "**/locale/**",
                "**/i18n/**",
                "**/translations/**",
                "**/LICENSE*",
                "**/CHANGELOG*",
            ]),
            enable_documentation_updates: false,
        }
    }
}

/// Rule config with compiled glob sets.
#[derive(Debug, Clone)]
pub struct RuleSet {
    config: RuleConfig,
    dependency: GlobSet,
    build: GlobSet,
    docs: GlobSet,
}

fn compile(patterns: &[String], key: &str) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| Error::Config(format!("rules.{key}: {e}")))?;
        b.add(glob);
    }
    b.build().map_err(|e| Error::Config(format!("rules.{key}: {e}")))
}

impl RuleSet {
    pub fn compile(config: &RuleConfig) -> Result<Self> {
        if !(config.cleaning_max_addition_ratio >= 0.0) {
            return Err(Error::Config("rules.cleaning_max_addition_ratio must be >= 0".into()));
        }
        Ok(RuleSet {
            dependency: compile(&config.dependency_globs, "dependency_globs")?,
            build: compile(&config.build_globs, "build_globs")?,
            docs: compile(&config.doc_globs, "doc_globs")?,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &RuleConfig {
        &self.config
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::compile(&RuleConfig::default()).expect("default globs compile")
    }
}

/// No human engagement from anyone but the author: no reviewer comments,
/// approvals, assignees or reviewers.
pub fn no_review_activity(record: &MergeRequestRecord) -> bool {
    record
        .notes
        .iter()
        .all(|n| n.is_system || n.author == record.author)
        && record.approvals.is_empty()
        && record.assignees.is_empty()
        && record.reviewers.is_empty()
}

fn starts_with_marker(text: &str, marker: &str) -> bool {
    let lower = text.trim_start().to_lowercase();
    let Some(rest) = lower.strip_prefix(marker) else {
        return false;
    };
    // "wip" must not swallow "wipe"
    let last = marker.chars().last();
    !last.is_some_and(char::is_alphanumeric) || !rest.chars().next().is_some_and(char::is_alphanumeric)
}

pub fn detect_deviation(
    features: &DeviationFeatureVector,
    record: &MergeRequestRecord,
    rules: &RuleSet,
) -> DeviationVerdict {
    let cfg = &rules.config;
    let mut matched = Vec::new();
    let mut hit = |category, evidence: String| matched.push(RuleMatch { category, evidence });
    let paths: Vec<&str> = record.file_changes.iter().map(|f| f.path.as_str()).collect();
    let all_in = |set: &GlobSet| !paths.is_empty() && paths.iter().all(|p| set.is_match(p));

    if paths.is_empty() || (features.additions == 0 && features.deletions == 0) {
        hit(
            Category::EmptyChangeSet,
            format!("{} files, +{}/-{}", paths.len(), features.additions, features.deletions),
        );
    }

    if features.n_commits > cfg.huge_commits {
        hit(Category::HugeChange, format!("{} commits > {}", features.n_commits, cfg.huge_commits));
    } else if features.code_churn >= cfg.huge_churn {
        hit(Category::HugeChange, format!("churn {} >= {}", features.code_churn, cfg.huge_churn));
    }

    let is_revert = |text: &str| cfg.revert_prefixes.iter().any(|p| starts_with_marker(text, p));
    if is_revert(&features.title) {
        hit(Category::RevertCommit, format!("revert title {:?}", features.title));
    } else if !features.commit_messages.is_empty() && features.commit_messages.iter().all(|m| is_revert(m)) {
        hit(
            Category::RevertCommit,
            format!("all {} commits are reverts", features.commit_messages.len()),
        );
    }

    if record.is_draft_flag {
        hit(Category::ExperimentalOrWip, "draft flag set".into());
    } else if let Some(p) = cfg.wip_title_prefixes.iter().find(|p| starts_with_marker(&features.title, p)) {
        hit(Category::ExperimentalOrWip, format!("title starts with {p:?}"));
    } else if let Some(l) = features
        .labels
        .iter()
        .find(|l| cfg.wip_labels.iter().any(|w| w.eq_ignore_ascii_case(l.trim())))
    {
        hit(Category::ExperimentalOrWip, format!("label {l:?}"));
    }

    if all_in(&rules.dependency) && features.code_churn <= cfg.library_update_max_churn {
        hit(
            Category::LibraryUpdate,
            format!("only dependency manifests, churn {} <= {}", features.code_churn, cfg.library_update_max_churn),
        );
    }

    if all_in(&rules.build) {
        hit(Category::BuildOrConfig, format!("only build/CI paths ({} files)", paths.len()));
    }

    let no_new_files = record.file_changes.iter().all(|f| !f.is_new_file);
    if features.deletions > 0
        && features.additions as f64 <= cfg.cleaning_max_addition_ratio * features.deletions as f64
        && no_new_files
    {
        hit(
            Category::CodeCleaning,
            format!("+{} <= {} x -{}", features.additions, cfg.cleaning_max_addition_ratio, features.deletions),
        );
    }

    if cfg.enable_documentation_updates && all_in(&rules.docs) && no_review_activity(record) {
        hit(Category::DocumentationUpdate, "only docs paths, no review activity".into());
    }

    DeviationVerdict::from_matches(record.project_id, record.id, matched)
}

/// Verdicts for every record, in corpus order.
pub fn detect_all(corpus: &Corpus, rules: &RuleSet) -> Vec<DeviationVerdict> {
    corpus
        .records
        .par_iter()
        .map(|r| detect_deviation(&extract_deviation_features(r), r, rules))
        .collect()
}
