//! Deviation categories, the rule-based detector, sampling for manual
//! annotation, and annotation bookkeeping.

mod annotation;
mod prevalence;
mod rules;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotation::{
    diff_annotations, import_annotations, read_annotations, write_annotation_template, AgreementReport,
    AnnotationEntry, AnnotationSet, Label,
};
pub use prevalence::{prevalence_report, CategoryShare, PrevalenceReport, ProjectPrevalence};
pub use rules::{detect_deviation, detect_all, no_review_activity, RuleConfig, RuleSet};
pub use sampling::{draw_positions, draw_sample, sample_size, SamplePlan};

/// Deviation categories, declared in detector priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "ECS")]
    EmptyChangeSet,
    #[serde(rename = "HC")]
    HugeChange,
    #[serde(rename = "RC")]
    RevertCommit,
    #[serde(rename = "EOW")]
    ExperimentalOrWip,
    #[serde(rename = "LU")]
    LibraryUpdate,
    #[serde(rename = "BOCA")]
    BuildOrConfig,
    #[serde(rename = "CC")]
    CodeCleaning,
    #[serde(rename = "DU")]
    DocumentationUpdate,
}

impl Category {
    /// Highest priority first.
    pub const PRIORITY: [Category; 8] = [
        Category::EmptyChangeSet,
        Category::HugeChange,
        Category::RevertCommit,
        Category::ExperimentalOrWip,
        Category::LibraryUpdate,
        Category::BuildOrConfig,
        Category::CodeCleaning,
        Category::DocumentationUpdate,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::ExperimentalOrWip => "EOW",
            Category::CodeCleaning => "CC",
            Category::LibraryUpdate => "LU",
            Category::BuildOrConfig => "BOCA",
            Category::RevertCommit => "RC",
            Category::HugeChange => "HC",
            Category::EmptyChangeSet => "ECS",
            Category::DocumentationUpdate => "DU",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            Category::ExperimentalOrWip => "Draft or work-in-progress MR opened to try something out, not to be integrated yet.",
            Category::CodeCleaning => "Removes dead or redundant code without adding behavior.",
            Category::LibraryUpdate => "Bumps the version of a dependency and nothing else.",
            Category::BuildOrConfig => "Touches only CI pipelines, build scripts or deployment configuration.",
            Category::RevertCommit => "Rolls back earlier changes.",
            Category::HugeChange => "Too large for line-by-line review: hundreds of commits or ten thousand changed lines.",
            Category::EmptyChangeSet => "Carries no file modifications at all.",
            Category::DocumentationUpdate => "Edits only documentation or translations and draws no review activity.",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::PRIORITY
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::domain(format!("unknown deviation category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub category: Category,
    pub evidence: String,
}

/// Detector output for one MR.
///
/// For rule verdicts `primary` is the highest-priority match and
/// `is_deviation == !matched.is_empty()`. A binary classifier may flag a
/// deviation without naming a category; such verdicts have no matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationVerdict {
    pub project_id: u64,
    pub mr_id: u64,
    pub matched: Vec<RuleMatch>,
    pub primary: Option<Category>,
    pub is_deviation: bool,
}

impl DeviationVerdict {
    pub fn normal(project_id: u64, mr_id: u64) -> Self {
        DeviationVerdict {
            project_id,
            mr_id,
            matched: Vec::new(),
            primary: None,
            is_deviation: false,
        }
    }

    pub fn from_matches(project_id: u64, mr_id: u64, mut matched: Vec<RuleMatch>) -> Self {
        matched.sort_by_key(|m| m.category);
        let primary = matched.first().map(|m| m.category);
        DeviationVerdict {
            project_id,
            mr_id,
            is_deviation: primary.is_some(),
            matched,
            primary,
        }
    }
}

/// Verdict table: `project_id,mr_id,is_deviation,primary,matched,evidence`.
pub fn write_verdicts<W: std::io::Write>(verdicts: &[DeviationVerdict], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["project_id", "mr_id", "is_deviation", "primary", "matched", "evidence"])?;
    for v in verdicts {
        w.write_record([
            v.project_id.to_string(),
            v.mr_id.to_string(),
            v.is_deviation.to_string(),
            v.primary.map(|c| c.code().to_string()).unwrap_or_default(),
            v.matched.iter().map(|m| m.category.code()).collect::<Vec<_>>().join(";"),
            v.matched.iter().map(|m| m.evidence.as_str()).collect::<Vec<_>>().join(" | "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_verdicts<R: std::io::Read>(input: R) -> Result<Vec<DeviationVerdict>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let parse_err = |msg: String| Error::Parse { line, id: None, msg };
        let field = |k: usize| row.get(k).unwrap_or("");
        let project_id = field(0).parse().map_err(|e| parse_err(format!("project_id: {e}")))?;
        let mr_id: u64 = field(1).parse().map_err(|e| parse_err(format!("mr_id: {e}")))?;
        let is_deviation: bool = field(2).parse().map_err(|e| parse_err(format!("is_deviation: {e}")))?;
        let codes: Vec<&str> = field(4).split(';').filter(|s| !s.is_empty()).collect();
        let evidence: Vec<&str> = field(5).split(" | ").collect();
        let matched = codes
            .iter()
            .enumerate()
            .map(|(k, c)| {
                Ok(RuleMatch {
                    category: c.parse()?,
                    evidence: evidence.get(k).copied().unwrap_or("").to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(e.to_string()))?;
        let primary = match field(3) {
            "" => None,
            c => Some(c.parse().map_err(|e: Error| parse_err(e.to_string()))?),
        };
        out.push(DeviationVerdict {
            project_id,
            mr_id,
            matched,
            primary,
            is_deviation,
        });
    }
    Ok(out)
}
