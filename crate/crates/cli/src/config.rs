//! `mrscope.toml` run description.

use std::path::{Path, PathBuf};

use mrscope_core::impact::ImpactConfig;
use mrscope_core::{Error, Result, RuleConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    pub out_dir: Option<PathBuf>,
    pub api: ApiConfig,
    pub rules: RuleConfig,
    pub sampling: SamplingConfig,
    pub impact: ImpactConfig,
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApiConfig {
    pub host: Option<String>,
    pub group: Option<String>,
    pub projects: Vec<u64>,
    pub page_size: u32,
    pub max_attempts: u32,
    pub fan_out: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            host: None,
            group: None,
            projects: Vec::new(),
            page_size: 100,
            max_attempts: 5,
            fan_out: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub z: f64,
    pub margin: f64,
    pub proportion: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            z: 1.96,
            margin: 0.05,
            proportion: 0.5,
            seed: 0,
            stratify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Rules,
    Service,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub backend: Backend,
    /// Program and arguments of the classification service.
    pub command: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        if !(s.z > 0.0 && s.margin > 0.0 && s.margin < 1.0 && s.proportion > 0.0 && s.proportion < 1.0) {
            return Err(Error::Config("sampling needs z > 0 and margin, proportion in (0,1)".into()));
        }
        if self.api.page_size == 0 || self.api.page_size > 100 {
            return Err(Error::Config("api.page_size must lie in 1..=100".into()));
        }
        if self.api.max_attempts == 0 || self.api.fan_out == 0 {
            return Err(Error::Config("api.max_attempts and api.fan_out must be positive".into()));
        }
        let r = &self.rules;
        if !(r.cleaning_max_addition_ratio >= 0.0) {
            return Err(Error::Config("rules.cleaning_max_addition_ratio must be non-negative".into()));
        }
        mrscope_core::taxonomy::RuleSet::compile(r)?;
        self.impact.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["colour = 1", "[rules]\nhuge_comits = 3", "[impact]\nnboot = 3", "[api]\ntoken = \"x\""] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.class(), "config", "{text}");
        }
    }

    #[test]
    fn nested_sections() {
        let cfg = RunConfig::parse(
            r#"
out_dir = "runs/a"
[api]
host = "https://git.example"
projects = [4, 9]
[rules]
huge_commits = 80
[impact]
n_boot = 7
[[impact.models]]
kind = "extra_random_trees"
n_trees = 30
[classifier]
backend = "service"
command = ["python", "serve.py"]
"#,
        )
        .unwrap();
        assert_eq!(cfg.api.projects, vec![4, 9]);
        assert_eq!(cfg.rules.huge_commits, 80);
        assert_eq!(cfg.impact.n_boot, 7);
        assert_eq!(cfg.impact.models.len(), 1);
        assert_eq!(cfg.classifier.backend, Backend::Service);
    }

    #[test]
    fn out_of_domain_values() {
        assert!(RunConfig::parse("[sampling]\nmargin = 1.5").is_err());
        assert!(RunConfig::parse("[impact]\nalpha = 2.0").is_err());
        assert!(RunConfig::parse("[rules]\nbuild_globs = [\"[\"]").is_err());
    }
}
