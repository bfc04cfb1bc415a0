//! With-deviation vs without-deviation model comparisons over paired
//! bootstraps, and the deviation-only vs regular-only interpretation check.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Corpus, MergeRequestRecord};
use crate::matrix::FeatureMatrix;
use crate::metrics::{completion_time, extract_all, normalize_target, HistoryConfig, COMPLETION_FIELDS};
use crate::models::{
    eval_metrics, impurity_importance, permutation_importance, train, EnsembleKind, EnsembleSpec, EvalMetrics,
    ImportanceMethod, ImportanceVector,
};
use crate::stats::{
    bootstrap_split, cliffs_delta, correlation_filter, improvement_factor, kendall_tau, median, redundancy_filter,
    scott_knott_esd, topk_overlap, wilcoxon_signed_rank, Direction, EffectSizeLabel, FilterLog, RankTable,
    ScottKnottConfig,
};
use crate::taxonomy::DeviationVerdict;

pub use report::{cliff_mark, kendall_mark, overlap_mark, IMPACT_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    WithDeviations,
    WithoutDeviations,
    DeviationsOnly,
    RegularOnly,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::WithDeviations => "with_deviations",
            Arm::WithoutDeviations => "without_deviations",
            Arm::DeviationsOnly => "deviations_only",
            Arm::RegularOnly => "regular_only",
        }
    }

    fn admits(self, is_deviation: bool) -> bool {
        match self {
            Arm::WithDeviations => true,
            Arm::WithoutDeviations | Arm::RegularOnly => !is_deviation,
            Arm::DeviationsOnly => is_deviation,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpactConfig {
    pub n_boot: usize,
    pub seed: u64,
    pub models: Vec<EnsembleSpec>,
    /// Restrict to these projects, one report row each; empty pools the
    /// whole corpus into a single row.
    pub projects: Vec<u64>,
    pub correlation_threshold: f64,
    pub r2_threshold: f64,
    pub importance: ImportanceMethod,
    pub permutation_repeats: usize,
    pub min_arm_size: usize,
    pub alpha: f64,
    pub scott_knott: ScottKnottConfig,
    pub history: HistoryConfig,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        ImpactConfig {
            n_boot: 20,
            seed: 0,
            models: EnsembleKind::ALL.iter().map(|k| EnsembleSpec::new(*k, 0)).collect(),
            projects: Vec::new(),
            correlation_threshold: 0.70,
            r2_threshold: 0.90,
            importance: ImportanceMethod::Permutation,
            permutation_repeats: 5,
            min_arm_size: 50,
            alpha: 0.05,
            scott_knott: ScottKnottConfig::default(),
            history: HistoryConfig::default(),
        }
    }
}

impl ImpactConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot == 0 {
            return Err(Error::Config("n_boot must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model spec is required".into()));
        }
        let kinds: BTreeSet<EnsembleKind> = self.models.iter().map(|m| m.kind).collect();
        if kinds.len() != self.models.len() {
            return Err(Error::Config("each model kind may appear once".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::Config("correlation_threshold must lie in (0,1]".into()));
        }
        if !(self.r2_threshold > 0.0 && self.r2_threshold <= 1.0) {
            return Err(Error::Config("r2_threshold must lie in (0,1]".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0,1)".into()));
        }
        if self.permutation_repeats == 0 {
            return Err(Error::Config("permutation_repeats must be at least 1".into()));
        }
        if self.min_arm_size < 10 {
            return Err(Error::Config("min_arm_size below 10 cannot train a model".into()));
        }
        Ok(())
    }

    /// Seed shared by both arms in bootstrap iteration `i`.
    pub fn iteration_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    pub scope: String,
    pub model: EnsembleKind,
    pub arm: Arm,
    pub iteration: usize,
    pub metrics: EvalMetrics,
    pub importances: ImportanceVector,
}

/// One arm's outcome for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub n_mrs: usize,
    pub features: Vec<String>,
    pub filtered: FilterLog,
    pub median: EvalMetrics,
    pub ranks: RankTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    /// Improvement factor; absent when undefined (e.g. SA of the
    /// with-deviation arm not above zero).
    pub ratio: Option<f64>,
    /// Cliff's delta of the without arm against the with arm.
    pub cliff: EffectSizeLabel,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    /// Features surviving the filters in both arms.
    pub compared: Vec<String>,
    pub kendall: Option<EffectSizeLabel>,
    pub t1: Option<EffectSizeLabel>,
    pub t3: Option<EffectSizeLabel>,
    pub t5: Option<EffectSizeLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub scope: String,
    pub model: EnsembleKind,
    pub with: ArmSummary,
    pub without: ArmSummary,
    pub mse: MetricComparison,
    pub mae: MetricComparison,
    pub sa: MetricComparison,
    pub ranks: RankComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub group: String,
    pub n_boot: usize,
    pub seed: u64,
    pub rows: Vec<ImpactRow>,
    pub runs: Vec<BootstrapRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationRow {
    pub scope: String,
    pub model: EnsembleKind,
    pub deviations: ArmSummary,
    pub regular: ArmSummary,
    pub ranks: RankComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationReport {
    pub group: String,
    pub n_boot: usize,
    pub seed: u64,
    pub rows: Vec<InterpretationRow>,
}

/// Feature rows and raw completion hours for every merged MR in a scope.
struct ScopeData<'a> {
    name: String,
    records: Vec<&'a MergeRequestRecord>,
    deviation: Vec<bool>,
    features: Vec<[f64; 26]>,
    hours: Vec<f64>,
}

fn scopes<'a>(corpus: &'a Corpus, verdicts: &[DeviationVerdict], config: &ImpactConfig) -> Result<Vec<ScopeData<'a>>> {
    let flags: HashMap<(u64, u64), bool> =
        verdicts.iter().map(|v| ((v.project_id, v.mr_id), v.is_deviation)).collect();
    let merged: Vec<&MergeRequestRecord> = corpus.records.iter().filter(|r| r.is_merged()).collect();
    let mut groups: Vec<(String, Vec<&MergeRequestRecord>)> = Vec::new();
    if config.projects.is_empty() {
        groups.push((corpus.meta.group.clone(), merged));
    } else {
        for pid in &config.projects {
            let name = corpus
                .project(*pid)
                .ok_or_else(|| Error::Consistency(format!("project {pid} is not in the corpus")))?
                .path
                .clone()
                .unwrap_or_else(|| format!("project-{pid}"));
            groups.push((name, merged.iter().copied().filter(|r| r.project_id == *pid).collect()));
        }
    }
    let mut out = Vec::new();
    for (name, records) in groups {
        let mut deviation = Vec::with_capacity(records.len());
        let mut hours = Vec::with_capacity(records.len());
        for r in &records {
            let flag = flags.get(&(r.project_id, r.id)).ok_or_else(|| {
                Error::Consistency(format!("no verdict for MR {} in project {}", r.id, r.project_id))
            })?;
            deviation.push(*flag);
            hours.push(completion_time(r)?);
        }
        let features = extract_all(corpus, &records, &config.history).iter().map(|f| f.values()).collect();
        out.push(ScopeData { name, records, deviation, features, hours });
    }
    Ok(out)
}

struct ArmOutcome {
    summary: ArmSummary,
    runs: Vec<BootstrapRun>,
}

impl ArmOutcome {
    fn metric(&self, pick: fn(&EvalMetrics) -> f64) -> Vec<f64> {
        self.runs.iter().map(|r| pick(&r.metrics)).collect()
    }
}

fn arm_rows(scope: &ScopeData, arm: Arm) -> Vec<usize> {
    (0..scope.records.len()).filter(|&i| arm.admits(scope.deviation[i])).collect()
}

/// Filters, bootstraps and rank aggregation for one arm and every model.
fn run_arm(scope: &ScopeData, arm: Arm, rows: &[usize], config: &ImpactConfig) -> Result<Vec<ArmOutcome>> {
    if rows.len() < config.min_arm_size {
        return Err(Error::InsufficientData {
            arm: format!("{}/{}", scope.name, arm),
            have: rows.len(),
            need: config.min_arm_size,
        });
    }
    let hours: Vec<f64> = rows.iter().map(|&i| scope.hours[i]).collect();
    let (targets, _) = normalize_target(&hours)?;
    let y: Vec<f64> = targets.iter().map(|t| t.normalized).collect();
    let names: Vec<String> = COMPLETION_FIELDS.iter().map(|s| s.to_string()).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|&i| scope.features[i].to_vec()).collect();
    let ids: Vec<u64> = rows.iter().map(|&i| scope.records[i].id).collect();
    let full = FeatureMatrix::from_rows(names, ids, &table)?;

    let corr = correlation_filter(&full, config.correlation_threshold)?;
    let after_corr = full.select_columns(&corr.kept)?;
    let filtered = corr.then(redundancy_filter(&after_corr, config.r2_threshold)?);
    if filtered.kept.is_empty() {
        return Err(Error::InsufficientData {
            arm: format!("{}/{} (no feature survived the filters)", scope.name, arm),
            have: 0,
            need: 1,
        });
    }
    let x = full.select_columns(&filtered.kept)?;

    let jobs: Vec<(usize, usize)> = (0..config.models.len())
        .flat_map(|m| (0..config.n_boot).map(move |i| (m, i)))
        .collect();
    let runs: Vec<BootstrapRun> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let seed = config.iteration_seed(i);
            let spec = config.models[m].with_seed(seed);
            let split = bootstrap_split(y.len(), seed)?;
            let x_train = x.select_rows(&split.train);
            let y_train: Vec<f64> = split.train.iter().map(|&r| y[r]).collect();
            let x_test = x.select_rows(&split.out_of_bag);
            let y_test: Vec<f64> = split.out_of_bag.iter().map(|&r| y[r]).collect();
            let model = train(&spec, &x_train, &y_train)?;
            let pred = model.predict(&x_test)?;
            let metrics = eval_metrics(&y_test, &pred, &y_train, seed)?;
            let importances = match config.importance {
                ImportanceMethod::Permutation => {
                    permutation_importance(&model, &x_test, &y_test, seed, config.permutation_repeats)?
                }
                ImportanceMethod::Impurity => impurity_importance(&model),
            };
            Ok(BootstrapRun {
                scope: scope.name.clone(),
                model: spec.kind,
                arm,
                iteration: i,
                metrics,
                importances,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(config.models.len());
    for (m, chunk) in runs.chunks(config.n_boot).enumerate() {
        debug_assert!(chunk.iter().all(|r| r.model == config.models[m].kind));
        let pick = |f: fn(&EvalMetrics) -> f64| median(&chunk.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        let samples: Vec<(String, Vec<f64>)> = filtered
            .kept
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), chunk.iter().map(|r| r.importances.values[j]).collect()))
            .collect();
        let ranks = scott_knott_esd(&samples, &config.scott_knott)?;
        out.push(ArmOutcome {
            summary: ArmSummary {
                arm,
                n_mrs: rows.len(),
                features: filtered.kept.clone(),
                filtered: filtered.clone(),
                median: EvalMetrics { mse: pick(|m| m.mse), mae: pick(|m| m.mae), sa: pick(|m| m.sa) },
                ranks,
            },
            runs: chunk.to_vec(),
        });
    }
    Ok(out)
}

/// Reuse the first arm's outcome when both arms hold the same rows; the
/// pipeline is deterministic, so this only saves time.
fn run_pair(
    scope: &ScopeData,
    first: Arm,
    second: Arm,
    config: &ImpactConfig,
) -> Result<(Vec<ArmOutcome>, Vec<ArmOutcome>)> {
    let rows_a = arm_rows(scope, first);
    let rows_b = arm_rows(scope, second);
    let a = run_arm(scope, first, &rows_a, config)?;
    if rows_a == rows_b {
        let b = a
            .iter()
            .map(|o| ArmOutcome {
                summary: ArmSummary { arm: second, ..o.summary.clone() },
                runs: o.runs.iter().map(|r| BootstrapRun { arm: second, ..r.clone() }).collect(),
            })
            .collect();
        return Ok((a, b));
    }
    let b = run_arm(scope, second, &rows_b, config)?;
    Ok((a, b))
}

fn compare_ranks(a: &RankTable, b: &RankTable) -> Result<RankComparison> {
    let names_a = a.names();
    let shared: BTreeSet<&str> = b.names().into_iter().filter(|n| names_a.contains(n)).collect();
    let ra = a.restrict(&shared);
    let rb = b.restrict(&shared);
    let overlap = |k: usize| -> Result<Option<EffectSizeLabel>> {
        if shared.len() >= k {
            topk_overlap(&ra, &rb, k).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(RankComparison {
        compared: shared.iter().map(|s| s.to_string()).collect(),
        kendall: if shared.len() >= 2 { Some(kendall_tau(&ra, &rb)?) } else { None },
        t1: overlap(1)?,
        t3: overlap(3)?,
        t5: overlap(5)?,
    })
}

fn compare_metric(without: &[f64], with: &[f64], m_without: f64, m_with: f64, direction: Direction, alpha: f64) -> Result<MetricComparison> {
    let ratio = match improvement_factor(m_without, m_with, direction) {
        Ok(r) => Some(r),
        Err(Error::Undefined(_) | Error::Domain(_)) => None,
        Err(e) => return Err(e),
    };
    let test = wilcoxon_signed_rank(without, with)?;
    Ok(MetricComparison {
        ratio,
        cliff: cliffs_delta(without, with)?,
        p_value: test.p_value,
        significant: test.significant(alpha),
    })
}

/// Compare models trained on all merged MRs against models trained without
/// the MRs flagged as deviations.
pub fn run_impact(corpus: &Corpus, verdicts: &[DeviationVerdict], config: &ImpactConfig) -> Result<ImpactReport> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut all_runs = Vec::new();
    for scope in scopes(corpus, verdicts, config)? {
        let (with, without) = run_pair(&scope, Arm::WithDeviations, Arm::WithoutDeviations, config)?;
        for (w, wo) in with.into_iter().zip(without) {
            let cmp = |pick: fn(&EvalMetrics) -> f64, dir| {
                compare_metric(
                    &wo.metric(pick),
                    &w.metric(pick),
                    pick(&wo.summary.median),
                    pick(&w.summary.median),
                    dir,
                    config.alpha,
                )
            };
            let row = ImpactRow {
                scope: scope.name.clone(),
                model: w.runs[0].model,
                mse: cmp(|m| m.mse, Direction::LowerBetter)?,
                mae: cmp(|m| m.mae, Direction::LowerBetter)?,
                sa: cmp(|m| m.sa, Direction::HigherBetter)?,
                ranks: compare_ranks(&w.summary.ranks, &wo.summary.ranks)?,
                with: w.summary,
                without: wo.summary,
            };
            all_runs.extend(w.runs);
            all_runs.extend(wo.runs);
            rows.push(row);
        }
    }
    Ok(ImpactReport {
        group: corpus.meta.group.clone(),
        n_boot: config.n_boot,
        seed: config.seed,
        rows,
        runs: all_runs,
    })
}

/// Compare feature rankings of models trained only on deviations with
/// models trained only on regular MRs. Performance is not compared because
/// the populations differ.
pub fn run_deviation_vs_regular(
    corpus: &Corpus,
    verdicts: &[DeviationVerdict],
    config: &ImpactConfig,
) -> Result<InterpretationReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for scope in scopes(corpus, verdicts, config)? {
        let (dev, reg) = run_pair(&scope, Arm::DeviationsOnly, Arm::RegularOnly, config)?;
        for (d, r) in dev.into_iter().zip(reg) {
            rows.push(InterpretationRow {
                scope: scope.name.clone(),
                model: d.runs[0].model,
                ranks: compare_ranks(&d.summary.ranks, &r.summary.ranks)?,
                deviations: d.summary,
                regular: r.summary,
            });
        }
    }
    Ok(InterpretationReport {
        group: corpus.meta.group.clone(),
        n_boot: config.n_boot,
        seed: config.seed,
        rows,
    })
}

/// Number of deviation and regular merged MRs per scope, for reporting.
pub fn arm_sizes(corpus: &Corpus, verdicts: &[DeviationVerdict]) -> BTreeMap<u64, (usize, usize)> {
    let flags: HashMap<(u64, u64), bool> =
        verdicts.iter().map(|v| ((v.project_id, v.mr_id), v.is_deviation)).collect();
    let mut out: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for r in corpus.records.iter().filter(|r| r.is_merged()) {
        let e = out.entry(r.project_id).or_default();
        match flags.get(&(r.project_id, r.id)) {
            Some(true) => e.0 += 1,
            Some(false) => e.1 += 1,
            None => {}
        }
    }
    out
}
