use std::fmt::Write as _;
use std::io::Write;

use super::{ImpactReport, ImpactRow, InterpretationReport, MetricComparison, RankComparison};
use crate::error::{Error, Result};
use crate::stats::{EffectSizeLabel, Magnitude};

pub const IMPACT_CSV_HEADER: [&str; 27] = [
    "scope",
    "model",
    "n_with",
    "n_without",
    "mse_ratio",
    "mse_cliff",
    "mse_magnitude",
    "mse_p",
    "mse_significant",
    "mae_ratio",
    "mae_cliff",
    "mae_magnitude",
    "mae_p",
    "mae_significant",
    "sa_ratio",
    "sa_cliff",
    "sa_magnitude",
    "sa_p",
    "sa_significant",
    "kendall",
    "kendall_magnitude",
    "t1",
    "t1_magnitude",
    "t3",
    "t3_magnitude",
    "t5",
    "t5_magnitude",
];

pub fn cliff_mark(m: Magnitude) -> &'static str {
    match m {
        Magnitude::Small => "+",
        Magnitude::Medium => "++",
        Magnitude::Large => "+++",
        _ => "",
    }
}

pub fn kendall_mark(m: Magnitude) -> &'static str {
    match m {
        Magnitude::Weak => "*",
        Magnitude::Moderate => "+",
        Magnitude::Strong => "++",
        _ => "",
    }
}

pub fn overlap_mark(m: Magnitude) -> &'static str {
    match m {
        Magnitude::Small => "*",
        Magnitude::Medium => "+",
        Magnitude::Large => "++",
        _ => "",
    }
}

const NA: &str = "NA";

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| NA.to_string())
}

fn label_fields(l: &Option<EffectSizeLabel>) -> [String; 2] {
    match l {
        Some(l) => [format!("{}", l.value), l.magnitude.to_string()],
        None => [NA.to_string(), NA.to_string()],
    }
}

fn metric_fields(m: &MetricComparison) -> [String; 5] {
    [
        num(m.ratio),
        format!("{}", m.cliff.value),
        m.cliff.magnitude.to_string(),
        format!("{}", m.p_value),
        m.significant.to_string(),
    ]
}

fn metric_cell(m: &MetricComparison) -> String {
    let body = match m.ratio {
        Some(r) => format!("{r:.2}{}", cliff_mark(m.cliff.magnitude)),
        None => NA.to_string(),
    };
    if m.significant {
        format!("**{body}**")
    } else {
        body
    }
}

fn label_cell(l: &Option<EffectSizeLabel>, mark: fn(Magnitude) -> &'static str) -> String {
    match l {
        Some(l) => format!("{:.2}{}", l.value, mark(l.magnitude)),
        None => NA.to_string(),
    }
}

fn rank_cells(r: &RankComparison) -> [String; 4] {
    [
        label_cell(&r.kendall, kendall_mark),
        label_cell(&r.t1, overlap_mark),
        label_cell(&r.t3, overlap_mark),
        label_cell(&r.t5, overlap_mark),
    ]
}

fn top_names(r: &crate::stats::RankTable, k: usize) -> String {
    r.entries
        .iter()
        .take(k)
        .map(|e| format!("{} ({})", e.name, e.rank))
        .collect::<Vec<_>>()
        .join(", ")
}

const LEGEND: &str = "\
Ratios above 1 favour the model trained without deviations. \
Effect size of the bootstrap distributions (Cliff's delta): none <= 0.147 < + <= 0.33 < ++ <= 0.474 < +++. \
Bold marks a signed-rank p-value <= 0.05.\n\
Kendall tau: * <= 0.3 < + <= 0.6 < ++. \
Top-k overlap: none <= 0.25 < * <= 0.5 < + <= 0.75 < ++.\n";

impl ImpactRow {
    fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.scope.clone(),
            self.model.to_string(),
            self.with.n_mrs.to_string(),
            self.without.n_mrs.to_string(),
        ];
        for m in [&self.mse, &self.mae, &self.sa] {
            rec.extend(metric_fields(m));
        }
        for l in [&self.ranks.kendall, &self.ranks.t1, &self.ranks.t3, &self.ranks.t5] {
            rec.extend(label_fields(l));
        }
        rec
    }
}

impl ImpactReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(IMPACT_CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Impact of deviations: {}\n", self.group);
        let _ = writeln!(s, "{} bootstrap iterations, seed {}.\n", self.n_boot, self.seed);
        s.push_str("| Scope | Model | MSE | MAE | SA | K | T1 | T3 | T5 |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let [k, t1, t3, t5] = rank_cells(&row.ranks);
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {k} | {t1} | {t3} | {t5} |",
                row.scope,
                row.model.short(),
                metric_cell(&row.mse),
                metric_cell(&row.mae),
                metric_cell(&row.sa),
            );
        }
        s.push('\n');
        s.push_str(LEGEND);
        for row in &self.rows {
            let _ = writeln!(s, "\n## {} / {}\n", row.scope, row.model);
            let _ = writeln!(
                s,
                "- MRs: {} with deviations, {} without",
                row.with.n_mrs, row.without.n_mrs
            );
            let _ = writeln!(
                s,
                "- median MSE/MAE/SA with: {:.4} / {:.4} / {:.4}",
                row.with.median.mse, row.with.median.mae, row.with.median.sa
            );
            let _ = writeln!(
                s,
                "- median MSE/MAE/SA without: {:.4} / {:.4} / {:.4}",
                row.without.median.mse, row.without.median.mae, row.without.median.sa
            );
            let _ = writeln!(s, "- top features with: {}", top_names(&row.with.ranks, 5));
            let _ = writeln!(s, "- top features without: {}", top_names(&row.without.ranks, 5));
            let dropped_with = row.with.filtered.removed_names().join(", ");
            let dropped_without = row.without.filtered.removed_names().join(", ");
            let _ = writeln!(s, "- filtered out with: {dropped_with}");
            let _ = writeln!(s, "- filtered out without: {dropped_without}");
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("report serialization: {e}")))
    }
}

impl InterpretationReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scope",
            "model",
            "n_deviations",
            "n_regular",
            "kendall",
            "kendall_magnitude",
            "t1",
            "t1_magnitude",
            "t3",
            "t3_magnitude",
            "t5",
            "t5_magnitude",
        ])?;
        for row in &self.rows {
            let mut rec = vec![
                row.scope.clone(),
                row.model.to_string(),
                row.deviations.n_mrs.to_string(),
                row.regular.n_mrs.to_string(),
            ];
            for l in [&row.ranks.kendall, &row.ranks.t1, &row.ranks.t3, &row.ranks.t5] {
                rec.extend(label_fields(l));
            }
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Deviation vs regular MR models: {}\n", self.group);
        s.push_str("| Scope | Model | K | T1 | T3 | T5 | Top features (deviations) | Top features (regular) |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let [k, t1, t3, t5] = rank_cells(&row.ranks);
            let _ = writeln!(
                s,
                "| {} | {} | {k} | {t1} | {t3} | {t5} | {} | {} |",
                row.scope,
                row.model.short(),
                top_names(&row.deviations.ranks, 3),
                top_names(&row.regular.ranks, 3),
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("report serialization: {e}")))
    }
}
