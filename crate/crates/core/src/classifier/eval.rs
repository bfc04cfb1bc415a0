use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{median, scott_knott_esd, ScottKnottConfig};

pub const EVAL_HEADER: [&str; 7] = ["method", "param", "iteration", "accuracy", "precision", "recall", "f1"];
const METHODS: [&str; 2] = ["fewshot", "encoder_finetune"];

/// One bootstrap evaluation of a classifier configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    /// Shots per class for `fewshot`, epochs for `encoder_finetune`.
    pub param: String,
    pub iteration: u32,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn read_eval_records<R: Read>(input: R) -> Result<Vec<EvalRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != EVAL_HEADER {
        return Err(Error::Parse {
            line: 1,
            id: None,
            msg: format!("expected header {}, got {}", EVAL_HEADER.join(","), header.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, row) in rdr.deserialize::<EvalRecord>().enumerate() {
        let line = i + 2;
        let rec = row.map_err(|e| Error::Parse { line, id: None, msg: e.to_string() })?;
        let bad = |msg: String| Err(Error::Parse { line, id: None, msg });
        if !METHODS.contains(&rec.method.as_str()) {
            return bad(format!("unknown method {:?}", rec.method));
        }
        for (name, v) in [("accuracy", rec.accuracy), ("precision", rec.precision), ("recall", rec.recall), ("f1", rec.f1)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0,1]"));
            }
        }
        if !seen.insert((rec.method.clone(), rec.param.clone(), rec.iteration)) {
            return bad(format!("duplicate iteration {} for {}/{}", rec.iteration, rec.method, rec.param));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSummary {
    pub method: String,
    pub param: String,
    pub iterations: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Scott-Knott ESD rank on accuracy; 1 is best.
    pub rank: u32,
}

/// Median metrics per configuration, ranked by accuracy.
pub fn summarize_eval(records: &[EvalRecord], config: &ScottKnottConfig) -> Result<Vec<ConfigurationSummary>> {
    if records.is_empty() {
        return Err(Error::domain("no evaluation records"));
    }
    let mut groups: BTreeMap<(String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.clone(), r.param.clone())).or_default().push(r);
    }
    let key = |m: &str, p: &str| format!("{m}/{p}");
    let samples: Vec<(String, Vec<f64>)> = groups
        .iter()
        .map(|((m, p), rs)| (key(m, p), rs.iter().map(|r| r.accuracy).collect()))
        .collect();
    let ranks = scott_knott_esd(&samples, config)?;
    let mut out: Vec<ConfigurationSummary> = groups
        .iter()
        .map(|((m, p), rs)| {
            let med = |f: fn(&EvalRecord) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            ConfigurationSummary {
                method: m.clone(),
                param: p.clone(),
                iterations: rs.len(),
                accuracy: med(|r| r.accuracy),
                precision: med(|r| r.precision),
                recall: med(|r| r.recall),
                f1: med(|r| r.f1),
                rank: ranks.rank_of(&key(m, p)).expect("every configuration is ranked"),
            }
        })
        .collect();
    out.sort_by(|a, b| a.rank.cmp(&b.rank).then(b.accuracy.total_cmp(&a.accuracy)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: &[(&str, &str, u32, f64)]) -> String {
        let mut s = EVAL_HEADER.join(",") + "\n";
        for (m, p, i, a) in rows {
            s += &format!("{m},{p},{i},{a},{a},{a},{a}\n");
        }
        s
    }

    #[test]
    fn reads_and_ranks() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(("fewshot", "15", i, 0.95 + f64::from(i) * 0.001));
            rows.push(("fewshot", "5", i, 0.70 + f64::from(i) * 0.001));
            rows.push(("encoder_finetune", "5", i, 0.80 + f64::from(i) * 0.001));
        }
        let recs = read_eval_records(csv_text(&rows).as_bytes()).unwrap();
        assert_eq!(recs.len(), 30);
        let sum = summarize_eval(&recs, &ScottKnottConfig::default()).unwrap();
        assert_eq!((sum[0].method.as_str(), sum[0].param.as_str(), sum[0].rank), ("fewshot", "15", 1));
        assert_eq!(sum[2].param, "5");
        assert_eq!(sum[2].rank, 3);
        assert!((sum[0].accuracy - 0.9545).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_header = "method,param,iter,accuracy,precision,recall,f1\n";
        assert_eq!(read_eval_records(bad_header.as_bytes()).unwrap_err().class(), "parse");
        let out_of_range = csv_text(&[("fewshot", "5", 0, 1.2)]);
        let err = read_eval_records(out_of_range.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_eval_records(csv_text(&[("svm", "5", 0, 0.5)]).as_bytes()).is_err());
        let dup = csv_text(&[("fewshot", "5", 0, 0.5), ("fewshot", "5", 0, 0.6)]);
        assert!(read_eval_records(dup.as_bytes()).is_err());
    }
}
