use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-major feature table with one row per MR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub row_ids: Vec<u64>,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(names: Vec<String>, row_ids: Vec<u64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::domain(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some((name, col)) = names.iter().zip(&columns).find(|(_, c)| c.len() != row_ids.len()) {
            return Err(Error::domain(format!(
                "column {name} has {} rows, expected {}",
                col.len(),
                row_ids.len()
            )));
        }
        if let Some(name) = names
            .iter()
            .zip(&columns)
            .find(|(_, c)| c.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
        {
            return Err(Error::domain(format!("column {name} has non-finite cells")));
        }
        Ok(FeatureMatrix {
            names,
            row_ids,
            columns,
        })
    }

    pub fn from_rows(names: Vec<String>, row_ids: Vec<u64>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut columns = vec![Vec::with_capacity(rows.len()); names.len()];
        for row in rows {
            if row.len() != names.len() {
                return Err(Error::domain(format!("row of width {} for {} names", row.len(), names.len())));
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        Self::from_columns(names, row_ids, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| self.column(j))
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            cols.push(
                self.column_by_name(n)
                    .ok_or_else(|| Error::domain(format!("unknown feature {n}")))?
                    .to_vec(),
            );
        }
        Ok(FeatureMatrix {
            names: names.to_vec(),
            row_ids: self.row_ids.clone(),
            columns: cols,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        FeatureMatrix {
            names: self.names.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.columns[j] = values;
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut row = vec![self.row_ids[i].to_string()];
            row.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
