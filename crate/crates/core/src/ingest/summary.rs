use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectStats {
    pub project_id: u64,
    pub n_mrs: usize,
    pub n_merged: usize,
    pub first_created: Option<DateTime<Utc>>,
    pub last_created: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub projects: Vec<ProjectStats>,
    pub total_mrs: usize,
    pub total_merged: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut rows: BTreeMap<u64, ProjectStats> = BTreeMap::new();
    for r in &corpus.records {
        let row = rows.entry(r.project_id).or_insert(ProjectStats {
            project_id: r.project_id,
            n_mrs: 0,
            n_merged: 0,
            first_created: None,
            last_created: None,
        });
        row.n_mrs += 1;
        row.n_merged += usize::from(r.is_merged());
        row.first_created = Some(row.first_created.map_or(r.created_at, |t| t.min(r.created_at)));
        row.last_created = Some(row.last_created.map_or(r.created_at, |t| t.max(r.created_at)));
    }
    let projects: Vec<ProjectStats> = rows.into_values().collect();
    CorpusStats {
        total_mrs: projects.iter().map(|p| p.n_mrs).sum(),
        total_merged: projects.iter().map(|p| p.n_merged).sum(),
        projects,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::*;
    use crate::ingest::{CorpusMeta, MrState};

    fn meta() -> CorpusMeta {
        CorpusMeta {
            host: String::new(),
            group: "g".into(),
            projects: vec![],
            fetched_at: ts(0),
        }
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let s = corpus_stats(&Corpus::new(meta(), vec![]).unwrap());
        assert_eq!(s.total_mrs, 0);
        assert_eq!(s.total_merged, 0);
        assert!(s.projects.is_empty());
    }

    #[test]
    fn merged_count_and_partition() {
        let records: Vec<_> = (1..=60)
            .map(|i| {
                let mut r = record(i);
                r.project_id = if i <= 30 { 1 } else { 2 };
                if i % 3 != 0 {
                    r.state = MrState::Merged;
                    r.merged_at = Some(ts(5));
                }
                r
            })
            .collect();
        let s = corpus_stats(&Corpus::new(meta(), records).unwrap());
        assert_eq!(s.total_merged, 40);
        assert_eq!(s.projects.len(), 2);
        assert_eq!(s.projects.iter().map(|p| p.n_mrs).sum::<usize>(), 60);
        assert_eq!(s.projects[0].n_mrs, 30);
    }
}
