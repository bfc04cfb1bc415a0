//! Newline-delimited corpus archive: one header line, then one MR per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusMeta, MergeRequestRecord};
use crate::error::{Error, Result};

pub const ARCHIVE_FORMAT: &str = "mrscope-corpus/1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    #[serde(flatten)]
    meta: CorpusMeta,
}

pub fn write_archive<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut sorted = corpus.clone();
    sorted.canonicalize();
    let mut out = BufWriter::new(out);
    let header = Header {
        format: ARCHIVE_FORMAT.to_string(),
        meta: sorted.meta,
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for record in &sorted.records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_archive(corpus: &Corpus, path: &Path) -> Result<()> {
    write_archive(corpus, File::create(path)?)
}

pub fn read_archive<R: Read>(input: R) -> Result<Corpus> {
    let reader = BufReader::new(input);
    let mut meta = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if meta.is_none() {
            let header: Header = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                id: None,
                msg: format!("bad header: {e}"),
            })?;
            if header.format != ARCHIVE_FORMAT {
                return Err(Error::Parse {
                    line: line_no,
                    id: None,
                    msg: format!("unsupported archive format {:?}", header.format),
                });
            }
            meta = Some(header.meta);
            continue;
        }
        let record: MergeRequestRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            id: salvage_id(&line),
            msg: e.to_string(),
        })?;
        record.validate().map_err(|e| match e {
            Error::Validation { id, msg } => Error::Validation {
                id,
                msg: format!("line {line_no}: {msg}"),
            },
            other => other,
        })?;
        records.push(record);
    }
    let meta = meta.unwrap_or_else(|| CorpusMeta {
        host: String::new(),
        group: String::new(),
        projects: Vec::new(),
        fetched_at: DateTime::UNIX_EPOCH,
    });
    Corpus::new(meta, records)
}

pub fn import_archive(path: &Path) -> Result<Corpus> {
    read_archive(File::open(path)?)
}

fn salvage_id(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()?
        .get("id")?
        .as_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::*;
    use crate::ingest::MrState;

    fn corpus(n: u64) -> Corpus {
        let meta = CorpusMeta {
            host: "https://git.example".into(),
            group: "MP".into(),
            projects: vec![],
            fetched_at: ts(100),
        };
        let records = (1..=n)
            .rev()
            .map(|i| {
                let mut r = record(i);
                r.file_changes = vec![file("src/a.rs", i, 1)];
                r
            })
            .collect();
        Corpus::new(meta, records).unwrap()
    }

    fn to_bytes(c: &Corpus) -> Vec<u8> {
        let mut buf = Vec::new();
        write_archive(c, &mut buf).unwrap();
        buf
    }

    #[test]
    fn export_is_deterministic_and_sorted() {
        let c = corpus(5);
        let a = to_bytes(&c);
        assert_eq!(a, to_bytes(&c));
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 6);
        let back = read_archive(text.as_bytes()).unwrap();
        let ids: Vec<u64> = back.records.iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_record_archive_has_one_record_line() {
        let text = String::from_utf8(to_bytes(&corpus(1))).unwrap();
        assert_eq!(text.lines().skip(1).count(), 1);
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let c = read_archive(&b""[..]).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn invariant_breach_names_the_record() {
        let mut c = corpus(2);
        c.records[0].state = MrState::Merged;
        c.records[0].created_at = ts(10);
        c.records[0].merged_at = Some(ts(1));
        // bypass Corpus::new validation to produce a bad file
        let mut buf = Vec::new();
        write_archive(&c, &mut buf).unwrap();
        let err = read_archive(&buf[..]).unwrap_err();
        match err {
            Error::Validation { id, msg } => {
                assert_eq!(id, c.records[0].id);
                assert!(msg.contains("line"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_and_id() {
        let mut text = String::from_utf8(to_bytes(&corpus(2))).unwrap();
        text.push_str("{\"id\": 77, \"title\": 3}\n");
        match read_archive(text.as_bytes()).unwrap_err() {
            Error::Parse { line, id, .. } => {
                assert_eq!(line, 4);
                assert_eq!(id, Some(77));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ndjson");
        let c = corpus(3);
        export_archive(&c, &path).unwrap();
        let mut expected = c.clone();
        expected.canonicalize();
        assert_eq!(import_archive(&path).unwrap(), expected);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = export_archive(&corpus(1), Path::new("/nonexistent-dir/x/c.ndjson")).unwrap_err();
        assert_eq!(err.class(), "io");
    }
}
