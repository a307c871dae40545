//! Line-delimited JSON trial logs: one [`TrialRecord`] per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::TrialRecord;

#[derive(Debug, thiserror::Error)]
pub enum TrialLogError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: trial index {found}, expected {expected}")]
    NonContiguous {
        path: String,
        line: usize,
        found: usize,
        expected: usize,
    },
}

pub fn to_line(record: &TrialRecord) -> String {
    serde_json::to_string(record).expect("trial record serializes")
}

pub fn write_trial_log(path: &Path, records: &[TrialRecord]) -> Result<(), TrialLogError> {
    let io_err = |source| TrialLogError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        writeln!(w, "{}", to_line(r)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a trial log, checking that indices run 0, 1, 2, ...
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>, TrialLogError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| TrialLogError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TrialLogError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(&line).map_err(|e| TrialLogError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.index != out.len() {
            return Err(TrialLogError::NonContiguous {
                path: shown,
                line: i + 1,
                found: record.index,
                expected: out.len(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::TrialState;
    use crate::params::{Assignment, Value};

    #[test]
    fn failed_trials_serialize_null_objective() {
        let r = TrialRecord {
            index: 0,
            assignment: Assignment::from_pairs([("x", Value::Real(0.5))]),
            objective: None,
            state: TrialState::Failed,
            message: Some("adapter crashed".into()),
        };
        let line = to_line(&r);
        assert_eq!(
            line,
            r#"{"index":0,"assignment":{"x":0.5},"objective":null,"state":"failed","message":"adapter crashed"}"#
        );
    }

    #[test]
    fn rejects_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(
            &p,
            "{\"index\":0,\"assignment\":{},\"objective\":1.0,\"state\":\"complete\"}\n\
             {\"index\":2,\"assignment\":{},\"objective\":1.0,\"state\":\"complete\"}\n",
        )
        .unwrap();
        assert!(matches!(
            read_trial_log(&p),
            Err(TrialLogError::NonContiguous { line: 2, .. })
        ));
        std::fs::write(&p, "{\"index\":0,").unwrap();
        assert!(matches!(read_trial_log(&p), Err(TrialLogError::Parse { line: 1, .. })));
    }
}
