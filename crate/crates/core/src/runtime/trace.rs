use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Timing record of one executed task. Times are nanoseconds since the
/// graph was created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task_id: usize,
    pub op_name: String,
    pub node: usize,
    pub cores: usize,
    pub t_submit: u64,
    pub t_start: u64,
    pub t_end: u64,
    pub deser_ns: u64,
    pub user_ns: u64,
    pub ser_ns: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Writes one JSON object per line.
pub fn export_trace(events: &[TraceEvent], path: &Path) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads an NDJSON trace. Blank lines are ignored.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Per-operation totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpShare {
    pub op_name: String,
    pub count: usize,
    pub user_ns: u64,
    pub ser_ns: u64,
    pub deser_ns: u64,
    /// Share of the summed user + serialization + deserialization time.
    pub percent: f64,
}

impl OpShare {
    pub fn busy_ns(&self) -> u64 {
        self.user_ns + self.ser_ns + self.deser_ns
    }
}

/// Aggregates a trace by op name, sorted by name. When every duration is
/// zero the shares fall back to task counts.
pub fn aggregate(events: &[TraceEvent]) -> Vec<OpShare> {
    let mut by_op: BTreeMap<&str, OpShare> = BTreeMap::new();
    for e in events {
        let s = by_op.entry(&e.op_name).or_insert_with(|| OpShare {
            op_name: e.op_name.clone(),
            count: 0,
            user_ns: 0,
            ser_ns: 0,
            deser_ns: 0,
            percent: 0.0,
        });
        s.count += 1;
        s.user_ns += e.user_ns;
        s.ser_ns += e.ser_ns;
        s.deser_ns += e.deser_ns;
    }
    let mut shares: Vec<OpShare> = by_op.into_values().collect();
    let total: u64 = shares.iter().map(OpShare::busy_ns).sum();
    for s in &mut shares {
        s.percent = if total > 0 {
            100.0 * s.busy_ns() as f64 / total as f64
        } else {
            100.0 * s.count as f64 / events.len() as f64
        };
    }
    shares
}
