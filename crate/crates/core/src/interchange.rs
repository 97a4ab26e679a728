//! Line-delimited JSON records for detections, ground truth and tracks.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::FramePredictions;
use crate::fusion::Detection;

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record types serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: format!("line {}", i + 1).into(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// Groups detections into frames keyed by their timestamp.
pub fn group_by_timestamp(dets: Vec<Detection>) -> Vec<FramePredictions> {
    let mut frames: BTreeMap<u64, (f64, Vec<Detection>)> = BTreeMap::new();
    for d in dets {
        // timestamps are non-negative, so bit order matches numeric order
        frames
            .entry(d.timestamp.to_bits())
            .or_insert_with(|| (d.timestamp, Vec::new()))
            .1
            .push(d);
    }
    frames
        .into_values()
        .map(|(anchor_time, detections)| FramePredictions {
            anchor_time,
            detections,
        })
        .collect()
}
