//! Recording files: `{subject}.csv` with header `time_s,<channels...>` plus a
//! sidecar `{subject}.json` manifest `{subject_id, sample_rate_hz}`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Recording;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingManifest {
    pub subject_id: String,
    pub sample_rate_hz: f64,
}

pub fn csv_path(dir: &Path, subject_id: &str) -> PathBuf {
    dir.join(format!("{subject_id}.csv"))
}

pub fn write_recording(dir: &Path, rec: &Recording) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = csv_path(dir, rec.subject_id());
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(&path, e);
    write!(w, "time_s").map_err(io_err)?;
    for c in rec.channels() {
        write!(w, ",{c}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    let fs_hz = rec.sample_rate_hz();
    for i in 0..rec.len() {
        write!(w, "{}", i as f64 / fs_hz).map_err(io_err)?;
        for ch in rec.samples() {
            write!(w, ",{}", ch[i]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;

    let manifest = RecordingManifest {
        subject_id: rec.subject_id().to_string(),
        sample_rate_hz: fs_hz,
    };
    let mpath = path.with_extension("json");
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&mpath, body).map_err(|e| Error::io(&mpath, e))?;
    Ok(path)
}

pub fn read_recording(csv: &Path) -> Result<Recording> {
    let mpath = csv.with_extension("json");
    let mtext = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: RecordingManifest =
        serde_json::from_str(&mtext).map_err(|e| Error::parse(&mpath, e.line(), e.to_string()))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv)
        .map_err(|e| Error::parse(csv, 1, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse(csv, 1, e.to_string()))?
        .clone();
    if header.get(0) != Some("time_s") || header.len() < 2 {
        return Err(Error::parse(csv, 1, "header must start with time_s followed by channel labels"));
    }
    let channels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut samples = vec![Vec::new(); channels.len()];
    for (row_idx, row) in reader.records().enumerate() {
        let line = row_idx + 2;
        let row = row.map_err(|e| Error::parse(csv, line, e.to_string()))?;
        if row.len() != header.len() {
            return Err(Error::parse(csv, line, format!("expected {} fields, got {}", header.len(), row.len())));
        }
        for (c, field) in row.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(csv, line, format!("column {}: not a number: {field:?}", channels[c])))?;
            samples[c].push(v);
        }
    }
    Recording::new(manifest.subject_id, manifest.sample_rate_hz, channels, samples)
}

/// Reads every `*.csv` recording in `dir`, sorted by file name.
pub fn read_recordings_dir(dir: &Path) -> Result<Vec<Recording>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidRecording(format!("no recordings found in {}", dir.display())));
    }
    paths.iter().map(|p| read_recording(p)).collect()
}
