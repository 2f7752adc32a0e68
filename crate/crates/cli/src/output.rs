//! Output directory layout.
//!
//! * `records.ndjson`: one [`ResultRecord`] per line.
//! * `sweep.csv`: header `epsilon,method,queries,abs_error,seed`.
//! * `errors.ndjson`: one [`ErrorRecord`] per line on pipeline failure.
//! * `timings.ndjson`: `{"experiment_id", "index", "wall_clock_seconds"}` per record.
//! * `manifest.json`: run metadata and the list of files written.
//!
//! Everything except `timings.ndjson` is byte-identical for a fixed config
//! and seed.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::record::{ErrorRecord, ResultRecord, SweepRow, VERSION};
use crate::run::RunOutput;

pub const RECORDS_FILE: &str = "records.ndjson";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const ERRORS_FILE: &str = "errors.ndjson";
pub const TIMINGS_FILE: &str = "timings.ndjson";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub format: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub mode: String,
    pub status: String,
    pub seed: u64,
    pub backend: String,
    pub version: String,
    pub files: Vec<ManifestEntry>,
}

fn write_ndjson<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn write_csv(path: &Path, rows: &[SweepRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["epsilon", "method", "queries", "abs_error", "seed"])?;
    }
    w.flush()
}

fn manifest(config: &ExperimentConfig, status: &str, files: Vec<ManifestEntry>) -> Manifest {
    Manifest {
        experiment_id: config.experiment_id(),
        mode: config.mode.as_str().to_string(),
        status: status.to_string(),
        seed: config.seed(),
        backend: config.backend_tag().backend().as_str().to_string(),
        version: VERSION.to_string(),
        files,
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)
}

fn entry(name: &str, format: &str, rows: usize) -> ManifestEntry {
    ManifestEntry {
        name: name.to_string(),
        format: format.to_string(),
        rows,
    }
}

/// Write a successful run into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, out: &RunOutput) -> io::Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if !out.records.is_empty() {
        write_ndjson(&dir.join(RECORDS_FILE), &out.records)?;
        files.push(entry(RECORDS_FILE, "ndjson", out.records.len()));
        let timings: Vec<_> = out
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| json!({"experiment_id": r.experiment_id, "index": i, "wall_clock_seconds": r.wall_clock_seconds}))
            .collect();
        write_ndjson(&dir.join(TIMINGS_FILE), &timings)?;
        files.push(entry(TIMINGS_FILE, "ndjson", timings.len()));
    }
    if config.mode == crate::config::Mode::Sweep {
        write_csv(&dir.join(SWEEP_FILE), &out.sweep_rows)?;
        files.push(entry(SWEEP_FILE, "csv", out.sweep_rows.len()));
    }
    let m = manifest(config, "ok", files);
    write_manifest(dir, &m)?;
    Ok(m)
}

/// Write a pipeline failure into `dir`.
pub fn write_error(dir: &Path, config: &ExperimentConfig, err: &ErrorRecord) -> io::Result<Manifest> {
    fs::create_dir_all(dir)?;
    write_ndjson(&dir.join(ERRORS_FILE), std::slice::from_ref(err))?;
    let m = manifest(config, "error", vec![entry(ERRORS_FILE, "ndjson", 1)]);
    write_manifest(dir, &m)?;
    Ok(m)
}

/// Read back a records file.
pub fn read_records(path: &Path) -> io::Result<Vec<ResultRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::from))
        .collect()
}

/// Read back a sweep table.
pub fn read_sweep(path: &Path) -> io::Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(io::Error::from)).collect()
}
