//! Benchmark sweep: localize every `.mc` file of a directory and tabulate.

use crate::localizer::{brute_force_lines, localize_with_artifacts, Status};
use crate::minic::parse;
use crate::verifier::VerifierConfig;
use rayon::prelude::*;
use serde::Serialize;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub name: String,
    /// `faults-found`, `inconclusive`, …, or `error` when the file could not be processed.
    pub status: String,
    /// D: the first verification found a deadlock.
    pub deadlock: bool,
    /// FE: diagnoses reported.
    pub found: usize,
    /// AE: lines the exhaustive oracle accepts.
    pub actual: Option<usize>,
    /// R: all diagnoses validated and faults were found.
    pub useful: bool,
    pub verify_us: u64,
    pub sequentialize_us: u64,
    pub instrument_us: u64,
    pub diagnose_us: u64,
    pub validate_us: u64,
    pub note: String,
}

fn status_name(s: Status) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn error_row(name: String, note: String) -> BenchRow {
    BenchRow {
        name,
        status: "error".into(),
        deadlock: false,
        found: 0,
        actual: None,
        useful: false,
        verify_us: 0,
        sequentialize_us: 0,
        instrument_us: 0,
        diagnose_us: 0,
        validate_us: 0,
        note,
    }
}

pub fn bench_file(path: &Path, config: &VerifierConfig) -> BenchRow {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => return error_row(name, e.to_string()),
    };
    let program = match parse(&src) {
        Ok(p) => p,
        Err(e) => return error_row(name, e.to_string()),
    };
    let (report, art) = match localize_with_artifacts(&program, config) {
        Ok(r) => r,
        Err(e) => return error_row(name, e.to_string()),
    };
    let actual = art.sequential.as_ref().map(|s| brute_force_lines(s, config).len());
    let t = &report.timings;
    BenchRow {
        status: status_name(report.status),
        deadlock: report.deadlock,
        found: report.found_error_count,
        actual,
        useful: report.useful(),
        verify_us: t.verify_us,
        sequentialize_us: t.sequentialize_us,
        instrument_us: t.instrument_us,
        diagnose_us: t.diagnose_us,
        validate_us: t.validate_us,
        note: report.note.clone().unwrap_or_default(),
        name,
    }
}

/// `.mc` files of `dir`, sorted by name.
pub fn bench_inputs(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mc"))
        .collect();
    files.sort();
    Ok(files)
}

/// Localizes every `.mc` file in parallel; rows are ordered by file name.
pub fn run_bench(dir: &Path, config: &VerifierConfig) -> io::Result<Vec<BenchRow>> {
    let files = bench_inputs(dir)?;
    Ok(files.par_iter().map(|f| bench_file(f, config)).collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str =
    "name,status,D,FE,AE,R,verify_us,sequentialize_us,instrument_us,diagnose_us,validate_us,note";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let actual = r.actual.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.name),
            r.status,
            r.deadlock as u8,
            r.found,
            actual,
            r.useful as u8,
            r.verify_us,
            r.sequentialize_us,
            r.instrument_us,
            r.diagnose_us,
            r.validate_us,
            csv_field(&r.note)
        ));
    }
    out
}

/// Human-readable table with F, D, FE/AE, VT and R columns.
pub fn to_table(rows: &[BenchRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:<17}  D  FE/AE  {:>10}  R\n", "F", "status", "VT (ms)");
    for r in rows {
        let total = r.verify_us + r.sequentialize_us + r.instrument_us + r.diagnose_us + r.validate_us;
        let actual = r.actual.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<width$}  {:<17}  {}  {:>5}  {:>10.3}  {}\n",
            r.name,
            r.status,
            r.deadlock as u8,
            format!("{}/{}", r.found, actual),
            total as f64 / 1000.0,
            r.useful as u8
        ));
    }
    out
}
