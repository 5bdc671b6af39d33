mod common;

use mcfl::bench::CSV_HEADER;
use mcfl::localizer::DiagnosisReport;
use mcfl::minic::parse;
use mcfl::sequentializer::LineMap;
use mcfl::verifier::{Counterexample, VerificationResult};
use std::path::Path;
use std::process::{Command, Output};

fn mcfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcfl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SAFE: &str = "int x = 0;\n\nint main() {\n  x = x + 1;\n  assert(x == 1);\n  return 0;\n}\n";

#[test]
fn exit_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let safe = dir.path().join("safe.mc");
    std::fs::write(&safe, SAFE).unwrap();
    let broken = dir.path().join("broken.mc");
    std::fs::write(&broken, "int main() { y = 1; return 0; }").unwrap();
    let fig1 = common::sample("fig1.mc");
    let sync01 = common::benchmarks_dir().join("sync01.mc");
    let queue = common::benchmarks_dir().join("queue.mc");

    assert_eq!(code(&mcfl(&["verify", path(&safe)])), 0);
    assert_eq!(code(&mcfl(&["localize", path(&safe)])), 0);
    assert_eq!(code(&mcfl(&["verify", path(&fig1)])), 1);
    assert_eq!(code(&mcfl(&["localize", path(&fig1)])), 1);
    assert_eq!(code(&mcfl(&["sequentialize", path(&fig1)])), 1);
    assert_eq!(code(&mcfl(&["localize", path(&sync01)])), 2);
    assert_eq!(code(&mcfl(&["verify", path(&queue), "--max-states", "1"])), 3);
    assert_eq!(code(&mcfl(&["localize", path(&queue), "--max-states", "1"])), 3);
    assert_eq!(code(&mcfl(&["verify", path(&broken)])), 4);
    assert_eq!(code(&mcfl(&["verify", "/nonexistent/file.mc"])), 4);
    assert_eq!(code(&mcfl(&["verify", path(&fig1), "--nondet", "3..1"])), 4);
    assert_eq!(code(&mcfl(&["verify", path(&fig1), "--unwind", "0"])), 4);
    assert_eq!(code(&mcfl(&["frobnicate"])), 4);
    assert_eq!(code(&mcfl(&["--help"])), 0);
}

#[test]
fn verify_reports_deadlocks_with_the_flag() {
    let sync02 = common::benchmarks_dir().join("sync02.mc");
    let with = mcfl(&["verify", path(&sync02), "--deadlock-check", "--json"]);
    let r: VerificationResult = serde_json::from_str(&stdout(&with)).unwrap();
    assert!(r.counterexample().is_some_and(|c| c.violation.is_deadlock()));
}

#[test]
fn json_outputs_round_trip() {
    let fig1 = common::sample("fig1.mc");
    let out = stdout(&mcfl(&["localize", path(&fig1), "--nondet", "0..8", "--json"]));
    let report: DiagnosisReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.to_json(), out.trim_end());
    assert_eq!(report.found_error_count, report.diagnoses.len());

    let out = stdout(&mcfl(&["verify", path(&fig1), "--json"]));
    let r: VerificationResult = serde_json::from_str(&out).unwrap();
    assert_eq!(serde_json::to_string_pretty(&r).unwrap(), out.trim_end());
}

#[test]
fn intermediates_are_written_next_to_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("fig1.mc");
    std::fs::copy(common::sample("fig1.mc"), &input).unwrap();
    assert_eq!(code(&mcfl(&["localize", path(&input), "--emit-intermediates"])), 1);
    let read = |ext: &str| std::fs::read_to_string(dir.path().join(format!("fig1.{ext}"))).unwrap();

    let cex_text = read("cex.json");
    let cex: Counterexample = serde_json::from_str(&cex_text).unwrap();
    assert_eq!(cex.to_json(), cex_text);
    let seq = parse(&read("seq.mc")).unwrap();
    let map: LineMap = serde_json::from_str(&read("linemap.json")).unwrap();
    let mut lines = Vec::new();
    seq.walk(&mut |s| lines.push(s.line));
    assert!(lines.iter().all(|l| map.contains_key(l)));
    let instr = read("instr.mc");
    assert!(parse(&instr).is_ok());
    assert!(instr.contains("assert(false);"));
}

#[test]
fn transform_commands_print_programs() {
    let fig1 = common::sample("fig1.mc");
    let seq = stdout(&mcfl(&["sequentialize", path(&fig1)]));
    assert!(seq.contains("int order[1] = {11};"), "{seq}");
    assert!(parse(&seq).is_ok());
    let model = stdout(&mcfl(&["instrument", path(&fig1)]));
    assert!(model.contains("assume(c == 8);") && model.contains("assert(false);"), "{model}");
}

fn without_timings(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<String> = l.split(',').map(str::to_string).collect();
            for c in cols.iter_mut().take(11).skip(6) {
                c.clear();
            }
            cols
        })
        .collect()
}

#[test]
fn bench_is_deterministic_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let bench = common::benchmarks_dir();
    assert_eq!(code(&mcfl(&["bench", path(&bench), "--csv", path(&a)])), 0);
    assert_eq!(code(&mcfl(&["bench", path(&bench), "--csv", path(&b)])), 0);
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert_eq!(a.lines().next(), Some(CSV_HEADER));
    assert_eq!(a.lines().count(), 9);
    assert_eq!(without_timings(&a), without_timings(&b));
}

#[test]
fn bench_over_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcfl(&["bench", path(dir.path())]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv, format!("{CSV_HEADER}\n"));
}
