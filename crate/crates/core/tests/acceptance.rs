//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use common::gen::{self, GenParams};
use common::oracle::{reachable_violations, Found};
use mcfl::bench::run_bench;
use mcfl::localizer::{localize, Status};
use mcfl::minic::{parse, print_stmt, LineId, Program, Stmt, StmtKind};
use mcfl::sequentializer::{apply_pthread_rules, sequentialize, unwind_calls};
use mcfl::verifier::{execute, extract_schedule, verify, ExecutionEnd, Outcome, VerifierConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

type Verdict = Result<String, String>;

fn load(path: &std::path::Path) -> Program {
    let src = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn fig1_reproduction() -> Verdict {
    let p = load(&common::sample("fig1.mc"));
    let cfg = VerifierConfig { loop_bound: 3, ..common::config((0, 8)) };
    let t = Instant::now();
    let r = localize(&p, &cfg).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let got = r.original_lines();
    let want: BTreeSet<LineId> = [LineId(4), LineId(7)].into();
    let detail = format!(
        "lines {:?}, {} diagnoses, {} iterations, {:.1} ms",
        got.iter().map(|l| l.0).collect::<Vec<_>>(),
        r.diagnoses.len(),
        r.iterations,
        took.as_secs_f64() * 1e3
    );
    if got == want && r.diagnoses.len() == 2 && r.iterations <= 2 && took < Duration::from_secs(5) {
        Ok(detail)
    } else {
        Err(format!("expected lines [4, 7] in at most 2 iterations; got {detail}"))
    }
}

fn shared_names(p: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for g in &p.globals {
        if let StmtKind::Decl(ds) = &g.kind {
            out.extend(ds.iter().map(|d| d.name.clone()));
        }
    }
    out
}

/// Sequentializes the counterexample of `src` and checks that the sequential
/// program fails the same way at the same original line with the same shared state.
fn replay_matches(src: &str, cfg: &VerifierConfig) -> Result<bool, String> {
    let p = parse(src).map_err(|e| e.to_string())?;
    let r = verify(&p, cfg).map_err(|e| e.to_string())?;
    let cx = match r.outcome {
        Outcome::Violation(c) => c,
        Outcome::SafeWithinBounds => return Ok(false),
        Outcome::ResourceExhausted => return Err("state cap reached".into()),
    };
    let sched = extract_schedule(&cx).map_err(|e| e.to_string())?;
    let seq = sequentialize(&p, &sched, false).map_err(|e| e.to_string())?;
    let sr = verify(&seq.program, &VerifierConfig { context_bound: 0, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let sc = sr.counterexample().ok_or("sequential program does not fail")?;
    let mapped = |l: LineId| seq.line_map.get(&l).and_then(|o| o.original());
    let kind_line = match (Found::of(&cx.violation), Found::of(&sc.violation)) {
        (Found::Assertion(a), Found::Assertion(b)) | (Found::DivisionByZero(a), Found::DivisionByZero(b)) => {
            mapped(b) == Some(a)
        }
        _ => false,
    };
    if !kind_line {
        return Err(format!("violation {:?} replayed as {:?}", cx.violation, sc.violation));
    }
    let (orig, rep) = (cx.final_valuation(), sc.final_valuation());
    for n in shared_names(&p) {
        if orig.get(&n) != rep.get(&n) {
            return Err(format!("shared {n}: {:?} vs {:?}", orig.get(&n), rep.get(&n)));
        }
    }
    Ok(true)
}

fn replay_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let params = GenParams::replay();
    let cfg = common::config((0, 2));
    let (mut cases, mut attempts) = (0, 0);
    while cases < 200 {
        attempts += 1;
        if attempts > 20_000 {
            return Err(format!("only {cases} failing programs in {attempts} attempts"));
        }
        let src = gen::program(&mut rng, &params);
        match replay_matches(&src, &cfg) {
            Ok(true) => cases += 1,
            Ok(false) => {}
            Err(e) => return Err(format!("case {}: {e}\n{src}", cases + 1)),
        }
    }
    Ok(format!("{cases}/{cases} replays match ({attempts} programs generated)"))
}

fn order_array() -> Verdict {
    let p = load(&common::sample("ordered.mc"));
    let cfg = common::config((0, 3));
    let r = verify(&p, &cfg).map_err(|e| e.to_string())?;
    let cx = r.counterexample().ok_or("no counterexample")?;
    let sched = extract_schedule(cx).map_err(|e| e.to_string())?;
    let seq = sequentialize(&p, &sched, false).map_err(|e| e.to_string())?;
    let decl = seq.program.globals.iter().find_map(|g| match &g.kind {
        StmtKind::ArrayDecl { name, init, .. } if *name == seq.order_var => Some(init.clone()),
        _ => None,
    });
    let sr = verify(&seq.program, &VerifierConfig { context_bound: 0, ..cfg }).map_err(|e| e.to_string())?;
    let sc = sr.counterexample().ok_or("sequential program does not fail")?;
    let seg = seq.segment_of_line();
    let mut visited: Vec<i64> = Vec::new();
    for s in &sc.steps {
        if let Some(tag) = seg.get(&s.line) {
            let case = tag / 10;
            if visited.last() != Some(&case) {
                visited.push(case);
            }
        }
    }
    let detail = format!("order {decl:?}, outer cases {visited:?}");
    if decl.as_deref() == Some(&[11, 31, 21][..]) && visited == [1, 3, 2] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_rules() -> Verdict {
    let golden = include_str!("golden/table_rules.txt");
    let l = LineId(1);
    let rows: Vec<(&str, StmtKind)> = vec![
        ("pthread_t", StmtKind::ThreadDecl(vec!["t".into()])),
        ("pthread_attr_t", StmtKind::AttrDecl(vec!["attr".into()])),
        ("pthread_cond_attr_t", StmtKind::CondAttrDecl(vec!["cattr".into()])),
        ("pthread_create", StmtKind::Create { handle: "t".into(), func: "worker".into() }),
        ("pthread_join", StmtKind::Join("t".into())),
        ("pthread_exit", StmtKind::Exit),
        ("pthread_mutex_t", StmtKind::MutexDecl(vec!["m".into()])),
        ("pthread_mutex_lock", StmtKind::Lock("m".into())),
        ("pthread_mutex_unlock", StmtKind::Unlock("m".into())),
        ("pthread_cond_t", StmtKind::CondDecl(vec!["c".into()])),
        ("pthread_cond_init", StmtKind::CondInit("c".into())),
        ("pthread_cond_wait", StmtKind::CondWait { cond: "c".into(), mutex: "m".into() }),
        ("pthread_cond_signal", StmtKind::CondSignal("c".into())),
    ];
    let mut out = String::new();
    for (name, kind) in &rows {
        for (flag, deadlock) in [("no-deadlock", false), ("deadlock", true)] {
            let rewritten = apply_pthread_rules(&Stmt::new(l, kind.clone()), deadlock).map_err(|e| e.to_string())?;
            let text = if rewritten.is_empty() {
                "ε".to_string()
            } else {
                rewritten.iter().map(|s| print_stmt(s).trim().to_string()).collect::<Vec<_>>().join(" ")
            };
            out.push_str(&format!("{name} | {flag} | {text}\n"));
        }
    }
    let mismatches: Vec<String> = out
        .lines()
        .zip(golden.lines())
        .filter(|(a, b)| a != b)
        .map(|(a, b)| format!("got `{a}`, want `{b}`"))
        .collect();
    if mismatches.is_empty() && out.lines().count() == golden.lines().count() {
        Ok(format!("{} rows x 2 flags match", rows.len()))
    } else {
        Err(mismatches.join("; "))
    }
}

fn unwinding() -> Verdict {
    let original = load(&common::sample("fig5.mc"));
    let by_hand = load(&common::sample("fig6.mc"));
    let unwound = unwind_calls(&original).program;
    let cfg = common::config((-8, 8));
    for a in -8..=8 {
        let x = execute(&unwound, &[a], &cfg).map_err(|e| e.to_string())?;
        let y = execute(&by_hand, &[a], &cfg).map_err(|e| e.to_string())?;
        if x.end != ExecutionEnd::Completed || x.main_valuation != y.main_valuation {
            return Err(format!("input {a}: {:?} vs {:?}", x.main_valuation, y.main_valuation));
        }
    }
    Ok("17 inputs, identical final valuations".into())
}

fn benchmark_sweep() -> Verdict {
    let t = Instant::now();
    let rows = run_bench(&common::benchmarks_dir(), &common::config((0, 3))).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let by_name: BTreeMap<&str, _> = rows.iter().map(|r| (r.name.as_str(), r)).collect();
    let mut problems = Vec::new();
    let useful = ["account", "arithmetic_prog", "circular_buffer", "lazy01", "queue", "sync02"];
    for name in useful.iter().chain(&["sync01", "token_ring"]) {
        let Some(r) = by_name.get(name) else {
            problems.push(format!("{name}: missing"));
            continue;
        };
        let expect_useful = useful.contains(name);
        let status = if expect_useful { "faults-found" } else { "inconclusive" };
        if r.status != status || r.useful != expect_useful {
            problems.push(format!("{name}: status {} R={}", r.status, r.useful as u8));
        }
        if expect_useful && r.actual != Some(r.found) {
            problems.push(format!("{name}: FE {} vs AE {:?}", r.found, r.actual));
        }
    }
    if took > Duration::from_secs(120) {
        problems.push(format!("sweep took {took:?}"));
    }
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {}/{}", r.name, r.found, r.actual.map_or("-".into(), |a| a.to_string())))
        .collect();
    if problems.is_empty() {
        Ok(format!("{} in {:.2} s", summary.join(", "), took.as_secs_f64()))
    } else {
        Err(problems.join("; "))
    }
}

fn oracle_corpus(n: usize, seed: u64) -> Vec<(String, VerifierConfig)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let params = GenParams::small();
    (0..n)
        .map(|_| {
            let src = gen::program(&mut rng, &params);
            let k = rng.gen_range(1..=3);
            let cfg = VerifierConfig {
                context_bound: rng.gen_range(0..=3),
                deadlock_check: rng.gen_bool(0.5),
                ..common::config((0, k - 1))
            };
            (src, cfg)
        })
        .collect()
}

fn verifier_oracle() -> Verdict {
    let corpus = oracle_corpus(1000, 0x5eed_0007);
    let mut violations = 0;
    for (i, (src, cfg)) in corpus.iter().enumerate() {
        let p = parse(src).map_err(|e| format!("program {i}: {e}\n{src}"))?;
        let want = reachable_violations(&p, cfg);
        let got = verify(&p, cfg).map_err(|e| e.to_string())?;
        let agree = match &got.outcome {
            Outcome::SafeWithinBounds => want.is_empty(),
            Outcome::Violation(c) => want.contains(&Found::of(&c.violation)),
            Outcome::ResourceExhausted => false,
        };
        if !agree {
            return Err(format!("program {i} ({cfg:?}): verifier {:?}, oracle {want:?}\n{src}", got.outcome));
        }
        violations += !want.is_empty() as usize;
    }
    Ok(format!("{}/{} agree ({violations} with violations)", corpus.len(), corpus.len()))
}

fn termination() -> Verdict {
    let mut programs: Vec<(String, Program, VerifierConfig)> = Vec::new();
    programs.push(("fig1".into(), load(&common::sample("fig1.mc")), common::config((0, 8))));
    for f in mcfl::bench::bench_inputs(&common::benchmarks_dir()).map_err(|e| e.to_string())? {
        programs.push((f.display().to_string(), load(&f), common::config((0, 3))));
    }
    for (i, (src, cfg)) in oracle_corpus(300, 0x5eed_0008).into_iter().enumerate() {
        let p = parse(&src).map_err(|e| e.to_string())?;
        programs.push((format!("generated #{i}"), p, cfg));
    }
    let mut runs = 0;
    for (name, p, cfg) in &programs {
        let r = localize(p, cfg).map_err(|e| format!("{name}: {e}"))?;
        if r.status == Status::NoCounterexample {
            continue;
        }
        runs += 1;
        let distinct: BTreeSet<i64> = r.diagnoses.iter().map(|d| d.seq_line).collect();
        if r.iterations > r.diag_domain_size || distinct.len() != r.diagnoses.len() {
            return Err(format!("{name}: {} iterations over {} lines, diag values {:?}", r.iterations, r.diag_domain_size,
                r.diagnoses.iter().map(|d| d.seq_line).collect::<Vec<_>>()));
        }
    }
    Ok(format!("{runs} localization runs bounded, no repeated diag value"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("fig1 diagnoses", fig1_reproduction),
        ("replay equivalence", replay_equivalence),
        ("order array", order_array),
        ("thread-library rules", table_rules),
        ("call unwinding", unwinding),
        ("benchmark sweep", benchmark_sweep),
        ("verifier vs oracle", verifier_oracle),
        ("termination", termination),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {} {name}: PASS ({secs:.2} s) {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.2} s) {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
