use clap::{Args, Parser, Subcommand};
use mcfl::bench::{run_bench, to_csv, to_table};
use mcfl::instrumenter::instrument;
use mcfl::localizer::{find_counterexample, localize_with_artifacts, Artifacts, Search, Status};
use mcfl::minic::{parse, pretty_print, Program};
use mcfl::sequentializer::sequentialize;
use mcfl::verifier::{default_max_states, extract_schedule, verify, Counterexample, Outcome, VerifierConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_FAULT: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "mcfl", version, about = "Fault localization for concurrent mini-C programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore all interleavings within the bounds and report a violation.
    Verify(Opts),
    /// Print the sequential program replaying the first counterexample.
    Sequentialize(Opts),
    /// Print the diagnosis model of the sequentialized counterexample.
    Instrument(Opts),
    /// Report the lines whose change avoids the failure.
    Localize(Opts),
    /// Localize every `.mc` file of a directory and print a summary table.
    Bench(BenchOpts),
}

#[derive(Args, Clone)]
struct Opts {
    /// Input `.mc` file.
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct BenchOpts {
    /// Directory of `.mc` files.
    dir: PathBuf,
    #[command(flatten)]
    common: Common,
    /// CSV output path (default: `bench.csv` inside the directory).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Common {
    /// Iterations allowed per loop activation.
    #[arg(long, default_value_t = 3)]
    unwind: u32,
    /// Context switches allowed per path.
    #[arg(long, default_value_t = 4)]
    context_bound: u32,
    /// Range of `nondet()` values, inclusive.
    #[arg(long, default_value = "0..3", value_parser = parse_range)]
    nondet: (i64, i64),
    /// Report deadlocks as violations (verify only; localize always checks).
    #[arg(long)]
    deadlock_check: bool,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Write counterexample, sequential program, diagnosis model and line map next to the input.
    #[arg(long)]
    emit_intermediates: bool,
    /// State cap; defaults to MCFL_MAX_STATES or a built-in limit.
    #[arg(long)]
    max_states: Option<usize>,
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

impl Common {
    fn config(&self) -> VerifierConfig {
        VerifierConfig {
            context_bound: self.context_bound,
            loop_bound: self.unwind,
            nondet_domain: self.nondet,
            deadlock_check: self.deadlock_check,
            max_states: self.max_states.unwrap_or_else(default_max_states),
            division_check: true,
        }
    }
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn load(path: &Path) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse(&src).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn sibling(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}.{suffix}"))
}

fn emit(input: &Path, cex: Option<&Counterexample>, art: &Artifacts) -> Result<(), Failure> {
    if let Some(c) = cex {
        std::fs::write(sibling(input, "cex.json"), c.to_json())?;
    }
    if let Some(s) = &art.sequential {
        std::fs::write(sibling(input, "seq.mc"), pretty_print(&s.program))?;
        std::fs::write(sibling(input, "linemap.json"), s.line_map_json())?;
    }
    if let Some(i) = &art.instrumented {
        std::fs::write(sibling(input, "instr.mc"), pretty_print(&i.program))?;
    }
    Ok(())
}

fn cmd_verify(o: &Opts) -> Result<u8, Failure> {
    let p = load(&o.input)?;
    let r = verify(&p, &o.common.config())?;
    if o.common.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        match &r.outcome {
            Outcome::SafeWithinBounds => println!("safe within bounds ({} states)", r.states),
            Outcome::ResourceExhausted => println!("state cap reached after {} states", r.states),
            Outcome::Violation(c) => {
                println!("violation: {:?}", c.violation);
                for s in &c.steps {
                    println!("  #{:<4} thread {} line {}", s.step_index, s.thread, s.line);
                }
            }
        }
        if r.bound_hit {
            println!("note: some paths were cut by the loop bound");
        }
    }
    if o.common.emit_intermediates {
        emit(&o.input, r.counterexample(), &Artifacts::default())?;
    }
    Ok(match r.outcome {
        Outcome::SafeWithinBounds => EXIT_OK,
        Outcome::Violation(_) => EXIT_FAULT,
        Outcome::ResourceExhausted => EXIT_EXHAUSTED,
    })
}

/// Sequentializes (and optionally instruments) the first counterexample.
fn cmd_transform(o: &Opts, with_model: bool) -> Result<u8, Failure> {
    let p = load(&o.input)?;
    let cfg = o.common.config();
    let cex = match find_counterexample(&p, &cfg)? {
        Search::Safe => {
            eprintln!("no counterexample within bounds: nothing to transform");
            return Ok(EXIT_OK);
        }
        Search::Exhausted => {
            eprintln!("state cap reached");
            return Ok(EXIT_EXHAUSTED);
        }
        Search::Found { cex, .. } => cex,
    };
    let schedule = extract_schedule(&cex)?;
    let seq = sequentialize(&p, &schedule, cex.violation.is_deadlock())?;
    let model = if with_model { Some(instrument(&seq, cfg.nondet_domain)?) } else { None };
    let text = pretty_print(model.as_ref().map_or(&seq.program, |m| &m.program));
    if o.common.json {
        let v = serde_json::json!({
            "program": text,
            "order": schedule.order_tags,
            "line_map": seq.line_map,
            "diag_domain": model.as_ref().map(|m| &m.diag_domain),
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{text}");
    }
    if o.common.emit_intermediates {
        let art = Artifacts { schedule: Some(schedule), sequential: Some(seq), instrumented: model };
        emit(&o.input, Some(&cex), &art)?;
    }
    Ok(EXIT_FAULT)
}

fn cmd_localize(o: &Opts) -> Result<u8, Failure> {
    let p = load(&o.input)?;
    let (report, art) = localize_with_artifacts(&p, &o.common.config())?;
    if o.common.json {
        println!("{}", report.to_json());
    } else {
        let lines = mcfl::minic::line_table(&p);
        println!("status: {}", serde_json::to_value(report.status)?.as_str().unwrap_or(""));
        println!("deadlock detected: {}", if report.deadlock { "yes" } else { "no" });
        println!("diagnoses: {} (diag domain {} lines)", report.found_error_count, report.diag_domain_size);
        for d in &report.diagnoses {
            let code = d
                .original_line
                .and_then(|l| lines.get(&l))
                .map(|s| mcfl::minic::print_stmt(s))
                .unwrap_or_default();
            let line = d.original_line.map_or("-".into(), |l| l.to_string());
            let check = if d.oracle_validated { "validated" } else { "not validated" };
            println!(
                "  #{} line {line} (sequential {}): value {} [{check}]  {}",
                d.iteration,
                d.seq_line,
                d.witness_value,
                code.lines().next().unwrap_or("")
            );
        }
        if let Some(n) = &report.note {
            println!("note: {n}");
        }
        println!("time: {:.3} ms", report.timings.total_us() as f64 / 1000.0);
    }
    if o.common.emit_intermediates {
        emit(&o.input, report.counterexample.as_ref(), &art)?;
    }
    Ok(match report.status {
        Status::NoCounterexample => EXIT_OK,
        Status::FaultsFound => EXIT_FAULT,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
        Status::ResourceExhausted => EXIT_EXHAUSTED,
    })
}

fn cmd_bench(o: &BenchOpts) -> Result<u8, Failure> {
    let rows = run_bench(&o.dir, &o.common.config())?;
    let csv = o.csv.clone().unwrap_or_else(|| o.dir.join("bench.csv"));
    std::fs::write(&csv, to_csv(&rows))?;
    if o.common.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", to_table(&rows));
        println!("csv: {}", csv.display());
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Verify(o) => cmd_verify(o),
        Command::Sequentialize(o) => cmd_transform(o, false),
        Command::Instrument(o) => cmd_transform(o, true),
        Command::Localize(o) => cmd_localize(o),
        Command::Bench(o) => cmd_bench(o),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
