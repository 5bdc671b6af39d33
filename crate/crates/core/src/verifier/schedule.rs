use super::{Counterexample, VerifyError, Violation};
use crate::sequentializer::{NondetPin, Position, Schedule, Segment};
use std::collections::BTreeMap;

/// Most segments a thread may have: occurrence indices are a single decimal digit.
pub const MAX_SEGMENTS_PER_THREAD: usize = 9;

fn position(step: &super::TraceStep) -> Position {
    Position {
        call_path: step.call_path.clone(),
        line: step.line,
        branch: step.branch,
        loops: step.loops.clone(),
        resumed: step.resumed,
    }
}

/// Splits a counterexample into maximal same-thread segments and numbers them
/// `(thread + 1) * 10 + occurrence`.
pub fn extract_schedule(cex: &Counterexample) -> Result<Schedule, VerifyError> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut last_end: BTreeMap<usize, Position> = BTreeMap::new();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut i = 0;
    while i < cex.steps.len() {
        let thread = cex.steps[i].thread;
        let mut j = i;
        while j + 1 < cex.steps.len() && cex.steps[j + 1].thread == thread {
            j += 1;
        }
        let occurrence = {
            let n = counts.entry(thread).or_insert(0);
            *n += 1;
            *n
        };
        if occurrence > MAX_SEGMENTS_PER_THREAD {
            return Err(VerifyError::UnsupportedSchedule(format!(
                "thread {thread} is resumed {occurrence} times; at most {MAX_SEGMENTS_PER_THREAD} segments per thread are supported"
            )));
        }
        let (first, last) = (&cex.steps[i], &cex.steps[j]);
        let loop_counters = first
            .loops
            .iter()
            .map(|l| {
                let mut key: Vec<String> = l.call_path.iter().map(|c| c.to_string()).collect();
                key.push(l.line.to_string());
                (key.join("/"), l.count)
            })
            .collect();
        let end = position(last);
        segments.push(Segment {
            thread,
            from_line: first.line,
            to_line: last.line,
            loop_counters,
            occurrence,
            tag: ((thread + 1) * 10 + occurrence) as i64,
            start: last_end.get(&thread).cloned(),
            end: end.clone(),
            first_step: i,
            last_step: j,
            finished: last.finished,
        });
        last_end.insert(thread, end);
        i = j + 1;
    }
    let mut pins: Vec<NondetPin> = Vec::new();
    for c in &cex.nondet_choices {
        let step = &cex.steps[c.step];
        match pins.iter_mut().find(|p| p.thread == step.thread && p.call_path == step.call_path && p.line == c.line) {
            Some(p) => p.values.push(c.value),
            None => pins.push(NondetPin {
                thread: step.thread,
                call_path: step.call_path.clone(),
                line: c.line,
                values: vec![c.value],
            }),
        }
    }
    Ok(Schedule {
        order_tags: segments.iter().map(|s| s.tag).collect(),
        segments,
        per_thread_counts: counts,
        threads: cex.threads.clone(),
        pins,
        ends_in_deadlock: matches!(cex.violation, Violation::Deadlock { .. }),
    })
}
