//! Explicit-state safety checker. States are canonical heap snapshots taken
//! at scheduler entry; edges are whole transitions. The search enumerates
//! every resolution of `hc.choose`, deduplicates states up to heap symmetry
//! and reconstructs a replayable counterexample when an error state is found.

mod cex;

pub use cex::{parse_counterexample, Counterexample, CexEdge};

use std::collections::HashMap;

use crate::heap::{canonical_key, raw_key, CanonicalKey, Snapshot};
use crate::vm::{
    boot, transition, ChooseOracle, EvalOptions, ForcedOracle, Image, Outcome, TransitionResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    Bfs,
    Dfs,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub eval: EvalOptions,
    /// Deduplicate states up to object-identity renaming.
    pub symmetry: bool,
    pub search: Search,
    pub max_states: usize,
    /// Worker threads for successor generation (BFS only).
    pub workers: usize,
    /// Collect a DOT rendering of the explored state space.
    pub collect_dot: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            eval: EvalOptions::default(),
            symmetry: true,
            search: Search::Bfs,
            max_states: 1_000_000,
            workers: 1,
            collect_dot: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub states: usize,
    pub transitions: usize,
    pub steps: usize,
    pub interrupts_fired: usize,
    pub interrupts_suppressed: usize,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Safe,
    Error(Counterexample),
    /// The state or step budget ran out before the search finished.
    Budget,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    pub stats: Stats,
    pub dot: Option<String>,
}

/// Enumerate every transition leaving `from`, one per complete resolution of
/// the choices taken, in lexicographic choice order.
pub fn successors(image: &Image, from: &Snapshot, eval: &EvalOptions) -> Vec<TransitionResult> {
    let mut out = Vec::new();
    enumerate(image, from, eval, Vec::new(), &mut out);
    out
}

fn enumerate(
    image: &Image,
    from: &Snapshot,
    eval: &EvalOptions,
    prefix: Vec<u64>,
    out: &mut Vec<TransitionResult>,
) {
    let mut oracle = ForcedOracle::new(prefix.clone());
    let r = transition(image, from, &mut oracle, eval);
    let observed = r.choices.clone();
    out.push(r);
    // every free position continued with 0; sibling prefixes pick the other
    // values, deepest position first for lexicographic emission order
    for i in (prefix.len()..observed.len()).rev() {
        let (bound, _) = observed[i];
        for c in 1..bound {
            let mut p: Vec<u64> = observed[..i].iter().map(|&(_, v)| v).collect();
            p.push(c);
            enumerate(image, from, eval, p, out);
        }
    }
}

struct StateRec {
    snapshot: Snapshot,
    parent: Option<(usize, CexEdge)>,
}

fn edge_of(image: &Image, r: &TransitionResult) -> CexEdge {
    CexEdge {
        choices: r.choices.clone(),
        interrupts: r
            .interrupts
            .iter()
            .map(|h| (image.describe_pc(h.at), h.fired))
            .collect(),
        traces: r.traces.clone(),
        faults: r
            .faults
            .iter()
            .map(|f| (f.kind, image.describe_pc(f.at), image.describe_pc(f.cont)))
            .collect(),
    }
}

/// Explore the state space of `image` from its boot state.
pub fn verify(image: &Image, entry: &str, opts: &VerifyOptions) -> Result<VerifyOutcome, String> {
    let key_of = |s: &Snapshot| -> CanonicalKey {
        if opts.symmetry {
            canonical_key(s)
        } else {
            raw_key(s)
        }
    };
    let mut stats = Stats::default();
    let mut dot_edges: Vec<(usize, usize, String)> = Vec::new();

    let booted = boot(image, entry, &mut crate::vm::ZeroOracle, &opts.eval)?;
    stats.transitions += 1;
    stats.steps += booted.steps;
    if booted.outcome == Outcome::Budget {
        return Ok(outcome(Verdict::Budget, stats, None));
    }

    let mut states: Vec<StateRec> = vec![StateRec { snapshot: booted.snapshot.clone(), parent: None }];
    let mut seen: HashMap<CanonicalKey, usize> = HashMap::new();
    seen.insert(key_of(&booted.snapshot), 0);
    stats.states = 1;

    if booted.snapshot.error {
        let cex = build_cex(image, &states, 0, Some(edge_of(image, &booted)));
        return Ok(outcome(Verdict::Error(cex), stats, None));
    }

    // DFS keeps a stack; BFS processes whole levels so that worker threads
    // can generate successors in parallel while the merge stays sequential
    // and deterministic.
    let mut frontier: Vec<usize> = vec![0];
    while !frontier.is_empty() {
        let next = match opts.search {
            Search::Dfs => vec![frontier.pop().unwrap()],
            Search::Bfs => std::mem::take(&mut frontier),
        };
        let batches = expand_all(image, &states, &next, opts);
        let mut new_frontier = Vec::new();
        for (&from_id, succs) in next.iter().zip(batches) {
            for r in succs {
                stats.transitions += 1;
                stats.steps += r.steps;
                stats.interrupts_fired += r.interrupts.iter().filter(|h| h.fired).count();
                stats.interrupts_suppressed +=
                    r.interrupts.iter().filter(|h| !h.fired).count();
                if r.outcome == Outcome::Budget {
                    return Ok(outcome(Verdict::Budget, stats, dot(opts, &dot_edges)));
                }
                let key = key_of(&r.snapshot);
                let id = match seen.get(&key) {
                    Some(&id) => {
                        if opts.collect_dot {
                            dot_edges.push((from_id, id, edge_label(&r)));
                        }
                        continue;
                    }
                    None => {
                        let id = states.len();
                        states.push(StateRec {
                            snapshot: r.snapshot.clone(),
                            parent: Some((from_id, edge_of(image, &r))),
                        });
                        seen.insert(key, id);
                        stats.states += 1;
                        id
                    }
                };
                if opts.collect_dot {
                    dot_edges.push((from_id, id, edge_label(&r)));
                }
                if r.snapshot.error {
                    let cex = build_cex(image, &states, id, None);
                    return Ok(outcome(Verdict::Error(cex), stats, dot(opts, &dot_edges)));
                }
                if stats.states > opts.max_states {
                    return Ok(outcome(Verdict::Budget, stats, dot(opts, &dot_edges)));
                }
                if r.outcome == Outcome::Step {
                    new_frontier.push(id);
                }
            }
        }
        match opts.search {
            Search::Dfs => {
                // push in reverse so the lexicographically first successor
                // is explored first
                new_frontier.reverse();
                frontier.extend(new_frontier);
            }
            Search::Bfs => frontier = new_frontier,
        }
    }
    Ok(outcome(Verdict::Safe, stats, dot(opts, &dot_edges)))
}

fn expand_all(
    image: &Image,
    states: &[StateRec],
    ids: &[usize],
    opts: &VerifyOptions,
) -> Vec<Vec<TransitionResult>> {
    if opts.workers <= 1 || ids.len() <= 1 || opts.search == Search::Dfs {
        return ids.iter().map(|&id| successors(image, &states[id].snapshot, &opts.eval)).collect();
    }
    let chunk = ids.len().div_ceil(opts.workers);
    let mut out: Vec<Vec<TransitionResult>> = Vec::with_capacity(ids.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&id| successors(image, &states[id].snapshot, &opts.eval))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            out.extend(h.join().expect("worker thread"));
        }
    });
    out
}

fn edge_label(r: &TransitionResult) -> String {
    let picks: Vec<String> = r.choices.iter().map(|&(_, v)| v.to_string()).collect();
    picks.join(",")
}

fn dot(opts: &VerifyOptions, edges: &[(usize, usize, String)]) -> Option<String> {
    if !opts.collect_dot {
        return None;
    }
    use std::fmt::Write;
    let mut out = String::from("digraph states {\n  node [shape=circle];\n");
    for (a, b, label) in edges {
        let _ = writeln!(out, "  s{a} -> s{b} [label=\"{label}\"];");
    }
    out.push_str("}\n");
    Some(out)
}

fn outcome(verdict: Verdict, stats: Stats, dot: Option<String>) -> VerifyOutcome {
    VerifyOutcome { verdict, stats, dot }
}

fn build_cex(
    image: &Image,
    states: &[StateRec],
    error_id: usize,
    boot_edge: Option<CexEdge>,
) -> Counterexample {
    let mut edges = Vec::new();
    if let Some(e) = boot_edge {
        edges.push(e);
    }
    let mut at = error_id;
    while let Some((parent, edge)) = &states[at].parent {
        edges.push(edge.clone());
        at = *parent;
    }
    edges.reverse();
    let final_snapshot = &states[error_id].snapshot;
    Counterexample {
        program_hash: image.hash_hex(),
        final_key: cex::key_digest(&canonical_key(final_snapshot)),
        edges,
    }
}

/// Re-run a counterexample against an image and cross-check every recorded
/// decision. Returns the trace output on success.
pub fn replay(
    image: &Image,
    entry: &str,
    cex: &Counterexample,
    eval: &EvalOptions,
) -> Result<Vec<String>, String> {
    if cex.program_hash != image.hash_hex() {
        return Err(format!(
            "program hash mismatch: counterexample is for {}, image is {}",
            cex.program_hash,
            image.hash_hex()
        ));
    }
    let mut traces = Vec::new();
    let mut edges = cex.edges.iter();
    let booted = boot(image, entry, &mut crate::vm::ZeroOracle, eval)?;
    let mut snapshot = booted.snapshot.clone();
    if snapshot.error {
        let edge = edges.next().ok_or("empty counterexample for a boot error")?;
        check_edge(image, edge, &booted, 0)?;
        traces.extend(booted.traces);
    } else {
        for (i, edge) in edges.enumerate() {
            let forced: Vec<u64> = edge.choices.iter().map(|&(_, v)| v).collect();
            let mut oracle = ForcedOracle::new(forced);
            let r = run_edge(image, &snapshot, &mut oracle, eval);
            check_edge(image, edge, &r, i)?;
            traces.extend(r.traces.iter().cloned());
            snapshot = r.snapshot;
        }
    }
    if !snapshot.error {
        return Err("replay did not end in an error state".to_string());
    }
    let key = cex::key_digest(&canonical_key(&snapshot));
    if key != cex.final_key {
        return Err(format!(
            "final state diverged: key {} recorded, {} replayed",
            cex.final_key, key
        ));
    }
    Ok(traces)
}

fn run_edge(
    image: &Image,
    from: &Snapshot,
    oracle: &mut dyn ChooseOracle,
    eval: &EvalOptions,
) -> TransitionResult {
    transition(image, from, oracle, eval)
}

fn check_edge(
    image: &Image,
    recorded: &CexEdge,
    actual: &TransitionResult,
    index: usize,
) -> Result<(), String> {
    let got = edge_of(image, actual);
    if got.choices != recorded.choices {
        return Err(format!(
            "edge {index}: choices diverged: recorded {:?}, replayed {:?}",
            recorded.choices, got.choices
        ));
    }
    if got.interrupts != recorded.interrupts {
        return Err(format!(
            "edge {index}: interrupts diverged: recorded {:?}, replayed {:?}",
            recorded.interrupts, got.interrupts
        ));
    }
    if got.traces != recorded.traces {
        return Err(format!(
            "edge {index}: traces diverged: recorded {:?}, replayed {:?}",
            recorded.traces, got.traces
        ));
    }
    Ok(())
}
