//! Counterexample records: a replayable list of transition edges with the
//! decisions, interrupts, traces and faults observed along the way, stored
//! in a line-oriented text format.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::fault::FaultKind;
use crate::heap::CanonicalKey;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CexEdge {
    pub choices: Vec<(u64, u64)>,
    /// (site, fired) per interrupt decision, site as `fn:index`.
    pub interrupts: Vec<(String, bool)>,
    pub traces: Vec<String>,
    /// (kind, site, as-if continuation) per fault.
    pub faults: Vec<(FaultKind, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub program_hash: String,
    /// Digest of the canonical key of the error state.
    pub final_key: String,
    pub edges: Vec<CexEdge>,
}

pub fn key_digest(key: &CanonicalKey) -> String {
    let digest: [u8; 32] = Sha256::digest(&key.0).into();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn escape(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('n') => out.push('\n'),
            Some(c) => out.push(c),
            None => {}
        }
    }
    out
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GVMCEX 1")?;
        writeln!(f, "program-hash {}", self.program_hash)?;
        writeln!(f, "final-key {}", self.final_key)?;
        for e in &self.edges {
            writeln!(f, "edge")?;
            for &(bound, picked) in &e.choices {
                writeln!(f, "choose {bound} {picked}")?;
            }
            for (site, fired) in &e.interrupts {
                writeln!(f, "int {site} {}", if *fired { "fired" } else { "skip" })?;
            }
            for t in &e.traces {
                writeln!(f, "trace \"{}\"", escape(t))?;
            }
            for (kind, at, cont) in &e.faults {
                writeln!(f, "fault {kind} at {at} cont {cont}")?;
            }
        }
        let error = self
            .edges
            .last()
            .and_then(|e| e.faults.first())
            .map(|(k, _, _)| k.to_string())
            .unwrap_or_else(|| "flag".to_string());
        writeln!(f, "error {error}")
    }
}

pub fn parse_counterexample(text: &str) -> Result<Counterexample, String> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != "GVMCEX 1" {
        return Err("not a counterexample file (missing GVMCEX 1 header)".to_string());
    }
    let mut program_hash = None;
    let mut final_key = None;
    let mut edges: Vec<CexEdge> = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| format!("line {}: {m}", no + 1);
        let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
        match word {
            "program-hash" => program_hash = Some(rest.trim().to_string()),
            "final-key" => final_key = Some(rest.trim().to_string()),
            "edge" => edges.push(CexEdge {
                choices: Vec::new(),
                interrupts: Vec::new(),
                traces: Vec::new(),
                faults: Vec::new(),
            }),
            "choose" => {
                let e = edges.last_mut().ok_or_else(|| err("choose before edge"))?;
                let mut it = rest.split_whitespace();
                let bound = it.next().and_then(|v| v.parse().ok());
                let picked = it.next().and_then(|v| v.parse().ok());
                match (bound, picked) {
                    (Some(b), Some(p)) => e.choices.push((b, p)),
                    _ => return Err(err("malformed choose line")),
                }
            }
            "int" => {
                let e = edges.last_mut().ok_or_else(|| err("int before edge"))?;
                let (site, what) =
                    rest.rsplit_once(' ').ok_or_else(|| err("malformed int line"))?;
                let fired = match what {
                    "fired" => true,
                    "skip" => false,
                    _ => return Err(err("malformed int line")),
                };
                e.interrupts.push((site.to_string(), fired));
            }
            "trace" => {
                let e = edges.last_mut().ok_or_else(|| err("trace before edge"))?;
                let quoted = rest.trim();
                let inner = quoted
                    .strip_prefix('"')
                    .and_then(|s| s.strip_suffix('"'))
                    .ok_or_else(|| err("malformed trace line"))?;
                e.traces.push(unescape(inner));
            }
            "fault" => {
                let e = edges.last_mut().ok_or_else(|| err("fault before edge"))?;
                // fault <kind> at <site> cont <site>
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [kind, "at", at, "cont", cont] = parts.as_slice() else {
                    return Err(err("malformed fault line"));
                };
                let kind = FaultKind::parse(kind).ok_or_else(|| err("unknown fault kind"))?;
                e.faults.push((kind, at.to_string(), cont.to_string()));
            }
            "error" => {}
            _ => return Err(err("unrecognized line")),
        }
    }
    Ok(Counterexample {
        program_hash: program_hash.ok_or("missing program-hash")?,
        final_key: final_key.ok_or("missing final-key")?,
        edges,
    })
}
