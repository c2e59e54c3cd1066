//! Interrupt instrumentation. Inserts `hc.interrupt_cfl` at loop heads and
//! `hc.interrupt_mem` before memory accesses that may touch shared objects,
//! so the scheduler gets a chance to preempt at every visible action.
//!
//! The pass is idempotent: re-running it on an already instrumented program
//! changes nothing.

use std::collections::HashSet;

use super::ast::*;

#[derive(Debug, Clone)]
pub struct InstrumentationPolicy {
    /// Insert `hc.interrupt_cfl` at targets of syntactic back edges.
    pub cfl: bool,
    /// Insert `hc.interrupt_mem` before loads and stores.
    pub mem: bool,
    /// Functions left untouched. The scheduler and the fault handler run on
    /// behalf of the verifier and must not interrupt themselves.
    pub exempt: HashSet<String>,
}

impl Default for InstrumentationPolicy {
    fn default() -> Self {
        InstrumentationPolicy {
            cfl: true,
            mem: true,
            exempt: ["scheduler", "fault_handler"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn instrument(p: &Program, policy: &InstrumentationPolicy) -> Program {
    let mut out = p.clone();
    for f in &mut out.functions {
        if policy.exempt.contains(&f.name) {
            continue;
        }
        if policy.cfl {
            insert_cfl(f);
        }
        if policy.mem {
            insert_mem(f);
        }
    }
    out
}

fn is_cfl(i: &Instr) -> bool {
    matches!(i, Instr::Hypercall { kind: HcKind::InterruptCfl, .. })
}

/// A back edge is a jump or branch to a block at the same or an earlier
/// position in the block list. This over-approximates loop heads, which keeps
/// the rule syntactic and stable under reordering-free edits.
fn insert_cfl(f: &mut Function) {
    let mut heads: HashSet<usize> = HashSet::new();
    for (src, b) in f.blocks.iter().enumerate() {
        for i in &b.instrs {
            let targets: Vec<&str> = match i {
                Instr::Jump { target } => vec![target],
                Instr::Br { then_to, else_to, .. } => vec![then_to, else_to],
                _ => vec![],
            };
            for t in targets {
                if let Some(dst) = f.block_index(t) {
                    if dst <= src {
                        heads.insert(dst);
                    }
                }
            }
        }
    }
    for (idx, b) in f.blocks.iter_mut().enumerate() {
        if heads.contains(&idx) && !b.instrs.first().map(is_cfl).unwrap_or(false) {
            b.instrs.insert(0, Instr::Hypercall {
                dest: None,
                kind: HcKind::InterruptCfl,
                args: vec![],
            });
        }
    }
}

/// Registers provably derived from `alloca` never alias shared objects, so
/// accesses through them need no guard. The fixpoint is a may-analysis over
/// all definitions of a register anywhere in the function, which is sound
/// for the unstructured register machine.
fn local_regs(f: &Function) -> HashSet<u16> {
    let mut local: HashSet<u16> = (0..f.regs).collect();
    // parameters arrive from the caller and may hold anything
    for p in 0..f.params {
        local.remove(&p);
    }
    loop {
        let mut changed = false;
        for b in &f.blocks {
            for i in &b.instrs {
                let Some(d) = i.dest() else { continue };
                if !local.contains(&d) {
                    continue;
                }
                let ok = match i {
                    Instr::Alloca { .. } => true,
                    Instr::Gep { base: Operand::Reg(r), .. } => local.contains(r),
                    _ => false,
                };
                if !ok {
                    local.remove(&d);
                    changed = true;
                }
            }
        }
        if !changed {
            return local;
        }
    }
}

fn is_local(local: &HashSet<u16>, addr: &Operand) -> bool {
    matches!(addr, Operand::Reg(r) if local.contains(r))
}

fn guards(prev: Option<&Instr>, addr: &Operand) -> bool {
    matches!(
        prev,
        Some(Instr::Hypercall { kind: HcKind::InterruptMem, args, .. })
            if args.first() == Some(addr)
    )
}

fn insert_mem(f: &mut Function) {
    let local = local_regs(f);
    for b in &mut f.blocks {
        let mut out = Vec::with_capacity(b.instrs.len());
        for i in b.instrs.drain(..) {
            let guard = match &i {
                Instr::Load { addr, .. } if !is_local(&local, addr) => Some((addr.clone(), 0)),
                Instr::Store { addr, .. } if !is_local(&local, addr) => Some((addr.clone(), 1)),
                _ => None,
            };
            if let Some((addr, kind)) = guard {
                if !guards(out.last(), &addr) {
                    out.push(Instr::Hypercall {
                        dest: None,
                        kind: HcKind::InterruptMem,
                        args: vec![addr, Operand::Imm(kind)],
                    });
                }
            }
            out.push(i);
        }
        b.instrs = out;
    }
}
