//! Structural checks that the parser does not enforce: register ranges,
//! branch targets and block shape.

use super::ast::*;
use super::parse::Diagnostic;

pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut err = |message: String| diags.push(Diagnostic { line: 0, col: 0, message });
    for f in &p.functions {
        if f.blocks.is_empty() {
            err(format!("{}: function has no blocks", f.name));
            continue;
        }
        for b in &f.blocks {
            match b.instrs.last() {
                None => err(format!("{}.{}: empty block", f.name, b.label)),
                Some(last) if !last.is_terminator() => {
                    err(format!("{}.{}: block does not end in a terminator", f.name, b.label))
                }
                Some(_) => {}
            }
            for (idx, i) in b.instrs.iter().enumerate() {
                if i.is_terminator() && idx + 1 != b.instrs.len() {
                    err(format!(
                        "{}.{}: instruction {} follows a terminator",
                        f.name,
                        b.label,
                        idx + 1
                    ));
                }
                if let Some(d) = i.dest() {
                    if d >= f.regs {
                        err(format!("{}.{}: register %{d} out of range", f.name, b.label));
                    }
                }
                for o in i.operands() {
                    if let Operand::Reg(r) = o {
                        if *r >= f.regs {
                            err(format!("{}.{}: register %{r} out of range", f.name, b.label));
                        }
                    }
                }
                let targets: Vec<&str> = match i {
                    Instr::Jump { target } => vec![target],
                    Instr::Br { then_to, else_to, .. } => vec![then_to, else_to],
                    _ => vec![],
                };
                for t in targets {
                    if f.block_index(t).is_none() {
                        err(format!("{}.{}: unknown branch target {t}", f.name, b.label));
                    }
                }
            }
        }
    }
    diags
}
