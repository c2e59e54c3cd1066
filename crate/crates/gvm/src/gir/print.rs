//! Textual printer. `parse_program(print_program(p)) == p` for valid programs,
//! which the state space explorer relies on when hashing linked images.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        match &g.init {
            Some(bytes) => {
                let _ = writeln!(out, "global {} {} = {}", g.name, g.size, hex(bytes));
            }
            None => {
                let _ = writeln!(out, "global {} {}", g.name, g.size);
            }
        }
    }
    for c in &p.constants {
        let _ = writeln!(out, "const {} = {}", c.name, hex(&c.bytes));
    }
    for f in &p.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "fn {}({}) regs {} {{", f.name, f.params, f.regs);
        for b in &f.blocks {
            let _ = writeln!(out, "{}:", b.label);
            for i in &b.instrs {
                let _ = writeln!(out, "  {}", print_instr(i));
            }
        }
        out.push_str("}\n");
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn op(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => format!("%{r}"),
        Operand::Imm(v) => format!("{v}"),
        Operand::Sym { name, label: None } => format!("@{name}"),
        Operand::Sym { name, label: Some(l) } => format!("@{name}.{l}"),
    }
}

fn ops(xs: &[Operand]) -> String {
    xs.iter().map(op).collect::<Vec<_>>().join(", ")
}

fn print_instr(i: &Instr) -> String {
    match i {
        Instr::Bin { dest, kind, a, b } => {
            format!("%{dest} = {} {}, {}", kind.mnemonic(), op(a), op(b))
        }
        Instr::Icmp { dest, kind, a, b } => {
            format!("%{dest} = icmp.{} {}, {}", kind.mnemonic(), op(a), op(b))
        }
        Instr::Ext { dest, kind, a, width } => {
            format!("%{dest} = {} {}, {width}", kind.mnemonic(), op(a))
        }
        Instr::Gep { dest, base, offset } => {
            format!("%{dest} = gep {}, {}", op(base), op(offset))
        }
        Instr::PtrToInt { dest, a } => format!("%{dest} = ptrtoint {}", op(a)),
        Instr::IntToPtr { dest, a } => format!("%{dest} = inttoptr {}", op(a)),
        Instr::Load { dest, width, addr } => format!("%{dest} = load.{width} {}", op(addr)),
        Instr::Store { width, addr, value } => {
            format!("store.{width} {}, {}", op(addr), op(value))
        }
        Instr::Alloca { dest, size } => format!("%{dest} = alloca {}", op(size)),
        Instr::Jump { target } => format!("jump {target}"),
        Instr::Br { cond, then_to, else_to } => {
            format!("br {}, {then_to}, {else_to}", op(cond))
        }
        Instr::Call { dest: Some(d), target, args } if args.is_empty() => {
            format!("%{d} = call {}", op(target))
        }
        Instr::Call { dest: Some(d), target, args } => {
            format!("%{d} = call {}, {}", op(target), ops(args))
        }
        Instr::Call { dest: None, target, args } if args.is_empty() => {
            format!("call {}", op(target))
        }
        Instr::Call { dest: None, target, args } => {
            format!("call {}, {}", op(target), ops(args))
        }
        Instr::Ret { value: None } => "ret".to_string(),
        Instr::Ret { value: Some(v) } => format!("ret {}", op(v)),
        Instr::Unreachable => "unreachable".to_string(),
        Instr::Hypercall { dest: Some(d), kind, args } if args.is_empty() => {
            format!("%{d} = {}", kind.mnemonic())
        }
        Instr::Hypercall { dest: Some(d), kind, args } => {
            format!("%{d} = {} {}", kind.mnemonic(), ops(args))
        }
        Instr::Hypercall { dest: None, kind, args } if args.is_empty() => {
            kind.mnemonic().to_string()
        }
        Instr::Hypercall { dest: None, kind, args } => {
            format!("{} {}", kind.mnemonic(), ops(args))
        }
    }
}
