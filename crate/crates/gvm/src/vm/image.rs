//! Lowering from the AST to a flat executable image. Block labels become
//! instruction indices, symbols become encoded pointers, and the printed
//! source is hashed so counterexamples can be matched to the exact program
//! they were produced from.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::gir::{self, Instr, Operand, Program};
use crate::heap::Pointer;

/// A register-sized value with its shadow bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value {
    pub bits: u64,
    pub defined: bool,
    pub pointer: bool,
}

impl Value {
    pub fn int(bits: u64) -> Value {
        Value { bits, defined: true, pointer: false }
    }

    pub fn ptr(p: Pointer) -> Value {
        Value { bits: p.encode(), defined: true, pointer: true }
    }

    /// Undefined values still carry bits: the as-if value the program would
    /// compute if the memory had been zero-initialised.
    pub fn undef(bits: u64) -> Value {
        Value { bits, defined: false, pointer: false }
    }
}

/// Lowered operand: a register index or a resolved constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LOp {
    Reg(u16),
    Const(Value),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoweredInstr {
    Bin { dest: u16, kind: gir::BinKind, a: LOp, b: LOp },
    Icmp { dest: u16, kind: gir::CmpKind, a: LOp, b: LOp },
    Ext { dest: u16, kind: gir::ExtKind, a: LOp, width: u8 },
    Gep { dest: u16, base: LOp, offset: LOp },
    PtrToInt { dest: u16, a: LOp },
    IntToPtr { dest: u16, a: LOp },
    Load { dest: u16, width: u8, addr: LOp },
    Store { width: u8, addr: LOp, value: LOp },
    Alloca { dest: u16, size: LOp },
    Jump { target: u32 },
    Br { cond: LOp, then_to: u32, else_to: u32 },
    Call { dest: Option<u16>, target: LOp, args: Vec<LOp> },
    Ret { value: Option<LOp> },
    Unreachable,
    Hypercall { dest: Option<u16>, kind: gir::HcKind, args: Vec<LOp> },
}

#[derive(Debug, Clone)]
pub struct LoweredFn {
    pub name: String,
    pub params: u16,
    pub regs: u16,
    pub code: Vec<LoweredInstr>,
}

#[derive(Debug, Clone)]
pub struct Image {
    pub functions: Vec<LoweredFn>,
    /// Per-slot (size, initialiser) of the globals area.
    pub globals: Vec<(usize, Option<Vec<u8>>)>,
    /// Per-slot contents of the read-only constants area.
    pub constants: Vec<Vec<u8>>,
    pub hash: [u8; 32],
    by_name: HashMap<String, u32>,
}

impl Image {
    pub fn function_index(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn function(&self, idx: u32) -> Option<&LoweredFn> {
        self.functions.get(idx as usize)
    }

    pub fn code_ptr(&self, name: &str) -> Option<Pointer> {
        self.function_index(name).map(|i| Pointer::code(i, 0))
    }

    pub fn hash_hex(&self) -> String {
        self.hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Human-readable location of a code pointer, `fn:index`.
    pub fn describe_pc(&self, p: Pointer) -> String {
        match self.function(p.id) {
            Some(f) => format!("{}:{}", f.name, p.offset),
            None => format!("?:{}", p.offset),
        }
    }
}

/// Lower a linked, validated program. Symbol resolution follows the linker's
/// rules, so unresolved references indicate the program was not linked and
/// are treated as a caller bug.
pub fn lower(p: &Program) -> Image {
    let hash: [u8; 32] = Sha256::digest(gir::print_program(p).as_bytes()).into();
    let mut functions = Vec::new();
    for f in &p.functions {
        // first pass: absolute index of each block start
        let mut starts = HashMap::new();
        let mut at = 0u32;
        for b in &f.blocks {
            starts.insert(b.label.as_str(), at);
            at += b.instrs.len() as u32;
        }
        let block = |label: &str| *starts.get(label).expect("validated branch target");
        let mut code = Vec::new();
        for b in &f.blocks {
            for i in &b.instrs {
                code.push(lower_instr(p, i, &block));
            }
        }
        functions.push(LoweredFn { name: f.name.clone(), params: f.params, regs: f.regs, code });
    }
    let by_name =
        p.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i as u32)).collect();
    Image {
        functions,
        globals: p.globals.iter().map(|g| (g.size, g.init.clone())).collect(),
        constants: p.constants.iter().map(|c| c.bytes.clone()).collect(),
        hash,
        by_name,
    }
}

fn lower_operand(p: &Program, o: &Operand) -> LOp {
    match o {
        Operand::Reg(r) => LOp::Reg(*r),
        Operand::Imm(v) => LOp::Const(Value::int(*v as u64)),
        Operand::Sym { name, label } => {
            let ptr = match label {
                Some(l) => {
                    let fi = p.function_index(name).expect("linked symbol");
                    let f = &p.functions[fi as usize];
                    let bi = f.block_index(l).expect("linked label");
                    let at: usize = f.blocks[..bi].iter().map(|b| b.instrs.len()).sum();
                    Pointer::code(fi, at as u32)
                }
                None => {
                    if let Some(fi) = p.function_index(name) {
                        Pointer::code(fi, 0)
                    } else if let Some(gi) = p.global_index(name) {
                        Pointer::global(gi, 0)
                    } else if let Some(ci) = p.constant_index(name) {
                        Pointer::constant(ci, 0)
                    } else {
                        panic!("unresolved symbol @{name}; link before lowering")
                    }
                }
            };
            LOp::Const(Value::ptr(ptr))
        }
    }
}

fn lower_instr(p: &Program, i: &Instr, block: &dyn Fn(&str) -> u32) -> LoweredInstr {
    let op = |o: &Operand| lower_operand(p, o);
    match i {
        Instr::Bin { dest, kind, a, b } => {
            LoweredInstr::Bin { dest: *dest, kind: *kind, a: op(a), b: op(b) }
        }
        Instr::Icmp { dest, kind, a, b } => {
            LoweredInstr::Icmp { dest: *dest, kind: *kind, a: op(a), b: op(b) }
        }
        Instr::Ext { dest, kind, a, width } => {
            LoweredInstr::Ext { dest: *dest, kind: *kind, a: op(a), width: *width }
        }
        Instr::Gep { dest, base, offset } => {
            LoweredInstr::Gep { dest: *dest, base: op(base), offset: op(offset) }
        }
        Instr::PtrToInt { dest, a } => LoweredInstr::PtrToInt { dest: *dest, a: op(a) },
        Instr::IntToPtr { dest, a } => LoweredInstr::IntToPtr { dest: *dest, a: op(a) },
        Instr::Load { dest, width, addr } => {
            LoweredInstr::Load { dest: *dest, width: *width, addr: op(addr) }
        }
        Instr::Store { width, addr, value } => {
            LoweredInstr::Store { width: *width, addr: op(addr), value: op(value) }
        }
        Instr::Alloca { dest, size } => LoweredInstr::Alloca { dest: *dest, size: op(size) },
        Instr::Jump { target } => LoweredInstr::Jump { target: block(target) },
        Instr::Br { cond, then_to, else_to } => LoweredInstr::Br {
            cond: op(cond),
            then_to: block(then_to),
            else_to: block(else_to),
        },
        Instr::Call { dest, target, args } => LoweredInstr::Call {
            dest: *dest,
            target: op(target),
            args: args.iter().map(op).collect(),
        },
        Instr::Ret { value } => LoweredInstr::Ret { value: value.as_ref().map(op) },
        Instr::Unreachable => LoweredInstr::Unreachable,
        Instr::Hypercall { dest, kind, args } => LoweredInstr::Hypercall {
            dest: *dest,
            kind: *kind,
            args: args.iter().map(op).collect(),
        },
    }
}
