//! Abstract syntax of GIR programs.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub functions: Vec<Function>,
    pub globals: Vec<GlobalDecl>,
    pub constants: Vec<ConstDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<u32> {
        self.functions.iter().position(|f| f.name == name).map(|i| i as u32)
    }

    pub fn global_index(&self, name: &str) -> Option<u32> {
        self.globals.iter().position(|g| g.name == name).map(|i| i as u32)
    }

    pub fn constant_index(&self, name: &str) -> Option<u32> {
        self.constants.iter().position(|c| c.name == name).map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub size: usize,
    pub init: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: u16,
    pub regs: u16,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instr>,
}

/// An instruction operand: a register, an immediate, or a symbol reference.
/// `@name` refers to a global, constant or function; `@fn.label` is a code
/// pointer into the middle of a function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Reg(u16),
    Imm(i64),
    Sym { name: String, label: Option<String> },
}

impl Operand {
    pub fn sym(name: &str) -> Operand {
        Operand::Sym { name: name.to_string(), label: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKind {
    Add,
    Sub,
    Mul,
    Udiv,
    Sdiv,
    Urem,
    Srem,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
}

impl BinKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Udiv => "udiv",
            BinKind::Sdiv => "sdiv",
            BinKind::Urem => "urem",
            BinKind::Srem => "srem",
            BinKind::And => "and",
            BinKind::Or => "or",
            BinKind::Xor => "xor",
            BinKind::Shl => "shl",
            BinKind::Lshr => "lshr",
            BinKind::Ashr => "ashr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpKind {
    Eq,
    Ne,
    Ult,
    Ule,
    Slt,
    Sle,
}

impl CmpKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpKind::Eq => "eq",
            CmpKind::Ne => "ne",
            CmpKind::Ult => "ult",
            CmpKind::Ule => "ule",
            CmpKind::Slt => "slt",
            CmpKind::Sle => "sle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtKind {
    Zext,
    Sext,
    Trunc,
}

impl ExtKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            ExtKind::Zext => "zext",
            ExtKind::Sext => "sext",
            ExtKind::Trunc => "trunc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HcKind {
    ObjMake,
    ObjFree,
    ObjSize,
    ObjResize,
    ObjShared,
    Trace,
    InterruptMem,
    InterruptCfl,
    Choose,
    Control,
}

impl HcKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            HcKind::ObjMake => "hc.obj_make",
            HcKind::ObjFree => "hc.obj_free",
            HcKind::ObjSize => "hc.obj_size",
            HcKind::ObjResize => "hc.obj_resize",
            HcKind::ObjShared => "hc.obj_shared",
            HcKind::Trace => "hc.trace",
            HcKind::InterruptMem => "hc.interrupt_mem",
            HcKind::InterruptCfl => "hc.interrupt_cfl",
            HcKind::Choose => "hc.choose",
            HcKind::Control => "hc.control",
        }
    }

    /// Fixed argument count, and whether a destination register is expected.
    /// Control is special-cased: `get` takes 2 args with a destination,
    /// `set` takes 3 without.
    pub fn arity(self) -> (usize, bool) {
        match self {
            HcKind::ObjMake => (1, true),
            HcKind::ObjFree => (1, false),
            HcKind::ObjSize => (1, true),
            HcKind::ObjResize => (2, false),
            HcKind::ObjShared => (1, false),
            HcKind::Trace => (2, false),
            HcKind::InterruptMem => (2, false),
            HcKind::InterruptCfl => (0, false),
            HcKind::Choose => (1, true),
            HcKind::Control => (2, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Bin { dest: u16, kind: BinKind, a: Operand, b: Operand },
    Icmp { dest: u16, kind: CmpKind, a: Operand, b: Operand },
    Ext { dest: u16, kind: ExtKind, a: Operand, width: u8 },
    Gep { dest: u16, base: Operand, offset: Operand },
    PtrToInt { dest: u16, a: Operand },
    IntToPtr { dest: u16, a: Operand },
    Load { dest: u16, width: u8, addr: Operand },
    Store { width: u8, addr: Operand, value: Operand },
    Alloca { dest: u16, size: Operand },
    Jump { target: String },
    Br { cond: Operand, then_to: String, else_to: String },
    Call { dest: Option<u16>, target: Operand, args: Vec<Operand> },
    Ret { value: Option<Operand> },
    Unreachable,
    Hypercall { dest: Option<u16>, kind: HcKind, args: Vec<Operand> },
}

impl Instr {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Jump { .. } | Instr::Br { .. } | Instr::Ret { .. } | Instr::Unreachable)
    }

    pub fn dest(&self) -> Option<u16> {
        match self {
            Instr::Bin { dest, .. }
            | Instr::Icmp { dest, .. }
            | Instr::Ext { dest, .. }
            | Instr::Gep { dest, .. }
            | Instr::PtrToInt { dest, .. }
            | Instr::IntToPtr { dest, .. }
            | Instr::Load { dest, .. }
            | Instr::Alloca { dest, .. } => Some(*dest),
            Instr::Call { dest, .. } | Instr::Hypercall { dest, .. } => *dest,
            _ => None,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Instr::Bin { a, b, .. } | Instr::Icmp { a, b, .. } => vec![a, b],
            Instr::Ext { a, .. } | Instr::PtrToInt { a, .. } | Instr::IntToPtr { a, .. } => vec![a],
            Instr::Gep { base, offset, .. } => vec![base, offset],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Store { addr, value, .. } => vec![addr, value],
            Instr::Alloca { size, .. } => vec![size],
            Instr::Br { cond, .. } => vec![cond],
            Instr::Call { target, args, .. } => {
                let mut v = vec![target];
                v.extend(args.iter());
                v
            }
            Instr::Ret { value: Some(v) } => vec![v],
            Instr::Hypercall { args, .. } => args.iter().collect(),
            _ => vec![],
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print_program(self))
    }
}
