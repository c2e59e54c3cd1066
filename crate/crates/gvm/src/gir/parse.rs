//! Line-oriented parser for the GIR text format.

use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

struct Parser {
    diags: Vec<Diagnostic>,
    program: Program,
}

pub fn parse_program(text: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut p = Parser { diags: Vec::new(), program: Program::default() };
    let mut lines = text.lines().enumerate().peekable();
    while let Some((lineno, raw)) = lines.next() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        if let Some(rest) = line.strip_prefix("global ") {
            p.parse_global(lineno, rest);
        } else if let Some(rest) = line.strip_prefix("const ") {
            p.parse_const(lineno, rest);
        } else if let Some(rest) = line.strip_prefix("fn ") {
            let mut body = Vec::new();
            let mut closed = false;
            for (inner_no, inner_raw) in lines.by_ref() {
                let inner = strip_comment(inner_raw).trim().to_string();
                if inner == "}" {
                    closed = true;
                    break;
                }
                if !inner.is_empty() {
                    body.push((inner_no + 1, inner));
                }
            }
            if !closed {
                p.err(lineno, 1, "unterminated function body");
            }
            p.parse_function(lineno, rest, &body);
        } else {
            p.err(lineno, 1, format!("unrecognized top-level line: {line}"));
        }
    }
    p.check_duplicates();
    if p.diags.is_empty() {
        Ok(p.program)
    } else {
        Err(p.diags)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(';') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_hex_bytes(s: &str) -> Option<Vec<u8>> {
    let s = s.trim();
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len() / 2).map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()).collect()
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, t) = match tok.strip_prefix('-') {
        Some(t) => (true, t),
        None => (false, tok),
    };
    let v = if let Some(hex) = t.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()? as i64
    } else {
        t.parse::<u64>().ok()? as i64
    };
    Some(if neg { v.wrapping_neg() } else { v })
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_alphabetic() || s.starts_with('_')
}

impl Parser {
    fn err(&mut self, line: usize, col: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic { line, col, message: message.into() });
    }

    fn check_duplicates(&mut self) {
        let mut seen = std::collections::HashSet::new();
        let names: Vec<String> = self
            .program
            .functions
            .iter()
            .map(|f| f.name.clone())
            .chain(self.program.globals.iter().map(|g| g.name.clone()))
            .chain(self.program.constants.iter().map(|c| c.name.clone()))
            .collect();
        for name in names {
            if !seen.insert(name.clone()) {
                self.err(0, 0, format!("duplicate symbol: {name}"));
            }
        }
    }

    fn parse_global(&mut self, line: usize, rest: &str) {
        let (decl, init) = match rest.split_once('=') {
            Some((d, i)) => (d.trim(), Some(i)),
            None => (rest.trim(), None),
        };
        let mut it = decl.split_whitespace();
        let (Some(name), Some(size)) = (it.next(), it.next()) else {
            return self.err(line, 1, "expected: global <name> <size> [= hexbytes]");
        };
        let Some(size) = parse_int(size).filter(|s| *s >= 0) else {
            return self.err(line, 1, "bad global size");
        };
        let init = match init {
            None => None,
            Some(hex) => match parse_hex_bytes(hex) {
                Some(b) if b.len() <= size as usize => Some(b),
                Some(_) => return self.err(line, 1, "initializer longer than global"),
                None => return self.err(line, 1, "bad hex initializer"),
            },
        };
        self.program.globals.push(GlobalDecl { name: name.to_string(), size: size as usize, init });
    }

    fn parse_const(&mut self, line: usize, rest: &str) {
        let Some((name, hex)) = rest.split_once('=') else {
            return self.err(line, 1, "expected: const <name> = hexbytes");
        };
        let Some(bytes) = parse_hex_bytes(hex) else {
            return self.err(line, 1, "bad hex constant");
        };
        self.program.constants.push(ConstDecl { name: name.trim().to_string(), bytes });
    }

    fn parse_function(&mut self, line: usize, header: &str, body: &[(usize, String)]) {
        // header: `name(<nparams>) regs <n> {`
        let header = header.trim_end_matches('{').trim();
        let parsed = (|| {
            let (name, rest) = header.split_once('(')?;
            let (params, rest) = rest.split_once(')')?;
            let regs = rest.trim().strip_prefix("regs")?.trim();
            Some((name.trim().to_string(), parse_int(params)?, parse_int(regs)?))
        })();
        let Some((name, params, regs)) = parsed else {
            return self.err(line, 1, "expected: fn <name>(<nparams>) regs <n> {");
        };
        if params < 0 || regs < 0 || params > regs || regs > u16::MAX as i64 {
            return self.err(line, 1, "bad register or parameter count");
        }
        let mut blocks: Vec<Block> = Vec::new();
        for (lineno, text) in body {
            if let Some(label) = text.strip_suffix(':') {
                if !is_ident(label) {
                    self.err(*lineno, 1, "bad label");
                    continue;
                }
                blocks.push(Block { label: label.to_string(), instrs: Vec::new() });
                continue;
            }
            if blocks.is_empty() {
                // an implicit entry block keeps small examples short
                blocks.push(Block { label: "entry".to_string(), instrs: Vec::new() });
            }
            if let Some(instr) = self.parse_instr(*lineno, text) {
                blocks.last_mut().unwrap().instrs.push(instr);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for b in &blocks {
            if !seen.insert(b.label.clone()) {
                self.err(line, 1, format!("duplicate label {} in {}", b.label, name));
            }
        }
        self.program.functions.push(Function {
            name,
            params: params as u16,
            regs: regs as u16,
            blocks,
        });
    }

    fn operand(&mut self, line: usize, tok: &str) -> Option<Operand> {
        if let Some(r) = tok.strip_prefix('%') {
            return match r.parse::<u16>() {
                Ok(r) => Some(Operand::Reg(r)),
                Err(_) => {
                    self.err(line, 1, format!("bad register {tok}"));
                    None
                }
            };
        }
        if let Some(s) = tok.strip_prefix('@') {
            let (name, label) = match s.split_once('.') {
                Some((n, l)) => (n.to_string(), Some(l.to_string())),
                None => (s.to_string(), None),
            };
            return Some(Operand::Sym { name, label });
        }
        match parse_int(tok) {
            Some(v) => Some(Operand::Imm(v)),
            None => {
                self.err(line, 1, format!("bad operand {tok}"));
                None
            }
        }
    }

    fn parse_instr(&mut self, line: usize, text: &str) -> Option<Instr> {
        let (dest, rest) = match text.split_once('=') {
            Some((lhs, rhs)) if lhs.trim_start().starts_with('%') => {
                let lhs = lhs.trim();
                match lhs.strip_prefix('%').and_then(|r| r.parse::<u16>().ok()) {
                    Some(d) => (Some(d), rhs.trim()),
                    None => {
                        self.err(line, 1, format!("bad destination {lhs}"));
                        return None;
                    }
                }
            }
            _ => (None, text.trim()),
        };
        let (mnemonic, argtext) = match rest.split_once(char::is_whitespace) {
            Some((m, a)) => (m, a.trim()),
            None => (rest, ""),
        };
        let args: Vec<&str> = if argtext.is_empty() {
            Vec::new()
        } else {
            argtext.split(',').map(|a| a.trim()).collect()
        };

        macro_rules! need_dest {
            () => {
                match dest {
                    Some(d) => d,
                    None => {
                        self.err(line, 1, format!("{mnemonic} needs a destination register"));
                        return None;
                    }
                }
            };
        }
        macro_rules! no_dest {
            () => {
                if dest.is_some() {
                    self.err(line, 1, format!("{mnemonic} has no result"));
                    return None;
                }
            };
        }
        let exact = |p: &mut Self, n: usize| {
            if args.len() != n {
                p.err(line, 1, format!("arity mismatch: {mnemonic} takes {n} operand(s)"));
                false
            } else {
                true
            }
        };

        let bin = |kind| Some((kind, ()));
        let binop = match mnemonic {
            "add" => bin(BinKind::Add),
            "sub" => bin(BinKind::Sub),
            "mul" => bin(BinKind::Mul),
            "udiv" => bin(BinKind::Udiv),
            "sdiv" => bin(BinKind::Sdiv),
            "urem" => bin(BinKind::Urem),
            "srem" => bin(BinKind::Srem),
            "and" => bin(BinKind::And),
            "or" => bin(BinKind::Or),
            "xor" => bin(BinKind::Xor),
            "shl" => bin(BinKind::Shl),
            "lshr" => bin(BinKind::Lshr),
            "ashr" => bin(BinKind::Ashr),
            _ => None,
        };
        if let Some((kind, ())) = binop {
            let dest = need_dest!();
            if !exact(self, 2) {
                return None;
            }
            let a = self.operand(line, args[0])?;
            let b = self.operand(line, args[1])?;
            return Some(Instr::Bin { dest, kind, a, b });
        }
        if let Some(cmp) = mnemonic.strip_prefix("icmp.") {
            let kind = match cmp {
                "eq" => CmpKind::Eq,
                "ne" => CmpKind::Ne,
                "ult" => CmpKind::Ult,
                "ule" => CmpKind::Ule,
                "slt" => CmpKind::Slt,
                "sle" => CmpKind::Sle,
                _ => {
                    self.err(line, 1, format!("unknown comparison icmp.{cmp}"));
                    return None;
                }
            };
            let dest = need_dest!();
            if !exact(self, 2) {
                return None;
            }
            let a = self.operand(line, args[0])?;
            let b = self.operand(line, args[1])?;
            return Some(Instr::Icmp { dest, kind, a, b });
        }
        if let Some(kind) = match mnemonic {
            "zext" => Some(ExtKind::Zext),
            "sext" => Some(ExtKind::Sext),
            "trunc" => Some(ExtKind::Trunc),
            _ => None,
        } {
            let dest = need_dest!();
            if !exact(self, 2) {
                return None;
            }
            let a = self.operand(line, args[0])?;
            let width = match parse_int(args[1]) {
                Some(w @ (1 | 2 | 4 | 8)) => w as u8,
                _ => {
                    self.err(line, 1, "width must be 1, 2, 4 or 8");
                    return None;
                }
            };
            return Some(Instr::Ext { dest, kind, a, width });
        }
        if let Some(w) = mnemonic.strip_prefix("load.") {
            let dest = need_dest!();
            let width = self.width(line, w)?;
            if !exact(self, 1) {
                return None;
            }
            let addr = self.operand(line, args[0])?;
            return Some(Instr::Load { dest, width, addr });
        }
        if let Some(w) = mnemonic.strip_prefix("store.") {
            no_dest!();
            let width = self.width(line, w)?;
            if !exact(self, 2) {
                return None;
            }
            let addr = self.operand(line, args[0])?;
            let value = self.operand(line, args[1])?;
            return Some(Instr::Store { width, addr, value });
        }
        if mnemonic.starts_with("hc.") {
            return self.parse_hypercall(line, mnemonic, dest, &args);
        }
        match mnemonic {
            "gep" => {
                let dest = need_dest!();
                if !exact(self, 2) {
                    return None;
                }
                let base = self.operand(line, args[0])?;
                let offset = self.operand(line, args[1])?;
                Some(Instr::Gep { dest, base, offset })
            }
            "ptrtoint" => {
                let dest = need_dest!();
                if !exact(self, 1) {
                    return None;
                }
                Some(Instr::PtrToInt { dest, a: self.operand(line, args[0])? })
            }
            "inttoptr" => {
                let dest = need_dest!();
                if !exact(self, 1) {
                    return None;
                }
                Some(Instr::IntToPtr { dest, a: self.operand(line, args[0])? })
            }
            "alloca" => {
                let dest = need_dest!();
                if !exact(self, 1) {
                    return None;
                }
                Some(Instr::Alloca { dest, size: self.operand(line, args[0])? })
            }
            "jump" => {
                no_dest!();
                if !exact(self, 1) {
                    return None;
                }
                Some(Instr::Jump { target: args[0].to_string() })
            }
            "br" => {
                no_dest!();
                if !exact(self, 3) {
                    return None;
                }
                let cond = self.operand(line, args[0])?;
                Some(Instr::Br {
                    cond,
                    then_to: args[1].to_string(),
                    else_to: args[2].to_string(),
                })
            }
            "call" => {
                if args.is_empty() {
                    self.err(line, 1, "call needs a target");
                    return None;
                }
                let target = self.operand(line, args[0])?;
                let mut call_args = Vec::new();
                for a in &args[1..] {
                    call_args.push(self.operand(line, a)?);
                }
                Some(Instr::Call { dest, target, args: call_args })
            }
            "ret" => {
                no_dest!();
                match args.len() {
                    0 => Some(Instr::Ret { value: None }),
                    1 => Some(Instr::Ret { value: Some(self.operand(line, args[0])?) }),
                    _ => {
                        self.err(line, 1, "arity mismatch: ret takes at most 1 operand");
                        None
                    }
                }
            }
            "unreachable" => {
                no_dest!();
                Some(Instr::Unreachable)
            }
            _ => {
                self.err(line, 1, format!("unknown instruction {mnemonic}"));
                None
            }
        }
    }

    fn width(&mut self, line: usize, w: &str) -> Option<u8> {
        match parse_int(w) {
            Some(w @ (1 | 2 | 4 | 8)) => Some(w as u8),
            _ => {
                self.err(line, 1, "access width must be 1, 2, 4 or 8");
                None
            }
        }
    }

    fn parse_hypercall(
        &mut self,
        line: usize,
        mnemonic: &str,
        dest: Option<u16>,
        args: &[&str],
    ) -> Option<Instr> {
        let kind = match mnemonic {
            "hc.obj_make" => HcKind::ObjMake,
            "hc.obj_free" => HcKind::ObjFree,
            "hc.obj_size" => HcKind::ObjSize,
            "hc.obj_resize" => HcKind::ObjResize,
            "hc.obj_shared" => HcKind::ObjShared,
            "hc.trace" => HcKind::Trace,
            "hc.interrupt_mem" => HcKind::InterruptMem,
            "hc.interrupt_cfl" => HcKind::InterruptCfl,
            "hc.choose" => HcKind::Choose,
            "hc.control" => HcKind::Control,
            _ => {
                self.err(line, 1, format!("unknown hypercall {mnemonic}"));
                return None;
            }
        };
        let (want_args, want_dest) = if kind == HcKind::Control {
            // `%d = hc.control 0, <reg>` reads, `hc.control 1, <reg>, <value>` writes
            if dest.is_some() { (2, true) } else { (3, false) }
        } else {
            kind.arity()
        };
        if args.len() != want_args {
            self.err(
                line,
                1,
                format!("arity mismatch: {mnemonic} takes {want_args} argument(s)"),
            );
            return None;
        }
        if want_dest && dest.is_none() {
            self.err(line, 1, format!("{mnemonic} needs a destination register"));
            return None;
        }
        if !want_dest && dest.is_some() {
            self.err(line, 1, format!("{mnemonic} has no result"));
            return None;
        }
        let mut ops = Vec::new();
        for a in args {
            ops.push(self.operand(line, a)?);
        }
        Some(Instr::Hypercall { dest, kind, args: ops })
    }
}
