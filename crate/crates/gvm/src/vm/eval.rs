//! Transition evaluator. Executes instructions from one scheduler entry to
//! the next, applying the interrupt reduction rules and routing faults to the
//! guest fault handler.

use std::collections::HashSet;

use crate::fault::FaultKind;
use crate::gir::{BinKind, CmpKind, ExtKind, HcKind};
use crate::heap::{slot_entry, Heap, MemCtx, Pointer, PtrTag, Snapshot, SnapshotRoots};

use super::{ChooseOracle, Image, LOp, LoweredInstr, Value};

pub const FLAG_ERROR: u64 = 1;
pub const FLAG_ACCEPT: u64 = 2;
pub const FLAG_MASK: u64 = 4;
pub const FLAG_INTERRUPTED: u64 = 8;

// control register indices for hc.control
const CR_FRAME: u64 = 0;
const CR_GLOBALS: u64 = 1;
const CR_CONSTANTS: u64 = 2;
const CR_SCHED: u64 = 3;
const CR_FAULT: u64 = 4;
const CR_FLAGS: u64 = 5;
const CR_PC: u64 = 6;

// frame header: parent link and resume PC, then the register file
const FRAME_PARENT: i64 = 0;
const FRAME_RESUME: i64 = 8;
const FRAME_HEADER: usize = 16;

// obj_make/obj_resize refuse absurd sizes instead of exhausting memory
const MAX_OBJECT: u64 = 1 << 24;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Reduce control-flow interrupts to loop re-entries within a transition.
    pub tau_cfl: bool,
    /// Reduce memory interrupts to visible accesses of shared objects.
    pub tau_mem: bool,
    /// Instruction limit per transition.
    pub step_budget: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { tau_cfl: true, tau_mem: true, step_budget: 1_000_000 }
    }
}

/// One interrupt decision taken during a transition, recorded for
/// counterexample readability and replay cross-checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterruptHint {
    pub at: Pointer,
    pub mem: bool,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultRecord {
    pub kind: FaultKind,
    pub at: Pointer,
    /// Where execution would continue under as-if semantics.
    pub cont: Pointer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The transition yielded; the snapshot has successors.
    Step,
    /// The scheduler returned: a terminal state.
    Exit,
    /// The step budget ran out mid-transition.
    Budget,
}

#[derive(Debug, Clone)]
pub struct TransitionResult {
    pub snapshot: Snapshot,
    /// Every `hc.choose` taken, as (bound, picked).
    pub choices: Vec<(u64, u64)>,
    pub interrupts: Vec<InterruptHint>,
    pub traces: Vec<String>,
    pub faults: Vec<FaultRecord>,
    pub steps: usize,
    pub outcome: Outcome,
}

enum Flow {
    Next,
    Jump(u32),
    /// `pc` was set absolutely (call, ret, fault entry, frame switch).
    Redirect,
    End(Outcome),
}

struct Machine<'a> {
    image: &'a Image,
    opts: &'a EvalOptions,
    oracle: &'a mut dyn ChooseOracle,
    heap: Heap,
    ctx: MemCtx,
    frame: Pointer,
    pc: Pointer,
    sched_state: Pointer,
    fault_handler: Pointer,
    int_frame: Pointer,
    flags: u64,
    /// Flags saved at fault entry; `Some` while the handler is active.
    saved_flags: Option<u64>,
    booting: bool,
    cfl_seen: HashSet<u64>,
    mem_loads: HashSet<(u32, u64)>,
    choices: Vec<(u64, u64)>,
    interrupts: Vec<InterruptHint>,
    traces: Vec<String>,
    faults: Vec<FaultRecord>,
    steps: usize,
}

/// Run the boot transition on a fresh heap. `__boot` receives a code pointer
/// to `entry` and is expected to install the scheduler state and yield.
pub fn boot(
    image: &Image,
    entry: &str,
    oracle: &mut dyn ChooseOracle,
    opts: &EvalOptions,
) -> Result<TransitionResult, String> {
    let entry = image.code_ptr(entry).ok_or_else(|| format!("no function named {entry}"))?;
    let boot_fn = image.code_ptr("__boot").ok_or("no function named __boot")?;
    let mut heap = Heap::new();
    let globals = crate::heap::build_slot_object(&mut heap, &image.globals);
    let cslots: Vec<(usize, Option<Vec<u8>>)> =
        image.constants.iter().map(|c| (c.len(), Some(c.clone()))).collect();
    let constants = crate::heap::build_slot_object(&mut heap, &cslots);
    let mut m = Machine {
        image,
        opts,
        oracle,
        heap,
        ctx: MemCtx { globals, constants },
        frame: Pointer::null(),
        pc: Pointer::null(),
        sched_state: Pointer::null(),
        fault_handler: Pointer::null(),
        int_frame: Pointer::null(),
        flags: 0,
        saved_flags: None,
        booting: true,
        cfl_seen: HashSet::new(),
        mem_loads: HashSet::new(),
        choices: Vec::new(),
        interrupts: Vec::new(),
        traces: Vec::new(),
        faults: Vec::new(),
        steps: 0,
    };
    let frame = m.push_frame(boot_fn, &[Value::ptr(entry)], Pointer::null());
    m.frame = frame;
    m.pc = boot_fn;
    Ok(m.run())
}

/// Run one transition from a snapshot: invoke the scheduler with the frame
/// interrupted last time (or null) and execute until the next yield.
pub fn transition(
    image: &Image,
    from: &Snapshot,
    oracle: &mut dyn ChooseOracle,
    opts: &EvalOptions,
) -> TransitionResult {
    let sched = image.code_ptr("scheduler").expect("image has a scheduler");
    let mut m = Machine {
        image,
        opts,
        oracle,
        heap: from.restore(),
        ctx: MemCtx { globals: from.roots.globals, constants: from.roots.constants },
        frame: Pointer::null(),
        pc: Pointer::null(),
        sched_state: from.roots.sched_state,
        fault_handler: from.roots.fault_handler,
        int_frame: Pointer::null(),
        flags: 0,
        saved_flags: None,
        booting: false,
        cfl_seen: HashSet::new(),
        mem_loads: HashSet::new(),
        choices: Vec::new(),
        interrupts: Vec::new(),
        traces: Vec::new(),
        faults: Vec::new(),
        steps: 0,
    };
    let arg = Value { bits: from.roots.int_frame.encode(), defined: true, pointer: true };
    let frame = m.push_frame(sched, &[arg], Pointer::null());
    m.frame = frame;
    m.pc = sched;
    m.run()
}

impl<'a> Machine<'a> {
    fn run(mut self) -> TransitionResult {
        let outcome = loop {
            if self.steps >= self.opts.step_budget {
                break Outcome::Budget;
            }
            let instr = match self.fetch() {
                Ok(i) => i,
                Err(flow) => match flow {
                    Flow::End(o) => break o,
                    _ => continue,
                },
            };
            self.steps += 1;
            match self.exec(&instr) {
                Flow::Next => self.pc = Pointer::code(self.pc.id, self.pc.offset + 1),
                Flow::Jump(i) => self.pc = Pointer::code(self.pc.id, i),
                Flow::Redirect => {}
                Flow::End(o) => break o,
            }
        };
        let roots = SnapshotRoots {
            sched_state: self.sched_state,
            int_frame: self.int_frame,
            globals: self.ctx.globals,
            constants: self.ctx.constants,
            fault_handler: self.fault_handler,
        };
        let error = self.flags & FLAG_ERROR != 0;
        let accept = self.flags & FLAG_ACCEPT != 0;
        TransitionResult {
            snapshot: Snapshot::capture(&self.heap, roots, error, accept),
            choices: self.choices,
            interrupts: self.interrupts,
            traces: self.traces,
            faults: self.faults,
            steps: self.steps,
            outcome,
        }
    }

    fn fetch(&mut self) -> Result<LoweredInstr, Flow> {
        let f = match self.image.function(self.pc.id) {
            Some(f) if self.pc.tag == PtrTag::Code => f,
            _ => return Err(self.raise(FaultKind::BadJumpTarget, self.pc)),
        };
        match f.code.get(self.pc.offset as usize) {
            Some(i) => Ok(i.clone()),
            None => Err(self.raise(FaultKind::BadJumpTarget, self.pc)),
        }
    }

    // register and frame-slot access; frames are ordinary heap objects

    fn r8(&self, p: Pointer) -> Value {
        let out = self.heap.read(&self.ctx, p, 8).expect("frame slot read");
        Value { bits: out.bits, defined: out.defined, pointer: out.is_pointer }
    }

    fn w8(&mut self, p: Pointer, v: Value) {
        self.heap.write(&self.ctx, p, 8, v.bits, v.defined, v.pointer).expect("frame slot write");
    }

    fn reg_slot(&self, r: u16) -> Pointer {
        self.frame.gep(FRAME_HEADER as i64 + 8 * r as i64)
    }

    fn get_reg(&self, r: u16) -> Value {
        self.r8(self.reg_slot(r))
    }

    fn set_reg(&mut self, r: u16, v: Value) {
        self.w8(self.reg_slot(r), v)
    }

    fn eval(&self, o: &LOp) -> Value {
        match o {
            LOp::Reg(r) => self.get_reg(*r),
            LOp::Const(v) => *v,
        }
    }

    fn set_dest(&mut self, dest: Option<u16>, v: Value) {
        if let Some(d) = dest {
            self.set_reg(d, v);
        }
    }

    /// Allocate and initialise an activation frame for `target`.
    fn push_frame(&mut self, target: Pointer, args: &[Value], parent: Pointer) -> Pointer {
        let f = self.image.function(target.id).expect("frame for known function");
        let fp = self.heap.obj_make(FRAME_HEADER + 8 * f.regs as usize);
        self.w8(fp.gep(FRAME_PARENT), Value { bits: parent.encode(), defined: true, pointer: true });
        self.w8(fp.gep(FRAME_RESUME), Value { bits: 0, defined: true, pointer: true });
        for (i, a) in args.iter().enumerate() {
            self.w8(fp.gep(FRAME_HEADER as i64 + 8 * i as i64), *a);
        }
        fp
    }

    /// Route a fault to the guest handler, or force the Error flag when no
    /// handler can run. A fault while the handler is active is a DoubleFault
    /// and always ends the transition in error.
    fn raise(&mut self, kind: FaultKind, cont: Pointer) -> Flow {
        self.faults.push(FaultRecord { kind, at: self.pc, cont });
        if self.saved_flags.is_some() {
            self.faults.push(FaultRecord { kind: FaultKind::DoubleFault, at: self.pc, cont });
            self.flags |= FLAG_ERROR;
            return Flow::End(Outcome::Step);
        }
        let handler = self.fault_handler;
        let usable = handler.tag == PtrTag::Code
            && !handler.is_null()
            && self.image.function(handler.id).map(|f| f.params == 4).unwrap_or(false);
        if !usable {
            self.flags |= FLAG_ERROR;
            return Flow::End(Outcome::Step);
        }
        let args = [
            Value::int(kind.code() as u64),
            Value::ptr(self.pc),
            Value::ptr(cont),
            Value { bits: self.frame.encode(), defined: true, pointer: true },
        ];
        let hframe = self.push_frame(handler, &args, self.frame);
        self.saved_flags = Some(self.flags);
        self.flags |= FLAG_MASK;
        self.frame = hframe;
        self.pc = handler;
        Flow::Redirect
    }

    fn next_pc(&self) -> Pointer {
        Pointer::code(self.pc.id, self.pc.offset + 1)
    }

    fn masked(&self) -> bool {
        self.flags & FLAG_MASK != 0
    }

    /// Suspend the current frame and yield to the verifier. The next
    /// transition hands the frame back to the scheduler.
    fn fire_interrupt(&mut self) -> Flow {
        let cont = self.next_pc();
        self.w8(self.frame.gep(FRAME_RESUME), Value::ptr(cont));
        self.int_frame = self.frame;
        self.flags |= FLAG_INTERRUPTED;
        Flow::End(Outcome::Step)
    }

    /// Backing heap object and absolute offset of an address, if it has one.
    fn backing(&self, p: Pointer) -> Option<(u32, u64)> {
        match p.tag {
            PtrTag::Heap => Some((p.id, p.offset as u64)),
            PtrTag::Global => {
                let obj = self.heap.object(self.ctx.globals.id)?;
                let (off, _) = slot_entry(obj, p.id)?;
                Some((self.ctx.globals.id, off as u64 + p.offset as u64))
            }
            _ => None,
        }
    }

    fn exec(&mut self, instr: &LoweredInstr) -> Flow {
        match instr {
            LoweredInstr::Bin { dest, kind, a, b } => {
                let a = self.eval(a);
                let b = self.eval(b);
                let defined = a.defined && b.defined;
                let bits = match kind {
                    BinKind::Add => a.bits.wrapping_add(b.bits),
                    BinKind::Sub => a.bits.wrapping_sub(b.bits),
                    BinKind::Mul => a.bits.wrapping_mul(b.bits),
                    BinKind::And => a.bits & b.bits,
                    BinKind::Or => a.bits | b.bits,
                    BinKind::Xor => a.bits ^ b.bits,
                    BinKind::Shl => a.bits.wrapping_shl(b.bits as u32 & 63),
                    BinKind::Lshr => a.bits.wrapping_shr(b.bits as u32 & 63),
                    BinKind::Ashr => ((a.bits as i64).wrapping_shr(b.bits as u32 & 63)) as u64,
                    BinKind::Udiv | BinKind::Sdiv | BinKind::Urem | BinKind::Srem => {
                        if b.bits == 0 {
                            // as-if result of a division that trapped
                            self.set_reg(*dest, Value::undef(0));
                            return self.raise(FaultKind::DivisionByZero, self.next_pc());
                        }
                        match kind {
                            BinKind::Udiv => a.bits / b.bits,
                            BinKind::Urem => a.bits % b.bits,
                            BinKind::Sdiv => {
                                (a.bits as i64).wrapping_div(b.bits as i64) as u64
                            }
                            _ => (a.bits as i64).wrapping_rem(b.bits as i64) as u64,
                        }
                    }
                };
                self.set_reg(*dest, Value { bits, defined, pointer: false });
                Flow::Next
            }
            LoweredInstr::Icmp { dest, kind, a, b } => {
                let a = self.eval(a);
                let b = self.eval(b);
                let hit = match kind {
                    CmpKind::Eq => a.bits == b.bits,
                    CmpKind::Ne => a.bits != b.bits,
                    CmpKind::Ult => a.bits < b.bits,
                    CmpKind::Ule => a.bits <= b.bits,
                    CmpKind::Slt => (a.bits as i64) < (b.bits as i64),
                    CmpKind::Sle => (a.bits as i64) <= (b.bits as i64),
                };
                let defined = a.defined && b.defined;
                self.set_reg(*dest, Value { bits: hit as u64, defined, pointer: false });
                Flow::Next
            }
            LoweredInstr::Ext { dest, kind, a, width } => {
                let a = self.eval(a);
                let w = *width as u32 * 8;
                let mask = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
                let bits = match kind {
                    ExtKind::Zext | ExtKind::Trunc => a.bits & mask,
                    ExtKind::Sext => {
                        let v = a.bits & mask;
                        let sign = 1u64 << (w - 1);
                        if w < 64 && v & sign != 0 { v | !mask } else { v }
                    }
                };
                self.set_reg(*dest, Value { bits, defined: a.defined, pointer: false });
                Flow::Next
            }
            LoweredInstr::Gep { dest, base, offset } => {
                let base = self.eval(base);
                let off = self.eval(offset);
                let defined = base.defined && off.defined;
                let v = if base.pointer {
                    let p = Pointer::decode(base.bits).gep(off.bits as i64);
                    Value { bits: p.encode(), defined, pointer: true }
                } else {
                    Value { bits: base.bits.wrapping_add(off.bits), defined, pointer: false }
                };
                self.set_reg(*dest, v);
                Flow::Next
            }
            LoweredInstr::PtrToInt { dest, a } => {
                let a = self.eval(a);
                self.set_reg(*dest, Value { bits: a.bits, defined: a.defined, pointer: false });
                Flow::Next
            }
            LoweredInstr::IntToPtr { dest, a } => {
                let a = self.eval(a);
                self.set_reg(*dest, Value { bits: a.bits, defined: a.defined, pointer: true });
                Flow::Next
            }
            LoweredInstr::Load { dest, width, addr } => {
                let addr = self.eval(addr);
                if !addr.pointer || !addr.defined {
                    self.set_reg(*dest, Value::undef(0));
                    return self.raise(FaultKind::BadPointer, self.next_pc());
                }
                match self.heap.read(&self.ctx, Pointer::decode(addr.bits), *width as usize) {
                    Ok(out) => {
                        self.set_reg(
                            *dest,
                            Value { bits: out.bits, defined: out.defined, pointer: out.is_pointer },
                        );
                        Flow::Next
                    }
                    Err(kind) => {
                        self.set_reg(*dest, Value::undef(0));
                        self.raise(kind, self.next_pc())
                    }
                }
            }
            LoweredInstr::Store { width, addr, value } => {
                let addr = self.eval(addr);
                let v = self.eval(value);
                if !addr.pointer || !addr.defined {
                    return self.raise(FaultKind::BadPointer, self.next_pc());
                }
                let p = Pointer::decode(addr.bits);
                match self.heap.write(&self.ctx, p, *width as usize, v.bits, v.defined, v.pointer)
                {
                    Ok(()) => Flow::Next,
                    Err(kind) => self.raise(kind, self.next_pc()),
                }
            }
            LoweredInstr::Alloca { dest, size } => {
                let size = self.eval(size);
                if !size.defined || size.bits > MAX_OBJECT {
                    self.set_reg(*dest, Value::undef(0));
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                let p = self.heap.obj_make(size.bits as usize);
                self.set_reg(*dest, Value::ptr(p));
                Flow::Next
            }
            LoweredInstr::Jump { target } => Flow::Jump(*target),
            LoweredInstr::Br { cond, then_to, else_to } => {
                let cond = self.eval(cond);
                let target = if cond.bits != 0 { *then_to } else { *else_to };
                if !cond.defined {
                    // branching on an undefined value; the as-if direction is
                    // offered to the handler as the continuation
                    let cont = Pointer::code(self.pc.id, target);
                    return self.raise(FaultKind::UndefinedControl, cont);
                }
                Flow::Jump(target)
            }
            LoweredInstr::Call { dest, target, args } => {
                let t = self.eval(target);
                if !t.pointer || !t.defined {
                    self.set_dest(*dest, Value::undef(0));
                    return self.raise(FaultKind::BadPointer, self.next_pc());
                }
                let tp = Pointer::decode(t.bits);
                let callee = match self.image.function(tp.id) {
                    Some(f) if tp.tag == PtrTag::Code && (tp.offset as usize) < f.code.len() => f,
                    _ => {
                        self.set_dest(*dest, Value::undef(0));
                        return self.raise(FaultKind::BadJumpTarget, self.next_pc());
                    }
                };
                if args.len() != callee.params as usize {
                    self.set_dest(*dest, Value::undef(0));
                    return self.raise(FaultKind::CallArityMismatch, self.next_pc());
                }
                let argv: Vec<Value> = args.iter().map(|a| self.eval(a)).collect();
                // the caller suspends at the call site; ret resumes past it
                self.w8(self.frame.gep(FRAME_RESUME), Value::ptr(self.pc));
                let frame = self.push_frame(tp, &argv, self.frame);
                self.frame = frame;
                self.pc = tp;
                Flow::Redirect
            }
            LoweredInstr::Ret { value } => {
                let v = value.as_ref().map(|v| self.eval(v)).unwrap_or(Value::undef(0));
                let parent = self.r8(self.frame.gep(FRAME_PARENT));
                let pp = Pointer::decode(parent.bits);
                if !parent.pointer || !parent.defined || pp.is_null() {
                    // returning from a root frame ends the run
                    return Flow::End(Outcome::Exit);
                }
                let _ = self.heap.obj_free(self.frame);
                self.frame = pp;
                // checked read: the guest may have freed or corrupted frames
                let resume = match self.heap.read(&self.ctx, self.frame.gep(FRAME_RESUME), 8) {
                    Ok(out) => Value { bits: out.bits, defined: out.defined, pointer: out.is_pointer },
                    Err(k) => return self.raise(k, self.next_pc()),
                };
                let rp = Pointer::decode(resume.bits);
                if !resume.pointer || !resume.defined || rp.tag != PtrTag::Code {
                    return self.raise(FaultKind::BadJumpTarget, self.next_pc());
                }
                let call = self
                    .image
                    .function(rp.id)
                    .and_then(|f| f.code.get(rp.offset as usize))
                    .cloned();
                if let Some(LoweredInstr::Call { dest: Some(d), .. }) = call {
                    self.set_reg(d, v);
                }
                self.pc = Pointer::code(rp.id, rp.offset + 1);
                Flow::Redirect
            }
            LoweredInstr::Unreachable => self.raise(FaultKind::BadJumpTarget, self.next_pc()),
            LoweredInstr::Hypercall { dest, kind, args } => self.hypercall(*dest, *kind, args),
        }
    }

    fn hypercall(&mut self, dest: Option<u16>, kind: HcKind, args: &[LOp]) -> Flow {
        let argv: Vec<Value> = args.iter().map(|a| self.eval(a)).collect();
        // interrupts tolerate garbage addresses: the guarded access faults on
        // its own and the interrupt must not preempt that
        if !matches!(kind, HcKind::InterruptMem | HcKind::InterruptCfl)
            && argv.iter().any(|v| !v.defined)
        {
            self.set_dest(dest, Value::undef(0));
            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
        }
        match kind {
            HcKind::ObjMake => {
                let size = argv[0];
                if size.bits > MAX_OBJECT {
                    self.set_dest(dest, Value::undef(0));
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                let p = self.heap.obj_make(size.bits as usize);
                self.set_dest(dest, Value::ptr(p));
                Flow::Next
            }
            HcKind::ObjFree => {
                let p = Pointer::decode(argv[0].bits);
                // the running frame's registers live in that object
                if p.tag == PtrTag::Heap && p.id == self.frame.id {
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                match self.heap.obj_free(p) {
                    Ok(()) => Flow::Next,
                    Err(k) => self.raise(k, self.next_pc()),
                }
            }
            HcKind::ObjSize => match self.heap.obj_size(Pointer::decode(argv[0].bits)) {
                Ok(n) => {
                    self.set_dest(dest, Value::int(n as u64));
                    Flow::Next
                }
                Err(k) => {
                    self.set_dest(dest, Value::undef(0));
                    self.raise(k, self.next_pc())
                }
            },
            HcKind::ObjResize => {
                let p = Pointer::decode(argv[0].bits);
                if argv[1].bits > MAX_OBJECT {
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                match self.heap.obj_resize(p, argv[1].bits as usize) {
                    Ok(()) => Flow::Next,
                    Err(k) => self.raise(k, self.next_pc()),
                }
            }
            HcKind::ObjShared => {
                // sharing null is a no-op, not a misuse
                if argv[0].bits == 0 {
                    return Flow::Next;
                }
                if !argv[0].pointer {
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                self.heap.mark_shared(Pointer::decode(argv[0].bits));
                Flow::Next
            }
            HcKind::Trace => {
                if !argv[0].pointer {
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                let p = Pointer::decode(argv[0].bits);
                let len = argv[1].bits as usize;
                let mut bytes = Vec::with_capacity(len);
                for i in 0..len {
                    match self.heap.read(&self.ctx, p.gep(i as i64), 1) {
                        Ok(out) if out.defined => bytes.push(out.bits as u8),
                        Ok(_) => bytes.push(b'?'),
                        Err(k) => return self.raise(k, self.next_pc()),
                    }
                }
                self.traces.push(String::from_utf8_lossy(&bytes).into_owned());
                Flow::Next
            }
            HcKind::InterruptCfl => {
                if self.masked() {
                    return Flow::Next;
                }
                let site = self.pc.encode();
                let fire = if self.opts.tau_cfl {
                    // only a revisit within this transition can close a cycle
                    !self.cfl_seen.insert(site)
                } else {
                    true
                };
                self.interrupts.push(InterruptHint { at: self.pc, mem: false, fired: fire });
                if fire {
                    self.fire_interrupt()
                } else {
                    Flow::Next
                }
            }
            HcKind::InterruptMem => {
                if self.masked() {
                    return Flow::Next;
                }
                let addr = argv[0];
                let is_store = argv[1].defined && argv[1].bits != 0;
                // unshared objects are thread-private: no interrupt in any mode
                let target = if addr.pointer && addr.defined {
                    self.backing(Pointer::decode(addr.bits))
                } else {
                    None
                };
                let Some((id, off)) = target else { return Flow::Next };
                if !self.heap.is_shared(id) {
                    return Flow::Next;
                }
                let fire = if !self.opts.tau_mem {
                    true
                } else if is_store {
                    true
                } else {
                    // a second load of the same location can observe a write
                    // scheduled in between; the first cannot
                    !self.mem_loads.insert((id, off))
                };
                self.interrupts.push(InterruptHint { at: self.pc, mem: true, fired: fire });
                if fire {
                    self.fire_interrupt()
                } else {
                    Flow::Next
                }
            }
            HcKind::Choose => {
                let bound = argv[0].bits;
                if bound == 0 {
                    self.set_dest(dest, Value::undef(0));
                    return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                }
                let picked = self.oracle.choose(bound);
                debug_assert!(picked < bound);
                self.choices.push((bound, picked));
                self.set_dest(dest, Value::int(picked));
                Flow::Next
            }
            HcKind::Control => self.control(dest, &argv),
        }
    }

    fn control(&mut self, dest: Option<u16>, argv: &[Value]) -> Flow {
        let action = argv[0].bits;
        let index = argv[1].bits;
        match (action, dest) {
            (0, Some(d)) => {
                let v = match index {
                    CR_FRAME => ptr_value(self.frame),
                    CR_GLOBALS => ptr_value(self.ctx.globals),
                    CR_CONSTANTS => ptr_value(self.ctx.constants),
                    CR_SCHED => ptr_value(self.sched_state),
                    CR_FAULT => ptr_value(self.fault_handler),
                    CR_FLAGS => Value::int(self.flags),
                    CR_PC => Value::ptr(self.pc),
                    _ => {
                        self.set_reg(d, Value::undef(0));
                        return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                    }
                };
                self.set_reg(d, v);
                Flow::Next
            }
            (1, None) => {
                let v = argv[2];
                match index {
                    CR_FRAME => self.set_frame(v),
                    CR_GLOBALS | CR_CONSTANTS if self.booting => {
                        if !v.pointer {
                            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                        }
                        let p = Pointer::decode(v.bits);
                        if index == CR_GLOBALS {
                            self.ctx.globals = p;
                        } else {
                            self.ctx.constants = p;
                        }
                        Flow::Next
                    }
                    CR_SCHED => {
                        // null may be written as a plain immediate
                        if !v.pointer && v.bits != 0 {
                            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                        }
                        self.sched_state = Pointer::decode(v.bits);
                        Flow::Next
                    }
                    CR_FAULT => {
                        if !v.pointer && v.bits != 0 {
                            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                        }
                        self.fault_handler = Pointer::decode(v.bits);
                        Flow::Next
                    }
                    CR_FLAGS => {
                        self.flags = v.bits;
                        Flow::Next
                    }
                    CR_PC => {
                        let p = Pointer::decode(v.bits);
                        if !v.pointer || p.tag != PtrTag::Code {
                            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
                        }
                        self.pc = p;
                        Flow::Redirect
                    }
                    _ => self.raise(FaultKind::HypercallMisuse, self.next_pc()),
                }
            }
            _ => self.raise(FaultKind::HypercallMisuse, self.next_pc()),
        }
    }

    /// `set FramePtr`: null yields back to the verifier, otherwise control
    /// transfers to the target frame at its recorded resume point. Returning
    /// from a fault handler this way restores the pre-fault flags.
    fn set_frame(&mut self, v: Value) -> Flow {
        if v.bits == 0 {
            return Flow::End(Outcome::Step);
        }
        if !v.pointer {
            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
        }
        let p = Pointer::decode(v.bits);
        if let Some(saved) = self.saved_flags.take() {
            self.flags = saved;
        }
        let resume = match self.heap.read(&self.ctx, p.gep(FRAME_RESUME), 8) {
            Ok(out) if out.is_pointer && out.defined => Pointer::decode(out.bits),
            Ok(_) => return self.raise(FaultKind::HypercallMisuse, self.next_pc()),
            Err(k) => return self.raise(k, self.next_pc()),
        };
        if resume.tag != PtrTag::Code {
            return self.raise(FaultKind::HypercallMisuse, self.next_pc());
        }
        self.frame = p;
        self.pc = resume;
        Flow::Redirect
    }
}

fn ptr_value(p: Pointer) -> Value {
    Value { bits: p.encode(), defined: true, pointer: true }
}
