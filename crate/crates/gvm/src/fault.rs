//! Fault taxonomy shared between the heap and the evaluator.

use std::fmt;

/// Everything the virtual machine can detect as an illegal operation.
///
/// The numeric codes are a stable ABI: the fault handler shipped with the
/// OS prelude receives the code as its first argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FaultKind {
    OutOfBounds = 1,
    UseAfterFree = 2,
    DoubleFree = 3,
    InvalidFree = 4,
    BadPointer = 5,
    ReadOnly = 6,
    UndefinedControl = 7,
    DivisionByZero = 8,
    BadJumpTarget = 9,
    CallArityMismatch = 10,
    HypercallMisuse = 11,
    DoubleFault = 12,
}

impl FaultKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<FaultKind> {
        use FaultKind::*;
        Some(match code {
            1 => OutOfBounds,
            2 => UseAfterFree,
            3 => DoubleFree,
            4 => InvalidFree,
            5 => BadPointer,
            6 => ReadOnly,
            7 => UndefinedControl,
            8 => DivisionByZero,
            9 => BadJumpTarget,
            10 => CallArityMismatch,
            11 => HypercallMisuse,
            12 => DoubleFault,
            _ => return None,
        })
    }

    /// Inverse of `Display`.
    pub fn parse(name: &str) -> Option<FaultKind> {
        (1..=12).map(|c| FaultKind::from_code(c).unwrap()).find(|k| k.to_string() == name)
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FaultKind::OutOfBounds => "out-of-bounds",
            FaultKind::UseAfterFree => "use-after-free",
            FaultKind::DoubleFree => "double-free",
            FaultKind::InvalidFree => "invalid-free",
            FaultKind::BadPointer => "bad-pointer",
            FaultKind::ReadOnly => "read-only",
            FaultKind::UndefinedControl => "undefined-control",
            FaultKind::DivisionByZero => "division-by-zero",
            FaultKind::BadJumpTarget => "bad-jump-target",
            FaultKind::CallArityMismatch => "call-arity-mismatch",
            FaultKind::HypercallMisuse => "hypercall-misuse",
            FaultKind::DoubleFault => "double-fault",
        };
        f.write_str(name)
    }
}
