//! The virtual machine: lowered program images and the transition evaluator.
//!
//! A transition runs from one scheduler invocation to the next. Registers are
//! stored in heap-allocated activation frames, so the reachability-closed
//! snapshot taken at the end of a transition is the complete program state.

mod eval;
mod image;
mod oracle;

pub use eval::{
    boot, transition, EvalOptions, FaultRecord, InterruptHint, Outcome, TransitionResult,
    FLAG_ACCEPT, FLAG_ERROR, FLAG_INTERRUPTED, FLAG_MASK,
};
pub use image::{lower, Image, LOp, LoweredFn, LoweredInstr, Value};
pub use oracle::{ChooseOracle, ForcedOracle, ZeroOracle};
