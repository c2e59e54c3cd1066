//! GIR, the textual register IR executed by the virtual machine.
//!
//! The format is line-oriented:
//!
//! ```text
//! global <name> <size> [= hexbytes]
//! const <name> = hexbytes
//! fn <name>(<nparams>) regs <n> {
//! <label>:
//!   <instr>
//! }
//! ```
//!
//! Registers are written `%0..%n-1`, immediates are decimal or `0x` hex,
//! comments run from `;` to end of line. Programs are register-based and
//! mutable: there is no SSA form and no phi nodes.

mod ast;
mod instrument;
mod link;
mod parse;
mod print;
mod validate;

#[cfg(test)]
mod tests;

pub use ast::*;
pub use instrument::{instrument, InstrumentationPolicy};
pub use link::link;
pub use parse::{parse_program, Diagnostic};
pub use print::print_program;
pub use validate::validate;
