//! gvm: an explicit-state safety model checker built on a virtual machine
//! with graph-organised memory.
//!
//! The crate is organised around the pipeline `parse -> link -> instrument ->
//! verify`: [`gir`] defines and processes the textual register IR, [`heap`]
//! implements the graph memory and canonical state keys, [`vm`] evaluates
//! transitions, [`mos`] ships the miniature operating system written in GIR,
//! and [`explorer`] searches the state space and replays counterexamples.

pub mod cli;
pub mod explorer;
pub mod fault;
pub mod gir;
pub mod heap;
pub mod mos;
pub mod vm;

pub use fault::FaultKind;
