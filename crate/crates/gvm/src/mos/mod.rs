//! The miniature operating system shipped with the verifier. It is ordinary
//! GIR, linked in front of the user program, and provides booting, a
//! nondeterministic cooperative scheduler, threads, mutexes, a fallible
//! allocator, assertions and the default fault handler.

use crate::gir::{parse_program, Program};

pub const PRELUDE: &str = include_str!("prelude.gir");

/// Symbols the prelude expects the user program not to define.
pub const RESERVED: &[&str] = &[
    "__boot",
    "scheduler",
    "fault_handler",
    "__main_tramp",
    "__thread_tramp",
    "thread_create",
    "thread_exit",
    "thread_join",
    "mutex_init",
    "mutex_lock",
    "mutex_unlock",
    "assert",
    "malloc",
    "free",
    "__malloc_can_fail",
    "__assert_msg",
    "__fault_msg",
];

/// Parse the embedded prelude. The source is a compile-time constant, so
/// failure is a build defect, not an input error.
pub fn prelude() -> Program {
    parse_program(PRELUDE).expect("prelude parses")
}

/// Prelude with the `__malloc_can_fail` switch turned on.
pub fn prelude_with_failing_malloc() -> Program {
    let mut p = prelude();
    let idx = p.global_index("__malloc_can_fail").unwrap() as usize;
    p.globals[idx].init = Some(vec![1, 0, 0, 0, 0, 0, 0, 0]);
    p
}
