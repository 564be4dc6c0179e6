//! Minimal deterministic kernel IR and NDRange interpreter.
//!
//! Kernels are written in a small line-oriented assembly (see
//! `docs/kernel-format.md`). Executing one over an [`NdRange`] yields a
//! [`Trace`]: every executed instruction produces exactly one event, grouped
//! per work-item in linear global-id order.

mod exec;
mod ir;
mod parse;
mod trace;

pub use exec::{execute, execute_with_stats, load_value, ExecError, ExecStats, DEFAULT_FUEL};
pub use ir::{
    AffineExpr, Body, Builtin, Condition, Instruction, Kernel, NdRange, NdRangeError, Opcode, Operand,
    DEFAULT_REGISTERS, MAX_REGISTERS,
};
pub use parse::{parse_kernel, ParseError, ParseErrorKind};
pub use trace::{read_trace, write_trace, Event, EventKind, Trace, TraceError, TRACE_HEADER};

/// Kernels shipped with the crate, keyed by file name.
pub mod samples {
    pub const VECTOR_ADD: &str = include_str!("../../kernels/vector_add.mk");
    pub const REDUCE: &str = include_str!("../../kernels/reduce.mk");
    pub const STENCIL: &str = include_str!("../../kernels/stencil.mk");
    pub const COLLATZ: &str = include_str!("../../kernels/collatz.mk");

    pub const ALL: [(&str, &str); 4] = [
        ("vector_add.mk", VECTOR_ADD),
        ("reduce.mk", REDUCE),
        ("stencil.mk", STENCIL),
        ("collatz.mk", COLLATZ),
    ];
}
