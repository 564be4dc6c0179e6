//! Kernel IR: opcodes, operands, affine address expressions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Default register file size when a kernel has no `.regs` directive.
pub const DEFAULT_REGISTERS: u16 = 16;
/// Upper bound accepted by `.regs`.
pub const MAX_REGISTERS: u16 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Div,
    Mad,
    And,
    Or,
    Xor,
    Shl,
    Cmp,
    Mov,
    Load,
    Store,
    Br,
    Barrier,
    Halt,
}

impl Opcode {
    pub const ALL: [Opcode; 16] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::Mad,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Shl,
        Opcode::Cmp,
        Opcode::Mov,
        Opcode::Load,
        Opcode::Store,
        Opcode::Br,
        Opcode::Barrier,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Mad => "mad",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Shl => "shl",
            Opcode::Cmp => "cmp",
            Opcode::Mov => "mov",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Br => "br",
            Opcode::Barrier => "barrier",
            Opcode::Halt => "halt",
        }
    }

    /// Opcodes that must always carry width 1.
    pub fn is_scalar_only(self) -> bool {
        matches!(self, Opcode::Br | Opcode::Barrier | Opcode::Halt)
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Opcode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic() == s)
            .ok_or(())
    }
}

/// Built-in per-work-item values, one per NDRange dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    GlobalId(u8),
    LocalId(u8),
    GroupId(u8),
    GlobalSize(u8),
    LocalSize(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Reg(u16),
    Imm(i64),
    Builtin(Builtin),
    /// Index into [`Kernel::params`].
    Param(usize),
}

/// `constant + Σ coeff·atom`, evaluated with wrapping 64-bit arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: Vec<(i64, Operand)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
}

impl Condition {
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Condition::Lt => a < b,
            Condition::Le => a <= b,
            Condition::Eq => a == b,
            Condition::Ne => a != b,
            Condition::Gt => a > b,
            Condition::Ge => a >= b,
        }
    }
}

impl FromStr for Condition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lt" => Condition::Lt,
            "le" => Condition::Le,
            "eq" => Condition::Eq,
            "ne" => Condition::Ne,
            "gt" => Condition::Gt,
            "ge" => Condition::Ge,
            _ => return Err(()),
        })
    }
}

/// Per-opcode operand payload. Register destinations are plain indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    /// add, sub, mul, div, and, or, xor, shl
    Binary {
        dst: u16,
        lhs: Operand,
        rhs: Operand,
    },
    Mad {
        dst: u16,
        a: Operand,
        b: Operand,
        c: Operand,
    },
    Cmp {
        cond: Condition,
        dst: u16,
        lhs: Operand,
        rhs: Operand,
    },
    Mov {
        dst: u16,
        src: Operand,
    },
    Load {
        dst: u16,
        addr: AffineExpr,
    },
    Store {
        addr: AffineExpr,
        src: Operand,
    },
    /// `cond == None` is an unconditional (always taken) branch.
    Branch {
        target: usize,
        cond: Option<Operand>,
    },
    Barrier,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: Opcode,
    pub width: u32,
    pub body: Body,
}

impl Instruction {
    pub fn addr_expr(&self) -> Option<&AffineExpr> {
        match &self.body {
            Body::Load { addr, .. } | Body::Store { addr, .. } => Some(addr),
            _ => None,
        }
    }
}

/// A validated kernel. Construct through [`crate::microkernel::parse_kernel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub name: String,
    pub params: Vec<String>,
    pub registers: u16,
    pub instructions: Vec<Instruction>,
    pub labels: BTreeMap<String, usize>,
}

impl Kernel {
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    pub fn has_branches(&self) -> bool {
        self.instructions.iter().any(|i| i.opcode == Opcode::Br)
    }
}

/// Global and local work sizes of a launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NdRange {
    global: [u64; 3],
    local: [u64; 3],
}

impl NdRange {
    pub fn new(global: [u64; 3], local: [u64; 3]) -> Result<Self, NdRangeError> {
        for dim in 0..3 {
            if global[dim] == 0 || local[dim] == 0 {
                return Err(NdRangeError::ZeroSize { dim });
            }
            if !global[dim].is_multiple_of(local[dim]) {
                return Err(NdRangeError::NotDivisible {
                    dim,
                    global: global[dim],
                    local: local[dim],
                });
            }
        }
        Ok(NdRange { global, local })
    }

    /// One work-group covering the whole range.
    pub fn single_group(global: [u64; 3]) -> Result<Self, NdRangeError> {
        NdRange::new(global, global)
    }

    pub fn global(&self) -> [u64; 3] {
        self.global
    }

    pub fn local(&self) -> [u64; 3] {
        self.local
    }

    pub fn work_items(&self) -> u64 {
        self.global.iter().product()
    }

    /// Global ids in canonical order: dimension 0 varies fastest.
    pub fn global_ids(&self) -> impl Iterator<Item = [u64; 3]> + '_ {
        let [gx, gy, gz] = self.global;
        (0..gz).flat_map(move |z| (0..gy).flat_map(move |y| (0..gx).map(move |x| [x, y, z])))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NdRangeError {
    #[error("dimension {dim} has zero size")]
    ZeroSize { dim: usize },
    #[error("local size {local} does not divide global size {global} in dimension {dim}")]
    NotDivisible { dim: usize, global: u64, local: u64 },
}
