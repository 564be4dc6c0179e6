//! NDRange interpreter. Work-items run sequentially, each to completion.

use std::collections::BTreeMap;

use super::ir::{AffineExpr, Body, Builtin, Kernel, NdRange, Opcode, Operand};
use super::trace::{Event, EventKind, Trace};

/// Instructions a single work-item may execute before it is considered runaway.
pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("work-item {work_item:?} exhausted its fuel of {fuel} instructions (infinite loop?)")]
    FuelExhausted { work_item: [u64; 3], fuel: u64 },
    #[error("division by zero at instruction {pc} in work-item {work_item:?}")]
    DivisionByZero { work_item: [u64; 3], pc: usize },
    #[error("no value supplied for kernel parameter `{0}`")]
    MissingArgument(String),
    #[error("argument `{0}` is not a parameter of the kernel")]
    UnknownArgument(String),
    #[error("fuel must be positive")]
    ZeroFuel,
}

/// Deterministic stand-in for memory contents: the value a LOAD observes at `address`.
pub fn load_value(address: u64) -> i64 {
    // splitmix64 finalizer
    let mut z = address.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as i64
}

struct WorkItem<'a> {
    gid: [u64; 3],
    lid: [u64; 3],
    grp: [u64; 3],
    range: &'a NdRange,
    args: &'a [i64],
    regs: Vec<i64>,
}

impl WorkItem<'_> {
    fn builtin(&self, b: Builtin) -> i64 {
        let v = match b {
            Builtin::GlobalId(d) => self.gid[d as usize],
            Builtin::LocalId(d) => self.lid[d as usize],
            Builtin::GroupId(d) => self.grp[d as usize],
            Builtin::GlobalSize(d) => self.range.global()[d as usize],
            Builtin::LocalSize(d) => self.range.local()[d as usize],
        };
        v as i64
    }

    fn value(&self, op: &Operand) -> i64 {
        match *op {
            Operand::Reg(r) => self.regs[r as usize],
            Operand::Imm(v) => v,
            Operand::Builtin(b) => self.builtin(b),
            Operand::Param(i) => self.args[i],
        }
    }

    fn address(&self, expr: &AffineExpr) -> u64 {
        expr.terms.iter().fold(expr.constant, |acc, (coeff, atom)| {
            acc.wrapping_add(coeff.wrapping_mul(self.value(atom)))
        }) as u64
    }
}

/// Per-work-item step counts, kept apart from the event stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecStats {
    pub steps: Vec<u64>,
}

/// Runs every work-item of `ndrange` and returns the combined trace.
pub fn execute(
    kernel: &Kernel,
    ndrange: &NdRange,
    args: &BTreeMap<String, i64>,
    fuel: u64,
) -> Result<Trace, ExecError> {
    execute_with_stats(kernel, ndrange, args, fuel).map(|(trace, _)| trace)
}

pub fn execute_with_stats(
    kernel: &Kernel,
    ndrange: &NdRange,
    args: &BTreeMap<String, i64>,
    fuel: u64,
) -> Result<(Trace, ExecStats), ExecError> {
    if fuel == 0 {
        return Err(ExecError::ZeroFuel);
    }
    if let Some(unknown) = args.keys().find(|k| kernel.param_index(k).is_none()) {
        return Err(ExecError::UnknownArgument(unknown.clone()));
    }
    let arg_values = kernel
        .params
        .iter()
        .map(|p| {
            args.get(p)
                .copied()
                .ok_or_else(|| ExecError::MissingArgument(p.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let local = ndrange.local();
    let mut events = Vec::new();
    let mut steps = Vec::new();
    for gid in ndrange.global_ids() {
        let mut wi = WorkItem {
            gid,
            lid: [gid[0] % local[0], gid[1] % local[1], gid[2] % local[2]],
            grp: [gid[0] / local[0], gid[1] / local[1], gid[2] / local[2]],
            range: ndrange,
            args: &arg_values,
            regs: vec![0; kernel.registers as usize],
        };
        steps.push(run_work_item(kernel, &mut wi, fuel, &mut events)?);
    }
    Ok((Trace::new(events, ndrange.work_items()), ExecStats { steps }))
}

fn run_work_item(
    kernel: &Kernel,
    wi: &mut WorkItem<'_>,
    fuel: u64,
    events: &mut Vec<Event>,
) -> Result<u64, ExecError> {
    let mut pc = 0usize;
    let mut executed = 0u64;
    loop {
        if executed == fuel {
            return Err(ExecError::FuelExhausted {
                work_item: wi.gid,
                fuel,
            });
        }
        executed += 1;
        let inst = &kernel.instructions[pc];
        let mut next = pc + 1;
        let kind = match &inst.body {
            Body::Binary { dst, lhs, rhs } => {
                let (a, b) = (wi.value(lhs), wi.value(rhs));
                let v = match inst.opcode {
                    Opcode::Add => a.wrapping_add(b),
                    Opcode::Sub => a.wrapping_sub(b),
                    Opcode::Mul => a.wrapping_mul(b),
                    Opcode::Div => {
                        if b == 0 {
                            return Err(ExecError::DivisionByZero {
                                work_item: wi.gid,
                                pc,
                            });
                        }
                        a.wrapping_div(b)
                    }
                    Opcode::And => a & b,
                    Opcode::Or => a | b,
                    Opcode::Xor => a ^ b,
                    Opcode::Shl => a.wrapping_shl((b & 63) as u32),
                    other => unreachable!("{other} is not a binary opcode"),
                };
                wi.regs[*dst as usize] = v;
                EventKind::Op
            }
            Body::Mad { dst, a, b, c } => {
                let v = wi.value(a).wrapping_mul(wi.value(b)).wrapping_add(wi.value(c));
                wi.regs[*dst as usize] = v;
                EventKind::Op
            }
            Body::Cmp { cond, dst, lhs, rhs } => {
                wi.regs[*dst as usize] = cond.holds(wi.value(lhs), wi.value(rhs)) as i64;
                EventKind::Op
            }
            Body::Mov { dst, src } => {
                wi.regs[*dst as usize] = wi.value(src);
                EventKind::Op
            }
            Body::Load { dst, addr } => {
                let address = wi.address(addr);
                wi.regs[*dst as usize] = load_value(address);
                EventKind::Mem { address }
            }
            Body::Store { addr, .. } => EventKind::Mem {
                address: wi.address(addr),
            },
            Body::Branch { target, cond } => {
                let taken = cond.as_ref().is_none_or(|c| wi.value(c) != 0);
                if taken {
                    next = *target;
                }
                EventKind::Branch {
                    site: pc as u32,
                    taken,
                }
            }
            Body::Barrier => EventKind::Barrier,
            Body::Halt => EventKind::Op,
        };
        events.push(Event {
            work_item: wi.gid,
            opcode: inst.opcode,
            width: inst.width,
            kind,
        });
        if inst.opcode == Opcode::Halt {
            return Ok(executed);
        }
        pc = next;
    }
}
