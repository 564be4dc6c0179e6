//! Architecture-independent feature extraction from execution traces.
//!
//! [`characterize`] reduces a [`Trace`] to a fixed-order [`FeatureVector`]
//! covering the compute, parallelism, memory and control metric families.
//! Metrics over empty event classes (no branches, no memory accesses) are 0.

mod entropy;
mod features;
mod histogram;

pub use entropy::{
    branch_entropies, local_entropy, shannon_entropy, BranchEntropies, DEFAULT_HISTORY_LENGTH,
    MAX_HISTORY_LENGTH,
};
pub use features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES, LOCAL_ENTROPY_LEVELS};
pub use histogram::{coverage_90, HistogramSummary};

use crate::microkernel::{EventKind, Opcode, Trace};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CharacterizeError {
    #[error("trace has no events")]
    EmptyTrace,
    #[error("branch history length must be in 1..={MAX_HISTORY_LENGTH}, got {0}")]
    HistoryLength(u32),
}

/// Instructions-between-barriers summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItbStats {
    pub min: u64,
    pub max: u64,
    pub median: f64,
    pub total_barriers: u64,
}

/// Splits each work-item's stream at barriers and summarizes the pooled segment lengths.
///
/// Barriers and the terminal `halt` are not counted as instructions of a
/// segment; the trailing segment after the last barrier is included.
pub fn itb_stats(trace: &Trace) -> ItbStats {
    let mut segments = Vec::new();
    let mut total_barriers = 0u64;
    for block in trace.work_items() {
        let mut current = 0u64;
        for event in block {
            match event.kind {
                EventKind::Barrier => {
                    total_barriers += 1;
                    segments.push(current);
                    current = 0;
                }
                _ if event.is_terminal() => {}
                _ => current += 1,
            }
        }
        segments.push(current);
    }
    if segments.is_empty() {
        return ItbStats {
            min: 0,
            max: 0,
            median: 0.0,
            total_barriers,
        };
    }
    segments.sort_unstable();
    let n = segments.len();
    let median = if n % 2 == 1 {
        segments[n / 2] as f64
    } else {
        (segments[n / 2 - 1] as f64 + segments[n / 2] as f64) / 2.0
    };
    ItbStats {
        min: segments[0],
        max: segments[n - 1],
        median,
        total_barriers,
    }
}

/// Computes the full feature vector of a trace.
pub fn characterize(trace: &Trace, history_length: u32) -> Result<FeatureVector, CharacterizeError> {
    if trace.is_empty() {
        return Err(CharacterizeError::EmptyTrace);
    }
    if history_length == 0 || history_length > MAX_HISTORY_LENGTH {
        return Err(CharacterizeError::HistoryLength(history_length));
    }

    let mut opcodes: HistogramSummary<Opcode> = HistogramSummary::new();
    let mut addresses: HistogramSummary<u64> = HistogramSummary::new();
    let mut widths: Vec<u32> = Vec::new();
    for event in trace.events() {
        opcodes.add(event.opcode);
        match event.kind {
            EventKind::Mem { address } => addresses.add(address),
            EventKind::Op if !event.is_terminal() => widths.push(event.width),
            _ => {}
        }
    }

    // Integer moments keep the statistics independent of event order.
    let (max_simd, mean_simd, sd_simd) = if widths.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let n = widths.len() as u128;
        let max = *widths.iter().max().expect("non-empty") as f64;
        let sum: u128 = widths.iter().map(|&w| w as u128).sum();
        let sum_sq: u128 = widths.iter().map(|&w| (w as u128) * (w as u128)).sum();
        let nf = n as f64;
        let var = (n * sum_sq - sum * sum) as f64 / (nf * nf);
        (max, sum as f64 / nf, var.sqrt())
    };

    let itb = itb_stats(trace);
    let branches = branch_entropies(trace, history_length);
    let mut local = [0.0; LOCAL_ENTROPY_LEVELS];
    for (i, slot) in local.iter_mut().enumerate() {
        *slot = local_entropy(&addresses, i as u32 + 1);
    }

    Ok(FeatureVector {
        opcode_diversity_90: coverage_90(&opcodes) as f64,
        total_instruction_count: trace.events().len() as f64,
        work_items: trace.work_item_count() as f64,
        total_barriers_hit: itb.total_barriers as f64,
        min_itb: itb.min as f64,
        max_itb: itb.max as f64,
        median_itb: itb.median,
        max_simd_width: max_simd,
        mean_simd_width: mean_simd,
        sd_simd_width: sd_simd,
        total_memory_footprint: addresses.len() as f64,
        ninety_memory_footprint: coverage_90(&addresses) as f64,
        global_memory_address_entropy: shannon_entropy(&addresses),
        local_memory_address_entropy: local,
        total_unique_branch_instructions: branches.unique_sites as f64,
        ninety_branch_instructions: branches.sites_90 as f64,
        yokota_branch_entropy: branches.yokota,
        average_linear_branch_entropy: branches.average_linear,
    })
}
