use std::collections::BTreeMap;

use super::histogram::{coverage_90, HistogramSummary};
use crate::microkernel::{EventKind, Trace};

/// Longest supported global branch history.
pub const MAX_HISTORY_LENGTH: u32 = 24;
pub const DEFAULT_HISTORY_LENGTH: u32 = 8;

/// Shannon entropy in bits of the item distribution. Empty histograms have entropy 0.
///
/// Computed as `log2(N) - Σ c·log2(c) / N`, so items seen once contribute exactly
/// nothing to the sum and an all-distinct histogram yields exactly `log2(N)`.
pub fn shannon_entropy<K: Ord>(hist: &HistogramSummary<K>) -> f64 {
    if hist.len() <= 1 {
        return 0.0;
    }
    let total = hist.total() as f64;
    let weighted: f64 = hist
        .iter()
        .filter(|&(_, c)| c > 1)
        .map(|(_, c)| {
            let c = c as f64;
            c * c.log2()
        })
        .sum();
    (total.log2() - weighted / total).max(0.0)
}

/// Entropy of the addresses after discarding the `skip_bits` low-order bits.
pub fn local_entropy(accesses: &HistogramSummary<u64>, skip_bits: u32) -> f64 {
    let coarse = accesses.map_keys(|a| a.checked_shr(skip_bits).unwrap_or(0));
    shannon_entropy(&coarse)
}

/// Control-flow metrics derived from the dynamic branch stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchEntropies {
    pub yokota: f64,
    pub average_linear: f64,
    pub unique_sites: usize,
    pub sites_90: usize,
}

fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Pattern-weighted branch entropies over per-work-item global histories.
///
/// Each work-item keeps its own `history_length`-bit history of outcomes, starting
/// at all zeros. Statistics for every history pattern are pooled across
/// work-items before the weighted sums are taken.
pub fn branch_entropies(trace: &Trace, history_length: u32) -> BranchEntropies {
    let mask: u32 = if history_length >= 32 {
        u32::MAX
    } else {
        (1u32 << history_length) - 1
    };
    // pattern -> (taken, total)
    let mut patterns: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    let mut sites = HistogramSummary::new();
    let mut branches = 0u64;
    for block in trace.work_items() {
        let mut history = 0u32;
        for event in block {
            if let EventKind::Branch { site, taken } = event.kind {
                let entry = patterns.entry(history).or_insert((0, 0));
                entry.0 += taken as u64;
                entry.1 += 1;
                history = ((history << 1) | taken as u32) & mask;
                sites.add(site);
                branches += 1;
            }
        }
    }
    if branches == 0 {
        return BranchEntropies::default();
    }
    let total = branches as f64;
    let mut yokota = 0.0;
    let mut linear = 0.0;
    for &(taken, seen) in patterns.values() {
        let weight = seen as f64 / total;
        let p = taken as f64 / seen as f64;
        yokota += weight * binary_entropy(p);
        linear += weight * 2.0 * p.min(1.0 - p);
    }
    BranchEntropies {
        yokota,
        average_linear: linear,
        unique_sites: sites.len(),
        sites_90: coverage_90(&sites),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microkernel::{Event, Opcode};

    fn branch_trace(outcomes: &[bool]) -> Trace {
        let mut events: Vec<Event> = outcomes
            .iter()
            .map(|&taken| Event {
                work_item: [0, 0, 0],
                opcode: Opcode::Br,
                width: 1,
                kind: EventKind::Branch { site: 7, taken },
            })
            .collect();
        events.push(Event {
            work_item: [0, 0, 0],
            opcode: Opcode::Halt,
            width: 1,
            kind: EventKind::Op,
        });
        Trace::from_events(events).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let eight: HistogramSummary<u64> = (0..8).collect();
        assert_eq!(shannon_entropy(&eight), 3.0);
        let one: HistogramSummary<u64> = [(42, 100)].into_iter().collect();
        assert_eq!(shannon_entropy(&one), 0.0);
        let skew: HistogramSummary<char> = [('a', 1), ('b', 3)].into_iter().collect();
        assert!((shannon_entropy(&skew) - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert_eq!(shannon_entropy(&HistogramSummary::<u8>::new()), 0.0);
    }

    #[test]
    fn local_entropy_examples() {
        let addrs: HistogramSummary<u64> = (0..4).collect();
        assert_eq!(local_entropy(&addrs, 1), 1.0);
        assert_eq!(local_entropy(&addrs, 2), 0.0);
    }

    #[test]
    fn always_taken_is_predictable() {
        let b = branch_entropies(&branch_trace(&[true; 50]), 8);
        assert_eq!(b.yokota, 0.0);
        assert_eq!(b.average_linear, 0.0);
        assert_eq!((b.unique_sites, b.sites_90), (1, 1));
    }

    #[test]
    fn coin_flip_pattern() {
        // both work-items start from the zero history; one takes the branch, one doesn't
        let mut events = Vec::new();
        for (x, taken) in [(0u64, true), (1, false)] {
            events.push(Event {
                work_item: [x, 0, 0],
                opcode: Opcode::Br,
                width: 1,
                kind: EventKind::Branch { site: 0, taken },
            });
            events.push(Event {
                work_item: [x, 0, 0],
                opcode: Opcode::Halt,
                width: 1,
                kind: EventKind::Op,
            });
        }
        let b = branch_entropies(&Trace::from_events(events).unwrap(), 4);
        assert_eq!(b.yokota, 1.0);
        assert_eq!(b.average_linear, 1.0);
    }

    #[test]
    fn alternating_sequence_becomes_predictable() {
        let outcomes: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        for len in [1, 2, 8, 24] {
            let b = branch_entropies(&branch_trace(&outcomes), len);
            assert!(b.yokota < 0.05, "len {len}: {}", b.yokota);
            assert!(b.average_linear < 0.05);
        }
    }

    #[test]
    fn no_branches_all_zero() {
        assert_eq!(
            branch_entropies(&branch_trace(&[]), 8),
            BranchEntropies::default()
        );
    }
}
