//! Generators and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use aiwc::characterizer::HistogramSummary;
use aiwc::dataset::{load_dir, Dataset};
use aiwc::forest::{ResponseTransform, TrainingSet};
use aiwc::microkernel::{Event, EventKind, Opcode, Trace};
use rand::seq::SliceRandom;
use rand::Rng;

const ARITH: [Opcode; 11] = [
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
];

/// The bundled 37-kernel, 15-device synthetic dataset.
pub fn bundled_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

pub fn bundled() -> Dataset {
    load_dir(&bundled_dir()).expect("bundled dataset loads").0
}

pub fn bundled_training_set() -> TrainingSet {
    bundled().training_set(ResponseTransform::Log10).unwrap()
}

/// A well-formed random trace: 1–6 work-items, each a random mix of
/// arithmetic, memory, branch and barrier events terminated by HALT.
pub fn random_trace<R: Rng>(rng: &mut R) -> Trace {
    let items = rng.gen_range(1..=6u64);
    let mut ids: Vec<[u64; 3]> = (0..items).map(|i| [i % 3, i / 3, 0]).collect();
    ids.shuffle(rng);
    let address_span = *[4u64, 64, 4096].choose(rng).unwrap();
    let sites = rng.gen_range(1..=6u32);
    let bias: f64 = rng.gen();
    let mut events = Vec::new();
    for wi in ids {
        let len = rng.gen_range(0..80);
        for _ in 0..len {
            let event = match rng.gen_range(0..10) {
                0..=4 => Event {
                    work_item: wi,
                    opcode: *ARITH.choose(rng).unwrap(),
                    width: *[1u32, 1, 2, 4, 8, 16].choose(rng).unwrap(),
                    kind: EventKind::Op,
                },
                5..=6 => Event {
                    work_item: wi,
                    opcode: if rng.gen() { Opcode::Load } else { Opcode::Store },
                    width: 1,
                    kind: EventKind::Mem {
                        address: 0x1000 + rng.gen_range(0..address_span),
                    },
                },
                7..=8 => Event {
                    work_item: wi,
                    opcode: Opcode::Br,
                    width: 1,
                    kind: EventKind::Branch {
                        site: rng.gen_range(0..sites),
                        taken: rng.gen_bool(bias),
                    },
                },
                _ => Event {
                    work_item: wi,
                    opcode: Opcode::Barrier,
                    width: 1,
                    kind: EventKind::Barrier,
                },
            };
            events.push(event);
        }
        events.push(Event {
            work_item: wi,
            opcode: Opcode::Halt,
            width: 1,
            kind: EventKind::Op,
        });
    }
    Trace::from_events(events).expect("generator emits well-formed traces")
}

/// The same trace with its work-item blocks in a different order.
pub fn shuffle_blocks<R: Rng>(trace: &Trace, rng: &mut R) -> Trace {
    let mut blocks: Vec<&[Event]> = trace.work_items().collect();
    blocks.shuffle(rng);
    Trace::from_events(blocks.concat()).unwrap()
}

/// −Σ p·log2 p computed directly from the probabilities.
pub fn entropy_oracle(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Size of the smallest subset of items whose counts reach 90% of the total,
/// by exhaustive search over all subsets (at most 8 items).
pub fn coverage_90_oracle(counts: &[u64]) -> usize {
    assert!(counts.len() <= 8, "exhaustive oracle is for small histograms");
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0;
    }
    let n = counts.len();
    let mut sums = vec![0u64; 1 << n];
    let mut best = n;
    for mask in 1usize..1 << n {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + counts[low];
        if sums[mask] * 10 >= total * 9 {
            best = best.min(mask.count_ones() as usize);
        }
    }
    best
}

pub fn histogram(counts: &[u64]) -> HistogramSummary<usize> {
    let mut h = HistogramSummary::new();
    for (k, &c) in counts.iter().enumerate() {
        h.add_n(k, c);
    }
    h
}

pub fn counts_of<K: Ord>(h: &HistogramSummary<K>) -> Vec<u64> {
    h.iter().map(|(_, c)| c).collect()
}

/// Every count vector of length 1..=`max_items` with entries in 1..=`max_count`.
pub fn all_count_vectors(max_items: usize, max_count: u64) -> impl Iterator<Item = Vec<u64>> {
    (1..=max_items).flat_map(move |len| {
        let combos = (max_count as usize).pow(len as u32);
        (0..combos).map(move |mut code| {
            (0..len)
                .map(|_| {
                    let c = (code % max_count as usize) as u64 + 1;
                    code /= max_count as usize;
                    c
                })
                .collect()
        })
    })
}
