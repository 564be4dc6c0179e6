//! Regression tree growth on a column-coded training matrix.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestParams, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat pre-order node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index ends at a leaf"),
        }
    }

    /// Index of the leaf `row` falls into; `x <= threshold` goes left.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Children point forward, every node is reachable exactly once and
    /// features are within `width`; guarantees `predict` terminates.
    pub fn is_well_formed(&self, width: usize) -> bool {
        let n = self.nodes.len();
        let mut parents = vec![0u32; n];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => return false,
                Node::Leaf { .. } => {}
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= width || !threshold.is_finite() {
                        return false;
                    }
                    for c in [left, right] {
                        if c <= i || c >= n {
                            return false;
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        n > 0 && parents[0] == 0 && parents[1..].iter().all(|&p| p == 1)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Generator for tree `index`: one ChaCha stream per tree under the forest seed,
/// so trees can be grown in any order.
pub(crate) fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Training matrix recoded per column as ranks into the sorted distinct values.
///
/// Columns split into wide ones (more than two levels) and narrow ones. Rows
/// that agree on every wide column form a group (in a runtime table: one
/// kernel invocation measured on many devices), and likewise on every narrow
/// column (one device). Split search on a column runs over the per-node totals
/// of its groups instead of over rows.
pub(crate) struct Prepared<'a> {
    pub data: &'a TrainingSet,
    levels: Vec<Vec<f64>>,
    /// column-major, `codes[col * n + row]`
    codes: Vec<u32>,
    max_levels: usize,
    groupings: Vec<Grouping>,
    /// the grouping searched for each column, if any
    grouping_of: Vec<Option<usize>>,
}

struct Grouping {
    of_row: Vec<u32>,
    count: usize,
    /// column-major, `codes[col * count + group]`; filled for member columns only
    codes: Vec<u32>,
}

impl<'a> Prepared<'a> {
    pub fn new(data: &'a TrainingSet) -> Self {
        let n = data.len();
        let p = data.width();
        let mut levels = Vec::with_capacity(p);
        let mut codes = vec![0u32; n * p];
        for col in 0..p {
            let mut values: Vec<f64> = (0..n).map(|r| data.value(r, col)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for r in 0..n {
                let v = data.value(r, col);
                let code = values.partition_point(|&x| x < v);
                codes[col * n + r] = code as u32;
            }
            levels.push(values);
        }
        let max_levels = levels.iter().map(Vec::len).max().unwrap_or(0);
        let mut groupings = Vec::new();
        let mut grouping_of = vec![None; p];
        for wide in [true, false] {
            let members: Vec<usize> = (0..p).filter(|&c| (levels[c].len() > 2) == wide).collect();
            if let Some(g) = Grouping::find(&members, &codes, n, p) {
                members
                    .iter()
                    .for_each(|&c| grouping_of[c] = Some(groupings.len()));
                groupings.push(g);
            }
        }
        Prepared {
            data,
            levels,
            codes,
            max_levels,
            groupings,
            grouping_of,
        }
    }

    fn column(&self, col: usize) -> &[u32] {
        let n = self.data.len();
        &self.codes[col * n..(col + 1) * n]
    }
}

impl Grouping {
    /// `None` unless rows share groups at least four to one on average.
    fn find(members: &[usize], codes: &[u32], n: usize, width: usize) -> Option<Grouping> {
        if members.is_empty() {
            return None;
        }
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut of_row = Vec::with_capacity(n);
        for r in 0..n {
            let key: Vec<u32> = members.iter().map(|&c| codes[c * n + r]).collect();
            let next = ids.len() as u32;
            of_row.push(*ids.entry(key).or_insert(next));
        }
        let count = ids.len();
        if count * 4 > n {
            return None;
        }
        let mut gcodes = vec![0u32; width * count];
        for (r, &g) in of_row.iter().enumerate() {
            for &c in members {
                gcodes[c * count + g as usize] = codes[c * n + r];
            }
        }
        Some(Grouping {
            of_row,
            count,
            codes: gcodes,
        })
    }
}

/// Per-node totals of one grouping.
struct GroupTotals {
    w: Vec<f64>,
    s: Vec<f64>,
    /// groups present in the node, in first-seen order, with their totals
    ids: Vec<u32>,
    node_w: Vec<f64>,
    node_s: Vec<f64>,
}

impl GroupTotals {
    fn new(count: usize) -> Self {
        GroupTotals {
            w: vec![0.0; count],
            s: vec![0.0; count],
            ids: Vec::new(),
            node_w: Vec::new(),
            node_s: Vec::new(),
        }
    }

    fn gather(&mut self, grouping: &Grouping, rows: &[u32], row_w: &[f64], row_s: &[f64]) {
        self.ids.clear();
        for (i, &r) in rows.iter().enumerate() {
            let g = grouping.of_row[r as usize] as usize;
            if self.w[g] == 0.0 {
                self.ids.push(g as u32);
            }
            self.w[g] += row_w[i];
            self.s[g] += row_s[i];
        }
        self.node_w.clear();
        self.node_s.clear();
        for &g in &self.ids {
            let g = g as usize;
            self.node_w.push(self.w[g]);
            self.node_s.push(self.s[g]);
            self.w[g] = 0.0;
            self.s[g] = 0.0;
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    feature: usize,
    /// last code sent left
    left_code: u32,
    /// first code sent right
    right_code: u32,
}

struct Scratch {
    /// per code: (weight, weighted response)
    bins: Vec<[f64; 2]>,
    present: Vec<u32>,
    /// per-row (weight, weight * response) of the current node
    node_w: Vec<f64>,
    node_s: Vec<f64>,
    totals: Vec<GroupTotals>,
    features: Vec<usize>,
}

/// Grows tree `index`; returns it with its sorted bootstrap draw list.
pub(crate) fn grow(prep: &Prepared<'_>, params: &ForestParams, index: usize) -> (Tree, Vec<u32>) {
    let data = prep.data;
    let n = data.len();
    let p = data.width();
    let y = data.response();
    let mut rng = tree_rng(params.seed, index);

    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    let mut inbag = Vec::with_capacity(n);
    let mut rows = Vec::new();
    for (r, &c) in counts.iter().enumerate() {
        inbag.extend(std::iter::repeat_n(r as u32, c as usize));
        if c > 0 {
            rows.push(r as u32);
        }
    }

    let mut scratch = Scratch {
        bins: vec![[0.0; 2]; prep.max_levels],
        present: Vec::new(),
        node_w: Vec::new(),
        node_s: Vec::new(),
        totals: prep.groupings.iter().map(|g| GroupTotals::new(g.count)).collect(),
        features: (0..p).collect(),
    };
    let min_split = 2.0 * params.min_node_size as f64;
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, 0usize, rows.len())];
    while let Some((id, start, end)) = stack.pop() {
        let slice = &rows[start..end];
        scratch.node_w.clear();
        scratch.node_s.clear();
        let mut w_total = 0.0;
        let mut s_total = 0.0;
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in slice {
            let w = counts[r as usize] as f64;
            let v = y[r as usize];
            scratch.node_w.push(w);
            scratch.node_s.push(w * v);
            w_total += w;
            s_total += w * v;
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
        let leaf = Node::Leaf {
            value: s_total / w_total,
        };
        if w_total < min_split || y_min == y_max {
            nodes[id] = leaf;
            continue;
        }

        // partial Fisher-Yates: the first mtry entries become the sample
        for i in 0..params.mtry {
            let j = rng.gen_range(i..p);
            scratch.features.swap(i, j);
        }
        let mut chosen: Vec<usize> = scratch.features[..params.mtry].to_vec();
        chosen.sort_unstable();

        for (grouping, totals) in prep.groupings.iter().zip(&mut scratch.totals) {
            totals.gather(grouping, slice, &scratch.node_w, &scratch.node_s);
        }

        let mut best: Option<Candidate> = None;
        for &f in &chosen {
            if let Some(c) = best_split(prep, f, slice, w_total, s_total, &mut scratch) {
                if best.is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else {
            nodes[id] = leaf;
            continue;
        };

        let codes = prep.column(split.feature);
        let slice = &mut rows[start..end];
        let mut mid = 0;
        for i in 0..slice.len() {
            if codes[slice[i] as usize] <= split.left_code {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let levels = &prep.levels[split.feature];
        let lo = levels[split.left_code as usize];
        let hi = levels[split.right_code as usize];
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold,
            left,
            right,
        };
        // right first so the left subtree is processed next
        stack.push((right, start + mid, end));
        stack.push((left, start, start + mid));
    }
    (Tree { nodes }, inbag)
}

/// Best threshold on one feature, maximizing `S_L²/W_L + S_R²/W_R`
/// (equivalently minimizing the weighted child variance).
fn best_split(
    prep: &Prepared<'_>,
    feature: usize,
    rows: &[u32],
    w_total: f64,
    s_total: f64,
    scratch: &mut Scratch,
) -> Option<Candidate> {
    let Scratch {
        bins,
        present,
        node_w,
        node_s,
        totals,
        ..
    } = scratch;
    match prep.grouping_of[feature] {
        Some(k) => {
            let grouping = &prep.groupings[k];
            let codes = &grouping.codes[feature * grouping.count..(feature + 1) * grouping.count];
            let t = &totals[k];
            let items = t
                .ids
                .iter()
                .zip(t.node_w.iter().zip(t.node_s.iter()))
                .map(|(&g, (&w, &s))| (codes[g as usize], w, s));
            sweep(feature, items, w_total, s_total, bins, present)
        }
        None => {
            let codes = prep.column(feature);
            let items = rows
                .iter()
                .zip(node_w.iter().zip(node_s.iter()))
                .map(|(&r, (&w, &s))| (codes[r as usize], w, s));
            sweep(feature, items, w_total, s_total, bins, present)
        }
    }
}

/// Bins `(code, weight, weighted response)` items by code, then scans thresholds.
fn sweep(
    feature: usize,
    items: impl Iterator<Item = (u32, f64, f64)>,
    w_total: f64,
    s_total: f64,
    bins: &mut [[f64; 2]],
    present: &mut Vec<u32>,
) -> Option<Candidate> {
    present.clear();
    let (mut lo, mut hi) = (u32::MAX, 0);
    for (c, w, s) in items {
        lo = lo.min(c);
        hi = hi.max(c);
        let bin = &mut bins[c as usize];
        if bin[0] == 0.0 {
            present.push(c);
        }
        bin[0] += w;
        bin[1] += s;
    }
    if present.len() < 2 {
        for &c in present.iter() {
            bins[c as usize] = [0.0; 2];
        }
        return None;
    }
    let mut scan = Scan {
        feature,
        w_total,
        s_total,
        cum_w: 0.0,
        cum_s: 0.0,
        prev: 0,
        best_score: f64::NEG_INFINITY,
        best: None,
    };
    // dense code ranges are cheaper to walk than to sort
    if (hi - lo) as usize <= 4 * present.len() {
        scan.prev = lo;
        for c in lo..=hi {
            let bin = std::mem::take(&mut bins[c as usize]);
            if bin[0] != 0.0 {
                scan.push(c, bin);
            }
        }
    } else {
        present.sort_unstable();
        scan.prev = present[0];
        for &c in present.iter() {
            scan.push(c, std::mem::take(&mut bins[c as usize]));
        }
    }
    scan.best
}

/// Running left-hand totals over codes in ascending order.
struct Scan {
    feature: usize,
    w_total: f64,
    s_total: f64,
    cum_w: f64,
    cum_s: f64,
    prev: u32,
    best_score: f64,
    best: Option<Candidate>,
}

impl Scan {
    /// Scores the threshold between the previous code and `code`, then adds `code`.
    #[inline]
    fn push(&mut self, code: u32, [w, s]: [f64; 2]) {
        if self.cum_w > 0.0 {
            let wr = self.w_total - self.cum_w;
            let sr = self.s_total - self.cum_s;
            let score = self.cum_s * self.cum_s / self.cum_w + sr * sr / wr;
            if score > self.best_score {
                self.best_score = score;
                self.best = Some(Candidate {
                    score,
                    feature: self.feature,
                    left_code: self.prev,
                    right_code: code,
                });
            }
        }
        self.cum_w += w;
        self.cum_s += s;
        self.prev = code;
    }
}
