use std::collections::BTreeMap;

/// Item frequencies with a cached total. Keys with a zero count are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramSummary<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for HistogramSummary<K> {
    fn default() -> Self {
        HistogramSummary {
            counts: BTreeMap::new(),
            total: 0,
        }
    }
}

impl<K: Ord> HistogramSummary<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K) {
        self.add_n(key, 1);
    }

    pub fn add_n(&mut self, key: K, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(key).or_insert(0) += n;
        self.total += n;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct items.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Counts in ascending key order.
    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> + '_ {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    /// Re-buckets every key through `f`, merging keys that collide.
    pub fn map_keys<J: Ord>(&self, mut f: impl FnMut(&K) -> J) -> HistogramSummary<J> {
        let mut out = HistogramSummary::new();
        for (k, c) in self.iter() {
            out.add_n(f(k), c);
        }
        out
    }
}

impl<K: Ord> FromIterator<K> for HistogramSummary<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut h = HistogramSummary::new();
        for k in iter {
            h.add(k);
        }
        h
    }
}

impl<K: Ord> FromIterator<(K, u64)> for HistogramSummary<K> {
    fn from_iter<I: IntoIterator<Item = (K, u64)>>(iter: I) -> Self {
        let mut h = HistogramSummary::new();
        for (k, n) in iter {
            h.add_n(k, n);
        }
        h
    }
}

/// Smallest number of most-frequent items whose counts reach 90% of the total.
///
/// Equal counts are ranked by ascending key. An empty histogram yields 0.
pub fn coverage_90<K: Ord>(hist: &HistogramSummary<K>) -> usize {
    let mut counts: Vec<u64> = hist.iter().map(|(_, c)| c).collect();
    // stable sort keeps ascending-key order among equal counts
    counts.sort_by(|a, b| b.cmp(a));
    let total = hist.total() as u128;
    let mut covered: u128 = 0;
    for (i, c) in counts.iter().enumerate() {
        covered += *c as u128;
        if covered * 10 >= total * 9 {
            return i + 1;
        }
    }
    counts.len()
}
