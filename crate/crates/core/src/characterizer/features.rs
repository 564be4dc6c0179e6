pub const LOCAL_ENTROPY_LEVELS: usize = 10;
pub const FEATURE_COUNT: usize = 17 + LOCAL_ENTROPY_LEVELS;

/// Canonical column names, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "opcode_diversity_90",
    "total_instruction_count",
    "work_items",
    "total_barriers_hit",
    "min_itb",
    "max_itb",
    "median_itb",
    "max_simd_width",
    "mean_simd_width",
    "sd_simd_width",
    "total_memory_footprint",
    "ninety_memory_footprint",
    "global_memory_address_entropy",
    "local_memory_address_entropy_1",
    "local_memory_address_entropy_2",
    "local_memory_address_entropy_3",
    "local_memory_address_entropy_4",
    "local_memory_address_entropy_5",
    "local_memory_address_entropy_6",
    "local_memory_address_entropy_7",
    "local_memory_address_entropy_8",
    "local_memory_address_entropy_9",
    "local_memory_address_entropy_10",
    "total_unique_branch_instructions",
    "ninety_branch_instructions",
    "yokota_branch_entropy",
    "average_linear_branch_entropy",
];

// slack for comparisons between independently rounded reals
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub opcode_diversity_90: f64,
    pub total_instruction_count: f64,
    pub work_items: f64,
    pub total_barriers_hit: f64,
    pub min_itb: f64,
    pub max_itb: f64,
    pub median_itb: f64,
    pub max_simd_width: f64,
    pub mean_simd_width: f64,
    pub sd_simd_width: f64,
    pub total_memory_footprint: f64,
    pub ninety_memory_footprint: f64,
    pub global_memory_address_entropy: f64,
    /// Entry `i` discards `i + 1` low address bits.
    pub local_memory_address_entropy: [f64; LOCAL_ENTROPY_LEVELS],
    pub total_unique_branch_instructions: f64,
    pub ninety_branch_instructions: f64,
    pub yokota_branch_entropy: f64,
    pub average_linear_branch_entropy: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[..13].copy_from_slice(&[
            self.opcode_diversity_90,
            self.total_instruction_count,
            self.work_items,
            self.total_barriers_hit,
            self.min_itb,
            self.max_itb,
            self.median_itb,
            self.max_simd_width,
            self.mean_simd_width,
            self.sd_simd_width,
            self.total_memory_footprint,
            self.ninety_memory_footprint,
            self.global_memory_address_entropy,
        ]);
        out[13..23].copy_from_slice(&self.local_memory_address_entropy);
        out[23..].copy_from_slice(&[
            self.total_unique_branch_instructions,
            self.ninety_branch_instructions,
            self.yokota_branch_entropy,
            self.average_linear_branch_entropy,
        ]);
        out
    }

    /// Inverse of [`to_array`](Self::to_array); `None` unless exactly [`FEATURE_COUNT`] values.
    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != FEATURE_COUNT {
            return None;
        }
        let mut local = [0.0; LOCAL_ENTROPY_LEVELS];
        local.copy_from_slice(&values[13..23]);
        Some(FeatureVector {
            opcode_diversity_90: values[0],
            total_instruction_count: values[1],
            work_items: values[2],
            total_barriers_hit: values[3],
            min_itb: values[4],
            max_itb: values[5],
            median_itb: values[6],
            max_simd_width: values[7],
            mean_simd_width: values[8],
            sd_simd_width: values[9],
            total_memory_footprint: values[10],
            ninety_memory_footprint: values[11],
            global_memory_address_entropy: values[12],
            local_memory_address_entropy: local,
            total_unique_branch_instructions: values[23],
            ninety_branch_instructions: values[24],
            yokota_branch_entropy: values[25],
            average_linear_branch_entropy: values[26],
        })
    }

    /// Lists every violated structural invariant; empty when the vector is consistent.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                bad.push(what.to_string());
            }
        };
        let values = self.to_array();
        check(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "all metrics finite and non-negative",
        );
        check(
            self.min_itb <= self.median_itb && self.median_itb <= self.max_itb,
            "min_itb <= median_itb <= max_itb",
        );
        check(
            self.ninety_memory_footprint <= self.total_memory_footprint,
            "ninety_memory_footprint <= total_memory_footprint",
        );
        check(
            self.ninety_branch_instructions <= self.total_unique_branch_instructions,
            "ninety_branch_instructions <= total_unique_branch_instructions",
        );
        check(
            self.local_memory_address_entropy.windows(2).all(|w| w[1] <= w[0]),
            "local memory entropy non-increasing in skipped bits",
        );
        if self.total_memory_footprint > 0.0 {
            check(
                self.global_memory_address_entropy <= self.total_memory_footprint.log2() + EPS,
                "global entropy <= log2(footprint)",
            );
        } else {
            check(
                self.global_memory_address_entropy == 0.0,
                "no memory accesses means zero entropy",
            );
        }
        check(
            self.mean_simd_width <= self.max_simd_width + EPS,
            "mean_simd_width <= max_simd_width",
        );
        check(
            self.average_linear_branch_entropy <= 1.0 + EPS,
            "average linear branch entropy <= 1",
        );
        check(self.yokota_branch_entropy <= 1.0 + EPS, "yokota entropy <= 1 bit");
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip_preserves_order() {
        let values: Vec<f64> = (0..FEATURE_COUNT).map(|i| i as f64).collect();
        let fv = FeatureVector::from_slice(&values).unwrap();
        assert_eq!(fv.to_array().to_vec(), values);
        assert_eq!(fv.local_memory_address_entropy[0], 13.0);
        assert_eq!(fv.average_linear_branch_entropy, 26.0);
        assert!(FeatureVector::from_slice(&values[1..]).is_none());
    }

    #[test]
    fn names_are_unique() {
        let mut names = FEATURE_NAMES.to_vec();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), FEATURE_COUNT);
    }
}
