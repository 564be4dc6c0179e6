//! Synthetic stand-in for measured benchmark data.
//!
//! Each kernel gets a latent profile (parallelism, work per item, memory and
//! branch behaviour) from which a consistent feature vector is derived for
//! every problem size. Runtimes follow a documented ground-truth model:
//!
//! ```text
//! log10 t = base(size) + device(d) + log10 g(f) + ε
//! log10 g = c0 + 0.6·log10(instructions) − 0.25·log10(work_items)
//!              + 0.03·global_entropy + 0.35·linear_branch_entropy
//!              + 0.1·log10(1 + median_itb)
//! ```
//!
//! with `ε` a per-measurement Gaussian deviation (standard deviation `noise`)
//! plus smaller per-iteration jitter (`noise / 4`). The model is returned as a
//! [`LatentModel`] so experiments can be compared against the truth.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::csvio::{
    format_real, write_features_csv, write_iterations_csv, write_runtimes_csv, FeatureRow, FEATURES_FILE,
    ITERATIONS_FILE, LATENT_FILE, RUNTIMES_FILE,
};
use super::{Dataset, DatasetError, RuntimeRecord, Sample, Size};
use crate::characterizer::{FeatureVector, LOCAL_ENTROPY_LEVELS};

/// Application → kernels, after the benchmark suite the model targets.
pub const APPLICATIONS: [(&str, &[&str]); 11] = [
    ("kmeans", &["invert_mapping", "kmeansPoint"]),
    ("lud", &["lud_diagonal", "lud_internal", "lud_perimeter"]),
    ("csr", &["csr"]),
    (
        "fft",
        &[
            "fftRadix16Kernel",
            "fftRadix8Kernel",
            "fftRadix4Kernel",
            "fftRadix2Kernel",
        ],
    ),
    ("gem", &["calc_potential_single_step"]),
    ("dwt", &["c_CopySrcToComponents", "cl_fdwt53Kernel"]),
    ("srad", &["srad_cuda_1", "srad_cuda_2"]),
    ("bfs", &["kernel1", "kernel2"]),
    (
        "hmm",
        &[
            "acc_b_dev",
            "calc_alpha_dev",
            "calc_beta_dev",
            "calc_gamma_dev",
            "calc_xi_dev",
            "est_a_dev",
            "est_b_dev",
            "est_pi_dev",
            "init_alpha_dev",
            "init_beta_dev",
            "init_ones_dev",
            "mvm_non_kernel_naive",
            "mvm_trans_kernel_naive",
            "scale_a_dev",
            "scale_alpha_dev",
            "scale_b_dev",
            "s_dot_kernel_naive",
        ],
    ),
    ("nw", &["needle_opencl_shared_1", "needle_opencl_shared_2"]),
    ("crc", &["crc32_slice8"]),
];

/// Device ids, slowest first; default speed factors follow this order.
pub const DEVICES: [&str; 15] = [
    "i5-3550",
    "xeon_phi_7210",
    "i7-6700k",
    "xeon_e5-2697v2",
    "k20m",
    "hd7970",
    "k40m",
    "r9_290x",
    "firepro_s9150",
    "rx480",
    "r9_295x2",
    "gtx1080",
    "r9_fury_x",
    "gtx1080ti",
    "titan_x",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kernel_count: usize,
    pub device_count: usize,
    pub sizes: Vec<Size>,
    /// log10 time multiplier per device; empty spreads devices evenly over
    /// [-1, 1] (slowest at +1) with a small jitter.
    pub device_log10_factors: Vec<f64>,
    /// log10 range of the tiny-size work-item count.
    pub work_items_log10: (f64, f64),
    /// log10 range of dynamic instructions per work-item.
    pub instructions_per_item_log10: (f64, f64),
    /// Standard deviation of the log10 measurement deviation.
    pub noise: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kernel_count: 37,
            device_count: 15,
            sizes: Size::ALL.to_vec(),
            device_log10_factors: Vec::new(),
            work_items_log10: (2.0, 4.5),
            instructions_per_item_log10: (1.5, 3.5),
            noise: 0.02,
            iterations: 8,
            seed: 2018,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::Config(m.to_string()));
        if self.kernel_count == 0 || self.device_count == 0 || self.sizes.is_empty() {
            return bad("kernel, device and size counts must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a non-negative number");
        }
        if !self.device_log10_factors.is_empty() && self.device_log10_factors.len() != self.device_count {
            return bad("one speed factor per device is required");
        }
        for (lo, hi) in [self.work_items_log10, self.instructions_per_item_log10] {
            if !(lo <= hi && lo >= 0.0 && hi <= 9.0) {
                return bad("log10 ranges must satisfy 0 <= lo <= hi <= 9");
            }
        }
        let mut sizes = self.sizes.clone();
        sizes.sort();
        sizes.dedup();
        if sizes.len() != self.sizes.len() {
            return bad("sizes must be distinct");
        }
        Ok(())
    }
}

/// Coefficients of `log10 g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentCoefficients {
    pub intercept: f64,
    pub log10_instructions: f64,
    pub log10_work_items: f64,
    pub global_entropy: f64,
    pub linear_branch_entropy: f64,
    pub log10_median_itb_plus_1: f64,
}

const COEFFICIENTS: LatentCoefficients = LatentCoefficients {
    intercept: -5.6,
    log10_instructions: 0.6,
    log10_work_items: -0.25,
    global_entropy: 0.03,
    linear_branch_entropy: 0.35,
    log10_median_itb_plus_1: 0.1,
};

/// Ground truth of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub size_log10_base: BTreeMap<String, f64>,
    pub device_log10_factor: BTreeMap<String, f64>,
    pub coefficients: LatentCoefficients,
    pub noise: f64,
    pub seed: u64,
}

impl LatentModel {
    pub fn log10_g(&self, f: &FeatureVector) -> f64 {
        let c = &self.coefficients;
        c.intercept
            + c.log10_instructions * f.total_instruction_count.log10()
            + c.log10_work_items * f.work_items.log10()
            + c.global_entropy * f.global_memory_address_entropy
            + c.linear_branch_entropy * f.average_linear_branch_entropy
            + c.log10_median_itb_plus_1 * (1.0 + f.median_itb).log10()
    }

    /// Noise-free runtime in seconds; `None` for an unknown size or device.
    pub fn expected_time(&self, f: &FeatureVector, size: Size, device: &str) -> Option<f64> {
        let base = self.size_log10_base.get(size.name())?;
        let dev = self.device_log10_factor.get(device)?;
        Some(10f64.powf(base + dev + self.log10_g(f)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<LatentModel, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub features: Vec<FeatureRow>,
    pub runtimes: Vec<RuntimeRecord>,
    pub latent: LatentModel,
}

impl SynthOutput {
    /// Writes `features.csv`, `runtimes.csv`, `iterations.csv` and
    /// `latent.json` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| -> Result<BufWriter<File>, DatasetError> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        write_features_csv(create(FEATURES_FILE)?, &self.features)?;
        write_runtimes_csv(create(RUNTIMES_FILE)?, &self.runtimes)?;
        write_iterations_csv(create(ITERATIONS_FILE)?, &self.runtimes)?;
        let mut latent = create(LATENT_FILE)?;
        latent.write_all(self.latent.to_json().as_bytes())?;
        latent.flush()?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<Dataset, DatasetError> {
        let by_key: BTreeMap<_, _> = self
            .features
            .iter()
            .map(|f| ((f.application.as_str(), f.kernel.as_str(), f.size), f.features))
            .collect();
        let rows = self
            .runtimes
            .iter()
            .map(|r| Sample {
                application: r.application.clone(),
                kernel: r.kernel.clone(),
                size: r.size,
                device: r.device.clone(),
                features: by_key[&(r.application.as_str(), r.kernel.as_str(), r.size)],
                mean_time: r.mean_time,
                iteration_times: r.iteration_times.clone(),
            })
            .collect();
        Dataset::new(rows)
    }
}

fn kernel_names(count: usize) -> Vec<(String, String)> {
    let mut names: Vec<(String, String)> = APPLICATIONS
        .iter()
        .flat_map(|(app, ks)| ks.iter().map(move |k| (app.to_string(), k.to_string())))
        .take(count)
        .collect();
    for i in names.len()..count {
        names.push(("synthetic".to_string(), format!("kernel_{i}")));
    }
    names
}

fn device_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|i| {
            DEVICES
                .get(i)
                .map_or_else(|| format!("device_{i}"), |d| d.to_string())
        })
        .collect()
}

/// Rounds to 9 significant digits, the precision of the features file.
fn q(v: f64) -> f64 {
    format_real(v).parse().expect("formatted real parses")
}

/// Per-kernel latent behaviour.
struct Profile {
    work_items: f64,
    growth: f64,
    per_item: f64,
    per_item_growth: f64,
    opcodes: f64,
    barriers_per_item: f64,
    itb_spread: (f64, f64, f64),
    max_simd: f64,
    simd_mean_frac: f64,
    simd_sd_frac: f64,
    bytes_per_item: f64,
    hot_fraction: f64,
    entropy_frac: f64,
    entropy_drop: f64,
    branch_sites: usize,
    hot_sites: usize,
    yokota: f64,
    linear: f64,
}

impl Profile {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Profile {
        let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| 10f64.powf(rng.gen_range(lo..=hi));
        let branch_sites = [0, 0, 1, 2, 3, 4, 6, 8][rng.gen_range(0..8)];
        Profile {
            work_items: log_uniform(rng, cfg.work_items_log10),
            growth: rng.gen_range(0.5..=1.0),
            per_item: log_uniform(rng, cfg.instructions_per_item_log10),
            per_item_growth: rng.gen_range(0.0..=0.3),
            opcodes: rng.gen_range(2..=12) as f64,
            barriers_per_item: [0.0, 0.0, 0.0, 1.0, 2.0, 4.0, 8.0][rng.gen_range(0..7)],
            itb_spread: (
                rng.gen_range(0.2..0.9),
                rng.gen_range(0.85..1.0),
                rng.gen_range(1.1..3.0),
            ),
            max_simd: [1.0, 2.0, 4.0, 8.0, 16.0][rng.gen_range(0..5)],
            simd_mean_frac: rng.gen_range(0.0..=1.0),
            simd_sd_frac: rng.gen_range(0.0..=0.5),
            bytes_per_item: log_uniform(rng, (0.0, 1.2)),
            hot_fraction: rng.gen_range(0.3..=0.95),
            entropy_frac: rng.gen_range(0.6..=0.97),
            entropy_drop: rng.gen_range(0.2..=1.0),
            branch_sites,
            hot_sites: if branch_sites == 0 {
                0
            } else {
                rng.gen_range(1..=branch_sites)
            },
            yokota: rng.gen_range(0.0..=1.0),
            linear: rng.gen_range(0.0..=1.0),
        }
    }

    fn features(&self, size: Size, rng: &mut ChaCha8Rng) -> FeatureVector {
        let level = size as i32 as f64;
        let work_items = (self.work_items * 4f64.powf(self.growth * level))
            .round()
            .max(1.0);
        let per_item = self.per_item * (1.0 + self.per_item_growth * level);
        let instructions = (work_items * per_item).round().max(work_items);
        let barriers = work_items * self.barriers_per_item;

        let segment = per_item / (self.barriers_per_item + 1.0);
        let (min_itb, median_itb, max_itb) = if self.barriers_per_item == 0.0 {
            let k = per_item.round();
            (k, k, k)
        } else {
            let (lo, mid, hi) = self.itb_spread;
            let min = (segment * lo).floor();
            let max = (segment * hi).ceil();
            let median = ((2.0 * segment * mid).round() / 2.0).clamp(min, max);
            (min, median, max)
        };

        let (mean_simd, sd_simd) = if self.max_simd == 1.0 {
            (1.0, 0.0)
        } else {
            (
                q(1.0 + (self.max_simd - 1.0) * self.simd_mean_frac),
                q((self.max_simd - 1.0) * self.simd_sd_frac),
            )
        };

        let footprint = (work_items * self.bytes_per_item).round().max(1.0);
        let hot = (footprint * self.hot_fraction).ceil().min(footprint);
        let gmae = if footprint > 1.0 {
            q(footprint.log2() * self.entropy_frac)
        } else {
            0.0
        };
        let mut local = [0.0; LOCAL_ENTROPY_LEVELS];
        for (n, slot) in local.iter_mut().enumerate() {
            *slot = q((gmae - (n + 1) as f64 * self.entropy_drop).max(0.0));
        }

        let (sites, hot_sites, yokota, linear) = if self.branch_sites == 0 {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            let wobble = |rng: &mut ChaCha8Rng, v: f64| q((v + rng.gen_range(-0.03..=0.03)).clamp(0.0, 1.0));
            (
                self.branch_sites as f64,
                self.hot_sites as f64,
                wobble(rng, self.yokota),
                wobble(rng, self.linear),
            )
        };

        FeatureVector {
            opcode_diversity_90: self.opcodes,
            total_instruction_count: instructions,
            work_items,
            total_barriers_hit: barriers,
            min_itb,
            max_itb,
            median_itb,
            max_simd_width: self.max_simd,
            mean_simd_width: mean_simd,
            sd_simd_width: sd_simd,
            total_memory_footprint: footprint,
            ninety_memory_footprint: hot,
            global_memory_address_entropy: gmae,
            local_memory_address_entropy: local,
            total_unique_branch_instructions: sites,
            ninety_branch_instructions: hot_sites,
            yokota_branch_entropy: yokota,
            average_linear_branch_entropy: linear,
        }
    }
}

/// Generates feature rows, runtime records and the latent model. Deterministic in `config.seed`.
pub fn synthesize(config: &SynthConfig) -> Result<SynthOutput, DatasetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let kernels = kernel_names(config.kernel_count);
    let devices = device_names(config.device_count);

    let factors: Vec<f64> = if config.device_log10_factors.is_empty() {
        let span = (config.device_count.max(2) - 1) as f64;
        (0..config.device_count)
            .map(|i| q(1.0 - 2.0 * i as f64 / span + rng.gen_range(-0.03..=0.03)))
            .collect()
    } else {
        config.device_log10_factors.clone()
    };
    let latent = LatentModel {
        size_log10_base: Size::ALL
            .iter()
            .map(|s| (s.name().to_string(), 0.05 * *s as i32 as f64))
            .collect(),
        device_log10_factor: devices.iter().cloned().zip(factors).collect(),
        coefficients: COEFFICIENTS,
        noise: config.noise,
        seed: config.seed,
    };

    let mut sizes = config.sizes.clone();
    sizes.sort();
    let measurement = Normal::new(0.0, config.noise).expect("validated noise");
    let jitter = Normal::new(0.0, config.noise / 4.0).expect("validated noise");
    let mut features = Vec::new();
    let mut runtimes = Vec::new();
    for (app, kernel) in &kernels {
        let profile = Profile::draw(config, &mut rng);
        for &size in &sizes {
            let fv = profile.features(size, &mut rng);
            features.push(FeatureRow {
                application: app.clone(),
                kernel: kernel.clone(),
                size,
                features: fv,
            });
            for device in &devices {
                let truth = latent
                    .expected_time(&fv, size, device)
                    .expect("known size and device");
                let times: Vec<f64> = if config.noise == 0.0 {
                    vec![truth; config.iterations]
                } else {
                    let offset = measurement.sample(&mut rng);
                    (0..config.iterations)
                        .map(|_| truth * 10f64.powf(offset + jitter.sample(&mut rng)))
                        .collect()
                };
                runtimes.push(RuntimeRecord::from_times(app, kernel, size, device, times));
            }
        }
    }
    Ok(SynthOutput {
        features,
        runtimes,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kernels: usize, devices: usize, sizes: Vec<Size>) -> SynthConfig {
        SynthConfig {
            kernel_count: kernels,
            device_count: devices,
            sizes,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn catalogue_shape() {
        let n: usize = APPLICATIONS.iter().map(|(_, k)| k.len()).sum();
        assert_eq!(n, 37);
        assert_eq!(APPLICATIONS.len(), 11);
    }

    #[test]
    fn two_kernels_two_devices_tiny() {
        let out = synthesize(&small(2, 2, vec![Size::Tiny])).unwrap();
        assert_eq!(out.features.len(), 2);
        assert_eq!(out.runtimes.len(), 4);
    }

    #[test]
    fn default_config_has_the_bundled_shape() {
        let out = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(out.features.len(), 148);
        let d = out.dataset().unwrap();
        assert_eq!(d.len(), 2220);
        assert_eq!(d.kernels().len(), 37);
        assert_eq!(d.devices().len(), 15);
    }

    #[test]
    fn zero_noise_matches_latent_model_exactly() {
        let cfg = SynthConfig {
            noise: 0.0,
            ..small(5, 4, Size::ALL.to_vec())
        };
        let out = synthesize(&cfg).unwrap();
        let latent = LatentModel::from_json(&out.latent.to_json()).unwrap();
        let d = out.dataset().unwrap();
        for r in d.rows() {
            assert_eq!(
                latent.expected_time(&r.features, r.size, &r.device),
                Some(r.mean_time)
            );
        }
    }

    #[test]
    fn generated_features_satisfy_invariants() {
        let cfg = SynthConfig {
            kernel_count: 250,
            device_count: 1,
            ..SynthConfig::default()
        };
        let out = synthesize(&cfg).unwrap();
        assert_eq!(out.features.len(), 1000);
        for row in &out.features {
            let v = row.features.invariant_violations();
            assert!(
                v.is_empty(),
                "{}/{} {}: {v:?}",
                row.application,
                row.kernel,
                row.size
            );
            // features survive the 9-significant-digit file format unchanged
            for x in row.features.to_array() {
                assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synthesize(&small(3, 3, Size::ALL.to_vec())).unwrap();
        let b = synthesize(&small(3, 3, Size::ALL.to_vec())).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&SynthConfig {
            seed: 1,
            ..small(3, 3, Size::ALL.to_vec())
        })
        .unwrap();
        assert_ne!(a.runtimes, c.runtimes);
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(synthesize(&small(0, 1, vec![Size::Tiny])).is_err());
        assert!(synthesize(&small(1, 1, vec![])).is_err());
        assert!(synthesize(&SynthConfig {
            noise: -1.0,
            ..SynthConfig::default()
        })
        .is_err());
    }
}
