use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, ExperimentError};
use crate::dataset::format_real;
use crate::dataset::Dataset;
use crate::forest::{Forest, ForestError, ResponseTransform};
use crate::tuner::Triple;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningCurvePoint {
    /// Number of kernels in the training set.
    pub kernel_count: usize,
    /// Pooled over every (sample, held-out row) pair, in response units.
    /// `None` when no kernels remain to test on.
    pub mean_absolute_error: Option<f64>,
    /// Distinct training subsets actually fitted.
    pub samples_used: usize,
}

/// For each `i` in `1..=|kernels|`: shuffle the kernels `samples` times,
/// train on the rows of the first `i`, predict the rest, and pool the absolute
/// errors. Repeated subsets are fitted once, so `samples_used` can fall below
/// `samples` where few distinct subsets exist.
///
/// Only the predictor columns enter the model; identifiers (application,
/// kernel, size) never do.
pub fn learning_curve(
    data: &Dataset,
    samples: usize,
    params: Triple,
    transform: ResponseTransform,
    seed: u64,
) -> Result<Vec<LearningCurvePoint>, ExperimentError> {
    if samples == 0 {
        return Err(ExperimentError::Config(
            "at least one sample per point is required".into(),
        ));
    }
    let kernels = data.kernels();
    let k = kernels.len();
    if k == 0 {
        return Err(ExperimentError::Config("empty dataset".into()));
    }
    let full = data.training_set(transform)?;
    let rows_of: Vec<Vec<usize>> = kernels
        .iter()
        .map(|id| {
            data.rows()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.application == id.application && s.kernel == id.kernel)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    // (kernel_count, sample index, chosen kernels ascending)
    let mut jobs: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for i in 1..k {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, i as u64]));
        let mut order: Vec<usize> = (0..k).collect();
        let mut seen = HashSet::new();
        for _ in 0..samples {
            order.shuffle(&mut rng);
            let mut chosen = order[..i].to_vec();
            chosen.sort_unstable();
            if seen.insert(chosen.clone()) {
                jobs.push((i, seen.len() - 1, chosen));
            }
        }
    }

    let errors: Vec<(usize, f64, usize)> = jobs
        .par_iter()
        .map(|(i, j, chosen)| {
            let mut in_train = vec![false; k];
            chosen.iter().for_each(|&c| in_train[c] = true);
            let train_rows: Vec<usize> = chosen.iter().flat_map(|&c| rows_of[c].iter().copied()).collect();
            let params = params.with_seed(derive_seed(seed, &[1, *i as u64, *j as u64]));
            let forest = Forest::fit(&full.subset(&train_rows), &params)?;
            let mut abs = 0.0;
            let mut count = 0;
            for (_, rows) in rows_of.iter().enumerate().filter(|(c, _)| !in_train[*c]) {
                for &r in rows {
                    abs += (forest.predict_response(full.row(r))? - full.response()[r]).abs();
                    count += 1;
                }
            }
            Ok((*i, abs, count))
        })
        .collect::<Result<_, ForestError>>()?;

    let mut points: Vec<LearningCurvePoint> = (1..=k)
        .map(|i| LearningCurvePoint {
            kernel_count: i,
            mean_absolute_error: None,
            samples_used: 0,
        })
        .collect();
    let mut totals = vec![(0.0, 0usize); k];
    for (i, abs, count) in errors {
        totals[i - 1].0 += abs;
        totals[i - 1].1 += count;
        points[i - 1].samples_used += 1;
    }
    for (p, (abs, count)) in points.iter_mut().zip(totals) {
        if count > 0 {
            p.mean_absolute_error = Some(abs / count as f64);
        }
    }
    Ok(points)
}

/// The error column is named after the response space (`mae_log10` or
/// `mae_raw`); an empty field marks a point with nothing left to test on.
pub fn write_learning_curve_csv<W: Write>(
    w: W,
    points: &[LearningCurvePoint],
    transform: ResponseTransform,
) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    let mae = format!("mae_{}", transform.name());
    out.write_record(["kernel_count", mae.as_str(), "samples_used"])?;
    for p in points {
        out.write_record([
            p.kernel_count.to_string(),
            p.mean_absolute_error.map(format_real).unwrap_or_default(),
            p.samples_used.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Size;
    use crate::dataset::{synthesize, SynthConfig};

    fn data(kernels: usize) -> Dataset {
        let cfg = SynthConfig {
            kernel_count: kernels,
            device_count: 3,
            sizes: vec![Size::Tiny, Size::Small],
            ..SynthConfig::default()
        };
        synthesize(&cfg).unwrap().dataset().unwrap()
    }

    #[test]
    fn five_kernels_give_five_points_with_the_last_empty() {
        let d = data(5);
        let points = learning_curve(&d, 20, Triple::new(20, 5, 3), ResponseTransform::Log10, 9).unwrap();
        assert_eq!(points.len(), 5);
        assert_eq!(
            points.iter().map(|p| p.kernel_count).collect::<Vec<_>>(),
            [1, 2, 3, 4, 5]
        );
        assert!(points[..4]
            .iter()
            .all(|p| p.mean_absolute_error.is_some_and(|e| e >= 0.0)));
        assert_eq!(points[4].mean_absolute_error, None);
        assert_eq!(points[4].samples_used, 0);
        // C(5, i) caps the distinct subsets: 5, 10, 10, 5.
        for (p, cap) in points.iter().zip([5, 10, 10, 5]) {
            assert!(p.samples_used >= 1 && p.samples_used <= cap, "{p:?}");
        }
    }

    #[test]
    fn plentiful_subsets_use_exactly_s_samples() {
        let d = data(9);
        let points = learning_curve(&d, 6, Triple::new(5, 3, 3), ResponseTransform::Log10, 1).unwrap();
        // C(9, 4) = 126 subsets; six shuffles rarely collide, and never exceed s.
        assert!(points.iter().all(|p| p.samples_used <= 6));
        assert!(points[3].samples_used >= 5);
    }

    #[test]
    fn csv_header_names_the_response_space_and_marks_empty_points() {
        let points = [
            LearningCurvePoint {
                kernel_count: 1,
                mean_absolute_error: Some(0.5),
                samples_used: 3,
            },
            LearningCurvePoint {
                kernel_count: 2,
                mean_absolute_error: None,
                samples_used: 0,
            },
        ];
        let mut buf = Vec::new();
        write_learning_curve_csv(&mut buf, &points, ResponseTransform::Log10).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "kernel_count,mae_log10,samples_used\n1,0.5,3\n2,,0\n"
        );
    }

    #[test]
    fn zero_samples_is_rejected() {
        let d = data(3);
        assert!(learning_curve(&d, 0, Triple::new(5, 3, 3), ResponseTransform::Log10, 1).is_err());
    }
}
