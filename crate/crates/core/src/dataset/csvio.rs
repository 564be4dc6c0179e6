use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use super::{mean, Dataset, DatasetError, RuntimeRecord, Sample, Size};
use crate::characterizer::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};

pub const FEATURE_KEY_COLUMNS: [&str; 3] = ["application", "kernel", "size"];
pub const RUNTIMES_HEADER: [&str; 6] = [
    "application",
    "kernel",
    "size",
    "device",
    "iterations",
    "mean_time_s",
];
/// File names of a dataset directory.
pub const FEATURES_FILE: &str = "features.csv";
pub const RUNTIMES_FILE: &str = "runtimes.csv";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const LATENT_FILE: &str = "latent.json";

pub const ITERATIONS_HEADER: [&str; 6] = ["application", "kernel", "size", "device", "iteration", "time_s"];

/// Integers print exactly; other reals with 9 significant digits.
pub fn format_real(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub features: FeatureVector,
}

type Key = (String, String, Size);

fn key_string(app: &str, kernel: &str, size: Size) -> String {
    format!("({app}, {kernel}, {size})")
}

/// Join diagnostics: keys present in only one of the inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// Feature rows with no runtime measurements.
    pub orphan_features: Vec<String>,
    /// Runtime rows (with device) whose invocation has no feature row.
    pub orphan_runtimes: Vec<String>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.orphan_features.is_empty() && self.orphan_runtimes.is_empty()
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in &self.orphan_features {
            writeln!(f, "warning: feature row {k} has no runtime measurements")?;
        }
        for k in &self.orphan_runtimes {
            writeln!(f, "warning: runtime row {k} has no feature row")?;
        }
        Ok(())
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, file: &str, expected: &[&str]) -> Result<(), DatasetError> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(DatasetError::Header {
            file: file.to_string(),
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn bad(file: &str, rec: &csv::StringRecord, reason: impl Into<String>) -> DatasetError {
    DatasetError::Record {
        file: file.to_string(),
        line: line_of(rec),
        reason: reason.into(),
    }
}

fn parse_key(file: &str, rec: &csv::StringRecord) -> Result<Key, DatasetError> {
    let app = rec.get(0).unwrap_or("");
    let kernel = rec.get(1).unwrap_or("");
    if app.is_empty() || kernel.is_empty() {
        return Err(bad(file, rec, "empty application or kernel"));
    }
    let size: Size = rec
        .get(2)
        .unwrap_or("")
        .parse()
        .map_err(|e: String| bad(file, rec, e))?;
    Ok((app.to_string(), kernel.to_string(), size))
}

fn parse_time(file: &str, rec: &csv::StringRecord, idx: usize) -> Result<f64, DatasetError> {
    let t: f64 = rec
        .get(idx)
        .unwrap_or("")
        .parse()
        .map_err(|_| bad(file, rec, "time is not a number"))?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(bad(file, rec, format!("time {t} must be positive")));
    }
    Ok(t)
}

pub fn feature_header() -> Vec<&'static str> {
    FEATURE_KEY_COLUMNS
        .iter()
        .chain(FEATURE_NAMES.iter())
        .copied()
        .collect()
}

pub fn write_features_csv<W: Write>(w: W, rows: &[FeatureRow]) -> Result<(), DatasetError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(feature_header())?;
    for r in rows {
        let mut rec = vec![r.application.clone(), r.kernel.clone(), r.size.to_string()];
        rec.extend(r.features.to_array().iter().map(|&v| format_real(v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(r: R) -> Result<Vec<FeatureRow>, DatasetError> {
    const FILE: &str = "features";
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, FILE, &feature_header())?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key = parse_key(FILE, &rec)?;
        let values: Vec<f64> = (0..FEATURE_COUNT)
            .map(|i| {
                rec.get(3 + i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(FILE, &rec, format!("bad value for {}", FEATURE_NAMES[i])))
            })
            .collect::<Result<_, _>>()?;
        if !seen.insert(key.clone()) {
            return Err(DatasetError::Duplicate(key_string(&key.0, &key.1, key.2)));
        }
        out.push(FeatureRow {
            application: key.0,
            kernel: key.1,
            size: key.2,
            features: FeatureVector::from_slice(&values).expect("fixed width"),
        });
    }
    Ok(out)
}

pub fn write_runtimes_csv<W: Write>(w: W, records: &[RuntimeRecord]) -> Result<(), DatasetError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUNTIMES_HEADER)?;
    for r in records {
        out.write_record([
            r.application.as_str(),
            r.kernel.as_str(),
            r.size.name(),
            r.device.as_str(),
            &r.iterations.to_string(),
            &r.mean_time.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_iterations_csv<W: Write>(w: W, records: &[RuntimeRecord]) -> Result<(), DatasetError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ITERATIONS_HEADER)?;
    for r in records {
        for (i, t) in r.iteration_times.iter().enumerate() {
            out.write_record([
                r.application.as_str(),
                r.kernel.as_str(),
                r.size.name(),
                r.device.as_str(),
                &i.to_string(),
                &t.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_runtimes_csv<R: Read>(r: R) -> Result<Vec<RuntimeRecord>, DatasetError> {
    const FILE: &str = "runtimes";
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, FILE, &RUNTIMES_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (app, kernel, size) = parse_key(FILE, &rec)?;
        let device = rec.get(3).unwrap_or("").to_string();
        if device.is_empty() {
            return Err(bad(FILE, &rec, "empty device"));
        }
        let iterations: usize = rec
            .get(4)
            .unwrap_or("")
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| bad(FILE, &rec, "iterations must be a positive integer"))?;
        out.push(RuntimeRecord {
            application: app,
            kernel,
            size,
            device,
            iteration_times: Vec::new(),
            iterations,
            mean_time: parse_time(FILE, &rec, 5)?,
        });
    }
    Ok(out)
}

/// Per-iteration times keyed by `(application, kernel, size, device)`, in iteration order.
pub fn read_iterations_csv<R: Read>(
    r: R,
) -> Result<BTreeMap<(String, String, Size, String), Vec<f64>>, DatasetError> {
    const FILE: &str = "iterations";
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, FILE, &ITERATIONS_HEADER)?;
    let mut out: BTreeMap<_, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (app, kernel, size) = parse_key(FILE, &rec)?;
        let device = rec.get(3).unwrap_or("").to_string();
        let idx: usize = rec
            .get(4)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad(FILE, &rec, "bad iteration index"))?;
        let t = parse_time(FILE, &rec, 5)?;
        let times = out.entry((app, kernel, size, device)).or_default();
        if idx != times.len() {
            return Err(bad(
                FILE,
                &rec,
                format!("expected iteration {}, found {idx}", times.len()),
            ));
        }
        times.push(t);
    }
    Ok(out)
}

/// Inner join of feature rows and runtime records on `(application, kernel, size)`.
///
/// Per-iteration times, when given, are attached to their runtime records and
/// must agree with the recorded iteration count and mean.
pub fn load<F: Read, R: Read, I: Read>(
    features: F,
    runtimes: R,
    iterations: Option<I>,
) -> Result<(Dataset, LoadReport), DatasetError> {
    let features = read_features_csv(features)?;
    let mut runtimes = read_runtimes_csv(runtimes)?;
    if let Some(it) = iterations {
        let mut times = read_iterations_csv(it)?;
        for r in &mut runtimes {
            let key = (r.application.clone(), r.kernel.clone(), r.size, r.device.clone());
            if let Some(t) = times.remove(&key) {
                let m = mean(&t);
                if t.len() != r.iterations || (m - r.mean_time).abs() > 1e-12 * r.mean_time {
                    return Err(DatasetError::Config(format!(
                        "iteration times of {} disagree with the runtime summary",
                        key_string(&key.0, &key.1, key.2)
                    )));
                }
                r.iteration_times = t;
            }
        }
    }

    let by_key: BTreeMap<Key, FeatureVector> = features
        .into_iter()
        .map(|f| ((f.application, f.kernel, f.size), f.features))
        .collect();
    let mut used = BTreeSet::new();
    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    for r in runtimes {
        let key = (r.application.clone(), r.kernel.clone(), r.size);
        match by_key.get(&key) {
            Some(fv) => {
                used.insert(key);
                rows.push(Sample {
                    application: r.application,
                    kernel: r.kernel,
                    size: r.size,
                    device: r.device,
                    features: *fv,
                    mean_time: r.mean_time,
                    iteration_times: r.iteration_times,
                });
            }
            None => report.orphan_runtimes.push(format!(
                "({}, {}, {}, {})",
                r.application, r.kernel, r.size, r.device
            )),
        }
    }
    report.orphan_features = by_key
        .keys()
        .filter(|k| !used.contains(*k))
        .map(|k| key_string(&k.0, &k.1, k.2))
        .collect();
    if rows.is_empty() {
        return Err(DatasetError::EmptyJoin);
    }
    Ok((Dataset::new(rows)?, report))
}

pub fn load_files(
    features: &Path,
    runtimes: &Path,
    iterations: Option<&Path>,
) -> Result<(Dataset, LoadReport), DatasetError> {
    let open = |p: &Path| -> Result<std::io::BufReader<std::fs::File>, DatasetError> {
        let f = std::fs::File::open(p)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
        Ok(std::io::BufReader::new(f))
    };
    let it = iterations.map(open).transpose()?;
    load(open(features)?, open(runtimes)?, it)
}

/// Loads `features.csv` and `runtimes.csv` from `dir`, plus
/// `iterations.csv` when present.
pub fn load_dir(dir: &Path) -> Result<(Dataset, LoadReport), DatasetError> {
    let iterations = dir.join(ITERATIONS_FILE);
    load_files(
        &dir.join(FEATURES_FILE),
        &dir.join(RUNTIMES_FILE),
        iterations.exists().then_some(iterations.as_path()),
    )
}
