use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use aiwc::characterizer::{characterize, FeatureVector, FEATURE_NAMES};
use aiwc::dataset::{write_features_csv, FeatureRow};
use aiwc::microkernel::{execute, parse_kernel, read_trace, write_trace, NdRange, Trace};

use crate::{CharacterizeArgs, CliError};

/// Prefix of the embedded metrics line.
pub const EMBED_PREFIX: &str = "# aiwc: v1 ";

pub fn run(args: &CharacterizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (trace, default_name, ndrange, source) = match (&args.kernel, &args.trace) {
        (Some(path), None) => {
            let source =
                std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
            let kernel = parse_kernel(&source).map_err(|e| CliError::from(e).context(path.display()))?;
            let ndrange = match args.local {
                Some(local) => NdRange::new(args.global, local)?,
                None => NdRange::single_group(args.global)?,
            };
            let values: BTreeMap<String, i64> = args.args.iter().cloned().collect();
            let trace = execute(&kernel, &ndrange, &values, args.fuel)?;
            (trace, kernel.name.clone(), Some(ndrange), Some(source))
        }
        (None, Some(path)) => {
            let file = File::open(path).map_err(|e| CliError::from(e).context(path.display()))?;
            let trace =
                read_trace(BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))?;
            let stem = path
                .file_stem()
                .map_or("trace".into(), |s| s.to_string_lossy().into_owned());
            (trace, stem, None, None)
        }
        _ => return Err(CliError::input("give exactly one of a kernel file or --trace")),
    };
    if let Some(path) = &args.save_trace {
        save_trace(&trace, path)?;
    }
    let features = characterize(&trace, args.history)?;

    let row = FeatureRow {
        application: args.application.clone(),
        kernel: args.name.clone().unwrap_or(default_name),
        size: args.size,
        features,
    };
    let mut csv = Vec::new();
    write_features_csv(&mut csv, std::slice::from_ref(&row))?;
    match &args.output {
        Some(path) => append_row(path, &csv)?,
        None => out.write_all(&csv)?,
    }

    if args.embed {
        let (Some(path), Some(source), Some(ndrange)) = (&args.kernel, source, ndrange) else {
            return Err(CliError::input("--embed needs a kernel file"));
        };
        let line = embed_line(&ndrange, &args.args, args.history, &features);
        let updated = with_embedded(&source, &line);
        if updated != source {
            std::fs::write(path, updated).map_err(|e| CliError::from(e).context(path.display()))?;
        }
    }
    Ok(())
}

fn save_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::from(e).context(path.display()))?;
    write_trace(trace, BufWriter::new(file))?;
    Ok(())
}

/// Appends the data line of `csv`; the header goes in only when the file is new or empty.
fn append_row(path: &Path, csv: &[u8]) -> Result<(), CliError> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::from(e).context(path.display()))?;
    let body = if fresh {
        csv
    } else {
        let header_end = csv.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1);
        &csv[header_end..]
    };
    file.write_all(body)?;
    Ok(())
}

/// `# aiwc: v1 {"global":[..],"local":[..],"args":{..},"history":n,"features":{..}}`,
/// features in canonical order.
pub fn embed_line(
    ndrange: &NdRange,
    args: &[(String, i64)],
    history: u32,
    features: &FeatureVector,
) -> String {
    let json = |v: &dyn erased::Json| v.to_json();
    let dims = |d: [u64; 3]| format!("[{},{},{}]", d[0], d[1], d[2]);
    let sorted: BTreeMap<&str, i64> = args.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let args_json: Vec<String> = sorted.iter().map(|(k, v)| format!("{}:{v}", json(k))).collect();
    let features_json: Vec<String> = FEATURE_NAMES
        .iter()
        .zip(features.to_array())
        .map(|(name, v)| format!("{}:{}", json(name), json(&v)))
        .collect();
    format!(
        "{EMBED_PREFIX}{{\"global\":{},\"local\":{},\"args\":{{{}}},\"history\":{history},\"features\":{{{}}}}}",
        dims(ndrange.global()),
        dims(ndrange.local()),
        args_json.join(","),
        features_json.join(",")
    )
}

/// `source` with any previous metrics line removed and `line` placed first.
pub fn with_embedded(source: &str, line: &str) -> String {
    let mut out = String::with_capacity(source.len() + line.len() + 1);
    out.push_str(line);
    out.push('\n');
    for l in source.lines().filter(|l| !l.starts_with(EMBED_PREFIX.trim_end())) {
        out.push_str(l);
        out.push('\n');
    }
    if !source.ends_with('\n') && !source.is_empty() {
        out.pop();
    }
    out
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize + ?Sized> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("plain value serializes")
        }
    }
}
