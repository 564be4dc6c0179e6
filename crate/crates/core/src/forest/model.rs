use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oob::{OobAccumulator, OobStats};
use super::tree::{grow, Prepared, Tree};
use super::{ForestError, ForestParams, Schema, TrainingSet};

pub const MODEL_FORMAT: &str = "aiwc-forest v1";

/// Out-of-bag result as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
enum StoredOob {
    Ok(OobStats),
    Degenerate,
    NoOobRows,
}

impl StoredOob {
    fn from_result(r: Result<OobStats, ForestError>) -> Self {
        match r {
            Ok(s) => StoredOob::Ok(s),
            Err(ForestError::NoOobRows) => StoredOob::NoOobRows,
            Err(_) => StoredOob::Degenerate,
        }
    }
}

/// A trained ensemble. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    format: String,
    schema: Schema,
    params: ForestParams,
    trees: Vec<Tree>,
    /// Sorted bootstrap draws of each tree (repeats included).
    inbag: Vec<Vec<u32>>,
    oob: StoredOob,
}

impl Forest {
    pub fn fit(data: &TrainingSet, params: &ForestParams) -> Result<Forest, ForestError> {
        data.check_fit(params)?;
        let prep = Prepared::new(data);
        let grown: Vec<(Tree, Vec<u32>)> = (0..params.num_trees)
            .into_par_iter()
            .map(|i| grow(&prep, params, i))
            .collect();
        let (trees, inbag): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
        let mut forest = Forest {
            format: MODEL_FORMAT.to_string(),
            schema: data.schema().clone(),
            params: *params,
            trees,
            inbag,
            oob: StoredOob::Degenerate,
        };
        forest.oob = StoredOob::from_result(forest.oob_error(data));
        Ok(forest)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn inbag(&self) -> &[Vec<u32>] {
        &self.inbag
    }

    /// OOB statistics recorded at fit time.
    pub fn oob(&self) -> Result<OobStats, ForestError> {
        match &self.oob {
            StoredOob::Ok(s) => Ok(*s),
            StoredOob::Degenerate => Err(ForestError::DegenerateResponse),
            StoredOob::NoOobRows => Err(ForestError::NoOobRows),
        }
    }

    /// Recomputes OOB statistics from the trees and in-bag lists against `data`,
    /// which must be the training set.
    pub fn oob_error(&self, data: &TrainingSet) -> Result<OobStats, ForestError> {
        self.check_schema(data.schema())?;
        let mut acc = OobAccumulator::new(data.len());
        let mut drawn = vec![false; data.len()];
        for (tree, bag) in self.trees.iter().zip(&self.inbag) {
            drawn.iter_mut().for_each(|d| *d = false);
            for &r in bag {
                let r = r as usize;
                if r >= data.len() {
                    return Err(ForestError::Format(format!(
                        "in-bag row {r} outside the {}-row training set",
                        data.len()
                    )));
                }
                drawn[r] = true;
            }
            for (r, _) in drawn.iter().enumerate().filter(|(_, d)| !**d) {
                acc.add(r, tree.predict(data.row(r)));
            }
        }
        acc.finish(data.response())
    }

    pub fn check_schema(&self, other: &Schema) -> Result<(), ForestError> {
        if other.fingerprint != self.schema.fingerprint {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema.fingerprint.clone(),
                found: other.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Mean leaf value over trees, in response units.
    pub fn predict_response(&self, row: &[f64]) -> Result<f64, ForestError> {
        if row.len() != self.schema.width() {
            return Err(ForestError::SchemaMismatch {
                expected: format!("{} columns", self.schema.width()),
                found: format!("{} columns", row.len()),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Prediction mapped back through the response transform (seconds for log10 models).
    pub fn predict(&self, row: &[f64]) -> Result<f64, ForestError> {
        Ok(self.schema.transform.invert(self.predict_response(row)?))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ForestError> {
        serde_json::to_writer(&mut w, self).map_err(|e| ForestError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Forest, ForestError> {
        let forest: Forest = serde_json::from_reader(r).map_err(|e| ForestError::Format(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Forest, ForestError> {
        let file = std::fs::File::open(path)?;
        Forest::read_from(std::io::BufReader::new(file))
    }

    fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::Format(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unsupported format `{}`", self.format));
        }
        let expected = Schema::fingerprint_of(&self.schema.columns, self.schema.transform);
        if expected != self.schema.fingerprint {
            return bad("schema fingerprint does not match its columns".into());
        }
        if self.trees.is_empty() || self.trees.len() != self.inbag.len() {
            return bad("tree and in-bag counts differ".into());
        }
        let width = self.schema.width();
        for (i, tree) in self.trees.iter().enumerate() {
            if !tree.is_well_formed(width) {
                return bad(format!("tree {i} is malformed"));
            }
        }
        Ok(())
    }
}
