//! CSV ingestion and atomic output.

use std::path::{Path, PathBuf};

use mide::empirical::{Dataset, WeightedPointCloud};
use mide::Points;

use crate::error::{CliError, CliResult};

/// Tolerance on the total mass of a weighted point cloud.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

fn csv_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(csv_err(path, "missing header"));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        let line = k + 2;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_err(path, format!("line {line}: `{field}` is not a finite number")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(path, "no data rows"));
    }
    Ok(Table { header, rows })
}

/// Number of leading `prefix1, prefix2, ...` columns starting at `from`.
fn numbered_run(header: &[String], from: usize, prefix: &str) -> usize {
    header[from..]
        .iter()
        .enumerate()
        .take_while(|(k, h)| **h == format!("{prefix}{}", k + 1))
        .count()
}

/// Reads a dataset with header `x1,...,xL,y1,...,yK`.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let t = read_table(path)?;
    let l = numbered_run(&t.header, 0, "x");
    let k = numbered_run(&t.header, l, "y");
    if l == 0 || k == 0 || l + k != t.header.len() {
        return Err(csv_err(
            path,
            format!("header must be x1,...,xL,y1,...,yK, found `{}`", t.header.join(",")),
        ));
    }
    let mut x = Vec::with_capacity(t.rows.len() * l);
    let mut y = Vec::with_capacity(t.rows.len() * k);
    for row in &t.rows {
        x.extend_from_slice(&row[..l]);
        y.extend_from_slice(&row[l..]);
    }
    let x = Points::from_flat(l, x).map_err(|e| csv_err(path, e.to_string()))?;
    let y = Points::from_flat(k, y).map_err(|e| csv_err(path, e.to_string()))?;
    Dataset::new(x, y).map_err(|e| csv_err(path, e.to_string()))
}

/// Reads a point cloud. A column named `weight` holds the masses, which must
/// be nonnegative and sum to one; without it the cloud is uniform.
pub fn read_cloud(path: &Path) -> CliResult<WeightedPointCloud> {
    let t = read_table(path)?;
    let weight_col = t.header.iter().position(|h| h == "weight");
    let dim = t.header.len() - usize::from(weight_col.is_some());
    if dim == 0 {
        return Err(csv_err(path, "no coordinate columns"));
    }
    let mut flat = Vec::with_capacity(t.rows.len() * dim);
    let mut weights = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        for (c, v) in row.iter().enumerate() {
            if Some(c) == weight_col {
                weights.push(*v);
            } else {
                flat.push(*v);
            }
        }
    }
    let points = Points::from_flat(dim, flat).map_err(|e| csv_err(path, e.to_string()))?;
    if weight_col.is_none() {
        return WeightedPointCloud::uniform(points).map_err(|e| csv_err(path, e.to_string()));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0) {
        return Err(CliError::config(format!("{}: negative weight {w}", path.display())));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(CliError::config(format!("{}: weights sum to {total}, not 1", path.display())));
    }
    // Absorb the admitted rounding so the library sees an exact unit mass.
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    WeightedPointCloud::new(points, weights).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Collects output files in memory so that nothing is written unless the
/// whole command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        ensure_dir(dir)?;
        self.files
            .into_iter()
            .map(|(name, contents)| {
                let path = dir.join(name);
                mide::report::write_atomic(&path, contents).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(path)
            })
            .collect()
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
