//! Supervised classification data turned into bandit environments.
//!
//! A [`SupervisedDataset`] is loaded from CSV, min-max scaled with a
//! [`ScalingTransform`] fitted on the whole file, optionally subsampled, and
//! then replayed by a [`BanditEnv`]: each round shows a context, the learner
//! picks a class as its action, and the reward is 1 for the true class and 0
//! otherwise.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedDataset {
    examples: Vec<Example>,
    classes: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    imputed_cells: usize,
}

impl SupervisedDataset {
    /// Builds a dataset from in-memory examples. Class names default to the
    /// label indices.
    pub fn new(examples: Vec<Example>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {classes}")));
        }
        let dim = examples.first().map_or(0, |e| e.features.len());
        for e in &examples {
            check_dim(dim, e.features.len())?;
            check_finite(&e.features, "features")?;
            if e.label >= classes {
                return Err(Error::InvalidConfig(format!(
                    "label {} out of range for {classes} classes",
                    e.label
                )));
            }
        }
        Ok(SupervisedDataset {
            examples,
            classes,
            feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
            class_names: (0..classes).map(|c| c.to_string()).collect(),
            imputed_cells: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Empty numeric cells that were filled with 0 while loading.
    pub fn imputed_cells(&self) -> usize {
        self.imputed_cells
    }

    fn with_examples(&self, examples: Vec<Example>) -> Self {
        SupervisedDataset {
            examples,
            classes: self.classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            imputed_cells: self.imputed_cells,
        }
    }

    /// Writes the dataset as CSV with a header and the label in the last
    /// column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(|e| io_err(e.into()))?;
        for e in &self.examples {
            let mut row: Vec<String> = e.features.iter().map(|x| x.to_string()).collect();
            row.push(self.class_names[e.label].clone());
            w.write_record(&row).map_err(|e| io_err(e.into()))?;
        }
        w.flush().map_err(io_err)
    }
}

/// Which CSV column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// Zero-based.
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => f.write_str(n),
            LabelColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

enum ColumnKind {
    Numeric,
    /// Observed values in order of first appearance.
    Categorical(Vec<String>),
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok()
}

/// Loads a classification dataset from a comma-separated file.
///
/// Columns whose non-empty cells all parse as numbers are numeric (empty or
/// non-finite cells become 0 and are counted); any other column is one-hot
/// encoded over its observed values. Labels are indexed in order of first
/// appearance.
pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<SupervisedDataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(0, format!("{other:?}")),
        })?;

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cells: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        if has_header && header.is_none() {
            header = Some(cells);
        } else {
            rows.push((line, cells));
        }
    }
    let arity = match (&header, rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some((_, r))) => r.len(),
        (None, None) => 0,
    };
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    for (line, cells) in &rows {
        if cells.len() != arity {
            return Err(parse_err(
                *line,
                format!("expected {arity} fields, found {}", cells.len()),
            ));
        }
    }

    let label_idx = match label {
        LabelColumn::Index(i) if *i < arity => *i,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::UnknownColumn {
                path: path.to_path_buf(),
                column: name.clone(),
            })?,
        LabelColumn::Index(_) => {
            return Err(Error::UnknownColumn {
                path: path.to_path_buf(),
                column: label.to_string(),
            })
        }
    };
    let column_name = |i: usize| header.as_ref().map_or_else(|| format!("c{i}"), |h| h[i].clone());

    let mut kinds = Vec::new();
    let mut feature_names = Vec::new();
    for col in (0..arity).filter(|&c| c != label_idx) {
        let numeric = rows
            .iter()
            .all(|(_, r)| r[col].is_empty() || parse_cell(&r[col]).is_some());
        if numeric {
            feature_names.push(column_name(col));
            kinds.push((col, ColumnKind::Numeric));
        } else {
            let mut values: Vec<String> = Vec::new();
            for (_, r) in &rows {
                if !values.contains(&r[col]) {
                    values.push(r[col].clone());
                }
            }
            for v in &values {
                feature_names.push(format!("{}={v}", column_name(col)));
            }
            kinds.push((col, ColumnKind::Categorical(values)));
        }
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut imputed_cells = 0;
    let mut examples = Vec::with_capacity(rows.len());
    for (_, r) in &rows {
        let mut features = Vec::with_capacity(feature_names.len());
        for (col, kind) in &kinds {
            let cell = &r[*col];
            match kind {
                ColumnKind::Numeric => match parse_cell(cell).filter(|v| v.is_finite()) {
                    Some(v) => features.push(v),
                    None => {
                        imputed_cells += 1;
                        features.push(0.0);
                    }
                },
                ColumnKind::Categorical(values) => {
                    features.extend(values.iter().map(|v| if v == cell { 1.0 } else { 0.0 }))
                }
            }
        }
        let name = &r[label_idx];
        let label = *class_index.entry(name.clone()).or_insert_with(|| {
            class_names.push(name.clone());
            class_names.len() - 1
        });
        examples.push(Example { features, label });
    }
    if imputed_cells > 0 {
        log::warn!("{}: filled {imputed_cells} empty numeric cells with 0", path.display());
    }
    if class_names.len() < 2 {
        return Err(parse_err(0, format!("label column has {} distinct value(s), need 2", class_names.len())));
    }
    Ok(SupervisedDataset {
        examples,
        classes: class_names.len(),
        feature_names,
        class_names,
        imputed_cells,
    })
}

/// Per-feature min-max scaling.
///
/// `x_i` maps to `(x_i - min_i) / (max_i - min_i)`; a constant feature maps
/// to 0. Shifting by the minimum leaves pairwise differences unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTransform {
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl ScalingTransform {
    pub fn fit(ds: &SupervisedDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, found: 0 });
        }
        let d = ds.dim();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for e in ds.examples() {
            for ((lo, hi), &x) in mins.iter_mut().zip(maxs.iter_mut()).zip(&e.features) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
        }
        let ranges = mins.iter().zip(&maxs).map(|(lo, hi)| hi - lo).collect();
        Ok(ScalingTransform { mins, ranges })
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    /// Multiplicative factors `1 / (max - min)`, 0 for constant features.
    pub fn factors(&self) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&r| if r > 0.0 { 1.0 / r } else { 0.0 })
            .collect()
    }

    pub fn apply_row(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mins.iter().zip(&self.ranges))
            .map(|(&x, (&lo, &r))| if r > 0.0 { (x - lo) / r } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, ds: &SupervisedDataset) -> Result<SupervisedDataset> {
        check_dim(self.mins.len(), ds.dim())?;
        let examples = ds
            .examples()
            .iter()
            .map(|e| Example {
                features: self.apply_row(&e.features),
                label: e.label,
            })
            .collect();
        Ok(ds.with_examples(examples))
    }
}

/// A shuffled sample of at most `n` rows without replacement.
pub fn subsample<R: Rng + ?Sized>(ds: &SupervisedDataset, n: usize, rng: &mut R) -> Result<SupervisedDataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("subsample size must be at least 1".into()));
    }
    let mut indices = if ds.len() > n {
        rand::seq::index::sample(rng, ds.len(), n).into_vec()
    } else {
        (0..ds.len()).collect()
    };
    indices.shuffle(rng);
    let examples = indices.into_iter().map(|i| ds.examples[i].clone()).collect();
    Ok(ds.with_examples(examples))
}

/// One interaction: a context and the hidden correct action.
#[derive(Clone, Copy, Debug)]
pub struct Round<'a> {
    pub context: &'a [f64],
    label: usize,
}

impl Round<'_> {
    pub fn reward(&self, action: usize) -> f64 {
        if action == self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Replays a dataset in order as a partial-feedback environment.
#[derive(Clone, Debug)]
pub struct BanditEnv {
    data: SupervisedDataset,
    cursor: usize,
}

impl BanditEnv {
    pub fn new(data: SupervisedDataset) -> Self {
        BanditEnv { data, cursor: 0 }
    }

    pub fn actions(&self) -> usize {
        self.data.classes()
    }

    pub fn context_dim(&self) -> usize {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.cursor
    }

    /// The next round, or `None` once the stream is exhausted.
    pub fn step(&mut self) -> Option<Round<'_>> {
        let e = self.data.examples.get(self.cursor)?;
        self.cursor += 1;
        Some(Round {
            context: &e.features,
            label: e.label,
        })
    }
}

/// Fraction of total variance along the top principal component of the
/// rows, from an exact eigendecomposition of the sample covariance.
pub fn explained_variance_ratio(rows: &[&[f64]]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: rows.len(),
        });
    }
    let d = rows[0].len();
    for r in rows {
        check_dim(d, r.len())?;
    }
    if d == 0 {
        return Ok(0.0);
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let ci = r[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let total = cov.trace();
    if total <= f64::EPSILON * d as f64 {
        log::warn!("zero total variance; reporting 0 explained by the top eigenvector");
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((top / total).clamp(0.0, 1.0))
}

pub fn top_eigen_explained_variance(ds: &SupervisedDataset) -> Result<f64> {
    let rows: Vec<&[f64]> = ds.examples().iter().map(|e| e.features.as_slice()).collect();
    explained_variance_ratio(&rows)
}
