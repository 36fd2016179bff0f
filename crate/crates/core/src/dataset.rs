//! Labeled feature data: CSV ingestion, z-score scaling, stratified folds and
//! a seeded Gaussian-cluster generator.
//!
//! CSV layout: a header row, one label column (picked by name or 0-based
//! index), every other column a decimal feature value. Comma separated, no
//! quoting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: String,
    /// Position in the owning dataset.
    pub index: usize,
}

/// An immutable, validated collection of samples sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    feature_names: Vec<String>,
    class_table: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from rows and labels. Feature columns are named
    /// `f0..f{d-1}`.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let dim = features.first().map(Vec::len).unwrap_or(0);
        let names = (0..dim).map(|c| format!("f{c}")).collect();
        Self::with_feature_names(features, labels, names)
    }

    pub fn with_feature_names(
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidDimensions("dataset needs at least one sample".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::InvalidDimensions(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::InvalidDimensions("feature dimension must be at least 1".into()));
        }
        let mut class_table: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut samples = Vec::with_capacity(features.len());
        for (index, (row, label)) in features.into_iter().zip(labels).enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericFeature {
                    row: index + 1,
                    column: feature_names[c].clone(),
                    value: row[c].to_string(),
                });
            }
            class_table.entry(label.clone()).or_default().push(index);
            samples.push(Sample {
                features: row,
                label,
                index,
            });
        }
        Ok(Dataset {
            samples,
            dim,
            feature_names,
            class_table,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; a dataset holds at least one sample.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.samples[i].features
    }

    pub fn label(&self, i: usize) -> &str {
        &self.samples[i].label
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Label to member indices, in label order.
    pub fn class_table(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_table
    }

    pub fn num_classes(&self) -> usize {
        self.class_table.len()
    }

    /// A new dataset holding the given rows, re-indexed from 0 in the
    /// given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = indices.iter().map(|&i| self.samples[i].features.clone()).collect();
        let labels = indices.iter().map(|&i| self.samples[i].label.clone()).collect();
        Dataset::with_feature_names(features, labels, self.feature_names.clone())
    }

    /// Returns `x_i - x_j`.
    pub fn difference(&self, i: usize, j: usize) -> Vec<f64> {
        self.features(i)
            .iter()
            .zip(self.features(j))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Writes the dataset in the ingestion format, label first. Values use
    /// the shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "label")?;
        for name in &self.feature_names {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for s in &self.samples {
            write!(out, "{}", s.label)?;
            for v in &s.features {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Header names win over numeric interpretation, so a column literally
    /// named "0" is matched by name.
    fn resolve(&self, headers: &[String]) -> Option<usize> {
        match self {
            LabelColumn::Name(name) => headers.iter().position(|h| h == name),
            LabelColumn::Index(i) => {
                let name = i.to_string();
                headers
                    .iter()
                    .position(|h| *h == name)
                    .or((*i < headers.len()).then_some(*i))
            }
        }
    }
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

impl From<&str> for LabelColumn {
    fn from(s: &str) -> Self {
        s.parse().unwrap()
    }
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRows {
                row: r + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(RawTable { headers, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn parse_features(
    table: &RawTable,
    skip: Option<usize>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let cols: Vec<usize> = (0..table.headers.len()).filter(|&c| Some(c) != skip).collect();
    if cols.is_empty() {
        return Err(Error::InvalidDimensions("no feature columns".into()));
    }
    let names = cols.iter().map(|&c| table.headers[c].clone()).collect();
    let mut out = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let mut values = Vec::with_capacity(cols.len());
        for &c in &cols {
            let v = row[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericFeature {
                    row: r + 1,
                    column: table.headers[c].clone(),
                    value: row[c].clone(),
                })?;
            values.push(v);
        }
        out.push(values);
    }
    Ok((names, out))
}

/// Loads a labeled dataset. Rows keep file order; labels stay strings.
/// Error row numbers count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let label_idx = label_column
        .resolve(&table.headers)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let (names, features) = parse_features(&table, Some(label_idx))?;
    let labels = table.rows.iter().map(|r| r[label_idx].clone()).collect();
    Dataset::with_feature_names(features, labels, names)
}

/// Loads query vectors. When the label column is present it is dropped,
/// otherwise every column is a feature.
pub fn load_queries(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let skip = match label_column {
        LabelColumn::Name(_) => label_column.resolve(&table.headers),
        // A bare index cannot tell a labeled file from an unlabeled one;
        // only drop it when the cell is not numeric.
        LabelColumn::Index(i) => label_column
            .resolve(&table.headers)
            .filter(|_| table.rows[0][*i].parse::<f64>().is_err()),
    };
    Ok(parse_features(&table, skip)?.1)
}

/// Per-column affine transform recorded by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let features = ds
            .samples()
            .iter()
            .map(|s| self.apply_vec(&s.features))
            .collect::<Result<Vec<_>>>()?;
        let labels = ds.samples().iter().map(|s| s.label.clone()).collect();
        Dataset::with_feature_names(features, labels, ds.feature_names().to_vec())
    }
}

/// Z-scores every column with the population standard deviation. Constant
/// columns are centered and keep a recorded stddev of 1.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, ScalingParams)> {
    let n = ds.len() as f64;
    let d = ds.dim();
    let mut mean = vec![0.0; d];
    for s in ds.samples() {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in ds.samples() {
        for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let params = ScalingParams { mean, std };
    let scaled = params.apply(ds)?;
    Ok((scaled, params))
}

/// One cross-validation split; both index lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold assignment: each class's members are shuffled with the
/// seed and dealt round-robin over the folds. The deal continues where the
/// previous class stopped so fold sizes also stay balanced overall.
pub fn stratified_kfold(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("folds must be at least 2, got {folds}")));
    }
    for (label, members) in ds.class_table() {
        if members.len() < folds {
            return Err(Error::ClassTooSmall {
                label: label.clone(),
                members: members.len(),
                folds,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut next = 0usize;
    for members in ds.class_table().values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for idx in shuffled {
            tests[next].push(idx);
            next = (next + 1) % folds;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; ds.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..ds.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

fn class_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..spec.classes)
        .map(|_| {
            let mut m = vec![0.0; spec.dim];
            for v in m.iter_mut().take(spec.informative_dim) {
                let z: f64 = StandardNormal.sample(rng);
                *v = spec.separation * z;
            }
            m
        })
        .collect()
}

/// Parameters of the Gaussian-cluster generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Leading coordinates in which class means differ.
    pub informative_dim: usize,
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

/// Draws `classes` means whose first `informative_dim` coordinates are
/// `separation * N(0, 1)` and whose remaining coordinates are zero, then
/// `per_class` samples around each mean with isotropic noise of scale
/// `noise_scale`. Labels are `c00, c01, ...`, zero-padded so string order
/// matches class order. Rows are grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec {
        classes,
        per_class,
        dim,
        informative_dim,
        separation,
        noise_scale,
        seed,
    } = *spec;
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidDimensions(
            "classes, per_class and dim must be positive".into(),
        ));
    }
    if informative_dim > dim {
        return Err(Error::InvalidDimensions(format!(
            "informative dimension {informative_dim} exceeds dim {dim}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidDimensions(format!("separation must be >= 0, got {separation}")));
    }
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidDimensions(format!("noise scale must be > 0, got {noise_scale}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(spec, &mut rng);

    let width = (classes - 1).to_string().len().max(2);
    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let row = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + noise_scale * z
                })
                .collect();
            features.push(row);
            labels.push(format!("c{c:0width$}"));
        }
    }
    Dataset::new(features, labels)
}
