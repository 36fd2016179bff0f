//! k-NN classification under a learned metric and the cross-validated
//! comparison against the Euclidean baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, stratified_kfold, Dataset};
use crate::error::{Error, Result};
use crate::metric::MahalanobisMetric;
use crate::solver::{train, SolverConfig};

/// Row name of the identity-metric baseline in report tables.
pub const BASELINE_NAME: &str = "Euclidean distance";
/// Row name of the learned metric in report tables.
pub const LEARNED_NAME: &str = "Ours";

/// Training indices ordered by `(distance, index)`.
fn ranked(train: &Dataset, metric: &MahalanobisMetric, query: &[f64]) -> Result<Vec<(f64, usize)>> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if query.len() != train.dim() || metric.dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: if query.len() != train.dim() { query.len() } else { metric.dim() },
        });
    }
    let mut order: Vec<(f64, usize)> = (0..train.len())
        .map(|j| (metric.distance_unchecked(query, train.features(j)), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order)
}

/// Majority label among the first `k` ranked neighbors. Vote ties go to the
/// class with the smaller summed neighbor distance, then to the smaller
/// label.
fn vote<'a>(train: &'a Dataset, ranked: &[(f64, usize)], k: usize) -> &'a str {
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &(d, j) in &ranked[..k] {
        let e = tally.entry(train.label(j)).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    let mut best: Option<(&str, usize, f64)> = None;
    for (label, (count, sum)) in tally {
        let better = match best {
            None => true,
            Some((_, bc, bs)) => count > bc || (count == bc && sum < bs),
        };
        if better {
            best = Some((label, count, sum));
        }
    }
    best.expect("k >= 1").0
}

fn check_k(train: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k > train.len() {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={}, got {k}",
            train.len()
        )));
    }
    Ok(())
}

/// Predicts the label of `query` by a `k`-nearest-neighbor vote under
/// `metric`.
pub fn knn_predict(train: &Dataset, metric: &MahalanobisMetric, query: &[f64], k: usize) -> Result<String> {
    check_k(train, k)?;
    let order = ranked(train, metric, query)?;
    Ok(vote(train, &order, k).to_string())
}

/// Accuracy in percent on `test` for every `k` in `ks`.
pub fn evaluate(
    train: &Dataset,
    test: &Dataset,
    metric: &MahalanobisMetric,
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if ks.is_empty() {
        return Err(Error::InvalidConfig("no k values given".into()));
    }
    for &k in ks {
        check_k(train, k)?;
    }
    let mut correct: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for s in test.samples() {
        let order = ranked(train, metric, &s.features)?;
        for (&k, hits) in correct.iter_mut() {
            if vote(train, &order, k) == s.label {
                *hits += 1;
            }
        }
    }
    let n = test.len() as f64;
    Ok(correct
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n * 100.0))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAccuracy {
    pub k: usize,
    /// Mean of the per-fold accuracies, percent.
    pub mean: f64,
    pub per_fold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ks: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    pub standardize: bool,
    pub config: SolverConfig,
    pub learned: Vec<KAccuracy>,
    pub baseline: Vec<KAccuracy>,
    /// Wall time of metric training per fold. Not deterministic.
    pub train_time_ms: Vec<f64>,
}

impl EvaluationReport {
    pub fn learned_at(&self, k: usize) -> Option<&KAccuracy> {
        self.learned.iter().find(|a| a.k == k)
    }

    pub fn baseline_at(&self, k: usize) -> Option<&KAccuracy> {
        self.baseline.iter().find(|a| a.k == k)
    }

    /// Rows are methods, columns are k, entries are mean accuracies with two
    /// decimals. Contains no timing.
    pub fn table(&self) -> String {
        let width = BASELINE_NAME.len().max(LEARNED_NAME.len());
        let mut out = format!("{:width$}", "");
        for k in &self.ks {
            let _ = write!(out, "  {:>7}", format!("k={k}"));
        }
        out.push('\n');
        for (name, rows) in [(BASELINE_NAME, &self.baseline), (LEARNED_NAME, &self.learned)] {
            let _ = write!(out, "{name:width$}");
            for a in rows {
                let _ = write!(out, "  {:>7.2}", a.mean);
            }
            out.push('\n');
        }
        out
    }

    /// Full per-fold data as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn summarize(ks: &[usize], per_fold: &[BTreeMap<usize, f64>]) -> Vec<KAccuracy> {
    ks.iter()
        .map(|&k| {
            let per_fold: Vec<f64> = per_fold.iter().map(|m| m[&k]).collect();
            let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
            KAccuracy { k, mean, per_fold }
        })
        .collect()
}

/// Stratified `folds`-fold cross validation of the learned metric against
/// the Euclidean baseline on identical splits. When `scale` is set, z-score
/// parameters are fitted on each training split and applied to its test
/// split, so test rows never influence training.
pub fn cross_validate(
    ds: &Dataset,
    cfg: &SolverConfig,
    ks: &[usize],
    folds: usize,
    seed: u64,
    scale: bool,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    if ks.is_empty() {
        return Err(Error::InvalidConfig("no k values given".into()));
    }
    let splits = stratified_kfold(ds, folds, seed)?;
    let mut learned = Vec::with_capacity(folds);
    let mut baseline = Vec::with_capacity(folds);
    let mut times = Vec::with_capacity(folds);
    for split in &splits {
        let mut train_ds = ds.subset(&split.train)?;
        let mut test_ds = ds.subset(&split.test)?;
        if scale {
            let (scaled, params) = standardize(&train_ds)?;
            test_ds = params.apply(&test_ds)?;
            train_ds = scaled;
        }
        let t0 = Instant::now();
        let (metric, _) = train(&train_ds, cfg)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        learned.push(evaluate(&train_ds, &test_ds, &metric, ks)?);
        let identity = MahalanobisMetric::identity(ds.dim());
        baseline.push(evaluate(&train_ds, &test_ds, &identity, ks)?);
    }
    let mut ks_sorted = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();
    Ok(EvaluationReport {
        learned: summarize(&ks_sorted, &learned),
        baseline: summarize(&ks_sorted, &baseline),
        ks: ks_sorted,
        folds,
        seed,
        standardize: scale,
        config: cfg.clone(),
        train_time_ms: times,
    })
}
