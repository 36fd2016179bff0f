//! Per-cycle pair constraints: every sample contributes a pair with its
//! nearest same-class neighbor and one with its nearest other-class
//! neighbor, both under the current metric.

use std::collections::HashSet;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::MahalanobisMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Similar,
    Dissimilar,
}

impl Relation {
    /// `+1` for similar pairs, `-1` for dissimilar ones.
    pub fn sign(self) -> f64 {
        match self {
            Relation::Similar => 1.0,
            Relation::Dissimilar => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub relation: Relation,
}

impl Pair {
    pub fn new(i: usize, j: usize, relation: Relation) -> Self {
        Pair { i, j, relation }
    }

    /// `(min, max)` index key; `(i, j)` and `(j, i)` share it.
    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.relation {
            Relation::Similar => 'S',
            Relation::Dissimilar => 'D',
        };
        write!(f, "{tag} {} {}", self.i, self.j)
    }
}

/// The constraint pairs of one training cycle. Each list is ordered by
/// [`Pair::key`] and holds no two pairs with the same key.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    pub similar: Vec<Pair>,
    pub dissimilar: Vec<Pair>,
    pub cycle: usize,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.similar.len() + self.dissimilar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Similar block followed by the dissimilar block.
    pub fn iter(&self) -> impl Iterator<Item = &Pair> {
        self.similar.iter().chain(&self.dissimilar)
    }

    /// One line per pair, `S i j` or `D i j`, under a `# cycle k` heading.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# cycle {} similar {} dissimilar {}\n",
            self.cycle,
            self.similar.len(),
            self.dissimilar.len()
        );
        for p in self.iter() {
            out.push_str(&p.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbors {
    pub similar: Option<usize>,
    pub dissimilar: Option<usize>,
}

/// Nearest same-class and other-class neighbors of sample `i`. Ties go to
/// the smallest index.
pub fn nearest_neighbors(ds: &Dataset, metric: &MahalanobisMetric, i: usize) -> Neighbors {
    let xi = ds.features(i);
    scan_row(ds, i, |j| metric.distance_unchecked(xi, ds.features(j)))
}

fn scan_row(ds: &Dataset, i: usize, dist: impl Fn(usize) -> f64) -> Neighbors {
    let label = ds.label(i);
    let mut similar: Option<(usize, f64)> = None;
    let mut dissimilar: Option<(usize, f64)> = None;
    for j in 0..ds.len() {
        if j == i {
            continue;
        }
        let d = dist(j);
        let slot = if ds.label(j) == label {
            &mut similar
        } else {
            &mut dissimilar
        };
        // Strict comparison keeps the earliest index on ties.
        if slot.is_none_or(|(_, best)| d < best) {
            *slot = Some((j, d));
        }
    }
    Neighbors {
        similar: similar.map(|s| s.0),
        dissimilar: dissimilar.map(|s| s.0),
    }
}

/// Full `n x n` squared-distance table, row-major. Each unordered pair is
/// evaluated once, so the table is exactly symmetric.
pub fn pairwise_distances(ds: &Dataset, metric: &MahalanobisMetric) -> Vec<f64> {
    let n = ds.len();
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = metric.distance_unchecked(ds.features(i), ds.features(j));
            table[i * n + j] = d;
            table[j * n + i] = d;
        }
    }
    table
}

/// Builds the cycle's similar and dissimilar pair lists under `metric`.
///
/// Pairs are generated in sample order as `(i, neighbor)`; when both
/// `(i, p)` and `(p, i)` come up, the first one is kept.
pub fn build_pairset(ds: &Dataset, metric: &MahalanobisMetric, cycle: usize) -> Result<PairSet> {
    if ds.num_classes() < 2 {
        return Err(Error::SingleClassDataset);
    }
    if metric.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: metric.dim(),
        });
    }
    let n = ds.len();
    let table = pairwise_distances(ds, metric);
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for i in 0..n {
        let nb = scan_row(ds, i, |j| table[i * n + j]);
        match nb.similar {
            Some(p) => similar.push(Pair::new(i, p, Relation::Similar)),
            None => warn!(
                "sample {i} (class {:?}) has no same-class peer; only a dissimilar pair is used",
                ds.label(i)
            ),
        }
        if let Some(q) = nb.dissimilar {
            dissimilar.push(Pair::new(i, q, Relation::Dissimilar));
        }
    }
    Ok(PairSet {
        similar: canonicalize(similar),
        dissimilar: canonicalize(dissimilar),
        cycle,
    })
}

fn canonicalize(pairs: Vec<Pair>) -> Vec<Pair> {
    let mut seen = HashSet::with_capacity(pairs.len());
    let mut kept: Vec<Pair> = pairs.into_iter().filter(|p| seen.insert(p.key())).collect();
    kept.sort_by_key(Pair::key);
    kept
}
