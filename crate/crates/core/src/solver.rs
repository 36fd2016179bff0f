//! LogDet metric learning with per-cycle constraint regeneration.
//!
//! Each cycle rebuilds the similar/dissimilar pair lists under the previous
//! metric, warm-starts from it, and sweeps Bregman projections over the pairs
//! until the dual variables settle. A single projection costs `O(d^2)`: one
//! matrix-vector product plus a symmetric rank-one update.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_pairset, Pair, PairSet, Relation};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{dot, logdet_divergence, MahalanobisMetric};

/// Pairs whose current distance is at or below this are skipped.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;
/// Denominators of the projection must stay above this.
pub const BREAKDOWN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Slack trade-off; larger values hold slacks closer to the thresholds.
    pub gamma: f64,
    /// Number of constraint-regeneration cycles.
    pub cycles: usize,
    pub max_sweeps: usize,
    pub conv_tol: f64,
    pub percentile_low: f64,
    pub percentile_high: f64,
    /// Pair distances sampled for thresholds when `n(n-1)/2` exceeds this.
    pub pair_sample_cap: usize,
    pub seed: u64,
    /// Recompute thresholds under the previous metric every cycle instead of
    /// once from Euclidean distances.
    pub rescale_thresholds: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 1.0,
            cycles: 5,
            max_sweeps: 1000,
            conv_tol: 1e-3,
            percentile_low: 5.0,
            percentile_high: 95.0,
            pair_sample_cap: 10_000,
            seed: 0,
            rescale_thresholds: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(0.0 < self.percentile_low
            && self.percentile_low < self.percentile_high
            && self.percentile_high < 100.0)
        {
            return Err(Error::InvalidConfig(format!(
                "percentiles must satisfy 0 < low < high < 100, got {} and {}",
                self.percentile_low, self.percentile_high
            )));
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("conv_tol must be >= 0, got {}", self.conv_tol)));
        }
        if self.pair_sample_cap == 0 {
            return Err(Error::InvalidConfig("pair_sample_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Distance bounds: similar pairs should fall below `upper`, dissimilar
/// pairs above `lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub upper: f64,
    pub lower: f64,
}

impl Thresholds {
    /// Initial slack of a pair.
    pub fn for_relation(&self, relation: Relation) -> f64 {
        match relation {
            Relation::Similar => self.upper,
            Relation::Dissimilar => self.lower,
        }
    }
}

/// Nearest-rank percentile of an ascending list: the value at 1-based rank
/// `ceil(pct / 100 * len)`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct * n as f64) / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Thresholds from squared Euclidean pair distances.
pub fn compute_thresholds(ds: &Dataset, cfg: &SolverConfig) -> Result<Thresholds> {
    compute_thresholds_under(ds, &MahalanobisMetric::identity(ds.dim()), cfg)
}

/// Thresholds from pair distances under `metric`: `upper` is the low
/// percentile and `lower` the high percentile of all pair distances, or of a
/// seeded sample of `pair_sample_cap` pairs on large inputs.
pub fn compute_thresholds_under(
    ds: &Dataset,
    metric: &MahalanobisMetric,
    cfg: &SolverConfig,
) -> Result<Thresholds> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::DegenerateDataset);
    }
    let total = n * (n - 1) / 2;
    let mut dists = Vec::with_capacity(total.min(cfg.pair_sample_cap));
    if total <= cfg.pair_sample_cap {
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(metric.distance_unchecked(ds.features(i), ds.features(j)));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        while dists.len() < cfg.pair_sample_cap {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                dists.push(metric.distance_unchecked(ds.features(i), ds.features(j)));
            }
        }
    }
    dists.sort_by(f64::total_cmp);
    let mut upper = nearest_rank(&dists, cfg.percentile_low);
    let mut lower = nearest_rank(&dists, cfg.percentile_high);
    if upper <= 0.0 {
        upper = dists
            .iter()
            .copied()
            .find(|&d| d > 0.0)
            .ok_or(Error::DegenerateDataset)?;
        lower = lower.max(upper);
    }
    if upper == lower {
        lower = upper * (1.0 + 1e-6);
    }
    Ok(Thresholds { upper, lower })
}

/// Scratch values of one projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Pair distance before the update.
    pub distance: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Set when the pair's distance was too small to project.
    pub skipped: bool,
}

/// One Bregman projection of `metric` onto the constraint of a pair with
/// difference vector `diff`, updating the pair's slack and multiplier in
/// place.
pub fn bregman_step(
    metric: &mut MahalanobisMetric,
    diff: &[f64],
    relation: Relation,
    slack: &mut f64,
    multiplier: &mut f64,
    gamma: f64,
) -> Result<Projection> {
    if diff.len() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: diff.len(),
        });
    }
    let az = metric.apply(diff);
    let p = dot(diff, &az);
    let delta = relation.sign();
    if !(p > MIN_PAIR_DISTANCE) {
        return Ok(Projection {
            distance: p,
            delta,
            alpha: 0.0,
            beta: 0.0,
            skipped: true,
        });
    }
    let alpha = multiplier.min(0.5 * delta * (1.0 / p - gamma / *slack));
    if alpha == 0.0 {
        return Ok(Projection {
            distance: p,
            delta,
            alpha,
            beta: 0.0,
            skipped: false,
        });
    }
    let da = delta * alpha;
    let denom = 1.0 - da * p;
    if !(denom > BREAKDOWN_FLOOR) {
        return Err(Error::NumericalBreakdown(format!(
            "1 - delta*alpha*p = {denom:e} (p = {p:e}, alpha = {alpha:e})"
        )));
    }
    let slack_denom = gamma + da * *slack;
    if !(slack_denom > BREAKDOWN_FLOOR) {
        return Err(Error::NumericalBreakdown(format!(
            "gamma + delta*alpha*xi = {slack_denom:e} (xi = {:e}, alpha = {alpha:e})",
            *slack
        )));
    }
    let beta = da / denom;
    metric.add_outer(&az, p, beta)?;
    *slack = gamma * *slack / slack_denom;
    *multiplier -= alpha;
    Ok(Projection {
        distance: p,
        delta,
        alpha,
        beta,
        skipped: false,
    })
}

/// A pair together with its dual state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintState {
    pub pair: Pair,
    pub slack: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub metric: MahalanobisMetric,
    /// Metric the cycle started from.
    pub prior: MahalanobisMetric,
    pub thresholds: Thresholds,
    /// Similar block then dissimilar block, in [`PairSet`] order.
    pub constraints: Vec<ConstraintState>,
}

impl SolverState {
    /// Cycle start: metric and prior both equal `metric`, slacks at the
    /// thresholds, multipliers zero.
    pub fn new(metric: MahalanobisMetric, thresholds: Thresholds, pairs: &PairSet) -> Self {
        let constraints = pairs
            .iter()
            .map(|&pair| ConstraintState {
                pair,
                slack: thresholds.for_relation(pair.relation),
                multiplier: 0.0,
            })
            .collect();
        SolverState {
            prior: metric.clone(),
            metric,
            thresholds,
            constraints,
        }
    }

    /// Projects onto constraint `slot`.
    pub fn project_pair(&mut self, ds: &Dataset, slot: usize, gamma: f64) -> Result<Projection> {
        let c = &mut self.constraints[slot];
        let diff = ds.difference(c.pair.i, c.pair.j);
        let proj = bregman_step(
            &mut self.metric,
            &diff,
            c.pair.relation,
            &mut c.slack,
            &mut c.multiplier,
            gamma,
        )
        .map_err(|e| match e {
            Error::NumericalBreakdown(msg) => {
                Error::NumericalBreakdown(format!("pair ({}, {}): {msg}", c.pair.i, c.pair.j))
            }
            other => other,
        })?;
        if proj.skipped {
            log::warn!(
                "skipping pair ({}, {}): distance {:e} is too small to project",
                c.pair.i,
                c.pair.j,
                proj.distance
            );
        }
        Ok(proj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub sweeps: usize,
    /// Last sweep's multiplier change relative to `max(1, sum |lambda|)`.
    pub conv: f64,
    pub skipped: usize,
}

/// Sweeps every constraint in order until the relative multiplier change
/// drops below `conv_tol` or `max_sweeps` is reached.
pub fn inner_solve(state: &mut SolverState, ds: &Dataset, cfg: &SolverConfig) -> Result<Convergence> {
    let mut out = Convergence {
        sweeps: 0,
        conv: 0.0,
        skipped: 0,
    };
    if state.constraints.is_empty() {
        return Ok(out);
    }
    while out.sweeps < cfg.max_sweeps {
        let mut change = 0.0;
        out.skipped = 0;
        for slot in 0..state.constraints.len() {
            let proj = state.project_pair(ds, slot, cfg.gamma)?;
            change += proj.alpha.abs();
            out.skipped += proj.skipped as usize;
        }
        out.sweeps += 1;
        let total: f64 = state.constraints.iter().map(|c| c.multiplier.abs()).sum();
        out.conv = change / total.max(1.0);
        if out.conv < cfg.conv_tol {
            break;
        }
    }
    Ok(out)
}

/// Per-cycle training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub similar: usize,
    pub dissimilar: usize,
    pub sweeps: usize,
    pub conv: f64,
    pub skipped: usize,
    /// LogDet divergence of the cycle's result from its prior.
    pub divergence: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub thresholds: Thresholds,
    pub cycles: Vec<CycleRecord>,
    pub total_ms: f64,
}

impl TrainingLog {
    /// Whitespace-separated table, one row per cycle. Wall time sits in the
    /// last column and the trailing `# total_ms` line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# thresholds upper {} lower {}\ncycle similar dissimilar sweeps conv skipped divergence elapsed_ms\n",
            self.thresholds.upper, self.thresholds.lower
        );
        for c in &self.cycles {
            let div = c.divergence.map_or_else(|| "nan".to_string(), |d| format!("{d:.6e}"));
            let _ = writeln!(
                out,
                "{} {} {} {} {:.6e} {} {} {:.3}",
                c.cycle, c.similar, c.dissimilar, c.sweeps, c.conv, c.skipped, div, c.elapsed_ms
            );
        }
        let _ = writeln!(out, "# total_ms {:.3}", self.total_ms);
        out
    }
}

/// Handed to the observer of [`train_with`] after each cycle.
pub struct CycleEvent<'a> {
    pub pairs: &'a PairSet,
    pub metric: &'a MahalanobisMetric,
    pub record: &'a CycleRecord,
}

/// Learns a metric starting from the identity. Returns the identity when
/// `cfg.cycles == 0`.
pub fn train(ds: &Dataset, cfg: &SolverConfig) -> Result<(MahalanobisMetric, TrainingLog)> {
    train_with(ds, cfg, |_| {})
}

pub fn train_with(
    ds: &Dataset,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&CycleEvent<'_>),
) -> Result<(MahalanobisMetric, TrainingLog)> {
    cfg.validate()?;
    if ds.num_classes() < 2 {
        return Err(Error::SingleClassDataset);
    }
    let started = Instant::now();
    let base = compute_thresholds(ds, cfg)?;
    let mut metric = MahalanobisMetric::identity(ds.dim());
    let mut cycles = Vec::with_capacity(cfg.cycles);
    for k in 1..=cfg.cycles {
        let t0 = Instant::now();
        let pairs = build_pairset(ds, &metric, k)?;
        let thresholds = if cfg.rescale_thresholds && k > 1 {
            compute_thresholds_under(ds, &metric, cfg)?
        } else {
            base
        };
        let mut state = SolverState::new(metric, thresholds, &pairs);
        let conv = inner_solve(&mut state, ds, cfg).map_err(|e| match e {
            Error::NumericalBreakdown(msg) => {
                Error::NumericalBreakdown(format!("cycle {k}: {msg}"))
            }
            other => other,
        })?;
        let SolverState { metric: next, prior, .. } = state;
        let record = CycleRecord {
            cycle: k,
            similar: pairs.similar.len(),
            dissimilar: pairs.dissimilar.len(),
            sweeps: conv.sweeps,
            conv: conv.conv,
            skipped: conv.skipped,
            divergence: logdet_divergence(&next, &prior).ok(),
            elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
        };
        log::debug!(
            "cycle {k}: |S|={} |D|={} sweeps={} conv={:.3e}",
            record.similar,
            record.dissimilar,
            record.sweeps,
            record.conv
        );
        observer(&CycleEvent {
            pairs: &pairs,
            metric: &next,
            record: &record,
        });
        cycles.push(record);
        metric = next;
    }
    let log = TrainingLog {
        thresholds: base,
        cycles,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((metric, log))
}
