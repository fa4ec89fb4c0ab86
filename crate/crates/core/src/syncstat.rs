//! Synchronization statistics for common-noise ensembles: mean convergence
//! time, transient 2-D densities, and peak-to-peak response measures.
//!
//! The convergence time of one replication is the first checked instant at
//! which the ensemble's maximum pairwise distance (component-wise max over
//! x1 and x2) drops below epsilon; replications are averaged and clamped at
//! the saturation horizon.

use crate::error::{Error, Result};
use crate::model::{forcing_value, Forcing, ForcingState, OscState, OscillatorParams};
use crate::stochastic::{advance_forcing, member_step, replication_seed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use rayon::prelude::*;

/// The convergence criterion is evaluated every this-many integrator steps
/// (the recorded stride), not at every step: epsilon crossings are not
/// step-sensitive at the default dt.
pub const CHECK_STRIDE: usize = 10;

/// Axis-aligned rectangle of initial conditions in the (x1, x2) plane.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridBounds {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl Default for GridBounds {
    fn default() -> Self {
        Self { x1_min: -10.0, x1_max: 10.0, x2_min: -10.0, x2_max: 10.0 }
    }
}

impl GridBounds {
    pub fn validate(&self) -> Result<()> {
        if self.x1_min < self.x1_max && self.x2_min < self.x2_max {
            Ok(())
        } else {
            Err(Error::GridMismatch("initial-condition bounds must be ordered"))
        }
    }
}

/// Settings of the mean-convergence-time estimator.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MctConfig {
    pub grid_bounds: GridBounds,
    /// Points per axis; the ensemble has grid_m² members.
    pub grid_m: usize,
    /// Number of independent noise replications averaged.
    pub k_reps: usize,
    /// Convergence criterion on the max pairwise distance.
    pub epsilon: f64,
    /// Saturation horizon: T values are clamped here.
    pub t_max: f64,
    pub dt: f64,
}

impl Default for MctConfig {
    fn default() -> Self {
        Self {
            grid_bounds: GridBounds::default(),
            grid_m: 5,
            k_reps: 100,
            epsilon: 1e-5,
            t_max: 3000.0,
            dt: 0.005,
        }
    }
}

impl MctConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid_bounds.validate()?;
        if self.grid_m < 2 {
            return Err(Error::InvalidParameter {
                name: "grid_m",
                value: self.grid_m as f64,
                reason: "need at least a 2x2 grid",
            });
        }
        if self.k_reps < 1 {
            return Err(Error::InvalidParameter {
                name: "K",
                value: 0.0,
                reason: "need at least one replication",
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be > 0",
            });
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_max",
                value: self.t_max,
                reason: "must be positive and finite",
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }

    /// The uniform Cartesian grid of initial conditions.
    pub fn initial_grid(&self) -> Vec<OscState> {
        let b = self.grid_bounds;
        let m = self.grid_m;
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let mut ics = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                ics.push(OscState::new(step(b.x1_min, b.x1_max, i), step(b.x2_min, b.x2_max, j)));
            }
        }
        ics
    }
}

/// Outcome of a mean-convergence-time estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct MctResult {
    /// Average of the per-replication times (excluded replications omitted).
    pub mean_t: f64,
    /// Per-replication convergence times, clamped at t_max, in k order.
    pub times: Vec<f64>,
    /// True iff any replication hit the horizon.
    pub saturated: bool,
    /// Replication indices excluded for numerical divergence.
    pub excluded: Vec<usize>,
}

/// Max pairwise distance of the ensemble in the component-wise max norm,
/// equal to the larger of the two coordinate ranges.
fn ensemble_spread(states: &[OscState]) -> f64 {
    let mut x1_min = f64::INFINITY;
    let mut x1_max = f64::NEG_INFINITY;
    let mut x2_min = f64::INFINITY;
    let mut x2_max = f64::NEG_INFINITY;
    for s in states {
        x1_min = x1_min.min(s.x1);
        x1_max = x1_max.max(s.x1);
        x2_min = x2_min.min(s.x2);
        x2_max = x2_max.max(s.x2);
    }
    (x1_max - x1_min).max(x2_max - x2_min)
}

fn run_replication(
    spec: &Forcing,
    p: &OscillatorParams,
    cfg: &MctConfig,
    seed: u64,
) -> Result<f64> {
    let mut states = cfg.initial_grid();
    if ensemble_spread(&states) < cfg.epsilon {
        return Ok(0.0);
    }
    let mut fs = ForcingState::default();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, cfg.dt.sqrt()).expect("dt validated positive");
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    for i in 0..n_steps {
        let t = i as f64 * cfg.dt;
        let t_next = (i + 1) as f64 * cfg.dt;
        let u = forcing_value(spec, &fs, t);
        let dw = rng.sample(normal);
        for s in states.iter_mut() {
            member_step(s, u, dw, cfg.dt, spec, p);
        }
        advance_forcing(&mut fs, t_next, cfg.dt, dw, spec);
        if (i + 1) % CHECK_STRIDE == 0 || i + 1 == n_steps {
            for s in states.iter() {
                if !(s.x1.is_finite() && s.x2.is_finite())
                    || s.x1.abs() + s.x2.abs() > crate::stochastic::DIVERGENCE_GUARD
                {
                    return Err(Error::Divergence { t: t_next, member: None });
                }
            }
            if ensemble_spread(&states) < cfg.epsilon {
                return Ok(t_next.min(cfg.t_max));
            }
        }
    }
    Ok(cfg.t_max)
}

/// Mean convergence time of common-noise ensembles started from the
/// configured grid: replications use independent noise seeds derived from
/// `seed` and run in parallel; diverged replications are excluded from the
/// mean and reported by index.
pub fn mean_convergence_time(
    spec: &Forcing,
    p: &OscillatorParams,
    cfg: &MctConfig,
    seed: u64,
) -> Result<MctResult> {
    cfg.validate()?;
    p.validate()?;
    spec.validate()?;
    let outcomes: Vec<(usize, Result<f64>)> = (0..cfg.k_reps)
        .into_par_iter()
        .map(|k| (k, run_replication(spec, p, cfg, replication_seed(seed, k as u64))))
        .collect();
    let mut times = Vec::with_capacity(cfg.k_reps);
    let mut excluded = Vec::new();
    let mut first_err = None;
    for (k, outcome) in outcomes {
        match outcome {
            Ok(t) => times.push(t),
            Err(e @ Error::Divergence { .. }) => {
                excluded.push(k);
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if times.is_empty() {
        return Err(first_err.unwrap_or(Error::EmptyInput("no replications ran")));
    }
    let mean_t = times.iter().sum::<f64>() / times.len() as f64;
    let saturated = times.iter().any(|&t| t >= cfg.t_max);
    Ok(MctResult { mean_t, times, saturated, excluded })
}

/// Per-sample synchronization error between two commonly driven paths:
/// e(n) = max(|x1 difference|, |x2 difference|). The time grids must match
/// exactly.
pub fn sync_error_series(
    a: &crate::stochastic::Trajectory,
    b: &crate::stochastic::Trajectory,
) -> Result<Vec<f64>> {
    if a.t != b.t {
        return Err(Error::GridMismatch("trajectories use different time grids"));
    }
    Ok((0..a.len())
        .map(|i| (a.x1[i] - b.x1[i]).abs().max((a.x2[i] - b.x2[i]).abs()))
        .collect())
}

/// 2-D histogram over (x1, x2) with explicit bin edges.
///
/// Bin (i, j) covers [x1_edges[i], x1_edges[i+1]) × [x2_edges[j], x2_edges[j+1]),
/// with the topmost edge inclusive; samples outside the rectangle are tallied
/// in `out_of_range`. `normalization` is the in-range sample count and always
/// equals the sum of `counts`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub x1_edges: Vec<f64>,
    pub x2_edges: Vec<f64>,
    /// Row-major: counts[i * (x2 bins) + j].
    pub counts: Vec<u64>,
    pub normalization: u64,
    pub out_of_range: u64,
}

impl Histogram2D {
    /// Uniform edges: `bins` bins spanning [lo, hi] on both axes.
    pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
    }

    /// The default analysis grid: 100 × 100 bins over [−4, 4]².
    pub fn default_edges() -> (Vec<f64>, Vec<f64>) {
        (Self::uniform_edges(-4.0, 4.0, 100), Self::uniform_edges(-4.0, 4.0, 100))
    }

    pub fn n_bins(&self) -> (usize, usize) {
        (self.x1_edges.len() - 1, self.x2_edges.len() - 1)
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * (self.x2_edges.len() - 1) + j]
    }

    pub fn total_samples(&self) -> u64 {
        self.normalization + self.out_of_range
    }

    /// Total-variation distance between the two empirical distributions on
    /// the shared partition (the out-of-range tally acts as one extra cell).
    /// Lies in [0, 1].
    pub fn tv_distance(&self, other: &Histogram2D) -> Result<f64> {
        if self.x1_edges != other.x1_edges || self.x2_edges != other.x2_edges {
            return Err(Error::GridMismatch("histograms use different bin edges"));
        }
        let (na, nb) = (self.total_samples() as f64, other.total_samples() as f64);
        if na == 0.0 || nb == 0.0 {
            return Err(Error::EmptyInput("histogram holds no samples"));
        }
        let mut acc = 0.0;
        for (&ca, &cb) in self.counts.iter().zip(&other.counts) {
            acc += (ca as f64 / na - cb as f64 / nb).abs();
        }
        acc += (self.out_of_range as f64 / na - other.out_of_range as f64 / nb).abs();
        Ok(0.5 * acc)
    }
}

fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if x < edges[0] || x > edges[last] {
        return None;
    }
    if x == edges[last] {
        return Some(last - 1);
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Bins an ensemble snapshot into a 2-D histogram. Edges must be strictly
/// increasing with at least one bin per axis.
pub fn density_histogram(
    samples: &[OscState],
    x1_edges: &[f64],
    x2_edges: &[f64],
) -> Result<Histogram2D> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("density snapshot holds no samples"));
    }
    for edges in [x1_edges, x2_edges] {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GridMismatch("bin edges must be strictly increasing"));
        }
    }
    let (n1, n2) = (x1_edges.len() - 1, x2_edges.len() - 1);
    let mut counts = vec![0u64; n1 * n2];
    let mut out_of_range = 0u64;
    for s in samples {
        match (bin_index(x1_edges, s.x1), bin_index(x2_edges, s.x2)) {
            (Some(i), Some(j)) => counts[i * n2 + j] += 1,
            _ => out_of_range += 1,
        }
    }
    let normalization = counts.iter().sum();
    Ok(Histogram2D {
        x1_edges: x1_edges.to_vec(),
        x2_edges: x2_edges.to_vec(),
        counts,
        normalization,
        out_of_range,
    })
}

/// Max − min of the series restricted to the trailing time window
/// [t_end − window, t_end].
pub fn peak_to_peak(ts: &[f64], values: &[f64], window: f64) -> Result<f64> {
    if ts.len() != values.len() {
        return Err(Error::GridMismatch("time and value series differ in length"));
    }
    let t_end = match ts.last() {
        Some(&t) => t,
        None => return Err(Error::EmptyInput("peak-to-peak of an empty series")),
    };
    let t_start = t_end - window;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&t, &v) in ts.iter().zip(values) {
        if t >= t_start {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        return Err(Error::EmptyInput("peak-to-peak window contains no samples"));
    }
    Ok(hi - lo)
}
