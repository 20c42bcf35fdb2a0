//! Grid search for distance weights that maximize training AUROC of DSDE.
//!
//! Each grid point is an integer triple `(A, B, C)` in `0..=steps`, meaning
//! weights `(A, B, C) / steps`. DSDE scaled by `K * N * steps` is then an
//! integer, so scores are compared as exact rationals and ties between
//! tasks are detected exactly.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{auroc, mann_whitney_twice, StatError};
use crate::clustering::ClusterPartition;
use crate::metrics::{DistanceWeights, Disagreement, MetricError};
use crate::par::Strategy;

/// What weight learning needs from one task: cluster sizes, the dominant
/// cluster and the disagreement counts from it to every other cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskClusterData {
    pub task_id: String,
    pub sizes: Vec<usize>,
    pub dominant_index: usize,
    /// Indexed by cluster; the dominant entry is all zero.
    pub from_dominant: Vec<Disagreement>,
}

impl TaskClusterData {
    pub fn from_partition(partition: &ClusterPartition) -> Result<Self, MetricError> {
        let dom = &partition.clusters[partition.dominant_index].representative_signature;
        let from_dominant = partition
            .clusters
            .iter()
            .map(|c| Disagreement::between(dom, &c.representative_signature))
            .collect::<Result<_, _>>()?;
        Ok(TaskClusterData {
            task_id: partition.task_id.clone(),
            sizes: partition.sizes(),
            dominant_index: partition.dominant_index,
            from_dominant,
        })
    }

    fn k(&self) -> u64 {
        self.sizes.iter().sum::<usize>() as u64
    }

    fn n(&self) -> u64 {
        self.from_dominant.iter().map(|d| d.n).max().unwrap_or(0) as u64
    }

    /// DSDE under real-valued weights.
    pub fn dsde(&self, w: &DistanceWeights) -> f64 {
        let k = self.k() as f64;
        self.sizes
            .iter()
            .zip(&self.from_dominant)
            .enumerate()
            .filter(|(i, _)| *i != self.dominant_index)
            .map(|(_, (&size, d))| size as f64 / k * d.distance(w))
            .sum()
    }

    /// DSDE at an integer grid point, as an exact fraction.
    fn dsde_exact(&self, point: GridPoint, steps: u32) -> Ratio {
        let steps = steps as u64;
        let num = self
            .sizes
            .iter()
            .zip(&self.from_dominant)
            .enumerate()
            .filter(|(i, _)| *i != self.dominant_index)
            .map(|(_, (&size, d))| {
                let cost = steps * d.unequal_normal as u64
                    + point.a as u64 * d.one_abnormal as u64
                    + point.b as u64 * d.both_different as u64
                    + point.c as u64 * d.both_same as u64;
                size as u64 * cost
            })
            .sum();
        Ratio {
            num,
            den: (self.k() * self.n() * steps).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u64,
    den: u64,
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct GridPoint {
    a: u32,
    b: u32,
    c: u32,
}

/// `{0, 1/steps, ..., 1}^3`; `steps = 20` gives the 0.05 lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightGrid {
    pub steps: u32,
}

impl Default for WeightGrid {
    fn default() -> Self {
        WeightGrid { steps: 20 }
    }
}

impl WeightGrid {
    fn size(&self) -> usize {
        (self.steps as usize + 1).pow(3)
    }

    fn point(&self, index: usize) -> GridPoint {
        let s = self.steps as usize + 1;
        GridPoint {
            a: (index / (s * s)) as u32,
            b: (index / s % s) as u32,
            c: (index % s) as u32,
        }
    }

    fn weights(&self, p: GridPoint) -> DistanceWeights {
        let s = self.steps as f64;
        DistanceWeights {
            a: p.a as f64 / s,
            b: p.b as f64 / s,
            c: p.c as f64 / s,
        }
    }

    /// L1 distance to the default weights, in units of 1/(20 * steps) so it
    /// is an exact integer for every grid.
    fn default_distance(&self, p: GridPoint) -> u64 {
        let s = self.steps as i64;
        let d = DistanceWeights::default();
        let target = [(d.a * 20.0).round() as i64, (d.b * 20.0).round() as i64, (d.c * 20.0).round() as i64];
        [p.a, p.b, p.c]
            .iter()
            .zip(target)
            .map(|(&x, t)| (x as i64 * 20 - t * s).unsigned_abs())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedWeights {
    pub weights: DistanceWeights,
    pub train_auroc: f64,
    pub default_train_auroc: f64,
    /// Number of grid points sharing the best training AUROC.
    pub n_maximizers: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeightError {
    #[error("training set is empty")]
    Empty,
    #[error("{0} tasks but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("grid needs at least one step")]
    EmptyGrid,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Exhaustive search over the grid. Ties on training AUROC go to the point
/// closest to the default weights in L1, then to the lexicographically
/// smallest `(a, b, c)`.
pub fn learn_weights(
    train: &[TaskClusterData],
    failure: &[bool],
    grid: WeightGrid,
    strategy: Strategy,
) -> Result<LearnedWeights, WeightError> {
    if train.is_empty() {
        return Err(WeightError::Empty);
    }
    if train.len() != failure.len() {
        return Err(WeightError::LengthMismatch(train.len(), failure.len()));
    }
    if grid.steps == 0 {
        return Err(WeightError::EmptyGrid);
    }
    let scored: Vec<Result<(u64, GridPoint), StatError>> = strategy.map_range(grid.size(), |index| {
        let point = grid.point(index);
        let scores: Vec<Ratio> = train.iter().map(|t| t.dsde_exact(point, grid.steps)).collect();
        mann_whitney_twice(&scores, failure).map(|(u2, _)| (u2, point))
    });
    let scored: Vec<(u64, GridPoint)> = scored.into_iter().collect::<Result<_, _>>()?;
    let best_u2 = scored.iter().map(|(u, _)| *u).max().expect("grid is non-empty");
    let maximizers: Vec<GridPoint> = scored.iter().filter(|(u, _)| *u == best_u2).map(|(_, p)| *p).collect();
    let best = *maximizers
        .iter()
        .min_by_key(|p| (grid.default_distance(**p), **p))
        .expect("at least one maximizer");
    let weights = grid.weights(best);
    Ok(LearnedWeights {
        weights,
        train_auroc: evaluate_weights(train, failure, &weights)?,
        default_train_auroc: evaluate_weights(train, failure, &DistanceWeights::default())?,
        n_maximizers: maximizers.len(),
    })
}

/// AUROC of DSDE under the given weights.
pub fn evaluate_weights(data: &[TaskClusterData], failure: &[bool], w: &DistanceWeights) -> Result<f64, StatError> {
    let scores: Vec<f64> = data.iter().map(|t| t.dsde(w)).collect();
    auroc(&scores, failure)
}

/// Deterministic split of `0..n` into train and test index sets, with
/// `train_fraction` of the items (rounded) going to train.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize).min(n);
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(one_abnormal: usize, unequal: usize, n: usize) -> TaskClusterData {
        TaskClusterData {
            task_id: "t".into(),
            sizes: vec![6, 4],
            dominant_index: 0,
            from_dominant: vec![
                Disagreement {
                    n,
                    ..Disagreement::default()
                },
                Disagreement {
                    n,
                    unequal_normal: unequal,
                    one_abnormal,
                    ..Disagreement::default()
                },
            ],
        }
    }

    #[test]
    fn exact_and_float_dsde_agree() {
        let t = TaskClusterData {
            from_dominant: vec![
                Disagreement { n: 10, ..Default::default() },
                Disagreement {
                    n: 10,
                    unequal_normal: 1,
                    one_abnormal: 2,
                    both_different: 3,
                    both_same: 4,
                },
            ],
            ..task(0, 0, 10)
        };
        let grid = WeightGrid::default();
        for index in [0, 17, 4000, grid.size() - 1] {
            let p = grid.point(index);
            let r = t.dsde_exact(p, grid.steps);
            assert!((r.num as f64 / r.den as f64 - t.dsde(&grid.weights(p))).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_free_fixture_returns_default() {
        let data = vec![task(0, 1, 10), task(0, 5, 10), task(0, 0, 10), task(0, 2, 10)];
        let labels = [false, true, false, true];
        let learned = learn_weights(&data, &labels, WeightGrid::default(), Strategy::default()).unwrap();
        assert_eq!(learned.weights, DistanceWeights::default());
        assert_eq!(learned.n_maximizers, 21 * 21 * 21);
    }

    #[test]
    fn ratio_order_is_exact() {
        let third = Ratio { num: 1, den: 3 };
        assert_eq!(third, Ratio { num: 2, den: 6 });
        assert!(third < Ratio { num: 34, den: 100 });
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (train, test) = train_test_split(10, 0.8, 4);
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(train_test_split(10, 0.8, 4), (train.clone(), test.clone()));
        assert!(test.iter().all(|i| !train.contains(i)));
    }
}
