//! Graded per-input distance, cluster distances, SDE, DSDE and the
//! exact-match self-consistency entropy.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterPartition;
use crate::executor::{ExecutionSignature, OutcomeKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("weights must lie in [0, 1], got ({a}, {b}, {c})")]
    InvalidWeights { a: f64, b: f64, c: f64 },
    #[error("signatures have {left} and {right} outcomes")]
    LengthMismatch { left: usize, right: usize },
    #[error("distance matrix is {matrix}x{matrix} but there are {clusters} clusters")]
    DimensionMismatch { matrix: usize, clusters: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("dominant index {index} out of range for {clusters} clusters")]
    DominantOutOfRange { index: usize, clusters: usize },
}

/// Disagreement costs for abnormal cells: `a` when exactly one side is
/// abnormal, `b` when both are with different error types, `c` when both
/// are with the same error type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        DistanceWeights { a: 1.0, b: 0.8, c: 0.6 }
    }
}

impl DistanceWeights {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, MetricError> {
        let w = DistanceWeights { a, b, c };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if ok(self.a) && ok(self.b) && ok(self.c) {
            Ok(())
        } else {
            Err(MetricError::InvalidWeights {
                a: self.a,
                b: self.b,
                c: self.c,
            })
        }
    }
}

impl std::str::FromStr for DistanceWeights {
    type Err = String;

    /// Parses `a,b,c`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [a, b, c] = parts[..] else {
            return Err(format!("expected three comma-separated weights, got {}", parts.len()));
        };
        DistanceWeights::new(a, b, c).map_err(|e| e.to_string())
    }
}

/// The five ways two outcomes on one input can relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellRelation {
    EqualNormal,
    UnequalNormal,
    OneAbnormal,
    BothAbnormalDifferent,
    BothAbnormalSame,
}

impl CellRelation {
    pub fn of(o: &OutcomeKind, o_prime: &OutcomeKind) -> Self {
        match (o, o_prime) {
            (OutcomeKind::Normal(x), OutcomeKind::Normal(y)) if x == y => CellRelation::EqualNormal,
            (OutcomeKind::Normal(_), OutcomeKind::Normal(_)) => CellRelation::UnequalNormal,
            (OutcomeKind::Abnormal(e), OutcomeKind::Abnormal(f)) if e == f => CellRelation::BothAbnormalSame,
            (OutcomeKind::Abnormal(_), OutcomeKind::Abnormal(_)) => CellRelation::BothAbnormalDifferent,
            _ => CellRelation::OneAbnormal,
        }
    }

    pub fn cost(self, w: &DistanceWeights) -> f64 {
        match self {
            CellRelation::EqualNormal => 0.0,
            CellRelation::UnequalNormal => 1.0,
            CellRelation::OneAbnormal => w.a,
            CellRelation::BothAbnormalDifferent => w.b,
            CellRelation::BothAbnormalSame => w.c,
        }
    }
}

/// Per-input distance between two outcomes.
pub fn per_input_delta(o: &OutcomeKind, o_prime: &OutcomeKind, w: &DistanceWeights) -> f64 {
    CellRelation::of(o, o_prime).cost(w)
}

/// Counts of each non-zero cell relation between two signatures. The
/// distance under any weights is a linear function of these counts, which
/// lets weight search avoid recomputing cell comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Disagreement {
    pub n: usize,
    pub unequal_normal: usize,
    pub one_abnormal: usize,
    pub both_different: usize,
    pub both_same: usize,
}

impl Disagreement {
    pub fn between(x: &ExecutionSignature, y: &ExecutionSignature) -> Result<Self, MetricError> {
        if x.len() != y.len() {
            return Err(MetricError::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let mut d = Disagreement {
            n: x.len(),
            ..Disagreement::default()
        };
        for (a, b) in x.outcomes.iter().zip(&y.outcomes) {
            match CellRelation::of(&a.kind, &b.kind) {
                CellRelation::EqualNormal => {}
                CellRelation::UnequalNormal => d.unequal_normal += 1,
                CellRelation::OneAbnormal => d.one_abnormal += 1,
                CellRelation::BothAbnormalDifferent => d.both_different += 1,
                CellRelation::BothAbnormalSame => d.both_same += 1,
            }
        }
        Ok(d)
    }

    pub fn distance(&self, w: &DistanceWeights) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let total = self.unequal_normal as f64
            + w.a * self.one_abnormal as f64
            + w.b * self.both_different as f64
            + w.c * self.both_same as f64;
        total / self.n as f64
    }
}

/// Mean per-input distance between two signatures.
pub fn cluster_distance(
    sig_i: &ExecutionSignature,
    sig_j: &ExecutionSignature,
    w: &DistanceWeights,
) -> Result<f64, MetricError> {
    if sig_i.len() != sig_j.len() {
        return Err(MetricError::LengthMismatch {
            left: sig_i.len(),
            right: sig_j.len(),
        });
    }
    if sig_i.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = sig_i
        .outcomes
        .iter()
        .zip(&sig_j.outcomes)
        .map(|(x, y)| per_input_delta(&x.kind, &y.kind, w))
        .sum();
    Ok(total / sig_i.len() as f64)
}

/// Symmetric M x M matrix with zero diagonal and entries in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_entries(rows: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let m = rows.len();
        let mut entries = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(MetricError::InvalidMatrix(format!("row {i} has {} entries, expected {m}", row.len())));
            }
            for (j, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(MetricError::InvalidMatrix(format!("d[{i}][{j}] = {x} outside [0, 1]")));
                }
                if i == j && x != 0.0 {
                    return Err(MetricError::InvalidMatrix(format!("d[{i}][{i}] = {x}, expected 0")));
                }
                if rows[j][i] != x {
                    return Err(MetricError::InvalidMatrix(format!("d[{i}][{j}] != d[{j}][{i}]")));
                }
                entries.push(x);
            }
        }
        Ok(DistanceMatrix { m, entries })
    }

    /// Two clusters at the given distance.
    pub fn pair(d: f64) -> Result<Self, MetricError> {
        Self::from_entries(vec![vec![0.0, d], vec![d, 0.0]])
    }

    /// Distances between cluster representatives.
    pub fn from_partition(partition: &ClusterPartition, w: &DistanceWeights) -> Result<Self, MetricError> {
        let m = partition.len();
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let d = cluster_distance(
                    &partition.clusters[i].representative_signature,
                    &partition.clusters[j].representative_signature,
                    w,
                )?;
                entries[i * m + j] = d;
                entries[j * m + i] = d;
            }
        }
        Ok(DistanceMatrix { m, entries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.m.max(1)).map(<[f64]>::to_vec).collect()
    }
}

fn check_dims(p: &[f64], dmat: &DistanceMatrix) -> Result<(), MetricError> {
    if p.len() != dmat.m {
        return Err(MetricError::DimensionMismatch {
            matrix: dmat.m,
            clusters: p.len(),
        });
    }
    Ok(())
}

/// `Σ_{i<j} p_i p_j d_ij` over explicit cluster probabilities.
pub fn sde_from(p: &[f64], dmat: &DistanceMatrix) -> Result<f64, MetricError> {
    check_dims(p, dmat)?;
    let mut total = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            total += p[i] * p[j] * dmat.get(i, j);
        }
    }
    Ok(total)
}

/// `Σ_{i≠c*} p_i d_{c*,i}` over explicit cluster probabilities.
pub fn dsde_from(p: &[f64], dmat: &DistanceMatrix, dominant: usize) -> Result<f64, MetricError> {
    check_dims(p, dmat)?;
    if dominant >= p.len() {
        return Err(MetricError::DominantOutOfRange {
            index: dominant,
            clusters: p.len(),
        });
    }
    Ok((0..p.len()).filter(|&i| i != dominant).map(|i| p[i] * dmat.get(dominant, i)).sum())
}

pub fn sde(partition: &ClusterPartition, dmat: &DistanceMatrix) -> Result<f64, MetricError> {
    sde_from(&partition.probabilities(), dmat)
}

pub fn dsde(partition: &ClusterPartition, dmat: &DistanceMatrix) -> Result<f64, MetricError> {
    dsde_from(&partition.probabilities(), dmat, partition.dominant_index)
}

/// Shannon entropy in nats; zero-probability terms contribute nothing.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    h.max(0.0)
}

/// Entropy of the exact-match cluster distribution, in nats.
pub fn sc_entropy(partition: &ClusterPartition) -> f64 {
    shannon_entropy(&partition.probabilities())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub sde: f64,
    pub dsde: f64,
    pub sc_entropy: f64,
}

/// All three scores for one partition.
pub fn score(partition: &ClusterPartition, w: &DistanceWeights) -> Result<UncertaintyScores, MetricError> {
    let dmat = DistanceMatrix::from_partition(partition, w)?;
    Ok(UncertaintyScores {
        sde: sde(partition, &dmat)?,
        dsde: dsde(partition, &dmat)?,
        sc_entropy: sc_entropy(partition),
    })
}
