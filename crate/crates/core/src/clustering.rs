//! Semantic clusters: candidates grouped by identical execution signatures.
//!
//! Equality is componentwise on outcome kinds (canonical output strings,
//! or error types for abnormal cells); wall times are ignored.

use std::collections::HashMap;

use serde::Serialize;

use crate::executor::{ExecutionSignature, OutcomeKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("no signatures to partition")]
    Empty,
    #[error("signature for rank {rank} has {got} outcomes, expected {expected}")]
    LengthMismatch { rank: u32, expected: usize, got: usize },
    #[error("no signature with rank 1")]
    MissingTopRank,
    #[error("rank {0} appears more than once")]
    DuplicateRank(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    /// Candidate ranks, ascending.
    pub members: Vec<u32>,
    pub size: usize,
    /// Total number of candidates K in the partition.
    pub k: usize,
    pub representative_signature: ExecutionSignature,
}

impl Cluster {
    /// `size / K`.
    pub fn probability(&self) -> f64 {
        self.size as f64 / self.k as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub task_id: String,
    /// Sorted by descending size, then ascending smallest member rank.
    pub clusters: Vec<Cluster>,
    /// Index of the cluster containing rank 1.
    pub dominant_index: usize,
}

impl ClusterPartition {
    pub fn k(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.k)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.size).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.clusters.iter().map(Cluster::probability).collect()
    }

    /// Number of shared inputs N.
    pub fn n_inputs(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.representative_signature.len())
    }
}

/// Groups signatures into clusters of identical behaviour.
pub fn partition(signatures: &[ExecutionSignature]) -> Result<ClusterPartition, ClusterError> {
    let first = signatures.first().ok_or(ClusterError::Empty)?;
    let n = first.len();
    let mut groups: HashMap<Vec<&OutcomeKind>, usize> = HashMap::new();
    let mut buckets: Vec<Vec<&ExecutionSignature>> = Vec::new();
    let mut seen_ranks = std::collections::HashSet::new();
    for sig in signatures {
        if sig.len() != n {
            return Err(ClusterError::LengthMismatch {
                rank: sig.rank,
                expected: n,
                got: sig.len(),
            });
        }
        if !seen_ranks.insert(sig.rank) {
            return Err(ClusterError::DuplicateRank(sig.rank));
        }
        let slot = *groups.entry(sig.behaviour()).or_insert_with(|| {
            buckets.push(Vec::new());
            buckets.len() - 1
        });
        buckets[slot].push(sig);
    }
    if !seen_ranks.contains(&1) {
        return Err(ClusterError::MissingTopRank);
    }
    let k = signatures.len();
    let mut clusters: Vec<Cluster> = buckets
        .into_iter()
        .map(|bucket| {
            let mut members: Vec<u32> = bucket.iter().map(|s| s.rank).collect();
            members.sort_unstable();
            let representative = bucket
                .iter()
                .min_by_key(|s| s.rank)
                .expect("bucket is non-empty");
            Cluster {
                size: members.len(),
                members,
                k,
                representative_signature: (*representative).clone(),
            }
        })
        .collect();
    clusters.sort_by(|x, y| y.size.cmp(&x.size).then(x.members[0].cmp(&y.members[0])));
    let dominant_index = clusters
        .iter()
        .position(|c| c.members.first() == Some(&1))
        .expect("rank 1 is present");
    Ok(ClusterPartition {
        task_id: first.task_id.clone(),
        clusters,
        dominant_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{ErrorType, Outcome};
    use proptest::prelude::*;

    fn sig(rank: u32, cells: &[&str]) -> ExecutionSignature {
        ExecutionSignature {
            task_id: "t".into(),
            rank,
            outcomes: cells
                .iter()
                .map(|c| match c.strip_prefix('!') {
                    Some(err) => Outcome::abnormal(ErrorType::RuntimeError(err.into())),
                    None => Outcome::normal(*c),
                })
                .collect(),
        }
    }

    #[test]
    fn all_agree_is_one_cluster() {
        let sigs: Vec<_> = (1..=10).map(|r| sig(r, &["1", "2"])).collect();
        let p = partition(&sigs).unwrap();
        assert_eq!(p.sizes(), vec![10]);
        assert_eq!(p.probabilities(), vec![1.0]);
        assert_eq!(p.dominant_index, 0);
    }

    #[test]
    fn eight_two_split() {
        let sigs: Vec<_> = (1..=10)
            .map(|r| if r <= 8 { sig(r, &["5", "55"]) } else { sig(r, &["5", "!ValueError"]) })
            .collect();
        let p = partition(&sigs).unwrap();
        assert_eq!(p.sizes(), vec![8, 2]);
        assert_eq!(p.clusters[1].members, vec![9, 10]);
        assert_eq!(p.probabilities(), vec![0.8, 0.2]);
        assert_eq!(p.dominant_index, 0);
    }

    #[test]
    fn different_error_types_split() {
        let sigs = vec![sig(1, &["!ValueError"]), sig(2, &["!TypeError"])];
        assert_eq!(partition(&sigs).unwrap().len(), 2);
    }

    #[test]
    fn wall_time_is_ignored() {
        let mut b = sig(2, &["x"]);
        b.outcomes[0].wall_time_ms = 99;
        assert_eq!(partition(&[sig(1, &["x"]), b]).unwrap().len(), 1);
    }

    #[test]
    fn ties_in_size_order_by_smallest_rank() {
        let sigs = vec![sig(3, &["a"]), sig(1, &["b"]), sig(2, &["a"]), sig(4, &["b"])];
        let p = partition(&sigs).unwrap();
        assert_eq!(p.clusters[0].members, vec![1, 4]);
        assert_eq!(p.clusters[1].members, vec![2, 3]);
        assert_eq!(p.dominant_index, 0);
    }

    #[test]
    fn errors() {
        assert_eq!(partition(&[]), Err(ClusterError::Empty));
        assert!(matches!(partition(&[sig(1, &["a"]), sig(2, &["a", "b"])]), Err(ClusterError::LengthMismatch { rank: 2, .. })));
        assert_eq!(partition(&[sig(2, &["a"])]), Err(ClusterError::MissingTopRank));
        assert_eq!(partition(&[sig(1, &["a"]), sig(1, &["a"])]), Err(ClusterError::DuplicateRank(1)));
    }

    proptest! {
        #[test]
        fn relabeling_preserves_sizes(labels in prop::collection::vec(0u8..4, 1..12), shift in 0usize..12) {
            let k = labels.len();
            let sigs: Vec<_> = labels.iter().enumerate().map(|(i, l)| sig(i as u32 + 1, &[&l.to_string()])).collect();
            let p = partition(&sigs).unwrap();
            // Rotate ranks; track where the original rank 1 went.
            let rotated: Vec<_> = sigs.iter().map(|s| {
                let mut s = s.clone();
                s.rank = ((s.rank as usize - 1 + shift) % k) as u32 + 1;
                s
            }).collect();
            let q = partition(&rotated).unwrap();
            let mut a = p.sizes(); a.sort();
            let mut b = q.sizes(); b.sort();
            prop_assert_eq!(a, b);
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), k);
            let new_top = sigs.iter().position(|s| (s.rank as usize - 1 + shift).is_multiple_of(k)).unwrap();
            let label_of_new_top = labels[new_top];
            let expected = labels.iter().filter(|l| **l == label_of_new_top).count();
            prop_assert_eq!(q.clusters[q.dominant_index].size, expected);
        }
    }
}
