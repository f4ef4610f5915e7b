use crate::error::{domain, Result};

use super::TrajectoryBatch;

/// Occurrences between `start` and `end` (inclusive) with no gap above
/// `q_gap`, isolated by at least `q_gap` non-occurrences on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub start: usize,
    pub end: usize,
    pub count: u32,
    /// Fewer than `q_gap` positions precede `start`, so the cluster may
    /// have begun before the sample.
    pub censored_left: bool,
    /// Fewer than `q_gap` positions follow `end`.
    pub censored_right: bool,
}

impl Cluster {
    pub fn censored(&self) -> bool {
        self.censored_left || self.censored_right
    }

    fn new(start: usize, end: usize, count: u32, q_gap: usize, n: usize) -> Self {
        Self {
            start,
            end,
            count,
            censored_left: start < q_gap,
            censored_right: end + q_gap >= n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDecomposition {
    pub q_gap: usize,
    pub n: usize,
    pub per_trajectory: Vec<Vec<Cluster>>,
}

impl ClusterDecomposition {
    /// Occurrences in all clusters, censored ones included.
    pub fn total_occurrences(&self) -> u64 {
        self.per_trajectory
            .iter()
            .flatten()
            .map(|c| c.count as u64)
            .sum()
    }

    pub fn uncensored(&self) -> impl Iterator<Item = &Cluster> {
        self.per_trajectory
            .iter()
            .flatten()
            .filter(|c| !c.censored())
    }
}

fn check_gap(q_gap: usize) -> Result<()> {
    if q_gap == 0 {
        return domain("q_gap must be >= 1");
    }
    Ok(())
}

/// Splits every trajectory at gaps longer than `q_gap` between consecutive
/// occurrences.
pub fn decompose_clusters(batch: &TrajectoryBatch, q_gap: usize) -> Result<ClusterDecomposition> {
    check_gap(q_gap)?;
    let n = batch.n();
    let per_trajectory = (0..batch.count())
        .map(|i| trajectory_clusters(batch.occurrences(i), q_gap, n))
        .collect();
    Ok(ClusterDecomposition {
        q_gap,
        n,
        per_trajectory,
    })
}

pub(crate) fn trajectory_clusters(
    occurrences: impl Iterator<Item = usize>,
    q_gap: usize,
    n: usize,
) -> Vec<Cluster> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize, u32)> = None;
    for t in occurrences {
        current = match current {
            Some((start, end, count)) if t - end <= q_gap => Some((start, t, count + 1)),
            Some((start, end, count)) => {
                out.push(Cluster::new(start, end, count, q_gap, n));
                Some((t, t, 1))
            }
            None => Some((t, t, 1)),
        };
    }
    if let Some((start, end, count)) = current {
        out.push(Cluster::new(start, end, count, q_gap, n));
    }
    out
}

/// Same partition found by a forward scan that closes the open cluster once
/// `q_gap` consecutive non-occurrences follow it, the stopping rule that
/// defines the end of a cluster.
pub fn decompose_by_zero_runs(
    batch: &TrajectoryBatch,
    q_gap: usize,
) -> Result<ClusterDecomposition> {
    check_gap(q_gap)?;
    let n = batch.n();
    let mut per_trajectory = Vec::with_capacity(batch.count());
    for i in 0..batch.count() {
        let mut clusters = Vec::new();
        let mut open: Option<(usize, usize, u32)> = None;
        let mut zeros = 0;
        for t in 0..n {
            if batch.get(i, t) {
                zeros = 0;
                open = Some(match open {
                    Some((start, _, count)) => (start, t, count + 1),
                    None => (t, t, 1),
                });
            } else {
                zeros += 1;
                if zeros == q_gap {
                    if let Some((start, end, count)) = open.take() {
                        clusters.push(Cluster::new(start, end, count, q_gap, n));
                    }
                }
            }
        }
        if let Some((start, end, count)) = open {
            clusters.push(Cluster::new(start, end, count, q_gap, n));
        }
        per_trajectory.push(clusters);
    }
    Ok(ClusterDecomposition {
        q_gap,
        n,
        per_trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(bits: &[u8]) -> TrajectoryBatch {
        TrajectoryBatch::from_sequences(&[bits.iter().map(|&b| b == 1).collect()], 0).unwrap()
    }

    #[test]
    fn isolated_occurrences_gap_one() {
        let d = decompose_clusters(&batch(&[1, 0, 0, 1]), 1).unwrap();
        let c = &d.per_trajectory[0];
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.count == 1));
        assert!(c[0].censored_left && c[1].censored_right);
    }

    #[test]
    fn gap_of_three_splits_when_q_is_two() {
        // occurrences at 0, 2, 5: 2 - 0 <= 2 joins, 5 - 2 = 3 > 2 splits
        let d = decompose_clusters(&batch(&[1, 0, 1, 0, 0, 1]), 2).unwrap();
        let c = &d.per_trajectory[0];
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].start, c[0].end, c[0].count), (0, 2, 2));
        assert_eq!((c[1].start, c[1].end, c[1].count), (5, 5, 1));
    }

    #[test]
    fn censoring_flags() {
        let d = decompose_clusters(&batch(&[0, 0, 1, 1, 0, 0, 0, 1, 0]), 2).unwrap();
        let c = &d.per_trajectory[0];
        assert_eq!(c.len(), 2);
        assert!(!c[0].censored());
        assert!(c[1].censored_right && !c[1].censored_left);
        assert_eq!(d.uncensored().count(), 1);
    }

    #[test]
    fn zero_run_detector_agrees() {
        let seqs: Vec<Vec<bool>> = (0..40u64)
            .map(|s| {
                (0..97)
                    .map(|t| (s.wrapping_mul(2654435761).wrapping_add(t * 40503) >> 3) % 3 == 0)
                    .collect()
            })
            .collect();
        let b = TrajectoryBatch::from_sequences(&seqs, 0).unwrap();
        for q in 1..=4 {
            assert_eq!(
                decompose_clusters(&b, q).unwrap(),
                decompose_by_zero_runs(&b, q).unwrap()
            );
        }
    }

    #[test]
    fn rejects_zero_gap() {
        assert!(decompose_clusters(&batch(&[1]), 0).is_err());
    }
}
