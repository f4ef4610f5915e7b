use std::collections::BTreeMap;

use statrs::function::beta::beta_reg;

use crate::error::{domain, Error, Result};

use super::{ClusterDecomposition, TrajectoryBatch};

/// Confidence level of [`TailEstimate::ci_upper`].
pub const TAIL_CONFIDENCE: f64 = 0.99;

/// `ceil((p + eps) n)`, snapping to the nearest integer when within 1e-9 so
/// that e.g. `(0.1 + 0.05) * 100` gives 15 rather than 16.
pub fn tail_threshold(p: f64, epsilon: f64, n: usize) -> u64 {
    let x = (p + epsilon) * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.ceil().max(0.0) as u64
    }
}

/// One-sided exact binomial upper confidence limit for `hits / count`.
pub fn clopper_pearson_upper(hits: u64, count: u64, level: f64) -> f64 {
    if count == 0 || hits >= count {
        return 1.0;
    }
    if hits == 0 {
        return 1.0 - (1.0 - level).powf(1.0 / count as f64);
    }
    // P(Bin(count, u) <= hits) = 1 - I_u(hits + 1, count - hits)
    let (a, b) = ((hits + 1) as f64, (count - hits) as f64);
    let (mut lo, mut hi) = (hits as f64 / count as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub n: usize,
    pub threshold: u64,
    pub hits: u64,
    pub count: u64,
    pub estimate: f64,
    /// 99% one-sided upper limit.
    pub ci_upper: f64,
}

pub(crate) fn tail_from_counts(
    counts: impl Iterator<Item = u32>,
    n: usize,
    threshold: u64,
) -> TailEstimate {
    let (mut hits, mut count) = (0u64, 0u64);
    for c in counts {
        count += 1;
        hits += u64::from(c as u64 >= threshold);
    }
    TailEstimate {
        n,
        threshold,
        hits,
        count,
        estimate: if count == 0 {
            0.0
        } else {
            hits as f64 / count as f64
        },
        ci_upper: clopper_pearson_upper(hits, count, TAIL_CONFIDENCE),
    }
}

fn check_tail_inputs(p: f64, epsilon: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) || !(epsilon.is_finite() && epsilon > 0.0) {
        return domain(format!(
            "estimate_tail: need 0 < p < 1 and eps > 0 (got p={p}, eps={epsilon})"
        ));
    }
    Ok(())
}

/// Fraction of trajectories with `N_n >= ceil((p + eps) n)`.
pub fn estimate_tail(batch: &TrajectoryBatch, p: f64, epsilon: f64) -> Result<TailEstimate> {
    estimate_tail_at(batch, batch.n(), p, epsilon)
}

/// As [`estimate_tail`] on the first `m <= n` positions of every trajectory.
pub fn estimate_tail_at(
    batch: &TrajectoryBatch,
    m: usize,
    p: f64,
    epsilon: f64,
) -> Result<TailEstimate> {
    check_tail_inputs(p, epsilon)?;
    if m == 0 || m > batch.n() {
        return domain(format!(
            "estimate_tail: prefix {m} outside 1..={}",
            batch.n()
        ));
    }
    let threshold = tail_threshold(p, epsilon, m);
    let counts = (0..batch.count()).map(|i| {
        if m == batch.n() {
            batch.counts()[i]
        } else {
            batch.prefix_count(i, m)
        }
    });
    Ok(tail_from_counts(counts, m, threshold))
}

/// Residual sizes `k-1, ..., 0` of every occurrence in every uncensored
/// cluster of size `k`.
pub fn residual_sizes(decomp: &ClusterDecomposition) -> Vec<u32> {
    decomp
        .uncensored()
        .flat_map(|c| (0..c.count).rev())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiOptions {
    /// Length of the window after the cluster whose count is compared.
    pub horizon: usize,
    /// Conditional observations a `(r, s)` cell needs to enter the sup.
    pub min_cell: u64,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self {
            horizon: 4,
            min_cell: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiGrade {
    /// Relative standard error below 2%.
    Good,
    /// Below 10%.
    Fair,
    Poor,
}

/// Plug-in estimate of the mixing coefficient. Never a rigorous constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEstimate {
    pub value: f64,
    /// Approximate standard error of the ratio in the maximizing cell.
    pub se: f64,
    /// `(r, s)` of the maximizing cell.
    pub cell: (u32, u32),
    pub cells_used: usize,
    pub grade: PsiGrade,
}

/// Sup over `(r, s)` of `P(N_{tau+q+1}^{tau+q+H} = s | I_0 = 1, N_1^tau = r)
/// / P(N over H consecutive positions = s)`, with `H = options.horizon`.
pub fn estimate_psi(
    decomp: &ClusterDecomposition,
    batch: &TrajectoryBatch,
    options: &PsiOptions,
) -> Result<PsiEstimate> {
    let h = options.horizon;
    let q = decomp.q_gap;
    let n = batch.n();
    if h == 0 || h > n {
        return domain(format!("estimate_psi: horizon {h} outside 1..={n}"));
    }
    if decomp.per_trajectory.len() != batch.count() || decomp.n != n {
        return domain("estimate_psi: decomposition does not match the batch");
    }

    let mut conditional: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut unconditional: BTreeMap<u32, u64> = BTreeMap::new();
    for (i, clusters) in decomp.per_trajectory.iter().enumerate() {
        for c in clusters {
            let from = c.end + q + 1;
            if from + h > n {
                continue;
            }
            let s = batch.prefix_count(i, from + h) - batch.prefix_count(i, from);
            for r in 0..c.count {
                *conditional.entry((r, s)).or_default() += 1;
            }
        }
        let mut window = batch.prefix_count(i, h);
        *unconditional.entry(window).or_default() += 1;
        for u in 1..=n - h {
            window = window + u32::from(batch.get(i, u + h - 1)) - u32::from(batch.get(i, u - 1));
            *unconditional.entry(window).or_default() += 1;
        }
    }

    let total_windows: u64 = unconditional.values().sum();
    let mut per_r: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(r, _), &c) in &conditional {
        *per_r.entry(r).or_default() += c;
    }

    let mut best: Option<PsiEstimate> = None;
    let mut used = 0;
    for (&(r, s), &c) in &conditional {
        if c < options.min_cell {
            continue;
        }
        let Some(&u) = unconditional.get(&s) else {
            continue;
        };
        used += 1;
        let cond = c as f64 / per_r[&r] as f64;
        let uncond = u as f64 / total_windows as f64;
        let value = cond / uncond;
        let rel_var = (1.0 - cond) / c as f64 + (1.0 - uncond) / u as f64;
        let se = value * rel_var.sqrt();
        if best.is_none_or(|b| value > b.value) {
            best = Some(PsiEstimate {
                value,
                se,
                cell: (r, s),
                cells_used: 0,
                grade: PsiGrade::Poor,
            });
        }
    }
    let mut est = best.ok_or_else(|| {
        Error::Estimation(format!(
            "estimate_psi: no (r, s) cell reaches {} observations ({} cells, largest {})",
            options.min_cell,
            conditional.len(),
            conditional.values().max().copied().unwrap_or(0)
        ))
    })?;
    est.cells_used = used;
    let rel = est.se / est.value;
    est.grade = if rel < 0.02 {
        PsiGrade::Good
    } else if rel < 0.1 {
        PsiGrade::Fair
    } else {
        PsiGrade::Poor
    };
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::super::{analytic_params, decompose_clusters, simulate, ProcessSpec};
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    #[test]
    fn threshold_snaps_near_integers() {
        assert_eq!(tail_threshold(0.1, 0.05, 100), 15);
        assert_eq!(tail_threshold(0.1, 0.051, 100), 16);
        assert_eq!(tail_threshold(0.7, 0.2, 10), 9);
    }

    #[test]
    fn clopper_pearson_inverts_binomial_cdf() {
        for &(k, n) in &[(1u64, 10u64), (5, 100), (37, 1000), (900, 1000)] {
            let u = clopper_pearson_upper(k, n, 0.99);
            let cdf = Binomial::new(u, n).unwrap().cdf(k);
            assert!((cdf - 0.01).abs() < 1e-9, "k={k} n={n} u={u} cdf={cdf}");
        }
        assert!((clopper_pearson_upper(0, 100, 0.99) - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-15);
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
    }

    #[test]
    fn degenerate_tail_events() {
        let batch =
            TrajectoryBatch::from_sequences(&[vec![true, false], vec![false, false]], 0).unwrap();
        // p + eps > 1: impossible event
        let t = estimate_tail(&batch, 0.5, 0.6).unwrap();
        assert_eq!(t.hits, 0);
        assert_eq!(t.estimate, 0.0);
        // eps = -p: every trajectory qualifies
        let all = tail_from_counts(
            batch.counts().iter().cloned(),
            2,
            tail_threshold(0.5, -0.5, 2),
        );
        assert_eq!(all.estimate, 1.0);
        assert!(estimate_tail(&batch, 0.5, -0.5).is_err());
    }

    #[test]
    fn residual_sizes_of_uncensored_clusters() {
        let batch = TrajectoryBatch::from_sequences(
            &[vec![
                false, true, true, true, false, false, true, false, true,
            ]],
            0,
        )
        .unwrap();
        let d = decompose_clusters(&batch, 1).unwrap();
        assert_eq!(residual_sizes(&d), vec![2, 1, 0, 0]);
    }

    fn sticky(rho: f64) -> ProcessSpec {
        let mut weights = vec![0.1; 10];
        weights[9] = 0.1;
        ProcessSpec::StickyMarkov { weights, rho }
    }

    #[test]
    fn psi_near_one_for_independent_draws() {
        // rho = q_ell makes every row of the transition matrix equal
        let spec = sticky(0.1);
        let batch = simulate(&spec, 2000, 200, 5).unwrap();
        let d = decompose_clusters(&batch, 1).unwrap();
        let est = estimate_psi(&d, &batch, &PsiOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.se + 0.05, "{est:?}");
    }

    #[test]
    fn psi_below_closed_form_for_sticky_chain() {
        let spec = sticky(0.5);
        let psi = analytic_params(&spec).unwrap().psi.unwrap();
        let batch = simulate(&spec, 2000, 200, 6).unwrap();
        let d = decompose_clusters(&batch, 1).unwrap();
        let est = estimate_psi(&d, &batch, &PsiOptions::default()).unwrap();
        assert!(est.value <= psi + 3.0 * est.se, "{est:?} vs {psi}");
    }

    #[test]
    fn psi_without_enough_data_is_an_error() {
        let batch = simulate(&sticky(0.5), 50, 2, 1).unwrap();
        let d = decompose_clusters(&batch, 1).unwrap();
        let err = estimate_psi(&d, &batch, &PsiOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
    }
}
