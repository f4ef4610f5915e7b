//! Streaming estimators of the process characteristics, with standard
//! errors taken across independent trajectories so that dependence inside
//! a trajectory is accounted for.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, Error, Result};

use super::clusters::trajectory_clusters;
use super::TrajectoryBatch;

/// Number of equal time bins in the stationarity check.
pub const STATIONARITY_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value - truth| <= k * se`.
    pub fn within(&self, truth: f64, k: f64) -> bool {
        (self.value - truth).abs() <= k * self.se
    }

    /// Distance from `truth` in standard errors.
    pub fn z_score(&self, truth: f64) -> f64 {
        (self.value - truth) / self.se
    }
}

/// Sums for one pair of per-trajectory quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PairSums {
    m: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PairSums {
    fn add(&mut self, x: f64, y: f64) {
        self.m += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn merge(&mut self, o: &PairSums) {
        self.m += o.m;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }

    /// `sum y / sum x` with the delta-method standard error.
    fn ratio(&self) -> Estimate {
        let theta = self.sy / self.sx;
        let resid = self.syy - 2.0 * theta * self.sxy + theta * theta * self.sxx;
        let xbar = self.sx / self.m;
        let se = (resid.max(0.0) / (self.m * (self.m - 1.0))).sqrt() / xbar;
        Estimate { value: theta, se }
    }

    fn mean_x(&self) -> Estimate {
        let mean = self.sx / self.m;
        let var = (self.sxx - self.m * mean * mean) / (self.m - 1.0);
        Estimate {
            value: mean,
            se: (var.max(0.0) / self.m).sqrt(),
        }
    }

    /// `mean(y) - mean(x)^2`.
    fn covariance_form(&self) -> Estimate {
        let m = self.m;
        let (vx, vy) = (self.sx / m, self.sy / m);
        let var_x = (self.sxx - m * vx * vx) / (m - 1.0);
        let var_y = (self.syy - m * vy * vy) / (m - 1.0);
        let cov_xy = (self.sxy - m * vx * vy) / (m - 1.0);
        let var = var_y - 4.0 * vx * cov_xy + 4.0 * vx * vx * var_x;
        Estimate {
            value: vy - vx * vx,
            se: (var.max(0.0) / m).sqrt(),
        }
    }
}

/// Per-trajectory quantities.
#[derive(Debug, Clone)]
struct TrajectoryStats {
    rate: f64,
    pair_rate: f64,
    cluster_mass: f64,
    residual_sum: f64,
    mgf_sums: Vec<f64>,
    returns: f64,
    return_sum: f64,
    bins: Vec<f64>,
}

/// Accumulates estimates over any number of batches of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    n: usize,
    q_gap: usize,
    lambdas: Vec<f64>,
    rate: PairSums,
    residual: PairSums,
    mgf: Vec<PairSums>,
    kac: PairSums,
    bins: Vec<PairSums>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub trajectories: u64,
    /// `P(I_t = 1)`.
    pub p: Estimate,
    /// `E(I_t I_{t+1}) - p^2`.
    pub lag1_covariance: Estimate,
    /// Mean residual cluster size seen from an occurrence.
    pub mu1: Estimate,
    /// `(lambda, M(lambda))` from the same clusters.
    pub mgf: Vec<(f64, Estimate)>,
    /// Mean time from an occurrence to the next one.
    pub mean_return_time: Estimate,
    pub bin_means: Vec<Estimate>,
    pub stationarity_chi2: f64,
    pub stationarity_p_value: f64,
}

impl Diagnostics {
    pub fn new(n: usize, q_gap: usize, lambdas: Vec<f64>) -> Result<Self> {
        if n < 4 * STATIONARITY_BINS || q_gap == 0 {
            return domain(format!(
                "diagnostics: need n >= {} and q_gap >= 1",
                4 * STATIONARITY_BINS
            ));
        }
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return domain("diagnostics: MGF grid points must be finite and >= 0");
        }
        Ok(Self {
            n,
            q_gap,
            mgf: vec![PairSums::default(); lambdas.len()],
            lambdas,
            rate: PairSums::default(),
            residual: PairSums::default(),
            kac: PairSums::default(),
            bins: vec![PairSums::default(); STATIONARITY_BINS],
        })
    }

    fn stats(&self, batch: &TrajectoryBatch, i: usize) -> TrajectoryStats {
        let n = self.n;
        let q = self.q_gap;
        let occurrences: Vec<usize> = batch.occurrences(i).collect();

        let pairs = occurrences.windows(2).filter(|w| w[1] == w[0] + 1).count();

        // clusters chosen by start time, which does not favour long ones
        let window_end = 3 * n / 4;
        let mut cluster_mass = 0.0;
        let mut residual_sum = 0.0;
        let mut mgf_sums = vec![0.0; self.lambdas.len()];
        for c in trajectory_clusters(occurrences.iter().cloned(), q, n) {
            if c.censored() || c.start < q || c.start >= window_end {
                continue;
            }
            let k = c.count as f64;
            cluster_mass += k;
            residual_sum += k * (k - 1.0) / 2.0;
            for (s, &l) in mgf_sums.iter_mut().zip(&self.lambdas) {
                *s += if l == 0.0 {
                    k
                } else {
                    (l * k).exp_m1() / l.exp_m1()
                };
            }
        }

        let half = n / 2;
        let (mut returns, mut return_sum) = (0.0, 0.0);
        for w in occurrences.windows(2) {
            if w[0] >= half {
                break;
            }
            returns += 1.0;
            return_sum += (w[1] - w[0]) as f64;
        }

        let mut bins = vec![0.0; STATIONARITY_BINS];
        let width = n / STATIONARITY_BINS;
        for &t in &occurrences {
            bins[(t / width).min(STATIONARITY_BINS - 1)] += 1.0;
        }
        for (b, v) in bins.iter_mut().enumerate() {
            let len = if b + 1 == STATIONARITY_BINS {
                n - width * (STATIONARITY_BINS - 1)
            } else {
                width
            };
            *v /= len as f64;
        }

        TrajectoryStats {
            rate: occurrences.len() as f64 / n as f64,
            pair_rate: pairs as f64 / (n - 1) as f64,
            cluster_mass,
            residual_sum,
            mgf_sums,
            returns,
            return_sum,
            bins,
        }
    }

    /// Adds every trajectory of `batch`; trajectories are processed in
    /// parallel but folded in index order, so results do not depend on the
    /// thread count.
    pub fn add_batch(&mut self, batch: &TrajectoryBatch) -> Result<()> {
        if batch.n() != self.n {
            return domain(format!(
                "diagnostics: batch length {} differs from {}",
                batch.n(),
                self.n
            ));
        }
        #[cfg(feature = "parallel")]
        let stats: Vec<TrajectoryStats> = {
            use rayon::prelude::*;
            (0..batch.count())
                .into_par_iter()
                .map(|i| self.stats(batch, i))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let stats: Vec<TrajectoryStats> =
            (0..batch.count()).map(|i| self.stats(batch, i)).collect();

        for s in stats {
            self.rate.add(s.rate, s.pair_rate);
            self.residual.add(s.cluster_mass, s.residual_sum);
            for (acc, y) in self.mgf.iter_mut().zip(&s.mgf_sums) {
                acc.add(s.cluster_mass, *y);
            }
            self.kac.add(s.returns, s.return_sum);
            for (acc, b) in self.bins.iter_mut().zip(&s.bins) {
                acc.add(*b, 0.0);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Diagnostics) -> Result<()> {
        if other.n != self.n || other.q_gap != self.q_gap || other.lambdas != self.lambdas {
            return domain("diagnostics: cannot merge accumulators with different settings");
        }
        self.rate.merge(&other.rate);
        self.residual.merge(&other.residual);
        self.kac.merge(&other.kac);
        for (a, b) in self.mgf.iter_mut().zip(&other.mgf) {
            a.merge(b);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn report(&self) -> Result<DiagnosticsReport> {
        if self.rate.m < 2.0 {
            return Err(Error::Estimation(
                "diagnostics: need at least two trajectories".into(),
            ));
        }
        if self.residual.sx == 0.0 || self.kac.sx == 0.0 {
            return Err(Error::Estimation(
                "diagnostics: no complete clusters or returns observed".into(),
            ));
        }
        let bin_means: Vec<Estimate> = self.bins.iter().map(|b| b.mean_x()).collect();
        let weights: Vec<f64> = bin_means.iter().map(|e| 1.0 / (e.se * e.se)).collect();
        let pooled = bin_means
            .iter()
            .zip(&weights)
            .map(|(e, w)| e.value * w)
            .sum::<f64>()
            / weights.iter().sum::<f64>();
        let chi2: f64 = bin_means
            .iter()
            .map(|e| ((e.value - pooled) / e.se).powi(2))
            .sum();
        let dist = ChiSquared::new((STATIONARITY_BINS - 1) as f64)
            .map_err(|e| Error::Numerical(format!("chi-square: {e}")))?;

        Ok(DiagnosticsReport {
            trajectories: self.rate.m as u64,
            p: self.rate.mean_x(),
            lag1_covariance: self.rate.covariance_form(),
            mu1: self.residual.ratio(),
            mgf: self
                .lambdas
                .iter()
                .zip(&self.mgf)
                .map(|(&l, s)| (l, s.ratio()))
                .collect(),
            mean_return_time: self.kac.ratio(),
            bin_means,
            stationarity_chi2: chi2,
            stationarity_p_value: 1.0 - dist.cdf(chi2),
        })
    }
}
