//! Models of the residual cluster size MGF `M(l) = E(e^{l N} | I_0 = 1)`.
//!
//! `N` is the number of further occurrences in the cluster that contains an
//! occurrence at time zero. Every model evaluates `M`, the cancellation-free
//! differences `M - 1` and `M - 1 - l mu1`, and knows where `M` blows up.

use std::io::BufRead;
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::params::theta_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgfKind {
    Geometric,
    Smith,
    Empirical,
    Degenerate,
}

/// Observed residual cluster sizes, kept raw so `M` can be evaluated at any
/// `l` later. Memory is four bytes per recorded occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMgf {
    samples: Vec<u32>,
    mean: f64,
    second_moment: f64,
}

impl EmpiricalMgf {
    pub fn new(samples: Vec<u32>) -> Result<Self> {
        if samples.is_empty() {
            return domain("empirical MGF needs at least one residual size");
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|&r| r as f64).sum::<f64>() / n;
        let second_moment = samples.iter().map(|&r| (r as f64).powi(2)).sum::<f64>() / n;
        Ok(Self {
            samples,
            mean,
            second_moment,
        })
    }

    pub fn samples(&self) -> &[u32] {
        &self.samples
    }

    fn average(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.samples.iter().map(|&r| f(r as f64)).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MgfModel {
    /// `P(N = k) = (1 - rho) rho^k`.
    Geometric {
        rho: f64,
    },
    /// Residual block size of the generalized Smith model observed at symbol `b`.
    Smith {
        b: u32,
    },
    Empirical(EmpiricalMgf),
    /// `N = 0` almost surely.
    Degenerate,
}

impl MgfModel {
    pub fn geometric(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
            return domain(format!("geometric model needs rho in (0, 1), got {rho}"));
        }
        Ok(MgfModel::Geometric { rho })
    }

    pub fn smith(b: u32) -> Result<Self> {
        if b < 2 {
            return domain(format!("smith model needs b >= 2, got {b}"));
        }
        Ok(MgfModel::Smith { b })
    }

    pub fn empirical(samples: Vec<u32>) -> Result<Self> {
        Ok(MgfModel::Empirical(EmpiricalMgf::new(samples)?))
    }

    /// Reads one non-negative integer per line; blank lines are skipped.
    pub fn empirical_from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::empirical(read_residual_sizes(std::io::BufReader::new(file))?)
    }

    pub fn kind(&self) -> MgfKind {
        match self {
            MgfModel::Geometric { .. } => MgfKind::Geometric,
            MgfModel::Smith { .. } => MgfKind::Smith,
            MgfModel::Empirical(_) => MgfKind::Empirical,
            MgfModel::Degenerate => MgfKind::Degenerate,
        }
    }

    /// Mean residual cluster size `E(N | I_0 = 1)`.
    pub fn mu1(&self) -> f64 {
        match self {
            MgfModel::Geometric { rho } => rho / (1.0 - rho),
            MgfModel::Smith { .. } => 0.5,
            MgfModel::Empirical(e) => e.mean,
            MgfModel::Degenerate => 0.0,
        }
    }

    /// `E(N^2 | I_0 = 1)`.
    pub fn second_moment(&self) -> f64 {
        match self {
            MgfModel::Geometric { rho } => rho * (1.0 + rho) / ((1.0 - rho) * (1.0 - rho)),
            MgfModel::Smith { b } => (2.0 * *b as f64 + 1.0) / 6.0,
            MgfModel::Empirical(e) => e.second_moment,
            MgfModel::Degenerate => 0.0,
        }
    }

    /// Abscissa of convergence of `M`; `f64::INFINITY` for entire models.
    pub fn lambda_singularity(&self) -> f64 {
        match self {
            MgfModel::Geometric { rho } => -rho.ln(),
            _ => f64::INFINITY,
        }
    }

    fn check(&self, lambda: f64) -> Result<()> {
        if !lambda.is_finite() {
            return domain(format!("MGF argument must be finite, got {lambda}"));
        }
        let lambda_s = self.lambda_singularity();
        if lambda >= lambda_s {
            return Err(Error::Singularity { lambda, lambda_s });
        }
        Ok(())
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        Ok(match self {
            MgfModel::Geometric { rho } => geometric_value(*rho, lambda),
            MgfModel::Smith { b } => smith_value(*b, lambda),
            MgfModel::Empirical(e) => e.average(|r| (lambda * r).exp()),
            MgfModel::Degenerate => 1.0,
        })
    }

    /// `M(l) - 1` without subtracting two nearly equal numbers.
    pub fn mgf_minus_one(&self, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        Ok(match self {
            MgfModel::Geometric { rho } => {
                rho * lambda.exp_m1() / geometric_denominator(*rho, lambda)
            }
            MgfModel::Smith { b } => {
                let sum: f64 = (1..=*b).map(|k| (lambda * k as f64).exp_m1()).sum();
                sum / (*b as f64 * (*b as f64 + 1.0))
            }
            MgfModel::Empirical(e) => e.average(|r| (lambda * r).exp_m1()),
            MgfModel::Degenerate => 0.0,
        })
    }

    /// `M(l) - 1 - l mu1`, the second-order remainder of `M` at zero.
    pub fn remainder(&self, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        // (e^x - 1 - x) = x^2 theta(x) term by term keeps every summand exact in sign
        let second_order = |x: f64| x * x * theta_unchecked(x);
        Ok(match self {
            MgfModel::Geometric { rho } => {
                let rho = *rho;
                let u = lambda.exp_m1();
                rho * ((1.0 - rho) * second_order(lambda) + lambda * rho * u)
                    / ((1.0 - rho) * geometric_denominator(rho, lambda))
            }
            MgfModel::Smith { b } => {
                let sum: f64 = (1..=*b).map(|k| second_order(lambda * k as f64)).sum();
                sum / (*b as f64 * (*b as f64 + 1.0))
            }
            MgfModel::Empirical(e) => e.average(|r| second_order(lambda * r)),
            MgfModel::Degenerate => 0.0,
        })
    }
}

/// `1 - rho e^l`, accurate near the singularity.
fn geometric_denominator(rho: f64, lambda: f64) -> f64 {
    -(lambda + rho.ln()).exp_m1()
}

fn geometric_value(rho: f64, lambda: f64) -> f64 {
    (1.0 - rho) / geometric_denominator(rho, lambda)
}

fn smith_value(b: u32, lambda: f64) -> f64 {
    let b = b as f64;
    let ratio = if lambda == 0.0 {
        b + 1.0
    } else {
        (lambda * (b + 1.0)).exp_m1() / lambda.exp_m1()
    };
    (b - 1.0) / b + ratio / (b * (b + 1.0))
}

/// `(1 - rho) / (1 - rho e^l)`; singular at `l = -ln rho`.
pub fn mgf_geometric(rho: f64, lambda: f64) -> Result<f64> {
    MgfModel::geometric(rho)?.eval(lambda)
}

/// `(b-1)/b + (e^{l(b+1)} - 1) / (e^l - 1) / (b(b+1))`, equal to 1 at `l = 0`.
pub fn mgf_smith(b: u32, lambda: f64) -> Result<f64> {
    MgfModel::smith(b)?.eval(lambda)
}

/// Plug-in estimate: the sample mean of `e^{l r}`.
pub fn mgf_empirical(samples: &[u32], lambda: f64) -> Result<f64> {
    if samples.is_empty() {
        return domain("empirical MGF needs at least one residual size");
    }
    if !lambda.is_finite() {
        return domain(format!("MGF argument must be finite, got {lambda}"));
    }
    Ok(samples
        .iter()
        .map(|&r| (lambda * r as f64).exp())
        .sum::<f64>()
        / samples.len() as f64)
}

pub fn read_residual_sizes(reader: impl BufRead) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value = trimmed.parse::<u32>().map_err(|e| {
            Error::Format(format!(
                "line {}: expected a non-negative integer, got {trimmed:?} ({e})",
                lineno + 1
            ))
        })?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn models() -> Vec<MgfModel> {
        vec![
            MgfModel::geometric(0.1).unwrap(),
            MgfModel::geometric(0.5).unwrap(),
            MgfModel::geometric(0.9).unwrap(),
            MgfModel::smith(2).unwrap(),
            MgfModel::smith(5).unwrap(),
            MgfModel::smith(20).unwrap(),
            MgfModel::empirical(vec![0, 0, 1, 3, 2, 0, 7]).unwrap(),
            MgfModel::Degenerate,
        ]
    }

    fn grid_top(m: &MgfModel) -> f64 {
        let ls = m.lambda_singularity();
        if ls.is_finite() {
            0.9 * ls
        } else {
            1.0
        }
    }

    #[test]
    fn value_at_zero_is_one() {
        for m in models() {
            assert_eq!(m.eval(0.0).unwrap(), 1.0, "{m:?}");
            assert_eq!(m.mgf_minus_one(0.0).unwrap(), 0.0);
            assert_eq!(m.remainder(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn derivative_at_zero_is_mu1() {
        for m in models() {
            let h = 1e-5;
            let d = (m.eval(h).unwrap() - m.eval(-h).unwrap()) / (2.0 * h);
            assert!((d - m.mu1()).abs() < 1e-6, "{m:?}: {d} vs {}", m.mu1());
        }
    }

    #[test]
    fn convex_increasing_and_above_jensen() {
        for m in models() {
            let top = grid_top(&m);
            let pts: Vec<f64> = (0..=200).map(|i| top * i as f64 / 200.0).collect();
            let vals: Vec<f64> = pts.iter().map(|&l| m.eval(l).unwrap()).collect();
            for i in 1..vals.len() {
                if m.kind() != MgfKind::Degenerate {
                    assert!(vals[i] > vals[i - 1], "{m:?} not increasing");
                }
                assert!(vals[i] >= (pts[i] * m.mu1()).exp() * (1.0 - 1e-14));
            }
            for i in 1..vals.len() - 1 {
                assert!(vals[i - 1] + vals[i + 1] - 2.0 * vals[i] >= -1e-12 * vals[i]);
            }
        }
    }

    #[test]
    fn differences_match_direct_evaluation() {
        for m in models() {
            for &l in &[0.05, 0.2, 0.5] {
                if l >= m.lambda_singularity() {
                    continue;
                }
                let v = m.eval(l).unwrap();
                assert_relative_eq!(m.mgf_minus_one(l).unwrap(), v - 1.0, max_relative = 1e-10);
                let r = m.remainder(l).unwrap();
                assert!((r - (v - 1.0 - l * m.mu1())).abs() < 1e-12 * v);
            }
        }
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(mgf_geometric(0.5, 0.0).unwrap(), 1.0);
        assert_eq!(MgfModel::geometric(0.5).unwrap().mu1(), 1.0);
        let rho: f64 = 0.3;
        let ls = -rho.ln();
        assert!(mgf_geometric(rho, ls * (1.0 - 1e-9)).unwrap().is_finite());
        assert!(matches!(
            mgf_geometric(rho, ls),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn smith_examples() {
        for b in [2, 3, 7, 50] {
            assert_eq!(mgf_smith(b, 0.0).unwrap(), 1.0);
            assert_eq!(MgfModel::smith(b).unwrap().mu1(), 0.5);
        }
        assert!(MgfModel::smith(1).is_err());
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(mgf_empirical(&[0, 0, 0], 0.7).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            mgf_empirical(&[1, 3], 1.0).unwrap(),
            (e + e.powi(3)) / 2.0,
            max_relative = 1e-15
        );
        assert!(mgf_empirical(&[], 1.0).is_err());
        assert!(MgfModel::empirical(vec![]).is_err());
    }

    #[test]
    fn reads_residual_file() {
        let text = "3\n\n0\n 12 \n";
        assert_eq!(
            read_residual_sizes(text.as_bytes()).unwrap(),
            vec![3, 0, 12]
        );
        let err = read_residual_sizes("1\n-2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn smith_kappa1_tends_to_one_half() {
        // kappa1 - 1/2 = l0 mu2 / 2 + O(l0^2); C = mu2 leaves room for the higher orders
        for b in [2u32, 5, 20] {
            let m = MgfModel::smith(b).unwrap();
            for &l0 in &[1e-4, 1e-3, 1e-2] {
                let k1 = m.mgf_minus_one(l0).unwrap() / l0;
                assert!(k1 >= 0.5);
                let c = m.second_moment();
                assert!(k1 <= 0.5 + c * l0, "b={b} l0={l0} k1={k1}");
            }
        }
    }
}
