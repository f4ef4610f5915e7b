//! Scalar inputs of the bound and every quantity derived from them.
//!
//! A [`ClusterParams`] carries the occurrence probability `p`, the cluster gap
//! `q`, the mixing coefficient `psi_q`, the mean residual cluster size `mu1`
//! and the deviation `epsilon`. From these it derives `p_star = psi_q * p`
//! and the interpolation radius `lambda0 = epsilon / (p_star * (1 + 2 mu1))`.
//! [`InterpolationConstants`] then fixes `theta0`, `kappa0` and `kappa1`, the
//! constants of the polynomial majorants of `e^l - 1` and of the residual
//! cluster MGF on `[0, lambda0]`.

use crate::error::{domain, Error, Result};
use crate::mgf::MgfModel;

/// Below this argument `theta` is evaluated from its power series.
pub const THETA_SERIES_THRESHOLD: f64 = 1e-2;

/// `(e^x - 1 - x) / x^2` for any finite `x`, with the removable singularity
/// at zero filled in.
pub(crate) fn theta_unchecked(x: f64) -> f64 {
    if x.abs() < THETA_SERIES_THRESHOLD {
        // sum_{k>=0} x^k / (k+2)!, truncated well past f64 resolution
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..12 {
            term *= x / (k as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `theta(l) = (e^l - 1 - l) / l^2`, the quadratic interpolation constant of
/// `e^l - 1` on `[0, l]`.
pub fn theta(lambda0: f64) -> Result<f64> {
    if !lambda0.is_finite() {
        return domain(format!("theta: lambda0 must be finite, got {lambda0}"));
    }
    if lambda0 <= 0.0 {
        return domain(format!("theta: lambda0 must be positive, got {lambda0}"));
    }
    Ok(theta_unchecked(lambda0))
}

/// The scalar inputs of the deviation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    p: f64,
    q: usize,
    psi_q: f64,
    mu1: f64,
    epsilon: f64,
    p_star: f64,
    lambda0: f64,
}

impl ClusterParams {
    /// Validates the inputs and derives `p_star` and `lambda0`.
    pub fn new(p: f64, q: usize, psi_q: f64, mu1: f64, epsilon: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return domain(format!("p must lie in (0, 1), got {p}"));
        }
        if q == 0 {
            return domain("q must be a positive integer");
        }
        if !(psi_q.is_finite() && psi_q >= 1.0) {
            return domain(format!("psi_q must be >= 1, got {psi_q}"));
        }
        if !(mu1.is_finite() && mu1 >= 0.0) {
            return domain(format!("mu1 must be finite and >= 0, got {mu1}"));
        }
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0 - p) {
            return domain(format!(
                "epsilon must satisfy 0 < epsilon < 1 - p = {}, got {epsilon}",
                1.0 - p
            ));
        }
        let p_star = psi_q * p;
        let lambda0 = epsilon / (p_star * (1.0 + 2.0 * mu1));
        Ok(Self {
            p,
            q,
            psi_q,
            mu1,
            epsilon,
            p_star,
            lambda0,
        })
    }

    /// Same cluster description with a different deviation size.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.p, self.q, self.psi_q, self.mu1, epsilon)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn psi_q(&self) -> f64 {
        self.psi_q
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `psi_q * p`.
    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// `epsilon / (p_star (1 + 2 mu1))`.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Recomputes the derived fields and compares them bit for bit.
    pub fn derived_fields_consistent(&self) -> bool {
        let p_star = self.psi_q * self.p;
        p_star == self.p_star && self.epsilon / (p_star * (1.0 + 2.0 * self.mu1)) == self.lambda0
    }
}

/// `theta0`, `kappa0` and `kappa1` evaluated at `lambda0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationConstants {
    pub theta0: f64,
    pub kappa0: f64,
    pub kappa1: f64,
}

impl InterpolationConstants {
    pub fn compute(model: &MgfModel, params: &ClusterParams) -> Result<Self> {
        Ok(Self {
            theta0: theta(params.lambda0())?,
            kappa0: kappa0(model, params)?,
            kappa1: kappa1(model, params)?,
        })
    }
}

fn check_below_singularity(model: &MgfModel, lambda: f64) -> Result<()> {
    let lambda_s = model.lambda_singularity();
    if lambda >= lambda_s {
        return Err(Error::Singularity { lambda, lambda_s });
    }
    Ok(())
}

/// `kappa(lambda0) = (M(lambda0) - 1 - lambda0 mu1) / lambda0^2`.
///
/// The numerator is taken from the model's cancellation-free remainder, so
/// the result stays accurate for small `lambda0`. The `mu1` used is the one
/// carried by `params`.
pub fn kappa0(model: &MgfModel, params: &ClusterParams) -> Result<f64> {
    let l0 = params.lambda0();
    check_below_singularity(model, l0)?;
    let excess = model.remainder(l0)? + l0 * (model.mu1() - params.mu1());
    Ok(excess / (l0 * l0))
}

/// `kappa1 = (M(lambda0) - 1) / lambda0`, the slope of the secant of `M` on
/// `[0, lambda0]`.
pub fn kappa1(model: &MgfModel, params: &ClusterParams) -> Result<f64> {
    let l0 = params.lambda0();
    check_below_singularity(model, l0)?;
    Ok(model.mgf_minus_one(l0)? / l0)
}

/// `F(l) = p_star (e^l - 1) M(l)`, the coefficient of the lagged term in the
/// MGF recursion. Strictly increasing on `[0, lambda_s)`.
pub fn big_f(lambda: f64, model: &MgfModel, params: &ClusterParams) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return domain(format!("F: lambda must be finite and >= 0, got {lambda}"));
    }
    check_below_singularity(model, lambda)?;
    Ok(params.p_star() * lambda.exp_m1() * model.eval(lambda)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geometric_params() -> (MgfModel, ClusterParams) {
        let model = MgfModel::geometric(0.5).unwrap();
        let params = ClusterParams::new(1.0 / 6.0, 1, 1.08, 1.0, 0.05).unwrap();
        (model, params)
    }

    #[test]
    fn theta_at_one_is_e_minus_two() {
        assert_relative_eq!(
            theta(1.0).unwrap(),
            std::f64::consts::E - 2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn theta_limit_is_one_half() {
        assert!((theta(1e-12).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn theta_branches_agree_at_switch() {
        let t = THETA_SERIES_THRESHOLD;
        let series = theta_unchecked(t * (1.0 - 1e-12));
        let closed = (t.exp_m1() - t) / (t * t);
        assert_relative_eq!(series, closed, max_relative = 1e-12);
    }

    #[test]
    fn theta_rejects_bad_input() {
        assert!(matches!(theta(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(theta(f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(theta(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_increasing_on_log_grid() {
        let mut prev = theta(1e-6).unwrap();
        let mut x = 1e-6;
        while x < 5.0 {
            x *= 1.05;
            let cur = theta(x).unwrap();
            assert!(cur > prev, "theta not increasing at {x}");
            prev = cur;
        }
    }

    #[test]
    fn params_validation() {
        assert!(ClusterParams::new(0.0, 1, 1.0, 1.0, 0.1).is_err());
        assert!(ClusterParams::new(0.2, 0, 1.0, 1.0, 0.1).is_err());
        assert!(ClusterParams::new(0.2, 1, 0.9, 1.0, 0.1).is_err());
        assert!(ClusterParams::new(0.2, 1, 1.0, -1.0, 0.1).is_err());
        assert!(ClusterParams::new(0.2, 1, 1.0, 1.0, 0.8).is_err());
        assert!(ClusterParams::new(0.2, 1, 1.0, 1.0, 0.0).is_err());
        let p = ClusterParams::new(0.2, 1, 1.5, 1.0, 0.1).unwrap();
        assert!(p.derived_fields_consistent());
        assert_eq!(p.p_star(), 1.5 * 0.2);
        assert_eq!(p.lambda0(), 0.1 / (1.5 * 0.2 * 3.0));
    }

    #[test]
    fn kappa_degenerate_model_is_zero() {
        let params = ClusterParams::new(0.2, 1, 1.0, 0.0, 0.1).unwrap();
        let m = MgfModel::Degenerate;
        assert_eq!(kappa0(&m, &params).unwrap(), 0.0);
        assert_eq!(kappa1(&m, &params).unwrap(), 0.0);
    }

    #[test]
    fn kappa1_geometric_closed_form() {
        let (model, params) = geometric_params();
        let l0 = params.lambda0();
        let rho: f64 = 0.5;
        let expected = rho * l0.exp_m1() / ((1.0 - rho * l0.exp()) * l0);
        assert_relative_eq!(
            kappa1(&model, &params).unwrap(),
            expected,
            max_relative = 1e-13
        );
    }

    #[test]
    fn kappa0_matches_direct_formula() {
        let (model, params) = geometric_params();
        let l0 = params.lambda0();
        let m = 0.5 / (1.0 - 0.5 * l0.exp());
        let direct = (m - 1.0 - l0 * 1.0) / (l0 * l0);
        assert_relative_eq!(
            kappa0(&model, &params).unwrap(),
            direct,
            max_relative = 1e-10
        );
    }

    #[test]
    fn kappa_singularity_reports_lambda_s() {
        let model = MgfModel::geometric(0.9).unwrap();
        // lambda0 = 0.5 / (0.1 * 19) = 0.263 > -ln 0.9 = 0.105
        let params = ClusterParams::new(0.1, 1, 1.0, 9.0, 0.5).unwrap();
        match kappa0(&model, &params) {
            Err(Error::Singularity { lambda_s, .. }) => {
                assert_relative_eq!(lambda_s, -(0.9f64).ln(), max_relative = 1e-15)
            }
            other => panic!("expected singularity, got {other:?}"),
        }
        assert!(matches!(
            kappa1(&model, &params),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn big_f_values() {
        let model = MgfModel::geometric(0.5).unwrap();
        let params = ClusterParams::new(0.2, 1, 1.0, 1.0, 0.05).unwrap();
        assert_eq!(big_f(0.0, &model, &params).unwrap(), 0.0);
        let l: f64 = 0.1;
        let expected = 0.2 * l.exp_m1() * (0.5 / (1.0 - 0.5 * l.exp()));
        assert_relative_eq!(
            big_f(l, &model, &params).unwrap(),
            expected,
            max_relative = 1e-14
        );
        let ls = model.lambda_singularity();
        let mut prev = 0.0;
        let mut x = 0.01;
        while x < 0.9 * ls {
            let cur = big_f(x, &model, &params).unwrap();
            assert!(cur > prev);
            prev = cur;
            x += 0.01;
        }
        assert!(big_f(ls, &model, &params).is_err());
    }

    #[test]
    fn interpolation_constants_invariants() {
        for &rho in &[0.1, 0.5, 0.9] {
            let model = MgfModel::geometric(rho).unwrap();
            let mu1 = model.mu1();
            let params = ClusterParams::new(0.05, 1, 1.2, mu1, 0.01).unwrap();
            let c = InterpolationConstants::compute(&model, &params).unwrap();
            assert!(c.theta0 > 0.5);
            assert!(c.kappa1 >= mu1);
            assert!(c.kappa0 >= model.second_moment() / 2.0);
        }
    }
}
