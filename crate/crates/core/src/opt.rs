//! Minimizers for the cubic and quartic exponent polynomials.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::params::{ClusterParams, InterpolationConstants};

/// Real roots of `x^3 + a2 x^2 + a1 x + a0`, ascending and deduplicated.
///
/// Uses the depressed cubic `y^3 + p y + q` with `x = y - a2/3`: the
/// trigonometric form when all three roots are real, and the sign-stable
/// radical form otherwise. Every root gets Newton polishing on the
/// original cubic.
pub fn cardano_roots(a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let shift = a2 / 3.0;
    let p = a1 - a2 * a2 / 3.0;
    let q = 2.0 * shift.powi(3) - a2 * a1 / 3.0 + a0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    let mut ys = if p == 0.0 && q == 0.0 {
        vec![0.0]
    } else if disc > 0.0 {
        // add magnitudes inside the cube root, recover the partner from u v = -p/3
        let u = (-q / 2.0 - q.signum() * disc.sqrt()).cbrt();
        let y = if u == 0.0 { 0.0 } else { u - p / (3.0 * u) };
        vec![y]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos())
            .collect()
    };

    let f = |x: f64| ((x + a2) * x + a1) * x + a0;
    let df = |x: f64| (3.0 * x + 2.0 * a2) * x + a1;
    let mut roots: Vec<f64> = ys
        .drain(..)
        .map(|y| {
            let mut x = y - shift;
            for _ in 0..6 {
                let (fx, dfx) = (f(x), df(x));
                if dfx == 0.0 {
                    break;
                }
                let next = x - fx / dfx;
                if !(f(next).abs() < fx.abs()) {
                    break;
                }
                x = next;
            }
            x
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    roots
}

/// `e(x) = a x^3 + b x^2 - delta x` with `a >= 0`, `b, delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSpec {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl CubicSpec {
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(a.is_finite() && a >= 0.0) || !ok(b) || !ok(delta) {
            return domain(format!(
                "CubicSpec: need a >= 0, b > 0, delta > 0 (got a={a}, b={b}, delta={delta})"
            ));
        }
        Ok(Self { a, b, delta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        x * (-self.delta + x * (self.b + self.a * x))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        -self.delta + x * (2.0 * self.b + 3.0 * self.a * x)
    }

    /// `sqrt(b^2 + 3 a delta)`.
    pub fn b_tilde(&self) -> f64 {
        (self.b * self.b + 3.0 * self.a * self.delta).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicMin {
    pub x_min: f64,
    pub e_min: f64,
}

/// Minimizer of `e` on `x > 0`, in the rationalized form `delta / (b~ + b)`.
pub fn cubic_min(spec: &CubicSpec) -> CubicMin {
    let x_min = spec.delta / (spec.b_tilde() + spec.b);
    CubicMin {
        x_min,
        e_min: spec.eval(x_min),
    }
}

/// Two-sided bounds on `x_min` and `e_min`, as `(lower, upper)` pairs.
pub fn cubic_min_bounds(spec: &CubicSpec) -> ((f64, f64), (f64, f64)) {
    let bt = spec.b_tilde();
    let d = spec.delta;
    (
        (d / (2.0 * bt), d / (2.0 * spec.b)),
        (-d * d / (bt + spec.b), -d * d / (2.0 * (bt + spec.b))),
    )
}

/// Golden-section search for the minimizer on `[lo, hi]`.
///
/// `less(x, y)` must report whether the objective at `x` is below the one
/// at `y`; passing a comparator instead of values lets callers avoid the
/// cancellation of subtracting two nearly equal function values.
pub fn golden_section(
    mut lo: f64,
    mut hi: f64,
    less: impl Fn(f64, f64) -> bool,
    rel_tol: f64,
) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    for _ in 0..500 {
        if hi - lo <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
        if less(x1, x2) {
            hi = x2;
            x2 = x1;
            x1 = hi - inv_phi * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + inv_phi * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

/// `Q(l) = -eps l + p*[(theta0+mu1) l^2 + (theta0 mu1 + kappa0) l^3 + theta0 kappa0 l^4]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticSpec {
    pub epsilon: f64,
    pub p_star: f64,
    pub theta0: f64,
    pub mu1: f64,
    pub kappa0: f64,
}

impl QuarticSpec {
    pub fn new(epsilon: f64, p_star: f64, theta0: f64, mu1: f64, kappa0: f64) -> Result<Self> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !pos(epsilon) || !pos(p_star) || !pos(theta0) || !nonneg(mu1) || !nonneg(kappa0) {
            return domain(format!(
                "QuarticSpec: invalid coefficients eps={epsilon}, p*={p_star}, theta0={theta0}, \
                 mu1={mu1}, kappa0={kappa0}"
            ));
        }
        Ok(Self {
            epsilon,
            p_star,
            theta0,
            mu1,
            kappa0,
        })
    }

    pub fn from_params(params: &ClusterParams, consts: &InterpolationConstants) -> Result<Self> {
        Self::new(
            params.epsilon(),
            params.p_star(),
            consts.theta0,
            params.mu1(),
            consts.kappa0,
        )
    }

    /// Power-series coefficients `[c1, c2, c3, c4]` of `Q`.
    pub fn coefficients(&self) -> [f64; 4] {
        let ps = self.p_star;
        [
            -self.epsilon,
            ps * (self.theta0 + self.mu1),
            ps * (self.theta0 * self.mu1 + self.kappa0),
            ps * self.theta0 * self.kappa0,
        ]
    }

    pub fn eval(&self, l: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients();
        l * (c1 + l * (c2 + l * (c3 + l * c4)))
    }

    pub fn derivative(&self, l: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients();
        c1 + l * (2.0 * c2 + l * (3.0 * c3 + l * 4.0 * c4))
    }

    /// `(Q(x) - Q(y)) / (x - y)` without forming the difference of values.
    pub fn secant_slope(&self, x: f64, y: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients();
        c1 + c2 * (x + y) + c3 * (x * x + x * y + y * y) + c4 * (x + y) * (x * x + y * y)
    }

    /// Whether `Q(x) < Q(y)`.
    pub fn less(&self, x: f64, y: f64) -> bool {
        (x - y) * self.secant_slope(x, y) < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticMin {
    pub lambda_q: f64,
    pub q_min: f64,
    /// The unconstrained critical point exceeded `lambda0`.
    pub clamped: bool,
    /// Independent golden-section minimizer.
    pub golden_lambda: f64,
}

/// Root of an increasing `f` with `f(lo) < 0 <= f(hi)`, by bisection to
/// machine precision.
fn increasing_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Relative agreement required between the closed form and golden section.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-8;

/// Minimizes `Q` on `(0, lambda0]`.
pub fn minimize_q(spec: &QuarticSpec, lambda0: f64) -> Result<QuarticMin> {
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return domain(format!("minimize_q: lambda0 must be > 0, got {lambda0}"));
    }
    let [c1, c2, c3, c4] = spec.coefficients();
    // Q'(0) = -eps < 0 and Q' >= 0 at the vertex of the quadratic part
    let quadratic_vertex = -c1 / (2.0 * c2);

    let critical = if c4 > 0.0 {
        let positive: Vec<f64> = cardano_roots(
            3.0 * c3 / (4.0 * c4),
            2.0 * c2 / (4.0 * c4),
            c1 / (4.0 * c4),
        )
        .into_iter()
        .filter(|&x| x > 0.0)
        .collect();
        match positive.as_slice() {
            [x] if *x <= quadratic_vertex * (1.0 + 1e-12)
                && spec.derivative(*x).abs() <= 1e-9 * -c1 =>
            {
                *x
            }
            // badly scaled coefficients (kappa0 can reach 1e50) cost the
            // radical form its small root; Q' is increasing on (0, inf), so
            // bracket it instead
            _ => increasing_root(|x| spec.derivative(x), 0.0, quadratic_vertex),
        }
    } else if c3 > 0.0 {
        cubic_min(&CubicSpec::new(c3, c2, -c1)?).x_min
    } else {
        quadratic_vertex
    };

    let a_priori = spec.epsilon / (2.0 * spec.p_star * (0.5 + spec.mu1));
    if !(critical > 0.0 && critical <= quadratic_vertex * (1.0 + 1e-12) && critical < a_priori) {
        return Err(Error::Numerical(format!(
            "minimize_q: critical point {critical} outside (0, {quadratic_vertex}] \
             or not below the a-priori bound {a_priori}"
        )));
    }

    let clamped = critical > lambda0;
    let lambda_q = critical.min(lambda0);
    // every term of Q' is positive past 0, so each one alone caps the root
    // at the point where it reaches eps, and the root exceeds a third of the
    // smallest cap; searching below it keeps tiny lambda_Q resolvable
    let mut cap = -c1 / (2.0 * c2);
    if c3 > 0.0 {
        cap = cap.min((-c1 / (3.0 * c3)).sqrt());
    }
    if c4 > 0.0 {
        cap = cap.min((-c1 / (4.0 * c4)).cbrt());
    }
    let search_hi = lambda0.min(cap * (1.0 + 1e-9));
    let golden_lambda = golden_section(0.0, search_hi, |x, y| spec.less(x, y), 1e-15);
    if (golden_lambda - lambda_q).abs() > CROSS_CHECK_TOLERANCE * lambda_q {
        return Err(Error::Numerical(format!(
            "minimize_q: closed form lambda_Q = {lambda_q} disagrees with golden section \
             {golden_lambda}"
        )));
    }
    Ok(QuarticMin {
        lambda_q,
        q_min: spec.eval(lambda_q),
        clamped,
        golden_lambda,
    })
}

/// Minimum of `R(l) = -eps l + p*[(theta0+kappa1) l^2 + theta0 kappa1 l^3]`
/// and the successively weaker explicit upper bounds on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RMin {
    pub lambda_r: f64,
    pub r_min: f64,
    pub cubic: CubicSpec,
    /// `[R_min, -eps^2/(2(b~+b)), -eps^2/(4 b~), -eps^2/(4 p*(theta0+kappa1) sqrt(1+3eps/(4p*)))]`.
    pub chain: [f64; 4],
    /// `(2b^3 + 9ab eps - 2b~^3) / (3a)^3`, the closed form as usually quoted.
    pub remark_printed: Option<f64>,
    /// `(2b^3 + 9ab eps - 2b~^3) / (27 a^2)`, which is what direct
    /// evaluation at `lambda_R` actually reduces to.
    pub remark_corrected: Option<f64>,
}

pub fn minimize_r(params: &ClusterParams, consts: &InterpolationConstants) -> Result<RMin> {
    let ps = params.p_star();
    let eps = params.epsilon();
    let a = ps * consts.theta0 * consts.kappa1;
    let b = ps * (consts.theta0 + consts.kappa1);
    let cubic = CubicSpec::new(a, b, eps)?;
    let CubicMin { x_min, e_min } = cubic_min(&cubic);
    let lambda0 = params.lambda0();
    if x_min > lambda0 * (1.0 + 1e-12) {
        return Err(Error::Numerical(format!(
            "minimize_r: lambda_R = {x_min} exceeds lambda0 = {lambda0}"
        )));
    }

    let bt = cubic.b_tilde();
    let chain = [
        e_min,
        -eps * eps / (2.0 * (bt + b)),
        -eps * eps / (4.0 * bt),
        -eps * eps / (4.0 * b * (1.0 + 3.0 * eps / (4.0 * ps)).sqrt()),
    ];
    let numerator = 2.0 * b.powi(3) + 9.0 * a * b * eps - 2.0 * bt.powi(3);
    let (remark_printed, remark_corrected) = if a > 0.0 {
        (
            Some(numerator / (3.0 * a).powi(3)),
            Some(numerator / (27.0 * a * a)),
        )
    } else {
        (None, None)
    };
    Ok(RMin {
        lambda_r: x_min,
        r_min: e_min,
        cubic,
        chain,
        remark_printed,
        remark_corrected,
    })
}
