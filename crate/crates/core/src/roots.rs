//! Roots of the characteristic polynomial `a(z) = z^q - z^{q-1} - d`.
//!
//! For `d > 0` the polynomial has one real root `z0 > 1`, one negative real
//! root when `q` is even, and `(q-1)/2` conjugate pairs. `z0` is bracketed
//! and bisected, the other roots come from Aberth iteration on the deflated
//! polynomial and are then polished with Newton steps on `a` itself.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};

/// Roots must satisfy `|a(z)| < RESIDUAL_TOLERANCE * max(1, d)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Relative step size at which Aberth iteration stops.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-13;
pub const MAX_ITERATIONS: usize = 200;
/// Relative tolerance for inequalities that can hold with equality.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// `z^{q-1} (z - 1) - d`.
pub fn a_p(q: usize, d: f64, z: Complex64) -> Complex64 {
    z.powu(q as u32 - 1) * (z - 1.0) - d
}

/// `a'(z) = z^{q-2} (q z - (q - 1))`.
pub fn a_p_prime(q: usize, z: Complex64) -> Complex64 {
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    z.powu(q as u32 - 2) * (z * q as f64 - (q as f64 - 1.0))
}

fn a_p_real(q: usize, d: f64, x: f64) -> f64 {
    x.powi(q as i32 - 1) * (x - 1.0) - d
}

fn a_p_prime_real(q: usize, x: f64) -> f64 {
    if q == 1 {
        return 1.0;
    }
    x.powi(q as i32 - 2) * (q as f64 * x - (q as f64 - 1.0))
}

/// All `q` roots of `a(z)` for one `(q, d)`.
///
/// Secondary roots are ordered by increasing positive angle, each upper
/// half-plane root followed by its conjugate; the negative real root (even
/// `q`) comes last.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    q: usize,
    d: f64,
    z0: f64,
    secondary: Vec<Complex64>,
    residuals: Vec<f64>,
}

impl RootSet {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// The principal real root.
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn secondary(&self) -> &[Complex64] {
        &self.secondary
    }

    /// `|a(z_i)|` for `z0` followed by the secondary roots.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    /// `z0` followed by the secondary roots.
    pub fn all(&self) -> Vec<Complex64> {
        std::iter::once(Complex64::new(self.z0, 0.0))
            .chain(self.secondary.iter().cloned())
            .collect()
    }

    /// Modulus of the root with the smallest positive angle.
    pub fn r1(&self) -> Option<f64> {
        self.secondary.first().map(|z| z.norm())
    }
}

/// Solves `z^q - z^{q-1} - d = 0`.
pub fn solve_ap(q: usize, d: f64) -> Result<RootSet> {
    if q == 0 {
        return domain("solve_ap: q must be >= 1");
    }
    if !(d.is_finite() && d > 0.0) {
        return domain(format!("solve_ap: d must be finite and > 0, got {d}"));
    }
    if q > i32::MAX as usize {
        return domain("solve_ap: q too large");
    }

    let z0 = principal_root(q, d);
    let secondary = if q == 1 {
        Vec::new()
    } else {
        secondary_roots(q, d, z0)?
    };

    let residuals: Vec<f64> = std::iter::once(a_p_real(q, d, z0).abs())
        .chain(secondary.iter().map(|&z| a_p(q, d, z).norm()))
        .collect();
    let limit = RESIDUAL_TOLERANCE * d.max(1.0);
    if let Some((i, r)) = residuals.iter().enumerate().find(|(_, &r)| !(r < limit)) {
        return Err(Error::Numerical(format!(
            "solve_ap(q={q}, d={d}): root {i} has residual {r:e} above {limit:e}"
        )));
    }

    Ok(RootSet {
        q,
        d,
        z0,
        secondary,
        residuals,
    })
}

fn principal_root(q: usize, d: f64) -> f64 {
    if q == 1 {
        return 1.0 + d;
    }
    let mut hi = 1.0 + d;
    let mut lo = 1.0 + d / (1.0 + d).powi(q as i32 - 1);
    // the bracket can collapse under rounding for tiny d; 1 always works
    if !(a_p_real(q, d, lo) < 0.0) {
        lo = 1.0;
    }
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if a_p_real(q, d, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= CONVERGENCE_TOLERANCE * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let fx = a_p_real(q, d, x);
        let step = fx / a_p_prime_real(q, x);
        let next = x - step;
        if !(a_p_real(q, d, next).abs() < fx.abs()) {
            break;
        }
        x = next;
    }
    x
}

/// Coefficients (highest degree first) of `a(z) / (z - z0)`.
fn deflate(q: usize, d: f64, z0: f64) -> Vec<f64> {
    let mut coeffs = vec![0.0; q + 1];
    coeffs[0] = 1.0;
    coeffs[1] = -1.0;
    coeffs[q] -= d;
    let mut quotient = Vec::with_capacity(q);
    let mut acc = 0.0;
    for &c in &coeffs[..q] {
        acc = c + z0 * acc;
        quotient.push(acc);
    }
    quotient
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Simultaneous Aberth iteration for all roots of a real polynomial.
fn aberth(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let m = coeffs.len() - 1;
    if m == 1 {
        return Ok(vec![Complex64::new(-coeffs[1] / coeffs[0], 0.0)]);
    }
    let radius = (coeffs[m] / coeffs[0]).abs().powf(1.0 / m as f64).max(1e-3);
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / m as f64 + PI / (2.0 * m as f64) + 0.25;
            Complex64::from_polar(radius, angle)
        })
        .collect();

    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut worst = 0.0f64;
        for i in 0..m {
            let (p, dp) = horner(coeffs, z[i]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= w;
            worst = worst.max(w.norm() / z[i].norm().max(f64::MIN_POSITIVE));
        }
        last_step = worst;
        if worst <= CONVERGENCE_TOLERANCE {
            return Ok(z);
        }
    }
    Err(Error::Numerical(format!(
        "Aberth iteration did not converge in {MAX_ITERATIONS} iterations \
         (last relative step {last_step:e}, degree {m})"
    )))
}

fn polish(q: usize, d: f64, mut z: Complex64) -> Complex64 {
    let mut fz = a_p(q, d, z).norm();
    for _ in 0..8 {
        let next = z - a_p(q, d, z) / a_p_prime(q, z);
        let fnext = a_p(q, d, next).norm();
        if !(fnext < fz) {
            break;
        }
        z = next;
        fz = fnext;
    }
    z
}

fn polish_real(q: usize, d: f64, mut x: f64) -> f64 {
    let mut fx = a_p_real(q, d, x).abs();
    for _ in 0..8 {
        let next = x - a_p_real(q, d, x) / a_p_prime_real(q, x);
        let fnext = a_p_real(q, d, next).abs();
        if !(fnext < fx) {
            break;
        }
        x = next;
        fx = fnext;
    }
    x
}

fn secondary_roots(q: usize, d: f64, z0: f64) -> Result<Vec<Complex64>> {
    let raw = aberth(&deflate(q, d, z0))?;
    let polished: Vec<Complex64> = raw.into_iter().map(|z| polish(q, d, z)).collect();

    let is_real = |z: &Complex64| z.im.abs() <= 1e-8 * z.norm().max(1.0);
    let mut upper: Vec<Complex64> = polished
        .iter()
        .filter(|z| !is_real(z) && z.im > 0.0)
        .cloned()
        .collect();
    let lower = polished
        .iter()
        .filter(|z| !is_real(z) && z.im < 0.0)
        .count();
    let real: Vec<f64> = polished
        .iter()
        .filter(|z| is_real(z))
        .map(|z| polish_real(q, d, z.re))
        .collect();

    let pairs = (q - 1) / 2;
    let expected_real = usize::from(q.is_multiple_of(2));
    if upper.len() != pairs || lower != pairs || real.len() != expected_real {
        return Err(Error::Numerical(format!(
            "solve_ap(q={q}, d={d}): root structure mismatch: {} upper, {lower} lower, {} real \
             (expected {pairs}, {pairs}, {expected_real})",
            upper.len(),
            real.len()
        )));
    }
    if real.iter().any(|&x| x >= 0.0) {
        return Err(Error::Numerical(format!(
            "solve_ap(q={q}, d={d}): secondary real root is not negative: {real:?}"
        )));
    }

    upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut out = Vec::with_capacity(q - 1);
    for z in upper {
        out.push(z);
        out.push(z.conj());
    }
    out.extend(real.into_iter().map(|x| Complex64::new(x, 0.0)));
    Ok(out)
}

/// Outcome of one inequality family on one root set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub holds: bool,
    /// True when the lemma has nothing to check for this `q`.
    pub vacuous: bool,
    /// Smallest relative margin over all inequalities of the family;
    /// negative means violated.
    pub slack: f64,
}

impl LemmaCheck {
    fn vacuous() -> Self {
        Self {
            holds: true,
            vacuous: true,
            slack: f64::INFINITY,
        }
    }

    fn from_margins(margins: impl IntoIterator<Item = f64>) -> Self {
        let slack = margins.into_iter().fold(f64::INFINITY, f64::min);
        Self {
            holds: slack >= -BOUNDARY_TOLERANCE,
            vacuous: false,
            slack,
        }
    }
}

/// Relative margin of `small <= large`.
fn margin(small: f64, large: f64) -> f64 {
    (large - small) / large.abs().max(small.abs()).max(1.0)
}

/// Per-lemma certification of a [`RootSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootCertification {
    /// `1 + d/(1+d)^{q-1} < z0 < 1 + d`.
    pub realproot: LemmaCheck,
    /// Location and modulus of the secondary roots, including the absence
    /// of roots with positive angle below `pi/(q-1)`.
    pub sharproots: LemmaCheck,
    /// Larger angle in `[0, pi]` implies strictly smaller modulus.
    pub secondary: LemmaCheck,
    /// Lower bound on every modulus, switching exponent at `d = 1`.
    pub lower: LemmaCheck,
    /// Same lower bound with the switch at `d = 2`, the threshold the
    /// argument `|z^{q-1}(z-1)| <= 2 r^{q-1}` for `r <= 1` actually supports.
    pub lower_corrected: LemmaCheck,
    pub max_residual: f64,
    pub residuals_ok: bool,
    /// Sum and product of the roots agree with the coefficients.
    pub vieta_ok: bool,
}

impl RootCertification {
    /// Every check as stated, including [`Self::lower`].
    pub fn all_pass(&self) -> bool {
        self.realproot.holds
            && self.sharproots.holds
            && self.secondary.holds
            && self.lower.holds
            && self.residuals_ok
            && self.vieta_ok
    }

    /// Every check, with the lower bound in its corrected form.
    pub fn all_pass_corrected(&self) -> bool {
        self.realproot.holds
            && self.sharproots.holds
            && self.secondary.holds
            && self.lower_corrected.holds
            && self.residuals_ok
            && self.vieta_ok
    }
}

/// `f(r) = r^{q-1} sqrt(1 + r^2 - 2 r cos(pi/(q-1)))`, increasing for `q >= 3`.
fn sharp_modulus_function(q: usize, r: f64) -> f64 {
    let c = (PI / (q as f64 - 1.0)).cos();
    r.powi(q as i32 - 1) * (1.0 + r * r - 2.0 * r * c).sqrt()
}

/// Solves `f(r) = d` by bisection on `[0, (d / sin(pi/(q-1)))^{1/(q-1)}]`.
fn sharp_modulus_inverse(q: usize, d: f64) -> f64 {
    let explicit = sharp_modulus_explicit(q, d);
    let (mut lo, mut hi) = (0.0, explicit);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sharp_modulus_function(q, mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn sharp_modulus_explicit(q: usize, d: f64) -> f64 {
    (d / (PI / (q as f64 - 1.0)).sin()).powf(1.0 / (q as f64 - 1.0))
}

fn lower_modulus_bound(q: usize, d: f64, threshold: f64) -> f64 {
    if q == 1 {
        // (d/2)^{1/(q-1)} degenerates to its limit 0 for d < 2
        return if d <= threshold && d < 2.0 {
            0.0
        } else {
            d / 2.0
        };
    }
    let exponent = if d <= threshold {
        1.0 / (q as f64 - 1.0)
    } else {
        1.0 / q as f64
    };
    (d / 2.0).powf(exponent)
}

/// Checks the root-location lemmas on `roots` without modifying it.
pub fn certify_root_bounds(roots: &RootSet) -> RootCertification {
    let q = roots.q;
    let d = roots.d;
    let z0 = roots.z0;
    let all = roots.all();

    let realproot = LemmaCheck::from_margins([
        margin(1.0 + d / (1.0 + d).powi(q as i32 - 1), z0),
        margin(z0, 1.0 + d),
    ]);

    let sharproots = if q == 1 {
        LemmaCheck::vacuous()
    } else {
        let critical = PI / (q as f64 - 1.0);
        let mut margins = Vec::new();
        for z in &roots.secondary {
            margins.push(margin(z.norm(), 1.0 + d));
            let angle = z.arg();
            if angle > 0.0 {
                margins.push(margin(critical, angle));
            }
        }
        if q >= 3 {
            let z1 = roots.secondary[0];
            let beta1 = z1.arg();
            let inverse = sharp_modulus_inverse(q, d);
            let explicit = sharp_modulus_explicit(q, d);
            margins.push(margin(critical, beta1));
            margins.push(margin(beta1, 2.0 * PI / q as f64));
            margins.push(margin(z1.norm(), inverse));
            margins.push(margin(inverse, explicit));
            margins.extend(roots.secondary.iter().map(|z| margin(z.norm(), explicit)));
        }
        LemmaCheck::from_margins(margins)
    };

    let secondary = if q == 1 {
        LemmaCheck::vacuous()
    } else {
        let mut upper: Vec<(f64, f64)> = all
            .iter()
            .filter(|z| z.im >= 0.0)
            .map(|z| (z.arg(), z.norm()))
            .collect();
        upper.sort_by(|a, b| a.0.total_cmp(&b.0));
        LemmaCheck::from_margins(upper.windows(2).filter_map(|w| {
            let ((a0, r0), (a1, r1)) = (w[0], w[1]);
            (a1 - a0 > BOUNDARY_TOLERANCE).then(|| margin(r1, r0))
        }))
    };

    let lower_with = |threshold: f64| {
        let bound = lower_modulus_bound(q, d, threshold);
        LemmaCheck::from_margins(all.iter().map(|z| margin(bound, z.norm())))
    };
    let lower = lower_with(1.0);
    let lower_corrected = lower_with(2.0);

    let max_residual = roots.max_residual();
    let residuals_ok = max_residual < RESIDUAL_TOLERANCE * d.max(1.0);

    // sum = 1 + d and product = 1 + d for q = 1; sum = 1 and product = (-1)^{q+1} d otherwise
    let (sum_expected, product_expected) = if q == 1 {
        (1.0 + d, 1.0 + d)
    } else {
        (1.0, if q % 2 == 1 { d } else { -d })
    };
    let sum: Complex64 = all.iter().sum();
    let product: Complex64 = all.iter().product();
    let vieta_ok = (sum - sum_expected).norm() <= 1e-9 * sum_expected.abs().max(1.0)
        && (product - product_expected).norm() <= 1e-9 * product_expected.abs().max(1.0);

    RootCertification {
        realproot,
        sharproots,
        secondary,
        lower,
        lower_corrected,
        max_residual,
        residuals_ok,
        vieta_ok,
    }
}
