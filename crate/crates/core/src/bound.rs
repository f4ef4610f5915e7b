//! Assembly of the full tail bound from the minimized exponents, the roots
//! of the characteristic polynomial and the Vandermonde constants.

use std::fmt::Write as _;
use std::io;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::mgf::{MgfKind, MgfModel};
use crate::opt::{minimize_q, minimize_r, QuarticSpec};
use crate::params::{big_f, ClusterParams, InterpolationConstants};
use crate::roots::{a_p_prime, certify_root_bounds, solve_ap, RootCertification, RootSet};

/// Nodes closer than this are treated as coincident.
pub const MIN_NODE_SEPARATION: f64 = 1e-10;
/// Allowed `||V C - I||_inf / ||I||_inf`.
pub const VANDERMONDE_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Schema tag written in the first CSV column.
pub const CSV_SCHEMA: &str = "bound/v1";

/// `V C = I` with `V[k][j] = z_j^k` and `I = (x_0, ..., x_{q-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct VandermondeSystem {
    nodes: Vec<Complex64>,
    initial: Vec<f64>,
}

impl VandermondeSystem {
    pub fn new(nodes: Vec<Complex64>, initial: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != initial.len() {
            return domain(format!(
                "Vandermonde system needs as many initial conditions as nodes ({} vs {})",
                initial.len(),
                nodes.len()
            ));
        }
        if initial.iter().any(|x| !x.is_finite()) {
            return domain("Vandermonde system: initial conditions must be finite");
        }
        let sep = min_separation(&nodes);
        if sep <= MIN_NODE_SEPARATION {
            return Err(Error::Conditioning {
                min_separation: sep,
                gautschi_bound: gautschi_bound(&nodes),
            });
        }
        Ok(Self { nodes, initial })
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `max_k |sum_j z_j^k C_j - x_k| / max_k |x_k|`.
    pub fn relative_residual(&self, c: &[Complex64]) -> f64 {
        let scale = self
            .initial
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let mut powers = vec![Complex64::new(1.0, 0.0); self.nodes.len()];
        let mut worst = 0.0f64;
        for &x in &self.initial {
            let row: Complex64 = powers.iter().zip(c).map(|(zp, cj)| zp * cj).sum();
            worst = worst.max((row - x).norm());
            for (zp, z) in powers.iter_mut().zip(&self.nodes) {
                *zp *= z;
            }
        }
        worst / scale
    }
}

fn min_separation(nodes: &[Complex64]) -> f64 {
    let mut sep = f64::INFINITY;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            sep = sep.min((a - b).norm());
        }
    }
    sep
}

fn gautschi_bound(nodes: &[Complex64]) -> f64 {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, zi)| (1.0 + zi.norm()) / (nodes[j] - zi).norm())
                .product::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Coefficients (lowest degree first) of `prod_{i != j} (t - z_i) / (z_j - z_i)`.
fn lagrange_coefficients(nodes: &[Complex64], j: usize) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for (i, &zi) in nodes.iter().enumerate() {
        if i == j {
            continue;
        }
        let scale = (nodes[j] - zi).inv();
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c * scale;
            next[k] -= c * zi * scale;
        }
        coeffs = next;
    }
    coeffs
}

/// Solution of a [`VandermondeSystem`] with the split `C = C' + C''`, where
/// `C'` solves the system for the geometric vector `(1, x_1, x_1^2, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsSolution {
    pub c: Vec<Complex64>,
    pub c_prime: Vec<Complex64>,
    pub c_second: Vec<Complex64>,
    pub residual: f64,
}

/// Solves `V C = I` through the explicit inverse: row `j` of `V^{-1}` holds
/// the coefficients of the `j`-th Lagrange basis polynomial.
pub fn solve_constants(system: &VandermondeSystem) -> Result<ConstantsSolution> {
    let nodes = &system.nodes;
    let x1 = system.initial.get(1).copied().unwrap_or(1.0);
    let mut c = Vec::with_capacity(nodes.len());
    let mut c_prime = Vec::with_capacity(nodes.len());
    for j in 0..nodes.len() {
        let ell = lagrange_coefficients(nodes, j);
        c.push(ell.iter().zip(&system.initial).map(|(l, x)| l * x).sum());
        c_prime.push(
            nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, zi)| (x1 - zi) / (nodes[j] - zi))
                .product(),
        );
    }
    let c_second = c.iter().zip(&c_prime).map(|(a, b)| a - b).collect();
    let residual = system.relative_residual(&c);
    if !(residual < VANDERMONDE_RESIDUAL_TOLERANCE) {
        return Err(Error::Conditioning {
            min_separation: min_separation(nodes),
            gautschi_bound: gautschi_bound(nodes),
        });
    }
    Ok(ConstantsSolution {
        c,
        c_prime,
        c_second,
        residual,
    })
}

/// `(a'(x_1) / a'(z_0), 1)`, the interval that contains `C'_0` when `x_1 < z_0`.
pub fn c_prime_0_bounds(roots: &RootSet, x1: f64) -> Option<(f64, f64)> {
    if !(x1 < roots.z0()) || roots.q() < 2 {
        return None;
    }
    let q = roots.q();
    let ratio =
        a_p_prime(q, Complex64::new(x1, 0.0)).re / a_p_prime(q, Complex64::new(roots.z0(), 0.0)).re;
    Some((ratio, 1.0))
}

/// Bounds on `||V^{-1}||_inf` for the nodes of a [`RootSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseNormBound {
    /// `max_j prod_{i != j} (1 + |z_i|) / |z_j - z_i|`.
    pub gautschi: f64,
    /// `(1+r1)^{q-2} max{(1+r1)/|a'(z_j)|, (2+d)/|a'(z0)|}`, for `q >= 2`.
    pub corollary: Option<f64>,
}

pub fn vandermonde_inverse_norm_bound(roots: &RootSet) -> InverseNormBound {
    let nodes = roots.all();
    let q = roots.q();
    let corollary = roots.r1().map(|r1| {
        let secondary = roots
            .secondary()
            .iter()
            .map(|&z| (1.0 + r1) / a_p_prime(q, z).norm())
            .fold(0.0, f64::max);
        let principal = (2.0 + roots.d()) / a_p_prime(q, Complex64::new(roots.z0(), 0.0)).norm();
        (1.0 + r1).powi(q as i32 - 2) * secondary.max(principal)
    });
    InverseNormBound {
        gautschi: gautschi_bound(&nodes),
        corollary,
    }
}

/// `-eps^2 / (2 [p(1-p) + eps/3])`, the per-step Bernstein exponent for
/// independent Bernoulli(p) variables.
pub fn bernstein_rate(p: f64, epsilon: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(epsilon > 0.0 && epsilon < 1.0 - p) {
        return domain(format!(
            "bernstein: need 0 < p < 1 and 0 < eps < 1 - p (got p={p}, eps={epsilon})"
        ));
    }
    Ok(-epsilon * epsilon / (2.0 * (p * (1.0 - p) + epsilon / 3.0)))
}

/// `exp(-eps^2 n / (2 [p(1-p) + eps/3]))`.
pub fn bernstein_baseline(p: f64, epsilon: f64, n: u64) -> Result<f64> {
    Ok((bernstein_rate(p, epsilon)? * n as f64).exp())
}

/// Terms of the bound at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub n: u64,
    /// `C_0 exp(Q_min n)`.
    pub leading: f64,
    /// `sum_{i>=1} |C_i| |z_i|^n exp(-(p+eps) n)`.
    pub secondary: f64,
    pub total: f64,
    pub bernstein: f64,
}

/// Everything computed for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub params: ClusterParams,
    pub model: MgfKind,
    pub consts: InterpolationConstants,
    pub n: u64,
    pub lambda_q: f64,
    pub q_min: f64,
    pub lambda_r: f64,
    pub r_min: f64,
    /// `[R_min, chain2, chain3, chain4]`, each weaker than the previous.
    pub chain: [f64; 4],
    pub remark_printed: Option<f64>,
    pub remark_corrected: Option<f64>,
    pub d: f64,
    pub roots: RootSet,
    pub certification: RootCertification,
    pub initial_conditions: Vec<f64>,
    pub constants: ConstantsSolution,
    pub inverse_norm: InverseNormBound,
    /// Smallest `|x_1 - z_j|`; the geometric split needs `x_1` off the nodes.
    pub x1_node_distance: f64,
    pub bernstein_rate: f64,
}

/// Builds the bound for `params` and `model`; `initial_conditions` defaults
/// to `x_i = (1 + p (e^{lambda_Q} - 1))^i`.
pub fn compute_bound(
    params: &ClusterParams,
    model: &MgfModel,
    n: u64,
    initial_conditions: Option<&[f64]>,
) -> Result<BoundReport> {
    if n == 0 {
        return domain("compute_bound: n must be positive");
    }
    let consts = InterpolationConstants::compute(model, params)?;
    let quartic = QuarticSpec::from_params(params, &consts)?;
    let qmin = minimize_q(&quartic, params.lambda0())?;
    let rmin = minimize_r(params, &consts)?;

    let tol = 1e-12 * rmin.r_min.abs();
    if !(qmin.q_min <= rmin.r_min + tol) || rmin.chain.windows(2).any(|w| !(w[0] <= w[1] + tol)) {
        return Err(Error::Numerical(format!(
            "exponent chain out of order: Q_min = {}, chain = {:?}",
            qmin.q_min, rmin.chain
        )));
    }

    let d = big_f(qmin.lambda_q, model, params)?;
    let q = params.q();
    let roots = solve_ap(q, d)?;
    let certification = certify_root_bounds(&roots);

    let x1 = 1.0 + params.p() * qmin.lambda_q.exp_m1();
    let initial: Vec<f64> = match initial_conditions {
        Some(ic) => {
            if ic.len() != q {
                return domain(format!(
                    "compute_bound: expected {q} initial conditions, got {}",
                    ic.len()
                ));
            }
            ic.to_vec()
        }
        None => (0..q).map(|i| x1.powi(i as i32)).collect(),
    };
    let system = VandermondeSystem::new(roots.all(), initial.clone())?;
    let constants = solve_constants(&system)?;
    let inverse_norm = vandermonde_inverse_norm_bound(&roots);
    let x1_node_distance = roots
        .all()
        .iter()
        .map(|z| (z - initial.get(1).copied().unwrap_or(x1)).norm())
        .fold(f64::INFINITY, f64::min);

    Ok(BoundReport {
        params: *params,
        model: model.kind(),
        consts,
        n,
        lambda_q: qmin.lambda_q,
        q_min: qmin.q_min,
        lambda_r: rmin.lambda_r,
        r_min: rmin.r_min,
        chain: rmin.chain,
        remark_printed: rmin.remark_printed,
        remark_corrected: rmin.remark_corrected,
        d,
        roots,
        certification,
        initial_conditions: initial,
        constants,
        inverse_norm,
        x1_node_distance,
        bernstein_rate: bernstein_rate(params.p(), params.epsilon())?,
    })
}

impl BoundReport {
    /// Bound on `P(S_n >= (p + eps) n)` at horizon `n`.
    pub fn evaluate(&self, n: u64) -> BoundValue {
        let nf = n as f64;
        let c = &self.constants.c;
        let leading = c[0].re * (self.q_min * nf).exp();
        let shift = self.params.p() + self.params.epsilon();
        let secondary = c[1..]
            .iter()
            .zip(self.roots.secondary())
            .map(|(ci, zi)| ci.norm() * (nf * (zi.norm().ln() - shift)).exp())
            .sum::<f64>();
        BoundValue {
            n,
            leading,
            secondary,
            total: leading + secondary,
            bernstein: (self.bernstein_rate * nf).exp(),
        }
    }

    /// Value at the horizon the report was built for.
    pub fn value(&self) -> BoundValue {
        self.evaluate(self.n)
    }

    /// Flat `key=value` record, one field per line.
    pub fn to_key_value(&self) -> String {
        let v = self.value();
        let p = &self.params;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("schema", CSV_SCHEMA.to_string());
        put("model", format!("{:?}", self.model).to_lowercase());
        put("p", p.p().to_string());
        put("q", p.q().to_string());
        put("psi_q", p.psi_q().to_string());
        put("mu1", p.mu1().to_string());
        put("epsilon", p.epsilon().to_string());
        put("p_star", p.p_star().to_string());
        put("lambda0", p.lambda0().to_string());
        put("theta0", self.consts.theta0.to_string());
        put("kappa0", self.consts.kappa0.to_string());
        put("kappa1", self.consts.kappa1.to_string());
        put("lambda_q", self.lambda_q.to_string());
        put("q_min", self.q_min.to_string());
        put("lambda_r", self.lambda_r.to_string());
        put("r_min", self.r_min.to_string());
        for (i, c) in self.chain.iter().enumerate() {
            put(&format!("chain{}", i + 1), c.to_string());
        }
        if let (Some(a), Some(b)) = (self.remark_printed, self.remark_corrected) {
            put("r_min_remark_printed", a.to_string());
            put("r_min_remark_corrected", b.to_string());
        }
        put("d", self.d.to_string());
        put("z0", self.roots.z0().to_string());
        for (i, z) in self.roots.secondary().iter().enumerate() {
            put(&format!("z{}", i + 1), format_complex(*z));
        }
        for (i, c) in self.constants.c.iter().enumerate() {
            put(&format!("c{i}"), format_complex(*c));
        }
        put("vandermonde_residual", self.constants.residual.to_string());
        put("gautschi_bound", self.inverse_norm.gautschi.to_string());
        put("n", v.n.to_string());
        put("bound_leading", v.leading.to_string());
        put("bound_secondary", v.secondary.to_string());
        put("bound_total", v.total.to_string());
        put("bernstein", v.bernstein.to_string());
        s
    }

    pub fn csv_row(&self, n: u64) -> BoundRow {
        let v = self.evaluate(n);
        BoundRow {
            schema: CSV_SCHEMA,
            n,
            p: self.params.p(),
            q: self.params.q(),
            psi_q: self.params.psi_q(),
            mu1: self.params.mu1(),
            epsilon: self.params.epsilon(),
            lambda_q: self.lambda_q,
            q_min: self.q_min,
            r_min: self.r_min,
            d: self.d,
            z0: self.roots.z0(),
            r1: self.roots.r1().unwrap_or(0.0),
            leading: v.leading,
            secondary: v.secondary,
            total: v.total,
            bernstein: v.bernstein,
        }
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        z.re.to_string()
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// One CSV line of a sweep over `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub schema: &'static str,
    pub n: u64,
    pub p: f64,
    pub q: usize,
    pub psi_q: f64,
    pub mu1: f64,
    pub epsilon: f64,
    pub lambda_q: f64,
    pub q_min: f64,
    pub r_min: f64,
    pub d: f64,
    pub z0: f64,
    pub r1: f64,
    pub leading: f64,
    pub secondary: f64,
    pub total: f64,
    pub bernstein: f64,
}

pub fn write_csv<W: io::Write>(rows: &[BoundRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
