//! Large-deviation upper bounds for counts of clustered Bernoulli
//! occurrences, and Monte Carlo processes to check them against.
//!
//! The pipeline is [`ClusterParams`] + [`MgfModel`] -> [`compute_bound`],
//! which minimizes the exponent polynomials ([`opt`]), solves the
//! characteristic polynomial ([`roots`]) and the Vandermonde system for the
//! constants ([`bound`]). [`sim`] generates the example processes and
//! estimates tail probabilities for comparison.

// `!(x < y)` is used deliberately so that NaN takes the failure branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod error;
pub mod mgf;
pub mod opt;
pub mod params;
pub mod roots;
pub mod sim;

pub use bound::{bernstein_baseline, compute_bound, BoundReport, BoundValue};
pub use error::{Error, Result};
pub use mgf::{MgfKind, MgfModel};
pub use params::{big_f, theta, ClusterParams, InterpolationConstants};
pub use roots::{certify_root_bounds, solve_ap, RootCertification, RootSet};
pub use sim::{analytic_params, simulate, ProcessSpec, TrajectoryBatch};
