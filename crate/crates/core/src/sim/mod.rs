//! Simulation of the example occurrence processes.
//!
//! Every trajectory draws from its own ChaCha8 stream, selected by the
//! trajectory index, so a batch is a pure function of `(spec, n, count,
//! seed)` no matter how the work is split across threads.

mod clusters;
mod diagnostics;
mod estimate;
pub mod io;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{domain, Error, Result};
use crate::mgf::MgfModel;
use crate::params::ClusterParams;

pub use clusters::{decompose_by_zero_runs, decompose_clusters, Cluster, ClusterDecomposition};
pub use diagnostics::{Diagnostics, DiagnosticsReport, Estimate};
pub use estimate::{
    clopper_pearson_upper, estimate_psi, estimate_tail, estimate_tail_at, residual_sizes,
    tail_threshold, PsiEstimate, PsiGrade, PsiOptions, TailEstimate,
};

/// Tolerance on the total mass of a probability vector.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-12;
/// Blocks discarded before a Smith trajectory starts recording.
pub const SMITH_BURN_IN_BLOCKS: usize = 100;

/// One of the example processes. Symbols are 0-based; for the Markov kinds
/// the observed symbol is the last entry of `weights`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    /// Independent draws from `weights` except at the target, which repeats
    /// with probability `rho`.
    StickyMarkov { weights: Vec<f64>, rho: f64 },
    /// Walk on the complete graph of `ell` vertices with a loop at the
    /// target only; a sticky chain with uniform weights and `rho = (ell-1)/ell`.
    CompleteGraphWalk { ell: usize },
    /// Sticky chain with an extra state that is entered from the target with
    /// probability `rho1` and always returns to it.
    StretchingMarkov {
        weights: Vec<f64>,
        rho0: f64,
        rho1: f64,
    },
    /// Blocks of one symbol, never repeating the previous block's symbol;
    /// symbol `a` (1-based) has weight `weights[a-1]` and block length 1 or
    /// `a+1` with probabilities `(a-1)/a` and `1/a`.
    Smith { weights: Vec<f64>, target: u32 },
}

/// `ell` equal weights.
pub fn uniform_weights(ell: usize) -> Vec<f64> {
    vec![1.0 / ell as f64; ell]
}

fn check_distribution(name: &str, weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return domain(format!("{name}: weights must be finite and >= 0"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return domain(format!("{name}: weights sum to {total}, not 1"));
    }
    Ok(())
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::StickyMarkov { weights, rho } => {
                check_distribution("sticky_markov", weights)?;
                check_target_weight("sticky_markov", weights)?;
                if !(*rho > 0.0 && *rho < 1.0) {
                    return domain(format!("sticky_markov: rho must be in (0,1), got {rho}"));
                }
            }
            ProcessSpec::CompleteGraphWalk { ell } => {
                if *ell < 2 {
                    return domain(format!("complete_graph_walk: ell must be >= 2, got {ell}"));
                }
            }
            ProcessSpec::StretchingMarkov {
                weights,
                rho0,
                rho1,
            } => {
                check_distribution("stretching_markov", weights)?;
                check_target_weight("stretching_markov", weights)?;
                let rho = rho0 + rho1;
                if !(*rho0 >= 0.0 && *rho1 >= 0.0 && rho > 0.0 && rho < 1.0) {
                    return domain(format!(
                        "stretching_markov: need rho0, rho1 >= 0 and rho0 + rho1 in (0,1), \
                         got {rho0} + {rho1}"
                    ));
                }
            }
            ProcessSpec::Smith { weights, target } => {
                check_distribution("smith", weights)?;
                let b = *target as usize;
                if b < 2 || b > weights.len() || weights[b - 1] <= 0.0 {
                    return domain(format!(
                        "smith: target must be a symbol >= 2 with positive weight, got {target}"
                    ));
                }
                if weights[b - 1] >= 1.0 {
                    return domain("smith: at least two symbols need positive weight");
                }
            }
        }
        Ok(())
    }

    /// Maximum distance between consecutive occurrences of one cluster.
    pub fn q_gap(&self) -> usize {
        match self {
            ProcessSpec::StretchingMarkov { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessSpec::StickyMarkov { .. } => "sticky_markov",
            ProcessSpec::CompleteGraphWalk { .. } => "complete_graph_walk",
            ProcessSpec::StretchingMarkov { .. } => "stretching_markov",
            ProcessSpec::Smith { .. } => "smith",
        }
    }

    /// The complete-graph walk rewritten as a sticky chain.
    fn normalized(&self) -> ProcessSpec {
        match self {
            ProcessSpec::CompleteGraphWalk { ell } => ProcessSpec::StickyMarkov {
                weights: uniform_weights(*ell),
                rho: (*ell as f64 - 1.0) / *ell as f64,
            },
            other => other.clone(),
        }
    }
}

fn check_target_weight(name: &str, weights: &[f64]) -> Result<()> {
    match weights.last() {
        Some(&w) if w > 0.0 && w < 1.0 => Ok(()),
        _ => domain(format!("{name}: the target weight must lie in (0,1)")),
    }
}

/// Closed-form characteristics of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticParams {
    pub p: f64,
    pub q_gap: usize,
    /// `None` when no closed form is known.
    pub psi: Option<f64>,
    pub mu1: f64,
    pub model: MgfModel,
}

impl AnalyticParams {
    pub fn cluster_params(&self, epsilon: f64) -> Result<ClusterParams> {
        match self.psi {
            Some(psi) => ClusterParams::new(self.p, self.q_gap, psi, self.mu1, epsilon),
            None => domain("psi has no closed form for this process; supply it explicitly"),
        }
    }

    pub fn cluster_params_with_psi(&self, psi: f64, epsilon: f64) -> Result<ClusterParams> {
        ClusterParams::new(self.p, self.q_gap, psi, self.mu1, epsilon)
    }
}

pub fn analytic_params(spec: &ProcessSpec) -> Result<AnalyticParams> {
    spec.validate()?;
    let psi_of = |q_ell: f64, p: f64| (q_ell / p).max((1.0 - q_ell) / (1.0 - p));
    match spec.normalized() {
        ProcessSpec::StickyMarkov { weights, rho } => {
            let q_ell = *weights.last().unwrap();
            let p = q_ell / (1.0 - rho + q_ell);
            Ok(AnalyticParams {
                p,
                q_gap: 1,
                psi: Some(psi_of(q_ell, p)),
                mu1: rho / (1.0 - rho),
                model: MgfModel::geometric(rho)?,
            })
        }
        ProcessSpec::StretchingMarkov {
            weights,
            rho0,
            rho1,
        } => {
            let q_ell = *weights.last().unwrap();
            let rho = rho0 + rho1;
            let p = q_ell / (1.0 - rho + q_ell + rho1 * q_ell);
            let success = (1.0 - rho) * (1.0 - q_ell);
            Ok(AnalyticParams {
                p,
                q_gap: 2,
                psi: Some(psi_of(q_ell, p)),
                mu1: (1.0 - success) / success,
                model: MgfModel::geometric(1.0 - success)?,
            })
        }
        ProcessSpec::Smith { weights, target } => {
            // the block-symbol chain is reversible with pi_a proportional to
            // q_a (1 - q_a), and every symbol has mean block length 2
            let b = target as usize;
            let norm: f64 = weights.iter().map(|w| w * (1.0 - w)).sum();
            let p = weights[b - 1] * (1.0 - weights[b - 1]) / norm;
            Ok(AnalyticParams {
                p,
                q_gap: 1,
                psi: None,
                mu1: 0.5,
                model: MgfModel::smith(target)?,
            })
        }
        ProcessSpec::CompleteGraphWalk { .. } => unreachable!("normalized away"),
    }
}

/// A finite Markov chain with alias tables for every row.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    rows: Vec<WeightedAliasIndex<f64>>,
    initial: WeightedAliasIndex<f64>,
    target: usize,
}

impl MarkovChain {
    pub fn new(transition: Vec<Vec<f64>>, target: usize) -> Result<Self> {
        let k = transition.len();
        if k == 0 || target >= k {
            return domain("Markov chain: empty state space or target out of range");
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return domain(format!(
                    "Markov chain: row {i} has {} entries, need {k}",
                    row.len()
                ));
            }
            check_distribution(&format!("Markov chain row {i}"), row)?;
        }
        let stationary = stationary_distribution(&transition)?;
        let alias = |w: &[f64]| {
            WeightedAliasIndex::new(w.to_vec())
                .map_err(|e| Error::Domain(format!("Markov chain: alias table: {e}")))
        };
        let rows = transition.iter().map(|r| alias(r)).collect::<Result<_>>()?;
        let initial = alias(&stationary)?;
        Ok(Self {
            transition,
            stationary,
            rows,
            initial,
            target,
        })
    }

    pub fn from_spec(spec: &ProcessSpec) -> Result<Self> {
        spec.validate()?;
        match spec.normalized() {
            ProcessSpec::StickyMarkov { weights, rho } => {
                let ell = weights.len();
                let q_ell = weights[ell - 1];
                let mut t = vec![weights.clone(); ell];
                t[ell - 1] = weights
                    .iter()
                    .map(|w| w * (1.0 - rho) / (1.0 - q_ell))
                    .collect();
                t[ell - 1][ell - 1] = rho;
                Self::new(t, ell - 1)
            }
            ProcessSpec::StretchingMarkov {
                weights,
                rho0,
                rho1,
            } => {
                let ell = weights.len();
                let q_ell = weights[ell - 1];
                let rho = rho0 + rho1;
                let mut base = weights.clone();
                base.push(0.0);
                let mut t = vec![base; ell + 1];
                t[ell - 1] = weights
                    .iter()
                    .map(|w| w * (1.0 - rho) / (1.0 - q_ell))
                    .chain([0.0])
                    .collect();
                t[ell - 1][ell - 1] = rho0;
                t[ell - 1][ell] = rho1;
                t[ell] = vec![0.0; ell + 1];
                t[ell][ell - 1] = 1.0;
                Self::new(t, ell - 1)
            }
            other => domain(format!("{} is not a Markov chain", other.kind_name())),
        }
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn target(&self) -> usize {
        self.target
    }

    fn run(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut [u64]) -> u32 {
        let mut state = self.initial.sample(rng);
        let mut count = 0;
        for t in 0..n {
            if state == self.target {
                out[t / 64] |= 1 << (t % 64);
                count += 1;
            }
            if t + 1 < n {
                state = self.rows[state].sample(rng);
            }
        }
        count
    }
}

/// Solves `pi P = pi`, `sum pi = 1` by replacing one balance equation with
/// the normalization.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| {
        transition[j][i] - if i == j { 1.0 } else { 0.0 }
    });
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("stationary distribution: singular system".into()))?;
    if pi.iter().any(|&x| x < -1e-12) {
        return Err(Error::Numerical(format!(
            "stationary distribution has negative entries: {pi:?}"
        )));
    }
    let pi: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone)]
struct SmithSampler {
    symbols: WeightedAliasIndex<f64>,
    target: usize,
}

impl SmithSampler {
    fn next_symbol(&self, rng: &mut ChaCha8Rng, previous: usize) -> usize {
        loop {
            let s = self.symbols.sample(rng) + 1;
            if s != previous {
                return s;
            }
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut [u64]) -> u32 {
        let mut previous = 0;
        for _ in 0..SMITH_BURN_IN_BLOCKS {
            previous = self.next_symbol(rng, previous);
        }
        let (mut t, mut count) = (0, 0);
        while t < n {
            let symbol = self.next_symbol(rng, previous);
            let len = if rng.random::<f64>() < 1.0 / symbol as f64 {
                symbol + 1
            } else {
                1
            };
            if symbol == self.target {
                for s in t..(t + len).min(n) {
                    out[s / 64] |= 1 << (s % 64);
                    count += 1;
                }
            }
            t += len;
            previous = symbol;
        }
        count
    }
}

/// A prepared sampler for one [`ProcessSpec`].
#[derive(Debug, Clone)]
pub struct Simulator {
    engine: Engine,
}

#[derive(Debug, Clone)]
enum Engine {
    Markov(MarkovChain),
    Smith(SmithSampler),
}

impl Simulator {
    pub fn new(spec: &ProcessSpec) -> Result<Self> {
        spec.validate()?;
        let engine = match spec {
            ProcessSpec::Smith { weights, target } => Engine::Smith(SmithSampler {
                symbols: WeightedAliasIndex::new(weights.clone())
                    .map_err(|e| Error::Domain(format!("smith: alias table: {e}")))?,
                target: *target as usize,
            }),
            _ => Engine::Markov(MarkovChain::from_spec(spec)?),
        };
        Ok(Self { engine })
    }

    /// Writes trajectory `index` of stream `seed` into `out`, returning its
    /// occurrence count. `out` must be zeroed and hold `n` bits.
    pub fn trajectory(&self, seed: u64, index: u64, n: usize, out: &mut [u64]) -> u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        match &self.engine {
            Engine::Markov(chain) => chain.run(&mut rng, n, out),
            Engine::Smith(s) => s.run(&mut rng, n, out),
        }
    }
}

/// Bit-packed occurrence sequences of `count` trajectories of length `n`;
/// bit `t % 64` of word `t / 64` is `I_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryBatch {
    n: usize,
    seed: u64,
    first_index: u64,
    words_per_trajectory: usize,
    words: Vec<u64>,
    counts: Vec<u32>,
}

impl TrajectoryBatch {
    pub(crate) fn from_parts(n: usize, seed: u64, first_index: u64, words: Vec<u64>) -> Self {
        let wpt = words_per_trajectory(n);
        let counts = words
            .chunks(wpt)
            .map(|w| w.iter().map(|x| x.count_ones()).sum())
            .collect();
        Self {
            n,
            seed,
            first_index,
            words_per_trajectory: wpt,
            words,
            counts,
        }
    }

    /// Builds a batch from explicit 0/1 sequences of equal length.
    pub fn from_sequences(sequences: &[Vec<bool>], seed: u64) -> Result<Self> {
        let n = sequences.first().map_or(0, |s| s.len());
        if n == 0 || sequences.iter().any(|s| s.len() != n) {
            return domain("sequences must be non-empty and of equal length");
        }
        let wpt = words_per_trajectory(n);
        let mut words = vec![0u64; wpt * sequences.len()];
        for (i, s) in sequences.iter().enumerate() {
            for (t, &bit) in s.iter().enumerate() {
                if bit {
                    words[i * wpt + t / 64] |= 1 << (t % 64);
                }
            }
        }
        Ok(Self::from_parts(n, seed, 0, words))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.counts.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the first trajectory within its seed's stream family.
    pub fn first_index(&self) -> u64 {
        self.first_index
    }

    /// `N_n` for every trajectory.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn trajectory(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_trajectory..(i + 1) * self.words_per_trajectory]
    }

    pub fn get(&self, i: usize, t: usize) -> bool {
        self.trajectory(i)[t / 64] >> (t % 64) & 1 == 1
    }

    /// Occurrence times of trajectory `i`, ascending.
    pub fn occurrences(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.trajectory(i)
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| {
                let mut bits = word;
                std::iter::from_fn(move || {
                    (bits != 0).then(|| {
                        let b = bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        w * 64 + b
                    })
                })
            })
    }

    /// `N_m` over the first `m` positions of trajectory `i`.
    pub fn prefix_count(&self, i: usize, m: usize) -> u32 {
        let m = m.min(self.n);
        let words = self.trajectory(i);
        let full: u32 = words[..m / 64].iter().map(|w| w.count_ones()).sum();
        let rest = m % 64;
        if rest == 0 {
            full
        } else {
            full + (words[m / 64] & ((1u64 << rest) - 1)).count_ones()
        }
    }
}

fn words_per_trajectory(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

fn check_shape(n: usize, count: usize) -> Result<()> {
    if n == 0 || count == 0 {
        return domain(format!(
            "simulate: need n >= 1 and count >= 1 (got n={n}, count={count})"
        ));
    }
    Ok(())
}

/// `count` independent trajectories of length `n`, in parallel when the
/// `parallel` feature is on.
pub fn simulate(spec: &ProcessSpec, n: usize, count: usize, seed: u64) -> Result<TrajectoryBatch> {
    simulate_chunk(spec, n, 0, count, seed)
}

/// Trajectories `first_index .. first_index + count` of the stream family
/// `seed`; concatenating consecutive chunks reproduces one large batch.
pub fn simulate_chunk(
    spec: &ProcessSpec,
    n: usize,
    first_index: u64,
    count: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    check_shape(n, count)?;
    let sim = Simulator::new(spec)?;
    let wpt = words_per_trajectory(n);
    let mut words = vec![0u64; wpt * count];
    let run = |(i, out): (usize, &mut [u64])| {
        sim.trajectory(seed, first_index + i as u64, n, out);
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        words.par_chunks_mut(wpt).enumerate().for_each(run);
    }
    #[cfg(not(feature = "parallel"))]
    words.chunks_mut(wpt).enumerate().for_each(run);
    Ok(TrajectoryBatch::from_parts(n, seed, first_index, words))
}

/// Single-threaded reference for [`simulate`]; produces identical batches.
pub fn simulate_sequential(
    spec: &ProcessSpec,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    check_shape(n, count)?;
    let sim = Simulator::new(spec)?;
    let wpt = words_per_trajectory(n);
    let mut words = vec![0u64; wpt * count];
    for (i, out) in words.chunks_mut(wpt).enumerate() {
        sim.trajectory(seed, i as u64, n, out);
    }
    Ok(TrajectoryBatch::from_parts(n, seed, 0, words))
}
