//! The four batch commands. Each returns its CSV as a string so callers can
//! write it wherever they like and tests can compare bytes.

use std::io;

use cluster_ldp::bound::{self, BoundReport};
use cluster_ldp::roots::{certify_root_bounds, solve_ap, LemmaCheck, RESIDUAL_TOLERANCE};
use cluster_ldp::sim::{
    analytic_params, decompose_clusters, estimate_psi, estimate_tail_at, simulate, PsiOptions,
    TrajectoryBatch,
};
use cluster_ldp::{compute_bound, ClusterParams, Error, InterpolationConstants, MgfModel};
use serde::Serialize;

use crate::config::{
    log_grid, Command, ConfigError, EpsilonSpec, LowerVariant, PsiSetting, RunConfig,
};
use crate::svg::{LineChart, Series};

pub const VERIFY_SCHEMA: &str = "verify/v1";
pub const LEMMAS_SCHEMA: &str = "lemmas/v1";
pub const SWEEP_SCHEMA: &str = "sweep/v1";
/// Points in the `epsilon=auto` sweep grid.
pub const AUTO_EPSILON_POINTS: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for misuse, 3 for numerical or estimation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() || matches!(e, Error::Estimation(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub csv: String,
    pub svg: Option<String>,
    /// Human-readable lines for stderr.
    pub summary: Vec<String>,
    /// False when a verification or certification row failed.
    pub passed: bool,
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput> {
    match cfg.command {
        Command::Bound => cmd_bound(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Lemmas => cmd_lemmas(cfg),
        Command::Sweep => cmd_sweep(cfg),
    }
}

/// Parameters after combining the process, the explicit model and overrides.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub p: f64,
    pub q: usize,
    pub psi: f64,
    pub mu1: f64,
    pub model: MgfModel,
    pub notes: Vec<String>,
}

impl Resolved {
    pub fn params(&self, epsilon: f64) -> Result<ClusterParams> {
        Ok(ClusterParams::new(
            self.p, self.q, self.psi, self.mu1, epsilon,
        )?)
    }

    fn p_star(&self) -> f64 {
        self.p * self.psi
    }
}

/// `batch` is used only when `psi=estimate`.
pub fn resolve(cfg: &RunConfig, batch: Option<&TrajectoryBatch>) -> Result<Resolved> {
    let o = &cfg.params;
    let mut notes = Vec::new();
    if let Some(spec) = &cfg.process {
        let a = analytic_params(spec)?;
        let q = o.q.unwrap_or(a.q_gap);
        let psi = match o.psi {
            Some(PsiSetting::Value(v)) => v,
            Some(PsiSetting::Estimate) => {
                let own;
                let batch = match batch {
                    Some(b) => b,
                    None => {
                        if cfg.mc_count == 0 {
                            return Err(ConfigError::new(
                                "mc_count",
                                "psi=estimate needs trajectories",
                            )
                            .into());
                        }
                        let n = *cfg.n.iter().max().unwrap();
                        own = simulate(spec, n, cfg.mc_count, cfg.seed)?;
                        &own
                    }
                };
                let est = estimate_psi(
                    &decompose_clusters(batch, q)?,
                    batch,
                    &PsiOptions::default(),
                )?;
                notes.push(format!(
                    "psi estimated as {:.6} (se {:.2e}, cell {:?}, grade {:?}); not a rigorous constant",
                    est.value, est.se, est.cell, est.grade
                ));
                est.value.max(1.0)
            }
            None => a.psi.ok_or_else(|| {
                ConfigError::new(
                    "psi",
                    "no closed form for this process; give a value or `estimate`",
                )
            })?,
        };
        Ok(Resolved {
            p: o.p.unwrap_or(a.p),
            q,
            psi,
            mu1: o.mu1.unwrap_or(a.mu1),
            model: cfg.model.clone().unwrap_or(a.model),
            notes,
        })
    } else {
        let model = cfg
            .model
            .clone()
            .ok_or_else(|| ConfigError::new("model", "required when no process is given"))?;
        let psi = match o.psi {
            Some(PsiSetting::Value(v)) => v,
            Some(PsiSetting::Estimate) => {
                return Err(ConfigError::new("psi", "`estimate` needs a process").into())
            }
            None => return Err(ConfigError::new("psi", "required when no process is given").into()),
        };
        Ok(Resolved {
            p: o.p
                .ok_or_else(|| ConfigError::new("p", "required when no process is given"))?,
            q: o.q
                .ok_or_else(|| ConfigError::new("q", "required when no process is given"))?,
            psi,
            mu1: o.mu1.unwrap_or_else(|| model.mu1()),
            model,
            notes,
        })
    }
}

/// The epsilon values a run covers.
pub fn epsilons(cfg: &RunConfig, r: &Resolved) -> Result<Vec<f64>> {
    let out = match &cfg.epsilon {
        EpsilonSpec::List(v) => v.clone(),
        &EpsilonSpec::Log { lo, hi, count } => log_grid(lo, hi, count),
        EpsilonSpec::Auto => {
            let ps = r.p_star();
            // stay inside eps < 1 - p and lambda0 < lambda_s
            let singular = r.model.lambda_singularity() * ps * (1.0 + 2.0 * r.mu1);
            let hi = (4.0 * ps).min(0.99 * (1.0 - r.p)).min(0.99 * singular);
            let lo = ps / 100.0;
            if hi.is_nan() || hi <= lo {
                return Err(
                    ConfigError::new("epsilon", "auto grid is empty for these parameters").into(),
                );
            }
            log_grid(lo, hi, AUTO_EPSILON_POINTS)
        }
    };
    if out.is_empty() {
        return Err(ConfigError::new("epsilon", "empty list").into());
    }
    Ok(out)
}

fn reports(cfg: &RunConfig, r: &Resolved) -> Result<Vec<BoundReport>> {
    let n_max = *cfg.n.iter().max().unwrap() as u64;
    epsilons(cfg, r)?
        .into_iter()
        .map(|eps| Ok(compute_bound(&r.params(eps)?, &r.model, n_max, None)?))
        .collect()
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(Error::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per `(epsilon, n)`.
pub fn cmd_bound(cfg: &RunConfig) -> Result<CommandOutput> {
    let r = resolve(cfg, None)?;
    let rows: Vec<_> = reports(cfg, &r)?
        .iter()
        .flat_map(|rep| cfg.n.iter().map(move |&n| rep.csv_row(n as u64)))
        .collect();
    let mut buf = Vec::new();
    bound::write_csv(&rows, &mut buf)?;
    let mut summary = r.notes.clone();
    summary.push(format!("bound: {} rows", rows.len()));
    Ok(CommandOutput {
        csv: String::from_utf8(buf).expect("csv output is utf-8"),
        svg: None,
        summary,
        passed: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub schema: &'static str,
    pub process: &'static str,
    pub n: usize,
    pub epsilon: f64,
    pub threshold: u64,
    pub hits: u64,
    pub count: u64,
    pub estimate: f64,
    pub ci_upper: f64,
    pub bound: f64,
    pub bernstein: f64,
    pub pass: bool,
}

/// Simulates once at the largest horizon and reads every smaller horizon
/// off the prefixes.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CommandOutput> {
    let spec = cfg
        .process
        .as_ref()
        .ok_or_else(|| ConfigError::new("process", "verify needs a process"))?;
    if cfg.mc_count == 0 {
        return Err(ConfigError::new("mc_count", "must be positive").into());
    }
    let n_max = *cfg.n.iter().max().unwrap();
    let batch = simulate(spec, n_max, cfg.mc_count, cfg.seed)?;
    let r = resolve(cfg, Some(&batch))?;
    let mut rows = Vec::new();
    for rep in reports(cfg, &r)? {
        let eps = rep.params.epsilon();
        for &n in &cfg.n {
            let tail = estimate_tail_at(&batch, n, r.p, eps)?;
            let b = rep.evaluate(n as u64);
            rows.push(VerifyRow {
                schema: VERIFY_SCHEMA,
                process: spec.kind_name(),
                n,
                epsilon: eps,
                threshold: tail.threshold,
                hits: tail.hits,
                count: tail.count,
                estimate: tail.estimate,
                ci_upper: tail.ci_upper,
                bound: b.total,
                bernstein: b.bernstein,
                pass: tail.ci_upper <= b.total,
            });
        }
    }
    let failed: Vec<&VerifyRow> = rows.iter().filter(|r| !r.pass).collect();
    let mut summary = r.notes.clone();
    summary.push(format!(
        "verify: {}/{} rows pass ({} trajectories, seed {})",
        rows.len() - failed.len(),
        rows.len(),
        cfg.mc_count,
        cfg.seed
    ));
    for f in &failed {
        summary.push(format!(
            "FAIL n={} epsilon={}: ci_upper {:e} > bound {:e}",
            f.n, f.epsilon, f.ci_upper, f.bound
        ));
    }
    Ok(CommandOutput {
        csv: csv_string(&rows)?,
        svg: None,
        summary,
        passed: failed.is_empty(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub schema: &'static str,
    pub q: usize,
    pub lemma: &'static str,
    pub cases: usize,
    pub passed: usize,
    pub vacuous: usize,
    pub pass_rate: f64,
    /// Smallest relative margin; empty when every case was vacuous.
    pub worst_slack: Option<f64>,
    pub worst_d: Option<f64>,
    /// Whether this row decides the overall outcome.
    pub gating: bool,
}

struct Tally {
    lemma: &'static str,
    gating: bool,
    cases: usize,
    passed: usize,
    vacuous: usize,
    worst: Option<(f64, f64)>,
}

impl Tally {
    fn new(lemma: &'static str, gating: bool) -> Self {
        Tally {
            lemma,
            gating,
            cases: 0,
            passed: 0,
            vacuous: 0,
            worst: None,
        }
    }

    fn add(&mut self, check: LemmaCheck, d: f64) {
        self.cases += 1;
        self.passed += usize::from(check.holds);
        if check.vacuous {
            self.vacuous += 1;
        } else if self.worst.is_none_or(|(s, _)| check.slack < s) {
            self.worst = Some((check.slack, d));
        }
    }

    fn row(&self, q: usize) -> LemmaRow {
        LemmaRow {
            schema: LEMMAS_SCHEMA,
            q,
            lemma: self.lemma,
            cases: self.cases,
            passed: self.passed,
            vacuous: self.vacuous,
            pass_rate: self.passed as f64 / self.cases as f64,
            worst_slack: self.worst.map(|w| w.0),
            worst_d: self.worst.map(|w| w.1),
            gating: self.gating,
        }
    }
}

/// Certifies the root-location lemmas over the configured `(q, d)` grid.
pub fn cmd_lemmas(cfg: &RunConfig) -> Result<CommandOutput> {
    let ds = cfg.grid.d_values();
    let printed = cfg.lower == LowerVariant::Printed;
    let mut rows = Vec::new();
    for q in cfg.grid.q_min..=cfg.grid.q_max {
        let mut t = [
            Tally::new("realproot", true),
            Tally::new("sharproots", true),
            Tally::new("secondary", true),
            Tally::new("lower", printed),
            Tally::new("lower_corrected", !printed),
            Tally::new("residuals", true),
            Tally::new("vieta", true),
        ];
        for &d in &ds {
            let c = certify_root_bounds(&solve_ap(q, d)?);
            t[0].add(c.realproot, d);
            t[1].add(c.sharproots, d);
            t[2].add(c.secondary, d);
            t[3].add(c.lower, d);
            t[4].add(c.lower_corrected, d);
            let limit = RESIDUAL_TOLERANCE * d.max(1.0);
            t[5].add(
                LemmaCheck {
                    holds: c.residuals_ok,
                    vacuous: false,
                    slack: 1.0 - c.max_residual / limit,
                },
                d,
            );
            t[6].add(
                LemmaCheck {
                    holds: c.vieta_ok,
                    vacuous: false,
                    slack: if c.vieta_ok { 0.0 } else { -1.0 },
                },
                d,
            );
        }
        rows.extend(t.iter().map(|t| t.row(q)));
    }
    let failing: Vec<&LemmaRow> = rows.iter().filter(|r| r.passed < r.cases).collect();
    let passed = failing.iter().all(|r| !r.gating);
    let mut summary = vec![format!(
        "lemmas: q in {}..={}, {} d values in [{:e}, {:e}], lower bound gated as {}",
        cfg.grid.q_min,
        cfg.grid.q_max,
        ds.len(),
        cfg.grid.d_min,
        cfg.grid.d_max,
        if printed { "printed" } else { "corrected" }
    )];
    for f in &failing {
        summary.push(format!(
            "{} q={} lemma={}: {}/{} pass, worst slack {:e} at d={}",
            if f.gating { "FAIL" } else { "note" },
            f.q,
            f.lemma,
            f.passed,
            f.cases,
            f.worst_slack.unwrap_or(f64::NAN),
            f.worst_d.unwrap_or(f64::NAN)
        ));
    }
    summary.push(format!(
        "lemmas: {}",
        if passed { "all pass" } else { "FAILED" }
    ));
    Ok(CommandOutput {
        csv: csv_string(&rows)?,
        svg: None,
        summary,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub schema: &'static str,
    pub epsilon: f64,
    pub n: usize,
    pub q_min: f64,
    pub r_min: f64,
    pub chain2: f64,
    pub chain3: f64,
    pub chain4: f64,
    /// `-eps^2 / (4 p* (theta0 + kappa1))`.
    pub quadratic_approx: f64,
    pub chain4_ratio: f64,
    pub bernstein_rate: f64,
    pub bound_total: f64,
    pub bernstein: f64,
    pub mc_estimate: Option<f64>,
    pub mc_ci_upper: Option<f64>,
}

pub fn quadratic_approx(params: &ClusterParams, consts: &InterpolationConstants) -> f64 {
    let eps = params.epsilon();
    -eps * eps / (4.0 * params.p_star() * (consts.theta0 + consts.kappa1))
}

/// Exponents across an epsilon grid at the first configured horizon.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutput> {
    let n = cfg.n[0];
    let batch = match &cfg.process {
        Some(spec) if cfg.mc_count > 0 => Some(simulate(spec, n, cfg.mc_count, cfg.seed)?),
        _ => None,
    };
    let r = resolve(cfg, batch.as_ref())?;
    let mut rows = Vec::new();
    for rep in reports(cfg, &r)? {
        let eps = rep.params.epsilon();
        let quad = quadratic_approx(&rep.params, &rep.consts);
        let v = rep.evaluate(n as u64);
        let tail = batch
            .as_ref()
            .map(|b| estimate_tail_at(b, n, r.p, eps))
            .transpose()?;
        rows.push(SweepRow {
            schema: SWEEP_SCHEMA,
            epsilon: eps,
            n,
            q_min: rep.q_min,
            r_min: rep.r_min,
            chain2: rep.chain[1],
            chain3: rep.chain[2],
            chain4: rep.chain[3],
            quadratic_approx: quad,
            chain4_ratio: rep.chain[3] / quad,
            bernstein_rate: rep.bernstein_rate,
            bound_total: v.total,
            bernstein: v.bernstein,
            mc_estimate: tail.map(|t| t.estimate),
            mc_ci_upper: tail.map(|t| t.ci_upper),
        });
    }
    let svg = cfg.svg.then(|| sweep_chart(&rows).render());
    let mut summary = r.notes.clone();
    summary.push(format!(
        "sweep: {} epsilon values at n={n}; chain4 ratio {:.4} at the smallest epsilon",
        rows.len(),
        rows.first().map_or(f64::NAN, |r| r.chain4_ratio)
    ));
    Ok(CommandOutput {
        csv: csv_string(&rows)?,
        svg,
        summary,
        passed: true,
    })
}

fn sweep_chart(rows: &[SweepRow]) -> LineChart {
    let series = |name: &str, f: &dyn Fn(&SweepRow) -> Option<f64>| Series {
        name: name.to_string(),
        points: rows
            .iter()
            .filter_map(|r| f(r).map(|y| (r.epsilon.log10(), y)))
            .collect(),
    };
    let mut all = vec![
        series("Q min", &|r| Some(r.q_min)),
        series("R min", &|r| Some(r.r_min)),
        series("chain 2", &|r| Some(r.chain2)),
        series("chain 3", &|r| Some(r.chain3)),
        series("chain 4", &|r| Some(r.chain4)),
        series("Bernstein", &|r| Some(r.bernstein_rate)),
    ];
    if rows.iter().any(|r| r.mc_estimate.is_some()) {
        all.push(series("MC ln(p)/n", &|r| {
            r.mc_estimate
                .filter(|&e| e > 0.0)
                .map(|e| e.ln() / r.n as f64)
        }));
    }
    LineChart {
        title: format!("Per-step exponent, n = {}", rows.first().map_or(0, |r| r.n)),
        x_label: "log10 epsilon".into(),
        y_label: "exponent per step".into(),
        series: all,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RunConfig {
        RunConfig::parse(
            "p=0.1\nq=1\npsi=1.08\nmu1=1\nmodel=geometric\nmodel_rho=0.5\nepsilon=0.05\nn=100..1000:100",
        )
        .unwrap()
    }

    #[test]
    fn bound_rows_decrease_in_n() {
        let out = cmd_bound(&minimal()).unwrap();
        let mut rdr = csv::Reader::from_reader(out.csv.as_bytes());
        let idx = rdr
            .headers()
            .unwrap()
            .iter()
            .position(|h| h == "total")
            .unwrap();
        let totals: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[idx].parse().unwrap())
            .collect();
        assert_eq!(totals.len(), 10);
        assert!(totals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn exit_codes_follow_error_class() {
        let mut cfg = minimal();
        cfg.epsilon = EpsilonSpec::List(vec![0.95]);
        assert_eq!(cmd_bound(&cfg).unwrap_err().exit_code(), 2);
        cfg.epsilon = EpsilonSpec::List(vec![]);
        assert_eq!(cmd_bound(&cfg).unwrap_err().exit_code(), 2);
        assert_eq!(CliError::Core(Error::Numerical("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Estimation("x".into())).exit_code(), 3);
    }

    #[test]
    fn raw_params_need_a_model() {
        let cfg = RunConfig::parse("p=0.1\nq=1\npsi=1\nepsilon=0.05").unwrap();
        match cmd_bound(&cfg).unwrap_err() {
            CliError::Config(e) => assert_eq!(e.key, "model"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q1_lower_rows_are_vacuous_free_and_sharproots_vacuous() {
        let mut cfg = RunConfig::parse("command=lemmas\ngrid_q_max=1").unwrap();
        cfg.lower = LowerVariant::Corrected;
        let out = cmd_lemmas(&cfg).unwrap();
        assert!(out.passed, "{:?}", out.summary);
        let sharp = out
            .csv
            .lines()
            .find(|l| l.contains(",sharproots,"))
            .unwrap();
        assert!(sharp.contains(",20,20,20,1.0,"), "{sharp}");
    }

    #[test]
    fn auto_sweep_approaches_quadratic_at_small_epsilon() {
        let mut cfg = minimal();
        cfg.epsilon = EpsilonSpec::Auto;
        cfg.svg = true;
        let out = cmd_sweep(&cfg).unwrap();
        let mut rdr = csv::Reader::from_reader(out.csv.as_bytes());
        let idx = rdr
            .headers()
            .unwrap()
            .iter()
            .position(|h| h == "chain4_ratio")
            .unwrap();
        let first: f64 = rdr.records().next().unwrap().unwrap()[idx].parse().unwrap();
        assert!((first - 1.0).abs() < 0.05, "{first}");
        assert!(out.svg.unwrap().contains("<polyline"));
    }
}
