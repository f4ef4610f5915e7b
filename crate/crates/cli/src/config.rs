//! Flat `key=value` run configuration. A file provides the base layer and
//! command-line flags override individual keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cluster_ldp::sim::{uniform_weights, ProcessSpec};
use cluster_ldp::MgfModel;

/// A configuration problem, always tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

const KNOWN_KEYS: &[&str] = &[
    "command",
    "process",
    "ell",
    "q_ell",
    "weights",
    "rho",
    "rho0",
    "rho1",
    "target",
    "p",
    "q",
    "psi",
    "mu1",
    "model",
    "model_rho",
    "model_b",
    "model_file",
    "epsilon",
    "n",
    "mc_count",
    "seed",
    "out",
    "svg",
    "grid_q_min",
    "grid_q_max",
    "grid_d_min",
    "grid_d_max",
    "grid_d_points",
    "lemma_lower",
];

/// Raw key/value pairs, in file order of precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::new(
                    format!("line {}", i + 1),
                    format!("expected key=value, found `{line}`"),
                ));
            };
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::new(k, "given more than once"));
            }
        }
        let kv = KeyValues(map);
        kv.check_known()?;
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn check_known(&self) -> Result<()> {
        match self.0.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::new(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::new(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str, context: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| ConfigError::new(key, format!("required for {context}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bound,
    Verify,
    Lemmas,
    Sweep,
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bound" => Ok(Command::Bound),
            "verify" => Ok(Command::Verify),
            "lemmas" => Ok(Command::Lemmas),
            "sweep" => Ok(Command::Sweep),
            _ => Err("expected one of bound, verify, lemmas, sweep".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiSetting {
    Value(f64),
    /// Estimate from the simulated batch.
    Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonSpec {
    List(Vec<f64>),
    /// `count` log-spaced values in `[lo, hi]`.
    Log {
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// Log grid over `[p*/100, 4p*]`, trimmed to the valid range.
    Auto,
}

/// Which variant of the lower modulus lemma the lemma report gates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerVariant {
    Printed,
    Corrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaGrid {
    pub q_min: usize,
    pub q_max: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub d_points: usize,
}

impl LemmaGrid {
    pub fn d_values(&self) -> Vec<f64> {
        log_grid(self.d_min, self.d_max, self.d_points)
    }
}

/// `count` points log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Parameters given directly instead of through a process.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamOverrides {
    pub p: Option<f64>,
    pub q: Option<usize>,
    pub psi: Option<PsiSetting>,
    pub mu1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub process: Option<ProcessSpec>,
    pub params: ParamOverrides,
    pub model: Option<MgfModel>,
    pub epsilon: EpsilonSpec,
    pub n: Vec<usize>,
    pub mc_count: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub grid: LemmaGrid,
    pub lower: LowerVariant,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.check_known()?;
        let command = kv.parsed("command")?.unwrap_or(Command::Bound);
        let process = parse_process(kv)?;
        let params = ParamOverrides {
            p: kv.parsed("p")?,
            q: kv.parsed("q")?,
            psi: match kv.get("psi") {
                None => None,
                Some("estimate") => Some(PsiSetting::Estimate),
                Some(_) => Some(PsiSetting::Value(kv.required("psi", "psi")?)),
            },
            mu1: kv.parsed("mu1")?,
        };
        let model = parse_model(kv)?;
        let epsilon = match kv.get("epsilon") {
            None => EpsilonSpec::List(Vec::new()),
            Some(v) => parse_epsilon(v)?,
        };
        let n = match kv.get("n") {
            None => vec![100],
            Some(v) => parse_n(v)?,
        };
        let grid = LemmaGrid {
            q_min: kv.parsed("grid_q_min")?.unwrap_or(1),
            q_max: kv.parsed("grid_q_max")?.unwrap_or(8),
            d_min: kv.parsed("grid_d_min")?.unwrap_or(1e-3),
            d_max: kv.parsed("grid_d_max")?.unwrap_or(10.0),
            d_points: kv.parsed("grid_d_points")?.unwrap_or(20),
        };
        check_grid(&grid)?;
        let lower = match kv.get("lemma_lower") {
            None | Some("printed") => LowerVariant::Printed,
            Some("corrected") => LowerVariant::Corrected,
            Some(v) => {
                return Err(ConfigError::new(
                    "lemma_lower",
                    format!("expected printed or corrected, found `{v}`"),
                ))
            }
        };
        Ok(RunConfig {
            command,
            process,
            params,
            model,
            epsilon,
            n,
            mc_count: kv.parsed("mc_count")?.unwrap_or(10_000),
            seed: kv.parsed("seed")?.unwrap_or(0),
            out: kv.get("out").map(PathBuf::from),
            svg: kv.parsed("svg")?.unwrap_or(false),
            grid,
            lower,
        })
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| ConfigError::new(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect()
}

fn parse_epsilon(v: &str) -> Result<EpsilonSpec> {
    if v == "auto" {
        return Ok(EpsilonSpec::Auto);
    }
    if let Some(rest) = v.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let bad = || ConfigError::new("epsilon", format!("expected log:LO:HI:COUNT, found `{v}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && count > 0) {
            return Err(ConfigError::new(
                "epsilon",
                "log grid needs 0 < LO <= HI and COUNT > 0",
            ));
        }
        return Ok(EpsilonSpec::Log { lo, hi, count });
    }
    Ok(EpsilonSpec::List(parse_list("epsilon", v)?))
}

/// `100,200,500` or `100..1000:100` (inclusive).
fn parse_n(v: &str) -> Result<Vec<usize>> {
    let out = if let Some((range, step)) = v.split_once(':') {
        let (a, b) = range
            .split_once("..")
            .ok_or_else(|| ConfigError::new("n", format!("expected A..B:STEP, found `{v}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| ConfigError::new("n", format!("cannot parse `{s}`: {e}")))
        };
        let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
        if step == 0 || b < a {
            return Err(ConfigError::new("n", "range needs A <= B and STEP > 0"));
        }
        (a..=b).step_by(step).collect()
    } else {
        parse_list("n", v)?
    };
    if out.is_empty() {
        return Err(ConfigError::new("n", "empty list"));
    }
    if out.contains(&0) {
        return Err(ConfigError::new("n", "horizons must be positive"));
    }
    Ok(out)
}

fn parse_process(kv: &KeyValues) -> Result<Option<ProcessSpec>> {
    let Some(kind) = kv.get("process") else {
        return Ok(None);
    };
    let weights = |kv: &KeyValues| -> Result<Vec<f64>> {
        if let Some(w) = kv.get("weights") {
            return parse_list("weights", w);
        }
        let ell: usize = kv.parsed("ell")?.unwrap_or(10);
        if ell < 2 {
            return Err(ConfigError::new("ell", "needs at least two symbols"));
        }
        match kv.parsed::<f64>("q_ell")? {
            None => Ok(uniform_weights(ell)),
            Some(q) => {
                let mut w = vec![(1.0 - q) / (ell - 1) as f64; ell];
                w[ell - 1] = q;
                Ok(w)
            }
        }
    };
    let spec = match kind {
        "sticky_markov" => ProcessSpec::StickyMarkov {
            weights: weights(kv)?,
            rho: kv.required("rho", "sticky_markov")?,
        },
        "complete_graph" => ProcessSpec::CompleteGraphWalk {
            ell: kv.required("ell", "complete_graph")?,
        },
        "stretching_markov" => ProcessSpec::StretchingMarkov {
            weights: weights(kv)?,
            rho0: kv.required("rho0", "stretching_markov")?,
            rho1: kv.required("rho1", "stretching_markov")?,
        },
        "smith" => ProcessSpec::Smith {
            weights: weights(kv)?,
            target: kv.required("target", "smith")?,
        },
        other => {
            return Err(ConfigError::new(
                "process",
                format!(
                    "unknown process `{other}`; expected sticky_markov, complete_graph, \
                     stretching_markov or smith"
                ),
            ))
        }
    };
    spec.validate()
        .map_err(|e| ConfigError::new("process", e.to_string()))?;
    Ok(Some(spec))
}

fn parse_model(kv: &KeyValues) -> Result<Option<MgfModel>> {
    let Some(kind) = kv.get("model") else {
        return Ok(None);
    };
    let wrap =
        |key: &'static str| move |e: cluster_ldp::Error| ConfigError::new(key, e.to_string());
    let model = match kind {
        "geometric" => MgfModel::geometric(kv.required("model_rho", "model=geometric")?)
            .map_err(wrap("model_rho"))?,
        "smith" => {
            MgfModel::smith(kv.required("model_b", "model=smith")?).map_err(wrap("model_b"))?
        }
        "empirical" => {
            let path: PathBuf = kv.required("model_file", "model=empirical")?;
            MgfModel::empirical_from_file(&path).map_err(wrap("model_file"))?
        }
        other => {
            return Err(ConfigError::new(
                "model",
                format!("unknown model `{other}`; expected geometric, smith or empirical"),
            ))
        }
    };
    Ok(Some(model))
}

fn check_grid(g: &LemmaGrid) -> Result<()> {
    if g.q_min == 0 {
        return Err(ConfigError::new("grid_q_min", "must be at least 1"));
    }
    if g.q_max < g.q_min {
        return Err(ConfigError::new("grid_q_max", "must be >= grid_q_min"));
    }
    if !(g.d_min > 0.0 && g.d_min.is_finite()) {
        return Err(ConfigError::new(
            "grid_d_min",
            "must be positive and finite",
        ));
    }
    if !(g.d_max >= g.d_min && g.d_max.is_finite()) {
        return Err(ConfigError::new(
            "grid_d_max",
            "must be finite and >= grid_d_min",
        ));
    }
    if g.d_points == 0 {
        return Err(ConfigError::new("grid_d_points", "must be positive"));
    }
    Ok(())
}
