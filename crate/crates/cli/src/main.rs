use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cluster_ldp_cli::{run, CliError, KeyValues, RunConfig};

/// Large-deviation bounds for clustered occurrence counts.
///
/// Exit status: 0 success, 1 a verification or lemma row failed,
/// 2 invalid input, 3 numerical or estimation failure.
#[derive(Debug, Parser)]
#[command(name = "cluster-ldp", version)]
struct Args {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bound, verify, lemmas or sweep.
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart (sweep only), next to --out or as sweep.svg.
    #[arg(long)]
    svg: Option<String>,
    #[arg(long)]
    mc_count: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// Comma-separated list, `log:LO:HI:COUNT` or `auto`.
    #[arg(long)]
    epsilon: Option<String>,
    /// Comma-separated list or `A..B:STEP`.
    #[arg(long)]
    n: Option<String>,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut kv = match &args.config {
        Some(path) => KeyValues::parse(&fs::read_to_string(path)?)?,
        None => KeyValues::default(),
    };
    let overrides = [
        ("command", &args.command),
        ("seed", &args.seed),
        ("svg", &args.svg),
        ("mc_count", &args.mc_count),
        ("p", &args.p),
        ("q", &args.q),
        ("rho", &args.rho),
        ("epsilon", &args.epsilon),
        ("n", &args.n),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            kv.set(key, v.clone());
        }
    }
    if let Some(out) = &args.out {
        kv.set("out", out.to_string_lossy());
    }
    Ok(RunConfig::from_key_values(&kv)?)
}

#[cfg(feature = "parallel")]
fn configure_threads() -> Result<(), CliError> {
    use cluster_ldp_cli::config::ConfigError;

    let Ok(v) = std::env::var("CLUSTER_LDP_THREADS") else {
        return Ok(());
    };
    let threads: usize = v.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        ConfigError::new(
            "CLUSTER_LDP_THREADS",
            format!("expected a positive integer, found `{v}`"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| ConfigError::new("CLUSTER_LDP_THREADS", e.to_string()))?;
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> Result<(), CliError> {
    Ok(())
}

fn main_inner(args: &Args) -> Result<bool, CliError> {
    configure_threads()?;
    let cfg = load(args)?;
    let out = run(&cfg)?;
    match &cfg.out {
        Some(path) => fs::write(path, &out.csv)?,
        None => io::stdout().write_all(out.csv.as_bytes())?,
    }
    if let Some(svg) = &out.svg {
        let path = cfg
            .out
            .as_ref()
            .map_or_else(|| PathBuf::from("sweep.svg"), |p| p.with_extension("svg"));
        fs::write(&path, svg)?;
        eprintln!("wrote {}", path.display());
    }
    for line in &out.summary {
        eprintln!("{line}");
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
