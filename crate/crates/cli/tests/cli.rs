use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = "\
# geometric residuals, raw parameters
command=bound
p=0.1
q=1
psi=1.08
mu1=1
model=geometric
model_rho=0.5
epsilon=0.05
n=100..1000:100
";

const STICKY: &str = "\
process=sticky_markov
ell=10
q_ell=0.1
rho=0.5
epsilon=0.05,0.1
n=100,200
mc_count=2000
seed=11
";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cluster-ldp"))
        .current_dir(dir)
        .arg("--config")
        .arg(&path)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &[u8], name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_reader(csv);
    let idx = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn minimal_bound_has_ten_decreasing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), MINIMAL, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let totals: Vec<f64> = column(&o.stdout, "total")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 10);
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
    assert_eq!(column(&o.stdout, "schema")[0], "bound/v1");
}

#[test]
fn epsilon_outside_range_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), MINIMAL, &["--epsilon", "0.95"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1 - p"), "{}", stderr(&o));
}

#[test]
fn singular_mgf_reports_lambda_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MINIMAL
        .replace("model_rho=0.5", "model_rho=0.9")
        .replace("mu1=1", "mu1=9");
    let o = run(dir.path(), &cfg, &["--epsilon", "0.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let lambda_s = (1.0f64 / 0.9).ln();
    let err = stderr(&o);
    assert!(err.contains("lambda_s"), "{err}");
    let reported: f64 = err
        .rsplit("lambda_s = ")
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((reported - lambda_s).abs() < 1e-15, "{err}");
}

#[test]
fn empty_epsilon_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), MINIMAL, &["--epsilon", ""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`epsilon`"), "{}", stderr(&o));
    let o = run(
        dir.path(),
        &MINIMAL.replace("command=bound", "command=sweep"),
        &["--epsilon", ""],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rejected_configs_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("{MINIMAL}colour=blue\n"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`colour`"), "{}", stderr(&o));
    let o = run(dir.path(), MINIMAL, &["--seed", "minus-one"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), MINIMAL, &["--n", "50,60", "--p", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(column(&o.stdout, "n"), ["50", "60"]);
    assert_eq!(column(&o.stdout, "p"), ["0.2", "0.2"]);
}

#[test]
fn verify_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let o = run(dir.path(), STICKY, &["--command", "verify", "--out", name]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(column(&outputs[0], "pass"), ["true"; 4]);
    let o = run(dir.path(), STICKY, &["--command", "verify", "--seed", "12"]);
    assert_ne!(o.stdout, outputs[0]);
}

#[test]
fn verify_needs_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        STICKY,
        &["--command", "verify", "--mc-count", "0"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`mc_count`"), "{}", stderr(&o));
}

#[test]
fn smith_needs_psi_or_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let smith = "process=smith\nweights=0.2,0.3,0.5\ntarget=3\nepsilon=0.1\nn=300\nmc_count=300\n";
    let o = run(dir.path(), smith, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`psi`"), "{}", stderr(&o));
    let o = run(dir.path(), &format!("{smith}psi=estimate\n"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("grade"), "{}", stderr(&o));
}

#[test]
fn sweep_svg_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{STICKY}command=sweep\n").replace("epsilon=0.05,0.1", "epsilon=auto");
    let o = run(dir.path(), &cfg, &["--svg", "true", "--out", "sweep.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count()
            >= 6
    );
    let ratio: f64 = column(
        &fs::read(dir.path().join("sweep.csv")).unwrap(),
        "chain4_ratio",
    )[0]
    .parse()
    .unwrap();
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn lemma_report_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    // the lower bound with its d <= 1 switch fails for d between 1 and 2
    let o = run(dir.path(), "command=lemmas\n", &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("lemma=lower:"), "{}", stderr(&o));
    let o = run(dir.path(), "command=lemmas\nlemma_lower=corrected\n", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = String::from_utf8(o.stdout).unwrap();
    assert_eq!(rows.lines().count(), 1 + 8 * 7);
    let q1_sharp = rows
        .lines()
        .find(|l| l.starts_with("lemmas/v1,1,sharproots,"))
        .unwrap();
    assert!(q1_sharp.contains(",20,20,20,"), "{q1_sharp}");
}

#[test]
fn malformed_lemma_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        "grid_q_min=0",
        "grid_d_min=-1",
        "grid_d_points=0",
        "grid_q_min=4\ngrid_q_max=3",
    ] {
        let o = run(dir.path(), &format!("command=lemmas\n{bad}\n"), &[]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", stderr(&o));
        assert!(stderr(&o).contains("`grid_"), "{}", stderr(&o));
    }
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, MINIMAL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cluster-ldp"))
        .arg("--config")
        .arg(&path)
        .env("CLUSTER_LDP_THREADS", "zero")
        .output()
        .unwrap();
    if cfg!(feature = "parallel") {
        assert_eq!(o.status.code(), Some(2));
    }
}
