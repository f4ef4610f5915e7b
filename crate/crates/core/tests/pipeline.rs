use cluster_ldp::sim::{
    analytic_params, decompose_clusters, estimate_psi, estimate_tail, estimate_tail_at,
    residual_sizes, simulate, ProcessSpec, PsiOptions,
};
use cluster_ldp::{compute_bound, MgfModel};

fn sticky() -> ProcessSpec {
    let mut weights = vec![0.1; 10];
    weights[9] = 0.1;
    ProcessSpec::StickyMarkov { weights, rho: 0.5 }
}

#[test]
fn sticky_bound_dominates_monte_carlo() {
    let spec = sticky();
    let a = analytic_params(&spec).unwrap();
    let batch = simulate(&spec, 300, 20_000, 7).unwrap();
    for &eps in &[0.05, 0.1] {
        let params = a.cluster_params(eps).unwrap();
        let report = compute_bound(&params, &a.model, 300, None).unwrap();
        for &n in &[100usize, 200, 300] {
            let tail = estimate_tail_at(&batch, n, a.p, eps).unwrap();
            let bound = report.evaluate(n as u64).total;
            assert!(
                tail.ci_upper <= bound,
                "n={n} eps={eps}: {tail:?} vs {bound}"
            );
        }
    }
}

#[test]
fn empirical_model_recovers_geometric_residuals() {
    let spec = sticky();
    let batch = simulate(&spec, 4000, 200, 8).unwrap();
    let d = decompose_clusters(&batch, 1).unwrap();
    let model = MgfModel::empirical(residual_sizes(&d)).unwrap();
    // rho = 1/2: mean residual 1, second moment 3
    assert!((model.mu1() - 1.0).abs() < 0.05, "{}", model.mu1());
    assert!(
        (model.second_moment() - 3.0).abs() < 0.3,
        "{}",
        model.second_moment()
    );
    let geo = MgfModel::geometric(0.5).unwrap();
    let rel = (model.eval(0.2).unwrap() / geo.eval(0.2).unwrap() - 1.0).abs();
    assert!(rel < 0.02, "{rel}");
}

#[test]
fn smith_bound_with_estimated_psi() {
    let spec = ProcessSpec::Smith {
        weights: vec![0.2, 0.3, 0.5],
        target: 3,
    };
    let a = analytic_params(&spec).unwrap();
    let batch = simulate(&spec, 3000, 400, 9).unwrap();
    let d = decompose_clusters(&batch, 1).unwrap();
    let psi = estimate_psi(&d, &batch, &PsiOptions::default()).unwrap();
    assert!(psi.value >= 1.0 - 4.0 * psi.se, "{psi:?}");

    // the observed residual from a random occurrence is size biased: its
    // mean is (b + 1)/4 rather than the block-level 1/2
    let residuals = residual_sizes(&d);
    let mean = residuals.iter().map(|&r| r as f64).sum::<f64>() / residuals.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "{mean}");

    let params = a.cluster_params_with_psi(psi.value.max(1.0), 0.1).unwrap();
    let report = compute_bound(&params, &a.model, 3000, None).unwrap();
    assert!(report.value().total.is_finite());
    let tail = estimate_tail(&batch, a.p, 0.1).unwrap();
    assert!(tail.estimate <= 1.0);
}
