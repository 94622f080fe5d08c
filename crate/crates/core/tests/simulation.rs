use riskdiv_core::pricing::loading_from_distribution;
use riskdiv_core::{
    convergence_study, empirical_distribution, loss_count_distribution, risk_loading_per_policy,
    simulate, LossSource, ModelSpec, PortfolioParams, RiskMeasureSpec, SimulationConfig,
    TvarConvention,
};

#[test]
fn simulated_pmf_tracks_exact_for_every_model() {
    let cfg = SimulationConfig::new(400_000, 11);
    for model in [
        ModelSpec::iid(1.0 / 6.0).unwrap(),
        ModelSpec::common_shock(1.0 / 6.0, 0.5, 0.1).unwrap(),
        ModelSpec::per_exposure_shock(1.0 / 6.0, 0.5, 0.1).unwrap(),
    ] {
        let exact = loss_count_distribution(&model, 5, 6).unwrap();
        let h = simulate(&model, 5, 6, &cfg).unwrap();
        let emp = empirical_distribution(&h).unwrap();
        for (k, m) in exact.iter() {
            let se = (m * (1.0 - m) / 400_000.0).sqrt();
            assert!(
                (emp.pmf_at(k) - m).abs() <= 5.0 * se + 1e-6,
                "{model:?} k={k}"
            );
        }
    }
}

#[test]
fn simulated_loading_within_bootstrap_error() {
    let model = ModelSpec::per_exposure_shock(1.0 / 6.0, 0.5, 0.05).unwrap();
    let params = PortfolioParams::default().with_policies(50);
    let m = RiskMeasureSpec::tvar(0.99)
        .unwrap()
        .with_convention(TvarConvention::QuantileAverage);
    let exact = risk_loading_per_policy(&model, &params, &m, &LossSource::exact()).unwrap();
    let mc = risk_loading_per_policy(
        &model,
        &params,
        &m,
        &LossSource::monte_carlo(SimulationConfig::new(300_000, 5)),
    )
    .unwrap();
    let se = mc.standard_error.unwrap();
    assert!(se > 0.0);
    assert!(
        (mc.loading - exact.loading).abs() <= 4.0 * se,
        "{mc:?} vs {exact:?}"
    );
}

#[test]
fn convergence_budgets_are_prefixes() {
    let model = ModelSpec::per_exposure_shock(1.0 / 6.0, 0.5, 0.01).unwrap();
    let params = PortfolioParams::default().with_policies(20);
    let m = [RiskMeasureSpec::var(0.99).unwrap()];
    let rows = convergence_study(&model, &params, &[30_000, 60_000], &m, 3, 10_000).unwrap();
    assert_eq!(rows.len(), 2);
    // the first 30k paths of the larger run are the smaller run
    let small = simulate(
        &model,
        20,
        6,
        &SimulationConfig::new(30_000, 3).with_block_size(10_000),
    )
    .unwrap();
    let d = empirical_distribution(&small).unwrap();
    assert_eq!(
        rows[0].loadings[0],
        loading_from_distribution(&d, &model, &params, &m[0]).unwrap()
    );
}
