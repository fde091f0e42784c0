use falsify_core::dataset::{read_csv, simulate, write_csv, PerStudy};
use falsify_core::harness::presets::preset;
use falsify_core::harness::{analyze_cohort, run_single, ExperimentConfig, KindOutcome, NuisanceMode, Truth};
use falsify_core::SignalKind;

fn small(name: &str) -> ExperimentConfig {
    let mut c = preset(name).unwrap();
    c.dgp.n = PerStudy { rct: 200, os: 300 };
    if let Some(cens) = c.dgp.censoring.as_mut() {
        for arm in [&mut cens.rct, &mut cens.os] {
            arm.control.lambda = 0.3;
            arm.treated.lambda = 0.3;
        }
    }
    c.analysis.bootstrap_b = 30;
    c.analysis.signal_kinds = vec![SignalKind::Cdr, SignalKind::Ipcw];
    c.analysis.nuisance_options.cox.ridge = Some(0.1);
    c.analysis.nuisance_options.logistic.ridge = Some(0.1);
    c
}

#[test]
fn csv_round_trip_preserves_the_analysis() {
    let config = small("setup1");
    let cohort = simulate(&config.dgp, 5).unwrap().cohort;
    let mut buf = Vec::new();
    write_csv(&cohort, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, cohort);

    let direct = analyze_cohort(&config.analysis, None, &cohort, 9).unwrap();
    let loaded = analyze_cohort(&config.analysis, None, &back, 9).unwrap();
    assert_eq!(direct, loaded);
    for kind in [SignalKind::Cdr, SignalKind::Ipcw] {
        assert!(matches!(direct.1[&kind], KindOutcome::Tested { .. }), "{kind}: {:?}", direct.1[&kind]);
    }
}

#[test]
fn replications_are_reproducible() {
    let config = small("setup3");
    let a = run_single(&config, 2).unwrap();
    let b = run_single(&config, 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_mode_needs_the_truth() {
    let mut config = small("setup1");
    config.analysis.nuisance_mode = NuisanceMode::Oracle;
    let sim = simulate(&config.dgp, 1).unwrap();
    let err = analyze_cohort(&config.analysis, None, &sim.cohort, 0).unwrap_err();
    assert!(err.is_config());
    let truth = Truth {
        dgp: &config.dgp,
        latents: Some(&sim.latents),
    };
    let (_, outcomes) = analyze_cohort(&config.analysis, Some(truth), &sim.cohort, 0).unwrap();
    assert!(outcomes.values().all(|o| matches!(o, KindOutcome::Tested { .. })));
}
