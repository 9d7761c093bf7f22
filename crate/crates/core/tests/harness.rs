use intercept_core::assignment::T_INF;
use intercept_core::datagen::{build_dataset, DatagenConfig, GridAxis};
use intercept_core::dynamics::{Vec3, VehicleParams, VehicleState};
use intercept_core::harness::{
    build_cost_matrix_approx, build_cost_matrix_true, engagement_paths, evaluate, generate_engagements,
    render_svg, robustness_eval, TruthConfig,
};
use intercept_core::surrogate::ApproximatorSetup;
use intercept_core::{ApproximatorModel, Engagement, EngagementClass, SampleRanges, ScpConfig};

fn tiny_ranges() -> SampleRanges {
    let mut r = SampleRanges::default();
    r.r_x = GridAxis::new(-15_000.0, -5_000.0, 3);
    r.r_z = GridAxis::new(0.0, 30_000.0, 3);
    r.v_x = GridAxis::new(2_500.0, 3_500.0, 2);
    r.r_tc_x = GridAxis::new(5_000.0, 15_000.0, 2);
    r.r_tc_z = GridAxis::new(0.0, 30_000.0, 3);
    r.v_tc_x = GridAxis::new(-2_500.0, 3_500.0, 2);
    r
}

fn tiny_model(class: EngagementClass) -> ApproximatorModel {
    let params = VehicleParams::default();
    let config = DatagenConfig::new(class, tiny_ranges(), 3);
    let data = build_dataset(&config, &params, &ScpConfig::default(), 4).unwrap();
    let mut setup = ApproximatorSetup::for_class(class, 9);
    setup.classifier_train.epochs = 3;
    setup.regressor_train.epochs = 3;
    ApproximatorModel::train(&data.train, &setup).unwrap().0
}

fn pursuer(x: f64, z: f64) -> VehicleState {
    VehicleState::new(Vec3::new(x, 0.0, z), Vec3::new(3000.0, 0.0, 0.0))
}

#[test]
fn unreachable_target_gives_sentinel_column() {
    let far = VehicleState::new(Vec3::new(2_000_000.0, 0.0, 10_000.0), Vec3::new(3000.0, 0.0, 0.0));
    let near = VehicleState::new(Vec3::new(8_000.0, 0.0, 10_000.0), Vec3::new(-2000.0, 0.0, 0.0));
    let e = Engagement::new(
        EngagementClass::Maneuvering,
        vec![pursuer(-10_000.0, 10_000.0), pursuer(-9_000.0, 8_000.0)],
        vec![near, far],
    )
    .unwrap();
    let c = build_cost_matrix_true(&e, &VehicleParams::default(), &ScpConfig::default(), &TruthConfig::default())
        .unwrap();
    assert!(c.is_sentinel(0, 1) && c.is_sentinel(1, 1));
    assert!(c.get(0, 0) < T_INF && c.get(1, 0) < T_INF, "{c:?}");
}

#[test]
fn identical_pursuers_give_identical_rows() {
    let p = pursuer(-12_000.0, 15_000.0);
    let targets = vec![
        VehicleState::new(Vec3::new(6_000.0, 0.0, 12_000.0), Vec3::ZERO),
        VehicleState::new(Vec3::new(9_000.0, 0.0, 3_000.0), Vec3::ZERO),
    ];
    let e = Engagement::new(EngagementClass::Stationary, vec![p, p], targets).unwrap();
    let truth = TruthConfig {
        workers: 2,
        ..TruthConfig::default()
    };
    let c = build_cost_matrix_true(&e, &VehicleParams::default(), &ScpConfig::default(), &truth).unwrap();
    let rows: Vec<&[f64]> = c.rows().collect();
    assert_eq!(rows[0], rows[1]);
    let model = tiny_model(EngagementClass::Stationary);
    let a = build_cost_matrix_approx(&e, &model).unwrap();
    let rows: Vec<&[f64]> = a.rows().collect();
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn approx_build_rejects_other_class() {
    let model = tiny_model(EngagementClass::Stationary);
    let params = VehicleParams::default();
    let e = generate_engagements(2, 1, EngagementClass::Maneuvering, 1, &SampleRanges::default(), &params).unwrap();
    assert!(build_cost_matrix_approx(&e[0], &model).is_err());
}

#[test]
fn evaluation_is_deterministic_and_ordered() {
    let params = VehicleParams::default();
    let scp = ScpConfig::default();
    let model = tiny_model(EngagementClass::Stationary);
    let es = generate_engagements(3, 4, EngagementClass::Stationary, 21, &SampleRanges::default(), &params).unwrap();
    let a = evaluate(&es, &model, &params, &scp, &TruthConfig::default()).unwrap();
    let b = evaluate(&es, &model, &params, &scp, &TruthConfig { workers: 1, ..TruthConfig::default() }).unwrap();
    assert_eq!(a.engagements, 4);
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(x.truth_assignment, y.truth_assignment);
        assert_eq!(x.approx_assignment, y.approx_assignment);
        assert_eq!(x.b_true.to_bits(), y.b_true.to_bits());
        assert_eq!(x.b_approx.to_bits(), y.b_approx.to_bits());
        assert!(x.b_approx >= x.b_true);
    }
    if let Some(r) = a.mean_bottleneck_ratio {
        assert!(r > 1.0);
    }
}

#[test]
fn robustness_at_nominal_gain_reproduces_evaluate() {
    let params = VehicleParams::default();
    let scp = ScpConfig::default();
    let model = tiny_model(EngagementClass::Maneuvering);
    let es = generate_engagements(2, 2, EngagementClass::Maneuvering, 4, &SampleRanges::default(), &params).unwrap();
    let plain = evaluate(&es, &model, &params, &scp, &TruthConfig::default()).unwrap();
    let robust = robustness_eval(&es, &model, &params, &scp, &[3.0], 4).unwrap();
    assert_eq!(robust.len(), 1);
    let r = &robust[0];
    assert_eq!(r.feasible_count, plain.feasible_count);
    assert_eq!(r.matched_count, plain.matched_count);
    for (x, y) in r.outcomes.iter().zip(&plain.outcomes) {
        assert_eq!((x.b_true, x.b_approx), (y.b_true, y.b_approx));
    }
}

#[test]
fn robustness_rejects_stationary_engagements() {
    let params = VehicleParams::default();
    let model = tiny_model(EngagementClass::Stationary);
    let es = generate_engagements(2, 1, EngagementClass::Stationary, 1, &SampleRanges::default(), &params).unwrap();
    assert!(robustness_eval(&es, &model, &params, &ScpConfig::default(), &[4.0, 5.0], 1).is_err());
}

#[test]
fn plot_of_three_by_three_engagement() {
    let params = VehicleParams::default();
    let scp = ScpConfig::default();
    let es = generate_engagements(3, 1, EngagementClass::Maneuvering, 8, &SampleRanges::default(), &params).unwrap();
    let truth = TruthConfig::default();
    let c = build_cost_matrix_true(&es[0], &params, &scp, &truth).unwrap();
    let best = intercept_core::assignment::solve_bap(&c);
    let paths = engagement_paths(&es[0], &best.assignment, &params, &scp, &truth).unwrap();
    let svg = render_svg(&paths);
    assert_eq!(svg.matches(r#"<polyline class="pursuer""#).count(), 3);
    assert_eq!(svg.matches(r#"<polyline class="target""#).count(), 3);
    let hits = (0..3).filter(|&i| c.get(i, best.assignment.perm[i]) < T_INF).count();
    assert_eq!(svg.matches(r#"class="intercept""#).count(), hits);
}
