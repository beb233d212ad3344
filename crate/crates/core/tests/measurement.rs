use std::sync::OnceLock;

use hrtf_core::dataset::{default_grid, great_circle_deg, synth_bundle, Direction, SubjectModel};
use hrtf_core::dsp::Sweep;
use hrtf_core::measure_sim::{
    frontal_sweep, qc_checks, session_to_sparse, simulate_session, ArmModel, GroundTruth, NoiseModel, Stop,
};
use proptest::prelude::*;

struct Fixture {
    model: SubjectModel,
    grid: Vec<Direction>,
    sweep: Sweep,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let grid = default_grid();
        let (_, models) = synth_bundle(1, &grid, 48_000.0, 5).unwrap();
        Fixture {
            model: models.into_iter().next().unwrap(),
            grid,
            sweep: Sweep::new(48_000.0).unwrap(),
        }
    })
}

fn mean_error(arm: &ArmModel, noise: NoiseModel, seed: u64) -> f64 {
    let f = fixture();
    let truth = GroundTruth::Synthetic { model: &f.model, grid: &f.grid };
    let stops = frontal_sweep(arm.alpha, 2.2);
    let s = simulate_session(&truth, arm, &stops, &noise, &f.sweep, seed).unwrap();
    session_to_sparse(&s, &f.sweep).unwrap_or_else(|e| panic!("seed {seed} {noise:?}: {e}")).mean_direction_error()
}

#[test]
fn direction_error_grows_with_imu_noise() {
    let arm = ArmModel::default();
    let means: Vec<f64> = [0.0, 1.0, 3.0]
        .iter()
        .map(|&sigma| {
            let noise = NoiseModel::new(sigma, f64::INFINITY, 0.0).unwrap();
            (0..20).map(|seed| mean_error(&arm, noise, seed)).sum::<f64>() / 20.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    assert!(means[2] > 2.0 * means[0], "{means:?}");
}

#[test]
fn calibration_ignores_overall_arm_size() {
    let f = fixture();
    let truth = GroundTruth::Synthetic { model: &f.model, grid: &f.grid };
    let base = ArmModel::new(0.18, 0.6, 0.22, 10.0).unwrap();
    let stops = frontal_sweep(base.alpha, 2.2);
    let run = |arm: &ArmModel| {
        let s = simulate_session(&truth, arm, &stops, &NoiseModel::none(), &f.sweep, 3).unwrap();
        session_to_sparse(&s, &f.sweep).unwrap()
    };
    let reference = run(&base);
    for k in [0.8, 1.25] {
        let scaled = run(&base.scaled(k));
        let (a, b) = (scaled.params, reference.params);
        assert!((a.alpha - b.alpha).abs() < 1e-6, "{a:?} {b:?}");
        assert!((a.r_sh - b.r_sh).abs() < 1e-9 && (a.r_z - b.r_z).abs() < 1e-9, "{a:?} {b:?}");
        assert_eq!(scaled.measurements.len(), reference.measurements.len());
        for (m, n) in scaled.measurements.iter().zip(&reference.measurements) {
            assert!(great_circle_deg(&m.direction, &n.direction) < 1e-6);
        }
    }
    let p = reference.params;
    assert!((p.r_sh - 0.3).abs() < 0.05 && (p.r_z - 0.22 / 0.6).abs() < 0.05, "{p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn full_stops_are_never_discarded(
        extra in proptest::collection::vec(0.0f64..2.0, 6),
        snr in 10.0f64..60.0,
        seed in 0u64..1000,
    ) {
        let f = fixture();
        let truth = GroundTruth::Synthetic { model: &f.model, grid: &f.grid };
        let stops: Vec<Stop> = frontal_sweep(0.0, 0.0)
            .into_iter()
            .step_by(13)
            .zip(&extra)
            .map(|(s, e)| Stop { dwell: f.sweep.duration + e, ..s })
            .collect();
        let noise = NoiseModel::new(1.0, snr, 0.5).unwrap();
        let s = simulate_session(&truth, &ArmModel::default(), &stops, &noise, &f.sweep, seed).unwrap();
        let qc = qc_checks(&s, &f.sweep).unwrap();
        prop_assert!(qc.discarded.is_empty(), "{:?}", qc.discarded);
    }
}
