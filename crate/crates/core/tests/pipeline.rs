use std::collections::BTreeMap;

use qtraj_core::maps::MapOptions;
use qtraj_core::maps::{ostensible_density_i, MapKind};
use qtraj_core::metrics::{appendix_b_ratio, ensemble_reduce, trajectory_errors, HistogramSpec};
use qtraj_core::quadrature::NormalRule;
use qtraj_core::records::{
    bin_record, homodyne_mean, sample_fine_increment, FineRecordSegment, RngStream,
};
use qtraj_core::setup::ExampleId;
use qtraj_core::trajectory::{ChainMode, ProtocolConfig, TrajectoryEngine, TrueStepper};

#[test]
fn records_do_not_depend_on_map_selection() {
    let setup = ExampleId::QubitFluorescence.setup(1.0).unwrap();
    let mut cfg = ProtocolConfig::desk();
    cfg.realizations = 3;
    let all = TrajectoryEngine::new(&setup, &cfg).unwrap();
    cfg.map_kinds = vec![MapKind::Ito];
    let one = TrajectoryEngine::new(&setup, &cfg).unwrap();
    for idx in 0..3 {
        let a = all.run(idx, ChainMode::SelfPropagating).unwrap();
        let b = one.run(idx, ChainMode::SelfPropagating).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.true_states, b.true_states);
        assert_eq!(
            a.coarse_states[&MapKind::Ito],
            b.coarse_states[&MapKind::Ito]
        );
    }
}

#[test]
fn zero_mean_records_have_unit_covariance() {
    let mut rng = RngStream::new(3, 0);
    let n = 100;
    let dt_fine = 1e-4;
    let bins = 100_000;
    let mut m = [0.0f64; 3];
    for _ in 0..bins {
        let samples: Vec<f64> = (0..n)
            .map(|_| sample_fine_increment(0.0, dt_fine, &mut rng))
            .collect();
        let rec = bin_record(&FineRecordSegment::new(0.0, dt_fine, samples).unwrap());
        m[0] += rec.i * rec.i;
        m[1] += rec.phi * rec.phi;
        m[2] += rec.i * rec.phi;
    }
    let m = m.map(|x| x / bins as f64);
    // Left-endpoint weights give E[I phi] = -√3/n exactly.
    let cross = -3f64.sqrt() / n as f64;
    assert!((m[0] - 1.0).abs() < 0.02, "{m:?}");
    assert!((m[1] - 1.0).abs() < 0.02, "{m:?}");
    assert!((m[2] - cross).abs() < 0.015, "{m:?}");
}

#[test]
fn finer_sampling_barely_moves_the_binned_record() {
    // Coarsen a fine record by summing pairs: the doubled-step record of the
    // same noise path gives the same I and nearly the same phi.
    let mut rng = RngStream::new(4, 0);
    let dt_fine = 1e-5;
    let n = 2000;
    let fine: Vec<f64> = (0..n)
        .map(|_| sample_fine_increment(0.5, dt_fine, &mut rng))
        .collect();
    let coarse: Vec<f64> = fine.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let a = bin_record(&FineRecordSegment::new(0.0, dt_fine, fine).unwrap());
    let b = bin_record(&FineRecordSegment::new(0.0, 2.0 * dt_fine, coarse).unwrap());
    assert!((a.i - b.i).abs() < 1e-12);
    assert!(
        (a.phi - b.phi).abs() < 10.0 * (dt_fine / a.dt_bin).sqrt(),
        "{} vs {}",
        a.phi,
        b.phi
    );
}

#[test]
fn ostensible_density_integrates_to_one() {
    let rule = NormalRule::new(60);
    let total = rule.expectation(|x| {
        ostensible_density_i(x) / qtraj_core::quadrature::standard_normal_density(x)
    });
    assert!((total - 1.0).abs() < 1e-10, "{total}");
}

#[test]
fn true_stepper_preserves_norm() {
    let setup = ExampleId::Spin32Lowering.setup(1.0).unwrap();
    let mut stepper = TrueStepper::new(&setup, 1e-4, MapOptions::default()).unwrap();
    let mut rng = RngStream::new(5, 0);
    let mut psi = setup.initial_state().as_slice().to_vec();
    for _ in 0..1000 {
        stepper.step(&mut psi, &mut rng);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12, "{norm}");
    }
    let state = qtraj_core::StateVector::new(psi).unwrap();
    assert!(homodyne_mean(&setup, &state).unwrap().is_finite());
}

#[test]
fn reanchored_ito_error_matches_accumulated_one_step_error() {
    // Re-anchored one-step errors, accumulated over the bins, predict the
    // self-propagating mean error to within the stated band.
    let setup = ExampleId::QubitFluorescence.setup(1.0).unwrap();
    let mut cfg = ProtocolConfig::desk();
    cfg.map_kinds = vec![MapKind::Ito];
    let engine = TrajectoryEngine::new(&setup, &cfg).unwrap();
    let spec = HistogramSpec::default();
    let mut mean = BTreeMap::new();
    for mode in [ChainMode::Reanchored, ChainMode::SelfPropagating] {
        let per: Vec<_> = engine
            .run_ensemble(mode, |run| trajectory_errors(run, MapKind::Ito).unwrap())
            .into_iter()
            .map(Result::unwrap)
            .collect();
        mean.insert(
            format!("{mode:?}"),
            ensemble_reduce(MapKind::Ito, &per, 0, &spec).unwrap().mtrae,
        );
    }
    let ratio =
        appendix_b_ratio(mean["Reanchored"], engine.n_bins(), mean["SelfPropagating"]).unwrap();
    assert!(
        (0.7..=1.3).contains(&ratio),
        "ratio {ratio}, means {mean:?}"
    );
}
