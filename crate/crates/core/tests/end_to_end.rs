use beamctl_core::config::{BeamConfig, Boundary};
use beamctl_core::modal::{random_fixture, ModalState};
use beamctl_core::verification::{null_control_experiment, ExperimentOptions, Verdict};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_controlled(cfg: &BeamConfig, data: &ModalState) {
    let r = null_control_experiment(cfg, data, &ExperimentOptions::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Controlled, "rho={} {r:?}", cfg.rho);
    assert!(r.final_relative <= 1e-6);
    assert!(r.oracle_final_relative.unwrap() <= 1e-6);
    // both paths integrate the same 2N-mode system; they must agree everywhere, spillover included
    assert!(r.oracle_deviation.unwrap() <= 1e-6, "deviation {:?}", r.oracle_deviation);
    assert!(r.spillover_relative.is_finite());
}

#[test]
fn every_regime_with_random_data() {
    for (rho, seed) in [("1", 1), ("1/2", 2), ("2", 3), ("3", 4), ("7/2", 5)] {
        let n = 5;
        check_controlled(&BeamConfig::dirichlet(rho, n, 1.0).unwrap(), &random_fixture(Boundary::Dirichlet, n, seed));
    }
}

#[test]
fn rational_ratio_with_data_off_the_collisions() {
    // rho = 5/2 gives r = 2: lambda+_2 = lambda-_1 and lambda+_4 = lambda-_2 up to N = 5.
    // Data on modes 3 and 5 leaves every merged constraint with zero targets on both sides.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut data = ModalState::zeros(Boundary::Dirichlet, 5);
    for n in [3, 5] {
        data.set(n, rng.gen_range(-1.0..1.0) / (n * n * n) as f64, rng.gen_range(-1.0..1.0) / n as f64);
    }
    check_controlled(&BeamConfig::dirichlet("5/2", 5, 1.0).unwrap(), &data);
}

#[test]
fn neumann_odd_data_across_regimes() {
    for (rho, seed) in [("1", 8), ("2", 9), ("3", 10)] {
        check_controlled(&BeamConfig::neumann(rho, 5, 1.0).unwrap(), &random_fixture(Boundary::Neumann, 5, seed));
    }
}

#[test]
fn longer_horizon_is_cheaper() {
    let data = random_fixture(Boundary::Dirichlet, 4, 21);
    let cost = |t: f64| {
        let r = null_control_experiment(&BeamConfig::dirichlet("1", 4, t).unwrap(), &data, &ExperimentOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Controlled);
        r.control_cost
    };
    assert!(cost(2.0) < cost(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn neumann_even_modes_never_pass(k in 1usize..3, v in -1.0f64..1.0, w in -1.0f64..1.0) {
        prop_assume!(v.abs() + w.abs() > 1e-6);
        let cfg = BeamConfig::neumann("1", 5, 1.0).unwrap();
        let mut data = random_fixture(Boundary::Neumann, 5, 3);
        data.set(2 * k, v, w);
        let opts = ExperimentOptions { oracle: false, ..Default::default() };
        let r = null_control_experiment(&cfg, &data, &opts).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Uncontrollable);
        prop_assert_eq!(r.cause_kind.as_deref(), Some("UncontrollableMode"));
    }

    #[test]
    fn collided_data_is_rejected(seed in 0u64..1000) {
        let cfg = BeamConfig::dirichlet("5/2", 4, 1.0).unwrap();
        let data = random_fixture(Boundary::Dirichlet, 4, seed);
        let opts = ExperimentOptions { oracle: false, ..Default::default() };
        let r = null_control_experiment(&cfg, &data, &opts).unwrap();
        prop_assert_eq!(r.cause_kind.as_deref(), Some("ResonanceDefect"));
    }
}
