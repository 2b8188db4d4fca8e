use mfsync_core::model::{
    angle_difference, order_parameter_sq, wrap_phase, ControlLaw, ModelParams, PhaseEnsemble, Simulator,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn simulation_commutes_with_global_rotation(seed in 0u64..1000, shift in -7.0f64..7.0, kappa in 0.0f64..2.0) {
        let params = ModelParams { n: 30, kappa, ..ModelParams::default() };
        let ens = PhaseEnsemble::random(30, params.gamma, seed).unwrap();
        let law = ControlLaw::Kuramoto { kappa };
        let mut a = Simulator::with_ensemble(ens.clone(), params.clone(), law.clone(), seed).unwrap();
        let mut b = Simulator::with_ensemble(ens.rotated(shift), params, law, seed).unwrap();
        for _ in 0..200 {
            a.step().unwrap();
            b.step().unwrap();
        }
        let (pa, pb) = (a.ensemble().phases(), b.ensemble().phases());
        for (x, y) in pa.iter().zip(pb) {
            prop_assert!(angle_difference(*y, x + shift).abs() < 1e-9);
        }
        prop_assert!((order_parameter_sq(pa) - order_parameter_sq(pb)).abs() < 1e-9);
    }

    #[test]
    fn wrap_is_idempotent_and_half_open(x in -1e6f64..1e6) {
        let w = wrap_phase(x).unwrap();
        prop_assert!((0.0..std::f64::consts::TAU).contains(&w));
        prop_assert_eq!(wrap_phase(w).unwrap(), w);
    }
}
