use mfsync_core::fpf::{fpf_step, FilterConfig, ObservationFn, ParticleCloud, synthesize_observations};
use mfsync_core::model::{em_step, ModelParams, PhaseEnsemble};
use mfsync_core::oracles::{compare_with_oracle, OracleCompareConfig};
use mfsync_core::rng::{RandomStream, StreamFamily};

/// Two-sample Kolmogorov–Smirnov statistic on the cut circle [0, 2π).
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn uninformative_filter_is_an_uncoupled_population() {
    // With h ≡ 0 the gain vanishes and the particles are free noisy
    // oscillators; compare against the plain SDE simulator on independent
    // randomness at the 1% level.
    let n = 2000;
    let cfg = FilterConfig {
        h: ObservationFn::Constant(0.0),
        gamma_f: 0.3,
        sigma_b: 0.4,
        n,
        ..FilterConfig::default()
    };
    let path = synthesize_observations(&cfg, 10.0, 1).unwrap();
    let mut cloud = ParticleCloud::uniform(&cfg, 1);
    // Concentrate the start so the law is far from uniform.
    let start: Vec<f64> = (0..n as u64)
        .map(|i| 1.0 + 0.3 * RandomStream::of(1, StreamFamily::Auxiliary, i).normal())
        .map(|x| x.rem_euclid(std::f64::consts::TAU))
        .collect();
    cloud = ParticleCloud::new(start, cloud.frequencies().to_vec()).unwrap();
    let mut noise = RandomStream::family(1, StreamFamily::Noise, n);
    for &dz in &path.increments {
        let g = fpf_step(&mut cloud, dz, &cfg, &mut noise).unwrap();
        assert_eq!((g.kappa1, g.kappa2), (0.0, 0.0));
    }

    let params = ModelParams {
        sigma: 0.4,
        gamma: 0.3,
        n,
        ..ModelParams::default()
    };
    let phases: Vec<f64> = (0..n as u64)
        .map(|i| 1.0 + 0.3 * RandomStream::of(99, StreamFamily::Auxiliary, i).normal())
        .map(|x| x.rem_euclid(std::f64::consts::TAU))
        .collect();
    let freqs = mfsync_core::model::sample_frequencies(0.3, n, 99);
    let mut ens = PhaseEnsemble::new(phases, freqs).unwrap();
    let mut noise = RandomStream::family(99, StreamFamily::Noise, n);
    let zeros = vec![0.0; n];
    for _ in 0..path.steps() {
        em_step(&mut ens, &zeros, &params, &mut noise).unwrap();
    }
    let d = ks_statistic(cloud.phases(), ens.phases());
    let critical = 1.628 * ((2.0 * n as f64) / (n as f64 * n as f64)).sqrt();
    assert!(d < critical, "KS statistic {d} above {critical}");
}

#[test]
fn more_particles_track_the_oracle_at_least_as_well() {
    let mean_tv = |n: usize| {
        (0..5)
            .map(|seed| {
                let mut cfg = OracleCompareConfig {
                    seed,
                    horizon: 40.0,
                    ..OracleCompareConfig::default()
                };
                cfg.filter.n = n;
                compare_with_oracle(&cfg).unwrap().mean_tv
            })
            .sum::<f64>()
            / 5.0
    };
    let (small, large) = (mean_tv(500), mean_tv(2000));
    assert!(large <= small, "N=500: {small}, N=2000: {large}");
}
