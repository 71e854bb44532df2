use std::f64::consts::TAU;

use nfwb_core::channel::{steering_vector, steering_vector_at, ChannelMatrix, Range, SystemConfig};
use nfwb_core::correlation::{antenna_corr_magnitude, subcarrier_corr_magnitude, CorrelationParams};
use nfwb_core::diffusion::{likelihood_score, likelihood_score_dense, linear_schedule, NoiseSchedule};
use nfwb_core::linear::{lmmse_estimate, ls_estimate, CovarianceModel};
use nfwb_core::network::{forward, forward_cached, DenoiserParams, NetworkConfig};
use nfwb_core::observation::{complex_to_planes, observe_with, MeasurementOperator, PilotConfig};
use nfwb_core::rng::{self, complex_gaussian, standard_normal};
use nfwb_core::sparse::{build_polar_dictionary, omp_estimate, somp_estimate, build_dictionary_set, PolarGridSpec};
use nfwb_core::Complex64;
use proptest::prelude::*;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn gaussian_vec(seed: u64, len: usize) -> Vec<Complex64> {
    let mut r = rng::stream(seed, &[]);
    (0..len).map(|_| complex_gaussian(&mut r, 1.0)).collect()
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > TAU / 2.0 {
        y - TAU
    } else {
        y
    }
}

proptest! {
    #[test]
    fn steering_vector_has_unit_norm(
        n in 1usize..200,
        theta in -1.0f64..=1.0,
        r in 0.1f64..500.0,
        f in 10e9f64..100e9,
    ) {
        let cfg = SystemConfig::new(n, 4, 60e9, 2e9);
        let r = r.max(cfg.min_distance());
        let a = steering_vector(theta, r, f, &cfg).unwrap();
        prop_assert!((norm(&a) - 1.0).abs() < 1e-12);
        let far = steering_vector_at(theta, Range::FarField, f, &cfg).unwrap();
        prop_assert!((norm(&far) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distant_source_has_planar_phase(n in 2usize..=32, theta in -1.0f64..=1.0, f in 20e9f64..80e9) {
        let cfg = SystemConfig::new(n, 4, 60e9, 2e9);
        let r = 1e6 * n as f64 * cfg.antenna_spacing;
        let a = steering_vector(theta, r, f, &cfg).unwrap();
        let k = TAU * f / cfg.speed_of_light;
        for (i, z) in a.iter().enumerate() {
            let planar = k * i as f64 * cfg.antenna_spacing * theta;
            prop_assert!(wrap(z.arg() - a[0].arg() - planar).abs() < 1e-4);
        }
    }

    #[test]
    fn correlation_is_bounded_and_exact_at_zero_lag(
        n in 0usize..64,
        lag in 0usize..32,
        angle_std in 0.05f64..0.5,
        gain_var in 0.1f64..4.0,
        mean_distance in 2.0f64..100.0,
    ) {
        let cfg = SystemConfig::full_scale();
        let p = CorrelationParams { angle_std, gain_var, mean_distance, ..Default::default() };
        let ra = antenna_corr_magnitude(n, lag, cfg.carrier_freq, &p, &cfg).unwrap();
        let rs = subcarrier_corr_magnitude(lag, n, &p, &cfg).unwrap();
        for v in [ra, rs] {
            prop_assert!(v >= 0.0 && v <= 1.05 * gain_var);
        }
        prop_assert_eq!(antenna_corr_magnitude(n, 0, cfg.carrier_freq, &p, &cfg).unwrap(), gain_var);
        prop_assert_eq!(subcarrier_corr_magnitude(0, n, &p, &cfg).unwrap(), gain_var);
    }

    #[test]
    fn far_field_correlation_is_stationary(lag in 1usize..16, angle_std in 0.05f64..0.3) {
        let cfg = SystemConfig::full_scale();
        let p = CorrelationParams { angle_std, mean_distance: 1e9, ..Default::default() };
        let vals: Vec<f64> = (0..cfg.num_antennas - lag)
            .map(|n| antenna_corr_magnitude(n, lag, cfg.carrier_freq, &p, &cfg).unwrap())
            .collect();
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!((hi - lo) / hi < 1e-6);
    }

    #[test]
    fn noiseless_ls_inverts_any_unimodular_pilots(seed in any::<u64>(), n in 1usize..12, m in 1usize..8, power in 0.1f64..10.0) {
        let mut r = rng::stream(seed, &[1]);
        let symbols: Vec<Complex64> = (0..m).map(|_| Complex64::from_polar(power.sqrt(), TAU * standard_normal(&mut r))).collect();
        let pc = PilotConfig::with_symbols(symbols, 0.0).unwrap();
        let h = ChannelMatrix::from_vec(n, m, gaussian_vec(seed, n * m)).unwrap();
        let y = observe_with(&h, &pc, &mut r).unwrap();
        let est = ls_estimate(y.as_vec(), &pc.operator(n)).unwrap();
        for (a, b) in est.iter().zip(h.as_vec()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn real_operator_matches_complex(seed in any::<u64>(), n in 1usize..10, m in 1usize..6) {
        let symbols = gaussian_vec(seed ^ 0x55, m);
        let op = MeasurementOperator::new(n, symbols);
        let h = gaussian_vec(seed, n * m);
        let complex = complex_to_planes(&op.apply(&h).unwrap(), n, m);
        let real = op.apply_real(&complex_to_planes(&h, n, m)).unwrap();
        for (a, b) in complex.iter().zip(&real) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_lmmse_never_grows_the_estimate(seed in any::<u64>(), dim in 1usize..24, var in 0.01f64..10.0, noise in 0.0f64..10.0) {
        let h = gaussian_vec(seed, dim);
        let cov = CovarianceModel::scalar(dim, var).unwrap();
        let est = lmmse_estimate(&h, &cov, noise, 1.0).unwrap();
        prop_assert!(norm(&est) <= norm(&h) * (1.0 + 1e-9));
    }

    #[test]
    fn likelihood_fast_path_equals_dense(seed in any::<u64>(), t in 1usize..=20, noise in 1e-3f64..2.0, power in 0.2f64..4.0) {
        let (n, m) = (3, 2);
        let sched = linear_schedule(20, 1e-4, 0.2).unwrap();
        let mut r = rng::stream(seed, &[]);
        let symbols: Vec<Complex64> = (0..m).map(|_| Complex64::from_polar(power.sqrt(), TAU * standard_normal(&mut r))).collect();
        let op = MeasurementOperator::new(n, symbols);
        let h: Vec<f64> = (0..2 * n * m).map(|_| standard_normal(&mut r)).collect();
        let y: Vec<f64> = (0..2 * n * m).map(|_| standard_normal(&mut r)).collect();
        let fast = likelihood_score(&h, &y, &op, t, noise, &sched).unwrap();
        let dense = likelihood_score_dense(&h, &y, &op, t, noise, &sched).unwrap();
        for (a, b) in fast.iter().zip(&dense) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn linear_schedules_decrease(steps in 2usize..400, start in 1e-5f64..1e-3, end in 0.02f64..0.5) {
        let s: NoiseSchedule = linear_schedule(steps, start, end).unwrap();
        for t in 1..steps {
            prop_assert!(s.gamma_bar(t + 1) < s.gamma_bar(t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omp_residuals_shrink_and_support_is_unique(seed in any::<u64>(), sparsity in 1usize..12) {
        let cfg = SystemConfig::new(16, 4, 60e9, 6e9);
        let spec = PolarGridSpec { num_angles: 32, ..PolarGridSpec::default() };
        let dict = build_polar_dictionary(&cfg, cfg.carrier_freq, &spec).unwrap();
        let y = gaussian_vec(seed, 16);
        let res = omp_estimate(&y, &dict, Complex64::new(1.0, 0.0), sparsity).unwrap();
        for w in res.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let mut s = res.support.clone();
        s.sort_unstable();
        s.dedup();
        prop_assert_eq!(s.len(), res.support.len());
    }

    #[test]
    fn somp_residuals_shrink_and_support_is_unique(seed in any::<u64>(), sparsity in 1usize..10) {
        let cfg = SystemConfig::new(16, 4, 60e9, 6e9);
        let spec = PolarGridSpec { num_angles: 32, ..PolarGridSpec::default() };
        let dicts = build_dictionary_set(&cfg, &spec, true).unwrap();
        let y = ChannelMatrix::from_vec(16, 4, gaussian_vec(seed, 64)).unwrap();
        let pilots = vec![Complex64::new(1.0, 0.0); 4];
        let res = somp_estimate(&y, &dicts, &pilots, sparsity).unwrap();
        for w in res.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let mut s = res.support.indices.clone();
        s.sort_unstable();
        s.dedup();
        prop_assert_eq!(s.len(), res.support.indices.len());
    }

    #[test]
    fn attention_gates_bounded_and_forward_deterministic(seed in any::<u64>(), t in 1usize..100) {
        let cfg = NetworkConfig::new(4, 1, 6, 4);
        let p = DenoiserParams::init(cfg, &mut rng::stream(seed, &[0])).unwrap();
        let mut r = rng::stream(seed, &[1]);
        let x: Vec<f64> = (0..cfg.input_len()).map(|_| 3.0 * standard_normal(&mut r)).collect();
        let cache = forward_cached(&p, &x, t).unwrap();
        for w in cache.feature_weights(0).iter().chain(cache.spatial_weights(0)) {
            prop_assert!(*w > 0.0 && *w < 1.0);
        }
        let out = forward(&p, &x, t).unwrap();
        prop_assert_eq!(out.len(), cfg.output_len());
        prop_assert_eq!(out, cache.output.clone());
    }
}
