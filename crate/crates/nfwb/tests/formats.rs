use nfwb::cache::{cache_path, load_or_build, read_dictionary};
use nfwb::formats::{quantize, read_checkpoint, read_tensor_batch, write_checkpoint, write_tensor_batch, Checkpoint, FormatError, TensorBatch, TensorKind};
use nfwb_core::channel::SystemConfig;
use nfwb_core::network::{DenoiserParams, NetworkConfig};
use nfwb_core::rng;
use nfwb_core::sparse::{build_polar_dictionary, PolarGridSpec};

#[test]
fn tensor_batch_round_trip() {
    let batch = TensorBatch { kind: TensorKind::Observations, rows: 3, cols: 2, scale: 0.25, items: vec![(0..12).map(|i| i as f64 * 0.5).collect(), vec![-1.0; 12]] };
    let mut buf = Vec::new();
    write_tensor_batch(&mut buf, &batch).unwrap();
    assert_eq!(buf.len(), 28 + 2 * 12 * 4);
    assert_eq!(read_tensor_batch(&mut buf.as_slice(), TensorKind::Observations).unwrap(), batch);
    assert!(matches!(read_tensor_batch(&mut buf.as_slice(), TensorKind::Channels), Err(FormatError::Magic { .. })));
    assert!(read_tensor_batch(&mut &buf[..40], TensorKind::Observations).is_err());
}

#[test]
fn ragged_items_are_rejected() {
    let batch = TensorBatch { kind: TensorKind::Channels, rows: 2, cols: 2, scale: 1.0, items: vec![vec![0.0; 7]] };
    assert!(matches!(write_tensor_batch(&mut Vec::new(), &batch), Err(FormatError::Malformed(_))));
}

#[test]
fn checkpoint_round_trip_is_exact_after_quantization() {
    let net = NetworkConfig::new(4, 2, 8, 4);
    let params = quantize(&DenoiserParams::init(net, &mut rng::stream(3, &[])).unwrap());
    let ck = Checkpoint { params, steps: 50, beta_start: 1e-4, beta_end: 0.1, scale: 0.7 };
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ck).unwrap();
    let back = read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.schedule().unwrap().steps(), 50);
    buf[4] = 9;
    assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(FormatError::Version(_))));
}

#[test]
fn dictionary_cache_reloads_close_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SystemConfig::new(16, 4, 60e9, 6e9);
    let spec = PolarGridSpec { num_angles: 32, ..PolarGridSpec::default() };
    let f = cfg.subcarrier_frequencies()[1];
    let fresh = build_polar_dictionary(&cfg, f, &spec).unwrap();
    let built = load_or_build(dir.path(), &cfg, f, &spec).unwrap();
    assert_eq!(built, fresh);
    let path = cache_path(dir.path(), &cfg, f, &spec);
    assert!(path.exists());
    let cached = read_dictionary(&path, &cfg, &spec).unwrap();
    assert_eq!(cached.grid, fresh.grid);
    assert_eq!(cached.frequency, f);
    for (a, b) in cached.atoms().iter().zip(fresh.atoms()) {
        assert!((a - b).norm() < 1e-7);
    }
    let other = PolarGridSpec { num_rings: 2, ..spec };
    assert_ne!(cache_path(dir.path(), &cfg, f, &other), path);
}

mod roundtrip {
    use nfwb::config::KvConfig;
    use nfwb::formats::{read_tensor_batch, write_tensor_batch, TensorBatch, TensorKind};
    use nfwb::harness::{EstimatorKind, ExperimentSpec, SweepVariable};
    use nfwb_core::channel::SystemConfig;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f32_representable_batches_survive(rows in 1usize..6, cols in 1usize..6, count in 0usize..4, seed in any::<u32>()) {
            let items: Vec<Vec<f64>> = (0..count)
                .map(|c| (0..2 * rows * cols).map(|i| ((seed as usize + 7 * i + 13 * c) % 1000) as f32 as f64 * 0.125).collect())
                .collect();
            let batch = TensorBatch { kind: TensorKind::Channels, rows, cols, scale: 1.0 / (1.0 + seed as f64), items };
            let mut buf = Vec::new();
            write_tensor_batch(&mut buf, &batch).unwrap();
            prop_assert_eq!(read_tensor_batch(&mut buf.as_slice(), TensorKind::Channels).unwrap(), batch);
        }

        #[test]
        fn spec_survives_key_value_text(
            grid in proptest::collection::vec(-20.0f64..40.0, 1..6),
            trials in 1usize..1000,
            seed in any::<u64>(),
            weight in 0.0f64..4.0,
            snr in -10.0f64..30.0,
        ) {
            let mut s = ExperimentSpec::new(SweepVariable::Snr, grid, trials, vec![EstimatorKind::Psomp, EstimatorKind::Ls], SystemConfig::desk_scale());
            s.seed = seed;
            s.snr_db = snr;
            s.sampler.likelihood_weight = weight;
            let text = s.to_kv().to_text();
            let base = ExperimentSpec::new(SweepVariable::Bandwidth, vec![1.0], 1, vec![EstimatorKind::Lmmse], SystemConfig::full_scale());
            prop_assert_eq!(ExperimentSpec::from_kv(&KvConfig::parse(&text).unwrap(), &base).unwrap(), s);
        }
    }
}
