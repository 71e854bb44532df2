use std::collections::HashSet;

use nfwb::dataset::{generate_channels, read_batch, read_channels, storage_scale, write_channels, Split};
use nfwb::formats::TensorKind;
use nfwb_core::channel::SystemConfig;
use sha2::{Digest, Sha256};

fn cfg() -> SystemConfig {
    SystemConfig::new(8, 4, 60e9, 6e9)
}

#[test]
fn empty_dataset_is_a_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.nfwc");
    let channels = generate_channels(&cfg(), 0, 1, Split::Train).unwrap();
    write_channels(&path, TensorKind::Channels, &channels, &cfg(), storage_scale(&channels).unwrap()).unwrap();
    let batch = read_batch(&path, TensorKind::Channels).unwrap();
    assert_eq!((batch.rows, batch.cols, batch.items.len()), (8, 4, 0));
}

#[test]
fn identical_seeds_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, seed| {
        let p = dir.path().join(name);
        let ch = generate_channels(&cfg(), 20, seed, Split::Test).unwrap();
        write_channels(&p, TensorKind::Channels, &ch, &cfg(), storage_scale(&ch).unwrap()).unwrap();
        std::fs::read(p).unwrap()
    };
    assert_eq!(write("a", 4), write("b", 4));
    assert_ne!(write("a", 4), write("c", 5));
}

#[test]
fn splits_share_no_realization() {
    let hash = |split| -> HashSet<Vec<u8>> {
        generate_channels(&cfg(), 300, 9, split)
            .unwrap()
            .iter()
            .map(|h| {
                let mut s = Sha256::new();
                h.as_vec().iter().for_each(|z| {
                    s.update(z.re.to_le_bytes());
                    s.update(z.im.to_le_bytes());
                });
                s.finalize().to_vec()
            })
            .collect()
    };
    let (train, val, test) = (hash(Split::Train), hash(Split::Validation), hash(Split::Test));
    assert_eq!(train.len(), 300);
    assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
}

#[test]
fn stored_channels_come_back_to_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.nfwc");
    let ch = generate_channels(&cfg(), 5, 2, Split::Train).unwrap();
    let scale = storage_scale(&ch).unwrap();
    write_channels(&path, TensorKind::Channels, &ch, &cfg(), scale).unwrap();
    let back = read_channels(&path, TensorKind::Channels).unwrap();
    for (a, b) in back.iter().zip(&ch) {
        for (x, y) in a.as_vec().iter().zip(b.as_vec()) {
            assert!((x - y).norm() < 1e-6 * (1.0 + y.norm()));
        }
    }
}
