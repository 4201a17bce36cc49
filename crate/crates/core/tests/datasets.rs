use std::path::Path;

use muse_core::data::bars::{angle_code, make_synthetic_bars};
use muse_core::data::idx::{parse_idx, read_idx_file, IdxTensor, TYPE_U8};
use muse_core::data::mnist::{load_mnist_pair, split_paths};
use muse_core::data::{batch_indices, batch_iter, Split};
use proptest::prelude::*;

fn mnist_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist"))
}

proptest! {
    #[test]
    fn idx_round_trip(dims in prop::collection::vec(1u32..5, 1..4), fill in any::<u8>()) {
        let n: u32 = dims.iter().product();
        let payload: Vec<u8> = (0..n).map(|i| fill.wrapping_add(i as u8)).collect();
        let t = IdxTensor { type_code: TYPE_U8, dims, payload };
        let bytes = t.to_bytes();
        let back = parse_idx(&bytes).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_reported(cut in 1usize..6) {
        let t = IdxTensor { type_code: TYPE_U8, dims: vec![2, 3], payload: vec![1; 6] };
        let bytes = t.to_bytes();
        prop_assert!(parse_idx(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn batches_partition_the_data(n in 0usize..50, bs in 1usize..9, seed in any::<u64>()) {
        let mut all: Vec<usize> = batch_indices(n, bs, Some(seed)).unwrap().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn mnist_files_parse_and_stay_aligned() {
    let (img, lbl) = split_paths(mnist_dir(), Split::Train);
    let images = read_idx_file(&img).unwrap();
    let labels = read_idx_file(&lbl).unwrap();
    assert_eq!(images.magic(), 0x0000_0803);
    assert_eq!(labels.magic(), 0x0000_0801);
    assert_eq!(&images.dims[1..], &[28, 28]);
    assert_eq!(images.count(), labels.count());

    let data = load_mnist_pair(&img, &lbl, Some(10), Split::Train).unwrap();
    assert_eq!(data.len(), 10);
    let full = load_mnist_pair(&img, &lbl, None, Split::Train).unwrap();
    let mut max = 0.0f64;
    for i in [0, 7, 4321, full.len() - 1] {
        let raw = images.item(i);
        let row = full.modalities[0].row(i);
        for (p, &b) in row.iter().zip(raw) {
            assert_eq!(*p, b as f64 / 255.0);
        }
        let onehot = full.modalities[1].row(i);
        assert_eq!(onehot.iter().sum::<f64>(), 1.0);
        assert_eq!(onehot[labels.item(i)[0] as usize], 1.0);
    }
    for v in full.modalities[0].data() {
        max = max.max(*v);
    }
    assert_eq!(max, 1.0);
}

#[test]
fn mismatched_counts_are_rejected() {
    let (img, _) = split_paths(mnist_dir(), Split::Train);
    let (_, lbl) = split_paths(mnist_dir(), Split::Test);
    assert!(load_mnist_pair(&img, &lbl, None, Split::Train).is_err());
}

#[test]
fn bar_code_norms_stay_near_one() {
    let sd = 0.05;
    let data = make_synthetic_bars(5000, 16, sd, 3).unwrap();
    let inside = (0..data.len())
        .filter(|&i| {
            let r = data.modalities[1].row(i);
            let norm = (r[0] * r[0] + r[1] * r[1]).sqrt();
            (1.0 - 4.0 * sd..=1.0 + 4.0 * sd).contains(&norm)
        })
        .count();
    assert!(inside as f64 >= 0.999 * data.len() as f64, "{inside}");
}

#[test]
fn bar_codes_at_reference_angles() {
    let [a, b] = angle_code(0.0);
    assert_eq!((a, b), (1.0, 0.0));
    let [a, b] = angle_code(std::f64::consts::FRAC_PI_2);
    assert!((a + 1.0).abs() < 1e-15 && b.abs() < 1e-15);
}

#[test]
fn batch_iter_yields_short_tail() {
    let data = make_synthetic_bars(10, 8, 0.0, 0).unwrap();
    let sizes: Vec<usize> = batch_iter(&data, 3, Some(1))
        .unwrap()
        .map(|b| b[0].rows())
        .collect();
    assert_eq!(sizes, vec![3, 3, 3, 1]);
}
