mod common;

use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use sharpot::io::*;
use sharpot::learning::{fit, synthetic_gaussian_task};
use sharpot::{Histogram, OtError};
use std::fs;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn csv_round_trip_within_12_digits(rows in 1usize..5, cols in 1usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let m = Array2::from_shape_fn((rows, cols), |_| {
            let mag = 10f64.powi(r.random_range(-8..6));
            r.random_range(-1.0..1.0) * mag
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        for (x, y) in m.iter().zip(back.iter()) {
            // half a unit in the twelfth significant digit
            prop_assert!((x - y).abs() <= 5e-12 * x.abs());
            if x.abs() < 1.0 {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn histograms_survive_the_text_round_trip() {
    let mut r = rng(61);
    let hs: Vec<Histogram> = (0..4).map(|_| random_histogram(&mut r, 7)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    write_histograms(&path, &hs).unwrap();
    let back = read_histograms(&path).unwrap();
    for (h, b) in hs.iter().zip(&back) {
        assert!(h.l1_distance(b) < 1e-11);
    }
}

#[test]
fn json_and_csv_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let h = Histogram::new(array![0.125, 0.375, 0.5]).unwrap();
    let (csv, json) = (dir.path().join("a.csv"), dir.path().join("a.json"));
    write_histogram(&csv, &h).unwrap();
    fs::write(&json, histogram_json(&h)).unwrap();
    assert_eq!(read_histogram(&csv).unwrap(), read_histogram(&json).unwrap());

    let m = array![[0.0, 1.5], [2.25, 0.0], [4.0, 9.0]];
    let (csv, json) = (dir.path().join("m.csv"), dir.path().join("m.json"));
    write_matrix(&csv, &m).unwrap();
    fs::write(&json, matrix_json(&m)).unwrap();
    assert_eq!(read_matrix(&csv).unwrap(), m);
    assert_eq!(read_matrix(&json).unwrap(), m);
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    for text in ["0.5,abc\n", "1,2\n3\n", "", "{\"entries\": [[1, 2]], \"n\": 2}"] {
        fs::write(&p, text).unwrap();
        assert!(read_matrix(&p).is_err(), "{text:?}");
    }
    fs::write(&p, "0.5,0.6\n").unwrap();
    assert!(read_histogram(&p).is_err());
    assert!(matches!(read_matrix(&dir.path().join("missing.csv")), Err(OtError::Io(_))));
    let c = dir.path().join("neg.csv");
    fs::write(&c, "0,-1\n1,0\n").unwrap();
    assert!(read_cost(&c).is_err());
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let task = synthetic_gaussian_task(12, 9, 3).unwrap();
    let model = fit(&task, 0.05, 0.2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&path, &model, task.outputs()).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.model, model);
    assert_eq!(loaded.outputs, task.outputs());
    let x = array![0.3];
    assert_eq!(loaded.model.scores(x.view()).unwrap(), model.scores(x.view()).unwrap());

    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    fs::write(&path, &bytes).unwrap();
    assert!(load_model(&path).is_err());
    fs::write(&path, b"not a model\n{}\n").unwrap();
    assert!(load_model(&path).is_err());
}
