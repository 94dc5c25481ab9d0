use std::path::{Path, PathBuf};

use positron::data::{load_preset, preset, DataError};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn iris_shape() {
    let ds = load_preset("iris", &data_dir(), 0).unwrap();
    assert_eq!(ds.len(), 150);
    assert_eq!(ds.num_features(), 4);
    assert_eq!(ds.num_classes(), 3);
    assert_eq!((ds.train.len(), ds.test.len()), (100, 50));
    for c in 0..3 {
        assert_eq!(ds.labels.iter().filter(|&&l| l == c).count(), 50);
    }
}

#[test]
fn wdbc_shape() {
    let ds = load_preset("wdbc", &data_dir(), 0).unwrap();
    assert_eq!(ds.len(), 569);
    assert_eq!(ds.num_features(), 30);
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.test.len(), 190);
    assert_eq!(load_preset("breast-cancer", &data_dir(), 0).unwrap().test, ds.test);
}

#[test]
fn mushroom_is_one_hot() {
    let ds = load_preset("mushroom", &data_dir(), 0).unwrap();
    assert_eq!(ds.len(), 8124);
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.test.len(), 2708);
    assert!(ds.feature_names.iter().all(|f| f.contains('=')));
    // the column with '?' entries is dropped entirely
    assert!(!ds.feature_names.iter().any(|f| f.ends_with("=?")));
    for row in &ds.features {
        assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
    }
}

#[test]
fn original_breast_cancer_drops_missing_rows() {
    let ds = load_preset("wbc-original", &data_dir(), 0).unwrap();
    assert_eq!(ds.len(), 683);
    assert_eq!(ds.num_features(), 9);
}

#[test]
fn seeds_change_the_split() {
    let a = load_preset("iris", &data_dir(), 0).unwrap();
    let b = load_preset("iris", &data_dir(), 1).unwrap();
    assert_ne!(a.test, b.test);
    assert_eq!(a.test, load_preset("iris", &data_dir(), 0).unwrap().test);
}

#[test]
fn unknown_preset_and_missing_file() {
    assert!(matches!(preset("cifar"), Err(DataError::UnknownPreset(_))));
    assert!(matches!(load_preset("iris", Path::new("/nonexistent"), 0), Err(DataError::Io { .. })));
}
