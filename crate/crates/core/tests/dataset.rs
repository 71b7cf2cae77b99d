use std::fs;
use std::path::Path;

use proptest::prelude::*;

use fgp::attention::RegionFeatureGrid;
use fgp::dataset::{
    decode_region_features, encode_region_features, generate_synthetic_world, load_dataset,
    write_region_features, Checkpoint, LabeledGrid, RegionFeatureSet, SyntheticWorldSpec,
};
use fgp::tensor::Matrix;
use fgp::FgpError;

fn grid_set(regions: usize, d_f: usize, labels: &[u32]) -> RegionFeatureSet {
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| LabeledGrid {
            class_id: c,
            grid: RegionFeatureGrid::new(
                i as u32,
                Matrix::from_fn(regions, d_f, |r, j| (r * d_f + j) as f64 * 0.25 - c as f64),
                Some((1, regions)),
            )
            .unwrap(),
        })
        .collect();
    RegionFeatureSet {
        regions,
        feature_dim: d_f,
        samples,
    }
}

/// Four classes, two per split, two regions of three features.
fn write_fixture(dir: &Path) {
    fs::write(
        dir.join("manifest.json"),
        r#"{
  "classes": [
    {"id": 10, "name": "zebra"}, {"id": 11, "name": "horse"},
    {"id": 12, "name": "tiger"}, {"id": 13, "name": "okapi"}
  ],
  "word_vectors": "words.txt",
  "phrases": "phrases.jsonl",
  "graph": "graph.txt",
  "seen_split": "seen.txt",
  "unseen_split": "unseen.txt",
  "train_features": "train.fgpf",
  "test_features": "test.fgpf",
  "d_c": 2,
  "d_f": 3,
  "regions": 2,
  "grid": [1, 2]
}"#,
    )
    .unwrap();
    fs::write(
        dir.join("words.txt"),
        "horse 1 0\nshape 0.5 0.5\ntiger 0 1\nstripes 0.2 0.9\nlegs 0.7 0.1\n",
    )
    .unwrap();
    fs::write(
        dir.join("phrases.jsonl"),
        concat!(
            r#"{"class_id": 10, "name": "zebra", "description": "horse shape with tiger stripes"}"#, "\n",
            r#"{"class_id": 11, "name": "horse", "description": "A horse shape.", "phrases": ["horse shape"]}"#, "\n",
            r#"{"class_id": 12, "name": "tiger", "description": "tiger stripes"}"#, "\n",
            r#"{"class_id": 13, "name": "okapi", "description": "horse legs with stripes"}"#, "\n",
        ),
    )
    .unwrap();
    fs::write(dir.join("graph.txt"), "10 11\n10 12\n13 11\n").unwrap();
    fs::write(dir.join("seen.txt"), "11\n12\n").unwrap();
    fs::write(dir.join("unseen.txt"), "10\n13\n").unwrap();
    write_region_features(dir.join("train.fgpf"), &grid_set(2, 3, &[11, 12, 11])).unwrap();
    write_region_features(dir.join("test.fgpf"), &grid_set(2, 3, &[10, 13, 12])).unwrap();
}

fn validation_message(err: FgpError) -> String {
    match err {
        FgpError::Validation(m) => m,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn four_class_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let ds = load_dataset(dir.path().join("manifest.json")).unwrap();
    assert_eq!(ds.num_seen, 2);
    let ids: Vec<u32> = ds.classes.iter().map(|c| c.id).collect();
    assert_eq!(ids, vec![11, 12, 10, 13]);
    assert_eq!(ds.classes[0].phrases, vec!["horse shape".to_string()]);
    assert!(ds.classes[2].phrases.contains(&"tiger stripes".to_string()));
    assert_eq!(ds.train.len(), 3);
    assert_eq!(ds.test[0].class, 2);
    assert_eq!(ds.graph.nodes(), 4);
    // zebra (10) is index 2, horse (11) index 0
    assert_eq!(ds.graph.adjacency().get(2, 0), 1.0);
    assert_eq!(ds.graph.adjacency().get(2, 3), 0.0);
}

#[test]
fn overlapping_splits_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    fs::write(dir.path().join("unseen.txt"), "10\n13\n12\n").unwrap();
    let msg = validation_message(load_dataset(dir.path().join("manifest.json")).unwrap_err());
    assert!(msg.contains("C_tr ∩ C_te = ∅"), "{msg}");
    assert!(msg.contains("12"), "{msg}");
}

#[test]
fn feature_width_mismatch_names_both() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    write_region_features(dir.path().join("test.fgpf"), &grid_set(2, 4, &[10])).unwrap();
    let msg = validation_message(load_dataset(dir.path().join("manifest.json")).unwrap_err());
    assert!(msg.contains('4') && msg.contains("d_f = 3"), "{msg}");
}

#[test]
fn unseen_training_label_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    write_region_features(dir.path().join("train.fgpf"), &grid_set(2, 3, &[11, 13])).unwrap();
    let msg = validation_message(load_dataset(dir.path().join("manifest.json")).unwrap_err());
    assert!(msg.contains("unseen class 13"), "{msg}");
}

#[test]
fn unknown_manifest_field_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        text.replacen("\"d_c\"", "\"dc\": 1, \"d_c\"", 1),
    )
    .unwrap();
    assert!(load_dataset(dir.path().join("manifest.json")).is_err());
}

#[test]
fn two_by_three_caps_at_nine_classes() {
    let spec = |unseen| SyntheticWorldSpec {
        attributes: 2,
        values: 3,
        seen_classes: 7,
        unseen_classes: unseen,
        ..SyntheticWorldSpec::default()
    };
    assert!(generate_synthetic_world(&spec(2)).is_ok());
    let err = generate_synthetic_world(&spec(3)).unwrap_err();
    assert!(matches!(err, FgpError::Domain(_)), "{err}");
}

#[test]
fn synthetic_world_round_trips_through_disk() {
    let spec = SyntheticWorldSpec {
        samples_per_class: 8,
        ..SyntheticWorldSpec::default()
    };
    let world = generate_synthetic_world(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ds = load_dataset(world.write(dir.path()).unwrap()).unwrap();
    assert_eq!(ds.num_seen, 18);
    assert_eq!(ds.classes.len(), 24);
    // 18 x (8 - 2 held out) train, 18 x 2 + 6 x 8 test
    assert_eq!(ds.train.len(), 108);
    assert_eq!(ds.test.len(), 84);
    let adjacency = ds.graph.adjacency();
    for i in 0..24 {
        for j in 0..24 {
            assert_eq!(adjacency.get(i, j), adjacency.get(j, i));
        }
    }
}

#[test]
fn in_memory_dataset_matches_disk() {
    let spec = SyntheticWorldSpec {
        samples_per_class: 4,
        seed: 9,
        ..SyntheticWorldSpec::default()
    };
    let world = generate_synthetic_world(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let disk = load_dataset(world.write(dir.path()).unwrap()).unwrap();
    let mem = world.dataset().unwrap();
    assert_eq!(mem.classes, disk.classes);
    assert_eq!(mem.train, disk.train);
    assert_eq!(mem.test, disk.test);
    assert_eq!(mem.graph, disk.graph);
    assert_eq!(mem.words.to_text(), disk.words.to_text());
}

#[test]
fn latent_oracle_separates_unseen_classes() {
    let world = generate_synthetic_world(&SyntheticWorldSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ds = load_dataset(world.write(dir.path()).unwrap()).unwrap();
    let hit1 = world.oracle_unseen_hit1(&ds);
    assert!(hit1 > 0.9, "oracle hit@1 {hit1}");
}

#[test]
fn frozen_flag_survives_checkpoint() {
    use fgp::attention::FgpModel;
    use fgp::dataset::{get_model, put_model};
    use fgp::tensor::seeded_rng;
    let mut rng = seeded_rng(1);
    let mut model = FgpModel::new(Matrix::identity(2), 3, 4, &[0, 1], true, &mut rng).unwrap();
    model.bank.mark_trained();
    model.bank.freeze();
    let mut ck = Checkpoint::default();
    put_model(&mut ck, &model);
    let back = get_model(&Checkpoint::decode(&ck.encode()).unwrap()).unwrap();
    assert!(back.bank.is_frozen() && back.bank.is_trained());
    assert_eq!(back, model);
}

proptest! {
    #[test]
    fn region_features_round_trip(
        regions in 1usize..5,
        d_f in 1usize..5,
        raw in prop::collection::vec((any::<u32>(), prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 25)), 0..4),
    ) {
        let samples = raw
            .iter()
            .enumerate()
            .map(|(i, (c, xs))| LabeledGrid {
                class_id: *c,
                grid: RegionFeatureGrid::new(
                    i as u32,
                    Matrix::from_fn(regions, d_f, |r, j| f64::from(xs[r * 5 + j])),
                    None,
                )
                .unwrap(),
            })
            .collect();
        let set = RegionFeatureSet { regions, feature_dim: d_f, samples };
        let bytes = encode_region_features(&set).unwrap();
        let back = decode_region_features(&bytes, None).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(encode_region_features(&back).unwrap(), bytes);
    }

    #[test]
    fn checkpoint_matrices_round_trip(
        rows in 0usize..4,
        cols in 0usize..4,
        xs in prop::collection::vec(any::<f64>(), 16),
        text in ".{0,20}",
        scalar in any::<u64>(),
    ) {
        let mut ck = Checkpoint::default();
        ck.put_matrix("m", Matrix::from_fn(rows, cols, |r, c| xs[r * 4 + c]));
        ck.put_text("t", text.clone());
        ck.put_scalar("s", scalar);
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        let m = back.matrix("m").unwrap();
        prop_assert_eq!(m.shape(), (rows, cols));
        for (a, b) in m.data().iter().zip(ck.matrix("m").unwrap().data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.text("t").unwrap(), text.as_str());
        prop_assert_eq!(back.scalar("s").unwrap(), scalar);
    }
}
