use fgp::dataset::{generate_synthetic_world, load_dataset, Dataset, SyntheticWorldSpec};
use fgp::pipeline::{
    build_semantic, init_model, run_ablation, run_gcn_stage, run_stage1, run_stage2, sweep_csv,
    sweep_hyperparams, train_pipeline, AblationVariant, EvalMode, PipelineConfig, SWEEP_HEADER,
};
use fgp::FgpError;

fn small_world(seed: u64) -> (tempfile::TempDir, Dataset) {
    let spec = SyntheticWorldSpec {
        samples_per_class: 12,
        seed,
        ..SyntheticWorldSpec::default()
    };
    let world = generate_synthetic_world(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ds = load_dataset(world.write(dir.path()).unwrap()).unwrap();
    (dir, ds)
}

fn quick_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.stage1.epochs = 4;
    c.gcn.hidden = 16;
    c.gcn.epochs = 40;
    c.stage2.epochs = 3;
    c
}

#[test]
fn stage2_touches_only_the_adapter_and_attention() {
    let (_d, ds) = small_world(1);
    let config = quick_config();
    let semantic = build_semantic(&config, &ds).unwrap();
    let mut model = init_model(&config, &ds, &semantic).unwrap();
    run_stage1(&config, &ds, &semantic, &mut model).unwrap();
    run_gcn_stage(&config, &ds.graph, &semantic, &mut model, ds.num_seen).unwrap();
    let before = model.clone();
    let curve = run_stage2(&config, &ds, &semantic, &mut model).unwrap();
    assert_eq!(curve.len(), 3);
    assert_eq!(model.bank, before.bank);
    assert_eq!(model.head, before.head);
    assert_eq!(model.centroids, before.centroids);
    assert_ne!(model.adapter, before.adapter);
}

#[test]
fn stage2_without_epochs_keeps_identity_adapter() {
    let (_d, ds) = small_world(2);
    let mut config = quick_config();
    config.stage2.epochs = 0;
    let run = train_pipeline(&config, &ds).unwrap();
    assert!(run.model.adapter.is_identity());
    assert!(run.stage2_curve.is_empty());
}

#[test]
fn stage2_needs_a_frozen_bank() {
    let (_d, ds) = small_world(3);
    let config = quick_config();
    let semantic = build_semantic(&config, &ds).unwrap();
    let mut model = init_model(&config, &ds, &semantic).unwrap();
    run_stage1(&config, &ds, &semantic, &mut model).unwrap();
    let err = run_stage2(&config, &ds, &semantic, &mut model).unwrap_err();
    assert!(matches!(err, FgpError::State(_)), "{err}");
}

#[test]
fn unseen_rows_exist_only_after_propagation() {
    let (_d, ds) = small_world(4);
    let config = quick_config();
    let semantic = build_semantic(&config, &ds).unwrap();
    let mut model = init_model(&config, &ds, &semantic).unwrap();
    run_stage1(&config, &ds, &semantic, &mut model).unwrap();
    let unseen = ds.unseen_indices();
    let grid = &ds
        .test
        .iter()
        .find(|s| !ds.classes[s.class].seen)
        .unwrap()
        .grid;
    assert!(model.logits(grid, &unseen).is_err());
    run_gcn_stage(&config, &ds.graph, &semantic, &mut model, ds.num_seen).unwrap();
    assert_eq!(model.logits(grid, &unseen).unwrap().len(), unseen.len());
}

#[test]
fn skipping_both_finetunes_still_scores() {
    let (_d, ds) = small_world(5);
    let mut config = quick_config();
    config.stage1.skip = true;
    config.stage2.skip = true;
    let run = train_pipeline(&config, &ds).unwrap();
    assert!(run.stage2_curve.is_empty());
    assert!(run.model.adapter.is_identity());
    let report = run.evaluate(&config, &ds).unwrap();
    assert_eq!(report.hits.len(), 5);
}

#[test]
fn zsl_and_gzsl_label_spaces() {
    let (_d, ds) = small_world(6);
    let mut config = quick_config();
    let run = train_pipeline(&config, &ds).unwrap();
    let zsl = run.evaluate(&config, &ds).unwrap();
    assert_eq!(zsl.label_space, (18..24).collect::<Vec<u32>>());
    assert_eq!(zsl.samples, 6 * 12);
    config.eval_mode = EvalMode::Gzsl;
    let gzsl = run.evaluate(&config, &ds).unwrap();
    assert_eq!(gzsl.label_space.len(), 24);
    assert_eq!(gzsl.samples, ds.test.len());
    assert_eq!(gzsl.mode, "gzsl");
}

#[test]
fn every_ablation_runs() {
    let (_d, ds) = small_world(7);
    let config = quick_config();
    for v in AblationVariant::ALL {
        let (run, report) = run_ablation(v, &config, &ds).unwrap();
        let c = v.apply(&config);
        assert_eq!(run.model.k(), c.k, "{v}");
        assert_eq!(run.stack.len(), c.k + usize::from(c.use_global), "{v}");
        assert_eq!(report.config["lambda"], serde_json::json!(c.lambda), "{v}");
    }
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let (_d, ds) = small_world(8);
    let mut config = quick_config();
    config.stage1.epochs = 1;
    config.stage2.epochs = 1;
    let cells = sweep_hyperparams(&[1, 2], &[1, 2], &config, &ds).unwrap();
    let csv = sweep_csv(&cells);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("2,2,"));
    assert!(sweep_hyperparams(&[], &[1], &config, &ds).is_err());
}

#[test]
fn stage2_loss_does_not_rise() {
    let (_d, ds) = small_world(9);
    let mut config = quick_config();
    config.stage1.epochs = 20;
    config.gcn.epochs = 200;
    config.stage2.epochs = 20;
    let run = train_pipeline(&config, &ds).unwrap();
    let c = &run.stage2_curve;
    assert_eq!(c.len(), 20);
    for w in c.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{c:?}");
    }
}
