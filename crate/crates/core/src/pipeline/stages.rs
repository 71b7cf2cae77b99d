use rand::seq::SliceRandom;

use super::config::PipelineConfig;
use crate::attention::{FgpModel, Gradients, RegionFeatureGrid, Trainable};
use crate::dataset::Dataset;
use crate::error::{FgpError, Result};
use crate::gcn::{ground_truth_rows, replace_classifiers, train_gcn, GcnStack, KnowledgeGraph};
use crate::semantic::{build_semantic_space, ClassText, KMeansConfig, SemanticSpace};
use crate::tensor::{seeded_rng, AdamConfig, AdamState, Matrix, SgdState};

// Offsets separating the random streams of each stage.
const INIT_STREAM: u64 = 1;
const STAGE1_STREAM: u64 = 2;
const GCN_STREAM: u64 = 3;
const STAGE2_STREAM: u64 = 4;

pub fn build_semantic(config: &PipelineConfig, dataset: &Dataset) -> Result<SemanticSpace> {
    let texts: Vec<ClassText<'_>> = dataset
        .classes
        .iter()
        .map(|c| ClassText {
            class_id: c.id,
            seen: c.seen,
            phrases: &c.phrases,
        })
        .collect();
    let km = KMeansConfig {
        k: config.k,
        seed: config.seed,
        max_iters: config.semantic.max_iters,
        tol: config.semantic.tol,
        restarts: config.semantic.restarts,
    };
    build_semantic_space(
        &texts,
        &dataset.words,
        &km,
        config.semantic.seen_only,
        config.semantic.target,
    )
}

/// Fresh model: random attention, calibration head and seen-class rows.
pub fn init_model(
    config: &PipelineConfig,
    dataset: &Dataset,
    semantic: &SemanticSpace,
) -> Result<FgpModel> {
    let centroids = semantic
        .centroids
        .as_ref()
        .map(|c| c.centroids.clone())
        .unwrap_or_else(|| Matrix::zeros(0, dataset.manifest.d_c));
    let mut rng = seeded_rng(config.seed.wrapping_add(INIT_STREAM));
    FgpModel::new(
        centroids,
        dataset.manifest.d_f,
        dataset.classes.len(),
        &dataset.seen_indices(),
        config.use_global,
        &mut rng,
    )
}

fn shuffled_batches(n: usize, batch: usize, rng: &mut crate::tensor::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn batch_of<'a>(dataset: &'a Dataset, idx: &[usize]) -> Vec<(&'a RegionFeatureGrid, usize)> {
    idx.iter()
        .map(|&i| (&dataset.train[i].grid, dataset.train[i].class))
        .collect()
}

/// Stage 1: Adam on attention, calibration head and classifier bank with the
/// adapter fixed. With `stage1.skip` only the bank is fit, as a linear probe
/// on untrained attention. Returns the mean loss of each epoch.
pub fn run_stage1(
    config: &PipelineConfig,
    dataset: &Dataset,
    semantic: &SemanticSpace,
    model: &mut FgpModel,
) -> Result<Vec<f64>> {
    if dataset.train.is_empty() {
        return Err(FgpError::domain("no training samples"));
    }
    let trainable = if config.stage1.skip {
        Trainable {
            attention: false,
            head: false,
            bank: true,
            adapter: false,
        }
    } else {
        Trainable {
            attention: true,
            head: config.lambda > 0.0,
            bank: true,
            adapter: false,
        }
    };
    let adam = AdamConfig {
        lr: config.stage1.lr,
        ..AdamConfig::default()
    };
    let mut s_alpha = AdamState::new(model.attention.w_alpha.shape(), adam);
    let mut s_sc = AdamState::new(model.head.w_sc.shape(), adam);
    let mut s_heads: Vec<(AdamState, AdamState)> = model
        .bank
        .heads()
        .map(|h| {
            (
                AdamState::new(h.weights.shape(), adam),
                AdamState::new((h.bias.len(), 1), adam),
            )
        })
        .collect();

    let seen = dataset.seen_indices();
    let mut rng = seeded_rng(config.seed.wrapping_add(STAGE1_STREAM));
    let mut curve = Vec::with_capacity(config.stage1.epochs);
    let mut step = 0usize;
    for _ in 0..config.stage1.epochs {
        let mut epoch_loss = 0.0;
        for idx in shuffled_batches(dataset.train.len(), config.stage1.batch_size, &mut rng) {
            let batch = batch_of(dataset, &idx);
            let (loss, grads) = model
                .backward_batch(
                    &batch,
                    &seen,
                    &semantic.calibration,
                    config.lambda,
                    trainable,
                )
                .map_err(|e| match e {
                    FgpError::Numeric(m) => FgpError::numeric(format!("stage 1 step {step}: {m}")),
                    other => other,
                })?;
            epoch_loss += loss.total * idx.len() as f64;
            apply_adam(
                model,
                &grads,
                trainable,
                &mut s_alpha,
                &mut s_sc,
                &mut s_heads,
            )?;
            step += 1;
        }
        curve.push(epoch_loss / dataset.train.len() as f64);
    }
    model.bank.mark_trained();
    Ok(curve)
}

fn apply_adam(
    model: &mut FgpModel,
    grads: &Gradients,
    trainable: Trainable,
    s_alpha: &mut AdamState,
    s_sc: &mut AdamState,
    s_heads: &mut [(AdamState, AdamState)],
) -> Result<()> {
    if trainable.attention && model.k() > 0 {
        s_alpha.step(model.attention.w_alpha.data_mut(), grads.w_alpha.data())?;
    }
    if trainable.head && model.k() > 0 {
        s_sc.step(model.head.w_sc.data_mut(), grads.w_sc.data())?;
    }
    if trainable.bank {
        for ((head, g), (sw, sb)) in model
            .bank
            .heads_for_update()?
            .zip(&grads.heads)
            .zip(s_heads)
        {
            sw.step(head.weights.data_mut(), g.weights.data())?;
            sb.step(&mut head.bias, &g.bias)?;
        }
    }
    Ok(())
}

/// Node states per GCN channel, in [`crate::attention::ClassifierBank::heads`] order.
pub fn gcn_inputs(semantic: &SemanticSpace, use_global: bool) -> Vec<Matrix> {
    let mut inputs: Vec<Matrix> = (0..semantic.k())
        .map(|k| semantic.channel_states(k))
        .collect();
    if use_global {
        inputs.push(semantic.class_embeddings.clone());
    }
    inputs
}

#[derive(Debug, Clone)]
pub struct GcnStageOutput {
    pub stack: GcnStack,
    pub curve: Vec<f64>,
}

/// Fits one GCN channel per head to the trained seen rows, then replaces
/// every row of the bank with the predictions and freezes it.
pub fn run_gcn_stage(
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    semantic: &SemanticSpace,
    model: &mut FgpModel,
    num_seen: usize,
) -> Result<GcnStageOutput> {
    let seen: Vec<usize> = (0..num_seen).collect();
    let targets = ground_truth_rows(&model.bank, &seen)?;
    let inputs = gcn_inputs(semantic, model.bank.uses_global());
    let gcn_config = crate::gcn::GcnConfig {
        seed: config.seed.wrapping_add(GCN_STREAM),
        ..config.gcn
    };
    let d_in = semantic.class_embeddings.cols();
    let mut stack = GcnStack::new(inputs.len(), d_in, model.feature_dim() + 1, &gcn_config)?;
    let a_norm = graph.normalized()?;
    let curve = train_gcn(&mut stack, &a_norm, &inputs, &targets, &gcn_config)?;
    let predicted = stack.predict(&a_norm, &inputs)?;
    model.bank = replace_classifiers(&model.bank, &predicted)?;
    Ok(GcnStageOutput { stack, curve })
}

/// Stage 2: SGD with momentum on the adapter (and optionally the attention
/// projection) against cross-entropy only. The bank must already be frozen.
pub fn run_stage2(
    config: &PipelineConfig,
    dataset: &Dataset,
    semantic: &SemanticSpace,
    model: &mut FgpModel,
) -> Result<Vec<f64>> {
    if !model.bank.is_frozen() {
        return Err(FgpError::State(
            "stage 2 needs a frozen classifier bank".into(),
        ));
    }
    if dataset.train.is_empty() {
        return Err(FgpError::domain("no training samples"));
    }
    let trainable = Trainable {
        attention: config.stage2.train_attention,
        head: false,
        bank: false,
        adapter: true,
    };
    let (lr, mu) = (config.stage2.lr, config.stage2.momentum);
    let mut s_adapter = SgdState::new(model.adapter.matrix.shape(), lr, mu);
    let mut s_alpha = SgdState::new(model.attention.w_alpha.shape(), lr, mu);
    let seen = dataset.seen_indices();
    let mut rng = seeded_rng(config.seed.wrapping_add(STAGE2_STREAM));
    let mut curve = Vec::with_capacity(config.stage2.epochs);
    let mut step = 0usize;
    for _ in 0..config.stage2.epochs {
        let mut epoch_loss = 0.0;
        for idx in shuffled_batches(dataset.train.len(), config.stage1.batch_size, &mut rng) {
            let batch = batch_of(dataset, &idx);
            let (loss, grads) = model
                .backward_batch(&batch, &seen, &semantic.calibration, 0.0, trainable)
                .map_err(|e| match e {
                    FgpError::Numeric(m) => FgpError::numeric(format!("stage 2 step {step}: {m}")),
                    other => other,
                })?;
            epoch_loss += loss.total * idx.len() as f64;
            s_adapter.step(model.adapter.matrix.data_mut(), grads.adapter.data())?;
            if trainable.attention && model.k() > 0 {
                s_alpha.step(model.attention.w_alpha.data_mut(), grads.w_alpha.data())?;
            }
            step += 1;
        }
        curve.push(epoch_loss / dataset.train.len() as f64);
    }
    Ok(curve)
}
