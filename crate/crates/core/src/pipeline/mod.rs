//! End-to-end training: semantic centroids, stage-1 alignment, GCN
//! classifier regression and replacement, stage-2 adapter tuning, then
//! evaluation, ablations and grid sweeps.

mod config;
mod eval;
mod stages;

use std::fmt;
use std::str::FromStr;

pub use config::{
    parse_topk, EvalMode, PipelineConfig, SemanticSettings, Stage1Config, Stage2Config, CONFIG_KEYS,
};
pub use eval::{
    evaluate, label_space, rank_of, summarize_scores, ClassAccuracy, Confusion, EvalReport,
    HitRate, MAX_CONFUSIONS,
};
pub use stages::{
    build_semantic, gcn_inputs, init_model, run_gcn_stage, run_stage1, run_stage2, GcnStageOutput,
};

use crate::attention::FgpModel;
use crate::dataset::{put_model, put_stack, Checkpoint, Dataset};
use crate::error::{FgpError, Result};
use crate::gcn::GcnStack;
use crate::semantic::SemanticSpace;

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub model: FgpModel,
    pub semantic: SemanticSpace,
    pub stack: GcnStack,
    pub stage1_curve: Vec<f64>,
    pub gcn_curve: Vec<f64>,
    pub stage2_curve: Vec<f64>,
}

impl PipelineRun {
    pub fn checkpoint(&self, config: &PipelineConfig) -> Checkpoint {
        let mut ck = Checkpoint::default();
        put_model(&mut ck, &self.model);
        put_stack(&mut ck, &self.stack);
        ck.put_text("config", config.to_json());
        ck
    }

    pub fn evaluate(&self, config: &PipelineConfig, dataset: &Dataset) -> Result<EvalReport> {
        evaluate(
            &self.model,
            dataset,
            config.eval_mode,
            &config.topk,
            config.seed,
            config.to_flat(),
        )
    }
}

pub fn train_pipeline(config: &PipelineConfig, dataset: &Dataset) -> Result<PipelineRun> {
    config.validate()?;
    let semantic = build_semantic(config, dataset)?;
    let mut model = init_model(config, dataset, &semantic)?;
    let stage1_curve = run_stage1(config, dataset, &semantic, &mut model)?;
    log::info!(
        "stage 1: loss {:.4} -> {:.4}",
        stage1_curve.first().copied().unwrap_or(f64::NAN),
        stage1_curve.last().copied().unwrap_or(f64::NAN)
    );
    let gcn = run_gcn_stage(
        config,
        &dataset.graph,
        &semantic,
        &mut model,
        dataset.num_seen,
    )?;
    log::info!(
        "gcn: loss {:.5} after {} epochs",
        gcn.curve.last().copied().unwrap_or(f64::NAN),
        gcn.curve.len()
    );
    let stage2_curve = if config.stage2.skip {
        Vec::new()
    } else {
        run_stage2(config, dataset, &semantic, &mut model)?
    };
    Ok(PipelineRun {
        model,
        semantic,
        stack: gcn.stack,
        stage1_curve,
        gcn_curve: gcn.curve,
        stage2_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    Full,
    /// λ = 0.
    NoScLoss,
    /// No global feature term and no global GCN channel.
    NoGlobal,
    NoScNoGlobal,
    /// K = 0.
    GlobalOnly,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoScLoss,
        AblationVariant::NoGlobal,
        AblationVariant::NoScNoGlobal,
        AblationVariant::GlobalOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "FULL",
            AblationVariant::NoScLoss => "NO_SC_LOSS",
            AblationVariant::NoGlobal => "NO_GLOBAL",
            AblationVariant::NoScNoGlobal => "NO_SC_NO_GLOBAL",
            AblationVariant::GlobalOnly => "GLOBAL_ONLY",
        }
    }

    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoScLoss => c.lambda = 0.0,
            AblationVariant::NoGlobal => c.use_global = false,
            AblationVariant::NoScNoGlobal => {
                c.lambda = 0.0;
                c.use_global = false;
            }
            AblationVariant::GlobalOnly => {
                c.k = 0;
                c.use_global = true;
            }
        }
        c
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = FgpError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        let alias = match norm.as_str() {
            "L" => "NO_SC_LOSS",
            "G" => "NO_GLOBAL",
            "LG" => "NO_SC_NO_GLOBAL",
            "F" => "GLOBAL_ONLY",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|v| v.name() == alias)
            .ok_or_else(|| FgpError::validation(format!("unknown ablation variant {s:?}")))
    }
}

pub fn run_ablation(
    variant: AblationVariant,
    config: &PipelineConfig,
    dataset: &Dataset,
) -> Result<(PipelineRun, EvalReport)> {
    let c = variant.apply(config);
    let run = train_pipeline(&c, dataset)?;
    let report = run.evaluate(&c, dataset)?;
    Ok((run, report))
}

pub const SWEEP_TOPK: [usize; 5] = [1, 2, 5, 10, 20];
pub const SWEEP_HEADER: &str = "K,L,hit1,hit2,hit5,hit10,hit20";

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub k: usize,
    pub layers: usize,
    pub report: EvalReport,
}

/// Full pipeline for every `(K, L)` pair with the base seeds.
pub fn sweep_hyperparams(
    k_range: &[usize],
    l_range: &[usize],
    config: &PipelineConfig,
    dataset: &Dataset,
) -> Result<Vec<SweepCell>> {
    if k_range.is_empty() || l_range.is_empty() {
        return Err(FgpError::validation("sweep ranges must be nonempty"));
    }
    let mut cells = Vec::with_capacity(k_range.len() * l_range.len());
    for &k in k_range {
        for &layers in l_range {
            let mut c = config.clone();
            c.k = k;
            c.gcn.layers = layers;
            c.topk = SWEEP_TOPK.to_vec();
            let run = train_pipeline(&c, dataset)?;
            cells.push(SweepCell {
                k,
                layers,
                report: run.evaluate(&c, dataset)?,
            });
        }
    }
    Ok(cells)
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!("{},{}", c.k, c.layers));
        for k in SWEEP_TOPK {
            out.push_str(&format!(",{}", c.report.hit(k).unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}
