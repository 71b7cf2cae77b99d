//! Phrase embeddings, key semantic centroids and per-channel phrase partitions.

mod kmeans;
mod partition;
mod phrases;
mod vectors;

pub use kmeans::{kmeans, kmeans_best_of, lloyd_objective, KMeansConfig, SemanticCentroids};
pub use partition::{
    calibration_targets, class_text_embedding, partition_phrases, CalibrationTarget,
    ClassPartition, PhrasePartition,
};
pub use phrases::{
    default_stopwords, embed_phrase, embed_phrases, extract_phrases, PhraseEmbedding,
};
pub use vectors::WordVectorTable;

use crate::error::Result;
use crate::tensor::Matrix;

/// Text side of one class as fed to [`build_semantic_space`].
#[derive(Debug, Clone)]
pub struct ClassText<'a> {
    pub class_id: u32,
    pub seen: bool,
    pub phrases: &'a [String],
}

/// Everything the downstream stages need from the text side.
#[derive(Debug, Clone)]
pub struct SemanticSpace {
    /// `None` when running without fine-grained channels (K = 0).
    pub centroids: Option<SemanticCentroids>,
    pub phrases: Vec<Vec<PhraseEmbedding>>,
    /// Row `i` is the text embedding of class `i`.
    pub class_embeddings: Matrix,
    pub partitions: PhrasePartition,
    /// Row `i` holds the calibration targets of class `i`, `C x K`.
    pub calibration: Matrix,
}

impl SemanticSpace {
    pub fn k(&self) -> usize {
        self.centroids.as_ref().map_or(0, SemanticCentroids::k)
    }

    /// Initial GCN state for channel `k`: pooled phrase vectors per class.
    pub fn channel_states(&self, k: usize) -> Matrix {
        let rows: Vec<&[f64]> = self
            .partitions
            .classes
            .iter()
            .map(|p| p.pooled.row(k))
            .collect();
        Matrix::from_rows(&rows).expect("uniform dimension")
    }
}

/// Embeds, clusters and partitions. Clustering sees only seen-class phrases
/// when `cluster_seen_only` is set.
pub fn build_semantic_space(
    classes: &[ClassText<'_>],
    table: &WordVectorTable,
    kmeans_config: &KMeansConfig,
    cluster_seen_only: bool,
    target: CalibrationTarget,
) -> Result<SemanticSpace> {
    let mut phrases = Vec::with_capacity(classes.len());
    let mut dropped_total = 0;
    for c in classes {
        let (kept, dropped) = embed_phrases(c.phrases, c.class_id, table)?;
        dropped_total += dropped;
        phrases.push(kept);
    }
    if dropped_total > 0 {
        log::warn!("{dropped_total} phrases dropped: every token out of vocabulary");
    }

    let vectors: Vec<Vec<Vec<f64>>> = phrases
        .iter()
        .map(|ps| ps.iter().map(|p| p.vector.clone()).collect())
        .collect();
    let class_rows = classes
        .iter()
        .zip(&vectors)
        .map(|(c, v)| class_text_embedding(c.class_id, v))
        .collect::<Result<Vec<_>>>()?;
    let class_embeddings = Matrix::from_rows(&class_rows)?;

    let k = kmeans_config.k;
    let centroids = if k == 0 {
        None
    } else {
        let pool: Vec<Vec<f64>> = classes
            .iter()
            .zip(&vectors)
            .filter(|(c, _)| c.seen || !cluster_seen_only)
            .flat_map(|(_, v)| v.iter().cloned())
            .collect();
        Some(kmeans_best_of(&pool, kmeans_config)?)
    };

    let mut partitions = PhrasePartition::default();
    let mut calibration = Matrix::zeros(classes.len(), k);
    if let Some(cents) = &centroids {
        for (i, (c, v)) in classes.iter().zip(&vectors).enumerate() {
            partitions
                .classes
                .push(partition_phrases(c.class_id, v, cents)?);
            let t = calibration_targets(&class_rows[i], cents, target)?;
            calibration.row_mut(i).copy_from_slice(&t);
        }
    }

    Ok(SemanticSpace {
        centroids,
        phrases,
        class_embeddings,
        partitions,
        calibration,
    })
}
