use crate::error::{FgpError, Result};
use crate::tensor::{cosine_distance, mean_of, Matrix};

use super::kmeans::SemanticCentroids;

/// Channel assignment of one class's phrases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPartition {
    pub class_id: u32,
    /// Channel chosen for each phrase, in input order.
    pub channel_of: Vec<usize>,
    /// Phrase indices per channel.
    pub members: Vec<Vec<usize>>,
    /// Pooled initial state per channel, `K x d_c`.
    pub pooled: Matrix,
    /// Channels whose phrase set was empty and fell back to the class mean.
    pub fallback: Vec<usize>,
}

/// Partitions for every class, indexed like the class table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhrasePartition {
    pub classes: Vec<ClassPartition>,
}

/// Mean of all the class's phrase vectors.
pub fn class_text_embedding(class_id: u32, phrases: &[Vec<f64>]) -> Result<Vec<f64>> {
    mean_of(phrases)
        .ok_or_else(|| FgpError::domain(format!("class {class_id} has no embeddable phrases")))
}

/// Sends each phrase to the centroid with the smallest cosine distance
/// (lowest index on ties) and mean-pools each channel.
pub fn partition_phrases(
    class_id: u32,
    phrases: &[Vec<f64>],
    centroids: &SemanticCentroids,
) -> Result<ClassPartition> {
    let class_mean = class_text_embedding(class_id, phrases)?;
    let k = centroids.k();
    let mut channel_of = Vec::with_capacity(phrases.len());
    let mut members = vec![Vec::new(); k];
    for (i, p) in phrases.iter().enumerate() {
        let mut best = (0usize, f64::INFINITY);
        for j in 0..k {
            let d = cosine_distance(p, centroids.centroid(j))?;
            if d < best.1 {
                best = (j, d);
            }
        }
        channel_of.push(best.0);
        members[best.0].push(i);
    }

    let mut pooled = Matrix::zeros(k, class_mean.len());
    let mut fallback = Vec::new();
    for (j, idx) in members.iter().enumerate() {
        let row = if idx.is_empty() {
            fallback.push(j);
            class_mean.clone()
        } else {
            let vs: Vec<&[f64]> = idx.iter().map(|&i| phrases[i].as_slice()).collect();
            mean_of(&vs).expect("non-empty")
        };
        pooled.row_mut(j).copy_from_slice(&row);
    }
    if !fallback.is_empty() {
        log::debug!("class {class_id}: channels {fallback:?} empty, using class mean");
    }
    Ok(ClassPartition {
        class_id,
        channel_of,
        members,
        pooled,
        fallback,
    })
}

/// How the calibration label is derived from the class-to-centroid cosine distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalibrationTarget {
    #[default]
    Distance,
    /// `1 - distance`
    Similarity,
}

/// Cosine distance from the class embedding to each centroid.
pub fn calibration_targets(
    class_embedding: &[f64],
    centroids: &SemanticCentroids,
    kind: CalibrationTarget,
) -> Result<Vec<f64>> {
    (0..centroids.k())
        .map(|j| {
            let d = cosine_distance(class_embedding, centroids.centroid(j))?;
            Ok(match kind {
                CalibrationTarget::Distance => d,
                CalibrationTarget::Similarity => 1.0 - d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroids(rows: &[&[f64]]) -> SemanticCentroids {
        SemanticCentroids {
            centroids: Matrix::from_rows(rows).unwrap(),
            assignment: vec![],
            seed: 0,
            objective_trace: vec![],
            iterations: 0,
        }
    }

    #[test]
    fn single_channel_takes_everything() {
        let c = centroids(&[&[1.0, 1.0]]);
        let phrases = vec![vec![1.0, 0.0], vec![0.0, 3.0]];
        let p = partition_phrases(0, &phrases, &c).unwrap();
        assert_eq!(p.channel_of, vec![0, 0]);
        assert_eq!(p.pooled.row(0), &[0.5, 1.5]);
        assert!(p.fallback.is_empty());
    }

    #[test]
    fn exact_centroid_wins() {
        let c = centroids(&[&[1.0, 0.0], &[0.3, 0.7], &[0.0, 1.0]]);
        let p = partition_phrases(0, &[vec![0.3, 0.7]], &c).unwrap();
        assert_eq!(p.channel_of, vec![1]);
    }

    #[test]
    fn hand_chosen_assignment() {
        let c = centroids(&[&[1.0, 0.2], &[-0.1, 1.0]]);
        let phrases = vec![vec![2.0, 0.1], vec![0.4, 0.5], vec![-1.0, 3.0]];
        let p = partition_phrases(7, &phrases, &c).unwrap();
        // independent per-phrase argmin
        for (i, ph) in phrases.iter().enumerate() {
            let d0 = cosine_distance(ph, &[1.0, 0.2]).unwrap();
            let d1 = cosine_distance(ph, &[-0.1, 1.0]).unwrap();
            assert_eq!(p.channel_of[i], if d1 < d0 { 1 } else { 0 });
        }
        let total: usize = p.members.iter().map(Vec::len).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn empty_channel_falls_back() {
        let c = centroids(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = partition_phrases(0, &[vec![1.0, 0.1], vec![2.0, 0.0]], &c).unwrap();
        assert_eq!(p.fallback, vec![1]);
        assert_eq!(p.pooled.row(1), p.pooled.row(0));
    }

    #[test]
    fn no_phrases_is_error() {
        let c = centroids(&[&[1.0, 0.0]]);
        let err = partition_phrases(42, &[], &c).unwrap_err();
        assert!(err.to_string().contains("42"));
    }

    #[test]
    fn class_mean_is_weighted_channel_mean() {
        let c = centroids(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let phrases = vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![3.0, 1.0]];
        let p = partition_phrases(0, &phrases, &c).unwrap();
        let mean = class_text_embedding(0, &phrases).unwrap();
        let mut weighted = [0.0; 2];
        for (j, m) in p.members.iter().enumerate() {
            for d in 0..2 {
                weighted[d] += p.pooled.get(j, d) * m.len() as f64 / 3.0;
            }
        }
        assert!((weighted[0] - mean[0]).abs() < 1e-12);
        assert!((weighted[1] - mean[1]).abs() < 1e-12);
        assert_eq!(
            class_text_embedding(0, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn calibration_cases() {
        let c = centroids(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let t = calibration_targets(&[1.0, 0.0, 0.0], &c, CalibrationTarget::Distance).unwrap();
        assert!(t[0].abs() < 1e-15);
        let t = calibration_targets(&[0.0, 0.0, 2.0], &c, CalibrationTarget::Distance).unwrap();
        assert_eq!(t, vec![1.0, 1.0]);
        let s = calibration_targets(&[0.0, 0.0, 2.0], &c, CalibrationTarget::Similarity).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }
}
