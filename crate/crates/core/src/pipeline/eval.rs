use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::EvalMode;
use crate::attention::FgpModel;
use crate::dataset::Dataset;
use crate::error::{FgpError, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRate {
    pub k: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: u32,
    pub name: String,
    pub samples: usize,
    pub top1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_id: u32,
    pub predicted_id: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub seed: u64,
    pub samples: usize,
    pub label_space: Vec<u32>,
    pub hits: Vec<HitRate>,
    pub per_class: Vec<ClassAccuracy>,
    /// Most frequent top-1 mistakes, largest first.
    pub confusions: Vec<Confusion>,
    pub config: BTreeMap<String, Value>,
}

impl EvalReport {
    pub fn hit(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|h| h.k == k).map(|h| h.rate)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

pub const MAX_CONFUSIONS: usize = 10;

/// 0-based rank of column `target` in `scores`. Equal scores rank the lower
/// class id first.
pub fn rank_of(scores: &[f64], target: usize, ids: &[u32]) -> usize {
    let s = scores[target];
    scores
        .iter()
        .zip(ids)
        .filter(|&(&x, &id)| x > s || (x == s && id < ids[target]))
        .count()
}

/// Scored samples to hit rates and summaries.
///
/// `scores` is `n x |label space|`; `truth[i]` is the column of sample `i`'s
/// class; `ids` and `names` describe the columns.
pub fn summarize_scores(
    scores: &Matrix,
    truth: &[usize],
    ids: &[u32],
    names: &[String],
    ks: &[usize],
) -> Result<(Vec<HitRate>, Vec<ClassAccuracy>, Vec<Confusion>)> {
    if scores.rows() == 0 {
        return Err(FgpError::domain("nothing to evaluate: the split is empty"));
    }
    if truth.len() != scores.rows() || ids.len() != scores.cols() || names.len() != ids.len() {
        return Err(FgpError::domain(
            "score matrix, labels and label space disagree",
        ));
    }
    if scores.data().iter().any(|x| x.is_nan()) {
        return Err(FgpError::numeric("NaN score during evaluation"));
    }
    let n = scores.rows();
    let ranks: Vec<usize> = (0..n)
        .map(|i| rank_of(scores.row(i), truth[i], ids))
        .collect();
    let hits = ks
        .iter()
        .map(|&k| HitRate {
            k,
            rate: ranks.iter().filter(|&&r| r < k).count() as f64 / n as f64,
        })
        .collect();

    let mut per: BTreeMap<u32, (usize, usize, &str)> = BTreeMap::new();
    let mut confusions: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for i in 0..n {
        let t = truth[i];
        let e = per.entry(ids[t]).or_insert((0, 0, names[t].as_str()));
        e.0 += 1;
        if ranks[i] == 0 {
            e.1 += 1;
        } else {
            let row = scores.row(i);
            let top = (0..row.len())
                .find(|&j| rank_of(row, j, ids) == 0)
                .expect("some column ranks first");
            *confusions.entry((ids[t], ids[top])).or_default() += 1;
        }
    }
    let per_class = per
        .into_iter()
        .map(|(class_id, (samples, correct, name))| ClassAccuracy {
            class_id,
            name: name.to_string(),
            samples,
            top1: correct as f64 / samples as f64,
        })
        .collect();
    let mut confusions: Vec<Confusion> = confusions
        .into_iter()
        .map(|((true_id, predicted_id), count)| Confusion {
            true_id,
            predicted_id,
            count,
        })
        .collect();
    // stable sort keeps id order among equal counts
    confusions.sort_by_key(|c| std::cmp::Reverse(c.count));
    confusions.truncate(MAX_CONFUSIONS);
    Ok((hits, per_class, confusions))
}

/// Label space (class indices) for a mode.
pub fn label_space(dataset: &Dataset, mode: EvalMode) -> Vec<usize> {
    match mode {
        EvalMode::Zsl => dataset.unseen_indices(),
        EvalMode::Gzsl => dataset.all_indices(),
    }
}

/// Scores the test split. ZSL keeps only unseen-class samples and never
/// scores a seen class.
pub fn evaluate(
    model: &FgpModel,
    dataset: &Dataset,
    mode: EvalMode,
    ks: &[usize],
    seed: u64,
    config: BTreeMap<String, Value>,
) -> Result<EvalReport> {
    let space = label_space(dataset, mode);
    let samples: Vec<_> = dataset
        .test
        .iter()
        .filter(|s| space.contains(&s.class))
        .collect();
    if samples.is_empty() || space.is_empty() {
        return Err(FgpError::domain(format!(
            "no {} test samples to evaluate",
            mode.as_str()
        )));
    }
    let mut scores = Matrix::zeros(samples.len(), space.len());
    let mut truth = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let logits = model.logits(&s.grid, &space)?;
        scores.row_mut(i).copy_from_slice(&logits);
        truth.push(space.iter().position(|&c| c == s.class).expect("filtered"));
    }
    let ids: Vec<u32> = space.iter().map(|&c| dataset.classes[c].id).collect();
    let names: Vec<String> = space
        .iter()
        .map(|&c| dataset.classes[c].name.clone())
        .collect();
    let (hits, per_class, confusions) = summarize_scores(&scores, &truth, &ids, &names, ks)?;
    Ok(EvalReport {
        mode: mode.as_str().to_string(),
        seed,
        samples: samples.len(),
        label_space: ids,
        hits,
        per_class,
        confusions,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn third_place_threshold() {
        let scores = Matrix::from_rows(&[[0.9, 0.1, 0.5, 0.7, 0.0, 0.2]]).unwrap();
        let ids: Vec<u32> = (0..6).collect();
        let (hits, _, conf) = summarize_scores(&scores, &[2], &ids, &names(6), &[1, 2, 5]).unwrap();
        let rates: Vec<f64> = hits.iter().map(|h| h.rate).collect();
        assert_eq!(rates, vec![0.0, 0.0, 1.0]);
        assert_eq!(
            conf,
            vec![Confusion {
                true_id: 2,
                predicted_id: 0,
                count: 1
            }]
        );
    }

    #[test]
    fn ties_go_to_lower_id() {
        let row = [1.0, 1.0, 1.0];
        assert_eq!(rank_of(&row, 0, &[5, 3, 9]), 1);
        assert_eq!(rank_of(&row, 1, &[5, 3, 9]), 0);
        assert_eq!(rank_of(&row, 2, &[5, 3, 9]), 2);
    }

    #[test]
    fn saturated_k_is_one() {
        let scores = Matrix::from_fn(7, 4, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let truth: Vec<usize> = (0..7).map(|i| i % 4).collect();
        let ids: Vec<u32> = (0..4).collect();
        let (hits, per, _) = summarize_scores(&scores, &truth, &ids, &names(4), &[4, 50]).unwrap();
        assert!(hits.iter().all(|h| h.rate == 1.0));
        assert_eq!(per.iter().map(|p| p.samples).sum::<usize>(), 7);
    }

    #[test]
    fn empty_split_is_rejected() {
        let scores = Matrix::zeros(0, 3);
        assert!(summarize_scores(&scores, &[], &[0, 1, 2], &names(3), &[1]).is_err());
    }
}
