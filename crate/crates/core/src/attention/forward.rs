//! Per-centroid attention over regions, feature selection, logit composition
//! and the two losses.

use super::params::{AttentionParams, CalibrationHead, ClassifierBank, RegionFeatureGrid};
use crate::error::{FgpError, Result};
use crate::tensor::{dot, log_sum_exp, softmax, Matrix};

/// Output of the attention stage for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrainedFeatures {
    /// Mean of the (adapted) region rows.
    pub global: Vec<f64>,
    /// `K x d_f`, row k is `e_k`.
    pub channels: Matrix,
    /// `K x R`, row k is the attention map of centroid k.
    pub attention: Matrix,
    pub grid_shape: Option<(usize, usize)>,
}

impl FineGrainedFeatures {
    pub fn k(&self) -> usize {
        self.channels.rows()
    }
}

/// Query vector `w_αᵀ v` for a centroid.
pub fn attention_query(centroid: &[f64], params: &AttentionParams) -> Result<Vec<f64>> {
    params.w_alpha.vec_mat(centroid)
}

/// Softmax over `vᵀ w_α f^r` for all regions.
pub fn attention_weights(
    centroid: &[f64],
    grid: &RegionFeatureGrid,
    params: &AttentionParams,
) -> Result<Vec<f64>> {
    if params.w_alpha.cols() != grid.feature_dim() {
        return Err(FgpError::Shape {
            op: "attention_weights",
            left: params.w_alpha.shape(),
            right: grid.features.shape(),
        });
    }
    let q = attention_query(centroid, params)?;
    softmax(&grid.features.mat_vec(&q)?)
}

/// `Σ_r α^r f^r`.
pub fn fine_grained_feature(weights: &[f64], grid: &RegionFeatureGrid) -> Result<Vec<f64>> {
    if weights.len() != grid.regions() {
        return Err(FgpError::Shape {
            op: "fine_grained_feature",
            left: (weights.len(), 1),
            right: grid.features.shape(),
        });
    }
    grid.features.vec_mat(weights)
}

/// Self-calibration loss with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationLoss {
    pub loss: f64,
    /// `K x d_f`, gradient with respect to each `e_k`.
    pub grad_features: Matrix,
    /// `d_f x 1`
    pub grad_head: Matrix,
}

/// `(1/2K) Σ_k (ReLU(e_k · w_sc) − t_k)²`, with subgradient 0 at the kink.
///
/// With no channels the loss is defined as zero.
pub fn self_calibration_loss(
    features: &Matrix,
    head: &CalibrationHead,
    targets: &[f64],
) -> Result<CalibrationLoss> {
    let k = features.rows();
    if targets.len() != k {
        return Err(FgpError::Shape {
            op: "self_calibration_loss",
            left: features.shape(),
            right: (targets.len(), 1),
        });
    }
    if head.w_sc.rows() != features.cols() {
        return Err(FgpError::Shape {
            op: "self_calibration_loss",
            left: features.shape(),
            right: head.w_sc.shape(),
        });
    }
    let d_f = features.cols();
    let mut grad_features = Matrix::zeros(k, d_f);
    let mut grad_head = Matrix::zeros(d_f, 1);
    if k == 0 {
        return Ok(CalibrationLoss {
            loss: 0.0,
            grad_features,
            grad_head,
        });
    }
    let w = head.w_sc.data();
    let scale = 1.0 / k as f64;
    let mut loss = 0.0;
    for j in 0..k {
        let e = features.row(j);
        let z = dot(e, w);
        let resid = z.max(0.0) - targets[j];
        loss += resid * resid;
        if z > 0.0 {
            let g = scale * resid;
            for (d, gf) in grad_features.row_mut(j).iter_mut().enumerate() {
                *gf = g * w[d];
            }
            for (gh, &x) in grad_head.data_mut().iter_mut().zip(e) {
                *gh += g * x;
            }
        }
    }
    Ok(CalibrationLoss {
        loss: loss * 0.5 * scale,
        grad_features,
        grad_head,
    })
}

/// Logits over `label_space`: global term plus every channel term.
pub fn compose_logits(
    features: &FineGrainedFeatures,
    bank: &ClassifierBank,
    label_space: &[usize],
) -> Result<Vec<f64>> {
    if features.k() != bank.k() {
        return Err(FgpError::domain(format!(
            "features carry {} channels but the bank has {}",
            features.k(),
            bank.k()
        )));
    }
    let missing: Vec<usize> = label_space
        .iter()
        .copied()
        .filter(|&c| !bank.has_row(c))
        .collect();
    if !missing.is_empty() {
        return Err(FgpError::domain(format!(
            "no classifier row for class indices {missing:?}"
        )));
    }
    Ok(label_space
        .iter()
        .map(|&c| {
            let mut o = bank
                .global
                .as_ref()
                .map_or(0.0, |g| g.score(c, &features.global));
            for (j, head) in bank.channels.iter().enumerate() {
                o += head.score(c, features.channels.row(j));
            }
            o
        })
        .collect())
}

/// `−log softmax(logits)[target]` and its gradient `softmax − onehot`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(FgpError::domain("cross entropy over an empty label space"));
    }
    if target >= logits.len() {
        return Err(FgpError::domain(format!(
            "target index {target} outside {} logits",
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits);
    let loss = lse - logits[target];
    if !loss.is_finite() {
        return Err(FgpError::numeric("cross entropy is not finite"));
    }
    let mut grad = softmax(logits)?;
    grad[target] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::params::LinearHead;
    use crate::tensor::{finite_diff_grad, relative_error, seeded_rng};
    use rand::Rng;

    fn grid(rows: &[&[f64]]) -> RegionFeatureGrid {
        RegionFeatureGrid::new(0, Matrix::from_rows(rows).unwrap(), None).unwrap()
    }

    #[test]
    fn single_region_gets_all_weight() {
        let params = AttentionParams {
            w_alpha: Matrix::filled(2, 3, 0.7),
        };
        let a = attention_weights(&[1.0, -2.0], &grid(&[&[1.0, 2.0, 3.0]]), &params).unwrap();
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn identical_regions_are_uniform() {
        let params = AttentionParams {
            w_alpha: Matrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64),
        };
        let g = grid(&[&[0.3, 0.1], &[0.3, 0.1], &[0.3, 0.1], &[0.3, 0.1]]);
        for p in attention_weights(&[0.5, 1.5], &g, &params).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_scores_one_and_two() {
        // w_α = I, v = [1, 0]: scores are the first coordinate of each region
        let params = AttentionParams {
            w_alpha: Matrix::identity(2),
        };
        let a =
            attention_weights(&[1.0, 0.0], &grid(&[&[1.0, 5.0], &[2.0, -3.0]]), &params).unwrap();
        assert!((a[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((a[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn selection_cases() {
        let g = grid(&[&[1.0, 1.0], &[2.0, 0.0], &[0.0, 5.0]]);
        assert_eq!(
            fine_grained_feature(&[0.0, 0.0, 1.0], &g).unwrap(),
            vec![0.0, 5.0]
        );
        let u = fine_grained_feature(&[1.0 / 3.0; 3], &g).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 2.0).abs() < 1e-15);
        let g = grid(&[&[0.0, 4.0], &[4.0, 0.0]]);
        assert_eq!(
            fine_grained_feature(&[0.25, 0.75], &g).unwrap(),
            vec![3.0, 1.0]
        );
        assert!(fine_grained_feature(&[1.0], &g).is_err());
    }

    #[test]
    fn calibration_perfect_fit_and_clamp() {
        let head = CalibrationHead {
            w_sc: Matrix::column_vector(&[1.0, 0.0]),
        };
        let feats = Matrix::from_rows(&[[0.4, 9.0], [1.2, -1.0]]).unwrap();
        let l = self_calibration_loss(&feats, &head, &[0.4, 1.2]).unwrap();
        assert_eq!(l.loss, 0.0);

        let feats = Matrix::from_rows(&[[-3.0, 1.0]]).unwrap();
        let l = self_calibration_loss(&feats, &head, &[0.8]).unwrap();
        assert!((l.loss - 0.32).abs() < 1e-15);
        assert_eq!(l.grad_head, Matrix::zeros(2, 1));
    }

    #[test]
    fn calibration_gradients_match_finite_differences() {
        let mut rng = seeded_rng(17);
        let feats = Matrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let head = CalibrationHead {
            w_sc: Matrix::from_fn(5, 1, |_, _| rng.random_range(0.1..1.0)),
        };
        let targets = [0.3, 0.9, 0.1];
        let l = self_calibration_loss(&feats, &head, &targets).unwrap();
        let num_f = finite_diff_grad(
            |f| self_calibration_loss(f, &head, &targets).unwrap().loss,
            &feats,
            1e-5,
        )
        .unwrap();
        assert!(relative_error(&l.grad_features, &num_f, 1e-10) < 1e-4);
        let num_h = finite_diff_grad(
            |w| {
                let h = CalibrationHead { w_sc: w.clone() };
                self_calibration_loss(&feats, &h, &targets).unwrap().loss
            },
            &head.w_sc,
            1e-5,
        )
        .unwrap();
        assert!(relative_error(&l.grad_head, &num_h, 1e-10) < 1e-4);
    }

    fn features(global: &[f64], channels: &[&[f64]]) -> FineGrainedFeatures {
        let k = channels.len();
        FineGrainedFeatures {
            global: global.to_vec(),
            channels: if k == 0 {
                Matrix::zeros(0, global.len())
            } else {
                Matrix::from_rows(channels).unwrap()
            },
            attention: Matrix::zeros(k, 1),
            grid_shape: None,
        }
    }

    fn bank(global: Option<LinearHead>, channels: Vec<LinearHead>, n: usize) -> ClassifierBank {
        ClassifierBank::from_parts(global, channels, vec![true; n], false, true)
    }

    #[test]
    fn zero_bank_zero_logits() {
        let f = features(&[1.0, 2.0], &[&[3.0, 4.0]]);
        let b = bank(
            Some(LinearHead::zeros(3, 2)),
            vec![LinearHead::zeros(3, 2)],
            3,
        );
        assert_eq!(compose_logits(&f, &b, &[0, 1, 2]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn global_only_is_linear_classifier() {
        let f = features(&[1.0, -2.0], &[]);
        let g = LinearHead {
            weights: Matrix::from_rows(&[[0.5, 0.25], [1.0, 1.0]]).unwrap(),
            bias: vec![0.1, -0.2],
        };
        let b = bank(Some(g), vec![], 2);
        let o = compose_logits(&f, &b, &[0, 1]).unwrap();
        assert!((o[0] - (0.5 - 0.5 + 0.1)).abs() < 1e-15);
        assert!((o[1] - (1.0 - 2.0 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn two_class_one_channel_by_hand() {
        let f = features(&[1.0, 2.0], &[&[-1.0, 0.5]]);
        let g = LinearHead {
            weights: Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            bias: vec![0.5, 0.0],
        };
        let c = LinearHead {
            weights: Matrix::from_rows(&[[2.0, 2.0], [-1.0, 4.0]]).unwrap(),
            bias: vec![0.0, 1.0],
        };
        let b = bank(Some(g), vec![c], 2);
        let o = compose_logits(&f, &b, &[0, 1]).unwrap();
        // class 0: 1 + 0.5 + (-2 + 1) + 0 = 0.5 ; class 1: 2 + 0 + (1 + 2) + 1 = 6
        assert_eq!(o, vec![0.5, 6.0]);
        assert_eq!(compose_logits(&f, &b, &[1]).unwrap(), vec![6.0]);
    }

    #[test]
    fn missing_row_is_domain_error() {
        let f = features(&[1.0], &[]);
        let b = ClassifierBank::from_parts(
            Some(LinearHead::zeros(2, 1)),
            vec![],
            vec![true, false],
            false,
            true,
        );
        assert!(matches!(
            compose_logits(&f, &b, &[0, 1]),
            Err(FgpError::Domain(_))
        ));
    }

    #[test]
    fn cross_entropy_cases() {
        let (l, _) = cross_entropy(&[0.7; 5], 2).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
        let (l, _) = cross_entropy(&[40.0, 0.0, 0.0], 0).unwrap();
        assert!(l < 1e-6);
        assert!(cross_entropy(&[1.0, 2.0], 2).is_err());

        let logits = Matrix::row_vector(&[0.2, -1.3, 0.8, 2.1, -0.4]);
        let (_, g) = cross_entropy(logits.data(), 3).unwrap();
        let num =
            finite_diff_grad(|m| cross_entropy(m.data(), 3).unwrap().0, &logits, 1e-5).unwrap();
        assert!(relative_error(&Matrix::row_vector(&g), &num, 1e-10) < 1e-6);
    }
}
