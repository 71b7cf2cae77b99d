use super::forward::{compose_logits, cross_entropy, self_calibration_loss, FineGrainedFeatures};
use super::params::{
    AttentionParams, CalibrationHead, ClassifierBank, FeatureAdapter, LinearHead, RegionFeatureGrid,
};
use crate::error::{FgpError, Result};
use crate::tensor::{axpy, dot, softmax, Matrix, Rng};

/// All parameters that act on region features at classification time.
#[derive(Debug, Clone, PartialEq)]
pub struct FgpModel {
    /// Key semantic embeddings, `K x d_c`.
    pub centroids: Matrix,
    pub attention: AttentionParams,
    pub head: CalibrationHead,
    pub adapter: FeatureAdapter,
    pub bank: ClassifierBank,
}

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub attention: bool,
    pub head: bool,
    pub bank: bool,
    pub adapter: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        attention: true,
        head: true,
        bank: true,
        adapter: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    pub calibration: f64,
}

/// Gradients of the batch-mean loss. Head gradients follow
/// [`ClassifierBank::heads`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_alpha: Matrix,
    pub w_sc: Matrix,
    pub adapter: Matrix,
    pub heads: Vec<LinearHead>,
}

impl FgpModel {
    /// Random attention and calibration head; zero classifier rows.
    pub fn new(
        centroids: Matrix,
        d_f: usize,
        num_classes: usize,
        seen: &[usize],
        use_global: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let d_c = centroids.cols();
        let attention = AttentionParams::random(d_c, d_f, rng);
        let head = CalibrationHead::random(d_f, rng);
        let bank = ClassifierBank::zeros(num_classes, d_f, centroids.rows(), use_global, seen)?;
        Ok(Self {
            centroids,
            attention,
            head,
            adapter: FeatureAdapter::identity(d_f),
            bank,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.adapter.matrix.rows()
    }

    /// One attention query per centroid, `K x d_f`.
    pub fn queries(&self) -> Result<Matrix> {
        self.centroids.matmul(&self.attention.w_alpha)
    }

    fn check_grid(&self, grid: &RegionFeatureGrid) -> Result<()> {
        if grid.feature_dim() != self.feature_dim() {
            return Err(FgpError::Shape {
                op: "FgpModel::features",
                left: grid.features.shape(),
                right: self.adapter.matrix.shape(),
            });
        }
        Ok(())
    }

    pub fn features(&self, grid: &RegionFeatureGrid) -> Result<FineGrainedFeatures> {
        self.check_grid(grid)?;
        let queries = self.queries()?;
        Ok(self.forward(grid, &queries)?.features)
    }

    pub fn logits(&self, grid: &RegionFeatureGrid, label_space: &[usize]) -> Result<Vec<f64>> {
        let f = self.features(grid)?;
        compose_logits(&f, &self.bank, label_space)
    }

    fn forward(&self, grid: &RegionFeatureGrid, queries: &Matrix) -> Result<ForwardCache> {
        let adapted = grid.features.matmul(&self.adapter.matrix)?;
        let k = queries.rows();
        let regions = adapted.rows();
        let mut attention = Matrix::zeros(k, regions);
        let mut channels = Matrix::zeros(k, adapted.cols());
        for j in 0..k {
            let scores = adapted.mat_vec(queries.row(j))?;
            let alpha = softmax(&scores)?;
            channels
                .row_mut(j)
                .copy_from_slice(&adapted.vec_mat(&alpha)?);
            attention.row_mut(j).copy_from_slice(&alpha);
        }
        let global = adapted.column_mean();
        Ok(ForwardCache {
            adapted,
            features: FineGrainedFeatures {
                global,
                channels,
                attention,
                grid_shape: grid.grid_shape,
            },
        })
    }

    /// Mean of `L_ce + λ·L_sc` over `batch` and its analytic gradients.
    ///
    /// `batch` holds `(grid, class index)`; `calibration` is `C x K`, row per
    /// class index. A frozen bank always reports zero head gradients.
    pub fn backward_batch(
        &self,
        batch: &[(&RegionFeatureGrid, usize)],
        label_space: &[usize],
        calibration: &Matrix,
        lambda: f64,
        trainable: Trainable,
    ) -> Result<(LossBreakdown, Gradients)> {
        if batch.is_empty() {
            return Err(FgpError::domain("empty batch"));
        }
        let k = self.k();
        let d_f = self.feature_dim();
        let queries = self.queries()?;
        let train_bank = trainable.bank && !self.bank.is_frozen();

        let mut grads = Gradients {
            w_alpha: Matrix::zeros(self.attention.w_alpha.rows(), d_f),
            w_sc: Matrix::zeros(d_f, 1),
            adapter: Matrix::zeros(d_f, d_f),
            heads: self
                .bank
                .heads()
                .map(|h| LinearHead::zeros(h.weights.rows(), d_f))
                .collect(),
        };
        let mut dq = Matrix::zeros(k, d_f);
        let mut totals = LossBreakdown::default();
        let inv_b = 1.0 / batch.len() as f64;
        let global_slot = self.bank.k();

        for &(grid, class) in batch {
            self.check_grid(grid)?;
            let target = label_space
                .iter()
                .position(|&c| c == class)
                .ok_or_else(|| {
                    FgpError::domain(format!("class index {class} not in the label space"))
                })?;
            let cache = self.forward(grid, &queries)?;
            let f = &cache.features;
            let logits = compose_logits(f, &self.bank, label_space)?;
            let (ce, g_logits) = cross_entropy(&logits, target)?;
            let targets = if k > 0 {
                calibration.row(class)
            } else {
                &[][..]
            };
            let sc = self_calibration_loss(&f.channels, &self.head, targets)?;
            totals.cross_entropy += ce * inv_b;
            totals.calibration += sc.loss * inv_b;

            // dL/dlogits, already averaged over the batch
            let g_o: Vec<f64> = g_logits.iter().map(|g| g * inv_b).collect();

            if train_bank {
                for (slot, head_grad) in grads.heads.iter_mut().enumerate() {
                    let feat = if slot == global_slot {
                        &f.global[..]
                    } else {
                        f.channels.row(slot)
                    };
                    for (&c, &g) in label_space.iter().zip(&g_o) {
                        axpy(g, feat, head_grad.weights.row_mut(c));
                        head_grad.bias[c] += g;
                    }
                }
            }
            if trainable.head && k > 0 {
                axpy(lambda * inv_b, sc.grad_head.data(), grads.w_sc.data_mut());
            }
            if !(trainable.attention || trainable.adapter) {
                continue;
            }

            let regions = cache.adapted.rows();
            let mut d_adapted = Matrix::zeros(regions, d_f);
            if let Some(g) = &self.bank.global {
                let mut de_g = vec![0.0; d_f];
                for (&c, &go) in label_space.iter().zip(&g_o) {
                    axpy(go, g.weights.row(c), &mut de_g);
                }
                let inv_r = 1.0 / regions as f64;
                for r in 0..regions {
                    axpy(inv_r, &de_g, d_adapted.row_mut(r));
                }
            }
            for j in 0..k {
                let mut de = vec![0.0; d_f];
                let head = &self.bank.channels[j];
                for (&c, &go) in label_space.iter().zip(&g_o) {
                    axpy(go, head.weights.row(c), &mut de);
                }
                axpy(lambda * inv_b, sc.grad_features.row(j), &mut de);

                let alpha = f.attention.row(j);
                let d_alpha: Vec<f64> = cache.adapted.row_iter().map(|row| dot(row, &de)).collect();
                let mean = dot(alpha, &d_alpha);
                let q = queries.row(j);
                for r in 0..regions {
                    let ds = alpha[r] * (d_alpha[r] - mean);
                    let row = d_adapted.row_mut(r);
                    axpy(alpha[r], &de, row);
                    axpy(ds, q, row);
                    axpy(ds, cache.adapted.row(r), dq.row_mut(j));
                }
            }
            if trainable.adapter {
                grads
                    .adapter
                    .add_assign(&grid.features.t_matmul(&d_adapted)?)?;
            }
        }

        if trainable.attention && k > 0 {
            // q_j = w_αᵀ v_j
            grads.w_alpha = self.centroids.t_matmul(&dq)?;
        }
        totals.total = totals.cross_entropy + lambda * totals.calibration;
        if !totals.total.is_finite() {
            return Err(FgpError::numeric("training loss is not finite"));
        }
        Ok((totals, grads))
    }
}

struct ForwardCache {
    adapted: Matrix,
    features: FineGrainedFeatures,
}
