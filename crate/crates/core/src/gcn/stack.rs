use super::channel::{backward, forward_cached, gcn_forward, GcnChannel, NORM_EPS};
use crate::attention::{ClassifierBank, LinearHead};
use crate::error::{FgpError, Result};
use crate::tensor::{l2_normalize_rows, seeded_rng, AdamConfig, AdamState, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub slope: f64,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 2048,
            epochs: 3000,
            lr: 1e-3,
            weight_decay: 5e-4,
            dropout: 0.5,
            slope: 0.2,
            seed: 0,
        }
    }
}

/// Independent channels sharing one graph. Channel order matches
/// [`ClassifierBank::heads`]: fine-grained channels first, global last.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    pub channels: Vec<GcnChannel>,
}

impl GcnStack {
    pub fn new(num_channels: usize, d_in: usize, d_out: usize, config: &GcnConfig) -> Result<Self> {
        let mut rng = seeded_rng(config.seed);
        let channels = (0..num_channels)
            .map(|_| {
                GcnChannel::new(
                    d_in,
                    config.hidden,
                    d_out,
                    config.layers,
                    config.slope,
                    config.dropout,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { channels })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Evaluation-mode predictions, one `|C| x (d_f+1)` matrix per channel.
    pub fn predict(&self, a_norm: &Matrix, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        check_inputs(self, inputs)?;
        let mut rng = seeded_rng(0);
        self.channels
            .iter()
            .zip(inputs)
            .map(|(c, h0)| gcn_forward(c, a_norm, h0, false, &mut rng))
            .collect()
    }
}

fn check_inputs(stack: &GcnStack, inputs: &[Matrix]) -> Result<()> {
    if inputs.len() != stack.len() {
        return Err(FgpError::domain(format!(
            "{} channel inputs for {} channels",
            inputs.len(),
            stack.len()
        )));
    }
    Ok(())
}

/// Targets per head: `[w | b]` of each seen class, L2-normalised.
pub fn ground_truth_rows(bank: &ClassifierBank, seen: &[usize]) -> Result<Vec<Matrix>> {
    if !bank.is_trained() {
        return Err(FgpError::State(
            "classifier bank has not been trained; no targets to regress".into(),
        ));
    }
    bank.heads()
        .map(|h| {
            let d_f = h.weights.cols();
            let rows = Matrix::from_fn(seen.len(), d_f + 1, |i, j| {
                if j < d_f {
                    h.weights.get(seen[i], j)
                } else {
                    h.bias[seen[i]]
                }
            });
            Ok(l2_normalize_rows(&rows, NORM_EPS))
        })
        .collect()
}

/// `(1 / (2·|C_tr|·n_channels)) Σ (w − w̃)²` over the seen rows, which lead
/// every prediction matrix. Returns the loss and `dL/dpredicted`.
pub fn gcn_loss(predicted: &[Matrix], targets: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
    if predicted.len() != targets.len() || targets.is_empty() {
        return Err(FgpError::domain(format!(
            "{} predictions for {} targets",
            predicted.len(),
            targets.len()
        )));
    }
    let seen = targets[0].rows();
    if seen == 0 {
        return Err(FgpError::domain("no seen classes to fit"));
    }
    let scale = 1.0 / (seen * targets.len()) as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(predicted.len());
    for (p, t) in predicted.iter().zip(targets) {
        if p.cols() != t.cols() || p.rows() < t.rows() || t.rows() != seen {
            return Err(FgpError::Shape {
                op: "gcn_loss",
                left: p.shape(),
                right: t.shape(),
            });
        }
        let mut g = Matrix::zeros(p.rows(), p.cols());
        for i in 0..seen {
            for j in 0..p.cols() {
                let r = p.get(i, j) - t.get(i, j);
                loss += r * r;
                g.set(i, j, scale * r);
            }
        }
        grads.push(g);
    }
    Ok((0.5 * scale * loss, grads))
}

/// Loss and θ gradients of the whole stack for one pass.
pub fn stack_loss_and_grad(
    stack: &GcnStack,
    a_norm: &Matrix,
    inputs: &[Matrix],
    targets: &[Matrix],
    train: bool,
    rngs: &mut [crate::tensor::Rng],
) -> Result<(f64, Vec<Vec<Matrix>>)> {
    check_inputs(stack, inputs)?;
    let caches = stack
        .channels
        .iter()
        .zip(inputs)
        .zip(rngs.iter_mut())
        .map(|((c, h0), rng)| forward_cached(c, a_norm, h0, train, rng))
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<Matrix> = caches.iter().map(|c| c.output.clone()).collect();
    let (loss, d_pred) = gcn_loss(&predicted, targets)?;
    let grads = stack
        .channels
        .iter()
        .zip(&caches)
        .zip(&d_pred)
        .map(|((c, cache), d)| backward(c, a_norm, cache, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, grads))
}

/// Full-batch Adam on every channel. Returns the per-epoch loss.
pub fn train_gcn(
    stack: &mut GcnStack,
    a_norm: &Matrix,
    inputs: &[Matrix],
    targets: &[Matrix],
    config: &GcnConfig,
) -> Result<Vec<f64>> {
    let adam = AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    };
    let mut states: Vec<Vec<AdamState>> = stack
        .channels
        .iter()
        .map(|c| {
            c.layers
                .iter()
                .map(|l| AdamState::new(l.shape(), adam))
                .collect()
        })
        .collect();
    // one dropout stream per channel keeps channels independent
    let mut rngs: Vec<_> = (0..stack.len())
        .map(|i| seeded_rng(config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1))))
        .collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = stack_loss_and_grad(stack, a_norm, inputs, targets, true, &mut rngs)?;
        if !loss.is_finite() {
            return Err(FgpError::numeric(format!(
                "GCN loss diverged at epoch {epoch}"
            )));
        }
        curve.push(loss);
        for ((channel, g), st) in stack.channels.iter_mut().zip(&grads).zip(&mut states) {
            for ((layer, gl), s) in channel.layers.iter_mut().zip(g).zip(st.iter_mut()) {
                s.step(layer.data_mut(), gl.data())?;
            }
        }
    }
    Ok(curve)
}

/// Overwrites every row of `bank` with the predictions and freezes it.
pub fn replace_classifiers(bank: &ClassifierBank, predicted: &[Matrix]) -> Result<ClassifierBank> {
    if predicted.len() != bank.num_heads() {
        return Err(FgpError::domain(format!(
            "{} predicted channels for {} classifier heads",
            predicted.len(),
            bank.num_heads()
        )));
    }
    let n = bank.num_classes();
    let d_f = bank.feature_dim();
    for p in predicted {
        if p.cols() != d_f + 1 {
            return Err(FgpError::Shape {
                op: "replace_classifiers",
                left: p.shape(),
                right: (n, d_f + 1),
            });
        }
        if p.rows() < n {
            let missing: Vec<usize> = (p.rows()..n).collect();
            return Err(FgpError::domain(format!(
                "predictions do not cover class indices {missing:?}"
            )));
        }
    }
    let mut out = bank.clone();
    for (head, p) in out.heads_mut().zip(predicted) {
        *head = LinearHead {
            weights: Matrix::from_fn(n, d_f, |i, j| p.get(i, j)),
            bias: (0..n).map(|i| p.get(i, d_f)).collect(),
        };
    }
    out.set_all_present();
    out.mark_trained();
    out.freeze();
    Ok(out)
}
