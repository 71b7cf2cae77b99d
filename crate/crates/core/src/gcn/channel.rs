//! One graph-convolution channel: `H^{l+1} = σ(Â H^l θ^l)`.

use crate::error::{FgpError, Result};
use crate::tensor::{
    dot, dropout_mask, glorot_uniform, l2_normalize_rows, leaky_relu, Matrix, Rng,
};

/// Normalisation floor shared by predictions and targets.
pub const NORM_EPS: f64 = 1e-12;

/// Layer weights of one channel. Widths chain `d_in → hidden… → d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnChannel {
    pub layers: Vec<Matrix>,
    pub slope: f64,
    pub dropout: f64,
}

impl GcnChannel {
    pub fn new(
        d_in: usize,
        hidden: usize,
        d_out: usize,
        num_layers: usize,
        slope: f64,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(FgpError::domain("a GCN channel needs at least one layer"));
        }
        let mut widths = vec![d_in];
        widths.extend(std::iter::repeat_n(hidden, num_layers - 1));
        widths.push(d_out);
        let layers = widths
            .windows(2)
            .map(|w| glorot_uniform(w[0], w[1], rng))
            .collect();
        Self::from_layers(layers, slope, dropout)
    }

    pub fn from_layers(layers: Vec<Matrix>, slope: f64, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(FgpError::domain("a GCN channel needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(FgpError::Shape {
                    op: "GcnChannel layers",
                    left: w[0].shape(),
                    right: w[1].shape(),
                });
            }
        }
        Ok(Self {
            layers,
            slope,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").cols()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Intermediate values kept for the backward pass.
pub(crate) struct ChannelCache {
    /// `Â X_l` for every layer.
    propagated: Vec<Matrix>,
    /// Pre-activations of hidden layers.
    pre_activations: Vec<Matrix>,
    masks: Vec<Matrix>,
    /// Output before normalisation.
    raw: Matrix,
    pub(crate) output: Matrix,
}

pub(crate) fn forward_cached(
    channel: &GcnChannel,
    a_norm: &Matrix,
    h0: &Matrix,
    train: bool,
    rng: &mut Rng,
) -> Result<ChannelCache> {
    if h0.cols() != channel.input_dim() {
        return Err(FgpError::Shape {
            op: "gcn_forward",
            left: h0.shape(),
            right: channel.layers[0].shape(),
        });
    }
    let last = channel.depth() - 1;
    let mut x = h0.clone();
    let mut propagated = Vec::with_capacity(channel.depth());
    let mut pre_activations = Vec::new();
    let mut masks = Vec::new();
    for (l, theta) in channel.layers.iter().enumerate() {
        let p = a_norm.matmul(&x)?;
        let z = p.matmul(theta)?;
        propagated.push(p);
        if l < last {
            let act = leaky_relu(&z, channel.slope);
            let mask = dropout_mask(act.rows(), act.cols(), channel.dropout, train, rng)?;
            x = act.hadamard(&mask)?;
            pre_activations.push(z);
            masks.push(mask);
        } else {
            x = z;
        }
    }
    let output = l2_normalize_rows(&x, NORM_EPS);
    Ok(ChannelCache {
        propagated,
        pre_activations,
        masks,
        raw: x,
        output,
    })
}

/// Forward pass ending in row-wise L2 normalisation. Dropout only in train mode.
pub fn gcn_forward(
    channel: &GcnChannel,
    a_norm: &Matrix,
    h0: &Matrix,
    train: bool,
    rng: &mut Rng,
) -> Result<Matrix> {
    Ok(forward_cached(channel, a_norm, h0, train, rng)?.output)
}

/// Back-propagates `d_output` (gradient w.r.t. the normalised rows) to every θ.
pub(crate) fn backward(
    channel: &GcnChannel,
    a_norm: &Matrix,
    cache: &ChannelCache,
    d_output: &Matrix,
) -> Result<Vec<Matrix>> {
    // through y = x / max(‖x‖, eps)
    let mut dz = Matrix::zeros(cache.raw.rows(), cache.raw.cols());
    for i in 0..cache.raw.rows() {
        let x = cache.raw.row(i);
        let y = cache.output.row(i);
        let g = d_output.row(i);
        let n = dot(x, x).sqrt();
        let out = dz.row_mut(i);
        if n > NORM_EPS {
            let proj = dot(y, g);
            for d in 0..out.len() {
                out[d] = (g[d] - y[d] * proj) / n;
            }
        } else {
            for d in 0..out.len() {
                out[d] = g[d] / NORM_EPS;
            }
        }
    }

    let mut grads = vec![Matrix::zeros(0, 0); channel.depth()];
    for l in (0..channel.depth()).rev() {
        grads[l] = cache.propagated[l].t_matmul(&dz)?;
        if l == 0 {
            break;
        }
        let dp = dz.matmul_t(&channel.layers[l])?;
        let dx = a_norm.t_matmul(&dp)?;
        let z = &cache.pre_activations[l - 1];
        let mask = &cache.masks[l - 1];
        let slope = channel.slope;
        dz = Matrix::from_fn(dx.rows(), dx.cols(), |i, j| {
            let deriv = if z.get(i, j) > 0.0 { 1.0 } else { slope };
            dx.get(i, j) * mask.get(i, j) * deriv
        });
    }
    Ok(grads)
}
