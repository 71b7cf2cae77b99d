use crate::error::{FgpError, Result};
use crate::tensor::{glorot_uniform, Matrix, Rng};

/// Region features of one sample, one region per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureGrid {
    pub sample_id: u32,
    pub features: Matrix,
    /// `(h, w)` with `h * w == R`, needed for heatmap export.
    pub grid_shape: Option<(usize, usize)>,
}

impl RegionFeatureGrid {
    pub fn new(
        sample_id: u32,
        features: Matrix,
        grid_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(FgpError::domain("a region grid needs at least one region"));
        }
        if !features.is_finite() {
            return Err(FgpError::numeric(format!(
                "sample {sample_id} has non-finite region features"
            )));
        }
        if let Some((h, w)) = grid_shape {
            if h * w != features.rows() {
                return Err(FgpError::domain(format!(
                    "grid shape {h}x{w} does not cover {} regions",
                    features.rows()
                )));
            }
        }
        Ok(Self {
            sample_id,
            features,
            grid_shape,
        })
    }

    pub fn regions(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

/// Bilinear map between centroid space and region-feature space, `d_c x d_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_alpha: Matrix,
}

impl AttentionParams {
    pub fn random(d_c: usize, d_f: usize, rng: &mut Rng) -> Self {
        Self {
            w_alpha: glorot_uniform(d_c, d_f, rng),
        }
    }
}

/// Projection used by the self-calibration loss, `d_f x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationHead {
    pub w_sc: Matrix,
}

impl CalibrationHead {
    pub fn random(d_f: usize, rng: &mut Rng) -> Self {
        Self {
            w_sc: glorot_uniform(d_f, 1, rng),
        }
    }
}

/// Square map applied to every region row before attention; starts at identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAdapter {
    pub matrix: Matrix,
}

impl FeatureAdapter {
    pub fn identity(d_f: usize) -> Self {
        Self {
            matrix: Matrix::identity(d_f),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix::identity(self.matrix.rows())
    }
}

/// One linear classifier: weight rows `|C| x d_f` and a bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(classes: usize, d_f: usize) -> Self {
        Self {
            weights: Matrix::zeros(classes, d_f),
            bias: vec![0.0; classes],
        }
    }

    #[inline]
    pub fn score(&self, class: usize, feature: &[f64]) -> f64 {
        crate::tensor::dot(self.weights.row(class), feature) + self.bias[class]
    }
}

/// Global classifier plus one classifier per fine-grained channel.
///
/// Only rows flagged present may be scored. Stage one fills the seen rows;
/// the GCN replacement fills all rows and freezes the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBank {
    pub global: Option<LinearHead>,
    pub channels: Vec<LinearHead>,
    present: Vec<bool>,
    frozen: bool,
    trained: bool,
}

impl ClassifierBank {
    /// Zero rows for the classes in `seen`, absent rows elsewhere.
    pub fn zeros(
        num_classes: usize,
        d_f: usize,
        k: usize,
        use_global: bool,
        seen: &[usize],
    ) -> Result<Self> {
        let mut bank = Self::random(
            num_classes,
            d_f,
            k,
            use_global,
            seen,
            &mut crate::tensor::seeded_rng(0),
        )?;
        for h in bank.heads_mut() {
            *h = LinearHead::zeros(num_classes, d_f);
        }
        Ok(bank)
    }

    /// Random rows for the classes in `seen`, absent rows elsewhere.
    pub fn random(
        num_classes: usize,
        d_f: usize,
        k: usize,
        use_global: bool,
        seen: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        if k == 0 && !use_global {
            return Err(FgpError::domain(
                "classifier bank needs a global head or at least one channel",
            ));
        }
        let mut present = vec![false; num_classes];
        for &c in seen {
            if c >= num_classes {
                return Err(FgpError::domain(format!(
                    "seen class index {c} out of range"
                )));
            }
            present[c] = true;
        }
        let bound = (6.0 / (d_f + seen.len().max(1)) as f64).sqrt();
        let head = |rng: &mut Rng| {
            use rand::Rng as _;
            let mut h = LinearHead::zeros(num_classes, d_f);
            for &c in seen {
                for x in h.weights.row_mut(c) {
                    *x = rng.random_range(-bound..bound);
                }
            }
            h
        };
        let global = use_global.then(|| head(rng));
        let channels = (0..k).map(|_| head(rng)).collect();
        Ok(Self {
            global,
            channels,
            present,
            frozen: false,
            trained: false,
        })
    }

    pub(crate) fn from_parts(
        global: Option<LinearHead>,
        channels: Vec<LinearHead>,
        present: Vec<bool>,
        frozen: bool,
        trained: bool,
    ) -> Self {
        Self {
            global,
            channels,
            present,
            frozen,
            trained,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.present.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.global
            .as_ref()
            .or(self.channels.first())
            .map_or(0, |h| h.weights.cols())
    }

    pub fn k(&self) -> usize {
        self.channels.len()
    }

    pub fn uses_global(&self) -> bool {
        self.global.is_some()
    }

    /// Number of heads: channels plus the global one.
    pub fn num_heads(&self) -> usize {
        self.channels.len() + usize::from(self.global.is_some())
    }

    /// Heads in GCN channel order: fine-grained channels first, global last.
    pub fn heads(&self) -> impl Iterator<Item = &LinearHead> {
        self.channels.iter().chain(self.global.iter())
    }

    pub fn heads_mut(&mut self) -> impl Iterator<Item = &mut LinearHead> {
        self.channels.iter_mut().chain(self.global.iter_mut())
    }

    pub fn has_row(&self, class: usize) -> bool {
        self.present.get(class).copied().unwrap_or(false)
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub(crate) fn set_all_present(&mut self) {
        self.present.iter_mut().for_each(|p| *p = true);
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Mutable heads for an optimiser step; refused once frozen.
    pub fn heads_for_update(&mut self) -> Result<impl Iterator<Item = &mut LinearHead>> {
        if self.frozen {
            return Err(FgpError::FrozenBank);
        }
        Ok(self.heads_mut())
    }
}
