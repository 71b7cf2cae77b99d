//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export has a plain Rust twin returning [`fgp::Result`] so the logic
//! can be tested natively; the `#[wasm_bindgen]` wrappers only map errors.

use serde_json::json;
use wasm_bindgen::prelude::*;

use fgp::attention::RegionFeatureGrid;
use fgp::dataset::{generate_synthetic_world, Dataset, SyntheticWorldSpec};
use fgp::pipeline::{train_pipeline, PipelineConfig, PipelineRun};
use fgp::semantic::{kmeans_best_of, KMeansConfig};
use fgp::FgpError;

fn js(err: FgpError) -> JsError {
    JsError::new(&err.to_string())
}

/// Clusters flat `[x0, y0, x1, y1, ...]` points and returns
/// `{"centroids": [[x, y], ...], "assignment": [...], "objective": f}`.
pub fn cluster_points(xy: &[f64], k: usize, seed: u64) -> fgp::Result<String> {
    if !xy.len().is_multiple_of(2) {
        return Err(FgpError::validation("points must come in x, y pairs"));
    }
    let points: Vec<Vec<f64>> = xy.chunks(2).map(<[f64]>::to_vec).collect();
    let config = KMeansConfig {
        k,
        seed,
        restarts: 5,
        ..KMeansConfig::default()
    };
    let fit = kmeans_best_of(&points, &config)?;
    let centroids: Vec<&[f64]> = fit.centroids.row_iter().collect();
    Ok(json!({
        "centroids": centroids,
        "assignment": fit.assignment,
        "objective": fit.objective(),
    })
    .to_string())
}

#[wasm_bindgen(js_name = clusterPoints)]
pub fn cluster_points_js(xy: &[f64], k: usize, seed: u32) -> Result<String, JsError> {
    cluster_points(xy, k, seed.into()).map_err(js)
}

/// A small synthetic world trained end to end in the browser.
#[wasm_bindgen]
pub struct Demo {
    dataset: Dataset,
    config: PipelineConfig,
    run: PipelineRun,
}

impl Demo {
    pub fn build(seed: u64, k: usize, layers: usize) -> fgp::Result<Demo> {
        let spec = SyntheticWorldSpec {
            samples_per_class: 16,
            seed,
            ..SyntheticWorldSpec::default()
        };
        let dataset = generate_synthetic_world(&spec)?.dataset()?;
        let mut config = PipelineConfig {
            seed,
            k,
            ..PipelineConfig::default()
        };
        config.gcn.layers = layers;
        config.stage1.epochs = 80;
        config.gcn.hidden = 64;
        config.gcn.epochs = 500;
        config.stage2.epochs = 10;
        let run = train_pipeline(&config, &dataset)?;
        Ok(Demo {
            dataset,
            config,
            run,
        })
    }

    pub fn report_json(&self) -> fgp::Result<String> {
        Ok(self.run.evaluate(&self.config, &self.dataset)?.to_json())
    }

    fn grid(&self, sample: usize) -> fgp::Result<&RegionFeatureGrid> {
        self.dataset
            .test
            .get(sample)
            .map(|s| &s.grid)
            .ok_or_else(|| FgpError::validation(format!("no test sample {sample}")))
    }

    /// Attention of one channel over the region grid, plus the true class
    /// and the top unseen guesses.
    pub fn inspect(&self, sample: usize, channel: usize) -> fgp::Result<String> {
        let grid = self.grid(sample)?;
        let features = self.run.model.features(grid)?;
        if channel >= features.k() {
            return Err(FgpError::validation(format!(
                "channel {channel} out of range for K = {}",
                features.k()
            )));
        }
        let (rows, cols) = grid.grid_shape.unwrap_or((1, features.attention.cols()));
        let unseen = self.dataset.unseen_indices();
        let logits = self.run.model.logits(grid, &unseen)?;
        let mut order: Vec<usize> = (0..unseen.len()).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        let name = |c: usize| self.dataset.classes[c].name.clone();
        let top: Vec<_> = order
            .iter()
            .take(3)
            .map(|&i| json!({"class": name(unseen[i]), "score": logits[i]}))
            .collect();
        Ok(json!({
            "rows": rows,
            "cols": cols,
            "attention": features.attention.row(channel),
            "truth": name(self.dataset.test[sample].class),
            "top": top,
        })
        .to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, k: usize, layers: usize) -> Result<Demo, JsError> {
        Demo::build(seed.into(), k, layers).map_err(js)
    }

    #[wasm_bindgen(js_name = report)]
    pub fn report_js(&self) -> Result<String, JsError> {
        self.report_json().map_err(js)
    }

    #[wasm_bindgen(js_name = inspect)]
    pub fn inspect_js(&self, sample: usize, channel: usize) -> Result<String, JsError> {
        self.inspect(sample, channel).map_err(js)
    }

    #[wasm_bindgen(getter, js_name = testSamples)]
    pub fn test_samples(&self) -> usize {
        self.dataset.test.len()
    }

    #[wasm_bindgen(getter)]
    pub fn channels(&self) -> usize {
        self.run.model.k()
    }
}
