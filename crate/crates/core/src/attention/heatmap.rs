//! Attention maps as CSV grids and 8-bit greyscale PGM images.

use std::fs;
use std::path::{Path, PathBuf};

use super::forward::FineGrainedFeatures;
use crate::error::{FgpError, Result};
use crate::tensor::Matrix;

/// One line per grid row, values comma separated. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn heatmap_csv(alpha: &[f64], shape: (usize, usize)) -> Result<String> {
    let (h, w) = shape;
    if h * w != alpha.len() {
        return Err(FgpError::domain(format!(
            "grid {h}x{w} does not match {} weights",
            alpha.len()
        )));
    }
    let mut out = String::new();
    for row in alpha.chunks(w.max(1)).take(h) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_heatmap_csv(text: &str) -> Result<Matrix> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        FgpError::format(format!("heatmap line {}", i + 1), e.to_string())
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Binary PGM (P5). Values are min-max scaled to 0..=255; a constant map is all zeros.
pub fn heatmap_pgm(alpha: &[f64], shape: (usize, usize)) -> Result<Vec<u8>> {
    let (h, w) = shape;
    if h * w != alpha.len() {
        return Err(FgpError::domain(format!(
            "grid {h}x{w} does not match {} weights",
            alpha.len()
        )));
    }
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(alpha.iter().map(|&a| {
        if span > 0.0 {
            ((a - min) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

/// Writes `<stem>.csv` and `<stem>.pgm` for channel `channel` and returns both paths.
pub fn export_attention_heatmap(
    features: &FineGrainedFeatures,
    channel: usize,
    stem: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let shape = features
        .grid_shape
        .ok_or_else(|| FgpError::domain("sample has no grid shape; cannot lay out a heatmap"))?;
    if channel >= features.k() {
        return Err(FgpError::domain(format!(
            "channel {channel} out of range for {} channels",
            features.k()
        )));
    }
    let alpha = features.attention.row(channel);
    let csv_path = stem.with_extension("csv");
    let pgm_path = stem.with_extension("pgm");
    fs::write(&csv_path, heatmap_csv(alpha, shape)?).map_err(|e| FgpError::io(&csv_path, e))?;
    fs::write(&pgm_path, heatmap_pgm(alpha, shape)?).map_err(|e| FgpError::io(&pgm_path, e))?;
    Ok((csv_path, pgm_path))
}
