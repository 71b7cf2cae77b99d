//! Elementwise activations, normalisation and stochastic masks.

use rand::Rng;

use super::matrix::{dot, norm, Matrix};
use crate::error::{FgpError, Result};

/// Normalised exponential with max subtraction.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(FgpError::domain("softmax of an empty vector"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(FgpError::numeric("softmax input is not finite"));
    }
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// `log Σ exp(x)` computed stably.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln()
}

#[inline]
pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    debug_assert!((0.0..1.0).contains(&slope));
    x.map(|v| leaky_relu_scalar(v, slope))
}

/// Divides each row by `max(‖row‖, eps)`.
pub fn l2_normalize_rows(m: &Matrix, eps: f64) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = norm(row).max(eps);
        row.iter_mut().for_each(|x| *x /= n);
    }
    out
}

/// `1 - cos(a, b)`, or 1 when either side is the zero vector.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FgpError::Shape {
            op: "cosine_distance",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    if a.is_empty() {
        return Err(FgpError::domain("cosine distance of empty vectors"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Inverted-dropout mask: 0 with probability `rate`, else `1/(1-rate)`.
///
/// Evaluation mode (`train == false`) always yields all ones.
pub fn dropout_mask<G: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rate: f64,
    train: bool,
    rng: &mut G,
) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(FgpError::domain(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !train || rate == 0.0 {
        return Ok(Matrix::filled(rows, cols, 1.0));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Matrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_point() {
        // 1/(1+e) and e/(1+e)
        let p = softmax(&[1.0, 2.0]).unwrap();
        assert!((p[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((p[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        let a = softmax(&x).unwrap();
        let b = softmax(&shifted).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_empty_is_domain_error() {
        assert!(matches!(softmax(&[]), Err(FgpError::Domain(_))));
    }

    #[test]
    fn leaky_branches() {
        let m = Matrix::row_vector(&[3.0, -1.0, 0.0]);
        let out = leaky_relu(&m, 0.2);
        assert_eq!(out.data(), &[3.0, -0.2, 0.0]);
    }

    #[test]
    fn l2_rows() {
        let m = Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        let n = l2_normalize_rows(&m, 1e-12);
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(n.row(1), &[0.0, 0.0]);
        assert_eq!(n.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!(cosine_distance(&a, &a).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_distance(&a, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(cosine_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dropout_rate_zero_and_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = dropout_mask(4, 5, 0.0, true, &mut rng).unwrap();
        assert!(m.data().iter().all(|&x| x == 1.0));
        let m = dropout_mask(4, 5, 0.5, false, &mut rng).unwrap();
        assert!(m.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn dropout_mean_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = dropout_mask(100, 1000, 0.5, true, &mut rng).unwrap();
        let mean = m.data().iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(m.data().iter().all(|&x| x == 0.0 || x == 2.0));
    }

    #[test]
    fn dropout_is_seeded() {
        let a = dropout_mask(10, 10, 0.3, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = dropout_mask(10, 10, 0.3, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_mask(1, 1, 1.0, true, &mut rng).is_err());
    }
}
