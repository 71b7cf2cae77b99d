//! Lloyd's k-means with greedy k-means++ seeding.
//!
//! Clustering uses squared Euclidean distance. Ties in assignment go to the
//! lowest centroid index, and every random draw comes from a ChaCha stream
//! seeded by the caller, so a given `(points, k, seed)` always produces the
//! same centroids bit for bit.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{FgpError, Result};
use crate::tensor::{axpy, seeded_rng, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent seedings (seed, seed+1, ...); the lowest objective wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 3,
            seed: 0,
            max_iters: 300,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

/// The key semantic embeddings: one centroid per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticCentroids {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub seed: u64,
    /// Objective after every assignment step, starting from the seeding.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl SemanticCentroids {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        self.centroids.row(k)
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.row_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn lloyd_objective(points: &[Vec<f64>], centroids: &Matrix, assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, centroids.row(a)))
        .sum()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(FgpError::domain("k-means needs k >= 1"));
    }
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(FgpError::domain(
            "k-means points have inconsistent dimensions",
        ));
    }
    let distinct = distinct_count(points);
    if distinct < k {
        return Err(FgpError::domain(format!(
            "k-means needs at least k = {k} distinct points, found {distinct}"
        )));
    }
    Ok(dim)
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let dim = points[0].len();
    let mut centroids = Matrix::zeros(k, dim);
    let first = rng.random_range(0..points.len());
    centroids.row_mut(0).copy_from_slice(&points[first]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    // greedy variant: draw a few candidates per step, keep the one that
    // lowers the potential most
    let trials = 2 + (k as f64).ln().floor() as usize;
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = None;
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 {
                        chosen = Some(i);
                        if target < w {
                            break;
                        }
                        target -= w;
                    }
                }
                chosen.expect("positive total implies a positive weight")
            } else {
                // unreachable with >= k distinct points
                rng.random_range(0..points.len())
            };
            let next: Vec<f64> = d2
                .iter()
                .zip(points)
                .map(|(&d, p)| d.min(sq_dist(p, &points[pick])))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((pick, potential, next));
            }
        }
        let (pick, _, next) = best.expect("at least one trial");
        centroids.row_mut(j).copy_from_slice(&points[pick]);
        d2 = next;
    }
    centroids
}

/// Single-point transfers after Lloyd converges: move a point whenever the
/// exact change in objective, counting both centroid shifts, is negative.
/// Every Lloyd fixed point that admits such a move is left behind.
fn hartigan_refine(
    points: &[Vec<f64>],
    centroids: &mut Matrix,
    assignment: &mut [usize],
    trace: &mut Vec<f64>,
) {
    let k = centroids.rows();
    let dim = centroids.cols();
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    let recompute = |j: usize, assignment: &[usize], centroids: &mut Matrix, count: usize| {
        let mut mean = vec![0.0; dim];
        for (p, _) in points.iter().zip(assignment).filter(|(_, &a)| a == j) {
            axpy(1.0, p, &mut mean);
        }
        mean.iter_mut().for_each(|x| *x /= count as f64);
        centroids.row_mut(j).copy_from_slice(&mean);
    };
    let scale = trace.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    for _ in 0..points.len() * k * 4 {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * sq_dist(p, centroids.row(a));
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * sq_dist(p, centroids.row(b)) - remove;
                if delta < -1e-12 * scale && best.is_none_or(|(_, d)| delta < d) {
                    best = Some((b, delta));
                }
            }
            if let Some((b, _)) = best {
                assignment[i] = b;
                counts[a] -= 1;
                counts[b] += 1;
                recompute(a, assignment, centroids, counts[a]);
                recompute(b, assignment, centroids, counts[b]);
                moved = true;
            }
        }
        if !moved {
            break;
        }
        trace.push(lloyd_objective(points, centroids, assignment));
    }
}

/// One seeded Lloyd run.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<SemanticCentroids> {
    let dim = validate(points, k)?;
    let n = points.len();
    let mut centroids = plus_plus_seed(points, k, seed);
    let mut assignment = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if assignment[i] != j {
                changed = true;
                assignment[i] = j;
            }
        }
        trace.push(lloyd_objective(points, &centroids, &assignment));
        if iterations >= max_iters || (iterations > 0 && !changed) {
            break;
        }
        iterations += 1;

        // Empty clusters take the point farthest from its centroid, drawn
        // from clusters that can spare one.
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .map(|i| (i, sq_dist(&points[i], centroids.row(assignment[i]))))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((i, _)) = donor {
                counts[assignment[i]] -= 1;
                assignment[i] = empty;
                counts[empty] = 1;
            }
        }

        let mut next = Matrix::zeros(k, dim);
        for (p, &a) in points.iter().zip(&assignment) {
            axpy(1.0, p, next.row_mut(a));
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = 1.0 / c as f64;
                next.row_mut(j).iter_mut().for_each(|x| *x *= inv);
            } else {
                next.row_mut(j).copy_from_slice(centroids.row(j));
            }
        }
        let movement = (0..k)
            .map(|j| sq_dist(next.row(j), centroids.row(j)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if movement < tol {
            for (i, p) in points.iter().enumerate() {
                assignment[i] = nearest(p, &centroids).0;
            }
            trace.push(lloyd_objective(points, &centroids, &assignment));
            break;
        }
    }

    hartigan_refine(points, &mut centroids, &mut assignment, &mut trace);

    Ok(SemanticCentroids {
        centroids,
        assignment,
        seed,
        objective_trace: trace,
        iterations,
    })
}

/// Runs `config.restarts` seedings and keeps the lowest objective.
/// Ties keep the earliest seed.
pub fn kmeans_best_of(points: &[Vec<f64>], config: &KMeansConfig) -> Result<SemanticCentroids> {
    let mut best: Option<SemanticCentroids> = None;
    for r in 0..config.restarts.max(1) {
        let run = kmeans(
            points,
            config.k,
            config.seed.wrapping_add(r as u64),
            config.max_iters,
            config.tol,
        )?;
        if best
            .as_ref()
            .is_none_or(|b| run.objective() < b.objective())
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
