//! Two-cluster K-means used to seed EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_DIM};

pub const CLUSTERS: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("all points are identical; clustering is meaningless")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iter: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub centroids: [FeatureVector; CLUSTERS],
    pub labels: Vec<usize>,
    pub inertia: f64,
}

/// One Lloyd run together with the inertia after every centroid update.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub result: KmeansResult,
    pub inertia_trace: Vec<f64>,
}

pub fn squared_distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &FeatureVector, centroids: &[FeatureVector; CLUSTERS]) -> (usize, f64) {
    let mut best = (0, squared_distance(p, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, centroid);
        // Strict: equidistant points stay with the lower index.
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(points: &[FeatureVector], centroids: &[FeatureVector; CLUSTERS], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum()
}

fn means(points: &[FeatureVector], labels: &[usize], previous: &[FeatureVector; CLUSTERS]) -> [FeatureVector; CLUSTERS] {
    let mut sums = [[0.0; FEATURE_DIM]; CLUSTERS];
    let mut counts = [0usize; CLUSTERS];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(&p.0) {
            *s += v;
        }
    }
    let mut out = *previous;
    for c in 0..CLUSTERS {
        if counts[c] > 0 {
            out[c] = FeatureVector(sums[c].map(|s| s / counts[c] as f64));
        }
    }
    out
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[FeatureVector], centroids: &mut [FeatureVector; CLUSTERS], labels: &mut [usize]) {
    for c in 0..CLUSTERS {
        if labels.contains(&c) {
            continue;
        }
        let mut counts = [0usize; CLUSTERS];
        labels.iter().for_each(|&l| counts[l] += 1);
        let far = points
            .iter()
            .zip(labels.iter())
            .enumerate()
            .filter(|(_, (_, &l))| counts[l] > 1)
            .map(|(i, (p, &l))| (i, squared_distance(p, &centroids[l])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            centroids[c] = points[i];
            labels[i] = c;
        }
    }
}

/// Lloyd iterations from fixed starting centroids until the assignment stops
/// changing or `max_iter` updates have run.
pub fn lloyd(points: &[FeatureVector], init: [FeatureVector; CLUSTERS], max_iter: usize) -> LloydRun {
    let mut centroids = init;
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    repair_empty(points, &mut centroids, &mut labels);
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        centroids = means(points, &labels, &centroids);
        trace.push(inertia(points, &centroids, &labels));
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        repair_empty(points, &mut centroids, &mut next);
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = inertia(points, &centroids, &labels);
    LloydRun {
        result: KmeansResult {
            centroids,
            labels,
            inertia,
        },
        inertia_trace: trace,
    }
}

/// Best-of-`restarts` K-means with two clusters. Each restart seeds from two
/// distinct samples drawn uniformly with a stream derived from `seed`.
pub fn kmeans(points: &[FeatureVector], params: &KmeansParams) -> Result<KmeansResult, ClusterError> {
    let first = points.first().ok_or(ClusterError::Empty)?;
    if points.iter().all(|p| p == first) {
        return Err(ClusterError::Degenerate);
    }
    let mut best: Option<KmeansResult> = None;
    for restart in 0..params.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(restart as u64);
        let a = rng.random_range(0..points.len());
        let b = loop {
            let b = rng.random_range(0..points.len());
            if points[b] != points[a] {
                break b;
            }
        };
        let run = lloyd(points, [points[a], points[b]], params.max_iter).result;
        if best.as_ref().is_none_or(|cur| run.inertia < cur.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
