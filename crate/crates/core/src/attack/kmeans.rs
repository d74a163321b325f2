use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

pub const K: usize = 2;
pub const MAX_ROUNDS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansOutcome {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster whose centroid has the smaller norm.
    pub member_cluster: usize,
    /// Negative distance to the member centroid; higher means more member-like.
    pub scores: Vec<f64>,
    pub rounds: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        if sq_dist(x, centroid) < sq_dist(x, &centroids[best]) {
            best = c;
        }
    }
    best
}

/// Two-cluster K-Means (k-means++ seeding, Lloyd rounds) used as an
/// unsupervised membership baseline.
pub fn kmeans_attack(features: &[Vec<f64>], seed_value: u64) -> Result<KMeansOutcome> {
    if features.len() < K {
        return Err(Error::NotEnoughItems {
            needed: K,
            available: features.len(),
        });
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means feature"));
    }

    let mut rng = seed::rng(seed::derive(seed_value, "kmeans++"));
    let first = rng.gen_range(0..features.len());
    let d2: Vec<f64> = features.iter().map(|f| sq_dist(f, &features[first])).collect();
    let total: f64 = d2.iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("all k-means features are identical"));
    }
    let mut target = rng.gen::<f64>() * total;
    let mut second = features.len() - 1;
    for (i, &d) in d2.iter().enumerate() {
        if d > 0.0 && target < d {
            second = i;
            break;
        }
        target -= d;
    }
    if d2[second] == 0.0 {
        second = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
    }
    let mut centroids = vec![features[first].clone(), features[second].clone()];

    let mut assignments = vec![usize::MAX; features.len()];
    let mut rounds = 0;
    while rounds < MAX_ROUNDS {
        rounds += 1;
        let mut changed = false;
        for (a, f) in assignments.iter_mut().zip(features) {
            let c = nearest(f, &centroids);
            changed |= *a != c;
            *a = c;
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = features
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|(f, _)| f)
                .collect();
            // an empty cluster keeps its previous centroid
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            for (d, value) in centroid.iter_mut().enumerate() {
                *value = members.iter().map(|m| m[d]).sum::<f64>() / n;
            }
        }
    }

    let norms: Vec<f64> = centroids.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).collect();
    let member_cluster = usize::from(norms[1] < norms[0]);
    let scores = features
        .iter()
        .map(|f| -sq_dist(f, &centroids[member_cluster]).sqrt())
        .collect();
    Ok(KMeansOutcome {
        assignments,
        centroids,
        member_cluster,
        scores,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed_value: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seed::rng(seed_value);
        let mut feats = Vec::new();
        let mut blob = Vec::new();
        for i in 0..60 {
            let b = i % 2;
            let center = if b == 0 { 0.0 } else { 5.0 };
            feats.push((0..3).map(|_| center + rng.gen_range(-0.5..0.5)).collect());
            blob.push(b);
        }
        (feats, blob)
    }

    #[test]
    fn separates_blobs() {
        let (feats, blob) = blobs(1);
        let out = kmeans_attack(&feats, 7).unwrap();
        let c0 = out.assignments[0];
        for (a, b) in out.assignments.iter().zip(&blob) {
            assert_eq!(*a == c0, *b == 0);
        }
        // the blob at the origin is the member cluster
        assert_eq!(out.member_cluster, c0);
        assert!(out.scores[0] > out.scores[1]);
        assert_eq!(out.centroids.len(), K);
        assert!(out.rounds <= MAX_ROUNDS);
    }

    #[test]
    fn deterministic_under_seed() {
        let (feats, _) = blobs(2);
        assert_eq!(kmeans_attack(&feats, 3).unwrap(), kmeans_attack(&feats, 3).unwrap());
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let same = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(kmeans_attack(&same, 0), Err(Error::Degenerate(_))));
        assert!(kmeans_attack(&[vec![1.0]], 0).is_err());
    }
}
