//! Lloyd's K-means with k-means++ seeding, used to verify that the four
//! cities separate cleanly on (latitude, longitude).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {k} distinct points, got {distinct}")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} assignments vs {1} labels")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<(f64, f64)>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

fn nearest(point: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(point, *c);
        // Ties go to the lowest index.
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn kmeanspp_init(points: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining mass at existing centroids: pick any point not
            // already a centroid so distinct points still yield k centers.
            points
                .iter()
                .position(|p| !centroids.contains(p))
                .unwrap_or(0)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut idx = 0;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= *w;
                idx = i;
            }
            idx
        };
        let c = points[next];
        centroids.push(c);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(*p, c));
        }
    }
    centroids
}

/// Lloyd iterations from a k-means++ start; deterministic for a fixed
/// seed. Empty clusters are re-seeded from the point farthest from its
/// assigned centroid.
pub fn kmeans(
    points: &[(f64, f64)],
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<KMeansResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
        if distinct.len() >= k {
            break;
        }
    }
    if distinct.len() < k {
        return Err(ClusterError::TooFewDistinctPoints {
            k,
            distinct: distinct.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia;
    let mut iterations = 0;

    for iter in 0..max_iters {
        iterations = iter + 1;
        inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(*p, &centroids);
            assignments[i] = j;
            inertia += d;
        }
        // Recompute means with a fixed accumulation order (point index).
        let mut sums = vec![(0.0f64, 0.0f64); k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let j = assignments[i];
            sums[j].0 += p.0;
            sums[j].1 += p.1;
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = (sums[j].0 / counts[j] as f64, sums[j].1 / counts[j] as f64);
            } else {
                // Re-seed from the point farthest from its centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(ia, a), (ib, b)| {
                        let da = dist2(**a, centroids[assignments[*ia]]);
                        let db = dist2(**b, centroids[assignments[*ib]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                centroids[j] = points[far];
            }
        }
        if prev_inertia - inertia < tol {
            break;
        }
        prev_inertia = inertia;
    }

    // Final assignment pass so every point indexes its nearest centroid.
    inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(*p, &centroids);
        assignments[i] = j;
        inertia += d;
    }

    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        iterations,
    })
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn cluster_purity(assignments: &[usize], labels: &[u8]) -> Result<f64, ClusterError> {
    if assignments.is_empty() {
        return Err(ClusterError::Empty);
    }
    if assignments.len() != labels.len() {
        return Err(ClusterError::LengthMismatch(
            assignments.len(),
            labels.len(),
        ));
    }
    use std::collections::HashMap;
    let mut counts: HashMap<usize, HashMap<u8, usize>> = HashMap::new();
    for (a, l) in assignments.iter().zip(labels) {
        *counts.entry(*a).or_default().entry(*l).or_insert(0) += 1;
    }
    let majority_sum: usize = counts
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    Ok(majority_sum as f64 / assignments.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn k1_is_coordinate_mean() {
        let points = vec![(0.0, 0.0), (2.0, 4.0), (4.0, 2.0)];
        let r = kmeans(&points, 1, 50, 1e-12, 0).unwrap();
        assert_relative_eq!(r.centroids[0].0, 2.0);
        assert_relative_eq!(r.centroids[0].1, 2.0);
        let expected: f64 = points.iter().map(|p| dist2(*p, (2.0, 2.0))).sum();
        assert_relative_eq!(r.inertia, expected);
    }

    #[test]
    fn separated_pairs_cluster_exactly() {
        let points = vec![(0.0, 0.0), (0.0, 1.0), (10.0, 10.0), (10.0, 11.0)];
        for seed in 0..5 {
            let r = kmeans(&points, 2, 100, 1e-12, seed).unwrap();
            assert_eq!(r.assignments[0], r.assignments[1]);
            assert_eq!(r.assignments[2], r.assignments[3]);
            assert_ne!(r.assignments[0], r.assignments[2]);
            let mut cents = r.centroids.clone();
            cents.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_relative_eq!(cents[0].0, 0.0);
            assert_relative_eq!(cents[0].1, 0.5);
            assert_relative_eq!(cents[1].0, 10.0);
            assert_relative_eq!(cents[1].1, 10.5);
        }
    }

    #[test]
    fn k_equals_distinct_points_gives_zero_inertia() {
        let points = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)];
        let r = kmeans(&points, 3, 100, 1e-12, 1).unwrap();
        assert_relative_eq!(r.inertia, 0.0);
    }

    #[test]
    fn too_few_distinct_points_is_error() {
        let points = vec![(1.0, 1.0), (1.0, 1.0)];
        assert!(matches!(
            kmeans(&points, 2, 10, 1e-9, 0),
            Err(ClusterError::TooFewDistinctPoints { .. })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let points: Vec<(f64, f64)> = (0..200)
            .map(|i| ((i % 17) as f64 * 0.3, (i % 23) as f64 * 0.7))
            .collect();
        let a = kmeans(&points, 4, 100, 1e-12, 9).unwrap();
        let b = kmeans(&points, 4, 100, 1e-12, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assignments_index_nearest_centroid() {
        let points: Vec<(f64, f64)> = (0..100)
            .map(|i| ((i as f64 * 0.37).sin() * 5.0, (i as f64 * 0.61).cos() * 5.0))
            .collect();
        let r = kmeans(&points, 3, 100, 1e-12, 3).unwrap();
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(*p, &r.centroids);
            assert_eq!(r.assignments[i], j);
        }
    }

    #[test]
    fn purity_examples() {
        assert_eq!(cluster_purity(&[0, 1, 0], &[0, 1, 0]).unwrap(), 1.0);
        // 2 clusters each split 50/50 across 2 labels.
        assert_eq!(cluster_purity(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(cluster_purity(&[], &[]).is_err());
    }

    #[test]
    fn purity_invariant_under_relabeling() {
        let assignments = vec![0, 0, 1, 1, 2, 2];
        let relabeled = vec![2, 2, 0, 0, 1, 1];
        let labels = vec![0u8, 0, 1, 0, 1, 1];
        assert_eq!(
            cluster_purity(&assignments, &labels).unwrap(),
            cluster_purity(&relabeled, &labels).unwrap()
        );
    }

    #[test]
    fn synthetic_cities_are_pure() {
        let ds = crate::ingest::generate_synthetic(&crate::ingest::SynthConfig {
            rows: 2000,
            intersections_per_city: vec![30, 30, 30, 30],
            ..Default::default()
        })
        .unwrap();
        let points: Vec<(f64, f64)> = ds
            .intersections()
            .iter()
            .map(|(_, _, lat, lon)| (*lat, *lon))
            .collect();
        let labels: Vec<u8> = ds.intersections().iter().map(|(_, c, _, _)| *c).collect();
        let r = kmeans(&points, 4, 200, 1e-12, 0).unwrap();
        assert_eq!(cluster_purity(&r.assignments, &labels).unwrap(), 1.0);
    }
}
