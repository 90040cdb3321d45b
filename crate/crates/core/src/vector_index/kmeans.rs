use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{dot, VectorIndexError};

fn normalize(v: &mut [f32]) -> bool {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the centroid with the largest inner product with `v`; ties go to the lower index.
pub(crate) fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(v, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Spherical k-means over row-major `vectors`.
///
/// Seeding is k-means++ under squared Euclidean distance. Centroids are unit-normalized mean
/// directions and points are assigned by largest inner product. A cluster that ends an
/// iteration empty is re-seeded from the point farthest from its own centroid. Results are
/// deterministic for a fixed `seed`.
pub fn kmeans(
    vectors: &[f32],
    dim: usize,
    nlist: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<f32>, VectorIndexError> {
    if dim == 0 || vectors.len() % dim != 0 {
        return Err(VectorIndexError::InvalidParameter("vector buffer is not a multiple of dim".into()));
    }
    let n = vectors.len() / dim;
    if nlist == 0 {
        return Err(VectorIndexError::InvalidParameter("nlist must be at least 1".into()));
    }
    if iters == 0 {
        return Err(VectorIndexError::InvalidParameter("iters must be at least 1".into()));
    }
    if n < nlist {
        return Err(VectorIndexError::InsufficientData { count: n, nlist });
    }
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<f32> = Vec::with_capacity(nlist * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f32> = (0..n).into_par_iter().map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..nlist {
        let total: f64 = d2.iter().map(|d| f64::from(*d)).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                target -= f64::from(*d);
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        d2.par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist(row(i), &c)));
        centroids.extend_from_slice(&c);
    }
    for c in centroids.chunks_exact_mut(dim) {
        normalize(c);
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..iters {
        let next: Vec<(usize, f32)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(&centroids, dim, row(i)))
            .collect();
        let changed = next.iter().zip(&assign).any(|((c, _), a)| c != a);
        for (a, (c, _)) in assign.iter_mut().zip(&next) {
            *a = *c;
        }

        let mut sums = vec![0.0f64; nlist * dim];
        let mut counts = vec![0usize; nlist];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += f64::from(*x);
            }
        }

        // Farthest points first, for re-seeding empty clusters.
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| next[a].1.total_cmp(&next[b].1).then(a.cmp(&b)));
        let mut far = far.into_iter();

        let mut reseeded = false;
        for c in 0..nlist {
            let slot = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] == 0 {
                if let Some(p) = far.next() {
                    slot.copy_from_slice(row(p));
                    normalize(slot);
                    reseeded = true;
                }
                continue;
            }
            let mut mean: Vec<f32> = sums[c * dim..(c + 1) * dim].iter().map(|s| *s as f32).collect();
            if normalize(&mut mean) {
                slot.copy_from_slice(&mean);
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    Ok(centroids)
}
