//! Graph-only spectral-clustering baseline: Laplacian eigenvector embedding
//! followed by seeded k-means with restarts.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::sym_eig;

/// Which graph Laplacian drives the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// L = D − A.
    Unnormalized,
    /// L = I − D^{−1/2} A D^{−1/2}; the embedding rows are length-normalized.
    SymmetricNormalized,
}

#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub k: usize,
    pub laplacian_kind: LaplacianKind,
    pub kmeans_restarts: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            k: 3,
            laplacian_kind: LaplacianKind::SymmetricNormalized,
            kmeans_restarts: 10,
            kmeans_iters: 100,
            seed: 0,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParam {
                field: "k",
                reason: format!("cluster count must be >= 2, got {}", self.k),
            });
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidParam {
                field: "kmeans_restarts",
                reason: "restart count must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Clusters the nodes of a simple undirected graph: build the configured
/// Laplacian, embed each node by the K eigenvectors of smallest eigenvalue,
/// length-normalize rows for the symmetric-normalized variant, and run seeded
/// k-means over the embedding. Deterministic per seed; degenerate eigenspaces
/// (disconnected graphs) are resolved by the deterministic eigenvalue
/// ordering of `sym_eig`.
pub fn spectral_cluster(adjacency: &ArrayView2<u8>, config: &SpectralConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::InvalidParam {
            field: "adjacency",
            reason: format!("expected square matrix, got {}x{}", n, adjacency.ncols()),
        });
    }
    if n < config.k {
        return Err(Error::InvalidParam {
            field: "adjacency",
            reason: format!("need at least k = {} nodes, got {n}", config.k),
        });
    }
    for v in 0..n {
        if adjacency[[v, v]] != 0 {
            return Err(Error::InvalidParam {
                field: "adjacency",
                reason: format!("nonzero diagonal at node {v}"),
            });
        }
        for u in (v + 1)..n {
            if adjacency[[v, u]] != adjacency[[u, v]] {
                return Err(Error::InvalidParam {
                    field: "adjacency",
                    reason: format!("asymmetric entry at ({v}, {u})"),
                });
            }
        }
    }

    let degrees: Vec<f64> = (0..n)
        .map(|v| (0..n).map(|u| adjacency[[v, u]] as f64).sum())
        .collect();
    let mut lap = Array2::<f64>::zeros((n, n));
    match config.laplacian_kind {
        LaplacianKind::Unnormalized => {
            for v in 0..n {
                lap[[v, v]] = degrees[v];
                for u in 0..n {
                    if u != v {
                        lap[[v, u]] = -(adjacency[[v, u]] as f64);
                    }
                }
            }
        }
        LaplacianKind::SymmetricNormalized => {
            // Zero-degree nodes keep a zero scaling, leaving a unit diagonal.
            let inv_sqrt: Vec<f64> = degrees
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            for v in 0..n {
                lap[[v, v]] = 1.0;
                for u in 0..n {
                    if u != v {
                        lap[[v, u]] = -(adjacency[[v, u]] as f64) * inv_sqrt[v] * inv_sqrt[u];
                    }
                }
            }
        }
    }

    // sym_eig sorts descending, so the K smallest eigenvalues occupy the
    // trailing columns.
    let eig = sym_eig(&lap.view())?;
    let mut points = Array2::<f64>::zeros((n, config.k));
    for j in 0..config.k {
        let col = n - 1 - j;
        for v in 0..n {
            points[[v, j]] = eig.eigenvectors[[v, col]];
        }
    }
    if config.laplacian_kind == LaplacianKind::SymmetricNormalized {
        for v in 0..n {
            let norm = points.row(v).dot(&points.row(v)).sqrt();
            if norm > 0.0 {
                for j in 0..config.k {
                    points[[v, j]] /= norm;
                }
            }
        }
    }

    Ok(kmeans(
        &points.view(),
        config.k,
        config.kmeans_restarts,
        config.kmeans_iters,
        config.seed,
    )?
    .0)
}

/// Lloyd iterations from a k-means++-style seeded initialization; the best
/// restart by inertia wins, ties by restart index. Empty clusters are
/// reseeded from the point farthest from its assigned centroid.
pub fn kmeans(
    points: &ArrayView2<f64>,
    k: usize,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<(Vec<usize>, f64)> {
    let n = points.nrows();
    let d = points.ncols();
    if n < k {
        return Err(Error::InvalidParam {
            field: "points",
            reason: format!("need at least k = {k} points, got {n}"),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParam {
            field: "k",
            reason: "cluster count must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let mut centroids = plus_plus_init(points, k, &mut rng);
        let mut assignment = vec![0usize; n];
        for _ in 0..iters {
            let mut changed = false;
            for v in 0..n {
                let nearest = nearest_centroid(points, &centroids, v);
                if assignment[v] != nearest {
                    assignment[v] = nearest;
                    changed = true;
                }
            }
            recompute_centroids(points, &assignment, &mut centroids);
            // Reseed any empty cluster from the farthest point.
            let mut counts = vec![0usize; k];
            for &a in &assignment {
                counts[a] += 1;
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            let da = sq_dist(points, &centroids, a, assignment[a]);
                            let db = sq_dist(points, &centroids, b, assignment[b]);
                            da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                        })
                        .unwrap();
                    for j in 0..d {
                        centroids[[c, j]] = points[[far, j]];
                    }
                    assignment[far] = c;
                    recompute_centroids(points, &assignment, &mut centroids);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|v| sq_dist(points, &centroids, v, assignment[v]))
            .sum();
        let better = match &best {
            None => true,
            Some((_, b)) => inertia < *b,
        };
        if better {
            best = Some((assignment, inertia));
        }
    }
    Ok(best.unwrap())
}

fn plus_plus_init<R: Rng>(points: &ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::<f64>::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut dists: Vec<f64> = (0..n)
        .map(|v| {
            let diff = &points.row(v) - &centroids.row(0);
            diff.dot(&diff)
        })
        .collect();
    for c in 1..k {
        let total: f64 = dists.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (v, &dv) in dists.iter().enumerate() {
                if target < dv {
                    chosen = v;
                    break;
                }
                target -= dv;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for v in 0..n {
            let diff = &points.row(v) - &centroids.row(c);
            dists[v] = dists[v].min(diff.dot(&diff));
        }
    }
    centroids
}

fn nearest_centroid(points: &ArrayView2<f64>, centroids: &Array2<f64>, v: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.nrows() {
        let d = sq_dist(points, centroids, v, c);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn sq_dist(points: &ArrayView2<f64>, centroids: &Array2<f64>, v: usize, c: usize) -> f64 {
    let diff = &points.row(v) - &centroids.row(c);
    diff.dot(&diff)
}

fn recompute_centroids(points: &ArrayView2<f64>, assignment: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let d = centroids.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (v, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for j in 0..d {
            sums[[a, j]] += points[[v, j]];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..d {
                centroids[[c, j]] = sums[[c, j]] / counts[c] as f64;
            }
        }
    }
}

/// Best-permutation agreement between a clustering and reference labels,
/// brute-forced over all K! relabelings (K is small in every use here).
pub fn best_permutation_accuracy(assignment: &[usize], reference: &[usize], k: usize) -> f64 {
    assert_eq!(assignment.len(), reference.len());
    let n = assignment.len();
    if n == 0 {
        return 0.0;
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for v in 0..n {
        confusion[assignment[v]][reference[v]] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = (0..k).map(|c| confusion[c][p[c]]).sum();
        best = best.max(hits);
    });
    best as f64 / n as f64
}

fn permute(perm: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == perm.len() {
        visit(perm);
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        permute(perm, at + 1, visit);
        perm.swap(at, i);
    }
}
