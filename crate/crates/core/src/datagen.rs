//! Seeded planted-partition instances: SBM graph, per-cluster Gaussian
//! subspace features, and noisy partial labels.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::random_orthonormal;

/// Generation parameters for one planted instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    /// Cluster count.
    pub k: usize,
    /// Nodes per cluster.
    pub n0: usize,
    /// Intra-cluster edge probability.
    pub p: f64,
    /// Inter-cluster edge probability.
    pub q: f64,
    /// Feature dimension.
    pub m: usize,
    /// Count of noise eigenvalues (scale omega), the rest use sigma.
    pub m_omega: usize,
    /// Noise standard-deviation scale.
    pub omega: f64,
    /// Signal standard-deviation scale.
    pub sigma: f64,
    /// Fraction of each cluster that is labeled for training.
    pub train_ratio: f64,
    /// Probability a training label is correct.
    pub pi_correct: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            k: 3,
            n0: 300,
            p: 0.1,
            q: 0.05,
            m: 6,
            m_omega: 4,
            omega: 0.04,
            sigma: 1.0,
            train_ratio: 0.2,
            pi_correct: 1.0,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn n(&self) -> usize {
        self.k * self.n0
    }

    pub fn validate(&self) -> Result<()> {
        fn prob(field: &'static str, v: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidParam {
                    field,
                    reason: format!("must be in [0, 1], got {v}"),
                });
            }
            Ok(())
        }
        if self.k == 0 {
            return Err(Error::InvalidParam {
                field: "k",
                reason: "must be >= 1".into(),
            });
        }
        if self.n0 == 0 {
            return Err(Error::InvalidParam {
                field: "n0",
                reason: "must be >= 1".into(),
            });
        }
        if self.m == 0 {
            return Err(Error::InvalidParam {
                field: "m",
                reason: "must be >= 1".into(),
            });
        }
        prob("p", self.p)?;
        prob("q", self.q)?;
        prob("train_ratio", self.train_ratio)?;
        prob("pi_correct", self.pi_correct)?;
        if self.m_omega > self.m {
            return Err(Error::InvalidParam {
                field: "m_omega",
                reason: format!("must be <= m = {}, got {}", self.m, self.m_omega),
            });
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParam {
                field: "omega",
                reason: format!("must be >= 0, got {}", self.omega),
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParam {
                field: "sigma",
                reason: format!("must be > 0, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

/// A generated instance. The polarized matrix recodes non-edges as -1 and
/// keeps the diagonal at 0.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub n: usize,
    pub adjacency: Array2<u8>,
    pub polarized: Array2<i8>,
    pub features: Array2<f64>,
    pub true_labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    /// Defined exactly on nodes with train_mask = true.
    pub noisy_labels: Vec<Option<usize>>,
    pub params: GenParams,
}

impl PlantedInstance {
    /// Nodes of cluster `i` in ascending order.
    pub fn cluster_indices(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.params.k {
            return Err(Error::IndexOutOfRange {
                index: i,
                limit: self.params.k,
            });
        }
        Ok((0..self.n).filter(|&v| self.true_labels[v] == i).collect())
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.train_mask[v]).collect()
    }
}

/// Draws `count` feature rows x = Q diag(scales) z with z standard Gaussian.
pub fn sample_features<R: Rng>(
    rng: &mut R,
    basis: &Array2<f64>,
    scales: &Array1<f64>,
    count: usize,
) -> Array2<f64> {
    let m = scales.len();
    let mut out = Array2::<f64>::zeros((count, m));
    for row in 0..count {
        let z: Vec<f64> = (0..m)
            .map(|j| scales[j] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += basis[[i, j]] * z[j];
            }
            out[[row, i]] = acc;
        }
    }
    out
}

/// Generates a planted instance. Deterministic for a fixed seed: the RNG is
/// consumed in a fixed order (edges, then per-cluster bases and features,
/// then training split, then label noise).
pub fn generate(params: &GenParams) -> Result<PlantedInstance> {
    params.validate()?;
    let n = params.n();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let true_labels: Vec<usize> = (0..n).map(|v| v / params.n0).collect();

    let mut adjacency = Array2::<u8>::zeros((n, n));
    let mut polarized = Array2::<i8>::zeros((n, n));
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = if true_labels[u] == true_labels[v] {
                params.p
            } else {
                params.q
            };
            let edge = rng.gen::<f64>() < prob;
            let (a, s) = if edge { (1u8, 1i8) } else { (0u8, -1i8) };
            adjacency[[u, v]] = a;
            adjacency[[v, u]] = a;
            polarized[[u, v]] = s;
            polarized[[v, u]] = s;
        }
    }

    let scales = Array1::from_iter((0..params.m).map(|j| {
        if j < params.m_omega {
            params.omega
        } else {
            params.sigma
        }
    }));
    let mut features = Array2::<f64>::zeros((n, params.m));
    for i in 0..params.k {
        let basis = random_orthonormal(&mut rng, params.m);
        let block = sample_features(&mut rng, &basis, &scales, params.n0);
        for (row, v) in (i * params.n0..(i + 1) * params.n0).enumerate() {
            for j in 0..params.m {
                features[[v, j]] = block[[row, j]];
            }
        }
    }

    let n_t = (params.train_ratio * params.n0 as f64).round() as usize;
    let mut train_mask = vec![false; n];
    for i in 0..params.k {
        let mut members: Vec<usize> = (i * params.n0..(i + 1) * params.n0).collect();
        members.shuffle(&mut rng);
        for &v in members.iter().take(n_t) {
            train_mask[v] = true;
        }
    }

    let mut noisy_labels = vec![None; n];
    for v in 0..n {
        if !train_mask[v] {
            continue;
        }
        let truth = true_labels[v];
        let label = if params.k == 1 || rng.gen::<f64>() < params.pi_correct {
            truth
        } else {
            // Uniform over the K-1 wrong labels.
            let draw = rng.gen_range(0..params.k - 1);
            if draw >= truth {
                draw + 1
            } else {
                draw
            }
        };
        noisy_labels[v] = Some(label);
    }

    Ok(PlantedInstance {
        n,
        adjacency,
        polarized,
        features,
        true_labels,
        train_mask,
        noisy_labels,
        params: params.clone(),
    })
}
