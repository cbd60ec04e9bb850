//! Recovery-condition diagnostics on a concrete planted instance.
//!
//! Three families of statistics quantify how recoverable the planted
//! partition is from the realized data:
//!
//! * misconnection rates ρ⁺ between cluster pairs, with the homogeneity
//!   margin (worst per-node deviation from the cluster-pair rate) and the
//!   visibility margin (distance of the worst rate from 1/2);
//! * operator norms of the centered adjacency restricted to each cluster's
//!   intra / extra / inter blocks, reported with their expected-scaling
//!   normalizers;
//! * a node-only certificate margin per cluster: the largest pairwise
//!   gradient disagreement of the per-node objective at a supplied model
//!   centroid, checked against the bound γ·n_i/n.

use ndarray::{Array1, Array2};

use crate::datagen::PlantedInstance;
use crate::error::{Error, Result};
use crate::numerics::{spd_solve, sym_eig};
use crate::objective::AtomModels;

/// Misconnection rates and the margins derived from them.
///
/// `rho_plus_self_excluded` excludes each node from its own cluster's
/// denominator (n_j − 1 for v ∈ C_j), so a perfect p=1, q=0 graph scores
/// exactly zero everywhere. `rho_plus_literal` keeps the denominator n_j,
/// where the structurally-zero diagonal of a simple graph contributes an
/// unavoidable 1/n_i on the diagonal even for perfect clusters. Both are
/// reported; the margins are computed from the self-excluded variant.
#[derive(Debug, Clone)]
pub struct MisconnectionStats {
    pub rho_plus_self_excluded: Array2<f64>,
    pub rho_plus_literal: Array2<f64>,
    /// max over (v, j) of |n⁺_{v,j}/denom_j − ρ⁺_{ij}|: the smallest δ for
    /// which every node's misconnection rate is δ-close to its cluster
    /// pair's rate.
    pub homogeneity_margin: f64,
    /// min over (i, j) of (1/2 − ρ⁺_{ij}): cluster-pair visibility holds
    /// with slack δ iff this exceeds δ.
    pub visibility_margin: f64,
}

/// Operator norms of one cluster's three centered-adjacency blocks, with
/// the normalizers they are expected to scale like.
#[derive(Debug, Clone, Copy)]
pub struct BlockNorms {
    /// ‖Ã_i‖_op over C_i × C_i, expected O(√n_i).
    pub intra: f64,
    /// ‖Ãⁱ‖_op over the complement square block, expected O(√n).
    pub extra: f64,
    /// ‖B̃_i‖_op over C_i × complement, expected O(√n).
    pub inter: f64,
    pub intra_normalizer: f64,
    pub extra_normalizer: f64,
    pub inter_normalizer: f64,
}

/// One cluster's node-only certificate check: the realized gradient spread
/// rho against the bound γ·n_i/n it must stay below.
#[derive(Debug, Clone, Copy)]
pub struct CertificateMargin {
    pub rho: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Full diagnostic report. `rho_plus_matrix` is the self-excluded variant;
/// the literal variant sits alongside it (see [`MisconnectionStats`]).
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub rho_plus_matrix: Array2<f64>,
    pub rho_plus_literal: Array2<f64>,
    pub homogeneity_margin: f64,
    pub visibility_margin: f64,
    pub block_op_norms: Vec<BlockNorms>,
    pub node_only_bound: Vec<CertificateMargin>,
}

fn cluster_members(instance: &PlantedInstance) -> Result<Vec<Vec<usize>>> {
    let k = instance.params.k;
    let mut members = vec![Vec::new(); k];
    for (v, &c) in instance.true_labels.iter().enumerate() {
        if c >= k {
            return Err(Error::IndexOutOfRange { index: c, limit: k });
        }
        members[c].push(v);
    }
    for (i, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::InvalidParam {
                field: "true_labels",
                reason: format!("cluster {i} has no members"),
            });
        }
    }
    Ok(members)
}

/// Per-cluster-pair misconnection rates and their margins.
///
/// For node v and cluster j, n_{v,j} counts v's neighbors inside C_j; the
/// misconnection count is n⁺_{v,j} = n_j − n_{v,j} when v ∈ C_j (missing
/// intra edges) and n_{v,j} otherwise (present cross edges). Rates average
/// the counts over the cluster pair.
pub fn misconnection_stats(instance: &PlantedInstance) -> Result<MisconnectionStats> {
    let members = cluster_members(instance)?;
    let k = members.len();
    let sizes: Vec<usize> = members.iter().map(|m| m.len()).collect();

    let mut literal = Array2::<f64>::zeros((k, k));
    let mut excluded = Array2::<f64>::zeros((k, k));
    // Per-node rates, kept for the homogeneity margin (self-excluded
    // denominators).
    let mut node_rates = vec![vec![0.0f64; k]; instance.n];

    for (i, mi) in members.iter().enumerate() {
        for (j, mj) in members.iter().enumerate() {
            let n_j = sizes[j];
            let mut total_literal = 0.0;
            let mut total_excluded = 0.0;
            for &v in mi {
                let n_vj: usize = mj
                    .iter()
                    .map(|&u| instance.adjacency[[u, v]] as usize)
                    .sum();
                if i == j {
                    // Self-excluded: v can connect to at most n_j − 1 peers.
                    let miss = (n_j - 1) - n_vj;
                    total_literal += (n_j - n_vj) as f64;
                    total_excluded += miss as f64;
                    node_rates[v][j] = if n_j > 1 {
                        miss as f64 / (n_j - 1) as f64
                    } else {
                        0.0
                    };
                } else {
                    total_literal += n_vj as f64;
                    total_excluded += n_vj as f64;
                    node_rates[v][j] = n_vj as f64 / n_j as f64;
                }
            }
            literal[[i, j]] = total_literal / (sizes[i] * n_j) as f64;
            excluded[[i, j]] = if i == j && n_j > 1 {
                total_excluded / (sizes[i] * (n_j - 1)) as f64
            } else {
                total_excluded / (sizes[i] * n_j) as f64
            };
        }
    }

    let mut homogeneity: f64 = 0.0;
    for (v, rates) in node_rates.iter().enumerate() {
        let i = instance.true_labels[v];
        for (j, &rate) in rates.iter().enumerate() {
            homogeneity = homogeneity.max((rate - excluded[[i, j]]).abs());
        }
    }
    let visibility = excluded
        .iter()
        .map(|&r| 0.5 - r)
        .fold(f64::INFINITY, f64::min);

    Ok(MisconnectionStats {
        rho_plus_self_excluded: excluded,
        rho_plus_literal: literal,
        homogeneity_margin: homogeneity,
        visibility_margin: visibility,
    })
}

/// Largest singular value of a (not necessarily symmetric) block via the
/// symmetrized Gram form M Mᵀ.
fn op_norm(block: &Array2<f64>) -> Result<f64> {
    let gram = block.dot(&block.t());
    let eig = sym_eig(&gram.view())?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Operator norms of the centered adjacency's intra / extra / inter blocks
/// per cluster.
///
/// The adjacency is centered block-pair-wise: Ã_uv = A_uv − N_ij/(n_i n_j)
/// where N_ij sums A over the ordered cluster pair (i, j) of u and v. For
/// each cluster i the three blocks are C_i × C_i (intra), complement ×
/// complement (extra), and C_i × complement (inter); their norms are
/// reported with normalizers (√n_i, √n, √n).
pub fn centered_block_norms(instance: &PlantedInstance) -> Result<Vec<BlockNorms>> {
    let members = cluster_members(instance)?;
    let k = members.len();
    let n = instance.n;
    let sizes: Vec<usize> = members.iter().map(|m| m.len()).collect();

    // Block means N_ij / (n_i n_j) over ordered node pairs.
    let mut means = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let mut total = 0usize;
            for &u in &members[i] {
                for &v in &members[j] {
                    total += instance.adjacency[[u, v]] as usize;
                }
            }
            means[[i, j]] = total as f64 / (sizes[i] * sizes[j]) as f64;
        }
    }
    let mut centered = Array2::<f64>::zeros((n, n));
    for u in 0..n {
        for v in 0..n {
            let (cu, cv) = (instance.true_labels[u], instance.true_labels[v]);
            centered[[u, v]] = instance.adjacency[[u, v]] as f64 - means[[cu, cv]];
        }
    }

    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let inside = &members[i];
        let outside: Vec<usize> = (0..n).filter(|v| instance.true_labels[*v] != i).collect();
        let take = |rows: &[usize], cols: &[usize]| {
            let mut b = Array2::<f64>::zeros((rows.len(), cols.len()));
            for (a, &u) in rows.iter().enumerate() {
                for (c, &v) in cols.iter().enumerate() {
                    b[[a, c]] = centered[[u, v]];
                }
            }
            b
        };
        out.push(BlockNorms {
            intra: op_norm(&take(inside, inside))?,
            extra: op_norm(&take(&outside, &outside))?,
            inter: op_norm(&take(inside, &outside))?,
            intra_normalizer: (sizes[i] as f64).sqrt(),
            extra_normalizer: (n as f64).sqrt(),
            inter_normalizer: (n as f64).sqrt(),
        });
    }
    Ok(out)
}

/// Stacked per-node gradient at cluster i's centroid: the feature-fit
/// gradient in the covariance, (1/m)(I − R⁻¹ x xᵀ R⁻¹), flattened, followed
/// by the label-fit gradient in the class distribution, −e_{ỹ_v} for
/// training nodes and zero otherwise.
fn node_gradient(
    instance: &PlantedInstance,
    v: usize,
    covariance: &Array2<f64>,
    k_classes: usize,
) -> Result<Array1<f64>> {
    let m = instance.params.m;
    let x = instance.features.row(v);
    let y = spd_solve(&covariance.view(), &x)?; // R⁻¹ x
    let mut g = Array1::<f64>::zeros(m * m + k_classes);
    let scale = 1.0 / m as f64;
    for a in 0..m {
        for b in 0..m {
            let eye = if a == b { 1.0 } else { 0.0 };
            g[a * m + b] = scale * (eye - y[a] * y[b]);
        }
    }
    if instance.train_mask[v] {
        if let Some(label) = instance.noisy_labels[v] {
            if label >= k_classes {
                return Err(Error::IndexOutOfRange {
                    index: label,
                    limit: k_classes,
                });
            }
            g[m * m + label] = -1.0;
        }
    }
    Ok(g)
}

/// Node-only certificate margin per cluster against supplied centroids.
///
/// rho_i is the largest pairwise distance ‖∇f_v(θ_i) − ∇f_u(θ_i)‖ over
/// nodes of C_i, with gradients stacked as in [`node_gradient`]; the bound
/// is γ·n_i/n. The centroids are caller-supplied proxies (typically a
/// converged solver's models): the margins certify recoverability only as
/// well as the proxies approximate the biased per-cluster optima.
pub fn node_only_certificate_margin(
    instance: &PlantedInstance,
    gamma: f64,
    centroids: &AtomModels,
) -> Result<Vec<CertificateMargin>> {
    let members = cluster_members(instance)?;
    let k = members.len();
    if centroids.covariances.len() < k {
        return Err(Error::InvalidParam {
            field: "centroids",
            reason: format!(
                "need at least {k} centroid models, got {}",
                centroids.covariances.len()
            ),
        });
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParam {
            field: "gamma",
            reason: format!("must be finite and nonnegative, got {gamma}"),
        });
    }
    let k_classes = centroids
        .label_dists
        .first()
        .map(|d| d.len())
        .unwrap_or(instance.params.k);

    let mut out = Vec::with_capacity(k);
    for (i, mi) in members.iter().enumerate() {
        let grads: Vec<Array1<f64>> = mi
            .iter()
            .map(|&v| node_gradient(instance, v, &centroids.covariances[i], k_classes))
            .collect::<Result<_>>()?;
        let mut rho: f64 = 0.0;
        for a in 0..grads.len() {
            for b in (a + 1)..grads.len() {
                let d = &grads[a] - &grads[b];
                rho = rho.max(d.dot(&d).sqrt());
            }
        }
        let bound = gamma * mi.len() as f64 / instance.n as f64;
        out.push(CertificateMargin {
            rho,
            bound,
            satisfied: rho <= bound,
        });
    }
    Ok(out)
}

/// Assembles the full diagnostic report.
pub fn full_report(
    instance: &PlantedInstance,
    gamma: f64,
    centroids: &AtomModels,
) -> Result<RecoveryReport> {
    let stats = misconnection_stats(instance)?;
    let block_op_norms = centered_block_norms(instance)?;
    let node_only_bound = node_only_certificate_margin(instance, gamma, centroids)?;
    Ok(RecoveryReport {
        rho_plus_matrix: stats.rho_plus_self_excluded,
        rho_plus_literal: stats.rho_plus_literal,
        homogeneity_margin: stats.homogeneity_margin,
        visibility_margin: stats.visibility_margin,
        block_op_norms,
        node_only_bound,
    })
}
