//! Case-study losses, the weighted objective, the sum-of-norms diagnostic,
//! and the gradients the solver consumes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::datagen::PlantedInstance;
use crate::error::{Error, Result};
use crate::numerics::{solve_with_cholesky, cholesky, sym_eig};

/// Per-term objective weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub beta_g: f64,
    pub beta_f: f64,
    pub beta_l: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        TermWeights {
            beta_g: 1.0,
            beta_f: 2.5,
            beta_l: 13.0,
        }
    }
}

impl TermWeights {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("beta_g", self.beta_g),
            ("beta_f", self.beta_f),
            ("beta_l", self.beta_l),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Per-atom models: covariances in the spectral box, label distributions in
/// the simplex.
#[derive(Debug, Clone)]
pub struct AtomModels {
    pub covariances: Vec<Array2<f64>>,
    pub label_dists: Vec<Array1<f64>>,
}

impl AtomModels {
    pub fn r(&self) -> usize {
        self.covariances.len()
    }

    pub fn m(&self) -> usize {
        self.covariances[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.label_dists[0].len()
    }

    /// Largest eigenvalue excursion outside [rho_minus, rho_plus] over all
    /// atom covariances. Zero means every atom is in the box.
    pub fn box_violation(&self, rho_minus: f64, rho_plus: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for cov in &self.covariances {
            let eig = sym_eig(&cov.view())?;
            for &lam in eig.eigenvalues.iter() {
                worst = worst.max(rho_minus - lam).max(lam - rho_plus);
            }
        }
        Ok(worst)
    }

    /// Largest simplex violation over all label distributions: negative mass
    /// or row-sum error.
    pub fn simplex_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for pi in &self.label_dists {
            let sum: f64 = pi.sum();
            worst = worst.max((sum - 1.0).abs());
            for &x in pi.iter() {
                worst = worst.max(-x);
            }
        }
        worst
    }
}

/// Squared-embedding weights, one row per node, rows on the simplex.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub w: Array2<f64>,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn r(&self) -> usize {
        self.w.ncols()
    }

    /// Largest row-simplex violation: |row sum - 1| or negative entries.
    pub fn simplex_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in self.w.rows() {
            worst = worst.max((row.sum() - 1.0).abs());
            for &x in row.iter() {
                worst = worst.max(-x);
            }
        }
        worst
    }
}

/// (1/m)(x' R^{-1} x + tr R).
pub fn f_feature(x: &ArrayView1<f64>, r_mat: &ArrayView2<f64>) -> Result<f64> {
    let m = x.len();
    let l = cholesky(r_mat)?;
    let y = solve_with_cholesky(&l, x);
    let quad: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let trace: f64 = (0..m).map(|i| r_mat[[i, i]]).sum();
    Ok((quad + trace) / m as f64)
}

/// -pi[y_tilde].
pub fn f_label(y_tilde: usize, pi: &ArrayView1<f64>) -> Result<f64> {
    if y_tilde >= pi.len() {
        return Err(Error::IndexOutOfRange {
            index: y_tilde,
            limit: pi.len(),
        });
    }
    Ok(-pi[y_tilde])
}

/// Per-node mixed model: R_v = sum_i W_vi Rbar_i, pi_v = sum_i W_vi pibar_i.
pub fn mixed_models(
    w: &WeightMatrix,
    models: &AtomModels,
    v: usize,
) -> Result<(Array2<f64>, Array1<f64>)> {
    if v >= w.n() {
        return Err(Error::IndexOutOfRange {
            index: v,
            limit: w.n(),
        });
    }
    let m = models.m();
    let k = models.k();
    let mut r_v = Array2::<f64>::zeros((m, m));
    let mut pi_v = Array1::<f64>::zeros(k);
    for i in 0..models.r() {
        let wv = w.w[[v, i]];
        if wv == 0.0 {
            continue;
        }
        r_v.scaled_add(wv, &models.covariances[i]);
        pi_v.scaled_add(wv, &models.label_dists[i]);
    }
    Ok((r_v, pi_v))
}

/// <Abar, s s'> for one sqrt-weight column via the edge list:
/// 4 sum_{edges u<v} s_u s_v - (sum s)^2 + sum s^2.
fn polarized_quadform(neighbors: &[Vec<usize>], s: &[f64]) -> f64 {
    let total: f64 = s.iter().sum();
    let sq: f64 = s.iter().map(|x| x * x).sum();
    let mut edge_term = 0.0;
    for (u, adj) in neighbors.iter().enumerate() {
        for &v in adj {
            if v > u {
                edge_term += s[u] * s[v];
            }
        }
    }
    4.0 * edge_term - total * total + sq
}

pub(crate) fn adjacency_lists(instance: &PlantedInstance) -> Vec<Vec<usize>> {
    let n = instance.n;
    let mut out = vec![Vec::new(); n];
    for u in 0..n {
        for v in 0..n {
            if instance.adjacency[[u, v]] == 1 {
                out[u].push(v);
            }
        }
    }
    out
}

/// Cholesky-solved R_v^{-1} x_v for every node; the shared kernel behind the
/// feature objective and both feature gradients. Skipped when beta_f = 0.
fn node_solves(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
) -> Result<Vec<Array1<f64>>> {
    let mut out = Vec::with_capacity(instance.n);
    for v in 0..instance.n {
        let (r_v, _) = mixed_models(w, models, v)?;
        let l = cholesky(&r_v.view())?;
        out.push(solve_with_cholesky(&l, &instance.features.row(v)));
    }
    Ok(out)
}

/// Full objective
/// -beta_g <Abar, L> + beta_f sum_v f_feature + beta_l sum_train f_label
/// with L = sum_i sqrt(W_:,i) sqrt(W_:,i)'. Tolerates unnormalized rows so
/// finite-difference probes can perturb single entries.
pub fn objective_phi(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
) -> Result<f64> {
    objective_phi_cached(instance, &adjacency_lists(instance), w, models, weights)
}

pub(crate) fn objective_phi_cached(
    instance: &PlantedInstance,
    neighbors: &[Vec<usize>],
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
) -> Result<f64> {
    let mut total = 0.0;
    if weights.beta_g != 0.0 {
        let mut graph = 0.0;
        let mut s = vec![0.0f64; instance.n];
        for i in 0..w.r() {
            for v in 0..instance.n {
                s[v] = w.w[[v, i]].max(0.0).sqrt();
            }
            graph += polarized_quadform(neighbors, &s);
        }
        total -= weights.beta_g * graph;
    }
    if weights.beta_f != 0.0 {
        let mut feat = 0.0;
        for v in 0..instance.n {
            let (r_v, _) = mixed_models(w, models, v)?;
            feat += f_feature(&instance.features.row(v), &r_v.view())?;
        }
        total += weights.beta_f * feat;
    }
    if weights.beta_l != 0.0 {
        let mut lab = 0.0;
        for v in 0..instance.n {
            if let Some(y) = instance.noisy_labels[v] {
                let (_, pi_v) = mixed_models(w, models, v)?;
                lab += f_label(y, &pi_v.view())?;
            }
        }
        total += weights.beta_l * lab;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("objective value {total}")));
    }
    Ok(total)
}

/// Sum-of-norms diagnostic: sum_{u<v} ||theta_u - theta_v|| with theta_v the
/// concatenation of the flattened mixed covariance and the mixed label
/// distribution.
pub fn son_penalty(w: &WeightMatrix, models: &AtomModels) -> Result<f64> {
    let n = w.n();
    let mut thetas = Vec::with_capacity(n);
    for v in 0..n {
        let (r_v, pi_v) = mixed_models(w, models, v)?;
        let mut flat: Vec<f64> = r_v.iter().copied().collect();
        flat.extend(pi_v.iter().copied());
        thetas.push(flat);
    }
    let mut total = 0.0;
    for u in 0..n {
        for v in (u + 1)..n {
            let d: f64 = thetas[u]
                .iter()
                .zip(thetas[v].iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            total += d.sqrt();
        }
    }
    Ok(total)
}

/// Gradient of the objective in W. Entry (v, i):
///   -beta_g sum_u Abar_uv sqrt(W_ui) / sqrt(max(W_vi, eps_floor))
///   + beta_f (1/m)(-x_v' R_v^{-1} Rbar_i R_v^{-1} x_v + tr Rbar_i)
///   + beta_l (-pibar_i[y_v] if v in train).
pub fn grad_w(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
    eps_floor: f64,
) -> Result<Array2<f64>> {
    grad_w_cached(instance, &adjacency_lists(instance), w, models, weights, eps_floor)
}

pub(crate) fn grad_w_cached(
    instance: &PlantedInstance,
    neighbors: &[Vec<usize>],
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
    eps_floor: f64,
) -> Result<Array2<f64>> {
    let n = instance.n;
    let r = w.r();
    let m = models.m();
    let mut out = Array2::<f64>::zeros((n, r));

    if weights.beta_g != 0.0 {
        let mut s = vec![0.0f64; n];
        for i in 0..r {
            for v in 0..n {
                s[v] = w.w[[v, i]].max(0.0).sqrt();
            }
            let s_total: f64 = s.iter().sum();
            for v in 0..n {
                // sum_u Abar_uv s_u = 2 sum_{u in N(v)} s_u - S + s_v.
                let mut adj_sum = 0.0;
                for &u in &neighbors[v] {
                    adj_sum += s[u];
                }
                let numer = 2.0 * adj_sum - s_total + s[v];
                let denom = w.w[[v, i]].max(eps_floor).sqrt();
                out[[v, i]] -= weights.beta_g * numer / denom;
            }
        }
    }

    if weights.beta_f != 0.0 {
        let solves = node_solves(instance, w, models)?;
        let traces: Vec<f64> = models
            .covariances
            .iter()
            .map(|c| (0..m).map(|a| c[[a, a]]).sum())
            .collect();
        for v in 0..n {
            let y = &solves[v];
            for i in 0..r {
                let cov = &models.covariances[i];
                let mut quad = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        quad += y[a] * cov[[a, b]] * y[b];
                    }
                }
                out[[v, i]] += weights.beta_f * (traces[i] - quad) / m as f64;
            }
        }
    }

    if weights.beta_l != 0.0 {
        for v in 0..n {
            if let Some(y) = instance.noisy_labels[v] {
                for i in 0..r {
                    out[[v, i]] -= weights.beta_l * models.label_dists[i][y];
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the objective in atom covariance i:
/// beta_f sum_v W_vi (1/m)(-R_v^{-1} x_v x_v' R_v^{-1} + I).
pub fn grad_r(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
    i: usize,
) -> Result<Array2<f64>> {
    Ok(grad_r_all(instance, w, models, weights)?.swap_remove(i))
}

/// All atom-covariance gradients at once, sharing the per-node solves.
pub fn grad_r_all(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
) -> Result<Vec<Array2<f64>>> {
    let m = models.m();
    let r = models.r();
    let mut out = vec![Array2::<f64>::zeros((m, m)); r];
    if weights.beta_f == 0.0 {
        return Ok(out);
    }
    let solves = node_solves(instance, w, models)?;
    let scale = weights.beta_f / m as f64;
    for v in 0..instance.n {
        let y = &solves[v];
        for i in 0..r {
            let wv = w.w[[v, i]];
            if wv == 0.0 {
                continue;
            }
            let g = &mut out[i];
            for a in 0..m {
                for b in 0..m {
                    g[[a, b]] -= scale * wv * y[a] * y[b];
                }
            }
            for a in 0..m {
                g[[a, a]] += scale * wv;
            }
        }
    }
    Ok(out)
}

/// Gradient of the objective in atom label distribution i:
/// -beta_l sum_{v in train} W_vi e_{y_v}.
pub fn grad_pi(
    instance: &PlantedInstance,
    w: &WeightMatrix,
    models: &AtomModels,
    weights: &TermWeights,
    i: usize,
) -> Array1<f64> {
    let k = models.k();
    let mut out = Array1::<f64>::zeros(k);
    if weights.beta_l == 0.0 {
        return out;
    }
    for v in 0..instance.n {
        if let Some(y) = instance.noisy_labels[v] {
            out[y] -= weights.beta_l * w.w[[v, i]];
        }
    }
    out
}
