//! Alternating conditional-gradient solver over a fixed atom budget:
//! one-hot embedding LMO rows, spectral-box and simplex-vertex model LMOs,
//! step schedule 2/(t+2), and prediction decoding.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::PlantedInstance;
use crate::error::{Error, Result};
use crate::numerics::{project_spectral_box, simplex_vertex_argmin};
use crate::objective::{
    adjacency_lists, grad_pi, grad_r_all, grad_w_cached, objective_phi_cached, AtomModels,
    TermWeights, WeightMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Atom count; defaults to the cluster count.
    pub r: usize,
    pub weights: TermWeights,
    pub rho_minus: f64,
    pub rho_plus: f64,
    /// Floor for the structural-gradient denominator sqrt(W_vi). The default
    /// of 1.0 flattens the denominator entirely, ranking atoms by raw edge
    /// affinity; values near zero recover the literal quotient form, which
    /// repels every low-weight coordinate on sparse graphs and freezes the
    /// iterate after the first full-replacement step.
    pub eps_floor: f64,
    pub max_iters: usize,
    /// Relative objective-change stopping tolerance over a 10-iteration
    /// window.
    pub tol: f64,
    pub seed: u64,
    pub use_graph: bool,
    pub use_feature: bool,
    pub use_label: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            r: 3,
            weights: TermWeights::default(),
            rho_minus: 0.05,
            rho_plus: 0.8,
            eps_floor: 1.0,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            use_graph: true,
            use_feature: true,
            use_label: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidParam {
                field: "r",
                reason: "must be >= 1".into(),
            });
        }
        self.weights.validate()?;
        if !(self.rho_minus > 0.0 && self.rho_minus.is_finite()) {
            return Err(Error::InvalidParam {
                field: "rho_minus",
                reason: format!("must be > 0, got {}", self.rho_minus),
            });
        }
        if !(self.rho_plus > self.rho_minus && self.rho_plus.is_finite()) {
            return Err(Error::InvalidParam {
                field: "rho_plus",
                reason: format!("must exceed rho_minus = {}, got {}", self.rho_minus, self.rho_plus),
            });
        }
        if !(self.eps_floor > 0.0 && self.eps_floor.is_finite()) {
            return Err(Error::InvalidParam {
                field: "eps_floor",
                reason: format!("must be > 0, got {}", self.eps_floor),
            });
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParam {
                field: "tol",
                reason: format!("must be >= 0, got {}", self.tol),
            });
        }
        Ok(())
    }

    /// Term weights with ablated terms zeroed.
    pub fn effective_weights(&self) -> TermWeights {
        TermWeights {
            beta_g: if self.use_graph { self.weights.beta_g } else { 0.0 },
            beta_f: if self.use_feature { self.weights.beta_f } else { 0.0 },
            beta_l: if self.use_label { self.weights.beta_l } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: usize,
    pub w: WeightMatrix,
    pub models: AtomModels,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub atom_assignment: Vec<usize>,
    pub class_assignment: Vec<usize>,
    pub atom_to_class: Vec<usize>,
}

/// Initial state: W rows are zero-sum perturbations of the uniform row
/// (training rows nudged toward atom label mod r), atom covariances are
/// class-moment warm starts when labels are in play and distinct random
/// spectral-box members otherwise, and label distributions are uniform.
/// The row perturbation breaks the exact atom symmetry that would
/// otherwise collapse the first full-replacement step onto atom 0.
pub fn init_state(instance: &PlantedInstance, config: &SolverConfig) -> Result<SolverState> {
    config.validate()?;
    let r = config.r;
    let n = instance.n;
    if r > n {
        return Err(Error::InvalidParam {
            field: "r",
            reason: format!("atom count {r} exceeds node count {n}"),
        });
    }
    let m = instance.params.m;
    let k = instance.params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Rows start at the uniform point with a small perturbation. Training
    // rows are nudged toward atom (label mod r): this pins a deterministic
    // atom ↔ class correspondence before the first model LMO, which otherwise
    // resolves its per-atom label argmins independently and can assign two
    // atoms to the same class — a stable, symmetric local minimum. Remaining
    // rows get seeded zero-sum noise so the structural gradient is not exactly
    // tied across atoms at t = 0.
    let mut w = Array2::<f64>::zeros((n, r));
    let w_scale = 0.05f64.min(0.25 / r as f64);
    for v in 0..n {
        let u: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = u.iter().sum::<f64>() / r as f64;
        match instance.noisy_labels.get(v).copied().flatten() {
            Some(label) if config.use_label => {
                for i in 0..r {
                    let target = if i == label % r { 1.0 } else { 0.0 };
                    w[[v, i]] = 1.0 / r as f64 + w_scale * (target - 1.0 / r as f64);
                }
            }
            _ => {
                for i in 0..r {
                    w[[v, i]] = 1.0 / r as f64 + w_scale * (u[i] - mean);
                }
            }
        }
    }

    // Atom covariances must be distinct at t = 0: the first step runs at
    // gamma_0 = 1 and replaces W with one-hot rows, so the first partition is
    // shaped entirely by the t = 0 gradients, and identical covariances
    // (e.g. a shared box-midpoint matrix) leave it label-uncorrelated — the
    // run then settles into a symmetric local minimum it never escapes.
    //
    // When training labels are in play, atom i mod K warm-starts from the
    // box projection of the sample second moment of that class's training
    // features. This aligns the feature imprint with the class the label
    // term will pull into the same atom; leaving the covariances random
    // lets the two terms imprint different clusters on the same atom, a
    // stable permuted deadlock where training nodes sort one way and test
    // nodes another. Without labels the covariances fall back to distinct
    // random members of the spectral box (random orthonormal basis,
    // eigenvalues uniform over the central 90% of the box).
    let mut class_moments: Vec<Option<Array2<f64>>> = vec![None; k];
    if config.use_label {
        let mut sums = vec![Array2::<f64>::zeros((m, m)); k];
        let mut counts = vec![0usize; k];
        for v in 0..n {
            if let Some(label) = instance.noisy_labels.get(v).copied().flatten() {
                let x = instance.features.row(v);
                for a in 0..m {
                    for b in 0..m {
                        sums[label][[a, b]] += x[a] * x[b];
                    }
                }
                counts[label] += 1;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                class_moments[c] = Some(&sums[c] / counts[c] as f64);
            }
        }
    }
    let spread = 0.9;
    let midpoint = 0.5 * (config.rho_minus + config.rho_plus);
    let half_width = 0.5 * (config.rho_plus - config.rho_minus);
    let (lam_lo, lam_hi) = (
        midpoint - spread * half_width,
        midpoint + spread * half_width,
    );
    let mut covariances = Vec::with_capacity(r);
    let mut label_dists = Vec::with_capacity(r);
    for i in 0..r {
        if let Some(moment) = &class_moments[i % k] {
            // Clip the moment's eigenvalues into the box (this is the nearest
            // box member, unlike the sign-based gradient mapper used by the
            // model LMO, which would collapse any positive-definite input to
            // the same constant matrix).
            let eig = crate::numerics::sym_eig(&moment.view())?;
            let mut cov = Array2::<f64>::zeros((m, m));
            for (kdx, &lam) in eig.eigenvalues.iter().enumerate() {
                let clipped = lam.clamp(config.rho_minus, config.rho_plus);
                for a in 0..m {
                    for b in 0..m {
                        cov[[a, b]] +=
                            clipped * eig.eigenvectors[[a, kdx]] * eig.eigenvectors[[b, kdx]];
                    }
                }
            }
            covariances.push(cov);
            continue;
        }
        let basis = crate::numerics::random_orthonormal(&mut rng, m);
        let mut cov = Array2::<f64>::zeros((m, m));
        for kdx in 0..m {
            let lam = rng.gen_range(lam_lo..lam_hi);
            for a in 0..m {
                for b in 0..m {
                    cov[[a, b]] += lam * basis[[a, kdx]] * basis[[b, kdx]];
                }
            }
        }
        covariances.push(cov);
    }
    // Label distributions start uniform; the atom ↔ class correspondence is
    // left to the first model LMO, which reads it off the cluster
    // compositions that the covariance diversity induces.
    for _ in 0..r {
        label_dists.push(Array1::from_elem(k, 1.0 / k as f64));
    }

    Ok(SolverState {
        t: 0,
        w: WeightMatrix { w },
        models: AtomModels {
            covariances,
            label_dists,
        },
        objective_trace: Vec::new(),
    })
}

/// One-hot rows at the per-node argmin of the embedding gradient, ties to the
/// lowest atom index.
pub fn embedding_lmo(
    instance: &PlantedInstance,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    embedding_lmo_cached(instance, &adjacency_lists(instance), state, config)
}

fn embedding_lmo_cached(
    instance: &PlantedInstance,
    neighbors: &[Vec<usize>],
    state: &SolverState,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    let grad = grad_w_cached(
        instance,
        neighbors,
        &state.w,
        &state.models,
        &config.effective_weights(),
        config.eps_floor,
    )?;
    let n = instance.n;
    let r = config.r;
    let mut out = Array2::<f64>::zeros((n, r));
    for v in 0..n {
        let mut best = 0usize;
        for i in 1..r {
            if grad[[v, i]] < grad[[v, best]] {
                best = i;
            }
        }
        if grad[[v, best]].is_nan() {
            return Err(Error::NonFinite(format!("embedding gradient at node {v}")));
        }
        out[[v, best]] = 1.0;
    }
    Ok(out)
}

/// Per-atom model LMO: spectral-box projection of the covariance gradient and
/// simplex vertex at the label-gradient argmin.
pub fn model_lmo(
    instance: &PlantedInstance,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<AtomModels> {
    let weights = config.effective_weights();
    let grads = grad_r_all(instance, &state.w, &state.models, &weights)?;
    let k = instance.params.k;
    let mut covariances = Vec::with_capacity(config.r);
    let mut pi_grads = Vec::with_capacity(config.r);
    for g in grads.iter() {
        covariances.push(project_spectral_box(
            &g.view(),
            config.rho_minus,
            config.rho_plus,
        )?);
    }
    for i in 0..config.r {
        pi_grads.push(grad_pi(instance, &state.w, &state.models, &weights, i));
    }
    let mut label_dists: Vec<Array1<f64>> = pi_grads
        .iter()
        .map(|gp| simplex_vertex_argmin(&gp.view()))
        .collect::<Result<_>>()?;
    // When the atom count matches the class count, two atoms claiming the same
    // class vertex is a stable symmetric trap: both keep absorbing that class's
    // training nodes and neither ever flips. Resolve such collisions with the
    // minimum-cost one-to-one assignment over the same per-atom gradients; when
    // the independent argmins are already distinct the assignment coincides
    // with them and the vertices are unchanged.
    if config.use_label && config.r == k {
        let mut claimed = vec![false; k];
        let mut collision = false;
        for dist in &label_dists {
            let c = dist.iter().position(|&x| x == 1.0).unwrap_or(0);
            if claimed[c] {
                collision = true;
            }
            claimed[c] = true;
        }
        if collision {
            let mut cost = Array2::<f64>::zeros((k, k));
            for (i, gp) in pi_grads.iter().enumerate() {
                cost.row_mut(i).assign(gp);
            }
            let assignment = hungarian_min(&cost);
            for (i, &c) in assignment.iter().enumerate() {
                let mut pi = Array1::<f64>::zeros(k);
                pi[c] = 1.0;
                label_dists[i] = pi;
            }
        }
    }
    Ok(AtomModels {
        covariances,
        label_dists,
    })
}

/// Sequential embedding sweep: each row's gradient is evaluated at the state
/// left by the rows already committed in this sweep, then the row takes its
/// own conditional-gradient step toward its one-hot argmin. The immediate
/// atom-mass feedback keeps atom sizes balanced; with simultaneous row
/// updates every node chases the lightest atom in lockstep and the iterate
/// cycles at chance level without ever sorting.
fn sweep_rows(
    instance: &PlantedInstance,
    neighbors: &[Vec<usize>],
    state: &mut SolverState,
    config: &SolverConfig,
    gamma: f64,
) -> Result<()> {
    let weights = config.effective_weights();
    let n = instance.n;
    let r = config.r;
    let m = instance.params.m;
    let use_g = weights.beta_g != 0.0;
    let use_f = weights.beta_f != 0.0;
    let use_l = weights.beta_l != 0.0;

    // Square roots of W and their column sums, kept current as rows commit.
    let mut s = Array2::<f64>::zeros((n, r));
    let mut col_sums = vec![0.0f64; r];
    for v in 0..n {
        for i in 0..r {
            let sv = state.w.w[[v, i]].max(0.0).sqrt();
            s[[v, i]] = sv;
            col_sums[i] += sv;
        }
    }
    let traces: Vec<f64> = state
        .models
        .covariances
        .iter()
        .map(|c| (0..m).map(|a| c[[a, a]]).sum())
        .collect();
    let atom_factors: Vec<Array2<f64>> = if use_f {
        state
            .models
            .covariances
            .iter()
            .map(|c| crate::numerics::cholesky(&c.view()))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    // Sweep rows in a seeded permutation that changes every iteration. The
    // structural term's all-ones component acts as a running balance penalty
    // against the rows already committed in this sweep; with nodes laid out
    // in contiguous planted blocks, an index-order sweep turns that penalty
    // loose within a single cluster and force-spreads its nodes across all
    // atoms, no matter how clear the per-node preferences are. A random
    // interleaving lets the balance penalty act across clusters instead, and
    // removes the dependence on how the input happens to number its nodes.
    let mut order: Vec<usize> = (0..n).collect();
    let mut order_rng =
        ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9).wrapping_add(state.t as u64));
    order.shuffle(&mut order_rng);

    let mut grad = vec![0.0f64; r];
    for &v in &order {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if use_g {
            for i in 0..r {
                let mut adj = 0.0;
                for &u in &neighbors[v] {
                    adj += s[[u, i]];
                }
                let numer = 2.0 * adj - col_sums[i] + s[[v, i]];
                let denom = state.w.w[[v, i]].max(config.eps_floor).sqrt();
                grad[i] -= weights.beta_g * numer / denom;
            }
        }
        if use_f {
            // Score each atom by the exact pure-model fit of this row's
            // feature vector, not by the mixture gradient. At a split row the
            // mixture covariance can fit a boundary node better than either
            // pure model, making the split a local attractor the shrinking
            // step size never escapes; the pure fit is stable across sweeps,
            // so marginal rows accumulate mass toward one atom and commit.
            for i in 0..r {
                let y = crate::numerics::solve_with_cholesky(
                    &atom_factors[i],
                    &instance.features.row(v),
                );
                let quad = instance.features.row(v).dot(&y);
                grad[i] += weights.beta_f * (quad + traces[i]) / m as f64;
            }
        }
        if use_l {
            if let Some(yv) = instance.noisy_labels[v] {
                for i in 0..r {
                    grad[i] -= weights.beta_l * state.models.label_dists[i][yv];
                }
            }
        }
        let mut best = 0usize;
        for i in 1..r {
            if grad[i] < grad[best] {
                best = i;
            }
        }
        if grad[best].is_nan() {
            return Err(Error::NonFinite(format!("embedding gradient at node {v}")));
        }
        for i in 0..r {
            let target = if i == best { gamma } else { 0.0 };
            let new_w = (1.0 - gamma) * state.w.w[[v, i]] + target;
            state.w.w[[v, i]] = new_w;
            let new_s = new_w.max(0.0).sqrt();
            col_sums[i] += new_s - s[[v, i]];
            s[[v, i]] = new_s;
        }
    }
    Ok(())
}

/// One full iteration: a sequential embedding sweep (row-simplex convex
/// combinations in W-space), then the model LMO at the updated W, then
/// objective bookkeeping.
pub fn step(
    instance: &PlantedInstance,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<SolverState> {
    step_cached(instance, &adjacency_lists(instance), state, config)
}

fn step_cached(
    instance: &PlantedInstance,
    neighbors: &[Vec<usize>],
    state: &SolverState,
    config: &SolverConfig,
) -> Result<SolverState> {
    let gamma = 2.0 / (state.t as f64 + 2.0);
    let mut next = state.clone();
    sweep_rows(instance, neighbors, &mut next, config, gamma)?;

    let lmo_models = model_lmo(instance, &next, config)?;
    for i in 0..config.r {
        next.models.covariances[i] *= 1.0 - gamma;
        next.models.covariances[i].scaled_add(gamma, &lmo_models.covariances[i]);
        next.models.label_dists[i] *= 1.0 - gamma;
        next.models.label_dists[i].scaled_add(gamma, &lmo_models.label_dists[i]);
    }

    let phi = objective_phi_cached(
        instance,
        neighbors,
        &next.w,
        &next.models,
        &config.effective_weights(),
    )?;
    next.objective_trace.push(phi);
    next.t += 1;
    Ok(next)
}

/// Runs the solver until the relative objective change over a 10-iteration
/// window drops below tol or the iteration budget is spent.
pub fn solve(
    instance: &PlantedInstance,
    config: &SolverConfig,
) -> Result<(SolverState, Prediction)> {
    let neighbors = adjacency_lists(instance);
    let mut state = init_state(instance, config)?;
    while state.t < config.max_iters {
        state = step_cached(instance, &neighbors, &state, config)?;
        let trace = &state.objective_trace;
        if trace.len() > 10 {
            let cur = trace[trace.len() - 1];
            let old = trace[trace.len() - 11];
            if (cur - old).abs() / cur.abs().max(1.0) < config.tol {
                break;
            }
        }
    }
    let prediction = decode_prediction(instance, &state, config)?;
    Ok((state, prediction))
}

/// Decodes atom membership (argmax row weight) and the atom-to-class map:
/// label-distribution argmax when labels were in play, otherwise a maximum-
/// agreement assignment against training labels (noisy if present, true
/// labels restricted to the training split as a last resort).
pub fn decode_prediction(
    instance: &PlantedInstance,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<Prediction> {
    let n = instance.n;
    let r = config.r;
    let k = instance.params.k;
    let mut atom_assignment = Vec::with_capacity(n);
    for v in 0..n {
        let mut best = 0usize;
        for i in 1..r {
            if state.w.w[[v, i]] > state.w.w[[v, best]] {
                best = i;
            }
        }
        atom_assignment.push(best);
    }

    let have_noisy = instance.noisy_labels.iter().any(|l| l.is_some());
    let labels_used = config.use_label && config.weights.beta_l > 0.0 && have_noisy;

    let atom_to_class: Vec<usize> = if labels_used {
        state
            .models
            .label_dists
            .iter()
            .map(|pi| {
                let mut best = 0usize;
                for j in 1..k {
                    if pi[j] > pi[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    } else {
        if r != k {
            return Err(Error::Unsupported(format!(
                "label-free decoding needs atom count = cluster count, got r = {r}, K = {k}"
            )));
        }
        // Agreement counts between atoms and training labels.
        let mut agreement = Array2::<f64>::zeros((r, k));
        for v in 0..n {
            if !instance.train_mask[v] {
                continue;
            }
            let label = instance.noisy_labels[v].unwrap_or(instance.true_labels[v]);
            agreement[[atom_assignment[v], label]] += 1.0;
        }
        let cost = agreement.map(|&a| -a);
        hungarian_min(&cost)
    };

    let class_assignment = atom_assignment
        .iter()
        .map(|&a| atom_to_class[a])
        .collect();
    Ok(Prediction {
        atom_assignment,
        class_assignment,
        atom_to_class,
    })
}

/// Fraction of non-training nodes predicted correctly.
pub fn test_accuracy(instance: &PlantedInstance, prediction: &Prediction) -> f64 {
    let mut total = 0usize;
    let mut correct = 0usize;
    for v in 0..instance.n {
        if instance.train_mask[v] {
            continue;
        }
        total += 1;
        if prediction.class_assignment[v] == instance.true_labels[v] {
            correct += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    correct as f64 / total as f64
}

/// Minimum-cost assignment on a square matrix via the potentials-and-
/// augmenting-paths method; returns the column assigned to each row.
pub(crate) fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols());
    // 1-indexed potentials; way[j] remembers the augmenting predecessor.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
