//! Dense symmetric linear-algebra kernels: eigendecomposition, SPD solves,
//! spectral-box projection, and simplex utilities.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted descending.
/// Column `k` of `eigenvectors` pairs with `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;
const QL_MAX_ITERS: usize = 64;

/// Eigendecomposition of a symmetric matrix via Householder tridiagonalization
/// followed by implicit-shift QL. Deterministic for identical input: ties keep
/// ascending-index order and each eigenvector's largest-magnitude entry is
/// made positive.
pub fn sym_eig(a: &ArrayView2<f64>) -> Result<SymEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParam {
            field: "matrix",
            reason: format!("expected square matrix, got {}x{}", n, a.ncols()),
        });
    }
    let norm = frobenius(a);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym += (a[[i, j]] - a[[j, i]]).powi(2);
        }
    }
    let asym = (2.0 * asym).sqrt();
    let tol = SYMMETRY_TOL * norm.max(1e-300);
    if asym > tol {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tol,
        });
    }

    // Work on the symmetrized copy so tiny representational asymmetry cannot
    // leak into the factorization.
    let mut v = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            v[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    // Sort descending, carrying eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap().then(i.cmp(&j)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| d[k]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        // Sign convention: largest-magnitude entry positive.
        let mut pivot = 0usize;
        let mut best = -1.0f64;
        for i in 0..n {
            let mag = v[[i, src]].abs();
            if mag > best {
                best = mag;
                pivot = i;
            }
        }
        let sign = if v[[pivot, src]] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[[i, dst]] = sign * v[[i, src]];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction to tridiagonal form, accumulating the orthogonal
/// transformation in `v`. Classic tred2 (EISPACK lineage).
fn tred2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let fj = d[j];
                let gj = e[j];
                for k in j..i {
                    v[[k, j]] -= fj * e[k] + gj * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..(n - 1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal form, accumulating
/// eigenvectors in `v`. Classic tql2.
fn tql2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERS {
                    return Err(Error::EigNoConvergence { iters: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Errors if a pivot drops below 1e-12 (numerically singular input).
pub fn cholesky(r: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = r.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = r[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 1e-12 {
                    return Err(Error::Singular { pivot: sum });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves R y = x for symmetric positive-definite R.
pub fn spd_solve(r: &ArrayView2<f64>, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(r)?;
    Ok(solve_with_cholesky(&l, x))
}

/// Forward/back substitution given a precomputed Cholesky factor.
pub fn solve_with_cholesky(l: &Array2<f64>, x: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = x.to_owned();
    for i in 0..n {
        for k in 0..i {
            let t = l[[i, k]] * y[k];
            y[i] -= t;
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[[k, i]] * y[k];
            y[i] -= t;
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Linear minimization oracle over the spectral box: returns
/// argmin_{R in S_{rho_minus, rho_plus}} <G, R>. Eigenvalues of the result are
/// rho_minus where the gradient eigenvalue is positive and rho_plus otherwise
/// (zero gradient eigenvalues map to rho_plus).
pub fn project_spectral_box(g: &ArrayView2<f64>, rho_minus: f64, rho_plus: f64) -> Result<Array2<f64>> {
    assert!(rho_minus > 0.0 && rho_plus > rho_minus);
    let eig = sym_eig(g)?;
    let m = g.nrows();
    let mut out = Array2::<f64>::zeros((m, m));
    for k in 0..m {
        let r = if eig.eigenvalues[k] > 0.0 { rho_minus } else { rho_plus };
        let u = eig.eigenvectors.column(k);
        for i in 0..m {
            for j in 0..m {
                out[[i, j]] += r * u[i] * u[j];
            }
        }
    }
    Ok(out)
}

/// Linear minimization oracle over the standard simplex: one-hot at the
/// lowest index attaining the minimum. NaN entries are rejected.
pub fn simplex_vertex_argmin(g: &ArrayView1<f64>) -> Result<Array1<f64>> {
    if g.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in simplex gradient".into()));
    }
    let mut best = 0usize;
    for (k, &val) in g.iter().enumerate() {
        if val < g[best] {
            best = k;
        }
    }
    let mut out = Array1::<f64>::zeros(g.len());
    out[best] = 1.0;
    Ok(out)
}

/// Seeded random orthonormal basis: QR factor of a Gaussian matrix via
/// modified Gram-Schmidt, with the sign fixed so R has positive diagonal.
pub fn random_orthonormal<R: Rng>(rng: &mut R, m: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        let mut col: Array1<f64> = Array1::from_iter((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for k in 0..j {
            let proj: f64 = (0..m).map(|i| q[[i, k]] * col[i]).sum();
            for i in 0..m {
                col[i] -= proj * q[[i, k]];
            }
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Degenerate draw: fall back to a canonical direction.
        if norm < 1e-12 {
            col.fill(0.0);
            col[j % m] = 1.0;
        } else {
            let sign = if col[j] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..m {
                col[i] *= sign / norm;
            }
        }
        for i in 0..m {
            q[[i, j]] = col[i];
        }
    }
    q
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            for j in 0..=i {
                let v: f64 = rng.sample(StandardNormal);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
        let b = random_symmetric(rng, m);
        let mut a = b.dot(&b.t());
        for i in 0..m {
            a[[i, i]] += 0.5;
        }
        a
    }

    /// Samples a random member of the spectral box: random orthonormal basis
    /// with eigenvalues uniform in [rho_minus, rho_plus].
    pub(crate) fn random_box_member(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Array2<f64> {
        let q = random_orthonormal(rng, m);
        let mut out = Array2::<f64>::zeros((m, m));
        for k in 0..m {
            let lam = lo + (hi - lo) * rng.gen::<f64>();
            for i in 0..m {
                for j in 0..m {
                    out[[i, j]] += lam * q[[i, k]] * q[[j, k]];
                }
            }
        }
        out
    }

    #[test]
    fn sym_eig_diagonal() {
        let a = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let eig = sym_eig(&a.view()).unwrap();
        assert_eq!(eig.eigenvalues.to_vec(), vec![3.0, 2.0, 1.0]);
        // Eigenvectors are signed unit columns of the identity, permuted.
        for k in 0..3 {
            let col = eig.eigenvectors.column(k);
            let nonzero: Vec<usize> = (0..3).filter(|&i| col[i].abs() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
        }
    }

    #[test]
    fn sym_eig_2x2_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let eig = sym_eig(&a.view()).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_symmetric(&mut rng, 20);
            let eig = sym_eig(&a.view()).unwrap();
            let u = &eig.eigenvectors;
            let lam = Array2::from_diag(&eig.eigenvalues);
            let recon = u.dot(&lam).dot(&u.t());
            let norm_a = frobenius(&a.view());
            let resid = frobenius(&(&recon - &a).view());
            assert!(resid <= 1e-8 * norm_a.max(1.0), "residual {resid}");
            let gram = u.t().dot(u);
            let eye = Array2::<f64>::eye(20);
            assert!(frobenius(&(&gram - &eye).view()) <= 1e-8);
        }
    }

    #[test]
    fn sym_eig_trace_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_symmetric(&mut rng, 15);
        let eig = sym_eig(&a.view()).unwrap();
        let trace: f64 = (0..15).map(|i| a[[i, i]]).sum();
        let sum: f64 = eig.eigenvalues.sum();
        assert!((trace - sum).abs() <= 1e-8 * frobenius(&a.view()));
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(&a.view()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn sym_eig_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symmetric(&mut rng, 12);
        let e1 = sym_eig(&a.view()).unwrap();
        let e2 = sym_eig(&a.view()).unwrap();
        assert_eq!(e1.eigenvalues.to_vec(), e2.eigenvalues.to_vec());
        assert_eq!(
            e1.eigenvectors.iter().copied().collect::<Vec<_>>(),
            e2.eigenvectors.iter().copied().collect::<Vec<_>>()
        );
    }

    #[test]
    fn spd_solve_identity_and_diagonal() {
        let eye = Array2::<f64>::eye(4);
        let x = array![1.0, -2.0, 3.0, 0.5];
        let y = spd_solve(&eye.view(), &x.view()).unwrap();
        for i in 0..4 {
            assert!((y[i] - x[i]).abs() < 1e-14);
        }
        let r = array![[2.0, 0.0], [0.0, 4.0]];
        let x = array![2.0, 4.0];
        let y = spd_solve(&r.view(), &x.view()).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14);
        assert!((y[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spd_solve_residual_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let r = random_spd(&mut rng, 10);
            let x: Array1<f64> = Array1::from_iter((0..10).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let y = spd_solve(&r.view(), &x.view()).unwrap();
            let back = r.dot(&y);
            let resid = (&back - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(resid <= 1e-8 * xnorm.max(1.0));
        }
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let r = array![[1.0, 1.0], [1.0, 1.0]];
        let x = array![1.0, 1.0];
        assert!(matches!(
            spd_solve(&r.view(), &x.view()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn spectral_box_sign_rule_on_diagonal() {
        let g = array![[2.0, 0.0], [0.0, -3.0]];
        let r = project_spectral_box(&g.view(), 0.1, 1.0).unwrap();
        assert!((r[[0, 0]] - 0.1).abs() < 1e-12);
        assert!((r[[1, 1]] - 1.0).abs() < 1e-12);
        assert!(r[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn spectral_box_zero_gradient_convention() {
        let g = Array2::<f64>::zeros((3, 3));
        let r = project_spectral_box(&g.view(), 0.1, 1.0).unwrap();
        let eye = Array2::<f64>::eye(3);
        assert!(frobenius(&(&r - &(eye * 1.0)).view()) < 1e-12);
    }

    #[test]
    fn spectral_box_monte_carlo_optimality() {
        let (lo, hi) = (0.1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let g = random_symmetric(&mut rng, 5);
            let star = project_spectral_box(&g.view(), lo, hi).unwrap();
            let obj_star: f64 = g.iter().zip(star.iter()).map(|(a, b)| a * b).sum();
            for _ in 0..10_000 {
                let cand = random_box_member(&mut rng, 5, lo, hi);
                let obj: f64 = g.iter().zip(cand.iter()).map(|(a, b)| a * b).sum();
                assert!(obj_star <= obj + 1e-10);
            }
        }
    }

    #[test]
    fn spectral_box_output_eigenvalues_at_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_symmetric(&mut rng, 6);
        let r = project_spectral_box(&g.view(), 0.2, 0.9).unwrap();
        let eig = sym_eig(&r.view()).unwrap();
        for &lam in eig.eigenvalues.iter() {
            let at_bound = (lam - 0.2).abs() < 1e-9 || (lam - 0.9).abs() < 1e-9;
            assert!(at_bound, "eigenvalue {lam} not at a box bound");
        }
    }

    #[test]
    fn spectral_box_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_symmetric(&mut rng, 4);
        let a = project_spectral_box(&g.view(), 0.1, 0.7).unwrap();
        let b = project_spectral_box(&(&g * 3.5).view(), 0.1, 0.7).unwrap();
        assert!(frobenius(&(&a - &b).view()) < 1e-8);
    }

    #[test]
    fn simplex_argmin_basic_and_ties() {
        let g = array![0.5, -1.2, 0.3];
        let v = simplex_vertex_argmin(&g.view()).unwrap();
        assert_eq!(v.to_vec(), vec![0.0, 1.0, 0.0]);
        let g = array![1.0, 1.0, 1.0];
        let v = simplex_vertex_argmin(&g.view()).unwrap();
        assert_eq!(v.to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_argmin_exhaustive_vertex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let g: Array1<f64> = Array1::from_iter((0..6).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let v = simplex_vertex_argmin(&g.view()).unwrap();
            let val: f64 = g.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let best = g.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((val - best).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_argmin_rejects_nan() {
        let g = array![0.0, f64::NAN];
        assert!(simplex_vertex_argmin(&g.view()).is_err());
    }

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_orthonormal(&mut rng, 6);
        let gram = q.t().dot(&q);
        let eye = Array2::<f64>::eye(6);
        assert!(frobenius(&(&gram - &eye).view()) < 1e-10);
    }
}
