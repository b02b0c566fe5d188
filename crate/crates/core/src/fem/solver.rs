//! Iterative solvers: Jacobi-preconditioned conjugate gradients for SPD
//! systems and MINRES for the symmetric indefinite saddle systems.
//! Both support projection onto the orthogonal complement of a known
//! nullspace (quotient spaces are handled in-solver, keeping operators
//! symmetric), and both are strictly deterministic.

use crate::error::HomogError;
use crate::fem::sparse::SparseMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Iteration budget: 50 * sqrt(n), at least 10_000.
pub fn max_iterations(n: usize) -> usize {
    ((50.0 * (n as f64).sqrt()) as usize).max(10_000)
}

/// Orthonormalize the given nullspace vectors (modified Gram-Schmidt);
/// near-dependent vectors are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let n = norm(&w);
        if n > 1e-12 * norm(v).max(1.0) {
            for wi in w.iter_mut() {
                *wi /= n;
            }
            basis.push(w);
        }
    }
    basis
}

/// Remove the components of `v` along the orthonormal `basis`.
pub fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= c * bi;
        }
    }
}

/// Result of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for SPD (possibly semi-definite with known
/// nullspace) systems. Returns the solution orthogonal to the nullspace.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    nullspace: &[Vec<f64>],
    context: &str,
) -> Result<(Vec<f64>, SolveInfo), HomogError> {
    let n = a.nrows;
    debug_assert_eq!(b.len(), n);
    let basis = orthonormalize(nullspace);
    let minv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
        .collect();

    let raw_norm = norm(b);
    let mut r = b.to_vec();
    project_out(&mut r, &basis);
    let b_norm = norm(&r);
    let mut x = vec![0.0; n];
    // The projected load may be pure roundoff when b lies in the kernel.
    if b_norm <= 1e-14 * raw_norm.max(1.0) {
        return Ok((
            x,
            SolveInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    project_out(&mut z, &basis);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_it = max_iterations(n);

    for it in 1..=max_it {
        a.matvec(&p, &mut ap);
        project_out(&mut ap, &basis);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(HomogError::NoConvergence {
                context: format!("{context}: CG curvature non-positive (matrix not SPD on the reduced space)"),
                residual: norm(&r) / b_norm,
                iterations: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / b_norm;
        if res <= tol {
            project_out(&mut x, &basis);
            return Ok((
                x,
                SolveInfo {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        project_out(&mut z, &basis);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(HomogError::NoConvergence {
        context: context.to_string(),
        residual: norm(&r) / b_norm,
        iterations: max_it,
    })
}

/// MINRES for a symmetric (indefinite) operator given as a closure.
/// The iterate is kept in the orthogonal complement of `basis`
/// (orthonormal) throughout.
pub fn solve_minres(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_it: usize,
    basis: &[Vec<f64>],
    context: &str,
) -> Result<(Vec<f64>, SolveInfo), HomogError> {
    let n = b.len();
    let raw_norm = norm(b);
    let mut v = b.to_vec();
    project_out(&mut v, basis);
    let beta1 = norm(&v);
    let mut x = vec![0.0; n];
    if beta1 <= 1e-14 * raw_norm.max(1.0) {
        return Ok((
            x,
            SolveInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    for vi in v.iter_mut() {
        *vi /= beta1;
    }

    let mut v_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w_old = vec![0.0; n];
    let mut av = vec![0.0; n];

    let mut beta = beta1;
    let mut eta = beta1;
    let (mut gamma, mut gamma_old) = (1.0_f64, 1.0_f64);
    let (mut sigma, mut sigma_old) = (0.0_f64, 0.0_f64);

    for it in 1..=max_it {
        apply(&v, &mut av);
        project_out(&mut av, basis);
        let alpha = dot(&v, &av);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_prev[i];
        }
        let beta_new = norm(&av);

        // Givens rotations updating the tridiagonal QR factorization.
        let delta = gamma * alpha - gamma_old * sigma * beta;
        let rho1 = (delta * delta + beta_new * beta_new).sqrt();
        let rho2 = sigma * alpha + gamma_old * gamma * beta;
        let rho3 = sigma_old * beta;
        if rho1 == 0.0 {
            break; // exact breakdown: residual already minimal
        }
        let gamma_new = delta / rho1;
        let sigma_new = beta_new / rho1;

        for i in 0..n {
            let wn = (v[i] - rho3 * w_old[i] - rho2 * w[i]) / rho1;
            w_old[i] = w[i];
            w[i] = wn;
            x[i] += gamma_new * eta * wn;
        }
        eta = -sigma_new * eta;
        let res = eta.abs() / beta1;
        if res <= tol {
            return Ok((
                x,
                SolveInfo {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        if beta_new == 0.0 {
            break;
        }
        for i in 0..n {
            let t = av[i] / beta_new;
            v_prev[i] = v[i];
            v[i] = t;
        }
        beta = beta_new;
        gamma_old = gamma;
        gamma = gamma_new;
        sigma_old = sigma;
        sigma = sigma_new;
    }
    // Breakdown exit: verify the residual honestly before accepting.
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    project_out(&mut r, basis);
    let res = norm(&r) / beta1;
    if res <= tol {
        Ok((
            x,
            SolveInfo {
                iterations: max_it,
                relative_residual: res,
            },
        ))
    } else {
        Err(HomogError::NoConvergence {
            context: context.to_string(),
            residual: res,
            iterations: max_it,
        })
    }
}
