//! Small dense/iterative eigensolver helpers shared by the ED oracle and DMRG.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest eigenpairs from a Lanczos iteration.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosSettings {
    pub n_eig: usize,
    /// Residual norm `‖Hx - λx‖` at which a Ritz pair counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// When false, the best Ritz pairs are returned even if the residual
    /// target was missed.
    pub require_convergence: bool,
}

impl Default for LanczosSettings {
    fn default() -> Self {
        LanczosSettings {
            n_eig: 1,
            tol: 1e-11,
            max_iter: 300,
            require_convergence: true,
        }
    }
}

/// Lanczos with full reorthogonalization for the `n_eig` lowest eigenpairs
/// of the symmetric operator `apply` (which writes `H x` into its second
/// argument). Only one copy of an exactly degenerate eigenvalue is found.
pub fn lanczos<F>(dim: usize, apply: F, start: Option<&[f64]>, settings: LanczosSettings) -> Result<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(Error::Decomposition("empty operator".into()));
    }
    let mut v0 = match start {
        Some(s) if s.len() == dim && dot(s, s) > 1e-300 => s.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()
        }
    };
    normalize(&mut v0);

    let max_iter = settings.max_iter.min(dim);
    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut converged = false;
    let mut ritz: Option<(nalgebra::DVector<f64>, DMatrix<f64>)> = None;

    for k in 0..max_iter {
        apply(&basis[k], &mut w);
        let alpha = dot(&w, &basis[k]);
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(-c, b, &mut w);
            }
        }
        let beta = dot(&w, &w).sqrt();

        let m = alphas.len();
        let check = k + 1 == max_iter || beta < 1e-13 || m % 4 == 0 || m < 8;
        if check {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alphas[i];
                if i + 1 < m {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let wanted = settings.n_eig.min(m);
            let done = order[..wanted]
                .iter()
                .all(|&c| (beta * eig.eigenvectors[(m - 1, c)]).abs() < settings.tol);
            let vals = nalgebra::DVector::from_iterator(m, order.iter().map(|&c| eig.eigenvalues[c]));
            let vecs = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
            ritz = Some((vals, vecs));
            if (done && wanted == settings.n_eig) || beta < 1e-13 {
                converged = done || beta < 1e-13;
                break;
            }
        }
        if k + 1 == max_iter {
            break;
        }
        let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
        betas.push(beta);
        basis.push(next);
    }

    let (vals, vecs) = ritz.expect("at least one Ritz check");
    if !converged && settings.require_convergence {
        return Err(Error::Decomposition(format!(
            "Lanczos did not reach residual {:.1e} in {} iterations",
            settings.tol, max_iter
        )));
    }
    let m = vals.len();
    let wanted = settings.n_eig.min(m);
    let mut values = Vec::with_capacity(wanted);
    let mut vectors = Vec::with_capacity(wanted);
    for c in 0..wanted {
        let mut x = vec![0.0; dim];
        for (r, b) in basis.iter().take(m).enumerate() {
            axpy(vecs[(r, c)], b, &mut x);
        }
        normalize(&mut x);
        values.push(vals[c]);
        vectors.push(x);
    }
    Ok(Eigenpairs { values, vectors })
}

/// All eigenpairs of a dense symmetric matrix, ascending.
pub fn dense_eigh(m: DMatrix<f64>) -> Eigenpairs {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Eigenpairs {
        values: order.iter().map(|&c| eig.eigenvalues[c]).collect(),
        vectors: order
            .iter()
            .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
            .collect(),
    }
}
