//! Top eigenpairs of symmetric operators.
//!
//! Small problems go through a dense symmetric decomposition. Larger ones use
//! Lanczos with full reorthogonalization, which only needs matrix-vector
//! products and converges in a few dozen steps for the low-rank-plus-noise
//! matrices seen here.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Above this dimension the Lanczos path is used.
pub const DENSE_LIMIT: usize = 256;
/// Required eigenpair residual `|Mu - lambda u|`, relative to `|M|`.
pub const RESIDUAL_TOL: f64 = 1e-8;

const LANCZOS_SEED: u64 = 0x1a2c_305e_ed00_0001;
const CHECK_EVERY: usize = 8;

/// A real symmetric linear operator.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `y = M x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        out
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        // column-major storage: y = sum_j x_j * col_j, which equals M x for
        // symmetric M and walks memory contiguously
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, mij) in y.iter_mut().zip(self.column(j).iter()) {
                *yi += mij * xj;
            }
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// The `r` algebraically largest eigenpairs, in decreasing order.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub vectors: DMatrix<f64>,
}

/// Maximum absolute asymmetry `|M_ij - M_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Computes the `r` algebraically largest eigenpairs of `op`.
///
/// Eigenvectors are signed so that their first nonzero component is positive.
pub fn top_eigenpairs<O: SymmetricOperator + ?Sized>(op: &O, r: usize) -> Result<EigenPairs> {
    let n = op.dim();
    if r == 0 || r > n {
        return Err(Error::Argument(format!(
            "requested {r} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let mut pairs = if n <= DENSE_LIMIT || 4 * r >= n {
        dense_top(&op.to_dense(), r)
    } else {
        lanczos_top(op, r)?
    };
    fix_signs(&mut pairs.vectors);
    Ok(pairs)
}

fn dense_top(m: &DMatrix<f64>, r: usize) -> EigenPairs {
    let eig = SymmetricEigen::new(m.clone());
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = order[..r].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), r);
    for (c, &i) in order[..r].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    EigenPairs { values, vectors }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn lanczos_top<O: SymmetricOperator + ?Sized>(op: &O, r: usize) -> Result<EigenPairs> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut q = random_unit_orthogonal(&mut rng, &basis, n)
        .ok_or_else(|| Error::Numerical("could not build a Lanczos start vector".into()))?;
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;

    loop {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q.clone());
        alpha.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let mut b = norm(&w);
        scale = scale.max(a.abs()).max(b);
        let dim = basis.len();
        let exhausted = dim == n;
        let breakdown = !exhausted && b <= 1e-12 * scale.max(f64::MIN_POSITIVE);

        if dim >= r && (exhausted || breakdown || dim % CHECK_EVERY == 0) {
            let effective_beta = if breakdown || exhausted { 0.0 } else { b };
            if let Some(pairs) = ritz_converged(op, &basis, &alpha, &beta, effective_beta, r)? {
                return Ok(pairs);
            }
            if exhausted {
                return Err(Error::Numerical(
                    "Lanczos exhausted the space without meeting the residual tolerance".into(),
                ));
            }
        }

        if breakdown {
            // invariant subspace found: continue from a fresh orthogonal direction
            b = 0.0;
            q = random_unit_orthogonal(&mut rng, &basis, n).ok_or_else(|| {
                Error::Numerical("could not extend the Krylov basis after breakdown".into())
            })?;
        } else {
            q = w.iter().map(|v| v / b).collect();
        }
        beta.push(b);
    }
}

/// Ritz pairs from the current tridiagonal matrix; `None` if not converged.
fn ritz_converged<O: SymmetricOperator + ?Sized>(
    op: &O,
    basis: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    last_beta: f64,
    r: usize,
) -> Result<Option<EigenPairs>> {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let norm_est = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let order = descending_order(eig.eigenvalues.as_slice());
    let bound_tol = 1e-2 * RESIDUAL_TOL * norm_est;
    let converged = order[..r]
        .iter()
        .all(|&i| (last_beta * eig.eigenvectors[(k - 1, i)]).abs() <= bound_tol);
    if !converged {
        return Ok(None);
    }

    let n = op.dim();
    let mut vectors = DMatrix::zeros(n, r);
    let mut values = Vec::with_capacity(r);
    let mut mu = vec![0.0; n];
    for (c, &i) in order[..r].iter().enumerate() {
        let mut u = vec![0.0; n];
        for (j, v) in basis.iter().enumerate() {
            axpy(eig.eigenvectors[(j, i)], v, &mut u);
        }
        let len = norm(&u);
        u.iter_mut().for_each(|x| *x /= len);
        let lambda = eig.eigenvalues[i];
        op.apply(&u, &mut mu);
        let residual = mu
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual > RESIDUAL_TOL * norm_est {
            return Ok(None);
        }
        values.push(lambda);
        vectors.column_mut(c).copy_from_slice(&u);
    }
    Ok(Some(EigenPairs { values, vectors }))
}

fn random_unit_orthogonal(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], n: usize) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let len = norm(&v);
        if len > 1e-8 {
            v.iter_mut().for_each(|x| *x /= len);
            return Some(v);
        }
    }
    None
}

/// Flips each column so its first nonzero entry is positive.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
