//! Singular value thresholding and the truncated-SVD machinery behind it.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Columns whose Gram-Schmidt residual falls below this fraction of their
/// original norm are treated as linearly dependent.
pub const DROP_TOL: f64 = 1e-10;

/// Default iteration cap of [`power_method`].
pub const POWER_MAX_ITERS: usize = 100;

/// Rank-`k` factorization `U diag(sigma) V^T` with orthonormal `U`, `V` and
/// positive, non-increasing `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Default for ThinFactors {
    fn default() -> Self {
        ThinFactors::empty(0, 0)
    }
}

impl ThinFactors {
    pub fn empty(rows: usize, cols: usize) -> Self {
        ThinFactors {
            u: DMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Sweep cap of [`jacobi_svd`]; quadratic convergence needs far fewer.
const JACOBI_MAX_SWEEPS: usize = 60;

// Columns count as orthogonal once |<a, b>| <= JACOBI_TOL |a| |b|.
const JACOBI_TOL: f64 = 2.0 * f64::EPSILON;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies the plane rotation `(c, s)` to columns `p < q` of a column-major
/// matrix with `len` rows.
fn rotate(data: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    for (x, y) in cp.iter_mut().zip(&mut tail[..len]) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
fn jacobi_tall(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let ws = w.as_slice();
                    let (cp, cq) = (&ws[p * m..(p + 1) * m], &ws[q * m..(q + 1) * m]);
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                rotate(w.as_mut_slice(), m, p, q, c, c * t);
                rotate(v.as_mut_slice(), n, p, q, c, c * t);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".to_string()));
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > 0.0 {
            u.set_column(k, &(w.column(j) / s));
        }
        vs.set_column(k, &v.column(j));
        sigma.push(s);
    }
    Ok((u, sigma, vs))
}

/// Thin SVD `(U, sigma, V)` with `sigma` non-increasing, by one-sided Jacobi
/// rotations. Columns of `U` belonging to zero singular values are zero.
pub fn jacobi_svd(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".to_string()));
    }
    if z.nrows() >= z.ncols() {
        jacobi_tall(z)
    } else {
        let (v, sigma, u) = jacobi_tall(&z.transpose())?;
        Ok((u, sigma, v))
    }
}

fn keep_above(u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>, tau: f64) -> ThinFactors {
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > tau).collect();
    ThinFactors {
        u: u.select_columns(keep.iter()),
        sigma: keep.iter().map(|&i| sigma[i] - tau).collect(),
        v: v.select_columns(keep.iter()),
    }
}

/// Singular value thresholding through a full SVD: keeps the singular values
/// strictly above `tau`, shifted down by `tau`.
pub fn svt_exact(z: &DMatrix<f64>, tau: f64) -> Result<ThinFactors> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {tau}")));
    }
    let (u, sigma, v) = jacobi_svd(z)?;
    Ok(keep_above(&u, &sigma, &v, tau))
}

/// Output of [`qr_orthonormalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Orthonormalized {
    pub q: DMatrix<f64>,
    /// Number of input columns dropped as dependent or zero.
    pub dropped: usize,
}

/// Orthonormal basis of the column space of `m` via Gram-Schmidt with
/// reorthogonalization. Column order is preserved and the implied `R` has a
/// non-negative diagonal; dependent columns are dropped and counted.
pub fn qr_orthonormalize(m: &DMatrix<f64>) -> Orthonormalized {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    let mut dropped = 0;
    for col in m.column_iter() {
        let norm0 = col.norm();
        if norm0 == 0.0 || !norm0.is_finite() {
            dropped += 1;
            continue;
        }
        let mut r: DVector<f64> = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm <= DROP_TOL * norm0 {
            dropped += 1;
            continue;
        }
        basis.push(r / norm);
    }
    let q = if basis.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    Orthonormalized { q, dropped }
}

/// Extends `q` with canonical directions until it has `width` orthonormal
/// columns. Returns the number of added columns.
fn refill(q: &mut DMatrix<f64>, width: usize) -> usize {
    let rows = q.nrows();
    let width = width.min(rows);
    if q.ncols() >= width {
        return 0;
    }
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let start = basis.len();
    for e in 0..rows {
        if basis.len() == width {
            break;
        }
        let mut r = DVector::zeros(rows);
        r[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let n = r.norm();
        if n > 0.5 {
            basis.push(r / n);
        }
    }
    *q = DMatrix::from_columns(&basis);
    basis.len() - start
}

/// Frobenius distance between the projectors `A A^T` and `B B^T` of two
/// orthonormal bases.
pub fn projector_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let cross = (a.transpose() * b).norm_squared();
    (a.ncols() as f64 + b.ncols() as f64 - 2.0 * cross).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Stop once successive projectors differ by at most `delta` in Frobenius norm.
    pub delta: f64,
    pub max_iters: usize,
}

impl PowerOptions {
    pub fn new(delta: f64) -> Self {
        PowerOptions {
            delta,
            max_iters: POWER_MAX_ITERS,
        }
    }
}

/// Output of [`power_method`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerOutcome {
    /// Orthonormal `d_u x k` basis approximating the top-`k` left singular space.
    pub q: DMatrix<f64>,
    pub iterations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    /// True when a rank-deficient iterate had to be refilled.
    pub refilled: bool,
}

/// Block power iteration on `Z Z^T` warm-started from `Z R`.
pub fn power_method(z: &DMatrix<f64>, r0: &DMatrix<f64>, opts: PowerOptions) -> Result<PowerOutcome> {
    let k = r0.ncols();
    if k == 0 {
        return Err(Error::InvalidConfig("warm start must have at least one column".to_string()));
    }
    if r0.nrows() != z.ncols() {
        return Err(Error::Shape {
            expected: (z.ncols(), k),
            got: r0.shape(),
        });
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidConfig("power method needs max_iters >= 1".to_string()));
    }
    let width = k.min(z.nrows());
    let mut w = z * r0;
    let mut prev: Option<DMatrix<f64>> = None;
    let mut refilled = false;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut q = qr_orthonormalize(&w).q;
        if refill(&mut q, width) > 0 {
            refilled = true;
        }
        let diff = match &prev {
            Some(p) => projector_distance(&q, p),
            None => (q.ncols() as f64).sqrt(),
        };
        if diff <= opts.delta {
            return Ok(PowerOutcome {
                q,
                iterations,
                converged: true,
                refilled,
            });
        }
        if iterations >= opts.max_iters {
            return Ok(PowerOutcome {
                q,
                iterations,
                converged: false,
                refilled,
            });
        }
        w = z * (z.transpose() * &q);
        prev = Some(q);
    }
}

/// Output of [`approx_svt`].
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSvt {
    pub factors: ThinFactors,
    pub power_iterations: usize,
    pub converged: bool,
    pub refilled: bool,
    /// Width of the subspace the threshold was applied in.
    pub width: usize,
}

/// Singular value thresholding restricted to the subspace found by
/// [`power_method`]: `SVT(Z) ~ Q SVT(Q^T Z)`.
pub fn approx_svt(
    z: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    threshold: f64,
    opts: PowerOptions,
) -> Result<ApproxSvt> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {threshold}")));
    }
    let power = power_method(z, r0, opts)?;
    let small = power.q.transpose() * z;
    let (ub, sigma, vb) = jacobi_svd(&small)?;
    let thin = keep_above(&ub, &sigma, &vb, threshold);
    Ok(ApproxSvt {
        factors: ThinFactors {
            u: &power.q * thin.u,
            sigma: thin.sigma,
            v: thin.v,
        },
        power_iterations: power.iterations,
        converged: power.converged,
        refilled: power.refilled,
        width: power.q.ncols(),
    })
}

/// Leading singular triplet `(u, sigma_1, v)` by power iteration.
pub fn rank1_svd(y: &DMatrix<f64>) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".to_string()));
    }
    if y.is_empty() || y.amax() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    // Start from the heaviest row.
    let start = (0..y.nrows())
        .max_by(|&a, &b| y.row(a).norm_squared().total_cmp(&y.row(b).norm_squared()))
        .unwrap_or(0);
    let mut v: DVector<f64> = y.row(start).transpose();
    v /= v.norm();
    let mut u = y * &v;
    let mut sigma = 0.0;
    for _ in 0..20_000 {
        u = y * &v;
        let nu = u.norm();
        u /= nu;
        let mut next = y.tr_mul(&u);
        let s = next.norm();
        next /= s;
        let moved = (&next - &v).norm();
        v = next;
        let settled = (s - sigma).abs() <= 1e-15 * s && moved <= 1e-10;
        sigma = s;
        if settled {
            break;
        }
    }
    // Sign convention: the largest-magnitude entry of u is positive.
    if u.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0) < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
    Ok((u, sigma, v))
}

/// Operator norm; zero for the zero matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    match rank1_svd(m) {
        Ok((_, s, _)) => Ok(s),
        Err(Error::ZeroMatrix) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Sum of singular values through [`jacobi_svd`].
pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".to_string()));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(jacobi_svd(m)?.1.iter().sum())
}
