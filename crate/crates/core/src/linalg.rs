//! Dense symmetric eigen-solvers and small matrix utilities.
//!
//! Two independent solvers are provided. Householder tridiagonalization followed by
//! implicit QL is the default; cyclic Jacobi is slower but simple enough to serve as a
//! cross-check on the other.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Sweep cap for the cyclic Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 64;
/// Convergence threshold of the Jacobi solver relative to the trace.
pub const JACOBI_RELATIVE_THRESHOLD: f64 = 1e-12;
const QL_MAX_ITERATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Householder reduction to tridiagonal form, then implicit QL.
    #[default]
    HouseholderQl,
    /// Cyclic Jacobi rotations.
    Jacobi,
}

/// Raw eigen-decomposition of a symmetric matrix: unsorted values and the matching
/// eigenvectors stored as columns.
pub(crate) fn symmetric_eigen(a: ArrayView2<f64>, solver: EigenSolver) -> Result<(Vec<f64>, Array2<f64>)> {
    match solver {
        EigenSolver::HouseholderQl => householder_ql(a),
        EigenSolver::Jacobi => jacobi(a),
    }
}

fn householder_ql(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    let mut v: Vec<f64> = a.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 1 {
        return Ok((vec![v[0]], Array2::from_elem((1, 1), 1.0)));
    }
    tred2(n, &mut v, &mut d, &mut e);
    // tql2 rotates pairs of eigenvector columns; keep them as contiguous rows.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut vt, &mut d, &mut e)?;
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| vt[j * n + i]);
    Ok((d, vectors))
}

// Symmetric Householder reduction to tridiagonal form (EISPACK tred2).
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
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
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..(n - 1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal form (EISPACK tql2). `vt` holds eigenvectors as rows.
fn tql2(n: usize, vt: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERATIONS {
                    return Err(Error::EigenFailure { sweeps: iter });
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
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
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
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for (vi, vn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let hk = *vn;
                        *vn = s * *vi + c * hk;
                        *vi = c * *vi - s * hk;
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

fn jacobi(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = {
        let trace: f64 = (0..n).map(|i| m[i * n + i].abs()).sum();
        if trace > 0.0 {
            trace
        } else {
            m.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    };
    let tol = JACOBI_RELATIVE_THRESHOLD * scale;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenFailure { sweeps: JACOBI_MAX_SWEEPS });
    }
    let values = (0..n).map(|i| m[i * n + i]).collect();
    let vectors = Array2::from_shape_vec((n, n), v).expect("square buffer");
    Ok((values, vectors))
}

/// Largest absolute entry of a matrix.
pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest absolute entry of `A Aᵀ − I`.
pub fn orthogonality_residual(a: &Array2<f64>) -> f64 {
    let g = a.dot(&a.t());
    g.indexed_iter()
        .map(|((i, j), x)| if i == j { (x - 1.0).abs() } else { x.abs() })
        .fold(0.0, f64::max)
}

/// Largest absolute entry of `A − Aᵀ`.
pub fn asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let mean = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = mean;
            a[[j, i]] = mean;
        }
    }
}

pub fn diag_matrix(values: &Array1<f64>) -> Array2<f64> {
    Array2::from_diag(values)
}

/// Draws a Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    orthonormalize_columns(cols)
}

/// Orthogonal matrix near the identity: the `Q` factor of `I + t G / √n` for a
/// standard normal `G`. Larger `t` moves it toward a Haar draw.
pub fn perturbed_orthogonal<R: Rng + ?Sized>(n: usize, t: f64, rng: &mut R) -> Array2<f64> {
    let s = t / (n as f64).sqrt();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| s * rng.sample::<f64, _>(StandardNormal) + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    orthonormalize_columns(cols)
}

fn orthonormalize_columns(mut cols: Vec<Vec<f64>>) -> Array2<f64> {
    let n = cols.len();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        // Two passes of modified Gram-Schmidt keep the result orthogonal to rounding.
        for _ in 0..2 {
            for prev in done.iter() {
                let proj: f64 = prev.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, p) in col.iter_mut().zip(prev.iter()) {
                    *c -= proj * p;
                }
            }
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in col.iter_mut() {
            *c /= norm;
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| cols[j][i])
}

/// `n × c` matrix of independent standard normal draws.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("buffer length matches shape")
}

/// `rows` samples of `mean + F z` with `z` standard normal, so the population
/// covariance is `F Fᵀ`. `factor` is `C × K`.
pub fn gaussian_samples<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    mean: &Array1<f64>,
    factor: &Array2<f64>,
) -> Array2<f64> {
    let z = standard_normal(rng, rows, factor.ncols());
    z.dot(&factor.t()) + mean
}
