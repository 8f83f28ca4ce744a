//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! the implicit-shift QL iteration, with accumulated transformations.
//!
//! Kept in-repo so the spectral baseline carries no external numeric
//! dependency. The reduction works on symmetric storage with contiguous row
//! slices only (the matrix-vector product and the rank-1 updates are batched
//! as row axpys), and the QL rotations run on a transposed accumulator, so
//! the O(n^3) inner loops all stream over contiguous memory. Intended for
//! the dense-Laplacian scale (n up to a few thousand).

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must be symmetric; |A[{i}][{j}] - A[{j}][{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("QL iteration failed to converge on row {0}")]
    NoConvergence(usize),
}

/// Full spectrum of a symmetric matrix.
///
/// Eigenvalues ascend; `vectors.column(i)` is the unit eigenvector of
/// `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Decompose a dense symmetric matrix.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<SymmetricEigen, EigenError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(EigenError::NotSquare {
            rows: n,
            cols: matrix.ncols(),
        });
    }
    let scale = matrix.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (matrix[[i, j]] - matrix[[j, i]]).abs();
            if delta > 1e-10 * scale.max(1.0) {
                return Err(EigenError::NotSymmetric { i, j, delta });
            }
        }
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }

    // Flat row-major working copy.
    let mut a: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        a.extend(matrix.row(i).iter());
    }
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    tridiagonalize(&mut a, n, &mut diag, &mut off);

    // Transpose the accumulated Q so each candidate eigenvector is one
    // contiguous row during the rotation sweeps.
    let mut qt = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            qt[c * n + r] = a[r * n + c];
        }
    }
    ql_implicit_shifts(&mut diag, &mut off, &mut qt, n)?;

    // Sort ascending, carrying eigenvector rows of qt along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[x].partial_cmp(&diag[y]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = qt[src * n + row];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Householder reduction to tridiagonal form. On return `diag`/`off` hold
/// the tridiagonal matrix and `a` the accumulated orthogonal transformation
/// (row-major).
fn tridiagonalize(a: &mut [f64], n: usize, diag: &mut [f64], off: &mut [f64]) {
    let mut householder = vec![0.0; n];
    let mut e = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a[i * n..i * n + l + 1].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                off[i] = a[i * n + l];
            } else {
                let row_i = &mut a[i * n..i * n + l + 1];
                for v in row_i.iter_mut() {
                    *v /= scale;
                }
                h = row_i.iter().map(|v| v * v).sum();
                let f = row_i[l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                off[i] = scale * g;
                h -= f * g;
                row_i[l] = f - g;
                householder[..=l].copy_from_slice(&a[i * n..i * n + l + 1]);

                // e_raw = A * u over the active block, using symmetric
                // storage: row dots for k <= j, batched row axpys for k > j.
                for j in 0..=l {
                    e[j] = a[j * n..j * n + j + 1]
                        .iter()
                        .zip(&householder[..=j])
                        .map(|(&x, &u)| x * u)
                        .sum();
                    // Column i stores u / h for the accumulation phase.
                    a[j * n + i] = householder[j] / h;
                }
                for k in 1..=l {
                    let uk = householder[k];
                    if uk != 0.0 {
                        for (ej, &akj) in e[..k].iter_mut().zip(&a[k * n..k * n + k]) {
                            *ej += akj * uk;
                        }
                    }
                }

                let mut f_acc = 0.0;
                for j in 0..=l {
                    e[j] /= h;
                    f_acc += e[j] * householder[j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    e[j] -= hh * householder[j];
                }
                // A <- A - u e^T - e u^T on the active lower triangle.
                for j in 0..=l {
                    let uj = householder[j];
                    let ej = e[j];
                    let row_j = &mut a[j * n..j * n + j + 1];
                    for ((x, &ek), &uk) in
                        row_j.iter_mut().zip(&e[..=j]).zip(&householder[..=j])
                    {
                        *x -= uj * ek + ej * uk;
                    }
                }
                off[..=l].copy_from_slice(&e[..=l]);
            }
        } else {
            off[i] = a[i * n + l];
        }
        diag[i] = h;
    }
    diag[0] = 0.0;
    off[0] = 0.0;

    // Accumulate the transformations into the top-left blocks: for each
    // reflector, Q <- (I - u u^T / h) Q as two passes of contiguous row
    // operations.
    let mut gvec = vec![0.0; n];
    for i in 0..n {
        let l = i;
        if diag[i] != 0.0 {
            householder[..l].copy_from_slice(&a[i * n..i * n + l]);
            gvec[..l].fill(0.0);
            for k in 0..l {
                let uk = householder[k];
                if uk != 0.0 {
                    for (g, &qkj) in gvec[..l].iter_mut().zip(&a[k * n..k * n + l]) {
                        *g += uk * qkj;
                    }
                }
            }
            for k in 0..l {
                // a[k][i] holds u_k / h.
                let factor = a[k * n + i];
                if factor != 0.0 {
                    for (qkj, &g) in a[k * n..k * n + l].iter_mut().zip(&gvec[..l]) {
                        *qkj -= factor * g;
                    }
                }
            }
        }
        diag[i] = a[i * n + i];
        a[i * n + i] = 1.0;
        for j in 0..i {
            a[j * n + i] = 0.0;
            a[i * n + j] = 0.0;
        }
    }
}

fn hypot(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if a > b {
        a * (1.0 + (b / a).powi(2)).sqrt()
    } else if b == 0.0 {
        0.0
    } else {
        b * (1.0 + (a / b).powi(2)).sqrt()
    }
}

/// Implicit-shift QL on the tridiagonal (diag, off); rotations are applied
/// to the transposed accumulator `qt` (row c = eigenvector candidate c).
fn ql_implicit_shifts(
    diag: &mut [f64],
    off: &mut [f64],
    qt: &mut [f64],
    n: usize,
) -> Result<(), EigenError> {
    for i in 1..n {
        off[i - 1] = off[i];
    }
    off[n - 1] = 0.0;

    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 50 {
                return Err(EigenError::NoConvergence(l));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = hypot(g, 1.0);
            let sign_r = if g >= 0.0 { r.abs() } else { -r.abs() };
            g = diag[m] - diag[l] + off[l] / (g + sign_r);
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = hypot(f, g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                // Rotate eigenvector rows i and i+1 of qt.
                let (head, tail) = qt.split_at_mut((i + 1) * n);
                let row_i = &mut head[i * n..(i + 1) * n];
                let row_i1 = &mut tail[..n];
                for (xi, xi1) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                    f = *xi1;
                    *xi1 = s * *xi + c * f;
                    *xi = c * *xi - s * f;
                }
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn residual(matrix: &Array2<f64>, eig: &SymmetricEigen) -> f64 {
        let n = matrix.nrows();
        let mut worst = 0.0f64;
        for c in 0..n {
            let v = eig.vectors.column(c);
            let av = matrix.dot(&v);
            for i in 0..n {
                worst = worst.max((av[i] - eig.values[c] * v[i]).abs());
            }
        }
        worst
    }

    fn frob(matrix: &Array2<f64>) -> f64 {
        matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn diagonal_matrix() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let eig = symmetric_eigen(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn path_graph_laplacian_spectrum() {
        // Laplacian of the 3-path has eigenvalues {0, 1, 3}.
        let l = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        let eig = symmetric_eigen(&l).unwrap();
        assert_abs_diff_eq!(eig.values[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(eig.values[2], 3.0, epsilon = 1e-10);
        // Constant eigenvector for the zero eigenvalue.
        let v0 = eig.vectors.column(0);
        for i in 1..3 {
            assert_abs_diff_eq!(v0[i].abs(), v0[0].abs(), epsilon = 1e-10);
        }
    }

    #[test]
    fn random_matrices_satisfy_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1usize, 2, 3, 5, 16, 40, 111] {
            let mut m = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let v = rng.random::<f64>() * 2.0 - 1.0;
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let eig = symmetric_eigen(&m).unwrap();
            assert!(
                residual(&m, &eig) <= 1e-8 * frob(&m).max(1.0),
                "residual too large at n = {n}"
            );
            // Columns orthonormal.
            for a in 0..n {
                for b in 0..n {
                    let dot = eig.vectors.column(a).dot(&eig.vectors.column(b));
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot, expected, epsilon = 1e-9);
                }
            }
            // Ascending.
            for w in eig.values.to_vec().windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            symmetric_eigen(&m),
            Err(EigenError::NotSymmetric { .. })
        ));
    }
}
