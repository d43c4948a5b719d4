//! Dense solves for the handful of small normal-equation systems in the crate.

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
///
/// `m` is row-major `n × n`. Returns `None` when a pivot falls below
/// `rel_tol` times the largest absolute entry of the original matrix.
pub fn solve(mut m: Vec<f64>, mut b: Vec<f64>, rel_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(m.len(), n * n);
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty range");
        if m[pivot * n + col].abs() <= rel_tol * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= m[row * n + k] * x[k];
        }
        x[row] = s / m[row * n + row];
    }
    Some(x)
}

/// Weighted least squares via normal equations.
///
/// `design` holds `p` columns of length `n`. Returns the coefficient vector
/// and the inverse of `XᵀWX` (row-major), or `None` if the system is singular.
pub fn weighted_least_squares(
    design: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let p = design.len();
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for a in 0..p {
        for b in a..p {
            let s: f64 = design[a]
                .iter()
                .zip(&design[b])
                .zip(w)
                .map(|((u, v), wi)| wi * u * v)
                .sum();
            xtx[a * p + b] = s;
            xtx[b * p + a] = s;
        }
        xty[a] = design[a].iter().zip(y).zip(w).map(|((u, yi), wi)| wi * u * yi).sum();
    }
    let beta = solve(xtx.clone(), xty, 1e-12)?;
    let mut inv = vec![0.0; p * p];
    for k in 0..p {
        let mut e = vec![0.0; p];
        e[k] = 1.0;
        let col = solve(xtx.clone(), e, 1e-12)?;
        for r in 0..p {
            inv[r * p + k] = col[r];
        }
    }
    Some((beta, inv))
}
