//! Small dense matrices stored row-major.

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

pub fn matmul(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| a[i * d + k] * b[k * d + j]).sum();
        }
    }
}

/// Solves `A x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-14` times the largest entry.
pub fn solve(d: usize, a: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = rhs.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))
            .unwrap();
        if m[piv * d + col].abs() < 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..d {
                m.swap(piv * d + k, col * d + k);
            }
            x.swap(piv, col);
        }
        for row in col + 1..d {
            let f = m[row * d + col] / m[col * d + col];
            for k in col..d {
                m[row * d + k] -= f * m[col * d + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..d).rev() {
        let s: f64 = (col + 1..d).map(|k| m[col * d + k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col * d + col];
    }
    Some(x)
}

/// `yᵀ A^{-1}` as the solution of `Aᵀ z = y`.
pub fn solve_transposed(d: usize, a: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let at: Vec<f64> = (0..d * d).map(|k| a[(k % d) * d + k / d]).collect();
    solve(d, &at, y)
}

pub fn determinant(d: usize, a: &[f64]) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))
            .unwrap();
        if m[piv * d + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..d {
                m.swap(piv * d + k, col * d + k);
            }
            det = -det;
        }
        det *= m[col * d + col];
        for row in col + 1..d {
            let f = m[row * d + col] / m[col * d + col];
            for k in col..d {
                m[row * d + k] -= f * m[col * d + k];
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_determinant() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let x = solve(3, &a, &[1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
        assert!((determinant(3, &a) - 18.0).abs() < 1e-12);
        assert!(solve(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0], &[1.0; 3]).is_none());
        let z = solve_transposed(3, &a, &[1.0, 0.0, 0.0]).unwrap();
        for j in 0..3 {
            let r: f64 = (0..3).map(|k| z[k] * a[k * 3 + j]).sum();
            assert!((r - if j == 0 { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }
}
