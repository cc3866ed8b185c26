//! Small dense helpers shared by the operator, trace and pencil modules.

use faer::Mat;

pub fn identity(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn trace(m: &Mat<f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `Tr(xy)` without forming the product.
pub fn trace_of_product(x: &Mat<f64>, y: &Mat<f64>) -> f64 {
    debug_assert_eq!(x.ncols(), y.nrows());
    debug_assert_eq!(x.nrows(), y.ncols());
    let mut acc = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            acc += x[(i, j)] * y[(j, i)];
        }
    }
    acc
}

pub fn frobenius(m: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc.sqrt()
}

pub fn max_abs(m: &Mat<f64>) -> f64 {
    let mut acc: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max(m[(i, j)].abs());
        }
    }
    acc
}

/// Largest entry of `m − mᵀ`.
pub fn asymmetry(m: &Mat<f64>) -> f64 {
    let mut acc: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..j {
            acc = acc.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    acc
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn crop(m: &Mat<f64>, n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| m[(i, j)])
}

pub fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    let mut out = Mat::zeros(ra * rb, ca * cb);
    for ja in 0..ca {
        for ia in 0..ra {
            let s = a[(ia, ja)];
            if s == 0.0 {
                continue;
            }
            for jb in 0..cb {
                for ib in 0..rb {
                    out[(ia * rb + ib, ja * cb + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Principal submatrix on the given index set.
pub fn principal_submatrix(m: &Mat<f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// `q · diag(d) · qᵀ`, symmetrized.
pub fn spectral_synthesis(q: &Mat<f64>, d: &[f64]) -> Mat<f64> {
    let n = q.nrows();
    let scaled = Mat::from_fn(n, d.len(), |i, j| q[(i, j)] * d[j]);
    let mut out = &scaled * q.transpose();
    symmetrize(&mut out);
    out
}

pub fn scaled(m: &Mat<f64>, s: f64) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| s * m[(i, j)])
}

/// `Σ cᵢ·mᵢ` over matrices of identical shape.
pub fn linear_combination(terms: &[(f64, &Mat<f64>)]) -> Mat<f64> {
    let (r, c) = (terms[0].1.nrows(), terms[0].1.ncols());
    Mat::from_fn(r, c, |i, j| terms.iter().map(|(s, m)| s * m[(i, j)]).sum())
}

pub fn mat_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut acc: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc = acc.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    acc
}

pub fn frobenius_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_of_product_matches_explicit_product() {
        let x = Mat::from_fn(4, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let y = Mat::from_fn(3, 4, |i, j| 1.0 + (i * j) as f64);
        let p = &x * &y;
        assert!((trace(&p) - trace_of_product(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn kron_layout_is_row_major_in_the_second_factor() {
        let a = Mat::from_fn(2, 2, |i, j| (1 + 2 * i + j) as f64);
        let b = identity(2);
        let k = kron(&a, &b);
        assert_eq!(k[(0, 2)], 2.0);
        assert_eq!(k[(1, 3)], 2.0);
        assert_eq!(k[(0, 1)], 0.0);
    }
}
