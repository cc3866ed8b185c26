//! Scaled Hermite-function bases in one to three dimensions.
//!
//! The one-dimensional functions are `φⱼ(t) = α^{1/2} hⱼ(αt)` with `hⱼ` the
//! normalized Hermite functions. Operator matrices are dense and exact for
//! polynomial multipliers: products of position matrices are formed at an
//! enlarged size and cropped, so no truncation bias enters the kept block.

use std::collections::HashMap;
use std::f64::consts::PI;

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg;
use crate::polynomial::HomogeneousPolynomial;

/// Upper bound on the dimension of any assembled tensor basis.
pub const MAX_TOTAL_DIM: usize = 20_000;

/// Scale `α = N^{(m−1)/(2(m+1))}` that places the N-th basis turning point at
/// the quasi-classical turning point of `t^{2m}` at level N.
pub fn power_rule_alpha(size: usize, degree: u32) -> f64 {
    let m = degree as f64;
    (size as f64).powf((m - 1.0) / (2.0 * (m + 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HermiteBasis1D {
    size: usize,
    alpha: f64,
}

impl HermiteBasis1D {
    pub fn new(size: usize, alpha: f64) -> Result<Self> {
        if size < 4 {
            return Err(LabError::input(format!("basis size must be at least 4, got {size}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(LabError::input(format!("basis scale must be positive, got {alpha}")));
        }
        Ok(Self { size, alpha })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn position_matrix(&self) -> Mat<f64> {
        position_matrix(self.size, self.alpha)
    }

    pub fn laplacian_matrix(&self) -> Mat<f64> {
        laplacian_matrix(self.size, self.alpha)
    }

    /// Galerkin matrix of `t^k`, built at size `N + margin` and cropped.
    pub fn monomial_matrix(&self, k: u32, margin: usize) -> Mat<f64> {
        monomial_matrix(self.size, self.alpha, k, margin)
    }
}

/// Multiplication by `t`: tridiagonal with `(j, j+1)` entries `√((j+1)/2)/α`.
pub fn position_matrix(size: usize, alpha: f64) -> Mat<f64> {
    let mut x = Mat::zeros(size, size);
    for j in 0..size.saturating_sub(1) {
        let v = ((j as f64 + 1.0) / 2.0).sqrt() / alpha;
        x[(j, j + 1)] = v;
        x[(j + 1, j)] = v;
    }
    x
}

/// Matrix of `−d²/dt²`.
pub fn laplacian_matrix(size: usize, alpha: f64) -> Mat<f64> {
    let a2 = alpha * alpha;
    let mut k = Mat::zeros(size, size);
    for j in 0..size {
        k[(j, j)] = a2 * (2.0 * j as f64 + 1.0) / 2.0;
        if j + 2 < size {
            let v = -a2 * ((j as f64 + 1.0) * (j as f64 + 2.0)).sqrt() / 2.0;
            k[(j, j + 2)] = v;
            k[(j + 2, j)] = v;
        }
    }
    k
}

/// Leading `size × size` block of `X^k`, with `X` the position matrix at
/// `size + margin`. Exact Galerkin matrix of `t^k` whenever `2·margin ≥ k`.
pub fn monomial_matrix(size: usize, alpha: f64, k: u32, margin: usize) -> Mat<f64> {
    let big = size + margin;
    let off: Vec<f64> = (0..big.saturating_sub(1))
        .map(|j| ((j as f64 + 1.0) / 2.0).sqrt() / alpha)
        .collect();
    // only the first `size` columns of X^k are needed
    let mut cur = Mat::from_fn(big, size, |i, j| if i == j { 1.0 } else { 0.0 });
    for _ in 0..k {
        let mut next = Mat::zeros(big, size);
        for j in 0..size {
            for i in 0..big {
                let mut v = 0.0;
                if i > 0 {
                    v += off[i - 1] * cur[(i - 1, j)];
                }
                if i + 1 < big {
                    v += off[i] * cur[(i + 1, j)];
                }
                next[(i, j)] = v;
            }
        }
        cur = next;
    }
    let mut out = Mat::from_fn(size, size, |i, j| cur[(i, j)]);
    linalg::symmetrize(&mut out);
    out
}

/// Tensor product of one-dimensional bases, flattened with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorBasis {
    axes: Vec<HermiteBasis1D>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl TensorBasis {
    pub fn new(axes: Vec<HermiteBasis1D>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(LabError::input(format!("tensor basis needs 1 to 3 axes, got {}", axes.len())));
        }
        let total = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.size()))
            .unwrap_or(usize::MAX);
        if total > MAX_TOTAL_DIM {
            return Err(LabError::input(format!(
                "tensor basis dimension {total} exceeds the cap of {MAX_TOTAL_DIM}"
            )));
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len() - 1).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].size();
        }
        Ok(Self { axes, strides })
    }

    pub fn uniform(dim: usize, size: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![HermiteBasis1D::new(size, alpha)?; dim])
    }

    pub fn single(axis: HermiteBasis1D) -> Self {
        Self::new(vec![axis]).expect("one axis is always valid")
    }

    pub fn axes(&self) -> &[HermiteBasis1D] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn total_dim(&self) -> usize {
        self.axes.iter().map(|a| a.size()).product()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(s, a)| (flat / s) % a.size())
            .collect()
    }

    /// Same scales, every axis grown by `margin` functions.
    pub fn enlarged(&self, margin: usize) -> Result<Self> {
        Self::new(
            self.axes
                .iter()
                .map(|a| HermiteBasis1D::new(a.size() + margin, a.alpha()))
                .collect::<Result<_>>()?,
        )
    }

    /// `Σᵢ I ⊗ … ⊗ Kᵢ ⊗ … ⊗ I`, the matrix of `−Δ`.
    pub fn laplacian(&self) -> Mat<f64> {
        let per_axis: Vec<Mat<f64>> = self.axes.iter().map(|a| a.laplacian_matrix()).collect();
        let eyes: Vec<Mat<f64>> = self.axes.iter().map(|a| linalg::identity(a.size())).collect();
        let n = self.total_dim();
        let mut out = Mat::zeros(n, n);
        for i in 0..self.dim() {
            let factors: Vec<&Mat<f64>> = (0..self.dim())
                .map(|k| if k == i { &per_axis[k] } else { &eyes[k] })
                .collect();
            out += kron_all(&factors);
        }
        out
    }
}

fn kron_all(factors: &[&Mat<f64>]) -> Mat<f64> {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = linalg::kron(&acc, f);
    }
    acc
}

/// Galerkin matrix of multiplication by `poly`. Per-axis powers are built at
/// `Nᵢ + deg P` and cropped, so the result is the exact projection.
pub fn multiplication_matrix(poly: &HomogeneousPolynomial, basis: &TensorBasis) -> Result<Mat<f64>> {
    if poly.dim() != basis.dim() {
        return Err(LabError::Dimension { expected: basis.dim(), got: poly.dim() });
    }
    let margin = poly.degree() as usize;
    let mut cache: HashMap<(usize, u32), Mat<f64>> = HashMap::new();
    let n = basis.total_dim();
    let mut out = Mat::zeros(n, n);
    for (exps, coeff) in poly.terms() {
        for (axis, &k) in exps.iter().enumerate() {
            cache
                .entry((axis, k))
                .or_insert_with(|| basis.axes()[axis].monomial_matrix(k, margin));
        }
        let factors: Vec<&Mat<f64>> = exps.iter().enumerate().map(|(axis, &k)| &cache[&(axis, k)]).collect();
        let term = kron_all(&factors);
        out += linalg::scaled(&term, coeff);
    }
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// Normalized Hermite functions `h₀(s) … h_{count−1}(s)` by the three-term
/// recurrence, which stays bounded for all `s`.
pub fn hermite_functions(s: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let h0 = PI.powf(-0.25) * (-0.5 * s * s).exp();
    out.push(h0);
    if count == 1 {
        return out;
    }
    out.push(2f64.sqrt() * s * h0);
    for j in 1..count - 1 {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * s * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Gauss–Hermite rule for the weight `e^{−t²}` via Golub–Welsch. Nodes are the
/// eigenvalues of the Jacobi matrix; weights use the Christoffel formula
/// `wᵢ = e^{−tᵢ²} / Σⱼ hⱼ(tᵢ)²`, which keeps tiny weights accurate.
pub fn gauss_hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nodes, scaled) = gauss_hermite_scaled(order)?;
    let weights = nodes.iter().zip(&scaled).map(|(t, w)| w * (-t * t).exp()).collect();
    Ok((nodes, weights))
}

/// Nodes together with `wᵢ e^{tᵢ²}`, for integrating functions that already
/// carry their own Gaussian decay.
pub fn gauss_hermite_scaled(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(LabError::input("quadrature order must be at least 1"));
    }
    let jacobi = position_matrix(order, 1.0);
    let nodes: Vec<f64> = jacobi
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::numeric(format!("Golub–Welsch eigensolve failed: {e:?}")))?;
    let scaled = nodes
        .iter()
        .map(|&t| 1.0 / hermite_functions(t, order).iter().map(|h| h * h).sum::<f64>())
        .collect();
    Ok((nodes, scaled))
}

/// Point values `Σ_J c_J Φ_J(x)` of a coefficient vector.
pub fn synthesize(coeffs: &[f64], basis: &TensorBasis, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    if coeffs.len() != basis.total_dim() {
        return Err(LabError::Dimension { expected: basis.total_dim(), got: coeffs.len() });
    }
    grid.iter()
        .map(|point| {
            if point.len() != basis.dim() {
                return Err(LabError::Dimension { expected: basis.dim(), got: point.len() });
            }
            let per_axis: Vec<Vec<f64>> = basis
                .axes()
                .iter()
                .zip(point)
                .map(|(a, &x)| {
                    let s = a.alpha().sqrt();
                    hermite_functions(a.alpha() * x, a.size()).into_iter().map(|h| s * h).collect()
                })
                .collect();
            Ok((0..basis.total_dim())
                .map(|flat| {
                    let multi = basis.multi_index(flat);
                    coeffs[flat]
                        * multi.iter().enumerate().map(|(ax, &j)| per_axis[ax][j]).product::<f64>()
                })
                .sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crop, max_abs_diff};

    /// Hermite-polynomial roots by Newton iteration on the orthonormal
    /// recurrence, independent of any eigensolver.
    fn newton_hermite_nodes(n: usize) -> Vec<f64> {
        let pim4 = PI.powf(-0.25);
        let mut roots = vec![0.0; n];
        let mut z = 0.0;
        for i in 0..(n + 1) / 2 {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * roots[0],
                3 => 1.91 * z - 0.91 * roots[1],
                _ => 2.0 * z - roots[i - 2],
            };
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                let pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            roots[i] = z;
            roots[n - 1 - i] = -z;
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        roots
    }

    #[test]
    fn position_matrix_small_cases() {
        let x = position_matrix(2, 1.0);
        let r = 0.5f64.sqrt();
        assert_eq!(x[(0, 0)], 0.0);
        assert!((x[(0, 1)] - r).abs() < 1e-16 && (x[(1, 0)] - r).abs() < 1e-16);
        let x = position_matrix(3, 2.0);
        assert!((x[(0, 1)] - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-16);
    }

    #[test]
    fn position_eigenvalues_are_gauss_hermite_nodes() {
        let x = position_matrix(64, 1.0);
        let eig = x.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let oracle = newton_hermite_nodes(64);
        for (a, b) in eig.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn laplacian_ground_entry() {
        let k = laplacian_matrix(1, 1.0);
        assert_eq!(k[(0, 0)], 0.5);
    }

    #[test]
    fn harmonic_oscillator_is_diagonal() {
        let n = 30;
        let k = laplacian_matrix(n, 1.0);
        let t2 = crop(&{
            let xb = position_matrix(n + 2, 1.0);
            &xb * &xb
        }, n);
        let h = &k + &t2;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 2.0 * i as f64 + 1.0 } else { 0.0 };
                assert!((h[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_row_matches_quadrature_of_derivatives() {
        let n = 40;
        let k = laplacian_matrix(n, 1.0);
        // fourth-order central differences and a fine trapezoid rule
        let h = 1e-3;
        let d = |t: f64| -> Vec<f64> {
            let f = |s: f64| hermite_functions(s, n);
            let (a, b, c, e) = (f(t - 2.0 * h), f(t - h), f(t + h), f(t + 2.0 * h));
            (0..n).map(|j| (a[j] - 8.0 * b[j] + 8.0 * c[j] - e[j]) / (12.0 * h)).collect()
        };
        let step = 0.005;
        let mut row = vec![0.0; n];
        let mut t = -14.0;
        while t <= 14.0 {
            let dv = d(t);
            for j in 0..n {
                row[j] += step * dv[5] * dv[j];
            }
            t += step;
        }
        for j in 0..n {
            assert!((row[j] - k[(5, j)]).abs() < 1e-8, "j={j}: {} vs {}", row[j], k[(5, j)]);
        }
    }

    #[test]
    fn multiplication_by_t_is_position() {
        let b = TensorBasis::uniform(1, 7, 1.3).unwrap();
        let p = HomogeneousPolynomial::monomial(1).unwrap();
        let m = multiplication_matrix(&p, &b).unwrap();
        assert!(max_abs_diff(&m, &position_matrix(7, 1.3)) < 1e-15);
    }

    #[test]
    fn enlarged_then_cropped_differs_from_cropped_square() {
        let b = TensorBasis::uniform(1, 6, 1.0).unwrap();
        let p = HomogeneousPolynomial::monomial(2).unwrap();
        let m = multiplication_matrix(&p, &b).unwrap();
        let xb = position_matrix(8, 1.0);
        let direct = crop(&(&xb * &xb), 6);
        assert!(max_abs_diff(&m, &direct) < 1e-14);
        let xs = position_matrix(6, 1.0);
        let naive = &xs * &xs;
        assert!((m[(5, 5)] - naive[(5, 5)]).abs() > 0.1);
    }

    #[test]
    fn separable_tensor_multiplication() {
        let b = TensorBasis::uniform(2, 5, 0.8).unwrap();
        let p = HomogeneousPolynomial::radial(2, 1).unwrap();
        let m = multiplication_matrix(&p, &b).unwrap();
        let t2 = monomial_matrix(5, 0.8, 2, 2);
        let eye = linalg::identity(5);
        let want = &linalg::kron(&t2, &eye) + &linalg::kron(&eye, &t2);
        assert!(max_abs_diff(&m, &want) < 1e-14);
    }

    #[test]
    fn multiplication_rejects_dimension_mismatch() {
        let b = TensorBasis::uniform(2, 5, 1.0).unwrap();
        let p = HomogeneousPolynomial::monomial(2).unwrap();
        assert!(matches!(multiplication_matrix(&p, &b), Err(LabError::Dimension { .. })));
    }

    #[test]
    fn crop_consistency_across_sizes() {
        let p = HomogeneousPolynomial::remark63(1).unwrap();
        let small = TensorBasis::uniform(2, 6, 1.1).unwrap();
        let large = TensorBasis::uniform(2, 9, 1.1).unwrap();
        let ms = multiplication_matrix(&p, &small).unwrap();
        let ml = multiplication_matrix(&p, &large).unwrap();
        for i in 0..36 {
            for j in 0..36 {
                let (mi, mj) = (small.multi_index(i), small.multi_index(j));
                let (li, lj) = (large.flat_index(&mi), large.flat_index(&mj));
                assert!((ms[(i, j)] - ml[(li, lj)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_index_roundtrip_and_cap() {
        let b = TensorBasis::new(vec![
            HermiteBasis1D::new(4, 1.0).unwrap(),
            HermiteBasis1D::new(5, 1.0).unwrap(),
            HermiteBasis1D::new(6, 1.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(b.total_dim(), 120);
        for f in 0..120 {
            assert_eq!(b.flat_index(&b.multi_index(f)), f);
        }
        assert!(TensorBasis::uniform(3, 28, 1.0).is_err());
        assert!(HermiteBasis1D::new(3, 1.0).is_err());
        assert!(HermiteBasis1D::new(8, 0.0).is_err());
    }

    #[test]
    fn gauss_hermite_low_orders() {
        let (n, w) = gauss_hermite_rule(1).unwrap();
        assert!(n[0].abs() < 1e-15 && (w[0] - PI.sqrt()).abs() < 1e-14);
        // two-point moment conditions: w₁+w₂ = √π, w₁t₁+w₂t₂ = 0, w₁t₁²+w₂t₂² = √π/2
        let (n, w) = gauss_hermite_rule(2).unwrap();
        assert!((n[0] + 0.5f64.sqrt()).abs() < 1e-14 && (n[1] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((w[0] - PI.sqrt() / 2.0).abs() < 1e-14 && (w[1] - PI.sqrt() / 2.0).abs() < 1e-14);
        let (n, w) = gauss_hermite_rule(20).unwrap();
        let m2: f64 = n.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
        assert!(gauss_hermite_rule(0).is_err());
    }

    #[test]
    fn synthesize_ground_state() {
        let b = TensorBasis::uniform(1, 6, 1.0).unwrap();
        let mut c = vec![0.0; 6];
        c[0] = 1.0;
        let v = synthesize(&c, &b, &[vec![0.0]]).unwrap();
        assert!((v[0] - PI.powf(-0.25)).abs() < 1e-15);
        c[0] = 0.0;
        c[1] = 1.0;
        assert_eq!(synthesize(&c, &b, &[vec![0.0]]).unwrap()[0], 0.0);
        assert!(synthesize(&c, &b, &[vec![0.0, 1.0]]).is_err());
        assert!(synthesize(&c[..3], &b, &[vec![0.0]]).is_err());
    }

    #[test]
    fn parseval_on_a_gauss_hermite_grid() {
        let n = 48;
        let alpha = 1.7;
        let b = TensorBasis::uniform(1, n, alpha).unwrap();
        let mut state = 12345u64;
        let coeffs: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let (nodes, scaled) = gauss_hermite_scaled(2 * n).unwrap();
        let grid: Vec<Vec<f64>> = nodes.iter().map(|s| vec![s / alpha]).collect();
        let f = synthesize(&coeffs, &b, &grid).unwrap();
        let quad: f64 = f.iter().zip(&scaled).map(|(v, w)| w * v * v).sum::<f64>() / alpha;
        let exact: f64 = coeffs.iter().map(|c| c * c).sum();
        assert!((quad - exact).abs() < 1e-8, "{quad} vs {exact}");
    }

    #[test]
    fn recurrence_stays_finite_far_out() {
        for t in [-10.0, -3.3, 0.0, 7.5, 10.0] {
            assert!(hermite_functions(t, 512).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn power_rule() {
        assert_eq!(power_rule_alpha(400, 1), 1.0);
        assert!((power_rule_alpha(400, 2) - 400f64.powf(1.0 / 6.0)).abs() < 1e-12);
    }
}
