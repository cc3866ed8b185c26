//! Galerkin operators `L = −Δ + P²`, `A = L⁻¹`, `A^{1/2}`, `B = A^{1/2} P A^{1/2}`,
//! the weighted pair of the `t^ℓ`-perturbed problem and the γ-scaled family.
//!
//! Everything is "Galerkin-then-invert": `A` is the inverse of the truncated `L`,
//! so finite-dimensional trace identities hold exactly up to roundoff.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::basis::{self, HermiteBasis1D, TensorBasis};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::polynomial::HomogeneousPolynomial;

/// A dense real operator matrix together with the basis it acts on.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    basis: TensorBasis,
    matrix: Mat<f64>,
    symmetric: bool,
}

impl SpectralOperator {
    /// Wraps `matrix`; symmetric operators are explicitly symmetrized.
    pub fn new(basis: TensorBasis, mut matrix: Mat<f64>, symmetric: bool) -> Result<Self> {
        let n = basis.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(LabError::Dimension { expected: n, got: matrix.nrows() });
        }
        if symmetric {
            linalg::symmetrize(&mut matrix);
        }
        Ok(Self { basis, matrix, symmetric })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Eigendecomposition `QΛQᵀ` of a symmetric positive definite operator.
#[derive(Clone, Debug)]
pub struct SpdFactorization {
    basis: TensorBasis,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
}

/// Orthogonality and reconstruction errors of a factorization.
#[derive(Clone, Copy, Debug)]
pub struct FactorizationQuality {
    pub orthogonality: f64,
    pub relative_reconstruction: f64,
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LabError::numeric(format!("symmetric eigensolver did not converge at size {}: {e:?}", m.nrows())))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

pub fn symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::numeric(format!("symmetric eigensolver did not converge at size {}: {e:?}", m.nrows())))
}

/// Full eigendecomposition of a symmetric operator; fails on nonpositive eigenvalues.
pub fn factorize(op: &SpectralOperator) -> Result<SpdFactorization> {
    if !op.is_symmetric() {
        return Err(LabError::input("factorize needs an operator flagged symmetric"));
    }
    let (eigenvalues, eigenvectors) = symmetric_eigen(op.matrix())?;
    if let Some(&lo) = eigenvalues.first() {
        if !(lo > 0.0) {
            return Err(LabError::Domain(format!("operator is not positive definite: lowest eigenvalue {lo:e}")));
        }
    }
    Ok(SpdFactorization { basis: op.basis().clone(), eigenvalues, eigenvectors })
}

impl SpdFactorization {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigenvectors
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    /// `QΛˢQᵀ`.
    pub fn power(&self, s: f64) -> SpectralOperator {
        let d: Vec<f64> = self.eigenvalues.iter().map(|l| l.powf(s)).collect();
        let m = linalg::spectral_synthesis(&self.eigenvectors, &d);
        SpectralOperator::new(self.basis.clone(), m, true).expect("factorization dimensions are consistent")
    }

    /// `Σ λᵢˢ`, the trace of the s-th power.
    pub fn trace_power(&self, s: f64) -> f64 {
        self.eigenvalues.iter().map(|l| l.powf(s)).sum()
    }

    pub fn quality(&self, original: &Mat<f64>) -> FactorizationQuality {
        let q = &self.eigenvectors;
        let qtq = q.transpose() * q;
        let orthogonality = linalg::max_abs_diff(&qtq, &linalg::identity(q.ncols()));
        let rebuilt = linalg::spectral_synthesis(q, &self.eigenvalues);
        FactorizationQuality {
            orthogonality,
            relative_reconstruction: linalg::frobenius_diff(&rebuilt, original) / linalg::frobenius(original),
        }
    }
}

/// `L = −Δ + P(x)²` on `basis`, verified positive definite.
pub fn assemble_l(poly: &HomogeneousPolynomial, basis: &TensorBasis) -> Result<(SpectralOperator, SpdFactorization)> {
    let potential = basis::multiplication_matrix(&poly.square(), basis)?;
    let l = &basis.laplacian() + &potential;
    let op = SpectralOperator::new(basis.clone(), l, true)?;
    let fact = factorize(&op).map_err(|e| match e {
        LabError::Domain(msg) => LabError::Discretization(format!("{msg}; try a larger size or a different scale")),
        other => other,
    })?;
    Ok((op, fact))
}

/// `B = A^{1/2} P A^{1/2}` with `A^{1/2}` taken from the factorization of `L`.
pub fn assemble_b(l_fact: &SpdFactorization, p: &SpectralOperator) -> Result<SpectralOperator> {
    let a_half = l_fact.power(-0.5);
    if a_half.dim() != p.dim() {
        return Err(LabError::Dimension { expected: a_half.dim(), got: p.dim() });
    }
    let b = sandwich(a_half.matrix(), p.matrix());
    SpectralOperator::new(l_fact.basis().clone(), b, true)
}

/// `s · m · s`, symmetrized.
pub(crate) fn sandwich(s: &Mat<f64>, m: &Mat<f64>) -> Mat<f64> {
    let mut out = &(s * m) * s;
    linalg::symmetrize(&mut out);
    out
}

/// The weighted pair `A_w = L^{-1/2} t^{2ℓ} L^{-1/2}`, `B_w = L^{-1/2} t^{m+ℓ} L^{-1/2}`
/// with `L = D_t² + t^{2m}`.
pub fn assemble_weighted(m: u32, ell: u32, axis: HermiteBasis1D) -> Result<(SpectralOperator, SpectralOperator)> {
    if ell >= m {
        return Err(LabError::input(format!("weight exponent must satisfy 0 ≤ ℓ < m, got ℓ={ell}, m={m}")));
    }
    let basis = TensorBasis::single(axis);
    let (_, fact) = assemble_l(&HomogeneousPolynomial::monomial(m)?, &basis)?;
    let l_inv_half = fact.power(-0.5);
    let (a_w, b_w) = weighted_pair(&axis, m, ell, l_inv_half.matrix());
    Ok((
        SpectralOperator::new(basis.clone(), a_w, true)?,
        SpectralOperator::new(basis, b_w, true)?,
    ))
}

pub(crate) fn weighted_pair(axis: &HermiteBasis1D, m: u32, ell: u32, l_inv_half: &Mat<f64>) -> (Mat<f64>, Mat<f64>) {
    let t_2l = axis.monomial_matrix(2 * ell, 2 * ell as usize);
    let t_ml = axis.monomial_matrix(m + ell, (m + ell) as usize);
    (sandwich(l_inv_half, &t_2l), sandwich(l_inv_half, &t_ml))
}

/// How `A_γ = (−Δ + γP²)⁻¹` is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Eigenvectors of `A`, eigenvalues multiplied by `γ^{−1/(m+1)}`.
    Isospectral,
    /// `(−Δ + γP²)⁻¹` assembled on the unchanged basis.
    FixedBasis,
}

impl std::str::FromStr for ScalingMode {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isospectral" => Ok(ScalingMode::Isospectral),
            "fixed_basis" | "fixed-basis" => Ok(ScalingMode::FixedBasis),
            _ => Err(LabError::input(format!("unknown scaling mode '{s}'"))),
        }
    }
}

/// `A_γ` from the parts of a discretized problem.
pub fn scale_gamma(
    laplacian: &Mat<f64>,
    potential: &Mat<f64>,
    l_fact: &SpdFactorization,
    degree: u32,
    gamma: f64,
    mode: ScalingMode,
) -> Result<SpectralOperator> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(LabError::input(format!("γ must be positive, got {gamma}")));
    }
    match mode {
        ScalingMode::Isospectral => {
            let factor = gamma.powf(-1.0 / (degree as f64 + 1.0));
            let d: Vec<f64> = l_fact.eigenvalues().iter().map(|l| factor / l).collect();
            let m = linalg::spectral_synthesis(l_fact.eigenvectors(), &d);
            SpectralOperator::new(l_fact.basis().clone(), m, true)
        }
        ScalingMode::FixedBasis => {
            let l_gamma = linalg::linear_combination(&[(1.0, laplacian), (gamma, potential)]);
            let op = SpectralOperator::new(l_fact.basis().clone(), l_gamma, true)?;
            Ok(factorize(&op)?.power(-1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize, seed: u64) -> Mat<f64> {
        let mut s = seed;
        Mat::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn op(m: Mat<f64>) -> SpectralOperator {
        let n = m.nrows();
        let b = TensorBasis::new(vec![HermiteBasis1D::new(n, 1.0).unwrap()]).unwrap();
        SpectralOperator::new(b, m, true).unwrap()
    }

    #[test]
    fn harmonic_l_is_odd_integers() {
        let b = TensorBasis::uniform(1, 12, 1.0).unwrap();
        let (l, fact) = assemble_l(&HomogeneousPolynomial::monomial(1).unwrap(), &b).unwrap();
        for i in 0..12 {
            assert!((l.matrix()[(i, i)] - (2 * i + 1) as f64).abs() < 1e-12);
            assert!((fact.eigenvalues()[i] - (2 * i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn factorize_identity_and_diagonal() {
        let f = factorize(&op(linalg::identity(5))).unwrap();
        assert!(f.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let d = Mat::from_fn(4, 4, |i, j| if i == j { (2 * i + 1) as f64 } else { 0.0 });
        let f = factorize(&op(d)).unwrap();
        for (l, want) in f.eigenvalues().iter().zip([1.0, 3.0, 5.0, 7.0]) {
            assert!((l - want).abs() < 1e-14);
        }
        let q = f.eigenvectors();
        for i in 0..4 {
            assert!((q[(i, i)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn factorize_random_spd() {
        let n = 50;
        let (_, q) = symmetric_eigen(&{
            let r = pseudo_random(n, 7);
            &r + r.transpose()
        })
        .unwrap();
        let lam: Vec<f64> = (0..n).map(|i| 0.5 + i as f64).collect();
        let m = linalg::spectral_synthesis(&q, &lam);
        let f = factorize(&op(m.clone())).unwrap();
        let qual = f.quality(&m);
        assert!(qual.relative_reconstruction < 1e-10);
        assert!(qual.orthogonality < 1e-10);
    }

    #[test]
    fn factorize_rejects_indefinite_and_unflagged() {
        let m = Mat::from_fn(4, 4, |i, j| if i == j { [1.0, -1.0, 2.0, 3.0][i] } else { 0.0 });
        assert!(matches!(factorize(&op(m.clone())), Err(LabError::Domain(_))));
        let b = TensorBasis::new(vec![HermiteBasis1D::new(4, 1.0).unwrap()]).unwrap();
        let raw = SpectralOperator::new(b, linalg::identity(4), false).unwrap();
        assert!(factorize(&raw).is_err());
    }

    #[test]
    fn powers() {
        let b = TensorBasis::uniform(1, 40, 1.2).unwrap();
        let (l, fact) = assemble_l(&HomogeneousPolynomial::monomial(2).unwrap(), &b).unwrap();
        let zero = fact.power(0.0);
        assert!(linalg::max_abs_diff(zero.matrix(), &linalg::identity(40)) < 1e-12);
        let a = fact.power(-1.0);
        let back = factorize(&a).unwrap().power(-1.0);
        assert!(linalg::frobenius_diff(back.matrix(), l.matrix()) / linalg::frobenius(l.matrix()) < 1e-8);
        let h = fact.power(-0.5);
        let hh = h.matrix() * h.matrix();
        assert!(linalg::frobenius_diff(&hh, a.matrix()) / linalg::frobenius(a.matrix()) < 1e-9);
        for (s, t) in [(-1.0, 0.5), (-0.5, -0.5), (0.5, 0.5), (-1.0, -0.5)] {
            let lhs = fact.power(s).matrix() * fact.power(t).matrix();
            let rhs = fact.power(s + t);
            let rel = linalg::frobenius_diff(&lhs, rhs.matrix()) / linalg::frobenius(rhs.matrix());
            assert!(rel < 1e-9, "s={s} t={t}: {rel}");
        }
    }

    #[test]
    fn b_with_identity_multiplier_is_a() {
        let b = TensorBasis::uniform(1, 20, 1.0).unwrap();
        let (_, fact) = assemble_l(&HomogeneousPolynomial::monomial(2).unwrap(), &b).unwrap();
        let id = SpectralOperator::new(b, linalg::identity(20), true).unwrap();
        let bb = assemble_b(&fact, &id).unwrap();
        assert!(linalg::max_abs_diff(bb.matrix(), fact.power(-1.0).matrix()) < 1e-14);
        assert!(bb.is_symmetric());
    }

    #[test]
    fn weighted_with_zero_weight_reproduces_a_and_b() {
        let axis = HermiteBasis1D::new(60, 1.4).unwrap();
        let (a_w, b_w) = assemble_weighted(3, 0, axis).unwrap();
        let basis = TensorBasis::single(axis);
        let p = HomogeneousPolynomial::monomial(3).unwrap();
        let (_, fact) = assemble_l(&p, &basis).unwrap();
        let a = fact.power(-1.0);
        let pm = SpectralOperator::new(basis.clone(), basis::multiplication_matrix(&p, &basis).unwrap(), true).unwrap();
        let b = assemble_b(&fact, &pm).unwrap();
        assert!(linalg::max_abs_diff(a_w.matrix(), a.matrix()) < 1e-10);
        assert!(linalg::max_abs_diff(b_w.matrix(), b.matrix()) < 1e-10);
        assert!(assemble_weighted(3, 3, axis).is_err());
    }

    #[test]
    fn isospectral_scaling_is_exact() {
        let b = TensorBasis::uniform(1, 30, 1.0).unwrap();
        let p = HomogeneousPolynomial::monomial(2).unwrap();
        let (_, fact) = assemble_l(&p, &b).unwrap();
        let lap = b.laplacian();
        let pot = basis::multiplication_matrix(&p.square(), &b).unwrap();
        let a = fact.power(-1.0);
        for mode in [ScalingMode::Isospectral, ScalingMode::FixedBasis] {
            let a1 = scale_gamma(&lap, &pot, &fact, 2, 1.0, mode).unwrap();
            assert!(linalg::max_abs_diff(a1.matrix(), a.matrix()) < 1e-12);
        }
        let a2 = scale_gamma(&lap, &pot, &fact, 2, 8.0, ScalingMode::Isospectral).unwrap();
        let want = linalg::trace(a.matrix()) * 0.5;
        assert!((linalg::trace(a2.matrix()) - want).abs() < 1e-13 * want);
        assert!(scale_gamma(&lap, &pot, &fact, 2, -1.0, ScalingMode::FixedBasis).is_err());
    }
}
