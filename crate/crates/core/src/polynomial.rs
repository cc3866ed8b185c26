//! Homogeneous polynomials `P` on ℝⁿ (n ≤ 3) with exact multi-index storage.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Margin below which a polynomial is not considered elliptic.
pub const ELLIPTICITY_THRESHOLD: f64 = 1e-8;

/// One `coeff · x^exponents` entry of the literal polynomial syntax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermLiteral {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Sign of `P` on the sampled unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereSign {
    Positive,
    Negative,
    /// Takes both signs or vanishes somewhere on the sample.
    Mixed,
}

/// Serialized form `{ dim, terms: [{exponents, coeff}] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialLiteral {
    pub dim: usize,
    pub terms: Vec<TermLiteral>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolynomialLiteral", into = "PolynomialLiteral")]
pub struct HomogeneousPolynomial {
    dim: usize,
    degree: u32,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl TryFrom<PolynomialLiteral> for HomogeneousPolynomial {
    type Error = LabError;

    fn try_from(lit: PolynomialLiteral) -> Result<Self> {
        Self::from_literal(lit.dim, &lit.terms)
    }
}

impl From<HomogeneousPolynomial> for PolynomialLiteral {
    fn from(p: HomogeneousPolynomial) -> Self {
        PolynomialLiteral { dim: p.dim, terms: p.to_literal() }
    }
}

impl HomogeneousPolynomial {
    /// Builds a polynomial from `(exponents, coeff)` pairs. Repeated exponents are
    /// summed and vanishing coefficients dropped.
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(LabError::input(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (exps, c) in terms {
            if exps.len() != dim {
                return Err(LabError::Dimension { expected: dim, got: exps.len() });
            }
            if !c.is_finite() {
                return Err(LabError::input("polynomial coefficients must be finite"));
            }
            *map.entry(exps).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        let mut degrees = map.keys().map(|e| e.iter().sum::<u32>());
        let degree = degrees
            .next()
            .ok_or_else(|| LabError::input("polynomial has no nonzero terms"))?;
        if degrees.any(|d| d != degree) {
            return Err(LabError::input("terms have different total degrees; polynomial is not homogeneous"));
        }
        if degree == 0 {
            return Err(LabError::input("degree must be positive"));
        }
        Ok(Self { dim, degree, terms: map })
    }

    pub fn from_literal(dim: usize, terms: &[TermLiteral]) -> Result<Self> {
        Self::new(dim, terms.iter().map(|t| (t.exponents.clone(), t.coeff)))
    }

    /// `t^m` on ℝ.
    pub fn monomial(m: u32) -> Result<Self> {
        Self::new(1, [(vec![m], 1.0)])
    }

    /// `(x₁² + … + xₙ²)^k`.
    pub fn radial(dim: usize, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(LabError::input("radial power must be positive"));
        }
        let base = Self::new(
            dim,
            (0..dim).map(|i| {
                let mut e = vec![0; dim];
                e[i] = 2;
                (e, 1.0)
            }),
        )?;
        let mut out = base.clone();
        for _ in 1..k {
            out = out.product(&base);
        }
        Ok(out)
    }

    /// `x₁x₂(x₁² + x₂²)^k`, elliptic nowhere on the circle's axes.
    pub fn remark63(k: u32) -> Result<Self> {
        let xy = Self::new(2, [(vec![1, 1], 1.0)])?;
        if k == 0 {
            return Ok(xy);
        }
        Ok(xy.product(&Self::radial(2, k)?))
    }

    /// Parses `monomial:m`, `radial:n:k` or `remark63:k`.
    pub fn from_preset(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| -> Result<u32> {
            s.parse::<u32>()
                .map_err(|_| LabError::input(format!("bad integer '{s}' in polynomial preset '{spec}'")))
        };
        match parts.as_slice() {
            ["monomial", m] => Self::monomial(num(m)?),
            ["radial", n, k] => Self::radial(num(n)? as usize, num(k)?),
            ["remark63", k] => Self::remark63(num(k)?),
            _ => Err(LabError::input(format!("unknown polynomial preset '{spec}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn to_literal(&self) -> Vec<TermLiteral> {
        self.terms()
            .map(|(e, c)| TermLiteral { exponents: e.to_vec(), coeff: c })
            .collect()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(LabError::Dimension { expected: self.dim, got: point.len() });
        }
        Ok(self.eval_unchecked(point))
    }

    fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(point)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Exact product; coefficients are accumulated as rationals and rounded once.
    pub fn product(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "product of polynomials in different dimensions");
        let mut acc: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            let ra = exact(*ca);
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let term = &ra * exact(*cb);
                let slot = acc.entry(e).or_insert_with(BigRational::zero);
                *slot += term;
            }
        }
        let terms: BTreeMap<Vec<u32>, f64> = acc
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(e, c)| (e, c.to_f64().expect("finite rational")))
            .collect();
        Self { dim: self.dim, degree: self.degree + other.degree, terms }
    }

    pub fn square(&self) -> Self {
        self.product(self)
    }

    /// Deterministic quasi-uniform sample of the unit sphere Sⁿ⁻¹.
    pub fn sphere_sample(dim: usize, samples: usize) -> Vec<Vec<f64>> {
        match dim {
            1 => vec![vec![-1.0], vec![1.0]],
            2 => (0..samples)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / samples as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect(),
            _ => {
                // Fibonacci lattice
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..samples)
                    .map(|k| {
                        let z = 1.0 - (2.0 * k as f64 + 1.0) / samples as f64;
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        let phi = golden * k as f64;
                        vec![r * phi.cos(), r * phi.sin(), z]
                    })
                    .collect()
            }
        }
    }

    /// `min |P(σ)|` over the sphere sample.
    pub fn ellipticity_margin(&self, samples: usize) -> Result<f64> {
        if samples < 8 {
            return Err(LabError::input("ellipticity sampling needs at least 8 points"));
        }
        Ok(Self::sphere_sample(self.dim, samples)
            .iter()
            .map(|s| self.eval_unchecked(s).abs())
            .fold(f64::INFINITY, f64::min))
    }

    pub fn is_elliptic(&self, samples: usize) -> Result<bool> {
        Ok(self.ellipticity_margin(samples)? > ELLIPTICITY_THRESHOLD)
    }

    pub fn sphere_sign(&self, samples: usize) -> Result<SphereSign> {
        if samples < 8 {
            return Err(LabError::input("sign sampling needs at least 8 points"));
        }
        let values: Vec<f64> = Self::sphere_sample(self.dim, samples)
            .iter()
            .map(|s| self.eval_unchecked(s))
            .collect();
        if values.iter().all(|&v| v > ELLIPTICITY_THRESHOLD) {
            Ok(SphereSign::Positive)
        } else if values.iter().all(|&v| v < -ELLIPTICITY_THRESHOLD) {
            Ok(SphereSign::Negative)
        } else {
            Ok(SphereSign::Mixed)
        }
    }

    /// True when `P(x)` is unchanged by flipping the sign of every axis in `axes`.
    pub fn is_even_under_flip(&self, axes: &[usize]) -> bool {
        self.terms
            .keys()
            .all(|e| axes.iter().map(|&a| e[a]).sum::<u32>() % 2 == 0)
    }
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monomial_value() {
        let p = HomogeneousPolynomial::monomial(3).unwrap();
        assert_eq!(p.evaluate(&[2.0]).unwrap(), 8.0);
    }

    #[test]
    fn radial_value_on_axis() {
        let p = HomogeneousPolynomial::radial(2, 2).unwrap();
        assert_eq!(p.evaluate(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p.degree(), 4);
    }

    #[test]
    fn remark63_value_at_one_one() {
        let p = HomogeneousPolynomial::remark63(2).unwrap();
        assert_eq!(p.degree(), 6);
        assert_eq!(p.evaluate(&[1.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn evaluate_rejects_wrong_length() {
        let p = HomogeneousPolynomial::radial(2, 1).unwrap();
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(LabError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn construction_rejects_inhomogeneous_and_empty() {
        assert!(HomogeneousPolynomial::new(1, [(vec![2], 1.0), (vec![3], 1.0)]).is_err());
        assert!(HomogeneousPolynomial::new(1, [(vec![2], 0.0)]).is_err());
        assert!(HomogeneousPolynomial::new(4, [(vec![1, 1, 1, 1], 1.0)]).is_err());
    }

    #[test]
    fn margins() {
        let t4 = HomogeneousPolynomial::monomial(4).unwrap();
        assert_eq!(t4.ellipticity_margin(8).unwrap(), 1.0);
        let r3 = HomogeneousPolynomial::radial(2, 3).unwrap();
        assert!((r3.ellipticity_margin(256).unwrap() - 1.0).abs() < 1e-14);
        let bad = HomogeneousPolynomial::remark63(2).unwrap();
        let m = bad.ellipticity_margin(256).unwrap();
        assert!(m <= 0.25);
        assert!(!bad.is_elliptic(256).unwrap());
        assert!(HomogeneousPolynomial::monomial(2).unwrap().ellipticity_margin(4).is_err());
    }

    #[test]
    fn margin_of_non_elliptic_shrinks_with_refinement() {
        // grid values of |sinθ cosθ| hit zero at θ = 0 for every 2^k grid
        let p = HomogeneousPolynomial::new(2, [(vec![1, 1], 1.0)]).unwrap();
        let coarse = p.ellipticity_margin(8).unwrap();
        let fine = p.ellipticity_margin(1024).unwrap();
        assert!(fine <= coarse);
        assert!(fine < 1e-12);
    }

    #[test]
    fn three_dimensional_sample_is_on_the_sphere() {
        for s in HomogeneousPolynomial::sphere_sample(3, 100) {
            let r2: f64 = s.iter().map(|x| x * x).sum();
            assert!((r2 - 1.0).abs() < 1e-12);
        }
        let p = HomogeneousPolynomial::radial(3, 3).unwrap();
        assert!((p.ellipticity_margin(200).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squares() {
        let t3 = HomogeneousPolynomial::monomial(3).unwrap();
        assert_eq!(t3.square(), HomogeneousPolynomial::monomial(6).unwrap());
        let r = HomogeneousPolynomial::radial(2, 1).unwrap().square();
        let expect = HomogeneousPolynomial::new(
            2,
            [(vec![4, 0], 1.0), (vec![2, 2], 2.0), (vec![0, 4], 1.0)],
        )
        .unwrap();
        assert_eq!(r, expect);
        let single = HomogeneousPolynomial::new(2, [(vec![1, 2], -3.0)]).unwrap();
        assert_eq!(
            single.square(),
            HomogeneousPolynomial::new(2, [(vec![2, 4], 9.0)]).unwrap()
        );
    }

    #[test]
    fn signs() {
        let t3 = HomogeneousPolynomial::monomial(3).unwrap();
        assert_eq!(t3.sphere_sign(8).unwrap(), SphereSign::Mixed);
        let neg = HomogeneousPolynomial::new(1, [(vec![4], -1.0)]).unwrap();
        assert_eq!(neg.sphere_sign(8).unwrap(), SphereSign::Negative);
        let r = HomogeneousPolynomial::radial(2, 2).unwrap();
        assert_eq!(r.sphere_sign(64).unwrap(), SphereSign::Positive);
    }

    #[test]
    fn flip_symmetry() {
        let r = HomogeneousPolynomial::remark63(2).unwrap();
        assert!(!r.is_even_under_flip(&[0]));
        assert!(r.is_even_under_flip(&[0, 1]));
        assert!(HomogeneousPolynomial::monomial(4).unwrap().is_even_under_flip(&[0]));
        assert!(!HomogeneousPolynomial::monomial(3).unwrap().is_even_under_flip(&[0]));
    }

    #[test]
    fn presets_parse() {
        assert_eq!(HomogeneousPolynomial::from_preset("monomial:5").unwrap().degree(), 5);
        assert_eq!(HomogeneousPolynomial::from_preset("radial:3:2").unwrap().dim(), 3);
        assert_eq!(HomogeneousPolynomial::from_preset("remark63:1").unwrap().degree(), 4);
        assert!(HomogeneousPolynomial::from_preset("cubic").is_err());
        assert!(HomogeneousPolynomial::from_preset("monomial:x").is_err());
    }

    fn small_poly() -> impl Strategy<Value = HomogeneousPolynomial> {
        (1usize..=3, 1u32..=5).prop_flat_map(|(dim, deg)| {
            proptest::collection::vec((proptest::collection::vec(0u32..=deg, dim), -8i32..=8), 1..5)
                .prop_map(move |raw| {
                    let mut terms: Vec<(Vec<u32>, f64)> = raw
                        .into_iter()
                        .map(|(mut e, c)| {
                            // force the exponents to sum to `deg`
                            let s: u32 = e.iter().sum();
                            if s > deg {
                                e = vec![0; dim];
                            }
                            let s: u32 = e.iter().sum();
                            e[0] += deg - s;
                            (e, c as f64)
                        })
                        .collect();
                    terms.push((vec![deg].into_iter().chain(vec![0; dim - 1]).collect(), 1.0));
                    HomogeneousPolynomial::new(dim, terms)
                        .unwrap_or_else(|_| HomogeneousPolynomial::new(dim, [(
                            vec![deg].into_iter().chain(vec![0; dim - 1]).collect(),
                            1.0,
                        )])
                        .unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn homogeneity_is_exact_on_small_rationals(
            p in small_poly(),
            raw in proptest::collection::vec(-16i32..=16, 3),
            rho in 2u32..=3,
        ) {
            let x: Vec<f64> = raw[..p.dim()].iter().map(|&v| v as f64 / 4.0).collect();
            let rx: Vec<f64> = x.iter().map(|v| v * rho as f64).collect();
            let lhs = p.evaluate(&rx).unwrap();
            let rhs = (rho as f64).powi(p.degree() as i32) * p.evaluate(&x).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn square_evaluates_to_square(p in small_poly(), raw in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let x = &raw[..p.dim()];
            let v = p.evaluate(x).unwrap();
            let s = p.square().evaluate(x).unwrap();
            let scale: f64 = p.terms().map(|(_, c)| c.abs()).sum::<f64>().powi(2).max(1.0);
            prop_assert!((s - v * v).abs() <= 1e-12 * scale);
        }
    }
}
