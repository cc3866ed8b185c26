//! Named problems, basis-scale rules and the per-size bundle of assembled operators.

use std::fmt;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{self, HermiteBasis1D, TensorBasis};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::operators::{self, ScalingMode, SpdFactorization, SpectralOperator};
use crate::polynomial::{HomogeneousPolynomial, SphereSign};

/// Which quadratic pencil is studied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    /// `I − 2λB + λ²A` built from `L = −Δ + P²`.
    Standard { poly: HomogeneousPolynomial },
    /// `I − 2λB_w + λ²A_w` for `D_t² − 2λt^{m+ℓ} + λ²t^{2ℓ} + t^{2m}` in one variable.
    Weighted { m: u32, ell: u32 },
}

/// How the Hermite scale α is chosen for a given per-axis size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum AlphaRule {
    /// Variational for one-dimensional standard problems with `m ≥ 2`, power rule otherwise.
    #[default]
    Auto,
    /// `α = c · N^{(m−1)/(2(m+1))}`.
    Power(f64),
    /// α maximizing `Tr_N A`; the discrete virial identity then holds exactly.
    Variational,
    Fixed(f64),
}

/// Bracket `[c/3, 3c]` searched around the power-rule prefactor.
const VARIATIONAL_BRACKET: f64 = 3.0;
const VARIATIONAL_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub kind: ProblemKind,
    #[serde(default)]
    pub alpha_rule: AlphaRule,
    #[serde(default)]
    pub experimental: bool,
}

/// Preset names shipped with the library.
pub const PRESETS: &[&str] = &[
    "monomial:1",
    "monomial:2",
    "monomial:3",
    "monomial:4",
    "monomial:5",
    "monomial:6",
    "hoshiro:5:1",
    "hoshiro:7:2",
    "hoshiro:3:1",
    "radial:2:2",
    "radial:2:3",
    "radial:3:3",
    "remark63:2",
];

impl Problem {
    pub fn standard(name: impl Into<String>, poly: HomogeneousPolynomial) -> Self {
        Self { name: name.into(), kind: ProblemKind::Standard { poly }, alpha_rule: AlphaRule::Auto, experimental: false }
    }

    pub fn weighted(m: u32, ell: u32) -> Result<Self> {
        if m == 0 || ell >= m {
            return Err(LabError::input(format!("weighted problem needs 0 ≤ ℓ < m, got m={m}, ℓ={ell}")));
        }
        Ok(Self {
            name: format!("hoshiro:{m}:{ell}"),
            kind: ProblemKind::Weighted { m, ell },
            alpha_rule: AlphaRule::Auto,
            experimental: false,
        })
    }

    /// `monomial:m`, `radial:n:k`, `remark63:k` or `hoshiro:m:ℓ`.
    pub fn from_preset(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("hoshiro:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 2 {
                return Err(LabError::input(format!("expected hoshiro:m:l, got '{spec}'")));
            }
            let parse = |s: &str| s.parse::<u32>().map_err(|_| LabError::input(format!("bad integer '{s}' in '{spec}'")));
            return Self::weighted(parse(parts[0])?, parse(parts[1])?);
        }
        let poly = HomogeneousPolynomial::from_preset(spec)?;
        let mut p = Self::standard(spec, poly);
        p.experimental = spec.starts_with("remark63");
        Ok(p)
    }

    pub fn with_alpha_rule(mut self, rule: AlphaRule) -> Self {
        self.alpha_rule = rule;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProblemKind::Standard { poly } => poly.dim(),
            ProblemKind::Weighted { .. } => 1,
        }
    }

    /// Degree `m` of the confining potential.
    pub fn degree(&self) -> u32 {
        match &self.kind {
            ProblemKind::Standard { poly } => poly.degree(),
            ProblemKind::Weighted { m, .. } => *m,
        }
    }

    /// The polynomial `P` with `L = −Δ + P²`.
    pub fn potential(&self) -> HomogeneousPolynomial {
        match &self.kind {
            ProblemKind::Standard { poly } => poly.clone(),
            ProblemKind::Weighted { m, .. } => HomogeneousPolynomial::monomial(*m).expect("m ≥ 1"),
        }
    }

    pub fn weight_exponent(&self) -> Option<u32> {
        match &self.kind {
            ProblemKind::Weighted { ell, .. } => Some(*ell),
            ProblemKind::Standard { .. } => None,
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, ProblemKind::Weighted { .. })
    }

    pub fn sphere_sign(&self) -> Result<SphereSign> {
        self.potential().sphere_sign(256)
    }

    pub fn is_elliptic(&self) -> Result<bool> {
        self.potential().is_elliptic(256)
    }

    /// Default per-axis size sweep.
    pub fn default_sizes(&self) -> Vec<usize> {
        match self.dim() {
            1 => vec![100, 200, 400],
            2 => vec![24, 32, 40],
            _ => vec![8, 10, 12],
        }
    }

    fn resolved_rule(&self) -> AlphaRule {
        match self.alpha_rule {
            AlphaRule::Auto => match &self.kind {
                ProblemKind::Standard { poly } if poly.dim() == 1 && poly.degree() >= 2 => AlphaRule::Variational,
                _ => AlphaRule::Power(1.0),
            },
            other => other,
        }
    }

    /// Hermite scale used at per-axis size `size`.
    pub fn alpha_for(&self, size: usize) -> Result<f64> {
        let m = self.degree();
        match self.resolved_rule() {
            AlphaRule::Fixed(a) => {
                if a.is_finite() && a > 0.0 {
                    Ok(a)
                } else {
                    Err(LabError::input(format!("basis scale must be positive, got {a}")))
                }
            }
            AlphaRule::Power(c) => {
                if c.is_finite() && c > 0.0 {
                    Ok(c * basis::power_rule_alpha(size, m))
                } else {
                    Err(LabError::input(format!("power-rule prefactor must be positive, got {c}")))
                }
            }
            AlphaRule::Variational => variational_alpha(&self.potential(), size),
            AlphaRule::Auto => unreachable!("resolved above"),
        }
    }

    pub fn basis_at(&self, size: usize) -> Result<TensorBasis> {
        TensorBasis::uniform(self.dim(), size, self.alpha_for(size)?)
    }

    pub fn discretize(&self, size: usize) -> Result<Discretization> {
        Discretization::new(self, self.basis_at(size)?)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Golden-section search for the α maximizing `Tr_N (−Δ + P²)⁻¹` in one variable.
pub fn variational_alpha(poly: &HomogeneousPolynomial, size: usize) -> Result<f64> {
    if poly.dim() != 1 {
        return Err(LabError::input("variational scale is only defined for one-dimensional problems"));
    }
    let centre = basis::power_rule_alpha(size, poly.degree());
    let square = poly.square();
    let objective = |log_c: f64| -> Result<f64> {
        let alpha = centre * log_c.exp();
        let b = TensorBasis::uniform(1, size, alpha)?;
        let l = &b.laplacian() + &basis::multiplication_matrix(&square, &b)?;
        let ev = operators::symmetric_eigenvalues(&l)?;
        if ev.iter().any(|&x| !(x > 0.0)) {
            return Err(LabError::Discretization(format!("L not positive definite at α = {alpha}")));
        }
        Ok(ev.iter().map(|x| 1.0 / x).sum())
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-VARIATIONAL_BRACKET.ln(), VARIATIONAL_BRACKET.ln());
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while hi - lo > VARIATIONAL_TOL {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    Ok(centre * (0.5 * (lo + hi)).exp())
}

/// Controls how per-size work is scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    pub serial: bool,
}

/// Validates a size sweep: nonempty and strictly increasing.
pub fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(LabError::input("size sweep is empty"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::input(format!("sizes must be strictly increasing, got {sizes:?}")));
    }
    Ok(())
}

/// Discretizes `problem` at every size and applies `f`; results keep the order of `sizes`.
pub fn map_sizes<T, F>(problem: &Problem, sizes: &[usize], opts: SweepOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Discretization) -> Result<T> + Sync,
{
    check_sizes(sizes)?;
    let run = |&n: &usize| problem.discretize(n).and_then(|d| f(&d));
    if opts.serial {
        sizes.iter().map(run).collect()
    } else {
        sizes.par_iter().map(run).collect()
    }
}

/// Operators of a problem assembled on one basis.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub basis: TensorBasis,
    pub degree: u32,
    pub weight: Option<u32>,
    /// Galerkin matrix of `−Δ`.
    pub laplacian: Mat<f64>,
    /// Galerkin matrix of `P`.
    pub p: Mat<f64>,
    /// Galerkin matrix of `P²`; differs from `p·p` by truncation.
    pub psq: Mat<f64>,
    pub l: SpectralOperator,
    pub l_fact: SpdFactorization,
    pub a: Mat<f64>,
    pub a_half: Mat<f64>,
    pub b: Mat<f64>,
    weighted: Option<WeightedParts>,
}

#[derive(Clone, Debug)]
struct WeightedParts {
    a_w: Mat<f64>,
    b_w: Mat<f64>,
    a_w_half: Mat<f64>,
}

impl Discretization {
    pub fn new(problem: &Problem, basis: TensorBasis) -> Result<Self> {
        if basis.dim() != problem.dim() {
            return Err(LabError::Dimension { expected: problem.dim(), got: basis.dim() });
        }
        let poly = problem.potential();
        let (l, l_fact) = operators::assemble_l(&poly, &basis)?;
        let laplacian = basis.laplacian();
        let p = basis::multiplication_matrix(&poly, &basis)?;
        let psq = basis::multiplication_matrix(&poly.square(), &basis)?;
        let a = l_fact.power(-1.0).into_matrix();
        let a_half = l_fact.power(-0.5).into_matrix();
        let b = operators::sandwich(&a_half, &p);
        let weighted = match problem.kind {
            ProblemKind::Weighted { m, ell } => {
                let (a_w, b_w) = operators::weighted_pair(&basis.axes()[0], m, ell, &a_half);
                let a_w_op = SpectralOperator::new(basis.clone(), a_w.clone(), true)?;
                let a_w_half = operators::factorize(&a_w_op)?.power(0.5).into_matrix();
                Some(WeightedParts { a_w, b_w, a_w_half })
            }
            ProblemKind::Standard { .. } => None,
        };
        Ok(Self {
            basis,
            degree: problem.degree(),
            weight: problem.weight_exponent(),
            laplacian,
            p,
            psq,
            l,
            l_fact,
            a,
            a_half,
            b,
            weighted,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.basis.total_dim()
    }

    /// Per-axis size.
    pub fn size(&self) -> usize {
        self.basis.axes()[0].size()
    }

    pub fn alpha(&self) -> f64 {
        self.basis.axes()[0].alpha()
    }

    /// The `A` of the pencil `I − 2λB + λ²A` under study.
    pub fn pencil_a(&self) -> &Mat<f64> {
        self.weighted.as_ref().map_or(&self.a, |w| &w.a_w)
    }

    pub fn pencil_b(&self) -> &Mat<f64> {
        self.weighted.as_ref().map_or(&self.b, |w| &w.b_w)
    }

    pub fn pencil_a_half(&self) -> &Mat<f64> {
        self.weighted.as_ref().map_or(&self.a_half, |w| &w.a_w_half)
    }

    pub fn a_w(&self) -> Option<&Mat<f64>> {
        self.weighted.as_ref().map(|w| &w.a_w)
    }

    pub fn b_w(&self) -> Option<&Mat<f64>> {
        self.weighted.as_ref().map(|w| &w.b_w)
    }

    /// Galerkin matrix of `t^j`; one-dimensional bases only.
    pub fn t_power(&self, j: u32) -> Result<Mat<f64>> {
        if self.basis.dim() != 1 {
            return Err(LabError::input("t-power factors need a one-dimensional basis"));
        }
        Ok(self.basis.axes()[0].monomial_matrix(j, j as usize))
    }

    /// `(−Δ + γP²)⁻¹` on this basis.
    pub fn scaled_a(&self, gamma: f64, mode: ScalingMode) -> Result<Mat<f64>> {
        operators::scale_gamma(&self.laplacian, &self.psq, &self.l_fact, self.degree, gamma, mode).map(|o| o.into_matrix())
    }

    /// Physical multipliers `(M₁, M₂)` of `L − 2λM₁ + λ²M₂` on `basis`.
    pub fn physical_multipliers(&self, basis: &TensorBasis, poly: &HomogeneousPolynomial) -> Result<(Mat<f64>, Mat<f64>)> {
        match self.weight {
            None => Ok((basis::multiplication_matrix(poly, basis)?, linalg::identity(basis.total_dim()))),
            Some(ell) => {
                let axis: HermiteBasis1D = basis.axes()[0];
                Ok((
                    axis.monomial_matrix(self.degree + ell, (self.degree + ell) as usize),
                    axis.monomial_matrix(2 * ell, 2 * ell as usize),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in PRESETS {
            let p = Problem::from_preset(name).unwrap();
            assert_eq!(&p.name, name);
        }
        assert!(Problem::from_preset("hoshiro:3:3").is_err());
        assert!(Problem::from_preset("cubic").is_err());
        assert!(Problem::from_preset("remark63:2").unwrap().experimental);
        assert_eq!(Problem::from_preset("radial:2:2").unwrap().degree(), 4);
    }

    #[test]
    fn weighted_pencil_operators_are_selected() {
        let p = Problem::from_preset("hoshiro:5:1").unwrap();
        let d = p.discretize(40).unwrap();
        assert!(d.a_w().is_some());
        let h = d.pencil_a_half();
        let hh = h * h;
        assert!(linalg::max_abs_diff(&hh, d.pencil_a()) < 1e-12);
        assert!(linalg::max_abs_diff(d.pencil_a(), &d.a) > 1e-6);
    }

    #[test]
    fn variational_scale_is_a_maximum() {
        let poly = HomogeneousPolynomial::monomial(2).unwrap();
        let n = 60;
        let a = variational_alpha(&poly, n).unwrap();
        let tr = |alpha: f64| {
            let d = Discretization::new(
                &Problem::standard("m2", poly.clone()).with_alpha_rule(AlphaRule::Fixed(alpha)),
                TensorBasis::uniform(1, n, alpha).unwrap(),
            )
            .unwrap();
            linalg::trace(&d.a)
        };
        let t0 = tr(a);
        assert!(t0 >= tr(a * 1.01));
        assert!(t0 >= tr(a / 1.01));
    }

    #[test]
    fn psq_is_not_p_times_p() {
        let d = Problem::from_preset("monomial:2").unwrap().discretize(30).unwrap();
        let pp = &d.p * &d.p;
        let diff = linalg::max_abs_diff(&pp, &d.psq);
        assert!(diff > 1e-6);
        let inner = linalg::max_abs_diff(&linalg::crop(&pp, 25), &linalg::crop(&d.psq, 25));
        assert!(inner < 1e-10 * linalg::max_abs(&d.psq));
    }

    #[test]
    fn alpha_rules() {
        let p = Problem::from_preset("radial:2:2").unwrap();
        assert!((p.alpha_for(32).unwrap() - basis::power_rule_alpha(32, 4)).abs() < 1e-15);
        let p = p.with_alpha_rule(AlphaRule::Fixed(0.0));
        assert!(p.alpha_for(32).unwrap_err().is_input_error());
    }
}
