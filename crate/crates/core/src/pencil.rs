//! The quadratic pencil `I − 2λB + λ²A` through its linearization
//! `𝒟 = [[2B, A^{1/2}], [−A^{1/2}, 0]]`, whose nonzero eigenvalues are `μ = 1/λ`.

use std::cmp::Ordering;

use faer::{c64, Mat};
use serde::Serialize;

use crate::basis::{self, TensorBasis};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::problem::{self, Discretization, Problem, ProblemKind, SweepOptions};

/// Eigenvalues with `|μ|` below this fraction of the largest are discarded.
pub const MU_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Linearization {
    block: Mat<f64>,
    half: usize,
}

impl Linearization {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.block
    }

    /// Size `d` of each block.
    pub fn half_dim(&self) -> usize {
        self.half
    }
}

pub fn build_linearization(a_half: &Mat<f64>, b: &Mat<f64>) -> Result<Linearization> {
    let d = b.nrows();
    if b.ncols() != d || a_half.nrows() != d || a_half.ncols() != d {
        return Err(LabError::Dimension { expected: d, got: a_half.nrows() });
    }
    let block = Mat::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
        (true, true) => 2.0 * b[(i, j)],
        (true, false) => a_half[(i, j - d)],
        (false, true) => -a_half[(i - d, j)],
        (false, false) => 0.0,
    });
    Ok(Linearization { block, half: d })
}

/// An eigenvalue of `𝒟` with its right eigenvector.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub mu: c64,
    pub vector: Vec<c64>,
}

fn spectral_order(a: &c64, b: &c64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// All eigenpairs of `𝒟`, by descending `|μ|`, then descending real and imaginary part.
pub fn eigensolve(lin: &Linearization) -> Result<Vec<Eigenpair>> {
    let evd = lin
        .block
        .eigen()
        .map_err(|e| LabError::numeric(format!("eigensolver did not converge for the linearization of size {}: {e:?}", lin.half)))?;
    let u = evd.U();
    let s = evd.S();
    let n = lin.block.nrows();
    let mut out: Vec<Eigenpair> = (0..n)
        .map(|k| Eigenpair { mu: s[k], vector: (0..n).map(|i| u[(i, k)]).collect() })
        .collect();
    out.sort_by(|a, b| spectral_order(&a.mu, &b.mu));
    Ok(out)
}

/// Eigenvalues of `𝒟` only, in the same order as [`eigensolve`].
pub fn eigenvalues(lin: &Linearization) -> Result<Vec<c64>> {
    let mut ev = lin
        .block
        .eigenvalues()
        .map_err(|e| LabError::numeric(format!("eigensolver did not converge for the linearization of size {}: {e:?}", lin.half)))?;
    ev.sort_by(spectral_order);
    Ok(ev)
}

/// A pencil eigenvalue with its coefficient vector.
#[derive(Clone, Debug, Serialize)]
pub struct PencilEigenpair {
    #[serde(serialize_with = "ser_complex")]
    pub mu: c64,
    #[serde(serialize_with = "ser_complex")]
    pub lambda: c64,
    #[serde(skip)]
    pub u: Vec<c64>,
    /// `‖(I − 2λB + λ²A)u‖ / ‖u‖`.
    pub residual: f64,
    pub size: usize,
}

fn ser_complex<S: serde::Serializer>(z: &c64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

fn split(vectors: &[&[c64]], d: usize) -> (Mat<f64>, Mat<f64>) {
    let re = Mat::from_fn(d, vectors.len(), |i, k| vectors[k][i].re);
    let im = Mat::from_fn(d, vectors.len(), |i, k| vectors[k][i].im);
    (re, im)
}

fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖(I − 2λB + λ²A)u‖ / ‖u‖` for every `(λ, u)`.
pub fn pencil_residuals(lambdas: &[c64], us: &[&[c64]], a: &Mat<f64>, b: &Mat<f64>) -> Vec<f64> {
    let d = a.nrows();
    if us.is_empty() {
        return Vec::new();
    }
    let (ur, ui) = split(us, d);
    let (bur, bui) = (b * &ur, b * &ui);
    let (aur, aui) = (a * &ur, a * &ui);
    (0..us.len())
        .map(|k| {
            let lam = lambdas[k];
            let lam2 = lam * lam;
            let mut acc = 0.0;
            for i in 0..d {
                let u = c64::new(ur[(i, k)], ui[(i, k)]);
                let bu = c64::new(bur[(i, k)], bui[(i, k)]);
                let au = c64::new(aur[(i, k)], aui[(i, k)]);
                acc += (u - 2.0 * lam * bu + lam2 * au).norm_sqr();
            }
            acc.sqrt() / norm(us[k])
        })
        .collect()
}

/// Keeps eigenpairs above the `|μ|` floor whose pencil residual is below `residual_tol`.
pub fn validate_pairs(pairs: &[Eigenpair], a: &Mat<f64>, b: &Mat<f64>, residual_tol: f64, size: usize) -> Result<Vec<PencilEigenpair>> {
    if !(residual_tol > 0.0) {
        return Err(LabError::input(format!("residual tolerance must be positive, got {residual_tol}")));
    }
    let d = a.nrows();
    let max_mu = pairs.iter().map(|p| p.mu.norm()).fold(0.0, f64::max);
    let kept: Vec<&Eigenpair> = pairs.iter().filter(|p| p.mu.norm() > MU_FLOOR * max_mu).collect();
    let lambdas: Vec<c64> = kept.iter().map(|p| p.mu.inv()).collect();
    let us: Vec<&[c64]> = kept.iter().map(|p| &p.vector[..d]).collect();
    let res = pencil_residuals(&lambdas, &us, a, b);
    Ok(kept
        .iter()
        .zip(lambdas)
        .zip(res)
        .filter(|(_, r)| *r < residual_tol)
        .map(|((p, lambda), residual)| PencilEigenpair { mu: p.mu, lambda, u: p.vector[..d].to_vec(), residual, size })
        .collect())
}

/// Index sets of the joint parity sectors of the axis flips that commute with the pencil.
pub fn parity_sectors(problem: &Problem, basis: &TensorBasis) -> Vec<Vec<usize>> {
    let n = basis.dim();
    let invariant = |axes: &[usize]| match &problem.kind {
        ProblemKind::Standard { poly } => poly.is_even_under_flip(axes),
        ProblemKind::Weighted { m, ell } => (m + ell) % 2 == 0,
    };
    let generators: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|axes| invariant(axes))
        .collect();
    let mut sectors: std::collections::BTreeMap<Vec<bool>, Vec<usize>> = Default::default();
    for flat in 0..basis.total_dim() {
        let multi = basis.multi_index(flat);
        let sig: Vec<bool> = generators.iter().map(|g| g.iter().map(|&i| multi[i]).sum::<usize>() % 2 == 1).collect();
        sectors.entry(sig).or_default().push(flat);
    }
    sectors.into_values().collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PencilOptions {
    pub residual_tol: f64,
    /// Relative drift `|Δλ| / (1 + |λ|)` allowed between the two largest sizes.
    pub drift_tol: f64,
    pub use_symmetry: bool,
    pub sweep: SweepOptions,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-6, drift_tol: 1e-4, use_symmetry: true, sweep: SweepOptions::default() }
    }
}

/// Validated pencil eigenpairs of one discretization.
#[derive(Clone, Debug)]
pub struct SizeSolution {
    pub size: usize,
    pub candidates: usize,
    pub pairs: Vec<PencilEigenpair>,
}

/// Solves the pencil at one size, sector by sector when symmetry is used.
pub fn solve_discretization(problem: &Problem, d: &Discretization, opts: &PencilOptions) -> Result<SizeSolution> {
    let dim = d.total_dim();
    let sectors = if opts.use_symmetry { parity_sectors(problem, &d.basis) } else { vec![(0..dim).collect()] };
    let (a, b, h) = (d.pencil_a(), d.pencil_b(), d.pencil_a_half());
    let mut candidates = 0;
    let mut pairs = Vec::new();
    for idx in &sectors {
        let (sa, sb, sh) = (
            linalg::principal_submatrix(a, idx),
            linalg::principal_submatrix(b, idx),
            linalg::principal_submatrix(h, idx),
        );
        let eig = eigensolve(&build_linearization(&sh, &sb)?)?;
        candidates += eig.len();
        for mut p in validate_pairs(&eig, &sa, &sb, opts.residual_tol, d.size())? {
            let mut full = vec![c64::new(0.0, 0.0); dim];
            for (k, &i) in idx.iter().enumerate() {
                full[i] = p.u[k];
            }
            p.u = full;
            pairs.push(p);
        }
    }
    pairs.sort_by(|x, y| spectral_order(&x.mu, &y.mu));
    Ok(SizeSolution { size: d.size(), candidates, pairs })
}

/// Disjoint pairs `(i, j)` chosen by increasing `|a_i − b_j|`.
pub fn match_nearest(a: &[c64], b: &[c64]) -> Vec<(usize, usize, f64)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            all.push(((x - y).norm(), i, j));
        }
    }
    all.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut out = Vec::new();
    for (dist, i, j) in all {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, dist));
        }
    }
    out
}

/// One validated eigenvalue at the largest size with its cross-size history.
#[derive(Clone, Debug, Serialize)]
pub struct MatchedEigenvalue {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub residual: f64,
    pub size: usize,
    /// Relative drift `|Δλ|/(1+|λ|)` to the matched value at each smaller size, largest first.
    pub drifts: Vec<Option<f64>>,
    pub certified: bool,
    #[serde(skip)]
    pub pair_index: usize,
}

impl MatchedEigenvalue {
    pub fn lambda(&self) -> c64 {
        c64::new(self.lambda_re, self.lambda_im)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub problem: String,
    pub sizes: Vec<usize>,
    pub candidates: Vec<usize>,
    pub validated: Vec<usize>,
    /// Validated eigenvalues at the largest size, by increasing `|λ|`.
    pub eigenvalues: Vec<MatchedEigenvalue>,
    #[serde(skip)]
    pub largest: Option<SizeSolution>,
}

impl StabilityReport {
    pub fn certified(&self) -> impl Iterator<Item = &MatchedEigenvalue> {
        self.eigenvalues.iter().filter(|e| e.certified)
    }

    /// Certified eigenvalue of smallest modulus with its eigenpair.
    pub fn flagship(&self) -> Option<(&MatchedEigenvalue, &PencilEigenpair)> {
        let sol = self.largest.as_ref()?;
        self.certified().next().map(|e| (e, &sol.pairs[e.pair_index]))
    }
}

/// Solves at every size and certifies eigenvalues that are stable between the two largest sizes.
pub fn stability_study(problem: &Problem, sizes: &[usize], opts: &PencilOptions) -> Result<StabilityReport> {
    if sizes.len() < 2 {
        return Err(LabError::input("a stability study needs at least two sizes"));
    }
    let mut sols = problem::map_sizes(problem, sizes, opts.sweep, |d| solve_discretization(problem, d, opts))?;
    let lambdas: Vec<Vec<c64>> = sols.iter().map(|s| s.pairs.iter().map(|p| p.lambda).collect()).collect();
    let top = sols.len() - 1;
    // chain[i] follows each largest-size eigenvalue back through the smaller sizes.
    let mut chain: Vec<Option<usize>> = (0..lambdas[top].len()).map(Some).collect();
    let mut drifts: Vec<Vec<Option<f64>>> = vec![Vec::new(); lambdas[top].len()];
    for level in (0..top).rev() {
        let matched = match_nearest(&lambdas[level + 1], &lambdas[level]);
        let mut partner = vec![None; lambdas[level + 1].len()];
        for (i, j, _) in matched {
            partner[i] = Some(j);
        }
        for (k, c) in chain.iter_mut().enumerate() {
            let next = c.and_then(|i| partner[i].map(|j| (i, j)));
            drifts[k].push(next.map(|(i, j)| {
                let lam = lambdas[level + 1][i];
                (lam - lambdas[level][j]).norm() / (1.0 + lam.norm())
            }));
            *c = next.map(|(_, j)| j);
        }
    }
    let largest = sols.pop().expect("at least two sizes");
    let mut eigenvalues: Vec<MatchedEigenvalue> = largest
        .pairs
        .iter()
        .enumerate()
        .map(|(k, p)| MatchedEigenvalue {
            lambda_re: p.lambda.re,
            lambda_im: p.lambda.im,
            residual: p.residual,
            size: p.size,
            certified: p.residual < opts.residual_tol && drifts[k][0].is_some_and(|d| d < opts.drift_tol),
            drifts: drifts[k].clone(),
            pair_index: k,
        })
        .collect();
    eigenvalues.sort_by(|x, y| {
        x.lambda()
            .norm()
            .total_cmp(&y.lambda().norm())
            .then(y.lambda_im.total_cmp(&x.lambda_im))
    });
    let mut candidates: Vec<usize> = sols.iter().map(|s| s.candidates).collect();
    candidates.push(largest.candidates);
    let mut validated: Vec<usize> = sols.iter().map(|s| s.pairs.len()).collect();
    validated.push(largest.pairs.len());
    Ok(StabilityReport {
        problem: problem.name.clone(),
        sizes: sizes.to_vec(),
        candidates,
        validated,
        eigenvalues,
        largest: Some(largest),
    })
}

/// Physical eigenfunction `f = L^{-1/2}u` of `L − 2λM₁ + λ²M₂`.
#[derive(Clone, Debug)]
pub struct PhysicalEigenfunction {
    pub lambda: c64,
    /// Coefficients in `basis`.
    pub coeffs: Vec<c64>,
    pub basis: TensorBasis,
    /// `‖(L − 2λM₁ + λ²M₂)f‖/‖f‖` with the operators applied exactly on an enlarged basis.
    pub direct_residual: f64,
    /// Norm fraction of coefficients with some index in the last decile of its axis.
    pub tail_fraction: f64,
}

pub fn recover_physical_eigenfunction(pair: &PencilEigenpair, problem: &Problem, d: &Discretization) -> Result<PhysicalEigenfunction> {
    let dim = d.total_dim();
    if pair.u.len() != dim {
        return Err(LabError::Dimension { expected: dim, got: pair.u.len() });
    }
    let re: Vec<f64> = pair.u.iter().map(|z| z.re).collect();
    let im: Vec<f64> = pair.u.iter().map(|z| z.im).collect();
    let (fr, fi) = (linalg::mat_vec(&d.a_half, &re), linalg::mat_vec(&d.a_half, &im));
    let coeffs: Vec<c64> = fr.iter().zip(&fi).map(|(&r, &i)| c64::new(r, i)).collect();

    let poly = problem.potential();
    let big = d.basis.enlarged(2 * problem.degree() as usize)?;
    let l_big = &big.laplacian() + &basis::multiplication_matrix(&poly.square(), &big)?;
    let (m1, m2) = d.physical_multipliers(&big, &poly)?;
    let mut er = vec![0.0; big.total_dim()];
    let mut ei = vec![0.0; big.total_dim()];
    for k in 0..dim {
        let j = big.flat_index(&d.basis.multi_index(k));
        er[j] = fr[k];
        ei[j] = fi[k];
    }
    let apply = |m: &Mat<f64>| {
        let (r, i) = (linalg::mat_vec(m, &er), linalg::mat_vec(m, &ei));
        r.into_iter().zip(i).map(|(r, i)| c64::new(r, i)).collect::<Vec<c64>>()
    };
    let (lf, m1f, m2f) = (apply(&l_big), apply(&m1), apply(&m2));
    let lam = pair.lambda;
    let r: Vec<c64> = (0..lf.len()).map(|k| lf[k] - 2.0 * lam * m1f[k] + lam * lam * m2f[k]).collect();
    let f_norm = norm(&coeffs);

    let sizes: Vec<usize> = d.basis.axes().iter().map(|a| a.size()).collect();
    let tail: f64 = (0..dim)
        .filter(|&k| {
            d.basis
                .multi_index(k)
                .iter()
                .zip(&sizes)
                .any(|(&j, &n)| 10 * j >= 9 * n)
        })
        .map(|k| coeffs[k].norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(PhysicalEigenfunction { lambda: lam, coeffs, basis: d.basis.clone(), direct_residual: norm(&r) / f_norm, tail_fraction: tail / f_norm })
}

/// Re-solves at a larger `size` and recovers the eigenfunction of the eigenvalue nearest `lambda`.
///
/// Fails with a numeric error when no validated eigenvalue lies within the drift tolerance.
pub fn refine_eigenfunction(problem: &Problem, lambda: c64, size: usize, opts: &PencilOptions) -> Result<PhysicalEigenfunction> {
    let d = problem.discretize(size)?;
    let sol = solve_discretization(problem, &d, opts)?;
    let pair = sol
        .pairs
        .iter()
        .min_by(|a, b| (a.lambda - lambda).norm().total_cmp(&(b.lambda - lambda).norm()))
        .filter(|p| (p.lambda - lambda).norm() <= opts.drift_tol * (1.0 + lambda.norm()))
        .ok_or_else(|| LabError::numeric(format!("no eigenvalue near {lambda} at size {size}")))?;
    recover_physical_eigenfunction(pair, problem, &d)
}

impl PhysicalEigenfunction {
    /// Values of `f` at grid points.
    pub fn sample(&self, grid: &[Vec<f64>]) -> Result<Vec<c64>> {
        sample_eigenfunction(&self.coeffs, &self.basis, grid)
    }
}

/// Samples `Σ cⱼφⱼ` at grid points.
pub fn sample_eigenfunction(coeffs: &[c64], basis: &TensorBasis, grid: &[Vec<f64>]) -> Result<Vec<c64>> {
    let re: Vec<f64> = coeffs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = coeffs.iter().map(|z| z.im).collect();
    let (sr, si) = (basis::synthesize(&re, basis, grid)?, basis::synthesize(&im, basis, grid)?);
    Ok(sr.into_iter().zip(si).map(|(r, i)| c64::new(r, i)).collect())
}

/// Exact finite-dimensional spectral identities of `𝒟`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectrumIdentities {
    pub sum_mu: f64,
    pub two_tr_b: f64,
    pub sum_mu_rel_error: f64,
    pub sum_mu2: f64,
    pub tr_4b2_minus_2a: f64,
    pub sum_mu2_rel_error: f64,
    /// Largest distance from `μ̄` to the nearest computed eigenvalue, relative to `max|μ|`.
    pub conjugate_pairing: f64,
    /// Largest imaginary part of `Σμ` and `Σμ²`, relative to their scales.
    pub imaginary_residue: f64,
}

/// `Σμ = 2 Tr B` and `Σμ² = Tr(4B² − 2A)`, each relative to `Σ|μ|` and `Σ|μ|²`.
pub fn spectrum_identities(d: &Discretization) -> Result<SpectrumIdentities> {
    let (a, b) = (d.pencil_a(), d.pencil_b());
    let mu = eigenvalues(&build_linearization(d.pencil_a_half(), b)?)?;
    let s1: c64 = mu.iter().sum();
    let s2: c64 = mu.iter().map(|z| z * z).sum();
    let scale1: f64 = mu.iter().map(|z| z.norm()).sum();
    let scale2: f64 = mu.iter().map(|z| z.norm_sqr()).sum();
    let two_tr_b = 2.0 * linalg::trace(b);
    let tr2 = 4.0 * linalg::trace_of_product(b, b) - 2.0 * linalg::trace(a);
    let max_mu = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pairing = mu
        .iter()
        .map(|z| mu.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(SpectrumIdentities {
        sum_mu: s1.re,
        two_tr_b,
        sum_mu_rel_error: (s1.re - two_tr_b).abs() / scale1,
        sum_mu2: s2.re,
        tr_4b2_minus_2a: tr2,
        sum_mu2_rel_error: (s2.re - tr2).abs() / scale2,
        conjugate_pairing: pairing / max_mu,
        imaginary_residue: (s1.im.abs() / scale1).max(s2.im.abs() / scale2),
    })
}
