//! Anisotropic symbol classes `S^M_{k,l}` and their Schatten-class arithmetic,
//! plus a leading-symbol Hilbert–Schmidt estimate for `(s − Δ + P²)⁻¹`.
//!
//! A symbol of class `S^M_{k,l}` satisfies `|a(ρ^k x, ρ^l ξ)| ~ ρ^M`; the operator
//! lies in the Schatten class `C_p` when `Mp + (k+l)n < 0`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::polynomial::HomogeneousPolynomial;

/// Absolute margin for the membership inequality; keeps exact boundary cases out.
const BOUNDARY_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymbolClassSpec {
    /// Order `M`.
    pub order: f64,
    /// Weight of `x`.
    pub k: f64,
    /// Weight of `ξ`.
    pub l: f64,
    pub n: usize,
}

impl SymbolClassSpec {
    pub fn new(order: f64, k: f64, l: f64, n: usize) -> Result<Self> {
        if !(k > 0.0 && l > 0.0 && k.is_finite() && l.is_finite()) {
            return Err(LabError::input(format!("symbol weights must be positive, got k={k}, l={l}")));
        }
        if n == 0 || !order.is_finite() {
            return Err(LabError::input("symbol class needs n ≥ 1 and a finite order"));
        }
        Ok(Self { order, k, l, n })
    }

    /// Class of `(−Δ + P²)⁻¹` for `P` of degree `m` on ℝⁿ.
    pub fn inverse(n: usize, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(LabError::input("degree must be positive"));
        }
        Self::new(-2.0, 1.0 / m as f64, 1.0, n)
    }

    /// Class of multiplication by a polynomial of degree `j`, measured against degree-`m` weights.
    pub fn polynomial(n: usize, m: u32, j: u32) -> Result<Self> {
        let base = Self::inverse(n, m)?;
        Ok(Self { order: j as f64 / m as f64, ..base })
    }

    /// Class of `A_w = L^{-1/2} t^{2ℓ} L^{-1/2}`.
    pub fn weighted_a(m: u32, ell: u32) -> Result<Self> {
        let half = Self::inverse(1, m)?.power(0.5);
        half.compose(&Self::polynomial(1, m, 2 * ell)?)?.compose(&half)
    }

    /// Class of `B_w = L^{-1/2} t^{m+ℓ} L^{-1/2}`.
    pub fn weighted_b(m: u32, ell: u32) -> Result<Self> {
        let half = Self::inverse(1, m)?.power(0.5);
        half.compose(&Self::polynomial(1, m, m + ell)?)?.compose(&half)
    }

    /// `M·p + (k+l)·n < 0`.
    pub fn schatten_member(&self, p: f64) -> Result<bool> {
        if !(p >= 1.0) {
            return Err(LabError::input(format!("Schatten index must be ≥ 1, got {p}")));
        }
        Ok(self.order * p + (self.k + self.l) * (self.n as f64) < -BOUNDARY_MARGIN)
    }

    pub fn trace_class(&self) -> bool {
        self.schatten_member(1.0).expect("p = 1 is valid")
    }

    pub fn hilbert_schmidt(&self) -> bool {
        self.schatten_member(2.0).expect("p = 2 is valid")
    }

    /// Infimum of admissible `p`; `None` for nonnegative order.
    pub fn min_schatten_index(&self) -> Option<f64> {
        (self.order < 0.0).then(|| (self.k + self.l) * self.n as f64 / -self.order)
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.k != other.k || self.l != other.l || self.n != other.n {
            return Err(LabError::input(format!(
                "cannot compose S_{{{},{}}} on ℝ^{} with S_{{{},{}}} on ℝ^{}",
                self.k, self.l, self.n, other.k, other.l, other.n
            )));
        }
        Ok(Self { order: self.order + other.order, ..*self })
    }

    /// Class of a real power of an elliptic operator in this class.
    pub fn power(&self, s: f64) -> Self {
        Self { order: self.order * s, ..*self }
    }

    pub fn table_row(&self, p: f64) -> Result<SchattenRow> {
        Ok(SchattenRow {
            order: self.order,
            k: self.k,
            l: self.l,
            n: self.n,
            p,
            member: self.schatten_member(p)?,
            p_min: self.min_schatten_index(),
        })
    }
}

/// One row of the membership table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchattenRow {
    #[serde(rename = "M")]
    pub order: f64,
    pub k: f64,
    pub l: f64,
    pub n: usize,
    pub p: f64,
    pub member: bool,
    pub p_min: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub max_angular: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-6, max_intervals: 4000, max_angular: 1024 }
    }
}

/// `∫_{ℝⁿ} (|ξ|² + c)^{-2} dξ = κₙ c^{n/2−2}`.
fn xi_constant(n: usize) -> f64 {
    match n {
        1 => PI / 2.0,
        2 => PI,
        3 => PI * PI,
        _ => unreachable!("dimension checked by the caller"),
    }
}

/// `[(2π)^{-n} ∫∫ (s + |ξ|² + P(x)²)^{-2} dx dξ]^{1/2}`; `+∞` when the integral diverges.
pub fn hs_estimate_shifted_inverse(poly: &HomogeneousPolynomial, shift: f64, quad: &QuadratureOptions) -> Result<f64> {
    if !(shift > 0.0 && shift.is_finite()) {
        return Err(LabError::input(format!("shift must be positive, got {shift}")));
    }
    let n = poly.dim();
    let m = poly.degree() as f64;
    let e = n as f64 / 2.0 - 2.0;
    // Radial tail r^{n−1+2me} must be integrable, otherwise the norm is infinite.
    if n as f64 + 2.0 * m * e >= 0.0 || !poly.is_elliptic(256)? {
        return Ok(f64::INFINITY);
    }
    let radial = |dir: &[f64]| -> Result<f64> {
        let p = poly.evaluate(dir)?;
        radial_integral(n, 2.0 * m, p * p, e, shift, quad)
    };
    let angular = match n {
        1 => radial(&[1.0])? + radial(&[-1.0])?,
        2 => refine_angular(quad, |k| {
            let h = 2.0 * PI / k as f64;
            let mut acc = 0.0;
            for i in 0..k {
                let th = h * i as f64;
                acc += radial(&[th.cos(), th.sin()])?;
            }
            Ok(acc * h)
        })?,
        _ => refine_angular(quad, |k| {
            let (nodes, weights) = gauss_legendre(k);
            let nphi = 2 * k;
            let h = 2.0 * PI / nphi as f64;
            let mut acc = 0.0;
            for (z, w) in nodes.iter().zip(&weights) {
                let s = (1.0 - z * z).sqrt();
                for j in 0..nphi {
                    let ph = h * j as f64;
                    acc += w * h * radial(&[s * ph.cos(), s * ph.sin(), *z])?;
                }
            }
            Ok(acc)
        })?,
    };
    let hs2 = (2.0 * PI).powi(-(n as i32)) * xi_constant(n) * angular;
    Ok(hs2.sqrt())
}

fn refine_angular(quad: &QuadratureOptions, rule: impl Fn(usize) -> Result<f64>) -> Result<f64> {
    let mut k = 8;
    let mut prev = rule(k)?;
    while k < quad.max_angular {
        k *= 2;
        let next = rule(k)?;
        if (next - prev).abs() <= 1e-3 * quad.rel_tol * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(LabError::numeric(format!("angular quadrature did not converge with {} nodes", quad.max_angular)))
}

/// `∫₀^∞ r^{n−1} (s + q r^{deg})^{e} dr` for `q > 0`.
fn radial_integral(n: usize, deg: f64, q: f64, e: f64, s: f64, quad: &QuadratureOptions) -> Result<f64> {
    if !(q > 0.0) {
        return Ok(f64::INFINITY);
    }
    let scale = (s / q).powf(1.0 / deg);
    let f = |x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let r = scale * x / (1.0 - x);
        let jac = scale / ((1.0 - x) * (1.0 - x));
        r.powi(n as i32 - 1) * (s + q * r.powf(deg)).powf(e) * jac
    };
    adaptive_kronrod(f, 0.0, 1.0, quad)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        kron += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration to relative tolerance.
pub fn adaptive_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, quad: &QuadratureOptions) -> Result<f64> {
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::new();
    for i in 0..4 {
        let lo = a + (b - a) * i as f64 / 4.0;
        let hi = a + (b - a) * (i + 1) as f64 / 4.0;
        let (v, err) = gk15(&f, lo, hi);
        parts.push((lo, hi, v, err));
    }
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(LabError::numeric("integrand produced a non-finite value"));
        }
        if err <= quad.rel_tol * total.abs() || err < f64::MIN_POSITIVE {
            return Ok(total);
        }
        if parts.len() >= quad.max_intervals {
            return Err(LabError::numeric(format!(
                "adaptive quadrature did not reach relative tolerance {:e} (estimate {total:e}, error {err:e})",
                quad.rel_tol
            )));
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            let pm1 = if order == 1 { 1.0 } else { p0 };
            dp = order as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}
