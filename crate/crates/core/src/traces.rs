//! Traces of operator words, the rank-2/3/4 criteria and their companion
//! identities and inequalities, evaluated over truncation sweeps with
//! power-law extrapolation.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg;
use crate::operators::ScalingMode;
use crate::polynomial::SphereSign;
use crate::problem::{self, Discretization, Problem, ProblemKind, SweepOptions};
use crate::symbolcalc::SymbolClassSpec;

pub const MAX_WORD_LENGTH: usize = 12;
/// A criterion is satisfied only when `|value| > VERDICT_FACTOR · error`.
pub const VERDICT_FACTOR: f64 = 5.0;
/// Smallest convergence exponent accepted by the extrapolation fit.
pub const MIN_EXPONENT: f64 = 0.25;
const MAX_EXPONENT: f64 = 32.0;

/// A named dense matrix used as a word factor.
#[derive(Clone, Debug)]
pub struct CustomFactor {
    pub name: String,
    pub matrix: Arc<Mat<f64>>,
}

#[derive(Clone, Debug)]
pub enum Factor {
    A,
    B,
    P,
    AHalf,
    L,
    Aw,
    Bw,
    /// Multiplication by `t^j` (one dimension only).
    T(u32),
    /// Galerkin matrix of `P²`.
    Psq,
    Custom(CustomFactor),
}

impl PartialEq for Factor {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Factor::T(a), Factor::T(b)) => a == b,
            (Factor::Custom(a), Factor::Custom(b)) => a.name == b.name && Arc::ptr_eq(&a.matrix, &b.matrix),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::A => f.write_str("A"),
            Factor::B => f.write_str("B"),
            Factor::P => f.write_str("P"),
            Factor::AHalf => f.write_str("Ah"),
            Factor::L => f.write_str("L"),
            Factor::Aw => f.write_str("Aw"),
            Factor::Bw => f.write_str("Bw"),
            Factor::T(j) => write!(f, "T{j}"),
            Factor::Psq => f.write_str("Psq"),
            Factor::Custom(c) => write!(f, "{{{}}}", c.name),
        }
    }
}

impl Factor {
    fn realize<'a>(&'a self, d: &'a Discretization) -> Result<Cow<'a, Mat<f64>>> {
        let missing = || LabError::input(format!("factor {self} needs a weighted problem"));
        Ok(match self {
            Factor::A => Cow::Borrowed(&d.a),
            Factor::B => Cow::Borrowed(&d.b),
            Factor::P => Cow::Borrowed(&d.p),
            Factor::AHalf => Cow::Borrowed(&d.a_half),
            Factor::L => Cow::Borrowed(d.l.matrix()),
            Factor::Aw => Cow::Borrowed(d.a_w().ok_or_else(missing)?),
            Factor::Bw => Cow::Borrowed(d.b_w().ok_or_else(missing)?),
            Factor::T(j) => Cow::Owned(d.t_power(*j)?),
            Factor::Psq => Cow::Borrowed(&d.psq),
            Factor::Custom(c) => {
                let n = d.total_dim();
                if c.matrix.nrows() != n || c.matrix.ncols() != n {
                    return Err(LabError::Dimension { expected: n, got: c.matrix.nrows() });
                }
                Cow::Borrowed(c.matrix.as_ref())
            }
        })
    }
}

/// A product of factors whose trace is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceWord {
    factors: Vec<Factor>,
}

impl TraceWord {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(LabError::input("trace word is empty"));
        }
        if factors.len() > MAX_WORD_LENGTH {
            return Err(LabError::input(format!(
                "trace word has {} factors, at most {MAX_WORD_LENGTH} allowed",
                factors.len()
            )));
        }
        Ok(Self { factors })
    }

    /// Parses words such as `BA`, `P A A`, `(PA)^3 Psq A` or `A T4 A`.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let mut pos = 0;
        let factors = parse_sequence(&chars, &mut pos, 0)?;
        if pos != chars.len() {
            return Err(LabError::input(format!("unbalanced ')' in word '{text}'")));
        }
        Self::new(factors)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Cyclic rotation moving the first `k` factors to the end.
    pub fn rotated(&self, k: usize) -> Self {
        let mut f = self.factors.clone();
        let len = f.len();
        f.rotate_left(k % len);
        Self { factors: f }
    }

    pub fn reversed(&self) -> Self {
        let mut f = self.factors.clone();
        f.reverse();
        Self { factors: f }
    }
}

impl fmt::Display for TraceWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for TraceWord {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn parse_sequence(c: &[char], pos: &mut usize, depth: usize) -> Result<Vec<Factor>> {
    let mut out = Vec::new();
    while *pos < c.len() {
        let ch = c[*pos];
        if ch.is_whitespace() || ch == '*' || ch == '·' {
            *pos += 1;
            continue;
        }
        if ch == ')' {
            if depth == 0 {
                return Err(LabError::input("unbalanced ')' in trace word"));
            }
            return Ok(out);
        }
        let item = if ch == '(' {
            *pos += 1;
            let inner = parse_sequence(c, pos, depth + 1)?;
            if *pos >= c.len() || c[*pos] != ')' {
                return Err(LabError::input("missing ')' in trace word"));
            }
            *pos += 1;
            inner
        } else {
            vec![parse_factor(c, pos)?]
        };
        let reps = if *pos < c.len() && c[*pos] == '^' {
            *pos += 1;
            parse_int(c, pos)?
        } else {
            1
        };
        for _ in 0..reps {
            out.extend(item.iter().cloned());
            if out.len() > MAX_WORD_LENGTH {
                return Err(LabError::input(format!("trace word exceeds {MAX_WORD_LENGTH} factors")));
            }
        }
    }
    if depth > 0 {
        return Err(LabError::input("missing ')' in trace word"));
    }
    Ok(out)
}

fn parse_int(c: &[char], pos: &mut usize) -> Result<u32> {
    let start = *pos;
    while *pos < c.len() && c[*pos].is_ascii_digit() {
        *pos += 1;
    }
    let s: String = c[start..*pos].iter().collect();
    s.parse().map_err(|_| LabError::input(format!("expected an integer at position {start} of trace word")))
}

fn parse_factor(c: &[char], pos: &mut usize) -> Result<Factor> {
    let rest: String = c[*pos..].iter().collect();
    let table: [(&str, Factor); 10] = [
        ("A_half", Factor::AHalf),
        ("A_w", Factor::Aw),
        ("B_w", Factor::Bw),
        ("Psq", Factor::Psq),
        ("Ah", Factor::AHalf),
        ("Aw", Factor::Aw),
        ("Bw", Factor::Bw),
        ("A", Factor::A),
        ("B", Factor::B),
        ("P", Factor::P),
    ];
    for (tok, f) in table {
        if rest.starts_with(tok) {
            *pos += tok.chars().count();
            return Ok(f);
        }
    }
    match c[*pos] {
        'L' => {
            *pos += 1;
            Ok(Factor::L)
        }
        'T' => {
            *pos += 1;
            Ok(Factor::T(parse_int(c, pos)?))
        }
        other => Err(LabError::input(format!("unknown factor '{other}' in trace word"))),
    }
}

/// Trace of the left-to-right product of the realized factors.
pub fn trace_word(word: &TraceWord, d: &Discretization) -> Result<f64> {
    let mats: Vec<Cow<'_, Mat<f64>>> = word.factors.iter().map(|f| f.realize(d)).collect::<Result<_>>()?;
    Ok(trace_of_matrices(&mats.iter().map(|m| m.as_ref()).collect::<Vec<_>>()))
}

/// Trace of a word together with `‖F₁⋯F_{k−1}‖_F ‖F_k‖_F`, the Cauchy–Schwarz bound of the
/// final contraction and the natural scale of its roundoff.
pub fn trace_word_with_scale(word: &TraceWord, d: &Discretization) -> Result<(f64, f64)> {
    let mats: Vec<Cow<'_, Mat<f64>>> = word.factors.iter().map(|f| f.realize(d)).collect::<Result<_>>()?;
    let (last, init) = mats.split_last().expect("words are nonempty");
    if init.is_empty() {
        let t = linalg::trace(last);
        return Ok((t, t.abs().max(linalg::frobenius(last))));
    }
    let mut acc: Mat<f64> = init[0].as_ref().clone();
    for m in &init[1..] {
        acc = &acc * m.as_ref();
    }
    let t = linalg::trace_of_product(&acc, last);
    Ok((t, t.abs().max(linalg::frobenius(&acc) * linalg::frobenius(last))))
}

fn trace_of_matrices(mats: &[&Mat<f64>]) -> f64 {
    match mats {
        [] => 0.0,
        [only] => linalg::trace(only),
        [first, middle @ .., last] => {
            let mut acc: Mat<f64> = (*first).clone();
            for m in middle {
                acc = &acc * *m;
            }
            linalg::trace_of_product(&acc, last)
        }
    }
}

/// Status of the power-law fit behind an extrapolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Fitted,
    /// Successive differences are at roundoff level.
    Converged,
    NoFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    pub error: f64,
    pub exponent: Option<f64>,
    pub status: FitStatus,
}

/// Fits `v(N) = v∞ + c·N^{−q}` exactly through the last three points with `q ≥ MIN_EXPONENT`.
///
/// A non-monotone tail or a slower rate yields [`FitStatus::NoFit`] with the last value
/// and the largest successive difference as error.
pub fn extrapolate(sizes: &[usize], values: &[f64]) -> Result<Extrapolation> {
    problem::check_sizes(sizes)?;
    if sizes.len() != values.len() {
        return Err(LabError::Dimension { expected: sizes.len(), got: values.len() });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(LabError::numeric(format!("non-finite trace value {v}")));
    }
    let last = *values.last().expect("nonempty");
    let spread = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let no_fit = Extrapolation { value: last, error: spread, exponent: None, status: FitStatus::NoFit };
    if values.len() < 3 {
        return Ok(no_fit);
    }
    let k = values.len() - 3;
    let (n1, n2, n3) = (sizes[k] as f64, sizes[k + 1] as f64, sizes[k + 2] as f64);
    let (v1, v2, v3) = (values[k], values[k + 1], values[k + 2]);
    let (d1, d2) = (v2 - v1, v3 - v2);
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let roundoff = 64.0 * f64::EPSILON * scale;
    if d1.abs() <= roundoff && d2.abs() <= roundoff {
        return Ok(Extrapolation { value: last, error: d1.abs().max(d2.abs()), exponent: None, status: FitStatus::Converged });
    }
    if d1 * d2 <= 0.0 {
        return Ok(no_fit);
    }
    let rho = d1 / d2;
    let ratio = |q: f64| (n1.powf(-q) - n2.powf(-q)) / (n2.powf(-q) - n3.powf(-q));
    if rho <= ratio(MIN_EXPONENT) {
        return Ok(no_fit);
    }
    let q = if rho >= ratio(MAX_EXPONENT) {
        MAX_EXPONENT
    } else {
        let (mut lo, mut hi) = (MIN_EXPONENT, MAX_EXPONENT);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (x2, x3) = (n2.powf(-q), n3.powf(-q));
    let c = d2 / (x3 - x2);
    let value = v3 - c * x3;
    Ok(Extrapolation { value, error: (value - v3).abs(), exponent: Some(q), status: FitStatus::Fitted })
}

/// Outcome of a criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "satisfied (negative)")]
    SatisfiedNegative,
    #[serde(rename = "satisfied (positive)")]
    SatisfiedPositive,
    #[serde(rename = "inconclusive")]
    Inconclusive,
    #[serde(rename = "hypothesis violated")]
    HypothesisViolated,
}

impl Verdict {
    pub fn is_satisfied(self) -> bool {
        matches!(self, Verdict::SatisfiedNegative | Verdict::SatisfiedPositive)
    }

    /// Satisfied when the hypotheses hold, the sweep fits and `|value| > factor · error`.
    pub fn decide(hypotheses_hold: bool, ext: &Extrapolation, factor: f64) -> Self {
        if !hypotheses_hold {
            Verdict::HypothesisViolated
        } else if ext.status != FitStatus::NoFit && ext.value.abs() > factor * ext.error {
            if ext.value < 0.0 {
                Verdict::SatisfiedNegative
            } else {
                Verdict::SatisfiedPositive
            }
        } else {
            Verdict::Inconclusive
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SatisfiedNegative => "satisfied (negative)",
            Verdict::SatisfiedPositive => "satisfied (positive)",
            Verdict::Inconclusive => "inconclusive",
            Verdict::HypothesisViolated => "hypothesis violated",
        })
    }
}

/// A quantity tracked across a size sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceReport {
    pub word: String,
    pub sizes: Vec<usize>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub error: f64,
    pub exponent: Option<f64>,
    pub fit: FitStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

impl TraceReport {
    pub fn new(word: impl Into<String>, sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        let ext = extrapolate(sizes, &values)?;
        Ok(Self {
            word: word.into(),
            sizes: sizes.to_vec(),
            values,
            extrapolated: ext.value,
            error: ext.error,
            exponent: ext.exponent,
            fit: ext.status,
            verdict: None,
        })
    }

    pub fn extrapolation(&self) -> Extrapolation {
        Extrapolation { value: self.extrapolated, error: self.error, exponent: self.exponent, status: self.fit }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("reports are nonempty")
    }
}

/// Sweeps a word over `sizes`.
pub fn trace_sweep(problem: &Problem, word: &TraceWord, sizes: &[usize], opts: SweepOptions) -> Result<TraceReport> {
    let values = problem::map_sizes(problem, sizes, opts, |d| trace_word(word, d))?;
    TraceReport::new(word.to_string(), sizes, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Rank2,
    Rank3,
    Rank4,
}

impl CriterionKind {
    pub fn expression(self) -> &'static str {
        match self {
            CriterionKind::Rank2 => "Tr(2B^2 - A)",
            CriterionKind::Rank3 => "Tr(4B^3 - 3BA)",
            CriterionKind::Rank4 => "Tr(8B^4 - 8B^2A + A^2)",
        }
    }

    pub fn normalizer(self) -> &'static str {
        match self {
            CriterionKind::Rank2 => "Tr(A)",
            CriterionKind::Rank3 => "Tr(BA)",
            CriterionKind::Rank4 => "Tr(A^2)",
        }
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank2" | "2" => Ok(CriterionKind::Rank2),
            "rank3" | "3" => Ok(CriterionKind::Rank3),
            "rank4" | "4" => Ok(CriterionKind::Rank4),
            _ => Err(LabError::input(format!("unknown criterion '{s}' (expected rank2, rank3 or rank4)"))),
        }
    }
}

/// Value of a criterion and its natural normalizer at one size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriterionSample {
    pub value: f64,
    pub normalizer: f64,
}

/// `Tr(2B² − A)` for the pencil operators of `d`.
pub fn rank2_criterion(d: &Discretization) -> CriterionSample {
    let (a, b) = (d.pencil_a(), d.pencil_b());
    let tr_a = linalg::trace(a);
    CriterionSample { value: 2.0 * linalg::trace_of_product(b, b) - tr_a, normalizer: tr_a }
}

/// `Tr(4B³ − 3BA)`.
pub fn rank3_criterion(d: &Discretization) -> CriterionSample {
    let (a, b) = (d.pencil_a(), d.pencil_b());
    let b2 = b * b;
    let tr_ba = linalg::trace_of_product(b, a);
    CriterionSample { value: 4.0 * linalg::trace_of_product(&b2, b) - 3.0 * tr_ba, normalizer: tr_ba }
}

/// `Tr(8B⁴ − 8B²A + A²)`.
pub fn rank4_criterion(d: &Discretization) -> CriterionSample {
    let (a, b) = (d.pencil_a(), d.pencil_b());
    let b2 = b * b;
    let tr_a2 = linalg::trace_of_product(a, a);
    CriterionSample {
        value: 8.0 * linalg::trace_of_product(&b2, &b2) - 8.0 * linalg::trace_of_product(&b2, a) + tr_a2,
        normalizer: tr_a2,
    }
}

fn criterion_sample(kind: CriterionKind, d: &Discretization) -> CriterionSample {
    match kind {
        CriterionKind::Rank2 => rank2_criterion(d),
        CriterionKind::Rank3 => rank3_criterion(d),
        CriterionKind::Rank4 => rank4_criterion(d),
    }
}

/// Direction of the proven bound on the normalized criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
}

/// Bound on `criterion / normalizer` for `problem`.
pub fn normalized_bound(kind: CriterionKind, problem: &Problem) -> (f64, BoundKind) {
    let m = problem.degree() as f64;
    match (kind, &problem.kind) {
        (CriterionKind::Rank2, ProblemKind::Weighted { ell, .. }) => (2.0 * (*ell as f64 + 1.0) / (m + 1.0) - 1.0, BoundKind::Upper),
        (CriterionKind::Rank2, _) => (2.0 / (m + 1.0) - 1.0, BoundKind::Upper),
        (CriterionKind::Rank3, _) => (2.0 * (m + 2.0) / (m + 1.0) - 3.0, BoundKind::Upper),
        (CriterionKind::Rank4, _) => ((7.0 * m - 41.0) / (8.0 * (m + 1.0)), BoundKind::Lower),
    }
}

/// Symbol classes of the pencil coefficients `A` and `B`.
pub fn pencil_classes(problem: &Problem) -> Result<(SymbolClassSpec, SymbolClassSpec)> {
    match problem.kind {
        ProblemKind::Weighted { m, ell } => Ok((SymbolClassSpec::weighted_a(m, ell)?, SymbolClassSpec::weighted_b(m, ell)?)),
        ProblemKind::Standard { ref poly } => {
            let (n, m) = (poly.dim(), poly.degree());
            let a = SymbolClassSpec::inverse(n, m)?;
            let half = a.power(0.5);
            let b = half.compose(&SymbolClassSpec::polynomial(n, m, m)?)?.compose(&half)?;
            Ok((a, b))
        }
    }
}

/// Hypotheses under which the criterion is meaningful, and softer warnings.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub hold: bool,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn check_hypotheses(kind: CriterionKind, problem: &Problem) -> Result<HypothesisReport> {
    let mut rep = HypothesisReport::default();
    let (a, b) = pencil_classes(problem)?;
    let (n, m) = (problem.dim(), problem.degree());
    if !problem.is_elliptic()? {
        rep.failures.push("P is not elliptic on the unit sphere".into());
    }
    let needs: Vec<(bool, &str)> = match kind {
        CriterionKind::Rank2 => vec![
            (a.trace_class(), "A is not trace class"),
            (b.hilbert_schmidt(), "B is not Hilbert-Schmidt"),
        ],
        CriterionKind::Rank3 => vec![
            (a.power(1.5).trace_class(), "A^(3/2) is not trace class"),
            (b.power(3.0).trace_class(), "B^3 is not trace class"),
        ],
        CriterionKind::Rank4 => vec![
            (a.hilbert_schmidt(), "A is not Hilbert-Schmidt"),
            (b.power(2.0).hilbert_schmidt(), "B^2 is not Hilbert-Schmidt"),
        ],
    };
    rep.failures.extend(needs.into_iter().filter(|(ok, _)| !ok).map(|(_, msg)| msg.to_string()));
    match kind {
        CriterionKind::Rank3 => {
            if !problem.is_weighted() {
                match problem.sphere_sign()? {
                    SphereSign::Negative => {
                        return Err(LabError::input(
                            "rank-3 bound assumes P ≥ 0; P is negative on the unit sphere (use −P instead)",
                        ))
                    }
                    SphereSign::Mixed => rep.warnings.push("P changes sign; the rank-3 sign bound assumes P ≥ 0".into()),
                    SphereSign::Positive => {}
                }
            }
            if n != 2 || m < 4 {
                rep.warnings.push(format!("rank-3 sign bound is proven for n = 2, m ≥ 4 (here n = {n}, m = {m})"));
            }
        }
        CriterionKind::Rank4 => {
            if !(2..=3).contains(&n) || m < 6 {
                rep.warnings.push(format!("rank-4 sign bound is proven for n ≤ 3, m ≥ 6 (here n = {n}, m = {m})"));
            }
        }
        CriterionKind::Rank2 => {}
    }
    if problem.experimental {
        rep.warnings.push("experimental preset".into());
    }
    rep.hold = rep.failures.is_empty();
    Ok(rep)
}

/// `lhs ≤ rhs` checked per size and after extrapolation, with relative slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: TraceReport,
    pub rhs: TraceReport,
    pub slack: f64,
    pub holds_per_size: Vec<bool>,
    pub holds_extrapolated: bool,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>, lhs: TraceReport, rhs: TraceReport, slack: f64) -> Self {
        let ok = |l: f64, r: f64| l <= r + slack * r.abs();
        let holds_per_size = lhs.values.iter().zip(&rhs.values).map(|(&l, &r)| ok(l, r)).collect();
        let holds_extrapolated = ok(lhs.extrapolated, rhs.extrapolated);
        Self { name: name.into(), lhs, rhs, slack, holds_per_size, holds_extrapolated }
    }

    pub fn holds(&self) -> bool {
        self.holds_extrapolated && self.holds_per_size.iter().all(|&h| h)
    }
}

/// `lhs = rhs` tracked across a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: TraceReport,
    pub rhs: TraceReport,
    pub rel_errors: Vec<f64>,
    pub extrapolated_rel_error: f64,
    pub monotone_decreasing: bool,
}

impl IdentityCheck {
    pub fn new(name: impl Into<String>, lhs: TraceReport, rhs: TraceReport) -> Self {
        let rel = |l: f64, r: f64| (l - r).abs() / r.abs();
        let rel_errors: Vec<f64> = lhs.values.iter().zip(&rhs.values).map(|(&l, &r)| rel(l, r)).collect();
        let monotone_decreasing = rel_errors.windows(2).all(|w| w[1] < w[0]);
        let extrapolated_rel_error = rel(lhs.extrapolated, rhs.extrapolated);
        Self { name: name.into(), lhs, rhs, rel_errors, extrapolated_rel_error, monotone_decreasing }
    }
}

/// Full report of a criterion over a size sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub criterion: CriterionKind,
    pub problem: String,
    pub n: usize,
    pub m: u32,
    pub value: TraceReport,
    pub normalizer: TraceReport,
    pub ratio: TraceReport,
    pub bound: f64,
    pub bound_kind: BoundKind,
    /// Whether the extrapolated ratio respects the bound within its error bar.
    pub bound_holds: bool,
    pub hypotheses: HypothesisReport,
    pub verdict: Verdict,
    pub inequalities: Vec<InequalityCheck>,
    pub identities: Vec<IdentityCheck>,
}

#[derive(Clone, Copy, Debug)]
struct SizeSample {
    crit: CriterionSample,
    extra: [f64; 4],
}

/// Runs a criterion and its companion checks over `sizes`.
pub fn run_criterion(problem: &Problem, kind: CriterionKind, sizes: &[usize], opts: SweepOptions) -> Result<CriterionReport> {
    let hypotheses = check_hypotheses(kind, problem)?;
    let m = problem.degree();
    let mf = m as f64;
    let standard = !problem.is_weighted();
    let samples = problem::map_sizes(problem, sizes, opts, |d| {
        let crit = criterion_sample(kind, d);
        let mut extra = [0.0; 4];
        if standard {
            match kind {
                CriterionKind::Rank2 => {
                    extra[0] = linalg::trace_of_product(&d.b, &d.b);
                    if d.basis.dim() == 1 {
                        extra[1] = derivative_identity_sample(d).lhs;
                    }
                }
                CriterionKind::Rank3 => {
                    let s = rank3_companions(d);
                    extra = [s.pa_cubed, s.pa_squared, s.lhs_differentiated, 0.0];
                }
                CriterionKind::Rank4 => {
                    let b2 = &d.b * &d.b;
                    extra[0] = linalg::trace_of_product(&b2, &d.a);
                }
            }
        }
        Ok(SizeSample { crit, extra })
    })?;
    let col = |f: &dyn Fn(&SizeSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let crit = |s: &SizeSample| s.crit;
    let value = TraceReport::new(kind.expression(), sizes, col(&|s| crit(s).value))?;
    let normalizer = TraceReport::new(kind.normalizer(), sizes, col(&|s| crit(s).normalizer))?;
    let ratio = TraceReport::new(
        format!("{} / {}", kind.expression(), kind.normalizer()),
        sizes,
        col(&|s| crit(s).value / crit(s).normalizer),
    )?;
    let (bound, bound_kind) = normalized_bound(kind, problem);
    let bound_holds = match bound_kind {
        BoundKind::Upper => ratio.extrapolated <= bound + ratio.error,
        BoundKind::Lower => ratio.extrapolated >= bound - ratio.error,
    };
    let mut inequalities = Vec::new();
    let mut identities = Vec::new();
    if standard {
        match kind {
            CriterionKind::Rank2 => {
                let tr_a = col(&|s| crit(s).normalizer);
                inequalities.push(InequalityCheck::new(
                    "Tr(B^2) <= Tr(A)/(m+1)",
                    TraceReport::new("Tr(B^2)", sizes, col(&|s| s.extra[0]))?,
                    TraceReport::new("Tr(A)/(m+1)", sizes, tr_a.iter().map(|t| t / (mf + 1.0)).collect())?,
                    0.0,
                ));
                if problem.dim() == 1 {
                    identities.push(IdentityCheck::new(
                        "Tr(A P^2 A) = Tr(A)/(m+1)",
                        TraceReport::new("Tr(A Psq A)", sizes, col(&|s| s.extra[1]))?,
                        TraceReport::new("Tr(A)/(m+1)", sizes, tr_a.iter().map(|t| t / (mf + 1.0)).collect())?,
                    ));
                }
            }
            CriterionKind::Rank3 => {
                let c = 0.5 * (mf + 2.0) / (mf + 1.0);
                inequalities.push(InequalityCheck::new(
                    "Tr((PA)^3) <= (m+2)/(2(m+1)) Tr(PA^2)",
                    TraceReport::new("Tr((PA)^3)", sizes, col(&|s| s.extra[0]))?,
                    TraceReport::new("(m+2)/(2(m+1)) Tr(PA^2)", sizes, col(&|s| c * s.extra[1]))?,
                    1e-3,
                ));
                identities.push(IdentityCheck::new(
                    "Tr((PA)^3 P^2 A) = (m+2)/(2(m+1)) Tr((PA)^3)",
                    TraceReport::new("Tr((PA)^3 Psq A)", sizes, col(&|s| s.extra[2]))?,
                    TraceReport::new("(m+2)/(2(m+1)) Tr((PA)^3)", sizes, col(&|s| c * s.extra[0]))?,
                ));
            }
            CriterionKind::Rank4 => {
                inequalities.push(InequalityCheck::new(
                    "Tr(B^2 A) <= Tr(A^2)/(m+1)",
                    TraceReport::new("Tr(B^2 A)", sizes, col(&|s| s.extra[0]))?,
                    TraceReport::new("Tr(A^2)/(m+1)", sizes, col(&|s| crit(s).normalizer / (mf + 1.0)))?,
                    1e-3,
                ));
            }
        }
    }
    let verdict = Verdict::decide(hypotheses.hold, &value.extrapolation(), VERDICT_FACTOR);
    let mut value = value;
    value.verdict = Some(verdict);
    Ok(CriterionReport {
        criterion: kind,
        problem: problem.name.clone(),
        n: problem.dim(),
        m,
        value,
        normalizer,
        ratio,
        bound,
        bound_kind,
        bound_holds,
        hypotheses,
        verdict,
        inequalities,
        identities,
    })
}

/// Traces entering the rank-3 companion statements at one size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank3Companions {
    /// `Tr((PA)³)`.
    pub pa_cubed: f64,
    /// `Tr(PA²)`.
    pub pa_squared: f64,
    /// `Tr((PA)³ P² A)` with the Galerkin matrix of `P²`.
    pub lhs_differentiated: f64,
}

pub fn rank3_companions(d: &Discretization) -> Rank3Companions {
    let pa = &d.p * &d.a;
    let pa2 = &pa * &pa;
    let pa3 = &pa2 * &pa;
    let psq_a = &d.psq * &d.a;
    Rank3Companions {
        pa_cubed: linalg::trace(&pa3),
        pa_squared: linalg::trace_of_product(&pa, &d.a),
        lhs_differentiated: linalg::trace_of_product(&pa3, &psq_a),
    }
}

/// Both sides of an identity at one size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentitySample {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

impl IdentitySample {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, rel_error: (lhs - rhs).abs() / rhs.abs() }
    }
}

/// `Tr(A P² A)` against `Tr(A)/(m+1)`.
pub fn derivative_identity_sample(d: &Discretization) -> IdentitySample {
    let a_psq = &d.a * &d.psq;
    IdentitySample::new(linalg::trace_of_product(&a_psq, &d.a), linalg::trace(&d.a) / (d.degree as f64 + 1.0))
}

/// `Tr((PA)³ P² A)` against `(m+2)/(2(m+1)) Tr((PA)³)`.
pub fn differentiated_identity_sample(d: &Discretization) -> IdentitySample {
    let c = rank3_companions(d);
    let m = d.degree as f64;
    IdentitySample::new(c.lhs_differentiated, 0.5 * (m + 2.0) / (m + 1.0) * c.pa_cubed)
}

/// `Tr A_γ^ℓ` against `γ^{−ℓ/(m+1)} Tr A^ℓ`.
pub fn scaling_identity_check(d: &Discretization, ell: u32, gamma: f64, mode: ScalingMode) -> Result<IdentitySample> {
    if ell == 0 {
        return Err(LabError::input("trace power must be at least 1"));
    }
    let class = SymbolClassSpec::inverse(d.basis.dim(), d.degree)?.power(ell as f64);
    if !class.trace_class() {
        return Err(LabError::input(format!("A^{ell} is not trace class for n = {}, m = {}", d.basis.dim(), d.degree)));
    }
    let a_gamma = d.scaled_a(gamma, mode)?;
    let power_trace = |a: &Mat<f64>| trace_of_matrices(&vec![a; ell as usize]);
    let lhs = power_trace(&a_gamma);
    let rhs = gamma.powf(-(ell as f64) / (d.degree as f64 + 1.0)) * power_trace(&d.a);
    if gamma == 1.0 && mode == ScalingMode::Isospectral {
        return Ok(IdentitySample { lhs, rhs, rel_error: 0.0 });
    }
    Ok(IdentitySample::new(lhs, rhs))
}

/// Logarithmic γ-derivative of `Tr((P A_γ)³)` at `γ = 1` on the fixed basis, and the
/// exponent `−(3/2)(m+2)/(m+1)` it should approach.
pub fn gamma_exponent_check(d: &Discretization, h: f64) -> Result<(f64, f64)> {
    let cube = |g: f64| -> Result<f64> {
        let a = d.scaled_a(g, ScalingMode::FixedBasis)?;
        let pa = &d.p * &a;
        let pa2 = &pa * &pa;
        Ok(linalg::trace_of_product(&pa2, &pa))
    };
    let (up, down) = (cube(1.0 + h)?, cube(1.0 - h)?);
    let measured = (up.ln() - down.ln()) / ((1.0 + h).ln() - (1.0 - h).ln());
    let m = d.degree as f64;
    Ok((measured, -1.5 * (m + 2.0) / (m + 1.0)))
}

/// `Tr(C Dᵀ) ≤ ‖C‖_HS ‖D‖_HS`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CauchySchwarz {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn cauchy_schwarz_check(c: &Mat<f64>, d: &Mat<f64>) -> Result<CauchySchwarz> {
    if c.nrows() != d.nrows() || c.ncols() != d.ncols() {
        return Err(LabError::Dimension { expected: c.nrows(), got: d.nrows() });
    }
    let mut lhs = 0.0;
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            lhs += c[(i, j)] * d[(i, j)];
        }
    }
    let rhs = linalg::frobenius(c) * linalg::frobenius(d);
    Ok(CauchySchwarz { lhs, rhs, holds: lhs <= rhs + 1e-12 * rhs.max(1.0) })
}

/// `Tr(CCᵀ) − Tr(C²)` for `C = P·A`; nonnegative by Cauchy–Schwarz.
pub fn cauchy_schwarz_gap(d: &Discretization) -> f64 {
    let c = &d.p * &d.a;
    linalg::frobenius(&c).powi(2) - linalg::trace_of_product(&c, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TensorBasis;
    use crate::problem::AlphaRule;
    use proptest::prelude::*;

    fn harmonic(n: usize) -> Discretization {
        let p = Problem::from_preset("monomial:1").unwrap().with_alpha_rule(AlphaRule::Fixed(1.0));
        Discretization::new(&p, TensorBasis::uniform(1, n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn parser_round_trips_and_expands() {
        let w = TraceWord::parse("(PA)^3 Psq A").unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w.to_string(), "P A P A P A Psq A");
        assert_eq!(TraceWord::parse(&w.to_string()).unwrap(), w);
        let w = TraceWord::parse("AT4A").unwrap();
        assert_eq!(w.factors(), &[Factor::A, Factor::T(4), Factor::A]);
        assert_eq!(TraceWord::parse("A_half Ah Aw A_w Bw B_w L").unwrap().len(), 7);
        assert_eq!(TraceWord::parse("B^2A").unwrap().factors(), &[Factor::B, Factor::B, Factor::A]);
        for bad in ["", "(AB", "AB)", "Q", "T", "A^13", "(AB)^7"] {
            assert!(TraceWord::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn harmonic_trace_of_a() {
        let d = harmonic(30);
        let w = TraceWord::parse("A").unwrap();
        let want: f64 = (0..30).map(|j| 1.0 / (2 * j + 1) as f64).sum();
        assert!((trace_word(&w, &d).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn trace_identities_from_definitions() {
        let d = Problem::from_preset("monomial:2").unwrap().discretize(60).unwrap();
        let t = |s: &str| trace_word(&TraceWord::parse(s).unwrap(), &d).unwrap();
        let (ba, paa) = (t("BA"), t("PAA"));
        assert!((ba - paa).abs() < 1e-10 * paa.abs());
        let (b3, pa3) = (t("BBB"), t("(PA)^3"));
        assert!((b3 - pa3).abs() < 1e-10 * pa3.abs().max(1e-300));
    }

    #[test]
    fn weighted_factors_need_weighted_problem() {
        let d = harmonic(10);
        assert!(trace_word(&TraceWord::parse("Aw").unwrap(), &d).is_err());
        let wrong = CustomFactor { name: "X".into(), matrix: Arc::new(linalg::identity(5)) };
        let w = TraceWord::new(vec![Factor::Custom(wrong)]).unwrap();
        assert!(matches!(trace_word(&w, &d), Err(LabError::Dimension { .. })));
    }

    #[test]
    fn extrapolation_examples() {
        let sizes = [100, 200, 400];
        let vals: Vec<f64> = sizes.iter().map(|&n| 2.0 + 1.0 / n as f64).collect();
        let e = extrapolate(&sizes, &vals).unwrap();
        assert_eq!(e.status, FitStatus::Fitted);
        assert!((e.value - 2.0).abs() < 1e-9);
        assert!((e.exponent.unwrap() - 1.0).abs() < 1e-6);

        let e = extrapolate(&sizes, &[3.5, 3.5, 3.5]).unwrap();
        assert_eq!((e.value, e.error), (3.5, 0.0));

        let ns = [64, 128, 256, 512];
        let harm: Vec<f64> = ns.iter().map(|&n| (0..n).map(|j| 1.0 / (2 * j + 1) as f64).sum()).collect();
        assert_eq!(extrapolate(&ns, &harm).unwrap().status, FitStatus::NoFit);

        let e = extrapolate(&sizes, &[1.0, 2.0, 1.5]).unwrap();
        assert_eq!(e.status, FitStatus::NoFit);
        assert_eq!((e.value, e.error), (1.5, 1.0));

        let odd = [24, 32, 40];
        let vals: Vec<f64> = odd.iter().map(|&n| -0.4 + 0.7 * (n as f64).powf(-0.6)).collect();
        let e = extrapolate(&odd, &vals).unwrap();
        assert!((e.value + 0.4).abs() < 1e-10);

        assert!(extrapolate(&[3, 2, 5], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn harmonic_rank2_grows_without_bound() {
        let sizes = [64, 128, 256, 512];
        let vals: Vec<f64> = sizes.iter().map(|&n| linalg::trace(&harmonic(n).a)).collect();
        for w in vals.windows(2) {
            assert!(w[1] - w[0] > 0.3);
        }
        let (a, _) = pencil_classes(&Problem::from_preset("monomial:1").unwrap()).unwrap();
        assert!(!a.trace_class());
    }

    #[test]
    fn hypotheses() {
        let p = Problem::from_preset("monomial:3").unwrap();
        let h = check_hypotheses(CriterionKind::Rank3, &p).unwrap();
        assert!(h.hold);
        assert!(h.warnings.iter().any(|w| w.contains("changes sign")));
        let neg = Problem::standard("neg", crate::polynomial::HomogeneousPolynomial::new(1, [(vec![2], -1.0)]).unwrap());
        assert!(check_hypotheses(CriterionKind::Rank3, &neg).unwrap_err().is_input_error());
        let h = check_hypotheses(CriterionKind::Rank2, &Problem::from_preset("hoshiro:3:1").unwrap()).unwrap();
        assert!(!h.hold);
        let h = check_hypotheses(CriterionKind::Rank4, &Problem::from_preset("monomial:6").unwrap()).unwrap();
        assert!(h.hold && !h.warnings.is_empty());
        let h = check_hypotheses(CriterionKind::Rank2, &Problem::from_preset("remark63:2").unwrap()).unwrap();
        assert!(!h.hold);
    }

    #[test]
    fn verdict_rules() {
        let fitted = |v: f64, e: f64| Extrapolation { value: v, error: e, exponent: Some(1.0), status: FitStatus::Fitted };
        assert_eq!(Verdict::decide(true, &fitted(-1.0, 0.1), VERDICT_FACTOR), Verdict::SatisfiedNegative);
        assert_eq!(Verdict::decide(true, &fitted(1.0, 0.1), VERDICT_FACTOR), Verdict::SatisfiedPositive);
        assert_eq!(Verdict::decide(true, &fitted(1.0, 0.3), VERDICT_FACTOR), Verdict::Inconclusive);
        assert_eq!(Verdict::decide(false, &fitted(-1.0, 0.0), VERDICT_FACTOR), Verdict::HypothesisViolated);
        let nofit = Extrapolation { status: FitStatus::NoFit, ..fitted(-1.0, 0.0) };
        assert_eq!(Verdict::decide(true, &nofit, VERDICT_FACTOR), Verdict::Inconclusive);
        assert_eq!(serde_json::to_string(&Verdict::SatisfiedNegative).unwrap(), "\"satisfied (negative)\"");
    }

    #[test]
    fn isospectral_scaling_exact_and_identity_at_one() {
        let d = Problem::from_preset("monomial:2").unwrap().discretize(80).unwrap();
        for gamma in [0.5, 2.0, 10.0] {
            for ell in [1, 2] {
                let s = scaling_identity_check(&d, ell, gamma, ScalingMode::Isospectral).unwrap();
                assert!(s.rel_error < 1e-12, "γ={gamma} ℓ={ell}: {}", s.rel_error);
            }
        }
        assert_eq!(scaling_identity_check(&d, 1, 1.0, ScalingMode::Isospectral).unwrap().rel_error, 0.0);
        assert!(scaling_identity_check(&d, 0, 2.0, ScalingMode::Isospectral).is_err());
    }

    #[test]
    fn gamma_exponent_on_fixed_basis() {
        let d = Problem::from_preset("monomial:2").unwrap().discretize(200).unwrap();
        let (measured, want) = gamma_exponent_check(&d, 1e-3).unwrap();
        assert!((measured - want).abs() < 1e-2, "{measured} vs {want}");
    }

    #[test]
    fn cauchy_schwarz_cases() {
        let c = Mat::from_fn(6, 6, |i, j| (i as f64 - 2.0 * j as f64).sin());
        let eq = cauchy_schwarz_check(&c, &c).unwrap();
        assert!(eq.holds && (eq.lhs - eq.rhs).abs() < 1e-12 * eq.rhs);
        let d = Problem::from_preset("monomial:2").unwrap().discretize(50).unwrap();
        let pa = &d.p * &d.a;
        let cs = cauchy_schwarz_check(&pa, &pa.transpose().to_owned()).unwrap();
        assert!(cs.holds);
        assert!(cauchy_schwarz_gap(&d) >= 0.0);
        assert!(cauchy_schwarz_check(&c, &linalg::identity(3)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn cauchy_schwarz_random_pairs(seed in any::<u64>()) {
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let c = Mat::from_fn(30, 30, |_, _| next());
            let d = Mat::from_fn(30, 30, |_, _| next());
            prop_assert!(cauchy_schwarz_check(&c, &d).unwrap().holds);
        }

        #[test]
        fn gram_words_are_nonnegative(seed in any::<u64>()) {
            let d = harmonic(12);
            let mut s = seed;
            let c = Mat::from_fn(12, 12, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            let ct = c.transpose().to_owned();
            let w = TraceWord::new(vec![
                Factor::Custom(CustomFactor { name: "C".into(), matrix: Arc::new(c) }),
                Factor::Custom(CustomFactor { name: "Ct".into(), matrix: Arc::new(ct) }),
            ]).unwrap();
            prop_assert!(trace_word(&w, &d).unwrap() >= 0.0);
        }

        #[test]
        fn extrapolation_recovers_power_laws(v in -5.0f64..5.0, c in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0], q in 0.3f64..3.0) {
            let sizes = [100, 200, 400];
            let vals: Vec<f64> = sizes.iter().map(|&n| v + c * (n as f64).powf(-q)).collect();
            let e = extrapolate(&sizes, &vals).unwrap();
            prop_assert_eq!(e.status, FitStatus::Fitted);
            prop_assert!((e.value - v).abs() < 1e-8 * (1.0 + v.abs()) + 1e-6 * c.abs() * 100f64.powf(-q));
        }
    }
}
