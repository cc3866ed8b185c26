//! The acceptance suite: ten end-to-end checks with fixed tolerances and runtime budgets.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::operators::ScalingMode;
use crate::pencil::{self, PencilOptions};
use crate::polynomial::HomogeneousPolynomial;
use crate::problem::{Problem, SweepOptions, PRESETS};
use crate::symbolcalc::{self, QuadratureOptions, SymbolClassSpec};
use crate::traces::{self, CriterionKind, FitStatus, TraceWord, Verdict};

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2}: {} ({:.1}s / {:.0}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.budget_seconds
        )?;
        if !self.details.is_empty() {
            write!(f, " :: {}", self.details.join("; "))?;
        }
        Ok(())
    }
}

/// Collects individual checks of one criterion.
struct Ledger {
    ok: bool,
    details: Vec<String>,
}

impl Ledger {
    fn new() -> Self {
        Self { ok: true, details: Vec::new() }
    }

    fn check(&mut self, cond: bool, msg: String) {
        if !cond {
            self.ok = false;
            self.details.push(format!("FAILED {msg}"));
        } else {
            self.details.push(msg);
        }
    }
}

pub const TITLES: [&str; 10] = [
    "rank-2 ratio and derivative identity (1D monomials)",
    "weighted rank-2 bound",
    "rank-3 sign, cubic inequality and differentiated identity (2D)",
    "rank-4 lower bound (2D)",
    "certified pencil eigenvalues",
    "harmonic negative control",
    "exact finite-dimensional identities",
    "scaling laws",
    "Schatten predictor table",
    "Hilbert-Schmidt symbol estimate",
];

const BUDGETS: [f64; 10] = [60.0, 30.0, 240.0, 240.0, 300.0, 30.0, 60.0, 60.0, 1.0, 10.0];

fn run(id: u8, opts: SweepOptions, body: impl FnOnce(&mut Ledger, SweepOptions) -> Result<()>) -> Outcome {
    let start = Instant::now();
    let mut ledger = Ledger::new();
    if let Err(e) = body(&mut ledger, opts) {
        ledger.ok = false;
        ledger.details.push(format!("error: {e}"));
    }
    let elapsed = start.elapsed();
    let budget = Duration::from_secs_f64(BUDGETS[id as usize - 1]);
    if elapsed > budget {
        ledger.ok = false;
        ledger.details.push(format!("FAILED runtime {:.1}s exceeds budget", elapsed.as_secs_f64()));
    }
    Outcome {
        id,
        title: TITLES[id as usize - 1],
        passed: ledger.ok,
        details: ledger.details,
        seconds: elapsed.as_secs_f64(),
        budget_seconds: budget.as_secs_f64(),
    }
}

/// Runs one criterion by number (1–10).
pub fn run_criterion(id: u8, opts: SweepOptions) -> Option<Outcome> {
    let body: fn(&mut Ledger, SweepOptions) -> Result<()> = match id {
        1 => rank2,
        2 => weighted,
        3 => rank3,
        4 => rank4,
        5 => pencil_existence,
        6 => negative_control,
        7 => exact_identities,
        8 => scaling,
        9 => schatten_table,
        10 => hs_estimate,
        _ => return None,
    };
    Some(run(id, opts, body))
}

/// Rank-4 checks on the three-dimensional radial problem; informative, not part of the gate.
pub fn run_slow_rank4(opts: SweepOptions) -> Outcome {
    let start = Instant::now();
    let mut ledger = Ledger::new();
    if let Err(e) = rank4_on(&mut ledger, "radial:3:3", &[], opts) {
        ledger.ok = false;
        ledger.details.push(format!("error: {e}"));
    }
    let seconds = start.elapsed().as_secs_f64();
    if seconds > SLOW_BUDGET {
        ledger.ok = false;
        ledger.details.push(format!("FAILED runtime {seconds:.1}s exceeds budget"));
    }
    Outcome {
        id: 4,
        title: "rank-4 lower bound (3D, not gating)",
        passed: ledger.ok,
        details: ledger.details,
        seconds,
        budget_seconds: SLOW_BUDGET,
    }
}

const SLOW_BUDGET: f64 = 1800.0;

pub fn run_all(opts: SweepOptions) -> Vec<Outcome> {
    (1..=10).filter_map(|id| run_criterion(id, opts)).collect()
}

const SIZES_1D: [usize; 3] = [100, 200, 400];
const SIZES_2D: [usize; 3] = [24, 32, 40];
/// Per-axis size at which the 2D eigenfunction is recovered after certification.
const REFINED_2D: usize = 48;

fn rank2(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    for m in 2..=6u32 {
        let p = Problem::from_preset(&format!("monomial:{m}"))?;
        let r = traces::run_criterion(&p, CriterionKind::Rank2, &SIZES_1D, opts)?;
        l.check(
            r.ratio.extrapolated <= r.bound + 1e-3,
            format!("m={m} ratio {:.5}±{:.1e} <= {:.5}", r.ratio.extrapolated, r.ratio.error, r.bound),
        );
        let id = &r.identities[0];
        l.check(
            id.extrapolated_rel_error < 1e-4,
            format!("m={m} derivative identity rel {:.1e}", id.extrapolated_rel_error),
        );
    }
    Ok(())
}

fn weighted(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    for (m, ell) in [(5, 1), (7, 2)] {
        let p = Problem::weighted(m, ell)?;
        let r = traces::run_criterion(&p, CriterionKind::Rank2, &SIZES_1D, opts)?;
        l.check(r.hypotheses.hold, format!("(m,l)=({m},{ell}) hypotheses"));
        l.check(
            r.ratio.extrapolated + r.ratio.error <= r.bound + 1e-3,
            format!("(m,l)=({m},{ell}) ratio {:.5}±{:.1e} <= {:.5}", r.ratio.extrapolated, r.ratio.error, r.bound),
        );
    }
    Ok(())
}

fn rank3(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    let p = Problem::from_preset("radial:2:2")?;
    let r = traces::run_criterion(&p, CriterionKind::Rank3, &SIZES_2D, opts)?;
    let v = &r.value;
    l.check(
        v.extrapolated < 0.0 && v.extrapolated.abs() > 5.0 * v.error && r.verdict == Verdict::SatisfiedNegative,
        format!("value {:.4}±{:.1e} ({})", v.extrapolated, v.error, r.verdict),
    );
    let ineq = &r.inequalities[0];
    l.check(
        ineq.holds(),
        format!("cubic inequality {:.4} <= {:.4}", ineq.lhs.extrapolated, ineq.rhs.extrapolated),
    );
    let id = &r.identities[0];
    l.check(
        id.monotone_decreasing,
        format!("differentiated identity rel errors {}", fmt_seq(&id.rel_errors)),
    );
    Ok(())
}

fn rank4(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    rank4_on(l, "radial:2:3", &SIZES_2D, opts)
}

/// Empty `sizes` selects the preset's default sweep.
fn rank4_on(l: &mut Ledger, preset: &str, sizes: &[usize], opts: SweepOptions) -> Result<()> {
    let p = Problem::from_preset(preset)?;
    let sizes = if sizes.is_empty() { p.default_sizes() } else { sizes.to_vec() };
    let r = traces::run_criterion(&p, CriterionKind::Rank4, &sizes, opts)?;
    let v = &r.value;
    let floor = r.normalizer.extrapolated / 56.0;
    l.check(
        v.extrapolated >= floor - 5.0 * v.error && v.extrapolated > 0.0 && r.verdict == Verdict::SatisfiedPositive,
        format!("value {:.4}±{:.1e} >= {:.4} ({})", v.extrapolated, v.error, floor, r.verdict),
    );
    let ineq = &r.inequalities[0];
    l.check(
        ineq.holds(),
        format!("Tr(B^2 A) {:.4} <= {:.4}", ineq.lhs.extrapolated, ineq.rhs.extrapolated),
    );
    Ok(())
}

fn pencil_existence(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    for m in [2u32, 3] {
        let p = Problem::from_preset(&format!("monomial:{m}"))?;
        let po = PencilOptions { sweep: opts, ..Default::default() };
        let rep = pencil::stability_study(&p, &SIZES_1D, &po)?;
        let count = rep.certified().count();
        l.check(count >= 1, format!("m={m}: {count} certified"));
        if let Some((e, pair)) = rep.flagship() {
            let d = p.discretize(*SIZES_1D.last().expect("nonempty"))?;
            let f = pencil::recover_physical_eigenfunction(pair, &p, &d)?;
            l.check(
                f.direct_residual < 1e-4 && f.tail_fraction < 1e-6,
                format!(
                    "m={m} λ={:.6}{:+.6}i direct {:.1e} tail {:.1e}",
                    e.lambda_re, e.lambda_im, f.direct_residual, f.tail_fraction
                ),
            );
        }
    }
    let p = Problem::from_preset("radial:2:2")?;
    let po = PencilOptions { residual_tol: 1e-4, sweep: opts, ..Default::default() };
    let rep = pencil::stability_study(&p, &SIZES_2D, &po)?;
    let count = rep.certified().count();
    l.check(count >= 1, format!("2D m=4: {count} certified"));
    if let Some((e, _)) = rep.flagship() {
        let f = pencil::refine_eigenfunction(&p, e.lambda(), REFINED_2D, &po)?;
        l.check(
            f.direct_residual < 1e-4 && f.tail_fraction < 1e-6,
            format!(
                "2D λ={:.6}{:+.6}i f at N={REFINED_2D}: direct {:.1e} tail {:.1e}",
                e.lambda_re, e.lambda_im, f.direct_residual, f.tail_fraction
            ),
        );
    }
    Ok(())
}

fn negative_control(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    let p = Problem::from_preset("monomial:1")?;
    let rep = pencil::stability_study(&p, &SIZES_1D, &PencilOptions { sweep: opts, ..Default::default() })?;
    let count = rep.certified().count();
    l.check(count == 0, format!("{count} certified"));
    let tr_a = traces::trace_sweep(&p, &TraceWord::parse("A")?, &SIZES_1D, opts)?;
    l.check(tr_a.fit == FitStatus::NoFit, format!("Tr A {} fit={:?}", fmt_seq(&tr_a.values), tr_a.fit));
    let tr_a2 = traces::trace_sweep(&p, &TraceWord::parse("AA")?, &SIZES_1D, opts)?;
    let target = PI * PI / 8.0;
    l.check(
        (tr_a2.extrapolated - target).abs() < 1e-6,
        format!("Tr A^2 -> {:.9} (π²/8 = {target:.9})", tr_a2.extrapolated),
    );
    Ok(())
}

/// Sizes small enough for dense eigensolves of every preset.
fn identity_size(problem: &Problem) -> usize {
    match problem.dim() {
        1 => 60,
        2 => 12,
        _ => 6,
    }
}

fn exact_identities(l: &mut Ledger, opts: SweepOptions) -> Result<()> {
    let words = ["BA", "PAA", "(PA)^3", "BBA", "A Ah B P", "Psq A A B", "(PA)^3 Psq A", "B Ah A"];
    let weighted_words = ["Aw Bw", "Bw Bw Aw", "Aw Ah Bw P"];
    let check = |name: &&str| -> Result<(String, f64, f64, f64, f64)> {
        let p = Problem::from_preset(name)?;
        let d = p.discretize(identity_size(&p))?;
        let mut cyc: f64 = 0.0;
        let mut rev: f64 = 0.0;
        let list = words.iter().chain(if p.is_weighted() { &weighted_words[..] } else { &[][..] });
        for w in list {
            let word = TraceWord::parse(w)?;
            let (t0, s0) = traces::trace_word_with_scale(&word, &d)?;
            for k in 1..word.len() {
                let (t, s) = traces::trace_word_with_scale(&word.rotated(k), &d)?;
                cyc = cyc.max((t - t0).abs() / s.max(s0));
            }
            let (t, s) = traces::trace_word_with_scale(&word.reversed(), &d)?;
            rev = rev.max((t - t0).abs() / s.max(s0));
        }
        let spec = pencil::spectrum_identities(&d)?;
        let sums = spec.sum_mu_rel_error.max(spec.sum_mu2_rel_error).max(spec.imaginary_residue);
        Ok((name.to_string(), cyc, rev, spec.conjugate_pairing, sums))
    };
    let results: Vec<_> = if opts.serial {
        PRESETS.iter().map(check).collect::<Result<_>>()?
    } else {
        PRESETS.par_iter().map(check).collect::<Result<_>>()?
    };
    for (name, cyc, rev, conj, sums) in results {
        l.check(
            cyc < 1e-8 && rev < 1e-8 && conj < 1e-8 && sums < 1e-8,
            format!("{name}: cyc {cyc:.0e} rev {rev:.0e} conj {conj:.0e} sums {sums:.0e}"),
        );
    }
    Ok(())
}

fn scaling(l: &mut Ledger, _opts: SweepOptions) -> Result<()> {
    let p = Problem::from_preset("monomial:2")?;
    let d = p.discretize(400)?;
    let mut worst: f64 = 0.0;
    for gamma in [0.5, 2.0, 10.0] {
        for ell in [1, 2] {
            worst = worst.max(traces::scaling_identity_check(&d, ell, gamma, ScalingMode::Isospectral)?.rel_error);
        }
    }
    l.check(worst < 1e-12, format!("isospectral worst rel {worst:.1e}"));
    for gamma in [0.5, 1.5, 2.0] {
        for ell in [1, 2] {
            let s = traces::scaling_identity_check(&d, ell, gamma, ScalingMode::FixedBasis)?;
            l.check(s.rel_error < 1e-3, format!("fixed basis γ={gamma} ℓ={ell} rel {:.1e}", s.rel_error));
        }
    }
    Ok(())
}

/// `(n, m, p, member)` with membership worked out by hand from `−2p + (1 + 1/m)n < 0`.
pub const SCHATTEN_TABLE: [(usize, u32, f64, bool); 12] = [
    (1, 1, 1.0, false),
    (1, 2, 1.0, true),
    (1, 3, 1.0, true),
    (2, 2, 1.0, false),
    (2, 4, 1.0, false),
    (2, 4, 2.0, true),
    (2, 2, 2.0, true),
    (3, 2, 2.0, false),
    (3, 3, 2.0, false),
    (3, 4, 2.0, true),
    (4, 6, 2.0, false),
    (3, 6, 1.0, false),
];

fn schatten_table(l: &mut Ledger, _opts: SweepOptions) -> Result<()> {
    let mut mismatches = Vec::new();
    for (n, m, p, want) in SCHATTEN_TABLE {
        if SymbolClassSpec::inverse(n, m)?.schatten_member(p)? != want {
            mismatches.push(format!("(n={n},m={m},p={p})"));
        }
    }
    l.check(mismatches.is_empty(), format!("table mismatches: {}", mismatches.len()));
    let mut anchors = true;
    for n in 1..=3usize {
        for m in 1..=10u32 {
            let s = SymbolClassSpec::inverse(n, m)?;
            let (nm, mm) = (n as u32, m);
            anchors &= s.trace_class() == (n == 1 && m > 1);
            anchors &= s.hilbert_schmidt() == (nm * (mm + 1) < 4 * mm);
        }
    }
    for m in 1..=12u32 {
        for ell in 0..m {
            anchors &= SymbolClassSpec::weighted_a(m, ell)?.trace_class() == (2 * ell + 1 < m);
        }
    }
    l.check(anchors, "anchor statements".into());
    Ok(())
}

fn hs_estimate(l: &mut Ledger, _opts: SweepOptions) -> Result<()> {
    let p = HomogeneousPolynomial::monomial(1)?;
    let est = symbolcalc::hs_estimate_shifted_inverse(&p, 1.0, &QuadratureOptions::default())?;
    let exact = (PI * PI / 24.0).sqrt();
    let ratio = est / exact;
    l.check((0.5..=2.0).contains(&ratio), format!("estimate {est:.5} exact {exact:.5} ratio {ratio:.3}"));
    Ok(())
}

fn fmt_seq(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}
