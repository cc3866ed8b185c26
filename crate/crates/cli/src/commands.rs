use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pencil_lab::acceptance::{self, Outcome};
use pencil_lab::pencil::{self, PhysicalEigenfunction};
use pencil_lab::problem::Problem;
use pencil_lab::symbolcalc::{SchattenRow, SymbolClassSpec};
use pencil_lab::traces::{self, CriterionKind, CriterionReport, TraceReport, TraceWord, Verdict};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::{Failure, Variant, EXIT_INCONCLUSIVE, EXIT_NUMERIC};

/// Where reports go besides the human-readable summary.
pub struct Output {
    json: Option<PathBuf>,
    csv_dir: Option<PathBuf>,
}

impl Output {
    pub fn new(json: Option<PathBuf>, csv_dir: Option<PathBuf>) -> Self {
        Self { json, csv_dir }
    }

    fn json_on_stdout(&self) -> bool {
        self.json.as_deref() == Some(Path::new("-"))
    }

    /// Summary lines go to stderr when stdout carries JSON.
    fn say(&self, line: impl AsRef<str>) {
        if self.json_on_stdout() {
            eprintln!("{}", line.as_ref());
        } else {
            let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
        }
    }

    fn write_json<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let Some(path) = &self.json else { return Ok(()) };
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::numeric(format!("cannot encode JSON: {e}")))?;
        if self.json_on_stdout() {
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        } else {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::input(format!("cannot create {}: {e}", parent.display())))?;
            }
            fs::write(path, text + "\n").map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
        }
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
        let Some(dir) = &self.csv_dir else { return Ok(()) };
        let io = |e: &dyn std::fmt::Display| Failure::input(format!("cannot write {}: {e}", dir.join(name).display()));
        fs::create_dir_all(dir).map_err(|e| io(&e))?;
        let mut w = csv::Writer::from_path(dir.join(name)).map_err(|e| io(&e))?;
        w.write_record(header).map_err(|e| io(&e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))
    }
}

fn warn_experimental(problem: &Problem, out: &Output) {
    if problem.experimental {
        out.say(format!("warning: {} is experimental (P is not elliptic)", problem.name));
    }
}

fn default_criteria(problem: &Problem) -> Vec<CriterionKind> {
    match (problem.is_weighted(), problem.dim()) {
        (true, _) => vec![CriterionKind::Rank2],
        (false, 1) => vec![CriterionKind::Rank2, CriterionKind::Rank4],
        (false, 2) => vec![CriterionKind::Rank3, CriterionKind::Rank4],
        _ => vec![CriterionKind::Rank4],
    }
}

#[derive(Serialize)]
struct CriterionSummary {
    criterion: CriterionKind,
    value: f64,
    error: f64,
    hypothesis_ok: bool,
    verdict: Verdict,
    report: CriterionReport,
}

pub fn criteria(cfg: &RunConfig, only: Option<&str>, out: &Output) -> Result<u8, Failure> {
    let (problem, sizes) = cfg.problem()?;
    warn_experimental(&problem, out);
    let kinds = match only {
        Some(k) => vec![k.parse::<CriterionKind>()?],
        None => default_criteria(&problem),
    };
    let mut summaries = Vec::new();
    for kind in kinds {
        let mut r = traces::run_criterion(&problem, kind, &sizes, cfg.sweep())?;
        r.verdict = Verdict::decide(r.hypotheses.hold, &r.value.extrapolation(), cfg.verdict_factor);
        r.value.verdict = Some(r.verdict);
        out.say(format!(
            "{:?} {}: {:.6e} ± {:.1e} [{:?}] ratio {:.5} vs bound {:.5} -> {}",
            kind,
            kind.expression(),
            r.value.extrapolated,
            r.value.error,
            r.value.fit,
            r.ratio.extrapolated,
            r.bound,
            r.verdict
        ));
        for f in r.hypotheses.failures.iter().chain(&r.hypotheses.warnings) {
            out.say(format!("  note: {f}"));
        }
        for i in &r.inequalities {
            out.say(format!("  {}: {}", i.name, if i.holds() { "holds" } else { "violated" }));
        }
        for i in &r.identities {
            out.say(format!("  {}: relative errors {:?}", i.name, i.rel_errors));
        }
        summaries.push(CriterionSummary {
            criterion: kind,
            value: r.value.extrapolated,
            error: r.value.error,
            hypothesis_ok: r.hypotheses.hold,
            verdict: r.verdict,
            report: r,
        });
    }
    out.write_json(&json!({ "problem": problem, "sizes": sizes, "criteria": summaries }))?;
    out.write_csv(
        "criteria.csv",
        &["criterion", "size", "value", "normalizer", "ratio"],
        summaries.iter().flat_map(|s| {
            let r = &s.report;
            (0..r.value.sizes.len()).map(move |k| {
                vec![
                    r.criterion.expression().to_string(),
                    r.value.sizes[k].to_string(),
                    r.value.values[k].to_string(),
                    r.normalizer.values[k].to_string(),
                    r.ratio.values[k].to_string(),
                ]
            })
        }),
    )?;
    Ok(if summaries.iter().any(|s| s.verdict.is_satisfied()) { 0 } else { EXIT_INCONCLUSIVE })
}

#[derive(Serialize)]
struct EigenfunctionSummary {
    lambda_re: f64,
    lambda_im: f64,
    size: usize,
    direct_residual: f64,
    tail_fraction: f64,
}

/// Evaluation grid reaching well past the classical turning point `|x|^m ≈ |λ|`.
fn eigenfunction_grid(dim: usize, degree: u32, lambda_abs: f64) -> (Vec<Vec<f64>>, f64) {
    let extent = 3.0 * lambda_abs.powf(1.0 / degree.max(1) as f64).max(1.0);
    let points = match dim {
        1 => 401,
        2 => 81,
        _ => 31,
    };
    let axis: Vec<f64> = (0..points).map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64).collect();
    let mut grid = vec![Vec::new()];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|p| axis.iter().map(move |&x| [p.clone(), vec![x]].concat()))
            .collect();
    }
    (grid, extent)
}

pub fn pencil(cfg: &RunConfig, out: &Output) -> Result<u8, Failure> {
    let (problem, sizes) = cfg.problem()?;
    if sizes.len() < 2 {
        return Err(Failure::input("a stability study needs at least two sizes"));
    }
    warn_experimental(&problem, out);
    let opts = cfg.pencil_options();
    let report = pencil::stability_study(&problem, &sizes, &opts)?;
    let certified: Vec<_> = report.certified().collect();
    out.say(format!(
        "{}: {} validated at size {}, {} certified",
        problem.name,
        report.validated.last().copied().unwrap_or(0),
        sizes.last().expect("sizes are nonempty"),
        certified.len()
    ));
    for e in certified.iter().take(10) {
        out.say(format!("  λ = {:+.10} {:+.10}i  residual {:.1e}", e.lambda_re, e.lambda_im, e.residual));
    }
    let largest = *sizes.last().expect("sizes are nonempty");
    let mut flagship: Option<(EigenfunctionSummary, PhysicalEigenfunction)> = None;
    if let Some((e, pair)) = report.flagship() {
        let (f, size) = match cfg.refine_size {
            Some(s) if s != largest => (pencil::refine_eigenfunction(&problem, e.lambda(), s, &opts)?, s),
            _ => (pencil::recover_physical_eigenfunction(pair, &problem, &problem.discretize(largest)?)?, largest),
        };
        out.say(format!(
            "  eigenfunction at size {size}: direct residual {:.2e}, tail fraction {:.2e}",
            f.direct_residual, f.tail_fraction
        ));
        flagship = Some((
            EigenfunctionSummary {
                lambda_re: e.lambda_re,
                lambda_im: e.lambda_im,
                size,
                direct_residual: f.direct_residual,
                tail_fraction: f.tail_fraction,
            },
            f,
        ));
    }
    out.write_json(&json!({
        "problem": problem,
        "report": report,
        "certified": certified.len(),
        "eigenfunction": flagship.as_ref().map(|(s, _)| s),
    }))?;
    out.write_csv(
        "eigenvalues.csv",
        &["lambda_re", "lambda_im", "residual", "size", "certified"],
        report.eigenvalues.iter().map(|e| {
            vec![e.lambda_re.to_string(), e.lambda_im.to_string(), e.residual.to_string(), e.size.to_string(), e.certified.to_string()]
        }),
    )?;
    if let Some((s, f)) = &flagship {
        if out.csv_dir.is_some() {
            let (grid, _) = eigenfunction_grid(problem.dim(), problem.degree(), s.lambda_re.hypot(s.lambda_im));
            let values = f.sample(&grid)?;
            let coords = ["t", "x", "y", "z"];
            let header: Vec<&str> = if problem.dim() == 1 { vec!["t"] } else { coords[1..=problem.dim()].to_vec() };
            let header: Vec<&str> = header.into_iter().chain(["re", "im"]).collect();
            out.write_csv(
                "eigenfunction.csv",
                &header,
                grid.iter().zip(&values).map(|(p, v)| {
                    p.iter().map(|x| x.to_string()).chain([v.re.to_string(), v.im.to_string()]).collect()
                }),
            )?;
        }
    }
    Ok(if certified.is_empty() { EXIT_INCONCLUSIVE } else { 0 })
}

pub fn traces(cfg: &RunConfig, out: &Output) -> Result<u8, Failure> {
    if cfg.words.is_empty() {
        return Err(Failure::input("no words given; pass --word or set words in the config"));
    }
    let words: Vec<TraceWord> = cfg.words.iter().map(|w| TraceWord::parse(w)).collect::<Result<_, _>>()?;
    let (problem, sizes) = cfg.problem()?;
    warn_experimental(&problem, out);
    let reports: Vec<TraceReport> = words
        .iter()
        .map(|w| traces::trace_sweep(&problem, w, &sizes, cfg.sweep()))
        .collect::<Result<_, _>>()?;
    for r in &reports {
        out.say(format!("Tr({}) = {:.12e} ± {:.1e} [{:?}] values {:?}", r.word, r.extrapolated, r.error, r.fit, r.values));
    }
    out.write_json(&json!({ "problem": problem, "traces": reports }))?;
    out.write_csv(
        "traces.csv",
        &["word", "size", "value"],
        reports.iter().flat_map(|r| r.sizes.iter().zip(&r.values).map(|(s, v)| vec![r.word.clone(), s.to_string(), v.to_string()])),
    )?;
    Ok(0)
}

pub fn scaling(cfg: &RunConfig, out: &Output) -> Result<u8, Failure> {
    let (problem, sizes) = cfg.problem()?;
    if problem.is_weighted() {
        return Err(Failure::input("the scaling identity applies to standard problems"));
    }
    let gammas = if cfg.gamma.is_empty() { vec![2.0] } else { cfg.gamma.clone() };
    let ells = if cfg.ell.is_empty() { vec![1] } else { cfg.ell.clone() };
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Failure::input(format!("γ must be positive, got {g}")));
    }
    let size = *sizes.last().expect("sizes are nonempty");
    let d = problem.discretize(size)?;
    let mut rows = Vec::new();
    for &gamma in &gammas {
        for &ell in &ells {
            let s = traces::scaling_identity_check(&d, ell, gamma, cfg.scaling_mode)?;
            out.say(format!("γ={gamma} ℓ={ell}: {:.12e} vs {:.12e}, relative error {:.2e}", s.lhs, s.rhs, s.rel_error));
            rows.push(json!({ "gamma": gamma, "ell": ell, "mode": cfg.scaling_mode, "size": size, "lhs": s.lhs, "rhs": s.rhs, "rel_error": s.rel_error }));
        }
    }
    out.write_json(&json!({ "problem": problem, "scaling": rows }))?;
    Ok(0)
}

pub fn schatten(n: usize, m: u32, variant: Variant, ell: u32, ps: &[f64], out: &Output) -> Result<u8, Failure> {
    if matches!(variant, Variant::WeightedA | Variant::WeightedB) && n != 1 {
        return Err(Failure::input("weighted variants are one-dimensional"));
    }
    let class = match variant {
        Variant::Inverse => SymbolClassSpec::inverse(n, m)?,
        Variant::PencilB => {
            let half = SymbolClassSpec::inverse(n, m)?.power(0.5);
            half.compose(&SymbolClassSpec::polynomial(n, m, m)?)?.compose(&half)?
        }
        Variant::WeightedA => SymbolClassSpec::weighted_a(m, ell)?,
        Variant::WeightedB => SymbolClassSpec::weighted_b(m, ell)?,
    };
    let rows: Vec<SchattenRow> = ps.iter().map(|&p| class.table_row(p)).collect::<Result<_, _>>()?;
    out.say(format!("{:>8} {:>8} {:>8} {:>3} {:>6} {:>7} {:>8}", "M", "k", "l", "n", "p", "member", "p_min"));
    for r in &rows {
        let p_min = r.p_min.map_or("none".to_string(), |p| format!("{p:.4}"));
        out.say(format!("{:>8.4} {:>8.4} {:>8.4} {:>3} {:>6} {:>7} {:>8}", r.order, r.k, r.l, r.n, r.p, r.member, p_min));
    }
    out.write_json(&rows)?;
    out.write_csv(
        "schatten.csv",
        &["M", "k", "l", "n", "p", "member", "p_min"],
        rows.iter().map(|r| {
            vec![
                r.order.to_string(),
                r.k.to_string(),
                r.l.to_string(),
                r.n.to_string(),
                r.p.to_string(),
                r.member.to_string(),
                r.p_min.map_or(String::new(), |p| p.to_string()),
            ]
        }),
    )?;
    Ok(0)
}

pub fn accept(cfg: &RunConfig, only: &[u8], out: &Output) -> Result<u8, Failure> {
    if let Some(bad) = only.iter().find(|&&id| !(1..=10).contains(&id)) {
        return Err(Failure::input(format!("criteria are numbered 1 to 10, got {bad}")));
    }
    let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only.to_vec() };
    let mut outcomes: Vec<Outcome> = Vec::new();
    for id in ids {
        let o = acceptance::run_criterion(id, cfg.sweep()).expect("ids are validated");
        out.say(o.to_string());
        let _ = std::io::stdout().flush();
        outcomes.push(o);
    }
    let gating_ok = outcomes.iter().all(|o| o.passed);
    let mut extra = Vec::new();
    if cfg.slow {
        let o = acceptance::run_slow_rank4(cfg.sweep());
        out.say(o.to_string());
        extra.push(o);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    out.say(if gating_ok {
        format!("acceptance: all {} criteria passed", outcomes.len())
    } else {
        format!("acceptance: {failed} of {} criteria failed", outcomes.len())
    });
    out.write_json(&json!({ "criteria": outcomes, "slow": extra, "passed": gating_ok }))?;
    Ok(if gating_ok { 0 } else { EXIT_NUMERIC })
}
