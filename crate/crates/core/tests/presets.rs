use std::sync::OnceLock;

use pencil_lab::problem::{AlphaRule, Discretization, Problem, SweepOptions, PRESETS};
use pencil_lab::symbolcalc::SymbolClassSpec;
use pencil_lab::traces::{self, CriterionKind, Factor, FitStatus, TraceWord};
use proptest::prelude::*;

fn small_size(p: &Problem) -> usize {
    match p.dim() {
        1 => 40,
        2 => 10,
        _ => 5,
    }
}

fn discretizations() -> &'static Vec<(Problem, Discretization)> {
    static CACHE: OnceLock<Vec<(Problem, Discretization)>> = OnceLock::new();
    CACHE.get_or_init(|| {
        PRESETS
            .iter()
            .map(|name| {
                let p = Problem::from_preset(name).unwrap();
                let d = p.discretize(small_size(&p)).unwrap();
                (p, d)
            })
            .collect()
    })
}

fn factor(code: u8, weighted: bool, one_dim: bool) -> Factor {
    match code % 8 {
        0 => Factor::A,
        1 => Factor::B,
        2 => Factor::P,
        3 => Factor::AHalf,
        4 => Factor::Psq,
        5 if weighted => Factor::Aw,
        6 if weighted => Factor::Bw,
        7 if one_dim => Factor::T(2),
        _ => Factor::A,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn traces_are_cyclic_and_reversal_invariant(
        preset in 0..PRESETS.len(),
        codes in prop::collection::vec(any::<u8>(), 1..7),
        shift in 0usize..7,
    ) {
        let (p, d) = &discretizations()[preset];
        let word = TraceWord::new(codes.iter().map(|&c| factor(c, p.is_weighted(), p.dim() == 1)).collect()).unwrap();
        let (t, s) = traces::trace_word_with_scale(&word, d).unwrap();
        let (tr, sr) = traces::trace_word_with_scale(&word.rotated(shift % word.len()), d).unwrap();
        let (tv, sv) = traces::trace_word_with_scale(&word.reversed(), d).unwrap();
        prop_assert!((t - tr).abs() <= 1e-8 * s.max(sr), "{word}: {t} vs rotated {tr}");
        prop_assert!((t - tv).abs() <= 1e-8 * s.max(sv), "{word}: {t} vs reversed {tv}");
    }

    #[test]
    fn words_round_trip_through_text(codes in prop::collection::vec(any::<u8>(), 1..10)) {
        let word = TraceWord::new(codes.iter().map(|&c| factor(c, true, true)).collect()).unwrap();
        prop_assert_eq!(TraceWord::parse(&word.to_string()).unwrap(), word);
    }
}

#[test]
fn ba_equals_paa_on_every_standard_preset() {
    for (p, d) in discretizations().iter().filter(|(p, _)| !p.is_weighted()) {
        let ba = traces::trace_word(&TraceWord::parse("B A").unwrap(), d).unwrap();
        let paa = traces::trace_word(&TraceWord::parse("P A A").unwrap(), d).unwrap();
        assert!((ba - paa).abs() <= 1e-10 * ba.abs().max(1.0), "{}: {ba} vs {paa}", p.name);
    }
}

#[test]
fn trace_class_prediction_matches_numerical_convergence() {
    let sizes = [100, 200, 400];
    let cases: Vec<(&str, &str)> = vec![
        ("monomial:1", "A"),
        ("monomial:2", "A"),
        ("monomial:3", "A"),
        ("monomial:4", "A"),
        ("hoshiro:5:1", "Aw"),
        ("hoshiro:7:2", "Aw"),
        ("hoshiro:3:1", "Aw"),
    ];
    for (name, word) in cases {
        let p = Problem::from_preset(name).unwrap();
        let (a_class, _) = traces::pencil_classes(&p).unwrap();
        let predicted = a_class.trace_class();
        let report = traces::trace_sweep(&p, &TraceWord::parse(word).unwrap(), &sizes, SweepOptions::default()).unwrap();
        let converges = report.fit != FitStatus::NoFit;
        assert_eq!(predicted, converges, "{name}: predicted {predicted}, values {:?} fit {:?}", report.values, report.fit);
    }
}

#[test]
fn hilbert_schmidt_prediction_matches_numerical_convergence() {
    let p = Problem::from_preset("monomial:1").unwrap();
    assert!(SymbolClassSpec::inverse(1, 1).unwrap().hilbert_schmidt());
    let report = traces::trace_sweep(&p, &TraceWord::parse("A A").unwrap(), &[100, 200, 400], SweepOptions::default()).unwrap();
    assert_ne!(report.fit, FitStatus::NoFit);
}

#[test]
fn rank2_ratio_is_insensitive_to_the_basis_scale() {
    let sizes = [100, 200, 400];
    let base = Problem::from_preset("monomial:3").unwrap();
    let run = |rule| traces::run_criterion(&base.clone().with_alpha_rule(rule), CriterionKind::Rank2, &sizes, SweepOptions::default()).unwrap();
    let (r1, r2) = (run(AlphaRule::Power(1.0)), run(AlphaRule::Power(1.2)));
    let gap = (r1.ratio.extrapolated - r2.ratio.extrapolated).abs();
    assert!(
        gap <= r1.ratio.error + r2.ratio.error,
        "{} ± {} vs {} ± {}",
        r1.ratio.extrapolated,
        r1.ratio.error,
        r2.ratio.extrapolated,
        r2.ratio.error
    );
    assert_eq!(r1.verdict, r2.verdict);
}

#[test]
fn serial_and_parallel_sweeps_are_bit_identical() {
    let p = Problem::from_preset("monomial:2").unwrap();
    let word = TraceWord::parse("(PA)^3").unwrap();
    let sizes = [60, 80, 100];
    let serial = traces::trace_sweep(&p, &word, &sizes, SweepOptions { serial: true }).unwrap();
    let parallel = traces::trace_sweep(&p, &word, &sizes, SweepOptions { serial: false }).unwrap();
    assert_eq!(serial.values, parallel.values);
    assert_eq!(serial.extrapolated.to_bits(), parallel.extrapolated.to_bits());
}

#[test]
fn criteria_reports_serialize() {
    let p = Problem::from_preset("monomial:2").unwrap();
    let r = traces::run_criterion(&p, CriterionKind::Rank2, &[40, 60, 80], SweepOptions::default()).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["verdict"], "satisfied (negative)");
    assert!(json["value"]["values"].as_array().unwrap().len() == 3);
}
