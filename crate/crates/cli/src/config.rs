use std::path::Path;

use pencil_lab::basis::MAX_TOTAL_DIM;
use pencil_lab::operators::ScalingMode;
use pencil_lab::pencil::PencilOptions;
use pencil_lab::polynomial::HomogeneousPolynomial;
use pencil_lab::problem::{self, AlphaRule, Problem, SweepOptions};
use pencil_lab::traces::VERDICT_FACTOR;
use serde::Deserialize;

use crate::Failure;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
pub struct WeightedSpec {
    pub m: u32,
    pub ell: u32,
}

/// Run configuration as read from TOML; command-line flags override individual fields.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub polynomial: Option<HomogeneousPolynomial>,
    pub weighted: Option<WeightedSpec>,
    /// Expected dimension, checked against the problem.
    pub n: Option<usize>,
    /// Expected degree, checked against the problem.
    pub m: Option<u32>,
    pub sizes: Option<Vec<usize>>,
    pub alpha: Option<AlphaRule>,
    pub residual_tol: f64,
    pub drift_tol: f64,
    pub verdict_factor: f64,
    pub use_symmetry: bool,
    pub serial: bool,
    pub slow: bool,
    pub words: Vec<String>,
    pub gamma: Vec<f64>,
    pub ell: Vec<u32>,
    pub scaling_mode: ScalingMode,
    /// Per-axis size at which the eigenfunction is recovered; defaults to the largest sweep size.
    pub refine_size: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            polynomial: None,
            weighted: None,
            n: None,
            m: None,
            sizes: None,
            alpha: None,
            residual_tol: 1e-6,
            drift_tol: 1e-4,
            verdict_factor: VERDICT_FACTOR,
            use_symmetry: true,
            serial: false,
            slow: false,
            words: Vec::new(),
            gamma: Vec::new(),
            ell: Vec::new(),
            scaling_mode: ScalingMode::Isospectral,
            refine_size: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn sweep(&self) -> SweepOptions {
        SweepOptions { serial: self.serial }
    }

    pub fn pencil_options(&self) -> PencilOptions {
        PencilOptions {
            residual_tol: self.residual_tol,
            drift_tol: self.drift_tol,
            use_symmetry: self.use_symmetry,
            sweep: self.sweep(),
        }
    }

    pub fn check_tolerances(&self) -> Result<(), Failure> {
        for (name, v) in [("residual_tol", self.residual_tol), ("drift_tol", self.drift_tol), ("verdict_factor", self.verdict_factor)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Failure::input(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The configured problem with its size sweep, validated.
    pub fn problem(&self) -> Result<(Problem, Vec<usize>), Failure> {
        self.check_tolerances()?;
        let chosen = [self.preset.is_some(), self.polynomial.is_some(), self.weighted.is_some()];
        let mut problem = match chosen.iter().filter(|&&c| c).count() {
            0 => return Err(Failure::input("no problem given: set a preset, a polynomial or a weighted problem")),
            1 => {
                if let Some(name) = &self.preset {
                    Problem::from_preset(name)?
                } else if let Some(poly) = &self.polynomial {
                    Problem::standard("custom", poly.clone())
                } else {
                    let w = self.weighted.expect("one source is set");
                    Problem::weighted(w.m, w.ell)?
                }
            }
            _ => return Err(Failure::input("give exactly one of preset, polynomial and weighted")),
        };
        if let Some(rule) = self.alpha {
            problem = problem.with_alpha_rule(rule);
        }
        if let Some(n) = self.n {
            if n != problem.dim() {
                return Err(Failure::input(format!("n = {n} but the problem has dimension {}", problem.dim())));
            }
        }
        if let Some(m) = self.m {
            if m != problem.degree() {
                return Err(Failure::input(format!("m = {m} but the problem has degree {}", problem.degree())));
            }
        }
        if problem.dim() == 3 && !self.slow {
            return Err(Failure::input("three-dimensional problems are slow; pass --slow to run them"));
        }
        let sizes = self.sizes.clone().unwrap_or_else(|| problem.default_sizes());
        problem::check_sizes(&sizes)?;
        for &s in &sizes {
            let total = s.checked_pow(problem.dim() as u32).unwrap_or(usize::MAX);
            if total > MAX_TOTAL_DIM {
                return Err(Failure::input(format!("size {s} gives {total} basis functions, above the cap of {MAX_TOTAL_DIM}")));
            }
        }
        Ok((problem, sizes))
    }
}
