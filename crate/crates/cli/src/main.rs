mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pencil_lab::LabError;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "pencil-lab", version, about = "Trace criteria and quadratic pencils for -Δ + P(x)²")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Problem preset such as monomial:2, radial:2:2 or hoshiro:5:1.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Size sweep, strictly increasing, e.g. 100,200,400.
    #[arg(long, global = true, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Directory for CSV tables.
    #[arg(long, global = true)]
    csv_dir: Option<PathBuf>,
    /// Allow three-dimensional problems.
    #[arg(long, global = true)]
    slow: bool,
    /// Run sweeps on one thread.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank-2/3/4 trace criteria with their companion checks.
    Criteria {
        /// Run only this criterion.
        #[arg(long)]
        criterion: Option<String>,
    },
    /// Certified pencil eigenvalues and the leading eigenfunction.
    Pencil {
        /// Recover the eigenfunction at this per-axis size.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Traces of words in A, B, P, Ah, L, Aw, Bw, T<j>, Psq.
    Traces {
        /// Word to sweep; repeatable.
        #[arg(long = "word")]
        words: Vec<String>,
    },
    /// Scaling identity for A^ℓ under P → γP.
    Scaling {
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        ell: Vec<u32>,
        /// isospectral or fixed_basis.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Schatten membership predicted by symbol classes.
    Schatten {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u32,
        #[arg(long, value_enum, default_value_t = Variant::Inverse)]
        variant: Variant,
        /// Weight exponent ℓ for the weighted variants.
        #[arg(long, default_value_t = 0)]
        ell: u32,
        /// Schatten indices to test.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0])]
        p: Vec<f64>,
    },
    /// Runs the acceptance suite.
    Accept {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Symbol of (−Δ + P²)^{-1}.
    Inverse,
    /// Pencil coefficient B.
    PencilB,
    /// Weighted A_w.
    WeightedA,
    /// Weighted B_w.
    WeightedB,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        if e.is_input_error() {
            Self::input(e.to_string())
        } else {
            Self::numeric(e.to_string())
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn configure_threads(serial: bool) -> Result<(), Failure> {
    let threads = match std::env::var("PENCIL_LAB_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::input(format!("PENCIL_LAB_THREADS must be a positive integer, got '{v}'")))?,
        ),
        Err(_) => None,
    };
    let threads = if serial { Some(1) } else { threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::numeric(format!("cannot size the thread pool: {e}")))?;
    }
    faer::set_global_parallelism(match threads {
        Some(1) => faer::Par::Seq,
        Some(n) => faer::Par::rayon(n),
        None => faer::Par::rayon(0),
    });
    Ok(())
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &g.preset {
        cfg.preset = Some(p.clone());
        cfg.polynomial = None;
        cfg.weighted = None;
    }
    if !g.sizes.is_empty() {
        cfg.sizes = Some(g.sizes.clone());
    }
    cfg.slow |= g.slow;
    cfg.serial |= g.serial;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let mut cfg = load_config(&cli.global)?;
    configure_threads(cfg.serial)?;
    let out = commands::Output::new(cli.global.json.clone(), cli.global.csv_dir.clone());
    match cli.command {
        Command::Criteria { criterion } => commands::criteria(&cfg, criterion.as_deref(), &out),
        Command::Pencil { refine } => {
            if refine.is_some() {
                cfg.refine_size = refine;
            }
            commands::pencil(&cfg, &out)
        }
        Command::Traces { words } => {
            if !words.is_empty() {
                cfg.words = words;
            }
            commands::traces(&cfg, &out)
        }
        Command::Scaling { gamma, ell, mode } => {
            if !gamma.is_empty() {
                cfg.gamma = gamma;
            }
            if !ell.is_empty() {
                cfg.ell = ell;
            }
            if let Some(mode) = mode {
                cfg.scaling_mode = mode.parse().map_err(|e: LabError| Failure::input(e.to_string()))?;
            }
            commands::scaling(&cfg, &out)
        }
        Command::Schatten { n, m, variant, ell, p } => commands::schatten(n, m, variant, ell, &p, &out),
        Command::Accept { only } => commands::accept(&cfg, &only, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
