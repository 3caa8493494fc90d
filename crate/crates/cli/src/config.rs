use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use spectral_huber::llr::PatchGeometry;
use spectral_huber::model::SyntheticConfig;
use spectral_huber::solvers::{Method, SolverConfig};
use spectral_huber::{Curvature, Potential, PotentialKind};

use crate::CliError;

/// Everything one command needs, as read from a TOML file. Keys are flat and
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // generator
    pub seed: u64,
    pub mx: usize,
    pub my: usize,
    pub frames: usize,
    pub coils: usize,
    pub rank: usize,
    pub acceleration: f64,
    pub noise_sigma: f64,

    // paths
    pub problem: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub label: Option<String>,

    // regularizer
    pub potential: String,
    pub delta: f64,
    /// Number of leading singular values left unpenalized; absent means the
    /// plain regularizer.
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub patch: [usize; 2],

    // solver
    pub method: String,
    pub max_iter: usize,
    /// Absent means the automatic rule.
    pub lambda: Option<f64>,
    pub n_alpha: usize,
    pub alpha0: f64,
    pub curvature: String,
    pub fast_step: bool,
    pub sbar: [i64; 2],
    pub grad_tol: f64,
    pub deterministic_reduce: bool,
    pub store_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = SyntheticConfig::default();
        let s = SolverConfig::default();
        Self {
            seed: g.seed,
            mx: g.image[0],
            my: g.image[1],
            frames: g.frames,
            coils: g.coils,
            rank: g.rank,
            acceleration: g.acceleration,
            noise_sigma: g.noise_sigma,
            problem: None,
            output: None,
            label: None,
            potential: "hyperbola".into(),
            delta: 1e-3,
            k: None,
            patch: [4, 4],
            method: s.method.to_string(),
            max_iter: s.max_iter,
            lambda: None,
            n_alpha: s.n_alpha,
            alpha0: s.alpha0,
            curvature: s.curvature.to_string(),
            fast_step: s.fast_step,
            sbar: s.sbar,
            grad_tol: s.grad_tol,
            deterministic_reduce: s.deterministic_reduce,
            store_every: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            image: [self.mx, self.my],
            frames: self.frames,
            coils: self.coils,
            rank: self.rank,
            acceleration: self.acceleration,
            noise_sigma: self.noise_sigma,
        }
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let kind: PotentialKind = self.potential.parse()?;
        Ok(Potential::new(kind, self.delta)?)
    }

    pub fn geometry(&self, image: [usize; 2]) -> Result<PatchGeometry, CliError> {
        Ok(PatchGeometry::new(image, self.patch)?)
    }

    /// Solver settings; `lambda` is filled in by the caller.
    pub fn solver(&self, lambda: f64) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            method: self.method.parse::<Method>()?,
            max_iter: self.max_iter,
            lambda,
            n_alpha: self.n_alpha,
            alpha0: self.alpha0,
            curvature: self.curvature.parse::<Curvature>()?,
            fast_step: self.fast_step,
            sbar: self.sbar,
            grad_tol: self.grad_tol,
            deterministic_reduce: self.deterministic_reduce,
            store_every: self.store_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<[T; 2], String> {
    let (a, b) = s
        .split_once(['x', ','])
        .ok_or_else(|| format!("expected two values like 8x8 or 8,8, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad value '{v}' in '{s}'"));
    Ok([p(a)?, p(b)?])
}

fn parse_patch(s: &str) -> Result<[usize; 2], String> {
    parse_pair(s)
}

fn parse_shift(s: &str) -> Result<[i64; 2], String> {
    parse_pair(s)
}

/// Command-line overrides; each flag mirrors a config key.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML file with config keys; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mx: Option<usize>,
    #[arg(long)]
    pub my: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub coils: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub acceleration: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Problem archive directory.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Name of the run in comparisons.
    #[arg(long)]
    pub label: Option<String>,
    /// hyperbola, cauchy or parabola.
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Leave the K largest singular values of each patch unpenalized.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Patch size, e.g. 8x8.
    #[arg(long, value_parser = parse_patch)]
    pub patch: Option<[usize; 2]>,
    /// ncg, fista_pa or pogm_pa.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_alpha: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// GR or GL.
    #[arg(long)]
    pub curvature: Option<String>,
    #[arg(long)]
    pub fast_step: bool,
    /// Shift used by the fast step, e.g. 0,0.
    #[arg(long, value_parser = parse_shift, allow_hyphen_values = true)]
    pub sbar: Option<[i64; 2]>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub deterministic_reduce: Option<bool>,
    #[arg(long)]
    pub store_every: Option<usize>,
}

impl Overrides {
    /// The file named by `--config` (or defaults) with flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(seed, mx, my, frames, coils, rank, acceleration, noise_sigma, potential, delta, patch, method,
             max_iter, n_alpha, alpha0, curvature, sbar, grad_tol, deterministic_reduce, store_every);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    cfg.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(problem, output, label, k, lambda);
        if self.fast_step {
            cfg.fast_step = true;
        }
        Ok(cfg)
    }
}
