//! Experiment configuration: a single TOML file, validated before any run.

use anyhow::{bail, Context, Result};
use qls_core::geometry::{ControlRegion, GccOptions, Shape};
use qls_core::grid::Projection;
use qls_core::model::Nonlinearity;
use qls_core::probe::smooth_field;
use qls_core::{io, Field, TorusGrid, C64};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub projection: ProjectionKind,
    #[serde(default)]
    pub initial: DataSpec,
    #[serde(default)]
    pub target: DataSpec,
    /// Union of shapes in period units.
    #[serde(default)]
    pub region: Vec<ShapeConfig>,
    #[serde(default)]
    pub hum: HumConfig,
    #[serde(default)]
    pub iteration: IterationConfig,
    #[serde(default)]
    pub gcc: GccConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed for randomized probes.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
}

/// Polynomial coefficients of `g₁(ρ) = Σ g1[i] ρ^{i+1}` and `g₂(ρ) = Σ g2[i] ρ^{i+1}`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self { g1: vec![1.0], g2: vec![1.0] }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    Full,
    Nyquist,
    #[default]
    TwoThirds,
}

impl From<ProjectionKind> for Projection {
    fn from(p: ProjectionKind) -> Self {
        match p {
            ProjectionKind::Full => Projection::Full,
            ProjectionKind::Nyquist => Projection::Nyquist,
            ProjectionKind::TwoThirds => Projection::TwoThirds,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: [i64; 2],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Initial or target datum.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    #[default]
    Zero,
    Modes {
        modes: Vec<ModeSpec>,
    },
    /// Seeded field damped by `exp(−|k|²/radius²)`.
    Smooth {
        seed: u64,
        radius: f64,
        /// Target `H^s` norm with `s = d/2 + 2.5`.
        amplitude: f64,
    },
    /// Field dump in the native format.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    Strip { axis: usize, center: f64, half_width: f64 },
    Ball { center: [f64; 2], radius: f64 },
    Whole,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumConfig {
    pub gamma: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Tychonoff penalty `μ`.
    pub mu: f64,
    /// Mollification radius of `φ_ω` in period units.
    pub mollify: f64,
    pub epsilon: f64,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self { gamma: 1.0 / 3.0, cg_tol: 1e-10, cg_max_iter: 400, mu: 0.0, mollify: 0.06, epsilon: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub rho_max: f64,
    pub neumann_tol: f64,
    pub neumann_max_terms: usize,
    pub eps0: f64,
    /// Build the dense free-Gramian preconditioner.
    pub precondition: bool,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self { max_iter: 20, tol: 1e-10, rho_max: 0.5, neumann_tol: 1e-10, neumann_max_terms: 30, eps0: 1e-2, precondition: true }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccConfig {
    pub l_max: f64,
    pub q_max: i64,
    pub n_dirs: usize,
    pub n_starts: usize,
}

impl Default for GccConfig {
    fn default() -> Self {
        let d = GccOptions::default();
        Self { l_max: d.l_max, q_max: d.q_max, n_dirs: d.n_dirs, n_starts: d.n_starts }
    }
}

impl From<GccConfig> for GccOptions {
    fn from(c: GccConfig) -> Self {
        GccOptions { l_max: c.l_max, q_max: c.q_max, n_dirs: c.n_dirs, n_starts: c.n_starts }
    }
}

/// Asserted tolerances; a run exits 4 when one is missed.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mass_drift: f64,
    pub linear_terminal: f64,
    pub nonlinear_terminal: f64,
    pub exact_terminal: f64,
    pub duality: f64,
    pub duality_frozen: f64,
    pub symmetry: f64,
    pub pairing: f64,
    pub consistency: f64,
    pub near_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_drift: 1e-8,
            linear_terminal: 1e-6,
            nonlinear_terminal: 1e-5,
            exact_terminal: 1e-4,
            duality: 1e-9,
            duality_frozen: 1e-8,
            symmetry: 1e-8,
            pairing: 1e-8,
            consistency: 1e-10,
            near_identity: 1e-1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub field_dumps: bool,
    /// Trajectory dump stride; 0 disables trajectory dumps.
    pub trajectory_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), field_dumps: true, trajectory_stride: 0 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| qls_core::Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let v = |m: String| -> Result<()> { Err(qls_core::Error::Validation(m).into()) };
        TorusGrid::new(self.grid.dim, self.grid.n).map_err(anyhow::Error::from)?;
        if !(self.time.horizon > 0.0 && self.time.horizon.is_finite()) || self.time.steps == 0 {
            return v(format!("time: horizon must be positive and steps nonzero, got {:?}", self.time));
        }
        self.nonlinearity()?;
        let h = &self.hum;
        if !(h.gamma > 0.0 && h.gamma <= 1.0) {
            return v(format!("hum.gamma must lie in (0, 1], got {}", h.gamma));
        }
        if !(h.cg_tol > 0.0) || !(h.mu >= 0.0) || !(h.mollify > 0.0) || !(h.epsilon > 0.0 && h.epsilon < 1.0) {
            return v("hum: cg_tol and mollify must be positive, mu nonnegative, epsilon in (0, 1)".into());
        }
        if !(self.iteration.tol > 0.0) || self.iteration.max_iter == 0 {
            return v("iteration: tol must be positive and max_iter nonzero".into());
        }
        for (name, d) in [("initial", &self.initial), ("target", &self.target)] {
            match d {
                DataSpec::Smooth { radius, amplitude, .. } if !(*radius > 0.0 && *amplitude >= 0.0) => {
                    return v(format!("{name}: radius must be positive and amplitude nonnegative"));
                }
                DataSpec::Modes { modes } => {
                    let g = self.torus()?;
                    if let Some(m) = modes.iter().find(|m| Field::mode(g, m.k, C64::new(m.re, m.im)).is_err()) {
                        return v(format!("{name}: mode {:?} is outside the grid", m.k));
                    }
                }
                _ => {}
            }
        }
        if !self.region.is_empty() {
            self.control_region()?;
        }
        Ok(())
    }

    pub fn torus(&self) -> Result<TorusGrid> {
        Ok(TorusGrid::new(self.grid.dim, self.grid.n)?)
    }

    pub fn projection(&self) -> Projection {
        self.projection.into()
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Ok(Nonlinearity::new(self.nonlinearity.g1.clone(), self.nonlinearity.g2.clone())?)
    }

    pub fn control_region(&self) -> Result<ControlRegion> {
        if self.region.is_empty() {
            bail!(qls_core::Error::Validation("no control region configured".into()));
        }
        let shapes = self
            .region
            .iter()
            .map(|s| match *s {
                ShapeConfig::Strip { axis, center, half_width } => Shape::Strip { axis, center, half_width },
                ShapeConfig::Ball { center, radius } => Shape::Ball { center, radius },
                ShapeConfig::Whole => Shape::Whole,
            })
            .collect();
        Ok(ControlRegion::new(self.grid.dim, shapes)?)
    }

    /// Materialize a datum, resolving file paths against `base`.
    pub fn datum(&self, d: &DataSpec, base: &Path) -> Result<Field> {
        let g = self.torus()?;
        Ok(match d {
            DataSpec::Zero => Field::zeros(g),
            DataSpec::Modes { modes } => {
                let mut f = Field::zeros(g);
                for m in modes {
                    f = f.add(&Field::mode(g, m.k, C64::new(m.re, m.im))?);
                }
                f
            }
            DataSpec::Smooth { seed, radius, amplitude } => {
                let f = smooth_field(g, *seed, *radius, 1.0);
                f.scale_real(amplitude / qls_core::field::sobolev_norm(&f, qls_core::model::s0(g.dim())))
            }
            DataSpec::File { path } => {
                let f = io::read_field(&base.join(path))?;
                if f.grid() != g {
                    bail!(qls_core::Error::Validation(format!("{}: grid differs from the configured grid", path.display())));
                }
                f
            }
        })
    }
}
