//! Experiment configuration: one TOML file, validated before any computation.

use std::path::{Path, PathBuf};

use gabor_fio::analysis::{random_packets, GaussianFamily};
use gabor_fio::fio::{Symbol, SymbolSpec};
use gabor_fio::gabor::{GaborSystem, Lattice, MixedNormSpec, StftSampling, WindowKind};
use gabor_fio::grid::{gaussian, Grid, SampledFunction};
use gabor_fio::metaplectic::{HamiltonianQuadratic, HamiltonianRecord};
use gabor_fio::phase::{Phase, PhaseSpec};
use gabor_fio::{FioError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub epsilon: f64,
    pub grid: GridConfig,
    pub window: WindowConfig,
    pub lattice: LatticeConfig,
    pub phase: PhaseSpec,
    pub symbol: SymbolSpec,
    pub norm: MixedNormSpec,
    pub input: InputConfig,
    pub family: FamilyConfig,
    pub schrodinger: SchrodingerConfig,
    pub decay: DecayConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            epsilon: 1e-10,
            grid: GridConfig::default(),
            window: WindowConfig::default(),
            lattice: LatticeConfig::default(),
            phase: PhaseSpec::Chirp { a: 1.0 },
            symbol: SymbolSpec::One,
            norm: MixedNormSpec { p: f64::INFINITY, q: 1.0, s: 0.0 },
            input: InputConfig::default(),
            family: FamilyConfig::default(),
            schrodinger: SchrodingerConfig::default(),
            decay: DecayConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub d: usize,
    pub l: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { d: 1, l: 16.0, n: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Width w of the Gaussian window e^{−π|x|²/w²}.
    pub width: f64,
    /// Window used for analysis and synthesis in matrix experiments.
    pub kind: WindowKind,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { width: 1.0, kind: WindowKind::Tight }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { alpha: 0.5, beta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        modulation: Vec<f64>,
    },
    Packets {
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig::Gaussian { center: vec![0.0], width: 1.0, modulation: vec![0.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub l: f64,
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub count: usize,
    pub time_stride: usize,
    pub freq_stride: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            l: 128.0,
            n: 16384,
            lambda_min: 1e-3,
            lambda_max: 1e-1,
            count: 9,
            time_stride: 16,
            freq_stride: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianChoice {
    Named(String),
    Matrix(HamiltonianRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchrodingerConfig {
    pub hamiltonian: HamiltonianChoice,
    pub times: Vec<f64>,
}

impl Default for SchrodingerConfig {
    fn default() -> Self {
        SchrodingerConfig { hamiltonian: HamiltonianChoice::Named("free-particle".into()), times: vec![0.25, 0.5, 1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub orders: Vec<u32>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { orders: vec![1, 2, 3] }
    }
}

/// Everything a subcommand needs, built once from a validated config.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub grid: Grid,
    pub lattice: Lattice,
    pub phase: Arc<dyn Phase>,
    pub symbol: Symbol,
    pub norm: MixedNormSpec,
    pub hamiltonian: HamiltonianQuadratic,
    family_grid: Grid,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FioError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let canon = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(canon.as_bytes()))
    }

    pub fn validate(self) -> Result<Experiment> {
        let grid = Grid::new(self.grid.d, self.grid.l, self.grid.n)?;
        let lattice = Lattice::new(grid, self.lattice.alpha, self.lattice.beta)?;
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(FioError::Parse(format!("epsilon = {} must lie in [0, 1)", self.epsilon)));
        }
        if !(self.window.width > 0.0 && self.window.width.is_finite()) {
            return Err(FioError::Parse("window width must be positive".into()));
        }
        let phase = self.phase.build(grid.d())?;
        let symbol = self.symbol.build();
        let norm = MixedNormSpec::new(self.norm.p, self.norm.q, self.norm.s)?;
        let f = &self.family;
        if !(f.lambda_min > 0.0 && f.lambda_min < f.lambda_max && f.count >= 2) {
            return Err(FioError::Parse("family needs 0 < lambda_min < lambda_max and count >= 2".into()));
        }
        let family_grid = Grid::new(1, f.l, f.n)?;
        if f.time_stride == 0 || f.freq_stride == 0 || !f.n.is_multiple_of(f.time_stride) || !f.n.is_multiple_of(f.freq_stride) {
            return Err(FioError::Parse("family strides must divide n".into()));
        }
        let hamiltonian = match &self.schrodinger.hamiltonian {
            HamiltonianChoice::Named(name) => match name.as_str() {
                "free-particle" => HamiltonianQuadratic::free_particle(grid.d()),
                "harmonic-oscillator" => HamiltonianQuadratic::harmonic_oscillator(grid.d()),
                other => return Err(FioError::UnknownName(format!("hamiltonian '{other}'"))),
            },
            HamiltonianChoice::Matrix(r) => HamiltonianQuadratic::try_from(r.clone())?,
        };
        if hamiltonian.dim() != grid.d() {
            return Err(FioError::ShapeMismatch { expected: grid.d(), found: hamiltonian.dim() });
        }
        if self.schrodinger.times.iter().any(|t| !t.is_finite()) {
            return Err(FioError::Parse("schrodinger times must be finite".into()));
        }
        if self.decay.orders.is_empty() {
            return Err(FioError::Parse("decay orders must not be empty".into()));
        }
        match &self.input {
            InputConfig::Gaussian { center, width, modulation } => {
                let ok = |v: &Vec<f64>| v.is_empty() || v.len() == grid.d();
                if !(ok(center) && ok(modulation) && *width > 0.0) {
                    return Err(FioError::Parse("gaussian input needs d-dimensional center, modulation and width > 0".into()));
                }
            }
            InputConfig::File { path } if !path.exists() => {
                return Err(FioError::Parse(format!("input file {} not found", path.display())));
            }
            _ => {}
        }
        Ok(Experiment {
            hash: self.hash(),
            grid,
            lattice,
            phase,
            symbol,
            norm,
            hamiltonian,
            family_grid,
            config: self,
        })
    }
}

impl Experiment {
    pub fn window(&self) -> Result<SampledFunction> {
        let c = vec![0.0; self.grid.d()];
        Ok(gaussian(self.grid, &c, self.config.window.width)?.function)
    }

    pub fn system(&self) -> Result<GaborSystem> {
        GaborSystem::new(self.window()?, self.lattice)
    }

    pub fn input(&self) -> Result<SampledFunction> {
        let d = self.grid.d();
        let pad = |v: &Vec<f64>| if v.is_empty() { vec![0.0; d] } else { v.clone() };
        match &self.config.input {
            InputConfig::Gaussian { center, width, modulation } => {
                gaussian(self.grid, &pad(center), *width)?.function.modulate(&pad(modulation))
            }
            InputConfig::Packets { seed } => Ok(random_packets(self.grid, 1, *seed)?.remove(0)),
            InputConfig::File { path } => {
                let f = gabor_fio::io::read_function(std::fs::File::open(path)?)?;
                f.grid().same_as(&self.grid)?;
                Ok(f)
            }
        }
    }

    pub fn family(&self) -> GaussianFamily {
        let f = &self.config.family;
        GaussianFamily::log_spaced(
            self.family_grid,
            f.lambda_min,
            f.lambda_max,
            f.count,
            StftSampling { time_stride: f.time_stride, freq_stride: f.freq_stride },
        )
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }
}
