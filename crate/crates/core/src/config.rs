//! Run configuration in TOML.
//!
//! Lengths are in an arbitrary unit shared by the box, the potential and the
//! endpoints; `beta` is in inverse energy units consistent with the potential,
//! so `beta * V` is dimensionless. Relative file paths are resolved against the
//! directory of the config file.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::Boundary;
use crate::error::{Error, Result};
use crate::estimators::KernelPair;
use crate::geometry::{BoxRegion, ClassicalConfig};
use crate::loops::LoopConfiguration;
use crate::mcmc::{MoveWeights, SimulationParams};
use crate::potential::{CubicSpline, PotentialModel, Profile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dim: usize,
    pub half_side: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub z: f64,
    pub beta: f64,
    pub slices: usize,
    pub k_max: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    HardCore,
    SmoothedWell,
    SquareWell,
    Tabulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub core: f64,
    pub range: f64,
    #[serde(default)]
    pub profile: ProfileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Two-column text file `s V(s)` for the tabulated profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Empty,
    Classical,
    Loops,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub kind: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// JSON loop configuration, for `kind = "loops"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub seed: u64,
    pub chains: usize,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub steps_per_sweep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wiggle_max: Option<usize>,
    pub moves: MoveWeights,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            seed: 1,
            chains: 1,
            sweeps: 1000,
            burn_in: 100,
            thin: 1,
            steps_per_sweep: 10,
            wiggle_max: None,
            moves: MoveWeights::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Jsonl,
    #[default]
    Both,
}

impl ReportFormat {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    pub fn jsonl(self) -> bool {
        matches!(self, Self::Jsonl | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: ReportFormat,
    /// Sweeps between checkpoints; 0 writes one at the end only.
    pub checkpoint_interval: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), format: ReportFormat::Both, checkpoint_interval: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: Vec<f64>,
    pub half_side: f64,
}

impl BoxSpec {
    pub fn region(&self) -> Result<BoxRegion> {
        BoxRegion::new(self.center.clone(), self.half_side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub x0: Vec<Vec<f64>>,
    pub y0: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Largest loop count with its own occupation probability.
    pub n_max: usize,
    /// `Λ0` for kernels and the trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<BoxSpec>,
    pub kernel_pairs: Vec<PairSpec>,
    pub bridge_samples: usize,
    pub trace: bool,
    pub trace_draws: usize,
    /// `Λ1 ⊂ Λ0` for the compatibility check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat_inner: Option<BoxSpec>,
    pub compat_pairs: Vec<PairSpec>,
    pub compat_draws: usize,
    /// Density cells per axis over the whole box; 0 disables.
    pub density_cells: usize,
    /// Base points of the fixed test loops for the moment bound.
    pub ruelle_points: Vec<Vec<f64>>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            n_max: 4,
            inner: None,
            kernel_pairs: Vec::new(),
            bridge_samples: 4,
            trace: false,
            trace_draws: 4,
            compat_inner: None,
            compat_pairs: Vec::new(),
            compat_draws: 4,
            density_cells: 0,
            ruelle_points: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Partition,
    Occupancy,
    Trace,
    Compatibility,
    KernelBound,
    KernelSymmetry,
    Ruelle,
    EnergyFloor,
    Invariants,
    Density,
}

impl CheckName {
    pub const ALL: [CheckName; 10] = [
        CheckName::Partition,
        CheckName::Occupancy,
        CheckName::Trace,
        CheckName::Compatibility,
        CheckName::KernelBound,
        CheckName::KernelSymmetry,
        CheckName::Ruelle,
        CheckName::EnergyFloor,
        CheckName::Invariants,
        CheckName::Density,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub checks: Vec<CheckName>,
    /// Compare against the quadrature oracle where the system allows it.
    pub oracle_compare: bool,
    pub oracle_grid: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { checks: CheckName::ALL.to_vec(), oracle_compare: true, oracle_grid: 16 }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn points(dim: usize, pts: &[Vec<f64>], what: &str) -> Result<ClassicalConfig> {
    ClassicalConfig::from_points(dim, pts).map_err(|e| Error::Config(format!("{what}: {e}")))
}

impl RunConfig {
    /// Parses and checks the schema version. Errors carry the TOML line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(cfg_err)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(cfg_err)
    }

    /// SHA-256 of the canonical rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.render()?.as_bytes()))
    }

    /// Hash of everything that fixes the chain trajectory and its observers,
    /// leaving out run length and output settings so a run can be extended.
    pub fn trajectory_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.chain.sweeps = 0;
        c.output = OutputSection::default();
        c.validate = ValidateSection::default();
        c.hash()
    }

    pub fn region(&self) -> Result<BoxRegion> {
        let s = &self.system;
        let center = s.center.clone().unwrap_or_else(|| vec![0.0; s.dim]);
        if center.len() != s.dim {
            return Err(Error::Config(format!("system.center has {} coordinates, dim is {}", center.len(), s.dim)));
        }
        BoxRegion::new(center, s.half_side).map_err(|e| Error::Config(format!("system: {e}")))
    }

    pub fn potential_model(&self, base: &FsPath) -> Result<PotentialModel> {
        let p = &self.potential;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("potential.{key} is required for this profile")));
        let profile = match p.profile {
            ProfileKind::HardCore => Profile::HardCore,
            ProfileKind::SmoothedWell => Profile::SmoothedWell { depth: need(p.depth, "depth")? },
            ProfileKind::SquareWell => Profile::SquareWell { value: need(p.value, "value")? },
            ProfileKind::Tabulated => {
                let file = p.table.as_ref().ok_or_else(|| Error::Config("potential.table is required".into()))?;
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                Profile::Tabulated(CubicSpline::parse_table(&text).map_err(cfg_err)?)
            }
        };
        PotentialModel::new(p.core, p.range, profile).map_err(cfg_err)
    }

    fn boundary(&self, base: &FsPath) -> Result<Boundary> {
        let b = &self.boundary;
        Ok(match b.kind {
            BoundaryKind::Empty => Boundary::Empty,
            BoundaryKind::Classical => {
                let pts = b.points.as_deref().unwrap_or_default();
                Boundary::Classical { points: points(self.system.dim, pts, "boundary.points")? }
            }
            BoundaryKind::Loops => {
                let file = b.file.as_ref().ok_or_else(|| Error::Config("boundary.file is required".into()))?;
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let loops: LoopConfiguration = serde_json::from_str(&text).map_err(cfg_err)?;
                Boundary::Loops { loops }
            }
        })
    }

    /// Builds and validates the sampler parameters.
    pub fn params(&self, base: &FsPath) -> Result<SimulationParams> {
        let s = &self.system;
        let mut p = SimulationParams::new(self.region()?, s.z, s.beta, self.potential_model(base)?, s.slices, s.k_max);
        p.inner = self.inner()?;
        p.boundary = self.boundary(base)?;
        let c = &self.chain;
        p.moves = c.moves;
        if let Some(w) = c.wiggle_max {
            p.wiggle_max = w;
        }
        p.steps_per_sweep = c.steps_per_sweep;
        p.sweeps = c.sweeps;
        p.burn_in = c.burn_in;
        p.thin = c.thin;
        p.seed = c.seed;
        if c.chains == 0 {
            return Err(Error::Config("chain.chains must be at least 1".into()));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn inner(&self) -> Result<Option<BoxRegion>> {
        self.estimators.inner.as_ref().map(|b| b.region().map_err(|e| Error::Config(format!("estimators.inner: {e}")))).transpose()
    }

    pub fn compat_inner(&self) -> Result<Option<BoxRegion>> {
        self.estimators
            .compat_inner
            .as_ref()
            .map(|b| b.region().map_err(|e| Error::Config(format!("estimators.compat_inner: {e}"))))
            .transpose()
    }

    pub fn kernel_pairs(&self) -> Result<Vec<KernelPair>> {
        pairs(self.system.dim, &self.estimators.kernel_pairs, "estimators.kernel_pairs")
    }

    pub fn compat_pairs(&self) -> Result<Vec<KernelPair>> {
        pairs(self.system.dim, &self.estimators.compat_pairs, "estimators.compat_pairs")
    }

    pub fn output_dir(&self, base: &FsPath) -> PathBuf {
        base.join(&self.output.dir)
    }
}

fn pairs(dim: usize, specs: &[PairSpec], what: &str) -> Result<Vec<KernelPair>> {
    specs
        .iter()
        .map(|p| Ok(KernelPair { x0: points(dim, &p.x0, what)?, y0: points(dim, &p.y0, what)? }))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORACLE_BOX: &str = r#"
schema_version = 1

[system]
dim = 1
half_side = 0.5
z = 0.3
beta = 0.5
slices = 2
k_max = 1

[potential]
core = 0.6
range = 1.2

[chain]
seed = 7
sweeps = 200

[estimators]
inner = { center = [0.0], half_side = 0.43333333333333335 }
kernel_pairs = [{ x0 = [[-0.2]], y0 = [[0.1]] }]
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::parse(ORACLE_BOX).unwrap();
        assert_eq!(cfg.chain.burn_in, 100);
        assert_eq!(cfg.validate.checks.len(), CheckName::ALL.len());
        let p = cfg.params(FsPath::new(".")).unwrap();
        assert_eq!(p.seed, 7);
        assert_eq!(p.sweeps, 200);
        assert_eq!(cfg.kernel_pairs().unwrap().len(), 1);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(ORACLE_BOX).unwrap();
        let text = cfg.render().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(cfg.hash().unwrap(), RunConfig::parse(&text).unwrap().hash().unwrap());
    }

    #[test]
    fn missing_key_is_named_with_line() {
        let text = ORACLE_BOX.replace("z = 0.3\n", "");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("`z`"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_checks_rejected() {
        let text = ORACLE_BOX.replace("k_max = 1", "k_max = 1\nfugacity = 2");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
        let text = format!("{ORACLE_BOX}\n[validate]\nchecks = [\"trace\", \"nonsense\"]\n");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("nonsense"), "{msg}");
    }

    #[test]
    fn schema_version_checked() {
        let text = ORACLE_BOX.replace("schema_version = 1", "schema_version = 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn trajectory_hash_ignores_run_length() {
        let a = RunConfig::parse(ORACLE_BOX).unwrap();
        let mut b = a.clone();
        b.chain.sweeps = 10;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.trajectory_hash().unwrap(), b.trajectory_hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        b.chain.seed = 8;
        assert_ne!(a.trajectory_hash().unwrap(), b.trajectory_hash().unwrap());
    }

    #[test]
    fn profile_parameters_required() {
        let text = ORACLE_BOX.replace("range = 1.2", "range = 1.2\nprofile = \"smoothed_well\"");
        let cfg = RunConfig::parse(&text).unwrap();
        let msg = cfg.params(FsPath::new(".")).unwrap_err().to_string();
        assert!(msg.contains("depth"), "{msg}");
    }
}
