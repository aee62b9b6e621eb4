//! Experiment configuration. Every struct rejects unknown keys, so a typo
//! such as `epsilonn` fails with an error naming the key.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use anderson_core::pam::{LaplacianKind, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_budget() -> f64 {
    600.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Wall-clock cap in seconds, checked between steps.
    #[serde(default = "default_budget")]
    pub budget_seconds: f64,
}

/// Several experiments run one after another, each with its own manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub runs: Vec<Config>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    WhiteNoise(WhiteNoise),
    Renorm2dRate(Renorm2dRate),
    Renorm3dRate(Renorm3dRate),
    EnhancedCauchy(EnhancedCauchy),
    ShiftIdentities(ShiftIdentities),
    SemigroupProps(SemigroupProps),
    TwoRouteOracle(TwoRouteOracle),
    IdsCoverage(IdsCoverage),
    WeylSweep(WeylSweep),
    ResonanceSweep(ResonanceSweep),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::WhiteNoise(_) => "white_noise",
            Experiment::Renorm2dRate(_) => "renorm2d_rate",
            Experiment::Renorm3dRate(_) => "renorm3d_rate",
            Experiment::EnhancedCauchy(_) => "enhanced_cauchy",
            Experiment::ShiftIdentities(_) => "shift_identities",
            Experiment::SemigroupProps(_) => "semigroup_props",
            Experiment::TwoRouteOracle(_) => "two_route_oracle",
            Experiment::IdsCoverage(_) => "ids_coverage",
            Experiment::WeylSweep(_) => "weyl_sweep",
            Experiment::ResonanceSweep(_) => "resonance_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sample,
    Renorm,
    Enhance,
    Solve,
    Spectrum,
    Weyl,
    Resonance,
    Sweep,
}

impl Command {
    /// Experiment kinds a subcommand accepts; `sweep` accepts all of them.
    pub fn accepts(self, e: &Experiment) -> bool {
        use Experiment as E;
        match self {
            Command::Sample => matches!(e, E::WhiteNoise(_)),
            Command::Renorm => matches!(e, E::Renorm2dRate(_) | E::Renorm3dRate(_)),
            Command::Enhance => matches!(e, E::EnhancedCauchy(_) | E::ShiftIdentities(_)),
            Command::Solve => matches!(e, E::SemigroupProps(_)),
            Command::Spectrum => matches!(e, E::TwoRouteOracle(_) | E::IdsCoverage(_)),
            Command::Weyl => matches!(e, E::WeylSweep(_)),
            Command::Resonance => matches!(e, E::ResonanceSweep(_)),
            Command::Sweep => true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhiteNoise {
    pub dim: usize,
    pub extent: f64,
    pub n: usize,
    /// Also write the mollified field.
    pub epsilon: Option<f64>,
}

impl Default for WhiteNoise {
    fn default() -> Self {
        Self { dim: 2, extent: 8.0, n: 64, epsilon: Some(0.5) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Renorm2dRate {
    pub extent: f64,
    pub epsilons: Vec<f64>,
    /// `ε/h` at every `ε`; `N = extent · resolution / ε` must be a power of two.
    pub resolution: f64,
    pub slope_tolerance: f64,
}

impl Default for Renorm2dRate {
    fn default() -> Self {
        Self {
            extent: 5.0,
            epsilons: (3..=7).map(|j| 2f64.powi(-j)).collect(),
            resolution: 6.4,
            slope_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Renorm3dRate {
    /// `c_ε` sweep at a fixed `ε/h`.
    pub c_extent: f64,
    pub c_epsilons: Vec<f64>,
    pub c_resolution: f64,
    pub c_tolerance: f64,
    /// Monte-Carlo `c_ε^{(1)}` sweep.
    pub c1_extent: f64,
    pub c1_epsilons: Vec<f64>,
    pub c1_samples: Vec<usize>,
    pub c1_resolution: f64,
    pub c1_tolerance: f64,
}

impl Default for Renorm3dRate {
    fn default() -> Self {
        Self {
            c_extent: 1.0,
            c_epsilons: vec![0.25, 0.125, 0.0625],
            c_resolution: 8.0,
            c_tolerance: 0.15,
            c1_extent: 4.0,
            c1_epsilons: vec![0.5, 0.25],
            c1_samples: vec![4096, 1024],
            c1_resolution: 2.0,
            c1_tolerance: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnhancedCauchy {
    pub extent: f64,
    pub n: usize,
    pub epsilons: Vec<f64>,
    pub seeds: u64,
    pub kappa: f64,
}

impl Default for EnhancedCauchy {
    fn default() -> Self {
        Self { extent: 8.0, n: 256, epsilons: vec![1.0, 0.5, 0.25, 0.125], seeds: 4, kappa: 0.9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftIdentities {
    pub extent: f64,
    pub n: usize,
    pub epsilon: f64,
    pub shifts: Vec<[i64; 2]>,
    pub tolerance: f64,
}

impl Default for ShiftIdentities {
    fn default() -> Self {
        Self { extent: 8.0, n: 128, epsilon: 0.25, shifts: vec![[5, -3], [64, 64], [-1, 17]], tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupProps {
    pub extent: f64,
    pub n: usize,
    pub amplitude: f64,
    pub t: f64,
    pub split: f64,
    pub dts: Vec<f64>,
    pub scheme: Scheme,
    pub laplacian: LaplacianKind,
    pub symmetry_tolerance: f64,
    pub composition_tolerance: f64,
}

impl Default for SemigroupProps {
    fn default() -> Self {
        Self {
            extent: 8.0,
            n: 32,
            amplitude: 1.0,
            t: 0.25,
            split: 0.1,
            dts: vec![4e-4, 2e-4, 1e-4],
            scheme: Scheme::Strang,
            laplacian: LaplacianKind::Spectral,
            symmetry_tolerance: 1e-6,
            composition_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Smooth low-mode enhanced noise.
    Manufactured,
    /// `Q_ε(ξ)` from lattice white noise.
    WhiteNoise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoRouteOracle {
    pub extent: f64,
    pub n: usize,
    pub source: NoiseSource,
    pub amplitude: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub tolerance: f64,
}

impl Default for TwoRouteOracle {
    fn default() -> Self {
        Self {
            extent: 8.0,
            n: 16,
            source: NoiseSource::Manufactured,
            amplitude: 1.0,
            epsilon: 0.5,
            dt: 1e-3,
            times: vec![0.1, 0.25, 0.5],
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdsCoverage {
    pub extents: Vec<f64>,
    pub spacing: f64,
    pub epsilon: f64,
    pub seeds: u64,
    pub interval: [f64; 2],
    pub distance: f64,
    pub bins: usize,
    pub coverage_target: f64,
    pub laplacian: LaplacianKind,
}

impl Default for IdsCoverage {
    fn default() -> Self {
        Self {
            extents: vec![8.0, 16.0],
            spacing: 0.5,
            epsilon: 1.0,
            seeds: 8,
            interval: [-5.0, 20.0],
            distance: 0.5,
            bins: 64,
            coverage_target: 0.95,
            laplacian: LaplacianKind::Fd2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeylSweep {
    pub extent: f64,
    pub n: usize,
    pub epsilon: f64,
    pub seeds: u64,
    pub radii: Vec<f64>,
    /// Target energy; defaults to `C_ε`.
    pub energy: Option<f64>,
    pub laplacian: LaplacianKind,
}

impl Default for WeylSweep {
    fn default() -> Self {
        Self {
            extent: 64.0,
            n: 256,
            epsilon: 1.0,
            seeds: 8,
            radii: vec![1.0, 2.0, 4.0],
            energy: None,
            laplacian: LaplacianKind::Spectral,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceSweep {
    pub c: f64,
    pub deltas: Vec<f64>,
    pub residual_tolerance: f64,
}

impl Default for ResonanceSweep {
    fn default() -> Self {
        Self { c: 1.0, deltas: (0..12).map(|i| 0.4 * 0.6f64.powi(i)).collect(), residual_tolerance: 1e-8 }
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    serde_json::from_str(text).context("invalid experiment config")
}

pub fn parse_sweep(text: &str) -> Result<SweepConfig> {
    // a single experiment is a sweep of one
    let value: serde_json::Value = serde_json::from_str(text).context("config is not JSON")?;
    if value.get("runs").is_some() {
        return serde_json::from_value(value).context("invalid sweep config");
    }
    Ok(SweepConfig { runs: vec![parse_config(text)?] })
}

pub fn check_command(cmd: Command, cfg: &Config) -> Result<()> {
    if !cmd.accepts(&cfg.experiment) {
        bail!("experiment `{}` is not run by this subcommand", cfg.experiment.name());
    }
    if !(cfg.budget_seconds > 0.0) {
        bail!("budget_seconds must be positive");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"experiment": {"kind": "renorm2d_rate", "epsilonn": [0.1]}}"#).unwrap_err();
        assert!(format!("{err:#}").contains("epsilonn"), "{err:#}");
        let err = parse_config(r#"{"experiment": {"kind": "renorm2d_rate"}, "sed": 3}"#).unwrap_err();
        assert!(format!("{err:#}").contains("sed"), "{err:#}");
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_config(r#"{"experiment": {"kind": "resonance_sweep", "c": 2.0}}"#).unwrap();
        assert_eq!(cfg.formats, vec![Format::Csv, Format::Json]);
        assert_eq!(cfg.budget_seconds, 600.0);
        let Experiment::ResonanceSweep(r) = cfg.experiment else { panic!() };
        assert_eq!(r.c, 2.0);
        assert_eq!(r.deltas.len(), 12);
    }

    #[test]
    fn subcommands_gate_kinds() {
        let cfg = parse_config(r#"{"experiment": {"kind": "weyl_sweep"}}"#).unwrap();
        assert!(check_command(Command::Weyl, &cfg).is_ok());
        assert!(check_command(Command::Sweep, &cfg).is_ok());
        assert!(check_command(Command::Renorm, &cfg).is_err());
    }

    #[test]
    fn sweep_accepts_single_or_list() {
        assert_eq!(parse_sweep(r#"{"experiment": {"kind": "weyl_sweep"}}"#).unwrap().runs.len(), 1);
        let two = r#"{"runs": [{"experiment": {"kind": "weyl_sweep"}}, {"experiment": {"kind": "resonance_sweep"}}]}"#;
        assert_eq!(parse_sweep(two).unwrap().runs.len(), 2);
    }
}
