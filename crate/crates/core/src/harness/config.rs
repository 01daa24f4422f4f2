//! Scenario file: one JSON document holding every knob of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::convergence::ToyConfig;
use crate::cost::{RoundScenario, Scheme};
use crate::error::{Error, Result};
use crate::mobility::{MobilityConfig, VehicleState};
use crate::optimizer::{BcdOptions, KktOptions, ScaOptions};
use crate::profile::{load_profile, CutLayerProfile};
use crate::radio::{dbm_to_watts, ChannelParams};
use crate::split_train::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub pathloss_exp: f64,
    pub ec_gain: f64,
    pub ec_power_dbm: f64,
    pub min_distance_m: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2e7,
            noise_dbm: -100.0,
            pathloss_exp: 3.0,
            ec_gain: 1.0,
            ec_power_dbm: 40.0,
            min_distance_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcSection {
    pub cpu_hz: f64,
}

impl Default for EcSection {
    fn default() -> Self {
        Self { cpu_hz: 5e10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    /// Profile file; the bundled ResNet18 profile when absent.
    pub path: Option<PathBuf>,
    pub cut_layers: Vec<usize>,
    pub raw_sample_bits: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            path: None,
            cut_layers: (2..=8).collect(),
            raw_sample_bits: 32.0 * 32.0 * 3.0 * 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub tol_power: f64,
    pub tol_freq: f64,
    pub tol_beta: f64,
    pub max_sweeps: usize,
    pub sca_tolerance: f64,
    pub sca_max_iters: usize,
    pub kkt_tolerance: f64,
    pub kkt_max_iters: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let b = BcdOptions::default();
        Self {
            tol_power: b.tol_power,
            tol_freq: b.tol_freq,
            tol_beta: b.tol_beta,
            max_sweeps: b.max_sweeps,
            sca_tolerance: b.sca.tolerance,
            sca_max_iters: b.sca.max_iters,
            kkt_tolerance: b.kkt.tolerance,
            kkt_max_iters: b.kkt.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Number of vehicles per round at each sweep point.
    pub vehicles: Vec<usize>,
    /// Independent scenarios per sweep point.
    pub scenarios: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            vehicles: vec![5, 10, 15, 20, 25],
            scenarios: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub channel: ChannelSection,
    pub mobility: MobilityConfig,
    pub ec: EcSection,
    /// Per-vehicle energy budget per round, J.
    pub energy_budget_j: f64,
    pub profile: ProfileSection,
    pub optimizer: OptimizerSection,
    pub training: TrainingConfig,
    pub convergence: ToyConfig,
    pub schemes: Vec<Scheme>,
    /// Rounds for `simulate`.
    pub rounds: usize,
    pub sweep: SweepSection,
}

/// Budget at which about 80% of random vehicles can run cut 2 at full
/// frequency and power on a 1/15 share (see `examples/calibrate.rs`).
pub const DEFAULT_ENERGY_BUDGET_J: f64 = 30.0;

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            channel: ChannelSection::default(),
            mobility: MobilityConfig::default(),
            ec: EcSection::default(),
            energy_budget_j: DEFAULT_ENERGY_BUDGET_J,
            profile: ProfileSection::default(),
            optimizer: OptimizerSection::default(),
            training: TrainingConfig::default(),
            convergence: ToyConfig::default(),
            schemes: vec![
                Scheme::Cl,
                Scheme::Fl,
                Scheme::Sl,
                Scheme::SlOptimal,
                Scheme::Sfl(2),
                Scheme::Sfl(4),
                Scheme::Sfl(6),
                Scheme::Asfv,
            ],
            rounds: 5,
            sweep: SweepSection::default(),
        }
    }
}

/// Set `path` (dot separated) in a JSON tree to `raw`, parsed as JSON when
/// possible and as a plain string otherwise.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::invalid(format!("bad override path `{path}`")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("`{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}

impl Scenario {
    /// Load a scenario file (or the defaults when `path` is `None`) and apply
    /// `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Scenario::default())?,
        };
        for (k, v) in overrides {
            apply_override(&mut tree, k, v)?;
        }
        let sc: Scenario =
            serde_json::from_value(tree).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_params().validate()?;
        self.mobility.validate()?;
        self.mobility.bounds().validate()?;
        if !(self.ec.cpu_hz > self.mobility.cpu_hz.max) {
            return Err(Error::invalid("ec.cpu_hz must exceed the fastest vehicle"));
        }
        if !(self.energy_budget_j > 0.0) {
            return Err(Error::invalid("energy_budget_j must be > 0"));
        }
        let o = &self.optimizer;
        for (name, v) in [
            ("tol_power", o.tol_power),
            ("tol_freq", o.tol_freq),
            ("tol_beta", o.tol_beta),
            ("sca_tolerance", o.sca_tolerance),
            ("kkt_tolerance", o.kkt_tolerance),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("optimizer.{name} must be > 0")));
            }
        }
        if o.max_sweeps == 0 {
            return Err(Error::invalid("optimizer.max_sweeps must be >= 1"));
        }
        if let Some(p) = &self.profile.path {
            if !p.exists() {
                return Err(Error::invalid(format!("profile file {} does not exist", p.display())));
            }
        }
        let profile = self.load_profile()?;
        for &c in &self.profile.cut_layers {
            profile.row(c)?;
        }
        if self.profile.cut_layers.is_empty() {
            return Err(Error::invalid("profile.cut_layers is empty"));
        }
        self.training.validate()?;
        self.convergence.validate()?;
        Ok(())
    }

    pub fn channel_params(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams {
            bandwidth_hz: c.bandwidth_hz,
            noise_power_w: dbm_to_watts(c.noise_dbm),
            pathloss_exp: c.pathloss_exp,
            ec_gain: c.ec_gain,
            ec_power_w: dbm_to_watts(c.ec_power_dbm),
            min_distance_m: c.min_distance_m,
        }
    }

    pub fn mobility_config(&self) -> MobilityConfig {
        self.mobility.clone()
    }

    pub fn load_profile(&self) -> Result<CutLayerProfile> {
        match &self.profile.path {
            Some(p) => load_profile(p),
            None => Ok(CutLayerProfile::resnet18()),
        }
    }

    pub fn bcd_options(&self) -> BcdOptions {
        let o = &self.optimizer;
        BcdOptions {
            tol_power: o.tol_power,
            tol_freq: o.tol_freq,
            tol_beta: o.tol_beta,
            max_sweeps: o.max_sweeps,
            sca: ScaOptions {
                tolerance: o.sca_tolerance,
                max_iters: o.sca_max_iters,
            },
            kkt: KktOptions {
                tolerance: o.kkt_tolerance,
                max_iters: o.kkt_max_iters,
            },
        }
    }

    /// Round scenario for the given vehicles.
    pub fn round_scenario(&self, profile: &CutLayerProfile, vehicles: Vec<VehicleState>) -> RoundScenario {
        RoundScenario {
            vehicles,
            profile: profile.clone(),
            channel: self.channel_params(),
            ec_cpu_hz: self.ec.cpu_hz,
            energy_budget_j: self.energy_budget_j,
            bounds: self.mobility.bounds(),
            cut_layers: self.profile.cut_layers.clone(),
            raw_sample_bits: self.profile.raw_sample_bits,
        }
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of [`Scenario::canonical_json`].
    pub fn config_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
