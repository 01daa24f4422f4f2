//! Vehicle spawning, standing time and mobility-based selection.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::dbm_to_watts;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::invalid(format!(
                "{name}: invalid range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Box constraints on the per-vehicle decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceBounds {
    /// CPU frequency, cycles/s.
    pub cpu_hz: Range,
    /// Transmit power, W.
    pub power_w: Range,
}

impl ResourceBounds {
    pub fn validate(&self) -> Result<()> {
        self.cpu_hz.validate("cpu_hz")?;
        self.power_w.validate("power_w")?;
        if self.cpu_hz.min <= 0.0 {
            return Err(Error::invalid("cpu_hz.min must be > 0"));
        }
        if self.power_w.min <= 0.0 {
            return Err(Error::invalid("power_w.min must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: usize,
    /// Metres already travelled past the coverage entrance.
    pub entry_distance_m: f64,
    /// Distance to the edge server antenna, m.
    pub distance_to_ec_m: f64,
    /// m/s, constant within a round.
    pub speed_mps: f64,
    /// Operating CPU frequency, cycles/s.
    pub cpu_hz: f64,
    /// Operating transmit power, W.
    pub tx_power_w: f64,
    /// Uplink channel gain `h_n`.
    pub gain: f64,
    /// Local dataset size `|D_n|`.
    pub dataset_size: usize,
    /// Effective switched capacitance `ζ`.
    pub capacitance: f64,
}

/// Spawn parameters. Powers are in dBm here and converted on spawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// Poisson mean of the number of vehicles in coverage.
    pub mean_count: f64,
    /// Coverage diameter `D`, m. The edge server sits at the midpoint.
    pub coverage_diameter_m: f64,
    /// Perpendicular distance from the road to the antenna, m.
    pub road_offset_m: f64,
    /// Upper bound on the time one round may take, s.
    pub t_max_s: f64,
    pub speed_mps: Range,
    pub cpu_hz: Range,
    pub power_dbm: Range,
    /// Inclusive range of local dataset sizes.
    pub dataset_size: Range,
    pub capacitance: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            mean_count: 15.0,
            coverage_diameter_m: 1000.0,
            road_offset_m: 10.0,
            t_max_s: 60.0,
            speed_mps: Range::new(10.0, 30.0),
            cpu_hz: Range::new(1e10, 2e10),
            power_dbm: Range::new(20.0, 30.0),
            dataset_size: Range::new(50.0, 150.0),
            capacitance: 1e-30,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_count > 0.0) {
            return Err(Error::invalid("mobility.mean_count must be > 0"));
        }
        if !(self.coverage_diameter_m > 0.0) {
            return Err(Error::invalid("mobility.coverage_diameter_m must be > 0"));
        }
        if !(self.road_offset_m >= 0.0) {
            return Err(Error::invalid("mobility.road_offset_m must be >= 0"));
        }
        if !(self.t_max_s > 0.0) {
            return Err(Error::invalid("mobility.t_max_s must be > 0"));
        }
        if !(self.capacitance > 0.0) {
            return Err(Error::invalid("mobility.capacitance must be > 0"));
        }
        self.speed_mps.validate("mobility.speed_mps")?;
        self.cpu_hz.validate("mobility.cpu_hz")?;
        self.power_dbm.validate("mobility.power_dbm")?;
        self.dataset_size.validate("mobility.dataset_size")?;
        if self.speed_mps.min <= 0.0 {
            return Err(Error::invalid("mobility.speed_mps.min must be > 0"));
        }
        if self.dataset_size.min < 1.0 {
            return Err(Error::invalid("mobility.dataset_size.min must be >= 1"));
        }
        Ok(())
    }

    /// Resource box implied by the spawn ranges.
    pub fn bounds(&self) -> ResourceBounds {
        ResourceBounds {
            cpu_hz: self.cpu_hz,
            power_w: Range::new(
                dbm_to_watts(self.power_dbm.min),
                dbm_to_watts(self.power_dbm.max),
            ),
        }
    }
}

/// Draw a Poisson number of vehicles and spawn them.
pub fn spawn_vehicles<R: Rng + ?Sized>(cfg: &MobilityConfig, rng: &mut R) -> Result<Vec<VehicleState>> {
    cfg.validate()?;
    let poisson = Poisson::new(cfg.mean_count)
        .map_err(|e| Error::invalid(format!("poisson mean {}: {e}", cfg.mean_count)))?;
    let count = poisson.sample(rng) as usize;
    (0..count).map(|id| spawn_one(cfg, id, rng)).collect()
}

/// Spawn exactly `count` vehicles with ids `0..count`.
pub fn spawn_fleet<R: Rng + ?Sized>(
    cfg: &MobilityConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<VehicleState>> {
    cfg.validate()?;
    (0..count).map(|id| spawn_one(cfg, id, rng)).collect()
}

/// Spawn a single vehicle with the given id.
pub fn spawn_one<R: Rng + ?Sized>(cfg: &MobilityConfig, id: usize, rng: &mut R) -> Result<VehicleState> {
    let d = cfg.coverage_diameter_m;
    let entry = rng.random_range(0.0..d);
    let along = entry - 0.5 * d;
    let distance = (along * along + cfg.road_offset_m * cfg.road_offset_m).sqrt();
    let speed = cfg.speed_mps.sample(rng);
    let cpu = cfg.cpu_hz.sample(rng);
    let power = dbm_to_watts(cfg.power_dbm.sample(rng));
    let gain: f64 = Exp1.sample(rng);
    let lo = cfg.dataset_size.min.ceil() as usize;
    let hi = cfg.dataset_size.max.floor() as usize;
    if lo > hi {
        return Err(Error::invalid("mobility.dataset_size contains no integer"));
    }
    let dataset_size = rng.random_range(lo..=hi);
    Ok(VehicleState {
        id,
        entry_distance_m: entry,
        distance_to_ec_m: distance,
        speed_mps: speed,
        cpu_hz: cpu,
        tx_power_w: power,
        gain,
        dataset_size,
        capacitance: cfg.capacitance,
    })
}

/// Time the vehicle stays in coverage, capped by `t_max`.
pub fn standing_time(v: &VehicleState, diameter_m: f64, t_max_s: f64) -> Result<f64> {
    if v.entry_distance_m > diameter_m {
        return Err(Error::OutsideCoverage {
            id: v.id,
            travelled: v.entry_distance_m,
            diameter: diameter_m,
        });
    }
    if !(v.speed_mps > 0.0) || !(t_max_s > 0.0) {
        return Err(Error::invalid("speed and t_max must be > 0"));
    }
    Ok(((diameter_m - v.entry_distance_m) / v.speed_mps).min(t_max_s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub eligible: Vec<bool>,
    pub probability: Vec<f64>,
    /// Indices (into the input slice) of selected vehicles, ascending.
    pub selected: Vec<usize>,
}

impl SelectionOutcome {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Eligibility `t_n <= t̄_n` and uniform probability over eligible vehicles.
pub fn select_vehicles(round_time: &[f64], standing: &[f64]) -> Result<SelectionOutcome> {
    if round_time.len() != standing.len() {
        return Err(Error::invalid(format!(
            "{} round times for {} standing times",
            round_time.len(),
            standing.len()
        )));
    }
    let eligible: Vec<bool> = round_time
        .iter()
        .zip(standing)
        .map(|(t, s)| t <= s)
        .collect();
    let count = eligible.iter().filter(|e| **e).count();
    let probability = eligible
        .iter()
        .map(|&e| if e { 1.0 / count as f64 } else { 0.0 })
        .collect();
    let selected = eligible
        .iter()
        .enumerate()
        .filter_map(|(i, &e)| e.then_some(i))
        .collect();
    Ok(SelectionOutcome {
        eligible,
        probability,
        selected,
    })
}
