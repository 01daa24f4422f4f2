//! Cut-layer profile of the split model.
//!
//! A profile lists, for every admissible cut index, the forward workload on
//! each side of the cut (FLOPs per sample), the size of the smashed activation
//! and its gradient (bits per sample) and the size of the vehicle-side model
//! (bits). Backward workload is `bwd_factor` times the forward workload, and
//! `flops_per_cycle` converts FLOPs to CPU cycles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FLOPs slack allowed when checking that vehicle + server workload is the
/// same at every cut (the shipped table is rounded to 0.01 GFLOPs).
pub const CONSERVATION_TOLERANCE_FLOPS: f64 = 1e7;

const DEFAULT_PROFILE_JSON: &str = include_str!("../../../profiles/resnet18.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutLayerRow {
    pub cut: usize,
    pub fwd_vehicle_flops: f64,
    pub fwd_server_flops: f64,
    pub smashed_bits: f64,
    pub smashed_grad_bits: f64,
    pub vehicle_model_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutLayerProfile {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_bwd_factor")]
    pub bwd_factor: f64,
    pub flops_per_cycle: f64,
    pub layers: Vec<CutLayerRow>,
}

fn default_bwd_factor() -> f64 {
    2.0
}

/// Cycle counts for a batch, split at the cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadCycles {
    pub vehicle: f64,
    pub server: f64,
}

/// Payload sizes in bits: `uplink` is smashed data plus the vehicle-side
/// model, `downlink` is the smashed gradient plus the vehicle-side model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payload {
    pub uplink: f64,
    pub downlink: f64,
}

/// Load and validate a profile file.
pub fn load_profile(path: impl AsRef<Path>) -> Result<CutLayerProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CutLayerProfile::from_json(&text)
}

impl CutLayerProfile {
    pub fn from_json(text: &str) -> Result<Self> {
        let profile: CutLayerProfile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("profile: {e}")))?;
        profile.validate()?;
        Ok(profile)
    }

    /// The bundled ResNet18 block-split profile.
    pub fn resnet18() -> Self {
        Self::from_json(DEFAULT_PROFILE_JSON).expect("bundled profile is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.layers.first().ok_or_else(|| Error::InvalidProfile {
            cut: 0,
            reason: "profile has no layers".into(),
        })?;
        if !(self.flops_per_cycle > 0.0 && self.flops_per_cycle.is_finite()) {
            return Err(Error::InvalidProfile {
                cut: first.cut,
                reason: format!("flops_per_cycle must be > 0, got {}", self.flops_per_cycle),
            });
        }
        if !(self.bwd_factor >= 0.0 && self.bwd_factor.is_finite()) {
            return Err(Error::InvalidProfile {
                cut: first.cut,
                reason: format!("bwd_factor must be >= 0, got {}", self.bwd_factor),
            });
        }
        let last = self.layers.last().unwrap();
        let total = last.fwd_vehicle_flops + last.fwd_server_flops;
        for (i, row) in self.layers.iter().enumerate() {
            let bad = |reason: String| Error::InvalidProfile {
                cut: row.cut,
                reason,
            };
            let fields = [
                row.fwd_vehicle_flops,
                row.fwd_server_flops,
                row.smashed_bits,
                row.smashed_grad_bits,
                row.vehicle_model_bits,
            ];
            if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(bad("sizes and workloads must be finite and >= 0".into()));
            }
            if row.smashed_grad_bits != row.smashed_bits {
                return Err(bad(format!(
                    "gradient size {} differs from activation size {}",
                    row.smashed_grad_bits, row.smashed_bits
                )));
            }
            let sum = row.fwd_vehicle_flops + row.fwd_server_flops;
            if (sum - total).abs() > CONSERVATION_TOLERANCE_FLOPS {
                return Err(bad(format!(
                    "vehicle + server workload {sum} differs from {total}"
                )));
            }
            if i > 0 {
                let prev = &self.layers[i - 1];
                if row.cut <= prev.cut {
                    return Err(bad("cut indices must be strictly increasing".into()));
                }
                if row.fwd_vehicle_flops < prev.fwd_vehicle_flops {
                    return Err(bad(format!(
                        "vehicle workload decreases from cut {} to {}",
                        prev.cut, row.cut
                    )));
                }
                if row.fwd_server_flops > prev.fwd_server_flops {
                    return Err(bad(format!(
                        "server workload increases from cut {} to {}",
                        prev.cut, row.cut
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn cut_layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().map(|r| r.cut)
    }

    pub fn contains(&self, cut: usize) -> bool {
        self.layers.iter().any(|r| r.cut == cut)
    }

    pub fn row(&self, cut: usize) -> Result<&CutLayerRow> {
        self.layers
            .iter()
            .find(|r| r.cut == cut)
            .ok_or(Error::UnknownCutLayer(cut))
    }

    /// Forward + backward cycles per sample on the vehicle, `c_v(ε)`.
    pub fn vehicle_cycles_per_sample(&self, cut: usize) -> Result<f64> {
        let row = self.row(cut)?;
        Ok((1.0 + self.bwd_factor) * row.fwd_vehicle_flops / self.flops_per_cycle)
    }

    /// Forward + backward cycles per sample on the edge server, `c_r(ε)`.
    pub fn server_cycles_per_sample(&self, cut: usize) -> Result<f64> {
        let row = self.row(cut)?;
        Ok((1.0 + self.bwd_factor) * row.fwd_server_flops / self.flops_per_cycle)
    }

    pub fn workload_cycles(&self, cut: usize, samples: f64) -> Result<WorkloadCycles> {
        if !(samples >= 0.0) {
            return Err(Error::invalid(format!("sample count must be >= 0, got {samples}")));
        }
        Ok(WorkloadCycles {
            vehicle: samples * self.vehicle_cycles_per_sample(cut)?,
            server: samples * self.server_cycles_per_sample(cut)?,
        })
    }

    pub fn payload_bits(&self, cut: usize, samples: f64) -> Result<Payload> {
        if !(samples >= 0.0) {
            return Err(Error::invalid(format!("sample count must be >= 0, got {samples}")));
        }
        let row = self.row(cut)?;
        Ok(Payload {
            uplink: samples * row.smashed_bits + row.vehicle_model_bits,
            downlink: samples * row.smashed_grad_bits + row.vehicle_model_bits,
        })
    }

    /// Forward + backward cycles per sample for the whole, unsplit model.
    pub fn full_model_cycles_per_sample(&self) -> f64 {
        let row = &self.layers[0];
        (1.0 + self.bwd_factor) * (row.fwd_vehicle_flops + row.fwd_server_flops)
            / self.flops_per_cycle
    }

    /// Size of the whole model in bits (vehicle side at the deepest cut).
    pub fn full_model_bits(&self) -> f64 {
        self.layers.last().map(|r| r.vehicle_model_bits).unwrap_or(0.0)
    }
}
