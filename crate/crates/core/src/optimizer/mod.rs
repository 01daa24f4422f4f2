//! Joint cut-layer, power, bandwidth and frequency optimisation.
//!
//! Minimising the round time `T` under per-vehicle energy budgets is split
//! into three blocks that are solved in turn until the allocation settles:
//!
//! 1. [`select_cut_layers`]: per-vehicle enumeration of the cut layer.
//! 2. [`optimize_power_sca`]: transmit power by successive convex
//!    approximation of the energy constraint.
//! 3. [`allocate_resources_kkt`]: bandwidth shares and CPU frequencies from
//!    the KKT conditions of the (convex) remaining problem.
//!
//! [`joint_bcd`] drives the blocks; [`brute_force_oracle`] is a grid search
//! used to check them on small instances.

mod bcd;
mod cut_layer;
mod oracle;
mod power;
mod resource;
mod selection;

pub use bcd::{joint_bcd, joint_bcd_from, BcdOptions, OptimizerReport};
pub use cut_layer::{select_cut_layers, CutChoice};
pub use oracle::{brute_force_oracle, OracleGrid, OracleResult, ORACLE_MAX_VEHICLES};
pub use power::{energy_at_power, energy_derivative, linearized_energy, optimize_power_sca, ScaOptions, ScaOutcome};
pub use resource::{allocate_resources_kkt, KktOptions, KktOutcome};
pub use selection::{nominal_round_times, nominal_screen};

use crate::cost::RoundScenario;
use crate::error::{Error, Result};

/// Per-vehicle coefficients of the bandwidth/frequency subproblem for a fixed
/// cut layer and power.
///
/// With these, vehicle `n`'s parallel time is `A/f + B/β` and its energy is
/// `D f² + F/β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryTerms {
    /// `|D_n| c_v(ε)`, cycles.
    pub a: f64,
    /// `s̄_a(ε) / (W ln(1 + SNR))`, seconds at full bandwidth.
    pub b: f64,
    /// `(ζ/2) |D_n| c_v(ε)`.
    pub d: f64,
    /// `φ B`, joules at full bandwidth.
    pub f: f64,
}

/// Coefficients of every vehicle plus the shared serial time `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemTerms {
    pub vehicles: Vec<AuxiliaryTerms>,
    /// `Σ_n (s̄_g/R_DL + |D_n| c_r/f_r)`, seconds.
    pub c: f64,
}

/// Build the coefficients for cut layers `cuts` and powers `powers`.
pub fn auxiliary_terms(sc: &RoundScenario, cuts: &[usize], powers: &[f64]) -> Result<SubproblemTerms> {
    if cuts.len() != sc.vehicles.len() || powers.len() != sc.vehicles.len() {
        return Err(Error::invalid("one cut and one power per vehicle required"));
    }
    let r_dl = sc.downlink_rate()?;
    let w = sc.channel.bandwidth_hz;
    let mut vehicles = Vec::with_capacity(cuts.len());
    let mut c = 0.0;
    for ((v, &cut), &phi) in sc.vehicles.iter().zip(cuts).zip(powers) {
        let n = v.dataset_size as f64;
        let payload = sc.profile.payload_bits(cut, n)?;
        let work = sc.profile.workload_cycles(cut, n)?;
        let se = sc.channel.spectral_efficiency(v.gain, phi, v.distance_to_ec_m)?;
        if !(se > 0.0) {
            return Err(Error::Infeasible {
                vehicle: v.id,
                reason: "zero uplink spectral efficiency".into(),
            });
        }
        let b = payload.uplink / (w * se);
        vehicles.push(AuxiliaryTerms {
            a: work.vehicle,
            b,
            d: 0.5 * v.capacitance * work.vehicle,
            f: phi * b,
        });
        c += payload.downlink / r_dl + work.server / sc.ec_cpu_hz;
    }
    Ok(SubproblemTerms { vehicles, c })
}
