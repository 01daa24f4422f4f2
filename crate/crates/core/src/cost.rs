//! Per-phase delay and energy of one training round, the parallel round time
//! and the fixed-allocation baseline schemes.
//!
//! Phases for vehicle `n` with cut `ε`:
//!
//! | phase | delay | energy |
//! |---|---|---|
//! | model distribution | `t_d = s(ω^V)/R_DL` | - |
//! | vehicle forward | `t_e = |D|c_v^F/f` | `(ζ/2)|D|c_v^F f²` |
//! | smashed upload | `t_s = |D|s(A)/R_UL` | `φ t_s` |
//! | server fwd+bwd | `t_R = |D|c_r/f_r` | - |
//! | gradient download | `t_g = |D|s(gA)/R_DL` | - |
//! | vehicle backward | `t_u = |D|c_v^B/f` | `(ζ/2)|D|c_v^B f²` |
//! | model upload | `t_w = s(ω^V)/R_UL` | `φ t_w` |
//!
//! The round time is `T = max_n(t_e + t_u + t_s + t_w) + Σ_n(t_d + t_R + t_g)`:
//! vehicle compute and uplinks run in parallel, the edge server handles the
//! vehicles one after the other.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{ResourceBounds, VehicleState};
use crate::optimizer::{self, BcdOptions};
use crate::profile::CutLayerProfile;
use crate::radio::{self, ChannelParams};

/// Relative slack used when checking the energy budget of an allocation.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Decision variables for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub cut: usize,
    /// Uplink bandwidth share `β_n`.
    pub beta: f64,
    pub cpu_hz: f64,
    pub power_w: f64,
}

/// Everything needed to cost one round for a fixed set of vehicles.
#[derive(Debug, Clone)]
pub struct RoundScenario {
    /// The vehicles taking part in the round.
    pub vehicles: Vec<VehicleState>,
    pub profile: CutLayerProfile,
    pub channel: ChannelParams,
    /// Edge server CPU frequency `f_r`, cycles/s.
    pub ec_cpu_hz: f64,
    /// Per-vehicle energy budget `Ê`, J.
    pub energy_budget_j: f64,
    pub bounds: ResourceBounds,
    /// Admissible cut layers `E`.
    pub cut_layers: Vec<usize>,
    /// Size of one raw training sample, bits (centralised baseline).
    pub raw_sample_bits: f64,
}

impl RoundScenario {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.bounds.validate()?;
        if self.vehicles.is_empty() {
            return Err(Error::EmptyVehicleSet);
        }
        if self.cut_layers.is_empty() {
            return Err(Error::invalid("admissible cut-layer set is empty"));
        }
        for &cut in &self.cut_layers {
            self.profile.row(cut)?;
        }
        if !(self.ec_cpu_hz > 0.0) {
            return Err(Error::invalid("ec_cpu_hz must be > 0"));
        }
        if !(self.energy_budget_j > 0.0) {
            return Err(Error::invalid("energy budget must be > 0"));
        }
        if !(self.raw_sample_bits >= 0.0) {
            return Err(Error::invalid("raw_sample_bits must be >= 0"));
        }
        Ok(())
    }

    /// Broadcast rate over the vehicles of this round.
    pub fn downlink_rate(&self) -> Result<f64> {
        let d: Vec<f64> = self.vehicles.iter().map(|v| v.distance_to_ec_m).collect();
        radio::downlink_rate(&self.channel, &d)
    }

    /// A copy restricted to the vehicles at `indices`.
    pub fn subset(&self, indices: &[usize]) -> RoundScenario {
        RoundScenario {
            vehicles: indices.iter().map(|&i| self.vehicles[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Equal bandwidth split with each vehicle's spawned frequency and power.
    pub fn nominal_allocations(&self, cut: usize) -> Vec<Allocation> {
        let beta = 1.0 / self.vehicles.len() as f64;
        self.vehicles
            .iter()
            .map(|v| Allocation {
                cut,
                beta,
                cpu_hz: v.cpu_hz,
                power_w: v.tx_power_w,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseCosts {
    pub t_d: f64,
    pub t_e: f64,
    pub t_s: f64,
    pub t_r: f64,
    pub t_g: f64,
    pub t_u: f64,
    pub t_w: f64,
    pub e_e: f64,
    pub e_s: f64,
    pub e_u: f64,
    pub e_w: f64,
}

impl PhaseCosts {
    pub fn total_time(&self) -> f64 {
        self.t_d + self.t_e + self.t_s + self.t_r + self.t_g + self.t_u + self.t_w
    }

    pub fn total_energy(&self) -> f64 {
        self.e_e + self.e_s + self.e_u + self.e_w
    }

    pub fn comm_energy(&self) -> f64 {
        self.e_s + self.e_w
    }

    pub fn comp_energy(&self) -> f64 {
        self.e_e + self.e_u
    }

    /// Part of the vehicle's time that overlaps with other vehicles.
    pub fn parallel(&self) -> f64 {
        self.t_e + self.t_u + self.t_s + self.t_w
    }

    /// Part of the vehicle's time that the edge server spends on it alone.
    pub fn serial(&self) -> f64 {
        self.t_d + self.t_r + self.t_g
    }

    pub fn parallel_comm(&self) -> f64 {
        self.t_s + self.t_w
    }

    pub fn parallel_comp(&self) -> f64 {
        self.t_e + self.t_u
    }

    pub fn serial_comm(&self) -> f64 {
        self.t_d + self.t_g
    }

    pub fn serial_comp(&self) -> f64 {
        self.t_r
    }

    /// `(name, value, is_energy)` for every phase, in workflow order.
    pub fn named(&self) -> [(&'static str, f64, bool); 11] {
        [
            ("t_d", self.t_d, false),
            ("t_e", self.t_e, false),
            ("t_s", self.t_s, false),
            ("t_r", self.t_r, false),
            ("t_g", self.t_g, false),
            ("t_u", self.t_u, false),
            ("t_w", self.t_w, false),
            ("e_e", self.e_e, true),
            ("e_s", self.e_s, true),
            ("e_u", self.e_u, true),
            ("e_w", self.e_w, true),
        ]
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

fn uplink(v: &VehicleState, a: &Allocation, ch: &ChannelParams) -> Result<f64> {
    let r = radio::uplink_rate(ch, v.gain, a.power_w, v.distance_to_ec_m, a.beta)?;
    if !(r > 0.0) {
        return Err(Error::Infeasible {
            vehicle: v.id,
            reason: "uplink rate is zero".into(),
        });
    }
    Ok(r)
}

/// Delay and energy of every phase for one vehicle.
pub fn phase_costs(
    v: &VehicleState,
    a: &Allocation,
    profile: &CutLayerProfile,
    ch: &ChannelParams,
    downlink_rate: f64,
    ec_cpu_hz: f64,
) -> Result<PhaseCosts> {
    check_positive("cpu frequency", a.cpu_hz)?;
    check_positive("edge server frequency", ec_cpu_hz)?;
    if !(downlink_rate > 0.0) {
        return Err(Error::Infeasible {
            vehicle: v.id,
            reason: "downlink rate is zero".into(),
        });
    }
    let row = profile.row(a.cut)?;
    let r_ul = uplink(v, a, ch)?;
    let n = v.dataset_size as f64;
    let kappa = profile.flops_per_cycle;
    let fwd = n * row.fwd_vehicle_flops / kappa;
    let bwd = profile.bwd_factor * fwd;
    let server = n * (1.0 + profile.bwd_factor) * row.fwd_server_flops / kappa;
    let half_zeta_f2 = 0.5 * v.capacitance * a.cpu_hz * a.cpu_hz;
    let t_s = n * row.smashed_bits / r_ul;
    let t_w = row.vehicle_model_bits / r_ul;
    Ok(PhaseCosts {
        t_d: row.vehicle_model_bits / downlink_rate,
        t_e: fwd / a.cpu_hz,
        t_s,
        t_r: server / ec_cpu_hz,
        t_g: n * row.smashed_grad_bits / downlink_rate,
        t_u: bwd / a.cpu_hz,
        t_w,
        e_e: half_zeta_f2 * fwd,
        e_s: a.power_w * t_s,
        e_u: half_zeta_f2 * bwd,
        e_w: a.power_w * t_w,
    })
}

/// Per-vehicle totals `(t_n, e_n)` from the aggregated payloads, without
/// splitting into phases.
pub fn vehicle_round_cost(
    v: &VehicleState,
    a: &Allocation,
    profile: &CutLayerProfile,
    ch: &ChannelParams,
    downlink_rate: f64,
    ec_cpu_hz: f64,
) -> Result<(f64, f64)> {
    check_positive("cpu frequency", a.cpu_hz)?;
    let n = v.dataset_size as f64;
    let payload = profile.payload_bits(a.cut, n)?;
    let work = profile.workload_cycles(a.cut, n)?;
    let r_ul = uplink(v, a, ch)?;
    let t = payload.downlink / downlink_rate
        + work.vehicle / a.cpu_hz
        + work.server / ec_cpu_hz
        + payload.uplink / r_ul;
    let e = 0.5 * v.capacitance * work.vehicle * a.cpu_hz * a.cpu_hz
        + a.power_w * payload.uplink / r_ul;
    Ok((t, e))
}

/// `T` from per-vehicle phases. Returns the index of the vehicle setting the
/// parallel maximum alongside (lowest index on ties).
pub fn round_time(phases: &[PhaseCosts]) -> Result<(f64, usize)> {
    if phases.is_empty() {
        return Err(Error::EmptyVehicleSet);
    }
    let mut critical = 0;
    for (i, p) in phases.iter().enumerate() {
        if p.parallel() > phases[critical].parallel() {
            critical = i;
        }
    }
    let serial: f64 = phases.iter().map(PhaseCosts::serial).sum();
    Ok((phases[critical].parallel() + serial, critical))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleCost {
    pub vehicle: usize,
    pub alloc: Allocation,
    pub phases: PhaseCosts,
    pub time: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCostBreakdown {
    pub vehicles: Vec<VehicleCost>,
    pub downlink_rate: f64,
    /// `T`.
    pub round_time: f64,
    /// Index into `vehicles` of the vehicle that sets the parallel maximum.
    pub critical: usize,
}

impl RoundCostBreakdown {
    /// Communication share of `T`.
    pub fn comm_delay(&self) -> f64 {
        self.vehicles[self.critical].phases.parallel_comm()
            + self.vehicles.iter().map(|v| v.phases.serial_comm()).sum::<f64>()
    }

    /// Computation share of `T`.
    pub fn comp_delay(&self) -> f64 {
        self.vehicles[self.critical].phases.parallel_comp()
            + self.vehicles.iter().map(|v| v.phases.serial_comp()).sum::<f64>()
    }

    pub fn total_energy(&self) -> f64 {
        self.vehicles.iter().map(|v| v.energy).sum()
    }

    pub fn comm_energy(&self) -> f64 {
        self.vehicles.iter().map(|v| v.phases.comm_energy()).sum()
    }

    pub fn comp_energy(&self) -> f64 {
        self.vehicles.iter().map(|v| v.phases.comp_energy()).sum()
    }

    pub fn max_energy(&self) -> f64 {
        self.vehicles.iter().map(|v| v.energy).fold(0.0, f64::max)
    }
}

/// Cost a full allocation on a scenario.
pub fn round_costs(sc: &RoundScenario, allocs: &[Allocation]) -> Result<RoundCostBreakdown> {
    if allocs.len() != sc.vehicles.len() {
        return Err(Error::invalid(format!(
            "{} allocations for {} vehicles",
            allocs.len(),
            sc.vehicles.len()
        )));
    }
    let r_dl = sc.downlink_rate()?;
    let mut vehicles = Vec::with_capacity(allocs.len());
    for (v, a) in sc.vehicles.iter().zip(allocs) {
        let phases = phase_costs(v, a, &sc.profile, &sc.channel, r_dl, sc.ec_cpu_hz)?;
        vehicles.push(VehicleCost {
            vehicle: v.id,
            alloc: *a,
            phases,
            time: phases.total_time(),
            energy: phases.total_energy(),
        });
    }
    let phases: Vec<PhaseCosts> = vehicles.iter().map(|v| v.phases).collect();
    let (t, critical) = round_time(&phases)?;
    Ok(RoundCostBreakdown {
        vehicles,
        downlink_rate: r_dl,
        round_time: t,
        critical,
    })
}

/// Check the shares, box, cut-set and energy constraints of an allocation.
pub fn check_allocation(sc: &RoundScenario, allocs: &[Allocation]) -> Result<()> {
    let total_beta: f64 = allocs.iter().map(|a| a.beta).sum();
    if total_beta > 1.0 + 1e-9 {
        return Err(Error::invalid(format!("bandwidth shares sum to {total_beta}")));
    }
    let costs = round_costs(sc, allocs)?;
    let f = sc.bounds.cpu_hz;
    let p = sc.bounds.power_w;
    for (v, c) in sc.vehicles.iter().zip(&costs.vehicles) {
        let a = c.alloc;
        let fail = |reason: String| Err(Error::Infeasible { vehicle: v.id, reason });
        if !sc.cut_layers.contains(&a.cut) {
            return fail(format!("cut {} outside the admissible set", a.cut));
        }
        if !(a.beta > 0.0) {
            return fail(format!("bandwidth share {}", a.beta));
        }
        if a.cpu_hz < f.min * (1.0 - 1e-12) || a.cpu_hz > f.max * (1.0 + 1e-12) {
            return fail(format!("cpu frequency {} outside [{}, {}]", a.cpu_hz, f.min, f.max));
        }
        if a.power_w < p.min * (1.0 - 1e-12) || a.power_w > p.max * (1.0 + 1e-12) {
            return fail(format!("power {} outside [{}, {}]", a.power_w, p.min, p.max));
        }
        if c.energy > sc.energy_budget_j * (1.0 + ENERGY_TOLERANCE) {
            return fail(format!("energy {} exceeds budget {}", c.energy, sc.energy_budget_j));
        }
    }
    Ok(())
}

/// Training schemes compared against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Raw data is uploaded and the edge server trains the whole model.
    Cl,
    /// Each vehicle trains the whole model and uploads it.
    Fl,
    /// Vehicles take turns with the edge server, at a fixed cut.
    Sl,
    /// Sequential split learning with each vehicle's resources optimised.
    SlOptimal,
    /// Parallel split training with one fixed cut for every vehicle.
    Sfl(usize),
    /// Parallel split training with the joint optimiser.
    Asfv,
}

/// Cut layer the sequential split-learning baseline uses.
pub const SL_CUT: usize = 2;

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Cl => write!(f, "CL"),
            Scheme::Fl => write!(f, "FL"),
            Scheme::Sl => write!(f, "SL"),
            Scheme::SlOptimal => write!(f, "SL_optimal"),
            Scheme::Sfl(cut) => write!(f, "SFL{cut}"),
            Scheme::Asfv => write!(f, "ASFV"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Ok(match upper.as_str() {
            "CL" => Scheme::Cl,
            "FL" => Scheme::Fl,
            "SL" => Scheme::Sl,
            "SL_OPTIMAL" | "SLOPTIMAL" => Scheme::SlOptimal,
            "ASFV" => Scheme::Asfv,
            _ => {
                let cut = upper
                    .strip_prefix("SFL")
                    .map(|c| c.trim_start_matches(['(', '_']).trim_end_matches(')'))
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::UnknownScheme(s.to_string()))?;
                Scheme::Sfl(cut)
            }
        })
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

impl Serialize for SchemeCost {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SchemeCost", 8)?;
        st.serialize_field("scheme", &self.scheme.to_string())?;
        st.serialize_field("comm_delay", &self.comm_delay)?;
        st.serialize_field("comp_delay", &self.comp_delay)?;
        st.serialize_field("overall_delay", &self.overall_delay())?;
        st.serialize_field("comm_energy", &self.comm_energy)?;
        st.serialize_field("comp_energy", &self.comp_energy)?;
        st.serialize_field("total_energy", &self.total_energy())?;
        st.serialize_field("max_energy", &self.max_energy)?;
        st.end()
    }
}

/// Round delay split into communication and computation, plus vehicle energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCost {
    pub scheme: Scheme,
    pub comm_delay: f64,
    pub comp_delay: f64,
    /// Vehicle transmit energy summed over vehicles, J.
    pub comm_energy: f64,
    /// Vehicle compute energy summed over vehicles, J.
    pub comp_energy: f64,
    /// Largest single-vehicle energy, J.
    pub max_energy: f64,
}

impl SchemeCost {
    pub fn overall_delay(&self) -> f64 {
        self.comm_delay + self.comp_delay
    }

    pub fn total_energy(&self) -> f64 {
        self.comm_energy + self.comp_energy
    }

    pub fn from_breakdown(scheme: Scheme, b: &RoundCostBreakdown) -> Self {
        SchemeCost {
            scheme,
            comm_delay: b.comm_delay(),
            comp_delay: b.comp_delay(),
            comm_energy: b.comm_energy(),
            comp_energy: b.comp_energy(),
            max_energy: b.max_energy(),
        }
    }
}

/// Round cost of `scheme` on the vehicles of `sc`.
///
/// Fixed-allocation schemes split the band equally and run each vehicle at its
/// spawned frequency and power. `SL_optimal` and `ASFV` call the optimiser.
pub fn baseline_costs(scheme: Scheme, sc: &RoundScenario, opts: &BcdOptions) -> Result<SchemeCost> {
    sc.validate()?;
    let k = sc.vehicles.len() as f64;
    match scheme {
        Scheme::Cl => {
            let beta = 1.0 / k;
            let full = sc.profile.full_model_cycles_per_sample();
            let (mut upload, mut comm_e, mut max_e, mut server) = (0.0f64, 0.0, 0.0f64, 0.0);
            for v in &sc.vehicles {
                let n = v.dataset_size as f64;
                let a = Allocation { cut: 0, beta, cpu_hz: v.cpu_hz, power_w: v.tx_power_w };
                let t = n * sc.raw_sample_bits / uplink(v, &a, &sc.channel)?;
                upload = upload.max(t);
                comm_e += v.tx_power_w * t;
                max_e = max_e.max(v.tx_power_w * t);
                server += n * full / sc.ec_cpu_hz;
            }
            Ok(SchemeCost {
                scheme,
                comm_delay: upload,
                comp_delay: server,
                comm_energy: comm_e,
                comp_energy: 0.0,
                max_energy: max_e,
            })
        }
        Scheme::Fl => {
            let beta = 1.0 / k;
            let full = sc.profile.full_model_cycles_per_sample();
            let bits = sc.profile.full_model_bits();
            let broadcast = bits / sc.downlink_rate()?;
            let (mut crit, mut crit_comm, mut crit_comp) = (f64::NEG_INFINITY, 0.0, 0.0);
            let (mut comm_e, mut comp_e, mut max_e) = (0.0, 0.0, 0.0f64);
            for v in &sc.vehicles {
                let n = v.dataset_size as f64;
                let a = Allocation { cut: 0, beta, cpu_hz: v.cpu_hz, power_w: v.tx_power_w };
                let comp = n * full / v.cpu_hz;
                let comm = bits / uplink(v, &a, &sc.channel)?;
                if comp + comm > crit {
                    (crit, crit_comm, crit_comp) = (comp + comm, comm, comp);
                }
                let (ec, et) = (0.5 * v.capacitance * n * full * v.cpu_hz * v.cpu_hz, v.tx_power_w * comm);
                comp_e += ec;
                comm_e += et;
                max_e = max_e.max(ec + et);
            }
            Ok(SchemeCost {
                scheme,
                comm_delay: broadcast + crit_comm,
                comp_delay: crit_comp,
                comm_energy: comm_e,
                comp_energy: comp_e,
                max_energy: max_e,
            })
        }
        Scheme::Sl => {
            let allocs: Vec<Allocation> = sc
                .nominal_allocations(SL_CUT)
                .into_iter()
                .map(|a| Allocation { beta: 1.0, ..a })
                .collect();
            sequential(scheme, sc, &allocs)
        }
        Scheme::SlOptimal => {
            let mut allocs = Vec::with_capacity(sc.vehicles.len());
            for i in 0..sc.vehicles.len() {
                let single = sc.subset(&[i]);
                let report = optimizer::joint_bcd(&single, opts)?;
                allocs.push(report.allocations[0]);
            }
            sequential(scheme, sc, &allocs)
        }
        Scheme::Sfl(cut) => {
            let fixed = RoundScenario {
                cut_layers: vec![cut],
                ..sc.clone()
            };
            let report = optimizer::joint_bcd(&fixed, opts)?;
            let b = round_costs(&fixed.subset(&report.kept), &report.allocations)?;
            Ok(SchemeCost::from_breakdown(scheme, &b))
        }
        Scheme::Asfv => {
            let report = optimizer::joint_bcd(sc, opts)?;
            let sub = sc.subset(&report.kept);
            let b = round_costs(&sub, &report.allocations)?;
            Ok(SchemeCost::from_breakdown(scheme, &b))
        }
    }
}

/// Vehicles served one at a time, each owning the whole band while active.
fn sequential(scheme: Scheme, sc: &RoundScenario, allocs: &[Allocation]) -> Result<SchemeCost> {
    let (mut comm, mut comp, mut comm_e, mut comp_e, mut max_e) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for (i, a) in allocs.iter().enumerate() {
        let single = sc.subset(&[i]);
        let b = round_costs(&single, std::slice::from_ref(a))?;
        comm += b.comm_delay();
        comp += b.comp_delay();
        comm_e += b.comm_energy();
        comp_e += b.comp_energy();
        max_e = max_e.max(b.total_energy());
    }
    Ok(SchemeCost {
        scheme,
        comm_delay: comm,
        comp_delay: comp,
        comm_energy: comm_e,
        comp_energy: comp_e,
        max_energy: max_e,
    })
}
