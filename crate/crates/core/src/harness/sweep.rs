//! Fleet sampling, per-round simulation and vehicle-count sweeps.

use serde::Serialize;

use crate::cost::{baseline_costs, round_costs, Allocation, RoundScenario, Scheme, SchemeCost};
use crate::error::{Error, Result};
use crate::mobility::{spawn_one, spawn_vehicles, standing_time, VehicleState};
use crate::optimizer::{joint_bcd, nominal_screen, select_cut_layers, OptimizerReport};
use crate::profile::CutLayerProfile;
use crate::seed::SeedStream;

use super::Scenario;

/// Candidates drawn per requested vehicle before giving up.
const MAX_DRAWS_PER_VEHICLE: usize = 1000;

/// Draw vehicles until `count` of them would be selected for a round of
/// `count` vehicles: some cut fits the energy budget at the minimum frequency
/// and power, and the nominal round time (equal share, maximum frequency and
/// power) fits the standing time. Ids are renumbered `0..count`.
pub fn sample_selected_fleet(
    sc: &Scenario,
    profile: &CutLayerProfile,
    count: usize,
    seed: &SeedStream,
) -> Result<Vec<VehicleState>> {
    if count == 0 {
        return Err(Error::EmptyVehicleSet);
    }
    let mobility = sc.mobility_config();
    mobility.validate()?;
    let bounds = mobility.bounds();
    let beta = 1.0 / count as f64;
    let low = Allocation {
        cut: 0,
        beta,
        cpu_hz: bounds.cpu_hz.min,
        power_w: bounds.power_w.min,
    };
    let high = Allocation {
        cpu_hz: bounds.cpu_hz.max,
        power_w: bounds.power_w.max,
        ..low
    };
    let mut rng = seed.rng();
    let mut fleet = Vec::with_capacity(count);
    for draw in 0..count * MAX_DRAWS_PER_VEHICLE {
        let v = spawn_one(&mobility, draw, &mut rng)?;
        let standing = standing_time(&v, mobility.coverage_diameter_m, mobility.t_max_s)?;
        let single = sc.round_scenario(profile, vec![v.clone()]);
        let feasible = select_cut_layers(&single, &[low])?[0].is_some();
        let fits = select_cut_layers(&single, &[high])?[0].is_some_and(|c| c.time <= standing);
        if feasible && fits {
            fleet.push(VehicleState { id: fleet.len(), ..v });
            if fleet.len() == count {
                return Ok(fleet);
            }
        }
    }
    Err(Error::NoEligibleVehicles)
}

/// Cost of every configured scheme on one vehicle set, with the optimiser
/// report behind the ASFV row.
#[derive(Debug, Clone)]
pub struct SchemeComparison {
    pub costs: Vec<SchemeCost>,
    pub report: Option<OptimizerReport>,
}

/// Cost every scheme in `schemes` on `round`.
pub fn compare_schemes(sc: &Scenario, round: &RoundScenario, schemes: &[Scheme]) -> Result<SchemeComparison> {
    let opts = sc.bcd_options();
    let mut costs = Vec::with_capacity(schemes.len());
    let mut report = None;
    for &scheme in schemes {
        if scheme == Scheme::Asfv {
            let r = joint_bcd(round, &opts)?;
            if r.kept.is_empty() {
                return Err(Error::NoEligibleVehicles);
            }
            let b = round_costs(&round.subset(&r.kept), &r.allocations)?;
            costs.push(SchemeCost::from_breakdown(scheme, &b));
            report = Some(r);
        } else {
            costs.push(baseline_costs(scheme, round, &opts)?);
        }
    }
    Ok(SchemeComparison { costs, report })
}

/// Average per-vehicle phase times at one cut with the fixed allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutBreakdown {
    pub cut: usize,
    pub vehicle_comp: f64,
    /// Smashed-data upload only.
    pub smashed_comm: f64,
    /// Smashed-data plus vehicle-model upload.
    pub uplink_comm: f64,
    pub downlink_comm: f64,
    pub server_comp: f64,
}

/// [`CutBreakdown`] for every admissible cut of `round`.
pub fn cut_breakdown(round: &RoundScenario) -> Result<Vec<CutBreakdown>> {
    let mut cuts = round.cut_layers.clone();
    cuts.sort_unstable();
    cuts.dedup();
    let k = round.vehicles.len() as f64;
    cuts.into_iter()
        .map(|cut| {
            let b = round_costs(round, &round.nominal_allocations(cut))?;
            let mean = |f: &dyn Fn(&crate::cost::PhaseCosts) -> f64| b.vehicles.iter().map(|v| f(&v.phases)).sum::<f64>() / k;
            Ok(CutBreakdown {
                cut,
                vehicle_comp: mean(&|p| p.parallel_comp()),
                smashed_comm: mean(&|p| p.t_s),
                uplink_comm: mean(&|p| p.parallel_comm()),
                downlink_comm: mean(&|p| p.serial_comm()),
                server_comp: mean(&|p| p.serial_comp()),
            })
        })
        .collect()
}

/// One sweep point: `vehicles` vehicles, scenario index `scenario`.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub vehicles: usize,
    pub scenario: usize,
    pub comparison: SchemeComparison,
    pub breakdown: Vec<CutBreakdown>,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub points: Vec<SweepPoint>,
}

/// Seed of sweep point `(vehicles, scenario)`.
pub fn point_seed(sc: &Scenario, vehicles: usize, scenario: usize) -> SeedStream {
    SeedStream::new(sc.seed)
        .child("sweep")
        .index(vehicles as u64)
        .index(scenario as u64)
}

pub fn run_point(sc: &Scenario, profile: &CutLayerProfile, vehicles: usize, scenario: usize) -> Result<SweepPoint> {
    let fleet = sample_selected_fleet(sc, profile, vehicles, &point_seed(sc, vehicles, scenario))?;
    let round = sc.round_scenario(profile, fleet);
    let comparison = compare_schemes(sc, &round, &sc.schemes)?;
    let breakdown = cut_breakdown(&round)?;
    Ok(SweepPoint {
        vehicles,
        scenario,
        comparison,
        breakdown,
    })
}

/// Every `(vehicle count, scenario)` pair of the sweep section.
pub fn run_sweep(sc: &Scenario, profile: &CutLayerProfile) -> Result<SweepResults> {
    sc.validate()?;
    let mut points = Vec::new();
    for &n in &sc.sweep.vehicles {
        for s in 0..sc.sweep.scenarios {
            points.push(run_point(sc, profile, n, s)?);
        }
    }
    Ok(SweepResults { points })
}

/// One round of the mobility simulation: who was in coverage, who was
/// selected and what each scheme costs on the selected set.
#[derive(Debug, Clone)]
pub struct SimulatedRound {
    pub round: usize,
    pub candidates: usize,
    pub selected: Vec<usize>,
    pub comparison: Option<SchemeComparison>,
}

/// `rounds` independent rounds: Poisson arrivals, standing-time screening,
/// then every scheme on the selected vehicles. Rounds with nobody selected
/// are reported with no costs.
pub fn simulate_rounds(sc: &Scenario, profile: &CutLayerProfile) -> Result<Vec<SimulatedRound>> {
    sc.validate()?;
    let mobility = sc.mobility_config();
    let root = SeedStream::new(sc.seed).child("simulate");
    let mut out = Vec::with_capacity(sc.rounds);
    for r in 0..sc.rounds {
        let fleet = spawn_vehicles(&mobility, &mut root.index(r as u64).rng())?;
        let candidates = fleet.len();
        if fleet.is_empty() {
            out.push(SimulatedRound { round: r, candidates, selected: vec![], comparison: None });
            continue;
        }
        let standing: Vec<f64> = fleet
            .iter()
            .map(|v| standing_time(v, mobility.coverage_diameter_m, mobility.t_max_s))
            .collect::<Result<_>>()?;
        let all = sc.round_scenario(profile, fleet);
        let selection = nominal_screen(&all, &standing)?;
        if selection.is_empty() {
            out.push(SimulatedRound { round: r, candidates, selected: vec![], comparison: None });
            continue;
        }
        let round = all.subset(&selection.selected);
        let comparison = match compare_schemes(sc, &round, &sc.schemes) {
            Ok(c) => Some(c),
            Err(Error::NoEligibleVehicles) => None,
            Err(e) => return Err(e),
        };
        out.push(SimulatedRound {
            round: r,
            candidates,
            selected: selection.selected,
            comparison,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        let mut sc = Scenario::default();
        sc.sweep.vehicles = vec![3];
        sc.sweep.scenarios = 2;
        sc.schemes = vec![Scheme::Sl, Scheme::Sfl(4), Scheme::Asfv];
        sc
    }

    #[test]
    fn fleet_is_deterministic_and_selectable() {
        let sc = small();
        let p = sc.load_profile().unwrap();
        let a = sample_selected_fleet(&sc, &p, 5, &SeedStream::new(3)).unwrap();
        let b = sample_selected_fleet(&sc, &p, 5, &SeedStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|v| v.id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        let round = sc.round_scenario(&p, a);
        let report = joint_bcd(&round, &sc.bcd_options()).unwrap();
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn single_point_sweep_has_one_row_group() {
        let mut sc = small();
        sc.sweep.scenarios = 1;
        let p = sc.load_profile().unwrap();
        let res = run_sweep(&sc, &p).unwrap();
        assert_eq!(res.points.len(), 1);
        assert_eq!(res.points[0].comparison.costs.len(), 3);
        assert!(res.points[0].comparison.report.is_some());
    }

    #[test]
    fn breakdown_trends() {
        let sc = small();
        let p = sc.load_profile().unwrap();
        let fleet = sample_selected_fleet(&sc, &p, 6, &SeedStream::new(9)).unwrap();
        let rows = cut_breakdown(&sc.round_scenario(&p, fleet)).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].vehicle_comp > w[0].vehicle_comp);
            assert!(w[1].server_comp < w[0].server_comp);
        }
        let up = |c: usize| rows.iter().find(|r| r.cut == c).unwrap().smashed_comm;
        assert!(up(4) < up(3) && up(6) < up(5) && up(8) < up(7));
    }

    #[test]
    fn simulation_is_deterministic() {
        let mut sc = small();
        sc.rounds = 2;
        let p = sc.load_profile().unwrap();
        let a = simulate_rounds(&sc, &p).unwrap();
        let b = simulate_rounds(&sc, &p).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.selected, y.selected);
            let cx = x.comparison.as_ref().map(|c| c.costs.clone());
            let cy = y.comparison.as_ref().map(|c| c.costs.clone());
            assert_eq!(cx, cy);
        }
    }
}
