use crate::cost::{round_costs, Allocation, RoundScenario};
use crate::error::{Error, Result};

use super::cut_layer::select_cut_layers;
use super::power::{optimize_power_sca, ScaOptions};
use super::resource::{allocate_resources_kkt, KktOptions};
use super::auxiliary_terms;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    /// Stop when `‖Δφ‖ ≤ tol_power ‖φ‖`, and likewise for `f` and `β`.
    pub tol_power: f64,
    pub tol_freq: f64,
    pub tol_beta: f64,
    pub max_sweeps: usize,
    pub sca: ScaOptions,
    pub kkt: KktOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            tol_power: 1e-8,
            tol_freq: 1e-8,
            tol_beta: 1e-8,
            max_sweeps: 50,
            sca: ScaOptions::default(),
            kkt: KktOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport {
    /// Indices into the scenario's vehicles that stayed in the round.
    pub kept: Vec<usize>,
    /// Indices dropped because no cut layer fits the energy budget.
    pub dropped: Vec<usize>,
    /// Final decision, aligned with `kept`.
    pub allocations: Vec<Allocation>,
    /// Round time after each sweep.
    pub objective_trace: Vec<f64>,
    pub sca_iterations: Vec<usize>,
    pub kkt_iterations: Vec<usize>,
    /// KKT residual of the last resource allocation.
    pub kkt_residual: f64,
    pub converged: bool,
    /// False if any power or resource inner loop hit its iteration cap.
    pub inner_converged: bool,
}

impl OptimizerReport {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn sweeps(&self) -> usize {
        self.objective_trace.len()
    }
}

/// Alternate cut-layer, power and bandwidth/frequency blocks until the
/// allocation stops moving.
///
/// The cut-layer block only sees the current frequencies, so once the
/// resource block has pushed `f` to the energy limit of the current cut it
/// cannot move to a cut that would need a lower `f`. The driver therefore
/// runs several starts: one from equal shares at the minimum frequency and
/// power, and one per admissible cut with that cut fixed for every vehicle.
/// The start that keeps the most vehicles, then has the shortest round, is
/// refined with guarded cut changes. Its trace is returned.
pub fn joint_bcd(sc: &RoundScenario, opts: &BcdOptions) -> Result<OptimizerReport> {
    sc.validate()?;
    let mut cuts = sc.cut_layers.clone();
    cuts.sort_unstable();
    cuts.dedup();
    let mut best = from_minimum(sc, opts)?;
    if cuts.len() == 1 {
        return Ok(best);
    }
    for &cut in &cuts {
        let fixed = RoundScenario {
            cut_layers: vec![cut],
            ..sc.clone()
        };
        let candidate = match from_minimum(&fixed, opts) {
            Ok(r) => r,
            Err(Error::NoEligibleVehicles | Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        if (candidate.kept.len(), -candidate.objective()) > (best.kept.len(), -best.objective()) {
            best = candidate;
        }
    }
    let sub = sc.subset(&best.kept);
    let refined = run(&sub, best.allocations.clone(), true, opts)?;
    let mut dropped = best.dropped.clone();
    dropped.extend(refined.dropped.iter().map(|&i| best.kept[i]));
    dropped.sort_unstable();
    let kept = refined.kept.iter().map(|&i| best.kept[i]).collect();
    let mut objective_trace = best.objective_trace.clone();
    objective_trace.extend(refined.objective_trace.iter().copied());
    let mut sca_iterations = best.sca_iterations.clone();
    sca_iterations.extend(refined.sca_iterations.iter().copied());
    let mut kkt_iterations = best.kkt_iterations.clone();
    kkt_iterations.extend(refined.kkt_iterations.iter().copied());
    Ok(OptimizerReport {
        kept,
        dropped,
        allocations: refined.allocations,
        objective_trace,
        sca_iterations,
        kkt_iterations,
        kkt_residual: refined.kkt_residual,
        converged: refined.converged,
        inner_converged: best.inner_converged && refined.inner_converged,
    })
}

/// One BCD run from equal shares at the minimum frequency and power, the
/// least energy-hungry point of the box. Vehicles with no energy-feasible
/// cut at that point are dropped.
fn from_minimum(sc: &RoundScenario, opts: &BcdOptions) -> Result<OptimizerReport> {
    let k = sc.vehicles.len();
    let first = *sc.cut_layers.iter().min().expect("validated non-empty");
    let init = vec![
        Allocation {
            cut: first,
            beta: 1.0 / k as f64,
            cpu_hz: sc.bounds.cpu_hz.min,
            power_w: sc.bounds.power_w.min,
        };
        k
    ];
    run(sc, init, false, opts)
}

/// As [`joint_bcd`], starting from a given feasible allocation. Cut-layer
/// changes are only accepted when they do not lengthen the round.
pub fn joint_bcd_from(sc: &RoundScenario, init: &[Allocation], opts: &BcdOptions) -> Result<OptimizerReport> {
    sc.validate()?;
    if init.len() != sc.vehicles.len() {
        return Err(Error::invalid("one initial allocation per vehicle required"));
    }
    run(sc, init.to_vec(), true, opts)
}

fn round_time(sc: &RoundScenario, allocs: &[Allocation]) -> Result<f64> {
    Ok(round_costs(sc, allocs)?.round_time)
}

/// Apply the proposed cuts unless that lengthens the round, in which case
/// accept them one vehicle at a time.
fn guarded_cuts(sc: &RoundScenario, allocs: &[Allocation], proposal: &[usize]) -> Result<Vec<Allocation>> {
    let current = round_time(sc, allocs)?;
    let all: Vec<Allocation> = allocs
        .iter()
        .zip(proposal)
        .map(|(a, &cut)| Allocation { cut, ..*a })
        .collect();
    if round_time(sc, &all)? <= current {
        return Ok(all);
    }
    let mut acc = allocs.to_vec();
    let mut best = current;
    for (n, &cut) in proposal.iter().enumerate() {
        if acc[n].cut == cut {
            continue;
        }
        let old = acc[n].cut;
        acc[n].cut = cut;
        let t = round_time(sc, &acc)?;
        if t <= best {
            best = t;
        } else {
            acc[n].cut = old;
        }
    }
    Ok(acc)
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = old.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

fn run(sc: &RoundScenario, mut allocs: Vec<Allocation>, guard_first: bool, opts: &BcdOptions) -> Result<OptimizerReport> {
    let mut kept: Vec<usize> = (0..sc.vehicles.len()).collect();
    let mut dropped = Vec::new();
    let mut trace = Vec::new();
    let mut sca_iterations = Vec::new();
    let mut kkt_iterations = Vec::new();
    let mut kkt_residual = 0.0;
    let mut converged = false;
    let mut inner_converged = true;

    for sweep in 1..=opts.max_sweeps {
        let before = allocs.clone();
        let kept_before = kept.len();

        // cut layers
        let sub = sc.subset(&kept);
        let choices = select_cut_layers(&sub, &allocs)?;
        let mut keep_mask = Vec::with_capacity(kept.len());
        for (i, c) in choices.iter().enumerate() {
            if c.is_none() {
                log::debug!("dropping vehicle {}: no energy-feasible cut", sc.vehicles[kept[i]].id);
                dropped.push(kept[i]);
            }
            keep_mask.push(c.is_some());
        }
        let proposal: Vec<usize> = choices.iter().flatten().map(|c| c.cut).collect();
        let mut it = keep_mask.iter();
        kept.retain(|_| *it.next().unwrap());
        let mut it = keep_mask.iter();
        allocs.retain(|_| *it.next().unwrap());
        if kept.is_empty() {
            return Err(Error::NoEligibleVehicles);
        }
        let sub = sc.subset(&kept);
        allocs = if sweep > 1 || guard_first {
            guarded_cuts(&sub, &allocs, &proposal)?
        } else {
            allocs
                .iter()
                .zip(&proposal)
                .map(|(a, &cut)| Allocation { cut, ..*a })
                .collect()
        };

        // power
        let sca = optimize_power_sca(&sub, &allocs, &opts.sca)?;
        sca_iterations.push(sca.iter().map(|s| s.iterations).sum());
        for (i, s) in sca.iter().enumerate() {
            inner_converged &= s.converged;
            allocs[i].power_w = s.power.ok_or_else(|| Error::Infeasible {
                vehicle: sub.vehicles[i].id,
                reason: "no transmit power meets the energy budget".into(),
            })?;
        }

        // bandwidth and frequency
        let cuts: Vec<usize> = allocs.iter().map(|a| a.cut).collect();
        let powers: Vec<f64> = allocs.iter().map(|a| a.power_w).collect();
        let terms = auxiliary_terms(&sub, &cuts, &powers)?;
        let kkt = allocate_resources_kkt(&terms, &sc.bounds, sc.energy_budget_j, &opts.kkt).map_err(|e| match e {
            Error::Infeasible { vehicle, reason } => Error::Infeasible {
                vehicle: sub.vehicles[vehicle].id,
                reason,
            },
            other => other,
        })?;
        inner_converged &= kkt.converged;
        kkt_iterations.push(kkt.iterations);
        kkt_residual = kkt.kkt_residual;
        for (i, a) in allocs.iter_mut().enumerate() {
            a.beta = kkt.beta[i];
            a.cpu_hz = kkt.cpu_hz[i];
        }
        trace.push(round_time(&sub, &allocs)?);

        if kept.len() == kept_before {
            let pick = |f: fn(&Allocation) -> f64, v: &[Allocation]| v.iter().map(f).collect::<Vec<_>>();
            let settled = relative_change(&pick(|a| a.power_w, &allocs), &pick(|a| a.power_w, &before))
                <= opts.tol_power
                && relative_change(&pick(|a| a.cpu_hz, &allocs), &pick(|a| a.cpu_hz, &before)) <= opts.tol_freq
                && relative_change(&pick(|a| a.beta, &allocs), &pick(|a| a.beta, &before)) <= opts.tol_beta;
            if settled {
                converged = true;
                break;
            }
        }
    }

    Ok(OptimizerReport {
        kept,
        dropped,
        allocations: allocs,
        objective_trace: trace,
        sca_iterations,
        kkt_iterations,
        kkt_residual,
        converged,
        inner_converged,
    })
}
