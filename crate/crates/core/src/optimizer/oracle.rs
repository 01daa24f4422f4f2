//! Exhaustive grid search over `(ε, β, f, φ)` for very small rounds.
//!
//! Given the cut and share of a vehicle, its best `(f, φ)` does not depend on
//! the other vehicles, so those inner searches are cached and combined over
//! every cut combination and every point of the share simplex grid. Each grid
//! is refined a few times around its best point.

use std::collections::HashMap;

use crate::cost::{round_costs, Allocation, RoundScenario, ENERGY_TOLERANCE};
use crate::error::{Error, Result};
use crate::radio;

pub const ORACLE_MAX_VEHICLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    /// Points per axis of the share simplex (first `K − 1` shares).
    pub beta_points: usize,
    pub freq_points: usize,
    pub power_points: usize,
    /// Zoom passes after the coarse grid.
    pub refinements: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            beta_points: 60,
            freq_points: 24,
            power_points: 24,
            refinements: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocations: Vec<Allocation>,
    pub objective: f64,
}

/// Evenly spaced points on `[lo, hi]`; a single point gives `lo`.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Best `(time, f, φ)` per `(vehicle, cut, share bits)`.
type TimeCache = HashMap<(usize, usize, u64), Option<(f64, f64, f64)>>;

/// Incumbent `(objective, cuts, shares, boxes)` of the share search.
type Incumbent = (f64, Vec<usize>, Vec<f64>, Vec<(f64, f64)>);

struct Inner<'a> {
    sc: &'a RoundScenario,
    grid: OracleGrid,
    cache: TimeCache,
}

impl Inner<'_> {
    /// Smallest `|D|c_v/f + s̄_a/R_UL` over the `(f, φ)` box within the
    /// energy budget, with its arguments.
    fn best(&mut self, n: usize, cut: usize, beta: f64) -> Result<Option<(f64, f64, f64)>> {
        if let Some(hit) = self.cache.get(&(n, cut, beta.to_bits())) {
            return Ok(*hit);
        }
        let sc = self.sc;
        let v = &sc.vehicles[n];
        let samples = v.dataset_size as f64;
        let work = sc.profile.workload_cycles(cut, samples)?.vehicle;
        let uplink_bits = sc.profile.payload_bits(cut, samples)?.uplink;
        let budget = sc.energy_budget_j * (1.0 + ENERGY_TOLERANCE);
        let eval = |f: f64, phi: f64| -> Result<Option<f64>> {
            let r = radio::uplink_rate(&sc.channel, v.gain, phi, v.distance_to_ec_m, beta)?;
            let up = uplink_bits / r;
            let energy = 0.5 * v.capacitance * work * f * f + phi * up;
            Ok((energy <= budget).then_some(work / f + up))
        };
        let (mut f_lo, mut f_hi) = (sc.bounds.cpu_hz.min, sc.bounds.cpu_hz.max);
        let (mut p_lo, mut p_hi) = (sc.bounds.power_w.min, sc.bounds.power_w.max);
        let mut best: Option<(f64, f64, f64)> = None;
        for _ in 0..=self.grid.refinements {
            let fs = linspace(f_lo, f_hi, self.grid.freq_points);
            let ps = linspace(p_lo, p_hi, self.grid.power_points);
            for &f in &fs {
                for &p in &ps {
                    if let Some(t) = eval(f, p)? {
                        if best.is_none_or(|b| t < b.0) {
                            best = Some((t, f, p));
                        }
                    }
                }
            }
            let Some((_, f, p)) = best else { break };
            let df = (f_hi - f_lo) / (self.grid.freq_points.max(2) - 1) as f64;
            let dp = (p_hi - p_lo) / (self.grid.power_points.max(2) - 1) as f64;
            f_lo = (f - df).max(sc.bounds.cpu_hz.min);
            f_hi = (f + df).min(sc.bounds.cpu_hz.max);
            p_lo = (p - dp).max(sc.bounds.power_w.min);
            p_hi = (p + dp).min(sc.bounds.power_w.max);
        }
        self.cache.insert((n, cut, beta.to_bits()), best);
        Ok(best)
    }
}

/// Points of the share simplex `Σβ = 1, β > 0` for `k` vehicles, with the
/// free coordinates restricted to `[lo_i, hi_i]`.
fn simplex_points(k: usize, boxes: &[(f64, f64)], points: usize) -> Vec<Vec<f64>> {
    match k {
        1 => vec![vec![1.0]],
        2 => linspace(boxes[0].0, boxes[0].1, points)
            .into_iter()
            .filter(|&b| b > 0.0 && b < 1.0)
            .map(|b| vec![b, 1.0 - b])
            .collect(),
        _ => {
            let mut out = Vec::new();
            for b0 in linspace(boxes[0].0, boxes[0].1, points) {
                for b1 in linspace(boxes[1].0, boxes[1].1, points) {
                    let rest = 1.0 - b0 - b1;
                    if b0 > 0.0 && b1 > 0.0 && rest > 0.0 {
                        out.push(vec![b0, b1, rest]);
                    }
                }
            }
            out
        }
    }
}

/// Grid minimisation of the round time under the energy, box and
/// bandwidth constraints. Deterministic.
pub fn brute_force_oracle(sc: &RoundScenario, grid: &OracleGrid) -> Result<OracleResult> {
    sc.validate()?;
    let k = sc.vehicles.len();
    if k > ORACLE_MAX_VEHICLES {
        return Err(Error::TooManyVehicles {
            max: ORACLE_MAX_VEHICLES,
            got: k,
        });
    }
    let r_dl = sc.downlink_rate()?;
    let mut cuts = sc.cut_layers.clone();
    cuts.sort_unstable();
    cuts.dedup();
    let serial = |n: usize, cut: usize| -> Result<f64> {
        let v = &sc.vehicles[n];
        let s = v.dataset_size as f64;
        Ok(sc.profile.payload_bits(cut, s)?.downlink / r_dl
            + sc.profile.workload_cycles(cut, s)?.server / sc.ec_cpu_hz)
    };
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..k {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                cuts.iter().map(move |&e| {
                    let mut c = c.clone();
                    c.push(e);
                    c
                })
            })
            .collect();
    }

    let mut inner = Inner { sc, grid: *grid, cache: HashMap::new() };
    let step0 = 1.0 / (grid.beta_points.max(2) - 1) as f64;
    let mut boxes = vec![(0.0, 1.0); k.saturating_sub(1)];
    let mut step = step0;
    let mut best: Option<Incumbent> = None;
    for level in 0..=grid.refinements {
        let candidates: Vec<&Vec<usize>> = match (&best, level) {
            (Some((_, c, _, _)), l) if l > 0 => vec![c],
            _ => combos.iter().collect(),
        };
        let mut level_best = best.clone();
        for combo in candidates {
            let c_total: f64 = (0..k).map(|n| serial(n, combo[n])).sum::<Result<f64>>()?;
            for betas in simplex_points(k, &boxes, grid.beta_points) {
                let mut worst = 0.0f64;
                let mut fp = Vec::with_capacity(k);
                let mut feasible = true;
                for n in 0..k {
                    match inner.best(n, combo[n], betas[n])? {
                        Some((t, f, p)) => {
                            worst = worst.max(t);
                            fp.push((f, p));
                        }
                        None => {
                            feasible = false;
                            break;
                        }
                    }
                }
                if !feasible {
                    continue;
                }
                let obj = worst + c_total;
                if level_best.as_ref().is_none_or(|b| obj < b.0) {
                    level_best = Some((obj, combo.clone(), betas, fp));
                }
            }
        }
        best = level_best;
        let Some((_, _, betas, _)) = &best else { break };
        for (i, b) in boxes.iter_mut().enumerate() {
            *b = ((betas[i] - step).max(0.0), (betas[i] + step).min(1.0));
        }
        step = 2.0 * step / (grid.beta_points.max(2) - 1) as f64;
    }

    let (_, combo, betas, fp) = best.ok_or_else(|| Error::Infeasible {
        vehicle: sc.vehicles[0].id,
        reason: "no grid point satisfies the energy budget".into(),
    })?;
    let allocations: Vec<Allocation> = (0..k)
        .map(|n| Allocation {
            cut: combo[n],
            beta: betas[n],
            cpu_hz: fp[n].0,
            power_w: fp[n].1,
        })
        .collect();
    let objective = round_costs(sc, &allocations)?.round_time;
    Ok(OracleResult { allocations, objective })
}
