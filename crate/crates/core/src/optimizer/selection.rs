use crate::cost::{Allocation, RoundScenario};
use crate::error::Result;
use crate::mobility::{select_vehicles, SelectionOutcome};

use super::cut_layer::select_cut_layers;

/// Per-vehicle round time under the nominal allocation used to screen
/// candidates: equal shares, maximum frequency and power, and the
/// energy-feasible cut with the smallest delay. `None` when no cut fits the
/// energy budget.
pub fn nominal_round_times(sc: &RoundScenario) -> Result<Vec<Option<(usize, f64)>>> {
    let beta = 1.0 / sc.vehicles.len() as f64;
    let nominal = vec![
        Allocation {
            cut: 0,
            beta,
            cpu_hz: sc.bounds.cpu_hz.max,
            power_w: sc.bounds.power_w.max,
        };
        sc.vehicles.len()
    ];
    Ok(select_cut_layers(sc, &nominal)?
        .into_iter()
        .map(|c| c.map(|c| (c.cut, c.time)))
        .collect())
}

/// Eligibility of the candidates in `sc` given their standing times.
pub fn nominal_screen(sc: &RoundScenario, standing: &[f64]) -> Result<SelectionOutcome> {
    let times: Vec<f64> = nominal_round_times(sc)?
        .into_iter()
        .map(|t| t.map_or(f64::INFINITY, |(_, t)| t))
        .collect();
    select_vehicles(&times, standing)
}
