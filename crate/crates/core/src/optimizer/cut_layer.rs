use crate::cost::{vehicle_round_cost, Allocation, RoundScenario, ENERGY_TOLERANCE};
use crate::error::{Error, Result};

/// Outcome of the cut-layer search for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutChoice {
    pub cut: usize,
    /// `t_n` at the chosen cut.
    pub time: f64,
    pub energy: f64,
}

/// Per vehicle, the admissible cut with the smallest `t_n` whose energy fits
/// the budget at the current `(β, f, φ)`. Ties go to the smaller cut.
/// `None` marks a vehicle with no energy-feasible cut.
///
/// `current` supplies `(β, f, φ)` per vehicle; its `cut` field is ignored.
pub fn select_cut_layers(sc: &RoundScenario, current: &[Allocation]) -> Result<Vec<Option<CutChoice>>> {
    if sc.cut_layers.is_empty() {
        return Err(Error::invalid("admissible cut-layer set is empty"));
    }
    if current.len() != sc.vehicles.len() {
        return Err(Error::invalid("one allocation per vehicle required"));
    }
    let r_dl = sc.downlink_rate()?;
    let budget = sc.energy_budget_j * (1.0 + ENERGY_TOLERANCE);
    let mut out = Vec::with_capacity(current.len());
    for (v, a) in sc.vehicles.iter().zip(current) {
        let mut cuts = sc.cut_layers.clone();
        cuts.sort_unstable();
        cuts.dedup();
        let mut best: Option<CutChoice> = None;
        for cut in cuts {
            let alloc = Allocation { cut, ..*a };
            let (time, energy) =
                vehicle_round_cost(v, &alloc, &sc.profile, &sc.channel, r_dl, sc.ec_cpu_hz)?;
            if energy > budget {
                continue;
            }
            if best.is_none_or(|b| time < b.time) {
                best = Some(CutChoice { cut, time, energy });
            }
        }
        out.push(best);
    }
    Ok(out)
}
