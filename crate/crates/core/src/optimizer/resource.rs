//! Bandwidth shares and CPU frequencies for fixed cut layers and powers.
//!
//! The subproblem is
//!
//! ```text
//! min T̄  s.t.  A_n/f_n + B_n/β_n + C ≤ T̄,   D_n f_n² + F_n/β_n ≤ Ê,
//!              Σ β_n = 1,   f_min ≤ f_n ≤ f_max,
//! ```
//!
//! which is convex. For a given share the best frequency is the largest one
//! the energy budget allows, `f = clamp(√((Ê − F/β)/D), f_min, f_max)`, so a
//! vehicle's finishing time is strictly decreasing in its share. A vehicle can
//! never go below the share `F/(Ê − D f_min²)`.
//!
//! Complementary slackness says every vehicle with `σ_n > 0` finishes exactly
//! at `T̄`, and a vehicle finishing early sits at its share floor. The solver
//! therefore bisects on the common finishing time, giving each vehicle the
//! smallest share that meets it, until the shares fill the band. The
//! multipliers are then recovered from stationarity in `β` and `f`:
//! `σ_n B_n + μ_n F_n = τ β_n²` and `μ_n = σ_n A_n / (2 D_n f_n³)` whenever
//! the energy budget binds with `f_n` interior.

use crate::error::{Error, Result};
use crate::mobility::ResourceBounds;

use super::SubproblemTerms;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    /// Relative width of the finishing-time bracket at which to stop.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktOutcome {
    pub beta: Vec<f64>,
    pub cpu_hz: Vec<f64>,
    /// `T̄ = max_n(A_n/f_n + B_n/β_n) + C`.
    pub objective: f64,
    pub sigma: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: f64,
    /// Shares pinned at their energy floor.
    pub floored: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Upper end of the finishing-time bracket (plus `C`) after every step.
    pub trace: Vec<f64>,
    /// Largest of: `|Σσ − 1|`, relative spread of `τ` and of finishing times
    /// across vehicles not pinned at a floor.
    pub kkt_residual: f64,
}

struct Problem<'a> {
    terms: &'a SubproblemTerms,
    f_min: f64,
    f_max: f64,
    budget: f64,
    floors: Vec<f64>,
}

impl Problem<'_> {
    fn freq(&self, n: usize, beta: f64) -> f64 {
        let t = &self.terms.vehicles[n];
        if t.d == 0.0 {
            return self.f_max;
        }
        let room = (self.budget - t.f / beta).max(0.0);
        (room / t.d).sqrt().clamp(self.f_min, self.f_max)
    }

    fn time(&self, n: usize, beta: f64) -> f64 {
        let t = &self.terms.vehicles[n];
        t.a / self.freq(n, beta) + t.b / beta
    }

    /// Smallest share meeting finishing time `target`, or `None` if even the
    /// whole band is too slow. The flag marks a share pinned at its floor.
    fn share_for(&self, n: usize, target: f64) -> Option<(f64, bool)> {
        let floor = self.floors[n];
        if self.time(n, floor) <= target {
            return Some((floor, true));
        }
        if self.time(n, 1.0) > target {
            return None;
        }
        let (mut lo, mut hi) = (floor, 1.0);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Some((hi, false));
            }
            if self.time(n, mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// Shares for `target`, or `None` when they overfill the band.
    fn shares(&self, target: f64) -> Option<(Vec<f64>, Vec<bool>)> {
        let k = self.floors.len();
        let (mut beta, mut floored) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for n in 0..k {
            let (b, f) = self.share_for(n, target)?;
            beta.push(b);
            floored.push(f);
        }
        (beta.iter().sum::<f64>() <= 1.0).then_some((beta, floored))
    }

    fn energy_binds(&self, n: usize, beta: f64, f: f64) -> bool {
        let t = &self.terms.vehicles[n];
        t.d > 0.0 && f > self.f_min && f < self.f_max && t.d * f * f + t.f / beta >= self.budget * (1.0 - 1e-9)
    }
}

fn relative_spread(values: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi.is_finite() && hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

/// Solve the bandwidth/frequency subproblem. Vehicle indices in errors refer
/// to positions in `terms.vehicles`.
pub fn allocate_resources_kkt(
    terms: &SubproblemTerms,
    bounds: &ResourceBounds,
    energy_budget: f64,
    opts: &KktOptions,
) -> Result<KktOutcome> {
    let k = terms.vehicles.len();
    if k == 0 {
        return Err(Error::EmptyVehicleSet);
    }
    let (f_min, f_max) = (bounds.cpu_hz.min, bounds.cpu_hz.max);
    let mut floors = Vec::with_capacity(k);
    for (n, t) in terms.vehicles.iter().enumerate() {
        let room = energy_budget - t.d * f_min * f_min;
        if !(room > 0.0) || t.f / room > 1.0 {
            return Err(Error::Infeasible {
                vehicle: n,
                reason: "compute energy at the minimum frequency exceeds the budget".into(),
            });
        }
        floors.push(t.f / room);
    }
    let floor_sum: f64 = floors.iter().sum();
    if floor_sum > 1.0 {
        let worst = (0..k).max_by(|&i, &j| floors[i].total_cmp(&floors[j])).unwrap_or(0);
        return Err(Error::Infeasible {
            vehicle: worst,
            reason: format!("energy floors need {floor_sum:.4} of the band"),
        });
    }
    let p = Problem { terms, f_min, f_max, budget: energy_budget, floors };

    // Bracket: at `lo` some vehicle needs the whole band, at `hi` every
    // vehicle is at its floor.
    let mut lo = (0..k).map(|n| p.time(n, 1.0)).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = (0..k).map(|n| p.time(n, p.floors[n])).fold(f64::NEG_INFINITY, f64::max);
    let (mut beta, mut floored) = match p.shares(lo) {
        Some(s) => {
            hi = lo;
            s
        }
        None => p.shares(hi).expect("floors fit the band"),
    };
    let mut trace = vec![hi + terms.c];
    let mut iterations = 0;
    let mut converged = hi - lo <= opts.tolerance * hi;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        match p.shares(mid) {
            Some(s) => {
                hi = mid;
                (beta, floored) = s;
            }
            None => lo = mid,
        }
        trace.push(hi + terms.c);
        converged = hi - lo <= opts.tolerance * hi;
    }
    if !converged {
        log::warn!("resource allocation stopped after {iterations} iterations");
    }

    // Hand the unused band to the vehicles that set the round time.
    let pinned: f64 = (0..k).filter(|&n| floored[n]).map(|n| beta[n]).sum();
    let free: f64 = (0..k).filter(|&n| !floored[n]).map(|n| beta[n]).sum();
    if free > 0.0 {
        let scale = (1.0 - pinned) / free;
        for n in (0..k).filter(|&n| !floored[n]) {
            beta[n] *= scale;
        }
    } else {
        let scale = 1.0 / pinned;
        beta.iter_mut().for_each(|b| *b *= scale);
        floored.iter_mut().for_each(|f| *f = false);
    }
    let f: Vec<f64> = (0..k).map(|n| p.freq(n, beta[n])).collect();
    let t: Vec<f64> = (0..k).map(|n| p.time(n, beta[n])).collect();
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Multipliers from stationarity, normalised so that Σσ = 1.
    let ratio: Vec<f64> = (0..k)
        .map(|n| {
            let v = &terms.vehicles[n];
            if p.energy_binds(n, beta[n], f[n]) {
                v.a / (2.0 * v.d * f[n].powi(3))
            } else {
                0.0
            }
        })
        .collect();
    let raw: Vec<f64> = (0..k)
        .map(|n| {
            let v = &terms.vehicles[n];
            if floored[n] {
                0.0
            } else {
                beta[n] * beta[n] / (v.b + ratio[n] * v.f)
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let sigma: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mu: Vec<f64> = (0..k).map(|n| sigma[n] * ratio[n]).collect();
    let taus: Vec<f64> = (0..k)
        .filter(|&n| !floored[n])
        .map(|n| {
            let v = &terms.vehicles[n];
            (sigma[n] * v.b + mu[n] * v.f) / (beta[n] * beta[n])
        })
        .collect();
    let tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let residual = [
        (sigma.iter().sum::<f64>() - 1.0).abs(),
        relative_spread(taus.iter().cloned()),
        relative_spread((0..k).filter(|&n| !floored[n]).map(|n| t[n])),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    Ok(KktOutcome {
        beta,
        cpu_hz: f,
        objective: t_max + terms.c,
        sigma,
        mu,
        tau,
        floored,
        iterations,
        converged,
        trace,
        kkt_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Range;
    use crate::optimizer::AuxiliaryTerms;

    fn bounds() -> ResourceBounds {
        ResourceBounds {
            cpu_hz: Range::new(1e10, 2e10),
            power_w: Range::new(0.1, 1.0),
        }
    }

    fn terms(v: Vec<AuxiliaryTerms>) -> SubproblemTerms {
        SubproblemTerms { vehicles: v, c: 3.0 }
    }

    fn vehicle(a: f64, b: f64, phi: f64) -> AuxiliaryTerms {
        AuxiliaryTerms { a, b, d: 0.5e-30 * a, f: phi * b }
    }

    #[test]
    fn symmetric_vehicles_share_equally() {
        for k in 2..=6 {
            let t = terms(vec![vehicle(5e10, 2.0, 0.3); k]);
            let out = allocate_resources_kkt(&t, &bounds(), 20.0, &KktOptions::default()).unwrap();
            for b in &out.beta {
                assert!((b - 1.0 / k as f64).abs() <= 1e-12, "{b}");
            }
        }
    }

    #[test]
    fn single_vehicle_gets_the_band() {
        // energy caps the frequency below f_max
        let v = vehicle(5e10, 2.0, 0.3);
        let budget = v.d * 1.5e10 * 1.5e10 + v.f;
        let out = allocate_resources_kkt(&terms(vec![v]), &bounds(), budget, &KktOptions::default()).unwrap();
        assert_eq!(out.beta, vec![1.0]);
        assert!((out.cpu_hz[0] - 1.5e10).abs() < 1e-3);
        let out = allocate_resources_kkt(&terms(vec![v]), &bounds(), 1e9, &KktOptions::default()).unwrap();
        assert_eq!(out.cpu_hz, vec![2e10]);
        assert!((out.objective - (5e10 / 2e10 + 2.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn unequal_vehicles_finish_together() {
        let t = terms(vec![vehicle(5e10, 2.0, 0.3), vehicle(8e10, 0.5, 0.5), vehicle(1e10, 4.0, 0.1)]);
        let out = allocate_resources_kkt(&t, &bounds(), 1e3, &KktOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.kkt_residual <= 1e-6, "{}", out.kkt_residual);
        assert!((out.beta.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(out.cpu_hz, vec![2e10; 3]);
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn infeasible_floors_are_reported() {
        let v = vehicle(5e10, 2.0, 0.3);
        let compute = v.d * 1e20;
        let err = allocate_resources_kkt(&terms(vec![v]), &bounds(), compute * 0.5, &KktOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { vehicle: 0, .. }));
        let err = allocate_resources_kkt(&terms(vec![v, v]), &bounds(), compute + 1.5 * v.f, &KktOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }
}
