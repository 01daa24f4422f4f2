//! Transmit power by successive convex approximation.
//!
//! For a fixed cut, share and frequency, vehicle energy as a function of power
//! is `e(φ) = D f² + k φ / ln(1 + cφ)` with `k = s̄_a/(βW)` and `c` the SNR per
//! watt. `φ / ln(1 + cφ)` is concave, so the tangent
//! `ê(φ^i, φ) = e(φ^i) + e'(φ^i)(φ − φ^i)` lies above `e` and the linearised
//! budget is an inner approximation of the true one. Delay is decreasing in
//! `φ`, so each convex subproblem is solved by the largest `φ` in the box
//! with `ê ≤ Ê`, which is the root of a linear function.

use crate::cost::{Allocation, RoundScenario};
use crate::error::{Error, Result};

/// `e(φ)`: compute energy plus upload energy.
pub fn energy_at_power(compute_energy: f64, k: f64, c: f64, phi: f64) -> f64 {
    compute_energy + k * upload_factor(c, phi)
}

/// `φ / ln(1 + cφ)`, continuously extended by `1/c` at zero.
fn upload_factor(c: f64, phi: f64) -> f64 {
    let x = c * phi;
    if x < 1e-8 {
        (1.0 + 0.5 * x) / c
    } else {
        phi / x.ln_1p()
    }
}

/// `de/dφ = k (ln(1+cφ) − cφ/(1+cφ)) / ln²(1+cφ)`.
pub fn energy_derivative(k: f64, c: f64, phi: f64) -> f64 {
    let x = c * phi;
    if x < 1e-8 {
        return 0.5 * k;
    }
    let l = x.ln_1p();
    k * (l - x / (1.0 + x)) / (l * l)
}

/// First-order expansion of `e` at `phi_i`, evaluated at `phi`.
pub fn linearized_energy(compute_energy: f64, k: f64, c: f64, phi_i: f64, phi: f64) -> f64 {
    energy_at_power(compute_energy, k, c, phi_i) + energy_derivative(k, c, phi_i) * (phi - phi_i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop when successive powers differ by at most this many watts.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    /// Final power, or `None` when even the minimum power breaks the budget.
    pub power: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Upload delay `k / ln(1 + cφ)` at `φ⁰` and after each iterate.
    pub delay_trace: Vec<f64>,
}

struct PowerProblem {
    compute_energy: f64,
    k: f64,
    c: f64,
    budget: f64,
    lo: f64,
    hi: f64,
}

impl PowerProblem {
    fn energy(&self, phi: f64) -> f64 {
        energy_at_power(self.compute_energy, self.k, self.c, phi)
    }

    fn delay(&self, phi: f64) -> f64 {
        // upload time: s̄_a / (βW ln(1+cφ)) = k / ln(1+cφ)
        self.k / (self.c * phi).ln_1p()
    }

    fn solve(&self, phi0: f64, opts: &ScaOptions) -> ScaOutcome {
        if self.energy(self.lo) > self.budget {
            return ScaOutcome {
                power: None,
                iterations: 0,
                converged: false,
                delay_trace: Vec::new(),
            };
        }
        let mut phi = phi0.clamp(self.lo, self.hi);
        let mut trace = vec![self.delay(phi)];
        for i in 1..=opts.max_iters {
            let slope = energy_derivative(self.k, self.c, phi);
            let mut next = (phi + (self.budget - self.energy(phi)) / slope).clamp(self.lo, self.hi);
            if self.energy(next) > self.budget {
                // rounding at the root; back off to a point that is feasible
                next = self.largest_feasible_below(next);
            }
            let step = (next - phi).abs();
            phi = next;
            trace.push(self.delay(phi));
            if step <= opts.tolerance {
                return ScaOutcome {
                    power: Some(phi),
                    iterations: i,
                    converged: true,
                    delay_trace: trace,
                };
            }
        }
        log::warn!("power SCA stopped after {} iterations", opts.max_iters);
        ScaOutcome {
            power: Some(phi),
            iterations: opts.max_iters,
            converged: false,
            delay_trace: trace,
        }
    }

    fn largest_feasible_below(&self, upper: f64) -> f64 {
        let (mut lo, mut hi) = (self.lo, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.energy(mid) <= self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Optimise each vehicle's power for fixed `(ε, β, f)` taken from `allocs`,
/// starting the iteration at `allocs[n].power_w`.
pub fn optimize_power_sca(sc: &RoundScenario, allocs: &[Allocation], opts: &ScaOptions) -> Result<Vec<ScaOutcome>> {
    if allocs.len() != sc.vehicles.len() {
        return Err(Error::invalid("one allocation per vehicle required"));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::invalid("SCA tolerance must be > 0"));
    }
    let w = sc.channel.bandwidth_hz;
    sc.vehicles
        .iter()
        .zip(allocs)
        .map(|(v, a)| {
            if !(a.beta > 0.0 && a.beta <= 1.0) {
                return Err(Error::invalid(format!("bandwidth share {}", a.beta)));
            }
            let n = v.dataset_size as f64;
            let payload = sc.profile.payload_bits(a.cut, n)?;
            let work = sc.profile.workload_cycles(a.cut, n)?;
            let problem = PowerProblem {
                compute_energy: 0.5 * v.capacitance * work.vehicle * a.cpu_hz * a.cpu_hz,
                k: payload.uplink / (a.beta * w),
                c: sc.channel.snr_per_watt(v.gain, v.distance_to_ec_m)?,
                budget: sc.energy_budget_j,
                lo: sc.bounds.power_w.min,
                hi: sc.bounds.power_w.max,
            };
            Ok(problem.solve(a.power_w, opts))
        })
        .collect()
}
