//! Convergence bound for local SGD with partial participation, and
//! Monte-Carlo validators for the inequalities behind it, run on a strongly
//! convex quadratic toy problem whose constants are measured.

pub mod lemmas;
pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lemmas::{
    run_suite, validate_bound, validate_contraction, validate_gradient_variance, validate_lemma_sampling,
    validate_local_drift, LemmaCheck,
};
pub use toy::{estimate_constants, QuadraticToy};

/// Toy-problem and Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub vehicles: usize,
    pub selected: usize,
    pub dim: usize,
    /// Local steps between aggregations.
    pub local_steps: usize,
    /// SGD steps per trajectory.
    pub horizon: usize,
    /// Trials per lemma check.
    pub trials: usize,
    /// Trajectories for the end-to-end bound.
    pub seeds: usize,
    /// Trajectories used to measure the gradient bound.
    pub pilot_seeds: usize,
    pub hessian_min: f64,
    pub hessian_max: f64,
    /// Scale of the per-vehicle minimisers.
    pub centre_spread: f64,
    /// Largest per-coordinate gradient noise; vehicles draw theirs from
    /// `[noise_std / 2, noise_std]`.
    pub noise_std: f64,
    /// `‖ω₁ − ω*‖`.
    pub init_distance: f64,
    /// Multiplier applied to measured second moments.
    pub safety: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            vehicles: 10,
            selected: 5,
            dim: 5,
            local_steps: 5,
            horizon: 500,
            trials: 5000,
            seeds: 100,
            pilot_seeds: 50,
            hessian_min: 1.0,
            hessian_max: 4.0,
            centre_spread: 1.0,
            noise_std: 0.5,
            init_distance: 5.0,
            safety: 1.1,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles == 0 || self.selected == 0 || self.selected > self.vehicles {
            return Err(Error::invalid(format!(
                "need 1 <= selected ({}) <= vehicles ({})",
                self.selected, self.vehicles
            )));
        }
        if self.dim == 0 || self.local_steps == 0 || self.horizon == 0 {
            return Err(Error::invalid("dim, local steps and horizon must be positive"));
        }
        if self.trials < 2 || self.seeds < 2 || self.pilot_seeds == 0 {
            return Err(Error::invalid("need at least two trials and seeds"));
        }
        if !(self.hessian_min > 0.0 && self.hessian_max >= self.hessian_min) {
            return Err(Error::invalid(format!(
                "hessian range [{}, {}] is not positive",
                self.hessian_min, self.hessian_max
            )));
        }
        if self.noise_std < 0.0 || self.centre_spread < 0.0 || self.init_distance < 0.0 || self.safety < 1.0 {
            return Err(Error::invalid("noise, spread and distance must be non-negative, safety >= 1"));
        }
        Ok(())
    }
}

/// Constants of the convergence bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceParams {
    /// ℓ
    pub smoothness: f64,
    /// μ
    pub strong_convexity: f64,
    /// G², bound on the expected squared stochastic-gradient norm.
    pub grad_sq: f64,
    /// δ_n², per-vehicle stochastic-gradient variance.
    pub variance: Vec<f64>,
    /// γ_v = L* − Σ p_n L_n*.
    pub non_iid: f64,
    pub total: usize,
    pub selected: usize,
    pub weights: Vec<f64>,
    /// E‖ω₁ − ω*‖².
    pub init_dist_sq: f64,
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        let (l, mu) = (self.smoothness, self.strong_convexity);
        if !(mu > 0.0 && l >= mu) {
            return Err(Error::invalid(format!("need smoothness {l} >= strong convexity {mu} > 0")));
        }
        if self.non_iid < 0.0 || self.grad_sq < 0.0 || self.variance.iter().any(|&d| d < 0.0) {
            return Err(Error::invalid("non-IID degree and moments must be non-negative"));
        }
        if self.weights.len() != self.total || self.variance.len() != self.total {
            return Err(Error::invalid("one weight and variance per vehicle required"));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::ProbabilityMismatch(format!("weights sum to {s}")));
        }
        if self.selected == 0 || self.selected > self.total {
            return Err(Error::invalid(format!("{} of {} selected", self.selected, self.total)));
        }
        if self.total < 2 && self.selected < self.total {
            return Err(Error::invalid("partial participation needs at least two vehicles"));
        }
        Ok(())
    }

    /// ν = ℓ/μ
    pub fn nu(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }

    /// ι = 4ℓ/μ
    pub fn iota(&self) -> f64 {
        4.0 * self.nu()
    }

    /// ϱ = 2/μ
    pub fn rho(&self) -> f64 {
        2.0 / self.strong_convexity
    }

    /// Step size at step `t` (1-based): ϱ/(t + ι).
    pub fn step_size(&self, t: usize) -> f64 {
        self.rho() / (t as f64 + self.iota())
    }

    /// `(N/K − 1)·N/(N − 1)`, zero under full participation.
    pub fn sampling_factor(&self) -> f64 {
        sampling_factor(self.total, self.selected)
    }

    /// Γ = Σ p_n²δ_n² + 6ℓγ_v + 8G² + (N/K − 1)·N/(N − 1)·G².
    pub fn gamma_term(&self) -> Result<f64> {
        self.validate()?;
        let noise: f64 = self.weights.iter().zip(&self.variance).map(|(p, d)| p * p * d).sum();
        Ok(noise + 6.0 * self.smoothness * self.non_iid + 8.0 * self.grad_sq + self.sampling_factor() * self.grad_sq)
    }

    /// Bound on E[L(ω_T)] − L* after `t` steps.
    pub fn bound(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("the bound starts at T = 1"));
        }
        let gamma = self.gamma_term()?;
        let (mu, iota) = (self.strong_convexity, self.iota());
        Ok(self.nu() / (iota + t as f64 - 1.0) * (2.0 * gamma / mu + mu * iota / 2.0 * self.init_dist_sq))
    }
}

/// `(N/K − 1)·N/(N − 1)`, zero when `K = N`.
pub fn sampling_factor(total: usize, selected: usize) -> f64 {
    if selected >= total {
        return 0.0;
    }
    let (n, k) = (total as f64, selected as f64);
    (n / k - 1.0) * n / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: usize) -> ConvergenceParams {
        ConvergenceParams {
            smoothness: 2.0,
            strong_convexity: 0.5,
            grad_sq: 1.0,
            variance: vec![0.1; 10],
            non_iid: 0.2,
            total: 10,
            selected: k,
            weights: vec![0.1; 10],
            init_dist_sq: 4.0,
        }
    }

    #[test]
    fn gamma_hand_example() {
        let expected = 10.0 * 0.01 * 0.1 + 6.0 * 2.0 * 0.2 + 8.0 + 1.0 * 10.0 / 9.0;
        assert!((params(5).gamma_term().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 11.521).abs() < 1e-3);
    }

    #[test]
    fn full_participation_drops_sampling_term() {
        assert_eq!(sampling_factor(10, 10), 0.0);
        assert_eq!(sampling_factor(1, 1), 0.0);
        let zero = ConvergenceParams {
            grad_sq: 0.0,
            variance: vec![0.0; 10],
            non_iid: 0.0,
            ..params(3)
        };
        assert_eq!(zero.gamma_term().unwrap(), 0.0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = params(5);
        p.strong_convexity = 3.0;
        assert!(p.gamma_term().is_err());
        let mut p = params(5);
        p.weights[0] = 0.5;
        assert!(p.gamma_term().is_err());
        assert!(params(5).bound(0).is_err());
    }

    #[test]
    fn bound_vanishes() {
        let p = params(5);
        assert!(p.bound(10_000_000).unwrap() < 1e-3 * p.bound(1).unwrap());
    }

    proptest! {
        #[test]
        fn bound_decreases_in_t_and_k(t in 1usize..1000, k in 1usize..10) {
            let a = params(k);
            let b = params(k + 1);
            prop_assert!(a.bound(t + 1).unwrap() < a.bound(t).unwrap());
            prop_assert!(b.bound(t).unwrap() < a.bound(t).unwrap());
        }

        #[test]
        fn gamma_increases_in_each_moment(extra in 0.01f64..5.0) {
            let base = params(5);
            let g0 = base.gamma_term().unwrap();
            let mut p = base.clone();
            p.variance[3] += extra;
            prop_assert!(p.gamma_term().unwrap() > g0);
            let mut p = base.clone();
            p.non_iid += extra;
            prop_assert!(p.gamma_term().unwrap() > g0);
            let mut p = base;
            p.grad_sq += extra;
            prop_assert!(p.gamma_term().unwrap() > g0);
        }
    }
}
