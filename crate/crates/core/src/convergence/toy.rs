//! Separable quadratic toy problem: vehicle `n` minimises
//! `L_n(ω) = ½ Σ_j h_nj (ω_j − c_nj)²` with Gaussian gradient noise.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::SeedStream;

use super::{ConvergenceParams, ToyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticToy {
    /// Diagonal Hessian of each vehicle.
    pub hessians: Vec<Array1<f64>>,
    /// Minimiser of each vehicle's loss.
    pub centres: Vec<Array1<f64>>,
    /// Per-coordinate gradient noise of each vehicle.
    pub noise_std: Vec<f64>,
    pub weights: Vec<f64>,
    pub start: Array1<f64>,
    pub optimum: Array1<f64>,
    pub optimal_loss: f64,
}

/// Observation handed to a trajectory observer at step `t` (1-based),
/// before the step from `t` to `t + 1` is taken.
pub struct StepView<'a> {
    pub t: usize,
    pub step_size: f64,
    pub locals: &'a [Array1<f64>],
    /// Global model: the aggregate right after a sync, otherwise the
    /// weighted average of the local models.
    pub global: &'a Array1<f64>,
    /// True when no local step has been taken since the last sync.
    pub synced: bool,
    /// Squared norms of the stochastic gradients about to be applied.
    pub grad_sq: &'a [f64],
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

impl QuadraticToy {
    pub fn new(cfg: &ToyConfig, seed: &SeedStream) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed.child("toy").rng();
        let (n, d) = (cfg.vehicles, cfg.dim);
        let mut hessians = Vec::with_capacity(n);
        let mut centres = Vec::with_capacity(n);
        let mut noise_std = Vec::with_capacity(n);
        for _ in 0..n {
            hessians.push(Array1::from_shape_fn(d, |_| rng.random_range(cfg.hessian_min..=cfg.hessian_max)));
            centres.push(Array1::from_shape_fn(d, |_| cfg.centre_spread * gaussian(&mut rng)));
            noise_std.push(cfg.noise_std * rng.random_range(0.5..=1.0));
        }
        let weights = vec![1.0 / n as f64; n];
        let mut num = Array1::<f64>::zeros(d);
        let mut den = Array1::<f64>::zeros(d);
        for ((h, c), &p) in hessians.iter().zip(&centres).zip(&weights) {
            num += &(h * c * p);
            den += &(h * p);
        }
        let optimum = num / den;
        let mut dir = Array1::from_shape_fn(d, |_| gaussian(&mut rng));
        let norm = dir.dot(&dir).sqrt();
        dir /= norm;
        let start = &optimum + &(dir * cfg.init_distance);
        let mut toy = Self {
            hessians,
            centres,
            noise_std,
            weights,
            start,
            optimum,
            optimal_loss: 0.0,
        };
        toy.optimal_loss = toy.loss(&toy.optimum);
        Ok(toy)
    }

    pub fn vehicles(&self) -> usize {
        self.hessians.len()
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn local_loss(&self, n: usize, w: &Array1<f64>) -> f64 {
        let diff = w - &self.centres[n];
        0.5 * (&self.hessians[n] * &diff).dot(&diff)
    }

    /// `L(ω) = Σ p_n L_n(ω)`.
    pub fn loss(&self, w: &Array1<f64>) -> f64 {
        (0..self.vehicles()).map(|n| self.weights[n] * self.local_loss(n, w)).sum()
    }

    pub fn gap(&self, w: &Array1<f64>) -> f64 {
        self.loss(w) - self.optimal_loss
    }

    pub fn gradient(&self, n: usize, w: &Array1<f64>) -> Array1<f64> {
        &self.hessians[n] * &(w - &self.centres[n])
    }

    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, n: usize, w: &Array1<f64>, rng: &mut R) -> Array1<f64> {
        let s = self.noise_std[n];
        let mut g = self.gradient(n, w);
        g.mapv_inplace(|v| v + s * gaussian(rng));
        g
    }

    /// Exact `E‖g_n − ∇L_n‖²`.
    pub fn true_variance(&self, n: usize) -> f64 {
        self.dim() as f64 * self.noise_std[n].powi(2)
    }

    /// `Σ p_n x_n`.
    pub fn average(&self, xs: &[Array1<f64>]) -> Array1<f64> {
        let mut acc = Array1::zeros(self.dim());
        for (x, &p) in xs.iter().zip(&self.weights) {
            acc.scaled_add(p, x);
        }
        acc
    }

    /// Local SGD from `start` for `horizon` steps with step sizes
    /// `steps(t)`; every `local_steps` steps `selected` vehicles are drawn
    /// uniformly without replacement and their plain mean becomes the new
    /// global model.
    pub fn simulate<R, S, F>(
        &self,
        selected: usize,
        local_steps: usize,
        horizon: usize,
        steps: S,
        rng: &mut R,
        mut observe: F,
    ) -> Result<()>
    where
        R: Rng + ?Sized,
        S: Fn(usize) -> f64,
        F: FnMut(&StepView<'_>),
    {
        let n = self.vehicles();
        if selected == 0 || selected > n || local_steps == 0 {
            return Err(Error::invalid(format!("cannot select {selected} of {n} every {local_steps} steps")));
        }
        let mut locals = vec![self.start.clone(); n];
        let mut global = self.start.clone();
        let mut synced = true;
        for t in 1..=horizon {
            let eta = steps(t);
            let grads: Vec<Array1<f64>> = (0..n).map(|i| self.stochastic_gradient(i, &locals[i], rng)).collect();
            let grad_sq: Vec<f64> = grads.iter().map(|g| g.dot(g)).collect();
            if !synced {
                global = self.average(&locals);
            }
            observe(&StepView {
                t,
                step_size: eta,
                locals: &locals,
                global: &global,
                synced,
                grad_sq: &grad_sq,
            });
            for (w, g) in locals.iter_mut().zip(&grads) {
                w.scaled_add(-eta, g);
            }
            if t % local_steps == 0 {
                global = subset_mean(&locals, selected, rng);
                for w in &mut locals {
                    w.assign(&global);
                }
                synced = true;
            } else {
                synced = false;
            }
        }
        Ok(())
    }
}

/// Mean of `k` of the `points` drawn uniformly without replacement, summed
/// in index order so that `k = len` reproduces the full mean bit for bit.
pub fn subset_mean<R: Rng + ?Sized>(points: &[Array1<f64>], k: usize, rng: &mut R) -> Array1<f64> {
    let mut idx = rand::seq::index::sample(rng, points.len(), k).into_vec();
    idx.sort_unstable();
    let mut acc = Array1::zeros(points[0].len());
    for &i in &idx {
        acc += &points[i];
    }
    acc / k as f64
}

/// Plain mean of all `points`, summed in index order.
pub fn full_mean(points: &[Array1<f64>]) -> Array1<f64> {
    let mut acc = Array1::zeros(points[0].len());
    for p in points {
        acc += p;
    }
    acc / points.len() as f64
}

/// Measure the bound constants: ℓ and μ from the Hessians, δ_n² from sampled
/// gradient noise, G² as the largest mean squared stochastic-gradient norm
/// seen on pilot trajectories, γ_v exactly (every `L_n* = 0`).
pub fn estimate_constants(toy: &QuadraticToy, cfg: &ToyConfig, seed: &SeedStream) -> Result<ConvergenceParams> {
    let all = toy.hessians.iter().flat_map(|h| h.iter().copied());
    let (mu, l) = all.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(mu > 0.0) {
        return Err(Error::invalid("toy problem is not strongly convex"));
    }

    let mut variance = Vec::with_capacity(toy.vehicles());
    for n in 0..toy.vehicles() {
        let mut rng = seed.child("noise").index(n as u64).rng();
        let mean = toy.gradient(n, &toy.start);
        let m = cfg.trials;
        let total: f64 = (0..m)
            .map(|_| {
                let d = toy.stochastic_gradient(n, &toy.start, &mut rng) - &mean;
                d.dot(&d)
            })
            .sum();
        variance.push(cfg.safety * total / m as f64);
    }

    let mut params = ConvergenceParams {
        smoothness: l,
        strong_convexity: mu,
        grad_sq: 0.0,
        variance,
        non_iid: toy.optimal_loss,
        total: toy.vehicles(),
        selected: cfg.selected,
        weights: toy.weights.clone(),
        init_dist_sq: {
            let d = &toy.start - &toy.optimum;
            d.dot(&d)
        },
    };

    let mut sums = vec![0.0; cfg.horizon * toy.vehicles()];
    for s in 0..cfg.pilot_seeds {
        let mut rng = seed.child("pilot").index(s as u64).rng();
        toy.simulate(cfg.selected, cfg.local_steps, cfg.horizon, |t| params.step_size(t), &mut rng, |v| {
            let row = (v.t - 1) * toy.vehicles();
            for (acc, g) in sums[row..row + toy.vehicles()].iter_mut().zip(v.grad_sq) {
                *acc += g;
            }
        })?;
    }
    let peak = sums.iter().fold(0.0f64, |m, &s| m.max(s));
    params.grad_sq = cfg.safety * peak / cfg.pilot_seeds as f64;
    params.validate()?;
    Ok(params)
}
