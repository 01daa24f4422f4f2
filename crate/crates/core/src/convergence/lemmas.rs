//! One-sided Monte-Carlo checks: every check passes when the empirical mean
//! is at most the bound plus three standard errors.

use ndarray::Array1;
use serde::Serialize;

use crate::error::Result;
use crate::seed::SeedStream;

use super::toy::{estimate_constants, full_mean, subset_mean, QuadraticToy};
use super::{sampling_factor, ConvergenceParams, ToyConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub quantity: String,
    /// SGD step the row refers to; 0 for state-independent checks.
    pub step: usize,
    pub empirical: f64,
    pub bound: f64,
    /// Three standard errors of the empirical mean.
    pub slack: f64,
    pub pass: bool,
}

impl LemmaCheck {
    fn new(quantity: &str, step: usize, stats: &Moments, bound: f64) -> Self {
        let (empirical, slack) = (stats.mean(), 3.0 * stats.std_error());
        Self {
            quantity: quantity.to_string(),
            step,
            empirical,
            bound,
            slack,
            pass: empirical <= bound + slack,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n as f64 * m * m) / (self.n - 1) as f64).max(0.0)
    }

    fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Sampling variance of the aggregate and its unbiasedness. Every trial
/// takes one stochastic local step of size `step` from the start point on
/// every vehicle, then averages a uniform `selected`-subset.
///
/// Returns two rows: `E‖ω_{t+1} − v_{t+1}‖²` against
/// `(N/K − 1)·N/(N − 1)·η²G²`, and `‖mean(ω_{t+1} − v_{t+1})‖²` against its
/// expectation under an unbiased aggregate.
pub fn validate_lemma_sampling(
    toy: &QuadraticToy,
    selected: usize,
    step: f64,
    grad_sq: f64,
    trials: usize,
    seed: &SeedStream,
) -> Vec<LemmaCheck> {
    let mut rng = seed.child("sampling").index(selected as u64).rng();
    let n = toy.vehicles();
    let mut spread = Moments::default();
    let mut sum = Array1::<f64>::zeros(toy.dim());
    let mut sum_sq = Array1::<f64>::zeros(toy.dim());
    for _ in 0..trials {
        let points: Vec<Array1<f64>> = (0..n)
            .map(|i| {
                let mut w = toy.start.clone();
                w.scaled_add(-step, &toy.stochastic_gradient(i, &toy.start, &mut rng));
                w
            })
            .collect();
        let v = full_mean(&points);
        let d = subset_mean(&points, selected, &mut rng) - &v;
        spread.push(d.dot(&d));
        sum += &d;
        sum_sq += &(&d * &d);
    }
    let t = trials as f64;
    let mean = &sum / t;
    let var = (&sum_sq - &(&mean * &mean * t)) / (t - 1.0);
    let var = var.mapv(|v| v.max(0.0));
    let expected = var.sum() / t;
    let sd = (2.0 * var.dot(&var)).sqrt() / t;
    let bias = mean.dot(&mean);
    vec![
        LemmaCheck::new(
            "sampling_variance",
            0,
            &spread,
            sampling_factor(n, selected) * step * step * grad_sq,
        ),
        LemmaCheck {
            quantity: "unbiased_aggregate".into(),
            step: 0,
            empirical: bias,
            bound: expected,
            slack: 3.0 * sd,
            pass: bias <= expected + 3.0 * sd,
        },
    ]
}

/// `E‖g_t − ḡ_t‖²` for the weighted stochastic gradient at the start point
/// against `Σ p_n²δ_n²`.
pub fn validate_gradient_variance(toy: &QuadraticToy, variance: &[f64], trials: usize, seed: &SeedStream) -> LemmaCheck {
    let mut rng = seed.child("gradient").rng();
    let n = toy.vehicles();
    let exact: Vec<Array1<f64>> = (0..n).map(|i| toy.gradient(i, &toy.start)).collect();
    let mean = toy.average(&exact);
    let mut stats = Moments::default();
    for _ in 0..trials {
        let noisy: Vec<Array1<f64>> = (0..n).map(|i| toy.stochastic_gradient(i, &toy.start, &mut rng)).collect();
        let d = toy.average(&noisy) - &mean;
        stats.push(d.dot(&d));
    }
    let bound = toy.weights.iter().zip(variance).map(|(p, d)| p * p * d).sum();
    LemmaCheck::new("gradient_variance", 0, &stats, bound)
}

/// Per-step drift `E Σ p_n‖ω_t − ω_t^n‖²` over `trials` trajectories of
/// `horizon` steps against `4η_t²G²`.
pub fn validate_local_drift(
    toy: &QuadraticToy,
    params: &ConvergenceParams,
    cfg: &ToyConfig,
    horizon: usize,
    seed: &SeedStream,
) -> Result<Vec<LemmaCheck>> {
    let mut stats = vec![Moments::default(); horizon];
    for s in 0..cfg.trials {
        let mut rng = seed.child("drift").index(s as u64).rng();
        toy.simulate(cfg.selected, cfg.local_steps, horizon, |t| params.step_size(t), &mut rng, |v| {
            let drift: f64 = v
                .locals
                .iter()
                .zip(&toy.weights)
                .map(|(w, p)| {
                    let d = v.global - w;
                    p * d.dot(&d)
                })
                .sum();
            stats[v.t - 1].push(drift);
        })?;
    }
    Ok(stats
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let eta = params.step_size(i + 1);
            LemmaCheck::new("local_drift", i + 1, m, 4.0 * eta * eta * params.grad_sq)
        })
        .collect())
}

/// Optimality gaps and squared distances to the optimum, indexed `[seed][t − 1]`.
type Trajectories = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Optimality gap and squared distance to the optimum of the global model
/// along each seeded trajectory.
fn trajectories(
    toy: &QuadraticToy,
    params: &ConvergenceParams,
    cfg: &ToyConfig,
    seed: &SeedStream,
) -> Result<Trajectories> {
    let mut gaps = Vec::with_capacity(cfg.seeds);
    let mut dists = Vec::with_capacity(cfg.seeds);
    for s in 0..cfg.seeds {
        let mut rng = seed.child("trajectory").index(s as u64).rng();
        let mut gap = Vec::with_capacity(cfg.horizon);
        let mut dist = Vec::with_capacity(cfg.horizon);
        toy.simulate(params.selected, cfg.local_steps, cfg.horizon, |t| params.step_size(t), &mut rng, |v| {
            gap.push(toy.gap(v.global));
            let d = v.global - &toy.optimum;
            dist.push(d.dot(&d));
        })?;
        gaps.push(gap);
        dists.push(dist);
    }
    Ok((gaps, dists))
}

/// `E[L(ω_T)] − L*` against the bound for every `T` in `1..=horizon`.
pub fn validate_bound(
    toy: &QuadraticToy,
    params: &ConvergenceParams,
    cfg: &ToyConfig,
    seed: &SeedStream,
) -> Result<Vec<LemmaCheck>> {
    let (gaps, _) = trajectories(toy, params, cfg, seed)?;
    (0..cfg.horizon)
        .map(|i| {
            let mut m = Moments::default();
            gaps.iter().for_each(|g| m.push(g[i]));
            Ok(LemmaCheck::new("bound", i + 1, &m, params.bound(i + 1)?))
        })
        .collect()
}

/// Per-step contraction `E‖ω_{t+1} − ω*‖² − (1 − μη_t)E‖ω_t − ω*‖²` against
/// `η_t²Γ`, checked on paired trajectories.
pub fn validate_contraction(
    toy: &QuadraticToy,
    params: &ConvergenceParams,
    cfg: &ToyConfig,
    seed: &SeedStream,
) -> Result<Vec<LemmaCheck>> {
    let (_, dists) = trajectories(toy, params, cfg, seed)?;
    let gamma = params.gamma_term()?;
    Ok((1..cfg.horizon)
        .map(|t| {
            let eta = params.step_size(t);
            let mut m = Moments::default();
            for d in &dists {
                m.push(d[t] - (1.0 - params.strong_convexity * eta) * d[t - 1]);
            }
            LemmaCheck::new("contraction", t, &m, eta * eta * gamma)
        })
        .collect())
}

/// Build the toy from `cfg`, measure its constants and run every check,
/// including the full-participation variants of the sampling checks.
pub fn run_suite(cfg: &ToyConfig, seed: &SeedStream) -> Result<(ConvergenceParams, Vec<LemmaCheck>)> {
    cfg.validate()?;
    let toy = QuadraticToy::new(cfg, seed)?;
    let params = estimate_constants(&toy, cfg, seed)?;
    let eta = params.step_size(1);
    let mut rows = validate_lemma_sampling(&toy, cfg.selected, eta, params.grad_sq, cfg.trials, seed);
    for mut r in validate_lemma_sampling(&toy, cfg.vehicles, eta, params.grad_sq, cfg.trials, seed) {
        r.quantity.push_str("_full");
        r.pass &= r.empirical == 0.0;
        rows.push(r);
    }
    rows.push(validate_gradient_variance(&toy, &params.variance, cfg.trials, seed));
    rows.extend(validate_local_drift(&toy, &params, cfg, cfg.horizon, seed)?);
    rows.extend(validate_bound(&toy, &params, cfg, seed)?);
    rows.extend(validate_contraction(&toy, &params, cfg, seed)?);
    Ok((params, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            horizon: 40,
            trials: 1000,
            seeds: 20,
            pilot_seeds: 5,
            ..ToyConfig::default()
        }
    }

    fn setup(cfg: &ToyConfig) -> (QuadraticToy, ConvergenceParams) {
        let toy = QuadraticToy::new(cfg, &SeedStream::new(11)).unwrap();
        let p = estimate_constants(&toy, cfg, &SeedStream::new(11)).unwrap();
        (toy, p)
    }

    #[test]
    fn two_point_masses() {
        // One vehicle at +g, one at -g: any single pick is ‖g‖ from the mean.
        let cfg = ToyConfig {
            vehicles: 2,
            selected: 1,
            dim: 1,
            noise_std: 0.0,
            ..small()
        };
        let mut toy = QuadraticToy::new(&cfg, &SeedStream::new(1)).unwrap();
        toy.start = Array1::zeros(1);
        toy.hessians = vec![Array1::from_elem(1, 1.0); 2];
        toy.centres = vec![Array1::from_elem(1, -3.0), Array1::from_elem(1, 3.0)];
        let eta = 0.5;
        let rows = validate_lemma_sampling(&toy, 1, eta, 9.0, 1000, &SeedStream::new(1));
        assert!((rows[0].empirical - eta * eta * 9.0).abs() < 1e-12);
        assert_eq!(rows[0].bound, 2.0 * eta * eta * 9.0);
        assert!(rows[0].pass && rows[1].pass);
    }

    #[test]
    fn full_participation_is_exact() {
        let cfg = small();
        let (toy, p) = setup(&cfg);
        let rows = validate_lemma_sampling(&toy, cfg.vehicles, 0.1, p.grad_sq, 500, &SeedStream::new(2));
        assert_eq!(rows[0].empirical, 0.0);
        assert_eq!(rows[1].empirical, 0.0);
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn underestimated_gradient_bound_is_flagged() {
        let cfg = small();
        let (toy, p) = setup(&cfg);
        let honest = validate_lemma_sampling(&toy, 3, p.step_size(1), p.grad_sq, 1000, &SeedStream::new(3));
        assert!(honest[0].pass);
        let rigged = validate_lemma_sampling(&toy, 3, p.step_size(1), p.grad_sq * 1e-3, 1000, &SeedStream::new(3));
        assert!(!rigged[0].pass);
    }

    #[test]
    fn noiseless_gradients_have_no_variance() {
        let cfg = ToyConfig {
            noise_std: 0.0,
            ..small()
        };
        let (toy, p) = setup(&cfg);
        let r = validate_gradient_variance(&toy, &p.variance, 200, &SeedStream::new(4));
        assert_eq!(r.empirical, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn independent_noise_matches_weighted_variance() {
        let cfg = small();
        let (toy, _) = setup(&cfg);
        let truth: Vec<f64> = (0..toy.vehicles()).map(|n| toy.true_variance(n)).collect();
        let r = validate_gradient_variance(&toy, &truth, 20_000, &SeedStream::new(5));
        assert!((r.empirical / r.bound - 1.0).abs() < 0.05, "{} vs {}", r.empirical, r.bound);
    }

    #[test]
    fn drift_is_zero_at_sync_and_bounded_after() {
        let cfg = ToyConfig { trials: 200, ..small() };
        let (toy, p) = setup(&cfg);
        let rows = validate_local_drift(&toy, &p, &cfg, 10, &SeedStream::new(6)).unwrap();
        assert_eq!(rows[0].empirical, 0.0);
        assert_eq!(rows[5].empirical, 0.0);
        assert!(rows[1].empirical > 0.0);
        // One local step: drift is at most η²G².
        let eta = p.step_size(1);
        assert!(rows[1].empirical <= eta * eta * p.grad_sq);
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn suite_passes_on_small_config() {
        let (_, rows) = run_suite(&small(), &SeedStream::new(7)).unwrap();
        let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
