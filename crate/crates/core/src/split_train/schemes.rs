//! Round-by-round training under each scheme.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::SeedStream;

use super::data::Dataset;
use super::model::{split_step, Dense, SplitModel};
use super::partition::shuffled_batches;

/// How one round of training is carried out.
#[derive(Debug, Clone, PartialEq)]
pub enum Workflow {
    /// The edge server trains on the pooled data of the participants.
    Central,
    /// Each participant trains the whole model locally; models are averaged.
    Federated,
    /// Participants take turns, handing the model on at the given cut.
    Sequential { cut: usize },
    /// Participants train their vehicle-side layers in parallel against one
    /// shared server-side model; one cut per participant.
    SplitFed { cuts: Vec<usize> },
}

/// Who trains in a round and what the round costs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    /// Indices into the per-vehicle datasets, ascending.
    pub participants: Vec<usize>,
    /// Aggregation weights, aligned with `participants`.
    pub weights: Vec<f64>,
    pub workflow: Workflow,
    pub round_time: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub participants: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss: f64,
    pub round_time: f64,
    pub elapsed: f64,
    pub energy: f64,
}

/// Data shared by every scheme in a run.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub parts: Vec<Dataset>,
    /// Union of all parts (what the vehicles hold between them).
    pub union: Dataset,
    pub test: Dataset,
}

impl FederatedData {
    pub fn new(train: &Dataset, test: Dataset, indices: &[Vec<usize>]) -> Result<Self> {
        let parts: Vec<Dataset> = indices.iter().map(|idx| train.select(idx)).collect();
        let refs: Vec<&Dataset> = parts.iter().collect();
        let union = Dataset::concat(&refs)?;
        Ok(Self { parts, union, test })
    }
}

/// `Σ p_n ω_n` layer by layer, which equals `ω_t + Σ p_n (ω_n − ω_t)` when
/// the weights sum to one.
pub fn aggregate(models: &[SplitModel], weights: &[f64], previous: &SplitModel) -> Result<SplitModel> {
    if models.len() != weights.len() || models.is_empty() {
        return Err(Error::ProbabilityMismatch(format!(
            "{} models, {} weights",
            models.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::ProbabilityMismatch(format!("weights sum to {total}")));
    }
    for m in models {
        if m.num_params() != previous.num_params() || m.depth() != previous.depth() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", previous.num_params()),
                got: format!("{}", m.num_params()),
            });
        }
    }
    let layers = (0..previous.depth())
        .map(|i| {
            let mut w = &models[0].layers()[i].weight * weights[0];
            let mut b = &models[0].layers()[i].bias * weights[0];
            for (m, &p) in models.iter().zip(weights).skip(1) {
                w.scaled_add(p, &m.layers()[i].weight);
                b.scaled_add(p, &m.layers()[i].bias);
            }
            Dense { weight: w, bias: b }
        })
        .collect();
    SplitModel::from_layers(layers, previous.activation())
}

fn rows(d: &Dataset, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    let s = d.select(idx);
    (s.x, s.y)
}

/// Batch orders for `epochs` passes over `n` samples.
fn epoch_batches(seed: &SeedStream, round: usize, vehicle: usize, n: usize, batch: usize, epochs: usize) -> Vec<Vec<usize>> {
    let mut rng = seed.child("shuffle").index(round as u64).index(vehicle as u64).rng();
    (0..epochs).flat_map(|_| shuffled_batches(n, batch, &mut rng)).collect()
}

/// Model with layers `0..cut` from `vehicle` and the rest from `server`.
fn join(vehicle: &SplitModel, server: &SplitModel, cut: usize) -> Result<SplitModel> {
    let layers = (0..vehicle.depth())
        .map(|i| if i < cut { vehicle.layers()[i].clone() } else { server.layers()[i].clone() })
        .collect();
    SplitModel::from_layers(layers, vehicle.activation())
}

pub struct Trainer<'a> {
    pub data: &'a FederatedData,
    pub seed: SeedStream,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
}

impl Trainer<'_> {
    /// Train one round from `global` and return the next global model.
    pub fn round(&self, global: &SplitModel, round: usize, plan: &RoundPlan) -> Result<SplitModel> {
        if plan.participants.is_empty() {
            return Ok(global.clone());
        }
        if plan.weights.len() != plan.participants.len() {
            return Err(Error::ProbabilityMismatch("one weight per participant required".into()));
        }
        let (b, e, lr) = (self.batch_size, self.local_epochs, self.learning_rate);
        match &plan.workflow {
            Workflow::Central => {
                let refs: Vec<&Dataset> = plan.participants.iter().map(|&n| &self.data.parts[n]).collect();
                let pooled = Dataset::concat(&refs)?;
                let mut model = global.clone();
                for batch in epoch_batches(&self.seed, round, plan.participants[0], pooled.len(), b, e) {
                    let (x, y) = rows(&pooled, &batch);
                    model.sgd_step(&x, &y, lr)?;
                }
                Ok(model)
            }
            Workflow::Federated => {
                let mut locals = Vec::with_capacity(plan.participants.len());
                for &n in &plan.participants {
                    let part = &self.data.parts[n];
                    let mut model = global.clone();
                    for batch in epoch_batches(&self.seed, round, n, part.len(), b, e) {
                        let (x, y) = rows(part, &batch);
                        model.sgd_step(&x, &y, lr)?;
                    }
                    locals.push(model);
                }
                aggregate(&locals, &plan.weights, global)
            }
            Workflow::Sequential { cut } => {
                let mut vehicle = global.clone();
                let mut server = global.clone();
                for &n in &plan.participants {
                    let part = &self.data.parts[n];
                    for batch in epoch_batches(&self.seed, round, n, part.len(), b, e) {
                        let (x, y) = rows(part, &batch);
                        split_step(&mut vehicle, &mut server, *cut, &x, &y, lr)?;
                    }
                }
                join(&vehicle, &server, *cut)
            }
            Workflow::SplitFed { cuts } => {
                if cuts.len() != plan.participants.len() {
                    return Err(Error::invalid("one cut per participant required"));
                }
                let mut server = global.clone();
                let mut vehicles: Vec<SplitModel> = plan.participants.iter().map(|_| global.clone()).collect();
                let orders: Vec<Vec<Vec<usize>>> = plan
                    .participants
                    .iter()
                    .map(|&n| epoch_batches(&self.seed, round, n, self.data.parts[n].len(), b, e))
                    .collect();
                let longest = orders.iter().map(Vec::len).max().unwrap_or(0);
                for step in 0..longest {
                    for (k, &n) in plan.participants.iter().enumerate() {
                        if let Some(batch) = orders[k].get(step) {
                            let (x, y) = rows(&self.data.parts[n], batch);
                            split_step(&mut vehicles[k], &mut server, cuts[k], &x, &y, lr)?;
                        }
                    }
                }
                let full: Vec<SplitModel> = vehicles
                    .iter()
                    .zip(cuts)
                    .map(|(v, &c)| join(v, &server, c))
                    .collect::<Result<_>>()?;
                aggregate(&full, &plan.weights, global)
            }
        }
    }

    /// Run every plan in turn, evaluating after each round.
    pub fn run(&self, initial: &SplitModel, plans: &[RoundPlan]) -> Result<(SplitModel, Vec<RoundMetrics>)> {
        let mut model = initial.clone();
        let mut elapsed = 0.0;
        let mut out = Vec::with_capacity(plans.len());
        for (r, plan) in plans.iter().enumerate() {
            model = self.round(&model, r, plan)?;
            elapsed += plan.round_time;
            out.push(RoundMetrics {
                round: r + 1,
                participants: plan.participants.len(),
                train_acc: model.accuracy(&self.data.union.x, &self.data.union.y)?,
                test_acc: model.accuracy(&self.data.test.x, &self.data.test.y)?,
                loss: model.loss(&self.data.union.x, &self.data.union.y)?,
                round_time: plan.round_time,
                elapsed,
                energy: plan.energy,
            });
        }
        Ok((model, out))
    }
}
