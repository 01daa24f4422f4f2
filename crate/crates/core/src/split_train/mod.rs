//! Desk-scale split federated training: a dense classifier split at a cut
//! layer, label-skewed data partitioning and the per-scheme round workflows.

pub mod data;
pub mod model;
pub mod partition;
pub mod schemes;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{Dataset, DatasetSource};
pub use model::{split_step, Activation, SplitModel};
pub use partition::{partition_noniid, shuffled_batches};
pub use schemes::{aggregate, FederatedData, RoundMetrics, RoundPlan, Trainer, Workflow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    /// Vehicles holding data.
    pub vehicles: usize,
    pub labels_per_vehicle: usize,
    /// Pareto tail index of the per-vehicle dataset sizes.
    pub size_exponent: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dataset: DatasetSource,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 64,
            local_epochs: 5,
            rounds: 30,
            vehicles: 10,
            labels_per_vehicle: 3,
            size_exponent: 1.5,
            hidden: vec![128, 64, 32],
            activation: Activation::Tanh,
            dataset: DatasetSource::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.local_epochs == 0 || self.vehicles == 0 {
            return Err(Error::invalid("batch size, local epochs and vehicles must be positive"));
        }
        if self.labels_per_vehicle == 0 {
            return Err(Error::invalid("labels per vehicle must be positive"));
        }
        if !(self.size_exponent > 0.0) {
            return Err(Error::invalid(format!("size exponent {}", self.size_exponent)));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("need at least one non-empty hidden layer"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(classes);
        d
    }
}

/// Map a profile cut (`1..=profile_depth`) onto a model of `depth` layers,
/// keeping at least one layer on each side.
pub fn toy_cut(profile_cut: usize, profile_depth: usize, depth: usize) -> usize {
    let scaled = (profile_cut as f64 * depth as f64 / profile_depth as f64).round() as usize;
    scaled.clamp(1, depth.saturating_sub(1).max(1))
}
