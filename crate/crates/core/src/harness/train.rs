//! Training runs: each round the data-holding vehicles are re-spawned, the
//! ones whose nominal round fits their standing time participate, and every
//! scheme trains the same initial model on its own plan.

use serde::Serialize;

use crate::cost::{baseline_costs, round_costs, RoundScenario, Scheme, SchemeCost, SL_CUT};
use crate::error::Result;
use crate::mobility::{spawn_fleet, standing_time};
use crate::optimizer::{joint_bcd, nominal_screen};
use crate::profile::CutLayerProfile;
use crate::seed::SeedStream;
use crate::split_train::{
    partition_noniid, toy_cut, FederatedData, RoundMetrics, RoundPlan, SplitModel, Trainer, Workflow,
};

use super::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRow {
    pub scheme: String,
    pub round: usize,
    pub participants: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss: f64,
    pub round_time: f64,
    pub elapsed: f64,
    pub energy: f64,
}

impl TrainingRow {
    fn new(scheme: String, m: RoundMetrics) -> Self {
        Self {
            scheme,
            round: m.round,
            participants: m.participants,
            train_acc: m.train_acc,
            test_acc: m.test_acc,
            loss: m.loss,
            round_time: m.round_time,
            elapsed: m.elapsed,
            energy: m.energy,
        }
    }
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Round plan of `scheme` given the selected data holders `selected`
/// (indices into the partition) and their round scenario.
fn plan_for(
    scheme: Scheme,
    sc: &Scenario,
    round: &RoundScenario,
    selected: &[usize],
    profile_depth: usize,
    depth: usize,
) -> Result<RoundPlan> {
    let cut = |c: usize| toy_cut(c, profile_depth, depth);
    let opts = sc.bcd_options();
    let fixed = |workflow: Workflow, cost: SchemeCost| RoundPlan {
        participants: selected.to_vec(),
        weights: uniform(selected.len()),
        workflow,
        round_time: cost.overall_delay(),
        energy: cost.total_energy(),
    };
    Ok(match scheme {
        Scheme::Cl => fixed(Workflow::Central, baseline_costs(scheme, round, &opts)?),
        Scheme::Fl => fixed(Workflow::Federated, baseline_costs(scheme, round, &opts)?),
        Scheme::Sl | Scheme::SlOptimal => {
            fixed(Workflow::Sequential { cut: cut(SL_CUT) }, baseline_costs(scheme, round, &opts)?)
        }
        Scheme::Sfl(c) => fixed(
            Workflow::SplitFed {
                cuts: vec![cut(c); selected.len()],
            },
            baseline_costs(scheme, round, &opts)?,
        ),
        Scheme::Asfv => {
            let report = joint_bcd(round, &opts)?;
            if report.kept.is_empty() {
                return Ok(RoundPlan {
                    participants: vec![],
                    weights: vec![],
                    workflow: Workflow::SplitFed { cuts: vec![] },
                    round_time: 0.0,
                    energy: 0.0,
                });
            }
            let cost = SchemeCost::from_breakdown(scheme, &round_costs(&round.subset(&report.kept), &report.allocations)?);
            RoundPlan {
                participants: report.kept.iter().map(|&i| selected[i]).collect(),
                weights: uniform(report.kept.len()),
                workflow: Workflow::SplitFed {
                    cuts: report.allocations.iter().map(|a| cut(a.cut)).collect(),
                },
                round_time: cost.overall_delay(),
                energy: cost.total_energy(),
            }
        }
    })
}

/// Train every configured scheme for `training.rounds` rounds and return the
/// learning curves, scheme by scheme.
pub fn run_training(sc: &Scenario, profile: &CutLayerProfile) -> Result<Vec<TrainingRow>> {
    sc.validate()?;
    let cfg = &sc.training;
    let root = SeedStream::new(sc.seed).child("train");
    let (train, test) = cfg.dataset.load(&root.child("data"))?;
    let parts = partition_noniid(&train, cfg.vehicles, cfg.labels_per_vehicle, cfg.size_exponent, &root)?;
    let data = FederatedData::new(&train, test, &parts)?;
    let dims = cfg.dims(train.dim(), train.classes);
    let initial = SplitModel::new(&dims, cfg.activation, &mut root.child("init").rng())?;
    let profile_depth = profile.layers.len() - 1;
    let depth = initial.depth();

    let mobility = sc.mobility_config();
    let mut plans: Vec<Vec<RoundPlan>> = vec![Vec::with_capacity(cfg.rounds); sc.schemes.len()];
    for r in 0..cfg.rounds {
        let mut fleet = spawn_fleet(&mobility, cfg.vehicles, &mut root.child("mobility").index(r as u64).rng())?;
        for (v, p) in fleet.iter_mut().zip(&parts) {
            v.dataset_size = p.len();
        }
        let standing: Vec<f64> = fleet
            .iter()
            .map(|v| standing_time(v, mobility.coverage_diameter_m, mobility.t_max_s))
            .collect::<Result<_>>()?;
        let all = sc.round_scenario(profile, fleet);
        let selection = nominal_screen(&all, &standing)?;
        let round = all.subset(&selection.selected);
        for (plans, &scheme) in plans.iter_mut().zip(&sc.schemes) {
            plans.push(if selection.is_empty() {
                RoundPlan {
                    participants: vec![],
                    weights: vec![],
                    workflow: Workflow::Central,
                    round_time: 0.0,
                    energy: 0.0,
                }
            } else {
                plan_for(scheme, sc, &round, &selection.selected, profile_depth, depth)?
            });
        }
    }

    let trainer = Trainer {
        data: &data,
        seed: root.child("shuffle"),
        batch_size: cfg.batch_size,
        local_epochs: cfg.local_epochs,
        learning_rate: cfg.learning_rate,
    };
    let mut rows = Vec::new();
    for (scheme, plans) in sc.schemes.iter().zip(&plans) {
        let (_, metrics) = trainer.run(&initial, plans)?;
        rows.extend(metrics.into_iter().map(|m| TrainingRow::new(scheme.to_string(), m)));
    }
    Ok(rows)
}
