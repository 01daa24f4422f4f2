//! Label-skewed split of a dataset across vehicles.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Pareto};

use crate::error::{Error, Result};
use crate::seed::SeedStream;

use super::data::Dataset;

/// Indices into the source dataset for every vehicle.
///
/// Each vehicle draws `labels_per_vehicle` distinct labels and a Pareto
/// weight with tail index `size_exponent`. The samples of every label are
/// shuffled and shared among the vehicles holding it in proportion to their
/// weights, each getting at least one. Labels nobody drew are left out.
pub fn partition_noniid(
    data: &Dataset,
    vehicles: usize,
    labels_per_vehicle: usize,
    size_exponent: f64,
    seed: &SeedStream,
) -> Result<Vec<Vec<usize>>> {
    if vehicles == 0 {
        return Err(Error::EmptyVehicleSet);
    }
    let classes = data.classes;
    if labels_per_vehicle == 0 || labels_per_vehicle > classes {
        return Err(Error::invalid(format!(
            "{labels_per_vehicle} labels per vehicle with {classes} classes"
        )));
    }
    let pareto = Pareto::new(1.0, size_exponent)
        .map_err(|e| Error::invalid(format!("size exponent {size_exponent}: {e}")))?;
    let mut rng = seed.child("partition").rng();
    let mut held: Vec<Vec<usize>> = Vec::with_capacity(vehicles);
    let mut weight = Vec::with_capacity(vehicles);
    let all: Vec<usize> = (0..classes).collect();
    for _ in 0..vehicles {
        let mut labels: Vec<usize> = all.choose_multiple(&mut rng, labels_per_vehicle).copied().collect();
        labels.sort_unstable();
        held.push(labels);
        weight.push(pareto.sample(&mut rng));
    }

    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in data.y.iter().enumerate() {
        by_label[y].push(i);
    }
    let mut parts = vec![Vec::new(); vehicles];
    for (label, pool) in by_label.iter_mut().enumerate() {
        let owners: Vec<usize> = (0..vehicles).filter(|&n| held[n].contains(&label)).collect();
        if owners.is_empty() {
            continue;
        }
        if pool.len() < owners.len() {
            return Err(Error::DatasetTooSmall(format!(
                "label {label} has {} samples for {} vehicles",
                pool.len(),
                owners.len()
            )));
        }
        pool.shuffle(&mut rng);
        let counts = proportional_counts(pool.len(), &owners.iter().map(|&n| weight[n]).collect::<Vec<_>>());
        let mut at = 0;
        for (&n, c) in owners.iter().zip(counts) {
            parts[n].extend_from_slice(&pool[at..at + c]);
            at += c;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Split `total` items into integer counts proportional to `weights`, each at
/// least one (largest-remainder rounding). Requires `total >= weights.len()`.
fn proportional_counts(total: usize, weights: &[f64]) -> Vec<usize> {
    let k = weights.len();
    let spare = (total - k) as f64;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| spare * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - k - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

/// Batches of indices `0..n` in a random order, the last one possibly short.
pub fn shuffled_batches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}
