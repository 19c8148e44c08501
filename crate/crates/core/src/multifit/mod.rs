//! Multi-homography fitting: partitions feature matches into
//! homography-consistent subsets plus an outlier class by minimizing a
//! data + Potts smoothness + label-cost energy.

mod expansion;
mod neighborhood;
mod pearl;
mod ransac;

use serde::{Deserialize, Serialize};

use crate::geometry::{symmetric_transfer_error, FeatureMatch, Homography};

pub use expansion::expand_labels;
pub use neighborhood::{build_neighborhood, build_neighborhood_delaunay_only, NeighborGraph};
pub use pearl::{fit, fit_from_models, FitResult};
pub use ransac::{init_models_iterative_ransac, init_models_with, RansacOptions};

/// Label index of the outlier model.
pub const OUTLIER: usize = 0;

/// A model must keep at least this many supporting matches to survive fitting.
pub const MIN_MODEL_SUPPORT: usize = 8;

// stand-in for an infinite transfer error so cut capacities stay finite
pub(crate) const DATA_COST_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Potts penalty per neighboring pair with different labels.
    pub lambda: f64,
    /// Cost per homography in use.
    pub beta: f64,
    /// Constant data cost of the outlier label (STE pixels).
    pub gamma: f64,
    /// Iterative RANSAC stops once fewer matches than this remain unclaimed.
    pub min_remaining: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { lambda: 20.0, beta: 10.0, gamma: 200.0, min_remaining: 50 }
    }
}

/// Homography models; label `k >= 1` refers to `models[k - 1]`, label 0 is the outlier model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub models: Vec<Homography>,
}

impl ModelSet {
    pub fn new(models: Vec<Homography>) -> Self {
        Self { models }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Number of labels including the outlier label.
    pub fn label_count(&self) -> usize {
        self.models.len() + 1
    }

    pub fn model(&self, label: usize) -> Option<&Homography> {
        label.checked_sub(1).and_then(|k| self.models.get(k))
    }
}

/// Per-match label into a [`ModelSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

impl Assignment {
    pub fn all_outliers(n: usize) -> Self {
        Self { labels: vec![OUTLIER; n] }
    }

    pub fn supporters(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn support_counts(&self, label_count: usize) -> Vec<usize> {
        let mut counts = vec![0; label_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub data: f64,
    pub smooth: f64,
    pub label_cost: f64,
    pub total: f64,
}

/// `D(p_i, l)` for every match and label, laid out match-major.
#[derive(Debug, Clone)]
pub(crate) struct CostTable {
    pub labels: usize,
    pub costs: Vec<f64>,
}

impl CostTable {
    pub fn new(models: &ModelSet, matches: &[FeatureMatch], gamma: f64) -> Self {
        let labels = models.label_count();
        let row = |m: &FeatureMatch| -> Vec<f64> {
            std::iter::once(gamma)
                .chain(
                    models
                        .models
                        .iter()
                        .map(|h| symmetric_transfer_error(h, m).min(DATA_COST_CAP)),
                )
                .collect()
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            matches.par_iter().map(row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<f64>> = matches.iter().map(row).collect();
        Self { labels, costs: rows.concat() }
    }

    #[inline]
    pub fn get(&self, i: usize, label: usize) -> f64 {
        self.costs[i * self.labels + label]
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.costs.len() / self.labels
    }

    /// Cheapest label among `allowed` for match `i`, ties to the lower label.
    pub fn best_label(&self, i: usize, allowed: impl Iterator<Item = usize>) -> usize {
        let mut best = (f64::INFINITY, OUTLIER);
        for l in allowed {
            let c = self.get(i, l);
            if c < best.0 {
                best = (c, l);
            }
        }
        best.1
    }

    pub fn energy(&self, labels: &[usize], graph: &NeighborGraph, params: &EnergyParams) -> EnergyBreakdown {
        let data: f64 = labels.iter().enumerate().map(|(i, &l)| self.get(i, l)).sum();
        let cut = graph.edges.iter().filter(|&&(i, j)| labels[i] != labels[j]).count();
        let mut used = vec![false; self.labels];
        for &l in labels {
            used[l] = true;
        }
        let models_used = used.iter().skip(1).filter(|u| **u).count();
        let smooth = params.lambda * cut as f64;
        let label_cost = params.beta * models_used as f64;
        EnergyBreakdown { data, smooth, label_cost, total: data + smooth + label_cost }
    }
}

/// Evaluates the fitting energy of an assignment.
///
/// Data terms are symmetric transfer errors (capped at 1e12 for points that
/// map to infinity) and `gamma` for the outlier label; the outlier label takes
/// part in the Potts term like any other label but carries no label cost.
pub fn energy(
    models: &ModelSet,
    assign: &Assignment,
    graph: &NeighborGraph,
    matches: &[FeatureMatch],
    params: &EnergyParams,
) -> EnergyBreakdown {
    CostTable::new(models, matches, params.gamma).energy(&assign.labels, graph, params)
}

/// Assigns each match its cheapest label, ignoring smoothness and label costs.
pub fn assign_by_data(models: &ModelSet, matches: &[FeatureMatch], params: &EnergyParams) -> Assignment {
    let table = CostTable::new(models, matches, params.gamma);
    Assignment { labels: (0..matches.len()).map(|i| table.best_label(i, 0..table.labels)).collect() }
}
