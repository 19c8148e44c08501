use serde::Serialize;

use super::expansion::expand_with_table;
use super::ransac::init_models_iterative_ransac;
use super::{
    Assignment, CostTable, EnergyBreakdown, EnergyParams, ModelSet, NeighborGraph, MIN_MODEL_SUPPORT, OUTLIER,
};
use crate::error::{Error, Result};
use crate::geometry::{refine_homography_lm, FeatureMatch};

const MAX_OUTER_ITERATIONS: usize = 20;
const REL_ENERGY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub models: ModelSet,
    pub assignment: Assignment,
    pub energy: EnergyBreakdown,
    /// Total energy after initialization and after each accepted outer iteration.
    pub history: Vec<f64>,
    pub outer_iterations: usize,
}

struct State<'a> {
    matches: &'a [FeatureMatch],
    graph: &'a NeighborGraph,
    params: &'a EnergyParams,
    models: ModelSet,
    labels: Vec<usize>,
    table: CostTable,
}

impl<'a> State<'a> {
    fn new(models: ModelSet, matches: &'a [FeatureMatch], graph: &'a NeighborGraph, params: &'a EnergyParams) -> Self {
        let table = CostTable::new(&models, matches, params.gamma);
        let labels = (0..matches.len()).map(|i| table.best_label(i, 0..table.labels)).collect();
        Self { matches, graph, params, models, labels, table }
    }

    fn energy(&self) -> EnergyBreakdown {
        self.table.energy(&self.labels, self.graph, self.params)
    }

    fn rebuild_table(&mut self) {
        self.table = CostTable::new(&self.models, self.matches, self.params.gamma);
    }

    /// Removes model `k` (0-based), moving its supporters to their cheapest remaining label.
    fn remove_model(&mut self, k: usize) {
        let label = k + 1;
        let old_table = &self.table;
        let allowed = || (0..old_table.labels).filter(|&l| l != label);
        let reassigned: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| if l == label { old_table.best_label(i, allowed()) } else { l })
            .map(|l| if l > label { l - 1 } else { l })
            .collect();
        self.labels = reassigned;
        self.models.models.remove(k);
        self.rebuild_table();
    }

    /// Drops every model with fewer than the minimum number of supporters.
    fn enforce_support(&mut self) -> bool {
        let mut removed = false;
        loop {
            let counts = Assignment { labels: self.labels.clone() }.support_counts(self.table.labels);
            let weak = (1..counts.len()).find(|&l| counts[l] < MIN_MODEL_SUPPORT);
            match weak {
                Some(l) => {
                    self.remove_model(l - 1);
                    removed = true;
                }
                None => return removed,
            }
        }
    }

    /// Expansion and support enforcement until no model is dropped.
    fn stabilize(&mut self) {
        loop {
            expand_with_table(&self.table, &mut self.labels, self.graph, self.params);
            if !self.enforce_support() {
                return;
            }
        }
    }

    /// Deletes models one at a time when doing so lowers the total energy.
    fn prune(&mut self) {
        let mut k = 0;
        while k < self.models.len() {
            let current = self.energy().total;
            let mut trial = State {
                matches: self.matches,
                graph: self.graph,
                params: self.params,
                models: self.models.clone(),
                labels: self.labels.clone(),
                table: self.table.clone(),
            };
            trial.remove_model(k);
            if trial.energy().total < current {
                log::debug!("pruned model {k}: {} -> {}", current, trial.energy().total);
                self.models = trial.models;
                self.labels = trial.labels;
                self.table = trial.table;
            } else {
                k += 1;
            }
        }
    }

    /// LM re-estimation of every model on its current supporters.
    fn refit(&mut self) {
        for k in 0..self.models.len() {
            let support: Vec<FeatureMatch> = self
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == k + 1)
                .map(|(i, _)| self.matches[i])
                .collect();
            if support.len() < MIN_MODEL_SUPPORT {
                continue;
            }
            if let Ok(out) = refine_homography_lm(&self.models.models[k], &support) {
                self.models.models[k] = out.homography;
            }
        }
        self.rebuild_table();
    }
}

/// Full fit: sequential-RANSAC initialization followed by [`fit_from_models`].
pub fn fit(matches: &[FeatureMatch], graph: &NeighborGraph, params: &EnergyParams, seed: u64) -> Result<FitResult> {
    let initial = init_models_iterative_ransac(matches, params, seed)?;
    fit_from_models(initial, matches, graph, params)
}

/// Alternates label expansion, model re-estimation and model pruning.
///
/// Each outer iteration refits every model on its supporters, re-expands
/// (dropping models left with fewer than eight supporters) and tries to
/// delete models. An iteration is kept only if it does not raise the total
/// energy, so `history` is non-increasing. Stops on a relative decrease
/// below 1e-6 or after 20 iterations.
pub fn fit_from_models(
    initial: ModelSet,
    matches: &[FeatureMatch],
    graph: &NeighborGraph,
    params: &EnergyParams,
) -> Result<FitResult> {
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches { needed: 4, got: matches.len() });
    }
    if initial.is_empty() {
        return Err(Error::NoModelFound);
    }
    let mut state = State::new(initial, matches, graph, params);
    state.stabilize();
    state.prune();
    let mut energy = state.energy();
    let mut history = vec![energy.total];
    let mut outer = 0;

    while outer < MAX_OUTER_ITERATIONS && !state.models.is_empty() {
        outer += 1;
        let mut next = State {
            matches,
            graph,
            params,
            models: state.models.clone(),
            labels: state.labels.clone(),
            table: state.table.clone(),
        };
        next.refit();
        next.stabilize();
        next.prune();
        let e = next.energy();
        if e.total > energy.total || next.models.is_empty() {
            log::debug!("outer iteration {outer} rejected ({} > {})", e.total, energy.total);
            break;
        }
        let rel = if energy.total > 0.0 { (energy.total - e.total) / energy.total } else { 0.0 };
        state = next;
        energy = e;
        history.push(e.total);
        log::debug!("outer iteration {outer}: energy {} ({} models)", e.total, state.models.len());
        if rel < REL_ENERGY_TOLERANCE {
            break;
        }
    }

    if state.models.is_empty() {
        return Err(Error::NoModelFound);
    }
    debug_assert!(state.labels.iter().all(|&l| l == OUTLIER || l <= state.models.len()));
    Ok(FitResult {
        models: state.models,
        assignment: Assignment { labels: state.labels },
        energy,
        history,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Homography, Point2};
    use crate::multifit::build_neighborhood_delaunay_only;

    fn plane_matches(h: &Homography, n: usize) -> Vec<FeatureMatch> {
        (0..n)
            .map(|i| {
                let p = Point2::new((i * 37 % 300) as f64 + 0.5, (i * 61 % 200) as f64 + 0.25);
                FeatureMatch::new(p, h.map(p).unwrap())
            })
            .collect()
    }

    #[test]
    fn single_plane_single_model() {
        let h = Homography::from_rows([[1.0, 0.01, 20.0], [0.0, 1.0, -4.0], [1e-5, 0.0, 1.0]]).unwrap();
        let matches = plane_matches(&h, 80);
        let graph = build_neighborhood_delaunay_only(&matches).unwrap();
        let r = fit(&matches, &graph, &EnergyParams::default(), 3).unwrap();
        assert_eq!(r.models.len(), 1);
        assert!(r.assignment.labels.iter().all(|&l| l == 1));
        assert!(r.energy.data < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn duplicate_model_is_removed() {
        let h = Homography::translation(12.0, 3.0);
        let matches = plane_matches(&h, 60);
        let graph = build_neighborhood_delaunay_only(&matches).unwrap();
        let params = EnergyParams::default();
        let single = fit_from_models(ModelSet::new(vec![h]), &matches, &graph, &params).unwrap();
        let dup = fit_from_models(ModelSet::new(vec![h, h]), &matches, &graph, &params).unwrap();
        assert_eq!(dup.models.len(), 1);
        assert_eq!(dup.energy.total, single.energy.total);
        // a split between the copies would pay the label cost twice
        let mut split = vec![1; 60];
        split[30..].fill(2);
        let split_energy = super::super::energy(
            &ModelSet::new(vec![h, h]),
            &Assignment { labels: split },
            &graph,
            &matches,
            &params,
        );
        let excess = split_energy.total - split_energy.smooth - dup.energy.total;
        assert!((excess - params.beta).abs() < 1e-9, "excess {excess}");
    }

    #[test]
    fn needs_four_matches() {
        let m = plane_matches(&Homography::identity(), 3);
        assert!(fit(&m, &NeighborGraph::default(), &EnergyParams::default(), 0).is_err());
    }
}
