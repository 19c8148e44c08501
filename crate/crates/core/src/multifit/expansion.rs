use super::{Assignment, CostTable, EnergyParams, ModelSet, NeighborGraph, OUTLIER};
use crate::geometry::FeatureMatch;
use crate::maxflow::CutGraph;

/// Optimal binary expansion move towards `alpha` for the full energy.
///
/// Node `i` keeps `labels[i]` when on the source side and switches to
/// `alpha` on the sink side. Label costs enter through one auxiliary node
/// per affected label: a node `y_l` for each model label `l` in use, which
/// pays `beta` unless every point of `l` switches, and a node `z` that pays
/// `beta` if an unused model label `alpha` gains any point.
pub(crate) fn expansion_move(
    table: &CostTable,
    labels: &[usize],
    graph: &NeighborGraph,
    params: &EnergyParams,
    alpha: usize,
) -> Vec<usize> {
    let n = labels.len();
    let (lambda, beta) = (params.lambda, params.beta);
    let keep_cost: Vec<f64> = (0..n).map(|i| table.get(i, labels[i])).collect();
    let mut switch_cost: Vec<f64> = (0..n).map(|i| table.get(i, alpha)).collect();

    let mut used = vec![false; table.labels];
    labels.iter().for_each(|&l| used[l] = true);
    let costly: Vec<usize> = if beta > 0.0 {
        (1..table.labels).filter(|&l| used[l] && l != alpha).collect()
    } else {
        Vec::new()
    };
    let opens_alpha = beta > 0.0 && alpha != OUTLIER && !used[alpha];
    let aux = costly.len() + opens_alpha as usize;
    let mut g = CutGraph::new(n + aux);

    let potts = |a: usize, b: usize| if a != b { lambda } else { 0.0 };
    for &(i, j) in &graph.edges {
        let (fi, fj) = (labels[i], labels[j]);
        let e00 = potts(fi, fj);
        let e01 = potts(fi, alpha);
        let e10 = potts(alpha, fj);
        let e11 = 0.0;
        let pair = e01 + e10 - e00 - e11;
        assert!(pair >= -1e-9, "non-submodular pairwise term {pair}");
        // E = e00 + (e10 - e00) x_i + (e11 - e10) x_j + pair (1 - x_i) x_j
        switch_cost[i] += e10 - e00;
        switch_cost[j] += e11 - e10;
        g.add_edge(i, j, pair.max(0.0), 0.0);
    }
    for i in 0..n {
        let base = keep_cost[i].min(switch_cost[i]);
        // source edge is cut when i switches, sink edge when it keeps
        g.add_terminal(i, switch_cost[i] - base, keep_cost[i] - base);
    }
    // beta (1 - prod x_i) = min_y beta (1 - y) + sum beta y (1 - x_i)
    for (k, &l) in costly.iter().enumerate() {
        let y = n + k;
        g.add_terminal(y, 0.0, beta);
        for i in (0..n).filter(|&i| labels[i] == l) {
            g.add_edge(i, y, beta, 0.0);
        }
    }
    // beta (1 - prod (1 - x_i)) = min_z beta z + sum beta (1 - z) x_i
    if opens_alpha {
        let z = n + costly.len();
        g.add_terminal(z, beta, 0.0);
        for i in 0..n {
            g.add_edge(z, i, beta, 0.0);
        }
    }
    let (_, switched) = g.min_cut();
    labels
        .iter()
        .zip(switched)
        .map(|(&l, s)| if s { alpha } else { l })
        .collect()
}

/// Runs expansion sweeps over every label (outlier first) until a full sweep
/// changes nothing. A move is taken only if it strictly lowers the total energy.
pub(crate) fn expand_with_table(
    table: &CostTable,
    labels: &mut Vec<usize>,
    graph: &NeighborGraph,
    params: &EnergyParams,
) -> bool {
    let mut current = table.energy(labels, graph, params).total;
    let mut changed_any = false;
    loop {
        let mut changed = false;
        for alpha in 0..table.labels {
            let proposal = expansion_move(table, labels, graph, params, alpha);
            if proposal == *labels {
                continue;
            }
            let e = table.energy(&proposal, graph, params).total;
            if e < current {
                *labels = proposal;
                current = e;
                changed = true;
                changed_any = true;
            }
        }
        if !changed {
            return changed_any;
        }
    }
}

/// Alpha-expansion over all labels of `models` starting from `assign`.
pub fn expand_labels(
    models: &ModelSet,
    assign: &Assignment,
    graph: &NeighborGraph,
    matches: &[FeatureMatch],
    params: &EnergyParams,
) -> Assignment {
    let table = CostTable::new(models, matches, params.gamma);
    let mut labels = assign.labels.clone();
    expand_with_table(&table, &mut labels, graph, params);
    Assignment { labels }
}
