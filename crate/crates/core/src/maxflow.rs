//! s-t minimum cut on a graph with real capacities (Dinic's algorithm).

use std::collections::VecDeque;

// capacities at or below this are treated as saturated
const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
}

/// Graph with terminal edges folded into per-node source/sink capacities.
#[derive(Debug, Clone)]
pub struct CutGraph {
    n: usize,
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl CutGraph {
    /// Creates a graph with `n` inner nodes; the source and sink are added internally.
    pub fn new(n: usize) -> Self {
        Self { n, arcs: Vec::new(), adj: vec![Vec::new(); n + 2] }
    }

    fn source(&self) -> usize {
        self.n
    }

    fn sink(&self) -> usize {
        self.n + 1
    }

    fn push_arc(&mut self, from: usize, to: usize, cap: f64, rev_cap: f64) {
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: rev_cap });
    }

    /// Adds `source -> i` with `cap_source` and `i -> sink` with `cap_sink`.
    pub fn add_terminal(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        debug_assert!(cap_source >= 0.0 && cap_sink >= 0.0);
        if cap_source > 0.0 {
            self.push_arc(self.source(), i, cap_source, 0.0);
        }
        if cap_sink > 0.0 {
            self.push_arc(i, self.sink(), cap_sink, 0.0);
        }
    }

    /// Adds `i -> j` with `cap` and `j -> i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(cap >= 0.0 && rev_cap >= 0.0);
        if cap > 0.0 || rev_cap > 0.0 {
            self.push_arc(i, j, cap, rev_cap);
        }
    }

    fn bfs_levels(&self, level: &mut [i32]) -> bool {
        level.fill(-1);
        let mut queue = VecDeque::new();
        level[self.source()] = 0;
        queue.push_back(self.source());
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > EPS && level[arc.to] < 0 {
                    level[arc.to] = level[u] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        level[self.sink()] >= 0
    }

    fn augment(&mut self, u: usize, pushed: f64, level: &[i32], it: &mut [usize]) -> f64 {
        if u == self.sink() {
            return pushed;
        }
        while it[u] < self.adj[u].len() {
            let a = self.adj[u][it[u]];
            let (to, cap) = (self.arcs[a].to, self.arcs[a].cap);
            if cap > EPS && level[to] == level[u] + 1 {
                let d = self.augment(to, pushed.min(cap), level, it);
                if d > 0.0 {
                    self.arcs[a].cap -= d;
                    self.arcs[a ^ 1].cap += d;
                    return d;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    /// Runs max-flow and returns `(flow, in_sink_set)` for the inner nodes.
    pub fn min_cut(mut self) -> (f64, Vec<bool>) {
        let total = self.n + 2;
        let mut level = vec![-1; total];
        let mut flow = 0.0;
        while self.bfs_levels(&mut level) {
            let mut it = vec![0; total];
            loop {
                let d = self.augment(self.source(), f64::INFINITY, &level, &mut it);
                if d <= 0.0 {
                    break;
                }
                flow += d;
            }
        }
        self.bfs_levels(&mut level);
        let sink_side = (0..self.n).map(|i| level[i] < 0).collect();
        (flow, sink_side)
    }
}
