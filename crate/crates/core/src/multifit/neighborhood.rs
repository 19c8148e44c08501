use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2 as SpadePoint, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::FeatureMatch;
use crate::segmentation::OverlapMask;

/// Undirected neighbor pairs `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborGraph {
    pub edges: Vec<(usize, usize)>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Adjacency lists for `n` nodes.
    pub fn adjacency(&self, n: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }
}

/// Delaunay edges over the match target points, as index pairs.
fn delaunay_edges(matches: &[FeatureMatch]) -> Result<BTreeSet<(usize, usize)>> {
    let pts: Vec<_> = matches.iter().map(|m| m.target_pt).collect();
    let all_collinear = match pts.first() {
        None => true,
        Some(&a) => {
            let far = pts.iter().copied().max_by(|p, q| a.distance(*p).total_cmp(&a.distance(*q)));
            let b = far.unwrap_or(a);
            let scale = a.distance(b);
            scale == 0.0
                || pts.iter().all(|c| {
                    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                    cross.abs() <= 1e-9 * scale * scale
                })
        }
    };
    if all_collinear {
        return Err(Error::DegenerateConfiguration("all target points are collinear".into()));
    }

    let mut tri: DelaunayTriangulation<SpadePoint<f64>> = DelaunayTriangulation::new();
    // coincident target points share a vertex
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let h = tri
            .insert(SpadePoint::new(p.x, p.y))
            .map_err(|e| Error::DegenerateConfiguration(format!("triangulation failed: {e:?}")))?;
        let v = h.index();
        if v >= members.len() {
            members.resize(v + 1, Vec::new());
        }
        members[v].push(i);
    }
    let mut edges = BTreeSet::new();
    let mut link = |a: usize, b: usize| {
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    };
    for group in &members {
        for (k, &a) in group.iter().enumerate() {
            for &b in &group[k + 1..] {
                link(a, b);
            }
        }
    }
    for e in tri.undirected_edges() {
        let [u, v] = e.vertices();
        for &a in &members[u.fix().index()] {
            for &b in &members[v.fix().index()] {
                link(a, b);
            }
        }
    }
    Ok(edges)
}

/// Delaunay edges kept only between matches inside the overlap that share a content.
///
/// `content_ids[i]` is the content of match `i`'s target point (`None` if it was
/// dropped as out of bounds).
pub fn build_neighborhood(
    matches: &[FeatureMatch],
    content_ids: &[Option<u32>],
    overlap: &OverlapMask,
) -> Result<NeighborGraph> {
    let in_overlap = |i: usize| {
        let p = matches[i].target_pt;
        let (x, y) = (p.x.floor(), p.y.floor());
        x >= 0.0
            && y >= 0.0
            && (x as u32) < overlap.width
            && (y as u32) < overlap.height
            && overlap.in_overlap(x as u32, y as u32)
    };
    let edges = delaunay_edges(matches)?
        .into_iter()
        .filter(|&(i, j)| {
            content_ids[i].is_some() && content_ids[i] == content_ids[j] && in_overlap(i) && in_overlap(j)
        })
        .collect();
    Ok(NeighborGraph { edges })
}

/// Plain Delaunay neighborhood, without the content constraint.
pub fn build_neighborhood_delaunay_only(matches: &[FeatureMatch]) -> Result<NeighborGraph> {
    Ok(NeighborGraph { edges: delaunay_edges(matches)?.into_iter().collect() })
}
