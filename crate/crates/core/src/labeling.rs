//! Per-content homography labeling in the overlap and the extrapolated
//! warp of the non-overlap region.
//!
//! Overlap contents take the model with the lowest photometric error. The
//! non-overlap region is covered by a grid mesh whose vertices are moved by a
//! Student's-t weighted blend of linearized content homographies (anchored on
//! the overlap seam) and a global similarity (anchored on the outer border).

use std::collections::{BTreeMap, VecDeque};

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    apply_linear, estimate_similarity, fit_homography, homography_point_jacobian, FeatureMatch, Homography,
    Point2, Similarity,
};
use crate::image::Image;
use crate::multifit::{Assignment, ModelSet};
use crate::segmentation::OverlapMask;

pub const DEFAULT_NU: f64 = 5.0;
pub const DEFAULT_ANCHORS: usize = 50;
pub const DEFAULT_CELL_SIZE: u32 = 20;

/// Global homography `H_g` fitted to every match.
pub fn global_homography(matches: &[FeatureMatch]) -> Result<Homography> {
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches { needed: 4, got: matches.len() });
    }
    fit_homography(matches)
}

/// Mean RGB L2 distance between `I_t(p)` and bilinearly sampled `I_r(H p)`
/// over `pixels` (linear indices into the target). Pixels that land outside
/// the reference are skipped; `+inf` if none is left.
pub fn photometric_error(pixels: &[u32], h: &Homography, target: &Image, reference: &Image) -> f64 {
    let w = target.width() as usize;
    let (mut sum, mut n) = (0.0, 0usize);
    for &p in pixels {
        let (x, y) = ((p as usize % w) as u32, (p as usize / w) as u32);
        let Ok(q) = h.map(Point2::new(x as f64, y as f64)) else { continue };
        let Some(r) = reference.sample_bilinear(q) else { continue };
        let t = target.get(x, y);
        let d2: f64 = (0..3).map(|k| (r[k] - t[k] as f64).powi(2)).sum();
        sum += d2.sqrt();
        n += 1;
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Homography label of every overlap content.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapLabeling {
    pub global_h: Homography,
    pub models: ModelSet,
    /// Content id to model label (`>= 1`, never the outlier label).
    pub content_label: BTreeMap<u32, usize>,
    /// Mean photometric error of each content under its label; `inf` for inherited labels.
    pub content_error: BTreeMap<u32, f64>,
    /// Contents with no valid sample under any model, labeled by inheritance.
    pub inherited: Vec<u32>,
    /// Label of the nearest overlap pixel (4-connected BFS) for every target pixel.
    #[serde(skip)]
    pub nearest_label: Vec<usize>,
    #[serde(skip)]
    pub width: u32,
}

impl OverlapLabeling {
    pub fn homography(&self, content: u32) -> Option<&Homography> {
        self.content_label.get(&content).and_then(|&l| self.models.model(l))
    }

    pub fn label_at(&self, x: u32, y: u32) -> usize {
        self.nearest_label[y as usize * self.width as usize + x as usize]
    }
}

fn centroid(pixels: &[u32], width: u32) -> Point2 {
    let w = width as usize;
    let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &p| {
        (sx + (p as usize % w) as f64, sy + (p as usize / w) as f64)
    });
    Point2::new(sx / pixels.len() as f64, sy / pixels.len() as f64)
}

/// Photometric argmin over `models` for each overlap content (ties to the
/// lower label). Contents that sample nothing inherit the label of the
/// labeled content with the nearest centroid, or the model closest to `H_g`.
pub fn label_overlap_contents(
    overlap: &OverlapMask,
    models: &ModelSet,
    target: &Image,
    reference: &Image,
) -> Result<OverlapLabeling> {
    if models.is_empty() {
        return Err(Error::NoModelFound);
    }
    let eval = |pixels: &[u32]| -> Vec<f64> {
        models.models.iter().map(|h| photometric_error(pixels, h, target, reference)).collect()
    };
    #[cfg(feature = "parallel")]
    let errors: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        overlap.overlap_contents.par_iter().map(|c| eval(&c.pixels)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let errors: Vec<Vec<f64>> = overlap.overlap_contents.iter().map(|c| eval(&c.pixels)).collect();

    let mut content_label = BTreeMap::new();
    let mut content_error = BTreeMap::new();
    let mut inherited = Vec::new();
    let mut labeled_centroids = Vec::new();
    for (c, errs) in overlap.overlap_contents.iter().zip(&errors) {
        let mut best = (f64::INFINITY, 0usize);
        for (k, &e) in errs.iter().enumerate() {
            if e < best.0 {
                best = (e, k + 1);
            }
        }
        if best.1 == 0 {
            inherited.push(c.id);
        } else {
            content_label.insert(c.id, best.1);
            content_error.insert(c.id, best.0);
            labeled_centroids.push((c.id, centroid(&c.pixels, overlap.width)));
        }
    }
    let closest_to_global = (1..=models.len())
        .min_by(|&a, &b| {
            let da = models.model(a).unwrap().frobenius_distance(&overlap.h_g);
            let db = models.model(b).unwrap().frobenius_distance(&overlap.h_g);
            da.total_cmp(&db)
        })
        .unwrap_or(1);
    for &id in &inherited {
        let c = overlap.overlap_contents.iter().find(|c| c.id == id).expect("inherited id is an overlap content");
        let at = centroid(&c.pixels, overlap.width);
        let mut best = (f64::INFINITY, None);
        for &(other, p) in &labeled_centroids {
            let d = at.distance(p);
            if d < best.0 {
                best = (d, Some(other));
            }
        }
        let label = best.1.map_or(closest_to_global, |o| content_label[&o]);
        log::debug!("content {id} has no valid samples, inherits label {label}");
        content_label.insert(id, label);
        content_error.insert(id, f64::INFINITY);
    }

    let nearest_label = nearest_label_field(overlap, &content_label);
    Ok(OverlapLabeling {
        global_h: overlap.h_g,
        models: models.clone(),
        content_label,
        content_error,
        inherited,
        nearest_label,
        width: overlap.width,
    })
}

fn nearest_label_field(overlap: &OverlapMask, content_label: &BTreeMap<u32, usize>) -> Vec<usize> {
    let (w, h) = (overlap.width as usize, overlap.height as usize);
    let mut field = vec![0usize; w * h];
    let mut queue = VecDeque::new();
    let mut seeds: Vec<(u32, usize)> = Vec::new();
    for c in &overlap.overlap_contents {
        let l = content_label[&c.id];
        seeds.extend(c.pixels.iter().map(|&p| (p, l)));
    }
    seeds.sort_unstable();
    for (p, l) in seeds {
        field[p as usize] = l;
        queue.push_back(p as usize);
    }
    while let Some(j) = queue.pop_front() {
        let (x, y) = (j % w, j / w);
        let l = field[j];
        let mut visit = |k: usize| {
            if field[k] == 0 {
                field[k] = l;
                queue.push_back(k);
            }
        };
        if x > 0 {
            visit(j - 1);
        }
        if x + 1 < w {
            visit(j + 1);
        }
        if y > 0 {
            visit(j - w);
        }
        if y + 1 < h {
            visit(j + w);
        }
    }
    field
}

/// Similarity with the smallest absolute rotation among the per-model
/// least-squares fits to each model's supporters (ties to the lower label).
pub fn select_similarity(models: &ModelSet, assign: &Assignment, matches: &[FeatureMatch]) -> Result<Similarity> {
    let mut best: Option<Similarity> = None;
    for label in 1..=models.len() {
        let subset: Vec<FeatureMatch> = assign.supporters(label).iter().map(|&i| matches[i]).collect();
        if subset.len() < 2 {
            continue;
        }
        let Ok(s) = estimate_similarity(&subset) else { continue };
        if best.is_none_or(|b| s.angle.abs() < b.angle.abs()) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::DegenerateConfiguration("no model has two supporting matches".into()))
}

/// Seam anchor `a_i` with its content homography linearized at `a_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapAnchor {
    pub point: Point2,
    pub label: usize,
    pub image: Point2,
    pub jacobian: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub overlap_anchors: Vec<OverlapAnchor>,
    pub outer_anchors: Vec<Point2>,
    pub similarity: Similarity,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnchorConfig {
    pub r1: usize,
    pub r2: usize,
    pub nu: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self { r1: DEFAULT_ANCHORS, r2: DEFAULT_ANCHORS, nu: DEFAULT_NU }
    }
}

type Segment = (Point2, Point2);

fn clip_half_plane(poly: &[Point2], f: impl Fn(Point2) -> f64) -> Vec<Point2> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Overlap region as a convex polygon: the target rectangle of pixel
/// centers clipped by the preimage of the reference rectangle under `H_g`.
pub fn overlap_polygon(overlap: &OverlapMask) -> Vec<Point2> {
    let (w, h) = ((overlap.width - 1) as f64, (overlap.height - 1) as f64);
    let (wr, hr) = (overlap.ref_dims.0 as f64, overlap.ref_dims.1 as f64);
    let m = overlap.h_g.matrix();
    // orient the half-planes so the perspective denominator is positive on the overlap
    let seed = overlap.mask.iter().position(|v| *v).unwrap_or(0);
    let ow = overlap.width as usize;
    let sign = overlap.h_g.w_at(Point2::new((seed % ow) as f64, (seed / ow) as f64)).signum();
    let row = |r: usize, p: Point2| sign * (m[(r, 0)] * p.x + m[(r, 1)] * p.y + m[(r, 2)]);
    let mut poly = vec![Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)];
    poly = clip_half_plane(&poly, |p| row(2, p));
    poly = clip_half_plane(&poly, |p| row(0, p));
    poly = clip_half_plane(&poly, |p| wr * row(2, p) - row(0, p));
    poly = clip_half_plane(&poly, |p| row(1, p));
    poly = clip_half_plane(&poly, |p| hr * row(2, p) - row(1, p));
    poly
}

const ON_BORDER: f64 = 1e-7;

/// Which rectangle side (0 top, 1 right, 2 bottom, 3 left) a segment lies on.
fn border_side(s: &Segment, w: f64, h: f64) -> Option<usize> {
    let on = |p: Point2, side: usize| match side {
        0 => p.y.abs() < ON_BORDER,
        1 => (p.x - w).abs() < ON_BORDER,
        2 => (p.y - h).abs() < ON_BORDER,
        _ => p.x.abs() < ON_BORDER,
    };
    (0..4).find(|&side| on(s.0, side) && on(s.1, side))
}

/// Arc-length position on the clockwise perimeter starting at the origin.
fn perimeter_position(p: Point2, side: usize, w: f64, h: f64) -> f64 {
    match side {
        0 => p.x,
        1 => w + p.y,
        2 => w + h + (w - p.x),
        _ => 2.0 * w + h + (h - p.y),
    }
}

fn perimeter_point(s: f64, w: f64, h: f64) -> Point2 {
    if s <= w {
        Point2::new(s, 0.0)
    } else if s <= w + h {
        Point2::new(w, s - w)
    } else if s <= 2.0 * w + h {
        Point2::new(w - (s - w - h), h)
    } else {
        Point2::new(0.0, h - (s - 2.0 * w - h))
    }
}

/// Seam edges of the overlap polygon and the parts of the image border
/// outside it.
pub fn boundary_segments(overlap: &OverlapMask) -> (Vec<Segment>, Vec<Segment>) {
    let (w, h) = ((overlap.width - 1) as f64, (overlap.height - 1) as f64);
    let poly = overlap_polygon(overlap);
    let mut seam = Vec::new();
    let mut covered = Vec::new();
    for i in 0..poly.len() {
        let s = (poly[i], poly[(i + 1) % poly.len()]);
        if s.0.distance(s.1) < 1e-12 {
            continue;
        }
        match border_side(&s, w, h) {
            Some(side) => {
                let (a, b) = (perimeter_position(s.0, side, w, h), perimeter_position(s.1, side, w, h));
                covered.push((a.min(b), a.max(b)));
            }
            None => seam.push(s),
        }
    }
    covered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = 2.0 * (w + h);
    let mut outer = Vec::new();
    let mut cursor = 0.0;
    let mut push = |from: f64, to: f64| {
        // split at corners so every piece is straight
        let corners = [w, w + h, 2.0 * w + h];
        let mut cuts = vec![from];
        cuts.extend(corners.iter().copied().filter(|&c| c > from && c < to));
        cuts.push(to);
        for pair in cuts.windows(2) {
            if pair[1] - pair[0] > 1e-9 {
                outer.push((perimeter_point(pair[0], w, h), perimeter_point(pair[1], w, h)));
            }
        }
    };
    for (a, b) in covered {
        if a > cursor {
            push(cursor, a);
        }
        cursor = cursor.max(b);
    }
    if cursor < total {
        push(cursor, total);
    }
    (seam, outer)
}

/// `r` points at arc lengths `(k + 1/2) L / r` along the concatenated segments.
pub fn sample_along(segments: &[Segment], r: usize) -> Vec<Point2> {
    let lengths: Vec<f64> = segments.iter().map(|s| s.0.distance(s.1)).collect();
    let total: f64 = lengths.iter().sum();
    if r == 0 || total <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(r);
    let (mut seg, mut start) = (0usize, 0.0);
    for k in 0..r {
        let s = (k as f64 + 0.5) * total / r as f64;
        while seg + 1 < segments.len() && s > start + lengths[seg] {
            start += lengths[seg];
            seg += 1;
        }
        let t = ((s - start) / lengths[seg]).clamp(0.0, 1.0);
        let (a, b) = segments[seg];
        out.push(a + (b - a) * t);
    }
    out
}

fn nearest_pixel(p: Point2, w: u32, h: u32) -> (u32, u32) {
    (p.x.round().clamp(0.0, (w - 1) as f64) as u32, p.y.round().clamp(0.0, (h - 1) as f64) as u32)
}

/// Anchors on the overlap seam (carrying the homography of the nearest
/// labeled content) and on the outer non-overlap border.
pub fn sample_anchors(
    overlap: &OverlapMask,
    labeling: &OverlapLabeling,
    similarity: Similarity,
    config: &AnchorConfig,
) -> Result<AnchorSet> {
    if config.r1 == 0 || config.r2 == 0 {
        return Err(Error::InvalidConfig("anchor counts must be positive".into()));
    }
    if overlap.non_overlap_pixel_count() == 0 {
        return Err(Error::EmptyRegion("non-overlap region is empty".into()));
    }
    let (seam, outer) = boundary_segments(overlap);
    let seam_pts = sample_along(&seam, config.r1);
    let outer_anchors = sample_along(&outer, config.r2);
    if seam_pts.is_empty() || outer_anchors.is_empty() {
        return Err(Error::EmptyRegion("overlap seam or outer border has zero length".into()));
    }
    let overlap_anchors = seam_pts
        .into_iter()
        .map(|a| {
            let (x, y) = nearest_pixel(a, overlap.width, overlap.height);
            let label = labeling.label_at(x, y);
            let h = labeling.models.model(label).expect("labels refer to real models");
            Ok(OverlapAnchor { point: a, label, image: h.map(a)?, jacobian: homography_point_jacobian(h, a)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorSet { overlap_anchors, outer_anchors, similarity, nu: config.nu })
}

/// Normalized Student's-t weights of every anchor at `v`, seam anchors first.
pub fn anchor_weights(v: Point2, anchors: &AnchorSet) -> Vec<f64> {
    let nu = anchors.nu;
    let log_w = |a: Point2| {
        let d2 = (v.x - a.x).powi(2) + (v.y - a.y).powi(2);
        -(nu + 1.0) / 2.0 * (d2 / nu).ln_1p()
    };
    let logs: Vec<f64> = anchors
        .overlap_anchors
        .iter()
        .map(|a| log_w(a.point))
        .chain(anchors.outer_anchors.iter().map(|&b| log_w(b)))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / sum).collect()
}

/// Blended first-order expansion of the anchor maps at `v`.
pub fn extrapolate_point(v: Point2, anchors: &AnchorSet) -> Point2 {
    let weights = anchor_weights(v, anchors);
    let r1 = anchors.overlap_anchors.len();
    let mut out = Point2::default();
    for (a, &wt) in anchors.overlap_anchors.iter().zip(&weights) {
        out = out + (a.image + apply_linear(&a.jacobian, v - a.point)) * wt;
    }
    // an affine map equals its own expansion, so the outer terms collapse to S(v)
    let outer: f64 = weights[r1..].iter().sum();
    out + anchors.similarity.map(v) * outer
}

/// Grid mesh over the non-overlap region with per-vertex warped positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NonOverlapMesh {
    pub cell_size: u32,
    pub origin: (i64, i64),
    pub cols: usize,
    pub rows: usize,
    /// Source positions, `(rows + 1) x (cols + 1)` row-major.
    pub vertices: Vec<Point2>,
    pub warped: Vec<Point2>,
    /// Vertices that fall on overlap pixels and follow their content homography exactly.
    pub exact: Vec<bool>,
    /// Cells `(col, row)` containing at least one non-overlap pixel.
    pub cells: Vec<(usize, usize)>,
}

/// Source and warped corners of one mesh triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub src: [Point2; 3],
    pub dst: [Point2; 3],
}

impl Triangle {
    /// Barycentric coordinates of `p` with respect to `tri`; `None` if degenerate.
    pub fn barycentric(tri: &[Point2; 3], p: Point2) -> Option<[f64; 3]> {
        let (a, b, c) = (tri[0], tri[1], tri[2]);
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if det.abs() < 1e-12 {
            return None;
        }
        let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
        let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        Some([1.0 - l1 - l2, l1, l2])
    }

    fn combine(pts: &[Point2; 3], l: [f64; 3]) -> Point2 {
        pts[0] * l[0] + pts[1] * l[1] + pts[2] * l[2]
    }

    /// Affine map source -> warped.
    pub fn forward(&self, p: Point2) -> Option<Point2> {
        Self::barycentric(&self.src, p).map(|l| Self::combine(&self.dst, l))
    }

    /// Affine map warped -> source.
    pub fn backward(&self, q: Point2) -> Option<Point2> {
        Self::barycentric(&self.dst, q).map(|l| Self::combine(&self.src, l))
    }
}

impl NonOverlapMesh {
    fn vertex_index(&self, col: usize, row: usize) -> usize {
        row * (self.cols + 1) + col
    }

    /// The two triangles of cell `(col, row)`, split along the main diagonal.
    pub fn cell_triangles(&self, col: usize, row: usize) -> [Triangle; 2] {
        let v00 = self.vertex_index(col, row);
        let v10 = self.vertex_index(col + 1, row);
        let v01 = self.vertex_index(col, row + 1);
        let v11 = self.vertex_index(col + 1, row + 1);
        let tri = |i: [usize; 3]| Triangle {
            src: i.map(|k| self.vertices[k]),
            dst: i.map(|k| self.warped[k]),
        };
        [tri([v00, v10, v11]), tri([v00, v11, v01])]
    }

    pub fn triangles(&self) -> impl Iterator<Item = Triangle> + '_ {
        self.cells.iter().flat_map(|&(c, r)| self.cell_triangles(c, r))
    }

    /// Piecewise-affine warp of `p`, or `None` outside the grid.
    pub fn map_point(&self, p: Point2) -> Option<Point2> {
        let cs = self.cell_size as f64;
        let fx = (p.x - self.origin.0 as f64) / cs;
        let fy = (p.y - self.origin.1 as f64) / cs;
        if fx < 0.0 || fy < 0.0 || fx > self.cols as f64 || fy > self.rows as f64 {
            return None;
        }
        let (col, row) = ((fx.floor() as usize).min(self.cols - 1), (fy.floor() as usize).min(self.rows - 1));
        let [upper, lower] = self.cell_triangles(col, row);
        let (lx, ly) = (fx - col as f64, fy - row as f64);
        if lx >= ly { upper.forward(p) } else { lower.forward(p) }
    }
}

/// Builds the non-overlap mesh. Vertices on overlap pixels follow the label
/// of that pixel exactly; all others are extrapolated from the anchors.
pub fn build_nonoverlap_mesh(
    overlap: &OverlapMask,
    labeling: &OverlapLabeling,
    anchors: &AnchorSet,
    cell_size: u32,
) -> Result<NonOverlapMesh> {
    if cell_size == 0 {
        return Err(Error::InvalidConfig("cell size must be positive".into()));
    }
    let (w, h) = (overlap.width as usize, overlap.height as usize);
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (i, _) in overlap.mask.iter().enumerate().filter(|(_, m)| !**m) {
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyRegion("non-overlap region is empty".into()));
    }
    let cs = cell_size as usize;
    let cols = (x1 - x0).div_ceil(cs).max(1);
    let rows = (y1 - y0).div_ceil(cs).max(1);

    let mut vertices = Vec::with_capacity((cols + 1) * (rows + 1));
    for r in 0..=rows {
        for c in 0..=cols {
            vertices.push(Point2::new((x0 + c * cs) as f64, (y0 + r * cs) as f64));
        }
    }
    let place = |v: Point2| -> (Point2, bool) {
        let (vx, vy) = (v.x as usize, v.y as usize);
        if vx < w && vy < h && overlap.mask[vy * w + vx] {
            let label = labeling.label_at(vx as u32, vy as u32);
            if let Some(p) = labeling.models.model(label).and_then(|hm| hm.map(v).ok()) {
                return (p, true);
            }
        }
        (extrapolate_point(v, anchors), false)
    };
    #[cfg(feature = "parallel")]
    let placed: Vec<(Point2, bool)> = {
        use rayon::prelude::*;
        vertices.par_iter().map(|&v| place(v)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let placed: Vec<(Point2, bool)> = vertices.iter().map(|&v| place(v)).collect();
    let (warped, exact) = placed.into_iter().unzip();

    let mut active = vec![false; cols * rows];
    for (i, _) in overlap.mask.iter().enumerate().filter(|(_, m)| !**m) {
        let (x, y) = (i % w, i / w);
        let c = ((x - x0) / cs).min(cols - 1);
        let r = ((y - y0) / cs).min(rows - 1);
        active[r * cols + c] = true;
    }
    let cells = (0..rows * cols).filter(|&k| active[k]).map(|k| (k % cols, k / cols)).collect();
    Ok(NonOverlapMesh {
        cell_size,
        origin: (x0 as i64, y0 as i64),
        cols,
        rows,
        vertices,
        warped,
        exact,
        cells,
    })
}
