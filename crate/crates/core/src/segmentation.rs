//! Target-image contents: label-map ingestion, normalization into a disjoint
//! cover, and classification against the overlap region.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FeatureMatch, Homography, Point2};
use crate::image::{load_gray16, save_gray16};

/// Contents smaller than this many pixels are merged into a neighbor.
pub const DEFAULT_MIN_CONTENT_AREA: usize = 64;

/// Raw per-pixel segment ids as produced by the segmentation adapter; 0 = unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Decode("empty label map".into()));
        }
        if labels.len() != width as usize * height as usize {
            return Err(Error::Decode("label buffer size does not match dimensions".into()));
        }
        Ok(Self { width, height, labels })
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Distinct raw ids in first-appearance order.
    pub fn raw_ids(&self) -> Vec<u16> {
        let mut seen = std::collections::HashSet::new();
        self.labels.iter().copied().filter(|v| seen.insert(*v)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_gray16(path, self.width, self.height, &self.labels)
    }
}

/// Reads a 16-bit grayscale label-map PNG and checks it against the target dimensions.
pub fn load_label_map(path: &Path, expected_dims: (u32, u32)) -> Result<LabelMap> {
    let (w, h, labels) = load_gray16(path)?;
    if (w, h) != expected_dims {
        return Err(Error::DimensionMismatch { expected: expected_dims, got: (w, h) });
    }
    LabelMap::new(w, h, labels)
}

/// Inclusive integer rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    fn point(x: u32, y: u32) -> Self {
        Self { x0: x, y0: y, x1: x, y1: y }
    }

    fn extend(&mut self, x: u32, y: u32) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x);
        self.y1 = self.y1.max(y);
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (x0, y0, x1, y1) = (self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64);
        [Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)]
    }
}

/// One segment `C_k` of the target image.
#[derive(Debug, Clone, PartialEq)]
pub struct Content {
    pub id: u32,
    /// Linear pixel indices `y * width + x`, ascending.
    pub pixels: Vec<u32>,
    pub area: usize,
    pub bbox: BBox,
}

/// Disjoint cover of the target image by contents with ids `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentPartition {
    pub width: u32,
    pub height: u32,
    pub contents: Vec<Content>,
    pub pixel_to_content: Vec<u32>,
}

impl ContentPartition {
    pub fn count(&self) -> usize {
        self.contents.len()
    }

    pub fn content(&self, id: u32) -> &Content {
        &self.contents[id as usize - 1]
    }

    pub fn content_at(&self, x: u32, y: u32) -> u32 {
        self.pixel_to_content[y as usize * self.width as usize + x as usize]
    }

    /// Rebuilds a dense id map from the content pixel lists.
    pub fn to_label_map(&self) -> Vec<u32> {
        let mut out = vec![0; self.pixel_to_content.len()];
        for c in &self.contents {
            for &p in &c.pixels {
                out[p as usize] = c.id;
            }
        }
        out
    }

    /// Builds a partition from a dense id map whose values are already `1..=M`.
    fn from_dense(width: u32, height: u32, ids: Vec<u32>) -> Self {
        let m = ids.iter().copied().max().unwrap_or(0) as usize;
        let mut contents: Vec<Option<Content>> = vec![None; m];
        for (i, &id) in ids.iter().enumerate() {
            let (x, y) = ((i % width as usize) as u32, (i / width as usize) as u32);
            let slot = &mut contents[id as usize - 1];
            match slot {
                Some(c) => {
                    c.pixels.push(i as u32);
                    c.area += 1;
                    c.bbox.extend(x, y);
                }
                None => {
                    *slot = Some(Content { id, pixels: vec![i as u32], area: 1, bbox: BBox::point(x, y) })
                }
            }
        }
        Self {
            width,
            height,
            contents: contents.into_iter().map(|c| c.expect("ids are contiguous")).collect(),
            pixel_to_content: ids,
        }
    }
}

/// [`normalize_partition_with`] using [`DEFAULT_MIN_CONTENT_AREA`].
pub fn normalize_partition(raw: &LabelMap) -> ContentPartition {
    normalize_partition_with(raw, DEFAULT_MIN_CONTENT_AREA)
}

/// Turns a raw label map into a complete disjoint partition.
///
/// Unassigned pixels are split into 4-connected components, each its own
/// content. Contents below `min_area` pixels are absorbed, smallest first,
/// into the neighbor sharing the longest boundary. Final ids follow raster
/// first-appearance order.
pub fn normalize_partition_with(raw: &LabelMap, min_area: usize) -> ContentPartition {
    let (w, h) = (raw.width as usize, raw.height as usize);
    let n = w * h;
    let mut ids = vec![0u32; n];
    let mut raw_to_id: HashMap<u16, u32> = HashMap::new();
    let mut next = 1u32;
    let mut queue = VecDeque::new();
    for i in 0..n {
        if ids[i] != 0 {
            continue;
        }
        let r = raw.labels[i];
        if r != 0 {
            ids[i] = *raw_to_id.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            });
            continue;
        }
        let id = next;
        next += 1;
        ids[i] = id;
        queue.push_back(i);
        while let Some(j) = queue.pop_front() {
            let (x, y) = (j % w, j / w);
            let mut visit = |k: usize| {
                if raw.labels[k] == 0 && ids[k] == 0 {
                    ids[k] = id;
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
    }

    let count = (next - 1) as usize;
    if min_area > 1 && count > 1 {
        merge_small(&mut ids, w, h, count, min_area);
    }

    // renumber by first appearance
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut next = 1u32;
    for v in ids.iter_mut() {
        *v = *remap.entry(*v).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    ContentPartition::from_dense(raw.width, raw.height, ids)
}

fn merge_small(ids: &mut [u32], w: usize, h: usize, count: usize, min_area: usize) {
    // index 0 unused so provisional ids index directly
    let mut area = vec![0usize; count + 1];
    let mut adj: Vec<HashMap<u32, usize>> = vec![HashMap::new(); count + 1];
    for y in 0..h {
        for x in 0..w {
            let a = ids[y * w + x];
            area[a as usize] += 1;
            let mut link = |b: u32| {
                if a != b {
                    *adj[a as usize].entry(b).or_default() += 1;
                    *adj[b as usize].entry(a).or_default() += 1;
                }
            };
            if x + 1 < w {
                link(ids[y * w + x + 1]);
            }
            if y + 1 < h {
                link(ids[(y + 1) * w + x]);
            }
        }
    }
    let mut parent: Vec<u32> = (0..=count as u32).collect();
    let mut alive = vec![true; count + 1];
    alive[0] = false;
    loop {
        let small = (1..=count)
            .filter(|&c| alive[c] && area[c] < min_area && !adj[c].is_empty())
            .min_by_key(|&c| (area[c], c));
        let Some(s) = small else { break };
        let (&t, _) = adj[s]
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .expect("non-empty adjacency");
        let s_adj = std::mem::take(&mut adj[s]);
        for (nb, len) in s_adj {
            adj[nb as usize].remove(&(s as u32));
            if nb != t {
                *adj[t as usize].entry(nb).or_default() += len;
                *adj[nb as usize].entry(t).or_default() += len;
            }
        }
        area[t as usize] += area[s];
        area[s] = 0;
        alive[s] = false;
        parent[s] = t;
    }
    let find = |mut c: u32| {
        while parent[c as usize] != c {
            c = parent[c as usize];
        }
        c
    };
    for v in ids.iter_mut() {
        *v = find(*v);
    }
}

/// Overlap pixels of one content (`C_k ∩ O`).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapContent {
    pub id: u32,
    pub pixels: Vec<u32>,
}

/// Target pixels whose global-homography image falls inside the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMask {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    pub overlap_contents: Vec<OverlapContent>,
    pub h_g: Homography,
    pub ref_dims: (u32, u32),
}

impl OverlapMask {
    pub fn in_overlap(&self, x: u32, y: u32) -> bool {
        self.mask[y as usize * self.width as usize + x as usize]
    }

    pub fn overlap_pixel_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn non_overlap_pixel_count(&self) -> usize {
        self.mask.len() - self.overlap_pixel_count()
    }
}

fn inside_rect(p: Point2, (w, h): (u32, u32)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64
}

pub fn compute_overlap(
    partition: &ContentPartition,
    h_g: &Homography,
    ref_dims: (u32, u32),
) -> Result<OverlapMask> {
    let (w, h) = (partition.width, partition.height);
    let mut mask = vec![false; w as usize * h as usize];
    for y in 0..h {
        for x in 0..w {
            if let Ok(q) = h_g.map(Point2::new(x as f64, y as f64)) {
                mask[y as usize * w as usize + x as usize] = inside_rect(q, ref_dims);
            }
        }
    }
    if !mask.iter().any(|m| *m) {
        return Err(Error::EmptyOverlap);
    }
    let overlap_contents = partition
        .contents
        .iter()
        .filter_map(|c| {
            let pixels: Vec<u32> = c.pixels.iter().copied().filter(|&p| mask[p as usize]).collect();
            (!pixels.is_empty()).then_some(OverlapContent { id: c.id, pixels })
        })
        .collect();
    Ok(OverlapMask { width: w, height: h, mask, overlap_contents, h_g: *h_g, ref_dims })
}

/// Content id of the pixel containing each match's target point (floor convention).
/// Out-of-bounds points yield `None` and are logged.
pub fn assign_points_to_contents(partition: &ContentPartition, matches: &[FeatureMatch]) -> Vec<Option<u32>> {
    matches
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = m.target_pt;
            if inside_rect(p, (partition.width, partition.height)) {
                Some(partition.content_at(p.x.floor() as u32, p.y.floor() as u32))
            } else {
                log::warn!("match {i} at ({}, {}) lies outside the target image", p.x, p.y);
                None
            }
        })
        .collect()
}
