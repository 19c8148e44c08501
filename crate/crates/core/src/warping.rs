//! Canvas construction, forward region claiming through the error buffer,
//! backward texture mapping and feathered blending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::image::Image;
use crate::labeling::{NonOverlapMesh, OverlapLabeling, Triangle};
use crate::segmentation::OverlapMask;

/// Largest canvas side accepted before a warp is considered runaway.
pub const MAX_CANVAS_DIM: i64 = 20_000;

/// Output frame in reference coordinates; canvas pixel `(cx, cy)` is
/// reference point `(cx + x0, cy + y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub x0: i64,
    pub y0: i64,
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn offset(&self) -> (i64, i64) {
        (-self.x0, -self.y0)
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_reference(&self, cx: u32, cy: u32) -> Point2 {
        Point2::new((cx as i64 + self.x0) as f64, (cy as i64 + self.y0) as f64)
    }

    pub fn from_reference(&self, p: Point2) -> Point2 {
        Point2::new(p.x - self.x0 as f64, p.y - self.y0 as f64)
    }

    fn from_bounds(min: Point2, max: Point2) -> Result<Self> {
        // canonical scaling leaves exact integer images a few ulps off
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (x0, y0) = (snap(min.x).floor() as i64, snap(min.y).floor() as i64);
        let (x1, y1) = (snap(max.x).ceil() as i64, snap(max.y).ceil() as i64);
        let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
        if width > MAX_CANVAS_DIM || height > MAX_CANVAS_DIM {
            return Err(Error::CanvasOverflow { width, height });
        }
        Ok(Self { x0, y0, width: width as u32, height: height as u32 })
    }
}

/// Hull of the reference rectangle, every labeled overlap content's
/// forward-mapped bounding box and every warped mesh vertex.
pub fn compute_canvas(
    ref_dims: (u32, u32),
    overlap: &OverlapMask,
    labeling: &OverlapLabeling,
    mesh: Option<&NonOverlapMesh>,
) -> Result<Canvas> {
    let mut min = Point2::new(0.0, 0.0);
    let mut max = Point2::new((ref_dims.0 - 1) as f64, (ref_dims.1 - 1) as f64);
    let mut include = |p: Point2| {
        if p.is_finite() {
            min = Point2::new(min.x.min(p.x), min.y.min(p.y));
            max = Point2::new(max.x.max(p.x), max.y.max(p.y));
        } else {
            min = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
    };
    let w = overlap.width as usize;
    for c in &overlap.overlap_contents {
        let Some(h) = labeling.homography(c.id) else { continue };
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &p in &c.pixels {
            let (x, y) = (p as usize % w, p as usize / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        for (x, y) in [(x0, y0), (x1, y0), (x1, y1), (x0, y1)] {
            include(h.map(Point2::new(x as f64, y as f64)).unwrap_or(Point2::new(f64::NAN, f64::NAN)));
        }
    }
    if let Some(mesh) = mesh {
        for &(c, r) in &mesh.cells {
            for t in mesh.cell_triangles(c, r) {
                t.dst.iter().for_each(|&p| include(p));
            }
        }
    }
    if !min.is_finite() {
        return Err(Error::CanvasOverflow { width: i64::MAX, height: i64::MAX });
    }
    Canvas::from_bounds(min, max)
}

/// Lowest photometric error seen at each canvas pixel and the content holding it.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBuffer {
    pub width: u32,
    pub height: u32,
    pub best_error: Vec<f64>,
    /// Owning content id, 0 for none.
    pub owner: Vec<u32>,
    /// Number of footprints that offered each pixel.
    pub claims: Vec<u8>,
}

impl ErrorBuffer {
    fn new(canvas: &Canvas) -> Self {
        Self {
            width: canvas.width,
            height: canvas.height,
            best_error: vec![f64::INFINITY; canvas.len()],
            owner: vec![0; canvas.len()],
            claims: vec![0; canvas.len()],
        }
    }

    pub fn owner_at(&self, cx: u32, cy: u32) -> Option<u32> {
        let o = self.owner[cy as usize * self.width as usize + cx as usize];
        (o != 0).then_some(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WarpReport {
    pub claimed_pixels: usize,
    pub conflict_pixels: usize,
    pub hole_pixels: usize,
    /// Canvas pixels filled through the non-overlap mesh.
    pub mesh_pixels: usize,
}

/// Canvas pixels whose backward image rounds onto the content (`core`) and
/// the one-pixel ring around them (`ring`), both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Footprint {
    pub core: Vec<u32>,
    pub ring: Vec<u32>,
}

fn overlap_owner_map(overlap: &OverlapMask) -> Vec<u32> {
    let mut map = vec![0u32; overlap.mask.len()];
    for c in &overlap.overlap_contents {
        for &p in &c.pixels {
            map[p as usize] = c.id;
        }
    }
    map
}

fn round_into(p: Point2, w: u32, h: u32) -> Option<usize> {
    let (x, y) = (p.x.round(), p.y.round());
    (x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64).then(|| y as usize * w as usize + x as usize)
}

/// Footprint of one overlap content under its labeled homography.
pub fn content_footprint(
    id: u32,
    pixels: &[u32],
    labeling: &OverlapLabeling,
    owner_map: &[u32],
    overlap: &OverlapMask,
    canvas: &Canvas,
) -> Footprint {
    let Some(h) = labeling.homography(id) else { return Footprint::default() };
    let (tw, th) = (overlap.width, overlap.height);
    let (mut min, mut max) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for &p in pixels {
        let src = Point2::new((p % tw) as f64, (p / tw) as f64);
        if let Ok(q) = h.map(src) {
            let c = canvas.from_reference(q);
            min = Point2::new(min.x.min(c.x), min.y.min(c.y));
            max = Point2::new(max.x.max(c.x), max.y.max(c.y));
        }
    }
    if !min.is_finite() || !max.is_finite() {
        return Footprint::default();
    }
    let x0 = (min.x.floor() as i64 - 2).max(0);
    let y0 = (min.y.floor() as i64 - 2).max(0);
    let x1 = (max.x.ceil() as i64 + 2).min(canvas.width as i64 - 1);
    let y1 = (max.y.ceil() as i64 + 2).min(canvas.height as i64 - 1);
    if x0 > x1 || y0 > y1 {
        return Footprint::default();
    }
    let (bw, bh) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut inside = vec![false; bw * bh];
    // ring pixels must still sample a real target pixel
    let mut sourced = vec![false; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let (cx, cy) = ((x0 as usize + bx) as u32, (y0 as usize + by) as u32);
            let Ok(s) = h.map_inverse(canvas.to_reference(cx, cy)) else { continue };
            if let Some(i) = round_into(s, tw, th) {
                inside[by * bw + bx] = owner_map[i] == id;
                sourced[by * bw + bx] = true;
            }
        }
    }
    let mut fp = Footprint::default();
    let canvas_index = |bx: usize, by: usize| ((y0 as usize + by) * canvas.width as usize + x0 as usize + bx) as u32;
    for by in 0..bh {
        for bx in 0..bw {
            if inside[by * bw + bx] {
                fp.core.push(canvas_index(bx, by));
                continue;
            }
            if !sourced[by * bw + bx] {
                continue;
            }
            let near = (by.saturating_sub(1)..(by + 2).min(bh))
                .any(|ny| (bx.saturating_sub(1)..(bx + 2).min(bw)).any(|nx| inside[ny * bw + nx]));
            if near {
                fp.ring.push(canvas_index(bx, by));
            }
        }
    }
    fp
}

/// Resolves overlapping footprints. With the error buffer a content takes a
/// pixel only when its error is strictly lower than the current holder's
/// (contents are visited by ascending id, so ties stay with the lower id);
/// without it the last content visited wins. Ring pixels only fill pixels
/// left unclaimed by every core footprint.
pub fn forward_claim(
    labeling: &OverlapLabeling,
    overlap: &OverlapMask,
    canvas: &Canvas,
    use_error_buffer: bool,
) -> (ErrorBuffer, WarpReport) {
    let owner_map = overlap_owner_map(overlap);
    let mut contents: Vec<_> = overlap.overlap_contents.iter().collect();
    contents.sort_by_key(|c| c.id);
    let footprint = |c: &&crate::segmentation::OverlapContent| {
        content_footprint(c.id, &c.pixels, labeling, &owner_map, overlap, canvas)
    };
    #[cfg(feature = "parallel")]
    let footprints: Vec<Footprint> = {
        use rayon::prelude::*;
        contents.par_iter().map(footprint).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let footprints: Vec<Footprint> = contents.iter().map(footprint).collect();

    let mut buffer = ErrorBuffer::new(canvas);
    let offer = |buffer: &mut ErrorBuffer, i: usize, id: u32, err: f64| {
        let take = !use_error_buffer || buffer.owner[i] == 0 || err < buffer.best_error[i];
        if take {
            buffer.owner[i] = id;
            buffer.best_error[i] = err;
        }
    };
    for (c, fp) in contents.iter().zip(&footprints) {
        let err = labeling.content_error.get(&c.id).copied().unwrap_or(f64::INFINITY);
        for &i in &fp.core {
            buffer.claims[i as usize] = buffer.claims[i as usize].saturating_add(1);
            offer(&mut buffer, i as usize, c.id, err);
        }
    }
    let core_owned: Vec<bool> = buffer.owner.iter().map(|&o| o != 0).collect();
    for (c, fp) in contents.iter().zip(&footprints) {
        let err = labeling.content_error.get(&c.id).copied().unwrap_or(f64::INFINITY);
        for &i in fp.ring.iter().filter(|&&i| !core_owned[i as usize]) {
            buffer.claims[i as usize] = buffer.claims[i as usize].saturating_add(1);
            offer(&mut buffer, i as usize, c.id, err);
        }
    }

    let mut report = WarpReport {
        claimed_pixels: buffer.owner.iter().filter(|&&o| o != 0).count(),
        conflict_pixels: buffer.claims.iter().filter(|&&n| n >= 2).count(),
        ..WarpReport::default()
    };
    let (rw, rh) = overlap.ref_dims;
    for cy in 0..canvas.height {
        for cx in 0..canvas.width {
            let q = canvas.to_reference(cx, cy);
            if q.x < 0.0 || q.y < 0.0 || q.x >= rw as f64 || q.y >= rh as f64 {
                continue;
            }
            let i = cy as usize * canvas.width as usize + cx as usize;
            if buffer.owner[i] != 0 {
                continue;
            }
            let in_overlap = overlap
                .h_g
                .map_inverse(q)
                .ok()
                .and_then(|s| round_into(s, overlap.width, overlap.height))
                .is_some_and(|t| overlap.mask[t]);
            report.hole_pixels += in_overlap as usize;
        }
    }
    (buffer, report)
}

/// Samples the target for every owned canvas pixel through its owner's
/// inverse homography, then fills remaining pixels from the mesh triangles
/// whose source lands on a non-overlap pixel. Returns the warped target and
/// the number of mesh-filled pixels.
pub fn backward_render(
    buffer: &ErrorBuffer,
    labeling: &OverlapLabeling,
    mesh: Option<&NonOverlapMesh>,
    overlap: &OverlapMask,
    target: &Image,
    canvas: &Canvas,
) -> Result<(Image, usize)> {
    let mut out = Image::new(canvas.width, canvas.height, false);
    let cw = canvas.width as usize;
    let render_row = |cy: usize, row: &mut [[u8; 3]], cov: &mut [bool]| -> Result<()> {
        for cx in 0..cw {
            let id = buffer.owner[cy * cw + cx];
            if id == 0 {
                continue;
            }
            let h = labeling.homography(id).ok_or(Error::SingularMap(id as usize))?;
            let s = h.map_inverse(canvas.to_reference(cx as u32, cy as u32))?;
            row[cx] = target.sample_clamped(s).map(|v| v.round().clamp(0.0, 255.0) as u8);
            cov[cx] = true;
        }
        Ok(())
    };
    {
        let (pixels, coverage) = out.split_mut();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            pixels
                .par_chunks_mut(cw)
                .zip(coverage.par_chunks_mut(cw))
                .enumerate()
                .try_for_each(|(cy, (row, cov))| render_row(cy, row, cov))?;
        }
        #[cfg(not(feature = "parallel"))]
        for (cy, (row, cov)) in pixels.chunks_mut(cw).zip(coverage.chunks_mut(cw)).enumerate() {
            render_row(cy, row, cov)?;
        }
    }

    let mut mesh_pixels = 0;
    if let Some(mesh) = mesh {
        for tri in mesh.triangles() {
            mesh_pixels += rasterize_triangle(&tri, overlap, target, canvas, &mut out);
        }
    }
    Ok((out, mesh_pixels))
}

fn rasterize_triangle(tri: &Triangle, overlap: &OverlapMask, target: &Image, canvas: &Canvas, out: &mut Image) -> usize {
    let dst = tri.dst.map(|p| canvas.from_reference(p));
    let local = Triangle { src: tri.src, dst };
    let x0 = dst.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let y0 = dst.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let x1 = dst.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil().min(canvas.width as f64 - 1.0);
    let y1 = dst.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil().min(canvas.height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return 0;
    }
    let mut filled = 0;
    for cy in y0 as u32..=y1 as u32 {
        for cx in x0 as u32..=x1 as u32 {
            if out.covered(cx, cy) {
                continue;
            }
            let c = Point2::new(cx as f64, cy as f64);
            let Some(l) = Triangle::barycentric(&local.dst, c) else { return filled };
            if l.iter().any(|&v| v < -1e-9) {
                continue;
            }
            let s = local.src[0] * l[0] + local.src[1] * l[1] + local.src[2] * l[2];
            let Some(t) = round_into(s, overlap.width, overlap.height) else { continue };
            if overlap.mask[t] {
                continue;
            }
            let v = target.sample_clamped(s).map(|v| v.round().clamp(0.0, 255.0) as u8);
            out.set(cx, cy, v, true);
            filled += 1;
        }
    }
    filled
}

/// The reference image placed on the canvas.
pub fn reference_on_canvas(reference: &Image, canvas: &Canvas) -> Image {
    let (ox, oy) = canvas.offset();
    let mut out = Image::new(canvas.width, canvas.height, false);
    for y in 0..reference.height() {
        for x in 0..reference.width() {
            if reference.covered(x, y) {
                out.set((x as i64 + ox) as u32, (y as i64 + oy) as u32, reference.get(x, y), true);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    /// Weights are distances to the edge of each image's coverage.
    #[default]
    Feather,
    /// Equal weights wherever both images cover.
    Constant,
}

impl std::str::FromStr for BlendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feather" => Ok(Self::Feather),
            "constant" => Ok(Self::Constant),
            other => Err(Error::InvalidConfig(format!("unknown blend mode '{other}'"))),
        }
    }
}

// stands in for infinity; every padded row and column has an uncovered end
const FAR: f64 = 1e20;

/// Felzenszwalb-Huttenlocher lower envelope of parabolas.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let cross = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = cross(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = cross(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        *out = (q as f64 - v[k] as f64).powi(2) + f[v[k]];
    }
}

/// Euclidean distance from each covered pixel to the nearest uncovered one,
/// treating everything outside the image as uncovered.
pub fn distance_to_uncovered(coverage: &[bool], width: u32, height: u32) -> Vec<f64> {
    let (w, h) = (width as usize + 2, height as usize + 2);
    let mut grid = vec![0.0; w * h];
    for y in 0..height as usize {
        for x in 0..width as usize {
            if coverage[y * width as usize + x] {
                grid[(y + 1) * w + x + 1] = FAR;
            }
        }
    }
    let n = w.max(h);
    let (mut f, mut d, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    let mut out = vec![0.0; width as usize * height as usize];
    for y in 0..height as usize {
        for x in 0..width as usize {
            out[y * width as usize + x] = grid[(y + 1) * w + x + 1].sqrt();
        }
    }
    out
}

/// Per-pixel blend weights `(w_t, w_r)` for the two coverages.
pub fn blend_weights(warped: &Image, reference: &Image, mode: BlendMode) -> (Vec<f64>, Vec<f64>) {
    match mode {
        BlendMode::Feather => (
            distance_to_uncovered(warped.coverage(), warped.width(), warped.height()),
            distance_to_uncovered(reference.coverage(), reference.width(), reference.height()),
        ),
        BlendMode::Constant => {
            let c = |img: &Image| img.coverage().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
            (c(warped), c(reference))
        }
    }
}

/// Linear blend of the warped target and the reference on the same canvas.
pub fn blend_linear(warped: &Image, reference: &Image, mode: BlendMode) -> Result<Image> {
    if warped.dims() != reference.dims() {
        return Err(Error::DimensionMismatch { expected: warped.dims(), got: reference.dims() });
    }
    let (wt, wr) = blend_weights(warped, reference, mode);
    let mut out = Image::new(warped.width(), warped.height(), false);
    let (pixels, coverage) = out.split_mut();
    for i in 0..pixels.len() {
        let (ct, cr) = (warped.coverage()[i], reference.coverage()[i]);
        let (pt, pr) = (warped.pixels()[i], reference.pixels()[i]);
        pixels[i] = match (ct, cr) {
            (true, true) => std::array::from_fn(|k| {
                let v = (wt[i] * pt[k] as f64 + wr[i] * pr[k] as f64) / (wt[i] + wr[i]);
                v.round().clamp(0.0, 255.0) as u8
            }),
            (true, false) => pt,
            (false, true) => pr,
            (false, false) => [0, 0, 0],
        };
        coverage[i] = ct || cr;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Homography;
    use crate::labeling::label_overlap_contents;
    use crate::multifit::ModelSet;
    use crate::segmentation::{compute_overlap, normalize_partition_with, LabelMap};

    fn brute_edt(cov: &[bool], w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if !cov[y as usize * w + x as usize] {
                    continue;
                }
                let mut best = f64::INFINITY;
                for yy in -1..=h as i64 {
                    for xx in -1..=w as i64 {
                        let outside = xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64;
                        if outside || !cov[yy as usize * w + xx as usize] {
                            best = best.min((((x - xx).pow(2) + (y - yy).pow(2)) as f64).sqrt());
                        }
                    }
                }
                out[y as usize * w + x as usize] = best;
            }
        }
        out
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let (w, h) = (13usize, 9usize);
        let cov: Vec<bool> = (0..w * h).map(|i| (i * 7919 % 11) != 0).collect();
        let fast = distance_to_uncovered(&cov, w as u32, h as u32);
        let slow = brute_edt(&cov, w, h);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let full = distance_to_uncovered(&[true; 25], 5, 5);
        assert_eq!(full[12], 3.0);
    }

    #[test]
    fn equal_weights_average() {
        let a = Image::from_fn(5, 1, |_, _| [100; 3]);
        let b = Image::from_fn(5, 1, |_, _| [200; 3]);
        let out = blend_linear(&a, &b, BlendMode::Feather).unwrap();
        assert!(out.pixels().iter().all(|p| *p == [150; 3]));
        let same = blend_linear(&a, &a, BlendMode::Constant).unwrap();
        assert_eq!(same.pixels(), a.pixels());
    }

    fn two_content_setup(errs: Option<(f64, f64)>) -> (OverlapLabeling, OverlapMask, Canvas) {
        let (w, h) = (20u32, 10u32);
        let raw = LabelMap::new(w, h, (0..w * h).map(|i| if i % w < 10 { 1 } else { 2 }).collect()).unwrap();
        let p = normalize_partition_with(&raw, 0);
        let o = compute_overlap(&p, &Homography::identity(), (w, h)).unwrap();
        let img = Image::from_fn(w, h, |x, y| [(x * 9) as u8, (y * 20) as u8, 7]);
        let mut l = label_overlap_contents(&o, &ModelSet::new(vec![Homography::identity()]), &img, &img).unwrap();
        if let Some((e1, e2)) = errs {
            // content 2 shifted onto content 1
            l.models = ModelSet::new(vec![Homography::identity(), Homography::translation(-6.0, 0.0)]);
            l.content_label.insert(2, 2);
            l.content_error.insert(1, e1);
            l.content_error.insert(2, e2);
        }
        let canvas = compute_canvas((w, h), &o, &l, None).unwrap();
        (l, o, canvas)
    }

    #[test]
    fn disjoint_footprints_have_no_conflict() {
        let (l, o, canvas) = two_content_setup(None);
        assert_eq!((canvas.width, canvas.height, canvas.x0), (20, 10, 0));
        let (buf, rep) = forward_claim(&l, &o, &canvas, true);
        assert_eq!(rep.conflict_pixels, 0);
        assert_eq!(rep.hole_pixels, 0);
        assert_eq!(buf.owner_at(3, 3), Some(1));
        assert_eq!(buf.owner_at(15, 3), Some(2));
    }

    #[test]
    fn smaller_error_wins_intersection() {
        for (e1, e2, winner) in [(2.0, 7.5, 1), (7.5, 2.0, 2)] {
            let (l, o, canvas) = two_content_setup(Some((e1, e2)));
            let (buf, rep) = forward_claim(&l, &o, &canvas, true);
            assert!(rep.conflict_pixels > 0);
            // content 2 now covers canvas columns 4..=13, content 1 columns 0..=9
            for cx in 4..=9 {
                assert_eq!(buf.owner_at(cx - canvas.x0 as u32, 5), Some(winner));
            }
        }
    }

    #[test]
    fn identity_render_reproduces_target() {
        let (w, h) = (16u32, 12u32);
        let raw = LabelMap::new(w, h, vec![1; (w * h) as usize]).unwrap();
        let o = compute_overlap(&normalize_partition_with(&raw, 0), &Homography::identity(), (w, h)).unwrap();
        let img = Image::from_fn(w, h, |x, y| [(x * 13) as u8, (y * 17) as u8, (x * y) as u8]);
        let l = label_overlap_contents(&o, &ModelSet::new(vec![Homography::identity()]), &img, &img).unwrap();
        let canvas = compute_canvas((w, h), &o, &l, None).unwrap();
        let (buf, _) = forward_claim(&l, &o, &canvas, true);
        let (out, mesh_px) = backward_render(&buf, &l, None, &o, &img, &canvas).unwrap();
        assert_eq!(mesh_px, 0);
        assert_eq!(out.pixels(), img.pixels());
        assert!(out.coverage().iter().all(|c| *c));
    }
}
