//! Deterministic piecewise-planar test scenes with known homographies.
//!
//! Each plane carries a procedural texture defined in target coordinates.
//! The target shows, at every pixel, the nearest plane whose footprint
//! contains it; the reference is rendered by pulling each pixel back through
//! every plane homography in depth order, so nearer planes occlude farther
//! ones. One plane has an empty footprint and fills everything else.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{symmetric_transfer_error, FeatureMatch, Homography, MatchSet, Point2};
use crate::image::Image;
use crate::matchfile::write_matches;
use crate::segmentation::LabelMap;

const MAX_SAMPLING_TRIES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    /// Target to reference map of this plane.
    pub homography: Homography,
    /// Smaller is nearer; must be unique across planes.
    pub depth: u32,
    /// Union of polygons in target coordinates; empty for the unbounded backdrop.
    pub footprint: Vec<Vec<Point2>>,
}

/// Extra label-map region splitting one plane's visible pixels into a
/// separate segment, as an over-segmenting mask generator would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSplit {
    pub plane: usize,
    pub polygon: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub ref_width: u32,
    pub ref_height: u32,
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub splits: Vec<SegmentSplit>,
    pub texture_seed: u64,
    pub matches_per_plane: usize,
    /// Injected outliers as a fraction of the inlier count.
    pub outlier_fraction: f64,
    pub noise_sigma: f64,
    /// Injected outliers keep at least this transfer error under every plane.
    pub outlier_min_ste: f64,
}

/// Generator-side truth for a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub homographies: Vec<Homography>,
    /// Plane of each match, `None` for injected outliers.
    pub match_plane: Vec<Option<usize>>,
    /// Raw label-map id to plane.
    pub raw_to_plane: BTreeMap<u16, usize>,
    /// Visible plane at each target pixel.
    #[serde(skip)]
    pub target_plane: Vec<u8>,
    /// Visible plane at each reference pixel.
    #[serde(skip)]
    pub reference_plane: Vec<u8>,
    /// Whether each target pixel is visible (inside and unoccluded) in the reference.
    #[serde(skip)]
    pub visible_in_reference: Vec<bool>,
}

impl GroundTruth {
    pub fn outlier_count(&self) -> usize {
        self.match_plane.iter().filter(|p| p.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub target: Image,
    pub reference: Image,
    pub matches: MatchSet,
    pub labels: LabelMap,
    pub gt: GroundTruth,
}

/// File names written by [`Scene::write_files`].
pub const SCENE_FILES: [&str; 6] =
    ["target.png", "reference.png", "labels.png", "matches.txt", "spec.json", "ground_truth.json"];

impl Scene {
    /// Writes the images, label map, match file, the spec and the ground truth into `dir`.
    pub fn write_files(&self, spec: &SceneSpec, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.target.save_rgb(&dir.join(SCENE_FILES[0]))?;
        self.reference.save_rgb(&dir.join(SCENE_FILES[1]))?;
        self.labels.save(&dir.join(SCENE_FILES[2]))?;
        write_matches(&dir.join(SCENE_FILES[3]), &self.matches)?;
        let encode = |e: serde_json::Error| Error::Io(e.to_string());
        std::fs::write(dir.join(SCENE_FILES[4]), serde_json::to_string_pretty(spec).map_err(encode)?)?;
        std::fs::write(dir.join(SCENE_FILES[5]), serde_json::to_string_pretty(&self.gt).map_err(encode)?)?;
        Ok(())
    }
}

/// `K (R + t nᵀ / d) K⁻¹` for a plane `nᵀX = d` in target-camera coordinates,
/// with the reference camera at `X_r = R X + t` and `R` a roll about the optical axis.
pub fn plane_homography(focal: f64, center: (f64, f64), roll: f64, t: [f64; 3], n: [f64; 3], d: f64) -> Result<Homography> {
    let k = Matrix3::new(focal, 0.0, center.0, 0.0, focal, center.1, 0.0, 0.0, 1.0);
    let k_inv = k.try_inverse().ok_or_else(|| Error::InvalidSpec("zero focal length".into()))?;
    let (s, c) = roll.sin_cos();
    let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let n = Vector3::from(n).normalize();
    let m = k * (r + Vector3::from(t) * n.transpose() / d) * k_inv;
    Homography::new(m)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)]
}

fn poly(pts: &[(f64, f64)]) -> Vec<Point2> {
    pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()
}

impl SceneSpec {
    /// Names accepted by [`SceneSpec::preset`].
    pub const PRESETS: [&'static str; 5] = ["two-plane", "three-plane", "parallax", "interleaved", "identity"];

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "two-plane" => Self::two_plane_occlusion(),
            "three-plane" => Self::three_plane(),
            "parallax" => Self::parallax_pair(),
            "interleaved" => Self::interleaved(),
            "identity" => Self::identity(320, 240),
            other => return Err(Error::InvalidSpec(format!("unknown preset '{other}'"))),
        })
    }

    /// Backdrop shifted by (-40, 0) behind a foreground rectangle shifted by
    /// (-90, 0); the lower-left part of the backdrop is a separate segment.
    pub fn two_plane_occlusion() -> Self {
        Self {
            width: 400,
            height: 300,
            ref_width: 400,
            ref_height: 300,
            planes: vec![
                PlaneSpec { homography: Homography::translation(-40.0, 0.0), depth: 1, footprint: vec![] },
                PlaneSpec {
                    homography: Homography::translation(-90.0, 0.0),
                    depth: 0,
                    footprint: vec![rect(220.0, 40.0, 359.5, 259.5)],
                },
            ],
            splits: vec![SegmentSplit { plane: 0, polygon: rect(-1.0, 149.5, 219.5, 301.0) }],
            texture_seed: 11,
            matches_per_plane: 150,
            outlier_fraction: 0.1,
            noise_sigma: 0.5,
            outlier_min_ste: 400.0,
        }
    }

    /// Backdrop plus two slanted planes seen by a translating camera.
    pub fn three_plane() -> Self {
        let (f, c) = (600.0, (320.0, 240.0));
        let t = [-0.25, 0.02, 0.0];
        let h = |n: [f64; 3], d: f64| plane_homography(f, c, 0.0, t, n, d).expect("valid camera model");
        Self {
            width: 640,
            height: 480,
            ref_width: 640,
            ref_height: 480,
            planes: vec![
                PlaneSpec { homography: h([0.0, 0.0, 1.0], 4.0), depth: 2, footprint: vec![] },
                PlaneSpec {
                    homography: h([0.0, 0.3, 1.0], 2.2),
                    depth: 1,
                    footprint: vec![poly(&[(150.0, 80.0), (330.0, 90.0), (320.0, 300.0), (140.0, 290.0)])],
                },
                PlaneSpec {
                    homography: h([-0.25, 0.0, 1.0], 1.5),
                    depth: 0,
                    footprint: vec![poly(&[(380.0, 200.0), (600.0, 180.0), (610.0, 420.0), (390.0, 430.0)])],
                },
            ],
            splits: vec![],
            texture_seed: 5,
            matches_per_plane: 150,
            outlier_fraction: 0.2,
            noise_sigma: 0.5,
            outlier_min_ste: 400.0,
        }
    }

    /// Fronto-parallel backdrop and one slanted near plane.
    pub fn parallax_pair() -> Self {
        let (f, c) = (500.0, (240.0, 180.0));
        let t = [-0.2, 0.0, 0.0];
        let h = |n: [f64; 3], d: f64| plane_homography(f, c, 0.0, t, n, d).expect("valid camera model");
        Self {
            width: 480,
            height: 360,
            ref_width: 480,
            ref_height: 360,
            planes: vec![
                PlaneSpec { homography: h([0.0, 0.0, 1.0], 3.0), depth: 1, footprint: vec![] },
                PlaneSpec {
                    homography: h([0.0, 0.35, 1.0], 1.4),
                    depth: 0,
                    footprint: vec![poly(&[(250.0, 60.0), (440.0, 70.0), (430.0, 300.0), (260.0, 290.0)])],
                },
            ],
            splits: vec![],
            texture_seed: 3,
            matches_per_plane: 150,
            outlier_fraction: 0.1,
            noise_sigma: 0.5,
            outlier_min_ste: 400.0,
        }
    }

    /// A backdrop with a comb of near vertical bars, so the two planes'
    /// matches interleave across the image.
    pub fn interleaved() -> Self {
        let bars = (0..5).map(|i| rect(150.0 + 60.0 * i as f64, 30.0, 179.5 + 60.0 * i as f64, 269.5)).collect();
        Self {
            width: 480,
            height: 300,
            ref_width: 480,
            ref_height: 300,
            planes: vec![
                PlaneSpec { homography: Homography::translation(-30.0, 0.0), depth: 1, footprint: vec![] },
                PlaneSpec { homography: Homography::translation(-48.0, 0.0), depth: 0, footprint: bars },
            ],
            splits: vec![],
            texture_seed: 17,
            matches_per_plane: 150,
            outlier_fraction: 0.1,
            noise_sigma: 0.5,
            outlier_min_ste: 400.0,
        }
    }

    /// One plane with the identity map and no noise.
    pub fn identity(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ref_width: width,
            ref_height: height,
            planes: vec![PlaneSpec { homography: Homography::identity(), depth: 0, footprint: vec![] }],
            splits: vec![],
            texture_seed: 1,
            matches_per_plane: 60,
            outlier_fraction: 0.0,
            noise_sigma: 0.0,
            outlier_min_ste: 400.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.width == 0 || self.height == 0 || self.ref_width == 0 || self.ref_height == 0 {
            return bad("image dimensions must be positive");
        }
        if self.planes.is_empty() || self.planes.len() > u8::MAX as usize {
            return bad("scene needs between 1 and 255 planes");
        }
        if self.planes.iter().filter(|p| p.footprint.is_empty()).count() != 1 {
            return bad("exactly one plane must have an empty (unbounded) footprint");
        }
        let backdrop = self.planes.iter().find(|p| p.footprint.is_empty()).unwrap();
        if self.planes.iter().any(|p| p.depth > backdrop.depth || (p.depth == backdrop.depth && !std::ptr::eq(p, backdrop))) {
            return bad("the unbounded plane must be the deepest");
        }
        let mut depths: Vec<u32> = self.planes.iter().map(|p| p.depth).collect();
        depths.sort_unstable();
        if depths.windows(2).any(|w| w[0] == w[1]) {
            return bad("plane depths must be distinct");
        }
        if self.planes.iter().any(|p| p.footprint.iter().any(|poly| poly.len() < 3)) {
            return bad("footprint polygons need at least three vertices");
        }
        if self.splits.iter().any(|s| s.plane >= self.planes.len() || s.polygon.len() < 3) {
            return bad("segment split refers to a missing plane or has fewer than three vertices");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be a finite non-negative number");
        }
        if self.matches_per_plane == 0 {
            return bad("matches_per_plane must be positive");
        }
        Ok(())
    }
}

fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(ix as u64 ^ splitmix(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64, scale: f64) -> f64 {
    let (gx, gy) = (x / scale, y / scale);
    let (ix, iy) = (gx.floor(), gy.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (fx, fy) = (smooth(gx - ix), smooth(gy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let top = lattice(seed, ix, iy) * (1.0 - fx) + lattice(seed, ix + 1, iy) * fx;
    let bottom = lattice(seed, ix, iy + 1) * (1.0 - fx) + lattice(seed, ix + 1, iy + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Four-octave value noise in `[0, 1]`.
fn fbm(seed: u64, x: f64, y: f64) -> f64 {
    let (mut sum, mut amp, mut norm, mut scale) = (0.0, 1.0, 0.0, 64.0);
    for octave in 0..4 {
        sum += amp * value_noise(seed.wrapping_add(octave), x, y, scale);
        norm += amp;
        amp *= 0.5;
        scale *= 0.5;
    }
    sum / norm
}

/// Procedural color of `plane` at target-frame point `p`: a soft checker
/// modulated by per-channel value noise.
pub fn texture(seed: u64, plane: usize, p: Point2) -> [f64; 3] {
    let base = splitmix(seed ^ (0xA5A5_0000 + plane as u64));
    let period = 26.0 + 7.0 * plane as f64;
    let phase = (base % 97) as f64 * 0.37;
    let s = (std::f64::consts::PI * (p.x + phase) / period).sin() * (std::f64::consts::PI * (p.y + phase) / period).sin();
    let checker = (1.5 * s).tanh() / 1.5f64.tanh();
    std::array::from_fn(|c| {
        let n = fbm(base.wrapping_add(1000 * (c as u64 + 1)), p.x, p.y);
        (128.0 + 45.0 * checker + 160.0 * (n - 0.5)).clamp(0.0, 255.0)
    })
}

fn quantize(v: [f64; 3]) -> [u8; 3] {
    v.map(|c| c.round().clamp(0.0, 255.0) as u8)
}

// keeps integer-translation scenes bit-exact despite rounding in the inverse map
fn snap(p: Point2) -> Point2 {
    let s = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    Point2::new(s(p.x), s(p.y))
}

struct Layout<'a> {
    spec: &'a SceneSpec,
    /// Plane indices nearest first.
    order: Vec<usize>,
}

impl<'a> Layout<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let mut order: Vec<usize> = (0..spec.planes.len()).collect();
        order.sort_by_key(|&k| spec.planes[k].depth);
        Self { spec, order }
    }

    fn in_footprint(&self, k: usize, p: Point2) -> bool {
        let fp = &self.spec.planes[k].footprint;
        fp.is_empty() || fp.iter().any(|poly| point_in_polygon(p, poly))
    }

    fn target_plane(&self, p: Point2) -> usize {
        *self.order.iter().find(|&&k| self.in_footprint(k, p)).expect("backdrop is unbounded")
    }

    /// Visible plane at reference point `q` and its target-frame preimage.
    fn reference_plane(&self, q: Point2) -> Option<(usize, Point2)> {
        self.order.iter().find_map(|&k| {
            let p = snap(self.spec.planes[k].homography.map_inverse(q).ok()?);
            self.in_footprint(k, p).then_some((k, p))
        })
    }

    fn in_reference(&self, q: Point2) -> bool {
        q.x >= 0.0 && q.y >= 0.0 && q.x < self.spec.ref_width as f64 && q.y < self.spec.ref_height as f64
    }

    /// Whether target point `p` of plane `k` is seen by the reference.
    fn visible(&self, k: usize, p: Point2) -> bool {
        let Ok(q) = self.spec.planes[k].homography.map(p) else { return false };
        self.in_reference(q) && self.reference_plane(q).is_some_and(|(v, _)| v == k)
    }
}

fn truncated_noise(
    rng: &mut ChaCha8Rng,
    normal: Option<&Normal<f64>>,
    h: &Homography,
    p: Point2,
    q: Point2,
    sigma: f64,
) -> Option<Point2> {
    let Some(normal) = normal else { return Some(q) };
    for _ in 0..1000 {
        let noisy = Point2::new(q.x + normal.sample(rng), q.y + normal.sample(rng));
        if symmetric_transfer_error(h, &FeatureMatch::new(p, noisy)) < 3.0 * sigma {
            return Some(noisy);
        }
    }
    None
}

/// Renders the scene and samples its matches.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let layout = Layout::new(spec);
    let (w, h) = (spec.width, spec.height);
    let seed = spec.texture_seed;

    let mut target_plane = vec![0u8; (w * h) as usize];
    let mut visible_in_reference = vec![false; (w * h) as usize];
    let target = Image::from_fn(w, h, |x, y| {
        let p = Point2::new(x as f64, y as f64);
        let k = layout.target_plane(p);
        let i = (y * w + x) as usize;
        target_plane[i] = k as u8;
        visible_in_reference[i] = layout.visible(k, p);
        quantize(texture(seed, k, p))
    });
    let mut reference_plane = vec![0u8; (spec.ref_width * spec.ref_height) as usize];
    let reference = Image::from_fn(spec.ref_width, spec.ref_height, |x, y| {
        let (k, p) = layout.reference_plane(Point2::new(x as f64, y as f64)).expect("backdrop is unbounded");
        reference_plane[(y * spec.ref_width + x) as usize] = k as u8;
        quantize(texture(seed, k, p))
    });

    // label map: plane k has raw id k + 1, split j has raw id planes + j + 1
    let mut raw_to_plane: BTreeMap<u16, usize> = (0..spec.planes.len()).map(|k| (k as u16 + 1, k)).collect();
    let mut labels = vec![0u16; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let k = target_plane[i] as usize;
            let p = Point2::new(x as f64, y as f64);
            let split = spec.splits.iter().position(|s| s.plane == k && point_in_polygon(p, &s.polygon));
            labels[i] = match split {
                Some(j) => (spec.planes.len() + j + 1) as u16,
                None => k as u16 + 1,
            };
        }
    }
    for (j, s) in spec.splits.iter().enumerate() {
        raw_to_plane.insert((spec.planes.len() + j + 1) as u16, s.plane);
    }
    let labels = LabelMap::new(w, h, labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_EED0_F3A7_C4E5);
    let normal = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?)
    } else {
        None
    };
    let mut tagged: Vec<(FeatureMatch, Option<usize>)> = Vec::new();
    for k in 0..spec.planes.len() {
        let hk = &spec.planes[k].homography;
        let candidates: Vec<u32> = (0..w * h)
            .filter(|&i| target_plane[i as usize] as usize == k && visible_in_reference[i as usize])
            .collect();
        if candidates.is_empty() {
            return Err(Error::InvalidSpec(format!("plane {k} is not visible in both images")));
        }
        let mut taken = 0;
        let mut tries = 0;
        while taken < spec.matches_per_plane {
            tries += 1;
            if tries > MAX_SAMPLING_TRIES {
                return Err(Error::InvalidSpec(format!("could not sample matches on plane {k}")));
            }
            // u64 keeps the stream identical on 32-bit targets
            let px = candidates[rng.gen_range(0..candidates.len() as u64) as usize];
            let p = Point2::new((px % w) as f64 + rng.gen::<f64>(), (px / w) as f64 + rng.gen::<f64>());
            if layout.target_plane(p) != k || !layout.visible(k, p) {
                continue;
            }
            let q = hk.map(p)?;
            let Some(q) = truncated_noise(&mut rng, normal.as_ref(), hk, p, q, spec.noise_sigma) else { continue };
            if !layout.in_reference(q) {
                continue;
            }
            tagged.push((FeatureMatch::new(p, q), Some(k)));
            taken += 1;
        }
    }
    let inliers = tagged.len();
    let outliers = (spec.outlier_fraction * inliers as f64).round() as usize;
    let mut tries = 0;
    while tagged.len() < inliers + outliers {
        tries += 1;
        if tries > MAX_SAMPLING_TRIES {
            return Err(Error::InvalidSpec("could not place outliers far enough from every plane".into()));
        }
        let p = Point2::new(rng.gen::<f64>() * w as f64, rng.gen::<f64>() * h as f64);
        let q = Point2::new(rng.gen::<f64>() * spec.ref_width as f64, rng.gen::<f64>() * spec.ref_height as f64);
        let m = FeatureMatch::new(p, q);
        let nearest = spec.planes.iter().map(|pl| symmetric_transfer_error(&pl.homography, &m)).fold(f64::INFINITY, f64::min);
        if nearest >= spec.outlier_min_ste {
            tagged.push((m, None));
        }
    }
    tagged.shuffle(&mut rng);
    let (matches, match_plane): (Vec<FeatureMatch>, Vec<Option<usize>>) = tagged.into_iter().unzip();

    Ok(Scene {
        target,
        reference,
        matches: MatchSet::new(matches)?,
        labels,
        gt: GroundTruth {
            homographies: spec.planes.iter().map(|p| p.homography).collect(),
            match_plane,
            raw_to_plane,
            target_plane,
            reference_plane,
            visible_in_reference,
        },
    })
}
