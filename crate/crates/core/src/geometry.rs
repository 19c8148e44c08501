//! Planar two-view geometry: homographies, similarities and fundamental
//! matrices, with the estimators and residuals used throughout the pipeline.

use std::collections::HashSet;
use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::{DMatrix, Matrix2, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Perspective denominators below this magnitude are treated as points at infinity.
pub const MIN_PERSPECTIVE_W: f64 = 1e-12;

/// A point in pixel coordinates. Integer coordinates are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn homogeneous(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Applies a 2x2 linear map to a point.
pub fn apply_linear(m: &Matrix2<f64>, p: Point2) -> Point2 {
    Point2::new(m[(0, 0)] * p.x + m[(0, 1)] * p.y, m[(1, 0)] * p.x + m[(1, 1)] * p.y)
}

fn dehomogenize(v: &Vector3<f64>) -> Result<Point2> {
    if v.z.abs() < MIN_PERSPECTIVE_W {
        return Err(Error::PointAtInfinity);
    }
    Ok(Point2::new(v.x / v.z, v.y / v.z))
}

/// A putative correspondence: `target_pt` in the target image, `ref_pt` in the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatch {
    pub target_pt: Point2,
    pub ref_pt: Point2,
}

impl FeatureMatch {
    pub const fn new(target_pt: Point2, ref_pt: Point2) -> Self {
        Self { target_pt, ref_pt }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.ref_pt, self.target_pt)
    }
}

/// A non-empty, duplicate-free ordered list of matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    matches: Vec<FeatureMatch>,
}

impl MatchSet {
    pub fn new(matches: Vec<FeatureMatch>) -> Result<Self> {
        if matches.is_empty() {
            return Err(Error::EmptyResult);
        }
        let mut seen = HashSet::with_capacity(matches.len());
        for m in &matches {
            if !m.target_pt.is_finite() || !m.ref_pt.is_finite() {
                return Err(Error::DegenerateConfiguration(
                    "non-finite match coordinate".into(),
                ));
            }
            let key = [
                m.target_pt.x.to_bits(),
                m.target_pt.y.to_bits(),
                m.ref_pt.x.to_bits(),
                m.ref_pt.y.to_bits(),
            ];
            if !seen.insert(key) {
                return Err(Error::DegenerateConfiguration(format!(
                    "duplicate match ({}, {}) -> ({}, {})",
                    m.target_pt.x, m.target_pt.y, m.ref_pt.x, m.ref_pt.y
                )));
            }
        }
        Ok(Self { matches })
    }

    /// Builds a set from a subset of indices of `self`, preserving order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.matches[i]).collect())
    }

    /// Checks that every point lies inside its image rectangle `[0,w)x[0,h)`.
    pub fn check_bounds(&self, target_dims: (u32, u32), ref_dims: (u32, u32)) -> Result<()> {
        let inside = |p: Point2, (w, h): (u32, u32)| {
            p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64
        };
        for m in &self.matches {
            if !inside(m.target_pt, target_dims) {
                return Err(Error::OutOfBounds { x: m.target_pt.x, y: m.target_pt.y });
            }
            if !inside(m.ref_pt, ref_dims) {
                return Err(Error::OutOfBounds { x: m.ref_pt.x, y: m.ref_pt.y });
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[FeatureMatch] {
        &self.matches
    }

    pub fn into_vec(self) -> Vec<FeatureMatch> {
        self.matches
    }
}

impl Deref for MatchSet {
    type Target = [FeatureMatch];
    fn deref(&self) -> &[FeatureMatch] {
        &self.matches
    }
}

/// Scales `m` to unit Frobenius norm with a non-negative bottom-right entry.
/// Already-canonical input is returned unchanged.
fn canonicalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.norm();
    let mut out = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON { *m } else { m / norm };
    let sign_entry = if out[(2, 2)] != 0.0 {
        out[(2, 2)]
    } else {
        // row-major first non-zero entry decides the sign
        (0..9)
            .map(|k| out[(k / 3, k % 3)])
            .find(|v| *v != 0.0)
            .unwrap_or(1.0)
    };
    if sign_entry < 0.0 {
        out = -out;
    }
    out
}

/// An invertible 3x3 projective map stored at canonical scale together with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    inv: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration("non-finite homography".into()));
        }
        if m.norm() == 0.0 {
            return Err(Error::DegenerateConfiguration("zero homography".into()));
        }
        let m = canonicalize(&m);
        if m.determinant().abs() < 1e-24 {
            return Err(Error::DegenerateConfiguration("singular homography".into()));
        }
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfiguration("singular homography".into()))?;
        Ok(Self { m, inv })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self::from_rows([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])
            .expect("translation is invertible")
    }

    /// Canonical-scale matrix.
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Row-major entries at canonical scale.
    pub fn to_row_major(&self) -> [f64; 9] {
        std::array::from_fn(|k| self.m[(k / 3, k % 3)])
    }

    pub fn inverse(&self) -> Homography {
        Homography::new(self.inv).expect("inverse of an invertible homography")
    }

    pub fn compose(&self, after: &Homography) -> Result<Homography> {
        Homography::new(after.m * self.m)
    }

    pub fn map(&self, p: Point2) -> Result<Point2> {
        dehomogenize(&(self.m * p.homogeneous()))
    }

    pub fn map_inverse(&self, q: Point2) -> Result<Point2> {
        dehomogenize(&(self.inv * q.homogeneous()))
    }

    /// Perspective denominator of the forward map at `p`.
    pub fn w_at(&self, p: Point2) -> f64 {
        self.m[(2, 0)] * p.x + self.m[(2, 1)] * p.y + self.m[(2, 2)]
    }

    /// Frobenius distance between canonical representatives.
    pub fn frobenius_distance(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm()
    }

    pub fn is_affine(&self) -> bool {
        self.m[(2, 0)] == 0.0 && self.m[(2, 1)] == 0.0
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Homography::new(Matrix3::from_row_slice(&v)).map_err(serde::de::Error::custom)
    }
}

/// `‖H p − q‖ + ‖H⁻¹ q − p‖`, or `+∞` when either direction maps to infinity.
pub fn symmetric_transfer_error(h: &Homography, m: &FeatureMatch) -> f64 {
    match (h.map(m.target_pt), h.map_inverse(m.ref_pt)) {
        (Ok(fwd), Ok(bwd)) => fwd.distance(m.ref_pt) + bwd.distance(m.target_pt),
        _ => f64::INFINITY,
    }
}

pub fn total_transfer_error(h: &Homography, matches: &[FeatureMatch]) -> f64 {
    matches.iter().map(|m| symmetric_transfer_error(h, m)).sum()
}

/// Isotropic conditioning transform: centroid to origin, mean distance √2.
fn hartley_normalization(pts: impl Iterator<Item = Point2> + Clone) -> Matrix3<f64> {
    let n = pts.clone().count() as f64;
    let (sx, sy) = pts.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean = pts.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point2) -> Point2 {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Singular values (descending) and the right singular vector of the smallest one.
fn null_vector(a: DMatrix<f64>) -> (Vec<f64>, SVector<f64, 9>) {
    // pad so the SVD always yields all nine right singular vectors
    let a = if a.nrows() < 9 { a.resize_vertically(9, 0.0) } else { a };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let min = *order.last().expect("nine singular values");
    (sv, SVector::<f64, 9>::from_iterator(v_t.row(min).iter().copied()))
}

fn collinear(a: Point2, b: Point2, c: Point2) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = (b - a).norm().max((c - a).norm()).max(1e-300);
    cross.abs() <= 1e-9 * scale * scale
}

/// Normalized direct linear transform: least-squares algebraic homography fit.
pub fn estimate_homography_dlt(matches: &[FeatureMatch]) -> Result<Homography> {
    let n = matches.len();
    if n < 4 {
        return Err(Error::InsufficientMatches { needed: 4, got: n });
    }
    if n == 4 {
        let p: Vec<Point2> = matches.iter().map(|m| m.target_pt).collect();
        for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if collinear(p[i], p[j], p[k]) {
                return Err(Error::DegenerateConfiguration(
                    "three collinear target points".into(),
                ));
            }
        }
    }
    let t1 = hartley_normalization(matches.iter().map(|m| m.target_pt));
    let t2 = hartley_normalization(matches.iter().map(|m| m.ref_pt));
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, m) in matches.iter().enumerate() {
        let p = transform(&t1, m.target_pt);
        let q = transform(&t2, m.ref_pt);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y]);
    }
    let (sv, h) = null_vector(a);
    if sv[0] <= 0.0 || sv[7] / sv[0] < 1e-12 {
        return Err(Error::DegenerateConfiguration("rank-deficient DLT system".into()));
    }
    let hn = Matrix3::from_row_slice(h.as_slice());
    let t2_inv = t2.try_inverse().expect("normalization is invertible");
    Homography::new(t2_inv * hn * t1)
}

/// Outcome of [`refine_homography_lm`].
#[derive(Debug, Clone, Copy)]
pub struct LmOutcome {
    pub homography: Homography,
    /// Total symmetric transfer error before refinement (pixels).
    pub initial_cost: f64,
    /// Total symmetric transfer error of the returned homography (pixels).
    pub final_cost: f64,
    pub iterations: usize,
    /// Set when an update produced a singular map and the last valid iterate was kept.
    pub singular_fallback: bool,
}

const LM_MAX_ITERATIONS: usize = 100;
const LM_REL_TOLERANCE: f64 = 1e-8;
// residual floor for the reweighting; far below any meaningful pixel error
const LM_RESIDUAL_FLOOR: f64 = 1e-10;

/// Parameter vector for LM: the eight free entries of the normalized homography.
struct LmParam {
    fixed: usize,
    fixed_value: f64,
}

impl LmParam {
    fn to_matrix(&self, x: &SVector<f64, 8>) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        let mut k = 0;
        for idx in 0..9 {
            if idx == self.fixed {
                m[(idx / 3, idx % 3)] = self.fixed_value;
            } else {
                m[(idx / 3, idx % 3)] = x[k];
                k += 1;
            }
        }
        m
    }

    fn entry_of(&self, k: usize) -> (usize, usize) {
        let idx = if k < self.fixed { k } else { k + 1 };
        (idx / 3, idx % 3)
    }
}

struct NormalizedProblem {
    p: Vec<Point2>,
    q: Vec<Point2>,
    // pixel-per-normalized-unit factors for the forward (reference) and backward (target) residuals
    fwd_scale: f64,
    bwd_scale: f64,
}

impl NormalizedProblem {
    /// Per-match forward and backward residual vectors in pixel units.
    fn residuals(&self, h: &Matrix3<f64>, g: &Matrix3<f64>) -> Option<Vec<[f64; 4]>> {
        let mut out = Vec::with_capacity(self.p.len());
        for (p, q) in self.p.iter().zip(&self.q) {
            let y = h * p.homogeneous();
            let z = g * q.homogeneous();
            if y.z.abs() < MIN_PERSPECTIVE_W || z.z.abs() < MIN_PERSPECTIVE_W {
                return None;
            }
            out.push([
                (y.x / y.z - q.x) * self.fwd_scale,
                (y.y / y.z - q.y) * self.fwd_scale,
                (z.x / z.z - p.x) * self.bwd_scale,
                (z.y / z.z - p.y) * self.bwd_scale,
            ]);
        }
        Some(out)
    }

    fn cost(res: &[[f64; 4]]) -> f64 {
        res.iter().map(|r| r[0].hypot(r[1]) + r[2].hypot(r[3])).sum()
    }

    /// Reweighted normal equations of the sum-of-norms objective.
    fn normal_equations(
        &self,
        param: &LmParam,
        h: &Matrix3<f64>,
        g: &Matrix3<f64>,
        res: &[[f64; 4]],
    ) -> (SMatrix<f64, 8, 8>, SVector<f64, 8>) {
        let mut jtj = SMatrix::<f64, 8, 8>::zeros();
        let mut jtr = SVector::<f64, 8>::zeros();
        for ((p, q), r) in self.p.iter().zip(&self.q).zip(res) {
            let y = h * p.homogeneous();
            let z = g * q.homogeneous();
            let (py0, py1) = (y.x / y.z, y.y / y.z);
            let (pz0, pz1) = (z.x / z.z, z.y / z.z);
            let ph = p.homogeneous();
            let mut jf = SMatrix::<f64, 2, 8>::zeros();
            let mut jb = SMatrix::<f64, 2, 8>::zeros();
            for k in 0..8 {
                let (a, b) = param.entry_of(k);
                // forward: d(pi(H p))/dH_ab
                let dy = ph[b];
                let (d0, d1) = match a {
                    0 => (dy, 0.0),
                    1 => (0.0, dy),
                    _ => (-py0 * dy, -py1 * dy),
                };
                jf[(0, k)] = d0 / y.z * self.fwd_scale;
                jf[(1, k)] = d1 / y.z * self.fwd_scale;
                // backward: dG = -G E_ab G
                let dz = -g.column(a) * z[b];
                jb[(0, k)] = (dz.x - pz0 * dz.z) / z.z * self.bwd_scale;
                jb[(1, k)] = (dz.y - pz1 * dz.z) / z.z * self.bwd_scale;
            }
            let ef = nalgebra::Vector2::new(r[0], r[1]);
            let eb = nalgebra::Vector2::new(r[2], r[3]);
            let wf = 1.0 / ef.norm().max(LM_RESIDUAL_FLOOR);
            let wb = 1.0 / eb.norm().max(LM_RESIDUAL_FLOOR);
            jtj += jf.transpose() * jf * wf + jb.transpose() * jb * wb;
            jtr += jf.transpose() * ef * wf + jb.transpose() * eb * wb;
        }
        (jtj, jtr)
    }
}

/// Levenberg-Marquardt refinement of the total symmetric transfer error.
///
/// Works in Hartley-normalized coordinates with the residuals rescaled to
/// pixels, so the objective is exactly the pixel-space total STE. The sum of
/// norms is minimized by reweighting each residual by its inverse length.
/// Steps are accepted only when they strictly lower the total, so the
/// returned cost never exceeds the initial one.
pub fn refine_homography_lm(initial: &Homography, matches: &[FeatureMatch]) -> Result<LmOutcome> {
    let n = matches.len();
    if n < 4 {
        return Err(Error::InsufficientMatches { needed: 4, got: n });
    }
    let initial_cost = total_transfer_error(initial, matches);
    let unchanged = |iterations, singular_fallback| LmOutcome {
        homography: *initial,
        initial_cost,
        final_cost: initial_cost,
        iterations,
        singular_fallback,
    };
    if !initial_cost.is_finite() {
        return Err(Error::PointAtInfinity);
    }
    if initial_cost / n as f64 <= 1e-10 {
        return Ok(unchanged(0, false));
    }

    let t1 = hartley_normalization(matches.iter().map(|m| m.target_pt));
    let t2 = hartley_normalization(matches.iter().map(|m| m.ref_pt));
    let prob = NormalizedProblem {
        p: matches.iter().map(|m| transform(&t1, m.target_pt)).collect(),
        q: matches.iter().map(|m| transform(&t2, m.ref_pt)).collect(),
        fwd_scale: 1.0 / t2[(0, 0)],
        bwd_scale: 1.0 / t1[(0, 0)],
    };
    let t1_inv = t1.try_inverse().expect("normalization is invertible");
    let t2_inv = t2.try_inverse().expect("normalization is invertible");

    let mut hn = t2 * initial.matrix() * t1_inv;
    hn /= hn.norm();
    let fixed = if hn[(2, 2)].abs() > 1e-6 {
        8
    } else {
        (0..9).max_by(|&a, &b| hn[(a / 3, a % 3)].abs().total_cmp(&hn[(b / 3, b % 3)].abs())).unwrap()
    };
    hn /= hn[(fixed / 3, fixed % 3)];
    let param = LmParam { fixed, fixed_value: 1.0 };
    let mut x = SVector::<f64, 8>::from_iterator(
        (0..9).filter(|&i| i != fixed).map(|i| hn[(i / 3, i % 3)]),
    );

    let mut h = param.to_matrix(&x);
    let Some(mut g) = h.try_inverse() else {
        return Err(Error::SingularUpdate);
    };
    let Some(mut res) = prob.residuals(&h, &g) else {
        return Err(Error::PointAtInfinity);
    };
    let mut cost = NormalizedProblem::cost(&res);
    let (mut jtj, mut jtr) = prob.normal_equations(&param, &h, &g, &res);
    let mut mu = 1e-3 * jtj.trace() / 8.0;
    let mut improved = false;
    let mut singular = false;
    let mut iterations = 0;

    while iterations < LM_MAX_ITERATIONS {
        iterations += 1;
        let mut a = jtj;
        for k in 0..8 {
            a[(k, k)] += mu;
        }
        let Some(step) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
            mu *= 10.0;
            continue;
        };
        let x_new = x + step;
        let h_new = param.to_matrix(&x_new);
        let det = h_new.determinant();
        let g_new = if det.abs() > 1e-14 * h_new.norm().powi(3) { h_new.try_inverse() } else { None };
        let Some(g_new) = g_new else {
            singular = true;
            break;
        };
        let Some(res_new) = prob.residuals(&h_new, &g_new) else {
            mu *= 10.0;
            continue;
        };
        let cost_new = NormalizedProblem::cost(&res_new);
        if cost_new < cost {
            let rel = (cost - cost_new) / cost;
            x = x_new;
            h = h_new;
            g = g_new;
            res = res_new;
            cost = cost_new;
            improved = true;
            mu = (mu / 10.0).max(1e-300);
            if rel < LM_REL_TOLERANCE || cost / n as f64 <= 1e-12 {
                break;
            }
            (jtj, jtr) = prob.normal_equations(&param, &h, &g, &res);
        } else {
            mu *= 10.0;
            if !mu.is_finite() || mu > 1e30 * jtj.trace().max(1.0) {
                break;
            }
        }
    }

    if !improved {
        return Ok(unchanged(iterations, singular));
    }
    let refined = Homography::new(t2_inv * h * t1)?;
    let final_cost = total_transfer_error(&refined, matches);
    if final_cost < initial_cost {
        Ok(LmOutcome {
            homography: refined,
            initial_cost,
            final_cost,
            iterations,
            singular_fallback: singular,
        })
    } else {
        Ok(unchanged(iterations, singular))
    }
}

/// DLT initialization followed by LM refinement.
pub fn fit_homography(matches: &[FeatureMatch]) -> Result<Homography> {
    let init = estimate_homography_dlt(matches)?;
    Ok(refine_homography_lm(&init, matches)?.homography)
}

/// Analytic Jacobian of `p ↦ dehomogenize(H p̃)` at `at`.
pub fn homography_point_jacobian(h: &Homography, at: Point2) -> Result<Matrix2<f64>> {
    let m = h.matrix();
    let y = m * at.homogeneous();
    if y.z.abs() < MIN_PERSPECTIVE_W {
        return Err(Error::PointAtInfinity);
    }
    let (u, v) = (y.x / y.z, y.y / y.z);
    Ok(Matrix2::new(
        m[(0, 0)] - u * m[(2, 0)],
        m[(0, 1)] - u * m[(2, 1)],
        m[(1, 0)] - v * m[(2, 0)],
        m[(1, 1)] - v * m[(2, 1)],
    ) / y.z)
}

/// 4-DOF similarity `p ↦ s·R(θ)·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub angle: f64,
    pub translation: (f64, f64),
}

impl Similarity {
    pub fn identity() -> Self {
        Self { scale: 1.0, angle: 0.0, translation: (0.0, 0.0) }
    }

    pub fn linear(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(self.scale * c, -self.scale * s, self.scale * s, self.scale * c)
    }

    pub fn map(&self, p: Point2) -> Point2 {
        apply_linear(&self.linear(), p) + Point2::new(self.translation.0, self.translation.1)
    }

    /// The Jacobian is the constant linear part.
    pub fn jacobian(&self) -> Matrix2<f64> {
        self.linear()
    }

    pub fn to_homography(&self) -> Homography {
        let l = self.linear();
        Homography::from_rows([
            [l[(0, 0)], l[(0, 1)], self.translation.0],
            [l[(1, 0)], l[(1, 1)], self.translation.1],
            [0.0, 0.0, 1.0],
        ])
        .expect("similarity with positive scale is invertible")
    }
}

/// Closed-form least-squares similarity (complex-number Procrustes).
pub fn estimate_similarity(matches: &[FeatureMatch]) -> Result<Similarity> {
    let n = matches.len();
    if n < 2 {
        return Err(Error::InsufficientMatches { needed: 2, got: n });
    }
    let nf = n as f64;
    let (mut pc, mut qc) = (Point2::default(), Point2::default());
    for m in matches {
        pc = pc + m.target_pt;
        qc = qc + m.ref_pt;
    }
    pc = pc * (1.0 / nf);
    qc = qc * (1.0 / nf);
    // a = Σ conj(p) q / Σ |p|² over centered points
    let (mut re, mut im, mut den) = (0.0, 0.0, 0.0);
    for m in matches {
        let p = m.target_pt - pc;
        let q = m.ref_pt - qc;
        re += p.x * q.x + p.y * q.y;
        im += p.x * q.y - p.y * q.x;
        den += p.x * p.x + p.y * p.y;
    }
    let spread = matches
        .iter()
        .map(|m| (m.target_pt - pc).norm())
        .fold(0.0, f64::max);
    if den <= 0.0 || spread <= 1e-12 * (1.0 + pc.norm()) {
        return Err(Error::DegenerateConfiguration("all target points coincide".into()));
    }
    let (ar, ai) = (re / den, im / den);
    let scale = ar.hypot(ai);
    if scale <= 0.0 {
        return Err(Error::DegenerateConfiguration("zero-scale similarity".into()));
    }
    let t = Point2::new(qc.x - (ar * pc.x - ai * pc.y), qc.y - (ai * pc.x + ar * pc.y));
    Ok(Similarity { scale, angle: ai.atan2(ar), translation: (t.x, t.y) })
}

/// Default Sampson inlier threshold (pixels).
pub const DEFAULT_SAMPSON_EPS: f64 = 3.0;

/// Rank-2 epipolar constraint `p̃ᵀ F q̃ = 0` with `p` in the target and `q` in the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    pub m: Matrix3<f64>,
    pub inlier_threshold: f64,
}

impl FundamentalMatrix {
    pub fn with_threshold(mut self, eps: f64) -> Self {
        self.inlier_threshold = eps;
        self
    }

    /// First-order geometric (Sampson) distance in pixels.
    pub fn sampson_distance(&self, m: &FeatureMatch) -> f64 {
        let p = m.target_pt.homogeneous();
        let q = m.ref_pt.homogeneous();
        let fq = self.m * q;
        let ftp = self.m.transpose() * p;
        let r = p.dot(&fq);
        let den = fq.x * fq.x + fq.y * fq.y + ftp.x * ftp.x + ftp.y * ftp.y;
        if den <= 0.0 {
            return if r == 0.0 { 0.0 } else { f64::INFINITY };
        }
        r.abs() / den.sqrt()
    }
}

/// Normalized eight-point algorithm with singular-value rank-2 enforcement.
pub fn estimate_fundamental(matches: &[FeatureMatch]) -> Result<FundamentalMatrix> {
    let n = matches.len();
    if n < 8 {
        return Err(Error::InsufficientMatches { needed: 8, got: n });
    }
    let t1 = hartley_normalization(matches.iter().map(|m| m.target_pt));
    let t2 = hartley_normalization(matches.iter().map(|m| m.ref_pt));
    let mut a = DMatrix::<f64>::zeros(n, 9);
    for (i, m) in matches.iter().enumerate() {
        let p = transform(&t1, m.target_pt);
        let q = transform(&t2, m.ref_pt);
        a.row_mut(i).copy_from_slice(&[
            p.x * q.x,
            p.x * q.y,
            p.x,
            p.y * q.x,
            p.y * q.y,
            p.y,
            q.x,
            q.y,
            1.0,
        ]);
    }
    let (sv, f) = null_vector(a);
    if sv[0] <= 0.0 || sv[7] <= 0.0 || sv[0] / sv[7] > 1e12 {
        return Err(Error::DegenerateConfiguration(
            "ill-conditioned eight-point system".into(),
        ));
    }
    let fhat = Matrix3::from_row_slice(f.as_slice());
    let f = enforce_rank2(&(t1.transpose() * enforce_rank2(&fhat) * t2));
    let f = f / f.norm();
    Ok(FundamentalMatrix { m: f, inlier_threshold: DEFAULT_SAMPSON_EPS })
}

fn enforce_rank2(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut svd = m.svd(true, true);
    let min = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    svd.singular_values[min] = 0.0;
    svd.recompose().expect("U and V^T computed")
}

/// Eight-point estimate that tolerates contaminated input: seeded random
/// minimal samples vote by Sampson inlier count, and the winner is re-fit on
/// its consensus set until that set stops changing.
pub fn estimate_fundamental_robust(matches: &[FeatureMatch], eps: f64, seed: u64) -> Result<FundamentalMatrix> {
    use rand::seq::index::sample;
    use rand::SeedableRng;

    const CONFIDENCE: f64 = 0.995;
    const MAX_TRIALS: usize = 1000;
    let n = matches.len();
    if n < 8 {
        return Err(Error::InsufficientMatches { needed: 8, got: n });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<usize> = Vec::new();
    let (mut trial, mut needed) = (0, MAX_TRIALS);
    while trial < needed {
        trial += 1;
        let minimal: Vec<FeatureMatch> = sample(&mut rng, n, 8).iter().map(|i| matches[i]).collect();
        let Ok(f) = estimate_fundamental(&minimal) else { continue };
        let inliers = fundamental_inlier_indices(&f.with_threshold(eps), matches);
        if inliers.len() > best.len() {
            best = inliers;
            let w8 = (best.len() as f64 / n as f64).powi(8);
            needed = if w8 >= 1.0 {
                trial
            } else {
                let k = (1.0 - CONFIDENCE).ln() / (1.0 - w8).ln();
                if k.is_finite() { (k.ceil() as usize).clamp(trial, MAX_TRIALS) } else { MAX_TRIALS }
            };
        }
    }
    if best.len() < 8 {
        // every minimal sample was degenerate; let the plain estimator report why
        return estimate_fundamental(matches).map(|f| f.with_threshold(eps));
    }
    let mut f = estimate_fundamental(&best.iter().map(|&i| matches[i]).collect::<Vec<_>>())?.with_threshold(eps);
    for _ in 0..5 {
        let grown = fundamental_inlier_indices(&f, matches);
        if grown == best || grown.len() < 8 {
            break;
        }
        best = grown;
        f = estimate_fundamental(&best.iter().map(|&i| matches[i]).collect::<Vec<_>>())?.with_threshold(eps);
    }
    Ok(f)
}

/// Indices of matches whose Sampson distance is below the threshold.
pub fn fundamental_inlier_indices(f: &FundamentalMatrix, matches: &[FeatureMatch]) -> Vec<usize> {
    matches
        .iter()
        .enumerate()
        .filter(|(_, m)| f.sampson_distance(m) < f.inlier_threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn fundamental_inlier_filter(f: &FundamentalMatrix, matches: &MatchSet) -> Result<MatchSet> {
    let keep = fundamental_inlier_indices(f, matches);
    if keep.is_empty() {
        return Err(Error::EmptyResult);
    }
    matches.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_matches(h: &Homography, n: usize) -> Vec<FeatureMatch> {
        (0..n)
            .map(|i| {
                let p = Point2::new(
                    13.0 + 37.0 * (i % 7) as f64 + 0.3 * i as f64,
                    9.0 + 29.0 * (i / 7) as f64 + 0.7 * (i % 3) as f64,
                );
                FeatureMatch::new(p, h.map(p).unwrap())
            })
            .collect()
    }

    fn projective() -> Homography {
        Homography::from_rows([
            [1.02, 0.05, 12.0],
            [-0.03, 0.98, -7.5],
            [1.5e-4, -8.0e-5, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn dlt_identity_and_translation() {
        let sq = [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)];
        let ident: Vec<_> = sq
            .iter()
            .map(|&(x, y)| FeatureMatch::new(Point2::new(x, y), Point2::new(x, y)))
            .collect();
        let h = estimate_homography_dlt(&ident).unwrap();
        assert!(h.frobenius_distance(&Homography::identity()) < 1e-12);

        let shifted: Vec<_> = sq
            .iter()
            .map(|&(x, y)| FeatureMatch::new(Point2::new(x, y), Point2::new(x + 10.0, y + 5.0)))
            .collect();
        let h = estimate_homography_dlt(&shifted).unwrap();
        assert!(h.frobenius_distance(&Homography::translation(10.0, 5.0)) < 1e-12);
    }

    #[test]
    fn dlt_rejects_too_few_and_collinear() {
        let m = grid_matches(&Homography::identity(), 3);
        assert!(matches!(
            estimate_homography_dlt(&m),
            Err(Error::InsufficientMatches { needed: 4, got: 3 })
        ));
        let line: Vec<_> = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)]
            .iter()
            .map(|&(x, y)| FeatureMatch::new(Point2::new(x, y), Point2::new(x, y)))
            .collect();
        assert!(matches!(
            estimate_homography_dlt(&line),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn dlt_recovers_projective_map() {
        let gt = projective();
        let h = estimate_homography_dlt(&grid_matches(&gt, 6)).unwrap();
        let max_dev = (h.matrix() - gt.matrix()).amax();
        assert!(max_dev < 1e-9, "deviation {max_dev}");
    }

    #[test]
    fn ste_examples() {
        let id = Homography::identity();
        let m = FeatureMatch::new(Point2::new(3.0, 4.0), Point2::new(3.0, 4.0));
        assert_eq!(symmetric_transfer_error(&id, &m), 0.0);
        let m = FeatureMatch::new(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0));
        assert_eq!(symmetric_transfer_error(&id, &m), 10.0);
        let t = Homography::translation(10.0, 0.0);
        let m = FeatureMatch::new(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        assert!((symmetric_transfer_error(&t, &m) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn ste_at_infinity_is_infinite() {
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        let m = FeatureMatch::new(Point2::new(-1.0, 3.0), Point2::new(1.0, 1.0));
        assert_eq!(symmetric_transfer_error(&h, &m), f64::INFINITY);
    }

    #[test]
    fn lm_keeps_exact_solution() {
        let gt = projective();
        let matches = grid_matches(&gt, 20);
        let out = refine_homography_lm(&gt, &matches).unwrap();
        assert_eq!(out.homography, gt);
    }

    #[test]
    fn lm_converges_from_perturbation() {
        let gt = projective();
        let matches = grid_matches(&gt, 50);
        let mut m = *gt.matrix();
        for (k, v) in m.iter_mut().enumerate() {
            *v *= 1.0 + 0.01 * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let init = Homography::new(m).unwrap();
        let out = refine_homography_lm(&init, &matches).unwrap();
        assert!(out.final_cost < out.initial_cost);
        assert!(out.final_cost / 50.0 < 1e-6, "mean STE {}", out.final_cost / 50.0);
    }

    #[test]
    fn similarity_exact_classes() {
        let rot = Similarity { scale: 1.0, angle: std::f64::consts::FRAC_PI_6, translation: (0.0, 0.0) };
        let pts = [(10.0, 3.0), (-4.0, 8.0), (7.0, -12.0)];
        let m: Vec<_> = pts
            .iter()
            .map(|&(x, y)| FeatureMatch::new(Point2::new(x, y), rot.map(Point2::new(x, y))))
            .collect();
        let s = estimate_similarity(&m).unwrap();
        assert!((s.angle - std::f64::consts::FRAC_PI_6).abs() < 1e-9);
        assert!((s.scale - 1.0).abs() < 1e-12);

        let m: Vec<_> = pts
            .iter()
            .map(|&(x, y)| {
                FeatureMatch::new(Point2::new(x, y), Point2::new(2.0 * x + 5.0, 2.0 * y - 3.0))
            })
            .collect();
        let s = estimate_similarity(&m).unwrap();
        assert!((s.scale - 2.0).abs() < 1e-12 && s.angle.abs() < 1e-12);
        assert!((s.translation.0 - 5.0).abs() < 1e-10 && (s.translation.1 + 3.0).abs() < 1e-10);
    }

    #[test]
    fn similarity_rejects_coincident_points() {
        let p = Point2::new(4.0, 4.0);
        let m = vec![
            FeatureMatch::new(p, Point2::new(0.0, 0.0)),
            FeatureMatch::new(p, Point2::new(1.0, 0.0)),
        ];
        assert!(matches!(estimate_similarity(&m), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn jacobian_trivial_cases() {
        let j = homography_point_jacobian(&Homography::identity(), Point2::new(5.0, -3.0)).unwrap();
        assert!((j - Matrix2::identity()).amax() < 1e-15);
        let a = Homography::from_rows([[2.0, 0.5, 3.0], [-0.25, 1.5, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        let m = a.matrix();
        let expect = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]) / m[(2, 2)];
        for p in [Point2::new(0.0, 0.0), Point2::new(100.0, -40.0)] {
            let j = homography_point_jacobian(&a, p).unwrap();
            assert!((j - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn fundamental_needs_eight() {
        let m = grid_matches(&Homography::identity(), 7);
        assert!(matches!(
            estimate_fundamental(&m),
            Err(Error::InsufficientMatches { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let h = projective();
        let again = Homography::new(*h.matrix()).unwrap();
        assert_eq!(h.matrix(), again.matrix());
    }

    #[test]
    fn matchset_rejects_duplicates() {
        let m = FeatureMatch::new(Point2::new(1.0, 2.0), Point2::new(3.0, 4.0));
        assert!(MatchSet::new(vec![m, m]).is_err());
        assert!(MatchSet::new(vec![]).is_err());
    }
}
