//! The full two-image pipeline and its run configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    estimate_fundamental_robust, estimate_similarity, fundamental_inlier_indices, FeatureMatch, Homography, MatchSet,
    Similarity, DEFAULT_SAMPSON_EPS,
};
use crate::image::Image;
use crate::labeling::{
    build_nonoverlap_mesh, global_homography, label_overlap_contents, sample_anchors, select_similarity,
    AnchorConfig, NonOverlapMesh, OverlapLabeling, DEFAULT_ANCHORS, DEFAULT_CELL_SIZE, DEFAULT_NU,
};
use crate::metrics::{evaluate, MetricReport};
use crate::multifit::{
    assign_by_data, build_neighborhood, build_neighborhood_delaunay_only, energy, fit_from_models, init_models_with,
    Assignment, EnergyBreakdown, EnergyParams, ModelSet, NeighborGraph, RansacOptions,
};
use crate::segmentation::{
    assign_points_to_contents, compute_overlap, normalize_partition_with, ContentPartition, LabelMap, OverlapMask,
    DEFAULT_MIN_CONTENT_AREA,
};
use crate::warping::{
    backward_render, blend_linear, compute_canvas, forward_claim, reference_on_canvas, BlendMode, Canvas,
    ErrorBuffer, WarpReport,
};

/// Switches that disable parts of the method for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    /// Keep the sequential-RANSAC models without energy minimization.
    pub use_initial_models: bool,
    /// Plain Delaunay neighborhood, ignoring contents and the overlap.
    pub neighborhood_no_sam: bool,
    /// Last-writer-wins instead of the error buffer.
    pub disable_error_buffer: bool,
    /// Warp the whole overlap with the global homography alone.
    pub single_homography: bool,
}

impl Ablation {
    /// Accepts `h0`, `no-sam-neighborhood`, `no-error-buffer` and `single-homography`.
    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "h0" => self.use_initial_models = true,
            "no-sam-neighborhood" => self.neighborhood_no_sam = true,
            "no-error-buffer" => self.disable_error_buffer = true,
            "single-homography" => self.single_homography = true,
            other => return Err(Error::InvalidConfig(format!("unknown ablation '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchConfig {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub min_remaining: usize,
    /// Sequential-RANSAC inlier threshold on the symmetric transfer error.
    pub ransac_threshold: f64,
    /// Sampson distance threshold of the epipolar filter.
    pub sampson_eps: f64,
    /// Student's-t degrees of freedom for anchor weights.
    pub nu: f64,
    pub cell_size: u32,
    /// Anchors on the overlap seam.
    pub r1: usize,
    /// Anchors on the outer border of the non-overlap region.
    pub r2: usize,
    pub seed: u64,
    pub blend: BlendMode,
    pub min_content_area: usize,
    pub ablation: Ablation,
}

impl Default for StitchConfig {
    fn default() -> Self {
        let e = EnergyParams::default();
        Self {
            lambda: e.lambda,
            beta: e.beta,
            gamma: e.gamma,
            min_remaining: e.min_remaining,
            ransac_threshold: RansacOptions::default().threshold,
            sampson_eps: DEFAULT_SAMPSON_EPS,
            nu: DEFAULT_NU,
            cell_size: DEFAULT_CELL_SIZE,
            r1: DEFAULT_ANCHORS,
            r2: DEFAULT_ANCHORS,
            seed: 0,
            blend: BlendMode::Feather,
            min_content_area: DEFAULT_MIN_CONTENT_AREA,
            ablation: Ablation::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("invalid value '{value}' for {key}")))
}

impl StitchConfig {
    pub fn energy_params(&self) -> EnergyParams {
        EnergyParams { lambda: self.lambda, beta: self.beta, gamma: self.gamma, min_remaining: self.min_remaining }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [("lambda", self.lambda), ("beta", self.beta), ("gamma", self.gamma)];
        if let Some((k, _)) = nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(format!("{k} must be a finite non-negative number")));
        }
        let positive = [("ransac_threshold", self.ransac_threshold), ("sampson_eps", self.sampson_eps), ("nu", self.nu)];
        if let Some((k, _)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(format!("{k} must be a finite positive number")));
        }
        if self.min_remaining == 0 || self.cell_size == 0 || self.r1 == 0 || self.r2 == 0 {
            return Err(Error::InvalidConfig("min_remaining, cell_size, r1 and r2 must be positive".into()));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let flag = |v: &str| parse::<bool>(key, v);
        match key {
            "lambda" => self.lambda = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "min_remaining" => self.min_remaining = parse(key, value)?,
            "ransac_threshold" => self.ransac_threshold = parse(key, value)?,
            "sampson_eps" => self.sampson_eps = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "cell_size" => self.cell_size = parse(key, value)?,
            "r1" => self.r1 = parse(key, value)?,
            "r2" => self.r2 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "blend" => self.blend = value.parse()?,
            "min_content_area" => self.min_content_area = parse(key, value)?,
            "use_initial_models" => self.ablation.use_initial_models = flag(value)?,
            "neighborhood_no_sam" => self.ablation.neighborhood_no_sam = flag(value)?,
            "disable_error_buffer" => self.ablation.disable_error_buffer = flag(value)?,
            "single_homography" => self.ablation.single_homography = flag(value)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies flat `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

/// Everything up to and including the multi-homography fit.
#[derive(Debug, Clone)]
pub struct FitStage {
    /// Matches surviving the epipolar filter.
    pub matches: MatchSet,
    /// Their indices in the input set.
    pub kept: Vec<usize>,
    pub fundamental_filter_applied: bool,
    pub global_h: Homography,
    pub partition: ContentPartition,
    pub overlap: OverlapMask,
    pub graph: NeighborGraph,
    pub models: ModelSet,
    /// Labels of the filtered matches, 0 = outlier.
    pub assignment: Assignment,
    pub energy: EnergyBreakdown,
    /// Non-increasing total energy per accepted outer iteration.
    pub history: Vec<f64>,
    pub outer_iterations: usize,
    /// The global homography stands in because no model could be fitted.
    pub fallback: bool,
    pub warnings: Vec<String>,
}

/// Epipolar filtering. Configurations the fundamental matrix cannot
/// describe (too few matches, a single plane) pass through unfiltered.
fn epipolar_filter(matches: &MatchSet, config: &StitchConfig, warnings: &mut Vec<String>) -> Result<(MatchSet, Vec<usize>, bool)> {
    let all: Vec<usize> = (0..matches.len()).collect();
    match estimate_fundamental_robust(matches, config.sampson_eps, config.seed) {
        Ok(f) => {
            let kept = fundamental_inlier_indices(&f, matches);
            if kept.len() < 4 {
                warnings.push(format!("epipolar filter kept only {} matches; skipped", kept.len()));
                return Ok((matches.clone(), all, false));
            }
            Ok((matches.select(&kept)?, kept, true))
        }
        Err(e @ (Error::DegenerateConfiguration(_) | Error::InsufficientMatches { .. })) => {
            warnings.push(format!("epipolar filter skipped: {e}"));
            Ok((matches.clone(), all, false))
        }
        Err(e) => Err(e),
    }
}

/// Filters the matches, builds the overlap and fits the homography set.
pub fn run_fit_stage(labels: &LabelMap, matches: &MatchSet, ref_dims: (u32, u32), config: &StitchConfig) -> Result<FitStage> {
    config.validate()?;
    let mut warnings = Vec::new();
    let (filtered, kept, applied) = epipolar_filter(matches, config, &mut warnings)?;
    let pts: &[FeatureMatch] = &filtered;
    let global_h = global_homography(pts)?;
    let partition = normalize_partition_with(labels, config.min_content_area);
    let overlap = compute_overlap(&partition, &global_h, ref_dims)?;
    let graph = if config.ablation.neighborhood_no_sam {
        build_neighborhood_delaunay_only(pts)?
    } else {
        build_neighborhood(pts, &assign_points_to_contents(&partition, pts), &overlap)?
    };
    let params = config.energy_params();
    let single = |warnings: &mut Vec<String>, why: &str| {
        warnings.push(format!("{why}; using the global homography alone"));
        let models = ModelSet::new(vec![global_h]);
        let assignment = assign_by_data(&models, pts, &params);
        (models, assignment)
    };

    let mut fallback = false;
    let mut history = Vec::new();
    let mut outer_iterations = 0;
    let (models, assignment) = if config.ablation.single_homography {
        let models = ModelSet::new(vec![global_h]);
        let assignment = assign_by_data(&models, pts, &params);
        (models, assignment)
    } else {
        let opts = RansacOptions { threshold: config.ransac_threshold, ..RansacOptions::default() };
        match init_models_with(pts, &params, &opts, config.seed) {
            Err(Error::NoModelFound) => {
                fallback = true;
                single(&mut warnings, "sequential RANSAC found no model")
            }
            Err(e) => return Err(e),
            Ok(initial) if config.ablation.use_initial_models => {
                let assignment = assign_by_data(&initial, pts, &params);
                (initial, assignment)
            }
            Ok(initial) => match fit_from_models(initial, pts, &graph, &params) {
                Ok(fit) => {
                    history = fit.history;
                    outer_iterations = fit.outer_iterations;
                    (fit.models, fit.assignment)
                }
                Err(Error::NoModelFound) => {
                    fallback = true;
                    single(&mut warnings, "energy minimization removed every model")
                }
                Err(e) => return Err(e),
            },
        }
    };
    let energy = energy(&models, &assignment, &graph, pts, &params);
    if history.is_empty() {
        history.push(energy.total);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(FitStage {
        matches: filtered,
        kept,
        fundamental_filter_applied: applied,
        global_h,
        partition,
        overlap,
        graph,
        models,
        assignment,
        energy,
        history,
        outer_iterations,
        fallback,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshSummary {
    pub cell_size: u32,
    pub cols: usize,
    pub rows: usize,
    pub active_cells: usize,
}

/// Machine-readable record of one run. Holds no timings, so equal inputs
/// produce byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StitchReport {
    pub config: StitchConfig,
    pub input_matches: usize,
    pub filtered_matches: usize,
    pub fundamental_filter_applied: bool,
    pub fallback_single_homography: bool,
    pub warnings: Vec<String>,
    pub global_homography: [f64; 9],
    /// Row-major, canonical scale; label `k` is entry `k - 1`.
    pub models: Vec<[f64; 9]>,
    pub energy: EnergyBreakdown,
    pub energy_history: Vec<f64>,
    pub outer_iterations: usize,
    pub contents: usize,
    pub overlap_contents: usize,
    pub overlap_pixels: usize,
    pub content_labels: BTreeMap<u32, usize>,
    /// `None` for contents that sampled nothing and inherited a label.
    pub content_errors: BTreeMap<u32, Option<f64>>,
    pub similarity: Similarity,
    pub mesh: Option<MeshSummary>,
    pub canvas: Canvas,
    pub warp: WarpReport,
    pub metrics: Option<MetricReport>,
    pub lpips: &'static str,
}

impl StitchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are always serializable")
    }
}

#[derive(Debug, Clone)]
pub struct StitchOutput {
    pub panorama: Image,
    pub warped_target: Image,
    pub reference_canvas: Image,
    pub buffer: ErrorBuffer,
    pub canvas: Canvas,
    pub labeling: OverlapLabeling,
    pub mesh: Option<NonOverlapMesh>,
    pub fit: FitStage,
    pub report: StitchReport,
}

fn similarity_for(fit: &FitStage, warnings: &mut Vec<String>) -> Result<Similarity> {
    match select_similarity(&fit.models, &fit.assignment, &fit.matches) {
        Ok(s) => Ok(s),
        Err(Error::DegenerateConfiguration(why)) => {
            warnings.push(format!("similarity from all matches ({why})"));
            estimate_similarity(&fit.matches)
        }
        Err(e) => Err(e),
    }
}

/// Stitches `target` onto `reference`.
pub fn stitch(target: &Image, reference: &Image, labels: &LabelMap, matches: &MatchSet, config: &StitchConfig) -> Result<StitchOutput> {
    if (labels.width, labels.height) != target.dims() {
        return Err(Error::DimensionMismatch { expected: target.dims(), got: (labels.width, labels.height) });
    }
    matches.check_bounds(target.dims(), reference.dims())?;
    let fit = run_fit_stage(labels, matches, reference.dims(), config)?;
    let mut warnings = fit.warnings.clone();
    let overlap = &fit.overlap;
    let labeling = label_overlap_contents(overlap, &fit.models, target, reference)?;
    let similarity = similarity_for(&fit, &mut warnings)?;

    let anchor_config = AnchorConfig { r1: config.r1, r2: config.r2, nu: config.nu };
    let mesh = match sample_anchors(overlap, &labeling, similarity, &anchor_config) {
        Ok(anchors) => Some(build_nonoverlap_mesh(overlap, &labeling, &anchors, config.cell_size)?),
        Err(Error::EmptyRegion(why)) => {
            log::info!("no non-overlap mesh: {why}");
            None
        }
        Err(e) => return Err(e),
    };

    let canvas = compute_canvas(reference.dims(), overlap, &labeling, mesh.as_ref())?;
    let (buffer, mut warp) = forward_claim(&labeling, overlap, &canvas, !config.ablation.disable_error_buffer);
    let (warped_target, mesh_pixels) = backward_render(&buffer, &labeling, mesh.as_ref(), overlap, target, &canvas)?;
    warp.mesh_pixels = mesh_pixels;
    let reference_canvas = reference_on_canvas(reference, &canvas);
    let panorama = blend_linear(&warped_target, &reference_canvas, config.blend)?;
    let metrics = match evaluate(&warped_target, &reference_canvas) {
        Ok(m) => Some(m),
        Err(Error::EmptyOverlap) => {
            warnings.push("warped images share no full evaluation window; metrics omitted".into());
            None
        }
        Err(e) => return Err(e),
    };

    let report = StitchReport {
        config: config.clone(),
        input_matches: matches.len(),
        filtered_matches: fit.matches.len(),
        fundamental_filter_applied: fit.fundamental_filter_applied,
        fallback_single_homography: fit.fallback,
        warnings,
        global_homography: fit.global_h.to_row_major(),
        models: fit.models.models.iter().map(Homography::to_row_major).collect(),
        energy: fit.energy,
        energy_history: fit.history.clone(),
        outer_iterations: fit.outer_iterations,
        contents: fit.partition.count(),
        overlap_contents: overlap.overlap_contents.len(),
        overlap_pixels: overlap.overlap_pixel_count(),
        content_labels: labeling.content_label.clone(),
        content_errors: labeling.content_error.iter().map(|(&k, &v)| (k, v.is_finite().then_some(v))).collect(),
        similarity,
        mesh: mesh.as_ref().map(|m| MeshSummary {
            cell_size: m.cell_size,
            cols: m.cols,
            rows: m.rows,
            active_cells: m.cells.len(),
        }),
        canvas,
        warp,
        metrics,
        lpips: "not computed (requires a pretrained network)",
    };
    Ok(StitchOutput { panorama, warped_target, reference_canvas, buffer, canvas, labeling, mesh, fit, report })
}

/// Distinct, deterministic color for a model label.
pub fn label_color(label: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
    ];
    if label == 0 {
        return [0, 0, 0];
    }
    PALETTE[(label - 1) % PALETTE.len()]
}

/// Canvas colored by the model owning each overlap pixel; mesh-rendered
/// pixels are light gray and reference-only pixels dark gray.
pub fn ownership_image(out: &StitchOutput) -> Image {
    let (w, h) = (out.canvas.width, out.canvas.height);
    let mut img = Image::new(w, h, false);
    for cy in 0..h {
        for cx in 0..w {
            let color = match out.buffer.owner_at(cx, cy) {
                Some(id) => Some(label_color(out.labeling.content_label.get(&id).copied().unwrap_or(0))),
                None if out.warped_target.covered(cx, cy) => Some([200, 200, 200]),
                None if out.reference_canvas.covered(cx, cy) => Some([60, 60, 60]),
                None => None,
            };
            if let Some(c) = color {
                img.set(cx, cy, c, true);
            }
        }
    }
    img
}
