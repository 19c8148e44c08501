use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parastitch::image::Image;
use parastitch::matchfile::read_matches;
use parastitch::metrics::evaluate;
use parastitch::segmentation::load_label_map;
use parastitch::stitch::{ownership_image, run_fit_stage, stitch, StitchConfig};
use parastitch::synthscene::{generate, SceneSpec};
use parastitch::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "parastitch", version, about = "Parallax-tolerant two-image stitching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warp the target onto the reference and blend.
    Stitch {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// 16-bit grayscale label map of the target.
        #[arg(long)]
        labels: PathBuf,
        /// Text file with one `x_t y_t x_r y_r` per line.
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a synthetic scene with known geometry.
    Synth {
        /// two-plane, three-plane, parallax, interleaved or identity.
        #[arg(long, default_value = "two-plane", conflicts_with = "spec")]
        preset: String,
        /// JSON scene spec instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's texture and sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "scene")]
        out_dir: PathBuf,
    },
    /// PSNR and SSIM on the pixels both images cover (alpha > 0).
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Fit the homography set only.
    Fit {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Reference size as WxH; defaults to the label map's size.
        #[arg(long, value_parser = parse_size)]
        ref_size: Option<(u32, u32)>,
        #[arg(long, default_value = "fit.json")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` lines or a JSON object; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    min_remaining: Option<usize>,
    #[arg(long)]
    ransac_threshold: Option<f64>,
    #[arg(long)]
    sampson_eps: Option<f64>,
    #[arg(long)]
    cell_size: Option<u32>,
    #[arg(long)]
    r1: Option<usize>,
    #[arg(long)]
    r2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// feather or constant.
    #[arg(long)]
    blend: Option<String>,
    /// h0, no-sam-neighborhood, no-error-buffer or single-homography; repeatable.
    #[arg(long)]
    ablation: Vec<String>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let dim = |v: &str| v.trim().parse::<u32>().map_err(|e| e.to_string());
    Ok((dim(w)?, dim(h)?))
}

impl ConfigArgs {
    fn resolve(&self) -> parastitch::Result<StitchConfig> {
        let mut config = StitchConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            if text.trim_start().starts_with('{') {
                config = serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            } else {
                config.apply_text(&text)?;
            }
        }
        let numbers = [
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("nu", self.nu.map(|v| v.to_string())),
            ("min_remaining", self.min_remaining.map(|v| v.to_string())),
            ("ransac_threshold", self.ransac_threshold.map(|v| v.to_string())),
            ("sampson_eps", self.sampson_eps.map(|v| v.to_string())),
            ("cell_size", self.cell_size.map(|v| v.to_string())),
            ("r1", self.r1.map(|v| v.to_string())),
            ("r2", self.r2.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("blend", self.blend.clone()),
        ];
        for (key, value) in numbers {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        for name in &self.ablation {
            config.ablation.enable(name)?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Process exit status for each error class.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::Decode(_)
        | Error::InvalidSpec(_)
        | Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::OutOfBounds { .. } => 2,
        Error::InsufficientMatches { .. } | Error::NoModelFound | Error::DegenerateConfiguration(_) => 3,
        Error::EmptyOverlap => 4,
        _ => 1,
    }
}

const FALLBACK_EXIT: u8 = 3;

fn run_stitch(
    target: &Path,
    reference: &Path,
    labels: &Path,
    matches: &Path,
    out_dir: &Path,
    config: &ConfigArgs,
) -> parastitch::Result<u8> {
    let config = config.resolve()?;
    let target = Image::load(target)?;
    let reference = Image::load(reference)?;
    let labels = load_label_map(labels, target.dims())?;
    let matches = read_matches(matches)?;
    let out = stitch(&target, &reference, &labels, &matches, &config)?;
    std::fs::create_dir_all(out_dir)?;
    out.panorama.save_rgba(&out_dir.join("panorama.png"))?;
    out.warped_target.save_rgba(&out_dir.join("warped_target.png"))?;
    out.reference_canvas.save_rgba(&out_dir.join("reference_canvas.png"))?;
    ownership_image(&out).save_rgba(&out_dir.join("ownership.png"))?;
    std::fs::write(out_dir.join("report.json"), out.report.to_json())?;
    for w in &out.report.warnings {
        log::warn!("{w}");
    }
    match out.report.metrics {
        Some(m) => println!("{m}"),
        None => println!("no mutual coverage to evaluate"),
    }
    if out.report.fallback_single_homography {
        log::warn!("no homography model survived fitting; the global homography was used");
        return Ok(FALLBACK_EXIT);
    }
    Ok(0)
}

fn run_synth(preset: &str, spec: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> parastitch::Result<u8> {
    let mut spec = match spec {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?,
        None => SceneSpec::preset(preset)?,
    };
    if let Some(s) = seed {
        spec.texture_seed = s;
    }
    let scene = generate(&spec)?;
    scene.write_files(&spec, out_dir)?;
    println!(
        "{} matches ({} injected outliers) written to {}",
        scene.matches.len(),
        scene.gt.outlier_count(),
        out_dir.display()
    );
    Ok(0)
}

fn run_eval(a: &Path, b: &Path, json: bool) -> parastitch::Result<u8> {
    let report = evaluate(&Image::load(a)?, &Image::load(b)?)?;
    if json {
        println!("{}", serde_json::to_string(&report).expect("metric report serializes"));
    } else {
        println!("{report}");
    }
    Ok(0)
}

#[derive(Serialize)]
struct FitOutput {
    /// Row-major, canonical scale; label `k` is entry `k - 1`.
    models: Vec<[f64; 9]>,
    /// One label per input match, 0 for outliers and for matches the epipolar filter removed.
    labels: Vec<usize>,
    epipolar_rejected: Vec<usize>,
    energy: parastitch::multifit::EnergyBreakdown,
    energy_history: Vec<f64>,
    fallback_single_homography: bool,
}

fn run_fit(
    matches: &Path,
    labels: &Path,
    ref_size: Option<(u32, u32)>,
    out: &Path,
    config: &ConfigArgs,
) -> parastitch::Result<u8> {
    let config = config.resolve()?;
    let matches = read_matches(matches)?;
    let raw = parastitch::image::load_gray16(labels)?;
    let labels = load_label_map(labels, (raw.0, raw.1))?;
    let stage = run_fit_stage(&labels, &matches, ref_size.unwrap_or((raw.0, raw.1)), &config)?;
    let mut per_match = vec![0; matches.len()];
    for (k, &i) in stage.kept.iter().enumerate() {
        per_match[i] = stage.assignment.labels[k];
    }
    let kept: std::collections::BTreeSet<usize> = stage.kept.iter().copied().collect();
    let result = FitOutput {
        models: stage.models.models.iter().map(|h| h.to_row_major()).collect(),
        labels: per_match,
        epipolar_rejected: (0..matches.len()).filter(|i| !kept.contains(i)).collect(),
        energy: stage.energy,
        energy_history: stage.history.clone(),
        fallback_single_homography: stage.fallback,
    };
    std::fs::write(out, serde_json::to_string_pretty(&result).expect("fit output serializes"))?;
    let e = stage.energy;
    println!(
        "{} models  energy {:.4} (data {:.4}, smooth {:.4}, label {:.4})",
        stage.models.len(),
        e.total,
        e.data,
        e.smooth,
        e.label_cost
    );
    Ok(if stage.fallback { FALLBACK_EXIT } else { 0 })
}

fn init_threads() {
    let Ok(v) = std::env::var("PARASTITCH_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring PARASTITCH_THREADS={v}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stitch { target, reference, labels, matches, out_dir, config } => {
            run_stitch(target, reference, labels, matches, out_dir, config)
        }
        Command::Synth { preset, spec, seed, out_dir } => run_synth(preset, spec.as_deref(), *seed, out_dir),
        Command::Eval { a, b, json } => run_eval(a, b, *json),
        Command::Fit { matches, labels, ref_size, out, config } => run_fit(matches, labels, *ref_size, out, config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
