use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parastitch::image::Image;
use parastitch::matchfile::read_matches;
use parastitch::metrics::{evaluate, MetricReport};
use parastitch::segmentation::load_label_map;
use parastitch::stitch::{stitch, StitchConfig};
use parastitch::synthscene::SCENE_FILES;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parastitch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, preset: &str) -> PathBuf {
    let scene = dir.join(preset);
    let out = run(&["synth", "--preset", preset, "--out-dir", p(&scene)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    scene
}

fn stitch_args<'a>(scene: &'a Path, out: &'a Path) -> Vec<String> {
    let f = |n: &str| scene.join(n).to_string_lossy().into_owned();
    vec![
        "stitch".into(),
        "--target".into(),
        f("target.png"),
        "--reference".into(),
        f("reference.png"),
        "--labels".into(),
        f("labels.png"),
        "--matches".into(),
        f("matches.txt"),
        "--out-dir".into(),
        out.to_string_lossy().into_owned(),
    ]
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn synthetic_scene_stitches_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "parallax");
    for name in SCENE_FILES {
        assert!(scene.join(name).is_file(), "{name} missing");
    }
    assert_eq!(std::fs::read_dir(&scene).unwrap().count(), 6);
    let out_dir = dir.path().join("out");
    let out = bin().args(stitch_args(&scene, &out_dir)).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["panorama.png", "warped_target.png", "ownership.png", "report.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let psnr = report(&out_dir)["metrics"]["psnr"].as_f64().unwrap();
    assert!(psnr >= 30.0, "psnr {psnr}");
    assert_eq!(report(&out_dir)["config"]["lambda"].as_f64(), Some(20.0));
}

#[test]
fn cli_matches_library_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "two-plane");
    let out_dir = dir.path().join("out");
    let mut args = stitch_args(&scene, &out_dir);
    args.extend(["--lambda", "15", "--ablation", "no-error-buffer"].map(String::from));
    assert_eq!(code(&bin().args(&args).output().unwrap()), 0);

    let target = Image::load(&scene.join("target.png")).unwrap();
    let reference = Image::load(&scene.join("reference.png")).unwrap();
    let labels = load_label_map(&scene.join("labels.png"), target.dims()).unwrap();
    let matches = read_matches(&scene.join("matches.txt")).unwrap();
    let mut config = StitchConfig { lambda: 15.0, ..StitchConfig::default() };
    config.ablation.disable_error_buffer = true;
    let lib = stitch(&target, &reference, &labels, &matches, &config).unwrap();
    assert_eq!(std::fs::read_to_string(out_dir.join("report.json")).unwrap(), lib.report.to_json());
    assert_eq!(Image::load(&out_dir.join("panorama.png")).unwrap(), lib.panorama);

    // eval on the written images reproduces the report's metrics exactly
    let warped = out_dir.join("warped_target.png");
    let reference_canvas = out_dir.join("reference_canvas.png");
    let out = run(&["eval", p(&warped), p(&reference_canvas), "--json"]);
    assert_eq!(code(&out), 0);
    let cli: MetricReport = serde_json::from_slice(&out.stdout).unwrap();
    let lib_eval = evaluate(&Image::load(&warped).unwrap(), &Image::load(&reference_canvas).unwrap()).unwrap();
    assert_eq!(cli.psnr.to_bits(), lib_eval.psnr.to_bits());
    assert_eq!(cli.ssim.to_bits(), lib_eval.ssim.to_bits());
    assert_eq!(cli, lib.report.metrics.unwrap());
}

#[test]
fn missing_matches_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "two-plane");
    std::fs::remove_file(scene.join("matches.txt")).unwrap();
    let out = bin().args(stitch_args(&scene, &dir.path().join("out"))).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn alignment_without_overlap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "identity");
    // a sub-pixel square spread over the whole reference leaves no pixel centre inside it
    std::fs::write(scene.join("matches.txt"), "0.2 0.2 0 0\n0.8 0.2 319 0\n0.2 0.8 0 239\n0.8 0.8 319 239\n").unwrap();
    let out = bin().args(stitch_args(&scene, &dir.path().join("out"))).output().unwrap();
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn three_matches_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "identity");
    std::fs::write(scene.join("matches.txt"), "# too few\n1 1 1 1\n50 9 50 9\n9 70 9 70\n").unwrap();
    let out = bin().args(stitch_args(&scene, &dir.path().join("out"))).output().unwrap();
    assert_eq!(code(&out), 3);
    let fit = run(&["fit", "--matches", p(&scene.join("matches.txt")), "--labels", p(&scene.join("labels.png"))]);
    assert_eq!(code(&fit), 3);
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&run(&["synth", "--preset", "three-plane", "--seed", "9", "--out-dir", p(d)])), 0);
    }
    for name in SCENE_FILES {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"width": 0}"#).unwrap();
    let out = run(&["synth", "--spec", p(&spec), "--out-dir", p(&dir.path().join("s"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec"));
    let out = run(&["synth", "--preset", "nope", "--out-dir", p(&dir.path().join("s"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "identity");
    let mut args = stitch_args(&scene, &dir.path().join("out"));
    args.extend(["--ablation", "bogus"].map(String::from));
    assert_eq!(code(&bin().args(&args).output().unwrap()), 2);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lambda = -1\n").unwrap();
    let mut args = stitch_args(&scene, &dir.path().join("out"));
    args.extend(["--config".to_string(), p(&cfg).to_string()]);
    assert_eq!(code(&bin().args(&args).output().unwrap()), 2);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "identity");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tuned\nlambda = 5\nbeta = 3\nblend = constant\n").unwrap();
    let out_dir = dir.path().join("out");
    let mut args = stitch_args(&scene, &out_dir);
    args.extend(["--config", p(&cfg), "--beta", "4"].map(String::from));
    assert_eq!(code(&bin().args(&args).output().unwrap()), 0);
    let c = &report(&out_dir)["config"];
    assert_eq!((c["lambda"].as_f64(), c["beta"].as_f64(), c["blend"].as_str()), (Some(5.0), Some(4.0), Some("constant")));
}

#[test]
fn eval_identical_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let a = Image::from_fn(40, 30, |x, y| [(x * 5) as u8, (y * 7) as u8, 90]);
    let pa = dir.path().join("a.png");
    a.save_rgba(&pa).unwrap();
    let out = run(&["eval", p(&pa), p(&pa), "--json"]);
    assert_eq!(code(&out), 0);
    let m: MetricReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((m.psnr, m.ssim, m.evaluated_pixels), (99.0, 1.0, 1200));

    let mut left = a.clone();
    let mut right = a.clone();
    for y in 0..30 {
        for x in 0..40 {
            left.set(x, y, a.get(x, y), x < 20);
            right.set(x, y, a.get(x, y), x >= 20);
        }
    }
    let (pl, pr) = (dir.path().join("l.png"), dir.path().join("r.png"));
    left.save_rgba(&pl).unwrap();
    right.save_rgba(&pr).unwrap();
    assert_eq!(code(&run(&["eval", p(&pl), p(&pr)])), 4);
}

#[test]
fn fit_reports_one_model_for_one_plane() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "identity");
    let out = dir.path().join("fit.json");
    let res = run(&[
        "fit",
        "--matches",
        p(&scene.join("matches.txt")),
        "--labels",
        p(&scene.join("labels.png")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["models"].as_array().unwrap().len(), 1);
    assert_eq!(v["labels"].as_array().unwrap().len(), 60);
    assert!(String::from_utf8_lossy(&res.stdout).contains("energy"));
}

#[test]
fn fit_finds_three_planes_with_monotone_energy() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "three-plane");
    let out = dir.path().join("fit.json");
    let res = run(&[
        "fit",
        "--matches",
        p(&scene.join("matches.txt")),
        "--labels",
        p(&scene.join("labels.png")),
        "--ref-size",
        "640x480",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&res), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["models"].as_array().unwrap().len(), 3);
    let history: Vec<f64> = v["energy_history"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect();
    assert!(history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), "two-plane");
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("out{threads}"));
        let out = bin().args(stitch_args(&scene, &out_dir)).env("PARASTITCH_THREADS", threads).output().unwrap();
        assert_eq!(code(&out), 0);
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
