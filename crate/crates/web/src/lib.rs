//! Browser bindings: synthesize a scene, fit its matches, stitch it.
//!
//! The plain-Rust functions below carry the logic so they can be tested
//! natively; the `#[wasm_bindgen]` layer only converts errors.

use parastitch::geometry::MatchSet;
use parastitch::image::Image;
use parastitch::stitch::{label_color, ownership_image, run_fit_stage, stitch, StitchConfig};
use parastitch::synthscene::{generate, Scene, SceneSpec};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Parameters exposed as sliders on the demo page.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub cell_size: u32,
    pub error_buffer: bool,
    pub single_homography: bool,
}

#[wasm_bindgen]
impl Params {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Params {
        let c = StitchConfig::default();
        Params {
            lambda: c.lambda,
            beta: c.beta,
            gamma: c.gamma,
            nu: c.nu,
            cell_size: c.cell_size,
            error_buffer: true,
            single_homography: false,
        }
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::new()
    }
}

impl Params {
    pub fn config(&self) -> StitchConfig {
        let mut c = StitchConfig {
            lambda: self.lambda,
            beta: self.beta,
            gamma: self.gamma,
            nu: self.nu,
            cell_size: self.cell_size,
            ..StitchConfig::default()
        };
        c.ablation.disable_error_buffer = !self.error_buffer;
        c.ablation.single_homography = self.single_homography;
        c
    }
}

/// An RGBA buffer ready for `ImageData`.
#[wasm_bindgen]
pub struct Picture {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Picture {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

impl From<&Image> for Picture {
    fn from(img: &Image) -> Self {
        Picture { width: img.width(), height: img.height(), rgba: img.to_rgba_bytes() }
    }
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

fn js(e: parastitch::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Builds one of the preset scenes.
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, seed: u32) -> Result<Demo, JsValue> {
        Demo::create(preset, seed as u64).map_err(js)
    }

    pub fn presets() -> Vec<String> {
        SceneSpec::PRESETS.iter().map(|s| s.to_string()).collect()
    }

    pub fn target(&self) -> Picture {
        (&self.scene.target).into()
    }

    pub fn reference(&self) -> Picture {
        (&self.scene.reference).into()
    }

    /// JSON with each match's target point and fitted label.
    pub fn fit(&self, params: &Params) -> Result<String, JsValue> {
        self.fit_json(params).map_err(js)
    }

    /// Runs the whole pipeline; see [`StitchView`].
    pub fn stitch(&self, params: &Params) -> Result<StitchView, JsValue> {
        self.stitch_view(params).map_err(js)
    }
}

impl Demo {
    pub fn create(preset: &str, seed: u64) -> parastitch::Result<Demo> {
        let mut spec = SceneSpec::preset(preset)?;
        spec.texture_seed = seed;
        Ok(Demo { scene: generate(&spec)? })
    }

    fn matches(&self) -> &MatchSet {
        &self.scene.matches
    }

    pub fn fit_json(&self, params: &Params) -> parastitch::Result<String> {
        let s = &self.scene;
        let stage = run_fit_stage(&s.labels, self.matches(), s.reference.dims(), &params.config())?;
        let mut labels = vec![0usize; self.matches().len()];
        for (k, &i) in stage.kept.iter().enumerate() {
            labels[i] = stage.assignment.labels[k];
        }
        let points: Vec<_> = self
            .matches()
            .as_slice()
            .iter()
            .zip(&labels)
            .map(|(m, &l)| json!({ "x": m.target_pt.x, "y": m.target_pt.y, "label": l, "color": label_color(l) }))
            .collect();
        Ok(json!({
            "models": stage.models.len(),
            "energy": stage.energy,
            "history": stage.history,
            "filtered": self.matches().len() - stage.kept.len(),
            "points": points,
        })
        .to_string())
    }

    pub fn stitch_view(&self, params: &Params) -> parastitch::Result<StitchView> {
        let s = &self.scene;
        let out = stitch(&s.target, &s.reference, &s.labels, self.matches(), &params.config())?;
        let mut mesh = Vec::new();
        if let Some(m) = &out.mesh {
            for t in m.triangles() {
                let d = t.dst.map(|p| out.canvas.from_reference(p));
                for k in 0..3 {
                    let (a, b) = (d[k], d[(k + 1) % 3]);
                    mesh.extend([a.x as f32, a.y as f32, b.x as f32, b.y as f32]);
                }
            }
        }
        Ok(StitchView {
            panorama: (&out.panorama).into(),
            ownership: (&ownership_image(&out)).into(),
            mesh,
            report: out.report.to_json(),
        })
    }
}

/// Panorama, ownership map, warped mesh edges and the JSON report.
#[wasm_bindgen]
pub struct StitchView {
    panorama: Picture,
    ownership: Picture,
    mesh: Vec<f32>,
    report: String,
}

#[wasm_bindgen]
impl StitchView {
    pub fn panorama(&self) -> Picture {
        Picture { width: self.panorama.width, height: self.panorama.height, rgba: self.panorama.rgba.clone() }
    }

    pub fn ownership(&self) -> Picture {
        Picture { width: self.ownership.width, height: self.ownership.height, rgba: self.ownership.rgba.clone() }
    }

    /// Canvas-space segments as `x0 y0 x1 y1` quadruples.
    pub fn mesh_segments(&self) -> Vec<f32> {
        self.mesh.clone()
    }

    pub fn report(&self) -> String {
        self.report.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for name in SceneSpec::PRESETS {
            let d = Demo::create(name, 3).unwrap();
            let t = d.target();
            assert_eq!(t.rgba.len(), (t.width * t.height * 4) as usize);
        }
        assert!(Demo::create("nope", 1).is_err());
    }

    #[test]
    fn fit_json_lists_every_match() {
        let d = Demo::create("parallax", 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.fit_json(&Params::new()).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), d.matches().len());
        assert!(v["models"].as_u64().unwrap() >= 2);
    }

    #[test]
    fn stitch_view_is_consistent() {
        let d = Demo::create("two-plane", 11).unwrap();
        let view = d.stitch_view(&Params::new()).unwrap();
        let p = view.panorama();
        assert_eq!((p.width, p.height), (view.ownership().width, view.ownership().height));
        assert_eq!(view.mesh_segments().len() % 4, 0);
        let report: serde_json::Value = serde_json::from_str(&view.report()).unwrap();
        assert!(report["metrics"]["psnr"].as_f64().unwrap() > 30.0);
    }

    #[test]
    fn params_map_to_ablations() {
        let p = Params { error_buffer: false, single_homography: true, ..Params::new() };
        let c = p.config();
        assert!(c.ablation.disable_error_buffer && c.ablation.single_homography);
        assert_eq!(Params::new().config(), StitchConfig::default());
    }
}
