//! Browser demo: three JSON-in/JSON-out operations over the core crate,
//! exported to JavaScript through wasm-bindgen.
//!
//! The `*_json` functions are plain Rust so they can be tested natively.

use annobudget::geometry::mask_iou;
use annobudget::metrics::{correctness_by_overlap, OverlapSample};
use annobudget::strategy::{build_schedule, frame_overlap_scores};
use annobudget::synth::{
    frame_rng, generate_dataset, generate_scene, perturb_masks, DegradationModel, SceneParams,
};
use annobudget::{run_campaign, CostModel, Dataset, StrategyId};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Knobs exposed by the page. Everything else keeps the library defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub seed: u64,
    pub frames: u32,
    pub max_instances: u32,
    pub overlap_pressure: f64,
    pub concentration: f64,
    pub alpha: f64,
    pub budget_steps: u32,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: 0,
            frames: 60,
            max_instances: SceneParams::default().instances_per_frame[1],
            overlap_pressure: SceneParams::default().overlap_pressure,
            concentration: DegradationModel::default().concentration,
            alpha: 1.0,
            budget_steps: 60,
        }
    }
}

impl DemoConfig {
    fn parse(json: &str) -> Result<Self, String> {
        if json.trim().is_empty() {
            return Ok(DemoConfig::default());
        }
        serde_json::from_str(json).map_err(|e| format!("bad config: {e}"))
    }

    fn scene(&self) -> SceneParams {
        let defaults = SceneParams::default();
        SceneParams {
            seed: self.seed,
            frames: self.frames,
            overlap_pressure: self.overlap_pressure,
            instances_per_frame: [
                defaults.instances_per_frame[0].min(self.max_instances),
                self.max_instances,
            ],
            ..defaults
        }
    }

    fn degradation(&self) -> DegradationModel {
        DegradationModel {
            concentration: self.concentration,
            ..DegradationModel::default()
        }
    }

    fn dataset(&self) -> Result<Dataset, String> {
        generate_dataset(&self.scene(), &self.degradation())
            .map(|(d, _)| d)
            .map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct SceneInstance {
    id: u64,
    /// RLE counts, row-major, starting with a background run.
    gt: Vec<u32>,
    approx: Vec<u32>,
    bbox: [u32; 4],
    /// `[row, col]` of the north, east, west and south keypoints.
    news: [[u32; 2]; 4],
    iou_b: f64,
    approx_iou: f64,
}

#[derive(Serialize)]
struct SceneView {
    frame: u64,
    height: u32,
    width: u32,
    instances: Vec<SceneInstance>,
}

/// One generated frame with its ground truth, approximate masks, boxes,
/// extreme points and overlap scores.
pub fn scene_json(config: &str, frame: u64) -> Result<String, String> {
    let cfg = DemoConfig::parse(config)?;
    let params = cfg.scene();
    params.validate().map_err(|e| e.to_string())?;
    let model = cfg.degradation();
    model.validate().map_err(|e| e.to_string())?;
    let mut f = generate_scene(&params, frame, &mut frame_rng(params.seed, frame, 0))
        .map_err(|e| e.to_string())?;
    perturb_masks(&mut f, &model, &mut frame_rng(params.seed, frame, 1))
        .map_err(|e| e.to_string())?;
    let overlaps = frame_overlap_scores(&f);
    let instances = f
        .instances
        .iter()
        .zip(overlaps)
        .map(|(inst, iou_b)| {
            let approx = inst.approx.as_ref().expect("perturbed");
            let n = inst.news;
            SceneInstance {
                id: inst.id,
                gt: inst.gt.counts().to_vec(),
                approx: approx.counts().to_vec(),
                bbox: inst.bbox.to_array(),
                news: [n.north, n.east, n.west, n.south].map(|p| [p.row, p.col]),
                iou_b,
                approx_iou: mask_iou(approx, &inst.gt).unwrap_or(0.0),
            }
        })
        .collect();
    let view = SceneView {
        frame,
        height: f.height,
        width: f.width,
        instances,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    strategy: String,
    /// `[budget_h, mean_label_iou, label_pq]`; quality is 0 before the first label.
    points: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct CurvesView {
    instances: usize,
    keypoints_end_h: f64,
    curves: Vec<Curve>,
}

/// Quality-vs-time curves of all six strategies on a generated dataset.
pub fn curves_json(config: &str) -> Result<String, String> {
    let cfg = DemoConfig::parse(config)?;
    let d = cfg.dataset()?;
    let cost = CostModel::default();
    let strategies = [
        StrategyId::FbfM,
        StrategyId::FbfBb,
        StrategyId::FbfBbC,
        StrategyId::Bb4AllFc,
        StrategyId::Bb4AllIcOo,
        StrategyId::Bb4AllIcAlo { alpha: cfg.alpha },
    ];
    let correction_total = build_schedule(&d, StrategyId::Bb4AllFc, &cost, cfg.seed)
        .map_err(|e| e.to_string())?
        .total_cost();
    let steps = cfg.budget_steps.max(1);
    let budgets: Vec<f64> = (0..=steps)
        .map(|k| correction_total * k as f64 / steps as f64)
        .collect();
    let points = run_campaign(&d, &strategies, &budgets, &cost, cfg.seed, None)
        .map_err(|e| e.to_string())?;
    let curves = strategies
        .iter()
        .map(|s| Curve {
            strategy: s.to_string(),
            points: points
                .iter()
                .filter(|p| p.strategy == s.to_string())
                .map(|p| {
                    let q = p.quality;
                    [
                        p.budget_h(),
                        q.map_or(0.0, |q| q.mean_label_iou),
                        q.map_or(0.0, |q| q.label_pq.pq),
                    ]
                })
                .collect(),
        })
        .collect();
    let view = CurvesView {
        instances: d.instance_count(),
        keypoints_end_h: cost.keypoints_s * d.instance_count() as f64 / 3600.0,
        curves,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Share of approximate masks with IoU > 0.6, by box-overlap bin.
pub fn histogram_json(config: &str, bin_width: f64) -> Result<String, String> {
    let d = DemoConfig::parse(config)?.dataset()?;
    let mut samples = Vec::new();
    for f in &d.frames {
        for (inst, overlap) in f.instances.iter().zip(frame_overlap_scores(f)) {
            samples.push(OverlapSample {
                label: inst.approx.as_ref().expect("generated"),
                ground_truth: &inst.gt,
                overlap,
            });
        }
    }
    let h = correctness_by_overlap(&samples, bin_width).map_err(|e| e.to_string())?;
    serde_json::to_string(&h).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = generateScene)]
pub fn generate_scene_js(config: &str, frame: u32) -> Result<String, JsError> {
    scene_json(config, frame as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateCurves)]
pub fn simulate_curves_js(config: &str) -> Result<String, JsError> {
    curves_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = overlapHistogram)]
pub fn overlap_histogram_js(config: &str, bin_width: f64) -> Result<String, JsError> {
    histogram_json(config, bin_width).map_err(|e| JsError::new(&e))
}
