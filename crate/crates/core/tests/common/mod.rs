#![allow(dead_code)]

use annobudget::geometry::Bitmap;
use annobudget::synth::{generate_dataset, DegradationModel, SceneParams};
use annobudget::{Dataset, RleMask};

/// A few small frames, crowded enough to produce overlapping boxes.
pub fn small_dataset(seed: u64, overlap_pressure: f64, miss_rate: f64) -> Dataset {
    let params = SceneParams {
        height: 48,
        width: 80,
        instances_per_frame: [1, 5],
        size_range: [10, 24],
        overlap_pressure,
        frames: 6,
        seed,
        ..SceneParams::default()
    };
    let model = DegradationModel {
        predicted_miss_rate: miss_rate,
        ..DegradationModel::default()
    };
    generate_dataset(&params, &model)
        .expect("small scenes fit")
        .0
}

/// Pixel-by-pixel IoU over dense grids.
pub fn dense_iou(a: &Bitmap, b: &Bitmap) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn bitmap(h: u32, w: u32, bits: &[bool]) -> Bitmap {
    Bitmap::from_vec(h, w, bits.to_vec()).unwrap()
}

/// Masks of each label in `1..=n` of a label map; empty labels are skipped.
pub fn masks_of_label_map(h: u32, w: u32, labels: &[u8], n: u8) -> Vec<RleMask> {
    (1..=n)
        .map(|k| RleMask::from_scan(h, w, labels.iter().map(|&l| l == k)).unwrap())
        .filter(|m| !m.is_empty())
        .collect()
}
