//! Synthetic scenes with controllable instance overlap, plus approximate and
//! model-predicted masks whose quality degrades with box overlap.
//!
//! Instances are painted back to front; later instances occlude earlier
//! ones, so ground-truth masks never overlap. Every frame draws from its own
//! ChaCha stream derived from `(seed, frame id)`, so frames can be generated
//! in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Frame, InstanceRecord};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, RleMask};
use crate::strategy::frame_overlap_scores;

const PLACEMENT_TRIES: usize = 400;
const REALIZE_TRIES: usize = 8;
/// Max center offset of a clustered instance, relative to the summed half extents.
const CLUSTER_SPREAD: f64 = 0.6;
/// Allowed gap between the sampled target IoU and the realized one.
pub const IOU_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Ellipse,
    Rectangle,
    Capsule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub height: u32,
    pub width: u32,
    /// Inclusive range of instances per frame.
    pub instances_per_frame: [u32; 2],
    pub shape: ShapeFamily,
    /// Inclusive range of instance heights in pixels.
    pub size_range: [u32; 2],
    /// Range of width / height ratios.
    pub aspect_range: [f64; 2],
    /// Probability that an instance is placed against an existing one
    /// instead of in free space.
    pub overlap_pressure: f64,
    /// Minimum share of an instance that must stay visible under occluders.
    pub min_visible: f64,
    pub frames: u32,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 128,
            width: 224,
            instances_per_frame: [2, 7],
            shape: ShapeFamily::Capsule,
            size_range: [24, 48],
            aspect_range: [0.35, 0.6],
            overlap_pressure: 0.6,
            min_visible: 0.15,
            frames: 200,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::validation("scene", field, reason));
        let [n_lo, n_hi] = self.instances_per_frame;
        let [s_lo, s_hi] = self.size_range;
        let [a_lo, a_hi] = self.aspect_range;
        if self.height == 0 || self.width == 0 {
            return bad("height/width", "frame must be non-empty");
        }
        if n_lo > n_hi {
            return bad("instances_per_frame", "empty range");
        }
        if s_lo < 3 || s_lo > s_hi || s_hi > self.height {
            return bad("size_range", "must be a non-empty range within [3, height]");
        }
        if !(a_lo > 0.0 && a_lo <= a_hi) || (s_hi as f64 * a_hi).round() as u32 > self.width {
            return bad("aspect_range", "must be positive and fit the frame width");
        }
        if !(0.0..=1.0).contains(&self.overlap_pressure) {
            return bad("overlap_pressure", "outside [0, 1]");
        }
        if !(self.min_visible > 0.0 && self.min_visible <= 1.0) {
            return bad("min_visible", "outside (0, 1]");
        }
        if self.frames == 0 {
            return bad("frames", "at least one frame required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationModel {
    /// Mean IoU of an approximate mask for an isolated instance.
    pub base_iou_mean: f64,
    /// Drop in mean IoU per unit of box overlap.
    pub overlap_penalty: f64,
    /// Beta concentration of the sampled target IoU; larger is tighter.
    pub concentration: f64,
    pub predicted_base_iou_mean: f64,
    pub predicted_overlap_penalty: f64,
    pub predicted_concentration: f64,
    /// Probability that the model misses an instance entirely.
    pub predicted_miss_rate: f64,
}

impl Default for DegradationModel {
    fn default() -> Self {
        DegradationModel {
            base_iou_mean: 0.95,
            overlap_penalty: 0.5,
            concentration: 100.0,
            predicted_base_iou_mean: 0.85,
            predicted_overlap_penalty: 0.3,
            predicted_concentration: 20.0,
            predicted_miss_rate: 0.05,
        }
    }
}

impl DegradationModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::validation("degradation", field, reason));
        for (field, mean, penalty, conc) in [
            (
                "base_iou_mean",
                self.base_iou_mean,
                self.overlap_penalty,
                self.concentration,
            ),
            (
                "predicted_base_iou_mean",
                self.predicted_base_iou_mean,
                self.predicted_overlap_penalty,
                self.predicted_concentration,
            ),
        ] {
            if !(mean > 0.0 && mean <= 1.0) {
                return bad(field, "outside (0, 1]");
            }
            if !(penalty >= 0.0 && mean - penalty >= 0.0) {
                return bad(field, "overlap penalty must be in [0, mean]");
            }
            if conc.is_nan() || conc <= 0.0 {
                return bad(field, "concentration must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.predicted_miss_rate) {
            return bad("predicted_miss_rate", "outside [0, 1]");
        }
        Ok(())
    }
}

/// Instances whose realized IoU missed its target by more than the tolerance.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FlaggedInstance {
    pub frame: u64,
    pub instance: u64,
    pub predicted: bool,
    pub target: f64,
    pub achieved: f64,
}

/// Per-frame RNG; `purpose` separates independent draws for the same frame.
pub fn frame_rng(seed: u64, frame: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame.wrapping_mul(4).wrapping_add(purpose));
    rng
}

struct Placed {
    full_area: u64,
    visible_area: u64,
    bbox: BoundingBox,
    center: (f64, f64),
    half: (f64, f64),
}

/// Row-major indices of the pixels covered by a shape centered at `(cx, cy)`
/// with height `h` and width `w`.
fn shape_pixels(
    shape: ShapeFamily,
    cx: f64,
    cy: f64,
    h: f64,
    w: f64,
    frame_w: u32,
    frame_h: u32,
) -> Vec<usize> {
    let (a, b) = (w / 2.0, h / 2.0);
    let r0 = (cy - b).floor().max(0.0) as u32;
    let r1 = ((cy + b).ceil() as u32).min(frame_h);
    let c0 = (cx - a).floor().max(0.0) as u32;
    let c1 = ((cx + a).ceil() as u32).min(frame_w);
    let mut out = Vec::new();
    for r in r0..r1 {
        for c in c0..c1 {
            let (x, y) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
            let inside = match shape {
                ShapeFamily::Rectangle => x.abs() <= a && y.abs() <= b,
                ShapeFamily::Ellipse => (x / a).powi(2) + (y / b).powi(2) <= 1.0,
                ShapeFamily::Capsule => {
                    let reach = (b - a).max(0.0);
                    let dy = (y.abs() - reach).max(0.0);
                    x * x + dy * dy <= a * a
                }
            };
            if inside {
                out.push(r as usize * frame_w as usize + c as usize);
            }
        }
    }
    out
}

fn pixel_bbox(pixels: &[usize], frame_w: u32) -> BoundingBox {
    let w = frame_w as usize;
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &p in pixels {
        let (r, c) = ((p / w) as u32, (p % w) as u32);
        x0 = x0.min(c);
        x1 = x1.max(c);
        y0 = y0.min(r);
        y1 = y1.max(r);
    }
    BoundingBox {
        x_min: x0,
        y_min: y0,
        x_max: x1,
        y_max: y1,
    }
}

/// Paints a frame's ground-truth instances. Instances placed in free space
/// have boxes disjoint from all earlier ones; with probability
/// `overlap_pressure` an instance is instead placed against a random earlier
/// instance.
pub fn generate_scene(params: &SceneParams, frame_id: u64, rng: &mut impl Rng) -> Result<Frame> {
    params.validate()?;
    let (fh, fw) = (params.height, params.width);
    let n = rng.random_range(params.instances_per_frame[0]..=params.instances_per_frame[1]);
    let mut labels = vec![0u16; fh as usize * fw as usize];
    let mut placed: Vec<Placed> = Vec::new();

    for k in 0..n {
        let mut done = false;
        for _ in 0..PLACEMENT_TRIES {
            let h = rng.random_range(params.size_range[0]..=params.size_range[1]) as f64;
            let aspect = rng.random_range(params.aspect_range[0]..=params.aspect_range[1]);
            let w = (h * aspect).round().max(3.0);
            let (b, a) = (h / 2.0, w / 2.0);
            let clustered = !placed.is_empty() && rng.random_bool(params.overlap_pressure);
            let (cx, cy) = if clustered {
                let anchor = &placed[rng.random_range(0..placed.len())];
                let sx = CLUSTER_SPREAD * (anchor.half.0 + a);
                let sy = CLUSTER_SPREAD * (anchor.half.1 + b);
                (
                    anchor.center.0 + rng.random_range(-sx..=sx),
                    anchor.center.1 + rng.random_range(-sy..=sy),
                )
            } else {
                (
                    rng.random_range(a..=(fw as f64 - a)),
                    rng.random_range(b..=(fh as f64 - b)),
                )
            };
            if cx - a < 0.0 || cy - b < 0.0 || cx + a > fw as f64 || cy + b > fh as f64 {
                continue;
            }
            let pixels = shape_pixels(params.shape, cx, cy, h, w, fw, fh);
            if pixels.is_empty() {
                continue;
            }
            let bbox = pixel_bbox(&pixels, fw);
            if !clustered && placed.iter().any(|p| p.bbox.intersection_area(&bbox) > 0) {
                continue;
            }
            let mut lost = vec![0u64; placed.len()];
            for &p in &pixels {
                if labels[p] > 0 {
                    lost[labels[p] as usize - 1] += 1;
                }
            }
            let keeps_visible = placed.iter().zip(&lost).all(|(p, &l)| {
                (p.visible_area - l) as f64 >= params.min_visible * p.full_area as f64
            });
            if !keeps_visible {
                continue;
            }
            for (p, l) in placed.iter_mut().zip(&lost) {
                p.visible_area -= l;
            }
            for &p in &pixels {
                labels[p] = k as u16 + 1;
            }
            placed.push(Placed {
                full_area: pixels.len() as u64,
                visible_area: pixels.len() as u64,
                bbox,
                center: (cx, cy),
                half: (a, b),
            });
            done = true;
            break;
        }
        if !done {
            return Err(Error::Generation(format!(
                "frame {frame_id}: could not place instance {k} after {PLACEMENT_TRIES} tries"
            )));
        }
    }

    let instances = (0..n)
        .map(|k| {
            let mask = RleMask::from_scan(fh, fw, labels.iter().map(|&l| l == k as u16 + 1))?;
            InstanceRecord::from_gt(k as u64, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame {
        id: frame_id,
        height: fh,
        width: fw,
        instances,
    })
}

fn sample_target(mean: f64, concentration: f64, rng: &mut impl Rng) -> f64 {
    let mean = mean.clamp(IOU_TOLERANCE, 1.0);
    if mean >= 1.0 {
        return 1.0;
    }
    let beta = Beta::new(mean * concentration, (1.0 - mean) * concentration)
        .expect("positive shape parameters");
    beta.sample(rng).clamp(IOU_TOLERANCE, 1.0)
}

/// Flips pixels of the ground-truth box, in order of distance from a random
/// point on the box border, until the IoU with the ground truth drops to
/// `target`. With `keep_news`, the ground-truth extreme pixels stay set so
/// the result spans the same box.
fn realize(
    inst: &InstanceRecord,
    target: f64,
    keep_news: bool,
    rng: &mut impl Rng,
) -> Result<RleMask> {
    let (fh, fw) = inst.gt.dims();
    let gt = inst.gt.decode();
    let b = inst.bbox;
    let mut cells: Vec<(f64, usize, bool)> = Vec::with_capacity(b.area() as usize);
    let perimeter = 2.0 * (b.width() + b.height()) as f64;
    let t = rng.random_range(0.0..perimeter);
    let (bw, bh) = (b.width() as f64, b.height() as f64);
    let (ax, ay) = if t < bw {
        (b.x_min as f64 + t, b.y_min as f64)
    } else if t < bw + bh {
        (b.x_max as f64 + 1.0, b.y_min as f64 + t - bw)
    } else if t < 2.0 * bw + bh {
        (b.x_max as f64 + 1.0 - (t - bw - bh), b.y_max as f64 + 1.0)
    } else {
        (b.x_min as f64, b.y_max as f64 + 1.0 - (t - 2.0 * bw - bh))
    };
    for r in b.y_min..=b.y_max {
        for c in b.x_min..=b.x_max {
            let (dx, dy) = (c as f64 + 0.5 - ax, r as f64 + 0.5 - ay);
            let jitter = 1.0 + 0.35 * rng.random::<f64>();
            cells.push((
                (dx * dx + dy * dy) * jitter,
                r as usize * fw as usize + c as usize,
                gt.get(r, c),
            ));
        }
    }
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    // IoU after flipping the first k cells is (g - removed) / (g + added),
    // non-increasing in k. Pick the k whose IoU is closest to the target.
    let g = inst.gt.area() as f64;
    let (mut removed, mut added) = (0.0, 0.0);
    let mut best = (1.0f64 - target).abs();
    let mut best_k = 0;
    for (k, &(_, _, is_gt)) in cells.iter().enumerate() {
        if is_gt {
            removed += 1.0;
        } else {
            added += 1.0;
        }
        let iou = (g - removed) / (g + added);
        let err = (iou - target).abs();
        if err < best {
            best = err;
            best_k = k + 1;
        }
        if iou < target {
            break;
        }
    }

    let mut out = gt;
    let data = out.as_mut_slice();
    for &(_, idx, is_gt) in &cells[..best_k] {
        data[idx] = !is_gt;
    }
    if keep_news {
        for p in inst.news.points() {
            out.set(p.row, p.col, true);
        }
    }
    let mask = RleMask::encode(&out)?;
    if mask.is_empty() {
        return Ok(inst.gt.clone());
    }
    debug_assert_eq!(mask.dims(), (fh, fw));
    Ok(mask)
}

/// Realizes `target` with a few random anchors and keeps the closest result.
fn realize_closest(
    inst: &InstanceRecord,
    target: f64,
    keep_news: bool,
    rng: &mut impl Rng,
) -> Result<(RleMask, f64)> {
    let mut best: Option<(RleMask, f64)> = None;
    for _ in 0..REALIZE_TRIES {
        let m = realize(inst, target, keep_news, rng)?;
        let iou = m.iou(&inst.gt)?;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| (iou - target).abs() < (b - target).abs());
        if better {
            best = Some((m, iou));
        }
        if (iou - target).abs() <= IOU_TOLERANCE / 2.0 {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// Fills `approx` and `predicted` for every instance of the frame. Returns
/// the instances whose realized IoU missed the target by more than
/// [`IOU_TOLERANCE`]; those keep the closest mask found.
pub fn perturb_masks(
    frame: &mut Frame,
    model: &DegradationModel,
    rng: &mut impl Rng,
) -> Result<Vec<FlaggedInstance>> {
    model.validate()?;
    let overlaps = frame_overlap_scores(frame);
    let mut flagged = Vec::new();
    let frame_id = frame.id;
    for (inst, &iou_b) in frame.instances.iter_mut().zip(&overlaps) {
        let target = sample_target(
            model.base_iou_mean - model.overlap_penalty * iou_b,
            model.concentration,
            rng,
        );
        let (approx, achieved) = realize_closest(inst, target, true, rng)?;
        if (achieved - target).abs() > IOU_TOLERANCE {
            flagged.push(FlaggedInstance {
                frame: frame_id,
                instance: inst.id,
                predicted: false,
                target,
                achieved,
            });
        }
        inst.approx = Some(approx);

        let mut predicted = Vec::new();
        if !rng.random_bool(model.predicted_miss_rate) {
            let target = sample_target(
                model.predicted_base_iou_mean - model.predicted_overlap_penalty * iou_b,
                model.predicted_concentration,
                rng,
            );
            let (m, achieved) = realize_closest(inst, target, false, rng)?;
            if (achieved - target).abs() > IOU_TOLERANCE {
                flagged.push(FlaggedInstance {
                    frame: frame_id,
                    instance: inst.id,
                    predicted: true,
                    target,
                    achieved,
                });
            }
            predicted.push(m);
        }
        inst.predicted = Some(predicted);
    }
    Ok(flagged)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub flagged: Vec<FlaggedInstance>,
}

/// Generates `params.frames` frames with approximate and predicted masks.
pub fn generate_dataset(
    params: &SceneParams,
    model: &DegradationModel,
) -> Result<(Dataset, GenerationReport)> {
    params.validate()?;
    model.validate()?;
    let mut frames = Vec::with_capacity(params.frames as usize);
    let mut flagged = Vec::new();
    for id in 0..params.frames as u64 {
        let mut frame = generate_scene(params, id, &mut frame_rng(params.seed, id, 0))?;
        flagged.extend(perturb_masks(
            &mut frame,
            model,
            &mut frame_rng(params.seed, id, 1),
        )?);
        frames.push(frame);
    }
    Ok((Dataset { frames }, GenerationReport { flagged }))
}
