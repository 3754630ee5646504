//! Correction-priority scores and the annotation strategies that turn a
//! dataset into an ordered, costed schedule of actions.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{action_cost, ActionKind, AnnotationAction, CostModel};
use crate::dataset::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::geometry::{bbox_iou, mask_iou, BoundingBox, RleMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyId {
    /// Frame by frame, manual polygons.
    FbfM,
    /// Frame by frame, extreme points only.
    FbfBb,
    /// Frame by frame, extreme points then correction of every mask.
    FbfBbC,
    /// Extreme points everywhere, then frame-by-frame correction.
    Bb4AllFc,
    /// Extreme points everywhere, then correction by decreasing box overlap.
    Bb4AllIcOo,
    /// Extreme points everywhere, then correction by increasing confidence.
    Bb4AllIcAlo { alpha: f64 },
}

impl StrategyId {
    pub const ALL_NAMES: [&'static str; 6] = [
        "FbF-M",
        "FbF-BB",
        "FbF-BB+C",
        "BB4All-FC",
        "BB4All-IC-Oo",
        "BB4All-IC-ALo",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyId::FbfM => "FbF-M",
            StrategyId::FbfBb => "FbF-BB",
            StrategyId::FbfBbC => "FbF-BB+C",
            StrategyId::Bb4AllFc => "BB4All-FC",
            StrategyId::Bb4AllIcOo => "BB4All-IC-Oo",
            StrategyId::Bb4AllIcAlo { .. } => "BB4All-IC-ALo",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            StrategyId::Bb4AllIcAlo { alpha } => Some(*alpha),
            _ => None,
        }
    }

    /// Whether the strategy starts by defining extreme points for every instance.
    pub fn is_bb4all(&self) -> bool {
        matches!(
            self,
            StrategyId::Bb4AllFc | StrategyId::Bb4AllIcOo | StrategyId::Bb4AllIcAlo { .. }
        )
    }

    pub fn uses_approx_masks(&self) -> bool {
        !matches!(self, StrategyId::FbfM)
    }

    /// Parses a name, accepting `BB4All-IC-ALo-alpha<value>` and, for the
    /// plain ALo name, the fallback `alpha`.
    pub fn parse_with_alpha(s: &str, alpha: Option<f64>) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        let id = match lower.as_str() {
            "fbf-m" => StrategyId::FbfM,
            "fbf-bb" => StrategyId::FbfBb,
            "fbf-bb+c" => StrategyId::FbfBbC,
            "bb4all-fc" => StrategyId::Bb4AllFc,
            "bb4all-ic-oo" => StrategyId::Bb4AllIcOo,
            "bb4all-ic-alo" => StrategyId::Bb4AllIcAlo {
                alpha: alpha
                    .ok_or_else(|| Error::InvalidArgument("BB4All-IC-ALo needs an alpha".into()))?,
            },
            other => match other.strip_prefix("bb4all-ic-alo-alpha") {
                Some(a) => StrategyId::Bb4AllIcAlo {
                    alpha: a
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad alpha in `{s}`")))?,
                },
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown strategy `{s}` (expected one of {})",
                        Self::ALL_NAMES.join(", ")
                    )))
                }
            },
        };
        if alpha.is_some() && id.alpha().is_none() {
            return Err(Error::InvalidArgument(format!(
                "{} takes no alpha",
                id.name()
            )));
        }
        if let Some(a) = id.alpha() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidArgument(format!("alpha {a} must be >= 0")));
            }
        }
        Ok(id)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyId::Bb4AllIcAlo { alpha } => write!(f, "BB4All-IC-ALo-alpha{alpha}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::parse_with_alpha(s, None)
    }
}

/// Largest box IoU between `boxes[i]` and any other box; 0 when alone.
pub fn overlap_score(i: usize, boxes: &[BoundingBox]) -> f64 {
    boxes
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, b)| bbox_iou(&boxes[i], b))
        .fold(0.0, f64::max)
}

/// Largest mask IoU between `approx` and any predicted mask; 0 when there is none.
pub fn model_agreement_score<'a>(
    approx: &RleMask,
    predicted: impl IntoIterator<Item = &'a RleMask>,
) -> Result<f64> {
    let mut best = 0.0f64;
    for m in predicted {
        best = best.max(mask_iou(approx, m)?);
    }
    Ok(best)
}

/// `iou_star + alpha * iou_star * (1 - iou_b)`.
pub fn confidence(iou_star: f64, iou_b: f64, alpha: f64) -> f64 {
    iou_star + alpha * iou_star * (1.0 - iou_b)
}

/// Box overlap of every instance of a frame.
pub fn frame_overlap_scores(frame: &Frame) -> Vec<f64> {
    let boxes: Vec<_> = frame.instances.iter().map(|i| i.bbox).collect();
    (0..boxes.len()).map(|i| overlap_score(i, &boxes)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScores {
    pub iou_b: f64,
    pub iou_star: f64,
    pub confidence: f64,
}

/// Overlap, model agreement and confidence for every instance, indexed
/// `[frame][instance]`. Fails when a frame carries no predictions or an
/// instance has no approximate mask.
pub fn instance_scores(dataset: &Dataset, alpha: f64) -> Result<Vec<Vec<InstanceScores>>> {
    dataset
        .frames
        .iter()
        .map(|f| {
            let predicted = f
                .predicted_masks()
                .ok_or(Error::MissingPredictions { frame: f.id })?;
            let overlaps = frame_overlap_scores(f);
            f.instances
                .iter()
                .zip(overlaps)
                .map(|(inst, iou_b)| {
                    let approx = inst.approx.as_ref().ok_or(Error::MissingApprox {
                        frame: f.id,
                        instance: inst.id,
                    })?;
                    let iou_star = model_agreement_score(approx, predicted.iter().copied())?;
                    Ok(InstanceScores {
                        iou_b,
                        iou_star,
                        confidence: confidence(iou_star, iou_b, alpha),
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledAction {
    pub action: AnnotationAction,
    pub frame_index: usize,
    pub instance_index: usize,
    /// Priority score that ordered this action, when the strategy uses one.
    pub score: Option<f64>,
    pub cost_s: f64,
    pub cumulative_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub strategy: StrategyId,
    pub seed: u64,
    pub entries: Vec<ScheduledAction>,
}

impl Schedule {
    pub fn total_cost(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.cumulative_s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cumulative cost once every `DefineKeypoints` action has run.
    pub fn keypoints_phase_end(&self) -> Option<f64> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.action.kind == ActionKind::DefineKeypoints)
            .map(|e| e.cumulative_s)
    }

    pub fn to_csv(&self) -> String {
        use crate::io::fmt_sig6;
        let mut out =
            String::from("rank,frame_id,instance_id,action,score_used,cost_s,cumulative_s\n");
        for (rank, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rank + 1,
                e.action.frame_id,
                e.action.instance_id,
                e.action.kind,
                e.score.map(fmt_sig6).unwrap_or_default(),
                fmt_sig6(e.cost_s),
                fmt_sig6(e.cumulative_s),
            ));
        }
        out
    }
}

/// Seeded random permutation of frame indices shared by all frame-by-frame strategies.
pub fn frame_order(n_frames: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_frames).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

struct Builder<'a> {
    dataset: &'a Dataset,
    cost: &'a CostModel,
    overlaps: Vec<Vec<f64>>,
    entries: Vec<ScheduledAction>,
    spent: f64,
}

impl Builder<'_> {
    fn push(&mut self, kind: ActionKind, f: usize, i: usize, score: Option<f64>) {
        let frame = &self.dataset.frames[f];
        let action = AnnotationAction {
            kind,
            frame_id: frame.id,
            instance_id: frame.instances[i].id,
        };
        let cost_s = action_cost(&action, self.overlaps[f][i], self.cost);
        self.spent += cost_s;
        self.entries.push(ScheduledAction {
            action,
            frame_index: f,
            instance_index: i,
            score,
            cost_s,
            cumulative_s: self.spent,
        });
    }

    fn push_frame(&mut self, kind: ActionKind, f: usize) {
        for i in 0..self.dataset.frames[f].instances.len() {
            self.push(kind, f, i, None);
        }
    }

    fn keypoints_everywhere(&mut self) {
        for f in 0..self.dataset.frames.len() {
            self.push_frame(ActionKind::DefineKeypoints, f);
        }
    }

    /// Corrections in ascending `key` order, ties by (frame id, instance id).
    fn corrections_sorted_by(&mut self, key: impl Fn(usize, usize) -> f64, descending: bool) {
        let mut items: Vec<(f64, u64, u64, usize, usize)> = Vec::new();
        for (f, frame) in self.dataset.frames.iter().enumerate() {
            for (i, inst) in frame.instances.iter().enumerate() {
                items.push((key(f, i), frame.id, inst.id, f, i));
            }
        }
        items.sort_by(|a, b| {
            let primary = if descending {
                b.0.total_cmp(&a.0)
            } else {
                a.0.total_cmp(&b.0)
            };
            primary.then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        for (score, _, _, f, i) in items {
            self.push(ActionKind::CorrectMask, f, i, Some(score));
        }
    }
}

/// Compiles `strategy` into the ordered list of actions an annotator would
/// perform, with per-action and cumulative costs.
pub fn build_schedule(
    dataset: &Dataset,
    strategy: StrategyId,
    cost: &CostModel,
    seed: u64,
) -> Result<Schedule> {
    cost.validate()?;
    if strategy.uses_approx_masks() {
        for f in &dataset.frames {
            if let Some(inst) = f.instances.iter().find(|i| i.approx.is_none()) {
                return Err(Error::MissingApprox {
                    frame: f.id,
                    instance: inst.id,
                });
            }
        }
    }
    let scores = match strategy {
        StrategyId::Bb4AllIcAlo { alpha } => Some(instance_scores(dataset, alpha)?),
        _ => None,
    };

    let mut b = Builder {
        dataset,
        cost,
        overlaps: dataset.frames.iter().map(frame_overlap_scores).collect(),
        entries: Vec::with_capacity(dataset.instance_count() * 2),
        spent: 0.0,
    };
    let order = frame_order(dataset.frames.len(), seed);

    match strategy {
        StrategyId::FbfM => {
            for &f in &order {
                b.push_frame(ActionKind::DrawPolygon, f);
            }
        }
        StrategyId::FbfBb => {
            for &f in &order {
                b.push_frame(ActionKind::DefineKeypoints, f);
            }
        }
        StrategyId::FbfBbC => {
            for &f in &order {
                b.push_frame(ActionKind::DefineKeypoints, f);
                b.push_frame(ActionKind::CorrectMask, f);
            }
        }
        StrategyId::Bb4AllFc => {
            b.keypoints_everywhere();
            for &f in &order {
                b.push_frame(ActionKind::CorrectMask, f);
            }
        }
        StrategyId::Bb4AllIcOo => {
            b.keypoints_everywhere();
            let overlaps = b.overlaps.clone();
            b.corrections_sorted_by(|f, i| overlaps[f][i], true);
        }
        StrategyId::Bb4AllIcAlo { .. } => {
            b.keypoints_everywhere();
            let scores = scores.expect("computed above");
            b.corrections_sorted_by(|f, i| scores[f][i].confidence, false);
        }
    }

    Ok(Schedule {
        strategy,
        seed,
        entries: b.entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InstanceRecord;
    use crate::geometry::{Bitmap, RleMask};

    fn rect_mask(h: u32, w: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> RleMask {
        let mut g = Bitmap::new(h, w);
        for r in y0..=y1 {
            for c in x0..=x1 {
                g.set(r, c, true);
            }
        }
        RleMask::encode(&g).unwrap()
    }

    fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn overlap_score_examples() {
        assert_eq!(overlap_score(0, &[b(0, 0, 9, 9)]), 0.0);
        assert_eq!(overlap_score(0, &[b(0, 0, 9, 9), b(0, 0, 9, 9)]), 1.0);
        assert_eq!(
            overlap_score(1, &[b(0, 0, 9, 9), b(5, 0, 14, 9)]),
            1.0 / 3.0
        );
        // max over several competitors
        let boxes = [
            b(0, 0, 9, 9),
            b(5, 0, 14, 9),
            b(30, 30, 31, 31),
            b(0, 0, 9, 4),
        ];
        assert_eq!(overlap_score(0, &boxes), 0.5);
    }

    #[test]
    fn agreement_score_examples() {
        let m = rect_mask(1, 10, 0, 0, 9, 0);
        assert_eq!(model_agreement_score(&m, [&m.clone()]).unwrap(), 1.0);
        assert_eq!(model_agreement_score(&m, []).unwrap(), 0.0);
        let p04 = rect_mask(1, 10, 0, 0, 3, 0);
        let p07 = rect_mask(1, 10, 3, 0, 9, 0);
        assert_eq!(mask_iou(&m, &p04).unwrap(), 0.4);
        assert_eq!(mask_iou(&m, &p07).unwrap(), 0.7);
        assert_eq!(model_agreement_score(&m, [&p04, &p07]).unwrap(), 0.7);
        let other = rect_mask(1, 11, 0, 0, 3, 0);
        assert!(model_agreement_score(&m, [&other]).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(0.37, 0.8, 0.0), 0.37);
        assert_eq!(confidence(0.37, 1.0, 2.5), 0.37);
        assert!((confidence(0.5, 0.2, 1.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            "FbF-BB+C".parse::<StrategyId>().unwrap(),
            StrategyId::FbfBbC
        );
        assert_eq!(
            "bb4all-ic-oo".parse::<StrategyId>().unwrap(),
            StrategyId::Bb4AllIcOo
        );
        assert_eq!(
            "BB4All-IC-ALo-alpha1".parse::<StrategyId>().unwrap(),
            StrategyId::Bb4AllIcAlo { alpha: 1.0 }
        );
        assert_eq!(
            StrategyId::parse_with_alpha("BB4All-IC-ALo", Some(2.5)).unwrap(),
            StrategyId::Bb4AllIcAlo { alpha: 2.5 }
        );
        assert!("BB4All-IC-ALo".parse::<StrategyId>().is_err());
        assert!(StrategyId::parse_with_alpha("FbF-M", Some(1.0)).is_err());
        assert!("BB4All-IC-ALo-alpha-1".parse::<StrategyId>().is_err());
        assert!("nope".parse::<StrategyId>().is_err());
        assert_eq!(
            StrategyId::Bb4AllIcAlo { alpha: 0.0 }.to_string(),
            "BB4All-IC-ALo-alpha0"
        );
        assert_eq!(
            StrategyId::Bb4AllIcAlo { alpha: 2.5 }.to_string(),
            "BB4All-IC-ALo-alpha2.5"
        );
    }

    /// One frame on a 12x40 grid. Instance 0 is isolated, instance 2 sits
    /// inside instance 1 (box IoU 0.2), instance 3 overlaps instance 1 by
    /// half its width (box IoU 1/3).
    fn three_instance_frame() -> Dataset {
        let (h, w) = (12, 40);
        let mk = |id: u64, x0, y0, x1, y1| {
            let mut r = InstanceRecord::from_gt(id, rect_mask(h, w, x0, y0, x1, y1)).unwrap();
            r.approx = Some(r.gt.clone());
            r
        };
        let frame = Frame {
            id: 0,
            height: h,
            width: w,
            instances: vec![
                mk(0, 0, 0, 3, 3),
                mk(1, 10, 0, 19, 9),
                mk(2, 10, 0, 19, 1),
                mk(3, 15, 0, 24, 9),
            ],
        };
        Dataset {
            frames: vec![frame],
        }
    }

    #[test]
    fn oo_orders_by_decreasing_overlap() {
        let d = three_instance_frame();
        let overlaps = frame_overlap_scores(&d.frames[0]);
        assert_eq!(overlaps[0], 0.0);
        assert_eq!(overlaps[1], 50.0 / 150.0);
        assert_eq!(overlaps[2], 0.2);
        let s = build_schedule(&d, StrategyId::Bb4AllIcOo, &CostModel::default(), 0).unwrap();
        let corrections: Vec<u64> = s
            .entries
            .iter()
            .filter(|e| e.action.kind == ActionKind::CorrectMask)
            .map(|e| e.action.instance_id)
            .collect();
        // ties between 1 and 3 (both 1/3) broken by instance id
        assert_eq!(corrections, vec![1, 3, 2, 0]);
    }

    #[test]
    fn oo_order_example_from_scores() {
        // scores {0.0, 0.5, 0.2}: expected order is 1, 2, 0
        let d = Dataset {
            frames: (0..3)
                .map(|k| {
                    let (h, w) = (10, 20);
                    let mut insts =
                        vec![InstanceRecord::from_gt(0, rect_mask(h, w, 0, 0, 9, 9)).unwrap()];
                    // partner box giving IoU 0 / 0.5 / 0.2 with the first
                    let partner = match k {
                        0 => rect_mask(h, w, 12, 0, 19, 9),
                        1 => rect_mask(h, w, 0, 0, 9, 4),
                        _ => rect_mask(h, w, 0, 0, 9, 1),
                    };
                    insts.push(InstanceRecord::from_gt(1, partner).unwrap());
                    for i in &mut insts {
                        i.approx = Some(i.gt.clone());
                    }
                    Frame {
                        id: k,
                        height: h,
                        width: w,
                        instances: insts,
                    }
                })
                .collect(),
        };
        let s = build_schedule(&d, StrategyId::Bb4AllIcOo, &CostModel::default(), 3).unwrap();
        let frames: Vec<u64> = s
            .entries
            .iter()
            .filter(|e| e.action.kind == ActionKind::CorrectMask && e.action.instance_id == 0)
            .map(|e| e.action.frame_id)
            .collect();
        assert_eq!(frames, vec![1, 2, 0]);
    }

    #[test]
    fn alo_alpha0_orders_by_iou_star() {
        let (h, w) = (1, 30);
        let gt = |x0, x1| rect_mask(h, w, x0, 0, x1, 0);
        // approx masks of length 10; predictions give IoU* 0.9 / 0.1 / 0.5
        let mut insts = Vec::new();
        for (id, (ax0, pred)) in [(0u32, gt(0, 8)), (10, gt(19, 19)), (20, gt(20, 24))]
            .into_iter()
            .enumerate()
        {
            let mut r = InstanceRecord::from_gt(id as u64, gt(ax0, ax0 + 9)).unwrap();
            r.approx = Some(r.gt.clone());
            r.predicted = Some(vec![pred]);
            insts.push(r);
        }
        let d = Dataset {
            frames: vec![Frame {
                id: 0,
                height: h,
                width: w,
                instances: insts,
            }],
        };
        let scores = instance_scores(&d, 0.0).unwrap();
        let stars: Vec<f64> = scores[0].iter().map(|s| s.iou_star).collect();
        assert_eq!(stars, vec![0.9, 0.1, 0.5]);
        let s = build_schedule(
            &d,
            StrategyId::Bb4AllIcAlo { alpha: 0.0 },
            &CostModel::default(),
            0,
        )
        .unwrap();
        let order: Vec<Option<f64>> = s
            .entries
            .iter()
            .filter(|e| e.action.kind == ActionKind::CorrectMask)
            .map(|e| e.score)
            .collect();
        assert_eq!(order, vec![Some(0.1), Some(0.5), Some(0.9)]);
    }

    #[test]
    fn alo_without_predictions_fails() {
        let d = three_instance_frame();
        let r = build_schedule(
            &d,
            StrategyId::Bb4AllIcAlo { alpha: 1.0 },
            &CostModel::default(),
            0,
        );
        assert!(matches!(r, Err(Error::MissingPredictions { frame: 0 })));
    }

    #[test]
    fn bb_strategy_without_approx_fails() {
        let mut d = three_instance_frame();
        d.frames[0].instances[2].approx = None;
        let r = build_schedule(&d, StrategyId::FbfBb, &CostModel::default(), 0);
        assert!(matches!(
            r,
            Err(Error::MissingApprox {
                frame: 0,
                instance: 2
            })
        ));
        assert!(build_schedule(&d, StrategyId::FbfM, &CostModel::default(), 0).is_ok());
    }

    #[test]
    fn fbf_bb_costs_four_seconds_per_instance() {
        let d = three_instance_frame();
        let s = build_schedule(&d, StrategyId::FbfBb, &CostModel::default(), 9).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s
            .entries
            .iter()
            .all(|e| e.action.kind == ActionKind::DefineKeypoints));
        assert_eq!(s.total_cost(), 16.0);
    }

    #[test]
    fn fbf_bbc_interleaves_per_frame() {
        let d = three_instance_frame();
        let s = build_schedule(&d, StrategyId::FbfBbC, &CostModel::default(), 0).unwrap();
        let kinds: Vec<_> = s.entries.iter().map(|e| e.action.kind).collect();
        assert_eq!(&kinds[..4], &[ActionKind::DefineKeypoints; 4]);
        assert_eq!(&kinds[4..], &[ActionKind::CorrectMask; 4]);
        // 4 x 4 s + 45 (isolated) + 3 x 70
        assert_eq!(s.total_cost(), 16.0 + 45.0 + 210.0);
    }

    #[test]
    fn schedule_csv_layout() {
        let d = three_instance_frame();
        let s = build_schedule(&d, StrategyId::Bb4AllIcOo, &CostModel::default(), 0).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "rank,frame_id,instance_id,action,score_used,cost_s,cumulative_s"
        );
        assert_eq!(lines[1], "1,0,0,DefineKeypoints,,4,4");
        assert_eq!(lines[5], "5,0,1,CorrectMask,0.333333,70,86");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn frame_order_is_a_seeded_permutation() {
        let a = frame_order(50, 11);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, frame_order(50, 11));
        assert_ne!(a, frame_order(50, 12));
    }
}
