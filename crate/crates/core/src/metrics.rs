//! Instance matching, segmentation/recognition/panoptic quality, and the
//! correctness-by-overlap histogram.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{mask_iou, RleMask};

/// IoU threshold above which a label counts as a correct segmentation.
pub const CORRECT_IOU: f64 = 0.6;

/// Default IoU threshold for a prediction to be a true positive.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TpPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Matching {
    pub tp_pairs: Vec<TpPair>,
    pub fp: Vec<usize>,
    #[serde(rename = "fn")]
    pub fn_: Vec<usize>,
}

impl Matching {
    pub fn tp_count(&self) -> usize {
        self.tp_pairs.len()
    }

    pub fn iou_sum(&self) -> f64 {
        self.tp_pairs.iter().map(|p| p.iou).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanopticScores {
    pub sq: f64,
    pub rq: f64,
    pub pq: f64,
    pub tp_count: usize,
    pub fp_count: usize,
    pub fn_count: usize,
}

impl PanopticScores {
    /// Scores from aggregated counts. Empty-vs-empty is a perfect score;
    /// no true positive on non-empty sets gives SQ = 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, iou_sum: f64) -> Self {
        let n_pred = tp + fp;
        let n_gt = tp + fn_;
        let (sq, rq) = if n_pred + n_gt == 0 {
            (1.0, 1.0)
        } else if tp == 0 {
            (0.0, 0.0)
        } else {
            (
                iou_sum / tp as f64,
                2.0 * tp as f64 / (n_pred + n_gt) as f64,
            )
        };
        PanopticScores {
            sq,
            rq,
            pq: sq * rq,
            tp_count: tp,
            fp_count: fp,
            fn_count: fn_,
        }
    }
}

/// Greedy one-to-one matching in descending IoU order. Pairs with
/// IoU below `threshold` are never matched; equal IoUs go to the lower
/// (prediction, ground truth) index pair first.
pub fn match_instances(
    predictions: &[RleMask],
    ground_truth: &[RleMask],
    threshold: f64,
) -> Result<Matching> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "match threshold {threshold} outside (0, 1]"
        )));
    }
    if let Some(first) = predictions.first().or(ground_truth.first()) {
        let dims = first.dims();
        if let Some(bad) = predictions
            .iter()
            .chain(ground_truth)
            .find(|m| m.dims() != dims)
        {
            return Err(Error::Dimension {
                expected: dims,
                found: bad.dims(),
            });
        }
    }

    let mut candidates = Vec::new();
    for (p, pm) in predictions.iter().enumerate() {
        for (g, gm) in ground_truth.iter().enumerate() {
            let iou = mask_iou(pm, gm)?;
            if iou >= threshold {
                candidates.push(TpPair {
                    prediction: p,
                    ground_truth: g,
                    iou,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.prediction.cmp(&b.prediction))
            .then(a.ground_truth.cmp(&b.ground_truth))
    });

    let mut pred_used = vec![false; predictions.len()];
    let mut gt_used = vec![false; ground_truth.len()];
    let mut tp_pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.prediction] && !gt_used[c.ground_truth] {
            pred_used[c.prediction] = true;
            gt_used[c.ground_truth] = true;
            tp_pairs.push(c);
        }
    }
    Ok(Matching {
        tp_pairs,
        fp: (0..predictions.len()).filter(|&i| !pred_used[i]).collect(),
        fn_: (0..ground_truth.len()).filter(|&i| !gt_used[i]).collect(),
    })
}

pub fn panoptic_quality(
    m: &Matching,
    n_predictions: usize,
    n_ground_truth: usize,
) -> PanopticScores {
    let tp = m.tp_count();
    PanopticScores::from_counts(
        tp,
        n_predictions.saturating_sub(tp),
        n_ground_truth.saturating_sub(tp),
        m.iou_sum(),
    )
}

/// Running SQ/RQ/PQ over many frames.
#[derive(Debug, Clone, Copy, Default)]
pub struct PanopticAccumulator {
    tp: usize,
    fp: usize,
    fn_: usize,
    iou_sum: f64,
}

impl PanopticAccumulator {
    pub fn add(&mut self, m: &Matching) {
        self.tp += m.tp_count();
        self.fp += m.fp.len();
        self.fn_ += m.fn_.len();
        self.iou_sum += m.iou_sum();
    }

    pub fn scores(&self) -> PanopticScores {
        PanopticScores::from_counts(self.tp, self.fp, self.fn_, self.iou_sum)
    }
}

/// One instance entering the overlap histogram.
#[derive(Debug, Clone, Copy)]
pub struct OverlapSample<'a> {
    pub label: &'a RleMask,
    pub ground_truth: &'a RleMask,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub correct: usize,
    /// `None` for an unoccupied bin.
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapHistogram {
    pub bins: Vec<OverlapBin>,
}

impl OverlapHistogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = self.bins.iter().map(|b| b.low).collect();
        edges.extend(self.bins.last().map(|b| b.high));
        edges
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Correctness fractions of occupied bins, in bin order.
    pub fn occupied_fractions(&self) -> Vec<f64> {
        self.bins.iter().filter_map(|b| b.fraction).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,correct,fraction\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::io::fmt_sig6(b.low),
                crate::io::fmt_sig6(b.high),
                b.count,
                b.correct,
                b.fraction.map(crate::io::fmt_sig6).unwrap_or_default()
            ));
        }
        out
    }
}

/// Number of equal bins covering [0, 1], or an error when `bin_width` does
/// not divide 1.
pub fn bin_count(bin_width: f64) -> Result<usize> {
    let n = (1.0 / bin_width).round();
    if !(bin_width > 0.0 && bin_width <= 1.0) || ((1.0 / bin_width) - n).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "bin width {bin_width} does not divide [0, 1] evenly"
        )));
    }
    Ok(n as usize)
}

/// Bin index for a unit-interval value; values on an edge go to the upper bin
/// and 1.0 goes to the last bin.
pub fn bin_index(value: f64, n_bins: usize) -> usize {
    let scaled = value.clamp(0.0, 1.0) * n_bins as f64;
    ((scaled + 1e-9).floor() as usize).min(n_bins - 1)
}

/// Share of instances whose label has IoU > 0.6 with the ground truth,
/// grouped by their bounding-box overlap score.
pub fn correctness_by_overlap(
    instances: &[OverlapSample<'_>],
    bin_width: f64,
) -> Result<OverlapHistogram> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("no instances to bin".into()));
    }
    let n = bin_count(bin_width)?;
    let mut counts = vec![(0usize, 0usize); n];
    for s in instances {
        if !(0.0..=1.0).contains(&s.overlap) {
            return Err(Error::InvalidArgument(format!(
                "overlap score {} outside [0, 1]",
                s.overlap
            )));
        }
        let slot = &mut counts[bin_index(s.overlap, n)];
        slot.0 += 1;
        if mask_iou(s.label, s.ground_truth)? > CORRECT_IOU {
            slot.1 += 1;
        }
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(k, (count, correct))| OverlapBin {
            low: k as f64 / n as f64,
            high: (k + 1) as f64 / n as f64,
            count,
            correct,
            fraction: (count > 0).then(|| correct as f64 / count as f64),
        })
        .collect();
    Ok(OverlapHistogram { bins })
}
