//! Budget sweeps: replay a schedule up to a time budget, materialize the
//! resulting label set and score it against the ground truth.

use std::path::PathBuf;
use std::process::Command;

use serde::Serialize;

use crate::cost::{ActionKind, CostModel};
use crate::dataset::{Dataset, Frame, InstanceRecord};
use crate::error::{Error, Result};
use crate::geometry::{mask_iou, RleMask};
use crate::metrics::{
    match_instances, PanopticAccumulator, PanopticScores, CORRECT_IOU, MATCH_IOU,
};
use crate::strategy::{build_schedule, Schedule, StrategyId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LabelState {
    Unlabeled,
    /// Automatic mask from the extreme points.
    ApproxMask,
    /// Manually corrected mask, identical to the ground truth.
    CorrectedMask,
    /// Manually drawn polygon, identical to the ground truth.
    PolygonMask,
}

impl LabelState {
    fn rank(self) -> u8 {
        match self {
            LabelState::Unlabeled => 0,
            LabelState::ApproxMask => 1,
            LabelState::CorrectedMask | LabelState::PolygonMask => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSnapshot {
    pub budget_s: f64,
    pub consumed_s: f64,
    pub executed_actions: usize,
    /// Indexed `[frame][instance]` like the dataset.
    pub states: Vec<Vec<LabelState>>,
}

impl LabelSnapshot {
    pub fn state(&self, frame: usize, instance: usize) -> LabelState {
        self.states[frame][instance]
    }

    /// Mask currently serving as the label of an instance.
    pub fn active_mask<'d>(
        &self,
        dataset: &'d Dataset,
        frame: usize,
        instance: usize,
    ) -> Option<&'d RleMask> {
        let inst = &dataset.frames[frame].instances[instance];
        match self.states[frame][instance] {
            LabelState::Unlabeled => None,
            LabelState::ApproxMask => inst.approx.as_ref(),
            LabelState::CorrectedMask | LabelState::PolygonMask => Some(&inst.gt),
        }
    }

    pub fn labeled_instances(&self) -> usize {
        self.states
            .iter()
            .flatten()
            .filter(|&&s| s != LabelState::Unlabeled)
            .count()
    }

    pub fn labeled_frames(&self) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, f)| f.iter().any(|&s| s != LabelState::Unlabeled))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn count(&self, state: LabelState) -> usize {
        self.states
            .iter()
            .flatten()
            .filter(|&&s| s == state)
            .count()
    }

    /// Dataset holding only the active labels, each stored as `gt`.
    /// Unlabeled instances and frames without labels are dropped.
    pub fn export(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut frames = Vec::new();
        for (f, frame) in dataset.frames.iter().enumerate() {
            let mut instances = Vec::new();
            for (i, inst) in frame.instances.iter().enumerate() {
                if let Some(m) = self.active_mask(dataset, f, i) {
                    if m.is_empty() {
                        continue;
                    }
                    instances.push(InstanceRecord::from_gt(inst.id, m.clone())?);
                }
            }
            if !instances.is_empty() {
                frames.push(Frame {
                    id: frame.id,
                    height: frame.height,
                    width: frame.width,
                    instances,
                });
            }
        }
        Ok(Dataset { frames })
    }
}

/// Executes the longest prefix of `schedule` whose cumulative cost fits in
/// `budget_s`. Stops at the first action that does not fit.
pub fn label_snapshot(
    dataset: &Dataset,
    schedule: &Schedule,
    budget_s: f64,
) -> Result<LabelSnapshot> {
    if budget_s.is_nan() || budget_s < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "budget {budget_s} must be >= 0"
        )));
    }
    let mut states: Vec<Vec<LabelState>> = dataset
        .frames
        .iter()
        .map(|f| vec![LabelState::Unlabeled; f.instances.len()])
        .collect();
    let mut consumed = 0.0;
    let mut executed = 0;
    for e in &schedule.entries {
        if e.cumulative_s > budget_s {
            break;
        }
        let slot = states
            .get_mut(e.frame_index)
            .and_then(|f| f.get_mut(e.instance_index))
            .ok_or_else(|| Error::InvalidArgument("schedule does not match dataset".into()))?;
        let next = match e.action.kind {
            ActionKind::DefineKeypoints => LabelState::ApproxMask,
            ActionKind::CorrectMask => {
                if *slot != LabelState::ApproxMask {
                    return Err(Error::InvalidArgument(format!(
                        "frame {} instance {}: correction before keypoints",
                        e.action.frame_id, e.action.instance_id
                    )));
                }
                LabelState::CorrectedMask
            }
            ActionKind::DrawPolygon => LabelState::PolygonMask,
        };
        if next.rank() <= slot.rank() {
            return Err(Error::InvalidArgument(format!(
                "frame {} instance {}: repeated {}",
                e.action.frame_id, e.action.instance_id, e.action.kind
            )));
        }
        *slot = next;
        consumed = e.cumulative_s;
        executed += 1;
    }
    Ok(LabelSnapshot {
        budget_s,
        consumed_s: consumed,
        executed_actions: executed,
        states,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelQuality {
    pub mean_label_iou: f64,
    pub frac_correct: f64,
    pub label_pq: PanopticScores,
}

/// Label-set quality: mean IoU of active labels against the ground truth,
/// the share above the 0.6 correctness bar, and PQ of labels versus the
/// ground truth over frames that hold at least one label. `None` when
/// nothing is labeled.
pub fn snapshot_quality(
    snapshot: &LabelSnapshot,
    dataset: &Dataset,
) -> Result<Option<LabelQuality>> {
    let mut iou_sum = 0.0;
    let mut correct = 0usize;
    let mut labeled = 0usize;
    let mut pq = PanopticAccumulator::default();
    for f in snapshot.labeled_frames() {
        let frame = &dataset.frames[f];
        let mut labels = Vec::new();
        for (i, inst) in frame.instances.iter().enumerate() {
            if let Some(m) = snapshot.active_mask(dataset, f, i) {
                let iou = mask_iou(m, &inst.gt)?;
                iou_sum += iou;
                labeled += 1;
                if iou > CORRECT_IOU {
                    correct += 1;
                }
                labels.push(m.clone());
            }
        }
        let gts: Vec<RleMask> = frame.instances.iter().map(|i| i.gt.clone()).collect();
        pq.add(&match_instances(&labels, &gts, MATCH_IOU)?);
    }
    if labeled == 0 {
        return Ok(None);
    }
    Ok(Some(LabelQuality {
        mean_label_iou: iou_sum / labeled as f64,
        frac_correct: correct as f64 / labeled as f64,
        label_pq: pq.scores(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub budget_s: f64,
    pub n_instances_labeled: usize,
    pub n_frames_labeled: usize,
    pub quality: Option<LabelQuality>,
    pub trainer_quality: Option<f64>,
}

impl CurvePoint {
    pub fn budget_h(&self) -> f64 {
        self.budget_s / 3600.0
    }

    pub fn mean_label_iou(&self) -> Option<f64> {
        self.quality.map(|q| q.mean_label_iou)
    }
}

/// Scores a label snapshot with something other than the built-in proxies,
/// typically by training a model on it.
pub trait TrainerHook {
    fn evaluate(&mut self, labels: &Dataset, point: &CurvePoint) -> Result<f64>;
}

/// Runs a shell command per budget point. `{snapshot}`, `{strategy}` and
/// `{budget_s}` in the template are substituted; the last non-empty line of
/// stdout must parse as the quality value.
#[derive(Debug, Clone)]
pub struct CommandHook {
    pub template: String,
    pub workdir: PathBuf,
}

impl CommandHook {
    pub fn new(template: impl Into<String>, workdir: impl Into<PathBuf>) -> Self {
        CommandHook {
            template: template.into(),
            workdir: workdir.into(),
        }
    }
}

impl TrainerHook for CommandHook {
    fn evaluate(&mut self, labels: &Dataset, point: &CurvePoint) -> Result<f64> {
        std::fs::create_dir_all(&self.workdir)?;
        let budget = crate::io::fmt_sig6(point.budget_s);
        let path = self.workdir.join(format!(
            "snapshot_{}_{}_{budget}.json",
            point.strategy, point.seed
        ));
        std::fs::write(&path, labels.to_json())?;
        let cmd = self
            .template
            .replace("{snapshot}", &path.to_string_lossy())
            .replace("{strategy}", &point.strategy)
            .replace("{budget_s}", &budget);
        let out = Command::new("sh").arg("-c").arg(&cmd).output()?;
        if !out.status.success() {
            return Err(Error::Hook(format!(
                "`{cmd}` exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let last = stdout
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("");
        last.trim()
            .parse()
            .map_err(|_| Error::Hook(format!("`{cmd}` printed `{last}`, expected a number")))
    }
}

/// Sweeps each strategy over the ascending `budgets`. One schedule is built
/// per strategy and snapshotted at every budget.
pub fn run_campaign(
    dataset: &Dataset,
    strategies: &[StrategyId],
    budgets: &[f64],
    cost: &CostModel,
    seed: u64,
    mut hook: Option<&mut dyn TrainerHook>,
) -> Result<Vec<CurvePoint>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "budgets must be sorted ascending".into(),
        ));
    }
    let mut points = Vec::with_capacity(strategies.len() * budgets.len());
    for &strategy in strategies {
        let schedule = build_schedule(dataset, strategy, cost, seed)?;
        for &budget in budgets {
            let snap = label_snapshot(dataset, &schedule, budget)?;
            let mut point = CurvePoint {
                strategy: strategy.to_string(),
                alpha: strategy.alpha(),
                seed,
                budget_s: budget,
                n_instances_labeled: snap.labeled_instances(),
                n_frames_labeled: snap.labeled_frames().len(),
                quality: snapshot_quality(&snap, dataset)?,
                trainer_quality: None,
            };
            if let Some(h) = hook.as_deref_mut() {
                point.trainer_quality = Some(h.evaluate(&snap.export(dataset)?, &point)?);
            }
            points.push(point);
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bitmap;

    /// `n` single-instance frames. Each approximate mask covers 5 of the 10
    /// ground-truth pixels plus nothing else (IoU 0.5).
    fn dataset(n: u64) -> Dataset {
        let frames = (0..n)
            .map(|id| {
                let mut g = Bitmap::new(2, 10);
                for c in 0..10 {
                    g.set(0, c, true);
                }
                let mut approx = Bitmap::new(2, 10);
                for c in 0..5 {
                    approx.set(0, c, true);
                }
                let mut inst = InstanceRecord::from_gt(0, RleMask::encode(&g).unwrap()).unwrap();
                inst.approx = Some(RleMask::encode(&approx).unwrap());
                inst.predicted = Some(vec![]);
                Frame {
                    id,
                    height: 2,
                    width: 10,
                    instances: vec![inst],
                }
            })
            .collect();
        Dataset { frames }
    }

    fn schedule(d: &Dataset, s: StrategyId) -> Schedule {
        build_schedule(d, s, &CostModel::default(), 1).unwrap()
    }

    #[test]
    fn zero_budget_labels_nothing() {
        let d = dataset(4);
        let snap = label_snapshot(&d, &schedule(&d, StrategyId::FbfBbC), 0.0).unwrap();
        assert_eq!(snap.labeled_instances(), 0);
        assert_eq!(snap.consumed_s, 0.0);
        assert!(snapshot_quality(&snap, &d).unwrap().is_none());
    }

    #[test]
    fn keypoints_fill_exact_budget() {
        let d = dataset(10);
        let snap = label_snapshot(&d, &schedule(&d, StrategyId::FbfBb), 40.0).unwrap();
        assert_eq!(snap.count(LabelState::ApproxMask), 10);
        assert_eq!(snap.consumed_s, 40.0);
    }

    #[test]
    fn correction_that_does_not_fit_is_skipped() {
        let d = dataset(10);
        let snap = label_snapshot(&d, &schedule(&d, StrategyId::Bb4AllFc), 41.0).unwrap();
        assert_eq!(snap.count(LabelState::ApproxMask), 10);
        assert_eq!(snap.count(LabelState::CorrectedMask), 0);
        assert_eq!(snap.consumed_s, 40.0);
        let snap = label_snapshot(&d, &schedule(&d, StrategyId::Bb4AllFc), 85.0).unwrap();
        assert_eq!(snap.count(LabelState::CorrectedMask), 1);
    }

    #[test]
    fn negative_budget_rejected() {
        let d = dataset(1);
        assert!(label_snapshot(&d, &schedule(&d, StrategyId::FbfBb), -1.0).is_err());
    }

    #[test]
    fn quality_of_mixed_snapshot() {
        // one corrected (IoU 1.0), one approximate (IoU 0.5)
        let d = dataset(2);
        let snap = LabelSnapshot {
            budget_s: 0.0,
            consumed_s: 0.0,
            executed_actions: 0,
            states: vec![
                vec![LabelState::CorrectedMask],
                vec![LabelState::ApproxMask],
            ],
        };
        let q = snapshot_quality(&snap, &d).unwrap().unwrap();
        assert_eq!(q.mean_label_iou, 0.75);
        assert_eq!(q.frac_correct, 0.5);
        // TP: corrected (1.0) and approx (0.5, matched at the inclusive threshold)
        assert_eq!(q.label_pq.tp_count, 2);
        assert!((q.label_pq.sq - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fully_corrected_is_perfect() {
        let d = dataset(3);
        let s = schedule(&d, StrategyId::FbfBbC);
        let snap = label_snapshot(&d, &s, s.total_cost()).unwrap();
        let q = snapshot_quality(&snap, &d).unwrap().unwrap();
        assert_eq!(
            (q.mean_label_iou, q.frac_correct, q.label_pq.pq),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn campaign_shapes() {
        let d = dataset(3);
        let pts = run_campaign(
            &d,
            &[StrategyId::FbfBb],
            &[0.0],
            &CostModel::default(),
            1,
            None,
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].quality.is_none());
        assert!(run_campaign(
            &d,
            &[StrategyId::FbfBb],
            &[5.0, 1.0],
            &CostModel::default(),
            1,
            None
        )
        .is_err());
    }

    #[test]
    fn export_keeps_only_labels() {
        let d = dataset(3);
        let s = schedule(&d, StrategyId::Bb4AllFc);
        let snap = label_snapshot(&d, &s, 12.0 + 45.0).unwrap();
        let out = snap.export(&d).unwrap();
        assert_eq!(out.frames.len(), 3);
        let full: Vec<u64> = out
            .frames
            .iter()
            .map(|f| f.instances[0].gt.area())
            .collect();
        assert_eq!(full.iter().filter(|&&a| a == 10).count(), 1);
        assert_eq!(full.iter().filter(|&&a| a == 5).count(), 2);
        assert!(out.frames.iter().all(|f| f.instances[0].approx.is_none()));
    }

    struct Fixed(f64);

    impl TrainerHook for Fixed {
        fn evaluate(&mut self, _: &Dataset, _: &CurvePoint) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn hook_value_is_recorded() {
        let d = dataset(2);
        let mut hook = Fixed(0.42);
        let pts = run_campaign(
            &d,
            &[StrategyId::FbfBb],
            &[0.0, 8.0],
            &CostModel::default(),
            0,
            Some(&mut hook),
        )
        .unwrap();
        assert!(pts.iter().all(|p| p.trainer_quality == Some(0.42)));
    }
}
