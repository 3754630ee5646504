use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annobudget::io::{curves_csv, load_dataset, parse_budgets, write_dataset};
use annobudget::metrics::{
    correctness_by_overlap, OverlapHistogram, OverlapSample, PanopticAccumulator,
};
use annobudget::simulate::CommandHook;
use annobudget::strategy::frame_overlap_scores;
use annobudget::synth::{generate_dataset, DegradationModel, FlaggedInstance, SceneParams};
use annobudget::{
    build_schedule, match_instances, run_campaign, CostModel, Dataset, Error, PanopticScores,
    Result, RleMask, StrategyId,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Annotation-budget simulation for instance segmentation.
#[derive(Parser)]
#[command(name = "annobudget", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with approximate and predicted masks.
    Gen {
        /// JSON or TOML file with optional `scene` and `degradation` tables.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Overrides `scene.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Where to write the generation manifest [default: <output>.manifest.json].
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a label source against the ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// `approx`, `gt`, or a dataset file whose `gt` masks are the labels.
        #[arg(long, default_value = "approx")]
        labels: String,
        #[arg(long, default_value_t = annobudget::metrics::MATCH_IOU)]
        threshold: f64,
        /// Bin width of the correctness-by-overlap histogram.
        #[arg(long)]
        hist_bins: Option<f64>,
        /// Also write the histogram as CSV.
        #[arg(long)]
        hist_csv: Option<PathBuf>,
    },
    /// Emit one strategy's annotation schedule as CSV.
    Order {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        strategy: String,
        /// Confidence weight for BB4All-IC-ALo.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replay strategies over a budget grid and emit quality curves as CSV.
    Simulate {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated strategy names.
        #[arg(long)]
        strategies: String,
        /// `start:stop:step` or a comma-separated list, in seconds.
        #[arg(long)]
        budgets: String,
        /// Confidence weight for a plain BB4All-IC-ALo entry.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cost: CostArgs,
        /// Shell command scoring each label snapshot; `{snapshot}`,
        /// `{strategy}` and `{budget_s}` are substituted.
        #[arg(long)]
        trainer_cmd: Option<String>,
        /// Directory for snapshot files [default: <output>.snapshots].
        #[arg(long)]
        trainer_workdir: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CostArgs {
    /// TOML or JSON file with a `cost` table.
    #[arg(long)]
    cost_config: Option<PathBuf>,
    #[arg(long)]
    keypoints_s: Option<f64>,
    #[arg(long)]
    correct_isolated_s: Option<f64>,
    #[arg(long)]
    correct_overlapping_s: Option<f64>,
    #[arg(long)]
    polygon_s: Option<f64>,
    #[arg(long)]
    isolation_threshold: Option<f64>,
}

impl CostArgs {
    fn resolve(&self) -> Result<CostModel> {
        let mut model = match &self.cost_config {
            Some(path) => CostModel::from_config_str(&fs::read_to_string(path)?)?,
            None => CostModel::default(),
        };
        let overrides = [
            (self.keypoints_s, &mut model.keypoints_s),
            (self.correct_isolated_s, &mut model.correct_isolated_s),
            (self.correct_overlapping_s, &mut model.correct_overlapping_s),
            (self.polygon_s, &mut model.polygon_s),
            (self.isolation_threshold, &mut model.isolation_threshold),
        ];
        for (value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        model.validate()?;
        Ok(model)
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenConfig {
    scene: SceneParams,
    degradation: DegradationModel,
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: String,
    seed: u64,
    scene: &'a SceneParams,
    degradation: &'a DegradationModel,
    frames: usize,
    instances: usize,
    flagged: &'a [FlaggedInstance],
}

#[derive(Serialize)]
struct EvalReport {
    labels: String,
    threshold: f64,
    scores: PanopticScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<OverlapHistogram>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            params,
            seed,
            output,
            manifest,
        } => gen(params.as_deref(), seed, &output, manifest),
        Command::Eval {
            dataset,
            labels,
            threshold,
            hist_bins,
            hist_csv,
        } => eval(&dataset, &labels, threshold, hist_bins, hist_csv.as_deref()),
        Command::Order {
            dataset,
            strategy,
            alpha,
            seed,
            cost,
            output,
        } => {
            let strategy = StrategyId::parse_with_alpha(&strategy, alpha)?;
            let cost = cost.resolve()?;
            let dataset = load_dataset(&dataset)?;
            let schedule = build_schedule(&dataset, strategy, &cost, seed)?;
            emit(output.as_deref(), &schedule.to_csv())
        }
        Command::Simulate {
            dataset,
            strategies,
            budgets,
            alpha,
            seed,
            cost,
            trainer_cmd,
            trainer_workdir,
            output,
        } => {
            let strategies = strategies
                .split(',')
                .map(|s| {
                    let alo = s.trim().eq_ignore_ascii_case(StrategyId::ALL_NAMES[5]);
                    StrategyId::parse_with_alpha(s, if alo { alpha } else { None })
                })
                .collect::<Result<Vec<_>>>()?;
            let budgets = parse_budgets(&budgets)?;
            let cost = cost.resolve()?;
            let dataset = load_dataset(&dataset)?;
            let mut hook = trainer_cmd.map(|cmd| {
                let workdir = trainer_workdir.unwrap_or_else(|| match &output {
                    Some(o) => sibling(o, "snapshots"),
                    None => PathBuf::from("snapshots"),
                });
                CommandHook::new(cmd, workdir)
            });
            let points = run_campaign(
                &dataset,
                &strategies,
                &budgets,
                &cost,
                seed,
                hook.as_mut().map(|h| h as _),
            )?;
            emit(output.as_deref(), &curves_csv(&points))
        }
    }
}

fn gen(
    params: Option<&Path>,
    seed: Option<u64>,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<()> {
    let mut config = match params {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            if text.trim_start().starts_with('{') {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            }
        }
        None => GenConfig::default(),
    };
    if let Some(seed) = seed {
        config.scene.seed = seed;
    }
    let (dataset, report) = generate_dataset(&config.scene, &config.degradation)?;
    write_dataset(&dataset, output)?;
    let manifest_doc = Manifest {
        generator: format!("annobudget {}", env!("CARGO_PKG_VERSION")),
        seed: config.scene.seed,
        scene: &config.scene,
        degradation: &config.degradation,
        frames: dataset.frames.len(),
        instances: dataset.instance_count(),
        flagged: &report.flagged,
    };
    let manifest = manifest.unwrap_or_else(|| sibling(output, "manifest.json"));
    fs::write(
        &manifest,
        serde_json::to_string_pretty(&manifest_doc)? + "\n",
    )?;
    if !report.flagged.is_empty() {
        eprintln!(
            "warning: {} approximate or predicted masks missed their target IoU by more than {}",
            report.flagged.len(),
            annobudget::synth::IOU_TOLERANCE
        );
    }
    Ok(())
}

/// `dir/name.json` -> `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Per-frame label masks, indexed like `dataset.frames`. Each label carries
/// the index of the ground-truth instance it belongs to, when known.
type FrameLabels = Vec<Vec<(Option<usize>, RleMask)>>;

fn resolve_labels(dataset: &Dataset, source: &str) -> Result<FrameLabels> {
    match source {
        "gt" => Ok(dataset
            .frames
            .iter()
            .map(|f| {
                f.instances
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (Some(i), r.gt.clone()))
                    .collect()
            })
            .collect()),
        "approx" => dataset
            .frames
            .iter()
            .map(|f| {
                f.instances
                    .iter()
                    .enumerate()
                    .map(|(i, r)| match &r.approx {
                        Some(m) => Ok((Some(i), m.clone())),
                        None => Err(Error::MissingApprox {
                            frame: f.id,
                            instance: r.id,
                        }),
                    })
                    .collect()
            })
            .collect(),
        path => {
            let labels = load_dataset(path)?;
            Ok(dataset
                .frames
                .iter()
                .map(|f| {
                    let Some(lf) = labels.frames.iter().find(|lf| lf.id == f.id) else {
                        return Vec::new();
                    };
                    lf.instances
                        .iter()
                        .map(|l| (f.instances.iter().position(|r| r.id == l.id), l.gt.clone()))
                        .collect()
                })
                .collect())
        }
    }
}

fn eval(
    dataset: &Path,
    source: &str,
    threshold: f64,
    hist_bins: Option<f64>,
    hist_csv: Option<&Path>,
) -> Result<()> {
    let dataset = load_dataset(dataset)?;
    let labels = resolve_labels(&dataset, source)?;
    let mut acc = PanopticAccumulator::default();
    for (frame, frame_labels) in dataset.frames.iter().zip(&labels) {
        let preds: Vec<RleMask> = frame_labels.iter().map(|(_, m)| m.clone()).collect();
        let gts: Vec<RleMask> = frame.instances.iter().map(|r| r.gt.clone()).collect();
        acc.add(&match_instances(&preds, &gts, threshold)?);
    }

    let histogram = match (hist_bins, hist_csv) {
        (None, None) => None,
        (width, _) => {
            let mut samples = Vec::new();
            for (frame, frame_labels) in dataset.frames.iter().zip(&labels) {
                let overlaps = frame_overlap_scores(frame);
                for (idx, mask) in frame_labels {
                    if let Some(i) = *idx {
                        samples.push(OverlapSample {
                            label: mask,
                            ground_truth: &frame.instances[i].gt,
                            overlap: overlaps[i],
                        });
                    }
                }
            }
            Some(correctness_by_overlap(&samples, width.unwrap_or(0.1))?)
        }
    };
    if let (Some(h), Some(path)) = (&histogram, hist_csv) {
        fs::write(path, h.to_csv())?;
    }

    let report = EvalReport {
        labels: source.to_string(),
        threshold,
        scores: acc.scores(),
        histogram,
    };
    emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
