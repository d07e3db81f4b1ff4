use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use mstl_core::evalsuite::{
    evaluate, export_trajectory, speed_sweep, DtwLocalizer, ErrorReport, FingerprintDB, Localizer, NeuralLocalizer,
    SweepTable,
};
use mstl_core::magdata::{
    build_dataset, fit_normalizer, load_traces, resample_speed, split, write_trace, FeatureTrace, NormalizationStats,
    SpeedFactor, Trace, WindowedDataset,
};
use mstl_core::neuralnet::{load_checkpoint, save_checkpoint, Model};
use mstl_core::simworld::{load_walks, walk, FieldModel};
use mstl_core::train::{train_with, TrainHistory};
use serde::Serialize;
use serde_json::json;

use crate::config::{Algorithm, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.mstl";
pub const HISTORY_FILE: &str = "history.json";
pub const STATS_FILE: &str = "stats.json";

/// Traces partitioned for one run, with normalization fitted on the training part.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Vec<Trace>,
    pub val: Vec<Trace>,
    pub test: Vec<Trace>,
    pub stats: NormalizationStats,
}

impl Prepared {
    pub fn from_traces(cfg: &RunConfig, traces: Vec<Trace>) -> Result<Self> {
        let (train, val, test) = match &cfg.data.partition {
            Some(p) => {
                let pick = |ids: &[String]| -> Result<Vec<Trace>> {
                    ids.iter()
                        .map(|id| {
                            traces
                                .iter()
                                .find(|t| t.id() == id)
                                .cloned()
                                .with_context(|| format!("partition names unknown trace `{id}`"))
                        })
                        .collect()
                };
                (pick(&p.train)?, pick(&p.val)?, pick(&p.test)?)
            }
            None => split(&traces, cfg.data.split, cfg.seed)?,
        };
        ensure!(
            !train.is_empty() && !val.is_empty() && !test.is_empty(),
            "train, validation and test partitions must each hold a trace"
        );
        let stats = fit_normalizer(&train)?;
        Ok(Self { train, val, test, stats })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let path = cfg.traces_path()?;
        let traces = load_traces(path).with_context(|| format!("loading traces from {}", path.display()))?;
        Self::from_traces(cfg, traces)
    }

    /// Windows of `traces` resampled at every factor in `factors`.
    pub fn windows(&self, traces: &[Trace], factors: &[SpeedFactor], window: usize, stride: usize) -> Result<WindowedDataset> {
        let mut resampled = Vec::with_capacity(traces.len() * factors.len());
        for &f in factors {
            for t in traces {
                resampled.push(resample_speed(t, f)?);
            }
        }
        Ok(build_dataset(&resampled, &self.stats, window, stride)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Write one trace CSV per walk in `walks`, named after the trace id.
pub fn cmd_simulate(world: &Path, walks: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let model = FieldModel::load(world).with_context(|| format!("reading world file {}", world.display()))?;
    let walks = load_walks(walks).with_context(|| format!("reading walk file {}", walks.display()))?;
    ensure!(!walks.is_empty(), "walk file lists no walks");
    ensure_dir(out)?;
    let mut written = Vec::with_capacity(walks.len());
    for cfg in &walks {
        let trace = walk(&model, cfg)?;
        let path = out.join(format!("{}.csv", trace.id()));
        ensure!(!written.contains(&path), "two walks share the trace id `{}`", trace.id());
        write_trace(&trace, &path).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    info!("wrote {} traces to {}", written.len(), out.display());
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub window: usize,
    pub stride: usize,
    pub train_factors: Vec<SpeedFactor>,
    pub train_traces: Vec<String>,
    pub val_traces: Vec<String>,
    pub test_traces: Vec<String>,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

/// Split, fit normalization and count windows; writes `stats.json` and `dataset.json`.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> Result<PreprocessSummary> {
    let prep = Prepared::load(cfg)?;
    let (t, s) = (cfg.model.window, cfg.data.stride);
    let ids = |v: &[Trace]| v.iter().map(|t| t.id().to_owned()).collect::<Vec<_>>();
    let summary = PreprocessSummary {
        window: t,
        stride: s,
        train_factors: cfg.data.train_factors.clone(),
        train_traces: ids(&prep.train),
        val_traces: ids(&prep.val),
        test_traces: ids(&prep.test),
        train_windows: prep.windows(&prep.train, &cfg.data.train_factors, t, s)?.len(),
        val_windows: prep.windows(&prep.val, &cfg.data.train_factors, t, s)?.len(),
        test_windows: prep.windows(&prep.test, &[SpeedFactor::IDENTITY], t, 1)?.len(),
    };
    ensure_dir(out)?;
    write_json(&out.join(STATS_FILE), &prep.stats)?;
    write_json(&out.join("dataset.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: TrainHistory,
    pub warnings: Vec<String>,
}

/// Train the configured model; writes the checkpoint, history and normalization.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let warnings: Vec<String> = cfg.model.receptive_field_warning().into_iter().collect();
    for w in &warnings {
        warn!("{w}");
    }
    let prep = Prepared::load(cfg)?;
    let (t, s) = (cfg.model.window, cfg.data.stride);
    let train_ds = prep.windows(&prep.train, &cfg.data.train_factors, t, s)?;
    let val_ds = prep.windows(&prep.val, &cfg.data.train_factors, t, s)?;
    info!(
        "training {} on {} windows, validating on {}",
        cfg.model.kind,
        train_ds.len(),
        val_ds.len()
    );
    let (params, history) = train_with::<f64, _>(&cfg.model, &train_ds, &val_ds, &cfg.train, |e, _, _| {
        info!("epoch {:>4}  train {:.6}  val {:.6}", e.epoch, e.train_loss, e.val_loss);
        ControlFlow::Continue(())
    })
    .context("training failed")?;

    ensure_dir(out)?;
    let meta = json!({
        "name": cfg.name,
        "seed": cfg.seed,
        "stats": prep.stats,
        "train": cfg.train,
        "train_factors": cfg.data.train_factors,
        "stride": cfg.data.stride,
    });
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &cfg.model, &params, &meta)
        .with_context(|| format!("writing {}", checkpoint.display()))?;
    let history_path = out.join(HISTORY_FILE);
    write_json(&history_path, &history)?;
    write_json(&out.join(STATS_FILE), &prep.stats)?;
    info!(
        "best epoch {} of {} ({:?}); checkpoint at {}",
        history.best_epoch,
        history.stopped_epoch,
        history.stop_reason,
        checkpoint.display()
    );
    Ok(TrainOutcome {
        checkpoint,
        history_path,
        history,
        warnings,
    })
}

/// Build the localizer for `alg`. Neural algorithms need a checkpoint of the same kind.
pub fn build_localizer(
    cfg: &RunConfig,
    prep: &Prepared,
    alg: Algorithm,
    checkpoint: Option<&Path>,
) -> Result<Box<dyn Localizer>> {
    let Some(kind) = alg.model_kind() else {
        if checkpoint.is_some() {
            info!("DTW ignores the checkpoint");
        }
        let db_traces = prep
            .train
            .iter()
            .flat_map(|t| cfg.data.train_factors.iter().map(move |&f| resample_speed(t, f)))
            .map(|t| t.map(|t| FeatureTrace::from_trace(&t, &prep.stats)))
            .collect::<mstl_core::Result<Vec<_>>>()?;
        return Ok(Box::new(DtwLocalizer {
            db: FingerprintDB::new(db_traces, cfg.model.window)?,
        }));
    };
    let path = checkpoint.with_context(|| format!("{alg} needs --checkpoint"))?;
    let ckpt = load_checkpoint::<f64>(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if ckpt.spec.kind != kind {
        bail!("checkpoint {} holds a {} model, not {alg}", path.display(), ckpt.spec.kind);
    }
    if ckpt.spec.window != cfg.model.window {
        bail!(
            "checkpoint window {} differs from the configured window {}",
            ckpt.spec.window,
            cfg.model.window
        );
    }
    if let Some(stats) = ckpt.meta.get("stats") {
        let stats: NormalizationStats = serde_json::from_value(stats.clone())?;
        ensure!(
            stats == prep.stats,
            "checkpoint normalization differs from the one fitted on this config's training traces"
        );
    }
    Ok(Box::new(NeuralLocalizer::new(Model::new(ckpt.spec)?, ckpt.params)?))
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: ErrorReport,
    pub report_path: PathBuf,
    pub trajectory_path: PathBuf,
}

fn scenario(cfg: &RunConfig) -> String {
    if cfg.eval.scenario.is_empty() {
        cfg.name.clone()
    } else {
        cfg.eval.scenario.clone()
    }
}

/// Evaluate on the test traces; writes `report_<ALG>.json` and `trajectory_<ALG>.csv`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, alg: Algorithm, out: &Path) -> Result<EvalOutcome> {
    let prep = Prepared::load(cfg)?;
    let localizer = build_localizer(cfg, &prep, alg, checkpoint)?;
    let test = prep.windows(&prep.test, &[SpeedFactor::IDENTITY], cfg.model.window, 1)?;
    let (mut report, pred) = evaluate(localizer.as_ref(), &test, &scenario(cfg))?;
    report.metadata.algorithm = alg.to_string();
    report.metadata.speed_factor = Some(SpeedFactor::IDENTITY.to_string());
    ensure_dir(out)?;
    let report_path = out.join(format!("report_{alg}.json"));
    write_json(&report_path, &report)?;
    let trajectory_path = out.join(format!("trajectory_{alg}.csv"));
    export_trajectory(&pred, test.labels(), &trajectory_path)?;
    info!("{alg}: mean error {:.3} m, sd {:.3} m over {} queries", report.mean, report.sd, report.errors.len());
    Ok(EvalOutcome {
        report,
        report_path,
        trajectory_path,
    })
}

/// Speed sweep over the test traces; writes `sweep_<ALG>.json`.
pub fn cmd_sweep(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    alg: Algorithm,
    factors: &[SpeedFactor],
    out: &Path,
) -> Result<(SweepTable, PathBuf)> {
    ensure!(!factors.is_empty(), "no speed factors given");
    let prep = Prepared::load(cfg)?;
    let localizer = build_localizer(cfg, &prep, alg, checkpoint)?;
    let mut table = speed_sweep(localizer.as_ref(), &prep.test, factors, &prep.stats, cfg.model.window, &scenario(cfg))?;
    for (f, r) in &mut table.rows {
        r.metadata.algorithm = alg.to_string();
        info!("{alg} at {f}: mean error {:.3} m", r.mean);
    }
    ensure_dir(out)?;
    let path = out.join(format!("sweep_{alg}.json"));
    write_json(&path, &table)?;
    Ok((table, path))
}
