//! Mini-batch training with early stopping, learning-rate reduction on
//! plateau and best-value checkpointing.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointManager, MonitorTracker};
use crate::error::{Error, Result};
use crate::graph::{Mode, NetworkGraph};
use crate::metrics::{Average, ConfusionMatrix};
use crate::nn::categorical_cross_entropy;
use crate::optim::Optimizer;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// One training example: input `[C,H,W]`, one-hot target `[K,H,W]`, and an
/// optional per-pixel ignore mask `[1,H,W]` (nonzero = excluded).
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub target: Tensor,
    pub ignore: Option<Tensor>,
}

/// Indexed access to samples, so large datasets can be loaded lazily.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Sample> {
        <[Sample]>::get(self, index)
            .cloned()
            .ok_or_else(|| Error::data(format!("sample {index} out of range")))
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        SampleSource::get(self.as_slice(), index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    #[serde(default = "default_monitor")]
    pub monitor: String,
    #[serde(default = "default_stop_delta")]
    pub min_delta: f64,
    #[serde(default = "default_stop_patience")]
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            monitor: default_monitor(),
            min_delta: default_stop_delta(),
            patience: default_stop_patience(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceLrOnPlateau {
    #[serde(default = "default_monitor")]
    pub monitor: String,
    #[serde(default = "default_plateau_patience")]
    pub patience: usize,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default = "default_plateau_delta")]
    pub min_delta: f64,
    #[serde(default)]
    pub min_lr: f64,
}

impl Default for ReduceLrOnPlateau {
    fn default() -> Self {
        Self {
            monitor: default_monitor(),
            patience: default_plateau_patience(),
            factor: default_factor(),
            min_delta: default_plateau_delta(),
            min_lr: 0.0,
        }
    }
}

fn default_monitor() -> String {
    "val_loss".into()
}
fn default_stop_delta() -> f64 {
    0.001
}
fn default_stop_patience() -> usize {
    20
}
fn default_plateau_patience() -> usize {
    5
}
fn default_factor() -> f64 {
    0.2
}
fn default_plateau_delta() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSettings {
    pub path: PathBuf,
    #[serde(default = "default_monitor")]
    pub monitor: String,
}

/// Metrics tracked per epoch in addition to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
    #[serde(alias = "MIoU")]
    Miou,
    F1,
    Dice,
}

impl MetricKind {
    pub fn key(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::Miou => "miou",
            MetricKind::F1 => "f1",
            MetricKind::Dice => "dice",
        }
    }

    fn compute(self, cm: &ConfusionMatrix, avg: Average) -> Result<f64> {
        match self {
            MetricKind::Accuracy => cm.accuracy(),
            MetricKind::Precision => cm.precision_avg(avg),
            MetricKind::Recall => cm.recall_avg(avg),
            MetricKind::Miou => cm.mean_iou(),
            MetricKind::F1 => cm.f1_avg(avg),
            MetricKind::Dice => cm.dice_avg(avg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Reshuffle sample order every epoch.
    pub shuffle: bool,
    pub metrics: Vec<MetricKind>,
    pub average: Average,
    pub early_stopping: Option<EarlyStopping>,
    pub reduce_lr: Option<ReduceLrOnPlateau>,
    pub checkpoint: Option<CheckpointSettings>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 1,
            seed: 0,
            shuffle: true,
            metrics: vec![],
            average: Average::Macro,
            early_stopping: None,
            reduce_lr: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("epochs and batch_size must be >= 1"));
        }
        if let Some(es) = &self.early_stopping {
            if es.patience == 0 || !(es.min_delta >= 0.0) {
                return Err(Error::param("early stopping needs patience >= 1 and min_delta >= 0"));
            }
        }
        if let Some(p) = &self.reduce_lr {
            if p.patience == 0 || !(p.factor > 0.0 && p.factor < 1.0) || !(p.min_delta >= 0.0) {
                return Err(Error::param(
                    "plateau reduction needs patience >= 1, 0 < factor < 1 and min_delta >= 0",
                ));
            }
        }
        Ok(())
    }

    fn monitors(&self) -> impl Iterator<Item = &str> {
        self.early_stopping
            .iter()
            .map(|e| e.monitor.as_str())
            .chain(self.reduce_lr.iter().map(|p| p.monitor.as_str()))
            .chain(self.checkpoint.iter().map(|c| c.monitor.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// `name` for training metrics, `val_name` for validation ones.
    pub metrics: BTreeMap<String, f64>,
}

impl EpochRecord {
    /// Looks up `loss`, `train_loss`, `val_loss` or a metric key.
    pub fn value(&self, key: &str) -> Option<f64> {
        match key {
            "loss" | "train_loss" => Some(self.train_loss),
            "val_loss" => self.val_loss,
            k => self.metrics.get(k).copied(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch after which early stopping ended the run.
    pub stopped_epoch: Option<usize>,
    pub checkpoints_written: usize,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Fixed-width text table, one row per epoch.
    pub fn to_table(&self) -> String {
        let keys: Vec<&String> = self
            .records
            .first()
            .map(|r| r.metrics.keys().collect())
            .unwrap_or_default();
        let mut s = format!("{:>6} {:>12} {:>12} {:>12}", "epoch", "lr", "train_loss", "val_loss");
        for k in &keys {
            s.push_str(&format!(" {k:>14}"));
        }
        s.push('\n');
        for r in &self.records {
            let val = r.val_loss.map_or("-".to_string(), |v| format!("{v:.6}"));
            s.push_str(&format!("{:>6} {:>12.6e} {:>12.6} {:>12}", r.epoch, r.lr, r.train_loss, val));
            for k in &keys {
                match r.metrics.get(*k) {
                    Some(v) => s.push_str(&format!(" {v:>14.6}")),
                    None => s.push_str(&format!(" {:>14}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }
}

struct Batch {
    input: Tensor,
    target: Tensor,
    ignore: Option<Tensor>,
}

fn make_batch(source: &(impl SampleSource + ?Sized), indices: &[usize]) -> Result<Batch> {
    let samples: Vec<Sample> = indices.iter().map(|&i| source.get(i)).collect::<Result<_>>()?;
    if let [s] = samples.as_slice() {
        return Ok(Batch {
            input: s.input.clone(),
            target: s.target.clone(),
            ignore: s.ignore.clone(),
        });
    }
    let inputs: Vec<Tensor> = samples.iter().map(|s| s.input.clone()).collect();
    let targets: Vec<Tensor> = samples.iter().map(|s| s.target.clone()).collect();
    let ignore = if samples.iter().any(|s| s.ignore.is_some()) {
        let masks = samples
            .iter()
            .map(|s| {
                s.ignore.clone().map_or_else(
                    || {
                        let d = s.input.dims4()?;
                        Tensor::new(&[1, d.h, d.w], 0.0)
                    },
                    Ok,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Some(Tensor::stack(&masks)?)
    } else {
        None
    };
    Ok(Batch {
        input: Tensor::stack(&inputs).map_err(|e| Error::data(format!("cannot batch samples: {e}")))?,
        target: Tensor::stack(&targets).map_err(|e| Error::data(format!("cannot batch targets: {e}")))?,
        ignore,
    })
}

/// Loss and confusion matrix of a graph over a source in inference mode.
///
/// The loss is the mean over all non-ignored pixels; samples whose pixels
/// are all ignored contribute nothing. Errors with `EmptyLoss` if nothing
/// is left to score.
pub fn evaluate(
    graph: &NetworkGraph,
    source: &(impl SampleSource + ?Sized),
    batch_size: usize,
) -> Result<(f64, ConfusionMatrix)> {
    let mut cm = ConfusionMatrix::new(graph.output_channels())?;
    let mut loss_sum = 0.0;
    let mut pixels = 0usize;
    let order: Vec<usize> = (0..source.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let b = make_batch(source, chunk)?;
        let probs = graph.predict(&b.input)?;
        match categorical_cross_entropy(&probs, &b.target, b.ignore.as_ref()) {
            Ok(out) => {
                loss_sum += out.loss * out.valid as f64;
                pixels += out.valid;
            }
            Err(Error::EmptyLoss(_)) => continue,
            Err(e) => return Err(e),
        }
        cm.update_from_probs(&probs, &b.target, b.ignore.as_ref())?;
    }
    if pixels == 0 {
        return Err(Error::EmptyLoss("every evaluated pixel is ignored".into()));
    }
    Ok((loss_sum / pixels as f64, cm))
}

struct Plateau {
    cfg: ReduceLrOnPlateau,
    tracker: MonitorTracker,
    wait: usize,
    reductions: i32,
    base_lr: f64,
}

struct Stopper {
    cfg: EarlyStopping,
    tracker: MonitorTracker,
    wait: usize,
}

fn monitored(record: &EpochRecord, key: &str) -> Result<f64> {
    record.value(key).ok_or_else(|| Error::State(format!(
        "monitored quantity `{key}` is not available (known: loss, val_loss, {})",
        record.metrics.keys().cloned().collect::<Vec<_>>().join(", ")
    )))
}

/// Trains `graph` in place. The graph must end in a softmax node; the loss
/// is categorical cross-entropy.
///
/// Each epoch's sample order and dropout masks come from
/// `SeededRng::derive(seed, epoch)`, so a run is reproducible bit for bit.
/// Callbacks run at the end of each epoch in the order plateau,
/// early stopping, checkpoint.
pub fn fit(
    graph: &mut NetworkGraph,
    train: &(impl SampleSource + ?Sized),
    val: Option<&(impl SampleSource + ?Sized)>,
    optimizer: &mut Optimizer,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::data("training source is empty"));
    }
    if val.is_none() {
        if let Some(m) = config.monitors().find(|m| m.starts_with("val_")) {
            return Err(Error::param(format!(
                "monitor `{m}` needs a validation source"
            )));
        }
    }
    let mut plateau = config.reduce_lr.clone().map(|cfg| Plateau {
        tracker: MonitorTracker::new(&cfg.monitor, cfg.min_delta),
        cfg,
        wait: 0,
        reductions: 0,
        base_lr: optimizer.learning_rate(),
    });
    let mut stopper = config.early_stopping.clone().map(|cfg| Stopper {
        tracker: MonitorTracker::new(&cfg.monitor, cfg.min_delta),
        cfg,
        wait: 0,
    });
    let mut ckpt = config
        .checkpoint
        .as_ref()
        .map(|c| CheckpointManager::new(&c.path, &c.monitor));
    let mut history = History::default();
    let classes = graph.output_channels();

    for epoch in 0..config.epochs {
        let mut rng = SeededRng::derive(config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let lr = optimizer.learning_rate();
        let mut loss_sum = 0.0;
        let mut pixels = 0usize;
        let mut cm = ConfusionMatrix::new(classes)?;
        for chunk in order.chunks(config.batch_size) {
            let b = make_batch(train, chunk)?;
            let cache = graph.forward(&b.input, Mode::Train(&mut rng))?;
            let out = match categorical_cross_entropy(cache.output(), &b.target, b.ignore.as_ref()) {
                Ok(o) => o,
                Err(Error::EmptyLoss(_)) => {
                    debug!("epoch {epoch}: skipping fully ignored batch {chunk:?}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            loss_sum += out.loss * out.valid as f64;
            pixels += out.valid;
            if !config.metrics.is_empty() {
                cm.update_from_probs(cache.output(), &b.target, b.ignore.as_ref())?;
            }
            let grads = graph.backward_logits(&cache, &out.grad_logits)?;
            optimizer.step(&mut graph.parameters_mut(), &grads.params)?;
        }
        if pixels == 0 {
            return Err(Error::EmptyLoss(format!(
                "epoch {epoch}: every training pixel is ignored"
            )));
        }
        let mut record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / pixels as f64,
            val_loss: None,
            metrics: BTreeMap::new(),
        };
        for &m in &config.metrics {
            if let Ok(v) = m.compute(&cm, config.average) {
                record.metrics.insert(m.key().to_string(), v);
            }
        }
        if let Some(v) = val {
            let (vl, vcm) = evaluate(graph, v, config.batch_size)?;
            record.val_loss = Some(vl);
            for &m in &config.metrics {
                if let Ok(x) = m.compute(&vcm, config.average) {
                    record.metrics.insert(format!("val_{}", m.key()), x);
                }
            }
        }
        info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.6} val_loss {}",
            record.train_loss,
            record.val_loss.map_or("-".into(), |v| format!("{v:.6}"))
        );

        if let Some(p) = plateau.as_mut() {
            let v = monitored(&record, &p.cfg.monitor)?;
            if p.tracker.observe(v) {
                p.wait = 0;
            } else {
                p.wait += 1;
                if p.wait >= p.cfg.patience {
                    let next = p.base_lr * p.cfg.factor.powf(f64::from(p.reductions + 1));
                    if next >= p.cfg.min_lr {
                        p.reductions += 1;
                        optimizer.set_learning_rate(next);
                        info!("epoch {epoch}: reducing learning rate to {next:.3e}");
                    } else if optimizer.learning_rate() > p.cfg.min_lr {
                        optimizer.set_learning_rate(p.cfg.min_lr);
                    }
                    p.wait = 0;
                }
            }
        }
        let mut stop = false;
        if let Some(s) = stopper.as_mut() {
            let v = monitored(&record, &s.cfg.monitor)?;
            if s.tracker.observe(v) {
                s.wait = 0;
            } else {
                s.wait += 1;
                if s.wait >= s.cfg.patience {
                    stop = true;
                }
            }
        }
        if let Some(c) = ckpt.as_mut() {
            let v = monitored(&record, c.monitor())?;
            if c.observe(graph, v)? {
                history.checkpoints_written += 1;
            }
        }
        history.records.push(record);
        if stop {
            warn!("early stopping after epoch {epoch}");
            history.stopped_epoch = Some(epoch);
            break;
        }
    }
    Ok(history)
}
