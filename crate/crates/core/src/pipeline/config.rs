//! Declarative pipeline configuration.
//!
//! The file is YAML restricted to maps, lists and scalars. Relative paths
//! resolve against the directory holding the config file, and the
//! placeholders `{name}` and `{workspace}` expand inside path values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Average;
use crate::nn::ActivationKind;
use crate::optim::OptimizerConfig;
use crate::topology::{TopologyKind, TopologySpec};
use crate::train::{EarlyStopping, MetricKind, ReduceLrOnPlateau};

fn default_name() -> String {
    "terraseg".into()
}
fn default_workspace() -> String {
    ".".into()
}
fn default_model_path() -> String {
    "{workspace}/{name}.tseg".into()
}
fn default_true() -> bool {
    true
}
fn default_weeks() -> usize {
    53
}
fn default_tile_size() -> usize {
    256
}
fn default_scl_ignore() -> Vec<u8> {
    crate::geo::DEFAULT_SCL_IGNORE.to_vec()
}
fn default_folds() -> usize {
    5
}
fn default_validation_fold() -> Option<usize> {
    Some(0)
}
fn default_min_pixels() -> usize {
    1
}
fn default_scale() -> f64 {
    1.0
}
fn default_depth() -> usize {
    2
}
fn default_base() -> usize {
    8
}
fn default_batch() -> usize {
    1
}
fn default_epochs() -> usize {
    100
}
fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Miou]
}
fn default_monitor() -> String {
    "val_loss".into()
}
fn default_limit() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_name")]
    pub name: String,
    /// Directory for checkpoints, histories, reports and predictions.
    #[serde(default = "default_workspace")]
    pub workspace: String,
    #[serde(default = "default_model_path")]
    pub model_path: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: default_name(),
            workspace: default_workspace(),
            model_path: default_model_path(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRef {
    pub component: String,
}

impl ComponentRef {
    pub fn new(component: impl Into<String>) -> Self {
        Self { component: component.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// Chunk store directory.
    pub source: String,
    /// Input components, fused channel-wise in key order.
    #[serde(default)]
    pub inputs: BTreeMap<String, ComponentRef>,
    #[serde(default)]
    pub targets: BTreeMap<String, ComponentRef>,
    /// Defaults to `<first input>_ignore`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore_mask: Option<ComponentRef>,
    /// Half-open week range `[start, end)` used for training and evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_timestamps: Option<[usize; 2]>,
    #[serde(default = "default_true")]
    pub randomise: bool,
    pub random_seed: u64,
    /// Multiplier applied to input values when tiles are loaded.
    #[serde(default = "default_scale")]
    pub input_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInput {
    pub week: usize,
    /// Band-sequential raster with a JSON sidecar.
    pub image: String,
    /// Optional scene classification layer used for the ignore mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scl: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestComponent {
    /// Store path of the image array, e.g. `Sentinel-2/10m`.
    pub name: String,
    #[serde(default = "default_tile_size")]
    pub tile_size: usize,
    #[serde(default = "default_true")]
    pub deflate: bool,
    #[serde(default = "default_scl_ignore")]
    pub scl_ignore: Vec<u8>,
    pub scenes: Vec<SceneInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelIngest {
    /// Label vectors (`{"crs", "features": [{"class", "wkt"}]}`).
    pub path: String,
    /// Store path of the label array, e.g. `labels/clc/clc_10m`.
    pub component: String,
    /// Image component whose grid the labels are burned on; defaults to the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub num_classes: usize,
    /// Code to class index; codes are used unchanged when empty.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_map: BTreeMap<u16, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// Length of the time axis of every image array.
    #[serde(default = "default_weeks")]
    pub weeks: usize,
    pub components: Vec<IngestComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelIngest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Fold held out for validation; `null` validates on the training data.
    #[serde(default = "default_validation_fold")]
    pub validation_fold: Option<usize>,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Pixels a class needs in a tile to count as present there.
    #[serde(default = "default_min_pixels")]
    pub min_pixels: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            folds: default_folds(),
            validation_fold: default_validation_fold(),
            stratified: true,
            min_pixels: default_min_pixels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: TopologyKind,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: ActivationKind,
    #[serde(default = "default_true")]
    pub padded: bool,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelSection {
    pub fn topology(&self, in_channels: usize, input_size: [usize; 2]) -> TopologySpec {
        TopologySpec {
            kind: self.kind,
            depth: self.depth,
            base_channels: self.base_channels,
            in_channels,
            num_classes: self.num_classes,
            activation: self.activation,
            padded: self.padded,
            dropout: self.dropout,
            input_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CategoricalCrossentropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSection {
    #[serde(default = "default_monitor")]
    pub monitor: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Callbacks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<EarlyStopping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_lr_on_plateau: Option<ReduceLrOnPlateau>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub model: ModelSection,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub average: Average,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Keeps the best weights by `monitor`; without it the final weights are saved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<CheckpointSection>,
    #[serde(default)]
    pub callbacks: Callbacks,
    /// Defaults to `data_source.random_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Defaults to `split.validation_fold`; `null` there means every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    /// Defaults to the first ingested week inside the slice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub week: Option<usize>,
    /// Half-open tile row range; defaults to the whole grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SortSection {
    pub key: String,
    #[serde(default)]
    pub order: super::query::SortOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySection {
    /// `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS[.fff]Z`; a bare end date means its last millisecond.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub begin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filename: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<String>,
    /// WKT polygon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<String>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortSection>,
    /// Recorded responses to replay instead of contacting the catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub configuration: RunSection,
    pub data_source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestSection>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerSection>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QuerySection>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Rejects language-object tags such as `!!python/object/apply:...`.
/// Plain YAML core tags (`!!float`, `!!int`, `!!str`, `!!bool`) are fine.
fn check_tags(text: &str) -> Result<()> {
    const CORE: [&str; 6] = ["!!float", "!!int", "!!str", "!!bool", "!!null", "!!seq"];
    for (n, line) in text.lines().enumerate() {
        let code = line.split(" #").next().unwrap_or("");
        let mut rest = code;
        while let Some(i) = rest.find('!') {
            let tag: String = rest[i..].chars().take_while(|c| !c.is_whitespace()).collect();
            let quoted = rest[..i].matches(['"', '\'']).count() % 2 == 1;
            if !quoted && tag.len() > 1 && !CORE.contains(&tag.as_str()) {
                return Err(Error::config(
                    format!("line {}", n + 1),
                    format!("unsupported tag `{tag}`; use plain keys such as `optimizer: {{kind: adam}}`"),
                ));
            }
            rest = &rest[i + tag.len().max(1)..];
        }
    }
    Ok(())
}

fn error_path(path: &serde_path_to_error::Path, message: &str) -> String {
    let mut p = path.to_string();
    if p == "." {
        p.clear();
    }
    // serde reports a missing field at its parent
    let missing = message.find("missing field `").map(|i| &message[i + 15..]);
    if let Some(field) = missing.and_then(|m| m.split('`').next()) {
        if p.is_empty() {
            p = field.to_string();
        } else {
            p = format!("{p}.{field}");
        }
    }
    if p.is_empty() {
        "<root>".into()
    } else {
        p
    }
}

/// Parses and validates a config document. Relative paths resolve against
/// the current directory; use [`load_config`] to resolve against the file.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    check_tags(text)?;
    let de = serde_yaml::Deserializer::from_str(text);
    let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        Error::config(error_path(e.path(), &message), message)
    })?;
    cfg.base_dir = PathBuf::from(".");
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    if cfg.base_dir.as_os_str().is_empty() {
        cfg.base_dir = PathBuf::from(".");
    }
    Ok(cfg)
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

fn check_component(name: &str, path: &str) -> Result<()> {
    let ok = !name.trim_matches('/').is_empty()
        && name.trim_matches('/').split('/').all(|s| crate::store::validate_name(s).is_ok());
    check(ok, path, format!("`{name}` is not a valid store path"))
}

impl PipelineConfig {
    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let ds = &self.data_source;
        check(!ds.source.is_empty(), "data_source.source", "store path is empty")?;
        for (k, c) in ds.inputs.iter().chain(&ds.targets) {
            check_component(&c.component, &format!("data_source.{k}.component"))?;
        }
        check(ds.targets.len() <= 1, "data_source.targets", "exactly one target component is supported")?;
        if let Some([a, b]) = ds.slice_timestamps {
            check(a < b, "data_source.slice_timestamps", format!("empty week range [{a}, {b})"))?;
        }
        check(
            ds.input_scale.is_finite() && ds.input_scale != 0.0,
            "data_source.input_scale",
            "must be finite and nonzero",
        )?;
        if let Some(ing) = &self.ingest {
            check(ing.weeks >= 1, "ingest.weeks", "must be at least 1")?;
            check(!ing.components.is_empty(), "ingest.components", "at least one component is required")?;
            for (i, c) in ing.components.iter().enumerate() {
                let p = format!("ingest.components[{i}]");
                check_component(&c.name, &format!("{p}.name"))?;
                check(c.tile_size >= 1, &format!("{p}.tile_size"), "must be at least 1")?;
                for (j, s) in c.scenes.iter().enumerate() {
                    check(
                        s.week < ing.weeks,
                        &format!("{p}.scenes[{j}].week"),
                        format!("week {} outside 0..{}", s.week, ing.weeks),
                    )?;
                }
            }
            if let Some(l) = &ing.labels {
                check_component(&l.component, "ingest.labels.component")?;
                check(
                    (1..=255).contains(&l.num_classes),
                    "ingest.labels.num_classes",
                    "must be between 1 and 255",
                )?;
                if let Some(r) = &l.reference {
                    check(
                        ing.components.iter().any(|c| &c.name == r),
                        "ingest.labels.reference",
                        format!("`{r}` is not an ingested component"),
                    )?;
                }
                for (code, &class) in &l.class_map {
                    check(
                        usize::from(class) < l.num_classes,
                        &format!("ingest.labels.class_map.{code}"),
                        format!("class {class} outside 0..{}", l.num_classes),
                    )?;
                }
            }
        }
        let sp = &self.split;
        check(sp.folds >= 2, "split.folds", "at least 2 folds are required")?;
        if let Some(v) = sp.validation_fold {
            check(v < sp.folds, "split.validation_fold", format!("fold {v} outside 0..{}", sp.folds))?;
        }
        if let Some(f) = self.evaluate.fold {
            check(f < sp.folds, "evaluate.fold", format!("fold {f} outside 0..{}", sp.folds))?;
        }
        if let Some(t) = &self.trainer {
            check(t.model.num_classes >= 2, "trainer.model.num_classes", "at least 2 classes are required")?;
            check(t.model.num_classes <= 255, "trainer.model.num_classes", "at most 255 classes")?;
            check(t.epochs >= 1, "trainer.epochs", "must be at least 1")?;
            check(t.batch_size >= 1, "trainer.batch_size", "must be at least 1")?;
            t.optimizer
                .validate()
                .map_err(|e| Error::config("trainer.optimizer", e.to_string()))?;
            let side = 1usize << t.model.depth.min(16);
            t.model
                .topology(1, [side, side])
                .validate()
                .map_err(|e| Error::config("trainer.model", e.to_string()))?;
        }
        for (key, range) in [("predict.rows", self.predict.rows), ("predict.cols", self.predict.cols)] {
            if let Some([a, b]) = range {
                check(a < b, key, format!("empty tile range [{a}, {b})"))?;
            }
        }
        if self.query.is_some() {
            self.catalog_query()?;
        }
        Ok(())
    }

    /// Expands placeholders and resolves `value` against the config directory.
    pub fn resolve(&self, value: &str) -> PathBuf {
        let workspace = self.configuration.workspace.replace("{name}", &self.configuration.name);
        let text = value.replace("{workspace}", &workspace).replace("{name}", &self.configuration.name);
        let p = PathBuf::from(text);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn workspace(&self) -> PathBuf {
        self.resolve(&self.configuration.workspace)
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.data_source.source)
    }

    pub fn model_path(&self) -> PathBuf {
        self.resolve(&self.configuration.model_path)
    }

    /// Seed used for weight initialization and sample order.
    pub fn train_seed(&self) -> u64 {
        self.trainer
            .as_ref()
            .and_then(|t| t.random_seed)
            .unwrap_or(self.data_source.random_seed)
    }

    /// Replaces every seed, as `--seed` does.
    pub fn override_seed(&mut self, seed: u64) {
        self.data_source.random_seed = seed;
        if let Some(t) = &mut self.trainer {
            t.random_seed = Some(seed);
        }
    }

    /// Sends every output to `dir`, as `--out` does. An absolute or
    /// current-directory path is taken as is.
    pub fn override_workspace(&mut self, dir: &Path) {
        let cwd_relative = if dir.is_absolute() {
            dir.to_path_buf()
        } else {
            std::env::current_dir().map(|c| c.join(dir)).unwrap_or_else(|_| dir.to_path_buf())
        };
        self.configuration.workspace = cwd_relative.to_string_lossy().into_owned();
    }

    pub fn trainer(&self) -> Result<&TrainerSection> {
        self.trainer
            .as_ref()
            .ok_or_else(|| Error::config("trainer", "section is required for this command"))
    }

    pub fn ingest(&self) -> Result<&IngestSection> {
        self.ingest
            .as_ref()
            .ok_or_else(|| Error::config("ingest", "section is required for this command"))
    }

    pub fn catalog_query(&self) -> Result<super::query::CatalogQuery> {
        let q = self
            .query
            .as_ref()
            .ok_or_else(|| Error::config("query", "section is required for this command"))?;
        super::query::CatalogQuery::from_section(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
data_source:
  source: store
  random_seed: 42
trainer:
  model:
    kind: unet
    num_classes: 4
";

    #[test]
    fn minimal_config_gets_adam_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        let t = c.trainer.as_ref().unwrap();
        assert_eq!(
            t.optimizer,
            OptimizerConfig::Adam { lr: 0.001, beta_1: 0.9, beta_2: 0.999, epsilon: 1e-7 }
        );
        assert_eq!((t.epochs, t.batch_size), (100, 1));
        assert_eq!(c.split.validation_fold, Some(0));
        assert_eq!(c.train_seed(), 42);
    }

    #[test]
    fn appendix_style_keys_parse() {
        let text = "
configuration:
  name: unet_s2
  workspace: runs/{name}
data_source:
  source: data/romania.store
  slice_timestamps: [14, 32]
  inputs:
    input_1:
      component: Sentinel-2/10m
  targets:
    output_1:
      component: labels/clc/clc_10m
  randomise: True
  random_seed: 42
trainer:
  model:
    kind: unet
    num_classes: 8
  batch_size: 1
  epochs: 100
  metrics: [MIoU]
  loss: categorical_crossentropy
  checkpoint:
    monitor: val_loss
  optimizer:
    kind: adam
    lr: 0.001
    beta_1: 0.9
    beta_2: !!float 0.999
    epsilon: 1e-7
  callbacks:
    early_stopping: {monitor: val_loss, min_delta: 0.001, patience: 20}
    reduce_lr_on_plateau: {monitor: val_loss, patience: 5, factor: 0.2}
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.data_source.slice_timestamps, Some([14, 32]));
        assert_eq!(c.data_source.inputs["input_1"].component, "Sentinel-2/10m");
        assert_eq!(c.workspace(), PathBuf::from("./runs/unet_s2"));
        assert_eq!(c.model_path(), PathBuf::from("./runs/unet_s2/unet_s2.tseg"));
        let t = c.trainer.unwrap();
        assert_eq!(t.callbacks.early_stopping.unwrap().patience, 20);
        assert_eq!(t.metrics, vec![MetricKind::Miou]);
    }

    #[test]
    fn missing_seed_is_config_error_with_path() {
        let err = parse_config("data_source:\n  source: s\n").unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "data_source.random_seed"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_key_and_type_mismatch_carry_paths() {
        let err = parse_config(&format!("{MINIMAL}  epochz: 3\n")).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "trainer.epochz"), "{err}");
        let err = parse_config("data_source:\n  source: s\n  random_seed: many\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "data_source.random_seed"), "{err}");
    }

    #[test]
    fn missing_num_classes_is_refused() {
        let err = parse_config("data_source: {source: s, random_seed: 1}\ntrainer:\n  model: {kind: unet}\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "trainer.model.num_classes"), "{err}");
    }

    #[test]
    fn object_tags_rejected() {
        let text = format!("{MINIMAL}  optimizer: !!python/object/apply:tensorflow.keras.optimizers.Adam\n    kwds: {{}}\n");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "line 9"), "{err}");
        assert_eq!(err.category(), crate::error::Category::Config);
    }

    #[test]
    fn round_trip_through_yaml() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_yaml().unwrap()).unwrap(), c);
    }

    #[test]
    fn seed_override_reaches_trainer() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.override_seed(9);
        assert_eq!((c.data_source.random_seed, c.train_seed()), (9, 9));
    }

    #[test]
    fn invalid_values_rejected() {
        for (extra, path) in [
            ("split: {folds: 1}\n", "split.folds"),
            ("split: {folds: 3, validation_fold: 3}\n", "split.validation_fold"),
        ] {
            let err = parse_config(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert!(matches!(err, Error::Config { path: ref p, .. } if p == path), "{err}");
        }
    }
}
