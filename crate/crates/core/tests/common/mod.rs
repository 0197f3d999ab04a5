#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use terraseg::pipeline::{load_config, PipelineConfig};
use terraseg::synthetic::{demo_scene, write_demo_scene};

/// Knobs for a one-scene pipeline fixture.
#[derive(Debug, Clone)]
pub struct Setup {
    pub width: usize,
    pub height: usize,
    pub tile: usize,
    pub channels: usize,
    pub classes: usize,
    pub polygons: usize,
    pub clouds: bool,
    pub folds: usize,
    pub validation_fold: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    /// Extra YAML appended under `trainer:`.
    pub trainer_extra: String,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            tile: 32,
            channels: 4,
            classes: 4,
            polygons: 3,
            clouds: false,
            folds: 2,
            validation_fold: Some(0),
            epochs: 3,
            seed: 42,
            trainer_extra: String::new(),
        }
    }
}

/// Writes the scene and a config into `dir`; returns the config path.
pub fn write_fixture(dir: &Path, s: &Setup) -> PathBuf {
    let scene = demo_scene(s.width, s.height, s.channels, s.classes, s.polygons, s.clouds, s.seed).unwrap();
    write_demo_scene(dir, "scene", &scene).unwrap();
    let vf = s.validation_fold.map_or("null".to_string(), |v| v.to_string());
    let text = format!(
        "configuration:
  name: demo
  workspace: out
data_source:
  source: store
  inputs:
    input_1: {{component: Sentinel-2/10m}}
  targets:
    output_1: {{component: labels/clc/clc_10m}}
  slice_timestamps: [14, 32]
  random_seed: {seed}
  input_scale: 0.0001
ingest:
  components:
    - name: Sentinel-2/10m
      tile_size: {tile}
      scenes:
        - {{week: 14, image: scene.bin, scl: scene_scl.bin}}
  labels:
    path: scene_labels.json
    component: labels/clc/clc_10m
    num_classes: {classes}
split:
  folds: {folds}
  validation_fold: {vf}
trainer:
  model: {{kind: unet, depth: 2, base_channels: 8, num_classes: {classes}}}
  epochs: {epochs}
  metrics: [miou]
{extra}",
        seed = s.seed,
        tile = s.tile,
        classes = s.classes,
        folds = s.folds,
        epochs = s.epochs,
        extra = s.trainer_extra,
    );
    let path = dir.join("pipeline.yaml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn fixture(dir: &Path, s: &Setup) -> PipelineConfig {
    load_config(write_fixture(dir, s)).unwrap()
}

/// Relative path to file bytes for every file below `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
