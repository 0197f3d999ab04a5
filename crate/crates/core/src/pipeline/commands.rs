//! The pipeline steps behind each subcommand.
//!
//! Store layout, with `<img>` an image component such as `Sentinel-2/10m`
//! and `<lbl>` the label component such as `labels/clc/clc_10m`:
//!
//! * `<img>`: `[weeks, tile rows, tile cols, ts, ts, channels]`, one chunk per tile
//! * `<img>_ignore`: `[weeks, tile rows, tile cols, ts, ts]` u8, 1 = ignored
//! * `<lbl>`: `[tile rows, tile cols, ts, ts]` u8 class index, 255 = no label
//! * `<lbl parent>/sample_index`: `[n, 3]` rows of (week, tile row, tile col)
//! * `<lbl parent>/multilabel_stratified_kfolds`: `[n]` fold ids, manifest in attributes

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::config::{IngestComponent, LabelIngest, PipelineConfig, SceneInput};
use super::query::{build_catalog_query, FixtureManifest};
use crate::checkpoint::{self, write_atomic};
use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::geo::io::{read_labels, read_raster, read_sidecar, write_pgm};
use crate::geo::{mosaic, rasterize, scl_to_ignore_mask, tile, GeoRaster, Tile, TileGrid};
use crate::graph::NetworkGraph;
use crate::metrics::MetricReport;
use crate::nn::one_hot;
use crate::optim::Optimizer;
use crate::split::{kfold_partition, stratified_kfold_partition, FoldManifest, SampleId, SampleRecord};
use crate::store::{ArraySpec, Codec, Store, StoredArray};
use crate::tensor::Tensor;
use crate::topology::build;
use crate::train::{evaluate, fit, CheckpointSettings, Sample, TrainConfig};

pub const IGNORE_SUFFIX: &str = "_ignore";
/// Label value for unlabeled pixels, and predicted value for ignored ones.
pub const IGNORE_CLASS: u8 = 255;
pub const FOLDS_ARRAY: &str = "multilabel_stratified_kfolds";
pub const INDEX_ARRAY: &str = "sample_index";

fn codec(deflate: bool) -> Codec {
    if deflate {
        Codec::Deflate
    } else {
        Codec::Raw
    }
}

/// Opens `path` if its layout matches `spec`, creating it (and its
/// parent groups) when absent.
fn ensure_array(store: &Store, path: &str, spec: &ArraySpec) -> Result<StoredArray> {
    if let Some((parent, _)) = path.trim_matches('/').rsplit_once('/') {
        store.create_groups(parent)?;
    }
    if !store.array_exists(path) {
        return store.create_array(path, spec);
    }
    let a = store.open_array(path)?;
    let same = a.shape() == spec.shape.as_slice()
        && a.chunks() == spec.chunks.as_slice()
        && a.dtype() == spec.dtype
        && a.codec() == spec.codec
        && a.fill_value().to_bits() == spec.fill_value.to_bits();
    if same {
        Ok(a)
    } else {
        Err(Error::Conflict(format!("array `{path}` exists with a different layout")))
    }
}

fn parent_group(component: &str) -> &str {
    component.trim_matches('/').rsplit_once('/').map_or("", |(p, _)| p)
}

fn join_node(group: &str, name: &str) -> String {
    if group.is_empty() {
        name.to_string()
    } else {
        format!("{group}/{name}")
    }
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `[1, 1, 1, ts, ts, C]` block of a tile, channels last.
fn channels_last(raster: &GeoRaster) -> Result<Tensor> {
    let (w, h, ch) = (raster.width(), raster.height(), raster.channels());
    let mut data = vec![0.0; w * h * ch];
    for c in 0..ch {
        for (p, &v) in raster.plane(c).iter().enumerate() {
            data[p * ch + c] = v;
        }
    }
    Tensor::from_vec(&[1, 1, 1, h, w, ch], data)
}

/// 1 where any band is nodata or the SCL code is ignored, else 0. The
/// mask's own nodata is 1, so tile padding comes out ignored.
fn scene_ignore_mask(cfg: &PipelineConfig, comp: &IngestComponent, scene: &SceneInput, raster: &GeoRaster) -> Result<GeoRaster> {
    let plane = raster.width() * raster.height();
    let mut mask: Vec<f64> = (0..plane)
        .map(|p| {
            let missing = (0..raster.channels()).any(|c| raster.is_nodata(raster.data()[c * plane + p]));
            f64::from(u8::from(missing))
        })
        .collect();
    if let Some(scl_path) = &scene.scl {
        let scl = read_raster(cfg.resolve(scl_path))?;
        if (scl.width(), scl.height()) != (raster.width(), raster.height())
            || scl.geotransform != raster.geotransform
            || scl.crs != raster.crs
        {
            return Err(Error::data(format!("SCL layer {scl_path} does not share the grid of {}", scene.image)));
        }
        let scl_mask = scl_to_ignore_mask(&scl, &comp.scl_ignore)?;
        for (m, &s) in mask.iter_mut().zip(scl_mask.data()) {
            if s == 1.0 {
                *m = 1.0;
            }
        }
    }
    raster.with_data(1, mask, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ArraySummary {
    pub path: String,
    pub shape: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub weeks: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub store: PathBuf,
    pub arrays: Vec<ArraySummary>,
}

fn ingest_component(cfg: &PipelineConfig, store: &Store, comp: &IngestComponent, weeks_len: usize) -> Result<(TileGrid, Vec<ArraySummary>)> {
    let mut scenes: Vec<&SceneInput> = comp.scenes.iter().collect();
    scenes.sort_by_key(|s| s.week);
    let at = format!("ingest.components.{}", comp.name);
    if scenes.is_empty() {
        return Err(Error::config(format!("{at}.scenes"), "no scenes listed"));
    }
    if scenes.windows(2).any(|w| w[0].week == w[1].week) {
        return Err(Error::config(format!("{at}.scenes"), "two scenes share a week"));
    }
    let ts = comp.tile_size;
    let mask_path = format!("{}{IGNORE_SUFFIX}", comp.name);
    let mut arrays: Option<(TileGrid, StoredArray, StoredArray)> = None;
    for scene in &scenes {
        let path = cfg.resolve(&scene.image);
        let dtype = read_sidecar(&path)?.dtype;
        let raster = read_raster(&path)?;
        let (grid, tiles) = tile(&raster, ts)?;
        if arrays.is_none() {
            let image_spec = ArraySpec::new(&[weeks_len, grid.rows, grid.cols, ts, ts, grid.channels], &[1, 1, 1, ts, ts, grid.channels], dtype)
                .codec(codec(comp.deflate))
                .fill(raster.nodata);
            let mask_spec = ArraySpec::new(&[weeks_len, grid.rows, grid.cols, ts, ts], &[1, 1, 1, ts, ts], DType::U8)
                .codec(codec(comp.deflate))
                .fill(1.0);
            let image = ensure_array(store, &comp.name, &image_spec)?;
            let mask = ensure_array(store, &mask_path, &mask_spec)?;
            arrays = Some((grid.clone(), image, mask));
        }
        let (grid0, image, mask) = arrays.as_mut().expect("arrays created above");
        if &grid != grid0 {
            return Err(Error::data(format!("{} does not share the grid of the first scene of {}", scene.image, comp.name)));
        }
        if dtype != image.dtype() {
            return Err(Error::data(format!("{} is {}, earlier scenes are {}", scene.image, dtype.name(), image.dtype().name())));
        }
        for t in &tiles {
            image.write_region(&[scene.week, t.row, t.col, 0, 0, 0], &channels_last(&t.raster)?)?;
        }
        let ignore = scene_ignore_mask(cfg, comp, scene, &raster)?;
        for t in tile(&ignore, ts)?.1 {
            let block = Tensor::from_vec(&[1, 1, 1, ts, ts], t.raster.into_data())?;
            mask.write_region(&[scene.week, t.row, t.col, 0, 0], &block)?;
        }
        info!("ingested {} week {} into {}", scene.image, scene.week, comp.name);
    }
    let (grid, mut image, mut mask) = arrays.expect("at least one scene");
    let mut weeks: BTreeSet<usize> = stored_weeks(&image)?.into_iter().collect();
    weeks.extend(scenes.iter().map(|s| s.week));
    let weeks: Vec<usize> = weeks.into_iter().collect();
    let mut attrs = image.attributes().clone();
    attrs.insert("grid".into(), serde_json::to_value(&grid)?);
    attrs.insert("weeks".into(), json!(weeks));
    image.set_attributes(attrs)?;
    let mut mask_attrs = mask.attributes().clone();
    mask_attrs.insert("weeks".into(), json!(weeks));
    mask_attrs.insert("source".into(), json!(comp.name));
    mask.set_attributes(mask_attrs)?;
    let summary = vec![
        ArraySummary { path: image.path().to_string(), shape: image.shape().to_vec(), weeks: weeks.clone() },
        ArraySummary { path: mask.path().to_string(), shape: mask.shape().to_vec(), weeks },
    ];
    Ok((grid, summary))
}

fn stored_weeks(array: &StoredArray) -> Result<Vec<usize>> {
    match array.attributes().get("weeks") {
        None => Ok(Vec::new()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Corruption(format!("weeks of `{}`: {e}", array.path()))),
    }
}

fn stored_grid(array: &StoredArray) -> Result<TileGrid> {
    let v = array
        .attributes()
        .get("grid")
        .ok_or_else(|| Error::data(format!("array `{}` carries no tile grid; was it ingested?", array.path())))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Corruption(format!("grid of `{}`: {e}", array.path())))
}

fn ingest_labels(cfg: &PipelineConfig, store: &Store, labels: &LabelIngest, grid: &TileGrid, deflate: bool) -> Result<ArraySummary> {
    let set = read_labels(cfg.resolve(&labels.path))?;
    let mut shapes = set.geometries()?;
    for (_, value) in &mut shapes {
        let code = *value as u16;
        let class = if labels.class_map.is_empty() {
            u8::try_from(code).ok()
        } else {
            labels.class_map.get(&code).copied()
        };
        match class {
            Some(c) if usize::from(c) < labels.num_classes => *value = f64::from(c),
            _ => {
                return Err(Error::config(
                    "ingest.labels.class_map",
                    format!("label code {code} maps to no class below {}", labels.num_classes),
                ))
            }
        }
    }
    let template = GeoRaster::filled(grid.width, grid.height, 1, grid.geotransform, grid.crs.clone(), f64::from(IGNORE_CLASS))?;
    let burned = rasterize(&shapes, &template)?;
    let ts = grid.tile_size;
    let spec = ArraySpec::new(&[grid.rows, grid.cols, ts, ts], &[1, 1, ts, ts], DType::U8)
        .codec(codec(deflate))
        .fill(f64::from(IGNORE_CLASS));
    let mut array = ensure_array(store, &labels.component, &spec)?;
    for t in tile(&burned, ts)?.1 {
        array.write_region(&[t.row, t.col, 0, 0], &Tensor::from_vec(&[1, 1, ts, ts], t.raster.into_data())?)?;
    }
    let mut attrs = array.attributes().clone();
    attrs.insert("num_classes".into(), json!(labels.num_classes));
    attrs.insert("grid".into(), serde_json::to_value(grid)?);
    array.set_attributes(attrs)?;
    info!("burned {} label polygons into {}", shapes.len(), labels.component);
    Ok(ArraySummary { path: array.path().to_string(), shape: array.shape().to_vec(), weeks: Vec::new() })
}

/// Tiles every configured scene and its ignore mask, burns the label
/// polygons on the reference grid, and writes everything to the store.
/// Re-ingesting the same inputs rewrites identical bytes.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    let ing = cfg.ingest()?;
    let store = Store::create(cfg.store_path())?;
    let _lock = store.lock()?;
    let mut arrays = Vec::new();
    let mut grids = Vec::new();
    for comp in &ing.components {
        let (grid, summary) = ingest_component(cfg, &store, comp, ing.weeks)?;
        grids.push((comp, grid));
        arrays.extend(summary);
    }
    if let Some(labels) = &ing.labels {
        let (comp, grid) = match &labels.reference {
            Some(r) => grids.iter().find(|(c, _)| &c.name == r).expect("reference validated with the config"),
            None => &grids[0],
        };
        arrays.push(ingest_labels(cfg, &store, labels, grid, comp.deflate)?);
    }
    Ok(IngestSummary { store: store.root().to_path_buf(), arrays })
}

/// Read access to the configured inputs, ignore mask and labels.
pub struct Dataset {
    store: Store,
    inputs: Vec<StoredArray>,
    ignore: Option<StoredArray>,
    labels: StoredArray,
    label_component: String,
    pub num_classes: usize,
    /// Grid of the first input.
    pub grid: TileGrid,
    /// Ingested weeks of the first input.
    pub ingested_weeks: Vec<usize>,
    /// Ingested weeks inside the configured slice.
    pub weeks: Vec<usize>,
    pub channels: usize,
    scale: f64,
}

impl Dataset {
    pub fn open(cfg: &PipelineConfig) -> Result<Self> {
        let ds = &cfg.data_source;
        let store = Store::open(cfg.store_path())?;
        if ds.inputs.is_empty() {
            return Err(Error::config("data_source.inputs", "at least one input component is required"));
        }
        let open = |key: String, component: &str| {
            store
                .open_array(component)
                .map_err(|_| Error::config(key, format!("`{component}` is not an array in {}", store.root().display())))
        };
        let mut inputs = Vec::new();
        for (key, c) in &ds.inputs {
            let a = open(format!("data_source.inputs.{key}.component"), &c.component)?;
            if a.shape().len() != 6 {
                return Err(Error::data(format!("`{}` has shape {:?}, expected 6 axes", c.component, a.shape())));
            }
            if let Some(first) = inputs.first().map(|f: &StoredArray| f.shape()[..3].to_vec()) {
                if a.shape()[..3] != first[..] {
                    return Err(Error::config(
                        format!("data_source.inputs.{key}.component"),
                        "inputs must share the time axis and tile grid",
                    ));
                }
            }
            inputs.push(a);
        }
        let first = &inputs[0];
        let grid = stored_grid(first)?;
        let ingested_weeks = stored_weeks(first)?;
        let channels = inputs.iter().map(|a| a.shape()[5]).sum();
        let first_name = &ds.inputs.values().next().expect("checked non-empty").component;
        let ignore = match &ds.ignore_mask {
            Some(c) => Some(open("data_source.ignore_mask.component".into(), &c.component)?),
            None => store.open_array(&format!("{first_name}{IGNORE_SUFFIX}")).ok(),
        };
        let (tkey, target) = ds
            .targets
            .iter()
            .next()
            .ok_or_else(|| Error::config("data_source.targets", "a target component is required"))?;
        let labels = open(format!("data_source.targets.{tkey}.component"), &target.component)?;
        let s = first.shape();
        if labels.shape() != [s[1], s[2], s[3], s[4]] {
            return Err(Error::config(
                format!("data_source.targets.{tkey}.component"),
                format!("label shape {:?} does not match the input tile grid {:?}", labels.shape(), &s[1..5]),
            ));
        }
        let num_classes = labels
            .attributes()
            .get("num_classes")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::data(format!("label array `{}` records no class count", target.component)))? as usize;
        let weeks = ingested_weeks
            .iter()
            .copied()
            .filter(|w| ds.slice_timestamps.is_none_or(|[a, b]| (a..b).contains(w)))
            .collect();
        Ok(Self {
            store,
            inputs,
            ignore,
            labels,
            label_component: target.component.clone(),
            num_classes,
            grid,
            ingested_weeks,
            weeks,
            channels,
            scale: ds.input_scale,
        })
    }

    pub fn tile_size(&self) -> [usize; 2] {
        let s = self.inputs[0].shape();
        [s[3], s[4]]
    }

    /// Every (week, tile) pair in the slice, week-major then row-major.
    pub fn sample_ids(&self) -> Vec<SampleId> {
        let mut ids = Vec::with_capacity(self.weeks.len() * self.grid.len());
        for &week in &self.weeks {
            for row in 0..self.grid.rows {
                for col in 0..self.grid.cols {
                    ids.push(SampleId::new(row, col, week));
                }
            }
        }
        ids
    }

    /// `[C, h, w]` input of one tile: inputs fused channel-wise after a
    /// nearest-neighbour resize to the first input's tile size. Nodata
    /// becomes 0, everything else is multiplied by the input scale.
    pub fn input(&self, id: SampleId) -> Result<Tensor> {
        let [th, tw] = self.tile_size();
        let mut fused: Option<Tensor> = None;
        for a in &self.inputs {
            let s = a.shape();
            let (h, w, ch) = (s[3], s[4], s[5]);
            let block = a.read_region(&[id.week, id.row, id.col, 0, 0, 0], &[1, 1, 1, h, w, ch])?;
            let nodata = a.fill_value();
            let mut planar = vec![0.0; ch * h * w];
            for (p, px) in block.data().chunks_exact(ch).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    planar[c * h * w + p] = if v == nodata || v.is_nan() { 0.0 } else { v * self.scale };
                }
            }
            let mut t = Tensor::from_vec(&[ch, h, w], planar)?;
            if (h, w) != (th, tw) {
                t = t.resize_nearest(th, tw)?;
            }
            fused = Some(match fused {
                None => t,
                Some(prev) => Tensor::concat_channels(&prev, &t)?,
            });
        }
        Ok(fused.expect("at least one input"))
    }

    /// Per-pixel ignore flags from the mask array alone.
    pub fn masked(&self, id: SampleId) -> Result<Vec<bool>> {
        let [h, w] = self.tile_size();
        match &self.ignore {
            None => Ok(vec![false; h * w]),
            Some(m) => Ok(m
                .read_region(&[id.week, id.row, id.col, 0, 0], &[1, 1, 1, h, w])?
                .data()
                .iter()
                .map(|&v| v != 0.0)
                .collect()),
        }
    }

    /// Label codes of a tile with masked pixels set to 255.
    pub fn labels(&self, id: SampleId) -> Result<Vec<u8>> {
        let [h, w] = self.tile_size();
        let raw = self.labels.read_region(&[id.row, id.col, 0, 0], &[1, 1, h, w])?;
        let masked = self.masked(id)?;
        Ok(raw
            .data()
            .iter()
            .zip(masked)
            .map(|(&v, m)| if m { IGNORE_CLASS } else { v as u8 })
            .collect())
    }

    pub fn record(&self, id: SampleId, min_pixels: usize) -> Result<SampleRecord> {
        SampleRecord::from_labels(id, &self.labels(id)?, self.num_classes, min_pixels, Some(IGNORE_CLASS))
    }

    /// Training sample for a model with `classes` outputs.
    pub fn sample(&self, id: SampleId, classes: usize) -> Result<Sample> {
        let [h, w] = self.tile_size();
        let labels = self.labels(id)?;
        let mut ignore = vec![0.0; h * w];
        let mut codes = Vec::with_capacity(h * w);
        for (p, &v) in labels.iter().enumerate() {
            if v == IGNORE_CLASS {
                ignore[p] = 1.0;
                codes.push(0);
            } else if usize::from(v) >= classes {
                return Err(Error::config(
                    "trainer.model.num_classes",
                    format!("label {v} in {} needs more than {classes} classes", self.label_component),
                ));
            } else {
                codes.push(usize::from(v));
            }
        }
        Ok(Sample {
            input: self.input(id)?,
            target: one_hot(&codes, 1, h, w, classes)?.reshape(&[classes, h, w])?,
            ignore: Some(Tensor::from_vec(&[1, h, w], ignore)?),
        })
    }

    pub fn samples(&self, ids: &[SampleId], classes: usize) -> Result<Vec<Sample>> {
        ids.iter().map(|&id| self.sample(id, classes)).collect()
    }

    fn split_group(&self) -> &str {
        parent_group(&self.label_component)
    }

    /// Stored fold ids aligned with [`Dataset::sample_ids`].
    pub fn folds(&self, k: usize) -> Result<Vec<(SampleId, usize)>> {
        let group = self.split_group();
        let missing = |_| Error::data("no fold assignment in the store; run `terraseg split` first");
        let index = self.store.open_array(&join_node(group, INDEX_ARRAY)).map_err(missing)?;
        let folds = self.store.open_array(&join_node(group, FOLDS_ARRAY)).map_err(missing)?;
        let stored_k = folds.attributes().get("k").and_then(serde_json::Value::as_u64);
        if stored_k != Some(k as u64) {
            return Err(Error::config("split.folds", format!("store holds {stored_k:?} folds, config says {k}")));
        }
        let idx = index.read_all()?;
        let ids: Vec<SampleId> = idx
            .data()
            .chunks_exact(3)
            .map(|r| SampleId::new(r[1] as usize, r[2] as usize, r[0] as usize))
            .collect();
        if ids != self.sample_ids() {
            return Err(Error::data("stored folds do not match the configured samples; rerun `terraseg split`"));
        }
        Ok(ids.into_iter().zip(folds.read_all()?.data().iter().map(|&f| f as usize)).collect())
    }

    /// Samples of `fold`, or every sample when `None`.
    pub fn fold_members(&self, fold: Option<usize>, k: usize) -> Result<Vec<SampleId>> {
        match fold {
            None => Ok(self.sample_ids()),
            Some(f) => Ok(self.folds(k)?.into_iter().filter(|&(_, g)| g == f).map(|(id, _)| id).collect()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub samples: usize,
    pub manifest: FoldManifest,
    pub manifest_path: PathBuf,
}

/// Assigns every sample in the slice to one of `split.folds` folds and
/// stores the assignment next to the labels.
pub fn cmd_split(cfg: &PipelineConfig) -> Result<SplitSummary> {
    let ds = Dataset::open(cfg)?;
    let (k, seed) = (cfg.split.folds, cfg.data_source.random_seed);
    let ids = ds.sample_ids();
    if ids.len() < k {
        return Err(Error::param(format!("{} samples cannot fill {k} folds", ids.len())));
    }
    let records: Vec<SampleRecord> = ids.iter().map(|&id| ds.record(id, cfg.split.min_pixels)).collect::<Result<_>>()?;
    let assignment = if cfg.split.stratified {
        stratified_kfold_partition(&records, k, seed)?
    } else {
        kfold_partition(&records, k, seed)?
    };
    let manifest = assignment.manifest(&records);
    let _lock = ds.store.lock()?;
    let group = ds.split_group();
    let n = ids.len();
    let index_path = join_node(group, INDEX_ARRAY);
    let folds_path = join_node(group, FOLDS_ARRAY);
    for p in [&index_path, &folds_path] {
        if ds.store.array_exists(p) {
            ds.store.remove_array(p)?;
        }
    }
    let mut index = ensure_array(&ds.store, &index_path, &ArraySpec::new(&[n, 3], &[n, 3], DType::I32).codec(Codec::Deflate))?;
    let rows = assignment.ids.iter().flat_map(|id| [id.week, id.row, id.col]).map(|v| v as f64).collect();
    index.write_all(&Tensor::from_vec(&[n, 3], rows)?)?;
    let mut folds = ensure_array(&ds.store, &folds_path, &ArraySpec::new(&[n], &[n], DType::I32).codec(Codec::Deflate))?;
    folds.write_all(&Tensor::from_vec(&[n], assignment.folds.iter().map(|&f| f as f64).collect())?)?;
    let mut attrs = serde_json::from_value::<crate::store::Attributes>(serde_json::to_value(&manifest)?)?;
    attrs.insert("stratified".into(), json!(cfg.split.stratified));
    attrs.insert("min_pixels".into(), json!(cfg.split.min_pixels));
    folds.set_attributes(attrs)?;
    let manifest_path = cfg.workspace().join("folds.json");
    write_json_file(&manifest_path, &manifest)?;
    info!("split {n} samples into {k} folds of sizes {:?}", manifest.sizes);
    Ok(SplitSummary { samples: n, manifest, manifest_path })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// Trains on every fold but the validation fold, keeping the best
/// checkpoint by the configured monitor (or the final weights) and
/// writing the epoch history as JSON and as a text table.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let t = cfg.trainer()?;
    let ds = Dataset::open(cfg)?;
    let classes = t.model.num_classes;
    let folds = ds.folds(cfg.split.folds)?;
    let (train_ids, val_ids): (Vec<SampleId>, Vec<SampleId>) = match cfg.split.validation_fold {
        Some(v) => (
            folds.iter().filter(|f| f.1 != v).map(|f| f.0).collect(),
            folds.iter().filter(|f| f.1 == v).map(|f| f.0).collect(),
        ),
        None => {
            let all: Vec<SampleId> = folds.iter().map(|f| f.0).collect();
            (all.clone(), all)
        }
    };
    let train = ds.samples(&train_ids, classes)?;
    let val = ds.samples(&val_ids, classes)?;
    let [h, w] = ds.tile_size();
    let seed = cfg.train_seed();
    let mut graph =
        build(&t.model.topology(ds.channels, [h, w]), seed).map_err(|e| Error::config("trainer.model", e.to_string()))?;
    let mut optimizer = Optimizer::new(t.optimizer)?;
    let model_path = cfg.model_path();
    if let Some(dir) = model_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let config = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        seed,
        shuffle: cfg.data_source.randomise,
        metrics: t.metrics.clone(),
        average: t.average,
        early_stopping: t.callbacks.early_stopping.clone(),
        reduce_lr: t.callbacks.reduce_lr_on_plateau.clone(),
        checkpoint: t.checkpoint.as_ref().map(|c| CheckpointSettings { path: model_path.clone(), monitor: c.monitor.clone() }),
    };
    info!(
        "training {} ({} parameters) on {} samples, validating on {}",
        t.model.kind,
        graph.count_parameters(),
        train.len(),
        val.len()
    );
    let history = fit(&mut graph, &train, (!val.is_empty()).then_some(&val), &mut optimizer, &config)?;
    if history.checkpoints_written == 0 {
        if t.checkpoint.is_some() {
            warn!("monitor never improved; saving the final weights");
        }
        checkpoint::save(&graph, &model_path, None)?;
    }
    let workspace = cfg.workspace();
    let history_path = workspace.join("history.json");
    write_json_file(&history_path, &history)?;
    write_atomic(&workspace.join("history.txt"), history.to_table().as_bytes())?;
    let last = history.last().expect("at least one epoch");
    Ok(TrainSummary {
        epochs_run: history.records.len(),
        train_samples: train.len(),
        validation_samples: val.len(),
        final_train_loss: last.train_loss,
        final_val_loss: last.val_loss,
        checkpoint: model_path,
        history: history_path,
    })
}

fn load_checkpoint(cfg: &PipelineConfig, ds: &Dataset) -> Result<NetworkGraph> {
    let path = cfg.model_path();
    if !path.is_file() {
        return Err(Error::data(format!("no checkpoint at {}; run `terraseg train` first", path.display())));
    }
    let graph = checkpoint::load(&path)?;
    let classes = graph.output_channels();
    if let Some(t) = &cfg.trainer {
        if t.model.num_classes != classes {
            return Err(Error::config(
                "trainer.model.num_classes",
                format!("checkpoint predicts {classes} classes, config says {}", t.model.num_classes),
            ));
        }
    }
    if classes != ds.num_classes {
        return Err(Error::config(
            "data_source.targets",
            format!("checkpoint predicts {classes} classes, labels in {} have {}", ds.label_component, ds.num_classes),
        ));
    }
    Ok(graph)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateSummary {
    pub samples: usize,
    pub loss: f64,
    pub report: MetricReport,
    pub report_path: PathBuf,
}

/// Scores the checkpoint on the held-out fold over non-ignored pixels.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<EvaluateSummary> {
    let ds = Dataset::open(cfg)?;
    let graph = load_checkpoint(cfg, &ds)?;
    let fold = cfg.evaluate.fold.or(cfg.split.validation_fold);
    let ids = ds.fold_members(fold, cfg.split.folds)?;
    let samples = ds.samples(&ids, graph.output_channels())?;
    let batch = cfg.trainer.as_ref().map_or(1, |t| t.batch_size);
    let (loss, cm) = evaluate(&graph, &samples, batch).map_err(|e| match e {
        Error::EmptyLoss(m) => Error::UndefinedMetric(format!("no pixel left to score ({m})")),
        e => e,
    })?;
    let average = cfg.trainer.as_ref().map(|t| t.average).unwrap_or_default();
    let report = cm.report(average)?;
    let report_path = cfg.workspace().join("report.json");
    write_json_file(&report_path, &report)?;
    Ok(EvaluateSummary { samples: samples.len(), loss, report, report_path })
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictSummary {
    pub week: usize,
    pub rows: [usize; 2],
    pub cols: [usize; 2],
    pub width: usize,
    pub height: usize,
    pub mask: PathBuf,
}

fn argmax_classes(probs: &Tensor, masked: &[bool], ts: usize) -> Result<Vec<f64>> {
    let d = probs.dims4()?;
    let (oy, ox) = ((ts.saturating_sub(d.h)) / 2, (ts.saturating_sub(d.w)) / 2);
    let mut out = vec![f64::from(IGNORE_CLASS); ts * ts];
    let plane = d.h * d.w;
    for y in 0..d.h.min(ts) {
        for x in 0..d.w.min(ts) {
            let p = (y + oy) * ts + x + ox;
            if masked[p] {
                continue;
            }
            let q = y * d.w + x;
            let best = (1..d.c).fold(0, |b, k| if probs.data()[k * plane + q] > probs.data()[b * plane + q] { k } else { b });
            out[p] = best as f64;
        }
    }
    Ok(out)
}

fn tile_range(range: Option<[usize; 2]>, len: usize, what: &str) -> Result<[usize; 2]> {
    let r = range.unwrap_or([0, len]);
    if r[1] > len {
        return Err(Error::Range(format!("{what} [{}, {}) outside the store's 0..{len}", r[0], r[1])));
    }
    Ok(r)
}

/// Argmax class mask of a region, mosaicked and written as PGM plus
/// sidecar. Ignored pixels are 255.
pub fn cmd_predict(cfg: &PipelineConfig) -> Result<PredictSummary> {
    let ds = Dataset::open(cfg)?;
    let graph = load_checkpoint(cfg, &ds)?;
    let week = match cfg.predict.week {
        Some(w) => w,
        None => *ds.weeks.first().ok_or_else(|| Error::data("no ingested week inside the configured slice"))?,
    };
    if !ds.ingested_weeks.contains(&week) {
        return Err(Error::Range(format!("week {week} is not in the store (ingested: {:?})", ds.ingested_weeks)));
    }
    let g = &ds.grid;
    let rows = tile_range(cfg.predict.rows, g.rows, "tile rows")?;
    let cols = tile_range(cfg.predict.cols, g.cols, "tile cols")?;
    let ts = g.tile_size;
    let mut tiles = Vec::new();
    for row in rows[0]..rows[1] {
        for col in cols[0]..cols[1] {
            let id = SampleId::new(row, col, week);
            let probs = graph.predict(&ds.input(id)?)?;
            let classes = argmax_classes(&probs, &ds.masked(id)?, ts)?;
            let raster = GeoRaster::new(ts, ts, 1, classes, g.tile_transform(row, col), g.crs.clone(), f64::from(IGNORE_CLASS))?;
            tiles.push(Tile { row: row - rows[0], col: col - cols[0], raster });
        }
    }
    let region = TileGrid {
        tile_size: ts,
        cols: cols[1] - cols[0],
        rows: rows[1] - rows[0],
        width: g.width.saturating_sub(cols[0] * ts).min((cols[1] - cols[0]) * ts),
        height: g.height.saturating_sub(rows[0] * ts).min((rows[1] - rows[0]) * ts),
        channels: 1,
        geotransform: g.tile_transform(rows[0], cols[0]),
        crs: g.crs.clone(),
        nodata: f64::from(IGNORE_CLASS),
    };
    let mask = mosaic(&tiles, &region)?;
    let path = cfg
        .workspace()
        .join("predictions")
        .join(format!("{}_w{week}.pgm", cfg.configuration.name));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_pgm(&path, &mask)?;
    Ok(PredictSummary { week, rows, cols, width: mask.width(), height: mask.height(), mask: path })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuerySummary {
    pub url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub products: Option<Vec<serde_json::Value>>,
}

/// Builds the catalog request and, with a fixture, replays its answer.
pub fn cmd_query(cfg: &PipelineConfig) -> Result<QuerySummary> {
    let q = cfg.catalog_query()?;
    let url = build_catalog_query(&q)?;
    let products = match cfg.query.as_ref().and_then(|s| s.fixture.as_deref()) {
        Some(f) => Some(FixtureManifest::load(cfg.resolve(f))?.replay(&url)?.to_vec()),
        None => None,
    };
    Ok(QuerySummary { url, products })
}
