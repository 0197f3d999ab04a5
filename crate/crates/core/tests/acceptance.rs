//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::oracle::{pnpoly, random_polygon};
use common::{fixture, snapshot, Setup};
use chrono::NaiveDate;
use terraseg::dtype::DType;
use terraseg::geo::{mosaic, rasterize, tile, GeoRaster, GeoTransform, WktGeometry};
use terraseg::gradcheck::{grad_check, GradCheckOptions};
use terraseg::graph::{Layer, NetworkGraph};
use terraseg::metrics::ConfusionMatrix;
use terraseg::nn::{max_pool2d, one_hot, unpool_with_indices, ActivationKind};
use terraseg::optim::Optimizer;
use terraseg::pipeline::{build_catalog_query, cmd_evaluate, cmd_ingest, cmd_split, cmd_train, normalize_whitespace, tokens, CatalogQuery, SortOrder};
use terraseg::rng::SeededRng;
use terraseg::split::{cross_validate, stratified_kfold_partition, SampleId, SampleRecord};
use terraseg::store::{ArraySpec, Codec, Store};
use terraseg::synthetic::tile_sample;
use terraseg::tensor::Tensor;
use terraseg::topology::{build, TopologyKind, TopologySpec};
use terraseg::train::{evaluate, fit, MetricKind, TrainConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metric_oracle() -> Outcome {
    // a classifier that calls everything positive on 10000 positives and 1000 negatives
    let all_positive = ConfusionMatrix::binary(10_000, 0, 1_000, 0);
    let acc = all_positive.accuracy().map_err(|e| e.to_string())?;
    ensure(close(acc, 10_000.0 / 11_000.0, 1e-15) && close(acc, 0.9091, 1e-4), || format!("accuracy {acc}"))?;
    let p = ConfusionMatrix::binary(910, 0, 90, 0).precision(0).map_err(|e| e.to_string())?;
    ensure(p == 0.91, || format!("precision {p}"))?;
    let r = ConfusionMatrix::binary(940, 60, 0, 0).recall(0).map_err(|e| e.to_string())?;
    ensure(r == 0.94, || format!("recall {r}"))?;
    Ok(format!("accuracy {acc:.4}, precision {p}, recall {r}"))
}

fn f1_dice_identity() -> Outcome {
    let mut rng = SeededRng::new(1);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let tp = 1 + rng.below(5_000) as u64;
        let cm = ConfusionMatrix::binary(tp, rng.below(5_000) as u64, rng.below(5_000) as u64, rng.below(5_000) as u64);
        let f1 = cm.f1(0).map_err(|e| e.to_string())?;
        let dice = cm.dice(0).map_err(|e| e.to_string())?;
        let iou = cm.jaccard(0).map_err(|e| e.to_string())?;
        let via_iou = 2.0 * iou / (1.0 + iou);
        worst = worst.max((f1 - dice).abs()).max((dice - via_iou).abs());
        ensure(close(f1, dice, 1e-12) && iou <= dice && close(dice, via_iou, 1e-12), || {
            format!("matrix {i}: f1 {f1}, dice {dice}, iou {iou}")
        })?;
    }
    Ok(format!("10000 matrices, max deviation {worst:.1e}"))
}

fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize) -> Layer {
    Layer::Conv2d { in_channels: cin, out_channels: cout, kernel, stride, padding }
}

fn gradient_checks() -> Outcome {
    let opts = GradCheckOptions::default();
    let mut cases: Vec<(String, NetworkGraph, Vec<usize>, bool)> = Vec::new();
    let chain = |name: &str, cin: usize, layers: Vec<Layer>| {
        let mut g = NetworkGraph::new(cin);
        let mut prev = 0;
        for (i, l) in layers.into_iter().enumerate() {
            prev = g.add(format!("{name}{i}"), l, &[prev]).unwrap();
        }
        g.initialize(3);
        g
    };
    cases.push(("conv".into(), chain("c", 2, vec![conv(2, 3, 3, 1, 1)]), vec![2, 6, 6], false));
    cases.push(("strided conv".into(), chain("c", 2, vec![conv(2, 3, 3, 2, 0)]), vec![2, 7, 7], false));
    cases.push((
        "transposed conv".into(),
        chain("t", 3, vec![Layer::ConvTranspose { in_channels: 3, out_channels: 2, kernel: 2, stride: 2 }]),
        vec![3, 3, 4],
        false,
    ));
    for act in [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::elu(), ActivationKind::Relu, ActivationKind::leaky_relu()] {
        cases.push((format!("{act:?}"), chain("a", 2, vec![conv(2, 2, 3, 1, 1), Layer::Activation(act)]), vec![2, 5, 5], false));
    }
    cases.push((
        "batch norm".into(),
        chain("b", 2, vec![conv(2, 3, 3, 1, 1), Layer::BatchNorm { channels: 3, eps: 1e-3 }]),
        vec![2, 2, 4, 4],
        false,
    ));
    cases.push(("dropout".into(), chain("d", 2, vec![conv(2, 3, 3, 1, 1), Layer::Dropout { rate: 0.4 }]), vec![2, 4, 4], false));
    cases.push(("softmax".into(), chain("s", 2, vec![conv(2, 3, 3, 1, 1), Layer::Softmax]), vec![2, 3, 3], true));
    {
        let mut g = NetworkGraph::new(2);
        let c = g.add("conv", conv(2, 2, 3, 1, 1), &[0]).unwrap();
        let p = g.add("pool", Layer::MaxPool { window: 2, stride: 2 }, &[c]).unwrap();
        let q = g.add("conv2", conv(2, 2, 1, 1, 0), &[p]).unwrap();
        g.add("unpool", Layer::Unpool { pool: p }, &[q]).unwrap();
        g.initialize(4);
        cases.push(("pool and unpool".into(), g, vec![2, 6, 6], false));
    }
    {
        let mut g = NetworkGraph::new(2);
        let a = g.add("a", conv(2, 3, 3, 1, 0), &[0]).unwrap();
        let cat = g.add("cat", Layer::CropConcat, &[0, a]).unwrap();
        let b = g.add("b", conv(5, 5, 3, 1, 1), &[cat]).unwrap();
        g.add("add", Layer::Add, &[cat, b]).unwrap();
        g.initialize(5);
        cases.push(("crop concat and add".into(), g, vec![2, 7, 6], false));
    }
    for kind in [TopologyKind::Unet, TopologyKind::Segnet, TopologyKind::Resunet] {
        for depth in [1, 2] {
            let side = 4 << depth.min(1);
            let spec = TopologySpec::new(kind, 2, 3).with_depth(depth).with_base_channels(4).with_input_size(side, side);
            let g = build(&spec, 21).map_err(|e| e.to_string())?;
            cases.push((format!("{kind} depth {depth}"), g, vec![2, side, side], true));
        }
    }
    let mut worst = 0.0f64;
    let count = cases.len();
    for (name, g, shape, one_hot_target) in cases {
        let mut rng = SeededRng::new(9);
        let x = Tensor::random(&shape, &mut rng, -1.0, 1.0).unwrap();
        let out = g.infer_shapes(&shape).map_err(|e| e.to_string())?.pop().unwrap();
        let t = if one_hot_target {
            let (h, w) = (out[out.len() - 2], out[out.len() - 1]);
            let labels: Vec<usize> = (0..h * w).map(|_| rng.below(3)).collect();
            one_hot(&labels, 1, h, w, 3).unwrap()
        } else {
            Tensor::random(&out, &mut rng, -1.0, 1.0).unwrap()
        };
        let modes: &[bool] = if name == "batch norm" { &[true, false] } else { &[true] };
        for &training in modes {
            let r = grad_check(&g, &x, &t, &GradCheckOptions { training, ..opts.clone() }).map_err(|e| e.to_string())?;
            ensure(r.max_rel_error <= 1e-4, || format!("{name}: {r:?}"))?;
            worst = worst.max(r.max_rel_error);
        }
    }
    Ok(format!("{count} graphs, max relative error {worst:.1e}"))
}

fn pool_unpool() -> Outcome {
    let mut rng = SeededRng::new(3);
    for case in 0..1_000 {
        let win = 2 + rng.below(2);
        let shape = [1 + rng.below(3), 1 + rng.below(3), win * (1 + rng.below(4)), win * (1 + rng.below(4))];
        // magnitudes bounded away from zero so every winner is nonzero
        let data = (0..shape.iter().product())
            .map(|_| {
                let v = rng.uniform_range(0.1, 10.0);
                if rng.bernoulli(0.5) { v } else { -v }
            })
            .collect();
        let x = Tensor::from_vec(&shape, data).unwrap();
        let (pooled, idx) = max_pool2d(&x, win, win).map_err(|e| e.to_string())?;
        let up = unpool_with_indices(&pooled, &idx, x.shape()).map_err(|e| e.to_string())?;
        let mut recorded = idx.indices().to_vec();
        recorded.sort_unstable();
        recorded.dedup();
        let nonzero: Vec<usize> = up.data().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        ensure(nonzero == recorded, || format!("case {case}: nonzero cells differ from recorded indices"))?;
        let mut a: Vec<f64> = pooled.data().to_vec();
        let mut b: Vec<f64> = nonzero.iter().map(|&i| up.data()[i]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        ensure(a == b, || format!("case {case}: unpooled values differ"))?;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        ensure(sa == sb, || format!("case {case}: sums {sa} vs {sb}"))?;
    }
    Ok("1000 tensors".into())
}

fn adam_first_step() -> Outcome {
    let mut opt = Optimizer::adam();
    let mut p = Tensor::from_vec(&[1], vec![0.5]).unwrap();
    let g = Tensor::from_vec(&[1], vec![1.0]).unwrap();
    opt.step(&mut [&mut p], &[g]).map_err(|e| e.to_string())?;
    let delta = p.data()[0] - 0.5;
    ensure(close(delta, -0.0009999999, 1e-12), || format!("update {delta}"))?;
    Ok(format!("update {delta:.10}"))
}

fn multilabel_corpus(n: usize, classes: usize, seed: u64) -> Vec<SampleRecord> {
    let mut rng = SeededRng::new(seed);
    let rates: Vec<f64> = (0..classes).map(|c| 0.1 + 0.15 * c as f64).collect();
    (0..n)
        .map(|i| SampleRecord::new(SampleId::new(i / 20, i % 20, 14), rates.iter().map(|&p| rng.bernoulli(p)).collect()))
        .collect()
}

fn stratified_kfold() -> Outcome {
    for seed in 0..10 {
        let s = multilabel_corpus(200, 5, seed);
        let a = stratified_kfold_partition(&s, 5, seed).map_err(|e| e.to_string())?;
        let mut seen = vec![0; 200];
        for f in 0..5 {
            for i in a.members(f) {
                seen[i] += 1;
            }
        }
        ensure(seen.iter().all(|&v| v == 1), || format!("seed {seed}: not a partition"))?;
        let counts = a.class_counts(&s);
        for c in 0..5 {
            let ideal = s.iter().filter(|r| r.presence[c]).count() as f64 / 5.0;
            for row in &counts {
                ensure((row[c] as f64 - ideal).abs() <= 1.0, || format!("seed {seed} class {c}: {counts:?}"))?;
            }
        }
        ensure(stratified_kfold_partition(&s, 5, seed).map_err(|e| e.to_string())? == a, || format!("seed {seed}: not deterministic"))?;
    }
    Ok("10 seeds, 200 samples, 5 classes".into())
}

fn cv_accounting() -> Outcome {
    let s = multilabel_corpus(37, 1, 4);
    let k = 4;
    // multiples of 1/8 keep every partial sum exact
    let errors: Vec<f64> = (0..3 * k).map(|i| ((i * 5) % 11) as f64 / 8.0).collect();
    let mut seen = vec![vec![0usize; s.len()]; 3];
    let cv = cross_validate(&s, k, &[0usize, 1, 2], 7, |&t, ctx| {
        for &i in ctx.validation {
            seen[t][i] += 1;
        }
        Ok(errors[t * k + ctx.fold])
    })
    .map_err(|e| e.to_string())?;
    let expected: f64 = errors.iter().map(|e| e / k as f64).sum();
    ensure(cv.score == expected, || format!("score {} vs {expected}", cv.score))?;
    ensure(seen.iter().flatten().all(|&v| v == 1), || "a sample was not validated exactly once".into())?;
    Ok(format!("score {}", cv.score))
}

fn rasterizer() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let mut pixels = 0;
    for case in 0..50 {
        let (w, h) = (1 + rng.below(64), 1 + rng.below(64));
        let px = [1.0, 0.5, 10.0, 1e-4][case % 4];
        let (x0, y0) = (rng.uniform_range(-50.0, 50.0), rng.uniform_range(-50.0, 50.0));
        let gt = GeoTransform([x0, px, 0.0, y0, 0.0, -px]);
        let template = GeoRaster::filled(w, h, 1, gt, "EPSG:4326", 0.0).map_err(|e| e.to_string())?;
        let g: WktGeometry = random_polygon(&mut rng, case, x0, y0, px, w, h);
        let out = rasterize(&[(g.clone(), 1.0)], &template).map_err(|e| e.to_string())?;
        for r in 0..h {
            for c in 0..w {
                let inside = pnpoly(&g.rings, x0 + (c as f64 + 0.5) * px, y0 - (r as f64 + 0.5) * px);
                ensure(out.get(0, r, c) == f64::from(u8::from(inside)), || format!("case {case} pixel ({r}, {c})"))?;
                pixels += 1;
            }
        }
    }
    Ok(format!("50 polygons, {pixels} pixels"))
}

fn round_trips() -> Outcome {
    let mut rng = SeededRng::new(11);
    for case in 0..40 {
        let (w, h, ch) = (1 + rng.below(70), 1 + rng.below(70), 1 + rng.below(3));
        let ts = 1 + rng.below(20);
        let data = (0..w * h * ch).map(|_| rng.uniform_range(-1e6, 1e6)).collect();
        let r = GeoRaster::new(w, h, ch, data, GeoTransform::north_up(1e5, 5e6, 10.0, 10.0), "EPSG:32635", f64::NAN).map_err(|e| e.to_string())?;
        let (grid, tiles) = tile(&r, ts).map_err(|e| e.to_string())?;
        let back = mosaic(&tiles, &grid).map_err(|e| e.to_string())?;
        ensure(back.data().iter().zip(r.data()).all(|(a, b)| a.to_bits() == b.to_bits()) && back.geotransform == r.geotransform, || {
            format!("raster case {case}: {w}x{h} tile {ts}")
        })?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::create(dir.path()).map_err(|e| e.to_string())?;
    store.create_groups("g").map_err(|e| e.to_string())?;
    for (case, dtype) in [DType::U8, DType::U16, DType::I32, DType::F32, DType::F64].into_iter().cycle().take(20).enumerate() {
        let shape = [1 + rng.below(13), 1 + rng.below(13), 1 + rng.below(4)];
        let chunks = shape.map(|n| 1 + rng.below(n));
        let codec = if case % 2 == 0 { Codec::Deflate } else { Codec::Raw };
        let values: Vec<f64> = (0..shape.iter().product())
            .map(|_| match dtype {
                DType::U8 => rng.below(256) as f64,
                DType::U16 => rng.below(65_536) as f64,
                DType::I32 => rng.below(1 << 31) as f64 - (1u64 << 30) as f64,
                DType::F32 => f64::from(rng.uniform_range(-1e3, 1e3) as f32),
                DType::F64 => rng.uniform_range(-1e9, 1e9),
            })
            .collect();
        let t = Tensor::from_vec(&shape, values).unwrap();
        let path = format!("g/a{case}");
        store.create_array(&path, &ArraySpec::new(&shape, &chunks, dtype).codec(codec)).map_err(|e| e.to_string())?.write_all(&t).map_err(|e| e.to_string())?;
        let back = store.open_array(&path).map_err(|e| e.to_string())?.read_all().map_err(|e| e.to_string())?;
        ensure(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            format!("store case {case}: {shape:?} chunks {chunks:?} {}", dtype.name())
        })?;
    }
    Ok("40 rasters, 20 arrays".into())
}

fn overfit_one_tile() -> Outcome {
    let seed = 7;
    let mut runs = Vec::new();
    for _ in 0..2 {
        let sample = tile_sample(32, 4, 4, seed).map_err(|e| e.to_string())?;
        let spec = TopologySpec::new(TopologyKind::Unet, 4, 4).with_depth(2).with_base_channels(8).with_input_size(32, 32);
        let mut net = build(&spec, seed).map_err(|e| e.to_string())?;
        let config = TrainConfig { epochs: 200, seed, metrics: vec![MetricKind::Miou], ..Default::default() };
        let data = vec![sample];
        let history = fit(&mut net, &data, None::<&Vec<_>>, &mut Optimizer::adam(), &config).map_err(|e| e.to_string())?;
        let (loss, cm) = evaluate(&net, &data, 1).map_err(|e| e.to_string())?;
        let miou = cm.mean_iou().map_err(|e| e.to_string())?;
        runs.push((history, loss, miou));
    }
    let (h, loss, miou) = &runs[0];
    let train_loss = h.last().map_or(f64::NAN, |r| r.train_loss);
    ensure(train_loss < 0.05 && *loss < 0.05, || format!("loss {train_loss} / {loss}"))?;
    ensure(*miou > 0.95, || format!("MIoU {miou}"))?;
    ensure(runs[0] == runs[1], || "two runs with one seed differ".into())?;
    Ok(format!("train loss {train_loss:.2e}, MIoU {miou:.4}"))
}

const APPENDIX_QUERY: &str = "https://scihub.copernicus.eu/dhus/api/stub/products
?filter=(
beginPosition:[2018-06-01T00:00:00.000Z TO 2018-09-01T23:59:59.999Z] AND
endPosition:[2018-06-01T00:00:00.000Z TO 2018-09-01T23:59:59.999Z]) AND
((platformname:Sentinel-3 AND filename:S3B_* AND
 producttype:OL_1_EFR___ AND instrumentshortname:OLCI))
AND footprint: Intersects
               (POLYGON((16.58910503349143 43.400842665330345,
                         26.95841113834191 43.400842665330345,
                         26.95841113834191 49.09541206485471,
                         16.58910503349143 49.09541206485471,
                         16.58910503349143 43.400842665330345)))
&offset=0&limit=25&sortedby=ingestiondate&order=desc";

fn catalog_query() -> Outcome {
    let day = |m, d| NaiveDate::from_ymd_opt(2018, m, d).unwrap();
    let (x0, x1, y0, y1) = (16.58910503349143, 26.95841113834191, 43.400842665330345, 49.09541206485471);
    let q = CatalogQuery {
        sensing: Some((day(6, 1).and_hms_opt(0, 0, 0).unwrap(), day(9, 1).and_hms_milli_opt(23, 59, 59, 999).unwrap())),
        platform: Some("Sentinel-3".into()),
        filename: Some("S3B_*".into()),
        product_type: Some("OL_1_EFR___".into()),
        instrument: Some("OLCI".into()),
        footprint: Some(WktGeometry::polygon(vec![vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]]).map_err(|e| e.to_string())?),
        sort: Some(("ingestiondate".into(), SortOrder::Desc)),
        ..CatalogQuery::default()
    };
    let built = build_catalog_query(&q).map_err(|e| e.to_string())?;
    ensure(tokens(&built) == tokens(APPENDIX_QUERY), || format!("token sequences differ: {built}"))?;
    ensure(normalize_whitespace(APPENDIX_QUERY) == built, || format!("normalized text differs: {built}"))?;
    Ok(format!("{} tokens", tokens(&built).len()))
}

fn end_to_end_determinism() -> Outcome {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = fixture(dir.path(), &Setup { epochs: 3, clouds: true, ..Setup::default() });
        cmd_ingest(&cfg).map_err(|e| e.to_string())?;
        cmd_split(&cfg).map_err(|e| e.to_string())?;
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        cmd_evaluate(&cfg).map_err(|e| e.to_string())?;
        runs.push((snapshot(&cfg.store_path()), snapshot(&cfg.workspace())));
        // dropping `dir` here removes the first run before the second starts
    }
    let (store, work) = &runs[0];
    for name in ["demo.tseg", "history.json", "report.json"] {
        ensure(work.contains_key(std::path::Path::new(name)), || format!("run wrote no {name}"))?;
    }
    ensure(runs[0].0 == runs[1].0, || "stores differ".into())?;
    for (path, bytes) in work {
        ensure(runs[1].1.get(path) == Some(bytes), || format!("{} differs", path.display()))?;
    }
    ensure(work.len() == runs[1].1.len(), || "workspaces hold different files".into())?;
    Ok(format!("{} store files, {} workspace files", store.len(), work.len()))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "metric oracle", budget: Duration::from_secs(1), run: metric_oracle },
        Criterion { name: "F1 equals Dice", budget: Duration::from_secs(5), run: f1_dice_identity },
        Criterion { name: "gradient checks", budget: Duration::from_secs(120), run: gradient_checks },
        Criterion { name: "pool/unpool contract", budget: Duration::from_secs(10), run: pool_unpool },
        Criterion { name: "Adam first step", budget: Duration::from_secs(1), run: adam_first_step },
        Criterion { name: "stratified K-fold", budget: Duration::from_secs(1), run: stratified_kfold },
        Criterion { name: "cross-validation accounting", budget: Duration::from_secs(1), run: cv_accounting },
        Criterion { name: "rasterizer equivalence", budget: Duration::from_secs(30), run: rasterizer },
        Criterion { name: "tile/mosaic and store round trips", budget: Duration::from_secs(30), run: round_trips },
        Criterion { name: "overfit one tile", budget: Duration::from_secs(300), run: overfit_one_tile },
        Criterion { name: "catalog query", budget: Duration::from_secs(1), run: catalog_query },
        Criterion { name: "end-to-end determinism", budget: Duration::from_secs(300), run: end_to_end_determinism },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {:<34} {detail} ({elapsed:.2?})", i + 1, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {:<34} {detail} ({elapsed:.2?})", i + 1, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
