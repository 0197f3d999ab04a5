//! Train/test splitting, K-fold partitions and cross-validation.
//!
//! Fold sizes always differ by at most one. The stratified variant first
//! assigns samples greedily, scarcest class first, then polishes the result
//! with single moves and pairwise swaps until no move lowers the imbalance.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Tile grid position plus week index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub row: usize,
    pub col: usize,
    pub week: usize,
}

impl SampleId {
    pub fn new(row: usize, col: usize, week: usize) -> Self {
        Self { row, col, week }
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}_c{}_w{}", self.row, self.col, self.week)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: SampleId,
    /// One flag per class.
    pub presence: Vec<bool>,
}

impl SampleRecord {
    pub fn new(id: SampleId, presence: Vec<bool>) -> Self {
        Self { id, presence }
    }

    /// Marks a class present when it covers at least `min_pixels` pixels.
    /// Pixels equal to `ignore` are not counted; any other value outside
    /// `0..num_classes` is a data error.
    pub fn from_labels(
        id: SampleId,
        labels: &[u8],
        num_classes: usize,
        min_pixels: usize,
        ignore: Option<u8>,
    ) -> Result<Self> {
        let mut counts = vec![0usize; num_classes];
        for &v in labels {
            if Some(v) == ignore {
                continue;
            }
            let c = usize::from(v);
            if c >= num_classes {
                return Err(Error::data(format!("label {v} in sample {id} exceeds {num_classes} classes")));
            }
            counts[c] += 1;
        }
        let threshold = min_pixels.max(1);
        Ok(Self::new(id, counts.iter().map(|&n| n >= threshold).collect()))
    }

    pub fn num_classes(&self) -> usize {
        self.presence.len()
    }
}

fn check_samples(samples: &[SampleRecord]) -> Result<usize> {
    let classes = samples.first().map_or(0, |s| s.num_classes());
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples {
        if s.num_classes() != classes {
            return Err(Error::data(format!(
                "sample {} has {} presence flags, expected {classes}",
                s.id,
                s.num_classes()
            )));
        }
        if !seen.insert(s.id) {
            return Err(Error::data(format!("duplicate sample id {}", s.id)));
        }
    }
    Ok(classes)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k <= 1 || k > n {
        return Err(Error::param(format!("fold count {k} must satisfy 1 < K <= {n}")));
    }
    Ok(())
}

/// Shuffled split with `round(n * test_fraction)` test samples.
pub fn train_test_split(
    samples: &[SampleRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<SampleId>, Vec<SampleId>)> {
    check_samples(samples)?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::param(format!("need at least 2 samples to split, got {n}")));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::param(format!(
            "test fraction {test_fraction} of {n} samples leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let test = order[..n_test].iter().map(|&i| samples[i].id).collect();
    let train = order[n_test..].iter().map(|&i| samples[i].id).collect();
    Ok((train, test))
}

/// Fold index per sample, aligned with the sample slice it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub ids: Vec<SampleId>,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    /// Checks the partition invariants.
    pub fn new(k: usize, seed: u64, ids: Vec<SampleId>, folds: Vec<usize>) -> Result<Self> {
        if ids.len() != folds.len() {
            return Err(Error::data(format!("{} ids but {} fold indices", ids.len(), folds.len())));
        }
        check_k(k, ids.len())?;
        if let Some(&f) = folds.iter().find(|&&f| f >= k) {
            return Err(Error::data(format!("fold index {f} out of range for K = {k}")));
        }
        let unique: HashSet<_> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(Error::data("duplicate sample ids in fold assignment"));
        }
        let a = Self { k, seed, ids, folds };
        let sizes = a.sizes();
        let (lo, hi) = (sizes.iter().min().copied(), sizes.iter().max().copied());
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if hi - lo > 1 {
                return Err(Error::data(format!("fold sizes {sizes:?} differ by more than one")));
            }
        }
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fold_of(&self, id: SampleId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id).map(|i| self.folds[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }

    /// Sample positions in fold `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Sample positions outside fold `fold`.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    /// `counts[fold][class]`: samples in the fold containing the class.
    pub fn class_counts(&self, samples: &[SampleRecord]) -> Vec<Vec<usize>> {
        let classes = samples.first().map_or(0, |s| s.num_classes());
        let mut counts = vec![vec![0; classes]; self.k];
        for (s, &f) in samples.iter().zip(&self.folds) {
            for (c, &p) in s.presence.iter().enumerate() {
                counts[f][c] += usize::from(p);
            }
        }
        counts
    }

    pub fn manifest(&self, samples: &[SampleRecord]) -> FoldManifest {
        FoldManifest {
            k: self.k,
            seed: self.seed,
            sizes: self.sizes(),
            class_counts: self.class_counts(samples),
        }
    }
}

/// Summary written next to a persisted fold array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub k: usize,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub class_counts: Vec<Vec<usize>>,
}

/// Shuffles, then cuts into K contiguous chunks; the first `n % K` chunks
/// get one extra sample.
pub fn kfold_partition(samples: &[SampleRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    check_samples(samples)?;
    let n = samples.len();
    check_k(k, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut folds = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            folds[i] = f;
        }
        pos += size;
    }
    FoldAssignment::new(k, seed, samples.iter().map(|s| s.id).collect(), folds)
}

struct Balance<'a> {
    samples: &'a [SampleRecord],
    k: usize,
    /// Ideal per-fold count of each class.
    class_target: Vec<f64>,
    size_target: f64,
    /// Weight that makes any size imbalance dominate every class term.
    size_weight: f64,
}

impl Balance<'_> {
    fn cost(&self, counts: &[Vec<usize>], sizes: &[usize]) -> f64 {
        let mut c = 0.0;
        for f in 0..self.k {
            for (cl, &t) in self.class_target.iter().enumerate() {
                let d = counts[f][cl] as f64 - t;
                c += d * d;
            }
            let d = sizes[f] as f64 - self.size_target;
            c += self.size_weight * d * d;
        }
        c
    }

    /// Change in cost when sample `i` leaves fold `from` for fold `to`.
    fn move_delta(&self, counts: &[Vec<usize>], sizes: &[usize], i: usize, from: usize, to: usize) -> f64 {
        let sq = |x: f64| x * x;
        let mut d = 0.0;
        for (cl, &p) in self.samples[i].presence.iter().enumerate() {
            if p {
                let t = self.class_target[cl];
                let a = counts[from][cl] as f64;
                let b = counts[to][cl] as f64;
                d += sq(a - 1.0 - t) - sq(a - t) + sq(b + 1.0 - t) - sq(b - t);
            }
        }
        let (a, b) = (sizes[from] as f64, sizes[to] as f64);
        let t = self.size_target;
        d + self.size_weight * (sq(a - 1.0 - t) - sq(a - t) + sq(b + 1.0 - t) - sq(b - t))
    }
}

fn apply_move(samples: &[SampleRecord], counts: &mut [Vec<usize>], sizes: &mut [usize], i: usize, from: usize, to: usize) {
    for (cl, &p) in samples[i].presence.iter().enumerate() {
        if p {
            counts[from][cl] -= 1;
            counts[to][cl] += 1;
        }
    }
    sizes[from] -= 1;
    sizes[to] += 1;
}

/// Multilabel stratified partition.
///
/// Classes are visited from scarcest to most common. Each still-unassigned
/// sample carrying the class goes to the fold with the greatest remaining
/// demand for it, ties broken by the smaller fold and then the lower index.
/// Samples without any class fill the folds with the most remaining room.
/// A local search over single moves and pairwise swaps then removes any
/// leftover imbalance in fold sizes and per-class counts.
pub fn stratified_kfold_partition(samples: &[SampleRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    let classes = check_samples(samples)?;
    let n = samples.len();
    check_k(k, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);

    let totals: Vec<usize> = (0..classes)
        .map(|c| samples.iter().filter(|s| s.presence[c]).count())
        .collect();
    let bal = Balance {
        samples,
        k,
        class_target: totals.iter().map(|&t| t as f64 / k as f64).collect(),
        size_target: n as f64 / k as f64,
        size_weight: (4 * classes.max(1) * n) as f64,
    };
    let mut demand: Vec<Vec<f64>> = vec![bal.class_target.clone(); k];
    let mut room = vec![bal.size_target; k];
    let mut sizes = vec![0usize; k];
    let mut folds = vec![usize::MAX; n];
    let mut remaining = totals.clone();

    let place = |i: usize, f: usize, folds: &mut [usize], sizes: &mut [usize], demand: &mut [Vec<f64>], room: &mut [f64], remaining: &mut [usize]| {
        folds[i] = f;
        sizes[f] += 1;
        room[f] -= 1.0;
        for (c, &p) in samples[i].presence.iter().enumerate() {
            if p {
                demand[f][c] -= 1.0;
                remaining[c] -= 1;
            }
        }
    };

    loop {
        // scarcest class that still has unassigned samples
        let Some(c) = (0..classes).filter(|&c| remaining[c] > 0).min_by_key(|&c| (remaining[c], c)) else {
            break;
        };
        let carriers: Vec<usize> = order.iter().copied().filter(|&i| folds[i] == usize::MAX && samples[i].presence[c]).collect();
        for i in carriers {
            let f = (0..k)
                .max_by(|&a, &b| {
                    demand[a][c]
                        .total_cmp(&demand[b][c])
                        .then(sizes[b].cmp(&sizes[a]))
                        .then(b.cmp(&a))
                })
                .expect("k > 1");
            place(i, f, &mut folds, &mut sizes, &mut demand, &mut room, &mut remaining);
        }
    }
    for &i in &order {
        if folds[i] == usize::MAX {
            let f = (0..k)
                .max_by(|&a, &b| room[a].total_cmp(&room[b]).then(b.cmp(&a)))
                .expect("k > 1");
            place(i, f, &mut folds, &mut sizes, &mut demand, &mut room, &mut remaining);
        }
    }

    let mut counts = vec![vec![0usize; classes]; k];
    for (s, &f) in samples.iter().zip(&folds) {
        for (c, &p) in s.presence.iter().enumerate() {
            counts[f][c] += usize::from(p);
        }
    }
    refine(&bal, &mut folds, &mut counts, &mut sizes);
    debug_assert!(bal.cost(&counts, &sizes).is_finite());
    FoldAssignment::new(k, seed, samples.iter().map(|s| s.id).collect(), folds)
}

/// First-improvement local search; stops when no move or swap helps.
fn refine(bal: &Balance<'_>, folds: &mut [usize], counts: &mut [Vec<usize>], sizes: &mut [usize]) {
    const EPS: f64 = 1e-9;
    let n = folds.len();
    loop {
        let mut improved = false;
        for i in 0..n {
            for to in 0..bal.k {
                let from = folds[i];
                if to != from && bal.move_delta(counts, sizes, i, from, to) < -EPS {
                    apply_move(bal.samples, counts, sizes, i, from, to);
                    folds[i] = to;
                    improved = true;
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (folds[i], folds[j]);
                if a == b || bal.samples[i].presence == bal.samples[j].presence {
                    continue;
                }
                let d1 = bal.move_delta(counts, sizes, i, a, b);
                apply_move(bal.samples, counts, sizes, i, a, b);
                let d2 = bal.move_delta(counts, sizes, j, b, a);
                if d1 + d2 < -EPS {
                    apply_move(bal.samples, counts, sizes, j, b, a);
                    folds.swap(i, j);
                    improved = true;
                } else {
                    apply_move(bal.samples, counts, sizes, i, b, a);
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// What the evaluation callback of [`cross_validate`] receives.
#[derive(Debug, Clone)]
pub struct FoldContext<'a> {
    /// Index into the hyperparameter list.
    pub theta: usize,
    pub fold: usize,
    pub k: usize,
    /// Sample positions to train on (every other fold).
    pub train: &'a [usize],
    /// Sample positions of the held-out fold.
    pub validation: &'a [usize],
    /// Derived from the run seed, the configuration and the fold.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldError {
    pub theta: usize,
    pub fold: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// Sum of `e / K` over every configuration and fold.
    pub score: f64,
    /// Mean held-out error of each configuration.
    pub per_theta: Vec<f64>,
    pub evaluations: Vec<FoldError>,
}

impl CrossValidation {
    /// Configuration with the lowest mean error.
    pub fn best(&self) -> Option<usize> {
        (0..self.per_theta.len()).min_by(|&a, &b| self.per_theta[a].total_cmp(&self.per_theta[b]))
    }
}

/// Seed handed to the run for configuration `theta` on fold `fold`.
pub fn fold_seed(seed: u64, theta: usize, fold: usize) -> u64 {
    SeededRng::derive(seed, ((theta as u64) << 32) | fold as u64).next_u64()
}

/// Runs `evaluate` once per (configuration, fold) pair over the given
/// partition and accumulates `score += e / K` across all of them.
///
/// The returned score is the total over every configuration, not the best
/// one; `per_theta` and [`CrossValidation::best`] give the per-configuration
/// view.
pub fn cross_validate_folds<P, F>(folds: &FoldAssignment, thetas: &[P], seed: u64, mut evaluate: F) -> Result<CrossValidation>
where
    F: FnMut(&P, &FoldContext<'_>) -> Result<f64>,
{
    if thetas.is_empty() {
        return Err(Error::param("cross-validation needs at least one configuration"));
    }
    let k = folds.k;
    let mut score = 0.0;
    let mut per_theta = vec![0.0; thetas.len()];
    let mut evaluations = Vec::with_capacity(thetas.len() * k);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|f| (folds.complement(f), folds.members(f))).collect();
    for (t, theta) in thetas.iter().enumerate() {
        for (f, (train, validation)) in splits.iter().enumerate() {
            let ctx = FoldContext {
                theta: t,
                fold: f,
                k,
                train,
                validation,
                seed: fold_seed(seed, t, f),
            };
            let e = evaluate(theta, &ctx).map_err(|source| Error::CrossValidation {
                theta: t,
                fold: f,
                source: Box::new(source),
            })?;
            score += e / k as f64;
            per_theta[t] += e / k as f64;
            evaluations.push(FoldError { theta: t, fold: f, error: e });
        }
    }
    Ok(CrossValidation {
        score,
        per_theta,
        evaluations,
    })
}

/// [`cross_validate_folds`] over a fresh [`kfold_partition`].
pub fn cross_validate<P, F>(samples: &[SampleRecord], k: usize, thetas: &[P], seed: u64, evaluate: F) -> Result<CrossValidation>
where
    F: FnMut(&P, &FoldContext<'_>) -> Result<f64>,
{
    let folds = kfold_partition(samples, k, seed)?;
    cross_validate_folds(&folds, thetas, seed, evaluate)
}

/// Largest spread (max minus min fold count) over all classes.
pub fn max_class_spread(counts: &[Vec<usize>]) -> usize {
    let classes = counts.first().map_or(0, Vec::len);
    (0..classes)
        .map(|c| {
            let col = counts.iter().map(|row| row[c]);
            col.clone().max().unwrap_or(0) - col.min().unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Per-class totals keyed by class index, for reporting.
pub fn class_totals(samples: &[SampleRecord]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for s in samples {
        for (c, &p) in s.presence.iter().enumerate() {
            if p {
                *m.entry(c).or_insert(0) += 1;
            }
        }
    }
    m
}
