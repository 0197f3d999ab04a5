use proptest::prelude::*;
use terraseg::rng::SeededRng;
use terraseg::split::{
    cross_validate, kfold_partition, max_class_spread, stratified_kfold_partition, FoldAssignment, SampleId,
    SampleRecord,
};

/// Random multilabel corpus; class `c` appears with probability `rates[c]`.
fn corpus(n: usize, rates: &[f64], seed: u64) -> Vec<SampleRecord> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let presence = rates.iter().map(|&p| rng.bernoulli(p)).collect();
            SampleRecord::new(SampleId::new(i / 20, i % 20, i % 7), presence)
        })
        .collect()
}

fn assert_partition(a: &FoldAssignment, n: usize) {
    assert_eq!(a.len(), n);
    let total: usize = (0..a.k).map(|f| a.members(f).len()).sum();
    assert_eq!(total, n);
    let sizes = a.sizes();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
}

#[test]
fn stratified_counts_within_one_of_ideal() {
    let rates = [0.5, 0.3, 0.15, 0.08, 0.6];
    for seed in 0..20 {
        let s = corpus(200, &rates, seed);
        let a = stratified_kfold_partition(&s, 5, seed).unwrap();
        assert_partition(&a, 200);
        let counts = a.class_counts(&s);
        for c in 0..rates.len() {
            let ideal = s.iter().filter(|r| r.presence[c]).count() as f64 / 5.0;
            for row in &counts {
                assert!((row[c] as f64 - ideal).abs() <= 1.0, "seed {seed} class {c}: {counts:?}");
            }
        }
        assert_eq!(stratified_kfold_partition(&s, 5, seed).unwrap(), a);
    }
}

/// Smallest achievable worst-class spread over every size-valid assignment.
fn exhaustive_best_spread(samples: &[SampleRecord], k: usize) -> usize {
    let n = samples.len();
    let classes = samples[0].presence.len();
    let mut best = usize::MAX;
    let mut folds = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut x = code;
        for f in folds.iter_mut() {
            *f = x % k;
            x /= k;
        }
        // fix sample 0 in fold 0 to skip relabelings
        if folds[0] != 0 {
            continue;
        }
        let mut sizes = vec![0; k];
        let mut counts = vec![vec![0; classes]; k];
        for (s, &f) in samples.iter().zip(&folds) {
            sizes[f] += 1;
            for (c, &p) in s.presence.iter().enumerate() {
                counts[f][c] += usize::from(p);
            }
        }
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            continue;
        }
        best = best.min(max_class_spread(&counts));
    }
    best
}

#[test]
fn stratified_matches_exhaustive_search_on_small_corpora() {
    let rates = [0.5, 0.35, 0.2];
    for seed in 0..6 {
        let s = corpus(12, &rates, 100 + seed);
        if s.iter().all(|r| r.presence.iter().all(|&p| !p)) {
            continue;
        }
        let best = exhaustive_best_spread(&s, 3);
        let a = stratified_kfold_partition(&s, 3, seed).unwrap();
        let spread = max_class_spread(&a.class_counts(&s));
        assert!(spread <= best + 1, "seed {seed}: greedy {spread}, optimum {best}");
    }
}

#[test]
fn every_sample_validated_once_per_configuration() {
    let s = corpus(23, &[0.5], 1);
    let mut seen = vec![vec![0usize; s.len()]; 3];
    let mut trained = vec![vec![0usize; s.len()]; 3];
    let cv = cross_validate(&s, 4, &[0usize, 1, 2], 7, |&t, ctx| {
        for &i in ctx.validation {
            seen[t][i] += 1;
        }
        for &i in ctx.train {
            trained[t][i] += 1;
        }
        Ok(0.0)
    })
    .unwrap();
    assert_eq!(cv.score, 0.0);
    assert_eq!(cv.evaluations.len(), 3 * 4);
    assert!(seen.iter().flatten().all(|&v| v == 1));
    assert!(trained.iter().flatten().all(|&v| v == 3));
}

proptest! {
    #[test]
    fn kfold_is_a_partition(n in 2usize..80, k_raw in 2usize..12, seed in any::<u64>()) {
        let k = k_raw.min(n);
        let s = corpus(n, &[0.4], seed);
        let a = kfold_partition(&s, k, seed).unwrap();
        assert_partition(&a, n);
        prop_assert_eq!(kfold_partition(&s, k, seed).unwrap(), a);
    }

    #[test]
    fn stratified_is_a_partition(n in 2usize..60, k_raw in 2usize..7, seed in any::<u64>()) {
        let k = k_raw.min(n);
        let s = corpus(n, &[0.5, 0.2, 0.7], seed);
        let a = stratified_kfold_partition(&s, k, seed).unwrap();
        assert_partition(&a, n);
        prop_assert_eq!(stratified_kfold_partition(&s, k, seed).unwrap(), a);
    }

    #[test]
    fn scripted_errors_accumulate(errs in proptest::collection::vec(0.0f64..1.0, 6)) {
        let s = corpus(9, &[0.5], 0);
        let cv = cross_validate(&s, 3, &[0usize, 1], 0, |&t, ctx| Ok(errs[t * 3 + ctx.fold])).unwrap();
        let expected: f64 = errs.iter().map(|e| e / 3.0).sum();
        prop_assert!((cv.score - expected).abs() < 1e-12);
    }
}
