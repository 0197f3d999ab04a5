//! Stratified K-fold on a multilabel corpus, then a scripted
//! cross-validation over three configurations.

use terraseg::rng::SeededRng;
use terraseg::split::{cross_validate, max_class_spread, stratified_kfold_partition, SampleId, SampleRecord};

fn main() -> terraseg::Result<()> {
    let mut rng = SeededRng::new(5);
    let rates = [0.6, 0.3, 0.1, 0.05, 0.45];
    let records: Vec<SampleRecord> = (0..200)
        .map(|i| SampleRecord::new(SampleId::new(i / 20, i % 20, 14), rates.iter().map(|&p| rng.bernoulli(p)).collect()))
        .collect();
    let folds = stratified_kfold_partition(&records, 5, 5)?;
    let counts = folds.class_counts(&records);
    for (f, row) in counts.iter().enumerate() {
        println!("fold {f}: {:>2} samples, class counts {row:?}", folds.members(f).len());
    }
    println!("worst per-class spread: {}", max_class_spread(&counts));
    println!("{}", serde_json::to_string_pretty(&folds.manifest(&records))?);

    // a model whose held-out error depends only on its configuration
    let thetas: [f64; 3] = [0.1, 0.01, 0.001];
    let cv = cross_validate(&records, 5, &thetas, 5, |lr, ctx| Ok(lr.ln().abs() / 10.0 + ctx.fold as f64 * 1e-3))?;
    for (lr, e) in thetas.iter().zip(&cv.per_theta) {
        println!("lr {lr}: mean held-out error {e:.4}");
    }
    println!("accumulated score {:.4}", cv.score);
    Ok(())
}
