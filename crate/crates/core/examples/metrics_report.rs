//! Confusion-matrix metrics on the classic worked examples and on a small
//! three-class prediction.

use terraseg::metrics::{Average, ConfusionMatrix};

fn main() -> terraseg::Result<()> {
    let all_positive = ConfusionMatrix::binary(10_000, 0, 1_000, 0);
    println!("all-positive classifier: accuracy {:.4}", all_positive.accuracy()?);
    println!("910 of 1000 flagged are right: precision {:.2}", ConfusionMatrix::binary(910, 0, 90, 0).precision(0)?);
    println!("940 of 1000 positives found: recall {:.2}", ConfusionMatrix::binary(940, 60, 0, 0).recall(0)?);

    let truth = [0, 0, 1, 1, 2, 2, 2, 1, 0, 2];
    let pred = [0, 1, 1, 1, 2, 0, 2, 1, 0, 2];
    let ignore = [false, false, false, false, false, false, false, false, false, true];
    let mut cm = ConfusionMatrix::new(3)?;
    cm.update(&pred, &truth, Some(&ignore))?;
    for c in 0..3 {
        println!("class {c}: IoU {:.3}  F1 {:.3}  Dice {:.3}", cm.jaccard(c)?, cm.f1(c)?, cm.dice(c)?);
    }
    for avg in [Average::Macro, Average::Micro] {
        println!("{avg:?}: {}", serde_json::to_string(&cm.report(avg)?)?);
    }
    Ok(())
}
