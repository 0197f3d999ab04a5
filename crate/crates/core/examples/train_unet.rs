//! Overfits a depth-2 U-Net to one synthetic 32x32 tile.
//!
//! `cargo run --release --example train_unet -- [seed] [epochs]`

use std::time::Instant;

use terraseg::metrics::Average;
use terraseg::optim::Optimizer;
use terraseg::synthetic::tile_sample;
use terraseg::topology::{build, TopologyKind, TopologySpec};
use terraseg::train::{evaluate, fit, MetricKind, TrainConfig};

fn main() -> terraseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let sample = tile_sample(32, 4, 4, seed)?;
    let spec = TopologySpec::new(TopologyKind::Unet, 4, 4)
        .with_depth(2)
        .with_base_channels(8)
        .with_input_size(32, 32);
    let mut net = build(&spec, seed)?;
    println!("U-Net with {} parameters", net.count_parameters());

    let config = TrainConfig {
        epochs,
        seed,
        metrics: vec![MetricKind::Accuracy, MetricKind::Miou],
        ..Default::default()
    };
    let data = vec![sample];
    let start = Instant::now();
    let history = fit(&mut net, &data, None::<&Vec<_>>, &mut Optimizer::adam(), &config)?;
    for r in history.records.iter().filter(|r| r.epoch % 20 == 0 || r.epoch + 1 == epochs) {
        println!("epoch {:>3}  loss {:.5}  miou {:.4}", r.epoch, r.train_loss, r.metrics["miou"]);
    }
    let (loss, cm) = evaluate(&net, &data, 1)?;
    println!("final loss {loss:.5}, MIoU {:.4}, {:.1}s", cm.mean_iou()?, start.elapsed().as_secs_f64());
    println!("{}", serde_json::to_string_pretty(&cm.report(Average::Macro)?)?);
    Ok(())
}
