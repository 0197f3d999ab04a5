//! Builds each topology at a few depths and prints parameter counts and
//! output shapes.
//!
//! `cargo run --example architectures -- [input_size]`

use terraseg::topology::{build, TopologyKind, TopologySpec};

fn main() -> terraseg::Result<()> {
    let size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    println!("{:<8} {:>5} {:>10} {:>7}  output", "model", "depth", "params", "layers");
    for kind in [TopologyKind::Unet, TopologyKind::Segnet, TopologyKind::Resunet] {
        for depth in 1..=4 {
            let spec = TopologySpec::new(kind, 4, 10).with_depth(depth).with_base_channels(16).with_input_size(size, size);
            match build(&spec, 0) {
                Ok(net) => {
                    let out = net.infer_shapes(&[4, size, size])?.pop().unwrap_or_default();
                    println!("{kind:<8} {depth:>5} {:>10} {:>7}  {out:?}", net.count_parameters(), net.len());
                }
                Err(e) => println!("{kind:<8} {depth:>5}  rejected: {e}"),
            }
        }
    }

    // the original unpadded U-Net shrinks its output
    let mut spec = TopologySpec::new(TopologyKind::Unet, 4, 10).with_depth(2).with_base_channels(16).with_input_size(92, 92);
    spec.padded = false;
    let net = build(&spec, 0)?;
    println!("unpadded unet on 92x92 -> {:?}", net.infer_shapes(&[4, 92, 92])?.pop().unwrap_or_default());
    Ok(())
}
