//! Checks analytic gradients against central differences for a small
//! network and for each builder.

use terraseg::gradcheck::{grad_check, GradCheckOptions};
use terraseg::graph::{Layer, NetworkGraph};
use terraseg::nn::{one_hot, ActivationKind};
use terraseg::rng::SeededRng;
use terraseg::tensor::Tensor;
use terraseg::topology::{build, TopologyKind, TopologySpec};

fn main() -> terraseg::Result<()> {
    let mut g = NetworkGraph::new(3);
    let c = g.add("conv", Layer::Conv2d { in_channels: 3, out_channels: 4, kernel: 3, stride: 1, padding: 1 }, &[0])?;
    let b = g.add("bn", Layer::BatchNorm { channels: 4, eps: 1e-3 }, &[c])?;
    let a = g.add("elu", Layer::Activation(ActivationKind::elu()), &[b])?;
    let p = g.add("pool", Layer::MaxPool { window: 2, stride: 2 }, &[a])?;
    let u = g.add("unpool", Layer::Unpool { pool: p }, &[p])?;
    let h = g.add("head", Layer::Conv2d { in_channels: 4, out_channels: 3, kernel: 1, stride: 1, padding: 0 }, &[u])?;
    g.add("softmax", Layer::Softmax, &[h])?;
    g.initialize(1);

    let mut rng = SeededRng::new(2);
    let x = Tensor::random(&[2, 3, 6, 6], &mut rng, -1.0, 1.0)?;
    let labels: Vec<usize> = (0..2 * 36).map(|_| rng.below(3)).collect();
    let t = one_hot(&labels, 2, 6, 6, 3)?;
    let r = grad_check(&g, &x, &t, &GradCheckOptions::default())?;
    println!("hand-built graph: {} entries, max relative error {:.2e} at {}", r.checked, r.max_rel_error, r.worst);

    for kind in [TopologyKind::Unet, TopologyKind::Segnet, TopologyKind::Resunet] {
        let spec = TopologySpec::new(kind, 2, 3).with_depth(2).with_base_channels(4).with_input_size(8, 8);
        let net = build(&spec, 3)?;
        let x = Tensor::random(&[2, 8, 8], &mut rng, -1.0, 1.0)?;
        let labels: Vec<usize> = (0..64).map(|_| rng.below(3)).collect();
        let t = one_hot(&labels, 1, 8, 8, 3)?;
        let r = grad_check(&net, &x, &t, &GradCheckOptions::default())?;
        println!("{kind:<8} depth 2: {} entries, max relative error {:.2e}", r.checked, r.max_rel_error);
    }
    Ok(())
}
