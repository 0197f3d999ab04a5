//! Finite-difference checks for every layer kind and every builder.

use terraseg::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use terraseg::graph::{Layer, NetworkGraph, NodeId};
use terraseg::nn::{self, one_hot, ActivationKind};
use terraseg::rng::SeededRng;
use terraseg::tensor::Tensor;
use terraseg::topology::{build, TopologyKind, TopologySpec};

const TOL: f64 = 1e-4;

fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize) -> Layer {
    Layer::Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
    }
}

/// Runs the check with a squared-error loss against a random target.
fn check_mse(g: &NetworkGraph, input_shape: &[usize], opts: &GradCheckOptions, seed: u64) -> GradCheckReport {
    let mut rng = SeededRng::new(seed);
    let x = Tensor::random(input_shape, &mut rng, -1.0, 1.0).unwrap();
    let out_shape = g.infer_shapes(input_shape).unwrap().pop().unwrap();
    let t = Tensor::random(&out_shape, &mut rng, -1.0, 1.0).unwrap();
    grad_check(g, &x, &t, opts).unwrap()
}

fn single(layer: Layer, cin: usize) -> NetworkGraph {
    let mut g = NetworkGraph::new(cin);
    g.add("layer", layer, &[0]).unwrap();
    g.initialize(11);
    g
}

#[test]
fn convolution_layers() {
    let opts = GradCheckOptions::default();
    for (k, s, p, n) in [(3, 1, 1, 6), (3, 2, 0, 7), (1, 1, 0, 5), (2, 2, 1, 6)] {
        let g = single(conv(2, 3, k, s, p), 2);
        let r = check_mse(&g, &[2, n, n], &opts, 1);
        assert!(r.max_rel_error <= TOL, "conv k{k} s{s} p{p}: {r:?}");
    }
    let g = single(
        Layer::ConvTranspose {
            in_channels: 3,
            out_channels: 2,
            kernel: 2,
            stride: 2,
        },
        3,
    );
    let r = check_mse(&g, &[3, 3, 4], &opts, 2);
    assert!(r.max_rel_error <= TOL, "transpose: {r:?}");
}

#[test]
fn batched_convolution() {
    let g = single(conv(2, 2, 3, 1, 1), 2);
    let r = check_mse(&g, &[3, 2, 4, 4], &GradCheckOptions::default(), 3);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn activations() {
    for kind in [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::elu(),
        ActivationKind::Relu,
        ActivationKind::leaky_relu(),
    ] {
        let mut g = NetworkGraph::new(2);
        let c = g.add("conv", conv(2, 2, 3, 1, 1), &[0]).unwrap();
        g.add("act", Layer::Activation(kind), &[c]).unwrap();
        g.initialize(5);
        let r = check_mse(&g, &[2, 5, 5], &GradCheckOptions::default(), 4);
        assert!(r.max_rel_error <= TOL, "{kind:?}: {r:?}");
    }
}

#[test]
fn pooling_and_unpooling() {
    let mut g = NetworkGraph::new(2);
    let c = g.add("conv", conv(2, 2, 3, 1, 1), &[0]).unwrap();
    let p = g.add("pool", Layer::MaxPool { window: 2, stride: 2 }, &[c]).unwrap();
    let q = g.add("conv2", conv(2, 2, 1, 1, 0), &[p]).unwrap();
    g.add("unpool", Layer::Unpool { pool: p }, &[q]).unwrap();
    g.initialize(6);
    let r = check_mse(&g, &[2, 6, 6], &GradCheckOptions::default(), 5);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn average_pool_backward() {
    let mut rng = SeededRng::new(7);
    let x = Tensor::random(&[2, 4, 6], &mut rng, -1.0, 1.0).unwrap();
    let w = Tensor::random(&[2, 2, 3], &mut rng, -1.0, 1.0).unwrap();
    let f = |x: &Tensor| nn::avg_pool2d(x, 2, 2).unwrap().dot(&w);
    let g = nn::avg_pool2d_backward(x.shape(), &w, 2, 2).unwrap();
    let h = 1e-5;
    for k in 0..x.len() {
        let mut a = x.clone();
        a.data_mut()[k] += h;
        let mut b = x.clone();
        b.data_mut()[k] -= h;
        let fd = (f(&a) - f(&b)) / (2.0 * h);
        assert!((fd - g.data()[k]).abs() <= TOL * fd.abs().max(1e-6));
    }
}

#[test]
fn batch_norm_both_modes() {
    let mut g = NetworkGraph::new(2);
    let c = g.add("conv", conv(2, 3, 3, 1, 1), &[0]).unwrap();
    let b = g.add("bn", Layer::BatchNorm { channels: 3, eps: 1e-3 }, &[c]).unwrap();
    g.add("act", Layer::Activation(ActivationKind::Tanh), &[b]).unwrap();
    g.initialize(8);
    for training in [true, false] {
        let opts = GradCheckOptions {
            training,
            ..Default::default()
        };
        let r = check_mse(&g, &[2, 2, 4, 4], &opts, 9);
        assert!(r.max_rel_error <= TOL, "training={training}: {r:?}");
    }
}

#[test]
fn dropout_with_fixed_mask() {
    let mut g = NetworkGraph::new(2);
    let c = g.add("conv", conv(2, 3, 3, 1, 1), &[0]).unwrap();
    g.add("drop", Layer::Dropout { rate: 0.4 }, &[c]).unwrap();
    g.initialize(10);
    let r = check_mse(&g, &[2, 4, 4], &GradCheckOptions::default(), 11);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn skip_connections() {
    // crop-and-concatenate with a larger skip, then an additive shortcut
    let mut g = NetworkGraph::new(2);
    let a = g.add("a", conv(2, 3, 3, 1, 0), &[0]).unwrap();
    let cat = g.add("cat", Layer::CropConcat, &[0, a]).unwrap();
    let b = g.add("b", conv(5, 5, 3, 1, 1), &[cat]).unwrap();
    let add: NodeId = g.add("add", Layer::Add, &[cat, b]).unwrap();
    g.add("act", Layer::Activation(ActivationKind::Sigmoid), &[add]).unwrap();
    g.initialize(12);
    let r = check_mse(&g, &[2, 7, 6], &GradCheckOptions::default(), 13);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn softmax_cross_entropy_head() {
    let mut g = NetworkGraph::new(2);
    let c = g.add("conv", conv(2, 3, 3, 1, 1), &[0]).unwrap();
    g.add("softmax", Layer::Softmax, &[c]).unwrap();
    g.initialize(14);
    let x = Tensor::random(&[2, 3, 3], &mut SeededRng::new(15), -1.0, 1.0).unwrap();
    let t = one_hot(&[0, 1, 2, 2, 1, 0, 0, 1, 2], 1, 3, 3, 3).unwrap();
    let r = grad_check(&g, &x, &t, &GradCheckOptions::default()).unwrap();
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

fn check_builder(kind: TopologyKind, depth: usize, act: ActivationKind) -> GradCheckReport {
    let side = 4 << depth.min(1);
    let spec = TopologySpec::new(kind, 2, 3)
        .with_depth(depth)
        .with_base_channels(4)
        .with_input_size(side, side)
        .with_activation(act);
    let g = build(&spec, 21).unwrap();
    let mut rng = SeededRng::new(22);
    let x = Tensor::random(&[2, side, side], &mut rng, -1.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..side * side).map(|_| rng.below(3)).collect();
    let t = one_hot(&labels, 1, side, side, 3).unwrap();
    grad_check(&g, &x, &t, &GradCheckOptions::default()).unwrap()
}

#[test]
fn builder_graphs() {
    for kind in [TopologyKind::Unet, TopologyKind::Segnet, TopologyKind::Resunet] {
        for depth in [1, 2] {
            for act in [ActivationKind::Relu, ActivationKind::elu()] {
                let r = check_builder(kind, depth, act);
                assert!(r.max_rel_error <= TOL, "{kind} depth {depth} {act:?}: {r:?}");
                assert!(r.checked > 0);
            }
        }
    }
}
