//! Finite-difference verification of [`NetworkGraph::backward`].

use crate::error::{Error, Result};
use crate::graph::{ForwardCache, Layer, Mode, NetworkGraph};
use crate::nn::categorical_cross_entropy;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Evaluate in training mode (batch statistics, dropout).
    pub training: bool,
    /// Seed for dropout masks; every evaluation reuses it.
    pub seed: u64,
    /// Denominator floor so near-zero gradients compare absolutely.
    pub floor: f64,
    /// Check at most this many entries per tensor, evenly spaced.
    pub max_per_tensor: Option<usize>,
    /// Also check the gradient with respect to the input.
    pub include_input: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            training: true,
            seed: 0,
            floor: 1e-6,
            max_per_tensor: None,
            include_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `node.param[index]` (or `input[index]`) where the maximum occurred.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Entries compared with a one-sided difference because one side of
    /// the central stencil crossed a kink.
    pub one_sided: usize,
    /// Entries skipped because both sides crossed a kink.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Branch pattern of the piecewise parts of a forward pass: the sign of
/// every pre-activation feeding a kinked activation and every pool argmax.
fn pattern(graph: &NetworkGraph, cache: &ForwardCache) -> Vec<u64> {
    let mut sig = Vec::new();
    for node in graph.nodes() {
        match node.layer() {
            Layer::Activation(kind) if kind.has_kink() => {
                let x = cache.node_output(node.inputs()[0]).expect("full cache");
                sig.extend(x.data().iter().map(|&v| u64::from(v > 0.0)));
            }
            Layer::MaxPool { window, stride } => {
                // recompute the argmax positions from the cached input
                let x = cache.node_output(node.inputs()[0]).expect("full cache");
                if let Ok((_, idx)) = crate::nn::max_pool2d(x, *window, *stride) {
                    sig.extend(idx.indices().iter().map(|&i| i as u64));
                }
            }
            _ => {}
        }
    }
    sig
}

struct Evaluator<'a> {
    graph: &'a NetworkGraph,
    target: &'a Tensor,
    softmax_head: bool,
    opts: &'a GradCheckOptions,
}

impl Evaluator<'_> {
    fn forward(&self, graph: &NetworkGraph, input: &Tensor) -> Result<ForwardCache> {
        if self.opts.training {
            let mut rng = SeededRng::new(self.opts.seed);
            graph.forward_frozen(input, Mode::Train(&mut rng))
        } else {
            graph.forward_frozen(input, Mode::Eval)
        }
    }

    /// Loss and its gradient with respect to the seeded node.
    fn loss(&self, cache: &ForwardCache) -> Result<(f64, Tensor)> {
        let out = cache.output();
        if self.softmax_head {
            let l = categorical_cross_entropy(out, self.target, None)?;
            Ok((l.loss, l.grad_logits))
        } else {
            let diff = out.zip_map(self.target, |a, b| a - b)?;
            Ok((0.5 * diff.dot(&diff), diff))
        }
    }

    fn value(&self, graph: &NetworkGraph, input: &Tensor) -> Result<(f64, Vec<u64>)> {
        let cache = self.forward(graph, input)?;
        Ok((self.loss(&cache)?.0, pattern(self.graph, &cache)))
    }
}

fn sample_indices(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
        _ => (0..len).collect(),
    }
}

/// Compares analytic gradients with central differences for every
/// parameter entry (and optionally the input) and returns the worst
/// relative error.
///
/// The loss is categorical cross-entropy against `target` when the graph
/// ends in a softmax, otherwise `0.5 * |output - target|^2`. Where a
/// perturbation flips a ReLU sign or a pool argmax on one side, the
/// difference falls back to the one-sided quotient on the unaffected side.
pub fn grad_check(
    graph: &NetworkGraph,
    input: &Tensor,
    target: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let softmax_head = matches!(graph.nodes().last().map(|n| n.layer()), Some(Layer::Softmax));
    let ev = Evaluator {
        graph,
        target,
        softmax_head,
        opts,
    };
    let cache = ev.forward(graph, input)?;
    if cache.output().shape() != target.shape() {
        return Err(Error::shape(format!(
            "target {:?} does not match output {:?}",
            target.shape(),
            cache.output().shape()
        )));
    }
    let (f0, seed) = ev.loss(&cache)?;
    let base_pattern = pattern(graph, &cache);
    let grads = if softmax_head {
        graph.backward_logits(&cache, &seed)?
    } else {
        graph.backward(&cache, &seed)?
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        one_sided: 0,
        skipped: 0,
    };
    let h = opts.step;
    let consider = |name: String, analytic: f64, plus: (f64, Vec<u64>), minus: (f64, Vec<u64>), report: &mut GradCheckReport| {
        let numeric = match (plus.1 == base_pattern, minus.1 == base_pattern) {
            (true, true) => (plus.0 - minus.0) / (2.0 * h),
            (true, false) => {
                report.one_sided += 1;
                (plus.0 - f0) / h
            }
            (false, true) => {
                report.one_sided += 1;
                (f0 - minus.0) / h
            }
            (false, false) => {
                report.skipped += 1;
                return;
            }
        };
        report.checked += 1;
        let e = relative_error(analytic, numeric, opts.floor);
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e;
            report.worst = name;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    };

    let names: Vec<String> = graph.named_parameters().into_iter().map(|(n, _)| n).collect();
    let mut probe = graph.clone();
    for (pi, name) in names.iter().enumerate() {
        let len = grads.params[pi].len();
        for k in sample_indices(len, opts.max_per_tensor) {
            let orig = probe.parameters()[pi].data()[k];
            probe.parameters_mut()[pi].data_mut()[k] = orig + h;
            let plus = ev.value(&probe, input)?;
            probe.parameters_mut()[pi].data_mut()[k] = orig - h;
            let minus = ev.value(&probe, input)?;
            probe.parameters_mut()[pi].data_mut()[k] = orig;
            consider(format!("{name}[{k}]"), grads.params[pi].data()[k], plus, minus, &mut report);
        }
    }
    if opts.include_input {
        let mut x = input.clone();
        for k in sample_indices(x.len(), opts.max_per_tensor) {
            let orig = x.data()[k];
            x.data_mut()[k] = orig + h;
            let plus = ev.value(graph, &x)?;
            x.data_mut()[k] = orig - h;
            let minus = ev.value(graph, &x)?;
            x.data_mut()[k] = orig;
            consider(format!("input[{k}]"), grads.input.data()[k], plus, minus, &mut report);
        }
    }
    Ok(report)
}
