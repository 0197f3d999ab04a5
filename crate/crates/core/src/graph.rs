//! Feed-forward layer graphs with a cached forward pass and reverse-mode backward.
//!
//! Nodes are stored in topological order: a node may only consume nodes
//! added before it, so the graph is acyclic by construction. Node 0 is
//! always the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, ActivationKind, BatchNormCache, PoolIndices, RunningStats};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Input {
        channels: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Transposed convolution plus bias.
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Activation(ActivationKind),
    MaxPool {
        window: usize,
        stride: usize,
    },
    /// Scatters its input back through the indices recorded by `pool`.
    Unpool {
        pool: NodeId,
    },
    BatchNorm {
        channels: usize,
        eps: f64,
    },
    Dropout {
        rate: f64,
    },
    /// Inputs `[skip, up]`: the skip tensor is center-cropped to `up`'s
    /// spatial size and placed before it along the channel axis.
    CropConcat,
    Add,
    Softmax,
}

impl Layer {
    fn arity(&self) -> usize {
        match self {
            Layer::Input { .. } => 0,
            Layer::CropConcat | Layer::Add => 2,
            _ => 1,
        }
    }

    fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Conv2d { .. } | Layer::ConvTranspose { .. } => &["weight", "bias"],
            Layer::BatchNorm { .. } => &["gamma", "beta"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    name: String,
    layer: Layer,
    inputs: Vec<NodeId>,
    channels: usize,
    params: Vec<Tensor>,
    stats: Option<RunningStats>,
}

impl Node {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layer(&self) -> &Layer {
        &self.layer
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    /// Output channel count.
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn running_stats(&self) -> Option<&RunningStats> {
        self.stats.as_ref()
    }
}

/// Serializable structure of a graph, without parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDescriptor {
    pub nodes: Vec<NodeDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
}

pub enum Mode<'a> {
    /// Batch statistics, active dropout drawing from the given generator.
    Train(&'a mut SeededRng),
    Eval,
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Pool(PoolIndices),
    Norm(BatchNormCache),
    Mask(Option<Tensor>),
}

/// Intermediate values kept by a forward pass for [`NetworkGraph::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    outputs: Vec<Tensor>,
    aux: Vec<Aux>,
    stats: Vec<Option<RunningStats>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("graph has an input node")
    }

    pub fn node_output(&self, id: NodeId) -> Option<&Tensor> {
        self.outputs.get(id)
    }

    pub fn into_output(mut self) -> Tensor {
        self.outputs.pop().expect("graph has an input node")
    }
}

/// Parameter gradients aligned with [`NetworkGraph::parameters`], plus the
/// gradient with respect to the graph input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

fn graph_err(node: &Node, e: Error) -> Error {
    match e {
        Error::Graph { .. } => e,
        other => Error::Graph {
            node: node.name.clone(),
            message: other.to_string(),
        },
    }
}

impl NetworkGraph {
    pub fn new(input_channels: usize) -> Self {
        Self {
            nodes: vec![Node {
                name: "input".into(),
                layer: Layer::Input {
                    channels: input_channels,
                },
                inputs: vec![],
                channels: input_channels,
                params: vec![],
                stats: None,
            }],
        }
    }

    pub const INPUT: NodeId = 0;

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn output_id(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn input_channels(&self) -> usize {
        self.nodes[0].channels
    }

    pub fn output_channels(&self) -> usize {
        self.nodes[self.output_id()].channels
    }

    /// Appends a node. Parameters start at zero (batch-norm gamma at one);
    /// call [`NetworkGraph::initialize`] once the graph is complete.
    pub fn add(&mut self, name: impl Into<String>, layer: Layer, inputs: &[NodeId]) -> Result<NodeId> {
        let name = name.into();
        let fail = |message: String| Error::Graph {
            node: name.clone(),
            message,
        };
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(fail("duplicate node name".into()));
        }
        if inputs.len() != layer.arity() {
            return Err(fail(format!(
                "expects {} inputs, got {}",
                layer.arity(),
                inputs.len()
            )));
        }
        let id = self.nodes.len();
        if let Some(&bad) = inputs.iter().find(|&&i| i >= id) {
            return Err(fail(format!("input {bad} is not an earlier node")));
        }
        let in_ch: Vec<usize> = inputs.iter().map(|&i| self.nodes[i].channels).collect();
        let check_in = |expected: usize| {
            if in_ch[0] == expected {
                Ok(())
            } else {
                Err(fail(format!(
                    "input has {} channels, layer expects {expected}",
                    in_ch[0]
                )))
            }
        };
        let positive = |v: usize, what: &str| {
            if v >= 1 {
                Ok(())
            } else {
                Err(fail(format!("{what} must be >= 1")))
            }
        };
        let (channels, params, stats) = match &layer {
            Layer::Input { .. } => return Err(fail("only node 0 may be an input".into())),
            &Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                check_in(in_channels)?;
                positive(out_channels, "out_channels")?;
                positive(kernel, "kernel")?;
                positive(stride, "stride")?;
                (
                    out_channels,
                    vec![
                        Tensor::filled(vec![out_channels, in_channels, kernel, kernel], 0.0),
                        Tensor::filled(vec![out_channels], 0.0),
                    ],
                    None,
                )
            }
            &Layer::ConvTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                check_in(in_channels)?;
                positive(out_channels, "out_channels")?;
                positive(kernel, "kernel")?;
                positive(stride, "stride")?;
                (
                    out_channels,
                    vec![
                        Tensor::filled(vec![in_channels, out_channels, kernel, kernel], 0.0),
                        Tensor::filled(vec![out_channels], 0.0),
                    ],
                    None,
                )
            }
            Layer::Activation(kind) => {
                kind.validate().map_err(|e| fail(e.to_string()))?;
                (in_ch[0], vec![], None)
            }
            &Layer::MaxPool { window, stride } => {
                positive(window, "window")?;
                positive(stride, "stride")?;
                (in_ch[0], vec![], None)
            }
            &Layer::Unpool { pool } => {
                match self.nodes.get(pool).map(|n| &n.layer) {
                    Some(Layer::MaxPool { .. }) => {}
                    _ => return Err(fail(format!("node {pool} is not a max-pool"))),
                }
                let pooled_from = self.nodes[self.nodes[pool].inputs[0]].channels;
                check_in(pooled_from)?;
                (in_ch[0], vec![], None)
            }
            &Layer::BatchNorm { channels, eps } => {
                check_in(channels)?;
                if !(eps > 0.0) {
                    return Err(fail(format!("eps must be > 0, got {eps}")));
                }
                (
                    channels,
                    vec![
                        Tensor::filled(vec![channels], 1.0),
                        Tensor::filled(vec![channels], 0.0),
                    ],
                    Some(RunningStats::new(channels)),
                )
            }
            &Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(fail(format!("dropout rate must be in [0, 1), got {rate}")));
                }
                (in_ch[0], vec![], None)
            }
            Layer::CropConcat => (in_ch[0] + in_ch[1], vec![], None),
            Layer::Add => {
                if in_ch[0] != in_ch[1] {
                    return Err(fail(format!(
                        "cannot add {} and {} channels",
                        in_ch[0], in_ch[1]
                    )));
                }
                (in_ch[0], vec![], None)
            }
            Layer::Softmax => (in_ch[0], vec![], None),
        };
        self.nodes.push(Node {
            name,
            layer,
            inputs: inputs.to_vec(),
            channels,
            params,
            stats,
        });
        Ok(id)
    }

    /// Glorot-uniform weights `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// Each weight tensor draws from its own stream of `seed`, so adding a
    /// layer does not perturb the initialization of earlier ones.
    pub fn initialize(&mut self, seed: u64) {
        for (id, node) in self.nodes.iter_mut().enumerate() {
            let (fan_in, fan_out) = match node.layer {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                }
                | Layer::ConvTranspose {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = SeededRng::derive(seed, id as u64);
            node.params[0]
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = rng.uniform_range(-limit, limit));
            node.params[1].data_mut().fill(0.0);
        }
    }

    /// Learnable tensors in node order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.nodes.iter().flat_map(|n| n.params.iter()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.nodes.iter_mut().flat_map(|n| n.params.iter_mut()).collect()
    }

    /// `(node.param, tensor)` pairs in [`NetworkGraph::parameters`] order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.layer
                    .param_names()
                    .iter()
                    .zip(&n.params)
                    .map(move |(p, t)| (format!("{}.{p}", n.name), t))
            })
            .collect()
    }

    /// Non-learnable state (batch-norm running moments).
    pub fn named_buffers(&self) -> Vec<(String, &Tensor)> {
        self.nodes
            .iter()
            .filter_map(|n| n.stats.as_ref().map(|s| (n, s)))
            .flat_map(|(n, s)| {
                [
                    (format!("{}.running_mean", n.name), &s.mean),
                    (format!("{}.running_var", n.name), &s.var),
                ]
            })
            .collect()
    }

    pub(crate) fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        self.nodes
            .iter_mut()
            .filter_map(|n| n.stats.as_mut())
            .flat_map(|s| [&mut s.mean, &mut s.var])
            .collect()
    }

    pub fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    pub fn descriptor(&self) -> GraphDescriptor {
        GraphDescriptor {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDescriptor {
                    name: n.name.clone(),
                    layer: n.layer.clone(),
                    inputs: n.inputs.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the structure of a graph with freshly allocated parameters.
    pub fn from_descriptor(desc: &GraphDescriptor) -> Result<Self> {
        let mut nodes = desc.nodes.iter();
        let first = nodes.next().ok_or_else(|| Error::Graph {
            node: "input".into(),
            message: "descriptor has no nodes".into(),
        })?;
        let Layer::Input { channels } = first.layer else {
            return Err(Error::Graph {
                node: first.name.clone(),
                message: "first node must be the input".into(),
            });
        };
        let mut g = NetworkGraph::new(channels);
        g.nodes[0].name = first.name.clone();
        for n in nodes {
            g.add(n.name.clone(), n.layer.clone(), &n.inputs)?;
        }
        Ok(g)
    }

    /// Output shape of every node for a given input shape.
    pub fn infer_shapes(&self, input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        let r = input_shape.len();
        if !(r == 3 || r == 4) || input_shape.contains(&0) {
            return Err(Error::shape(format!(
                "graph input must be [C,H,W] or [N,C,H,W], got {input_shape:?}"
            )));
        }
        if input_shape[r - 3] != self.input_channels() {
            return Err(Error::Graph {
                node: self.nodes[0].name.clone(),
                message: format!(
                    "input has {} channels, graph expects {}",
                    input_shape[r - 3],
                    self.input_channels()
                ),
            });
        }
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let fail = |message: String| Error::Graph {
                node: node.name.clone(),
                message,
            };
            let at = |i: usize| &shapes[node.inputs[i]];
            let spatial = |s: &[usize]| (s[r - 2], s[r - 1]);
            let with = |s: &[usize], c: usize, h: usize, w: usize| {
                let mut s = s.to_vec();
                s[r - 3] = c;
                s[r - 2] = h;
                s[r - 1] = w;
                s
            };
            let shape = match node.layer {
                Layer::Input { .. } => input_shape.to_vec(),
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let (h, w) = spatial(at(0));
                    let ext = |len: usize| {
                        let span = len + 2 * padding;
                        if kernel > span || !(span - kernel).is_multiple_of(stride) {
                            Err(fail(format!(
                                "extent {len} gives a non-integral convolution output"
                            )))
                        } else {
                            Ok((span - kernel) / stride + 1)
                        }
                    };
                    with(at(0), out_channels, ext(h)?, ext(w)?)
                }
                Layer::ConvTranspose {
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    let (h, w) = spatial(at(0));
                    with(
                        at(0),
                        out_channels,
                        (h - 1) * stride + kernel,
                        (w - 1) * stride + kernel,
                    )
                }
                Layer::MaxPool { window, stride } => {
                    let (h, w) = spatial(at(0));
                    if window > h || window > w || (h - window) % stride != 0 || (w - window) % stride != 0 {
                        return Err(fail(format!(
                            "{h}x{w} input not divisible by pool window {window} / stride {stride}"
                        )));
                    }
                    with(at(0), node.channels, (h - window) / stride + 1, (w - window) / stride + 1)
                }
                Layer::Unpool { pool } => {
                    if at(0) != &shapes[pool] {
                        return Err(fail(format!(
                            "input {:?} does not match pooled shape {:?}",
                            at(0),
                            shapes[pool]
                        )));
                    }
                    shapes[self.nodes[pool].inputs[0]].clone()
                }
                Layer::CropConcat => {
                    let ((sh, sw), (uh, uw)) = (spatial(at(0)), spatial(at(1)));
                    if uh > sh || uw > sw {
                        return Err(fail(format!(
                            "skip {sh}x{sw} smaller than upsampled {uh}x{uw}"
                        )));
                    }
                    with(at(1), node.channels, uh, uw)
                }
                Layer::Add => {
                    if at(0) != at(1) {
                        return Err(fail(format!("cannot add {:?} and {:?}", at(0), at(1))));
                    }
                    at(0).clone()
                }
                Layer::Activation(_) | Layer::BatchNorm { .. } | Layer::Dropout { .. } | Layer::Softmax => {
                    at(0).clone()
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Forward pass. In training mode batch-norm running moments are updated.
    pub fn forward(&mut self, input: &Tensor, mode: Mode<'_>) -> Result<ForwardCache> {
        let training = mode.is_training();
        let mut cache = self.forward_frozen(input, mode)?;
        if training {
            for (node, stats) in self.nodes.iter_mut().zip(cache.stats.iter_mut()) {
                if let Some(s) = stats.take() {
                    node.stats = Some(s);
                }
            }
        }
        Ok(cache)
    }

    /// Forward pass that leaves the graph untouched, including running moments.
    pub fn forward_frozen(&self, input: &Tensor, mut mode: Mode<'_>) -> Result<ForwardCache> {
        let training = mode.is_training();
        let r = input.rank();
        if !(r == 3 || r == 4) || input.shape()[r - 3] != self.input_channels() {
            return Err(Error::Graph {
                node: self.nodes[0].name.clone(),
                message: format!(
                    "expected input [{}, H, W] (optionally batched), got {:?}",
                    self.input_channels(),
                    input.shape()
                ),
            });
        }
        let n = self.nodes.len();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        let mut stats = Vec::with_capacity(n);
        for node in &self.nodes {
            let x = |i: usize| &outputs[node.inputs[i]];
            let mut new_stats = None;
            let step: Result<(Tensor, Aux)> = (|| {
                Ok(match node.layer {
                    Layer::Input { .. } => (input.clone(), Aux::None),
                    Layer::Conv2d { stride, padding, .. } => (
                        nn::conv2d(x(0), &node.params[0], &node.params[1], stride, padding)?,
                        Aux::None,
                    ),
                    Layer::ConvTranspose { stride, .. } => {
                        let y = nn::conv2d_transpose(x(0), &node.params[0], stride)?;
                        (nn::add_channel_bias(&y, &node.params[1])?, Aux::None)
                    }
                    Layer::Activation(kind) => (nn::activate(kind, x(0))?, Aux::None),
                    Layer::MaxPool { window, stride } => {
                        let (y, idx) = nn::max_pool2d(x(0), window, stride)?;
                        (y, Aux::Pool(idx))
                    }
                    Layer::Unpool { pool } => {
                        let Aux::Pool(idx) = &aux[pool] else {
                            return Err(Error::State("pool indices missing".into()));
                        };
                        let shape = outputs[self.nodes[pool].inputs[0]].shape().to_vec();
                        (nn::unpool_with_indices(x(0), idx, &shape)?, Aux::None)
                    }
                    Layer::BatchNorm { eps, .. } => {
                        let mut rs = node.stats.clone().expect("batch norm has running stats");
                        let (y, c) =
                            nn::batch_norm(x(0), &node.params[0], &node.params[1], eps, &mut rs, training)?;
                        if training {
                            new_stats = Some(rs);
                        }
                        (y, Aux::Norm(c))
                    }
                    Layer::Dropout { rate } => match &mut mode {
                        Mode::Train(rng) => {
                            let (y, m) = nn::dropout(x(0), rate, rng, true)?;
                            (y, Aux::Mask(m))
                        }
                        Mode::Eval => (x(0).clone(), Aux::Mask(None)),
                    },
                    Layer::CropConcat => {
                        let up = x(1);
                        let d = up.dims4()?;
                        let skip = x(0).crop_center(d.h, d.w)?;
                        (Tensor::concat_channels(&skip, up)?, Aux::None)
                    }
                    Layer::Add => (x(0).add(x(1))?, Aux::None),
                    Layer::Softmax => (nn::softmax(x(0))?, Aux::None),
                })
            })();
            let (y, a) = step.map_err(|e| graph_err(node, e))?;
            outputs.push(y);
            aux.push(a);
            stats.push(new_stats);
        }
        Ok(ForwardCache { outputs, aux, stats })
    }

    /// Inference-mode output.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_frozen(input, Mode::Eval)?.into_output())
    }

    /// Back-propagates `grad_output` (gradient with respect to the final
    /// node's output) through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Gradients> {
        self.backward_from(cache, self.output_id(), grad_output)
    }

    /// Back-propagates a gradient taken with respect to the logits feeding a
    /// final softmax node, skipping the softmax Jacobian.
    pub fn backward_logits(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Gradients> {
        let out = &self.nodes[self.output_id()];
        if out.layer != Layer::Softmax {
            return Err(Error::Graph {
                node: out.name.clone(),
                message: "logit gradients need a softmax output node".into(),
            });
        }
        self.backward_from(cache, out.inputs[0], grad_logits)
    }

    fn backward_from(&self, cache: &ForwardCache, start: NodeId, seed: &Tensor) -> Result<Gradients> {
        if cache.outputs.len() != self.nodes.len() {
            return Err(Error::State(
                "forward cache does not belong to this graph".into(),
            ));
        }
        if cache.outputs[start].shape() != seed.shape() {
            return Err(Error::Graph {
                node: self.nodes[start].name.clone(),
                message: format!(
                    "gradient {:?} does not match output {:?}",
                    seed.shape(),
                    cache.outputs[start].shape()
                ),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[start] = Some(seed.clone());
        let mut param_grads: Vec<Vec<Tensor>> = self
            .nodes
            .iter()
            .map(|n| n.params.iter().map(|p| Tensor::filled(p.shape().to_vec(), 0.0)).collect())
            .collect();
        for id in (1..=start).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let x = |i: usize| &cache.outputs[node.inputs[i]];
            let step: Result<Vec<Tensor>> = (|| {
                Ok(match node.layer {
                    Layer::Input { .. } => unreachable!("input is node 0"),
                    Layer::Conv2d { stride, padding, .. } => {
                        let cg = nn::conv2d_backward(x(0), &node.params[0], &g, stride, padding)?;
                        param_grads[id] = vec![cg.kernels, cg.bias];
                        vec![cg.input]
                    }
                    Layer::ConvTranspose { stride, .. } => {
                        let cg = nn::conv2d_transpose_backward(x(0), &node.params[0], &g, stride)?;
                        param_grads[id] = vec![cg.kernels, cg.bias];
                        vec![cg.input]
                    }
                    Layer::Activation(kind) => {
                        let d = nn::activate_grad(kind, x(0))?;
                        vec![g.zip_map(&d, |a, b| a * b)?]
                    }
                    Layer::MaxPool { .. } => {
                        let Aux::Pool(idx) = &cache.aux[id] else {
                            return Err(Error::State("pool indices missing".into()));
                        };
                        vec![nn::max_pool2d_backward(&g, idx)?]
                    }
                    Layer::Unpool { pool } => {
                        let Aux::Pool(idx) = &cache.aux[pool] else {
                            return Err(Error::State("pool indices missing".into()));
                        };
                        vec![nn::unpool_backward(&g, idx)?]
                    }
                    Layer::BatchNorm { .. } => {
                        let Aux::Norm(c) = &cache.aux[id] else {
                            return Err(Error::State("batch norm cache missing".into()));
                        };
                        let (gx, gg, gb) = nn::batch_norm_backward(&g, c, &node.params[0])?;
                        param_grads[id] = vec![gg, gb];
                        vec![gx]
                    }
                    Layer::Dropout { .. } => match &cache.aux[id] {
                        Aux::Mask(Some(m)) => vec![g.zip_map(m, |a, b| a * b)?],
                        Aux::Mask(None) => vec![g],
                        _ => return Err(Error::State("dropout mask missing".into())),
                    },
                    Layer::CropConcat => {
                        let skip = x(0).dims4()?;
                        let up = x(1).dims4()?;
                        let gs = g.slice_channels(0..skip.c)?.embed_center(skip.h, skip.w)?;
                        let gu = g.slice_channels(skip.c..skip.c + up.c)?;
                        vec![gs, gu]
                    }
                    Layer::Add => vec![g.clone(), g],
                    Layer::Softmax => vec![nn::softmax_backward(&cache.outputs[id], &g)?],
                })
            })();
            let input_grads = step.map_err(|e| graph_err(node, e))?;
            for (&src, gi) in node.inputs.iter().zip(input_grads) {
                match &mut grads[src] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor::filled(cache.outputs[0].shape().to_vec(), 0.0));
        Ok(Gradients {
            params: param_grads.into_iter().flatten().collect(),
            input,
        })
    }
}
