//! Builders for the encoder-decoder segmentation networks.
//!
//! Encoder stage `i` works at `base_channels * 2^i` channels and ends in a
//! 2x2/2 max-pool; the bottleneck (U-Net family) runs at
//! `base_channels * 2^depth`. Every graph ends in a 1x1 convolution to
//! `num_classes` followed by a channel softmax.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Layer, NetworkGraph, NodeId};
use crate::nn::ActivationKind;

/// Batch-norm epsilon used by the builders.
pub const BN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    #[serde(alias = "u-net")]
    Unet,
    Segnet,
    #[serde(alias = "res-unet")]
    Resunet,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            TopologyKind::Unet => "unet",
            TopologyKind::Segnet => "segnet",
            TopologyKind::Resunet => "resunet",
        })
    }
}

fn default_depth() -> usize {
    2
}
fn default_base() -> usize {
    8
}
fn default_true() -> bool {
    true
}
fn default_input_size() -> [usize; 2] {
    [32, 32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: ActivationKind,
    /// Padding 1 on 3x3 convolutions. Unpadded U-Nets shrink at every
    /// convolution and crop their skips, so the output is smaller than the input.
    #[serde(default = "default_true")]
    pub padded: bool,
    /// Dropout rate after the deepest stage; 0 disables it.
    #[serde(default)]
    pub dropout: f64,
    /// `[height, width]` the graph is validated for.
    #[serde(default = "default_input_size")]
    pub input_size: [usize; 2],
}

impl TopologySpec {
    pub fn new(kind: TopologyKind, in_channels: usize, num_classes: usize) -> Self {
        Self {
            kind,
            depth: default_depth(),
            base_channels: default_base(),
            in_channels,
            num_classes,
            activation: ActivationKind::Relu,
            padded: true,
            dropout: 0.0,
            input_size: default_input_size(),
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn with_input_size(mut self, h: usize, w: usize) -> Self {
        self.input_size = [h, w];
        self
    }

    pub fn with_activation(mut self, act: ActivationKind) -> Self {
        self.activation = act;
        self
    }

    /// Channels of encoder stage `i`.
    pub fn stage_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::param(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.depth < 1 || self.base_channels < 1 || self.in_channels < 1 {
            return Err(Error::param("depth, base_channels and in_channels must be >= 1"));
        }
        if self.depth > 16 {
            return Err(Error::param(format!("depth {} is unreasonably deep", self.depth)));
        }
        self.activation.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !self.padded && self.kind != TopologyKind::Unet {
            return Err(Error::param(format!(
                "unpadded convolutions are only supported for unet, not {}",
                self.kind
            )));
        }
        let [h, w] = self.input_size;
        let m = 1usize << self.depth;
        if self.padded && (h == 0 || w == 0 || h % m != 0 || w % m != 0) {
            return Err(Error::shape(format!(
                "input {h}x{w} is not divisible by 2^depth = {m}"
            )));
        }
        Ok(())
    }
}

/// Builds the graph described by `spec`, initialized from `seed`.
pub fn build(spec: &TopologySpec, seed: u64) -> Result<NetworkGraph> {
    spec.validate()?;
    let mut g = match spec.kind {
        TopologyKind::Unet => build_unet(spec)?,
        TopologyKind::Segnet => build_segnet(spec)?,
        TopologyKind::Resunet => build_resunet(spec)?,
    };
    g.initialize(seed);
    Ok(g)
}

struct Builder<'a> {
    g: NetworkGraph,
    spec: &'a TopologySpec,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, x: NodeId, cin: usize, cout: usize, kernel: usize) -> Result<NodeId> {
        let padding = if self.spec.padded { kernel / 2 } else { 0 };
        self.g.add(
            name,
            Layer::Conv2d {
                in_channels: cin,
                out_channels: cout,
                kernel,
                stride: 1,
                padding,
            },
            &[x],
        )
    }

    fn act(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.g.add(name, Layer::Activation(self.spec.activation), &[x])
    }

    /// conv 3x3 -> activation, twice.
    fn double_conv(&mut self, p: &str, x: NodeId, cin: usize, cout: usize) -> Result<NodeId> {
        let c = self.conv(&format!("{p}_conv1"), x, cin, cout, 3)?;
        let a = self.act(&format!("{p}_act1"), c)?;
        let c = self.conv(&format!("{p}_conv2"), a, cout, cout, 3)?;
        self.act(&format!("{p}_act2"), c)
    }

    /// conv 3x3 -> batch norm -> activation.
    fn conv_bn_act(&mut self, p: &str, x: NodeId, cin: usize, cout: usize) -> Result<NodeId> {
        let c = self.conv(&format!("{p}_conv"), x, cin, cout, 3)?;
        let b = self.g.add(
            format!("{p}_bn"),
            Layer::BatchNorm {
                channels: cout,
                eps: BN_EPS,
            },
            &[c],
        )?;
        self.act(&format!("{p}_act"), b)
    }

    fn pool(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.g.add(name, Layer::MaxPool { window: 2, stride: 2 }, &[x])
    }

    fn up(&mut self, name: &str, x: NodeId, cin: usize, cout: usize) -> Result<NodeId> {
        self.g.add(
            name,
            Layer::ConvTranspose {
                in_channels: cin,
                out_channels: cout,
                kernel: 2,
                stride: 2,
            },
            &[x],
        )
    }

    fn maybe_dropout(&mut self, x: NodeId) -> Result<NodeId> {
        if self.spec.dropout > 0.0 {
            self.g.add("dropout", Layer::Dropout { rate: self.spec.dropout }, &[x])
        } else {
            Ok(x)
        }
    }

    fn head(mut self, x: NodeId, cin: usize) -> Result<NetworkGraph> {
        let spec = self.spec;
        let c = self.conv("head_conv", x, cin, spec.num_classes, 1)?;
        self.g.add("softmax", Layer::Softmax, &[c])?;
        let [h, w] = spec.input_size;
        self.g.infer_shapes(&[spec.in_channels, h, w])?;
        Ok(self.g)
    }
}

/// Adds a residual unit: `act(conv(act(conv(x))) + skip(x))`, where the
/// skip is the identity when `cin == cout` and a 1x1 convolution otherwise.
pub fn residual_unit(
    g: &mut NetworkGraph,
    prefix: &str,
    x: NodeId,
    cin: usize,
    cout: usize,
    activation: ActivationKind,
) -> Result<NodeId> {
    let conv = |k: usize, cin: usize, pad: usize| Layer::Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: 1,
        padding: pad,
    };
    let c1 = g.add(format!("{prefix}_conv1"), conv(3, cin, 1), &[x])?;
    let a1 = g.add(format!("{prefix}_act1"), Layer::Activation(activation), &[c1])?;
    let c2 = g.add(format!("{prefix}_conv2"), conv(3, cout, 1), &[a1])?;
    let skip = if cin == cout {
        x
    } else {
        g.add(format!("{prefix}_proj"), conv(1, cin, 0), &[x])?
    };
    let sum = g.add(format!("{prefix}_add"), Layer::Add, &[skip, c2])?;
    g.add(format!("{prefix}_out"), Layer::Activation(activation), &[sum])
}

pub fn build_unet(spec: &TopologySpec) -> Result<NetworkGraph> {
    spec.validate()?;
    let mut b = Builder {
        g: NetworkGraph::new(spec.in_channels),
        spec,
    };
    let mut x = NetworkGraph::INPUT;
    let mut cin = spec.in_channels;
    let mut skips = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        let c = spec.stage_channels(i);
        x = b.double_conv(&format!("enc{i}"), x, cin, c)?;
        skips.push(x);
        x = b.pool(&format!("enc{i}_pool"), x)?;
        cin = c;
    }
    let c = spec.stage_channels(spec.depth);
    x = b.double_conv("bottleneck", x, cin, c)?;
    x = b.maybe_dropout(x)?;
    for i in (0..spec.depth).rev() {
        let c = spec.stage_channels(i);
        let up = b.up(&format!("dec{i}_up"), x, 2 * c, c)?;
        let cat = b.g.add(format!("dec{i}_concat"), Layer::CropConcat, &[skips[i], up])?;
        x = b.double_conv(&format!("dec{i}"), cat, 2 * c, c)?;
    }
    b.head(x, spec.base_channels)
}

pub fn build_segnet(spec: &TopologySpec) -> Result<NetworkGraph> {
    spec.validate()?;
    let mut b = Builder {
        g: NetworkGraph::new(spec.in_channels),
        spec,
    };
    let mut x = NetworkGraph::INPUT;
    let mut cin = spec.in_channels;
    let mut pools = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        let c = spec.stage_channels(i);
        x = b.conv_bn_act(&format!("enc{i}_a"), x, cin, c)?;
        x = b.conv_bn_act(&format!("enc{i}_b"), x, c, c)?;
        x = b.pool(&format!("enc{i}_pool"), x)?;
        pools.push(x);
        cin = c;
    }
    x = b.maybe_dropout(x)?;
    // indices are consumed in reverse order of production
    for i in (0..spec.depth).rev() {
        let c = spec.stage_channels(i);
        let cout = if i == 0 { spec.base_channels } else { spec.stage_channels(i - 1) };
        x = b.g.add(format!("dec{i}_unpool"), Layer::Unpool { pool: pools[i] }, &[x])?;
        x = b.conv_bn_act(&format!("dec{i}_a"), x, c, c)?;
        x = b.conv_bn_act(&format!("dec{i}_b"), x, c, cout)?;
    }
    b.head(x, spec.base_channels)
}

pub fn build_resunet(spec: &TopologySpec) -> Result<NetworkGraph> {
    spec.validate()?;
    let mut b = Builder {
        g: NetworkGraph::new(spec.in_channels),
        spec,
    };
    let act = spec.activation;
    let mut x = NetworkGraph::INPUT;
    let mut cin = spec.in_channels;
    let mut skips = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        let c = spec.stage_channels(i);
        x = residual_unit(&mut b.g, &format!("enc{i}"), x, cin, c, act)?;
        skips.push(x);
        x = b.pool(&format!("enc{i}_pool"), x)?;
        cin = c;
    }
    let c = spec.stage_channels(spec.depth);
    x = residual_unit(&mut b.g, "bottleneck", x, cin, c, act)?;
    x = b.maybe_dropout(x)?;
    for i in (0..spec.depth).rev() {
        let c = spec.stage_channels(i);
        let up = b.up(&format!("dec{i}_up"), x, 2 * c, c)?;
        let cat = b.g.add(format!("dec{i}_concat"), Layer::CropConcat, &[skips[i], up])?;
        x = residual_unit(&mut b.g, &format!("dec{i}"), cat, 2 * c, c, act)?;
    }
    b.head(x, spec.base_channels)
}
