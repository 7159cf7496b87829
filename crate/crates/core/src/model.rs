//! The small VGG-style classifier:
//! input stage → (conv 3×3 → norm → ReLU → max-pool 2×2) ×3 → dense → ReLU →
//! dense → ReLU → decision dense (softmax applied by the loss).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::layers::{
    ChannelDropout, Conv2d, CustomDropoutConfig, Dense, GrayscaleConcat, MaxPool, Mode, Norm, NormKind, Param, Relu,
};
use crate::{Rng, Tensor};

/// Side length of the square RGB inputs.
pub const INPUT_SIDE: usize = 32;
/// Color channels in every dataset image.
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputStage {
    /// RGB straight into the first convolution.
    Plain3,
    /// RGB plus an appended gray channel, followed by channel-masking dropout.
    Gray4(CustomDropoutConfig),
}

impl InputStage {
    pub fn conv_channels(&self) -> usize {
        match self {
            InputStage::Plain3 => 3,
            InputStage::Gray4(_) => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv_widths: [usize; 3],
    pub dense_widths: [usize; 2],
    pub classes: usize,
    /// `None` disables normalization.
    pub norm: Option<NormKind>,
    pub input_stage: InputStage,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_widths: [32, 64, 128],
            dense_widths: [512, 256],
            classes: 10,
            norm: Some(NormKind::Batch),
            input_stage: InputStage::Plain3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_widths.iter().chain(&self.dense_widths).any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "layer widths must be positive: conv {:?}, dense {:?}",
                self.conv_widths, self.dense_widths
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if let InputStage::Gray4(cfg) = &self.input_stage {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Trainable parameter count implied by the layer shapes.
    pub fn parameter_count(&self) -> usize {
        let mut cin = self.input_stage.conv_channels();
        let mut total = 0;
        for &cout in &self.conv_widths {
            total += cout * cin * 9 + cout;
            if self.norm.is_some() {
                total += 2 * cout;
            }
            cin = cout;
        }
        let side = INPUT_SIDE >> self.conv_widths.len();
        let mut din = cin * side * side;
        for &dout in self.dense_widths.iter().chain(core::iter::once(&self.classes)) {
            total += din * dout + dout;
            din = dout;
        }
        total
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv2d,
    norm: Option<Norm>,
    relu: Relu,
    pool: MaxPool,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    gray: Option<GrayscaleConcat>,
    dropout: Option<ChannelDropout>,
    blocks: Vec<ConvBlock>,
    fc1: Dense,
    relu1: Relu,
    fc2: Dense,
    relu2: Relu,
    head: Dense,
    feature_shape: Vec<usize>,
}

impl Model {
    /// Builds the network with He-normal weights drawn from `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::for_stream(config.seed, 0);
        let (gray, dropout) = match config.input_stage {
            InputStage::Plain3 => (None, None),
            InputStage::Gray4(d) => {
                (Some(GrayscaleConcat { weights: d.gray_weights }), Some(ChannelDropout::new(d.prob, d.per_sample)))
            }
        };
        let mut cin = config.input_stage.conv_channels();
        let mut blocks = Vec::new();
        for &cout in &config.conv_widths {
            blocks.push(ConvBlock {
                conv: Conv2d::new(cin, cout, &mut rng),
                norm: config.norm.map(|k| Norm::new(k, cout)),
                relu: Relu::default(),
                pool: MaxPool::default(),
            });
            cin = cout;
        }
        blocks[0].conv.propagate_input_grad = false;
        let side = INPUT_SIDE >> config.conv_widths.len();
        let flat = cin * side * side;
        let [d1, d2] = config.dense_widths;
        Ok(Self {
            config: config.clone(),
            gray,
            dropout,
            blocks,
            fc1: Dense::new(flat, d1, &mut rng),
            relu1: Relu::default(),
            fc2: Dense::new(d1, d2, &mut rng),
            relu2: Relu::default(),
            head: Dense::new(d2, config.classes, &mut rng),
            feature_shape: vec![cin, side, side],
        })
    }

    /// Rebuilds a model from its configuration and a full state map.
    pub fn from_state(config: &ModelConfig, state: &BTreeMap<String, Tensor>) -> Result<Self> {
        let mut model = Self::new(config)?;
        model.load_state(state)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Trainable parameters actually held by the layers.
    pub fn parameter_count(&self) -> usize {
        let dense = [&self.fc1, &self.fc2, &self.head].iter().map(|d| d.weight.value.numel() + d.bias.value.numel()).sum::<usize>();
        let conv = self
            .blocks
            .iter()
            .map(|b| {
                let norm = b.norm.as_ref().map_or(0, |n| n.gamma.value.numel() + n.beta.value.numel());
                b.conv.weight.value.numel() + b.conv.bias.value.numel() + norm
            })
            .sum::<usize>();
        dense + conv
    }

    /// Also compute the gradient with respect to the network input on backward.
    pub fn set_input_grad(&mut self, on: bool) {
        self.blocks[0].conv.propagate_input_grad = on;
    }

    /// `[n, 3, 32, 32]` images to `[n, classes]` logits.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let s = x.dims4()?;
        if s.c != INPUT_CHANNELS || s.h != INPUT_SIDE || s.w != INPUT_SIDE {
            return dim_err(
                "model",
                format!("expected [n, {INPUT_CHANNELS}, {INPUT_SIDE}, {INPUT_SIDE}] input, got {:?}", x.shape()),
            );
        }
        let mut h = match (&self.gray, &mut self.dropout) {
            (Some(gray), Some(dropout)) => dropout.forward(&gray.forward(x)?, mode, rng)?,
            _ => x.clone(),
        };
        for block in &mut self.blocks {
            h = block.conv.forward(&h)?;
            if let Some(norm) = &mut block.norm {
                h = norm.forward(&h, mode)?;
            }
            h = block.relu.forward(&h);
            h = block.pool.forward(&h)?;
        }
        let flat: usize = self.feature_shape.iter().product();
        let h = h.reshape(&[s.n, flat])?;
        let h = self.relu1.forward(&self.fc1.forward(&h)?);
        let h = self.relu2.forward(&self.fc2.forward(&h)?);
        self.head.forward(&h)
    }

    /// Backpropagates `grad_logits`, accumulating into every parameter's
    /// gradient. Returns the input gradient when enabled via
    /// [`Model::set_input_grad`].
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Option<Tensor>> {
        let g = self.head.backward(grad_logits)?;
        let g = self.fc2.backward(&self.relu2.backward(&g)?)?;
        let g = self.fc1.backward(&self.relu1.backward(&g)?)?;
        let n = g.shape()[0];
        let mut shape = vec![n];
        shape.extend_from_slice(&self.feature_shape);
        let mut g = Some(g.reshape(&shape)?);
        for block in self.blocks.iter_mut().rev() {
            let mut gb = block.pool.backward(&g.take().expect("gradient flows through inner blocks"))?;
            gb = block.relu.backward(&gb)?;
            if let Some(norm) = &mut block.norm {
                gb = norm.backward(&gb)?;
            }
            g = block.conv.backward(&gb)?;
        }
        match (g, &self.gray, &mut self.dropout) {
            (Some(g), Some(gray), Some(dropout)) => Ok(Some(gray.backward(&dropout.backward(&g)?)?)),
            (g, _, _) => Ok(g),
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    /// Visits trainable parameters in a fixed order with their state names.
    pub fn visit_params<F: FnMut(&str, &mut Param)>(&mut self, f: &mut F) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let b = i + 1;
            f(&format!("block{b}.conv.weight"), &mut block.conv.weight);
            f(&format!("block{b}.conv.bias"), &mut block.conv.bias);
            if let Some(norm) = &mut block.norm {
                let kind = norm.kind.name();
                f(&format!("block{b}.{kind}_norm.gamma"), &mut norm.gamma);
                f(&format!("block{b}.{kind}_norm.beta"), &mut norm.beta);
            }
        }
        for (name, dense) in [("fc1", &mut self.fc1), ("fc2", &mut self.fc2), ("head", &mut self.head)] {
            f(&format!("{name}.weight"), &mut dense.weight);
            f(&format!("{name}.bias"), &mut dense.bias);
        }
    }

    fn visit_buffers<F: FnMut(String, &mut Tensor)>(&mut self, f: &mut F) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            if let Some(norm) = block.norm.as_mut().filter(|n| n.kind == NormKind::Batch) {
                f(format!("block{}.batch_norm.running_mean", i + 1), &mut norm.running_mean);
                f(format!("block{}.batch_norm.running_var", i + 1), &mut norm.running_var);
            }
        }
    }

    /// Parameters and running buffers keyed by name.
    pub fn state(&mut self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        self.visit_params(&mut |name, p| {
            map.insert(String::from(name), p.value.clone());
        });
        self.visit_buffers(&mut |name, t| {
            map.insert(name, t.clone());
        });
        map
    }

    /// Replaces every parameter and buffer; keys and shapes must match exactly.
    pub fn load_state(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut expected = 0usize;
        let mut problem: Option<String> = None;
        let mut load = |name: &str, slot: &mut Tensor| {
            expected += 1;
            match state.get(name) {
                Some(t) if t.shape() == slot.shape() => *slot = t.clone(),
                Some(t) => {
                    problem.get_or_insert(format!("{name}: shape {:?}, expected {:?}", t.shape(), slot.shape()));
                }
                None => {
                    problem.get_or_insert(format!("missing tensor {name}"));
                }
            }
        };
        self.visit_params(&mut |name, p| load(name, &mut p.value));
        self.visit_buffers(&mut |name, t| load(&name, t));
        if let Some(p) = problem {
            return Err(Error::Format(p));
        }
        if expected != state.len() {
            return Err(Error::Format(format!("state has {} tensors, model expects {expected}", state.len())));
        }
        Ok(())
    }
}
