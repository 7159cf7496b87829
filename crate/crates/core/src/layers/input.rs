//! Color-invariant input stage: an appended weighted-average gray channel and
//! a dropout that, per forward call, either hides all color channels or none.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{missing_cache, Mode};
use crate::error::{dim_err, Error, Result};
use crate::{Rng, Tensor};

pub const EQUAL_GRAY_WEIGHTS: [f32; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

/// Configuration of the gray-channel input stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomDropoutConfig {
    /// Probability that a forward pass keeps only the gray channel.
    pub prob: f32,
    pub gray_weights: [f32; 3],
    /// Draw the decision per sample rather than once per batch.
    #[serde(default)]
    pub per_sample: bool,
}

impl Default for CustomDropoutConfig {
    fn default() -> Self {
        Self { prob: 0.5, gray_weights: EQUAL_GRAY_WEIGHTS, per_sample: false }
    }
}

impl CustomDropoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prob) {
            return Err(Error::Config(format!("dropout prob {} outside [0, 1]", self.prob)));
        }
        let sum: f32 = self.gray_weights.iter().sum();
        if self.gray_weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "gray weights {:?} must be nonnegative and sum to 1",
                self.gray_weights
            )));
        }
        Ok(())
    }
}

/// `[n, 3, h, w] → [n, 4, h, w]` with channel 3 = Σ_c w_c · x_c.
pub fn grayscale_concat(x: &Tensor, weights: [f32; 3]) -> Result<Tensor> {
    let s = x.dims4()?;
    if s.c != 3 {
        return dim_err("grayscale_concat", format!("expected 3 channels, got {:?}", x.shape()));
    }
    let plane = s.plane();
    let mut out = Vec::with_capacity(s.n * 4 * plane);
    for sample in x.data().chunks_exact(3 * plane) {
        out.extend_from_slice(sample);
        let (r, rest) = sample.split_at(plane);
        let (g, b) = rest.split_at(plane);
        out.extend(r.iter().zip(g).zip(b).map(|((&r, &g), &b)| weights[0] * r + weights[1] * g + weights[2] * b));
    }
    Tensor::new(vec![s.n, 4, s.h, s.w], out)
}

#[derive(Debug, Clone)]
pub struct GrayscaleConcat {
    pub weights: [f32; 3],
}

impl GrayscaleConcat {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        grayscale_concat(x, self.weights)
    }

    /// Folds the gray-channel gradient back onto the three color channels.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let s = grad_out.dims4()?;
        if s.c != 4 {
            return dim_err("grayscale_concat_backward", format!("expected 4 channels, got {:?}", grad_out.shape()));
        }
        let plane = s.plane();
        let mut dx = Vec::with_capacity(s.n * 3 * plane);
        for sample in grad_out.data().chunks_exact(4 * plane) {
            let gray = &sample[3 * plane..];
            for (c, &w) in self.weights.iter().enumerate() {
                dx.extend(sample[c * plane..(c + 1) * plane].iter().zip(gray).map(|(&g, &gg)| g + w * gg));
            }
        }
        Tensor::new(vec![s.n, 3, s.h, s.w], dx)
    }
}

/// Zeroes channels 0..3 of the chosen samples, keeping the gray channel.
fn apply_mask(x: &Tensor, hide: &[bool]) -> Result<Tensor> {
    let s = x.dims4()?;
    if s.c != 4 {
        return dim_err("custom_channel_dropout", format!("expected 4 channels, got {:?}", x.shape()));
    }
    let plane = s.plane();
    let mut out = x.clone();
    for (sample, &h) in out.data_mut().chunks_exact_mut(4 * plane).zip(hide) {
        if h {
            sample[..3 * plane].fill(0.0);
        }
    }
    Ok(out)
}

/// Channel-masking dropout over `[n, 4, h, w]` (RGB + gray).
#[derive(Debug, Clone)]
pub struct ChannelDropout {
    pub prob: f32,
    pub per_sample: bool,
    hidden: Option<Vec<bool>>,
}

impl ChannelDropout {
    pub fn new(prob: f32, per_sample: bool) -> Self {
        Self { prob, per_sample, hidden: None }
    }

    /// In training, one uniform draw decides for the whole batch (or one per
    /// sample with `per_sample`); a draw below `prob` hides the color
    /// channels. Evaluation is the identity.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let n = x.dims4()?.n;
        let hide = match mode {
            Mode::Eval => vec![false; n],
            Mode::Train if self.per_sample => (0..n).map(|_| rng.next_f32() < self.prob).collect(),
            Mode::Train => vec![rng.next_f32() < self.prob; n],
        };
        self.forward_with_mask(x, hide)
    }

    /// Forward with a caller-fixed decision per sample.
    pub fn forward_with_mask(&mut self, x: &Tensor, hide: Vec<bool>) -> Result<Tensor> {
        let y = apply_mask(x, &hide)?;
        self.hidden = Some(hide);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let hide = self.hidden.as_ref().ok_or_else(|| missing_cache("custom_channel_dropout_backward"))?;
        apply_mask(grad_out, hide)
    }
}

pub fn custom_channel_dropout(x: &Tensor, prob: f32, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
    ChannelDropout::new(prob, false).forward(x, mode, rng)
}
