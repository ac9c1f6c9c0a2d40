//! The HWGAT forward pass and its exact reverse-mode gradients.
//!
//! Activations are kept as 2D matrices with one row per node of the current
//! layer: row `frame * K' + node`. Each attention pass gathers the rows of one
//! (window, temporal block) pair, runs a [`attention::GraphAttentionBlock`]
//! on them and scatters the result back.

pub mod attention;
pub mod embed;
pub mod layers;
pub mod model;
pub mod params;

use crate::error::{Error, Result};
use crate::windowing::WindowMode;

pub use attention::{AttentionMask, BlockCache, GraphAttentionBlock};
pub use embed::{add_positional_encoding, fourier_embed, positional_encoding};
pub use model::{temporal_merge, temporal_split, ForwardOutput, Gammas, Model};
pub use params::{BlockParams, Params};

/// How the block adjacency enters the attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum EdgeBias {
    /// Non-adjacent pairs get exactly zero weight.
    Hard,
    /// Attention over the whole spatio-temporal block.
    Without,
    /// Trainable additive bias initialised to 0 on edges and
    /// [`LEARNABLE_OFF_EDGE_INIT`] elsewhere.
    Learnable,
    /// Logits multiplied element-wise by the 0/1 mask before the softmax.
    LiteralProduct,
}

/// Initial learnable bias on non-edges.
pub const LEARNABLE_OFF_EDGE_INIT: f64 = -1.0e4;

impl EdgeBias {
    pub fn name(self) -> &'static str {
        match self {
            EdgeBias::Hard => "with",
            EdgeBias::Without => "without",
            EdgeBias::Learnable => "learnable",
            EdgeBias::LiteralProduct => "literal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with" | "hard" => Ok(EdgeBias::Hard),
            "without" | "none" => Ok(EdgeBias::Without),
            "learnable" => Ok(EdgeBias::Learnable),
            "literal" => Ok(EdgeBias::LiteralProduct),
            _ => Err(Error::Config(format!("unknown edge bias variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Input frames `F`.
    pub frames: usize,
    /// Temporal block length `T`.
    pub block_len: usize,
    /// Part attention layers `N`.
    pub layers: usize,
    /// Graph attention blocks per layer `M`.
    pub blocks_per_layer: usize,
    /// Attention heads `H`.
    pub heads: usize,
    /// Embedding width `d'` (twice the number of Fourier frequencies).
    pub embed_dim: usize,
    pub fourier_sigma: f64,
    /// Feed-forward expansion ratio.
    pub ff_ratio: usize,
    pub windows: WindowMode,
    pub edge_bias: EdgeBias,
    pub shift: bool,
    /// Attention dropout during training.
    pub regularizer: bool,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 64,
            block_len: 2,
            layers: 2,
            blocks_per_layer: 2,
            heads: 4,
            embed_dim: 64,
            fourier_sigma: 1.0,
            ff_ratio: 4,
            windows: WindowMode::Four,
            edge_bias: EdgeBias::Hard,
            shift: true,
            regularizer: true,
            num_classes: 8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by the gradient checks and desk-scale runs.
    pub fn toy(num_classes: usize) -> Self {
        ModelConfig {
            frames: 8,
            block_len: 2,
            layers: 2,
            blocks_per_layer: 1,
            heads: 2,
            embed_dim: 8,
            num_classes,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.block_len == 0 || self.layers == 0 || self.blocks_per_layer == 0 {
            return fail("block_len, layers and blocks_per_layer must be positive".into());
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return fail(format!("embed_dim {} must be even and positive", self.embed_dim));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        let span = self.block_len.pow(self.layers as u32);
        if self.frames == 0 || self.frames % span != 0 {
            return fail(format!(
                "frames {} must be divisible by block_len^layers = {span}",
                self.frames
            ));
        }
        if self.ff_ratio == 0 {
            return fail("ff_ratio must be positive".into());
        }
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        if !(self.fourier_sigma > 0.0) {
            return fail("fourier_sigma must be positive".into());
        }
        Ok(())
    }

    /// Channel width inside layer `l` (0-based).
    pub fn width(&self, layer: usize) -> usize {
        self.embed_dim * self.block_len.pow(layer as u32)
    }

    /// Frame count inside layer `l` (0-based).
    pub fn frames_at(&self, layer: usize) -> usize {
        self.frames / self.block_len.pow(layer as u32)
    }

    /// Width of the pooled feature fed to the classifier.
    pub fn feature_dim(&self) -> usize {
        self.width(self.layers)
    }

    /// Whether attention block `m` of a layer runs on shifted frames.
    pub fn block_is_shifted(&self, m: usize) -> bool {
        self.shift && m % 2 == 1 && crate::windowing::shift_amount(self.block_len) > 0
    }

    /// True when both configurations have identical parameter shapes apart
    /// from the classifier.
    pub fn same_backbone(&self, other: &ModelConfig) -> bool {
        let mut a = self.clone();
        a.num_classes = other.num_classes;
        a.seed = other.seed;
        a.regularizer = other.regularizer;
        a == *other
    }
}
