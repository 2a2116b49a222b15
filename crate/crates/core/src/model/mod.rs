//! A small pre-norm causal transformer language model with a token-level
//! contrastive projection head.
//!
//! Forward and backward passes are written by hand so gradients can be
//! checked against finite differences. Anything that can produce final
//! hidden states and next-token logits can stand in for the toy model
//! through [`LanguageModelAdapter`].

mod checkpoint;
mod head;
pub mod ops;
mod transformer;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::ByteTokenizer;
use crate::{rng, Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use head::{HeadCache, ProjectionHead, DEGENERATE_NORM};
pub use transformer::ForwardCache;

/// Norm clamp used by the projection head under reduced precision.
pub const REDUCED_NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Full,
    /// Parameters are rounded to single precision after every update.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_length: usize,
    pub proj_hidden: usize,
    pub proj_out: usize,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// The toy configuration used for tests and desk-scale runs.
    pub fn desk() -> Self {
        Self {
            vocab_size: ByteTokenizer::VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_length: 512,
            proj_hidden: 64,
            proj_out: 32,
            precision: Precision::Full,
            seed: 0,
        }
    }

    /// GPT-2 small shape.
    pub fn gpt2() -> Self {
        Self {
            vocab_size: 50_257,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            max_length: 512,
            proj_hidden: 768,
            proj_out: 384,
            precision: Precision::Full,
            seed: 0,
        }
    }

    /// Phi-2 shape.
    pub fn phi2() -> Self {
        Self {
            vocab_size: 51_200,
            d_model: 2560,
            n_layers: 32,
            n_heads: 32,
            max_length: 340,
            proj_hidden: 2560,
            proj_out: 1280,
            precision: Precision::Reduced,
            seed: 0,
        }
    }

    /// Llama-2 7B shape.
    pub fn llama2_7b() -> Self {
        Self {
            vocab_size: 32_000,
            d_model: 4096,
            n_layers: 32,
            n_heads: 32,
            max_length: 340,
            proj_hidden: 4096,
            proj_out: 2048,
            precision: Precision::Reduced,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "gpt2" => Ok(Self::gpt2()),
            "phi2" => Ok(Self::phi2()),
            "llama2-7b" => Ok(Self::llama2_7b()),
            other => Err(Error::Config(format!("unknown model preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.max_length == 0 {
            return fail("vocab_size, d_model, n_heads and max_length must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!("d_model ({}) must be divisible by n_heads ({})", self.d_model, self.n_heads));
        }
        if self.proj_out < 2 {
            return fail(format!("proj_out must be at least 2, got {}", self.proj_out));
        }
        if self.proj_hidden == 0 {
            return fail("proj_hidden must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let f = self.ffn_dim();
        let layer = 4 * d + d * 3 * d + 3 * d + d * d + d + d * f + f + f * d + d;
        self.vocab_size * d
            + self.max_length * d
            + self.n_layers * layer
            + 2 * d
            + d * self.vocab_size
            + d * self.proj_hidden
            + self.proj_hidden
            + self.proj_hidden * self.proj_out
            + self.proj_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    /// Query, key and value projections side by side: `d × 3d`.
    pub w_qkv: Array2<f64>,
    pub b_qkv: Array1<f64>,
    pub w_attn_out: Array2<f64>,
    pub b_attn_out: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_fc: Array2<f64>,
    pub b_fc: Array1<f64>,
    pub w_fc_out: Array2<f64>,
    pub b_fc_out: Array1<f64>,
}

impl Layer {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            w_qkv: Array2::zeros((d, 3 * d)),
            b_qkv: Array1::zeros(3 * d),
            w_attn_out: Array2::zeros((d, d)),
            b_attn_out: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w_fc: Array2::zeros((d, f)),
            b_fc: Array1::zeros(f),
            w_fc_out: Array2::zeros((f, d)),
            b_fc_out: Array1::zeros(d),
        }
    }
}

/// Model parameters. The same type doubles as a gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<Layer>,
    pub lnf_gain: Array1<f64>,
    pub lnf_bias: Array1<f64>,
    /// `d × V` output projection.
    pub w_lm: Array2<f64>,
    pub head: ProjectionHead,
}

/// Final hidden states and next-token logits for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `L × d_model`.
    pub hidden_states: Array2<f64>,
    /// `L × vocab_size`.
    pub logits: Array2<f64>,
}

/// The minimal surface a language model needs for generation and scoring.
pub trait LanguageModelAdapter: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn max_length(&self) -> usize;
    fn forward(&self, tokens: &[u32]) -> Result<ForwardOutput>;
}

macro_rules! tensor_list {
    ($m:expr, $view:ident, $iter:ident) => {{
        let mut v = Vec::new();
        v.push(("tok_emb".to_owned(), $m.tok_emb.$view().into_dyn()));
        v.push(("pos_emb".to_owned(), $m.pos_emb.$view().into_dyn()));
        for (i, l) in $m.layers.$iter().enumerate() {
            v.push((format!("layers.{i}.ln1_gain"), l.ln1_gain.$view().into_dyn()));
            v.push((format!("layers.{i}.ln1_bias"), l.ln1_bias.$view().into_dyn()));
            v.push((format!("layers.{i}.w_qkv"), l.w_qkv.$view().into_dyn()));
            v.push((format!("layers.{i}.b_qkv"), l.b_qkv.$view().into_dyn()));
            v.push((format!("layers.{i}.w_attn_out"), l.w_attn_out.$view().into_dyn()));
            v.push((format!("layers.{i}.b_attn_out"), l.b_attn_out.$view().into_dyn()));
            v.push((format!("layers.{i}.ln2_gain"), l.ln2_gain.$view().into_dyn()));
            v.push((format!("layers.{i}.ln2_bias"), l.ln2_bias.$view().into_dyn()));
            v.push((format!("layers.{i}.w_fc"), l.w_fc.$view().into_dyn()));
            v.push((format!("layers.{i}.b_fc"), l.b_fc.$view().into_dyn()));
            v.push((format!("layers.{i}.w_fc_out"), l.w_fc_out.$view().into_dyn()));
            v.push((format!("layers.{i}.b_fc_out"), l.b_fc_out.$view().into_dyn()));
        }
        v.push(("lnf_gain".to_owned(), $m.lnf_gain.$view().into_dyn()));
        v.push(("lnf_bias".to_owned(), $m.lnf_bias.$view().into_dyn()));
        v.push(("w_lm".to_owned(), $m.w_lm.$view().into_dyn()));
        v.push(("head.w1".to_owned(), $m.head.w1.$view().into_dyn()));
        v.push(("head.b1".to_owned(), $m.head.b1.$view().into_dyn()));
        v.push(("head.w2".to_owned(), $m.head.w2.$view().into_dyn()));
        v.push(("head.b2".to_owned(), $m.head.b2.$view().into_dyn()));
        v
    }};
}

impl Model {
    /// All-zero parameters shaped by `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.ffn_dim();
        let mut head = ProjectionHead::zeros(d, config.proj_hidden, config.proj_out);
        if config.precision == Precision::Reduced {
            head.norm_eps = REDUCED_NORM_EPS;
        }
        Ok(Self {
            config: config.clone(),
            tok_emb: Array2::zeros((config.vocab_size, d)),
            pos_emb: Array2::zeros((config.max_length, d)),
            layers: (0..config.n_layers).map(|_| Layer::zeros(d, f)).collect(),
            lnf_gain: Array1::zeros(d),
            lnf_bias: Array1::zeros(d),
            w_lm: Array2::zeros((d, config.vocab_size)),
            head,
        })
    }

    /// Seeded initialisation: weights `N(0, 0.02²)` (residual outputs scaled
    /// by `1/√(2·n_layers)`), layer-norm gains one, all biases zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut draw = rng::seeded(rng::mix(config.seed, 0x1417));
        let base = Normal::new(0.0, 0.02).expect("valid std");
        let resid = Normal::new(0.0, 0.02 / (2.0 * config.n_layers.max(1) as f64).sqrt()).expect("valid std");
        let mut fill = |a: &mut Array2<f64>, n: &Normal<f64>| a.iter_mut().for_each(|w| *w = n.sample(&mut draw));
        fill(&mut m.tok_emb, &base);
        fill(&mut m.pos_emb, &base);
        for l in &mut m.layers {
            l.ln1_gain.fill(1.0);
            l.ln2_gain.fill(1.0);
            fill(&mut l.w_qkv, &base);
            fill(&mut l.w_attn_out, &resid);
            fill(&mut l.w_fc, &base);
            fill(&mut l.w_fc_out, &resid);
        }
        m.lnf_gain.fill(1.0);
        fill(&mut m.w_lm, &base);
        let norm_eps = m.head.norm_eps;
        m.head = ProjectionHead::init(config.d_model, config.proj_hidden, config.proj_out, &mut draw);
        m.head.norm_eps = norm_eps;
        m.apply_precision();
        Ok(m)
    }

    /// A zeroed accumulator with this model's shapes.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        tensor_list!(self, view, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        tensor_list!(self, view_mut, iter_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same config and bit-identical parameters; unlike `==`, tells `0.0`
    /// from `-0.0`.
    pub fn tensors_bit_equal(&self, other: &Model) -> bool {
        self.config == other.config
            && self.tensors().iter().zip(other.tensors()).all(|((na, a), (nb, b))| {
                na == &nb && a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn scaled_add(&mut self, scale: f64, other: &Model) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    /// Rounds every parameter to single precision under reduced precision.
    pub fn apply_precision(&mut self) {
        if self.config.precision == Precision::Reduced {
            for (_, mut t) in self.tensors_mut() {
                t.mapv_inplace(|v| v as f32 as f64);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

impl LanguageModelAdapter for Model {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_length(&self) -> usize {
        self.config.max_length
    }

    fn forward(&self, tokens: &[u32]) -> Result<ForwardOutput> {
        Model::forward(self, tokens)
    }
}
