//! XLM-style bidirectional transformer masked language model.
//!
//! Inputs are token + position + language embeddings, summed and layer
//! normalized, followed by a post-LN encoder stack and an output projection
//! onto the vocabulary (tied to the token embeddings by default).

mod batch;
mod forward;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Stream};
use crate::tensor::{Real, Tensor, TensorError};
use crate::tokenizer::NUM_SPECIALS;

pub use batch::{Batch, BatchRow, Sequence, L1_LANG, L2_LANG};
pub use forward::{
    forward_mlm, loss_and_grads, mlm_loss, sentence_logprobs, token_logprob, LossOutput, Mode, RowGrads,
};

pub const LN_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("cannot shrink vocabulary from {old} to {new}")]
    Shrink { old: usize, new: usize },
    #[error("parameter {name}: {detail}")]
    Param { name: String, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub ffn_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub max_positions: usize,
    pub n_languages: usize,
    pub tie_output: bool,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 14_000,
            emb_dim: 256,
            ffn_dim: 1024,
            n_layers: 12,
            n_heads: 8,
            dropout: 0.1,
            attention_dropout: 0.1,
            max_positions: 256,
            n_languages: 2,
            tie_output: true,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// Two layers of width 64: small enough to train on a laptop CPU.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            emb_dim: 64,
            ffn_dim: 256,
            n_layers: 2,
            n_heads: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if self.vocab_size < NUM_SPECIALS {
            problems.push(format!("vocab_size {} < {NUM_SPECIALS}", self.vocab_size));
        }
        if self.emb_dim == 0 || self.n_heads == 0 || self.emb_dim % self.n_heads != 0 {
            problems.push(format!("emb_dim {} not divisible by n_heads {}", self.emb_dim, self.n_heads));
        }
        if self.ffn_dim == 0 {
            problems.push("ffn_dim must be positive".into());
        }
        if self.max_positions < 3 {
            problems.push("max_positions must fit BOS, one token and EOS".into());
        }
        if self.n_languages == 0 {
            problems.push("n_languages must be positive".into());
        }
        for (name, p) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&p) {
                problems.push(format!("{name} {p} outside [0, 1)"));
            }
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            problems.push("init_std must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(problems.join("; ")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.emb_dim / self.n_heads
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (v, d, f) = (self.vocab_size, self.emb_dim, self.ffn_dim);
        let mut out = vec![
            ("tok_emb".to_string(), vec![v, d]),
            ("pos_emb".to_string(), vec![self.max_positions, d]),
            ("lang_emb".to_string(), vec![self.n_languages, d]),
            ("emb_ln.g".to_string(), vec![d]),
            ("emb_ln.b".to_string(), vec![d]),
        ];
        for l in 0..self.n_layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            for proj in ["q", "k", "v", "o"] {
                out.push((p(&format!("attn.{proj}.w")), vec![d, d]));
                out.push((p(&format!("attn.{proj}.b")), vec![d]));
            }
            out.push((p("ln1.g"), vec![d]));
            out.push((p("ln1.b"), vec![d]));
            out.push((p("ffn.w1"), vec![d, f]));
            out.push((p("ffn.b1"), vec![f]));
            out.push((p("ffn.w2"), vec![f, d]));
            out.push((p("ffn.b2"), vec![d]));
            out.push((p("ln2.g"), vec![d]));
            out.push((p("ln2.b"), vec![d]));
        }
        out.push(("out.b".to_string(), vec![v]));
        if !self.tie_output {
            out.push(("out.w".to_string(), vec![v, d]));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

// Fixed positions in `ModelConfig::layout`.
pub(crate) const TOK_EMB: usize = 0;
pub(crate) const POS_EMB: usize = 1;
pub(crate) const LANG_EMB: usize = 2;
pub(crate) const EMB_LN_G: usize = 3;
pub(crate) const EMB_LN_B: usize = 4;
pub(crate) const PER_LAYER: usize = 16;

pub(crate) fn layer_base(l: usize) -> usize {
    5 + l * PER_LAYER
}

fn init_kind(name: &str) -> Init {
    if name.ends_with(".g") {
        Init::Ones
    } else if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
        Init::Zeros
    } else {
        Init::Normal
    }
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

/// All learnable tensors of a model, in `ModelConfig::layout` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn out_weight_index(&self) -> usize {
        if self.config.tie_output {
            TOK_EMB
        } else {
            self.tensors.len() - 1
        }
    }

    pub fn out_bias_index(&self) -> usize {
        layer_base(self.config.n_layers)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Rebuilds parameters from named tensors, checking them against the layout.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != named.len() {
            return Err(ModelError::Config(format!(
                "expected {} tensors, found {}",
                layout.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for ((want, shape), (name, t)) in layout.into_iter().zip(named) {
            if want != name || t.shape() != shape.as_slice() {
                return Err(ModelError::Param {
                    name,
                    detail: format!("expected {want} with shape {shape:?}, got {:?}", t.shape()),
                });
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { config, names, tensors })
    }
}

fn normal_tensor<T: Real, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    Tensor::randn(shape, std, rng)
}

/// Deterministic initialization: normal(0, init_std) weights and embeddings,
/// zero biases, unit layer-norm gains. Each tensor draws from its own stream.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let layout = config.layout();
    let mut names = Vec::with_capacity(layout.len());
    let mut tensors = Vec::with_capacity(layout.len());
    for (i, (name, shape)) in layout.into_iter().enumerate() {
        let t = match init_kind(&name) {
            Init::Ones => Tensor::full(&shape, T::one()),
            Init::Zeros => Tensor::zeros(&shape),
            Init::Normal => normal_tensor(&shape, config.init_std, &mut rng::stream(seed, Stream::Init, &[i as u64])),
        };
        names.push(name);
        tensors.push(t);
    }
    Ok(ModelParams {
        config: config.clone(),
        names,
        tensors,
    })
}

/// Grows the vocabulary-sized tensors from `old` to `new` rows. Existing
/// rows are kept bitwise; new embedding rows are drawn like fresh weights
/// and new output biases start at zero.
pub fn extend_for_l2<T: Real>(
    params: &ModelParams<T>,
    old: usize,
    new: usize,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    if new < old {
        return Err(ModelError::Shrink { old, new });
    }
    if params.config.vocab_size != old {
        return Err(ModelError::Config(format!(
            "model vocabulary is {}, not {old}",
            params.config.vocab_size
        )));
    }
    let mut out = params.clone();
    if new == old {
        return Ok(out);
    }
    out.config.vocab_size = new;
    let d = params.config.emb_dim;
    let extra = new - old;
    let mut grow = |idx: usize, fresh: Tensor<T>| {
        let t = &out.tensors[idx];
        let mut data = t.data().to_vec();
        data.extend_from_slice(fresh.data());
        let mut shape = t.shape().to_vec();
        shape[0] = new;
        out.tensors[idx] = Tensor::from_vec(shape, data).expect("grown shape");
    };
    let std = params.config.init_std;
    let key = |idx: usize| rng::stream(seed, Stream::Init, &[idx as u64, old as u64, new as u64]);
    grow(TOK_EMB, normal_tensor(&[extra, d], std, &mut key(TOK_EMB)));
    let bias = params.out_bias_index();
    grow(bias, Tensor::zeros(&[extra]));
    if !params.config.tie_output {
        let w = params.out_weight_index();
        grow(w, normal_tensor(&[extra, d], std, &mut key(w)));
    }
    Ok(out)
}
