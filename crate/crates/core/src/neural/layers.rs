//! Layers shared by both models: linear, layer norm, multi-head attention
//! with learned projections, feed-forward, and the encoder/decoder blocks.
//!
//! A layer struct owns parameter *names*; values live in the
//! [`ParamStore`]. Construction registers parameters (Kaiming-uniform
//! weights, zero biases, unit layer-norm gains) in a fixed order so a given
//! seed always produces the same initialization.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

use super::optim::ParamStore;
use super::scalar::Scalar;
use super::tape::{AttnSegment, Tape, Var};
use super::tensor::{kaiming_uniform, Tensor};

const LN_EPS: f64 = 1e-5;

/// Feed-forward activation. The document classifier defaults to sigmoid;
/// relu and gelu are selectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply<S: Scalar>(self, tape: &mut Tape<S>, x: Var) -> Var {
        match self {
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Relu => tape.relu(x),
            Activation::Gelu => tape.gelu(x),
        }
    }
}

/// Fully connected layer, Kaiming-initialized (gain sqrt(2)), zero bias.
#[derive(Debug, Clone)]
pub struct Linear {
    w: String,
    b: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn init<S: Scalar>(
        name: &str,
        d_in: usize,
        d_out: usize,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> Linear {
        Linear::init_with_gain(name, d_in, d_out, std::f64::consts::SQRT_2, store, rng)
    }

    /// Kaiming-uniform init with an explicit gain. Classifier heads use a
    /// small gain so initial logits sit near zero (near-uniform softmax)
    /// while gradients still reach every upstream parameter.
    pub fn init_with_gain<S: Scalar>(
        name: &str,
        d_in: usize,
        d_out: usize,
        gain: f64,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> Linear {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        store.insert(
            &w,
            kaiming_uniform(&[d_in, d_out], d_in, gain, rng).expect("positive fan_in"),
        );
        store.insert(&b, Tensor::zeros(&[1, d_out]));
        Linear {
            w,
            b,
            d_in,
            d_out,
        }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Var {
        let w = tape.param(store, &self.w);
        let b = tape.param(store, &self.b);
        let wx = tape.matmul(x, w);
        tape.add_bias(wx, b)
    }
}

/// Layer normalization with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: String,
    bias: String,
}

impl LayerNorm {
    pub fn init<S: Scalar>(name: &str, width: usize, store: &mut ParamStore<S>) -> LayerNorm {
        let gain = format!("{name}.gain");
        let bias = format!("{name}.bias");
        store.insert(&gain, Tensor::full(&[1, width], S::one()));
        store.insert(&bias, Tensor::zeros(&[1, width]));
        LayerNorm { gain, bias }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Var {
        let gain = tape.param(store, &self.gain);
        let bias = tape.param(store, &self.bias);
        tape.layer_norm(x, gain, bias, LN_EPS)
    }
}

/// Multi-head attention with learned Q/K/V/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn init<S: Scalar>(
        name: &str,
        d_model: usize,
        heads: usize,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> MultiHeadAttention {
        assert!(
            heads > 0 && d_model % heads == 0,
            "d_model {d_model} must divide by heads {heads}"
        );
        MultiHeadAttention {
            wq: Linear::init(&format!("{name}.wq"), d_model, d_model, store, rng),
            wk: Linear::init(&format!("{name}.wk"), d_model, d_model, store, rng),
            wv: Linear::init(&format!("{name}.wv"), d_model, d_model, store, rng),
            wo: Linear::init(&format!("{name}.wo"), d_model, d_model, store, rng),
            heads,
        }
    }

    /// Attention with separate query and key/value sources (cross-attention
    /// when they differ, self-attention when equal).
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        q_in: Var,
        kv_in: Var,
        segments: &[AttnSegment],
        kv_valid: Option<Vec<bool>>,
    ) -> Var {
        let q = self.wq.forward(tape, store, q_in);
        let k = self.wk.forward(tape, store, kv_in);
        let v = self.wv.forward(tape, store, kv_in);
        let attended = tape.multi_head_attention(q, k, v, self.heads, segments, kv_valid);
        self.wo.forward(tape, store, attended)
    }
}

/// Two-layer position-wise feed-forward network.
#[derive(Debug, Clone)]
pub struct FeedForward {
    lift: Linear,
    lower: Linear,
    pub activation: Activation,
}

impl FeedForward {
    pub fn init<S: Scalar>(
        name: &str,
        d_model: usize,
        d_ff: usize,
        activation: Activation,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> FeedForward {
        FeedForward {
            lift: Linear::init(&format!("{name}.lift"), d_model, d_ff, store, rng),
            lower: Linear::init(&format!("{name}.lower"), d_ff, d_model, store, rng),
            activation,
        }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Var {
        let lifted = self.lift.forward(tape, store, x);
        let activated = self.activation.apply(tape, lifted);
        self.lower.forward(tape, store, activated)
    }
}

/// Post-norm transformer encoder block:
/// `x = LN(x + Drop(SelfAttn(x))); x = LN(x + Drop(FFN(x)))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    attn: MultiHeadAttention,
    ffn: FeedForward,
    norm_attn: LayerNorm,
    norm_ffn: LayerNorm,
    pub dropout: f64,
}

impl EncoderBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn init<S: Scalar>(
        name: &str,
        d_model: usize,
        d_ff: usize,
        heads: usize,
        activation: Activation,
        dropout: f64,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> EncoderBlock {
        EncoderBlock {
            attn: MultiHeadAttention::init(&format!("{name}.attn"), d_model, heads, store, rng),
            ffn: FeedForward::init(
                &format!("{name}.ffn"),
                d_model,
                d_ff,
                activation,
                store,
                rng,
            ),
            norm_attn: LayerNorm::init(&format!("{name}.norm_attn"), d_model, store),
            norm_ffn: LayerNorm::init(&format!("{name}.norm_ffn"), d_model, store),
            dropout,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        x: Var,
        segments: &[AttnSegment],
        kv_valid: Option<Vec<bool>>,
    ) -> Var {
        let attended = self.attn.forward(tape, store, x, x, segments, kv_valid);
        let attended = tape.dropout(attended, self.dropout);
        let summed = tape.add(x, attended);
        let x = self.norm_attn.forward(tape, store, summed);

        let lifted = self.ffn.forward(tape, store, x);
        let lifted = tape.dropout(lifted, self.dropout);
        let summed = tape.add(x, lifted);
        self.norm_ffn.forward(tape, store, summed)
    }
}

/// Post-norm transformer decoder block with a cross-attention stage:
/// `s = LN(s + Drop(SelfAttn(s)))`,
/// `y = LN(s + Drop(CrossAttn(q_src -> s or memory)))`,
/// `s = LN(y + Drop(FFN(y)))`.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    self_attn: MultiHeadAttention,
    cross_attn: MultiHeadAttention,
    ffn: FeedForward,
    norm_self: LayerNorm,
    norm_cross: LayerNorm,
    norm_ffn: LayerNorm,
    pub dropout: f64,
}

impl DecoderBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn init<S: Scalar>(
        name: &str,
        d_model: usize,
        d_ff: usize,
        heads: usize,
        activation: Activation,
        dropout: f64,
        store: &mut ParamStore<S>,
        rng: &mut SeededRng,
    ) -> DecoderBlock {
        DecoderBlock {
            self_attn: MultiHeadAttention::init(&format!("{name}.self"), d_model, heads, store, rng),
            cross_attn: MultiHeadAttention::init(
                &format!("{name}.cross"),
                d_model,
                heads,
                store,
                rng,
            ),
            ffn: FeedForward::init(
                &format!("{name}.ffn"),
                d_model,
                d_ff,
                activation,
                store,
                rng,
            ),
            norm_self: LayerNorm::init(&format!("{name}.norm_self"), d_model, store),
            norm_cross: LayerNorm::init(&format!("{name}.norm_cross"), d_model, store),
            norm_ffn: LayerNorm::init(&format!("{name}.norm_ffn"), d_model, store),
            dropout,
        }
    }

    /// `stream` is the decoder stream: it is self-attended, carries every
    /// residual, and stays the same length throughout. The cross stage
    /// projects queries from `cross.q` and keys/values from `cross.kv`
    /// (either of which may be the stream itself).
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        stream: Var,
        self_segments: &[AttnSegment],
        cross: CrossWiring,
    ) -> Var {
        let attended = self
            .self_attn
            .forward(tape, store, stream, stream, self_segments, None);
        let attended = tape.dropout(attended, self.dropout);
        let summed = tape.add(stream, attended);
        let stream = self.norm_self.forward(tape, store, summed);

        let q_src = cross.q.resolve(stream);
        let kv_src = cross.kv.resolve(stream);
        let crossed = self.cross_attn.forward(
            tape,
            store,
            q_src,
            kv_src,
            &cross.segments,
            cross.kv_valid,
        );
        let crossed = tape.dropout(crossed, self.dropout);
        let summed = tape.add(stream, crossed);
        let y = self.norm_cross.forward(tape, store, summed);

        let lifted = self.ffn.forward(tape, store, y);
        let lifted = tape.dropout(lifted, self.dropout);
        let summed = tape.add(y, lifted);
        self.norm_ffn.forward(tape, store, summed)
    }
}

/// Where a decoder block's cross-attention queries or keys/values come from.
#[derive(Debug, Clone, Copy)]
pub enum CrossSource {
    /// The decoder stream after self-attention.
    Stream,
    /// An external tensor (encoder memory, sentence vectors).
    External(Var),
}

impl CrossSource {
    fn resolve(self, stream: Var) -> Var {
        match self {
            CrossSource::Stream => stream,
            CrossSource::External(var) => var,
        }
    }
}

/// Cross-attention wiring for one decoder block invocation.
#[derive(Debug, Clone)]
pub struct CrossWiring {
    pub q: CrossSource,
    pub kv: CrossSource,
    pub segments: Vec<AttnSegment>,
    pub kv_valid: Option<Vec<bool>>,
}

/// Sinusoidal position encodings for row positions `positions[i]`, width
/// `d_model`: even columns sin, odd columns cos.
pub fn sinusoidal_positions<S: Scalar>(positions: &[usize], d_model: usize) -> Tensor<S> {
    let mut out = Tensor::zeros(&[positions.len(), d_model]);
    for (r, &pos) in positions.iter().enumerate() {
        let row = out.row_mut(r);
        for j in 0..d_model {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d_model as f64);
            row[j] = S::from_f64(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn linear_applies_weights_and_bias() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded(4);
        let lin = Linear::init("l", 3, 2, &mut store, &mut rng);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 3], 1.0));
        let y = lin.forward(&mut tape, &store, x);
        assert_eq!(tape.value(y).shape(), &[2, 2]);
        // identical input rows produce identical output rows
        assert_eq!(tape.value(y).row(0), tape.value(y).row(1));
    }

    #[test]
    fn encoder_block_preserves_shape_and_separates_segments() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded(5);
        let block = EncoderBlock::init(
            "enc",
            8,
            16,
            2,
            Activation::Relu,
            0.0,
            &mut store,
            &mut rng,
        );
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_f64_slice(
            &[4, 8],
            &(0..32).map(|i| (i as f64).sin()).collect::<Vec<_>>(),
        ));
        let segs = vec![
            AttnSegment {
                q: 0..2,
                kv: 0..2,
                causal: false,
            },
            AttnSegment {
                q: 2..4,
                kv: 2..4,
                causal: false,
            },
        ];
        let y = block.forward(&mut tape, &store, x, &segs, None);
        assert_eq!(tape.value(y).shape(), &[4, 8]);
    }

    #[test]
    fn sinusoidal_positions_match_definition() {
        let pe: Tensor<f64> = sinusoidal_positions(&[0, 1, 7], 6);
        assert_eq!(pe.at(0, 0), 0.0); // sin(0)
        assert_eq!(pe.at(0, 1), 1.0); // cos(0)
        let angle = 1.0 / 10_000f64.powf(2.0 / 6.0);
        assert!((pe.at(1, 2) - angle.sin()).abs() < 1e-12);
        assert!((pe.at(1, 3) - angle.cos()).abs() < 1e-12);
        let angle7 = 7.0 / 10_000f64.powf(4.0 / 6.0);
        assert!((pe.at(2, 4) - angle7.sin()).abs() < 1e-12);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let build = |seed: u64| {
            let mut store = ParamStore::<f32>::new();
            let mut rng = seeded(seed);
            let _ = MultiHeadAttention::init("a", 8, 2, &mut store, &mut rng);
            store.snapshot()
        };
        let a = build(3);
        let b = build(3);
        for (name, t) in &a {
            assert_eq!(t.data(), b[name].data());
        }
    }
}
