//! Finite-difference gradient checking.
//!
//! Each check builds the same scalar function twice: once through the tape
//! for analytic gradients, and once per perturbed element for central
//! differences `(f(x+eps) - f(x-eps)) / 2eps` in 64-bit. The relative error
//! is `|a - n| / max(|a|, |n|, 1e-6)`.

use rand::Rng;

use crate::rng::{self, SeededRng};

use super::layers::{
    Activation, CrossSource, CrossWiring, DecoderBlock, EncoderBlock, FeedForward, LayerNorm,
    Linear, MultiHeadAttention,
};
use super::optim::ParamStore;
use super::tape::{AttnSegment, Tape, Var};
use super::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// Result of checking one layer across several random shapes.
#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub layer: String,
    pub shapes_checked: usize,
    pub elements_checked: usize,
    pub max_rel_err: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_tensor(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..numel).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
}

/// Check d(loss)/d(inputs) for a scalar-valued function of input tensors.
///
/// `f` must be a pure function of its inputs: it is re-evaluated once per
/// perturbed element. Returns the maximum relative error.
pub fn grad_check(
    inputs: &[Tensor<f64>],
    eps: f64,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> (f64, usize) {
    grad_check_on(inputs, eps, Tape::new, f)
}

/// As [`grad_check`], with a custom tape factory (training tapes with a
/// fixed dropout seed rebuild identical masks at x+eps and x-eps).
pub fn grad_check_on(
    inputs: &[Tensor<f64>],
    eps: f64,
    make_tape: impl Fn() -> Tape<f64>,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> (f64, usize) {
    // analytic pass
    let mut tape = make_tape();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss);
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v).clone()).collect();

    let eval = |perturbed: &[Tensor<f64>]| -> f64 {
        let mut tape = make_tape();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item()
    };

    let mut max_err = 0.0f64;
    let mut checked = 0usize;
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[i] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let err = rel_err(analytic[which].data()[i], numeric);
            max_err = max_err.max(err);
            checked += 1;
        }
    }
    (max_err, checked)
}

fn check_shapes(
    layer: &str,
    shapes: Vec<Vec<Vec<usize>>>,
    rng: &mut SeededRng,
    training_dropout_seed: Option<u64>,
    f: impl Fn(&mut Tape<f64>, &[Var], &[Vec<usize>], &mut SeededRng) -> Var,
) -> GradCheckOutcome {
    let mut max_rel_err = 0.0f64;
    let mut elements = 0usize;
    let count = shapes.len();
    for shape_set in shapes {
        let inputs: Vec<Tensor<f64>> = shape_set.iter().map(|s| random_tensor(s, rng)).collect();
        // readout weights and per-case choices are seeded once per shape
        // set, then replayed identically on every re-evaluation
        let weight_rng = rng::seeded(rng.random());
        let case_rng = rng::seeded(rng.random());
        let make_tape = || match training_dropout_seed {
            Some(seed) => Tape::training(seed),
            None => Tape::new(),
        };
        let (err, n) = grad_check_on(&inputs, DEFAULT_EPSILON, make_tape, |tape, vars| {
            let mut local_rng = weight_rng.clone();
            let out = f(tape, vars, &shape_set, &mut case_rng.clone());
            let out_shape = tape.value(out).shape().to_vec();
            let weights = Tensor::from_vec(
                &out_shape,
                (0..out_shape.iter().product::<usize>())
                    .map(|_| local_rng.random_range(-1.0..1.0))
                    .collect(),
            );
            tape.weighted_sum(out, weights)
        });
        max_rel_err = max_rel_err.max(err);
        elements += n;
    }
    GradCheckOutcome {
        layer: layer.to_string(),
        shapes_checked: count,
        elements_checked: elements,
        max_rel_err,
    }
}

fn shape_grid(rng: &mut SeededRng, make: impl Fn(&mut SeededRng) -> Vec<Vec<usize>>) -> Vec<Vec<Vec<usize>>> {
    (0..5).map(|_| make(rng)).collect()
}

/// Run the finite-difference suite over every layer. Checks inputs AND
/// parameters: layers are rebuilt inside the closure with the same seed, so
/// parameter tensors enter as leaves too.
pub fn check_all_layers(seed: u64) -> Vec<GradCheckOutcome> {
    let rng = &mut rng::seeded(seed);
    let mut outcomes = Vec::new();

    // linear: inputs (m x k), weights (k x n), bias (1 x n)
    outcomes.push(check_shapes(
        "linear",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let k = r.random_range(1..6usize);
            let n = r.random_range(1..5usize);
            vec![vec![m, k], vec![k, n], vec![1, n]]
        }),
        rng,
        None,
        |tape, vars, _, _| {
            let wx = tape.matmul(vars[0], vars[1]);
            tape.add_bias(wx, vars[2])
        },
    ));

    // embedding lookup (select_rows): table plus fixed indices
    outcomes.push(check_shapes(
        "embedding",
        shape_grid(rng, |r| {
            let rows = r.random_range(3..8usize);
            let width = r.random_range(2..6usize);
            vec![vec![rows, width]]
        }),
        rng,
        None,
        |tape, vars, shapes, r| {
            let rows = shapes[0][0];
            let picks: Vec<usize> = (0..4).map(|_| r.random_range(0..rows)).collect();
            tape.select_rows(vars[0], picks)
        },
    ));

    // layer_norm with learned gain/bias
    outcomes.push(check_shapes(
        "layer_norm",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let n = r.random_range(2..7usize);
            vec![vec![m, n], vec![1, n], vec![1, n]]
        }),
        rng,
        None,
        |tape, vars, _, _| tape.layer_norm(vars[0], vars[1], vars[2], 1e-5),
    ));

    // softmax rows
    outcomes.push(check_shapes(
        "softmax",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let n = r.random_range(2..7usize);
            vec![vec![m, n]]
        }),
        rng,
        None,
        |tape, vars, _, _| tape.softmax_rows(vars[0]),
    ));

    // dropout in training mode: the mask is (seed, op)-deterministic, so
    // the same mask applies at x+eps and x-eps
    outcomes.push(check_shapes(
        "dropout",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let n = r.random_range(2..7usize);
            vec![vec![m, n]]
        }),
        rng,
        Some(1234),
        |tape, vars, _, _| tape.dropout(vars[0], 0.3),
    ));

    // multi-head attention: full, causal, segmented, and key-masked
    outcomes.push(check_shapes(
        "multi_head_attention",
        shape_grid(rng, |r| {
            let heads = [1usize, 2][r.random_range(0..2usize)];
            let dh = r.random_range(1..4usize);
            let d = heads * dh * 2; // even split with room per head
            let lq = r.random_range(2..5usize);
            let lk = r.random_range(2..5usize);
            vec![vec![lq, d], vec![lk, d], vec![lk, d]]
        }),
        rng,
        None,
        |tape, vars, shapes, r| {
            let (lq, d) = (shapes[0][0], shapes[0][1]);
            let lk = shapes[1][0];
            let heads = if d % 4 == 0 { 2 } else { 1 };
            let variant = r.random_range(0..3usize);
            match variant {
                0 => tape.multi_head_attention(
                    vars[0],
                    vars[1],
                    vars[2],
                    heads,
                    &AttnSegment::full(lq, lk),
                    None,
                ),
                1 => {
                    // self-attention causal requires square
                    let square = AttnSegment {
                        q: 0..lq.min(lk),
                        kv: 0..lq.min(lk),
                        causal: true,
                    };
                    tape.multi_head_attention(vars[0], vars[1], vars[2], heads, &[square], None)
                }
                _ => {
                    let mut valid = vec![true; lk];
                    if lk > 1 {
                        valid[lk - 1] = false;
                    }
                    tape.multi_head_attention(
                        vars[0],
                        vars[1],
                        vars[2],
                        heads,
                        &AttnSegment::full(lq, lk),
                        Some(valid),
                    )
                }
            }
        },
    ));

    // feed-forward with each activation
    for activation in [Activation::Sigmoid, Activation::Relu, Activation::Gelu] {
        outcomes.push(check_shapes(
            &format!("feed_forward_{activation:?}").to_lowercase(),
            shape_grid(rng, |r| {
                let m = r.random_range(1..4usize);
                let d = r.random_range(2..5usize);
                let ff = r.random_range(2..7usize);
                vec![vec![m, d], vec![d, ff], vec![1, ff], vec![ff, d], vec![1, d]]
            }),
            rng,
            None,
            move |tape, vars, _, _| {
                let lifted = tape.matmul(vars[0], vars[1]);
                let lifted = tape.add_bias(lifted, vars[2]);
                let activated = activation.apply(tape, lifted);
                let lowered = tape.matmul(activated, vars[3]);
                tape.add_bias(lowered, vars[4])
            },
        ));
    }

    // tied readout: A B^T
    outcomes.push(check_shapes(
        "tied_readout",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let k = r.random_range(2..6usize);
            let v = r.random_range(2..7usize);
            vec![vec![m, k], vec![v, k], vec![1, v]]
        }),
        rng,
        None,
        |tape, vars, _, _| {
            let scores = tape.matmul_nt(vars[0], vars[1]);
            tape.add_bias(scores, vars[2])
        },
    ));

    // cross-entropy over rows
    outcomes.push(check_shapes(
        "cross_entropy",
        shape_grid(rng, |r| {
            let m = r.random_range(1..5usize);
            let c = r.random_range(2..6usize);
            vec![vec![m, c]]
        }),
        rng,
        None,
        |tape, vars, shapes, r| {
            let (m, c) = (shapes[0][0], shapes[0][1]);
            let targets: Vec<usize> = (0..m).map(|_| r.random_range(0..c)).collect();
            tape.cross_entropy_rows(vars[0], &targets, None)
        },
    ));

    // mean pooling with and without a row mask
    outcomes.push(check_shapes(
        "mean_pool",
        shape_grid(rng, |r| {
            let m = r.random_range(2..6usize);
            let n = r.random_range(2..6usize);
            vec![vec![m, n]]
        }),
        rng,
        None,
        |tape, vars, shapes, r| {
            let m = shapes[0][0];
            if r.random_range(0..2usize) == 0 {
                tape.mean_pool_rows(vars[0], None)
            } else {
                let mut mask = vec![true; m];
                mask[r.random_range(0..m)] = false;
                tape.mean_pool_rows(vars[0], Some(mask))
            }
        },
    ));

    outcomes
}

/// Composite blocks sanity: one full encoder block and decoder block pass a
/// gradient check end to end (parameters included via store rebuild).
pub fn check_blocks(seed: u64) -> Vec<GradCheckOutcome> {
    let rng = &mut rng::seeded(seed);
    let mut outcomes = Vec::new();

    // encoder block: check input gradient only (parameters are fixed
    // tensors rebuilt identically inside the closure)
    let d = 6;
    let build_store = |s: u64| {
        let mut store = ParamStore::<f64>::new();
        let mut r = rng::seeded(s);
        let block = EncoderBlock::init("enc", d, 8, 2, Activation::Gelu, 0.0, &mut store, &mut r);
        (store, block)
    };
    let inputs = vec![random_tensor(&[4, d], rng)];
    let (err, n) = grad_check(&inputs, DEFAULT_EPSILON, |tape, vars| {
        let (store, block) = build_store(99);
        let segments = vec![
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
        let out = block.forward(tape, &store, vars[0], &segments, None);
        let weights = Tensor::full(&[4, d], 0.37);
        tape.weighted_sum(out, weights)
    });
    outcomes.push(GradCheckOutcome {
        layer: "encoder_block".to_string(),
        shapes_checked: 1,
        elements_checked: n,
        max_rel_err: err,
    });

    // decoder block with external cross queries
    let build_decoder = |s: u64| {
        let mut store = ParamStore::<f64>::new();
        let mut r = rng::seeded(s);
        let block = DecoderBlock::init("dec", d, 8, 2, Activation::Relu, 0.0, &mut store, &mut r);
        (store, block)
    };
    let inputs = vec![random_tensor(&[3, d], rng), random_tensor(&[3, d], rng)];
    let (err, n) = grad_check(&inputs, DEFAULT_EPSILON, |tape, vars| {
        let (store, block) = build_decoder(7);
        let out = block.forward(
            tape,
            &store,
            vars[0],
            &AttnSegment::full(3, 3),
            CrossWiring {
                q: CrossSource::External(vars[1]),
                kv: CrossSource::Stream,
                segments: AttnSegment::full(3, 3),
                kv_valid: None,
            },
        );
        let weights = Tensor::full(&[3, d], 0.21);
        tape.weighted_sum(out, weights)
    });
    outcomes.push(GradCheckOutcome {
        layer: "decoder_block".to_string(),
        shapes_checked: 1,
        elements_checked: n,
        max_rel_err: err,
    });

    // standalone layer structs wired through a store: parameters get
    // gradients too (flow check, not finite differences)
    let mut store = ParamStore::<f64>::new();
    let mut r = rng::seeded(31);
    let lin = Linear::init("flow", 4, 3, &mut store, &mut r);
    let norm = LayerNorm::init("flow_ln", 3, &mut store);
    let mha = MultiHeadAttention::init("flow_mha", 4, 2, &mut store, &mut r);
    let ffn = FeedForward::init("flow_ffn", 3, 5, Activation::Gelu, &mut store, &mut r);
    let mut tape = Tape::new();
    let x = tape.leaf(random_tensor(&[3, 4], &mut r));
    let attended = mha.forward(&mut tape, &store, x, x, &AttnSegment::full(3, 3), None);
    let projected = lin.forward(&mut tape, &store, attended);
    let normed = norm.forward(&mut tape, &store, projected);
    let out = ffn.forward(&mut tape, &store, normed);
    let loss = tape.weighted_sum(out, Tensor::full(&[3, 3], 1.0));
    tape.backward(loss);
    tape.accumulate_param_grads(&mut store);
    let all_nonzero = store
        .names()
        .all(|name| store.grad(name).map(|g| g.frobenius_norm() > 0.0).unwrap_or(false));
    outcomes.push(GradCheckOutcome {
        layer: "param_grad_flow".to_string(),
        shapes_checked: 1,
        elements_checked: store.len(),
        max_rel_err: if all_nonzero { 0.0 } else { f64::INFINITY },
    });

    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_at_tolerance() {
        for outcome in check_all_layers(2024) {
            assert!(
                outcome.passed(DEFAULT_TOLERANCE),
                "{} failed: max rel err {}",
                outcome.layer,
                outcome.max_rel_err
            );
            assert!(outcome.shapes_checked >= 5);
        }
    }

    #[test]
    fn blocks_pass_end_to_end() {
        for outcome in check_blocks(11) {
            assert!(
                outcome.passed(DEFAULT_TOLERANCE),
                "{} failed: max rel err {}",
                outcome.layer,
                outcome.max_rel_err
            );
        }
    }
}
