//! The recorded-tape reverse-mode engine.
//!
//! Forward ops execute eagerly, push their output value onto the tape, and
//! register a closure holding the hand-derived adjoint. `backward` seeds
//! d(loss)/d(loss) = 1 and replays the closures in reverse; gradients
//! accumulate per node and flow back to bound parameters via
//! [`Tape::accumulate_param_grads`].

use std::ops::Range;

use crate::rng;

use super::optim::ParamStore;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<S> = Box<dyn Fn(&[Tensor<S>], &mut [Tensor<S>]) + Send>;

/// One attention segment: query rows attend to key/value rows, optionally
/// causally (in-segment relative positions).
#[derive(Debug, Clone)]
pub struct AttnSegment {
    pub q: Range<usize>,
    pub kv: Range<usize>,
    pub causal: bool,
}

impl AttnSegment {
    pub fn full(q_rows: usize, kv_rows: usize) -> Vec<AttnSegment> {
        vec![AttnSegment {
            q: 0..q_rows,
            kv: 0..kv_rows,
            causal: false,
        }]
    }

    pub fn causal(rows: usize) -> Vec<AttnSegment> {
        vec![AttnSegment {
            q: 0..rows,
            kv: 0..rows,
            causal: true,
        }]
    }
}

/// Recording tape. `training` gates dropout; the dropout mask at each op
/// position is a pure function of (dropout_seed, op position), so rebuilding
/// an identical tape reproduces identical masks.
pub struct Tape<S: Scalar> {
    values: Vec<Tensor<S>>,
    backward_ops: Vec<BackFn<S>>,
    bindings: Vec<(String, Var)>,
    grads: Option<Vec<Tensor<S>>>,
    training: bool,
    dropout_seed: u64,
    dropout_counter: u64,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Tape<S> {
        Tape {
            values: Vec::new(),
            backward_ops: Vec::new(),
            bindings: Vec::new(),
            grads: None,
            training: false,
            dropout_seed: 0,
            dropout_counter: 0,
        }
    }

    pub fn training(dropout_seed: u64) -> Tape<S> {
        Tape {
            training: true,
            dropout_seed,
            ..Tape::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    fn push(&mut self, value: Tensor<S>) -> Var {
        self.values.push(value);
        Var(self.values.len() - 1)
    }

    fn record(&mut self, back: BackFn<S>) {
        self.backward_ops.push(back);
    }

    /// Value of a node.
    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.values[var.0]
    }

    /// Gradient of a node (after `backward`).
    pub fn grad(&self, var: Var) -> &Tensor<S> {
        &self.grads.as_ref().expect("backward() not run")[var.0]
    }

    /// Insert a constant (gradient is tracked but unused).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value)
    }

    /// Insert a differentiable leaf (inputs under gradient check).
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value)
    }

    /// Insert a parameter by name; its gradient flows back to the store in
    /// `accumulate_param_grads`. Repeated binds of the same name on one
    /// tape return the same node, so shared parameters (tied embeddings)
    /// accumulate all of their uses' gradients.
    pub fn param(&mut self, store: &ParamStore<S>, name: &str) -> Var {
        if let Some((_, var)) = self.bindings.iter().find(|(n, _)| n == name) {
            return *var;
        }
        let value = store
            .value(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .clone();
        let var = self.push(value);
        self.bindings.push((name.to_string(), var));
        var
    }

    /// Run the backward pass from a scalar loss.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.values[loss.0].numel(),
            1,
            "backward target must be scalar, got shape {:?}",
            self.values[loss.0].shape()
        );
        let mut grads: Vec<Tensor<S>> = self
            .values
            .iter()
            .map(|v| Tensor::zeros(v.shape()))
            .collect();
        grads[loss.0].data_mut()[0] = S::one();
        for op in self.backward_ops.iter().rev() {
            op(&self.values, &mut grads);
        }
        self.grads = Some(grads);
    }

    /// Add every bound parameter's gradient into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<S>) {
        let grads = self.grads.as_ref().expect("backward() not run");
        for (name, var) in &self.bindings {
            store.grad_mut(name).add_assign(&grads[var.0]);
        }
    }

    /// True when gradient signal reached the named binding.
    pub fn binding_grad_norm(&self, name: &str) -> f64 {
        let grads = self.grads.as_ref().expect("backward() not run");
        self.bindings
            .iter()
            .filter(|(n, _)| n == name)
            .map(|(_, var)| grads[var.0].frobenius_norm())
            .sum()
    }

    // -- elementwise and structural ops --------------------------------

    /// Same-shape addition.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add shape mismatch: {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let mut out = va.clone();
        out.add_assign(vb);
        let out = self.push(out);
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].clone();
            grads[a.0].add_assign(&g);
            grads[b.0].add_assign(&g);
        }));
        out
    }

    /// Add a row vector (1 x n or n) to every row of a (m x n).
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (va, vb) = (&self.values[a.0], &self.values[bias.0]);
        assert_eq!(
            va.cols(),
            vb.numel(),
            "add_bias: {:?} rows cannot take bias {:?}",
            va.shape(),
            vb.shape()
        );
        let n = va.cols();
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *o = *o + b;
            }
        }
        let out = self.push(out);
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].clone();
            grads[a.0].add_assign(&g);
            let gb = grads[bias.0].data_mut();
            for r in 0..g.rows() {
                for (gb_j, &g_val) in gb.iter_mut().zip(g.row(r)).take(n) {
                    *gb_j = *gb_j + g_val;
                }
            }
        }));
        out
    }

    /// Multiply by a compile-time scalar.
    pub fn mul_scalar(&mut self, a: Var, factor: f64) -> Var {
        let f = S::from_f64(factor);
        let out = self.push(self.values[a.0].map(|v| v * f));
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].map(|v| v * f);
            grads[a.0].add_assign(&g);
        }));
        out
    }

    /// C = A B.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.push(self.values[a.0].matmul(&self.values[b.0]));
        self.record(Box::new(move |values, grads| {
            let g = &grads[out.0];
            let da = g.matmul_nt(&values[b.0]); // dA = G B^T
            let db = values[a.0].matmul_tn(g); // dB = A^T G
            grads[a.0].add_assign(&da);
            grads[b.0].add_assign(&db);
        }));
        out
    }

    /// C = A B^T (tied-projection readout: rows of B score rows of A).
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.push(self.values[a.0].matmul_nt(&self.values[b.0]));
        self.record(Box::new(move |values, grads| {
            let g = &grads[out.0];
            let da = g.matmul(&values[b.0]); // dA = G B
            let db = g.matmul_tn(&values[a.0]); // dB = G^T A
            grads[a.0].add_assign(&da);
            grads[b.0].add_assign(&db);
        }));
        out
    }

    /// Gather rows by index (used for both embedding lookup and CLS
    /// extraction). Backward scatter-adds.
    pub fn select_rows(&mut self, src: Var, indices: Vec<usize>) -> Var {
        let table = &self.values[src.0];
        let n = table.cols();
        let mut out = Tensor::zeros(&[indices.len(), n]);
        for (r, &idx) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(table.row(idx));
        }
        let out = self.push(out);
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].clone();
            let gs = &mut grads[src.0];
            for (r, &idx) in indices.iter().enumerate() {
                for (dst, &src_val) in gs.row_mut(idx).iter_mut().zip(g.row(r)) {
                    *dst = *dst + src_val;
                }
            }
        }));
        out
    }

    // -- nonlinearities --------------------------------------------------

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.push(self.values[a.0].map(|v| if v > S::zero() { v } else { S::zero() }));
        self.record(Box::new(move |values, grads| {
            let g = grads[out.0].clone();
            let x = &values[a.0];
            let ga = &mut grads[a.0];
            for ((dst, &g_val), &x_val) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                if x_val > S::zero() {
                    *dst = *dst + g_val;
                }
            }
        }));
        out
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.push(self.values[a.0].map(|v| S::one() / (S::one() + (-v).exp())));
        self.record(Box::new(move |values, grads| {
            let g = grads[out.0].clone();
            let y = &values[out.0];
            let ga = &mut grads[a.0];
            for ((dst, &g_val), &y_val) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                *dst = *dst + g_val * y_val * (S::one() - y_val);
            }
        }));
        out
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let c = S::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
        let b = S::from_f64(0.044715);
        let half = S::from_f64(0.5);
        let fwd = move |x: S| {
            let u = c * (x + b * x * x * x);
            half * x * (S::one() + u.tanh())
        };
        let out = self.push(self.values[a.0].map(fwd));
        self.record(Box::new(move |values, grads| {
            let g = grads[out.0].clone();
            let x = &values[a.0];
            let ga = &mut grads[a.0];
            for ((dst, &g_val), &x_val) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                let u = c * (x_val + b * x_val * x_val * x_val);
                let t = u.tanh();
                let du = c * (S::one() + S::from_f64(3.0) * b * x_val * x_val);
                let d = half * (S::one() + t) + half * x_val * (S::one() - t * t) * du;
                *dst = *dst + g_val * d;
            }
        }));
        out
    }

    /// Row-wise softmax with the max-subtraction trick. Rows sum to one.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let mut out = x.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let out = self.push(out);
        self.record(Box::new(move |values, grads| {
            let g = grads[out.0].clone();
            let y = &values[out.0];
            let ga = &mut grads[a.0];
            for r in 0..y.rows() {
                let y_row = y.row(r);
                let g_row = g.row(r);
                let dot: S = y_row.iter().zip(g_row).map(|(&yv, &gv)| yv * gv).sum();
                for ((dst, &yv), &gv) in ga.row_mut(r).iter_mut().zip(y_row).zip(g_row) {
                    *dst = *dst + yv * (gv - dot);
                }
            }
        }));
        out
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let x = &self.values[a.0];
        let n = x.cols();
        assert_eq!(
            self.values[gain.0].numel(),
            n,
            "layer_norm gain shape {:?} vs width {n}",
            self.values[gain.0].shape()
        );
        let epsilon = S::from_f64(eps);
        let inv_n = S::one() / S::from_f64(n as f64);

        let mut normalized = Tensor::zeros(x.shape());
        let mut inv_std = vec![S::zero(); x.rows()];
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean: S = row.iter().copied().sum::<S>() * inv_n;
            let var: S = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<S>()
                * inv_n;
            let istd = S::one() / (var + epsilon).sqrt();
            inv_std[r] = istd;
            for (dst, &v) in normalized.row_mut(r).iter_mut().zip(row) {
                *dst = (v - mean) * istd;
            }
        }
        let mut out = Tensor::zeros(x.shape());
        {
            let g = self.values[gain.0].data();
            let b = self.values[bias.0].data();
            for r in 0..x.rows() {
                for (j, (dst, &xh)) in out.row_mut(r).iter_mut().zip(normalized.row(r)).enumerate()
                {
                    *dst = xh * g[j] + b[j];
                }
            }
        }
        let out = self.push(out);
        self.record(Box::new(move |values, grads| {
            let g_out = grads[out.0].clone();
            let gamma = values[gain.0].data().to_vec();
            let rows = g_out.rows();

            // parameter gradients
            {
                let gg = grads[gain.0].data_mut();
                for r in 0..rows {
                    for (j, (&g_val, &xh)) in g_out.row(r).iter().zip(normalized.row(r)).enumerate()
                    {
                        gg[j] = gg[j] + g_val * xh;
                    }
                }
            }
            {
                let gb = grads[bias.0].data_mut();
                for r in 0..rows {
                    for (j, &g_val) in g_out.row(r).iter().enumerate() {
                        gb[j] = gb[j] + g_val;
                    }
                }
            }
            // input gradient: dx = istd * (dxh - mean(dxh) - xh * mean(dxh . xh))
            let ga = &mut grads[a.0];
            for r in 0..rows {
                let xh = normalized.row(r);
                let g_row = g_out.row(r);
                let dxh: Vec<S> = g_row
                    .iter()
                    .zip(&gamma)
                    .map(|(&gv, &ga)| gv * ga)
                    .collect();
                let mean_dxh: S = dxh.iter().copied().sum::<S>() * inv_n;
                let mean_dxh_xh: S =
                    dxh.iter().zip(xh).map(|(&d, &h)| d * h).sum::<S>() * inv_n;
                let istd = inv_std[r];
                for (j, dst) in ga.row_mut(r).iter_mut().enumerate() {
                    *dst = *dst + istd * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                }
            }
        }));
        out
    }

    /// Inverted dropout; identity when the tape is not in training mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return a;
        }
        assert!(rate < 1.0, "dropout rate must be < 1, got {rate}");
        let op_index = self.dropout_counter;
        self.dropout_counter += 1;
        let seed = rng::derive_seed(self.dropout_seed, op_index);
        let keep_scale = S::from_f64(1.0 / (1.0 - rate));
        let x = &self.values[a.0];
        let mask: Vec<bool> = (0..x.numel())
            .map(|i| rng::counter_uniform(seed, i as u64) >= rate)
            .collect();
        let mut out = x.clone();
        for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
            *v = if keep { *v * keep_scale } else { S::zero() };
        }
        let out = self.push(out);
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].clone();
            let ga = &mut grads[a.0];
            for ((dst, &g_val), &keep) in ga.data_mut().iter_mut().zip(g.data()).zip(&mask) {
                if keep {
                    *dst = *dst + g_val * keep_scale;
                }
            }
        }));
        out
    }

    /// Mean over rows (optionally restricted to unmasked rows) -> (1 x n).
    pub fn mean_pool_rows(&mut self, a: Var, row_mask: Option<Vec<bool>>) -> Var {
        let x = &self.values[a.0];
        let n = x.cols();
        let included: Vec<usize> = match &row_mask {
            Some(mask) => {
                assert_eq!(mask.len(), x.rows(), "mean_pool mask length");
                (0..x.rows()).filter(|&r| mask[r]).collect()
            }
            None => (0..x.rows()).collect(),
        };
        assert!(!included.is_empty(), "mean_pool over zero rows");
        let inv = S::one() / S::from_f64(included.len() as f64);
        let mut out = Tensor::zeros(&[1, n]);
        for &r in &included {
            for (o, &v) in out.data_mut().iter_mut().zip(x.row(r)) {
                *o = *o + v;
            }
        }
        out.scale_assign(inv);
        let out = self.push(out);
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].clone();
            let ga = &mut grads[a.0];
            for &r in &included {
                for (dst, &g_val) in ga.row_mut(r).iter_mut().zip(g.data()) {
                    *dst = *dst + g_val * inv;
                }
            }
        }));
        out
    }

    /// Scalar loss: sum of elementwise product with fixed weights (gradient
    /// check scaffolding).
    pub fn weighted_sum(&mut self, a: Var, weights: Tensor<S>) -> Var {
        let x = &self.values[a.0];
        assert_eq!(x.shape(), weights.shape(), "weighted_sum shapes");
        let total: S = x
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&v, &w)| v * w)
            .sum();
        let out = self.push(Tensor::scalar(total));
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].item();
            let ga = &mut grads[a.0];
            for (dst, &w) in ga.data_mut().iter_mut().zip(weights.data()) {
                *dst = *dst + g * w;
            }
        }));
        out
    }

    /// Mean cross-entropy over rows: -log softmax(logits)[target] averaged
    /// over rows where `mask` (if any) is true. Gradient per row is
    /// (softmax - one_hot) / rows_counted.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: Option<Vec<bool>>,
    ) -> Var {
        let x = &self.values[logits.0];
        let classes = x.cols();
        assert_eq!(x.rows(), targets.len(), "cross_entropy targets per row");
        for (&t, r) in targets.iter().zip(0..) {
            assert!(
                t < classes,
                "cross_entropy target {t} out of range {classes} at row {r}"
            );
        }
        let included: Vec<usize> = match &mask {
            Some(m) => {
                assert_eq!(m.len(), x.rows(), "cross_entropy mask length");
                (0..x.rows()).filter(|&r| m[r]).collect()
            }
            None => (0..x.rows()).collect(),
        };
        assert!(!included.is_empty(), "cross_entropy over zero rows");

        let mut probs = x.clone();
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r));
        }
        let inv = S::one() / S::from_f64(included.len() as f64);
        let tiny = S::from_f64(f64::MIN_POSITIVE);
        let mut total = S::zero();
        for &r in &included {
            let p = probs.at(r, targets[r]);
            total = total - (p.max(tiny)).ln();
        }
        let targets = targets.to_vec();
        let out = self.push(Tensor::scalar(total * inv));
        self.record(Box::new(move |_, grads| {
            let g = grads[out.0].item();
            let ga = &mut grads[logits.0];
            for &r in &included {
                let target = targets[r];
                for (j, (dst, &p)) in ga.row_mut(r).iter_mut().zip(probs.row(r)).enumerate() {
                    let indicator = if j == target { S::one() } else { S::zero() };
                    *dst = *dst + g * inv * (p - indicator);
                }
            }
        }));
        out
    }

    /// Single-example cross-entropy over a (1 x C) logits row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        self.cross_entropy_rows(logits, &[target], None)
    }

    /// Multi-head scaled dot-product attention over explicit segments.
    ///
    /// `q_in` is (Lq x d), `k_in`/`v_in` are (Lk x d); d splits evenly over
    /// `heads`. Each segment's query rows attend only to its key/value rows;
    /// `kv_valid` (if given) additionally masks key positions out with
    /// exactly zero attention weight. Weights per query row sum to one over
    /// the unmasked keys.
    pub fn multi_head_attention(
        &mut self,
        q_in: Var,
        k_in: Var,
        v_in: Var,
        heads: usize,
        segments: &[AttnSegment],
        kv_valid: Option<Vec<bool>>,
    ) -> Var {
        let (q, k, v) = (
            &self.values[q_in.0],
            &self.values[k_in.0],
            &self.values[v_in.0],
        );
        let d = q.cols();
        assert_eq!(k.cols(), d, "attention: K width {} vs Q width {d}", k.cols());
        assert_eq!(v.cols(), d, "attention: V width {} vs Q width {d}", v.cols());
        assert_eq!(k.rows(), v.rows(), "attention: K rows vs V rows");
        assert!(heads > 0 && d % heads == 0, "d_model {d} not divisible by {heads} heads");
        if let Some(valid) = &kv_valid {
            assert_eq!(valid.len(), k.rows(), "attention kv_valid length");
        }
        let dh = d / heads;
        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        let neg_inf = S::from_f64(f64::NEG_INFINITY);

        let mut out = Tensor::zeros(&[q.rows(), d]);
        // cached softmax weights per (segment, head)
        let mut weights: Vec<Tensor<S>> = Vec::with_capacity(segments.len() * heads);

        for seg in segments {
            let (lq, lk) = (seg.q.len(), seg.kv.len());
            assert!(lq > 0 && lk > 0, "attention segment with empty range");
            for h in 0..heads {
                let col = h * dh;
                let mut scores = Tensor::zeros(&[lq, lk]);
                for (qi, q_row) in seg.q.clone().enumerate() {
                    let q_slice = &q.row(q_row)[col..col + dh];
                    let row = scores.row_mut(qi);
                    for (ki, k_row) in seg.kv.clone().enumerate() {
                        let masked = (seg.causal && ki > qi)
                            || kv_valid.as_ref().is_some_and(|m| !m[k_row]);
                        row[ki] = if masked {
                            neg_inf
                        } else {
                            let k_slice = &k.row(k_row)[col..col + dh];
                            let mut acc = S::zero();
                            for (&a, &b) in q_slice.iter().zip(k_slice) {
                                acc = acc + a * b;
                            }
                            acc * scale
                        };
                    }
                    debug_assert!(
                        row.iter().any(|&s| s > neg_inf),
                        "attention row fully masked"
                    );
                    softmax_in_place(row);
                }
                for (qi, q_row) in seg.q.clone().enumerate() {
                    let w_row = scores.row(qi);
                    for (ki, k_row) in seg.kv.clone().enumerate() {
                        let w = w_row[ki];
                        if w == S::zero() {
                            continue;
                        }
                        let v_slice = &v.row(k_row)[col..col + dh];
                        let out_slice = &mut out.row_mut(q_row)[col..col + dh];
                        for (o, &vv) in out_slice.iter_mut().zip(v_slice) {
                            *o = *o + w * vv;
                        }
                    }
                }
                weights.push(scores);
            }
        }

        let out = self.push(out);
        let segments = segments.to_vec();
        self.record(Box::new(move |values, grads| {
            let g = grads[out.0].clone();
            let q = &values[q_in.0];
            let k = &values[k_in.0];
            let v = &values[v_in.0];

            let mut dq = Tensor::zeros(q.shape());
            let mut dk = Tensor::zeros(k.shape());
            let mut dv = Tensor::zeros(v.shape());

            for (si, seg) in segments.iter().enumerate() {
                let (lq, lk) = (seg.q.len(), seg.kv.len());
                for h in 0..heads {
                    let col = h * dh;
                    let a = &weights[si * heads + h];
                    // dV += A^T g ; dA = g V^T
                    let mut d_scores = Tensor::zeros(&[lq, lk]);
                    for (qi, q_row) in seg.q.clone().enumerate() {
                        let g_slice = &g.row(q_row)[col..col + dh];
                        for (ki, k_row) in seg.kv.clone().enumerate() {
                            let w = a.at(qi, ki);
                            if w != S::zero() {
                                let dv_slice = &mut dv.row_mut(k_row)[col..col + dh];
                                for (o, &gv) in dv_slice.iter_mut().zip(g_slice) {
                                    *o = *o + w * gv;
                                }
                            }
                            let v_slice = &v.row(k_row)[col..col + dh];
                            let mut acc = S::zero();
                            for (&gv, &vv) in g_slice.iter().zip(v_slice) {
                                acc = acc + gv * vv;
                            }
                            d_scores.set(qi, ki, acc);
                        }
                    }
                    // softmax backward per row, then into dQ and dK
                    for (qi, q_row) in seg.q.clone().enumerate() {
                        let a_row = a.row(qi);
                        let ds_row = d_scores.row(qi);
                        let dot: S = a_row
                            .iter()
                            .zip(ds_row)
                            .map(|(&av, &dv_)| av * dv_)
                            .sum();
                        for (ki, k_row) in seg.kv.clone().enumerate() {
                            let ds = a_row[ki] * (ds_row[ki] - dot) * scale;
                            if ds == S::zero() {
                                continue;
                            }
                            let k_slice = &k.row(k_row)[col..col + dh];
                            let dq_slice = &mut dq.row_mut(q_row)[col..col + dh];
                            for (o, &kv_) in dq_slice.iter_mut().zip(k_slice) {
                                *o = *o + ds * kv_;
                            }
                            let q_slice = &q.row(q_row)[col..col + dh];
                            let dk_slice = &mut dk.row_mut(k_row)[col..col + dh];
                            for (o, &qv) in dk_slice.iter_mut().zip(q_slice) {
                                *o = *o + ds * qv;
                            }
                        }
                    }
                }
            }
            grads[q_in.0].add_assign(&dq);
            grads[k_in.0].add_assign(&dk);
            grads[v_in.0].add_assign(&dv);
        }));
        out
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Numerically stable in-place softmax over a slice.
fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let mut max = row[0];
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut total = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(shape, data)
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[1, 2], &[0.0, 0.0]));
        let y = tape.softmax_rows(x);
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[3, 4], &[1.0, -2.0, 0.5, 3.0, 9.0, 9.0, 9.0, 9.0, -5.0, 0.0, 5.0, 2.5]));
        let y = tape.softmax_rows(x);
        for r in 0..3 {
            let sum: f64 = tape.value(y).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        // logits [0,0], target 0 -> ln 2
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[1, 2], &[0.0, 0.0]));
        let loss = tape.cross_entropy(x, 0);
        assert!((tape.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-12);

        // dominant correct logit -> loss near 0
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[1, 2], &[50.0, 0.0]));
        let loss = tape.cross_entropy(x, 0);
        assert!(tape.value(loss).item() < 1e-9);

        // gradient = softmax - one_hot
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[1, 2], &[0.0, 0.0]));
        let loss = tape.cross_entropy(x, 0);
        tape.backward(loss);
        let g = tape.grad(x);
        assert!((g.data()[0] - (-0.5)).abs() < 1e-12);
        assert!((g.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_attention_averages_values() {
        // zero Q and K give uniform weights; each output row is mean(V)
        let mut tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::zeros(&[2, 4]));
        let k = tape.leaf(Tensor::zeros(&[3, 4]));
        let v = tape.leaf(t2(
            &[3, 4],
            &[
                1.0, 2.0, 3.0, 4.0, //
                5.0, 6.0, 7.0, 8.0, //
                9.0, 10.0, 11.0, 12.0,
            ],
        ));
        let out = tape.multi_head_attention(q, k, v, 2, &AttnSegment::full(2, 3), None);
        let expect = [5.0, 6.0, 7.0, 8.0];
        for r in 0..2 {
            for (a, b) in tape.value(out).row(r).iter().zip(expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_keys_get_exactly_zero_weight() {
        let mut tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::full(&[1, 2], 1.0));
        let k = tape.leaf(Tensor::full(&[3, 2], 1.0));
        // one-hot V rows expose each key's weight in the output
        let v = tape.leaf(t2(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let out = tape.multi_head_attention(
            q,
            k,
            v,
            1,
            &AttnSegment::full(1, 3),
            Some(vec![true, false, true]),
        );
        // key 1 masked: its one-hot component (second column) must be 0.0
        assert_eq!(tape.value(out).at(0, 1), 0.0);
        // remaining weights split evenly between keys 0 and 2
        assert!((tape.value(out).at(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        let mut tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::full(&[3, 2], 1.0));
        let k = tape.leaf(Tensor::full(&[3, 2], 1.0));
        let v = tape.leaf(t2(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let out = tape.multi_head_attention(q, k, v, 1, &AttnSegment::causal(3), None);
        // row 0 sees only key 0
        assert_eq!(tape.value(out).row(0), &[1.0, 0.0]);
        // row 1 sees keys 0..=1, uniform
        assert!((tape.value(out).at(1, 0) - 0.5).abs() < 1e-12);
        assert!((tape.value(out).at(1, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segments_isolate_attention() {
        // two segments; V rows one-hot: output of segment 0 rows must have
        // no mass on segment 1 keys
        let mut tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::full(&[4, 4], 1.0));
        let k = tape.leaf(Tensor::full(&[4, 4], 1.0));
        let v = tape.leaf(t2(
            &[4, 4],
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        ));
        let segs = vec![
            AttnSegment { q: 0..2, kv: 0..2, causal: false },
            AttnSegment { q: 2..4, kv: 2..4, causal: false },
        ];
        let out = tape.multi_head_attention(q, k, v, 1, &segs, None);
        let val = tape.value(out);
        assert_eq!(val.at(0, 2), 0.0);
        assert_eq!(val.at(0, 3), 0.0);
        assert_eq!(val.at(3, 0), 0.0);
        assert!((val.at(3, 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_in_eval_and_seeded_in_training() {
        let x_data = t2(&[4, 8], &(0..32).map(|i| i as f64).collect::<Vec<_>>());
        let mut eval_tape = Tape::<f64>::new();
        let x = eval_tape.leaf(x_data.clone());
        let y = eval_tape.dropout(x, 0.5);
        assert_eq!(eval_tape.value(y).data(), x_data.data());

        let run = |seed: u64| {
            let mut tape = Tape::<f64>::training(seed);
            let x = tape.leaf(x_data.clone());
            let y = tape.dropout(x, 0.5);
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
        // survivors are scaled by 1/(1-p)
        let out = run(9);
        for (i, &v) in out.iter().enumerate() {
            assert!(v == 0.0 || (v - 2.0 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_variance() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -1.0, 5.0, 0.0, 2.0]));
        let gain = tape.leaf(Tensor::full(&[1, 4], 1.0));
        let bias = tape.leaf(Tensor::zeros(&[1, 4]));
        let y = tape.layer_norm(x, gain, bias, 1e-9);
        for r in 0..2 {
            let row = tape.value(y).row(r);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_accumulates_through_shared_nodes() {
        // loss = sum(x + x) -> dx = 2
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[1, 3], &[1.0, 2.0, 3.0]));
        let y = tape.add(x, x);
        let loss = tape.weighted_sum(y, Tensor::full(&[1, 3], 1.0));
        tape.backward(loss);
        assert_eq!(tape.grad(x).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn matmul_gradients_match_known_values() {
        // f(X) = sum(X W): dX = 1 W^T
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.leaf(t2(&[2, 2], &[0.5, 0.3, 0.7, 0.1]));
        let y = tape.matmul(x, w);
        let loss = tape.weighted_sum(y, Tensor::full(&[2, 2], 1.0));
        tape.backward(loss);
        for row in 0..2 {
            assert!((tape.grad(x).at(row, 0) - 0.8).abs() < 1e-12);
            assert!((tape.grad(x).at(row, 1) - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn select_rows_scatter_adds() {
        let mut tape = Tape::<f64>::new();
        let table = tape.leaf(t2(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let picked = tape.select_rows(table, vec![1, 1, 2]);
        let loss = tape.weighted_sum(picked, Tensor::full(&[3, 2], 1.0));
        tape.backward(loss);
        let g = tape.grad(table);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[2.0, 2.0]); // selected twice
        assert_eq!(g.row(2), &[1.0, 1.0]);
    }
}
