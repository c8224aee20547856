//! Dense row-major tensors and the matrix kernels under everything.
//!
//! Kernels exist in sequential and row-parallel variants with identical
//! per-element accumulation order, so the two produce bit-identical output;
//! the public entry points pick a variant by problem size. Benchmarks call
//! the `*_seq` / `*_par` forms directly.

use crate::parallel;
use crate::rng::SeededRng;

use super::scalar::Scalar;
use super::NeuralError;

use rand::Rng;

/// Work threshold (multiply-adds) below which parallel dispatch is not
/// worth the scheduling overhead.
const PAR_MIN_FLOPS: usize = 32 * 1024;

/// Dense row-major tensor. Rank 1 tensors behave as a single row; scalars
/// are shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Tensor<S> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Tensor<S> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: S) -> Tensor<S> {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Tensor<S> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_f64_slice(shape: &[usize], data: &[f64]) -> Tensor<S> {
        Tensor::from_vec(shape, data.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row count: leading dimension for rank >= 2, otherwise 1.
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Column count: trailing dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        let n = self.cols();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let n = self.cols();
        &mut self.data[r * n..(r + 1) * n]
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        let n = self.cols();
        self.data[r * n + c] = v;
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale_assign(&mut self, factor: S) {
        for v in &mut self.data {
            *v = *v * factor;
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.fill(value);
    }

    pub fn transpose(&self) -> Tensor<S> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_f64_tensor(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    /// C = A B, with A (m x k) and B (k x n).
    pub fn matmul(&self, rhs: &Tensor<S>) -> Tensor<S> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        assert_eq!(
            k, k2,
            "matmul shape mismatch: ({m} x {k}) . ({k2} x {n})"
        );
        let mut out = Tensor::zeros(&[m, n]);
        if m * k * n >= PAR_MIN_FLOPS && m > 1 {
            matmul_par(&self.data, &rhs.data, out.data_mut(), m, k, n);
        } else {
            matmul_seq(&self.data, &rhs.data, out.data_mut(), m, k, n);
        }
        out
    }

    /// C = A B^T, with A (m x k) and B (n x k).
    pub fn matmul_nt(&self, rhs: &Tensor<S>) -> Tensor<S> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (rhs.rows(), rhs.cols());
        assert_eq!(
            k, k2,
            "matmul_nt shape mismatch: ({m} x {k}) . ({n} x {k2})^T"
        );
        let mut out = Tensor::zeros(&[m, n]);
        if m * k * n >= PAR_MIN_FLOPS && m > 1 {
            matmul_nt_par(&self.data, &rhs.data, out.data_mut(), m, k, n);
        } else {
            matmul_nt_seq(&self.data, &rhs.data, out.data_mut(), m, k, n);
        }
        out
    }

    /// C = A^T B, with A (r x m) and B (r x n).
    pub fn matmul_tn(&self, rhs: &Tensor<S>) -> Tensor<S> {
        let (r, m) = (self.rows(), self.cols());
        let (r2, n) = (rhs.rows(), rhs.cols());
        assert_eq!(
            r, r2,
            "matmul_tn shape mismatch: ({r} x {m})^T . ({r2} x {n})"
        );
        let mut out = Tensor::zeros(&[m, n]);
        if m * r * n >= PAR_MIN_FLOPS && m > 1 {
            matmul_tn_par(&self.data, &rhs.data, out.data_mut(), r, m, n);
        } else {
            matmul_tn_seq(&self.data, &rhs.data, out.data_mut(), r, m, n);
        }
        out
    }
}

// Row kernels: each output row accumulates over the shared dimension in
// ascending order, so the parallel wrappers below are bitwise identical to
// the sequential loops.

fn matmul_row<S: Scalar>(a_row: &[S], b: &[S], out_row: &mut [S], k: usize, n: usize) {
    for (l, &a_val) in a_row.iter().enumerate().take(k) {
        let b_row = &b[l * n..(l + 1) * n];
        for (o, &b_val) in out_row.iter_mut().zip(b_row) {
            *o = *o + a_val * b_val;
        }
    }
}

fn matmul_nt_row<S: Scalar>(a_row: &[S], b: &[S], out_row: &mut [S], k: usize, n: usize) {
    for (j, o) in out_row.iter_mut().enumerate().take(n) {
        let b_row = &b[j * k..(j + 1) * k];
        let mut acc = S::zero();
        for (&x, &y) in a_row.iter().zip(b_row) {
            acc = acc + x * y;
        }
        *o = acc;
    }
}

fn matmul_tn_row<S: Scalar>(a: &[S], b: &[S], out_row: &mut [S], i: usize, r: usize, m: usize, n: usize) {
    for l in 0..r {
        let a_val = a[l * m + i];
        let b_row = &b[l * n..(l + 1) * n];
        for (o, &b_val) in out_row.iter_mut().zip(b_row) {
            *o = *o + a_val * b_val;
        }
    }
}

/// Sequential C = A B.
pub fn matmul_seq<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        matmul_row(&a[i * k..(i + 1) * k], b, &mut out[i * n..(i + 1) * n], k, n);
    }
}

/// Row-parallel C = A B; bit-identical to [`matmul_seq`].
pub fn matmul_par<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    parallel::for_chunks_mut(out, n, |i, out_row| {
        matmul_row(&a[i * k..(i + 1) * k], b, out_row, k, n);
    });
    let _ = m;
}

/// Sequential C = A B^T.
pub fn matmul_nt_seq<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        matmul_nt_row(&a[i * k..(i + 1) * k], b, &mut out[i * n..(i + 1) * n], k, n);
    }
}

/// Row-parallel C = A B^T; bit-identical to [`matmul_nt_seq`].
pub fn matmul_nt_par<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    parallel::for_chunks_mut(out, n, |i, out_row| {
        matmul_nt_row(&a[i * k..(i + 1) * k], b, out_row, k, n);
    });
    let _ = m;
}

/// Sequential C = A^T B, with A (r x m) and B (r x n).
pub fn matmul_tn_seq<S: Scalar>(a: &[S], b: &[S], out: &mut [S], r: usize, m: usize, n: usize) {
    for i in 0..m {
        matmul_tn_row(a, b, &mut out[i * n..(i + 1) * n], i, r, m, n);
    }
}

/// Row-parallel C = A^T B; bit-identical to [`matmul_tn_seq`].
pub fn matmul_tn_par<S: Scalar>(a: &[S], b: &[S], out: &mut [S], r: usize, m: usize, n: usize) {
    parallel::for_chunks_mut(out, n, |i, out_row| {
        matmul_tn_row(a, b, out_row, i, r, m, n);
    });
}

/// Kaiming-uniform initialization: i.i.d. uniform on [-b, b] with
/// b = gain * sqrt(3 / fan_in).
pub fn kaiming_uniform<S: Scalar>(
    shape: &[usize],
    fan_in: usize,
    gain: f64,
    rng: &mut SeededRng,
) -> Result<Tensor<S>, NeuralError> {
    if fan_in == 0 {
        return Err(NeuralError::ZeroFanIn);
    }
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| S::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    Ok(Tensor::from_vec(shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn matmul_small_known_values() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f64>::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(a.matmul(&b).data(), &[19.0, 22.0, 43.0, 50.0]);
        // A B^T and A^T B against explicit transpose
        assert_eq!(a.matmul_nt(&b).data(), a.matmul(&b.transpose()).data());
        assert_eq!(a.matmul_tn(&b).data(), a.transpose().matmul(&b).data());
    }

    #[test]
    fn parallel_kernels_match_sequential_bitwise() {
        let mut rng = seeded(11);
        for &(m, k, n) in &[(3usize, 4usize, 5usize), (64, 64, 64), (33, 17, 129)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut c_seq = vec![0.0f32; m * n];
            let mut c_par = vec![0.0f32; m * n];
            matmul_seq(&a, &b, &mut c_seq, m, k, n);
            matmul_par(&a, &b, &mut c_par, m, k, n);
            assert_eq!(c_seq, c_par);

            let bt: Vec<f32> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut d_seq = vec![0.0f32; m * n];
            let mut d_par = vec![0.0f32; m * n];
            matmul_nt_seq(&a, &bt, &mut d_seq, m, k, n);
            matmul_nt_par(&a, &bt, &mut d_par, m, k, n);
            assert_eq!(d_seq, d_par);

            let a2: Vec<f32> = (0..k * m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b2: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut e_seq = vec![0.0f32; m * n];
            let mut e_par = vec![0.0f32; m * n];
            matmul_tn_seq(&a2, &b2, &mut e_seq, k, m, n);
            matmul_tn_par(&a2, &b2, &mut e_par, k, m, n);
            assert_eq!(e_seq, e_par);
        }
    }

    #[test]
    fn kaiming_bounds_match_closed_form() {
        let mut rng = seeded(1);
        // gain sqrt(2), fan_in 512: b = sqrt(6/512)
        let t: Tensor<f64> =
            kaiming_uniform(&[64, 64], 512, std::f64::consts::SQRT_2, &mut rng).unwrap();
        let bound = (6.0f64 / 512.0).sqrt();
        assert!((bound - 0.108_253_175_473_054_82).abs() < 1e-12);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        assert!(t.data().iter().any(|v| v.abs() > bound * 0.5));

        // gain 1, fan_in 512: b = sqrt(3/512)
        let bound = (3.0f64 / 512.0).sqrt();
        assert!((bound - 0.076_546_554_461_974_31).abs() < 1e-12);
        let t: Tensor<f64> = kaiming_uniform(&[32], 512, 1.0, &mut rng).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn kaiming_gain_zero_is_all_zero() {
        let mut rng = seeded(2);
        let t: Tensor<f32> = kaiming_uniform(&[4, 4], 16, 0.0, &mut rng).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kaiming_zero_fan_in_errors() {
        let mut rng = seeded(3);
        assert!(matches!(
            kaiming_uniform::<f32>(&[4], 0, 1.0, &mut rng),
            Err(NeuralError::ZeroFanIn)
        ));
    }

    #[test]
    fn kaiming_is_seeded() {
        let a: Tensor<f64> = kaiming_uniform(&[8, 8], 8, 1.0, &mut seeded(7)).unwrap();
        let b: Tensor<f64> = kaiming_uniform(&[8, 8], 8, 1.0, &mut seeded(7)).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
