//! The skip-gram negative-sampling objective and its SGD update.
//!
//! For a center input vector `v`, a positive output vector `u+` and sampled
//! negative output vectors `u-`, the per-pair loss is
//!
//! ```text
//! -log σ(u+ · v) - Σ log σ(-u- · v)
//! ```
//!
//! Everything here is generic over the float type so the same update code
//! trains `f32` models and is checked against finite differences in `f64`.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;

/// A float that can live in a [`SharedMatrix`].
pub trait Scalar: Float + Debug + Send + Sync + 'static {
    type Cell: Send + Sync;

    fn cell(value: Self) -> Self::Cell;
    fn load(cell: &Self::Cell) -> Self;
    fn store(cell: &Self::Cell, value: Self);
    fn from_f64(value: f64) -> Self;
}

impl Scalar for f32 {
    type Cell = AtomicU32;

    fn cell(value: Self) -> Self::Cell {
        AtomicU32::new(value.to_bits())
    }

    fn load(cell: &Self::Cell) -> Self {
        f32::from_bits(cell.load(Ordering::Relaxed))
    }

    fn store(cell: &Self::Cell, value: Self) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }

    fn from_f64(value: f64) -> Self {
        value as f32
    }
}

impl Scalar for f64 {
    type Cell = AtomicU64;

    fn cell(value: Self) -> Self::Cell {
        AtomicU64::new(value.to_bits())
    }

    fn load(cell: &Self::Cell) -> Self {
        f64::from_bits(cell.load(Ordering::Relaxed))
    }

    fn store(cell: &Self::Cell, value: Self) {
        cell.store(value.to_bits(), Ordering::Relaxed)
    }

    fn from_f64(value: f64) -> Self {
        value
    }
}

/// Row-major matrix that several training threads may update at once.
///
/// Each component is an independent relaxed atomic, so concurrent writers
/// never tear a float but may overwrite each other's updates. With a single
/// writer the results are bitwise reproducible.
pub struct SharedMatrix<F: Scalar> {
    rows: usize,
    dim: usize,
    data: Vec<F::Cell>,
}

impl<F: Scalar> SharedMatrix<F> {
    pub fn from_vec(rows: usize, dim: usize, values: Vec<F>) -> Self {
        assert_eq!(values.len(), rows * dim, "matrix shape mismatch");
        Self {
            rows,
            dim,
            data: values.into_iter().map(F::cell).collect(),
        }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self::from_vec(rows, dim, vec![F::zero(); rows * dim])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, row: usize) -> &[F::Cell] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn load_row(&self, row: usize, out: &mut [F]) {
        for (o, cell) in out.iter_mut().zip(self.row(row)) {
            *o = F::load(cell);
        }
    }

    pub fn store_row(&self, row: usize, values: &[F]) {
        for (v, cell) in values.iter().zip(self.row(row)) {
            F::store(cell, *v);
        }
    }

    /// `row += scale * delta`
    pub fn add_to_row(&self, row: usize, delta: &[F], scale: F) {
        for (d, cell) in delta.iter().zip(self.row(row)) {
            F::store(cell, F::load(cell) + scale * *d);
        }
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data.iter().map(F::load).collect()
    }
}

/// One training example: the rows composing the center input vector, the
/// observed context word and the sampled negatives.
#[derive(Debug, Clone, Copy)]
pub struct PairExample<'a> {
    pub center_rows: &'a [usize],
    pub positive: usize,
    pub negatives: &'a [usize],
}

impl PairExample<'_> {
    /// Output rows with their labels, positive first.
    fn targets(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        std::iter::once((self.positive, true)).chain(self.negatives.iter().map(|&n| (n, false)))
    }
}

pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `log σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `label - σ(score)`: the negative derivative of the target's loss term
/// with respect to its score.
pub fn label_coefficient<F: Float>(label: bool, score: F) -> F {
    let target = if label { F::one() } else { F::zero() };
    target - sigmoid(score)
}

/// Loss contribution of one target given its score.
pub fn target_loss<F: Float>(label: bool, score: F) -> F {
    if label {
        -log_sigmoid(score)
    } else {
        -log_sigmoid(-score)
    }
}

pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Mean of the given rows of a row-major matrix.
pub fn compose<F: Float>(input: &[F], dim: usize, rows: &[usize], out: &mut [F]) {
    out.iter_mut().for_each(|o| *o = F::zero());
    for &r in rows {
        for (o, &x) in out.iter_mut().zip(&input[r * dim..(r + 1) * dim]) {
            *o = *o + x;
        }
    }
    let n = F::from(rows.len()).expect("row count fits the float type");
    out.iter_mut().for_each(|o| *o = *o / n);
}

/// Loss of one example evaluated on plain row-major matrices.
pub fn example_loss<F: Float>(input: &[F], output: &[F], dim: usize, ex: &PairExample<'_>) -> F {
    let mut center = vec![F::zero(); dim];
    compose(input, dim, ex.center_rows, &mut center);
    ex.targets().fold(F::zero(), |acc, (row, label)| {
        let score = dot(&center, &output[row * dim..(row + 1) * dim]);
        acc + target_loss(label, score)
    })
}

/// Closed-form gradients of [`example_loss`] with respect to every entry of
/// both matrices. Returns `(loss, d_input, d_output)`.
pub fn example_gradients<F: Float>(
    input: &[F],
    output: &[F],
    dim: usize,
    ex: &PairExample<'_>,
) -> (F, Vec<F>, Vec<F>) {
    let mut center = vec![F::zero(); dim];
    compose(input, dim, ex.center_rows, &mut center);
    let mut d_input = vec![F::zero(); input.len()];
    let mut d_output = vec![F::zero(); output.len()];
    let mut d_center = vec![F::zero(); dim];
    let mut loss = F::zero();

    for (row, label) in ex.targets() {
        let u = &output[row * dim..(row + 1) * dim];
        let score = dot(&center, u);
        loss = loss + target_loss(label, score);
        let coeff = label_coefficient(label, score);
        for i in 0..dim {
            d_center[i] = d_center[i] - coeff * u[i];
            d_output[row * dim + i] = d_output[row * dim + i] - coeff * center[i];
        }
    }

    let n = F::from(ex.center_rows.len()).expect("row count fits the float type");
    for &r in ex.center_rows {
        for i in 0..dim {
            d_input[r * dim + i] = d_input[r * dim + i] + d_center[i] / n;
        }
    }
    (loss, d_input, d_output)
}

/// Reusable buffers for [`apply_example`].
pub struct Scratch<F> {
    center: Vec<F>,
    row: Vec<F>,
    step: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            center: vec![F::zero(); dim],
            row: vec![F::zero(); dim],
            step: vec![F::zero(); dim],
        }
    }
}

/// One SGD step on an example; returns the example's loss measured before
/// the update.
///
/// Output rows are updated target by target. The center's step is
/// accumulated over all targets and then spread over its component rows,
/// scaled by `1/n` as the mean composition requires.
pub fn apply_example<F: Scalar>(
    input: &SharedMatrix<F>,
    output: &SharedMatrix<F>,
    ex: &PairExample<'_>,
    lr: F,
    scratch: &mut Scratch<F>,
) -> F {
    let Scratch { center, row, step } = scratch;
    center.iter_mut().for_each(|c| *c = F::zero());
    for &r in ex.center_rows {
        input.load_row(r, row);
        for (c, &x) in center.iter_mut().zip(row.iter()) {
            *c = *c + x;
        }
    }
    let n = F::from(ex.center_rows.len()).expect("row count fits the float type");
    center.iter_mut().for_each(|c| *c = *c / n);
    step.iter_mut().for_each(|s| *s = F::zero());

    let mut loss = F::zero();
    for (target, label) in ex.targets() {
        output.load_row(target, row);
        let score = dot(center, row);
        loss = loss + target_loss(label, score);
        let g = lr * label_coefficient(label, score);
        for i in 0..row.len() {
            step[i] = step[i] + g * row[i];
            row[i] = row[i] + g * center[i];
        }
        output.store_row(target, row);
    }

    for &r in ex.center_rows {
        input.add_to_row(r, step, F::one() / n);
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-8 {
            (a - b).abs()
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0_f64) - 0.5_f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0_f64).is_finite());
        assert!((log_sigmoid(-800.0_f64) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0_f64).abs() < 1e-300);
        assert!((sigmoid(2.0_f64) - 1.0 / (1.0 + (-2.0_f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 4;
        let (rows_in, rows_out) = (5, 3);
        let input: Vec<f64> = (0..rows_in * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let output: Vec<f64> = (0..rows_out * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ex = PairExample {
            center_rows: &[0, 3, 4],
            positive: 1,
            negatives: &[2, 0, 2],
        };
        let (_, d_in, d_out) = example_gradients(&input, &output, dim, &ex);
        let h = 1e-5;
        for i in 0..input.len() {
            let (mut plus, mut minus) = (input.clone(), input.clone());
            plus[i] += h;
            minus[i] -= h;
            let fd = (example_loss(&plus, &output, dim, &ex) - example_loss(&minus, &output, dim, &ex)) / (2.0 * h);
            assert!(rel_err(d_in[i], fd) < 1e-6, "input {i}: {} vs {fd}", d_in[i]);
        }
        for i in 0..output.len() {
            let (mut plus, mut minus) = (output.clone(), output.clone());
            plus[i] += h;
            minus[i] -= h;
            let fd = (example_loss(&input, &plus, dim, &ex) - example_loss(&input, &minus, dim, &ex)) / (2.0 * h);
            assert!(rel_err(d_out[i], fd) < 1e-6, "output {i}: {} vs {fd}", d_out[i]);
        }
    }

    #[test]
    fn update_is_a_descent_step() {
        // With a tiny learning rate the in-place update must equal
        // -lr * gradient to first order.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 3;
        let input: Vec<f64> = (0..4 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let output: Vec<f64> = (0..3 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ex = PairExample {
            center_rows: &[1, 2],
            positive: 0,
            negatives: &[1, 2],
        };
        let (loss, d_in, d_out) = example_gradients(&input, &output, dim, &ex);
        let lr = 1e-7;
        let shared_in = SharedMatrix::from_vec(4, dim, input.clone());
        let shared_out = SharedMatrix::from_vec(3, dim, output.clone());
        let step_loss = apply_example(&shared_in, &shared_out, &ex, lr, &mut Scratch::new(dim));
        assert!((step_loss - loss).abs() < 1e-12);
        let (new_in, new_out) = (shared_in.into_vec(), shared_out.into_vec());
        for i in 0..input.len() {
            let observed = (input[i] - new_in[i]) / lr;
            assert!(rel_err(observed, d_in[i]) < 1e-4, "input {i}");
        }
        for i in 0..output.len() {
            let observed = (output[i] - new_out[i]) / lr;
            assert!(rel_err(observed, d_out[i]) < 1e-4, "output {i}");
        }
    }

    #[test]
    fn f32_matrix_round_trip() {
        let m = SharedMatrix::<f32>::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        m.add_to_row(1, &[1.0, 1.0], 0.5);
        let mut row = [0.0; 2];
        m.load_row(1, &mut row);
        assert_eq!(row, [3.5, 4.5]);
        assert_eq!(m.into_vec(), [1.0, 2.0, 3.5, 4.5]);
    }
}
