//! Dense feed-forward regressor with tanh hidden layers and a linear head.
//!
//! All parameters live in one flat vector. Layer `l` occupies a weight block
//! of shape `(fan_in, fan_out)` stored row-major, followed by `fan_out`
//! biases.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Reusable activation buffers for forward/backward passes over row blocks.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// Rows processed together by the batched kernels.
const BLOCK_ROWS: usize = 64;
const LANES: usize = 8;

impl Mlp {
    /// Random initialization: weights uniform in `±scale/√fan_in`, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], scale: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        for l in 0..sizes.len() - 1 {
            let bound = scale / (sizes[l] as f64).sqrt();
            let (w, _) = mlp.layer_mut(l);
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        mlp
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&n| n > 0), "bad layer sizes {sizes:?}");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for w in sizes.windows(2) {
            offsets.push(n);
            n += w[0] * w[1] + w[1];
        }
        offsets.push(n);
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            offsets,
        }
    }

    /// Builds a network from a flat parameter vector in the documented layout.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let mut mlp = Self::zeros(sizes);
        if params.len() != mlp.params.len() {
            return None;
        }
        mlp.params = params;
        Some(mlp)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight block and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (a, b) = (self.sizes[l], self.sizes[l + 1]);
        let block = &self.params[self.offsets[l]..self.offsets[l + 1]];
        block.split_at(a * b)
    }

    fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (a, b) = (self.sizes[l], self.sizes[l + 1]);
        let block = &mut self.params[self.offsets[l]..self.offsets[l + 1]];
        block.split_at_mut(a * b)
    }

    pub fn workspace(&self) -> Workspace {
        let max = *self.sizes.iter().max().unwrap();
        Workspace {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; max],
            delta_prev: vec![0.0; max],
        }
    }

    fn reserve_rows(&self, rows: usize, ws: &mut Workspace) {
        if ws.delta.len() >= rows * *self.sizes.iter().max().unwrap() {
            return;
        }
        let max = *self.sizes.iter().max().unwrap();
        for (a, &n) in ws.acts.iter_mut().zip(&self.sizes) {
            a.resize(n * rows, 0.0);
        }
        ws.delta.resize(max * rows, 0.0);
        ws.delta_prev.resize(max * rows, 0.0);
    }

    /// Forward pass; the returned slice lives in `ws`.
    pub fn forward<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(x.len(), self.input_dim());
        ws.acts[0][..x.len()].copy_from_slice(x);
        self.forward_rows(1, ws);
        &ws.acts[self.num_layers()][..self.output_dim()]
    }

    /// Forward pass over the first `rows` rows of `ws.acts[0]`.
    fn forward_rows(&self, rows: usize, ws: &mut Workspace) {
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let out = &mut tail[0][..rows * n_out];
            affine_rows(&head[l][..rows * n_in], n_in, w, b, out);
            if l != last {
                for v in out.iter_mut() {
                    *v = tanh(*v);
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(x, &mut ws).to_vec()
    }

    /// Mean-squared-error loss over a minibatch and its gradient.
    ///
    /// The loss is `1/(B·m) Σ_b Σ_k (f(x_b)_k − y_b,k)²` where `m` is the
    /// output width. `xs` and `ys` are flat row-major sample arrays; `batch`
    /// selects rows. The gradient is written (overwritten) into `grad`.
    pub fn loss_and_grad(
        &self,
        xs: &[f64],
        ys: &[f64],
        batch: &[usize],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        assert_eq!(grad.len(), self.params.len());
        grad.fill(0.0);
        let n_in = self.input_dim();
        let n_out = self.output_dim();
        let top = self.num_layers();
        let norm = 1.0 / (batch.len() * n_out) as f64;
        let mut loss = 0.0;
        self.reserve_rows(batch.len().min(BLOCK_ROWS), ws);
        for block in batch.chunks(BLOCK_ROWS) {
            for (k, &r) in block.iter().enumerate() {
                ws.acts[0][k * n_in..(k + 1) * n_in].copy_from_slice(&xs[r * n_in..(r + 1) * n_in]);
            }
            self.forward_rows(block.len(), ws);
            for (k, &r) in block.iter().enumerate() {
                for j in 0..n_out {
                    let e = ws.acts[top][k * n_out + j] - ys[r * n_out + j];
                    loss += e * e;
                    ws.delta[k * n_out + j] = 2.0 * e * norm;
                }
            }
            self.backward_rows(block.len(), grad, ws);
        }
        loss * norm
    }

    /// Accumulates parameter gradients given `ws.delta` holding dL/d(output)
    /// per row and activations from the latest forward pass.
    fn backward_rows(&self, rows: usize, grad: &mut [f64], ws: &mut Workspace) {
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let block = &mut grad[self.offsets[l]..self.offsets[l + 1]];
            let (gw, gb) = block.split_at_mut(n_in * n_out);
            let delta = &ws.delta[..rows * n_out];
            let input = &ws.acts[l][..rows * n_in];
            for d in delta.chunks_exact(n_out) {
                for (g, v) in gb.iter_mut().zip(d) {
                    *g += v;
                }
            }
            outer_accumulate(input, n_in, delta, n_out, gw);
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            for r in 0..rows {
                let d = &delta[r * n_out..(r + 1) * n_out];
                for i in 0..n_in {
                    let back = dot(&w[i * n_out..(i + 1) * n_out], d);
                    // tanh'(z) = 1 − tanh(z)²
                    let a = input[r * n_in + i];
                    ws.delta_prev[r * n_in + i] = back * (1.0 - a * a);
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
}

/// `tanh` through a single `exp`; absolute error within a few ulp of 1.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let t = (-2.0 * x.abs()).exp();
    ((1.0 - t) / (1.0 + t)).copysign(x)
}

/// `out[r] = b + input[r] · W` for each row, `W` row-major `(n_in, n_out)`.
fn affine_rows(input: &[f64], n_in: usize, w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    for (a, o) in input.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        let mut j = 0;
        while j + LANES <= n_out {
            let mut acc: [f64; LANES] = b[j..j + LANES].try_into().unwrap();
            for (i, &ai) in a.iter().enumerate() {
                let wr: &[f64; LANES] = w[i * n_out + j..i * n_out + j + LANES].try_into().unwrap();
                for k in 0..LANES {
                    acc[k] += ai * wr[k];
                }
            }
            o[j..j + LANES].copy_from_slice(&acc);
            j += LANES;
        }
        for jj in j..n_out {
            let mut acc = b[jj];
            for (i, &ai) in a.iter().enumerate() {
                acc += ai * w[i * n_out + jj];
            }
            o[jj] = acc;
        }
    }
}

/// `g += inputᵀ · delta` summed over rows.
fn outer_accumulate(input: &[f64], n_in: usize, delta: &[f64], n_out: usize, g: &mut [f64]) {
    let rows = delta.len() / n_out;
    for i in 0..n_in {
        let gi = &mut g[i * n_out..(i + 1) * n_out];
        let mut j = 0;
        while j + LANES <= n_out {
            let mut acc = [0.0; LANES];
            for r in 0..rows {
                let ai = input[r * n_in + i];
                let d: &[f64; LANES] = delta[r * n_out + j..r * n_out + j + LANES].try_into().unwrap();
                for k in 0..LANES {
                    acc[k] += ai * d[k];
                }
            }
            for k in 0..LANES {
                gi[j + k] += acc[k];
            }
            j += LANES;
        }
        for jj in j..n_out {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += input[r * n_in + i] * delta[r * n_out + jj];
            }
            gi[jj] += acc;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_and_counts() {
        let m = Mlp::zeros(&[7, 64, 64, 2]);
        assert_eq!(m.num_params(), 7 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        let (w, b) = m.layer(1);
        assert_eq!((w.len(), b.len()), (64 * 64, 64));
    }

    #[test]
    fn init_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::new(&[7, 64, 64, 2], 1.5, &mut rng);
        for l in 0..m.num_layers() {
            let bound = 1.5 / (m.layer_sizes()[l] as f64).sqrt();
            let (w, b) = m.layer(l);
            assert!(w.iter().all(|v| v.abs() <= bound));
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        // 2-2-1 network with known weights.
        let params = vec![
            0.5, -1.0, // w[0][*]
            0.25, 2.0, // w[1][*]
            0.1, -0.2, // b
            1.0, -1.0, // w2
            0.3, // b2
        ];
        let m = Mlp::from_params(&[2, 2, 1], params).unwrap();
        let x = [1.0, 2.0];
        let h0 = (0.5 * 1.0 + 0.25 * 2.0 + 0.1f64).tanh();
        let h1 = (-1.0 * 1.0 + 2.0 * 2.0 - 0.2f64).tanh();
        let expected = h0 - h1 + 0.3;
        assert!((m.predict(&x)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn tanh_agrees_with_std() {
        for i in -4000..=4000 {
            let x = i as f64 * 0.005;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15, "{x}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(800.0), 1.0);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(|v| v as f64).collect();
        let b = vec![1.0; 7];
        assert_eq!(dot(&a, &b), 21.0);
    }
}
