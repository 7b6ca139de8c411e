//! Small residual transformer stack used as the desk-scale visual and text
//! encoder. Each block is
//!
//! ```text
//! Y   = X + softmax(X Aq (X Ak)^T / sqrt(D)) (X Av) Ao
//! out = Y + tanh(Y B1 + b1) B2 + b2
//! ```
//!
//! with row-vector tokens. There is no normalisation layer; weights are scaled
//! by `1/sqrt(fan_in)` so activations stay bounded for a couple of blocks.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::softmax_rows;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub a_q: Array2<f64>,
    pub a_k: Array2<f64>,
    pub a_v: Array2<f64>,
    pub a_o: Array2<f64>,
    pub b1: Array2<f64>,
    pub bias1: Array1<f64>,
    pub b2: Array2<f64>,
    pub bias2: Array1<f64>,
}

/// Intermediate values of one block, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    p: Array2<f64>,
    g: Array2<f64>,
}

pub(crate) fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl Block {
    pub fn random(rng: &mut ChaCha8Rng, dim: usize, hidden: usize) -> Self {
        Self {
            a_q: uniform_matrix(rng, dim, dim, dim),
            a_k: uniform_matrix(rng, dim, dim, dim),
            a_v: uniform_matrix(rng, dim, dim, dim),
            a_o: uniform_matrix(rng, dim, dim, dim),
            b1: uniform_matrix(rng, dim, hidden, dim),
            bias1: Array1::zeros(hidden),
            b2: uniform_matrix(rng, hidden, dim, hidden),
            bias2: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, BlockCache) {
        let scale = 1.0 / (x.ncols() as f64).sqrt();
        let q = x.dot(&self.a_q);
        let k = x.dot(&self.a_k);
        let v = x.dot(&self.a_v);
        let p = softmax_rows(&(q.dot(&k.t()) * scale));
        let y = &x + &p.dot(&v).dot(&self.a_o);
        let g = (y.dot(&self.b1) + &self.bias1).mapv(f64::tanh);
        let out = &y + &(g.dot(&self.b2) + &self.bias2);
        (
            out,
            BlockCache {
                x: x.to_owned(),
                q,
                k,
                v,
                p,
                g,
            },
        )
    }

    /// Gradient of a scalar loss w.r.t. the block input, given its gradient
    /// w.r.t. the block output.
    pub fn backward_input(&self, cache: &BlockCache, d_out: &Array2<f64>) -> Array2<f64> {
        let scale = 1.0 / (cache.x.ncols() as f64).sqrt();
        // MLP branch
        let d_g = d_out.dot(&self.b2.t());
        let d_u = &d_g * &cache.g.mapv(|t| 1.0 - t * t);
        let d_y = d_out + &d_u.dot(&self.b1.t());
        // attention branch
        let d_pv = d_y.dot(&self.a_o.t());
        let d_p = d_pv.dot(&cache.v.t());
        let d_v = cache.p.t().dot(&d_pv);
        let row_dot = (&d_p * &cache.p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let d_s = &cache.p * &(&d_p - &row_dot);
        let d_q = d_s.dot(&cache.k) * scale;
        let d_k = d_s.t().dot(&cache.q) * scale;
        &d_y + &d_q.dot(&self.a_q.t()) + &d_k.dot(&self.a_k.t()) + &d_v.dot(&self.a_v.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    pub dim: usize,
    pub blocks: Vec<Block>,
}

impl ToyTransformer {
    pub fn new(seed: u64, dim: usize, layers: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..layers)
            .map(|_| Block::random(&mut rng, dim, 2 * dim))
            .collect();
        Self { dim, blocks }
    }

    /// Output of every block, first to last.
    pub fn forward_layers(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<BlockCache>) {
        let mut outs = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut current = x.to_owned();
        for b in &self.blocks {
            let (next, cache) = b.forward(current.view());
            caches.push(cache);
            outs.push(next.clone());
            current = next;
        }
        (outs, caches)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (outs, _) = self.forward_layers(x);
        outs.into_iter().last().unwrap_or_else(|| x.to_owned())
    }

    pub fn backward_input(&self, caches: &[BlockCache], d_out: &Array2<f64>) -> Array2<f64> {
        let mut grad = d_out.clone();
        for (b, c) in self.blocks.iter().zip(caches).rev() {
            grad = b.backward_input(c, &grad);
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_gradient_matches_finite_differences() {
        let t = ToyTransformer::new(3, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = uniform_matrix(&mut rng, 5, 4, 1);
        let w = uniform_matrix(&mut rng, 5, 4, 1);
        let loss = |x: &Array2<f64>| (&t.forward(x.view()) * &w).sum();
        let (_, caches) = t.forward_layers(x.view());
        let analytic = t.backward_input(&caches, &w);
        let eps = 1e-6;
        for i in 0..5 {
            for j in 0..4 {
                let mut xp = x.clone();
                xp[[i, j]] += eps;
                let mut xm = x.clone();
                xm[[i, j]] -= eps;
                let numeric = (loss(&xp) - loss(&xm)) / (2.0 * eps);
                assert!((numeric - analytic[[i, j]]).abs() < 1e-7, "{i},{j}");
            }
        }
    }

    #[test]
    fn seeded_construction_is_reproducible() {
        assert_eq!(ToyTransformer::new(1, 4, 2), ToyTransformer::new(1, 4, 2));
        assert_ne!(ToyTransformer::new(1, 4, 2), ToyTransformer::new(2, 4, 2));
    }
}
