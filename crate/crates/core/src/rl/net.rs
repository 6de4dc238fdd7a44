//! Dense network primitives for the actor/critic pair: a minimal row-major
//! matrix type, forward passes with cached pre-activations, exact analytic
//! backprop, and SGD/Adam steps with global gradient-norm clipping.

// index loops mirror the math across several same-shaped buffers
#![allow(clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Glorot-uniform init from the shared seeded stream.
    pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// self (r×k) × other (k×c) → r×c.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    *out.at_mut(i, j) += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn relu_in_place(mut self) -> Mat {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Frozen graph-convolution weights (5 input features → embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub w_g: Mat,
}

impl Encoder {
    pub fn seeded(embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Encoder {
            w_g: Mat::glorot(5, embed_dim, rng),
        }
    }

    /// Fits the encoder as a one-layer linear autoencoder on the feature
    /// matrix (reconstruction through a decoder that is then discarded),
    /// and freezes the result.
    pub fn pretrained(features: &Mat, embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Mat::glorot(5, embed_dim, rng);
        let mut d = Mat::glorot(embed_dim, 5, rng);
        let n = features.rows.max(1) as f64;
        let lr = 0.05;
        for _ in 0..200 {
            let hidden = features.matmul(&w);
            let recon = hidden.matmul(&d);
            // residual = recon - X
            let mut resid = recon;
            for i in 0..features.rows {
                for j in 0..5 {
                    *resid.at_mut(i, j) -= features.at(i, j);
                }
            }
            // dW = X^T (resid D^T) / n ; dD = hidden^T resid / n
            let mut d_w = Mat::zeros(5, embed_dim);
            let mut d_d = Mat::zeros(embed_dim, 5);
            for i in 0..features.rows {
                for e in 0..embed_dim {
                    let mut dh = 0.0;
                    for j in 0..5 {
                        dh += resid.at(i, j) * d.at(e, j);
                        *d_d.at_mut(e, j) += hidden.at(i, e) * resid.at(i, j) / n;
                    }
                    for f in 0..5 {
                        *d_w.at_mut(f, e) += features.at(i, f) * dh / n;
                    }
                }
            }
            for (p, g) in w.data.iter_mut().zip(&d_w.data) {
                *p -= lr * g;
            }
            for (p, g) in d.data.iter_mut().zip(&d_d.data) {
                *p -= lr * g;
            }
        }
        Encoder { w_g: w }
    }
}

/// Trainable actor head: two shared fully connected layers mapping each
/// node's embedding to (μx, s̃x, μy, s̃y); μ = tanh, σ = softplus + σ_min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorNet {
    pub fc1_w: Mat, // hidden × embed
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat, // 4 × hidden
    pub fc2_b: Vec<f64>,
}

impl ActorNet {
    pub fn seeded(embed_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        ActorNet {
            fc1_w: Mat::glorot(hidden_dim, embed_dim, rng),
            fc1_b: vec![0.0; hidden_dim],
            fc2_w: Mat::glorot(4, hidden_dim, rng),
            fc2_b: vec![0.0; 4],
        }
    }

    pub fn forward(&self, embedding: &Mat, sigma_min: f64) -> ActorForward {
        let n = embedding.rows;
        let hidden = self.fc1_w.rows;
        let mut a1 = Mat::zeros(n, hidden);
        let mut z1 = Mat::zeros(n, hidden);
        let mut a2 = Mat::zeros(n, 4);
        let mut mu = vec![[0.0; 2]; n];
        let mut sigma = vec![[0.0; 2]; n];
        for i in 0..n {
            let h = embedding.row(i);
            for o in 0..hidden {
                let mut acc = self.fc1_b[o];
                let w = self.fc1_w.row(o);
                for (j, hj) in h.iter().enumerate() {
                    acc += w[j] * hj;
                }
                *a1.at_mut(i, o) = acc;
                *z1.at_mut(i, o) = acc.max(0.0);
            }
            for o in 0..4 {
                let mut acc = self.fc2_b[o];
                let w = self.fc2_w.row(o);
                for j in 0..hidden {
                    acc += w[j] * z1.at(i, j);
                }
                *a2.at_mut(i, o) = acc;
            }
            mu[i] = [a2.at(i, 0).tanh(), a2.at(i, 2).tanh()];
            sigma[i] = [
                softplus(a2.at(i, 1)) + sigma_min,
                softplus(a2.at(i, 3)) + sigma_min,
            ];
        }
        ActorForward {
            mu,
            sigma,
            a1,
            z1,
            a2,
        }
    }

    /// Backprop from per-node (dL/dμ, dL/dσ) accumulators to parameter grads.
    pub fn backward(
        &self,
        embedding: &Mat,
        fwd: &ActorForward,
        d_mu: &[[f64; 2]],
        d_sigma: &[[f64; 2]],
    ) -> ActorGrads {
        let n = embedding.rows;
        let hidden = self.fc1_w.rows;
        let embed = self.fc1_w.cols;
        let mut g = ActorGrads {
            fc1_w: Mat::zeros(hidden, embed),
            fc1_b: vec![0.0; hidden],
            fc2_w: Mat::zeros(4, hidden),
            fc2_b: vec![0.0; 4],
        };
        for i in 0..n {
            let da2 = [
                d_mu[i][0] * (1.0 - fwd.mu[i][0] * fwd.mu[i][0]),
                d_sigma[i][0] * sigmoid(fwd.a2.at(i, 1)),
                d_mu[i][1] * (1.0 - fwd.mu[i][1] * fwd.mu[i][1]),
                d_sigma[i][1] * sigmoid(fwd.a2.at(i, 3)),
            ];
            let mut dz1 = vec![0.0; hidden];
            for o in 0..4 {
                g.fc2_b[o] += da2[o];
                let w = self.fc2_w.row(o);
                for j in 0..hidden {
                    *g.fc2_w.at_mut(o, j) += da2[o] * fwd.z1.at(i, j);
                    dz1[j] += da2[o] * w[j];
                }
            }
            let h = embedding.row(i);
            for (o, dz) in dz1.iter().enumerate() {
                if fwd.a1.at(i, o) <= 0.0 {
                    continue;
                }
                g.fc1_b[o] += dz;
                for (j, hj) in h.iter().enumerate() {
                    *g.fc1_w.at_mut(o, j) += dz * hj;
                }
            }
        }
        g
    }

    pub fn param_vecs_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.fc1_w.data,
            &mut self.fc1_b,
            &mut self.fc2_w.data,
            &mut self.fc2_b,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ActorForward {
    pub mu: Vec<[f64; 2]>,
    pub sigma: Vec<[f64; 2]>,
    a1: Mat,
    z1: Mat,
    a2: Mat,
}

#[derive(Debug, Clone)]
pub struct ActorGrads {
    pub fc1_w: Mat,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat,
    pub fc2_b: Vec<f64>,
}

impl ActorGrads {
    pub fn grad_vecs(&self) -> [&Vec<f64>; 4] {
        [&self.fc1_w.data, &self.fc1_b, &self.fc2_w.data, &self.fc2_b]
    }
}

/// Critic head: embedding mean-pool → two fully connected layers → V(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub fc1_w: Mat, // hidden × embed
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat, // 1 × hidden
    pub fc2_b: Vec<f64>,
}

impl CriticNet {
    pub fn seeded(embed_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        CriticNet {
            fc1_w: Mat::glorot(hidden_dim, embed_dim, rng),
            fc1_b: vec![0.0; hidden_dim],
            fc2_w: Mat::glorot(1, hidden_dim, rng),
            fc2_b: vec![0.0; 1],
        }
    }

    pub fn forward(&self, pooled: &[f64]) -> CriticForward {
        let hidden = self.fc1_w.rows;
        let mut a1 = vec![0.0; hidden];
        let mut z1 = vec![0.0; hidden];
        for o in 0..hidden {
            let mut acc = self.fc1_b[o];
            let w = self.fc1_w.row(o);
            for (j, p) in pooled.iter().enumerate() {
                acc += w[j] * p;
            }
            a1[o] = acc;
            z1[o] = acc.max(0.0);
        }
        let mut v = self.fc2_b[0];
        for j in 0..hidden {
            v += self.fc2_w.at(0, j) * z1[j];
        }
        CriticForward { value: v, a1, z1 }
    }

    pub fn backward(&self, pooled: &[f64], fwd: &CriticForward, dv: f64) -> CriticGrads {
        let hidden = self.fc1_w.rows;
        let embed = self.fc1_w.cols;
        let mut g = CriticGrads {
            fc1_w: Mat::zeros(hidden, embed),
            fc1_b: vec![0.0; hidden],
            fc2_w: Mat::zeros(1, hidden),
            fc2_b: vec![dv],
        };
        for j in 0..hidden {
            *g.fc2_w.at_mut(0, j) = dv * fwd.z1[j];
        }
        for o in 0..hidden {
            if fwd.a1[o] <= 0.0 {
                continue;
            }
            let dz = dv * self.fc2_w.at(0, o);
            g.fc1_b[o] = dz;
            for (j, p) in pooled.iter().enumerate() {
                *g.fc1_w.at_mut(o, j) = dz * p;
            }
        }
        g
    }

    pub fn param_vecs_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.fc1_w.data,
            &mut self.fc1_b,
            &mut self.fc2_w.data,
            &mut self.fc2_b,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct CriticForward {
    pub value: f64,
    a1: Vec<f64>,
    z1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CriticGrads {
    pub fc1_w: Mat,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat,
    pub fc2_b: Vec<f64>,
}

impl CriticGrads {
    pub fn grad_vecs(&self) -> [&Vec<f64>; 4] {
        [&self.fc1_w.data, &self.fc1_b, &self.fc2_w.data, &self.fc2_b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Momentum-free SGD, the reproducibility default.
    Sgd,
    Adam,
}

/// Per-network optimizer state, aligned to the canonical field order
/// [fc1_w, fc1_b, fc2_w, fc2_b].
#[derive(Debug, Clone)]
pub struct OptState {
    kind: OptimizerKind,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl OptState {
    pub fn new(kind: OptimizerKind, shapes: &[usize; 4]) -> Self {
        OptState {
            kind,
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    /// Clips the global gradient norm to `grad_clip`, then steps.
    pub fn step(
        &mut self,
        params: [&mut Vec<f64>; 4],
        grads: [&Vec<f64>; 4],
        lr: f64,
        grad_clip: f64,
    ) {
        let norm_sq: f64 = grads
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let norm = norm_sq.sqrt();
        let scale = if norm > grad_clip && norm > 0.0 {
            grad_clip / norm
        } else {
            1.0
        };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * scale * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let t = self.t as f64;
                for (f, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    for i in 0..p.len() {
                        let gi = g[i] * scale;
                        self.m[f][i] = B1 * self.m[f][i] + (1.0 - B1) * gi;
                        self.v[f][i] = B2 * self.v[f][i] + (1.0 - B2) * gi * gi;
                        let m_hat = self.m[f][i] / (1.0 - B1.powf(t));
                        let v_hat = self.v[f][i] / (1.0 - B2.powf(t));
                        p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}
