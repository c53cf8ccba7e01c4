//! Dense-network building blocks with hand-written gradients.
//!
//! The network graph is fixed: input batch normalization, a fully connected
//! lift to the hidden width, a feature-gating attention module, a stack of
//! residual blocks, and a fully connected head. Every block carries its own
//! exact backward pass; there is no autodiff. Correctness is enforced by
//! central finite-difference checks in the tests.

use crate::error::{Error, Result};
use crate::nn::linalg::Mat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Forward-pass mode: training uses batch statistics in batch norm and
/// updates running statistics; eval uses the stored running statistics and
/// mutates nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture descriptor. Fully determines every tensor shape, and is
/// written into the model file so a loaded model can be shape-checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub attn_bottleneck: usize,
    pub res_blocks: usize,
    pub output_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: usize, res_blocks: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            attn_bottleneck: (hidden / 4).max(1),
            res_blocks,
            output_dim,
            bn_eps: 1e-8,
            bn_momentum: 0.1,
        }
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[in, out]`
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        // He-normal, which suits the rectifier activations used throughout.
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| normal(rng) * std).collect();
        Linear { w: Mat::from_vec(fan_in, fan_out, data), b: vec![0.0; fan_out] }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        for i in 0..y.rows {
            for (v, &b) in y.row_mut(i).iter_mut().zip(self.b.iter()) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut LinearGrad) -> Mat {
        x.matmul_at_b_into(dy, &mut grad.w);
        dy.col_sum_into(&mut grad.b);
        dy.matmul_a_bt(&self.w)
    }

    fn zero_grad(&self) -> LinearGrad {
        LinearGrad { w: Mat::zeros(self.w.rows, self.w.cols), b: vec![0.0; self.b.len()] }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnGrad {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct BnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    fn new(dim: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps,
            momentum,
        }
    }

    /// Train-mode forward: normalizes with batch statistics (biased variance)
    /// and folds the batch into the running statistics.
    pub fn forward_train(&mut self, x: &Mat) -> (Mat, BnCache) {
        let (n, d) = (x.rows, x.cols);
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        x.col_sum_into(&mut mean);
        for m in mean.iter_mut() {
            *m /= nf;
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        for v in var.iter_mut() {
            *v /= nf;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = Mat::zeros(n, d);
        for i in 0..n {
            let xr = x.row(i);
            let hr = xhat.row_mut(i);
            for j in 0..d {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
        }
        let mut y = Mat::zeros(n, d);
        for i in 0..n {
            let hr = xhat.row(i);
            let yr = y.row_mut(i);
            for j in 0..d {
                yr[j] = self.gamma[j] * hr[j] + self.beta[j];
            }
        }
        for j in 0..d {
            self.running_mean[j] = (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] = (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j];
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Mat) -> Mat {
        let (n, d) = (x.rows, x.cols);
        let mut y = Mat::zeros(n, d);
        for i in 0..n {
            let xr = x.row(i);
            let yr = y.row_mut(i);
            for j in 0..d {
                let inv = 1.0 / (self.running_var[j] + self.eps).sqrt();
                yr[j] = self.gamma[j] * (xr[j] - self.running_mean[j]) * inv + self.beta[j];
            }
        }
        y
    }

    /// Exact backward through the batch statistics:
    ///
    /// dx = (gamma * inv_std / n) * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    pub fn backward(&self, cache: &BnCache, dy: &Mat, grad: &mut BnGrad) -> Mat {
        let (n, d) = (dy.rows, dy.cols);
        let nf = n as f64;
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for i in 0..n {
            let dyr = dy.row(i);
            let hr = cache.xhat.row(i);
            for j in 0..d {
                let dxhat = dyr[j] * self.gamma[j];
                sum_dxhat[j] += dxhat;
                sum_dxhat_xhat[j] += dxhat * hr[j];
                grad.gamma[j] += dyr[j] * hr[j];
                grad.beta[j] += dyr[j];
            }
        }
        let mut dx = Mat::zeros(n, d);
        for i in 0..n {
            let dyr = dy.row(i);
            let hr = cache.xhat.row(i);
            let dxr = dx.row_mut(i);
            for j in 0..d {
                let dxhat = dyr[j] * self.gamma[j];
                dxr[j] = cache.inv_std[j] / nf
                    * (nf * dxhat - sum_dxhat[j] - hr[j] * sum_dxhat_xhat[j]);
            }
        }
        dx
    }

    fn zero_grad(&self) -> BnGrad {
        BnGrad { gamma: vec![0.0; self.gamma.len()], beta: vec![0.0; self.beta.len()] }
    }
}

// ---------------------------------------------------------------------------
// Feature-gating attention
// ---------------------------------------------------------------------------

/// Feature-wise gating: two small fully connected layers produce a sigmoid
/// gate in (0,1) per hidden feature, multiplied elementwise onto the hidden
/// vector.
#[derive(Debug, Clone)]
pub struct Attention {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionGrad {
    pub fc1: LinearGrad,
    pub fc2: LinearGrad,
}

pub struct AttnCache {
    x: Mat,
    a1_pre: Mat,
    a1: Mat,
    gate: Mat,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Attention {
    fn init(rng: &mut ChaCha8Rng, dim: usize, bottleneck: usize) -> Self {
        Attention {
            fc1: Linear::init(rng, dim, bottleneck),
            fc2: Linear::init(rng, bottleneck, dim),
        }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, AttnCache) {
        let a1_pre = self.fc1.forward(x);
        let mut a1 = a1_pre.clone();
        relu_inplace(&mut a1);
        let mut gate = self.fc2.forward(&a1);
        for v in gate.data.iter_mut() {
            *v = sigmoid(*v);
        }
        let mut y = Mat::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            let xr = x.row(i);
            let gr = gate.row(i);
            let yr = y.row_mut(i);
            for j in 0..x.cols {
                yr[j] = xr[j] * gr[j];
            }
        }
        (y, AttnCache { x: x.clone(), a1_pre, a1, gate })
    }

    /// Product rule: the input feeds both the gate path and the gated value.
    pub fn backward(&self, cache: &AttnCache, dy: &Mat, grad: &mut AttentionGrad) -> Mat {
        let (n, d) = (dy.rows, dy.cols);
        let mut dx = Mat::zeros(n, d);
        let mut dgate_pre = Mat::zeros(n, d);
        for i in 0..n {
            let dyr = dy.row(i);
            let xr = cache.x.row(i);
            let gr = cache.gate.row(i);
            let dxr = dx.row_mut(i);
            let dgr = dgate_pre.row_mut(i);
            for j in 0..d {
                dxr[j] = dyr[j] * gr[j];
                // through the sigmoid
                dgr[j] = dyr[j] * xr[j] * gr[j] * (1.0 - gr[j]);
            }
        }
        let mut da1 = self.fc2.backward(&cache.a1, &dgate_pre, &mut grad.fc2);
        relu_backward_inplace(&mut da1, &cache.a1_pre);
        let dx_gate = self.fc1.backward(&cache.x, &da1, &mut grad.fc1);
        for (a, b) in dx.data.iter_mut().zip(dx_gate.data.iter()) {
            *a += b;
        }
        dx
    }

    fn zero_grad(&self) -> AttentionGrad {
        AttentionGrad { fc1: self.fc1.zero_grad(), fc2: self.fc2.zero_grad() }
    }
}

// ---------------------------------------------------------------------------
// Residual block
// ---------------------------------------------------------------------------

/// `y = x + W2 relu(W1 x + b1) + b2` with an identity skip.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct ResBlockGrad {
    pub fc1: LinearGrad,
    pub fc2: LinearGrad,
}

pub struct ResCache {
    x: Mat,
    h_pre: Mat,
    h: Mat,
}

impl ResBlock {
    fn init(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        ResBlock { fc1: Linear::init(rng, dim, dim), fc2: Linear::init(rng, dim, dim) }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, ResCache) {
        let h_pre = self.fc1.forward(x);
        let mut h = h_pre.clone();
        relu_inplace(&mut h);
        let mut y = self.fc2.forward(&h);
        for (a, b) in y.data.iter_mut().zip(x.data.iter()) {
            *a += b;
        }
        (y, ResCache { x: x.clone(), h_pre, h })
    }

    pub fn backward(&self, cache: &ResCache, dy: &Mat, grad: &mut ResBlockGrad) -> Mat {
        let mut dh = self.fc2.backward(&cache.h, dy, &mut grad.fc2);
        relu_backward_inplace(&mut dh, &cache.h_pre);
        let mut dx = self.fc1.backward(&cache.x, &dh, &mut grad.fc1);
        for (a, b) in dx.data.iter_mut().zip(dy.data.iter()) {
            *a += b;
        }
        dx
    }

    fn zero_grad(&self) -> ResBlockGrad {
        ResBlockGrad { fc1: self.fc1.zero_grad(), fc2: self.fc2.zero_grad() }
    }
}

fn relu_inplace(m: &mut Mat) {
    for v in m.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn relu_backward_inplace(grad: &mut Mat, pre: &Mat) {
    for (g, &p) in grad.data.iter_mut().zip(pre.data.iter()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// The full network
// ---------------------------------------------------------------------------

/// Input batch norm → FC lift → attention gate → residual blocks → FC head.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub bn: BatchNorm,
    pub input_fc: Linear,
    pub attn: Attention,
    pub blocks: Vec<ResBlock>,
    pub head: Linear,
}

pub struct MlpCache {
    bn: BnCache,
    bn_out: Mat,
    lift_pre: Mat,
    attn: AttnCache,
    blocks: Vec<ResCache>,
    head_in: Mat,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub bn: BnGrad,
    pub input_fc: LinearGrad,
    pub attn: AttentionGrad,
    pub blocks: Vec<ResBlockGrad>,
    pub head: LinearGrad,
}

impl Mlp {
    pub fn init(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Self {
        let bn = BatchNorm::new(spec.input_dim, spec.bn_eps, spec.bn_momentum);
        let input_fc = Linear::init(rng, spec.input_dim, spec.hidden);
        let attn = Attention::init(rng, spec.hidden, spec.attn_bottleneck);
        let blocks = (0..spec.res_blocks).map(|_| ResBlock::init(rng, spec.hidden)).collect();
        let head = Linear::init(rng, spec.hidden, spec.output_dim);
        Mlp { spec, bn, input_fc, attn, blocks, head }
    }

    /// Eval-mode forward: a pure function of the parameters and the input,
    /// normalizing with the stored running statistics.
    pub fn forward_eval(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input batch has width {}, network expects {}",
                x.cols, self.spec.input_dim
            )));
        }
        let bn_out = self.bn.forward_eval(x);
        let mut h = self.input_fc.forward(&bn_out);
        relu_inplace(&mut h);
        let (h, _attn_cache) = self.attn.forward(&h);
        let mut cur = h;
        for b in &self.blocks {
            let (next, _) = b.forward(&cur);
            cur = next;
        }
        Ok(self.head.forward(&cur))
    }

    /// Forward pass. Train mode returns a cache for [`backward`](Self::backward);
    /// eval mode is a pure function of the parameters and input.
    pub fn forward(&mut self, x: &Mat, mode: Mode) -> Result<(Mat, Option<MlpCache>)> {
        if x.cols != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input batch has width {}, network expects {}",
                x.cols, self.spec.input_dim
            )));
        }
        match mode {
            Mode::Eval => self.forward_eval(x).map(|y| (y, None)),
            Mode::Train => {
                let (bn_out, bn_cache) = self.bn.forward_train(x);
                let lift_pre = self.input_fc.forward(&bn_out);
                let mut lifted = lift_pre.clone();
                relu_inplace(&mut lifted);
                let (gated, attn_cache) = self.attn.forward(&lifted);
                let mut cur = gated;
                let mut block_caches = Vec::with_capacity(self.blocks.len());
                for b in &self.blocks {
                    let (next, cache) = b.forward(&cur);
                    block_caches.push(cache);
                    cur = next;
                }
                let y = self.head.forward(&cur);
                Ok((
                    y,
                    Some(MlpCache {
                        bn: bn_cache,
                        bn_out,
                        lift_pre,
                        attn: attn_cache,
                        blocks: block_caches,
                        head_in: cur,
                    }),
                ))
            }
        }
    }

    /// Exact analytic backward. Accumulates parameter gradients into `grads`
    /// and returns the gradient with respect to the input batch so callers
    /// can chain through upstream operations.
    pub fn backward(&self, cache: &MlpCache, dy: &Mat, grads: &mut MlpGrads) -> Mat {
        let mut cur = self.head.backward(&cache.head_in, dy, &mut grads.head);
        for i in (0..self.blocks.len()).rev() {
            cur = self.blocks[i].backward(&cache.blocks[i], &cur, &mut grads.blocks[i]);
        }
        let mut d_lift = self.attn.backward(&cache.attn, &cur, &mut grads.attn);
        relu_backward_inplace(&mut d_lift, &cache.lift_pre);
        let d_bn_out = self.input_fc.backward(&cache.bn_out, &d_lift, &mut grads.input_fc);
        self.bn.backward(&cache.bn, &d_bn_out, &mut grads.bn)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            bn: self.bn.zero_grad(),
            input_fc: self.input_fc.zero_grad(),
            attn: self.attn.zero_grad(),
            blocks: self.blocks.iter().map(|b| b.zero_grad()).collect(),
            head: self.head.zero_grad(),
        }
    }

    /// Trainable tensors in a fixed order (matched by [`MlpGrads::slices`] and
    /// the model file tensor list). Running statistics are state, not
    /// parameters, and are excluded.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.input_fc.w.data,
            &mut self.input_fc.b,
            &mut self.attn.fc1.w.data,
            &mut self.attn.fc1.b,
            &mut self.attn.fc2.w.data,
            &mut self.attn.fc2.b,
        ];
        for b in self.blocks.iter_mut() {
            out.push(&mut b.fc1.w.data);
            out.push(&mut b.fc1.b);
            out.push(&mut b.fc2.w.data);
            out.push(&mut b.fc2.b);
        }
        out.push(&mut self.head.w.data);
        out.push(&mut self.head.b);
        out
    }

    /// Tensor names and lengths in the same order as
    /// [`param_slices_mut`](Self::param_slices_mut), plus the batch-norm
    /// running statistics (persisted but not trained).
    pub fn tensor_layout(&self) -> Vec<(String, usize)> {
        let mut out = vec![
            ("bn.gamma".to_string(), self.bn.gamma.len()),
            ("bn.beta".to_string(), self.bn.beta.len()),
            ("input_fc.w".to_string(), self.input_fc.w.data.len()),
            ("input_fc.b".to_string(), self.input_fc.b.len()),
            ("attn.fc1.w".to_string(), self.attn.fc1.w.data.len()),
            ("attn.fc1.b".to_string(), self.attn.fc1.b.len()),
            ("attn.fc2.w".to_string(), self.attn.fc2.w.data.len()),
            ("attn.fc2.b".to_string(), self.attn.fc2.b.len()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.fc1.w"), b.fc1.w.data.len()));
            out.push((format!("block{i}.fc1.b"), b.fc1.b.len()));
            out.push((format!("block{i}.fc2.w"), b.fc2.w.data.len()));
            out.push((format!("block{i}.fc2.b"), b.fc2.b.len()));
        }
        out.push(("head.w".to_string(), self.head.w.data.len()));
        out.push(("head.b".to_string(), self.head.b.len()));
        out.push(("bn.running_mean".to_string(), self.bn.running_mean.len()));
        out.push(("bn.running_var".to_string(), self.bn.running_var.len()));
        out
    }

    /// All persisted tensors (parameters then running stats), same order as
    /// [`tensor_layout`](Self::tensor_layout).
    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.param_slices_mut();
        out.push(&mut self.bn.running_mean);
        out.push(&mut self.bn.running_var);
        out
    }
}

impl MlpGrads {
    /// Gradient slices in the order of [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            &self.bn.gamma,
            &self.bn.beta,
            &self.input_fc.w.data,
            &self.input_fc.b,
            &self.attn.fc1.w.data,
            &self.attn.fc1.b,
            &self.attn.fc2.w.data,
            &self.attn.fc2.b,
        ];
        for b in self.blocks.iter() {
            out.push(&b.fc1.w.data);
            out.push(&b.fc1.b);
            out.push(&b.fc2.w.data);
            out.push(&b.fc2.b);
        }
        out.push(&self.head.w.data);
        out.push(&self.head.b);
        out
    }

    pub fn zero(&mut self) {
        self.bn.gamma.fill(0.0);
        self.bn.beta.fill(0.0);
        self.input_fc.w.fill(0.0);
        self.input_fc.b.fill(0.0);
        self.attn.fc1.w.fill(0.0);
        self.attn.fc1.b.fill(0.0);
        self.attn.fc2.w.fill(0.0);
        self.attn.fc2.b.fill(0.0);
        for b in self.blocks.iter_mut() {
            b.fc1.w.fill(0.0);
            b.fc1.b.fill(0.0);
            b.fc2.w.fill(0.0);
            b.fc2.b.fill(0.0);
        }
        self.head.w.fill(0.0);
        self.head.b.fill(0.0);
    }
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniforms; deterministic for a seeded stream.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Mat {
        let data = (0..r * c).map(|_| normal(rng)).collect();
        Mat::from_vec(r, c, data)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central finite differences against a scalar loss closure, checking
    /// every parameter of the given network.
    fn fd_check_mlp(mut net: Mlp, x: &Mat, target: &Mat, tol: f64) {
        // Analytic gradients: loss = 0.5 * sum((y - target)^2)
        let (y, cache) = {
            let (y, c) = net.forward(x, Mode::Train).unwrap();
            (y, c.unwrap())
        };
        let mut dy = Mat::zeros(y.rows, y.cols);
        for i in 0..y.data.len() {
            dy.data[i] = y.data[i] - target.data[i];
        }
        let mut grads = net.zero_grads();
        net.backward(&cache, &dy, &mut grads);

        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let h = 1e-5;
        let mut max_err = 0.0f64;
        let n_tensors = analytic.len();
        for t in 0..n_tensors {
            for k in 0..analytic[t].len() {
                let loss_at = |net: &mut Mlp| -> f64 {
                    // Fresh copy so running-stat updates don't leak between probes.
                    let mut probe = net.clone();
                    let (y, _) = probe.forward(x, Mode::Train).unwrap();
                    0.5 * y
                        .data
                        .iter()
                        .zip(target.data.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                };
                let orig = net.param_slices_mut()[t][k];
                net.param_slices_mut()[t][k] = orig + h;
                let lp = loss_at(&mut net);
                net.param_slices_mut()[t][k] = orig - h;
                let lm = loss_at(&mut net);
                net.param_slices_mut()[t][k] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let err = rel_err(numeric, analytic[t][k]);
                if numeric.abs().max(analytic[t][k].abs()) > 1e-7 {
                    max_err = max_err.max(err);
                }
            }
        }
        assert!(max_err <= tol, "max relative gradient error {max_err} exceeds {tol}");
    }

    #[test]
    fn linear_gradient_closed_form() {
        // y = Wx with zero bias: dW = g x^T (here x^T g in [in,out] layout)
        let mut r = rng(1);
        let lin = Linear::init(&mut r, 3, 2);
        let x = random_mat(1, 3, &mut r);
        let dy = random_mat(1, 2, &mut r);
        let mut grad = lin.zero_grad();
        lin.backward(&x, &dy, &mut grad);
        for i in 0..3 {
            for j in 0..2 {
                let expect = x.data[i] * dy.data[j];
                assert!((grad.w.data[i * 2 + j] - expect).abs() < 1e-12);
            }
        }
        assert_eq!(grad.b, dy.data);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut r = rng(2);
        let mut net = Mlp::init(MlpSpec::new(4, 8, 1, 5), &mut r);
        for s in net.param_slices_mut() {
            s.fill(0.0);
        }
        let x = random_mat(3, 4, &mut r);
        let (y, _) = net.forward(&x, Mode::Eval).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = rng(3);
        let mut net = Mlp::init(MlpSpec::new(4, 8, 1, 5), &mut r);
        let x = random_mat(3, 4, &mut r);
        let (y, cache) = net.forward(&x, Mode::Train).unwrap();
        let dy = Mat::zeros(y.rows, y.cols);
        let mut grads = net.zero_grads();
        net.backward(&cache.unwrap(), &dy, &mut grads);
        for s in grads.slices() {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut r = rng(4);
        let mut net = Mlp::init(MlpSpec::new(6, 8, 2, 3), &mut r);
        let x = random_mat(1, 6, &mut r);
        let (y1, _) = net.forward(&x, Mode::Eval).unwrap();
        let (y2, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y1.data, y2.data);
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut r = rng(5);
        let mut bn = BatchNorm::new(3, 1e-8, 0.1);
        bn.gamma = vec![2.0, 1.0, 0.5];
        bn.beta = vec![1.0, -1.0, 0.0];
        let x = random_mat(64, 3, &mut r);
        let (y, _) = bn.forward_train(&x);
        for j in 0..3 {
            let col: Vec<f64> = (0..64).map(|i| y.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 64.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
            assert!((mean - bn.beta[j]).abs() < 1e-6, "mean {} vs beta {}", mean, bn.beta[j]);
            assert!(
                (var - bn.gamma[j] * bn.gamma[j]).abs() < 1e-6,
                "var {} vs gamma^2 {}",
                var,
                bn.gamma[j] * bn.gamma[j]
            );
        }
    }

    #[test]
    fn attention_gate_in_unit_interval() {
        let mut r = rng(6);
        let attn = Attention::init(&mut r, 8, 2);
        let x = random_mat(16, 8, &mut r);
        let (_, cache) = attn.forward(&x);
        assert!(cache.gate.data.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn gradient_check_full_network() {
        let mut r = rng(7);
        let net = Mlp::init(MlpSpec::new(8, 16, 2, 4), &mut r);
        let x = random_mat(6, 8, &mut r);
        let target = random_mat(6, 4, &mut r);
        fd_check_mlp(net, &x, &target, 1e-4);
    }

    #[test]
    fn gradient_check_single_res_block_net() {
        let mut r = rng(8);
        let net = Mlp::init(MlpSpec::new(5, 8, 1, 3), &mut r);
        let x = random_mat(4, 5, &mut r);
        let target = random_mat(4, 3, &mut r);
        fd_check_mlp(net, &x, &target, 1e-4);
    }

    #[test]
    fn gradient_check_no_res_blocks() {
        // isolates bn + lift + attention + head
        let mut r = rng(9);
        let net = Mlp::init(MlpSpec::new(5, 6, 0, 3), &mut r);
        let x = random_mat(5, 5, &mut r);
        let target = random_mat(5, 3, &mut r);
        fd_check_mlp(net, &x, &target, 1e-4);
    }

    #[test]
    fn batch_of_one_eval_has_no_batch_dependence() {
        let mut r = rng(10);
        let mut net = Mlp::init(MlpSpec::new(4, 8, 1, 2), &mut r);
        // Push some batches through in train mode so running stats move.
        for _ in 0..3 {
            let x = random_mat(16, 4, &mut r);
            let _ = net.forward(&x, Mode::Train).unwrap();
        }
        let x = random_mat(1, 4, &mut r);
        let (y1, _) = net.forward(&x, Mode::Eval).unwrap();
        let (y2, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y1.data, y2.data);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut r = rng(11);
        let mut net = Mlp::init(MlpSpec::new(4, 8, 1, 2), &mut r);
        let x = random_mat(2, 5, &mut r);
        assert!(net.forward(&x, Mode::Eval).is_err());
    }
}
