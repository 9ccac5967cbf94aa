//! Network building blocks with explicit forward/backward passes.
//!
//! Layers cache what their backward pass needs when run through
//! `forward_t`; `infer` is the pure inference path (no caching, running
//! statistics, dropout off). Convolutions lower onto one big matrix
//! multiply per layer (im2col), which is where nearly all training time
//! goes.
//!
//! Data layout: sequence activations are `(batch, channels, time)`；fully
//! connected activations are `(batch, features)`.

use ndarray::{s, Array1, Array2, Array3, Axis, Dimension, Ix1, Ix2, Ix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::real::{sigmoid, Real};

/// A learnable tensor and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<R: Real, D: Dimension> {
    pub v: ndarray::Array<R, D>,
    pub g: ndarray::Array<R, D>,
}

impl<R: Real, D: Dimension> Param<R, D> {
    pub fn new(v: ndarray::Array<R, D>) -> Self {
        let g = ndarray::Array::zeros(v.raw_dim());
        Self { v, g }
    }

    /// Hand the flat value/grad slices to a visitor (Adam, serializer,
    /// gradient check). Arrays are standard layout by construction.
    pub fn visit(&mut self, name: &str, f: &mut dyn FnMut(&str, &mut [R], &mut [R])) {
        f(
            name,
            self.v.as_slice_mut().expect("param is standard layout"),
            self.g.as_slice_mut().expect("grad is standard layout"),
        );
    }
}

/// Uniform init in [-bound, bound], the usual fan-in scaling.
pub fn uniform_init<R: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Vec<R> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    (0..n)
        .map(|_| R::from_f64(rng.gen_range(-bound..bound)))
        .collect()
}

// ---------------------------------------------------------------------------
// 1-D convolution ("same" padding, stride 1) via im2col
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv1d<R: Real> {
    /// (c_out, c_in, k)
    pub w: Param<R, Ix3>,
    /// (c_out)
    pub b: Param<R, Ix1>,
    cache: Option<ConvCache<R>>,
}

#[derive(Debug, Clone)]
struct ConvCache<R> {
    col: Array2<R>,
    batch: usize,
    time: usize,
}

/// Lower (B, C, T) into (C*K, B*T): column b*T+t holds the K-window of
/// every input channel centred (after padding) at t.
fn im2col<R: Real>(x: &Array3<R>, k: usize) -> Array2<R> {
    let (b, c, t) = x.dim();
    let pad = (k - 1) / 2;
    let mut xp = Array3::<R>::zeros((b, c, t + 2 * pad));
    xp.slice_mut(s![.., .., pad..pad + t]).assign(x);
    let mut col = Array2::<R>::zeros((c * k, b * t));
    for bi in 0..b {
        for ci in 0..c {
            for kk in 0..k {
                col.slice_mut(s![ci * k + kk, bi * t..(bi + 1) * t])
                    .assign(&xp.slice(s![bi, ci, kk..kk + t]));
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add column gradients back onto the input.
fn col2im<R: Real>(dcol: &Array2<R>, b: usize, c: usize, t: usize, k: usize) -> Array3<R> {
    let pad = (k - 1) / 2;
    let mut dxp = Array3::<R>::zeros((b, c, t + 2 * pad));
    for bi in 0..b {
        for ci in 0..c {
            for kk in 0..k {
                let mut dst = dxp.slice_mut(s![bi, ci, kk..kk + t]);
                dst += &dcol.slice(s![ci * k + kk, bi * t..(bi + 1) * t]);
            }
        }
    }
    dxp.slice(s![.., .., pad..pad + t]).to_owned()
}

impl<R: Real> Conv1d<R> {
    pub fn new(c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(k % 2 == 1, "same padding requires an odd kernel");
        let fan_in = c_in * k;
        let w = Array3::from_shape_vec((c_out, c_in, k), uniform_init(rng, &[c_out, c_in, k], fan_in))
            .expect("shape matches");
        let b = Array1::from_vec(uniform_init(rng, &[c_out], fan_in));
        Self {
            w: Param::new(w),
            b: Param::new(b),
            cache: None,
        }
    }

    fn run(&self, x: &Array3<R>) -> (Array3<R>, Array2<R>) {
        let (batch, _, time) = x.dim();
        let (c_out, c_in, k) = self.w.v.dim();
        let col = im2col(x, k);
        let w2 = self
            .w
            .v
            .view()
            .into_shape((c_out, c_in * k))
            .expect("contiguous weight");
        let y2 = w2.dot(&col);
        let mut y = Array3::<R>::zeros((batch, c_out, time));
        for bi in 0..batch {
            y.slice_mut(s![bi, .., ..])
                .assign(&y2.slice(s![.., bi * time..(bi + 1) * time]));
        }
        y += &self.b.v.view().into_shape((1, c_out, 1)).expect("bias row");
        (y, col)
    }

    pub fn forward_t(&mut self, x: &Array3<R>) -> Array3<R> {
        let (batch, _, time) = x.dim();
        let (y, col) = self.run(x);
        self.cache = Some(ConvCache { col, batch, time });
        y
    }

    pub fn infer(&self, x: &Array3<R>) -> Array3<R> {
        self.run(x).0
    }

    /// Accumulate parameter gradients; return dx unless the caller is the
    /// first layer (whose input needs no gradient).
    pub fn backward(&mut self, dy: &Array3<R>, need_dx: bool) -> Option<Array3<R>> {
        let cache = self.cache.take().expect("backward follows forward_t");
        let (c_out, c_in, k) = self.w.v.dim();
        let (batch, time) = (cache.batch, cache.time);
        let mut dy2 = Array2::<R>::zeros((c_out, batch * time));
        for bi in 0..batch {
            dy2.slice_mut(s![.., bi * time..(bi + 1) * time])
                .assign(&dy.slice(s![bi, .., ..]));
        }
        let dw2 = dy2.dot(&cache.col.t());
        self.w.g += &dw2.into_shape((c_out, c_in, k)).expect("grad shape");
        self.b.g += &dy2.sum_axis(Axis(1));
        if !need_dx {
            return None;
        }
        let w2 = self
            .w
            .v
            .view()
            .into_shape((c_out, c_in * k))
            .expect("contiguous weight");
        let dcol = w2.t().dot(&dy2);
        Some(col2im(&dcol, batch, c_in, time, k))
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis of (B, C, T)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BatchNorm1d<R: Real> {
    pub gamma: Param<R, Ix1>,
    pub beta: Param<R, Ix1>,
    pub running_mean: Array1<R>,
    pub running_var: Array1<R>,
    momentum: R,
    eps: R,
    cache: Option<BnCache<R>>,
}

#[derive(Debug, Clone)]
struct BnCache<R> {
    xhat: Array3<R>,
    inv_std: Array1<R>,
}

impl<R: Real> BatchNorm1d<R> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Array1::from_elem(channels, R::one())),
            beta: Param::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::from_elem(channels, R::one()),
            momentum: R::from_f64(0.1),
            eps: R::from_f64(1e-5),
            cache: None,
        }
    }

    /// Normalize with batch statistics (mean and biased variance over
    /// batch × time, per channel). Running statistics track the batch ones
    /// unless the caller is re-evaluating losses (gradient check).
    pub fn forward_t(&mut self, x: &Array3<R>, update_running: bool) -> Array3<R> {
        let (b, c, t) = x.dim();
        let n = R::from_f64((b * t) as f64);
        let mut mean = Array1::<R>::zeros(c);
        let mut var = Array1::<R>::zeros(c);
        for ci in 0..c {
            let lane = x.slice(s![.., ci, ..]);
            let m = lane.sum() / n;
            let v = lane.mapv(|e| (e - m) * (e - m)).sum() / n;
            mean[ci] = m;
            var[ci] = v;
        }
        if update_running {
            let one = R::one();
            for ci in 0..c {
                self.running_mean[ci] =
                    (one - self.momentum) * self.running_mean[ci] + self.momentum * mean[ci];
                self.running_var[ci] =
                    (one - self.momentum) * self.running_var[ci] + self.momentum * var[ci];
            }
        }
        let inv_std = var.mapv(|v| R::one() / (v + self.eps).sqrt());
        let mut xhat = x.clone();
        for ci in 0..c {
            let m = mean[ci];
            let is = inv_std[ci];
            xhat.slice_mut(s![.., ci, ..]).mapv_inplace(|e| (e - m) * is);
        }
        let mut y = xhat.clone();
        for ci in 0..c {
            let g = self.gamma.v[ci];
            let bt = self.beta.v[ci];
            y.slice_mut(s![.., ci, ..]).mapv_inplace(|e| e * g + bt);
        }
        self.cache = Some(BnCache { xhat, inv_std });
        y
    }

    /// Normalize with the frozen running statistics.
    pub fn infer(&self, x: &Array3<R>) -> Array3<R> {
        let (_, c, _) = x.dim();
        let mut y = x.clone();
        for ci in 0..c {
            let m = self.running_mean[ci];
            let is = R::one() / (self.running_var[ci] + self.eps).sqrt();
            let g = self.gamma.v[ci];
            let bt = self.beta.v[ci];
            y.slice_mut(s![.., ci, ..])
                .mapv_inplace(|e| (e - m) * is * g + bt);
        }
        y
    }

    pub fn backward(&mut self, dy: &Array3<R>) -> Array3<R> {
        let cache = self.cache.take().expect("backward follows forward_t");
        let (b, c, t) = dy.dim();
        let n = R::from_f64((b * t) as f64);
        let mut dx = Array3::<R>::zeros((b, c, t));
        for ci in 0..c {
            let dy_l = dy.slice(s![.., ci, ..]);
            let xhat_l = cache.xhat.slice(s![.., ci, ..]);
            let sum_dy = dy_l.sum();
            let sum_dy_xhat = (&dy_l * &xhat_l).sum();
            self.beta.g[ci] += sum_dy;
            self.gamma.g[ci] += sum_dy_xhat;
            let g = self.gamma.v[ci];
            let is = cache.inv_std[ci];
            // dx = γ·inv_std/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
            let mut dst = dx.slice_mut(s![.., ci, ..]);
            dst.assign(&dy_l);
            dst.mapv_inplace(|e| e * n);
            dst -= &xhat_l.mapv(|e| e * sum_dy_xhat);
            dst.mapv_inplace(|e| (e - sum_dy) * g * is / n);
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Fully connected, ReLU, dropout, global average pooling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear<R: Real> {
    /// (out, in)
    pub w: Param<R, Ix2>,
    /// (out)
    pub b: Param<R, Ix1>,
    cache: Option<Array2<R>>,
}

impl<R: Real> Linear<R> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Array2::from_shape_vec((d_out, d_in), uniform_init(rng, &[d_out, d_in], d_in))
            .expect("shape matches");
        let b = Array1::from_vec(uniform_init(rng, &[d_out], d_in));
        Self {
            w: Param::new(w),
            b: Param::new(b),
            cache: None,
        }
    }

    fn run(&self, x: &Array2<R>) -> Array2<R> {
        let mut y = x.dot(&self.w.v.t());
        y += &self.b.v.view().into_shape((1, self.b.v.len())).expect("bias row");
        y
    }

    pub fn forward_t(&mut self, x: &Array2<R>) -> Array2<R> {
        self.cache = Some(x.clone());
        self.run(x)
    }

    pub fn infer(&self, x: &Array2<R>) -> Array2<R> {
        self.run(x)
    }

    pub fn backward(&mut self, dy: &Array2<R>) -> Array2<R> {
        let x = self.cache.take().expect("backward follows forward_t");
        self.w.g += &dy.t().dot(&x);
        self.b.g += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.v)
    }
}

/// ReLU that remembers its output for the backward mask.
#[derive(Debug, Clone)]
pub struct Relu<R: Real> {
    mask: Option<Array2<R>>,
}

impl<R: Real> Default for Relu<R> {
    fn default() -> Self {
        Self { mask: None }
    }
}

impl<R: Real> Relu<R> {
    pub fn forward_t(&mut self, x: &Array2<R>) -> Array2<R> {
        let y = x.mapv(|e| e.maximum(R::zero()));
        self.mask = Some(y.mapv(|e| if e > R::zero() { R::one() } else { R::zero() }));
        y
    }

    pub fn infer(&self, x: &Array2<R>) -> Array2<R> {
        x.mapv(|e| e.maximum(R::zero()))
    }

    pub fn backward(&mut self, dy: &Array2<R>) -> Array2<R> {
        dy * &self.mask.take().expect("backward follows forward_t")
    }
}

/// ReLU over sequence activations (B, C, T).
#[derive(Debug, Clone)]
pub struct Relu3<R: Real> {
    mask: Option<Array3<R>>,
}

impl<R: Real> Default for Relu3<R> {
    fn default() -> Self {
        Self { mask: None }
    }
}

impl<R: Real> Relu3<R> {
    pub fn forward_t(&mut self, x: &Array3<R>) -> Array3<R> {
        let y = x.mapv(|e| e.maximum(R::zero()));
        self.mask = Some(y.mapv(|e| if e > R::zero() { R::one() } else { R::zero() }));
        y
    }

    pub fn infer(&self, x: &Array3<R>) -> Array3<R> {
        x.mapv(|e| e.maximum(R::zero()))
    }

    pub fn backward(&mut self, dy: &Array3<R>) -> Array3<R> {
        dy * &self.mask.take().expect("backward follows forward_t")
    }
}

/// Inverted dropout: scales survivors by 1/(1-p) so inference is identity.
#[derive(Debug, Clone)]
pub struct Dropout<R: Real> {
    pub p: f64,
    mask: Option<Array2<R>>,
}

impl<R: Real> Dropout<R> {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout must be in [0,1)");
        Self { p, mask: None }
    }

    pub fn forward_t(&mut self, x: &Array2<R>, rng: &mut ChaCha8Rng) -> Array2<R> {
        if self.p == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = R::from_f64(1.0 / (1.0 - self.p));
        let mask = Array2::from_shape_fn(x.dim(), |_| {
            if rng.gen::<f64>() < self.p {
                R::zero()
            } else {
                keep
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array2<R>) -> Array2<R> {
        match self.mask.take() {
            Some(mask) => dy * &mask,
            None => dy.clone(),
        }
    }
}

/// Mean over the time axis: (B, C, T) → (B, C).
pub fn gap_forward<R: Real>(x: &Array3<R>) -> Array2<R> {
    let t = R::from_f64(x.dim().2 as f64);
    x.sum_axis(Axis(2)) / t
}

pub fn gap_backward<R: Real>(d: &Array2<R>, time: usize) -> Array3<R> {
    let (b, c) = d.dim();
    let scale = R::from_f64(1.0 / time as f64);
    let mut dx = Array3::<R>::zeros((b, c, time));
    for ti in 0..time {
        dx.slice_mut(s![.., .., ti]).assign(&d.mapv(|e| e * scale));
    }
    dx
}

/// Binary cross-entropy on logits, mean over the batch.
///
/// Returns the loss and d(loss)/d(logit). The log-sum-exp form never
/// overflows, unlike log(sigmoid).
pub fn bce_with_logits<R: Real>(logits: &Array1<R>, labels: &Array1<R>) -> (R, Array1<R>) {
    let n = R::from_f64(logits.len() as f64);
    let mut loss = R::zero();
    let mut dz = Array1::<R>::zeros(logits.len());
    for (k, (&z, &y)) in logits.iter().zip(labels.iter()).enumerate() {
        loss += z.maximum(R::zero()) - z * y + (R::one() + (-z.abs()).exp()).ln();
        dz[k] = (sigmoid(z) - y) / n;
    }
    (loss / n, dz)
}
