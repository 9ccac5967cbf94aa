//! LSTM layer with truncated-nothing BPTT (the full 256 steps).
//!
//! Gate blocks are ordered [input, forget, cell, output] along the 4H axis.
//! The input projection for all timesteps is one matrix multiply; only the
//! hidden-to-hidden product runs per step. A single bias vector serves both
//! projections, with the forget block initialized to one so early training
//! does not flush the cell state.

use ndarray::{s, Array1, Array2, Array3, Axis, Ix1, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::Param;
use super::real::{sigmoid, Real};

#[derive(Debug, Clone)]
pub struct LstmLayer<R: Real> {
    /// (4H, F) input projection.
    pub w_ih: Param<R, Ix2>,
    /// (4H, H) recurrent projection.
    pub w_hh: Param<R, Ix2>,
    /// (4H) shared bias.
    pub b: Param<R, Ix1>,
    hidden: usize,
    cache: Option<LstmCache<R>>,
}

#[derive(Debug, Clone)]
struct LstmCache<R> {
    /// (T*B, F) stacked input, row t*B+b.
    x_stack: Array2<R>,
    /// (T, B, 4H) post-activation gates.
    gates: Array3<R>,
    /// (T, B, H) cell states.
    cells: Array3<R>,
    /// (T, B, H) hidden states.
    hs: Array3<R>,
    /// (T, B, H) tanh(c_t), reused by the backward pass.
    tanh_c: Array3<R>,
}

impl<R: Real> LstmLayer<R> {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / hidden as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| R::from_f64(rng.gen_range(-bound..bound)))
        };
        let w_ih = draw(4 * hidden, input);
        let w_hh = draw(4 * hidden, hidden);
        let mut b = Array1::<R>::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(R::one());
        Self {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b: Param::new(b),
            hidden,
            cache: None,
        }
    }

    /// (B, F, T) → stacked (T*B, F) so the input projection is one gemm.
    fn stack_input(x: &Array3<R>) -> Array2<R> {
        let (b, f, t) = x.dim();
        let mut stacked = Array2::<R>::zeros((t * b, f));
        for ti in 0..t {
            for bi in 0..b {
                stacked
                    .slice_mut(s![ti * b + bi, ..])
                    .assign(&x.slice(s![bi, .., ti]));
            }
        }
        stacked
    }

    fn run(&self, x: &Array3<R>, keep: bool) -> (Array3<R>, Option<LstmCache<R>>) {
        let (batch, _feat, time) = x.dim();
        let h = self.hidden;
        let x_stack = Self::stack_input(x);
        let xw = x_stack.dot(&self.w_ih.v.t()); // (T*B, 4H)
        let mut gates = Array3::<R>::zeros((time, batch, 4 * h));
        let mut cells = Array3::<R>::zeros((time, batch, h));
        let mut hs = Array3::<R>::zeros((time, batch, h));
        let mut tanh_c = Array3::<R>::zeros((time, batch, h));
        let mut h_prev = Array2::<R>::zeros((batch, h));
        let mut c_prev = Array2::<R>::zeros((batch, h));
        for ti in 0..time {
            let mut pre = xw.slice(s![ti * batch..(ti + 1) * batch, ..]).to_owned();
            pre += &h_prev.dot(&self.w_hh.v.t());
            pre += &self.b.v.view().into_shape((1, 4 * h)).expect("bias row");
            let mut g_t = pre;
            for bi in 0..batch {
                for u in 0..h {
                    let i = sigmoid(g_t[[bi, u]]);
                    let f = sigmoid(g_t[[bi, h + u]]);
                    let g = g_t[[bi, 2 * h + u]].tanh();
                    let o = sigmoid(g_t[[bi, 3 * h + u]]);
                    let c = f * c_prev[[bi, u]] + i * g;
                    let tc = c.tanh();
                    g_t[[bi, u]] = i;
                    g_t[[bi, h + u]] = f;
                    g_t[[bi, 2 * h + u]] = g;
                    g_t[[bi, 3 * h + u]] = o;
                    cells[[ti, bi, u]] = c;
                    tanh_c[[ti, bi, u]] = tc;
                    hs[[ti, bi, u]] = o * tc;
                }
            }
            gates.slice_mut(s![ti, .., ..]).assign(&g_t);
            h_prev.assign(&hs.slice(s![ti, .., ..]));
            c_prev.assign(&cells.slice(s![ti, .., ..]));
        }
        // Re-pack hidden states as (B, H, T) for the next layer.
        let mut out = Array3::<R>::zeros((batch, h, time));
        for ti in 0..time {
            for bi in 0..batch {
                out.slice_mut(s![bi, .., ti]).assign(&hs.slice(s![ti, bi, ..]));
            }
        }
        let cache = keep.then_some(LstmCache {
            x_stack,
            gates,
            cells,
            hs,
            tanh_c,
        });
        (out, cache)
    }

    /// Full hidden sequence (B, H, T); the caller picks h_T if it only
    /// needs the final state.
    pub fn forward_t(&mut self, x: &Array3<R>) -> Array3<R> {
        let (out, cache) = self.run(x, true);
        self.cache = cache;
        out
    }

    pub fn infer(&self, x: &Array3<R>) -> Array3<R> {
        self.run(x, false).0
    }

    /// BPTT. `dh_seq` is (B, H, T) — gradients flowing into every hidden
    /// state from above (zero except at T-1 when only h_T is consumed).
    pub fn backward(&mut self, dh_seq: &Array3<R>, need_dx: bool) -> Option<Array3<R>> {
        let cache = self.cache.take().expect("backward follows forward_t");
        let (batch, _h, time) = dh_seq.dim();
        let h = self.hidden;
        let mut dgates_stack = Array2::<R>::zeros((time * batch, 4 * h));
        let mut dh_rec = Array2::<R>::zeros((batch, h));
        let mut dc = Array2::<R>::zeros((batch, h));
        for ti in (0..time).rev() {
            let mut dh = dh_rec.clone();
            for bi in 0..batch {
                for u in 0..h {
                    dh[[bi, u]] += dh_seq[[bi, u, ti]];
                }
            }
            let mut dgates_t = Array2::<R>::zeros((batch, 4 * h));
            for bi in 0..batch {
                for u in 0..h {
                    let i = cache.gates[[ti, bi, u]];
                    let f = cache.gates[[ti, bi, h + u]];
                    let g = cache.gates[[ti, bi, 2 * h + u]];
                    let o = cache.gates[[ti, bi, 3 * h + u]];
                    let tc = cache.tanh_c[[ti, bi, u]];
                    let c_prev = if ti > 0 {
                        cache.cells[[ti - 1, bi, u]]
                    } else {
                        R::zero()
                    };
                    let dh_v = dh[[bi, u]];
                    let mut dc_v = dc[[bi, u]] + dh_v * o * (R::one() - tc * tc);
                    let do_v = dh_v * tc;
                    let di = dc_v * g;
                    let df = dc_v * c_prev;
                    let dg = dc_v * i;
                    dc_v *= f; // becomes dc_{t-1}
                    dgates_t[[bi, u]] = di * i * (R::one() - i);
                    dgates_t[[bi, h + u]] = df * f * (R::one() - f);
                    dgates_t[[bi, 2 * h + u]] = dg * (R::one() - g * g);
                    dgates_t[[bi, 3 * h + u]] = do_v * o * (R::one() - o);
                    dc[[bi, u]] = dc_v;
                }
            }
            if ti > 0 {
                let h_prev = cache.hs.slice(s![ti - 1, .., ..]);
                self.w_hh.g += &dgates_t.t().dot(&h_prev);
            }
            self.b.g += &dgates_t.sum_axis(Axis(0));
            dh_rec = dgates_t.dot(&self.w_hh.v);
            dgates_stack
                .slice_mut(s![ti * batch..(ti + 1) * batch, ..])
                .assign(&dgates_t);
        }
        self.w_ih.g += &dgates_stack.t().dot(&cache.x_stack);
        if !need_dx {
            return None;
        }
        let dx_stack = dgates_stack.dot(&self.w_ih.v); // (T*B, F)
        let feat = dx_stack.dim().1;
        let mut dx = Array3::<R>::zeros((batch, feat, time));
        for ti in 0..time {
            for bi in 0..batch {
                dx.slice_mut(s![bi, .., ti])
                    .assign(&dx_stack.slice(s![ti * batch + bi, ..]));
            }
        }
        Some(dx)
    }
}
