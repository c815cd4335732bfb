//! Dense, MLP and GRU blocks over a flat parameter vector.
//!
//! Blocks only hold offsets into the flat vector; parameters and gradients
//! are passed in on every call so one network definition serves the live,
//! frozen and perturbed copies alike.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;

use super::ParamLayout;

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    w: usize,
    b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

fn view2(p: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout")
}

fn view2_mut(p: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout")
}

fn view1(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

fn view1_mut(p: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut p[off..off + n])
}

impl Dense {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = layout.push(&format!("{name}.weight"), &[n_out, n_in]);
        let b = layout.push(&format!("{name}.bias"), &[n_out]);
        Self { w, b, n_in, n_out }
    }

    /// Uniform fan-in initialization scaled by `gain`.
    pub fn init(&self, p: &mut [f64], gain: f64, rng: &mut impl Rng) {
        let bound = gain / (self.n_in as f64).sqrt();
        for v in &mut p[self.w..self.w + self.n_in * self.n_out] {
            *v = rng.random_range(-bound..=bound);
        }
        for v in &mut p[self.b..self.b + self.n_out] {
            *v = rng.random_range(-bound..=bound);
        }
    }

    pub fn weight<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        view2(p, self.w, self.n_out, self.n_in)
    }

    pub fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        view1(p, self.b, self.n_out)
    }

    /// `x W^T + b` for a batch of row vectors.
    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = Array2::zeros((x.nrows(), self.n_out));
        y += &self.bias(p);
        general_mat_mul(1.0, &x, &self.weight(p).t(), 1.0, &mut y);
        y
    }

    /// Accumulate parameter gradients for upstream `dy` at input `x`.
    pub fn backward_params(&self, g: &mut [f64], x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) {
        let mut dw = view2_mut(g, self.w, self.n_out, self.n_in);
        general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
        let mut db = view1_mut(g, self.b, self.n_out);
        db += &dy.sum_axis(Axis(0));
    }

    pub fn backward_input(&self, p: &[f64], dy: ArrayView2<'_, f64>) -> Array2<f64> {
        dy.dot(&self.weight(p))
    }
}

/// Two dense layers with a tanh hidden activation and an optional tanh on
/// the output.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub l1: Dense,
    pub l2: Dense,
    pub tanh_out: bool,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub hidden: Array2<f64>,
    pub out: Array2<f64>,
}

impl Mlp {
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        dims: [usize; 3],
        tanh_out: bool,
    ) -> Self {
        Self {
            l1: Dense::new(layout, &format!("{name}.0"), dims[0], dims[1]),
            l2: Dense::new(layout, &format!("{name}.1"), dims[1], dims[2]),
            tanh_out,
        }
    }

    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> MlpCache {
        let hidden = self.l1.forward(p, x).mapv_into(f64::tanh);
        let mut out = self.l2.forward(p, hidden.view());
        if self.tanh_out {
            out.mapv_inplace(f64::tanh);
        }
        MlpCache { hidden, out }
    }

    /// Accumulate gradients; returns the gradient with respect to `x` when
    /// `want_dx` is set.
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        x: ArrayView2<'_, f64>,
        cache: &MlpCache,
        d_out: ArrayView2<'_, f64>,
        want_dx: bool,
    ) -> Option<Array2<f64>> {
        let d_pre2 = if self.tanh_out {
            let mut d = d_out.to_owned();
            Zip::from(&mut d).and(&cache.out).for_each(|d, &y| *d *= 1.0 - y * y);
            d
        } else {
            d_out.to_owned()
        };
        self.l2.backward_params(g, cache.hidden.view(), d_pre2.view());
        let mut d_pre1 = self.l2.backward_input(p, d_pre2.view());
        Zip::from(&mut d_pre1)
            .and(&cache.hidden)
            .for_each(|d, &h| *d *= 1.0 - h * h);
        self.l1.backward_params(g, x, d_pre1.view());
        want_dx.then(|| self.l1.backward_input(p, d_pre1.view()))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// GRU cell with gate order `(r, z, n)` in stacked weights:
/// `r = s(W_ir x + b_ir + W_hr h + b_hr)`, `z` likewise,
/// `n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`, `h' = (1 - z) n + z h`.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub input: Dense,
    pub recurrent: Dense,
    pub hidden: usize,
}

/// Gate activations of one batched step.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub r: Array2<f64>,
    pub z: Array2<f64>,
    pub n: Array2<f64>,
    /// `W_hn h + b_hn`.
    pub hn: Array2<f64>,
}

impl Gru {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, hidden: usize) -> Self {
        Self {
            input: Dense::new(layout, &format!("{name}.ih"), n_in, 3 * hidden),
            recurrent: Dense::new(layout, &format!("{name}.hh"), hidden, 3 * hidden),
            hidden,
        }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        // both blocks use 1/sqrt(hidden), the usual recurrent convention
        let gain = (self.input.n_in as f64 / self.hidden as f64).sqrt();
        self.input.init(p, gain, rng);
        self.recurrent.init(p, 1.0, rng);
    }

    /// One step given the precomputed input projection `gi = x W_ih^T + b_ih`.
    pub fn step(
        &self,
        p: &[f64],
        gi: ArrayView2<'_, f64>,
        h: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, GruStep) {
        let hs = self.hidden;
        let gh = self.recurrent.forward(p, h);
        let b = gi.nrows();
        let mut r = Array2::zeros((b, hs));
        let mut z = Array2::zeros((b, hs));
        let mut n = Array2::zeros((b, hs));
        let hn = gh.slice(s![.., 2 * hs..]).to_owned();
        let mut h_new = Array2::zeros((b, hs));
        for i in 0..b {
            for j in 0..hs {
                let rv = sigmoid(gi[[i, j]] + gh[[i, j]]);
                let zv = sigmoid(gi[[i, hs + j]] + gh[[i, hs + j]]);
                let nv = (gi[[i, 2 * hs + j]] + rv * hn[[i, j]]).tanh();
                r[[i, j]] = rv;
                z[[i, j]] = zv;
                n[[i, j]] = nv;
                h_new[[i, j]] = (1.0 - zv) * nv + zv * h[[i, j]];
            }
        }
        (h_new, GruStep { r, z, n, hn })
    }

    /// Backward of one step: `(d gi, d gh, d h_prev)`. Recurrent-weight
    /// gradients are left to the caller, which can batch them over steps as
    /// `recurrent.backward_params(h_prev, d gh)`.
    pub fn step_backward(
        &self,
        p: &[f64],
        h: ArrayView2<'_, f64>,
        st: &GruStep,
        dh_new: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hs = self.hidden;
        let b = h.nrows();
        let mut dgi = Array2::zeros((b, 3 * hs));
        let mut dgh = Array2::zeros((b, 3 * hs));
        let mut dh = Array2::zeros((b, hs));
        for i in 0..b {
            for j in 0..hs {
                let (r, z, n, hn) = (st.r[[i, j]], st.z[[i, j]], st.n[[i, j]], st.hn[[i, j]]);
                let d = dh_new[[i, j]];
                let dn_pre = d * (1.0 - z) * (1.0 - n * n);
                let dz_pre = d * (h[[i, j]] - n) * z * (1.0 - z);
                let dr_pre = dn_pre * hn * r * (1.0 - r);
                dgi[[i, j]] = dr_pre;
                dgi[[i, hs + j]] = dz_pre;
                dgi[[i, 2 * hs + j]] = dn_pre;
                dgh[[i, j]] = dr_pre;
                dgh[[i, hs + j]] = dz_pre;
                dgh[[i, 2 * hs + j]] = dn_pre * r;
                dh[[i, j]] = d * z;
            }
        }
        general_mat_mul(1.0, &dgh, &self.recurrent.weight(p), 1.0, &mut dh);
        (dgi, dgh, dh)
    }
}
