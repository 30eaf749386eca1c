//! Reverse-mode automatic differentiation over rank-4 tensors
//! (batch = 1, channels, height, width).
//!
//! Every op builds a new node holding its output, pointers to its
//! parents, and a closure implementing the exact backward rule.
//! [`backward`] seeds the scalar loss with gradient 1 and walks the
//! graph in reverse topological order, accumulating into each node's
//! grad slot. Gradients keep accumulating across calls until zeroed.
//!
//! Backward rules read parent values through the graph, so parameters
//! must not be mutated between a forward pass and the matching
//! backward call.

use std::cell::{Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::rc::Rc;

use ndarray::{Array2, Array4, Axis};

use crate::conv::{
    adjoint_convolve_channel, convolve_channel, kernel_grad_channel, reflect_index,
};
use crate::error::{DeconvError, Result};

type BackwardFn = Box<dyn Fn(&Node)>;

struct Node {
    data: RefCell<Array4<f64>>,
    grad: RefCell<Array4<f64>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

/// A value node in the computation graph. Cloning is cheap (shared
/// reference); the graph is single-threaded by construction.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

impl Tensor {
    /// Trainable leaf.
    pub fn parameter(data: Array4<f64>) -> Tensor {
        let grad = Array4::zeros(data.raw_dim());
        Tensor {
            inner: Rc::new(Node {
                data: RefCell::new(data),
                grad: RefCell::new(grad),
                requires_grad: true,
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    /// Non-trainable leaf (inputs, observations, fixed kernels).
    pub fn constant(data: Array4<f64>) -> Tensor {
        let grad = Array4::zeros(data.raw_dim());
        Tensor {
            inner: Rc::new(Node {
                data: RefCell::new(data),
                grad: RefCell::new(grad),
                requires_grad: false,
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    fn from_op(data: Array4<f64>, parents: Vec<Tensor>, f: BackwardFn) -> Tensor {
        let requires = parents.iter().any(|p| p.requires_grad());
        let grad = Array4::zeros(data.raw_dim());
        if requires {
            Tensor {
                inner: Rc::new(Node {
                    data: RefCell::new(data),
                    grad: RefCell::new(grad),
                    requires_grad: true,
                    parents,
                    backward_fn: Some(f),
                }),
            }
        } else {
            // constant subgraph: no need to keep history
            Tensor::constant(data)
        }
    }

    pub fn data(&self) -> Ref<'_, Array4<f64>> {
        self.inner.data.borrow()
    }

    pub fn data_mut(&self) -> RefMut<'_, Array4<f64>> {
        self.inner.data.borrow_mut()
    }

    pub fn grad(&self) -> Ref<'_, Array4<f64>> {
        self.inner.grad.borrow()
    }

    pub fn zero_grad(&self) {
        self.inner.grad.borrow_mut().fill(0.0);
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.inner.data.borrow();
        let d = s.shape();
        (d[0], d[1], d[2], d[3])
    }

    pub fn numel(&self) -> usize {
        self.inner.data.borrow().len()
    }

    /// Scalar extraction; panics if the tensor is not 1x1x1x1.
    pub fn item(&self) -> f64 {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on non-scalar tensor");
        d[[0, 0, 0, 0]]
    }

    /// A constant copy of the current value, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.inner.data.borrow().clone())
    }

    fn ptr(&self) -> *const Node {
        Rc::as_ptr(&self.inner)
    }
}

/// Populates `d loss / d leaf` for every reachable tensor that
/// requires a gradient. The loss must be scalar.
pub fn backward(loss: &Tensor) -> Result<()> {
    if loss.numel() != 1 {
        return Err(DeconvError::Invalid(
            "backward requires a scalar loss".into(),
        ));
    }
    if !loss.requires_grad() {
        return Ok(()); // nothing reachable is trainable
    }

    // Iterative post-order DFS; the graph is a DAG, so visited-at-entry
    // yields a valid topological order (parents before children).
    enum Visit {
        Enter(Tensor),
        Exit(Tensor),
    }
    let mut order: Vec<Tensor> = Vec::new();
    let mut visited: HashSet<*const Node> = HashSet::new();
    let mut stack = vec![Visit::Enter(loss.clone())];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Enter(t) => {
                if !visited.insert(t.ptr()) {
                    continue;
                }
                stack.push(Visit::Exit(t.clone()));
                for p in &t.inner.parents {
                    if p.requires_grad() && !visited.contains(&p.ptr()) {
                        stack.push(Visit::Enter(p.clone()));
                    }
                }
            }
            Visit::Exit(t) => order.push(t),
        }
    }

    {
        let mut g = loss.inner.grad.borrow_mut();
        g[[0, 0, 0, 0]] += 1.0;
    }
    for t in order.iter().rev() {
        if let Some(f) = &t.inner.backward_fn {
            f(&t.inner);
        }
    }
    Ok(())
}

fn shape4(a: &Array4<f64>) -> (usize, usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2], s[3])
}

fn accumulate(target: &Tensor, contribution: &Array4<f64>) {
    if target.requires_grad() {
        let mut g = target.inner.grad.borrow_mut();
        *g += contribution;
    }
}

// ---------------------------------------------------------------------------
// padding / unrolling helpers for conv2d

fn pad_reflect(x: &Array4<f64>, pt: usize, pb: usize, pl: usize, pr: usize) -> Array4<f64> {
    let (_, c, h, w) = shape4(x);
    let mut out = Array4::zeros((1, c, h + pt + pb, w + pl + pr));
    for ch in 0..c {
        for i in 0..h + pt + pb {
            let si = reflect_index(i as i64 - pt as i64, h as i64) as usize;
            for j in 0..w + pl + pr {
                let sj = reflect_index(j as i64 - pl as i64, w as i64) as usize;
                out[[0, ch, i, j]] = x[[0, ch, si, sj]];
            }
        }
    }
    out
}

/// Adjoint of [`pad_reflect`]: folds padded-border gradients back onto
/// their source pixels.
fn unpad_reflect_adjoint(
    gp: &Array4<f64>,
    h: usize,
    w: usize,
    pt: usize,
    pl: usize,
) -> Array4<f64> {
    let (_, c, hp, wp) = shape4(gp);
    let mut out = Array4::zeros((1, c, h, w));
    for ch in 0..c {
        for i in 0..hp {
            let si = reflect_index(i as i64 - pt as i64, h as i64) as usize;
            for j in 0..wp {
                let sj = reflect_index(j as i64 - pl as i64, w as i64) as usize;
                out[[0, ch, si, sj]] += gp[[0, ch, i, j]];
            }
        }
    }
    out
}

fn im2col(
    xp: &Array4<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let cin = xp.shape()[1];
    let mut cols = Array2::zeros((cin * kh * kw, ho * wo));
    for c in 0..cin {
        for a in 0..kh {
            for b in 0..kw {
                let row = (c * kh + a) * kw + b;
                for oi in 0..ho {
                    for oj in 0..wo {
                        cols[[row, oi * wo + oj]] = xp[[0, c, oi * stride + a, oj * stride + b]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    cin: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ho: usize,
    wo: usize,
    hp: usize,
    wp: usize,
) -> Array4<f64> {
    let mut out = Array4::zeros((1, cin, hp, wp));
    for c in 0..cin {
        for a in 0..kh {
            for b in 0..kw {
                let row = (c * kh + a) * kw + b;
                for oi in 0..ho {
                    for oj in 0..wo {
                        out[[0, c, oi * stride + a, oj * stride + b]] +=
                            dcols[[row, oi * wo + oj]];
                    }
                }
            }
        }
    }
    out
}

fn weight_as_matrix(w: &Array4<f64>) -> Array2<f64> {
    let (cout, cin, kh, kw) = shape4(w);
    Array2::from_shape_vec((cout, cin * kh * kw), w.iter().copied().collect()).unwrap()
}

// ---------------------------------------------------------------------------
// ops

/// Cross-correlation with reflect padding. Spatial dims are preserved
/// at stride 1 and halved (rounding up) at stride 2. Weight is
/// `[c_out, c_in, kh, kw]`; bias `[1, c_out, 1, 1]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    if stride != 1 && stride != 2 {
        return Err(DeconvError::Config(format!("conv2d stride {stride}")));
    }
    let (xb, cin, h, w) = x.shape();
    let (cout, cin_w, kh, kw) = weight.shape();
    let (_, bc, _, _) = bias.shape();
    if xb != 1 || cin_w != cin || bc != cout {
        return Err(DeconvError::ShapeMismatch(format!(
            "conv2d: x {:?} weight {:?} bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let (pb, pr) = (kh - 1 - pt, kw - 1 - pl);
    let ho = (h - 1) / stride + 1;
    let wo = (w - 1) / stride + 1;

    let out = {
        let xd = x.data();
        let xp = pad_reflect(&xd, pt, pb, pl, pr);
        let cols = im2col(&xp, kh, kw, stride, ho, wo);
        let wmat = weight_as_matrix(&weight.data());
        let mut om = wmat.dot(&cols); // [cout, ho*wo]
        let bd = bias.data();
        for c in 0..cout {
            let bv = bd[[0, c, 0, 0]];
            om.row_mut(c).mapv_inplace(|v| v + bv);
        }
        Array4::from_shape_vec((1, cout, ho, wo), om.iter().copied().collect()).unwrap()
    };

    let parents = vec![x.clone(), weight.clone(), bias.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        let weight = &node.parents[1];
        let bias = &node.parents[2];
        let g = node.grad.borrow();
        let gmat =
            Array2::from_shape_vec((cout, ho * wo), g.iter().copied().collect()).unwrap();

        if bias.requires_grad() {
            let mut db = Array4::zeros((1, cout, 1, 1));
            for c in 0..cout {
                db[[0, c, 0, 0]] = gmat.row(c).sum();
            }
            accumulate(bias, &db);
        }
        // cols are recomputed from the (unchanged) input
        let xd = x.data();
        let xp = pad_reflect(&xd, pt, pb, pl, pr);
        drop(xd);
        let cols = im2col(&xp, kh, kw, stride, ho, wo);
        if weight.requires_grad() {
            let dw = gmat.dot(&cols.t());
            let dw4 =
                Array4::from_shape_vec((cout, cin, kh, kw), dw.iter().copied().collect()).unwrap();
            accumulate(weight, &dw4);
        }
        if x.requires_grad() {
            let wmat = weight_as_matrix(&weight.data());
            let dcols = wmat.t().dot(&gmat);
            let (hp, wp) = (h + pt + pb, w + pl + pr);
            let dxp = col2im(&dcols, cin, kh, kw, stride, ho, wo, hp, wp);
            let dx = unpad_reflect_adjoint(&dxp, h, w, pt, pl);
            accumulate(x, &dx);
        }
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Convolves an image tensor `[1, d, H, W]` by a kernel tensor
/// `[1, 1, kh, kw]` around `center`, with the same reflexive-boundary
/// correlation as the degradation pipeline; all channels share the
/// kernel. Differentiable in both arguments.
pub fn convolve_kernel(x: &Tensor, k: &Tensor, center: (usize, usize)) -> Result<Tensor> {
    let (xb, d, h, w) = x.shape();
    let (kb, kc, kh, kw) = k.shape();
    if xb != 1 || kb != 1 || kc != 1 {
        return Err(DeconvError::ShapeMismatch(
            "convolve_kernel expects [1,d,H,W] image and [1,1,kh,kw] kernel".into(),
        ));
    }
    if kh > h || kw > w {
        return Err(DeconvError::ShapeMismatch(
            "kernel larger than image".into(),
        ));
    }
    if center.0 >= kh || center.1 >= kw {
        return Err(DeconvError::Invalid("kernel center out of range".into()));
    }

    let out = {
        let xd = x.data();
        let kd = k.data();
        let kview = kd.index_axis(Axis(0), 0);
        let k2 = kview.index_axis(Axis(0), 0);
        let mut out = Array4::zeros((1, d, h, w));
        for c in 0..d {
            let ch = convolve_channel(xd.index_axis(Axis(0), 0).index_axis(Axis(0), c), k2, center);
            out.index_axis_mut(Axis(0), 0)
                .index_axis_mut(Axis(0), c)
                .assign(&ch);
        }
        out
    };

    let parents = vec![x.clone(), k.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        let k = &node.parents[1];
        let g = node.grad.borrow();
        let g3 = g.index_axis(Axis(0), 0);

        if x.requires_grad() {
            let kd = k.data();
            let k2v = kd.index_axis(Axis(0), 0);
            let k2 = k2v.index_axis(Axis(0), 0);
            let mut dx = Array4::zeros((1, d, h, w));
            for c in 0..d {
                let ch = adjoint_convolve_channel(g3.index_axis(Axis(0), c), k2, center);
                dx.index_axis_mut(Axis(0), 0)
                    .index_axis_mut(Axis(0), c)
                    .assign(&ch);
            }
            drop(kd);
            accumulate(x, &dx);
        }
        if k.requires_grad() {
            let xd = x.data();
            let x3 = xd.index_axis(Axis(0), 0);
            let mut dk2 = Array2::<f64>::zeros((kh, kw));
            for c in 0..d {
                dk2 += &kernel_grad_channel(
                    x3.index_axis(Axis(0), c),
                    g3.index_axis(Axis(0), c),
                    kh,
                    kw,
                    center,
                );
            }
            drop(xd);
            let dk =
                Array4::from_shape_vec((1, 1, kh, kw), dk2.iter().copied().collect()).unwrap();
            accumulate(k, &dk);
        }
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Nearest-neighbor spatial upsampling by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(DeconvError::Config("upsample factor 0".into()));
    }
    let (_, c, h, w) = x.shape();
    let out = {
        let xd = x.data();
        let mut out = Array4::zeros((1, c, h * factor, w * factor));
        for ch in 0..c {
            for i in 0..h * factor {
                for j in 0..w * factor {
                    out[[0, ch, i, j]] = xd[[0, ch, i / factor, j / factor]];
                }
            }
        }
        out
    };
    let parents = vec![x.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        if !x.requires_grad() {
            return;
        }
        let g = node.grad.borrow();
        let mut dx = Array4::zeros((1, c, h, w));
        for ch in 0..c {
            for i in 0..h * factor {
                for j in 0..w * factor {
                    dx[[0, ch, i / factor, j / factor]] += g[[0, ch, i, j]];
                }
            }
        }
        accumulate(x, &dx);
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// max(x, slope * x) element-wise.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let out = x.data().mapv(|v| if v > 0.0 { v } else { slope * v });
    let parents = vec![x.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        if !x.requires_grad() {
            return;
        }
        let g = node.grad.borrow();
        let xd = x.data();
        let mut dx = Array4::zeros(xd.raw_dim());
        ndarray::Zip::from(&mut dx).and(&*g).and(&*xd).for_each(|d, &gv, &xv| {
            *d = if xv > 0.0 { gv } else { slope * gv };
        });
        drop(xd);
        accumulate(x, &dx);
    });
    Tensor::from_op(out, parents, f)
}

/// Logistic sigmoid, mapping into (0, 1).
pub fn sigmoid(x: &Tensor) -> Tensor {
    let out = x.data().mapv(|v| 1.0 / (1.0 + (-v).exp()));
    let parents = vec![x.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        if !x.requires_grad() {
            return;
        }
        let g = node.grad.borrow();
        let y = node.data.borrow();
        let mut dx = Array4::zeros(y.raw_dim());
        ndarray::Zip::from(&mut dx).and(&*g).and(&*y).for_each(|d, &gv, &yv| {
            *d = gv * yv * (1.0 - yv);
        });
        accumulate(x, &dx);
    });
    Tensor::from_op(out, parents, f)
}

/// Softmax over every element jointly (batch 1), so the output sums
/// to 1; shift-invariant by max subtraction.
pub fn softmax_all(x: &Tensor) -> Tensor {
    let out = {
        let xd = x.data();
        let max = xd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut e = xd.mapv(|v| (v - max).exp());
        let sum = e.sum();
        e.mapv_inplace(|v| v / sum);
        e
    };
    let parents = vec![x.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        if !x.requires_grad() {
            return;
        }
        let g = node.grad.borrow();
        let s = node.data.borrow();
        let dot: f64 = g.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
        let mut dx = Array4::zeros(s.raw_dim());
        ndarray::Zip::from(&mut dx).and(&*g).and(&*s).for_each(|d, &gv, &sv| {
            *d = sv * (gv - dot);
        });
        accumulate(x, &dx);
    });
    Tensor::from_op(out, parents, f)
}

const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-channel spatial normalization with learned gain and bias
/// (shapes `[1, C, 1, 1]`).
pub fn instance_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, c, h, w) = x.shape();
    if gain.shape() != (1, c, 1, 1) || bias.shape() != (1, c, 1, 1) {
        return Err(DeconvError::ShapeMismatch(format!(
            "instance_norm affine shapes {:?} / {:?} for {c} channels",
            gain.shape(),
            bias.shape()
        )));
    }
    let n = (h * w) as f64;
    let out = {
        let xd = x.data();
        let gd = gain.data();
        let bd = bias.data();
        let mut out = Array4::zeros(xd.raw_dim());
        for ch in 0..c {
            let xc = xd.index_axis(Axis(0), 0);
            let xc = xc.index_axis(Axis(0), ch);
            let mean = xc.sum() / n;
            let var = xc.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
            let (g0, b0) = (gd[[0, ch, 0, 0]], bd[[0, ch, 0, 0]]);
            for i in 0..h {
                for j in 0..w {
                    out[[0, ch, i, j]] = g0 * (xc[[i, j]] - mean) * inv + b0;
                }
            }
        }
        out
    };

    let parents = vec![x.clone(), gain.clone(), bias.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        let gain = &node.parents[1];
        let bias = &node.parents[2];
        let g = node.grad.borrow();
        let xd = x.data();
        let gd = gain.data();

        let mut dx = Array4::zeros(xd.raw_dim());
        let mut dgain = Array4::zeros((1, c, 1, 1));
        let mut dbias = Array4::zeros((1, c, 1, 1));
        for ch in 0..c {
            let xc = xd.index_axis(Axis(0), 0);
            let xc = xc.index_axis(Axis(0), ch);
            let gc = g.index_axis(Axis(0), 0);
            let gc = gc.index_axis(Axis(0), ch);
            let mean = xc.sum() / n;
            let var = xc.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();

            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for i in 0..h {
                for j in 0..w {
                    let xhat = (xc[[i, j]] - mean) * inv;
                    sum_g += gc[[i, j]];
                    sum_gx += gc[[i, j]] * xhat;
                }
            }
            dgain[[0, ch, 0, 0]] = sum_gx;
            dbias[[0, ch, 0, 0]] = sum_g;

            let g0 = gd[[0, ch, 0, 0]];
            let mean_g = sum_g / n;
            let mean_gx = sum_gx / n;
            for i in 0..h {
                for j in 0..w {
                    let xhat = (xc[[i, j]] - mean) * inv;
                    dx[[0, ch, i, j]] =
                        g0 * inv * (gc[[i, j]] - mean_g - xhat * mean_gx);
                }
            }
        }
        drop(xd);
        drop(gd);
        accumulate(x, &dx);
        accumulate(gain, &dgain);
        accumulate(bias, &dbias);
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Element-wise sum of two equally shaped tensors.
pub fn add(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(DeconvError::ShapeMismatch(format!(
            "add: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let out = &*x.data() + &*y.data();
    let parents = vec![x.clone(), y.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let g = node.grad.borrow();
        accumulate(&node.parents[0], &g);
        accumulate(&node.parents[1], &g);
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Concatenation along the channel axis.
pub fn concat_channels(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let (_, cx, hx, wx) = x.shape();
    let (_, cy, hy, wy) = y.shape();
    if (hx, wx) != (hy, wy) {
        return Err(DeconvError::ShapeMismatch(format!(
            "concat_channels: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let out = {
        let mut out = Array4::zeros((1, cx + cy, hx, wx));
        out.slice_mut(ndarray::s![.., 0..cx, .., ..]).assign(&*x.data());
        out.slice_mut(ndarray::s![.., cx.., .., ..]).assign(&*y.data());
        out
    };
    let parents = vec![x.clone(), y.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let g = node.grad.borrow();
        let gx = g.slice(ndarray::s![.., 0..cx, .., ..]).to_owned();
        let gy = g.slice(ndarray::s![.., cx.., .., ..]).to_owned();
        accumulate(&node.parents[0], &gx);
        accumulate(&node.parents[1], &gy);
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Mean squared error between two equally shaped tensors; returns a
/// scalar tensor.
pub fn mse_loss(x: &Tensor, target: &Tensor) -> Result<Tensor> {
    if x.shape() != target.shape() {
        return Err(DeconvError::ShapeMismatch(format!(
            "mse_loss: {:?} vs {:?}",
            x.shape(),
            target.shape()
        )));
    }
    let n = x.numel() as f64;
    let value = {
        let xd = x.data();
        let td = target.data();
        xd.iter()
            .zip(td.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n
    };
    let out = Array4::from_elem((1, 1, 1, 1), value);
    let parents = vec![x.clone(), target.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        let target = &node.parents[1];
        let g = node.grad.borrow()[[0, 0, 0, 0]];
        let xd = x.data();
        let td = target.data();
        let scale = 2.0 * g / n;
        let diff = (&*xd - &*td) * scale;
        drop(xd);
        drop(td);
        accumulate(x, &diff);
        if target.requires_grad() {
            accumulate(target, &(-&diff));
        }
    });
    Ok(Tensor::from_op(out, parents, f))
}

/// Sum of all elements; scalar tensor (handy for tests).
pub fn sum_all(x: &Tensor) -> Tensor {
    let value = x.data().sum();
    let out = Array4::from_elem((1, 1, 1, 1), value);
    let shape = {
        let d = x.data();
        d.raw_dim()
    };
    let parents = vec![x.clone()];
    let f: BackwardFn = Box::new(move |node: &Node| {
        let x = &node.parents[0];
        if !x.requires_grad() {
            return;
        }
        let g = node.grad.borrow()[[0, 0, 0, 0]];
        let dx = Array4::from_elem(shape.clone(), g);
        accumulate(x, &dx);
    });
    Tensor::from_op(out, parents, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn rand_tensor(rng: &mut Rng, shape: (usize, usize, usize, usize), param: bool) -> Tensor {
        let mut a = Array4::zeros(shape);
        rng.fill_uniform(a.as_slice_mut().unwrap(), -1.0, 1.0);
        if param {
            Tensor::parameter(a)
        } else {
            Tensor::constant(a)
        }
    }

    /// Central finite-difference check of `d f / d inputs[target]`
    /// against the autograd gradient, on a sample of coordinates.
    fn grad_check(
        inputs: &[Tensor],
        target: usize,
        f: &dyn Fn(&[Tensor]) -> Tensor,
        tol: f64,
    ) {
        let loss = f(inputs);
        for t in inputs {
            t.zero_grad();
        }
        backward(&loss).unwrap();
        let analytic = inputs[target].grad().clone();

        let h = 1e-5;
        let n = inputs[target].numel();
        let stride = (n / 24).max(1); // sample coordinates
        for flat in (0..n).step_by(stride) {
            let orig = inputs[target].data().as_slice().unwrap()[flat];
            {
                let mut d = inputs[target].data_mut();
                d.as_slice_mut().unwrap()[flat] = orig + h;
            }
            let fp = f(inputs).item();
            {
                let mut d = inputs[target].data_mut();
                d.as_slice_mut().unwrap()[flat] = orig - h;
            }
            let fm = f(inputs).item();
            {
                let mut d = inputs[target].data_mut();
                d.as_slice_mut().unwrap()[flat] = orig;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[flat];
            let denom = a.abs().max(numeric.abs()).max(1e-4);
            let rel = (a - numeric).abs() / denom;
            assert!(
                rel < tol,
                "coord {flat}: analytic {a} vs numeric {numeric} (rel {rel})"
            );
        }
    }

    #[test]
    fn sum_grad_is_ones() {
        let mut rng = Rng::new(1);
        let x = rand_tensor(&mut rng, (1, 2, 3, 3), true);
        let loss = sum_all(&x);
        backward(&loss).unwrap();
        assert!(x.grad().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mse_against_own_detach_is_zero_grad() {
        let mut rng = Rng::new(2);
        let x = rand_tensor(&mut rng, (1, 1, 4, 4), true);
        let loss = mse_loss(&x, &x.detach()).unwrap();
        backward(&loss).unwrap();
        assert_eq!(loss.item(), 0.0);
        assert!(x.grad().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let mut rng = Rng::new(3);
        let x = rand_tensor(&mut rng, (1, 1, 2, 2), true);
        let loss1 = sum_all(&x);
        backward(&loss1).unwrap();
        let loss2 = sum_all(&x);
        backward(&loss2).unwrap();
        assert!(x.grad().iter().all(|&v| v == 2.0));
        x.zero_grad();
        assert!(x.grad().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut rng = Rng::new(4);
        let x = rand_tensor(&mut rng, (1, 1, 2, 2), true);
        let y = leaky_relu(&x, 0.1);
        assert!(backward(&y).is_err());
    }

    #[test]
    fn conv2d_identity_1x1() {
        let mut rng = Rng::new(5);
        let x = rand_tensor(&mut rng, (1, 3, 4, 4), false);
        // 1x1 kernel forming an identity map over 3 channels
        let mut w = Array4::zeros((3, 3, 1, 1));
        for c in 0..3 {
            w[[c, c, 0, 0]] = 1.0;
        }
        let weight = Tensor::parameter(w);
        let bias = Tensor::parameter(Array4::zeros((1, 3, 1, 1)));
        let y = conv2d(&x, &weight, &bias, 1).unwrap();
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn conv2d_bias_grad_is_output_area() {
        let mut rng = Rng::new(6);
        let x = rand_tensor(&mut rng, (1, 2, 5, 4), false);
        let weight = rand_tensor(&mut rng, (3, 2, 3, 3), true);
        let bias = Tensor::parameter(Array4::zeros((1, 3, 1, 1)));
        let y = conv2d(&x, &weight, &bias, 1).unwrap();
        let loss = sum_all(&y);
        backward(&loss).unwrap();
        for c in 0..3 {
            assert!((bias.grad()[[0, c, 0, 0]] - 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_grad_check_stride1() {
        let mut rng = Rng::new(7);
        let inputs = vec![
            rand_tensor(&mut rng, (1, 2, 5, 5), true),
            rand_tensor(&mut rng, (3, 2, 3, 3), true),
            rand_tensor(&mut rng, (1, 3, 1, 1), true),
        ];
        for target in 0..3 {
            grad_check(
                &inputs,
                target,
                &|t| sum_all(&sigmoid(&conv2d(&t[0], &t[1], &t[2], 1).unwrap())),
                1e-4,
            );
        }
    }

    #[test]
    fn conv2d_grad_check_stride2() {
        let mut rng = Rng::new(8);
        let inputs = vec![
            rand_tensor(&mut rng, (1, 3, 6, 6), true),
            rand_tensor(&mut rng, (2, 3, 3, 3), true),
            rand_tensor(&mut rng, (1, 2, 1, 1), true),
        ];
        for target in 0..3 {
            grad_check(
                &inputs,
                target,
                &|t| sum_all(&sigmoid(&conv2d(&t[0], &t[1], &t[2], 2).unwrap())),
                1e-4,
            );
        }
    }

    #[test]
    fn convolve_kernel_matches_pipeline_convolve() {
        let mut rng = Rng::new(9);
        let mut xarr = ndarray::Array3::zeros((3, 8, 8));
        rng.fill_uniform(xarr.as_slice_mut().unwrap(), 0.0, 1.0);
        let img = crate::image::Image::new(xarr.clone()).unwrap();
        let spec = crate::kernel::KernelSpec::new(crate::kernel::KernelKind::Gaussian);
        let mut spec = spec;
        spec.h = 5;
        spec.w = 5;
        spec.c1 = 2;
        spec.c2 = 2;
        let kern = spec.build().unwrap();
        let expected = crate::conv::convolve(&img, &kern).unwrap();

        let x4 = Array4::from_shape_vec((1, 3, 8, 8), xarr.iter().copied().collect()).unwrap();
        let k4 = Array4::from_shape_vec(
            (1, 1, 5, 5),
            kern.data().iter().copied().collect(),
        )
        .unwrap();
        let x = Tensor::constant(x4);
        let k = Tensor::constant(k4);
        let y = convolve_kernel(&x, &k, (2, 2)).unwrap();
        for (a, b) in y.data().iter().zip(expected.data().iter()) {
            assert_eq!(a, b); // same routine, bit-identical
        }
    }

    #[test]
    fn convolve_kernel_grad_check_both_args() {
        let mut rng = Rng::new(10);
        let inputs = vec![
            rand_tensor(&mut rng, (1, 2, 6, 6), true),
            rand_tensor(&mut rng, (1, 1, 3, 3), true),
        ];
        for target in 0..2 {
            grad_check(
                &inputs,
                target,
                &|t| {
                    let y = convolve_kernel(&t[0], &t[1], (1, 1)).unwrap();
                    sum_all(&sigmoid(&y))
                },
                1e-4,
            );
        }
    }

    #[test]
    fn upsample_grad_check() {
        let mut rng = Rng::new(11);
        let inputs = vec![rand_tensor(&mut rng, (1, 2, 3, 4), true)];
        grad_check(
            &inputs,
            0,
            &|t| sum_all(&sigmoid(&upsample_nearest(&t[0], 2).unwrap())),
            1e-4,
        );
        let y = upsample_nearest(&inputs[0], 2).unwrap();
        assert_eq!(y.shape(), (1, 2, 6, 8));
    }

    #[test]
    fn activation_grad_checks() {
        let mut rng = Rng::new(12);
        let inputs = vec![rand_tensor(&mut rng, (1, 2, 4, 4), true)];
        grad_check(&inputs, 0, &|t| sum_all(&sigmoid(&t[0])), 1e-4);
        grad_check(&inputs, 0, &|t| sum_all(&sigmoid(&leaky_relu(&t[0], 0.1))), 1e-4);
        grad_check(&inputs, 0, &|t| sum_all(&sigmoid(&softmax_all(&t[0]))), 1e-4);
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Tensor::constant(Array4::zeros((1, 1, 1, 1)));
        assert!((sigmoid(&x).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_all_properties() {
        let mut rng = Rng::new(13);
        let x = rand_tensor(&mut rng, (1, 1, 5, 5), false);
        let s = softmax_all(&x);
        assert!((s.data().sum() - 1.0).abs() < 1e-12);
        assert!(s.data().iter().all(|&v| v >= 0.0));

        // shift invariance
        let shifted = Tensor::constant(x.data().mapv(|v| v + 3.7));
        let s2 = softmax_all(&shifted);
        for (a, b) in s.data().iter().zip(s2.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn instance_norm_grad_check() {
        let mut rng = Rng::new(14);
        let inputs = vec![
            rand_tensor(&mut rng, (1, 3, 4, 4), true),
            rand_tensor(&mut rng, (1, 3, 1, 1), true),
            rand_tensor(&mut rng, (1, 3, 1, 1), true),
        ];
        for target in 0..3 {
            grad_check(
                &inputs,
                target,
                &|t| sum_all(&sigmoid(&instance_norm(&t[0], &t[1], &t[2]).unwrap())),
                1e-4,
            );
        }
    }

    #[test]
    fn add_concat_mse_grad_checks() {
        let mut rng = Rng::new(15);
        let inputs = vec![
            rand_tensor(&mut rng, (1, 2, 3, 3), true),
            rand_tensor(&mut rng, (1, 2, 3, 3), true),
        ];
        grad_check(&inputs, 0, &|t| sum_all(&sigmoid(&add(&t[0], &t[1]).unwrap())), 1e-4);
        grad_check(
            &inputs,
            1,
            &|t| sum_all(&sigmoid(&concat_channels(&t[0], &t[1]).unwrap())),
            1e-4,
        );
        grad_check(&inputs, 0, &|t| mse_loss(&t[0], &t[1]).unwrap(), 1e-4);
        grad_check(&inputs, 1, &|t| mse_loss(&t[0], &t[1]).unwrap(), 1e-4);
    }

    #[test]
    fn shape_mismatches_rejected() {
        let a = Tensor::constant(Array4::zeros((1, 1, 2, 2)));
        let b = Tensor::constant(Array4::zeros((1, 1, 3, 3)));
        assert!(add(&a, &b).is_err());
        assert!(mse_loss(&a, &b).is_err());
        assert!(concat_channels(&a, &b).is_err());
        let w = Tensor::constant(Array4::zeros((1, 2, 3, 3))); // wrong cin
        let bias = Tensor::constant(Array4::zeros((1, 1, 1, 1)));
        assert!(conv2d(&a, &w, &bias, 1).is_err());
        assert!(conv2d(&a, &w, &bias, 3).is_err());
    }

    #[test]
    fn constant_subgraphs_are_pruned() {
        let a = Tensor::constant(Array4::zeros((1, 1, 2, 2)));
        let b = Tensor::constant(Array4::ones((1, 1, 2, 2)));
        let y = add(&a, &b).unwrap();
        assert!(!y.requires_grad());
        // backward through a constant loss is a no-op, not an error
        let s = sum_all(&y);
        assert!(backward(&s).is_ok());
    }
}
