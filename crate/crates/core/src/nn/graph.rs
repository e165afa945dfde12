//! Tape-based reverse-mode automatic differentiation over `f64` tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Values
//! are computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! returns the gradient of a scalar output with respect to every node,
//! including the parameter leaves pulled from a [`ParamStore`].
//!
//! Matrix operations work on rank-2 tensors laid out as `[rows, cols]`.
//! Convolutions use NHWC activations and `[k, k, c_in, c_out]` kernels.

use std::borrow::Cow;
use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Zip};

use super::params::{ParamId, ParamStore};
use super::Tensor;

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Array2<f64>,
    },
    MeanPool(Var),
    LayerNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    SoftmaxRows(Var),
    Transpose(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RepeatRows(Var),
    BceWithLogits {
        logits: Var,
        targets: Array1<f64>,
        pos_weight: f64,
    },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

/// Recorded forward computation.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node<'p>>,
    params: HashMap<ParamId, Var>,
}

fn view2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.view()
        .into_dimensionality::<Ix2>()
        .unwrap_or_else(|_| panic!("expected rank-2 tensor, got shape {:?}", t.shape()))
}

fn owned2(a: Array2<f64>) -> Tensor {
    a.as_standard_layout().into_owned().into_dyn()
}

fn scalar(x: f64) -> Tensor {
    ArrayD::from_elem(IxDyn(&[]), x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub(crate) fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.push_node(Cow::Owned(value), op)
    }

    fn push_node(&mut self, value: Cow<'p, Tensor>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant or differentiable input (gradient available after backward).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    fn is_constant(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Constant)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let store = self.store;
        let v = self.push_node(Cow::Borrowed(store.get(id)), Op::Leaf);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = view2(self.value(a));
        let bv = view2(self.value(b));
        assert_eq!(
            av.ncols(),
            bv.nrows(),
            "matmul inner dims {:?} x {:?}",
            av.shape(),
            bv.shape()
        );
        let out = av.dot(&bv);
        self.push(out.into_dyn(), Op::MatMul(a, b))
    }

    /// `[n, m] + [m]` with the bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let xv = view2(self.value(x));
        let bv = self.value(bias);
        assert_eq!(bv.ndim(), 1, "bias must be rank 1");
        assert_eq!(xv.ncols(), bv.len(), "bias width");
        let b1 = bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let out = &xv + &b1;
        self.push(out.into_dyn(), Op::AddBias(x, bias))
    }

    /// `x W + b` for `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, weight: ParamId, bias: ParamId) -> Var {
        let w = self.param(weight);
        let b = self.param(bias);
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{what}: shape mismatch"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        self.push(out, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(gelu);
        self.push(out, Op::Gelu(a))
    }

    /// 2-D convolution on NHWC input with a `[k, k, c_in, c_out]` kernel.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Var {
        let x = self.value(input);
        let w = self.value(weight);
        assert_eq!(x.ndim(), 4, "conv2d input must be NHWC");
        assert_eq!(w.ndim(), 4, "conv2d kernel must be [k,k,cin,cout]");
        let (n, h, wd, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (k, k2, wcin, cout) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        assert!(stride >= 1);
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "kernel larger than padded input");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let geom = ConvGeom {
            n,
            h,
            w: wd,
            cin,
            cout,
            k,
            stride,
            pad,
            ho,
            wo,
        };
        let cols = im2col(x, &geom);
        let w2 = w
            .view()
            .into_shape_with_order((k * k * cin, cout))
            .expect("contiguous kernel");
        let mut out = cols.dot(&w2);
        let b = self.value(bias);
        assert_eq!(b.len(), cout, "conv2d bias width");
        let b1 = b.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        out += &b1;
        let out = out
            .into_shape_with_order(IxDyn(&[n, ho, wo, cout]))
            .expect("conv output reshape");
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
        )
    }

    /// Global average pool `[n, h, w, c] -> [n, c]`.
    pub fn mean_pool(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert_eq!(x.ndim(), 4, "mean_pool expects NHWC");
        let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let x3 = x
            .view()
            .into_shape_with_order((n, h * w, c))
            .expect("contiguous activations");
        let out = x3.mean_axis(Axis(1)).expect("non-empty spatial extent");
        self.push(out.into_dyn(), Op::MeanPool(a))
    }

    /// Layer normalisation over the last axis of a `[n, d]` tensor.
    pub fn layer_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, eps: f64) -> Var {
        let g = self.param(gamma);
        let b = self.param(beta);
        let xv = view2(self.value(x));
        let (n, d) = xv.dim();
        let mut xhat = Array2::zeros((n, d));
        let mut inv_std = Array1::zeros(n);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (c, v) in row.iter().enumerate() {
                xhat[[r, c]] = (v - mean) * is;
            }
        }
        let gv = self.value(g).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let out = &xhat * &gv + &bv;
        self.push(
            out.into_dyn(),
            Op::LayerNorm {
                input: x,
                gamma: g,
                beta: b,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = view2(self.value(a));
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.push(out.into_dyn(), Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = owned2(view2(self.value(a)).t().to_owned());
        self.push(out, Op::Transpose(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = view2(self.value(a));
        assert!(start <= end && end <= x.ncols(), "slice_cols out of range");
        let out = owned2(x.slice(s![.., start..end]).to_owned());
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(x.ndim() >= 1 && start <= end && end <= x.shape()[0], "slice_rows out of range");
        let out = x.slice_axis(Axis(0), (start..end).into()).to_owned();
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| view2(self.value(*p))).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(out.into_dyn(), Op::ConcatCols(parts.to_vec()))
    }

    /// Concatenate along axis 0; works for any rank with matching trailing dims.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows trailing mismatch");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Broadcast a `[1, m]` tensor to `[n, m]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let x = view2(self.value(a));
        assert_eq!(x.nrows(), 1, "repeat_rows expects a single row");
        let out = x.broadcast((n, x.ncols())).unwrap().to_owned();
        self.push(out.into_dyn(), Op::RepeatRows(a))
    }

    /// Mean binary cross entropy over all logits, computed from logits.
    /// Positive targets are weighted by `pos_weight`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len(), "bce target count");
        let n = targets.len() as f64;
        let loss: f64 = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum::<f64>()
            / n;
        self.push(
            scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: Array1::from(targets.to_vec()),
                pos_weight,
            },
        )
    }

    /// `sum_i w_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total: f64 = terms
            .iter()
            .map(|(v, w)| {
                let x = self.value(*v);
                assert_eq!(x.len(), 1, "weighted_sum expects scalars");
                w * x.iter().next().copied().unwrap()
            })
            .sum();
        self.push(scalar(total), Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(ArrayD::ones(self.value(output).raw_dim()));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Gradients {
            grads,
            params: self.params.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let g2 = view2(g);
                let av = view2(self.value(*a));
                let bv = view2(self.value(*b));
                accumulate(grads, *a, g2.dot(&bv.t()).into_dyn());
                accumulate(grads, *b, av.t().dot(&g2).into_dyn());
            }
            Op::AddBias(x, b) => {
                accumulate(grads, *x, g.clone());
                let gb = view2(g).sum_axis(Axis(0));
                accumulate(grads, *b, gb.into_dyn());
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g * self.value(*b));
                accumulate(grads, *b, g * self.value(*a));
            }
            Op::Scale(a, k) => accumulate(grads, *a, g * *k),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&*node.value)
                    .for_each(|d, &y| *d *= y * (1.0 - y));
                accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&*node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                accumulate(grads, *a, d);
            }
            Op::Gelu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= gelu_grad(x));
                accumulate(grads, *a, d);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let m = geom.n * geom.ho * geom.wo;
                let g2 = g
                    .view()
                    .into_shape_with_order((m, geom.cout))
                    .expect("contiguous conv grad");
                let w = self.value(*weight);
                let w2 = w
                    .view()
                    .into_shape_with_order((geom.k * geom.k * geom.cin, geom.cout))
                    .unwrap();
                let dw = cols.t().dot(&g2);
                let dw = dw
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(IxDyn(w.shape()))
                    .unwrap();
                accumulate(grads, *weight, dw);
                accumulate(grads, *bias, g2.sum_axis(Axis(0)).into_dyn());
                if !self.is_constant(*input) {
                    let dcols = g2.dot(&w2.t());
                    accumulate(grads, *input, col2im(&dcols, geom));
                }
            }
            Op::MeanPool(a) => {
                let x = self.value(*a);
                let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
                let g2 = view2(g);
                let scale = 1.0 / (h * w) as f64;
                let mut d = ArrayD::zeros(x.raw_dim());
                {
                    let mut d4 = d.view_mut().into_shape_with_order((n, h * w, c)).unwrap();
                    for b in 0..n {
                        for p in 0..h * w {
                            for ch in 0..c {
                                d4[[b, p, ch]] = g2[[b, ch]] * scale;
                            }
                        }
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let g2 = view2(g);
                let gv = self
                    .value(*gamma)
                    .view()
                    .into_dimensionality::<ndarray::Ix1>()
                    .unwrap();
                accumulate(grads, *beta, g2.sum_axis(Axis(0)).into_dyn());
                accumulate(grads, *gamma, (&g2 * xhat).sum_axis(Axis(0)).into_dyn());
                let dxhat = &g2 * &gv;
                let (n, d) = xhat.dim();
                let mut dx = Array2::zeros((n, d));
                for r in 0..n {
                    let dr = dxhat.row(r);
                    let xr = xhat.row(r);
                    let sum_d: f64 = dr.sum();
                    let sum_dx: f64 = dr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
                    for c in 0..d {
                        dx[[r, c]] = inv_std[r] / d as f64
                            * (d as f64 * dr[c] - sum_d - xr[c] * sum_dx);
                    }
                }
                accumulate(grads, *input, dx.into_dyn());
            }
            Op::SoftmaxRows(a) => {
                let y = view2(&node.value);
                let g2 = view2(g);
                let mut d = Array2::zeros(y.dim());
                for r in 0..y.nrows() {
                    let dot: f64 = y.row(r).iter().zip(g2.row(r).iter()).map(|(a, b)| a * b).sum();
                    for c in 0..y.ncols() {
                        d[[r, c]] = y[[r, c]] * (g2[[r, c]] - dot);
                    }
                }
                accumulate(grads, *a, d.into_dyn());
            }
            Op::Transpose(a) => {
                accumulate(grads, *a, owned2(view2(g).t().to_owned()));
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut d = ArrayD::zeros(x.raw_dim());
                let width = g.shape()[1];
                d.slice_mut(s![.., *start..*start + width]).assign(g);
                accumulate(grads, *a, d);
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let mut d = ArrayD::zeros(x.raw_dim());
                let rows = g.shape()[0];
                d.slice_axis_mut(Axis(0), (*start..*start + rows).into())
                    .assign(g);
                accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    let piece = g.slice(s![.., offset..offset + w]).to_owned().into_dyn();
                    accumulate(grads, *p, piece);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let r = self.value(*p).shape()[0];
                    let piece = g.slice_axis(Axis(0), (offset..offset + r).into()).to_owned();
                    accumulate(grads, *p, piece);
                    offset += r;
                }
            }
            Op::RepeatRows(a) => {
                let d = view2(g).sum_axis(Axis(0)).insert_axis(Axis(0));
                accumulate(grads, *a, d.into_dyn());
            }
            Op::BceWithLogits {
                logits,
                targets,
                pos_weight,
            } => {
                let z = self.value(*logits);
                let up = g.iter().next().copied().unwrap() / targets.len() as f64;
                let mut d = ArrayD::zeros(z.raw_dim());
                Zip::from(&mut d)
                    .and(z)
                    .and(&targets.view().into_shape_with_order(z.raw_dim()).unwrap())
                    .for_each(|d, &z, &y| {
                        let p = sigmoid(z);
                        *d = up * (pos_weight * y * (p - 1.0) + (1.0 - y) * p);
                    });
                accumulate(grads, *logits, d);
            }
            Op::WeightedSum(terms) => {
                let up = g.iter().next().copied().unwrap();
                for (v, w) in terms {
                    let shape = self.value(*v).raw_dim();
                    accumulate(grads, *v, ArrayD::from_elem(shape, up * w));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn im2col(x: &Tensor, geom: &ConvGeom) -> Array2<f64> {
    let ConvGeom {
        n,
        h,
        w,
        cin,
        k,
        stride,
        pad,
        ho,
        wo,
        ..
    } = *geom;
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let width = k * k * cin;
    let mut cols = Vec::with_capacity(n * ho * wo * width);
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        cols.resize(cols.len() + k * cin, 0.0);
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            cols.resize(cols.len() + cin, 0.0);
                        } else {
                            let s0 = ((b * h + iy as usize) * w + ix as usize) * cin;
                            cols.extend_from_slice(&src[s0..s0 + cin]);
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((n * ho * wo, width), cols).unwrap()
}

fn col2im(dcols: &Array2<f64>, geom: &ConvGeom) -> Tensor {
    let ConvGeom {
        n,
        h,
        w,
        cin,
        k,
        stride,
        pad,
        ho,
        wo,
        ..
    } = *geom;
    let dcols = dcols.as_standard_layout();
    let src = dcols.as_slice().unwrap();
    let width = k * k * cin;
    let mut out = vec![0.0; n * h * w * cin];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * width;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let d0 = ((b * h + iy as usize) * w + ix as usize) * cin;
                        let s0 = row + (ky * k + kx) * cin;
                        for c in 0..cin {
                            out[d0 + c] += src[s0 + c];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, h, w, cin]), out).unwrap()
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to any node; `None` if the node does not
    /// influence the output.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Parameter gradients in store order; unused parameters get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out = store.zeros_like();
        for (id, var) in &self.params {
            if let Some(g) = &self.grads[var.0] {
                out[id.index()].assign(g);
            }
        }
        out
    }
}
