use std::cell::{Ref, RefCell};

use super::AutodiffError;
use crate::tensor::{gemm, ShapeError, Tensor};

type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Mul(usize, usize),
    MulScalar(usize, usize),
    Scale(usize, f64),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Transpose(usize),
    Relu(usize),
    Softmax(usize),
    LogSoftmax(usize),
    RowL2Normalize(usize, f64),
    LayerNorm(usize, f64),
    Log(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, which is a topological order of
/// the computation. A tape and its variables belong to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value().shape())
    }
}

/// Gradients produced by [`Tape::backward`], one per variable that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op: if requires_grad { op } else { Op::Leaf }, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse pass from a one-element `loss`. Each recorded node is visited
    /// once, in reverse execution order; fan-out contributions add up.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            // Intermediate gradients are dropped once propagated.
            let Some(g) = grads[id].take() else { continue };
            let contributions = backward_op(&nodes, node, &g);
            for (input, delta) in contributions {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.data_mut().iter_mut().zip(delta.data()).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape(ShapeError::new(op, detail))
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Row-wise `(rows, cols)` view: leading dimensions collapse into rows.
fn row_dims(t: &Tensor) -> (usize, usize) {
    let c = t.cols();
    (if c == 0 { 0 } else { t.len() / c }, c)
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let (r, c) = row_dims(x);
    let mut out = x.data().to_vec();
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

/// Per-head attention probabilities, `heads × n × n`, for `q`, `k` of shape `(n, D)`.
pub(crate) fn attention_probs(q: &Tensor, k: &Tensor, heads: usize) -> Vec<f64> {
    let (n, d) = (q.rows(), q.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; heads * n * n];
    for h in 0..heads {
        let qh = head_columns(q, h, dh);
        let kh = head_columns(k, h, dh);
        let block = &mut probs[h * n * n..(h + 1) * n * n];
        gemm(n, dh, n, &qh, false, &kh, true, block, false);
        for i in 0..n {
            let row = &mut block[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) * scale;
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v * scale - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    probs
}

fn head_columns(x: &Tensor, head: usize, dh: usize) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(n * dh);
    for i in 0..n {
        out.extend_from_slice(&x.data()[i * d + head * dh..i * d + (head + 1) * dh]);
    }
    out
}

fn scatter_head(dst: &mut [f64], src: &[f64], n: usize, d: usize, head: usize, dh: usize) {
    for i in 0..n {
        dst[i * d + head * dh..i * d + (head + 1) * dh].copy_from_slice(&src[i * dh..(i + 1) * dh]);
    }
}

fn layer_norm_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let c = row.len() as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
    (mean, (var + eps).sqrt())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Gradient contributions of one node to its inputs.
fn backward_op(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| &nodes[i].value;
    let needs = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = (av.rows(), av.cols());
            let n = bv.cols();
            let mut out = Vec::new();
            if needs(*a) {
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, false);
                out.push((*a, Tensor::new(av.shape().to_vec(), da).unwrap()));
            }
            if needs(*b) {
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, av.data(), true, g.data(), false, &mut db, false);
                out.push((*b, Tensor::new(bv.shape().to_vec(), db).unwrap()));
            }
            out
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::AddRow(a, b) => {
            let (r, c) = row_dims(g);
            let mut db = vec![0.0; c];
            for i in 0..r {
                db.iter_mut().zip(&g.data()[i * c..(i + 1) * c]).for_each(|(d, x)| *d += x);
            }
            vec![(*a, g.clone()), (*b, Tensor::new(val(*b).shape().to_vec(), db).unwrap())]
        }
        Op::MulRow(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (r, c) = row_dims(g);
            let mut da = g.data().to_vec();
            let mut db = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    da[i * c + j] *= bv.data()[j];
                    db[j] += g.data()[i * c + j] * av.data()[i * c + j];
                }
            }
            vec![
                (*a, Tensor::new(av.shape().to_vec(), da).unwrap()),
                (*b, Tensor::new(bv.shape().to_vec(), db).unwrap()),
            ]
        }
        Op::Mul(a, b) => vec![(*a, zip_map(g, val(*b), |x, y| x * y)), (*b, zip_map(g, val(*a), |x, y| x * y))],
        Op::MulScalar(a, s) => {
            let sv = val(*s).data()[0];
            let ds: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
            vec![(*a, g.map(|x| x * sv)), (*s, Tensor::new(val(*s).shape().to_vec(), vec![ds]).unwrap())]
        }
        Op::Scale(a, f) => vec![(*a, g.map(|x| x * f))],
        Op::Concat(parts) => {
            let r = g.rows();
            let total = g.cols();
            let mut offset = 0;
            let mut out = Vec::with_capacity(parts.len());
            for &p in parts {
                let w = val(p).cols();
                let mut d = Vec::with_capacity(r * w);
                for i in 0..r {
                    d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                }
                offset += w;
                out.push((p, Tensor::new(val(p).shape().to_vec(), d).unwrap()));
            }
            out
        }
        Op::SliceCols(a, start) => {
            let av = val(*a);
            let (r, c) = row_dims(av);
            let w = g.cols();
            let mut d = vec![0.0; r * c];
            for i in 0..r {
                d[i * c + start..i * c + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
            }
            vec![(*a, Tensor::new(av.shape().to_vec(), d).unwrap())]
        }
        Op::GatherRows(a, idx) => {
            let av = val(*a);
            let c = av.cols();
            let mut d = vec![0.0; av.len()];
            for (k, &i) in idx.iter().enumerate() {
                d[i * c..(i + 1) * c].iter_mut().zip(&g.data()[k * c..(k + 1) * c]).for_each(|(x, y)| *x += y);
            }
            vec![(*a, Tensor::new(av.shape().to_vec(), d).unwrap())]
        }
        Op::Transpose(a) => vec![(*a, g.transpose().unwrap())],
        Op::Relu(a) => vec![(*a, zip_map(g, val(*a), |x, y| if y > 0.0 { x } else { 0.0 }))],
        Op::Softmax(a) => {
            let y = &node.value;
            let (r, c) = row_dims(y);
            let mut d = vec![0.0; y.len()];
            for i in 0..r {
                let (yr, gr) = (&y.data()[i * c..(i + 1) * c], &g.data()[i * c..(i + 1) * c]);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    d[i * c + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![(*a, Tensor::new(y.shape().to_vec(), d).unwrap())]
        }
        Op::LogSoftmax(a) => {
            let y = &node.value;
            let (r, c) = row_dims(y);
            let mut d = vec![0.0; y.len()];
            for i in 0..r {
                let (yr, gr) = (&y.data()[i * c..(i + 1) * c], &g.data()[i * c..(i + 1) * c]);
                let total: f64 = gr.iter().sum();
                for j in 0..c {
                    d[i * c + j] = gr[j] - yr[j].exp() * total;
                }
            }
            vec![(*a, Tensor::new(y.shape().to_vec(), d).unwrap())]
        }
        Op::RowL2Normalize(a, eps) => {
            let (x, y) = (val(*a), &node.value);
            let (r, c) = row_dims(y);
            let mut d = vec![0.0; y.len()];
            for i in 0..r {
                let xr = &x.data()[i * c..(i + 1) * c];
                let s = (xr.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                let (yr, gr) = (&y.data()[i * c..(i + 1) * c], &g.data()[i * c..(i + 1) * c]);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    d[i * c + j] = (gr[j] - yr[j] * dot) / s;
                }
            }
            vec![(*a, Tensor::new(y.shape().to_vec(), d).unwrap())]
        }
        Op::LayerNorm(a, eps) => {
            let (x, y) = (val(*a), &node.value);
            let (r, c) = row_dims(y);
            let cf = c as f64;
            let mut d = vec![0.0; y.len()];
            for i in 0..r {
                let (_, sigma) = layer_norm_stats(&x.data()[i * c..(i + 1) * c], *eps);
                let (yr, gr) = (&y.data()[i * c..(i + 1) * c], &g.data()[i * c..(i + 1) * c]);
                let mean_g = gr.iter().sum::<f64>() / cf;
                let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cf;
                for j in 0..c {
                    d[i * c + j] = (gr[j] - mean_g - yr[j] * mean_gy) / sigma;
                }
            }
            vec![(*a, Tensor::new(y.shape().to_vec(), d).unwrap())]
        }
        Op::Log(a) => vec![(*a, zip_map(g, val(*a), |x, y| x / y))],
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.data()[0]))],
        Op::Mean(a) => {
            let n = val(*a).len() as f64;
            vec![(*a, Tensor::full(val(*a).shape(), g.data()[0] / n))]
        }
        Op::RowSum(a) => {
            let av = val(*a);
            let (r, c) = row_dims(av);
            let mut d = vec![0.0; av.len()];
            for i in 0..r {
                d[i * c..(i + 1) * c].fill(g.data()[i]);
            }
            vec![(*a, Tensor::new(av.shape().to_vec(), d).unwrap())]
        }
        Op::Attention { q, k, v, heads, probs } => {
            let (qv, kv, vv) = (val(*q), val(*k), val(*v));
            let (n, d) = (qv.rows(), qv.cols());
            let dh = d / heads;
            let scale = 1.0 / (dh as f64).sqrt();
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dp = vec![0.0; n * n];
            let mut tmp = vec![0.0; n * dh];
            for h in 0..*heads {
                let p = &probs[h * n * n..(h + 1) * n * n];
                let gh = head_columns(g, h, dh);
                let vh = head_columns(vv, h, dh);
                // dV = Pᵀ dO
                gemm(n, n, dh, p, true, &gh, false, &mut tmp, false);
                scatter_head(&mut dv, &tmp, n, d, h, dh);
                // dP = dO Vᵀ, then through the row softmax into scores.
                gemm(n, dh, n, &gh, false, &vh, true, &mut dp, false);
                for i in 0..n {
                    let (pr, dr) = (&p[i * n..(i + 1) * n], &mut dp[i * n..(i + 1) * n]);
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dr[j] = pr[j] * (dr[j] - dot) * scale;
                    }
                }
                let qh = head_columns(qv, h, dh);
                let kh = head_columns(kv, h, dh);
                gemm(n, n, dh, &dp, false, &kh, false, &mut tmp, false);
                scatter_head(&mut dq, &tmp, n, d, h, dh);
                gemm(n, n, dh, &dp, true, &qh, false, &mut tmp, false);
                scatter_head(&mut dk, &tmp, n, d, h, dh);
            }
            let shape = qv.shape().to_vec();
            vec![
                (*q, Tensor::new(shape.clone(), dq).unwrap()),
                (*k, Tensor::new(shape.clone(), dk).unwrap()),
                (*v, Tensor::new(shape, dv).unwrap()),
            ]
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(&[self.id])
    }

    fn check_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(&self, other: &Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let v = self.value().matmul(&other.value())?;
        Ok(self.binary(&other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let v = {
            let (a, b) = (self.value(), other.value());
            same_shape("add", &a, &b)?;
            zip_map(&a, &b, |x, y| x + y)
        };
        Ok(self.binary(&other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let v = {
            let (a, b) = (self.value(), other.value());
            same_shape("sub", &a, &b)?;
            zip_map(&a, &b, |x, y| x - y)
        };
        Ok(self.binary(&other, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let v = {
            let (a, b) = (self.value(), other.value());
            same_shape("mul", &a, &b)?;
            zip_map(&a, &b, |x, y| x * y)
        };
        Ok(self.binary(&other, v, Op::Mul(self.id, other.id)))
    }

    fn row_broadcast(&self, other: &Var<'t>, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = (self.value(), other.value());
        let c = a.cols();
        if b.len() != c || b.rows() != 1 && b.shape().len() > 1 {
            return Err(shape_err(op, format!("row {:?} does not broadcast over {:?}", b.shape(), a.shape())));
        }
        let data = a.data().chunks(c.max(1)).flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| f(x, y))).collect();
        Ok(Tensor::new(a.shape().to_vec(), data).unwrap())
    }

    /// Adds a `(1, c)` row to every row.
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&bias);
        let v = self.row_broadcast(&bias, "add_row", |x, y| x + y)?;
        Ok(self.binary(&bias, v, Op::AddRow(self.id, bias.id)))
    }

    /// Multiplies every row elementwise by a `(1, c)` row.
    pub fn mul_row(&self, gain: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&gain);
        let v = self.row_broadcast(&gain, "mul_row", |x, y| x * y)?;
        Ok(self.binary(&gain, v, Op::MulRow(self.id, gain.id)))
    }

    /// Multiplies by a one-element variable.
    pub fn mul_scalar(&self, s: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&s);
        let v = {
            let sv = s.value();
            let Some(factor) = sv.item() else {
                return Err(shape_err("mul_scalar", format!("factor has shape {:?}", sv.shape())));
            };
            self.value().map(|x| x * factor)
        };
        Ok(self.binary(&s, v, Op::MulScalar(self.id, s.id)))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        let v = self.value().map(|x| x * factor);
        self.unary(v, Op::Scale(self.id, factor))
    }

    /// Concatenation along the last axis.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let tape = first.tape;
        let value = {
            let values: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| {
                first.check_tape(p);
                p.value()
            }).collect();
            let rows = values[0].rows();
            for v in &values {
                if v.shape().len() != 2 || v.rows() != rows {
                    return Err(shape_err("concat", format!("{:?} vs {rows} rows", v.shape())));
                }
            }
            let total: usize = values.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * total);
            for i in 0..rows {
                for v in &values {
                    data.extend_from_slice(v.row(i));
                }
            }
            Tensor::matrix(rows, total, data)?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.requires(&ids);
        Ok(tape.push(value, Op::Concat(ids), rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (r, c) = a.dims2("slice_cols")?;
            if start > end || end > c {
                return Err(shape_err("slice_cols", format!("{start}..{end} of {c} columns")));
            }
            let mut data = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                data.extend_from_slice(&a.row(i)[start..end]);
            }
            Tensor::matrix(r, end - start, data)?
        };
        Ok(self.unary(v, Op::SliceCols(self.id, start)))
    }

    /// Rows `idx` of a matrix, in order; repeats allowed.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (r, _) = a.dims2("gather_rows")?;
            if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
                return Err(shape_err("gather_rows", format!("row {bad} of {r}")));
            }
            a.gather_rows(idx)
        };
        Ok(self.unary(v, Op::GatherRows(self.id, idx.to_vec())))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let v = self.value().transpose()?;
        Ok(self.unary(v, Op::Transpose(self.id)))
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&self) -> Var<'t> {
        let v = self.value().map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(v, Op::Relu(self.id))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Var<'t> {
        let v = softmax_rows(&self.value());
        self.unary(v, Op::Softmax(self.id))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self) -> Var<'t> {
        let v = {
            let x = self.value();
            let (r, c) = row_dims(&x);
            let mut out = x.data().to_vec();
            for i in 0..r {
                let row = &mut out[i * c..(i + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|v| *v -= lse);
            }
            Tensor::new(x.shape().to_vec(), out).unwrap()
        };
        self.unary(v, Op::LogSoftmax(self.id))
    }

    /// Each row divided by `sqrt(‖row‖² + eps)`.
    pub fn row_l2_normalize(&self, eps: f64) -> Var<'t> {
        let v = {
            let x = self.value();
            let (r, c) = row_dims(&x);
            let mut out = x.data().to_vec();
            for i in 0..r {
                let row = &mut out[i * c..(i + 1) * c];
                let s = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                row.iter_mut().for_each(|v| *v /= s);
            }
            Tensor::new(x.shape().to_vec(), out).unwrap()
        };
        self.unary(v, Op::RowL2Normalize(self.id, eps))
    }

    /// Standardizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&self, eps: f64) -> Var<'t> {
        let v = {
            let x = self.value();
            let (r, c) = row_dims(&x);
            let mut out = x.data().to_vec();
            for i in 0..r {
                let row = &mut out[i * c..(i + 1) * c];
                let (mean, sigma) = layer_norm_stats(row, eps);
                row.iter_mut().for_each(|v| *v = (*v - mean) / sigma);
            }
            Tensor::new(x.shape().to_vec(), out).unwrap()
        };
        self.unary(v, Op::LayerNorm(self.id, eps))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        let v = {
            let x = self.value();
            if let Some(&bad) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                return Err(AutodiffError::LogDomain(bad));
            }
            x.map(f64::ln)
        };
        Ok(self.unary(v, Op::Log(self.id)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Var<'t> {
        let v = Tensor::scalar(self.value().data().iter().sum());
        self.unary(v, Op::Sum(self.id))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&self) -> Result<Var<'t>> {
        let v = {
            let x = self.value();
            if x.is_empty() {
                return Err(shape_err("mean", "empty tensor".into()));
            }
            Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
        };
        Ok(self.unary(v, Op::Mean(self.id)))
    }

    /// Sum over the last axis, shape `(rows, 1)`.
    pub fn row_sum(&self) -> Var<'t> {
        let v = {
            let x = self.value();
            let (r, c) = row_dims(&x);
            let data: Vec<f64> = (0..r).map(|i| x.data()[i * c..(i + 1) * c].iter().sum()).collect();
            Tensor::matrix(r, 1, data).unwrap()
        };
        self.unary(v, Op::RowSum(self.id))
    }

    /// Multi-head scaled dot-product attention over the rows of `q`, `k`, `v`
    /// (all `(n, D)`, `D` divisible by `heads`). Output is `(n, D)` with head
    /// outputs laid side by side.
    pub fn attention(q: Var<'t>, k: Var<'t>, v: Var<'t>, heads: usize) -> Result<Var<'t>> {
        q.check_tape(&k);
        q.check_tape(&v);
        let tape = q.tape;
        let (value, probs) = {
            let (qv, kv, vv) = (q.value(), k.value(), v.value());
            let (n, d) = qv.dims2("attention")?;
            if kv.shape() != qv.shape() || vv.shape() != qv.shape() {
                return Err(shape_err("attention", format!("{:?} {:?} {:?}", qv.shape(), kv.shape(), vv.shape())));
            }
            if heads == 0 || d % heads != 0 {
                return Err(shape_err("attention", format!("width {d} not divisible into {heads} heads")));
            }
            if n == 0 {
                return Err(shape_err("attention", "empty batch".into()));
            }
            let dh = d / heads;
            let probs = attention_probs(&qv, &kv, heads);
            let mut out = vec![0.0; n * d];
            let mut tmp = vec![0.0; n * dh];
            for h in 0..heads {
                let vh = head_columns(&vv, h, dh);
                gemm(n, n, dh, &probs[h * n * n..(h + 1) * n * n], false, &vh, false, &mut tmp, false);
                scatter_head(&mut out, &tmp, n, d, h, dh);
            }
            (Tensor::matrix(n, d, out)?, probs)
        };
        let rg = tape.requires(&[q.id, k.id, v.id]);
        let probs = if rg { probs } else { Vec::new() };
        Ok(tape.push(value, Op::Attention { q: q.id, k: k.id, v: v.id, heads, probs }, rg))
    }
}
