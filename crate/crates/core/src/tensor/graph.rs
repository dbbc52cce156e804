//! Define-by-run tape. Each op appends a node holding its forward value;
//! [`Graph::backward`] walks the nodes in reverse.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// The differentiable operations the tape knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv2d,
    Relu,
    MaxPool2,
    Upsample2,
    Concat,
    Slice,
    Scale,
    Mse,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Conv2d,
        OpKind::Relu,
        OpKind::MaxPool2,
        OpKind::Upsample2,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Scale,
        OpKind::Mse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::Relu => "relu",
            OpKind::MaxPool2 => "maxpool2",
            OpKind::Upsample2 => "upsample_nearest2",
            OpKind::Concat => "concat_channels",
            OpKind::Slice => "slice_channels",
            OpKind::Scale => "scale",
            OpKind::Mse => "mse",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    Relu { x: Var },
    MaxPool2 { x: Var, arg: Vec<usize> },
    Upsample2 { x: Var },
    Concat { a: Var, b: Var },
    Slice { x: Var, start: usize },
    Scale { x: Var, s: T },
    Mse { pred: Var, target: Var, exact: f64 },
}

impl<T> Op<T> {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Relu { .. } => OpKind::Relu,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::Upsample2 { .. } => OpKind::Upsample2,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Scale { .. } => OpKind::Scale,
            Op::Mse { .. } => OpKind::Mse,
        })
    }
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode tape over [`Tensor`] values.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite<T: Real>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Test hook: scales every adjoint produced by `kind` by 1.25 so that a
    /// gradient check must notice.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Adds an input tensor. It collects gradients iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Result<Var> {
        check_finite("leaf", t.data())?;
        let needs = t.requires_grad;
        Ok(self.push(t, Op::Leaf, needs))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    /// Moves a node's tensor out of the graph, leaving an empty tensor behind.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(
            &mut self.nodes[v.0].value,
            Tensor::zeros(Shape::new(0, 0, 0, 0)),
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Zero-padded cross-correlation without bias. Weight layout is
    /// `(out_ch, in_ch / groups, k, k)`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if groups == 0 || stride == 0 {
            return Err(Error::shape("conv2d", "groups and stride must be positive"));
        }
        if !xs.c.is_multiple_of(groups) {
            return Err(Error::shape(
                "conv2d",
                format!("in_channels {} not divisible by groups {groups}", xs.c),
            ));
        }
        if !ws.n.is_multiple_of(groups) {
            return Err(Error::shape(
                "conv2d",
                format!("out_channels {} not divisible by groups {groups}", ws.n),
            ));
        }
        if ws.c != xs.c / groups {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "weight in_channels {} != in_channels/groups {}",
                    ws.c,
                    xs.c / groups
                ),
            ));
        }
        if ws.h != ws.w {
            return Err(Error::shape(
                "conv2d",
                format!("kernel height {} != kernel width {}", ws.h, ws.w),
            ));
        }
        if xs.h + 2 * pad < ws.h || xs.w + 2 * pad < ws.w {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {} larger than padded input {}x{}", ws.h, xs.h, xs.w),
            ));
        }
        let geom = ConvGeom {
            input: xs,
            out_c: ws.n,
            k: ws.h,
            stride,
            pad,
            groups,
        };
        let y = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        check_finite("conv2d", &y)?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(
            Tensor::from_vec_unchecked(geom.output(), y),
            Op::Conv2d { x, w, geom },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v
            .data()
            .iter()
            .map(|&a| if a > T::zero() { a } else { T::zero() })
            .collect();
        let t = Tensor::from_vec_unchecked(v.shape(), data);
        let needs = self.needs(x);
        self.push(t, Op::Relu { x }, needs)
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
            return Err(Error::shape(
                "maxpool2",
                format!("spatial dims {}x{} must be even", s.h, s.w),
            ));
        }
        let (y, arg) = kernels::maxpool2_forward(self.value(x).data(), s);
        let t = Tensor::from_vec_unchecked(Shape::new(s.n, s.c, s.h / 2, s.w / 2), y);
        let needs = self.needs(x);
        Ok(self.push(t, Op::MaxPool2 { x, arg }, needs))
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let y = kernels::upsample2_forward(self.value(x).data(), s);
        let t = Tensor::from_vec_unchecked(Shape::new(s.n, s.c, 2 * s.h, 2 * s.w), y);
        let needs = self.needs(x);
        self.push(t, Op::Upsample2 { x }, needs)
    }

    /// Channel concatenation, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
            return Err(Error::shape(
                "concat_channels",
                format!("{sa} vs {sb}: batch and spatial dims must agree"),
            ));
        }
        let out = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
        let mut data = Vec::with_capacity(out.numel());
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for n in 0..sa.n {
            data.extend_from_slice(&da[n * pa..(n + 1) * pa]);
            data.extend_from_slice(&db[n * pb..(n + 1) * pb]);
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::from_vec_unchecked(out, data),
            Op::Concat { a, b },
            needs,
        ))
    }

    /// Channels `start..start + len` of every sample.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if start + len > s.c {
            return Err(Error::shape(
                "slice_channels",
                format!("channels {start}..{} out of {}", start + len, s.c),
            ));
        }
        let out = Shape::new(s.n, len, s.h, s.w);
        let p = s.plane();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(out.numel());
        for n in 0..s.n {
            let base = (n * s.c + start) * p;
            data.extend_from_slice(&src[base..base + len * p]);
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::from_vec_unchecked(out, data),
            Op::Slice { x, start },
            needs,
        ))
    }

    /// Multiplies every element by `s`. `s == 0` yields exact `+0.0`.
    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        if !s.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        let v = self.value(x);
        let data = if s == T::zero() {
            vec![T::zero(); v.numel()]
        } else {
            v.data().iter().map(|&a| a * s).collect()
        };
        check_finite("scale", &data)?;
        let t = Tensor::from_vec_unchecked(v.shape(), data);
        let needs = self.needs(x);
        Ok(self.push(t, Op::Scale { x, s }, needs))
    }

    /// Mean squared error as a `1x1x1x1` scalar node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(Error::shape("mse", format!("pred {sp} vs target {st}")));
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let sum: f64 = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum();
        let mean = if p.is_empty() {
            0.0
        } else {
            sum / p.len() as f64
        };
        if !mean.is_finite() {
            return Err(Error::NonFinite("mse"));
        }
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(
            Tensor::from_vec_unchecked(Shape::new(1, 1, 1, 1), vec![T::from_f64(mean)]),
            Op::Mse {
                pred,
                target,
                exact: mean,
            },
            needs,
        ))
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    /// Like [`Graph::scalar`], but an `mse` node reports its loss before
    /// rounding to `T`.
    pub fn scalar_f64(&self, v: Var) -> f64 {
        match self.nodes[v.0].op {
            Op::Mse { exact, .. } => exact,
            _ => self.scalar(v).as_f64(),
        }
    }

    /// Fingerprint of every piecewise-linear branch taken in the forward
    /// pass: ReLU input signs and max-pool winners. Two evaluations with the
    /// same fingerprint lie in the same smooth region.
    pub fn activation_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for &a in self.value(*x).data() {
                        (a > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool2 { arg, .. } => arg.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse pass from a scalar node. Leaf gradients accumulate across
    /// calls until cleared with [`Tensor::zero_grad`] or a fresh graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {}", self.shape(loss)),
            ));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            let mut contribs: Vec<(Var, Vec<T>)> = Vec::new();
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, w, geom } => {
                    let (dx, dw) = kernels::conv2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &g,
                        geom,
                        self.needs(*x),
                        self.needs(*w),
                    );
                    if let Some(dx) = dx {
                        contribs.push((*x, dx));
                    }
                    if let Some(dw) = dw {
                        contribs.push((*w, dw));
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let dx = g
                        .iter()
                        .zip(xv)
                        .map(|(&d, &a)| if a > T::zero() { d } else { T::zero() })
                        .collect();
                    contribs.push((*x, dx));
                }
                Op::MaxPool2 { x, arg } => {
                    let n = self.value(*x).numel();
                    contribs.push((*x, kernels::maxpool2_backward(&g, arg, n)));
                }
                Op::Upsample2 { x } => {
                    let s = self.shape(*x);
                    contribs.push((*x, kernels::upsample2_backward(&g, s)));
                }
                Op::Concat { a, b } => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
                    let mut ga = Vec::with_capacity(sa.numel());
                    let mut gb = Vec::with_capacity(sb.numel());
                    for n in 0..sa.n {
                        let base = n * (pa + pb);
                        ga.extend_from_slice(&g[base..base + pa]);
                        gb.extend_from_slice(&g[base + pa..base + pa + pb]);
                    }
                    if self.needs(*a) {
                        contribs.push((*a, ga));
                    }
                    if self.needs(*b) {
                        contribs.push((*b, gb));
                    }
                }
                Op::Slice { x, start } => {
                    let s = self.shape(*x);
                    let len = self.nodes[i].value.shape().c;
                    let p = s.plane();
                    let mut dx = vec![T::zero(); s.numel()];
                    for n in 0..s.n {
                        let base = (n * s.c + start) * p;
                        dx[base..base + len * p]
                            .copy_from_slice(&g[n * len * p..(n + 1) * len * p]);
                    }
                    contribs.push((*x, dx));
                }
                Op::Scale { x, s } => {
                    let s = *s;
                    contribs.push((*x, g.iter().map(|&d| d * s).collect()));
                }
                Op::Mse { pred, target, .. } => {
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    let k = g[0] * T::from_f64(2.0 / p.len().max(1) as f64);
                    let dp: Vec<T> = p.iter().zip(t).map(|(&a, &b)| (a - b) * k).collect();
                    if self.needs(*target) {
                        contribs.push((*target, dp.iter().map(|&v| -v).collect()));
                    }
                    if self.needs(*pred) {
                        contribs.push((*pred, dp));
                    }
                }
            }
            let faulty = self.fault.is_some() && self.nodes[i].op.kind() == self.fault;
            for (v, mut d) in contribs {
                if !self.needs(v) {
                    continue;
                }
                if faulty {
                    let f = T::from_f64(1.25);
                    d.iter_mut().for_each(|a| *a = *a * f);
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a = *a + *b),
                    slot @ None => *slot = Some(d),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn conv2d_hand_dot_product() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let w = g
            .leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let y = g.conv2d(x, w, 1, 0, 1).unwrap();
        assert_eq!(g.shape(y), Shape::new(1, 1, 1, 1));
        assert_eq!(g.value(y).data(), &[5.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(Shape::new(1, 1, 3, 4), &data)).unwrap();
        let w = g.leaf(t(Shape::new(1, 1, 1, 1), &[1.0])).unwrap();
        let y = g.conv2d(x, w, 1, 0, 1).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn grouped_conv_scales_each_channel() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(
                Shape::new(1, 2, 2, 2),
                &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            ))
            .unwrap();
        let w = g.leaf(t(Shape::new(2, 1, 1, 1), &[2.0, 3.0])).unwrap();
        let y = g.conv2d(x, w, 1, 0, 2).unwrap();
        assert_eq!(
            g.value(y).data(),
            &[2.0, 4.0, 6.0, 8.0, 15.0, 18.0, 21.0, 24.0]
        );
    }

    #[test]
    fn conv2d_output_size_formula() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros(Shape::new(2, 3, 9, 7))).unwrap();
        let w = g.leaf(Tensor::zeros(Shape::new(4, 3, 3, 3))).unwrap();
        let y = g.conv2d(x, w, 2, 1, 1).unwrap();
        assert_eq!(g.shape(y), Shape::new(2, 4, 5, 4));
    }

    #[test]
    fn conv2d_rejects_bad_groups() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 3, 4, 4))).unwrap();
        let w = g.leaf(Tensor::zeros(Shape::new(4, 1, 3, 3))).unwrap();
        let err = g.conv2d(x, w, 1, 1, 2).unwrap_err().to_string();
        assert!(err.contains("in_channels 3"), "{err}");
        let w = g.leaf(Tensor::zeros(Shape::new(3, 1, 3, 3))).unwrap();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 2, 4, 4))).unwrap();
        let err = g.conv2d(x, w, 1, 1, 2).unwrap_err().to_string();
        assert!(err.contains("out_channels 3"), "{err}");
        let w = g.leaf(Tensor::zeros(Shape::new(2, 2, 3, 3))).unwrap();
        let err = g.conv2d(x, w, 1, 1, 2).unwrap_err().to_string();
        assert!(err.contains("weight in_channels"), "{err}");
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(Shape::new(1, 1, 1, 3), &[-1.0, 0.0, 2.0]))
            .unwrap();
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let x = g.leaf(Tensor::full(Shape::new(1, 2, 3, 3), -0.5)).unwrap();
        let y = g.relu(x);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_and_upsample() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let p = g.maxpool2(x).unwrap();
        assert_eq!(g.value(p).data(), &[4.0]);
        let x = g.leaf(t(Shape::new(1, 1, 1, 1), &[5.0])).unwrap();
        let u = g.upsample2(x);
        assert_eq!(g.value(u).data(), &[5.0; 4]);
        let x = g.leaf(Tensor::zeros(Shape::new(1, 1, 3, 4))).unwrap();
        assert!(g.maxpool2(x).is_err());
    }

    #[test]
    fn pool_then_upsample_restores_constants() {
        for c in [-3.0, 0.0, 1.5] {
            for (h, w) in [(2, 2), (4, 6), (8, 8)] {
                let mut g = Graph::<f64>::new();
                let x = g.leaf(Tensor::full(Shape::new(2, 3, h, w), c)).unwrap();
                let p = g.maxpool2(x).unwrap();
                let u = g.upsample2(p);
                assert_eq!(g.value(u), g.value(x));
            }
        }
    }

    #[test]
    fn concat_order_and_empty() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(t(Shape::new(1, 2, 1, 1), &[1.0, 2.0])).unwrap();
        let b = g.leaf(t(Shape::new(1, 3, 1, 1), &[3.0, 4.0, 5.0])).unwrap();
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let e = g.leaf(Tensor::zeros(Shape::new(1, 0, 1, 1))).unwrap();
        let c = g.concat_channels(a, e).unwrap();
        assert_eq!(g.value(c), g.value(a));
        let bad = g.leaf(Tensor::zeros(Shape::new(1, 1, 2, 1))).unwrap();
        assert!(g.concat_channels(a, bad).is_err());
    }

    #[test]
    fn scale_cases() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(Shape::new(1, 1, 1, 2), &[3.0, 6.0])).unwrap();
        let y = g.scale(x, 2.0 / 3.0).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 4.0]);
        let y = g.scale(x, 1.0).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 6.0]);
        let n = g.leaf(t(Shape::new(1, 1, 1, 2), &[-3.0, 6.0])).unwrap();
        let y = g.scale(n, 0.0).unwrap();
        assert!(g.value(y).data().iter().all(|v| v.to_bits() == 0));
        assert!(g.scale(x, f64::NAN).is_err());
        assert!(g.scale(x, f64::INFINITY).is_err());
    }

    #[test]
    fn mse_values_and_grad() {
        let mut g = Graph::<f64>::new();
        let p = g
            .leaf(t(Shape::new(1, 1, 1, 2), &[0.0, 0.0]).with_grad())
            .unwrap();
        let q = g.leaf(t(Shape::new(1, 1, 1, 2), &[2.0, 0.0])).unwrap();
        let l = g.mse(p, q).unwrap();
        assert_eq!(g.scalar(l), 2.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[-2.0, 0.0]);
        assert!(g.grad(q).is_none());
        let l0 = g.mse(q, q).unwrap();
        assert_eq!(g.scalar(l0), 0.0);
        let bad = g.leaf(Tensor::zeros(Shape::new(1, 1, 2, 1))).unwrap();
        assert!(g.mse(p, bad).is_err());
    }

    #[test]
    fn chain_rule_scale_mse() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(Shape::new(1, 1, 1, 1), &[1.0]).with_grad())
            .unwrap();
        let y = g.scale(x, 3.0).unwrap();
        let z = g.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1))).unwrap();
        let l = g.mse(y, z).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[18.0]);
        // a second pass accumulates
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[36.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f32>::new();
        let x = g
            .leaf(Tensor::zeros(Shape::new(1, 1, 1, 2)).with_grad())
            .unwrap();
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn leaf_rejects_nan() {
        let mut g = Graph::<f32>::new();
        let mut t = Tensor::zeros(Shape::new(1, 1, 1, 2));
        t.data_mut()[1] = f32::NAN;
        assert!(matches!(g.leaf(t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn relu_grad_at_probe_points() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(t(Shape::new(1, 1, 1, 2), &[2.0, -1.0]).with_grad())
            .unwrap();
        let y = g.relu(x);
        let z = g.leaf(Tensor::zeros(Shape::new(1, 1, 1, 2))).unwrap();
        let l = g.mse(y, z).unwrap();
        g.backward(l).unwrap();
        // d/dx mean(relu(x)^2) = relu(x) * relu'(x)
        assert_eq!(g.grad(x).unwrap(), &[2.0, 0.0]);
    }
}
