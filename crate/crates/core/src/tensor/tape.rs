//! Reverse-mode differentiation tape.

use super::conv::{conv_backward, conv_forward, ConvSpec};
use super::{softmax_into, squash_into, Tensor, TensorError};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One recorded operation: its output value plus what it needs to push
/// gradients back to its inputs.
enum Op {
    Leaf,
    Add { lhs: usize, rhs: usize },
    Mul { lhs: usize, rhs: usize },
    Scale { input: usize, factor: f64 },
    Relu { input: usize },
    Reshape { input: usize },
    CapsuleReshape { input: usize, maps: usize, dim: usize },
    ReduceSum { input: usize },
    Softmax { input: usize, axis: usize },
    NormAlongAxis { input: usize, axis: usize },
    Conv { input: usize, weights: usize, bias: usize, spec: ConvSpec },
    CapsuleTransform { input: usize, weights: usize },
    ClassMix { preds: usize, coeffs: Tensor },
    SquashRows { input: usize },
    HingeLoss { input: usize, true_class: usize },
    LogCoshLoss { input: usize, target: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the swept output w.r.t. `var`, if `var` influenced it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

/// Records operations in execution order; the backward pass replays them in
/// exact reverse, accumulating gradients additively when a tensor feeds
/// several consumers.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input tensor (parameter or data).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Value of a recorded tensor.
    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, var: Var) -> Result<(), TensorError> {
        if var.0 >= self.nodes.len() {
            return Err(TensorError::TapeMissing { index: var.0 });
        }
        Ok(())
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        self.check(lhs)?;
        self.check(rhs)?;
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(TensorError::shape(
                "add",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let mut out = a.clone();
        out.add_assign(b);
        Ok(self.push(out, Op::Add { lhs: lhs.0, rhs: rhs.0 }))
    }

    /// Elementwise (Hadamard) product of two same-shape tensors.
    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        self.check(lhs)?;
        self.check(rhs)?;
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(TensorError::shape(
                "mul",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        Ok(self.push(out, Op::Mul { lhs: lhs.0, rhs: rhs.0 }))
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        let data = a.data().iter().map(|x| x * factor).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        Ok(self.push(out, Op::Scale { input: input.0, factor }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        let data = a.data().iter().map(|&x| x.max(0.0)).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        Ok(self.push(out, Op::Relu { input: input.0 }))
    }

    /// Same values under a new shape; gradient is the inverse reshape.
    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.check(input)?;
        let out = self.value(input).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape { input: input.0 }))
    }

    /// Regroup a feature-map stack [maps * dim, spatial...] into capsule
    /// vectors [maps * prod(spatial), dim]: capsule (m, p) takes its d-th
    /// component from channel m * dim + d at spatial position p.
    pub fn capsule_reshape(&mut self, input: Var, maps: usize, dim: usize) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        if a.rank() < 2 || a.shape()[0] != maps * dim {
            return Err(TensorError::shape(
                "capsule_reshape",
                format!("{:?} into {maps} maps of dim {dim}", a.shape()),
            ));
        }
        let spatial: usize = a.shape()[1..].iter().product();
        let mut out = Tensor::zeros(&[maps * spatial, dim]);
        let src = a.data();
        let dst = out.data_mut();
        for m in 0..maps {
            for d in 0..dim {
                let channel = (m * dim + d) * spatial;
                for p in 0..spatial {
                    dst[(m * spatial + p) * dim + d] = src[channel + p];
                }
            }
        }
        Ok(self.push(out, Op::CapsuleReshape { input: input.0, maps, dim }))
    }

    /// Sum of all elements, as a scalar.
    pub fn reduce_sum(&mut self, input: Var) -> Result<Var, TensorError> {
        self.check(input)?;
        let total: f64 = self.value(input).data().iter().sum();
        Ok(self.push(Tensor::scalar(total), Op::ReduceSum { input: input.0 }))
    }

    /// Softmax along `axis`, max-subtracted for stability.
    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        if axis >= a.rank() {
            return Err(TensorError::shape(
                "softmax",
                format!("axis {axis} out of range for {:?}", a.shape()),
            ));
        }
        let mut out = Tensor::zeros(a.shape());
        softmax_into(a.data(), a.shape(), axis, out.data_mut());
        Ok(self.push(out, Op::Softmax { input: input.0, axis }))
    }

    /// Euclidean norm along `axis`; output drops that axis.
    pub fn norm_along_axis(&mut self, input: Var, axis: usize) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        if axis >= a.rank() {
            return Err(TensorError::shape(
                "norm_along_axis",
                format!("axis {axis} out of range for {:?}", a.shape()),
            ));
        }
        let mut out_shape = a.shape().to_vec();
        out_shape.remove(axis);
        let mut out = Tensor::zeros(&out_shape);
        let (lane, inner, outer) = lane_dims(a.shape(), axis);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * lane * inner + i;
                let sum_sq: f64 = (0..lane)
                    .map(|k| {
                        let v = a.data()[base + k * inner];
                        v * v
                    })
                    .sum();
                out.data_mut()[o * inner + i] = sum_sq.sqrt();
            }
        }
        Ok(self.push(out, Op::NormAlongAxis { input: input.0, axis }))
    }

    /// Strided valid convolution with bias, 2 or 3 spatial dims.
    pub fn conv(
        &mut self,
        input: Var,
        weights: Var,
        bias: Var,
        spec: &ConvSpec,
    ) -> Result<Var, TensorError> {
        self.check(input)?;
        self.check(weights)?;
        self.check(bias)?;
        let out = conv_forward(self.value(input), self.value(weights), self.value(bias), spec)?;
        Ok(self.push(
            out,
            Op::Conv {
                input: input.0,
                weights: weights.0,
                bias: bias.0,
                spec: *spec,
            },
        ))
    }

    /// Per-capsule affine predictions: u [N, Din] with weights
    /// [N, K, Dout, Din] gives predictions [N, K, Dout], one Dout-vector per
    /// (capsule, class) pair.
    pub fn capsule_transform(&mut self, input: Var, weights: Var) -> Result<Var, TensorError> {
        self.check(input)?;
        self.check(weights)?;
        let u = self.value(input);
        let w = self.value(weights);
        if u.rank() != 2 || w.rank() != 4 || w.shape()[0] != u.shape()[0] || w.shape()[3] != u.shape()[1]
        {
            return Err(TensorError::shape(
                "capsule_transform",
                format!("input {:?} with weights {:?}", u.shape(), w.shape()),
            ));
        }
        let (n, din) = (u.shape()[0], u.shape()[1]);
        let (k, dout) = (w.shape()[1], w.shape()[2]);
        let mut out = Tensor::zeros(&[n, k, dout]);
        let ud = u.data();
        let wd = w.data();
        let od = out.data_mut();
        for i in 0..n {
            for j in 0..k {
                for d in 0..dout {
                    let w_row = ((i * k + j) * dout + d) * din;
                    let mut acc = 0.0;
                    for e in 0..din {
                        acc += wd[w_row + e] * ud[i * din + e];
                    }
                    od[(i * k + j) * dout + d] = acc;
                }
            }
        }
        Ok(self.push(
            out,
            Op::CapsuleTransform {
                input: input.0,
                weights: weights.0,
            },
        ))
    }

    /// Coupling-weighted sum over child capsules: predictions [N, K, D] with
    /// constant coefficients [N, K] give parent inputs [K, D]. The
    /// coefficients are treated as constants for differentiation.
    pub fn class_mix(&mut self, preds: Var, coeffs: &Tensor) -> Result<Var, TensorError> {
        self.check(preds)?;
        let p = self.value(preds);
        if p.rank() != 3 || coeffs.shape() != &p.shape()[..2] {
            return Err(TensorError::shape(
                "class_mix",
                format!("predictions {:?} with coefficients {:?}", p.shape(), coeffs.shape()),
            ));
        }
        let (n, k, d) = (p.shape()[0], p.shape()[1], p.shape()[2]);
        let mut out = Tensor::zeros(&[k, d]);
        let pd = p.data();
        let cd = coeffs.data();
        let od = out.data_mut();
        for i in 0..n {
            for j in 0..k {
                let c = cd[i * k + j];
                let row = (i * k + j) * d;
                for e in 0..d {
                    od[j * d + e] += c * pd[row + e];
                }
            }
        }
        Ok(self.push(
            out,
            Op::ClassMix {
                preds: preds.0,
                coeffs: coeffs.clone(),
            },
        ))
    }

    /// Squash applied to each row of an [N, D] tensor.
    pub fn squash_rows(&mut self, input: Var) -> Result<Var, TensorError> {
        self.check(input)?;
        let a = self.value(input);
        if a.rank() != 2 {
            return Err(TensorError::shape(
                "squash_rows",
                format!("expected [N, D], got {:?}", a.shape()),
            ));
        }
        let d = a.shape()[1];
        let mut out = Tensor::zeros(a.shape());
        for (row_in, row_out) in a.data().chunks_exact(d).zip(out.data_mut().chunks_exact_mut(d)) {
            squash_into(row_in, row_out);
        }
        Ok(self.push(out, Op::SquashRows { input: input.0 }))
    }

    /// Categorical hinge: max(0, 1 + best incorrect score - correct score).
    pub fn hinge_loss(&mut self, scores: Var, true_class: usize) -> Result<Var, TensorError> {
        self.check(scores)?;
        let s = self.value(scores);
        if s.rank() != 1 || s.len() < 2 || true_class >= s.len() {
            return Err(TensorError::shape(
                "hinge_loss",
                format!("scores {:?} with true class {true_class}", s.shape()),
            ));
        }
        let (best_wrong, _) = best_incorrect(s.data(), true_class);
        let loss = (1.0 + best_wrong - s.data()[true_class]).max(0.0);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::HingeLoss {
                input: scores.0,
                true_class,
            },
        ))
    }

    /// Sum of log(cosh(score - target)) over classes, evaluated stably as
    /// |x| + log1p(exp(-2|x|)) - log 2.
    pub fn logcosh_loss(&mut self, scores: Var, target: &Tensor) -> Result<Var, TensorError> {
        self.check(scores)?;
        let s = self.value(scores);
        if s.shape() != target.shape() || s.rank() != 1 {
            return Err(TensorError::shape(
                "logcosh_loss",
                format!("scores {:?} with target {:?}", s.shape(), target.shape()),
            ));
        }
        let loss: f64 = s
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| stable_logcosh(a - b))
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::LogCoshLoss {
                input: scores.0,
                target: target.clone(),
            },
        ))
    }

    /// Reverse sweep from a scalar output.
    ///
    /// Visits nodes in exact reverse recording order; a node's gradient is
    /// complete before it propagates to its inputs because inputs always
    /// precede their consumers on the tape.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        self.check(output)?;
        if self.value(output).len() != 1 {
            return Err(TensorError::shape(
                "backward",
                format!("output must be scalar, got {:?}", self.value(output).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed_shape = self.value(output).shape().to_vec();
        grads[output.0] = Some(Tensor::from_vec(&seed_shape, vec![1.0])?);

        for i in (0..=output.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            self.propagate(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, index: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[index];
        match &node.op {
            Op::Leaf => {}
            Op::Add { lhs, rhs } => {
                ensure(grads, *lhs, self.nodes[*lhs].value.shape()).add_assign(gout);
                ensure(grads, *rhs, self.nodes[*rhs].value.shape()).add_assign(gout);
            }
            Op::Mul { lhs, rhs } => {
                let (a, b) = (&self.nodes[*lhs].value, &self.nodes[*rhs].value);
                {
                    let ga = ensure(grads, *lhs, a.shape());
                    for ((g, u), bv) in ga.data_mut().iter_mut().zip(gout.data()).zip(b.data()) {
                        *g += u * bv;
                    }
                }
                let gb = ensure(grads, *rhs, b.shape());
                for ((g, u), av) in gb.data_mut().iter_mut().zip(gout.data()).zip(a.data()) {
                    *g += u * av;
                }
            }
            Op::Scale { input, factor } => {
                let g = ensure(grads, *input, self.nodes[*input].value.shape());
                for (gi, u) in g.data_mut().iter_mut().zip(gout.data()) {
                    *gi += u * factor;
                }
            }
            Op::Relu { input } => {
                let x = &self.nodes[*input].value;
                let g = ensure(grads, *input, x.shape());
                for ((gi, u), xv) in g.data_mut().iter_mut().zip(gout.data()).zip(x.data()) {
                    if *xv > 0.0 {
                        *gi += u;
                    }
                }
            }
            Op::Reshape { input } => {
                let g = ensure(grads, *input, self.nodes[*input].value.shape());
                for (gi, u) in g.data_mut().iter_mut().zip(gout.data()) {
                    *gi += u;
                }
            }
            Op::CapsuleReshape { input, maps, dim } => {
                let x = &self.nodes[*input].value;
                let spatial: usize = x.shape()[1..].iter().product();
                let g = ensure(grads, *input, x.shape());
                for m in 0..*maps {
                    for d in 0..*dim {
                        let channel = (m * dim + d) * spatial;
                        for p in 0..spatial {
                            g.data_mut()[channel + p] +=
                                gout.data()[(m * spatial + p) * dim + d];
                        }
                    }
                }
            }
            Op::ReduceSum { input } => {
                let u = gout.item();
                let g = ensure(grads, *input, self.nodes[*input].value.shape());
                for gi in g.data_mut() {
                    *gi += u;
                }
            }
            Op::Softmax { input, axis } => {
                let y = &node.value;
                let (lane, inner, outer) = lane_dims(y.shape(), *axis);
                let g = ensure(grads, *input, y.shape());
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * lane * inner + i;
                        let dot: f64 = (0..lane)
                            .map(|k| gout.data()[base + k * inner] * y.data()[base + k * inner])
                            .sum();
                        for k in 0..lane {
                            let at = base + k * inner;
                            g.data_mut()[at] += y.data()[at] * (gout.data()[at] - dot);
                        }
                    }
                }
            }
            Op::NormAlongAxis { input, axis } => {
                let x = &self.nodes[*input].value;
                let (lane, inner, outer) = lane_dims(x.shape(), *axis);
                let g = ensure(grads, *input, x.shape());
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * lane * inner + i;
                        let norm = node.value.data()[o * inner + i];
                        if norm == 0.0 {
                            continue;
                        }
                        let u = gout.data()[o * inner + i];
                        for k in 0..lane {
                            let at = base + k * inner;
                            g.data_mut()[at] += u * x.data()[at] / norm;
                        }
                    }
                }
            }
            Op::Conv {
                input,
                weights,
                bias,
                spec,
            } => {
                let x = &self.nodes[*input].value;
                let w = &self.nodes[*weights].value;
                // Make sure all three accumulators exist before split borrows.
                ensure(grads, *input, x.shape());
                ensure(grads, *weights, w.shape());
                ensure(grads, *bias, self.nodes[*bias].value.shape());
                let (gx, gw, gb) = three_grads(grads, *input, *weights, *bias);
                conv_backward(x, w, spec, gout, gx, gw, gb);
            }
            Op::CapsuleTransform { input, weights } => {
                let u = &self.nodes[*input].value;
                let w = &self.nodes[*weights].value;
                let (n, din) = (u.shape()[0], u.shape()[1]);
                let (k, dout) = (w.shape()[1], w.shape()[2]);
                ensure(grads, *input, u.shape());
                ensure(grads, *weights, w.shape());
                let (gu, gw) = two_grads(grads, *input, *weights);
                for i in 0..n {
                    for j in 0..k {
                        for d in 0..dout {
                            let g = gout.data()[(i * k + j) * dout + d];
                            if g == 0.0 {
                                continue;
                            }
                            let w_row = ((i * k + j) * dout + d) * din;
                            for e in 0..din {
                                gw.data_mut()[w_row + e] += g * u.data()[i * din + e];
                                gu.data_mut()[i * din + e] += g * w.data()[w_row + e];
                            }
                        }
                    }
                }
            }
            Op::ClassMix { preds, coeffs } => {
                let p = &self.nodes[*preds].value;
                let (n, k, d) = (p.shape()[0], p.shape()[1], p.shape()[2]);
                let g = ensure(grads, *preds, p.shape());
                for i in 0..n {
                    for j in 0..k {
                        let c = coeffs.data()[i * k + j];
                        let row = (i * k + j) * d;
                        for e in 0..d {
                            g.data_mut()[row + e] += c * gout.data()[j * d + e];
                        }
                    }
                }
            }
            Op::SquashRows { input } => {
                let s = &self.nodes[*input].value;
                let d = s.shape()[1];
                let g = ensure(grads, *input, s.shape());
                for (row, (s_row, u_row)) in s
                    .data()
                    .chunks_exact(d)
                    .zip(gout.data().chunks_exact(d))
                    .enumerate()
                {
                    let norm_sq: f64 = s_row.iter().map(|v| v * v).sum();
                    let g_row = &mut g.data_mut()[row * d..(row + 1) * d];
                    if norm_sq == 0.0 {
                        continue; // Jacobian vanishes at the origin
                    }
                    let norm = norm_sq.sqrt();
                    let denom = 1.0 + norm_sq;
                    let scale = norm / denom;
                    // d scale/d norm divided by norm, for the rank-1 term
                    let radial = (1.0 - norm_sq) / (denom * denom) / norm;
                    let dot: f64 = s_row.iter().zip(u_row.iter()).map(|(a, b)| a * b).sum();
                    for ((gi, &sv), &uv) in g_row.iter_mut().zip(s_row).zip(u_row) {
                        *gi += uv * scale + sv * dot * radial;
                    }
                }
            }
            Op::HingeLoss { input, true_class } => {
                if node.value.item() > 0.0 {
                    let s = &self.nodes[*input].value;
                    let (_, argmax) = best_incorrect(s.data(), *true_class);
                    let u = gout.item();
                    let g = ensure(grads, *input, s.shape());
                    g.data_mut()[*true_class] -= u;
                    g.data_mut()[argmax] += u;
                }
            }
            Op::LogCoshLoss { input, target } => {
                let s = &self.nodes[*input].value;
                let u = gout.item();
                let g = ensure(grads, *input, s.shape());
                for ((gi, a), b) in g.data_mut().iter_mut().zip(s.data()).zip(target.data()) {
                    *gi += u * (a - b).tanh();
                }
            }
        }
    }
}

/// (lane, inner, outer) strides for iterating lanes along `axis`.
fn lane_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let lane = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    (lane, inner, outer)
}

/// Highest score among incorrect classes and its index (first on ties).
fn best_incorrect(scores: &[f64], true_class: usize) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = usize::MAX;
    for (k, &v) in scores.iter().enumerate() {
        if k != true_class && v > best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

/// log(cosh(x)) without overflow: |x| + log1p(exp(-2|x|)) - log 2.
pub(crate) fn stable_logcosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn ensure<'a>(grads: &'a mut [Option<Tensor>], index: usize, shape: &[usize]) -> &'a mut Tensor {
    grads[index].get_or_insert_with(|| Tensor::zeros(shape))
}

fn two_grads(
    grads: &mut [Option<Tensor>],
    a: usize,
    b: usize,
) -> (&mut Tensor, &mut Tensor) {
    debug_assert!(a != b);
    let (lo, hi, swap) = if a < b { (a, b, false) } else { (b, a, true) };
    let (left, right) = grads.split_at_mut(hi);
    let lo_t = left[lo].as_mut().expect("accumulator created");
    let hi_t = right[0].as_mut().expect("accumulator created");
    if swap {
        (hi_t, lo_t)
    } else {
        (lo_t, hi_t)
    }
}

fn three_grads(
    grads: &mut [Option<Tensor>],
    a: usize,
    b: usize,
    c: usize,
) -> (&mut Tensor, &mut Tensor, &mut Tensor) {
    debug_assert!(a != b && b != c && a != c);
    let mut order = [a, b, c];
    order.sort_unstable();
    let (rest, high) = grads.split_at_mut(order[2]);
    let (rest, mid) = rest.split_at_mut(order[1]);
    let low = rest[order[0]].as_mut().expect("accumulator created");
    let mid = mid[0].as_mut().expect("accumulator created");
    let high = high[0].as_mut().expect("accumulator created");
    // Map back from sorted positions to (a, b, c).
    let pos_of = |idx: usize| order.iter().position(|&o| o == idx).expect("index present");
    let mut slots = [Some(low), Some(mid), Some(high)];
    let (pa, pb, pc) = (pos_of(a), pos_of(b), pos_of(c));
    let ga = slots[pa].take().expect("each index picked once");
    let gb = slots[pb].take().expect("each index picked once");
    let gc = slots[pc].take().expect("each index picked once");
    (ga, gb, gc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_and_reduce_sum_gradients_broadcast() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(&[3], vec![10.0, 20.0, 30.0]).unwrap());
        let sum = tape.add(a, b).unwrap();
        let total = tape.reduce_sum(sum).unwrap();
        assert_eq!(tape.value(total).item(), 66.0);
        let grads = tape.backward(total).unwrap();
        assert_eq!(grads.wrt(a).unwrap().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(grads.wrt(b).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn shared_input_accumulates_gradient() {
        // y = sum(x * x): dy/dx = 2x through two consumers of x.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![3.0, -4.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let y = tape.reduce_sum(sq).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[6.0, -8.0]);
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn foreign_var_is_tape_missing() {
        let mut other = Tape::new();
        for _ in 0..6 {
            other.leaf(Tensor::zeros(&[1]));
        }
        let stray = Var(5);
        let tape = Tape::new();
        assert!(matches!(
            tape.backward(stray),
            Err(TensorError::TapeMissing { index: 5 })
        ));
    }

    #[test]
    fn unused_leaf_gets_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1], vec![2.0]).unwrap());
        let unused = tape.leaf(Tensor::from_vec(&[1], vec![7.0]).unwrap());
        let y = tape.reduce_sum(x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.wrt(unused).is_none());
    }

    #[test]
    fn hinge_loss_examples() {
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::from_vec(&[2], vec![0.9, 0.1]).unwrap());
        let l = tape.hinge_loss(s, 0).unwrap();
        assert!((tape.value(l).item() - 0.2).abs() < 1e-15);

        let s = tape.leaf(Tensor::from_vec(&[2], vec![0.2, 0.9]).unwrap());
        let l = tape.hinge_loss(s, 0).unwrap();
        assert!((tape.value(l).item() - 1.7).abs() < 1e-15);

        // Correct beats best incorrect by >= 1: zero loss, zero gradient.
        let s = tape.leaf(Tensor::from_vec(&[2], vec![1.5, 0.2]).unwrap());
        let l = tape.hinge_loss(s, 0).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let grads = tape.backward(l).unwrap();
        assert!(grads.wrt(s).is_none() || grads.wrt(s).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn logcosh_loss_examples() {
        let mut tape = Tape::new();
        let target = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();

        let s = tape.leaf(target.clone());
        let l = tape.logcosh_loss(s, &target).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);

        // Small residual: per-term close to x^2 / 2.
        let s = tape.leaf(Tensor::from_vec(&[2], vec![1.01, 0.01]).unwrap());
        let l = tape.logcosh_loss(s, &target).unwrap();
        let per_term = tape.value(l).item() / 2.0;
        let half_sq = 0.01f64 * 0.01 / 2.0;
        assert!((per_term - half_sq).abs() / half_sq < 0.01);

        // Large residual: per-term close to |x| - log 2.
        let s = tape.leaf(Tensor::from_vec(&[2], vec![11.0, 10.0]).unwrap());
        let l = tape.logcosh_loss(s, &target).unwrap();
        let expected = 2.0 * (10.0 - std::f64::consts::LN_2);
        assert!((tape.value(l).item() - expected).abs() < 1e-8);
    }

    #[test]
    fn logcosh_is_stable_for_huge_inputs() {
        assert!(stable_logcosh(1e6).is_finite());
        assert!((stable_logcosh(1e6) - (1e6 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(stable_logcosh(0.0), 0.0);
    }

    #[test]
    fn norm_of_one_hot_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let n = tape.norm_along_axis(x, 1).unwrap();
        assert_eq!(tape.value(n).shape(), &[2]);
        assert_eq!(tape.value(n).data(), &[1.0, 0.0]);
    }

    #[test]
    fn class_mix_weights_predictions() {
        let mut tape = Tape::new();
        // 2 capsules, 1 class, dim 2
        let preds = tape.leaf(Tensor::from_vec(&[2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let coeffs = Tensor::from_vec(&[2, 1], vec![0.25, 0.75]).unwrap();
        let s = tape.class_mix(preds, &coeffs).unwrap();
        assert_eq!(tape.value(s).shape(), &[1, 2]);
        assert_eq!(tape.value(s).data(), &[0.25, 0.75]);
        let total = tape.reduce_sum(s).unwrap();
        let grads = tape.backward(total).unwrap();
        assert_eq!(grads.wrt(preds).unwrap().data(), &[0.25, 0.25, 0.75, 0.75]);
    }

    #[test]
    fn capsule_reshape_groups_map_channels_into_vectors() {
        let mut tape = Tape::new();
        // 2 maps of dim 2 over 2 spatial cells: channels are (map, dim) pairs.
        let x = tape.leaf(
            Tensor::from_vec(&[4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap(),
        );
        let caps = tape.capsule_reshape(x, 2, 2).unwrap();
        assert_eq!(tape.value(caps).shape(), &[4, 2]);
        assert_eq!(
            tape.value(caps).data(),
            &[1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]
        );
    }

    #[test]
    fn capsule_transform_is_per_pair_matvec() {
        let mut tape = Tape::new();
        // 1 capsule, 1 class, Dout=2, Din=2: W = [[1, 2], [3, 4]], u = [5, 6]
        let u = tape.leaf(Tensor::from_vec(&[1, 2], vec![5.0, 6.0]).unwrap());
        let w = tape.leaf(Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let out = tape.capsule_transform(u, w).unwrap();
        assert_eq!(tape.value(out).data(), &[17.0, 39.0]);
    }
}
