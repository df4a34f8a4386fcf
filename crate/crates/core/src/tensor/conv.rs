//! Strided valid convolution (cross-correlation) in 2 and 3 spatial dims.

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

/// Shape contract of one convolutional layer.
///
/// Valid padding only: each output spatial extent is
/// floor((input - kernel) / stride) + 1 and must be at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    ) -> Result<Self, TensorError> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 {
            return Err(TensorError::shape(
                "conv_spec",
                format!(
                    "all fields must be positive: in={in_channels} out={out_channels} \
                     kernel={kernel_size} stride={stride}"
                ),
            ));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
        })
    }

    /// Output extent for one spatial dimension.
    pub fn output_extent(&self, input_extent: usize) -> Result<usize, TensorError> {
        if input_extent < self.kernel_size {
            return Err(TensorError::shape(
                "conv",
                format!(
                    "input extent {input_extent} smaller than kernel {}",
                    self.kernel_size
                ),
            ));
        }
        Ok((input_extent - self.kernel_size) / self.stride + 1)
    }

    /// Expected weight shape: [out_channels, in_channels, kernel^R].
    pub fn weight_shape(&self, spatial_rank: usize) -> Vec<usize> {
        let mut shape = vec![self.out_channels, self.in_channels];
        shape.extend(std::iter::repeat(self.kernel_size).take(spatial_rank));
        shape
    }

    fn check_shapes(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &Tensor,
    ) -> Result<Vec<usize>, TensorError> {
        let rank = input.rank();
        if rank != 3 && rank != 4 {
            return Err(TensorError::shape(
                "conv",
                format!("input must be [C, spatial...] with 2 or 3 spatial dims, got {:?}", input.shape()),
            ));
        }
        let spatial_rank = rank - 1;
        if input.shape()[0] != self.in_channels {
            return Err(TensorError::shape(
                "conv",
                format!(
                    "input has {} channels, spec expects {}",
                    input.shape()[0],
                    self.in_channels
                ),
            ));
        }
        if weights.shape() != self.weight_shape(spatial_rank).as_slice() {
            return Err(TensorError::shape(
                "conv",
                format!(
                    "weights {:?} do not match spec {:?}",
                    weights.shape(),
                    self.weight_shape(spatial_rank)
                ),
            ));
        }
        if bias.shape() != [self.out_channels] {
            return Err(TensorError::shape(
                "conv",
                format!("bias {:?}, expected [{}]", bias.shape(), self.out_channels),
            ));
        }
        let mut out_shape = vec![self.out_channels];
        for &e in &input.shape()[1..] {
            out_shape.push(self.output_extent(e)?);
        }
        Ok(out_shape)
    }
}

/// Forward strided valid cross-correlation.
pub(crate) fn conv_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor, TensorError> {
    let out_shape = spec.check_shapes(input, weights, bias)?;
    let mut out = Tensor::zeros(&out_shape);
    match input.rank() {
        3 => conv2_forward(input, weights, bias, spec, &mut out),
        4 => conv3_forward(input, weights, bias, spec, &mut out),
        _ => unreachable!("rank checked"),
    }
    Ok(out)
}

/// Gradients of the forward pass w.r.t. input, weights, and bias.
///
/// Accumulates into the provided tensors (callers pass zero-initialized
/// accumulators or running sums).
pub(crate) fn conv_backward(
    input: &Tensor,
    weights: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
    grad_input: &mut Tensor,
    grad_weights: &mut Tensor,
    grad_bias: &mut Tensor,
) {
    match input.rank() {
        3 => conv2_backward(
            input,
            weights,
            spec,
            grad_out,
            grad_input,
            grad_weights,
            grad_bias,
        ),
        4 => conv3_backward(
            input,
            weights,
            spec,
            grad_out,
            grad_input,
            grad_weights,
            grad_bias,
        ),
        _ => unreachable!("rank checked at forward"),
    }
}

fn conv2_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec, out: &mut Tensor) {
    let (ci, k, s) = (spec.in_channels, spec.kernel_size, spec.stride);
    let (i1, i2) = (input.shape()[1], input.shape()[2]);
    let (o1, o2) = (out.shape()[1], out.shape()[2]);
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let y = out.data_mut();

    for oc in 0..spec.out_channels {
        for p1 in 0..o1 {
            for p2 in 0..o2 {
                let mut acc = b[oc];
                for ic in 0..ci {
                    for k1 in 0..k {
                        let x_row = (ic * i1 + p1 * s + k1) * i2 + p2 * s;
                        let w_row = ((oc * ci + ic) * k + k1) * k;
                        for k2 in 0..k {
                            acc += x[x_row + k2] * w[w_row + k2];
                        }
                    }
                }
                y[(oc * o1 + p1) * o2 + p2] = acc;
            }
        }
    }
}

fn conv3_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec, out: &mut Tensor) {
    let (ci, k, s) = (spec.in_channels, spec.kernel_size, spec.stride);
    let (i1, i2, i3) = (input.shape()[1], input.shape()[2], input.shape()[3]);
    let (o1, o2, o3) = (out.shape()[1], out.shape()[2], out.shape()[3]);
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let y = out.data_mut();

    for oc in 0..spec.out_channels {
        for p1 in 0..o1 {
            for p2 in 0..o2 {
                for p3 in 0..o3 {
                    let mut acc = b[oc];
                    for ic in 0..ci {
                        for k1 in 0..k {
                            for k2 in 0..k {
                                let x_row = ((ic * i1 + p1 * s + k1) * i2 + p2 * s + k2) * i3
                                    + p3 * s;
                                let w_row = (((oc * ci + ic) * k + k1) * k + k2) * k;
                                for k3 in 0..k {
                                    acc += x[x_row + k3] * w[w_row + k3];
                                }
                            }
                        }
                    }
                    y[((oc * o1 + p1) * o2 + p2) * o3 + p3] = acc;
                }
            }
        }
    }
}

fn conv2_backward(
    input: &Tensor,
    weights: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
    grad_input: &mut Tensor,
    grad_weights: &mut Tensor,
    grad_bias: &mut Tensor,
) {
    let (ci, k, s) = (spec.in_channels, spec.kernel_size, spec.stride);
    let (i1, i2) = (input.shape()[1], input.shape()[2]);
    let (o1, o2) = (grad_out.shape()[1], grad_out.shape()[2]);
    let x = input.data();
    let w = weights.data();
    let gy = grad_out.data();
    let gx = grad_input.data_mut();
    let gw = grad_weights.data_mut();
    let gb = grad_bias.data_mut();

    for oc in 0..spec.out_channels {
        for p1 in 0..o1 {
            for p2 in 0..o2 {
                let g = gy[(oc * o1 + p1) * o2 + p2];
                if g == 0.0 {
                    continue;
                }
                gb[oc] += g;
                for ic in 0..ci {
                    for k1 in 0..k {
                        let x_row = (ic * i1 + p1 * s + k1) * i2 + p2 * s;
                        let w_row = ((oc * ci + ic) * k + k1) * k;
                        for k2 in 0..k {
                            gw[w_row + k2] += g * x[x_row + k2];
                            gx[x_row + k2] += g * w[w_row + k2];
                        }
                    }
                }
            }
        }
    }
}

fn conv3_backward(
    input: &Tensor,
    weights: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
    grad_input: &mut Tensor,
    grad_weights: &mut Tensor,
    grad_bias: &mut Tensor,
) {
    let (ci, k, s) = (spec.in_channels, spec.kernel_size, spec.stride);
    let (i1, i2, i3) = (input.shape()[1], input.shape()[2], input.shape()[3]);
    let (o1, o2, o3) = (grad_out.shape()[1], grad_out.shape()[2], grad_out.shape()[3]);
    let x = input.data();
    let w = weights.data();
    let gy = grad_out.data();
    let gx = grad_input.data_mut();
    let gw = grad_weights.data_mut();
    let gb = grad_bias.data_mut();

    for oc in 0..spec.out_channels {
        for p1 in 0..o1 {
            for p2 in 0..o2 {
                for p3 in 0..o3 {
                    let g = gy[((oc * o1 + p1) * o2 + p2) * o3 + p3];
                    if g == 0.0 {
                        continue;
                    }
                    gb[oc] += g;
                    for ic in 0..ci {
                        for k1 in 0..k {
                            for k2 in 0..k {
                                let x_row = ((ic * i1 + p1 * s + k1) * i2 + p2 * s + k2) * i3
                                    + p3 * s;
                                let w_row = (((oc * ci + ic) * k + k1) * k + k2) * k;
                                for k3 in 0..k {
                                    gw[w_row + k3] += g * x[x_row + k3];
                                    gx[x_row + k3] += g * w[w_row + k3];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_sums_window() {
        let input = Tensor::from_vec(&[1, 3, 3], vec![1.0; 9]).unwrap();
        let weights = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let spec = ConvSpec::new(1, 1, 3, 1).unwrap();
        let out = conv_forward(&input, &weights, &bias, &spec).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn table_shape_512_to_63() {
        // 8x512x512 input, 64 filters, kernel 9, stride 8 -> 64x63x63.
        let spec = ConvSpec::new(8, 64, 9, 8).unwrap();
        assert_eq!(spec.output_extent(512).unwrap(), 63);
        assert_eq!(spec.output_extent(63).unwrap(), 7);
    }

    #[test]
    fn rejects_undersized_input() {
        let spec = ConvSpec::new(1, 1, 5, 1).unwrap();
        assert!(spec.output_extent(4).is_err());
    }

    /// Independent quadruple-loop reference, written without reusing any of
    /// the production index math.
    fn naive_conv2(
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
        stride: usize,
    ) -> Vec<f64> {
        let (co, ci, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let (i1, i2) = (x.shape()[1], x.shape()[2]);
        let o1 = (i1 - k) / stride + 1;
        let o2 = (i2 - k) / stride + 1;
        let mut out = Vec::new();
        for oc in 0..co {
            for p1 in 0..o1 {
                for p2 in 0..o2 {
                    let mut acc = b.data()[oc];
                    for ic in 0..ci {
                        for k1 in 0..k {
                            for k2 in 0..k {
                                let xi = x.data()[ic * i1 * i2 + (p1 * stride + k1) * i2
                                    + (p2 * stride + k2)];
                                let wi = w.data()[oc * ci * k * k + ic * k * k + k1 * k + k2];
                                acc += xi * wi;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_reference_2d() {
        // Fixed pseudo-random values; strided 2-filter kernel-3 case.
        let x: Vec<f64> = (0..36).map(|i| ((i * 37 + 11) % 17) as f64 * 0.25 - 2.0).collect();
        let w: Vec<f64> = (0..18).map(|i| ((i * 29 + 5) % 13) as f64 * 0.5 - 3.0).collect();
        let input = Tensor::from_vec(&[1, 6, 6], x).unwrap();
        let weights = Tensor::from_vec(&[2, 1, 3, 3], w).unwrap();
        let bias = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let spec = ConvSpec::new(1, 2, 3, 2).unwrap();
        let out = conv_forward(&input, &weights, &bias, &spec).unwrap();
        let expected = naive_conv2(&input, &weights, &bias, 2);
        assert_eq!(out.shape(), &[2, 2, 2]);
        for (got, want) in out.data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_small_shape_sweep_matches_naive() {
        for i_ext in 1..=8usize {
            for k in 1..=i_ext.min(4) {
                for stride in 1..=3usize {
                    for ci in 1..=2usize {
                        let co = 2;
                        let x: Vec<f64> = (0..ci * i_ext * i_ext)
                            .map(|i| ((i * 31 + 7) % 19) as f64 * 0.125 - 1.0)
                            .collect();
                        let wv: Vec<f64> = (0..co * ci * k * k)
                            .map(|i| ((i * 23 + 3) % 11) as f64 * 0.25 - 1.25)
                            .collect();
                        let input = Tensor::from_vec(&[ci, i_ext, i_ext], x).unwrap();
                        let weights = Tensor::from_vec(&[co, ci, k, k], wv).unwrap();
                        let bias = Tensor::from_vec(&[co], vec![0.25, -0.75]).unwrap();
                        let spec = ConvSpec::new(ci, co, k, stride).unwrap();
                        let out = conv_forward(&input, &weights, &bias, &spec).unwrap();
                        let expected = naive_conv2(&input, &weights, &bias, stride);
                        for (got, want) in out.data().iter().zip(&expected) {
                            assert!((got - want).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conv3_single_window_is_dot_product() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let w: Vec<f64> = (0..8).map(|i| (7 - i) as f64).collect();
        let expected: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let input = Tensor::from_vec(&[1, 2, 2, 2], x).unwrap();
        let weights = Tensor::from_vec(&[1, 1, 2, 2, 2], w).unwrap();
        let bias = Tensor::zeros(&[1]);
        let spec = ConvSpec::new(1, 1, 2, 1).unwrap();
        let out = conv_forward(&input, &weights, &bias, &spec).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data()[0], expected);
    }
}
