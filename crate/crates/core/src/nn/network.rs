use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::{ParamVector, Tensor2D};
use crate::error::{invalid_input, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// Fully connected layer computing `act(W x + b)`, with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor2D::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    /// Pre-activation `x Wᵀ + b` for a batch.
    fn affine(&self, x: &Tensor2D) -> Tensor2D {
        let (n, inp, out) = (x.rows(), self.input_dim(), self.output_dim());
        let mut z = Tensor2D::zeros(n, out);
        for i in 0..n {
            z.row_mut(i).copy_from_slice(&self.bias);
        }
        // z (n×out) += x (n×in) · Wᵀ (in×out)
        gemm(
            n,
            inp,
            out,
            x.data(),
            (inp, 1),
            self.weight.data(),
            (1, inp),
            1.0,
            z.data_mut(),
            (out, 1),
        );
        z
    }
}

/// `c = a·b + beta·c` over row/column strided buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(m.saturating_sub(1) * rsa + k.saturating_sub(1) * csa < a.len().max(1));
    assert!(k.saturating_sub(1) * rsb + n.saturating_sub(1) * csb < b.len().max(1));
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts bound every index the kernel touches by each slice's length.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Shape of a multilayer perceptron: relu hidden layers, identity output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input];
        d.extend(&self.hidden);
        d.push(self.output);
        d
    }
}

/// Ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Intermediate values recorded by [`Network::forward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Tensor2D>,
    /// Pre-activation of each layer.
    pub pre: Vec<Tensor2D>,
    pub output: Tensor2D,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid_input("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(invalid_input(format!("layer {k}: bias length mismatch")));
            }
            if l.param_count() == 0 {
                return Err(invalid_input(format!("layer {k} has no parameters")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(invalid_input(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: &Architecture, rng: &mut Rng) -> Result<Self> {
        let dims = arch.dims();
        if dims.contains(&0) {
            return Err(invalid_input("architecture has a zero-width layer"));
        }
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let mut layer = Layer::zeros(w[0], w[1], act);
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                for v in layer.weight.data_mut() {
                    *v = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened parameters: for each layer, weights row-major then bias.
    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(&l.bias);
        }
        ParamVector(v)
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(invalid_input(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            l.weight
                .data_mut()
                .copy_from_slice(&params.0[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params.0[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor2D) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(invalid_input(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor2D) -> Result<Tensor2D> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Output of the first `depth` layers (after their activations).
    pub fn forward_prefix(&self, x: &Tensor2D, depth: usize) -> Result<Tensor2D> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (k, l) in self.layers.iter().take(depth).enumerate() {
            let mut z = l.affine(&h);
            z.data_mut()
                .iter_mut()
                .for_each(|v| *v = l.activation.apply(*v));
            if !z.is_finite() {
                return Err(Error::Numerical {
                    layer: k,
                    detail: "forward activation".into(),
                });
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &Tensor2D) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let z = l.affine(&h);
            if !z.is_finite() {
                return Err(Error::Numerical {
                    layer: k,
                    detail: "forward pre-activation".into(),
                });
            }
            let mut a = z.clone();
            a.data_mut()
                .iter_mut()
                .for_each(|v| *v = l.activation.apply(*v));
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradient of a scalar loss given `d loss / d output` for the traced batch.
    pub fn backward(&self, trace: &Trace, d_output: &Tensor2D) -> Result<ParamVector> {
        if d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols() {
            return Err(invalid_input(
                "output gradient shape does not match the trace",
            ));
        }
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let z = &trace.pre[k];
            for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                *d *= l.activation.derivative(zv);
            }
            if !delta.is_finite() {
                return Err(Error::Numerical {
                    layer: k,
                    detail: "backward delta".into(),
                });
            }
            let x = &trace.inputs[k];
            let (n, out, inp) = (x.rows(), l.output_dim(), l.input_dim());
            let mut gw = vec![0.0; out * inp];
            let mut gb = vec![0.0; out];
            for row in delta.iter_rows() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // gW (out×in) = δᵀ (out×n) · x (n×in)
            gemm(
                out,
                n,
                inp,
                delta.data(),
                (1, out),
                x.data(),
                (inp, 1),
                0.0,
                &mut gw,
                (inp, 1),
            );
            if k > 0 {
                // dx (n×in) = δ (n×out) · W (out×in)
                let mut dx = Tensor2D::zeros(n, inp);
                gemm(
                    n,
                    out,
                    inp,
                    delta.data(),
                    (out, 1),
                    l.weight.data(),
                    (inp, 1),
                    0.0,
                    dx.data_mut(),
                    (inp, 1),
                );
                delta = dx;
            }
            grads.push((gw, gb));
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads.into_iter().rev() {
            flat.extend(gw);
            flat.extend(gb);
        }
        Ok(ParamVector(flat))
    }
}

/// Evaluate a loss over the network's logits and return `(loss, d loss / d params)`.
///
/// The closure receives the batch logits and returns the scalar loss together with
/// its gradient with respect to those logits. Parameters are not modified.
pub fn grad<F>(net: &Network, inputs: &Tensor2D, loss: F) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&Tensor2D) -> Result<(f64, Tensor2D)>,
{
    let trace = net.forward_trace(inputs)?;
    let (value, d_logits) = loss(&trace.output)?;
    if !value.is_finite() {
        return Err(Error::Numerical {
            layer: net.layers.len(),
            detail: "loss value".into(),
        });
    }
    let g = net.backward(&trace, &d_logits)?;
    Ok((value, g))
}
