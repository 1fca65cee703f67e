use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu if z < 0.0 => LEAKY_SLOPE * z,
            Activation::Relu if z < 0.0 => 0.0,
            _ => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu if z < 0.0 => LEAKY_SLOPE,
            Activation::Relu if z < 0.0 => 0.0,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaky-relu" | "leaky_relu" => Ok(Activation::LeakyRelu),
            "relu" => Ok(Activation::Relu),
            other => Err(NnError::UnknownActivation(other.to_string())),
        }
    }
}

/// Fully connected network with a linear output layer.
///
/// Parameters live in one flat vector: for each layer, the `in x out`
/// row-major weight matrix followed by the `out` bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Activations recorded by [`DenseNet::forward_traced`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardTrace {
    /// Smallest |pre-activation| over all hidden units; distance to a kink.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

impl DenseNet {
    /// Zero-initialized network. `widths` is `[input, hidden..., output]`.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<DenseNet, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::BadLayout(format!("{widths:?}")));
        }
        let n = layer_offsets(widths).last().copied().unwrap_or(0);
        Ok(DenseNet {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; n],
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<DenseNet, NnError> {
        let mut net = DenseNet::zeros(widths, activation)?;
        let offs = layer_offsets(widths);
        for l in 0..widths.len() - 1 {
            let bound = 1.0 / (widths[l] as f64).sqrt();
            for p in &mut net.params[offs[l]..offs[l + 1]] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let off = layer_offsets(&self.widths)[l];
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).expect("layout")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let off = layer_offsets(&self.widths)[l];
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        ArrayView1::from(&self.params[off + i * o..off + i * o + o])
    }

    /// Sets layer `l` to the given `in x out` weights and bias.
    pub fn set_layer(&mut self, l: usize, weight: &[f64], bias: &[f64]) -> Result<(), NnError> {
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        if weight.len() != i * o || bias.len() != o {
            return Err(NnError::ShapeMismatch {
                expected: i * o + o,
                got: weight.len() + bias.len(),
            });
        }
        let off = layer_offsets(&self.widths)[l];
        self.params[off..off + i * o].copy_from_slice(weight);
        self.params[off + i * o..off + i * o + o].copy_from_slice(bias);
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_width() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_width(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let mut z = h.dot(&self.weight(l));
            z += &self.bias(l);
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`DenseNet::backward`] needs.
    pub fn forward_traced(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, ForwardTrace), NnError> {
        self.check_input(&x)?;
        let last = self.num_layers() - 1;
        let mut inputs = Vec::with_capacity(last + 1);
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for l in 0..=last {
            let mut z = h.dot(&self.weight(l));
            z += &self.bias(l);
            inputs.push(h);
            if l < last {
                let a = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok((h, ForwardTrace { inputs, pre }))
    }

    /// Parameter gradient given d(loss)/d(output), in the flat layout.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d_out: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>, NnError> {
        let rows = trace.inputs[0].nrows();
        if d_out.dim() != (rows, self.output_width()) {
            return Err(NnError::ShapeMismatch {
                expected: rows * self.output_width(),
                got: d_out.len(),
            });
        }
        let offs = layer_offsets(&self.widths);
        let mut grad = vec![0.0; self.params.len()];
        let mut g = d_out.to_owned();
        for l in (0..self.num_layers()).rev() {
            if l < self.num_layers() - 1 {
                let act = self.activation;
                g.zip_mut_with(&trace.pre[l], |gi, &z| *gi *= act.derivative(z));
            }
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            let dw = trace.inputs[l].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            let off = offs[l];
            for (dst, src) in grad[off..off + i * o].iter_mut().zip(dw.iter()) {
                *dst = *src;
            }
            for (dst, src) in grad[off + i * o..off + i * o + o].iter_mut().zip(db.iter()) {
                *dst = *src;
            }
            if l > 0 {
                g = g.dot(&self.weight(l).t());
            }
        }
        Ok(grad)
    }

    /// Single-sample convenience wrapper around [`DenseNet::forward`].
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| NnError::ShapeMismatch {
            expected: self.input_width(),
            got: x.len(),
        })?;
        Ok(self.forward(view)?.slice(s![0, ..]).to_vec())
    }
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(widths.len());
    let mut acc = 0;
    offs.push(0);
    for w in widths.windows(2) {
        acc += w[0] * w[1] + w[1];
        offs.push(acc);
    }
    offs
}
