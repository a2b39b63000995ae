//! Dense feed-forward networks with analytic backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Identity => z,
        }
    }
}

/// One affine layer followed by an activation. Weights are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn input_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.nrows()
    }
}

/// Architecture descriptor: widths and per-layer activations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Architecture {
    /// Rectifier on every hidden layer, `output` on the last one.
    pub fn mlp(layer_dims: &[usize], output: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let layers = layer_dims.len() - 1;
        let mut activations = vec![Activation::Relu; layers];
        activations[layers - 1] = output;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activations,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T: Real> {
    layers: Vec<Layer<T>>,
}

/// Per-layer gradients, shaped exactly like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real> {
    pub layers: Vec<LayerGradient<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<T: Real> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Cached activations of a batched forward pass, consumed by [`DenseNet::backward_batch`].
///
/// `activations[0]` is the input batch and `activations[l + 1]` the post-activation
/// output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Real> {
    activations: Vec<Array2<T>>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("trace has an input")
    }

    pub fn input(&self) -> &Array2<T> {
        &self.activations[0]
    }
}

impl<T: Real> DenseNet<T> {
    /// Weights uniform in ±1/√fan_in, biases likewise.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Self::check_arch(arch)?;
        let layers = arch
            .layer_dims
            .windows(2)
            .zip(&arch.activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    T::from_f64(rng.random_range(-bound..bound))
                });
                let bias =
                    Array1::from_shape_simple_fn(fan_out, || T::from_f64(rng.random_range(-bound..bound)));
                Layer {
                    weights,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Self::check_arch(arch)?;
        let layers = arch
            .layer_dims
            .windows(2)
            .zip(&arch.activations)
            .map(|(w, &activation)| Layer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
                activation,
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::Architecture(format!(
                    "layer output width {} does not feed input width {}",
                    pair[0].output_width(),
                    pair[1].input_width()
                )));
            }
        }
        for layer in &layers {
            check_len("bias width", layer.output_width(), layer.bias.len())?;
        }
        Ok(Self { layers })
    }

    fn check_arch(arch: &Architecture) -> Result<()> {
        if arch.layer_dims.len() < 2 || arch.activations.len() + 1 != arch.layer_dims.len() {
            return Err(Error::Architecture(format!(
                "{} widths with {} activations",
                arch.layer_dims.len(),
                arch.activations.len()
            )));
        }
        if arch.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn architecture(&self) -> Architecture {
        let mut layer_dims = vec![self.input_width()];
        layer_dims.extend(self.layers.iter().map(Layer::output_width));
        Architecture {
            layer_dims,
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        check_len("network input", self.input_width(), input.len())?;
        let mut x = ArrayView1::from(input).to_owned();
        for layer in &self.layers {
            let mut z = layer.weights.dot(&x);
            let act = layer.activation;
            z.zip_mut_with(&layer.bias, |v, &b| *v = act.apply(*v + b));
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Forward pass over a `batch × input` matrix.
    pub fn forward_batch(&self, input: ArrayView2<T>) -> Result<Array2<T>> {
        check_len("network input", self.input_width(), input.ncols())?;
        let mut x = self.layer_forward(0, input);
        for l in 1..self.layers.len() {
            x = self.layer_forward(l, x.view());
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: Array2<T>) -> Result<ForwardTrace<T>> {
        check_len("network input", self.input_width(), input.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        for l in 0..self.layers.len() {
            let next = self.layer_forward(l, activations[l].view());
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    fn layer_forward(&self, l: usize, x: ArrayView2<T>) -> Array2<T> {
        let layer = &self.layers[l];
        let mut z = x.dot(&layer.weights.t());
        let act = layer.activation;
        Zip::from(z.rows_mut()).for_each(|mut row| {
            Zip::from(&mut row)
                .and(&layer.bias)
                .for_each(|v, &b| *v = act.apply(*v + b));
        });
        z
    }

    /// Backpropagates `output_gradient` (∂L/∂output, `batch × out`) through a
    /// cached forward pass. Parameter gradients are summed over the batch.
    /// Returns the parameter gradients and ∂L/∂input.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace<T>,
        output_gradient: ArrayView2<T>,
    ) -> Result<(Gradients<T>, Array2<T>)> {
        check_len("output gradient width", self.output_width(), output_gradient.ncols())?;
        check_len(
            "output gradient rows",
            trace.output().nrows(),
            output_gradient.nrows(),
        )?;
        let mut grads: Vec<LayerGradient<T>> = Vec::with_capacity(self.layers.len());
        let mut g = output_gradient.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                // subgradient of the rectifier at 0 is 0
                Zip::from(&mut g)
                    .and(&trace.activations[l + 1])
                    .for_each(|gv, &a| {
                        if a <= T::zero() {
                            *gv = T::zero();
                        }
                    });
            }
            let weights = g.t().dot(&trace.activations[l]);
            let bias = g.sum_axis(Axis(0));
            let next = g.dot(&layer.weights);
            grads.push(LayerGradient { weights, bias });
            g = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// Single-sample backward pass.
    pub fn backward(&self, input: &[T], output_gradient: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        check_len("network input", self.input_width(), input.len())?;
        check_len("output gradient width", self.output_width(), output_gradient.len())?;
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .expect("row vector shape");
        let trace = self.forward_trace(x)?;
        let g = ArrayView2::from_shape((1, output_gradient.len()), output_gradient)
            .expect("row vector shape");
        let (grads, input_grad) = self.backward_batch(&trace, g)?;
        Ok((grads, input_grad.into_raw_vec_and_offset().0))
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.dim() == b.weights.dim() && a.activation == b.activation
            })
    }

    /// Visits every parameter in a fixed order: per layer, row-major weights then bias.
    pub fn for_each_param(&self, mut f: impl FnMut(T)) {
        for layer in &self.layers {
            layer.weights.iter().for_each(|&v| f(v));
            layer.bias.iter().for_each(|&v| f(v));
        }
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn param_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param(|v| out.push(v));
        out
    }

    pub fn cast<U: Real>(&self) -> DenseNet<U> {
        DenseNet {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.mapv(|v| U::from_f64(v.to_f64())),
                    bias: l.bias.mapv(|v| U::from_f64(v.to_f64())),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        check_len("gradient layers", self.layers.len(), other.layers.len())?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            check_len("gradient weights", a.weights.len(), b.weights.len())?;
            a.weights.zip_mut_with(&b.weights, |x, &y| *x = *x + y);
            a.bias.zip_mut_with(&b.bias, |x, &y| *x = *x + y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
    }

    /// Flattened in the same order as [`DenseNet::param_vec`].
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_net_returns_last_bias() {
        let arch = Architecture::mlp(&[3, 4, 2], Activation::Identity).unwrap();
        let mut net = DenseNet::<f64>::zeros(&arch).unwrap();
        net.layers_mut()[0].bias.fill(0.7);
        net.layers_mut()[1].bias = Array1::from(vec![0.25, -1.5]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer {
            weights: Array2::<f64>::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.0]).unwrap(), vec![1.5, -2.0, 0.0]);
    }

    #[test]
    fn param_count_matches_formula() {
        let arch = Architecture::mlp(&[3, 256, 256, 4], Activation::Identity).unwrap();
        let net = DenseNet::<f32>::new(&arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let expected = (3 + 1) * 256 + (256 + 1) * 256 + (256 + 1) * 4;
        assert_eq!(net.param_count(), expected);
        assert_eq!(arch.param_count(), expected);
    }

    #[test]
    fn input_shape_is_checked() {
        let arch = Architecture::mlp(&[3, 2], Activation::Identity).unwrap();
        let net = DenseNet::<f64>::zeros(&arch).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(net.backward(&[1.0, 2.0, 3.0], &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn linear_scalar_gradient() {
        let layer = Layer {
            weights: Array2::from_elem((1, 1), 0.3f64),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let (grads, input_grad) = net.backward(&[2.0], &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weights[[0, 0]], 2.0);
        assert_eq!(grads.layers[0].bias[0], 1.0);
        assert_eq!(input_grad, vec![0.3]);
    }

    #[test]
    fn relu_at_zero_has_zero_subgradient() {
        // hidden unit pre-activation is exactly 0
        let hidden = Layer {
            weights: Array2::from_elem((1, 1), 1.0f64),
            bias: Array1::zeros(1),
            activation: Activation::Relu,
        };
        let out = Layer {
            weights: Array2::from_elem((1, 1), 1.0f64),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(vec![hidden, out]).unwrap();
        let (grads, input_grad) = net.backward(&[0.0], &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weights[[0, 0]], 0.0);
        assert_eq!(grads.layers[0].bias[0], 0.0);
        assert_eq!(input_grad, vec![0.0]);
    }

    #[test]
    fn batched_forward_matches_single() {
        let arch = Architecture::mlp(&[5, 16, 16, 3], Activation::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::<f64>::new(&arch, &mut rng).unwrap();
        let batch = Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - 3.0) * 0.3 + j as f64 * 0.1);
        let out = net.forward_batch(batch.view()).unwrap();
        for (i, row) in batch.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(out.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
