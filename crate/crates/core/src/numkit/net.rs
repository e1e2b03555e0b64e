//! Small fully connected networks with hand-derived backpropagation.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::RngStream;
use super::NumError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer followed by an elementwise activation.
/// `weights` is `in_dim x out_dim`, so a batch maps as `X * W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Activations recorded by [`DenseNet::forward`]: the input to every layer
/// plus the final output.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrad>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Parameterized::write_params`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.write_flat(&mut v);
        v
    }
}

/// Anything whose trainable parameters can be flattened into a vector.
pub trait Parameterized {
    fn num_params(&self) -> usize;
    fn write_params(&self, out: &mut Vec<f64>);
    /// Overwrites parameters from the front of `src`; returns how many were consumed.
    fn read_params(&mut self, src: &[f64]) -> usize;

    fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.write_params(&mut v);
        v
    }
}

impl Parameterized for Matrix {
    fn num_params(&self) -> usize {
        self.as_slice().len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.as_slice());
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let n = self.as_slice().len();
        self.as_mut_slice().copy_from_slice(&src[..n]);
        n
    }
}

impl Parameterized for DenseNet {
    fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            off += l.weights.read_params(&src[off..]);
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[off..off + nb]);
            off += nb;
        }
        off
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::Shape("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NumError::Shape(format!(
                    "layer {i}: bias length {} vs output width {}",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// `sizes` lists every width from input to output.
    pub fn glorot(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut RngStream,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut w = Matrix::zeros(fan_in, fan_out);
                for v in w.as_mut_slice() {
                    *v = rng.uniform_range(-limit, limit);
                }
                Layer {
                    weights: w,
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n_layers { output } else { hidden },
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache), NumError> {
        if batch.cols() != self.input_dim() {
            return Err(NumError::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                batch.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for l in &self.layers {
            let mut z = activations.last().unwrap().matmul(&l.weights)?;
            let cols = z.cols();
            for (k, v) in z.as_mut_slice().iter_mut().enumerate() {
                *v = l.activation.apply(*v + l.bias[k % cols]);
            }
            activations.push(z);
        }
        let out = activations.last().unwrap().clone();
        Ok((out, ForwardCache { activations }))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix, NumError> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Exact gradients of `sum(upstream ⊙ output)` with respect to every
    /// parameter, plus the gradient with respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
    ) -> Result<(NetGrads, Matrix), NumError> {
        let stale = cache.activations.len() != self.layers.len() + 1
            || cache
                .activations
                .iter()
                .zip(self.layers.iter())
                .any(|(a, l)| a.cols() != l.in_dim());
        if stale {
            return Err(NumError::Shape(
                "forward cache does not belong to this network".into(),
            ));
        }
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(NumError::Shape(format!(
                "upstream gradient {:?} vs network output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let y = &cache.activations[li + 1];
            for (d, &yv) in delta.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *d *= l.activation.derivative_from_output(yv);
            }
            let x = &cache.activations[li];
            let gw = x.t_matmul(&delta)?;
            let mut gb = vec![0.0; l.out_dim()];
            for r in delta.row_iter() {
                for (b, v) in gb.iter_mut().zip(r) {
                    *b += v;
                }
            }
            let next = delta.matmul_t(&l.weights)?;
            grads.push(LayerGrad {
                weights: gw,
                bias: gb,
            });
            delta = next;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::finite_diff_check;

    fn single(w: Matrix, b: Vec<f64>, act: Activation) -> DenseNet {
        DenseNet::new(vec![Layer {
            weights: w,
            bias: b,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Matrix::identity(3), vec![0.0; 3], Activation::Identity);
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let net = single(Matrix::identity(2), vec![0.0; 2], Activation::Relu);
        let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn two_layer_tanh_matches_hand_evaluation() {
        // W1 = [[0.1, -0.2], [0.3, 0.4]], b1 = [0.05, -0.05]; W2 = [[0.5], [-0.6]], b2 = [0.2]
        let l1 = Layer {
            weights: Matrix::from_rows(&[[0.1, -0.2], [0.3, 0.4]]).unwrap(),
            bias: vec![0.05, -0.05],
            activation: Activation::Tanh,
        };
        let l2 = Layer {
            weights: Matrix::from_rows(&[[0.5], [-0.6]]).unwrap(),
            bias: vec![0.2],
            activation: Activation::Tanh,
        };
        let net = DenseNet::new(vec![l1, l2]).unwrap();
        let (x0, x1) = (0.7_f64, -1.3_f64);
        let h0 = (0.1 * x0 + 0.3 * x1 + 0.05).tanh();
        let h1 = (-0.2 * x0 + 0.4 * x1 - 0.05).tanh();
        let expected = (0.5 * h0 - 0.6 * h1 + 0.2).tanh();
        let out = net.predict(&Matrix::from_rows(&[[x0, x1]]).unwrap()).unwrap();
        assert!((out[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = single(Matrix::identity(2), vec![0.0; 2], Activation::Relu);
        assert!(net.forward(&Matrix::zeros(1, 3)).is_err());
        let other = single(Matrix::identity(3), vec![0.0; 3], Activation::Relu);
        let (_, cache) = other.forward(&Matrix::zeros(1, 3)).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngStream::new(1);
        let net = DenseNet::glorot(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]).unwrap();
        let (out, cache) = net.forward(&x).unwrap();
        let (g, gx) = net
            .backward(&cache, &Matrix::zeros(out.rows(), out.cols()))
            .unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_linear_gradient() {
        let net = single(
            Matrix::from_rows(&[[2.0]]).unwrap(),
            vec![0.0],
            Activation::Identity,
        );
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gx) = net
            .backward(&cache, &Matrix::from_rows(&[[1.0]]).unwrap())
            .unwrap();
        assert_eq!(g.layers[0].weights[(0, 0)], 3.0);
        assert_eq!(g.layers[0].bias[0], 1.0);
        assert_eq!(gx[(0, 0)], 2.0);
    }

    fn check_activation(hidden: Activation, seed: u64) {
        let mut rng = RngStream::new(seed);
        let net = DenseNet::glorot(&[4, 6, 5, 3], hidden, Activation::Identity, &mut rng);
        let mut x = Matrix::zeros(16, 4);
        for v in x.as_mut_slice() {
            *v = rng.normal();
        }
        let mut target = Matrix::zeros(16, 3);
        for v in target.as_mut_slice() {
            *v = rng.normal();
        }
        // loss = 0.5 * ||net(x) - target||^2
        let loss = |p: &[f64]| {
            let mut n = net.clone();
            n.read_params(p);
            let out = n.predict(&x).unwrap();
            out.as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(a, b)| 0.5 * (a - b) * (a - b))
                .sum::<f64>()
        };
        let (out, cache) = net.forward(&x).unwrap();
        let mut up = out.clone();
        up.add_scaled(&target, -1.0).unwrap();
        let (g, _) = net.backward(&cache, &up).unwrap();
        let report = finite_diff_check(
            loss,
            &net.params(),
            &g.to_flat(),
            &[("net".to_string(), 0..net.num_params())],
            1e-4,
            1e-4,
        );
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn backprop_matches_finite_differences() {
        check_activation(Activation::Tanh, 11);
        check_activation(Activation::Relu, 12);
        check_activation(Activation::Identity, 13);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(5);
        let net = DenseNet::glorot(&[3, 8, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Matrix::from_rows(&[[0.3, -0.7, 1.1], [0.9, 0.2, -0.4]]).unwrap();
        let loss = |p: &[f64]| {
            let xm = Matrix::from_vec(2, 3, p.to_vec()).unwrap();
            net.predict(&xm).unwrap().as_slice().iter().sum::<f64>()
        };
        let (out, cache) = net.forward(&x).unwrap();
        let ones = Matrix::from_vec(out.rows(), out.cols(), vec![1.0; out.rows() * out.cols()])
            .unwrap();
        let (_, gx) = net.backward(&cache, &ones).unwrap();
        let report = finite_diff_check(
            loss,
            x.as_slice(),
            gx.as_slice(),
            &[("input".to_string(), 0..6)],
            1e-4,
            1e-4,
        );
        assert!(report.passed(), "{report:?}");
    }
}
