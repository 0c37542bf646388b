//! Dense feed-forward network with hand-written backpropagation.
//!
//! Weights are stored as `(fan_in, fan_out)` matrices so a batch of row
//! vectors propagates as `x · W + b`. Every array is `f64`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major batch matrix: one sample per row.
pub type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &Mat) -> Mat {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    /// Multiplies `upstream` in place by the activation derivative.
    fn backprop(self, pre: &Mat, post: &Mat, upstream: &mut Mat) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(upstream).and(pre).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(upstream)
                .and(post)
                .for_each(|g, &h| *g *= 1.0 - h * h),
        }
    }
}

/// Per-layer activations recorded by [`Mlp::forward`].
///
/// `activations[0]` is the network input and `activations[L]` its output;
/// `pre_activations[l]` is `activations[l] · W_l + b_l`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Mat>,
    pre_activations: Vec<Mat>,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Mat {
        &self.activations[0]
    }
}

/// Parameter gradients, shaped like the network that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Mat::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    /// Flattened in the same order as [`Mlp::param`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut rest = index;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if rest < w.len() {
                return w[[rest / w.ncols(), rest % w.ncols()]];
            }
            rest -= w.len();
            if rest < b.len() {
                return b[rest];
            }
            rest -= b.len();
        }
        panic!("gradient index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Array1<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl Mlp {
    /// Seeded initialization: every weight and bias of a layer is drawn
    /// uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidLayerSizes(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidLayerSizes(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Mat::from_shape_simple_fn((fan_in, fan_out), || {
                rng.random_range(-bound..=bound)
            }));
            biases.push(Array1::from_shape_simple_fn(fan_out, || {
                rng.random_range(-bound..=bound)
            }));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    /// Builds a network from explicit parameters, validating shapes.
    pub fn from_parts(
        weights: Vec<Mat>,
        biases: Vec<Array1<f64>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Architecture(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].nrows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != *layer_sizes.last().unwrap() || w.ncols() != b.len() {
                return Err(Error::Architecture(format!(
                    "layer {l}: weight {:?} incompatible with bias {} and previous width {}",
                    w.dim(),
                    b.len(),
                    layer_sizes.last().unwrap()
                )));
            }
            layer_sizes.push(w.ncols());
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidLayerSizes(format!("{layer_sizes:?}")));
        }
        let all_finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// True when `other` has the same layer sizes and activations.
    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.hidden_activation == other.hidden_activation
            && self.output_activation == other.output_activation
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &Mat) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        Ok(())
    }

    /// Forward pass without recording intermediates.
    pub fn predict(&self, input: &Mat) -> Result<Mat> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = x.dot(w) + b;
            x = self.activation_of(l).apply(&z);
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Mat) -> Result<(Mat, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        activations.push(input.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = activations[l].dot(w) + b;
            activations.push(self.activation_of(l).apply(&z));
            pre_activations.push(z);
        }
        let out = activations.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                activations,
                pre_activations,
            },
        ))
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to every
    /// parameter and to the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Mat) -> Result<(Gradients, Mat)> {
        if cache.pre_activations.len() != self.weights.len()
            || cache
                .pre_activations
                .iter()
                .zip(&self.weights)
                .any(|(z, w)| z.ncols() != w.ncols())
        {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if upstream.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "upstream {:?} does not match output {:?}",
                upstream.dim(),
                cache.output().dim()
            )));
        }
        let n = self.weights.len();
        let mut grad_w = Vec::with_capacity(n);
        let mut grad_b = Vec::with_capacity(n);
        let mut delta = upstream.clone();
        self.activation_of(n - 1).backprop(
            &cache.pre_activations[n - 1],
            &cache.activations[n],
            &mut delta,
        );
        let mut input_grad = Mat::zeros((0, 0));
        for l in (0..n).rev() {
            grad_w.push(cache.activations[l].t().dot(&delta));
            grad_b.push(delta.sum_axis(Axis(0)));
            let mut prev = delta.dot(&self.weights[l].t());
            if l == 0 {
                input_grad = prev;
                break;
            }
            self.activation_of(l - 1).backprop(
                &cache.pre_activations[l - 1],
                &cache.activations[l],
                &mut prev,
            );
            delta = prev;
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok((
            Gradients {
                weights: grad_w,
                biases: grad_b,
            },
            input_grad,
        ))
    }

    /// Flat parameter access: layer by layer, weights (row-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (layer, offset, is_bias) = self.locate(index);
        if is_bias {
            self.biases[layer][offset]
        } else {
            let w = &self.weights[layer];
            w[[offset / w.ncols(), offset % w.ncols()]]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, offset, is_bias) = self.locate(index);
        if is_bias {
            self.biases[layer][offset] = value;
        } else {
            let cols = self.weights[layer].ncols();
            self.weights[layer][[offset / cols, offset % cols]] = value;
        }
    }

    fn locate(&self, index: usize) -> (usize, usize, bool) {
        let mut rest = index;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if rest < w.len() {
                return (l, rest, false);
            }
            rest -= w.len();
            if rest < b.len() {
                return (l, rest, true);
            }
            rest -= b.len();
        }
        panic!("parameter index {index} out of range ({} params)", self.num_params());
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Mat], &mut [Array1<f64>]) {
        (&mut self.weights, &mut self.biases)
    }
}

/// Horizontally stacks two batches with the same row count.
pub fn concat_cols(left: &Mat, right: &Mat) -> Result<Mat> {
    if left.nrows() != right.nrows() {
        return Err(Error::Shape(format!(
            "cannot stack {} rows beside {} rows",
            left.nrows(),
            right.nrows()
        )));
    }
    Ok(ndarray::concatenate(Axis(1), &[left.view(), right.view()]).expect("row counts checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear(w: f64, b: f64) -> Mlp {
        Mlp::from_parts(
            vec![array![[w]]],
            vec![array![b]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_layer_sizes() {
        assert!(Mlp::new(&[3], Activation::Relu, Activation::Identity, 0).is_err());
        assert!(Mlp::new(&[], Activation::Relu, Activation::Identity, 0).is_err());
        assert!(Mlp::new(&[3, 0, 1], Activation::Relu, Activation::Identity, 0).is_err());
    }

    #[test]
    fn single_layer_is_affine() {
        let net = Mlp::new(&[1, 1], Activation::Relu, Activation::Identity, 0).unwrap();
        let w = net.weights()[0][[0, 0]];
        let b = net.biases()[0][0];
        assert!(w.is_finite() && b.is_finite());
        let y = net.predict(&array![[2.5]]).unwrap();
        assert_eq!(y[[0, 0]], 2.5 * w + b);
    }

    #[test]
    fn same_seed_same_params() {
        let a = Mlp::new(&[3, 16, 2], Activation::Tanh, Activation::Tanh, 9).unwrap();
        let b = Mlp::new(&[3, 16, 2], Activation::Tanh, Activation::Tanh, 9).unwrap();
        let c = Mlp::new(&[3, 16, 2], Activation::Tanh, Activation::Tanh, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = Mlp::new(&[4, 9, 1], Activation::Relu, Activation::Identity, 3).unwrap();
        for (w, b) in net.weights().iter().zip(net.biases()) {
            let bound = 1.0 / (w.nrows() as f64).sqrt();
            assert!(w.iter().chain(b.iter()).all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn td3_sized_critic_param_count() {
        let net = Mlp::new(&[3, 256, 256, 1], Activation::Relu, Activation::Identity, 0).unwrap();
        // (3·256 + 256) + (256·256 + 256) + (256·1 + 1)
        assert_eq!(net.num_params(), 67073);
    }

    #[test]
    fn linear_forward_value() {
        let net = linear(2.0, 1.0);
        let (y, _) = net.forward(&array![[3.0]]).unwrap();
        assert_eq!(y[[0, 0]], 7.0);
    }

    #[test]
    fn zero_weight_tanh_is_zero() {
        let net = Mlp::from_parts(
            vec![Mat::zeros((2, 3)), Mat::zeros((3, 1))],
            vec![Array1::zeros(3), Array1::zeros(1)],
            Activation::Tanh,
            Activation::Tanh,
        )
        .unwrap();
        assert_eq!(net.predict(&array![[0.0, 0.0]]).unwrap()[[0, 0]], 0.0);
    }

    #[test]
    fn batch_rows_preserved() {
        let net = Mlp::new(&[2, 8, 3], Activation::Relu, Activation::Identity, 1).unwrap();
        let (y, cache) = net.forward(&Mat::ones((4, 2))).unwrap();
        assert_eq!(y.dim(), (4, 3));
        assert_eq!(cache.output(), &y);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity, 1).unwrap();
        assert!(matches!(net.forward(&Mat::ones((1, 3))), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_backward_product_rule() {
        let net = Mlp::from_parts(
            vec![array![[2.0]]],
            vec![array![0.0]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let (_, cache) = net.forward(&array![[3.0]]).unwrap();
        let (g, dx) = net.backward(&cache, &array![[1.0]]).unwrap();
        assert_eq!(g.weights[0][[0, 0]], 3.0);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(dx[[0, 0]], 2.0);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let net = Mlp::new(&[3, 7, 2], Activation::Tanh, Activation::Identity, 4).unwrap();
        let (_, cache) = net.forward(&Mat::from_elem((5, 3), 0.3)).unwrap();
        let (g, dx) = net.backward(&cache, &Mat::zeros((5, 2))).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let net = Mlp::new(&[3, 7, 2], Activation::Tanh, Activation::Identity, 4).unwrap();
        let (_, cache) = net.forward(&Mat::ones((5, 3))).unwrap();
        assert!(net.backward(&cache, &Mat::zeros((4, 2))).is_err());
        let other = Mlp::new(&[3, 6, 2], Activation::Tanh, Activation::Identity, 4).unwrap();
        assert!(other.backward(&cache, &Mat::zeros((5, 2))).is_err());
    }

    #[test]
    fn input_gradient_matches_central_difference() {
        let net = Mlp::new(&[3, 12, 1], Activation::Tanh, Activation::Identity, 21).unwrap();
        let x = array![[0.3, -0.7, 0.2]];
        let (_, cache) = net.forward(&x).unwrap();
        let (_, dx) = net.backward(&cache, &array![[1.0]]).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[[0, j]] += h;
            minus[[0, j]] -= h;
            let fd = (net.predict(&plus).unwrap()[[0, 0]] - net.predict(&minus).unwrap()[[0, 0]])
                / (2.0 * h);
            let rel = (dx[[0, j]] - fd).abs() / (dx[[0, j]].abs() + fd.abs()).max(1e-8);
            assert!(rel <= 1e-4, "coordinate {j}: analytic {} vs fd {fd}", dx[[0, j]]);
        }
    }

    #[test]
    fn flat_param_access_roundtrip() {
        let mut net = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, 5).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.num_params());
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(net.param(i), *v);
        }
        net.set_param(8, 42.0);
        assert_eq!(net.biases()[0][2], 42.0);
    }

    #[test]
    fn concat_cols_checks_rows() {
        let a = Mat::ones((2, 1));
        let b = Mat::zeros((2, 2));
        assert_eq!(concat_cols(&a, &b).unwrap().dim(), (2, 3));
        assert!(concat_cols(&a, &Mat::zeros((3, 1))).is_err());
    }
}
