//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Gradients, Mat, Mlp};
use crate::error::{Error, Result};

/// Central-difference step used throughout.
pub const FD_STEP: f64 = 1e-5;

/// Parameters probed per layer (weights and biases sampled separately).
const SAMPLES_PER_BLOCK: usize = 24;

/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Deterministic spread of flat parameter indices covering every layer's
/// weight block and bias block.
pub fn sample_indices(net: &Mlp) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (w, b) in net.weights().iter().zip(net.biases()) {
        for (start, len) in [(offset, w.len()), (offset + w.len(), b.len())] {
            let take = len.min(SAMPLES_PER_BLOCK);
            out.extend((0..take).map(|k| start + k * len / take));
        }
        offset += w.len() + b.len();
    }
    out
}

/// Compares `analytic` against central differences of `loss_at` on the
/// sampled parameters of `net`, returning the worst relative error.
///
/// `loss_at` receives a perturbed copy of `net` and must evaluate the same
/// scalar whose gradient `analytic` claims to be.
pub fn check_parameter_gradients<F>(net: &Mlp, analytic: &Gradients, mut loss_at: F) -> Result<f64>
where
    F: FnMut(&Mlp) -> Result<f64>,
{
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for idx in sample_indices(net) {
        let original = probe.param(idx);
        probe.set_param(idx, original + FD_STEP);
        let plus = loss_at(&probe)?;
        probe.set_param(idx, original - FD_STEP);
        let minus = loss_at(&probe)?;
        probe.set_param(idx, original);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while probing parameter {idx}")));
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.get(idx), numeric));
    }
    Ok(worst)
}

/// Same as [`check_parameter_gradients`] for gradients with respect to an
/// input matrix (every entry is probed).
pub fn check_input_gradients<F>(input: &Mat, analytic: &Mat, mut loss_at: F) -> Result<f64>
where
    F: FnMut(&Mat) -> Result<f64>,
{
    let mut probe = input.clone();
    let mut worst = 0.0f64;
    for idx in 0..input.len() {
        let pos = (idx / input.ncols(), idx % input.ncols());
        let original = probe[pos];
        probe[pos] = original + FD_STEP;
        let plus = loss_at(&probe)?;
        probe[pos] = original - FD_STEP;
        let minus = loss_at(&probe)?;
        probe[pos] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[pos], numeric));
    }
    Ok(worst)
}

/// Scalar losses built directly on the network output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CheckLoss {
    /// `½·Σ y²`
    HalfSquaredNorm,
    /// `Σ c ⊙ y` with fixed pseudo-random coefficients `c ∈ [−1, 1]`.
    RandomLinear { seed: u64 },
}

impl CheckLoss {
    fn upstream(&self, out: &Mat) -> Mat {
        match *self {
            CheckLoss::HalfSquaredNorm => out.clone(),
            CheckLoss::RandomLinear { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Mat::from_shape_simple_fn(out.raw_dim(), || rng.random_range(-1.0..1.0))
            }
        }
    }

    fn value(&self, out: &Mat) -> f64 {
        match self {
            CheckLoss::HalfSquaredNorm => 0.5 * out.iter().map(|v| v * v).sum::<f64>(),
            CheckLoss::RandomLinear { .. } => (self.upstream(out) * out).sum(),
        }
    }
}

/// Worst relative error between backpropagated and finite-difference
/// gradients over the sampled parameters and every input entry.
pub fn grad_check(net: &Mlp, input: &Mat, loss: CheckLoss) -> Result<f64> {
    let (out, cache) = net.forward(input)?;
    if !loss.value(&out).is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    let (grads, input_grad) = net.backward(&cache, &loss.upstream(&out))?;
    let params = check_parameter_gradients(net, &grads, |n| Ok(loss.value(&n.predict(input)?)))?;
    let inputs = check_input_gradients(input, &input_grad, |x| Ok(loss.value(&net.predict(x)?)))?;
    Ok(params.max(inputs))
}
