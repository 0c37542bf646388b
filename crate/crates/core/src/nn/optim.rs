//! Adam and target-network blending.

use ndarray::Zip;

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first_moment: Gradients,
    second_moment: Gradients,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self::with_hyperparams(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(net: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let shapes_match = grads.weights.len() == net.num_layers()
        && grads
            .weights
            .iter()
            .zip(net.weights())
            .all(|(g, w)| g.dim() == w.dim())
        && grads
            .biases
            .iter()
            .zip(net.biases())
            .all(|(g, b)| g.len() == b.len())
        && state.first_moment.weights.len() == net.num_layers();
    if !shapes_match {
        return Err(Error::Shape("gradients do not match network".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients passed to adam_step".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    let (weights, biases) = net.params_mut();
    for (l, w) in weights.iter_mut().enumerate() {
        Zip::from(w)
            .and(&mut state.first_moment.weights[l])
            .and(&mut state.second_moment.weights[l])
            .and(&grads.weights[l])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    for (l, b) in biases.iter_mut().enumerate() {
        Zip::from(b)
            .and(&mut state.first_moment.biases[l])
            .and(&mut state.second_moment.biases[l])
            .and(&grads.biases[l])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}

/// `target ← τ·online + (1−τ)·target`, parameter by parameter.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Architecture(format!(
            "target {:?} vs online {:?}",
            target.layer_sizes(),
            online.layer_sizes()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("polyak rate {tau} outside [0, 1]")));
    }
    let blend = |t: &mut f64, o: f64| {
        let (lo, hi) = if *t <= o { (*t, o) } else { (o, *t) };
        // rounding may step one ulp outside the segment
        *t = (tau * o + (1.0 - tau) * *t).clamp(lo, hi);
    };
    let (weights, biases) = target.params_mut();
    for (w, ow) in weights.iter_mut().zip(online.weights()) {
        Zip::from(w).and(ow).for_each(|t, &o| blend(t, o));
    }
    for (b, ob) in biases.iter_mut().zip(online.biases()) {
        Zip::from(b).and(ob).for_each(|t, &o| blend(t, o));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Mat};
    use ndarray::{array, Array1};

    fn scalar(w: f64) -> Mlp {
        Mlp::from_parts(
            vec![array![[w]]],
            vec![array![0.0]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    fn grad_of(net: &Mlp, gw: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.weights[0][[0, 0]] = gw;
        g
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.7, -0.02] {
            let mut net = scalar(1.0);
            let mut st = AdamState::new(&net);
            let grads = grad_of(&net, g);
            adam_step(&mut net, &grads, &mut st, 0.01).unwrap();
            let delta = net.weights()[0][[0, 0]] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-8, "delta {delta}");
            assert_eq!(st.step_count(), 1);
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut net = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, 2).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let zeros = Gradients::zeros_like(&net);
        for _ in 0..3 {
            adam_step(&mut net, &zeros, &mut st, 0.1).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = (w - 5)^2, reference recursion run directly on the scalar
        let mut net = scalar(0.0);
        let mut st = AdamState::new(&net);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * (net.weights()[0][[0, 0]] - 5.0);
            let grads = grad_of(&net, g);
            adam_step(&mut net, &grads, &mut st, 0.1).unwrap();
            let gr = 2.0 * (w - 5.0);
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            w -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        let learned = net.weights()[0][[0, 0]];
        assert_eq!(learned, w);
        assert!((learned - 5.0).abs() < 0.1, "w = {learned}");
    }

    #[test]
    fn rejects_non_finite_and_misshapen_grads() {
        let mut net = scalar(1.0);
        let mut st = AdamState::new(&net);
        let bad = grad_of(&net, f64::NAN);
        assert!(adam_step(&mut net, &bad, &mut st, 0.1).is_err());
        let other = Mlp::new(&[2, 1], Activation::Relu, Activation::Identity, 0).unwrap();
        assert!(adam_step(&mut net, &Gradients::zeros_like(&other), &mut st, 0.1).is_err());
        assert_eq!(st.step_count(), 0);
    }

    fn filled(v: f64) -> Mlp {
        Mlp::from_parts(
            vec![Mat::from_elem((2, 3), v), Mat::from_elem((3, 1), v)],
            vec![Array1::from_elem(3, v), Array1::from_elem(1, v)],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn polyak_limits_and_arithmetic() {
        let online = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, 8).unwrap();
        let mut t = filled(0.25);
        polyak_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = filled(0.25);
        polyak_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, filled(0.25));

        let mut t = filled(0.0);
        polyak_update(&mut t, &filled(1.0), 0.005).unwrap();
        assert!(t.flat_params().iter().all(|&v| v == 0.005));
    }

    #[test]
    fn polyak_rejects_mismatch() {
        let mut t = filled(0.0);
        let other = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity, 8).unwrap();
        assert!(polyak_update(&mut t, &other, 0.5).is_err());
        assert!(polyak_update(&mut t, &filled(1.0), 1.5).is_err());
    }
}
