//! Critic and actor objectives with hand-derived gradients.

use ndarray::{s, Array1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::agent::Agent;
use crate::data::{mean_abs_q, Batch};
use crate::error::{Error, Result};
use crate::nn::{concat_cols, ForwardCache, Gradients, Mat, Mlp};

/// Floor on the mean |Q| in the denominator of λ.
pub const LAMBDA_Q_FLOOR: f64 = 1e-3;

/// Settings the TD target depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetParams {
    pub gamma: f64,
    pub policy_noise_sd: f64,
    pub noise_clip: f64,
    /// `Some(R_max)` clips targets to `±R_max/(1−γ)`.
    pub clip_reward: Option<f64>,
}

/// `r + γ·(1−done)·min(Q1', Q2')(s', a'')` with smoothed target actions.
///
/// Noise is drawn row by row before anything else touches `rng`.
pub fn td_target<R: Rng + ?Sized>(
    batch: &Batch,
    agent: &Agent,
    params: &TargetParams,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let half = agent.action_half_range();
    let mut next_actions = agent.target_act_batch(&batch.next_states)?;
    for mut row in next_actions.rows_mut() {
        for (d, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let limit = params.noise_clip * half[d];
            *v += (params.policy_noise_sd * half[d] * z).clamp(-limit, limit);
        }
    }
    agent.clip_actions(&mut next_actions);
    let input = concat_cols(&batch.next_states, &next_actions)?;
    let q1 = agent.critic_targets[0].predict(&input)?;
    let q2 = agent.critic_targets[1].predict(&input)?;
    let mut y = Array1::zeros(batch.len());
    for i in 0..batch.len() {
        let next = q1[[i, 0]].min(q2[[i, 0]]);
        y[i] = batch.rewards[i] + params.gamma * (1.0 - batch.dones[i]) * next;
    }
    if let Some(r_max) = params.clip_reward {
        let bound = r_max / (1.0 - params.gamma);
        y.mapv_inplace(|v| v.clamp(-bound, bound));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("TD target".into()));
    }
    Ok(y)
}

/// `β·range²/max(ε₀, E|Q1(s,a)|)` over the batch, using the first
/// coordinate's range.
pub fn lambda_coeff(batch: &Batch, agent: &Agent, beta: f64) -> Result<f64> {
    let range = agent.action_high()[0] - agent.action_low()[0];
    let scale = mean_abs_q(batch, &agent.critics[0])?;
    Ok(beta * range * range / scale.max(LAMBDA_Q_FLOOR))
}

/// `m` uniform actions per transition; row `i·m + j` pairs with transition `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformActions {
    pub actions: Mat,
    pub per_transition: usize,
}

impl UniformActions {
    pub fn draw<R: Rng + ?Sized>(
        transitions: usize,
        per_transition: usize,
        low: &[f64],
        high: &[f64],
        rng: &mut R,
    ) -> Self {
        let mut actions = Mat::zeros((transitions * per_transition, low.len()));
        for mut row in actions.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                *v = rng.random_range(low[d]..high[d]);
            }
        }
        Self {
            actions,
            per_transition,
        }
    }

    fn repeat_rows(&self, m: &Mat) -> Mat {
        let idx: Vec<usize> = (0..self.actions.nrows())
            .map(|k| k / self.per_transition)
            .collect();
        m.select(Axis(0), &idx)
    }
}

/// Plain regression of one critic onto fixed targets.
#[derive(Clone, Debug)]
pub struct TdRegression {
    /// `mean (Q(s,a) − y)²`
    pub loss: f64,
    pub grads: Gradients,
    pub q_mean: f64,
}

pub fn td_regression(critic: &Mlp, batch: &Batch, targets: &Array1<f64>) -> Result<TdRegression> {
    let n = batch.len() as f64;
    let (q, cache) = critic.forward(&concat_cols(&batch.states, &batch.actions)?)?;
    let resid = &q.column(0) - targets;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let upstream = (&resid * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, &upstream)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    Ok(TdRegression {
        loss,
        grads,
        q_mean: q.mean().unwrap_or(0.0),
    })
}

/// One critic's share of the regularized objective.
#[derive(Clone, Debug)]
pub struct CriticObjective {
    pub loss: f64,
    /// `mean (Q(s,a) − y)²`
    pub td_term: f64,
    /// `mean (Q(s,a') − (y − λ‖a−a'‖²))²`, before the α weight.
    pub reg_term: f64,
    pub grads: Gradients,
    pub q_data_mean: f64,
    pub q_uniform_mean: f64,
}

/// `mean_i[(Q(s_i,a_i) − y_i)² + α·(1/M)·Σ_j (Q(s_i,a'_ij) − (y_i − λ‖a_i−a'_ij‖²))²]`
/// for a single critic. Targets are constants.
pub fn regularized_critic_objective(
    critic: &Mlp,
    batch: &Batch,
    targets: &Array1<f64>,
    uniform: &UniformActions,
    alpha: f64,
    lambda: f64,
) -> Result<CriticObjective> {
    let td = td_regression(critic, batch, targets)?;
    let (td_term, mut grads) = (td.loss, td.grads);

    let rows = uniform.actions.nrows();
    let states = uniform.repeat_rows(&batch.states);
    let data_actions = uniform.repeat_rows(&batch.actions);
    let (qu, ucache) = critic.forward(&concat_cols(&states, &uniform.actions)?)?;
    let mut uresid = Array1::zeros(rows);
    for k in 0..rows {
        let dist2: f64 = data_actions
            .row(k)
            .iter()
            .zip(uniform.actions.row(k))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let surrogate = targets[k / uniform.per_transition] - lambda * dist2;
        uresid[k] = qu[[k, 0]] - surrogate;
    }
    let reg_term = uresid.iter().map(|r| r * r).sum::<f64>() / rows as f64;
    let uupstream = (&uresid * (2.0 * alpha / rows as f64)).insert_axis(Axis(1));
    let (ugrads, _) = critic.backward(&ucache, &uupstream)?;
    grads.add_assign(&ugrads);

    let loss = td_term + alpha * reg_term;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    Ok(CriticObjective {
        loss,
        td_term,
        reg_term,
        grads,
        q_data_mean: td.q_mean,
        q_uniform_mean: qu.mean().unwrap_or(0.0),
    })
}

/// Both critics' objectives on one batch.
#[derive(Clone, Debug)]
pub struct CriticStep {
    /// Sum over the two critics.
    pub loss: f64,
    pub grads: [Gradients; 2],
    pub lambda: f64,
    pub q_data: f64,
    pub q_uniform: f64,
    pub targets: Array1<f64>,
}

/// Regularized twin-critic loss. The TD noise is drawn first, then the
/// uniform actions, which both critics share.
#[allow(clippy::too_many_arguments)]
pub fn abr_critic_loss<R: Rng + ?Sized>(
    batch: &Batch,
    agent: &Agent,
    params: &TargetParams,
    alpha: f64,
    beta: f64,
    per_transition: usize,
    rng: &mut R,
) -> Result<CriticStep> {
    if per_transition == 0 {
        return Err(Error::Config("uniform_samples must be at least 1".into()));
    }
    let targets = td_target(batch, agent, params, rng)?;
    let lambda = lambda_coeff(batch, agent, beta)?;
    let uniform = UniformActions::draw(
        batch.len(),
        per_transition,
        agent.action_low(),
        agent.action_high(),
        rng,
    );
    let c1 = regularized_critic_objective(&agent.critics[0], batch, &targets, &uniform, alpha, lambda)?;
    let c2 = regularized_critic_objective(&agent.critics[1], batch, &targets, &uniform, alpha, lambda)?;
    Ok(CriticStep {
        loss: c1.loss + c2.loss,
        lambda,
        q_data: c1.q_data_mean,
        q_uniform: c1.q_uniform_mean,
        grads: [c1.grads, c2.grads],
        targets,
    })
}

/// Actor outputs in action units, with the cache needed to backpropagate.
pub(crate) struct ActorForward {
    pub actions: Mat,
    cache: ForwardCache,
}

pub(crate) fn actor_forward(agent: &Agent, states: &Mat) -> Result<ActorForward> {
    let (squashed, cache) = agent.actor.forward(states)?;
    Ok(ActorForward {
        actions: agent.scale_actions(&squashed),
        cache,
    })
}

impl ActorForward {
    /// Backpropagates `∂L/∂a` (in action units) through the box scaling
    /// into the actor's parameters.
    pub fn param_grads(&self, agent: &Agent, dl_da: &Mat) -> Result<Gradients> {
        let upstream = dl_da * &agent.action_half_range();
        Ok(agent.actor.backward(&self.cache, &upstream)?.0)
    }
}

/// Actor outputs on `states` together with `Q1` and `∂Q1/∂a` there.
pub(crate) struct ActorProbe {
    pub forward: ActorForward,
    pub q: Array1<f64>,
    pub dq_da: Mat,
}

pub(crate) fn probe_actor(agent: &Agent, states: &Mat) -> Result<ActorProbe> {
    let forward = actor_forward(agent, states)?;
    let (q, qcache) = agent.critics[0].forward(&concat_cols(states, &forward.actions)?)?;
    let ones = Mat::ones(q.raw_dim());
    let (_, input_grad) = agent.critics[0].backward(&qcache, &ones)?;
    let dq_da = input_grad.slice(s![.., states.ncols()..]).to_owned();
    Ok(ActorProbe {
        forward,
        q: q.index_axis_move(Axis(1), 0),
        dq_da,
    })
}

/// `−mean Q1(s, actor(s))` and its gradient with respect to the actor.
pub fn actor_loss(states: &Mat, agent: &Agent) -> Result<(f64, Gradients)> {
    let probe = probe_actor(agent, states)?;
    let n = states.nrows() as f64;
    let loss = -probe.q.sum() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor loss".into()));
    }
    let dl_da = &probe.dq_da * (-1.0 / n);
    Ok((loss, probe.forward.param_grads(agent, &dl_da)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_parameter_gradients;
    use crate::nn::Activation;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_critic(input: usize, c: f64) -> Mlp {
        Mlp::from_parts(
            vec![Mat::zeros((input, 1))],
            vec![array![c]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    fn one_step(r: f64, done: f64) -> Batch {
        Batch {
            states: array![[0.3]],
            actions: array![[0.0]],
            rewards: array![r],
            next_states: array![[0.7]],
            dones: array![done],
        }
    }

    fn params(gamma: f64) -> TargetParams {
        TargetParams {
            gamma,
            policy_noise_sd: 0.2,
            noise_clip: 0.5,
            clip_reward: None,
        }
    }

    #[test]
    fn twin_minimum_in_target() {
        let mut agent = Agent::new(1, &[-1.0], &[1.0], &[4], 0).unwrap();
        agent.critic_targets = [constant_critic(2, 3.0), constant_critic(2, 2.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = td_target(&one_step(1.0, 0.0), &agent, &params(0.99), &mut rng).unwrap();
        assert!((y[0] - 2.98).abs() < 1e-12);
        let y = td_target(&one_step(5.0, 1.0), &agent, &params(0.99), &mut rng).unwrap();
        assert_eq!(y[0], 5.0);
        let y = td_target(&one_step(-0.4, 0.0), &agent, &params(0.0), &mut rng).unwrap();
        assert_eq!(y[0], -0.4);
    }

    #[test]
    fn target_clipping() {
        let mut agent = Agent::new(1, &[-1.0], &[1.0], &[4], 0).unwrap();
        agent.critic_targets = [constant_critic(2, 1e6), constant_critic(2, 1e6)];
        let mut p = params(0.9);
        p.clip_reward = Some(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = td_target(&one_step(1.0, 0.0), &agent, &p, &mut rng).unwrap();
        assert!((y[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_examples() {
        let mut agent = Agent::new(1, &[-1.0], &[1.0], &[4], 0).unwrap();
        let b = one_step(0.0, 1.0);
        agent.critics[0] = constant_critic(2, -50.0);
        assert!((lambda_coeff(&b, &agent, 1.0).unwrap() - 0.08).abs() < 1e-15);
        assert!((lambda_coeff(&b, &agent, 2.0).unwrap() - 0.16).abs() < 1e-15);
        agent.critics[0] = constant_critic(2, 1e-9);
        assert!((lambda_coeff(&b, &agent, 1.0).unwrap() - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_regularized_loss() {
        let critic = constant_critic(2, 0.0);
        let uniform = UniformActions {
            actions: array![[0.5]],
            per_transition: 1,
        };
        for alpha in [0.0, 0.15, 2.0] {
            let out = regularized_critic_objective(
                &critic,
                &one_step(0.0, 1.0),
                &array![1.0],
                &uniform,
                alpha,
                1.0,
            )
            .unwrap();
            assert!((out.loss - (1.0 + alpha * 0.5625)).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_draws_cover_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = UniformActions::draw(100, 3, &[-2.0, 0.0], &[1.0, 0.5], &mut rng);
        assert_eq!(u.actions.dim(), (300, 2));
        assert!(u.actions.column(0).iter().all(|v| (-2.0..1.0).contains(v)));
        assert!(u.actions.column(1).iter().all(|v| (0.0..0.5).contains(v)));
        let small = UniformActions::draw(2, 3, &[0.0], &[1.0], &mut rng);
        assert_eq!(
            small.repeat_rows(&array![[1.0], [2.0]]).column(0).to_vec(),
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn constant_critic_gives_flat_actor() {
        let mut agent = Agent::new(2, &[-1.0], &[1.0], &[8], 4).unwrap();
        agent.critics[0] = constant_critic(3, 1.7);
        let (loss, grads) = actor_loss(&array![[0.1, 0.2], [0.3, -0.4]], &agent).unwrap();
        assert!((loss + 1.7).abs() < 1e-15);
        assert_eq!(grads.l2_norm(), 0.0);
    }

    #[test]
    fn absolute_value_critic_pulls_actor_to_zero() {
        // Q(s, a) = −relu(a) − relu(−a) = −|a|
        let critic = Mlp::from_parts(
            vec![array![[0.0, 0.0], [1.0, -1.0]], array![[-1.0], [-1.0]]],
            vec![array![0.0, 0.0], array![0.0]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        // actor outputs tanh(0.3) > 0 for every state
        let actor = Mlp::from_parts(
            vec![array![[0.0]]],
            vec![array![0.3]],
            Activation::Relu,
            Activation::Tanh,
        )
        .unwrap();
        let mut agent = Agent::new(1, &[-1.0], &[1.0], &[2], 0).unwrap();
        agent.actor = actor;
        agent.critics[0] = critic;
        let (_, grads) = actor_loss(&array![[0.5]], &agent).unwrap();
        assert!(grads.biases[0][0] > 0.0, "gradient descent must reduce the bias");
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let agent = Agent::new(3, &[-1.0, -0.5], &[1.0, 1.5], &[16, 16], 5).unwrap();
        let batch = Batch {
            states: Mat::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0)),
            actions: Mat::from_shape_simple_fn((6, 2), || rng.random_range(-0.5..1.0)),
            rewards: Array1::from_shape_simple_fn(6, || rng.random_range(-1.0..1.0)),
            next_states: Mat::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0)),
            dones: array![0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        };
        let y = td_target(&batch, &agent, &params(0.99), &mut rng).unwrap();
        let u = UniformActions::draw(6, 3, agent.action_low(), agent.action_high(), &mut rng);
        let out = regularized_critic_objective(&agent.critics[1], &batch, &y, &u, 0.4, 0.7).unwrap();
        let err = check_parameter_gradients(&agent.critics[1], &out.grads, |c| {
            Ok(regularized_critic_objective(c, &batch, &y, &u, 0.4, 0.7)?.loss)
        })
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let agent = Agent::new(3, &[-1.0, -2.0], &[1.0, 0.0], &[16, 16], 6).unwrap();
        let states = Mat::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let (_, grads) = actor_loss(&states, &agent).unwrap();
        let mut probe = agent.clone();
        let err = check_parameter_gradients(&agent.actor, &grads, |a| {
            probe.actor = a.clone();
            Ok(actor_loss(&states, &probe)?.0)
        })
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}
