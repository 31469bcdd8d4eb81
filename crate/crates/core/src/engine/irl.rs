//! Trajectory likelihood under a learned reward, normalized over an
//! enumerable toy space, and reward learning by gradient ascent on it.

use crate::autodiff::{dot, logsumexp, Scalar, Tape, Var};
use crate::optim::{ascend, AscentConfig, Trace};
use crate::params::{check_shape, Matrix, ParamBundle, ParamsError};

use super::{EngineError, LoopConfig};

/// Largest trajectory count the normalizer will sum over.
pub const MAX_TRAJECTORIES: u64 = 1_000_000;
const LOG_PROB_TOLERANCE: f64 = 1e-9;

/// Linear reward `R(s, a) = w_s·φ(s) + w_a·ψ(a) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub state_w: Matrix,
    pub action_w: Matrix,
    pub bias: Matrix,
}

impl RewardParams {
    pub fn zeros(state_dim: usize, action_dim: usize) -> Self {
        RewardParams {
            state_w: Matrix::zeros(1, state_dim),
            action_w: Matrix::zeros(1, action_dim),
            bias: Matrix::zeros(1, 1),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_w.cols()
    }

    pub fn action_dim(&self) -> usize {
        self.action_w.cols()
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        dot(self.state_w.data(), state) + dot(self.action_w.data(), action) + self.bias.get(0, 0)
    }

    /// Same reward with the bias shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.bias.set(0, 0, self.bias.get(0, 0) + c);
        out
    }
}

impl ParamBundle for RewardParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("state_w", &self.state_w), ("action_w", &self.action_w), ("bias", &self.bias)]
    }

    fn with_matrices(&self, mats: Vec<Matrix>) -> Result<Self, ParamsError> {
        if mats.len() != 3 {
            return Err(ParamsError::FlatLength { expected: 3, found: mats.len() });
        }
        for ((name, want), got) in self.named().iter().zip(&mats) {
            check_shape(name, got, want.rows(), want.cols())?;
        }
        let mut it = mats.into_iter();
        Ok(RewardParams {
            state_w: it.next().expect("three matrices"),
            action_w: it.next().expect("three matrices"),
            bias: it.next().expect("three matrices"),
        })
    }
}

/// Featurized states and actions with a transition table and a horizon T.
/// Trajectories are state sequences `s_0..s_T` under a fixed action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpace {
    state_features: Vec<Vec<f64>>,
    action_features: Vec<Vec<f64>>,
    initial: Vec<bool>,
    /// `log Q(s' | s, a)` at `(s * actions + a) * states + s'`.
    log_transition: Vec<f64>,
    horizon: usize,
}

impl ToySpace {
    pub fn new(
        state_features: Vec<Vec<f64>>,
        action_features: Vec<Vec<f64>>,
        initial: Vec<bool>,
        log_transition: Vec<f64>,
        horizon: usize,
    ) -> Result<Self, EngineError> {
        let bad = |m: &str| Err(EngineError::ToySpace(m.to_string()));
        let (ns, na) = (state_features.len(), action_features.len());
        if ns == 0 || na == 0 || horizon == 0 {
            return bad("needs at least one state, one action and one step");
        }
        if state_features.iter().any(|f| f.len() != state_features[0].len())
            || action_features.iter().any(|f| f.len() != action_features[0].len())
        {
            return bad("feature vectors differ in length");
        }
        if initial.len() != ns || !initial.iter().any(|&i| i) {
            return bad("initial mask must cover every state and allow at least one");
        }
        if log_transition.len() != ns * na * ns {
            return bad("transition table has the wrong size");
        }
        for row in log_transition.chunks(ns) {
            if logsumexp(row).abs() > 1e-9 {
                return bad("a transition row does not sum to 1");
            }
        }
        Ok(ToySpace { state_features, action_features, initial, log_transition, horizon })
    }

    /// Every state a legal start and every transition uniform.
    pub fn uniform(state_features: Vec<Vec<f64>>, action_features: Vec<Vec<f64>>, horizon: usize) -> Result<Self, EngineError> {
        let (ns, na) = (state_features.len(), action_features.len());
        let lq = -(ns.max(1) as f64).ln();
        ToySpace::new(state_features, action_features, vec![true; ns], vec![lq; ns * na * ns], horizon)
    }

    pub fn states(&self) -> usize {
        self.state_features.len()
    }

    pub fn actions(&self) -> usize {
        self.action_features.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_features(&self, s: usize) -> &[f64] {
        &self.state_features[s]
    }

    pub fn action_features(&self, a: usize) -> &[f64] {
        &self.action_features[a]
    }

    pub fn log_q(&self, s: usize, a: usize, next: usize) -> f64 {
        self.log_transition[(s * self.actions() + a) * self.states() + next]
    }

    /// Uniform over the legal initial states.
    pub fn log_initial(&self, s: usize) -> f64 {
        if self.initial[s] {
            -(self.initial.iter().filter(|&&i| i).count() as f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `states^(T+1)`, or `None` past `u64`.
    pub fn trajectory_count(&self) -> Option<u64> {
        (self.states() as u64).checked_pow(u32::try_from(self.horizon + 1).ok()?)
    }

    fn check_enumerable(&self) -> Result<(), EngineError> {
        match self.trajectory_count() {
            Some(n) if n <= MAX_TRAJECTORIES => Ok(()),
            n => Err(EngineError::SpaceTooLarge(n)),
        }
    }
}

/// One demonstrated trajectory: state and action indices into a [`ToySpace`]
/// and the decoder's log-probability of each transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
}

impl TrajectoryRecord {
    /// Record whose log-probabilities are read from the space's table.
    pub fn in_space(space: &ToySpace, states: Vec<usize>, actions: Vec<usize>) -> Self {
        let log_probs = (0..actions.len()).map(|t| space.log_q(states[t], actions[t], states[t + 1])).collect();
        TrajectoryRecord { states, actions, log_probs }
    }

    fn check(&self, space: &ToySpace) -> Result<(), EngineError> {
        let t = space.horizon();
        let bad = |m: String| Err(EngineError::InconsistentRecord(m));
        if self.states.len() != t + 1 || self.actions.len() != t || self.log_probs.len() != t {
            return bad(format!(
                "lengths {}/{}/{} do not fit horizon {t}",
                self.states.len(),
                self.actions.len(),
                self.log_probs.len()
            ));
        }
        if let Some(s) = self.states.iter().find(|&&s| s >= space.states()) {
            return bad(format!("state {s} is outside the space"));
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= space.actions()) {
            return bad(format!("action {a} is outside the space"));
        }
        if space.log_initial(self.states[0]) == f64::NEG_INFINITY {
            return bad("trajectory starts in an illegal initial state".into());
        }
        for (k, &lp) in self.log_probs.iter().enumerate() {
            let table = space.log_q(self.states[k], self.actions[k], self.states[k + 1]);
            if !lp.is_finite() || (lp - table).abs() > LOG_PROB_TOLERANCE {
                return bad(format!("step {k} log-probability {lp} disagrees with the space ({table})"));
            }
        }
        Ok(())
    }
}

/// `R(s, a)` for every state and action, as `[s][a]`.
fn reward_table<S: Scalar>(space: &ToySpace, state_w: &[S], action_w: &[S], bias: S) -> Vec<Vec<S>> {
    let lift = |f: &[f64]| -> Vec<S> { f.iter().map(|&v| S::constant(v)).collect() };
    let per_action: Vec<S> = (0..space.actions()).map(|a| dot(action_w, &lift(space.action_features(a)))).collect();
    (0..space.states())
        .map(|s| {
            let rs = dot(state_w, &lift(space.state_features(s))) + bias;
            per_action.iter().map(|&ra| rs + ra).collect()
        })
        .collect()
}

/// `log Z` for a fixed action sequence by forward recursion in log space.
fn log_partition<S: Scalar>(space: &ToySpace, actions: &[usize], rewards: &[Vec<S>], config: &LoopConfig) -> S {
    let ns = space.states();
    let t_max = space.horizon();
    let mut alpha: Vec<S> = (0..ns)
        .map(|s| S::constant(space.log_initial(s)) + rewards[s][actions[0]].scale(config.discount(0)))
        .collect();
    for t in 1..=t_max {
        alpha = (0..ns)
            .map(|next| {
                let terms: Vec<S> =
                    (0..ns).map(|s| alpha[s].shift(space.log_q(s, actions[t - 1], next))).collect();
                let incoming = logsumexp(&terms);
                if t < t_max {
                    incoming + rewards[next][actions[t]].scale(config.discount(t))
                } else {
                    incoming
                }
            })
            .collect();
    }
    logsumexp(&alpha)
}

fn loglik_with<S: Scalar>(
    record: &TrajectoryRecord,
    rewards: &[Vec<S>],
    config: &LoopConfig,
    space: &ToySpace,
) -> S {
    let base = space.log_initial(record.states[0]) + record.log_probs.iter().sum::<f64>();
    let mut total = S::constant(base);
    for t in 0..space.horizon() {
        total = total + rewards[record.states[t]][record.actions[t]].scale(config.discount(t));
    }
    total - log_partition(space, &record.actions, rewards, config)
}

fn split<'a, S>(reward: &RewardParams, flat: &'a [S]) -> (&'a [S], &'a [S], &'a S) {
    let (ns, na) = (reward.state_dim(), reward.action_dim());
    (&flat[..ns], &flat[ns..ns + na], &flat[ns + na])
}

fn check_shapes(reward: &RewardParams, space: &ToySpace) -> Result<(), EngineError> {
    if reward.state_dim() != space.state_features(0).len() || reward.action_dim() != space.action_features(0).len() {
        return Err(EngineError::ToySpace("reward shape does not match the feature sizes".into()));
    }
    Ok(())
}

/// Log-likelihood of the trajectory: initial and transition log-probabilities,
/// plus discounted rewards, minus `log Z` over every state sequence of the space.
pub fn trajectory_loglik(
    record: &TrajectoryRecord,
    reward: &RewardParams,
    config: &LoopConfig,
    space: &ToySpace,
) -> Result<f64, EngineError> {
    space.check_enumerable()?;
    check_shapes(reward, space)?;
    record.check(space)?;
    let table = reward_table(space, reward.state_w.data(), reward.action_w.data(), reward.bias.get(0, 0));
    Ok(loglik_with(record, &table, config, space))
}

/// Mean log-likelihood over `records` minus `reward_l2 · ‖θ_R‖²`, generic in the scalar.
pub fn phase2_objective<S: Scalar>(
    records: &[TrajectoryRecord],
    reward: &RewardParams,
    flat: &[S],
    config: &LoopConfig,
    space: &ToySpace,
) -> S {
    let (sw, aw, &b) = split(reward, flat);
    let table = reward_table(space, sw, aw, b);
    let mut total = S::constant(0.0);
    for r in records {
        total = total + loglik_with(r, &table, config, space);
    }
    let mean = total.scale(1.0 / records.len() as f64);
    if config.reward_l2 == 0.0 {
        return mean;
    }
    mean - dot(flat, flat).scale(config.reward_l2)
}

/// Value and gradient of [`phase2_objective`] at `flat` (state weights,
/// action weights, then bias).
pub fn phase2_value_and_grad(
    records: &[TrajectoryRecord],
    reward: &RewardParams,
    flat: &[f64],
    config: &LoopConfig,
    space: &ToySpace,
) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars: Vec<Var> = flat.iter().map(|&v| tape.var(v)).collect();
    let out = phase2_objective(records, reward, &vars, config, space);
    let mut grad = tape.gradient(out);
    grad.truncate(flat.len());
    (out.value(), grad)
}

/// Gradient of [`trajectory_loglik`] with respect to the flattened reward.
pub fn trajectory_loglik_grad(
    record: &TrajectoryRecord,
    reward: &RewardParams,
    config: &LoopConfig,
    space: &ToySpace,
) -> Result<Vec<f64>, EngineError> {
    space.check_enumerable()?;
    check_shapes(reward, space)?;
    record.check(space)?;
    let unpenalized = LoopConfig::new(crate::engine::LoopSettings { reward_l2: 0.0, ..config.settings().clone() })?;
    Ok(phase2_value_and_grad(std::slice::from_ref(record), reward, &reward.flatten(), &unpenalized, space).1)
}

/// Reward learning with the decoder frozen: gradient ascent on [`phase2_objective`].
pub fn phase2_optimize(
    records: &[TrajectoryRecord],
    space: &ToySpace,
    reward: &RewardParams,
    config: &LoopConfig,
    steps: usize,
    step_size: f64,
) -> Result<(RewardParams, Trace), EngineError> {
    if records.is_empty() {
        return Err(EngineError::NoTrajectories);
    }
    if !(step_size > 0.0) {
        return Err(EngineError::StepSize);
    }
    space.check_enumerable()?;
    check_shapes(reward, space)?;
    for r in records {
        r.check(space)?;
    }
    let (flat, trace) = ascend(reward.flatten(), AscentConfig::new(steps, step_size), |x| {
        Ok::<_, EngineError>(phase2_value_and_grad(records, reward, x, config, space))
    })?;
    Ok((reward.with_flat(&flat)?, trace))
}

/// Normalized probability of every state sequence under `actions`, in
/// lexicographic order of `(s_0, …, s_T)`.
pub fn trajectory_distribution(
    space: &ToySpace,
    actions: &[usize],
    reward: &RewardParams,
    config: &LoopConfig,
) -> Result<Vec<f64>, EngineError> {
    space.check_enumerable()?;
    check_shapes(reward, space)?;
    if actions.len() != space.horizon() {
        return Err(EngineError::InconsistentRecord("action count must equal the horizon".into()));
    }
    let n = space.trajectory_count().expect("checked above") as usize;
    let ns = space.states();
    let mut out = Vec::with_capacity(n);
    for code in 0..n {
        let mut states = vec![0; space.horizon() + 1];
        let mut rest = code;
        for slot in states.iter_mut().rev() {
            *slot = rest % ns;
            rest /= ns;
        }
        let legal = space.log_initial(states[0]).is_finite()
            && (0..actions.len()).all(|t| space.log_q(states[t], actions[t], states[t + 1]).is_finite());
        if !legal {
            out.push(0.0);
            continue;
        }
        let record = TrajectoryRecord::in_space(space, states, actions.to_vec());
        out.push(trajectory_loglik(&record, reward, config, space)?.exp());
    }
    Ok(out)
}

/// Action-independent part of the reward, `w_s·φ(s) + b`, for every state.
pub fn state_rewards(reward: &RewardParams, space: &ToySpace) -> Vec<f64> {
    (0..space.states())
        .map(|s| dot(reward.state_w.data(), space.state_features(s)) + reward.bias.get(0, 0))
        .collect()
}
