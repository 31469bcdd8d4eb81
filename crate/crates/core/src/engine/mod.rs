//! The two-phase loop: Phase 1 generator/encoder ascent under a frozen
//! reward, Phase 2 reward learning under a frozen generator, and the stage
//! graph that alternates them around the artist's feedback.

mod config;
pub mod irl;
pub mod session;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConfigError, LoopConfig, LoopSettings};
pub use irl::{
    phase2_optimize, state_rewards, trajectory_distribution, trajectory_loglik, trajectory_loglik_grad, RewardParams,
    ToySpace, TrajectoryRecord,
};

use crate::autodiff::{dot, Scalar, Tape, Var};
use crate::composer::{generate_with, soft_motion_embedding, ComposerError, ComposerParams};
use crate::embedding::{
    encode_motion, encode_motion_unchecked, encode_text, encode_text_indices, sc_combine, Embedding, EmbeddingError,
    EncoderParams, Vocab,
};
use crate::labanstr::{Beat, Cell, LabanToken, Meter, Score};
use crate::optim::{ascend, AscentConfig, OptimError, Trace};
use crate::params::{ParamBundle, ParamsError};
use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Composer(#[from] ComposerError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no recorded trajectories")]
    NoTrajectories,
    #[error("step size must be positive")]
    StepSize,
    #[error("toy space has {} trajectories, more than can be enumerated", .0.map_or("too many".to_string(), |n| n.to_string()))]
    SpaceTooLarge(Option<u64>),
    #[error("invalid toy space: {0}")]
    ToySpace(String),
    #[error("inconsistent trajectory record: {0}")]
    InconsistentRecord(String),
    #[error("theta norm {0} is negative or not finite")]
    ThetaNorm(f64),
    #[error("a feedback event is required at {0}")]
    MissingFeedback(Stage),
    #[error("no edge from {from} to {to}")]
    IllegalTransition { from: Stage, to: Stage },
    #[error("invalid judgement: {0}")]
    Judgement(String),
    #[error("invalid feedback: {0}")]
    Feedback(String),
    #[error("event log: {0}")]
    Log(String),
}

/// Structured artist critique: vocabulary words plus signed cell deltas.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Judgement {
    pub text: Vec<String>,
    pub targets: Vec<(Cell, f64)>,
}

impl Judgement {
    pub fn validate(&self, vocab: &Vocab) -> Result<(), EngineError> {
        vocab.indices(&self.text)?;
        if let Some((cell, d)) = self.targets.iter().find(|(_, d)| !d.is_finite()) {
            return Err(EngineError::Judgement(format!("delta {d} on {cell} is not finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Resample,
    RetrainGenerator,
    RetrainMultimodal,
    Accept,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub iteration: usize,
    pub rating: f64,
    pub judgement: Judgement,
    pub decision: Decision,
}

impl FeedbackEvent {
    pub fn validate(&self, vocab: &Vocab) -> Result<(), EngineError> {
        if !(self.rating >= 0.0 && self.rating.is_finite()) {
            return Err(EngineError::Feedback(format!("rating {} must be finite and nonnegative", self.rating)));
        }
        self.judgement.validate(vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    MultimodalTrain,
    GeneratorTrain,
    Generate,
    ArtistEval,
    RewardLearn,
    Accepted,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::MultimodalTrain => "multimodal_train",
            Stage::GeneratorTrain => "generator_train",
            Stage::Generate => "generate",
            Stage::ArtistEval => "artist_eval",
            Stage::RewardLearn => "reward_learn",
            Stage::Accepted => "accepted",
        }
    }

    /// Edges of the process-flow graph.
    pub fn has_edge(from: Stage, to: Stage) -> bool {
        use Stage::*;
        matches!(
            (from, to),
            (MultimodalTrain, GeneratorTrain)
                | (GeneratorTrain, Generate)
                | (Generate, ArtistEval)
                | (ArtistEval, Accepted | RewardLearn | Generate | GeneratorTrain | MultimodalTrain)
                | (RewardLearn, GeneratorTrain | MultimodalTrain)
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionReason {
    Sequence,
    Threshold,
    Decision,
    Trigger,
    Resample,
    Stagnation,
    Progress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: Stage,
    pub to: Stage,
    pub reason: TransitionReason,
}

/// Counters the flow rules read. At `ArtistEval` they must already count
/// the feedback event being decided on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowCounters {
    pub feedback_since_reward_learn: usize,
    pub rounds_since_improvement: usize,
}

pub fn flow_step(
    stage: Stage,
    counters: &FlowCounters,
    event: Option<&FeedbackEvent>,
    config: &LoopConfig,
) -> Result<Transition, EngineError> {
    use Stage::*;
    use TransitionReason as R;
    let (to, reason) = match stage {
        MultimodalTrain => (GeneratorTrain, R::Sequence),
        GeneratorTrain => (Generate, R::Sequence),
        Generate => (ArtistEval, R::Sequence),
        ArtistEval => {
            let e = event.ok_or(EngineError::MissingFeedback(ArtistEval))?;
            if e.rating >= config.accept_threshold {
                (Accepted, R::Threshold)
            } else {
                match e.decision {
                    Decision::Accept => (Accepted, R::Decision),
                    Decision::Resample => (Generate, R::Decision),
                    Decision::RetrainGenerator => (GeneratorTrain, R::Decision),
                    Decision::RetrainMultimodal => (MultimodalTrain, R::Decision),
                    Decision::None if counters.feedback_since_reward_learn >= config.phase2_trigger_count => {
                        (RewardLearn, R::Trigger)
                    }
                    Decision::None => (Generate, R::Resample),
                }
            }
        }
        RewardLearn if counters.rounds_since_improvement >= config.stagnation_window => {
            (MultimodalTrain, R::Stagnation)
        }
        RewardLearn => (GeneratorTrain, R::Progress),
        Accepted => return Err(EngineError::IllegalTransition { from: Accepted, to: Accepted }),
    };
    debug_assert!(Stage::has_edge(stage, to));
    Ok(Transition { from: stage, to, reason })
}

/// Embedding of a one-beat neutral token in `cell`.
pub fn cell_embedding(cell: Cell, enc: &EncoderParams) -> Embedding {
    let t = LabanToken::simple(
        Meter::COMMON,
        Beat::from_integer(0),
        Beat::from_integer(1),
        cell.column,
        cell.direction,
        cell.level,
    );
    let s = Score { meter: Meter::COMMON, tokens: vec![t] };
    encode_motion(&s, enc).expect("a single token is valid")
}

/// `encode_text(j.text) + Σ δ · cell_embedding(cell)`.
pub fn judgement_to_guidance(j: &Judgement, vocab: &Vocab, enc: &EncoderParams) -> Result<Embedding, EngineError> {
    j.validate(vocab)?;
    let mut g = encode_text(&j.text, vocab, enc)?;
    for &(cell, delta) in &j.targets {
        g = g.add(&cell_embedding(cell, enc).scaled(delta))?;
    }
    Ok(g)
}

fn phase1_combine<S: Scalar>(
    terms: [&[S]; 6],
    config: &LoopConfig,
    reward_energy: f64,
    theta_norm: S,
) -> S {
    let [x1, x1p, x2, x2p, z1, z1p] = terms;
    let mut total = S::constant(0.0);
    if config.alpha != 0.0 {
        total = total + sc_combine(dot(x1, x1p), reward_energy, theta_norm, config.lambda, config.sign_mode).scale(config.alpha);
    }
    if config.beta != 0.0 {
        total = total + sc_combine(dot(x2, x2p), reward_energy, theta_norm, config.lambda, config.sign_mode).scale(config.beta);
    }
    if config.gamma_weight != 0.0 {
        total = total + dot(z1, z1p).scale(config.gamma_weight);
    }
    total
}

/// `α·SC(x1, x1′) + β·SC(x2, x2′) + γ·dot(z1, z1′)`.
#[allow(clippy::too_many_arguments)]
pub fn phase1_objective(
    x1: &Embedding,
    x1p: &Embedding,
    x2: &Embedding,
    x2p: &Embedding,
    z1: &Embedding,
    z1p: &Embedding,
    config: &LoopConfig,
    reward_energy: f64,
    theta_norm: f64,
) -> Result<f64, EngineError> {
    let dim = x1.dim();
    if let Some(e) = [x1p, x2, x2p, z1, z1p].iter().find(|e| e.dim() != dim) {
        return Err(EmbeddingError::DimensionMismatch(dim, e.dim()).into());
    }
    if !(theta_norm >= 0.0 && theta_norm.is_finite()) {
        return Err(EngineError::ThetaNorm(theta_norm));
    }
    Ok(phase1_combine(
        [&x1.0, &x1p.0, &x2.0, &x2p.0, &z1.0, &z1p.0],
        config,
        reward_energy,
        theta_norm,
    ))
}

/// Phase 1 training pair: input words and a reference motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Item {
    pub words: Vec<usize>,
    pub reference: Score,
}

/// Everything Phase 1 holds fixed while the parameters move.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Setup {
    pub guidance: Option<Vec<f64>>,
    pub guidance_weight: f64,
    pub reward_energy: f64,
    pub length: usize,
    /// Item k generates with `derive_seed(seed, "phase1", k)` at every step.
    pub seed: u64,
}

/// Mean Phase 1 objective over the batch. For each item
/// `x1 = z1` before guidance is the text embedding, `x1′ = x2′` is the soft
/// embedding of the sample generated from `z1`, `x2` the reference motion
/// embedding and `z1′` the exact embedding of the sample.
pub fn phase1_batch_objective<S: Scalar>(
    batch: &[Phase1Item],
    enc: &EncoderParams<S>,
    comp: &ComposerParams<S>,
    flat: &[S],
    setup: &Phase1Setup,
    config: &LoopConfig,
) -> S {
    let theta_norm = dot(flat, flat).sqrt();
    let mut total = S::constant(0.0);
    for (k, item) in batch.iter().enumerate() {
        let x1 = encode_text_indices(&item.words, enc);
        let z1: Vec<S> = match &setup.guidance {
            Some(g) if setup.guidance_weight != 0.0 => {
                x1.iter().zip(g).map(|(&x, &gi)| x.shift(setup.guidance_weight * gi)).collect()
            }
            _ => x1.clone(),
        };
        let generation = generate_with(&z1, comp, setup.length, derive_seed(setup.seed, "phase1", k as u64));
        let soft = soft_motion_embedding(&generation, enc);
        let x2 = encode_motion_unchecked(&item.reference, enc);
        let z1p = encode_motion_unchecked(&generation.score, enc);
        total = total + phase1_combine([&x1, &soft, &x2, &soft, &z1, &z1p], config, setup.reward_energy, theta_norm);
    }
    total.scale(1.0 / batch.len() as f64)
}

/// Phase 1 value at `flat` (encoder then composer parameters), in `f64`.
pub fn phase1_value(
    batch: &[Phase1Item],
    enc: &EncoderParams,
    comp: &ComposerParams,
    flat: &[f64],
    setup: &Phase1Setup,
    config: &LoopConfig,
) -> f64 {
    let (e, c) = flat.split_at(enc.len_flat());
    phase1_batch_objective(batch, &enc.lift(e), &comp.lift(c), flat, setup, config)
}

pub fn phase1_value_and_grad(
    batch: &[Phase1Item],
    enc: &EncoderParams,
    comp: &ComposerParams,
    flat: &[f64],
    setup: &Phase1Setup,
    config: &LoopConfig,
) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars: Vec<Var> = flat.iter().map(|&v| tape.var(v)).collect();
    let (e, c) = vars.split_at(enc.len_flat());
    let out = phase1_batch_objective(batch, &enc.lift(e), &comp.lift(c), &vars, setup, config);
    let mut grad = tape.gradient(out);
    grad.truncate(flat.len());
    (out.value(), grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Outcome {
    pub encoder: EncoderParams,
    pub composer: ComposerParams,
    pub trace: Trace,
}

/// Joint ascent of encoder and composer on the Phase 1 objective. The
/// reward enters only through `setup.reward_energy`, which stays fixed.
pub fn phase1_optimize(
    batch: &[Phase1Item],
    enc: &EncoderParams,
    comp: &ComposerParams,
    setup: &Phase1Setup,
    config: &LoopConfig,
    steps: usize,
    step_size: f64,
) -> Result<Phase1Outcome, EngineError> {
    if batch.is_empty() {
        return Err(EngineError::EmptyBatch);
    }
    if !(step_size > 0.0) {
        return Err(EngineError::StepSize);
    }
    if let Some(g) = &setup.guidance {
        if g.len() != enc.dim() {
            return Err(EmbeddingError::DimensionMismatch(enc.dim(), g.len()).into());
        }
    }
    let mut flat = enc.flatten();
    flat.extend(comp.flatten());
    let (x, trace) = ascend(flat, AscentConfig::new(steps, step_size), |x| {
        Ok::<_, EngineError>(phase1_value_and_grad(batch, enc, comp, x, setup, config))
    })?;
    let (e, c) = x.split_at(enc.len_flat());
    Ok(Phase1Outcome { encoder: enc.with_flat(e)?, composer: comp.with_flat(c)?, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{dot_similarity, sc_score, DEFAULT_DIM};

    fn emb(seed: u64) -> Embedding {
        Embedding(crate::rng::uniform_vec(&mut crate::rng::seeded(seed), DEFAULT_DIM, 1.0))
    }

    fn with(alpha: f64, beta: f64, gamma: f64, lambda: f64) -> LoopConfig {
        LoopConfig::new(LoopSettings { alpha, beta, gamma_weight: gamma, lambda, ..Default::default() }).unwrap()
    }

    #[test]
    fn phase1_objective_reduces_to_its_parts() {
        let e: Vec<Embedding> = (0..6).map(emb).collect();
        let cfg = with(1.0, 0.0, 0.0, 0.3);
        let v = phase1_objective(&e[0], &e[1], &e[2], &e[3], &e[4], &e[5], &cfg, 0.7, 2.0).unwrap();
        assert_eq!(v, sc_score(&e[0], &e[1], 0.7, 2.0, 0.3, cfg.sign_mode).unwrap());
        let cfg = with(0.5, 0.2, 0.3, 0.0);
        let v = phase1_objective(&e[0], &e[1], &e[2], &e[3], &e[4], &e[5], &cfg, 0.7, 2.0).unwrap();
        let plain = 0.5 * dot_similarity(&e[0], &e[1]).unwrap()
            + 0.2 * dot_similarity(&e[2], &e[3]).unwrap()
            + 0.3 * dot_similarity(&e[4], &e[5]).unwrap();
        assert!((v - plain).abs() < 1e-12);
    }

    #[test]
    fn flow_rules() {
        let cfg = LoopConfig::default();
        let fb = |rating: f64, decision: Decision| FeedbackEvent {
            iteration: 1,
            rating,
            judgement: Judgement::default(),
            decision,
        };
        let c = |n: usize, r: usize| FlowCounters { feedback_since_reward_learn: n, rounds_since_improvement: r };
        let at_eval = |e: &FeedbackEvent, n: usize| flow_step(Stage::ArtistEval, &c(n, 0), Some(e), &cfg).unwrap().to;
        assert_eq!(at_eval(&fb(cfg.accept_threshold, Decision::None), 1), Stage::Accepted);
        assert_eq!(at_eval(&fb(0.1, Decision::None), 3), Stage::RewardLearn);
        assert_eq!(at_eval(&fb(0.1, Decision::None), 2), Stage::Generate);
        assert_eq!(at_eval(&fb(0.1, Decision::Resample), 3), Stage::Generate);
        assert_eq!(at_eval(&fb(0.1, Decision::Accept), 1), Stage::Accepted);
        assert_eq!(at_eval(&fb(0.1, Decision::RetrainMultimodal), 1), Stage::MultimodalTrain);
        assert_eq!(
            flow_step(Stage::ArtistEval, &c(0, 0), None, &cfg),
            Err(EngineError::MissingFeedback(Stage::ArtistEval))
        );
        assert_eq!(flow_step(Stage::RewardLearn, &c(0, 4), None, &cfg).unwrap().to, Stage::MultimodalTrain);
        assert_eq!(flow_step(Stage::RewardLearn, &c(0, 3), None, &cfg).unwrap().to, Stage::GeneratorTrain);
        assert_eq!(flow_step(Stage::MultimodalTrain, &c(0, 0), None, &cfg).unwrap().to, Stage::GeneratorTrain);
        assert!(flow_step(Stage::Accepted, &c(0, 0), None, &cfg).is_err());
    }

    #[test]
    fn guidance_examples() {
        let vocab = Vocab::standard();
        let enc = EncoderParams::init(vocab.len(), DEFAULT_DIM, 1);
        assert_eq!(judgement_to_guidance(&Judgement::default(), &vocab, &enc).unwrap(), Embedding::zeros(DEFAULT_DIM));
        let text = Judgement { text: vec!["lift".into(), "head".into()], targets: vec![] };
        assert_eq!(
            judgement_to_guidance(&text, &vocab, &enc).unwrap(),
            encode_text(&["lift", "head"], &vocab, &enc).unwrap()
        );
        let cell = Cell::from_index(40).unwrap();
        let targets = Judgement { text: vec![], targets: vec![(cell, 2.0)] };
        assert_eq!(
            judgement_to_guidance(&targets, &vocab, &enc).unwrap(),
            cell_embedding(cell, &enc).scaled(2.0)
        );
        let bad = Judgement { text: vec!["flutter".into()], targets: vec![] };
        assert!(judgement_to_guidance(&bad, &vocab, &enc).is_err());
    }

    #[test]
    fn feedback_serializes_with_named_cells() {
        let e = FeedbackEvent {
            iteration: 2,
            rating: 0.5,
            judgement: Judgement { text: vec![], targets: vec![(Cell::from_index(0).unwrap(), 0.25)] },
            decision: Decision::None,
        };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"support_l\""));
        assert_eq!(serde_json::from_str::<FeedbackEvent>(&json).unwrap(), e);
    }
}
