//! Event-sourced sessions. A session is the fold of its event log: every
//! piece of state, trained parameters included, is rebuilt by [`SessionState::apply`].
//! [`next_event`] decides what happens next from the state alone, so a
//! log prefix folded and continued gives the same log as an uninterrupted run.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::irl::{phase2_optimize, RewardParams, ToySpace, TrajectoryRecord};
use super::{
    flow_step, judgement_to_guidance, phase1_optimize, EngineError, FeedbackEvent, FlowCounters, LoopConfig,
    Phase1Item, Phase1Setup, Stage, TransitionReason,
};
use crate::composer::{generate_score, procedural_corpus, train_composer, ComposerParams};
use crate::embedding::{encode_text, train_alignment, AlignmentPair, EncoderParams, Vocab};
use crate::labanstr::{attribute_histogram, parse_score, serialize_score, Cell, Score};
use crate::params::ParamBundle;
use crate::rng::derive_seed;

/// Source of artist feedback. `Ok(None)` pauses the session.
pub trait Artist {
    fn feedback(&mut self, iteration: usize, score: &Score) -> Result<Option<FeedbackEvent>, EngineError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStep {
    /// Contrastive alignment, then composer fitting on a fresh corpus.
    Multimodal,
    /// Phase 1 ascent of encoder and composer together.
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated {
        seed: u64,
        config: String,
        vocab: String,
    },
    StageEntered {
        from: Option<Stage>,
        stage: Stage,
        reason: TransitionReason,
    },
    Generated {
        generation: u64,
        seed: u64,
        score: String,
        exhausted: bool,
    },
    Feedback(FeedbackEvent),
    Phase1Trace {
        step: TrainingStep,
        values: Vec<f64>,
        composer_values: Vec<f64>,
        encoder: String,
        composer: String,
    },
    Phase2Trace {
        values: Vec<f64>,
        states: usize,
        horizon: usize,
        reward: String,
    },
    Accepted {
        iteration: usize,
        score: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "session_created",
            EventBody::StageEntered { .. } => "stage_entered",
            EventBody::Generated { .. } => "generated",
            EventBody::Feedback(_) => "feedback",
            EventBody::Phase1Trace { .. } => "phase1_trace",
            EventBody::Phase2Trace { .. } => "phase2_trace",
            EventBody::Accepted { .. } => "accepted",
        }
    }
}

/// One log line: `{seq, iso_time, kind, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub seq: u64,
    pub iso_time: String,
    pub kind: String,
    pub payload: Value,
}

/// Logical clock: event `seq` is stamped `seq` seconds after a fixed epoch,
/// so identical runs produce identical bytes.
pub fn logical_time(seq: u64) -> String {
    let epoch: DateTime<Utc> = DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch");
    (epoch + Duration::seconds(seq as i64)).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

impl LogEvent {
    pub fn new(seq: u64, body: &EventBody) -> Self {
        let mut v = serde_json::to_value(body).expect("event bodies serialize");
        let payload = v.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
        LogEvent { seq, iso_time: logical_time(seq), kind: body.kind().to_string(), payload }
    }

    pub fn body(&self) -> Result<EventBody, EngineError> {
        let v = serde_json::json!({ "kind": self.kind, "payload": self.payload });
        serde_json::from_value(v).map_err(|e| EngineError::Log(format!("seq {}: {e}", self.seq)))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log events serialize")
    }

    pub fn from_line(line: &str, line_no: usize) -> Result<Self, EngineError> {
        serde_json::from_str(line).map_err(|e| EngineError::Log(format!("line {line_no}: {e}")))
    }
}

pub fn to_jsonl(events: &[LogEvent]) -> String {
    events.iter().map(|e| e.to_line() + "\n").collect()
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LogEvent>, EngineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| LogEvent::from_line(l, i + 1))
        .collect()
}

/// A generated score and the feedback it received, if any yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub score: Score,
    pub feedback: Option<FeedbackEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub config: LoopConfig,
    pub vocab: Vocab,
    pub seed: u64,
    pub encoder: EncoderParams,
    pub composer: ComposerParams,
    pub reward: RewardParams,
    /// `None` until the first stage is entered.
    pub stage: Option<Stage>,
    /// Whether the current stage's work event has been logged.
    pub stage_done: bool,
    /// Feedback events received.
    pub iteration: usize,
    pub counters: FlowCounters,
    pub rounds: Vec<Round>,
    pub ratings: Vec<f64>,
    /// Best rating after each feedback event.
    pub best_ratings: Vec<f64>,
    pub best: Option<(f64, Score)>,
    pub guidance: Option<Vec<f64>>,
    pub pending_feedback: Option<FeedbackEvent>,
    pub accepted: bool,
    pub generations: u64,
    pub multimodal_runs: u64,
    pub phase1_runs: u64,
    pub phase2_runs: u64,
    pub last_seq: u64,
}

fn log_err(seq: u64, msg: impl std::fmt::Display) -> EngineError {
    EngineError::Log(format!("seq {seq}: {msg}"))
}

impl SessionState {
    /// State right after `session_created`; initial parameters follow from the seed.
    pub fn created(config: LoopConfig, vocab: Vocab, seed: u64) -> Self {
        let encoder = EncoderParams::init(vocab.len(), config.dim, derive_seed(seed, "encoder", 0));
        let composer = ComposerParams::tied(&encoder, derive_seed(seed, "composer", 0));
        let reward = RewardParams::zeros(Cell::COUNT, config.dim);
        SessionState {
            config,
            vocab,
            seed,
            encoder,
            composer,
            reward,
            stage: None,
            stage_done: false,
            iteration: 0,
            counters: FlowCounters::default(),
            rounds: Vec::new(),
            ratings: Vec::new(),
            best_ratings: Vec::new(),
            best: None,
            guidance: None,
            pending_feedback: None,
            accepted: false,
            generations: 0,
            multimodal_runs: 0,
            phase1_runs: 0,
            phase2_runs: 0,
            last_seq: 1,
        }
    }

    pub fn latest_score(&self) -> Option<&Score> {
        self.rounds.last().map(|r| &r.score)
    }

    /// Folds a whole log. The first event must be `session_created`.
    pub fn fold(events: &[LogEvent]) -> Result<Self, EngineError> {
        let first = events.first().ok_or_else(|| EngineError::Log("missing session_created".into()))?;
        let mut state = match first.body()? {
            EventBody::SessionCreated { seed, config, vocab } if first.seq == 1 => {
                let config = LoopConfig::parse(&config)?;
                let vocab = Vocab::parse(&vocab).map_err(|e| log_err(1, e))?;
                SessionState::created(config, vocab, seed)
            }
            _ => return Err(EngineError::Log("missing session_created".into())),
        };
        for e in &events[1..] {
            state.apply_logged(e)?;
        }
        Ok(state)
    }

    pub fn apply_logged(&mut self, e: &LogEvent) -> Result<(), EngineError> {
        if e.seq != self.last_seq + 1 {
            return Err(log_err(e.seq, format!("expected seq {}", self.last_seq + 1)));
        }
        self.apply(e.seq, &e.body()?)
    }

    /// Applies one event. Pure bookkeeping: no training or sampling happens here.
    pub fn apply(&mut self, seq: u64, body: &EventBody) -> Result<(), EngineError> {
        let err = |m: String| log_err(seq, m);
        match body {
            EventBody::SessionCreated { .. } => return Err(err("duplicate session_created".into())),
            EventBody::StageEntered { from, stage, .. } => {
                if *from != self.stage {
                    return Err(err(format!("transition from {from:?} but the session is at {:?}", self.stage)));
                }
                match from {
                    None if *stage != Stage::MultimodalTrain => {
                        return Err(err(format!("a session must start at {}", Stage::MultimodalTrain)))
                    }
                    Some(f) if !Stage::has_edge(*f, *stage) => {
                        return Err(EngineError::IllegalTransition { from: *f, to: *stage })
                    }
                    Some(f) if *f != Stage::ArtistEval && !self.stage_done => {
                        return Err(err(format!("left {f} before its work was logged")))
                    }
                    Some(Stage::ArtistEval) if self.pending_feedback.is_none() => {
                        return Err(err("left artist_eval without feedback".into()))
                    }
                    _ => {}
                }
                self.stage = Some(*stage);
                self.stage_done = false;
                self.pending_feedback = None;
            }
            EventBody::Generated { generation, score, .. } => {
                self.expect_stage(seq, Stage::Generate)?;
                if *generation != self.generations {
                    return Err(err(format!("generation {generation}, expected {}", self.generations)));
                }
                let score = parse_score(score).map_err(|e| err(e.to_string()))?;
                self.rounds.push(Round { score, feedback: None });
                self.generations += 1;
                self.stage_done = true;
            }
            EventBody::Feedback(fb) => {
                self.expect_stage(seq, Stage::ArtistEval)?;
                if fb.iteration != self.iteration + 1 {
                    return Err(err(format!("feedback iteration {}, expected {}", fb.iteration, self.iteration + 1)));
                }
                fb.validate(&self.vocab)?;
                let round = self.rounds.last_mut().ok_or_else(|| err("feedback before any generation".into()))?;
                round.feedback = Some(fb.clone());
                let score = round.score.clone();
                self.iteration += 1;
                self.counters.feedback_since_reward_learn += 1;
                match &self.best {
                    Some((b, _)) if fb.rating <= *b => self.counters.rounds_since_improvement += 1,
                    _ => {
                        self.best = Some((fb.rating, score));
                        self.counters.rounds_since_improvement = 0;
                    }
                }
                self.ratings.push(fb.rating);
                self.best_ratings.push(self.best.as_ref().map_or(fb.rating, |b| b.0));
                self.guidance = Some(judgement_to_guidance(&fb.judgement, &self.vocab, &self.encoder)?.0);
                self.pending_feedback = Some(fb.clone());
                self.stage_done = true;
            }
            EventBody::Phase1Trace { step, encoder, composer, .. } => {
                let want = match step {
                    TrainingStep::Multimodal => Stage::MultimodalTrain,
                    TrainingStep::Generator => Stage::GeneratorTrain,
                };
                self.expect_stage(seq, want)?;
                self.encoder = self.encoder.from_text_like(encoder)?;
                self.composer = self.composer.from_text_like(composer)?;
                match step {
                    TrainingStep::Multimodal => self.multimodal_runs += 1,
                    TrainingStep::Generator => self.phase1_runs += 1,
                }
                self.stage_done = true;
            }
            EventBody::Phase2Trace { reward, .. } => {
                self.expect_stage(seq, Stage::RewardLearn)?;
                self.reward = self.reward.from_text_like(reward)?;
                self.phase2_runs += 1;
                self.counters.feedback_since_reward_learn = 0;
                self.stage_done = true;
            }
            EventBody::Accepted { .. } => {
                self.expect_stage(seq, Stage::Accepted)?;
                self.accepted = true;
                self.stage_done = true;
            }
        }
        self.last_seq = seq;
        Ok(())
    }

    fn expect_stage(&self, seq: u64, want: Stage) -> Result<(), EngineError> {
        if self.stage != Some(want) || self.stage_done {
            return Err(log_err(seq, format!("event not allowed at {:?} (done: {})", self.stage, self.stage_done)));
        }
        Ok(())
    }

    /// Rounds with feedback, most recent last.
    fn rated(&self) -> impl Iterator<Item = (&Score, &FeedbackEvent)> {
        self.rounds.iter().filter_map(|r| r.feedback.as_ref().map(|f| (&r.score, f)))
    }

    /// Mean learned reward over the latest feedback window, clamped at zero.
    pub fn reward_energy(&self) -> Result<f64, EngineError> {
        let rated: Vec<_> = self.rated().collect();
        let window = &rated[rated.len().saturating_sub(self.config.phase2_trigger_count)..];
        if window.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (score, fb) in window {
            let action = judgement_to_guidance(&fb.judgement, &self.vocab, &self.encoder)?;
            total += self.reward.reward(&attribute_histogram(score).cells, &action.0);
        }
        Ok((total / window.len() as f64).max(0.0))
    }
}

/// Toy space and demonstration for reward learning: the states are distinct
/// recent and best-so-far scores, transitions are uniform, and the
/// demonstration walks the best-so-far scores of the latest feedback points.
pub fn reward_learning_problem(state: &SessionState) -> Result<Option<(ToySpace, TrajectoryRecord)>, EngineError> {
    let rated: Vec<(&Score, &FeedbackEvent)> = state.rated().collect();
    if rated.len() < 2 {
        return Ok(None);
    }
    let horizon = state.config.trajectory_length.min(rated.len() - 1);
    let points = &rated[rated.len() - (horizon + 1)..];
    // best-so-far score at each demonstrated feedback point
    let mut best: Option<(f64, &Score)> = None;
    let mut best_at = Vec::with_capacity(rated.len());
    for (score, fb) in &rated {
        if best.is_none_or(|(b, _)| fb.rating > b) {
            best = Some((fb.rating, score));
        }
        best_at.push(best.expect("set above").1);
    }
    let demo: Vec<&Score> = best_at[rated.len() - (horizon + 1)..].to_vec();

    let mut states: Vec<&Score> = Vec::new();
    for s in demo.iter().copied().chain(rated.iter().rev().map(|(s, _)| *s)) {
        if states.contains(&s) {
            continue;
        }
        if states.len() >= state.config.phase2_states.max(horizon + 1) {
            break;
        }
        states.push(s);
    }
    if states.len() < 2 {
        return Ok(None);
    }
    let state_features: Vec<Vec<f64>> = states.iter().map(|s| attribute_histogram(s).cells).collect();
    let mut action_features = Vec::with_capacity(horizon);
    for (_, fb) in &points[..horizon] {
        action_features.push(judgement_to_guidance(&fb.judgement, &state.vocab, &state.encoder)?.0);
    }
    let space = ToySpace::uniform(state_features, action_features, horizon)?;
    let index = |s: &Score| states.iter().position(|t| *t == s).expect("demo states are in the space");
    let record = TrajectoryRecord::in_space(&space, demo.iter().map(|s| index(s)).collect(), (0..horizon).collect());
    Ok(Some((space, record)))
}

fn prompt_indices(state: &SessionState) -> Result<Vec<usize>, EngineError> {
    Ok(state.vocab.indices(&state.config.prompt)?)
}

fn multimodal_step(state: &SessionState) -> Result<EventBody, EngineError> {
    let cfg = &state.config;
    let corpus = procedural_corpus(
        &state.vocab,
        cfg.corpus_size,
        cfg.corpus_noise,
        derive_seed(state.seed, "corpus", state.multimodal_runs),
    );
    let pairs: Vec<AlignmentPair> = corpus
        .iter()
        .take(32)
        .map(|(e, t)| AlignmentPair { words: e.words(), score: Score { meter: t.time.meter, tokens: vec![*t] } })
        .collect();
    let (encoder, align) = train_alignment(&pairs, &state.encoder, cfg.alignment_steps, cfg.alignment_step_size)?;
    let (composer, comp) = train_composer(&corpus, &encoder, &state.composer, cfg.composer_steps, cfg.composer_step_size)?;
    Ok(EventBody::Phase1Trace {
        step: TrainingStep::Multimodal,
        values: align.values,
        composer_values: comp.values,
        encoder: encoder.to_text(),
        composer: composer.to_text(),
    })
}

fn generator_step(state: &SessionState) -> Result<EventBody, EngineError> {
    let cfg = &state.config;
    let reference = state
        .best
        .as_ref()
        .map(|(_, s)| s.clone())
        .unwrap_or_default();
    let batch = [Phase1Item { words: prompt_indices(state)?, reference }];
    let setup = Phase1Setup {
        guidance: state.guidance.clone(),
        guidance_weight: cfg.guidance_weight,
        reward_energy: state.reward_energy()?,
        length: cfg.score_length,
        seed: derive_seed(state.seed, "phase1", state.phase1_runs),
    };
    let out = phase1_optimize(&batch, &state.encoder, &state.composer, &setup, cfg, cfg.phase1_steps, cfg.phase1_step_size)?;
    Ok(EventBody::Phase1Trace {
        step: TrainingStep::Generator,
        values: out.trace.values,
        composer_values: Vec::new(),
        encoder: out.encoder.to_text(),
        composer: out.composer.to_text(),
    })
}

fn generate_step(state: &SessionState) -> Result<EventBody, EngineError> {
    let condition = encode_text(&state.config.prompt, &state.vocab, &state.encoder)?;
    let seed = derive_seed(state.seed, "generate", state.generations);
    let g = generate_score(
        &condition.0,
        state.guidance.as_deref(),
        state.config.guidance_weight,
        state.config.score_length,
        &state.composer,
        seed,
    )?;
    Ok(EventBody::Generated {
        generation: state.generations,
        seed,
        score: serialize_score(&g.score),
        exhausted: g.exhausted,
    })
}

fn reward_step(state: &SessionState) -> Result<EventBody, EngineError> {
    let cfg = &state.config;
    match reward_learning_problem(state)? {
        Some((space, record)) => {
            let (reward, trace) =
                phase2_optimize(&[record], &space, &state.reward, cfg, cfg.phase2_steps, cfg.phase2_step_size)?;
            Ok(EventBody::Phase2Trace {
                values: trace.values,
                states: space.states(),
                horizon: space.horizon(),
                reward: reward.to_text(),
            })
        }
        None => Ok(EventBody::Phase2Trace { values: Vec::new(), states: 0, horizon: 0, reward: state.reward.to_text() }),
    }
}

fn accepts(state: &SessionState) -> Result<bool, EngineError> {
    Ok(match state.stage {
        Some(Stage::Accepted) => !state.accepted,
        Some(Stage::ArtistEval) if state.pending_feedback.is_some() => {
            flow_step(Stage::ArtistEval, &state.counters, state.pending_feedback.as_ref(), &state.config)?.to
                == Stage::Accepted
        }
        _ => false,
    })
}

/// The next event the session would log, or `None` when it is finished,
/// has used up `max_iterations` feedback events, or is waiting on the artist.
pub fn next_event(
    state: &SessionState,
    artist: &mut dyn Artist,
    max_iterations: usize,
) -> Result<Option<EventBody>, EngineError> {
    if state.accepted {
        return Ok(None);
    }
    if state.iteration >= max_iterations && !accepts(state)? {
        return Ok(None);
    }
    let Some(stage) = state.stage else {
        return Ok(Some(EventBody::StageEntered {
            from: None,
            stage: Stage::MultimodalTrain,
            reason: TransitionReason::Sequence,
        }));
    };
    if !state.stage_done {
        let body = match stage {
            Stage::MultimodalTrain => multimodal_step(state)?,
            Stage::GeneratorTrain => generator_step(state)?,
            Stage::Generate => generate_step(state)?,
            Stage::ArtistEval => {
                let score = state.latest_score().ok_or_else(|| EngineError::Log("nothing to evaluate".into()))?;
                match artist.feedback(state.iteration + 1, score)? {
                    Some(fb) => EventBody::Feedback(fb),
                    None => return Ok(None),
                }
            }
            Stage::RewardLearn => reward_step(state)?,
            Stage::Accepted => EventBody::Accepted {
                iteration: state.iteration,
                score: state.best.as_ref().map(|(_, s)| serialize_score(s)).unwrap_or_default(),
            },
        };
        return Ok(Some(body));
    }
    let t = flow_step(stage, &state.counters, state.pending_feedback.as_ref(), &state.config)?;
    Ok(Some(EventBody::StageEntered { from: Some(t.from), stage: t.to, reason: t.reason }))
}

/// A session with its log. Every change goes through the log.
#[derive(Debug, Clone)]
pub struct Session {
    pub state: SessionState,
    pub log: Vec<LogEvent>,
}

impl Session {
    pub fn create(config: LoopConfig, vocab: Vocab, seed: u64) -> Self {
        let body = EventBody::SessionCreated { seed, config: config.to_text(), vocab: vocab.to_text() };
        let state = SessionState::created(config, vocab, seed);
        Session { state, log: vec![LogEvent::new(1, &body)] }
    }

    pub fn from_log(log: Vec<LogEvent>) -> Result<Self, EngineError> {
        let state = SessionState::fold(&log)?;
        Ok(Session { state, log })
    }

    /// Appends one externally produced event after validating it.
    pub fn append(&mut self, body: &EventBody) -> Result<&LogEvent, EngineError> {
        let seq = self.state.last_seq + 1;
        self.state.apply(seq, body)?;
        self.log.push(LogEvent::new(seq, body));
        Ok(self.log.last().expect("just pushed"))
    }

    /// Logs the next event, if any.
    pub fn step(&mut self, artist: &mut dyn Artist, max_iterations: usize) -> Result<Option<&LogEvent>, EngineError> {
        match next_event(&self.state, artist, max_iterations)? {
            Some(body) => self.append(&body).map(Some),
            None => Ok(None),
        }
    }

    /// Steps until the session finishes or pauses; `sink` sees each new event.
    pub fn run(
        &mut self,
        artist: &mut dyn Artist,
        max_iterations: usize,
        mut sink: impl FnMut(&LogEvent) -> Result<(), EngineError>,
    ) -> Result<(), EngineError> {
        while let Some(e) = self.step(artist, max_iterations)? {
            sink(e)?;
        }
        Ok(())
    }

    pub fn jsonl(&self) -> String {
        to_jsonl(&self.log)
    }
}

pub fn run_session(
    config: LoopConfig,
    vocab: Vocab,
    artist: &mut dyn Artist,
    max_iterations: usize,
    seed: u64,
) -> Result<Session, EngineError> {
    let mut session = Session::create(config, vocab, seed);
    session.run(artist, max_iterations, |_| Ok(()))?;
    Ok(session)
}

/// Problems found in a log: sequence gaps, unknown kinds, events outside
/// their stage and transitions off the stage graph. Empty when clean.
pub fn lint_log(events: &[LogEvent]) -> Vec<String> {
    let mut problems = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            problems.push(format!("line {}: seq {} breaks the sequence", i + 1, e.seq));
        }
        if e.iso_time != logical_time(e.seq) {
            problems.push(format!("seq {}: timestamp {} is off the logical clock", e.seq, e.iso_time));
        }
        if let Ok(EventBody::StageEntered { from: Some(f), stage, .. }) = e.body() {
            if !Stage::has_edge(f, stage) {
                problems.push(format!("seq {}: no edge from {f} to {stage}", e.seq));
            }
        }
    }
    if problems.is_empty() {
        if let Err(e) = SessionState::fold(events) {
            problems.push(e.to_string());
        }
    }
    problems
}
