//! The shared embedding space: text and motion encoders, dot similarity,
//! the reward-regularized similarity score and contrastive alignment.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::autodiff::{dot, logsumexp, Scalar, Tape, Var};
use crate::labanstr::{
    canonicalize, validate_score, Column, Direction, Facing, Flexion, LabanToken, Level, Path, Position, Rotation, Score,
    ValidationReport,
};
use crate::optim::{ascend, AscentConfig, OptimError, Trace};
use crate::params::{check_shape, Matrix, ParamBundle, ParamsError};
use crate::rng::{seeded, uniform_vec};

pub const DEFAULT_DIM: usize = 16;
const INIT_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("word `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("lambda {0} is outside [0, 1]")]
    LambdaRange(f64),
    #[error("parameter norm {0} is negative or not finite")]
    ThetaNorm(f64),
    #[error("interpolation weight {0} is outside [0, 1]")]
    InterpolationRange(f64),
    #[error("score is invalid ({} violations)", .0.violations.len())]
    InvalidScore(ValidationReport),
    #[error("alignment needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("step size must be positive")]
    StepSize,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

/// Vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, k: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * k).collect())
    }

    pub fn add(&self, other: &Embedding) -> Result<Embedding, EmbeddingError> {
        check_dims(self, other)?;
        Ok(Embedding(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dims(x: &Embedding, y: &Embedding) -> Result<(), EmbeddingError> {
    if x.dim() != y.dim() {
        return Err(EmbeddingError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Verb,
    Noun,
    Adverb,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Verb => "verb",
            Role::Noun => "noun",
            Role::Adverb => "adverb",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub text: String,
    pub role: Role,
    /// Staff column, nouns only.
    pub column: Option<Column>,
    /// Duration multiplier, adverbs only.
    pub duration_scale: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
#[error("vocab line {line}: {reason}")]
pub struct VocabError {
    pub line: usize,
    pub reason: String,
}

/// Controlled word list with role tags; nouns carry their staff column.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
}

const DEFAULT_VERBS: [&str; 10] =
    ["lift", "lower", "step", "turn", "reach", "bend", "stretch", "sway", "hold", "press"];
const DEFAULT_ADVERBS: [(&str, f64); 6] =
    [("slowly", 2.0), ("quickly", 0.5), ("gently", 1.0), ("sharply", 0.5), ("broadly", 2.0), ("softly", 1.0)];

impl Vocab {
    pub fn new(entries: Vec<VocabEntry>) -> Result<Self, VocabError> {
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let bad = |reason: String| VocabError { line: i + 1, reason };
            if index.insert(e.text.clone(), i).is_some() {
                return Err(bad(format!("duplicate word `{}`", e.text)));
            }
            match (e.role, e.column) {
                (Role::Noun, None) => return Err(bad(format!("noun `{}` has no column", e.text))),
                (Role::Verb | Role::Adverb, Some(_)) => {
                    return Err(bad(format!("only nouns carry a column (`{}`)", e.text)))
                }
                _ => {}
            }
            if let Some(scale) = e.duration_scale {
                if e.role != Role::Adverb || !(scale > 0.0 && scale.is_finite()) {
                    return Err(bad(format!("bad durscale for `{}`", e.text)));
                }
            }
        }
        Ok(Vocab { entries, index })
    }

    /// Ten verbs, the eight column names as nouns and six adverbs.
    pub fn standard() -> Self {
        let mut entries: Vec<VocabEntry> = DEFAULT_VERBS
            .iter()
            .map(|v| VocabEntry { text: v.to_string(), role: Role::Verb, column: None, duration_scale: None })
            .collect();
        entries.extend(Column::ALL.iter().map(|c| VocabEntry {
            text: c.name().to_string(),
            role: Role::Noun,
            column: Some(*c),
            duration_scale: None,
        }));
        entries.extend(DEFAULT_ADVERBS.iter().map(|(a, s)| VocabEntry {
            text: a.to_string(),
            role: Role::Adverb,
            column: None,
            duration_scale: Some(*s),
        }));
        Vocab::new(entries).expect("standard vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &VocabEntry {
        &self.entries[i]
    }

    pub fn index_of(&self, word: &str) -> Result<usize, EmbeddingError> {
        self.index.get(word).copied().ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))
    }

    pub fn indices<W: AsRef<str>>(&self, words: &[W]) -> Result<Vec<usize>, EmbeddingError> {
        words.iter().map(|w| self.index_of(w.as_ref())).collect()
    }

    pub fn words_with_role(&self, role: Role) -> impl Iterator<Item = &VocabEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Parses `word <text> role=<verb|noun|adverb> [col=<column>] [durscale=<float>]` lines.
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |reason: String| VocabError { line: line_no, reason };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(' ');
            if parts.next() != Some("word") {
                return Err(bad("expected `word`".into()));
            }
            let word = parts.next().filter(|w| !w.is_empty()).ok_or_else(|| bad("missing word".into()))?;
            let role = match parts.next() {
                Some("role=verb") => Role::Verb,
                Some("role=noun") => Role::Noun,
                Some("role=adverb") => Role::Adverb,
                other => return Err(bad(format!("bad role field {other:?}"))),
            };
            let mut column = None;
            let mut duration_scale = None;
            for field in parts {
                if let Some(c) = field.strip_prefix("col=") {
                    column = Some(Column::from_name(c).ok_or_else(|| bad(format!("unknown column `{c}`")))?);
                } else if let Some(s) = field.strip_prefix("durscale=") {
                    duration_scale = Some(s.parse().map_err(|_| bad(format!("bad durscale `{s}`")))?);
                } else {
                    return Err(bad(format!("unexpected field `{field}`")));
                }
            }
            entries.push(VocabEntry { text: word.to_string(), role, column, duration_scale });
        }
        Vocab::new(entries).map_err(|mut e| {
            e.reason = format!("entry {}: {}", e.line, e.reason);
            e
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("word {} role={}", e.text, e.role.name()));
            if let Some(c) = e.column {
                out.push_str(&format!(" col={c}"));
            }
            if let Some(s) = e.duration_scale {
                out.push_str(&format!(" durscale={s}"));
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Vocab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Encoder parameters: one embedding row per word and per enum value, one
/// learned direction each for start and duration, and a pooling scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<S = f64> {
    pub text: Matrix<S>,
    pub column: Matrix<S>,
    pub direction: Matrix<S>,
    pub level: Matrix<S>,
    pub rotation: Matrix<S>,
    pub flexion: Matrix<S>,
    pub path: Matrix<S>,
    pub facing: Matrix<S>,
    pub position: Matrix<S>,
    /// Row 0 scales with start, row 1 with duration (in beats).
    pub time: Matrix<S>,
    pub pool_scale: Matrix<S>,
}

const ENCODER_NAMES: [&str; 11] =
    ["text", "column", "direction", "level", "rotation", "flexion", "path", "facing", "position", "time", "pool_scale"];

impl<S: Copy> EncoderParams<S> {
    fn parts(&self) -> [&Matrix<S>; 11] {
        [
            &self.text,
            &self.column,
            &self.direction,
            &self.level,
            &self.rotation,
            &self.flexion,
            &self.path,
            &self.facing,
            &self.position,
            &self.time,
            &self.pool_scale,
        ]
    }

    fn from_parts(mut parts: Vec<Matrix<S>>) -> Self {
        let mut take = || parts.remove(0);
        EncoderParams {
            text: take(),
            column: take(),
            direction: take(),
            level: take(),
            rotation: take(),
            flexion: take(),
            path: take(),
            facing: take(),
            position: take(),
            time: take(),
            pool_scale: take(),
        }
    }

    pub fn dim(&self) -> usize {
        self.text.cols()
    }

    pub fn vocab_len(&self) -> usize {
        self.text.rows()
    }

    /// Same shapes, entries taken in order from `flat`.
    pub fn lift<T: Copy>(&self, flat: &[T]) -> EncoderParams<T> {
        let mut it = flat.iter();
        EncoderParams::from_parts(self.parts().iter().map(|m| m.map(&mut |_| *it.next().expect("flat length"))).collect())
    }

    fn pool(&self) -> S {
        self.pool_scale.get(0, 0)
    }
}

impl EncoderParams<f64> {
    pub fn init(vocab_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut table = |rows: usize| Matrix::from_vec(rows, dim, uniform_vec(&mut rng, rows * dim, INIT_HALF_WIDTH));
        EncoderParams {
            text: table(vocab_len),
            column: table(Column::COUNT),
            direction: table(Direction::COUNT),
            level: table(Level::COUNT),
            rotation: table(Rotation::COUNT),
            flexion: table(Flexion::COUNT),
            path: table(Path::COUNT),
            facing: table(Facing::COUNT),
            position: table(Position::COUNT),
            time: table(2),
            pool_scale: Matrix::from_vec(1, 1, vec![1.0]),
        }
    }
}

impl ParamBundle for EncoderParams<f64> {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        ENCODER_NAMES.iter().copied().zip(self.parts()).collect()
    }

    fn with_matrices(&self, mats: Vec<Matrix>) -> Result<Self, ParamsError> {
        for ((name, want), got) in self.named().iter().zip(&mats) {
            check_shape(name, got, want.rows(), want.cols())?;
        }
        if mats.len() != ENCODER_NAMES.len() {
            return Err(ParamsError::FlatLength { expected: ENCODER_NAMES.len(), found: mats.len() });
        }
        Ok(EncoderParams::from_parts(mats))
    }
}

fn add_into<S: Scalar>(acc: &mut [S], row: &[S]) {
    for (a, &r) in acc.iter_mut().zip(row) {
        *a = *a + r;
    }
}

fn zeros<S: Scalar>(dim: usize) -> Vec<S> {
    vec![S::constant(0.0); dim]
}

/// Mean of the word rows; zero vector for no words.
pub fn encode_text_indices<S: Scalar>(words: &[usize], p: &EncoderParams<S>) -> Vec<S> {
    let mut acc = zeros(p.dim());
    if words.is_empty() {
        return acc;
    }
    let mut sorted = words.to_vec();
    sorted.sort_unstable();
    for w in sorted {
        add_into(&mut acc, p.text.row(w));
    }
    let inv = 1.0 / words.len() as f64;
    acc.iter().map(|v| v.scale(inv)).collect()
}

fn beats(b: &crate::labanstr::Beat) -> f64 {
    *b.numer() as f64 / *b.denom() as f64
}

/// Summed attribute rows of one token plus its scaled time features.
pub fn token_vector<S: Scalar>(t: &LabanToken, p: &EncoderParams<S>) -> Vec<S> {
    let mut v = zeros(p.dim());
    add_into(&mut v, p.column.row(t.action.column.index()));
    add_into(&mut v, p.direction.row(t.action.direction.index()));
    add_into(&mut v, p.level.row(t.action.level.index()));
    add_into(&mut v, p.rotation.row(t.action.rotation.index()));
    add_into(&mut v, p.flexion.row(t.action.flexion.index()));
    add_into(&mut v, p.path.row(t.spatial.path.index()));
    add_into(&mut v, p.facing.row(t.spatial.facing.index()));
    add_into(&mut v, p.position.row(t.spatial.position.index()));
    let (start, dur) = (beats(&t.time.start), beats(&t.time.duration));
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = *slot + p.time.get(0, k).scale(start) + p.time.get(1, k).scale(dur);
    }
    v
}

/// Pooled motion embedding: scaled mean of token vectors, zero when empty.
/// Tokens are summed in canonical order so any permutation gives the same bits.
pub fn encode_motion_unchecked<S: Scalar>(s: &Score, p: &EncoderParams<S>) -> Vec<S> {
    let mut acc = zeros(p.dim());
    if s.tokens.is_empty() {
        return acc;
    }
    for t in &canonicalize(s).tokens {
        add_into(&mut acc, &token_vector(t, p));
    }
    let scale = p.pool();
    let inv = 1.0 / s.tokens.len() as f64;
    acc.iter().map(|&v| v.scale(inv) * scale).collect()
}

pub fn encode_text<W: AsRef<str>>(words: &[W], vocab: &Vocab, p: &EncoderParams) -> Result<Embedding, EmbeddingError> {
    let idx = vocab.indices(words)?;
    Ok(Embedding(encode_text_indices(&idx, p)))
}

pub fn encode_motion(s: &Score, p: &EncoderParams) -> Result<Embedding, EmbeddingError> {
    let report = validate_score(s);
    if !report.is_ok() {
        return Err(EmbeddingError::InvalidScore(report));
    }
    Ok(Embedding(encode_motion_unchecked(s, p)))
}

pub fn dot_similarity(x: &Embedding, y: &Embedding) -> Result<f64, EmbeddingError> {
    check_dims(x, y)?;
    Ok(dot(&x.0, &y.0))
}

/// Sign of the reward-weighted parameter-norm term in [`sc_score`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignMode {
    /// Adds the term, as the utility is printed.
    AsWritten,
    /// Subtracts it, so large parameters are penalized.
    #[default]
    Penalty,
}

impl SignMode {
    pub fn name(self) -> &'static str {
        match self {
            SignMode::AsWritten => "as_written",
            SignMode::Penalty => "penalty",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "as_written" => Some(SignMode::AsWritten),
            "penalty" => Some(SignMode::Penalty),
            _ => None,
        }
    }

    fn sign(self) -> f64 {
        match self {
            SignMode::AsWritten => 1.0,
            SignMode::Penalty => -1.0,
        }
    }
}

/// `similarity ± λ·e^(−R)·‖θ‖`, generic so it can sit inside a trained objective.
pub fn sc_combine<S: Scalar>(similarity: S, reward_energy: f64, theta_norm: S, lambda: f64, mode: SignMode) -> S {
    if lambda == 0.0 {
        return similarity;
    }
    similarity + theta_norm.scale(mode.sign() * lambda * (-reward_energy).exp())
}

pub fn sc_score(
    x: &Embedding,
    x_prime: &Embedding,
    reward_energy: f64,
    theta_norm: f64,
    lambda: f64,
    mode: SignMode,
) -> Result<f64, EmbeddingError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EmbeddingError::LambdaRange(lambda));
    }
    if !(theta_norm >= 0.0 && theta_norm.is_finite()) {
        return Err(EmbeddingError::ThetaNorm(theta_norm));
    }
    let similarity = dot_similarity(x, x_prime)?;
    Ok(sc_combine(similarity, reward_energy, theta_norm, lambda, mode))
}

pub fn interpolate_embeddings(e1: &Embedding, e2: &Embedding, t: f64) -> Result<Embedding, EmbeddingError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(EmbeddingError::InterpolationRange(t));
    }
    check_dims(e1, e2)?;
    Ok(Embedding(e1.0.iter().zip(&e2.0).map(|(a, b)| (1.0 - t) * a + t * b).collect()))
}

/// A text/motion training pair with words already resolved to vocab rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPair {
    pub words: Vec<usize>,
    pub score: Score,
}

impl AlignmentPair {
    pub fn new<W: AsRef<str>>(words: &[W], score: Score, vocab: &Vocab) -> Result<Self, EmbeddingError> {
        let report = validate_score(&score);
        if !report.is_ok() {
            return Err(EmbeddingError::InvalidScore(report));
        }
        Ok(AlignmentPair { words: vocab.indices(words)?, score })
    }
}

/// Mean over pairs of the matched dot minus the log-sum-exp of the
/// mismatched dots that involve either side of the pair.
pub fn alignment_objective<S: Scalar>(pairs: &[AlignmentPair], p: &EncoderParams<S>) -> S {
    let text: Vec<Vec<S>> = pairs.iter().map(|q| encode_text_indices(&q.words, p)).collect();
    let motion: Vec<Vec<S>> = pairs.iter().map(|q| encode_motion_unchecked(&q.score, p)).collect();
    let dots: Vec<Vec<S>> = text.iter().map(|zt| motion.iter().map(|zm| dot(zt, zm)).collect()).collect();
    let mut total = S::constant(0.0);
    for i in 0..pairs.len() {
        let mut mismatched = Vec::with_capacity(2 * pairs.len());
        for j in (0..pairs.len()).filter(|&j| j != i) {
            mismatched.push(dots[i][j]);
            mismatched.push(dots[j][i]);
        }
        total = total + dots[i][i] - logsumexp(&mismatched);
    }
    total.scale(1.0 / pairs.len() as f64)
}

/// Objective value and gradient with respect to the flattened parameters.
pub fn alignment_value_and_grad(pairs: &[AlignmentPair], template: &EncoderParams, flat: &[f64]) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars: Vec<Var> = flat.iter().map(|&v| tape.var(v)).collect();
    let out = alignment_objective(pairs, &template.lift(&vars));
    let mut grad = tape.gradient(out);
    grad.truncate(flat.len());
    (out.value(), grad)
}

/// Full-batch gradient ascent on [`alignment_objective`] with step halving.
pub fn train_alignment(
    pairs: &[AlignmentPair],
    params: &EncoderParams,
    steps: usize,
    step_size: f64,
) -> Result<(EncoderParams, Trace), EmbeddingError> {
    if pairs.len() < 2 {
        return Err(EmbeddingError::TooFewPairs(pairs.len()));
    }
    if !(step_size > 0.0) {
        return Err(EmbeddingError::StepSize);
    }
    let (flat, trace) = ascend(params.flatten(), AscentConfig::new(steps, step_size), |x| {
        Ok::<_, EmbeddingError>(alignment_value_and_grad(pairs, params, x))
    })?;
    Ok((params.with_flat(&flat)?, trace))
}
