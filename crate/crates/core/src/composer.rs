//! Textural elements (verb, noun, adverb) and conditional score generation.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{log_softmax, masked_log_softmax, Scalar, Tape, Var};
use crate::embedding::{encode_text_indices, EmbeddingError, EncoderParams, Role, Vocab};
use crate::labanstr::{
    canonicalize, Beat, Column, Direction, Flexion, LabanToken, Level, Meter, Rotation, Score, SpatialAttrs,
    TimeAttrs, ActionAttrs,
};
use crate::optim::{ascend, AscentConfig, OptimError, Trace};
use crate::params::{check_shape, Matrix, ParamBundle, ParamsError};
use crate::rng::{sample_index, seeded, uniform_vec, SeededRng};

/// Token durations in beats, as (numerator, denominator).
pub const DURATIONS: [(i64, i64); 3] = [(1, 2), (1, 1), (2, 1)];
pub const HORIZON_BEATS: i64 = 8;
/// Half-beat start slots across the horizon.
pub const SLOTS: usize = (HORIZON_BEATS * 2) as usize;
const PAIRS: usize = Column::COUNT * DURATIONS.len();

#[derive(Debug, Error, PartialEq)]
pub enum ComposerError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("element started at word {position} has no noun")]
    MissingNoun { position: usize },
    #[error("noun at word {position} has no verb to attach to")]
    OrphanNoun { position: usize },
    #[error("adverb at word {position} follows an element that already has one")]
    DuplicateAdverb { position: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("guidance weight {0} is negative or not finite")]
    GuidanceWeight(f64),
    #[error("conditioning has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("step size must be positive")]
    StepSize,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

/// Vocab row indices of one (verb, noun, adverb) group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TexturalElement {
    pub verb: usize,
    pub noun: usize,
    pub adverb: Option<usize>,
}

impl TexturalElement {
    pub fn words(&self) -> Vec<usize> {
        let mut w = vec![self.verb, self.noun];
        w.extend(self.adverb);
        w
    }

    pub fn column(&self, vocab: &Vocab) -> Column {
        vocab.entry(self.noun).column.expect("element nouns carry a column")
    }

    pub fn duration_scale(&self, vocab: &Vocab) -> f64 {
        self.adverb.and_then(|a| vocab.entry(a).duration_scale).unwrap_or(1.0)
    }

    pub fn describe(&self, vocab: &Vocab) -> String {
        let mut s = format!("{} {}", vocab.entry(self.verb).text, vocab.entry(self.noun).text);
        if let Some(a) = self.adverb {
            s.push(' ');
            s.push_str(&vocab.entry(a).text);
        }
        s
    }
}

struct OpenElement {
    verb: usize,
    position: usize,
    noun: Option<usize>,
    adverb: Option<usize>,
}

/// Greedy left-to-right grouping. A verb opens an element, the next noun
/// fills it, and an adverb goes to the latest element (or waits for the
/// next verb when none is open yet).
pub fn parse_textural_elements<W: AsRef<str>>(
    words: &[W],
    vocab: &Vocab,
) -> Result<Vec<TexturalElement>, ComposerError> {
    let idx = vocab.indices(words)?;
    let mut open: Vec<OpenElement> = Vec::new();
    let mut pending_adverb: Option<(usize, usize)> = None;
    for (position, &w) in idx.iter().enumerate() {
        match vocab.entry(w).role {
            Role::Verb => {
                let adverb = pending_adverb.take().map(|(_, a)| a);
                open.push(OpenElement { verb: w, position, noun: None, adverb });
            }
            Role::Noun => match open.last_mut() {
                Some(e) if e.noun.is_none() => e.noun = Some(w),
                _ => return Err(ComposerError::OrphanNoun { position }),
            },
            Role::Adverb => match open.last_mut() {
                Some(e) if e.adverb.is_none() => e.adverb = Some(w),
                Some(_) => return Err(ComposerError::DuplicateAdverb { position }),
                None if pending_adverb.is_none() => pending_adverb = Some((position, w)),
                None => return Err(ComposerError::DuplicateAdverb { position }),
            },
        }
    }
    if let Some((position, _)) = pending_adverb {
        return Err(ComposerError::MissingNoun { position });
    }
    open.into_iter()
        .map(|e| match e.noun {
            Some(noun) => Ok(TexturalElement { verb: e.verb, noun, adverb: e.adverb }),
            None => Err(ComposerError::MissingNoun { position: e.position }),
        })
        .collect()
}

/// Categorical distributions for one element, plus the lexicon-fixed parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDistribution {
    pub direction: Vec<f64>,
    pub level: Vec<f64>,
    pub rotation: Vec<f64>,
    pub flexion: Vec<f64>,
    pub column: Column,
    pub duration_scale: f64,
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

impl AttributeDistribution {
    pub fn top_direction(&self) -> Direction {
        Direction::ALL[argmax(&self.direction)]
    }

    pub fn top_level(&self) -> Level {
        Level::ALL[argmax(&self.level)]
    }

    pub fn top_rotation(&self) -> Rotation {
        Rotation::ALL[argmax(&self.rotation)]
    }

    pub fn top_flexion(&self) -> Flexion {
        Flexion::ALL[argmax(&self.flexion)]
    }
}

/// One linear head (weights `d × k`, bias `1 × k`) per attribute family,
/// the history map and the sampling temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposerParams<S = f64> {
    pub column_w: Matrix<S>,
    pub column_b: Matrix<S>,
    pub duration_w: Matrix<S>,
    pub duration_b: Matrix<S>,
    pub direction_w: Matrix<S>,
    pub direction_b: Matrix<S>,
    pub level_w: Matrix<S>,
    pub level_b: Matrix<S>,
    pub rotation_w: Matrix<S>,
    pub rotation_b: Matrix<S>,
    pub flexion_w: Matrix<S>,
    pub flexion_b: Matrix<S>,
    pub history: Matrix<S>,
    /// 1×1; read as a constant, never differentiated.
    pub temperature: Matrix<S>,
}

const COMPOSER_NAMES: [&str; 14] = [
    "column_w",
    "column_b",
    "duration_w",
    "duration_b",
    "direction_w",
    "direction_b",
    "level_w",
    "level_b",
    "rotation_w",
    "rotation_b",
    "flexion_w",
    "flexion_b",
    "history",
    "temperature",
];

impl<S: Copy> ComposerParams<S> {
    fn parts(&self) -> [&Matrix<S>; 14] {
        [
            &self.column_w,
            &self.column_b,
            &self.duration_w,
            &self.duration_b,
            &self.direction_w,
            &self.direction_b,
            &self.level_w,
            &self.level_b,
            &self.rotation_w,
            &self.rotation_b,
            &self.flexion_w,
            &self.flexion_b,
            &self.history,
            &self.temperature,
        ]
    }

    fn from_parts(mut parts: Vec<Matrix<S>>) -> Self {
        let mut take = || parts.remove(0);
        ComposerParams {
            column_w: take(),
            column_b: take(),
            duration_w: take(),
            duration_b: take(),
            direction_w: take(),
            direction_b: take(),
            level_w: take(),
            level_b: take(),
            rotation_w: take(),
            rotation_b: take(),
            flexion_w: take(),
            flexion_b: take(),
            history: take(),
            temperature: take(),
        }
    }

    pub fn dim(&self) -> usize {
        self.history.rows()
    }

    pub fn lift<T: Copy>(&self, flat: &[T]) -> ComposerParams<T> {
        let mut it = flat.iter();
        ComposerParams::from_parts(
            self.parts().iter().map(|m| m.map(&mut |_| *it.next().expect("flat length"))).collect(),
        )
    }
}

impl ComposerParams<f64> {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut head = |k: usize| Matrix::from_vec(dim, k, uniform_vec(&mut rng, dim * k, 0.1));
        let column_w = head(Column::COUNT);
        let duration_w = head(DURATIONS.len());
        let direction_w = head(Direction::COUNT);
        let level_w = head(Level::COUNT);
        let rotation_w = head(Rotation::COUNT);
        let flexion_w = head(Flexion::COUNT);
        let history = head(dim);
        ComposerParams {
            column_w,
            column_b: Matrix::zeros(1, Column::COUNT),
            duration_w,
            duration_b: Matrix::zeros(1, DURATIONS.len()),
            direction_w,
            direction_b: Matrix::zeros(1, Direction::COUNT),
            level_w,
            level_b: Matrix::zeros(1, Level::COUNT),
            rotation_w,
            rotation_b: Matrix::zeros(1, Rotation::COUNT),
            flexion_w,
            flexion_b: Matrix::zeros(1, Flexion::COUNT),
            history,
            temperature: Matrix::from_vec(1, 1, vec![1.0]),
        }
    }
}

impl ComposerParams<f64> {
    /// Heads whose weight columns start as the encoder's attribute rows, so
    /// a conditioning vector near a token's embedding favours that token.
    pub fn tied(enc: &EncoderParams, seed: u64) -> Self {
        let mut p = ComposerParams::init(enc.dim(), seed);
        let transpose = |m: &Matrix| {
            let mut t = Matrix::zeros(m.cols(), m.rows());
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    t.set(c, r, m.get(r, c));
                }
            }
            t
        };
        p.column_w = transpose(&enc.column);
        p.direction_w = transpose(&enc.direction);
        p.level_w = transpose(&enc.level);
        p.rotation_w = transpose(&enc.rotation);
        p.flexion_w = transpose(&enc.flexion);
        p
    }
}

impl ParamBundle for ComposerParams<f64> {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        COMPOSER_NAMES.iter().copied().zip(self.parts()).collect()
    }

    fn with_matrices(&self, mats: Vec<Matrix>) -> Result<Self, ParamsError> {
        if mats.len() != COMPOSER_NAMES.len() {
            return Err(ParamsError::FlatLength { expected: COMPOSER_NAMES.len(), found: mats.len() });
        }
        for ((name, want), got) in self.named().iter().zip(&mats) {
            check_shape(name, got, want.rows(), want.cols())?;
        }
        let t = mats[13].get(0, 0);
        if !(t > 0.0) {
            return Err(ParamsError::NonFinite("temperature".into()));
        }
        Ok(ComposerParams::from_parts(mats))
    }
}

/// Fixed input gain of every head. Embeddings start near the ±0.1 init
/// scale, and without it the weights learn far slower than the biases.
pub const HEAD_GAIN: f64 = 10.0;

fn head_logits<S: Scalar>(u: &[S], w: &Matrix<S>, b: &Matrix<S>) -> Vec<S> {
    (0..w.cols())
        .map(|k| {
            let z = u.iter().enumerate().fold(S::constant(0.0), |acc, (i, &ui)| acc + ui * w.get(i, k));
            b.get(0, k) + z.scale(HEAD_GAIN)
        })
        .collect()
}

fn probs<S: Scalar>(log_p: &[S]) -> Vec<S> {
    log_p.iter().map(|&l| if l.value() == f64::NEG_INFINITY { S::constant(0.0) } else { l.exp() }).collect()
}

fn tempered<S: Scalar>(logits: Vec<S>, temperature: S) -> Vec<S> {
    let inv = temperature.ln().scale(-1.0).exp();
    logits.into_iter().map(|l| l * inv).collect()
}

pub fn compose_attributes(
    e: &TexturalElement,
    vocab: &Vocab,
    enc: &EncoderParams,
    comp: &ComposerParams,
) -> AttributeDistribution {
    let u = encode_text_indices(&e.words(), enc);
    let dist = |w: &Matrix, b: &Matrix| probs(&log_softmax(&head_logits(&u, w, b)));
    AttributeDistribution {
        direction: dist(&comp.direction_w, &comp.direction_b),
        level: dist(&comp.level_w, &comp.level_b),
        rotation: dist(&comp.rotation_w, &comp.rotation_b),
        flexion: dist(&comp.flexion_w, &comp.flexion_b),
        column: e.column(vocab),
        duration_scale: e.duration_scale(vocab),
    }
}

fn duration_index(d: Beat) -> Option<usize> {
    DURATIONS.iter().position(|&(n, k)| Beat::new(n, k) == d)
}

fn slot_len(duration_index: usize) -> usize {
    let (n, d) = DURATIONS[duration_index];
    (2 * n / d) as usize
}

/// Half-beat occupancy per column.
#[derive(Debug, Clone, Default)]
struct Grid {
    taken: [[bool; SLOTS]; Column::COUNT],
}

impl Grid {
    fn earliest(&self, column: usize, len: usize) -> Option<usize> {
        (0..=SLOTS.saturating_sub(len)).find(|&s| self.taken[column][s..s + len].iter().all(|t| !t))
    }

    fn fill(&mut self, column: usize, start: usize, len: usize) {
        self.taken[column][start..start + len].iter_mut().for_each(|t| *t = true);
    }
}

/// Distributions the sampler drew from at one step; probabilities, with
/// zeros where placements were masked.
#[derive(Debug, Clone)]
pub struct StepDistributions<S> {
    /// Joint over (column, duration), column-major: `column * 3 + duration`.
    pub placement: Vec<S>,
    pub direction: Vec<S>,
    pub level: Vec<S>,
    pub rotation: Vec<S>,
    pub flexion: Vec<S>,
}

impl<S: Scalar> StepDistributions<S> {
    pub fn column_marginal(&self) -> Vec<S> {
        (0..Column::COUNT)
            .map(|c| {
                let row = &self.placement[c * DURATIONS.len()..(c + 1) * DURATIONS.len()];
                row.iter().fold(S::constant(0.0), |acc, &p| acc + p)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Generation<S = f64> {
    pub score: Score,
    /// True when the grid ran out of legal placements before `length` tokens.
    pub exhausted: bool,
    /// Generated tokens in generation order, with the distributions behind them.
    pub steps: Vec<(LabanToken, StepDistributions<S>)>,
}

fn draw<S: Scalar>(rng: &mut SeededRng, p: &[S]) -> usize {
    let weights: Vec<f64> = p.iter().map(|v| v.value()).collect();
    let u: f64 = rng.random();
    // non-finite weights only arise from degenerate parameters; any unmasked
    // entry will do because the objective is non-finite there anyway
    sample_index(&weights, u)
        .or_else(|| weights.iter().position(|&w| w != 0.0))
        .expect("at least one unmasked entry")
}

/// Autoregressive sampler over the action grid, generic in the scalar so
/// the realized sample's probabilities can be differentiated.
pub fn generate_with<S: Scalar>(condition: &[S], comp: &ComposerParams<S>, length: usize, seed: u64) -> Generation<S> {
    let dim = comp.dim();
    let temperature = comp.temperature.get(0, 0);
    let mut rng = seeded(seed);
    let mut grid = Grid::default();
    let mut history_sum = vec![S::constant(0.0); dim];
    let mut steps = Vec::with_capacity(length);
    let mut exhausted = false;
    for i in 0..length {
        let context: Vec<S> = if i == 0 {
            condition.to_vec()
        } else {
            let inv = 1.0 / i as f64;
            (0..dim)
                .map(|r| {
                    (0..dim).fold(condition[r], |acc, c| acc + comp.history.get(r, c) * history_sum[c].scale(inv))
                })
                .collect()
        };
        let col_logits = head_logits(&context, &comp.column_w, &comp.column_b);
        let dur_logits = head_logits(&context, &comp.duration_w, &comp.duration_b);
        let mut joint = Vec::with_capacity(PAIRS);
        let mut mask = Vec::with_capacity(PAIRS);
        for (c, &cl) in col_logits.iter().enumerate() {
            for (d, &dl) in dur_logits.iter().enumerate() {
                joint.push(cl + dl);
                mask.push(grid.earliest(c, slot_len(d)).is_some());
            }
        }
        if !mask.iter().any(|&m| m) {
            exhausted = true;
            break;
        }
        let placement = probs(&masked_log_softmax(&tempered(joint, temperature), &mask));
        let pick = draw(&mut rng, &placement);
        let (c, d) = (pick / DURATIONS.len(), pick % DURATIONS.len());
        let start = grid.earliest(c, slot_len(d)).expect("masked placements are legal");
        grid.fill(c, start, slot_len(d));

        let family = |w: &Matrix<S>, b: &Matrix<S>| probs(&log_softmax(&tempered(head_logits(&context, w, b), temperature)));
        let dist = StepDistributions {
            placement,
            direction: family(&comp.direction_w, &comp.direction_b),
            level: family(&comp.level_w, &comp.level_b),
            rotation: family(&comp.rotation_w, &comp.rotation_b),
            flexion: family(&comp.flexion_w, &comp.flexion_b),
        };
        let direction = draw(&mut rng, &dist.direction);
        let level = draw(&mut rng, &dist.level);
        let rotation = draw(&mut rng, &dist.rotation);
        let flexion = draw(&mut rng, &dist.flexion);

        for (r, h) in history_sum.iter_mut().enumerate() {
            *h = *h
                + comp.column_w.get(r, c)
                + comp.direction_w.get(r, direction)
                + comp.level_w.get(r, level);
        }
        let (n, k) = DURATIONS[d];
        let token = LabanToken {
            time: TimeAttrs { meter: Meter::COMMON, start: Beat::new(start as i64, 2), duration: Beat::new(n, k) },
            spatial: SpatialAttrs::default(),
            action: ActionAttrs {
                column: Column::ALL[c],
                direction: Direction::ALL[direction],
                level: Level::ALL[level],
                rotation: Rotation::ALL[rotation],
                flexion: Flexion::ALL[flexion],
            },
        };
        steps.push((token, dist));
    }
    let raw = Score { meter: Meter::COMMON, tokens: steps.iter().map(|(t, _)| *t).collect() };
    Generation { score: canonicalize(&raw), exhausted, steps }
}

/// `condition + guidance_weight · guidance`; the guidance is skipped
/// entirely at weight zero.
pub fn conditioning(
    condition: &[f64],
    guidance: Option<&[f64]>,
    guidance_weight: f64,
) -> Result<Vec<f64>, ComposerError> {
    if !(guidance_weight >= 0.0 && guidance_weight.is_finite()) {
        return Err(ComposerError::GuidanceWeight(guidance_weight));
    }
    match guidance {
        Some(g) if guidance_weight != 0.0 => {
            if g.len() != condition.len() {
                return Err(ComposerError::Dimension { expected: condition.len(), found: g.len() });
            }
            Ok(condition.iter().zip(g).map(|(c, g)| c + guidance_weight * g).collect())
        }
        _ => Ok(condition.to_vec()),
    }
}

pub fn generate_score(
    condition: &[f64],
    guidance: Option<&[f64]>,
    guidance_weight: f64,
    length: usize,
    comp: &ComposerParams,
    seed: u64,
) -> Result<Generation, ComposerError> {
    if condition.len() != comp.dim() {
        return Err(ComposerError::Dimension { expected: comp.dim(), found: condition.len() });
    }
    let c = conditioning(condition, guidance, guidance_weight)?;
    Ok(generate_with(&c, comp, length, seed))
}

fn expected_row<S: Scalar>(p: &[S], table: &Matrix<S>, acc: &mut [S]) {
    for (k, &pk) in p.iter().enumerate() {
        for (a, &r) in acc.iter_mut().zip(table.row(k)) {
            *a = *a + pk * r;
        }
    }
}

/// Motion embedding of a generation with each sampled categorical replaced
/// by its probability-weighted mean row. Placement, start and the neutral
/// spatial attributes stay as realized.
pub fn soft_motion_embedding<S: Scalar>(g: &Generation<S>, enc: &EncoderParams<S>) -> Vec<S> {
    let dim = enc.dim();
    let mut acc = vec![S::constant(0.0); dim];
    if g.steps.is_empty() {
        return acc;
    }
    for (t, dist) in &g.steps {
        expected_row(&dist.column_marginal(), &enc.column, &mut acc);
        expected_row(&dist.direction, &enc.direction, &mut acc);
        expected_row(&dist.level, &enc.level, &mut acc);
        expected_row(&dist.rotation, &enc.rotation, &mut acc);
        expected_row(&dist.flexion, &enc.flexion, &mut acc);
        let fixed = [
            enc.path.row(t.spatial.path.index()),
            enc.facing.row(t.spatial.facing.index()),
            enc.position.row(t.spatial.position.index()),
        ];
        let start = *t.time.start.numer() as f64 / *t.time.start.denom() as f64;
        let dur = *t.time.duration.numer() as f64 / *t.time.duration.denom() as f64;
        for k in 0..dim {
            acc[k] = acc[k] + fixed[0][k] + fixed[1][k] + fixed[2][k]
                + enc.time.get(0, k).scale(start)
                + enc.time.get(1, k).scale(dur);
        }
    }
    let scale = enc.pool_scale.get(0, 0);
    let inv = 1.0 / g.steps.len() as f64;
    acc.into_iter().map(|v| v.scale(inv) * scale).collect()
}

/// Labeled composer example: an element and the token it should produce.
pub type CorpusItem = (TexturalElement, LabanToken);

/// Fixed attributes for a verb: direction, level, rotation, flexion.
pub fn verb_attributes(verb: &str, rank: usize) -> (Direction, Level, Rotation, Flexion) {
    use Direction as D;
    use Level as L;
    match verb {
        "lift" => (D::Forward, L::High, Rotation::None, Flexion::None),
        "lower" => (D::Place, L::Low, Rotation::None, Flexion::None),
        "step" => (D::Forward, L::Middle, Rotation::None, Flexion::None),
        "turn" => (D::Place, L::Middle, Rotation::CwQuarter, Flexion::None),
        "reach" => (D::RightForward, L::High, Rotation::None, Flexion::Extended),
        "bend" => (D::Place, L::Low, Rotation::None, Flexion::Flexed),
        "stretch" => (D::LeftForward, L::High, Rotation::None, Flexion::Extended),
        "sway" => (D::Left, L::Middle, Rotation::None, Flexion::None),
        "hold" => (D::Place, L::Middle, Rotation::None, Flexion::None),
        "press" => (D::Back, L::Low, Rotation::None, Flexion::Flexed),
        _ => (Direction::ALL[rank % Direction::COUNT], Level::ALL[rank % Level::COUNT], Rotation::None, Flexion::None),
    }
}

fn grid_duration(scale: f64) -> Beat {
    let (n, d) = if scale >= 1.5 {
        DURATIONS[2]
    } else if scale <= 0.75 {
        DURATIONS[0]
    } else {
        DURATIONS[1]
    };
    Beat::new(n, d)
}

/// Token an element maps to when no noise is applied.
pub fn canonical_token(e: &TexturalElement, vocab: &Vocab) -> LabanToken {
    let verbs: Vec<usize> = (0..vocab.len()).filter(|&i| vocab.entry(i).role == Role::Verb).collect();
    let rank = verbs.iter().position(|&v| v == e.verb).unwrap_or(0);
    let (direction, level, rotation, flexion) = verb_attributes(&vocab.entry(e.verb).text, rank);
    LabanToken {
        time: TimeAttrs { meter: Meter::COMMON, start: Beat::from_integer(0), duration: grid_duration(e.duration_scale(vocab)) },
        spatial: SpatialAttrs::default(),
        action: ActionAttrs { column: e.column(vocab), direction, level, rotation, flexion },
    }
}

/// Random elements paired with their canonical tokens. With probability
/// `noise` each categorical attribute is replaced by a uniform draw.
pub fn procedural_corpus(vocab: &Vocab, size: usize, noise: f64, seed: u64) -> Vec<CorpusItem> {
    let pick = |role: Role| -> Vec<usize> { (0..vocab.len()).filter(|&i| vocab.entry(i).role == role).collect() };
    let (verbs, nouns, adverbs) = (pick(Role::Verb), pick(Role::Noun), pick(Role::Adverb));
    let mut rng = seeded(seed);
    (0..size)
        .map(|_| {
            let verb = verbs[rng.random_range(0..verbs.len())];
            let noun = nouns[rng.random_range(0..nouns.len())];
            let adverb = (!adverbs.is_empty() && rng.random_bool(0.5)).then(|| adverbs[rng.random_range(0..adverbs.len())]);
            let e = TexturalElement { verb, noun, adverb };
            let mut t = canonical_token(&e, vocab);
            let noisy = |n: usize, rng: &mut SeededRng| rng.random_bool(noise).then(|| rng.random_range(0..n));
            if let Some(i) = noisy(Direction::COUNT, &mut rng) {
                t.action.direction = Direction::ALL[i];
            }
            if let Some(i) = noisy(Level::COUNT, &mut rng) {
                t.action.level = Level::ALL[i];
            }
            if let Some(i) = noisy(Rotation::COUNT, &mut rng) {
                t.action.rotation = Rotation::ALL[i];
            }
            if let Some(i) = noisy(Flexion::COUNT, &mut rng) {
                t.action.flexion = Flexion::ALL[i];
            }
            (e, t)
        })
        .collect()
}

/// Corpus example with its element embedding precomputed.
#[derive(Debug, Clone)]
pub struct PreparedItem {
    pub embedding: Vec<f64>,
    pub column: usize,
    pub duration: Option<usize>,
    pub direction: usize,
    pub level: usize,
    pub rotation: usize,
    pub flexion: usize,
}

pub fn prepare_corpus(corpus: &[CorpusItem], enc: &EncoderParams) -> Vec<PreparedItem> {
    corpus
        .iter()
        .map(|(e, t)| PreparedItem {
            embedding: encode_text_indices(&e.words(), enc),
            column: t.action.column.index(),
            duration: duration_index(t.time.duration),
            direction: t.action.direction.index(),
            level: t.action.level.index(),
            rotation: t.action.rotation.index(),
            flexion: t.action.flexion.index(),
        })
        .collect()
}

/// Mean log-probability of the labeled column, duration, direction, level,
/// rotation and flexion under the heads.
pub fn composer_loglik<S: Scalar>(items: &[PreparedItem], comp: &ComposerParams<S>) -> S {
    let mut total = S::constant(0.0);
    for item in items {
        let u: Vec<S> = item.embedding.iter().map(|&v| S::constant(v)).collect();
        let lp = |w: &Matrix<S>, b: &Matrix<S>, label: usize| log_softmax(&head_logits(&u, w, b))[label];
        total = total
            + lp(&comp.column_w, &comp.column_b, item.column)
            + lp(&comp.direction_w, &comp.direction_b, item.direction)
            + lp(&comp.level_w, &comp.level_b, item.level)
            + lp(&comp.rotation_w, &comp.rotation_b, item.rotation)
            + lp(&comp.flexion_w, &comp.flexion_b, item.flexion);
        if let Some(d) = item.duration {
            total = total + lp(&comp.duration_w, &comp.duration_b, d);
        }
    }
    total.scale(1.0 / items.len() as f64)
}

pub fn composer_value_and_grad(items: &[PreparedItem], template: &ComposerParams, flat: &[f64]) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars: Vec<Var> = flat.iter().map(|&v| tape.var(v)).collect();
    let out = composer_loglik(items, &template.lift(&vars));
    let mut grad = tape.gradient(out);
    grad.truncate(flat.len());
    (out.value(), grad)
}

/// Full-batch gradient ascent on [`composer_loglik`]; the encoder is frozen.
pub fn train_composer(
    corpus: &[CorpusItem],
    enc: &EncoderParams,
    comp: &ComposerParams,
    steps: usize,
    step_size: f64,
) -> Result<(ComposerParams, Trace), ComposerError> {
    if corpus.is_empty() {
        return Err(ComposerError::EmptyCorpus);
    }
    if !(step_size > 0.0) {
        return Err(ComposerError::StepSize);
    }
    let items = prepare_corpus(corpus, enc);
    let (flat, trace) = ascend(comp.flatten(), AscentConfig::new(steps, step_size), |x| {
        Ok::<_, ComposerError>(composer_value_and_grad(&items, comp, x))
    })?;
    Ok((comp.with_flat(&flat)?, trace))
}
