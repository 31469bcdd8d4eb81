//! Artist-side adapters: a scripted oracle that rates scores against a
//! target histogram, and replay of feedback from a recorded log.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::session::{parse_jsonl, Artist, EventBody};
use crate::engine::{Decision, EngineError, FeedbackEvent, Judgement};
use crate::labanstr::{attribute_histogram, Cell, Column, Direction, Level, Score};

#[derive(Debug, Error, PartialEq)]
pub enum ArtistError {
    #[error("oracle spec line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("invalid oracle spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Log(#[from] EngineError),
}

/// The scripted artist's taste: a target attribute histogram, the best
/// rating and how many cells one judgement may name.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub target: Vec<f64>,
    pub r_max: f64,
    pub budget: usize,
}

impl OracleSpec {
    pub fn new(target: Vec<f64>, r_max: f64, budget: usize) -> Result<Self, ArtistError> {
        let spec = OracleSpec { target, r_max, budget };
        spec.validate()?;
        Ok(spec)
    }

    /// Target equal to the histogram of `reference`.
    pub fn from_score(reference: &Score, r_max: f64, budget: usize) -> Result<Self, ArtistError> {
        let h = attribute_histogram(reference);
        if h.empty {
            return Err(ArtistError::Invalid("reference score is empty".into()));
        }
        OracleSpec::new(h.cells, r_max, budget)
    }

    pub fn validate(&self) -> Result<(), ArtistError> {
        let bad = |m: String| Err(ArtistError::Invalid(m));
        if self.target.len() != Cell::COUNT {
            return bad(format!("target has {} cells, expected {}", self.target.len(), Cell::COUNT));
        }
        if let Some(m) = self.target.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return bad(format!("target mass {m} must be finite and nonnegative"));
        }
        let total: f64 = self.target.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("target sums to {total}, not 1"));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return bad(format!("rmax {} must be positive", self.r_max));
        }
        Ok(())
    }

    /// Lines `cell <col> <dir> <lvl> <mass>`, `rmax <v>` and `budget <n>`;
    /// `#` starts a comment. Unlisted cells have zero mass.
    pub fn parse(text: &str) -> Result<Self, ArtistError> {
        let mut target = vec![0.0; Cell::COUNT];
        let (mut r_max, mut budget) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| ArtistError::Syntax { line: line_no, reason };
            let line = raw.split('#').next().unwrap_or("").trim();
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["cell", col, dir, lvl, mass] => {
                    let cell = Cell {
                        column: Column::from_name(col).ok_or_else(|| err(format!("unknown column {col}")))?,
                        direction: Direction::from_name(dir).ok_or_else(|| err(format!("unknown direction {dir}")))?,
                        level: Level::from_name(lvl).ok_or_else(|| err(format!("unknown level {lvl}")))?,
                    };
                    let mass: f64 = mass.parse().map_err(|_| err(format!("bad mass {mass}")))?;
                    target[cell.index()] += mass;
                }
                ["rmax", v] => r_max = Some(v.parse().map_err(|_| err(format!("bad rmax {v}")))?),
                ["budget", n] => budget = Some(n.parse().map_err(|_| err(format!("bad budget {n}")))?),
                _ => return Err(err(format!("cannot read `{line}`"))),
            }
        }
        let r_max = r_max.ok_or_else(|| ArtistError::Invalid("missing rmax".into()))?;
        let budget = budget.ok_or_else(|| ArtistError::Invalid("missing budget".into()))?;
        OracleSpec::new(target, r_max, budget)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &m) in self.target.iter().enumerate() {
            if m != 0.0 {
                let cell = Cell::from_index(i).expect("target has one entry per cell");
                writeln!(out, "cell {cell} {m:?}").expect("writing to a string");
            }
        }
        writeln!(out, "rmax {:?}", self.r_max).expect("writing to a string");
        writeln!(out, "budget {}", self.budget).expect("writing to a string");
        out
    }

    /// Total-variation distance between the score's histogram and the target.
    pub fn distance(&self, s: &Score) -> f64 {
        attribute_histogram(s).total_variation(&self.target)
    }
}

/// Rating `R_max·(1 − TV)` (zero for an empty score) and a judgement naming
/// the `budget` cells with the largest positive deficit, largest first, ties
/// by cell index.
pub fn scripted_feedback(spec: &OracleSpec, s: &Score, iteration: usize) -> FeedbackEvent {
    let h = attribute_histogram(s);
    let rating = if h.empty { 0.0 } else { (spec.r_max * (1.0 - h.total_variation(&spec.target))).clamp(0.0, spec.r_max) };
    let mut deficits: Vec<(usize, f64)> = spec
        .target
        .iter()
        .zip(&h.cells)
        .map(|(t, o)| t - o)
        .enumerate()
        .filter(|&(_, d)| d > 0.0)
        .collect();
    deficits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let targets = deficits
        .into_iter()
        .take(spec.budget)
        .map(|(i, d)| (Cell::from_index(i).expect("deficits are indexed by cell"), d))
        .collect();
    FeedbackEvent { iteration, rating, judgement: Judgement { text: Vec::new(), targets }, decision: Decision::None }
}

pub struct ScriptedArtist {
    pub spec: OracleSpec,
}

impl Artist for ScriptedArtist {
    fn feedback(&mut self, iteration: usize, score: &Score) -> Result<Option<FeedbackEvent>, EngineError> {
        Ok(Some(scripted_feedback(&self.spec, score, iteration)))
    }
}

/// Feedback events of a JSONL log in seq order.
pub fn replay_feedback(log: &str) -> Result<Vec<FeedbackEvent>, ArtistError> {
    let mut events = parse_jsonl(log)?;
    events.sort_by_key(|e| e.seq);
    let mut out = Vec::new();
    for e in events.iter().filter(|e| e.kind == "feedback") {
        if let EventBody::Feedback(fb) = e.body()? {
            out.push(fb);
        }
    }
    Ok(out)
}

/// Plays back recorded feedback; pauses once it runs out.
pub struct ReplayArtist {
    queue: VecDeque<FeedbackEvent>,
}

impl ReplayArtist {
    pub fn new(events: Vec<FeedbackEvent>) -> Self {
        ReplayArtist { queue: events.into() }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Artist for ReplayArtist {
    fn feedback(&mut self, iteration: usize, _score: &Score) -> Result<Option<FeedbackEvent>, EngineError> {
        match self.queue.front() {
            Some(fb) if fb.iteration != iteration => Err(EngineError::Feedback(format!(
                "recorded feedback is for iteration {}, the session is at {iteration}",
                fb.iteration
            ))),
            _ => Ok(self.queue.pop_front()),
        }
    }
}
