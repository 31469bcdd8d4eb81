//! Browser demo: decode a score into joint trajectories, blend two cyclic
//! signals across a seam, and generate a score from a prompt.
//!
//! The plain functions return JSON text so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use std::f64::consts::TAU;

use atelier_core::composer::{generate_score, parse_textural_elements, procedural_corpus, train_composer, ComposerParams};
use atelier_core::embedding::{encode_text, train_alignment, AlignmentPair, EncoderParams, Vocab};
use atelier_core::engine::LoopSettings;
use atelier_core::labanstr::{
    attribute_histogram, canonicalize, decode_channels, parse_score, serialize_score, validate_score, Cell, Column, Score,
};
use atelier_core::phase::{blend_transition, fit_cyclic_elements, reconstruct_signal};
use atelier_core::rng::derive_seed;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Canonical text, violations, per-column samples and the occupied cells.
pub fn decode_json(text: &str, sample_rate: u32) -> Result<Value, String> {
    let score = parse_score(text).map_err(err)?;
    let violations: Vec<String> = validate_score(&score).violations.iter().map(|v| v.to_string()).collect();
    let canonical = serialize_score(&canonicalize(&score));
    if !violations.is_empty() {
        return Ok(json!({ "canonical": canonical, "violations": violations, "columns": {}, "cells": [] }));
    }
    let decoded = decode_channels(&score, sample_rate).map_err(err)?;
    let columns: serde_json::Map<String, Value> = Column::ALL
        .iter()
        .map(|&c| (c.name().to_string(), json!(decoded.column(c))))
        .collect();
    let hist = attribute_histogram(&score);
    let cells: Vec<Value> = Cell::all()
        .filter(|&c| hist.mass(c) > 0.0)
        .map(|c| json!({ "cell": c.to_string(), "mass": hist.mass(c) }))
        .collect();
    Ok(json!({ "canonical": canonical, "violations": violations, "sample_rate": sample_rate, "columns": columns, "cells": cells }))
}

/// Fits one cyclic element to each of two sine signals and crossfades
/// between the fits around `seam`, keeping matched phases continuous.
pub fn blend_json(from_freq: f64, to_freq: f64, seam: f64, width: f64) -> Result<Value, String> {
    const RATE: f64 = 32.0;
    const BEATS: f64 = 8.0;
    let signal = |f: f64, phase: f64| -> Vec<f64> {
        (0..(RATE * BEATS) as usize).map(|i| (TAU * f * i as f64 / RATE + phase).sin()).collect()
    };
    let from = fit_cyclic_elements(&signal(from_freq, 0.0), RATE, 1).map_err(err)?;
    let to = fit_cyclic_elements(&signal(to_freq, 1.3), RATE, 1).map_err(err)?;
    let blend = blend_transition(&from, &to, seam, width).map_err(err)?;
    let times: Vec<f64> = (0..=(RATE * BEATS) as usize).map(|i| i as f64 / RATE).collect();
    let element = |fit: &atelier_core::phase::PhaseFit| {
        fit.elements.first().map(|e| json!({ "frequency": e.frequency, "amplitude": e.amplitude, "phase": e.phase }))
    };
    Ok(json!({
        "times": times,
        "from": reconstruct_signal(&from, &times),
        "to": reconstruct_signal(&to, &times),
        "blend": blend.sample(&times),
        "window": blend.window(),
        "from_fit": element(&from),
        "to_fit": element(&to),
    }))
}

/// Encoder and composer trained on a small procedural corpus.
#[wasm_bindgen]
pub struct Studio {
    vocab: Vocab,
    encoder: EncoderParams,
    composer: ComposerParams,
}

impl Studio {
    pub fn train(seed: u64) -> Result<Studio, String> {
        let s = LoopSettings::default();
        let vocab = Vocab::standard();
        let encoder = EncoderParams::init(vocab.len(), s.dim, derive_seed(seed, "encoder", 0));
        let composer = ComposerParams::tied(&encoder, derive_seed(seed, "composer", 0));
        let corpus = procedural_corpus(&vocab, s.corpus_size, s.corpus_noise, derive_seed(seed, "corpus", 0));
        let pairs: Vec<AlignmentPair> = corpus
            .iter()
            .take(32)
            .map(|(e, t)| AlignmentPair { words: e.words(), score: Score { meter: t.time.meter, tokens: vec![*t] } })
            .collect();
        let (encoder, _) = train_alignment(&pairs, &encoder, s.alignment_steps, s.alignment_step_size).map_err(err)?;
        let (composer, _) = train_composer(&corpus, &encoder, &composer, s.composer_steps, s.composer_step_size).map_err(err)?;
        Ok(Studio { vocab, encoder, composer })
    }

    pub fn compose_json(&self, prompt: &str, length: usize, seed: u64) -> Result<Value, String> {
        let words: Vec<&str> = prompt.split_whitespace().collect();
        let elements = parse_textural_elements(&words, &self.vocab).map_err(err)?;
        let condition = encode_text(&words, &self.vocab, &self.encoder).map_err(err)?;
        let g = generate_score(condition.as_slice(), None, 0.0, length, &self.composer, seed).map_err(err)?;
        Ok(json!({
            "score": serialize_score(&g.score),
            "exhausted": g.exhausted,
            "elements": elements.iter().map(|e| e.describe(&self.vocab)).collect::<Vec<_>>(),
        }))
    }
}

#[wasm_bindgen]
impl Studio {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Studio, JsError> {
        Studio::train(u64::from(seed)).map_err(|e| JsError::new(&e))
    }

    pub fn compose(&self, prompt: &str, length: usize, seed: u32) -> Result<String, JsError> {
        self.compose_json(prompt, length, u64::from(seed)).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
    }

    pub fn vocabulary(&self) -> String {
        Value::from(self.vocab.entries().iter().map(|e| e.text.clone()).collect::<Vec<_>>()).to_string()
    }
}

#[wasm_bindgen]
pub fn decode(text: &str, sample_rate: u32) -> Result<String, JsError> {
    decode_json(text, sample_rate).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn blend(from_freq: f64, to_freq: f64, seam: f64, width: f64) -> Result<String, JsError> {
    blend_json(from_freq, to_freq, seam, width).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}
