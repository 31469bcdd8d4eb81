//! Cyclic-element fitting and phase-aligned blending of motion channels.
//!
//! A channel is modelled as `offset + Σ a_k sin(2π f_k t + φ_k)` with `t` in
//! beats. Fitting starts from the largest peaks of a directly summed discrete
//! spectrum, then alternates joint least squares on (amplitude, phase,
//! offset) with a per-element frequency search over ±1 bin at 1/16-bin
//! resolution.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const MAX_ELEMENTS: usize = 8;
pub const MIN_SIGNAL_LEN: usize = 8;
const SUBDIVISIONS: i32 = 16;
const MAX_SWEEPS: usize = 6;
const FINE_HALVINGS: usize = 10;
/// Elements with amplitude at or below this fraction of the signal RMS are dropped.
const AMPLITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("signal has {0} samples, at least {MIN_SIGNAL_LEN} are required")]
    TooShort(usize),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("sample rate must be positive and finite")]
    SampleRate,
    #[error("k_max = {0} exceeds {MAX_ELEMENTS}")]
    TooManyElements(usize),
    #[error("blend width must be positive")]
    BlendWidth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicElement {
    /// Cycles per beat.
    pub frequency: f64,
    pub amplitude: f64,
    /// Radians in `[-π, π)`.
    pub phase: f64,
}

impl CyclicElement {
    fn angle(&self, t: f64) -> f64 {
        TAU * self.frequency * t + self.phase
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFit {
    /// Sorted by descending amplitude.
    pub elements: Vec<CyclicElement>,
    pub offset: f64,
    pub residual_rms: f64,
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi - TAU * ((phi + PI) / TAU).floor();
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

fn eval_fit(fit: &PhaseFit, t: f64) -> f64 {
    fit.elements.iter().fold(fit.offset, |acc, e| acc + e.amplitude * e.angle(t).sin())
}

pub fn reconstruct_signal(fit: &PhaseFit, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| eval_fit(fit, t)).collect()
}

fn sample_times(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 / sample_rate).collect()
}

fn rms_error(signal: &[f64], fit: &PhaseFit, times: &[f64]) -> f64 {
    let sq: f64 = signal.iter().zip(times).map(|(x, &t)| (x - eval_fit(fit, t)).powi(2)).sum();
    (sq / signal.len() as f64).sqrt()
}

fn check_input(signal: &[f64], sample_rate: f64, k_max: usize) -> Result<(), PhaseError> {
    if signal.len() < MIN_SIGNAL_LEN {
        return Err(PhaseError::TooShort(signal.len()));
    }
    if let Some(i) = signal.iter().position(|x| !x.is_finite()) {
        return Err(PhaseError::NonFinite(i));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(PhaseError::SampleRate);
    }
    if k_max > MAX_ELEMENTS {
        return Err(PhaseError::TooManyElements(k_max));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    bin: usize,
    magnitude: f64,
    phase: f64,
}

/// Local maxima of the one-sided spectrum of the centered signal, largest first.
fn spectral_peaks(centered: &[f64], floor: f64) -> Vec<Peak> {
    let n = centered.len();
    let half = n / 2;
    let spectrum: Vec<(f64, f64)> = (0..=half)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in centered.iter().enumerate() {
                let angle = TAU * ((k * i) % n) as f64 / n as f64;
                re += x * angle.cos();
                im -= x * angle.sin();
            }
            let scale = if k == half && n % 2 == 0 { 1.0 } else { 2.0 } / n as f64;
            ((re * re + im * im).sqrt() * scale, im.atan2(re))
        })
        .collect();
    let mut peaks: Vec<Peak> = (1..=half)
        .filter(|&k| {
            let m = spectrum[k].0;
            let left = spectrum[k - 1].0;
            let right = if k < half { spectrum[k + 1].0 } else { 0.0 };
            m > floor && m >= left && m > right
        })
        .map(|k| Peak { bin: k, magnitude: spectrum[k].0, phase: wrap_phase(spectrum[k].1 + PI / 2.0) })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.bin.cmp(&b.bin)));
    peaks
}

/// Joint least squares for fixed frequencies. Returns (elements, offset).
fn solve_amplitudes(signal: &[f64], times: &[f64], freqs: &[f64]) -> (Vec<CyclicElement>, f64) {
    let cols = 1 + 2 * freqs.len();
    let design = DMatrix::from_fn(signal.len(), cols, |i, j| {
        if j == 0 {
            return 1.0;
        }
        let angle = TAU * freqs[(j - 1) / 2] * times[i];
        if j % 2 == 1 {
            angle.sin()
        } else {
            angle.cos()
        }
    });
    let rhs = DVector::from_column_slice(signal);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols));
    let elements = freqs
        .iter()
        .enumerate()
        .map(|(k, &frequency)| {
            let (s, c) = (coef[1 + 2 * k], coef[2 + 2 * k]);
            CyclicElement { frequency, amplitude: s.hypot(c), phase: wrap_phase(c.atan2(s)) }
        })
        .collect();
    (elements, coef[0])
}

fn residual_for(signal: &[f64], times: &[f64], freqs: &[f64]) -> f64 {
    let (elements, offset) = solve_amplitudes(signal, times, freqs);
    rms_error(signal, &PhaseFit { elements, offset, residual_rms: 0.0 }, times)
}

fn finish(signal: &[f64], times: &[f64], elements: Vec<CyclicElement>, offset: f64) -> PhaseFit {
    let mut fit = PhaseFit { elements, offset, residual_rms: 0.0 };
    fit.elements.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude).then(a.frequency.total_cmp(&b.frequency)));
    fit.residual_rms = rms_error(signal, &fit, times);
    fit
}

fn amplitude_floor(signal: &[f64]) -> f64 {
    let rms = (signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64).sqrt();
    AMPLITUDE_FLOOR * rms
}

/// Initialization only: the `k_max` largest spectral peaks with their
/// spectral amplitudes and phases and the signal mean as offset.
pub fn spectral_peak_fit(signal: &[f64], sample_rate: f64, k_max: usize) -> Result<PhaseFit, PhaseError> {
    check_input(signal, sample_rate, k_max)?;
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|x| x - mean).collect();
    let bin_width = sample_rate / n as f64;
    let elements = spectral_peaks(&centered, amplitude_floor(signal))
        .into_iter()
        .take(k_max)
        .map(|p| CyclicElement { frequency: p.bin as f64 * bin_width, amplitude: p.magnitude, phase: p.phase })
        .collect();
    Ok(finish(signal, &sample_times(n, sample_rate), elements, mean))
}

/// Fits up to `k_max` cyclic elements to a uniformly sampled signal.
///
/// Elements are added one peak at a time and every frequency is re-searched
/// after each addition, so the fit for `k` elements is the starting point
/// for `k + 1` and the residual never grows with `k_max`.
pub fn fit_cyclic_elements(signal: &[f64], sample_rate: f64, k_max: usize) -> Result<PhaseFit, PhaseError> {
    check_input(signal, sample_rate, k_max)?;
    let n = signal.len();
    let times = sample_times(n, sample_rate);
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|x| x - mean).collect();
    let floor = amplitude_floor(signal);
    let bin_width = sample_rate / n as f64;
    let nyquist = sample_rate / 2.0;
    let step = bin_width / f64::from(SUBDIVISIONS);

    let mut freqs: Vec<f64> = Vec::new();
    for peak in spectral_peaks(&centered, floor).into_iter().take(k_max) {
        freqs.push(peak.bin as f64 * bin_width);
        let mut best = residual_for(signal, &times, &freqs);
        for _ in 0..MAX_SWEEPS {
            let mut moved = false;
            for j in 0..freqs.len() {
                let center = freqs[j];
                for m in -SUBDIVISIONS..=SUBDIVISIONS {
                    let f = center + f64::from(m) * step;
                    if m == 0 || f <= 0.0 || f > nyquist {
                        continue;
                    }
                    let mut trial = freqs.clone();
                    trial[j] = f;
                    let r = residual_for(signal, &times, &trial);
                    if r < best {
                        best = r;
                        freqs[j] = f;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        // pattern search below the grid resolution
        let mut fine = step / 2.0;
        for _ in 0..FINE_HALVINGS {
            for j in 0..freqs.len() {
                for dir in [-1.0, 1.0] {
                    let f = freqs[j] + dir * fine;
                    if f <= 0.0 || f > nyquist {
                        continue;
                    }
                    let mut trial = freqs.clone();
                    trial[j] = f;
                    let r = residual_for(signal, &times, &trial);
                    if r < best {
                        best = r;
                        freqs[j] = f;
                    }
                }
            }
            fine /= 2.0;
        }
    }
    let (elements, offset) = solve_amplitudes(signal, &times, &freqs);
    let kept: Vec<CyclicElement> = elements.into_iter().filter(|e| e.amplitude > floor).collect();
    if kept.len() == freqs.len() {
        return Ok(finish(signal, &times, kept, offset));
    }
    let freqs: Vec<f64> = kept.iter().map(|e| e.frequency).collect();
    let (elements, offset) = solve_amplitudes(signal, &times, &freqs);
    Ok(finish(signal, &times, elements, offset))
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pair {
    a: usize,
    b: usize,
    /// Multiple of 2π added to `b`'s phase so the pair's phases are close at the seam.
    branch: f64,
    /// Residual phase shift applied to `b` at the seam and ramped out after it.
    shift: f64,
}

/// A transition from one fit to another around `seam`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blend {
    from: PhaseFit,
    to: PhaseFit,
    seam: f64,
    width: f64,
    pairs: Vec<Pair>,
    unmatched_from: Vec<usize>,
    unmatched_to: Vec<usize>,
}

/// Builds a transition: `from` before `seam - width/2`, `to` after
/// `seam + width/2`, and in between element-wise interpolation with matched
/// elements aligned in instantaneous phase at the seam.
pub fn blend_transition(from: &PhaseFit, to: &PhaseFit, seam: f64, width: f64) -> Result<Blend, PhaseError> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(PhaseError::BlendWidth);
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ea) in from.elements.iter().enumerate() {
        for (j, eb) in to.elements.iter().enumerate() {
            candidates.push(((ea.frequency - eb.frequency).abs(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; from.elements.len()];
    let mut used_b = vec![false; to.elements.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let gap = from.elements[i].angle(seam) - to.elements[j].angle(seam);
        let branch = TAU * (gap / TAU).round();
        let shift = from.elements[i].angle(seam) - (to.elements[j].angle(seam) + branch);
        pairs.push(Pair { a: i, b: j, branch, shift });
    }
    let unmatched_from = (0..from.elements.len()).filter(|&i| !used_a[i]).collect();
    let unmatched_to = (0..to.elements.len()).filter(|&j| !used_b[j]).collect();
    Ok(Blend { from: from.clone(), to: to.clone(), seam, width, pairs, unmatched_from, unmatched_to })
}

impl Blend {
    pub fn window(&self) -> (f64, f64) {
        (self.seam - self.width / 2.0, self.seam + self.width / 2.0)
    }

    fn weight(&self, t: f64) -> f64 {
        smoothstep((t - self.window().0) / self.width)
    }

    fn shift_ramp(&self, t: f64) -> f64 {
        if t <= self.seam {
            1.0
        } else {
            1.0 - smoothstep((t - self.seam) / (self.width / 2.0))
        }
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Blended instantaneous phase of matched pair `k` at `t`.
    pub fn pair_phase(&self, k: usize, t: f64) -> f64 {
        let p = &self.pairs[k];
        let (start, end) = self.window();
        let theta_a = self.from.elements[p.a].angle(t);
        let theta_b = self.to.elements[p.b].angle(t) + p.branch;
        if t <= start {
            return theta_a;
        }
        if t >= end {
            return theta_b;
        }
        let w = self.weight(t);
        let wa = (1.0 - w) * self.from.elements[p.a].amplitude;
        let wb = w * self.to.elements[p.b].amplitude;
        let target = theta_b + p.shift * self.shift_ramp(t);
        if wa + wb > 0.0 {
            (wa * theta_a + wb * target) / (wa + wb)
        } else {
            (1.0 - w) * theta_a + w * target
        }
    }

    /// Phase of the `from` element of pair `k` at `t`, for comparison.
    pub fn pair_from_phase(&self, k: usize, t: f64) -> f64 {
        self.from.elements[self.pairs[k].a].angle(t)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let (start, end) = self.window();
        if t <= start {
            return eval_fit(&self.from, t);
        }
        if t >= end {
            return eval_fit(&self.to, t);
        }
        let w = self.weight(t);
        let mut v = (1.0 - w) * self.from.offset + w * self.to.offset;
        for (k, p) in self.pairs.iter().enumerate() {
            let amp = (1.0 - w) * self.from.elements[p.a].amplitude + w * self.to.elements[p.b].amplitude;
            v += amp * self.pair_phase(k, t).sin();
        }
        for &i in &self.unmatched_from {
            let e = &self.from.elements[i];
            v += (1.0 - w) * e.amplitude * e.angle(t).sin();
        }
        for &j in &self.unmatched_to {
            let e = &self.to.elements[j];
            v += w * e.amplitude * e.angle(t).sin();
        }
        v
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.value_at(t)).collect()
    }
}
