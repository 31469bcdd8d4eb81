use std::f64::consts::{PI, TAU};

use atelier_core::phase::{
    blend_transition, fit_cyclic_elements, reconstruct_signal, spectral_peak_fit, wrap_phase, CyclicElement,
    PhaseFit,
};
use atelier_core::rng::seeded;
use rand::Rng;

/// One-sided discrete spectrum by direct summation: (frequency, amplitude, sine phase).
fn spectrum_oracle(x: &[f64], sample_rate: f64) -> Vec<(f64, f64, f64)> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (1..n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, v) in x.iter().enumerate() {
                let w = TAU * k as f64 * i as f64 / n as f64;
                re += (v - mean) * w.cos();
                im -= (v - mean) * w.sin();
            }
            let amp = 2.0 * (re * re + im * im).sqrt() / n as f64;
            (k as f64 * sample_rate / n as f64, amp, wrap_phase(im.atan2(re) + PI / 2.0))
        })
        .collect()
}

fn top_peaks(spec: &[(f64, f64, f64)], k: usize) -> Vec<(f64, f64, f64)> {
    let mut s = spec.to_vec();
    s.sort_by(|a, b| b.1.total_cmp(&a.1));
    s.truncate(k);
    s
}

fn sample(f: impl Fn(f64) -> f64, sample_rate: f64, beats: f64) -> Vec<f64> {
    let n = (sample_rate * beats) as usize;
    (0..n).map(|i| f(i as f64 / sample_rate)).collect()
}

fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

fn assert_element(e: &CyclicElement, frequency: f64, amplitude: f64, phase: f64) {
    assert!((e.frequency - frequency).abs() <= 0.01 * frequency, "frequency {} vs {frequency}", e.frequency);
    assert!((e.amplitude - amplitude).abs() <= 0.02 * amplitude, "amplitude {} vs {amplitude}", e.amplitude);
    assert!(phase_distance(e.phase, phase) <= 0.05, "phase {} vs {phase}", e.phase);
}

#[test]
fn single_sinusoid_matches_the_spectrum_oracle() {
    let x = sample(|t| 2.0 * (TAU * 3.0 * t).sin() + 1.0, 64.0, 4.0);
    let oracle = top_peaks(&spectrum_oracle(&x, 64.0), 1)[0];
    assert!((oracle.0 - 3.0).abs() < 1e-12 && (oracle.1 - 2.0).abs() < 1e-9 && oracle.2.abs() < 1e-9);

    let fit = fit_cyclic_elements(&x, 64.0, 1).unwrap();
    assert_eq!(fit.elements.len(), 1);
    assert_element(&fit.elements[0], oracle.0, oracle.1, oracle.2);
    assert!((fit.offset - 1.0).abs() <= 0.02);
    assert!(fit.residual_rms < 1e-9);
}

#[test]
fn two_sinusoids_are_recovered() {
    let x = sample(|t| (TAU * 2.0 * t).sin() + 0.5 * (TAU * 5.0 * t).sin(), 64.0, 4.0);
    let oracle = top_peaks(&spectrum_oracle(&x, 64.0), 2);
    let fit = fit_cyclic_elements(&x, 64.0, 2).unwrap();
    assert_eq!(fit.elements.len(), 2);
    for (e, o) in fit.elements.iter().zip(&oracle) {
        assert_element(e, o.0, o.1, o.2);
    }
    assert_element(&fit.elements[0], 2.0, 1.0, 0.0);
    assert_element(&fit.elements[1], 5.0, 0.5, 0.0);
}

#[test]
fn off_bin_frequency_is_refined_beyond_the_spectral_peak() {
    // 3.1 cycles/beat sits between bins of a 4-beat window
    let x = sample(|t| 1.5 * (TAU * 3.1 * t + 0.7).sin() - 0.25, 32.0, 4.0);
    let init = spectral_peak_fit(&x, 32.0, 1).unwrap();
    let fit = fit_cyclic_elements(&x, 32.0, 1).unwrap();
    assert!(fit.residual_rms <= init.residual_rms);
    assert_element(&fit.elements[0], 3.1, 1.5, 0.7);
}

#[test]
fn refitting_a_reconstruction_is_a_fixed_point() {
    let mut rng = seeded(11);
    for _ in 0..20 {
        let truth = PhaseFit {
            elements: vec![
                CyclicElement {
                    frequency: rng.random_range(0.5..2.0),
                    amplitude: rng.random_range(1.0..2.0),
                    phase: rng.random_range(-PI..PI),
                },
                CyclicElement {
                    frequency: rng.random_range(3.0..6.0),
                    amplitude: rng.random_range(0.2..0.6),
                    phase: rng.random_range(-PI..PI),
                },
            ],
            offset: rng.random_range(-1.0..1.0),
            residual_rms: 0.0,
        };
        let times: Vec<f64> = (0..256).map(|i| i as f64 / 32.0).collect();
        let x = reconstruct_signal(&truth, &times);
        let fit = fit_cyclic_elements(&x, 32.0, 2).unwrap();
        let refit = fit_cyclic_elements(&reconstruct_signal(&fit, &times), 32.0, 2).unwrap();
        for (a, b) in fit.elements.iter().zip(&refit.elements) {
            assert_element(b, a.frequency, a.amplitude, a.phase);
        }
    }
}

#[test]
fn residual_is_monotone_in_k_max_and_beats_the_peak_init() {
    let mut rng = seeded(3);
    for _ in 0..10 {
        let x: Vec<f64> = (0..128)
            .map(|i| {
                let t = i as f64 / 16.0;
                (TAU * 1.3 * t).sin() + 0.4 * (TAU * 2.9 * t + 1.0).cos() + 0.1 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let mut last = f64::INFINITY;
        for k in 0..=4 {
            let fit = fit_cyclic_elements(&x, 16.0, k).unwrap();
            let init = spectral_peak_fit(&x, 16.0, k).unwrap();
            assert!(fit.residual_rms <= last + 1e-12, "k={k}: {} > {last}", fit.residual_rms);
            assert!(fit.residual_rms <= init.residual_rms + 1e-12);
            assert!(fit.elements.iter().all(|e| (-PI..PI).contains(&e.phase)));
            assert!(fit.elements.windows(2).all(|w| w[0].amplitude >= w[1].amplitude));
            last = fit.residual_rms;
        }
    }
}

#[test]
fn reported_residual_matches_reconstruction() {
    let x = sample(|t| (TAU * 1.1 * t).sin() + 0.3 * t, 16.0, 6.0);
    let fit = fit_cyclic_elements(&x, 16.0, 3).unwrap();
    let times: Vec<f64> = (0..x.len()).map(|i| i as f64 / 16.0).collect();
    let recon = reconstruct_signal(&fit, &times);
    let rms = (x.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    assert!((rms - fit.residual_rms).abs() < 1e-9);
}

fn single(frequency: f64, amplitude: f64, phase: f64, offset: f64) -> PhaseFit {
    PhaseFit { elements: vec![CyclicElement { frequency, amplitude, phase }], offset, residual_rms: 0.0 }
}

#[test]
fn phase_only_difference_has_no_jump_at_the_seam() {
    let a = single(1.0, 1.0, 0.0, 0.0);
    let b = single(1.0, 1.0, 2.0, 0.0);
    let seam = 3.3;
    let blend = blend_transition(&a, &b, seam, 1.0).unwrap();
    let at_seam = blend.pair_phase(0, seam);
    assert!(wrap_phase(at_seam - blend.pair_from_phase(0, seam)).abs() < 1e-9);
    let eps = 1e-13;
    let left = blend.pair_phase(0, seam - eps);
    let right = blend.pair_phase(0, seam + eps);
    assert!((right - left).abs() < 1e-9);
}

#[test]
fn blend_equals_pure_reconstructions_outside_the_window() {
    let a = single(1.0, 1.0, 0.4, 0.5);
    let b = single(1.7, 0.6, -2.0, -0.2);
    let blend = blend_transition(&a, &b, 4.0, 2.0).unwrap();
    for k in 0..=800 {
        let t = k as f64 / 100.0;
        let v = blend.value_at(t);
        if t <= 3.0 {
            assert_eq!(v.to_bits(), reconstruct_signal(&a, &[t])[0].to_bits());
        } else if t >= 5.0 {
            assert_eq!(v.to_bits(), reconstruct_signal(&b, &[t])[0].to_bits());
        }
    }
}

fn random_fit(rng: &mut atelier_core::rng::SeededRng) -> PhaseFit {
    let k = rng.random_range(1..=3);
    let mut elements: Vec<CyclicElement> = (0..k)
        .map(|_| CyclicElement {
            frequency: rng.random_range(0.5..2.0),
            amplitude: rng.random_range(0.2..1.5),
            phase: rng.random_range(-PI..PI),
        })
        .collect();
    elements.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    PhaseFit { elements, offset: rng.random_range(-0.5..0.5), residual_rms: 0.0 }
}

fn max_jump(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

#[test]
fn seam_jumps_stay_within_pure_region_jumps() {
    let mut rng = seeded(2024);
    let rate = 32.0;
    let times: Vec<f64> = (0..(16.0 * rate) as usize).map(|i| i as f64 / rate).collect();
    for case in 0..100 {
        let a = random_fit(&mut rng);
        let b = random_fit(&mut rng);
        let seam = 8.0 + 0.5 / rate;
        let blend = blend_transition(&a, &b, seam, 2.0).unwrap();
        let out = blend.sample(&times);
        let k = times.iter().position(|&t| t > seam).unwrap();
        let across = (out[k] - out[k - 1]).abs();
        let (start, end) = blend.window();
        let pure_a: Vec<f64> = times.iter().zip(&out).filter(|(t, _)| **t <= start).map(|(_, v)| *v).collect();
        let pure_b: Vec<f64> = times.iter().zip(&out).filter(|(t, _)| **t >= end).map(|(_, v)| *v).collect();
        let bound = max_jump(&pure_a).max(max_jump(&pure_b));
        assert!(across <= bound, "case {case}: {across} > {bound}");
    }
}
