//! Sound-field physics: radial Doppler shift, amplitude decay laws, and
//! waveform synthesis with 16-bit quantization.

use std::f64::consts::PI;

use muse_core::error::{Error, Result};

pub type Vec2 = (f64, f64);

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn unit(v: Vec2) -> Result<Vec2> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        return Err(Error::contract("emitter and receiver coincide"));
    }
    Ok((v.0 / n, v.1 / n))
}

/// Frequency heard at a receiver:
/// `f0 · (c + ρ̇·û(ρ→e)) / (c − ė·û(e→ρ))` with unit direction vectors.
pub fn doppler_frequency(
    f0: f64,
    emitter: Vec2,
    emitter_vel: Vec2,
    receiver: Vec2,
    receiver_vel: Vec2,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::contract("speed of sound must be positive"));
    }
    let to_emitter = unit(sub(emitter, receiver))?;
    let to_receiver = (-to_emitter.0, -to_emitter.1);
    let num = c + dot(receiver_vel, to_emitter);
    let den = c - dot(emitter_vel, to_receiver);
    if den <= 0.0 || num <= 0.0 {
        return Err(Error::contract(format!(
            "source or receiver moves at or above the speed of sound (c = {c})"
        )));
    }
    Ok(f0 * num / den)
}

/// `K / ‖e − ρ‖²`.
pub fn inverse_square_amplitude(k: f64, emitter: Vec2, receiver: Vec2) -> Result<f64> {
    let d = sub(emitter, receiver);
    let d2 = dot(d, d);
    if d2 == 0.0 {
        return Err(Error::contract("emitter and receiver coincide"));
    }
    Ok(k / d2)
}

/// `a0 · exp(−δ ‖e − ρ‖²)`.
pub fn gaussian_decay_amplitude(a0: f64, delta: f64, emitter: Vec2, receiver: Vec2) -> f64 {
    let d = sub(emitter, receiver);
    a0 * (-delta * dot(d, d)).exp()
}

/// Map `[−a_max, a_max]` onto `[−32767, 32767]`, clamping outside.
pub fn quantize(v: f64, a_max: f64) -> i16 {
    ((v.clamp(-a_max, a_max) / a_max) * 32767.0).round() as i16
}

/// Sum of sinusoids `Σ aᵢ sin(2π fᵢ t)` over `samples` points at `rate` Hz, quantized.
pub fn synthesize(components: &[(f64, f64)], samples: usize, rate: f64, a_max: f64) -> Vec<i16> {
    (0..samples)
        .map(|n| {
            let t = n as f64 / rate;
            let v: f64 = components
                .iter()
                .map(|(f, a)| a * (2.0 * PI * f * t).sin())
                .sum();
            quantize(v, a_max)
        })
        .collect()
}

/// Single-bin DFT magnitude at frequency `f`, rescaled so a pure sinusoid of
/// amplitude `a` (before quantization) reads close to `a`.
pub fn dft_magnitude(wave: &[i16], f: f64, rate: f64, a_max: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &s) in wave.iter().enumerate() {
        let ph = 2.0 * PI * f * n as f64 / rate;
        re += s as f64 * ph.cos();
        im -= s as f64 * ph.sin();
    }
    (re * re + im * im).sqrt() * 2.0 / wave.len() as f64 * a_max / 32767.0
}
