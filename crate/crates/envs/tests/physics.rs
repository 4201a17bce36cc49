use std::f64::consts::PI;

use muse_envs::hyperhot::{self, HyperhotConfig};
use muse_envs::pendulum::{self, wrap_angle, Pendulum, PendulumConfig, PendulumState};
use muse_envs::sound::*;
use muse_envs::{Action, Env};
use proptest::prelude::*;

#[test]
fn doppler_hand_cases() {
    // emitter approaching the receiver along x at 5 with c = 20: f0·20/15
    let f =
        doppler_frequency(440.0, (1.0, 0.0), (-5.0, 0.0), (0.0, 0.0), (0.0, 0.0), 20.0).unwrap();
    assert!((f - 440.0 * 20.0 / 15.0).abs() < 1e-12);
    // receding
    let f = doppler_frequency(440.0, (1.0, 0.0), (5.0, 0.0), (0.0, 0.0), (0.0, 0.0), 20.0).unwrap();
    assert!((f - 440.0 * 20.0 / 25.0).abs() < 1e-12);
    // receiver moving towards a static emitter
    let f = doppler_frequency(440.0, (0.0, 2.0), (0.0, 0.0), (0.0, 0.0), (0.0, 4.0), 20.0).unwrap();
    assert!((f - 440.0 * 24.0 / 20.0).abs() < 1e-12);
    // transverse motion gives no shift
    let f = doppler_frequency(440.0, (0.0, 3.0), (7.0, 0.0), (0.0, 0.0), (0.0, 0.0), 20.0).unwrap();
    assert!((f - 440.0).abs() < 1e-12);
    // 45° approach: radial component 5/√2
    let f =
        doppler_frequency(100.0, (1.0, 1.0), (-5.0, 0.0), (0.0, 0.0), (0.0, 0.0), 20.0).unwrap();
    assert!((f - 100.0 * 20.0 / (20.0 - 5.0 / 2f64.sqrt())).abs() < 1e-12);
}

#[test]
fn supersonic_emitter_is_rejected() {
    assert!(doppler_frequency(
        440.0,
        (1.0, 0.0),
        (-25.0, 0.0),
        (0.0, 0.0),
        (0.0, 0.0),
        20.0
    )
    .is_err());
}

#[test]
fn inverse_square_hand_cases() {
    assert!(
        (inverse_square_amplitude(1.0, (3.0, 4.0), (0.0, 0.0)).unwrap() - 1.0 / 25.0).abs() < 1e-15
    );
    assert!((inverse_square_amplitude(2.0, (1.0, 1.0), (0.0, 1.0)).unwrap() - 2.0).abs() < 1e-15);
    assert!(inverse_square_amplitude(1.0, (1.0, 1.0), (1.0, 1.0)).is_err());
}

#[test]
fn quantization_clamps_and_rounds() {
    assert_eq!(quantize(4.0, 4.0), 32767);
    assert_eq!(quantize(-9.0, 4.0), -32767);
    assert_eq!(quantize(0.0, 4.0), 0);
    assert_eq!(quantize(2.0, 4.0), 16384);
}

proptest! {
    #[test]
    fn wrap_lands_in_half_open_interval(x in -1e4f64..1e4) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        let k = ((x - w) / (2.0 * PI)).round();
        prop_assert!((x - w - k * 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn sound_is_translation_invariant(dx in -3.0f64..3.0, dy in -3.0f64..3.0,
                                      ex in 0.0f64..1.0, ey in 0.0f64..1.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
        let (e, v, r) = ((ex, ey), (vx, vy), (-1.5, 0.2));
        let f1 = doppler_frequency(440.0, e, v, r, (0.0, 0.0), 20.0).unwrap();
        let f2 = doppler_frequency(440.0, (ex + dx, ey + dy), v, (r.0 + dx, r.1 + dy), (0.0, 0.0), 20.0).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-9);
        let a1 = inverse_square_amplitude(1.0, e, r).unwrap();
        let a2 = inverse_square_amplitude(1.0, (ex + dx, ey + dy), (r.0 + dx, r.1 + dy)).unwrap();
        prop_assert!((a1 - a2).abs() < 1e-9);
    }

    #[test]
    fn pendulum_observation_stays_finite(theta in -PI..PI, thd in -8.0f64..8.0) {
        let cfg = PendulumConfig::default();
        let s = PendulumState { theta, theta_dot: thd, steps: 0 };
        let o = pendulum::pendulum_observe(&cfg, &s).unwrap();
        prop_assert!(o.sound.iter().chain(&o.image).all(|v| v.is_finite()));
        let (n, _) = pendulum::pendulum_step(&cfg, s, 2.0);
        prop_assert!(n.theta > -PI && n.theta <= PI && n.theta_dot.abs() <= cfg.max_speed);
    }
}

#[test]
fn still_pendulum_hears_the_source_frequency() {
    let cfg = PendulumConfig::default();
    assert_eq!(cfg.sound_dim(), 4);
    for theta in [0.0, 0.7, -2.0, PI] {
        let s = pendulum::sound(
            &cfg,
            &PendulumState {
                theta,
                theta_dot: 0.0,
                steps: 0,
            },
        )
        .unwrap();
        assert!(
            (s[0] - 1.0).abs() < 1e-12 && (s[2] - 1.0).abs() < 1e-12,
            "{s:?}"
        );
    }
}

#[test]
fn upright_render_draws_rod_upwards() {
    let cfg = PendulumConfig::default();
    let n = cfg.image_size;
    let img = pendulum::render(
        &cfg,
        &PendulumState {
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
        },
    );
    let mass_at = |rows: std::ops::Range<usize>| -> f64 {
        rows.flat_map(|y| (0..n).map(move |x| (y, x)))
            .map(|(y, x)| img[y * n + x])
            .sum()
    };
    // row 0 is the top of the frame
    assert!(mass_at(0..n / 2 - 2) > 1.0);
    assert!(mass_at(n / 2 + 2..n) < 1e-9);
}

#[test]
fn resonant_torque_pumps_energy() {
    let cfg = PendulumConfig::default();
    let mut s = PendulumState {
        theta: PI - 0.1,
        theta_dot: 0.0,
        steps: 0,
    };
    let e0 = pendulum::energy(&cfg, &s);
    for _ in 0..60 {
        let u = if s.theta_dot >= 0.0 { 2.0 } else { -2.0 };
        s = pendulum::pendulum_step(&cfg, s, u).0;
    }
    assert!(pendulum::energy(&cfg, &s) > e0 + 1.0);
}

#[test]
fn pendulum_truncates_at_episode_length() {
    let mut env = Pendulum::new(PendulumConfig::default()).unwrap();
    env.reset(4).unwrap();
    for i in 0..200 {
        let st = env.step(Action::Continuous(0.0)).unwrap();
        assert!(!st.done);
        assert_eq!(st.truncated, i == 199);
    }
    assert!(env.step(Action::Continuous(0.0)).is_err());
    assert!(env.step(Action::Discrete(0)).is_err());
}

#[test]
fn adjacent_emitter_dominates_its_bin() {
    let cfg = HyperhotConfig::default();
    let recv = cfg.receivers.clone();
    // one left-group enemy right next to receiver 0
    let s = hyperhot::hyperhot_sound(&cfg, &[((0.02, 0.02), 0)], &recv);
    assert_eq!(s.len(), 16);
    let r0 = &s[0..4];
    assert!(r0[0] > 0.9, "{r0:?}");
    assert!(r0[1..].iter().all(|v| *v < 0.05), "{r0:?}");
    assert!(s[12] < 1e-3);
}

#[test]
fn waveform_quantizes_within_range() {
    let cfg = HyperhotConfig::default();
    let w = hyperhot::waveforms(&cfg, &[((0.0, 0.0), 3), ((0.0, 0.0), 2)], &cfg.receivers);
    assert_eq!(w.len(), 4);
    assert!(w.iter().all(|r| r.len() == 1047));
    let peak = w[0].iter().map(|v| v.unsigned_abs()).max().unwrap();
    assert!(peak > 8000 && peak <= 32767);
}
