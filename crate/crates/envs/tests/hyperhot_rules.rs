use muse_core::rng::SplitRng;
use muse_envs::hyperhot::*;
use muse_envs::{Action, Env, ModalityMask};

fn state(cfg: &HyperhotConfig) -> HyperhotState {
    initial_state(cfg, &mut SplitRng::new(0))
}

#[test]
fn killing_last_enemy_pays_ten() {
    let cfg = HyperhotConfig::default();
    let mut s = state(&cfg);
    for e in s.enemies.iter_mut().skip(1) {
        e.alive = false;
    }
    s.next_fire = usize::MAX;
    let target = s.enemies[0];
    let off = cfg.march_amplitude * (2.0 * std::f64::consts::PI / cfg.march_period as f64).sin();
    s.bullets.push(Bullet {
        pos: (target.base_x + off, target.pos.1 - cfg.bullet_speed),
        vel: (0.0, cfg.bullet_speed),
        owner: Owner::Agent,
    });
    let (r, done) = hyperhot_step(&cfg, &mut s, NOOP, &mut SplitRng::new(1)).unwrap();
    assert_eq!((r, done), (10.0, true));
    assert!(hyperhot_step(&cfg, &mut s, NOOP, &mut SplitRng::new(1)).is_err());
}

#[test]
fn being_hit_costs_one() {
    let cfg = HyperhotConfig::default();
    let mut s = state(&cfg);
    s.next_fire = usize::MAX;
    s.bullets.push(Bullet {
        pos: (s.agent_x, cfg.agent_y + cfg.enemy_bullet_speed),
        vel: (0.0, -cfg.enemy_bullet_speed),
        owner: Owner::Enemy,
    });
    let (r, done) = hyperhot_step(&cfg, &mut s, NOOP, &mut SplitRng::new(1)).unwrap();
    assert_eq!((r, done), (-1.0, true));
}

#[test]
fn ordinary_step_is_free_and_timeout_costs_one() {
    let cfg = HyperhotConfig {
        episode_limit: 3,
        ..Default::default()
    };
    let mut s = state(&cfg);
    s.next_fire = usize::MAX;
    let mut rng = SplitRng::new(1);
    assert_eq!(
        hyperhot_step(&cfg, &mut s, LEFT, &mut rng).unwrap(),
        (0.0, false)
    );
    assert_eq!(
        hyperhot_step(&cfg, &mut s, RIGHT, &mut rng).unwrap(),
        (0.0, false)
    );
    assert_eq!(
        hyperhot_step(&cfg, &mut s, NOOP, &mut rng).unwrap(),
        (-1.0, true)
    );
}

#[test]
fn live_enemies_never_increase_and_agent_stays_in_bounds() {
    let cfg = HyperhotConfig::default();
    let mut env = Hyperhot::new(cfg.clone()).unwrap();
    let mut rng = SplitRng::new(9);
    for ep in 0..5 {
        env.reset(ep).unwrap();
        let mut live = env.state.live_enemies();
        loop {
            let st = env.step(Action::Discrete(rng.below(ACTIONS))).unwrap();
            assert!(env.state.live_enemies() <= live);
            live = env.state.live_enemies();
            assert!((0.05..=0.95).contains(&env.state.agent_x));
            assert_eq!(st.obs.sound.len(), cfg.sound_dim());
            assert_eq!(st.obs.image.len(), cfg.image_size * cfg.image_size);
            if st.done {
                break;
            }
        }
    }
}

#[test]
fn rollouts_are_byte_identical_for_a_seed() {
    let run = |seed| {
        let mut env = Hyperhot::new(HyperhotConfig::default()).unwrap();
        let mut bytes = Vec::new();
        let o = env.reset(seed).unwrap();
        o.sound.iter().for_each(|v| bytes.extend(v.to_le_bytes()));
        for _ in 0..120 {
            let a = scripted_action(&env.cfg, &env.state);
            let st = env.step(Action::Discrete(a)).unwrap();
            st.obs
                .image
                .iter()
                .chain(&st.obs.sound)
                .for_each(|v| bytes.extend(v.to_le_bytes()));
            if st.done {
                break;
            }
        }
        bytes
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn scripted_policy_usually_wins() {
    let mut env = Hyperhot::new(HyperhotConfig::default()).unwrap();
    let mut wins = 0;
    for seed in 0..20 {
        env.reset(seed).unwrap();
        loop {
            let st = env
                .step(Action::Discrete(scripted_action(&env.cfg, &env.state)))
                .unwrap();
            if st.done {
                wins += usize::from(st.reward > 0.0);
                break;
            }
        }
    }
    assert!(wins >= 14, "scripted policy won {wins}/20");
}

#[test]
fn masking_blanks_missing_modalities() {
    let mut env = Hyperhot::new(HyperhotConfig::default()).unwrap();
    let o = env.reset(0).unwrap().masked(ModalityMask::IMAGE_ONLY);
    assert!(o.sound.iter().all(|v| *v == 0.0));
    assert!(o.image.iter().any(|v| *v > 0.0));
}
