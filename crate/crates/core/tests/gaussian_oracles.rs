use muse_core::gaussian::{poe_combine, poe_with_prior, DiagGaussian};
use muse_core::rng::SplitRng;
use proptest::prelude::*;

/// Mean and variance of the normalized product of 1-D densities, by
/// composite Simpson integration on a fine grid.
fn grid_product_moments(experts: &[(f64, f64)]) -> (f64, f64) {
    let (m0, v0) = experts[0];
    let half = 14.0
        * v0.sqrt()
            .max(experts.iter().map(|e| e.1.sqrt()).fold(0.0, f64::max));
    let (lo, hi) = (m0 - half, m0 + half);
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    // log densities are summed and shifted by their value at the first mean to stay in range
    let logp = |x: f64| -> f64 {
        experts
            .iter()
            .map(|(m, v)| -0.5 * (x - m).powi(2) / v - 0.5 * v.ln())
            .sum()
    };
    let mut shift = f64::NEG_INFINITY;
    for i in 0..=n {
        shift = shift.max(logp(lo + i as f64 * h));
    }
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = w * (logp(x) - shift).exp();
        z += p;
        s1 += p * x;
        s2 += p * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

#[test]
fn poe_matches_grid_product_on_random_cases() {
    let mut rng = SplitRng::new(2024);
    for case in 0..100 {
        let k = 1 + rng.below(4);
        let experts: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                (
                    rng.uniform_range(-3.0, 3.0),
                    rng.uniform_range(-1.5, 1.5).exp(),
                )
            })
            .collect();
        let g: Vec<DiagGaussian> = experts
            .iter()
            .map(|&(m, v)| DiagGaussian::from_variance(vec![m], &[v]).unwrap())
            .collect();
        let p = poe_combine(&g, false).unwrap();
        let (mean, var) = grid_product_moments(&experts);
        assert!(
            (p.mean[0] - mean).abs() <= 1e-8,
            "case {case}: mean {} vs {mean}",
            p.mean[0]
        );
        assert!(
            (p.var()[0] - var).abs() <= 1e-8,
            "case {case}: var {} vs {var}",
            p.var()[0]
        );
    }
}

#[test]
fn kl_matches_monte_carlo_within_three_standard_errors() {
    let mut rng = SplitRng::new(77);
    let samples = 1_000_000;
    for case in 0..20 {
        let d = 1 + rng.below(3);
        let mk = |rng: &mut SplitRng| {
            DiagGaussian::new(
                (0..d).map(|_| rng.uniform_range(-1.5, 1.5)).collect(),
                (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            )
            .unwrap()
        };
        let q = mk(&mut rng);
        let p = if case % 4 == 0 {
            DiagGaussian::standard(d)
        } else {
            mk(&mut rng)
        };
        let exact = if case % 4 == 0 {
            q.kl_to_standard()
        } else {
            q.kl_between(&p).unwrap()
        };
        let mut mc = SplitRng::derive(5, case);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..samples {
            let x = q.sample(&mut mc);
            let v = q.log_pdf(&x).unwrap() - p.log_pdf(&x).unwrap();
            s += v;
            s2 += v * v;
        }
        let n = samples as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "case {case}: mc {mean} ± {se} vs {exact}"
        );
    }
}

fn gaussian(d: usize) -> impl Strategy<Value = DiagGaussian> {
    (
        prop::collection::vec(-3.0..3.0f64, d),
        prop::collection::vec(-4.0..4.0f64, d),
    )
        .prop_map(|(m, lv)| DiagGaussian::new(m, lv).unwrap())
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_self(q in gaussian(3), p in gaussian(3)) {
        prop_assert!(q.kl_between(&p).unwrap() >= -1e-12);
        prop_assert!(q.kl_between(&q).unwrap().abs() < 1e-12);
        prop_assert!(q.kl_to_standard() >= -1e-12);
        let s1 = q.symmetric_kl(&p).unwrap();
        let s2 = p.symmetric_kl(&q).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-12 * s1.abs().max(1.0));
    }

    #[test]
    fn adding_an_expert_never_lowers_precision(es in prop::collection::vec(gaussian(2), 1..5), extra in gaussian(2)) {
        let base = poe_with_prior(&es, 2).unwrap();
        let mut more = es.clone();
        more.push(extra);
        let grown = poe_with_prior(&more, 2).unwrap();
        for (a, b) in base.precision().iter().zip(grown.precision()) {
            prop_assert!(b >= *a);
        }
    }

    #[test]
    fn poe_ignores_expert_order(es in prop::collection::vec(gaussian(2), 2..5)) {
        let a = poe_combine(&es, true).unwrap();
        let mut rev = es.clone();
        rev.reverse();
        let b = poe_combine(&rev, true).unwrap();
        for i in 0..2 {
            prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-12);
            prop_assert!((a.logvar[i] - b.logvar[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_expert_without_prior_is_itself(e in gaussian(3)) {
        let p = poe_combine(std::slice::from_ref(&e), false).unwrap();
        for i in 0..3 {
            prop_assert!((p.mean[i] - e.mean[i]).abs() < 1e-12);
            prop_assert!((p.logvar[i] - e.logvar[i]).abs() < 1e-12);
        }
    }
}
