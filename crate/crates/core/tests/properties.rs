//! Property tests over randomly drawn weights, nonlinearities, words and
//! initial states.

use std::f64::consts::PI;

use proptest::prelude::*;

use subharmonic::combinatorics::{canonical_necklace, lyndon_words, rotate_blocks, witt_count};
use subharmonic::config::RunConfig;
use subharmonic::dynamics::{integrate_until_escape, poincare_map, LinearField};
use subharmonic::nonlinearity::{ExtendedField, Nonlinearity, PlanarField};
use subharmonic::oscillation::winding_of;
use subharmonic::periodic::HumpString;
use subharmonic::spectral::{dirichlet_eigenvalue_on, principal_eigenvalue};
use subharmonic::weights::{decompose_humps, mean_value, mu_sharp, Sign, WeightSpec, DEFAULT_SIGN_TOL};

fn sin_weight() -> impl Strategy<Value = WeightSpec> {
    (1u32..=4, 0.5f64..8.0, 0.2f64..12.0).prop_map(|(freq, period, mu)| WeightSpec::sin(period, freq as f64, mu).unwrap())
}

/// Periodic tables with at least one sign change.
fn table_weight() -> impl Strategy<Value = WeightSpec> {
    (prop::collection::vec(-3.0f64..3.0, 3..9), 0.5f64..4.0, 0.2f64..12.0)
        .prop_filter("needs both signs", |(v, _, _)| v.iter().any(|&x| x > 0.1) && v.iter().any(|&x| x < -0.1))
        .prop_map(|(mut vals, period, mu)| {
            vals.push(vals[0]);
            let n = vals.len() - 1;
            let pts = vals.iter().enumerate().map(|(i, &a)| (period * i as f64 / n as f64, a)).collect();
            WeightSpec::table(period, pts, mu).unwrap()
        })
}

fn any_weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![sin_weight(), table_weight()]
}

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        (1.2f64..5.0).prop_map(|p| Nonlinearity::Power { p }),
        prop::collection::vec(0.0f64..50.0, 1..4)
            .prop_filter("some positive coefficient", |c| c.iter().any(|&x| x > 0.0))
            .prop_map(|coeffs| Nonlinearity::Polymix { coeffs }),
        (1.0f64..500.0).prop_map(|scale| Nonlinearity::Atan { scale }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_is_periodic(w in any_weight(), t in -20.0f64..20.0, l in -3i32..4) {
        let shifted = w.eval(t + l as f64 * w.period);
        prop_assert!((w.eval(t) - shifted).abs() <= 1e-9 * (1.0 + w.max_abs()));
    }

    #[test]
    fn gate_follows_mu_sharp(w in any_weight(), excess in 1.01f64..5.0) {
        let ms = mu_sharp(&w).unwrap();
        let above = w.with_mu(ms * excess).unwrap();
        prop_assert!(mean_value(&above, 1) < 0.0);
        let below = w.with_mu(ms / excess).unwrap();
        prop_assert!(mean_value(&below, 1) > 0.0);
    }

    #[test]
    fn mean_value_scales_with_k(w in any_weight(), k in 1usize..=10) {
        let one = mean_value(&w, 1);
        let scale = 1.0 + w.max_abs() * w.period;
        prop_assert!((mean_value(&w, k) - k as f64 * one).abs() < 1e-9 * k as f64 * scale);
    }

    #[test]
    fn humps_tile_the_period_with_their_sign(w in any_weight()) {
        let p = decompose_humps(&w, DEFAULT_SIGN_TOL).unwrap();
        let iv = &p.intervals;
        let total: f64 = iv.iter().map(|i| i.len()).sum();
        prop_assert!((total - w.period).abs() < 1e-9 * w.period);
        for pair in iv.windows(2) {
            prop_assert!(pair[0].hi <= pair[1].lo + 1e-12);
            prop_assert!(pair[0].sign != pair[1].sign);
        }
        for h in iv {
            for j in 1..20 {
                let t = h.lo + h.len() * j as f64 / 20.0;
                let a = w.base_value(t);
                if a.abs() > 1e-8 {
                    prop_assert_eq!(a > 0.0, h.sign == Sign::Positive, "t = {} a = {}", t, a);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences(n in nonlinearity(), s in -3.0f64..3.0) {
        let s = 10f64.powf(s);
        let h = 1e-5 * s;
        let fd1 = (n.g(s + h) - n.g(s - h)) / (2.0 * h);
        let fd2 = (n.dg(s + h) - n.dg(s - h)) / (2.0 * h);
        prop_assert!((fd1 - n.dg(s)).abs() <= 1e-6 * n.dg(s).abs().max(1e-300) + 1e-12);
        prop_assert!((fd2 - n.d2g(s)).abs() <= 1e-5 * n.d2g(s).abs() + 1e-9 * n.dg(s).abs() / s);
    }

    #[test]
    fn extended_field_is_continuous_at_zero(n in nonlinearity(), w in sin_weight(), t in 0.0f64..1.0) {
        let f = ExtendedField::new(n, w);
        let t = t * f.weight.period;
        prop_assert!((f.forcing(t, 1e-300) - f.forcing(t, -1e-300)).abs() < 1e-12);
    }

    #[test]
    fn truncated_fields_never_blow_up(n in nonlinearity(), w in sin_weight(), u0 in 0.0f64..50.0, up0 in -50.0f64..50.0) {
        let f = ExtendedField::new(n, w).truncated(5.0);
        let tr = integrate_until_escape(&f, [u0, up0], 0.0, f.weight.period, 1e-8).unwrap();
        prop_assert!(tr.blow_up.is_none());
    }

    #[test]
    fn liouville_for_damped_linear_fields(c in 0.0f64..1.0, a in 0.1f64..3.0, b in -2.0f64..2.0, u in -2.0f64..2.0, v in -2.0f64..2.0, k in 1u32..3) {
        let mut f = LinearField::new(move |t: f64| a + b * (2.0 * PI * t).cos(), 1.0);
        f.friction = c;
        let (_, md) = poincare_map(&f, 0.0, [u, v], k, 1e-10).unwrap();
        let expected = (-c * k as f64).exp();
        prop_assert!((md.det - expected).abs() < 1e-6 * expected);
        prop_assert_eq!(f.period(), 1.0);
    }

    #[test]
    fn necklace_is_idempotent_and_rotation_invariant(word in prop::collection::vec(0u8..3, 1..12), r in 0usize..12) {
        let c = canonical_necklace(&word);
        prop_assert_eq!(&canonical_necklace(&c.canonical).canonical, &c.canonical);
        let r = r % word.len();
        let rotated: Vec<u8> = word[r..].iter().chain(&word[..r]).copied().collect();
        prop_assert_eq!(canonical_necklace(&rotated).canonical, c.canonical);
    }

    #[test]
    fn lyndon_words_are_strictly_least_rotations(n in 1u32..4, k in 1u32..8) {
        let ws = lyndon_words(n, k).unwrap();
        prop_assert_eq!(witt_count(n as u64, k as u64).to_string(), ws.len().to_string());
        for w in &ws {
            for r in 1..w.len() {
                let rot: Vec<u8> = w[r..].iter().chain(&w[..r]).copied().collect();
                prop_assert!(*w < rot);
            }
        }
        prop_assert!(ws.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn block_rotations_compose(bits in prop::collection::vec(0u8..2, 1..5), k in 1usize..5, a in 0usize..5, b in 0usize..5) {
        let m = bits.len();
        let word: Vec<u8> = bits.iter().cycle().take(m * k).copied().collect();
        let s = HumpString::new(word.clone());
        let once = rotate_blocks(&rotate_blocks(&word, m, a), m, b);
        prop_assert_eq!(&once, &rotate_blocks(&word, m, a + b));
        let (c, shift) = s.canonical(m);
        prop_assert_eq!(rotate_blocks(&word, m, shift), c.bits);
        prop_assert_eq!(HumpString::parse(&s.to_string()), Some(s));
    }

    #[test]
    fn principal_eigenvalue_shift_covariance(a in 0.0f64..4.0, b in -4.0f64..4.0, s in -5.0f64..5.0) {
        let q = move |t: f64| a * (2.0 * PI * t).sin() + b * (4.0 * PI * t).cos();
        let base = principal_eigenvalue(&q, 1.0).unwrap().lambda0;
        let shifted = principal_eigenvalue(&move |t: f64| q(t) + s, 1.0).unwrap().lambda0;
        prop_assert!((shifted - (base - s)).abs() < 1e-7);
        // Rayleigh quotient with a constant test function.
        prop_assert!(base <= 1e-9);
    }

    #[test]
    fn dirichlet_scales_inversely_with_weight(len in 0.1f64..4.0, c in 0.1f64..10.0) {
        let one = dirichlet_eigenvalue_on(&|_| 1.0, 0.0, len, &[]).unwrap();
        let scaled = dirichlet_eigenvalue_on(&move |_| c, 0.0, len, &[]).unwrap();
        prop_assert!((scaled * c - one).abs() < 1e-8 * one);
    }

    #[test]
    fn winding_counts_turns(j in 1u32..6, phase in 0.0f64..6.0) {
        let w = winding_of(|t| ((j as f64 * t + phase).sin(), j as f64 * (j as f64 * t + phase).cos()), 0.0, 2.0 * PI, 50).unwrap();
        prop_assert!((w - j as f64).abs() < 1e-9);
    }

    #[test]
    fn config_render_round_trips(k in 1u32..5, mu in 0.5f64..20.0, tol in 1e-12f64..1e-6, amps in prop::collection::vec(1e-3f64..10.0, 1..5)) {
        let mut c = RunConfig::fig2();
        c.k = k;
        c.weight.mu = mu;
        c.integration_tol = tol;
        c.amplitudes = amps;
        prop_assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }
}
