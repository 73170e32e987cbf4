//! Oracles for the baseline calibrators.

mod common;

use calibra_core::baselines::{
    apply_one_vs_all, fit_bbq, fit_beta, fit_isotonic, fit_one_vs_all, fit_platt, fit_temperature, log_beta_binomial,
    pava, temperature_nll, BbqConfig, BetaParams, BinaryCalibrator, BinaryMethod, PlattParams,
};
use calibra_core::synthetic::{generate, Distortion, SynthConfig};
use calibra_core::{PredictionSet, ScoreKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn bernoulli_data(rng: &mut ChaCha8Rng, n: usize, prob: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<bool>) {
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let correct = scores.iter().map(|&s| rng.random::<f64>() < prob(s)).collect();
    (scores, correct)
}

#[test]
fn platt_dominates_the_identity_slope() {
    let mut rng = common::rng(51);
    for _ in 0..50 {
        let n = rng.random_range(20..500);
        let (a, b) = (rng.random_range(-6.0..6.0), rng.random_range(-3.0..3.0));
        let (scores, correct) = bernoulli_data(&mut rng, n, |s| 1.0 / (1.0 + (-(a * s + b)).exp()));
        if correct.iter().all(|&c| c) || correct.iter().all(|&c| !c) {
            continue;
        }
        let fitted = fit_platt(&scores, &correct).unwrap();
        let reference = PlattParams { a: 1.0, b: 0.0 };
        assert!(fitted.nll(&scores, &correct) <= reference.nll(&scores, &correct) + 1e-12);
    }
}

#[test]
fn platt_is_symmetric() {
    let mut rng = common::rng(52);
    let (half, correct_half) = bernoulli_data(&mut rng, 300, |s| s);
    let scores: Vec<f64> =
        half.iter().chain(half.iter()).enumerate().map(|(i, &s)| if i < 300 { s } else { -s }).collect();
    let correct: Vec<bool> =
        correct_half.iter().chain(correct_half.iter().map(|c| !c).collect::<Vec<_>>().iter()).cloned().collect();
    let fitted = fit_platt(&scores, &correct).unwrap();
    assert!(fitted.b.abs() < 1e-6, "b = {}", fitted.b);
}

/// Exact isotonic least squares by enumerating every split of the ordered
/// values into consecutive blocks with nondecreasing block means.
fn brute_isotonic(values: &[f64], weights: &[f64]) -> f64 {
    let n = values.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = vec![0.0; n];
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut feasible = true;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let w: f64 = weights[start..=i].iter().sum();
                let mean = (start..=i).map(|j| values[j] * weights[j]).sum::<f64>() / w;
                if mean < prev {
                    feasible = false;
                    break;
                }
                prev = mean;
                fit[start..=i].iter_mut().for_each(|f| *f = mean);
                start = i + 1;
            }
        }
        if feasible {
            let obj: f64 = (0..n).map(|j| weights[j] * (values[j] - fit[j]).powi(2)).sum();
            best = best.min(obj);
        }
    }
    best
}

#[test]
fn pava_matches_brute_force() {
    let mut rng = common::rng(53);
    for trial in 0..200 {
        let n = rng.random_range(1..=8);
        let values: Vec<f64> = (0..n)
            .map(|_| if trial % 2 == 0 { f64::from(rng.random_range(0u8..2)) } else { rng.random_range(0.0..1.0) })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let fit = pava(&values, &weights);
        assert!(fit.windows(2).all(|w| w[0] <= w[1]));
        let obj: f64 = (0..n).map(|j| weights[j] * (values[j] - fit[j]).powi(2)).sum();
        assert!((obj - brute_isotonic(&values, &weights)).abs() < 1e-10);
    }
}

#[test]
fn isotonic_fit_matches_brute_force() {
    let mut rng = common::rng(54);
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let (scores, correct) = bernoulli_data(&mut rng, n, |s| s);
        let map = fit_isotonic(&scores, &correct).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let values: Vec<f64> = order.iter().map(|&i| f64::from(u8::from(correct[i]))).collect();
        let obj: f64 = order.iter().zip(&values).map(|(&i, v)| (v - map.apply(scores[i])).powi(2)).sum();
        assert!((obj - brute_isotonic(&values, &vec![1.0; n])).abs() < 1e-10);
    }
}

#[test]
fn beta_recovers_generating_parameters() {
    let mut rng = common::rng(55);
    for truth in [BetaParams::new(2.0, 0.5, 0.3).unwrap(), BetaParams::new(0.7, 1.5, -0.4).unwrap()] {
        let (scores, correct) = bernoulli_data(&mut rng, 100_000, |s| truth.apply(s));
        let fitted = fit_beta(&scores, &correct).unwrap();
        for (got, want) in [(fitted.a, truth.a), (fitted.b, truth.b), (fitted.c, truth.c)] {
            assert!((got - want).abs() < 0.05, "{fitted:?} vs {truth:?}");
        }
    }
}

#[test]
fn beta_identity_parameters() {
    let id = BetaParams::new(1.0, 1.0, 0.0).unwrap();
    assert!((id.apply(0.5) - 0.5).abs() < 1e-15);
    assert!(fit_beta(&[0.5; 10], &[true, false, true, false, true, false, true, false, true, false]).is_err());
}

#[test]
fn bbq_leaves_calibrated_scores_alone() {
    let mut rng = common::rng(56);
    let (scores, correct) = bernoulli_data(&mut rng, 1_000_000, |s| s);
    let model = fit_bbq(&scores, &correct, &BbqConfig::default()).unwrap();
    assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for i in 1..20 {
        let s = i as f64 / 20.0;
        assert!((model.apply(s) - s).abs() < 0.02, "{s} -> {}", model.apply(s));
    }
}

/// Composite Simpson rule on [0, 1].
fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(0.0) + f(1.0) + inner) * h / 3.0
}

/// Tanh-sinh quadrature on [0, 1]; handles integrable endpoint
/// singularities. `f` receives `(t, 1 − t)` to keep both ends accurate.
fn tanh_sinh(f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut total = 0.0;
    for i in -400i32..=400 {
        let x = i as f64 * h;
        let u = half_pi * x.sinh();
        let weight = 0.5 * half_pi * x.cosh() / u.cosh().powi(2);
        // t = (1 + tanh u)/2 = 1/(1 + e^{−2u}), 1 − t = 1/(1 + e^{2u})
        let (t, one_minus) = (1.0 / (1.0 + (-2.0 * u).exp()), 1.0 / (1.0 + (2.0 * u).exp()));
        if t > 0.0 && one_minus > 0.0 {
            total += weight * f(t, one_minus);
        }
    }
    total * h
}

#[test]
fn bbq_marginal_likelihood_matches_quadrature() {
    let direct = simpson(|t| t.powi(3) * (1.0 - t), 10_000);
    assert!((log_beta_binomial(3, 4, 1.0, 1.0) - direct.ln()).abs() < 1e-8);
    // The per-bin prior used by BBQ: strength 2 centred at 0.7.
    let (a, b) = (1.4, 0.6);
    let norm = tanh_sinh(|t, s| t.powf(a - 1.0) * s.powf(b - 1.0));
    let direct = tanh_sinh(|t, s| t.powf(a + 2.0) * s.powf(b + 1.0)) / norm;
    assert!((log_beta_binomial(3, 5, a, b) - direct.ln()).abs() < 1e-8);
}

#[test]
fn bbq_single_model_has_unit_weight() {
    let mut rng = common::rng(57);
    let (scores, correct) = bernoulli_data(&mut rng, 500, |s| s);
    let model = fit_bbq(&scores, &correct, &BbqConfig { model_grid: Some(vec![7]) }).unwrap();
    assert_eq!(model.weights, vec![1.0]);
    assert!(fit_bbq(&scores, &correct, &BbqConfig { model_grid: Some(vec![]) }).is_err());
}

fn distorted_logits(n: usize, k: usize, t: f64, seed: u64) -> PredictionSet {
    let config = SynthConfig {
        distortion: Distortion::Temperature(t),
        output_kind: ScoreKind::Logits,
        ..SynthConfig::new(n, k, seed)
    };
    generate(&config).unwrap().0
}

#[test]
fn temperature_recovers_scaling() {
    let preds = distorted_logits(100_000, 4, 2.0, 58);
    let fitted = fit_temperature(&preds).unwrap();
    assert!((fitted.temperature() - 2.0).abs() < 1e-2, "T = {}", fitted.temperature());
    assert!(temperature_nll(&preds, fitted.temperature()) <= temperature_nll(&preds, 1.0));
}

#[test]
fn temperature_is_order_invariant_and_never_worse() {
    let mut rng = common::rng(59);
    for seed in 0..20 {
        let n = rng.random_range(20..400);
        let scale = rng.random_range(0.1..8.0);
        let preds = common::random_logits(&mut rng, n, 3, scale);
        let fitted = fit_temperature(&preds).unwrap();
        assert!(temperature_nll(&preds, fitted.temperature()) <= temperature_nll(&preds, 1.0));
        let reversed = preds.subset(&(0..n).rev().collect::<Vec<_>>());
        let again = fit_temperature(&reversed).unwrap();
        assert!(
            (again.temperature() - fitted.temperature()).abs() < 1e-9 * fitted.temperature(),
            "seed {seed}: {} vs {}",
            again.temperature(),
            fitted.temperature()
        );
        for row in preds.rows() {
            let out = fitted.apply(row, 3);
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(calibra_core::math::argmax(&out), calibra_core::math::argmax(row));
        }
    }
}

#[test]
fn one_vs_all_on_two_classes_matches_binary() {
    let mut rng = common::rng(60);
    let preds = common::random_simplex(&mut rng, 400, 2);
    let positive: Vec<f64> = preds.rows().map(|r| r[1]).collect();
    let targets: Vec<bool> = preds.labels().iter().map(|&y| y == 1).collect();
    for method in [BinaryMethod::Platt, BinaryMethod::Isotonic, BinaryMethod::Beta] {
        let ova = fit_one_vs_all(method, &preds).unwrap();
        let out = apply_one_vs_all(&ova, preds.scores(), 2).unwrap();
        let direct = BinaryCalibrator::fit(method, &positive, &targets).unwrap();
        for (i, &s) in positive.iter().enumerate() {
            let p1 = direct.apply(s);
            assert!((out.probs[2 * i + 1] - p1).abs() < 1e-9, "{method:?}: {} vs {p1}", out.probs[2 * i + 1]);
            assert!((out.probs[2 * i] - (1.0 - p1)).abs() < 1e-9);
        }
    }
}

#[test]
fn one_vs_all_rows_are_distributions() {
    let mut rng = common::rng(61);
    let preds = common::random_simplex(&mut rng, 600, 5);
    for method in [BinaryMethod::Platt, BinaryMethod::Isotonic, BinaryMethod::Beta, BinaryMethod::Bbq] {
        let ova = fit_one_vs_all(method, &preds).unwrap();
        let out = apply_one_vs_all(&ova, preds.scores(), 5).unwrap();
        for row in out.probs.chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(out.raw_row_sums.len(), 600);
    }
}
