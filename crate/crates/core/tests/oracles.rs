use rayon::ThreadPoolBuilder;

use tradeoff_core::distributions::{c_p_constant, snr_p};
use tradeoff_core::numerics::{monte_carlo, sigma_norm, Channel};
use tradeoff_core::ridge_analysis::{
    binomial_chain_audit, epsilon_threshold, l_eps_lower_bound, RidgeBoundInputs,
};
use tradeoff_core::risk::{adversarial_risk, local_smoothness, standard_risk, theorem1_report};
use tradeoff_core::training::{adversarial_fit, erm_fit, Dataset, Init, TrainConfig};
use tradeoff_core::{
    Covariance, DataSpec, LossKind, NoiseFamily, NormSpec, Predictor, RidgeModel, SampleStream,
    XFamily,
};

fn correlated(d: usize) -> Covariance {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| 0.4f64.powi((i as i32 - j as i32).abs()) * (1.0 + 0.1 * i.min(j) as f64)).collect())
        .collect();
    Covariance::new(&rows).unwrap()
}

fn spec(cov: Covariance, family: XFamily, star: Vec<f64>, p: u32, sigma2: f64) -> DataSpec {
    DataSpec::regression(cov, family, star, p, NoiseFamily::Gaussian, sigma2).unwrap()
}

#[test]
fn sigma_norm_squared_is_score_variance() {
    let cov = correlated(4);
    let theta = [0.5, -1.0, 0.3, 2.0];
    let s = spec(cov.clone(), XFamily::Gaussian, theta.to_vec(), 1, 1.0);
    let [acc] = monte_carlo(200_000, |i| {
        let x = s.sample_x(SampleStream::for_sample(3, i, Channel::Input));
        [theta.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().powi(2)]
    });
    let est = acc.estimate(3);
    let target = sigma_norm(&theta, &cov).unwrap().powi(2);
    assert!((est.value - target).abs() <= 4.0 * est.std_error, "{} vs {target}", est.value);
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let s = spec(correlated(3), XFamily::Rademacher, vec![1.0, 0.0, -1.0], 2, 0.5);
    let f = Predictor::Ridge(RidgeModel::new(vec![0.8, 0.1, -0.9], 2).unwrap());
    let run = |threads: usize| {
        ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            theorem1_report(&f, LossKind::LeastSquares, &s, 0.3, NormSpec::LINF, 50_000, 17).unwrap()
        })
    };
    let (a, b) = (run(1), run(7));
    assert_eq!(a.lhs.value.to_bits(), b.lhs.value.to_bits());
    assert_eq!(a.lhs.std_error.to_bits(), b.lhs.std_error.to_bits());
    assert_eq!(a.smoothness_term.value.to_bits(), b.smoothness_term.value.to_bits());
    assert_eq!(a.label_term.value.to_bits(), b.label_term.value.to_bits());
}

#[test]
fn adversarial_risk_dominates_standard_risk_on_shared_samples() {
    for family in XFamily::ALL {
        for p in 1..=3 {
            let s = spec(Covariance::identity(2), family, vec![1.0, -0.5], p, 0.7);
            let f = Predictor::Ridge(RidgeModel::new(vec![0.9, -0.2], p).unwrap());
            let r = standard_risk(&f, LossKind::LeastSquares, &s, 20_000, 2).unwrap();
            for eps in [0.0, 0.1, 1.0] {
                let ra = adversarial_risk(&f, LossKind::LeastSquares, &s, eps, NormSpec::L2, 20_000, 2).unwrap();
                assert!(ra.value >= r.value);
            }
        }
    }
}

#[test]
fn closed_form_l_eps_bound_is_dominated_by_estimate() {
    for family in XFamily::ALL {
        for p in 1..=3 {
            for d in [2, 5] {
                let star: Vec<f64> = (0..d).map(|i| 1.0 - 0.3 * i as f64).collect();
                let s = spec(correlated(d), family, star.clone(), p, 1.0);
                let m = RidgeModel::new(star.iter().map(|v| 0.8 * v).collect(), p).unwrap();
                for eps in [0.1, 0.5] {
                    for norm in [NormSpec::L2, NormSpec::LINF] {
                        let l = local_smoothness(&Predictor::Ridge(m.clone()), &s, eps, norm, 20_000, 4).unwrap();
                        let b = l_eps_lower_bound(&RidgeBoundInputs::from_model(&m, &s, eps, norm).unwrap());
                        assert!(b <= l.value + 3.0 * l.std_error, "{family:?} p={p} d={d}: {b} > {}", l.value);
                    }
                }
            }
        }
    }
}

#[test]
fn chain_links_hold_for_degree_three() {
    for family in XFamily::ALL {
        let s = spec(correlated(2), family, vec![1.0, 0.5], 3, 1.0);
        let m = RidgeModel::new(vec![0.7, -0.4], 3).unwrap();
        let a = binomial_chain_audit(&m, &s, 0.4, NormSpec::L2, 100_000, 6).unwrap();
        assert!(a.all_hold, "{family:?}: {:#?}", a.links);
    }
}

#[test]
fn degree_one_threshold_is_root_lambda_sigma_over_signal() {
    let cov = correlated(3);
    let star = vec![1.0, -2.0, 0.5];
    let sigma2 = 0.36;
    let s = spec(cov.clone(), XFamily::Gaussian, star.clone(), 1, sigma2);
    let snr = snr_p(&s, 10, 0).unwrap();
    let c1 = c_p_constant(&s, 1, 10, 0).unwrap();
    assert_eq!(c1.value, 1.0);
    let lambda = 0.8;
    let t = epsilon_threshold(1, c1.value, lambda, snr.value).unwrap();
    let direct = lambda.sqrt() * sigma2.sqrt() / sigma_norm(&star, &cov).unwrap();
    assert!((t.value - direct).abs() <= 1e-12 * direct);
}

/// `E ½(|θX − Y| + ε|θ|)²` for `X ~ N(0,1)`, `Y = θ*X + Z`, `Z ~ N(0,σ²)`:
/// with `v² = (θ−θ*)² + σ²`, `E|θX − Y| = v√(2/π)`.
fn population_objective(theta: f64, star: f64, sigma2: f64, eps: f64) -> f64 {
    let v2 = (theta - star).powi(2) + sigma2;
    0.5 * (v2 + 2.0 * eps * theta.abs() * v2.sqrt() * (2.0 / std::f64::consts::PI).sqrt() + eps * eps * theta * theta)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn adversarial_training_shrinks_one_dimensional_slope() {
    let (star, sigma2, eps) = (1.0, 1.0, 0.5);
    let s = spec(Covariance::identity(1), XFamily::Gaussian, vec![star], 1, sigma2);
    let oracle = golden_section(|t| population_objective(t, star, sigma2, eps), -1.0, 3.0);
    assert!(oracle.abs() < star);

    let mut erm = Vec::new();
    let mut adv = Vec::new();
    for seed in 0..10 {
        let cfg = TrainConfig { step_size: 0.5, iterations: 400, n: 4000, init: Init::Zero, seed };
        let data = Dataset::sample(&s, cfg.n, seed).unwrap();
        erm.push(erm_fit(&data, 1, &cfg).unwrap().theta[0]);
        adv.push(adversarial_fit(&data, 1, eps, NormSpec::L2, &cfg).unwrap().theta[0]);
    }
    let shrunk = erm.iter().zip(&adv).filter(|(e, a)| a.abs() < e.abs()).count();
    assert!(shrunk >= 9, "{erm:?} {adv:?}");

    let gaps: Vec<f64> = erm.iter().zip(&adv).map(|(e, a)| e.abs() - a.abs()).collect();
    let mean = gaps.iter().sum::<f64>() / 10.0;
    let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    assert!(mean > 3.0 * sd / 10f64.sqrt());

    let adv_mean = adv.iter().sum::<f64>() / 10.0;
    let adv_sd = (adv.iter().map(|a| (a - adv_mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    assert!((adv_mean - oracle).abs() <= 4.0 * adv_sd / 10f64.sqrt() + 0.02, "{adv_mean} vs {oracle}");
}
