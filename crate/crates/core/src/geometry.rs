//! ε-cores of the decision regions of an affine classifier and the 0/1-loss
//! form of the lower bound.
//!
//! For scores `s_j(x) = ⟨w_j, x⟩ + b_j` the region where class `i` is the
//! unique maximum is an open polyhedron. A point stays inside it under every
//! perturbation of norm at most ε iff each pairwise margin `s_i − s_j`
//! exceeds `ε‖w_i − w_j‖_*`, which is exactly how far that margin can drop.

use serde::Serialize;

use crate::distributions::DataSpec;
use crate::error::{Error, Result};
use crate::losses::{unique_argmax, zero_one};
use crate::models::{check_eps, LinearClassifier};
use crate::numerics::{dual_attainment, p_norm, try_monte_carlo, NormSpec};
use crate::risk::{verdict, BoundReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreCertificate {
    pub class: usize,
    /// `s_i − s_j` for every `j ≠ i`, in class order.
    pub margins: Vec<f64>,
    /// `ε‖w_i − w_j‖_*` for the same `j`.
    pub thresholds: Vec<f64>,
    pub in_core: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CoreMembership {
    /// The scores at `x` have no unique maximum, so `x` is in no region.
    NoUniqueMax,
    Region(CoreCertificate),
}

impl CoreMembership {
    pub fn in_core(&self) -> bool {
        matches!(self, CoreMembership::Region(c) if c.in_core)
    }
}

fn certificate(
    c: &LinearClassifier,
    scores: &[f64],
    class: usize,
    eps: f64,
    spec: NormSpec,
) -> CoreCertificate {
    let q = spec.dual_exponent();
    let mut margins = Vec::with_capacity(c.classes() - 1);
    let mut thresholds = Vec::with_capacity(c.classes() - 1);
    for j in (0..c.classes()).filter(|&j| j != class) {
        margins.push(scores[class] - scores[j]);
        thresholds.push(eps * p_norm(&c.weight_diff(class, j), q));
    }
    let in_core = margins.iter().zip(&thresholds).all(|(m, t)| m > t);
    CoreCertificate {
        class,
        margins,
        thresholds,
        in_core,
    }
}

/// Whether `x` lies in `core_ε(S_i)` for the region `S_i` containing it.
pub fn core_membership(
    c: &LinearClassifier,
    x: &[f64],
    eps: f64,
    spec: NormSpec,
) -> Result<CoreMembership> {
    check_eps(eps)?;
    let scores = c.scores(x)?;
    Ok(match unique_argmax(&scores) {
        None => CoreMembership::NoUniqueMax,
        Some(i) => CoreMembership::Region(certificate(c, &scores, i, eps, spec)),
    })
}

/// `sup_{‖Δ‖≤ε} ℓ_0/1(f(x), f(x + Δ))`.
///
/// Evaluated by moving `x` along the worst perturbation of every pairwise
/// margin and checking whether the winning class survives; this does not go
/// through [`core_membership`], so the two can be cross-checked.
pub fn adv01_loss_exact(c: &LinearClassifier, x: &[f64], eps: f64, spec: NormSpec) -> Result<f64> {
    check_eps(eps)?;
    let scores = c.scores(x)?;
    let Some(i) = unique_argmax(&scores) else {
        return Ok(1.0);
    };
    for j in (0..c.classes()).filter(|&j| j != i) {
        let dir = dual_attainment(&c.weight_diff(i, j), spec);
        let moved: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - eps * di).collect();
        if zero_one(&scores, &c.scores(&moved)?) > 0.0 {
            return Ok(1.0);
        }
    }
    Ok(0.0)
}

/// `sup_{‖Δ‖≤ε} ℓ_0/1(s(x + Δ), y)` for a label `y`, judged on the scores.
pub fn adversarial_label_loss(
    c: &LinearClassifier,
    x: &[f64],
    y: &[f64],
    eps: f64,
    spec: NormSpec,
) -> Result<f64> {
    check_eps(eps)?;
    let scores = c.scores(x)?;
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: y.len(),
        });
    }
    match unique_argmax(y) {
        Some(label) => {
            let cert = certificate(c, &scores, label, eps, spec);
            Ok(if cert.in_core { 0.0 } else { 1.0 })
        }
        None => {
            // a tied label is matched only by identical, immovable scores
            let frozen = eps == 0.0 || c.weights.iter().flatten().all(|&w| w == 0.0);
            Ok(if frozen && scores.as_slice() == y { 0.0 } else { 1.0 })
        }
    }
}

/// Lower bound for 0/1 classification:
/// `R + R_ε ≥ max{P(X ∉ ∪ core_ε(S_i)), ½E‖Y − Y'‖₁}`.
///
/// The report's `in_core_frequency` comes from [`core_membership`] and its
/// smoothness term from [`adv01_loss_exact`] on the same samples; the two
/// must add to one exactly.
pub fn cor3_report(
    c: &LinearClassifier,
    data: &DataSpec,
    eps: f64,
    spec: NormSpec,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_eps(eps)?;
    if data.is_regression() {
        return Err(Error::Incompatible("0/1 bound needs a classification spec".into()));
    }
    if data.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: c.dim(),
        });
    }
    let [standard, adversarial, lhs, non_core, label, in_core] = try_monte_carlo(n, |i| {
        let (x, y, y2) = data.draw_paired(seed, i)?;
        let scores = c.scores(&x)?;
        let std = zero_one(&scores, &y);
        let adv = adversarial_label_loss(c, &x, &y, eps, spec)?;
        let nc = adv01_loss_exact(c, &x, eps, spec)?;
        let core = if core_membership(c, &x, eps, spec)?.in_core() { 1.0 } else { 0.0 };
        Ok([std, adv, std + adv, nc, zero_one(&y, &y2), core])
    })?;
    let smoothness_term = non_core.estimate(seed);
    let label_term = label.estimate(seed);
    let lhs = lhs.estimate(seed);
    let (bound, combined_se, passed) = verdict(&lhs, &smoothness_term, &label_term);
    Ok(BoundReport {
        smoothness_term,
        label_term,
        bound,
        lhs,
        standard: standard.estimate(seed),
        adversarial: adversarial.estimate(seed),
        local_smoothness: None,
        in_core_frequency: Some(in_core.estimate(seed)),
        combined_se,
        verdict: passed,
        exact: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::XFamily;
    use crate::models::Head;
    use crate::numerics::{Covariance, SampleStream};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn binary(w: [f64; 2]) -> LinearClassifier {
        LinearClassifier::new(vec![w.to_vec(), vec![0.0, 0.0]], vec![0.0, 0.0], Head::RawScores)
            .unwrap()
    }

    #[test]
    fn core_membership_examples() {
        let c = binary([1.0, 0.0]);
        let m = core_membership(&c, &[1.0, 0.0], 0.5, NormSpec::L2).unwrap();
        assert!(m.in_core());
        // explicit worst perturbation (−0.5, 0) keeps class 0 on top
        assert_eq!(c.argmax_region(&[0.5, 0.0]).unwrap(), Some(0));

        let m = core_membership(&c, &[0.3, 0.0], 0.5, NormSpec::L2).unwrap();
        assert!(!m.in_core());
        assert_eq!(c.argmax_region(&[-0.1, 0.0]).unwrap(), Some(1));

        let m = core_membership(&c, &[0.01, 5.0], 0.0, NormSpec::L2).unwrap();
        assert!(m.in_core());
        assert_eq!(
            core_membership(&c, &[0.0, 1.0], 0.1, NormSpec::L2).unwrap(),
            CoreMembership::NoUniqueMax
        );
    }

    #[test]
    fn adv01_examples() {
        let c = binary([1.0, 0.0]);
        assert_eq!(adv01_loss_exact(&c, &[1.0, 0.0], 0.5, NormSpec::L2).unwrap(), 0.0);
        assert_eq!(adv01_loss_exact(&c, &[0.0, 3.0], 0.5, NormSpec::L2).unwrap(), 1.0);
        assert_eq!(adv01_loss_exact(&c, &[0.5 + 1e-6, 0.0], 0.5, NormSpec::L2).unwrap(), 0.0);
        assert_eq!(adv01_loss_exact(&c, &[0.5 - 1e-6, 0.0], 0.5, NormSpec::L2).unwrap(), 1.0);
        assert!(adv01_loss_exact(&c, &[0.5, 0.0], -1.0, NormSpec::L2).is_err());
    }

    fn random_classifier<R: Rng>(rng: &mut R, k: usize, d: usize) -> LinearClassifier {
        let w = (0..k)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect())
            .collect();
        let b = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
        LinearClassifier::new(w, b, Head::RawScores).unwrap()
    }

    fn random_in_ball<R: Rng>(rng: &mut R, d: usize, eps: f64, spec: NormSpec) -> Vec<f64> {
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = p_norm(&u, spec.exponent());
        let radius = if rng.random_bool(0.7) { eps } else { eps * rng.random::<f64>() };
        u.iter().map(|x| radius * x / n).collect()
    }

    #[test]
    fn two_paths_agree_and_cores_shrink() {
        let mut rng = SampleStream::new(31, 0).rng();
        for _ in 0..2000 {
            let k = rng.random_range(2..=4);
            let d = rng.random_range(1..=4);
            let c = random_classifier(&mut rng, k, d);
            let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let spec = [NormSpec::L1, NormSpec::L2, NormSpec::LINF][rng.random_range(0..3)];
            let eps = rng.random_range(0.0..1.0);
            let member = core_membership(&c, &x, eps, spec).unwrap();
            let loss = adv01_loss_exact(&c, &x, eps, spec).unwrap();
            assert_eq!(loss == 0.0, member.in_core());
            let smaller = core_membership(&c, &x, eps * 0.5, spec).unwrap();
            assert!(!member.in_core() || smaller.in_core());
        }
    }

    #[test]
    fn brute_force_never_exceeds_exact() {
        let mut rng = SampleStream::new(77, 0).rng();
        let mut agree = 0;
        let mut eligible = 0;
        for _ in 0..300 {
            let k = rng.random_range(2..=3);
            let d = rng.random_range(1..=3);
            let c = random_classifier(&mut rng, k, d);
            let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let spec = [NormSpec::L1, NormSpec::L2, NormSpec::LINF][rng.random_range(0..3)];
            let eps = rng.random_range(0.05..1.0);
            let exact = adv01_loss_exact(&c, &x, eps, spec).unwrap();
            let base = c.scores(&x).unwrap();
            let mut brute: f64 = 0.0;
            for _ in 0..3000 {
                let delta = random_in_ball(&mut rng, d, eps, spec);
                let moved: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
                brute = brute.max(zero_one(&base, &c.scores(&moved).unwrap()));
            }
            assert!(brute <= exact);
            if let CoreMembership::Region(cert) = core_membership(&c, &x, eps, spec).unwrap() {
                let gap = cert
                    .margins
                    .iter()
                    .zip(&cert.thresholds)
                    .map(|(m, t)| (m - t).abs())
                    .fold(f64::INFINITY, f64::min);
                if gap > 1e-3 && spec == NormSpec::L2 && d == 1 {
                    eligible += 1;
                    agree += (brute == exact) as usize;
                }
            }
        }
        assert!(agree * 100 >= eligible * 99, "{agree}/{eligible}");
    }

    #[test]
    fn label_loss_matches_core_of_label_class() {
        let c = binary([1.0, 0.0]);
        assert_eq!(
            adversarial_label_loss(&c, &[1.0, 0.0], &[1.0, 0.0], 0.5, NormSpec::L2).unwrap(),
            0.0
        );
        assert_eq!(
            adversarial_label_loss(&c, &[1.0, 0.0], &[0.0, 1.0], 0.5, NormSpec::L2).unwrap(),
            1.0
        );
        assert_eq!(
            adversarial_label_loss(&c, &[1.0, 0.0], &[0.0, 1.0], 0.0, NormSpec::L2).unwrap(),
            1.0
        );
        assert_eq!(
            adversarial_label_loss(&c, &[-2.0, 0.0], &[0.0, 1.0], 1.0, NormSpec::L2).unwrap(),
            0.0
        );
    }

    fn uniform_labels_spec() -> DataSpec {
        let reference = LinearClassifier::new(vec![vec![0.0, 0.0]; 2], vec![0.0; 2], Head::default())
            .unwrap();
        DataSpec::classification(Covariance::identity(2), XFamily::Gaussian, reference).unwrap()
    }

    #[test]
    fn zero_one_report_examples() {
        // labels follow the classifier exactly
        let c = binary([1.0, 0.0]);
        let sharp = LinearClassifier::new(
            vec![vec![1e6, 0.0], vec![0.0, 0.0]],
            vec![0.0; 2],
            Head::Softmax { floor: 0.0 },
        )
        .unwrap();
        let spec = DataSpec::classification(Covariance::identity(2), XFamily::Gaussian, sharp)
            .unwrap();
        let r = cor3_report(&c, &spec, 0.0, NormSpec::L2, 20_000, 3).unwrap();
        assert!(r.lhs.value < 1e-3);
        assert_eq!(r.smoothness_term.value, 0.0);
        assert_eq!(r.label_term.value, 0.0);
        assert!(r.verdict);

        let spec = uniform_labels_spec();
        let r = cor3_report(&c, &spec, 0.1, NormSpec::L2, 20_000, 3).unwrap();
        assert!((r.label_term.value - 0.5).abs() < 4.0 * r.label_term.std_error);
        assert!(r.lhs.value + 3.0 * r.lhs.std_error >= r.label_term.value - 3.0 * r.label_term.std_error);
        assert!(r.lhs.value > 0.9);
        assert!(r.verdict);
        let n = r.lhs.n as f64;
        let in_core = (r.in_core_frequency.unwrap().value * n).round();
        assert_eq!(r.smoothness_term.value, (n - in_core) / n);

        let r = cor3_report(&c, &spec, 100.0, NormSpec::L2, 5_000, 3).unwrap();
        assert_eq!(r.smoothness_term.value, 1.0);
    }

    #[test]
    fn zero_one_report_rejects_regression() {
        let spec = crate::distributions::DataSpec::regression(
            Covariance::identity(2),
            XFamily::Gaussian,
            vec![1.0, 0.0],
            1,
            crate::distributions::NoiseFamily::Gaussian,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            cor3_report(&binary([1.0, 0.0]), &spec, 0.1, NormSpec::L2, 10, 0),
            Err(Error::Incompatible(_))
        ));
    }
}
