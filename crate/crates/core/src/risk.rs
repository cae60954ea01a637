//! Monte Carlo estimators for the standard risk `R(f)`, the adversarial risk
//! `R_ε(f)`, the mean local smoothness `L_ε(f)`, the label spread
//! `E B(Y, Y')`, and the lower bound
//!
//! ```text
//! R(f) + R_ε(f) ≥ max{ E sup_Δ B(f(X), f(X+Δ)), E B(Y, Y') }.
//! ```
//!
//! All estimators that share a seed see the same samples: sample `i` draws
//! `X` from stream `(seed, i, Input)`, `Y` from `(seed, i, Label)` and the
//! conditional copy `Y'` from `(seed, i, PairedLabel)`.
//!
//! Inner suprema are exact for ridge models under the least-squares loss, for
//! binary softmax classifiers under KL, and for 0/1 loss on affine scores.
//! For KL with more than two classes the supremum is replaced by the best of
//! a finite candidate set, which under-estimates it; such estimates carry
//! `lower_bound = true`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::distributions::DataSpec;
use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{adv01_loss_exact, adversarial_label_loss};
use crate::losses::{eval_a, eval_b, eval_loss, unique_argmax, zero_one, LossKind, CONDITION_TOL};
use crate::models::{check_eps, LinearClassifier, RidgeModel};
use crate::numerics::{
    dual_attainment, p_norm, try_monte_carlo, Channel, NormSpec, SampleStream,
};

pub use crate::numerics::Estimate;

/// Random candidate perturbations tried, on top of the pairwise worst cases,
/// when the inner supremum has no closed form.
pub const RANDOM_CANDIDATES: usize = 32;

/// Number of standard errors allowed on each side of a statistical verdict.
pub const VERDICT_SE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Predictor {
    Ridge(RidgeModel),
    Linear(LinearClassifier),
}

impl Predictor {
    pub fn dim(&self) -> usize {
        match self {
            Predictor::Ridge(m) => m.dim(),
            Predictor::Linear(c) => c.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// `E sup_Δ B(f(X), f(X+Δ))`; `L_ε / 6` for the least-squares and KL pairs.
    pub smoothness_term: Estimate,
    /// `E B(Y, Y')`
    pub label_term: Estimate,
    /// `max(smoothness_term, label_term)`
    pub bound: f64,
    /// `R + R_ε`, estimated from per-sample sums.
    pub lhs: Estimate,
    pub standard: Estimate,
    pub adversarial: Estimate,
    pub local_smoothness: Option<Estimate>,
    /// Fraction of samples inside some ε-core (0/1 loss only).
    pub in_core_frequency: Option<Estimate>,
    pub combined_se: f64,
    /// `lhs + 3·SE ≥ bound − 3·SE`
    pub verdict: bool,
    /// Every inner supremum on the left-hand side and in the smoothness term is exact.
    pub exact: bool,
}

/// Returns `(bound, combined SE, verdict)` for the max-of-two-terms bound.
pub(crate) fn verdict(lhs: &Estimate, smooth: &Estimate, label: &Estimate) -> (f64, f64, bool) {
    let binding = if smooth.value >= label.value { smooth } else { label };
    let bound = smooth.value.max(label.value);
    let se = (lhs.std_error.powi(2) + binding.std_error.powi(2)).sqrt();
    (bound, se, lhs.value + VERDICT_SE * se >= bound - VERDICT_SE * se)
}

fn check_compat(predictor: &Predictor, kind: LossKind, spec: &DataSpec) -> Result<()> {
    ensure_dim(spec.dim(), predictor.dim())?;
    match (predictor, kind, &spec.task) {
        (Predictor::Ridge(_), LossKind::LeastSquares, crate::Task::Regression { .. }) => Ok(()),
        (
            Predictor::Linear(c),
            LossKind::KullbackLeibler | LossKind::ZeroOne,
            crate::Task::Classification { reference },
        ) => ensure_dim(reference.classes(), c.classes()),
        _ => Err(Error::Incompatible(format!(
            "{} loss does not fit this predictor/task pair",
            kind.name()
        ))),
    }
}

/// Output of `f` as seen by the loss. The 0/1 loss reads raw scores, which
/// share their argmax with the softmax head.
fn output(predictor: &Predictor, kind: LossKind, x: &[f64]) -> Result<Vec<f64>> {
    match predictor {
        Predictor::Ridge(m) => Ok(vec![m.predict(x)?]),
        Predictor::Linear(c) => match kind {
            LossKind::ZeroOne => c.scores(x),
            _ => c.predict_softmax(x),
        },
    }
}

fn shifted(x: &[f64], dir: &[f64], step: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, b)| a + step * b).collect()
}

/// Finite candidate set of perturbations for a linear classifier: the worst
/// case of each pairwise margin in both directions plus random points of the
/// ε-sphere.
fn candidate_perturbations(
    c: &LinearClassifier,
    eps: f64,
    spec: NormSpec,
    stream: SampleStream,
) -> Vec<Vec<f64>> {
    let k = c.classes();
    let d = c.dim();
    let mut out = vec![vec![0.0; d]];
    for i in 0..k {
        for j in (i + 1)..k {
            let dir = dual_attainment(&c.weight_diff(i, j), spec);
            out.push(dir.iter().map(|v| eps * v).collect());
            out.push(dir.iter().map(|v| -eps * v).collect());
        }
    }
    let mut rng = stream.rng();
    for _ in 0..RANDOM_CANDIDATES {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = p_norm(&g, spec.exponent());
        if n > 0.0 {
            out.push(g.iter().map(|v| eps * v / n).collect());
        }
    }
    out
}

/// `sup_{‖Δ‖≤ε} ℓ(f(x+Δ), y)` and whether the value is exact.
pub fn adversarial_loss(
    predictor: &Predictor,
    kind: LossKind,
    x: &[f64],
    y: &[f64],
    eps: f64,
    spec: NormSpec,
    stream: SampleStream,
) -> Result<(f64, bool)> {
    check_eps(eps)?;
    let nominal = eval_loss(kind, &output(predictor, kind, x)?, y)?;
    if eps == 0.0 {
        return Ok((nominal, true));
    }
    match (predictor, kind) {
        (Predictor::Ridge(m), LossKind::LeastSquares) => {
            ensure_dim(1, y.len())?;
            Ok((m.worst_case_ls_loss(x, y[0], eps, spec)?.value, true))
        }
        (Predictor::Linear(c), LossKind::ZeroOne) => {
            Ok((adversarial_label_loss(c, x, y, eps, spec)?, true))
        }
        (Predictor::Linear(c), LossKind::KullbackLeibler) => {
            let label = unique_argmax(y).filter(|&i| y[i] == 1.0);
            if let (2, Some(label)) = (c.classes(), label) {
                // the loss only depends on the label margin, which is lowest here
                let other = 1 - label;
                let dir = dual_attainment(&c.weight_diff(label, other), spec);
                let worst = eval_loss(kind, &c.predict_softmax(&shifted(x, &dir, -eps))?, y)?;
                return Ok((worst.max(nominal), true));
            }
            let mut best = nominal;
            for delta in candidate_perturbations(c, eps, spec, stream) {
                let moved = shifted(x, &delta, 1.0);
                best = best.max(eval_loss(kind, &c.predict_softmax(&moved)?, y)?);
            }
            Ok((best, false))
        }
        _ => Err(Error::Incompatible(format!(
            "{} loss does not fit this predictor",
            kind.name()
        ))),
    }
}

/// `sup_{‖Δ‖≤ε} ‖f(x+Δ) − f(x)‖₁²` and whether the value is exact.
pub fn local_deviation_sq(
    predictor: &Predictor,
    x: &[f64],
    eps: f64,
    spec: NormSpec,
    stream: SampleStream,
) -> Result<(f64, bool)> {
    check_eps(eps)?;
    match predictor {
        Predictor::Ridge(m) => Ok((m.worst_case_deviation(x, eps, spec)?.powi(2), true)),
        Predictor::Linear(c) if c.classes() == 2 => {
            // both outputs move with the margin s₀ − s₁, monotonically
            let s = c.scores(x)?;
            let m0 = s[0] - s[1];
            let r = eps * p_norm(&c.weight_diff(0, 1), spec.dual_exponent());
            let p_at = |m: f64| c.softmax_of_scores(&[m, 0.0])[0];
            let base = p_at(m0);
            let dev = (p_at(m0 - r) - base).abs().max((p_at(m0 + r) - base).abs());
            Ok(((2.0 * dev).powi(2), true))
        }
        Predictor::Linear(c) => {
            let base = c.predict_softmax(x)?;
            let mut best: f64 = 0.0;
            for delta in candidate_perturbations(c, eps, spec, stream) {
                let moved = c.predict_softmax(&shifted(x, &delta, 1.0))?;
                let l1: f64 = moved.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum();
                best = best.max(l1 * l1);
            }
            Ok((best, false))
        }
    }
}

fn perturbation_stream(seed: u64, i: usize) -> SampleStream {
    SampleStream::for_sample(seed, i, Channel::Perturbation)
}

/// `R(f) = E ℓ(f(X), Y)`
pub fn standard_risk(
    predictor: &Predictor,
    kind: LossKind,
    spec: &DataSpec,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    check_compat(predictor, kind, spec)?;
    let [acc] = try_monte_carlo(n, |i| {
        let (x, y) = spec.draw(seed, i)?;
        Ok([eval_loss(kind, &output(predictor, kind, &x)?, &y)?])
    })?;
    Ok(acc.estimate(seed))
}

/// `R_ε(f) = E sup_{‖Δ‖≤ε} ℓ(f(X+Δ), Y)`
pub fn adversarial_risk(
    predictor: &Predictor,
    kind: LossKind,
    spec: &DataSpec,
    eps: f64,
    norm: NormSpec,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    check_eps(eps)?;
    check_compat(predictor, kind, spec)?;
    let [acc, exact] = try_monte_carlo(n, |i| {
        let (x, y) = spec.draw(seed, i)?;
        let (v, ex) =
            adversarial_loss(predictor, kind, &x, &y, eps, norm, perturbation_stream(seed, i))?;
        Ok([v, if ex { 0.0 } else { 1.0 }])
    })?;
    Ok(acc.estimate(seed).with_lower_bound(exact.sum() > 0.0))
}

/// `L_ε(f) = E sup_{‖Δ‖≤ε} ‖f(X+Δ) − f(X)‖₁²`
pub fn local_smoothness(
    predictor: &Predictor,
    spec: &DataSpec,
    eps: f64,
    norm: NormSpec,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    check_eps(eps)?;
    ensure_dim(spec.dim(), predictor.dim())?;
    let [acc, inexact] = try_monte_carlo(n, |i| {
        let x = spec.sample_x(SampleStream::for_sample(seed, i, Channel::Input));
        let (v, ex) = local_deviation_sq(predictor, &x, eps, norm, perturbation_stream(seed, i))?;
        Ok([v, if ex { 0.0 } else { 1.0 }])
    })?;
    Ok(acc.estimate(seed).with_lower_bound(inexact.sum() > 0.0))
}

/// `E B(Y, Y')` with `Y'` an independent copy of `Y` given `X`.
pub fn label_spread(kind: LossKind, spec: &DataSpec, n: usize, seed: u64) -> Result<Estimate> {
    if spec.is_regression() != (kind == LossKind::LeastSquares) {
        return Err(Error::Incompatible(format!(
            "{} certificate does not fit this task",
            kind.name()
        )));
    }
    let [acc] = try_monte_carlo(n, |i| {
        let (_, y, y2) = spec.draw_paired(seed, i)?;
        Ok([eval_b(kind, &y, &y2)?])
    })?;
    Ok(acc.estimate(seed))
}

/// Both sides of the general lower bound, on shared samples.
///
/// For the least-squares and KL pairs `B = ‖·‖₁²/6`, so the smoothness term
/// is `L_ε / 6`; for the 0/1 loss it is the probability of leaving every
/// ε-core.
pub fn theorem1_report(
    predictor: &Predictor,
    kind: LossKind,
    spec: &DataSpec,
    eps: f64,
    norm: NormSpec,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_eps(eps)?;
    check_compat(predictor, kind, spec)?;
    let [standard, adversarial, lhs, smooth, label, inexact] = try_monte_carlo(n, |i| {
        let (x, y, y2) = spec.draw_paired(seed, i)?;
        let std = eval_loss(kind, &output(predictor, kind, &x)?, &y)?;
        let stream = perturbation_stream(seed, i);
        let (adv, adv_exact) = adversarial_loss(predictor, kind, &x, &y, eps, norm, stream)?;
        let (sm, sm_exact) = match (predictor, kind) {
            (Predictor::Linear(c), LossKind::ZeroOne) => (adv01_loss_exact(c, &x, eps, norm)?, true),
            _ => local_deviation_sq(predictor, &x, eps, norm, stream)?,
        };
        let inexact = if adv_exact && sm_exact { 0.0 } else { 1.0 };
        Ok([std, adv, std + adv, sm, eval_b(kind, &y, &y2)?, inexact])
    })?;
    let exact = inexact.sum() == 0.0;
    let raw_smooth = smooth.estimate(seed).with_lower_bound(!exact);
    let (smoothness_term, local) = match kind {
        LossKind::ZeroOne => (raw_smooth, None),
        _ => (
            Estimate {
                value: raw_smooth.value / 6.0,
                std_error: raw_smooth.std_error / 6.0,
                ..raw_smooth
            },
            Some(raw_smooth),
        ),
    };
    let label_term = label.estimate(seed);
    let lhs = lhs.estimate(seed).with_lower_bound(!exact);
    let (bound, combined_se, passed) = verdict(&lhs, &smoothness_term, &label_term);
    Ok(BoundReport {
        smoothness_term,
        label_term,
        bound,
        lhs,
        standard: standard.estimate(seed),
        adversarial: adversarial.estimate(seed).with_lower_bound(!exact),
        local_smoothness: local,
        in_core_frequency: None,
        combined_se,
        verdict: passed,
        exact,
    })
}

/// `½E(⟨X,θ⟩^p − ⟨X,θ*⟩^p)² + ½σ²`, the noise-free decomposition of the
/// least-squares standard risk of a ridge model, on the same `X` samples.
pub fn ridge_risk_decomposition(
    model: &RidgeModel,
    spec: &DataSpec,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    let crate::Task::Regression {
        theta_star,
        degree,
        sigma2,
        ..
    } = &spec.task
    else {
        return Err(Error::Incompatible("decomposition needs a regression spec".into()));
    };
    ensure_dim(spec.dim(), model.dim())?;
    let truth = RidgeModel::new(theta_star.clone(), *degree)?;
    let [acc] = try_monte_carlo(n, |i| {
        let x = spec.sample_x(SampleStream::for_sample(seed, i, Channel::Input));
        Ok([0.5 * (model.predict(&x)? - truth.predict(&x)?).powi(2) + 0.5 * sigma2])
    })?;
    Ok(acc.estimate(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointwiseCheck {
    pub ineq1: bool,
    pub ineq2: bool,
    /// `ℓ(u,y) + ℓ(u2,y) − B(u,u2)`
    pub slack1: f64,
    /// `ℓ(u,y) + ℓ(u2,y2) + A(u,u2) − B(y,y2)`
    pub slack2: f64,
}

/// The two per-sample inequalities behind the bound, before any supremum:
/// `ℓ(u,y) + ℓ(u2,y) ≥ B(u,u2)` and `ℓ(u,y) + ℓ(u2,y2) ≥ B(y,y2) − A(u,u2)`,
/// with `u = f(x)` and `u2 = f(x+Δ)`.
pub fn pointwise_check(
    kind: LossKind,
    u: &[f64],
    u2: &[f64],
    y: &[f64],
    y2: &[f64],
) -> Result<PointwiseCheck> {
    let base = eval_loss(kind, u, y)?;
    let slack1 = base + eval_loss(kind, u2, y)? - eval_b(kind, u, u2)?;
    let slack2 = base + eval_loss(kind, u2, y2)? + eval_a(kind, u, u2)? - eval_b(kind, y, y2)?;
    Ok(PointwiseCheck {
        ineq1: slack1 >= -CONDITION_TOL,
        ineq2: slack2 >= -CONDITION_TOL,
        slack1,
        slack2,
    })
}

#[doc(hidden)]
pub fn zero_one_on_scores(u: &[f64], v: &[f64]) -> f64 {
    zero_one(u, v)
}
