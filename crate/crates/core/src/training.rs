//! Gradient-descent fitting of ridge models under the least-squares loss,
//! nominal (ERM) or adversarial, and sweeps of the adversarial fit over a grid
//! of perturbation radii.
//!
//! The adversarial objective `(1/n) Σ sup_{‖Δ‖≤ε} ½(⟨θ, x_i+Δ⟩^p − y_i)²` has
//! an exact inner maximiser, so its gradient follows Danskin's rule: the
//! per-sample gradient is the gradient of the loss at the maximising score,
//! `z = s ± ε‖θ‖_*`. Ties between endpoints go to the lower one.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DataSpec;
use crate::error::{ensure_dim, Error, Result};
use crate::losses::LossKind;
use crate::models::{check_eps, RidgeModel, WorstScore};
use crate::numerics::{dot, dual_attainment, Channel, Estimate, NormSpec, SampleStream, CHUNK};
use crate::ridge_analysis::{l_eps_lower_bound, tradeoff_bound, RidgeBoundInputs};
use crate::risk::{theorem1_report, Predictor, VERDICT_SE};

/// Objective value treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Halvings tried before a step is given up.
pub const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Init {
    Zero,
    Gaussian { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// `η₀`; step `t` uses `η₀/√t` before halving.
    pub step_size: f64,
    pub iterations: usize,
    /// Training sample count.
    pub n: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            iterations: 500,
            n: 2000,
            init: Init::Zero,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidInput(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("training sample count must be >= 1".into()));
        }
        if let Init::Gaussian { scale } = self.init {
            if !(scale >= 0.0) || !scale.is_finite() {
                return Err(Error::InvalidInput(format!("init scale must be >= 0, got {scale}")));
            }
        }
        Ok(())
    }

    pub fn initial_theta(&self, d: usize) -> Vec<f64> {
        match self.init {
            Init::Zero => vec![0.0; d],
            Init::Gaussian { scale } => {
                let mut rng = SampleStream::for_sample(self.seed, 0, Channel::Parameters).rng();
                (0..d)
                    .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        ensure_dim(x.len(), y.len())?;
        let d = x[0].len();
        for row in &x {
            ensure_dim(d, row.len())?;
        }
        Ok(Self { x, y })
    }

    /// `n` draws from a regression spec, sample `i` from the streams of index `i`.
    pub fn sample(spec: &DataSpec, n: usize, seed: u64) -> Result<Self> {
        if !spec.is_regression() {
            return Err(Error::Incompatible("training needs a regression spec".into()));
        }
        let (x, y): (Vec<_>, Vec<_>) = (0..n)
            .into_par_iter()
            .map(|i| spec.draw(seed, i).map(|(x, y)| (x, y[0])))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    /// Objective before the first step, then after every iteration.
    pub trace: Vec<f64>,
    pub accepted_steps: usize,
}

/// Per-sample loss and its (Danskin) gradient in `θ`.
pub fn adversarial_gradient(
    theta: &[f64],
    x: &[f64],
    y: f64,
    degree: u32,
    eps: f64,
    norm: NormSpec,
) -> Result<(f64, Vec<f64>)> {
    check_eps(eps)?;
    let model = RidgeModel::new(theta.to_vec(), degree)?;
    let s = model.score(x)?;
    let radius = model.score_radius(eps, norm);
    let attain = dual_attainment(theta, norm);
    let mut grad = vec![0.0; x.len()];
    let loss = sample_loss_grad(&model, x, y, s, eps, radius, &attain, Some(&mut grad));
    Ok((loss, grad))
}

/// Loss at one sample; adds its gradient to `grad` when given. `attain` is
/// the gradient of `‖θ‖_*`.
#[allow(clippy::too_many_arguments)]
fn sample_loss_grad(
    model: &RidgeModel,
    x: &[f64],
    y: f64,
    s: f64,
    eps: f64,
    radius: f64,
    attain: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let p = model.degree as i32;
    let (z, direction) = if radius > 0.0 {
        let scores = crate::models::Interval { lo: s - radius, hi: s + radius };
        let worst = model.worst_over_scores(s, scores, y);
        match worst.side {
            WorstScore::Lower => (worst.argmax_score, -1.0),
            WorstScore::Upper => (worst.argmax_score, 1.0),
            // ½y² does not depend on θ
            WorstScore::Zero => return worst.value,
        }
    } else {
        (s, 0.0)
    };
    let residual = z.powi(p) - y;
    if let Some(grad) = grad {
        let scale = residual * p as f64 * z.powi(p - 1);
        for ((gi, xi), ai) in grad.iter_mut().zip(x).zip(attain) {
            let mut v = scale * xi;
            if radius > 0.0 {
                v += scale * direction * eps * ai;
            }
            *gi += v;
        }
    }
    0.5 * residual * residual
}

/// Empirical objective and its gradient, summed chunk by chunk in index order.
fn objective(
    data: &Dataset,
    theta: &[f64],
    degree: u32,
    eps: f64,
    norm: NormSpec,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let model = RidgeModel::new(theta.to_vec(), degree)?;
    let radius = model.score_radius(eps, norm);
    let attain = dual_attainment(theta, norm);
    let d = data.dim();
    let partials: Vec<(f64, Vec<f64>)> = (0..data.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; if with_grad { d } else { 0 }];
            for i in c * CHUNK..((c + 1) * CHUNK).min(data.len()) {
                let x = &data.x[i];
                let s = dot(theta, x);
                let g = with_grad.then_some(grad.as_mut_slice());
                loss += sample_loss_grad(&model, x, data.y[i], s, eps, radius, &attain, g);
            }
            (loss, grad)
        })
        .collect();
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss / n, grad.into_iter().map(|g| g / n).collect()))
}

/// Empirical adversarial risk `(1/n) Σ sup_{‖Δ‖≤ε} ½(⟨θ, x_i+Δ⟩^p − y_i)²`.
pub fn empirical_objective(data: &Dataset, theta: &[f64], degree: u32, eps: f64, norm: NormSpec) -> Result<f64> {
    check_eps(eps)?;
    ensure_dim(data.dim(), theta.len())?;
    Ok(objective(data, theta, degree, eps, norm, false)?.0)
}

/// Gradient descent from `theta0` with step `η₀/√t`, halved until the
/// objective does not increase.
pub fn adversarial_fit_from(
    data: &Dataset,
    theta0: Vec<f64>,
    degree: u32,
    eps: f64,
    norm: NormSpec,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    check_eps(eps)?;
    ensure_dim(data.dim(), theta0.len())?;
    let mut theta = theta0;
    let (mut current, mut grad) = objective(data, &theta, degree, eps, norm, true)?;
    let mut trace = vec![current];
    let diverged = |iteration: usize, objective: f64, trace: &[f64]| Error::Diverged {
        iteration,
        objective,
        trace: trace.to_vec(),
    };
    if !(current <= DIVERGENCE_LIMIT) {
        return Err(diverged(0, current, &trace));
    }
    let mut accepted_steps = 0;
    for t in 1..=cfg.iterations {
        if grad.iter().all(|&g| g == 0.0) {
            trace.push(current);
            continue;
        }
        let mut step = cfg.step_size / (t as f64).sqrt();
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = theta.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let (value, _) = objective(data, &candidate, degree, eps, norm, false)?;
            if value <= current {
                let (_, g) = objective(data, &candidate, degree, eps, norm, true)?;
                theta = candidate;
                current = value;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(diverged(t, current, &trace));
        }
        accepted_steps += accepted as usize;
        trace.push(current);
    }
    Ok(FitResult { theta, trace, accepted_steps })
}

/// Minimises the empirical least-squares risk.
pub fn erm_fit(data: &Dataset, degree: u32, cfg: &TrainConfig) -> Result<FitResult> {
    adversarial_fit_from(data, cfg.initial_theta(data.dim()), degree, 0.0, NormSpec::L2, cfg)
}

/// Minimises the empirical adversarial least-squares risk.
pub fn adversarial_fit(
    data: &Dataset,
    degree: u32,
    eps: f64,
    norm: NormSpec,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    adversarial_fit_from(data, cfg.initial_theta(data.dim()), degree, eps, norm, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub eps: f64,
    pub theta_hat: Vec<f64>,
    pub standard: Estimate,
    pub adversarial: Estimate,
    /// `R + R_ε` from per-sample sums.
    pub lhs: Estimate,
    pub local_smoothness: Estimate,
    /// Closed-form `L_ε` lower bound at `θ̂`.
    pub l_eps_bound: f64,
    /// Closed-form trade-off bound at `θ̂`.
    pub bound: f64,
    pub final_objective: f64,
    /// `lhs + 3·SE ≥ bound`
    pub verdict: bool,
    /// Set when the fit or the evaluation failed; the estimates are then NaN.
    pub failed: Option<String>,
}

pub fn failed_row(eps: f64, reason: String, seed: u64) -> FrontierRow {
    let nan = Estimate { value: f64::NAN, std_error: f64::NAN, n: 0, seed, lower_bound: false };
    FrontierRow {
        eps,
        theta_hat: Vec::new(),
        standard: nan,
        adversarial: nan,
        lhs: nan,
        local_smoothness: nan,
        l_eps_bound: f64::NAN,
        bound: f64::NAN,
        final_objective: f64::NAN,
        verdict: false,
        failed: Some(reason),
    }
}

/// Adversarial fit at radius `eps` followed by a population evaluation of
/// the fitted model on `eval_n` fresh samples.
#[allow(clippy::too_many_arguments)]
pub fn train_and_evaluate(
    spec: &DataSpec,
    data: &Dataset,
    eps: f64,
    norm: NormSpec,
    cfg: &TrainConfig,
    eval_n: usize,
    eval_seed: u64,
) -> Result<(FitResult, FrontierRow)> {
    let crate::Task::Regression { degree, .. } = spec.task else {
        return Err(Error::Incompatible("training needs a regression spec".into()));
    };
    let fit = adversarial_fit(data, degree, eps, norm, cfg)?;
    let model = RidgeModel::new(fit.theta.clone(), degree)?;
    let report = theorem1_report(
        &Predictor::Ridge(model.clone()),
        LossKind::LeastSquares,
        spec,
        eps,
        norm,
        eval_n,
        eval_seed,
    )?;
    let inputs = RidgeBoundInputs::from_model(&model, spec, eps, norm)?;
    let bound = tradeoff_bound(&inputs);
    let lhs = report.lhs;
    let row = FrontierRow {
        eps,
        theta_hat: fit.theta.clone(),
        standard: report.standard,
        adversarial: report.adversarial,
        lhs,
        local_smoothness: report.local_smoothness.unwrap_or(report.smoothness_term),
        l_eps_bound: l_eps_lower_bound(&inputs),
        bound,
        final_objective: *fit.trace.last().unwrap_or(&f64::NAN),
        verdict: lhs.value + VERDICT_SE * lhs.std_error >= bound,
        failed: None,
    };
    Ok((fit, row))
}

/// Adversarial fits on one training sample (seed `cfg.seed`) for each radius
/// in `grid`, each evaluated on fresh samples (seed `eval_seed`).
pub fn frontier_sweep(
    spec: &DataSpec,
    grid: &[f64],
    norm: NormSpec,
    cfg: &TrainConfig,
    eval_n: usize,
    eval_seed: u64,
) -> Result<Vec<FrontierRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("radius grid is empty".into()));
    }
    for &eps in grid {
        check_eps(eps)?;
    }
    cfg.validate()?;
    let data = Dataset::sample(spec, cfg.n, cfg.seed)?;
    Ok(grid
        .par_iter()
        .map(|&eps| match train_and_evaluate(spec, &data, eps, norm, cfg, eval_n, eval_seed) {
            Ok((_, row)) => row,
            Err(e) => failed_row(eps, e.to_string(), eval_seed),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{NoiseFamily, XFamily};
    use crate::numerics::Covariance;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn spec(theta_star: &[f64], p: u32, sigma2: f64) -> DataSpec {
        DataSpec::regression(
            Covariance::identity(theta_star.len()),
            XFamily::Gaussian,
            theta_star.to_vec(),
            p,
            NoiseFamily::Gaussian,
            sigma2,
        )
        .unwrap()
    }

    fn cfg(step: f64, iters: usize, n: usize) -> TrainConfig {
        TrainConfig { step_size: step, iterations: iters, n, init: Init::Zero, seed: 3 }
    }

    #[test]
    fn erm_matches_least_squares_solve() {
        let star = [1.0, -0.5, 0.25, 2.0, 0.0];
        let s = spec(&star, 1, 0.0);
        let c = cfg(0.5, 2000, 200);
        let data = Dataset::sample(&s, c.n, c.seed).unwrap();
        let fit = erm_fit(&data, 1, &c).unwrap();
        let x = DMatrix::from_fn(data.len(), 5, |i, j| data.x[i][j]);
        let y = DVector::from_vec(data.y.clone());
        let solve = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
        let err: f64 = fit.theta.iter().zip(solve.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-3, "{err}");
        let err_star: f64 = fit.theta.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err_star < 1e-3, "{err_star}");
    }

    #[test]
    fn erm_interpolates_single_point() {
        let data = Dataset::new(vec![vec![2.0]], vec![4.0]).unwrap();
        let fit = erm_fit(&data, 1, &cfg(0.1, 2000, 1)).unwrap();
        assert_relative_eq!(fit.theta[0], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn stationary_at_truth_without_noise() {
        let star = vec![0.7, -1.2];
        let s = spec(&star, 2, 0.0);
        let data = Dataset::sample(&s, 300, 1).unwrap();
        let fit = adversarial_fit_from(&data, star.clone(), 2, 0.0, NormSpec::L2, &cfg(0.1, 20, 300)).unwrap();
        assert_eq!(fit.theta, star);
        assert!(fit.trace.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_radius_matches_erm_bitwise() {
        let s = spec(&[1.0, 0.5], 3, 0.5);
        let mut c = cfg(0.05, 100, 500);
        c.init = Init::Gaussian { scale: 0.5 };
        let data = Dataset::sample(&s, c.n, c.seed).unwrap();
        let erm = erm_fit(&data, 3, &c).unwrap();
        for norm in [NormSpec::L1, NormSpec::L2, NormSpec::LINF] {
            let adv = adversarial_fit(&data, 3, 0.0, norm, &c).unwrap();
            assert!(erm.theta.iter().zip(&adv.theta).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(erm.trace.iter().zip(&adv.trace).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn objective_never_increases() {
        for p in 1..=3 {
            let s = spec(&[1.0, -0.5], p, 0.3);
            let mut c = cfg(0.5, 150, 400);
            c.init = Init::Gaussian { scale: 1.0 };
            let data = Dataset::sample(&s, c.n, c.seed).unwrap();
            let fit = adversarial_fit(&data, p, 0.3, NormSpec::LINF, &c).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }

    #[test]
    fn danskin_gradient_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = SampleStream::new(11, 0).rng();
        let mut checked = 0;
        for trial in 0..300 {
            let d = 1 + trial % 4;
            let p = 1 + (trial % 3) as u32;
            let norm = [NormSpec::L2, NormSpec::LINF][trial % 2];
            let g = |rng: &mut _| -> f64 { StandardNormal.sample(rng) };
            let theta: Vec<f64> = (0..d).map(|_| g(&mut rng)).collect();
            let x: Vec<f64> = (0..d).map(|_| g(&mut rng)).collect();
            let y = g(&mut rng);
            let eps = 0.2;
            let (_, grad) = adversarial_gradient(&theta, &x, y, p, eps, norm).unwrap();
            let f = |t: &[f64]| {
                RidgeModel::new(t.to_vec(), p).unwrap().worst_case_ls_loss(&x, y, eps, norm).unwrap().value
            };
            // skip near-ties between endpoints and kinks of the dual norm
            let m = RidgeModel::new(theta.clone(), p).unwrap();
            let iv = m.score_interval(&x, eps, norm).unwrap();
            let loss = |z: f64| 0.5 * (z.powi(p as i32) - y).powi(2);
            if (loss(iv.lo) - loss(iv.hi)).abs() < 1e-3 || theta.iter().any(|t| t.abs() < 1e-3) {
                continue;
            }
            for j in 0..d {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[j] += h;
                b[j] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                let scale = grad[j].abs().max(1e-3);
                assert!((fd - grad[j]).abs() <= 1e-4 * scale, "fd {fd} vs {}", grad[j]);
            }
            checked += 1;
        }
        assert!(checked > 150);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = Dataset::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(erm_fit(&data, 1, &cfg(0.0, 10, 1)).is_err());
        assert!(erm_fit(&data, 1, &cfg(0.1, 0, 1)).is_err());
        assert!(adversarial_fit(&data, 1, -1.0, NormSpec::L2, &cfg(0.1, 10, 1)).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(frontier_sweep(&spec(&[1.0], 1, 1.0), &[], NormSpec::L2, &cfg(0.1, 10, 10), 10, 0).is_err());
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let data = Dataset::new(vec![vec![1e4]], vec![0.0]).unwrap();
        let r = adversarial_fit_from(&data, vec![1e3], 3, 0.0, NormSpec::L2, &cfg(0.1, 5, 1));
        assert!(matches!(r, Err(Error::Diverged { iteration: 0, .. })));
    }

    #[test]
    fn zero_crossing_symmetric_start_is_deterministic() {
        let data = Dataset::new(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let a = adversarial_fit(&data, 2, 0.5, NormSpec::L2, &cfg(0.1, 50, 2)).unwrap();
        let b = adversarial_fit(&data, 2, 0.5, NormSpec::L2, &cfg(0.1, 50, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.theta[0].is_finite());
    }

    #[test]
    fn frontier_rows_in_grid_order() {
        let s = spec(&[1.0, -0.5], 1, 0.5);
        let grid = [0.0, 0.1, 0.3];
        let rows = frontier_sweep(&s, &grid, NormSpec::L2, &cfg(0.3, 200, 500), 5000, 9).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, eps) in rows.iter().zip(grid) {
            assert_eq!(row.eps, eps);
            assert!(row.failed.is_none());
            assert!(row.verdict);
            assert!(row.adversarial.value >= row.standard.value);
            let td: f64 = row.theta_hat.iter().map(|t| t * t).sum::<f64>().sqrt();
            assert_relative_eq!(row.local_smoothness.value, (eps * td).powi(2), max_relative = 1e-9, epsilon = 1e-300);
        }
        assert_eq!(rows[0].bound, 0.5 / 3.0);
    }
}
