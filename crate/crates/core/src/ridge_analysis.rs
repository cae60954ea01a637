//! Closed-form bounds for least squares over ridge functions
//! `f_θ(x) = ⟨θ, x⟩^p`, and a Monte Carlo harness that checks each step of
//! the derivation of the smoothness lower bound.

use serde::Serialize;

use crate::distributions::{DataSpec, Task};
use crate::error::{ensure_dim, Error, Result};
use crate::models::{check_eps, RidgeModel};
use crate::numerics::{
    dot, monte_carlo, p_norm, sigma_norm, Channel, Estimate, NormSpec, SampleStream,
};

/// Standard errors allowed on each chain link.
pub const CHAIN_SE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgeBoundInputs {
    /// `‖θ‖_Σ`
    pub theta_sigma: f64,
    /// `‖θ‖_*`
    pub theta_dual: f64,
    pub degree: u32,
    pub eps: f64,
    pub sigma2: f64,
}

impl RidgeBoundInputs {
    pub fn new(theta_sigma: f64, theta_dual: f64, degree: u32, eps: f64, sigma2: f64) -> Result<Self> {
        let fields = [
            ("theta_sigma", theta_sigma),
            ("theta_dual", theta_dual),
            ("eps", eps),
            ("sigma2", sigma2),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || v.is_infinite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if degree == 0 {
            return Err(Error::InvalidInput("degree must be >= 1".into()));
        }
        Ok(Self { theta_sigma, theta_dual, degree, eps, sigma2 })
    }

    /// Inputs for the model `θ` under the law `spec`, with perturbations
    /// measured in `norm`.
    pub fn from_model(model: &RidgeModel, spec: &DataSpec, eps: f64, norm: NormSpec) -> Result<Self> {
        ensure_dim(spec.dim(), model.dim())?;
        let sigma2 = spec
            .sigma2()
            .ok_or_else(|| Error::Incompatible("ridge bounds need a regression spec".into()))?;
        Self::new(
            sigma_norm(&model.theta, &spec.covariance)?,
            p_norm(&model.theta, norm.dual_exponent()),
            model.degree,
            eps,
            sigma2,
        )
    }

    /// `(‖θ‖_Σ + ‖θ‖_*ε)^p − ‖θ‖_Σ^p`
    fn growth(&self) -> f64 {
        let p = self.degree as i32;
        ((self.theta_sigma + self.theta_dual * self.eps).powi(p) - self.theta_sigma.powi(p)).max(0.0)
    }
}

/// `L_ε(f_θ) ≥ ½((‖θ‖_Σ + ‖θ‖_*ε)^p − ‖θ‖_Σ^p)²`
pub fn l_eps_lower_bound(inputs: &RidgeBoundInputs) -> f64 {
    0.5 * inputs.growth().powi(2)
}

/// `R + R_ε ≥ max{(1/12)((‖θ‖_Σ + ‖θ‖_*ε)^p − ‖θ‖_Σ^p)², σ²/3}`
pub fn tradeoff_bound(inputs: &RidgeBoundInputs) -> f64 {
    (inputs.growth().powi(2) / 12.0).max(inputs.sigma2 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonThreshold {
    /// `min(linear_branch, root_branch)`
    pub value: f64,
    /// `(C_p^p / p)·√(λ*/SNR_p)`
    pub linear_branch: f64,
    /// `C_p·√(λ*/SNR_p^{1/p})`
    pub root_branch: f64,
}

/// Perturbation size below which a ridge model can be accurate and robust
/// at once, up to constants.
pub fn epsilon_threshold(p: u32, c_p: f64, lambda_star: f64, snr_p: f64) -> Result<EpsilonThreshold> {
    if p == 0 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    for (name, v) in [("c_p", c_p), ("lambda_star", lambda_star)] {
        if !(v > 0.0) || v.is_infinite() {
            return Err(Error::InvalidInput(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    if !(snr_p > 0.0) {
        return Err(Error::InvalidInput(format!("SNR must be > 0, got {snr_p}")));
    }
    let linear_branch = c_p.powi(p as i32) / p as f64 * (lambda_star / snr_p).sqrt();
    let root_branch = c_p * (lambda_star / snr_p.powf(1.0 / p as f64)).sqrt();
    Ok(EpsilonThreshold {
        value: linear_branch.min(root_branch),
        linear_branch,
        root_branch,
    })
}

/// Both sides of `(1 + ε/√λ*)^p − 1 ≥ max{pε/√λ*, (ε/√λ*)^p}`.
pub fn growth_inequality(eps: f64, lambda_star: f64, p: u32) -> (f64, f64) {
    let r = eps / lambda_star.sqrt();
    let lhs = (1.0 + r).powi(p as i32) - 1.0;
    (lhs, (p as f64 * r).max(r.powi(p as i32)))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Equal,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLink {
    pub from: &'static str,
    pub to: &'static str,
    pub relation: Relation,
    /// `term(from) − term(to)`, paired on shared samples where both are random.
    pub difference: Estimate,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainAudit {
    pub inputs: RidgeBoundInputs,
    /// `(name, value)` in chain order.
    pub terms: Vec<(&'static str, Estimate)>,
    pub links: Vec<ChainLink>,
    pub all_hold: bool,
}

pub const CHAIN_TERMS: [&str; 7] = [
    "power-difference",
    "binomial-expansion",
    "truncated-plus-top",
    "double-sum",
    "moment-lower-bounded",
    "squared-sum",
    "half-power-difference",
];

/// Evaluates every displayed quantity in the derivation of
/// [`l_eps_lower_bound`] for the model `θ` and checks each link.
///
/// With `s = |⟨θ,X⟩|`, `t = ‖θ‖_*ε` and `σ_θ = ‖θ‖_Σ` the terms are
/// `E((s+t)^p − s^p)²`, `E(Σ_{k≤p} C(p,k)s^{p−k}t^k)²`,
/// `t^{2p} + E(Σ_{k<p} C(p,k)s^{p−k}t^k)²`, its double-sum form, the same
/// with `E s^m` replaced by `σ_θ^m`, the squared-sum form of that, and
/// `½((σ_θ+t)^p − σ_θ^p)²`.
pub fn binomial_chain_audit(
    model: &RidgeModel,
    spec: &DataSpec,
    eps: f64,
    norm: NormSpec,
    n: usize,
    seed: u64,
) -> Result<ChainAudit> {
    check_eps(eps)?;
    if !matches!(spec.task, Task::Regression { .. }) {
        return Err(Error::Incompatible("chain audit needs a regression spec".into()));
    }
    let inputs = RidgeBoundInputs::from_model(model, spec, eps, norm)?;
    let p = model.degree;
    let t = inputs.theta_dual * eps;
    let top = t.powi(2 * p as i32);
    let coef: Vec<f64> = (0..=p).map(|k| binomial(p, k)).collect();

    let sample = |i: usize| -> [f64; 7] {
        let x = spec.sample_x(SampleStream::for_sample(seed, i, Channel::Input));
        let s = dot(&model.theta, &x).abs();
        let t0 = ((s + t).powi(p as i32) - s.powi(p as i32)).powi(2);
        let partial = |upto: u32| -> f64 {
            (1..=upto).map(|k| coef[k as usize] * s.powi((p - k) as i32) * t.powi(k as i32)).sum()
        };
        let t1 = partial(p).powi(2);
        let t2 = top + partial(p - 1).powi(2);
        let mut t3 = top;
        for j in 1..p {
            for k in 1..p {
                t3 += coef[j as usize]
                    * coef[k as usize]
                    * s.powi((2 * p - j - k) as i32)
                    * t.powi((j + k) as i32);
            }
        }
        [t0, t1, t2, t3, t0 - t1, t1 - t2, t2 - t3]
    };
    let acc = monte_carlo(n, sample);
    let est = |i: usize| acc[i].estimate(seed);

    let st = inputs.theta_sigma;
    let mut t4 = top;
    for j in 1..p {
        for k in 1..p {
            t4 += coef[j as usize] * coef[k as usize] * st.powi((2 * p - j - k) as i32) * t.powi((j + k) as i32);
        }
    }
    let inner: f64 = (1..p).map(|k| coef[k as usize] * st.powi((p - k) as i32) * t.powi(k as i32)).sum();
    let t5 = top + inner * inner;
    let t6 = l_eps_lower_bound(&inputs);

    let terms: Vec<(&'static str, Estimate)> = vec![
        (CHAIN_TERMS[0], est(0)),
        (CHAIN_TERMS[1], est(1)),
        (CHAIN_TERMS[2], est(2)),
        (CHAIN_TERMS[3], est(3)),
        (CHAIN_TERMS[4], Estimate::exact(t4, seed)),
        (CHAIN_TERMS[5], Estimate::exact(t5, seed)),
        (CHAIN_TERMS[6], Estimate::exact(t6, seed)),
    ];

    // Closed-form links get a rounding allowance instead of a standard error.
    let round = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let paired = |from: usize, to: usize, relation: Relation, diff: Estimate| {
        let slack = CHAIN_SE * diff.std_error + round(terms[from].1.value, terms[to].1.value);
        let holds = match relation {
            Relation::Equal => diff.value.abs() <= slack,
            Relation::AtLeast => diff.value >= -slack,
        };
        ChainLink { from: terms[from].0, to: terms[to].0, relation, difference: diff, holds }
    };
    let gap = |from: usize, to: usize| {
        let a = &terms[from].1;
        let b = &terms[to].1;
        Estimate {
            value: a.value - b.value,
            std_error: (a.std_error.powi(2) + b.std_error.powi(2)).sqrt(),
            ..*a
        }
    };
    let links = vec![
        paired(0, 1, Relation::Equal, est(4)),
        paired(1, 2, Relation::AtLeast, est(5)),
        paired(2, 3, Relation::Equal, est(6)),
        paired(3, 4, Relation::AtLeast, gap(3, 4)),
        paired(4, 5, Relation::Equal, gap(4, 5)),
        paired(5, 6, Relation::AtLeast, gap(5, 6)),
    ];
    let all_hold = links.iter().all(|l| l.holds);
    Ok(ChainAudit { inputs, terms, links, all_hold })
}
