//! The three losses and their certificate pairs `(A, B)`.
//!
//! A certificate pair satisfies, for all `(u, v)` and `(u', v')`,
//!
//! ```text
//! ℓ(u, v) + ℓ(u', v') + A(u, u') ≥ B(v, v')
//! ℓ(u, v) + ℓ(u', v') + A(v, v') ≥ B(u, u')
//! ```
//!
//! with `A(u, u) = B(u, u) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::p_norm;

/// Additive tolerance used by every inequality check on certificate pairs.
pub const CONDITION_TOL: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `(u − v)² / 2` on scalars.
    LeastSquares,
    /// `Σ v_j log(v_j / u_j)` on the simplex.
    KullbackLeibler,
    /// Misclassification indicator.
    ZeroOne,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::LeastSquares => "ls",
            LossKind::KullbackLeibler => "kl",
            LossKind::ZeroOne => "zero-one",
        }
    }
}

/// Index of the strictly largest entry, or `None` on a tie for the maximum.
pub fn unique_argmax(u: &[f64]) -> Option<usize> {
    let mut best = 0;
    for i in 1..u.len() {
        if u[i] > u[best] {
            best = i;
        }
    }
    let unique = u
        .iter()
        .enumerate()
        .all(|(j, &x)| j == best || u[best] > x);
    if u.is_empty() || !unique {
        None
    } else {
        Some(best)
    }
}

/// `0` iff `u = v` or both share the same unique argmax.
pub fn zero_one(u: &[f64], v: &[f64]) -> f64 {
    if u == v {
        return 0.0;
    }
    match (unique_argmax(u), unique_argmax(v)) {
        (Some(i), Some(j)) if i == j => 0.0,
        _ => 1.0,
    }
}

fn check_pair(kind: LossKind, u: &[f64], v: &[f64]) -> Result<()> {
    ensure_dim(u.len(), v.len())?;
    match kind {
        LossKind::LeastSquares => ensure_dim(1, u.len()),
        LossKind::KullbackLeibler | LossKind::ZeroOne => {
            if u.len() < 2 {
                Err(Error::InvalidInput(format!(
                    "{} needs k >= 2 outputs, got {}",
                    kind.name(),
                    u.len()
                )))
            } else {
                Ok(())
            }
        }
    }
}

fn check_closed_simplex(v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput("point is not in the simplex".into()));
    }
    Ok(())
}

fn kl(u: &[f64], v: &[f64]) -> Result<f64> {
    check_closed_simplex(u)?;
    check_closed_simplex(v)?;
    let mut acc = 0.0;
    for (&uj, &vj) in u.iter().zip(v) {
        if vj == 0.0 {
            continue;
        }
        if uj <= 0.0 {
            return Err(Error::InvalidInput(
                "KL prediction has a zero coordinate where the target is positive".into(),
            ));
        }
        acc += vj * (vj / uj).ln();
    }
    // Rounding can leave a tiny negative value for u ≈ v.
    Ok(acc.max(0.0))
}

fn l1_sq(u: &[f64], v: &[f64]) -> f64 {
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let n = p_norm(&diff, 1.0);
    n * n
}

pub fn eval_loss(kind: LossKind, u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(kind, u, v)?;
    match kind {
        LossKind::LeastSquares => Ok(0.5 * (u[0] - v[0]).powi(2)),
        LossKind::KullbackLeibler => kl(u, v),
        LossKind::ZeroOne => Ok(zero_one(u, v)),
    }
}

pub fn eval_a(kind: LossKind, u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(kind, u, v)?;
    Ok(match kind {
        LossKind::LeastSquares => 0.5 * (u[0] - v[0]).powi(2),
        LossKind::KullbackLeibler => 0.5 * l1_sq(u, v),
        LossKind::ZeroOne => zero_one(u, v),
    })
}

pub fn eval_b(kind: LossKind, u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(kind, u, v)?;
    Ok(match kind {
        LossKind::LeastSquares => (u[0] - v[0]).powi(2) / 6.0,
        LossKind::KullbackLeibler => l1_sq(u, v) / 6.0,
        LossKind::ZeroOne => zero_one(u, v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCheck {
    pub cond1: bool,
    pub cond2: bool,
    /// `ℓ(u,v) + ℓ(u2,v2) + A(u,u2) − B(v,v2)`
    pub slack1: f64,
    /// `ℓ(u,v) + ℓ(u2,v2) + A(v,v2) − B(u,u2)`
    pub slack2: f64,
}

/// Evaluates both pairwise certificate conditions on `(u, v)` and `(u2, v2)`.
pub fn check_pair_conditions(
    kind: LossKind,
    u: &[f64],
    v: &[f64],
    u2: &[f64],
    v2: &[f64],
) -> Result<PairCheck> {
    let losses = eval_loss(kind, u, v)? + eval_loss(kind, u2, v2)?;
    let slack1 = losses + eval_a(kind, u, u2)? - eval_b(kind, v, v2)?;
    let slack2 = losses + eval_a(kind, v, v2)? - eval_b(kind, u, u2)?;
    Ok(PairCheck {
        cond1: slack1 >= -CONDITION_TOL,
        cond2: slack2 >= -CONDITION_TOL,
        slack1,
        slack2,
    })
}
