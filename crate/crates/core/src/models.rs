//! Polynomial ridge predictors `x ↦ ⟨θ, x⟩^p` and affine softmax classifiers,
//! with exact analysis of how their outputs move over a norm ball.
//!
//! Every perturbation question about a ridge model reduces to the scalar
//! score `⟨θ, x + Δ⟩`, which ranges over `[s − r, s + r]` with `s = ⟨θ, x⟩`
//! and `r = ε‖θ‖_*`. The remaining work is the image of that interval under
//! `z ↦ z^p`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::losses::unique_argmax;
use crate::numerics::{check_finite, dot, p_norm, NormSpec};

/// Floor applied by the softmax head so predictions stay in the open simplex.
pub const SOFTMAX_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "perturbation radius must be finite and >= 0, got {eps}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub theta: Vec<f64>,
    pub degree: u32,
}

/// Which point of the score interval realises the worst-case loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorstScore {
    Lower,
    /// Score zero, interior to the interval (even degree only).
    Zero,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseLoss {
    pub value: f64,
    pub argmax_score: f64,
    pub side: WorstScore,
}

impl RidgeModel {
    pub fn new(theta: Vec<f64>, degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidInput("ridge degree must be >= 1".into()));
        }
        check_finite(&theta)?;
        Ok(Self { theta, degree })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn pow(&self, z: f64) -> f64 {
        z.powi(self.degree as i32)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.dim(), x.len())?;
        Ok(dot(&self.theta, x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.pow(self.score(x)?))
    }

    /// `ε‖θ‖_*`: how far the score can move over the ε-ball.
    pub fn score_radius(&self, eps: f64, spec: NormSpec) -> f64 {
        eps * p_norm(&self.theta, spec.dual_exponent())
    }

    /// Exact range of `⟨θ, x + Δ⟩` over `‖Δ‖ ≤ ε`.
    pub fn score_interval(&self, x: &[f64], eps: f64, spec: NormSpec) -> Result<Interval> {
        check_eps(eps)?;
        let s = self.score(x)?;
        let r = self.score_radius(eps, spec);
        Ok(Interval { lo: s - r, hi: s + r })
    }

    /// Image of a score interval under `z ↦ z^p`.
    pub fn image(&self, scores: Interval) -> Interval {
        let (a, b) = (self.pow(scores.lo), self.pow(scores.hi));
        if self.degree % 2 == 1 {
            Interval { lo: a, hi: b }
        } else if scores.lo <= 0.0 && 0.0 <= scores.hi {
            Interval { lo: 0.0, hi: a.max(b) }
        } else {
            Interval {
                lo: a.min(b),
                hi: a.max(b),
            }
        }
    }

    /// Exact range of `f_θ(x + Δ)` over `‖Δ‖ ≤ ε`.
    pub fn output_range(&self, x: &[f64], eps: f64, spec: NormSpec) -> Result<Interval> {
        Ok(self.image(self.score_interval(x, eps, spec)?))
    }

    /// `sup_{‖Δ‖≤ε} |f(x+Δ) − f(x)| = (|s| + r)^p − |s|^p`.
    pub fn worst_case_deviation(&self, x: &[f64], eps: f64, spec: NormSpec) -> Result<f64> {
        check_eps(eps)?;
        let s = self.score(x)?.abs();
        let r = self.score_radius(eps, spec);
        Ok((self.pow(s + r) - self.pow(s)).max(0.0))
    }

    /// `sup_{‖Δ‖≤ε} ½(f(x+Δ) − y)²`, attained at an end of the output range.
    ///
    /// Ties go to the lower end of the score interval.
    pub fn worst_case_ls_loss(
        &self,
        x: &[f64],
        y: f64,
        eps: f64,
        spec: NormSpec,
    ) -> Result<WorstCaseLoss> {
        let scores = self.score_interval(x, eps, spec)?;
        let s = self.score(x)?;
        Ok(self.worst_over_scores(s, scores, y))
    }

    pub(crate) fn worst_over_scores(&self, s: f64, scores: Interval, y: f64) -> WorstCaseLoss {
        let loss = |z: f64| 0.5 * (self.pow(z) - y).powi(2);
        let mut best = WorstCaseLoss {
            value: loss(scores.lo),
            argmax_score: scores.lo,
            side: WorstScore::Lower,
        };
        if self.degree % 2 == 0 && scores.lo < 0.0 && 0.0 < scores.hi {
            let v = loss(0.0);
            if v > best.value {
                best = WorstCaseLoss {
                    value: v,
                    argmax_score: 0.0,
                    side: WorstScore::Zero,
                };
            }
        }
        let v = loss(scores.hi);
        if v > best.value {
            best = WorstCaseLoss {
                value: v,
                argmax_score: scores.hi,
                side: WorstScore::Upper,
            };
        }
        // Δ = 0 is always feasible; keeps R_ε ≥ R exact under rounding.
        best.value = best.value.max(loss(s));
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Head {
    RawScores,
    Softmax { floor: f64 },
}

impl Default for Head {
    fn default() -> Self {
        Head::Softmax {
            floor: SOFTMAX_FLOOR,
        }
    }
}

/// Affine scores `Wx + b` with either a raw or a floored-softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// `k` rows of length `d`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(default)]
    pub head: Head,
}

impl LinearClassifier {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, head: Head) -> Result<Self> {
        let k = weights.len();
        if k < 2 {
            return Err(Error::InvalidInput("a classifier needs k >= 2 classes".into()));
        }
        ensure_dim(k, bias.len())?;
        let d = weights[0].len();
        for row in &weights {
            ensure_dim(d, row.len())?;
            check_finite(row)?;
        }
        check_finite(&bias)?;
        if let Head::Softmax { floor } = head {
            if !(0.0..1.0 / k as f64).contains(&floor) {
                return Err(Error::InvalidInput(format!("softmax floor {floor} out of range")));
            }
        }
        Ok(Self { weights, bias, head })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn floor(&self) -> f64 {
        match self.head {
            Head::Softmax { floor } => floor,
            Head::RawScores => SOFTMAX_FLOOR,
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), x.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    /// `η + (1 − kη)·softmax(Wx + b)`: entries ≥ η, summing to one.
    pub fn softmax_of_scores(&self, scores: &[f64]) -> Vec<f64> {
        let k = scores.len() as f64;
        let eta = self.floor();
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| eta + (1.0 - k * eta) * e / z).collect()
    }

    pub fn predict_softmax(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.softmax_of_scores(&self.scores(x)?))
    }

    /// Output of the configured head.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.scores(x)?;
        Ok(match self.head {
            Head::RawScores => s,
            Head::Softmax { .. } => self.softmax_of_scores(&s),
        })
    }

    /// Class whose score is the unique maximum, if any.
    pub fn argmax_region(&self, x: &[f64]) -> Result<Option<usize>> {
        Ok(unique_argmax(&self.scores(x)?))
    }

    /// `w_i − w_j`
    pub fn weight_diff(&self, i: usize, j: usize) -> Vec<f64> {
        self.weights[i]
            .iter()
            .zip(&self.weights[j])
            .map(|(a, b)| a - b)
            .collect()
    }
}
