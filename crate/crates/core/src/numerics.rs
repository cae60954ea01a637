//! Vectors, p-norms and their duals, covariance matrices, and the
//! deterministic random-stream contract shared by every Monte Carlo estimator.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("vector has non-finite entries".into()))
    }
}

/// Descriptor of the perturbation norm `‖·‖_p`, `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormRepr", into = "String")]
pub struct NormSpec {
    exponent: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NormRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<NormRepr> for NormSpec {
    type Error = Error;

    fn try_from(repr: NormRepr) -> Result<Self> {
        match repr {
            NormRepr::Number(p) => NormSpec::new(p),
            NormRepr::Text(s) => s.parse(),
        }
    }
}

impl From<NormSpec> for String {
    fn from(spec: NormSpec) -> String {
        spec.to_string()
    }
}

impl NormSpec {
    pub const L1: NormSpec = NormSpec { exponent: 1.0 };
    pub const L2: NormSpec = NormSpec { exponent: 2.0 };
    pub const LINF: NormSpec = NormSpec {
        exponent: f64::INFINITY,
    };

    pub fn new(exponent: f64) -> Result<Self> {
        if exponent.is_nan() || exponent < 1.0 {
            return Err(Error::InvalidInput(format!(
                "norm exponent must lie in [1, inf], got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn dual_exponent(&self) -> f64 {
        if self.exponent == 1.0 {
            f64::INFINITY
        } else if self.exponent.is_infinite() {
            1.0
        } else {
            self.exponent / (self.exponent - 1.0)
        }
    }

    pub fn dual(&self) -> NormSpec {
        NormSpec {
            exponent: self.dual_exponent(),
        }
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.exponent)
        }
    }
}

impl FromStr for NormSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "linf" | "max" => Ok(NormSpec::LINF),
            other => {
                let p: f64 = other
                    .trim_start_matches('l')
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("unrecognised norm `{s}`")))?;
                NormSpec::new(p)
            }
        }
    }
}

/// `‖v‖_p` for any exponent, without the validation done by [`norm`].
pub(crate) fn p_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        scale * v.iter().map(|x| (x.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub fn norm(v: &[f64], spec: NormSpec) -> Result<f64> {
    check_finite(v)?;
    Ok(p_norm(v, spec.exponent))
}

/// Norm dual to `spec`: `sup_{‖Δ‖_p ≤ 1} ⟨v, Δ⟩ = ‖v‖_q`.
pub fn dual_norm(v: &[f64], spec: NormSpec) -> Result<f64> {
    check_finite(v)?;
    Ok(p_norm(v, spec.dual_exponent()))
}

/// A unit-norm perturbation `Δ` (in `spec`) with `⟨v, Δ⟩ = ‖v‖_*`.
///
/// This is also the (sub)gradient of `‖·‖_*` at `v`. For `v = 0` the zero
/// vector is returned.
pub fn dual_attainment(v: &[f64], spec: NormSpec) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    if v.iter().all(|&x| x == 0.0) {
        return out;
    }
    let p = spec.exponent;
    if p.is_infinite() {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    } else if p == 1.0 {
        let (idx, _) = v
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bm), (i, x)| {
                if x.abs() > bm {
                    (i, x.abs())
                } else {
                    (bi, bm)
                }
            });
        out[idx] = v[idx].signum();
    } else {
        let q = spec.dual_exponent();
        let vq = p_norm(v, q);
        for (o, &x) in out.iter_mut().zip(v) {
            *o = x.signum() * (x.abs() / vq).powf(q - 1.0);
            if x == 0.0 {
                *o = 0.0;
            }
        }
    }
    out
}

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = -1e-10;

/// Symmetric positive semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
}

impl Covariance {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::InvalidInput("covariance must be at least 1x1".into()));
        }
        for row in rows {
            ensure_dim(d, row.len())?;
            check_finite(row)?;
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        Self::from_matrix(matrix)
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput("covariance must be square".into()));
        }
        let d = matrix.nrows();
        for i in 0..d {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Invariant(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(matrix.clone());
        if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
            if min < EIGEN_TOL {
                return Err(Error::Invariant(format!(
                    "covariance has negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        check_finite(diag)?;
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn quadratic_form(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.matrix[(i, j)] * theta[j];
            }
            acc += theta[i] * row;
        }
        acc
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Symmetric square root `Σ^{1/2}`; eigenvalues within tolerance of zero are clamped.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
    }
}

/// `‖θ‖_Σ = (θᵀ Σ θ)^{1/2}`.
pub fn sigma_norm(theta: &[f64], cov: &Covariance) -> Result<f64> {
    ensure_dim(cov.dim(), theta.len())?;
    check_finite(theta)?;
    let q = cov.quadratic_form(theta);
    let scale = theta.iter().map(|x| x * x).sum::<f64>() * cov.matrix.amax().max(1.0);
    if q < -1e-10 * scale {
        return Err(Error::Invariant(format!(
            "negative quadratic form θᵀΣθ = {q:e}"
        )));
    }
    Ok(q.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMethod {
    ClosedForm,
    Search,
}

/// Result of a λ* computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaStar {
    /// Supremum of `θᵀΣθ / ‖θ‖_*²` (for `Search`, the best value found: a lower bound).
    pub value: f64,
    pub method: LambdaMethod,
    /// The same ratio evaluated at the all-ones direction.
    pub all_ones_ratio: f64,
}

pub const LAMBDA_RESTARTS: usize = 32;
pub const LAMBDA_STEPS: usize = 2000;
const LAMBDA_SEARCH_SEED: u64 = 0x5eed_1a3b_da57_a000;

fn dual_ratio(cov: &Covariance, spec: NormSpec, theta: &[f64]) -> f64 {
    let dn = p_norm(theta, spec.dual_exponent());
    if dn == 0.0 {
        return 0.0;
    }
    cov.quadratic_form(theta) / (dn * dn)
}

/// `λ* = sup_{θ≠0} ‖θ‖²_Σ / ‖θ‖²_*`.
///
/// The closed form (largest eigenvalue of Σ) only exists for ℓ2
/// perturbations; any other norm falls through to the search.
pub fn lambda_star(cov: &Covariance, spec: NormSpec, method: LambdaMethod) -> LambdaStar {
    let d = cov.dim();
    let all_ones_ratio = dual_ratio(cov, spec, &vec![1.0; d]);
    if method == LambdaMethod::ClosedForm && spec.exponent == 2.0 {
        return LambdaStar {
            value: cov.largest_eigenvalue().max(0.0),
            method: LambdaMethod::ClosedForm,
            all_ones_ratio,
        };
    }

    let mut best = all_ones_ratio;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        best = best.max(dual_ratio(cov, spec, &e));
    }

    let q = spec.dual_exponent();
    // with a step of 1/tr Σ the ℓ2 case is a shifted power iteration
    let lr = 1.0 / cov.trace().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(LAMBDA_SEARCH_SEED);
    for _ in 0..LAMBDA_RESTARTS {
        let mut theta: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n0 = p_norm(&theta, q);
        if n0 == 0.0 {
            continue;
        }
        theta.iter_mut().for_each(|t| *t /= n0);
        for _ in 0..LAMBDA_STEPS {
            // gradient of the scale-invariant ratio at a point on the unit dual sphere
            let ratio = cov.quadratic_form(&theta);
            best = best.max(ratio);
            let sigma_theta = cov.apply(&theta);
            let g = dual_attainment(&theta, spec);
            for ((t, s), gi) in theta.iter_mut().zip(&sigma_theta).zip(&g) {
                *t += lr * (s - ratio * gi);
            }
            let nt = p_norm(&theta, q);
            if nt == 0.0 || !nt.is_finite() {
                break;
            }
            theta.iter_mut().for_each(|t| *t /= nt);
        }
        best = best.max(dual_ratio(cov, spec, &theta));
    }
    LambdaStar {
        value: best,
        method: LambdaMethod::Search,
        all_ones_ratio,
    }
}

/// Purpose of a random stream attached to one Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Input = 0,
    Label = 1,
    PairedLabel = 2,
    Perturbation = 3,
    Parameters = 4,
}

const CHANNELS: u64 = 8;

/// One independent random stream, a pure function of `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleStream {
    pub seed: u64,
    pub stream: u64,
}

impl SampleStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for sample `index` and purpose `channel`.
    pub fn for_sample(seed: u64, index: usize, channel: Channel) -> Self {
        Self {
            seed,
            stream: (index as u64) * CHANNELS + channel as u64,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Streaming mean/variance with an order-fixed merge.
///
/// The mean is `sum / count` (exact for integer-valued samples such as
/// indicators); the spread is tracked with Welford's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: usize,
    sum: f64,
    running_mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        let delta = x - self.running_mean;
        self.running_mean += delta / self.count as f64;
        self.m2 += delta * (x - self.running_mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.running_mean - self.running_mean;
        self.running_mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * (self.count as f64) * (other.count as f64) / n;
        self.count += other.count;
        self.sum += other.sum;
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate {
            value: self.mean(),
            std_error: self.std_error(),
            n: self.count,
            seed,
            lower_bound: false,
        }
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Sample standard deviation over `√n`.
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    /// Set when the per-sample inner supremum is only a certified lower bound.
    #[serde(default)]
    pub lower_bound: bool,
}

impl Estimate {
    pub fn exact(value: f64, seed: u64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n: 0,
            seed,
            lower_bound: false,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            std_error: self.std_error * factor.abs(),
            ..*self
        }
    }

    pub fn with_lower_bound(mut self, flag: bool) -> Self {
        self.lower_bound = flag;
        self
    }
}

/// Samples per reduction chunk. Chunks are reduced in index order, so the
/// result does not depend on the worker count.
pub const CHUNK: usize = 4096;

/// Evaluates `f(i)` for `i in 0..n` (in parallel) and reduces each of the `K`
/// outputs into an [`Accumulator`] in a fixed order.
pub fn monte_carlo<const K: usize, F>(n: usize, f: F) -> [Accumulator; K]
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<[Accumulator; K]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [Accumulator::default(); K];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let vals = f(i);
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = [Accumulator::default(); K];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

/// Fallible variant of [`monte_carlo`]; the first error in index order wins.
pub fn try_monte_carlo<const K: usize, F>(n: usize, f: F) -> Result<[Accumulator; K]>
where
    F: Fn(usize) -> Result<[f64; K]> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<[Accumulator; K]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [Accumulator::default(); K];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let vals = f(i)?;
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Accumulator::default(); K];
    for part in partials {
        for (t, p) in total.iter_mut().zip(&part?) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// Like [`monte_carlo`] with a runtime number of outputs: `f(i, out)` fills
/// `out` (length `k`) for sample `i`.
pub fn monte_carlo_dyn<F>(n: usize, k: usize, f: F) -> Vec<Accumulator>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<Accumulator>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Accumulator::default(); k];
            let mut buf = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut buf);
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Accumulator::default(); k];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}
