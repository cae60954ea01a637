//! Brute-force maximisation over explicit perturbations, used to cross-check
//! the closed-form worst cases and ε-core certificates.
//!
//! Brute force only visits points of the ball, so it can never exceed a
//! correct supremum; agreement shows the closed form is attained.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{adv01_loss_exact, core_membership};
use crate::losses::unique_argmax;
use crate::models::{check_eps, Head, LinearClassifier, RidgeModel};
use crate::numerics::{dual_attainment, p_norm, NormSpec, SampleStream};

/// Grid points per axis for ℓ∞ balls.
pub const LINF_GRID: usize = 11;

/// Perturbations visited for a ridge model at `x`.
///
/// ℓ∞ balls get the full `11^d` grid (corners included). Other balls get
/// `probes` random points of the sphere plus the score-interval endpoints
/// `±ε·g` (with `g` attaining `‖θ‖_*`) and, when it is inside the ball, the
/// point along `g` where the score crosses zero.
pub fn ridge_probes(
    model: &RidgeModel,
    x: &[f64],
    eps: f64,
    spec: NormSpec,
    probes: usize,
    stream: SampleStream,
) -> Vec<Vec<f64>> {
    let d = model.dim();
    let mut out = Vec::new();
    if spec.exponent().is_infinite() {
        let total = LINF_GRID.pow(d as u32);
        for mut idx in 0..total {
            let mut delta = Vec::with_capacity(d);
            for _ in 0..d {
                let k = idx % LINF_GRID;
                idx /= LINF_GRID;
                delta.push(eps * (2.0 * k as f64 / (LINF_GRID - 1) as f64 - 1.0));
            }
            out.push(delta);
        }
    } else {
        out.extend(sphere_points(d, eps, spec, probes, stream));
    }
    let g = dual_attainment(&model.theta, spec);
    out.push(g.iter().map(|v| eps * v).collect());
    out.push(g.iter().map(|v| -eps * v).collect());
    let dual = p_norm(&model.theta, spec.dual_exponent());
    if dual > 0.0 {
        let s: f64 = model.theta.iter().zip(x).map(|(a, b)| a * b).sum();
        let t = -s / dual;
        if t.abs() <= eps {
            out.push(g.iter().map(|v| t * v).collect());
        }
    }
    out
}

/// `count` random points on the ε-sphere of `spec`.
pub fn sphere_points(d: usize, eps: f64, spec: NormSpec, count: usize, stream: SampleStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = p_norm(&g, spec.exponent());
        if n > 0.0 {
            out.push(g.iter().map(|v| eps * v / n).collect());
        }
    }
    out
}

/// Brute-force `(sup |f(x+Δ) − f(x)|, sup ½(f(x+Δ) − y)²)` over `deltas`.
pub fn brute_force_worst_case(model: &RidgeModel, x: &[f64], y: f64, deltas: &[Vec<f64>]) -> Result<(f64, f64)> {
    let base = model.predict(x)?;
    let mut dev: f64 = 0.0;
    let mut loss = 0.5 * (base - y).powi(2);
    for delta in deltas {
        let moved: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
        let z = model.predict(&moved)?;
        dev = dev.max((z - base).abs());
        loss = loss.max(0.5 * (z - y).powi(2));
    }
    Ok((dev, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseOracleSummary {
    pub instances: usize,
    /// Largest `|brute − closed| / max(|closed|, 1e-300)` over both quantities.
    pub max_relative_gap: f64,
    /// Instances where brute force exceeded the closed form beyond rounding.
    pub exceedances: usize,
    pub pass: bool,
}

/// Random `(θ, x, y, p, ε, norm)` instance number `i` of the worst-case battery.
fn worst_case_instance(seed: u64, i: usize) -> (RidgeModel, Vec<f64>, f64, f64, NormSpec) {
    let mut rng = SampleStream::new(seed, 2 * i as u64).rng();
    let d = rng.random_range(1..=5);
    let p = rng.random_range(1..=3u32);
    let eps = [0.1, 0.5, 1.0][rng.random_range(0..3)];
    let spec = [NormSpec::L1, NormSpec::L2, NormSpec::LINF][rng.random_range(0..3)];
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let theta: Vec<f64> = (0..d).map(|_| normal()).collect();
    let x: Vec<f64> = (0..d).map(|_| normal()).collect();
    let y = normal();
    (RidgeModel { theta, degree: p }, x, y, eps, spec)
}

/// Compares the closed-form worst cases of ridge models with brute force on
/// `instances` random instances (`d ≤ 5`, `p ≤ 3`, `ε ∈ {0.1, 0.5, 1}`,
/// ℓ1/ℓ2/ℓ∞ balls).
pub fn worst_case_oracle(instances: usize, probes: usize, rel_tol: f64, seed: u64) -> Result<WorstCaseOracleSummary> {
    let rows: Vec<(f64, bool)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let (m, x, y, eps, spec) = worst_case_instance(seed, i);
            let deltas = ridge_probes(&m, &x, eps, spec, probes, SampleStream::new(seed, 2 * i as u64 + 1));
            let (bd, bl) = brute_force_worst_case(&m, &x, y, &deltas)?;
            let cd = m.worst_case_deviation(&x, eps, spec)?;
            let cl = m.worst_case_ls_loss(&x, y, eps, spec)?.value;
            let rel = |b: f64, c: f64| (b - c).abs() / c.abs().max(1e-300);
            let over = |b: f64, c: f64| b > c * (1.0 + 1e-12) + 1e-300;
            Ok((rel(bd, cd).max(rel(bl, cl)), over(bd, cd) || over(bl, cl)))
        })
        .collect::<Result<_>>()?;
    let max_relative_gap = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let exceedances = rows.iter().filter(|r| r.1).count();
    Ok(WorstCaseOracleSummary {
        instances,
        max_relative_gap,
        exceedances,
        pass: exceedances == 0 && max_relative_gap <= rel_tol,
    })
}

/// Whether any perturbation in `deltas` changes the unique winning class at `x`.
pub fn flips(c: &LinearClassifier, x: &[f64], deltas: &[Vec<f64>]) -> Result<bool> {
    let base = unique_argmax(&c.scores(x)?);
    for delta in deltas {
        let moved: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
        if unique_argmax(&c.scores(&moved)?) != base {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Random points of the ε-ball, half on the sphere and half at uniform
/// radius, followed by the vertices of ℓ1 and ℓ∞ balls.
pub fn ball_points(d: usize, eps: f64, spec: NormSpec, count: usize, stream: SampleStream) -> Vec<Vec<f64>> {
    let mut pts = sphere_points(d, eps, spec, count, stream);
    let mut rng = SampleStream::new(stream.seed, stream.stream ^ (1 << 63)).rng();
    for p in pts.iter_mut().skip(count / 2) {
        let r: f64 = rng.random();
        p.iter_mut().for_each(|v| *v *= r);
    }
    if spec.exponent() == 1.0 {
        for i in 0..d {
            for sign in [-1.0, 1.0] {
                let mut v = vec![0.0; d];
                v[i] = sign * eps;
                pts.push(v);
            }
        }
    } else if spec.exponent().is_infinite() && d < 16 {
        for mask in 0..(1usize << d) {
            pts.push((0..d).map(|i| if mask >> i & 1 == 1 { eps } else { -eps }).collect());
        }
    }
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoreOracleSummary {
    pub points: usize,
    pub certified: usize,
    /// Certified-core points that some probe moved out of their region.
    pub certified_flipped: usize,
    /// Points where brute force found a flip the exact loss missed.
    pub extra_flips: usize,
    /// Of the points with margin gap > 1e-3, the share where brute force and the exact loss agree.
    pub agreement: f64,
    pub pass: bool,
}

fn core_instance(seed: u64, i: usize) -> (LinearClassifier, Vec<f64>, f64, NormSpec) {
    let mut rng = SampleStream::new(seed, 2 * i as u64).rng();
    let k = rng.random_range(2..=3);
    let d = rng.random_range(1..=3);
    let spec = [NormSpec::L1, NormSpec::L2, NormSpec::LINF][rng.random_range(0..3)];
    let eps = [0.1, 0.3, 0.6][rng.random_range(0..3)];
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let weights = (0..k).map(|_| (0..d).map(|_| normal()).collect()).collect();
    let bias = (0..k).map(|_| normal()).collect();
    let x = (0..d).map(|_| normal()).collect();
    let c = LinearClassifier::new(weights, bias, Head::RawScores).expect("valid shape");
    (c, x, eps, spec)
}

/// Probes `points` random (classifier, x, ε) triples (`d ≤ 3`, `k ≤ 3`) with
/// `probes` perturbations each and checks that certified-core points never
/// flip and that brute force never beats the exact 0/1 supremum.
pub fn core_oracle(points: usize, probes: usize, seed: u64) -> Result<CoreOracleSummary> {
    let rows: Vec<(bool, bool, bool, Option<bool>)> = (0..points)
        .into_par_iter()
        .map(|i| {
            let (c, x, eps, spec) = core_instance(seed, i);
            check_eps(eps)?;
            let certified = core_membership(&c, &x, eps, spec)?.in_core();
            let deltas = ball_points(c.dim(), eps, spec, probes, SampleStream::new(seed, 2 * i as u64 + 1));
            let exact = adv01_loss_exact(&c, &x, eps, spec)?;
            let flipped = flips(&c, &x, &deltas)?;
            let scores = c.scores(&x)?;
            // gap between the smallest margin and its threshold
            let gap = match unique_argmax(&scores) {
                Some(w) => (0..c.classes())
                    .filter(|&j| j != w)
                    .map(|j| scores[w] - scores[j] - eps * p_norm(&c.weight_diff(w, j), spec.dual_exponent()))
                    .fold(f64::INFINITY, |a, b| a.min(b.abs())),
                None => 0.0,
            };
            let agree = (gap > 1e-3).then_some((exact > 0.0) == flipped);
            Ok((certified, certified && flipped, flipped && exact == 0.0, agree))
        })
        .collect::<Result<_>>()?;
    let certified = rows.iter().filter(|r| r.0).count();
    let certified_flipped = rows.iter().filter(|r| r.1).count();
    let extra_flips = rows.iter().filter(|r| r.2).count();
    let judged: Vec<bool> = rows.iter().filter_map(|r| r.3).collect();
    let agreement = if judged.is_empty() {
        1.0
    } else {
        judged.iter().filter(|&&a| a).count() as f64 / judged.len() as f64
    };
    Ok(CoreOracleSummary {
        points,
        certified,
        certified_flipped,
        extra_flips,
        agreement,
        pass: certified_flipped == 0 && extra_flips == 0 && agreement >= 0.99,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DanskinOracleSummary {
    pub instances: usize,
    /// Candidates rejected as ties or kinks before `instances` were found.
    pub skipped: usize,
    /// Largest `‖fd − g‖∞ / ‖g‖∞` over the instances.
    pub max_relative_error: f64,
    /// The same maximum over instances that are not rounding limited.
    pub max_resolved_relative_error: f64,
    /// Instances whose gradient is so small that the rounding error of the
    /// difference quotient, `4·u·|f|/h`, exceeds the relative tolerance.
    pub rounding_limited: usize,
    pub failures: usize,
    pub pass: bool,
}

/// Gap between the two largest candidate losses on the score interval.
fn endpoint_gap(m: &RidgeModel, x: &[f64], y: f64, eps: f64, spec: NormSpec) -> Result<f64> {
    let iv = m.score_interval(x, eps, spec)?;
    let p = m.degree as i32;
    let loss = |z: f64| 0.5 * (z.powi(p) - y).powi(2);
    let mut c = vec![loss(iv.lo), loss(iv.hi)];
    if m.degree % 2 == 0 && iv.lo < 0.0 && 0.0 < iv.hi {
        c.push(loss(0.0));
    }
    c.sort_by(|a, b| b.total_cmp(a));
    Ok(c[0] - c[1])
}

/// Distance from `θ` to the nearest kink of `‖·‖_*`.
fn kink_distance(theta: &[f64], spec: NormSpec) -> f64 {
    let q = spec.dual_exponent();
    if q == 1.0 {
        theta.iter().map(|t| t.abs()).fold(f64::INFINITY, f64::min)
    } else if q.is_infinite() {
        let mut a: Vec<f64> = theta.iter().map(|t| t.abs()).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        if a.len() < 2 { a[0] } else { (a[0] - a[1]) / 2.0 }
    } else {
        f64::INFINITY
    }
}

/// Compares the Danskin gradient of the adversarial least-squares loss with
/// central finite differences of the closed-form worst case.
///
/// Candidates (`d ≤ 5`, `p ≤ 3`, `ε ∈ {0.1, 0.5, 1}`, ℓ1/ℓ2/ℓ∞) whose best
/// and second-best score candidates are within `tie_gap`, or whose `θ` is
/// within `10·step` of a kink of the dual norm, are skipped until
/// `instances` remain. An instance fails when the difference quotient is off
/// by more than `rel_tol·‖g‖∞` plus its own rounding error `4·u·|f|/h`.
pub fn danskin_oracle(instances: usize, step: f64, rel_tol: f64, tie_gap: f64, seed: u64) -> Result<DanskinOracleSummary> {
    let mut skipped = 0;
    let mut max_relative_error: f64 = 0.0;
    let mut max_resolved_relative_error: f64 = 0.0;
    let mut failures = 0;
    let mut rounding_limited = 0;
    let mut found = 0;
    let mut i = 0u64;
    while found < instances {
        let mut rng = SampleStream::new(seed, i).rng();
        i += 1;
        let d = rng.random_range(1..=5);
        let p = rng.random_range(1..=3u32);
        let eps = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        let spec = [NormSpec::L1, NormSpec::L2, NormSpec::LINF][rng.random_range(0..3)];
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let theta: Vec<f64> = (0..d).map(|_| normal()).collect();
        let x: Vec<f64> = (0..d).map(|_| normal()).collect();
        let y = normal();
        let m = RidgeModel::new(theta.clone(), p)?;
        if endpoint_gap(&m, &x, y, eps, spec)? <= tie_gap || kink_distance(&theta, spec) <= 10.0 * step {
            skipped += 1;
            continue;
        }
        found += 1;
        let (_, grad) = crate::training::adversarial_gradient(&theta, &x, y, p, eps, spec)?;
        let f = |t: &[f64]| -> Result<f64> {
            Ok(RidgeModel::new(t.to_vec(), p)?.worst_case_ls_loss(&x, y, eps, spec)?.value)
        };
        let mut err: f64 = 0.0;
        let mut f_max: f64 = 0.0;
        for j in 0..d {
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[j] += step;
            b[j] -= step;
            let (fa, fb) = (f(&a)?, f(&b)?);
            f_max = f_max.max(fa.abs()).max(fb.abs());
            err = err.max(((fa - fb) / (2.0 * step) - grad[j]).abs());
        }
        let scale = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        let rounding = 4.0 * f64::EPSILON * f_max / step;
        let rel = if scale > 0.0 { err / scale } else { err };
        max_relative_error = max_relative_error.max(rel);
        if rounding > rel_tol * scale {
            rounding_limited += 1;
        } else {
            max_resolved_relative_error = max_resolved_relative_error.max(rel);
        }
        failures += (err > rel_tol * scale + rounding) as usize;
    }
    Ok(DanskinOracleSummary {
        instances,
        skipped,
        max_relative_error,
        max_resolved_relative_error,
        rounding_limited,
        failures,
        pass: failures == 0,
    })
}
