use anyhow::Result;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use tradeoff_core::losses::check_pair_conditions;
use tradeoff_core::{LossKind, SampleStream};

use crate::config::{hash_json, Config};
use crate::output::{Outcome, Row};

#[derive(Debug, Clone, Copy, Serialize)]
struct Tally {
    checked: usize,
    cond1_failures: usize,
    cond2_failures: usize,
    min_slack1: f64,
    min_slack2: f64,
}

impl Tally {
    const EMPTY: Tally = Tally {
        checked: 0,
        cond1_failures: 0,
        cond2_failures: 0,
        min_slack1: f64::INFINITY,
        min_slack2: f64::INFINITY,
    };

    fn check(kind: LossKind, u: &[f64], v: &[f64], u2: &[f64], v2: &[f64]) -> Result<Tally> {
        let c = check_pair_conditions(kind, u, v, u2, v2)?;
        Ok(Tally {
            checked: 1,
            cond1_failures: usize::from(!c.cond1),
            cond2_failures: usize::from(!c.cond2),
            min_slack1: c.slack1,
            min_slack2: c.slack2,
        })
    }

    // counts and minima do not depend on the reduction order
    fn merge(self, o: Tally) -> Tally {
        Tally {
            checked: self.checked + o.checked,
            cond1_failures: self.cond1_failures + o.cond1_failures,
            cond2_failures: self.cond2_failures + o.cond2_failures,
            min_slack1: self.min_slack1.min(o.min_slack1),
            min_slack2: self.min_slack2.min(o.min_slack2),
        }
    }

    fn pass(&self) -> bool {
        self.cond1_failures == 0 && self.cond2_failures == 0
    }
}

fn dirichlet<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    g.iter().map(|x| x / s).collect()
}

fn one_hot(k: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[j] = 1.0;
    v
}

/// A one-hot or interior label with equal odds.
fn kl_target<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    if rng.random::<bool>() {
        one_hot(k, rng.random_range(0..k))
    } else {
        dirichlet(k, rng)
    }
}

/// Quadruple `(u, v, u', v')` number `i` for `kind`.
fn quadruple(kind: LossKind, classes: &[usize], stream: SampleStream) -> [Vec<f64>; 4] {
    let mut rng = stream.rng();
    match kind {
        LossKind::LeastSquares => {
            let scale = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let mut draw = || -> Vec<f64> {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![scale * z]
            };
            [draw(), draw(), draw(), draw()]
        }
        LossKind::KullbackLeibler => {
            let k = classes[rng.random_range(0..classes.len())];
            let v = kl_target(k, &mut rng);
            let v2 = kl_target(k, &mut rng);
            [dirichlet(k, &mut rng), v, dirichlet(k, &mut rng), v2]
        }
        LossKind::ZeroOne => {
            let k = classes[rng.random_range(0..classes.len())];
            // integer scores produce ties in the argmax
            let ties = rng.random::<bool>();
            let mut draw = || -> Vec<f64> {
                (0..k)
                    .map(|_| if ties { rng.random_range(0..3) as f64 } else { StandardNormal.sample(&mut rng) })
                    .collect()
            };
            [draw(), draw(), draw(), draw()]
        }
    }
}

fn random_battery(kind: LossKind, classes: &[usize], n: usize, seed: u64, channel: u64) -> Result<Tally> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let [u, v, u2, v2] = quadruple(kind, classes, SampleStream::new(seed, 8 * i as u64 + channel));
            Tally::check(kind, &u, &v, &u2, &v2)
        })
        .try_reduce(|| Tally::EMPTY, |a, b| Ok(a.merge(b)))
}

/// Every quadruple of vectors in `{0,1,2}^k`. Three levels realise every
/// pattern of argmax sets and equalities among four vectors.
fn exhaustive_zero_one(k: usize) -> Result<Tally> {
    let m = 3usize.pow(k as u32);
    let vectors: Vec<Vec<f64>> = (0..m)
        .map(|mut code| {
            (0..k)
                .map(|_| {
                    let digit = code % 3;
                    code /= 3;
                    digit as f64
                })
                .collect()
        })
        .collect();
    (0..m)
        .into_par_iter()
        .map(|a| {
            let mut t = Tally::EMPTY;
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        t = t.merge(Tally::check(LossKind::ZeroOne, &vectors[a], &vectors[b], &vectors[c], &vectors[d])?);
                    }
                }
            }
            Ok(t)
        })
        .try_reduce(|| Tally::EMPTY, |a, b| Ok(a.merge(b)))
}

pub fn run(cfg: &Config) -> Result<Outcome> {
    let c = &cfg.verify_certificates;
    let mut out = Outcome::default();
    let mut results = Vec::new();
    let mut record = |out: &mut Outcome, kind: LossKind, mode: &str, classes: &[usize], tally: Tally| {
        let inputs = json!({
            "command": "verify-certificates", "kind": kind, "mode": mode,
            "classes": classes, "samples": tally.checked, "seed": cfg.seed,
        });
        let hash = hash_json(&inputs);
        let classes_text = classes.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
        out.rows.push(
            Row::new()
                .text("config_hash", &hash)
                .text("kind", kind.name())
                .text("mode", mode)
                .text("classes", &classes_text)
                .text("n", tally.checked)
                .text("seed", cfg.seed)
                .text("cond1_failures", tally.cond1_failures)
                .text("cond2_failures", tally.cond2_failures)
                .num("min_slack1", tally.min_slack1)
                .num("min_slack2", tally.min_slack2)
                .text("pass", tally.pass()),
        );
        out.long(&hash, None, "min_slack1", tally.min_slack1, 0.0);
        out.long(&hash, None, "min_slack2", tally.min_slack2, 0.0);
        out.long(&hash, None, "cond1_failures", tally.cond1_failures as f64, 0.0);
        out.long(&hash, None, "cond2_failures", tally.cond2_failures as f64, 0.0);
        out.audit_failed |= !tally.pass();
        results.push(json!({ "config_hash": hash, "inputs": inputs, "tally": tally, "pass": tally.pass() }));
    };

    for (channel, &kind) in c.kinds.iter().enumerate() {
        let classes: &[usize] = if kind == LossKind::LeastSquares { &[1] } else { &c.classes };
        let tally = random_battery(kind, classes, c.samples, cfg.seed, channel as u64)?;
        record(&mut out, kind, "random", classes, tally);
    }
    if c.kinds.contains(&LossKind::ZeroOne) {
        for &k in &c.exhaustive_classes {
            record(&mut out, LossKind::ZeroOne, "exhaustive", &[k], exhaustive_zero_one(k)?);
        }
    }
    out.report = json!({ "batteries": results });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batteries_pass() {
        for (ch, kind) in [LossKind::LeastSquares, LossKind::KullbackLeibler, LossKind::ZeroOne].into_iter().enumerate() {
            let classes: &[usize] = if kind == LossKind::LeastSquares { &[1] } else { &[2, 3, 4] };
            let t = random_battery(kind, classes, 20_000, 1, ch as u64).unwrap();
            assert_eq!(t.checked, 20_000);
            assert!(t.pass(), "{kind:?}: {t:?}");
        }
        let t = exhaustive_zero_one(2).unwrap();
        assert_eq!(t.checked, 9usize.pow(4));
        assert!(t.pass());
        // equal quadruples make both slacks vanish
        assert_eq!(t.min_slack1, 0.0);
    }
}
