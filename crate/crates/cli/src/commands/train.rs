use anyhow::Result;
use serde_json::{json, Value};
use tradeoff_core::training::{failed_row, frontier_sweep, train_and_evaluate, Dataset, FrontierRow};
use tradeoff_core::NormSpec;

use crate::config::{hash_json, Config, DataConfig, TrainingConfig};
use crate::output::{num, Outcome, Row};
use crate::patterns;

/// Evaluation samples are drawn with the seed offset by this constant.
const EVAL_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(EVAL_SEED_OFFSET)
}

struct Setup<'a> {
    command: &'static str,
    data: &'a DataConfig,
    norm: NormSpec,
    training: &'a TrainingConfig,
    eval_n: usize,
    seed: u64,
}

fn record(out: &mut Outcome, s: &Setup, r: &FrontierRow, extra: Value) -> Value {
    let key = json!({
        "command": s.command, "data": s.data, "norm": s.norm.to_string(), "eps": r.eps,
        "training": s.training, "eval_n": s.eval_n, "seed": s.seed,
    });
    let hash = hash_json(&key);
    let theta = r.theta_hat.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";");
    let status = match (&r.failed, r.verdict) {
        (Some(_), _) => "failed",
        (None, true) => "pass",
        (None, false) => "fail",
    };
    out.rows.push(
        Row::new()
            .text("config_hash", &hash)
            .text("family", s.data.family.name())
            .text("dim", s.data.dim)
            .text("degree", s.data.degree)
            .num("sigma2", s.data.sigma2)
            .text("norm", s.norm)
            .num("eps", r.eps)
            .text("train_n", s.training.n)
            .num("step_size", s.training.step_size)
            .text("iterations", s.training.iterations)
            .text("seed", s.seed)
            .text("eval_seed", eval_seed(s.seed))
            .text("theta_hat", theta)
            .num("final_objective", r.final_objective)
            .est("standard", &r.standard)
            .est("adversarial", &r.adversarial)
            .est("lhs", &r.lhs)
            .est("local_smoothness", &r.local_smoothness)
            .num("l_eps_bound", r.l_eps_bound)
            .num("bound", r.bound)
            .text("verdict", r.verdict)
            .text("status", status)
            .text("failure", r.failed.as_deref().unwrap_or("")),
    );
    let e = Some(r.eps);
    out.long_est(&hash, e, "standard_risk", &r.standard);
    out.long_est(&hash, e, "adversarial_risk", &r.adversarial);
    out.long_est(&hash, e, "lhs", &r.lhs);
    out.long_est(&hash, e, "local_smoothness", &r.local_smoothness);
    out.long(&hash, e, "l_eps_bound", r.l_eps_bound, 0.0);
    out.long(&hash, e, "bound", r.bound, 0.0);
    out.long(&hash, e, "final_objective", r.final_objective, 0.0);
    for (i, t) in r.theta_hat.iter().enumerate() {
        out.long(&hash, e, format!("theta_hat_{i}"), *t, 0.0);
    }
    out.audit_failed |= status == "fail";
    out.computation_failed |= status == "failed";
    json!({ "config_hash": hash, "inputs": key, "row": r, "status": status, "fit": extra })
}

pub fn run_single(cfg: &Config) -> Result<Outcome> {
    let c = &cfg.train;
    let spec = patterns::data_spec(&c.data)?;
    let tc = c.training.with_seed(cfg.seed);
    let data = Dataset::sample(&spec, tc.n, tc.seed)?;
    let setup = Setup {
        command: "train",
        data: &c.data,
        norm: c.norm,
        training: &c.training,
        eval_n: c.eval_n,
        seed: cfg.seed,
    };
    let mut out = Outcome::default();
    let result = match train_and_evaluate(&spec, &data, c.eps, c.norm, &tc, c.eval_n, eval_seed(cfg.seed)) {
        Ok((fit, row)) => {
            let extra = json!({ "trace": fit.trace, "accepted_steps": fit.accepted_steps });
            record(&mut out, &setup, &row, extra)
        }
        Err(e) => record(&mut out, &setup, &failed_row(c.eps, e.to_string(), eval_seed(cfg.seed)), Value::Null),
    };
    out.report = result;
    Ok(out)
}

pub fn run_frontier(cfg: &Config) -> Result<Outcome> {
    let c = &cfg.frontier;
    let spec = patterns::data_spec(&c.data)?;
    let tc = c.training.with_seed(cfg.seed);
    let rows = frontier_sweep(&spec, &c.eps_grid, c.norm, &tc, c.eval_n, eval_seed(cfg.seed))?;
    let setup = Setup {
        command: "frontier",
        data: &c.data,
        norm: c.norm,
        training: &c.training,
        eval_n: c.eval_n,
        seed: cfg.seed,
    };
    let mut out = Outcome::default();
    let results: Vec<Value> = rows.iter().map(|r| record(&mut out, &setup, r, Value::Null)).collect();
    let failed = results.iter().filter(|r| r["status"] == "failed").count();
    out.report = json!({ "summary": { "rows": results.len(), "failed": failed }, "rows": results });
    Ok(out)
}
