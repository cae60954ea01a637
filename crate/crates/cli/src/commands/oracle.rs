use anyhow::Result;
use serde_json::json;
use tradeoff_core::oracle::{core_oracle, danskin_oracle, worst_case_oracle};

use crate::config::{hash_json, Config};
use crate::output::{Outcome, Row};

#[allow(clippy::too_many_arguments)]
fn push(
    out: &mut Outcome,
    check: &str,
    instances: usize,
    probes: String,
    max_error: f64,
    violations: usize,
    rounding_limited: usize,
    agreement: f64,
    pass: bool,
    seed: u64,
) -> String {
    let hash = hash_json(&json!({ "command": "oracle", "check": check, "instances": instances, "probes": probes, "seed": seed }));
    out.rows.push(
        Row::new()
            .text("config_hash", &hash)
            .text("check", check)
            .text("instances", instances)
            .text("probes", probes)
            .text("seed", seed)
            .num("max_relative_error", max_error)
            .text("violations", violations)
            .text("rounding_limited", rounding_limited)
            .num("agreement", agreement)
            .text("pass", pass),
    );
    out.long(&hash, None, "max_relative_error", max_error, 0.0);
    out.long(&hash, None, "violations", violations as f64, 0.0);
    out.long(&hash, None, "agreement", agreement, 0.0);
    out.audit_failed |= !pass;
    hash
}

pub fn run(cfg: &Config) -> Result<Outcome> {
    let o = &cfg.oracle;
    let mut out = Outcome::default();

    let wc = worst_case_oracle(o.worst_case_instances, o.worst_case_probes, o.worst_case_rel_tol, cfg.seed)?;
    push(&mut out, "worst-case", wc.instances, o.worst_case_probes.to_string(), wc.max_relative_gap, wc.exceedances, 0, f64::NAN, wc.pass, cfg.seed);

    let core = core_oracle(o.core_points, o.core_probes, cfg.seed)?;
    let core_violations = core.certified_flipped + core.extra_flips;
    push(&mut out, "core", core.points, o.core_probes.to_string(), f64::NAN, core_violations, 0, core.agreement, core.pass, cfg.seed);

    // instances whose gradient is below the difference quotient's rounding
    // error are counted separately and left out of the reported maximum
    let dk = danskin_oracle(o.danskin_instances, o.danskin_step, o.danskin_rel_tol, o.danskin_tie_gap, cfg.seed)?;
    let step = format!("step={}", o.danskin_step);
    push(&mut out, "danskin", dk.instances, step, dk.max_resolved_relative_error, dk.failures, dk.rounding_limited, f64::NAN, dk.pass, cfg.seed);

    out.report = json!({ "worst_case": wc, "core": core, "danskin": dk });
    Ok(out)
}
