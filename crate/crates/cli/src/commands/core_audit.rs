use anyhow::Result;
use serde_json::json;
use tradeoff_core::geometry::cor3_report;
use tradeoff_core::BoundReport;

use crate::commands::bound_audit::{report_long, report_row, status};
use crate::config::{hash_json, Config};
use crate::output::{Outcome, Row};
use crate::patterns;

/// The smoothness term must equal `1 − in-core frequency` exactly: both are
/// integer counts over the same `n`.
fn identity_holds(r: &BoundReport) -> bool {
    let Some(core) = r.in_core_frequency else {
        return false;
    };
    let n = core.n as f64;
    let inside = (core.value * n).round();
    r.smoothness_term.n == core.n && r.smoothness_term.value == (n - inside) / n
}

pub fn run(cfg: &Config) -> Result<Outcome> {
    let c = &cfg.audit_cor3;
    let mut out = Outcome::default();
    let mut results = Vec::new();
    for &family in &c.families {
        for &d in &c.dims {
            let spec = patterns::classification_spec(&c.covariance, family, c.classes, d)?;
            let model = patterns::audited_classifier(c.classes, d)?;
            for &norm in &c.norms {
                for &eps in &c.eps {
                    let r = cor3_report(&model, &spec, eps, norm, c.n, cfg.seed)?;
                    let inputs = json!({
                        "command": "audit-cor3", "family": family.name(), "dim": d, "classes": c.classes,
                        "norm": norm.to_string(), "eps": eps, "covariance": c.covariance,
                        "n": c.n, "seed": cfg.seed,
                    });
                    let hash = hash_json(&inputs);
                    let core = r.in_core_frequency.expect("0/1 report carries the core frequency");
                    let identity = identity_holds(&r);
                    let row = Row::new()
                        .text("config_hash", &hash)
                        .text("family", family.name())
                        .text("dim", d)
                        .text("classes", c.classes)
                        .text("norm", norm)
                        .num("eps", eps)
                        .text("n", c.n)
                        .text("seed", cfg.seed)
                        .est("in_core_frequency", &core)
                        .text("core_identity", identity);
                    out.rows.push(report_row(row, &r));
                    report_long(&mut out, &hash, eps, &r);
                    out.long_est(&hash, Some(eps), "in_core_frequency", &core);
                    out.audit_failed |= status(&r) == "fail" || !identity;
                    results.push(json!({
                        "config_hash": hash, "inputs": inputs, "report": r,
                        "core_identity": identity, "status": status(&r),
                    }));
                }
            }
        }
    }
    let failed = results
        .iter()
        .filter(|r| r["status"] != "pass" || r["core_identity"] != true)
        .count();
    out.report = json!({ "summary": { "rows": results.len(), "failed": failed }, "rows": results });
    Ok(out)
}
