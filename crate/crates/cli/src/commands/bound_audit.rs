use anyhow::Result;
use serde_json::{json, Value};
use tradeoff_core::risk::theorem1_report;
use tradeoff_core::{BoundReport, LossKind, Predictor};

use crate::config::{hash_json, Config};
use crate::output::{Outcome, Row};
use crate::patterns;

/// `pass`, `fail`, or `inconclusive` when a failed verdict rests on an inner
/// supremum that is only a lower bound.
pub fn status(r: &BoundReport) -> &'static str {
    match (r.verdict, r.exact) {
        (true, _) => "pass",
        (false, true) => "fail",
        (false, false) => "inconclusive",
    }
}

pub fn report_row(row: Row, r: &BoundReport) -> Row {
    row.est("standard", &r.standard)
        .est("adversarial", &r.adversarial)
        .est("lhs", &r.lhs)
        .est("smoothness_term", &r.smoothness_term)
        .est("label_term", &r.label_term)
        .num("bound", r.bound)
        .num("combined_se", r.combined_se)
        .text("exact", r.exact)
        .text("verdict", r.verdict)
        .text("status", status(r))
}

pub fn report_long(out: &mut Outcome, hash: &str, eps: f64, r: &BoundReport) {
    out.long_est(hash, Some(eps), "standard_risk", &r.standard);
    out.long_est(hash, Some(eps), "adversarial_risk", &r.adversarial);
    out.long_est(hash, Some(eps), "lhs", &r.lhs);
    out.long_est(hash, Some(eps), "smoothness_term", &r.smoothness_term);
    out.long_est(hash, Some(eps), "label_term", &r.label_term);
    out.long(hash, Some(eps), "bound", r.bound, r.combined_se);
}

fn record(out: &mut Outcome, results: &mut Vec<Value>, inputs: Value, eps: f64, r: &BoundReport) {
    let hash = hash_json(&inputs);
    let field = |k: &str| match &inputs[k] {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        v => v.to_string(),
    };
    let row = Row::new()
        .text("config_hash", &hash)
        .text("task", field("task"))
        .text("loss", field("loss"))
        .text("family", field("family"))
        .text("dim", field("dim"))
        .text("degree", field("degree"))
        .text("classes", field("classes"))
        .text("norm", field("norm"))
        .num("eps", eps)
        .text("sigma2", field("sigma2"))
        .text("n", field("n"))
        .text("seed", field("seed"));
    out.rows.push(report_row(row, r));
    report_long(out, &hash, eps, r);
    out.audit_failed |= status(r) == "fail";
    results.push(json!({ "config_hash": hash, "inputs": inputs, "report": r, "status": status(r) }));
}

pub fn run(cfg: &Config) -> Result<Outcome> {
    let c = &cfg.audit_theorem1;
    let mut out = Outcome::default();
    let mut results = Vec::new();

    let b = &c.regression;
    for &family in &b.families {
        for &d in &b.dims {
            for &p in &b.degrees {
                let spec = patterns::battery_spec(b, family, d, p)?;
                let model = Predictor::Ridge(patterns::audited_ridge(d, p, b.model_scale, b.model_offset)?);
                for &norm in &b.norms {
                    for &eps in &b.eps {
                        let r = theorem1_report(&model, LossKind::LeastSquares, &spec, eps, norm, b.n, cfg.seed)?;
                        let inputs = json!({
                            "command": "audit-theorem1", "task": "regression", "loss": "ls",
                            "family": family.name(), "dim": d, "degree": p, "classes": null,
                            "norm": norm.to_string(), "eps": eps, "sigma2": b.sigma2, "noise": b.noise,
                            "covariance": b.covariance, "model_scale": b.model_scale,
                            "model_offset": b.model_offset, "n": b.n, "seed": cfg.seed,
                        });
                        record(&mut out, &mut results, inputs, eps, &r);
                    }
                }
            }
        }
    }

    let cl = &c.classification;
    if cl.enabled {
        for &family in &cl.families {
            for &d in &cl.dims {
                let spec = patterns::classification_spec(&cl.covariance, family, cl.classes, d)?;
                let model = Predictor::Linear(patterns::audited_classifier(cl.classes, d)?);
                for &loss in &cl.losses {
                    for &norm in &cl.norms {
                        for &eps in &cl.eps {
                            let r = theorem1_report(&model, loss, &spec, eps, norm, cl.n, cfg.seed)?;
                            let inputs = json!({
                                "command": "audit-theorem1", "task": "classification", "loss": loss.name(),
                                "family": family.name(), "dim": d, "degree": null, "classes": cl.classes,
                                "norm": norm.to_string(), "eps": eps, "sigma2": null,
                                "covariance": cl.covariance, "n": cl.n, "seed": cfg.seed,
                            });
                            record(&mut out, &mut results, inputs, eps, &r);
                        }
                    }
                }
            }
        }
    }

    let count = |s: &str| results.iter().filter(|r| r["status"] == s).count();
    out.report = json!({
        "summary": { "rows": results.len(), "pass": count("pass"), "fail": count("fail"), "inconclusive": count("inconclusive") },
        "rows": results,
    });
    Ok(out)
}
