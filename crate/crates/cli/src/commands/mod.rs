//! One module per subcommand. Each returns an [`Outcome`]; nothing is written
//! until the whole command has run, so an error leaves no partial output.

use anyhow::Result;
use serde_json::Value;

use crate::config::Config;
use crate::output::Outcome;

mod bound_audit;
mod certificates;
mod core_audit;
mod oracle;
mod ridge;
mod train;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Check both certificate inequalities on random and enumerated inputs.
    VerifyCertificates,
    /// Audit R + R_ε against the general lower bound over a grid of problems.
    #[command(name = "audit-theorem1")]
    AuditTheorem1,
    /// Audit the 0/1 bound and its ε-core identity for linear classifiers.
    #[command(name = "audit-cor3")]
    AuditCor3,
    /// Closed-form ridge bounds, the derivation chain, constants and thresholds.
    RidgeAnalyze,
    /// Fit one adversarially trained ridge model and evaluate it.
    Train,
    /// Sweep the training radius and report the empirical frontier.
    Frontier,
    /// Brute-force oracles for the closed forms and the Danskin gradient.
    Oracle,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyCertificates => "verify-certificates",
            Command::AuditTheorem1 => "audit-theorem1",
            Command::AuditCor3 => "audit-cor3",
            Command::RidgeAnalyze => "ridge-analyze",
            Command::Train => "train",
            Command::Frontier => "frontier",
            Command::Oracle => "oracle",
        }
    }

    /// The config block read by this command, together with the seed.
    pub fn config_block(&self, cfg: &Config) -> Result<Value> {
        let block = match self {
            Command::VerifyCertificates => serde_json::to_value(&cfg.verify_certificates)?,
            Command::AuditTheorem1 => serde_json::to_value(&cfg.audit_theorem1)?,
            Command::AuditCor3 => serde_json::to_value(&cfg.audit_cor3)?,
            Command::RidgeAnalyze => serde_json::to_value(&cfg.ridge_analyze)?,
            Command::Train => serde_json::to_value(&cfg.train)?,
            Command::Frontier => serde_json::to_value(&cfg.frontier)?,
            Command::Oracle => serde_json::to_value(&cfg.oracle)?,
        };
        Ok(serde_json::json!({ "seed": cfg.seed, self.name().replace('-', "_"): block }))
    }

    pub fn run(&self, cfg: &Config) -> Result<Outcome> {
        match self {
            Command::VerifyCertificates => certificates::run(cfg),
            Command::AuditTheorem1 => bound_audit::run(cfg),
            Command::AuditCor3 => core_audit::run(cfg),
            Command::RidgeAnalyze => ridge::run(cfg),
            Command::Train => train::run_single(cfg),
            Command::Frontier => train::run_frontier(cfg),
            Command::Oracle => oracle::run(cfg),
        }
    }
}
