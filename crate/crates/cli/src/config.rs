//! Experiment configuration: one JSON document, merged over the defaults,
//! with `--set a.b.c=value` overrides. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tradeoff_core::numerics::LambdaMethod;
use tradeoff_core::training::{Init, TrainConfig};
use tradeoff_core::{Covariance, LossKind, NoiseFamily, NormSpec, XFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// Used when `--out` is not given; defaults to `out`.
    pub output_dir: Option<PathBuf>,
    pub verify_certificates: CertificatesConfig,
    pub audit_theorem1: BoundAuditConfig,
    pub audit_cor3: CoreAuditConfig,
    pub ridge_analyze: RidgeConfig,
    pub train: TrainCommandConfig,
    pub frontier: FrontierConfig,
    pub oracle: OracleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: None,
            verify_certificates: Default::default(),
            audit_theorem1: Default::default(),
            audit_cor3: Default::default(),
            ridge_analyze: Default::default(),
            train: Default::default(),
            frontier: Default::default(),
            oracle: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovarianceConfig {
    Identity,
    /// `Σ_ij = ρ^|i−j|`
    Ar1 { rho: f64 },
    Diagonal { values: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
}

impl CovarianceConfig {
    pub fn build(&self, d: usize) -> Result<Covariance> {
        let cov = match self {
            CovarianceConfig::Identity => Covariance::identity(d),
            CovarianceConfig::Ar1 { rho } => {
                ensure!(rho.abs() < 1.0, "ar1 covariance needs |rho| < 1, got {rho}");
                let rows: Vec<Vec<f64>> = (0..d)
                    .map(|i| (0..d).map(|j| rho.powi((i as i32 - j as i32).abs())).collect())
                    .collect();
                Covariance::new(&rows)?
            }
            CovarianceConfig::Diagonal { values } => {
                ensure!(values.len() == d, "diagonal covariance has {} entries, dimension is {d}", values.len());
                Covariance::diagonal(values)?
            }
            CovarianceConfig::Matrix { rows } => {
                ensure!(rows.len() == d, "covariance matrix has {} rows, dimension is {d}", rows.len());
                Covariance::new(rows)?
            }
        };
        Ok(cov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificatesConfig {
    /// Random quadruples per loss kind.
    pub samples: usize,
    pub kinds: Vec<LossKind>,
    /// Class counts drawn for KL and 0/1 quadruples.
    pub classes: Vec<usize>,
    /// Class counts for the exhaustive 0/1 enumeration.
    pub exhaustive_classes: Vec<usize>,
}

impl Default for CertificatesConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            kinds: vec![LossKind::LeastSquares, LossKind::KullbackLeibler, LossKind::ZeroOne],
            classes: vec![2, 3, 4],
            exhaustive_classes: vec![2, 3],
        }
    }
}

/// Grid of regression problems. The target is `θ*_i = (−1)^i/(1+i)` and the
/// audited model is `θ = model_scale·θ* + model_offset·1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionBattery {
    pub degrees: Vec<u32>,
    pub dims: Vec<usize>,
    pub families: Vec<XFamily>,
    pub eps: Vec<f64>,
    pub norms: Vec<NormSpec>,
    pub n: usize,
    pub sigma2: f64,
    pub noise: NoiseFamily,
    pub covariance: CovarianceConfig,
    pub model_scale: f64,
    pub model_offset: f64,
}

impl Default for RegressionBattery {
    fn default() -> Self {
        Self {
            degrees: vec![1, 2, 3],
            dims: vec![2, 5],
            families: XFamily::ALL.to_vec(),
            eps: vec![0.0, 0.1, 0.5, 1.0],
            norms: vec![NormSpec::LINF],
            n: 100_000,
            sigma2: 1.0,
            noise: NoiseFamily::Gaussian,
            covariance: CovarianceConfig::Identity,
            model_scale: 0.8,
            model_offset: 0.1,
        }
    }
}

/// Grid of classification problems with labels drawn from a fixed reference
/// classifier and a second fixed classifier under audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassificationBattery {
    pub enabled: bool,
    pub classes: usize,
    pub dims: Vec<usize>,
    pub families: Vec<XFamily>,
    pub eps: Vec<f64>,
    pub norms: Vec<NormSpec>,
    pub losses: Vec<LossKind>,
    pub n: usize,
    pub covariance: CovarianceConfig,
}

impl Default for ClassificationBattery {
    fn default() -> Self {
        Self {
            enabled: true,
            classes: 2,
            dims: vec![2],
            families: XFamily::ALL.to_vec(),
            eps: vec![0.0, 0.1, 0.5, 1.0],
            norms: vec![NormSpec::LINF],
            losses: vec![LossKind::KullbackLeibler, LossKind::ZeroOne],
            n: 100_000,
            covariance: CovarianceConfig::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundAuditConfig {
    pub regression: RegressionBattery,
    pub classification: ClassificationBattery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoreAuditConfig {
    pub classes: usize,
    pub dims: Vec<usize>,
    pub families: Vec<XFamily>,
    pub eps: Vec<f64>,
    pub norms: Vec<NormSpec>,
    pub n: usize,
    pub covariance: CovarianceConfig,
}

impl Default for CoreAuditConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            dims: vec![2, 5],
            families: XFamily::ALL.to_vec(),
            eps: vec![0.0, 0.1, 0.5, 1.0],
            norms: vec![NormSpec::L2, NormSpec::LINF],
            n: 100_000,
            covariance: CovarianceConfig::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeConfig {
    pub problems: RegressionBattery,
    /// Samples for `C_p` and `SNR_p` where they have no closed form.
    pub moment_n: usize,
    /// Samples for the label-spread constants.
    pub label_n: usize,
    pub lambda_method: LambdaMethod,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            problems: RegressionBattery {
                dims: vec![2, 5],
                norms: vec![NormSpec::L2, NormSpec::LINF],
                ..Default::default()
            },
            moment_n: 100_000,
            label_n: 100_000,
            lambda_method: LambdaMethod::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dim: usize,
    pub family: XFamily,
    pub covariance: CovarianceConfig,
    /// Defaults to `θ*_i = (−1)^i/(1+i)`.
    pub theta_star: Option<Vec<f64>>,
    pub degree: u32,
    pub noise: NoiseFamily,
    pub sigma2: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            family: XFamily::Gaussian,
            covariance: CovarianceConfig::Identity,
            theta_star: None,
            degree: 1,
            noise: NoiseFamily::Gaussian,
            sigma2: 1.0,
        }
    }
}

/// Optimiser settings; the training sample uses the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub n: usize,
    pub init: Init,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            step_size: d.step_size,
            iterations: d.iterations,
            n: d.n,
            init: d.init,
        }
    }
}

impl TrainingConfig {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            step_size: self.step_size,
            iterations: self.iterations,
            n: self.n,
            init: self.init.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCommandConfig {
    pub data: DataConfig,
    pub eps: f64,
    pub norm: NormSpec,
    pub training: TrainingConfig,
    pub eval_n: usize,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            data: Default::default(),
            eps: 0.1,
            norm: NormSpec::L2,
            training: Default::default(),
            eval_n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontierConfig {
    pub data: DataConfig,
    pub eps_grid: Vec<f64>,
    pub norm: NormSpec,
    pub training: TrainingConfig,
    pub eval_n: usize,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            data: Default::default(),
            eps_grid: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
            norm: NormSpec::L2,
            training: Default::default(),
            eval_n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub worst_case_instances: usize,
    pub worst_case_probes: usize,
    pub worst_case_rel_tol: f64,
    pub core_points: usize,
    pub core_probes: usize,
    pub danskin_instances: usize,
    pub danskin_step: f64,
    pub danskin_rel_tol: f64,
    pub danskin_tie_gap: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            worst_case_instances: 1000,
            worst_case_probes: 10_000,
            worst_case_rel_tol: 1e-9,
            core_points: 1000,
            core_probes: 10_000,
            danskin_instances: 1000,
            danskin_step: 1e-6,
            danskin_rel_tol: 1e-4,
            danskin_tie_gap: 1e-6,
        }
    }
}

/// Merges `user` into `base`. Objects carrying a `type` tag replace the base
/// object wholesale so that variant fields do not mix.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) if !u.contains_key("type") => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override. The value is parsed as JSON and
/// falls back to a plain string.
fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    ensure!(!path.is_empty(), "override `{assignment}` has an empty key");
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*key).ok_or_else(|| anyhow!("unknown config key `{}`", keys[..=depth].join(".")))?
            }
            Value::Array(items) => {
                let idx: usize = key.parse().with_context(|| format!("`{key}` in `{path}` is not an index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| anyhow!("index {idx} out of range for `{path}` (length {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("`{}` is not an object", keys[..depth].join(".")),
        };
    }
    unreachable!("loop returns on the last key")
}

pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Config> {
    let mut value = serde_json::to_value(Config::default())?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let user: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ensure!(user.is_object(), "config must be a JSON object");
        merge(&mut value, user);
    }
    for o in overrides {
        apply_set(&mut value, o)?;
    }
    let mut cfg: Config = serde_json::from_value(value).context("invalid config")?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_grid(name: &str, eps: &[f64]) -> Result<()> {
    ensure!(!eps.is_empty(), "{name} is empty");
    for &e in eps {
        ensure!(e >= 0.0 && e.is_finite(), "{name} contains invalid radius {e}");
    }
    Ok(())
}

fn check_nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    ensure!(!v.is_empty(), "{name} is empty");
    Ok(())
}

impl RegressionBattery {
    fn validate(&self, name: &str) -> Result<()> {
        check_nonempty(&format!("{name}.degrees"), &self.degrees)?;
        ensure!(self.degrees.iter().all(|&p| p >= 1), "{name}.degrees must be >= 1");
        check_nonempty(&format!("{name}.dims"), &self.dims)?;
        ensure!(self.dims.iter().all(|&d| d >= 1), "{name}.dims must be >= 1");
        check_nonempty(&format!("{name}.families"), &self.families)?;
        check_grid(&format!("{name}.eps"), &self.eps)?;
        check_nonempty(&format!("{name}.norms"), &self.norms)?;
        ensure!(self.n >= 2, "{name}.n must be >= 2");
        ensure!(self.sigma2 >= 0.0 && self.sigma2.is_finite(), "{name}.sigma2 must be >= 0");
        ensure!(self.model_scale.is_finite() && self.model_offset.is_finite(), "{name} model pattern must be finite");
        for &d in &self.dims {
            self.covariance.build(d).with_context(|| format!("{name}.covariance"))?;
        }
        Ok(())
    }
}

impl DataConfig {
    fn validate(&self, name: &str) -> Result<()> {
        ensure!(self.dim >= 1, "{name}.dim must be >= 1");
        ensure!(self.degree >= 1, "{name}.degree must be >= 1");
        ensure!(self.sigma2 >= 0.0 && self.sigma2.is_finite(), "{name}.sigma2 must be >= 0");
        if let Some(t) = &self.theta_star {
            ensure!(t.len() == self.dim, "{name}.theta_star has {} entries, dim is {}", t.len(), self.dim);
        }
        self.covariance.build(self.dim).with_context(|| format!("{name}.covariance"))?;
        Ok(())
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let c = &self.verify_certificates;
        ensure!(c.samples >= 1, "verify_certificates.samples must be >= 1");
        check_nonempty("verify_certificates.kinds", &c.kinds)?;
        check_nonempty("verify_certificates.classes", &c.classes)?;
        ensure!(c.classes.iter().all(|&k| k >= 2), "verify_certificates.classes must be >= 2");
        ensure!(
            c.exhaustive_classes.iter().all(|&k| (2..=4).contains(&k)),
            "verify_certificates.exhaustive_classes must lie in 2..=4"
        );

        self.audit_theorem1.regression.validate("audit_theorem1.regression")?;
        let cl = &self.audit_theorem1.classification;
        if cl.enabled {
            ensure!(cl.classes >= 2, "audit_theorem1.classification.classes must be >= 2");
            check_nonempty("audit_theorem1.classification.dims", &cl.dims)?;
            check_nonempty("audit_theorem1.classification.families", &cl.families)?;
            check_grid("audit_theorem1.classification.eps", &cl.eps)?;
            check_nonempty("audit_theorem1.classification.norms", &cl.norms)?;
            check_nonempty("audit_theorem1.classification.losses", &cl.losses)?;
            ensure!(
                !cl.losses.contains(&LossKind::LeastSquares),
                "audit_theorem1.classification.losses cannot contain least-squares"
            );
            ensure!(cl.n >= 2, "audit_theorem1.classification.n must be >= 2");
            for &d in &cl.dims {
                cl.covariance.build(d).context("audit_theorem1.classification.covariance")?;
            }
        }

        let c3 = &self.audit_cor3;
        ensure!(c3.classes >= 2, "audit_cor3.classes must be >= 2");
        check_nonempty("audit_cor3.dims", &c3.dims)?;
        check_nonempty("audit_cor3.families", &c3.families)?;
        check_grid("audit_cor3.eps", &c3.eps)?;
        check_nonempty("audit_cor3.norms", &c3.norms)?;
        ensure!(c3.n >= 2, "audit_cor3.n must be >= 2");
        for &d in &c3.dims {
            c3.covariance.build(d).context("audit_cor3.covariance")?;
        }

        let r = &self.ridge_analyze;
        r.problems.validate("ridge_analyze.problems")?;
        ensure!(r.moment_n >= 2 && r.label_n >= 2, "ridge_analyze sample sizes must be >= 2");

        let t = &self.train;
        t.data.validate("train.data")?;
        check_grid("train.eps", &[t.eps])?;
        t.training.with_seed(self.seed).validate().context("train.training")?;
        ensure!(t.eval_n >= 2, "train.eval_n must be >= 2");

        let f = &self.frontier;
        f.data.validate("frontier.data")?;
        check_grid("frontier.eps_grid", &f.eps_grid)?;
        f.training.with_seed(self.seed).validate().context("frontier.training")?;
        ensure!(f.eval_n >= 2, "frontier.eval_n must be >= 2");

        let o = &self.oracle;
        ensure!(o.worst_case_instances >= 1 && o.core_points >= 1 && o.danskin_instances >= 1, "oracle batteries must be nonempty");
        ensure!(o.danskin_step > 0.0 && o.danskin_rel_tol > 0.0 && o.worst_case_rel_tol > 0.0, "oracle tolerances must be > 0");
        ensure!(o.danskin_tie_gap >= 0.0, "oracle.danskin_tie_gap must be >= 0");
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("serialisable");
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(digest)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let v = serde_json::to_value(Config::default()).unwrap();
        let back: Config = serde_json::from_value(v).unwrap();
        assert_eq!(back, Config::default());
        Config::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        merge(&mut v, serde_json::json!({"audit_theorem1": {"regression": {"nn": 5}}}));
        assert!(serde_json::from_value::<Config>(v).is_err());
        let mut v = serde_json::to_value(Config::default()).unwrap();
        apply_set(&mut v, "train.data.bogus=1").unwrap();
        assert!(serde_json::from_value::<Config>(v).is_err());
        let mut v = serde_json::to_value(Config::default()).unwrap();
        assert!(apply_set(&mut v, "nothing.here=1").is_err());
    }

    #[test]
    fn overrides_reach_nested_values() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        apply_set(&mut v, "audit_theorem1.regression.n=123").unwrap();
        apply_set(&mut v, "audit_theorem1.regression.norms=[\"2\",\"inf\"]").unwrap();
        apply_set(&mut v, "frontier.eps_grid.1=0.25").unwrap();
        apply_set(&mut v, "train.training.init={\"type\":\"gaussian\",\"scale\":0.5}").unwrap();
        let c: Config = serde_json::from_value(v).unwrap();
        assert_eq!(c.audit_theorem1.regression.n, 123);
        assert_eq!(c.audit_theorem1.regression.norms, vec![NormSpec::L2, NormSpec::LINF]);
        assert_eq!(c.frontier.eps_grid[1], 0.25);
        assert_eq!(c.train.training.init, Init::Gaussian { scale: 0.5 });
    }

    #[test]
    fn tagged_objects_replace_instead_of_merging() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        merge(&mut v, serde_json::json!({"train": {"data": {"covariance": {"type": "ar1", "rho": 0.3}}}}));
        merge(&mut v, serde_json::json!({"train": {"data": {"covariance": {"type": "identity"}}}}));
        let c: Config = serde_json::from_value(v).unwrap();
        assert_eq!(c.train.data.covariance, CovarianceConfig::Identity);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = Config::default();
        c.frontier.eps_grid = vec![];
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.train.data.covariance = CovarianceConfig::Diagonal { values: vec![1.0] };
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.audit_cor3.eps = vec![-0.1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = hash_json(&Config::default());
        assert_eq!(a, hash_json(&Config::default()));
        let mut c = Config::default();
        c.seed += 1;
        assert_ne!(a, hash_json(&c));
        assert_eq!(a.len(), 16);
    }
}
