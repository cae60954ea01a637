//! Standard versus adversarial risk.
//!
//! The crate estimates `R(f)` and `R_ε(f)` for ridge regressors and affine
//! classifiers, evaluates the lower bound on `R(f) + R_ε(f)` implied by a
//! certificate pair `(A, B)` for the loss, and carries the closed-form
//! analysis of least squares over polynomial ridge functions
//! `x ↦ ⟨θ, x⟩^p`, including adversarial training with an exact inner
//! maximisation.
//!
//! Module map:
//!
//! - [`numerics`]: p-norms, dual norms, `‖·‖_Σ`, `λ*`, random streams, Monte Carlo reduction
//! - [`losses`]: least-squares, KL and 0/1 losses with their certificate pairs
//! - [`models`]: ridge models and affine classifiers, exact worst cases over a norm ball
//! - [`distributions`]: data-generating processes, `C_p`, `SNR_p`
//! - [`risk`]: risk estimators and the general lower bound
//! - [`geometry`]: ε-cores of affine decision regions and the 0/1 bound
//! - [`ridge_analysis`]: closed forms for ridge regression and the ε-threshold
//! - [`training`]: ERM and adversarial training, frontier sweeps
//! - [`oracle`]: brute-force cross-checks of the closed forms

pub mod distributions;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod ridge_analysis;
pub mod risk;
pub mod training;

pub use distributions::{DataSpec, NoiseFamily, Task, XFamily};
pub use error::{Error, Result};
pub use losses::LossKind;
pub use models::{Head, Interval, LinearClassifier, RidgeModel};
pub use numerics::{Covariance, Estimate, NormSpec, SampleStream};
pub use risk::{BoundReport, Predictor};
