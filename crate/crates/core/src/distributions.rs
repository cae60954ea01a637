//! Data-generating processes for `(X, Y)` and the distribution constants
//! `C_p` (moment equivalence) and `SNR_p`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::models::LinearClassifier;
use crate::numerics::{
    check_finite, dot, monte_carlo, monte_carlo_dyn, sigma_norm, Channel, Covariance, Estimate,
    SampleStream,
};

/// Coordinate law of the whitened input; every family is zero-mean with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XFamily {
    Gaussian,
    Rademacher,
    UniformCube,
}

impl XFamily {
    pub const ALL: [XFamily; 3] = [XFamily::Gaussian, XFamily::Rademacher, XFamily::UniformCube];

    pub fn name(&self) -> &'static str {
        match self {
            XFamily::Gaussian => "gaussian",
            XFamily::Rademacher => "rademacher",
            XFamily::UniformCube => "uniform-cube",
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            XFamily::Gaussian => StandardNormal.sample(rng),
            XFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            XFamily::UniformCube => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// `Y = ⟨θ*, X⟩^p + Z` with `E Z = 0`, `E Z² = σ²`.
    Regression {
        theta_star: Vec<f64>,
        degree: u32,
        noise: NoiseFamily,
        sigma2: f64,
    },
    /// `Y` one-hot, drawn from the reference classifier's softmax at `X`.
    Classification { reference: LinearClassifier },
}

/// Joint law of `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub family: XFamily,
    pub covariance: Covariance,
    pub task: Task,
    root: DMatrix<f64>,
}

pub fn odd_double_factorial(p: u32) -> f64 {
    // (2p − 1)!! = 1·3·5···(2p − 1)
    (1..=p).fold(1.0, |acc, k| acc * (2 * k - 1) as f64)
}

impl DataSpec {
    pub fn regression(
        covariance: Covariance,
        family: XFamily,
        theta_star: Vec<f64>,
        degree: u32,
        noise: NoiseFamily,
        sigma2: f64,
    ) -> Result<Self> {
        ensure_dim(covariance.dim(), theta_star.len())?;
        check_finite(&theta_star)?;
        if degree == 0 {
            return Err(Error::InvalidInput("degree must be >= 1".into()));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance {sigma2} must be >= 0")));
        }
        Ok(Self::build(
            covariance,
            family,
            Task::Regression {
                theta_star,
                degree,
                noise,
                sigma2,
            },
        ))
    }

    pub fn classification(
        covariance: Covariance,
        family: XFamily,
        reference: LinearClassifier,
    ) -> Result<Self> {
        ensure_dim(covariance.dim(), reference.dim())?;
        Ok(Self::build(covariance, family, Task::Classification { reference }))
    }

    fn build(covariance: Covariance, family: XFamily, task: Task) -> Self {
        let root = covariance.sqrt();
        Self {
            family,
            covariance,
            task,
            root,
        }
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn is_regression(&self) -> bool {
        matches!(self.task, Task::Regression { .. })
    }

    pub fn sigma2(&self) -> Option<f64> {
        match &self.task {
            Task::Regression { sigma2, .. } => Some(*sigma2),
            Task::Classification { .. } => None,
        }
    }

    /// Whitened draw: independent zero-mean unit-variance coordinates.
    pub fn sample_whitened(&self, stream: SampleStream) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..self.dim()).map(|_| self.family.draw(&mut rng)).collect()
    }

    pub fn sample_x(&self, stream: SampleStream) -> Vec<f64> {
        let u = self.sample_whitened(stream);
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.root[(i, j)] * u[j]).sum())
            .collect()
    }

    /// Class probabilities `π(x)`; `None` for regression.
    pub fn class_probabilities(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        match &self.task {
            Task::Classification { reference } => Ok(Some(reference.predict_softmax(x)?)),
            Task::Regression { .. } => Ok(None),
        }
    }

    /// One label draw at `x`: a length-1 vector for regression, one-hot for classification.
    ///
    /// Distinct streams at the same `x` give conditionally i.i.d. labels.
    pub fn sample_label(&self, x: &[f64], stream: SampleStream) -> Result<Vec<f64>> {
        let mut rng = stream.rng();
        match &self.task {
            Task::Regression {
                theta_star,
                degree,
                noise,
                sigma2,
            } => {
                ensure_dim(theta_star.len(), x.len())?;
                let signal = dot(theta_star, x).powi(*degree as i32);
                let sd = sigma2.sqrt();
                let z = match noise {
                    NoiseFamily::Gaussian => {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        sd * g
                    }
                    NoiseFamily::Uniform => {
                        let a = 3f64.sqrt() * sd;
                        if a == 0.0 {
                            0.0
                        } else {
                            rng.random_range(-a..a)
                        }
                    }
                };
                Ok(vec![signal + z])
            }
            Task::Classification { reference } => {
                let pi = reference.predict_softmax(x)?;
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut class = pi.len() - 1;
                for (i, p) in pi.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        class = i;
                        break;
                    }
                }
                let mut y = vec![0.0; pi.len()];
                y[class] = 1.0;
                Ok(y)
            }
        }
    }

    /// Sample `index` of a Monte Carlo run: `(x, y)`.
    pub fn draw(&self, seed: u64, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.sample_x(SampleStream::for_sample(seed, index, Channel::Input));
        let y = self.sample_label(&x, SampleStream::for_sample(seed, index, Channel::Label))?;
        Ok((x, y))
    }

    /// Sample `index` with a second label drawn independently at the same `x`.
    pub fn draw_paired(&self, seed: u64, index: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (x, y) = self.draw(seed, index)?;
        let y2 =
            self.sample_label(&x, SampleStream::for_sample(seed, index, Channel::PairedLabel))?;
        Ok((x, y, y2))
    }
}

/// Estimated (or exact) moment-equivalence constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentConstant {
    pub value: f64,
    pub std_error: f64,
    pub closed_form: bool,
}

pub const MOMENT_DIRECTIONS: usize = 64;

/// Smallest `C_p` with `(E|⟨θ,X⟩|^{2p})^{1/(2p)} ≤ C_p ‖θ‖_Σ` for all θ.
///
/// Gaussian inputs have the closed form `((2p−1)!!)^{1/(2p)}` and every family
/// has `C_1 = 1`. Other cases are estimated as the largest empirical ratio
/// over 64 random directions (plus the coordinate axes and the diagonal) in
/// whitened coordinates, where `‖θ‖_Σ` becomes the Euclidean norm.
pub fn c_p_constant(spec: &DataSpec, p: u32, n: usize, seed: u64) -> Result<MomentConstant> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be >= 1".into()));
    }
    // E⟨θ,X⟩² = ‖θ‖²_Σ for every family, so C_1 = 1
    if p == 1 || spec.family == XFamily::Gaussian {
        return Ok(MomentConstant {
            value: odd_double_factorial(p).powf(1.0 / (2.0 * p as f64)),
            std_error: 0.0,
            closed_form: true,
        });
    }
    let dirs = moment_directions(spec.dim(), seed);
    let acc = monte_carlo_dyn(n, dirs.len(), |i, out| {
        let u = spec.sample_whitened(SampleStream::for_sample(seed, i, Channel::Input));
        for (o, dir) in out.iter_mut().zip(&dirs) {
            *o = dot(dir, &u).abs().powi(2 * p as i32);
        }
    });
    let two_p = 2.0 * p as f64;
    let best = acc
        .iter()
        .max_by(|a, b| a.mean().total_cmp(&b.mean()))
        .expect("at least one direction");
    let value = best.mean().powf(1.0 / two_p);
    let std_error = if best.mean() > 0.0 {
        value * best.std_error() / (two_p * best.mean())
    } else {
        0.0
    };
    Ok(MomentConstant {
        value,
        std_error,
        closed_form: false,
    })
}

/// Unit directions used by [`c_p_constant`].
pub fn moment_directions(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(MOMENT_DIRECTIONS + d + 1);
    let mut rng = SampleStream::for_sample(seed, 0, Channel::Parameters).rng();
    while dirs.len() < MOMENT_DIRECTIONS {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = dot(&g, &g).sqrt();
        if n > 0.0 {
            dirs.push(g.iter().map(|x| x / n).collect());
        }
    }
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e);
    }
    dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    dirs
}

/// `SNR_p = E⟨X, θ*⟩^{2p} / σ²`; infinite when σ² = 0. Exact for Gaussian
/// inputs and for `p = 1`, a Monte Carlo estimate otherwise.
pub fn snr_p(spec: &DataSpec, n: usize, seed: u64) -> Result<Estimate> {
    let Task::Regression {
        theta_star,
        degree,
        sigma2,
        ..
    } = &spec.task
    else {
        return Err(Error::Incompatible("SNR_p needs a regression spec".into()));
    };
    if *sigma2 == 0.0 {
        return Ok(Estimate::exact(f64::INFINITY, seed));
    }
    let p = *degree;
    // p = 1 needs only the second moment, which every family shares
    if spec.family == XFamily::Gaussian || p == 1 {
        let ts = sigma_norm(theta_star, &spec.covariance)?;
        return Ok(Estimate::exact(
            odd_double_factorial(p) * ts.powi(2 * p as i32) / sigma2,
            seed,
        ));
    }
    let [acc] = monte_carlo(n, |i| {
        let x = spec.sample_x(SampleStream::for_sample(seed, i, Channel::Input));
        [dot(theta_star, &x).powi(2 * p as i32) / sigma2]
    });
    Ok(acc.estimate(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Head;
    use approx::assert_relative_eq;

    fn gaussian_regression(cov: Covariance, theta: Vec<f64>, p: u32, sigma2: f64) -> DataSpec {
        DataSpec::regression(cov, XFamily::Gaussian, theta, p, NoiseFamily::Gaussian, sigma2)
            .unwrap()
    }

    #[test]
    fn sample_x_is_reproducible() {
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, 0.0], 1, 1.0);
        let s = SampleStream::new(3, 9);
        assert_eq!(spec.sample_x(s), spec.sample_x(s));
        assert_ne!(spec.sample_x(s), spec.sample_x(SampleStream::new(3, 10)));
    }

    #[test]
    fn sample_moments_match_covariance() {
        let n = 100_000;
        for family in XFamily::ALL {
            let cov = Covariance::diagonal(&[4.0, 1.0]).unwrap();
            let spec = DataSpec::regression(
                cov.clone(),
                family,
                vec![1.0, 1.0],
                1,
                NoiseFamily::Gaussian,
                1.0,
            )
            .unwrap();
            let acc = monte_carlo_dyn(n, 5, |i, out| {
                let x = spec.sample_x(SampleStream::for_sample(1, i, Channel::Input));
                out[0] = x[0];
                out[1] = x[1];
                out[2] = x[0] * x[0];
                out[3] = x[1] * x[1];
                out[4] = x[0] * x[1];
            });
            let mean_norm = (acc[0].mean().powi(2) + acc[1].mean().powi(2)).sqrt();
            assert!(mean_norm <= 4.0 * (cov.trace() / n as f64).sqrt(), "{family:?}");
            for (a, target) in [(&acc[2], 4.0), (&acc[3], 1.0), (&acc[4], 0.0)] {
                assert!(
                    (a.mean() - target).abs() <= 4.0 * a.std_error(),
                    "{family:?}: {} vs {target}",
                    a.mean()
                );
            }
        }
    }

    #[test]
    fn noiseless_labels_are_exact() {
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, -2.0], 3, 0.0);
        let x = [0.5, 0.25];
        let y = spec.sample_label(&x, SampleStream::new(1, 1)).unwrap();
        assert_eq!(y, vec![0.0f64.powi(3)]);
        let x = [1.0, 0.25];
        let y = spec.sample_label(&x, SampleStream::new(1, 1)).unwrap();
        assert_eq!(y, vec![0.125]);
    }

    #[test]
    fn noise_variance_and_paired_independence() {
        for noise in [NoiseFamily::Gaussian, NoiseFamily::Uniform] {
            let spec = DataSpec::regression(
                Covariance::identity(1),
                XFamily::Gaussian,
                vec![1.0],
                1,
                noise,
                2.0,
            )
            .unwrap();
            let x = [0.7];
            let [z, zz, prod, sq_diff] = monte_carlo(100_000, |i| {
                let y = spec
                    .sample_label(&x, SampleStream::for_sample(5, i, Channel::Label))
                    .unwrap()[0]
                    - 0.7;
                let y2 = spec
                    .sample_label(&x, SampleStream::for_sample(5, i, Channel::PairedLabel))
                    .unwrap()[0]
                    - 0.7;
                [y, y * y, y * y2, (y - y2).powi(2)]
            });
            assert!(z.mean().abs() <= 4.0 * z.std_error());
            assert!((zz.mean() - 2.0).abs() <= 4.0 * zz.std_error(), "{noise:?}");
            // correlation of paired noise
            assert!(prod.mean().abs() <= 4.0 * prod.std_error());
            assert!((sq_diff.mean() - 4.0).abs() <= 4.0 * sq_diff.std_error());
        }
    }

    #[test]
    fn deterministic_class_labels() {
        let reference = LinearClassifier::new(
            vec![vec![0.0, 0.0]; 2],
            vec![100.0, 0.0],
            Head::Softmax { floor: 0.0 },
        )
        .unwrap();
        let spec =
            DataSpec::classification(Covariance::identity(2), XFamily::Gaussian, reference)
                .unwrap();
        for i in 0..1000 {
            let (_, y) = spec.draw(4, i).unwrap();
            assert_eq!(y, vec![1.0, 0.0]);
        }
    }

    #[test]
    fn c_p_closed_forms() {
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, 0.0], 1, 1.0);
        assert_eq!(c_p_constant(&spec, 1, 0, 0).unwrap().value, 1.0);
        assert_relative_eq!(
            c_p_constant(&spec, 2, 0, 0).unwrap().value,
            3f64.powf(0.25),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            c_p_constant(&spec, 3, 0, 0).unwrap().value,
            15f64.powf(1.0 / 6.0),
            max_relative = 1e-12
        );
        for family in XFamily::ALL {
            let s = DataSpec::regression(Covariance::identity(2), family, vec![1.0, 0.0], 1, NoiseFamily::Gaussian, 1.0).unwrap();
            assert_eq!(c_p_constant(&s, 1, 100, 0).unwrap().value, 1.0);
        }
        assert_relative_eq!(3f64.powf(0.25), 1.31607, epsilon = 1e-5);
        assert_relative_eq!(15f64.powf(1.0 / 6.0), 1.57042, epsilon = 1e-5);
    }

    #[test]
    fn moment_equivalence_holds_empirically() {
        let cov = Covariance::new(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.2], vec![0.0, 0.2, 0.5]])
            .unwrap();
        let n = 100_000;
        for family in [XFamily::Rademacher, XFamily::UniformCube] {
            for p in [1, 2] {
                let spec = DataSpec::regression(
                    cov.clone(),
                    family,
                    vec![1.0, 0.0, 0.0],
                    p,
                    NoiseFamily::Gaussian,
                    1.0,
                )
                .unwrap();
                let c = c_p_constant(&spec, p, n, 17).unwrap();
                assert_eq!(c.closed_form, p == 1);
                let mut rng = SampleStream::new(99, 0).rng();
                let thetas: Vec<Vec<f64>> = (0..64)
                    .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect();
                let acc = monte_carlo_dyn(n, thetas.len(), |i, out| {
                    let x = spec.sample_x(SampleStream::for_sample(23, i, Channel::Input));
                    for (o, t) in out.iter_mut().zip(&thetas) {
                        *o = dot(t, &x).abs().powi(2 * p as i32);
                    }
                });
                for (t, a) in thetas.iter().zip(&acc) {
                    let two_p = 2.0 * p as f64;
                    let lhs = a.mean().powf(1.0 / two_p);
                    let rel_se = a.std_error() / (two_p * a.mean());
                    let rhs = c.value * sigma_norm(t, &cov).unwrap() * (1.0 + 4.0 * rel_se);
                    assert!(lhs <= rhs, "{family:?} p={p}: {lhs} > {rhs}");
                }
            }
        }
    }

    #[test]
    fn snr_examples() {
        let spec = gaussian_regression(Covariance::identity(2), vec![2.0, 0.0], 1, 1.0);
        assert_eq!(snr_p(&spec, 0, 0).unwrap().value, 4.0);
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, 0.0], 2, 1.0);
        assert_eq!(snr_p(&spec, 0, 0).unwrap().value, 3.0);
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, 0.0], 1, 1e6);
        assert_relative_eq!(snr_p(&spec, 0, 0).unwrap().value, 1e-6, max_relative = 1e-15);
        let spec = gaussian_regression(Covariance::identity(2), vec![1.0, 0.0], 1, 0.0);
        assert!(snr_p(&spec, 0, 0).unwrap().value.is_infinite());

        // Monte Carlo path agrees with the Gaussian closed form on a non-Gaussian family
        // whose fourth moment is known: Rademacher, θ* = e1, p = 2 → E x⁴ = 1.
        let spec = DataSpec::regression(
            Covariance::identity(2),
            XFamily::Rademacher,
            vec![1.0, 0.0],
            2,
            NoiseFamily::Gaussian,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(snr_p(&spec, 1000, 3).unwrap().value, 1.0, max_relative = 1e-9);

        let spec = DataSpec::regression(
            Covariance::identity(2),
            XFamily::UniformCube,
            vec![1.0, 2.0],
            1,
            NoiseFamily::Uniform,
            0.5,
        )
        .unwrap();
        let e = snr_p(&spec, 10, 3).unwrap();
        assert_relative_eq!(e.value, 10.0, max_relative = 1e-14);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn double_factorial() {
        assert_eq!(odd_double_factorial(1), 1.0);
        assert_eq!(odd_double_factorial(2), 3.0);
        assert_eq!(odd_double_factorial(3), 15.0);
        assert_eq!(odd_double_factorial(4), 105.0);
    }
}
