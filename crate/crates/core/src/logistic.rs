//! Binary regression with the logistic link: log-likelihood, gradients,
//! Lipschitz/smoothness constants, design samplers and the divergence
//! oracle driving the Gaussian VB experiments.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian_vb::LogLikModel;
use crate::tempered::{LipschitzStats, TemperConfig};

/// One observation: a ±1 label and its covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDatum {
    pub label: i8,
    pub covariates: DVector<f64>,
}

impl LogisticDatum {
    pub fn new(label: i8, covariates: DVector<f64>) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::param("label", format!("must be ±1, got {label}")));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("covariates", "must be finite"));
        }
        Ok(Self { label, covariates })
    }
}

/// Moments of the log-Lipschitz envelope for this model (K₁ = 2E‖X‖,
/// K₂ = 4E‖X‖²) together with the gradient-smoothness estimate fed into the
/// SGD step size.
#[derive(Debug, Clone, Copy)]
pub struct LogisticStats {
    pub k1: f64,
    pub k2: f64,
    pub smoothness_l: f64,
}

/// Numerically stable log(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-datum log-likelihood −log(1 + exp(−y·zᵀθ)).
pub fn log_lik(theta: &DVector<f64>, datum: &LogisticDatum) -> Result<f64> {
    if theta.len() != datum.covariates.len() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, covariates {}",
            theta.len(),
            datum.covariates.len()
        )));
    }
    let margin = f64::from(datum.label) * theta.dot(&datum.covariates);
    Ok(-softplus(-margin))
}

/// Gradient y·z·σ(−y·zᵀθ); its norm is bounded by ‖z‖.
pub fn grad_log_lik(theta: &DVector<f64>, datum: &LogisticDatum) -> DVector<f64> {
    assert_eq!(theta.len(), datum.covariates.len(), "dimension mismatch");
    let y = f64::from(datum.label);
    let margin = y * theta.dot(&datum.covariates);
    &datum.covariates * (y * sigmoid(-margin))
}

/// Estimates K₁ = 2·mean‖z‖, K₂ = 4·mean‖z‖² and the smoothness constant
/// Σᵢ‖zᵢzᵢᵀ‖₂ + 1/ϑ² + d/ψ used by the step-size rule. The d/ψ term bounds
/// the log-det Hessian on the floored set, so an active floor ψ > 0 is
/// required.
pub fn estimate_stats(
    data: &[LogisticDatum],
    prior_variance: f64,
    psd_floor: f64,
) -> Result<LogisticStats> {
    if data.is_empty() {
        return Err(Error::param("data", "must be nonempty"));
    }
    if !(prior_variance > 0.0) {
        return Err(Error::param("prior_variance", "must be positive"));
    }
    if !(psd_floor > 0.0) {
        return Err(Error::param(
            "psd_floor",
            "smoothness of the log-det term requires an active floor psi > 0",
        ));
    }
    let d = data[0].covariates.len() as f64;
    let n = data.len() as f64;
    let mut norm_sum = 0.0;
    let mut norm_sq_sum = 0.0;
    for datum in data {
        let ns = datum.covariates.norm_squared();
        norm_sum += ns.sqrt();
        norm_sq_sum += ns;
    }
    Ok(LogisticStats {
        k1: 2.0 * norm_sum / n,
        k2: 4.0 * norm_sq_sum / n,
        // ‖zzᵀ‖₂ = ‖z‖², summed over the data, plus the prior-quadratic and
        // log-det Hessian bounds.
        smoothness_l: norm_sq_sum + 1.0 / prior_variance + d / psd_floor,
    })
}

/// Covariate law for the synthetic designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignKind {
    UnitSphere,
    Gaussian { s2: f64 },
}

/// Draws `n` covariates from the design law and labels from the logistic
/// model at `theta0`. Deterministic given the seed.
pub fn sample_design(kind: DesignKind, theta0: &DVector<f64>, n: usize, seed: u64) -> Vec<LogisticDatum> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_design_with(kind, theta0, n, &mut rng)
}

/// As [`sample_design`] but drawing from a caller-provided stream.
pub fn sample_design_with(
    kind: DesignKind,
    theta0: &DVector<f64>,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<LogisticDatum> {
    let d = theta0.len();
    (0..n)
        .map(|_| {
            let z = sample_covariate(kind, d, rng);
            let p_plus = sigmoid(z.dot(theta0));
            let label = if rng.random::<f64>() < p_plus { 1 } else { -1 };
            LogisticDatum {
                label,
                covariates: z,
            }
        })
        .collect()
}

/// One covariate draw from the design law.
pub fn sample_covariate(kind: DesignKind, d: usize, rng: &mut impl Rng) -> DVector<f64> {
    match kind {
        DesignKind::UnitSphere => {
            loop {
                let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = g.norm();
                if norm > 1e-12 {
                    return g / norm;
                }
            }
        }
        DesignKind::Gaussian { s2 } => {
            let s = s2.sqrt();
            DVector::from_fn(d, |_, _| s * rng.sample::<f64, _>(StandardNormal))
        }
    }
}

/// The ε_n rate with (K₁, K₂) in place of (B₁, B₂); delegates to the
/// Lipschitz-model evaluator.
pub fn corollary31_rate(
    stats: &LogisticStats,
    dim: usize,
    n: usize,
    theta0_norm: f64,
    prior_variance: f64,
) -> Result<f64> {
    let lip = LipschitzStats::new(stats.k1, stats.k2, dim, theta0_norm)?;
    // The temper does not enter the rate; any valid value works here.
    let cfg = TemperConfig::new(0.5, prior_variance)?;
    crate::tempered::epsilon_n_lipschitz(&lip, n, &cfg)
}

/// The full logistic dataset as a [`LogLikModel`] for the VB optimizer.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    data: Vec<LogisticDatum>,
    dim: usize,
}

impl LogisticModel {
    pub fn new(data: Vec<LogisticDatum>) -> Result<Self> {
        let dim = data
            .first()
            .map(|d| d.covariates.len())
            .ok_or_else(|| Error::param("data", "must be nonempty"))?;
        if data.iter().any(|d| d.covariates.len() != dim) {
            return Err(Error::DimensionMismatch("covariate dimensions differ".into()));
        }
        Ok(Self { data, dim })
    }

    pub fn data(&self) -> &[LogisticDatum] {
        &self.data
    }
}

impl LogLikModel for LogisticModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        self.data
            .iter()
            .map(|d| {
                let margin = f64::from(d.label) * theta.dot(&d.covariates);
                -softplus(-margin)
            })
            .sum()
    }

    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for d in &self.data {
            g += grad_log_lik(theta, d);
        }
        g
    }
}

/// The binary conditional contribution Σ_y p_θ(y|z)^α p_{θ₀}(y|z)^{1−α};
/// D_α of the conditional laws at z is (1/(α−1))·log of this.
pub fn binary_renyi_sum(theta: &DVector<f64>, theta0: &DVector<f64>, z: &DVector<f64>, alpha: f64) -> f64 {
    let m = z.dot(theta);
    let m0 = z.dot(theta0);
    let mut total = 0.0;
    for y in [1.0, -1.0] {
        // log p(y|z) = −softplus(−y·m)
        let lp = -softplus(-y * m);
        let lp0 = -softplus(-y * m0);
        total += (alpha * lp + (1.0 - alpha) * lp0).exp();
    }
    total
}

/// Monte Carlo estimate of D_α(P_θ, P_{θ₀}) over fresh design draws:
/// (1/(α−1))·log E_z[Σ_y p_θ^α p_{θ₀}^{1−α}]. The conditional part is exact;
/// only the design expectation is sampled.
pub fn renyi_divergence_mc(
    theta: &DVector<f64>,
    theta0: &DVector<f64>,
    design: &[DVector<f64>],
    alpha: f64,
) -> f64 {
    assert!(!design.is_empty(), "design sample must be nonempty");
    let mean: f64 = design
        .iter()
        .map(|z| binary_renyi_sum(theta, theta0, z, alpha))
        .sum::<f64>()
        / design.len() as f64;
    mean.ln() / (alpha - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn datum(y: i8, z: &[f64]) -> LogisticDatum {
        LogisticDatum::new(y, DVector::from_vec(z.to_vec())).unwrap()
    }

    #[test]
    fn log_lik_cases() {
        let d = datum(1, &[1.0, 0.0]);
        let zero = DVector::zeros(2);
        assert_relative_eq!(log_lik(&zero, &d).unwrap(), -(2.0f64.ln()), epsilon = 1e-15);

        // y·zᵀθ = 20 → −softplus(−20) ≈ −2.061e-9.
        let theta = DVector::from_vec(vec![20.0, 0.0]);
        let got = log_lik(&theta, &d).unwrap();
        assert_relative_eq!(got, -(-20.0f64).exp().ln_1p(), epsilon = 1e-18);
        assert!((got + 2.0611536e-9).abs() < 1e-15);

        assert!(log_lik(&DVector::zeros(3), &d).is_err());
    }

    #[test]
    fn label_flip_identity() {
        // loglik(θ,(y,z)) + loglik(θ,(−y,z)) = log[p(1−p)], p = σ(zᵀθ).
        let z = DVector::from_vec(vec![0.7, -1.2, 0.4]);
        let theta = DVector::from_vec(vec![0.3, 0.9, -0.5]);
        let plus = log_lik(&theta, &LogisticDatum::new(1, z.clone()).unwrap()).unwrap();
        let minus = log_lik(&theta, &LogisticDatum::new(-1, z.clone()).unwrap()).unwrap();
        let p = sigmoid(z.dot(&theta));
        assert_relative_eq!(plus + minus, (p * (1.0 - p)).ln(), epsilon = 1e-12);
    }

    #[test]
    fn grad_cases() {
        let d = datum(1, &[2.0, -1.0]);
        let zero = DVector::zeros(2);
        let g = grad_log_lik(&zero, &d);
        assert_relative_eq!((g - &d.covariates * 0.5).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..25 {
            let d = 3;
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = if rng.random::<bool>() { 1 } else { -1 };
            let datum = LogisticDatum::new(y, z).unwrap();
            let theta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = grad_log_lik(&theta, &datum);
            let h = 1e-6;
            for i in 0..d {
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let fd = (log_lik(&tp, &datum).unwrap() - log_lik(&tm, &datum).unwrap()) / (2.0 * h);
                assert_relative_eq!(g[i], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn grad_norm_bounded_by_covariate_norm() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let z = DVector::from_fn(2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let y = if rng.random::<bool>() { 1 } else { -1 };
            let theta = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = grad_log_lik(&theta, &LogisticDatum::new(y, z.clone()).unwrap());
            assert!(g.norm() <= z.norm() + 1e-12);
        }
    }

    #[test]
    fn lipschitz_property_on_probes() {
        // |loglik(θ) − loglik(θ')| ≤ ‖z‖·‖θ−θ'‖.
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..2000 {
            let z = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = if rng.random::<bool>() { 1 } else { -1 };
            let datum = LogisticDatum::new(y, z.clone()).unwrap();
            let a = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lhs = (log_lik(&a, &datum).unwrap() - log_lik(&b, &datum).unwrap()).abs();
            assert!(lhs <= z.norm() * (a.clone() - &b).norm() + 1e-12);
        }
    }

    #[test]
    fn per_datum_loglik_concave_along_lines() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = if rng.random::<bool>() { 1 } else { -1 };
            let datum = LogisticDatum::new(y, z).unwrap();
            let base = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dir = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let f = |t: f64| log_lik(&(&base + &dir * t), &datum).unwrap();
            for k in -5..5 {
                let t = k as f64 * 0.3;
                let second = f(t + 0.1) - 2.0 * f(t) + f(t - 0.1);
                assert!(second <= 1e-10, "second difference {second} must be <= 0");
            }
        }
    }

    #[test]
    fn estimate_stats_cases() {
        // Single datum z = e₁: Σ‖zzᵀ‖ = 1, plus 1/ϑ² + d/ψ.
        let data = vec![datum(1, &[1.0, 0.0])];
        let s = estimate_stats(&data, 1.0, 0.01).unwrap();
        assert_relative_eq!(s.smoothness_l, 1.0 + 1.0 + 2.0 / 0.01, epsilon = 1e-12);
        assert_relative_eq!(s.k1, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.k2, 4.0, epsilon = 1e-12);

        assert!(estimate_stats(&data, 1.0, 0.0).is_err());
        assert!(estimate_stats(&[], 1.0, 0.01).is_err());
    }

    #[test]
    fn estimate_stats_matches_design_laws() {
        let theta0 = DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0]);
        let sphere = sample_design(DesignKind::UnitSphere, &theta0, 4000, 1);
        let s = estimate_stats(&sphere, 1.0, 1e-3).unwrap();
        assert_relative_eq!(s.k1, 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.k2, 4.0, epsilon = 1e-9);

        // Gaussian design: K₂ ≈ 4s²d within sampling error.
        let s2 = 0.8;
        let gauss = sample_design(DesignKind::Gaussian { s2 }, &theta0, 20_000, 2);
        let s = estimate_stats(&gauss, 1.0, 1e-3).unwrap();
        let want = 4.0 * s2 * 4.0;
        assert!((s.k2 - want).abs() < 0.05 * want, "{} vs {}", s.k2, want);
    }

    #[test]
    fn sample_design_properties() {
        let theta0 = DVector::zeros(3);
        let data = sample_design(DesignKind::UnitSphere, &theta0, 4000, 3);
        for d in &data {
            assert_relative_eq!(d.covariates.norm(), 1.0, epsilon = 1e-12);
        }
        // θ₀ = 0: empirical balance within 3·√(n/4)/n of ½.
        let plus = data.iter().filter(|d| d.label == 1).count() as f64;
        let n = data.len() as f64;
        assert!((plus / n - 0.5).abs() <= 3.0 * (0.25 * n).sqrt() / n);

        // Strong signal along the covariates: labels nearly deterministic.
        let theta0 = DVector::from_vec(vec![50.0, 0.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let aligned: Vec<_> = (0..500)
            .map(|_| {
                let z = DVector::from_vec(vec![1.0, rng.random::<f64>()]);
                let p = sigmoid(z.dot(&theta0));
                let label = if rng.random::<f64>() < p { 1 } else { -1 };
                LogisticDatum::new(label, z).unwrap()
            })
            .collect();
        let plus = aligned.iter().filter(|d| d.label == 1).count();
        assert!(plus >= 499, "sigmoid saturation should fix the labels");
    }

    #[test]
    fn corollary_rate_delegates_and_decays() {
        let stats = LogisticStats {
            k1: 2.0,
            k2: 4.0,
            smoothness_l: 1.0,
        };
        let got = corollary31_rate(&stats, 5, 10_000, 1.0, 1.0).unwrap();
        let lip = LipschitzStats::new(2.0, 4.0, 5, 1.0).unwrap();
        let cfg = TemperConfig::new(0.5, 1.0).unwrap();
        let want = crate::tempered::epsilon_n_lipschitz(&lip, 10_000, &cfg).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-15);

        // Dominated by the (d/n)·log branch at these sizes.
        let d = 5.0f64;
        let n = 10_000.0;
        let branch = d / n * (0.5 * (n * n * d.sqrt()).ln() + 1.0 / n) + 1.0 / n - d / (2.0 * n);
        assert_relative_eq!(got, branch, epsilon = 1e-12);

        let mut prev = f64::INFINITY;
        for n in [100usize, 1000, 10_000] {
            let v = corollary31_rate(&stats, 5, n, 1.0, 1.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn binary_renyi_identical_thetas() {
        let theta = DVector::from_vec(vec![0.4, -0.6]);
        let z = DVector::from_vec(vec![1.0, 2.0]);
        let s = binary_renyi_sum(&theta, &theta, &z, 0.5);
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        let div = renyi_divergence_mc(&theta, &theta, &[z], 0.5);
        assert_relative_eq!(div, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn renyi_mc_matches_two_point_divergence() {
        // For a single fixed z the MC formula equals renyi_discrete on the
        // conditional two-point laws.
        use crate::divergences::{renyi_discrete, DiscreteDistribution, RenyiOrder};
        let theta = DVector::from_vec(vec![0.8]);
        let theta0 = DVector::from_vec(vec![-0.3]);
        let z = DVector::from_vec(vec![1.4]);
        let alpha = 0.5;
        let got = renyi_divergence_mc(&theta, &theta0, std::slice::from_ref(&z), alpha);
        let p = sigmoid(z.dot(&theta));
        let q = sigmoid(z.dot(&theta0));
        let pd = DiscreteDistribution::new(vec![p, 1.0 - p]).unwrap();
        let qd = DiscreteDistribution::new(vec![q, 1.0 - q]).unwrap();
        let want = renyi_discrete(&pd, &qd, RenyiOrder::new(alpha).unwrap()).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }
}
