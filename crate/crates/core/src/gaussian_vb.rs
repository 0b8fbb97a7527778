//! Gaussian variational families and projected stochastic gradient descent
//! on the tempered variational objective.
//!
//! The approximation state is a pair x = (m, C) with Σ = C·Cᵀ. One optimizer
//! serves the full, diagonal and isotropic families: the family constraint
//! is enforced by projecting the C-gradient onto the family pattern before
//! each step. A single `svb_run` is sequential (iterates depend on each
//! other); independent runs with distinct seeds can execute in parallel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Covariance-factor pattern of the Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianFamily {
    Full,
    Diag,
    Iso,
}

/// A Gaussian approximation N(m, C·Cᵀ) tagged with its family.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalGaussian {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
    pub family: GaussianFamily,
}

impl VariationalGaussian {
    pub fn new(mean: DVector<f64>, factor: DMatrix<f64>, family: GaussianFamily) -> Result<Self> {
        let d = mean.len();
        if factor.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "factor is {:?} for dimension {d}",
                factor.shape()
            )));
        }
        let vg = Self {
            mean,
            factor,
            family,
        };
        if !vg.factor_in_pattern() {
            return Err(Error::param("factor", "does not satisfy the family pattern"));
        }
        Ok(vg)
    }

    /// Isotropic state C = σ·I.
    pub fn isotropic(mean: DVector<f64>, sigma: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            factor: DMatrix::identity(d, d) * sigma,
            family: GaussianFamily::Iso,
        }
    }

    /// Default initial state for the rate-optimal run: m = 0 and isotropic
    /// variance 1/(n√d), re-tagged with the requested family.
    pub fn default_init(dim: usize, n: usize, family: GaussianFamily) -> Self {
        let sigma = (1.0 / (n as f64 * (dim as f64).sqrt())).sqrt();
        let mut init = Self::isotropic(DVector::zeros(dim), sigma);
        init.family = family;
        init
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Draw θ = m + C·ξ with ξ ~ N(0, I).
    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let xi = standard_normal_vector(self.dim(), rng);
        &self.mean + &self.factor * xi
    }

    /// Euclidean norm of the stacked (m, C) parameter vector.
    pub fn stacked_norm(&self) -> f64 {
        (self.mean.norm_squared() + self.factor.norm_squared()).sqrt()
    }

    fn factor_in_pattern(&self) -> bool {
        match self.family {
            GaussianFamily::Full => true,
            GaussianFamily::Diag => {
                let d = self.dim();
                (0..d).all(|i| (0..d).all(|j| i == j || self.factor[(i, j)] == 0.0))
            }
            GaussianFamily::Iso => {
                let d = self.dim();
                let s = self.factor[(0, 0)];
                (0..d).all(|i| (0..d).all(|j| self.factor[(i, j)] == if i == j { s } else { 0.0 }))
            }
        }
    }
}

pub fn standard_normal_vector(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Feasible set: stacked-norm ball of radius B, optionally intersected with
/// {C·Cᵀ ⪰ ψI}. The floor must satisfy ψ ≤ 1/(n√d); this is checked at
/// configuration time.
#[derive(Debug, Clone, Copy)]
pub struct FeasibleSet {
    pub ball_radius: f64,
    pub psd_floor: f64,
}

impl FeasibleSet {
    pub fn new(ball_radius: f64, psd_floor: f64, n: usize, dim: usize) -> Result<Self> {
        if !(ball_radius > 0.0) {
            return Err(Error::param("ball_radius", "must be positive"));
        }
        if psd_floor < 0.0 {
            return Err(Error::param("psd_floor", "must be nonnegative"));
        }
        let cap = 1.0 / (n as f64 * (dim as f64).sqrt());
        if psd_floor > 0.0 && psd_floor > cap + 1e-15 {
            return Err(Error::param(
                "psd_floor",
                format!("active floor must satisfy psi <= 1/(n*sqrt(d)) = {cap:.3e}"),
            ));
        }
        Ok(Self {
            ball_radius,
            psd_floor,
        })
    }

    /// Ball-only feasible set (no eigenvalue floor).
    pub fn ball(ball_radius: f64) -> Result<Self> {
        if !(ball_radius > 0.0) {
            return Err(Error::param("ball_radius", "must be positive"));
        }
        Ok(Self {
            ball_radius,
            psd_floor: 0.0,
        })
    }
}

/// Stochastic gradient configuration: iteration count T, smoothness
/// estimate L (sets the step B/(L√2T) unless overridden), and the RNG seed.
#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub iters: usize,
    pub smoothness: f64,
    pub step_override: Option<f64>,
    pub seed: u64,
}

impl SgdConfig {
    pub fn new(iters: usize, smoothness: f64, seed: u64) -> Result<Self> {
        if iters == 0 {
            return Err(Error::param("iters", "must be at least 1"));
        }
        if !(smoothness > 0.0) {
            return Err(Error::param("smoothness", "must be positive"));
        }
        Ok(Self {
            iters,
            smoothness,
            step_override: None,
            seed,
        })
    }

    pub fn with_step_override(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::param("step_override", "must be positive"));
        }
        self.step_override = Some(step);
        Ok(self)
    }
}

/// A log-likelihood model: total log-density of the dataset and its gradient
/// in θ.
pub trait LogLikModel {
    fn dim(&self) -> usize;
    fn log_lik(&self, theta: &DVector<f64>) -> f64;
    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64>;
}

/// Gaussian linear regression y = zᵀθ + N(0, σ²): the conjugate reference
/// model whose tempered variational objective and minimizer are available in
/// closed form.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub design: DMatrix<f64>,
    pub responses: DVector<f64>,
    pub noise_variance: f64,
}

impl LinearGaussianModel {
    pub fn new(design: DMatrix<f64>, responses: DVector<f64>, noise_variance: f64) -> Result<Self> {
        if design.nrows() != responses.len() {
            return Err(Error::DimensionMismatch("design rows vs responses".into()));
        }
        if !(noise_variance > 0.0) {
            return Err(Error::param("noise_variance", "must be positive"));
        }
        Ok(Self {
            design,
            responses,
            noise_variance,
        })
    }

    /// Closed-form tempered variational objective
    /// F(m, C) = α·E_q[−log lik] + KL(N(m, CCᵀ), N(0, ϑ²I)), up to the
    /// Gaussian normalizing constant of the likelihood.
    pub fn expected_objective(
        &self,
        x: &VariationalGaussian,
        prior_variance: f64,
        alpha: f64,
    ) -> Result<f64> {
        let sigma = self.covariance_psd(x);
        let resid = &self.responses - &self.design * &x.mean;
        let quad: f64 = resid.norm_squared()
            + (&self.design * &sigma)
                .component_mul(&self.design)
                .sum();
        let d = x.dim();
        let kl = crate::divergences::kl_gaussian(
            &x.mean,
            &sigma,
            &DVector::zeros(d),
            &(DMatrix::identity(d, d) * prior_variance),
        )?;
        let n = self.responses.len() as f64;
        let norm_const = 0.5 * n * (2.0 * std::f64::consts::PI * self.noise_variance).ln();
        Ok(alpha * (quad / (2.0 * self.noise_variance) + norm_const) + kl)
    }

    /// The exact minimizer of the tempered objective over the full family:
    /// Σ* = (α ZᵀZ/σ² + I/ϑ²)⁻¹, m* = Σ*·αZᵀy/σ².
    pub fn exact_posterior(&self, prior_variance: f64, alpha: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = self.design.ncols();
        let precision = self.design.transpose() * &self.design * (alpha / self.noise_variance)
            + DMatrix::identity(d, d) / prior_variance;
        let chol = nalgebra::Cholesky::new(precision)
            .ok_or_else(|| Error::Numerical("posterior precision not PD".into()))?;
        let rhs = self.design.transpose() * &self.responses * (alpha / self.noise_variance);
        let mean = chol.solve(&rhs);
        let cov = chol.inverse();
        Ok((mean, cov))
    }

    fn covariance_psd(&self, x: &VariationalGaussian) -> DMatrix<f64> {
        x.covariance()
    }
}

impl LogLikModel for LinearGaussianModel {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        let resid = &self.responses - &self.design * theta;
        let n = self.responses.len() as f64;
        -resid.norm_squared() / (2.0 * self.noise_variance)
            - 0.5 * n * (2.0 * std::f64::consts::PI * self.noise_variance).ln()
    }

    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64> {
        let resid = &self.responses - &self.design * theta;
        self.design.transpose() * resid / self.noise_variance
    }
}

fn log_abs_det(factor: &DMatrix<f64>) -> Result<f64> {
    let lu = factor.clone().lu();
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Numerical("singular factor C: log-density undefined".into()));
    }
    Ok(det.abs().ln())
}

/// One reparameterized sample of the objective,
/// f((m,C), ξ) = −α log p_{m+Cξ}(X₁ⁿ) + log(dΦ_{m,CCᵀ}/dπ)(m + Cξ),
/// with π = N(0, ϑ²I). The density ratio reduces to
/// −½‖ξ‖² − log|det C| + ‖m+Cξ‖²/(2ϑ²) + (d/2)·log ϑ².
pub fn objective_sample(
    x: &VariationalGaussian,
    xi: &DVector<f64>,
    model: &impl LogLikModel,
    prior_variance: f64,
    alpha: f64,
) -> Result<f64> {
    if xi.len() != x.dim() || model.dim() != x.dim() {
        return Err(Error::DimensionMismatch("objective_sample arguments".into()));
    }
    let theta = &x.mean + &x.factor * xi;
    let log_det = log_abs_det(&x.factor)?;
    let d = x.dim() as f64;
    let log_ratio = -0.5 * xi.norm_squared() - log_det
        + theta.norm_squared() / (2.0 * prior_variance)
        + 0.5 * d * prior_variance.ln();
    let value = -alpha * model.log_lik(&theta) + log_ratio;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite objective sample".into()));
    }
    Ok(value)
}

/// Exact gradient of [`objective_sample`] in (m, C) at fixed ξ:
/// ∇_m f = g(θ), ∇_C f = g(θ)·ξᵀ − C⁻ᵀ with
/// g(θ) = −α ∇log p(θ) + θ/ϑ² and θ = m + Cξ.
pub fn grad_objective_sample(
    x: &VariationalGaussian,
    xi: &DVector<f64>,
    model: &impl LogLikModel,
    prior_variance: f64,
    alpha: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if xi.len() != x.dim() || model.dim() != x.dim() {
        return Err(Error::DimensionMismatch("grad_objective_sample arguments".into()));
    }
    let theta = &x.mean + &x.factor * xi;
    let g = -model.grad_log_lik(&theta) * alpha + &theta / prior_variance;
    let inv_t = x
        .factor
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular factor C in log-det gradient".into()))?
        .transpose();
    let grad_c = &g * xi.transpose() - inv_t;
    if g.iter().any(|v| !v.is_finite()) || grad_c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok((g, grad_c))
}

/// Orthogonal projection of the C-gradient onto the family pattern: zero the
/// off-pattern entries (diag), or average onto span{I} (iso).
pub fn constrain_gradient(grad_c: &mut DMatrix<f64>, family: GaussianFamily) {
    match family {
        GaussianFamily::Full => {}
        GaussianFamily::Diag => {
            let d = grad_c.nrows();
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        grad_c[(i, j)] = 0.0;
                    }
                }
            }
        }
        GaussianFamily::Iso => {
            let d = grad_c.nrows();
            let mean_diag = grad_c.trace() / d as f64;
            grad_c.fill(0.0);
            for i in 0..d {
                grad_c[(i, i)] = mean_diag;
            }
        }
    }
}

fn floor_factor(x: &mut VariationalGaussian, psi: f64) {
    if psi == 0.0 {
        return;
    }
    match x.family {
        GaussianFamily::Iso => {
            let s = x.factor[(0, 0)];
            if s * s < psi {
                let fixed = psi.sqrt().copysign(if s == 0.0 { 1.0 } else { s });
                let d = x.dim();
                x.factor = DMatrix::identity(d, d) * fixed;
            }
        }
        GaussianFamily::Diag => {
            let d = x.dim();
            for i in 0..d {
                let c = x.factor[(i, i)];
                if c * c < psi {
                    x.factor[(i, i)] = psi.sqrt().copysign(if c == 0.0 { 1.0 } else { c });
                }
            }
        }
        GaussianFamily::Full => {
            let cov = x.covariance();
            let eig = cov.symmetric_eigen();
            if eig.eigenvalues.iter().all(|&l| l >= psi) {
                return;
            }
            let d = x.dim();
            let mut sqrt_vals = DMatrix::zeros(d, d);
            for i in 0..d {
                sqrt_vals[(i, i)] = eig.eigenvalues[i].max(psi).sqrt();
            }
            x.factor = &eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose();
        }
    }
}

/// Projection onto the feasible set: rescale the stacked (m, C) vector onto
/// the B-ball, then floor the eigenvalues of C·Cᵀ at ψ. The two passes are
/// repeated until both constraints hold (the floor can push the norm
/// marginally outside the ball), which makes the map idempotent. This
/// composition approximates the exact joint Euclidean projection.
pub fn project_feasible(x: &VariationalGaussian, fs: &FeasibleSet) -> VariationalGaussian {
    let mut out = x.clone();
    for _ in 0..64 {
        let norm = out.stacked_norm();
        if norm > fs.ball_radius {
            let scale = fs.ball_radius / norm;
            out.mean *= scale;
            out.factor *= scale;
        }
        floor_factor(&mut out, fs.psd_floor);
        if out.stacked_norm() <= fs.ball_radius * (1.0 + 1e-12) {
            break;
        }
    }
    out
}

/// The Theorem step size γ_T = B/(L·√(2T)).
pub fn step_size(ball_radius: f64, smoothness: f64, iters: usize) -> f64 {
    ball_radius / (smoothness * (2.0 * iters as f64).sqrt())
}

/// Outcome of a stochastic VB run: the uniformly averaged iterate and the
/// per-iteration sampled objective values f(x_{t-1}, ξ_t).
#[derive(Debug, Clone)]
pub struct SvbOutcome {
    pub averaged: VariationalGaussian,
    pub trace: Vec<f64>,
}

/// Projected stochastic gradient descent on the tempered variational
/// objective: T steps x_t ← P(x_{t−1} − γ_T ∇f(x_{t−1}, ξ_t)) with fresh
/// ξ_t ~ N(0, I) per step, returning x̄_T = (1/T)Σ x_t. Deterministic given
/// the seed.
pub fn svb_run(
    model: &impl LogLikModel,
    prior_variance: f64,
    alpha: f64,
    fs: &FeasibleSet,
    cfg: &SgdConfig,
    x0: &VariationalGaussian,
) -> Result<SvbOutcome> {
    if x0.dim() != model.dim() {
        return Err(Error::DimensionMismatch("x0 vs model dimension".into()));
    }
    let feasible = project_feasible(x0, fs);
    if (feasible.mean.clone() - &x0.mean).norm() + (feasible.factor.clone() - &x0.factor).norm() > 1e-9 {
        return Err(Error::param("x0", "initial point must be feasible"));
    }
    let gamma = cfg
        .step_override
        .unwrap_or_else(|| step_size(fs.ball_radius, cfg.smoothness, cfg.iters));
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut x = x0.clone();
    let mut mean_sum = DVector::zeros(x.dim());
    let mut factor_sum = DMatrix::zeros(x.dim(), x.dim());
    let mut trace = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let xi = standard_normal_vector(x.dim(), &mut rng);
        trace.push(objective_sample(&x, &xi, model, prior_variance, alpha)?);
        let (grad_m, mut grad_c) = grad_objective_sample(&x, &xi, model, prior_variance, alpha)?;
        constrain_gradient(&mut grad_c, x.family);
        let stepped = VariationalGaussian {
            mean: &x.mean - grad_m * gamma,
            factor: &x.factor - grad_c * gamma,
            family: x.family,
        };
        x = project_feasible(&stepped, fs);
        mean_sum += &x.mean;
        factor_sum += &x.factor;
    }
    let t = cfg.iters as f64;
    Ok(SvbOutcome {
        averaged: VariationalGaussian {
            mean: mean_sum / t,
            factor: factor_sum / t,
            family: x.family,
        },
        trace,
    })
}

/// Monte Carlo estimate of ∫ D(θ) q(dθ).
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Set when the divergence returned +∞ at a sampled θ; the estimate is
    /// then reported as infinite.
    pub infinite_at: Option<DVector<f64>>,
}

/// Monte Carlo mean and standard error of a divergence under θ ~ q.
pub fn integrated_divergence_mc(
    q: &VariationalGaussian,
    divergence: impl Fn(&DVector<f64>) -> f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(Error::param("samples", "needs at least 100 Monte Carlo draws"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let theta = q.sample(&mut rng);
        let v = divergence(&theta);
        if v.is_infinite() {
            return Ok(McEstimate {
                mean: f64::INFINITY,
                std_error: f64::INFINITY,
                infinite_at: Some(theta),
            });
        }
        if v.is_nan() {
            return Err(Error::Numerical("divergence returned NaN".into()));
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        infinite_at: None,
    })
}
