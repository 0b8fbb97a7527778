//! Rényi, Kullback–Leibler and Hellinger divergences.
//!
//! Covers exact discrete-support evaluation, the closed forms for the
//! Gaussian-noise model families used by the estimators in this crate, a
//! quadrature route for the regression model, and clip operators. Mutually
//! singular pairs evaluate to `+∞` rather than erroring; downstream bound
//! evaluators propagate the infinity.
//!
//! All operations are pure functions on immutable values and are safe to
//! call concurrently.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::quad;
use crate::scalar::Real;

/// Order α of a Rényi divergence, restricted to (0, 1]. `α = 1` is read as
/// the KL limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiOrder<S> {
    alpha: S,
}

impl<S: Real> RenyiOrder<S> {
    pub fn new(alpha: S) -> Result<Self> {
        if !(alpha > S::zero() && alpha <= S::one()) {
            return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    /// Whether this order denotes the KL limit α → 1.
    pub fn is_kl(&self) -> bool {
        self.alpha == S::one()
    }
}

/// A probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<S> {
    weights: Vec<S>,
}

impl<S: Real> DiscreteDistribution<S> {
    /// Validates nonnegativity and unit total mass (within 1e-12).
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: S = weights.iter().cloned().sum();
        if (total - S::one()).abs() > S::c(1e-12) {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let w = S::one() / S::c(len as f64);
        Ok(Self {
            weights: vec![w; len],
        })
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Tensor product distribution over the product support.
    pub fn product(&self, other: &Self) -> Self {
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for &a in &self.weights {
            for &b in &other.weights {
                weights.push(a * b);
            }
        }
        // Renormalize away the accumulated rounding so the invariant holds.
        let total: S = weights.iter().cloned().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { weights }
    }
}

/// Two Gaussians sharing a variance; the Rényi divergence between them has
/// the closed form α(μ₁−μ₂)²/(2σ²).
#[derive(Debug, Clone, Copy)]
pub struct SharedVarGaussianPair<S> {
    pub mu1: S,
    pub mu2: S,
    sigma2: S,
}

impl<S: Real> SharedVarGaussianPair<S> {
    pub fn new(mu1: S, mu2: S, sigma2: S) -> Result<Self> {
        if !(sigma2 > S::zero()) {
            return Err(Error::param("sigma2", format!("must be positive, got {sigma2}")));
        }
        Ok(Self { mu1, mu2, sigma2 })
    }

    pub fn sigma2(&self) -> S {
        self.sigma2
    }
}

/// Inputs of the matrix-model divergence d_{α,σ}(M, N).
#[derive(Debug, Clone)]
pub struct MatrixPair<S: RealField> {
    pub first: DMatrix<S>,
    pub second: DMatrix<S>,
    sigma2: S,
    order: RenyiOrder<S>,
}

impl<S: Real + RealField> MatrixPair<S> {
    pub fn new(first: DMatrix<S>, second: DMatrix<S>, sigma2: S, order: RenyiOrder<S>) -> Result<Self> {
        if first.shape() != second.shape() {
            return Err(Error::DimensionMismatch(format!(
                "matrices are {:?} vs {:?}",
                first.shape(),
                second.shape()
            )));
        }
        if !(sigma2 > S::zero()) {
            return Err(Error::param("sigma2", format!("must be positive, got {sigma2}")));
        }
        Ok(Self {
            first,
            second,
            sigma2,
            order,
        })
    }

    pub fn sigma2(&self) -> S {
        self.sigma2
    }

    pub fn order(&self) -> RenyiOrder<S> {
        self.order
    }
}

/// Positive clipping level for the clip operators.
#[derive(Debug, Clone, Copy)]
pub struct ClipLevel<S> {
    level: S,
}

impl<S: Real> ClipLevel<S> {
    pub fn new(level: S) -> Result<Self> {
        if !(level > S::zero()) {
            return Err(Error::param("clip level", format!("must be positive, got {level}")));
        }
        Ok(Self { level })
    }

    pub fn get(&self) -> S {
        self.level
    }
}

fn check_same_support<S: Real>(p: &DiscreteDistribution<S>, q: &DiscreteDistribution<S>) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "support sizes {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// α-Rényi divergence between finite-support distributions,
/// (1/(α−1)) log Σᵢ pᵢ^α qᵢ^{1−α}. Returns `+∞` exactly when the pair is
/// mutually singular. Requires α ∈ (0, 1); use [`kl_discrete`] for the limit.
pub fn renyi_discrete<S: Real>(
    p: &DiscreteDistribution<S>,
    q: &DiscreteDistribution<S>,
    order: RenyiOrder<S>,
) -> Result<S> {
    check_same_support(p, q)?;
    if order.is_kl() {
        return Err(Error::param("alpha", "must be < 1 here; call kl_discrete for the KL limit"));
    }
    let a = order.alpha();
    let mut total = S::zero();
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi > S::zero() && qi > S::zero() {
            total += pi.powf(a) * qi.powf(S::one() - a);
        }
    }
    if total == S::zero() {
        return Ok(S::infinity());
    }
    Ok(total.ln() / (a - S::one()))
}

/// KL divergence Σ pᵢ log(pᵢ/qᵢ) with the 0·log 0 = 0 convention; `+∞` when
/// absolute continuity fails.
pub fn kl_discrete<S: Real>(p: &DiscreteDistribution<S>, q: &DiscreteDistribution<S>) -> Result<S> {
    check_same_support(p, q)?;
    let mut total = S::zero();
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi > S::zero() {
            if qi == S::zero() {
                return Ok(S::infinity());
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// Total variation distance ½ Σ |pᵢ − qᵢ|.
pub fn total_variation_discrete<S: Real>(
    p: &DiscreteDistribution<S>,
    q: &DiscreteDistribution<S>,
) -> Result<S> {
    check_same_support(p, q)?;
    let sum: S = p
        .weights()
        .iter()
        .zip(q.weights())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    Ok(sum * S::c(0.5))
}

/// Closed form D_α(N(μ₁,σ²), N(μ₂,σ²)) = α(μ₁−μ₂)²/(2σ²), valid for α ∈ (0, 1].
pub fn renyi_gaussian_shared_var<S: Real>(pair: &SharedVarGaussianPair<S>, order: RenyiOrder<S>) -> S {
    let gap = pair.mu1 - pair.mu2;
    order.alpha() * gap * gap / (S::c(2.0) * pair.sigma2())
}

/// KL between multivariate Gaussians,
/// ½ [tr(S₂⁻¹S₁) + (m₂−m₁)ᵀS₂⁻¹(m₂−m₁) − d + log det S₂ − log det S₁],
/// computed through Cholesky factors. The arguments are ordered
/// KL(N(m₁,S₁) ‖ N(m₂,S₂)); the divergence is not symmetric.
pub fn kl_gaussian<S: Real + RealField>(
    m1: &DVector<S>,
    s1: &DMatrix<S>,
    m2: &DVector<S>,
    s2: &DMatrix<S>,
) -> Result<S> {
    let d = m1.len();
    if m2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::DimensionMismatch("Gaussian KL arguments".into()));
    }
    let chol2 = nalgebra::Cholesky::new(s2.clone())
        .ok_or_else(|| Error::Numerical("second covariance is not positive definite".into()))?;
    let chol1 = nalgebra::Cholesky::new(s1.clone())
        .ok_or_else(|| Error::Numerical("first covariance is not positive definite".into()))?;
    let trace = chol2.solve(s1).trace();
    let diff = m2 - m1;
    let quad = diff.dot(&chol2.solve(&diff));
    let log_det = |c: &nalgebra::Cholesky<S, nalgebra::Dyn>| -> S {
        let l = c.l_dirty();
        let mut acc = S::zero();
        for i in 0..d {
            acc += Float::ln(l[(i, i)]);
        }
        acc + acc
    };
    let half = S::c(0.5);
    Ok(half * (trace + quad - S::c(d as f64) + log_det(&chol2) - log_det(&chol1)))
}

/// Squared Hellinger distance from the order-½ Rényi divergence:
/// H² = 2[1 − exp(−½ D_{1/2})], always ≤ D_{1/2}.
pub fn hellinger_sq_from_renyi_half<S: Real>(d_half: S) -> Result<S> {
    if d_half < S::zero() || d_half.is_nan() {
        return Err(Error::param("d_half", format!("must be nonnegative, got {d_half}")));
    }
    let two = S::c(2.0);
    Ok(two * (S::one() - (-(d_half * S::c(0.5))).exp()))
}

/// d_{α,σ}(M, N) for the uniformly-sampled-cell Gaussian observation model:
/// (1/(α−1)) log[(1/(mp)) Σᵢⱼ exp(α(α−1)(Mᵢⱼ−Nᵢⱼ)²/(2σ²))].
///
/// The exponents are all nonpositive so the log-mean-exp is guarded by
/// subtracting the maximum before exponentiating.
pub fn renyi_matrix_model<S: Real + RealField>(pair: &MatrixPair<S>) -> Result<S> {
    let a = pair.order().alpha();
    if pair.order().is_kl() {
        return Err(Error::param("alpha", "must be < 1 here; call kl_matrix_model for the KL limit"));
    }
    let coeff = a * (a - S::one()) / (S::c(2.0) * pair.sigma2());
    let (rows, cols) = pair.first.shape();
    let mut exponents = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let diff = pair.first[(i, j)] - pair.second[(i, j)];
            exponents.push(coeff * diff * diff);
        }
    }
    let lse = crate::scalar::log_sum_exp(&exponents);
    let log_mean = lse - Float::ln(S::c((rows * cols) as f64));
    Ok(log_mean / (a - S::one()))
}

/// KL for the same model: ‖M−N‖_F² / (2σ² m p).
pub fn kl_matrix_model<S: Real + RealField>(m: &DMatrix<S>, n: &DMatrix<S>, sigma2: S) -> Result<S> {
    if m.shape() != n.shape() {
        return Err(Error::DimensionMismatch(format!(
            "matrices are {:?} vs {:?}",
            m.shape(),
            n.shape()
        )));
    }
    if !(sigma2 > S::zero()) {
        return Err(Error::param("sigma2", format!("must be positive, got {sigma2}")));
    }
    let (rows, cols) = m.shape();
    let fro2 = (m - n).norm_squared();
    Ok(fro2 / (S::c(2.0) * sigma2 * S::c((rows * cols) as f64)))
}

/// Entrywise clip of a matrix to [−C, C].
pub fn clip_matrix<S: Real + RealField>(m: &DMatrix<S>, level: ClipLevel<S>) -> DMatrix<S> {
    let c = level.get();
    m.map(|v| Float::min(Float::max(v, -c), c))
}

/// Pointwise clip of a scalar function to [−c₀, c₀].
pub fn clip_fn<S: Real>(f: impl Fn(S) -> S, level: ClipLevel<S>) -> impl Fn(S) -> S {
    let c = level.get();
    move |x| Float::min(Float::max(f(x), -c), c)
}

/// D_α(P_f, P_{f₀}) for the regression model with uniform design on [−1, 1]
/// and unit noise: (1/(α−1)) log[½ ∫_{−1}^{1} exp(α(α−1)(f−f₀)²/2) dx],
/// by composite Gauss–Legendre with doubling refinement (relative 1e-8).
pub fn renyi_regression_model<S: Real>(
    f: impl Fn(S) -> S,
    f0: impl Fn(S) -> S,
    order: RenyiOrder<S>,
    quad_points: usize,
) -> Result<S> {
    if quad_points < 16 {
        return Err(Error::param("quad_points", "must be at least 16"));
    }
    let a = order.alpha();
    if order.is_kl() {
        return Err(Error::param("alpha", "must be < 1 for the Rényi form"));
    }
    let coeff = a * (a - S::one()) * S::c(0.5);
    let integrand = move |x: S| {
        let diff = f(x) - f0(x);
        (coeff * diff * diff).exp()
    };
    let integral = quad::integrate_refining(integrand, -S::one(), S::one(), quad_points, S::c(1e-8))?;
    Ok((integral * S::c(0.5)).ln() / (a - S::one()))
}
