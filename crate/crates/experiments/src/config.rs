//! Experiment configuration: a single TOML document with a top-level kind
//! and one kind-specific section.

use serde::{Deserialize, Serialize};

use crate::{ExpError, ExpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Logistic,
    Matcomp,
    Regression,
    Mixture,
    DivergenceCheck,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Logistic => "logistic",
            ExperimentKind::Matcomp => "matcomp",
            ExperimentKind::Regression => "regression",
            ExperimentKind::Mixture => "mixture",
            ExperimentKind::DivergenceCheck => "divergence-check",
        };
        f.write_str(s)
    }
}

/// Gaussian-VB logistic experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub d: usize,
    pub n: usize,
    /// Prior variance ϑ².
    pub prior_variance: f64,
    /// ‖θ₀‖ of the simulation truth.
    pub theta0_norm: f64,
    /// Iteration count T; defaults to ⌈√n⌉·10.
    pub iters: Option<usize>,
    /// Ball radius B; defaults to ‖θ₀‖ + 1 (oracle knowledge of the truth).
    pub ball_radius: Option<f64>,
    /// Floor ψ; defaults to 1/(n√d).
    pub psd_floor: Option<f64>,
    /// Optional constant step replacing B/(L√2T).
    pub step_override: Option<f64>,
    /// Fresh design draws for the divergence estimate.
    pub divergence_design: usize,
    /// θ-samples for the divergence estimate.
    pub divergence_samples: usize,
}

impl LogisticParams {
    pub fn iters(&self) -> usize {
        self.iters.unwrap_or(10 * (self.n as f64).sqrt().ceil() as usize)
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius.unwrap_or(self.theta0_norm + 1.0)
    }

    pub fn psd_floor(&self) -> f64 {
        self.psd_floor
            .unwrap_or(1.0 / (self.n as f64 * (self.d as f64).sqrt()))
    }
}

/// Matrix-completion experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcompParams {
    pub rows: usize,
    pub cols: usize,
    /// Latent rank bound K of the prior.
    pub latent_dim: usize,
    /// True rank r of the synthetic matrix.
    pub rank: usize,
    pub shape_a: f64,
    /// Prior scale b; defaults to the theory value when absent.
    pub scale_b: Option<f64>,
    pub magnitude_bound: f64,
    pub sigma2: f64,
    pub n: usize,
    pub sweeps: usize,
}

/// Nonparametric-regression experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionParams {
    /// Sobolev smoothness r ≥ 2.
    pub smoothness: f64,
    /// Squared radius C².
    pub radius_sq: f64,
    /// Sample-size grid (one experiment per entry).
    pub n_grid: Vec<usize>,
    /// Selection cap; defaults to ⌈(n/log n)^{1/3}⌉·4 per grid point.
    pub k_max: Option<usize>,
    /// Monte Carlo draws for the posterior error integral.
    pub error_samples: usize,
}

/// Mixture-demo parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub n: usize,
    pub m0: f64,
    pub sigma0_sq: f64,
    /// Monte Carlo draws per box-objective evaluation.
    pub box_samples: usize,
}

/// Divergence-check parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceParams {
    /// Grid resolution per axis for the closed-form-vs-quadrature sweep.
    pub grid: usize,
    /// Random discrete pairs probed for the order/additivity properties.
    pub pairs: usize,
}

/// A full experiment description. Exactly the section matching `kind` must
/// be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub alpha: f64,
    pub seed: u64,
    pub reps: usize,
    /// Output stem (directory/basename) for the report files.
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logistic: Option<LogisticParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matcomp: Option<MatcompParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceParams>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> ExpResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> ExpResult<String> {
        toml::to_string(self).map_err(|e| ExpError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Io(format!("cannot read config {path:?}: {e}")))?;
        Self::from_toml(&text)
    }

    /// Field-level validation; every rejection names the offending field.
    pub fn validate(&self) -> ExpResult<()> {
        let fail = |field: &str, why: String| Err(ExpError::Config(format!("field `{field}`: {why}")));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha", format!("must lie in (0,1), got {}", self.alpha));
        }
        if self.reps == 0 {
            return fail("reps", "must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::Logistic => {
                let p = match &self.logistic {
                    Some(p) => p,
                    None => return fail("logistic", "section required for kind = logistic".into()),
                };
                if p.d == 0 {
                    return fail("logistic.d", "must be at least 1".into());
                }
                if p.n < 2 {
                    return fail("logistic.n", "must be at least 2".into());
                }
                if !(p.prior_variance > 0.0) {
                    return fail("logistic.prior_variance", "must be positive".into());
                }
                if p.theta0_norm < 0.0 {
                    return fail("logistic.theta0_norm", "must be nonnegative".into());
                }
                if p.divergence_design == 0 {
                    return fail("logistic.divergence_design", "must be positive".into());
                }
                if p.divergence_samples < 100 {
                    return fail("logistic.divergence_samples", "needs at least 100".into());
                }
            }
            ExperimentKind::Matcomp => {
                let p = match &self.matcomp {
                    Some(p) => p,
                    None => return fail("matcomp", "section required for kind = matcomp".into()),
                };
                if p.rows == 0 || p.cols == 0 {
                    return fail("matcomp.rows", "matrix dimensions must be positive".into());
                }
                if p.rank == 0 || p.rank > p.rows.min(p.cols) {
                    return fail("matcomp.rank", "must lie in [1, min(rows, cols)]".into());
                }
                if p.latent_dim < p.rank {
                    return fail("matcomp.latent_dim", "must be at least the true rank".into());
                }
                if !(p.shape_a > 0.0) {
                    return fail("matcomp.shape_a", "must be positive".into());
                }
                if let Some(b) = p.scale_b {
                    if !(b > 0.0) {
                        return fail("matcomp.scale_b", "must be positive".into());
                    }
                }
                if !(p.magnitude_bound > 0.0) {
                    return fail("matcomp.magnitude_bound", "must be positive".into());
                }
                if !(p.sigma2 > 0.0) {
                    return fail("matcomp.sigma2", "must be positive".into());
                }
                if p.n == 0 || p.sweeps == 0 {
                    return fail("matcomp.n", "n and sweeps must be positive".into());
                }
            }
            ExperimentKind::Regression => {
                let p = match &self.regression {
                    Some(p) => p,
                    None => return fail("regression", "section required for kind = regression".into()),
                };
                if !(p.smoothness >= 2.0) {
                    return fail("regression.smoothness", "needs r >= 2".into());
                }
                if !(p.radius_sq > 0.0) {
                    return fail("regression.radius_sq", "must be positive".into());
                }
                if p.n_grid.is_empty() || p.n_grid.iter().any(|&n| n < 3) {
                    return fail("regression.n_grid", "needs entries >= 3".into());
                }
                if p.error_samples == 0 {
                    return fail("regression.error_samples", "must be positive".into());
                }
            }
            ExperimentKind::Mixture => {
                let p = match &self.mixture {
                    Some(p) => p,
                    None => return fail("mixture", "section required for kind = mixture".into()),
                };
                if p.n < 2 {
                    return fail("mixture.n", "must be at least 2".into());
                }
                if !(p.sigma0_sq > 0.0 && p.sigma0_sq < 1.0) {
                    return fail("mixture.sigma0_sq", "must lie in (0,1)".into());
                }
                if p.box_samples == 0 {
                    return fail("mixture.box_samples", "must be positive".into());
                }
            }
            ExperimentKind::DivergenceCheck => {
                let p = match &self.divergence {
                    Some(p) => p,
                    None => {
                        return fail("divergence", "section required for kind = divergence-check".into())
                    }
                };
                if p.grid < 2 {
                    return fail("divergence.grid", "needs at least 2 points per axis".into());
                }
                if p.pairs == 0 {
                    return fail("divergence.pairs", "must be positive".into());
                }
            }
        }
        Ok(())
    }
}
