//! Tempered mean-field VB for noisy matrix completion.
//!
//! The model observes n uniformly sampled cells of an m×p matrix under
//! Gaussian noise. The factorized prior puts N(0, γ_k) entries on the
//! factors U (m×K) and V (p×K) with Γ(a, b) precisions 1/γ_k. The
//! variational family is the product of per-row Gaussians, per-column
//! Gaussians and per-component Gamma factors; each coordinate update below
//! is the exact conjugate minimizer of the free energy, so a full sweep can
//! never increase it.
//!
//! Row updates are mutually independent (likewise column updates); sweeps
//! are sequential. State values are plain data and move freely between
//! threads.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::divergences::ClipLevel;
use crate::error::{Error, Result};
use crate::scalar::{digamma, ln_gamma};

/// Observed cells of an m×p matrix with known noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDataset {
    rows: usize,
    cols: usize,
    /// 0-based (row, col, value) triplets.
    entries: Vec<(usize, usize, f64)>,
    sigma2: f64,
}

impl MatrixDataset {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>, sigma2: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("shape", "matrix dimensions must be positive"));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::param("sigma2", "noise variance must be positive"));
        }
        for &(i, j, y) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::param("entries", format!("cell ({i},{j}) outside {rows}x{cols}")));
            }
            if !y.is_finite() {
                return Err(Error::param("entries", "observed values must be finite"));
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
            sigma2,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Plain-text form: header `m p n sigma2`, then one 1-based `i j y` line
    /// per observation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {} {}", self.rows, self.cols, self.entries.len(), self.sigma2);
        for &(i, j, y) in &self.entries {
            let _ = writeln!(out, "{} {} {}", i + 1, j + 1, y);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::param("dataset", "missing header line"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::param("dataset", "header must be `m p n sigma2`"));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::param("dataset", format!("bad integer `{s}`: {e}")))
        };
        let rows = parse_usize(fields[0])?;
        let cols = parse_usize(fields[1])?;
        let n = parse_usize(fields[2])?;
        let sigma2: f64 = fields[3]
            .parse()
            .map_err(|e| Error::param("dataset", format!("bad sigma2: {e}")))?;
        let mut entries = Vec::with_capacity(n);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::param("dataset", format!("bad entry line `{line}`")));
            }
            let i = parse_usize(f[0])?;
            let j = parse_usize(f[1])?;
            let y: f64 = f[2]
                .parse()
                .map_err(|e| Error::param("dataset", format!("bad value: {e}")))?;
            if i == 0 || j == 0 {
                return Err(Error::param("dataset", "indices are 1-based"));
            }
            entries.push((i - 1, j - 1, y));
        }
        if entries.len() != n {
            return Err(Error::param(
                "dataset",
                format!("header declares {n} entries, found {}", entries.len()),
            ));
        }
        Self::new(rows, cols, entries, sigma2)
    }

    pub fn write_file(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::param("dataset", format!("cannot read {path:?}: {e}")))?;
        Self::from_text(&text)
    }
}

/// Prior hyperparameters: latent rank bound K, Gamma shape a and scale b
/// for the component precisions, and the magnitude bound B entering the
/// default-b rule.
#[derive(Debug, Clone, Copy)]
pub struct PriorHyper {
    pub latent_dim: usize,
    pub shape_a: f64,
    pub scale_b: f64,
    pub magnitude_bound: f64,
}

impl PriorHyper {
    pub fn new(latent_dim: usize, shape_a: f64, scale_b: f64, magnitude_bound: f64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::param("latent_dim", "must be at least 1"));
        }
        if !(shape_a > 0.0 && scale_b > 0.0 && magnitude_bound > 0.0) {
            return Err(Error::param("hyper", "a, b and B must be positive"));
        }
        Ok(Self {
            latent_dim,
            shape_a,
            scale_b,
            magnitude_bound,
        })
    }
}

/// The theory-backed default prior scale b = B²/(512·(nmp)⁴·[(m∨p)·K]²),
/// evaluated in log-space so large n·m·p cannot overflow.
pub fn default_b(magnitude_bound: f64, n: usize, rows: usize, cols: usize, latent_dim: usize) -> f64 {
    let log_b = 2.0 * magnitude_bound.ln()
        - 512.0f64.ln()
        - 4.0 * ((n as f64) * (rows as f64) * (cols as f64)).ln()
        - 2.0 * (((rows.max(cols)) as f64) * (latent_dim as f64)).ln();
    log_b.exp()
}

/// Mean-field state: per-row Gaussian moments (m_i, V_i), per-column
/// moments (n_j, W_j), Gamma rates β, the temper α and the prior shape a.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub row_means: DMatrix<f64>,
    pub row_covs: Vec<DMatrix<f64>>,
    pub col_means: DMatrix<f64>,
    pub col_covs: Vec<DMatrix<f64>>,
    pub beta: DVector<f64>,
    pub alpha: f64,
    pub shape_a: f64,
}

impl MeanFieldState {
    pub fn latent_dim(&self) -> usize {
        self.row_means.ncols()
    }

    /// The variational Gamma shape a + (m+p)/2 shared by every component.
    pub fn gamma_shape(&self) -> f64 {
        self.shape_a + 0.5 * (self.row_means.nrows() + self.col_means.nrows()) as f64
    }

    /// E[1/γ_k] under the current Gamma factor.
    fn mean_precisions(&self) -> DVector<f64> {
        let shape = self.gamma_shape();
        self.beta.map(|b| shape / b)
    }

    /// Seeded random initialization: mean entries N(0, 0.1), covariances
    /// 0.1·I, rates 1.
    pub fn init(rows: usize, cols: usize, latent_dim: usize, alpha: f64, shape_a: f64, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sd = 0.1f64.sqrt();
        let row_means = DMatrix::from_fn(rows, latent_dim, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        let col_means = DMatrix::from_fn(cols, latent_dim, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        MeanFieldState {
            row_means,
            row_covs: vec![DMatrix::identity(latent_dim, latent_dim) * 0.1; rows],
            col_means,
            col_covs: vec![DMatrix::identity(latent_dim, latent_dim) * 0.1; cols],
            beta: DVector::from_element(latent_dim, 1.0),
            alpha,
            shape_a,
        }
    }
}

fn gaussian_block_update(
    means: &DMatrix<f64>,
    other_means: &DMatrix<f64>,
    other_covs: &[DMatrix<f64>],
    buckets: &[Vec<(usize, f64)>],
    gamma_shape_times_inv_beta: &DVector<f64>,
    weight: f64,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let k = means.ncols();
    let count = means.nrows();
    let mut new_means = DMatrix::zeros(count, k);
    let mut new_covs = Vec::with_capacity(count);
    for i in 0..count {
        let mut precision = DMatrix::from_diagonal(&DVector::from_fn(k, |l, _| gamma_shape_times_inv_beta[l]));
        let mut rhs = DVector::zeros(k);
        for &(j, y) in &buckets[i] {
            let mu = other_means.row(j).transpose();
            precision += (&other_covs[j] + &mu * mu.transpose()) * weight;
            rhs += mu * (weight * y);
        }
        let chol = nalgebra::Cholesky::new(precision)
            .ok_or_else(|| Error::Numerical("singular precision in mean-field update".into()))?;
        let cov = chol.inverse();
        let mean = &cov * rhs;
        new_means.row_mut(i).copy_from(&mean.transpose());
        new_covs.push(cov);
    }
    Ok((new_means, new_covs))
}

fn row_buckets(data: &MatrixDataset) -> Vec<Vec<(usize, f64)>> {
    let mut buckets = vec![Vec::new(); data.rows()];
    for &(i, j, y) in data.entries() {
        buckets[i].push((j, y));
    }
    buckets
}

fn col_buckets(data: &MatrixDataset) -> Vec<Vec<(usize, f64)>> {
    let mut buckets = vec![Vec::new(); data.cols()];
    for &(i, j, y) in data.entries() {
        buckets[j].push((i, y));
    }
    buckets
}

/// Exact conjugate update of every row factor:
/// V_i⁻¹ ← (α/σ²)·Σ_{k: i_k=i} [W_{j_k} + n_{j_k}n_{j_k}ᵀ] + (a+(m+p)/2)·diag(β)⁻¹,
/// m_iᵀ ← (α/σ²)·V_i·Σ_{k: i_k=i} Y_k·n_{j_k}ᵀ. Only row blocks change.
pub fn update_rows(state: &MeanFieldState, data: &MatrixDataset) -> Result<MeanFieldState> {
    let weight = state.alpha / data.sigma2();
    let shape = state.gamma_shape();
    let shape_inv_beta = state.beta.map(|b| shape / b);
    let (means, covs) = gaussian_block_update(
        &state.row_means,
        &state.col_means,
        &state.col_covs,
        &row_buckets(data),
        &shape_inv_beta,
        weight,
    )?;
    let mut out = state.clone();
    out.row_means = means;
    out.row_covs = covs;
    Ok(out)
}

/// Mirror of [`update_rows`] with the roles of rows and columns swapped.
pub fn update_cols(state: &MeanFieldState, data: &MatrixDataset) -> Result<MeanFieldState> {
    let weight = state.alpha / data.sigma2();
    let shape = state.gamma_shape();
    let shape_inv_beta = state.beta.map(|b| shape / b);
    let (means, covs) = gaussian_block_update(
        &state.col_means,
        &state.row_means,
        &state.row_covs,
        &col_buckets(data),
        &shape_inv_beta,
        weight,
    )?;
    let mut out = state.clone();
    out.col_means = means;
    out.col_covs = covs;
    Ok(out)
}

/// Exact conjugate update of the Gamma rates:
/// β_k ← b + ½ [Σᵢ (m²ᵢₖ + (V_i)ₖₖ) + Σⱼ (n²ⱼₖ + (W_j)ₖₖ)].
pub fn update_scales(state: &MeanFieldState, scale_b: f64) -> MeanFieldState {
    let k = state.latent_dim();
    let mut beta = DVector::from_element(k, scale_b);
    for l in 0..k {
        let mut acc = 0.0;
        for i in 0..state.row_means.nrows() {
            acc += state.row_means[(i, l)].powi(2) + state.row_covs[i][(l, l)];
        }
        for j in 0..state.col_means.nrows() {
            acc += state.col_means[(j, l)].powi(2) + state.col_covs[j][(l, l)];
        }
        beta[l] += 0.5 * acc;
    }
    let mut out = state.clone();
    out.beta = beta;
    out
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("covariance not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Ok(2.0 * acc)
}

/// The tempered negative ELBO
/// α·E_q[Σ_k (Y_k − (UVᵀ)_{i_k j_k})²/(2σ²)] + KL(q, π),
/// expanded in closed form from the factorized moments. It equals
/// KL(q, π_{n,α}) up to an additive data-only constant, and every
/// coordinate update above weakly decreases it.
pub fn free_energy(state: &MeanFieldState, data: &MatrixDataset, hyper: &PriorHyper) -> Result<f64> {
    let k = state.latent_dim();
    let shape = state.gamma_shape();
    let mean_prec = state.mean_precisions();
    let mean_log_prec = state.beta.map(|b| digamma(shape) - b.ln());

    // Expected tempered squared-residual term.
    let mut data_term = 0.0;
    for &(i, j, y) in data.entries() {
        let mu = state.row_means.row(i).transpose();
        let nu = state.col_means.row(j).transpose();
        let second_u = &state.row_covs[i] + &mu * mu.transpose();
        let second_v = &state.col_covs[j] + &nu * nu.transpose();
        let cross = (second_v * second_u).trace();
        data_term += y * y - 2.0 * y * mu.dot(&nu) + cross;
    }
    data_term *= state.alpha / (2.0 * data.sigma2());

    // Gaussian blocks: Σ_blocks E_q[log q − log π(block | γ)].
    let mut gauss = 0.0;
    for (means, covs) in [
        (&state.row_means, &state.row_covs),
        (&state.col_means, &state.col_covs),
    ] {
        for i in 0..means.nrows() {
            let mut quad = 0.0;
            for l in 0..k {
                quad += mean_prec[l] * (means[(i, l)].powi(2) + covs[i][(l, l)]);
            }
            gauss += 0.5 * (quad - mean_log_prec.sum()) - 0.5 * log_det_spd(&covs[i])? - 0.5 * k as f64;
        }
    }

    // Gamma blocks: Σ_k KL(Γ(a', β_k) ‖ Γ(a, b)) in shape/rate form.
    let (a, b) = (hyper.shape_a, hyper.scale_b);
    let mut gamma_kl = 0.0;
    for l in 0..k {
        let beta = state.beta[l];
        gamma_kl += (shape - a) * digamma(shape) - ln_gamma(shape) + ln_gamma(a)
            + a * (beta.ln() - b.ln())
            + shape * (b - beta) / beta;
    }

    let value = data_term + gauss + gamma_kl;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite free energy".into()));
    }
    Ok(value)
}

/// Seeded CAVI: random initialization, then `sweeps` rounds of
/// rows → cols → scales. The free energy is evaluated after every
/// coordinate update; any increase beyond 1e-9 absolute is an invariant
/// violation. Returns the final state and the per-update free-energy trace
/// (initial value first, then three entries per sweep).
pub fn cavi_run(
    data: &MatrixDataset,
    hyper: &PriorHyper,
    alpha: f64,
    sweeps: usize,
    seed: u64,
) -> Result<(MeanFieldState, Vec<f64>)> {
    if sweeps == 0 {
        return Err(Error::param("sweeps", "must run at least one sweep"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    const SLACK: f64 = 1e-9;
    let mut state = MeanFieldState::init(data.rows(), data.cols(), hyper.latent_dim, alpha, hyper.shape_a, seed);
    let mut trace = vec![free_energy(&state, data, hyper)?];
    let advance = |state: &mut MeanFieldState,
                       trace: &mut Vec<f64>,
                       label: &str,
                       sweep: usize,
                       next: MeanFieldState|
     -> Result<()> {
        let value = free_energy(&next, data, hyper)?;
        let prev = *trace.last().expect("trace nonempty");
        if value > prev + SLACK {
            return Err(Error::InvariantViolation(format!(
                "free energy increased by {:.3e} after {label} update in sweep {sweep}",
                value - prev
            )));
        }
        trace.push(value);
        *state = next;
        Ok(())
    };
    for sweep in 0..sweeps {
        let next = update_rows(&state, data)?;
        advance(&mut state, &mut trace, "rows", sweep, next)?;
        let next = update_cols(&state, data)?;
        advance(&mut state, &mut trace, "cols", sweep, next)?;
        let next = update_scales(&state, hyper.scale_b);
        advance(&mut state, &mut trace, "scales", sweep, next)?;
    }
    Ok((state, trace))
}

/// Posterior mean of UVᵀ under the factorized state: m·nᵀ.
pub fn posterior_mean_matrix(state: &MeanFieldState) -> DMatrix<f64> {
    &state.row_means * state.col_means.transpose()
}

/// Clip level r·B², the sup-norm bound on a rank-r truth whose factor
/// entries lie in [−B, B].
pub fn clip_level_for(magnitude_bound: f64, rank: usize) -> Result<ClipLevel<f64>> {
    ClipLevel::new(magnitude_bound * magnitude_bound * rank as f64)
}

/// Draws a rank-r truth M₀ = ŪV̄ᵀ with factor entries uniform in [−B, B] on
/// the first r columns and zero beyond, then samples n uniform cells with
/// N(0, σ²) noise.
pub fn synth_lowrank(
    rows: usize,
    cols: usize,
    rank: usize,
    magnitude_bound: f64,
    sigma2: f64,
    n: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, MatrixDataset)> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::param("rank", format!("must lie in [1, min(m,p)], got {rank}")));
    }
    if !(magnitude_bound > 0.0) {
        return Err(Error::param("magnitude_bound", "must be positive"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let b = magnitude_bound;
    let u = DMatrix::from_fn(rows, rank, |_, _| rng.random_range(-b..b));
    let v = DMatrix::from_fn(cols, rank, |_, _| rng.random_range(-b..b));
    let truth = &u * v.transpose();
    let noise_sd = sigma2.sqrt();
    let entries = (0..n)
        .map(|_| {
            let i = rng.random_range(0..rows);
            let j = rng.random_range(0..cols);
            let y = truth[(i, j)] + noise_sd * rng.sample::<f64, _>(StandardNormal);
            (i, j, y)
        })
        .collect();
    let data = MatrixDataset::new(rows, cols, entries, sigma2)?;
    Ok((truth, data))
}
