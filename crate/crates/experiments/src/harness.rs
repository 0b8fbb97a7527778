//! Experiment pipelines: dispatch, replication bookkeeping, bound-vs-
//! empirical comparison and the rate-sweep slope fit. Replications run in
//! parallel over independent seed substreams; records are reduced in
//! replication order so reports are deterministic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use tempered_vb_core::divergences::{
    self, DiscreteDistribution, MatrixPair, RenyiOrder, SharedVarGaussianPair,
};
use tempered_vb_core::gaussian_vb::{
    integrated_divergence_mc, svb_run, FeasibleSet, GaussianFamily, SgdConfig, VariationalGaussian,
};
use tempered_vb_core::logistic::{
    corollary31_rate, estimate_stats, renyi_divergence_mc, sample_covariate, sample_design,
    DesignKind, LogisticModel,
};
use tempered_vb_core::matrix_completion::{
    cavi_run, clip_level_for, default_b, posterior_mean_matrix, synth_lowrank, PriorHyper,
};
use tempered_vb_core::quad::integrate_refining;
use tempered_vb_core::regression::{
    basis_row, default_k_max, select_k, sobolev_truth, CoefRule, RegressionDataset, SobolevSpec,
    SobolevTruth,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::mixture;
use crate::report::{Metric, RepRecord, RunReport};
use crate::seeds;
use crate::{ExpError, ExpResult};

/// Name of the environment variable overriding the report output directory.
pub const OUT_DIR_ENV: &str = "TEMPERED_VB_OUT_DIR";

/// Where to write the report and what the environment said about it.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    /// `--out` from the command line, overriding the config's `out`.
    pub cli_out: Option<PathBuf>,
}

impl RunContext {
    fn resolve_stem(&self, cfg: &ExperimentConfig) -> (PathBuf, Option<String>) {
        let env = std::env::var(OUT_DIR_ENV).ok();
        let base = self
            .cli_out
            .clone()
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("tempered-vb-{}", cfg.kind)));
        let stem = match &env {
            Some(dir) => {
                let name = base
                    .file_name()
                    .map(|n| n.to_os_string())
                    .unwrap_or_else(|| "report".into());
                Path::new(dir).join(name)
            }
            None => base,
        };
        (stem, env)
    }
}

/// Runs the configured experiment, writes `<stem>.json` and `<stem>.csv`,
/// and returns the report. Deterministic for a fixed config apart from the
/// runtime fields.
pub fn run_experiment(cfg: &ExperimentConfig, ctx: &RunContext) -> ExpResult<RunReport> {
    cfg.validate()?;
    let (stem, env) = ctx.resolve_stem(cfg);
    let mut report = execute(cfg)?;
    report.out_dir_env = env;
    report.write(&stem)?;
    Ok(report)
}

/// Runs the experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> ExpResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new(cfg.clone(), None);
    let records = match cfg.kind {
        ExperimentKind::Logistic => logistic_records(cfg)?,
        ExperimentKind::Matcomp => matcomp_records(cfg)?,
        ExperimentKind::Regression => regression_records(cfg)?,
        ExperimentKind::Mixture => mixture_records(cfg)?,
        ExperimentKind::DivergenceCheck => divergence_records(cfg)?,
    };
    report.records = records;
    report.summary = summarize(cfg, &report.records)?;
    enforce_runtime_invariants(cfg, &report)?;
    Ok(report)
}

fn metric(v: f64) -> ExpResult<Metric> {
    Metric::new(v)
}

fn insert(map: &mut BTreeMap<String, Metric>, key: &str, v: f64) -> ExpResult<()> {
    map.insert(key.to_string(), metric(v)?);
    Ok(())
}

fn par_records<F>(reps: usize, f: F) -> ExpResult<Vec<RepRecord>>
where
    F: Fn(usize) -> ExpResult<RepRecord> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| f(rep))
        .collect::<ExpResult<Vec<_>>>()
}

// ---------------------------------------------------------------------
// Logistic pipeline
// ---------------------------------------------------------------------

fn logistic_records(cfg: &ExperimentConfig) -> ExpResult<Vec<RepRecord>> {
    let p = cfg.logistic.as_ref().expect("validated");
    let alpha = cfg.alpha;
    let d = p.d;
    let theta0 = DVector::from_element(d, 1.0).normalize() * p.theta0_norm;
    let ball = p.ball_radius();
    let floor = p.psd_floor();
    let min_ball = p.theta0_norm + 1.0 / (p.n as f64 * (d as f64).sqrt());
    if ball <= min_ball {
        return Err(ExpError::Config(format!(
            "field `logistic.ball_radius`: must exceed ||theta0|| + 1/(n*sqrt(d)) = {min_ball}"
        )));
    }

    par_records(cfg.reps, |rep| {
        let start = Instant::now();
        let data_seed = seeds::component(cfg.seed, rep as u64, 0);
        let opt_seed = seeds::component(cfg.seed, rep as u64, 1);
        let mc_seed = seeds::component(cfg.seed, rep as u64, 2);
        let design_seed = seeds::component(cfg.seed, rep as u64, 3);

        let data = sample_design(DesignKind::UnitSphere, &theta0, p.n, data_seed);
        let stats = estimate_stats(&data, p.prior_variance, floor)?;
        let eps_n = corollary31_rate(&stats, d, p.n, p.theta0_norm, p.prior_variance)?;
        let model = LogisticModel::new(data)?;

        let fs = FeasibleSet::new(ball, floor, p.n, d)?;
        let mut sgd = SgdConfig::new(p.iters(), stats.smoothness_l, opt_seed)?;
        if let Some(step) = p.step_override {
            sgd = sgd.with_step_override(step)?;
        }
        let x0 = VariationalGaussian::default_init(d, p.n, GaussianFamily::Full);
        let outcome = svb_run(&model, p.prior_variance, alpha, &fs, &sgd, &x0)?;

        // Fresh design draws for the divergence oracle, shared across the
        // θ-samples of this replication.
        let mut design_rng = ChaCha12Rng::seed_from_u64(design_seed);
        let design: Vec<DVector<f64>> = (0..p.divergence_design)
            .map(|_| sample_covariate(DesignKind::UnitSphere, d, &mut design_rng))
            .collect();
        let est = integrated_divergence_mc(
            &outcome.averaged,
            |theta| renyi_divergence_mc(theta, &theta0, &design, alpha),
            p.divergence_samples,
            mc_seed,
        )?;

        let regret_term =
            (2.0 * ball * stats.smoothness_l / p.iters() as f64).sqrt() / (p.n as f64 * (1.0 - alpha));
        let bound = regret_term + (1.0 + alpha) / (1.0 - alpha) * eps_n;

        let mut m = BTreeMap::new();
        insert(&mut m, "divergence_estimate", est.mean)?;
        insert(&mut m, "divergence_std_error", est.std_error)?;
        insert(&mut m, "bound", bound)?;
        insert(&mut m, "regret_term", regret_term)?;
        insert(&mut m, "eps_n", eps_n)?;
        insert(&mut m, "k1", stats.k1)?;
        insert(&mut m, "k2", stats.k2)?;
        insert(&mut m, "smoothness_l", stats.smoothness_l)?;
        insert(&mut m, "below_bound", f64::from(u8::from(est.mean <= bound)))?;
        insert(
            &mut m,
            "mean_error_sq",
            (&outcome.averaged.mean - &theta0).norm_squared(),
        )?;
        Ok(RepRecord {
            rep,
            seed: data_seed,
            metrics: m,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })
}

// ---------------------------------------------------------------------
// Matrix completion pipeline
// ---------------------------------------------------------------------

fn matcomp_records(cfg: &ExperimentConfig) -> ExpResult<Vec<RepRecord>> {
    let p = cfg.matcomp.as_ref().expect("validated");
    let alpha = cfg.alpha;
    let scale_b = p
        .scale_b
        .unwrap_or_else(|| default_b(p.magnitude_bound, p.n, p.rows, p.cols, p.latent_dim));
    let hyper = PriorHyper::new(p.latent_dim, p.shape_a, scale_b, p.magnitude_bound)?;
    let bound = tempered_vb_core::tempered::matrix_bound_rhs(
        p.rank,
        p.rows,
        p.cols,
        p.n,
        p.shape_a,
        alpha,
        0.0,
        p.magnitude_bound,
        p.sigma2,
    )?;

    par_records(cfg.reps, |rep| {
        let start = Instant::now();
        let data_seed = seeds::component(cfg.seed, rep as u64, 0);
        let init_seed = seeds::component(cfg.seed, rep as u64, 1);
        let (truth, data) = synth_lowrank(
            p.rows,
            p.cols,
            p.rank,
            p.magnitude_bound,
            p.sigma2,
            p.n,
            data_seed,
        )?;
        let (state, trace) = cavi_run(&data, &hyper, alpha, p.sweeps, init_seed)?;
        let mean = posterior_mean_matrix(&state);

        let order = RenyiOrder::new(alpha)?;
        let d_alpha = divergences::renyi_matrix_model(&MatrixPair::new(
            mean.clone(),
            truth.clone(),
            p.sigma2,
            order,
        )?)?;
        let clip = clip_level_for(p.magnitude_bound, p.rank)?;
        let clipped = divergences::clip_matrix(&mean, clip);
        let clip_err = (&clipped - &truth).norm_squared();

        let mut m = BTreeMap::new();
        insert(&mut m, "d_alpha_sigma", d_alpha)?;
        insert(&mut m, "clip_fro_sq", clip_err)?;
        insert(&mut m, "rel_fro_error", (&mean - &truth).norm() / truth.norm().max(1e-12))?;
        insert(&mut m, "bound", bound)?;
        insert(&mut m, "below_bound", f64::from(u8::from(d_alpha <= bound)))?;
        insert(&mut m, "free_energy", *trace.last().expect("trace nonempty"))?;
        insert(&mut m, "sweeps_run", p.sweeps as f64)?;
        Ok(RepRecord {
            rep,
            seed: data_seed,
            metrics: m,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })
}

// ---------------------------------------------------------------------
// Regression pipeline
// ---------------------------------------------------------------------

fn sample_regression(truth: &SobolevTruth, n: usize, seed: u64) -> ExpResult<RegressionDataset> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let w: f64 = rng.random_range(-1.0..=1.0);
            let y = truth.eval(w) + rng.sample::<f64, _>(rand_distr::StandardNormal);
            (w, y)
        })
        .collect();
    RegressionDataset::new(points).map_err(ExpError::from)
}

/// Posterior-averaged clipped L² error ∫‖clip_{c₀}(f) − f₀‖₂² dπ̃ by Monte
/// Carlo over the coefficient posterior and fixed-grid quadrature in x.
fn clipped_l2_error(
    fit: &tempered_vb_core::regression::RegVBState,
    truth_on_grid: &[(f64, f64, f64)],
    c0: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let k = fit.truncation;
    let sd = fit.shared_variance.sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let beta: Vec<f64> = fit
            .coef_means
            .iter()
            .map(|&m| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut integral = 0.0;
        for &(x, f0x, weight) in truth_on_grid {
            let f: f64 = basis_row(x, k)
                .iter()
                .zip(&beta)
                .map(|(&p, &b)| p * b)
                .sum();
            let clipped = f.clamp(-c0, c0);
            integral += weight * (clipped - f0x) * (clipped - f0x);
        }
        acc += integral;
    }
    acc / samples as f64
}

/// Gauss–Legendre grid (x, f₀(x), weight) on [−1, 1].
fn truth_grid(truth: &SobolevTruth, panels: usize) -> Vec<(f64, f64, f64)> {
    // 16-point rule per panel, mapped over [−1, 1].
    const NODES: [f64; 8] = [
        0.095_012_509_837_637_440_2,
        0.281_603_550_779_258_913_2,
        0.458_016_777_657_227_386_3,
        0.617_876_244_402_643_748_4,
        0.755_404_408_355_003_033_9,
        0.865_631_202_387_831_743_9,
        0.944_575_023_073_232_576_1,
        0.989_400_934_991_649_932_6,
    ];
    const WEIGHTS: [f64; 8] = [
        0.189_450_610_455_068_496_3,
        0.182_603_415_044_923_588_9,
        0.169_156_519_395_002_538_2,
        0.149_595_988_816_576_732_1,
        0.124_628_971_255_533_872_1,
        0.095_158_511_682_492_784_8,
        0.062_253_523_938_647_892_9,
        0.027_152_459_411_754_094_9,
    ];
    let width = 2.0 / panels as f64;
    let mut grid = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        let mid = -1.0 + width * (p as f64 + 0.5);
        let half = width / 2.0;
        for i in 0..8 {
            for sign in [-1.0, 1.0] {
                let x = mid + sign * NODES[i] * half;
                grid.push((x, truth.eval(x), WEIGHTS[i] * half));
            }
        }
    }
    grid
}

fn regression_records(cfg: &ExperimentConfig) -> ExpResult<Vec<RepRecord>> {
    let p = cfg.regression.as_ref().expect("validated");
    let spec = SobolevSpec::new(p.smoothness, p.radius_sq, CoefRule::PolynomialDecay)?;
    let truth = sobolev_truth(&spec)?;
    let c0 = truth.sup_bound();
    let grid = truth_grid(&truth, 24);

    par_records(cfg.reps, |rep| {
        let start = Instant::now();
        let mut metrics = BTreeMap::new();
        for (gi, &n) in p.n_grid.iter().enumerate() {
            let data_seed = seeds::component(cfg.seed, rep as u64, 10 + gi as u64);
            let mc_seed = seeds::component(cfg.seed, rep as u64, 100 + gi as u64);
            let data = sample_regression(&truth, n, data_seed)?;
            let k_max = p.k_max.unwrap_or_else(|| default_k_max(n));
            let fit = select_k(&data, cfg.alpha, k_max)?;
            let err = clipped_l2_error(&fit, &grid, c0, p.error_samples, mc_seed);
            insert(&mut metrics, &format!("error_n{n}"), err)?;
            insert(&mut metrics, &format!("selected_k_n{n}"), fit.truncation as f64)?;
            insert(
                &mut metrics,
                &format!("rate_target_n{n}"),
                tempered_vb_core::regression::rate_target(n, p.smoothness)?,
            )?;
        }
        Ok(RepRecord {
            rep,
            seed: seeds::substream(cfg.seed, rep as u64),
            metrics,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })
}

// ---------------------------------------------------------------------
// Mixture pipeline
// ---------------------------------------------------------------------

fn mixture_records(cfg: &ExperimentConfig) -> ExpResult<Vec<RepRecord>> {
    let p = cfg.mixture.as_ref().expect("validated");
    let bound = mixture::proposition_bound(p.n, p.m0, p.sigma0_sq, cfg.alpha);

    par_records(cfg.reps, |rep| {
        let start = Instant::now();
        let data_seed = seeds::component(cfg.seed, rep as u64, 0);
        let fit_seed = seeds::component(cfg.seed, rep as u64, 1);
        let div_seed = seeds::component(cfg.seed, rep as u64, 2);
        let data = mixture::sample_data(p.n, p.m0, p.sigma0_sq, data_seed);

        // MLE divergence exhibit: the likelihood pinned at an observation
        // grows without bound along σ² ↓ 0.
        let probes = [1e-2, 1e-4, 1e-6];
        let (_pin, lls) = mixture::divergence_probe(&data, &probes);
        let increasing = lls.windows(2).all(|w| w[1] > w[0]);

        let fit = mixture::fit_box(&data, cfg.alpha, p.box_samples, fit_seed);
        let (center_m, center_s2) = fit.bx.center();
        let divergence =
            mixture::box_divergence_mc(&fit.bx, (p.m0, p.sigma0_sq), cfg.alpha, 50, div_seed);

        let mut m = BTreeMap::new();
        insert(&mut m, "ll_probe_1e2", lls[0])?;
        insert(&mut m, "ll_probe_1e4", lls[1])?;
        insert(&mut m, "ll_probe_1e6", lls[2])?;
        insert(&mut m, "probe_increasing", f64::from(u8::from(increasing)))?;
        insert(&mut m, "a_hat", fit.bx.a)?;
        insert(&mut m, "b_hat", fit.bx.b)?;
        insert(&mut m, "c_hat", fit.bx.c)?;
        insert(&mut m, "d_hat", fit.bx.d)?;
        insert(&mut m, "center_m", center_m)?;
        insert(&mut m, "center_s2", center_s2)?;
        insert(&mut m, "abs_center_error", (center_m - p.m0).abs())?;
        insert(&mut m, "objective", fit.objective)?;
        insert(&mut m, "proposition_bound", bound)?;
        insert(&mut m, "divergence_mc", divergence)?;
        Ok(RepRecord {
            rep,
            seed: data_seed,
            metrics: m,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })
}

// ---------------------------------------------------------------------
// Divergence-check pipeline
// ---------------------------------------------------------------------

fn divergence_records(cfg: &ExperimentConfig) -> ExpResult<Vec<RepRecord>> {
    let p = cfg.divergence.as_ref().expect("validated");
    par_records(cfg.reps, |rep| {
        let start = Instant::now();
        let seed = seeds::substream(cfg.seed, rep as u64);

        // Closed form vs quadrature of the defining integral on a grid of
        // (μ-gap, σ², α).
        let mut max_dev: f64 = 0.0;
        let g = p.grid;
        for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    let gap = 3.0 * i as f64 / (g - 1).max(1) as f64;
                    let sigma2 = 0.25 + 3.75 * j as f64 / (g - 1).max(1) as f64;
                    let alpha = 0.05 + 0.9 * k as f64 / (g - 1).max(1) as f64;
                    let pair = SharedVarGaussianPair::new(gap, 0.0, sigma2)?;
                    let order = RenyiOrder::new(alpha)?;
                    let closed = divergences::renyi_gaussian_shared_var(&pair, order);
                    let sd = sigma2.sqrt();
                    let dens = move |mu: f64, x: f64| {
                        (-(x - mu) * (x - mu) / (2.0 * sigma2)).exp()
                            / (2.0 * std::f64::consts::PI * sigma2).sqrt()
                    };
                    let integrand =
                        move |x: f64| dens(gap, x).powf(alpha) * dens(0.0, x).powf(1.0 - alpha);
                    let integral = integrate_refining(
                        integrand,
                        -15.0 * sd,
                        gap + 15.0 * sd,
                        64,
                        1e-11,
                    )?;
                    let quad = integral.ln() / (alpha - 1.0);
                    max_dev = max_dev.max((closed - quad).abs());
                }
            }
        }

        // Property sweep on random discrete pairs.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut violations = 0usize;
        for _ in 0..p.pairs {
            let dim = rng.random_range(2..=5);
            let draw = |rng: &mut ChaCha12Rng| -> DiscreteDistribution<f64> {
                let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                DiscreteDistribution::new(raw.into_iter().map(|w| w / total).collect())
                    .expect("normalized weights")
            };
            let pd = draw(&mut rng);
            let qd = draw(&mut rng);
            let a = rng.random_range(0.05..0.9);
            let b = rng.random_range(a..0.95);
            let oa = RenyiOrder::new(a)?;
            let ob = RenyiOrder::new(b)?;
            let da = divergences::renyi_discrete(&pd, &qd, oa)?;
            let db = divergences::renyi_discrete(&pd, &qd, ob)?;
            let kl = divergences::kl_discrete(&pd, &qd)?;
            let tv = divergences::total_variation_discrete(&pd, &qd)?;
            let tol = 1e-12;
            // Monotonicity in the order, up to KL at α = 1.
            if da > db + tol || db > kl + tol {
                violations += 1;
            }
            // Equivalence sandwich for 0 < α ≤ β < 1.
            if a / b * (1.0 - b) / (1.0 - a) * db > da + tol {
                violations += 1;
            }
            // Pinsker-type lower bound.
            if a / 2.0 * tv * tv > da + tol {
                violations += 1;
            }
            // Additivity over products.
            let pp = pd.product(&pd);
            let qq = qd.product(&qd);
            if (divergences::renyi_discrete(&pp, &qq, oa)? - 2.0 * da).abs() > 1e-9 {
                violations += 1;
            }
            // Hellinger bound from the order-½ divergence.
            let half = RenyiOrder::new(0.5)?;
            let dh = divergences::renyi_discrete(&pd, &qd, half)?;
            if divergences::hellinger_sq_from_renyi_half(dh)? > dh + tol {
                violations += 1;
            }
        }

        let mut m = BTreeMap::new();
        insert(&mut m, "max_gaussian_deviation", max_dev)?;
        insert(&mut m, "property_violations", violations as f64)?;
        insert(&mut m, "pairs_checked", p.pairs as f64)?;
        Ok(RepRecord {
            rep,
            seed,
            metrics: m,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })
}

// ---------------------------------------------------------------------
// Summaries and runtime invariants
// ---------------------------------------------------------------------

fn collect(records: &[RepRecord], key: &str) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| r.metrics.get(key).map(Metric::get))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN metrics"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Least-squares slope of log(mean error) against log(rate target), with a
/// seeded bootstrap percentile interval over the per-point replications.
pub struct SlopeFit {
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn fit_log_slope(
    targets: &[f64],
    errors_per_point: &[Vec<f64>],
    bootstrap: usize,
    seed: u64,
) -> ExpResult<SlopeFit> {
    if targets.len() < 3 || targets.len() != errors_per_point.len() {
        return Err(ExpError::Config(
            "field `n_grid`: slope fit needs at least 3 grid points".into(),
        ));
    }
    let xs: Vec<f64> = targets.iter().map(|t| t.ln()).collect();
    let slope_of = |means: &[f64]| -> f64 {
        let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let mx = mean(&xs);
        let my = mean(&ys);
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
        num / den
    };
    let means: Vec<f64> = errors_per_point.iter().map(|e| mean(e)).collect();
    let slope = slope_of(&means);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut boot_slopes = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let resampled: Vec<f64> = errors_per_point
            .iter()
            .map(|errs| {
                let m: f64 = (0..errs.len())
                    .map(|_| errs[rng.random_range(0..errs.len())])
                    .sum::<f64>()
                    / errs.len() as f64;
                m
            })
            .collect();
        boot_slopes.push(slope_of(&resampled));
    }
    boot_slopes.sort_by(|a, b| a.partial_cmp(b).expect("finite slopes"));
    let lo = boot_slopes[(0.025 * bootstrap as f64) as usize];
    let hi = boot_slopes[((0.975 * bootstrap as f64) as usize).min(bootstrap - 1)];
    Ok(SlopeFit { slope, lo, hi })
}

fn summarize(cfg: &ExperimentConfig, records: &[RepRecord]) -> ExpResult<BTreeMap<String, Metric>> {
    let mut s = BTreeMap::new();
    match cfg.kind {
        ExperimentKind::Logistic => {
            insert(&mut s, "mean_divergence", mean(&collect(records, "divergence_estimate")))?;
            insert(&mut s, "mean_bound", mean(&collect(records, "bound")))?;
            insert(&mut s, "frac_below_bound", mean(&collect(records, "below_bound")))?;
            insert(&mut s, "mean_eps_n", mean(&collect(records, "eps_n")))?;
        }
        ExperimentKind::Matcomp => {
            insert(&mut s, "mean_d_alpha_sigma", mean(&collect(records, "d_alpha_sigma")))?;
            insert(&mut s, "median_clip_fro_sq", median(&collect(records, "clip_fro_sq")))?;
            insert(&mut s, "bound", mean(&collect(records, "bound")))?;
            insert(&mut s, "frac_below_bound", mean(&collect(records, "below_bound")))?;
        }
        ExperimentKind::Regression => {
            let p = cfg.regression.as_ref().expect("validated");
            let mut targets = Vec::new();
            let mut errors = Vec::new();
            for &n in &p.n_grid {
                let errs = collect(records, &format!("error_n{n}"));
                insert(&mut s, &format!("mean_error_n{n}"), mean(&errs))?;
                insert(
                    &mut s,
                    &format!("median_selected_k_n{n}"),
                    median(&collect(records, &format!("selected_k_n{n}"))),
                )?;
                targets.push(tempered_vb_core::regression::rate_target(n, p.smoothness)?);
                errors.push(errs);
            }
            if p.n_grid.len() >= 3 {
                let fit = fit_log_slope(&targets, &errors, 200, seeds::component(cfg.seed, u64::MAX, 7))?;
                insert(&mut s, "slope", fit.slope)?;
                insert(&mut s, "slope_lo", fit.lo)?;
                insert(&mut s, "slope_hi", fit.hi)?;
            }
        }
        ExperimentKind::Mixture => {
            insert(&mut s, "mean_abs_center_error", mean(&collect(records, "abs_center_error")))?;
            insert(&mut s, "max_abs_center_error", collect(records, "abs_center_error").iter().cloned().fold(f64::NAN, f64::max))?;
            insert(&mut s, "frac_probe_increasing", mean(&collect(records, "probe_increasing")))?;
            insert(&mut s, "proposition_bound", mean(&collect(records, "proposition_bound")))?;
            insert(&mut s, "mean_divergence_mc", mean(&collect(records, "divergence_mc")))?;
        }
        ExperimentKind::DivergenceCheck => {
            insert(
                &mut s,
                "max_gaussian_deviation",
                collect(records, "max_gaussian_deviation")
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max),
            )?;
            insert(
                &mut s,
                "property_violations",
                collect(records, "property_violations").iter().sum::<f64>(),
            )?;
        }
    }
    Ok(s)
}

/// Mid-run invariants that fail the whole experiment (CLI exit code 1).
fn enforce_runtime_invariants(cfg: &ExperimentConfig, report: &RunReport) -> ExpResult<()> {
    if cfg.kind == ExperimentKind::DivergenceCheck {
        let dev = report.summary["max_gaussian_deviation"].get();
        if dev >= 1e-6 {
            return Err(ExpError::Invariant(format!(
                "closed-form vs quadrature deviation {dev:.3e} exceeds 1e-6"
            )));
        }
        let violations = report.summary["property_violations"].get();
        if violations != 0.0 {
            return Err(ExpError::Invariant(format!(
                "{violations} divergence-order property violations"
            )));
        }
    }
    if cfg.kind == ExperimentKind::Mixture {
        // The likelihood blow-up at fixed probe variances is visible only
        // when the pinned observation is isolated at the widest kernel
        // scale, which a given dataset need not provide; the demo fails
        // only when no replication exhibits the divergence at all.
        let frac = report.summary["frac_probe_increasing"].get();
        if frac <= 0.0 {
            return Err(ExpError::Invariant(
                "no replication exhibited the increasing likelihood probe sequence".into(),
            ));
        }
    }
    Ok(())
}
