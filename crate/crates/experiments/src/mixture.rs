//! Two-component location/scale mixture demo: the likelihood is unbounded
//! (no MLE), yet a uniform-box variational family recovers the truth.
//!
//! The model density is g_{(m,σ²)} = ½·N(m, σ²) + ½·N(0, 1) with prior
//! m ~ N(0,1), σ² ~ U(0,1). The variational family is the set of uniform
//! distributions on boxes [a−c, a+c] × [b−d, b]; the box objective is the
//! tempered negative ELBO with the box-KL available in closed form and the
//! expected log-likelihood estimated by common-random-number Monte Carlo.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use tempered_vb_core::divergences::RenyiOrder;
use tempered_vb_core::quad::integrate_refining;

/// Box parameters (a, b, c, d): m uniform on [a−c, a+c], σ² uniform on
/// [b−d, b], constrained to b ∈ (0,1), c > 0, 0 < d < b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box4 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Box4 {
    pub fn is_valid(&self) -> bool {
        self.b > 0.0 && self.b < 1.0 && self.c > 0.0 && self.d > 0.0 && self.d < self.b
    }

    /// Box center in (m, σ²) coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.a, self.b - 0.5 * self.d)
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// log g_{(m,σ²)}(x) for the mixture density.
pub fn mixture_log_density(x: f64, m: f64, sigma2: f64) -> f64 {
    let l1 = normal_logpdf(x, m, sigma2);
    let l2 = normal_logpdf(x, 0.0, 1.0);
    let hi = l1.max(l2);
    hi + ((l1 - hi).exp() + (l2 - hi).exp()).ln() - std::f64::consts::LN_2
}

/// Total log-likelihood Σᵢ log g_{(m,σ²)}(Xᵢ).
pub fn total_log_lik(data: &[f64], m: f64, sigma2: f64) -> f64 {
    data.iter().map(|&x| mixture_log_density(x, m, sigma2)).sum()
}

/// Observation indices ranked by nearest-neighbor gap, most isolated first.
fn isolation_ranking(data: &[f64]) -> Vec<usize> {
    assert!(data.len() >= 2, "need at least two observations");
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].partial_cmp(&data[b]).expect("finite data"));
    let gap_at = |rank: usize| -> f64 {
        let x = data[order[rank]];
        let left = rank
            .checked_sub(1)
            .map(|r| (x - data[order[r]]).abs())
            .unwrap_or(f64::INFINITY);
        let right = order
            .get(rank + 1)
            .map(|&i| (data[i] - x).abs())
            .unwrap_or(f64::INFINITY);
        left.min(right)
    };
    let mut ranks: Vec<usize> = (0..order.len()).collect();
    ranks.sort_by(|&a, &b| gap_at(b).partial_cmp(&gap_at(a)).expect("finite gaps"));
    ranks.into_iter().map(|r| order[r]).collect()
}

/// Likelihood-divergence exhibit: evaluates log L_n(X_i, σ²) along the
/// probe grid with m pinned at an observation. The growth −½·log σ² of the
/// pinned point's own term is visible at a finite probe only when no other
/// observation sits inside that probe's kernel, so the pin is chosen among
/// the most isolated observations: candidates whose later (narrow-kernel)
/// steps already increase are preferred, and the first-step margin is
/// maximized among them. Returns the pin index and the probe sequence.
pub fn divergence_probe(data: &[f64], probes: &[f64]) -> (usize, Vec<f64>) {
    let candidates: Vec<usize> = isolation_ranking(data).into_iter().take(32).collect();
    // Rank by (all-but-first steps increasing, min margin): a pin isolated
    // at the narrow kernels virtually always exists, while the widest
    // kernel may cover neighbors of every observation.
    let mut best: Option<(usize, Vec<f64>, (bool, f64))> = None;
    for &i in &candidates {
        let lls: Vec<f64> = probes.iter().map(|&v| total_log_lik(data, data[i], v)).collect();
        let margins: Vec<f64> = lls.windows(2).map(|w| w[1] - w[0]).collect();
        let tail_ok = margins[1..].iter().all(|&m| m > 0.0);
        let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        let key = (tail_ok, min_margin);
        let better = match &best {
            None => true,
            Some((_, _, (b_ok, b_m))) => (key.0 && !b_ok) || (key.0 == *b_ok && key.1 > *b_m),
        };
        if better {
            best = Some((i, lls, key));
        }
    }
    let (idx, lls, _) = best.expect("at least one candidate");
    (idx, lls)
}

/// Draws n observations from g_{(m₀,σ₀²)}.
pub fn sample_data(n: usize, m0: f64, sigma0_sq: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.random::<bool>() {
                m0 + sigma0_sq.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect()
}

/// KL(ρ_{a,b,c,d}, π) in closed form:
/// KL(U[a−c,a+c], N(0,1)) + KL(U[b−d,b], U(0,1))
///   = −log(2c) + ½log(2π) + a²/2 + c²/6 + log(1/d).
pub fn box_kl(bx: &Box4) -> f64 {
    -(2.0 * bx.c).ln() + 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * bx.a * bx.a
        + bx.c * bx.c / 6.0
        - bx.d.ln()
}

/// Tempered box objective −α·E_ρ[Σᵢ log g(Xᵢ)] + KL(ρ, π) with the
/// expectation over the box taken by common-random-number Monte Carlo (a
/// fixed grid of unit-square draws reused across evaluations keeps the
/// search surface smooth). The per-observation null log-density is
/// precomputed; the kernel component is folded in with a guarded
/// log-sum-exp.
pub struct BoxObjective<'a> {
    data: &'a [f64],
    null_logpdf: Vec<f64>,
    unit_pairs: Vec<(f64, f64)>,
    alpha: f64,
}

impl<'a> BoxObjective<'a> {
    pub fn new(data: &'a [f64], alpha: f64, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        BoxObjective {
            data,
            null_logpdf: data.iter().map(|&x| normal_logpdf(x, 0.0, 1.0)).collect(),
            unit_pairs: (0..samples)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect(),
            alpha,
        }
    }

    pub fn value(&self, bx: &Box4) -> f64 {
        if !bx.is_valid() {
            return f64::INFINITY;
        }
        const LN_2PI: f64 = 1.837_877_066_409_345_3;
        let mut total = 0.0;
        for &(u1, u2) in &self.unit_pairs {
            let m = bx.a + (2.0 * u1 - 1.0) * bx.c;
            let v = bx.b - bx.d * u2;
            let c0 = -0.5 * (v.ln() + LN_2PI);
            let inv2v = 0.5 / v;
            let mut acc = 0.0;
            for (&x, &l2) in self.data.iter().zip(&self.null_logpdf) {
                let d = x - m;
                let l1 = c0 - d * d * inv2v;
                let (hi, lo) = if l1 > l2 { (l1, l2) } else { (l2, l1) };
                let diff = lo - hi;
                acc += if diff < -36.0 { hi } else { hi + diff.exp().ln_1p() };
            }
            total += acc;
        }
        let expected =
            total / self.unit_pairs.len() as f64 - self.data.len() as f64 * std::f64::consts::LN_2;
        -self.alpha * expected + box_kl(bx)
    }
}

/// Result of the box search.
#[derive(Debug, Clone, Copy)]
pub struct BoxFit {
    pub bx: Box4,
    pub objective: f64,
}

/// Multi-start coarse grid followed by local coordinate refinement with the
/// full Monte Carlo budget per objective evaluation. The coarse pass ranks
/// candidates on a data subsample with a reduced budget, rescaled to
/// full-data units.
pub fn fit_box(data: &[f64], alpha: f64, box_samples: usize, seed: u64) -> BoxFit {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let sub: Vec<f64> = if data.len() > 300 {
        let stride = data.len() / 300;
        data.iter().step_by(stride).cloned().collect()
    } else {
        data.to_vec()
    };
    let scale = data.len() as f64 / sub.len() as f64;
    // A subsample-scaled objective: α is inflated so the data term carries
    // the full-sample weight against the KL term.
    let coarse = BoxObjective::new(&sub, alpha * scale, box_samples.min(128), seed);

    let mut best = BoxFit {
        bx: Box4 {
            a: 0.0,
            b: 0.5,
            c: 0.2,
            d: 0.25,
        },
        objective: f64::INFINITY,
    };
    let a_grid: Vec<f64> = (0..25).map(|i| lo + (hi - lo) * i as f64 / 24.0).collect();
    for &a in &a_grid {
        for &b in &[0.15, 0.3, 0.45, 0.65, 0.85] {
            for &c in &[0.05, 0.15, 0.3] {
                for &dfrac in &[0.5, 0.9] {
                    let bx = Box4 {
                        a,
                        b,
                        c,
                        d: dfrac * b,
                    };
                    let value = coarse.value(&bx);
                    if value < best.objective {
                        best = BoxFit { bx, objective: value };
                    }
                }
            }
        }
    }

    // Local coordinate refinement at the full budget.
    let objective = BoxObjective::new(data, alpha, box_samples, seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut bx = best.bx;
    let mut value = objective.value(&bx);
    let mut steps = [
        (hi - lo).max(0.5) / 12.0, // a
        0.12,                      // b
        0.5,                       // relative step in c
        0.3,                       // d as a fraction of b
    ];
    for _round in 0..2 {
        for coord in 0..4 {
            // At most a few moves per coordinate and round keeps the eval
            // budget bounded; the shrinking steps recover the precision.
            for _move in 0..2 {
                let mut improved = false;
                for dir in [-1.0, 1.0] {
                    let mut cand = bx;
                    match coord {
                        0 => cand.a += dir * steps[0],
                        1 => cand.b = (cand.b + dir * steps[1]).clamp(1e-3, 0.999),
                        2 => cand.c = (cand.c * (1.0 + dir * steps[2])).max(1e-4),
                        _ => {
                            let frac = (cand.d / cand.b + dir * steps[3]).clamp(0.05, 0.98);
                            cand.d = frac * cand.b;
                        }
                    }
                    if cand.d >= cand.b {
                        cand.d = 0.98 * cand.b;
                    }
                    let v = objective.value(&cand);
                    if v < value {
                        value = v;
                        bx = cand;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        for s in &mut steps {
            *s *= 0.35;
        }
    }
    BoxFit { bx, objective: value }
}

/// The in-expectation bound of the mixture proposition,
/// [1.5·log(2n/σ₀²) + m₀² + 1.23]/(n(1−α)).
pub fn proposition_bound(n: usize, m0: f64, sigma0_sq: f64, alpha: f64) -> f64 {
    (1.5 * (2.0 * n as f64 / sigma0_sq).ln() + m0 * m0 + 1.23) / (n as f64 * (1.0 - alpha))
}

/// D_α(P_θ, P_{θ₀}) between two mixture laws by quadrature of the defining
/// integral.
pub fn mixture_renyi(theta: (f64, f64), theta0: (f64, f64), alpha: f64) -> f64 {
    let order = RenyiOrder::new(alpha).expect("alpha validated upstream");
    let a = order.alpha();
    let integrand = move |x: f64| {
        let lp = mixture_log_density(x, theta.0, theta.1);
        let lq = mixture_log_density(x, theta0.0, theta0.1);
        (a * lp + (1.0 - a) * lq).exp()
    };
    let span = 10.0 + theta.0.abs() + theta0.0.abs();
    let integral = integrate_refining(integrand, -span, span, 128, 1e-9)
        .expect("mixture Renyi integrand is smooth");
    integral.ln() / (a - 1.0)
}

/// Monte Carlo average of the divergence under the fitted box.
pub fn box_divergence_mc(bx: &Box4, theta0: (f64, f64), alpha: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..draws {
        let m = bx.a + (2.0 * rng.random::<f64>() - 1.0) * bx.c;
        let v = bx.b - bx.d * rng.random::<f64>();
        acc += mixture_renyi((m, v), theta0, alpha);
    }
    acc / draws as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn proposition_bound_frozen_value() {
        // n=2000, m₀=1, σ₀²=0.25, α=0.5 → [1.5·log 16000 + 2.23]/1000.
        let got = proposition_bound(2000, 1.0, 0.25, 0.5);
        let want = (1.5 * 16000.0f64.ln() + 1.0 + 1.23) / 1000.0;
        assert_relative_eq!(got, want, epsilon = 1e-15);
        assert_relative_eq!(got, 0.01675, epsilon = 1e-5);
    }

    #[test]
    fn log_density_matches_direct_sum() {
        let x = 0.7;
        let (m, v) = (1.2, 0.3);
        let direct = (0.5 * (normal_logpdf(x, m, v)).exp() + 0.5 * normal_logpdf(x, 0.0, 1.0).exp()).ln();
        assert_relative_eq!(mixture_log_density(x, m, v), direct, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_divergence_is_exhibited() {
        // The exhibit requires an observation isolated at the widest probe
        // kernel scale; most datasets provide one, none is guaranteed to.
        let probes = [1e-2, 1e-4, 1e-6];
        for n in [200usize, 2000] {
            let mut exhibits = 0;
            for seed in 0..12u64 {
                let data = sample_data(n, 1.0, 0.25, seed);
                let (_, lls) = divergence_probe(&data, &probes);
                if lls[1] > lls[0] && lls[2] > lls[1] {
                    exhibits += 1;
                }
                // The final step gains the pinned point's own −½·log σ²
                // once the pin is isolated beyond the sd = 0.01 kernel.
                assert!(lls[2] > lls[1], "n={n} seed {seed}: {lls:?}");
            }
            assert!(exhibits >= 4, "n={n}: only {exhibits}/12 seeds exhibited");
        }
    }

    #[test]
    fn isolation_ranking_finds_the_outlier() {
        let data = [0.0, 0.1, 0.2, 5.0, 0.3];
        assert_eq!(isolation_ranking(&data)[0], 3);
    }

    #[test]
    fn box_kl_closed_form_matches_quadrature() {
        let bx = Box4 {
            a: 0.8,
            b: 0.6,
            c: 0.3,
            d: 0.2,
        };
        // KL(U[a−c,a+c], N(0,1)) by quadrature plus log(1/d).
        let dens = 1.0 / (2.0 * bx.c);
        let integrand = move |x: f64| dens * (dens.ln() - normal_logpdf(x, 0.0, 1.0));
        let q = integrate_refining(integrand, bx.a - bx.c, bx.a + bx.c, 64, 1e-12).unwrap();
        assert_relative_eq!(box_kl(&bx), q + (1.0 / bx.d).ln(), epsilon = 1e-9);
    }

    #[test]
    fn invalid_boxes_rejected_by_objective() {
        let data = [0.0, 1.0];
        let objective = BoxObjective::new(&data, 0.5, 50, 1);
        for bad in [
            Box4 { a: 0.0, b: 0.5, c: -0.1, d: 0.2 },
            Box4 { a: 0.0, b: 0.5, c: 0.1, d: 0.6 },
            Box4 { a: 0.0, b: 1.2, c: 0.1, d: 0.2 },
        ] {
            assert_eq!(objective.value(&bad), f64::INFINITY);
        }
    }

    #[test]
    fn fast_objective_matches_direct_evaluation() {
        // The guarded log-sum-exp path must agree with the plain
        // total_log_lik average over the same unit-square draws.
        let data = sample_data(40, 1.0, 0.25, 3);
        let alpha = 0.6;
        let bx = Box4 { a: 0.9, b: 0.4, c: 0.2, d: 0.3 };
        let objective = BoxObjective::new(&data, alpha, 64, 9);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut acc = 0.0;
        for _ in 0..64 {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            let m = bx.a + (2.0 * u1 - 1.0) * bx.c;
            let v = bx.b - bx.d * u2;
            acc += total_log_lik(&data, m, v);
        }
        let direct = -alpha * acc / 64.0 + box_kl(&bx);
        approx::assert_relative_eq!(objective.value(&bx), direct, epsilon = 1e-10);
    }

    #[test]
    fn mixture_renyi_zero_at_equal_parameters() {
        let d = mixture_renyi((1.0, 0.25), (1.0, 0.25), 0.5);
        assert!(d.abs() < 1e-9);
        let d = mixture_renyi((2.0, 0.25), (0.0, 0.5), 0.5);
        assert!(d > 0.0);
    }

    #[test]
    fn box_fit_recovers_center_at_moderate_n() {
        let data = sample_data(800, 1.0, 0.25, 11);
        let fit = fit_box(&data, 0.5, 2000, 1);
        assert!(fit.bx.is_valid());
        assert!(
            (fit.bx.a - 1.0).abs() < 0.25,
            "box center {} too far from the truth",
            fit.bx.a
        );
    }
}
