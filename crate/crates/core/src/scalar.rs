//! Scalar abstraction and special functions.
//!
//! The divergence and bound-evaluator modules are generic over [`Real`] so
//! the same formulas serve `f32` and `f64`. The special functions here are
//! implemented directly (Lanczos / asymptotic series) so they stay generic;
//! they are validated against an independent reference in the test suite.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the core math.
pub trait Real:
    Float + FromPrimitive + num_traits::NumAssign + std::iter::Sum + std::fmt::Debug + std::fmt::Display + 'static
{
    /// Shorthand for lossy conversion from `f64` literals.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant must convert into the scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + num_traits::NumAssign
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + 'static
{
}

/// Lanczos coefficients (g = 7, n = 9).
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for positive arguments
/// (reflection handles `x < 0.5`).
pub fn ln_gamma<S: Real>(x: S) -> S {
    let half = S::c(0.5);
    if x < half {
        // Reflection: ln Γ(x) = ln(π / sin(πx)) − ln Γ(1 − x).
        let pi = S::c(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(S::one() - x);
    }
    let x = x - S::one();
    let mut acc = S::c(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += S::c(c) / (x + S::c(i as f64));
    }
    let g = S::c(7.5);
    let t = x + g;
    let ln_sqrt_2pi = S::c(0.918_938_533_204_672_74);
    ln_sqrt_2pi + (x + half) * t.ln() - t + acc.ln()
}

/// Digamma function ψ(x) for positive arguments: upward recurrence into the
/// asymptotic region, then the standard Bernoulli-number series.
pub fn digamma<S: Real>(x: S) -> S {
    assert!(x > S::zero(), "digamma requires a positive argument");
    let mut x = x;
    let mut acc = S::zero();
    let threshold = S::c(6.0);
    while x < threshold {
        acc -= S::one() / x;
        x += S::one();
    }
    let inv = S::one() / x;
    let inv2 = inv * inv;
    // ψ(x) ≈ ln x − 1/(2x) − Σ B_{2k}/(2k x^{2k})
    let series = inv2
        * (S::c(1.0 / 12.0)
            - inv2
                * (S::c(1.0 / 120.0)
                    - inv2 * (S::c(1.0 / 252.0) - inv2 * (S::c(1.0 / 240.0) - inv2 * S::c(1.0 / 132.0)))));
    acc + x.ln() - inv * S::c(0.5) - series
}

/// log Σ exp(v_i), guarded by subtracting the maximum; returns −∞ on an
/// empty or all-(−∞) input.
pub fn log_sum_exp<S: Real>(values: &[S]) -> S {
    let max = values
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return max;
    }
    let sum: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
