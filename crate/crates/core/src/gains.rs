//! Statistically equivalent gains for the dead-zone restoring force.
//!
//! Under a Gaussian closure the nonlinearity g(x) is replaced by the pair
//! (α₀, α₁): α₀(m₁, σ₁₁) = E[g(X)] for X ~ N(m₁, σ₁₁) is the expected
//! restoring force, and α₁ = ∂α₀/∂m₁ is the equivalent stiffness gain.
//! Both have closed forms in erf and Gaussian density terms; this module
//! also ships an independent quadrature oracle ([`quadrature_expectation`])
//! that the closed forms are tested against.
//!
//! All gains here are for the unit-slope dead zone (`g_slope = 1`); a
//! different physical slope scales the stiffness k, not the gains.

use crate::error::{Error, Result};
use crate::model::dead_zone_force;
use std::f64::consts::PI;

/// Variance floor below which the Gaussian closure degenerates to the
/// deterministic limit α₀ = g(m₁), α₁ = g'(m₁). Avoids 0/0 in the erf
/// arguments as σ₁₁ → 0.
pub const SIGMA_MIN: f64 = 1e-12;

/// Arguments of the equivalent gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainInput {
    /// Mean displacement m₁.
    pub m1: f64,
    /// Displacement variance σ₁₁.
    pub s11: f64,
    /// Dead-zone half-width μ.
    pub mu: f64,
}

impl GainInput {
    pub fn new(m1: f64, s11: f64, mu: f64) -> Self {
        Self { m1, s11, mu }
    }

    fn validate(&self) -> Result<()> {
        if self.s11 < 0.0 || !self.s11.is_finite() {
            return Err(Error::NegativeVariance(self.s11));
        }
        if self.mu < 0.0 || !self.mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "dead-zone half-width must be finite and nonnegative",
            });
        }
        Ok(())
    }
}

/// Expected restoring force α₀(m₁, σ₁₁) = E[g(X)], X ~ N(m₁, σ₁₁).
///
/// Closed form:
/// α₀ = m₁ + √(σ₁₁/2π)(e^{−(m₁−μ)²/2σ₁₁} − e^{−(m₁+μ)²/2σ₁₁})
///        + ((m₁−μ)/2)·erf((m₁−μ)/√(2σ₁₁)) − ((m₁+μ)/2)·erf((m₁+μ)/√(2σ₁₁)).
///
/// Below [`SIGMA_MIN`] the deterministic branch g(m₁) is used.
pub fn alpha0(input: &GainInput) -> Result<f64> {
    input.validate()?;
    Ok(alpha_pair(input.m1, input.s11, input.mu).0)
}

/// Equivalent stiffness gain α₁ = ∂α₀/∂m₁
/// = 1 + ½·erf((m₁−μ)/√(2σ₁₁)) − ½·erf((m₁+μ)/√(2σ₁₁)).
///
/// Below [`SIGMA_MIN`] the deterministic branch (unit-slope indicator of
/// |m₁| > μ) is used.
pub fn alpha1(input: &GainInput) -> Result<f64> {
    input.validate()?;
    Ok(alpha_pair(input.m1, input.s11, input.mu).1)
}

/// Both gains in one evaluation, sharing the erf/exp calls.
///
/// This is the moment-equation hot path. It is deliberately permissive
/// about the variance: any `s11 < SIGMA_MIN` (including negative values,
/// which the reduced moment flow does visit at small amplitude) falls back
/// to the deterministic branch. Callers that need strict domain checking
/// should use [`alpha0`] / [`alpha1`].
pub fn alpha_pair(m1: f64, s11: f64, mu: f64) -> (f64, f64) {
    if s11 < SIGMA_MIN {
        let a0 = dead_zone_force(m1, mu, 1.0);
        let a1 = if m1.abs() > mu { 1.0 } else { 0.0 };
        return (a0, a1);
    }
    let s = s11.sqrt();
    let dm = m1 - mu;
    let dp = m1 + mu;
    // zm, zp are the kink offsets in units of σ.
    let zm = dm / s;
    let zp = dp / s;
    let erf_m = libm::erf(zm / std::f64::consts::SQRT_2);
    let erf_p = libm::erf(zp / std::f64::consts::SQRT_2);
    // Grouping the erf tails keeps α₀ exactly odd and α₁ exactly even in m₁
    // (every subexpression maps to its negation/self under m₁ → −m₁).
    let gauss = ((-0.5 * zm * zm).exp() - (-0.5 * zp * zp).exp()) * s / (2.0 * PI).sqrt();
    let erf_tail = 0.5 * dm * erf_m - 0.5 * dp * erf_p;
    let a0 = m1 + gauss + erf_tail;
    let a1 = 1.0 + 0.5 * (erf_m - erf_p);
    (a0, a1)
}

/// The standard comparison grid for gain validation: m₁ ∈ [−3, 3] in steps
/// of 0.1 crossed with five variances spanning four decades. Shared by the
/// unit tests, the acceptance suite, and the `gains-check` CLI output.
pub fn comparison_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(61 * 5);
    for i in 0..=60 {
        let m1 = -3.0 + 0.1 * i as f64;
        for &s11 in &[1e-4, 1e-2, 0.1, 1.0, 10.0] {
            grid.push((m1, s11));
        }
    }
    grid
}

/// Gauss–Legendre rule of the given order on [−1, 1], by Golub–Welsch:
/// nodes are eigenvalues of the Jacobi matrix, weights 2·(first eigenvector
/// component)².
fn gauss_legendre_rule(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.max(2);
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors.column(i)[0];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule.into_iter().unzip()
}

fn panel_sum(f: &dyn Fn(f64) -> f64, a: f64, b: f64, xs: &[f64], ws: &[f64]) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in xs.iter().zip(ws) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

fn refine_panel(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    xs: &[f64],
    ws: &[f64],
    depth: u32,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = panel_sum(f, a, mid, xs, ws);
    let right = panel_sum(f, mid, b, xs, ws);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= 1e-14 * refined.abs().max(1.0) {
        return refined;
    }
    refine_panel(f, a, mid, left, xs, ws, depth - 1)
        + refine_panel(f, mid, b, right, xs, ws, depth - 1)
}

/// Independent oracle for Gaussian expectations: E[f(X)], X ~ N(m, v).
///
/// Composite Gauss–Legendre quadrature of f·(normal density) on
/// [m − 12σ, m + 12σ] (truncation mass < 10⁻³²), with `nodes` points per
/// panel and adaptive panel bisection so that kinks in f are resolved to
/// near machine precision. Exact for polynomial f of degree < 2·nodes up to
/// floating-point roundoff. `v = 0` returns f(m).
pub fn quadrature_expectation<F: Fn(f64) -> f64>(f: F, m: f64, v: f64, nodes: usize) -> f64 {
    if v <= 0.0 {
        return f(m);
    }
    let (xs, ws) = gauss_legendre_rule(nodes);
    let sigma = v.sqrt();
    let norm = 1.0 / (2.0 * PI * v).sqrt();
    let inv2v = 0.5 / v;
    let integrand = move |x: f64| f(x) * norm * (-(x - m) * (x - m) * inv2v).exp();
    let a = m - 12.0 * sigma;
    let b = m + 12.0 * sigma;
    let whole = panel_sum(&integrand, a, b, &xs, &ws);
    refine_panel(&integrand, a, b, whole, &xs, &ws, 24)
}
