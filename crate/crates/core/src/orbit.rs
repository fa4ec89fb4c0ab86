//! Stroboscopic Poincaré map of the moment flow and the machinery built on
//! it: variational (monodromy) Jacobians, Newton solving for m-periodic
//! fixed points, characteristic multipliers, and attractor classification.
//!
//! The map T advances a moment state over one forcing period τ = 2π/ω with
//! the same fixed RK4 grid the rest of the crate uses. The variational
//! system J' = Df·J, J(0) = I is integrated on the very same step sequence,
//! so the reported monodromy is the exact derivative of the discrete flow
//! map (up to the finite-difference error in the gain σ-derivatives), which
//! is what Newton actually differentiates.

use crate::error::{Error, Result};
use crate::gains::{alpha_pair, SIGMA_MIN};
use crate::mde::{mde_rhs_inner, MdeParams, MomentState, DEFAULT_DT_HINT, MOMENT_GUARD};
use nalgebra::{Complex, Matrix5, Vector5};

/// Newton convergence tolerance on the max-norm residual of T^m(q) − q.
pub const NEWTON_TOL: f64 = 1e-10;
/// Newton iteration cap.
pub const NEWTON_MAX_ITER: usize = 50;

/// Both gains and their state derivatives at one evaluation point.
/// ∂α₀/∂m₁ = α₁ exactly; the σ-derivatives and ∂α₁/∂m₁ use central
/// differences with h = 10⁻⁷·(1+|arg|) (the σ step additionally shrinks to
/// stay on the smooth branch near s11 = 0).
struct GainBundle {
    a0: f64,
    a1: f64,
    da0_ds: f64,
    da1_dm: f64,
    da1_ds: f64,
}

fn gain_bundle(m1: f64, s11: f64, mu: f64) -> GainBundle {
    let (a0, a1) = alpha_pair(m1, s11, mu);
    if s11 < SIGMA_MIN {
        // Deterministic branch: the gains are locally independent of s11,
        // and д/дm1 of the slope indicator is zero away from the kinks.
        return GainBundle { a0, a1, da0_ds: 0.0, da1_dm: 0.0, da1_ds: 0.0 };
    }
    let hm = 1e-7 * (1.0 + m1.abs());
    let da1_dm = (alpha_pair(m1 + hm, s11, mu).1 - alpha_pair(m1 - hm, s11, mu).1) / (2.0 * hm);
    let hs = (1e-7 * (1.0 + s11.abs())).min(0.5 * s11);
    let up = alpha_pair(m1, s11 + hs, mu);
    let dn = alpha_pair(m1, s11 - hs, mu);
    GainBundle {
        a0,
        a1,
        da0_ds: (up.0 - dn.0) / (2.0 * hs),
        da1_dm,
        da1_ds: (up.1 - dn.1) / (2.0 * hs),
    }
}

/// Jacobian Df of the moment right-hand side at (q, t).
fn mde_jacobian_from(q: &MomentState, t: f64, p: &MdeParams, b: &GainBundle) -> Matrix5<f64> {
    let c = p.osc.c;
    let k = p.osc.k * p.osc.g_slope;
    let sf = if p.sigma_forcing { p.p_amp * p.phase_factor(t) } else { 0.0 };
    #[rustfmt::skip]
    let df = Matrix5::new(
        0.0,                          1.0,      0.0,                             0.0,        0.0,
        -k * b.a1,                    -c,       -k * b.da0_ds,                   0.0,        0.0,
        0.0,                          0.0,      0.0,                             2.0,        0.0,
        -k * b.da1_dm * q.s11 + sf,   0.0,      -k * (b.a1 + b.da1_ds * q.s11),  -c,         1.0,
        -2.0 * k * b.da1_dm * q.s12,  2.0 * sf, -2.0 * k * b.da1_ds * q.s12,     -2.0 * k * b.a1, -2.0 * c,
    );
    df
}

/// Public access to Df for diagnostics and tests.
pub fn mde_jacobian(q: &MomentState, t: f64, p: &MdeParams) -> Matrix5<f64> {
    let b = gain_bundle(q.m1, q.s11, p.osc.mu);
    mde_jacobian_from(q, t, p, &b)
}

fn ext_rhs(
    q: &Vector5<f64>,
    j: &Matrix5<f64>,
    t: f64,
    p: &MdeParams,
) -> (Vector5<f64>, Matrix5<f64>, f64) {
    let qs = MomentState::from_vector(q);
    let b = gain_bundle(qs.m1, qs.s11, p.osc.mu);
    let f = mde_rhs_inner(&qs, t, p, b.a0, b.a1).to_vector();
    let df = mde_jacobian_from(&qs, t, p, &b);
    (f, df * j, df.trace())
}

/// The map T(q) and its monodromy after one (or m) periods.
#[derive(Clone, Debug, PartialEq)]
pub struct MapEvaluation {
    pub q_out: MomentState,
    /// J(mτ) of the variational system along the trajectory.
    pub monodromy: Matrix5<f64>,
    /// ∫ tr Df dt over the same span; det(monodromy) = exp of this up to
    /// integrator error (Abel–Liouville).
    pub trace_integral: f64,
}

fn integrate_periods(
    q0: &MomentState,
    p: &MdeParams,
    periods: usize,
    with_jacobian: bool,
) -> Result<MapEvaluation> {
    let tau = p.tau();
    let n_per = p.steps_per_period(DEFAULT_DT_HINT);
    let n = n_per * periods;
    let h = tau / n_per as f64;
    let mut q = q0.to_vector();
    let mut j = Matrix5::identity();
    let mut w = 0.0;
    for i in 0..n {
        let t = i as f64 * h;
        if with_jacobian {
            let (kq1, kj1, kw1) = ext_rhs(&q, &j, t, p);
            let (kq2, kj2, kw2) =
                ext_rhs(&(q + 0.5 * h * kq1), &(j + 0.5 * h * kj1), t + 0.5 * h, p);
            let (kq3, kj3, kw3) =
                ext_rhs(&(q + 0.5 * h * kq2), &(j + 0.5 * h * kj2), t + 0.5 * h, p);
            let (kq4, kj4, kw4) = ext_rhs(&(q + h * kq3), &(j + h * kj3), t + h, p);
            q += (h / 6.0) * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4);
            j += (h / 6.0) * (kj1 + 2.0 * kj2 + 2.0 * kj3 + kj4);
            w += (h / 6.0) * (kw1 + 2.0 * (kw2 + kw3) + kw4);
        } else {
            let qs = |v: &Vector5<f64>| MomentState::from_vector(v);
            let k1 = crate::mde::mde_rhs(&qs(&q), t, p).to_vector();
            let k2 = crate::mde::mde_rhs(&qs(&(q + 0.5 * h * k1)), t + 0.5 * h, p).to_vector();
            let k3 = crate::mde::mde_rhs(&qs(&(q + 0.5 * h * k2)), t + 0.5 * h, p).to_vector();
            let k4 = crate::mde::mde_rhs(&qs(&(q + h * k3)), t + h, p).to_vector();
            q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !(q.iter().all(|x| x.is_finite()) && q.amax() <= MOMENT_GUARD) {
            return Err(Error::Divergence { t: t + h, member: None });
        }
    }
    Ok(MapEvaluation { q_out: MomentState::from_vector(&q), monodromy: j, trace_integral: w })
}

/// The stroboscopic map: integrates the moment equations from t = 0 over one
/// forcing period starting at `q`.
pub fn poincare_map(q: &MomentState, p: &MdeParams) -> Result<MomentState> {
    p.validate()?;
    Ok(integrate_periods(q, p, 1, false)?.q_out)
}

/// The map together with its monodromy J(τ), co-integrated on the same RK4
/// steps.
pub fn poincare_map_with_jacobian(q: &MomentState, p: &MdeParams) -> Result<MapEvaluation> {
    p.validate()?;
    integrate_periods(q, p, 1, true)
}

/// T^m with the chained monodromy D(T^m), in one pass over m periods (the
/// right-hand side is τ-periodic, so one integration over [0, mτ] equals the
/// m-fold composition).
pub fn poincare_power_with_jacobian(
    q: &MomentState,
    m: usize,
    p: &MdeParams,
) -> Result<MapEvaluation> {
    p.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            value: 0.0,
            reason: "period multiplier must be at least 1",
        });
    }
    integrate_periods(q, p, m, true)
}

/// A converged (or best-effort) m-periodic fixed point of the map.
#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub q_bar: MomentState,
    /// Period multiplier: q̄ is a fixed point of T^m.
    pub m: usize,
    /// Eigenvalues of the reported monodromy of T^m.
    pub multipliers: Vec<Complex<f64>>,
    /// Max-norm of T^m(q̄) − q̄.
    pub residual: f64,
    /// All multipliers strictly inside the unit circle.
    pub stable: bool,
    /// Monodromy D(T^m) at q̄.
    pub monodromy: Matrix5<f64>,
    /// Residuals of the Newton iterates, first to last.
    pub residual_history: Vec<f64>,
}

/// Newton iteration on T^m(q) − q = 0 seeded at `q_guess`, converged when
/// the residual drops below 10⁻¹⁰. Non-convergence after 50 iterations
/// returns the best iterate and its residual in the error; a singular Newton
/// matrix signals proximity to a bifurcation.
pub fn find_fixed_point(
    q_guess: &MomentState,
    m: usize,
    p: &MdeParams,
) -> Result<FixedPointResult> {
    let mut q = q_guess.to_vector();
    let mut best = q;
    let mut best_res = f64::INFINITY;
    let mut history = Vec::new();
    for iter in 0..NEWTON_MAX_ITER {
        let eval = poincare_power_with_jacobian(&MomentState::from_vector(&q), m, p)?;
        let r = eval.q_out.to_vector() - q;
        let res = r.amax();
        history.push(res);
        if res < best_res {
            best_res = res;
            best = q;
        }
        if res < NEWTON_TOL {
            let multipliers: Vec<Complex<f64>> =
                eval.monodromy.complex_eigenvalues().iter().copied().collect();
            let stable = multipliers.iter().all(|s| s.norm() < 1.0);
            return Ok(FixedPointResult {
                q_bar: MomentState::from_vector(&q),
                m,
                multipliers,
                residual: res,
                stable,
                monodromy: eval.monodromy,
                residual_history: history,
            });
        }
        let newton_matrix = eval.monodromy - Matrix5::identity();
        let delta = match newton_matrix.lu().solve(&(-r)) {
            Some(d) => d,
            None => return Err(Error::SingularJacobian { residual: res }),
        };
        if !delta.iter().all(|x| x.is_finite()) {
            return Err(Error::NewtonStalled {
                best: vector_to_array(&best),
                residual: best_res,
                iterations: iter + 1,
            });
        }
        // Backtracking along the Newton direction: trajectories that graze
        // the force dead zone make J − I nearly singular, and the raw step
        // can be enormous. Shrink until the residual actually drops; near
        // the root the full step always wins, preserving quadratic
        // convergence.
        let mut lambda = (50.0 / delta.amax()).min(1.0);
        let mut accepted = false;
        for _ in 0..12 {
            let cand = q + lambda * delta;
            if let Ok(ev) = integrate_periods(&MomentState::from_vector(&cand), p, m, false) {
                if (ev.q_out.to_vector() - cand).amax() < res {
                    q = cand;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStalled {
                best: vector_to_array(&best),
                residual: best_res,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::NewtonStalled {
        best: vector_to_array(&best),
        residual: best_res,
        iterations: NEWTON_MAX_ITER,
    })
}

fn vector_to_array(v: &Vector5<f64>) -> [f64; 5] {
    [v[0], v[1], v[2], v[3], v[4]]
}

/// Characteristic polynomial of the monodromy at a complex argument:
/// P(s) = det(s·I − DT).
pub fn characteristic_poly(s: Complex<f64>, monodromy: &Matrix5<f64>) -> Complex<f64> {
    let m = Matrix5::<Complex<f64>>::from_fn(|i, j| {
        let kron = if i == j { s } else { Complex::new(0.0, 0.0) };
        kron - Complex::new(monodromy[(i, j)], 0.0)
    });
    m.determinant()
}

/// P(1) = det(I − DT), the saddle-node indicator, evaluated in real
/// arithmetic.
pub fn p_at_one(monodromy: &Matrix5<f64>) -> f64 {
    (Matrix5::identity() - monodromy).determinant()
}

/// Outcome of iterating the map from a seed.
#[derive(Clone, Debug, PartialEq)]
pub enum AttractorKind {
    /// Recurrence within tolerance after every m iterates.
    Periodic(usize),
    /// Bounded, but no recurrence up to the probe budget.
    QuasiPeriodic,
    /// The flow left the numerical guard.
    Divergent,
}

/// Classification plus the Poincaré-section samples it was based on.
#[derive(Clone, Debug, PartialEq)]
pub struct AttractorClass {
    pub kind: AttractorKind,
    /// The post-transient section iterates (empty for divergent runs).
    pub points: Vec<MomentState>,
}

/// Iterates the map `transient_iters` times, then looks for the smallest
/// period m ≤ `probe_iters` such that every probe iterate recurs within
/// `tol` (relative to the attractor diameter, floored at 10⁻⁶ absolute).
/// Unbounded growth classifies as divergent; classification never errors.
pub fn classify_attractor(
    q0: &MomentState,
    p: &MdeParams,
    transient_iters: usize,
    probe_iters: usize,
    tol: f64,
) -> AttractorClass {
    let mut q = *q0;
    for _ in 0..transient_iters {
        match poincare_map(&q, p) {
            Ok(next) => q = next,
            Err(_) => return AttractorClass { kind: AttractorKind::Divergent, points: vec![] },
        }
    }
    let mut points = Vec::with_capacity(probe_iters + 1);
    points.push(q);
    for _ in 0..probe_iters {
        match poincare_map(&q, p) {
            Ok(next) => q = next,
            Err(_) => return AttractorClass { kind: AttractorKind::Divergent, points },
        }
        points.push(q);
    }
    let vecs: Vec<Vector5<f64>> = points.iter().map(|s| s.to_vector()).collect();
    let mut diameter = 0.0f64;
    for d in 0..5 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &vecs {
            lo = lo.min(v[d]);
            hi = hi.max(v[d]);
        }
        diameter = diameter.max(hi - lo);
    }
    let tol_abs = tol * diameter.max(1e-6);
    for m in 1..=probe_iters {
        let mut recurs = true;
        for k in 0..vecs.len() - m {
            if (vecs[k + m] - vecs[k]).amax() > tol_abs {
                recurs = false;
                break;
            }
        }
        if recurs {
            return AttractorClass { kind: AttractorKind::Periodic(m), points };
        }
    }
    AttractorClass { kind: AttractorKind::QuasiPeriodic, points }
}
