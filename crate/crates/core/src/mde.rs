//! The reduced moment differential equations (MDE) of the randomly forced
//! oscillator under Gaussian closure: five states (mean displacement and
//! velocity, displacement variance, displacement-velocity covariance,
//! velocity variance) driven by the phase-averaged harmonic forcing.
//!
//! The right-hand side is evaluated exactly as the reduction prescribes:
//!
//! ```text
//! m1' = m2
//! m2' = -c m2 - k α₀(m1, s11) + Q + P F(t)
//! s11' = 2 s12
//! s12' = s22 - c s12 - k α₁(m1, s11) s11 + P m1 F(t)
//! s22' = -2 c s22 - 2 k α₁(m1, s11) s12 + 2 P m2 F(t)
//! ```
//!
//! with F(t) the phase-averaged cosine factor. Two facts shape the
//! implementation and are worth stating up front:
//!
//! * The σ-block is not a positivity-preserving covariance flow: at small
//!   amplitude the forcing terms `P m1 F` and `2 P m2 F` push the variances
//!   transiently negative, and the small attractors genuinely live partly at
//!   slightly negative σ values. Integration therefore does not police
//!   positive semidefiniteness; the gains degrade to their deterministic
//!   branch below [`crate::gains::SIGMA_MIN`] (see [`MomentState::psd_defect`]
//!   for observing the closure's consistency).
//! * With the variances pinned at zero and the σ-forcing disabled, the mean
//!   equations reduce exactly to the deterministic oscillator, which is the
//!   cross-engine consistency anchor used in the tests.

use crate::error::{Error, Result};
use crate::gains::alpha_pair;
use crate::model::OscillatorParams;
use nalgebra::Vector5;

/// Default integrator step hint: periods are divided into round(τ/hint)
/// equal RK4 steps.
pub const DEFAULT_DT_HINT: f64 = 0.005;

/// Component magnitude treated as divergence of the moment flow.
pub const MOMENT_GUARD: f64 = 1e9;

/// The five moment states.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentState {
    /// Mean displacement.
    pub m1: f64,
    /// Mean velocity.
    pub m2: f64,
    /// Displacement variance.
    pub s11: f64,
    /// Displacement-velocity covariance.
    pub s12: f64,
    /// Velocity variance.
    pub s22: f64,
}

impl MomentState {
    pub const DIM: usize = 5;

    pub fn new(m1: f64, m2: f64, s11: f64, s12: f64, s22: f64) -> Self {
        Self { m1, m2, s11, s12, s22 }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_vector(self) -> Vector5<f64> {
        Vector5::new(self.m1, self.m2, self.s11, self.s12, self.s22)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    /// Mean-square displacement, s11 + m1².
    pub fn mean_square(&self) -> f64 {
        self.s11 + self.m1 * self.m1
    }

    /// How far the σ-block sits outside the positive-semidefinite cone,
    /// beyond the integration tolerance 10⁻⁶·(1 + |s11·s22|): zero when the
    /// closure is self-consistent at this state, positive otherwise.
    pub fn psd_defect(&self) -> f64 {
        let tol = 1e-6 * (1.0 + (self.s11 * self.s22).abs());
        let det = self.s11 * self.s22 - self.s12 * self.s12;
        let mut defect = (-(det) - tol).max(0.0);
        defect = defect.max(-self.s11 - tol).max(-self.s22 - tol);
        defect.max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    fn within_guard(&self) -> bool {
        self.is_finite() && self.to_vector().amax() <= MOMENT_GUARD
    }
}

/// How the Brownian phase average of cos(ωt + ρB_t) enters the forcing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFactorMode {
    /// The constant factor e^{+ρ²/2}·cos ωt, exactly as the reduced
    /// equations state it.
    PaperConstant,
    /// The decaying Brownian average e^{−ρ²t/2}·cos ωt. At ρ = 2·10⁻⁵ the
    /// two modes differ by less than 10⁻⁹ over any horizon used here.
    Decaying,
}

/// Parameters of the moment equations.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MdeParams {
    pub osc: OscillatorParams,
    /// Forcing amplitude P.
    pub p_amp: f64,
    /// Forcing frequency ω (> 0; sets the period τ = 2π/ω).
    pub omega: f64,
    /// Phase diffusion intensity ρ.
    pub rho: f64,
    pub phase_mode: PhaseFactorMode,
    /// Whether the σ-block forcing terms (P·m1·F and 2P·m2·F) are active.
    /// They are part of the reduced equations (default true); disabling them
    /// exposes the homogeneous covariance structure for testing.
    pub sigma_forcing: bool,
}

impl MdeParams {
    /// Reference parameter set: default oscillator, P = 0.2, ρ = 2·10⁻⁵,
    /// constant phase factor.
    pub fn standard(omega: f64) -> Self {
        Self {
            osc: OscillatorParams::default(),
            p_amp: 0.2,
            omega,
            rho: 2e-5,
            phase_mode: PhaseFactorMode::PaperConstant,
            sigma_forcing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.osc.validate()?;
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "omega",
                value: self.omega,
                reason: "moment equations need a positive forcing frequency",
            });
        }
        if !(self.p_amp >= 0.0 && self.p_amp.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "P",
                value: self.p_amp,
                reason: "must be >= 0",
            });
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must be >= 0",
            });
        }
        Ok(())
    }

    /// Forcing period τ = 2π/ω.
    pub fn tau(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// RK4 steps per period for a given step hint.
    pub fn steps_per_period(&self, dt_hint: f64) -> usize {
        ((self.tau() / dt_hint).round() as usize).max(1)
    }

    /// The phase-averaged cosine factor F(t).
    pub fn phase_factor(&self, t: f64) -> f64 {
        let r2 = self.rho * self.rho;
        match self.phase_mode {
            PhaseFactorMode::PaperConstant => (0.5 * r2).exp() * (self.omega * t).cos(),
            PhaseFactorMode::Decaying => (-0.5 * r2 * t).exp() * (self.omega * t).cos(),
        }
    }
}

/// Right-hand side with externally supplied gains; the public entry point
/// evaluates the gains from the state, the variational integrator supplies
/// frozen or perturbed gains.
pub(crate) fn mde_rhs_inner(
    q: &MomentState,
    t: f64,
    p: &MdeParams,
    a0: f64,
    a1: f64,
) -> MomentState {
    let c = p.osc.c;
    // The physical dead-zone slope scales the stiffness of the unit-slope
    // equivalent gains.
    let k = p.osc.k * p.osc.g_slope;
    let pf = p.p_amp * p.phase_factor(t);
    let sf = if p.sigma_forcing { pf } else { 0.0 };
    MomentState {
        m1: q.m2,
        m2: -c * q.m2 - k * a0 + p.osc.q_load + pf,
        s11: 2.0 * q.s12,
        s12: q.s22 - c * q.s12 - k * a1 * q.s11 + sf * q.m1,
        s22: -2.0 * c * q.s22 - 2.0 * k * a1 * q.s12 + 2.0 * sf * q.m2,
    }
}

/// Time derivative of the moment state. Total on finite states: variances
/// below the gain floor (including transiently negative ones, which the flow
/// does produce) use the deterministic gain branch.
pub fn mde_rhs(q: &MomentState, t: f64, p: &MdeParams) -> MomentState {
    let (a0, a1) = alpha_pair(q.m1, q.s11, p.osc.mu);
    mde_rhs_inner(q, t, p, a0, a1)
}

fn rk4_step(q: &MomentState, t: f64, h: f64, p: &MdeParams) -> MomentState {
    let y = q.to_vector();
    let k1 = mde_rhs(q, t, p).to_vector();
    let k2 = mde_rhs(&MomentState::from_vector(&(y + 0.5 * h * k1)), t + 0.5 * h, p).to_vector();
    let k3 = mde_rhs(&MomentState::from_vector(&(y + 0.5 * h * k2)), t + 0.5 * h, p).to_vector();
    let k4 = mde_rhs(&MomentState::from_vector(&(y + h * k3)), t + h, p).to_vector();
    MomentState::from_vector(&(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
}

/// End state of the moment flow from `q0` over `[t0, t0 + t_span]` in
/// `steps` fixed RK4 steps (no recording).
pub fn flow(
    q0: &MomentState,
    p: &MdeParams,
    t0: f64,
    t_span: f64,
    steps: usize,
) -> Result<MomentState> {
    let h = t_span / steps as f64;
    let mut q = *q0;
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        q = rk4_step(&q, t, h, p);
        if !q.within_guard() {
            return Err(Error::Divergence { t: t + h, member: None });
        }
    }
    Ok(q)
}

/// A recorded moment trajectory on a uniform time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentTrajectory {
    pub t: Vec<f64>,
    pub q: Vec<MomentState>,
}

impl MomentTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn end_state(&self) -> MomentState {
        *self.q.last().expect("trajectory holds at least the initial state")
    }

    pub fn series(&self, f: impl Fn(&MomentState) -> f64) -> Vec<f64> {
        self.q.iter().map(f).collect()
    }
}

/// Integrates the moment equations from t = 0 to `t_end` with fixed step
/// ≈ `dt` (rounded so the horizon is hit exactly), recording every step.
/// Deterministic; errors only on numerical divergence (reported with t).
pub fn integrate_mde(
    q0: &MomentState,
    p: &MdeParams,
    t_end: f64,
    dt: f64,
) -> Result<MomentTrajectory> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "step must be positive and finite",
        });
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "horizon must be nonnegative and finite",
        });
    }
    let n = ((t_end / dt).round() as usize).max(1);
    let h = t_end / n as f64;
    let mut out = MomentTrajectory { t: Vec::with_capacity(n + 1), q: Vec::with_capacity(n + 1) };
    let mut q = *q0;
    out.t.push(0.0);
    out.q.push(q);
    for i in 0..n {
        let t = i as f64 * h;
        q = rk4_step(&q, t, h, p);
        if !q.within_guard() {
            return Err(Error::Divergence { t: t + h, member: None });
        }
        out.t.push((i + 1) as f64 * h);
        out.q.push(q);
    }
    Ok(out)
}

/// Sweep direction over the frequency grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    Forward,
    Backward,
}

impl SweepDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepDirection::Forward => "forward",
            SweepDirection::Backward => "backward",
        }
    }
}

/// One settled sweep point: peak-to-peak measures of the observables over
/// the measurement window, plus the states bracketing this point's
/// integration (for exact re-runs and for seeding fixed-point solvers).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub omega: f64,
    pub ptp_m1: f64,
    /// Peak-to-peak of the mean square s11 + m1².
    pub ptp_msq: f64,
    pub ptp_s22: f64,
    /// State this point started settling from (the previous point's exit).
    pub entry_state: MomentState,
    /// State after settle + measure; lies on the settled branch at the
    /// stroboscopic section (whole periods are integrated).
    pub exit_state: MomentState,
}

/// A forward or backward frequency-response curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseCurve {
    pub direction: SweepDirection,
    /// Points in sweep order (reversed grid order for backward sweeps).
    pub points: Vec<SweepPoint>,
}

impl ResponseCurve {
    /// Points sorted by ω ascending, for direction-independent comparison.
    pub fn by_omega(&self) -> Vec<&SweepPoint> {
        let mut v: Vec<&SweepPoint> = self.points.iter().collect();
        v.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        v
    }
}

/// Continuation sweep of the frequency response: at each ω the state settles
/// for `settle_periods` forcing periods, then the peak-to-peak of m1, the
/// mean square, and s22 are measured over `measure_periods` periods; the
/// settled state seeds the next grid point. The first point starts from the
/// rest state (all moments zero).
pub fn sweep_frequency(
    template: &MdeParams,
    omega_lo: f64,
    omega_hi: f64,
    n_steps: usize,
    direction: SweepDirection,
    settle_periods: usize,
    measure_periods: usize,
) -> Result<ResponseCurve> {
    template.validate()?;
    if !(omega_lo > 0.0 && omega_lo < omega_hi && omega_hi.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "omega range",
            value: omega_lo,
            reason: "need 0 < omega_lo < omega_hi",
        });
    }
    if n_steps < 2 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            value: n_steps as f64,
            reason: "a sweep needs at least two grid points",
        });
    }
    if measure_periods == 0 {
        return Err(Error::InvalidParameter {
            name: "measure_periods",
            value: 0.0,
            reason: "must measure at least one period",
        });
    }
    let grid: Vec<f64> = (0..n_steps)
        .map(|i| omega_lo + (omega_hi - omega_lo) * i as f64 / (n_steps - 1) as f64)
        .collect();
    let order: Vec<f64> = match direction {
        SweepDirection::Forward => grid,
        SweepDirection::Backward => grid.into_iter().rev().collect(),
    };
    let mut points = Vec::with_capacity(order.len());
    let mut state = MomentState::zero();
    for &omega in &order {
        let p = MdeParams { omega, ..*template };
        let point = settle_and_measure(&state, &p, settle_periods, measure_periods)?;
        state = point.exit_state;
        points.push(point);
    }
    Ok(ResponseCurve { direction, points })
}

/// The per-point work of a sweep, exposed so a recorded `entry_state` can be
/// replayed exactly.
pub fn settle_and_measure(
    entry: &MomentState,
    p: &MdeParams,
    settle_periods: usize,
    measure_periods: usize,
) -> Result<SweepPoint> {
    let tau = p.tau();
    let n_per = p.steps_per_period(DEFAULT_DT_HINT);
    let h = tau / n_per as f64;
    let settled = flow(entry, p, 0.0, settle_periods as f64 * tau, settle_periods * n_per)?;

    let mut q = settled;
    let n = measure_periods * n_per;
    let mut ts = Vec::with_capacity(n + 1);
    let mut qs = Vec::with_capacity(n + 1);
    ts.push(0.0);
    qs.push(q);
    for i in 0..n {
        let t = i as f64 * h;
        q = rk4_step(&q, t, h, p);
        if !q.within_guard() {
            return Err(Error::Divergence { t: t + h, member: None });
        }
        ts.push((i + 1) as f64 * h);
        qs.push(q);
    }
    let window = measure_periods as f64 * tau;
    let series = |f: &dyn Fn(&MomentState) -> f64| -> Vec<f64> { qs.iter().map(f).collect() };
    Ok(SweepPoint {
        omega: p.omega,
        ptp_m1: crate::syncstat::peak_to_peak(&ts, &series(&|s| s.m1), window)?,
        ptp_msq: crate::syncstat::peak_to_peak(&ts, &series(&|s| s.mean_square()), window)?,
        ptp_s22: crate::syncstat::peak_to_peak(&ts, &series(&|s| s.s22), window)?,
        entry_state: *entry,
        exit_state: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dead_zone_force, oscillator_drift, OscState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn rest_state_derivative_is_the_net_static_force() {
        let mut p = MdeParams::standard(0.9);
        p.rho = 0.0;
        let d = mde_rhs(&MomentState::zero(), 0.0, &p);
        assert_eq!(d.m1, 0.0);
        assert_abs_diff_eq!(d.m2, 0.5, epsilon = 1e-15);
        assert_eq!(d.s11, 0.0);
        assert_eq!(d.s12, 0.0);
        assert_eq!(d.s22, 0.0);
    }

    #[test]
    fn autonomous_equilibrium_is_stationary() {
        let mut p = MdeParams::standard(0.9);
        p.p_amp = 0.0;
        let q = MomentState::new(1.0, 0.0, 0.0, 0.0, 0.0);
        let d = mde_rhs(&q, 0.0, &p).to_vector();
        assert!(d.amax() < 1e-15, "residual {:?}", d);
    }

    #[test]
    fn integrator_is_fourth_order() {
        let p = MdeParams::standard(0.9);
        let q0 = MomentState::new(0.5, 2.5, 10.0, 2.0, 8.0);
        let tau = p.tau();
        let end = |steps: usize| flow(&q0, &p, 0.0, tau, steps).unwrap().to_vector();
        let d1 = (end(200) - end(400)).amax();
        let d2 = (end(400) - end(800)).amax();
        let ratio = d1 / d2;
        assert!((10.0..24.0).contains(&ratio), "defect ratio {ratio} not ~16");
    }

    #[test]
    fn mean_equations_reduce_to_the_deterministic_oscillator() {
        // rho = 0, zero σ-block, σ-forcing off: (m1, m2) must track the plain
        // oscillator ODE integrated with the same RK4 steps.
        let mut p = MdeParams::standard(0.9);
        p.rho = 0.0;
        p.sigma_forcing = false;
        let steps = p.steps_per_period(DEFAULT_DT_HINT) * 10;
        let span = 10.0 * p.tau();
        let q = flow(&MomentState::new(0.2, 0.0, 0.0, 0.0, 0.0), &p, 0.0, span, steps).unwrap();

        // Reference: RK4 on the 2-state oscillator with u = P cos ωt.
        let h = span / steps as f64;
        let rhs = |s: (f64, f64), t: f64| {
            let u = 0.2 * (0.9 * t).cos();
            let (d1, d2) = oscillator_drift(OscState::new(s.0, s.1), u, &p.osc);
            (d1, d2)
        };
        let mut s = (0.2, 0.0);
        for i in 0..steps {
            let t = i as f64 * h;
            let k1 = rhs(s, t);
            let k2 = rhs((s.0 + 0.5 * h * k1.0, s.1 + 0.5 * h * k1.1), t + 0.5 * h);
            let k3 = rhs((s.0 + 0.5 * h * k2.0, s.1 + 0.5 * h * k2.1), t + 0.5 * h);
            let k4 = rhs((s.0 + h * k3.0, s.1 + h * k3.1), t + h);
            s = (
                s.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                s.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            );
        }
        assert_abs_diff_eq!(q.m1, s.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.m2, s.1, epsilon = 1e-9);
        assert_eq!((q.s11, q.s12, q.s22), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sigma_block_is_linear_under_frozen_gains() {
        // With α₁ frozen and the σ-forcing off, the σ-block is exactly
        // homogeneous: scaling (s11, s12, s22) by a power of two scales the
        // σ-derivatives bitwise.
        let mut p = MdeParams::standard(0.9);
        p.sigma_forcing = false;
        let a0 = 0.21;
        let a1 = 0.37;
        let q = MomentState::new(0.8, -0.3, 2.0, 0.5, 1.5);
        let base = mde_rhs_inner(&q, 1.2, &p, a0, a1);
        for lambda in [0.5, 2.0, 8.0] {
            let scaled = MomentState::new(
                q.m1,
                q.m2,
                lambda * q.s11,
                lambda * q.s12,
                lambda * q.s22,
            );
            let d = mde_rhs_inner(&scaled, 1.2, &p, a0, a1);
            assert_eq!(d.s11, lambda * base.s11);
            assert_eq!(d.s12, lambda * base.s12);
            assert_eq!(d.s22, lambda * base.s22);
        }
    }

    #[test]
    fn slope_two_scales_the_restoring_terms() {
        let mut p = MdeParams::standard(0.9);
        p.osc.g_slope = 2.0;
        let q = MomentState::new(1.4, 0.3, 0.5, 0.1, 0.4);
        let d2 = mde_rhs(&q, 0.7, &p);
        p.osc.g_slope = 1.0;
        let d1 = mde_rhs(&q, 0.7, &p);
        // Only the k α terms differ, and they double.
        let (a0, a1) = alpha_pair(q.m1, q.s11, p.osc.mu);
        assert_abs_diff_eq!(d2.m2 - d1.m2, -a0, epsilon = 1e-14);
        assert_abs_diff_eq!(d2.s12 - d1.s12, -a1 * q.s11, epsilon = 1e-14);
        assert_abs_diff_eq!(d2.s22 - d1.s22, -2.0 * a1 * q.s12, epsilon = 1e-14);
        assert_eq!(dead_zone_force(1.4, 0.7, 2.0), 2.0 * dead_zone_force(1.4, 0.7, 1.0));
    }

    #[test]
    fn distinct_seeds_reach_distinct_attractors_at_omega_09() {
        // Long-run coexistence: from a = (0.5, 2.5, 10, 2, 8) the flow
        // settles on the large-amplitude attractor, from rest on the small
        // one near the origin, with very different mean squares.
        let p = MdeParams::standard(0.9);
        let tau = p.tau();
        let n_per = p.steps_per_period(DEFAULT_DT_HINT);
        let a = MomentState::new(0.5, 2.5, 10.0, 2.0, 8.0);
        let far = flow(&a, &p, 0.0, 300.0 * tau, 300 * n_per).unwrap();
        let near = flow(&MomentState::zero(), &p, 0.0, 300.0 * tau, 300 * n_per).unwrap();
        assert!(
            far.mean_square() > 5.0 * near.mean_square(),
            "far {} vs near {}",
            far.mean_square(),
            near.mean_square()
        );
    }

    #[test]
    fn moment_flow_visits_negative_variances_at_small_amplitude() {
        // The documented closure defect: the transient from rest at ω = 0.9
        // leaves the psd cone. This pins the permissive-integration decision.
        let p = MdeParams::standard(0.9);
        let traj = integrate_mde(&MomentState::zero(), &p, 60.0 * p.tau(), DEFAULT_DT_HINT).unwrap();
        let min_s11 = traj.q.iter().map(|q| q.s11).fold(f64::INFINITY, f64::min);
        let max_defect = traj.q.iter().map(|q| q.psd_defect()).fold(0.0, f64::max);
        assert!(min_s11 < -0.5, "min s11 {min_s11} unexpectedly nonnegative");
        assert!(max_defect > 0.0);
    }

    #[test]
    fn halving_dt_changes_the_end_state_at_fourth_order() {
        // Start in the large-amplitude regime where the gains stay on their
        // smooth branch (the deterministic-branch switch at tiny s11 would
        // degrade the observed order).
        let p = MdeParams::standard(0.9);
        let q0 = MomentState::new(2.26, 2.50, 11.79, 2.51, 5.75);
        let e1 = integrate_mde(&q0, &p, 20.0, 0.01).unwrap().end_state().to_vector();
        let e2 = integrate_mde(&q0, &p, 20.0, 0.005).unwrap().end_state().to_vector();
        let e3 = integrate_mde(&q0, &p, 20.0, 0.0025).unwrap().end_state().to_vector();
        let ratio = (e1 - e2).amax() / (e2 - e3).amax();
        assert!((10.0..24.0).contains(&ratio), "defect ratio {ratio} not ~16");
    }

    #[test]
    fn phase_factor_modes_agree_at_tiny_rho() {
        // The modes differ by a factor e^{ρ²(1+t)/2}: about 2e-9 at t = 10,
        // still below ρ²t/2 ≈ 6e-7 after 3000 time units.
        let p_const = MdeParams::standard(0.9);
        let p_decay = MdeParams { phase_mode: PhaseFactorMode::Decaying, ..p_const };
        for &t in &[0.0, 1.0, 10.0] {
            assert_abs_diff_eq!(p_const.phase_factor(t), p_decay.phase_factor(t), epsilon = 1e-8);
        }
        assert_abs_diff_eq!(
            p_const.phase_factor(3000.0),
            p_decay.phase_factor(3000.0),
            epsilon = 1e-6
        );
    }

    #[test]
    fn linear_system_shows_no_hysteresis() {
        // μ = 0 removes the dead zone: the response is unique, so forward and
        // backward sweeps coincide.
        let mut template = MdeParams::standard(1.0);
        template.osc.mu = 0.0;
        template.osc.c = 0.1;
        let fwd = sweep_frequency(&template, 0.7, 1.0, 16, SweepDirection::Forward, 100, 20)
            .unwrap();
        let bwd = sweep_frequency(&template, 0.7, 1.0, 16, SweepDirection::Backward, 100, 20)
            .unwrap();
        for (f, b) in fwd.by_omega().iter().zip(bwd.by_omega()) {
            assert_eq!(f.omega, b.omega);
            assert_relative_eq!(f.ptp_msq, b.ptp_msq, max_relative = 1e-7, epsilon = 1e-10);
            assert_relative_eq!(f.ptp_m1, b.ptp_m1, max_relative = 1e-7, epsilon = 1e-10);
        }
    }

    #[test]
    fn nonlinear_sweeps_disagree_inside_the_resonance_window() {
        let template = MdeParams::standard(1.0);
        let fwd = sweep_frequency(&template, 0.76, 0.94, 13, SweepDirection::Forward, 60, 20)
            .unwrap();
        let bwd = sweep_frequency(&template, 0.76, 0.94, 13, SweepDirection::Backward, 60, 20)
            .unwrap();
        let mut max_rel_gap = 0.0f64;
        for (f, b) in fwd.by_omega().iter().zip(bwd.by_omega()) {
            let denom = f.ptp_msq.max(b.ptp_msq).max(1e-12);
            max_rel_gap = max_rel_gap.max((f.ptp_msq - b.ptp_msq).abs() / denom);
        }
        assert!(max_rel_gap > 0.1, "no hysteresis found, max gap {max_rel_gap}");
    }

    #[test]
    fn sweep_points_replay_exactly_from_their_entry_state() {
        let template = MdeParams::standard(1.0);
        let fwd = sweep_frequency(&template, 0.8, 0.9, 6, SweepDirection::Forward, 30, 10)
            .unwrap();
        let mid = &fwd.points[3];
        let p = MdeParams { omega: mid.omega, ..template };
        let replay = settle_and_measure(&mid.entry_state, &p, 30, 10).unwrap();
        assert_eq!(replay.ptp_m1, mid.ptp_m1);
        assert_eq!(replay.ptp_msq, mid.ptp_msq);
        assert_eq!(replay.ptp_s22, mid.ptp_s22);
        assert_eq!(replay.exit_state, mid.exit_state);
    }

    #[test]
    fn divergence_reports_the_time() {
        // The restoring force is global, so finite states never escape; a
        // state already outside the guard trips it on the first step.
        let p = MdeParams::standard(0.9);
        let q0 = MomentState::new(2e9, 0.0, 0.0, 0.0, 0.0);
        match integrate_mde(&q0, &p, 10.0, 0.005) {
            Err(Error::Divergence { t, .. }) => assert!(t > 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
