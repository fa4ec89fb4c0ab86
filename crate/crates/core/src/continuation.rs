//! Saddle-node detection and two-parameter continuation of the fold set.
//!
//! A fold of the period-m fixed points of the stroboscopic map satisfies
//! T^m(q̄) = q̄ together with P(1) = det(I − D(T^m)) = 0. On the stable
//! branch P(1) = Π(1 − sᵢ) stays positive and tends to zero from above as
//! the branch terminates, so there is no sign change to bracket along the
//! branch itself. Detection therefore brackets the fold by branch
//! existence: the frequency scan follows the branch with warm-started
//! Newton until the solver fails (or jumps to the coexisting low-amplitude
//! state), bisects on that predicate, and hands the last good point to the
//! six-dimensional fold corrector, which drives both residuals below 10⁻⁸.

use crate::error::{Error, Result};
use crate::mde::{flow, MdeParams, MomentState, DEFAULT_DT_HINT};
use crate::orbit::{find_fixed_point, p_at_one, poincare_power_with_jacobian};
use nalgebra::{Matrix6, Vector6};

/// Residual bound on both the fixed-point defect and |P(1)| at a fold.
pub const FOLD_TOL: f64 = 1e-8;
/// Smallest continuation step in c before the trace gives up on a side.
pub const STEP_FLOOR: f64 = 1e-5;
/// Coarse frequency-scan resolution used by detection.
const SCAN_STEPS: usize = 25;
/// Bisection stops once the existence bracket is this tight; the corrector
/// takes over from there.
const BRACKET_TOL: f64 = 1e-4;
/// A converged fixed point whose mean square falls below this fraction of
/// the tracked branch's is the coexisting low-amplitude state, not the
/// branch.
const BRANCH_MSQ_RATIO: f64 = 0.5;

/// One point on the saddle-node set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BifurcationPoint {
    pub omega_star: f64,
    pub c: f64,
    /// The fixed point at the fold.
    pub q_bar: MomentState,
    /// Max-norm of T^m(q̄) − q̄.
    pub residual_fp: f64,
    /// |P(1)| at q̄.
    pub residual_p1: f64,
    /// Newton steps the corrector spent (0 when seeded at the root).
    pub newton_iterations: usize,
}

/// Where a trace stopped short of its range end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    /// Last damping value with a converged fold.
    pub last_c: f64,
    /// The range end that was not reached.
    pub target_c: f64,
}

/// The fold set over a damping range, ascending in c.
#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationCurve {
    pub points: Vec<BifurcationPoint>,
    /// The nominal Δc (adaptive halving may refine locally).
    pub step_c: f64,
    pub truncation_low: Option<Truncation>,
    pub truncation_high: Option<Truncation>,
}

/// How detection obtains its first point on the branch at `omega_lo`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeedStrategy {
    /// Integrate the moment flow from the canonical large-amplitude state
    /// for this many periods, then Newton-polish the endpoint.
    Settle { periods: usize },
    /// Newton directly from the given state.
    FromState(MomentState),
}

impl Default for SeedStrategy {
    fn default() -> Self {
        SeedStrategy::Settle { periods: 200 }
    }
}

/// Canonical seed deep in the large-amplitude basin.
pub fn large_amplitude_seed() -> MomentState {
    MomentState::new(0.5, 2.5, 10.0, 2.0, 8.0)
}

fn with_omega(template: &MdeParams, omega: f64) -> MdeParams {
    let mut p = *template;
    p.omega = omega;
    p
}

/// A branch point accepted by the scan.
#[derive(Clone, Copy)]
struct BranchPoint {
    omega: f64,
    q: MomentState,
    p1: f64,
}

/// Warm-started Newton at one frequency; `Ok(None)` means the solver
/// converged but left the branch (low-amplitude capture).
fn branch_step(
    template: &MdeParams,
    omega: f64,
    seed: &MomentState,
    m: usize,
    reference_msq: Option<f64>,
) -> Result<Option<BranchPoint>> {
    let p = with_omega(template, omega);
    let fp = match find_fixed_point(seed, m, &p) {
        Ok(fp) => fp,
        Err(Error::NewtonStalled { .. }) | Err(Error::SingularJacobian { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if let Some(msq) = reference_msq {
        if fp.q_bar.mean_square() < BRANCH_MSQ_RATIO * msq {
            return Ok(None);
        }
    }
    Ok(Some(BranchPoint { omega, q: fp.q_bar, p1: p_at_one(&fp.monodromy) }))
}

/// Locates the fold of the period-m branch inside [omega_lo, omega_hi] for
/// the damping carried by `template` (its own ω field is ignored). The scan
/// walks the branch upward in ω with warm starts, brackets where the branch
/// ceases to exist (or P(1) crosses zero), bisects the bracket, and
/// polishes with [`fold_corrector`]. A branch that persists across the
/// whole range with P(1) > 0 has no fold there.
pub fn detect_saddle_node(
    template: &MdeParams,
    omega_lo: f64,
    omega_hi: f64,
    m: usize,
    seed: SeedStrategy,
) -> Result<BifurcationPoint> {
    with_omega(template, omega_lo).validate()?;
    if !(omega_hi > omega_lo) {
        return Err(Error::InvalidParameter {
            name: "omega_hi",
            value: omega_hi,
            reason: "frequency range must be ascending",
        });
    }
    let p_lo = with_omega(template, omega_lo);
    let seed_state = match seed {
        SeedStrategy::Settle { periods } => {
            let steps = periods * p_lo.steps_per_period(DEFAULT_DT_HINT);
            flow(&large_amplitude_seed(), &p_lo, 0.0, periods as f64 * p_lo.tau(), steps)?
        }
        SeedStrategy::FromState(q) => q,
    };
    let mut last_good = match branch_step(template, omega_lo, &seed_state, m, None)? {
        Some(bp) => bp,
        None => {
            return Err(Error::NoFold(format!(
                "no period-{m} branch found at omega = {omega_lo}"
            )))
        }
    };
    if last_good.p1 <= 0.0 {
        return Err(Error::NoFold(format!(
            "P(1) = {} already non-positive at omega = {omega_lo}; the range starts past the fold",
            last_good.p1
        )));
    }

    // Coarse ascent until the branch disappears or P(1) crosses zero.
    let coarse = (omega_hi - omega_lo) / SCAN_STEPS as f64;
    let mut bracket_hi = None;
    for i in 1..=SCAN_STEPS {
        let omega = omega_lo + i as f64 * coarse;
        match branch_step(template, omega, &last_good.q, m, Some(last_good.q.mean_square()))? {
            Some(bp) if bp.p1 > 0.0 => last_good = bp,
            _ => {
                bracket_hi = Some(omega);
                break;
            }
        }
    }
    let mut hi = match bracket_hi {
        Some(h) => h,
        None => {
            return Err(Error::NoFold(format!(
                "branch persists with P(1) > 0 on [{omega_lo}, {omega_hi}]; no fold in range"
            )))
        }
    };

    // Bisection on branch existence tightens the bracket enough for the
    // corrector's Newton basin. The corrector is the arbiter: the existence
    // guard can misfire on steep-but-smooth branch segments (the
    // stroboscopic sample may sweep through small amplitude), and only a
    // verified P(1) = 0 root counts as a fold. One retry from a much
    // tighter bracket guards against a marginal handoff.
    for tol in [BRACKET_TOL, BRACKET_TOL / 100.0] {
        while hi - last_good.omega > tol {
            let mid = 0.5 * (hi + last_good.omega);
            match branch_step(template, mid, &last_good.q, m, Some(last_good.q.mean_square()))? {
                Some(bp) if bp.p1 > 0.0 => last_good = bp,
                _ => hi = mid,
            }
        }
        match fold_corrector(template, (&last_good.q, last_good.omega), m) {
            Ok(pt) => return Ok(pt),
            Err(Error::NewtonStalled { .. }) | Err(Error::SingularJacobian { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoFold(format!(
        "branch tracking bracketed [{}, {hi}] but no vanishing P(1) was verified there",
        last_good.omega
    )))
}

/// Newton on the six-dimensional fold system {T^m(q̄) − q̄ = 0, P(1) = 0}
/// in the unknowns (q̄, ω) at fixed damping. The fixed-point rows
/// differentiate through the co-integrated monodromy; every P(1) derivative
/// and the ∂T/∂ω column use central differences (ω moves both the
/// coefficients and the period, so the map itself is re-evaluated).
pub fn fold_corrector(
    template: &MdeParams,
    guess: (&MomentState, f64),
    m: usize,
) -> Result<BifurcationPoint> {
    const MAX_ITER: usize = 20;
    let mut q = guess.0.to_vector();
    let mut omega = guess.1;
    let mut best = (q, omega, f64::INFINITY);
    for iter in 0..MAX_ITER {
        let p = with_omega(template, omega);
        p.validate()?;
        let eval = poincare_power_with_jacobian(&MomentState::from_vector(&q), m, &p)?;
        let r_fp = eval.q_out.to_vector() - q;
        let r_p1 = p_at_one(&eval.monodromy);
        let res = r_fp.amax().max(r_p1.abs());
        if res < best.2 {
            best = (q, omega, res);
        }
        if res <= FOLD_TOL {
            return Ok(BifurcationPoint {
                omega_star: omega,
                c: template.osc.c,
                q_bar: MomentState::from_vector(&q),
                residual_fp: r_fp.amax(),
                residual_p1: r_p1.abs(),
                newton_iterations: iter,
            });
        }

        let mut jac = Matrix6::zeros();
        for i in 0..5 {
            for j in 0..5 {
                jac[(i, j)] = eval.monodromy[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
        }
        // ∂P(1)/∂q by central differences, one monodromy per perturbation.
        for j in 0..5 {
            let h = 1e-6 * (1.0 + q[j].abs());
            let mut up = q;
            let mut dn = q;
            up[j] += h;
            dn[j] -= h;
            let pu = p_at_one(
                &poincare_power_with_jacobian(&MomentState::from_vector(&up), m, &p)?.monodromy,
            );
            let pd = p_at_one(
                &poincare_power_with_jacobian(&MomentState::from_vector(&dn), m, &p)?.monodromy,
            );
            jac[(5, j)] = (pu - pd) / (2.0 * h);
        }
        // The ω column: both the map and P(1) respond to the frequency.
        let h_om = 1e-6 * (1.0 + omega.abs());
        let eu = poincare_power_with_jacobian(
            &MomentState::from_vector(&q),
            m,
            &with_omega(template, omega + h_om),
        )?;
        let ed = poincare_power_with_jacobian(
            &MomentState::from_vector(&q),
            m,
            &with_omega(template, omega - h_om),
        )?;
        let dt_dom = (eu.q_out.to_vector() - ed.q_out.to_vector()) / (2.0 * h_om);
        for i in 0..5 {
            jac[(i, 5)] = dt_dom[i];
        }
        jac[(5, 5)] = (p_at_one(&eu.monodromy) - p_at_one(&ed.monodromy)) / (2.0 * h_om);

        let mut rhs = Vector6::zeros();
        for i in 0..5 {
            rhs[i] = -r_fp[i];
        }
        rhs[5] = -r_p1;
        let delta = match jac.lu().solve(&rhs) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => return Err(Error::SingularJacobian { residual: res }),
        };

        // Full Newton steps: approaching a fold, the first step slides
        // along the near-null direction and the residual legitimately grows
        // before collapsing quadratically, so a monotone line search would
        // stall here. Shorten the step only when the candidate cannot be
        // evaluated at all (flow divergence or an invalid frequency).
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..10 {
            let q_c = q + lambda * delta.fixed_rows::<5>(0).into_owned();
            let om_c = omega + lambda * delta[5];
            let p_c = with_omega(template, om_c);
            if p_c.validate().is_ok()
                && poincare_power_with_jacobian(&MomentState::from_vector(&q_c), m, &p_c).is_ok()
            {
                q = q_c;
                omega = om_c;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStalled {
                best: [best.0[0], best.0[1], best.0[2], best.0[3], best.0[4]],
                residual: best.2,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::NewtonStalled {
        best: [best.0[0], best.0[1], best.0[2], best.0[3], best.0[4]],
        residual: best.2,
        iterations: MAX_ITER,
    })
}

/// Walks the fold set from `seed` toward both range ends in steps of
/// `delta_c`, warm-starting the corrector from the previous point (with a
/// secant predictor once two points are available). A failing step halves
/// until [`STEP_FLOOR`]; giving up truncates that side and is reported on
/// the returned curve. Output is ascending in c.
pub fn trace_bifurcation_set(
    template: &MdeParams,
    seed: &BifurcationPoint,
    c_lo: f64,
    c_hi: f64,
    delta_c: f64,
) -> Result<BifurcationCurve> {
    if !(delta_c > 0.0) || !delta_c.is_finite() {
        return Err(Error::InvalidParameter {
            name: "delta_c",
            value: delta_c,
            reason: "continuation step must be positive",
        });
    }
    if !(c_lo <= seed.c && seed.c <= c_hi) {
        return Err(Error::InvalidParameter {
            name: "c",
            value: seed.c,
            reason: "seed damping must lie inside [c_lo, c_hi]",
        });
    }
    let walk = |downward: bool| -> (Vec<BifurcationPoint>, Option<Truncation>) {
        let target = if downward { c_lo } else { c_hi };
        let mut collected: Vec<BifurcationPoint> = Vec::new();
        let mut prev = *seed;
        let mut prev2: Option<BifurcationPoint> = None;
        let mut step = delta_c;
        loop {
            let remaining = if downward { prev.c - target } else { target - prev.c };
            if remaining <= 1e-12 {
                return (collected, None);
            }
            let h = step.min(remaining);
            let c_next = if downward { prev.c - h } else { prev.c + h };
            // Secant prediction in c once two accepted points exist.
            let (q_guess, om_guess) = match prev2 {
                Some(p2) if (prev.c - p2.c).abs() > 1e-12 => {
                    let r = (c_next - prev.c) / (prev.c - p2.c);
                    let q = prev.q_bar.to_vector()
                        + r * (prev.q_bar.to_vector() - p2.q_bar.to_vector());
                    (MomentState::from_vector(&q), prev.omega_star + r * (prev.omega_star - p2.omega_star))
                }
                _ => (prev.q_bar, prev.omega_star),
            };
            let mut tpl = *template;
            tpl.osc.c = c_next;
            match fold_corrector(&tpl, (&q_guess, om_guess), seed_m()) {
                Ok(pt) => {
                    collected.push(pt);
                    prev2 = Some(prev);
                    prev = pt;
                    step = (step * 2.0).min(delta_c);
                }
                Err(_) => {
                    step *= 0.5;
                    if step < STEP_FLOOR {
                        return (collected, Some(Truncation { last_c: prev.c, target_c: target }));
                    }
                }
            }
        }
    };
    let (down_points, truncation_low) = walk(true);
    let (up_points, truncation_high) = walk(false);
    let mut points: Vec<BifurcationPoint> = down_points.into_iter().rev().collect();
    points.push(*seed);
    points.extend(up_points);
    Ok(BifurcationCurve { points, step_c: delta_c, truncation_low, truncation_high })
}

/// The continued orbits are period-1: the fold terminates the primary
/// resonance branch.
const fn seed_m() -> usize {
    1
}
