//! Fixed-step Euler–Maruyama integration of the randomly forced oscillator.
//!
//! One diffusion channel drives each forcing variant: the Brownian phase for
//! `RandomPhase`, the additive velocity noise for `HarmonicWhite`, and the
//! filter input for `Filtered`. Ensembles under common noise share a single
//! realization of that channel, which is what makes exact synchronization of
//! identical members possible (bitwise, not just numerically close).

use crate::error::{Error, Result};
use crate::model::{forcing_value, oscillator_drift, Forcing, ForcingState, OscState, OscillatorParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use rayon::prelude::*;

/// State magnitude treated as numerical divergence: |x1|+|x2| beyond this
/// aborts with a diagnostic rather than feeding infinities downstream.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Integration settings for the stochastic engine.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Fixed Euler–Maruyama step.
    pub dt: f64,
    /// Integration horizon; the number of steps is round(t_end/dt).
    pub t_end: f64,
    /// RNG seed; together with the parameters it fully determines the run.
    pub seed: u64,
    /// Record every this-many steps (the final state is always recorded).
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.005, t_end: 1000.0, seed: 1, record_stride: 10 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                reason: "step must be positive and finite",
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                value: self.t_end,
                reason: "horizon must be nonnegative and finite",
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                value: 0.0,
                reason: "stride must be at least 1",
            });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// A recorded sample path: time grid, oscillator states, and the forcing
/// value seen at each recorded instant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state_at(&self, i: usize) -> OscState {
        OscState::new(self.x1[i], self.x2[i])
    }

    pub fn end_state(&self) -> OscState {
        self.state_at(self.len() - 1)
    }

    fn push(&mut self, t: f64, s: OscState, u: f64) {
        self.t.push(t);
        self.x1.push(s.x1);
        self.x2.push(s.x2);
        self.u.push(u);
    }
}

/// Derives the RNG seed of replication `k` from the run seed. Distinct k
/// give independent streams; the same (seed, k) always gives the same
/// stream.
pub fn replication_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer: a cheap, well-distributed 64-bit hash.
    let mut z = k.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    seed ^ (z ^ (z >> 31))
}

/// Advances the oscillator state by one explicit Euler step against the
/// forcing value `u` active over the step; for `HarmonicWhite` the shared
/// noise increment additionally kicks the velocity by s·dW.
pub fn member_step(
    s: &mut OscState,
    u: f64,
    dw: f64,
    dt: f64,
    spec: &Forcing,
    p: &OscillatorParams,
) {
    let (d1, d2) = oscillator_drift(*s, u, p);
    s.x1 += dt * d1;
    s.x2 += dt * d2;
    if let Forcing::HarmonicWhite { s: noise_amp, .. } = *spec {
        s.x2 += noise_amp * dw;
    }
}

/// Advances the forcing process over one step ending at `t_next`.
///
/// For `RandomPhase` the Brownian path accumulates (b += dW) and the phase is
/// reconstituted from the advanced clock, theta = ω·t_next + ρ·b, rather than
/// incremented; the two forms differ only by accumulated roundoff and the
/// reconstruction keeps theta − ωt ≡ ρ·b exact for any number of steps.
/// For `Filtered` the second-order filter advances by Euler–Maruyama with
/// s·dW entering the derivative equation.
pub fn advance_forcing(fs: &mut ForcingState, t_next: f64, dt: f64, dw: f64, spec: &Forcing) {
    match *spec {
        Forcing::RandomPhase { omega, rho, .. } => {
            fs.b += dw;
            fs.theta = omega * t_next + rho * fs.b;
        }
        Forcing::HarmonicWhite { .. } => {}
        Forcing::Filtered { s, zeta, omega_n } => {
            let u = fs.u;
            let du = fs.du;
            fs.u = u + dt * du;
            fs.du = du + dt * (-2.0 * zeta * omega_n * du - omega_n * omega_n * u) + s * dw;
        }
    }
}

/// One full Euler–Maruyama step over [t, t_next]: evaluates the forcing,
/// advances the oscillator, advances the forcing process, and checks the
/// divergence guard. Returns the forcing value that acted over the step.
pub fn em_step(
    s: &mut OscState,
    fs: &mut ForcingState,
    t: f64,
    t_next: f64,
    dw: f64,
    spec: &Forcing,
    p: &OscillatorParams,
) -> Result<f64> {
    let u = forcing_value(spec, fs, t);
    member_step(s, u, dw, t_next - t, spec, p);
    advance_forcing(fs, t_next, t_next - t, dw, spec);
    check_state(s, t_next, None)?;
    Ok(u)
}

fn check_state(s: &OscState, t: f64, member: Option<usize>) -> Result<()> {
    if !(s.x1.is_finite() && s.x2.is_finite()) || s.x1.abs() + s.x2.abs() > DIVERGENCE_GUARD {
        return Err(Error::Divergence { t, member });
    }
    Ok(())
}

/// Integrates a single sample path. Deterministic in (ic, spec, params,
/// cfg.seed): the same inputs give a bit-identical trajectory.
pub fn simulate_path(
    ic: OscState,
    spec: &Forcing,
    p: &OscillatorParams,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    p.validate()?;
    spec.validate()?;
    let n = cfg.n_steps();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.dt.sqrt()).expect("dt validated positive");
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(normal)).collect();
    integrate_against_noise(ic, spec, p, cfg, &noise, None)
}

fn integrate_against_noise(
    ic: OscState,
    spec: &Forcing,
    p: &OscillatorParams,
    cfg: &SimConfig,
    noise: &[f64],
    member: Option<usize>,
) -> Result<Trajectory> {
    let n = noise.len();
    let dt = cfg.dt;
    let mut s = ic;
    let mut fs = ForcingState::default();
    let mut out = Trajectory::default();
    check_state(&s, 0.0, member)?;
    for (i, &dw) in noise.iter().enumerate() {
        let t = i as f64 * dt;
        if i % cfg.record_stride == 0 {
            out.push(t, s, forcing_value(spec, &fs, t));
        }
        let t_next = (i + 1) as f64 * dt;
        let u = forcing_value(spec, &fs, t);
        member_step(&mut s, u, dw, dt, spec, p);
        advance_forcing(&mut fs, t_next, dt, dw, spec);
        check_state(&s, t_next, member)?;
    }
    let t_end = n as f64 * dt;
    out.push(t_end, s, forcing_value(spec, &fs, t_end));
    Ok(out)
}

/// Integrates every initial condition against the SAME noise realization
/// (one shared sequence of dW), the common-noise ensemble of the
/// synchronization experiments. Members run in parallel once the shared
/// noise is materialized.
pub fn simulate_ensemble_common_noise(
    ics: &[OscState],
    spec: &Forcing,
    p: &OscillatorParams,
    cfg: &SimConfig,
) -> Result<Vec<Trajectory>> {
    if ics.is_empty() {
        return Err(Error::EmptyInput("common-noise ensemble needs at least one member"));
    }
    cfg.validate()?;
    p.validate()?;
    spec.validate()?;
    let n = cfg.n_steps();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.dt.sqrt()).expect("dt validated positive");
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(normal)).collect();
    ics.par_iter()
        .enumerate()
        .map(|(i, &ic)| {
            integrate_against_noise(ic, spec, p, cfg, &noise, Some(i)).map_err(|e| match e {
                Error::Divergence { t, .. } => Error::Divergence { t, member: Some(i) },
                other => other,
            })
        })
        .collect()
}
