//! Cross-engine check: the saddle-node frequency found by continuation on
//! the reduced model separates two regimes the raw simulator can tell
//! apart by stroboscopic densities.
//!
//! Two copies start in different basins and run under one shared forcing
//! realization. Sampling each copy once per forcing period (after a long
//! transient) gives two stroboscopic clouds. At c = 0.04 the continuation
//! places the fold near omega 0.923. Just below it (0.911) the copies lock
//! onto distinct coexisting attractors and stay about 4.8 apart for the
//! whole run, so the clouds share no bins and the total-variation distance
//! is 1. Just above it (0.948) the copies merge to well under a bin width
//! before sampling starts and the clouds coincide.
//!
//! The split needs both basins to be hit: copies released close together
//! fall into the same basin and merge even below the fold, which is why
//! the mean convergence time protocol spreads its ensemble over a grid.

use noisesync::model::{Forcing, OscState, OscillatorParams};
use noisesync::stochastic::{simulate_ensemble_common_noise, SimConfig};
use noisesync::syncstat::{density_histogram, Histogram2D};

const PERIODS: usize = 100;
const SAMPLES: usize = 20;

/// Stroboscopic samples (one per period) of the last `SAMPLES` periods of
/// each member, binned on the shared grid.
fn stroboscopic_clouds(omega: f64) -> (Histogram2D, Histogram2D) {
    let steps_per_period = 1400;
    let tau = 2.0 * std::f64::consts::PI / omega;
    let sim = SimConfig {
        dt: tau / steps_per_period as f64,
        t_end: PERIODS as f64 * tau,
        seed: 11,
        record_stride: steps_per_period,
    };
    let forcing = Forcing::RandomPhase { p: 0.2, omega, rho: 2e-5 };
    let params = OscillatorParams::default();
    let ics = [OscState::new(0.0, 0.0), OscState::new(5.0, 0.0)];
    let ens = simulate_ensemble_common_noise(&ics, &forcing, &params, &sim).expect("pair run");

    let (x1_edges, x2_edges) = Histogram2D::default_edges();
    let cloud = |tr: &noisesync::stochastic::Trajectory| {
        let states: Vec<OscState> = tr
            .x1
            .iter()
            .zip(&tr.x2)
            .map(|(&a, &b)| OscState::new(a, b))
            .collect();
        let tail = &states[states.len() - SAMPLES..];
        density_histogram(tail, &x1_edges, &x2_edges).expect("histogram")
    };
    (cloud(&ens[0]), cloud(&ens[1]))
}

#[test]
fn stroboscopic_densities_separate_across_the_critical_frequency() {
    let (slow_a, slow_b) = stroboscopic_clouds(0.911);
    let tv_slow = slow_a.tv_distance(&slow_b).unwrap();

    let (fast_a, fast_b) = stroboscopic_clouds(0.948);
    let tv_fast = fast_a.tv_distance(&fast_b).unwrap();

    println!("TV below the fold (0.911): {tv_slow}");
    println!("TV above the fold (0.948): {tv_fast}");
    assert!(
        tv_slow > 0.9,
        "below the fold the copies should stay distinguishable: {tv_slow}"
    );
    assert!(
        tv_fast < 0.15,
        "above the fold the copies should merge: {tv_fast}"
    );
}
