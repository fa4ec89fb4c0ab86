//! Sectioned key = value run configuration.
//!
//! The on-disk format is TOML: `[section]` headers with `key = value`
//! lines, diff-friendly and language-agnostic. Every key is checked:
//! unknown keys and sections are rejected by name. All defaults equal the
//! reference parameter set used across the crate, so an empty file (or no
//! file) reproduces the standard setup.
//!
//! [`RunConfig::resolved`] normalizes a parsed config (fills the forcing
//! keys the selected type needs, rejects the ones it cannot use) so that
//! the serialized form embedded in output headers replays bitwise.

use crate::error::{Error, Result};
use crate::mde::MdeParams;
use crate::model::{Forcing, OscillatorParams};
use crate::stochastic::SimConfig;
use crate::syncstat::{GridBounds, MctConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub c: f64,
    pub k: f64,
    pub mu: f64,
    #[serde(rename = "Q")]
    pub q_load: f64,
    pub g_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let osc = OscillatorParams::default();
        Self { c: osc.c, k: osc.k, mu: osc.mu, q_load: osc.q_load, g_slope: osc.g_slope }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSection {
    /// One of `random_phase`, `harmonic_white`, `filtered`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_n: Option<f64>,
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self {
            kind: "random_phase".to_string(),
            p: None,
            omega: None,
            rho: None,
            s: None,
            zeta: None,
            omega_n: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub record_stride: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self { dt: sim.dt, t_end: sim.t_end, seed: sim.seed, record_stride: sim.record_stride }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MctSection {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    /// Grid is grid_m × grid_m initial conditions.
    pub grid_m: usize,
    /// Noise replications per grid.
    #[serde(rename = "K")]
    pub k_reps: usize,
    pub epsilon: f64,
    pub t_max: f64,
}

impl Default for MctSection {
    fn default() -> Self {
        let mct = MctConfig::default();
        Self {
            x1_min: mct.grid_bounds.x1_min,
            x1_max: mct.grid_bounds.x1_max,
            x2_min: mct.grid_bounds.x2_min,
            x2_max: mct.grid_bounds.x2_max,
            grid_m: mct.grid_m,
            k_reps: mct.k_reps,
            epsilon: mct.epsilon,
            t_max: mct.t_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub n_steps: usize,
    pub settle_periods: usize,
    pub measure_periods: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { omega_lo: 0.7, omega_hi: 1.0, n_steps: 120, settle_periods: 200, measure_periods: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub c_lo: f64,
    pub c_hi: f64,
    pub delta_c: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        Self { c_lo: 0.03, c_hi: 0.06, delta_c: 1e-3 }
    }
}

/// The full run configuration; every section falls back to its defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub forcing: ForcingSection,
    pub sim: SimSection,
    pub mct: MctSection,
    pub sweep: SweepSection,
    pub continuation: ContinuationSection,
}

fn require(value: Option<f64>, key: &'static str, kind: &str) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("forcing.{key} is required for type = \"{kind}\"")))
}

fn forbid(value: Option<f64>, name: &'static str, variant: &'static str) -> Result<()> {
    if value.is_some() {
        return Err(Error::VariantMismatch { name, variant });
    }
    Ok(())
}

impl RunConfig {
    /// Parses TOML text; unknown keys or sections fail with the offending
    /// name in the message.
    pub fn parse_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Serializes the config back to its file format.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn oscillator(&self) -> OscillatorParams {
        OscillatorParams {
            c: self.model.c,
            k: self.model.k,
            mu: self.model.mu,
            q_load: self.model.q_load,
            g_slope: self.model.g_slope,
        }
    }

    /// Builds the forcing variant selected by `forcing.type`, filling the
    /// reference defaults for missing random-phase keys and rejecting keys
    /// the variant cannot use.
    pub fn forcing(&self) -> Result<Forcing> {
        let f = &self.forcing;
        match f.kind.as_str() {
            "random_phase" => {
                forbid(f.s, "s", "random_phase")?;
                forbid(f.zeta, "zeta", "random_phase")?;
                forbid(f.omega_n, "omega_n", "random_phase")?;
                Ok(Forcing::RandomPhase {
                    p: f.p.unwrap_or(0.2),
                    omega: f.omega.unwrap_or(0.9),
                    rho: f.rho.unwrap_or(2e-5),
                })
            }
            "harmonic_white" => {
                forbid(f.rho, "rho", "harmonic_white")?;
                forbid(f.zeta, "zeta", "harmonic_white")?;
                forbid(f.omega_n, "omega_n", "harmonic_white")?;
                Ok(Forcing::HarmonicWhite {
                    p: f.p.unwrap_or(0.2),
                    omega: f.omega.unwrap_or(0.9),
                    s: require(f.s, "s", "harmonic_white")?,
                })
            }
            "filtered" => {
                forbid(f.p, "P", "filtered")?;
                forbid(f.omega, "omega", "filtered")?;
                forbid(f.rho, "rho", "filtered")?;
                Ok(Forcing::Filtered {
                    s: require(f.s, "s", "filtered")?,
                    zeta: require(f.zeta, "zeta", "filtered")?,
                    omega_n: require(f.omega_n, "omega_n", "filtered")?,
                })
            }
            other => Err(Error::Config(format!(
                "unknown forcing.type \"{other}\" (expected random_phase, harmonic_white, or filtered)"
            ))),
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            seed: self.sim.seed,
            record_stride: self.sim.record_stride,
        }
    }

    /// The convergence-time setup; the integrator step is shared with the
    /// sim section.
    pub fn mct(&self) -> MctConfig {
        MctConfig {
            grid_bounds: GridBounds {
                x1_min: self.mct.x1_min,
                x1_max: self.mct.x1_max,
                x2_min: self.mct.x2_min,
                x2_max: self.mct.x2_max,
            },
            grid_m: self.mct.grid_m,
            k_reps: self.mct.k_reps,
            epsilon: self.mct.epsilon,
            t_max: self.mct.t_max,
            dt: self.sim.dt,
        }
    }

    /// Moment-equation parameters; defined for random-phase forcing only.
    pub fn mde(&self) -> Result<MdeParams> {
        match self.forcing()? {
            Forcing::RandomPhase { p, omega, rho } => {
                let mut params = MdeParams::standard(omega);
                params.osc = self.oscillator();
                params.p_amp = p;
                params.rho = rho;
                Ok(params)
            }
            _ => Err(Error::Config(
                "the moment equations require forcing.type = \"random_phase\"".to_string(),
            )),
        }
    }

    /// Normalized copy: forcing keys the selected type uses are written out
    /// explicitly, so the serialized form is self-contained and replays
    /// bitwise.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut out = self.clone();
        out.forcing = match self.forcing()? {
            Forcing::RandomPhase { p, omega, rho } => ForcingSection {
                kind: "random_phase".to_string(),
                p: Some(p),
                omega: Some(omega),
                rho: Some(rho),
                ..ForcingSection::default()
            },
            Forcing::HarmonicWhite { p, omega, s } => ForcingSection {
                kind: "harmonic_white".to_string(),
                p: Some(p),
                omega: Some(omega),
                s: Some(s),
                ..ForcingSection::default()
            },
            Forcing::Filtered { s, zeta, omega_n } => ForcingSection {
                kind: "filtered".to_string(),
                s: Some(s),
                zeta: Some(zeta),
                omega_n: Some(omega_n),
                ..ForcingSection::default()
            },
        };
        Ok(out)
    }

    /// Eagerly validates every section through the typed objects it builds.
    pub fn validate(&self) -> Result<()> {
        self.oscillator().validate()?;
        self.forcing()?.validate()?;
        self.sim().validate()?;
        self.mct().validate()?;
        let sw = &self.sweep;
        if !(sw.omega_lo > 0.0 && sw.omega_lo.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sweep.omega_lo",
                value: sw.omega_lo,
                reason: "must be positive and finite",
            });
        }
        if !(sw.omega_hi > sw.omega_lo) {
            return Err(Error::InvalidParameter {
                name: "sweep.omega_hi",
                value: sw.omega_hi,
                reason: "must exceed sweep.omega_lo",
            });
        }
        if sw.n_steps < 2 {
            return Err(Error::InvalidParameter {
                name: "sweep.n_steps",
                value: sw.n_steps as f64,
                reason: "a sweep needs at least two points",
            });
        }
        let ct = &self.continuation;
        if !(ct.c_lo > 0.0 && ct.c_hi >= ct.c_lo) {
            return Err(Error::InvalidParameter {
                name: "continuation.c_lo",
                value: ct.c_lo,
                reason: "damping range must be positive and ascending",
            });
        }
        if !(ct.delta_c > 0.0 && ct.delta_c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "continuation.delta_c",
                value: ct.delta_c,
                reason: "continuation step must be positive",
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mde::PhaseFactorMode;

    #[test]
    fn empty_text_yields_the_reference_defaults() {
        let cfg = RunConfig::parse_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let osc = cfg.oscillator();
        assert_eq!(
            (osc.c, osc.k, osc.mu, osc.q_load, osc.g_slope),
            (0.04, 1.0, 0.7, 0.3, 1.0)
        );
        assert_eq!(
            cfg.forcing().unwrap(),
            Forcing::RandomPhase { p: 0.2, omega: 0.9, rho: 2e-5 }
        );
        let sim = cfg.sim();
        assert_eq!((sim.dt, sim.t_end, sim.seed, sim.record_stride), (0.005, 1000.0, 1, 10));
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::parse_str(
            "[model]\nc = 0.05\nQ = 0.25\n\n[forcing]\nomega = 0.82\n\n[sim]\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.model.c, 0.05);
        assert_eq!(cfg.model.q_load, 0.25);
        assert_eq!(cfg.model.k, 1.0);
        assert_eq!(
            cfg.forcing().unwrap(),
            Forcing::RandomPhase { p: 0.2, omega: 0.82, rho: 2e-5 }
        );
        assert_eq!(cfg.sim.seed, 42);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = RunConfig::parse_str("[model]\nbogus_knob = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("bogus_knob"), "message: {err}");
        let err = RunConfig::parse_str("[nonsense]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"), "message: {err}");
    }

    #[test]
    fn forcing_variants_resolve_and_reject_foreign_keys() {
        let cfg = RunConfig::parse_str(
            "[forcing]\ntype = \"filtered\"\ns = 1.5\nzeta = 0.1\nomega_n = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.forcing().unwrap(), Forcing::Filtered { s: 1.5, zeta: 0.1, omega_n: 2.0 });

        let cfg =
            RunConfig::parse_str("[forcing]\ntype = \"random_phase\"\nzeta = 0.1\n").unwrap();
        let err = cfg.forcing().unwrap_err();
        assert!(matches!(err, Error::VariantMismatch { name: "zeta", .. }), "got {err:?}");

        let cfg = RunConfig::parse_str("[forcing]\ntype = \"filtered\"\nzeta = 0.1\n").unwrap();
        let err = cfg.forcing().unwrap_err();
        assert!(err.to_string().contains("forcing.s"), "message: {err}");

        let cfg = RunConfig::parse_str("[forcing]\ntype = \"sawtooth\"\n").unwrap();
        assert!(cfg.forcing().unwrap_err().to_string().contains("sawtooth"));
    }

    #[test]
    fn harmonic_white_requires_its_noise_amplitude() {
        let cfg = RunConfig::parse_str("[forcing]\ntype = \"harmonic_white\"\ns = 0.01\n").unwrap();
        assert_eq!(
            cfg.forcing().unwrap(),
            Forcing::HarmonicWhite { p: 0.2, omega: 0.9, s: 0.01 }
        );
        let cfg = RunConfig::parse_str("[forcing]\ntype = \"harmonic_white\"\n").unwrap();
        assert!(cfg.forcing().is_err());
    }

    #[test]
    fn mde_params_match_the_standard_template_at_defaults() {
        let cfg = RunConfig::default();
        let p = cfg.mde().unwrap();
        assert_eq!(p, MdeParams::standard(0.9));
        assert_eq!(p.phase_mode, PhaseFactorMode::PaperConstant);
        let filtered =
            RunConfig::parse_str("[forcing]\ntype = \"filtered\"\ns = 1.0\nzeta = 0.1\nomega_n = 2.0\n")
                .unwrap();
        assert!(filtered.mde().is_err());
    }

    #[test]
    fn resolved_config_round_trips_bitwise() {
        let cfg = RunConfig::parse_str(
            "[model]\nc = 0.0475\n[forcing]\nomega = 0.913\n[sim]\ndt = 0.0075\nseed = 9\n",
        )
        .unwrap();
        let resolved = cfg.resolved().unwrap();
        let text = resolved.to_toml().unwrap();
        let reparsed = RunConfig::parse_str(&text).unwrap();
        assert_eq!(reparsed, resolved);
        // Floats survive exactly: shortest round-trip formatting.
        assert_eq!(reparsed.model.c.to_bits(), 0.0475f64.to_bits());
        assert_eq!(reparsed.forcing.omega.unwrap().to_bits(), 0.913f64.to_bits());
        // A second round trip is textually identical.
        assert_eq!(reparsed.to_toml().unwrap(), text);
    }

    #[test]
    fn validate_rejects_bad_ranges() {
        let cfg = RunConfig::parse_str("[sweep]\nomega_lo = 0.9\nomega_hi = 0.7\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse_str("[sweep]\nn_steps = 1\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse_str("[continuation]\ndelta_c = 0.0\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse_str("[model]\nc = -0.1\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse_str("[mct]\ngrid_m = 0\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
