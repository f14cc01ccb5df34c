//! Parameter blocks for the cavity, the atomic ensemble and the driving fields.
//!
//! All rates, detunings and Rabi frequencies are linear frequencies in Hz
//! (angular values divided by 2π). The 2π cancels in every ratio the model
//! evaluates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round-trip time of an 11.8 mm linear cavity, `2 L / c`.
pub const DEFAULT_ROUND_TRIP_TIME: f64 = 2.0 * 11.8e-3 / 299_792_458.0;

/// Mirror transmissions and intracavity absorption, in parts per million.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossBudget {
    pub t_high_ppm: f64,
    pub t_low_ppm: f64,
    pub absorption_ppm: f64,
}

impl LossBudget {
    pub fn kappa_ratio(&self) -> Result<f64> {
        mirror_budget_to_kappa_ratio(self.t_high_ppm, self.t_low_ppm, self.absorption_ppm)
    }
}

/// Fraction of the total cavity field decay due to the input mirror,
/// `t_high / (t_high + t_low + absorption)`.
pub fn mirror_budget_to_kappa_ratio(
    t_high_ppm: f64,
    t_low_ppm: f64,
    absorption_ppm: f64,
) -> Result<f64> {
    for (name, v) in [
        ("t_high_ppm", t_high_ppm),
        ("t_low_ppm", t_low_ppm),
        ("absorption_ppm", absorption_ppm),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let total = t_high_ppm + t_low_ppm + absorption_ppm;
    if total <= 0.0 {
        return Err(Error::Domain("total cavity loss is zero".into()));
    }
    Ok(t_high_ppm / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    /// Total cavity field decay rate (Hz).
    pub kappa: f64,
    /// Field decay rate through the probe input mirror (Hz).
    pub kappa_in: f64,
    /// Round-trip time (s).
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_budget: Option<LossBudget>,
}

impl CavityParams {
    pub fn new(kappa: f64, kappa_in: f64, tau: f64) -> Result<Self> {
        let c = Self {
            kappa,
            kappa_in,
            tau,
            loss_budget: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Builds the cavity from its total decay rate and mirror budget; the
    /// input-coupling rate follows from the budget.
    pub fn from_loss_budget(kappa: f64, tau: f64, budget: LossBudget) -> Result<Self> {
        let c = Self {
            kappa,
            kappa_in: kappa * budget.kappa_ratio()?,
            tau,
            loss_budget: Some(budget),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.kappa_in > 0.0 && self.kappa_in <= self.kappa) {
            return Err(Error::InvalidParameter(format!(
                "kappa_in must satisfy 0 < kappa_in <= kappa, got {} (kappa = {})",
                self.kappa_in, self.kappa
            )));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if let Some(budget) = &self.loss_budget {
            let ratio = budget.kappa_ratio()?;
            let actual = self.kappa_in / self.kappa;
            if (actual - ratio).abs() > 1e-12 * ratio.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParameter(format!(
                    "kappa_in/kappa = {actual} disagrees with loss budget ratio {ratio}"
                )));
            }
        }
        Ok(())
    }

    pub fn input_fraction(&self) -> f64 {
        self.kappa_in / self.kappa
    }

    /// Multiplies both decay rates by `s`, keeping the input fraction.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            kappa: self.kappa * s,
            kappa_in: self.kappa_in * s,
            tau: self.tau / s,
            loss_budget: self.loss_budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomParams {
    /// Collective coupling rate g_N (Hz).
    pub g_n: f64,
    /// Optical coherence decay of the probe transition (Hz).
    pub gamma: f64,
    /// Ground-state coherence decay (Hz).
    pub gamma0: f64,
    /// Coherence decay of the switching transition (Hz).
    pub gamma_s: f64,
}

impl AtomParams {
    pub fn new(g_n: f64, gamma: f64, gamma0: f64, gamma_s: f64) -> Result<Self> {
        let a = Self {
            g_n,
            gamma,
            gamma0,
            gamma_s,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_n.is_finite() && self.g_n >= 0.0) {
            return Err(Error::InvalidParameter(format!("g_n must be >= 0, got {}", self.g_n)));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma0", self.gamma0),
            ("gamma_s", self.gamma_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            g_n: self.g_n * s,
            gamma: self.gamma * s,
            gamma0: self.gamma0 * s,
            gamma_s: self.gamma_s * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    /// Control Rabi frequency at the mode centre (Hz).
    pub omega_c: f64,
    /// Switching Rabi frequency at the mode centre (Hz).
    #[serde(default)]
    pub omega_s: f64,
    /// Switching field detuning (Hz, signed).
    #[serde(default)]
    pub delta_s: f64,
}

impl DriveParams {
    pub fn new(omega_c: f64, omega_s: f64, delta_s: f64) -> Result<Self> {
        let d = Self {
            omega_c,
            omega_s,
            delta_s,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn control_only(omega_c: f64) -> Self {
        Self {
            omega_c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c.is_finite() && self.omega_c >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega_c must be >= 0, got {}", self.omega_c)));
        }
        if !(self.omega_s.is_finite() && self.omega_s >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega_s must be >= 0, got {}", self.omega_s)));
        }
        if !self.delta_s.is_finite() {
            return Err(Error::InvalidParameter("delta_s must be finite".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            omega_c: self.omega_c * s,
            omega_s: self.omega_s * s,
            delta_s: self.delta_s * s,
        }
    }
}

/// Intracavity photon number for a Rabi frequency, given the single-photon
/// coupling `g_single` as an external calibration: `n = (omega / (2 g_single))^2`.
pub fn photons_from_rabi(omega: f64, g_single: f64) -> Result<f64> {
    if !(g_single.is_finite() && g_single > 0.0) {
        return Err(Error::Domain(format!("g_single must be > 0, got {g_single}")));
    }
    let half = omega / (2.0 * g_single);
    Ok(half * half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_ratio_values() {
        let r = mirror_budget_to_kappa_ratio(1500.0, 4.0, 650.0).unwrap();
        assert!((r - 1500.0 / 2154.0).abs() < 1e-15);
        assert!((r - 0.69638).abs() < 1e-5);
        assert_eq!(mirror_budget_to_kappa_ratio(12.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(mirror_budget_to_kappa_ratio(0.0, 4.0, 650.0).unwrap(), 0.0);
        assert!(mirror_budget_to_kappa_ratio(0.0, 0.0, 0.0).is_err());
        assert!(mirror_budget_to_kappa_ratio(-1.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn cavity_invariants() {
        assert!(CavityParams::new(2.2e6, 1.0e6, 1e-10).is_ok());
        assert!(CavityParams::new(0.0, 0.0, 1e-10).is_err());
        assert!(CavityParams::new(2.2e6, 3.0e6, 1e-10).is_err());
        assert!(CavityParams::new(2.2e6, 0.0, 1e-10).is_err());
        assert!(CavityParams::new(2.2e6, 1.0e6, 0.0).is_err());

        let budget = LossBudget {
            t_high_ppm: 1500.0,
            t_low_ppm: 4.0,
            absorption_ppm: 650.0,
        };
        let c = CavityParams::from_loss_budget(2.2e6, DEFAULT_ROUND_TRIP_TIME, budget).unwrap();
        assert!((c.input_fraction() - 0.696378830083565).abs() < 1e-12);

        let mut bad = c;
        bad.kappa_in *= 1.001;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn atom_and_drive_invariants() {
        assert!(AtomParams::new(0.0, 12.6e6, 600.0, 11e6).is_ok());
        assert!(AtomParams::new(-1.0, 12.6e6, 600.0, 11e6).is_err());
        assert!(AtomParams::new(1.0, 0.0, 600.0, 11e6).is_err());
        assert!(AtomParams::new(1.0, 1.0, 0.0, 11e6).is_err());
        assert!(AtomParams::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(DriveParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(DriveParams::new(1.0, -1.0, 0.0).is_err());
        assert!(DriveParams::new(1.0, 1.0, -4.3e9).is_ok());
    }

    #[test]
    fn photon_calibration() {
        assert_eq!(photons_from_rabi(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(photons_from_rabi(0.0, 3.0).unwrap(), 0.0);
        let n1 = photons_from_rabi(5e6, 1e5).unwrap();
        let n3 = photons_from_rabi(15e6, 1e5).unwrap();
        assert!((n3 / n1 - 9.0).abs() < 1e-12);
        assert!(photons_from_rabi(1.0, 0.0).is_err());
        assert!(photons_from_rabi(1.0, -2.0).is_err());
    }
}
