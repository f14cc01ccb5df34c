//! Closed-form susceptibilities of the ensemble after averaging over the
//! transverse Gaussian profile of the cavity mode.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::params::{AtomParams, DriveParams};
use crate::error::{Error, Result};

/// Below this |z| the ratio `ln(1 + z) / z` is evaluated from its series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Relative distance from the negative real axis treated as on the cut.
const BRANCH_CUT_TOL: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Optical susceptibility χ of the medium, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility(pub Complex64);

impl Susceptibility {
    pub const ZERO: Susceptibility = Susceptibility(Complex64::new(0.0, 0.0));

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn re(self) -> f64 {
        self.0.re
    }

    pub fn im(self) -> f64 {
        self.0.im
    }
}

impl From<Complex64> for Susceptibility {
    fn from(value: Complex64) -> Self {
        Susceptibility(value)
    }
}

/// Control-field saturation parameter
/// `Θ = (Ω_c² / 2) / ((γ − iΔ)(γ₀ − iΔ))`.
pub fn theta(atoms: &AtomParams, omega_c: f64, delta: f64) -> Result<Complex64> {
    if atoms.gamma == 0.0 || atoms.gamma0 == 0.0 {
        return Err(Error::Domain("theta requires gamma > 0 and gamma0 > 0".into()));
    }
    let optical = Complex64::new(atoms.gamma, -delta);
    let ground = Complex64::new(atoms.gamma0, -delta);
    Ok(Complex64::from(0.5 * omega_c * omega_c) / (optical * ground))
}

/// Switching-field parameter `Θ_s = Ω_s² / ((γ_s − iΔ_s)(γ₀ − iΔ))`.
///
/// Unlike [`theta`] there is no factor 1/2 on the Rabi frequency.
pub fn theta_s(atoms: &AtomParams, drive: &DriveParams, delta: f64) -> Result<Complex64> {
    if atoms.gamma_s == 0.0 && drive.delta_s == 0.0 {
        return Err(Error::Domain("theta_s requires gamma_s and delta_s not both zero".into()));
    }
    if atoms.gamma0 == 0.0 && delta == 0.0 {
        return Err(Error::Domain("theta_s requires gamma0 and delta not both zero".into()));
    }
    let switching = Complex64::new(atoms.gamma_s, -drive.delta_s);
    let ground = Complex64::new(atoms.gamma0, -delta);
    Ok(Complex64::from(drive.omega_s * drive.omega_s) / (switching * ground))
}

/// Bare (undriven) two-level response `i g_N² / (γ − iΔ)`.
pub fn chi_two_level(atoms: &AtomParams, delta: f64) -> Susceptibility {
    Susceptibility(prefactor(atoms, delta))
}

/// EIT susceptibility `i g_N² / (γ − iΔ) · ln(1 + Θ) / Θ`.
pub fn chi_eit(atoms: &AtomParams, omega_c: f64, delta: f64) -> Result<Susceptibility> {
    let th = theta(atoms, omega_c, delta)?;
    Ok(Susceptibility(prefactor(atoms, delta) * log_ratio(th)?))
}

/// Four-level switching susceptibility
/// `i g_N² / (γ − iΔ) · [Θ ln(1 + Θ + Θ_s) / (Θ + Θ_s)² + Θ_s / (Θ + Θ_s)]`.
pub fn chi_switch(atoms: &AtomParams, drive: &DriveParams, delta: f64) -> Result<Susceptibility> {
    if drive.omega_s == 0.0 {
        return chi_eit(atoms, drive.omega_c, delta);
    }
    let th = theta(atoms, drive.omega_c, delta)?;
    let ths = theta_s(atoms, drive, delta)?;
    Ok(Susceptibility(prefactor(atoms, delta) * switch_bracket(th, ths)?))
}

fn prefactor(atoms: &AtomParams, delta: f64) -> Complex64 {
    I * (atoms.g_n * atoms.g_n) / Complex64::new(atoms.gamma, -delta)
}

/// `ln(1 + z) / z` on the principal branch.
pub(crate) fn log_ratio(z: Complex64) -> Result<Complex64> {
    if z.norm() < SERIES_THRESHOLD {
        // 1 - z/2 + z^2/3 - z^3/4
        return Ok(1.0 + z * (-0.5 + z * (1.0 / 3.0 - 0.25 * z)));
    }
    Ok(principal_ln_1p(z)? / z)
}

/// Bracket of the switching susceptibility. Tends to 1 as Θ + Θ_s → 0.
pub(crate) fn switch_bracket(th: Complex64, ths: Complex64) -> Result<Complex64> {
    let sum = th + ths;
    if sum.norm() < SERIES_THRESHOLD {
        // 1 + Θ (ln(1+S)/S - 1)/S with (ln(1+S)/S - 1)/S = -1/2 + S/3 - S^2/4 + S^3/5
        let tail = -0.5 + sum * (1.0 / 3.0 + sum * (-0.25 + 0.2 * sum));
        return Ok(1.0 + th * tail);
    }
    let l = principal_ln_1p(sum)? / sum;
    Ok((th * l + ths) / sum)
}

fn principal_ln_1p(z: Complex64) -> Result<Complex64> {
    let w = 1.0 + z;
    let scale = w.norm();
    if scale == 0.0 || (w.re <= 0.0 && w.im.abs() <= BRANCH_CUT_TOL * scale) {
        return Err(Error::BranchCut(w));
    }
    Ok(w.ln())
}
