//! Steady-state optical Bloch equations to first order in the probe field.
//!
//! Levels: `|1⟩` the populated ground sub-state, `|2⟩` the empty ground
//! sub-state, `|3⟩` the common excited state and, for the switching scheme,
//! `|4⟩` the far-detuned level reached from `|2⟩`. With all population in
//! `|1⟩` the first-order coherences obey
//!
//! ```text
//! 0 = −(γ  − iΔ) σ13 + i Ωp + i Ωc' σ12
//! 0 = −(γ₀ − iΔ) σ12 + i Ωc' σ13 + i Ωs' σ14
//! 0 = −(γs − iΔs) σ14 + i Ωs' σ12
//! ```
//!
//! The control enters with `Ωc' = Ω_c / √2` and the switching field with
//! `Ωs' = Ω_s`; these are the couplings for which the solution carries
//! exactly the saturation parameters Θ and Θ_s of the closed forms. The
//! `σ14` coherence is damped by `γs − iΔs`, i.e. the probe detuning is
//! dropped next to `Δs`, as in Θ_s.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomParams, DriveParams, Susceptibility};

/// Largest accepted 1-norm condition estimate of the coherence system.
pub const MAX_CONDITION: f64 = 1e14;

/// Probe strength relative to γ used when only the susceptibility matters.
const REFERENCE_PROBE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Λ system: probe and control.
    ThreeLevel,
    /// Λ system plus the switching field on the empty ground state.
    FourLevel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSolution {
    /// Optical coherence σ13 of the probe transition.
    pub probe_coherence: Complex64,
    /// Ground-state coherence σ12.
    pub ground_coherence: Complex64,
    /// σ14, zero for the three-level scheme.
    pub switch_coherence: Complex64,
    pub chi: Susceptibility,
    pub condition: f64,
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Solves the coherence equations at the mode centre for a probe of Rabi
/// frequency `omega_p` (which must satisfy `0 < omega_p ≤ 1e-3 γ`).
pub fn bloch_steady_state(
    scheme: Scheme,
    atoms: &AtomParams,
    drive: &DriveParams,
    omega_p: f64,
    delta: f64,
) -> Result<BlochSolution> {
    if !(omega_p > 0.0 && omega_p <= 1e-3 * atoms.gamma) {
        return Err(Error::Domain(format!(
            "probe Rabi frequency {omega_p} outside the linear-response regime (0, 1e-3 gamma]"
        )));
    }
    solve_weighted(scheme, atoms, drive, omega_p, delta, 1.0)
}

/// Local susceptibility of atoms sitting where the mode intensity is a
/// fraction `u` of its peak, derived from the Bloch solution. Probe coupling
/// and drive intensities all carry the weight `u`.
pub fn bloch_local(
    scheme: Scheme,
    atoms: &AtomParams,
    drive: &DriveParams,
    delta: f64,
    u: f64,
) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("mode weight u = {u} outside [0, 1]")));
    }
    let omega_p = REFERENCE_PROBE * atoms.gamma;
    Ok(solve_weighted(scheme, atoms, drive, omega_p, delta, u)?.chi.0)
}

fn solve_weighted(
    scheme: Scheme,
    atoms: &AtomParams,
    drive: &DriveParams,
    omega_p: f64,
    delta: f64,
    u: f64,
) -> Result<BlochSolution> {
    let amp = u.sqrt();
    let probe = omega_p * amp;
    let control = drive.omega_c * amp / std::f64::consts::SQRT_2;
    let optical = Complex64::new(atoms.gamma, -delta);
    let ground = Complex64::new(atoms.gamma0, -delta);

    let (s13, s12, s14, condition) = match scheme {
        Scheme::ThreeLevel => {
            let m = Matrix2::new(optical, -I * control, -I * control, ground);
            let inv = m
                .try_inverse()
                .ok_or(Error::Singular(f64::INFINITY))?;
            let condition = norm1(m.as_slice(), 2) * norm1(inv.as_slice(), 2);
            check_condition(condition)?;
            let x = inv * Vector2::new(I * probe, Complex64::new(0.0, 0.0));
            (x[0], x[1], Complex64::new(0.0, 0.0), condition)
        }
        Scheme::FourLevel => {
            let switching = drive.omega_s * amp;
            let far = Complex64::new(atoms.gamma_s, -drive.delta_s);
            let zero = Complex64::new(0.0, 0.0);
            let m = Matrix3::new(
                optical,
                -I * control,
                zero,
                -I * control,
                ground,
                -I * switching,
                zero,
                -I * switching,
                far,
            );
            let inv = m
                .try_inverse()
                .ok_or(Error::Singular(f64::INFINITY))?;
            let condition = norm1(m.as_slice(), 3) * norm1(inv.as_slice(), 3);
            check_condition(condition)?;
            let x = inv * Vector3::new(I * probe, zero, zero);
            (x[0], x[1], x[2], condition)
        }
    };

    // polarisation radiated back into the mode carries another factor sqrt(u)
    let chi = atoms.g_n * atoms.g_n * amp * s13 / omega_p;
    Ok(BlochSolution {
        probe_coherence: s13,
        ground_coherence: s12,
        switch_coherence: s14,
        chi: Susceptibility(chi),
        condition,
    })
}

/// Maximum absolute column sum of a column-major `n × n` slice.
fn norm1(data: &[Complex64], n: usize) -> f64 {
    data.chunks(n)
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_condition(condition: f64) -> Result<()> {
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular(condition));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::chi_two_level;

    fn atoms() -> AtomParams {
        AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap()
    }

    #[test]
    fn no_control_gives_two_level_response() {
        let a = atoms();
        for &delta in &[-3e7, -1e5, 0.0, 2e3, 1.2e7] {
            let s = bloch_steady_state(Scheme::ThreeLevel, &a, &DriveParams::default(), 1e3, delta).unwrap();
            let want = chi_two_level(&a, delta).0;
            assert!((s.chi.0 - want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn coherence_is_linear_in_probe() {
        let a = atoms();
        let drive = DriveParams::new(4.1e6, 42e6, -4.3e9).unwrap();
        for scheme in [Scheme::ThreeLevel, Scheme::FourLevel] {
            let one = bloch_steady_state(scheme, &a, &drive, 2e3, 1.5e4).unwrap();
            let two = bloch_steady_state(scheme, &a, &drive, 4e3, 1.5e4).unwrap();
            let r = two.probe_coherence / one.probe_coherence;
            assert!((r - 2.0).norm() < 1e-8);
        }
    }

    #[test]
    fn probe_outside_linear_regime_rejected() {
        let a = atoms();
        let d = DriveParams::control_only(4.1e6);
        assert!(bloch_steady_state(Scheme::ThreeLevel, &a, &d, 0.0, 0.0).is_err());
        assert!(bloch_steady_state(Scheme::ThreeLevel, &a, &d, 1e-2 * a.gamma, 0.0).is_err());
    }

    #[test]
    fn ill_conditioned_system_rejected() {
        // diag(γ, γ₀) with γ/γ₀ ~ 1e16
        let a = AtomParams::new(13.5e6, 12.6e6, 1e-9, 11e6).unwrap();
        let err =
            bloch_steady_state(Scheme::ThreeLevel, &a, &DriveParams::default(), 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn zero_weight_has_no_response() {
        let a = atoms();
        let d = DriveParams::new(4.1e6, 42e6, -4.3e9).unwrap();
        let chi = bloch_local(Scheme::FourLevel, &a, &d, 1e4, 0.0).unwrap();
        assert_eq!(chi.norm(), 0.0);
        assert!(bloch_local(Scheme::FourLevel, &a, &d, 1e4, 1.5).is_err());
    }
}
