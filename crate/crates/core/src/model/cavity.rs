//! Input-output response of the cavity around the medium.

use num_complex::Complex64;

use super::params::{AtomParams, CavityParams};
use super::susceptibility::Susceptibility;

/// `κ − iΔ − iχ`, the complex field-decay denominator of the loaded cavity.
fn loaded_denominator(cavity: &CavityParams, chi: Susceptibility, delta: f64) -> Complex64 {
    Complex64::new(cavity.kappa + chi.im(), -(delta + chi.re()))
}

/// Steady-state intracavity probe amplitude
/// `⟨a⟩ = sqrt(2 κ_in / τ) a_in / (κ − iΔ − iχ)`.
pub fn intracavity_amplitude(
    cavity: &CavityParams,
    chi: Susceptibility,
    delta: f64,
    a_in: Complex64,
) -> Complex64 {
    let coupling = (2.0 * cavity.kappa_in / cavity.tau).sqrt();
    coupling * a_in / loaded_denominator(cavity, chi, delta)
}

/// Probe power reflectivity `|2 κ_in / (κ − iΔ − iχ) − 1|²`.
pub fn reflectivity(cavity: &CavityParams, chi: Susceptibility, delta: f64) -> f64 {
    let r = 2.0 * cavity.kappa_in / loaded_denominator(cavity, chi, delta) - 1.0;
    r.norm_sqr()
}

/// Cavity transmission relative to the empty resonant cavity,
/// `κ² / ((κ + Im χ)² + (Δ + Re χ)²)`. At Δ = 0 this is the atomic
/// transparency of the medium.
pub fn transparency(cavity: &CavityParams, chi: Susceptibility, delta: f64) -> f64 {
    let k = cavity.kappa;
    k * k / loaded_denominator(cavity, chi, delta).norm_sqr()
}

/// `C = g_N² / (2 κ γ)`.
pub fn cooperativity(cavity: &CavityParams, atoms: &AtomParams) -> f64 {
    atoms.g_n * atoms.g_n / (2.0 * cavity.kappa * atoms.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{LossBudget, DEFAULT_ROUND_TRIP_TIME};
    use crate::model::susceptibility::{chi_eit, chi_two_level};

    fn reference_cavity() -> CavityParams {
        CavityParams::from_loss_budget(
            2.2e6,
            DEFAULT_ROUND_TRIP_TIME,
            LossBudget {
                t_high_ppm: 1500.0,
                t_low_ppm: 4.0,
                absorption_ppm: 650.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_cavity_reflectivity() {
        let c = reference_cavity();
        let r0 = reflectivity(&c, Susceptibility::ZERO, 0.0);
        // (2 * 1500/2154 - 1)^2 = 0.1542586
        assert!((r0 - 0.154259).abs() < 1e-5, "{r0}");
        assert!(reflectivity(&c, Susceptibility::ZERO, 1e12) > 1.0 - 1e-10);

        let matched = CavityParams::new(2.2e6, 1.1e6, 1e-10).unwrap();
        assert!(reflectivity(&matched, Susceptibility::ZERO, 0.0) < 1e-30);
    }

    #[test]
    fn transparency_limits() {
        let c = reference_cavity();
        assert_eq!(transparency(&c, Susceptibility::ZERO, 0.0), 1.0);
        assert!(transparency(&c, Susceptibility::ZERO, 1e3) < 1.0);

        let atoms = AtomParams::new(13.8e6, 12.6e6, 600.0, 11e6).unwrap();
        let coop = cooperativity(&c, &atoms);
        let t = transparency(&c, chi_two_level(&atoms, 0.0), 0.0);
        let expect = 1.0 / (1.0 + 2.0 * coop).powi(2);
        assert!((t - expect).abs() < 1e-14);
        assert!((t - 0.01614).abs() < 1e-4, "{t}");
    }

    #[test]
    fn eit_transparency_at_reference_point() {
        let c = reference_cavity();
        let atoms = AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap();
        let t = transparency(&c, chi_eit(&atoms, 4.1e6, 0.0).unwrap(), 0.0);
        assert!((t - 0.92).abs() < 0.01, "{t}");
    }

    #[test]
    fn cooperativity_values() {
        let c = reference_cavity();
        let atoms = AtomParams::new(13.8e6, 12.6e6, 600.0, 11e6).unwrap();
        assert!((cooperativity(&c, &atoms) - 3.435).abs() < 0.005);
        let mut doubled = atoms;
        doubled.g_n *= 2.0;
        assert!((cooperativity(&c, &doubled) / cooperativity(&c, &atoms) - 4.0).abs() < 1e-14);
        doubled.g_n = 0.0;
        assert_eq!(cooperativity(&c, &doubled), 0.0);
    }

    #[test]
    fn resonant_absorption_is_twice_cooperativity() {
        let c = reference_cavity();
        for g in [1e5, 13.8e6, 17.3e6, 4e7] {
            let atoms = AtomParams::new(g, 12.6e6, 600.0, 11e6).unwrap();
            let ratio = chi_two_level(&atoms, 0.0).im() / c.kappa;
            let two_c = 2.0 * cooperativity(&c, &atoms);
            assert!((ratio - two_c).abs() <= 1e-12 * two_c);
        }
    }

    #[test]
    fn intracavity_amplitude_behaviour() {
        let c = reference_cavity();
        let a_in = Complex64::new(0.3, -0.1);
        let a = intracavity_amplitude(&c, Susceptibility::ZERO, 0.0, a_in);
        let expect = (2.0 * c.kappa_in / c.tau).sqrt() * a_in / c.kappa;
        assert!((a - expect).norm() <= 1e-14 * expect.norm());
        assert_eq!(
            intracavity_amplitude(&c, Susceptibility::ZERO, 1e6, Complex64::new(0.0, 0.0)).norm(),
            0.0
        );

        let mut last = f64::INFINITY;
        for k in 0..100 {
            let chi = Susceptibility(Complex64::new(2e5, k as f64 * 1e5));
            let m = intracavity_amplitude(&c, chi, 3e5, a_in).norm();
            assert!(m < last);
            last = m;
        }
    }
}
