//! Independent route to the closed-form susceptibilities: local
//! (homogeneous-field) linear response, averaged numerically over the
//! transverse Gaussian profile of the cavity mode.
//!
//! With `u = exp(−2r²/w²)` and a crystal much wider than the waist, the
//! radial average of a response density becomes `∫₀¹ χ_loc(u) du / u`.

mod bloch;
mod quadrature;

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bloch::{bloch_local, bloch_steady_state, BlochSolution, Scheme, MAX_CONDITION};
pub use quadrature::{integrate, QuadratureConfig, QuadratureResult};

use crate::error::{Error, Result};
use crate::model::{chi_switch, theta, theta_s, AtomParams, DriveParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn check_weight(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("mode weight u = {u} outside [0, 1]")));
    }
    Ok(())
}

/// Three-level response at mode weight `u`:
/// `i g_N² u / ((γ − iΔ)(1 + Θ u))`.
pub fn chi_local_eit(atoms: &AtomParams, omega_c: f64, delta: f64, u: f64) -> Result<Complex64> {
    check_weight(u)?;
    let th = theta(atoms, omega_c, delta)?;
    let optical = Complex64::new(atoms.gamma, -delta);
    Ok(I * (atoms.g_n * atoms.g_n * u) / (optical * (1.0 + th * u)))
}

/// Four-level response at mode weight `u`:
/// `i g_N² u (1 + Θ_s u) / ((γ − iΔ)(1 + (Θ + Θ_s) u))`.
pub fn chi_local_switch(
    atoms: &AtomParams,
    drive: &DriveParams,
    delta: f64,
    u: f64,
) -> Result<Complex64> {
    check_weight(u)?;
    let th = theta(atoms, drive.omega_c, delta)?;
    let ths = if drive.omega_s == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        theta_s(atoms, drive, delta)?
    };
    let optical = Complex64::new(atoms.gamma, -delta);
    Ok(I * (atoms.g_n * atoms.g_n * u) * (1.0 + ths * u) / (optical * (1.0 + (th + ths) * u)))
}

/// `∫₀¹ local(u) / u du`: the transverse mode average of a local response
/// that vanishes linearly at `u = 0`.
pub fn transverse_average<F>(mut local: F, config: &QuadratureConfig) -> Result<QuadratureResult>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    integrate(|u| Ok(local(u)? / u), 0.0, 1.0, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub delta_hz: f64,
    pub closed: Complex64,
    pub quad: Complex64,
    pub bloch: Complex64,
    pub rel_err_quad: f64,
    pub rel_err_bloch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scheme: Scheme,
    pub rows: Vec<OracleRow>,
    pub max_rel_err_quad: f64,
    pub mean_rel_err_quad: f64,
    pub max_rel_err_bloch: f64,
    pub mean_rel_err_bloch: f64,
}

impl OracleReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_quad.max(self.max_rel_err_bloch)
    }

    /// CSV with a `#` header recording the scheme and the Rabi convention
    /// used by the Bloch solve.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let scheme = match self.scheme {
            Scheme::ThreeLevel => "three_level",
            Scheme::FourLevel => "four_level",
        };
        let _ = writeln!(
            out,
            "# scheme={scheme} control_coupling=omega_c/sqrt(2) switch_coupling=omega_s max_rel_err_quad={} max_rel_err_bloch={}",
            self.max_rel_err_quad, self.max_rel_err_bloch
        );
        out.push_str("delta_hz,re_closed,im_closed,re_quad,im_quad,re_bloch,im_bloch,rel_err_quad,rel_err_bloch\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.delta_hz,
                r.closed.re,
                r.closed.im,
                r.quad.re,
                r.quad.im,
                r.bloch.re,
                r.bloch.im,
                r.rel_err_quad,
                r.rel_err_bloch
            );
        }
        out
    }
}

fn relative_deviation(reference: Complex64, other: Complex64) -> f64 {
    let diff = (other - reference).norm();
    let scale = reference.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Compares the closed-form susceptibility with the quadrature of the
/// closed local response and with the quadrature of the Bloch-derived local
/// response, on every detuning of the grid. The four-level scheme is used
/// whenever a switching field is present.
pub fn oracle_report(
    atoms: &AtomParams,
    drive: &DriveParams,
    deltas: &[f64],
    config: &QuadratureConfig,
) -> Result<OracleReport> {
    oracle_report_against(atoms, drive, deltas, config, |delta| {
        Ok(chi_switch(atoms, drive, delta)?.0)
    })
}

/// As [`oracle_report`] but with a caller-supplied closed form.
pub fn oracle_report_against<F>(
    atoms: &AtomParams,
    drive: &DriveParams,
    deltas: &[f64],
    config: &QuadratureConfig,
    closed_form: F,
) -> Result<OracleReport>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    atoms.validate()?;
    drive.validate()?;
    config.validate()?;
    let scheme = if drive.omega_s > 0.0 {
        Scheme::FourLevel
    } else {
        Scheme::ThreeLevel
    };

    let rows = deltas
        .par_iter()
        .map(|&delta| -> Result<OracleRow> {
            let eval = || -> Result<OracleRow> {
                let closed = closed_form(delta)?;
                let quad = match scheme {
                    Scheme::ThreeLevel => {
                        transverse_average(|u| chi_local_eit(atoms, drive.omega_c, delta, u), config)?
                    }
                    Scheme::FourLevel => {
                        transverse_average(|u| chi_local_switch(atoms, drive, delta, u), config)?
                    }
                }
                .value;
                let bloch =
                    transverse_average(|u| bloch_local(scheme, atoms, drive, delta, u), config)?.value;
                Ok(OracleRow {
                    delta_hz: delta,
                    closed,
                    quad,
                    bloch,
                    rel_err_quad: relative_deviation(closed, quad),
                    rel_err_bloch: relative_deviation(closed, bloch),
                })
            };
            eval().map_err(|e| e.at_detuning(delta))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = rows.len().max(1) as f64;
    let max_q = rows.iter().map(|r| r.rel_err_quad).fold(0.0, f64::max);
    let max_b = rows.iter().map(|r| r.rel_err_bloch).fold(0.0, f64::max);
    let mean_q = rows.iter().map(|r| r.rel_err_quad).sum::<f64>() / n;
    let mean_b = rows.iter().map(|r| r.rel_err_bloch).sum::<f64>() / n;
    Ok(OracleReport {
        scheme,
        rows,
        max_rel_err_quad: max_q,
        mean_rel_err_quad: mean_q,
        max_rel_err_bloch: max_b,
        mean_rel_err_bloch: mean_b,
    })
}
