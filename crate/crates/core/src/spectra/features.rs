//! Spectral features: peak transparency, EIT half-width, light shift of the
//! EIT resonance and the vacuum-Rabi dips.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_spectrum, DetuningGrid, Mode, Spectrum};
use crate::error::{Error, Result};
use crate::model::{cooperativity, reflectivity, transparency, AtomParams, CavityParams, DriveParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Points of the coarse scan preceding refinement.
    pub points: usize,
    /// Refinement tolerance (Hz).
    pub tolerance: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            points: 4001,
            tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransparencyAt {
    /// Maximum over detuning.
    Peak,
    /// Fixed probe detuning Δ = 0.
    Resonance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransparencyPeak {
    pub value: f64,
    /// Detuning of the peak (Hz).
    pub location: f64,
}

fn transparency_for(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
    delta: f64,
) -> Result<f64> {
    let chi = mode
        .susceptibility(atoms, drive, delta)
        .map_err(|e| e.at_detuning(delta))?;
    Ok(transparency(cavity, chi, delta))
}

/// Half-width of the coarse scan: ten EIT linewidths, widened by the light
/// shift at the mode centre when a switching field is on.
fn scan_half_width(cavity: &CavityParams, atoms: &AtomParams, drive: &DriveParams, mode: Mode) -> f64 {
    let coop = cooperativity(cavity, atoms);
    let eit = drive.omega_c * drive.omega_c / (2.0 * atoms.gamma) / (1.0 + 2.0 * coop) + atoms.gamma0;
    let shift = if mode == Mode::Switch {
        let d = atoms.gamma_s * atoms.gamma_s + drive.delta_s * drive.delta_s;
        drive.omega_s * drive.omega_s * drive.delta_s.abs() / d
    } else {
        0.0
    };
    10.0 * eit + 1.5 * shift
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, f(x)?))
}

pub fn extract_max_transparency(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
    at: TransparencyAt,
) -> Result<TransparencyPeak> {
    extract_max_transparency_with(cavity, atoms, drive, mode, at, &ScanOptions::default())
}

/// Coarse scan of T(Δ)/T₀ followed by golden-section refinement around the
/// best grid point.
pub fn extract_max_transparency_with(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
    at: TransparencyAt,
    options: &ScanOptions,
) -> Result<TransparencyPeak> {
    const FEATURE: &str = "max_transparency";
    if !matches!(mode, Mode::Eit | Mode::Switch) {
        return Err(Error::Extraction {
            feature: FEATURE,
            reason: format!("requires eit or switch mode, got {mode}"),
        });
    }
    if at == TransparencyAt::Resonance {
        return Ok(TransparencyPeak {
            value: transparency_for(cavity, atoms, drive, mode, 0.0)?,
            location: 0.0,
        });
    }
    let half = scan_half_width(cavity, atoms, drive, mode);
    let grid = DetuningGrid::symmetric(half, options.points.max(3))?;
    let xs = grid.values();
    let ts = xs
        .iter()
        .map(|&x| transparency_for(cavity, atoms, drive, mode, x))
        .collect::<Result<Vec<_>>>()?;
    let (imax, &tmax) = ts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty scan");
    let tmin = ts.iter().copied().fold(f64::INFINITY, f64::min);
    if tmax - tmin < 1e-12 {
        return Err(Error::Extraction {
            feature: FEATURE,
            reason: "transparency is flat over the scan window".into(),
        });
    }
    let lo = xs[imax.saturating_sub(1)];
    let hi = xs[(imax + 1).min(xs.len() - 1)];
    let (location, value) = golden_section_max(
        |x| transparency_for(cavity, atoms, drive, mode, x),
        lo,
        hi,
        0.25 * options.tolerance,
    )?;
    if value >= tmax {
        Ok(TransparencyPeak { value, location })
    } else {
        Ok(TransparencyPeak {
            value: tmax,
            location: xs[imax],
        })
    }
}

pub fn extract_hwhm(cavity: &CavityParams, atoms: &AtomParams, drive: &DriveParams) -> Result<f64> {
    extract_hwhm_with(cavity, atoms, drive, &ScanOptions::default())
}

/// Half-width of the EIT window on the transparency curve: the distance
/// from the peak to where T/T₀ falls to the mean of the peak and the floor,
/// the floor being T/T₀ at `10 Ω_c² κ / g_N²` from the peak.
pub fn extract_hwhm_with(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    options: &ScanOptions,
) -> Result<f64> {
    const FEATURE: &str = "hwhm";
    if atoms.g_n == 0.0 || drive.omega_c == 0.0 {
        return Err(Error::Extraction {
            feature: FEATURE,
            reason: "needs both a medium (g_n > 0) and a control field (omega_c > 0)".into(),
        });
    }
    let t = |x: f64| transparency_for(cavity, atoms, drive, Mode::Eit, x);
    let peak = extract_max_transparency_with(cavity, atoms, drive, Mode::Eit, TransparencyAt::Peak, options)?;
    let offset = 10.0 * drive.omega_c * drive.omega_c * cavity.kappa / (atoms.g_n * atoms.g_n);
    let floor = t(peak.location + offset)?;
    if peak.value < 10.0 * floor {
        return Err(Error::Extraction {
            feature: FEATURE,
            reason: format!("peak {} is not 10x above the floor {}", peak.value, floor),
        });
    }
    let half = 0.5 * (peak.value + floor);
    let steps = options.points.max(100);
    let step = offset / steps as f64;
    let mut inside = peak.location;
    for k in 1..=steps {
        let x = peak.location + step * k as f64;
        if t(x)? < half {
            let mut lo = inside;
            let mut hi = x;
            while hi - lo > 0.25 * options.tolerance {
                let mid = 0.5 * (lo + hi);
                if t(mid)? < half {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi) - peak.location);
        }
        inside = x;
    }
    Err(Error::Extraction {
        feature: FEATURE,
        reason: "no half-maximum crossing inside the search band".into(),
    })
}

/// Light shift of the EIT resonance: peak location with the switching field
/// minus peak location without it.
pub fn extract_resonance_shift(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
) -> Result<f64> {
    extract_resonance_shift_with(cavity, atoms, drive, &ScanOptions::default())
}

pub fn extract_resonance_shift_with(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    options: &ScanOptions,
) -> Result<f64> {
    let on = extract_max_transparency_with(cavity, atoms, drive, Mode::Switch, TransparencyAt::Peak, options)?;
    let off_drive = DriveParams {
        omega_s: 0.0,
        ..*drive
    };
    let off =
        extract_max_transparency_with(cavity, atoms, &off_drive, Mode::Switch, TransparencyAt::Peak, options)?;
    Ok(on.location - off.location)
}

/// The two deepest local reflectivity minima, each refined by a parabola
/// through its neighbours. Returned in increasing detuning.
pub fn extract_rabi_dips(spectrum: &Spectrum) -> Result<(f64, f64)> {
    let s = &spectrum.samples;
    let mut minima: Vec<(usize, f64)> = (1..s.len().saturating_sub(1))
        .filter(|&i| {
            s[i].reflectivity < s[i - 1].reflectivity && s[i].reflectivity <= s[i + 1].reflectivity
        })
        .map(|i| (i, s[i].reflectivity))
        .collect();
    if minima.len() < 2 {
        return Err(Error::Extraction {
            feature: "rabi_dips",
            reason: format!("found {} local minima, need 2", minima.len()),
        });
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let refine = |i: usize| {
        let (x0, x1, x2) = (s[i - 1].delta, s[i].delta, s[i + 1].delta);
        let (y0, y1, y2) = (s[i - 1].reflectivity, s[i].reflectivity, s[i + 1].reflectivity);
        let p = (x1 - x0) * (y1 - y2);
        let q = (x1 - x2) * (y1 - y0);
        let den = p - q;
        if den.abs() > 0.0 {
            x1 - 0.5 * ((x1 - x0) * p - (x1 - x2) * q) / den
        } else {
            x1
        }
    };
    let a = refine(minima[0].0);
    let b = refine(minima[1].0);
    Ok((a.min(b), a.max(b)))
}

/// `∫₀^W |R(Δ) − R(−Δ)| dΔ` by the trapezoid rule.
pub fn asymmetry(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
    half_width: f64,
    points: usize,
) -> Result<f64> {
    let grid = DetuningGrid::new(0.0, half_width, points)?;
    let h = grid.step();
    let diff = grid
        .values()
        .into_iter()
        .map(|x| {
            let r_pos = reflectivity(cavity, mode.susceptibility(atoms, drive, x)?, x);
            let r_neg = reflectivity(cavity, mode.susceptibility(atoms, drive, -x)?, -x);
            Ok((r_pos - r_neg).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let inner: f64 = diff[1..diff.len() - 1].iter().sum();
    Ok(h * (inner + 0.5 * (diff[0] + diff[diff.len() - 1])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub mode: Mode,
    pub max_transparency: f64,
    pub max_transparency_location_hz: f64,
    pub transparency_at_zero: f64,
    pub hwhm_hz: Option<f64>,
    pub resonance_shift_hz: Option<f64>,
    pub rabi_dips_hz: Option<(f64, f64)>,
    pub method: Vec<String>,
}

/// All features for one parameter set. Transparency, half-width (eit mode)
/// and shift (switch mode) failures are errors; the Rabi dips are reported
/// when the undriven spectrum shows two minima.
pub fn feature_report(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
) -> Result<FeatureReport> {
    let options = ScanOptions::default();
    let peak = extract_max_transparency_with(cavity, atoms, drive, mode, TransparencyAt::Peak, &options)?;
    let at_zero = extract_max_transparency_with(cavity, atoms, drive, mode, TransparencyAt::Resonance, &options)?;
    let mut method = vec![
        "transparency: kappa^2 / |kappa - i delta - i chi|^2, coarse scan then golden-section to 1 Hz".to_string(),
    ];
    let hwhm = if mode == Mode::Eit {
        method.push(
            "hwhm: half-crossing of the transparency between peak and floor at 10 omega_c^2 kappa / g_n^2, bisection to 1 Hz"
                .to_string(),
        );
        Some(extract_hwhm_with(cavity, atoms, drive, &options)?)
    } else {
        None
    };
    let shift = if mode == Mode::Switch {
        method.push("resonance_shift: transparency argmax with minus without switching field".to_string());
        Some(extract_resonance_shift_with(cavity, atoms, drive, &options)?)
    } else {
        None
    };
    let reach = 3.0 * atoms.g_n.max(atoms.gamma).max(cavity.kappa);
    let undriven = simulate_spectrum(
        cavity,
        atoms,
        drive,
        &DetuningGrid::symmetric(reach, 6001)?,
        Mode::TwoLevel,
    )?;
    let dips = match extract_rabi_dips(&undriven) {
        Ok(d) => {
            method.push("rabi_dips: two deepest reflectivity minima of the undriven spectrum, parabolic refinement".to_string());
            Some(d)
        }
        Err(_) => {
            method.push("rabi_dips: undriven spectrum has fewer than two minima".to_string());
            None
        }
    };
    Ok(FeatureReport {
        mode,
        max_transparency: peak.value,
        max_transparency_location_hz: peak.location,
        transparency_at_zero: at_zero.value,
        hwhm_hz: hwhm,
        resonance_shift_hz: shift,
        rabi_dips_hz: dips,
        method,
    })
}

/// Feature reports for many parameter sets, evaluated in parallel; output
/// order follows input order.
pub fn feature_reports(
    sets: &[(CavityParams, AtomParams, DriveParams, Mode)],
) -> Vec<Result<FeatureReport>> {
    sets.par_iter()
        .map(|(c, a, d, m)| feature_report(c, a, d, *m))
        .collect()
}
