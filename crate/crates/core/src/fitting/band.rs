use serde::{Deserialize, Serialize};

use super::{fit, FitProblem, FitResult, FreeParameter, ParamKind};
use crate::error::{Error, Result};
use crate::model::{transparency, AtomParams, CavityParams, DriveParams};
use crate::spectra::{extract_hwhm, extract_resonance_shift, Mode, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// T/T₀ at Δ = 0.
    Transparency,
    Hwhm,
    ResonanceShift,
}

impl Feature {
    pub fn evaluate(self, cavity: &CavityParams, atoms: &AtomParams, drive: &DriveParams, mode: Mode) -> Result<f64> {
        match self {
            Feature::Transparency => {
                let chi = mode.susceptibility(atoms, drive, 0.0)?;
                Ok(transparency(cavity, chi, 0.0))
            }
            Feature::Hwhm => extract_hwhm(cavity, atoms, drive),
            Feature::ResonanceShift => extract_resonance_shift(cavity, atoms, drive),
        }
    }
}

/// Per-spectrum envelope of a feature; `low ≤ central ≤ high` everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub central: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Envelope of `feature` when `param` is moved to `param·(1 ± relative_range)`
/// in every spectrum, the remaining free parameters being refitted.
pub fn sensitivity_band(
    problem: &FitProblem,
    result: &FitResult,
    param: ParamKind,
    relative_range: f64,
    feature: Feature,
) -> Result<Band> {
    if !(0.0..1.0).contains(&relative_range) {
        return Err(Error::InvalidParameter(format!(
            "relative range must be in [0, 1), got {relative_range}"
        )));
    }
    sensitivity_band_factors(
        problem,
        result,
        param,
        &[1.0 - relative_range, 1.0 + relative_range],
        feature,
    )
}

/// As [`sensitivity_band`] for arbitrary positive scale factors.
pub fn sensitivity_band_factors(
    problem: &FitProblem,
    result: &FitResult,
    param: ParamKind,
    factors: &[f64],
    feature: Feature,
) -> Result<Band> {
    if result.parameters.len() != problem.free.len() {
        return Err(Error::InvalidParameter("fit result does not belong to this problem".into()));
    }
    if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::InvalidParameter(format!("scale factor {f} must be positive")));
    }
    let best = result.values();
    let fitted: Vec<Spectrum> = (0..problem.spectra.len())
        .map(|i| {
            let (c, a, d) = problem.parameters_for(i, &best);
            Spectrum {
                cavity: c,
                atoms: a,
                drive: d,
                ..problem.spectra[i].clone()
            }
        })
        .collect();

    let central = features_of(&fitted, feature)?;
    let mut low = central.clone();
    let mut high = central.clone();
    for &factor in factors {
        if factor == 1.0 {
            continue;
        }
        let mut moved = fitted.clone();
        for s in &mut moved {
            let v = param.get(&s.cavity, &s.atoms, &s.drive);
            param.set(&mut s.cavity, &mut s.atoms, &mut s.drive, v * factor);
        }
        let remaining: Vec<FreeParameter> = problem
            .free
            .iter()
            .zip(&best)
            .filter(|(p, _)| p.id.kind != param)
            .map(|(p, &v)| FreeParameter { initial: v, ..*p })
            .collect();
        if !remaining.is_empty() {
            let sub = FitProblem::new(moved.clone(), remaining)?;
            let refit = fit(&sub)?;
            let values = refit.values();
            moved = (0..sub.spectra.len())
                .map(|i| {
                    let (c, a, d) = sub.parameters_for(i, &values);
                    Spectrum {
                        cavity: c,
                        atoms: a,
                        drive: d,
                        ..sub.spectra[i].clone()
                    }
                })
                .collect();
        }
        for (k, v) in features_of(&moved, feature)?.into_iter().enumerate() {
            low[k] = low[k].min(v);
            high[k] = high[k].max(v);
        }
    }
    Ok(Band { central, low, high })
}

fn features_of(spectra: &[Spectrum], feature: Feature) -> Result<Vec<f64>> {
    spectra
        .iter()
        .enumerate()
        .map(|(i, s)| {
            feature
                .evaluate(&s.cavity, &s.atoms, &s.drive, s.mode)
                .map_err(|e| e.in_spectrum(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::ParamId;
    use super::*;
    use crate::spectra::tests::reference_cavity;
    use crate::spectra::{simulate_spectrum, DetuningGrid};

    fn fitted_eit() -> (FitProblem, FitResult) {
        let a = AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap();
        let s = simulate_spectrum(
            &reference_cavity(),
            &a,
            &DriveParams::control_only(4.1e6),
            &DetuningGrid::symmetric(2e5, 401).unwrap(),
            Mode::Eit,
        )
        .unwrap();
        let p = FitProblem::new(
            vec![s],
            vec![FreeParameter::new(ParamId::shared(ParamKind::Gamma0), 900.0, 1.0, 1e5)],
        )
        .unwrap();
        let r = fit(&p).unwrap();
        (p, r)
    }

    #[test]
    fn zero_range_is_degenerate() {
        let (p, r) = fitted_eit();
        let b = sensitivity_band(&p, &r, ParamKind::OmegaC, 0.0, Feature::Transparency).unwrap();
        assert_eq!(b.low, b.central);
        assert_eq!(b.high, b.central);
    }

    #[test]
    fn decoherence_range_band() {
        let (p, r) = fitted_eit();
        let b = sensitivity_band_factors(&p, &r, ParamKind::Gamma0, &[0.5, 1100.0 / 600.0], Feature::Transparency)
            .unwrap();
        assert!((b.low[0] - 0.8743).abs() < 0.01, "{b:?}");
        assert!((b.high[0] - 0.9559).abs() < 0.01, "{b:?}");
        assert!(b.low[0] <= b.central[0] && b.central[0] <= b.high[0]);
    }

    #[test]
    fn control_band_with_refit_contains_central() {
        let (p, r) = fitted_eit();
        let b = sensitivity_band(&p, &r, ParamKind::OmegaC, 0.05, Feature::Hwhm).unwrap();
        assert!(b.low[0] <= b.central[0] && b.central[0] <= b.high[0], "{b:?}");
        assert!(b.high[0] > b.low[0]);
        assert!(sensitivity_band(&p, &r, ParamKind::OmegaC, -0.1, Feature::Hwhm).is_err());
    }
}
