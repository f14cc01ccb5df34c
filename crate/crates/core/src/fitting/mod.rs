//! Weighted nonlinear least squares of model reflectivity spectra.
//!
//! A [`FitProblem`] holds one or more spectra; every parameter not listed as
//! free keeps the value recorded in the spectrum it belongs to. Free
//! parameters are either shared by all spectra or bound to one spectrum.

mod band;
mod lm;
mod selftest;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use band::{sensitivity_band, sensitivity_band_factors, Band, Feature};
pub use lm::{fit, fit_global, fit_with, FitResult, ParameterEstimate, Termination, MAX_ITERATIONS};
pub use selftest::{fit_selftest, SelftestEntry, SelftestReport};

use crate::error::{Error, Result};
use crate::model::{AtomParams, CavityParams, DriveParams};
use crate::spectra::{model_reflectivity, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    #[serde(rename = "g_n")]
    GN,
    #[serde(rename = "omega_c")]
    OmegaC,
    #[serde(rename = "gamma0")]
    Gamma0,
    /// Total field decay; the input-coupling fraction κ_in/κ stays fixed.
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "omega_s")]
    OmegaS,
    #[serde(rename = "delta_s")]
    DeltaS,
}

impl ParamKind {
    pub const ALL: [ParamKind; 7] = [
        ParamKind::GN,
        ParamKind::OmegaC,
        ParamKind::Gamma0,
        ParamKind::Kappa,
        ParamKind::Gamma,
        ParamKind::OmegaS,
        ParamKind::DeltaS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::GN => "g_n",
            ParamKind::OmegaC => "omega_c",
            ParamKind::Gamma0 => "gamma0",
            ParamKind::Kappa => "kappa",
            ParamKind::Gamma => "gamma",
            ParamKind::OmegaS => "omega_s",
            ParamKind::DeltaS => "delta_s",
        }
    }

    /// Rates are fitted in log space; the switching detuning may take
    /// either sign and is fitted linearly.
    pub fn is_positive(self) -> bool {
        self != ParamKind::DeltaS
    }

    pub fn get(self, cavity: &CavityParams, atoms: &AtomParams, drive: &DriveParams) -> f64 {
        match self {
            ParamKind::GN => atoms.g_n,
            ParamKind::OmegaC => drive.omega_c,
            ParamKind::Gamma0 => atoms.gamma0,
            ParamKind::Kappa => cavity.kappa,
            ParamKind::Gamma => atoms.gamma,
            ParamKind::OmegaS => drive.omega_s,
            ParamKind::DeltaS => drive.delta_s,
        }
    }

    pub fn set(self, cavity: &mut CavityParams, atoms: &mut AtomParams, drive: &mut DriveParams, value: f64) {
        match self {
            ParamKind::GN => atoms.g_n = value,
            ParamKind::OmegaC => drive.omega_c = value,
            ParamKind::Gamma0 => atoms.gamma0 = value,
            ParamKind::Kappa => {
                let fraction = cavity.kappa_in / cavity.kappa;
                cavity.kappa = value;
                cavity.kappa_in = fraction * value;
            }
            ParamKind::Gamma => atoms.gamma = value,
            ParamKind::OmegaS => drive.omega_s = value,
            ParamKind::DeltaS => drive.delta_s = value,
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown fit parameter '{s}'")))
    }
}

/// A parameter shared by every spectrum (`spectrum: None`) or belonging to
/// a single spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub kind: ParamKind,
    pub spectrum: Option<usize>,
}

impl ParamId {
    pub fn shared(kind: ParamKind) -> Self {
        Self { kind, spectrum: None }
    }

    pub fn per_spectrum(kind: ParamKind, index: usize) -> Self {
        Self {
            kind,
            spectrum: Some(index),
        }
    }

    fn applies_to(&self, index: usize) -> bool {
        self.spectrum.is_none_or(|i| i == index)
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spectrum {
            None => write!(f, "{}", self.kind),
            Some(i) => write!(f, "{}[{}]", self.kind, i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub id: ParamId,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParameter {
    pub fn new(id: ParamId, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            id,
            initial,
            lower,
            upper,
        }
    }

    fn encode(&self, value: f64) -> f64 {
        if self.id.kind.is_positive() {
            value.ln()
        } else {
            value
        }
    }

    fn decode(&self, x: f64) -> f64 {
        if self.id.kind.is_positive() {
            x.exp()
        } else {
            x
        }
    }

    fn internal_bounds(&self) -> (f64, f64) {
        (self.encode(self.lower), self.encode(self.upper))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    spectra: Vec<Spectrum>,
    free: Vec<FreeParameter>,
}

impl FitProblem {
    pub fn new(spectra: Vec<Spectrum>, free: Vec<FreeParameter>) -> Result<Self> {
        if spectra.is_empty() {
            return Err(Error::InvalidParameter("fit problem has no spectra".into()));
        }
        for (i, s) in spectra.iter().enumerate() {
            s.validate().map_err(|e| e.in_spectrum(i))?;
            if s.is_empty() {
                return Err(Error::InvalidParameter(format!("spectrum {i} has no samples")));
            }
        }
        if free.is_empty() {
            return Err(Error::InvalidParameter("fit problem has no free parameters".into()));
        }
        for (k, p) in free.iter().enumerate() {
            let name = p.id;
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return Err(Error::InvalidParameter(format!(
                    "{name}: bounds [{}, {}] must be finite with lower < upper",
                    p.lower, p.upper
                )));
            }
            if p.id.kind.is_positive() && p.lower <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name}: lower bound must be > 0")));
            }
            if !(p.initial >= p.lower && p.initial <= p.upper) {
                return Err(Error::InvalidParameter(format!(
                    "{name}: initial value {} outside [{}, {}]",
                    p.initial, p.lower, p.upper
                )));
            }
            if let Some(i) = p.id.spectrum {
                if i >= spectra.len() {
                    return Err(Error::InvalidParameter(format!("{name}: no spectrum {i}")));
                }
            }
            let clash = free[..k].iter().find(|q| {
                q.id.kind == p.id.kind
                    && (q.id.spectrum.is_none() || p.id.spectrum.is_none() || q.id.spectrum == p.id.spectrum)
            });
            if let Some(q) = clash {
                return Err(Error::InvalidParameter(format!("{name} conflicts with {}", q.id)));
            }
        }
        Ok(Self { spectra, free })
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn free(&self) -> &[FreeParameter] {
        &self.free
    }

    pub fn initial(&self) -> Vec<f64> {
        self.free.iter().map(|p| p.initial).collect()
    }

    pub fn sample_count(&self) -> usize {
        self.spectra.iter().map(Spectrum::len).sum()
    }

    /// Model parameters of spectrum `index` with the free values `params`
    /// substituted.
    pub fn parameters_for(&self, index: usize, params: &[f64]) -> (CavityParams, AtomParams, DriveParams) {
        let s = &self.spectra[index];
        let (mut c, mut a, mut d) = (s.cavity, s.atoms, s.drive);
        for (p, &v) in self.free.iter().zip(params) {
            if p.id.applies_to(index) {
                p.id.kind.set(&mut c, &mut a, &mut d, v);
            }
        }
        (c, a, d)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.free.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameter values, got {}",
                self.free.len(),
                params.len()
            )));
        }
        for (p, &v) in self.free.iter().zip(params) {
            if !(v >= p.lower && v <= p.upper) {
                return Err(Error::InvalidParameter(format!(
                    "{} = {v} outside [{}, {}]",
                    p.id, p.lower, p.upper
                )));
            }
        }
        Ok(())
    }

    fn spectrum_residuals(&self, index: usize, params: &[f64]) -> Result<Vec<f64>> {
        let s = &self.spectra[index];
        let (c, a, d) = self.parameters_for(index, params);
        let model = model_reflectivity(&c, &a, &d, s.mode, &s.deltas()).map_err(|e| e.in_spectrum(index))?;
        Ok(model
            .into_iter()
            .zip(&s.samples)
            .map(|(m, sample)| {
                let w = if sample.sigma > 0.0 { sample.sigma } else { 1.0 };
                (m - sample.reflectivity) / w
            })
            .collect())
    }

    fn residual_blocks(&self, params: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.spectra.len())
            .into_par_iter()
            .map(|i| self.spectrum_residuals(i, params))
            .collect()
    }

    fn encode(&self, params: &[f64]) -> Vec<f64> {
        self.free.iter().zip(params).map(|(p, &v)| p.encode(v)).collect()
    }

    /// Maps internal coordinates back to parameter values, projecting onto
    /// the bounds.
    fn decode(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(x)
            .map(|(p, &xi)| p.decode(xi).clamp(p.lower, p.upper))
            .collect()
    }

    fn internal_residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.residual_blocks(&self.decode(x))?.concat())
    }

    fn internal_step(&self, k: usize, x: f64) -> f64 {
        if self.free[k].id.kind.is_positive() {
            1e-6
        } else {
            1e-6 * x.abs().max(1.0)
        }
    }

    /// Forward-difference Jacobian in internal coordinates; steps that would
    /// leave the bounds are taken backwards.
    fn internal_jacobian(&self, x: &[f64], r0: &[f64]) -> Result<DMatrix<f64>> {
        let columns = (0..x.len())
            .into_par_iter()
            .map(|k| {
                let (_, hi) = self.free[k].internal_bounds();
                let mut h = self.internal_step(k, x[k]);
                if x[k] + h > hi {
                    h = -h;
                }
                let mut xp = x.to_vec();
                xp[k] += h;
                let rp = self.internal_residuals(&xp)?;
                Ok(rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(r0.len(), x.len(), |i, k| columns[k][i]))
    }
}

/// Concatenated `(model − data) / sigma` over all spectra and samples, with
/// sigma taken as 1 where the data carry none.
pub fn residuals(problem: &FitProblem, params: &[f64]) -> Result<Vec<f64>> {
    problem.check_params(params)?;
    Ok(problem.residual_blocks(params)?.concat())
}

/// Jacobian of [`residuals`] by forward differences. Columns are
/// derivatives with respect to `ln p` for rates and `p` for `delta_s`.
pub fn jacobian(problem: &FitProblem, params: &[f64]) -> Result<DMatrix<f64>> {
    problem.check_params(params)?;
    let x = problem.encode(params);
    let r0 = problem.internal_residuals(&x)?;
    problem.internal_jacobian(&x, &r0)
}
