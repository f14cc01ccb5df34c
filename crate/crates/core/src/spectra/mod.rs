//! Synthetic probe reflectivity spectra and the features extracted from them.

mod csv;
mod features;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::csv::{read_spectrum, write_spectrum};
pub use features::{
    asymmetry, extract_hwhm, extract_max_transparency, extract_max_transparency_with,
    extract_hwhm_with, extract_rabi_dips, extract_resonance_shift, extract_resonance_shift_with,
    feature_report, feature_reports, FeatureReport,
    ScanOptions, TransparencyAt, TransparencyPeak,
};

use crate::error::{Error, Result};
use crate::model::{
    chi_eit, chi_switch, chi_two_level, reflectivity, AtomParams, CavityParams, DriveParams,
    Susceptibility,
};

/// Which susceptibility fills the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Empty cavity, χ = 0.
    Bare,
    /// Undriven medium.
    TwoLevel,
    /// Probe and control.
    Eit,
    /// Probe, control and switching field.
    Switch,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bare => "bare",
            Mode::TwoLevel => "two_level",
            Mode::Eit => "eit",
            Mode::Switch => "switch",
        }
    }

    pub fn susceptibility(
        self,
        atoms: &AtomParams,
        drive: &DriveParams,
        delta: f64,
    ) -> Result<Susceptibility> {
        match self {
            Mode::Bare => Ok(Susceptibility::ZERO),
            Mode::TwoLevel => Ok(chi_two_level(atoms, delta)),
            Mode::Eit => chi_eit(atoms, drive.omega_c, delta),
            Mode::Switch => chi_switch(atoms, drive, delta),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bare" => Ok(Mode::Bare),
            "two_level" => Ok(Mode::TwoLevel),
            "eit" => Ok(Mode::Eit),
            "switch" => Ok(Mode::Switch),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

/// Uniform detuning grid from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl DetuningGrid {
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self> {
        let g = Self { start, stop, points };
        g.validate()?;
        Ok(g)
    }

    pub fn symmetric(half_width: f64, points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.stop > self.start) {
            return Err(Error::InvalidParameter(format!(
                "grid needs start < stop, got [{}, {}]",
                self.start, self.stop
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub delta: f64,
    pub reflectivity: f64,
    /// One-sigma uncertainty of the reflectivity; 0 means unknown.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub mode: Mode,
    pub cavity: CavityParams,
    pub atoms: AtomParams,
    pub drive: DriveParams,
    pub samples: Vec<Sample>,
    /// Number of noisy samples clamped into [0, 1].
    #[serde(default)]
    pub clamped: usize,
}

impl Spectrum {
    pub fn new(
        mode: Mode,
        cavity: CavityParams,
        atoms: AtomParams,
        drive: DriveParams,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let s = Self {
            mode,
            cavity,
            atoms,
            drive,
            samples,
            clamped: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.atoms.validate()?;
        self.drive.validate()?;
        for w in self.samples.windows(2) {
            if w[1].delta.partial_cmp(&w[0].delta) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidParameter(format!(
                    "spectrum detunings must be strictly increasing ({} then {})",
                    w[0].delta, w[1].delta
                )));
            }
        }
        for s in &self.samples {
            if !(s.sigma >= 0.0 && s.sigma.is_finite()) {
                return Err(Error::InvalidParameter(format!("negative sigma at delta = {}", s.delta)));
            }
            if !(s.reflectivity.is_finite() && s.delta.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite sample at delta = {}", s.delta)));
            }
        }
        Ok(())
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.delta).collect()
    }

    pub fn reflectivities(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reflectivity).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Model reflectivity at each detuning, in input order.
pub fn model_reflectivity(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    mode: Mode,
    deltas: &[f64],
) -> Result<Vec<f64>> {
    deltas
        .par_iter()
        .map(|&delta| {
            mode.susceptibility(atoms, drive, delta)
                .map(|chi| reflectivity(cavity, chi, delta))
                .map_err(|e| e.at_detuning(delta))
        })
        .collect()
}

/// Noise-free reflectivity spectrum on a detuning grid.
pub fn simulate_spectrum(
    cavity: &CavityParams,
    atoms: &AtomParams,
    drive: &DriveParams,
    grid: &DetuningGrid,
    mode: Mode,
) -> Result<Spectrum> {
    cavity.validate()?;
    atoms.validate()?;
    drive.validate()?;
    grid.validate()?;
    let deltas = grid.values();
    let r = model_reflectivity(cavity, atoms, drive, mode, &deltas)?;
    let samples = deltas
        .into_iter()
        .zip(r)
        .map(|(delta, reflectivity)| Sample {
            delta,
            reflectivity,
            sigma: 0.0,
        })
        .collect();
    Spectrum::new(mode, *cavity, *atoms, *drive, samples)
}

/// Adds independent Gaussian noise of standard deviation `sigma` to every
/// reflectivity, clamping into [0, 1].
pub fn add_noise(spectrum: &Spectrum, sigma: f64, seed: u64) -> Result<Spectrum> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut out = spectrum.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in &mut out.samples {
        let noisy = s.reflectivity + normal.sample(&mut rng);
        let clamped = noisy.clamp(0.0, 1.0);
        if clamped != noisy {
            out.clamped += 1;
        }
        s.reflectivity = clamped;
        s.sigma = sigma;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{LossBudget, DEFAULT_ROUND_TRIP_TIME};

    pub(crate) fn reference_cavity() -> CavityParams {
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
    fn grid_values() {
        let g = DetuningGrid::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(DetuningGrid::new(1.0, 1.0, 5).is_err());
        assert!(DetuningGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Bare, Mode::TwoLevel, Mode::Eit, Mode::Switch] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("dark".parse::<Mode>().is_err());
    }

    #[test]
    fn bare_spectrum_is_lorentzian_with_width_kappa() {
        let c = reference_cavity();
        let a = AtomParams::new(13.8e6, 12.6e6, 600.0, 11e6).unwrap();
        let grid = DetuningGrid::symmetric(20e6, 40001).unwrap();
        let s = simulate_spectrum(&c, &a, &DriveParams::default(), &grid, Mode::Bare).unwrap();
        let dip: Vec<f64> = s.samples.iter().map(|p| 1.0 - p.reflectivity).collect();
        let (imax, &top) = dip
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        assert_eq!(s.samples[imax].delta, 0.0);
        // first crossing of half depth on the positive side, interpolated
        let half = 0.5 * top;
        let j = (imax..dip.len()).find(|&j| dip[j] < half).unwrap();
        let (x0, x1) = (s.samples[j - 1].delta, s.samples[j].delta);
        let cross = x0 + (dip[j - 1] - half) / (dip[j - 1] - dip[j]) * (x1 - x0);
        assert!((cross / c.kappa - 1.0).abs() < 5e-3, "{cross}");
    }

    #[test]
    fn synthetic_spectra_within_bounds() {
        let c = reference_cavity();
        let a = AtomParams::new(17e6, 12.6e6, 600.0, 11e6).unwrap();
        let d = DriveParams::new(4.2e6, 42e6, -4.3e9).unwrap();
        let grid = DetuningGrid::symmetric(40e6, 4001).unwrap();
        for mode in [Mode::Bare, Mode::TwoLevel, Mode::Eit, Mode::Switch] {
            let s = simulate_spectrum(&c, &a, &d, &grid, mode).unwrap();
            assert_eq!(s.len(), 4001);
            assert!(s.samples.iter().all(|p| (0.0..=1.0).contains(&p.reflectivity)));
        }
    }

    #[test]
    fn domain_errors_name_the_detuning() {
        let c = reference_cavity();
        let mut a = AtomParams::new(17e6, 12.6e6, 600.0, 11e6).unwrap();
        a.gamma0 = 0.0;
        let err = model_reflectivity(&c, &a, &DriveParams::control_only(1e6), Mode::Eit, &[250.0])
            .unwrap_err();
        assert!(err.to_string().contains("250"), "{err}");
        assert!(err.is_model_error());
    }

    #[test]
    fn noise_is_seeded_and_zero_sigma_is_identity() {
        let c = reference_cavity();
        let a = AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap();
        let grid = DetuningGrid::symmetric(2e5, 401).unwrap();
        let s = simulate_spectrum(&c, &a, &DriveParams::control_only(4.1e6), &grid, Mode::Eit).unwrap();
        assert_eq!(add_noise(&s, 0.0, 9).unwrap(), s);
        let n1 = add_noise(&s, 0.02, 7).unwrap();
        let n2 = add_noise(&s, 0.02, 7).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, add_noise(&s, 0.02, 8).unwrap());
        assert!(n1.samples.iter().all(|p| p.sigma == 0.02));
        assert!(add_noise(&s, -1.0, 0).is_err());
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let c = reference_cavity();
        let a = AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap();
        let grid = DetuningGrid::symmetric(2e6, 10_000).unwrap();
        let s = simulate_spectrum(&c, &a, &DriveParams::control_only(4.1e6), &grid, Mode::Eit).unwrap();
        let sigma = 0.01;
        let n = add_noise(&s, sigma, 1234).unwrap();
        assert_eq!(n.clamped, 0);
        let diffs: Vec<f64> = n
            .samples
            .iter()
            .zip(&s.samples)
            .map(|(x, y)| x.reflectivity - y.reflectivity)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn heavy_noise_records_clamps() {
        let c = reference_cavity();
        let a = AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap();
        let grid = DetuningGrid::symmetric(2e7, 1000).unwrap();
        let s = simulate_spectrum(&c, &a, &DriveParams::default(), &grid, Mode::Bare).unwrap();
        let n = add_noise(&s, 0.5, 3).unwrap();
        assert!(n.clamped > 0);
        assert!(n.samples.iter().all(|p| (0.0..=1.0).contains(&p.reflectivity)));
    }
}
