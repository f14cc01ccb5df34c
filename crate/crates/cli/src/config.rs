//! Run configuration: one JSON document, optionally patched by `--set`
//! overrides, with every frequency in Hz (or MHz under `--units mhz`).

use std::path::Path;

use cavity_eit::fitting::ParamKind;
use cavity_eit::model::{AtomParams, CavityParams, DriveParams, LossBudget, DEFAULT_ROUND_TRIP_TIME};
use cavity_eit::oracle::QuadratureConfig;
use cavity_eit::spectra::{DetuningGrid, Mode};
use clap::ValueEnum;
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Hz,
    Mhz,
}

impl Units {
    fn factor(self) -> f64 {
        match self {
            Units::Hz => 1.0,
            Units::Mhz => 1e6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub kappa: f64,
    /// Derived from the loss budget when absent.
    pub kappa_in: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub loss_budget: Option<LossBudget>,
}

fn default_tau() -> f64 {
    DEFAULT_ROUND_TRIP_TIME
}

impl CavityConfig {
    pub fn build(&self) -> Result<CavityParams, CliError> {
        let c = match (self.kappa_in, self.loss_budget) {
            (Some(kappa_in), budget) => CavityParams {
                kappa: self.kappa,
                kappa_in,
                tau: self.tau,
                loss_budget: budget,
            },
            (None, Some(budget)) => CavityParams::from_loss_budget(self.kappa, self.tau, budget).map_err(config_err)?,
            (None, None) => return Err(CliError::Config("cavity needs kappa_in or loss_budget".into())),
        };
        c.validate().map_err(config_err)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeConfig {
    pub name: String,
    pub initial: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    #[serde(default)]
    pub per_spectrum: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub free: Vec<FreeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: String,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn kind(&self) -> Result<ParamKind, CliError> {
        self.variable.parse().map_err(config_err)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cavity: Option<CavityConfig>,
    pub atoms: Option<AtomParams>,
    pub drive: Option<DriveParams>,
    pub grid: Option<DetuningGrid>,
    pub mode: Option<Mode>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub fit: Option<FitConfig>,
    pub sweep: Option<SweepConfig>,
    pub quadrature: Option<QuadratureConfig>,
}

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String], units: Units) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        scale_frequencies(&mut doc, units.factor());
        let cfg: RunConfig = serde_json::from_value(doc).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(c) = &self.cavity {
            c.build()?;
        }
        if let Some(a) = &self.atoms {
            a.validate().map_err(config_err)?;
        }
        if let Some(d) = &self.drive {
            d.validate().map_err(config_err)?;
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(config_err)?;
        }
        if let Some(q) = &self.quadrature {
            q.validate().map_err(config_err)?;
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(CliError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let Some(s) = &self.sweep {
            s.kind()?;
            if s.values.is_empty() {
                return Err(CliError::Config("sweep.values is empty".into()));
            }
        }
        Ok(())
    }

    pub fn cavity(&self) -> Result<CavityParams, CliError> {
        self.cavity.as_ref().ok_or_else(|| missing("cavity"))?.build()
    }

    pub fn atoms(&self) -> Result<AtomParams, CliError> {
        self.atoms.ok_or_else(|| missing("atoms"))
    }

    pub fn drive(&self) -> DriveParams {
        self.drive.unwrap_or_default()
    }

    pub fn grid(&self) -> Result<DetuningGrid, CliError> {
        self.grid.ok_or_else(|| missing("grid"))
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        self.mode.ok_or_else(|| missing("mode"))
    }
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("config is missing '{key}'"))
}

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a
/// plain string.
fn apply_override(doc: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{item}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override key '{path}'")));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override '{path}' goes through a non-object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override '{path}' goes through a non-object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

const FREQUENCY_FIELDS: &[(&str, &[&str])] = &[
    ("cavity", &["kappa", "kappa_in"]),
    ("atoms", &["g_n", "gamma", "gamma0", "gamma_s"]),
    ("drive", &["omega_c", "omega_s", "delta_s"]),
    ("grid", &["start", "stop"]),
    ("quadrature", &["abs_tol"]),
];

fn scale_number(v: &mut Value, factor: f64) {
    if let Some(x) = v.as_f64() {
        if let Some(n) = serde_json::Number::from_f64(x * factor) {
            *v = Value::Number(n);
        }
    }
}

fn scale_frequencies(doc: &mut Value, factor: f64) {
    if factor == 1.0 {
        return;
    }
    for (block, fields) in FREQUENCY_FIELDS {
        if let Some(obj) = doc.get_mut(*block).and_then(Value::as_object_mut) {
            for f in *fields {
                if let Some(v) = obj.get_mut(*f) {
                    scale_number(v, factor);
                }
            }
        }
    }
    if let Some(free) = doc.pointer_mut("/fit/free").and_then(Value::as_array_mut) {
        for p in free {
            for f in ["initial", "lower", "upper"] {
                if let Some(v) = p.get_mut(f) {
                    scale_number(v, factor);
                }
            }
        }
    }
    if let Some(values) = doc.pointer_mut("/sweep/values").and_then(Value::as_array_mut) {
        values.iter_mut().for_each(|v| scale_number(v, factor));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_and_replace() {
        let mut doc = serde_json::json!({"atoms": {"g_n": 1.0}});
        apply_override(&mut doc, "atoms.g_n=2.5").unwrap();
        apply_override(&mut doc, "mode=eit").unwrap();
        apply_override(&mut doc, "drive.omega_c=4e6").unwrap();
        assert_eq!(doc["atoms"]["g_n"], 2.5);
        assert_eq!(doc["mode"], "eit");
        assert_eq!(doc["drive"]["omega_c"], 4e6);
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "mode.x=1").is_err());
    }

    #[test]
    fn mhz_scales_only_frequencies() {
        let mut doc = serde_json::json!({
            "cavity": {"kappa": 2.2, "tau": 1e-10},
            "atoms": {"g_n": 13.5, "gamma": 12.6, "gamma0": 0.0006, "gamma_s": 11},
            "grid": {"start": -1, "stop": 1, "points": 11},
            "noise_sigma": 0.01,
            "sweep": {"variable": "omega_c", "values": [1.3, 8.6]}
        });
        scale_frequencies(&mut doc, 1e6);
        assert_eq!(doc["cavity"]["kappa"], 2.2e6);
        assert_eq!(doc["cavity"]["tau"], 1e-10);
        assert_eq!(doc["atoms"]["gamma_s"], 11e6);
        assert_eq!(doc["grid"]["points"], 11);
        assert_eq!(doc["noise_sigma"], 0.01);
        assert_eq!(doc["sweep"]["values"][1], 8.6e6);
    }
}
