//! Spectrum CSV: one `#` header line carrying the mode and the parameter
//! snapshot, a column line, then `delta_hz,reflectivity,sigma` rows.
//! Numbers use the shortest representation that parses back exactly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{Mode, Sample, Spectrum};
use crate::error::{Error, Result};
use crate::model::{AtomParams, CavityParams, DriveParams, DEFAULT_ROUND_TRIP_TIME};

const COLUMNS: &str = "delta_hz,reflectivity,sigma";

const HEADER_KEYS: [&str; 10] = [
    "mode", "kappa", "kappa_in", "g_n", "gamma", "gamma0", "gamma_s", "omega_c", "omega_s",
    "delta_s",
];

pub fn write_spectrum<W: Write>(mut w: W, spectrum: &Spectrum) -> Result<()> {
    let c = &spectrum.cavity;
    let a = &spectrum.atoms;
    let d = &spectrum.drive;
    writeln!(
        w,
        "# mode={} kappa={} kappa_in={} g_n={} gamma={} gamma0={} gamma_s={} omega_c={} omega_s={} delta_s={}",
        spectrum.mode, c.kappa, c.kappa_in, a.g_n, a.gamma, a.gamma0, a.gamma_s, d.omega_c, d.omega_s, d.delta_s
    )?;
    writeln!(w, "{COLUMNS}")?;
    for s in &spectrum.samples {
        writeln!(w, "{},{},{}", s.delta, s.reflectivity, s.sigma)?;
    }
    Ok(())
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} '{field}'")))
}

/// Reads a spectrum written by [`write_spectrum`]. The round-trip time is not
/// part of the format and is set to [`DEFAULT_ROUND_TRIP_TIME`].
pub fn read_spectrum<R: BufRead>(r: R) -> Result<Spectrum> {
    let mut header: Option<HashMap<String, String>> = None;
    let mut samples = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if header.is_none() {
                let mut map = HashMap::new();
                for tok in rest.split_whitespace() {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("line {lineno}: bad header token '{tok}'")))?;
                    map.insert(k.to_string(), v.to_string());
                }
                header = Some(map);
            }
            continue;
        }
        if trimmed == COLUMNS {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected 3 fields, found {}",
                fields.len()
            )));
        }
        samples.push(Sample {
            delta: parse_f64(fields[0], "delta_hz", lineno)?,
            reflectivity: parse_f64(fields[1], "reflectivity", lineno)?,
            sigma: parse_f64(fields[2], "sigma", lineno)?,
        });
    }

    let header = header.ok_or_else(|| Error::Parse("missing '# mode=...' header line".into()))?;
    for key in HEADER_KEYS {
        if !header.contains_key(key) {
            return Err(Error::Parse(format!("header is missing '{key}'")));
        }
    }
    if let Some(extra) = header.keys().find(|k| !HEADER_KEYS.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown header key '{extra}'")));
    }
    if samples.is_empty() {
        return Err(Error::Parse("spectrum has no samples".into()));
    }
    let num = |k: &str| parse_f64(&header[k], k, 1);
    let mode: Mode = header["mode"].parse()?;
    let cavity = CavityParams {
        kappa: num("kappa")?,
        kappa_in: num("kappa_in")?,
        tau: DEFAULT_ROUND_TRIP_TIME,
        loss_budget: None,
    };
    let atoms = AtomParams {
        g_n: num("g_n")?,
        gamma: num("gamma")?,
        gamma0: num("gamma0")?,
        gamma_s: num("gamma_s")?,
    };
    let drive = DriveParams {
        omega_c: num("omega_c")?,
        omega_s: num("omega_s")?,
        delta_s: num("delta_s")?,
    };
    Spectrum::new(mode, cavity, atoms, drive, samples)
}
