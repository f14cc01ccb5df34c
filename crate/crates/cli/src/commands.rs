use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cavity_eit::fitting::{self, fit_global, fit_selftest, FitProblem, FreeParameter, ParamId, ParamKind};
use cavity_eit::model::chi_switch;
use cavity_eit::oracle::{oracle_report, oracle_report_against, QuadratureConfig};
use cavity_eit::spectra::{
    add_noise, feature_report, feature_reports, read_spectrum, simulate_spectrum, write_spectrum, Mode, Spectrum,
};
use tempfile::NamedTempFile;

use crate::config::{config_err, FitConfig, RunConfig};
use crate::plot::{render_dat, render_svg, Series};
use crate::{CliError, Common};

const ORACLE_TOLERANCE: f64 = 1e-6;

fn load(c: &Common) -> Result<RunConfig, CliError> {
    RunConfig::load(c.config.as_deref(), &c.overrides(), c.units)
}

/// Writes through a temporary file in the target directory so that a
/// failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_spectrum_file(path: &Path) -> Result<Spectrum, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_spectrum(BufReader::new(file)).map_err(|e| match CliError::from(e) {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let cfg = load(c)?;
    let spectrum = simulate_spectrum(&cfg.cavity()?, &cfg.atoms()?, &cfg.drive(), &cfg.grid()?, cfg.mode()?)?;
    let spectrum = add_noise(&spectrum, cfg.noise_sigma, c.seed)?;
    if spectrum.clamped > 0 {
        eprintln!("cavity-eit: {} noisy samples clamped into [0, 1]", spectrum.clamped);
    }
    let mut buf = Vec::new();
    write_spectrum(&mut buf, &spectrum)?;
    emit(c.out.as_deref(), &String::from_utf8_lossy(&buf))
}

fn require_driven(mode: Mode) -> Result<(), CliError> {
    match mode {
        Mode::Eit | Mode::Switch => Ok(()),
        other => Err(CliError::Config(format!("features need mode eit or switch, got {other}"))),
    }
}

pub fn features(c: &Common, spectrum: Option<&Path>) -> Result<(), CliError> {
    let (cavity, atoms, drive, mode) = match spectrum {
        Some(path) => {
            let s = read_spectrum_file(path)?;
            (s.cavity, s.atoms, s.drive, s.mode)
        }
        None => {
            let cfg = load(c)?;
            (cfg.cavity()?, cfg.atoms()?, cfg.drive(), cfg.mode()?)
        }
    };
    require_driven(mode)?;
    let report = feature_report(&cavity, &atoms, &drive, mode)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(config_err)?;
    text.push('\n');
    emit(c.out.as_deref(), &text)
}

fn free_parameters(cfg: &FitConfig, spectra: &[Spectrum]) -> Result<Vec<FreeParameter>, CliError> {
    if cfg.free.is_empty() {
        return Err(CliError::Config("fit.free lists no parameters".into()));
    }
    let mut out = Vec::new();
    for p in &cfg.free {
        let kind: ParamKind = p.name.parse().map_err(config_err)?;
        let ids: Vec<(ParamId, &Spectrum)> = if p.per_spectrum {
            spectra
                .iter()
                .enumerate()
                .map(|(i, s)| (ParamId::per_spectrum(kind, i), s))
                .collect()
        } else {
            vec![(ParamId::shared(kind), &spectra[0])]
        };
        for (id, s) in ids {
            let initial = p.initial.unwrap_or_else(|| kind.get(&s.cavity, &s.atoms, &s.drive));
            let (lower, upper) = if kind.is_positive() {
                if initial <= 0.0 && (p.lower.is_none() || p.upper.is_none()) {
                    return Err(CliError::Config(format!("{id}: give an initial value > 0 or explicit bounds")));
                }
                (p.lower.unwrap_or(initial / 100.0), p.upper.unwrap_or(initial * 100.0))
            } else {
                let span = 10.0 * initial.abs().max(1.0);
                (p.lower.unwrap_or(initial - span), p.upper.unwrap_or(initial + span))
            };
            out.push(FreeParameter::new(id, initial, lower, upper));
        }
    }
    Ok(out)
}

pub fn fit(c: &Common, data: &[PathBuf], global: bool) -> Result<(), CliError> {
    if data.is_empty() {
        return Err(CliError::Config("no data files given".into()));
    }
    let cfg = load(c)?;
    let spectra = data.iter().map(|p| read_spectrum_file(p)).collect::<Result<Vec<_>, _>>()?;
    let free = free_parameters(&cfg.fit.clone().unwrap_or_default(), &spectra)?;
    let problem = FitProblem::new(spectra, free)?;
    let result = if global { fit_global(&problem)? } else { fitting::fit(&problem)? };
    let mut text = result.to_json()?;
    text.push('\n');
    emit(c.out.as_deref(), &text)?;
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "fit did not converge after {} iterations",
            result.iterations
        )));
    }
    Ok(())
}

pub fn oracle_check(c: &Common, corrupt: bool) -> Result<(), CliError> {
    let cfg = load(c)?;
    let atoms = cfg.atoms()?;
    let drive = cfg.drive();
    let deltas = cfg.grid()?.values();
    let quad = cfg.quadrature.unwrap_or_else(|| QuadratureConfig::for_atoms(&atoms));
    let report = if corrupt {
        oracle_report_against(&atoms, &drive, &deltas, &quad, |delta| {
            Ok(chi_switch(&atoms, &drive, delta)?.0 * (1.0 + 1e-3))
        })?
    } else {
        oracle_report(&atoms, &drive, &deltas, &quad)?
    };
    emit(c.out.as_deref(), &report.to_csv())?;
    let worst = report.max_rel_err();
    let verdict = if worst <= ORACLE_TOLERANCE { "PASS" } else { "FAIL" };
    let summary = format!(
        "oracle-check: {verdict} points={} max_rel_err={worst:e} tolerance={ORACLE_TOLERANCE:e}",
        report.rows.len()
    );
    if c.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    if worst > ORACLE_TOLERANCE {
        return Err(CliError::OracleFailed(summary));
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep(c: &Common) -> Result<(), CliError> {
    let cfg = load(c)?;
    let sweep = cfg.sweep.clone().ok_or_else(|| CliError::Config("config is missing 'sweep'".into()))?;
    let kind = sweep.kind()?;
    let mode = cfg.mode()?;
    require_driven(mode)?;
    let (cavity, atoms, drive) = (cfg.cavity()?, cfg.atoms()?, cfg.drive());
    let sets: Vec<_> = sweep
        .values
        .iter()
        .map(|&v| {
            let (mut cv, mut a, mut d) = (cavity, atoms, drive);
            kind.set(&mut cv, &mut a, &mut d, v);
            (cv, a, d, mode)
        })
        .collect();
    for (cv, a, d, _) in &sets {
        cv.validate()?;
        a.validate()?;
        d.validate()?;
    }
    let mut text = format!(
        "# sweep={kind} mode={mode}\nvalue_hz,max_transparency,peak_location_hz,transparency_at_zero,hwhm_hz,resonance_shift_hz\n"
    );
    for (value, report) in sweep.values.iter().zip(feature_reports(&sets)) {
        let r = report.map_err(|e| {
            let inner = CliError::from(e);
            match inner {
                CliError::Extraction(m) => CliError::Extraction(format!("{kind} = {value}: {m}")),
                other => other,
            }
        })?;
        let _ = writeln!(
            text,
            "{value},{},{},{},{},{}",
            r.max_transparency,
            r.max_transparency_location_hz,
            r.transparency_at_zero,
            opt(r.hwhm_hz),
            opt(r.resonance_shift_hz)
        );
    }
    emit(c.out.as_deref(), &text)
}

const SWEEP_COLUMNS: [&str; 6] = [
    "value_hz",
    "max_transparency",
    "peak_location_hz",
    "transparency_at_zero",
    "hwhm_hz",
    "resonance_shift_hz",
];

enum PlotInput {
    Spectrum(Series),
    Sweep { variable: String, series: Series },
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_sweep(path: &Path, column: &str) -> Result<PlotInput, CliError> {
    let col = SWEEP_COLUMNS
        .iter()
        .position(|c| *c == column)
        .ok_or_else(|| CliError::Config(format!("unknown sweep column '{column}'")))?;
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| CliError::Config(format!("{}: line {line}: {what}", path.display()));
    let mut variable = None;
    let mut points = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t == SWEEP_COLUMNS.join(",") {
            continue;
        }
        if let Some(rest) = t.strip_prefix("# sweep=") {
            variable = rest.split_whitespace().next().map(str::to_string);
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != SWEEP_COLUMNS.len() {
            return Err(bad(idx + 1, "expected 6 fields"));
        }
        let x: f64 = fields[0].parse().map_err(|_| bad(idx + 1, "bad value_hz"))?;
        if fields[col].is_empty() {
            continue;
        }
        let y: f64 = fields[col].parse().map_err(|_| bad(idx + 1, "bad number"))?;
        points.push((x / 1e6, y));
    }
    let variable = variable.ok_or_else(|| bad(1, "missing '# sweep=' header"))?;
    Ok(PlotInput::Sweep {
        variable,
        series: Series {
            label: label_of(path),
            points,
        },
    })
}

fn read_plot_input(path: &Path, column: &str) -> Result<PlotInput, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    if first.starts_with("# sweep=") {
        return read_sweep(path, column);
    }
    let s = read_spectrum_file(path)?;
    Ok(PlotInput::Spectrum(Series {
        label: label_of(path),
        points: s.samples.iter().map(|p| (p.delta / 1e6, p.reflectivity)).collect(),
    }))
}

pub fn plot(c: &Common, inputs: &[PathBuf], column: &str) -> Result<(), CliError> {
    let out = c
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("plot needs --out for the SVG".into()))?;
    if inputs.is_empty() {
        return Err(CliError::Config("no input files given".into()));
    }
    let parsed = inputs
        .iter()
        .map(|p| read_plot_input(p, column))
        .collect::<Result<Vec<_>, _>>()?;
    let (x_label, y_label) = match &parsed[0] {
        PlotInput::Spectrum(_) => ("detuning (MHz)".to_string(), "reflectivity R".to_string()),
        PlotInput::Sweep { variable, .. } => (format!("{variable} (MHz)"), column.to_string()),
    };
    let mut series = Vec::new();
    for p in parsed {
        match p {
            PlotInput::Spectrum(s) if y_label == "reflectivity R" => series.push(s),
            PlotInput::Sweep { series: s, variable } if x_label == format!("{variable} (MHz)") => series.push(s),
            _ => return Err(CliError::Config("plot inputs mix spectra and sweeps of different kinds".into())),
        }
    }
    if let Some(s) = series.iter().find(|s| s.points.is_empty()) {
        return Err(CliError::Config(format!("{} has no points to plot", s.label)));
    }
    let svg = render_svg(&series, &x_label, &y_label);
    let dat = render_dat(&series, &x_label, &y_label);
    write_atomic(&out.with_extension("dat"), dat.as_bytes())?;
    write_atomic(out, svg.as_bytes())
}

pub fn selftest(c: &Common) -> Result<(), CliError> {
    let report = fit_selftest(c.seed);
    let mut text = serde_json::to_string_pretty(&report).map_err(config_err)?;
    text.push('\n');
    emit(c.out.as_deref(), &text)?;
    if !report.passed {
        let failed: Vec<&str> = report.entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
        return Err(CliError::NotConverged(format!("selftest failed: {}", failed.join(", "))));
    }
    Ok(())
}
