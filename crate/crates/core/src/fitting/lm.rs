use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitProblem, ParamId, ParamKind};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;

const COST_TOLERANCE: f64 = 1e-10;
const GRADIENT_TOLERANCE: f64 = 1e-8;
const STEP_TOLERANCE: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostDecrease,
    Gradient,
    Step,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub id: ParamId,
    /// Hz.
    pub estimate: f64,
    /// One-sigma uncertainty (Hz).
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<ParameterEstimate>,
    /// Weighted sum of squared residuals.
    pub cost: f64,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub spectrum_costs: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.estimate).collect()
    }

    pub fn get(&self, id: ParamId) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.id == id)
    }

    pub fn shared(&self, kind: ParamKind) -> Option<&ParameterEstimate> {
        self.get(ParamId::shared(kind))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Damped Gauss–Newton (Levenberg–Marquardt) minimisation of the weighted
/// squared residuals. Returns the best point found; `converged` is false if
/// the iteration cap was hit.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    fit_with(problem, MAX_ITERATIONS)
}

/// [`fit`] with a different iteration cap.
pub fn fit_with(problem: &FitProblem, max_iterations: usize) -> Result<FitResult> {
    let n = problem.free.len();
    let bounds: Vec<(f64, f64)> = problem.free.iter().map(|p| p.internal_bounds()).collect();
    let project = |x: &mut DVector<f64>| {
        for (xi, &(lo, hi)) in x.iter_mut().zip(&bounds) {
            *xi = xi.clamp(lo, hi);
        }
    };

    let mut x = DVector::from_vec(problem.encode(&problem.initial()));
    let mut r = problem.internal_residuals(x.as_slice())?;
    let mut cost = sum_sq(&r);
    let mut lambda: Option<f64> = None;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < max_iterations {
        if cost == 0.0 {
            termination = Termination::Gradient;
            break;
        }
        let j = problem.internal_jacobian(x.as_slice(), &r)?;
        let rv = DVector::from_column_slice(&r);
        let grad = j.tr_mul(&rv);
        if grad.amax() < GRADIENT_TOLERANCE {
            termination = Termination::Gradient;
            break;
        }
        let normal = j.tr_mul(&j);
        let mut lam = lambda.unwrap_or_else(|| {
            let d = normal.diagonal().max();
            if d > 0.0 {
                1e-3 * d
            } else {
                1e-3
            }
        });
        iterations += 1;

        let mut accepted = false;
        let mut stalled = false;
        while lam <= MAX_DAMPING {
            let damped = &normal + DMatrix::identity(n, n) * lam;
            let Some(chol) = damped.cholesky() else {
                lam *= 10.0;
                continue;
            };
            let mut trial = &x - chol.solve(&grad);
            project(&mut trial);
            let step = (&trial - &x).norm();
            if step <= STEP_TOLERANCE * (1.0 + x.norm()) {
                stalled = true;
                break;
            }
            match problem.internal_residuals(trial.as_slice()) {
                Ok(r_new) => {
                    let c_new = sum_sq(&r_new);
                    if c_new < cost {
                        let rel = (cost - c_new) / cost;
                        x = trial;
                        r = r_new;
                        cost = c_new;
                        lam /= 10.0;
                        accepted = true;
                        if rel < COST_TOLERANCE {
                            termination = Termination::CostDecrease;
                        }
                        break;
                    }
                    lam *= 10.0;
                }
                Err(e) if e.is_model_error() => lam *= 10.0,
                Err(e) => return Err(e),
            }
        }
        lambda = Some(lam);
        if stalled {
            termination = Termination::Step;
            break;
        }
        if !accepted {
            return Err(Error::Fit(
                "normal equations stayed singular under maximal damping".into(),
            ));
        }
        if termination == Termination::CostDecrease {
            break;
        }
    }

    finish(problem, x.as_slice(), r, cost, iterations, termination)
}

fn finish(
    problem: &FitProblem,
    x: &[f64],
    r: Vec<f64>,
    cost: f64,
    iterations: usize,
    termination: Termination,
) -> Result<FitResult> {
    let values = problem.decode(x);
    let n = values.len();
    let m = r.len();
    let dof = m.saturating_sub(n);
    let reduced = if dof > 0 { cost / dof as f64 } else { 0.0 };

    let j = problem.internal_jacobian(x, &r)?;
    let normal = j.tr_mul(&j);
    let eps = 1e-14 * normal.diagonal().max().max(f64::MIN_POSITIVE);
    let cov = normal
        .pseudo_inverse(eps)
        .map_err(|e| Error::Fit(e.to_string()))?;

    let parameters = problem
        .free
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(k, (p, &v))| {
            let internal = (cov[(k, k)].max(0.0) * reduced).sqrt();
            let sigma = if p.id.kind.is_positive() { v * internal } else { internal };
            ParameterEstimate {
                name: p.id.to_string(),
                id: p.id,
                estimate: v,
                sigma,
            }
        })
        .collect();

    let mut spectrum_costs = Vec::with_capacity(problem.spectra.len());
    let mut offset = 0;
    for s in &problem.spectra {
        spectrum_costs.push(sum_sq(&r[offset..offset + s.len()]));
        offset += s.len();
    }

    Ok(FitResult {
        parameters,
        cost,
        reduced_chi_square: reduced,
        iterations,
        converged: termination != Termination::MaxIterations,
        termination,
        spectrum_costs,
        residuals: r,
    })
}

/// Joint fit of several spectra sharing a free decoherence rate γ₀.
pub fn fit_global(problem: &FitProblem) -> Result<FitResult> {
    if problem.spectra.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "global fit needs at least 2 spectra, got {}",
            problem.spectra.len()
        )));
    }
    if !problem.free.iter().any(|p| p.id == ParamId::shared(ParamKind::Gamma0)) {
        return Err(Error::InvalidParameter("global fit needs gamma0 as a shared free parameter".into()));
    }
    fit(problem)
}

#[cfg(test)]
mod tests {
    use super::super::{jacobian, residuals, FreeParameter};
    use super::*;
    use crate::model::{AtomParams, CavityParams, DriveParams};
    use crate::spectra::tests::reference_cavity;
    use crate::spectra::{add_noise, simulate_spectrum, DetuningGrid, Mode, Spectrum};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eit_atoms() -> AtomParams {
        AtomParams::new(13.5e6, 12.6e6, 600.0, 11e6).unwrap()
    }

    fn eit(c: &CavityParams, a: &AtomParams, omega_c: f64, half: f64, points: usize) -> Spectrum {
        simulate_spectrum(
            c,
            a,
            &DriveParams::control_only(omega_c),
            &DetuningGrid::symmetric(half, points).unwrap(),
            Mode::Eit,
        )
        .unwrap()
    }

    fn free(kind: ParamKind, initial: f64) -> FreeParameter {
        FreeParameter::new(ParamId::shared(kind), initial, initial * 1e-3, initial * 1e3)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn two_level_coupling_recovered() {
        let a = AtomParams::new(13.8e6, 12.6e6, 600.0, 11e6).unwrap();
        let s = simulate_spectrum(
            &reference_cavity(),
            &a,
            &DriveParams::default(),
            &DetuningGrid::symmetric(3e7, 601).unwrap(),
            Mode::TwoLevel,
        )
        .unwrap();
        let p = FitProblem::new(vec![s], vec![free(ParamKind::GN, 10e6)]).unwrap();
        let res = fit(&p).unwrap();
        assert!(res.converged);
        assert!(rel(res.values()[0], 13.8e6) < 1e-4, "{res:?}");
        assert!(res.cost < 1e-12);
    }

    #[test]
    fn eit_coupling_and_control_recovered() {
        let s = eit(&reference_cavity(), &eit_atoms(), 4.1e6, 2e6, 2001);
        let p = FitProblem::new(vec![s], vec![free(ParamKind::GN, 11e6), free(ParamKind::OmegaC, 3.3e6)]).unwrap();
        let res = fit(&p).unwrap();
        assert!(res.converged);
        let v = res.values();
        assert!(rel(v[0], 13.5e6) < 1e-3 && rel(v[1], 4.1e6) < 1e-3, "{v:?}");
    }

    #[test]
    fn empty_cavity_width_recovered() {
        let s = simulate_spectrum(
            &reference_cavity(),
            &eit_atoms(),
            &DriveParams::default(),
            &DetuningGrid::symmetric(1e7, 401).unwrap(),
            Mode::Bare,
        )
        .unwrap();
        let noisy = add_noise(&s, 0.005, 11).unwrap();
        let p = FitProblem::new(vec![noisy], vec![free(ParamKind::Kappa, 3e6)]).unwrap();
        let res = fit(&p).unwrap();
        assert!(rel(res.values()[0], 2.2e6) < 5e-3, "{res:?}");
        assert!(res.parameters[0].sigma > 0.0);
    }

    #[test]
    fn cost_is_monotone_over_iterations() {
        let s = eit(&reference_cavity(), &eit_atoms(), 4.1e6, 2e6, 401);
        let mut last = f64::INFINITY;
        for &its in &[0usize, 1, 2, 3, 5, 8, 13] {
            let p = FitProblem::new(vec![s.clone()], vec![free(ParamKind::GN, 9e6), free(ParamKind::OmegaC, 6e6)]).unwrap();
            let res = fit_with(&p, its).unwrap();
            assert!(res.iterations <= its);
            assert!(res.cost <= last);
            last = res.cost;
        }
    }

    #[test]
    fn jacobian_agrees_with_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = eit(&reference_cavity(), &eit_atoms(), 4.1e6, 2e5, 201);
        let p = FitProblem::new(
            vec![s],
            vec![free(ParamKind::GN, 13e6), free(ParamKind::OmegaC, 4e6), free(ParamKind::Gamma0, 600.0)],
        )
        .unwrap();
        let point = [
            rng.random_range(11e6..16e6),
            rng.random_range(3e6..5e6),
            rng.random_range(300.0..1100.0),
        ];
        let jf = jacobian(&p, &point).unwrap();
        for k in 0..3 {
            let h = 1e-7;
            let mut up = point;
            let mut dn = point;
            up[k] *= f64::exp(h);
            dn[k] *= f64::exp(-h);
            let ru = residuals(&p, &up).unwrap();
            let rd = residuals(&p, &dn).unwrap();
            let central: Vec<f64> = ru.iter().zip(&rd).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let diff: f64 = central.iter().enumerate().map(|(i, c)| (jf[(i, k)] - c).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = central.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(diff <= 1e-4 * norm, "column {k}: {diff} vs {norm}");
        }
    }

    fn global_problem(order: &[usize], sigma: f64) -> FitProblem {
        let a = AtomParams::new(17.3e6, 12.6e6, 600.0, 11e6).unwrap();
        let spectra = order
            .iter()
            .map(|&i| {
                let oc = 1.3e6 + (8.6e6 - 1.3e6) * i as f64 / 10.0;
                add_noise(&eit(&reference_cavity(), &a, oc, 1e5, 2001), sigma, 100 + i as u64).unwrap()
            })
            .collect();
        FitProblem::new(
            spectra,
            vec![FreeParameter::new(ParamId::shared(ParamKind::Gamma0), 1500.0, 1.0, 1e5)],
        )
        .unwrap()
    }

    #[test]
    fn global_gamma0_recovered_and_order_invariant() {
        let order: Vec<usize> = (0..11).collect();
        let res = fit_global(&global_problem(&order, 0.02)).unwrap();
        let g0 = res.shared(ParamKind::Gamma0).unwrap();
        assert!(res.converged);
        assert!(rel(g0.estimate, 600.0) < 0.05, "{g0:?}");
        assert!(g0.sigma > 0.0 && g0.sigma < 100.0, "{g0:?}");
        assert_eq!(res.spectrum_costs.len(), 11);
        let total: f64 = res.spectrum_costs.iter().sum();
        assert!((total - res.cost).abs() <= 1e-9 * res.cost);

        let reversed: Vec<usize> = (0..11).rev().collect();
        let back = fit_global(&global_problem(&reversed, 0.02)).unwrap();
        let g1 = back.shared(ParamKind::Gamma0).unwrap().estimate;
        assert!(rel(g1, g0.estimate) <= 1e-6, "{g1} vs {}", g0.estimate);

        let clean = fit_global(&global_problem(&order, 0.0)).unwrap();
        assert!(rel(clean.values()[0], 600.0) < 1e-3);
    }

    #[test]
    fn global_preconditions() {
        let one = global_problem(&[3], 0.0);
        assert!(fit_global(&one).is_err());
        let s = eit(&reference_cavity(), &eit_atoms(), 4.1e6, 2e5, 51);
        let p = FitProblem::new(vec![s.clone(), s], vec![free(ParamKind::GN, 1e7)]).unwrap();
        assert!(fit_global(&p).is_err());
    }

    #[test]
    fn scale_consistency() {
        let scale = 7.0;
        let c = reference_cavity();
        let a = eit_atoms();
        let base = eit(&c, &a, 4.1e6, 2e6, 801);
        let scaled = eit(&c.scaled(scale), &a.scaled(scale), 4.1e6 * scale, 2e6 * scale, 801);
        let setup = |s: Spectrum, k: f64| {
            FitProblem::new(
                vec![s],
                vec![
                    FreeParameter::new(ParamId::shared(ParamKind::GN), 11e6 * k, 1e5 * k, 1e9 * k),
                    FreeParameter::new(ParamId::shared(ParamKind::OmegaC), 3.5e6 * k, 1e4 * k, 1e8 * k),
                ],
            )
            .unwrap()
        };
        let r1 = fit(&setup(base, 1.0)).unwrap().values();
        let r2 = fit(&setup(scaled, scale)).unwrap().values();
        for (x, y) in r1.iter().zip(&r2) {
            assert!(rel(*y, scale * x) < 1e-6, "{x} {y}");
        }
    }

    #[test]
    fn result_json_fields() {
        let s = eit(&reference_cavity(), &eit_atoms(), 4.1e6, 2e6, 201);
        let res = fit(&FitProblem::new(vec![s], vec![free(ParamKind::GN, 1.2e7)]).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json().unwrap()).unwrap();
        for key in ["parameters", "cost", "iterations", "converged", "spectrum_costs"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["parameters"][0]["name"], "g_n");
        assert!(v.get("residuals").is_none());
    }
}
