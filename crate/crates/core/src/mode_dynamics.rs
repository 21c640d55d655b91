//! Per-mode Bloch-vector dynamics.
//!
//! Each positive momentum `k` carries a Bloch vector `n_k` for the 2×2
//! density matrix on {empty pair, Cooper pair}. The pair Hamiltonian is
//! `−h_k·σ` in that basis, so the master equation reads
//!
//! ```text
//! dn/dt = −2 h × n + 4λ h × (h × n)
//! ```
//!
//! The first term precesses `n` about `h`; the second damps the component
//! of `n` transverse to `h` at rate `4λ|h|²`.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::protocol::{
    couplings, momentum_grid, pseudo_field, Evolution, MomentumGrid, PseudoField, QuenchProtocol,
};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub k: f64,
    pub n: Vec3,
}

/// Complete reduced state of the chain at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEnsemble {
    pub grid: MomentumGrid,
    pub states: Vec<BlochState>,
    pub t: f64,
    pub protocol: QuenchProtocol,
    pub lambda: f64,
}

impl ModeEnsemble {
    pub fn n_sites(&self) -> usize {
        self.grid.n_sites
    }

    /// Couplings `(J, h)` at the ensemble time.
    pub fn couplings(&self) -> (f64, f64) {
        couplings(self.protocol.tau_q, self.t)
    }

    pub fn fields(&self) -> Vec<PseudoField> {
        let (j, h) = self.couplings();
        self.states.iter().map(|s| pseudo_field(s.k, j, h)).collect()
    }

    /// Ensemble with every mode in the instantaneous ground state at `t`.
    pub fn ground_state(
        protocol: QuenchProtocol,
        n_sites: usize,
        lambda: f64,
        t: f64,
    ) -> Result<Self> {
        let grid = momentum_grid(n_sites)?;
        let s = protocol.schedule_at(t)?;
        let states = grid
            .modes
            .iter()
            .map(|&k| {
                Ok(BlochState {
                    k,
                    n: ground_state_bloch(&pseudo_field(k, s.j, s.h))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeEnsemble {
            grid,
            states,
            t,
            protocol,
            lambda,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Explicit for `λ = 0`, implicit otherwise.
    #[default]
    Auto,
    /// Dormand–Prince 5(4); for `λ > 0` the step is capped at
    /// `0.1 / max(1, 4λ|h|²)`.
    Explicit,
    /// Radau IIA, order 5.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverOptions {
    pub tol: Tolerances,
    pub integrator: Integrator,
}

pub fn ground_state_bloch(f: &PseudoField) -> Result<Vec3> {
    let norm = f.norm();
    if !(norm > 0.0) {
        return Err(Error::domain("ground state undefined for a vanishing field"));
    }
    Ok([f.hx / norm, f.hy / norm, f.hz / norm])
}

#[inline]
fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Right-hand side of the Bloch master equation for a given field.
#[inline]
pub fn bloch_rhs(h: &Vec3, lambda: f64, n: &Vec3) -> Vec3 {
    let hn = cross(h, n);
    let hhn = cross(h, &hn);
    [
        -2.0 * hn[0] + 4.0 * lambda * hhn[0],
        -2.0 * hn[1] + 4.0 * lambda * hhn[1],
        -2.0 * hn[2] + 4.0 * lambda * hhn[2],
    ]
}

fn generator(h: &Vec3, lambda: f64) -> Matrix3<f64> {
    let hx = Matrix3::new(0.0, -h[2], h[1], h[2], 0.0, -h[0], -h[1], h[0], 0.0);
    hx * (-2.0) + (hx * hx) * (4.0 * lambda)
}

/// Integrates one mode under an arbitrary time-dependent field, starting
/// from `n0` at `t0`, and returns `n` at each sample time.
pub fn integrate_with_field<F>(
    field: F,
    lambda: f64,
    k: f64,
    t0: f64,
    n0: Vec3,
    samples: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Vec3>>
where
    F: Fn(f64) -> PseudoField,
{
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let fail = |e: ode::StepFailure| Error::Integration {
        k,
        t: e.t,
        reason: e.reason,
    };
    let implicit = match opts.integrator {
        Integrator::Auto => lambda > 0.0,
        Integrator::Explicit => false,
        Integrator::Implicit => true,
    };
    if implicit {
        let (ys, _) = ode::radau5_linear3(
            |t| generator(&field(t).as_array(), lambda),
            t0,
            n0,
            samples,
            &opts.tol,
        )
        .map_err(fail)?;
        Ok(ys)
    } else {
        let cap = |t: f64| {
            if lambda > 0.0 {
                let h = field(t).norm();
                0.1 / (4.0 * lambda * h * h).max(1.0)
            } else {
                f64::INFINITY
            }
        };
        let (ys, _) = ode::dopri5(
            |t, y, dy| {
                let n = [y[0], y[1], y[2]];
                let d = bloch_rhs(&field(t).as_array(), lambda, &n);
                dy.copy_from_slice(&d);
            },
            t0,
            &n0,
            samples,
            &opts.tol,
            cap,
        )
        .map_err(fail)?;
        Ok(ys.into_iter().map(|y| [y[0], y[1], y[2]]).collect())
    }
}

/// Continuous evolution of mode `k` from its ground state at `t_from`.
pub fn evolve_continuous(
    p: &QuenchProtocol,
    lambda: f64,
    k: f64,
    t_from: f64,
    t_to: f64,
    sample_times: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<BlochState>> {
    if !(t_from < t_to) || !p.contains(t_from) || !p.contains(t_to) {
        return Err(Error::domain(format!(
            "invalid integration window [{t_from}, {t_to}]"
        )));
    }
    if sample_times.iter().any(|&s| s < t_from || s > t_to) {
        return Err(Error::domain("sample time outside integration window"));
    }
    let tau = p.tau_q;
    let field = move |t: f64| {
        let (j, h) = couplings(tau, t);
        pseudo_field(k, j, h)
    };
    let n0 = ground_state_bloch(&field(t_from))?;
    let ns = integrate_with_field(field, lambda, k, t_from, n0, sample_times, opts)?;
    Ok(ns.into_iter().map(|n| BlochState { k, n }).collect())
}

/// Rodrigues rotation of `n` under `dn/dt = ω × n` for time `dt`.
#[inline]
fn precess(n: &Vec3, omega: &Vec3, dt: f64) -> Vec3 {
    let w = norm3(omega);
    if w == 0.0 {
        return *n;
    }
    let axis = [omega[0] / w, omega[1] / w, omega[2] / w];
    let (s, c) = (w * dt).sin_cos();
    let axn = cross(&axis, n);
    let adn = axis[0] * n[0] + axis[1] * n[1] + axis[2] * n[2];
    [
        n[0] * c + axn[0] * s + axis[0] * adn * (1.0 - c),
        n[1] * c + axn[1] * s + axis[1] * adn * (1.0 - c),
        n[2] * c + axn[2] * s + axis[2] * adn * (1.0 - c),
    ]
}

/// One first-order Trotter step for a single mode: the Ising layer
/// (pair field `b = (0, 2J sin k, −2J cos k)`), then the transverse-field
/// layer (pair field `(0, 0, 2h)`). Both are exact precessions.
pub fn trotter_step_mode(n: &Vec3, k: f64, j: f64, h: f64, dt: f64) -> Vec3 {
    let (s, c) = k.sin_cos();
    let ising = [0.0, -4.0 * j * s, 4.0 * j * c];
    let field = [0.0, 0.0, -4.0 * h];
    let n = precess(n, &ising, dt);
    precess(&n, &field, dt)
}

fn trotter_index(p: &QuenchProtocol, steps: usize, dt: f64, t: f64) -> Result<usize> {
    let s = (t - p.t_start()) / dt;
    let idx = s.round();
    if (s - idx).abs() > 1e-9 || idx < 0.0 || idx as usize > steps {
        return Err(Error::domain(format!(
            "sample time {t} is not a Trotter step boundary"
        )));
    }
    Ok(idx as usize)
}

/// Runs the full quench on an `N`-site chain and returns one ensemble per
/// sample time. All modes start in the ground state at `t = −τ_Q`.
pub fn run_quench(
    p: &QuenchProtocol,
    n_sites: usize,
    lambda: f64,
    sample_times: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<ModeEnsemble>> {
    p.validate()?;
    let grid = momentum_grid(n_sites)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("sample times must be sorted"));
    }
    if let Some(&t) = sample_times.iter().find(|&&t| !p.contains(t)) {
        return Err(Error::domain(format!("sample time {t} outside protocol")));
    }
    let t0 = p.t_start();
    let samples: Vec<f64> = sample_times.iter().map(|&t| t.max(t0).min(p.t_end())).collect();

    let per_mode: Vec<Vec<Vec3>> = match p.evolution {
        Evolution::Continuous => {
            let tau = p.tau_q;
            grid.modes
                .par_iter()
                .map(|&k| {
                    let field = move |t: f64| {
                        let (j, h) = couplings(tau, t);
                        pseudo_field(k, j, h)
                    };
                    let n0 = ground_state_bloch(&field(t0))?;
                    integrate_with_field(field, lambda, k, t0, n0, &samples, opts)
                })
                .collect::<Result<_>>()?
        }
        Evolution::Trotter { dt, steps } => {
            if lambda > 0.0 {
                return Err(Error::Unsupported(
                    "Trotterized evolution is only defined for lambda = 0".into(),
                ));
            }
            let idx = samples
                .iter()
                .map(|&t| trotter_index(p, steps, dt, t))
                .collect::<Result<Vec<_>>>()?;
            let times = p.step_times();
            let tau = p.tau_q;
            grid.modes
                .par_iter()
                .map(|&k| {
                    let (j0, h0) = couplings(tau, t0);
                    let mut n = ground_state_bloch(&pseudo_field(k, j0, h0))?;
                    let mut out = Vec::with_capacity(idx.len());
                    let mut done = 0usize;
                    for &target in &idx {
                        while done < target {
                            let (j, h) = couplings(tau, times[done]);
                            n = trotter_step_mode(&n, k, j, h, dt);
                            done += 1;
                        }
                        out.push(n);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?
        }
    };

    Ok(sample_times
        .iter()
        .enumerate()
        .map(|(i, &t)| ModeEnsemble {
            grid: grid.clone(),
            states: grid
                .modes
                .iter()
                .zip(&per_mode)
                .map(|(&k, ns)| BlochState { k, n: ns[i] })
                .collect(),
            t,
            protocol: *p,
            lambda,
        })
        .collect())
}

/// Convenience wrapper returning only the end-of-protocol ensemble.
pub fn run_to_end(
    p: &QuenchProtocol,
    n_sites: usize,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<ModeEnsemble> {
    let mut v = run_quench(p, n_sites, lambda, &[p.t_end()], opts)?;
    Ok(v.pop().expect("one sample requested"))
}

/// Landau–Zener-style excitation probability `(1 − n·ĥ)/2`.
pub fn excitation_probability(n: &Vec3, f: &PseudoField) -> f64 {
    let hn = f.norm();
    0.5 * (1.0 - f.dot(n) / hn)
}
