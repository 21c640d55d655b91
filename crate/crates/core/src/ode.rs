//! Adaptive integrators used by the mode solver and the dense oracle.
//!
//! `dopri5` is the explicit Dormand–Prince 5(4) pair with FSAL and a
//! standard step controller. `radau5_linear3` is the three-stage Radau IIA
//! collocation method (order 5, L-stable) specialised to linear systems
//! `y' = M(t) y` in three dimensions; its local error is estimated by step
//! doubling.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step before the integrator gives up.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            h_min: 1e-14,
            max_steps: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

fn check_samples(t0: f64, samples: &[f64]) -> Result<(), StepFailure> {
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(StepFailure {
            t: t0,
            reason: "sample times must be sorted".into(),
        });
    }
    if samples.first().is_some_and(|&s| s < t0) {
        return Err(StepFailure {
            t: t0,
            reason: "sample time precedes the initial time".into(),
        });
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0`, returning `y` at every sample time.
///
/// `step_cap(t)` bounds the step size locally (use `f64::INFINITY` for no
/// cap). Steps are clipped so that every sample time is hit exactly.
pub fn dopri5<F, C>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    samples: &[f64],
    tol: &Tolerances,
    step_cap: C,
) -> Result<(Vec<Vec<f64>>, Stats), StepFailure>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    C: Fn(f64) -> f64,
{
    check_samples(t0, samples)?;
    let n = y0.len();
    let mut out = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    rhs(t, &y, &mut k1);

    let span = samples.last().map_or(0.0, |&s| s - t0);
    let mut h = (1e-3 * span).max(1e-6).min(step_cap(t));

    for &target in samples {
        while t < target {
            if stats.accepted + stats.rejected >= tol.max_steps {
                return Err(StepFailure {
                    t,
                    reason: "maximum step count exceeded".into(),
                });
            }
            h = h.min(step_cap(t));
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs < tol.h_min && !last {
                return Err(StepFailure {
                    t,
                    reason: format!("step size underflow (h = {hs:e})"),
                });
            }

            for i in 0..n {
                ytmp[i] = y[i] + hs * A21 * k1[i];
            }
            rhs(t + C2 * hs, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs(t + C3 * hs, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs(t + C4 * hs, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs(t + C5 * hs, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs(t + hs, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            rhs(t + hs, &ynew, &mut k7);
            for i in 0..n {
                err[i] = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let en = error_norm(&err, &y, &ynew, tol);
            if !en.is_finite() {
                stats.rejected += 1;
                h = hs * FAC_MIN;
                continue;
            }
            let fac = if en == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if en <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                // Keep the controller's proposal when the step was only
                // shortened to land on a sample time.
                h = if last { h.max(hs * fac) } else { hs * fac };
            } else {
                stats.rejected += 1;
                h = hs * fac.min(1.0);
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

// Radau IIA, three stages.
struct RadauTableau {
    c: [f64; 3],
    a: [[f64; 3]; 3],
}

fn radau_tableau() -> RadauTableau {
    let s6 = 6f64.sqrt();
    RadauTableau {
        c: [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0],
        a: [
            [
                (88.0 - 7.0 * s6) / 360.0,
                (296.0 - 169.0 * s6) / 1800.0,
                (-2.0 + 3.0 * s6) / 225.0,
            ],
            [
                (296.0 + 169.0 * s6) / 1800.0,
                (88.0 + 7.0 * s6) / 360.0,
                (-2.0 - 3.0 * s6) / 225.0,
            ],
            [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
        ],
    }
}

fn radau_step<M>(tab: &RadauTableau, m: &M, t: f64, h: f64, y: &Vector3<f64>) -> Option<Vector3<f64>>
where
    M: Fn(f64) -> Matrix3<f64>,
{
    let ms = [m(t + tab.c[0] * h), m(t + tab.c[1] * h), m(t + tab.c[2] * h)];
    let mut k = SMatrix::<f64, 9, 9>::identity();
    let mut rhs = SVector::<f64, 9>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let blk = ms[j] * (-h * tab.a[i][j]);
            for r in 0..3 {
                for c in 0..3 {
                    k[(3 * i + r, 3 * j + c)] += blk[(r, c)];
                }
            }
        }
        for r in 0..3 {
            rhs[3 * i + r] = y[r];
        }
    }
    let sol = k.lu().solve(&rhs)?;
    Some(Vector3::new(sol[6], sol[7], sol[8]))
}

/// Integrates the linear system `y' = M(t) y` with Radau IIA (order 5).
pub fn radau5_linear3<M>(
    m: M,
    t0: f64,
    y0: [f64; 3],
    samples: &[f64],
    tol: &Tolerances,
) -> Result<(Vec<[f64; 3]>, Stats), StepFailure>
where
    M: Fn(f64) -> Matrix3<f64>,
{
    check_samples(t0, samples)?;
    let tab = radau_tableau();
    let mut out = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = Vector3::from(y0);
    let span = samples.last().map_or(0.0, |&s| s - t0);
    let mut h = (1e-3 * span).max(1e-6);
    // Richardson denominator for an order-5 method.
    let rich = 31.0;

    for &target in samples {
        while t < target {
            if stats.accepted + stats.rejected >= tol.max_steps {
                return Err(StepFailure {
                    t,
                    reason: "maximum step count exceeded".into(),
                });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs < tol.h_min && !last {
                return Err(StepFailure {
                    t,
                    reason: format!("step size underflow (h = {hs:e})"),
                });
            }
            let singular = || StepFailure {
                t,
                reason: "singular stage system".into(),
            };
            let full = radau_step(&tab, &m, t, hs, &y).ok_or_else(singular)?;
            let half = radau_step(&tab, &m, t, 0.5 * hs, &y).ok_or_else(singular)?;
            let fine = radau_step(&tab, &m, t + 0.5 * hs, 0.5 * hs, &half).ok_or_else(singular)?;
            let e = (fine - full) / rich;
            let en = error_norm(e.as_slice(), y.as_slice(), fine.as_slice(), tol);
            if !en.is_finite() {
                stats.rejected += 1;
                h = hs * FAC_MIN;
                continue;
            }
            let fac = if en == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * en.powf(-1.0 / 6.0)).clamp(FAC_MIN, FAC_MAX)
            };
            if en <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + hs };
                y = fine;
                h = if last { h.max(hs * fac) } else { hs * fac };
            } else {
                stats.rejected += 1;
                h = hs * fac.min(1.0);
            }
        }
        out.push([y[0], y[1], y[2]]);
    }
    Ok((out, stats))
}
