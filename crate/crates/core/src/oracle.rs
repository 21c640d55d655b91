//! Brute-force reference dynamics for small chains: dense statevector
//! evolution (continuous and Trotterized), dense Lindblad evolution with the
//! full double commutator, and direct spin expectation values.
//!
//! Basis convention: bit `i` of a basis index is qubit `i`, and bit value 0
//! is the `σ^z = +1` eigenstate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, Tolerances};
use crate::protocol::{couplings, Evolution, QuenchProtocol};

pub const MAX_STATEVECTOR_SITES: usize = 14;
pub const MAX_DENSITY_SITES: usize = 7;
pub const DEFAULT_DENSITY_CAP: usize = 6;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Upper bound on the bytes a single evolution may allocate.
    pub memory_budget: usize,
    /// Largest chain accepted by the density-matrix engine.
    pub density_cap: usize,
    /// Continuous statevector runs halve their step until successive
    /// refinements differ by less than this (2-norm of the state).
    pub refine_tol: f64,
    /// Initial step bound as a fraction of `τ_Q`.
    pub step_fraction: f64,
    pub tol: Tolerances,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            memory_budget: 2 << 30,
            density_cap: DEFAULT_DENSITY_CAP,
            refine_tol: 1e-9,
            step_fraction: 1e-3,
            tol: Tolerances::default(),
        }
    }
}

/// `H = −J Σ_i σ^z_i σ^z_{i+1} − h Σ_i σ^x_i` on a ring, kept in sparse form:
/// a diagonal Ising part and single-bit flips. For `N = 2` the wraparound
/// sum visits the single bond twice.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingOperator {
    pub n: usize,
    pub j: f64,
    pub h: f64,
    bond_sum: Vec<f64>,
}

/// `Σ_i z_i z_{i+1}` for every basis state.
fn bond_sums(n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|b| {
            (0..n)
                .map(|i| {
                    let p = ((b >> i) ^ (b >> ((i + 1) % n))) & 1;
                    1.0 - 2.0 * p as f64
                })
                .sum()
        })
        .collect()
}

pub fn dense_hamiltonian(n: usize, j: f64, h: f64) -> Result<IsingOperator> {
    if !(2..=MAX_STATEVECTOR_SITES).contains(&n) {
        return Err(Error::domain(format!(
            "oracle supports 2 <= N <= {MAX_STATEVECTOR_SITES}, got {n}"
        )));
    }
    Ok(IsingOperator {
        n,
        j,
        h,
        bond_sum: bond_sums(n),
    })
}

impl IsingOperator {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `out = H ψ`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for (b, o) in out.iter_mut().enumerate() {
            let mut acc = -self.j * self.bond_sum[b] * psi[b];
            let mut flips = C0;
            for i in 0..n {
                flips += psi[b ^ (1 << i)];
            }
            acc -= self.h * flips;
            *o = acc;
        }
    }

    /// Same as [`apply`](Self::apply) on real-valued strided rows/columns of a
    /// density matrix.
    fn apply_strided(&self, src: &[Complex64], stride: usize, off: usize, out: &mut [Complex64]) {
        let n = self.n;
        for (b, o) in out.iter_mut().enumerate() {
            let mut flips = C0;
            for i in 0..n {
                flips += src[(b ^ (1 << i)) * stride + off];
            }
            *o = -self.j * self.bond_sum[b] * src[b * stride + off] - self.h * flips;
        }
    }

    /// Upper bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        self.n as f64 * (self.j.abs() + self.h.abs())
    }

    /// Dense real matrix, for diagonalization in tests.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > 10 {
            return Err(Error::Resource(format!("dense matrix for N = {} refused", self.n)));
        }
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for b in 0..d {
            m[(b, b)] = -self.j * self.bond_sum[b];
            for i in 0..self.n {
                m[(b ^ (1 << i), b)] -= self.h;
            }
        }
        Ok(m)
    }

    /// `⟨ψ|H|ψ⟩` for a normalized state.
    pub fn energy(&self, psi: &[Complex64]) -> f64 {
        let mut out = vec![C0; psi.len()];
        self.apply(psi, &mut out);
        psi.iter().zip(&out).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseState {
    Pure { n: usize, amps: Vec<Complex64> },
    /// Row-major `2^N × 2^N` density matrix.
    Mixed { n: usize, rho: Vec<Complex64> },
}

impl DenseState {
    pub fn n_sites(&self) -> usize {
        match self {
            DenseState::Pure { n, .. } | DenseState::Mixed { n, .. } => *n,
        }
    }

    pub fn plus(n: usize) -> DenseState {
        let d = 1usize << n;
        let a = Complex64::new((d as f64).sqrt().recip(), 0.0);
        DenseState::Pure { n, amps: vec![a; d] }
    }

    pub fn ghz(n: usize) -> DenseState {
        let d = 1usize << n;
        let mut amps = vec![C0; d];
        amps[0] = Complex64::new(0.5f64.sqrt(), 0.0);
        amps[d - 1] = amps[0];
        DenseState::Pure { n, amps }
    }

    pub fn to_mixed(&self) -> DenseState {
        match self {
            DenseState::Pure { n, amps } => {
                let d = amps.len();
                let mut rho = vec![C0; d * d];
                for r in 0..d {
                    for c in 0..d {
                        rho[r * d + c] = amps[r] * amps[c].conj();
                    }
                }
                DenseState::Mixed { n: *n, rho }
            }
            m => m.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            DenseState::Pure { amps, .. } => amps.iter().map(|a| a.norm_sqr()).sum(),
            DenseState::Mixed { rho, .. } => {
                let d = (rho.len() as f64).sqrt() as usize;
                (0..d).map(|i| rho[i * d + i].re).sum()
            }
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            DenseState::Pure { .. } => self.trace().powi(2),
            DenseState::Mixed { rho, .. } => rho.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    fn probabilities(&self) -> Vec<f64> {
        match self {
            DenseState::Pure { amps, .. } => amps.iter().map(|a| a.norm_sqr()).collect(),
            DenseState::Mixed { rho, .. } => {
                let d = (rho.len() as f64).sqrt() as usize;
                (0..d).map(|i| rho[i * d + i].re).collect()
            }
        }
    }

    /// `⟨X_mask⟩` for a product of `σ^x` on the set bits of `mask`.
    fn flip_expectation(&self, mask: usize) -> f64 {
        match self {
            DenseState::Pure { amps, .. } => amps
                .iter()
                .enumerate()
                .map(|(b, a)| (a.conj() * amps[b ^ mask]).re)
                .sum(),
            DenseState::Mixed { rho, .. } => {
                let d = (rho.len() as f64).sqrt() as usize;
                (0..d).map(|b| rho[b * d + (b ^ mask)].re).sum()
            }
        }
    }
}

/// Site-resolved and site-averaged spin observables of a dense state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleObservables {
    pub m_x: Vec<f64>,
    pub m_z: Vec<f64>,
    /// Connected `⟨σ^z_i σ^z_j⟩ − ⟨σ^z_i⟩⟨σ^z_j⟩`, row-major `N × N`.
    pub c_zz: Vec<f64>,
    pub c_xx: Vec<f64>,
    pub n_def: f64,
    pub energy: f64,
}

impl OracleObservables {
    pub fn n_sites(&self) -> usize {
        self.m_x.len()
    }

    pub fn m_x_mean(&self) -> f64 {
        self.m_x.iter().sum::<f64>() / self.n_sites() as f64
    }

    fn averaged(&self, m: &[f64], x: usize) -> f64 {
        let n = self.n_sites();
        (0..n).map(|i| m[i * n + (i + x) % n]).sum::<f64>() / n as f64
    }

    /// Site-averaged connected ZZ correlator at separation `x`.
    pub fn zz_at(&self, x: usize) -> f64 {
        self.averaged(&self.c_zz, x)
    }

    pub fn xx_at(&self, x: usize) -> f64 {
        self.averaged(&self.c_xx, x)
    }
}

pub fn oracle_observables(s: &DenseState, j: f64, h: f64) -> Result<OracleObservables> {
    let n = s.n_sites();
    let probs = s.probabilities();
    let zsign = |b: usize, i: usize| 1.0 - 2.0 * ((b >> i) & 1) as f64;
    let m_z: Vec<f64> = (0..n)
        .map(|i| probs.iter().enumerate().map(|(b, p)| p * zsign(b, i)).sum())
        .collect();
    let m_x: Vec<f64> = (0..n).map(|i| s.flip_expectation(1 << i)).collect();
    let mut zz = vec![1.0; n * n];
    let mut xx = vec![1.0; n * n];
    for i in 0..n {
        for k in i + 1..n {
            let v: f64 = probs
                .iter()
                .enumerate()
                .map(|(b, p)| p * zsign(b, i) * zsign(b, k))
                .sum();
            zz[i * n + k] = v;
            zz[k * n + i] = v;
            let w = s.flip_expectation((1 << i) | (1 << k));
            xx[i * n + k] = w;
            xx[k * n + i] = w;
        }
    }
    let bonds: Vec<f64> = (0..n).map(|i| zz[i * n + (i + 1) % n]).collect();
    let n_def = bonds.iter().map(|v| 0.5 * (1.0 - v)).sum::<f64>() / n as f64;
    let energy = -j * bonds.iter().sum::<f64>() - h * m_x.iter().sum::<f64>();
    let c_zz = (0..n * n).map(|q| zz[q] - m_z[q / n] * m_z[q % n]).collect();
    let c_xx = (0..n * n).map(|q| xx[q] - m_x[q / n] * m_x[q % n]).collect();
    Ok(OracleObservables {
        m_x,
        m_z,
        c_zz,
        c_xx,
        n_def,
        energy,
    })
}

fn guard(bytes: usize, opts: &OracleOptions) -> Result<()> {
    if bytes > opts.memory_budget {
        return Err(Error::Resource(format!(
            "dense state needs ~{bytes} bytes, budget is {}",
            opts.memory_budget
        )));
    }
    Ok(())
}

fn check_samples(p: &QuenchProtocol, samples: &[f64]) -> Result<()> {
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("sample times must be sorted"));
    }
    if let Some(&t) = samples.iter().find(|&&t| !p.contains(t)) {
        return Err(Error::domain(format!("sample time {t} outside protocol")));
    }
    Ok(())
}

/// `ψ ← exp(−i dt H) ψ` by a truncated Taylor series, sub-stepped so each
/// piece has `dt‖H‖ ≤ 1`.
fn expm_apply(op: &IsingOperator, dt: f64, psi: &mut [Complex64], term: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>) {
    let pieces = (dt.abs() * op.norm_bound()).ceil().max(1.0) as usize;
    let h = dt / pieces as f64;
    let scale = Complex64::new(0.0, -h);
    for _ in 0..pieces {
        term.copy_from_slice(psi);
        for m in 1..60 {
            op.apply(term, tmp);
            let c = scale / m as f64;
            let mut size = 0.0;
            for (t, v) in term.iter_mut().zip(tmp.iter()) {
                *t = c * v;
                size += t.norm_sqr();
            }
            for (p, t) in psi.iter_mut().zip(term.iter()) {
                *p += t;
            }
            if size < 1e-34 {
                break;
            }
        }
    }
}

// Fourth-order commutator-free Magnus step with Gauss nodes.
const SQ3_6: f64 = 0.288_675_134_594_812_9;

fn cf4_step(op: &mut IsingOperator, tau: f64, t: f64, dt: f64, psi: &mut [Complex64], term: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>) {
    let (c1, c2) = (0.5 - SQ3_6, 0.5 + SQ3_6);
    let (a1, a2) = (0.25 - SQ3_6, 0.25 + SQ3_6);
    let (j1, h1) = couplings(tau, t + c1 * dt);
    let (j2, h2) = couplings(tau, t + c2 * dt);
    for (w1, w2) in [(a2, a1), (a1, a2)] {
        op.j = w1 * j1 + w2 * j2;
        op.h = w1 * h1 + w2 * h2;
        expm_apply(op, dt, psi, term, tmp);
    }
}

fn continuous_pass(
    p: &QuenchProtocol,
    op0: &IsingOperator,
    samples: &[f64],
    max_step: f64,
) -> Vec<Vec<Complex64>> {
    let mut op = op0.clone();
    let DenseState::Pure { mut amps, .. } = DenseState::plus(op.n) else {
        unreachable!()
    };
    let mut term = vec![C0; amps.len()];
    let mut tmp = vec![C0; amps.len()];
    let mut t = p.t_start();
    let mut out = Vec::with_capacity(samples.len());
    for &ts in samples {
        let span = ts - t;
        if span > 0.0 {
            let m = (span / max_step).ceil() as usize;
            let dt = span / m as f64;
            for s in 0..m {
                cf4_step(&mut op, p.tau_q, t + s as f64 * dt, dt, &mut amps, &mut term, &mut tmp);
            }
            t = ts;
        }
        out.push(amps.clone());
    }
    out
}

fn trotter_pass(
    p: &QuenchProtocol,
    op: &IsingOperator,
    dt: f64,
    steps: usize,
    samples: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    let DenseState::Pure { mut amps, .. } = DenseState::plus(op.n) else {
        unreachable!()
    };
    let times = p.step_times();
    let mut done = 0usize;
    let mut out = Vec::with_capacity(samples.len());
    for &ts in samples {
        let s = (ts - p.t_start()) / dt;
        let target = s.round();
        if (s - target).abs() > 1e-9 || target as usize > steps {
            return Err(Error::domain(format!("sample time {ts} is not a Trotter step boundary")));
        }
        while done < target as usize {
            let (j, h) = couplings(p.tau_q, times[done]);
            ising_phase(&mut amps, &op.bond_sum, dt * j);
            for q in 0..op.n {
                apply_rx(&mut amps, q, -2.0 * dt * h);
            }
            done += 1;
        }
        out.push(amps.clone());
    }
    Ok(out)
}

/// `ψ ← exp(+iγ Σ z_i z_{i+1}) ψ`.
fn ising_phase(psi: &mut [Complex64], bond_sum: &[f64], gamma: f64) {
    for (a, s) in psi.iter_mut().zip(bond_sum) {
        *a *= Complex64::from_polar(1.0, gamma * s);
    }
}

/// `RX(θ) = exp(−iθσ^x/2)` on qubit `q`.
pub fn apply_rx(psi: &mut [Complex64], q: usize, theta: f64) {
    let (s, c) = (0.5 * theta).sin_cos();
    let m = 1usize << q;
    let mis = Complex64::new(0.0, -s);
    for b in 0..psi.len() {
        if b & m == 0 {
            let (u, v) = (psi[b], psi[b | m]);
            psi[b] = c * u + mis * v;
            psi[b | m] = mis * u + c * v;
        }
    }
}

/// `RZ(θ) = exp(−iθσ^z/2)` on qubit `q`.
pub fn apply_rz(psi: &mut [Complex64], q: usize, theta: f64) {
    let m = 1usize << q;
    let lo = Complex64::from_polar(1.0, -0.5 * theta);
    let hi = Complex64::from_polar(1.0, 0.5 * theta);
    for (b, a) in psi.iter_mut().enumerate() {
        *a *= if b & m == 0 { lo } else { hi };
    }
}

pub fn apply_cx(psi: &mut [Complex64], control: usize, target: usize) {
    let (mc, mt) = (1usize << control, 1usize << target);
    for b in 0..psi.len() {
        if b & mc != 0 && b & mt == 0 {
            psi.swap(b, b | mt);
        }
    }
}

pub fn apply_h(psi: &mut [Complex64], q: usize) {
    let m = 1usize << q;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for b in 0..psi.len() {
        if b & m == 0 {
            let (u, v) = (psi[b], psi[b | m]);
            psi[b] = r * (u + v);
            psi[b | m] = r * (u - v);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSnapshot {
    pub t: f64,
    pub state: DenseState,
}

impl DenseSnapshot {
    pub fn observables(&self, tau_q: f64) -> Result<OracleObservables> {
        let (j, h) = couplings(tau_q, self.t);
        oracle_observables(&self.state, j, h)
    }
}

/// Closed-system evolution from `|+⟩^⊗N` at `t = −τ_Q`.
///
/// Continuous protocols use fourth-order commutator-free Magnus steps
/// (products of exponentials of frozen Hamiltonians) with step at most
/// `step_fraction·τ_Q`, halved until two passes agree to `refine_tol`.
/// Trotter protocols apply the layered product exactly.
pub fn evolve_statevector(
    p: &QuenchProtocol,
    n: usize,
    samples: &[f64],
    opts: &OracleOptions,
) -> Result<Vec<DenseSnapshot>> {
    p.validate()?;
    check_samples(p, samples)?;
    if n > MAX_STATEVECTOR_SITES {
        return Err(Error::domain(format!("statevector oracle needs N <= {MAX_STATEVECTOR_SITES}")));
    }
    guard(4 * 16 << n, opts)?;
    let op = dense_hamiltonian(n, 0.0, 0.0)?;
    let states = match p.evolution {
        Evolution::Trotter { dt, steps } => trotter_pass(p, &op, dt, steps, samples)?,
        Evolution::Continuous => {
            let mut step = opts.step_fraction * p.tau_q;
            let mut prev = continuous_pass(p, &op, samples, step);
            loop {
                step *= 0.5;
                if step < 1e-7 * p.tau_q {
                    return Err(Error::Integration {
                        k: f64::NAN,
                        t: p.t_end(),
                        reason: "statevector refinement did not settle".into(),
                    });
                }
                let next = continuous_pass(p, &op, samples, step);
                let diff = prev
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                prev = next;
                if diff < opts.refine_tol {
                    break;
                }
            }
            prev
        }
    };
    Ok(samples
        .iter()
        .zip(states)
        .map(|(&t, amps)| DenseSnapshot {
            t,
            state: DenseState::Pure { n, amps },
        })
        .collect())
}

/// `ρ̇ = −i[H, ρ] − λ[H, [H, ρ]]` from `|+⟩⟨+|` at `t = −τ_Q`, integrated
/// with adaptive Dormand–Prince steps on the full density matrix.
pub fn evolve_lindblad(
    p: &QuenchProtocol,
    n: usize,
    lambda: f64,
    samples: &[f64],
    opts: &OracleOptions,
) -> Result<Vec<DenseSnapshot>> {
    p.validate()?;
    check_samples(p, samples)?;
    if p.is_trotter() {
        return Err(Error::Unsupported("Lindblad oracle needs a continuous protocol".into()));
    }
    if n > opts.density_cap.min(MAX_DENSITY_SITES) {
        return Err(Error::domain(format!(
            "density-matrix oracle capped at N = {}",
            opts.density_cap.min(MAX_DENSITY_SITES)
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let tau = p.tau_q;
    integrate_lindblad(
        n,
        lambda,
        move |t| couplings(tau, t),
        p.t_start(),
        &DenseState::plus(n),
        samples,
        opts,
    )
}

/// Lindblad integration under an arbitrary schedule `t ↦ (J, h)`.
pub fn integrate_lindblad<S>(
    n: usize,
    lambda: f64,
    schedule: S,
    t0: f64,
    initial: &DenseState,
    samples: &[f64],
    opts: &OracleOptions,
) -> Result<Vec<DenseSnapshot>>
where
    S: Fn(f64) -> (f64, f64),
{
    let d = 1usize << n;
    guard(12 * 16 * d * d, opts)?;
    if initial.n_sites() != n {
        return Err(Error::domain("initial state has the wrong size"));
    }
    let DenseState::Mixed { rho, .. } = initial.to_mixed() else {
        unreachable!()
    };
    let y0: Vec<f64> = rho.iter().flat_map(|z| [z.re, z.im]).collect();
    let mut op = dense_hamiltonian(n, 0.0, 0.0)?;
    let mut r = vec![C0; d * d];
    let mut comm = vec![C0; d * d];
    let mut dd = vec![C0; d * d];
    let mut left = vec![C0; d * d];
    let mut col = vec![C0; d];
    // Writes `[H, m]` into `dst`; H is real symmetric so `mH` acts on rows.
    let commutator = |op: &IsingOperator, m: &[Complex64], left: &mut [Complex64], col: &mut [Complex64], dst: &mut [Complex64]| {
        for c in 0..d {
            op.apply_strided(m, d, c, col);
            for (r, v) in col.iter().enumerate() {
                left[r * d + c] = *v;
            }
        }
        for r in 0..d {
            op.apply_strided(&m[r * d..(r + 1) * d], 1, 0, col);
            for c in 0..d {
                dst[r * d + c] = left[r * d + c] - col[c];
            }
        }
    };
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (j, h) = schedule(t);
        op.j = j;
        op.h = h;
        for (z, w) in r.iter_mut().zip(y.chunks_exact(2)) {
            *z = Complex64::new(w[0], w[1]);
        }
        commutator(&op, &r, &mut left, &mut col, &mut comm);
        if lambda > 0.0 {
            commutator(&op, &comm, &mut left, &mut col, &mut dd);
        }
        let mi = Complex64::new(0.0, -1.0);
        for (q, out) in dy.chunks_exact_mut(2).enumerate() {
            let mut v = mi * comm[q];
            if lambda > 0.0 {
                v -= lambda * dd[q];
            }
            out[0] = v.re;
            out[1] = v.im;
        }
    };
    let (ys, _) = dopri5(rhs, t0, &y0, samples, &opts.tol, |_| f64::INFINITY).map_err(|e| {
        Error::Integration {
            k: f64::NAN,
            t: e.t,
            reason: e.reason,
        }
    })?;
    let tr0 = initial.trace();
    ys.into_iter()
        .zip(samples)
        .map(|(y, &t)| {
            let rho: Vec<Complex64> = y.chunks_exact(2).map(|w| Complex64::new(w[0], w[1])).collect();
            let s = DenseState::Mixed { n, rho };
            let drift = (s.trace() - tr0).abs();
            if drift > 1e-8 {
                return Err(Error::Integration {
                    k: f64::NAN,
                    t,
                    reason: format!("trace drifted by {drift:e}"),
                });
            }
            Ok(DenseSnapshot { t, state: s })
        })
        .collect()
}

/// Ground state of a frozen Hamiltonian, for tests and calibration.
pub fn ground_energy_dense(n: usize, j: f64, h: f64) -> Result<f64> {
    let m = dense_hamiltonian(n, j, h)?.to_dense()?;
    Ok(m.symmetric_eigenvalues().min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Variant;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_site_ring_counts_bond_twice() {
        let m = dense_hamiltonian(2, 1.0, 0.0).unwrap().to_dense().unwrap();
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-2.0, -2.0, 2.0, 2.0]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn two_site_ground_energy_matches_momentum_sector() {
        // One antiperiodic mode at k = π/2: E0 = −2√(J² + h²).
        for (j, h) in [(1.0, 0.0), (0.3, 1.1), (2.0, 0.5)] {
            let e = ground_energy_dense(2, j, h).unwrap();
            assert!(close(e, -2.0 * (j * j + h * h as f64).sqrt(), 1e-12));
            let m = crate::observables::ground_energy(2, j, h).unwrap();
            assert!(close(e, m, 1e-12));
        }
    }

    #[test]
    fn paramagnet_ground_state() {
        assert!(close(ground_energy_dense(4, 0.0, 1.0).unwrap(), -4.0, 1e-12));
        let op = dense_hamiltonian(4, 0.0, 1.0).unwrap();
        let DenseState::Pure { amps, .. } = DenseState::plus(4) else { unreachable!() };
        assert!(close(op.energy(&amps), -4.0, 1e-12));
    }

    #[test]
    fn rejects_sizes() {
        assert!(dense_hamiltonian(1, 1.0, 1.0).is_err());
        assert!(dense_hamiltonian(15, 1.0, 1.0).is_err());
        assert!(dense_hamiltonian(3, 1.0, 1.0).is_ok());
    }

    #[test]
    fn plus_state_observables() {
        let o = oracle_observables(&DenseState::plus(5), 1.0, 1.0).unwrap();
        assert!(o.m_x.iter().all(|&m| close(m, 1.0, 1e-12)));
        assert!(close(o.n_def, 0.5, 1e-12));
        for x in 1..3 {
            assert!(o.zz_at(x).abs() < 1e-12);
            assert!(o.xx_at(x).abs() < 1e-12);
        }
        assert!(close(o.energy, -5.0, 1e-12));
    }

    #[test]
    fn ghz_observables() {
        let o = oracle_observables(&DenseState::ghz(6), 1.0, 0.0).unwrap();
        for i in 0..6 {
            for k in 0..6 {
                assert!(close(o.c_zz[i * 6 + k], 1.0, 1e-12));
            }
        }
        assert!(o.n_def.abs() < 1e-15);
        let m = oracle_observables(&DenseState::ghz(6).to_mixed(), 1.0, 0.0).unwrap();
        assert!(close(o.energy, m.energy, 1e-14) && close(o.c_zz[1], m.c_zz[1], 1e-14));
    }

    #[test]
    fn gate_kernels() {
        let DenseState::Pure { amps, .. } = DenseState::plus(2) else { unreachable!() };
        let mut psi = amps.clone();
        apply_rx(&mut psi, 0, std::f64::consts::PI);
        apply_rx(&mut psi, 1, std::f64::consts::PI);
        for a in &psi {
            assert!(close(a.norm_sqr(), 0.25, 1e-15));
        }
        // CX RZ(−2γ) CX = exp(iγ z z).
        let mut a = vec![Complex64::new(0.5, 0.0); 4];
        let mut b = a.clone();
        apply_cx(&mut a, 0, 1);
        apply_rz(&mut a, 1, -0.6);
        apply_cx(&mut a, 0, 1);
        ising_phase(&mut b, &[1.0, -1.0, -1.0, 1.0], 0.3);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).norm() < 1e-15);
        }
        let mut h = vec![Complex64::new(1.0, 0.0), C0];
        apply_h(&mut h, 0);
        assert!(close(h[1].re, std::f64::consts::FRAC_1_SQRT_2, 1e-15));
    }

    #[test]
    fn statevector_starts_in_plus_state() {
        let p = QuenchProtocol::continuous(2.0, Variant::FullQuench).unwrap();
        let s = evolve_statevector(&p, 8, &[-2.0], &OracleOptions::default()).unwrap();
        assert_eq!(s[0].state, DenseState::plus(8));
    }

    #[test]
    fn frozen_hamiltonian_conserves_energy_under_taylor() {
        let op = dense_hamiltonian(6, 0.7, 1.3).unwrap();
        let DenseState::Pure { mut amps, .. } = DenseState::plus(6) else { unreachable!() };
        let e0 = op.energy(&amps);
        let (mut t1, mut t2) = (vec![C0; 64], vec![C0; 64]);
        expm_apply(&op, 3.7, &mut amps, &mut t1, &mut t2);
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        assert!(close(norm, 1.0, 1e-13));
        assert!(close(op.energy(&amps), e0, 1e-12));
    }

    #[test]
    fn lindblad_unitary_limit_matches_statevector() {
        let p = QuenchProtocol::continuous(0.5, Variant::FullQuench).unwrap();
        let ts = [0.0, 0.5];
        let opts = OracleOptions::default();
        let a = evolve_statevector(&p, 4, &ts, &opts).unwrap();
        let b = evolve_lindblad(&p, 4, 0.0, &ts, &opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let ox = x.observables(0.5).unwrap();
            let oy = y.observables(0.5).unwrap();
            assert!(close(ox.energy, oy.energy, 1e-8));
            assert!(close(ox.n_def, oy.n_def, 1e-8));
            for (u, v) in ox.c_xx.iter().zip(&oy.c_xx) {
                assert!(close(*u, *v, 1e-8));
            }
        }
    }

    #[test]
    fn double_commutator_conserves_frozen_energy() {
        let (j, h) = (1.0, 0.7);
        let ts: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
        let out = integrate_lindblad(4, 0.8, |_| (j, h), 0.0, &DenseState::plus(4), &ts, &OracleOptions::default())
            .unwrap();
        let e0 = oracle_observables(&out[0].state, j, h).unwrap().energy;
        let mut prev = f64::INFINITY;
        for s in &out {
            let pur = s.state.purity();
            assert!(pur <= prev + 1e-12);
            prev = pur;
            assert!(close(oracle_observables(&s.state, j, h).unwrap().energy, e0, 1e-9));
        }
        assert!(prev < 0.99);
    }

    #[test]
    fn lindblad_guards() {
        let p = QuenchProtocol::continuous(1.0, Variant::FullQuench).unwrap();
        assert!(evolve_lindblad(&p, 7, 0.1, &[0.0], &OracleOptions::default()).is_err());
        let t = QuenchProtocol::trotter(0.25, 8, Variant::FullQuench).unwrap();
        assert!(matches!(
            evolve_lindblad(&t, 4, 0.0, &[0.0], &OracleOptions::default()),
            Err(Error::Unsupported(_))
        ));
        let tight = OracleOptions { memory_budget: 1024, ..Default::default() };
        assert!(matches!(
            evolve_statevector(&p, 10, &[0.0], &tight),
            Err(Error::Resource(_))
        ));
    }
}
