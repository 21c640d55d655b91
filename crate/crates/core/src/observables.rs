//! Scalar diagnostics of a run: defect density, energies, power-law fits and
//! shot-noise bookkeeping.

use serde::{Deserialize, Serialize};

use crate::correlators::{
    fermion_correlators, magnetization_x, xx_profile, zz_nearest_neighbour, zz_profile,
    FermionCorrelators,
};
use crate::error::{Error, Result};
use crate::mode_dynamics::ModeEnsemble;
use crate::protocol::{momentum_grid, pseudo_field, QuenchProtocol};

/// Fraction of broken bonds, `(1 − ⟨σ^z_i σ^z_{i+1}⟩)/2`.
pub fn defect_density(fc: &FermionCorrelators) -> Result<f64> {
    Ok(defect_density_from_zz(zz_nearest_neighbour(fc)?))
}

#[inline]
pub fn defect_density_from_zz(zz_nn: f64) -> f64 {
    0.5 * (1.0 - zz_nn)
}

/// `⟨H⟩` of the chain. Within a Cooper-pair subspace the Nambu form
/// `Ψ†(h·τ)Ψ` acts as `−h·σ`, so each mode contributes `h^z − h·n`.
pub fn total_energy(e: &ModeEnsemble) -> f64 {
    let (_, h) = e.couplings();
    let fields = e.fields();
    let pairs: f64 = fields
        .iter()
        .zip(&e.states)
        .map(|(f, s)| f.hz - f.dot(&s.n))
        .sum();
    -(e.n_sites() as f64) * h + pairs
}

/// Ground-state energy of the even-parity sector.
pub fn ground_energy(n_sites: usize, j: f64, h: f64) -> Result<f64> {
    let grid = momentum_grid(n_sites)?;
    let vac: f64 = grid
        .modes
        .iter()
        .map(|&k| {
            let f = pseudo_field(k, j, h);
            f.norm() - f.hz
        })
        .sum();
    Ok(-(n_sites as f64) * h - vac)
}

/// Energy above the instantaneous ground state, `Σ(|h_k| − h_k·n_k)`.
pub fn residual_energy(e: &ModeEnsemble) -> f64 {
    e.fields()
        .iter()
        .zip(&e.states)
        .map(|(f, s)| f.norm() - f.dot(&s.n))
        .sum()
}

/// Energy density of a dephased run in excess of the matching closed run.
pub fn excess_energy(noisy: &ModeEnsemble, clean: &ModeEnsemble) -> Result<f64> {
    if noisy.protocol != clean.protocol
        || noisy.n_sites() != clean.n_sites()
        || (noisy.t - clean.t).abs() > 1e-12
    {
        return Err(Error::domain("excess energy needs runs with matching protocol, size and time"));
    }
    if clean.lambda != 0.0 {
        return Err(Error::domain("reference run must have lambda = 0"));
    }
    Ok((total_energy(noisy) - total_energy(clean)) / noisy.n_sites() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    /// `β` in `y ∝ τ_Q^{−β}`.
    pub exponent: f64,
    pub rmse_log: f64,
}

/// Least-squares line in log–log space.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::domain("power-law fit needs at least three points"));
    }
    if points.iter().any(|&(t, y)| !(t > 0.0) || !(y > 0.0)) {
        return Err(Error::domain("power-law fit needs positive abscissae and values"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(t, y)| (t.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("power-law fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rmse = (lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(PowerLawFit {
        amplitude: icpt.exp(),
        exponent: -slope,
        rmse_log: rmse,
    })
}

/// Standard-error floor `1/√shots`.
pub fn shot_error_floor(shots: u64) -> Result<f64> {
    if shots == 0 {
        return Err(Error::domain("shot count must be positive"));
    }
    Ok(1.0 / (shots as f64).sqrt())
}

/// Standard error of a single-qubit expectation value `m`.
pub fn magnetization_se(m: f64, shots: u64) -> Result<f64> {
    if shots == 0 {
        return Err(Error::domain("shot count must be positive"));
    }
    if !(m.abs() <= 1.0) {
        return Err(Error::domain(format!("expectation value {m} outside [-1, 1]")));
    }
    Ok(((1.0 - m * m) / shots as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub m_x: f64,
    pub n_def: f64,
    pub e_total: f64,
    pub e_res: f64,
    /// `C(t, x)` for `x = 1..=c_zz.len()`.
    pub c_zz: Vec<f64>,
    pub c_xx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub protocol: QuenchProtocol,
    pub n_sites: usize,
    pub lambda: f64,
    pub samples: Vec<SampleRecord>,
}

impl RunRecord {
    pub fn last(&self) -> &SampleRecord {
        self.samples.last().expect("run record has samples")
    }
}

pub fn sample_record(e: &ModeEnsemble, x_max: usize) -> Result<SampleRecord> {
    let fc = fermion_correlators(e);
    let c_zz = zz_profile(&fc, x_max)?;
    let c_xx = xx_profile(&fc, x_max)?;
    let zz_nn = zz_nearest_neighbour(&fc)?;
    let e_res = residual_energy(e);
    if e_res < -1e-9 {
        return Err(Error::Consistency(format!("negative residual energy {e_res}")));
    }
    Ok(SampleRecord {
        t: e.t,
        m_x: magnetization_x(&fc).x,
        n_def: defect_density_from_zz(zz_nn),
        e_total: total_energy(e),
        e_res,
        c_zz,
        c_xx,
    })
}

pub fn run_record(ensembles: &[ModeEnsemble], x_max: usize) -> Result<RunRecord> {
    let first = ensembles
        .first()
        .ok_or_else(|| Error::domain("no ensembles to record"))?;
    Ok(RunRecord {
        protocol: first.protocol,
        n_sites: first.n_sites(),
        lambda: first.lambda,
        samples: ensembles
            .iter()
            .map(|e| sample_record(e, x_max))
            .collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_dynamics::{run_quench, run_to_end, BlochState, SolverOptions};
    use crate::protocol::{Variant, MomentumGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defect_density_limits() {
        assert_eq!(defect_density_from_zz(0.0), 0.5);
        assert_eq!(defect_density_from_zz(1.0), 0.0);
        assert_eq!(defect_density_from_zz(-1.0), 1.0);
    }

    #[test]
    fn ground_state_energy_calibration() {
        // Fixes the sign linking n_k to the Nambu expectation value.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 2 * rng.gen_range(1..40);
            let tau = rng.gen_range(0.5..10.0);
            let t = rng.gen_range(-tau * 0.999..tau);
            let p = QuenchProtocol::continuous(tau, Variant::FullQuench).unwrap();
            let e = ModeEnsemble::ground_state(p, n, 0.0, t).unwrap();
            let (j, h) = e.couplings();
            let exact = ground_energy(n, j, h).unwrap();
            assert!((total_energy(&e) - exact).abs() < 1e-10 * exact.abs().max(1.0));
            assert!(residual_energy(&e).abs() < 1e-12);
        }
    }

    #[test]
    fn paramagnetic_start_energy() {
        let p = QuenchProtocol::continuous(2.0, Variant::FullQuench).unwrap();
        let e = ModeEnsemble::ground_state(p, 10, 0.0, -2.0).unwrap();
        assert!((total_energy(&e) + 20.0).abs() < 1e-12);
    }

    #[test]
    fn quench_starts_with_zero_residual_energy() {
        let p = QuenchProtocol::continuous(1.0, Variant::FullQuench).unwrap();
        let es = run_quench(&p, 4, 0.0, &[-1.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(residual_energy(&es[0]), 0.0);
        assert!(residual_energy(&es[1]) > 0.0);
    }

    #[test]
    fn slower_quenches_leave_less_residual_energy() {
        let mut prev = f64::INFINITY;
        for tau in [8.0, 16.0, 32.0, 64.0] {
            let p = QuenchProtocol::continuous(tau, Variant::ToCriticalPoint).unwrap();
            let e = run_to_end(&p, 64, 0.0, &SolverOptions::default()).unwrap();
            let er = residual_energy(&e);
            assert!(er < prev, "tau={tau}: {er} !< {prev}");
            prev = er;
        }
    }

    #[test]
    fn end_of_quench_energy_tracks_defects() {
        for lambda in [0.0, 0.7] {
            let p = QuenchProtocol::continuous(1.5, Variant::FullQuench).unwrap();
            let e = run_to_end(&p, 24, lambda, &SolverOptions::default()).unwrap();
            let fc = fermion_correlators(&e);
            let nd = defect_density(&fc).unwrap();
            assert!((residual_energy(&e) / 24.0 - 4.0 * nd).abs() < 1e-8);
        }
    }

    #[test]
    fn excess_energy_checks_and_values() {
        let p = QuenchProtocol::continuous(4.0, Variant::FullQuench).unwrap();
        let opts = SolverOptions::default();
        let clean = run_to_end(&p, 16, 0.0, &opts).unwrap();
        assert_eq!(excess_energy(&clean, &clean).unwrap(), 0.0);
        let noisy = run_to_end(&p, 16, 1.0, &opts).unwrap();
        assert!(excess_energy(&noisy, &clean).is_ok());
        assert!(excess_energy(&clean, &noisy).is_err());
        let other = run_to_end(&p, 18, 0.0, &opts).unwrap();
        assert!(excess_energy(&noisy, &other).is_err());
    }

    #[test]
    fn power_law_examples() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0].iter().map(|&t: &f64| (t, 3.0 * t.powf(-0.5))).collect();
        let f = power_law_fit(&pts).unwrap();
        assert!((f.amplitude - 3.0).abs() < 1e-12);
        assert!((f.exponent - 0.5).abs() < 1e-12);
        assert!(f.rmse_log < 1e-12);

        let f = power_law_fit(&[(1.0, 0.2), (2.0, 0.2), (5.0, 0.2)]).unwrap();
        assert!(f.exponent.abs() < 1e-14);

        assert!(power_law_fit(&[(1.0, 0.2), (2.0, -0.2), (5.0, 0.2)]).is_err());
        assert!(power_law_fit(&[(1.0, 0.2), (2.0, 0.2)]).is_err());
    }

    #[test]
    fn shot_noise_examples() {
        assert!((shot_error_floor(1 << 20).unwrap() - 9.765625e-4).abs() < 1e-15);
        assert_eq!(magnetization_se(1.0, 100).unwrap(), 0.0);
        assert_eq!(magnetization_se(-1.0, 100).unwrap(), 0.0);
        assert_eq!(magnetization_se(0.0, 4).unwrap(), 0.5);
        assert!(magnetization_se(1.2, 4).is_err());
        assert!(shot_error_floor(0).is_err());
    }

    #[test]
    fn defect_density_stays_in_unit_interval() {
        let grid = MomentumGrid { n_sites: 12, modes: momentum_grid(12).unwrap().modes };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let states = grid
                .modes
                .iter()
                .map(|&k| {
                    let r: f64 = rng.gen_range(0.0..1.0);
                    let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                    let ph: f64 = rng.gen_range(0.0..6.3);
                    BlochState { k, n: [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()] }
                })
                .collect();
            let e = ModeEnsemble {
                grid: grid.clone(),
                states,
                t: 0.0,
                protocol: QuenchProtocol::continuous(1.0, Variant::FullQuench).unwrap(),
                lambda: 0.0,
            };
            let nd = defect_density(&fermion_correlators(&e)).unwrap();
            assert!((-1e-12..=1.0 + 1e-12).contains(&nd));
        }
    }
}
