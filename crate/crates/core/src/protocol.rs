//! Linear quench schedules, the antiperiodic momentum grid and the per-mode
//! Nambu-space field.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding whether a time lies on the protocol interval.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `t ∈ [−τ_Q, 0]`, ending at the critical point.
    ToCriticalPoint,
    /// `t ∈ [−τ_Q, +τ_Q]`, ending at the classical Ising point.
    FullQuench,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Evolution {
    Continuous,
    Trotter { dt: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    pub tau_q: f64,
    pub variant: Variant,
    pub evolution: Evolution,
}

/// Couplings at one instant. `eps` is absent at `J = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub j: f64,
    pub h: f64,
    pub eps: Option<f64>,
}

/// `J(t) = 1 + t/τ_Q`, `h(t) = 1 − t/τ_Q` without range checks.
#[inline]
pub fn couplings(tau_q: f64, t: f64) -> (f64, f64) {
    let s = t / tau_q;
    (1.0 + s, 1.0 - s)
}

impl QuenchProtocol {
    pub fn new(tau_q: f64, variant: Variant, evolution: Evolution) -> Result<Self> {
        let p = QuenchProtocol {
            tau_q,
            variant,
            evolution,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn continuous(tau_q: f64, variant: Variant) -> Result<Self> {
        Self::new(tau_q, variant, Evolution::Continuous)
    }

    /// Trotterized protocol; `τ_Q` follows from `steps · dt` and the variant.
    pub fn trotter(dt: f64, steps: usize, variant: Variant) -> Result<Self> {
        let total = dt * steps as f64;
        let tau_q = match variant {
            Variant::ToCriticalPoint => total,
            Variant::FullQuench => total / 2.0,
        };
        Self::new(tau_q, variant, Evolution::Trotter { dt, steps })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_q.is_finite() && self.tau_q > 0.0) {
            return Err(Error::domain(format!("tau_q must be positive, got {}", self.tau_q)));
        }
        if let Evolution::Trotter { dt, steps } = self.evolution {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::domain(format!("dt must be positive, got {dt}")));
            }
            if steps == 0 {
                return Err(Error::domain("Trotter step count must be positive"));
            }
            let total = dt * steps as f64;
            if (total - self.duration()).abs() > 1e-12 * self.duration().max(1.0) {
                return Err(Error::domain(format!(
                    "steps*dt = {total} does not match protocol duration {}",
                    self.duration()
                )));
            }
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        -self.tau_q
    }

    pub fn t_end(&self) -> f64 {
        match self.variant {
            Variant::ToCriticalPoint => 0.0,
            Variant::FullQuench => self.tau_q,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = TIME_SLACK * self.tau_q.max(1.0);
        t >= self.t_start() - slack && t <= self.t_end() + slack
    }

    pub fn is_trotter(&self) -> bool {
        matches!(self.evolution, Evolution::Trotter { .. })
    }

    pub fn schedule_at(&self, t: f64) -> Result<Schedule> {
        if !t.is_finite() || !self.contains(t) {
            return Err(Error::domain(format!(
                "t = {t} outside protocol interval [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let (j, h) = couplings(self.tau_q, t);
        // J = 0 only at the opening endpoint, where 1 − h/J has no value.
        let eps = if j.abs() < 1e-15 { None } else { Some(1.0 - h / j) };
        Ok(Schedule { j, h, eps })
    }

    /// Hamiltonian evaluation times `t_s = t_i + s·dt`, `s = 1..=P`.
    /// Empty for continuous protocols.
    pub fn step_times(&self) -> Vec<f64> {
        match self.evolution {
            Evolution::Continuous => Vec::new(),
            Evolution::Trotter { dt, steps } => (1..=steps)
                .map(|s| {
                    if s == steps {
                        self.t_end()
                    } else {
                        self.t_start() + s as f64 * dt
                    }
                })
                .collect(),
        }
    }

    /// Short human-readable description, used for provenance tags.
    pub fn tag(&self) -> String {
        let v = match self.variant {
            Variant::ToCriticalPoint => "qcp",
            Variant::FullQuench => "full",
        };
        match self.evolution {
            Evolution::Continuous => format!("continuous/{v}/tau_q={}", self.tau_q),
            Evolution::Trotter { dt, steps } => {
                format!("trotter/{v}/tau_q={}/dt={dt}/steps={steps}", self.tau_q)
            }
        }
    }
}

/// Positive momenta of the even-parity sector, `k_n = (2π/N)(n + ½)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    pub n_sites: usize,
    pub modes: Vec<f64>,
}

impl MomentumGrid {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

pub fn momentum_grid(n_sites: usize) -> Result<MomentumGrid> {
    if n_sites < 2 || n_sites % 2 != 0 {
        return Err(Error::domain(format!(
            "system size must be even and >= 2, got {n_sites}"
        )));
    }
    let modes = (0..n_sites / 2)
        .map(|n| 2.0 * PI / n_sites as f64 * (n as f64 + 0.5))
        .collect();
    Ok(MomentumGrid { n_sites, modes })
}

/// Nambu-space field `h_k = (0, 2J sin k, 2h − 2J cos k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoField {
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl PseudoField {
    pub fn as_array(&self) -> [f64; 3] {
        [self.hx, self.hy, self.hz]
    }

    pub fn norm(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    pub fn dot(&self, n: &[f64; 3]) -> f64 {
        self.hx * n[0] + self.hy * n[1] + self.hz * n[2]
    }
}

#[inline]
pub fn pseudo_field(k: f64, j: f64, h: f64) -> PseudoField {
    let (s, c) = k.sin_cos();
    PseudoField {
        hx: 0.0,
        hy: 2.0 * j * s,
        hz: 2.0 * h - 2.0 * j * c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn schedule_endpoints_and_critical_point() {
        let p = QuenchProtocol::continuous(2.0, Variant::FullQuench).unwrap();
        let s = p.schedule_at(-2.0).unwrap();
        assert_eq!((s.j, s.h), (0.0, 2.0));
        assert!(s.eps.is_none());

        let s = p.schedule_at(0.0).unwrap();
        assert_eq!((s.j, s.h, s.eps), (1.0, 1.0, Some(0.0)));

        let s = p.schedule_at(2.0).unwrap();
        assert_eq!((s.j, s.h, s.eps), (2.0, 0.0, Some(1.0)));
    }

    #[test]
    fn schedule_rejects_outside_interval() {
        let p = QuenchProtocol::continuous(2.0, Variant::ToCriticalPoint).unwrap();
        assert!(p.schedule_at(0.5).is_err());
        assert!(p.schedule_at(-2.5).is_err());
        assert!(p.schedule_at(f64::NAN).is_err());
    }

    #[test]
    fn schedule_is_affine() {
        let p = QuenchProtocol::continuous(3.0, Variant::FullQuench).unwrap();
        let (t1, t2) = (-2.2, 1.3);
        let a = p.schedule_at(t1).unwrap();
        let b = p.schedule_at(t2).unwrap();
        let m = p.schedule_at(0.5 * (t1 + t2)).unwrap();
        assert!(close(m.j, 0.5 * (a.j + b.j), 1e-15));
        assert!(close(m.h, 0.5 * (a.h + b.h), 1e-15));
    }

    #[test]
    fn protocol_validation() {
        assert!(QuenchProtocol::continuous(0.0, Variant::FullQuench).is_err());
        assert!(QuenchProtocol::continuous(-1.0, Variant::FullQuench).is_err());
        assert!(QuenchProtocol::new(
            2.0,
            Variant::ToCriticalPoint,
            Evolution::Trotter { dt: 0.25, steps: 7 }
        )
        .is_err());
        let p = QuenchProtocol::trotter(0.2, 10, Variant::ToCriticalPoint).unwrap();
        assert!(close(p.tau_q, 2.0, 1e-15));
        let p = QuenchProtocol::trotter(0.25, 16, Variant::FullQuench).unwrap();
        assert!(close(p.tau_q, 2.0, 1e-15));
    }

    #[test]
    fn trotter_step_times_are_step_endpoints() {
        let p = QuenchProtocol::trotter(0.25, 16, Variant::FullQuench).unwrap();
        let ts = p.step_times();
        assert_eq!(ts.len(), 16);
        assert!(close(ts[0], -1.75, 1e-15));
        assert_eq!(*ts.last().unwrap(), 2.0);
    }

    #[test]
    fn momentum_grid_examples() {
        let g = momentum_grid(2).unwrap();
        assert_eq!(g.modes.len(), 1);
        assert!(close(g.modes[0], PI / 2.0, 1e-15));

        let g = momentum_grid(4).unwrap();
        assert!(close(g.modes[0], PI / 4.0, 1e-15));
        assert!(close(g.modes[1], 3.0 * PI / 4.0, 1e-15));

        let g = momentum_grid(120).unwrap();
        assert_eq!(g.len(), 60);
        assert!(close(g.modes[0], PI / 120.0, 1e-15));
        assert!(g.modes.iter().all(|&k| k > 0.0 && k < PI));
        assert!(g.modes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn momentum_grid_rejects_odd_or_zero() {
        assert!(momentum_grid(0).is_err());
        assert!(momentum_grid(3).is_err());
        assert!(momentum_grid(121).is_err());
    }

    #[test]
    fn pseudo_field_examples() {
        let f = pseudo_field(PI / 2.0, 1.0, 1.0);
        assert!(close(f.hx, 0.0, 0.0));
        assert!(close(f.hy, 2.0, 1e-15));
        assert!(close(f.hz, 2.0, 1e-15));

        for k in [0.1, 1.0, 2.5] {
            let f = pseudo_field(k, 0.0, 2.0);
            assert_eq!(f.as_array(), [0.0, 0.0, 4.0]);
        }

        let f = pseudo_field(PI / 3.0, 1.0, 1.0);
        assert!(close(f.hy, 3f64.sqrt(), 1e-15));
        assert!(close(f.hz, 1.0, 1e-15));
    }

    #[test]
    fn minimal_gap_sits_at_critical_point_and_smallest_k() {
        for n in (4..=128).step_by(2) {
            let grid = momentum_grid(n).unwrap();
            let tau = 3.0;
            let p = QuenchProtocol::continuous(tau, Variant::FullQuench).unwrap();
            let gap_at = |t: f64| {
                let s = p.schedule_at(t).unwrap();
                grid.modes
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| (i, pseudo_field(k, s.j, s.h).norm()))
                    .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
            };
            let (idx0, g0) = gap_at(0.0);
            assert_eq!(idx0, 0, "N={n}");
            for i in 0..=60 {
                let t = -tau + 2.0 * tau * i as f64 / 60.0;
                let (_, g) = gap_at(t);
                assert!(g >= g0 - 1e-14, "N={n} t={t}");
                let s = p.schedule_at(t).unwrap();
                assert!(grid.modes.iter().all(|&k| pseudo_field(k, s.j, s.h).hx == 0.0));
            }
        }
    }
}
