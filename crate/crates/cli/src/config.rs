//! Run configuration: one TOML file with sections named after the core
//! modules. Command-line flags are applied on top of the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize};

use qkz_core::circuit::Basis;
use qkz_core::collapse::{GridSpec, DEFAULT_ORDER, THEORY_MASK};
use qkz_core::export::Manifest;
use qkz_core::mode_dynamics::{Integrator, SolverOptions};
use qkz_core::ode::Tolerances;
use qkz_core::protocol::{QuenchProtocol, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionKind {
    #[default]
    Continuous,
    Trotter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub tau_q: Vec<f64>,
    pub variant: Variant,
    pub evolution: EvolutionKind,
    pub dt: f64,
    #[serde(deserialize_with = "de_steps")]
    pub steps: Vec<usize>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            tau_q: vec![4.0],
            variant: Variant::ToCriticalPoint,
            evolution: EvolutionKind::Continuous,
            dt: 0.25,
            steps: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub integrator: Integrator,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let t = Tolerances::default();
        DynamicsSection {
            n: 120,
            lambda: vec![0.0],
            rtol: t.rtol,
            atol: t.atol,
            integrator: Integrator::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservablesSection {
    /// Sample times per continuous run, endpoints included. Trotter runs
    /// are sampled after every step.
    pub samples: usize,
    /// Largest separation recorded; defaults to `N/2`.
    pub x_max: Option<usize>,
    /// Only used to draw the shot-noise floor on plots.
    pub shots: Option<u64>,
    pub trajectory: bool,
    pub inputs: Vec<PathBuf>,
}

impl Default for ObservablesSection {
    fn default() -> Self {
        ObservablesSection {
            samples: 21,
            x_max: None,
            shots: None,
            trajectory: false,
            inputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseSection {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub spacing: f64,
    pub mask: f64,
    pub x_max: Option<usize>,
    pub order: usize,
    pub inputs: Vec<PathBuf>,
}

impl Default for CollapseSection {
    fn default() -> Self {
        let g = GridSpec::default();
        CollapseSection {
            a_min: g.a_min,
            a_max: g.a_max,
            b_min: g.b_min,
            b_max: g.b_max,
            spacing: g.spacing,
            mask: THEORY_MASK,
            x_max: None,
            order: DEFAULT_ORDER,
            inputs: Vec::new(),
        }
    }
}

impl CollapseSection {
    pub fn grid(&self) -> Result<GridSpec> {
        let g = GridSpec {
            a_min: self.a_min,
            a_max: self.a_max,
            b_min: self.b_min,
            b_max: self.b_max,
            spacing: self.spacing,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitSection {
    pub basis: Vec<String>,
    pub verify: bool,
}

impl Default for CircuitSection {
    fn default() -> Self {
        CircuitSection {
            basis: vec!["z".into()],
            verify: false,
        }
    }
}

impl CircuitSection {
    pub fn bases(&self) -> Result<Vec<Basis>> {
        let mut out = Vec::new();
        for b in &self.basis {
            if b.eq_ignore_ascii_case("both") {
                out.extend([Basis::Z, Basis::X]);
            } else {
                out.push(Basis::parse(b)?);
            }
        }
        out.dedup();
        if out.is_empty() {
            bail!("circuit.basis must not be empty");
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolSection,
    pub mode_dynamics: DynamicsSection,
    pub observables: ObservablesSection,
    pub collapse: CollapseSection,
    pub circuit: CircuitSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads a TOML config, or the resolved config stored in a manifest
    /// written by an earlier run.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
            let cfg = m
                .inputs
                .get("config")
                .cloned()
                .with_context(|| format!("{} has no stored config", path.display()))?;
            return Ok(serde_json::from_value(cfg)?);
        }
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn solver(&self) -> Result<SolverOptions> {
        let d = &self.mode_dynamics;
        if !(d.rtol > 0.0 && d.atol > 0.0) {
            bail!("tolerances must be positive");
        }
        Ok(SolverOptions {
            tol: Tolerances {
                rtol: d.rtol,
                atol: d.atol,
                ..Tolerances::default()
            },
            integrator: d.integrator,
        })
    }

    pub fn lambdas(&self) -> Result<Vec<f64>> {
        let l = &self.mode_dynamics.lambda;
        if l.is_empty() {
            bail!("mode_dynamics.lambda must not be empty");
        }
        if let Some(bad) = l.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            bail!("lambda must be finite and nonnegative, got {bad}");
        }
        Ok(l.clone())
    }

    /// Expands the protocol section into one protocol per sweep entry.
    pub fn protocols(&self) -> Result<Vec<QuenchProtocol>> {
        let p = &self.protocol;
        let out: Vec<QuenchProtocol> = match p.evolution {
            EvolutionKind::Continuous => p
                .tau_q
                .iter()
                .map(|&t| QuenchProtocol::continuous(t, p.variant))
                .collect::<qkz_core::Result<_>>()?,
            EvolutionKind::Trotter => p
                .steps
                .iter()
                .map(|&s| QuenchProtocol::trotter(p.dt, s, p.variant))
                .collect::<qkz_core::Result<_>>()?,
        };
        if out.is_empty() {
            bail!("protocol sweep is empty");
        }
        Ok(out)
    }

    pub fn x_max(&self) -> usize {
        self.observables.x_max.unwrap_or(self.mode_dynamics.n / 2)
    }
}

/// Parses `8..32` (inclusive), `8..=32`, `8,10,12`, or any comma list of
/// those forms.
pub fn parse_steps(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let (lo, hi): (usize, usize) = (
                lo.trim().parse().with_context(|| format!("bad step range {part:?}"))?,
                hi.trim().parse().with_context(|| format!("bad step range {part:?}"))?,
            );
            if hi < lo {
                bail!("empty step range {part:?}");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().with_context(|| format!("bad step count {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("no step counts in {s:?}");
    }
    Ok(out)
}

fn de_steps<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(usize),
        List(Vec<usize>),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::One(s) => Ok(vec![s]),
        Raw::List(v) => Ok(v),
        Raw::Text(t) => parse_steps(&t).map_err(serde::de::Error::custom),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_syntax() {
        assert_eq!(parse_steps("8..12").unwrap(), vec![8, 9, 10, 11, 12]);
        assert_eq!(parse_steps("2..=4, 10").unwrap(), vec![2, 3, 4, 10]);
        assert!(parse_steps("5..2").is_err());
        assert!(parse_steps("x").is_err());
    }

    #[test]
    fn toml_sections_and_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [protocol]
            evolution = "trotter"
            dt = 0.2
            steps = "2..6"
            variant = "full_quench"

            [mode_dynamics]
            n = 40
            lambda = [0.0, 1.0]

            [collapse]
            mask = 1e-3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.protocol.steps, vec![2, 3, 4, 5, 6]);
        assert_eq!(cfg.mode_dynamics.n, 40);
        assert_eq!(cfg.collapse.spacing, 0.025);
        assert_eq!(cfg.observables.samples, 21);
        let ps = cfg.protocols().unwrap();
        assert_eq!(ps.len(), 5);
        assert!((ps[4].tau_q - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[protocol]\ntau = 3\n").is_err());
    }

    #[test]
    fn json_round_trip_preserves_config() {
        let cfg = RunConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(serde_json::from_value::<RunConfig>(v).unwrap(), cfg);
    }
}
