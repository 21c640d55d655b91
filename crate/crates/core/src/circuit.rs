//! The Trotterized quench as an explicit gate list, its OpenQASM 3 text
//! form, and a statevector simulator for it.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{apply_cx, apply_h, apply_rx, apply_rz, DenseState, MAX_STATEVECTOR_SITES};
use crate::protocol::{couplings, Evolution, QuenchProtocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::X => "x",
            Basis::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Result<Basis> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Basis::X),
            "z" => Ok(Basis::Z),
            _ => Err(Error::domain(format!("unknown measurement basis '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    Rx { q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    Cx { control: usize, target: usize },
}

impl Gate {
    fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::Rx { q, .. } | Gate::Rz { q, .. } => (q, None),
            Gate::Cx { control, target } => (control, Some(target)),
        }
    }
}

/// A gate sequence acting on `|+⟩^⊗N`, optionally followed by a
/// measurement of every qubit. X-basis measurement is a Hadamard layer
/// before the computational-basis readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateProgram {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub measure_basis: Option<Basis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateCounts {
    pub rx: usize,
    pub rz: usize,
    pub cx: usize,
    pub h: usize,
    pub measure: usize,
}

impl GateCounts {
    pub fn total(&self) -> usize {
        self.rx + self.rz + self.cx + self.h + self.measure
    }
}

impl GateProgram {
    pub fn new(n_qubits: usize) -> Self {
        GateProgram {
            n_qubits,
            gates: Vec::new(),
            measure_basis: None,
        }
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                Gate::Rx { .. } => c.rx += 1,
                Gate::Rz { .. } => c.rz += 1,
                Gate::Cx { .. } => c.cx += 1,
            }
        }
        if let Some(b) = self.measure_basis {
            c.measure = self.n_qubits;
            if b == Basis::X {
                c.h = self.n_qubits;
            }
        }
        c
    }

    /// Circuit depth with as-soon-as-possible scheduling, counting the
    /// basis change but not the readout.
    pub fn depth(&self) -> usize {
        let mut level = vec![0usize; self.n_qubits];
        for g in &self.gates {
            match g.qubits() {
                (q, None) => level[q] += 1,
                (a, Some(b)) => {
                    let d = level[a].max(level[b]) + 1;
                    level[a] = d;
                    level[b] = d;
                }
            }
        }
        let d = level.into_iter().max().unwrap_or(0);
        d + usize::from(self.measure_basis == Some(Basis::X))
    }

    fn validate(&self) -> Result<()> {
        for g in &self.gates {
            let (a, b) = g.qubits();
            if a >= self.n_qubits || b.is_some_and(|b| b >= self.n_qubits || b == a) {
                return Err(Error::domain(format!("gate {g:?} invalid on {} qubits", self.n_qubits)));
            }
        }
        Ok(())
    }
}

/// Bonds of the first sublayer `(0,1), (2,3), …` and of the second
/// `(1,2), …, (N−1,0)`.
pub fn sublayers(n: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let odd = (0..n).step_by(2).map(|i| (i, (i + 1) % n)).collect();
    let even = (1..n).step_by(2).map(|i| (i, (i + 1) % n)).collect();
    (odd, even)
}

/// The full Trotterized protocol on `n` qubits.
pub fn emit_program(p: &QuenchProtocol, n: usize, basis: Basis) -> Result<GateProgram> {
    let steps = match p.evolution {
        Evolution::Trotter { steps, .. } => steps,
        Evolution::Continuous => {
            return Err(Error::domain("circuit emission needs a Trotter protocol"));
        }
    };
    emit_program_prefix(p, n, basis, steps)
}

/// The first `steps` Trotter steps, then measurement.
pub fn emit_program_prefix(p: &QuenchProtocol, n: usize, basis: Basis, steps: usize) -> Result<GateProgram> {
    p.validate()?;
    let (dt, total) = match p.evolution {
        Evolution::Trotter { dt, steps } => (dt, steps),
        Evolution::Continuous => {
            return Err(Error::domain("circuit emission needs a Trotter protocol"));
        }
    };
    if n < 2 || n % 2 != 0 {
        return Err(Error::domain(format!("circuit needs an even chain, got N = {n}")));
    }
    if steps > total {
        return Err(Error::domain(format!("prefix of {steps} steps exceeds {total}")));
    }
    let (odd, even) = sublayers(n);
    let mut gates = Vec::with_capacity(steps * 4 * n);
    for &t in p.step_times().iter().take(steps) {
        let (j, h) = couplings(p.tau_q, t);
        let rz = -2.0 * dt * j;
        for &(a, b) in odd.iter().chain(&even) {
            gates.push(Gate::Cx { control: a, target: b });
            gates.push(Gate::Rz { q: b, theta: rz });
            gates.push(Gate::Cx { control: a, target: b });
        }
        gates.extend((0..n).map(|q| Gate::Rx { q, theta: -2.0 * dt * h }));
    }
    Ok(GateProgram {
        n_qubits: n,
        gates,
        measure_basis: Some(basis),
    })
}

pub fn qasm_file_name(n: usize, dt: f64, steps: usize, basis: Basis) -> String {
    format!("tfim_N{n}_dt{dt}_steps{steps}_{}.qasm", basis.label())
}

/// OpenQASM 3 text; angles are written in shortest round-trip form.
pub fn to_qasm3(g: &GateProgram) -> String {
    let n = g.n_qubits;
    let mut s = String::new();
    s.push_str("OPENQASM 3.0;\ninclude \"stdgates.inc\";\n");
    let _ = writeln!(s, "qubit[{n}] q;");
    let _ = writeln!(s, "bit[{n}] c;");
    for gate in &g.gates {
        let _ = match *gate {
            Gate::Rx { q, theta } => writeln!(s, "rx({theta:?}) q[{q}];"),
            Gate::Rz { q, theta } => writeln!(s, "rz({theta:?}) q[{q}];"),
            Gate::Cx { control, target } => writeln!(s, "cx q[{control}], q[{target}];"),
        };
    }
    if let Some(b) = g.measure_basis {
        if b == Basis::X {
            for q in 0..n {
                let _ = writeln!(s, "h q[{q}];");
            }
        }
        for q in 0..n {
            let _ = writeln!(s, "c[{q}] = measure q[{q}];");
        }
    }
    s
}

fn qubit_ref(s: &str, line: usize) -> Result<usize> {
    let err = || Error::Parse {
        line,
        msg: format!("expected q[<index>], got '{s}'"),
    };
    let inner = s.trim().strip_prefix("q[").and_then(|r| r.strip_suffix(']')).ok_or_else(err)?;
    inner.parse().map_err(|_| err())
}

/// Parses the subset of OpenQASM 3 produced by [`to_qasm3`].
pub fn parse_qasm3(text: &str) -> Result<GateProgram> {
    let mut n: Option<usize> = None;
    let mut gates = Vec::new();
    let mut hadamards = 0usize;
    let mut measures = 0usize;
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.split("//").next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let perr = |msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let body = l.strip_suffix(';').ok_or_else(|| perr("missing ';'"))?.trim();
        if !seen_header {
            if body != "OPENQASM 3.0" {
                return Err(perr("expected 'OPENQASM 3.0;' header"));
            }
            seen_header = true;
            continue;
        }
        if body.starts_with("include ") {
            continue;
        }
        if let Some(rest) = body.strip_prefix("qubit[") {
            let (num, name) = rest.split_once(']').ok_or_else(|| perr("bad qubit declaration"))?;
            if name.trim() != "q" {
                return Err(perr("qubit register must be named q"));
            }
            n = Some(num.parse().map_err(|_| perr("bad qubit count"))?);
            continue;
        }
        if body.starts_with("bit[") {
            continue;
        }
        let nq = n.ok_or_else(|| perr("gate before qubit declaration"))?;
        let check = |q: usize| {
            if q < nq {
                Ok(q)
            } else {
                Err(perr("qubit index out of range"))
            }
        };
        if let Some((lhs, rhs)) = body.split_once('=') {
            let q = qubit_ref(rhs.trim().strip_prefix("measure").ok_or_else(|| perr("expected measure"))?, line)?;
            if lhs.trim() != format!("c[{q}]") {
                return Err(perr("measurement must target the matching bit"));
            }
            check(q)?;
            measures += 1;
            continue;
        }
        if measures > 0 {
            return Err(perr("gate after measurement"));
        }
        if let Some(rest) = body.strip_prefix("cx ") {
            let (a, b) = rest.split_once(',').ok_or_else(|| perr("cx needs two operands"))?;
            gates.push(Gate::Cx {
                control: check(qubit_ref(a, line)?)?,
                target: check(qubit_ref(b, line)?)?,
            });
            continue;
        }
        if let Some(rest) = body.strip_prefix("h ") {
            check(qubit_ref(rest, line)?)?;
            hadamards += 1;
            continue;
        }
        if hadamards > 0 {
            return Err(perr("rotation after basis change"));
        }
        let (name, rest) = body.split_once('(').ok_or_else(|| perr("unknown statement"))?;
        let (angle, target) = rest.split_once(')').ok_or_else(|| perr("unclosed angle"))?;
        let theta: f64 = angle.trim().parse().map_err(|_| perr("bad angle"))?;
        let q = check(qubit_ref(target, line)?)?;
        gates.push(match name.trim() {
            "rx" => Gate::Rx { q, theta },
            "rz" => Gate::Rz { q, theta },
            other => return Err(perr(&format!("unsupported gate '{other}'"))),
        });
    }
    let n = n.ok_or(Error::Parse {
        line: 0,
        msg: "no qubit declaration".into(),
    })?;
    let measure_basis = match (hadamards, measures) {
        (0, 0) => None,
        (0, m) if m == n => Some(Basis::Z),
        (h, m) if h == n && m == n => Some(Basis::X),
        _ => {
            return Err(Error::Parse {
                line: 0,
                msg: "partial basis change or measurement layer".into(),
            })
        }
    };
    Ok(GateProgram {
        n_qubits: n,
        gates,
        measure_basis,
    })
}

/// Applies the program to `|+⟩^⊗N` and returns the state just before
/// readout (after the basis change, if any).
pub fn simulate_program(g: &GateProgram) -> Result<DenseState> {
    if g.n_qubits > MAX_STATEVECTOR_SITES || g.n_qubits == 0 {
        return Err(Error::Resource(format!(
            "simulation supports 1..={MAX_STATEVECTOR_SITES} qubits, got {}",
            g.n_qubits
        )));
    }
    g.validate()?;
    let DenseState::Pure { mut amps, .. } = DenseState::plus(g.n_qubits) else {
        unreachable!()
    };
    for gate in &g.gates {
        match *gate {
            Gate::Rx { q, theta } => apply_rx(&mut amps, q, theta),
            Gate::Rz { q, theta } => apply_rz(&mut amps, q, theta),
            Gate::Cx { control, target } => apply_cx(&mut amps, control, target),
        }
    }
    if g.measure_basis == Some(Basis::X) {
        for q in 0..g.n_qubits {
            apply_h(&mut amps, q);
        }
    }
    Ok(DenseState::Pure {
        n: g.n_qubits,
        amps,
    })
}

/// Largest amplitude difference between two pure states.
pub fn max_amplitude_diff(a: &DenseState, b: &DenseState) -> Result<f64> {
    match (a, b) {
        (DenseState::Pure { amps: x, .. }, DenseState::Pure { amps: y, .. }) if x.len() == y.len() => Ok(x
            .iter()
            .zip(y)
            .map(|(u, v): (&Complex64, &Complex64)| (u - v).norm())
            .fold(0.0, f64::max)),
        _ => Err(Error::domain("states are not comparable pure states")),
    }
}
