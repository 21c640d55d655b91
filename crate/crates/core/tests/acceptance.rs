//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkz_core::circuit::{emit_program, max_amplitude_diff, simulate_program, Basis};
use qkz_core::collapse::{
    exponent_sweep, CorrelationDataset, CorrelationRecord, GridSpec, A_QND, B_QND, SHOT_MASK, THEORY_MASK,
};
use qkz_core::correlators::{fermion_correlators, magnetization_x, xx_connected, zz_connected};
use qkz_core::mode_dynamics::{run_quench, run_to_end, SolverOptions};
use qkz_core::observables::{defect_density, excess_energy, power_law_fit, total_energy};
use qkz_core::oracle::{evolve_statevector, OracleOptions};
use qkz_core::pfaffian::{pfaffian, SkewMatrix};
use qkz_core::pipeline::{
    collapse_sweep, continuous_to_qcp, end_defects, trotter_full, trotter_to_qcp, DEFAULT_FIG3_TAUS,
};
use qkz_core::protocol::{QuenchProtocol, Variant};

type Outcome = Result<(bool, String), String>;

fn within(got: (f64, f64), want: (f64, f64), tol: f64) -> bool {
    (got.0 - want.0).abs() <= tol + 1e-9 && (got.1 - want.1).abs() <= tol + 1e-9
}

fn step() -> f64 {
    GridSpec::default().spacing
}

fn c1_qkz_recovery() -> Outcome {
    let taus: Vec<f64> = (1..=8).map(f64::from).collect();
    let ps = continuous_to_qcp(&taus).map_err(|e| e.to_string())?;
    let c = collapse_sweep(&ps, 120, 0.0, THEORY_MASK, &GridSpec::default(), &SolverOptions::default(), "c1")
        .map_err(|e| e.to_string())?;
    let b = c.result.best;
    Ok((within(b, (0.5, 0.125), step()), format!("best (a, b) = ({:.3}, {:.3}), target (0.5, 0.125) ± {}", b.0, b.1, step())))
}

struct LargeChain {
    clean_norm: f64,
    noisy: (f64, f64),
    mid_norm: f64,
    mid_best: (f64, f64),
}

fn large_chain() -> Result<LargeChain, String> {
    let ps = continuous_to_qcp(&DEFAULT_FIG3_TAUS).map_err(|e| e.to_string())?;
    let g = GridSpec::default();
    let o = SolverOptions::default();
    let run = |lambda: f64| {
        collapse_sweep(&ps, 512, lambda, THEORY_MASK, &g, &o, "n512").map_err(|e| e.to_string())
    };
    let clean = run(0.0)?;
    let mid = run(1.0)?;
    let noisy = run(100.0)?;
    Ok(LargeChain {
        clean_norm: clean.result.normalized_rmse(),
        noisy: noisy.result.best,
        mid_norm: mid.result.normalized_rmse(),
        mid_best: mid.result.best,
    })
}

fn c2_qnd_crossover(l: &LargeChain) -> Outcome {
    let b = l.noisy;
    Ok((
        within(b, (A_QND, B_QND), 2.0 * step()),
        format!("best (a, b) = ({:.3}, {:.3}), target (1/3, 1/12) ± {}", b.0, b.1, 2.0 * step()),
    ))
}

fn c3_noncollapse(l: &LargeChain) -> Outcome {
    let ratio = l.mid_norm / l.clean_norm;
    Ok((
        ratio >= 2.0,
        format!(
            "normalized rmse lambda=1: {:.3e} at ({:.3}, {:.3}), lambda=0: {:.3e}, ratio {ratio:.2} (need >= 2)",
            l.mid_norm, l.mid_best.0, l.mid_best.1, l.clean_norm
        ),
    ))
}

fn c4_trotter_shift() -> Outcome {
    let ps = trotter_to_qcp(0.2, 16).map_err(|e| e.to_string())?;
    let c = collapse_sweep(&ps, 120, 0.0, SHOT_MASK, &GridSpec::default(), &SolverOptions::default(), "c4")
        .map_err(|e| e.to_string())?;
    let b = c.result.best;
    Ok((within(b, (0.45, 0.15), step()), format!("best (a, b) = ({:.3}, {:.3}), target (0.45, 0.15) ± {}", b.0, b.1, step())))
}

fn c5_c9_defects() -> Result<(Outcome, Outcome), String> {
    let ps = trotter_full(0.25, 8..=32).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let mut betas = Vec::new();
    let mut worst = 0.0f64;
    for n in [80, 100, 120] {
        let pts = end_defects(&ps, n, 0.0, &opts).map_err(|e| e.to_string())?;
        let fit = power_law_fit(&pts.iter().map(|p| (p.tau_q, p.n_def)).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        betas.push((n, fit.exponent));
        for p in &pts {
            worst = worst.max((p.e_res / n as f64 - 4.0 * p.n_def).abs());
        }
    }
    let ok5 = betas.iter().all(|&(_, b)| (0.4..=0.6).contains(&b));
    let desc = betas.iter().map(|(n, b)| format!("N={n}: beta={b:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        Ok((ok5, format!("{desc} (need [0.4, 0.6])"))),
        Ok((worst < 1e-8, format!("max |E_res/N - 4 n_def| = {worst:.2e} over 75 runs (need < 1e-8)"))),
    ))
}

fn c6_oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in [4, 6, 8, 10] {
        for tau in [0.5, 1.0, 2.0] {
            let steps = (2.0 * tau / 0.25) as usize;
            let cont = QuenchProtocol::continuous(tau, Variant::FullQuench).map_err(|e| e.to_string())?;
            let trot = QuenchProtocol::trotter(0.25, steps, Variant::FullQuench).map_err(|e| e.to_string())?;
            for p in [cont, trot] {
                let ts: Vec<f64> = (0..=steps).map(|s| -tau + s as f64 * 0.25).collect();
                let es = run_quench(&p, n, 0.0, &ts, &SolverOptions::default()).map_err(|e| e.to_string())?;
                let ds = evolve_statevector(&p, n, &ts, &OracleOptions::default()).map_err(|e| e.to_string())?;
                for (e, d) in es.iter().zip(&ds) {
                    let o = d.observables(tau).map_err(|e| e.to_string())?;
                    let fc = fermion_correlators(e);
                    let mut acc = |a: f64, b: f64| worst = worst.max((a - b).abs());
                    acc(magnetization_x(&fc).x, o.m_x_mean());
                    acc(defect_density(&fc).map_err(|e| e.to_string())?, o.n_def);
                    acc(total_energy(e), o.energy);
                    for x in 1..=n / 2 {
                        acc(zz_connected(&fc, x).map_err(|e| e.to_string())?, o.zz_at(x));
                        acc(xx_connected(&fc, x).map_err(|e| e.to_string())?, o.xx_at(x));
                    }
                }
                cases += 1;
            }
        }
    }
    Ok((worst < 1e-7, format!("{cases} runs, max deviation {worst:.2e} (need < 1e-7)")))
}

fn c7_pfaffian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = 2 * (1 + i % 8);
        let mut a = SkewMatrix::zeros(n);
        for r in 0..n {
            for c in r + 1..n {
                a.set_pair(r, c, rng.gen_range(-1.0..1.0));
            }
        }
        let pf = pfaffian(&a).map_err(|e| e.to_string())?;
        let det = DMatrix::from_row_slice(n, n, a.as_slice()).determinant();
        worst = worst.max((pf * pf - det).abs() / det.abs());
    }
    let mut closed = 0.0f64;
    for _ in 0..100 {
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut a = SkewMatrix::zeros(2);
        a.set_pair(0, 1, v[0]);
        closed = closed.max((pfaffian(&a).map_err(|e| e.to_string())? - v[0]).abs());
        let mut b = SkewMatrix::zeros(4);
        let idx = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for (&(r, c), &x) in idx.iter().zip(&v) {
            b.set_pair(r, c, x);
        }
        let want = v[0] * v[5] - v[1] * v[4] + v[2] * v[3];
        closed = closed.max((pfaffian(&b).map_err(|e| e.to_string())? - want).abs());
    }
    Ok((
        worst < 1e-8 && closed < 1e-12,
        format!("max relative |Pf^2 - det| {worst:.2e} (need < 1e-8), closed forms {closed:.2e} (need < 1e-12)"),
    ))
}

fn c8_planted() -> Outcome {
    let g = GridSpec::default();
    let taus: Vec<f64> = (1..=8).map(f64::from).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for (a, b) in [(0.5, 0.125), (1.0 / 3.0, 1.0 / 12.0), (0.45, 0.15)] {
        let (a, b) = (g.snap(g.a_min, a), g.snap(g.b_min, b));
        let raw = taus.iter().flat_map(|&t| {
            (1..=40usize).map(move |x| {
                let y = x as f64 / t.powf(a);
                CorrelationRecord { tau_q: t, x, c: t.powf(-b) * (0.8 + 0.3 * y) * (-1.2 * y).exp() }
            })
        });
        let ds = CorrelationDataset::new(raw, 0.0, None, "planted").map_err(|e| e.to_string())?;
        let r = exponent_sweep(&ds, &g).map_err(|e| e.to_string())?;
        let hit = (r.best.0 - a).abs() < 1e-9 && (r.best.1 - b).abs() < 1e-9;
        ok &= hit;
        lines.push(format!("({a:.3}, {b:.3}) -> ({:.3}, {:.3})", r.best.0, r.best.1));
    }
    Ok((ok, lines.join("; ")))
}

fn c10_circuit() -> Outcome {
    let p = QuenchProtocol::trotter(0.25, 16, Variant::FullQuench).map_err(|e| e.to_string())?;
    let g = emit_program(&p, 6, Basis::Z).map_err(|e| e.to_string())?;
    let s = simulate_program(&g).map_err(|e| e.to_string())?;
    let o = evolve_statevector(&p, 6, &[p.t_end()], &OracleOptions::default()).map_err(|e| e.to_string())?;
    let d = max_amplitude_diff(&s, &o[0].state).map_err(|e| e.to_string())?;
    let c = g.counts();
    let counts_ok = c.rx == 16 * 6 && c.rz == 16 * 6 && c.cx == 16 * 12;
    Ok((
        d < 1e-10 && counts_ok,
        format!("max amplitude difference {d:.2e} (need < 1e-10); counts rx={} rz={} cx={}", c.rx, c.rz, c.cx),
    ))
}

fn c11_reference_only() -> Outcome {
    let p = QuenchProtocol::continuous(4.0, Variant::FullQuench).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let clean = run_to_end(&p, 64, 0.0, &opts).map_err(|e| e.to_string())?;
    let zero = excess_energy(&clean, &clean).map_err(|e| e.to_string())?;
    let mut sweep = Vec::new();
    for lambda in [0.1, 1.0, 10.0, 100.0] {
        let noisy = run_to_end(&p, 64, lambda, &opts).map_err(|e| e.to_string())?;
        sweep.push((lambda, excess_energy(&noisy, &clean).map_err(|e| e.to_string())?));
    }
    let monotone = sweep.windows(2).all(|w| w[1].1 >= w[0].1);
    let desc = sweep.iter().map(|(l, e)| format!("{l}: {e:.4e}")).collect::<Vec<_>>().join(", ");
    Ok((
        zero == 0.0,
        format!(
            "e_exc(clean, clean) = {zero}; lambda sweep N=64 tau_q=4 [{desc}] monotone={monotone} (reported only); \
             hardware references (0.025, 0.475), (0.025, 0.325), beta ~ -0.3, gamma ~ -0.6 not reproducible without the device"
        ),
    ))
}

fn report(id: u32, name: &str, started: Instant, o: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (ok, msg) = match o {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {id:>2} [{}] {name}: {msg} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() {
    let mut all = true;
    let t = Instant::now();
    all &= report(1, "QKZ exponent recovery", t, c1_qkz_recovery());
    let t = Instant::now();
    match large_chain() {
        Ok(l) => {
            all &= report(2, "QND exponent crossover", t, c2_qnd_crossover(&l));
            all &= report(3, "intermediate-lambda non-collapse", t, c3_noncollapse(&l));
        }
        Err(e) => {
            all &= report(2, "QND exponent crossover", t, Err(e.clone()));
            all &= report(3, "intermediate-lambda non-collapse", t, Err(e));
        }
    }
    let t = Instant::now();
    all &= report(4, "Trotter-shifted exponents", t, c4_trotter_shift());
    let t = Instant::now();
    match c5_c9_defects() {
        Ok((c5, c9)) => {
            all &= report(5, "noiseless defect scaling", t, c5);
            all &= report(9, "end-of-quench identity", t, c9);
        }
        Err(e) => {
            all &= report(5, "noiseless defect scaling", t, Err(e.clone()));
            all &= report(9, "end-of-quench identity", t, Err(e));
        }
    }
    let t = Instant::now();
    all &= report(6, "oracle equivalence", t, c6_oracle_equivalence());
    let t = Instant::now();
    all &= report(7, "Pfaffian correctness", t, c7_pfaffian());
    let t = Instant::now();
    all &= report(8, "fit self-consistency", t, c8_planted());
    let t = Instant::now();
    all &= report(10, "circuit equivalence", t, c10_circuit());
    let t = Instant::now();
    all &= report(11, "hardware-only results documented", t, c11_reference_only());
    if !all {
        std::process::exit(1);
    }
}
