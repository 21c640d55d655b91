use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qkz_core::circuit::{emit_program, max_amplitude_diff, qasm_file_name, simulate_program, Basis, GateCounts};
use qkz_core::collapse::{
    exp_poly, exponent_sweep_order, CollapseResult, CorrelationDataset, CorrelationRecord, A_QKZ, A_QND, B_QKZ,
    B_QND,
};
use qkz_core::export::{
    correlator_rows, observable_rows, read_csv, records_from_rows, rescaled_rows, rmse_rows, trajectory_rows,
    BestFit, CorrelatorRow, ObservableRow,
};
use qkz_core::mode_dynamics::run_quench;
use qkz_core::observables::{power_law_fit, run_record, shot_error_floor, PowerLawFit, RunRecord};
use qkz_core::oracle::{evolve_lindblad, evolve_statevector, OracleOptions, MAX_STATEVECTOR_SITES};
use qkz_core::pipeline::{run_recipe, FigureId, RecipeOutcome, Target};
use qkz_core::protocol::{QuenchProtocol, Variant};

use crate::config::{EvolutionKind, RunConfig};
use crate::output::{collect_inputs, run_slug, sample_times, Sink};
use crate::svg::{heatmap, line_plot, Axis, Series};

pub fn quench(cfg: &RunConfig, args: serde_json::Value) -> Result<PathBuf> {
    let protocols = cfg.protocols()?;
    let lambdas = cfg.lambdas()?;
    let opts = cfg.solver()?;
    let n = cfg.mode_dynamics.n;
    let x_max = cfg.x_max();
    let mut sink = Sink::new(cfg, "quench", args)?;

    let jobs: Vec<(QuenchProtocol, f64)> = protocols
        .iter()
        .flat_map(|p| lambdas.iter().map(move |&l| (*p, l)))
        .collect();
    let need_clean = lambdas.iter().any(|&l| l > 0.0) && !lambdas.contains(&0.0);
    info!("{} runs on N = {n}", jobs.len());

    let runs: Vec<(RunRecord, Option<Vec<_>>)> = jobs
        .par_iter()
        .map(|(p, l)| {
            let times = sample_times(p, cfg.observables.samples)?;
            let es = run_quench(p, n, *l, &times, &opts).with_context(|| format!("run {}", run_slug(p, *l)))?;
            let traj = cfg.observables.trajectory.then(|| trajectory_rows(&es));
            Ok((run_record(&es, x_max).with_context(|| format!("run {}", run_slug(p, *l)))?, traj))
        })
        .collect::<Result<_>>()?;
    let extra_clean: Vec<RunRecord> = if need_clean {
        protocols
            .par_iter()
            .map(|p| {
                let times = sample_times(p, cfg.observables.samples)?;
                Ok(run_record(&run_quench(p, n, 0.0, &times, &opts)?, 1)?)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let clean_for = |p: &QuenchProtocol| -> Option<&RunRecord> {
        runs.iter()
            .map(|r| &r.0)
            .chain(&extra_clean)
            .find(|r| r.lambda == 0.0 && r.protocol == *p)
    };

    let mut ends = Vec::new();
    let mut ndef_series = Vec::new();
    let mut zz_series = Vec::new();
    for (rec, traj) in &runs {
        let slug = run_slug(&rec.protocol, rec.lambda);
        let dir = sink.run_dir(&slug)?;
        let obs = observable_rows(rec, if rec.lambda > 0.0 { clean_for(&rec.protocol) } else { None })?;
        sink.csv(dir.join("correlators.csv"), &correlator_rows(rec))?;
        sink.csv(dir.join("observables.csv"), &obs)?;
        if let Some(t) = traj {
            sink.csv(dir.join("trajectory.csv"), t)?;
        }
        ends.push(*obs.last().expect("runs have samples"));
        ndef_series.push(Series::line(&slug, rec.samples.iter().map(|s| (s.t, s.n_def)).collect()));
        let last = rec.last();
        zz_series.push(Series::line(
            &slug,
            last.c_zz.iter().enumerate().map(|(i, &c)| ((i + 1) as f64, c.abs())).collect(),
        ));
    }
    sink.csv(sink.dir.join("end_observables.csv"), &ends)?;
    let d = sink.dir.clone();
    sink.text(
        d.join("defects_vs_time.svg"),
        &line_plot("defect density", &Axis::linear("t"), &Axis::linear("n_def"), &ndef_series, &[]),
    )?;
    sink.text(
        d.join("end_correlators.svg"),
        &line_plot("|C^zz(x)| at the end of each run", &Axis::linear("x"), &Axis::log("|C^zz|"), &zz_series, &[]),
    )?;
    for e in &ends {
        println!(
            "tau_q={:<8} lambda={:<8} n_def={:.6e} e_res={:.6e}{}",
            e.tau_q,
            e.lambda,
            e.n_def,
            e.e_res,
            e.e_exc.map_or(String::new(), |x| format!(" e_exc={x:.6e}"))
        );
    }
    sink.finish()
}

/// Loads end-of-run correlators from quench outputs, one τ_Q per file.
fn load_records(files: &[PathBuf]) -> Result<Vec<CorrelationRecord>> {
    let mut out: Vec<CorrelationRecord> = Vec::new();
    let mut seen: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for f in files {
        let rows: Vec<CorrelatorRow> = read_csv(f).with_context(|| format!("reading {}", f.display()))?;
        let recs = records_from_rows(&rows);
        for tau in recs.iter().map(|r| r.tau_q.to_bits()).collect::<std::collections::BTreeSet<_>>() {
            if let Some(prev) = seen.insert(tau, f.clone()) {
                bail!(
                    "tau_q = {} appears in both {} and {}",
                    f64::from_bits(tau),
                    prev.display(),
                    f.display()
                );
            }
        }
        out.extend(recs);
    }
    Ok(out)
}

fn write_collapse(sink: &mut Sink, dir: &Path, ds: &CorrelationDataset, r: &CollapseResult, title: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    sink.csv(dir.join("rmse_surface.csv"), &rmse_rows(r))?;
    let (a, b) = r.best;
    let rescaled = rescaled_rows(ds, a, b);
    sink.csv(dir.join("rescaled.csv"), &rescaled)?;
    sink.json(dir.join("best_fit.json"), &BestFit::from_result(r, &ds.source_tag))?;

    let a_vals = r.grid.a_values();
    let b_vals = r.grid.b_values();
    let nb = b_vals.len();
    let values: Vec<Vec<f64>> = (0..a_vals.len())
        .map(|i| r.cells[i * nb..(i + 1) * nb].iter().map(|c| c.rmse).collect())
        .collect();
    let markers = [
        (A_QKZ, B_QKZ, "QKZ".to_string()),
        (A_QND, B_QND, "QND".to_string()),
        (a, b, "best".to_string()),
    ];
    sink.text(
        dir.join("rmse_heatmap.svg"),
        &heatmap(&format!("{title}: collapse RMSE"), &Axis::linear("a"), &Axis::linear("b"), &a_vals, &b_vals, &values, &markers),
    )?;

    let mut series: Vec<Series> = r
        .taus
        .iter()
        .map(|&t| {
            Series::markers(
                format!("tau_q={t}"),
                rescaled.iter().filter(|p| p.tau_q == t).map(|p| (p.y, p.v)).collect(),
            )
        })
        .collect();
    let y_max = rescaled.iter().map(|p| p.y).fold(0.0, f64::max);
    series.push(Series::line(
        "fit",
        (0..=200).map(|i| {
            let y = y_max * i as f64 / 200.0;
            (y, exp_poly(&r.best_params, y))
        })
        .collect(),
    ));
    sink.text(
        dir.join("collapse.svg"),
        &line_plot(
            &format!("{title}: (a, b) = ({a:.3}, {b:.3})"),
            &Axis::linear("x / tau_q^a"),
            &Axis::linear("tau_q^b |C^zz|"),
            &series,
            &[],
        ),
    )?;
    Ok(())
}

pub fn collapse(cfg: &RunConfig, args: serde_json::Value) -> Result<PathBuf> {
    let c = &cfg.collapse;
    let grid = c.grid()?;
    let files = collect_inputs(&c.inputs, "correlators.csv")?;
    let raw = load_records(&files)?;
    let ds = CorrelationDataset::new(raw, c.mask, c.x_max, "cli")?;
    let taus = ds.taus();
    ensure!(taus.len() >= 3, "collapse needs at least 3 quench times after masking, found {}", taus.len());
    if ds.records().iter().any(|r| r.c < 0.0) {
        warn!("negative correlations present; fitting magnitudes");
    }
    let mut sink = Sink::new(cfg, "collapse", args)?;
    let r = exponent_sweep_order(&ds, &grid, c.order)?;
    let dir = sink.dir.clone();
    write_collapse(&mut sink, &dir, &ds, &r, "collapse")?;
    println!(
        "best (a, b) = ({:.3}, {:.3}); rmse {:.4e}; normalized {:.4e}; {} points over {} quench times",
        r.best.0,
        r.best.1,
        r.best_rmse,
        r.normalized_rmse(),
        r.n_points,
        taus.len()
    );
    sink.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub tau_q: f64,
    pub lambda: f64,
    pub n_def: f64,
    pub e_res: f64,
    pub e_exc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub lambda: f64,
    pub quantity: String,
    pub n_points: usize,
    pub fit: Option<PowerLawFit>,
    pub note: Option<String>,
}

fn fit_or_note(points: &[(f64, f64)]) -> (Option<PowerLawFit>, Option<String>) {
    match power_law_fit(points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn observables(cfg: &RunConfig, args: serde_json::Value) -> Result<PathBuf> {
    let files = collect_inputs(&cfg.observables.inputs, "observables.csv")?;
    let mut rows = Vec::new();
    for f in &files {
        let obs: Vec<ObservableRow> = read_csv(f).with_context(|| format!("reading {}", f.display()))?;
        let last = obs.last().with_context(|| format!("{} has no rows", f.display()))?;
        rows.push(DefectRow {
            tau_q: last.tau_q,
            lambda: last.lambda,
            n_def: last.n_def,
            e_res: last.e_res,
            e_exc: last.e_exc,
        });
    }
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.tau_q.total_cmp(&b.tau_q)));
    let mut groups: BTreeMap<u64, Vec<DefectRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry(r.lambda.to_bits()).or_default().push(*r);
    }

    let mut sink = Sink::new(cfg, "observables", args)?;
    let mut fits = Vec::new();
    let mut series = Vec::new();
    for (bits, g) in &groups {
        let lambda = f64::from_bits(*bits);
        let pts: Vec<(f64, f64)> = g.iter().map(|r| (r.tau_q, r.n_def)).collect();
        let (fit, note) = fit_or_note(&pts);
        series.push(Series::markers(format!("n_def, lambda={lambda}"), pts.clone()));
        if let Some(f) = fit {
            series.push(Series::line(
                format!("fit beta={:.3}", f.exponent),
                pts.iter().map(|&(t, _)| (t, f.amplitude * t.powf(-f.exponent))).collect(),
            ));
            println!("lambda={lambda}: n_def ~ tau_q^(-{:.4}) (rmse_log {:.2e})", f.exponent, f.rmse_log);
        }
        fits.push(FitSummary { lambda, quantity: "n_def".into(), n_points: pts.len(), fit, note });
        let exc: Vec<(f64, f64)> = g.iter().filter_map(|r| r.e_exc.map(|e| (r.tau_q, e))).collect();
        if !exc.is_empty() {
            let (fit, note) = fit_or_note(&exc);
            if let Some(f) = fit {
                println!("lambda={lambda}: e_exc ~ tau_q^(-{:.4})", f.exponent);
            }
            fits.push(FitSummary { lambda, quantity: "e_exc".into(), n_points: exc.len(), fit, note });
        }
    }
    let d = sink.dir.clone();
    sink.csv(d.join("defects.csv"), &rows)?;
    sink.json(d.join("fits.json"), &fits)?;
    let floor = match cfg.observables.shots {
        Some(s) => vec![(shot_error_floor(s)?, format!("1/sqrt({s})"))],
        None => Vec::new(),
    };
    sink.text(
        d.join("defects.svg"),
        &line_plot("end-of-quench defect density", &Axis::log("tau_q"), &Axis::log("n_def"), &series, &floor),
    )?;
    sink.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSummary {
    pub file: String,
    pub n_qubits: usize,
    pub dt: f64,
    pub steps: usize,
    pub tau_q: f64,
    pub basis: String,
    pub counts: GateCounts,
    pub depth: usize,
    pub max_amplitude_diff: Option<f64>,
}

pub fn emit_qasm(cfg: &RunConfig, args: serde_json::Value) -> Result<PathBuf> {
    let n = cfg.mode_dynamics.n;
    let bases = cfg.circuit.bases()?;
    let verify = cfg.circuit.verify;
    ensure!(!verify || n <= MAX_STATEVECTOR_SITES, "verification needs N <= {MAX_STATEVECTOR_SITES}");
    let mut sink = Sink::new(cfg, "emit-qasm", args)?;
    let mut summary = Vec::new();
    for &steps in &cfg.protocol.steps {
        let p = QuenchProtocol::trotter(cfg.protocol.dt, steps, cfg.protocol.variant)?;
        let diff = if verify {
            let sim = simulate_program(&emit_program(&p, n, Basis::Z)?)?;
            let dense = evolve_statevector(&p, n, &[p.t_end()], &OracleOptions::default())?;
            let d = max_amplitude_diff(&sim, &dense[0].state)?;
            ensure!(d < 1e-10, "circuit for {steps} steps deviates from the oracle by {d:.3e}");
            Some(d)
        } else {
            None
        };
        for &basis in &bases {
            let g = emit_program(&p, n, basis)?;
            let name = qasm_file_name(n, cfg.protocol.dt, steps, basis);
            let d = sink.dir.clone();
            sink.text(d.join(&name), &qkz_core::circuit::to_qasm3(&g))?;
            println!("{name}: {} gates, depth {}", g.counts().total(), g.depth());
            summary.push(CircuitSummary {
                file: name,
                n_qubits: n,
                dt: cfg.protocol.dt,
                steps,
                tau_q: p.tau_q,
                basis: basis.label().into(),
                counts: g.counts(),
                depth: g.depth(),
                max_amplitude_diff: diff,
            });
        }
    }
    let d = sink.dir.clone();
    sink.json(d.join("circuits.json"), &summary)?;
    sink.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub tau_q: f64,
    pub lambda: f64,
    pub t: f64,
    pub m_x_mode: f64,
    pub m_x_oracle: f64,
    pub n_def_mode: f64,
    pub n_def_oracle: f64,
    pub e_total_mode: f64,
    pub e_total_oracle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCorrelatorRow {
    pub tau_q: f64,
    pub lambda: f64,
    pub t: f64,
    pub x: usize,
    pub c_zz_mode: f64,
    pub c_zz_oracle: f64,
    pub c_xx_mode: f64,
    pub c_xx_oracle: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleDeviation {
    pub m_x: f64,
    pub n_def: f64,
    pub e_total: f64,
    pub c_zz: f64,
    pub c_xx: f64,
}

pub fn oracle(cfg: &RunConfig, args: serde_json::Value) -> Result<PathBuf> {
    let protocols = cfg.protocols()?;
    let lambdas = cfg.lambdas()?;
    let opts = cfg.solver()?;
    let n = cfg.mode_dynamics.n;
    let x_max = cfg.x_max();
    let oopts = OracleOptions::default();
    let mut sink = Sink::new(cfg, "oracle", args)?;
    let mut dev = OracleDeviation::default();
    let mut rows = Vec::new();
    let mut crows = Vec::new();
    for p in &protocols {
        for &l in &lambdas {
            let times = sample_times(p, cfg.observables.samples)?;
            let rec = run_record(&run_quench(p, n, l, &times, &opts)?, x_max)?;
            let dense = if l == 0.0 {
                evolve_statevector(p, n, &times, &oopts)?
            } else {
                evolve_lindblad(p, n, l, &times, &oopts)?
            };
            for (s, d) in rec.samples.iter().zip(&dense) {
                let o = d.observables(p.tau_q)?;
                let row = OracleRow {
                    tau_q: p.tau_q,
                    lambda: l,
                    t: s.t,
                    m_x_mode: s.m_x,
                    m_x_oracle: o.m_x_mean(),
                    n_def_mode: s.n_def,
                    n_def_oracle: o.n_def,
                    e_total_mode: s.e_total,
                    e_total_oracle: o.energy,
                };
                dev.m_x = dev.m_x.max((row.m_x_mode - row.m_x_oracle).abs());
                dev.n_def = dev.n_def.max((row.n_def_mode - row.n_def_oracle).abs());
                dev.e_total = dev.e_total.max((row.e_total_mode - row.e_total_oracle).abs());
                rows.push(row);
                for x in 1..=x_max {
                    let c = OracleCorrelatorRow {
                        tau_q: p.tau_q,
                        lambda: l,
                        t: s.t,
                        x,
                        c_zz_mode: s.c_zz[x - 1],
                        c_zz_oracle: o.zz_at(x),
                        c_xx_mode: s.c_xx[x - 1],
                        c_xx_oracle: o.xx_at(x),
                    };
                    dev.c_zz = dev.c_zz.max((c.c_zz_mode - c.c_zz_oracle).abs());
                    dev.c_xx = dev.c_xx.max((c.c_xx_mode - c.c_xx_oracle).abs());
                    crows.push(c);
                }
            }
        }
    }
    let d = sink.dir.clone();
    sink.csv(d.join("oracle_observables.csv"), &rows)?;
    sink.csv(d.join("oracle_correlators.csv"), &crows)?;
    sink.json(d.join("deviation.json"), &dev)?;
    println!(
        "max |mode - oracle|: m_x {:.2e}, n_def {:.2e}, e_total {:.2e}, c_zz {:.2e}, c_xx {:.2e}",
        dev.m_x, dev.n_def, dev.e_total, dev.c_zz, dev.c_xx
    );
    sink.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceRow {
    pub figure: String,
    pub target: String,
    pub status: String,
    pub summary: String,
}

fn target_label(t: &Target) -> String {
    match *t {
        Target::Exponents { a, b, tol } => format!("(a, b) = ({a:.3}, {b:.3}) ± {tol}"),
        Target::DefectExponent { lo, hi } => format!("beta in [{lo}, {hi}]"),
        Target::Report => "report only".into(),
    }
}

/// Returns the output directory and whether every asserted target held.
pub fn reproduce(cfg: &RunConfig, figures: &[FigureId], args: serde_json::Value) -> Result<(PathBuf, bool)> {
    let grid = cfg.collapse.grid()?;
    let opts = cfg.solver()?;
    let mut sink = Sink::new(cfg, "reproduce", args)?;
    let mut table = Vec::new();
    for &fig in figures {
        info!("running {}", fig.name());
        let rep = run_recipe(fig, &grid, &opts).with_context(|| format!("recipe {}", fig.name()))?;
        let dir = sink.dir.join(fig.name());
        std::fs::create_dir_all(&dir)?;
        match &rep.outcome {
            RecipeOutcome::Collapse(c) => {
                sink.csv(dir.join("records.csv"), &c.records)?;
                let ds = CorrelationDataset::new(c.records.iter().copied(), rep.recipe.mask, None, fig.name())?;
                write_collapse(&mut sink, &dir, &ds, &c.result, fig.name())?;
            }
            RecipeOutcome::Defects(runs) => {
                let mut series = Vec::new();
                for d in runs {
                    sink.csv(dir.join(format!("defects_n{}.csv", d.n_sites)), &d.points)?;
                    series.push(Series::markers(
                        format!("N={} beta={:.3}", d.n_sites, d.fit.exponent),
                        d.points.iter().map(|p| (p.tau_q, p.n_def)).collect(),
                    ));
                }
                sink.json(dir.join("fits.json"), &runs.iter().map(|d| (d.n_sites, d.fit)).collect::<Vec<_>>())?;
                sink.text(
                    dir.join("defects.svg"),
                    &line_plot(fig.name(), &Axis::log("tau_q"), &Axis::log("n_def"), &series, &[]),
                )?;
            }
        }
        let status = match rep.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "REPORT",
        };
        table.push(ReproduceRow {
            figure: fig.name().into(),
            target: target_label(&rep.recipe.target),
            status: status.into(),
            summary: rep.summary.clone(),
        });
    }
    println!("{:<15} {:<7} {:<34} result", "figure", "status", "target");
    for r in &table {
        println!("{:<15} {:<7} {:<34} {}", r.figure, r.status, r.target, r.summary);
    }
    let all = table.iter().all(|r| r.status != "FAIL");
    let d = sink.dir.clone();
    sink.csv(d.join("summary.csv"), &table)?;
    Ok((sink.finish()?, all))
}

/// One-line description of the configured sweep.
pub fn describe(cfg: &RunConfig) -> String {
    let v = match cfg.protocol.variant {
        Variant::ToCriticalPoint => "to the critical point",
        Variant::FullQuench => "full quench",
    };
    match cfg.protocol.evolution {
        EvolutionKind::Continuous => format!("continuous {v}, tau_q {:?}", cfg.protocol.tau_q),
        EvolutionKind::Trotter => format!("trotter {v}, dt {} steps {:?}", cfg.protocol.dt, cfg.protocol.steps),
    }
}
