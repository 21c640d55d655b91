//! CSV and JSON artifacts, with readers for every schema written here.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::collapse::{rescale, CollapseResult, CorrelationDataset, CorrelationRecord, GridSpec};
use crate::error::{Error, Result};
use crate::mode_dynamics::ModeEnsemble;
use crate::observables::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: f64,
    pub t: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorRow {
    pub tau_q: f64,
    pub t: f64,
    pub x: usize,
    pub c_zz: f64,
    pub c_xx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub tau_q: f64,
    pub lambda: f64,
    pub t: f64,
    pub m_x: f64,
    pub n_def: f64,
    pub e_total: f64,
    pub e_res: f64,
    /// Blank when no matching closed-system run exists.
    pub e_exc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub a: f64,
    pub b: f64,
    pub rmse: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledRow {
    pub tau_q: f64,
    pub x: usize,
    pub y: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFit {
    pub source: String,
    pub a_fit: f64,
    pub b_fit: f64,
    pub rmse: f64,
    pub normalized_rmse: f64,
    pub params: Vec<f64>,
    pub grid: GridSpec,
    pub taus: Vec<f64>,
    pub n_points: usize,
}

impl BestFit {
    pub fn from_result(r: &CollapseResult, source: &str) -> Self {
        BestFit {
            source: source.to_string(),
            a_fit: r.best.0,
            b_fit: r.best.1,
            rmse: r.best_rmse,
            normalized_rmse: r.normalized_rmse(),
            params: r.best_params.clone(),
            grid: r.grid,
            taus: r.taus.clone(),
            n_points: r.n_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(command: &str, inputs: serde_json::Value) -> Self {
        Manifest {
            tool: "qkz".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs,
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_to_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn parse_rows<T: DeserializeOwned, R: std::io::Read>(rdr: csv::Reader<R>) -> Result<Vec<T>> {
    rdr.into_deserialize()
        .map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::Parse {
                    line,
                    msg: e.to_string(),
                }
            })
        })
        .collect()
}

/// Reads rows of schema `T`; failures carry the offending line number.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_rows(csv::Reader::from_path(path)?)
}

pub fn read_csv_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    parse_rows(csv::Reader::from_reader(text.as_bytes()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn trajectory_rows(ensembles: &[ModeEnsemble]) -> Vec<TrajectoryRow> {
    ensembles
        .iter()
        .flat_map(|e| {
            e.states.iter().map(move |s| TrajectoryRow {
                k: s.k,
                t: e.t,
                nx: s.n[0],
                ny: s.n[1],
                nz: s.n[2],
            })
        })
        .collect()
}

pub fn correlator_rows(run: &RunRecord) -> Vec<CorrelatorRow> {
    run.samples
        .iter()
        .flat_map(|s| {
            s.c_zz.iter().zip(&s.c_xx).enumerate().map(move |(i, (&zz, &xx))| CorrelatorRow {
                tau_q: run.protocol.tau_q,
                t: s.t,
                x: i + 1,
                c_zz: zz,
                c_xx: xx,
            })
        })
        .collect()
}

/// One row per sample time; `clean` supplies the closed-system reference
/// for the excess energy density when given.
pub fn observable_rows(run: &RunRecord, clean: Option<&RunRecord>) -> Result<Vec<ObservableRow>> {
    if let Some(c) = clean {
        if c.protocol != run.protocol || c.n_sites != run.n_sites || c.samples.len() != run.samples.len() || c.lambda != 0.0 {
            return Err(Error::domain("reference run does not match"));
        }
    }
    let n = run.n_sites as f64;
    Ok(run
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| ObservableRow {
            tau_q: run.protocol.tau_q,
            lambda: run.lambda,
            t: s.t,
            m_x: s.m_x,
            n_def: s.n_def,
            e_total: s.e_total,
            e_res: s.e_res,
            e_exc: clean.map(|c| (s.e_total - c.samples[i].e_total) / n),
        })
        .collect())
}

/// Correlation records at the final sample of each run (the critical point
/// for quenches that end there).
pub fn records_from_rows(rows: &[CorrelatorRow]) -> Vec<CorrelationRecord> {
    // Keep, per quench time, only the latest sample time.
    let mut last: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        match last.iter_mut().find(|(tau, _)| *tau == r.tau_q) {
            Some(e) => e.1 = e.1.max(r.t),
            None => last.push((r.tau_q, r.t)),
        }
    }
    rows.iter()
        .filter(|r| last.iter().any(|&(tau, t)| tau == r.tau_q && t == r.t))
        .map(|r| CorrelationRecord {
            tau_q: r.tau_q,
            x: r.x,
            c: r.c_zz,
        })
        .collect()
}

pub fn rmse_rows(r: &CollapseResult) -> Vec<RmseRow> {
    r.cells
        .iter()
        .map(|c| RmseRow {
            a: c.a,
            b: c.b,
            rmse: c.rmse,
            converged: c.converged,
        })
        .collect()
}

pub fn rescaled_rows(ds: &CorrelationDataset, a: f64, b: f64) -> Vec<RescaledRow> {
    ds.records()
        .iter()
        .zip(rescale(ds, a, b))
        .map(|(r, (y, v))| RescaledRow {
            tau_q: r.tau_q,
            x: r.x,
            y,
            v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_dynamics::{run_quench, SolverOptions};
    use crate::observables::run_record;
    use crate::protocol::{QuenchProtocol, Variant};

    fn run(lambda: f64) -> RunRecord {
        let p = QuenchProtocol::continuous(1.0, Variant::FullQuench).unwrap();
        let es = run_quench(&p, 8, lambda, &[-1.0, 0.0, 1.0], &SolverOptions::default()).unwrap();
        run_record(&es, 4).unwrap()
    }

    #[test]
    fn csv_round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(0.3);
        let rows = correlator_rows(&r);
        assert_eq!(rows.len(), 12);
        let path = dir.path().join("c.csv");
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<CorrelatorRow>(&path).unwrap(), rows);

        let obs = observable_rows(&r, Some(&run(0.0))).unwrap();
        let text = csv_to_string(&obs).unwrap();
        assert!(text.starts_with("tau_q,lambda,t,m_x,n_def,e_total,e_res,e_exc\n"));
        assert_eq!(read_csv_str::<ObservableRow>(&text).unwrap(), obs);

        let bare = observable_rows(&r, None).unwrap();
        let text = csv_to_string(&bare).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(','));
        assert_eq!(read_csv_str::<ObservableRow>(&text).unwrap(), bare);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "a,b,rmse,converged\n0.1,0.2,0.3,true\n0.1,oops,0.3,true\n";
        match read_csv_str::<RmseRow>(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn excess_energy_column_vanishes_for_identical_runs() {
        let r = run(0.0);
        for row in observable_rows(&r, Some(&r)).unwrap() {
            assert_eq!(row.e_exc, Some(0.0));
        }
    }

    #[test]
    fn last_sample_records() {
        let rows = correlator_rows(&run(0.0));
        let rec = records_from_rows(&rows);
        assert_eq!(rec.len(), 4);
        assert!(rec.iter().all(|r| r.tau_q == 1.0));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new("quench", serde_json::json!({"n": 8}));
        let p = dir.path().join("m.json");
        write_json(&p, &m).unwrap();
        assert_eq!(read_json::<Manifest>(&p).unwrap(), m);
    }
}
