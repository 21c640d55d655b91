//! Frozen reference values. Set `QKZ_REGEN_FIXTURES=1` to rewrite them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qkz_core::mode_dynamics::{run_to_end, SolverOptions};
use qkz_core::observables::excess_energy;
use qkz_core::oracle::{evolve_statevector, OracleObservables, OracleOptions};
use qkz_core::protocol::{QuenchProtocol, Variant};

#[derive(Debug, Serialize, Deserialize)]
struct Golden {
    protocol: QuenchProtocol,
    n: usize,
    lambda: f64,
    t: f64,
    observables: serde_json::Value,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/v1").join(name)
}

fn check(name: &str, fresh: &Golden, tol: f64) {
    let path = fixture(name);
    if std::env::var_os("QKZ_REGEN_FIXTURES").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(fresh).unwrap() + "\n").unwrap();
    }
    let stored: Golden = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(stored.protocol, fresh.protocol);
    assert_eq!((stored.n, stored.lambda, stored.t), (fresh.n, fresh.lambda, fresh.t));
    compare(&stored.observables, &fresh.observables, tol, name);
}

fn compare(a: &serde_json::Value, b: &serde_json::Value, tol: f64, ctx: &str) {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= tol, "{ctx}: {x} vs {y}");
        }
        (Array(x), Array(y)) => {
            assert_eq!(x.len(), y.len(), "{ctx}");
            for (u, v) in x.iter().zip(y) {
                compare(u, v, tol, ctx);
            }
        }
        (Object(x), Object(y)) => {
            assert_eq!(x.len(), y.len(), "{ctx}");
            for (k, u) in x {
                compare(u, &y[k], tol, &format!("{ctx}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{ctx}"),
    }
}

#[test]
fn oracle_midquench_n8() {
    let p = QuenchProtocol::continuous(2.0, Variant::FullQuench).unwrap();
    let s = evolve_statevector(&p, 8, &[0.0], &OracleOptions::default()).unwrap();
    let o: OracleObservables = s[0].observables(2.0).unwrap();
    let zz: Vec<f64> = (1..=4).map(|x| o.zz_at(x)).collect();
    let xx: Vec<f64> = (1..=4).map(|x| o.xx_at(x)).collect();
    let fresh = Golden {
        protocol: p,
        n: 8,
        lambda: 0.0,
        t: 0.0,
        observables: serde_json::json!({
            "m_x": o.m_x_mean(), "n_def": o.n_def, "energy": o.energy, "c_zz": zz, "c_xx": xx,
        }),
    };
    check("oracle_n8_tau2_t0.json", &fresh, 1e-9);
}

#[test]
fn excess_energy_baseline() {
    let p = QuenchProtocol::continuous(4.0, Variant::FullQuench).unwrap();
    let opts = SolverOptions::default();
    let clean = run_to_end(&p, 64, 0.0, &opts).unwrap();
    let noisy = run_to_end(&p, 64, 1.0, &opts).unwrap();
    let exc = excess_energy(&noisy, &clean).unwrap();
    assert!(exc > 0.0);
    let fresh = Golden {
        protocol: p,
        n: 64,
        lambda: 1.0,
        t: 4.0,
        observables: serde_json::json!({ "e_exc": exc }),
    };
    check("excess_energy_n64_tau4_lambda1.json", &fresh, 1e-8);
}
