//! Real-space fermion two-point functions and the spin correlators built
//! from them.
//!
//! Tables are indexed by the separation `d = j − l` of the first and second
//! operator, so `cc_dag(d) = ⟨c_j c_l†⟩` and so on. Translation invariance
//! makes every site-averaged observable a single table lookup or a single
//! Pfaffian.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mode_dynamics::ModeEnsemble;
use crate::pfaffian::{pfaffian_unchecked, SkewMatrix};

/// Largest tolerated imaginary part of a spin expectation value.
pub const REALITY_TOL: f64 = 1e-8;
/// Largest tolerated real part of an off-diagonal Majorana contraction.
pub const MAJORANA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FermionCorrelators {
    pub n_sites: usize,
    pub t: f64,
    cc_dag: Vec<Complex64>,
    dag_dag: Vec<Complex64>,
    cc: Vec<Complex64>,
    dag_c: Vec<Complex64>,
}

impl FermionCorrelators {
    #[inline]
    fn slot(&self, d: isize) -> usize {
        let n = self.n_sites as isize;
        assert!(d.abs() < n, "separation {d} out of range for N = {n}");
        (d + n - 1) as usize
    }

    /// `⟨c_j c_l†⟩` with `d = j − l`.
    pub fn cc_dag(&self, d: isize) -> Complex64 {
        self.cc_dag[self.slot(d)]
    }

    /// `⟨c_j† c_l†⟩` with `d = j − l`.
    pub fn dag_dag(&self, d: isize) -> Complex64 {
        self.dag_dag[self.slot(d)]
    }

    /// `⟨c_j c_l⟩` with `d = j − l`.
    pub fn cc(&self, d: isize) -> Complex64 {
        self.cc[self.slot(d)]
    }

    /// `⟨c_j† c_l⟩` with `d = j − l`.
    pub fn dag_c(&self, d: isize) -> Complex64 {
        self.dag_c[self.slot(d)]
    }

    fn check_separation(&self, x: usize) -> Result<()> {
        if x < 1 || x > self.n_sites / 2 {
            return Err(Error::domain(format!(
                "separation {x} outside 1..={}",
                self.n_sites / 2
            )));
        }
        Ok(())
    }
}

pub fn fermion_correlators(e: &ModeEnsemble) -> FermionCorrelators {
    let n = e.n_sites();
    let len = 2 * n - 1;
    let norm = 2.0 / n as f64;
    let i = Complex64::i();

    let row = |slot: usize| {
        let d = slot as f64 - (n as f64 - 1.0);
        let (mut a, mut b) = (0.0, 0.0);
        let (mut dd, mut c2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for s in &e.states {
            let (sn, cs) = (s.k * d).sin_cos();
            let [nx, ny, nz] = s.n;
            a += cs * 0.5 * (1.0 + nz);
            b += cs * 0.5 * (1.0 - nz);
            dd += sn * Complex64::new(0.5 * nx, -0.5 * ny);
            c2 += sn * Complex64::new(0.5 * nx, 0.5 * ny);
        }
        (
            Complex64::new(norm * a, 0.0),
            -i * norm * dd,
            -i * norm * c2,
            Complex64::new(norm * b, 0.0),
        )
    };
    let rows: Vec<_> = (0..len).into_par_iter().map(row).collect();
    let mut fc = FermionCorrelators {
        n_sites: n,
        t: e.t,
        cc_dag: Vec::with_capacity(len),
        dag_dag: Vec::with_capacity(len),
        cc: Vec::with_capacity(len),
        dag_c: Vec::with_capacity(len),
    };
    for (a, b, c, d) in rows {
        fc.cc_dag.push(a);
        fc.dag_dag.push(b);
        fc.cc.push(c);
        fc.dag_c.push(d);
    }
    fc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnetization {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// `M^x = 1 − 2⟨c†c⟩`; the y and z components involve an odd number of
/// fermion operators and vanish.
pub fn magnetization_x(fc: &FermionCorrelators) -> Magnetization {
    Magnetization {
        x: 1.0 - 2.0 * fc.dag_c(0).re,
        y: 0.0,
        z: 0.0,
    }
}

fn real_or_err(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() > REALITY_TOL {
        return Err(Error::Consistency(format!(
            "{what} has imaginary residue {:e}",
            z.im
        )));
    }
    Ok(z.re)
}

/// Connected XX correlator at separation `x`.
pub fn xx_connected(fc: &FermionCorrelators, x: usize) -> Result<f64> {
    fc.check_separation(x)?;
    let d = -(x as isize);
    let v = 4.0 * (fc.dag_c(d) * fc.cc_dag(d) - fc.dag_dag(d) * fc.cc(d));
    real_or_err(v, "C^xx")
}

// Majorana operators: A_m = c_m† + c_m and b_m = i(c_m − c_m†), written as
// α c + β c†.
#[derive(Clone, Copy)]
enum Majorana {
    A,
    B,
}

impl Majorana {
    fn coeffs(self) -> (Complex64, Complex64) {
        match self {
            Majorana::A => (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)),
            Majorana::B => (Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)),
        }
    }
}

fn majorana_contraction(fc: &FermionCorrelators, p: Majorana, q: Majorana, d: isize) -> Complex64 {
    let (ap, bp) = p.coeffs();
    let (aq, bq) = q.coeffs();
    ap * aq * fc.cc(d) + ap * bq * fc.cc_dag(d) + bp * aq * fc.dag_c(d) + bp * bq * fc.dag_dag(d)
}

/// Covariance `Γ` of the `2x` consecutive Majoranas
/// `b_i, A_{i+1}, b_{i+1}, …, b_{i+x−1}, A_{i+x}` entering the ZZ string,
/// with `⟨a_p a_q⟩ = δ_pq + iΓ_pq`.
pub fn majorana_window(fc: &FermionCorrelators, x: usize) -> Result<SkewMatrix> {
    fc.check_separation(x)?;
    let dim = 2 * x;
    let site = |p: usize| ((p + 1) / 2) as isize;
    let kind = |p: usize| if p % 2 == 0 { Majorana::B } else { Majorana::A };

    // Contractions depend only on the two kinds and the site offset.
    let span = x as isize;
    let width = (2 * span + 1) as usize;
    let mut table = vec![Complex64::new(0.0, 0.0); 4 * width];
    for (ki, &kp) in [Majorana::A, Majorana::B].iter().enumerate() {
        for (kj, &kq) in [Majorana::A, Majorana::B].iter().enumerate() {
            for d in -span..=span {
                table[(2 * ki + kj) * width + (d + span) as usize] =
                    majorana_contraction(fc, kp, kq, d);
            }
        }
    }
    let kind_idx = |m: Majorana| match m {
        Majorana::A => 0,
        Majorana::B => 1,
    };

    let mut g = SkewMatrix::zeros(dim);
    let mut worst = 0.0f64;
    for p in 0..dim {
        for q in p + 1..dim {
            let d = site(p) - site(q);
            let z = table[(2 * kind_idx(kind(p)) + kind_idx(kind(q))) * width + (d + span) as usize];
            worst = worst.max(z.re.abs());
            g.set_pair(p, q, z.im);
        }
    }
    if worst > MAJORANA_TOL {
        return Err(Error::Consistency(format!(
            "Majorana covariance has real residue {worst:e}"
        )));
    }
    Ok(g)
}

/// `⟨(c_i† − c_i)(c_{i+1}† + c_{i+1})⟩`, the nearest-neighbour ZZ
/// correlator without a Pfaffian.
pub fn zz_nearest_neighbour(fc: &FermionCorrelators) -> Result<f64> {
    let v = fc.dag_dag(-1) + fc.dag_c(-1) - fc.cc_dag(-1) - fc.cc(-1);
    real_or_err(v, "C^zz(1)")
}

/// ZZ correlator through the Pfaffian route for any `x ≥ 1`.
pub fn zz_pfaffian(fc: &FermionCorrelators, x: usize) -> Result<f64> {
    let g = majorana_window(fc, x)?;
    let dim = g.dim();
    let pf = pfaffian_unchecked(g.as_slice().to_vec(), dim);
    Ok(if x % 2 == 0 { pf } else { -pf })
}

/// Connected ZZ correlator `C(t, x)`.
pub fn zz_connected(fc: &FermionCorrelators, x: usize) -> Result<f64> {
    fc.check_separation(x)?;
    let raw = if x == 1 {
        zz_nearest_neighbour(fc)?
    } else {
        zz_pfaffian(fc, x)?
    };
    let m = magnetization_x(fc);
    Ok(raw - m.z * m.z)
}

/// `C(t, x)` for `x = 1..=x_max`.
pub fn zz_profile(fc: &FermionCorrelators, x_max: usize) -> Result<Vec<f64>> {
    let x_max = x_max.min(fc.n_sites / 2);
    (1..=x_max)
        .into_par_iter()
        .map(|x| zz_connected(fc, x))
        .collect()
}

pub fn xx_profile(fc: &FermionCorrelators, x_max: usize) -> Result<Vec<f64>> {
    let x_max = x_max.min(fc.n_sites / 2);
    (1..=x_max).map(|x| xx_connected(fc, x)).collect()
}
