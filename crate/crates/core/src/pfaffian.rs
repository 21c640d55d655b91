//! Pfaffian of a real skew-symmetric matrix by Parlett–Reid
//! tridiagonalization with partial pivoting.

use crate::error::{Error, Result};

/// Dense row-major square matrix used as Pfaffian input.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SkewMatrix {
    pub fn zeros(n: usize) -> Self {
        SkewMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::domain(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(SkewMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `A[i][j] = v` and `A[j][i] = −v`.
    #[inline]
    pub fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = -v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest `|A + Aᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }
}

const SKEW_TOL: f64 = 1e-12;

/// Pfaffian of `a`. The matrix must be skew-symmetric to within `1e−12`
/// (relative to its largest entry) and of even dimension.
pub fn pfaffian(a: &SkewMatrix) -> Result<f64> {
    let n = a.dim();
    if n % 2 != 0 {
        return Err(Error::domain(format!("Pfaffian needs even dimension, got {n}")));
    }
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if a.asymmetry() > SKEW_TOL * scale {
        return Err(Error::domain("matrix is not skew-symmetric"));
    }
    if n == 0 {
        return Ok(1.0);
    }
    Ok(pfaffian_unchecked(a.data.clone(), n))
}

/// Parlett–Reid elimination on a row-major buffer that is consumed.
pub(crate) fn pfaffian_unchecked(mut m: Vec<f64>, n: usize) -> f64 {
    let idx = |i: usize, j: usize| i * n + j;
    let mut pf = 1.0;
    let mut tau = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut k = 0;
    while k + 1 < n {
        // Pivot: largest entry in column k below the diagonal.
        let mut kp = k + 1;
        let mut best = m[idx(k + 1, k)].abs();
        for r in k + 2..n {
            let v = m[idx(r, k)].abs();
            if v > best {
                best = v;
                kp = r;
            }
        }
        if kp != k + 1 {
            for c in 0..n {
                m.swap(idx(k + 1, c), idx(kp, c));
            }
            for r in 0..n {
                m.swap(idx(r, k + 1), idx(r, kp));
            }
            pf = -pf;
        }
        let piv = m[idx(k, k + 1)];
        if piv == 0.0 {
            return 0.0;
        }
        pf *= piv;
        if k + 2 < n {
            for c in k + 2..n {
                tau[c] = m[idx(k, c)] / piv;
                col[c] = m[idx(c, k + 1)];
            }
            for r in k + 2..n {
                let (tr, cr) = (tau[r], col[r]);
                let row = &mut m[r * n..(r + 1) * n];
                for c in k + 2..n {
                    row[c] += tr * col[c] - cr * tau[c];
                }
            }
        }
        k += 2;
    }
    pf
}
