//! Compressed sparse rows and a banded LU with partial pivoting.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &t {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension {
                    expected: nrows.max(ncols),
                    got: r.max(c),
                });
            }
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("non-finite Jacobian entry at ({r}, {c})")));
            }
        }
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `Aᵀ y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t).expect("transpose of a valid matrix")
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[r][c] = v;
            }
        }
        d
    }
}

/// LU factors of a banded matrix with row interchanges, stored by columns
/// with `kl` extra superdiagonals for fill-in.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let n = a.nrows;
        let (kl, ku) = a.bandwidths();
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            ld,
            ab: vec![0.0; n * ld],
            piv: vec![0; n],
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                let k = lu.at(r, c);
                lu.ab[k] = v;
            }
        }
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let kuu = ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.at(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.ab[lu.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-14) {
                return Err(Error::Singular { row: k });
            }
            lu.piv[k] = p;
            let jend = (k + kuu).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let (x, y) = (lu.at(k, j), lu.at(p, j));
                    lu.ab.swap(x, y);
                }
            }
            let d = lu.ab[lu.at(k, k)];
            for i in k + 1..=last {
                let ik = lu.at(i, k);
                let l = lu.ab[ik] / d;
                lu.ab[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jend {
                    let kj = lu.ab[lu.at(k, j)];
                    if kj != 0.0 {
                        let ij = lu.at(i, j);
                        lu.ab[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: b.len(),
            });
        }
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            x.swap(k, p);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    x[i] -= self.ab[self.at(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + self.ku + self.kl).min(n - 1) {
                s -= self.ab[self.at(k, j)] * x[j];
            }
            x[k] = s / self.ab[self.at(k, k)];
        }
        Ok(x)
    }
}

/// Outcome of a refined direct solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub residual: f64,
    pub relative: f64,
    pub refinements: usize,
}

/// Solves `A x = b` by banded LU plus iterative refinement until
/// `‖b − A x‖∞ ≤ tol · max(‖b‖∞, tiny)`.
pub fn solve_refined(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    let lu = BandLu::factor(a)?;
    solve_with(&lu, a, b, tol)
}

pub fn solve_with(lu: &BandLu, a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if bn == 0.0 {
        return Ok((
            vec![0.0; b.len()],
            SolveReport {
                residual: 0.0,
                relative: 0.0,
                refinements: 0,
            },
        ));
    }
    let mut x = lu.solve(b)?;
    let mut rep = SolveReport {
        residual: f64::INFINITY,
        relative: f64::INFINITY,
        refinements: 0,
    };
    for k in 0..=8 {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rep.residual = rn;
        rep.relative = rn / bn;
        rep.refinements = k;
        if rep.relative <= tol {
            return Ok((x, rep));
        }
        let dx = lu.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    Err(Error::NonConvergence {
        solver: "adjoint linear solve",
        iterations: rep.refinements,
        residual: rep.relative,
        history: Vec::new(),
    })
}
