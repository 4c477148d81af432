//! Compressed forward-mode Jacobians on the periodic lattice.
//!
//! Variables and residual rows both live on `(i, j)` lattices that are
//! periodic in `i`. If every row depends only on variables within `w`
//! lattice steps, variables whose `i` and `j` are congruent modulo
//! `2w + 1` can be seeded together: no row sees two of them.

use crate::error::Result;

use super::sparse::CsrMatrix;

/// Layout of a lattice quantity with `comps` interleaved components:
/// flat index `(j * n + i) * comps + c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub n: usize,
    pub nj: usize,
    pub comps: usize,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.n * self.nj * self.comps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (j * self.n + i) * self.comps + c
    }
}

fn i_colors(n: usize, p: usize) -> Vec<usize> {
    if n <= p {
        return (0..n).collect();
    }
    let full = p * (n / p);
    (0..n).map(|i| if i < full { i % p } else { p + i - full }).collect()
}

/// Rows of the periodic window of half-width `w` around `i0`.
fn window(i0: usize, n: usize, w: usize) -> Vec<usize> {
    if 2 * w + 1 >= n {
        return (0..n).collect();
    }
    (0..=2 * w).map(|k| (i0 + n + k - w) % n).collect()
}

/// Jacobian of `rows` outputs with respect to `vars` variables. `eval`
/// receives a 0/1 seed over the variable lattice and returns the directional
/// derivative of every output.
pub fn colored_jacobian(
    vars: Lattice,
    rows: Lattice,
    w: usize,
    mut eval: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<CsrMatrix> {
    assert_eq!(vars.n, rows.n, "lattices must share the periodic direction");
    let p = 2 * w + 1;
    let ic = i_colors(vars.n, p);
    let nic = ic.iter().copied().max().map_or(0, |m| m + 1);
    let njc = p.min(vars.nj);
    let mut trip = Vec::new();
    let mut seed = vec![0.0; vars.len()];
    for c in 0..vars.comps {
        for ci in 0..nic {
            for cj in 0..njc {
                seed.iter_mut().for_each(|s| *s = 0.0);
                let mut seeded = Vec::new();
                for j in (cj..vars.nj).step_by(p) {
                    for i in (0..vars.n).filter(|&i| ic[i] == ci) {
                        seed[vars.index(i, j, c)] = 1.0;
                        seeded.push((i, j));
                    }
                }
                if seeded.is_empty() {
                    continue;
                }
                let d = eval(&seed)?;
                debug_assert_eq!(d.len(), rows.len());
                for &(i0, j0) in &seeded {
                    let col = vars.index(i0, j0, c);
                    let jlo = j0.saturating_sub(w);
                    let jhi = (j0 + w).min(rows.nj.saturating_sub(1));
                    for j in jlo..=jhi {
                        for i in window(i0, vars.n, w) {
                            for o in 0..rows.comps {
                                let r = rows.index(i, j, o);
                                let v = d[r];
                                if v != 0.0 {
                                    trip.push((r, col, v));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(rows.len(), vars.len(), trip)
}

/// Reference implementation seeding one variable at a time.
pub fn dense_jacobian(
    vars: Lattice,
    rows: Lattice,
    mut eval: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<CsrMatrix> {
    let mut trip = Vec::new();
    let mut seed = vec![0.0; vars.len()];
    for col in 0..vars.len() {
        seed[col] = 1.0;
        let d = eval(&seed)?;
        seed[col] = 0.0;
        for (r, v) in d.into_iter().enumerate() {
            if v != 0.0 {
                trip.push((r, col, v));
            }
        }
    }
    CsrMatrix::from_triplets(rows.len(), vars.len(), trip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_separate_periodic_neighbours() {
        let c = i_colors(48, 7);
        for a in 0..48 {
            for b in 0..48 {
                if a != b && c[a] == c[b] {
                    let d = (a as isize - b as isize).unsigned_abs();
                    assert!(d.min(48 - d) >= 7);
                }
            }
        }
    }

    #[test]
    fn stencil_matrix_recovered() {
        // y_{ij} = Σ_{|di|,|dj| ≤ 2} k(di, dj) x_{i+di, j+dj}, periodic in i
        let l = Lattice { n: 11, nj: 6, comps: 1 };
        let apply = |x: &[f64]| -> Result<Vec<f64>> {
            let mut y = vec![0.0; l.len()];
            for j in 0..l.nj {
                for i in 0..l.n {
                    for dj in -2i64..=2 {
                        let jj = j as i64 + dj;
                        if jj < 0 || jj >= l.nj as i64 {
                            continue;
                        }
                        for di in -2i64..=2 {
                            let ii = (i as i64 + di).rem_euclid(l.n as i64) as usize;
                            let k = 1.0 + (di * 3 + dj) as f64 * 0.1 + (i * j) as f64 * 0.01;
                            y[l.index(i, j, 0)] += k * x[l.index(ii, jj as usize, 0)];
                        }
                    }
                }
            }
            Ok(y)
        };
        let a = colored_jacobian(l, l, 2, apply).unwrap();
        let b = dense_jacobian(l, l, apply).unwrap();
        assert_eq!(a, b);
    }
}
