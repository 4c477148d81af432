//! Line solvers for the ADI and AF2 sweeps.
//!
//! No pivoting: every system built by the sweeps is diagonally dominant by
//! construction, so a zero pivot signals bad solver parameters.

use crate::error::{Error, Result};

/// `sub[k] x[k-1] + diag[k] x[k] + sup[k] x[k+1] = rhs[k]`.
///
/// `sub[0]` and `sup[n-1]` are ignored by the plain solver; the periodic
/// solver reads them as the corner couplings.
#[derive(Clone, Debug, Default)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if sub.len() != n || sup.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: if sub.len() != n { sub.len() } else { sup.len() },
            });
        }
        Ok(Tridiagonal { sub, diag, sup })
    }

    pub fn with_len(n: usize) -> Self {
        Tridiagonal {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.sub, &self.diag, &self.sup, rhs)
    }

    pub fn solve_periodic(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_periodic_tridiagonal(&self.sub, &self.diag, &self.sup, rhs)
    }
}

/// Thomas algorithm.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    for v in [sub.len(), sup.len(), rhs.len()] {
        if v != n {
            return Err(Error::Dimension { expected: n, got: v });
        }
    }
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Singular { row: 0 });
    }
    x[0] = rhs[0] / beta;
    for k in 1..n {
        c[k - 1] = sup[k - 1] / beta;
        beta = diag[k] - sub[k] * c[k - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Singular { row: k });
        }
        x[k] = (rhs[k] - sub[k] * x[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve with corners `sub[0]` (row 0, column n-1) and
/// `sup[n-1]` (row n-1, column 0), via a Sherman–Morrison correction.
pub fn solve_periodic_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::Dimension { expected: 3, got: n });
    }
    for v in [sub.len(), sup.len(), rhs.len()] {
        if v != n {
            return Err(Error::Dimension { expected: n, got: v });
        }
    }
    let alpha = sup[n - 1]; // A[n-1][0]
    let beta = sub[0]; // A[0][n-1]
    if alpha == 0.0 && beta == 0.0 {
        return solve_tridiagonal(sub, diag, sup, rhs);
    }
    // A = T + u vᵀ, u = (g, 0, .., 0, alpha), v = (1, 0, .., 0, beta/g)
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(sub, &d, sup, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(sub, &d, sup, &u)?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Singular { row: n - 1 });
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Forward substitution for `diag[k] x[k] + sub[k-1] x[k-1] = rhs[k]`.
pub fn solve_lower_bidiagonal(diag: &[f64], sub: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n {
        return Err(Error::Dimension { expected: n, got: rhs.len() });
    }
    if n > 0 && sub.len() + 1 != n {
        return Err(Error::Dimension { expected: n - 1, got: sub.len() });
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        if diag[k] == 0.0 {
            return Err(Error::Singular { row: k });
        }
        let carry = if k > 0 { sub[k - 1] * x[k - 1] } else { 0.0 };
        x[k] = (rhs[k] - carry) / diag[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(sub: &[f64], diag: &[f64], sup: &[f64], periodic: bool) -> DMatrix<f64> {
        let n = diag.len();
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n {
            a[(k, k)] = diag[k];
            if k > 0 {
                a[(k, k - 1)] = sub[k];
            }
            if k + 1 < n {
                a[(k, k + 1)] = sup[k];
            }
        }
        if periodic {
            a[(0, n - 1)] += sub[0];
            a[(n - 1, 0)] += sup[n - 1];
        }
        a
    }

    fn oracle(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        a.clone()
            .lu()
            .solve(&DVector::from_column_slice(b))
            .unwrap()
            .iter()
            .copied()
            .collect()
    }

    fn random_dominant(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let sub: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n)
            .map(|k| {
                let s = sub[k].abs() + sup[k].abs() + rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let b = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (sub, diag, sup, b)
    }

    fn rel_err(x: &[f64], y: &[f64]) -> f64 {
        let num = x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let den = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        num / den.max(1e-300)
    }

    #[test]
    fn identity_returns_rhs() {
        let n = 5;
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let x = solve_tridiagonal(&vec![0.0; n], &vec![1.0; n], &vec![0.0; n], &b).unwrap();
        assert_eq!(x, b);
        let x = solve_periodic_tridiagonal(&vec![0.0; n], &vec![1.0; n], &vec![0.0; n], &b).unwrap();
        assert_eq!(x, b);
        let x = solve_lower_bidiagonal(&vec![1.0; n], &vec![0.0; n - 1], &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn three_point_laplacian() {
        let x = solve_tridiagonal(&[-1.0; 3], &[2.0; 3], &[-1.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        for (a, b) in x.iter().zip([0.75, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn circulant_four() {
        let sub = [-1.0; 4];
        let sup = [-1.0; 4];
        let diag = [4.0; 4];
        let b = [1.0, 0.0, 0.0, 0.0];
        let x = solve_periodic_tridiagonal(&sub, &diag, &sup, &b).unwrap();
        let o = oracle(&dense(&sub, &diag, &sup, true), &b);
        assert!(rel_err(&x, &o) < 1e-14);
        // circulant inverse by hand: x = (7, 2, 1, 2)/24
        assert!((x[0] - 7.0 / 24.0).abs() < 1e-15);
        assert!((x[2] - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn bidiagonal_hand_case() {
        let x = solve_lower_bidiagonal(&[1.0; 3], &[-1.0; 2], &[1.0; 3]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_pivots_reported() {
        assert!(matches!(
            solve_tridiagonal(&[0.0; 2], &[0.0, 1.0], &[0.0; 2], &[1.0, 1.0]),
            Err(Error::Singular { row: 0 })
        ));
        assert!(matches!(
            solve_lower_bidiagonal(&[1.0, 0.0], &[1.0], &[1.0, 1.0]),
            Err(Error::Singular { row: 1 })
        ));
        assert!(solve_periodic_tridiagonal(&[0.0; 2], &[1.0; 2], &[0.0; 2], &[1.0; 2]).is_err());
    }

    #[test]
    fn periodic_reduces_to_plain_without_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 3..20 {
            let (mut sub, diag, mut sup, b) = random_dominant(&mut rng, n);
            sub[0] = 0.0;
            sup[n - 1] = 0.0;
            let a = solve_tridiagonal(&sub, &diag, &sup, &b).unwrap();
            let p = solve_periodic_tridiagonal(&sub, &diag, &sup, &b).unwrap();
            for (x, y) in a.iter().zip(&p) {
                assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn random_systems_match_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..1000 {
            let n = 3 + case % 62;
            let (sub, diag, sup, b) = random_dominant(&mut rng, n);

            let x = solve_tridiagonal(&sub, &diag, &sup, &b).unwrap();
            assert!(rel_err(&x, &oracle(&dense(&sub, &diag, &sup, false), &b)) < 1e-10);

            let x = solve_periodic_tridiagonal(&sub, &diag, &sup, &b).unwrap();
            assert!(rel_err(&x, &oracle(&dense(&sub, &diag, &sup, true), &b)) < 1e-10);

            let lower = &sub[1..];
            let x = solve_lower_bidiagonal(&diag, lower, &b).unwrap();
            let mut a = DMatrix::zeros(n, n);
            for k in 0..n {
                a[(k, k)] = diag[k];
                if k > 0 {
                    a[(k, k - 1)] = lower[k - 1];
                }
            }
            assert!(rel_err(&x, &oracle(&a, &b)) < 1e-10);
        }
    }

    #[test]
    fn residual_postcondition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 49;
        let (sub, diag, sup, b) = random_dominant(&mut rng, n);
        let x = solve_periodic_tridiagonal(&sub, &diag, &sup, &b).unwrap();
        let a = dense(&sub, &diag, &sup, true);
        let xv = DVector::from_column_slice(&x);
        let r = &a * &xv - DVector::from_column_slice(&b);
        let anorm = (0..n)
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = 1e-12 * (anorm * xv.amax() + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        assert!(r.amax() <= bound);
    }
}
