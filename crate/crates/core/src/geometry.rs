//! Analytic profiles, CST parametrization and boundary sampling.
//!
//! Boundary ordering around the O-grid: station 0 is the lower-surface
//! trailing edge, stations run along the lower surface to the leading edge
//! and back along the upper surface, ending on the trailing edge again.
//! The leading-edge point is shared by both sides.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

/// NACA0012 closed-trailing-edge upper-surface Bernstein coefficients.
pub const NACA0012_UPPER: [f64; 6] = [
    0.17098638, 0.15535516, 0.15907811, 0.13787830, 0.14477407, 0.14382457,
];

/// Signed Bernstein coefficients of both surfaces, upper first.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignVector {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl DesignVector {
    pub fn new(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        if upper.len() != lower.len() {
            return Err(Error::Dimension {
                expected: upper.len(),
                got: lower.len(),
            });
        }
        Ok(DesignVector { upper, lower })
    }

    /// Builds from the flattened `(upper, lower)` ordering.
    pub fn from_flat(z: &[f64]) -> Result<Self> {
        if z.is_empty() || z.len() % 2 != 0 {
            return Err(Error::Dimension {
                expected: 12,
                got: z.len(),
            });
        }
        let h = z.len() / 2;
        Ok(DesignVector {
            upper: z[..h].to_vec(),
            lower: z[h..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.upper.iter().chain(self.lower.iter()).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.upper.len() + self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.upper
            .iter()
            .zip(&self.lower)
            .all(|(u, l)| (u + l).abs() <= tol)
    }

    /// One text row of full-precision decimals.
    pub fn to_text_row(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_flat().iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            write!(s, "{:.17e}", v).unwrap();
        }
        s
    }

    pub fn from_text_row(row: &str) -> Result<Self> {
        let vals = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("design value {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_flat(&vals)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.to_text_row())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        for line in f.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Self::from_text_row(t);
        }
        Err(Error::Parse(format!("{}: no design row", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CstConfig {
    /// Bernstein order; each surface carries `order + 1` coefficients.
    pub order: usize,
    pub n1: f64,
    pub n2: f64,
    pub chord: f64,
    pub te_offset_upper: f64,
    pub te_offset_lower: f64,
    pub x0: f64,
    /// Sigmoid sharpness of the chordwise station clustering.
    pub stretch: f64,
}

impl Default for CstConfig {
    fn default() -> Self {
        CstConfig {
            order: 5,
            n1: 0.5,
            n2: 1.0,
            chord: 1.0,
            te_offset_upper: 0.0,
            te_offset_lower: 0.0,
            x0: 0.0,
            stretch: 12.0,
        }
    }
}

impl CstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Config("cst.order must be >= 1".into()));
        }
        if !(self.chord > 0.0) {
            return Err(Error::Config("cst.chord must be positive".into()));
        }
        if !(self.n1 > 0.0 && self.n2 > 0.0) {
            return Err(Error::Config("cst class exponents must be positive".into()));
        }
        Ok(())
    }
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{what} = {x} outside [0, 1]")));
    }
    Ok(())
}

/// `χ^N1 (1-χ)^N2`.
pub fn class_function(chi: f64, n1: f64, n2: f64) -> Result<f64> {
    check_unit(chi, "chi")?;
    if chi == 0.0 || chi == 1.0 {
        return Ok(if n1 > 0.0 && n2 > 0.0 {
            0.0
        } else {
            chi.powf(n1) * (1.0 - chi).powf(n2)
        });
    }
    Ok(chi.powf(n1) * (1.0 - chi).powf(n2))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for t in 0..k {
        c = c * (n - t) as f64 / (t + 1) as f64;
    }
    c
}

/// Bernstein basis values `B^n_k(χ)` for `k = 0..=n`.
pub fn bernstein_basis(chi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| binomial(n, k) * chi.powi(k as i32) * (1.0 - chi).powi((n - k) as i32))
        .collect()
}

/// `Σ a_k B^n_k(χ)` with `n = coeffs.len() - 1`.
pub fn bernstein_shape<T: Real>(chi: f64, coeffs: &[T]) -> Result<T> {
    check_unit(chi, "chi")?;
    if coeffs.is_empty() {
        return Err(Error::Dimension {
            expected: 1,
            got: 0,
        });
    }
    let basis = bernstein_basis(chi, coeffs.len() - 1);
    Ok(coeffs
        .iter()
        .zip(&basis)
        .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
}

/// Surface ordinate over chord, `C(χ) S(χ) + χ Δ`.
pub fn cst_surface<T: Real>(chi: f64, coeffs: &[T], te_offset: f64, cfg: &CstConfig) -> Result<T> {
    if coeffs.len() != cfg.order + 1 {
        return Err(Error::Dimension {
            expected: cfg.order + 1,
            got: coeffs.len(),
        });
    }
    let c = class_function(chi, cfg.n1, cfg.n2)?;
    Ok(bernstein_shape(chi, coeffs)? * c + chi * te_offset)
}

/// Symmetric four-digit profile with the closed-trailing-edge quartic term.
pub fn naca0012_analytic(x: f64, t: f64) -> Result<f64> {
    check_unit(x, "x")?;
    Ok(5.0
        * t
        * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3)
            - 0.1036 * x.powi(4)))
}

pub fn biconvex(x: f64, t: f64) -> Result<f64> {
    check_unit(x, "x")?;
    Ok(2.0 * t * x * (1.0 - x))
}

pub fn naca0012_cst() -> DesignVector {
    DesignVector {
        upper: NACA0012_UPPER.to_vec(),
        lower: NACA0012_UPPER.iter().map(|a| -a).collect(),
    }
}

/// Sigmoid-clustered chordwise stations `χ_1..χ_{I_h}`, trailing edge first.
pub fn chordwise_stations(i_h: usize, stretch: f64) -> Vec<f64> {
    let sigma = |i: usize| 1.0 / (1.0 + (-stretch * (i as f64 / i_h as f64 - 0.5)).exp());
    let s1 = sigma(1);
    let sh = sigma(i_h);
    (1..=i_h)
        .map(|i| {
            if i == 1 {
                1.0
            } else if i == i_h {
                0.0
            } else {
                1.0 - (sigma(i) - s1) / (sh - s1)
            }
        })
        .collect()
}

/// Closed boundary polyline of `I_max` points; first and last coincide at
/// the trailing edge.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCurve {
    pub points: Vec<(f64, f64)>,
}

impl BoundaryCurve {
    pub fn i_max(&self) -> usize {
        self.points.len()
    }

    pub fn half_count(&self) -> usize {
        (self.points.len() + 1) / 2
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "i,x,y")?;
        for (i, (x, y)) in self.points.iter().enumerate() {
            writeln!(f, "{},{:.16e},{:.16e}", i + 1, x, y)?;
        }
        Ok(())
    }
}

fn check_i_max(i_max: usize) -> Result<()> {
    if i_max % 2 == 0 || i_max < 9 {
        return Err(Error::Domain(format!(
            "I_max must be odd and >= 9, got {i_max}"
        )));
    }
    Ok(())
}

/// Boundary ordinates as a generic function of the coefficients, so that
/// the same code yields values and design derivatives. Returns the `I_max - 1`
/// distinct periodic stations (the closing trailing-edge duplicate dropped).
pub fn boundary_stations<T: Real>(
    upper: &[T],
    lower: &[T],
    cfg: &CstConfig,
    i_max: usize,
) -> Result<Vec<(f64, T)>> {
    check_i_max(i_max)?;
    let i_h = (i_max + 1) / 2;
    let chi = chordwise_stations(i_h, cfg.stretch);
    let mut pts = Vec::with_capacity(i_max - 1);
    // lower surface, trailing edge to leading edge
    for &c in &chi {
        let y = cst_surface(c, lower, cfg.te_offset_lower, cfg)? * cfg.chord;
        pts.push((cfg.x0 + cfg.chord * c, y));
    }
    // upper surface, leading edge (exclusive) to trailing edge (exclusive)
    for &c in chi.iter().rev().skip(1).take(i_h - 2) {
        let y = cst_surface(c, upper, cfg.te_offset_upper, cfg)? * cfg.chord;
        pts.push((cfg.x0 + cfg.chord * c, y));
    }
    debug_assert_eq!(pts.len(), i_max - 1);
    Ok(pts)
}

pub fn sample_boundary(design: &DesignVector, cfg: &CstConfig, i_max: usize) -> Result<BoundaryCurve> {
    cfg.validate()?;
    let mut points = boundary_stations(&design.upper, &design.lower, cfg, i_max)?;
    // closing point on the upper trailing edge
    let te_chi = 1.0;
    let y_te = cst_surface(te_chi, &design.upper, cfg.te_offset_upper, cfg)? * cfg.chord;
    points.push((cfg.x0 + cfg.chord, y_te));
    Ok(BoundaryCurve { points })
}

/// Signed crossing check between upper and lower surfaces at the sampled
/// stations: upper must lie above lower at every interior station.
pub fn surfaces_cross(design: &DesignVector, cfg: &CstConfig, i_max: usize) -> Result<bool> {
    check_i_max(i_max)?;
    let chi = chordwise_stations((i_max + 1) / 2, cfg.stretch);
    for &c in chi.iter().filter(|&&c| c > 0.0 && c < 1.0) {
        let yu: f64 = cst_surface(c, &design.upper, cfg.te_offset_upper, cfg)?;
        let yl: f64 = cst_surface(c, &design.lower, cfg.te_offset_lower, cfg)?;
        if yu <= yl {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_function_values() {
        assert_eq!(class_function(0.0, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(class_function(1.0, 0.5, 1.0).unwrap(), 0.0);
        let v = class_function(0.5, 0.5, 1.0).unwrap();
        assert!((v - 0.5f64.sqrt() * 0.5).abs() < 1e-15);
        assert!((v - 0.3535533906).abs() < 1e-10);
        assert!(class_function(1.2, 0.5, 1.0).is_err());
        assert!(class_function(-1e-9, 0.5, 1.0).is_err());
    }

    #[test]
    fn bernstein_values() {
        let ones = [1.0; 6];
        for &x in &[0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((bernstein_shape(x, &ones).unwrap() - 1.0).abs() < 1e-14);
        }
        let a = [0.3, 0.1, 0.2, 0.4, 0.5, 0.6];
        assert_eq!(bernstein_shape(0.0, &a).unwrap(), 0.3);
        let e2 = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert!((bernstein_shape(0.5, &e2).unwrap() - 0.3125).abs() < 1e-15);
        let empty: [f64; 0] = [];
        assert!(bernstein_shape(0.5, &empty).is_err());
    }

    #[test]
    fn cst_surface_endpoints_and_naca_agreement() {
        let cfg = CstConfig::default();
        let d = naca0012_cst();
        assert_eq!(cst_surface(0.0, &d.upper, 0.0, &cfg).unwrap(), 0.0);
        assert!(cst_surface(1.0, &d.upper, 0.0, &cfg).unwrap().abs() < 1e-15);
        // brute-force polynomial expansion of the CST formula at χ = 0.5
        let chi: f64 = 0.5;
        let mut s = 0.0;
        for k in 0..6 {
            let c = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0][k];
            s += NACA0012_UPPER[k] * c * chi.powi(k as i32) * (1.0 - chi).powi(5 - k as i32);
        }
        let brute = chi.sqrt() * (1.0 - chi) * s;
        let y = cst_surface(0.5, &d.upper, 0.0, &cfg).unwrap();
        assert!((y - brute).abs() < 1e-15);
        let naca = naca0012_analytic(0.5, 0.12).unwrap();
        assert!((y - naca).abs() < 2e-3, "cst {y} vs naca {naca}");
        assert!(cst_surface(0.5, &d.upper[..5], 0.0, &cfg).is_err());
    }

    #[test]
    fn analytic_profiles() {
        assert_eq!(naca0012_analytic(0.0, 0.12).unwrap(), 0.0);
        assert!(naca0012_analytic(1.0, 0.12).unwrap().abs() < 1e-15);
        let x: f64 = 0.3;
        let direct =
            0.6 * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4));
        let v = naca0012_analytic(0.3, 0.12).unwrap();
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.0600071).abs() < 1e-6);
        assert!(naca0012_analytic(1.5, 0.12).is_err());
        assert_eq!(biconvex(0.0, 0.1).unwrap(), 0.0);
        assert!((biconvex(0.5, 0.1).unwrap() - 0.05).abs() < 1e-16);
        assert_eq!(biconvex(1.0, 0.1).unwrap(), 0.0);
        assert!(biconvex(2.0, 0.1).is_err());
    }

    #[test]
    fn naca_cst_coefficients() {
        let d = naca0012_cst();
        assert_eq!(d.upper[0], 0.17098638);
        assert_eq!(d.lower[3], -0.13787830);
        assert_eq!(d.to_flat().len(), 12);
        assert!(d.is_symmetric(0.0));
    }

    #[test]
    fn stations_endpoints_and_midpoint() {
        let chi = chordwise_stations(25, 12.0);
        assert_eq!(chi.len(), 25);
        assert_eq!(chi[0], 1.0);
        assert_eq!(chi[24], 0.0);
        // direct sigmoid evaluation for the middle station i = 13
        let sig = |i: f64| 1.0 / (1.0 + (-12.0 * (i / 25.0 - 0.5)).exp());
        let expect = 1.0 - (sig(13.0) - sig(1.0)) / (sig(25.0) - sig(1.0));
        assert!((chi[12] - expect).abs() < 1e-15);
        // i/I_h - 1/2 = 0.02 at i = 13, so the midpoint is not exactly 1/2
        assert!(chi[12] < 0.5);
        for w in chi.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn sampled_naca_boundary() {
        let b = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49).unwrap();
        assert_eq!(b.i_max(), 49);
        assert_eq!(b.half_count(), 25);
        assert_eq!(b.points[0], (1.0, b.points[0].1));
        assert!(b.points[0].1.abs() < 1e-15);
        assert!((b.points[0].0 - b.points[48].0).abs() < 1e-15);
        assert!((b.points[0].1 - b.points[48].1).abs() < 1e-15);
        assert_eq!(b.points[24], (0.0, 0.0));
        // lower side below, upper side above, mirror images
        for i in 1..24 {
            let (xl, yl) = b.points[i];
            let (xu, yu) = b.points[48 - i];
            assert!(yl < 0.0 && yu > 0.0);
            assert_eq!(xl, xu);
            assert!((yl + yu).abs() < 1e-15);
        }
        assert!(sample_boundary(&naca0012_cst(), &CstConfig::default(), 48).is_err());
        assert!(sample_boundary(&naca0012_cst(), &CstConfig::default(), 7).is_err());
    }

    #[test]
    fn design_text_row_round_trip() {
        let d = naca0012_cst();
        let back = DesignVector::from_text_row(&d.to_text_row()).unwrap();
        assert_eq!(back, d);
        assert!(DesignVector::from_text_row("1 2 x").is_err());
    }

    #[test]
    fn crossing_detection() {
        let cfg = CstConfig::default();
        assert!(!surfaces_cross(&naca0012_cst(), &cfg, 49).unwrap());
        let mut d = naca0012_cst();
        std::mem::swap(&mut d.upper, &mut d.lower);
        assert!(surfaces_cross(&d, &cfg, 49).unwrap());
    }

    proptest! {
        #[test]
        fn partition_of_unity(chi in 0.0f64..=1.0) {
            let s: f64 = bernstein_basis(chi, 5).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn closed_trailing_edge(a in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let cfg = CstConfig::default();
            let d = DesignVector::from_flat(&a).unwrap();
            let yu: f64 = cst_surface(1.0, &d.upper, 0.0, &cfg).unwrap();
            let yl: f64 = cst_surface(1.0, &d.lower, 0.0, &cfg).unwrap();
            prop_assert!(yu.abs() < 1e-14 && yl.abs() < 1e-14);
        }

        #[test]
        fn mirrored_design_mirrors_surface(a in proptest::collection::vec(-0.5f64..0.5, 6), chi in 0.0f64..=1.0) {
            let cfg = CstConfig::default();
            let lower: Vec<f64> = a.iter().map(|v| -v).collect();
            let yu: f64 = cst_surface(chi, &a, 0.0, &cfg).unwrap();
            let yl: f64 = cst_surface(chi, &lower, 0.0, &cfg).unwrap();
            prop_assert!((yu + yl).abs() < 1e-15);
        }
    }
}
