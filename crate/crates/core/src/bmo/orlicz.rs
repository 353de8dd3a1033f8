//! Young functions, Luxemburg norms and the Orlicz-bumped tilde norm.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, ScalarField};
use crate::tuples::{SymbolVector, Tuple};
use crate::weights::{sup_over_cubes, CubeValue, MatrixWeight};

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Young function with an optional closed-form inverse.
#[derive(Clone)]
pub struct YoungFunction {
    label: String,
    eval: Eval,
    inverse: Option<Eval>,
}

impl fmt::Debug for YoungFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "YoungFunction({})", self.label)
    }
}

impl YoungFunction {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        YoungFunction { label: label.into(), eval: Arc::new(eval), inverse: None }
    }

    pub fn with_inverse(mut self, inverse: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    /// `t^q`, q ≥ 1.
    pub fn power(q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::Domain(format!("t^{q} is not a Young function")));
        }
        Ok(Self::new(format!("t^{q}"), move |t| t.powf(q)).with_inverse(move |s| s.powf(1.0 / q)))
    }

    /// `t^q·log(e+t)^s`.
    pub fn power_log(q: f64, s: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0 && s >= 0.0) {
            return Err(Error::Domain(format!("t^{q} log(e+t)^{s} is not a Young function")));
        }
        Ok(Self::new(format!("t^{q} log(e+t)^{s}"), move |t| t.powf(q) * (std::f64::consts::E + t).ln().powf(s)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    /// `Φ^{-1}(s)`, by bisection when no closed form was given.
    pub fn inverse(&self, s: f64) -> f64 {
        if let Some(inv) = &self.inverse {
            return inv(s);
        }
        if s <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.eval(hi) < s {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Spot checks: Φ(0) = 0, strictly increasing, midpoint convex on a log grid.
    pub fn check(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::Domain(format!("{}: Φ(0) ≠ 0", self.label)));
        }
        let ts: Vec<f64> = (-40..=40).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        for w in ts.windows(2) {
            let (a, b) = (self.eval(w[0]), self.eval(w[1]));
            if !(b > a) {
                return Err(Error::Domain(format!("{}: not increasing near {}", self.label, w[0])));
            }
            let mid = self.eval(0.5 * (w[0] + w[1]));
            if mid > 0.5 * (a + b) * (1.0 + 1e-12) {
                return Err(Error::Domain(format!("{}: not convex near {}", self.label, w[0])));
            }
        }
        Ok(())
    }
}

/// `inf{λ > 0 : mean Φ(|f|/λ) ≤ 1}` over the given values, to 1e-12 relative.
pub fn luxemburg(values: &[f64], phi: &YoungFunction) -> f64 {
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || abs.is_empty() {
        return 0.0;
    }
    let k = abs.len() as f64;
    let modular = |lam: f64| abs.iter().map(|&a| phi.eval(a / lam)).sum::<f64>() / k;
    let inv1 = phi.inverse(1.0);
    let mean = abs.iter().sum::<f64>() / k;
    // Jensen brackets the root
    let (mut lo, mut hi) = (mean / inv1, max / inv1);
    while modular(lo) < 1.0 {
        lo *= 0.5;
    }
    while modular(hi) > 1.0 {
        hi *= 2.0;
    }
    while hi / lo - 1.0 > 1e-12 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if modular(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn orlicz_luxemburg(f: &ScalarField, phi: &YoungFunction, q: &DyadicCube) -> Result<f64> {
    let grid = f.grid();
    grid.check_cube(q)?;
    let vals: Vec<f64> = q.cells(&grid).iter().map(|&c| f.get(c)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("f is not finite on Q".into()));
    }
    Ok(luxemburg(&vals, phi))
}

// 8-point Gauss–Legendre on [-1, 1]
const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

fn gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, w)| w * (f(c - h * x) + f(c + h * x))).sum::<f64>() * h
}

/// `∫_1^∞ Φ(t)t^{-p} dt/t`, or `+∞` when the tail fails the ratio test.
pub fn young_bp_alpha(phi: &YoungFunction, p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    // t = e^u
    let integrand = |u: f64| {
        let v = phi.eval(u.exp()) * (-p * u).exp();
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut total = 0.0;
    let mut prev = f64::NAN;
    let mut ratio = f64::NAN;
    for k in 0..600 {
        let a = k as f64;
        let piece: f64 = (0..4).map(|i| gauss(&integrand, a + 0.25 * i as f64, a + 0.25 * (i + 1) as f64)).sum();
        if !piece.is_finite() {
            return Ok(f64::INFINITY);
        }
        if k > 0 && prev > 0.0 {
            ratio = piece / prev;
        }
        total += piece;
        prev = piece;
        if k >= 8 && (piece == 0.0 || piece < 1e-17 * total) {
            if ratio.is_finite() && ratio < 1.0 {
                total += piece * ratio / (1.0 - ratio);
            }
            return Ok(total);
        }
    }
    if !(ratio < 1.0 - 1e-6) {
        return Ok(f64::INFINITY);
    }
    Ok(total + prev * ratio / (1.0 - ratio))
}

/// `max Φ^{-1}(t)Ψ^{-1}(t)/t` over a log grid of t in [1e-6, 1e6].
pub fn young_kappa(phi: &YoungFunction, psi: &YoungFunction) -> f64 {
    (-60..=60)
        .map(|k| {
            let t = 10f64.powf(k as f64 / 10.0);
            phi.inverse(t) * psi.inverse(t) / t
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub kappa: f64,
    pub holds: bool,
}

/// `⨍_Q|fg|` against `2κ‖f‖_{Φ(L)(Q)}‖g‖_{Ψ(L)(Q)}`.
pub fn orlicz_holder_check(f: &ScalarField, g: &ScalarField, phi: &YoungFunction, psi: &YoungFunction, q: &DyadicCube) -> Result<HolderCheck> {
    f.grid().ensure_same(&g.grid())?;
    let cells = q.cells(&f.grid());
    let lhs = cells.iter().map(|&c| (f.get(c) * g.get(c)).abs()).sum::<f64>() / cells.len() as f64;
    let kappa = young_kappa(phi, psi);
    let rhs = 2.0 * kappa * orlicz_luxemburg(f, phi, q)? * orlicz_luxemburg(g, psi, q)?;
    Ok(HolderCheck { lhs, rhs, kappa, holds: lhs <= rhs * (1.0 + 1e-9) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NestingOrder {
    /// Inner `C` in y, outer `D` in x.
    CD,
    /// Inner `D` in x, outer `C` in y.
    DC,
}

/// Nested Luxemburg norm of `‖V^{1/p}(x)(Σ_σ ±B_σ(x)B_{(σ^c)^t}(y))U^{-1/p}(y)‖`
/// over each cube, with σ running over all of C(m).
pub fn bmo_orlicz_tilde(
    b: &SymbolVector,
    u: &MatrixWeight,
    v: &MatrixWeight,
    p: f64,
    c: &YoungFunction,
    d: &YoungFunction,
    order: NestingOrder,
) -> Result<CubeValue> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    u.grid().ensure_same(&v.grid())?;
    b.grid().ensure_same(&u.grid())?;
    if b.n() != u.n() || v.n() != u.n() {
        return Err(Error::Dimension("symbol and weight sizes differ".into()));
    }
    let grid = u.grid();
    let cells_total = grid.cells();
    let table = super::tilde_pair_table(b, &Tuple::full(b.m()), &v.power_field(1.0 / p), &u.power_field(-1.0 / p), false)?;
    Ok(sup_over_cubes(&grid, |_, cells| {
        let inner: Vec<f64> = cells
            .iter()
            .map(|&o| {
                let row: Vec<f64> = cells
                    .iter()
                    .map(|&i| match order {
                        NestingOrder::CD => table[o * cells_total + i],
                        NestingOrder::DC => table[i * cells_total + o],
                    })
                    .collect();
                luxemburg(&row, if order == NestingOrder::CD { c } else { d })
            })
            .collect();
        luxemburg(&inner, if order == NestingOrder::CD { d } else { c })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn field() -> ScalarField {
        ScalarField::new(Grid::new(1, 3).unwrap(), vec![0.0, 1.0, -3.0, 2.0, 0.25, 7.0, 1.0, -0.5]).unwrap()
    }

    #[test]
    fn luxemburg_closed_forms() {
        let f = field();
        let q = DyadicCube::unit(1);
        let l1 = orlicz_luxemburg(&f, &YoungFunction::power(1.0).unwrap(), &q).unwrap();
        assert!((l1 - f.lp_average(&q, 1.0)).abs() < 1e-11 * l1);
        let l3 = orlicz_luxemburg(&f, &YoungFunction::power(3.0).unwrap(), &q).unwrap();
        assert!((l3 - f.lp_average(&q, 3.0)).abs() < 1e-11 * l3);
        let zero = ScalarField::constant(f.grid(), 0.0);
        assert_eq!(orlicz_luxemburg(&zero, &YoungFunction::power(2.0).unwrap(), &q).unwrap(), 0.0);
    }

    #[test]
    fn luxemburg_llogl_bracket() {
        let f = field();
        let q = DyadicCube::unit(1);
        let phi = YoungFunction::power_log(1.0, 1.0).unwrap();
        phi.check().unwrap();
        let lam = orlicz_luxemburg(&f, &phi, &q).unwrap();
        let modular = |l: f64| f.values().iter().map(|v| phi.eval(v.abs() / l)).sum::<f64>() / 8.0;
        assert!(modular(lam * (1.0 + 1e-10)) <= 1.0);
        assert!(modular(lam * (1.0 - 1e-10)) > 1.0);
    }

    #[test]
    fn bp_alpha_closed_forms() {
        for (q, p) in [(1.0, 2.0), (1.5, 2.0), (2.0, 5.0), (1.0, 1.01)] {
            let a = young_bp_alpha(&YoungFunction::power(q).unwrap(), p).unwrap();
            assert!((a - 1.0 / (p - q)).abs() < 1e-10 / (p - q), "q={q} p={p}: {a}");
        }
        assert_eq!(young_bp_alpha(&YoungFunction::power(2.0).unwrap(), 2.0).unwrap(), f64::INFINITY);
        let lg = YoungFunction::power_log(1.0, 1.0).unwrap();
        assert!(young_bp_alpha(&lg, 2.0).unwrap().is_finite());
        assert_eq!(young_bp_alpha(&YoungFunction::power_log(2.0, 1.0).unwrap(), 2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn holder_for_conjugate_powers() {
        let f = field();
        let g = f.map(|x| 1.0 + x * x);
        let (phi, psi) = (YoungFunction::power(3.0).unwrap(), YoungFunction::power(1.5).unwrap());
        let chk = orlicz_holder_check(&f, &g, &phi, &psi, &DyadicCube::unit(1)).unwrap();
        assert!((chk.kappa - 1.0).abs() < 1e-12);
        assert!(chk.holds);
    }

    #[test]
    fn non_young_functions_rejected() {
        assert!(YoungFunction::new("sqrt", f64::sqrt).check().is_err());
        assert!(YoungFunction::new("shifted", |t| t + 1.0).check().is_err());
        assert!(YoungFunction::power(0.5).is_err());
    }
}
