//! Weighted BMO norms of symbol vectors and of scalar symbols.

pub mod orlicz;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{haar_coefficients, DyadicCube, MatrixField, ScalarField};
use crate::linalg::Matrix;
use crate::pdmat::{conjugate_exponent, Reducer};
use crate::tuples::{sign, symbol_product, SymbolVector, Tuple};
use crate::weights::{nested_average, sup_over_cubes, CubeValue, MatrixWeight};

pub use orlicz::{
    bmo_orlicz_tilde, luxemburg, orlicz_holder_check, orlicz_luxemburg, young_bp_alpha, young_kappa, HolderCheck,
    NestingOrder, YoungFunction,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmoKind {
    Av,
    AvStar,
    Red,
    RedStar,
    Sub1,
    Sub2,
    Sub1Star,
    Sub2Star,
    Tilde,
    TildeStar,
    ScalarJ,
    ScalarJ1,
    ScalarJ2,
    ScalarTildeJ,
    ScalarTildeJ2,
    Bloom,
    CarlesonHaar,
}

impl BmoKind {
    pub const ALL: [BmoKind; 17] = [
        BmoKind::Av,
        BmoKind::AvStar,
        BmoKind::Red,
        BmoKind::RedStar,
        BmoKind::Sub1,
        BmoKind::Sub2,
        BmoKind::Sub1Star,
        BmoKind::Sub2Star,
        BmoKind::Tilde,
        BmoKind::TildeStar,
        BmoKind::ScalarJ,
        BmoKind::ScalarJ1,
        BmoKind::ScalarJ2,
        BmoKind::ScalarTildeJ,
        BmoKind::ScalarTildeJ2,
        BmoKind::Bloom,
        BmoKind::CarlesonHaar,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    /// Takes a scalar symbol and an integer `j`.
    pub fn is_scalar(self) -> bool {
        matches!(
            self,
            BmoKind::ScalarJ
                | BmoKind::ScalarJ1
                | BmoKind::ScalarJ2
                | BmoKind::ScalarTildeJ
                | BmoKind::ScalarTildeJ2
                | BmoKind::Bloom
                | BmoKind::CarlesonHaar
        )
    }

    /// Raises the oscillation norm to `1/|σ|`, so σ = ∅ is meaningless.
    pub fn has_root(self) -> bool {
        matches!(self, BmoKind::Av | BmoKind::AvStar | BmoKind::Red | BmoKind::RedStar)
    }
}

impl fmt::Display for BmoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BmoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Invalid { path: "/kind".into(), msg: format!("unknown BMO kind `{s}`") })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BmoSymbols<'a> {
    Matrix { b: &'a SymbolVector, sigma: &'a Tuple },
    Scalar { b: &'a ScalarField, j: u32 },
}

#[derive(Clone, Copy, Debug)]
pub struct BmoRequest<'a> {
    pub kind: BmoKind,
    pub symbols: BmoSymbols<'a>,
    pub u: &'a MatrixWeight,
    pub v: &'a MatrixWeight,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BmoValue {
    pub kind: BmoKind,
    pub value: f64,
    pub cube: DyadicCube,
}

/// The α-expansion of σ with cube-independent products cached per cell.
struct Expansion {
    terms: Vec<(Tuple, Tuple, f64)>,
    /// `B_α(c)` per term and cell.
    fwd: Vec<Vec<Matrix>>,
    /// `B_{(σ−α)^t}(c)` per term and cell.
    rev: Vec<Vec<Matrix>>,
    n: usize,
}

impl Expansion {
    fn new(b: &SymbolVector, sigma: &Tuple) -> Result<Self> {
        let cells = b.grid().cells();
        let mut terms = Vec::new();
        let (mut fwd, mut rev) = (Vec::new(), Vec::new());
        for alpha in sigma.subtuples() {
            let rest = sigma.minus(&alpha)?;
            fwd.push((0..cells).map(|c| b.product(alpha.fwd(), c)).collect());
            rev.push((0..cells).map(|c| b.product(rest.rev(), c)).collect());
            let s = sign::<f64>(sigma.len() - alpha.len());
            terms.push((alpha, rest, s));
        }
        Ok(Expansion { terms, fwd, rev, n: b.n() })
    }

    /// `Σ_α ± B_α(x)(m_QB)_{(σ−α)^t}`, or `Σ_α ± (m_QB)_α B_{(σ−α)^t}(x)` when `star`.
    fn centered(&self, b: &SymbolVector, q: &DyadicCube, cells: &[usize], star: bool) -> Result<Vec<Matrix>> {
        let means = b.means(q);
        let mean_products = self
            .terms
            .iter()
            .map(|(alpha, rest, _)| {
                let view = if star { alpha.fwd() } else { rest.rev() };
                symbol_product(&means, self.n, view)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(cells
            .iter()
            .map(|&x| {
                let mut acc = Matrix::zeros(self.n, self.n);
                for (t, (_, _, s)) in self.terms.iter().enumerate() {
                    let prod = if star { &mean_products[t] * &self.rev[t][x] } else { &self.fwd[t][x] * &mean_products[t] };
                    acc += &prod.scale(*s);
                }
                acc
            })
            .collect())
    }

    /// `Σ_α ± B_α(x)B_{(σ−α)^t}(y)`.
    fn pair(&self, x: usize, y: usize) -> Matrix {
        let mut acc = Matrix::zeros(self.n, self.n);
        for (t, (_, _, s)) in self.terms.iter().enumerate() {
            acc += &(&self.fwd[t][x] * &self.rev[t][y]).scale(*s);
        }
        acc
    }
}

fn check_weights(u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    u.grid().ensure_same(&v.grid())?;
    if u.n() != v.n() {
        return Err(Error::Dimension(format!("weights of sizes {} and {}", u.n(), v.n())));
    }
    Ok(())
}

fn check_symbols(b: &SymbolVector, sigma: &Tuple, u: &MatrixWeight) -> Result<()> {
    b.grid().ensure_same(&u.grid())?;
    if b.n() != u.n() {
        return Err(Error::Dimension(format!("symbols are {0}x{0}, weights {1}x{1}", b.n(), u.n())));
    }
    if sigma.ambient() != b.m() {
        return Err(Error::Dimension(format!("σ lives in C({}) but there are {} symbols", sigma.ambient(), b.m())));
    }
    Ok(())
}

/// `‖L(x)·O(x,y)·R(y)‖` per cell pair (x-major), with `O(x,y) = Σ_α ± B_α(x)B_{(σ−α)^t}(y)`;
/// `swap` uses `O(y,x)` instead.
pub fn tilde_pair_table(b: &SymbolVector, sigma: &Tuple, left: &MatrixField, right: &MatrixField, swap: bool) -> Result<Vec<f64>> {
    let ex = Expansion::new(b, sigma)?;
    let cells = b.grid().cells();
    let mut out = Vec::with_capacity(cells * cells);
    for x in 0..cells {
        for y in 0..cells {
            let o = if swap { ex.pair(y, x) } else { ex.pair(x, y) };
            out.push((&(left.at(x) * &o) * right.at(y)).op_norm());
        }
    }
    Ok(out)
}

fn matrix_kind(kind: BmoKind, b: &SymbolVector, sigma: &Tuple, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<CubeValue> {
    check_symbols(b, sigma, u)?;
    if kind.has_root() && sigma.is_empty() {
        return Err(Error::Domain(format!("kind {kind} needs a nonempty σ")));
    }
    let grid = u.grid();
    let pp = conjugate_exponent(p);
    let k = sigma.len().max(1) as f64;
    if matches!(kind, BmoKind::Tilde | BmoKind::TildeStar) {
        let table = tilde_pair_table(b, sigma, &v.power_field(1.0 / p), &u.power_field(-1.0 / p), kind == BmoKind::TildeStar)?;
        let cells = grid.cells();
        return Ok(sup_over_cubes(&grid, |_, c| nested_average(&table, cells, c, pp, p)));
    }
    let ex = Expansion::new(b, sigma)?;
    let star = matches!(kind, BmoKind::AvStar | BmoKind::RedStar | BmoKind::Sub1Star | BmoKind::Sub2Star);
    let v_root = v.power_field(1.0 / p);
    let u_root = u.power_field(1.0 / p);
    let u_inv_root = u.power_field(-1.0 / p);
    let (ru, rv) = (Reducer::new(u, p), Reducer::new(v, p));
    let mut err = None;
    let best = sup_over_cubes(&grid, |q, cells| {
        let osc = match ex.centered(b, q, cells, star) {
            Ok(o) => o,
            Err(e) => {
                err = Some(e);
                return f64::NAN;
            }
        };
        let kk = cells.len() as f64;
        match kind {
            BmoKind::Av | BmoKind::AvStar | BmoKind::Red | BmoKind::RedStar => {
                let (left, right_inv) = if matches!(kind, BmoKind::Av | BmoKind::AvStar) {
                    let inv = u_root.mean(q).inverse();
                    match inv {
                        Some(i) => (v_root.mean(q), i),
                        None => {
                            err = Some(Error::Singular(format!("m_Q(U^(1/p)) on {q}")));
                            return f64::NAN;
                        }
                    }
                } else {
                    (rv.primal(q).matrix().clone(), ru.primal(q).inverse().matrix().clone())
                };
                osc.iter()
                    .map(|o| {
                        let m = if star { &(&right_inv * &o.adjoint()) * &left } else { &(&left * o) * &right_inv };
                        m.op_norm().powf(1.0 / k)
                    })
                    .sum::<f64>()
                    / kk
            }
            BmoKind::Sub1 | BmoKind::Sub1Star => {
                let r_inv = ru.primal(q).inverse();
                let s = cells.iter().zip(&osc).map(|(&y, o)| (&(v_root.at(y) * o) * r_inv.matrix()).op_norm().powf(p)).sum::<f64>();
                (s / kk).powf(1.0 / p)
            }
            BmoKind::Sub2 | BmoKind::Sub2Star => {
                let r_inv = rv.dual(q).inverse();
                let s = cells
                    .iter()
                    .zip(&osc)
                    .map(|(&y, o)| (&(u_inv_root.at(y) * &o.adjoint()) * r_inv.matrix()).op_norm().powf(pp))
                    .sum::<f64>();
                (s / kk).powf(1.0 / pp)
            }
            _ => unreachable!("scalar and tilde kinds handled elsewhere"),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// Cellwise `w(x)` for a weight of the form `w(x)·I`.
pub fn scalar_part(w: &MatrixWeight) -> Result<Vec<f64>> {
    let n = w.n();
    (0..w.grid().cells())
        .map(|c| {
            let m = w.field().at(c);
            let s = m[(0, 0)];
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { s } else { 0.0 };
                    if (m[(i, j)] - want).abs() > 1e-12 * s.abs() {
                        return Err(Error::Unsupported(format!("cell {c} is not a multiple of the identity")));
                    }
                }
            }
            Ok(s)
        })
        .collect()
}

fn scalar_kind(kind: BmoKind, b: &ScalarField, j: u32, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<CubeValue> {
    b.grid().ensure_same(&u.grid())?;
    if j == 0 {
        return Err(Error::Domain("j must be at least 1".into()));
    }
    let grid = u.grid();
    let cells_total = grid.cells();
    let jf = j as f64;
    let pp = conjugate_exponent(p);
    let (ru, rv) = (Reducer::new(u, p), Reducer::new(v, p));
    let osc = |q: &DyadicCube, cells: &[usize]| -> Vec<f64> {
        let m = b.mean(q);
        cells.iter().map(|&c| (b.get(c) - m).abs()).collect()
    };
    Ok(match kind {
        BmoKind::ScalarJ => sup_over_cubes(&grid, |q, cells| {
            let w = (rv.primal(q).matrix() * ru.primal(q).inverse().matrix()).op_norm().powf(1.0 / jf);
            w * osc(q, cells).iter().sum::<f64>() / cells.len() as f64
        }),
        BmoKind::ScalarJ1 => {
            let v_root = v.power_field(1.0 / p);
            let mut cv = sup_over_cubes(&grid, |q, cells| {
                let r_inv = ru.primal(q).inverse();
                let o = osc(q, cells);
                cells
                    .iter()
                    .zip(&o)
                    .map(|(&x, d)| (v_root.at(x) * r_inv.matrix()).op_norm().powf(p) * d.powf(p * jf))
                    .sum::<f64>()
                    / cells.len() as f64
            });
            cv.value = cv.value.powf(1.0 / p);
            cv
        }
        BmoKind::ScalarJ2 => {
            let u_inv_root = u.power_field(-1.0 / p);
            let mut cv = sup_over_cubes(&grid, |q, cells| {
                let r_inv = rv.dual(q).inverse();
                let o = osc(q, cells);
                cells
                    .iter()
                    .zip(&o)
                    .map(|(&x, d)| (u_inv_root.at(x) * r_inv.matrix()).op_norm().powf(pp) * d.powf(pp * jf))
                    .sum::<f64>()
                    / cells.len() as f64
            });
            cv.value = cv.value.powf(1.0 / pp);
            cv
        }
        BmoKind::ScalarTildeJ | BmoKind::ScalarTildeJ2 => {
            let table = crate::weights::pair_norm_table(&v.power_field(1.0 / p), &u.power_field(-1.0 / p));
            if kind == BmoKind::ScalarTildeJ {
                let t: Vec<f64> = (0..cells_total * cells_total)
                    .map(|i| table[i] * (b.get(i / cells_total) - b.get(i % cells_total)).abs().powf(jf))
                    .collect();
                sup_over_cubes(&grid, |_, c| nested_average(&t, cells_total, c, pp, p))
            } else {
                // inner average over x, outer over y: transpose first
                let t: Vec<f64> = (0..cells_total * cells_total)
                    .map(|i| {
                        let (y, x) = (i / cells_total, i % cells_total);
                        table[x * cells_total + y] * (b.get(x) - b.get(y)).abs().powf(jf)
                    })
                    .collect();
                sup_over_cubes(&grid, |_, c| nested_average(&t, cells_total, c, p, pp))
            }
        }
        BmoKind::Bloom => {
            let (us, vs) = (scalar_part(u)?, scalar_part(v)?);
            let nu: Vec<f64> = us.iter().zip(&vs).map(|(a, b)| (a.powf(1.0 / p) * b.powf(-1.0 / p)).powf(1.0 / jf)).collect();
            sup_over_cubes(&grid, |q, cells| {
                let mass: f64 = cells.iter().map(|&c| nu[c]).sum();
                osc(q, cells).iter().sum::<f64>() / mass
            })
        }
        BmoKind::CarlesonHaar => {
            let coeffs = haar_coefficients(b)?;
            let mut acc: BTreeMap<DyadicCube, f64> = BTreeMap::new();
            for k in (0..=grid.level).rev() {
                for q in grid.cubes_at(k) {
                    let own = match coeffs.get(&q) {
                        Some(c) => (rv.primal(&q).matrix() * ru.primal(&q).inverse().matrix()).op_norm().powf(2.0 / jf) * c * c,
                        None => 0.0,
                    };
                    let below: f64 = if k < grid.level { q.children().iter().map(|ch| acc[ch]).sum() } else { 0.0 };
                    acc.insert(q, own + below);
                }
            }
            sup_over_cubes(&grid, |q, _| acc[q] / q.measure())
        }
        _ => unreachable!("matrix kinds handled elsewhere"),
    })
}

pub fn bmo_norm(req: &BmoRequest<'_>) -> Result<BmoValue> {
    check_weights(req.u, req.v, req.p)?;
    let cv = match (req.symbols, req.kind.is_scalar()) {
        (BmoSymbols::Matrix { b, sigma }, false) => matrix_kind(req.kind, b, sigma, req.u, req.v, req.p)?,
        (BmoSymbols::Scalar { b, j }, true) => scalar_kind(req.kind, b, j, req.u, req.v, req.p)?,
        (BmoSymbols::Matrix { .. }, true) => {
            return Err(Error::Invalid { path: "/symbols".into(), msg: format!("kind {} takes a scalar symbol", req.kind) })
        }
        (BmoSymbols::Scalar { .. }, false) => {
            return Err(Error::Invalid { path: "/symbols".into(), msg: format!("kind {} takes a symbol vector", req.kind) })
        }
    };
    if !cv.value.is_finite() {
        return Err(Error::Degenerate(format!("{} is not finite on {}", req.kind, cv.cube)));
    }
    Ok(BmoValue { kind: req.kind, value: cv.value, cube: cv.cube })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaConstant {
    pub value: f64,
    pub sigma: String,
    /// Which of U, V sits on the left and right of the oscillation.
    pub left: char,
    pub right: char,
}

/// `max_{σ≠∅, Ψ,Φ∈{U,V}} ‖B⃗‖_{tilde,Ψ,Φ,σ}^{1/|σ|}`.
pub fn beta_constant(b: &SymbolVector, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> Result<BetaConstant> {
    check_weights(u, v, p)?;
    if b.m() == 0 {
        return Err(Error::Domain("β needs at least one symbol".into()));
    }
    let mut best: Option<BetaConstant> = None;
    for sigma in Tuple::full(b.m()).subtuples().into_iter().filter(|s| !s.is_empty()) {
        for (lname, left) in [('U', u), ('V', v)] {
            for (rname, right) in [('U', u), ('V', v)] {
                let val = matrix_kind(BmoKind::Tilde, b, &sigma, right, left, p)?.value.powf(1.0 / sigma.len() as f64);
                if best.as_ref().map_or(true, |bc| val > bc.value) {
                    best = Some(BetaConstant { value: val, sigma: sigma.to_string(), left: lname, right: rname });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Domain("no nonempty σ".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weight(rng: &mut ChaCha8Rng, g: Grid, n: usize) -> MatrixWeight {
        let cells: Vec<Matrix> = (0..g.cells())
            .map(|_| {
                let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                &(&a * &a.adjoint()) + &Matrix::identity(n).scale_re(0.3)
            })
            .collect();
        MatrixWeight::new(MatrixField::new(g, cells).unwrap()).unwrap()
    }

    fn random_symbols(rng: &mut ChaCha8Rng, g: Grid, n: usize, m: usize) -> SymbolVector {
        SymbolVector::new(
            (0..m)
                .map(|_| MatrixField::new(g, (0..g.cells()).map(|_| Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn norm(kind: BmoKind, b: &SymbolVector, sigma: &Tuple, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> f64 {
        bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Matrix { b, sigma }, u, v, p }).unwrap().value
    }

    fn snorm(kind: BmoKind, b: &ScalarField, j: u32, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> f64 {
        bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Scalar { b, j }, u, v, p }).unwrap().value
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BmoKind::ALL {
            assert_eq!(k.name().parse::<BmoKind>().unwrap(), k);
        }
        assert!("nope".parse::<BmoKind>().is_err());
    }

    #[test]
    fn constant_symbols_vanish() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (u, v) = (random_weight(&mut rng, g, 2), random_weight(&mut rng, g, 2));
        let b = SymbolVector::new(vec![
            MatrixField::constant(g, &Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]])),
            MatrixField::constant(g, &Matrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 2.0]])),
        ])
        .unwrap();
        for sigma in Tuple::full(2).subtuples().into_iter().filter(|s| !s.is_empty()) {
            for k in BmoKind::ALL.into_iter().filter(|k| !k.is_scalar()) {
                let val = norm(k, &b, &sigma, &u, &v, 2.5);
                assert!(val < 1e-10, "{k} on {sigma}: {val}");
            }
        }
        assert!(beta_constant(&b, &u, &v, 2.0).unwrap().value < 1e-10);
    }

    #[test]
    fn red_equals_av_for_identity_weights() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_symbols(&mut rng, g, 2, 1);
        let id = MatrixWeight::identity(g, 2);
        let s = Tuple::full(1);
        assert_eq!(norm(BmoKind::Red, &b, &s, &id, &id, 2.0), norm(BmoKind::Av, &b, &s, &id, &id, 2.0));
        // both equal sup ⨍‖B − m_QB‖
        let direct = sup_over_cubes(&g, |q, cells| {
            let m = b.symbols()[0].mean(q);
            cells.iter().map(|&c| (b.symbols()[0].at(c) - &m).op_norm()).sum::<f64>() / cells.len() as f64
        });
        assert!((norm(BmoKind::Red, &b, &s, &id, &id, 2.0) - direct.value).abs() < 1e-14);
    }

    #[test]
    fn empty_sigma_rejected_for_root_kinds() {
        let g = Grid::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_symbols(&mut rng, g, 2, 2);
        let id = MatrixWeight::identity(g, 2);
        let e = Tuple::empty(2);
        for k in [BmoKind::Av, BmoKind::AvStar, BmoKind::Red, BmoKind::RedStar] {
            let r = bmo_norm(&BmoRequest { kind: k, symbols: BmoSymbols::Matrix { b: &b, sigma: &e }, u: &id, v: &id, p: 2.0 });
            assert!(matches!(r, Err(Error::Domain(_))));
        }
        assert!(bmo_norm(&BmoRequest { kind: BmoKind::Tilde, symbols: BmoSymbols::Matrix { b: &b, sigma: &e }, u: &id, v: &id, p: 2.0 }).is_ok());
    }

    #[test]
    fn sub_kinds_are_exchanged_by_duality() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (u, v) = (random_weight(&mut rng, g, 2), random_weight(&mut rng, g, 2));
        let b = random_symbols(&mut rng, g, 2, 2);
        let bs = b.adjoint();
        let p = 3.0;
        let pp = conjugate_exponent(p);
        let (ud, vd) = (u.dual_weight(p), v.dual_weight(p));
        for sigma in Tuple::full(2).subtuples() {
            let a = norm(BmoKind::Sub1, &b, &sigma, &u, &v, p);
            let c = norm(BmoKind::Sub2Star, &bs, &sigma, &vd, &ud, pp);
            assert!((a - c).abs() <= 1e-10 * a.max(1.0), "{sigma}: {a} vs {c}");
            let a = norm(BmoKind::Sub2, &b, &sigma, &u, &v, p);
            let c = norm(BmoKind::Sub1Star, &bs, &sigma, &vd, &ud, pp);
            assert!((a - c).abs() <= 1e-10 * a.max(1.0), "{sigma}: {a} vs {c}");
        }
    }

    #[test]
    fn beta_matches_exhaustive_loop() {
        let g = Grid::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u, v) = (random_weight(&mut rng, g, 2), random_weight(&mut rng, g, 2));
        let b = random_symbols(&mut rng, g, 2, 2);
        let mut want: f64 = 0.0;
        for sigma in Tuple::full(2).subtuples().into_iter().skip(1) {
            for l in [&u, &v] {
                for r in [&u, &v] {
                    want = want.max(norm(BmoKind::Tilde, &b, &sigma, r, l, 2.0).powf(1.0 / sigma.len() as f64));
                }
            }
        }
        assert_eq!(beta_constant(&b, &u, &v, 2.0).unwrap().value, want);
        let b1 = random_symbols(&mut rng, g, 2, 1);
        let want = norm(BmoKind::Tilde, &b1, &Tuple::full(1), &u, &u, 2.0);
        assert_eq!(beta_constant(&b1, &u, &u, 2.0).unwrap().value, want);
    }

    #[test]
    fn haar_carleson_single_function() {
        let g = Grid::new(1, 3).unwrap();
        // b = h_{[0,1/2)}, coefficient 1 on that cube only
        let h = 2f64.sqrt();
        let b = ScalarField::new(g, vec![h, h, -h, -h, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (u, v) = (random_weight(&mut rng, g, 2), random_weight(&mut rng, g, 2));
        let q = DyadicCube::new(1, &[0]).unwrap();
        let (ru, rv) = (Reducer::new(&u, 2.0), Reducer::new(&v, 2.0));
        let w = (rv.primal(&q).matrix() * ru.primal(&q).inverse().matrix()).op_norm();
        let got = snorm(BmoKind::CarlesonHaar, &b, 1, &u, &v, 2.0);
        assert!((got - w * w / 0.5).abs() < 1e-12 * got);
    }

    #[test]
    fn bloom_and_scalar_j_for_identity_weights() {
        let g = Grid::new(1, 3).unwrap();
        let b = ScalarField::new(g, vec![0.0, 1.0, 3.0, 2.0, -1.0, 0.5, 0.0, 4.0]).unwrap();
        let id = MatrixWeight::identity(g, 2);
        let bloom = snorm(BmoKind::Bloom, &b, 1, &id, &id, 2.0);
        let sj = snorm(BmoKind::ScalarJ, &b, 1, &id, &id, 2.0);
        assert!((bloom - sj).abs() < 1e-14);
    }
}
