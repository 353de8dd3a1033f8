//! Matrix weights: A_p characteristics, scalar-core A_∞, reverse Hölder ratios,
//! conjugation and the bump exponents.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, Grid, MatrixField, ScalarField};
use crate::linalg::{vec_norm, Matrix};
use crate::pdmat::{conjugate_exponent, PDMatrix, Reducer};

/// A field of positive-definite matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixWeight {
    field: MatrixField,
    cells: Vec<PDMatrix>,
}

impl MatrixWeight {
    pub fn new(field: MatrixField) -> Result<Self> {
        let cells = field
            .values()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                PDMatrix::new(m.clone()).map_err(|e| Error::Invalid { path: format!("/cells/{i}"), msg: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let field = MatrixField::new(field.grid(), cells.iter().map(|c| c.matrix().clone()).collect())?;
        Ok(MatrixWeight { field, cells })
    }

    pub fn identity(grid: Grid, n: usize) -> Self {
        MatrixWeight { field: MatrixField::constant(grid, &Matrix::identity(n)), cells: vec![PDMatrix::identity(n); grid.cells()] }
    }

    pub fn constant(grid: Grid, a: &Matrix) -> Result<Self> {
        Self::new(MatrixField::constant(grid, a))
    }

    /// `u(x)·I_n` for a positive scalar field.
    pub fn scalar(u: &ScalarField, n: usize) -> Result<Self> {
        Self::new(MatrixField::from_fn(u.grid(), n, |c| Matrix::identity(n).scale_re(u.get(c))))
    }

    pub fn grid(&self) -> Grid {
        self.field.grid()
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn field(&self) -> &MatrixField {
        &self.field
    }

    pub fn cell(&self, c: usize) -> &PDMatrix {
        &self.cells[c]
    }

    /// `W^α` per cell.
    pub fn power_field(&self, alpha: f64) -> MatrixField {
        MatrixField::from_fn(self.grid(), self.n(), |c| self.cells[c].power(alpha).matrix().clone())
    }

    /// `W^α` as a weight, sharing eigenvectors with `W`.
    pub fn power_weight(&self, alpha: f64) -> MatrixWeight {
        let cells: Vec<PDMatrix> = self.cells.iter().map(|c| c.power(alpha)).collect();
        let field = MatrixField::from_fn(self.grid(), self.n(), |c| cells[c].matrix().clone());
        MatrixWeight { field, cells }
    }

    /// `W^{−p'/p}`.
    pub fn dual_weight(&self, p: f64) -> MatrixWeight {
        self.power_weight(-conjugate_exponent(p) / p)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::new(crate::grid::GridFunction::from_json_str(text)?.into_matrix()?)
    }
}

/// A supremum over dyadic cubes with the cube that attains it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CubeValue {
    pub value: f64,
    pub cube: DyadicCube,
}

/// `sup_Q f(Q, cells(Q))` over every dyadic cube of the grid; first maximizer wins.
pub fn sup_over_cubes(grid: &Grid, mut f: impl FnMut(&DyadicCube, &[usize]) -> f64) -> CubeValue {
    let mut best = CubeValue { value: f64::NEG_INFINITY, cube: grid.unit_cube() };
    for q in grid.all_cubes() {
        let v = f(&q, &q.cells(grid));
        if v > best.value || v.is_nan() {
            best = CubeValue { value: v, cube: q };
            if v.is_nan() {
                break;
            }
        }
    }
    best
}

/// `‖L(x)R(y)‖` for every cell pair, x-major.
pub fn pair_norm_table(left: &MatrixField, right: &MatrixField) -> Vec<f64> {
    let cells = left.grid().cells();
    let mut out = Vec::with_capacity(cells * cells);
    for x in 0..cells {
        for y in 0..cells {
            out.push((left.at(x) * right.at(y)).op_norm());
        }
    }
    out
}

/// `⨍_x (⨍_y t(x,y)^a)^{b/a}` over the cells of one cube.
pub fn nested_average(table: &[f64], cells_total: usize, cells: &[usize], a: f64, b: f64) -> f64 {
    let k = cells.len() as f64;
    cells
        .iter()
        .map(|&x| {
            let inner = cells.iter().map(|&y| table[x * cells_total + y].powf(a)).sum::<f64>() / k;
            inner.powf(b / a)
        })
        .sum::<f64>()
        / k
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("p = {p} must exceed 1")))
    }
}

/// `[U,V]_{A_p} = sup_Q ⨍_x(⨍_y ‖U^{1/p}(x)V^{−1/p}(y)‖^{p'})^{p/p'}`; `V = U` when absent.
pub fn ap_characteristic(u: &MatrixWeight, v: Option<&MatrixWeight>, p: f64) -> Result<CubeValue> {
    check_p(p)?;
    let v = v.unwrap_or(u);
    u.grid().ensure_same(&v.grid())?;
    if u.n() != v.n() {
        return Err(Error::Dimension(format!("{} vs {}", u.n(), v.n())));
    }
    let pp = conjugate_exponent(p);
    let table = pair_norm_table(&u.power_field(1.0 / p), &v.power_field(-1.0 / p));
    let cells = u.grid().cells();
    Ok(sup_over_cubes(&u.grid(), |_, c| nested_average(&table, cells, c, pp, p)))
}

/// Directions sampled by `sc_ainfty`.
#[derive(Clone, Debug)]
pub enum DirectionPlan {
    /// Axes, every cell's eigenvectors, and a fixed sphere net.
    Standard,
    Given(Vec<Vec<f64>>),
}

/// Deterministic near-uniform unit vectors: 64 for n ≤ 3, 256 above.
pub fn sphere_net(n: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0]],
        2 => (0..64).map(|k| {
            let t = PI * k as f64 / 64.0;
            vec![t.cos(), t.sin()]
        })
        .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..64)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / 64.0;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            // Halton points pushed through Box–Muller, then normalized.
            const PRIMES: [u64; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
            let halton = |mut i: u64, b: u64| {
                let (mut f, mut r) = (1.0, 0.0);
                while i > 0 {
                    f /= b as f64;
                    r += f * (i % b) as f64;
                    i /= b;
                }
                r
            };
            (1..=256u64)
                .map(|i| {
                    let mut v = Vec::with_capacity(n + 1);
                    let mut k = 0;
                    while v.len() < n {
                        let u1 = halton(i, PRIMES[k % 20]).max(1e-12);
                        let u2 = halton(i, PRIMES[(k + 1) % 20]);
                        let rad = (-2.0 * u1.ln()).sqrt();
                        v.push(rad * (2.0 * PI * u2).cos());
                        v.push(rad * (2.0 * PI * u2).sin());
                        k += 2;
                    }
                    v.truncate(n);
                    let nv = vec_norm(&v);
                    v.iter().map(|x| x / nv).collect()
                })
                .collect()
        }
    }
}

/// Dyadic Fujii–Wilson constant `sup_Q w(Q)^{-1} ∫_Q M_Q w` of a positive
/// scalar weight, with `M_Q` the dyadic maximal function localized to Q.
pub fn scalar_ainfty(grid: &Grid, w: &[f64]) -> CubeValue {
    let cells = grid.cells();
    let mut running = w.to_vec();
    let mut best = CubeValue { value: f64::NEG_INFINITY, cube: grid.unit_cube() };
    for k in (0..=grid.level).rev() {
        for q in grid.cubes_at(k) {
            let cs = q.cells(grid);
            let mass: f64 = cs.iter().map(|&c| w[c]).sum();
            let mean = mass / cs.len() as f64;
            let mut integral = 0.0;
            for &c in &cs {
                if running[c] < mean {
                    running[c] = mean;
                }
                integral += running[c];
            }
            let v = if mass > 0.0 { integral / mass } else { 1.0 };
            if v > best.value {
                best = CubeValue { value: v, cube: q };
            }
        }
    }
    debug_assert_eq!(running.len(), cells);
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScAinfty {
    pub value: f64,
    pub direction: Vec<f64>,
    pub cube: DyadicCube,
    pub directions_tried: usize,
}

/// Lower bound for `[W]_{A^{sc}_{p,∞}}`: the largest Fujii–Wilson constant of
/// `x ↦ |W^{1/p}(x)e|^p` over the sampled unit directions e.
pub fn sc_ainfty(w: &MatrixWeight, p: f64, plan: &DirectionPlan) -> Result<ScAinfty> {
    check_p(p)?;
    let n = w.n();
    let dirs: Vec<Vec<f64>> = match plan {
        DirectionPlan::Given(d) => d.clone(),
        DirectionPlan::Standard => {
            let mut d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            for c in 0..w.grid().cells() {
                let v = w.cell(c).eigenvectors();
                for j in 0..n {
                    d.push((0..n).map(|i| v[(i, j)]).collect());
                }
            }
            d.extend(sphere_net(n));
            d
        }
    };
    if dirs.is_empty() {
        return Err(Error::Domain("empty direction set".into()));
    }
    let root = w.power_field(1.0 / p);
    let grid = w.grid();
    let mut best: Option<ScAinfty> = None;
    for e in &dirs {
        if e.len() != n {
            return Err(Error::Dimension(format!("direction of length {}, expected {n}", e.len())));
        }
        let ne = vec_norm(e);
        if ne == 0.0 {
            continue;
        }
        let unit: Vec<f64> = e.iter().map(|x| x / ne).collect();
        let sw: Vec<f64> = (0..grid.cells()).map(|c| vec_norm(&root.at(c).matvec(&unit)).powf(p)).collect();
        let cv = scalar_ainfty(&grid, &sw);
        if best.as_ref().map_or(true, |b| cv.value > b.value) {
            best = Some(ScAinfty { value: cv.value, direction: unit, cube: cv.cube, directions_tried: dirs.len() });
        }
    }
    best.ok_or_else(|| Error::Domain("every direction was zero".into()))
}

/// `(⨍_Q‖W^{1/p}A‖^{rp})^{1/rp} / (⨍_Q‖W^{1/p}A‖^p)^{1/p}`.
pub fn rhi_ratio(w: &MatrixWeight, p: f64, a: &Matrix, q: &DyadicCube, r: f64) -> Result<f64> {
    check_p(p)?;
    if r < 1.0 {
        return Err(Error::Domain(format!("r = {r} < 1")));
    }
    w.grid().check_cube(q)?;
    let cells = q.cells(&w.grid());
    let norms: Vec<f64> = cells.iter().map(|&c| (w.cell(c).power(1.0 / p).matrix() * a).op_norm()).collect();
    let k = cells.len() as f64;
    let base = (norms.iter().map(|x| x.powf(p)).sum::<f64>() / k).powf(1.0 / p);
    if base == 0.0 {
        return Err(Error::Degenerate("‖W^{1/p}A‖ vanishes on Q".into()));
    }
    if r == 1.0 {
        return Ok(1.0);
    }
    let top = (norms.iter().map(|x| x.powf(r * p)).sum::<f64>() / k).powf(1.0 / (r * p));
    Ok(top / base)
}

/// `1 + 1/(2^{d+11}·c)`, the reverse Hölder exponent for a weight with
/// scalar-core A_∞ constant c.
pub fn reverse_holder_exponent(d: usize, c: f64) -> f64 {
    1.0 + 1.0 / (2f64.powi(d as i32 + 11) * c)
}

#[derive(Clone, Debug)]
pub enum Conjugation<'a> {
    /// `(A* W^{2/p} A)^{p/2}`.
    Global(Matrix),
    /// `(R^{-1} W^{2/p} R^{-1})^{p/2}` with `R = m_I(U^{1/p})`.
    Localized { u: &'a MatrixWeight, cube: DyadicCube },
}

pub fn conjugate_weight(w: &MatrixWeight, p: f64, mode: &Conjugation<'_>) -> Result<MatrixWeight> {
    check_p(p)?;
    let a = match mode {
        Conjugation::Global(a) => {
            if a.rows() != w.n() || a.cols() != w.n() {
                return Err(Error::Dimension(format!("A is {}x{}, weight is {}x{}", a.rows(), a.cols(), w.n(), w.n())));
            }
            if a.is_exact_identity() {
                return Ok(w.clone());
            }
            if a.inverse().is_none() {
                return Err(Error::Singular("conjugating matrix".into()));
            }
            a.clone()
        }
        Conjugation::Localized { u, cube } => {
            u.grid().ensure_same(&w.grid())?;
            u.grid().check_cube(cube)?;
            Reducer::new(u, p).primal(cube).inverse().matrix().clone()
        }
    };
    let adj = a.adjoint();
    let cells = (0..w.grid().cells())
        .map(|c| {
            let inner = &(&adj * w.cell(c).power(2.0 / p).matrix()) * &a;
            Ok(PDMatrix::new(inner)?.power(p / 2.0).matrix().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    MatrixWeight::new(MatrixField::new(w.grid(), cells)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BumpExponents {
    pub r: f64,
    pub gamma: f64,
    pub s: f64,
    /// `s/(s−1)`.
    pub s_conjugate: f64,
    /// `((p'+1)/2)'·(1 + 2^{d+11} t₂ c_primal)`.
    pub s_conjugate_bound: f64,
    /// `γ·s − (1 + 1/(2^{d+11} t₂ c_primal))`.
    pub gamma_s_residual: f64,
    pub t1: f64,
    pub t2: f64,
    pub d: usize,
}

/// Exponents `r`, `γ`, `s` built from the dual and primal scalar-core A_∞ constants.
pub fn bump_exponents(p: f64, t1: f64, t2: f64, d: usize, c_dual: f64, c_primal: f64) -> Result<BumpExponents> {
    check_p(p)?;
    if t1 < 1.0 || t2 < 1.0 {
        return Err(Error::Domain(format!("t1 = {t1}, t2 = {t2} must be at least 1")));
    }
    if c_dual < 1.0 || c_primal < 1.0 {
        return Err(Error::Domain(format!("A_∞ constants {c_dual}, {c_primal} must be at least 1")));
    }
    let pp = conjugate_exponent(p);
    let a = (pp + 1.0) / 2.0;
    let scale = 2f64.powi(d as i32 + 11);
    let k = scale * t2 * c_primal;
    let r = 1.0 + 1.0 / (scale * t1 * c_dual);
    let gamma = 1.0 + 1.0 / (a * k);
    let s = a * (1.0 + k) / (1.0 + a * k);
    let s_conjugate = s / (s - 1.0);
    let s_conjugate_bound = conjugate_exponent(a) * (1.0 + k);
    let gamma_s_residual = gamma * s - (1.0 + 1.0 / k);
    Ok(BumpExponents { r, gamma, s, s_conjugate, s_conjugate_bound, gamma_s_residual, t1, t2, d })
}
