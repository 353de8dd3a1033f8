//! Dyadic cubes on the torus `[0,1)^d`, piecewise-constant fields, sparse
//! families and the one-dimensional Haar basis.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};

/// Largest finest-level cell count accepted anywhere (2^16).
pub const MAX_CELLS_LOG2: u32 = 16;

/// Finest resolution: `2^(d·level)` cells of side `2^-level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub level: u32,
}

impl Grid {
    pub fn new(d: usize, level: u32) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Size(format!("d = {d}, only 1 and 2 are supported")));
        }
        if d as u32 * level > MAX_CELLS_LOG2 {
            return Err(Error::Size(format!("2^{} cells exceeds the 2^{MAX_CELLS_LOG2} cap", d as u32 * level)));
        }
        Ok(Grid { d, level })
    }

    pub fn cells(&self) -> usize {
        1usize << (self.d as u32 * self.level)
    }

    pub fn side(&self) -> usize {
        1usize << self.level
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    /// Lexicographic cell index → integer coordinates.
    pub fn coords(&self, cell: usize) -> [usize; 2] {
        let s = self.side();
        if self.d == 1 {
            [cell, 0]
        } else {
            [cell / s, cell % s]
        }
    }

    pub fn cell_index(&self, coords: [usize; 2]) -> usize {
        if self.d == 1 {
            coords[0]
        } else {
            coords[0] * self.side() + coords[1]
        }
    }

    /// Every dyadic cube resolvable on this grid, coarse to fine, each level
    /// in lexicographic index order.
    pub fn all_cubes(&self) -> Vec<DyadicCube> {
        (0..=self.level).flat_map(|k| self.cubes_at(k)).collect()
    }

    pub fn cubes_at(&self, level: u32) -> Vec<DyadicCube> {
        let s = 1usize << level;
        let count = if self.d == 1 { s } else { s * s };
        (0..count)
            .map(|i| {
                let index = if self.d == 1 { [i, 0] } else { [i / s, i % s] };
                DyadicCube { d: self.d, level, index }
            })
            .collect()
    }

    pub fn unit_cube(&self) -> DyadicCube {
        DyadicCube::unit(self.d)
    }

    pub fn check_cube(&self, q: &DyadicCube) -> Result<()> {
        if q.d != self.d {
            return Err(Error::Grid(format!("cube of dimension {} on a d = {} grid", q.d, self.d)));
        }
        if q.level > self.level {
            return Err(Error::Grid(format!("cube {q} is finer than grid level {}", self.level)));
        }
        Ok(())
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Grid(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// `Π_i [index_i·2^-level, (index_i+1)·2^-level)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "CubeJson", into = "CubeJson")]
pub struct DyadicCube {
    d: usize,
    level: u32,
    index: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct CubeJson {
    level: u32,
    index: Vec<usize>,
}

impl TryFrom<CubeJson> for DyadicCube {
    type Error = Error;
    fn try_from(c: CubeJson) -> Result<Self> {
        DyadicCube::new(c.level, &c.index)
    }
}

impl From<DyadicCube> for CubeJson {
    fn from(q: DyadicCube) -> Self {
        CubeJson { level: q.level, index: q.index[..q.d].to_vec() }
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let den = 1u64 << self.level;
        let parts: Vec<String> =
            self.index[..self.d].iter().map(|&i| format!("[{}/{den},{}/{den})", i, i + 1)).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl DyadicCube {
    /// `index.len()` fixes the dimension.
    pub fn new(level: u32, index: &[usize]) -> Result<Self> {
        let d = index.len();
        if d != 1 && d != 2 {
            return Err(Error::Size(format!("cube index of length {d}")));
        }
        if level > MAX_CELLS_LOG2 {
            return Err(Error::Size(format!("cube level {level}")));
        }
        let s = 1usize << level;
        if index.iter().any(|&i| i >= s) {
            return Err(Error::Size(format!("cube index {index:?} outside [0, {s})")));
        }
        let mut idx = [0; 2];
        idx[..d].copy_from_slice(index);
        Ok(DyadicCube { d, level, index: idx })
    }

    pub fn unit(d: usize) -> Self {
        DyadicCube { d, level: 0, index: [0, 0] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[usize] {
        &self.index[..self.d]
    }

    pub fn measure(&self) -> f64 {
        (0.5f64).powi((self.d as u32 * self.level) as i32)
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let l = self.level + 1;
        if self.d == 1 {
            (0..2).map(|a| DyadicCube { d: 1, level: l, index: [2 * self.index[0] + a, 0] }).collect()
        } else {
            let mut out = Vec::with_capacity(4);
            for a in 0..2 {
                for b in 0..2 {
                    out.push(DyadicCube { d: 2, level: l, index: [2 * self.index[0] + a, 2 * self.index[1] + b] });
                }
            }
            out
        }
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        if self.level == 0 {
            return None;
        }
        Some(DyadicCube { d: self.d, level: self.level - 1, index: [self.index[0] / 2, self.index[1] / 2] })
    }

    /// Ancestor (or self) at a coarser level.
    pub fn ancestor(&self, level: u32) -> Option<DyadicCube> {
        if level > self.level {
            return None;
        }
        let sh = self.level - level;
        Some(DyadicCube { d: self.d, level, index: [self.index[0] >> sh, self.index[1] >> sh] })
    }

    /// Inclusion of `other` in `self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.d == self.d && other.ancestor(self.level).is_some_and(|a| a == *self)
    }

    /// Finest-level cells of `self` in lexicographic order.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        debug_assert!(self.level <= grid.level);
        let w = 1usize << (grid.level - self.level);
        let lo0 = self.index[0] * w;
        if self.d == 1 {
            (lo0..lo0 + w).collect()
        } else {
            let lo1 = self.index[1] * w;
            let mut out = Vec::with_capacity(w * w);
            for i in lo0..lo0 + w {
                for j in lo1..lo1 + w {
                    out.push(grid.cell_index([i, j]));
                }
            }
            out
        }
    }

    pub fn contains_cell(&self, grid: &Grid, cell: usize) -> bool {
        let c = grid.coords(cell);
        let sh = grid.level - self.level;
        (0..self.d).all(|k| c[k] >> sh == self.index[k])
    }

    /// The cube of this level containing a finest cell.
    pub fn containing(grid: &Grid, cell: usize, level: u32) -> DyadicCube {
        let c = grid.coords(cell);
        let sh = grid.level - level;
        DyadicCube { d: grid.d, level, index: [c[0] >> sh, if grid.d == 2 { c[1] >> sh } else { 0 }] }
    }

    /// 3Q on the torus as a cell multiset: the 3^d translates of Q by its own
    /// side, wrapped. Coarse cubes overlap themselves, so the list can repeat
    /// cells and its length is always 3^d·|Q| in cell units.
    pub fn triple_cells(&self, grid: &Grid) -> Vec<usize> {
        let s = 1isize << self.level;
        let offsets: Vec<[isize; 2]> = if self.d == 1 {
            (-1..=1).map(|a| [a, 0]).collect()
        } else {
            (-1..=1).flat_map(|a| (-1..=1).map(move |b| [a, b])).collect()
        };
        let mut out = Vec::new();
        for o in offsets {
            let mut idx = [0usize; 2];
            for k in 0..self.d {
                idx[k] = (self.index[k] as isize + o[k]).rem_euclid(s) as usize;
            }
            out.extend(DyadicCube { d: self.d, level: self.level, index: idx }.cells(grid));
        }
        out
    }

    /// 3Q as a set of cells (sorted, without repeats).
    pub fn triple_set(&self, grid: &Grid) -> Vec<usize> {
        let mut v = self.triple_cells(grid);
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Mass of 3Q counted with multiplicity: always 3^d·|Q|.
    pub fn triple_measure(&self) -> f64 {
        3f64.powi(self.d as i32) * self.measure()
    }
}

/// Scalar field, one real value per finest cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Dimension(format!("{} values for {} cells", values.len(), grid.cells())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid { path: format!("/cells/{i}"), msg: "non-finite value".into() });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> f64) -> Self {
        ScalarField { grid, values: (0..grid.cells()).map(f).collect() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn mean(&self, q: &DyadicCube) -> f64 {
        let cells = q.cells(&self.grid);
        cells.iter().map(|&c| self.values[c]).sum::<f64>() / cells.len() as f64
    }

    pub fn lp_average(&self, q: &DyadicCube, p: f64) -> f64 {
        let cells = q.cells(&self.grid);
        let s = cells.iter().map(|&c| self.values[c].abs().powf(p)).sum::<f64>() / cells.len() as f64;
        s.powf(1.0 / p)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_measure()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.grid.cell_measure()).powf(1.0 / p)
    }
}

/// Vector field with `n` components per cell, cell-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T: Scalar = f64> {
    grid: Grid,
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(grid: Grid, n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.cells() * n {
            return Err(Error::Dimension(format!("{} entries for {} cells of dimension {n}", data.len(), grid.cells())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid { path: format!("/cells/{}", i / n.max(1)), msg: "non-finite value".into() });
        }
        Ok(VectorField { grid, n, data })
    }

    pub fn zeros(grid: Grid, n: usize) -> Self {
        VectorField { grid, n, data: vec![T::zero(); grid.cells() * n] }
    }

    pub fn constant(grid: Grid, v: &[T]) -> Self {
        let mut data = Vec::with_capacity(grid.cells() * v.len());
        for _ in 0..grid.cells() {
            data.extend_from_slice(v);
        }
        VectorField { grid, n: v.len(), data }
    }

    pub fn from_fn(grid: Grid, n: usize, f: impl Fn(usize) -> Vec<T>) -> Self {
        let mut data = Vec::with_capacity(grid.cells() * n);
        for c in 0..grid.cells() {
            let v = f(c);
            assert_eq!(v.len(), n, "vector field component count");
            data.extend(v);
        }
        VectorField { grid, n, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn at(&self, cell: usize) -> &[T] {
        &self.data[cell * self.n..(cell + 1) * self.n]
    }

    pub fn at_mut(&mut self, cell: usize) -> &mut [T] {
        &mut self.data[cell * self.n..(cell + 1) * self.n]
    }

    /// Components `[start, start+len)` of every cell.
    pub fn slice_components(&self, start: usize, len: usize) -> Self {
        VectorField::from_fn(self.grid, len, |c| self.at(c)[start..start + len].to_vec())
    }

    pub fn mean(&self, q: &DyadicCube) -> Vec<T> {
        let cells = q.cells(&self.grid);
        let mut acc = vec![T::zero(); self.n];
        for &c in &cells {
            for (a, v) in acc.iter_mut().zip(self.at(c)) {
                *a += *v;
            }
        }
        let inv = T::from_f64(1.0 / cells.len() as f64);
        acc.iter().map(|&a| a * inv).collect()
    }

    /// Componentwise `(⨍_Q |F_i|^p)^{1/p}`.
    pub fn lp_average(&self, q: &DyadicCube, p: f64) -> Vec<f64> {
        let cells = q.cells(&self.grid);
        (0..self.n)
            .map(|i| {
                let s = cells.iter().map(|&c| self.at(c)[i].abs().powf(p)).sum::<f64>() / cells.len() as f64;
                s.powf(1.0 / p)
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.grid, self.n), (other.grid, other.n), "vector field shapes");
        VectorField { grid: self.grid, n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.grid, self.n), (other.grid, other.n), "vector field shapes");
        VectorField { grid: self.grid, n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect() }
    }

    pub fn scale(&self, s: T) -> Self {
        VectorField { grid: self.grid, n: self.n, data: self.data.iter().map(|&a| a * s).collect() }
    }

    /// Largest pointwise Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.cells()).map(|c| crate::linalg::vec_norm(self.at(c))).fold(0.0, f64::max)
    }

    /// Pointwise Euclidean norm as a scalar field.
    pub fn pointwise_norm(&self) -> ScalarField {
        ScalarField { grid: self.grid, values: (0..self.grid.cells()).map(|c| crate::linalg::vec_norm(self.at(c))).collect() }
    }

    /// Largest pointwise distance to `other`, relative to the larger sup norm.
    pub fn relative_distance(&self, other: &Self) -> f64 {
        let diff = self.sub(other).sup_norm();
        let scale = self.sup_norm().max(other.sup_norm());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Square-matrix field, one n×n matrix per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField<T: Scalar = f64> {
    grid: Grid,
    n: usize,
    values: Vec<Matrix<T>>,
}

impl<T: Scalar> MatrixField<T> {
    pub fn new(grid: Grid, values: Vec<Matrix<T>>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Dimension(format!("{} matrices for {} cells", values.len(), grid.cells())));
        }
        let n = values.first().map(|m| m.rows()).unwrap_or(0);
        for (i, m) in values.iter().enumerate() {
            if m.rows() != n || m.cols() != n {
                return Err(Error::Invalid { path: format!("/cells/{i}"), msg: format!("expected {n}x{n}") });
            }
            if !m.is_finite() {
                return Err(Error::Invalid { path: format!("/cells/{i}"), msg: "non-finite value".into() });
            }
        }
        Ok(MatrixField { grid, n, values })
    }

    pub fn constant(grid: Grid, m: &Matrix<T>) -> Self {
        MatrixField { grid, n: m.rows(), values: vec![m.clone(); grid.cells()] }
    }

    pub fn from_fn(grid: Grid, n: usize, f: impl Fn(usize) -> Matrix<T>) -> Self {
        MatrixField { grid, n, values: (0..grid.cells()).map(f).collect() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn at(&self, cell: usize) -> &Matrix<T> {
        &self.values[cell]
    }

    pub fn mean(&self, q: &DyadicCube) -> Matrix<T> {
        let cells = q.cells(&self.grid);
        let mut acc = Matrix::zeros(self.n, self.n);
        for &c in &cells {
            acc += &self.values[c];
        }
        acc.scale_re(1.0 / cells.len() as f64)
    }

    /// Pointwise M(x)·f(x).
    pub fn apply(&self, f: &VectorField<T>) -> VectorField<T> {
        assert_eq!(self.grid, f.grid(), "grid mismatch");
        VectorField::from_fn(self.grid, self.n, |c| self.values[c].matvec(f.at(c)))
    }

    pub fn map(&self, f: impl Fn(&Matrix<T>) -> Matrix<T>) -> Self {
        let values: Vec<Matrix<T>> = self.values.iter().map(f).collect();
        let n = values.first().map(|m| m.rows()).unwrap_or(self.n);
        MatrixField { grid: self.grid, n, values }
    }

    pub fn adjoint(&self) -> Self {
        self.map(|m| m.adjoint())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|m| m.scale(s))
    }
}

/// A field of any value kind, as exchanged in JSON.
#[derive(Clone, Debug, PartialEq)]
pub enum GridFunction {
    Scalar(ScalarField),
    Vector(VectorField<f64>),
    Matrix(MatrixField<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Scalar,
    Vector,
    Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellJson {
    Number(f64),
    Array(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFunctionJson {
    d: usize,
    level: u32,
    kind: ValueKind,
    #[serde(default = "one")]
    n: usize,
    cells: Vec<CellJson>,
}

fn one() -> usize {
    1
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Invalid { path: path.into(), msg: msg.into() }
}

/// Deserializes with a JSON-pointer-like path on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "/".to_string() } else { format!("/{}", path.replace('.', "/")) };
        invalid(path, e.into_inner().to_string())
    })
}

impl GridFunction {
    pub fn grid(&self) -> Grid {
        match self {
            GridFunction::Scalar(f) => f.grid(),
            GridFunction::Vector(f) => f.grid(),
            GridFunction::Matrix(f) => f.grid(),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            GridFunction::Scalar(_) => ValueKind::Scalar,
            GridFunction::Vector(_) => ValueKind::Vector,
            GridFunction::Matrix(_) => ValueKind::Matrix,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: GridFunctionJson = parse_json(text)?;
        Self::from_raw(raw, "")
    }

    pub fn from_json_value(v: serde_json::Value, path: &str) -> Result<Self> {
        let raw: GridFunctionJson =
            serde_path_to_error::deserialize(v).map_err(|e| invalid(format!("{path}/{}", e.path()), e.into_inner().to_string()))?;
        Self::from_raw(raw, path)
    }

    fn from_raw(raw: GridFunctionJson, path: &str) -> Result<Self> {
        let grid = Grid::new(raw.d, raw.level).map_err(|e| invalid(format!("{path}/d"), e.to_string()))?;
        if raw.n == 0 {
            return Err(invalid(format!("{path}/n"), "n must be positive"));
        }
        if raw.cells.len() != grid.cells() {
            return Err(invalid(
                format!("{path}/cells"),
                format!("expected {} cells, found {}", grid.cells(), raw.cells.len()),
            ));
        }
        let width = match raw.kind {
            ValueKind::Scalar => 1,
            ValueKind::Vector => raw.n,
            ValueKind::Matrix => raw.n * raw.n,
        };
        let mut flat = Vec::with_capacity(grid.cells() * width);
        for (i, c) in raw.cells.into_iter().enumerate() {
            let vals = match c {
                CellJson::Number(x) => vec![x],
                CellJson::Array(v) => v,
            };
            if vals.len() != width {
                return Err(invalid(format!("{path}/cells/{i}"), format!("expected {width} numbers, found {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{path}/cells/{i}"), "non-finite value"));
            }
            flat.extend(vals);
        }
        Ok(match raw.kind {
            ValueKind::Scalar => GridFunction::Scalar(ScalarField { grid, values: flat }),
            ValueKind::Vector => GridFunction::Vector(VectorField { grid, n: raw.n, data: flat }),
            ValueKind::Matrix => {
                let n = raw.n;
                let values = flat.chunks(n * n).map(|ch| Matrix::from_vec(n, n, ch.to_vec())).collect();
                GridFunction::Matrix(MatrixField { grid, n, values })
            }
        })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let grid = self.grid();
        let (n, cells): (usize, Vec<Vec<f64>>) = match self {
            GridFunction::Scalar(f) => (1, f.values().iter().map(|&v| vec![v]).collect()),
            GridFunction::Vector(f) => (f.dim(), (0..grid.cells()).map(|c| f.at(c).to_vec()).collect()),
            GridFunction::Matrix(f) => (f.n(), f.values().iter().map(|m| m.data().to_vec()).collect()),
        };
        serde_json::json!({"d": grid.d, "level": grid.level, "kind": self.kind(), "n": n, "cells": cells})
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            GridFunction::Scalar(f) => Ok(f),
            other => Err(Error::Domain(format!("expected a scalar field, got {:?}", other.kind()))),
        }
    }

    pub fn into_vector(self) -> Result<VectorField<f64>> {
        match self {
            GridFunction::Vector(f) => Ok(f),
            GridFunction::Scalar(f) => Ok(VectorField { grid: f.grid, n: 1, data: f.values }),
            other => Err(Error::Domain(format!("expected a vector field, got {:?}", other.kind()))),
        }
    }

    pub fn into_matrix(self) -> Result<MatrixField<f64>> {
        match self {
            GridFunction::Matrix(f) => Ok(f),
            other => Err(Error::Domain(format!("expected a matrix field, got {:?}", other.kind()))),
        }
    }
}

/// Plain average (`p = None`) or componentwise L^p average, flattened.
pub fn average(f: &GridFunction, q: &DyadicCube, p: Option<f64>) -> Result<Vec<f64>> {
    f.grid().check_cube(q)?;
    if let Some(p) = p {
        if p < 1.0 {
            return Err(Error::Domain(format!("p = {p} < 1")));
        }
    }
    Ok(match (f, p) {
        (GridFunction::Scalar(s), None) => vec![s.mean(q)],
        (GridFunction::Scalar(s), Some(p)) => vec![s.lp_average(q, p)],
        (GridFunction::Vector(v), None) => v.mean(q),
        (GridFunction::Vector(v), Some(p)) => v.lp_average(q, p),
        (GridFunction::Matrix(m), None) => m.mean(q).into_data(),
        (GridFunction::Matrix(m), Some(p)) => {
            let n = m.n();
            let flat = VectorField::from_fn(m.grid(), n * n, |c| m.at(c).data().to_vec());
            flat.lp_average(q, p)
        }
    })
}

/// Outcome of the sparsity packing check.
#[derive(Clone, Debug, Serialize)]
pub struct SparsityCertificate {
    pub sparse: bool,
    pub eta: f64,
    /// E_Q per input cube, in input order.
    pub assignments: Vec<(DyadicCube, Vec<usize>)>,
    /// Cube whose free mass fell short, with that free fraction.
    pub failure: Option<(DyadicCube, f64)>,
}

/// A family of cubes with a verified η-sparse assignment.
#[derive(Clone, Debug, Serialize)]
pub struct SparseFamily {
    grid: Grid,
    cubes: Vec<DyadicCube>,
    eta: f64,
    e_sets: Vec<Vec<usize>>,
}

impl SparseFamily {
    pub fn certify(grid: Grid, cubes: Vec<DyadicCube>, eta: f64) -> Result<Self> {
        let cert = sparsity_check(&grid, &cubes, eta)?;
        if !cert.sparse {
            let (q, frac) = cert.failure.expect("failing certificate names a cube");
            return Err(Error::Domain(format!("family is not {eta}-sparse: {q} keeps only {frac:.4} of its mass")));
        }
        let e_sets = cert.assignments.into_iter().map(|(_, e)| e).collect();
        Ok(SparseFamily { grid, cubes, eta, e_sets })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn e_set(&self, i: usize) -> &[usize] {
        &self.e_sets[i]
    }
}

/// Smallest-first packing: cubes are visited finest level first, and each
/// takes just enough of its not-yet-taken cells to reach η|Q|. On nested
/// dyadic families this bottom-up minimal take is optimal at cell resolution,
/// since every ancestor of Q contains all of Q.
pub fn sparsity_check(grid: &Grid, cubes: &[DyadicCube], eta: f64) -> Result<SparsityCertificate> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta = {eta} outside (0, 1]")));
    }
    for q in cubes {
        grid.check_cube(q)?;
    }
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(cubes[i].level()));
    let mut taken = vec![false; grid.cells()];
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); cubes.len()];
    let mut failure = None;
    for &i in &order {
        let cells = cubes[i].cells(grid);
        let free: Vec<usize> = cells.iter().copied().filter(|&c| !taken[c]).collect();
        let need = (eta * cells.len() as f64 - 1e-9).ceil().max(0.0) as usize;
        if free.len() < need {
            if failure.is_none() {
                failure = Some((cubes[i], free.len() as f64 / cells.len() as f64));
            }
            continue;
        }
        for &c in &free[..need] {
            taken[c] = true;
        }
        assigned[i] = free[..need].to_vec();
    }
    Ok(SparsityCertificate {
        sparse: failure.is_none(),
        eta,
        assignments: cubes.iter().copied().zip(assigned).collect(),
        failure,
    })
}

/// `h_Q = |Q|^{-1/2}(χ_left − χ_right)` for every cube strictly coarser than
/// the grid, in `Grid::all_cubes` order.
pub fn haar_coefficients(b: &ScalarField) -> Result<BTreeMap<DyadicCube, f64>> {
    let grid = b.grid();
    if grid.d != 1 {
        return Err(Error::Unsupported("Haar coefficients need d = 1".into()));
    }
    let mut out = BTreeMap::new();
    for k in 0..grid.level {
        for q in grid.cubes_at(k) {
            let ch = q.children();
            let left: f64 = ch[0].cells(&grid).iter().map(|&c| b.get(c)).sum();
            let right: f64 = ch[1].cells(&grid).iter().map(|&c| b.get(c)).sum();
            out.insert(q, (left - right) * grid.cell_measure() / q.measure().sqrt());
        }
    }
    Ok(out)
}

/// `mean + Σ b_Q h_Q`.
pub fn haar_reconstruct(grid: Grid, mean: f64, coeffs: &BTreeMap<DyadicCube, f64>) -> Result<ScalarField> {
    if grid.d != 1 {
        return Err(Error::Unsupported("Haar reconstruction needs d = 1".into()));
    }
    let mut values = vec![mean; grid.cells()];
    for (q, &bq) in coeffs {
        grid.check_cube(q)?;
        let ch = q.children();
        let h = q.measure().powf(-0.5);
        for &c in &ch[0].cells(&grid) {
            values[c] += bq * h;
        }
        for &c in &ch[1].cells(&grid) {
            values[c] -= bq * h;
        }
    }
    ScalarField::new(grid, values)
}
