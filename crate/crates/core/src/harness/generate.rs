//! Seeded instance generators.
//!
//! Every generator draws from a `ChaCha8Rng`; one seed gives one instance,
//! bit for bit. Amplitude 0 turns every random walk and every random entry off,
//! so the result is constant in space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commutator::GridOperator;
use crate::domination::{CubeTerm, KernelBlock, Region, SparseModel};
use crate::error::{Error, Result};
use crate::grid::{sparsity_check, DyadicCube, Grid, MatrixField, ScalarField, SparseFamily, VectorField};
use crate::linalg::Matrix;
use crate::pdmat::conjugate_exponent;
use crate::tuples::SymbolVector;
use crate::weights::MatrixWeight;

pub type InstanceRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` of suite `suite`, split from the root seed.
pub fn trial_seed(root: u64, suite: &str, trial: usize) -> u64 {
    let tag = suite.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(mix(root ^ tag) ^ trial as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Weight,
    Symbol,
    Operator,
    ScalarSymbol,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub d: usize,
    pub level: u32,
    pub n: usize,
    pub m: usize,
    pub amplitude: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig { d: 1, level: 3, n: 2, m: 2, amplitude: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Weight(MatrixWeight),
    Symbol(SymbolVector),
    Operator(GridOperator),
    ScalarSymbol(ScalarField),
}

pub fn generate_instance(kind: InstanceKind, cfg: &InstanceConfig, seed: u64) -> Result<Instance> {
    if !(cfg.amplitude.is_finite() && cfg.amplitude >= 0.0) {
        return Err(Error::Domain(format!("amplitude = {} must be finite and nonnegative", cfg.amplitude)));
    }
    if cfg.n == 0 {
        return Err(Error::Dimension("n = 0".into()));
    }
    let grid = Grid::new(cfg.d, cfg.level)?;
    let mut rng = rng_from_seed(seed);
    Ok(match kind {
        InstanceKind::Weight => Instance::Weight(random_weight(&mut rng, grid, cfg.n, cfg.amplitude)),
        InstanceKind::Symbol => Instance::Symbol(random_symbols(&mut rng, grid, cfg.n, cfg.m, cfg.amplitude)),
        InstanceKind::Operator => Instance::Operator(random_kernel(&mut rng, grid, cfg.n, cfg.amplitude)),
        InstanceKind::ScalarSymbol => Instance::ScalarSymbol(random_scalar_symbol(&mut rng, grid, cfg.amplitude)),
    })
}

/// A walk over the cells in index order with steps in `[−a/2, a/2]`,
/// reflected into `[−2a, 2a]`.
pub fn bounded_walk(rng: &mut InstanceRng, len: usize, amplitude: f64) -> Vec<f64> {
    let cap = 2.0 * amplitude;
    let mut x: f64 = rng.gen_range(-1.0..1.0) * amplitude;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(x);
        x += (rng.gen::<f64>() - 0.5) * amplitude;
        if x > cap {
            x = 2.0 * cap - x;
        } else if x < -cap {
            x = -2.0 * cap - x;
        }
    }
    out
}

/// Cayley transform `(I − S)^{-1}(I + S)` of a skew matrix: orthogonal.
fn cayley(s: &Matrix) -> Matrix {
    let n = s.rows();
    let id = Matrix::identity(n);
    let minus = &id - s;
    let plus = &id + s;
    &minus.inverse().expect("I − S is invertible for skew S") * &plus
}

/// `W(x) = R(x) diag(e^{u_i(x)}) R(x)*` with `u_i` and the rotation angles
/// bounded random walks.
pub fn random_weight(rng: &mut InstanceRng, grid: Grid, n: usize, amplitude: f64) -> MatrixWeight {
    let cells = grid.cells();
    let logs: Vec<Vec<f64>> = (0..n).map(|_| bounded_walk(rng, cells, amplitude)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let angles: Vec<Vec<f64>> = pairs.iter().map(|_| bounded_walk(rng, cells, amplitude)).collect();
    let mats = (0..cells)
        .map(|c| {
            let mut s = Matrix::zeros(n, n);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                s[(i, j)] = angles[k][c];
                s[(j, i)] = -angles[k][c];
            }
            let r = cayley(&s);
            let d = Matrix::diag(&logs.iter().map(|u| u[c].exp()).collect::<Vec<_>>());
            let w = &(&r * &d) * &r.transpose();
            w.hermitian_part()
        })
        .collect();
    MatrixWeight::new(MatrixField::new(grid, mats).expect("one matrix per cell")).expect("rotated positive diagonal")
}

/// `w·I_n` with `log w` a bounded walk.
pub fn random_scalar_weight(rng: &mut InstanceRng, grid: Grid, n: usize, amplitude: f64) -> MatrixWeight {
    let u = ScalarField::new(grid, bounded_walk(rng, grid.cells(), amplitude).into_iter().map(f64::exp).collect()).expect("one value per cell");
    MatrixWeight::scalar(&u, n).expect("positive scalar field")
}

/// Entries uniform in `[−a, a]`.
pub fn random_matrix_field(rng: &mut InstanceRng, grid: Grid, n: usize, amplitude: f64) -> MatrixField {
    let mats = (0..grid.cells()).map(|_| Matrix::from_fn(n, n, |_, _| amplitude * rng.gen_range(-1.0..1.0))).collect();
    MatrixField::new(grid, mats).expect("one matrix per cell")
}

pub fn random_symbols(rng: &mut InstanceRng, grid: Grid, n: usize, m: usize, amplitude: f64) -> SymbolVector {
    if m == 0 {
        return SymbolVector::empty(grid, n);
    }
    SymbolVector::new((0..m).map(|_| random_matrix_field(rng, grid, n, amplitude)).collect()).expect("m ≥ 1 fields on one grid")
}

pub fn random_scalar_symbol(rng: &mut InstanceRng, grid: Grid, amplitude: f64) -> ScalarField {
    ScalarField::new(grid, (0..grid.cells()).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect()).expect("one value per cell")
}

pub fn random_vector_field(rng: &mut InstanceRng, grid: Grid, n: usize) -> VectorField {
    VectorField::new(grid, n, (0..grid.cells() * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("cells × n values")
}

/// Matrix kernel with entries uniform in `[−a, a]`.
pub fn random_kernel(rng: &mut InstanceRng, grid: Grid, n: usize, amplitude: f64) -> GridOperator {
    let k = grid.cells() * grid.cells();
    GridOperator::kernel(grid, n, (0..k).map(|_| Matrix::from_fn(n, n, |_, _| amplitude * rng.gen_range(-1.0..1.0))).collect())
        .expect("cells² kernel blocks")
}

/// Scalar kernel with entries uniform in `[−a, a]`.
pub fn random_lift(rng: &mut InstanceRng, grid: Grid, amplitude: f64) -> GridOperator {
    let k = grid.cells() * grid.cells();
    GridOperator::lift(grid, (0..k).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect()).expect("cells² kernel")
}

/// The unit cube plus randomly accepted cubes, each kept only while the
/// family stays η-sparse.
pub fn random_family(rng: &mut InstanceRng, grid: Grid, eta: f64) -> SparseFamily {
    let mut cubes = vec![grid.unit_cube()];
    let mut pool: Vec<DyadicCube> = grid.all_cubes().into_iter().filter(|q| q.level() > 0).collect();
    for i in (1..pool.len()).rev() {
        let j = rng.gen_range(0..=i);
        pool.swap(i, j);
    }
    for q in pool {
        if rng.gen_bool(0.35) {
            cubes.push(q);
            if !sparsity_check(&grid, &cubes, eta).map(|c| c.sparse).unwrap_or(false) {
                cubes.pop();
            }
        }
    }
    cubes.sort_by_key(|q| (q.level(), *q));
    SparseFamily::certify(grid, cubes, eta).expect("kept sparse by construction")
}

/// A sparse model on a random family: kernels rescaled so each row has
/// `L^{r'}` norm in `[0.3, 1]`. `n = None` gives scalar kernels.
pub fn random_sparse_model(rng: &mut InstanceRng, grid: Grid, n: Option<usize>, r: f64) -> SparseModel {
    let family = random_family(rng, grid, 0.5);
    let rp = conjugate_exponent(r);
    let terms = family
        .cubes()
        .iter()
        .map(|q| {
            let region = if rng.gen_bool(0.5) { Region::Cube } else { Region::Triple };
            let rows = q.cells(&grid).len();
            let cols = match region {
                Region::Cube => rows,
                Region::Triple => q.triple_set(&grid).len(),
            };
            let norm_row = |vals: &[f64]| -> f64 {
                if rp.is_infinite() {
                    vals.iter().fold(0.0f64, |m, v| m.max(*v))
                } else {
                    (vals.iter().map(|v| v.powf(rp)).sum::<f64>() / vals.len() as f64).powf(1.0 / rp)
                }
            };
            let kernel = match n {
                None => {
                    let mut k: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    for row in k.chunks_mut(cols) {
                        let abs: Vec<f64> = row.iter().map(|v| v.abs()).collect();
                        let s = rng.gen_range(0.3..1.0) / norm_row(&abs).max(1e-300);
                        row.iter_mut().for_each(|v| *v *= s);
                    }
                    KernelBlock::Scalar(k)
                }
                Some(n) => {
                    let mut k: Vec<Matrix> = (0..rows * cols).map(|_| Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).collect();
                    for row in k.chunks_mut(cols) {
                        let ops: Vec<f64> = row.iter().map(|m| m.op_norm()).collect();
                        let s = rng.gen_range(0.3..1.0) / norm_row(&ops).max(1e-300);
                        row.iter_mut().for_each(|m| *m = m.scale(s));
                    }
                    KernelBlock::Matrix(k)
                }
            };
            CubeTerm { cube: *q, region, coeff: rng.gen_range(0.5..1.5), kernel }
        })
        .collect();
    SparseModel::new(grid, r, terms).expect("kernel shapes follow the regions")
}
