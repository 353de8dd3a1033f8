//! Iterated commutators `[B_m,[…,[B_1,T]…]]`, their tuple expansion and the
//! block-matrix factorizations built on it.

use serde::{Deserialize, Serialize};

use crate::domination::{integral_bound_rhs, CubeTerm, KernelBlock, PairingBounds, Region, SparseModel};
use crate::error::{Error, Result};
use crate::grid::{DyadicCube, Grid, MatrixField, ScalarField, SparseFamily, VectorField};
use crate::linalg::{vec_norm, Matrix, Scalar};
use crate::pdmat::{conjugate_exponent, PDMatrix, Reducer};
use crate::tuples::{enumerate_c, sign, symbol_product, SymbolVector, Tuple};
use crate::weights::MatrixWeight;

/// A linear operator on grid functions.
#[derive(Clone, Debug, PartialEq)]
pub enum GridOperator<T: Scalar = f64> {
    /// `Tf(x) = ⨍ K(x,y)f(y)dy` with an n×n kernel per cell pair (x-major).
    Kernel { grid: Grid, n: usize, kernel: Vec<Matrix<T>> },
    /// A scalar kernel acting on every component: `T ⊗ I_n`.
    Lift { grid: Grid, kernel: Vec<T> },
    Sparse(SparseModel<T>),
}

impl<T: Scalar> GridOperator<T> {
    pub fn kernel(grid: Grid, n: usize, kernel: Vec<Matrix<T>>) -> Result<Self> {
        let cells = grid.cells();
        if kernel.len() != cells * cells {
            return Err(Error::Size(format!("kernel has {} entries, expected {}", kernel.len(), cells * cells)));
        }
        if let Some(k) = kernel.iter().find(|k| k.rows() != n || k.cols() != n) {
            return Err(Error::Dimension(format!("kernel block is {}x{}, expected {n}x{n}", k.rows(), k.cols())));
        }
        Ok(GridOperator::Kernel { grid, n, kernel })
    }

    pub fn lift(grid: Grid, kernel: Vec<T>) -> Result<Self> {
        let cells = grid.cells();
        if kernel.len() != cells * cells {
            return Err(Error::Size(format!("kernel has {} entries, expected {}", kernel.len(), cells * cells)));
        }
        Ok(GridOperator::Lift { grid, kernel })
    }

    /// `Tf = ⟨f⟩_{[0,1)^d}`.
    pub fn averaging(grid: Grid) -> Self {
        GridOperator::Lift { grid, kernel: vec![T::one(); grid.cells() * grid.cells()] }
    }

    pub fn identity(grid: Grid) -> Self {
        let cells = grid.cells();
        let c = T::from_f64(cells as f64);
        GridOperator::Lift { grid, kernel: (0..cells * cells).map(|i| if i / cells == i % cells { c } else { T::zero() }).collect() }
    }

    pub fn grid(&self) -> Grid {
        match self {
            GridOperator::Kernel { grid, .. } | GridOperator::Lift { grid, .. } => *grid,
            GridOperator::Sparse(s) => s.grid(),
        }
    }

    /// The fixed component count, if the operator has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            GridOperator::Kernel { n, .. } => Some(*n),
            GridOperator::Lift { .. } => None,
            GridOperator::Sparse(s) => s.matrix_dim(),
        }
    }

    pub fn apply(&self, f: &VectorField<T>) -> Result<VectorField<T>> {
        self.grid().ensure_same(&f.grid())?;
        let grid = self.grid();
        let cells = grid.cells();
        let inv = 1.0 / cells as f64;
        match self {
            GridOperator::Kernel { n, kernel, .. } => {
                if f.dim() != *n {
                    return Err(Error::Dimension(format!("operator acts on {n} components, f has {}", f.dim())));
                }
                let mut out = VectorField::zeros(grid, *n);
                for x in 0..cells {
                    let acc = out.at_mut(x);
                    for y in 0..cells {
                        let v = kernel[x * cells + y].matvec(f.at(y));
                        for (a, b) in acc.iter_mut().zip(v) {
                            *a += b;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a *= T::from_f64(inv);
                    }
                }
                Ok(out)
            }
            GridOperator::Lift { kernel, .. } => {
                let n = f.dim();
                let mut out = VectorField::zeros(grid, n);
                for x in 0..cells {
                    let acc = out.at_mut(x);
                    for y in 0..cells {
                        let k = kernel[x * cells + y];
                        for (a, b) in acc.iter_mut().zip(f.at(y)) {
                            *a += k * *b;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a *= T::from_f64(inv);
                    }
                }
                Ok(out)
            }
            GridOperator::Sparse(s) => s.apply(f),
        }
    }

    /// `T̄`: T applied to each consecutive block of `n` components.
    pub fn apply_bar(&self, f: &VectorField<T>, n: usize) -> Result<VectorField<T>> {
        if n == 0 || f.dim() % n != 0 {
            return Err(Error::Dimension(format!("{} components do not split into blocks of {n}", f.dim())));
        }
        let blocks = f.dim() / n;
        let parts = (0..blocks).map(|k| self.apply(&f.slice_components(k * n, n))).collect::<Result<Vec<_>>>()?;
        Ok(VectorField::from_fn(f.grid(), f.dim(), |c| parts.iter().flat_map(|p| p.at(c).to_vec()).collect()))
    }
}

fn check_symbols<T: Scalar>(op: &GridOperator<T>, b: &SymbolVector<T>, f: &VectorField<T>) -> Result<()> {
    op.grid().ensure_same(&b.grid())?;
    b.grid().ensure_same(&f.grid())?;
    if b.n() != f.dim() {
        return Err(Error::Dimension(format!("symbols are {0}x{0}, f has {1} components", b.n(), f.dim())));
    }
    if let Some(n) = op.dim() {
        if n != f.dim() {
            return Err(Error::Dimension(format!("operator acts on {n} components, f has {}", f.dim())));
        }
    }
    Ok(())
}

/// `[B_m,[B_{m−1},…,[B_1,T]…]]f` by direct recursion.
pub fn nested_commutator<T: Scalar>(op: &GridOperator<T>, b: &SymbolVector<T>, f: &VectorField<T>) -> Result<VectorField<T>> {
    check_symbols(op, b, f)?;
    fn rec<T: Scalar>(op: &GridOperator<T>, syms: &[MatrixField<T>], f: &VectorField<T>) -> Result<VectorField<T>> {
        match syms.split_last() {
            None => op.apply(f),
            Some((last, rest)) => {
                let outer = last.apply(&rec(op, rest, f)?);
                let inner = rec(op, rest, &last.apply(f))?;
                Ok(outer.sub(&inner))
            }
        }
    }
    rec(op, b.symbols(), f)
}

/// `Σ_σ (−1)^{m−|σ|} B_σ(x) T(B_{(σ^c)^t}f)(x)`.
pub fn expand_commutator<T: Scalar>(op: &GridOperator<T>, b: &SymbolVector<T>, f: &VectorField<T>) -> Result<VectorField<T>> {
    check_symbols(op, b, f)?;
    let m = b.m();
    let mut acc = VectorField::zeros(f.grid(), f.dim());
    for sigma in enumerate_c(m)? {
        let tf = op.apply(&b.apply(sigma.complement().rev(), f))?;
        let term = b.apply(sigma.fwd(), &tf).scale(sign(m - sigma.len()));
        acc = acc.add(&term);
    }
    Ok(acc)
}

/// `Ψ(x)` (n × 2^m n) and `Ψ̃(x)` (2^m n × n), blocks in C(m) order.
pub fn psi_matrices<T: Scalar>(b: &SymbolVector<T>, cell: usize) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = (b.n(), b.m());
    let tuples = enumerate_c(m)?;
    let blocks = tuples.len();
    let mut psi = Matrix::zeros(n, blocks * n);
    let mut psi_t = Matrix::zeros(blocks * n, n);
    for (j, s) in tuples.iter().enumerate() {
        psi.set_block(0, j * n, &b.product(s.fwd(), cell).scale(sign(m - s.len())));
        psi_t.set_block(j * n, 0, &b.product(s.complement().rev(), cell));
    }
    Ok((psi, psi_t))
}

/// `Ψ(x)·T̄(Ψ̃f)(x)`.
pub fn psi_factorization<T: Scalar>(op: &GridOperator<T>, b: &SymbolVector<T>, f: &VectorField<T>) -> Result<VectorField<T>> {
    check_symbols(op, b, f)?;
    let grid = f.grid();
    let cells = grid.cells();
    let psis = (0..cells).map(|c| psi_matrices(b, c)).collect::<Result<Vec<_>>>()?;
    let stacked = VectorField::from_fn(grid, psis[0].1.rows(), |c| psis[c].1.matvec(f.at(c)));
    let t = op.apply_bar(&stacked, b.n())?;
    Ok(VectorField::from_fn(grid, f.dim(), |c| psis[c].0.matvec(t.at(c))))
}

/// The data the Φ conjugation is built from.
#[derive(Clone, Copy, Debug)]
pub enum PhiContext<'a> {
    /// 2^m × 2^m blocks from a symbol vector.
    MatrixSymbol { b: &'a SymbolVector, u: &'a MatrixWeight, v: &'a MatrixWeight, p: f64 },
    /// (m+1) × (m+1) blocks from powers of a scalar symbol.
    ScalarPower { b: &'a ScalarField, m: usize, u: &'a MatrixWeight, v: &'a MatrixWeight, p: f64 },
}

impl PhiContext<'_> {
    fn parts(&self) -> (&MatrixWeight, &MatrixWeight, f64) {
        match *self {
            PhiContext::MatrixSymbol { u, v, p, .. } | PhiContext::ScalarPower { u, v, p, .. } => (u, v, p),
        }
    }

    pub fn blocks(&self) -> Result<usize> {
        Ok(match self {
            PhiContext::MatrixSymbol { b, .. } => enumerate_c(b.m())?.len(),
            PhiContext::ScalarPower { m, .. } => m + 1,
        })
    }

    pub fn n(&self) -> usize {
        self.parts().0.n()
    }

    fn check(&self) -> Result<()> {
        let (u, v, p) = self.parts();
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Domain(format!("p = {p} must exceed 1")));
        }
        u.grid().ensure_same(&v.grid())?;
        if u.n() != v.n() {
            return Err(Error::Dimension("U and V have different sizes".into()));
        }
        match self {
            PhiContext::MatrixSymbol { b, .. } => {
                b.grid().ensure_same(&u.grid())?;
                if b.n() != u.n() {
                    return Err(Error::Dimension("symbol and weight sizes differ".into()));
                }
            }
            PhiContext::ScalarPower { b, .. } => b.grid().ensure_same(&u.grid())?,
        }
        Ok(())
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Φ(x)` and its inverse at one cell.
///
/// Matrix symbols: `Φ_{1j} = ±W_1 B_{σ̃_j}`, `Φ_{ij} = (−1)^{|σ̃_j−σ̃_i|}W_i B_{σ̃_j−σ̃_i}` for σ̃_i ≤ σ̃_j,
/// `Φ_{ii} = W_i`, with `W_i = V^{1/p}` for odd i and `U^{1/p}` for even i (1-based).
/// Scalar powers: `Φ_{ij} = b^{j−i}/(j−i)!·W_i^{1/p}` with `W_0 = … = W_{m−1} = V`, `W_m = U`.
pub fn phi_blocks(ctx: &PhiContext<'_>, cell: usize) -> Result<(Matrix, Matrix)> {
    ctx.check()?;
    let (u, v, p) = ctx.parts();
    let n = u.n();
    let (vr, ur) = (v.cell(cell).power(1.0 / p), u.cell(cell).power(1.0 / p));
    let (vri, uri) = (vr.inverse(), ur.inverse());
    let k = ctx.blocks()?;
    let mut phi = Matrix::zeros(k * n, k * n);
    let mut inv = Matrix::zeros(k * n, k * n);
    match *ctx {
        PhiContext::MatrixSymbol { b, .. } => {
            let m = b.m();
            let tuples = enumerate_c(m)?;
            // 0-based index i ↔ 1-based i+1: even 0-based means odd 1-based
            let w = |i: usize| if i % 2 == 0 { vr.matrix() } else { ur.matrix() };
            let wi = |i: usize| if i % 2 == 0 { vri.matrix() } else { uri.matrix() };
            for i in 0..k {
                for j in 0..k {
                    let (si, sj) = (&tuples[i], &tuples[j]);
                    let (nb, nbi) = if i == j {
                        (Some(Matrix::identity(n)), Some(Matrix::identity(n)))
                    } else if i == 0 {
                        (
                            Some(b.product(sj.fwd(), cell).scale(sign(m - sj.len()))),
                            Some(b.product(sj.rev(), cell).scale(sign(m))),
                        )
                    } else if i < j && si.leq(sj) {
                        let d = sj.minus(si)?;
                        (Some(b.product(d.fwd(), cell).scale(sign(d.len()))), Some(b.product(d.rev(), cell)))
                    } else {
                        (None, None)
                    };
                    if let Some(nb) = nb {
                        phi.set_block(i * n, j * n, &(w(i) * &nb));
                    }
                    if let Some(nbi) = nbi {
                        inv.set_block(i * n, j * n, &(&nbi * wi(j)));
                    }
                }
            }
        }
        PhiContext::ScalarPower { b, m, .. } => {
            let w = |i: usize| if i < m { vr.matrix() } else { ur.matrix() };
            let wi = |i: usize| if i < m { vri.matrix() } else { uri.matrix() };
            let bx = b.get(cell);
            for i in 0..k {
                for j in i..k {
                    let c = bx.powi((j - i) as i32) / factorial(j - i);
                    phi.set_block(i * n, j * n, &w(i).scale(c));
                    inv.set_block(i * n, j * n, &wi(j).scale(c * sign::<f64>(j - i)));
                }
            }
        }
    }
    Ok((phi, inv))
}

/// The top-right n×n block of `Φ T̄ Φ^{-1}` applied to `g`.
pub fn conjugated_operator_block(op: &GridOperator, ctx: &PhiContext<'_>, g: &VectorField) -> Result<VectorField> {
    ctx.check()?;
    let n = ctx.n();
    let grid = g.grid();
    op.grid().ensure_same(&grid)?;
    ctx.parts().0.grid().ensure_same(&grid)?;
    if g.dim() != n {
        return Err(Error::Dimension(format!("g has {} components, expected {n}", g.dim())));
    }
    let k = ctx.blocks()?;
    let cells = grid.cells();
    let phis = (0..cells).map(|c| phi_blocks(ctx, c)).collect::<Result<Vec<_>>>()?;
    let h = VectorField::from_fn(grid, k * n, |c| phis[c].1.block(0, (k - 1) * n, k * n, n).matvec(g.at(c)));
    let t = op.apply_bar(&h, n)?;
    Ok(VectorField::from_fn(grid, n, |c| phis[c].0.block(0, 0, n, k * n).matvec(t.at(c))))
}

/// Which decoupled maximal operator to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MaximalSide {
    /// `P_Q^{-1} Σ_{β≤τ} (−1)^{m−|β|}(m_QB)_β B_{(τ−β)^t}(y) W(y) f(y)`.
    Primal,
    /// `R_Q^{-1} Σ_{α≤τ} (−1)^{m−|α|}((m_QB)_{(τ−α)^t})^* B_α(x)^* W(x) g(x)`.
    Adjoint,
}

/// The integrand of the decoupled maximal operator on one cube, per cell of the cube.
fn decoupled_integrand(
    q: &DyadicCube,
    mat_inv: &Matrix,
    b: &SymbolVector,
    tau: &Tuple,
    side: MaximalSide,
    weight: &MatrixField,
    f: &VectorField,
) -> Result<Vec<Vec<f64>>> {
    let grid = f.grid();
    let n = b.n();
    let m = b.m();
    let means = b.means(q);
    let mut terms = Vec::new();
    for part in tau.subtuples() {
        let rest = tau.minus(&part)?;
        let s = sign::<f64>(m - part.len());
        match side {
            MaximalSide::Primal => terms.push((symbol_product(&means, n, part.fwd())?.scale(s), rest, true)),
            MaximalSide::Adjoint => terms.push((symbol_product(&means, n, rest.rev())?.adjoint().scale(s), part, false)),
        }
    }
    Ok(q.cells(&grid)
        .into_iter()
        .map(|c| {
            let mut acc = Matrix::zeros(n, n);
            for (mean_part, t, primal) in &terms {
                let local = if *primal { b.product(t.rev(), c) } else { b.product(t.fwd(), c).adjoint() };
                acc += &(mean_part * &local);
            }
            let w = &(mat_inv * &acc) * weight.at(c);
            w.matvec(f.at(c))
        })
        .collect())
}

/// `sup_{Q∈S, z∈Q} (⨍_Q |X_Q|^r)^{1/r}` with `X_Q` as in [`MaximalSide`]; zero off the family.
#[allow(clippy::too_many_arguments)]
pub fn decoupled_maximal(
    family: &SparseFamily,
    mats: &[PDMatrix],
    b: &SymbolVector,
    tau: &Tuple,
    side: MaximalSide,
    weight: &MatrixField,
    exponent: f64,
    f: &VectorField,
) -> Result<ScalarField> {
    let grid = family.grid();
    grid.ensure_same(&f.grid())?;
    grid.ensure_same(&b.grid())?;
    if mats.len() != family.cubes().len() {
        return Err(Error::Size(format!("{} matrices for {} cubes", mats.len(), family.cubes().len())));
    }
    if tau.ambient() != b.m() {
        return Err(Error::Dimension(format!("τ lives in C({}) but there are {} symbols", tau.ambient(), b.m())));
    }
    if exponent < 1.0 {
        return Err(Error::Domain(format!("exponent {exponent} < 1")));
    }
    let mut out = vec![0.0; grid.cells()];
    for (q, pm) in family.cubes().iter().zip(mats) {
        let vals = decoupled_integrand(q, pm.inverse().matrix(), b, tau, side, weight, f)?;
        let avg = (vals.iter().map(|v| vec_norm(v).powf(exponent)).sum::<f64>() / vals.len() as f64).powf(1.0 / exponent);
        for c in q.cells(&grid) {
            if avg > out[c] {
                out[c] = avg;
            }
        }
    }
    ScalarField::new(grid, out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KernelJson {
    Scalar(Vec<f64>),
    /// One n×n block per entry, as rows.
    Matrix(Vec<Vec<Vec<f64>>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    cube: DyadicCube,
    #[serde(default = "cube_region")]
    region: Region,
    #[serde(default = "unit_coeff")]
    coeff: f64,
    kernel: KernelJson,
}

fn cube_region() -> Region {
    Region::Cube
}

fn unit_coeff() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum OperatorJson {
    Averaging { d: usize, level: u32 },
    Identity { d: usize, level: u32 },
    Lift { d: usize, level: u32, kernel: Vec<f64> },
    Kernel { d: usize, level: u32, n: usize, kernel: Vec<Vec<Vec<f64>>> },
    Sparse { d: usize, level: u32, r: f64, terms: Vec<TermJson> },
}

fn rows_to_matrix(rows: &[Vec<f64>], path: &str) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid { path: path.into(), msg: "expected a nonempty square block".into() });
    }
    Ok(Matrix::from_rows(rows))
}

impl GridOperator {
    /// Reads `{"type": "averaging" | "identity" | "lift" | "kernel" | "sparse", "d", "level", ...}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: OperatorJson = crate::grid::parse_json(text)?;
        let grid_of = |d: usize, level: u32| Grid::new(d, level).map_err(|e| Error::Invalid { path: "/d".into(), msg: e.to_string() });
        let size = |e: Error| Error::Invalid { path: "/kernel".into(), msg: e.to_string() };
        match raw {
            OperatorJson::Averaging { d, level } => Ok(GridOperator::averaging(grid_of(d, level)?)),
            OperatorJson::Identity { d, level } => Ok(GridOperator::identity(grid_of(d, level)?)),
            OperatorJson::Lift { d, level, kernel } => GridOperator::lift(grid_of(d, level)?, kernel).map_err(size),
            OperatorJson::Kernel { d, level, n, kernel } => {
                let blocks = kernel.iter().enumerate().map(|(i, k)| rows_to_matrix(k, &format!("/kernel/{i}"))).collect::<Result<Vec<_>>>()?;
                GridOperator::kernel(grid_of(d, level)?, n, blocks).map_err(size)
            }
            OperatorJson::Sparse { d, level, r, terms } => {
                let grid = grid_of(d, level)?;
                let terms = terms
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| {
                        grid.check_cube(&t.cube).map_err(|e| Error::Invalid { path: format!("/terms/{i}/cube"), msg: e.to_string() })?;
                        let kernel = match t.kernel {
                            KernelJson::Scalar(k) => KernelBlock::Scalar(k),
                            KernelJson::Matrix(k) => KernelBlock::Matrix(
                                k.iter().enumerate().map(|(j, b)| rows_to_matrix(b, &format!("/terms/{i}/kernel/{j}"))).collect::<Result<_>>()?,
                            ),
                        };
                        Ok(CubeTerm { cube: t.cube, region: t.region, coeff: t.coeff, kernel })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GridOperator::Sparse(SparseModel::new(grid, r, terms).map_err(|e| match e {
                    Error::Invalid { .. } => e,
                    other => Error::Invalid { path: "/r".into(), msg: other.to_string() },
                })?))
            }
        }
    }
}

/// `P_Q = m_Q(V^{-1/p})` and `R_Q = m_Q(U^{1/p})` per family cube.
///
/// These are the reducing matrices `R'_{Q,(rp')',V^{(rp')'/p}}` and
/// `R_{Q,sγp,U^{sγ}}` after the exponents cancel.
pub fn reducing_choices(family: &SparseFamily, u: &MatrixWeight, v: &MatrixWeight, p: f64) -> (Vec<PDMatrix>, Vec<PDMatrix>) {
    let (rv, ru) = (Reducer::new(v, p), Reducer::new(u, p));
    family.cubes().iter().map(|q| (rv.dual(q), ru.primal(q))).unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaAAudit {
    /// `Σ_Q |Q|·pairing(Ψ̃U^{-1/p}f, Ψ*V^{1/p}g)`, lower and upper evaluations.
    pub lhs: PairingBounds,
    pub rhs: f64,
    pub eta: f64,
    pub sup_rp: f64,
    /// `‖M_{P,σ^c}f‖_p·‖M_{R,σ,*}g‖_{p'}` per σ in C(m) order.
    pub terms: Vec<f64>,
    pub holds: bool,
}

/// Both sides of the decoupling inequality
/// `Σ_Q ⟪Ψ̃U^{-1/p}f⟫_{r,Q}⟪Ψ*V^{1/p}g⟫_{s,Q}|Q| ≤ η^{-1} sup‖R_QP_Q‖ Σ_σ ‖M_{P,σ^c,r}f‖_p‖M_{R,σ,s,*}g‖_{p'}`.
#[allow(clippy::too_many_arguments)]
pub fn lemma_a_audit(
    family: &SparseFamily,
    u: &MatrixWeight,
    v: &MatrixWeight,
    p: f64,
    b: &SymbolVector,
    f: &VectorField,
    g: &VectorField,
    r: f64,
    s: f64,
    pmats: &[PDMatrix],
    rmats: &[PDMatrix],
) -> Result<LemmaAAudit> {
    let grid = family.grid();
    for gg in [u.grid(), v.grid(), b.grid(), f.grid(), g.grid()] {
        grid.ensure_same(&gg)?;
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    if pmats.len() != family.cubes().len() || rmats.len() != family.cubes().len() {
        return Err(Error::Size("one P and one R matrix per family cube".into()));
    }
    let pp = conjugate_exponent(p);
    let u_inv = u.power_field(-1.0 / p);
    let v_root = v.power_field(1.0 / p);
    let lhs = integral_bound_rhs(family.cubes(), b, &u_inv.apply(f), &v_root.apply(g), r, s)?;
    let sup_rp = rmats.iter().zip(pmats).map(|(r, p)| (r.matrix() * p.matrix()).op_norm()).fold(0.0, f64::max);
    let mut terms = Vec::new();
    for sigma in enumerate_c(b.m())? {
        let mp = decoupled_maximal(family, pmats, b, &sigma.complement(), MaximalSide::Primal, &u_inv, r, f)?;
        let mr = decoupled_maximal(family, rmats, b, &sigma, MaximalSide::Adjoint, &v_root, s, g)?;
        terms.push(mp.lp_norm(p) * mr.lp_norm(pp));
    }
    let eta = family.eta();
    let rhs = sup_rp / eta * terms.iter().sum::<f64>();
    Ok(LemmaAAudit { holds: lhs.upper <= rhs * (1.0 + 1e-10) + 1e-300, lhs, rhs, eta, sup_rp, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_symbols(rng: &mut ChaCha8Rng, g: Grid, n: usize, m: usize) -> SymbolVector {
        SymbolVector::new((0..m).map(|_| MatrixField::new(g, (0..g.cells()).map(|_| rand_mat(rng, n)).collect()).unwrap()).collect()).unwrap()
    }

    fn rand_field(rng: &mut ChaCha8Rng, g: Grid, n: usize) -> VectorField {
        VectorField::new(g, n, (0..g.cells() * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rand_kernel(rng: &mut ChaCha8Rng, g: Grid, n: usize) -> GridOperator {
        GridOperator::kernel(g, n, (0..g.cells() * g.cells()).map(|_| rand_mat(rng, n)).collect()).unwrap()
    }

    fn rand_weight(rng: &mut ChaCha8Rng, g: Grid, n: usize) -> MatrixWeight {
        let cells = (0..g.cells())
            .map(|_| {
                let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                &(&a * &a.adjoint()) + &Matrix::identity(n).scale_re(0.2)
            })
            .collect();
        MatrixWeight::new(MatrixField::new(g, cells).unwrap()).unwrap()
    }

    #[test]
    fn operators_from_json() {
        let g = Grid::new(1, 1).unwrap();
        assert_eq!(GridOperator::from_json_str(r#"{"type":"averaging","d":1,"level":1}"#).unwrap(), GridOperator::averaging(g));
        let k = GridOperator::from_json_str(r#"{"type":"kernel","d":1,"level":1,"n":1,"kernel":[[[1]],[[2]],[[3]],[[4]]]}"#).unwrap();
        assert_eq!(k.dim(), Some(1));
        let s = GridOperator::from_json_str(
            r#"{"type":"sparse","d":1,"level":1,"r":1,"terms":[{"cube":{"level":0,"index":[0]},"kernel":[0.5,0.5,0.5,0.5]}]}"#,
        )
        .unwrap();
        assert!(matches!(s, GridOperator::Sparse(_)));
        for (bad, path) in [
            (r#"{"type":"lift","d":1,"level":1,"kernel":[1]}"#, "/kernel"),
            (r#"{"type":"sparse","d":1,"level":1,"r":1,"terms":[{"cube":{"level":0,"index":[0]},"kernel":[1]}]}"#, "/terms/0/kernel"),
            (r#"{"type":"kernel","d":1,"level":1,"n":1,"kernel":[[[1]],[[2,1]],[[3]],[[4]]]}"#, "/kernel/1"),
        ] {
            match GridOperator::from_json_str(bad) {
                Err(Error::Invalid { path: p, .. }) => assert_eq!(p, path),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn trivial_commutators() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = rand_kernel(&mut rng, g, 2);
        let f = rand_field(&mut rng, g, 2);
        let empty = SymbolVector::empty(g, 2);
        assert_eq!(nested_commutator(&op, &empty, &f).unwrap(), op.apply(&f).unwrap());
        let ids = SymbolVector::new(vec![MatrixField::constant(g, &Matrix::identity(2))]).unwrap();
        assert_eq!(nested_commutator(&op, &ids, &f).unwrap().sup_norm(), 0.0);
        let b = rand_symbols(&mut rng, g, 2, 1);
        let id: GridOperator = GridOperator::identity(g);
        assert!(nested_commutator(&id, &b, &f).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn expansion_matches_nesting() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (level, n, m) in [(2, 2, 2), (3, 2, 3), (2, 3, 4)] {
            let g = Grid::new(1, level).unwrap();
            let op = rand_kernel(&mut rng, g, n);
            let b = rand_symbols(&mut rng, g, n, m);
            let f = rand_field(&mut rng, g, n);
            let nested = nested_commutator(&op, &b, &f).unwrap();
            let expanded = expand_commutator(&op, &b, &f).unwrap();
            let psi = psi_factorization(&op, &b, &f).unwrap();
            assert!(nested.relative_distance(&expanded) < 1e-10);
            assert!(nested.relative_distance(&psi) < 1e-10);
        }
    }

    #[test]
    fn expansion_complex() {
        let g = Grid::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let kern: Vec<Matrix<Complex64>> = (0..16).map(|_| Matrix::from_fn(2, 2, |_, _| c())).collect();
        let op = GridOperator::kernel(g, 2, kern).unwrap();
        let syms = (0..2).map(|_| MatrixField::new(g, (0..4).map(|_| Matrix::from_fn(2, 2, |_, _| c())).collect()).unwrap()).collect();
        let b = SymbolVector::new(syms).unwrap();
        let f = VectorField::new(g, 2, (0..8).map(|_| c()).collect()).unwrap();
        let nested = nested_commutator(&op, &b, &f).unwrap();
        assert!(nested.relative_distance(&expand_commutator(&op, &b, &f).unwrap()) < 1e-12);
    }

    #[test]
    fn psi_small_cases() {
        let g = Grid::new(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (psi, pt) = psi_matrices(&SymbolVector::<f64>::empty(g, 2), 0).unwrap();
        assert!(psi.is_exact_identity() && pt.is_exact_identity());
        let b = rand_symbols(&mut rng, g, 2, 1);
        let (psi, pt) = psi_matrices(&b, 1).unwrap();
        let b1 = b.symbols()[0].at(1);
        assert_eq!(psi.block(0, 0, 2, 2), Matrix::identity(2).scale(-1.0));
        assert_eq!(&psi.block(0, 2, 2, 2), b1);
        assert_eq!(&pt.block(0, 0, 2, 2), b1);
        assert!(pt.block(2, 0, 2, 2).is_exact_identity());
        let b = rand_symbols(&mut rng, g, 2, 2);
        let (psi, pt) = psi_matrices(&b, 0).unwrap();
        let mut want = Matrix::zeros(2, 2);
        for s in enumerate_c(2).unwrap() {
            want += &(&b.product(s.fwd(), 0) * &b.product(s.complement().rev(), 0)).scale(sign(2 - s.len()));
        }
        assert!((&(&psi * &pt) - &want).max_abs() < 1e-14);
    }

    #[test]
    fn phi_inverse_and_top_right() {
        let g = Grid::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u, v) = (rand_weight(&mut rng, g, 2), rand_weight(&mut rng, g, 2));
        for m in 1..=3 {
            let b = rand_symbols(&mut rng, g, 2, m);
            let ctx = PhiContext::MatrixSymbol { b: &b, u: &u, v: &v, p: 2.5 };
            for c in 0..g.cells() {
                let (phi, inv) = phi_blocks(&ctx, c).unwrap();
                let k = phi.rows();
                assert!((&(&phi * &inv) - &Matrix::identity(k)).max_abs() < 1e-10, "m={m}");
            }
            let op = rand_kernel(&mut rng, g, 2);
            let f = rand_field(&mut rng, g, 2);
            let got = conjugated_operator_block(&op, &ctx, &f).unwrap();
            let direct = v.power_field(0.4).apply(&expand_commutator(&op, &b, &u.power_field(-0.4).apply(&f)).unwrap());
            assert!(got.relative_distance(&direct) < 1e-9, "m={m}");
        }
    }

    #[test]
    fn scalar_power_binomial_blocks() {
        let g = Grid::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (u, v) = (rand_weight(&mut rng, g, 2), rand_weight(&mut rng, g, 2));
        let b = ScalarField::from_fn(g, |c| [0.3, -1.2, 2.0, 0.7][c]);
        let m = 2;
        let ctx = PhiContext::ScalarPower { b: &b, m, u: &u, v: &v, p: 3.0 };
        let w = |i: usize, c: usize, s: f64| if i < m { v.cell(c).power(s) } else { u.cell(c).power(s) };
        for x in 0..4 {
            for y in 0..4 {
                let prod = &phi_blocks(&ctx, x).unwrap().0 * &phi_blocks(&ctx, y).unwrap().1;
                for i in 0..=m {
                    for j in 0..=m {
                        let blk = prod.block(2 * i, 2 * j, 2, 2);
                        let want = if j < i {
                            Matrix::zeros(2, 2)
                        } else {
                            (w(i, x, 1.0 / 3.0).matrix() * w(j, y, -1.0 / 3.0).matrix())
                                .scale((b.get(x) - b.get(y)).powi((j - i) as i32) / factorial(j - i))
                        };
                        assert!((&blk - &want).max_abs() < 1e-10);
                    }
                }
            }
        }
        let op = rand_kernel(&mut rng, g, 2);
        let f = rand_field(&mut rng, g, 2);
        let bi = MatrixField::from_fn(g, 2, |c| Matrix::identity(2).scale(b.get(c)));
        let bb = SymbolVector::new(vec![bi.clone(), bi]).unwrap();
        let direct = v.power_field(1.0 / 3.0).apply(&nested_commutator(&op, &bb, &u.power_field(-1.0 / 3.0).apply(&f)).unwrap()).scale(0.5);
        assert!(conjugated_operator_block(&op, &ctx, &f).unwrap().relative_distance(&direct) < 1e-9);
    }

    #[test]
    fn decoupled_maximal_trivia() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fam = SparseFamily::certify(g, vec![g.unit_cube()], 1.0).unwrap();
        let f = rand_field(&mut rng, g, 2);
        let id = MatrixField::constant(g, &Matrix::identity(2));
        let b = rand_symbols(&mut rng, g, 2, 2);
        let m = decoupled_maximal(&fam, &[PDMatrix::identity(2)], &b, &Tuple::empty(2), MaximalSide::Primal, &id, 1.0, &f).unwrap();
        let want = f.pointwise_norm().values().iter().sum::<f64>() / 8.0;
        assert!(m.values().iter().all(|v| (v - want).abs() < 1e-14));
        let cb = SymbolVector::new(vec![MatrixField::constant(g, &rand_mat(&mut rng, 2)); 2]).unwrap();
        let z = decoupled_maximal(&fam, &[PDMatrix::identity(2)], &cb, &Tuple::full(2), MaximalSide::Adjoint, &id, 2.0, &f).unwrap();
        assert!(z.values().iter().all(|v| *v < 1e-12));
    }

    /// The same sup, recomputed cell by cell with explicit tuple loops.
    fn brute_maximal(fam: &SparseFamily, mats: &[PDMatrix], b: &SymbolVector, tau: &Tuple, side: MaximalSide, w: &MatrixField, e: f64, f: &VectorField) -> Vec<f64> {
        let g = fam.grid();
        let m = b.m();
        (0..g.cells())
            .map(|z| {
                let mut best = 0.0f64;
                for (q, pm) in fam.cubes().iter().zip(mats) {
                    if !q.contains_cell(&g, z) {
                        continue;
                    }
                    let mq = b.means(q);
                    let mut acc = 0.0;
                    let cs = q.cells(&g);
                    for &y in &cs {
                        let mut v = vec![0.0; b.n()];
                        for part in tau.subtuples() {
                            let rest = tau.minus(&part).unwrap();
                            let mat = match side {
                                MaximalSide::Primal => &symbol_product(&mq, b.n(), part.fwd()).unwrap() * &b.product(rest.rev(), y),
                                MaximalSide::Adjoint => &symbol_product(&mq, b.n(), rest.rev()).unwrap().adjoint() * &b.product(part.fwd(), y).adjoint(),
                            };
                            let t = (&pm.inverse().matrix().clone() * &mat).scale(sign(m - part.len()));
                            for (a, c) in v.iter_mut().zip(t.matvec(&w.at(y).matvec(f.at(y)))) {
                                *a += c;
                            }
                        }
                        acc += vec_norm(&v).powf(e);
                    }
                    best = best.max((acc / cs.len() as f64).powf(1.0 / e));
                }
                best
            })
            .collect()
    }

    fn dyadic_family(g: Grid) -> SparseFamily {
        let mut cubes = vec![g.unit_cube()];
        cubes.extend(g.cubes_at(1).into_iter().take(1));
        cubes.extend(g.cubes_at(2).into_iter().skip(2).take(1));
        SparseFamily::certify(g, cubes, 0.5).unwrap()
    }

    #[test]
    fn decoupled_maximal_vs_brute() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fam = dyadic_family(g);
        let b = rand_symbols(&mut rng, g, 2, 2);
        let f = rand_field(&mut rng, g, 2);
        let u = rand_weight(&mut rng, g, 2);
        let w = u.power_field(-0.5);
        let mats: Vec<PDMatrix> = fam.cubes().iter().map(|q| PDMatrix::new(u.field().mean(q)).unwrap()).collect();
        for tau in enumerate_c(2).unwrap() {
            for side in [MaximalSide::Primal, MaximalSide::Adjoint] {
                for e in [1.0, 2.5] {
                    let got = decoupled_maximal(&fam, &mats, &b, &tau, side, &w, e, &f).unwrap();
                    let want = brute_maximal(&fam, &mats, &b, &tau, side, &w, e, &f);
                    for (a, c) in got.values().iter().zip(&want) {
                        assert!((a - c).abs() <= 1e-12 * c.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn lemma_a_inequality() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fam = dyadic_family(g);
        let (u, v) = (rand_weight(&mut rng, g, 2), rand_weight(&mut rng, g, 2));
        let p = 2.5;
        let (pm, rm) = reducing_choices(&fam, &u, &v, p);
        let zero = VectorField::zeros(g, 2);
        let b = rand_symbols(&mut rng, g, 2, 1);
        let gg = rand_field(&mut rng, g, 2);
        let a = lemma_a_audit(&fam, &u, &v, p, &b, &zero, &gg, 2.0, 2.0, &pm, &rm).unwrap();
        assert_eq!((a.lhs.upper, a.rhs), (0.0, 0.0));
        for m in 0..=2 {
            for (r, s) in [(2.0, 2.0), (1.0, 1.5)] {
                let b = if m == 0 { SymbolVector::empty(g, 2) } else { rand_symbols(&mut rng, g, 2, m) };
                let f = rand_field(&mut rng, g, 2);
                let gg = rand_field(&mut rng, g, 2);
                let a = lemma_a_audit(&fam, &u, &v, p, &b, &f, &gg, r, s, &pm, &rm).unwrap();
                assert!(a.lhs.lower <= a.rhs, "m={m} {a:?}");
                if r == 2.0 {
                    assert!(a.holds, "m={m} {a:?}");
                }
            }
        }
    }
}
