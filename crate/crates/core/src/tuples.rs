//! Increasing tuples over `{1..m}`, their ordering C(m), and reverse-ordered
//! products of matrix symbols.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, Grid, MatrixField, VectorField};
use crate::linalg::{Matrix, Scalar};

pub const MAX_M: usize = 16;

/// Strictly increasing elements of `{1..ambient}`; empty is allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple {
    elems: Vec<usize>,
    ambient: usize,
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.elems.is_empty() {
            return write!(f, "()");
        }
        let s: Vec<String> = self.elems.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

impl Tuple {
    pub fn new(elems: Vec<usize>, ambient: usize) -> Result<Self> {
        if ambient > MAX_M {
            return Err(Error::Size(format!("ambient {ambient} > {MAX_M}")));
        }
        if elems.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Ordering(format!("{elems:?} is not strictly increasing")));
        }
        if elems.iter().any(|&e| e == 0 || e > ambient) {
            return Err(Error::Size(format!("{elems:?} not inside [1, {ambient}]")));
        }
        Ok(Tuple { elems, ambient })
    }

    pub fn empty(ambient: usize) -> Self {
        Tuple { elems: Vec::new(), ambient }
    }

    pub fn full(ambient: usize) -> Self {
        Tuple { elems: (1..=ambient).collect(), ambient }
    }

    pub fn elements(&self) -> &[usize] {
        &self.elems
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn contains(&self, e: usize) -> bool {
        self.elems.binary_search(&e).is_ok()
    }

    /// Complement within `{1..ambient}`.
    pub fn complement(&self) -> Tuple {
        Tuple { elems: (1..=self.ambient).filter(|&e| !self.contains(e)).collect(), ambient: self.ambient }
    }

    /// `self − alpha`; requires `alpha ≤ self`.
    pub fn minus(&self, alpha: &Tuple) -> Result<Tuple> {
        if !alpha.leq(self) {
            return Err(Error::Ordering(format!("{alpha} is not contained in {self}")));
        }
        Ok(Tuple { elems: self.elems.iter().copied().filter(|&e| !alpha.contains(e)).collect(), ambient: self.ambient })
    }

    /// Subset relation.
    pub fn leq(&self, other: &Tuple) -> bool {
        self.elems.iter().all(|&e| other.contains(e))
    }

    /// Proper subset.
    pub fn lt(&self, other: &Tuple) -> bool {
        self.leq(other) && self.len() < other.len()
    }

    pub fn fwd(&self) -> TupleView<'_> {
        TupleView { tuple: self, reversed: false }
    }

    /// σ^t: same elements, descending.
    pub fn rev(&self) -> TupleView<'_> {
        TupleView { tuple: self, reversed: true }
    }

    /// C(self): every sub-tuple, ∅ first, then by size, lexical within a size.
    pub fn subtuples(&self) -> Vec<Tuple> {
        let k = self.len();
        enumerate_c(k)
            .expect("sub-tuple count within range")
            .into_iter()
            .map(|t| Tuple { elems: t.elems.iter().map(|&i| self.elems[i - 1]).collect(), ambient: self.ambient })
            .collect()
    }
}

/// A tuple read forward or reversed; reversal never builds a decreasing `Tuple`.
#[derive(Clone, Copy, Debug)]
pub struct TupleView<'a> {
    tuple: &'a Tuple,
    reversed: bool,
}

impl<'a> TupleView<'a> {
    pub fn tuple(&self) -> &'a Tuple {
        self.tuple
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Index sequence σ(1), σ(2), … as read through the view.
    pub fn sequence(&self) -> Vec<usize> {
        let mut s = self.tuple.elems.clone();
        if self.reversed {
            s.reverse();
        }
        s
    }
}

/// σ̃_1..σ̃_{2^m}: ∅, the 1-tuples, the 2-tuples, … each block in lexical order.
pub fn enumerate_c(m: usize) -> Result<Vec<Tuple>> {
    if m > MAX_M {
        return Err(Error::Size(format!("m = {m} > {MAX_M}")));
    }
    let mut out = Vec::with_capacity(1 << m);
    for k in 0..=m {
        let mut comb: Vec<usize> = (1..=k).collect();
        loop {
            out.push(Tuple { elems: comb.clone(), ambient: m });
            // next k-combination of {1..m} in lexical order
            let mut i = k;
            while i > 0 && comb[i - 1] == m - k + i {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            comb[i - 1] += 1;
            for j in i..k {
                comb[j] = comb[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// |σ̃_j| for 1-based j.
pub fn k0(j: usize, m: usize) -> Result<usize> {
    if m > MAX_M {
        return Err(Error::Size(format!("m = {m} > {MAX_M}")));
    }
    if j == 0 || j > 1 << m {
        return Err(Error::Size(format!("j = {j} outside [1, 2^{m}]")));
    }
    let mut upto = 0;
    for k in 0..=m {
        upto += binomial(m, k);
        if j <= upto {
            return Ok(k);
        }
    }
    unreachable!("j ≤ 2^m")
}

/// `B_{s(k)}···B_{s(1)}` for the view's sequence s; element e picks `mats[e-1]`.
pub fn symbol_product<T: Scalar>(mats: &[Matrix<T>], n: usize, view: TupleView<'_>) -> Result<Matrix<T>> {
    let seq = view.sequence();
    let mut acc = Matrix::identity(n);
    for &e in &seq {
        let b = mats.get(e - 1).ok_or_else(|| Error::Dimension(format!("symbol {e} of {}", mats.len())))?;
        if b.rows() != n || b.cols() != n {
            return Err(Error::Dimension(format!("symbol {e} is {}x{}, expected {n}x{n}", b.rows(), b.cols())));
        }
        acc = b * &acc;
    }
    Ok(acc)
}

/// `(−1)^k` as a field element.
pub fn sign<T: Scalar>(k: usize) -> T {
    if k % 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Σ_{α≤σ≤β^c} (−1)^{|θ|−|α|−|β|−|σ|} B_{(σ−α)^t} B_{σ^c−β}, with complements
/// taken inside θ. The sum vanishes whenever α < β^c.
pub fn cancellation_sum<T: Scalar>(mats: &[Matrix<T>], n: usize, theta: &Tuple, alpha: &Tuple, beta: &Tuple) -> Result<Matrix<T>> {
    if !alpha.leq(theta) || !beta.leq(theta) {
        return Err(Error::Ordering(format!("{alpha} and {beta} must lie inside {theta}")));
    }
    let beta_c = theta.minus(beta)?;
    if !alpha.lt(&beta_c) {
        return Err(Error::Ordering(format!("need {alpha} < {beta_c}")));
    }
    let mut acc = Matrix::zeros(n, n);
    for sigma in theta.subtuples() {
        if !alpha.leq(&sigma) || !sigma.leq(&beta_c) {
            continue;
        }
        let s_minus_a = sigma.minus(alpha)?;
        let sigma_c = theta.minus(&sigma)?;
        let sc_minus_b = sigma_c.minus(beta)?;
        let left = symbol_product(mats, n, s_minus_a.rev())?;
        let right = symbol_product(mats, n, sc_minus_b.fwd())?;
        let term = &left * &right;
        let exp = theta.len() + alpha.len() + beta.len() + sigma.len();
        if exp % 2 == 0 {
            acc += &term;
        } else {
            acc -= &term;
        }
    }
    Ok(acc)
}

/// The multi-symbol `B⃗ = (B_1..B_m)` of n×n matrix fields on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolVector<T: Scalar = f64> {
    grid: Grid,
    n: usize,
    symbols: Vec<MatrixField<T>>,
}

impl<T: Scalar> SymbolVector<T> {
    pub fn new(symbols: Vec<MatrixField<T>>) -> Result<Self> {
        let first = symbols.first().ok_or_else(|| Error::Size("empty symbol vector; use SymbolVector::empty".into()))?;
        let (grid, n) = (first.grid(), first.n());
        for (i, s) in symbols.iter().enumerate() {
            if s.grid() != grid {
                return Err(Error::Grid(format!("symbol {} lives on {:?}, symbol 1 on {:?}", i + 1, s.grid(), grid)));
            }
            if s.n() != n {
                return Err(Error::Dimension(format!("symbol {} is {}x{}, symbol 1 is {n}x{n}", i + 1, s.n(), s.n())));
            }
        }
        if symbols.len() > MAX_M {
            return Err(Error::Size(format!("m = {} > {MAX_M}", symbols.len())));
        }
        Ok(SymbolVector { grid, n, symbols })
    }

    /// m = 0.
    pub fn empty(grid: Grid, n: usize) -> Self {
        SymbolVector { grid, n, symbols: Vec::new() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[MatrixField<T>] {
        &self.symbols
    }

    /// `B⃗(x)` as constant matrices.
    pub fn at(&self, cell: usize) -> Vec<Matrix<T>> {
        self.symbols.iter().map(|s| s.at(cell).clone()).collect()
    }

    /// `m_Q B⃗`.
    pub fn means(&self, q: &DyadicCube) -> Vec<Matrix<T>> {
        self.symbols.iter().map(|s| s.mean(q)).collect()
    }

    pub fn product(&self, view: TupleView<'_>, cell: usize) -> Matrix<T> {
        symbol_product(&self.at(cell), self.n, view).expect("tuple inside the symbol range")
    }

    /// `B⃗* = (B_1*, …, B_m*)`.
    pub fn adjoint(&self) -> Self {
        SymbolVector { grid: self.grid, n: self.n, symbols: self.symbols.iter().map(|s| s.adjoint()).collect() }
    }

    pub fn scale(&self, s: T) -> Self {
        SymbolVector { grid: self.grid, n: self.n, symbols: self.symbols.iter().map(|b| b.scale(s)).collect() }
    }

    /// Each symbol shifted by a constant matrix.
    pub fn shifted(&self, shifts: &[Matrix<T>]) -> Self {
        SymbolVector {
            grid: self.grid,
            n: self.n,
            symbols: self.symbols.iter().zip(shifts).map(|(b, a)| b.map(|x| x - a)).collect(),
        }
    }

    /// Pointwise `B_view(x) f(x)`.
    pub fn apply(&self, view: TupleView<'_>, f: &VectorField<T>) -> VectorField<T> {
        VectorField::from_fn(self.grid, self.n, |c| self.product(view, c).matvec(f.at(c)))
    }
}

/// Two-point field `F(x, y)`, stored x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PairField<T: Scalar = f64> {
    pub grid: Grid,
    pub n: usize,
    pub data: Vec<Vec<T>>,
}

impl<T: Scalar> PairField<T> {
    pub fn at(&self, x: usize, y: usize) -> &[T] {
        &self.data[x * self.grid.cells() + y]
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|v| crate::linalg::vec_norm(v)).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d: Vec<T> = a.iter().zip(b).map(|(x, y)| *x - *y).collect();
                crate::linalg::vec_norm(&d)
            })
            .fold(0.0, f64::max)
    }
}

/// Both sides of the mean-insertion identity, as functions of the symbol
/// point x and the evaluation point y of `T`:
///
/// LHS(x,y) = (−1)^{|θ|} Σ_σ (−1)^{|θ|−|σ|} B_σ(x) T(B_{(θ−σ)^t} f)(y)
///
/// RHS(x,y) = Σ_σ [Σ_{α≤σ} (−1)^{|θ|−|α|} B_α(x)(m_Q B)_{(σ−α)^t}] ·
///            T(Σ_{β≤θ−σ} (−1)^{|θ|−|β|} (m_Q B)_β B_{(θ−σ−β)^t} f)(y)
///
/// `apply_t` must be linear and act componentwise, so constant matrices
/// commute with it. On the diagonal x = y the LHS is the signed tuple
/// expansion of the commutator restricted to θ.
pub fn mean_insertion_identity<T: Scalar>(
    b: &SymbolVector<T>,
    theta: &Tuple,
    q: &DyadicCube,
    apply_t: &dyn Fn(&VectorField<T>) -> VectorField<T>,
    f: &VectorField<T>,
) -> Result<(PairField<T>, PairField<T>)> {
    let grid = b.grid();
    grid.ensure_same(&f.grid())?;
    grid.check_cube(q)?;
    if f.dim() != b.n() {
        return Err(Error::Dimension(format!("f has {} components, symbols are {}x{}", f.dim(), b.n(), b.n())));
    }
    if theta.elements().iter().any(|&e| e > b.m()) {
        return Err(Error::Dimension(format!("{theta} indexes past m = {}", b.m())));
    }
    let n = b.n();
    let cells = grid.cells();
    let means = b.means(q);
    let th = theta.len();
    let mut lhs = vec![vec![T::zero(); n]; cells * cells];
    let mut rhs = vec![vec![T::zero(); n]; cells * cells];
    for sigma in theta.subtuples() {
        let sc = theta.minus(&sigma)?;
        // LHS term
        let tf = apply_t(&b.apply(sc.rev(), f));
        let s_l: T = sign(th + th + sigma.len());
        for x in 0..cells {
            let bx = b.product(sigma.fwd(), x).scale(s_l);
            for y in 0..cells {
                let v = bx.matvec(tf.at(y));
                for (a, w) in lhs[x * cells + y].iter_mut().zip(v) {
                    *a += w;
                }
            }
        }
        // RHS term: y-side inner sum, then T, then the x-side outer factor
        let inner = VectorField::from_fn(grid, n, |y| {
            let mut acc = vec![T::zero(); n];
            for beta in sc.subtuples() {
                let rest = sc.minus(&beta).expect("β ≤ σ^c");
                let mb = symbol_product(&means, n, beta.fwd()).expect("valid tuple");
                let by = b.product(rest.rev(), y);
                let v = (&mb * &by).matvec(f.at(y));
                let s: T = sign(th + beta.len());
                for (a, w) in acc.iter_mut().zip(v) {
                    *a += s * w;
                }
            }
            acc
        });
        let t_inner = apply_t(&inner);
        for x in 0..cells {
            let mut outer = Matrix::zeros(n, n);
            for alpha in sigma.subtuples() {
                let rest = sigma.minus(&alpha)?;
                let term = &b.product(alpha.fwd(), x) * &symbol_product(&means, n, rest.rev())?;
                if (th + alpha.len()) % 2 == 0 {
                    outer += &term;
                } else {
                    outer -= &term;
                }
            }
            for y in 0..cells {
                let v = outer.matvec(t_inner.at(y));
                for (a, w) in rhs[x * cells + y].iter_mut().zip(v) {
                    *a += w;
                }
            }
        }
    }
    Ok((PairField { grid, n, data: lhs }, PairField { grid, n, data: rhs }))
}
