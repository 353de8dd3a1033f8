//! Positive-definite matrices, fractional powers and reducing matrices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, MatrixField};
use crate::linalg::{eigh, spectral_map, vec_norm, Matrix, Scalar};
use crate::weights::MatrixWeight;

/// Relative drift ‖A − A*‖_F/‖A‖_F tolerated (and removed) on construction.
pub const SELF_ADJOINT_DRIFT: f64 = 1e-12;

/// Self-adjoint positive-definite matrix with its eigendecomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct PDMatrix<T: Scalar = f64> {
    a: Matrix<T>,
    vals: Vec<f64>,
    vecs: Matrix<T>,
}

impl<T: Scalar> PDMatrix<T> {
    pub fn new(a: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", a.rows(), a.cols())));
        }
        if !a.is_finite() {
            return Err(Error::Definiteness("non-finite entry".into()));
        }
        let drift = (&a - &a.adjoint()).frobenius();
        let size = a.frobenius();
        if drift > SELF_ADJOINT_DRIFT * size {
            return Err(Error::SelfAdjoint(format!("relative drift {:.3e}", drift / size.max(f64::MIN_POSITIVE))));
        }
        let a = a.hermitian_part();
        let (vals, vecs) = eigh(&a);
        match vals.first() {
            Some(&lo) if lo > 0.0 => Ok(PDMatrix { a, vals, vecs }),
            Some(&lo) => Err(Error::Definiteness(format!("smallest eigenvalue {lo:.3e}"))),
            None => Err(Error::Dimension("empty matrix".into())),
        }
    }

    pub fn identity(n: usize) -> Self {
        PDMatrix { a: Matrix::identity(n), vals: vec![1.0; n], vecs: Matrix::identity(n) }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.vals
    }

    pub fn eigenvectors(&self) -> &Matrix<T> {
        &self.vecs
    }

    pub fn n(&self) -> usize {
        self.vals.len()
    }

    /// `P D^α P*`, reusing this matrix's eigenvectors.
    pub fn power(&self, alpha: f64) -> PDMatrix<T> {
        if alpha == 0.0 {
            return PDMatrix::identity(self.n());
        }
        if alpha == 1.0 {
            return self.clone();
        }
        let vals: Vec<f64> = self.vals.iter().map(|&l| l.powf(alpha)).collect();
        let a = spectral_map(&self.vals, &self.vecs, |l| l.powf(alpha));
        PDMatrix { a, vals, vecs: self.vecs.clone() }
    }

    pub fn inverse(&self) -> PDMatrix<T> {
        self.power(-1.0)
    }

    /// Largest eigenvalue, which is the spectral norm.
    pub fn op_norm(&self) -> f64 {
        *self.vals.last().expect("non-empty")
    }
}

/// Spectral norm `sqrt(ρ(A*A))`.
pub fn op_norm<T: Scalar>(a: &Matrix<T>) -> f64 {
    a.op_norm()
}

pub fn frac_power<T: Scalar>(a: &PDMatrix<T>, alpha: f64) -> PDMatrix<T> {
    a.power(alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `m_Q(W^{1/p})`.
    Primal,
    /// `m_Q(W^{−1/p})`, built as the primal matrix of `W^{−p'/p}` at `p'`.
    Dual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducingMatrix {
    pub matrix: PDMatrix<f64>,
    pub cube: DyadicCube,
    pub p: f64,
    pub side: Side,
}

pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Canonical reducing matrix: the exact cell mean of the pointwise power.
pub fn reducing_matrix(w: &MatrixWeight, q: &DyadicCube, p: f64, side: Side) -> Result<ReducingMatrix> {
    if p <= 1.0 {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    w.grid().check_cube(q)?;
    let pw = Reducer::power_field(w, p, side);
    let matrix = PDMatrix::new(pw.mean(q))?;
    Ok(ReducingMatrix { matrix, cube: *q, p, side })
}

/// Cached pointwise powers for repeated reducing matrices of one weight.
#[derive(Clone, Debug)]
pub struct Reducer {
    primal: MatrixField,
    dual: MatrixField,
}

impl Reducer {
    pub fn new(w: &MatrixWeight, p: f64) -> Self {
        Reducer { primal: Self::power_field(w, p, Side::Primal), dual: Self::power_field(w, p, Side::Dual) }
    }

    fn power_field(w: &MatrixWeight, p: f64, side: Side) -> MatrixField {
        match side {
            Side::Primal => w.power_field(1.0 / p),
            Side::Dual => {
                let pp = conjugate_exponent(p);
                w.power_weight(-pp / p).power_field(1.0 / pp)
            }
        }
    }

    pub fn primal(&self, q: &DyadicCube) -> PDMatrix {
        PDMatrix::new(self.primal.mean(q)).expect("mean of positive-definite cells")
    }

    pub fn dual(&self, q: &DyadicCube) -> PDMatrix {
        PDMatrix::new(self.dual.mean(q)).expect("mean of positive-definite cells")
    }

    /// `W^{1/p}` per cell.
    pub fn primal_field(&self) -> &MatrixField {
        &self.primal
    }

    /// `W^{−1/p}` per cell.
    pub fn dual_field(&self) -> &MatrixField {
        &self.dual
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrthoBounds {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

/// `((1/n)Σ|Ae_ℓ|, ‖A‖, Σ|Ae_ℓ|)` for an orthonormal basis `{e_ℓ}`.
pub fn orthobasis_bounds<T: Scalar>(a: &Matrix<T>, basis: &[Vec<T>]) -> Result<OrthoBounds> {
    let n = a.cols();
    if basis.len() != n || basis.iter().any(|e| e.len() != n) {
        return Err(Error::Dimension(format!("need {n} basis vectors of length {n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let ip = crate::linalg::inner(&basis[i], &basis[j]);
            let want = if i == j { 1.0 } else { 0.0 };
            if (ip - T::from_f64(want)).abs() > 1e-10 {
                return Err(Error::Domain(format!("basis is not orthonormal at ({i},{j})")));
            }
        }
    }
    let cols: Vec<f64> = basis.iter().map(|e| vec_norm(&a.matvec(e))).collect();
    let sum: f64 = cols.iter().sum();
    Ok(OrthoBounds { lower: sum / n as f64, value: a.op_norm(), upper: sum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn random_pd(n: usize, seed: &mut u64) -> PDMatrix {
        let b = Matrix::from_fn(n, n, |_, _| lcg(seed));
        PDMatrix::new(&(&b * &b.transpose()) + &Matrix::identity(n).scale_re(0.1)).unwrap()
    }

    /// Power iteration on A*A, independent of the Jacobi sweep.
    fn power_iteration_norm(a: &Matrix) -> f64 {
        let g = &a.transpose() * a;
        let mut v = vec![1.0; g.cols()];
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = g.matvec(&v);
            let nw = vec_norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            v = w.iter().map(|x| x / nw).collect();
            lam = nw;
        }
        lam.sqrt()
    }

    #[test]
    fn norms_of_simple_matrices() {
        assert_eq!(op_norm(&Matrix::<f64>::identity(3)), 1.0);
        assert!((op_norm(&Matrix::diag(&[2.0, -3.0])) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        let mut s = 17;
        for _ in 0..20 {
            let a = Matrix::from_fn(4, 4, |_, _| lcg(&mut s));
            let want = power_iteration_norm(&a);
            assert!((op_norm(&a) - want).abs() <= 1e-10 * want.max(1.0), "{} vs {want}", op_norm(&a));
            assert!((op_norm(&a) - op_norm(&a.adjoint())).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn powers_of_diagonal() {
        let a = PDMatrix::new(Matrix::diag(&[4.0, 9.0])).unwrap();
        let r = frac_power(&a, 0.5);
        assert!((r.matrix() - &Matrix::diag(&[2.0, 3.0])).max_abs() < 1e-15);
        assert_eq!(frac_power(&a, 0.0).matrix(), &Matrix::identity(2));
    }

    #[test]
    fn group_law_for_powers() {
        let mut s = 4;
        let exps = [-1.0, -0.5, 1.0 / 3.0, 0.5, 1.0, 2.0];
        for _ in 0..10 {
            let a = random_pd(3, &mut s);
            for &x in &exps {
                for &y in &exps {
                    let lhs = a.power(x + y);
                    let rhs = a.power(x).matrix() * a.power(y).matrix();
                    let scale = lhs.matrix().max_abs();
                    assert!((lhs.matrix() - &rhs).max_abs() <= 1e-10 * scale);
                }
            }
            let third = a.power(1.0 / 3.0);
            let back = third.matrix() * a.power(2.0 / 3.0).matrix();
            assert!((&back - a.matrix()).max_abs() <= 1e-10 * a.matrix().max_abs());
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(matches!(PDMatrix::new(Matrix::diag(&[1.0, -1.0])), Err(Error::Definiteness(_))));
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(PDMatrix::new(a), Err(Error::SelfAdjoint(_))));
        let tiny = Matrix::from_rows(&[vec![2.0, 1.0 + 1e-15], vec![1.0, 2.0]]);
        assert!(PDMatrix::new(tiny).is_ok());
    }

    #[test]
    fn reducing_matrix_by_hand() {
        let grid = Grid::new(1, 1).unwrap();
        let w = MatrixWeight::new(
            MatrixField::new(grid, vec![Matrix::diag(&[1.0, 1.0]), Matrix::diag(&[16.0, 1.0])]).unwrap(),
        )
        .unwrap();
        let r = reducing_matrix(&w, &DyadicCube::unit(1), 2.0, Side::Primal).unwrap();
        assert!((r.matrix.matrix() - &Matrix::diag(&[2.5, 1.0])).max_abs() < 1e-15);
        let id = MatrixWeight::identity(grid, 2);
        for side in [Side::Primal, Side::Dual] {
            let r = reducing_matrix(&id, &DyadicCube::unit(1), 3.0, side).unwrap();
            assert!((r.matrix.matrix() - &Matrix::identity(2)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn dual_is_primal_of_the_dual_weight_bitwise() {
        let grid = Grid::new(1, 3).unwrap();
        let mut s = 99;
        let cells: Vec<Matrix> = (0..8).map(|_| random_pd(2, &mut s).matrix().clone()).collect();
        let w = MatrixWeight::new(MatrixField::new(grid, cells).unwrap()).unwrap();
        let p = 3.0;
        let pp = conjugate_exponent(p);
        let dual_w = w.power_weight(-pp / p);
        for q in grid.all_cubes() {
            let a = reducing_matrix(&w, &q, p, Side::Dual).unwrap();
            let b = reducing_matrix(&dual_w, &q, pp, Side::Primal).unwrap();
            assert_eq!(a.matrix, b.matrix);
        }
    }

    #[test]
    fn orthobasis_examples() {
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = orthobasis_bounds(&Matrix::<f64>::identity(2), &e).unwrap();
        assert_eq!((b.lower, b.value, b.upper), (1.0, 1.0, 2.0));
        let b = orthobasis_bounds(&Matrix::diag(&[1.0, 0.0]), &e).unwrap();
        assert_eq!((b.lower, b.value, b.upper), (0.5, 1.0, 1.0));
        assert!(orthobasis_bounds(&Matrix::<f64>::identity(2), &[vec![1.0, 0.0], vec![1.0, 0.0]]).is_err());
    }
}
