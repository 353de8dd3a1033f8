//! Stopping-time construction of `(P₁)` certificates for scalar-kernel operators.
//!
//! At a node Q₀ the remainder `D(x) = T(χ_{3Q₀}f)(x) − Σ_k χ_{Q_k}(x)T(χ_{3Q_k}f)(x)`
//! has the explicit kernel `k(x,y)(1 − χ_{Q_k}(x)χ_{3Q_k}(y))` against `χ_{3Q₀}f`,
//! and recursion continues inside each stopping cube `Q_k`.

use super::{convex_membership, mean_norm, CubeTerm, DominationCertificate, KernelBlock, Region, SparseModel, StopNode, MEMBER_TOL};
use crate::commutator::GridOperator;
use crate::error::{Error, Result};
use crate::grid::{DyadicCube, Grid, VectorField};
use crate::linalg::vec_norm;
use crate::pdmat::conjugate_exponent;

/// Scalar kernel `k(x,y)` (cells², x-major) of a lifted or scalar-diagonal operator.
fn scalar_kernel(op: &GridOperator) -> Result<Vec<f64>> {
    match op {
        GridOperator::Lift { kernel, .. } => Ok(kernel.clone()),
        GridOperator::Kernel { n, kernel, .. } => kernel
            .iter()
            .map(|k| {
                let c = k[(0, 0)];
                let diag = (0..*n).all(|i| (0..*n).all(|j| k[(i, j)] == if i == j { c } else { 0.0 }));
                if diag {
                    Ok(c)
                } else {
                    Err(Error::Unsupported("the stopping-time builder needs scalar kernels (T ⊗ I_n)".into()))
                }
            })
            .collect(),
        GridOperator::Sparse(_) => unreachable!("sparse models are handled before"),
    }
}

fn strict_subcubes(q: &DyadicCube, grid: &Grid) -> Vec<DyadicCube> {
    let mut out = Vec::new();
    let mut frontier = vec![*q];
    while let Some(c) = frontier.pop() {
        if c.level() < grid.level {
            for ch in c.children() {
                out.push(ch);
                frontier.push(ch);
            }
        }
    }
    out.sort_by_key(|c| (c.level(), *c));
    out
}

struct Ctx<'a> {
    grid: Grid,
    k: &'a [f64],
    f: &'a VectorField,
}

impl Ctx<'_> {
    /// `|T(f χ_E)(ξ)|` with `E` given as a membership mask.
    fn partial(&self, xi: usize, mask: &[bool]) -> f64 {
        let cells = self.grid.cells();
        let mut acc = vec![0.0; self.f.dim()];
        for (y, &inside) in mask.iter().enumerate() {
            if inside {
                let kk = self.k[xi * cells + y];
                for (a, v) in acc.iter_mut().zip(self.f.at(y)) {
                    *a += kk * v;
                }
            }
        }
        vec_norm(&acc) / cells as f64
    }

    fn mean_abs(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&c| vec_norm(self.f.at(c))).sum::<f64>() / cells.len() as f64
    }

    /// `max(⟨|f|⟩_{3Q}, max_{ξ∈Q}|T(fχ_{3Q₀∖3Q})(ξ)|)`.
    fn trigger(&self, q: &DyadicCube, outer: &[bool]) -> f64 {
        let tq = q.triple_set(&self.grid);
        let mut mask = outer.to_vec();
        for &c in &tq {
            mask[c] = false;
        }
        let mt = q.cells(&self.grid).into_iter().map(|xi| self.partial(xi, &mask)).fold(0.0, f64::max);
        self.mean_abs(&tq).max(mt)
    }
}

/// Maximal cubes with trigger above `level`, and their total measure.
fn select(subs: &[(DyadicCube, f64)], level: f64) -> (Vec<DyadicCube>, f64) {
    let mut chosen: Vec<DyadicCube> = Vec::new();
    for (q, t) in subs {
        if *t > level && !chosen.iter().any(|c| c.contains(q)) {
            chosen.push(*q);
        }
    }
    let mass = chosen.iter().map(|c| c.measure()).sum();
    (chosen, mass)
}

/// A `(P₁)` certificate for `T̄f`.
///
/// Sparse models return their own tautological certificate. Scalar-kernel
/// operators go through the stopping time: at each node the trigger threshold
/// `λ⟨|f|⟩_{3Q₀}` (λ ≥ 1) is the smallest one whose stopping cubes have total
/// measure at most `ε|Q₀|`; C is the largest `L^{r'}` norm of the remainder
/// kernels, and each remainder is cross-checked against the membership oracle.
pub fn build_p1_certificate(op: &GridOperator, f: &VectorField, eps: f64, r: f64) -> Result<DominationCertificate> {
    if let GridOperator::Sparse(model) = op {
        return Ok(DominationCertificate::tautological(model));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} outside (0, 1)")));
    }
    if r != 1.0 && r != 2.0 {
        return Err(Error::Domain(format!("r = {r}: the builder certifies r in {{1, 2}}")));
    }
    let grid = op.grid();
    grid.ensure_same(&f.grid())?;
    let k = scalar_kernel(op)?;
    let cells = grid.cells();
    let ctx = Ctx { grid, k: &k, f };
    let rp = conjugate_exponent(r);

    let mut nodes = Vec::new();
    let mut raw_terms: Vec<CubeTerm> = Vec::new();
    let mut stack = vec![grid.unit_cube()];
    while let Some(q0) = stack.pop() {
        let region = q0.triple_set(&grid);
        let mut outer = vec![false; cells];
        for &c in &region {
            outer[c] = true;
        }
        let avg = ctx.mean_abs(&region);
        let (children, lambda) = if avg == 0.0 {
            (Vec::new(), f64::INFINITY)
        } else {
            let subs: Vec<(DyadicCube, f64)> = strict_subcubes(&q0, &grid).into_iter().map(|q| (q, ctx.trigger(&q, &outer) / avg)).collect();
            let mut levels: Vec<f64> = subs.iter().map(|s| s.1).filter(|t| *t >= 1.0).collect();
            levels.push(1.0);
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let cap = eps * q0.measure();
            let mut pick = (Vec::new(), f64::INFINITY);
            for lv in levels {
                let (ch, mass) = select(&subs, lv);
                if mass <= cap * (1.0 + 1e-12) {
                    pick = (ch, lv);
                    break;
                }
            }
            pick
        };
        let scale = region.len() as f64 / cells as f64;
        let support = q0.cells(&grid);
        let triples: Vec<(DyadicCube, Vec<usize>)> = children.iter().map(|c| (*c, c.triple_set(&grid))).collect();
        let mut kern = Vec::with_capacity(support.len() * region.len());
        for &x in &support {
            let owner = triples.iter().find(|(c, _)| c.contains_cell(&grid, x));
            for &y in &region {
                let cut = owner.is_some_and(|(_, t)| t.contains(&y));
                kern.push(if cut { 0.0 } else { scale * k[x * cells + y] });
            }
        }
        raw_terms.push(CubeTerm { cube: q0, region: Region::Triple, coeff: 1.0, kernel: KernelBlock::Scalar(kern) });
        stack.extend(children.iter().rev().copied());
        nodes.push(StopNode { cube: q0, children, lambda });
    }

    let raw = SparseModel::new(grid, r, raw_terms)?;
    let c = raw.kernel_norms().iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let constant = if c > 0.0 { c } else { 1.0 };

    // cross-check: each remainder D(x) lies in C·⟪f⟫_{r,3Q₀}
    let mut c_member = 0.0f64;
    for t in raw.terms() {
        let region = super::region_cells(&grid, t);
        let samples: Vec<Vec<f64>> = region.iter().map(|&y| f.at(y).to_vec()).collect();
        let KernelBlock::Scalar(kern) = &t.kernel else { unreachable!() };
        for (i, _) in t.cube.cells(&grid).iter().enumerate() {
            let row = &kern[i * region.len()..(i + 1) * region.len()];
            let mut target = vec![0.0; f.dim()];
            for (kv, s) in row.iter().zip(&samples) {
                for (a, v) in target.iter_mut().zip(s) {
                    *a += kv * v / region.len() as f64;
                }
            }
            let cert = convex_membership(&samples, &target, r)?;
            let natural = mean_norm(row, rp);
            if !(cert.norm <= natural * (1.0 + 1e-7) + 1e-12) || cert.residual > 1e-9 * (1.0 + vec_norm(&target)) {
                return Err(Error::Builder {
                    cube: t.cube.to_string(),
                    msg: format!("membership norm {} exceeds the explicit kernel norm {natural}", cert.norm),
                });
            }
            c_member = c_member.max(cert.norm);
        }
    }
    debug_assert!(c_member <= constant * (1.0 + MEMBER_TOL) + 1e-12);

    Ok(DominationCertificate {
        model: raw.scaled(1.0 / constant),
        constant,
        r,
        eps: Some(eps),
        nodes,
        membership_constant: Some(c_member),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domination::verify_certificate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn averaging_is_one_cube() {
        let grid = Grid::new(1, 3).unwrap();
        let op = GridOperator::averaging(grid);
        let f = VectorField::constant(grid, &[1.0, -2.0]);
        for r in [1.0, 2.0] {
            let cert = build_p1_certificate(&op, &f, 0.5, r).unwrap();
            assert_eq!(cert.family(), vec![grid.unit_cube()]);
            assert!((cert.constant - 1.0).abs() < 1e-15);
            let KernelBlock::Scalar(k) = &cert.model.terms()[0].kernel else { panic!() };
            assert!(k.iter().all(|v| (v - 1.0).abs() < 1e-15));
            assert!(verify_certificate(&cert, &op, &f).unwrap().pass);
        }
    }

    #[test]
    fn random_kernels_verify_and_pack() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, level) in [(1, 4), (2, 2)] {
            let grid = Grid::new(d, level).unwrap();
            let cells = grid.cells();
            for eps in [0.25, 0.6] {
                let op = GridOperator::lift(grid, (0..cells * cells).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let f = VectorField::new(grid, 2, (0..cells * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                for r in [1.0, 2.0] {
                    let cert = build_p1_certificate(&op, &f, eps, r).unwrap();
                    let rep = verify_certificate(&cert, &op, &f).unwrap();
                    assert!(rep.pass, "{rep:?}");
                    for nd in &cert.nodes {
                        let mass: f64 = nd.children.iter().map(|c| c.measure()).sum();
                        assert!(mass <= eps * nd.cube.measure() + 1e-15);
                    }
                    assert!(cert.membership_constant.unwrap() <= cert.constant * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn rejects_matrix_kernels() {
        let grid = Grid::new(1, 1).unwrap();
        let m = crate::linalg::Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        let op = GridOperator::kernel(grid, 2, vec![m; 4]).unwrap();
        let f = VectorField::constant(grid, &[1.0, 1.0]);
        assert!(matches!(build_p1_certificate(&op, &f, 0.5, 1.0), Err(Error::Unsupported(_))));
    }
}
