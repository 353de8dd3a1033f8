//! Dense two-phase simplex on `min cᵀx, Ax = b, x ≥ 0` with Bland's rule.

use crate::error::{Error, Result};

const TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

struct Tableau {
    // rows × (cols + 1); last column is the right-hand side
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (a, b) in row.iter_mut().zip(&prow) {
                        *a -= f * b;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost·x` over the columns allowed by `usable`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], usable: &dyn Fn(usize) -> bool) -> bool {
        let rows = self.t.len();
        loop {
            // reduced costs d_j = c_j − c_B·column_j
            let mut enter = None;
            for j in 0..self.cols {
                if !usable(j) || self.basis.contains(&j) {
                    continue;
                }
                let d = cost[j] - (0..rows).map(|i| cost[self.basis[i]] * self.t[i][j]).sum::<f64>();
                if d < -TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..rows {
                let a = self.t[i][c];
                if a > TOL {
                    let ratio = self.t[i][self.cols] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - TOL || (ratio <= lr + TOL && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Solves `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let rows = a.len();
    let n = c.len();
    if b.len() != rows || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("LP data has inconsistent sizes".into()));
    }
    // phase 1: artificials n..n+rows
    let cols = n + rows;
    let mut t = Vec::with_capacity(rows);
    for i in 0..rows {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row: Vec<f64> = a[i].iter().map(|v| s * v).collect();
        row.extend((0..rows).map(|k| if k == i { 1.0 } else { 0.0 }));
        row.push(s * b[i]);
        t.push(row);
    }
    let mut tab = Tableau { t, basis: (n..cols).collect(), cols };
    let mut cost1 = vec![0.0; cols];
    for v in &mut cost1[n..] {
        *v = 1.0;
    }
    tab.optimize(&cost1, &|_| true);
    let infeas: f64 = (0..rows).filter(|&i| tab.basis[i] >= n).map(|i| tab.t[i][cols]).sum();
    let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if infeas > 1e-9 * scale {
        return Err(Error::Infeasible(format!("phase one residual {infeas:.3e}")));
    }
    // drive artificials out; rows where that is impossible are redundant
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.t[i][j].abs() > 1e-9) {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let mut cost2 = c.to_vec();
    cost2.extend(std::iter::repeat(0.0).take(rows));
    if !tab.optimize(&cost2, &|j| j < n) {
        return Err(Error::Infeasible("objective unbounded below".into()));
    }
    let mut x = vec![0.0; n];
    for (r, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.t[r][cols].max(0.0);
        }
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, value })
}
