//! Small dense linear programs and an exact two-phase simplex solver.
//!
//! The solver keeps a full tableau and uses Bland's rule, so it is only
//! meant for instances with a few dozen variables and constraints. It
//! serves as the exact reference for the first-order NNLAD solver.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
    #[error("constraint row {row} has {got} coefficients, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
}

/// `min c^T x` subject to `G x <= h` and `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const EPS: f64 = 1e-11;

impl LinearProgram {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Whether `x` satisfies all constraints up to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_variables()
            && x.iter().all(|&v| v >= -tol)
            && self
                .constraints
                .iter()
                .zip(&self.bounds)
                .all(|(row, &b)| dot(row, x) <= b + tol)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_variables();
        for (row, g) in self.constraints.iter().enumerate() {
            if g.len() != n {
                return Err(LpError::Shape { row, got: g.len(), expected: n });
            }
        }
        Tableau::new(self).run(n)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Columns: original variables, one slack per row, then artificials for
/// rows with a negative right-hand side. Last column is the RHS.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_structural: usize,
    first_artificial: usize,
    width: usize,
    costs: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_variables();
        let m = lp.num_constraints();
        let negative: Vec<usize> = (0..m).filter(|&i| lp.bounds[i] < 0.0).collect();
        let first_artificial = n + m;
        let width = n + m + negative.len() + 1;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut art = first_artificial;
        for i in 0..m {
            let mut r = vec![0.0; width];
            let sign = if lp.bounds[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                r[j] = sign * lp.constraints[i][j];
            }
            r[n + i] = sign;
            r[width - 1] = sign * lp.bounds[i];
            if sign < 0.0 {
                r[art] = 1.0;
                basis.push(art);
                art += 1;
            } else {
                basis.push(n + i);
            }
            rows.push(r);
        }
        let mut costs = vec![0.0; width - 1];
        costs[..n].copy_from_slice(&lp.objective);
        Self { rows, basis, n_structural: n + m, first_artificial, width, costs, pivots: 0 }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs simplex on cost vector `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize, limit: usize) -> Result<(), LpError> {
        loop {
            if self.pivots > limit {
                return Err(LpError::PivotLimit(limit));
            }
            let scale = 1.0 + cost.iter().map(|c| c.abs()).fold(0.0, f64::max);
            // Bland: first column with negative reduced cost.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>();
                reduced < -EPS * scale
            });
            let Some(c) = entering else { return Ok(()) };
            let rhs = self.width - 1;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[rhs] / row[c];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(r, c);
        }
    }

    fn run(mut self, n: usize) -> Result<LpSolution, LpError> {
        let limit = 50 * (self.width + self.rows.len()).max(100);
        let total = self.width - 1;
        if self.first_artificial < total {
            let mut phase1 = vec![0.0; total];
            phase1[self.first_artificial..].iter_mut().for_each(|c| *c = 1.0);
            self.optimize(&phase1, total, limit)?;
            let infeasibility: f64 = self
                .rows
                .iter()
                .zip(&self.basis)
                .filter(|(_, &b)| b >= self.first_artificial)
                .map(|(row, _)| row[total])
                .sum();
            let scale = 1.0 + self.rows.iter().map(|r| r[total].abs()).fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // Drive zero-level artificials out of the basis.
            for r in 0..self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    if let Some(c) = (0..self.n_structural).find(|&j| self.rows[r][j].abs() > 1e-9) {
                        self.pivot(r, c);
                    }
                }
            }
        }
        let costs = self.costs.clone();
        self.optimize(&costs, self.n_structural, limit)?;
        let mut x = vec![0.0; n];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < n {
                x[b] = row[total].max(0.0);
            }
        }
        let objective = dot(&self.costs[..n], &x);
        Ok(LpSolution { x, objective, pivots: self.pivots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            constraints: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            bounds: vec![4.0, 12.0, 18.0],
        };
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y, x + y >= 2, x - y <= 1
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            constraints: vec![vec![-1.0, -1.0], vec![1.0, -1.0]],
            bounds: vec![-2.0, 1.0],
        };
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
        assert!(lp.is_feasible(&sol.x, 1e-9));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            objective: vec![1.0],
            constraints: vec![vec![1.0], vec![-1.0]],
            bounds: vec![1.0, -2.0],
        };
        assert_eq!(infeasible.solve(), Err(LpError::Infeasible));
        let unbounded = LinearProgram {
            objective: vec![-1.0, 0.0],
            constraints: vec![vec![-1.0, 1.0]],
            bounds: vec![1.0],
        };
        assert_eq!(unbounded.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn shape_is_checked() {
        let lp = LinearProgram { objective: vec![1.0, 1.0], constraints: vec![vec![1.0]], bounds: vec![1.0] };
        assert!(matches!(lp.solve(), Err(LpError::Shape { .. })));
    }
}
