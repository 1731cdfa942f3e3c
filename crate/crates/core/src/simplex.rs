//! Dense two-phase simplex for the small standard-form programs used here:
//! minimize `c·x` subject to `A x = b`, `x ≥ 0`.
//!
//! Pivoting follows Bland's rule (lowest eligible index enters, ties in the
//! ratio test go to the lowest basic index), so runs are deterministic and
//! cannot cycle.

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpError {
    /// Pivot budget exhausted; carries the phase-1 objective at that point.
    IterationLimit { pivots: usize, best_residual: f64 },
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct Phase1 {
    /// Values of the structural variables at the phase-1 optimum.
    pub x: Vec<f64>,
    /// Sum of artificial variables at the optimum.
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Optimal { x: Vec<f64> },
    Infeasible,
}

struct Tableau {
    /// `rows` constraint rows followed by the objective row; each row has
    /// `n + rows` variable columns then the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    rows: usize,
    pivots: usize,
    budget: usize,
}

impl Tableau {
    fn new(a: &[Vec<f64>], b: &[f64], budget: usize) -> Self {
        let rows = a.len();
        let n = a.first().map_or(0, Vec::len);
        let width = n + rows + 1;
        let mut t = Vec::with_capacity(rows + 1);
        for (i, (row, &rhs)) in a.iter().zip(b).enumerate() {
            assert_eq!(row.len(), n, "ragged constraint matrix");
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            let mut r = vec![0.0; width];
            for (dst, &v) in r.iter_mut().zip(row) {
                *dst = sign * v;
            }
            r[n + i] = 1.0;
            r[width - 1] = sign * rhs;
            t.push(r);
        }
        // phase-1 reduced costs: artificials cost 1 and start basic
        let mut obj = vec![0.0; width];
        for r in &t {
            for j in 0..n {
                obj[j] -= r[j];
            }
            obj[width - 1] -= r[width - 1];
        }
        t.push(obj);
        Tableau {
            t,
            basis: (n..n + rows).collect(),
            n,
            rows,
            pivots: 0,
            budget,
        }
    }

    fn rhs(&self) -> usize {
        self.n + self.rows
    }

    fn objective(&self) -> f64 {
        -self.t[self.rows][self.rhs()]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let rhs = self.rhs();
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row).take(rhs + 1) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Runs simplex iterations over columns `< allowed` until optimal.
    fn run(&mut self, allowed: usize) -> Result<(), LpError> {
        let rhs = self.rhs();
        loop {
            let entering = (0..allowed).find(|&j| self.t[self.rows][j] < -COST_EPS);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][rhs].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((best, r)) => {
                            if ratio < r - 1e-15 || (ratio <= r + 1e-15 && self.basis[i] < self.basis[best]) {
                                Some((i, ratio))
                            } else {
                                Some((best, r))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            if self.pivots >= self.budget {
                return Err(LpError::IterationLimit {
                    pivots: self.pivots,
                    best_residual: self.objective().max(0.0),
                });
            }
            self.pivot(row, col);
        }
    }

    fn solution(&self) -> Vec<f64> {
        let rhs = self.rhs();
        let mut x = vec![0.0; self.n];
        for (i, &var) in self.basis.iter().enumerate() {
            if var < self.n {
                x[var] = self.t[i][rhs];
            }
        }
        x
    }

    fn phase1(&mut self) -> Result<Phase1, LpError> {
        let allowed = self.n + self.rows;
        self.run(allowed).map_err(|e| match e {
            // phase 1 is bounded below by zero
            LpError::Unbounded => LpError::IterationLimit {
                pivots: self.pivots,
                best_residual: self.objective().max(0.0),
            },
            other => other,
        })?;
        Ok(Phase1 {
            x: self.solution(),
            objective: self.objective().max(0.0),
            pivots: self.pivots,
        })
    }

    /// Pivots zero-valued artificials out of the basis where possible.
    /// Rows that stay artificial are linearly dependent on the others.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.rows {
            if self.basis[i] < self.n {
                continue;
            }
            if let Some(j) = (0..self.n).find(|&j| self.t[i][j].abs() > PIVOT_EPS) {
                self.pivot(i, j);
            }
        }
    }

    fn set_cost(&mut self, c: &[f64]) {
        let rhs = self.rhs();
        let mut obj = vec![0.0; rhs + 1];
        obj[..self.n].copy_from_slice(c);
        for i in 0..self.rows {
            let var = self.basis[i];
            let cb = if var < self.n { c[var] } else { 0.0 };
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.t[i]) {
                    *o -= cb * v;
                }
            }
        }
        for &var in &self.basis {
            obj[var] = 0.0;
        }
        self.t[self.rows] = obj;
    }
}

/// Phase 1 only: minimizes the total infeasibility of `A x = b, x ≥ 0`.
pub(crate) fn phase_one(a: &[Vec<f64>], b: &[f64], budget: usize) -> Result<Phase1, LpError> {
    Tableau::new(a, b, budget).phase1()
}

/// Full two-phase solve. The program counts as infeasible when the phase-1
/// optimum exceeds `feasibility_tol`.
pub(crate) fn minimize(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    feasibility_tol: f64,
    budget: usize,
) -> Result<Outcome, LpError> {
    let mut tab = Tableau::new(a, b, budget);
    let p1 = tab.phase1()?;
    if p1.objective > feasibility_tol {
        return Ok(Outcome::Infeasible);
    }
    tab.drive_out_artificials();
    tab.set_cost(c);
    tab.run(tab.n)?;
    Ok(Outcome::Optimal { x: tab.solution() })
}
