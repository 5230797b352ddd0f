//! Dense two-phase tableau simplex for small equality-form LPs.
//!
//! Phase one minimizes the sum of artificials; its duals form a Farkas
//! certificate when the optimum is positive. Bland's rule guards against
//! cycling, which matters here because transport LPs are highly degenerate.

#[derive(Debug, Clone, PartialEq)]
pub enum DenseOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
        /// Row duals `y` with `c - A^T y >= 0` on every column.
        duals: Vec<f64>,
    },
    /// `y` with `A^T y <= 0` and `b.y > 0`.
    Infeasible { farkas: Vec<f64>, phase_one: f64 },
    Unbounded,
}

pub struct DenseLp<'a> {
    /// Row-major `m x n`.
    pub a: &'a [Vec<f64>],
    pub b: &'a [f64],
    pub c: &'a [f64],
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.t[row * w + col];
        for c in 0..w {
            self.t[row * w + c] /= p;
        }
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        // Rows 0..m are constraints; row m is the objective.
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let f = self.t[r * w + col];
            if f != 0.0 {
                for (c, pv) in pivot_row.iter().enumerate() {
                    self.t[r * w + c] -= f * pv;
                }
                self.t[r * w + col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations over columns `0..active`. Returns false if unbounded.
    fn optimize(&mut self, active: usize, tol: f64) -> bool {
        let rhs = self.width - 1;
        let obj = self.m;
        loop {
            let Some(enter) = (0..active).find(|&c| self.at(obj, c) < -tol) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, enter);
                if a > tol {
                    let ratio = self.at(r, rhs) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - tol
                                || (ratio <= lratio + tol && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

pub fn solve_dense(lp: &DenseLp<'_>, tol: f64) -> DenseOutcome {
    let m = lp.b.len();
    let n = lp.c.len();
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = vec![0.0; (m + 1) * width];
    let mut sign = vec![1.0; m];
    for r in 0..m {
        if lp.b[r] < 0.0 {
            sign[r] = -1.0;
        }
        for c in 0..n {
            t[r * width + c] = sign[r] * lp.a[r][c];
        }
        t[r * width + n + r] = 1.0;
        t[r * width + rhs] = sign[r] * lp.b[r];
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        basis: (n..n + m).collect(),
    };
    // Phase one objective: sum of artificials, expressed in nonbasic terms.
    for c in 0..width {
        let s: f64 = (0..m).map(|r| tab.at(r, c)).sum();
        tab.t[m * width + c] = if (n..n + m).contains(&c) { 0.0 } else { -s };
    }
    tab.optimize(n + m, tol);
    let phase_one = -tab.at(m, rhs);
    let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if phase_one > tol * scale {
        // Reduced cost of artificial r is 1 - y_r in the sign-flipped rows.
        let farkas = (0..m).map(|r| sign[r] * (1.0 - tab.at(m, n + r))).collect();
        return DenseOutcome::Infeasible { farkas, phase_one };
    }

    // Drive zero-level artificials out of the basis where possible.
    let mut redundant = vec![false; m];
    for r in 0..m {
        if tab.basis[r] >= n {
            match (0..n).find(|&c| tab.at(r, c).abs() > 1e-9) {
                Some(c) => tab.pivot(r, c),
                None => {
                    redundant[r] = true;
                    for c in 0..n {
                        tab.t[r * width + c] = 0.0;
                    }
                }
            }
        }
    }

    // Phase two objective row: c - c_B B^{-1} A over all columns.
    for c in 0..width {
        tab.t[m * width + c] = if c < n { lp.c[c] } else { 0.0 };
    }
    for r in 0..m {
        let bc = tab.basis[r];
        let cb = if bc < n { lp.c[bc] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..width {
                let v = tab.at(r, c);
                tab.t[m * width + c] -= cb * v;
            }
        }
    }
    // Redundant rows keep their artificial basic at zero; the artificial
    // columns never re-enter because only columns 0..n are scanned.
    if !tab.optimize(n, tol) {
        return DenseOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.at(r, rhs);
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m)
        .map(|r| if redundant[r] { 0.0 } else { -sign[r] * tab.at(m, n + r) })
        .collect();
    DenseOutcome::Optimal { x, objective, duals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_with_known_optimum() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6.
        let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
        let b = [4.0, 6.0];
        let c = [-1.0, -1.0, 0.0, 0.0];
        match solve_dense(&DenseLp { a: &a, b: &b, c: &c }, 1e-12) {
            DenseOutcome::Optimal { x, objective, duals } => {
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
                assert!((objective + 2.8).abs() < 1e-12);
                let dual_obj: f64 = duals.iter().zip(&b).map(|(y, b)| y * b).sum();
                assert!((dual_obj - objective).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_returns_farkas_ray() {
        // x + y = 1 and x + y = 2.
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let b = [1.0, 2.0];
        let c = [0.0, 0.0];
        match solve_dense(&DenseLp { a: &a, b: &b, c: &c }, 1e-12) {
            DenseOutcome::Infeasible { farkas, phase_one } => {
                assert!(phase_one > 0.5);
                for col in 0..2 {
                    let v: f64 = (0..2).map(|r| farkas[r] * a[r][col]).sum();
                    assert!(v <= 1e-12);
                }
                let yb: f64 = farkas.iter().zip(&b).map(|(y, b)| y * b).sum();
                assert!(yb > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // Second row duplicates the first.
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let b = [1.0, 2.0];
        let c = [1.0, 3.0];
        match solve_dense(&DenseLp { a: &a, b: &b, c: &c }, 1e-12) {
            DenseOutcome::Optimal { x, objective, .. } => {
                assert_eq!(x, vec![1.0, 0.0]);
                assert_eq!(objective, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let a = vec![vec![1.0, -1.0]];
        let b = [0.0];
        let c = [-1.0, 0.0];
        assert_eq!(solve_dense(&DenseLp { a: &a, b: &b, c: &c }, 1e-12), DenseOutcome::Unbounded);
    }
}
