//! The finite transport linear program over `(mu_n, nu_n)`.
//!
//! Columns are the joint state-control masses `nu_n^{k,i}` for
//! `n = 0..N-1` followed by the intermediate measures `mu_n^i` for
//! `n = 1..N-1`. The terminal measure is pinned by substitution, so the
//! last pushforward block reads `sum_{k,i} p_ij^k nu_{N-1}^{k,i} = muf_j`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::Measure;
use crate::ulam::{CostTable, TransitionTensor};

/// Index arithmetic for the LP columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n_cells: usize,
    pub n_controls: usize,
    pub horizon: usize,
}

/// Decoded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Nu { step: usize, control: usize, cell: usize },
    Mu { step: usize, cell: usize },
}

impl VariableLayout {
    pub fn n_nu(&self) -> usize {
        self.horizon * self.n_controls * self.n_cells
    }

    pub fn n_mu(&self) -> usize {
        (self.horizon - 1) * self.n_cells
    }

    pub fn n_columns(&self) -> usize {
        self.n_nu() + self.n_mu()
    }

    pub fn nu(&self, step: usize, control: usize, cell: usize) -> usize {
        (step * self.n_controls + control) * self.n_cells + cell
    }

    /// Column of `mu_step`, defined for `1 <= step < horizon`.
    pub fn mu(&self, step: usize, cell: usize) -> usize {
        debug_assert!(step >= 1 && step < self.horizon);
        self.n_nu() + (step - 1) * self.n_cells + cell
    }

    pub fn decode(&self, column: usize) -> Variable {
        if column < self.n_nu() {
            let cell = column % self.n_cells;
            let rest = column / self.n_cells;
            Variable::Nu {
                step: rest / self.n_controls,
                control: rest % self.n_controls,
                cell,
            }
        } else {
            let c = column - self.n_nu();
            Variable::Mu {
                step: c / self.n_cells + 1,
                cell: c % self.n_cells,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `mu_{step+1}^cell - sum p nu_step = 0`.
    Pushforward { step: usize, cell: usize },
    /// Last pushforward block with `mu_N` replaced by the target.
    Terminal { cell: usize },
    /// `sum_i mu_{step+1}^i = 1`.
    Normalization { step: usize },
    /// `sum_k nu_step^{k,cell} - mu_step^cell = 0` (data on the right at step 0).
    Marginal { step: usize, cell: usize },
}

/// Equality-form LP `min c.x  s.t.  A x = b,  x >= 0`, stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    layout: VariableLayout,
    columns: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    objective: Vec<f64>,
    rows: Vec<RowKind>,
    mu0: Vec<f64>,
    muf: Vec<f64>,
}

impl LpProblem {
    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row_kinds(&self) -> &[RowKind] {
        &self.rows
    }

    pub fn initial(&self) -> &[f64] {
        &self.mu0
    }

    pub fn target(&self) -> &[f64] {
        &self.muf
    }

    pub fn count_rows(&self, pred: impl Fn(&RowKind) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(r)).count()
    }

    /// `A x - b` for every row.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for (col, &v) in self.columns.iter().zip(x) {
            if v != 0.0 {
                for &(row, a) in col {
                    r[row] += a * v;
                }
            }
        }
        r
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_name(&self, row: usize) -> String {
        match self.rows[row] {
            RowKind::Pushforward { step, cell } => format!("push_{step}_{cell}"),
            RowKind::Terminal { cell } => format!("term_{cell}"),
            RowKind::Normalization { step } => format!("norm_{step}"),
            RowKind::Marginal { step, cell } => format!("marg_{step}_{cell}"),
        }
    }

    pub fn column_name(&self, column: usize) -> String {
        match self.layout.decode(column) {
            Variable::Nu { step, control, cell } => format!("nu_{step}_{control}_{cell}"),
            Variable::Mu { step, cell } => format!("mu_{step}_{cell}"),
        }
    }

    /// Free-format MPS export for cross-checking with external solvers.
    pub fn write_mps<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "NAME          TRANSPORT")?;
        writeln!(w, "ROWS")?;
        writeln!(w, " N  COST")?;
        for r in 0..self.n_rows() {
            writeln!(w, " E  {}", self.row_name(r))?;
        }
        writeln!(w, "COLUMNS")?;
        for (j, col) in self.columns.iter().enumerate() {
            let name = self.column_name(j);
            // Keep every column visible even when its cost is zero.
            writeln!(w, "    {name}  COST  {}", self.objective[j])?;
            for &(row, a) in col {
                writeln!(w, "    {name}  {}  {a}", self.row_name(row))?;
            }
        }
        writeln!(w, "RHS")?;
        for (r, &b) in self.rhs.iter().enumerate() {
            if b != 0.0 {
                writeln!(w, "    RHS  {}  {b}", self.row_name(r))?;
            }
        }
        writeln!(w, "ENDATA")?;
        Ok(())
    }
}

/// Builds the transport LP for moving `mu0` onto `muf` in `horizon` steps.
pub fn assemble(
    tensor: &TransitionTensor,
    costs: &CostTable,
    mu0: &Measure,
    muf: &Measure,
    horizon: usize,
) -> Result<LpProblem> {
    let n_x = tensor.n_cells();
    let n_u = tensor.n_controls();
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if costs.n_cells() != n_x || costs.n_controls() != n_u {
        return Err(Error::DimensionMismatch(format!(
            "cost table is {}x{}, tensor has {n_x} cells and {n_u} controls",
            costs.n_cells(),
            costs.n_controls()
        )));
    }
    if mu0.len() != n_x || muf.len() != n_x {
        return Err(Error::DimensionMismatch(format!(
            "measures have {} and {} cells, tensor has {n_x}",
            mu0.len(),
            muf.len()
        )));
    }
    for (name, m) in [("initial", mu0), ("target", muf)] {
        if (m.total() - 1.0).abs() > crate::grid::MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("{name} measure has mass {}", m.total())));
        }
    }

    let layout = VariableLayout {
        n_cells: n_x,
        n_controls: n_u,
        horizon,
    };
    let mut rows = Vec::with_capacity(horizon * (2 * n_x + 1));
    let push_row = |n: usize, j: usize| n * n_x + j;
    for n in 0..horizon {
        for j in 0..n_x {
            rows.push(if n + 1 == horizon {
                RowKind::Terminal { cell: j }
            } else {
                RowKind::Pushforward { step: n, cell: j }
            });
        }
    }
    let norm_base = rows.len();
    for n in 0..horizon {
        rows.push(RowKind::Normalization { step: n });
    }
    let marg_base = rows.len();
    for n in 0..horizon {
        for j in 0..n_x {
            rows.push(RowKind::Marginal { step: n, cell: j });
        }
    }

    let mut rhs = vec![0.0; rows.len()];
    for j in 0..n_x {
        rhs[push_row(horizon - 1, j)] = muf.weights()[j];
        rhs[marg_base + j] = mu0.weights()[j];
    }
    for n in 0..horizon {
        rhs[norm_base + n] = 1.0;
    }

    let mut columns = Vec::with_capacity(layout.n_columns());
    let mut objective = Vec::with_capacity(layout.n_columns());
    for n in 0..horizon {
        let sign = if n + 1 == horizon { 1.0 } else { -1.0 };
        for k in 0..n_u {
            let m = tensor.matrix(k);
            for i in 0..n_x {
                let mut col: Vec<(usize, f64)> = m
                    .row(i)
                    .filter(|&(_, p)| p != 0.0)
                    .map(|(j, p)| (push_row(n, j), sign * p))
                    .collect();
                if n + 1 == horizon {
                    // Normalization of the pinned measure, written through nu.
                    col.push((norm_base + n, m.row_sum(i)));
                }
                col.push((marg_base + n * n_x + i, 1.0));
                columns.push(col);
                objective.push(costs.get(i, k));
            }
        }
    }
    for n in 1..horizon {
        for i in 0..n_x {
            columns.push(vec![
                (push_row(n - 1, i), 1.0),
                (norm_base + n - 1, 1.0),
                (marg_base + n * n_x + i, -1.0),
            ]);
            objective.push(0.0);
        }
    }
    debug_assert_eq!(columns.len(), layout.n_columns());

    Ok(LpProblem {
        layout,
        columns,
        rhs,
        objective,
        rows,
        mu0: mu0.weights().to_vec(),
        muf: muf.weights().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift_chain() -> TransitionTensor {
        let stay: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        let next: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (j == (i + 1).min(3)) as u8 as f64).collect()).collect();
        TransitionTensor::from_dense(&[stay, next]).unwrap()
    }

    #[test]
    fn counts_for_small_instance() {
        let t = shift_chain();
        let c = CostTable::zeros(4, 2);
        let mu = Measure::uniform(4).unwrap();
        let lp = assemble(&t, &c, &mu, &mu, 2).unwrap();
        assert_eq!(lp.layout().n_nu(), 16);
        assert_eq!(lp.layout().n_mu(), 4);
        assert_eq!(lp.n_columns(), 20);
        let push = lp.count_rows(|r| matches!(r, RowKind::Pushforward { .. } | RowKind::Terminal { .. }));
        assert_eq!(push, 8);
        assert_eq!(lp.count_rows(|r| matches!(r, RowKind::Normalization { .. })), 2);
        assert_eq!(lp.count_rows(|r| matches!(r, RowKind::Marginal { .. })), 8);
    }

    #[test]
    fn single_step_has_no_measure_columns() {
        let t = shift_chain();
        let c = CostTable::zeros(4, 2);
        let mu = Measure::dirac(4, 0).unwrap();
        let lp = assemble(&t, &c, &mu, &Measure::dirac(4, 1).unwrap(), 1).unwrap();
        assert_eq!(lp.n_columns(), 8);
        assert!((0..8).all(|j| matches!(lp.layout().decode(j), Variable::Nu { step: 0, .. })));
        // nu_0^{1,0} = 1 moves the Dirac one cell right.
        let mut x = vec![0.0; 8];
        x[lp.layout().nu(0, 1, 0)] = 1.0;
        assert!(lp.residuals(&x).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn stationary_point_is_feasible() {
        let t = shift_chain();
        let c = CostTable::zeros(4, 2);
        let mu = Measure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let lp = assemble(&t, &c, &mu, &mu, 3).unwrap();
        let l = *lp.layout();
        let mut x = vec![0.0; l.n_columns()];
        for n in 0..3 {
            for i in 0..4 {
                x[l.nu(n, 0, i)] = mu.weights()[i];
                if n >= 1 {
                    x[l.mu(n, i)] = mu.weights()[i];
                }
            }
        }
        assert!(lp.residuals(&x).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn layout_round_trip() {
        let l = VariableLayout {
            n_cells: 5,
            n_controls: 3,
            horizon: 4,
        };
        for col in 0..l.n_columns() {
            let back = match l.decode(col) {
                Variable::Nu { step, control, cell } => l.nu(step, control, cell),
                Variable::Mu { step, cell } => l.mu(step, cell),
            };
            assert_eq!(back, col);
        }
    }

    #[test]
    fn rejects_mismatches() {
        let t = shift_chain();
        let mu = Measure::uniform(4).unwrap();
        assert!(assemble(&t, &CostTable::zeros(3, 2), &mu, &mu, 1).is_err());
        assert!(assemble(&t, &CostTable::zeros(4, 2), &Measure::uniform(3).unwrap(), &mu, 1).is_err());
        assert!(assemble(&t, &CostTable::zeros(4, 2), &mu, &mu, 0).is_err());
    }

    #[test]
    fn mps_lists_every_row_and_column() {
        let t = shift_chain();
        let mu = Measure::uniform(4).unwrap();
        let lp = assemble(&t, &CostTable::zeros(4, 2), &mu, &mu, 2).unwrap();
        let mut out = Vec::new();
        lp.write_mps(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("NAME"));
        assert!(s.trim_end().ends_with("ENDATA"));
        assert_eq!(s.lines().filter(|l| l.starts_with(" E  ")).count(), lp.n_rows());
        assert_eq!(s.lines().filter(|l| l.contains("  COST  ")).count(), lp.n_columns());
    }
}
