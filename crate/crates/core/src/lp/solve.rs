//! Presolve, backend dispatch and postsolve for the transport LP.
//!
//! The presolve removes every column that cannot carry mass in a feasible
//! point: `nu_n^{k,i}` survives only if cell `i` is occupied at step `n` and
//! every successor of `(i, k)` can still be driven into the target support.
//! The measure columns are then eliminated by merging each pushforward row
//! with the marginal row of the same cell, leaving a generalized-flow LP in
//! the joint masses alone.

use std::time::Instant;

use highs::HighsModelStatus;

use super::problem::{LpProblem, RowKind, Variable};
use super::simplex::{solve_dense, DenseLp, DenseOutcome};
use crate::error::{Error, Result};

/// Maximum entry count (`rows * columns`) handed to the dense simplex.
pub const DEFAULT_DENSE_LIMIT: usize = 400_000;

/// Negative masses below this magnitude are rounding noise and are clipped.
pub const NEGATIVE_MASS_FLOOR: f64 = -1e-9;
pub const MARGINAL_TOLERANCE: f64 = 1e-8;
pub const PUSHFORWARD_TOLERANCE: f64 = 1e-8;
pub const TERMINAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Dense tableau below [`SolveOptions::dense_limit`], HiGHS above.
    #[default]
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Feasibility tolerance of the simplex pivots and of the
    /// infeasibility test.
    pub tol: f64,
    pub backend: Backend,
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            backend: Backend::Auto,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

/// Worst violation of each constraint family on the full (unreduced) problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub pushforward: f64,
    pub marginal: f64,
    pub normalization: f64,
    /// `|mu_N - muf|_1` with `mu_N` recomputed from `nu_{N-1}`.
    pub terminal_l1: f64,
    /// Most negative raw mass returned by the backend, before clipping.
    pub min_raw_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub backend: &'static str,
    pub columns: usize,
    pub rows: usize,
    pub reduced_columns: usize,
    pub reduced_rows: usize,
    pub seconds: f64,
    /// `objective - b.y` when the backend returned duals.
    pub duality_gap: Option<f64>,
}

/// Optimal measure trajectory and joint masses.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    n_cells: usize,
    n_controls: usize,
    /// `measures[n][i]` for `n = 0..=N`.
    measures: Vec<Vec<f64>>,
    /// `joint[n][k * n_cells + i]` for `n = 0..N`.
    joint: Vec<Vec<f64>>,
    objective: f64,
    residuals: Residuals,
    stats: SolveStats,
}

impl TransportSolution {
    pub fn horizon(&self) -> usize {
        self.joint.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn measure(&self, step: usize) -> &[f64] {
        &self.measures[step]
    }

    pub fn measures(&self) -> &[Vec<f64>] {
        &self.measures
    }

    pub fn joint(&self, step: usize, control: usize, cell: usize) -> f64 {
        self.joint[step][control * self.n_cells + cell]
    }

    pub fn joint_step(&self, step: usize) -> &[f64] {
        &self.joint[step]
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn residuals(&self) -> &Residuals {
        &self.residuals
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    /// Full column vector of the problem this solution came from.
    pub fn to_columns(&self, problem: &LpProblem) -> Vec<f64> {
        let layout = problem.layout();
        (0..layout.n_columns())
            .map(|col| match layout.decode(col) {
                Variable::Nu { step, control, cell } => self.joint(step, control, cell),
                Variable::Mu { step, cell } => self.measures[step][cell],
            })
            .collect()
    }
}

struct Reduced {
    /// Original column index of each reduced column.
    columns: Vec<usize>,
    /// Sparse reduced columns.
    entries: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
}

/// Presolve outcome: the reduced LP or a combinatorial infeasibility proof.
fn presolve(problem: &LpProblem) -> std::result::Result<Reduced, String> {
    let layout = *problem.layout();
    let (n_x, n_u, horizon) = (layout.n_cells, layout.n_controls, layout.horizon);
    let mu0 = problem.initial();
    let muf = problem.target();

    // Successor cells of each nu column, read back from its pushforward entries.
    let successors = |col: usize| {
        problem.column(col).iter().filter_map(|&(row, a)| match problem.row_kinds()[row] {
            RowKind::Pushforward { cell, .. } | RowKind::Terminal { cell } if a != 0.0 => Some(cell),
            _ => None,
        })
    };

    let mut viable = vec![vec![false; n_x]; horizon + 1];
    for (j, &w) in muf.iter().enumerate() {
        viable[horizon][j] = w > 0.0;
    }
    let mut keep = vec![false; layout.n_nu()];
    for n in (0..horizon).rev() {
        for k in 0..n_u {
            for i in 0..n_x {
                let col = layout.nu(n, k, i);
                if successors(col).all(|j| viable[n + 1][j]) {
                    keep[col] = true;
                    viable[n][i] = true;
                }
            }
        }
    }
    if let Some(i) = (0..n_x).find(|&i| mu0[i] > 0.0 && !viable[0][i]) {
        return Err(format!(
            "initial cell {i} (mass {:e}) has no control sequence that keeps all of its mass \
             inside the target support at step {horizon}",
            mu0[i]
        ));
    }

    let mut occupied: Vec<bool> = mu0.iter().map(|&w| w > 0.0).collect();
    let mut occupancy = vec![occupied.clone()];
    for n in 0..horizon {
        let mut next = vec![false; n_x];
        for k in 0..n_u {
            for i in 0..n_x {
                let col = layout.nu(n, k, i);
                if keep[col] && occupied[i] {
                    successors(col).for_each(|j| next[j] = true);
                } else {
                    keep[col] = false;
                }
            }
        }
        occupancy.push(next.clone());
        occupied = next;
    }
    if let Some(j) = (0..n_x).find(|&j| muf[j] > 0.0 && !occupancy[horizon][j]) {
        return Err(format!(
            "target cell {j} (mass {:e}) is not reachable in exactly {horizon} steps from the \
             initial support",
            muf[j]
        ));
    }

    // Reduced rows: one per occupied (step, cell), with the terminal block last.
    let mut row_of = vec![vec![usize::MAX; n_x]; horizon + 1];
    let mut rhs = Vec::new();
    for n in 0..=horizon {
        for j in 0..n_x {
            if occupancy[n][j] {
                row_of[n][j] = rhs.len();
                rhs.push(match n {
                    0 => mu0[j],
                    _ if n == horizon => muf[j],
                    _ => 0.0,
                });
            }
        }
    }
    // Total mass makes one terminal row redundant; drop the heaviest one so
    // the backend sees a full-rank system. Its residual is still checked on
    // the full problem afterwards.
    let dropped = (0..n_x)
        .filter(|&j| occupancy[horizon][j])
        .max_by(|&a, &b| muf[a].total_cmp(&muf[b]))
        .map(|j| row_of[horizon][j]);

    let mut columns = Vec::new();
    let mut entries = Vec::new();
    let mut cost = Vec::new();
    for n in 0..horizon {
        for k in 0..n_u {
            for i in 0..n_x {
                let col = layout.nu(n, k, i);
                if !keep[col] {
                    continue;
                }
                let mut e = vec![(row_of[n][i], 1.0)];
                for &(row, a) in problem.column(col) {
                    let j = match problem.row_kinds()[row] {
                        RowKind::Pushforward { cell, .. } | RowKind::Terminal { cell } => cell,
                        _ => continue,
                    };
                    // Pushforward coefficients are -p before the terminal
                    // block and +p inside it; the merged flow row wants -p.
                    let p = a.abs();
                    let r = row_of[n + 1][j];
                    if n + 1 == horizon {
                        e.push((r, p));
                    } else {
                        e.push((r, -p));
                    }
                }
                columns.push(col);
                entries.push(e);
                cost.push(problem.objective()[col]);
            }
        }
    }
    // Terminal rows carry +p with the target on the right; flow rows carry
    // +1 on the outgoing block and -p on the incoming one.
    if let Some(d) = dropped {
        for e in entries.iter_mut() {
            e.retain(|&(r, _)| r != d);
            for (r, _) in e.iter_mut() {
                if *r > d {
                    *r -= 1;
                }
            }
        }
        rhs.remove(d);
    }
    Ok(Reduced {
        columns,
        entries,
        rhs,
        cost,
    })
}

enum BackendResult {
    Optimal { x: Vec<f64>, duality_gap: Option<f64> },
    Infeasible(String),
}

fn solve_dense_backend(red: &Reduced, tol: f64) -> Result<BackendResult> {
    let m = red.rhs.len();
    let mut a = vec![vec![0.0; red.columns.len()]; m];
    for (c, e) in red.entries.iter().enumerate() {
        for &(r, v) in e {
            a[r][c] += v;
        }
    }
    let lp = DenseLp {
        a: &a,
        b: &red.rhs,
        c: &red.cost,
    };
    match solve_dense(&lp, tol) {
        DenseOutcome::Optimal { x, objective, duals } => {
            let dual_obj: f64 = duals.iter().zip(&red.rhs).map(|(y, b)| y * b).sum();
            Ok(BackendResult::Optimal {
                x,
                duality_gap: Some(objective - dual_obj),
            })
        }
        DenseOutcome::Infeasible { farkas, phase_one } => {
            // Check the ray independently of the tableau that produced it.
            let worst = (0..red.columns.len())
                .map(|c| red.entries[c].iter().map(|&(r, v)| farkas[r] * v).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let yb: f64 = farkas.iter().zip(&red.rhs).map(|(y, b)| y * b).sum();
            if worst <= 1e-9 && yb > 1e-9 {
                Ok(BackendResult::Infeasible(format!(
                    "Farkas ray y with max_j (A^T y)_j = {worst:.3e} <= 0 and b.y = {yb:.3e} > 0 \
                     (phase-one violation {phase_one:.3e})"
                )))
            } else {
                Err(Error::NumericalFailure(format!(
                    "phase one stalled at {phase_one:.3e} but its ray does not certify \
                     infeasibility (max A^T y = {worst:.3e}, b.y = {yb:.3e})"
                )))
            }
        }
        DenseOutcome::Unbounded => Err(Error::NumericalFailure(
            "dense simplex reported an unbounded ray on a bounded transport LP".into(),
        )),
    }
}

fn highs_model(red: &Reduced, elastic: bool) -> highs::Model {
    let mut p = highs::ColProblem::new();
    let rows: Vec<_> = red.rhs.iter().map(|&b| p.add_row(b..=b)).collect();
    for (e, &c) in red.entries.iter().zip(&red.cost) {
        let cost = if elastic { 0.0 } else { c };
        p.add_column(cost, 0.0.., e.iter().map(|&(r, v)| (rows[r], v)));
    }
    if elastic {
        for &r in &rows {
            p.add_column(1.0, 0.0.., [(r, 1.0)]);
            p.add_column(1.0, 0.0.., [(r, -1.0)]);
        }
    }
    let mut model = p.optimise(highs::Sense::Minimise);
    model.make_quiet();
    // Interior point followed by crossover: an order of magnitude faster than
    // the dual simplex on these degenerate flow LPs, and still ends on a
    // vertex. A single thread keeps runs bit-reproducible.
    model.set_option("threads", 1);
    model.set_option("solver", "ipm");
    model.set_option("run_crossover", "on");
    model.set_option("primal_feasibility_tolerance", 1e-10);
    model.set_option("dual_feasibility_tolerance", 1e-10);
    model
}

/// Smallest total constraint violation `sum |A x - b|` over `x >= 0`.
fn elastic_violation(red: &Reduced) -> Result<f64> {
    let solved = highs_model(red, true)
        .try_solve()
        .map_err(|s| Error::NumericalFailure(format!("elastic solve failed: {s:?}")))?;
    match solved.status() {
        HighsModelStatus::Optimal => Ok(solved.objective_value()),
        s => Err(Error::NumericalFailure(format!("elastic solve ended with status {s:?}"))),
    }
}

fn solve_sparse_backend(red: &Reduced, tol: f64) -> Result<BackendResult> {
    let solved = highs_model(red, false)
        .try_solve()
        .map_err(|s| Error::NumericalFailure(format!("HiGHS failed: {s:?}")))?;
    match solved.status() {
        HighsModelStatus::Optimal => {
            let sol = solved.get_solution();
            let dual_obj: f64 = sol.dual_rows().iter().zip(&red.rhs).map(|(y, b)| y * b).sum();
            Ok(BackendResult::Optimal {
                x: sol.columns().to_vec(),
                duality_gap: Some(solved.objective_value() - dual_obj),
            })
        }
        HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
            let violation = elastic_violation(red)?;
            let scale = 1.0 + red.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if violation > tol * scale {
                Ok(BackendResult::Infeasible(format!(
                    "minimum total constraint violation over nonnegative masses is {violation:.3e}"
                )))
            } else {
                Err(Error::NumericalFailure(format!(
                    "HiGHS reported infeasibility but the elastic problem reaches \
                     violation {violation:.3e}"
                )))
            }
        }
        s => Err(Error::NumericalFailure(format!("HiGHS ended with status {s:?}"))),
    }
}

/// Solves the transport LP.
///
/// On success every invariant of [`TransportSolution`] holds: masses are
/// nonnegative, marginal and pushforward residuals are below `1e-8`, and the
/// terminal 1-norm residual is below `1e-6`.
pub fn solve(problem: &LpProblem, opts: &SolveOptions) -> Result<TransportSolution> {
    let start = Instant::now();
    let layout = *problem.layout();
    let (n_x, n_u, horizon) = (layout.n_cells, layout.n_controls, layout.horizon);

    let red = presolve(problem).map_err(|certificate| Error::Infeasible { certificate })?;
    let size = red.rhs.len() * red.columns.len();
    let use_dense = match opts.backend {
        Backend::Dense => true,
        Backend::Sparse => false,
        Backend::Auto => size <= opts.dense_limit,
    };
    let result = if red.columns.is_empty() {
        // Only possible when every target row was dropped or empty.
        BackendResult::Optimal {
            x: Vec::new(),
            duality_gap: Some(0.0),
        }
    } else if use_dense {
        solve_dense_backend(&red, opts.tol)?
    } else {
        solve_sparse_backend(&red, opts.tol)?
    };
    let (x, duality_gap) = match result {
        BackendResult::Optimal { x, duality_gap } => (x, duality_gap),
        BackendResult::Infeasible(certificate) => return Err(Error::Infeasible { certificate }),
    };

    let min_raw_mass = x.iter().copied().fold(0.0f64, f64::min);
    if min_raw_mass < NEGATIVE_MASS_FLOOR {
        return Err(Error::NumericalFailure(format!("backend returned negative mass {min_raw_mass:e}")));
    }
    let mut joint = vec![vec![0.0; n_u * n_x]; horizon];
    for (&col, &v) in red.columns.iter().zip(&x) {
        if let Variable::Nu { step, control, cell } = layout.decode(col) {
            joint[step][control * n_x + cell] = v.max(0.0);
        }
    }

    // mu_n for 0 < n < N is the marginal of nu_n; the endpoints are data.
    let mut measures = Vec::with_capacity(horizon + 1);
    measures.push(problem.initial().to_vec());
    for nu in joint.iter().skip(1) {
        let mut mu = vec![0.0; n_x];
        for k in 0..n_u {
            for i in 0..n_x {
                mu[i] += nu[k * n_x + i];
            }
        }
        measures.push(mu);
    }
    measures.push(problem.target().to_vec());

    let mut solution = TransportSolution {
        n_cells: n_x,
        n_controls: n_u,
        measures,
        joint,
        objective: 0.0,
        residuals: Residuals::default(),
        stats: SolveStats {
            backend: if use_dense { "dense-simplex" } else { "highs-ipm" },
            columns: problem.n_columns(),
            rows: problem.n_rows(),
            reduced_columns: red.columns.len(),
            reduced_rows: red.rhs.len(),
            seconds: 0.0,
            duality_gap,
        },
    };
    let full = solution.to_columns(problem);
    solution.objective = problem.objective_value(&full);
    let raw = problem.residuals(&full);
    let mut res = Residuals {
        min_raw_mass,
        ..Residuals::default()
    };
    for (kind, r) in problem.row_kinds().iter().zip(&raw) {
        let r = r.abs();
        match kind {
            RowKind::Pushforward { .. } => res.pushforward = res.pushforward.max(r),
            RowKind::Terminal { .. } => {
                res.pushforward = res.pushforward.max(r);
                res.terminal_l1 += r;
            }
            RowKind::Normalization { .. } => res.normalization = res.normalization.max(r),
            RowKind::Marginal { .. } => res.marginal = res.marginal.max(r),
        }
    }
    solution.residuals = res;
    solution.stats.seconds = start.elapsed().as_secs_f64();

    if res.marginal > MARGINAL_TOLERANCE || res.pushforward > PUSHFORWARD_TOLERANCE || res.terminal_l1 > TERMINAL_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "solution violates its contract: marginal {:.3e}, pushforward {:.3e}, terminal {:.3e}",
            res.marginal, res.pushforward, res.terminal_l1
        )));
    }
    Ok(solution)
}
