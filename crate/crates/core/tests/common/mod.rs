//! Brute-force oracles shared by the integration tests. None of these call
//! into the solver or the reachability code they are used to check.
#![allow(dead_code)]

use rand::Rng;
use ulamot::lp::LpProblem;
use ulamot::ulam::TransitionTensor;

/// Dense copy of the constraint matrix, row-major.
pub fn dense_matrix(problem: &LpProblem) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; problem.n_columns()]; problem.n_rows()];
    for c in 0..problem.n_columns() {
        for &(r, v) in problem.column(c) {
            a[r][c] += v;
        }
    }
    a
}

/// Solves `A_S x = b` for the columns in `subset` by Gaussian elimination.
/// Returns `None` if the columns are dependent or the system is
/// inconsistent.
fn solve_subset(a: &[Vec<f64>], b: &[f64], subset: &[usize]) -> Option<Vec<f64>> {
    let m = a.len();
    let r = subset.len();
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| subset.iter().map(|&c| a[i][c]).chain(std::iter::once(b[i])).collect())
        .collect();
    let mut row = 0;
    for col in 0..r {
        let piv = (row..m).max_by(|&x, &y| t[x][col].abs().total_cmp(&t[y][col].abs()))?;
        if t[piv][col].abs() < 1e-10 {
            return None;
        }
        t.swap(row, piv);
        for i in 0..m {
            if i != row {
                let f = t[i][col] / t[row][col];
                if f != 0.0 {
                    for j in col..=r {
                        t[i][j] -= f * t[row][j];
                    }
                }
            }
        }
        row += 1;
    }
    // Remaining rows must be satisfied with zero left-hand side.
    if t[row..].iter().any(|l| l[r].abs() > 1e-9) {
        return None;
    }
    Some((0..r).map(|i| t[i][r] / t[i][i]).collect())
}

fn rank(a: &[Vec<f64>]) -> usize {
    let mut t = a.to_vec();
    let (m, n) = (t.len(), t.first().map_or(0, Vec::len));
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let piv = (row..m).max_by(|&x, &y| t[x][col].abs().total_cmp(&t[y][col].abs())).unwrap();
        if t[piv][col].abs() < 1e-10 {
            continue;
        }
        t.swap(row, piv);
        for i in row + 1..m {
            let f = t[i][col] / t[row][col];
            for j in col..n {
                t[i][j] -= f * t[row][j];
            }
        }
        row += 1;
    }
    row
}

fn for_each_subset(n: usize, r: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == r {
            f(cur);
            return;
        }
        for c in start..n {
            if n - c < r - cur.len() {
                break;
            }
            cur.push(c);
            rec(c + 1, n, r, cur, f);
            cur.pop();
        }
    }
    rec(0, n, r, &mut Vec::new(), f);
}

/// Optimal objective and a minimizing vertex over all basic feasible
/// solutions, or `None` when there is no feasible point.
///
/// Every vertex of `{x >= 0, A x = b}` is the solution of `A_S x_S = b` for
/// some set `S` of `rank(A)` independent columns, so enumerating those sets
/// finds the optimum of a bounded LP.
pub fn vertex_enumeration(problem: &LpProblem) -> Option<(f64, Vec<f64>)> {
    let a = dense_matrix(problem);
    let b = problem.rhs();
    let c = problem.objective();
    let r = rank(&a);
    let n = problem.n_columns();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_subset(n, r, &mut |s| {
        if let Some(xs) = solve_subset(&a, b, s) {
            if xs.iter().all(|&v| v >= -1e-10) {
                let mut x = vec![0.0; n];
                for (&col, &v) in s.iter().zip(&xs) {
                    x[col] = v.max(0.0);
                }
                let obj: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
                if best.as_ref().is_none_or(|(o, _)| obj < *o - 1e-12) {
                    best = Some((obj, x));
                }
            }
        }
    });
    best
}

/// All cells reachable in exactly `n` steps from `from`, by enumerating
/// every control word and every positive-probability path.
pub fn reachable_by_paths(tensor: &TransitionTensor, from: usize, n: usize) -> Vec<bool> {
    let mut hit = vec![false; tensor.n_cells()];
    fn walk(t: &TransitionTensor, cell: usize, left: usize, hit: &mut [bool]) {
        if left == 0 {
            hit[cell] = true;
            return;
        }
        for k in 0..t.n_controls() {
            for j in 0..t.n_cells() {
                if t.prob(k, cell, j) > 0.0 {
                    walk(t, j, left - 1, hit);
                }
            }
        }
    }
    walk(tensor, from, n, &mut hit);
    hit
}

/// Probability of being in `to` after applying `word` from `from`.
pub fn word_probability(tensor: &TransitionTensor, word: &[usize], from: usize, to: usize) -> f64 {
    let mut mu = vec![0.0; tensor.n_cells()];
    mu[from] = 1.0;
    for &k in word {
        mu = tensor.push(k, &mu);
    }
    mu[to]
}

/// Every control word of length `n` over `n_u` symbols.
pub fn all_words(n_u: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..n_u).map(move |k| {
                    let mut w = w.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

/// Random chain with 1..=3 nonzeros per row and dyadic probabilities, so
/// rows sum to one exactly.
pub fn random_tensor<R: Rng>(rng: &mut R, n_x: usize, n_u: usize) -> TransitionTensor {
    let ms: Vec<Vec<Vec<f64>>> = (0..n_u)
        .map(|_| {
            (0..n_x)
                .map(|_| {
                    let mut row = vec![0.0; n_x];
                    let support = rng.gen_range(1..=3.min(n_x));
                    let mut left = 8u32;
                    for s in 0..support {
                        let j = rng.gen_range(0..n_x);
                        let share = if s + 1 == support { left } else { rng.gen_range(0..=left) };
                        row[j] += share as f64 / 8.0;
                        left -= share;
                    }
                    row
                })
                .collect()
        })
        .collect();
    TransitionTensor::from_dense(&ms).unwrap()
}

/// Random chain where every (control, cell) pair has a single successor.
pub fn random_deterministic_tensor<R: Rng>(rng: &mut R, n_x: usize, n_u: usize) -> TransitionTensor {
    let ms: Vec<Vec<Vec<f64>>> = (0..n_u)
        .map(|_| {
            (0..n_x)
                .map(|_| {
                    let mut row = vec![0.0; n_x];
                    row[rng.gen_range(0..n_x)] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    TransitionTensor::from_dense(&ms).unwrap()
}

/// Random probability vector with dyadic weights on a random support.
pub fn random_measure<R: Rng>(rng: &mut R, n_x: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_x];
    let mut left = 16u32;
    let support = rng.gen_range(1..=n_x.min(3));
    for s in 0..support {
        let j = rng.gen_range(0..n_x);
        let share = if s + 1 == support { left } else { rng.gen_range(0..=left) };
        w[j] += share as f64 / 16.0;
        left -= share;
    }
    w
}
