//! Discrete reachable sets of the controlled chain and the support-inclusion
//! test used to gate the transport LP.
//!
//! Cell `j` is reachable from cell `i` in `n` steps when some control word of
//! length `n` gives a path `i -> ... -> j` with positive probability. When the
//! target support lies in the `N`-step reachable set of every initial support
//! cell the transport LP is feasible; the converse does not hold.

use crate::grid::Measure;
use crate::par::{map_indexed, Execution};
use crate::ulam::TransitionTensor;

/// Default support threshold on floating-point masses.
pub const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReachMode {
    /// Reachable in exactly `n` steps.
    #[default]
    Exact,
    /// Reachable in at most `n` steps.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            m.set(i, i);
        }
        m
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Columns set in row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Union over controls of the one-step support graph, as sorted successor lists.
pub fn successor_lists(tensor: &TransitionTensor) -> Vec<Vec<usize>> {
    (0..tensor.n_cells())
        .map(|i| {
            let mut s: Vec<usize> = tensor
                .matrices()
                .iter()
                .flat_map(|m| m.row(i).filter(|&(_, p)| p > 0.0).map(|(j, _)| j))
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect()
}

/// Relations `reach_0, ..., reach_N` on cell indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilitySets {
    mode: ReachMode,
    steps: Vec<BitMatrix>,
}

impl ReachabilitySets {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn mode(&self) -> ReachMode {
        self.mode
    }

    pub fn at(&self, n: usize) -> &BitMatrix {
        &self.steps[n]
    }

    pub fn reachable(&self, n: usize, from: usize, to: usize) -> bool {
        self.steps[n].get(from, to)
    }

    /// A control word and cell path realizing `reach_n(from, to)` with
    /// positive probability, or `None` if the pair is unreachable.
    ///
    /// Only defined for [`ReachMode::Exact`] sets.
    pub fn witness(&self, tensor: &TransitionTensor, n: usize, from: usize, to: usize) -> Option<Witness> {
        assert_eq!(self.mode, ReachMode::Exact, "witnesses need exact-step sets");
        if !self.reachable(n, from, to) {
            return None;
        }
        let mut cells = vec![to];
        let mut controls = Vec::with_capacity(n);
        let mut current = to;
        for step in (0..n).rev() {
            // Some predecessor reachable in `step` steps must feed `current`.
            let (m, k) = self.steps[step].row(from).find_map(|m| {
                (0..tensor.n_controls())
                    .find(|&k| tensor.prob(k, m, current) > 0.0)
                    .map(|k| (m, k))
            })?;
            cells.push(m);
            controls.push(k);
            current = m;
        }
        cells.reverse();
        controls.reverse();
        Some(Witness { controls, cells })
    }
}

/// Positive-probability path `cells[0] -> ... -> cells[n]` under `controls`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub controls: Vec<usize>,
    pub cells: Vec<usize>,
}

pub fn reachable_sets(
    tensor: &TransitionTensor,
    horizon: usize,
    mode: ReachMode,
    exec: Execution,
) -> ReachabilitySets {
    let n = tensor.n_cells();
    let succ = successor_lists(tensor);
    let mut steps = vec![BitMatrix::identity(n)];
    for _ in 0..horizon {
        let prev = steps.last().unwrap();
        let rows: Vec<Vec<u64>> = map_indexed(exec, n, |i| {
            let mut row = vec![0u64; prev.words];
            if mode == ReachMode::Cumulative {
                row.copy_from_slice(prev.row_words(i));
            }
            for m in prev.row(i) {
                for &j in &succ[m] {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
            row
        });
        let mut next = BitMatrix::new(n);
        for (i, r) in rows.into_iter().enumerate() {
            next.bits[i * next.words..(i + 1) * next.words].copy_from_slice(&r);
        }
        steps.push(next);
    }
    ReachabilitySets { mode, steps }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    /// `(initial cell, target cell)` pairs that are not connected.
    Violated(Vec<(usize, usize)>),
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied)
    }
}

/// Checks that every target cell carrying more than `eps` mass is reachable
/// at the horizon from every initial cell carrying more than `eps` mass.
pub fn check_sufficient_condition(
    sets: &ReachabilitySets,
    mu0: &Measure,
    muf: &Measure,
    eps: f64,
) -> Verdict {
    let n = sets.horizon();
    let targets = muf.support(eps);
    let mut bad = Vec::new();
    for i in mu0.support(eps) {
        for &j in &targets {
            if !sets.reachable(n, i, j) {
                bad.push((i, j));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Satisfied
    } else {
        Verdict::Violated(bad)
    }
}

/// Cells that can carry mass at each step `0..=horizon` when starting from
/// `sources`.
pub fn forward_occupancy(succ: &[Vec<usize>], sources: &[usize], horizon: usize) -> Vec<Vec<bool>> {
    let n = succ.len();
    let mut layers = Vec::with_capacity(horizon + 1);
    let mut cur = vec![false; n];
    for &s in sources {
        cur[s] = true;
    }
    layers.push(cur.clone());
    for _ in 0..horizon {
        let mut next = vec![false; n];
        for (i, _) in cur.iter().enumerate().filter(|(_, &b)| b) {
            for &j in &succ[i] {
                next[j] = true;
            }
        }
        layers.push(next.clone());
        cur = next;
    }
    layers
}

/// `layers[n][i]` is true when every positive-probability continuation from
/// cell `i` at step `n` can still be driven into `targets` at `horizon`, i.e.
/// some control keeps all of its successors inside `layers[n + 1]`.
pub fn backward_viability(tensor: &TransitionTensor, targets: &[usize], horizon: usize) -> Vec<Vec<bool>> {
    let n = tensor.n_cells();
    let mut layers = vec![vec![false; n]; horizon + 1];
    for &t in targets {
        layers[horizon][t] = true;
    }
    for step in (0..horizon).rev() {
        let (head, tail) = layers.split_at_mut(step + 1);
        let next = &tail[0];
        let cur = &mut head[step];
        for (i, c) in cur.iter_mut().enumerate() {
            *c = tensor
                .matrices()
                .iter()
                .any(|m| m.row(i).all(|(j, p)| p == 0.0 || next[j]));
        }
    }
    layers
}
