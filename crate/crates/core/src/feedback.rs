//! Stochastic feedback laws, closed-loop propagation and agent rollouts.
//!
//! A law assigns each occupied cell a distribution over controls,
//! `lambda_n^{k,i} = nu_n^{k,i} / mu_n^i`. Cells whose mass is at most
//! `eps_mass` are masked out and carry an all-zero row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ControlGrid, Measure, Partition};
use crate::lp::TransportSolution;
use crate::par::{map_indexed, Execution};
use crate::systems::SystemMap;
use crate::ulam::{CostTable, TransitionTensor};

pub const DEFAULT_EPS_MASS: f64 = 1e-12;
/// Default `debris_limit` of [`propagate`].
pub const DEFAULT_DEBRIS_LIMIT: f64 = 1e-9;

/// Per-step control distributions, `probs[n][k * n_cells + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    n_cells: usize,
    n_controls: usize,
    probs: Vec<Vec<f64>>,
    defined: Vec<Vec<bool>>,
}

impl FeedbackLaw {
    /// Builds a law from explicit rows; each defined row must be a distribution.
    pub fn from_rows(n_cells: usize, n_controls: usize, steps: Vec<Vec<Option<Vec<f64>>>>) -> Result<Self> {
        let mut probs = Vec::with_capacity(steps.len());
        let mut defined = Vec::with_capacity(steps.len());
        for (n, rows) in steps.into_iter().enumerate() {
            if rows.len() != n_cells {
                return Err(Error::DimensionMismatch(format!("step {n} has {} cells", rows.len())));
            }
            let mut p = vec![0.0; n_cells * n_controls];
            let mut d = vec![false; n_cells];
            for (i, row) in rows.into_iter().enumerate() {
                if let Some(row) = row {
                    if row.len() != n_controls || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::InvalidArgument(format!("step {n} cell {i}: bad row {row:?}")));
                    }
                    if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidArgument(format!("step {n} cell {i}: row does not sum to 1")));
                    }
                    for (k, v) in row.into_iter().enumerate() {
                        p[k * n_cells + i] = v;
                    }
                    d[i] = true;
                }
            }
            probs.push(p);
            defined.push(d);
        }
        Ok(Self {
            n_cells,
            n_controls,
            probs,
            defined,
        })
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn prob(&self, step: usize, control: usize, cell: usize) -> f64 {
        self.probs[step][control * self.n_cells + cell]
    }

    pub fn is_defined(&self, step: usize, cell: usize) -> bool {
        self.defined[step][cell]
    }

    /// Control distribution of one cell at one step.
    pub fn row(&self, step: usize, cell: usize) -> Vec<f64> {
        (0..self.n_controls).map(|k| self.prob(step, k, cell)).collect()
    }

    /// Largest `|sum_k lambda - 1|` over defined rows.
    pub fn max_row_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.horizon() {
            for i in 0..self.n_cells {
                if self.defined[n][i] {
                    let s: f64 = (0..self.n_controls).map(|k| self.prob(n, k, i)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }

    /// Draws a control index by inverse CDF over the fixed control order.
    /// `None` for masked-out cells.
    pub fn sample<R: Rng + ?Sized>(&self, step: usize, cell: usize, rng: &mut R) -> Option<usize> {
        if !self.defined[step][cell] {
            return None;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for k in 0..self.n_controls {
            let p = self.prob(step, k, cell);
            if p > 0.0 {
                acc += p;
                last = k;
                if u < acc {
                    return Some(k);
                }
            }
        }
        // Rounding left u just above the accumulated total.
        Some(last)
    }

    /// `step,cell,control,probability` rows for every positive entry.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,cell,control,probability")?;
        for n in 0..self.horizon() {
            for i in 0..self.n_cells {
                for k in 0..self.n_controls {
                    let p = self.prob(n, k, i);
                    if p > 0.0 {
                        writeln!(w, "{n},{i},{k},{p}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Recovers `lambda = nu / mu` from an LP solution.
///
/// The ratio is taken against the marginal `sum_k nu_n^{k,i}`, which equals
/// the solution's `mu_n^i` up to the marginal residual, so every defined row
/// is a distribution to rounding accuracy.
pub fn extract_feedback(solution: &TransportSolution, eps_mass: f64) -> FeedbackLaw {
    let (n_x, n_u) = (solution.n_cells(), solution.n_controls());
    let mut probs = Vec::with_capacity(solution.horizon());
    let mut defined = Vec::with_capacity(solution.horizon());
    for n in 0..solution.horizon() {
        let mu = solution.measure(n);
        let nu = solution.joint_step(n);
        let mut p = vec![0.0; n_u * n_x];
        let mut d = vec![false; n_x];
        for i in 0..n_x {
            if mu[i] <= eps_mass {
                continue;
            }
            let total: f64 = (0..n_u).map(|k| nu[k * n_x + i]).sum();
            if total <= 0.0 {
                continue;
            }
            for k in 0..n_u {
                p[k * n_x + i] = nu[k * n_x + i] / total;
            }
            d[i] = true;
        }
        probs.push(p);
        defined.push(d);
    }
    FeedbackLaw {
        n_cells: n_x,
        n_controls: n_u,
        probs,
        defined,
    }
}

/// Closed-loop measure sequence and accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub measures: Vec<Vec<f64>>,
    pub step_costs: Vec<f64>,
    pub total_cost: f64,
    /// Debris found on masked-out cells and held in place, summed over steps.
    pub held_mass: f64,
}

impl Trajectory {
    /// Largest `|sum_i mu_n^i - 1|` along the trajectory.
    pub fn max_mass_defect(&self) -> f64 {
        self.measures
            .iter()
            .map(|m| (m.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One row per step, one `cell_<i>` column per cell.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_measures_csv(&self.measures, w)
    }
}

pub fn write_measures_csv<W: std::io::Write>(measures: &[Vec<f64>], mut w: W) -> Result<()> {
    let n_x = measures.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..n_x).map(|i| format!("cell_{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (n, m) in measures.iter().enumerate() {
        let mut line = n.to_string();
        for v in m {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Evolves `mu0` through the closed-loop chain
/// `mu_{n+1}^j = sum_{k,i} p_ij^k lambda_n^{k,i} mu_n^i`.
///
/// Mass on a masked-out cell is an error when it exceeds `debris_limit`;
/// smaller amounts are rounding debris and stay where they are. The LP
/// solution is only consistent to its residuals, so a cell the law masks
/// (LP mass at most `eps_mass`) can receive slightly more than `eps_mass`
/// here; the limit should therefore sit at the agreement tolerance rather
/// than at `eps_mass`.
pub fn propagate(
    tensor: &TransitionTensor,
    law: &FeedbackLaw,
    mu0: &Measure,
    costs: &CostTable,
    debris_limit: f64,
) -> Result<Trajectory> {
    let (n_x, n_u) = (tensor.n_cells(), tensor.n_controls());
    if law.n_cells != n_x || law.n_controls != n_u || mu0.len() != n_x {
        return Err(Error::DimensionMismatch("law, tensor and measure disagree".into()));
    }
    if costs.n_cells() != n_x || costs.n_controls() != n_u {
        return Err(Error::DimensionMismatch("cost table does not match tensor".into()));
    }
    let mut measures = vec![mu0.weights().to_vec()];
    let mut step_costs = Vec::with_capacity(law.horizon());
    let mut held_mass = 0.0;
    for n in 0..law.horizon() {
        let mu = measures.last().unwrap();
        let mut next = vec![0.0; n_x];
        let mut cost = 0.0;
        let mut joint = vec![0.0; n_x];
        for i in 0..n_x {
            if mu[i] != 0.0 && !law.defined[n][i] {
                if mu[i] > debris_limit {
                    return Err(Error::UndefinedLaw {
                        step: n,
                        cell: i,
                        mass: mu[i],
                    });
                }
                next[i] += mu[i];
                held_mass += mu[i];
            }
        }
        for k in 0..n_u {
            for i in 0..n_x {
                let lam = law.probs[n][k * n_x + i];
                joint[i] = lam * mu[i];
                cost += costs.get(i, k) * joint[i];
            }
            tensor.matrix(k).accumulate_transpose(&joint, &mut next);
        }
        step_costs.push(cost);
        measures.push(next);
    }
    let total_cost = step_costs.iter().sum();
    Ok(Trajectory {
        measures,
        step_costs,
        total_cost,
        held_mass,
    })
}

/// How rollout agents draw their initial states.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSampler {
    /// Every agent starts at the same point.
    Point(Vec<f64>),
    /// Cell drawn from the measure, then a uniform point inside it.
    CellUniform(Measure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub agents: usize,
    /// Agents per final cell.
    pub final_counts: Vec<u64>,
    /// Agents that visited a masked-out cell at least once.
    pub flagged: u64,
    /// Full state paths of the first few agents.
    pub paths: Vec<Vec<Vec<f64>>>,
}

impl RolloutResult {
    pub fn empirical(&self) -> Vec<f64> {
        self.final_counts
            .iter()
            .map(|&c| c as f64 / self.agents as f64)
            .collect()
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.flagged as f64 / self.agents as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# agents={} flagged={}", self.agents, self.flagged)?;
        writeln!(w, "cell,count,fraction")?;
        for (i, &c) in self.final_counts.iter().enumerate() {
            writeln!(w, "{i},{c},{}", c as f64 / self.agents as f64)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RolloutOptions {
    pub agents: usize,
    pub seed: u64,
    /// Number of agent paths to keep in the result.
    pub keep_paths: usize,
    pub exec: Execution,
}

struct AgentOutcome {
    final_cell: usize,
    flagged: bool,
    path: Option<Vec<Vec<f64>>>,
}

/// Simulates agents on the original map under the cell-wise law.
///
/// Agent `a` draws from its own ChaCha stream `(seed, a)`, so results do not
/// depend on thread count. Agents on masked-out cells pick a control
/// uniformly and are flagged.
pub fn rollout(
    system: &dyn SystemMap,
    partition: &Partition,
    controls: &ControlGrid,
    law: &FeedbackLaw,
    sampler: &InitialSampler,
    opts: &RolloutOptions,
) -> Result<RolloutResult> {
    if opts.agents == 0 {
        return Err(Error::InvalidArgument("at least one agent is required".into()));
    }
    if law.n_cells != partition.n_cells() || law.n_controls != controls.len() {
        return Err(Error::DimensionMismatch("law does not match the grid".into()));
    }
    let cumulative: Option<Vec<f64>> = match sampler {
        InitialSampler::Point(x) => {
            partition.locate(x)?;
            None
        }
        InitialSampler::CellUniform(m) => {
            if m.len() != partition.n_cells() {
                return Err(Error::DimensionMismatch("initial measure does not match the grid".into()));
            }
            let mut acc = 0.0;
            Some(m.weights().iter().map(|w| { acc += w; acc }).collect())
        }
    };
    let d = partition.dim();
    let outcomes: Vec<Result<AgentOutcome>> = map_indexed(opts.exec, opts.agents, |a| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(a as u64);
        let mut x = match (sampler, &cumulative) {
            (InitialSampler::Point(p), _) => p.clone(),
            (InitialSampler::CellUniform(_), Some(cdf)) => {
                let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
                let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let (lo, hi) = partition.cell_bounds(cell)?;
                (0..d).map(|k| lo[k] + rng.gen::<f64>() * (hi[k] - lo[k])).collect()
            }
            _ => unreachable!(),
        };
        let keep = a < opts.keep_paths;
        let mut path = keep.then(|| vec![x.clone()]);
        let mut flagged = false;
        let mut next = vec![0.0; d];
        for n in 0..law.horizon() {
            let cell = partition.locate(&x)?;
            let k = match law.sample(n, cell, &mut rng) {
                Some(k) => k,
                None => {
                    flagged = true;
                    rng.gen_range(0..controls.len())
                }
            };
            system.step_into(&x, controls.point(k), &mut next);
            std::mem::swap(&mut x, &mut next);
            if let Some(p) = path.as_mut() {
                p.push(x.clone());
            }
        }
        Ok(AgentOutcome {
            final_cell: partition.locate(&x)?,
            flagged,
            path,
        })
    });
    let mut final_counts = vec![0u64; partition.n_cells()];
    let mut flagged = 0;
    let mut paths = Vec::new();
    for o in outcomes {
        let o = o?;
        final_counts[o.final_cell] += 1;
        flagged += o.flagged as u64;
        if let Some(p) = o.path {
            paths.push(p);
        }
    }
    Ok(RolloutResult {
        agents: opts.agents,
        final_counts,
        flagged,
        paths,
    })
}
