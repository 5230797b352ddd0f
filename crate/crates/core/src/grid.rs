//! State-space partitions, discretized control sets and cell measures.
//!
//! Cells are axis-aligned boxes indexed with axis 0 varying fastest, so on a
//! 2-D grid index `i + nx * j` is column `i`, row `j`. Each cell is half-open
//! `[a, b)` on every axis except that the top face of the box is folded into
//! the last cell, which makes [`Partition::locate`] total on the closed box.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Total-mass tolerance accepted by [`Measure::new`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Rectangular decomposition of a box into `n_x` congruent cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    n_cells: usize,
}

impl Partition {
    pub fn new(lower: &[f64], upper: &[f64], resolution: &[usize]) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != resolution.len() {
            return Err(Error::DimensionMismatch(format!(
                "lower has {} axes, upper {}, resolution {}",
                lower.len(),
                upper.len(),
                resolution.len()
            )));
        }
        for (axis, &count) in resolution.iter().enumerate() {
            if count == 0 {
                return Err(Error::NonPositiveResolution { axis, count });
            }
        }
        for axis in 0..lower.len() {
            // `!(a < b)` also rejects NaN bounds.
            if !(lower[axis] < upper[axis]) || !lower[axis].is_finite() || !upper[axis].is_finite()
            {
                return Err(Error::InvertedBounds {
                    axis,
                    lower: lower[axis],
                    upper: upper[axis],
                });
            }
        }
        let n_cells = resolution
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .ok_or_else(|| Error::InvalidArgument("cell count overflows usize".into()))?;
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            resolution: resolution.to_vec(),
            n_cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Edge length of every cell along `axis`.
    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.resolution[axis] as f64
    }

    /// Lebesgue measure of a single cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.cell_width(d)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Multi-index of a cell, axis 0 first.
    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        self.resolution
            .iter()
            .map(|&r| {
                let i = rest % r;
                rest /= r;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.resolution)
            .rev()
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_cells {
            return Err(Error::InvalidCell {
                index: cell,
                n_cells: self.n_cells,
            });
        }
        Ok(())
    }

    /// Lower and upper corners of a cell.
    pub fn cell_bounds(&self, cell: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_cell(cell)?;
        let multi = self.multi_index(cell);
        let lo = (0..self.dim())
            .map(|d| self.lower[d] + multi[d] as f64 * self.cell_width(d))
            .collect();
        let hi = (0..self.dim())
            .map(|d| {
                if multi[d] + 1 == self.resolution[d] {
                    self.upper[d]
                } else {
                    self.lower[d] + (multi[d] + 1) as f64 * self.cell_width(d)
                }
            })
            .collect();
        Ok((lo, hi))
    }

    pub fn cell_center(&self, cell: usize) -> Result<Vec<f64>> {
        self.check_cell(cell)?;
        let multi = self.multi_index(cell);
        Ok((0..self.dim())
            .map(|d| self.lower[d] + (multi[d] as f64 + 0.5) * self.cell_width(d))
            .collect())
    }

    /// Index of the cell containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        self.try_locate(x).ok_or_else(|| Error::OutsideDomain { point: x.to_vec() })
    }

    /// Like [`locate`](Self::locate) but returns `None` outside the box.
    pub fn try_locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut index = 0usize;
        let mut stride = 1usize;
        for d in 0..self.dim() {
            let (lo, hi, r) = (self.lower[d], self.upper[d], self.resolution[d]);
            let v = x[d];
            if !(v >= lo && v <= hi) {
                return None;
            }
            let t = ((v - lo) / (hi - lo) * r as f64).floor();
            let i = if t < 0.0 { 0 } else { (t as usize).min(r - 1) };
            index += i * stride;
            stride *= r;
        }
        Some(index)
    }

    /// Centers of a regular `q^d` subgrid of `cell`, axis 0 varying fastest.
    pub fn quadrature_points(&self, cell: usize, q: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(q.pow(self.dim() as u32));
        self.for_each_quadrature_point(cell, q, |p| out.push(p.to_vec()))?;
        Ok(out)
    }

    /// Visits the same points as [`quadrature_points`](Self::quadrature_points)
    /// without allocating one vector per point.
    pub fn for_each_quadrature_point<F: FnMut(&[f64])>(
        &self,
        cell: usize,
        q: usize,
        mut visit: F,
    ) -> Result<()> {
        if q == 0 {
            return Err(Error::InvalidArgument("quadrature order must be at least 1".into()));
        }
        self.check_cell(cell)?;
        let dim = self.dim();
        let multi = self.multi_index(cell);
        // Per-axis subgrid coordinates, computed once.
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|d| {
                let w = self.cell_width(d);
                let lo = self.lower[d] + multi[d] as f64 * w;
                (0..q).map(|s| lo + (s as f64 + 0.5) * w / q as f64).collect()
            })
            .collect();
        let total = q.pow(dim as u32);
        let mut point = vec![0.0; dim];
        let mut sub = vec![0usize; dim];
        for _ in 0..total {
            for d in 0..dim {
                point[d] = axes[d][sub[d]];
            }
            visit(&point);
            for s in sub.iter_mut() {
                *s += 1;
                if *s < q {
                    break;
                }
                *s = 0;
            }
        }
        Ok(())
    }

    /// SHA-256 over the box bounds and resolution.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"partition");
        h.update((self.dim() as u64).to_le_bytes());
        for d in 0..self.dim() {
            h.update(self.lower[d].to_bits().to_le_bytes());
            h.update(self.upper[d].to_bits().to_le_bytes());
            h.update((self.resolution[d] as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Finite set of admissible controls inside a control box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl ControlGrid {
    /// Regular grid over `[lower, upper]` with `counts[d]` points on axis `d`.
    ///
    /// Counts of two or more include both endpoints; a count of one places the
    /// single point at the midpoint. Points are ordered with axis 0 fastest.
    pub fn regular(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "control lower has {} axes, upper {}, counts {}",
                lower.len(),
                upper.len(),
                counts.len()
            )));
        }
        let mut axes = Vec::with_capacity(counts.len());
        for (axis, &count) in counts.iter().enumerate() {
            let (lo, hi) = (lower[axis], upper[axis]);
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvertedBounds { axis, lower: lo, upper: hi });
            }
            if count == 0 {
                return Err(Error::NonPositiveResolution { axis, count });
            }
            if count >= 2 && lo == hi {
                return Err(Error::InvalidArgument(format!(
                    "control axis {axis} is degenerate but asks for {count} points"
                )));
            }
            let values: Vec<f64> = if count == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..count)
                    .map(|s| {
                        if s + 1 == count {
                            hi
                        } else {
                            lo + s as f64 * (hi - lo) / (count - 1) as f64
                        }
                    })
                    .collect()
            };
            axes.push(values);
        }
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut sub = vec![0usize; counts.len()];
        for _ in 0..total {
            points.push(sub.iter().enumerate().map(|(d, &s)| axes[d][s]).collect());
            for (d, s) in sub.iter_mut().enumerate() {
                *s += 1;
                if *s < counts[d] {
                    break;
                }
                *s = 0;
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            points,
        })
    }

    /// Explicit control points; each must lie in the box and be distinct.
    pub fn from_points(lower: &[f64], upper: &[f64], points: Vec<Vec<f64>>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("control box bounds".into()));
        }
        for axis in 0..lower.len() {
            if !(lower[axis] <= upper[axis]) {
                return Err(Error::InvertedBounds {
                    axis,
                    lower: lower[axis],
                    upper: upper[axis],
                });
            }
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("control grid is empty".into()));
        }
        for (k, p) in points.iter().enumerate() {
            if p.len() != lower.len() {
                return Err(Error::DimensionMismatch(format!("control {k} has {} components", p.len())));
            }
            if p.iter().zip(lower.iter().zip(upper)).any(|(&v, (&lo, &hi))| !(v >= lo && v <= hi)) {
                return Err(Error::InvalidArgument(format!("control {k} = {p:?} lies outside the control box")));
            }
            if points[..k].contains(p) {
                return Err(Error::InvalidArgument(format!("control {k} = {p:?} is duplicated")));
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// A copy without control `k`.
    pub fn without(&self, k: usize) -> Result<Self> {
        let points: Vec<_> = self
            .points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, p)| p.clone())
            .collect();
        Self::from_points(&self.lower, &self.upper, points)
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"controls");
        h.update((self.dim() as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for p in &self.points {
            for v in p {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Probability vector over the cells of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("no cells".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!("cell {i} has weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights)
    }

    pub fn dirac(n_cells: usize, cell: usize) -> Result<Self> {
        if cell >= n_cells {
            return Err(Error::InvalidCell { index: cell, n_cells });
        }
        let mut weights = vec![0.0; n_cells];
        weights[cell] = 1.0;
        Ok(Self { weights })
    }

    pub fn uniform(n_cells: usize) -> Result<Self> {
        Self::normalized(vec![1.0; n_cells])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Cells carrying more than `threshold` mass.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Half the 1-norm distance.
    pub fn total_variation(&self, other: &Measure) -> f64 {
        0.5 * l1_distance(&self.weights, &other.weights)
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
