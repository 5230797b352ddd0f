//! Controlled Ulam-Galerkin transition tensor and discretized stage costs.
//!
//! For every cell `i` and control `k` the quadrature points of cell `i` are
//! pushed through `T(., u_k)` and the fraction landing in each cell `j`
//! becomes `P^k[i][j]`. Because the maps are total on the box every image is
//! located, so each row sums to one.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::grid::{ControlGrid, Partition};
use crate::par::{map_indexed, Execution};
use crate::systems::SystemMap;

const TENSOR_MAGIC: &[u8; 8] = b"ULAMTNS1";

/// Row-compressed sparse matrix of transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    fn from_rows(n: usize, rows: impl IntoIterator<Item = Vec<(u32, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, p) in row {
                cols.push(j);
                vals.push(p);
            }
            row_ptr.push(cols.len());
        }
        assert_eq!(row_ptr.len(), n + 1, "row count mismatch");
        Self { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i as u32, 1.0)]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero `(column, probability)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&j, &p)| (j as usize, p))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.vals[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, p)| p).sum()
    }

    /// `out[j] += sum_i weights[i] * P[i][j]`.
    pub fn accumulate_transpose(&self, weights: &[f64], out: &mut [f64]) {
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for (j, p) in self.row(i) {
                    out[j] += w * p;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut r = vec![0.0; self.n];
                for (j, p) in self.row(i) {
                    r[j] = p;
                }
                r
            })
            .collect()
    }
}

/// One row-stochastic matrix per control.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    n_cells: usize,
    matrices: Vec<SparseMatrix>,
    quadrature_order: usize,
    partition_hash: [u8; 32],
    controls_hash: [u8; 32],
}

impl TransitionTensor {
    /// Assembles a tensor from explicit dense matrices, one per control.
    /// Useful for hand-built chains; entries must form stochastic rows.
    pub fn from_dense(matrices: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = matrices.first().map(|m| m.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidArgument("empty tensor".into()));
        }
        let mut sparse = Vec::with_capacity(matrices.len());
        for (k, m) in matrices.iter().enumerate() {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!("matrix {k} is not {n}x{n}")));
            }
            for (i, r) in m.iter().enumerate() {
                if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidArgument(format!("matrix {k} row {i} has entries outside [0, 1]")));
                }
                let s: f64 = r.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("matrix {k} row {i} sums to {s}")));
                }
            }
            sparse.push(SparseMatrix::from_rows(
                n,
                m.iter().map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(j, &p)| (j as u32, p))
                        .collect()
                }),
            ));
        }
        Ok(Self {
            n_cells: n,
            matrices: sparse,
            quadrature_order: 0,
            partition_hash: [0; 32],
            controls_hash: [0; 32],
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_controls(&self) -> usize {
        self.matrices.len()
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn partition_hash(&self) -> &[u8; 32] {
        &self.partition_hash
    }

    pub fn controls_hash(&self) -> &[u8; 32] {
        &self.controls_hash
    }

    pub fn matrix(&self, k: usize) -> &SparseMatrix {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[SparseMatrix] {
        &self.matrices
    }

    pub fn prob(&self, k: usize, i: usize, j: usize) -> f64 {
        self.matrices[k].get(i, j)
    }

    pub fn nnz(&self) -> usize {
        self.matrices.iter().map(SparseMatrix::nnz).sum()
    }

    /// One chain step of `mu` under the constant control `k`.
    pub fn push(&self, k: usize, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cells];
        self.matrices[k].accumulate_transpose(mu, &mut out);
        out
    }

    /// Largest `|row sum - 1|` over all rows of all controls.
    pub fn max_row_defect(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| (0..m.dim()).map(move |i| (m.row_sum(i) - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// Copy restricted to a subset of controls, in the given order.
    pub fn select_controls(&self, keep: &[usize]) -> Self {
        Self {
            matrices: keep.iter().map(|&k| self.matrices[k].clone()).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            n_cells: self.n_cells,
            matrices: Vec::new(),
            quadrature_order: self.quadrature_order,
            partition_hash: self.partition_hash,
            controls_hash: self.controls_hash,
        }
    }

    /// Little-endian binary: magic, `n_x`, `n_u`, `q`, the two SHA-256
    /// fingerprints, then per control `nnz` followed by `(i, j, p)` triplets.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_u64::<LittleEndian>(self.n_cells as u64)?;
        w.write_u64::<LittleEndian>(self.n_controls() as u64)?;
        w.write_u64::<LittleEndian>(self.quadrature_order as u64)?;
        w.write_all(&self.partition_hash)?;
        w.write_all(&self.controls_hash)?;
        for m in &self.matrices {
            w.write_u64::<LittleEndian>(m.nnz() as u64)?;
            for i in 0..m.dim() {
                for (j, p) in m.row(i) {
                    w.write_u64::<LittleEndian>(i as u64)?;
                    w.write_u64::<LittleEndian>(j as u64)?;
                    w.write_f64::<LittleEndian>(p)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let n_cells = r.read_u64::<LittleEndian>()? as usize;
        let n_controls = r.read_u64::<LittleEndian>()? as usize;
        let quadrature_order = r.read_u64::<LittleEndian>()? as usize;
        let mut partition_hash = [0u8; 32];
        let mut controls_hash = [0u8; 32];
        r.read_exact(&mut partition_hash)?;
        r.read_exact(&mut controls_hash)?;
        if n_cells == 0 || n_cells > u32::MAX as usize {
            return Err(Error::Format(format!("invalid cell count {n_cells}")));
        }
        let mut matrices = Vec::with_capacity(n_controls);
        for k in 0..n_controls {
            let nnz = r.read_u64::<LittleEndian>()? as usize;
            let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_cells];
            let mut last: Option<(usize, usize)> = None;
            for _ in 0..nnz {
                let i = r.read_u64::<LittleEndian>()? as usize;
                let j = r.read_u64::<LittleEndian>()? as usize;
                let p = r.read_f64::<LittleEndian>()?;
                if i >= n_cells || j >= n_cells {
                    return Err(Error::Format(format!("control {k}: index ({i}, {j}) out of range")));
                }
                if last.is_some_and(|prev| prev >= (i, j)) {
                    return Err(Error::Format(format!("control {k}: triplets not sorted")));
                }
                last = Some((i, j));
                rows[i].push((j as u32, p));
            }
            matrices.push(SparseMatrix::from_rows(n_cells, rows));
        }
        Ok(Self {
            n_cells,
            matrices,
            quadrature_order,
            partition_hash,
            controls_hash,
        })
    }

    /// Human-readable `control,row,col,probability` listing.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "control,row,col,probability")?;
        for (k, m) in self.matrices.iter().enumerate() {
            for i in 0..m.dim() {
                for (j, p) in m.row(i) {
                    writeln!(w, "{k},{i},{j},{p}")?;
                }
            }
        }
        Ok(())
    }
}

/// Pushes the quadrature points of every cell through every control.
pub fn build_tensor(
    system: &dyn SystemMap,
    partition: &Partition,
    controls: &ControlGrid,
    q: usize,
    exec: Execution,
) -> Result<TransitionTensor> {
    if q == 0 {
        return Err(Error::InvalidArgument("quadrature order must be at least 1".into()));
    }
    if system.state_dim() != partition.dim() {
        return Err(Error::DimensionMismatch(format!(
            "system state has {} components, partition {}",
            system.state_dim(),
            partition.dim()
        )));
    }
    if system.control_dim() != controls.dim() {
        return Err(Error::DimensionMismatch(format!(
            "system takes {} control components, grid has {}",
            system.control_dim(),
            controls.dim()
        )));
    }
    let n = partition.n_cells();
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many cells".into()));
    }
    let n_u = controls.len();
    let d = partition.dim();
    let per_cell = q.pow(d as u32);

    let cell_rows: Vec<Result<Vec<Vec<(u32, f64)>>>> = map_indexed(exec, n, |i| {
        let mut hits: Vec<Vec<u32>> = vec![Vec::with_capacity(per_cell); n_u];
        let mut images = vec![0.0; n_u * d];
        let mut failure = None;
        partition.for_each_quadrature_point(i, q, |x| {
            if failure.is_some() {
                return;
            }
            system.step_all_into(x, controls.points(), &mut images);
            for (k, img) in images.chunks_exact(d).enumerate() {
                match partition.try_locate(img) {
                    Some(j) => hits[k].push(j as u32),
                    None => {
                        failure = Some(Error::OutsideDomain { point: img.to_vec() });
                        return;
                    }
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(hits
            .into_iter()
            .map(|mut h| {
                h.sort_unstable();
                let mut row: Vec<(u32, f64)> = Vec::new();
                let mut start = 0;
                while start < h.len() {
                    let j = h[start];
                    let end = start + h[start..].partition_point(|&c| c == j);
                    row.push((j, (end - start) as f64 / per_cell as f64));
                    start = end;
                }
                row
            })
            .collect())
    });

    let mut per_control: Vec<Vec<Vec<(u32, f64)>>> = (0..n_u).map(|_| Vec::with_capacity(n)).collect();
    for rows in cell_rows {
        for (k, row) in rows?.into_iter().enumerate() {
            per_control[k].push(row);
        }
    }
    Ok(TransitionTensor {
        n_cells: n,
        matrices: per_control
            .into_iter()
            .map(|rows| SparseMatrix::from_rows(n, rows))
            .collect(),
        quadrature_order: q,
        partition_hash: partition.fingerprint(),
        controls_hash: controls.fingerprint(),
    })
}

/// Largest entrywise difference between two tensors on the same grid, e.g.
/// the same system discretized at quadrature orders `q` and `2q`.
pub fn max_entry_difference(a: &TransitionTensor, b: &TransitionTensor) -> Result<f64> {
    if a.n_cells != b.n_cells || a.n_controls() != b.n_controls() {
        return Err(Error::DimensionMismatch("tensor shapes differ".into()));
    }
    let mut worst: f64 = 0.0;
    for (ma, mb) in a.matrices.iter().zip(&b.matrices) {
        for i in 0..a.n_cells {
            let mut merged: Vec<(usize, f64)> = ma.row(i).collect();
            for (j, p) in mb.row(i) {
                match merged.iter_mut().find(|(c, _)| *c == j) {
                    Some(e) => e.1 -= p,
                    None => merged.push((j, -p)),
                }
            }
            worst = merged.iter().fold(worst, |w, &(_, v)| w.max(v.abs()));
        }
    }
    Ok(worst)
}

/// Stage cost `c(x, u)`.
pub trait StageCost: Sync {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64;
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> StageCost for F {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self(x, u)
    }
}

/// `c(x, u) = |x|^2 + |u|^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticCost;

impl StageCost for QuadraticCost {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        x.iter().chain(u).map(|v| v * v).sum()
    }
}

/// How the per-cell integral of the stage cost is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostScaling {
    /// `int_{cell} c(x, u) dx`.
    #[default]
    Integral,
    /// The integral divided by the cell volume.
    Average,
}

/// `n_x x n_u` table of discretized stage costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    n_cells: usize,
    n_controls: usize,
    values: Vec<f64>,
}

impl CostTable {
    /// Row-major `values[i * n_controls + k]`.
    pub fn from_values(n_cells: usize, n_controls: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cells * n_controls {
            return Err(Error::DimensionMismatch(format!(
                "cost table has {} entries, expected {}",
                values.len(),
                n_cells * n_controls
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite cost".into()));
        }
        Ok(Self {
            n_cells,
            n_controls,
            values,
        })
    }

    pub fn zeros(n_cells: usize, n_controls: usize) -> Self {
        Self {
            n_cells,
            n_controls,
            values: vec![0.0; n_cells * n_controls],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn get(&self, cell: usize, control: usize) -> f64 {
        self.values[cell * self.n_controls + control]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }
}

/// Midpoint-rule estimate of `int_{cell i} c(x, u_k) dx` for every pair.
pub fn build_cost_table(
    partition: &Partition,
    controls: &ControlGrid,
    cost: &dyn StageCost,
    q: usize,
    scaling: CostScaling,
    exec: Execution,
) -> Result<CostTable> {
    if q == 0 {
        return Err(Error::InvalidArgument("quadrature order must be at least 1".into()));
    }
    let n_u = controls.len();
    let volume = match scaling {
        CostScaling::Integral => partition.cell_volume(),
        CostScaling::Average => 1.0,
    };
    let rows: Vec<Result<Vec<f64>>> = map_indexed(exec, partition.n_cells(), |i| {
        let mut sums = vec![0.0; n_u];
        let mut count = 0usize;
        partition.for_each_quadrature_point(i, q, |x| {
            for (k, s) in sums.iter_mut().enumerate() {
                *s += cost.eval(x, controls.point(k));
            }
            count += 1;
        })?;
        Ok(sums.into_iter().map(|s| volume * (s / count as f64)).collect())
    });
    let mut values = Vec::with_capacity(partition.n_cells() * n_u);
    for r in rows {
        values.extend(r?);
    }
    CostTable::from_values(partition.n_cells(), n_u, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{DoubleIntegrator, StateBox, Translation};

    fn line(n: usize) -> Partition {
        Partition::new(&[0.0], &[1.0], &[n]).unwrap()
    }

    #[test]
    fn identity_dynamics_give_identity() {
        for (res, q) in [(vec![5], 1), (vec![3, 4], 3), (vec![2, 2, 2], 2)] {
            let d = res.len();
            let p = Partition::new(&vec![0.0; d], &vec![1.0; d], &res).unwrap();
            let sys = Translation::new(StateBox::new(vec![0.0; d], vec![1.0; d]).unwrap(), true);
            let u = ControlGrid::regular(&vec![0.0; d], &vec![0.0; d], &vec![1; d]).unwrap();
            let t = build_tensor(&sys, &p, &u, q, Execution::Sequential).unwrap();
            assert_eq!(t.matrix(0), &SparseMatrix::identity(p.n_cells()));
        }
    }

    #[test]
    fn one_cell_shift_with_clamped_last_row() {
        let p = line(4);
        let sys = Translation::new(StateBox::new(vec![0.0], vec![1.0]).unwrap(), true);
        let u = ControlGrid::from_points(&[0.0], &[0.25], vec![vec![0.25]]).unwrap();
        let t = build_tensor(&sys, &p, &u, 64, Execution::Sequential).unwrap();
        // Brute force: count images of the 64 subcell midpoints directly.
        for i in 0..4 {
            let mut counts = [0usize; 4];
            for s in 0..64 {
                let x = (i as f64 + (s as f64 + 0.5) / 64.0) * 0.25;
                let y = if x + 0.25 <= 1.0 { x + 0.25 } else { x };
                counts[((y * 4.0).floor() as usize).min(3)] += 1;
            }
            for j in 0..4 {
                assert_eq!(t.prob(0, i, j), counts[j] as f64 / 64.0);
            }
        }
        assert_eq!(t.prob(0, 0, 1), 1.0);
        assert_eq!(t.prob(0, 2, 3), 1.0);
        assert_eq!(t.prob(0, 3, 3), 1.0);
    }

    #[test]
    fn slow_drift_rows_are_unit_vectors() {
        // 2x2 cells: images of the right column either stay in it or leave
        // the box and are held, so those rows are unit vectors.
        let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[2, 2]).unwrap();
        let sys = DoubleIntegrator::new(StateBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap(), true).unwrap();
        let u = ControlGrid::regular(&[0.0], &[0.0], &[1]).unwrap();
        let q = 4;
        let t = build_tensor(&sys, &p, &u, q, Execution::Sequential).unwrap();
        for i in 0..4 {
            let images: std::collections::BTreeSet<usize> = p
                .quadrature_points(i, q)
                .unwrap()
                .iter()
                .map(|x| p.locate(&sys.step(x, &[0.0])).unwrap())
                .collect();
            if images.len() == 1 {
                let j = *images.iter().next().unwrap();
                assert_eq!(t.prob(0, i, j), 1.0);
            }
        }
        assert_eq!(t.prob(0, 1, 1), 1.0);
        assert_eq!(t.prob(0, 3, 3), 1.0);
        assert!(t.prob(0, 0, 0) < 1.0);
    }

    #[test]
    fn unclamped_escape_is_an_error() {
        let p = line(4);
        let sys = Translation::new(StateBox::new(vec![0.0], vec![1.0]).unwrap(), false);
        let u = ControlGrid::from_points(&[0.0], &[0.5], vec![vec![0.5]]).unwrap();
        assert!(matches!(
            build_tensor(&sys, &p, &u, 2, Execution::Sequential),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[9, 7]).unwrap();
        let sys = DoubleIntegrator::new(StateBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap(), true).unwrap();
        let u = ControlGrid::regular(&[-0.25], &[0.25], &[5]).unwrap();
        let a = build_tensor(&sys, &p, &u, 5, Execution::Sequential).unwrap();
        let b = build_tensor(&sys, &p, &u, 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.max_row_defect() <= 1e-12);
    }

    #[test]
    fn binary_round_trip_and_text() {
        let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
        let sys = DoubleIntegrator::new(StateBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap(), true).unwrap();
        let u = ControlGrid::regular(&[-0.25], &[0.25], &[3]).unwrap();
        let t = build_tensor(&sys, &p, &u, 3, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"ULAMTNS1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 16);
        let back = TransitionTensor::read_binary(&buf[..]).unwrap();
        assert_eq!(back, t);

        let mut text = Vec::new();
        t.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 1 + t.nnz());

        buf[3] = b'X';
        assert!(TransitionTensor::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn quadratic_cost_on_unit_square() {
        let p = Partition::new(&[0.0, 0.0], &[1.0, 1.0], &[1, 1]).unwrap();
        let u = ControlGrid::regular(&[0.0], &[0.0], &[1]).unwrap();
        let c = build_cost_table(&p, &u, &QuadraticCost, 8, CostScaling::Integral, Execution::Sequential).unwrap();
        // Exact integral of x^2 + y^2 over the unit square is 2/3. The
        // midpoint rule with q points per axis undershoots each axis by
        // 1 / (12 q^2).
        let exact = 2.0 / 3.0;
        let midpoint = exact - 2.0 / (12.0 * 64.0);
        assert!((c.get(0, 0) - midpoint).abs() < 1e-12);
        assert!((c.get(0, 0) - exact).abs() < 2.7e-3);
        let fine = build_cost_table(&p, &u, &QuadraticCost, 10, CostScaling::Integral, Execution::Sequential).unwrap();
        assert!((fine.get(0, 0) - exact).abs() < 2e-3);
    }

    #[test]
    fn zero_and_control_only_costs() {
        let p = Partition::new(&[0.0, 0.0], &[2.0, 1.0], &[4, 3]).unwrap();
        let u = ControlGrid::regular(&[-1.0], &[1.0], &[3]).unwrap();
        let zero = |_: &[f64], _: &[f64]| 0.0;
        let c = build_cost_table(&p, &u, &zero, 3, CostScaling::Integral, Execution::Sequential).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));

        let effort = |_: &[f64], u: &[f64]| u[0] * u[0];
        for q in [1, 2, 5] {
            let c = build_cost_table(&p, &u, &effort, q, CostScaling::Integral, Execution::Sequential).unwrap();
            for i in 0..p.n_cells() {
                for k in 0..3 {
                    let g = u.point(k)[0];
                    assert_eq!(c.get(i, k), p.cell_volume() * g * g);
                }
            }
        }
        let avg = build_cost_table(&p, &u, &effort, 2, CostScaling::Average, Execution::Sequential).unwrap();
        assert_eq!(avg.get(0, 0), 1.0);
    }
}
