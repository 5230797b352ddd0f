//! Projection of measure specs onto a partition.

use std::path::Path;

use ulamot::grid::{Measure, Partition};

use crate::config::MeasureSpec;

/// Turns a measure spec into cell weights summing to one.
///
/// `q` is the quadrature order used for the uniform and Gaussian specs;
/// `base` resolves relative weight files.
pub fn project_measure(spec: &MeasureSpec, partition: &Partition, q: usize, base: &Path) -> Result<Measure, String> {
    let d = partition.dim();
    let n = partition.n_cells();
    let check_dim = |what: &str, v: &[f64]| {
        if v.len() == d {
            Ok(())
        } else {
            Err(format!("{what} has {} components, the domain has {d}", v.len()))
        }
    };
    match spec {
        MeasureSpec::Dirac { point } => {
            check_dim("dirac point", point)?;
            let cell = partition
                .try_locate(point)
                .ok_or_else(|| format!("dirac point {point:?} lies outside the domain"))?;
            Measure::dirac(n, cell).map_err(|e| e.to_string())
        }
        MeasureSpec::Uniform { lower, upper } => {
            check_dim("uniform lower corner", lower)?;
            check_dim("uniform upper corner", upper)?;
            if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                return Err("uniform box must have lower < upper on every axis".into());
            }
            let inside = |x: &[f64]| x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *l <= *v && *v <= *u);
            let w = per_cell(partition, q, |x| if inside(x) { 1.0 } else { 0.0 })?;
            Measure::normalized(w).map_err(|_| "uniform box does not overlap any quadrature point of the grid".to_string())
        }
        MeasureSpec::GaussianMixture {
            centers,
            weights,
            sigmas,
            truncation,
        } => {
            if centers.is_empty() || centers.len() != weights.len() || centers.len() != sigmas.len() {
                return Err("gaussian_mixture needs one weight and one sigma per center".into());
            }
            for c in centers {
                check_dim("mixture center", c)?;
            }
            if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0)) {
                return Err(format!("mixture sigma must be positive, got {s}"));
            }
            if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                return Err("mixture weights must be nonnegative and not all zero".into());
            }
            if let Some(t) = truncation {
                if !(*t > 0.0) {
                    return Err(format!("truncation must be positive, got {t}"));
                }
            }
            let density = |x: &[f64]| {
                let mut total = 0.0;
                for ((c, &w), &s) in centers.iter().zip(weights).zip(sigmas) {
                    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    if let Some(t) = truncation {
                        if r2 > (t * s) * (t * s) {
                            continue;
                        }
                    }
                    // Normalizing constants cancel in the final rescale except
                    // for the per-component sigma^-d factor.
                    total += w * (-r2 / (2.0 * s * s)).exp() / s.powi(d as i32);
                }
                total
            };
            let w = per_cell(partition, q, density)?;
            Measure::normalized(w).map_err(|_| "gaussian mixture has no mass on the grid".to_string())
        }
        MeasureSpec::Explicit { weights, file } => {
            let w = match (weights, file) {
                (Some(w), None) => w.clone(),
                (None, Some(f)) => read_weights(&base.join(f), n)?,
                _ => return Err("explicit measure needs exactly one of `weights` or `file`".into()),
            };
            if w.len() != n {
                return Err(format!("explicit measure has {} weights for {n} cells", w.len()));
            }
            Measure::new(w).map_err(|e| e.to_string())
        }
    }
}

/// Cell volume times the quadrature mean of `f` over each cell.
fn per_cell(partition: &Partition, q: usize, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>, String> {
    let scale = partition.cell_volume() / q.pow(partition.dim() as u32) as f64;
    (0..partition.n_cells())
        .map(|i| {
            let mut s = 0.0;
            partition
                .for_each_quadrature_point(i, q, |x| s += f(x))
                .map_err(|e| e.to_string())?;
            Ok(s * scale)
        })
        .collect()
}

/// Reads `cell,weight` rows; an optional header line and `#` comments are
/// skipped, and cells not listed get zero.
pub fn read_weights(path: &Path, n_cells: usize) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut w = vec![0.0; n_cells];
    let mut seen = vec![false; n_cells];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("cell") {
            continue;
        }
        let bad = || format!("{}:{}: expected `cell,weight`", path.display(), lineno + 1);
        let (c, v) = line.split_once(',').ok_or_else(bad)?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        if c >= n_cells {
            return Err(format!("{}:{}: cell {c} out of range", path.display(), lineno + 1));
        }
        if seen[c] {
            return Err(format!("{}:{}: cell {c} listed twice", path.display(), lineno + 1));
        }
        seen[c] = true;
        w[c] = v;
    }
    Ok(w)
}
