//! Discrete-time control systems `x' = T(x, u)` on a box.
//!
//! With clamping enabled an image that leaves the domain box is replaced by
//! the pre-image state, so the map is total on the box.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch("state box bounds".into()));
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
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// A deterministic map `T: X x U -> X`.
///
/// Implementors provide the unclamped image through [`raw_step`]; the
/// provided methods apply the clamping policy.
///
/// [`raw_step`]: SystemMap::raw_step
pub trait SystemMap: Send + Sync {
    fn name(&self) -> &'static str;

    fn control_dim(&self) -> usize;

    fn domain(&self) -> &StateBox;

    fn clamping(&self) -> bool;

    /// Image of `x` under control `u` before clamping.
    fn raw_step(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    fn state_dim(&self) -> usize {
        self.domain().dim()
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.raw_step(x, u, out);
        if self.clamping() && !self.domain().contains(out) {
            out.copy_from_slice(x);
        }
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.step_into(x, u, &mut out);
        out
    }

    /// Images of `x` under every control, concatenated into `out`
    /// (`controls.len() * state_dim` entries).
    ///
    /// Systems whose drift does not depend on the control override this to
    /// evaluate the drift once.
    fn step_all_into(&self, x: &[f64], controls: &[Vec<f64>], out: &mut [f64]) {
        let d = x.len();
        for (k, u) in controls.iter().enumerate() {
            self.step_into(x, u, &mut out[k * d..(k + 1) * d]);
        }
    }
}

/// `T(x, u) = x + u`.
#[derive(Debug, Clone)]
pub struct Translation {
    domain: StateBox,
    clamp: bool,
}

impl Translation {
    pub fn new(domain: StateBox, clamp: bool) -> Self {
        Self { domain, clamp }
    }
}

impl SystemMap for Translation {
    fn name(&self) -> &'static str {
        "translation"
    }

    fn control_dim(&self) -> usize {
        self.domain.dim()
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }

    fn clamping(&self) -> bool {
        self.clamp
    }

    fn raw_step(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(u) {
            *o = a + b;
        }
    }
}

/// Position/velocity pair driven by a bounded acceleration:
/// `(x, y) -> (x + 0.15 y, y + u)`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    domain: StateBox,
    clamp: bool,
    drift: f64,
}

impl DoubleIntegrator {
    pub const DRIFT: f64 = 0.15;

    pub fn new(domain: StateBox, clamp: bool) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::DimensionMismatch("double integrator is planar".into()));
        }
        Ok(Self {
            domain,
            clamp,
            drift: Self::DRIFT,
        })
    }
}

impl SystemMap for DoubleIntegrator {
    fn name(&self) -> &'static str {
        "double_integrator"
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }

    fn clamping(&self) -> bool {
        self.clamp
    }

    fn raw_step(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[0] + self.drift * x[1];
        out[1] = x[1] + u[0];
    }
}

/// Parameters of the time-periodic double-gyre flow and its stroboscopic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleGyreParams {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub beta: f64,
    pub omega: f64,
    /// Flow time per map application.
    pub tau: f64,
    #[serde(default = "DoubleGyreParams::default_rk4_steps")]
    pub rk4_steps: usize,
}

impl DoubleGyreParams {
    fn default_rk4_steps() -> usize {
        100
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if self.rk4_steps == 0 {
            return Err(Error::InvalidArgument("rk4_steps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for DoubleGyreParams {
    fn default() -> Self {
        Self {
            amplitude: 0.25,
            beta: 0.25,
            omega: 2.0 * PI,
            tau: 1.0,
            rk4_steps: 100,
        }
    }
}

/// Velocity of the double-gyre flow at `p = (x, y)` and time `t`.
pub fn gyre_velocity(p: [f64; 2], t: f64, params: &DoubleGyreParams) -> [f64; 2] {
    let [x, y] = p;
    let s = params.beta * (params.omega * t).sin();
    let f = s * x * x + (1.0 - 2.0 * s) * x;
    let dfdx = 2.0 * s * x + (1.0 - 2.0 * s);
    let pa = PI * params.amplitude;
    let (sin_f, cos_f) = (PI * f).sin_cos();
    let (sin_y, cos_y) = (PI * y).sin_cos();
    [-pa * sin_f * cos_y, pa * cos_f * sin_y * dfdx]
}

/// Integrates the gyre flow from `t = 0` to `t = tau` with classical RK4.
pub fn gyre_flow_map(p: [f64; 2], params: &DoubleGyreParams, steps: usize) -> [f64; 2] {
    let h = params.tau / steps as f64;
    let mut z = p;
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = gyre_velocity(z, t, params);
        let k2 = gyre_velocity([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], t + 0.5 * h, params);
        let k3 = gyre_velocity([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], t + 0.5 * h, params);
        let k4 = gyre_velocity([z[0] + h * k3[0], z[1] + h * k3[1]], t + h, params);
        for d in 0..2 {
            z[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    }
    z
}

/// Unicycle actuation `G(u) = (u1 cos u2, u1 sin u2)`.
pub fn unicycle_displacement(u: &[f64]) -> [f64; 2] {
    let (s, c) = u[1].sin_cos();
    [u[0] * c, u[0] * s]
}

/// Unicycles advected by the double gyre: `x' = F(x) + G(u)`.
#[derive(Debug, Clone)]
pub struct GyreUnicycle {
    domain: StateBox,
    clamp: bool,
    params: DoubleGyreParams,
}

impl GyreUnicycle {
    pub fn new(domain: StateBox, clamp: bool, params: DoubleGyreParams) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::DimensionMismatch("gyre unicycle is planar".into()));
        }
        params.validate()?;
        Ok(Self { domain, clamp, params })
    }

    pub fn params(&self) -> &DoubleGyreParams {
        &self.params
    }

    pub fn drift(&self, x: &[f64]) -> [f64; 2] {
        gyre_flow_map([x[0], x[1]], &self.params, self.params.rk4_steps)
    }
}

impl SystemMap for GyreUnicycle {
    fn name(&self) -> &'static str {
        "gyre_unicycle"
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }

    fn clamping(&self) -> bool {
        self.clamp
    }

    fn raw_step(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let f = self.drift(x);
        let g = unicycle_displacement(u);
        out[0] = f[0] + g[0];
        out[1] = f[1] + g[1];
    }

    fn step_all_into(&self, x: &[f64], controls: &[Vec<f64>], out: &mut [f64]) {
        let f = self.drift(x);
        for (k, u) in controls.iter().enumerate() {
            let g = unicycle_displacement(u);
            let o = &mut out[2 * k..2 * k + 2];
            o[0] = f[0] + g[0];
            o[1] = f[1] + g[1];
            if self.clamp && !self.domain.contains(o) {
                o.copy_from_slice(x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(dim: usize) -> StateBox {
        StateBox::new(vec![0.0; dim], vec![1.0; dim]).unwrap()
    }

    #[test]
    fn translation_steps() {
        let free = Translation::new(StateBox::new(vec![-2.0], vec![2.0]).unwrap(), false);
        assert_eq!(free.step(&[0.0], &[1.0]), vec![1.0]);
        assert_eq!(free.step(&[0.0], &[0.0]), vec![0.0]);
        let clamped = Translation::new(unit_box(1), true);
        assert_eq!(clamped.step(&[0.9], &[0.5]), vec![0.9]);
        assert_eq!(clamped.step(&[0.4], &[0.5]), vec![0.9]);
    }

    #[test]
    fn double_integrator_steps() {
        let sys = DoubleIntegrator::new(unit_box(2), true).unwrap();
        assert_eq!(sys.step(&[0.0, 0.0], &[0.25]), vec![0.0, 0.25]);
        let next = sys.step(&[0.0, 0.25], &[0.0]);
        assert!((next[0] - 0.0375).abs() < 1e-15 && next[1] == 0.25);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(sys.step(&[x, 0.0], &[0.0]), vec![x, 0.0]);
        }
        // Velocity would leave the box: the state is held.
        assert_eq!(sys.step(&[0.5, 0.9], &[0.25]), vec![0.5, 0.9]);
    }

    #[test]
    fn gyre_velocity_vanishes_on_horizontal_faces() {
        let params = DoubleGyreParams::default();
        for &x in &[0.0, 0.3, 1.1, 2.0] {
            for &t in &[0.0, 0.25, 0.7] {
                assert_eq!(gyre_velocity([x, 0.0], t, &params)[1], 0.0);
                assert!(gyre_velocity([x, 1.0], t, &params)[1].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gyre_velocity_point_value() {
        let params = DoubleGyreParams::default();
        let v = gyre_velocity([1.0, 0.5], 0.0, &params);
        assert!(v[0].abs() < 1e-15);
        assert!((v[1] + PI * 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_is_pure_actuation() {
        let params = DoubleGyreParams {
            amplitude: 0.0,
            ..DoubleGyreParams::default()
        };
        let dom = StateBox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let sys = GyreUnicycle::new(dom, true, params).unwrap();
        let out = sys.step(&[0.5, 0.25], &[0.5, 0.0]);
        assert!((out[0] - 1.0).abs() < 1e-15 && (out[1] - 0.25).abs() < 1e-15);
        // Leaves through the top: held.
        assert_eq!(sys.step(&[0.5, 0.25], &[1.0, PI / 2.0]), vec![0.5, 0.25]);
    }

    #[test]
    fn unicycle_directions() {
        assert_eq!(unicycle_displacement(&[1.0, 0.0]), [1.0, 0.0]);
        let g = unicycle_displacement(&[1.0, PI / 2.0]);
        assert!(g[0].abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_all_matches_step() {
        let dom = StateBox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let sys = GyreUnicycle::new(dom, true, DoubleGyreParams::default()).unwrap();
        let controls = vec![vec![0.0, 0.0], vec![0.3, 1.0], vec![-1.0, 2.0], vec![1.0, 0.0]];
        let x = [0.7, 0.4];
        let mut all = vec![0.0; 8];
        sys.step_all_into(&x, &controls, &mut all);
        for (k, u) in controls.iter().enumerate() {
            assert_eq!(&all[2 * k..2 * k + 2], sys.step(&x, u).as_slice());
        }
    }

    #[test]
    fn invalid_gyre_params() {
        let dom = StateBox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let bad = DoubleGyreParams {
            rk4_steps: 0,
            ..DoubleGyreParams::default()
        };
        assert!(GyreUnicycle::new(dom.clone(), true, bad).is_err());
        let bad = DoubleGyreParams {
            tau: 0.0,
            ..DoubleGyreParams::default()
        };
        assert!(GyreUnicycle::new(dom, true, bad).is_err());
    }
}
