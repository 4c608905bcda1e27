//! Discs attached to the torus `|z| = 1, |w| = r` for the quasi-linear system
//!
//! ```text
//! z_zetabar = a(z, w) conj(z)_zetabar
//! w_zetabar = b(z, w) conj(z)_zetabar
//! ```
//!
//! With `z = zeta e^u` and `w = r e^{it} zeta^n e^v` the circle conditions
//! become `Re u = Re v = 0` on `|zeta| = 1`, and the system becomes
//!
//! ```text
//! u_zetabar = a e^{conj(u) - u} (1/zeta + <zeta> conj(u_zeta))
//! v_zetabar = b e^{conj(u) - v} (1 + conj(zeta u_zeta)) / (r e^{it} zeta^n)
//! ```
//!
//! Both right sides are bounded when `a(z, 0) = b(z, 0) = 0` and `n >= 1`.
//! Each is inverted with the boundary-adapted Cauchy-Green operator `T1`,
//! pinned by `u(1) = v(1) = 0`, and iterated with damping.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dbar, dz, make_polar_grid, DiscGrid, GridFunction};
use crate::singint::modified_cauchy_green_grid;
use crate::vekua::winding;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const INTERIOR_RADIUS: f64 = 0.9;

pub type Coefficient = Arc<dyn Fn(Complex64, Complex64) -> Complex64 + Send + Sync>;

/// Coefficients `(a, b)` of the system, with the recorded ellipticity bound
/// `a0` and Lipschitz constant in `w`.
#[derive(Clone)]
pub struct StructureCoefficients {
    a: Coefficient,
    b: Coefficient,
    pub a0: f64,
    pub lipschitz_w: f64,
    /// When set, `|w|` is clamped to this radius before evaluating `a` and `b`.
    pub w_radius: Option<f64>,
    pub label: String,
}

impl fmt::Debug for StructureCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructureCoefficients")
            .field("label", &self.label)
            .field("a0", &self.a0)
            .field("lipschitz_w", &self.lipschitz_w)
            .field("w_radius", &self.w_radius)
            .finish_non_exhaustive()
    }
}

/// Default half-width `gamma` of the `w`-domain `|w| <= 1 + gamma`.
pub const DEFAULT_GAMMA: f64 = 0.25;

impl StructureCoefficients {
    pub fn new(
        label: impl Into<String>,
        a: impl Fn(Complex64, Complex64) -> Complex64 + Send + Sync + 'static,
        b: impl Fn(Complex64, Complex64) -> Complex64 + Send + Sync + 'static,
        a0: f64,
        lipschitz_w: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&a0) {
            return Err(Error::InvalidArgument(format!("a0 = {a0} outside [0, 1)")));
        }
        Ok(Self {
            a: Arc::new(a),
            b: Arc::new(b),
            a0,
            lipschitz_w,
            w_radius: None,
            label: label.into(),
        })
    }

    pub fn with_w_radius(mut self, radius: f64) -> Self {
        self.w_radius = Some(radius);
        self
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| ZERO, |_, _| ZERO, 0.0, 0.0).expect("valid constants")
    }

    /// `a = w / 2`, `b = 0`.
    pub fn half_w() -> Self {
        Self::new(
            "half-w",
            |_, w| w * 0.5,
            |_, _| ZERO,
            0.5 * (1.0 + DEFAULT_GAMMA),
            0.5,
        )
        .expect("valid constants")
    }

    fn clamp(&self, w: Complex64) -> Complex64 {
        match self.w_radius {
            Some(radius) if w.norm() > radius => w * (radius / w.norm()),
            _ => w,
        }
    }

    pub fn a(&self, z: Complex64, w: Complex64) -> Complex64 {
        (self.a)(z, self.clamp(w))
    }

    pub fn b(&self, z: Complex64, w: Complex64) -> Complex64 {
        (self.b)(z, self.clamp(w))
    }

    fn lattice(gamma: f64) -> impl Iterator<Item = (Complex64, Complex64)> {
        let zs: Vec<Complex64> = (0..=6)
            .flat_map(|i| (0..12).map(move |j| Complex64::from_polar(i as f64 / 6.0, j as f64 * PI / 6.0)))
            .collect();
        let ws: Vec<Complex64> = (0..=8)
            .flat_map(|i| {
                (0..12).map(move |j| {
                    Complex64::from_polar((1.0 + gamma) * i as f64 / 8.0, (j as f64 + 0.5) * PI / 6.0)
                })
            })
            .collect();
        zs.into_iter()
            .flat_map(move |z| ws.clone().into_iter().map(move |w| (z, w)))
    }

    /// Spot-checks `|a| <= a0` on a lattice of `|z| <= 1, |w| <= 1 + gamma`.
    pub fn check_ellipticity(&self, gamma: f64) -> Result<()> {
        for (z, w) in Self::lattice(gamma) {
            let value = self.a(z, w).norm();
            if !(value <= self.a0 + 1e-12) {
                return Err(Error::Ellipticity {
                    value,
                    bound: self.a0,
                });
            }
        }
        Ok(())
    }

    /// Spot-checks `a(z, 0) = b(z, 0) = 0`.
    pub fn check_vanishing_at_zero(&self) -> Result<()> {
        for (z, _) in Self::lattice(0.0).step_by(9) {
            let (a, b) = (self.a(z, ZERO), self.b(z, ZERO));
            if a.norm() > 1e-10 || b.norm() > 1e-10 {
                return Err(Error::HypothesisViolation(format!(
                    "a(z, 0) = {a:.3e}, b(z, 0) = {b:.3e} at z = {z:.3}; both must vanish"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: Arc<DiscGrid>,
    pub max_iterations: usize,
    pub contraction_tol: f64,
    pub damping: f64,
}

impl SolverConfig {
    pub fn new(grid: Arc<DiscGrid>) -> Self {
        Self {
            grid,
            max_iterations: 500,
            contraction_tol: 1e-10,
            damping: 0.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        if !(self.contraction_tol >= 1e-10) {
            return Err(Error::InvalidArgument(format!(
                "contraction_tol {} below 1e-10",
                self.contraction_tol
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct GridShape {
    radial_count: usize,
    angular_count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SolverConfigJson {
    grid: GridShape,
    max_iterations: usize,
    contraction_tol: f64,
    damping: f64,
}

impl Serialize for SolverConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SolverConfigJson {
            grid: GridShape {
                radial_count: self.grid.radial_count(),
                angular_count: self.grid.angular_count(),
            },
            max_iterations: self.max_iterations,
            contraction_tol: self.contraction_tol,
            damping: self.damping,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SolverConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SolverConfigJson::deserialize(d)?;
        let grid = make_polar_grid(raw.grid.radial_count, raw.grid.angular_count)
            .map_err(serde::de::Error::custom)?;
        let cfg = SolverConfig {
            grid,
            max_iterations: raw.max_iterations,
            contraction_tol: raw.contraction_tol,
            damping: raw.damping,
        };
        cfg.validate().map_err(serde::de::Error::custom)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscParams {
    pub n: u32,
    pub r: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscDiagnostics {
    /// `max |z_zetabar - a conj(z)_zetabar|`.
    pub residual_z: f64,
    /// `max |w_zetabar - b conj(z)_zetabar|`.
    pub residual_w: f64,
    /// Larger of the two system residuals over `|zeta| <= 0.9`.
    pub interior_residual: f64,
    /// `max ||z| - 1|` on the extrapolated boundary trace.
    pub boundary_err_z: f64,
    /// `max ||w| - r|` on the extrapolated boundary trace.
    pub boundary_err_w: f64,
    pub winding_w: i64,
    /// `min (|z_zeta|^2 - |z_zetabar|^2)`.
    pub jacobian_min: f64,
    /// `max |w| / (r |zeta|^n)`.
    pub decay_constant: f64,
    /// `max |w_zbar + a w_z - b|` with `w` read as a function of `z`.
    pub elimination_residual: f64,
    pub iterations: usize,
    pub final_change: f64,
}

#[derive(Clone, Debug)]
pub struct DiscSolution {
    pub z_fn: GridFunction,
    pub w_fn: GridFunction,
    pub u_fn: GridFunction,
    pub v_fn: GridFunction,
    pub params: DiscParams,
    pub diagnostics: DiscDiagnostics,
}

impl DiscSolution {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "diagnostics": self.diagnostics,
        })
    }

    /// `(z, w)` at the grid's angles on the unit circle, extrapolated from the rings.
    pub fn boundary(&self) -> Vec<(Complex64, Complex64)> {
        let zb = self.z_fn.circle_trace();
        let wb = self.w_fn.circle_trace();
        zb.values()
            .iter()
            .copied()
            .zip(wb.values().iter().copied())
            .collect()
    }
}

/// `T1 f` with the imaginary constant fixed by a zero value at `zeta = 1`.
fn pinned_t1(f: &GridFunction) -> GridFunction {
    let out = modified_cauchy_green_grid(f);
    let pin = Complex64::new(0.0, out.boundary.values()[0].im);
    out.field.map(|_, v| v - pin)
}

fn relax(old: &GridFunction, target: &GridFunction, damping: f64) -> (GridFunction, f64) {
    let mut change: f64 = 0.0;
    let values = old
        .values()
        .iter()
        .zip(target.values())
        .map(|(o, t)| {
            let step = (t - o) * damping;
            change = change.max(step.norm());
            o + step
        })
        .collect();
    (
        GridFunction::from_raw(old.grid().clone(), values),
        change / damping,
    )
}

/// Solves `u_zbar + a(z, u) u_z = rhs(z, u)` with `Re u = 0` on the circle and
/// `u(1) = 0`, by damped iteration of `u <- T1[rhs - a u_z]`.
pub fn solve_rh_index0(
    rhs: &dyn Fn(Complex64, Complex64) -> Complex64,
    a_coef: &dyn Fn(Complex64, Complex64) -> Complex64,
    a0: f64,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&a0) {
        return Err(Error::InvalidArgument(format!("a0 = {a0} outside [0, 1)")));
    }
    let grid = cfg.grid.clone();
    let mut u = GridFunction::zeros(&grid);
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        let du = dz(&u)?;
        let mut values = Vec::with_capacity(grid.len());
        for ((&z, &uv), &d) in grid.nodes().iter().zip(u.values()).zip(du.values()) {
            let a = a_coef(z, uv);
            if a.norm() > a0 {
                return Err(Error::Ellipticity {
                    value: a.norm(),
                    bound: a0,
                });
            }
            values.push(rhs(z, uv) - a * d);
        }
        let forcing = GridFunction::new(grid.clone(), values)?;
        let target = pinned_t1(&forcing);
        let (next, step) = relax(&u, &target, cfg.damping);
        u = next;
        change = step;
        if change < cfg.contraction_tol {
            return Ok(u);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: change,
    })
}

fn check_params(r: f64, t: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r = {r} outside (0, 1]")));
    }
    if !(0.0..2.0 * PI).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 2 pi)")));
    }
    Ok(())
}

/// Solves the system for the disc with winding `n`, radius `r` and phase `t`.
pub fn solve_disc(
    coeffs: &StructureCoefficients,
    n: u32,
    r: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<DiscSolution> {
    solve_disc_from(coeffs, n, r, t, cfg, None)
}

/// As [`solve_disc`], starting from the given `(u, v)` iterate.
pub fn solve_disc_from(
    coeffs: &StructureCoefficients,
    n: u32,
    r: f64,
    t: f64,
    cfg: &SolverConfig,
    initial: Option<(&GridFunction, &GridFunction)>,
) -> Result<DiscSolution> {
    cfg.validate()?;
    check_params(r, t)?;
    let grid = cfg.grid.clone();
    let (mut u, mut v) = match initial {
        Some((u0, v0)) => {
            u0.check_same_grid(&GridFunction::zeros(&grid))?;
            v0.check_same_grid(&GridFunction::zeros(&grid))?;
            (u0.clone(), v0.clone())
        }
        None => (GridFunction::zeros(&grid), GridFunction::zeros(&grid)),
    };
    let scale = Complex64::from_polar(r, t);
    let zeta_n: Vec<Complex64> = grid.nodes().iter().map(|z| z.powu(n)).collect();

    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let du = dz(&u)?;
        let mut gu = Vec::with_capacity(grid.len());
        let mut gv = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let zeta = grid.nodes()[k];
            let (uk, vk) = (u.values()[k], v.values()[k]);
            let z = zeta * uk.exp();
            let w = scale * zeta_n[k] * vk.exp();
            let a = coeffs.a(z, w);
            if a.norm() > coeffs.a0 + 1e-12 {
                return Err(Error::Ellipticity {
                    value: a.norm(),
                    bound: coeffs.a0,
                });
            }
            let b = coeffs.b(z, w);
            let conj_du = du.values()[k].conj();
            let phase = zeta.conj() / zeta;
            gu.push(a * (uk.conj() - uk).exp() * (1.0 / zeta + phase * conj_du));
            let denom = scale * zeta_n[k];
            gv.push(if b == ZERO {
                ZERO
            } else {
                b * (uk.conj() - vk).exp() * (1.0 + (zeta * du.values()[k]).conj()) / denom
            });
        }
        let gu = GridFunction::new(grid.clone(), gu)?;
        let gv = GridFunction::new(grid.clone(), gv)?;
        let (next_u, cu) = relax(&u, &pinned_t1(&gu), cfg.damping);
        let (next_v, cv) = relax(&v, &pinned_t1(&gv), cfg.damping);
        u = next_u;
        v = next_v;
        change = cu.max(cv);
        if !change.is_finite() {
            break;
        }
        if change < cfg.contraction_tol {
            return assemble(coeffs, DiscParams { n, r, t }, u, v, iterations, change);
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual: change,
    })
}

fn assemble(
    coeffs: &StructureCoefficients,
    params: DiscParams,
    u: GridFunction,
    v: GridFunction,
    iterations: usize,
    final_change: f64,
) -> Result<DiscSolution> {
    let scale = Complex64::from_polar(params.r, params.t);
    let z_fn = u.map(|zeta, uv| zeta * uv.exp());
    let w_fn = v.map(|zeta, vv| scale * zeta.powu(params.n) * vv.exp());
    let diagnostics = diagnose(coeffs, &params, &z_fn, &w_fn, &v, iterations, final_change)?;
    if diagnostics.jacobian_min <= 0.0 {
        return Err(Error::DegenerateJacobian {
            jacobian_min: diagnostics.jacobian_min,
        });
    }
    Ok(DiscSolution {
        z_fn,
        w_fn,
        u_fn: u,
        v_fn: v,
        params,
        diagnostics,
    })
}

fn diagnose(
    coeffs: &StructureCoefficients,
    params: &DiscParams,
    z_fn: &GridFunction,
    w_fn: &GridFunction,
    v: &GridFunction,
    iterations: usize,
    final_change: f64,
) -> Result<DiscDiagnostics> {
    let z_dbar = dbar(z_fn)?;
    let z_d = dz(z_fn)?;
    let w_dbar = dbar(w_fn)?;
    let w_d = dz(w_fn)?;
    let mut residual_z: f64 = 0.0;
    let mut residual_w: f64 = 0.0;
    let mut interior_residual: f64 = 0.0;
    let mut jacobian_min = f64::INFINITY;
    let mut elimination_residual: f64 = 0.0;
    for k in 0..z_fn.grid().len() {
        let (z, w) = (z_fn.values()[k], w_fn.values()[k]);
        let (a, b) = (coeffs.a(z, w), coeffs.b(z, w));
        let (zs, zb) = (z_d.values()[k], z_dbar.values()[k]);
        // conj(z)_zetabar = conj(z_zeta)
        let rz = (zb - a * zs.conj()).norm();
        let rw = (w_dbar.values()[k] - b * zs.conj()).norm();
        residual_z = residual_z.max(rz);
        residual_w = residual_w.max(rw);
        if z_fn.grid().nodes()[k].norm() <= INTERIOR_RADIUS {
            interior_residual = interior_residual.max(rz).max(rw);
        }
        let jac = zs.norm_sqr() - zb.norm_sqr();
        jacobian_min = jacobian_min.min(jac);
        // chain rule: [w_zeta, w_zetabar] = [[z_zeta, conj(z_zetabar)], [z_zetabar, conj(z_zeta)]] [w_z, w_zbar]
        let (ws, wb) = (w_d.values()[k], w_dbar.values()[k]);
        if jac > 0.0 {
            let w_z = (ws * zs.conj() - zb.conj() * wb) / jac;
            let w_zbar = (zs * wb - zb * ws) / jac;
            elimination_residual = elimination_residual.max((w_zbar + a * w_z - b).norm());
        }
    }
    let zb = z_fn.circle_trace();
    let wb = w_fn.circle_trace();
    let boundary_err_z = zb
        .values()
        .iter()
        .map(|z| (z.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let boundary_err_w = wb
        .values()
        .iter()
        .map(|w| (w.norm() - params.r).abs())
        .fold(0.0, f64::max);
    let winding_w = winding(&wb)?.count;
    let decay_constant = v.values().iter().map(|x| x.exp().norm()).fold(0.0, f64::max);
    Ok(DiscDiagnostics {
        residual_z,
        residual_w,
        interior_residual,
        boundary_err_z,
        boundary_err_w,
        winding_w,
        jacobian_min,
        decay_constant,
        elimination_residual,
        iterations,
        final_change,
    })
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub radii: Vec<f64>,
    pub solutions: Vec<DiscSolution>,
    /// `max(sup |z_k - z_{k-1}|, sup |w_k - w_{k-1}|)` for consecutive radii.
    pub consecutive_distances: Vec<f64>,
}

/// Solves along increasing radii, warm-starting each solve from the previous one.
pub fn homotopy_sweep(
    coeffs: &StructureCoefficients,
    n: u32,
    t: f64,
    radii: &[f64],
    cfg: &SolverConfig,
) -> Result<SweepResult> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("no radii".into()));
    }
    if radii.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
    }
    let mut solutions: Vec<DiscSolution> = Vec::with_capacity(radii.len());
    let mut consecutive_distances = Vec::new();
    for &radius in radii {
        let initial = solutions.last().map(|s| (&s.u_fn, &s.v_fn));
        let sol = solve_disc_from(coeffs, n, radius, t, cfg, initial).map_err(|e| Error::Sweep {
            radius,
            source: Box::new(e),
        })?;
        if let Some(prev) = solutions.last() {
            let dz = sol.z_fn.max_abs_diff(&prev.z_fn)?;
            let dw = sol.w_fn.max_abs_diff(&prev.w_fn)?;
            consecutive_distances.push(dz.max(dw));
        }
        solutions.push(sol);
    }
    Ok(SweepResult {
        radii: radii.to_vec(),
        solutions,
        consecutive_distances,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusFill {
    pub coverage_fraction: f64,
    pub bins_z: usize,
    pub bins_w: usize,
    pub t_samples: usize,
}

/// Bins the boundary images over `t_samples` equispaced phases into an
/// angular lattice on the torus `|z| = 1, |w| = r`.
pub fn torus_fill_check(
    coeffs: &StructureCoefficients,
    n: u32,
    r: f64,
    t_samples: usize,
    cfg: &SolverConfig,
) -> Result<TorusFill> {
    torus_fill_with(coeffs, n, r, t_samples, cfg, |_| Ok(()))
}

/// As [`torus_fill_check`], handing every solution to `inspect`.
pub fn torus_fill_with(
    coeffs: &StructureCoefficients,
    n: u32,
    r: f64,
    t_samples: usize,
    cfg: &SolverConfig,
    mut inspect: impl FnMut(&DiscSolution) -> Result<()>,
) -> Result<TorusFill> {
    if t_samples < 16 {
        return Err(Error::InvalidArgument(format!("t_samples {t_samples} < 16")));
    }
    let nt = cfg.grid.angular_count();
    let bins_w = t_samples / 2;
    // 16 boundary samples per bin on average
    let bins_z = (t_samples * nt / (16 * bins_w)).min(nt / 2).max(1);
    let mut occupied = vec![false; bins_z * bins_w];
    let bin = |angle: f64, count: usize| {
        ((angle.rem_euclid(2.0 * PI) / (2.0 * PI) * count as f64) as usize).min(count - 1)
    };
    let mut previous: Option<DiscSolution> = None;
    for k in 0..t_samples {
        let t = 2.0 * PI * k as f64 / t_samples as f64;
        let initial = previous.as_ref().map(|s| (&s.u_fn, &s.v_fn));
        let sol = solve_disc_from(coeffs, n, r, t, cfg, initial)?;
        for (z, w) in sol.boundary() {
            occupied[bin(z.arg(), bins_z) * bins_w + bin(w.arg(), bins_w)] = true;
        }
        inspect(&sol)?;
        previous = Some(sol);
    }
    let filled = occupied.iter().filter(|&&o| o).count();
    Ok(TorusFill {
        coverage_fraction: filled as f64 / occupied.len() as f64,
        bins_z,
        bins_w,
        t_samples,
    })
}
