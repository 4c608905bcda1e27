//! Singular integral operators on the unit disc.
//!
//! * `T u(w) = -(1/pi) iint_D u(tau) / (tau - w) dA(tau)`, the Cauchy-Green
//!   transform, a right inverse of `d/dwbar`.
//! * `T1 u = T u + S u` with `S u(w) = -(1/pi) iint_D w conj(u(tau)) / (1 - w conj(tau)) dA`,
//!   holomorphic in `w`; `T1 u` still inverts `d/dwbar` and has vanishing real
//!   part on the unit circle.
//! * `K g(w) = (1/2 pi i) oint g(zeta) / (zeta - w) dzeta`, the circle Cauchy transform.
//!
//! Two evaluation routes are provided. Point evaluation ([`cauchy_green`],
//! [`modified_cauchy_green`]) is a direct quadrature over the grid cells with
//! singularity subtraction. Whole-grid evaluation ([`cauchy_green_grid`],
//! [`modified_cauchy_green_grid`]) expands the kernel in angular Fourier modes
//! and integrates the ring spectra exactly against piecewise-linear radial
//! profiles, in `O(R T log T)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CircleFunction, DiscGrid, GridFunction};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionRule {
    /// Subtract `u(w)` inside the kernel and add its exact transform back.
    #[default]
    PolarDesingularized,
    /// Drop the nodes within the exclusion radius and sum the rest.
    CellAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelQuadratureConfig {
    /// In units of the local cell size.
    pub singularity_exclusion_radius: f64,
    pub correction_rule: CorrectionRule,
}

impl Default for KernelQuadratureConfig {
    fn default() -> Self {
        Self {
            singularity_exclusion_radius: 1.0,
            correction_rule: CorrectionRule::PolarDesingularized,
        }
    }
}

impl KernelQuadratureConfig {
    pub fn new(singularity_exclusion_radius: f64, correction_rule: CorrectionRule) -> Result<Self> {
        let cfg = Self {
            singularity_exclusion_radius,
            correction_rule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=4.0).contains(&self.singularity_exclusion_radius) {
            return Err(Error::InvalidArgument(format!(
                "singularity exclusion radius {} outside [0.5, 4]",
                self.singularity_exclusion_radius
            )));
        }
        Ok(())
    }
}

fn check_closed_disc(w: Complex64) -> Result<()> {
    if !w.is_finite() || w.norm() > 1.0 + 1e-12 {
        return Err(Error::OutOfDomain(w));
    }
    Ok(())
}

/// Direct quadrature of `T u(w)` for a single target in the closed disc.
pub fn cauchy_green(u: &GridFunction, w: Complex64, cfg: &KernelQuadratureConfig) -> Result<Complex64> {
    check_closed_disc(w)?;
    cfg.validate()?;
    let grid = u.grid();
    let eps = cfg.singularity_exclusion_radius * grid.cell_size_at(w);
    let base = match cfg.correction_rule {
        CorrectionRule::PolarDesingularized => u.interpolate(w),
        CorrectionRule::CellAverage => ZERO,
    };
    let mut sum = ZERO;
    for ((&tau, &val), &area) in grid.nodes().iter().zip(u.values()).zip(grid.quadrature_weights()) {
        let d = tau - w;
        if d.norm() > eps {
            sum += (val - base) * area / d;
        }
    }
    Ok(-sum / PI + base * w.conj())
}

/// Direct quadrature of `T1 u(w)`.
pub fn modified_cauchy_green(
    u: &GridFunction,
    w: Complex64,
    cfg: &KernelQuadratureConfig,
) -> Result<Complex64> {
    let t = cauchy_green(u, w, cfg)?;
    let grid = u.grid();
    let eps = cfg.singularity_exclusion_radius * grid.cell_size_at(w);
    let base = match cfg.correction_rule {
        CorrectionRule::PolarDesingularized => u.interpolate(w).conj(),
        CorrectionRule::CellAverage => ZERO,
    };
    let mut sum = ZERO;
    for ((&tau, &val), &area) in grid.nodes().iter().zip(u.values()).zip(grid.quadrature_weights()) {
        if (tau - w).norm() > eps {
            sum += (val.conj() - base) * area / (1.0 - w * tau.conj());
        }
    }
    // iint_D w / (1 - w conj(tau)) dA = pi w
    Ok(t - w * sum / PI - w * base)
}

/// Grid values of an operator together with its boundary trace on `|w| = 1`.
#[derive(Clone, Debug)]
pub struct OperatorOutput {
    pub field: GridFunction,
    pub boundary: CircleFunction,
}

/// `int_lo^hi s^q ds`.
fn power_integral(lo: f64, hi: f64, q: i32) -> f64 {
    if q == -1 {
        (hi / lo).ln()
    } else {
        (hi.powi(q + 1) - lo.powi(q + 1)) / (q + 1) as f64
    }
}

/// `int_a^b f(rho) (rho / c)^p drho` for `f` linear with `f(a) = fa`, `f(b) = fb`.
fn segment(a: f64, b: f64, p: i32, c: f64, fa: Complex64, fb: Complex64) -> Complex64 {
    let slope = (fb - fa) / (b - a);
    let intercept = fa - slope * a;
    let (lo, hi) = (a / c, b / c);
    c * (intercept * power_integral(lo, hi, p) + slope * c * power_integral(lo, hi, p + 1))
}

struct Spectral {
    grid: Arc<DiscGrid>,
    /// `spectra[i][k]`: interior contribution to mode `-(k+1)` on ring `i`.
    inner: Vec<Vec<Complex64>>,
    /// `outer[i][k]`: exterior contribution to mode `k` on ring `i`.
    outer: Vec<Vec<Complex64>>,
    /// `inner` evaluated on the unit circle.
    inner_circle: Vec<Complex64>,
}

/// Radial sweeps of the Fourier-expanded Cauchy-Green kernel.
fn spectral_sweep(u: &GridFunction) -> Spectral {
    let grid = u.grid().clone();
    let (nr, nt) = (grid.radial_count(), grid.angular_count());
    let half = nt / 2;
    let spectra = grid.ring_spectra(u.values());
    let rho: Vec<f64> = (0..nr).map(|i| grid.radius(i)).collect();
    let dr = grid.dr();
    let mode = |i: usize, m: isize| spectra[i][m.rem_euclid(nt as isize) as usize];
    let extrapolate = |m: isize| {
        let (a, b) = (mode(nr - 2, m), mode(nr - 1, m));
        b + (b - a) * ((1.0 - rho[nr - 1]) / dr)
    };

    // P_k(r) = int_0^r u_{-k}(rho) (rho/r)^{k+1} drho
    let mut inner = vec![vec![ZERO; half]; nr];
    let mut inner_circle = vec![ZERO; half];
    for k in 0..half {
        let m = -(k as isize);
        let p = k as i32 + 1;
        let f0 = mode(0, m);
        let start = if k == 0 { f0 } else { ZERO };
        let mut acc = segment(0.0, rho[0], p, rho[0], start, f0);
        inner[0][k] = acc;
        for j in 0..nr - 1 {
            let ratio = (rho[j] / rho[j + 1]).powi(p);
            acc = acc * ratio + segment(rho[j], rho[j + 1], p, rho[j + 1], mode(j, m), mode(j + 1, m));
            inner[j + 1][k] = acc;
        }
        inner_circle[k] =
            acc * rho[nr - 1].powi(p) + segment(rho[nr - 1], 1.0, p, 1.0, mode(nr - 1, m), extrapolate(m));
    }

    // Q_k(r) = int_r^1 u_{k+1}(rho) (rho/r)^{-k} drho
    let mut outer = vec![vec![ZERO; half.saturating_sub(1)]; nr];
    for k in 0..half.saturating_sub(1) {
        let m = k as isize + 1;
        let p = -(k as i32);
        let last = nr - 1;
        let mut acc = segment(rho[last], 1.0, p, rho[last], mode(last, m), extrapolate(m));
        outer[last][k] = acc;
        for j in (0..last).rev() {
            let ratio = (rho[j] / rho[j + 1]).powi(k as i32);
            acc = acc * ratio + segment(rho[j], rho[j + 1], p, rho[j], mode(j, m), mode(j + 1, m));
            outer[j][k] = acc;
        }
    }
    Spectral {
        grid,
        inner,
        outer,
        inner_circle,
    }
}

impl Spectral {
    /// Synthesizes the grid field and the circle trace; `holomorphic(k)` adds
    /// `coeff_k w^{k+1}` for `k < T/2`.
    fn synthesize(&self, holomorphic: Option<&[Complex64]>) -> OperatorOutput {
        let grid = &self.grid;
        let (nr, nt) = (grid.radial_count(), grid.angular_count());
        let half = nt / 2;
        let ifft = grid.inverse_fft();
        let mut values = Vec::with_capacity(grid.len());
        let mut buf = vec![ZERO; nt];
        for i in 0..nr {
            buf.iter_mut().for_each(|x| *x = ZERO);
            for k in 0..half {
                buf[nt - 1 - k] += 2.0 * self.inner[i][k];
            }
            for k in 0..half - 1 {
                buf[k] -= 2.0 * self.outer[i][k];
            }
            if let Some(coeffs) = holomorphic {
                let r = grid.radius(i);
                let mut power = r;
                for k in 0..half {
                    buf[k + 1] += coeffs[k] * power;
                    power *= r;
                }
            }
            ifft.process(&mut buf);
            values.extend_from_slice(&buf);
        }
        buf.iter_mut().for_each(|x| *x = ZERO);
        for k in 0..half {
            buf[nt - 1 - k] += 2.0 * self.inner_circle[k];
            if let Some(coeffs) = holomorphic {
                buf[k + 1] += coeffs[k];
            }
        }
        ifft.process(&mut buf);
        OperatorOutput {
            field: GridFunction::from_raw(grid.clone(), values),
            boundary: CircleFunction::new(buf).expect("finite operator trace"),
        }
    }
}

/// `T u` at every grid node, plus its trace on the unit circle.
pub fn cauchy_green_grid(u: &GridFunction) -> OperatorOutput {
    spectral_sweep(u).synthesize(None)
}

/// `T1 u` at every grid node, plus its trace on the unit circle.
pub fn modified_cauchy_green_grid(u: &GridFunction) -> OperatorOutput {
    let sweep = spectral_sweep(u);
    let coeffs: Vec<Complex64> = sweep.inner_circle.iter().map(|p| -2.0 * p.conj()).collect();
    sweep.synthesize(Some(&coeffs))
}

/// Taylor coefficients `c_0, ..., c_{N/2 - 1}` of `K g`.
pub fn cauchy_circle_coefficients(g: &CircleFunction) -> Vec<Complex64> {
    let n = g.angular_count();
    let mut coeffs = g.fourier();
    coeffs.truncate(n.div_ceil(2));
    coeffs
}

pub fn eval_taylor(coeffs: &[Complex64], w: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * w + c)
}

/// `K g(w)` for `|w| < 1`, from the de-aliased trapezoid rule on the samples.
pub fn cauchy_circle(g: &CircleFunction, w: Complex64) -> Result<Complex64> {
    if !w.is_finite() || w.norm() >= 1.0 {
        return Err(Error::OutOfDomain(w));
    }
    Ok(eval_taylor(&cauchy_circle_coefficients(g), w))
}

/// `K g` at every node of `grid`.
pub fn cauchy_circle_grid(g: &CircleFunction, grid: &Arc<DiscGrid>) -> GridFunction {
    let coeffs = cauchy_circle_coefficients(g);
    let values = grid.nodes().iter().map(|&w| eval_taylor(&coeffs, w)).collect();
    GridFunction::from_raw(grid.clone(), values)
}

/// Closed-form transform of a phase power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedForm {
    pub value: Complex64,
    /// The target coincided with the centre and the continuous extension was used.
    pub removable: bool,
}

/// `T <w - w0>^n = (conj(w) - conj(w0))^{n+1} / ((n + 1) (w - w0)^n)`.
pub fn phase_transform_closed_form(n: u32, w0: Complex64, w: Complex64) -> Result<ClosedForm> {
    if n == 0 {
        return Err(Error::InvalidArgument("phase power must be positive".into()));
    }
    check_closed_disc(w)?;
    if !w0.is_finite() || w0.norm() >= 1.0 {
        return Err(Error::OutOfDomain(w0));
    }
    let d = w - w0;
    if d == ZERO {
        return Ok(ClosedForm {
            value: ZERO,
            removable: true,
        });
    }
    let n = n as i32;
    Ok(ClosedForm {
        value: d.conj().powi(n + 1) / (d.powi(n) * (n + 1) as f64),
        removable: false,
    })
}
