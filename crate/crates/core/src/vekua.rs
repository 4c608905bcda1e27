//! Generalized analytic functions `h_wbar = mu conj(h)` on the unit disc.
//!
//! The similarity principle writes such `h` as `phi e^{T u}` with `phi`
//! holomorphic and `u = mu conj(h) / h`. This module computes that
//! factorization on a grid, counts zeros by the argument principle, splits off
//! the monic polynomial of zeros, and provides the empirical estimators
//! (Hölder exponents, Lipschitz constants, Monte-Carlo sublevel areas) used to
//! probe the regularity statements.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dbar, CircleFunction, DiscGrid, GridFunction};
use crate::singint::{cauchy_circle_coefficients, cauchy_green_grid, eval_taylor, KernelQuadratureConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `|h|` below this at a node makes `u` zero there.
pub const ZERO_CUTOFF: f64 = 1e-12;
/// Default bound on the Vekua residual, relative to `max(1, sup |h|)`.
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 0.1;
/// Boundary samples smaller than this fraction of the largest one count as zeros.
pub const BOUNDARY_ZERO_RATIO: f64 = 1e-9;

/// Max of `|v|` over the rings strictly inside the outermost one.
fn interior_max(values: &[Complex64], grid: &DiscGrid) -> f64 {
    let n = grid.len() - grid.angular_count();
    values[..n].iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `max |dbar h - mu conj(h)|` over interior nodes.
pub fn vekua_residual(h: &GridFunction, mu: &GridFunction) -> Result<f64> {
    h.check_same_grid(mu)?;
    let d = dbar(h)?;
    let defect: Vec<Complex64> = d
        .values()
        .iter()
        .zip(mu.values().iter().zip(h.values()))
        .map(|(dh, (m, hv))| dh - m * hv.conj())
        .collect();
    Ok(interior_max(&defect, h.grid()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub count: i64,
    /// Distance of the raw argument increment (in turns) from the nearest integer.
    pub confidence: f64,
}

/// Winding number of a closed curve sampled at equispaced parameters.
pub fn winding(trace: &CircleFunction) -> Result<Winding> {
    let values = trace.values();
    let max = trace.max_abs();
    let min = trace.min_abs();
    if max == 0.0 || min <= BOUNDARY_ZERO_RATIO * max {
        return Err(Error::BoundaryZero { min_modulus: min });
    }
    let n = values.len();
    let turns: f64 = (0..n)
        .map(|k| (values[(k + 1) % n] / values[k]).arg())
        .sum::<f64>()
        / (2.0 * PI);
    let count = turns.round();
    Ok(Winding {
        count: count as i64,
        confidence: (turns - count).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub count: usize,
    pub confidence: f64,
}

/// Number of zeros enclosed by the unit circle, from the boundary values of a
/// holomorphic (or generalized analytic) function.
pub fn count_zeros(boundary_values: &CircleFunction) -> Result<ZeroCount> {
    let w = winding(boundary_values)?;
    if w.count < 0 {
        return Err(Error::HypothesisViolation(format!(
            "boundary trace winds {} times; zero counts are non-negative",
            w.count
        )));
    }
    Ok(ZeroCount {
        count: w.count as usize,
        confidence: w.confidence,
    })
}

#[derive(Clone, Debug)]
pub struct VekuaDecomposition {
    pub phi: GridFunction,
    pub tu: GridFunction,
    pub u: GridFunction,
    /// Boundary trace of `phi` on the unit circle.
    pub phi_boundary: CircleFunction,
    pub zero_count: usize,
    pub zero_count_confidence: f64,
    /// `max |dbar phi|` over interior nodes.
    pub dbar_phi_residual: f64,
    /// `max |phi e^{Tu} - h|`.
    pub reconstruction_error: f64,
    pub vekua_residual: f64,
}

/// `h = phi e^{Tu}` with the default residual threshold.
pub fn similarity_decompose(
    h: &GridFunction,
    mu: &GridFunction,
    cfg: &KernelQuadratureConfig,
) -> Result<VekuaDecomposition> {
    similarity_decompose_with(h, mu, cfg, DEFAULT_RESIDUAL_THRESHOLD)
}

/// `h = phi e^{Tu}`; `threshold` bounds the Vekua residual relative to
/// `max(1, sup |h|)`.
///
/// `T u` is evaluated at the nodes by the grid route of
/// [`crate::singint::cauchy_green_grid`]; `cfg` is validated for parity with
/// the point-evaluation API.
pub fn similarity_decompose_with(
    h: &GridFunction,
    mu: &GridFunction,
    cfg: &KernelQuadratureConfig,
    threshold: f64,
) -> Result<VekuaDecomposition> {
    cfg.validate()?;
    h.check_same_grid(mu)?;
    let h_boundary = h.circle_trace();
    let h_max = h.max_abs().max(h_boundary.max_abs());
    if h_max == 0.0 || h_boundary.min_abs() <= BOUNDARY_ZERO_RATIO * h_max {
        return Err(Error::BoundaryZero {
            min_modulus: h_boundary.min_abs(),
        });
    }
    let residual = vekua_residual(h, mu)?;
    let bound = threshold * h_max.max(1.0);
    if residual > bound {
        return Err(Error::NotGeneralizedAnalytic {
            residual,
            threshold: bound,
        });
    }

    let u = h.zip_with(mu, |hv, m| {
        if hv.norm() < ZERO_CUTOFF {
            ZERO
        } else {
            m * hv.conj() / hv
        }
    })?;
    let out = cauchy_green_grid(&u);
    let tu = out.field;
    let phi = h.zip_with(&tu, |hv, t| hv * (-t).exp())?;
    let phi_boundary = CircleFunction::new(
        h_boundary
            .values()
            .iter()
            .zip(out.boundary.values())
            .map(|(hv, t)| hv * (-t).exp())
            .collect(),
    )?;
    let zeros = count_zeros(&phi_boundary)?;
    let dbar_phi_residual = interior_max(dbar(&phi)?.values(), h.grid());
    let reconstruction_error = phi.zip_with(&tu, |p, t| p * t.exp())?.max_abs_diff(h)?;
    Ok(VekuaDecomposition {
        phi,
        tu,
        u,
        phi_boundary,
        zero_count: zeros.count,
        zero_count_confidence: zeros.confidence,
        dbar_phi_residual,
        reconstruction_error,
        vekua_residual: residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBounds {
    pub sup_phi0: f64,
    pub inf_phi0: f64,
    pub lipschitz_tu: f64,
}

#[derive(Clone, Debug)]
pub struct NormalizedDecomposition {
    pub phi0: GridFunction,
    pub monic_roots: Vec<Complex64>,
    pub tu: GridFunction,
    pub bounds: NormalizedBounds,
    /// `max |phi0 p e^{Tu} - h|`.
    pub reconstruction_error: f64,
    pub decomposition: VekuaDecomposition,
}

/// Radius of the circle on which root power sums are integrated.
const ROOT_CONTOUR: f64 = 0.75;
const ROOT_CONTOUR_POINTS: usize = 512;

pub fn monic_eval(roots: &[Complex64], w: Complex64) -> Complex64 {
    roots.iter().map(|r| w - r).product()
}

/// `h = phi0 p e^{Tu}` where `p` is the monic polynomial of the zeros of `h`,
/// all required to lie in `|w| < 1/2`.
pub fn normalized_decompose(
    h: &GridFunction,
    mu: &GridFunction,
    eps: f64,
) -> Result<NormalizedDecomposition> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let grid = h.grid().clone();
    for (&w, v) in grid.nodes().iter().zip(h.values()) {
        if w.norm() > 0.5 && v.norm() <= eps {
            return Err(Error::HypothesisViolation(format!(
                "|h({w:.4})| = {:.3e} <= eps = {eps:e} outside |w| <= 1/2",
                v.norm()
            )));
        }
    }
    let dec = similarity_decompose(h, mu, &KernelQuadratureConfig::default())?;
    let n = dec.zero_count;

    let coeffs = cauchy_circle_coefficients(&dec.phi_boundary);
    let derivative: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * k as f64)
        .collect();
    let roots = locate_roots(&coeffs, &derivative, n)?;
    for r in &roots {
        if r.norm() >= 0.5 {
            return Err(Error::HypothesisViolation(format!(
                "zero at {r:.4} lies outside |w| < 1/2"
            )));
        }
    }

    let phi0_boundary = CircleFunction::new(
        dec.phi_boundary
            .values()
            .iter()
            .zip(dec.phi_boundary.points())
            .map(|(v, z)| v / monic_eval(&roots, z))
            .collect(),
    )?;
    let phi0_coeffs = cauchy_circle_coefficients(&phi0_boundary);
    let phi0 = GridFunction::new(
        grid.clone(),
        grid.nodes()
            .iter()
            .map(|&w| eval_taylor(&phi0_coeffs, w))
            .collect(),
    )?;
    let bounds = NormalizedBounds {
        sup_phi0: phi0.max_abs(),
        inf_phi0: phi0.min_abs(),
        lipschitz_tu: lipschitz_estimate(&dec.tu),
    };
    let reconstruction_error = grid
        .nodes()
        .iter()
        .zip(phi0.values())
        .zip(dec.tu.values().iter().zip(h.values()))
        .map(|((&w, p0), (t, hv))| (p0 * monic_eval(&roots, w) * t.exp() - hv).norm())
        .fold(0.0, f64::max);
    Ok(NormalizedDecomposition {
        phi0,
        monic_roots: roots,
        tu: dec.tu.clone(),
        bounds,
        reconstruction_error,
        decomposition: dec,
    })
}

/// Zeros of the holomorphic function with Taylor coefficients `coeffs` inside
/// the root contour: power sums by the argument principle, Newton's identities
/// for the monic polynomial, simultaneous iteration for its roots, then Newton
/// polishing on the function itself.
fn locate_roots(coeffs: &[Complex64], derivative: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    let m = ROOT_CONTOUR_POINTS;
    let mut sums = vec![ZERO; n + 1];
    for k in 0..m {
        let w = Complex64::from_polar(ROOT_CONTOUR, 2.0 * PI * k as f64 / m as f64);
        let ratio = eval_taylor(derivative, w) / eval_taylor(coeffs, w);
        let mut power = w;
        for s in sums.iter_mut() {
            *s += ratio * power;
            power *= w;
        }
    }
    sums.iter_mut().for_each(|s| *s /= m as f64);
    let enclosed = sums[0].re.round();
    if (enclosed - n as f64).abs() > 0.5 || (sums[0].re - enclosed).abs() > 0.1 {
        return Err(Error::RootFinding(format!(
            "{:.3} zeros inside |w| < {ROOT_CONTOUR}, expected {n}",
            sums[0].re
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // elementary symmetric polynomials e_k of the roots from power sums p_k = sums[k]
    let mut e = vec![ZERO; n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        let mut acc = ZERO;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * sums[i];
        }
        e[k] = acc / k as f64;
    }
    // p(w) = w^n - e1 w^{n-1} + e2 w^{n-2} - ...
    let poly: Vec<Complex64> = (0..=n).map(|k| if k % 2 == 0 { e[k] } else { -e[k] }).collect();
    let mut roots = polynomial_roots(&poly)?;
    for r in roots.iter_mut() {
        let start = *r;
        let mut converged = false;
        for _ in 0..50 {
            let f = eval_taylor(coeffs, *r);
            let df = eval_taylor(derivative, *r);
            if df.norm() == 0.0 {
                break;
            }
            let step = f / df;
            *r -= step;
            if step.norm() < 1e-13 {
                converged = true;
                break;
            }
        }
        if !converged || (*r - start).norm() > 0.05 {
            return Err(Error::RootFinding(format!(
                "Newton polishing from {start:.4} did not settle (ended at {:.4})",
                *r
            )));
        }
    }
    Ok(roots)
}

/// Roots of the monic polynomial `w^n + poly[1] w^{n-1} + ... + poly[n]`
/// by Durand-Kerner iteration.
fn polynomial_roots(poly: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = poly.len() - 1;
    let eval = |w: Complex64| poly.iter().fold(ZERO, |acc, &c| acc * w + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powi(k as i32) * 0.5).collect();
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let denom: Complex64 = (0..n).filter(|&j| j != i).map(|j| roots[i] - roots[j]).product();
            if denom.norm() == 0.0 {
                roots[i] += Complex64::new(1e-6, 1e-6);
                change = f64::INFINITY;
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            change = change.max(step.norm());
        }
        if change < 1e-14 {
            return Ok(roots);
        }
    }
    Err(Error::RootFinding(
        "polynomial root iteration did not converge".into(),
    ))
}

/// Largest difference quotient between grid neighbours (radial and angular).
pub fn lipschitz_estimate(f: &GridFunction) -> f64 {
    let g = f.grid();
    let (nr, nt) = (g.radial_count(), g.angular_count());
    let nodes = g.nodes();
    let v = f.values();
    let mut best: f64 = 0.0;
    for i in 0..nr {
        for j in 0..nt {
            let k = g.index(i, j);
            let mut pairs = vec![g.index(i, (j + 1) % nt)];
            if i + 1 < nr {
                pairs.push(g.index(i + 1, j));
            }
            for other in pairs {
                let d = (nodes[k] - nodes[other]).norm();
                best = best.max((v[k] - v[other]).norm() / d);
            }
        }
    }
    best
}

/// `max |f(a) - f(b)| / |a - b|^alpha` over pairs of a node subset of at most
/// `max_nodes` nodes (every k-th node).
pub fn holder_seminorm_estimate(f: &GridFunction, alpha: f64, max_nodes: usize) -> f64 {
    let nodes = f.grid().nodes();
    let stride = nodes.len().div_ceil(max_nodes.max(2));
    let picked: Vec<(Complex64, Complex64)> = nodes
        .iter()
        .zip(f.values())
        .step_by(stride)
        .map(|(&w, &v)| (w, v))
        .collect();
    let mut best: f64 = 0.0;
    for (a, &(wa, va)) in picked.iter().enumerate() {
        for &(wb, vb) in &picked[a + 1..] {
            let d = (wa - wb).norm();
            if d > 0.0 {
                best = best.max((va - vb).norm() / d.powf(alpha));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha_hat: f64,
    /// Coefficient of determination of the log-log fit.
    pub fit_quality: f64,
    pub pairs_used: usize,
}

pub const MIN_HOLDER_SAMPLES: usize = 8;

/// Least-squares slope of `log sup_w |tu_a - tu_b|` against `log |z_a - z_b|`
/// over at most `pair_budget` parameter pairs, clamped to `[0, 1]`.
pub fn holder_exponent_estimate(
    family: &[(Complex64, GridFunction)],
    pair_budget: usize,
) -> Result<HolderEstimate> {
    if family.len() < MIN_HOLDER_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "{} parameter samples, need at least {MIN_HOLDER_SAMPLES}",
            family.len()
        )));
    }
    if pair_budget == 0 {
        return Err(Error::InvalidArgument("pair budget must be positive".into()));
    }
    for (_, f) in &family[1..] {
        family[0].1.check_same_grid(f)?;
    }
    let all: Vec<(usize, usize)> = (0..family.len())
        .flat_map(|a| (a + 1..family.len()).map(move |b| (a, b)))
        .collect();
    let stride = all.len().div_ceil(pair_budget);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zero_pairs = 0;
    for &(a, b) in all.iter().step_by(stride) {
        let dz = (family[a].0 - family[b].0).norm();
        if dz == 0.0 {
            continue;
        }
        let df = family[a].1.max_abs_diff(&family[b].1)?;
        if df == 0.0 {
            zero_pairs += 1;
            continue;
        }
        xs.push(dz.ln());
        ys.push(df.ln());
    }
    if xs.len() < 2 {
        // differences vanish: constant in the parameter
        return Ok(HolderEstimate {
            alpha_hat: 1.0,
            fit_quality: 1.0,
            pairs_used: zero_pairs,
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all parameter distances are equal".into()));
    }
    let slope = sxy / sxx;
    let fit_quality = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(HolderEstimate {
        alpha_hat: slope.clamp(0.0, 1.0),
        fit_quality,
        pairs_used: xs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaLemmaReport {
    pub measured_area: f64,
    pub area_std_error: f64,
    /// `pi n delta^{2/n}`.
    pub area_bound: f64,
    /// Estimate of `iint_E |w|^{-1} dA`.
    pub measured_integral: f64,
    /// `2 (pi m(E))^{1/2}` with the measured area.
    pub integral_bound: f64,
    /// Standard error of `measured_integral - integral_bound`.
    pub integral_std_error: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl AreaLemmaReport {
    /// Both bounds hold within `k` standard errors.
    pub fn within_bounds(&self, k: f64) -> bool {
        self.measured_area <= self.area_bound + k * self.area_std_error
            && self.measured_integral <= self.integral_bound + k * self.integral_std_error
    }
}

pub const MIN_AREA_SAMPLES: usize = 10_000;

/// Monte-Carlo check of the sublevel-set estimates for `E = {|p| < delta}`,
/// `p` the monic polynomial with the given roots.
///
/// Points are drawn with uniform radius and angle in the disc of radius
/// `1 + delta^{1/n}` (which contains `E`); weighting by the inverse density
/// keeps both estimators, including the one for `iint |w|^{-1}`, of bounded
/// variance.
pub fn area_lemma_check(
    roots: &[Complex64],
    delta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<AreaLemmaReport> {
    if sample_count < MIN_AREA_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "sample_count {sample_count} < {MIN_AREA_SAMPLES}"
        )));
    }
    if roots.is_empty() {
        return Err(Error::InvalidArgument("at least one root is required".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if let Some(r) = roots.iter().find(|r| !(r.norm() < 1.0)) {
        return Err(Error::OutOfDomain(*r));
    }
    let n = roots.len() as f64;
    let radius = 1.0 + delta.powf(1.0 / n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // per-sample contributions: area x_i = 2 pi R |w| 1_E, integral y_i = 2 pi R 1_E
    let (mut sx, mut sxx, mut sy, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..sample_count {
        let r = rng.gen::<f64>() * radius;
        let theta = rng.gen::<f64>() * 2.0 * PI;
        let w = Complex64::from_polar(r, theta);
        if monic_eval(roots, w).norm() < delta {
            let x = 2.0 * PI * radius * r;
            let y = 2.0 * PI * radius;
            sx += x;
            sxx += x * x;
            sy += y;
            syy += y * y;
            sxy += x * y;
        }
    }
    let m = sample_count as f64;
    let (area, integral) = (sx / m, sy / m);
    let var_x = (sxx / m - area * area).max(0.0);
    let var_y = (syy / m - integral * integral).max(0.0);
    let cov = sxy / m - area * integral;
    let integral_bound = 2.0 * (PI * area).sqrt();
    // delta method for y - 2 sqrt(pi x): gradient (-sqrt(pi / x), 1)
    let g = if area > 0.0 { (PI / area).sqrt() } else { 0.0 };
    let var_diff = (var_y - 2.0 * g * cov + g * g * var_x).max(0.0);
    Ok(AreaLemmaReport {
        measured_area: area,
        area_std_error: (var_x / m).sqrt(),
        area_bound: PI * n * delta.powf(2.0 / n),
        measured_integral: integral,
        integral_bound,
        integral_std_error: (var_diff / m).sqrt(),
        sample_count,
        seed,
    })
}

/// A generalized analytic function with prescribed zeros.
#[derive(Clone, Debug)]
pub struct GeneralizedAnalytic {
    pub h: GridFunction,
    pub u: GridFunction,
    pub tu: GridFunction,
    pub iterations: usize,
}

/// Solves for `h = p e^{Tu}` with `h_wbar = mu conj(h)`, where `p` is the monic
/// polynomial with the given roots, by damped iteration of
/// `u = mu <p> e^{conj(Tu) - Tu}`.
pub fn generalized_analytic_with_zeros(
    mu: &GridFunction,
    roots: &[Complex64],
    max_iterations: usize,
    tol: f64,
) -> Result<GeneralizedAnalytic> {
    let grid: Arc<DiscGrid> = mu.grid().clone();
    let p: Vec<Complex64> = grid.nodes().iter().map(|&w| monic_eval(roots, w)).collect();
    let phase: Vec<Complex64> = p
        .iter()
        .map(|v| {
            if v.norm() < ZERO_CUTOFF {
                ZERO
            } else {
                v.conj() / v
            }
        })
        .collect();
    let damping = 0.7;
    let mut u = GridFunction::zeros(&grid);
    let mut tu = GridFunction::zeros(&grid);
    let mut change = f64::INFINITY;
    for it in 1..=max_iterations {
        let target: Vec<Complex64> = mu
            .values()
            .iter()
            .zip(&phase)
            .zip(tu.values())
            .map(|((m, ph), t)| m * ph * (t.conj() - t).exp())
            .collect();
        let next: Vec<Complex64> = u
            .values()
            .iter()
            .zip(&target)
            .map(|(old, new)| old + damping * (new - old))
            .collect();
        change = u
            .values()
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        u = GridFunction::new(grid.clone(), next)?;
        tu = cauchy_green_grid(&u).field;
        if change < tol {
            let h = GridFunction::new(
                grid.clone(),
                p.iter().zip(tu.values()).map(|(pv, t)| pv * t.exp()).collect(),
            )?;
            return Ok(GeneralizedAnalytic {
                h,
                u,
                tu,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual: change,
    })
}
