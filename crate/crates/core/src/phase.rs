//! Phase functions `<w> = conj(w) / w` and the decomposition of the phase of
//! a binomial product `w^n (w - w0)` into phases of binomials.
//!
//! The identity
//!
//! ```text
//! <w^n (w - w0)> = <w0 w^n> + <w0^n (w - w0)>
//!                + sum_{k=1..n} sum_{j=1..n+1} c_kj <w0>^{n+1-j} int_0^1 <w - w0 t>^j (1 - t)^{k-1} dt
//! ```
//!
//! holds with real constants `c_kj`. They are recovered here by least squares
//! on random sample pairs and certified by the residual on held-out pairs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const MAX_DEGREE: usize = 6;
/// Absolute tolerance of the `t`-integrals.
pub const QUADRATURE_TOL: f64 = 1e-9;
/// Smallest admissible ratio of extreme singular values of the design matrix.
pub const MIN_SINGULAR_RATIO: f64 = 1e-10;

pub fn phase(w: Complex64) -> Result<Complex64> {
    if w == ZERO || !w.is_finite() {
        return Err(Error::UndefinedPhase);
    }
    // conj(w)/w = conj(w)^2 / |w|^2, normalized to kill rounding in the modulus
    let v = w.conj() * w.conj();
    Ok(v / v.norm())
}

fn phase_unchecked(w: Complex64) -> Complex64 {
    let v = w.conj() * w.conj();
    v / v.norm()
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (non-negative half).
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const MAX_BISECTIONS: u32 = 40;

/// One 15-point Kronrod estimate of a vector integrand and its error estimate.
fn gk15<F>(f: &F, a: f64, b: f64, dim: usize) -> (Vec<Complex64>, f64)
where
    F: Fn(f64) -> Vec<Complex64>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![ZERO; dim];
    let mut gauss = vec![ZERO; dim];
    for (i, &x) in GK_NODES.iter().enumerate() {
        let points: Vec<f64> = if x == 0.0 {
            vec![centre]
        } else {
            vec![centre - half * x, centre + half * x]
        };
        for t in points {
            let v = f(t);
            for d in 0..dim {
                kronrod[d] += v[d] * GK_WEIGHTS[i];
                if i % 2 == 1 {
                    gauss[d] += v[d] * GAUSS_WEIGHTS[i / 2];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        kronrod[d] *= half;
        gauss[d] *= half;
        err = err.max((kronrod[d] - gauss[d]).norm());
    }
    (kronrod, err)
}

/// Adaptive Gauss-Kronrod quadrature of a vector of complex integrands,
/// bisecting until every component meets the absolute tolerance.
pub fn integrate_adaptive<F>(f: &F, a: f64, b: f64, dim: usize, abs_tol: f64) -> Vec<Complex64>
where
    F: Fn(f64) -> Vec<Complex64>,
{
    fn recurse<F: Fn(f64) -> Vec<Complex64>>(
        f: &F,
        a: f64,
        b: f64,
        dim: usize,
        tol: f64,
        depth: u32,
        whole: (Vec<Complex64>, f64),
    ) -> Vec<Complex64> {
        let (value, err) = whole;
        if err <= tol || depth >= MAX_BISECTIONS {
            return value;
        }
        let mid = 0.5 * (a + b);
        let left = gk15(f, a, mid, dim);
        let right = gk15(f, mid, b, dim);
        let mut l = recurse(f, a, mid, dim, 0.5 * tol, depth + 1, left);
        let r = recurse(f, mid, b, dim, 0.5 * tol, depth + 1, right);
        l.iter_mut().zip(r).for_each(|(x, y)| *x += y);
        l
    }
    let whole = gk15(f, a, b, dim);
    recurse(f, a, b, dim, abs_tol, 0, whole)
}

/// `<w0>^{n+1-j} int_0^1 <w - w0 t>^j (1 - t)^{k-1} dt`, ordered `k`-major.
fn basis_values(n: usize, w0: Complex64, w: Complex64) -> Vec<Complex64> {
    let dim = n * (n + 1);
    let integrand = |t: f64| {
        let p = phase_unchecked(w - w0 * t);
        let mut out = Vec::with_capacity(dim);
        let mut weight = 1.0;
        for _k in 1..=n {
            let mut pj = p;
            for _j in 1..=n + 1 {
                out.push(pj * weight);
                pj *= p;
            }
            weight *= 1.0 - t;
        }
        out
    };
    let integrals = integrate_adaptive(&integrand, 0.0, 1.0, dim, QUADRATURE_TOL);
    let p0 = phase_unchecked(w0);
    let mut out = Vec::with_capacity(dim);
    for k in 0..n {
        for j in 1..=n + 1 {
            out.push(p0.powi((n + 1 - j) as i32) * integrals[k * (n + 1) + j - 1]);
        }
    }
    out
}

/// `<w^n (w - w0)> - <w0 w^n> - <w0^n (w - w0)>`.
fn identity_target(n: usize, w0: Complex64, w: Complex64) -> Complex64 {
    let wn = w.powi(n as i32);
    phase_unchecked(wn * (w - w0)) - phase_unchecked(w0 * wn) - phase_unchecked(w0.powi(n as i32) * (w - w0))
}

fn segment_distance_to_origin(a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return a.norm();
    }
    let t = (-(a.conj() * d).re / len2).clamp(0.0, 1.0);
    (a + d * t).norm()
}

fn check_pair(w0: Complex64, w: Complex64) -> Result<()> {
    if w0 == ZERO || w == ZERO || w == w0 || !w.is_finite() || !w0.is_finite() {
        return Err(Error::UndefinedPhase);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialDecompCoeffs {
    pub n: usize,
    pub seed: u64,
    /// `c[k-1][j-1]`.
    pub c: Vec<Vec<f64>>,
    /// Max identity error over the held-out pairs.
    pub fit_residual: f64,
    pub sample_count: usize,
}

/// Sample pairs `(w0, w)` from the fitting domain.
pub fn sample_pairs(count: usize, rng: &mut impl Rng) -> Vec<(Complex64, Complex64)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w0 = Complex64::from_polar(rng.gen_range(0.1..=1.0), rng.gen_range(0.0..2.0 * PI));
        let w = Complex64::from_polar(2.0 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
        if (w - w0).norm() < 0.05 || w.norm() < 0.05 {
            continue;
        }
        if segment_distance_to_origin(w, w - w0) < 1e-3 {
            continue;
        }
        out.push((w0, w));
    }
    out
}

/// Least-squares coefficients from explicit sample pairs.
pub fn fit_from_samples(n: usize, samples: &[(Complex64, Complex64)]) -> Result<Vec<Vec<f64>>> {
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "n = {n} outside 1..={MAX_DEGREE}"
        )));
    }
    let dim = n * (n + 1);
    let rows = samples.len();
    if rows == 0 {
        return Err(Error::DegenerateFit("no samples".into()));
    }
    let mut design = DMatrix::<f64>::zeros(2 * rows, dim);
    let mut rhs = DVector::<f64>::zeros(2 * rows);
    for (r, &(w0, w)) in samples.iter().enumerate() {
        check_pair(w0, w)?;
        let basis = basis_values(n, w0, w);
        for (col, b) in basis.iter().enumerate() {
            design[(2 * r, col)] = b.re;
            design[(2 * r + 1, col)] = b.im;
        }
        let t = identity_target(n, w0, w);
        rhs[2 * r] = t.re;
        rhs[2 * r + 1] = t.im;
    }
    if 2 * rows < dim {
        return Err(Error::DegenerateFit(format!(
            "{rows} samples cannot determine {dim} coefficients; draw more samples"
        )));
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin / smax < MIN_SINGULAR_RATIO {
        return Err(Error::DegenerateFit(format!(
            "design matrix singular value ratio {:.3e}; draw more (and more varied) samples",
            if smax == 0.0 { 0.0 } else { smin / smax }
        )));
    }
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    Ok((0..n)
        .map(|k| (0..=n).map(|j| x[k * (n + 1) + j]).collect())
        .collect())
}

/// Number of held-out pairs used to certify a fit.
pub const HELD_OUT_PAIRS: usize = 200;

/// Fits the constants for degree `n` from `sample_count` random pairs and
/// certifies them on independent held-out pairs.
pub fn fit_binomial_coeffs(n: usize, sample_count: usize, seed: u64) -> Result<BinomialDecompCoeffs> {
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "n = {n} outside 1..={MAX_DEGREE}"
        )));
    }
    if sample_count < 20 * n * n {
        return Err(Error::InvalidArgument(format!(
            "sample_count {sample_count} < 20 n^2 = {}",
            20 * n * n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = sample_pairs(sample_count, &mut rng);
    let c = fit_from_samples(n, &train)?;
    let mut coeffs = BinomialDecompCoeffs {
        n,
        seed,
        c,
        fit_residual: 0.0,
        sample_count,
    };
    let held_out = sample_pairs(HELD_OUT_PAIRS, &mut rng);
    coeffs.fit_residual = validation_error(&coeffs, &held_out)?;
    Ok(coeffs)
}

/// Max over `pairs` of `|rhs - <w^n (w - w0)>|`.
pub fn validation_error(coeffs: &BinomialDecompCoeffs, pairs: &[(Complex64, Complex64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(w0, w) in pairs {
        let lhs = phase(w.powi(coeffs.n as i32) * (w - w0))?;
        worst = worst.max((binomial_phase_rhs(coeffs, w0, w)? - lhs).norm());
    }
    Ok(worst)
}

/// Right side of the binomial identity with the given constants.
pub fn binomial_phase_rhs(coeffs: &BinomialDecompCoeffs, w0: Complex64, w: Complex64) -> Result<Complex64> {
    check_pair(w0, w)?;
    let n = coeffs.n;
    let basis = basis_values(n, w0, w);
    let mut sum = phase(w0 * w.powi(n as i32))? + phase(w0.powi(n as i32) * (w - w0))?;
    for k in 0..n {
        for j in 0..=n {
            sum += basis[k * (n + 1) + j] * coeffs.c[k][j];
        }
    }
    if !sum.is_finite() {
        return Err(Error::UndefinedPhase);
    }
    Ok(sum)
}

/// `<(w - w1)(w - w2)>` through the degree-one identity after the shift
/// `x = w - w1`, `x0 = w2 - w1`.
pub fn two_factor_phase_rhs(
    coeffs: &BinomialDecompCoeffs,
    w1: Complex64,
    w2: Complex64,
    w: Complex64,
) -> Result<Complex64> {
    if coeffs.n != 1 {
        return Err(Error::InvalidArgument(
            "two-factor form needs degree-one constants".into(),
        ));
    }
    binomial_phase_rhs(coeffs, w2 - w1, w - w1)
}
