//! Polar discretization of the closed unit disc and the unit circle.
//!
//! Nodes sit at radial cell midpoints `r_i = (i + 1/2) / R` and angles
//! `theta_j = 2 pi j / T`, so no node lies at the origin or on `|w| = 1`.
//! Quadrature weights are the exact areas of the polar cells and sum to pi.
//!
//! Wirtinger derivatives are fourth-order finite differences in `r` and
//! `theta`, assembled in polar form,
//!
//! ```text
//! d/dwbar = e^{i theta}/2 (d/dr + (i/r) d/dtheta)
//! d/dw    = e^{-i theta}/2 (d/dr - (i/r) d/dtheta)
//! ```
//!
//! Radial stencils near the centre reach across the origin (the virtual ring
//! at `-r_m` is ring `m` rotated by pi); the two outermost rings use
//! off-centre stencils.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RADIAL: usize = 4;
pub const MIN_ANGULAR: usize = 8;
/// Radial resolution below which finite-difference derivatives are refused.
pub const MIN_RADIAL_FOR_DERIVATIVES: usize = 8;

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Tensor-product polar grid on the closed unit disc.
pub struct DiscGrid {
    radial_count: usize,
    angular_count: usize,
    nodes: Vec<Complex64>,
    weights: Vec<f64>,
    fft: OnceLock<FftPair>,
}

impl fmt::Debug for DiscGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscGrid")
            .field("radial_count", &self.radial_count)
            .field("angular_count", &self.angular_count)
            .finish_non_exhaustive()
    }
}

/// Build the midpoint polar grid with `radial_count` rings of `angular_count` nodes.
pub fn make_polar_grid(radial_count: usize, angular_count: usize) -> Result<Arc<DiscGrid>> {
    DiscGrid::new(radial_count, angular_count).map(Arc::new)
}

impl DiscGrid {
    pub fn new(radial_count: usize, angular_count: usize) -> Result<Self> {
        if radial_count < MIN_RADIAL {
            return Err(Error::InvalidArgument(format!(
                "radial_count {radial_count} < {MIN_RADIAL}"
            )));
        }
        if angular_count < MIN_ANGULAR {
            return Err(Error::InvalidArgument(format!(
                "angular_count {angular_count} < {MIN_ANGULAR}"
            )));
        }
        // The cross-origin stencil pairs angle j with j + T/2.
        if angular_count % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "angular_count {angular_count} must be even"
            )));
        }
        let dr = 1.0 / radial_count as f64;
        let dtheta = 2.0 * PI / angular_count as f64;
        let mut nodes = Vec::with_capacity(radial_count * angular_count);
        let mut weights = Vec::with_capacity(radial_count * angular_count);
        for i in 0..radial_count {
            let r = (i as f64 + 0.5) * dr;
            let (r_in, r_out) = (i as f64 * dr, (i + 1) as f64 * dr);
            let area = 0.5 * (r_out * r_out - r_in * r_in) * dtheta;
            for j in 0..angular_count {
                nodes.push(Complex64::from_polar(r, j as f64 * dtheta));
                weights.push(area);
            }
        }
        Ok(Self {
            radial_count,
            angular_count,
            nodes,
            weights,
            fft: OnceLock::new(),
        })
    }

    pub fn radial_count(&self) -> usize {
        self.radial_count
    }

    pub fn angular_count(&self) -> usize {
        self.angular_count
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dr(&self) -> f64 {
        1.0 / self.radial_count as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.angular_count as f64
    }

    #[inline]
    pub fn radius(&self, ring: usize) -> f64 {
        (ring as f64 + 0.5) / self.radial_count as f64
    }

    #[inline]
    pub fn angle(&self, spoke: usize) -> f64 {
        spoke as f64 * self.dtheta()
    }

    #[inline]
    pub fn index(&self, ring: usize, spoke: usize) -> usize {
        ring * self.angular_count + spoke
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Local cell diameter near `w`, used to scale singularity exclusion.
    pub fn cell_size_at(&self, w: Complex64) -> f64 {
        self.dr().max(w.norm().max(0.5 * self.dr()) * self.dtheta())
    }

    /// Same shape as `other` (the grids generate identical nodes).
    pub fn same_shape(&self, other: &DiscGrid) -> bool {
        self.radial_count == other.radial_count && self.angular_count == other.angular_count
    }

    pub(crate) fn forward_fft(&self) -> Arc<dyn Fft<f64>> {
        self.fft_pair().forward.clone()
    }

    pub(crate) fn inverse_fft(&self) -> Arc<dyn Fft<f64>> {
        self.fft_pair().inverse.clone()
    }

    fn fft_pair(&self) -> &FftPair {
        self.fft.get_or_init(|| {
            let mut planner = FftPlanner::new();
            FftPair {
                forward: planner.plan_fft_forward(self.angular_count),
                inverse: planner.plan_fft_inverse(self.angular_count),
            }
        })
    }

    /// Angular Fourier coefficients of every ring: `out[i][m]` is the mode
    /// `m` (FFT ordering) of ring `i`, normalized so that
    /// `u(r_i, theta) = sum_m out[i][m] e^{i m theta}`.
    pub(crate) fn ring_spectra(&self, values: &[Complex64]) -> Vec<Vec<Complex64>> {
        let fft = self.forward_fft();
        let scale = 1.0 / self.angular_count as f64;
        values
            .chunks(self.angular_count)
            .map(|ring| {
                let mut buf = ring.to_vec();
                fft.process(&mut buf);
                buf.iter_mut().for_each(|c| *c *= scale);
                buf
            })
            .collect()
    }

    /// Periodic 4-point Lagrange interpolation along ring `ring` at angle `theta`.
    /// Negative ring indices address the mirror rings across the origin.
    fn ring_value(&self, values: &[Complex64], ring: isize, theta: f64) -> Complex64 {
        let (ring, theta) = if ring < 0 {
            ((-ring - 1) as usize, theta + PI)
        } else {
            (ring as usize, theta)
        };
        let t = self.angular_count as isize;
        let s = theta.rem_euclid(2.0 * PI) / self.dtheta();
        let base = s.floor() as isize - 1;
        let x = s - base as f64;
        let wts = lagrange4(x);
        let row = &values[ring * self.angular_count..(ring + 1) * self.angular_count];
        (0..4)
            .map(|k| row[(base + k as isize).rem_euclid(t) as usize] * wts[k])
            .sum()
    }

    /// Cubic interpolation of nodal values at an arbitrary point of the closed
    /// disc; extrapolates over the half cell between the last ring and `|w| = 1`.
    pub fn interpolate(&self, values: &[Complex64], w: Complex64) -> Complex64 {
        let r = w.norm();
        let theta = w.arg();
        let s = r * self.radial_count as f64 - 0.5;
        let mut base = s.floor() as isize - 1;
        base = base.min(self.radial_count as isize - 4);
        let x = s - base as f64;
        let wts = lagrange4(x);
        (0..4)
            .map(|k| self.ring_value(values, base + k as isize, theta) * wts[k])
            .sum()
    }
}

/// Weights of the 4-point Lagrange interpolant on nodes 0, 1, 2, 3 at `x`.
fn lagrange4(x: f64) -> [f64; 4] {
    [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ]
}

/// Complex samples at the nodes of a [`DiscGrid`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<DiscGrid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<DiscGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index,
                node: grid.nodes[index],
                value: values[index],
            });
        }
        Ok(Self { grid, values })
    }

    /// Values are trusted to be finite and of the right length.
    pub(crate) fn from_raw(grid: Arc<DiscGrid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: &Arc<DiscGrid>) -> Self {
        Self::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn constant(grid: &Arc<DiscGrid>, c: Complex64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<DiscGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn at(&self, ring: usize, spoke: usize) -> Complex64 {
        self.values[self.grid.index(ring, spoke)]
    }

    /// Pointwise image under `f`, which receives the node and the value.
    pub fn map(&self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let values = self
            .grid
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| f(w, v))
            .collect();
        Self::from_raw(self.grid.clone(), values)
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "grid mismatch: {}x{} vs {}x{}",
                self.grid.radial_count,
                self.grid.angular_count,
                other.grid.radial_count,
                other.grid.angular_count
            )))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Max modulus over rings `0..radial_count - 1` (the boundary ring excluded).
    pub fn max_abs_interior(&self) -> f64 {
        let n = self.grid.len() - self.grid.angular_count;
        self.values[..n].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Quadrature of the function over the disc.
    pub fn integrate(&self) -> Complex64 {
        self.values
            .iter()
            .zip(&self.grid.weights)
            .map(|(v, &a)| v * a)
            .sum()
    }

    pub fn interpolate(&self, w: Complex64) -> Complex64 {
        self.grid.interpolate(&self.values, w)
    }

    /// Boundary trace on `|w| = 1`, extrapolated from the outer rings, at the
    /// grid's own angles.
    pub fn circle_trace(&self) -> CircleFunction {
        let t = self.grid.angular_count;
        let values = (0..t)
            .map(|j| {
                let w = Complex64::from_polar(1.0, self.grid.angle(j));
                self.interpolate(w)
            })
            .collect();
        CircleFunction { values }
    }

    /// Values on ring `ring` as a circle function (at radius `grid.radius(ring)`).
    pub fn ring_trace(&self, ring: usize) -> CircleFunction {
        let t = self.grid.angular_count;
        CircleFunction {
            values: self.values[ring * t..(ring + 1) * t].to_vec(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, v| v * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|_, v| v.conj())
    }

    pub fn exp(&self) -> Self {
        self.map(|_, v| v.exp())
    }
}

impl std::ops::Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a + b).expect("grid mismatch in add")
    }
}

impl std::ops::Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a - b).expect("grid mismatch in sub")
    }
}

impl std::ops::Mul for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a * b).expect("grid mismatch in mul")
    }
}

/// Sample `f` at every node; fails on the first non-finite value.
pub fn sample(f: impl Fn(Complex64) -> Complex64, grid: &Arc<DiscGrid>) -> Result<GridFunction> {
    let values: Vec<Complex64> = grid.nodes.iter().map(|&w| f(w)).collect();
    GridFunction::new(grid.clone(), values)
}

/// Samples on the unit circle at `e^{2 pi i k / n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleFunction {
    values: Vec<Complex64>,
}

impl CircleFunction {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty circle function".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index,
                node: Self::point_of(index, values.len()),
                value: values[index],
            });
        }
        Ok(Self { values })
    }

    pub fn sample(angular_count: usize, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::new(
            (0..angular_count)
                .map(|k| f(Self::point_of(k, angular_count)))
                .collect(),
        )
    }

    pub fn point_of(k: usize, n: usize) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
    }

    pub fn angular_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        let n = self.values.len();
        (0..n).map(move |k| Self::point_of(k, n))
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Fourier coefficients `c_m` (FFT ordering) with `g = sum c_m zeta^m`.
    pub fn fourier(&self) -> Vec<Complex64> {
        let n = self.values.len();
        let mut buf = self.values.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }
}

fn radial_derivative(u: &GridFunction) -> Vec<Complex64> {
    let g = u.grid();
    let (nr, nt) = (g.radial_count, g.angular_count);
    let dr = g.dr();
    let v = u.values();
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for j in 0..nt {
        let opposite = (j + nt / 2) % nt;
        // ring m (m may be negative), with -1 - m read across the origin
        let at = |m: isize| {
            if m < 0 {
                v[g.index((-1 - m) as usize, opposite)]
            } else {
                v[g.index(m as usize, j)]
            }
        };
        for i in 0..nr {
            let m = i as isize;
            out[g.index(i, j)] = if i + 2 < nr {
                8.0 * (at(m + 1) - at(m - 1)) - (at(m + 2) - at(m - 2))
            } else if i + 2 == nr {
                3.0 * at(m + 1) + 10.0 * at(m) - 18.0 * at(m - 1) + 6.0 * at(m - 2) - at(m - 3)
            } else {
                25.0 * at(m) - 48.0 * at(m - 1) + 36.0 * at(m - 2) - 16.0 * at(m - 3) + 3.0 * at(m - 4)
            } / (12.0 * dr);
        }
    }
    out
}

fn angular_derivative(u: &GridFunction) -> Vec<Complex64> {
    let g = u.grid();
    let (nr, nt) = (g.radial_count, g.angular_count);
    let dt = g.dtheta();
    let v = u.values();
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for i in 0..nr {
        for j in 0..nt {
            let at = |o: usize| v[g.index(i, (j + o) % nt)];
            // fourth-order periodic stencil
            out[g.index(i, j)] = (8.0 * (at(1) - at(nt - 1)) - (at(2) - at(nt - 2))) / (12.0 * dt);
        }
    }
    out
}

fn wirtinger(u: &GridFunction, conjugate: bool) -> Result<GridFunction> {
    let g = u.grid();
    if g.radial_count < MIN_RADIAL_FOR_DERIVATIVES {
        return Err(Error::InvalidArgument(format!(
            "radial_count {} too coarse for derivatives (need {})",
            g.radial_count, MIN_RADIAL_FOR_DERIVATIVES
        )));
    }
    let ur = radial_derivative(u);
    let ut = angular_derivative(u);
    let i = Complex64::i();
    let values = g
        .nodes
        .iter()
        .zip(ur.iter().zip(&ut))
        .map(|(&w, (&dr, &dt))| {
            let r = w.norm();
            let e = w / r;
            if conjugate {
                0.5 * e * (dr + i * dt / r)
            } else {
                0.5 * e.conj() * (dr - i * dt / r)
            }
        })
        .collect();
    Ok(GridFunction::from_raw(g.clone(), values))
}

/// Finite-difference `d/dwbar`.
pub fn dbar(u: &GridFunction) -> Result<GridFunction> {
    wirtinger(u, true)
}

/// Finite-difference `d/dw`.
pub fn dz(u: &GridFunction) -> Result<GridFunction> {
    wirtinger(u, false)
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    radial_count: usize,
    angular_count: usize,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionJson {
    grid: GridHeader,
    values: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    re_w: f64,
    im_w: f64,
    re_val: f64,
    im_val: f64,
}

impl GridFunction {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (w, v) in self.grid.nodes.iter().zip(&self.values) {
            wtr.serialize(CsvRow {
                re_w: w.re,
                im_w: w.im,
                re_val: v.re,
                im_val: v.im,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads values written by [`GridFunction::write_csv`] onto `grid`; node
    /// coordinates must match to 1e-9.
    pub fn read_csv<R: Read>(grid: &Arc<DiscGrid>, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut values = Vec::with_capacity(grid.len());
        for (k, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let node = *grid
                .nodes
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("csv has more than {} rows", grid.len())))?;
            if (node - Complex64::new(row.re_w, row.im_w)).norm() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {k} is not at node {node}")));
            }
            values.push(Complex64::new(row.re_val, row.im_val));
        }
        Self::new(grid.clone(), values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GridFunctionJson {
            grid: GridHeader {
                radial_count: self.grid.radial_count,
                angular_count: self.grid.angular_count,
            },
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        })
        .expect("grid function serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let parsed: GridFunctionJson = serde_json::from_value(value.clone())?;
        let grid = make_polar_grid(parsed.grid.radial_count, parsed.grid.angular_count)?;
        Self::new(
            grid,
            parsed
                .values
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn small_grid_has_32_nodes_and_area_pi() {
        let g = make_polar_grid(4, 8).unwrap();
        assert_eq!(g.len(), 32);
        assert!((g.total_weight() - PI).abs() < 0.05 * PI);
        assert!((g.total_weight() - PI).abs() < 1e-12);
    }

    #[test]
    fn fine_grid_weight_sum() {
        let g = make_polar_grid(128, 256).unwrap();
        assert_eq!(g.len(), 32768);
        // direct summation of exact ring areas, independent of the stored weights
        let dr = 1.0 / 128.0;
        let direct: f64 = (0..128)
            .map(|i| {
                let (a, b) = (i as f64 * dr, (i + 1) as f64 * dr);
                PI * (b * b - a * a)
            })
            .sum();
        assert!((g.total_weight() - direct).abs() < 1e-3);
        assert!((g.total_weight() - PI).abs() < 1e-3);
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(matches!(make_polar_grid(2, 8), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_polar_grid(4, 6), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_polar_grid(4, 9), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nodes_inside_disc_and_unique() {
        let g = make_polar_grid(16, 32).unwrap();
        assert!(g.nodes().iter().all(|w| w.norm() <= 1.0));
        for (a, wa) in g.nodes().iter().enumerate() {
            for wb in &g.nodes()[a + 1..] {
                assert!((wa - wb).norm() > 1e-12);
            }
        }
    }

    #[test]
    fn sample_identity_and_zero() {
        let g = make_polar_grid(4, 8).unwrap();
        let id = sample(|w| w, &g).unwrap();
        assert_eq!(id.values(), g.nodes());
        let z = sample(|_| c(0.0, 0.0), &g).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn sample_reports_non_finite_node() {
        let g = make_polar_grid(4, 8).unwrap();
        let pole = g.nodes()[5];
        let err = sample(|w| 1.0 / (w - pole), &g).unwrap_err();
        match err {
            Error::Evaluation { index, .. } => assert_eq!(index, 5),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn dbar_of_conjugate_is_one() {
        let g = make_polar_grid(32, 64).unwrap();
        let u = sample(|w| w.conj(), &g).unwrap();
        let d = dbar(&u).unwrap();
        let err = d.values().iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn dbar_of_holomorphic_vanishes() {
        let g = make_polar_grid(32, 64).unwrap();
        let u = sample(|w| w, &g).unwrap();
        assert!(dbar(&u).unwrap().max_abs() < 1e-5);
        let d = dz(&u).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).norm() < 1e-5));
    }

    #[test]
    fn dbar_of_modulus_squared() {
        let g = make_polar_grid(32, 64).unwrap();
        let u = sample(|w| c(w.norm_sqr(), 0.0), &g).unwrap();
        let d = dbar(&u).unwrap();
        let err = d
            .values()
            .iter()
            .zip(g.nodes())
            .map(|(v, w)| (v - w).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn dbar_converges_at_fourth_order() {
        let f = |w: Complex64| (w.conj() + 0.5 * w * w.conj()).exp();
        let df = |w: Complex64| (1.0 + 0.5 * w) * f(w);
        let err = |nr, nt| {
            let g = make_polar_grid(nr, nt).unwrap();
            let d = dbar(&sample(f, &g).unwrap()).unwrap();
            d.values()
                .iter()
                .zip(g.nodes())
                .map(|(v, &w)| (v - df(w)).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16, 32), err(32, 64));
        assert!(e1 / e2 >= 12.0, "{e1} {e2}");
    }

    #[test]
    fn dbar_needs_eight_rings() {
        let g = make_polar_grid(4, 8).unwrap();
        assert!(dbar(&GridFunction::zeros(&g)).is_err());
    }

    #[test]
    fn interpolation_reproduces_smooth_functions() {
        let g = make_polar_grid(64, 128).unwrap();
        let f = |w: Complex64| (w * 0.7).exp() + w.conj() * w;
        let u = sample(f, &g).unwrap();
        for &w in &[
            c(0.0, 0.0),
            c(0.3, -0.2),
            c(-0.71, 0.5),
            c(1.0, 0.0),
            c(0.0, -1.0),
        ] {
            assert!((u.interpolate(w) - f(w)).norm() < 1e-6, "{w}");
        }
    }

    #[test]
    fn circle_trace_matches_boundary_values() {
        let g = make_polar_grid(64, 128).unwrap();
        let u = sample(|w| w * w + w.conj(), &g).unwrap();
        let trace = u.circle_trace();
        for (z, v) in trace.points().zip(trace.values()) {
            assert!((v - (z * z + z.conj())).norm() < 1e-9);
        }
    }

    #[test]
    fn json_and_csv_roundtrip() {
        let g = make_polar_grid(8, 16).unwrap();
        let u = sample(|w| w * c(0.5, -2.0) + 1.0, &g).unwrap();
        let back = GridFunction::from_json(&u.to_json()).unwrap();
        assert_eq!(back.values(), u.values());
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("re_w,im_w,re_val,im_val"));
        let back = GridFunction::read_csv(&g, buf.as_slice()).unwrap();
        assert!(back.max_abs_diff(&u).unwrap() < 1e-15);
    }
}
