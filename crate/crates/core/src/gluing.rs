//! Coordinate models `H: (z, w) -> (z', w')`, pullback of the target
//! structure to coefficients `(a, b)`, extension across the singular set, and
//! attachment of solved discs to the torus `|z| = 1, |w| = r`.
//!
//! Writing the first column of the pullback rule `M (a, b)^T = N e_1` as
//!
//! ```text
//! h1 = -M10 / M11,  h2 = N10 / M11,  f = M00 + M01 h1,  g = N00 - M01 h2
//! ```
//!
//! gives `a = g / f` and `b = a h1 + h2`. For `A' = 0` and `w' = w` these are
//! `f = z'_z`, `g = -z'_zbar`, `h1 = -w'_z`, `h2 = -w'_zbar`.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acs::{pullback_parts, AcsMatrix, JacobianBlocks, Mat2};
use crate::discsolve::{
    solve_disc, torus_fill_with, DiscSolution, SolverConfig, StructureCoefficients, TorusFill,
};
use crate::error::{Error, Result};
use crate::grid::{dbar, make_polar_grid, DiscGrid, GridFunction};
use crate::vekua::{holder_exponent_estimate, lipschitz_estimate, normalized_decompose, HolderEstimate};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance of the test `|1 - |g|/|f|| < SIGMA_TOL` marking a node as singular.
pub const SIGMA_TOL: f64 = 1e-3;
/// Radius of the circle used to extend the pointwise coefficient across `f = 0`.
const POINT_EXTENSION_RADIUS: f64 = 1e-6;
const CONTOUR_POINTS: usize = 128;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `H(z, w) = (h(z, w), w)` with `h` holomorphic in `w`, target `A' = 0`.
    IntegrableGraph,
    General,
}

/// `coeff * z^z * conj(z)^zbar * w^w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTerm {
    pub coeff: [f64; 2],
    #[serde(default)]
    pub z: u32,
    #[serde(default)]
    pub zbar: u32,
    #[serde(default)]
    pub w: u32,
    #[serde(default)]
    pub wbar: u32,
}

impl PolynomialTerm {
    fn coefficient(&self) -> Complex64 {
        c(self.coeff[0], self.coeff[1])
    }
}

fn pow(x: Complex64, k: u32) -> Complex64 {
    if k == 0 {
        ONE
    } else {
        x.powu(k)
    }
}

fn eval_terms(terms: &[PolynomialTerm], z: Complex64, w: Complex64) -> [Complex64; 3] {
    // (h, h_z, h_zbar)
    let mut out = [ZERO; 3];
    for t in terms {
        let k = t.coefficient();
        let (zz, zb, ww) = (pow(z, t.z), pow(z.conj(), t.zbar), pow(w, t.w));
        out[0] += k * zz * zb * ww;
        if t.z > 0 {
            out[1] += k * t.z as f64 * pow(z, t.z - 1) * zb * ww;
        }
        if t.zbar > 0 {
            out[2] += k * t.zbar as f64 * zz * pow(z.conj(), t.zbar - 1) * ww;
        }
    }
    out
}

fn eval_terms_w(terms: &[PolynomialTerm], z: Complex64, w: Complex64) -> Complex64 {
    terms
        .iter()
        .filter(|t| t.w > 0)
        .map(|t| t.coefficient() * pow(z, t.z) * pow(z.conj(), t.zbar) * t.w as f64 * pow(w, t.w - 1))
        .sum()
}

type PointMap = Arc<dyn Fn(Complex64, Complex64) -> [Complex64; 2] + Send + Sync>;
type BlocksMap = Arc<dyn Fn(Complex64, Complex64) -> JacobianBlocks + Send + Sync>;
type TargetMap = Arc<dyn Fn(Complex64, Complex64) -> Mat2 + Send + Sync>;

#[derive(Clone)]
pub struct CoordinateModel {
    pub name: String,
    pub kind: ModelKind,
    h_map: PointMap,
    jacobian: BlocksMap,
    target: TargetMap,
    /// Slices are sampled on `|w| <= w_radius`; the coefficients clamp `|w|` to it.
    pub w_radius: f64,
}

impl fmt::Debug for CoordinateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordinateModel")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("w_radius", &self.w_radius)
            .finish_non_exhaustive()
    }
}

/// Model declaration as read from a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<PolynomialTerm>>,
}

pub const BUILTIN_MODELS: [&str; 4] = ["identity", "shear-2zbar-w", "blowup", "integrable-graph"];

impl CoordinateModel {
    pub fn new(
        name: impl Into<String>,
        kind: ModelKind,
        h_map: impl Fn(Complex64, Complex64) -> [Complex64; 2] + Send + Sync + 'static,
        jacobian: impl Fn(Complex64, Complex64) -> JacobianBlocks + Send + Sync + 'static,
        target: impl Fn(Complex64, Complex64) -> Mat2 + Send + Sync + 'static,
        w_radius: f64,
    ) -> Result<Self> {
        if !(w_radius > 0.0 && w_radius <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "w_radius {w_radius} outside (0, 1]"
            )));
        }
        Ok(Self {
            name: name.into(),
            kind,
            h_map: Arc::new(h_map),
            jacobian: Arc::new(jacobian),
            target: Arc::new(target),
            w_radius,
        })
    }

    /// `H(z, w) = (h(z, w), w)` for a polynomial `h` in `z, conj(z), w` and `A' = 0`.
    pub fn integrable_graph(
        name: impl Into<String>,
        terms: Vec<PolynomialTerm>,
        w_radius: f64,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty polynomial table".into()));
        }
        if let Some(t) = terms.iter().find(|t| t.wbar > 0 && t.coefficient() != ZERO) {
            return Err(Error::HypothesisViolation(format!(
                "term {t:?} depends on conj(w); h must be holomorphic in w"
            )));
        }
        let terms = Arc::new(terms);
        let (t1, t2) = (terms.clone(), terms);
        Self::new(
            name,
            ModelKind::IntegrableGraph,
            move |z, w| [eval_terms(&t1, z, w)[0], w],
            move |z, w| {
                let [_, hz, hzb] = eval_terms(&t2, z, w);
                let hw = eval_terms_w(&t2, z, w);
                JacobianBlocks {
                    z_prime_z: Mat2::new(hz, hw, ZERO, ONE),
                    z_prime_zbar: Mat2::new(hzb, ZERO, ZERO, ZERO),
                }
            },
            |_, _| Mat2::zeros(),
            w_radius,
        )
    }

    pub fn identity() -> Self {
        let term = PolynomialTerm {
            coeff: [1.0, 0.0],
            z: 1,
            zbar: 0,
            w: 0,
            wbar: 0,
        };
        Self::integrable_graph("identity", vec![term], 1.0).expect("valid table")
    }

    /// `H(z, w) = (z - 2 conj(z) w, w)`.
    pub fn shear() -> Self {
        let terms = vec![
            PolynomialTerm {
                coeff: [1.0, 0.0],
                z: 1,
                zbar: 0,
                w: 0,
                wbar: 0,
            },
            PolynomialTerm {
                coeff: [-2.0, 0.0],
                z: 0,
                zbar: 1,
                w: 1,
                wbar: 0,
            },
        ];
        Self::integrable_graph("shear-2zbar-w", terms, 1.0).expect("valid table")
    }

    /// `h(z, w) = z + eps conj(z) w`.
    pub fn perturbed_graph(eps: f64) -> Self {
        let terms = vec![
            PolynomialTerm {
                coeff: [1.0, 0.0],
                z: 1,
                zbar: 0,
                w: 0,
                wbar: 0,
            },
            PolynomialTerm {
                coeff: [eps, 0.0],
                z: 0,
                zbar: 1,
                w: 1,
                wbar: 0,
            },
        ];
        Self::integrable_graph("integrable-graph", terms, 1.0).expect("valid table")
    }

    /// `H(z, w) = (z w, w)` with target `A'(z', w') = [[conj(w'), -conj(z')], [0, 0]]`,
    /// admissible for `|w'| < 1`.
    pub fn blowup(w_radius: f64) -> Result<Self> {
        Self::new(
            "blowup",
            ModelKind::General,
            |z, w| [z * w, w],
            |z, w| JacobianBlocks {
                z_prime_z: Mat2::new(w, z, ZERO, ONE),
                z_prime_zbar: Mat2::zeros(),
            },
            |zp, wp| Mat2::new(wp.conj(), -zp.conj(), ZERO, ZERO),
            w_radius,
        )
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let mut model = match spec.name.as_str() {
            "identity" => Self::identity(),
            "shear-2zbar-w" => Self::shear(),
            "blowup" => Self::blowup(0.9)?,
            "integrable-graph" => match &spec.terms {
                Some(terms) => Self::integrable_graph("integrable-graph", terms.clone(), 1.0)?,
                None => Self::perturbed_graph(spec.epsilon.unwrap_or(0.3)),
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model '{other}', expected one of {BUILTIN_MODELS:?}"
                )))
            }
        };
        if let Some(radius) = spec.w_radius {
            if !(radius > 0.0 && radius <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "w_radius {radius} outside (0, 1]"
                )));
            }
            model.w_radius = radius;
        }
        Ok(model)
    }

    pub fn h_map(&self, z: Complex64, w: Complex64) -> [Complex64; 2] {
        (self.h_map)(z, w)
    }

    pub fn jacobian_blocks(&self, z: Complex64, w: Complex64) -> JacobianBlocks {
        (self.jacobian)(z, w)
    }

    pub fn target_structure(&self, z: Complex64, w: Complex64) -> Result<AcsMatrix> {
        let [zp, wp] = self.h_map(z, w);
        AcsMatrix::new((self.target)(zp, wp))
    }

    /// Pointwise `f, g, h1, h2` at `(z, w)`.
    pub fn structure_at(&self, z: Complex64, w: Complex64) -> Result<PointStructure> {
        let a_prime = self.target_structure(z, w)?;
        let (m, n) = pullback_parts(&a_prime, &self.jacobian_blocks(z, w));
        let scale = m
            .iter()
            .chain(n.iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        if n[(0, 1)].norm().max(n[(1, 1)].norm()) > 1e-10 * scale {
            return Err(Error::HypothesisViolation(format!(
                "pulled-back structure at ({z:.3}, {w:.3}) has a nonzero second column"
            )));
        }
        if m[(1, 1)].norm() <= 1e-12 * scale {
            return Err(Error::HypothesisViolation(format!(
                "degenerate w-derivative of the model at ({z:.3}, {w:.3})"
            )));
        }
        let h1 = -m[(1, 0)] / m[(1, 1)];
        let h2 = n[(1, 0)] / m[(1, 1)];
        Ok(PointStructure {
            f: m[(0, 0)] + m[(0, 1)] * h1,
            g: n[(0, 0)] - m[(0, 1)] * h2,
            h1,
            h2,
        })
    }

    /// `(a, b)` at a point, with `a` at zeros of `f` replaced by its mean over a
    /// small surrounding circle.
    fn coefficients_at(&self, z: Complex64, w: Complex64) -> Result<(Complex64, Complex64)> {
        let p = self.structure_at(z, w)?;
        let scale = p.f.norm().max(p.g.norm());
        let a = if p.f.norm() > 1e-9 * scale.max(1e-300) && p.f.norm() > 0.0 {
            p.g / p.f
        } else {
            let k = 8;
            let mut sum = ZERO;
            for j in 0..k {
                let ws = w + Complex64::from_polar(POINT_EXTENSION_RADIUS, 2.0 * PI * j as f64 / k as f64);
                let q = self.structure_at(z, ws)?;
                sum += q.g / q.f;
            }
            sum / k as f64
        };
        Ok((a, a * p.h1 + p.h2))
    }

    /// Coefficients of the system in the model's source coordinates, with
    /// `|w|` clamped to `w_radius`. The recorded `a0` lies halfway between
    /// the sampled `sup |a|` and 1.
    pub fn coefficients(&self) -> Result<StructureCoefficients> {
        let mut sup: f64 = 0.0;
        for i in 0..=6 {
            for j in 0..12 {
                let z = Complex64::from_polar(i as f64 / 6.0, j as f64 * PI / 6.0);
                for k in 0..=8 {
                    for l in 0..12 {
                        let w = Complex64::from_polar(
                            self.w_radius * k as f64 / 8.0,
                            (l as f64 + 0.5) * PI / 6.0,
                        );
                        let (a, _) = self.coefficients_at(z, w)?;
                        if a.norm() >= 1.0 {
                            return Err(Error::Orientation {
                                z,
                                w,
                                ratio: a.norm(),
                            });
                        }
                        sup = sup.max(a.norm());
                    }
                }
            }
        }
        let a0 = 0.5 * (1.0 + sup);
        let nan = c(f64::NAN, f64::NAN);
        let (ma, mb) = (self.clone(), self.clone());
        let coeffs = StructureCoefficients::new(
            self.name.clone(),
            move |z, w| ma.coefficients_at(z, w).map(|p| p.0).unwrap_or(nan),
            move |z, w| mb.coefficients_at(z, w).map(|p| p.1).unwrap_or(nan),
            a0,
            f64::NAN,
        )?;
        Ok(coeffs.with_w_radius(self.w_radius))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointStructure {
    pub f: Complex64,
    pub g: Complex64,
    pub h1: Complex64,
    pub h2: Complex64,
}

/// `(f + g, f - g) / sqrt 2`, an involution.
pub fn mobius_pair(f: Complex64, g: Complex64) -> (Complex64, Complex64) {
    ((f + g) * FRAC_1_SQRT_2, (f - g) * FRAC_1_SQRT_2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceReport {
    pub z: Complex64,
    /// Connected clusters of singular nodes and cells enclosing zeros of `f`.
    pub sigma_clusters: usize,
    /// Clusters on which `f` vanishes.
    pub clusters_with_zero_f: usize,
    /// `max |a_extended - g/f|` on nodes next to the singular set.
    pub extension_discrepancy: Option<f64>,
    /// Zeros of `f` in `w` with the extended value of `a` there.
    pub extended_at_zeros: Vec<(Complex64, Complex64)>,
}

#[derive(Clone, Debug)]
pub struct PullbackSlice {
    pub z: Complex64,
    pub a: GridFunction,
    pub b: GridFunction,
    pub f: GridFunction,
    pub g: GridFunction,
    pub h1: GridFunction,
    pub h2: GridFunction,
    pub sigma_mask: Vec<bool>,
    pub report: SliceReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha_hat_z: f64,
    pub fit_quality: f64,
    pub lip_hat_w: f64,
}

/// Fields over `{z} x {|w| <= w_radius}` for each slice. The grid variable is
/// `w / w_radius`.
#[derive(Clone, Debug)]
pub struct PullbackResult {
    pub model: String,
    pub w_radius: f64,
    pub slices: Vec<PullbackSlice>,
    pub regularity: Option<RegularityReport>,
}

impl PullbackResult {
    pub fn grid(&self) -> &Arc<DiscGrid> {
        self.slices[0].a.grid()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let slices: Vec<_> = self
            .slices
            .iter()
            .map(|s| {
                serde_json::json!({
                    "report": s.report,
                    "sup_abs_a": s.a.max_abs(),
                    "sup_abs_b": s.b.max_abs(),
                    "sigma_nodes": s.sigma_mask.iter().filter(|&&m| m).count(),
                })
            })
            .collect();
        serde_json::json!({
            "model": self.model,
            "w_radius": self.w_radius,
            "grid": {
                "radial_count": self.grid().radial_count(),
                "angular_count": self.grid().angular_count(),
            },
            "slices": slices,
            "regularity": self.regularity,
        })
    }

    /// Per-slice table with columns `slice, re_z, im_z, re_w, im_w, re_a, im_a,
    /// re_b, im_b, sigma`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "slice", "re_z", "im_z", "re_w", "im_w", "re_a", "im_a", "re_b", "im_b", "sigma",
        ])?;
        for (k, s) in self.slices.iter().enumerate() {
            for (i, &node) in s.a.grid().nodes().iter().enumerate() {
                let w = node * self.w_radius;
                let (a, b) = (s.a.values()[i], s.b.values()[i]);
                out.write_record([
                    k.to_string(),
                    s.z.re.to_string(),
                    s.z.im.to_string(),
                    w.re.to_string(),
                    w.im.to_string(),
                    a.re.to_string(),
                    a.im.to_string(),
                    b.re.to_string(),
                    b.im.to_string(),
                    u8::from(s.sigma_mask[i]).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn check_slices(z_slices: &[Complex64]) -> Result<()> {
    if z_slices.is_empty() {
        return Err(Error::InvalidArgument("no z slices".into()));
    }
    if let Some(z) = z_slices.iter().find(|z| !(z.norm() < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "slice z = {z} outside the unit disc"
        )));
    }
    Ok(())
}

/// Winding of `values` around the closed polygon `cycle` of node indices.
fn cycle_winding(values: &[Complex64], cycle: &[usize]) -> i64 {
    let n = cycle.len();
    let turns: f64 = (0..n)
        .map(|k| (values[cycle[(k + 1) % n]] / values[cycle[k]]).arg())
        .sum::<f64>()
        / (2.0 * PI);
    turns.round() as i64
}

/// Corner sets of the cells of the polar grid: the central polygon through
/// ring 0, then the quadrilaterals between consecutive rings.
fn cells(grid: &DiscGrid) -> Vec<Vec<usize>> {
    let (nr, nt) = (grid.radial_count(), grid.angular_count());
    let mut out = vec![(0..nt).map(|j| grid.index(0, j)).collect::<Vec<_>>()];
    for i in 0..nr - 1 {
        for j in 0..nt {
            let jn = (j + 1) % nt;
            out.push(vec![
                grid.index(i, j),
                grid.index(i, jn),
                grid.index(i + 1, jn),
                grid.index(i + 1, j),
            ]);
        }
    }
    out
}

/// Corners of cells around which `values` winds, assuming no zero at a node.
fn zero_cells(values: &[Complex64], grid: &DiscGrid) -> Vec<Vec<usize>> {
    cells(grid)
        .into_iter()
        .filter(|cell| cell.iter().all(|&k| values[k] != ZERO) && cycle_winding(values, cell) != 0)
        .collect()
}

fn neighbours(grid: &DiscGrid, k: usize) -> Vec<usize> {
    let (nr, nt) = (grid.radial_count(), grid.angular_count());
    let (i, j) = (k / nt, k % nt);
    let mut out = vec![grid.index(i, (j + 1) % nt), grid.index(i, (j + nt - 1) % nt)];
    if i + 1 < nr {
        out.push(grid.index(i + 1, j));
    }
    if i > 0 {
        out.push(grid.index(i - 1, j));
    } else {
        out.push(grid.index(0, (j + nt / 2) % nt));
    }
    out
}

/// Connected components of `marked` under grid adjacency.
fn clusters(grid: &DiscGrid, marked: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; marked.len()];
    let mut out = Vec::new();
    for start in 0..marked.len() {
        if !marked[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(k) = queue.pop_front() {
            members.push(k);
            for nb in neighbours(grid, k) {
                if marked[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        out.push(members);
    }
    out
}

/// Log-derivative coefficient `dbar(h) / conj(h)`, zero where `h` vanishes.
fn vekua_coefficient(h: &GridFunction) -> Result<GridFunction> {
    let d = dbar(h)?;
    let values = d
        .values()
        .iter()
        .zip(h.values())
        .map(|(dv, hv)| if hv.norm() > 1e-14 { dv / hv.conj() } else { ZERO })
        .collect();
    GridFunction::new(h.grid().clone(), values)
}

struct Extension {
    a: GridFunction,
    zeros: Vec<(Complex64, Complex64)>,
}

/// Extends `a = g / f` through the common zeros of `f +- g` by decomposing both
/// as generalized analytic functions, cancelling the shared monic factor.
fn vekua_extension(f: &GridFunction, g: &GridFunction, w_radius: f64) -> Result<Extension> {
    let grid = f.grid().clone();
    let (mut ft, mut gt) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
    for (&fv, &gv) in f.values().iter().zip(g.values()) {
        let (x, y) = mobius_pair(fv, gv);
        ft.push(x);
        gt.push(y);
    }
    let ft = GridFunction::new(grid.clone(), ft)?;
    let gt = GridFunction::new(grid.clone(), gt)?;
    let eps = 1e-8 * ft.max_abs().max(gt.max_abs());
    let df = normalized_decompose(&ft, &vekua_coefficient(&ft)?, eps)?;
    let dg = normalized_decompose(&gt, &vekua_coefficient(&gt)?, eps)?;
    let mut rf = df.monic_roots.clone();
    let mut rg = dg.monic_roots.clone();
    let key = |x: &Complex64, y: &Complex64| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap();
    rf.sort_by(key);
    rg.sort_by(key);
    let spacing = 2.0 * grid.dr();
    if rf.len() != rg.len() || rf.iter().zip(&rg).any(|(x, y)| (x - y).norm() > spacing) {
        return Err(Error::HypothesisViolation(format!(
            "f + g and f - g have different zero sets: {rf:?} vs {rg:?}"
        )));
    }
    let a_tilde = df
        .phi0
        .values()
        .iter()
        .zip(dg.phi0.values())
        .zip(df.tu.values().iter().zip(dg.tu.values()))
        .map(|((pf, pg), (tf, tg))| pg / pf * (tg - tf).exp());
    let values: Vec<Complex64> = a_tilde.map(|at| (ONE - at) / (ONE + at)).collect();
    let a = GridFunction::new(grid, values)?;
    let zeros = rf.iter().map(|&r| (r * w_radius, a.interpolate(r))).collect();
    Ok(Extension { a, zeros })
}

struct RawSlice {
    f: Vec<Complex64>,
    g: Vec<Complex64>,
    h1: Vec<Complex64>,
    h2: Vec<Complex64>,
}

fn sample_slice(model: &CoordinateModel, z: Complex64, grid: &Arc<DiscGrid>) -> Result<RawSlice> {
    let mut raw = RawSlice {
        f: Vec::with_capacity(grid.len()),
        g: Vec::with_capacity(grid.len()),
        h1: Vec::with_capacity(grid.len()),
        h2: Vec::with_capacity(grid.len()),
    };
    for &node in grid.nodes() {
        let p = model.structure_at(z, node * model.w_radius)?;
        raw.f.push(p.f);
        raw.g.push(p.g);
        raw.h1.push(p.h1);
        raw.h2.push(p.h2);
    }
    Ok(raw)
}

/// Pulls the model's target structure back to `(a, b)` on each slice
/// `{z} x {|w| <= w_radius}`, extending `a` across the singular set.
pub fn pullback_structure(
    model: &CoordinateModel,
    z_slices: &[Complex64],
    grid: &Arc<DiscGrid>,
) -> Result<PullbackResult> {
    check_slices(z_slices)?;
    let mut slices = Vec::with_capacity(z_slices.len());
    for &z in z_slices {
        let raw = sample_slice(model, z, grid)?;
        let f_max = raw.f.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut sigma_mask = vec![false; grid.len()];
        let mut direct = vec![ZERO; grid.len()];
        for k in 0..grid.len() {
            let (f, g) = (raw.f[k], raw.g[k]);
            let w = grid.nodes()[k] * model.w_radius;
            if f.norm() <= 1e-12 * f_max || f == ZERO {
                if g.norm() > 1e-12 * f_max.max(1e-300) {
                    return Err(Error::Orientation {
                        z,
                        w,
                        ratio: f64::INFINITY,
                    });
                }
                sigma_mask[k] = true;
                continue;
            }
            let ratio = g.norm() / f.norm();
            if ratio > 1.0 + SIGMA_TOL {
                return Err(Error::Orientation { z, w, ratio });
            }
            sigma_mask[k] = (1.0 - ratio).abs() < SIGMA_TOL;
            direct[k] = g / f;
        }
        if sigma_mask.iter().all(|&m| m) {
            return Err(Error::HypothesisViolation(format!(
                "slice z = {z:.3} lies inside the singular set"
            )));
        }

        let mut marked = sigma_mask.clone();
        for cell in zero_cells(&raw.f, grid) {
            for k in cell {
                marked[k] = true;
            }
        }
        let found = clusters(grid, &marked);
        let clusters_with_zero_f = found
            .iter()
            .filter(|members| {
                members.iter().any(|&k| raw.f[k].norm() <= SIGMA_TOL * f_max)
                    || zero_cells(&raw.f, grid)
                        .iter()
                        .any(|cell| cell.iter().any(|k| members.contains(k)))
            })
            .count();

        let f = GridFunction::new(grid.clone(), raw.f)?;
        let g = GridFunction::new(grid.clone(), raw.g)?;
        let mut a_values = direct;
        let mut extension_discrepancy = None;
        let mut extended_at_zeros = Vec::new();
        if !found.is_empty() {
            let ext = vekua_extension(&f, &g, model.w_radius)?;
            let mut near = vec![false; grid.len()];
            for k in (0..grid.len()).filter(|&k| marked[k]) {
                near[k] = true;
                for nb in neighbours(grid, k) {
                    near[nb] = true;
                }
            }
            let mut worst: f64 = 0.0;
            for k in 0..grid.len() {
                if sigma_mask[k] {
                    a_values[k] = ext.a.values()[k];
                } else if near[k] {
                    worst = worst.max((ext.a.values()[k] - a_values[k]).norm());
                }
            }
            extension_discrepancy = Some(worst);
            extended_at_zeros = ext.zeros;
        }
        for (k, a) in a_values.iter().enumerate() {
            if !(a.norm() < 1.0) {
                return Err(Error::Orientation {
                    z,
                    w: grid.nodes()[k] * model.w_radius,
                    ratio: a.norm(),
                });
            }
        }
        let b_values = a_values
            .iter()
            .zip(raw.h1.iter().zip(&raw.h2))
            .map(|(a, (h1, h2))| a * h1 + h2)
            .collect();
        slices.push(PullbackSlice {
            z,
            a: GridFunction::new(grid.clone(), a_values)?,
            b: GridFunction::new(grid.clone(), b_values)?,
            f,
            g,
            h1: GridFunction::new(grid.clone(), raw.h1)?,
            h2: GridFunction::new(grid.clone(), raw.h2)?,
            sigma_mask,
            report: SliceReport {
                z,
                sigma_clusters: found.len(),
                clusters_with_zero_f,
                extension_discrepancy,
                extended_at_zeros,
            },
        });
    }
    finish(model, slices)
}

fn finish(model: &CoordinateModel, slices: Vec<PullbackSlice>) -> Result<PullbackResult> {
    let mut result = PullbackResult {
        model: model.name.clone(),
        w_radius: model.w_radius,
        slices,
        regularity: None,
    };
    if result.slices.len() >= crate::vekua::MIN_HOLDER_SAMPLES {
        result.regularity = Some(regularity_probe(&result, 200)?);
    }
    Ok(result)
}

/// `a = -h_zbar / h_z` for graph models, extended across zeros of `h_z` by
/// the Cauchy integral in `w` over a circle enclosing them.
pub fn integrable_pullback(
    model: &CoordinateModel,
    z_slices: &[Complex64],
    grid: &Arc<DiscGrid>,
) -> Result<PullbackResult> {
    if model.kind != ModelKind::IntegrableGraph {
        return Err(Error::InvalidArgument(format!(
            "model '{}' is not a graph model",
            model.name
        )));
    }
    check_slices(z_slices)?;
    let a_at = |z: Complex64, w: Complex64| {
        let blocks = model.jacobian_blocks(z, w);
        -blocks.z_prime_zbar[(0, 0)] / blocks.z_prime_z[(0, 0)]
    };
    let mut slices = Vec::with_capacity(z_slices.len());
    for &z in z_slices {
        let mut hz = Vec::with_capacity(grid.len());
        let mut hzb = Vec::with_capacity(grid.len());
        for &node in grid.nodes() {
            let blocks = model.jacobian_blocks(z, node * model.w_radius);
            hz.push(blocks.z_prime_z[(0, 0)]);
            hzb.push(blocks.z_prime_zbar[(0, 0)]);
        }
        let hz_max = hz.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if hz_max < 1e-14 {
            return Err(Error::HypothesisViolation(format!(
                "h_z vanishes on the slice z = {z:.3}"
            )));
        }
        let mut marked: Vec<bool> = hz.iter().map(|x| x.norm() <= SIGMA_TOL * hz_max).collect();
        for cell in zero_cells(&hz, grid) {
            for k in cell {
                marked[k] = true;
            }
        }
        let found = clusters(grid, &marked);
        let mut a_values: Vec<Complex64> = hz
            .iter()
            .zip(&hzb)
            .map(|(d, db)| if *d == ZERO { ZERO } else { -db / d })
            .collect();
        for members in &found {
            let centre: Complex64 =
                members.iter().map(|&k| grid.nodes()[k]).sum::<Complex64>() / members.len() as f64;
            let spread = members
                .iter()
                .map(|&k| (grid.nodes()[k] - centre).norm())
                .fold(0.0, f64::max);
            let radius = 2.0 * spread + 4.0 * grid.dr();
            let contour: Vec<(Complex64, Complex64)> = (0..CONTOUR_POINTS)
                .map(|j| {
                    let tau =
                        centre + Complex64::from_polar(radius, 2.0 * PI * j as f64 / CONTOUR_POINTS as f64);
                    (tau, a_at(z, tau * model.w_radius))
                })
                .collect();
            for (k, &node) in grid.nodes().iter().enumerate() {
                if (node - centre).norm() < 0.5 * radius {
                    // trapezoid rule for (1/2 pi i) ∮ a(tau) dtau / (tau - w)
                    let s: Complex64 = contour
                        .iter()
                        .map(|&(tau, a)| a * (tau - centre) / (tau - node))
                        .sum();
                    a_values[k] = s / CONTOUR_POINTS as f64;
                }
            }
        }
        for (k, a) in a_values.iter().enumerate() {
            if !(a.norm() < 1.0) {
                return Err(Error::Orientation {
                    z,
                    w: grid.nodes()[k] * model.w_radius,
                    ratio: a.norm(),
                });
            }
        }
        let sigma_mask = hz.iter().map(|x| x.norm() <= SIGMA_TOL * hz_max).collect();
        let zero_count = found.len();
        slices.push(PullbackSlice {
            z,
            a: GridFunction::new(grid.clone(), a_values)?,
            b: GridFunction::zeros(grid),
            f: GridFunction::new(grid.clone(), hz)?,
            g: GridFunction::new(grid.clone(), hzb.iter().map(|x| -x).collect())?,
            h1: GridFunction::zeros(grid),
            h2: GridFunction::zeros(grid),
            sigma_mask,
            report: SliceReport {
                z,
                sigma_clusters: zero_count,
                clusters_with_zero_f: zero_count,
                extension_discrepancy: None,
                extended_at_zeros: Vec::new(),
            },
        });
    }
    finish(model, slices)
}

/// `max |a_1 - a_2|` over matching slices of two pullbacks.
pub fn pullback_discrepancy(first: &PullbackResult, second: &PullbackResult) -> Result<f64> {
    if first.slices.len() != second.slices.len() {
        return Err(Error::InvalidArgument(
            "pullbacks have different slice counts".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in first.slices.iter().zip(&second.slices) {
        worst = worst.max(x.a.max_abs_diff(&y.a)?);
    }
    Ok(worst)
}

/// Pointwise least-squares `mu` for the pair `f_wbar = mu conj(g)`,
/// `g_wbar = mu conj(f)`, with the largest residual of the pair.
pub fn pde_pair_mu(f: &GridFunction, g: &GridFunction) -> Result<(GridFunction, f64)> {
    f.check_same_grid(g)?;
    let (df, dg) = (dbar(f)?, dbar(g)?);
    let mut residual: f64 = 0.0;
    let mut mu = Vec::with_capacity(f.values().len());
    for k in 0..f.values().len() {
        let (fv, gv) = (f.values()[k], g.values()[k]);
        let denom = fv.norm_sqr() + gv.norm_sqr();
        let m = if denom > 0.0 {
            (gv * df.values()[k] + fv * dg.values()[k]) / denom
        } else {
            ZERO
        };
        residual = residual
            .max((df.values()[k] - m * gv.conj()).norm())
            .max((dg.values()[k] - m * fv.conj()).norm());
        mu.push(m);
    }
    Ok((GridFunction::new(f.grid().clone(), mu)?, residual))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularSetReport {
    pub per_slice_counts: Vec<usize>,
    pub sigma_prime_equals_sigma: bool,
}

pub fn singular_set_report(result: &PullbackResult) -> SingularSetReport {
    SingularSetReport {
        per_slice_counts: result.slices.iter().map(|s| s.report.sigma_clusters).collect(),
        sigma_prime_equals_sigma: result
            .slices
            .iter()
            .all(|s| s.report.clusters_with_zero_f == s.report.sigma_clusters),
    }
}

/// Hölder exponent of `z -> a(z, .)` across slices and the largest
/// difference quotient of `a` in `w`.
pub fn regularity_probe(result: &PullbackResult, z_pairs_budget: usize) -> Result<RegularityReport> {
    let family: Vec<(Complex64, GridFunction)> = result.slices.iter().map(|s| (s.z, s.a.clone())).collect();
    let HolderEstimate {
        alpha_hat,
        fit_quality,
        ..
    } = holder_exponent_estimate(&family, z_pairs_budget)?;
    let lip_hat_w = result
        .slices
        .iter()
        .map(|s| lipschitz_estimate(&s.a) / result.w_radius)
        .fold(0.0, f64::max);
    Ok(RegularityReport {
        alpha_hat_z: alpha_hat,
        fit_quality,
        lip_hat_w,
    })
}

/// Slices used to validate a model before attaching discs.
fn guard_slices() -> Vec<Complex64> {
    let mut out = vec![ZERO];
    for radius in [0.45, 0.9] {
        for k in 0..4 {
            out.push(Complex64::from_polar(radius, PI * k as f64 / 2.0 + radius));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Attachment {
    /// `H(z, w)` at the boundary samples of the disc.
    pub disc_in_target: Vec<[Complex64; 2]>,
    /// `max(||z| - 1|, ||w| - r|)` over the boundary samples.
    pub torus_distance: f64,
    pub solution: DiscSolution,
}

fn torus_distance(solution: &DiscSolution) -> f64 {
    solution
        .boundary()
        .iter()
        .map(|(z, w)| (z.norm() - 1.0).abs().max((w.norm() - solution.params.r).abs()))
        .fold(0.0, f64::max)
}

/// Validates the model, derives the coefficients and checks `a(z, 0) = b(z, 0) = 0`.
pub fn prepare_model(model: &CoordinateModel) -> Result<StructureCoefficients> {
    let grid = make_polar_grid(32, 64)?;
    pullback_structure(model, &guard_slices(), &grid)?;
    let coeffs = model.coefficients()?;
    coeffs.check_vanishing_at_zero()?;
    Ok(coeffs)
}

pub fn attach_disc_to_torus(
    model: &CoordinateModel,
    n: u32,
    r: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Attachment> {
    let coeffs = prepare_model(model)?;
    let solution = solve_disc(&coeffs, n, r, t, cfg)?;
    let disc_in_target = solution
        .boundary()
        .iter()
        .map(|&(z, w)| model.h_map(z, w))
        .collect();
    Ok(Attachment {
        disc_in_target,
        torus_distance: torus_distance(&solution),
        solution,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttachedFill {
    pub fill: TorusFill,
    pub max_torus_distance: f64,
}

/// Attaches discs for `t_samples` phases and bins their boundaries on the torus.
pub fn attached_torus_fill(
    model: &CoordinateModel,
    n: u32,
    r: f64,
    t_samples: usize,
    cfg: &SolverConfig,
) -> Result<AttachedFill> {
    let coeffs = prepare_model(model)?;
    let mut worst: f64 = 0.0;
    let fill = torus_fill_with(&coeffs, n, r, t_samples, cfg, |sol| {
        worst = worst.max(torus_distance(sol));
        Ok(())
    })?;
    Ok(AttachedFill {
        fill,
        max_torus_distance: worst,
    })
}
