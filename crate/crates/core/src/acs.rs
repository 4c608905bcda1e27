//! Almost complex structures on C^2 and their complex matrices.
//!
//! An R-linear map of C^2 is stored as a pair `(P, Q)` acting by
//! `v -> P v + Q conj(v)`. A structure `J` (with `J^2 = -I`) in generic
//! position corresponds to the 2x2 complex matrix `A` for which
//! `J`-holomorphic discs satisfy `z_zetabar = A(z) conj(z)_zetabar`.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;

/// Tolerance for structural identities (`J^2 = -I`, anti-linearity).
pub const STRUCTURE_TOL: f64 = 1e-10;
/// `|det(I - A conj(A))|` below this counts as inadmissible.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;
/// Default cap on the condition number of the pullback's leading matrix.
pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn conj2(m: &Mat2) -> Mat2 {
    m.map(|x| x.conj())
}

fn max_entry(m: &Mat2) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `v -> p v + q conj(v)` on C^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RLinearMap {
    pub p: Mat2,
    pub q: Mat2,
}

impl RLinearMap {
    pub fn new(p: Mat2, q: Mat2) -> Self {
        Self { p, q }
    }

    pub fn identity() -> Self {
        Self::new(Mat2::identity(), Mat2::zeros())
    }

    /// The standard structure, multiplication by i.
    pub fn standard() -> Self {
        Self::new(Mat2::identity() * Complex64::i(), Mat2::zeros())
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let v = nalgebra::Vector2::new(v[0], v[1]);
        let out = self.p * v + self.q * v.map(|x| x.conj());
        [out[0], out[1]]
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RLinearMap) -> RLinearMap {
        RLinearMap {
            p: self.p * other.p + self.q * conj2(&other.q),
            q: self.p * other.q + self.q * conj2(&other.p),
        }
    }

    pub fn add(&self, other: &RLinearMap) -> RLinearMap {
        RLinearMap::new(self.p + other.p, self.q + other.q)
    }

    pub fn sub(&self, other: &RLinearMap) -> RLinearMap {
        RLinearMap::new(self.p - other.p, self.q - other.q)
    }

    /// Largest entry modulus of `P` and `Q`.
    pub fn max_entry(&self) -> f64 {
        max_entry(&self.p).max(max_entry(&self.q))
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|x| x.is_finite())
    }

    /// Real 4x4 matrix in the coordinates `(Re v1, Im v1, Re v2, Im v2)`.
    pub fn to_real(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for r in 0..2 {
            for col in 0..2 {
                let (p, q) = (self.p[(r, col)], self.q[(r, col)]);
                m[(2 * r, 2 * col)] = p.re + q.re;
                m[(2 * r, 2 * col + 1)] = -p.im + q.im;
                m[(2 * r + 1, 2 * col)] = p.im + q.im;
                m[(2 * r + 1, 2 * col + 1)] = p.re - q.re;
            }
        }
        m
    }

    pub fn from_real(m: &Matrix4<f64>) -> Self {
        let mut p = Mat2::zeros();
        let mut q = Mat2::zeros();
        for r in 0..2 {
            for col in 0..2 {
                let m00 = m[(2 * r, 2 * col)];
                let m01 = m[(2 * r, 2 * col + 1)];
                let m10 = m[(2 * r + 1, 2 * col)];
                let m11 = m[(2 * r + 1, 2 * col + 1)];
                p[(r, col)] = c(m00 + m11, m10 - m01) * 0.5;
                q[(r, col)] = c(m00 - m11, m10 + m01) * 0.5;
            }
        }
        Self { p, q }
    }

    /// `|J^2 + I|` measured entrywise.
    pub fn structure_defect(&self) -> f64 {
        self.compose(self).add(&RLinearMap::identity()).max_entry()
    }
}

/// Complex matrix `A` of an almost complex structure in generic position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcsMatrix {
    a: Mat2,
    margin: f64,
}

impl AcsMatrix {
    /// Fails with an inadmissible error when `det(I - A conj(A))` vanishes.
    pub fn new(a: Mat2) -> Result<Self> {
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let margin = admissibility_margin(&a);
        if margin < ADMISSIBILITY_TOL {
            return Err(Error::Inadmissible { margin });
        }
        Ok(Self { a, margin })
    }

    pub fn zero() -> Self {
        Self {
            a: Mat2::zeros(),
            margin: 1.0,
        }
    }

    /// `[[a, 0], [0, 0]]`, the shape arising from graph-type models.
    pub fn scalar(a: Complex64) -> Result<Self> {
        Self::new(Mat2::new(a, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.a
    }

    /// `|det(I - A conj(A))|`.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// The R-linear map `v -> A conj(v)`.
    pub fn as_anti_linear(&self) -> RLinearMap {
        RLinearMap::new(Mat2::zeros(), self.a)
    }
}

pub fn admissibility_margin(a: &Mat2) -> f64 {
    (Mat2::identity() - a * conj2(a)).determinant().norm()
}

#[derive(Serialize, Deserialize)]
struct AcsMatrixJson {
    a: [[[f64; 2]; 2]; 2],
    margin: f64,
}

impl Serialize for AcsMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let e = |r, k| {
            let x: Complex64 = self.a[(r, k)];
            [x.re, x.im]
        };
        AcsMatrixJson {
            a: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]],
            margin: self.margin,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AcsMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = AcsMatrixJson::deserialize(d)?;
        let e = |r: usize, k: usize| c(raw.a[r][k][0], raw.a[r][k][1]);
        AcsMatrix::new(Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1))).map_err(serde::de::Error::custom)
    }
}

/// Partial derivatives `dZ'/dZ` and `dZ'/dZbar` of a map `Z -> Z'` of C^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianBlocks {
    pub z_prime_z: Mat2,
    pub z_prime_zbar: Mat2,
}

impl JacobianBlocks {
    pub fn new(z_prime_z: Mat2, z_prime_zbar: Mat2) -> Result<Self> {
        if !z_prime_z.iter().chain(z_prime_zbar.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Jacobian entry".into()));
        }
        Ok(Self {
            z_prime_z,
            z_prime_zbar,
        })
    }

    pub fn identity() -> Self {
        Self {
            z_prime_z: Mat2::identity(),
            z_prime_zbar: Mat2::zeros(),
        }
    }
}

/// The anti-linear map `Q = (J_st + J)^{-1} (J_st - J)` of a structure `J`.
pub fn anti_linear_part(j: &RLinearMap) -> Result<RLinearMap> {
    if !j.is_finite() {
        return Err(Error::InvalidArgument("non-finite structure entry".into()));
    }
    let scale = j.max_entry().max(1.0);
    let defect = j.structure_defect();
    if defect > STRUCTURE_TOL * scale * scale {
        return Err(Error::NotAStructure { defect });
    }
    let jst = RLinearMap::standard();
    let sum = jst.add(j).to_real();
    let diff = jst.sub(j).to_real();
    let sv = sum.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(Error::NonGeneric { sigma_min: smin });
    }
    let inv = sum.try_inverse().ok_or(Error::NonGeneric { sigma_min: smin })?;
    Ok(RLinearMap::from_real(&(inv * diff)))
}

/// The complex matrix `A` of `J`, read off from `A conj(v) = Q v`.
pub fn j_to_a(j: &RLinearMap) -> Result<AcsMatrix> {
    let q = anti_linear_part(j)?;
    let scale = q.max_entry().max(1.0);
    debug_assert!(
        max_entry(&q.p) <= 1e-8 * scale,
        "linear part of Q is {}",
        max_entry(&q.p)
    );
    AcsMatrix::new(q.q)
}

/// `J v = i (I - A conj A)^{-1} [(I + A conj A) v - 2 A conj v]`.
pub fn a_to_j(a: &AcsMatrix) -> Result<RLinearMap> {
    let aa = a.a * conj2(&a.a);
    let m = Mat2::identity() - aa;
    let margin = m.determinant().norm();
    let inv = m
        .try_inverse()
        .filter(|_| margin >= ADMISSIBILITY_TOL)
        .ok_or(Error::Inadmissible { margin })?;
    let i = Complex64::i();
    Ok(RLinearMap::new(
        inv * (Mat2::identity() + aa) * i,
        inv * a.a * (-2.0 * i),
    ))
}

fn condition_number(m: &Mat2) -> f64 {
    let sv = m.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if smin == 0.0 || !smin.is_finite() {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Leading matrix `M = Z'_Z - A' conj(Z'_Zbar)` and right side
/// `N = A' conj(Z'_Z) - Z'_Zbar` of the pullback rule `A = M^{-1} N`.
pub fn pullback_parts(a_prime: &AcsMatrix, blocks: &JacobianBlocks) -> (Mat2, Mat2) {
    let m = blocks.z_prime_z - a_prime.a * conj2(&blocks.z_prime_zbar);
    let n = a_prime.a * conj2(&blocks.z_prime_z) - blocks.z_prime_zbar;
    (m, n)
}

/// Complex matrix of the pulled-back structure `H^* J'`, where `blocks` are
/// the derivatives of `H` at a point and `a_prime` is the target structure
/// at its image.
pub fn pullback_matrix(a_prime: &AcsMatrix, blocks: &JacobianBlocks) -> Result<AcsMatrix> {
    pullback_matrix_at(a_prime, blocks, [c(0.0, 0.0); 2], DEFAULT_CONDITION_CAP)
}

/// As [`pullback_matrix`], recording `point` in the error and using a custom
/// condition-number cap.
pub fn pullback_matrix_at(
    a_prime: &AcsMatrix,
    blocks: &JacobianBlocks,
    point: [Complex64; 2],
    condition_cap: f64,
) -> Result<AcsMatrix> {
    let (m, n) = pullback_parts(a_prime, blocks);
    let condition = condition_number(&m);
    if condition > condition_cap {
        return Err(Error::SingularPullback { point, condition });
    }
    let inv = m
        .try_inverse()
        .ok_or(Error::SingularPullback { point, condition })?;
    AcsMatrix::new(inv * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(e: [(f64, f64); 4]) -> Mat2 {
        Mat2::new(
            c(e[0].0, e[0].1),
            c(e[1].0, e[1].1),
            c(e[2].0, e[2].1),
            c(e[3].0, e[3].1),
        )
    }

    fn diff(a: &Mat2, b: &Mat2) -> f64 {
        max_entry(&(a - b))
    }

    /// Matrix with operator norm at most `bound`.
    fn bounded(e: [(f64, f64); 4], bound: f64) -> Mat2 {
        let m = mat(e);
        let norm = m.singular_values().max();
        if norm > bound {
            m * c(bound / norm, 0.0)
        } else {
            m
        }
    }

    fn entries() -> impl Strategy<Value = [(f64, f64); 4]> {
        prop::array::uniform4((-1.0..1.0f64, -1.0..1.0f64))
    }

    #[test]
    fn standard_structure_has_zero_matrix() {
        let a = j_to_a(&RLinearMap::standard()).unwrap();
        assert_eq!(max_entry(a.matrix()), 0.0);
    }

    #[test]
    fn zero_matrix_gives_standard_structure() {
        let j = a_to_j(&AcsMatrix::zero()).unwrap();
        assert!(j.sub(&RLinearMap::standard()).max_entry() < 1e-15);
    }

    #[test]
    fn diagonal_half_matches_closed_form() {
        let a = AcsMatrix::new(mat([(0.5, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap();
        let j = a_to_j(&a).unwrap();
        let v = [c(0.3, -0.7), c(0.0, 0.0)];
        let out = j.apply(v);
        let expected = c(0.0, 1.0 / 0.75) * (1.25 * v[0] - v[0].conj());
        assert!((out[0] - expected).norm() < 1e-14);
        assert!(out[1].norm() < 1e-15);
        assert!(j.structure_defect() < 1e-10);
    }

    #[test]
    fn involution_is_not_a_structure() {
        let err = j_to_a(&RLinearMap::identity()).unwrap_err();
        assert!(matches!(err, Error::NotAStructure { .. }));
    }

    #[test]
    fn minus_standard_is_not_generic() {
        let j = RLinearMap::new(Mat2::identity() * c(0.0, -1.0), Mat2::zeros());
        assert!(matches!(j_to_a(&j), Err(Error::NonGeneric { .. })));
    }

    #[test]
    fn unit_eigenvalue_is_inadmissible() {
        let a = mat([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert!(matches!(AcsMatrix::new(a), Err(Error::Inadmissible { .. })));
        let a = mat([(0.0, 0.0), (2.0, 0.0), (0.5, 0.0), (0.0, 0.0)]);
        assert!(matches!(AcsMatrix::new(a), Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn real_form_roundtrip() {
        let j = RLinearMap::new(
            mat([(1.0, 2.0), (3.0, -1.0), (0.5, 0.5), (-2.0, 0.0)]),
            mat([(0.1, -0.3), (0.0, 1.0), (2.0, 2.0), (0.7, -0.2)]),
        );
        let back = RLinearMap::from_real(&j.to_real());
        assert!(back.sub(&j).max_entry() < 1e-15);
        let k = RLinearMap::new(
            mat([(0.3, 0.0), (1.0, -1.0), (0.0, 0.5), (1.0, 1.0)]),
            mat([(0.0, 1.0), (0.2, 0.0), (-1.0, 0.0), (0.0, 0.0)]),
        );
        let composed = RLinearMap::from_real(&(j.to_real() * k.to_real()));
        assert!(composed.sub(&j.compose(&k)).max_entry() < 1e-13);
    }

    #[test]
    fn shear_pullback_gives_two_w() {
        let (z, w) = (c(0.3, -0.4), c(0.1, 0.35));
        let blocks = JacobianBlocks::new(
            Mat2::new(c(1.0, 0.0), -2.0 * z.conj(), c(0.0, 0.0), c(1.0, 0.0)),
            Mat2::new(-2.0 * w, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)),
        )
        .unwrap();
        let a = pullback_matrix(&AcsMatrix::zero(), &blocks).unwrap();
        assert!((a.matrix()[(0, 0)] - 2.0 * w).norm() < 1e-14);
        assert!(a.matrix()[(0, 1)].norm() < 1e-14);
        assert!(a.matrix()[(1, 0)].norm() + a.matrix()[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn blowup_pullback_gives_wbar_squared_over_w() {
        let (z, w) = (c(-0.2, 0.5), c(0.4, -0.3));
        let (zp, wp) = (z * w, w);
        let a_prime = AcsMatrix::new(Mat2::new(wp.conj(), -zp.conj(), c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        let blocks = JacobianBlocks::new(Mat2::new(w, z, c(0.0, 0.0), c(1.0, 0.0)), Mat2::zeros()).unwrap();
        let a = pullback_matrix(&a_prime, &blocks).unwrap();
        let expected = w.conj() * w.conj() / w;
        assert!((a.matrix()[(0, 0)] - expected).norm() < 1e-14);
        assert!(a.matrix()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn identity_pullback_is_identity() {
        let a = pullback_matrix(&AcsMatrix::zero(), &JacobianBlocks::identity()).unwrap();
        assert_eq!(max_entry(a.matrix()), 0.0);
    }

    #[test]
    fn singular_leading_matrix_is_reported() {
        let blocks = JacobianBlocks::new(
            Mat2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)),
            Mat2::zeros(),
        )
        .unwrap();
        let point = [c(0.1, 0.0), c(0.0, 0.0)];
        let err = pullback_matrix_at(&AcsMatrix::zero(), &blocks, point, 1e8).unwrap_err();
        match err {
            Error::SingularPullback { point: p, .. } => assert_eq!(p, point),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn json_row_major_pairs() {
        let a = AcsMatrix::scalar(c(0.25, -0.5)).unwrap();
        let v = serde_json::to_value(a).unwrap();
        assert_eq!(v["a"][0][0], serde_json::json!([0.25, -0.5]));
        let back: AcsMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn roundtrip_through_structure(e in entries()) {
            let a = AcsMatrix::new(bounded(e, 0.9)).unwrap();
            let j = a_to_j(&a).unwrap();
            prop_assert!(j.structure_defect() <= 1e-10);
            let back = j_to_a(&j).unwrap();
            prop_assert!(diff(back.matrix(), a.matrix()) <= 1e-10);
        }

        #[test]
        fn anti_linear_part_anticommutes_with_standard(e in entries()) {
            let a = AcsMatrix::new(bounded(e, 0.9)).unwrap();
            let q = anti_linear_part(&a_to_j(&a).unwrap()).unwrap();
            let jst = RLinearMap::standard();
            prop_assert!(q.compose(&jst).add(&jst.compose(&q)).max_entry() <= 1e-10);
            // Q^2 = A conj(A)
            let q2 = q.compose(&q);
            prop_assert!(diff(&q2.p, &(a.matrix() * conj2(a.matrix()))) <= 1e-10);
            prop_assert!(max_entry(&q2.q) <= 1e-10);
        }
    }
}
