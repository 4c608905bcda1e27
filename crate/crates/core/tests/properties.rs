mod common;

use common::{c, forward_pair, random_in_disc, rng, separated_roots, Polynomial};
use jdisc::acs::{a_to_j, anti_linear_part, conj2, AcsMatrix, Mat2, RLinearMap};
use jdisc::phase::phase;
use jdisc::singint::cauchy_green_grid;
use jdisc::vekua::{
    holder_seminorm_estimate, lipschitz_estimate, normalized_decompose, similarity_decompose,
};
use jdisc::{dbar, make_polar_grid, sample, GridFunction};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex(scale: f64) -> impl Strategy<Value = Complex64> {
    (-scale..scale, -scale..scale).prop_map(|(re, im)| c(re, im))
}

fn admissible() -> impl Strategy<Value = Mat2> {
    (prop::array::uniform4(complex(1.0)), 0.0..0.9).prop_map(|(e, norm)| {
        let m = Mat2::new(e[0], e[1], e[2], e[3]);
        let s = m.singular_values()[0].max(1e-3);
        m * c(norm / s, 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dbar_is_linear(alpha in complex(2.0), beta in complex(2.0), seed in 0u64..1000) {
        let grid = make_polar_grid(16, 32).unwrap();
        let mut r = rng(seed);
        let p = Polynomial::random(&mut r, 3, 1.0);
        let q = Polynomial::random(&mut r, 3, 1.0);
        let u = sample(|w| p.eval(w), &grid).unwrap();
        let v = sample(|w| q.eval(w), &grid).unwrap();
        let combined = u.zip_with(&v, |a, b| alpha * a + beta * b).unwrap();
        let (du, dv) = (dbar(&u).unwrap(), dbar(&v).unwrap());
        let expected = du.zip_with(&dv, |a, b| alpha * a + beta * b).unwrap();
        let scale = du.max_abs().max(dv.max_abs()).max(1.0) * (alpha.norm() + beta.norm()).max(1.0);
        prop_assert!(dbar(&combined).unwrap().max_abs_diff(&expected).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn grid_function_json_roundtrip(values in prop::collection::vec(complex(1e3), 16 * 32)) {
        let grid = make_polar_grid(16, 32).unwrap();
        let f = GridFunction::new(grid, values).unwrap();
        let back = GridFunction::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn phase_is_multiplicative(a in complex(10.0), b in complex(10.0)) {
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        let lhs = phase(a * b).unwrap();
        let rhs = phase(a).unwrap() * phase(b).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-14);
    }

    #[test]
    fn anti_linear_part_anticommutes_with_standard(m in admissible()) {
        let j = a_to_j(&AcsMatrix::new(m).unwrap()).unwrap();
        let q = anti_linear_part(&j).unwrap();
        let jst = RLinearMap::standard();
        let anti = q.compose(&jst).add(&jst.compose(&q));
        prop_assert!(anti.max_entry() <= 1e-10);
        // Q^2 is the linear map A conj(A)
        let square = q.compose(&q);
        prop_assert!((square.p - m * conj2(&m)).iter().all(|x| x.norm() <= 1e-10));
        prop_assert!(square.q.iter().all(|x| x.norm() <= 1e-10));
    }
}

#[test]
fn dbar_of_conjugate_square_converges() {
    let error = |nr: usize| {
        let grid = make_polar_grid(nr, 2 * nr).unwrap();
        let u = sample(|w| w.conj() * w.conj(), &grid).unwrap();
        let exact = sample(|w| 2.0 * w.conj(), &grid).unwrap();
        dbar(&u).unwrap().max_abs_diff(&exact).unwrap()
    };
    let (coarse, fine) = (error(16), error(32));
    assert!(coarse / fine >= 3.5, "{coarse:e} -> {fine:e}");
}

#[test]
fn cauchy_green_is_bounded_on_unit_fields() {
    let grid = make_polar_grid(64, 128).unwrap();
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let values = (0..grid.len()).map(|_| random_in_disc(&mut r, 1.0)).collect();
        let u = GridFunction::new(grid.clone(), values).unwrap();
        worst = worst.max(cauchy_green_grid(&u).field.max_abs());
    }
    let ones = GridFunction::constant(&grid, c(1.0, 0.0));
    let unit = cauchy_green_grid(&ones).field.max_abs();
    assert!(worst <= 2.5, "sup |Tu| = {worst}");
    assert!((unit - 1.0).abs() < 1e-2, "sup |T1| = {unit}");
}

fn constructed(nr: usize, roots: &[Complex64]) -> (GridFunction, GridFunction) {
    let grid = make_polar_grid(nr, 2 * nr).unwrap();
    forward_pair(&grid, roots, |w| c(0.3, -0.2) + 0.4 * w.conj())
}

#[test]
fn zero_count_is_stable_under_refinement() {
    let mut r = rng(12);
    for zeros in 0..=3 {
        let roots = separated_roots(&mut r, zeros, 0.6, 0.2);
        for nr in [32, 64, 128] {
            let (h, mu) = constructed(nr, &roots);
            let dec = similarity_decompose(&h, &mu, &Default::default()).unwrap();
            assert_eq!(dec.zero_count, zeros, "{nr} rings, roots {roots:?}");
        }
    }
}

#[test]
fn normalized_bounds_do_not_depend_on_root_location() {
    let mut r = rng(13);
    let mut stats = Vec::new();
    for _ in 0..8 {
        let roots = separated_roots(&mut r, 2, 0.4, 0.1);
        let (h, _) = constructed(64, &roots);
        // multiply by a zero-free holomorphic factor so phi0 is not trivial
        let h = h.map(|w, v| v * (1.5 + 0.5 * w));
        let u0 = sample(|w| c(0.3, -0.2) + 0.4 * w.conj(), h.grid()).unwrap();
        let mu = h
            .zip_with(&u0, |hv, uv| {
                if hv.norm() < 1e-12 {
                    c(0.0, 0.0)
                } else {
                    uv * hv / hv.conj()
                }
            })
            .unwrap();
        let dec = normalized_decompose(&h, &mu, 1e-3).unwrap();
        stats.push([
            dec.bounds.sup_phi0,
            1.0 / dec.bounds.inf_phi0,
            dec.bounds.lipschitz_tu,
        ]);
    }
    for k in 0..3 {
        let max = stats.iter().map(|s| s[k]).fold(0.0, f64::max);
        let min = stats.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min);
        assert!(max < 3.0 * min, "bound {k}: {min} .. {max}");
    }
}

#[test]
fn phase_power_seminorm_grows_linearly() {
    let grid = make_polar_grid(32, 64).unwrap();
    let lambda = |w: Complex64| 0.5 * w + c(0.0, 0.3) * w.conj();
    let seminorm = |n: u32| {
        let f = sample(|w| lambda(w) * phase(w).unwrap().powu(n), &grid).unwrap();
        holder_seminorm_estimate(&f, 0.5, 600)
    };
    let first = seminorm(1);
    for n in 2..=6 {
        let s = seminorm(n);
        assert!(s <= 1.5 * n as f64 * first, "n = {n}: {s} vs {first}");
    }
}

#[test]
fn cauchy_green_lipschitz_constant_is_placement_uniform() {
    let grid = make_polar_grid(64, 128).unwrap();
    let mut r = rng(14);
    let lambda = |w: Complex64| c(0.4, 0.1) + 0.3 * w * w.conj();
    let holder = holder_seminorm_estimate(&sample(lambda, &grid).unwrap(), 0.5, 600);
    for degree in 1..=3 {
        let ratios: Vec<f64> = (0..20)
            .map(|_| {
                let roots: Vec<Complex64> = (0..degree).map(|_| random_in_disc(&mut r, 0.9)).collect();
                let u = sample(
                    |w| {
                        let p: Complex64 = roots.iter().map(|q| w - q).product();
                        phase(p).map(|ph| lambda(w) * ph).unwrap_or(c(0.0, 0.0))
                    },
                    &grid,
                )
                .unwrap();
                lipschitz_estimate(&cauchy_green_grid(&u).field) / holder
            })
            .collect();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(
            max.is_finite() && max < 4.0 * min,
            "degree {degree}: {min} .. {max}"
        );
    }
}
