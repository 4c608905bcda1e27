#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use jdisc::singint::cauchy_green_grid;
use jdisc::vekua::{monic_eval, ZERO_CUTOFF};
use jdisc::{sample, DiscGrid, GridFunction};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut impl Rng, scale: f64) -> Complex64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

pub fn random_in_disc(rng: &mut impl Rng, radius: f64) -> Complex64 {
    Complex64::from_polar(radius * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI))
}

/// Random `sum c_jk w^j conj(w)^k` over `j + k <= degree`, `|c_jk| <= scale`.
#[derive(Clone, Debug)]
pub struct Polynomial {
    pub terms: Vec<(u32, u32, Complex64)>,
}

impl Polynomial {
    pub fn random(rng: &mut impl Rng, degree: u32, scale: f64) -> Self {
        let mut terms = Vec::new();
        for j in 0..=degree {
            for k in 0..=degree - j {
                terms.push((j, k, random_complex(rng, scale / 2f64.sqrt())));
            }
        }
        Self { terms }
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(j, k, a)| a * w.powu(j) * w.conj().powu(k))
            .sum()
    }

    pub fn dbar(&self, w: Complex64) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.1 > 0)
            .map(|&(j, k, a)| a * k as f64 * w.powu(j) * w.conj().powu(k - 1))
            .sum()
    }
}

/// Roots in `|w| <= radius` pairwise at least `separation` apart.
pub fn separated_roots(rng: &mut impl Rng, count: usize, radius: f64, separation: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(count);
    while out.len() < count {
        let r = random_in_disc(rng, radius);
        if out.iter().all(|q| (q - r).norm() >= separation) {
            out.push(r);
        }
    }
    out
}

/// `h = p e^{T u0}` and `mu = u0 h / conj(h)`, with `p` the monic polynomial of `roots`.
pub fn forward_pair(
    grid: &Arc<DiscGrid>,
    roots: &[Complex64],
    u0: impl Fn(Complex64) -> Complex64,
) -> (GridFunction, GridFunction) {
    let u = sample(u0, grid).unwrap();
    let tu = cauchy_green_grid(&u).field;
    let values = grid
        .nodes()
        .iter()
        .zip(tu.values())
        .map(|(&w, t)| monic_eval(roots, w) * t.exp())
        .collect();
    let h = GridFunction::new(grid.clone(), values).unwrap();
    let mu = h
        .zip_with(&u, |hv, uv| {
            if hv.norm() < ZERO_CUTOFF {
                c(0.0, 0.0)
            } else {
                uv * hv / hv.conj()
            }
        })
        .unwrap();
    (h, mu)
}
