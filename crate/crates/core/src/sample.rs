//! Seeded generators for spaces, maps and vectors. Everything is driven by
//! `ChaCha8Rng`, so constructions are reproducible from a seed.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::normed_core::{distinct_up_to_sign, distortion_unchecked, op_norm, LinearMap, NormedSpace};
use crate::lp::default_engine;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Standard normal deviate (Box–Muller).
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1 = rng.gen::<f64>().max(1e-300);
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// A random polygon-normed plane: `rows` norming functionals at random
/// angles with lengths in `[0.5, 1.5]`.
pub fn random_plane<R: Rng>(rng: &mut R, rows: usize) -> NormedSpace {
    assert!(rows >= 2, "a plane needs two norming rows");
    loop {
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let th = uniform(rng, 0.0, 2.0 * core::f64::consts::PI);
                let r = uniform(rng, 0.5, 1.5);
                alloc::vec![r * libm::cos(th), r * libm::sin(th)]
            })
            .collect();
        if let Ok(s) = NormedSpace::from_rows(&m, &format!("plane{rows}")) {
            if s.norming().rank(1e-3) == 2 {
                return s;
            }
        }
    }
}

/// A random space of the given dimension with `rows` norming functionals.
pub fn random_space<R: Rng>(rng: &mut R, dim: usize, rows: usize) -> NormedSpace {
    assert!(rows >= dim, "need at least dim rows");
    loop {
        let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..dim).map(|_| uniform(rng, -1.0, 1.0)).collect()).collect();
        if let Ok(s) = NormedSpace::from_rows(&m, &format!("space{dim}x{rows}")) {
            if s.norming().rank(1e-3) == dim {
                return s;
            }
        }
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| uniform(rng, -1.0, 1.0)).collect();
    Matrix::from_row_major(rows, cols, data).expect("shape")
}

/// A random map rescaled so that its norm is `scale` (at most 1 for a
/// contraction).
pub fn random_contraction<R: Rng>(rng: &mut R, dom: &NormedSpace, cod: &NormedSpace, scale: f64) -> Result<LinearMap> {
    loop {
        let m = LinearMap::new(dom.clone(), cod.clone(), random_matrix(rng, cod.dim(), dom.dim()))?;
        let n = op_norm(&m)?;
        if n > 1e-6 {
            return Ok(m.scale(scale / n));
        }
    }
}

/// A random vector of norm one.
pub fn random_unit_vector<R: Rng>(rng: &mut R, space: &NormedSpace) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..space.dim()).map(|_| gaussian(rng)).collect();
        let n = space.norm(&v);
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// An isometric embedding of `e` into `ℓ∞^n`: the distinct norming rows of
/// `e` in random coordinates and random contractive functionals elsewhere.
pub fn random_isometry<R: Rng>(rng: &mut R, e: &NormedSpace, n: usize) -> Result<LinearMap> {
    let rows = distinct_up_to_sign(e.norming());
    if rows.len() > n {
        return Err(crate::Error::Resource(format!(
            "{} distinct norming rows need at least that many coordinates, got {n}",
            rows.len()
        )));
    }
    let mut slots: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut slots);
    let mut m = Matrix::zeros(n, e.dim());
    for (k, &slot) in slots.iter().enumerate() {
        let row: Vec<f64> = if k < rows.len() {
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            e.norming().row(rows[k]).iter().map(|v| s * v).collect()
        } else {
            // A combination Σλ_i f_i with Σ|λ_i| ≤ 1 is a contraction.
            let lam: Vec<f64> = (0..e.num_rows()).map(|_| uniform(rng, -1.0, 1.0)).collect();
            let l1: f64 = lam.iter().map(|x| x.abs()).sum::<f64>().max(1e-12);
            let scale = uniform(rng, 0.2, 1.0) / l1;
            e.norming().left_mul_vec(&lam).iter().map(|v| v * scale).collect()
        };
        m.row_mut(slot).copy_from_slice(&row);
    }
    LinearMap::new(e.clone(), NormedSpace::linf(n), m)
}

/// An embedding of `e` into `ℓ∞^n` with distortion at most `delta`,
/// interpolating from an isometry towards a random contraction.
pub fn random_near_embedding<R: Rng>(rng: &mut R, e: &NormedSpace, n: usize, delta: f64) -> Result<LinearMap> {
    let u = random_isometry(rng, e, n)?;
    if delta <= 0.0 {
        return Ok(u);
    }
    let v = random_contraction(rng, e, u.cod(), 1.0)?;
    let blend = |t: f64| LinearMap::new(e.clone(), u.cod().clone(), u.matrix().scale(1.0 - t).add(&v.matrix().scale(t)));
    let target = uniform(rng, 0.5, 1.0) * delta;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if distortion_unchecked(default_engine(), &blend(mid)?)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    blend(lo)
}

pub fn shuffle<R: Rng, T>(rng: &mut R, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}
