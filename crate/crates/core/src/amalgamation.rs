//! Near amalgamation, joint embedding and approximate pushouts with finite
//! witness families.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::{default_engine, LpEngine};
use crate::normed_core::{
    distortion_unchecked, embed_linf, extend_morphism_with, op_norm_with, LinearMap, Modulus, NormedSpace,
    CONTRACTION_TOL,
};

/// Output of [`nap_amalgamate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmalgamResult {
    pub z: NormedSpace,
    pub i: LinearMap,
    pub j: LinearMap,
    /// Measured `‖i∘f_X − j∘f_Y‖`.
    #[serde(with = "crate::real")]
    pub defect: f64,
}

/// Amalgamates two `δ`-embeddings of `E` inside `ℓ∞^{N_X + N_Y}`.
///
/// `i = (E_X, h_X)` and `j = (h_Y, E_Y)` where `E_X`, `E_Y` are the norming
/// presentations and `h_X: X → ℓ∞^{N_Y}` extends `E_Y∘f_Y` along `f_X`
/// (symmetrically for `h_Y`). For `ℓ∞` spaces the presentations are
/// identities and `Z = X ⊕∞ Y`.
pub fn nap_amalgamate(e: &NormedSpace, f_x: &LinearMap, f_y: &LinearMap, delta: f64) -> Result<AmalgamResult> {
    nap_amalgamate_with(default_engine(), e, f_x, f_y, delta)
}

pub fn nap_amalgamate_with(
    engine: LpEngine,
    e: &NormedSpace,
    f_x: &LinearMap,
    f_y: &LinearMap,
    delta: f64,
) -> Result<AmalgamResult> {
    if f_x.dom() != e || f_y.dom() != e {
        return Err(Error::Shape("both maps must start at E".into()));
    }
    let ex = embed_linf(f_x.cod());
    let ey = embed_linf(f_y.cod());
    let h_x = extend_morphism_with(engine, f_x, &ey.compose(f_y)?, delta)?;
    let h_y = extend_morphism_with(engine, f_y, &ex.compose(f_x)?, delta)?;
    let z = NormedSpace::linf(ex.cod().dim() + ey.cod().dim());
    let i = LinearMap::new(f_x.cod().clone(), z.clone(), ex.matrix().vstack(h_x.matrix()))?;
    let j = LinearMap::new(f_y.cod().clone(), z.clone(), h_y.matrix().vstack(ey.matrix()))?;
    let defect = op_norm_with(engine, &i.compose(f_x)?.sub(&j.compose(f_y)?)?)?;
    Ok(AmalgamResult { z, i, j, defect })
}

/// `X` and `Y` side by side in `ℓ∞^{N_X + N_Y}`.
pub fn joint_embed(x: &NormedSpace, y: &NormedSpace) -> Result<(NormedSpace, LinearMap, LinearMap)> {
    let (nx, ny) = (x.num_rows(), y.num_rows());
    let z = NormedSpace::linf(nx + ny);
    let ix = LinearMap::new(x.clone(), z.clone(), x.norming().vstack(&Matrix::zeros(ny, x.dim())))?;
    let iy = LinearMap::new(y.clone(), z.clone(), Matrix::zeros(nx, y.dim()).vstack(y.norming()))?;
    Ok((z, ix, iy))
}

/// A compatible pair of functionals `g` on `X̂` and `h` on `Y`, both of norm
/// at most one, with `‖g∘φ − h∘f‖` small.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    #[serde(with = "crate::real::vec")]
    pub g: Vec<f64>,
    #[serde(with = "crate::real::vec")]
    pub h: Vec<f64>,
}

impl WitnessPair {
    fn coincides(&self, other: &WitnessPair) -> bool {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12);
        close(&self.g, &other.g) && close(&self.h, &other.h)
    }
}

/// Output of [`approx_pushout`]. `Ŷ` is the span of `fhat[X̂] + j[Y]`
/// inside `W = ℓ∞^{family}`, written in the coordinates of `ambient`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushoutResult {
    pub space: NormedSpace,
    pub fhat: LinearMap,
    pub j: LinearMap,
    /// The inclusion `Ŷ → W`; its rows are the witness coordinates.
    pub ambient: LinearMap,
    pub family: Vec<WitnessPair>,
    /// Measured `‖fhat∘φ − j∘f‖`.
    #[serde(with = "crate::real")]
    pub defect: f64,
    /// The bound the defect is certified against.
    #[serde(with = "crate::real")]
    pub bound: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PushoutOptions {
    /// Extra pairs appended to the family after a compatibility check.
    pub extra_pairs: Vec<WitnessPair>,
    /// Also add one pair per norming row of `X̂`, which makes `fhat` a
    /// `ϖ(δ)`-embedding. Needs `I(f) ≤ δ`.
    pub embed_hat: bool,
    /// Compatibility allowed for the extra pairs; defaults to the bound.
    pub extra_tolerance: Option<f64>,
}

pub fn approx_pushout(phi: &LinearMap, f: &LinearMap, delta: f64, opts: &PushoutOptions) -> Result<PushoutResult> {
    approx_pushout_with(default_engine(), phi, f, delta, opts)
}

/// Approximate pushout of `φ: X → X̂` (with `I(φ) ≤ δ`) and a contraction
/// `f: X → Y`.
///
/// The family holds, for each norming row `h` of `Y`, the pair
/// `(extend(h∘f along φ), h)`; these rows make `j` isometric. Every pair
/// has `‖g∘φ − h∘f‖ ≤ δ/(1+δ) ≤ ϖ(δ)`, so the defect bound holds
/// coordinatewise.
pub fn approx_pushout_with(
    engine: LpEngine,
    phi: &LinearMap,
    f: &LinearMap,
    delta: f64,
    opts: &PushoutOptions,
) -> Result<PushoutResult> {
    if phi.dom() != f.dom() {
        return Err(Error::Shape("phi and f must share a domain".into()));
    }
    let bound = Modulus::Banach.eval(delta);
    let one = NormedSpace::linf(1);
    let mut family: Vec<WitnessPair> = Vec::new();
    let push = |family: &mut Vec<WitnessPair>, p: WitnessPair| {
        if !family.iter().any(|q| q.coincides(&p)) {
            family.push(p);
        }
    };
    let y = f.cod();
    for r in y.distinct_rows() {
        let h = y.norming().row(r).to_vec();
        let hf = functional_map(f.dom(), &one, &f.matrix().left_mul_vec(&h))?;
        let g = extend_morphism_with(engine, phi, &hf, delta)?;
        push(&mut family, WitnessPair { g: g.matrix().row(0).to_vec(), h });
    }
    if opts.embed_hat {
        let dist = distortion_unchecked(engine, f)?;
        if dist > delta + CONTRACTION_TOL {
            return Err(Error::Distortion { measured: dist, allowed: delta });
        }
        let xh = phi.cod();
        for r in xh.distinct_rows() {
            let g = xh.norming().row(r).to_vec();
            let gphi = functional_map(phi.dom(), &one, &phi.matrix().left_mul_vec(&g))?;
            let h = extend_morphism_with(engine, f, &gphi, delta)?;
            push(&mut family, WitnessPair { g, h: h.matrix().row(0).to_vec() });
        }
    }
    let allowed = opts.extra_tolerance.unwrap_or(bound);
    for p in &opts.extra_pairs {
        check_pair(engine, phi, f, p, allowed)?;
        push(&mut family, p.clone());
    }
    let mut out = pushout_from_family(phi, f, family)?;
    out.defect = op_norm_with(engine, &out.fhat.compose(phi)?.sub(&out.j.compose(f)?)?)?;
    out.bound = bound;
    Ok(out)
}

/// Checks that a pair consists of contractive functionals with
/// `‖g∘φ − h∘f‖ ≤ allowed`.
pub fn check_pair(engine: LpEngine, phi: &LinearMap, f: &LinearMap, p: &WitnessPair, allowed: f64) -> Result<()> {
    if p.g.len() != phi.cod().dim() || p.h.len() != f.cod().dim() {
        return Err(Error::Shape("witness pair lengths".into()));
    }
    for (v, space) in [(&p.g, phi.cod()), (&p.h, f.cod())] {
        let n = space.dual_norm_with(engine, v)?;
        if n > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContraction { norm: n });
        }
    }
    let gphi = phi.matrix().left_mul_vec(&p.g);
    let hf = f.matrix().left_mul_vec(&p.h);
    let diff: Vec<f64> = gphi.iter().zip(&hf).map(|(a, b)| a - b).collect();
    let d = phi.dom().dual_norm_with(engine, &diff)?;
    if d > allowed + CONTRACTION_TOL {
        return Err(Error::Precondition(format!("witness pair incompatible: {d} > {allowed}")));
    }
    Ok(())
}

/// Builds `Ŷ`, `fhat` and `j` from a family, without measuring anything.
///
/// With `G`, `H` the stacked `g`'s and `h`'s, `Ŷ` is the column space of
/// `M = [G | H]`. Reducing `M = B·R` with `B` the pivot columns, `Ŷ` gets
/// coordinates in the basis `B` (norming rows = rows of `B`), and `fhat`,
/// `j` are the two blocks of `R`.
pub(crate) fn pushout_from_family(phi: &LinearMap, f: &LinearMap, family: Vec<WitnessPair>) -> Result<PushoutResult> {
    let (nx, ny) = (phi.cod().dim(), f.cod().dim());
    let rows: Vec<Vec<f64>> = family.iter().map(|p| p.g.iter().chain(&p.h).copied().collect()).collect();
    let m = Matrix::from_rows(&rows, nx + ny)?;
    let (r, pivots) = m.rref(1e-10);
    if pivots.is_empty() {
        return Err(Error::Precondition("witness family spans nothing".into()));
    }
    let b = m.select_columns(&pivots);
    let space = NormedSpace::new(b.clone(), "pushout")?;
    let w = NormedSpace::linf(family.len());
    let ambient = LinearMap::new(space.clone(), w, b)?;
    let fcols: Vec<usize> = (0..nx).collect();
    let jcols: Vec<usize> = (nx..nx + ny).collect();
    let fhat = LinearMap::new(phi.cod().clone(), space.clone(), r.select_columns(&fcols))?;
    let j = LinearMap::new(f.cod().clone(), space.clone(), r.select_columns(&jcols))?;
    Ok(PushoutResult { space, fhat, j, ambient, family, defect: 0.0, bound: 0.0 })
}

fn functional_map(dom: &NormedSpace, one: &NormedSpace, v: &[f64]) -> Result<LinearMap> {
    LinearMap::new(dom.clone(), one.clone(), Matrix::from_rows(&[v.to_vec()], dom.dim())?)
}

/// Morphism between arrows `T: X0 → X1` and `S: Y0 → Y1`: a pair of maps
/// `(p0, p1)` with `p1∘T ≈ S∘p0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowMap {
    pub p0: LinearMap,
    pub p1: LinearMap,
}

impl ArrowMap {
    /// `‖p1∘T − S∘p0‖`.
    pub fn commutation_defect(&self, t: &LinearMap, s: &LinearMap) -> Result<f64> {
        op_norm_with(default_engine(), &self.p1.compose(t)?.sub(&s.compose(&self.p0)?)?)
    }
}

/// Output of [`arrow_pushout`]: the arrow `Ŝ: Ŷ0 → Ŷ1` with the two
/// component pushouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowPushoutResult {
    pub d0: PushoutResult,
    pub d1: PushoutResult,
    pub s_hat: LinearMap,
    /// `Ŝ` in ambient coordinates: a coordinate selection `W0 → W1`.
    pub selection: Vec<usize>,
    /// Largest of the component defects `‖f̂_k∘φ_k − j_k∘f_k‖`.
    #[serde(with = "crate::real")]
    pub defect: f64,
    #[serde(with = "crate::real")]
    pub bound: f64,
    /// Measured `‖Ŝ∘f̂0 − f̂1∘T̂‖` and `‖Ŝ∘j0 − j1∘S‖`; zero up to rounding.
    #[serde(with = "crate::real")]
    pub square_defect: f64,
}

/// Pushout in the arrow category.
///
/// `t: X0 → X1`, `t_hat: X̂0 → X̂1`, `s: Y0 → Y1`; `phi: t → t_hat` and
/// `f: t → s`. The `D1` pushout is built first; each of its pairs
/// `(g, h)` contributes `(g∘T̂, h∘S)` to the `D0` family, so `Ŝ` is the
/// selection of those coordinates and both squares commute exactly.
pub fn arrow_pushout(
    t: &LinearMap,
    t_hat: &LinearMap,
    s: &LinearMap,
    phi: &ArrowMap,
    f: &ArrowMap,
    delta: f64,
) -> Result<ArrowPushoutResult> {
    arrow_pushout_with(default_engine(), t, t_hat, s, phi, f, delta)
}

pub fn arrow_pushout_with(
    engine: LpEngine,
    t: &LinearMap,
    t_hat: &LinearMap,
    s: &LinearMap,
    phi: &ArrowMap,
    f: &ArrowMap,
    delta: f64,
) -> Result<ArrowPushoutResult> {
    for m in [t, t_hat, s] {
        let n = op_norm_with(engine, m)?;
        if n > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContraction { norm: n });
        }
    }
    for (name, a, dom, cod) in [("phi", phi, t, t_hat), ("f", f, t, s)] {
        let c = op_norm_with(engine, &a.p1.compose(dom)?.sub(&cod.compose(&a.p0)?)?)?;
        if c > delta + CONTRACTION_TOL {
            return Err(Error::Precondition(format!("{name} commutes only up to {c} > {delta}")));
        }
    }
    let bound = Modulus::Banach.eval(delta) + 2.0 * delta;
    let d1 = approx_pushout_with(engine, &phi.p1, &f.p1, delta, &PushoutOptions::default())?;
    let base = approx_pushout_with(engine, &phi.p0, &f.p0, delta, &PushoutOptions::default())?;
    let mut family = base.family.clone();
    let mut selection = Vec::with_capacity(d1.family.len());
    for p in &d1.family {
        let q = WitnessPair { g: t_hat.matrix().left_mul_vec(&p.g), h: s.matrix().left_mul_vec(&p.h) };
        match family.iter().position(|r| r.coincides(&q)) {
            Some(k) => selection.push(k),
            None => {
                selection.push(family.len());
                family.push(q);
            }
        }
    }
    let mut d0 = pushout_from_family(&phi.p0, &f.p0, family)?;
    d0.defect = op_norm_with(engine, &d0.fhat.compose(&phi.p0)?.sub(&d0.j.compose(&f.p0)?)?)?;
    d0.bound = bound;
    let s_hat = selection_map(&d0, &d1, &selection)?;
    let sq1 = op_norm_with(engine, &s_hat.compose(&d0.fhat)?.sub(&d1.fhat.compose(t_hat)?)?)?;
    let sq2 = op_norm_with(engine, &s_hat.compose(&d0.j)?.sub(&d1.j.compose(s)?)?)?;
    let defect = d0.defect.max(d1.defect);
    Ok(ArrowPushoutResult { d0, d1, s_hat, selection, defect, bound, square_defect: sq1.max(sq2) })
}

/// Expresses the coordinate selection `W0 → W1` as a map `Ŷ0 → Ŷ1`.
pub(crate) fn selection_map(d0: &PushoutResult, d1: &PushoutResult, selection: &[usize]) -> Result<LinearMap> {
    let b0 = d0.ambient.matrix().select_rows(selection);
    let b1 = d1.ambient.matrix();
    let mut cols = Vec::with_capacity(b0.cols());
    for c in 0..b0.cols() {
        cols.push(b1.lstsq(&b0.column(c))?);
    }
    let m = if cols.is_empty() {
        Matrix::zeros(d1.space.dim(), 0)
    } else {
        Matrix::from_columns(&cols, d1.space.dim())?
    };
    LinearMap::new(d0.space.clone(), d1.space.clone(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normed_core::{distortion, map_distance};

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_columns(&[v.to_vec()], v.len()).unwrap()
    }

    #[test]
    fn diagonal_amalgam_of_the_line() {
        let e = NormedSpace::linf(1);
        let id = LinearMap::identity(&e);
        let a = nap_amalgamate(&e, &id, &id, 0.0).unwrap();
        assert_eq!(a.z.dim(), 2);
        assert_eq!(a.i.apply(&[1.0]), vec![1.0, 1.0]);
        assert_eq!(a.j.apply(&[1.0]), vec![1.0, 1.0]);
        assert_eq!(a.defect, 0.0);
    }

    #[test]
    fn joint_embedding_is_isometric() {
        let (z, ix, iy) = joint_embed(&NormedSpace::l1_plane(), &NormedSpace::linf(2)).unwrap();
        assert_eq!(z.dim(), 6);
        assert!(distortion(&ix).unwrap() <= 1e-12);
        assert!(distortion(&iy).unwrap() <= 1e-12);
    }

    #[test]
    fn pushout_of_identities() {
        let x = NormedSpace::linf(2);
        let id = LinearMap::identity(&x);
        let p = approx_pushout(&id, &id, 0.0, &PushoutOptions { embed_hat: true, ..Default::default() }).unwrap();
        assert!(p.defect <= 1e-12);
        assert!(distortion(&p.j).unwrap() <= 1e-12);
        assert!(map_distance(&p.fhat, &p.j).unwrap() <= 1e-12);
    }

    #[test]
    fn pushout_of_a_line_into_two_planes() {
        let x = NormedSpace::linf(1);
        let xh = NormedSpace::linf(3);
        let phi = LinearMap::new(x.clone(), xh, col(&[1.0, 0.5, -0.2])).unwrap();
        let f = LinearMap::new(x, NormedSpace::linf(3), col(&[0.9, 1.0, 0.0])).unwrap();
        let p = approx_pushout(&phi, &f, 0.1, &PushoutOptions::default()).unwrap();
        assert!(distortion(&p.j).unwrap() <= 1e-9);
        assert!(p.defect <= 0.1 + 1e-9);
        assert_eq!(p.family.len(), 3);
    }

    #[test]
    fn incompatible_extra_pairs_are_rejected() {
        let x = NormedSpace::linf(1);
        let id = LinearMap::identity(&x);
        let opts = PushoutOptions { extra_pairs: vec![WitnessPair { g: vec![1.0], h: vec![-1.0] }], ..Default::default() };
        assert!(matches!(approx_pushout(&id, &id, 0.0, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn arrow_pushout_commutes_exactly() {
        let l1 = NormedSpace::linf(1);
        let l2 = NormedSpace::linf(2);
        let t = LinearMap::identity(&l1).scale(0.5);
        let t_hat = LinearMap::new(l2.clone(), l2.clone(), Matrix::identity(2).scale(0.5)).unwrap();
        let s = t.clone();
        let emb = LinearMap::new(l1.clone(), l2.clone(), col(&[1.0, 0.3])).unwrap();
        let phi = ArrowMap { p0: emb.clone(), p1: emb };
        let f = ArrowMap { p0: LinearMap::identity(&l1), p1: LinearMap::identity(&l1) };
        let r = arrow_pushout(&t, &t_hat, &s, &phi, &f, 0.05).unwrap();
        assert!(r.square_defect <= 1e-9);
        assert!(r.defect <= 0.15 + 1e-9);
    }
}
