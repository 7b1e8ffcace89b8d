//! Finite-dimensional real normed spaces with explicit norming families,
//! linear maps between them, and the LP-exact norm, distortion and
//! extension primitives everything else is built on.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, l1_norm, sup_norm, Matrix};
use crate::lp::{default_engine, Lp, LpEngine, Rel};

/// Slack allowed when a map must be a contraction.
pub const CONTRACTION_TOL: f64 = 1e-7;

/// A real space `R^n` normed by `‖x‖ = max_i |f_i(x)|` over the rows of
/// `norming`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct NormedSpace {
    dim: usize,
    norming: Matrix,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    dim: usize,
    norming: Matrix,
    #[serde(default)]
    label: String,
}

impl TryFrom<RawSpace> for NormedSpace {
    type Error = Error;
    fn try_from(r: RawSpace) -> Result<Self> {
        if r.norming.cols() != r.dim {
            return Err(Error::Shape(alloc::format!(
                "norming has {} columns, dim is {}",
                r.norming.cols(),
                r.dim
            )));
        }
        NormedSpace::new(r.norming, &r.label)
    }
}

impl From<NormedSpace> for RawSpace {
    fn from(s: NormedSpace) -> Self {
        RawSpace { dim: s.dim, norming: s.norming, label: s.label }
    }
}

impl NormedSpace {
    pub fn new(norming: Matrix, label: &str) -> Result<Self> {
        let dim = norming.cols();
        if dim == 0 {
            return Err(Error::ZeroDimensional);
        }
        if !norming.is_finite() {
            return Err(Error::NotFinite);
        }
        let rank = norming.rank(1e-10);
        if rank < dim {
            return Err(Error::RankDeficient { rank, dim });
        }
        Ok(NormedSpace { dim, norming, label: label.to_string() })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: &str) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        Self::new(Matrix::from_rows(rows, dim)?, label)
    }

    /// `ℓ∞^n`, normed by the coordinate functionals.
    pub fn linf(n: usize) -> Self {
        assert!(n > 0, "linf needs a positive dimension");
        NormedSpace { dim: n, norming: Matrix::identity(n), label: alloc::format!("linf{n}") }
    }

    /// `ℓ1^2` presented by the four sign functionals.
    pub fn l1_plane() -> Self {
        let rows = [vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        Self::from_rows(&rows, "l1_2").expect("full rank")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norming(&self) -> &Matrix {
        &self.norming
    }

    pub fn num_rows(&self) -> usize {
        self.norming.rows()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        sup_norm(&self.norming.mul_vec(x))
    }

    /// True when the norming family is exactly the coordinate functionals.
    pub fn is_linf(&self) -> bool {
        self.norming.rows() == self.dim && self.norming == Matrix::identity(self.dim)
    }

    /// Largest 1-norm of a norming row.
    pub fn row_bound(&self) -> f64 {
        (0..self.num_rows()).map(|i| l1_norm(self.norming.row(i))).fold(0.0, f64::max)
    }

    /// Norm of the functional `x ↦ g·x` in the dual space.
    pub fn dual_norm(&self, g: &[f64]) -> Result<f64> {
        self.dual_norm_with(default_engine(), g)
    }

    pub fn dual_norm_with(&self, engine: LpEngine, g: &[f64]) -> Result<f64> {
        if g.len() != self.dim {
            return Err(Error::Shape("functional length".into()));
        }
        if self.is_linf() {
            return Ok(l1_norm(g));
        }
        if g.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        let mut lp = Lp::new(self.dim);
        lp.maximize(g.to_vec());
        for i in 0..self.num_rows() {
            lp.add_abs_le(self.norming.row(i).to_vec(), 1.0);
        }
        Ok(lp.solve_with(engine)?.value.max(0.0))
    }

    /// Indices of rows that are pairwise distinct up to sign.
    pub fn distinct_rows(&self) -> Vec<usize> {
        distinct_up_to_sign(&self.norming)
    }
}

pub(crate) fn distinct_up_to_sign(m: &Matrix) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    'rows: for i in 0..m.rows() {
        let r = m.row(i);
        if r.iter().all(|v| *v == 0.0) {
            continue;
        }
        for &k in &keep {
            let q = m.row(k);
            let same = r.iter().zip(q).all(|(a, b)| (a - b).abs() <= 1e-14);
            let opp = r.iter().zip(q).all(|(a, b)| (a + b).abs() <= 1e-14);
            if same || opp {
                continue 'rows;
            }
        }
        keep.push(i);
    }
    keep
}

/// A linear map between normed spaces, stored as a `cod.dim × dom.dim`
/// matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct LinearMap {
    dom: NormedSpace,
    cod: NormedSpace,
    matrix: Matrix,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    dom: NormedSpace,
    cod: NormedSpace,
    matrix: Matrix,
}

impl TryFrom<RawMap> for LinearMap {
    type Error = Error;
    fn try_from(r: RawMap) -> Result<Self> {
        let matrix = if r.matrix.rows() == 0 { Matrix::zeros(r.cod.dim(), r.dom.dim()) } else { r.matrix };
        LinearMap::new(r.dom, r.cod, matrix)
    }
}

impl From<LinearMap> for RawMap {
    fn from(m: LinearMap) -> Self {
        RawMap { dom: m.dom, cod: m.cod, matrix: m.matrix }
    }
}

impl LinearMap {
    pub fn new(dom: NormedSpace, cod: NormedSpace, matrix: Matrix) -> Result<Self> {
        if matrix.rows() != cod.dim() || matrix.cols() != dom.dim() {
            return Err(Error::Shape(alloc::format!(
                "matrix {}x{} for a map from dim {} to dim {}",
                matrix.rows(),
                matrix.cols(),
                dom.dim(),
                cod.dim()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NotFinite);
        }
        Ok(LinearMap { dom, cod, matrix })
    }

    pub fn identity(space: &NormedSpace) -> Self {
        LinearMap { dom: space.clone(), cod: space.clone(), matrix: Matrix::identity(space.dim()) }
    }

    pub fn zero(dom: &NormedSpace, cod: &NormedSpace) -> Self {
        LinearMap { dom: dom.clone(), cod: cod.clone(), matrix: Matrix::zeros(cod.dim(), dom.dim()) }
    }

    pub fn dom(&self) -> &NormedSpace {
        &self.dom
    }

    pub fn cod(&self) -> &NormedSpace {
        &self.cod
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinearMap) -> Result<LinearMap> {
        if inner.cod.dim() != self.dom.dim() {
            return Err(Error::Shape("composition of incompatible maps".into()));
        }
        Ok(LinearMap { dom: inner.dom.clone(), cod: self.cod.clone(), matrix: self.matrix.mul(&inner.matrix) })
    }

    pub fn sub(&self, other: &LinearMap) -> Result<LinearMap> {
        if other.matrix.rows() != self.matrix.rows() || other.matrix.cols() != self.matrix.cols() {
            return Err(Error::Shape("difference of maps with different shapes".into()));
        }
        Ok(LinearMap { dom: self.dom.clone(), cod: self.cod.clone(), matrix: self.matrix.sub(&other.matrix) })
    }

    pub fn scale(&self, s: f64) -> LinearMap {
        LinearMap { dom: self.dom.clone(), cod: self.cod.clone(), matrix: self.matrix.scale(s) }
    }

    /// Same matrix viewed between other spaces of the same dimensions.
    pub fn with_spaces(&self, dom: &NormedSpace, cod: &NormedSpace) -> Result<LinearMap> {
        LinearMap::new(dom.clone(), cod.clone(), self.matrix.clone())
    }

    /// The functionals `g_j ∘ T` for the codomain norming rows `g_j`.
    pub fn pulled_rows(&self) -> Matrix {
        self.cod.norming().mul(&self.matrix)
    }
}

/// Tolerance-amplification function of a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulus {
    Banach,
    FunctionSystem,
}

impl Modulus {
    pub fn eval(self, delta: f64) -> f64 {
        match self {
            Modulus::Banach => delta,
            Modulus::FunctionSystem => 2.0 * delta,
        }
    }
}

pub fn op_norm(t: &LinearMap) -> Result<f64> {
    op_norm_with(default_engine(), t)
}

/// `max_{‖x‖ ≤ 1} ‖Tx‖`: the largest dual norm of a pulled-back codomain
/// row. The domain ball is symmetric, so one sign per row suffices.
pub fn op_norm_with(engine: LpEngine, t: &LinearMap) -> Result<f64> {
    let pulled = t.pulled_rows();
    let mut best: f64 = 0.0;
    for j in distinct_up_to_sign(&pulled) {
        best = best.max(t.dom.dual_norm_with(engine, pulled.row(j))?);
    }
    Ok(best)
}

/// `d(S, T) = ‖S − T‖`.
pub fn map_distance(s: &LinearMap, t: &LinearMap) -> Result<f64> {
    op_norm(&s.sub(t)?)
}

pub fn distortion(t: &LinearMap) -> Result<f64> {
    distortion_with(default_engine(), t)
}

/// `I(T) = max_{‖x‖ ≤ 2} (‖x‖ − ‖Tx‖)` for a contraction `T`, one LP per
/// domain norming row (up to sign).
pub fn distortion_with(engine: LpEngine, t: &LinearMap) -> Result<f64> {
    let norm = op_norm_with(engine, t)?;
    if norm > 1.0 + CONTRACTION_TOL {
        return Err(Error::NotContraction { norm });
    }
    distortion_unchecked(engine, t)
}

pub(crate) fn distortion_unchecked(engine: LpEngine, t: &LinearMap) -> Result<f64> {
    let n = t.dom.dim();
    let pulled = t.pulled_rows();
    let cod_rows = distinct_up_to_sign(&pulled);
    let dom_rows = t.dom.distinct_rows();
    let mut best: f64 = 0.0;
    for &i in &dom_rows {
        // Variables: x (n), then t.
        let mut lp = Lp::new(n + 1);
        let mut obj = t.dom.norming().row(i).to_vec();
        obj.push(-1.0);
        lp.maximize(obj);
        for &j in &cod_rows {
            let mut a = pulled.row(j).to_vec();
            a.push(-1.0);
            lp.add(a, Rel::Le, 0.0);
            let mut b: Vec<f64> = pulled.row(j).iter().map(|v| -v).collect();
            b.push(-1.0);
            lp.add(b, Rel::Le, 0.0);
        }
        if cod_rows.is_empty() {
            let mut a = vec![0.0; n];
            a.push(-1.0);
            lp.add(a, Rel::Le, 0.0);
        }
        for &k in &dom_rows {
            let mut a = t.dom.norming().row(k).to_vec();
            a.push(0.0);
            lp.add_abs_le(a, 2.0);
        }
        best = best.max(lp.solve_with(engine)?.value);
    }
    Ok(best.max(0.0))
}

/// The isometric presentation `x ↦ (f_1(x), …, f_N(x))` into `ℓ∞^N`.
pub fn embed_linf(x: &NormedSpace) -> LinearMap {
    LinearMap {
        dom: x.clone(),
        cod: NormedSpace::linf(x.num_rows()),
        matrix: x.norming().clone(),
    }
}

/// A functional on `X` written as a combination of its norming rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Extension {
    pub coefficients: Vec<f64>,
    pub functional: Vec<f64>,
    /// `Σ|λ_i|`, an upper bound on the dual norm of `functional`.
    pub coefficient_sum: f64,
}

/// Finds `λ` of least `Σ|λ_i|` with `(Σ λ_i f_i^X) ∘ j = g`. The optimum is
/// the norm of `g ∘ j⁻¹` on the range of `j` (Hahn–Banach in the dual of
/// the polytope presentation).
pub fn extend_functional_with(engine: LpEngine, j: &LinearMap, g: &[f64]) -> Result<Extension> {
    let e_dim = j.dom.dim();
    if g.len() != e_dim {
        return Err(Error::Shape("functional length".into()));
    }
    let fx = j.cod.norming();
    let pulled = fx.mul(&j.matrix);
    let n_rows = fx.rows();
    let mut lp = Lp::new(2 * n_rows);
    for v in 0..2 * n_rows {
        lp.set_nonneg(v);
    }
    lp.minimize(vec![1.0; 2 * n_rows]);
    for e in 0..e_dim {
        let mut a = vec![0.0; 2 * n_rows];
        for i in 0..n_rows {
            a[i] = pulled[(i, e)];
            a[n_rows + i] = -pulled[(i, e)];
        }
        lp.add(a, Rel::Eq, g[e]);
    }
    let sol = lp.solve_with(engine).map_err(|e| match e {
        crate::lp::LpError::Infeasible => Error::NotInjective,
        other => Error::Lp(other),
    })?;
    let coefficients: Vec<f64> = (0..n_rows).map(|i| sol.x[i] - sol.x[n_rows + i]).collect();
    let functional = fx.left_mul_vec(&coefficients);
    let coefficient_sum = l1_norm(&coefficients);
    Ok(Extension { coefficients, functional, coefficient_sum })
}

pub fn hahn_banach_extend(j: &LinearMap, g: &[f64], c: f64) -> Result<Extension> {
    hahn_banach_extend_with(default_engine(), j, g, c)
}

/// Norm-preserving extension of `g` from `E` through the isometry
/// `j: E → X`, with coefficient sum at most `c`.
pub fn hahn_banach_extend_with(engine: LpEngine, j: &LinearMap, g: &[f64], c: f64) -> Result<Extension> {
    let dist = distortion_with(engine, j)?;
    if dist > crate::TOL {
        return Err(Error::Distortion { measured: dist, allowed: crate::TOL });
    }
    let gnorm = j.dom.dual_norm_with(engine, g)?;
    if gnorm > c * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::NormExceeded { norm: gnorm, bound: c });
    }
    let ext = extend_functional_with(engine, j, g)?;
    if ext.coefficient_sum > c * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::NormExceeded { norm: ext.coefficient_sum, bound: c });
    }
    Ok(ext)
}

/// Largest deviation `|(h ∘ j)(e) − g(e)|` over the coordinate basis of `E`.
pub fn agreement_defect(j: &LinearMap, g: &[f64], h: &[f64]) -> f64 {
    let hj = j.matrix.left_mul_vec(h);
    hj.iter().zip(g).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Given `φ: X → X̂` with `I(φ) ≤ δ < 1` and a contraction `f: X → A`
/// into some `ℓ∞^m`, returns a contraction `h: X̂ → A` with
/// `‖h∘φ − f‖ ≤ ϖ(δ)`.
pub fn extend_morphism(phi: &LinearMap, f: &LinearMap, delta: f64) -> Result<LinearMap> {
    extend_morphism_with(default_engine(), phi, f, delta)
}

pub fn extend_morphism_with(engine: LpEngine, phi: &LinearMap, f: &LinearMap, delta: f64) -> Result<LinearMap> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::DeltaTooLarge(delta));
    }
    if !f.cod.is_linf() {
        return Err(Error::Precondition("extension target must be an l-infinity space".into()));
    }
    if phi.dom.dim() != f.dom.dim() {
        return Err(Error::Shape("phi and f must share a domain".into()));
    }
    for m in [phi, f] {
        let norm = op_norm_with(engine, m)?;
        if norm > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContraction { norm });
        }
    }
    let dist = distortion_unchecked(engine, phi)?;
    if dist > delta + CONTRACTION_TOL {
        return Err(Error::Distortion { measured: dist, allowed: delta });
    }
    let mut h = Matrix::zeros(f.cod.dim(), phi.cod.dim());
    for i in 0..f.cod.dim() {
        let ext = extend_functional_with(engine, phi, f.matrix.row(i))?;
        // The restricted norm is at most 2/(2−δ) ≤ 1+δ.
        if ext.coefficient_sum > 1.0 + delta + 1e-9 {
            return Err(Error::NormExceeded { norm: ext.coefficient_sum, bound: 1.0 + delta });
        }
        let s = ext.coefficient_sum.max(1.0);
        for (k, v) in ext.functional.iter().enumerate() {
            h[(i, k)] = v / s;
        }
    }
    LinearMap::new(phi.cod.clone(), f.cod.clone(), h)
}

/// A space with a distinguished basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedSpace {
    pub space: NormedSpace,
    #[serde(with = "crate::real::vecvec")]
    pub tuple: Vec<Vec<f64>>,
}

impl MarkedSpace {
    pub fn new(space: NormedSpace, tuple: Vec<Vec<f64>>) -> Result<Self> {
        let m = Matrix::from_columns(&tuple, space.dim())?;
        if tuple.len() != space.dim() || m.rank(1e-10) != space.dim() {
            return Err(Error::Precondition("tuple must be a basis of the space".into()));
        }
        Ok(MarkedSpace { space, tuple })
    }

    pub fn tuple_matrix(&self) -> Matrix {
        Matrix::from_columns(&self.tuple, self.space.dim()).expect("validated")
    }
}

/// Upper bound `ϖ(∂̂) + ∂̂` on the Fraïssé distance of two marked spaces,
/// where `∂̂` is the best `max{I(f), d(f(ā), b̄)}` over rescalings of the
/// tuple-matching map.
pub fn fraisse_dist_upper(a: &MarkedSpace, b: &MarkedSpace, modulus: Modulus) -> Result<f64> {
    if a.tuple.len() != b.tuple.len() {
        return Ok(f64::INFINITY);
    }
    let am = a.tuple_matrix();
    let bm = b.tuple_matrix();
    let f0 = LinearMap::new(a.space.clone(), b.space.clone(), bm.mul(&am.inverse()?))?;
    let n0 = op_norm(&f0)?;
    let bmax = b.tuple.iter().map(|v| b.space.norm(v)).fold(0.0, f64::max);
    let cost = |c: f64| -> Result<f64> {
        let i = distortion_unchecked(default_engine(), &f0.scale(c))?;
        Ok(i.max((c - 1.0).abs() * bmax))
    };
    // The cost is convex in the scale c ∈ (0, 1/‖f0‖]: grid, then golden
    // section around the best grid point.
    let hi = 1.0 / n0;
    let lo = hi * 0.25;
    let steps = 16;
    let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    let mut vals = Vec::with_capacity(grid.len());
    for &c in &grid {
        vals.push(cost(c)?);
    }
    let mut k = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[k] {
            k = i;
        }
    }
    let mut best = vals[k];
    let (mut l, mut r) = (grid[k.saturating_sub(1)], grid[(k + 1).min(steps)]);
    let golden = 0.618_033_988_749_894_9;
    for _ in 0..40 {
        let m1 = r - golden * (r - l);
        let m2 = l + golden * (r - l);
        let (v1, v2) = (cost(m1)?, cost(m2)?);
        best = best.min(v1).min(v2);
        if v1 <= v2 {
            r = m2;
        } else {
            l = m1;
        }
    }
    if hi >= 1.0 {
        best = best.min(cost(1.0)?);
    }
    Ok(modulus.eval(best) + best)
}

/// Upper bound on the Gromov–Hausdorff distance from candidate pairs
/// `(f, g) = (T/‖T‖, T⁻¹/‖T⁻¹‖)` over invertible candidates `T`.
///
/// With this scaling `g∘f` and `f∘g` are the same multiple of the
/// identity, so all four quantities are minimized simultaneously.
pub fn gh_dist_upper(x: &NormedSpace, y: &NormedSpace) -> Result<f64> {
    gh_dist_upper_with_candidates(x, y, &[])
}

pub fn gh_dist_upper_with_candidates(x: &NormedSpace, y: &NormedSpace, extra: &[Matrix]) -> Result<f64> {
    // The zero pair gives d(0, id) = 1 and I(0) = 2.
    let mut best: f64 = 2.0;
    if x.dim() != y.dim() {
        return Ok(best);
    }
    let mut candidates: Vec<Matrix> = signed_permutations(x.dim());
    candidates.extend(extra.iter().cloned());
    for t in candidates {
        if t.rows() != y.dim() || t.cols() != x.dim() {
            continue;
        }
        let Ok(tinv) = t.inverse() else { continue };
        let f = LinearMap::new(x.clone(), y.clone(), t)?;
        let g = LinearMap::new(y.clone(), x.clone(), tinv)?;
        let (nf, ng) = (op_norm(&f)?, op_norm(&g)?);
        let f = f.scale(1.0 / nf);
        let g = g.scale(1.0 / ng);
        let comp = 1.0 - 1.0 / (nf * ng);
        let eps = comp
            .max(distortion_unchecked(default_engine(), &f)?)
            .max(distortion_unchecked(default_engine(), &g)?);
        best = best.min(eps.max(0.0));
    }
    Ok(best)
}

/// Identity first, then the other signed permutation matrices for
/// dimensions up to 3.
fn signed_permutations(n: usize) -> Vec<Matrix> {
    let mut out = vec![Matrix::identity(n)];
    if n > 3 {
        return out;
    }
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &perms {
            for k in 0..n {
                if !p.contains(&k) {
                    let mut q = p.clone();
                    q.push(k);
                    next.push(q);
                }
            }
        }
        perms = next;
    }
    for p in perms {
        for signs in 0..(1u32 << n) {
            let mut m = Matrix::zeros(n, n);
            for (i, &k) in p.iter().enumerate() {
                m[(i, k)] = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m != out[0] {
                out.push(m);
            }
        }
    }
    out
}

/// Norm of `x` under the codomain of `t` after applying `t`.
pub fn image_norm(t: &LinearMap, x: &[f64]) -> f64 {
    t.cod.norm(&t.apply(x))
}

/// Value of a functional (as a coefficient vector) at `x`.
pub fn eval(functional: &[f64], x: &[f64]) -> f64 {
    dot(functional, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(rows: &[[f64; 2]]) -> NormedSpace {
        NormedSpace::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), "t").unwrap()
    }

    #[test]
    fn rejects_degenerate_presentations() {
        assert_eq!(NormedSpace::new(Matrix::zeros(3, 0), "z"), Err(Error::ZeroDimensional));
        let e = NormedSpace::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], "r").unwrap_err();
        assert_eq!(e, Error::RankDeficient { rank: 1, dim: 2 });
    }

    #[test]
    fn identity_and_scaling_norms() {
        let l2 = NormedSpace::linf(2);
        assert_eq!(op_norm(&LinearMap::identity(&l2)).unwrap(), 1.0);
        let l3 = NormedSpace::linf(3);
        assert_eq!(op_norm(&LinearMap::identity(&l3).scale(0.5)).unwrap(), 0.5);
    }

    #[test]
    fn scaled_identity_distortion() {
        let l1 = NormedSpace::linf(1);
        let d = distortion(&LinearMap::identity(&l1).scale(0.9)).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn presentation_maps_are_isometric() {
        let l1 = NormedSpace::l1_plane();
        let e = embed_linf(&l1);
        assert_eq!(e.matrix().rows(), 4);
        assert!(distortion(&e).unwrap() <= 1e-12);
        assert_eq!(embed_linf(&NormedSpace::linf(2)).matrix(), &Matrix::identity(2));
    }

    #[test]
    fn non_contractions_have_no_distortion() {
        let l1 = NormedSpace::linf(1);
        assert!(matches!(
            distortion(&LinearMap::identity(&l1).scale(1.5)),
            Err(Error::NotContraction { .. })
        ));
    }

    #[test]
    fn hahn_banach_on_the_diagonal() {
        let e = NormedSpace::linf(1);
        let x = NormedSpace::linf(2);
        let j = LinearMap::new(e, x, Matrix::from_rows(&[vec![1.0], vec![1.0]], 1).unwrap()).unwrap();
        let ext = hahn_banach_extend(&j, &[1.0], 1.0).unwrap();
        assert!(ext.coefficients.iter().all(|l| *l >= -1e-12));
        assert!((ext.coefficient_sum - 1.0).abs() < 1e-12);
        assert!(agreement_defect(&j, &[1.0], &ext.functional) < 1e-12);
        let zero = hahn_banach_extend(&j, &[0.0], 1.0).unwrap();
        assert!(zero.functional.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hahn_banach_rejects_small_bounds() {
        let e = NormedSpace::linf(1);
        let x = NormedSpace::linf(2);
        let j = LinearMap::new(e, x, Matrix::from_rows(&[vec![1.0], vec![0.0]], 1).unwrap()).unwrap();
        assert!(matches!(hahn_banach_extend(&j, &[2.0], 1.0), Err(Error::NormExceeded { .. })));
    }

    #[test]
    fn extend_morphism_identity_cases() {
        let x = space(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let a = NormedSpace::linf(2);
        let f = LinearMap::new(x.clone(), a, Matrix::from_rows(&[vec![0.5, 0.0], vec![0.2, 0.3]], 2).unwrap()).unwrap();
        let h = extend_morphism(&LinearMap::identity(&x), &f, 0.0).unwrap();
        assert!(map_distance(&h, &f).unwrap() < 1e-12);
        assert!(matches!(extend_morphism(&LinearMap::identity(&x), &f, 1.0), Err(Error::DeltaTooLarge(_))));
    }

    #[test]
    fn fraisse_distance_examples() {
        let a = MarkedSpace::new(NormedSpace::l1_plane(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(fraisse_dist_upper(&a, &a, Modulus::Banach).unwrap() < 1e-12);
        let swapped = MarkedSpace::new(NormedSpace::l1_plane(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(fraisse_dist_upper(&a, &swapped, Modulus::Banach).unwrap() < 1e-12);
        let delta = 0.1;
        let p = MarkedSpace::new(NormedSpace::linf(1), vec![vec![1.0]]).unwrap();
        let q = MarkedSpace::new(NormedSpace::linf(1), vec![vec![1.0 - delta]]).unwrap();
        let d = fraisse_dist_upper(&p, &q, Modulus::Banach).unwrap();
        assert!(d <= 2.0 * delta + 1e-9, "{d}");
        let short = MarkedSpace::new(NormedSpace::linf(1), vec![vec![1.0]]).unwrap();
        assert_eq!(fraisse_dist_upper(&a, &short, Modulus::Banach).unwrap(), f64::INFINITY);
    }

    #[test]
    fn gh_distance_examples() {
        let x = NormedSpace::l1_plane();
        assert!(gh_dist_upper(&x, &x).unwrap() < 1e-12);
        // ℓ1^2 and ℓ∞^2 are isometric through a 45° rotation.
        let rot = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]], 2).unwrap();
        let d = gh_dist_upper_with_candidates(&x, &NormedSpace::linf(2), &[rot]).unwrap();
        assert!(d < 1e-12);
        let delta = 0.05;
        let y = NormedSpace::from_rows(&[vec![1.0 - delta]], "short").unwrap();
        assert!(gh_dist_upper(&NormedSpace::linf(1), &y).unwrap() <= 2.0 * delta);
        assert_eq!(gh_dist_upper(&NormedSpace::linf(1), &NormedSpace::linf(2)).unwrap(), 2.0);
    }
}
