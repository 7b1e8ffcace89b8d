//! Function systems presented inside `ℓ∞^N` with unit the constants
//! vector: states, the perturbation to unital positive maps, unital
//! amalgamation, the Poulsen chain, minimality embeddings and the LP
//! checkers for facial and biface quotients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::amalgamation::AmalgamResult;
use crate::certificate::{Certificate, Witness};
use crate::error::{Error, Result};
use crate::limit_builder::{build_chain, ChainConfig, StageChain};
use crate::linalg::{dot, sup_norm, Matrix};
use crate::lp::{default_engine, Lp, LpEngine, Rel};
use crate::normed_core::{distortion_with, embed_linf, op_norm_with, LinearMap, NormedSpace};
use crate::sample::gaussian;

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSystem {
    pub base: NormedSpace,
    #[serde(with = "crate::real::vec")]
    pub unit: Vec<f64>,
}

impl FunctionSystem {
    /// Every norming row must take the value 1 at `unit`.
    pub fn new(base: NormedSpace, unit: Vec<f64>) -> Result<Self> {
        if unit.len() != base.dim() {
            return Err(Error::Shape("unit length".into()));
        }
        let values = base.norming().mul_vec(&unit);
        if let Some(v) = values.iter().find(|v| (**v - 1.0).abs() > UNIT_TOL) {
            return Err(Error::Precondition(format!("norming row takes value {v} at the unit")));
        }
        Ok(FunctionSystem { base, unit })
    }

    pub fn linf(n: usize) -> Self {
        FunctionSystem { base: NormedSpace::linf(n), unit: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// A convex combination of the norming rows of a function system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    #[serde(with = "crate::real::vec")]
    pub coefficients: Vec<f64>,
}

impl StateVector {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        check_stochastic(&coefficients)?;
        Ok(StateVector { coefficients })
    }

    /// Uniform weights on `n` rows.
    pub fn uniform(n: usize) -> Self {
        StateVector { coefficients: vec![1.0 / n as f64; n] }
    }

    /// Random weights, normalized exponentials rounded to multiples of
    /// `2^-40` with the last weight taking the remainder, so that every
    /// partial sum is exact and the weights sum to exactly one.
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        const SCALE: f64 = (1u64 << 40) as f64;
        let w: Vec<f64> = (0..n).map(|_| libm::exp(gaussian(rng))).collect();
        let s: f64 = w.iter().sum();
        let mut c: Vec<f64> = w.iter().map(|v| libm::floor(v / s * SCALE) / SCALE).collect();
        let head: f64 = c[..n - 1].iter().sum();
        c[n - 1] = 1.0 - head;
        StateVector { coefficients: c }
    }

    /// The functional `Σ λ_i f_i`.
    pub fn functional(&self, system: &FunctionSystem) -> Result<Vec<f64>> {
        if self.coefficients.len() != system.base.num_rows() {
            return Err(Error::Shape("one coefficient per norming row".into()));
        }
        Ok(system.base.norming().left_mul_vec(&self.coefficients))
    }
}

fn check_stochastic(w: &[f64]) -> Result<()> {
    let s: f64 = w.iter().sum();
    if w.is_empty() || w.iter().any(|v| !(*v >= -1e-12)) || (s - 1.0).abs() > UNIT_TOL {
        return Err(Error::Precondition("weights must be nonnegative and sum to 1".into()));
    }
    Ok(())
}

/// The state `μ^T F_X` of `X = j.cod()` whose pullback along `j` is closest
/// to `target` in the dual norm of `j.dom()`; returns it with the distance.
pub fn extend_state_with(engine: LpEngine, j: &LinearMap, target: &[f64]) -> Result<(Vec<f64>, f64)> {
    let e = j.dom();
    if target.len() != e.dim() {
        return Err(Error::Shape("functional length".into()));
    }
    let fx = j.cod().norming();
    let pulled = fx.mul(j.matrix());
    let (nx, ne) = (fx.rows(), e.num_rows());
    // Variables: μ (nx), p, q (ne each), t; all nonnegative.
    let total = nx + 2 * ne + 1;
    let mut lp = Lp::new(total);
    for v in 0..total {
        lp.set_nonneg(v);
    }
    let mut sum = vec![0.0; total];
    sum[..nx].iter_mut().for_each(|v| *v = 1.0);
    lp.add(sum, Rel::Eq, 1.0);
    for k in 0..e.dim() {
        let mut c = vec![0.0; total];
        for r in 0..nx {
            c[r] = pulled[(r, k)];
        }
        for s in 0..ne {
            c[nx + s] = -e.norming()[(s, k)];
            c[nx + ne + s] = e.norming()[(s, k)];
        }
        lp.add(c, Rel::Eq, target[k]);
    }
    let mut c = vec![0.0; total];
    c[nx..total - 1].iter_mut().for_each(|v| *v = 1.0);
    c[total - 1] = -1.0;
    lp.add(c, Rel::Le, 0.0);
    let mut obj = vec![0.0; total];
    obj[total - 1] = 1.0;
    lp.minimize(obj);
    let sol = lp.solve_with(engine)?;
    let mu: Vec<f64> = sol.x[..nx].iter().map(|v| v.max(0.0)).collect();
    Ok((fx.left_mul_vec(&mu), sol.value.max(0.0)))
}

/// Replaces each coordinate functional of a unital `f` by its nearest
/// state, giving a unital positive map `g`.
pub fn perturb_to_unital_positive(f: &LinearMap, dom: &FunctionSystem) -> Result<LinearMap> {
    perturb_to_unital_positive_with(default_engine(), f, dom)
}

pub fn perturb_to_unital_positive_with(engine: LpEngine, f: &LinearMap, dom: &FunctionSystem) -> Result<LinearMap> {
    if f.dom() != &dom.base || !f.cod().is_linf() {
        return Err(Error::Shape("f must map the function system into an l-infinity space".into()));
    }
    let image = f.apply(&dom.unit);
    if image.iter().any(|v| (v - 1.0).abs() > UNIT_TOL) {
        return Err(Error::Precondition("f is not unital".into()));
    }
    let id = LinearMap::identity(&dom.base);
    let mut g = Matrix::zeros(f.cod().dim(), dom.dim());
    for i in 0..f.cod().dim() {
        let (state, dist) = extend_state_with(engine, &id, f.matrix().row(i))?;
        // Keep rows that already are states untouched.
        let row = if dist <= 1e-12 { f.matrix().row(i).to_vec() } else { state };
        g.row_mut(i).copy_from_slice(&row);
    }
    LinearMap::new(dom.base.clone(), f.cod().clone(), g)
}

/// Whether `T` is unital between `ℓ∞` presentations and each coordinate
/// is a convex combination of norming rows.
pub fn is_unital_positive(t: &LinearMap, dom: &FunctionSystem) -> Result<bool> {
    let id = LinearMap::identity(&dom.base);
    for i in 0..t.cod().dim() {
        let (_, dist) = extend_state_with(default_engine(), &id, t.matrix().row(i))?;
        if dist > 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Unital near amalgamation of `f_X: E → X`, `f_Y: E → Y` inside
/// `ℓ∞^{N_X+N_Y}`: the norming presentations side by side, completed by
/// states extending the other side along each map.
pub fn unital_amalgamate(e: &FunctionSystem, f_x: &LinearMap, f_y: &LinearMap) -> Result<AmalgamResult> {
    unital_amalgamate_with(default_engine(), e, f_x, f_y)
}

pub fn unital_amalgamate_with(engine: LpEngine, e: &FunctionSystem, f_x: &LinearMap, f_y: &LinearMap) -> Result<AmalgamResult> {
    if f_x.dom() != &e.base || f_y.dom() != &e.base {
        return Err(Error::Shape("both maps must start at E".into()));
    }
    let ex = embed_linf(f_x.cod());
    let ey = embed_linf(f_y.cod());
    let side = |f: &LinearMap, other: &Matrix| -> Result<Matrix> {
        let mut h = Matrix::zeros(other.rows(), f.cod().dim());
        for r in 0..other.rows() {
            let (state, _) = extend_state_with(engine, f, other.row(r))?;
            h.row_mut(r).copy_from_slice(&state);
        }
        Ok(h)
    };
    let h_x = side(f_x, &ey.matrix().mul(f_y.matrix()))?;
    let h_y = side(f_y, &ex.matrix().mul(f_x.matrix()))?;
    let z = NormedSpace::linf(ex.cod().dim() + ey.cod().dim());
    let i = LinearMap::new(f_x.cod().clone(), z.clone(), ex.matrix().vstack(&h_x))?;
    let j = LinearMap::new(f_y.cod().clone(), z.clone(), h_y.vstack(ey.matrix()))?;
    let defect = op_norm_with(engine, &i.compose(f_x)?.sub(&j.compose(f_y)?)?)?;
    Ok(AmalgamResult { z, i, j, defect })
}

/// Maps `ℓ∞^a → ℓ∞^n` whose rows are grid states at pitch
/// `resolution / a`; `None` when there are more than `cap`.
pub fn unital_state_net(a: usize, n: usize, resolution: f64, cap: usize) -> Result<Option<Vec<LinearMap>>> {
    if a == 0 || !(resolution > 0.0) {
        return Err(Error::Precondition("unital nets need a positive resolution".into()));
    }
    let k = libm::round(a as f64 / resolution).max(1.0) as usize;
    let states = grid_states(a, k);
    let count = libm::pow(states.len() as f64, n as f64);
    if count > cap as f64 {
        return Ok(None);
    }
    let (src, tgt) = (NormedSpace::linf(a), NormedSpace::linf(n));
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    'grid: loop {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&s| states[s].clone()).collect();
        out.push(LinearMap::new(src.clone(), tgt.clone(), Matrix::from_rows(&rows, a)?)?);
        for p in (0..n).rev() {
            idx[p] += 1;
            if idx[p] < states.len() {
                continue 'grid;
            }
            idx[p] = 0;
        }
        break;
    }
    Ok(Some(out))
}

/// Points of the simplex in `ℝ^a` with coordinates in `(1/k)ℤ`.
fn grid_states(a: usize, k: usize) -> Vec<Vec<f64>> {
    fn rec(a: usize, left: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == a {
            cur.push(left);
            out.push(cur.iter().map(|c| *c as f64 / k as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(a, left - c, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(a, k, k, &mut Vec::new(), &mut out);
    out
}

/// Builds a chain approximating the Poulsen function system.
pub fn build_poulsen_chain(depth: usize, dim_cap: usize, net_resolution: f64, seed: u64) -> Result<StageChain> {
    build_chain(&ChainConfig::poulsen(depth, dim_cap, net_resolution, seed))
}

/// Result of [`poulsen_extension_step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoulsenStep {
    /// `Q: stage → ℓ∞^{n+1}`.
    pub q: LinearMap,
    /// Norming rows used as `s_1, …, s_{n+1}`.
    pub rows: Vec<usize>,
    /// Dual-norm distance of `s_{n+1}` from the convex hull of the others.
    #[serde(with = "crate::real")]
    pub separation: f64,
    pub certificate: Certificate,
}

/// For a unital isometry `f: ℓ∞^n → G` and
/// `φ(e_i) = e_i + a_i e_{n+1}`, picks norming states `s_i` of `G` with
/// `s_i(f(e_i)) = 1` and a further state `s_{n+1}` whose pullback is
/// closest to `a` among those at distance at least `tau` from the convex
/// hull of `s_1, …, s_n`, then certifies `‖Q∘f − φ‖ < ε` for
/// `Q = (s_1, …, s_{n+1})`.
pub fn poulsen_extension_step(stage: &FunctionSystem, f: &LinearMap, phi: &LinearMap, eps: f64, tau: f64) -> Result<PoulsenStep> {
    let engine = default_engine();
    let n = f.dom().dim();
    if f.cod() != &stage.base || phi.dom() != f.dom() || phi.cod().dim() != n + 1 {
        return Err(Error::Shape("expected f: l-inf^n -> stage and phi: l-inf^n -> l-inf^(n+1)".into()));
    }
    let top = Matrix::identity(n);
    for i in 0..n {
        if phi.matrix().row(i) != top.row(i) {
            return Err(Error::Precondition("phi must fix the first n coordinates".into()));
        }
    }
    let a = phi.matrix().row(n).to_vec();
    let fx = stage.base.norming();
    let pulled = fx.mul(f.matrix());
    let mut rows = Vec::with_capacity(n + 1);
    for i in 0..n {
        // First row attaining the value, else the best available.
        let mut best = 0;
        for r in 0..fx.rows() {
            if pulled[(r, i)] >= 1.0 - 1e-9 {
                best = r;
                break;
            }
            if pulled[(r, i)] > pulled[(best, i)] {
                best = r;
            }
        }
        rows.push(best);
    }
    let chosen = fx.select_rows(&rows);
    let hull = chosen.transpose();
    let mut pick: Option<(usize, f64, f64)> = None;
    for r in 0..fx.rows() {
        if rows.contains(&r) {
            continue;
        }
        let sep = state_distance(engine, &stage.base, fx.row(r), &hull)?;
        if sep < tau {
            continue;
        }
        let diff: Vec<f64> = pulled.row(r).iter().zip(&a).map(|(x, y)| x - y).collect();
        let cost = f.dom().dual_norm_with(engine, &diff)?;
        if pick.map_or(true, |(_, c, _)| cost < c - 1e-12) {
            pick = Some((r, cost, sep));
        }
    }
    let (last, separation) = match pick {
        Some((r, _, sep)) => (r, sep),
        None => {
            return Err(Error::Resource(format!("no norming state of the stage is separated by {tau}")));
        }
    };
    rows.push(last);
    let q = LinearMap::new(stage.base.clone(), NormedSpace::linf(n + 1), fx.select_rows(&rows))?;
    let left = q.compose(f)?;
    let measured = op_norm_with(engine, &left.sub(phi)?)?;
    let certificate = Certificate::new(
        "dense extension step d(Q.f, phi) < eps",
        eps,
        measured,
        Witness::MapDistance { left, right: phi.clone() },
    );
    Ok(PoulsenStep { q, rows, separation, certificate })
}

/// `min_μ ‖g − Σ μ_i c_i‖` over convex weights, with `c_i` the columns of
/// `cols`, in the dual norm of `space`.
fn state_distance(engine: LpEngine, space: &NormedSpace, g: &[f64], cols: &Matrix) -> Result<f64> {
    let k = cols.cols();
    let nr = space.num_rows();
    let total = k + 2 * nr + 1;
    let mut lp = Lp::new(total);
    for v in 0..total {
        lp.set_nonneg(v);
    }
    let mut sum = vec![0.0; total];
    sum[..k].iter_mut().for_each(|v| *v = 1.0);
    lp.add(sum, Rel::Eq, 1.0);
    for d in 0..space.dim() {
        let mut c = vec![0.0; total];
        for i in 0..k {
            c[i] = cols[(d, i)];
        }
        for s in 0..nr {
            c[k + s] = space.norming()[(s, d)];
            c[k + nr + s] = -space.norming()[(s, d)];
        }
        lp.add(c, Rel::Eq, g[d]);
    }
    let mut c = vec![0.0; total];
    c[k..total - 1].iter_mut().for_each(|v| *v = 1.0);
    c[total - 1] = -1.0;
    lp.add(c, Rel::Le, 0.0);
    let mut obj = vec![0.0; total];
    obj[total - 1] = 1.0;
    lp.minimize(obj);
    Ok(lp.solve_with(engine)?.value.max(0.0))
}

/// Result of [`minimality_map`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityMap {
    /// `φ: ℓ∞^d → ℓ∞^m`.
    pub phi: LinearMap,
    #[serde(with = "crate::real")]
    pub eta: f64,
    /// Coordinates of `ℓ∞^m` carrying `x_1, …, x_d`.
    pub slots: Vec<usize>,
    /// `‖t∘φ − s‖`.
    #[serde(with = "crate::real")]
    pub defect: f64,
    pub certificate: Certificate,
}

/// Least `m` accepted by [`minimality_map`]: `⌈1/η⌉ + d` with
/// `η = ε/(2d)`.
pub fn minimality_threshold(d: usize, eps: f64) -> usize {
    let eta = eps / (2.0 * d as f64);
    libm::ceil(1.0 / eta - 1e-12) as usize + d
}

/// `φ(x) = (s(x), …, s(x), x_1, …, x_d)` with the `x` block on the `d`
/// lightest coordinates of `t`, so that `‖t∘φ − s‖ ≤ 2dη = ε`.
pub fn minimality_map(d: usize, eps: f64, s: &StateVector, t: &StateVector) -> Result<MinimalityMap> {
    minimality_map_with(default_engine(), d, eps, s, t)
}

pub fn minimality_map_with(engine: LpEngine, d: usize, eps: f64, s: &StateVector, t: &StateVector) -> Result<MinimalityMap> {
    if d == 0 || !(eps > 0.0) {
        return Err(Error::Precondition("d >= 1 and eps > 0".into()));
    }
    check_stochastic(&s.coefficients)?;
    check_stochastic(&t.coefficients)?;
    let m = t.coefficients.len();
    if s.coefficients.len() != d {
        return Err(Error::Shape(format!("s must have {d} weights")));
    }
    let need = minimality_threshold(d, eps);
    if m < need {
        return Err(Error::Precondition(format!("m = {m} is below the required m = {need}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| t.coefficients[a].total_cmp(&t.coefficients[b]).then(a.cmp(&b)));
    let mut slots: Vec<usize> = order[..d].to_vec();
    slots.sort_unstable();
    let mut phi = Matrix::zeros(m, d);
    for r in 0..m {
        match slots.iter().position(|&c| c == r) {
            Some(i) => phi[(r, i)] = 1.0,
            None => phi.row_mut(r).copy_from_slice(&s.coefficients),
        }
    }
    let phi = LinearMap::new(NormedSpace::linf(d), NormedSpace::linf(m), phi)?;
    // (t∘φ − s)_i = t_{slot i} + s_i (1 − Σ_slots t) − s_i, written without
    // the cancellation against the unslotted mass.
    let slot_mass: f64 = slots.iter().map(|&c| t.coefficients[c]).sum();
    let diff: Vec<f64> = slots.iter().zip(&s.coefficients).map(|(&c, &si)| t.coefficients[c] - si * slot_mass).collect();
    let space = NormedSpace::linf(d);
    let defect = lp_dual_norm(engine, &space, &diff)?;
    let certificate = Certificate::new(
        "minimality defect ||t.phi - s|| <= 2 d eta",
        eps,
        defect,
        Witness::DualNorm { space, functional: diff },
    );
    Ok(MinimalityMap { phi, eta: eps / (2.0 * d as f64), slots, defect, certificate })
}

/// Dual norm by LP even for `ℓ∞` spaces.
fn lp_dual_norm(engine: LpEngine, space: &NormedSpace, g: &[f64]) -> Result<f64> {
    let mut lp = Lp::new(space.dim());
    lp.maximize(g.to_vec());
    for i in 0..space.num_rows() {
        lp.add_abs_le(space.norming().row(i).to_vec(), 1.0);
    }
    Ok(lp.solve_with(engine)?.value.max(0.0))
}

/// Least `ε` for which some `v` has `0 ≤ f_i(v) ≤ 1`, `‖P v‖ ≤ ε` and
/// `f_i(v) ≥ f_i(u) − ε` for every norming row `f_i` of the domain.
pub fn facial_min_eps_with(engine: LpEngine, p: &LinearMap, u: &[f64]) -> Result<f64> {
    let x = p.dom();
    if u.len() != x.dim() {
        return Err(Error::Shape("sample length".into()));
    }
    let n = x.dim();
    let e = n;
    let mut lp = Lp::new(n + 1);
    lp.set_nonneg(e);
    for i in 0..x.num_rows() {
        let f = x.norming().row(i);
        let mut c = f.to_vec();
        c.push(0.0);
        lp.add(c.clone(), Rel::Ge, 0.0);
        lp.add(c.clone(), Rel::Le, 1.0);
        c[e] = 1.0;
        lp.add(c, Rel::Ge, dot(f, u));
    }
    let pulled = p.pulled_rows();
    for j in 0..pulled.rows() {
        let mut c = pulled.row(j).to_vec();
        c.push(-1.0);
        lp.add(c.clone(), Rel::Le, 0.0);
        for v in c.iter_mut().take(n) {
            *v = -*v;
        }
        lp.add(c, Rel::Le, 0.0);
    }
    let mut obj = vec![0.0; n + 1];
    obj[e] = 1.0;
    lp.minimize(obj);
    Ok(lp.solve_with(engine)?.value.max(0.0))
}

/// Least `ε` for which some `v` has `‖P v‖ ≤ ε` and `‖v − y ± u‖ ≤ 1 + ε`.
pub fn biface_min_eps_with(engine: LpEngine, p: &LinearMap, y: &[f64], u: &[f64]) -> Result<f64> {
    let x = p.dom();
    if u.len() != x.dim() || y.len() != x.dim() {
        return Err(Error::Shape("sample length".into()));
    }
    let n = x.dim();
    let mut lp = Lp::new(n + 1);
    lp.set_nonneg(n);
    for sign in [1.0, -1.0] {
        let shift: Vec<f64> = y.iter().zip(u).map(|(a, b)| a - sign * b).collect();
        for i in 0..x.num_rows() {
            // |f(v) − f(shift)| ≤ 1 + e.
            let f = x.norming().row(i);
            let fs = dot(f, &shift);
            let mut c = f.to_vec();
            c.push(-1.0);
            lp.add(c.clone(), Rel::Le, 1.0 + fs);
            for v in c.iter_mut().take(n) {
                *v = -*v;
            }
            lp.add(c, Rel::Le, 1.0 - fs);
        }
    }
    let pulled = p.pulled_rows();
    for j in 0..pulled.rows() {
        let mut c = pulled.row(j).to_vec();
        c.push(-1.0);
        lp.add(c.clone(), Rel::Le, 0.0);
        for v in c.iter_mut().take(n) {
            *v = -*v;
        }
        lp.add(c, Rel::Le, 0.0);
    }
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    lp.minimize(obj);
    Ok(lp.solve_with(engine)?.value.max(0.0))
}

fn check_kernel_sample(p: &LinearMap, u: &[f64]) -> Result<()> {
    let pu = p.cod().norm(&p.apply(u));
    let nu = p.dom().norm(u);
    if pu > 1e-9 || (nu - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("sample is not a unit kernel vector (|u| = {nu}, |Pu| = {pu})")));
    }
    Ok(())
}

/// Face condition for a unital quotient `P` over kernel samples.
pub fn facial_quotient_check(p: &LinearMap, samples: &[Vec<f64>], eps: f64) -> Result<Certificate> {
    let engine = default_engine();
    let ones = vec![1.0; p.dom().dim()];
    let unital = p.dom().is_linf() && p.apply(&ones).iter().all(|v| (v - 1.0).abs() <= UNIT_TOL);
    if !unital || op_norm_with(engine, p)? > 1.0 + 1e-9 {
        return Err(Error::Precondition("P must be a unital contraction between l-infinity spaces".into()));
    }
    let mut worst: f64 = 0.0;
    for u in samples {
        check_kernel_sample(p, u)?;
        worst = worst.max(facial_min_eps_with(engine, p, u)?);
    }
    Ok(Certificate::new(
        "facial quotient: v with 0 <= v <= 1, |Pv| <= eps, v >= u - eps",
        eps,
        worst,
        Witness::Facial { map: p.clone(), samples: samples.to_vec() },
    ))
}

/// Biface condition for a quotient contraction `P` over `(y, u)` samples.
pub fn biface_check(p: &LinearMap, ys: &[Vec<f64>], us: &[Vec<f64>], eps: f64) -> Result<Certificate> {
    let engine = default_engine();
    if ys.len() != us.len() {
        return Err(Error::Shape("one y per kernel sample".into()));
    }
    if op_norm_with(engine, p)? > 1.0 + 1e-9 {
        return Err(Error::Precondition("P must be a contraction".into()));
    }
    let mut worst: f64 = 0.0;
    for (y, u) in ys.iter().zip(us) {
        check_kernel_sample(p, u)?;
        if (p.dom().norm(y) - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition("y must have norm one".into()));
        }
        worst = worst.max(biface_min_eps_with(engine, p, y, u)?);
    }
    Ok(Certificate::new(
        "biface: v with |Pv| <= eps and |v - y +- u| <= 1 + eps",
        eps,
        worst,
        Witness::Biface { map: p.clone(), ys: ys.to_vec(), us: us.to_vec() },
    ))
}

/// Random unit vectors in the null space of `P`.
pub fn kernel_samples<R: Rng>(rng: &mut R, p: &LinearMap, count: usize) -> Vec<Vec<f64>> {
    let basis = p.matrix().null_space(1e-10);
    if basis.cols() == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w: Vec<f64> = (0..basis.cols()).map(|_| gaussian(rng)).collect();
        let u = basis.mul_vec(&w);
        let n = p.dom().norm(&u);
        if n > 1e-9 {
            out.push(u.iter().map(|v| v / n).collect());
        }
    }
    out
}

/// Random unit vectors of a space.
pub fn unit_samples<R: Rng>(rng: &mut R, x: &NormedSpace, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| crate::sample::random_unit_vector(rng, x)).collect()
}

/// Searches `y` over a grid on the unit sphere of a plane for the largest
/// least biface `ε`, one LP per candidate.
pub fn biface_counterexample_search(p: &LinearMap, u: &[f64], grid: usize) -> Result<(Vec<f64>, f64)> {
    let engine = default_engine();
    let x = p.dom();
    if x.dim() != 2 {
        return Err(Error::Shape("the sphere search runs on planes".into()));
    }
    let mut best = (vec![0.0; 2], f64::NEG_INFINITY);
    for k in 0..grid {
        let th = 2.0 * core::f64::consts::PI * k as f64 / grid as f64;
        let dir = [libm::cos(th), libm::sin(th)];
        let n = x.norm(&dir);
        let y: Vec<f64> = dir.iter().map(|v| v / n).collect();
        let e = biface_min_eps_with(engine, p, &y, u)?;
        if e > best.1 + 1e-12 {
            best = (y, e);
        }
    }
    Ok(best)
}

/// The rank-one average `x ↦ (x_1 + x_2)/2` on `ℓ∞^2`, a contraction that
/// is not a quotient with M-ideal kernel.
pub fn averaging_map() -> LinearMap {
    LinearMap::new(
        NormedSpace::linf(2),
        NormedSpace::linf(1),
        Matrix::from_row_major(1, 2, vec![0.5, 0.5]).expect("shape"),
    )
    .expect("shape")
}

/// Projection of `ℓ∞^n` onto the first `k` coordinates.
pub fn coordinate_projection(n: usize, k: usize) -> LinearMap {
    let m = Matrix::identity(n).select_rows(&(0..k).collect::<Vec<_>>());
    LinearMap::new(NormedSpace::linf(n), NormedSpace::linf(k), m).expect("shape")
}

/// `‖f − g‖` and whether `g` is an isometry, for reporting perturbations.
pub fn perturbation_report(f: &LinearMap, g: &LinearMap) -> Result<(f64, f64)> {
    let engine = default_engine();
    Ok((op_norm_with(engine, &f.sub(g)?)?, distortion_with(engine, g)?))
}

/// Largest entry of `|P·unit − unit|`.
pub fn unit_defect(t: &LinearMap, dom: &FunctionSystem) -> f64 {
    let image = t.apply(&dom.unit);
    sup_norm(&image.iter().map(|v| v - 1.0).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{rng, uniform};

    #[test]
    fn closed_form_minimality() {
        let s = StateVector::new(vec![0.5, 0.5]).unwrap();
        let out = minimality_map(2, 1.0, &s, &StateVector::uniform(6)).unwrap();
        assert_eq!(out.defect, 0.0);
        assert_eq!(minimality_threshold(2, 0.5), 10);
        let err = minimality_map(2, 0.5, &s, &StateVector::uniform(9)).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("m = 10")));
    }

    #[test]
    fn one_dimensional_minimality_is_exact() {
        let out = minimality_map(1, 0.3, &StateVector::new(vec![1.0]).unwrap(), &StateVector::uniform(8)).unwrap();
        assert!(out.defect <= 1e-15);
    }

    #[test]
    fn perturbation_projects_rows_to_states() {
        let x = FunctionSystem::linf(2);
        let m = Matrix::from_rows(&[vec![1.1, -0.1], vec![0.3, 0.7]], 2).unwrap();
        let f = LinearMap::new(x.base.clone(), NormedSpace::linf(2), m).unwrap();
        let g = perturb_to_unital_positive(&f, &x).unwrap();
        assert!(is_unital_positive(&g, &x).unwrap());
        assert_eq!(g.matrix().row(1), f.matrix().row(1));
        let (dist, _) = perturbation_report(&f, &g).unwrap();
        assert!(dist <= 0.2 + 1e-9);
    }

    #[test]
    fn non_unital_maps_are_rejected() {
        let x = FunctionSystem::linf(2);
        let f = LinearMap::new(x.base.clone(), NormedSpace::linf(1), Matrix::from_rows(&[vec![0.5, 0.0]], 2).unwrap()).unwrap();
        assert!(perturb_to_unital_positive(&f, &x).is_err());
    }

    #[test]
    fn explicit_face_and_biface_witnesses() {
        let p = coordinate_projection(2, 1);
        assert!(facial_min_eps_with(LpEngine::Float, &p, &[0.0, 1.0]).unwrap() <= 1e-12);
        let mut r = rng(5);
        for _ in 0..5 {
            let y2 = uniform(&mut r, -1.0, 1.0);
            let y = [if y2.abs() < 1.0 { 1.0 } else { 0.3 }, y2];
            assert!(biface_min_eps_with(LpEngine::Float, &p, &y, &[0.0, 1.0]).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn averaging_is_not_a_biface_quotient() {
        let (y, e) = biface_counterexample_search(&averaging_map(), &[1.0, -1.0], 64).unwrap();
        assert!((e - 0.5).abs() < 1e-9, "{y:?} {e}");
    }

    #[test]
    fn unital_amalgam_of_identities() {
        let e = FunctionSystem::linf(2);
        let id = LinearMap::identity(&e.base);
        let a = unital_amalgamate(&e, &id, &id).unwrap();
        assert!(a.defect <= 1e-12);
        assert!(is_unital_positive(&a.i, &e).unwrap());
    }

    #[test]
    fn extension_step_with_zero_weight() {
        let g = FunctionSystem::linf(3);
        let f = LinearMap::new(
            NormedSpace::linf(2),
            g.base.clone(),
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]], 2).unwrap(),
        )
        .unwrap();
        let phi = LinearMap::new(
            NormedSpace::linf(2),
            NormedSpace::linf(3),
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]], 2).unwrap(),
        )
        .unwrap();
        let step = poulsen_extension_step(&g, &f, &phi, 0.1, 0.1).unwrap();
        assert_eq!(step.rows, vec![0, 1, 2]);
        assert!(step.certificate.pass);
    }

    #[test]
    fn grid_state_counts() {
        assert_eq!(grid_states(2, 8).len(), 9);
        assert_eq!(grid_states(3, 2).len(), 6);
        assert_eq!(unital_state_net(2, 2, 0.25, 50_000).unwrap().unwrap().len(), 81);
    }
}
