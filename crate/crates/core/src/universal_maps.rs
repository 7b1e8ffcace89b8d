//! Finite stages of the universal operator and of universal states:
//! arrow chains built from pruned arrow pushouts, state chains, the
//! extension batteries, surjectivity defects and approximate kernels.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::amalgamation::{ArrowMap, WitnessPair};
use crate::certificate::{Certificate, ContentHasher, Witness, CERT_TOL};
use crate::error::{Error, Result};
use crate::limit_builder::{Class, StageChain};
use crate::linalg::{dot, l1_norm, Matrix};
use crate::lp::{default_engine, Lp, LpEngine, Rel};
use crate::normed_core::{
    distortion_with, extend_functional_with, op_norm_with, LinearMap, Modulus, NormedSpace, CONTRACTION_TOL,
};
use crate::sample::{random_unit_vector, rng, uniform, SeededRng};

/// A test arrow `L: E0 → E1` inside `L̂: F0 → F1`, with `φ: L → L̂` and
/// `f: L → T_stage`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowItem {
    pub stage: usize,
    pub l: LinearMap,
    pub l_hat: LinearMap,
    pub phi: ArrowMap,
    pub f: ArrowMap,
}

impl ArrowItem {
    /// Larger of the two commutation defects.
    pub fn commutation(&self, t: &LinearMap) -> Result<f64> {
        let c_phi = self.phi.commutation_defect(&self.l, &self.l_hat)?;
        let c_f = self.f.commutation_defect(&self.l, t)?;
        Ok(c_phi.max(c_f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowObligation {
    pub id: usize,
    pub item: ArrowItem,
    /// Step whose pushout discharged it.
    pub discharged_at: Option<usize>,
    /// Largest `‖g∘φ_k − h∘f_k‖` over the witness pairs.
    #[serde(with = "crate::real")]
    pub defect: f64,
    /// `ϖ(δ) + 2δ`.
    #[serde(with = "crate::real")]
    pub bound: f64,
}

/// Stages `T_k: A_k → B_k` with `T_{k+1}∘J_k = J'_k∘T_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowChain {
    pub dom_chain: StageChain,
    pub cod_chain: StageChain,
    pub intertwiners: Vec<LinearMap>,
    /// `‖J'_k∘T_k − T_{k+1}∘J_k‖`.
    #[serde(with = "crate::real::vec")]
    pub square_defects: Vec<f64>,
    pub ledger: Vec<ArrowObligation>,
    #[serde(with = "crate::real")]
    pub delta: f64,
}

impl ArrowChain {
    pub fn depth(&self) -> usize {
        self.intertwiners.len()
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.tag("arrow_chain");
        h.tag(&self.dom_chain.content_hash());
        h.tag(&self.cod_chain.content_hash());
        for t in &self.intertwiners {
            h.map(t);
        }
        h.usize(self.ledger.len());
        for o in &self.ledger {
            h.map(&o.item.l_hat);
            h.map(&o.item.phi.p0);
            h.map(&o.item.phi.p1);
            h.map(&o.item.f.p0);
            h.map(&o.item.f.p1);
            h.usize(o.item.stage);
            h.real(o.defect);
        }
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorChainConfig {
    pub depth: usize,
    pub dom_cap: usize,
    pub cod_cap: usize,
    pub seed: u64,
    /// Nominal tolerance of the scheduled arrows; the bound is `ϖ(δ) + 2δ`.
    #[serde(with = "crate::real")]
    pub delta: f64,
    /// Pitch of the scheduled heights `a` in `φ(1) = (1, a)`.
    #[serde(with = "crate::real")]
    pub resolution: f64,
    /// Random arrows scheduled per step after the height net.
    pub extra_per_step: usize,
    /// The first stage `T_0`.
    pub initial: LinearMap,
}

impl OperatorChainConfig {
    pub fn new(depth: usize, dom_cap: usize, cod_cap: usize, seed: u64) -> Self {
        let l1 = NormedSpace::linf(1);
        OperatorChainConfig {
            depth,
            dom_cap,
            cod_cap,
            seed,
            delta: 0.05,
            resolution: 0.25,
            extra_per_step: 1,
            initial: LinearMap::identity(&l1).scale(0.5),
        }
    }
}

/// Builds an arrow chain with the default configuration.
pub fn build_universal_operator_chain(depth: usize, caps: (usize, usize), seed: u64) -> Result<ArrowChain> {
    build_operator_chain(&OperatorChainConfig::new(depth, caps.0, caps.1, seed))
}

/// Each step pushes the current stage out along scheduled test arrows.
/// The heights `0, r, 2r, …, 1` are spread over the steps, each as an
/// arrow out of the image of the first stage; then `extra_per_step`
/// random arrows out of random coordinates. Arrows that would exceed the
/// caps stay undischarged.
pub fn build_operator_chain(cfg: &OperatorChainConfig) -> Result<ArrowChain> {
    let engine = default_engine();
    if cfg.depth == 0 || !(cfg.resolution > 0.0) || !(cfg.delta >= 0.0) {
        return Err(Error::Precondition("depth >= 1 and a positive resolution".into()));
    }
    if !cfg.initial.dom().is_linf() || !cfg.initial.cod().is_linf() || op_norm_with(engine, &cfg.initial)? > 1.0 + CONTRACTION_TOL {
        return Err(Error::Precondition("the first stage must be a contraction between l-infinity spaces".into()));
    }
    let mut r = rng(cfg.seed);
    let bound = Modulus::Banach.eval(cfg.delta) + 2.0 * cfg.delta;
    let steps = cfg.depth - 1;
    let count = libm::round(1.0 / cfg.resolution) as usize + 1;
    let heights: Vec<f64> = (0..count).map(|k| (k as f64 * cfg.resolution).min(1.0)).collect();
    let mut t = cfg.initial.clone();
    let mut dom = StageChain::single(Class::Banach, t.dom().dim());
    let mut cod = StageChain::single(Class::Banach, t.cod().dim());
    let mut intertwiners = vec![t.clone()];
    let mut square_defects = Vec::new();
    let mut ledger: Vec<ArrowObligation> = Vec::new();
    // Images of the first-stage generators.
    let mut gen0 = Matrix::identity(t.dom().dim());
    for step in 0..steps {
        let mut items = Vec::new();
        let share = heights.len().div_ceil(steps.max(1));
        for &a in heights.iter().skip(step * share).take(share) {
            let col = gen0.column(0);
            items.push(arrow_item(&mut r, &t, &col, a, a, cfg.resolution, step)?);
        }
        for _ in 0..cfg.extra_per_step {
            let i = r.gen_range(0..t.dom().dim());
            let mut e = vec![0.0; t.dom().dim()];
            e[i] = 1.0;
            let a0 = grid(&mut r, cfg.resolution);
            let a1 = grid(&mut r, cfg.resolution);
            items.push(arrow_item(&mut r, &t, &e, a0, a1, cfg.resolution, step)?);
        }
        let mut j0 = Matrix::identity(t.dom().dim());
        let mut j1 = Matrix::identity(t.cod().dim());
        let t_start = t.clone();
        for item in items {
            let id = ledger.len();
            // Items were drawn at the start of the step; push them along.
            let moved = ArrowItem {
                f: ArrowMap {
                    p0: LinearMap::new(item.l.dom().clone(), t.dom().clone(), j0.mul(item.f.p0.matrix()))?,
                    p1: LinearMap::new(item.l.cod().clone(), t.cod().clone(), j1.mul(item.f.p1.matrix()))?,
                },
                ..item.clone()
            };
            let push = arrow_push(engine, &t, &moved)?;
            let fits = push.dom_rows.rows() <= cfg.dom_cap && push.cod_rows.rows() <= cfg.cod_cap;
            ledger.push(ArrowObligation {
                id,
                item,
                discharged_at: fits.then_some(step),
                defect: if fits { push.defect } else { f64::INFINITY },
                bound,
            });
            if fits {
                j0 = push.dom_rows.mul(&j0);
                j1 = push.cod_rows.mul(&j1);
                t = push.t_next;
            }
        }
        let jd = LinearMap::new(t_start.dom().clone(), t.dom().clone(), j0)?;
        let jc = LinearMap::new(t_start.cod().clone(), t.cod().clone(), j1)?;
        square_defects.push(op_norm_with(engine, &jc.compose(&t_start)?.sub(&t.compose(&jd)?)?)?);
        gen0 = jd.matrix().mul(&gen0);
        dom.dims.push(t.dom().dim());
        dom.connectives.push(jd);
        cod.dims.push(t.cod().dim());
        cod.connectives.push(jc);
        intertwiners.push(t.clone());
    }
    for c in [&mut dom, &mut cod] {
        c.seed = cfg.seed;
        c.delta = cfg.delta;
        c.net_resolution = cfg.resolution;
    }
    Ok(ArrowChain { dom_chain: dom, cod_chain: cod, intertwiners, square_defects, ledger, delta: cfg.delta })
}

fn grid(r: &mut SeededRng, pitch: f64) -> f64 {
    let k = libm::round(1.0 / pitch) as i64;
    r.gen_range(-k..=k) as f64 * pitch
}

/// A test arrow at the stage `t` out of the unit vector `x` of its
/// domain: `L = ‖t x‖`, `φ_k(1) = (1, a_k)` and
/// `L̂ = [[c, 0], [p, q]]` with `p + q a0 = c a1`, so both squares commute
/// exactly.
pub fn arrow_item<R: Rng>(rng: &mut R, t: &LinearMap, x: &[f64], a0: f64, a1: f64, pitch: f64, stage: usize) -> Result<ArrowItem> {
    let e = NormedSpace::linf(1);
    let f2 = NormedSpace::linf(2);
    let v = t.apply(x);
    let c = t.cod().norm(&v);
    let f1col = if c > 1e-12 {
        v.iter().map(|y| y / c).collect()
    } else {
        let mut u = vec![0.0; t.cod().dim()];
        u[0] = 1.0;
        u
    };
    let k = libm::round(1.0 / pitch) as i64;
    let mut q = rng.gen_range(-k..=k) as f64 * pitch;
    let mut p = c * a1 - q * a0;
    if p.abs() + q.abs() > 1.0 {
        q = 0.0;
        p = c * a1;
    }
    let col = |v: Vec<f64>| Matrix::from_columns(&[v.clone()], v.len());
    let l = LinearMap::new(e.clone(), e.clone(), Matrix::from_row_major(1, 1, vec![c])?)?;
    let l_hat = LinearMap::new(f2.clone(), f2.clone(), Matrix::from_rows(&[vec![c, 0.0], vec![p, q]], 2)?)?;
    let phi = ArrowMap {
        p0: LinearMap::new(e.clone(), f2.clone(), col(vec![1.0, a0])?)?,
        p1: LinearMap::new(e.clone(), f2.clone(), col(vec![1.0, a1])?)?,
    };
    let f = ArrowMap {
        p0: LinearMap::new(e.clone(), t.dom().clone(), col(x.to_vec())?)?,
        p1: LinearMap::new(e, t.cod().clone(), col(f1col)?)?,
    };
    Ok(ArrowItem { stage, l, l_hat, phi, f })
}

struct ArrowPush {
    /// Rows are the `h` parts of the domain family: `J_0`.
    dom_rows: Matrix,
    cod_rows: Matrix,
    t_next: LinearMap,
    defect: f64,
}

/// Pushout of the stage `t` along one test arrow. The codomain family
/// holds a pair per coordinate of `B` and per norming row of `F1`. The
/// domain family holds `(g∘L̂, h∘T)` for each codomain pair, a pair per
/// norming row of `F0`, and a pair for each coordinate of `A` not already
/// of the form `h∘T`. The next stage is the coordinate selection picking
/// `(g∘L̂, h∘T)` for each codomain pair, so both squares commute exactly.
fn arrow_push(engine: LpEngine, t: &LinearMap, item: &ArrowItem) -> Result<ArrowPush> {
    let (phi, f) = (&item.phi, &item.f);
    let mut cod_family: Vec<WitnessPair> = Vec::new();
    for k in 0..t.cod().dim() {
        let target = f.p1.matrix().row(k).to_vec();
        let g = contractive_extension(engine, &phi.p1, &target)?;
        push_unique(&mut cod_family, WitnessPair { g, h: unit(t.cod().dim(), k) });
    }
    for u in distinct_linf_rows(phi.p1.cod().dim()) {
        let target = phi.p1.matrix().left_mul_vec(&u);
        let h = contractive_extension(engine, &f.p1, &target)?;
        push_unique(&mut cod_family, WitnessPair { g: u, h });
    }
    let mut dom_family: Vec<WitnessPair> = Vec::new();
    let mut selection = Vec::with_capacity(cod_family.len());
    for p in &cod_family {
        let q = WitnessPair { g: item.l_hat.matrix().left_mul_vec(&p.g), h: t.matrix().left_mul_vec(&p.h) };
        selection.push(push_unique(&mut dom_family, q));
    }
    for u in distinct_linf_rows(phi.p0.cod().dim()) {
        let target = phi.p0.matrix().left_mul_vec(&u);
        let h = contractive_extension(engine, &f.p0, &target)?;
        push_unique(&mut dom_family, WitnessPair { g: u, h });
    }
    for r in 0..t.dom().dim() {
        let e = unit(t.dom().dim(), r);
        if dom_family.iter().any(|p| close(&p.h, &e)) {
            continue;
        }
        let target = f.p0.matrix().row(r).to_vec();
        let g = contractive_extension(engine, &phi.p0, &target)?;
        dom_family.push(WitnessPair { g, h: e });
    }
    let pair_defect = |p: &WitnessPair, ph: &LinearMap, fm: &LinearMap| -> Result<f64> {
        let a = ph.matrix().left_mul_vec(&p.g);
        let b = fm.matrix().left_mul_vec(&p.h);
        ph.dom().dual_norm_with(engine, &a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
    };
    let mut defect: f64 = 0.0;
    for p in &cod_family {
        defect = defect.max(pair_defect(p, &phi.p1, &f.p1)?);
    }
    for p in &dom_family {
        defect = defect.max(pair_defect(p, &phi.p0, &f.p0)?);
    }
    let rows_of = |fam: &[WitnessPair], n: usize| Matrix::from_rows(&fam.iter().map(|p| p.h.clone()).collect::<Vec<_>>(), n);
    let dom_rows = rows_of(&dom_family, t.dom().dim())?;
    let cod_rows = rows_of(&cod_family, t.cod().dim())?;
    let mut sel = Matrix::zeros(cod_family.len(), dom_family.len());
    for (k, &s) in selection.iter().enumerate() {
        sel[(k, s)] = 1.0;
    }
    let t_next = LinearMap::new(NormedSpace::linf(dom_family.len()), NormedSpace::linf(cod_family.len()), sel)?;
    Ok(ArrowPush { dom_rows, cod_rows, t_next, defect })
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12)
}

/// Index of `p` in `family`, appending it if new.
fn push_unique(family: &mut Vec<WitnessPair>, p: WitnessPair) -> usize {
    match family.iter().position(|q| close(&q.g, &p.g) && close(&q.h, &p.h)) {
        Some(k) => k,
        None => {
            family.push(p);
            family.len() - 1
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn distinct_linf_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| unit(n, i)).collect()
}

/// Least-norm extension of `target` along `j`, scaled into the unit ball.
fn contractive_extension(engine: LpEngine, j: &LinearMap, target: &[f64]) -> Result<Vec<f64>> {
    let ext = extend_functional_with(engine, j, target)?;
    let s = ext.coefficient_sum.max(1.0);
    Ok(ext.functional.iter().map(|v| v / s).collect())
}

/// Result of a battery search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryCheck {
    pub stage: usize,
    pub g0: LinearMap,
    pub g1: LinearMap,
    #[serde(with = "crate::real")]
    pub defect: f64,
    pub certificate: Certificate,
}

/// Searches stages `m ≥ p` for isometries `ĝ0: F0 → A_m`, `ĝ1: F1 → B_m`
/// with `ĝ_k∘φ_k ≈ J∘f_k` and `T_m∘ĝ0 ≈ ĝ1∘L̂`. The norming rows of `F0`
/// and `F1` are placed (up to sign) on a few cheapest coordinates, the
/// remaining rows solved by LP; the defect is the largest of the three
/// distances.
pub fn check_universal_operator_property(chain: &ArrowChain, item: &ArrowItem, eps: f64) -> Result<BatteryCheck> {
    let engine = default_engine();
    let p = item.stage;
    if p >= chain.intertwiners.len() {
        return Err(Error::Precondition(format!("item refers to stage {p} beyond the chain")));
    }
    let mut best: Option<BatteryCheck> = None;
    for m in p..chain.intertwiners.len() {
        let t = &chain.intertwiners[m];
        let jf0 = chain.dom_chain.embedding(p, m)?.compose(&item.f.p0)?;
        let jf1 = chain.cod_chain.embedding(p, m)?.compose(&item.f.p1)?;
        let sol = search_pair(engine, t, item, &jf0, &jf1)?;
        if let Some((g0, g1, _)) = sol {
            let parts = vec![
                Witness::MapDistance { left: t.compose(&g0)?, right: g1.compose(&item.l_hat)? },
                Witness::MapDistance { left: g0.compose(&item.phi.p0)?, right: jf0.clone() },
                Witness::MapDistance { left: g1.compose(&item.phi.p1)?, right: jf1.clone() },
                Witness::Distortion { map: g0.clone() },
                Witness::Distortion { map: g1.clone() },
            ];
            let witness = Witness::Chained { chain_hash: chain.content_hash(), inner: Box::new(Witness::Max { parts }) };
            let defect = witness.recompute(engine)?;
            let certificate = Certificate::new("operator battery: |T g0 - g1 L^| and extension defects < eps", eps, defect, witness);
            let done = certificate.pass;
            if done || best.as_ref().map_or(true, |b| defect < b.defect - 1e-12) {
                best = Some(BatteryCheck { stage: m, g0, g1, defect, certificate });
            }
            if done {
                break;
            }
        }
    }
    best.ok_or_else(|| Error::Resource("no stage admits isometric placements of the test rows".into()))
}

/// Candidate coordinates for each norming row `u` of `F` (an `ℓ∞` space):
/// the `k` coordinates `i` with the least `‖±u∘φ − (J f)_i‖`, with signs.
fn candidates(engine: LpEngine, phi: &LinearMap, jf: &Matrix, k: usize) -> Result<Vec<Vec<(usize, f64, f64)>>> {
    let mut out = Vec::new();
    for u in distinct_linf_rows(phi.cod().dim()) {
        let up = phi.matrix().left_mul_vec(&u);
        let mut list = Vec::with_capacity(jf.rows());
        for i in 0..jf.rows() {
            for s in [1.0, -1.0] {
                let d: Vec<f64> = up.iter().zip(jf.row(i)).map(|(a, b)| s * a - b).collect();
                list.push((i, s, phi.dom().dual_norm_with(engine, &d)?));
            }
        }
        list.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        list.truncate(k);
        out.push(list);
    }
    Ok(out)
}

/// Assignments of rows to distinct coordinates from the candidate lists
/// with their worst cost, cheapest first.
fn assignments(cands: &[Vec<(usize, f64, f64)>]) -> Vec<(f64, Vec<(usize, f64)>)> {
    let mut out: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    fn rec(c: &[Vec<(usize, f64, f64)>], cur: &mut Vec<(usize, f64)>, worst: f64, out: &mut Vec<(f64, Vec<(usize, f64)>)>) {
        if cur.len() == c.len() {
            out.push((worst, cur.clone()));
            return;
        }
        for &(i, s, cost) in &c[cur.len()] {
            if cur.iter().any(|(j, _)| *j == i) {
                continue;
            }
            cur.push((i, s));
            rec(c, cur, worst.max(cost), out);
            cur.pop();
        }
    }
    rec(cands, &mut Vec::new(), 0.0, &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

const SEARCH_WIDTH: usize = 6;
const SEARCH_TRIES: usize = 48;

type Pair = (LinearMap, LinearMap, f64);

fn search_pair(engine: LpEngine, t: &LinearMap, item: &ArrowItem, jf0: &LinearMap, jf1: &LinearMap) -> Result<Option<Pair>> {
    let c0 = candidates(engine, &item.phi.p0, jf0.matrix(), SEARCH_WIDTH)?;
    let c1 = candidates(engine, &item.phi.p1, jf1.matrix(), SEARCH_WIDTH)?;
    // Domain rows placed on coordinates that `T` reads are tied to the
    // codomain placement, so those combinations go last.
    let read = |i: usize| (0..t.cod().dim()).any(|k| t.matrix()[(k, i)] != 0.0);
    let a1 = assignments(&c1);
    let mut joint: Vec<(usize, f64, &[(usize, f64)], &[(usize, f64)])> = Vec::new();
    let a0 = assignments(&c0);
    for (w0, s0) in &a0 {
        let hits = s0.iter().filter(|(i, _)| read(*i)).count();
        for (w1, s1) in &a1 {
            joint.push((hits, w0.max(*w1), s0, s1));
        }
    }
    joint.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best: Option<Pair> = None;
    for (_, _, s0, s1) in joint.into_iter().take(SEARCH_TRIES) {
        let (g0, g1, v) = solve_placement(engine, t, item, jf0, jf1, s0, s1)?;
        if best.as_ref().map_or(true, |b| v < b.2) {
            best = Some((g0, g1, v));
        }
        if v <= 1e-9 {
            break;
        }
    }
    Ok(best)
}

/// Unknown `ℓ∞`-valued map with some rows fixed; free rows have 1-norm at
/// most one.
struct Unknown {
    rows: usize,
    cols: usize,
    fixed: Vec<Option<Vec<f64>>>,
    offset: usize,
}

/// `Σ c_v x_v + constant`.
#[derive(Clone)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn zero() -> Self {
        Affine { terms: Vec::new(), constant: 0.0 }
    }

    fn add_entry(&mut self, u: &Unknown, i: usize, j: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        match &u.fixed[i] {
            Some(row) => self.constant += c * row[j],
            None => self.terms.push((u.offset + i * u.cols + j, c)),
        }
    }
}

impl Unknown {
    fn new(rows: usize, cols: usize, fixed: Vec<Option<Vec<f64>>>, offset: usize) -> Self {
        Unknown { rows, cols, fixed, offset }
    }

    fn vars(&self) -> usize {
        self.rows * self.cols
    }

    fn value(&self, x: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = match &self.fixed[i] {
                    Some(r) => r[j],
                    None => x[self.offset + i * self.cols + j],
                };
            }
        }
        m
    }
}

/// Minimizes `t` subject to each group of affine forms having
/// `Σ |form| ≤ t` and the free rows of the unknowns being contractive.
fn solve_groups(engine: LpEngine, unknowns: &[&Unknown], groups: &[Vec<Affine>]) -> Result<(Vec<f64>, f64)> {
    let base: usize = unknowns.iter().map(|u| u.vars()).sum();
    let contr: usize = unknowns.iter().map(|u| u.fixed.iter().filter(|f| f.is_none()).count() * u.cols).sum();
    let aux: usize = groups.iter().map(|g| g.len()).sum();
    let tvar = base;
    let total = base + 1 + contr + aux;
    let mut lp = Lp::new(total);
    for v in base..total {
        lp.set_nonneg(v);
    }
    let mut next = base + 1;
    for u in unknowns {
        for i in 0..u.rows {
            if u.fixed[i].is_some() {
                // Unused variables of fixed rows are pinned to zero.
                for j in 0..u.cols {
                    let mut c = vec![0.0; total];
                    c[u.offset + i * u.cols + j] = 1.0;
                    lp.add(c, Rel::Eq, 0.0);
                }
                continue;
            }
            let mut sum = vec![0.0; total];
            for j in 0..u.cols {
                let x = u.offset + i * u.cols + j;
                let a = next;
                next += 1;
                let mut c = vec![0.0; total];
                c[x] = 1.0;
                c[a] = -1.0;
                lp.add(c.clone(), Rel::Le, 0.0);
                c[x] = -1.0;
                lp.add(c, Rel::Le, 0.0);
                sum[a] = 1.0;
            }
            lp.add(sum, Rel::Le, 1.0);
        }
    }
    for g in groups {
        let mut sum = vec![0.0; total];
        for form in g {
            let a = next;
            next += 1;
            let mut c = vec![0.0; total];
            for &(v, w) in &form.terms {
                c[v] += w;
            }
            c[a] = -1.0;
            lp.add(c.clone(), Rel::Le, -form.constant);
            for v in c.iter_mut() {
                *v = -*v;
            }
            c[a] = -1.0;
            lp.add(c, Rel::Le, form.constant);
            sum[a] = 1.0;
        }
        sum[tvar] = -1.0;
        lp.add(sum, Rel::Le, 0.0);
    }
    let mut obj = vec![0.0; total];
    obj[tvar] = 1.0;
    lp.minimize(obj);
    let sol = lp.solve_with(engine)?;
    Ok((sol.x, sol.value.max(0.0)))
}

/// Error rows of `ĝ∘φ − J f`: one group per coordinate of the stage.
fn extension_groups(u: &Unknown, phi: &Matrix, jf: &Matrix) -> Vec<Vec<Affine>> {
    let mut out = Vec::with_capacity(u.rows);
    for i in 0..u.rows {
        let mut g = Vec::with_capacity(phi.cols());
        for e in 0..phi.cols() {
            let mut a = Affine::zero();
            for j in 0..u.cols {
                a.add_entry(u, i, j, phi[(j, e)]);
            }
            a.constant -= jf[(i, e)];
            g.push(a);
        }
        out.push(g);
    }
    out
}

fn fixed_rows(rows: usize, placement: &[(usize, f64)], width: usize) -> Vec<Option<Vec<f64>>> {
    let mut fixed = vec![None; rows];
    for (r, &(i, s)) in placement.iter().enumerate() {
        let mut v = vec![0.0; width];
        v[r] = s;
        fixed[i] = Some(v);
    }
    fixed
}

fn solve_placement(
    engine: LpEngine,
    t: &LinearMap,
    item: &ArrowItem,
    jf0: &LinearMap,
    jf1: &LinearMap,
    s0: &[(usize, f64)],
    s1: &[(usize, f64)],
) -> Result<(LinearMap, LinearMap, f64)> {
    let (f0, f1) = (item.phi.p0.cod(), item.phi.p1.cod());
    let (a, b) = (t.dom().dim(), t.cod().dim());
    let g0 = Unknown::new(a, f0.dim(), fixed_rows(a, s0, f0.dim()), 0);
    let g1 = Unknown::new(b, f1.dim(), fixed_rows(b, s1, f1.dim()), g0.vars());
    let mut groups = extension_groups(&g0, item.phi.p0.matrix(), jf0.matrix());
    groups.extend(extension_groups(&g1, item.phi.p1.matrix(), jf1.matrix()));
    let lh = item.l_hat.matrix();
    for k in 0..b {
        // Row k of T ĝ0 − ĝ1 L̂, a functional on F0.
        let mut g = Vec::with_capacity(f0.dim());
        for c in 0..f0.dim() {
            let mut form = Affine::zero();
            for i in 0..a {
                form.add_entry(&g0, i, c, t.matrix()[(k, i)]);
            }
            for j in 0..f1.dim() {
                form.add_entry(&g1, k, j, -lh[(j, c)]);
            }
            g.push(form);
        }
        groups.push(g);
    }
    let (x, v) = solve_groups(engine, &[&g0, &g1], &groups)?;
    let m0 = LinearMap::new(f0.clone(), t.dom().clone(), g0.value(&x))?;
    let m1 = LinearMap::new(f1.clone(), t.cod().clone(), g1.value(&x))?;
    Ok((m0, m1, v))
}

/// A fixed battery of arrows out of the first stage.
pub fn operator_battery(chain: &ArrowChain, size: usize, seed: u64) -> Result<Vec<ArrowItem>> {
    let mut r = rng(seed);
    let t = &chain.intertwiners[0];
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let i = r.gen_range(0..t.dom().dim());
        let mut e = vec![0.0; t.dom().dim()];
        e[i] = 1.0;
        let a0 = uniform(&mut r, -1.0, 1.0);
        let a1 = uniform(&mut r, -1.0, 1.0);
        out.push(arrow_item(&mut r, t, &e, a0, a1, 0.25, 0)?);
    }
    Ok(out)
}

/// Largest distance from the probes to `T(Ball)`, one LP per probe.
pub fn surjectivity_defect(t: &LinearMap, probes: &[Vec<f64>]) -> Result<f64> {
    surjectivity_defect_with(default_engine(), t, probes)
}

pub fn surjectivity_defect_with(engine: LpEngine, t: &LinearMap, probes: &[Vec<f64>]) -> Result<f64> {
    let (x, y) = (t.dom(), t.cod());
    let pulled = y.norming().mul(t.matrix());
    let mut worst: f64 = 0.0;
    for p in probes {
        if p.len() != y.dim() {
            return Err(Error::Shape("probe length".into()));
        }
        let n = x.dim();
        let mut lp = Lp::new(n + 1);
        lp.set_nonneg(n);
        for i in 0..x.num_rows() {
            let mut c = x.norming().row(i).to_vec();
            c.push(0.0);
            lp.add_abs_le(c, 1.0);
        }
        for j in 0..y.num_rows() {
            let gy = dot(y.norming().row(j), p);
            let mut c = pulled.row(j).to_vec();
            c.push(-1.0);
            lp.add(c.clone(), Rel::Le, gy);
            for v in c.iter_mut().take(n) {
                *v = -*v;
            }
            lp.add(c, Rel::Le, -gy);
        }
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        lp.minimize(obj);
        worst = worst.max(lp.solve_with(engine)?.value.max(0.0));
    }
    Ok(worst)
}

/// Surjectivity defect of every stage on probes from the first
/// codomain stage, pushed forward.
pub fn surjectivity_trace(chain: &ArrowChain, probes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(chain.intertwiners.len());
    for (k, t) in chain.intertwiners.iter().enumerate() {
        let j = chain.cod_chain.embedding(0, k)?;
        let pushed: Vec<Vec<f64>> = probes.iter().map(|p| j.apply(p)).collect();
        out.push(surjectivity_defect(t, &pushed)?);
    }
    Ok(out)
}

/// Unit probes of a space.
pub fn unit_probes(space: &NormedSpace, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| random_unit_vector(&mut r, space)).collect()
}

/// The null space of `T` with the norm inherited from the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelStage {
    /// Columns span the kernel inside the domain.
    pub basis: Matrix,
    /// `None` when the kernel is trivial.
    pub space: Option<NormedSpace>,
    pub certificate: Certificate,
}

pub fn kernel_stage(t: &LinearMap, eps: f64) -> Result<KernelStage> {
    let engine = default_engine();
    let basis = t.matrix().null_space(1e-10);
    if basis.cols() == 0 {
        let certificate = Certificate::new("kernel is trivial", eps, 0.0, Witness::Constant { value: 0.0 });
        return Ok(KernelStage { basis, space: None, certificate });
    }
    let rows = t.dom().norming().mul(&basis);
    let kept: Vec<Vec<f64>> = (0..rows.rows()).map(|i| rows.row(i).to_vec()).filter(|r| l1_norm(r) > 1e-12).collect();
    let space = NormedSpace::from_rows(&kept, "kernel")?;
    let inclusion = LinearMap::new(space.clone(), t.dom().clone(), basis.clone())?;
    let certificate = Certificate::new(
        "kernel unit ball lies in the eps-sublevel set of T",
        eps,
        op_norm_with(engine, &t.compose(&inclusion)?)?,
        Witness::OpNorm { map: t.compose(&inclusion)? },
    );
    Ok(KernelStage { basis, space: Some(space), certificate })
}

/// A chain with states `s_k: stage_k → ℓ∞^d` and `s_{k+1}∘J_k = s_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateChain {
    pub chain: StageChain,
    pub target: NormedSpace,
    pub states: Vec<LinearMap>,
    /// `‖s_{k+1}∘J_k − s_k‖`.
    #[serde(with = "crate::real::vec")]
    pub compatibility: Vec<f64>,
    pub ledger: Vec<StateObligation>,
}

impl StateChain {
    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.tag("state_chain");
        h.tag(&self.chain.content_hash());
        for s in &self.states {
            h.map(s);
        }
        for o in &self.ledger {
            h.map(&o.item.phi);
            h.map(&o.item.t);
            h.map(&o.item.f);
            h.real(o.defect);
        }
        h.finish()
    }
}

/// `φ: E → F`, a contraction `t: F → R` and `f: E → stage` with
/// `s∘f ≈ t∘φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateItem {
    pub stage: usize,
    pub phi: LinearMap,
    pub t: LinearMap,
    pub f: LinearMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateObligation {
    pub item: StateItem,
    pub discharged_at: Option<usize>,
    #[serde(with = "crate::real")]
    pub defect: f64,
    #[serde(with = "crate::real")]
    pub bound: f64,
}

/// A state chain into `R = ℓ∞^d` starting from `stage_0 = R`, `s_0 = id`.
/// Each step pushes out along `per_step` test items; the new state selects
/// the pairs `(t_i, s_i)`, so `s∘g = t` and `s_{k+1}∘J = s_k` hold exactly.
pub fn build_universal_state_chain(d: usize, depth: usize, cap: usize, seed: u64) -> Result<StateChain> {
    build_state_chain(d, depth, cap, seed, 10, 0.25)
}

pub fn build_state_chain(d: usize, depth: usize, cap: usize, seed: u64, per_step: usize, pitch: f64) -> Result<StateChain> {
    let engine = default_engine();
    if d == 0 || depth == 0 {
        return Err(Error::Precondition("d >= 1 and depth >= 1".into()));
    }
    let target = NormedSpace::linf(d);
    let mut r = rng(seed);
    let mut chain = StageChain::single(Class::Banach, d);
    chain.seed = seed;
    chain.net_resolution = pitch;
    let mut s = LinearMap::identity(&target);
    let mut states = vec![s.clone()];
    let mut compatibility = Vec::new();
    let mut ledger = Vec::new();
    for step in 0..depth - 1 {
        let n0 = s.dom().dim();
        let mut j = Matrix::identity(n0);
        let s_start = s.clone();
        for _ in 0..per_step {
            let i = r.gen_range(0..n0);
            let a = grid(&mut r, pitch);
            let item = state_item(&mut r, &s_start, i, a, pitch, step)?;
            let moved = LinearMap::new(item.f.dom().clone(), s.dom().clone(), j.mul(item.f.matrix()))?;
            let (rows, s_next, defect) = state_push(engine, &s, &item.phi, &item.t, &moved)?;
            let fits = rows.rows() <= cap;
            ledger.push(StateObligation {
                item,
                discharged_at: fits.then_some(step),
                defect: if fits { defect } else { f64::INFINITY },
                bound: Modulus::Banach.eval(0.0),
            });
            if fits {
                j = rows.mul(&j);
                s = s_next;
            }
        }
        let conn = LinearMap::new(s_start.dom().clone(), s.dom().clone(), j)?;
        compatibility.push(op_norm_with(engine, &s.compose(&conn)?.sub(&s_start)?)?);
        chain.dims.push(s.dom().dim());
        chain.connectives.push(conn);
        states.push(s.clone());
    }
    Ok(StateChain { chain, target, states, compatibility, ledger })
}

/// `f = e_i`, `φ(1) = (1, a)` and `t` with rows `(α_j, β_j)`,
/// `α_j + β_j a = s_{ji}`.
fn state_item<R: Rng>(rng: &mut R, s: &LinearMap, i: usize, a: f64, pitch: f64, stage: usize) -> Result<StateItem> {
    let e = NormedSpace::linf(1);
    let f2 = NormedSpace::linf(2);
    let n = s.dom().dim();
    let k = libm::round(1.0 / pitch) as i64;
    let mut rows = Vec::with_capacity(s.cod().dim());
    for jrow in 0..s.cod().dim() {
        let sji = s.matrix()[(jrow, i)];
        let beta = rng.gen_range(-k..=k) as f64 * pitch;
        let alpha = sji - beta * a;
        rows.push(if alpha.abs() + beta.abs() <= 1.0 { vec![alpha, beta] } else { vec![sji, 0.0] });
    }
    let mut col = vec![0.0; n];
    col[i] = 1.0;
    Ok(StateItem {
        stage,
        phi: LinearMap::new(e.clone(), f2.clone(), Matrix::from_columns(&[vec![1.0, a]], 2)?)?,
        t: LinearMap::new(f2, s.cod().clone(), Matrix::from_rows(&rows, 2)?)?,
        f: LinearMap::new(e, s.dom().clone(), Matrix::from_columns(&[col], n)?)?,
    })
}

fn state_push(engine: LpEngine, s: &LinearMap, phi: &LinearMap, t: &LinearMap, f: &LinearMap) -> Result<(Matrix, LinearMap, f64)> {
    let n = s.dom().dim();
    let mut family: Vec<WitnessPair> = Vec::new();
    let mut state_idx = Vec::with_capacity(s.cod().dim());
    for i in 0..s.cod().dim() {
        state_idx.push(push_unique(&mut family, WitnessPair { g: t.matrix().row(i).to_vec(), h: s.matrix().row(i).to_vec() }));
    }
    for u in distinct_linf_rows(phi.cod().dim()) {
        let target = phi.matrix().left_mul_vec(&u);
        let h = contractive_extension(engine, f, &target)?;
        push_unique(&mut family, WitnessPair { g: u, h });
    }
    for r in 0..n {
        let e = unit(n, r);
        if family.iter().any(|p| close(&p.h, &e)) {
            continue;
        }
        let g = contractive_extension(engine, phi, f.matrix().row(r))?;
        family.push(WitnessPair { g, h: e });
    }
    let mut defect: f64 = 0.0;
    for p in &family {
        let a = phi.matrix().left_mul_vec(&p.g);
        let b = f.matrix().left_mul_vec(&p.h);
        defect = defect.max(phi.dom().dual_norm_with(engine, &a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())?);
    }
    let rows = Matrix::from_rows(&family.iter().map(|p| p.h.clone()).collect::<Vec<_>>(), n)?;
    let mut sel = Matrix::zeros(s.cod().dim(), family.len());
    for (i, &k) in state_idx.iter().enumerate() {
        sel[(i, k)] = 1.0;
    }
    let s_next = LinearMap::new(NormedSpace::linf(family.len()), s.cod().clone(), sel)?;
    Ok((rows, s_next, defect))
}

/// Retraction candidates `r_k = J_{0→k}∘s_k`; returns the largest
/// `‖r_k r_k y − r_k y‖` over probes `y` from the first stage.
pub fn retraction_defects(chain: &StateChain, probes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in 0..chain.states.len() {
        let j = chain.chain.embedding(0, k)?;
        let r = j.compose(&chain.states[k])?;
        let mut worst: f64 = 0.0;
        for p in probes {
            let y = j.apply(p);
            let ry = r.apply(&y);
            let rry = r.apply(&ry);
            let d: Vec<f64> = rry.iter().zip(&ry).map(|(a, b)| a - b).collect();
            worst = worst.max(r.cod().norm(&d));
        }
        out.push(worst);
    }
    Ok(out)
}

/// Searches stages `m ≥ p` for an isometry `ĝ: F → stage_m` with
/// `ĝ∘φ ≈ J∘f` and `s_m∘ĝ ≈ t`.
pub fn check_universal_projection_property(chain: &StateChain, item: &StateItem, eps: f64) -> Result<BatteryCheck> {
    let engine = default_engine();
    let p = item.stage;
    let mut best: Option<BatteryCheck> = None;
    for m in p..chain.states.len() {
        let s = &chain.states[m];
        let jf = chain.chain.embedding(p, m)?.compose(&item.f)?;
        let cands = candidates(engine, &item.phi, jf.matrix(), SEARCH_WIDTH)?;
        for (_, placement) in assignments(&cands).into_iter().take(SEARCH_TRIES) {
            let n = s.dom().dim();
            let fd = item.phi.cod().dim();
            let g = Unknown::new(n, fd, fixed_rows(n, &placement, fd), 0);
            let mut groups = extension_groups(&g, item.phi.matrix(), jf.matrix());
            for row in 0..s.cod().dim() {
                let mut grp = Vec::with_capacity(fd);
                for c in 0..fd {
                    let mut form = Affine::zero();
                    for i in 0..n {
                        form.add_entry(&g, i, c, s.matrix()[(row, i)]);
                    }
                    form.constant -= item.t.matrix()[(row, c)];
                    grp.push(form);
                }
                groups.push(grp);
            }
            let (x, _) = solve_groups(engine, &[&g], &groups)?;
            let gm = LinearMap::new(item.phi.cod().clone(), s.dom().clone(), g.value(&x))?;
            let parts = vec![
                Witness::MapDistance { left: s.compose(&gm)?, right: item.t.clone() },
                Witness::MapDistance { left: gm.compose(&item.phi)?, right: jf.clone() },
                Witness::Distortion { map: gm.clone() },
            ];
            let witness = Witness::Chained { chain_hash: chain.content_hash(), inner: Box::new(Witness::Max { parts }) };
            let defect = witness.recompute(engine)?;
            let certificate = Certificate::new("projection battery: |s g - t| and extension defect < eps", eps, defect, witness);
            let done = certificate.pass;
            if done || best.as_ref().map_or(true, |b| defect < b.defect - 1e-12) {
                best = Some(BatteryCheck { stage: m, g0: gm.clone(), g1: gm, defect, certificate });
            }
            if done {
                return Ok(best.expect("set above"));
            }
        }
    }
    best.ok_or_else(|| Error::Resource("no stage admits isometric placements of the test rows".into()))
}

/// A fixed battery of state items out of the first stage.
pub fn projection_battery(chain: &StateChain, size: usize, seed: u64) -> Result<Vec<StateItem>> {
    let mut r = rng(seed);
    let s = &chain.states[0];
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let i = r.gen_range(0..s.dom().dim());
        let a = uniform(&mut r, -1.0, 1.0);
        out.push(state_item(&mut r, s, i, a, 0.25, 0)?);
    }
    Ok(out)
}

/// Largest connective distortion of a stage chain; used to audit both
/// sides of an arrow chain.
pub fn chain_distortion(chain: &StageChain) -> Result<f64> {
    let mut m: f64 = 0.0;
    for c in &chain.connectives {
        m = m.max(distortion_with(default_engine(), c)?);
    }
    Ok(m)
}

/// Passes within `CERT_TOL` of the bound.
pub fn within(defect: f64, bound: f64) -> bool {
    defect <= bound + CERT_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_zero_surjectivity() {
        let x = NormedSpace::linf(2);
        let probes = unit_probes(&x, 5, 1);
        assert!(surjectivity_defect(&LinearMap::identity(&x), &probes).unwrap() <= 1e-12);
        let d = surjectivity_defect(&LinearMap::zero(&x, &x), &probes).unwrap();
        assert!((d - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kernel_of_a_coordinate_projection() {
        let p = LinearMap::new(NormedSpace::linf(2), NormedSpace::linf(1), Matrix::from_rows(&[vec![1.0, 0.0]], 2).unwrap()).unwrap();
        let k = kernel_stage(&p, 1e-9).unwrap();
        let space = k.space.unwrap();
        assert_eq!(space.dim(), 1);
        assert!((space.norm(&[1.0]) - 1.0).abs() < 1e-12);
        assert!(k.certificate.pass);
        let iso = kernel_stage(&LinearMap::identity(&NormedSpace::linf(2)), 1e-9).unwrap();
        assert!(iso.space.is_none());
    }

    #[test]
    fn depth_one_chain_is_the_first_stage() {
        let c = build_universal_operator_chain(1, (40, 20), 3).unwrap();
        assert_eq!(c.intertwiners.len(), 1);
        assert!(c.ledger.is_empty());
    }

    #[test]
    fn arrow_chain_squares_commute() {
        let c = build_universal_operator_chain(3, (40, 20), 3).unwrap();
        for d in &c.square_defects {
            assert!(*d <= 1e-9);
        }
        assert!(chain_distortion(&c.dom_chain).unwrap() <= 1e-9);
        assert!(chain_distortion(&c.cod_chain).unwrap() <= 1e-9);
        for o in c.ledger.iter().filter(|o| o.discharged_at.is_some()) {
            assert!(within(o.defect, o.bound), "{} > {}", o.defect, o.bound);
        }
    }

    #[test]
    fn state_chain_retracts() {
        let c = build_universal_state_chain(2, 3, 60, 5).unwrap();
        for d in &c.compatibility {
            assert!(*d <= 1e-12);
        }
        let probes = unit_probes(&NormedSpace::linf(2), 10, 2);
        for d in retraction_defects(&c, &probes).unwrap() {
            assert!(d <= 1e-12);
        }
    }
}
