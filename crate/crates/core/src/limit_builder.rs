//! Finite stage chains `ℓ∞^{n_1} → ℓ∞^{n_2} → …` with isometric
//! connectives, built by discharging extension obligations, together with
//! extension certification, back-and-forth and nuclearity witnesses.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::assign;
use crate::certificate::{Certificate, ContentHasher, Witness, CERT_TOL};
use crate::error::{Error, Result};
use crate::function_systems::{extend_state_with, unital_state_net};
use crate::linalg::{dot, l1_norm, Matrix};
use crate::lp::{default_engine, Lp, LpEngine, Rel};
use crate::normed_core::{
    distortion_unchecked, distortion_with, embed_linf, extend_functional_with, op_norm_with, LinearMap, Modulus,
    NormedSpace, CONTRACTION_TOL,
};
use crate::sample::{random_isometry, rng, shuffle, uniform, SeededRng};

/// Largest net enumerated member by member.
pub const NET_CAP: usize = 50_000;

/// Largest net of maps into a stage that is scheduled in full; bigger
/// stage nets are sampled.
pub const STAGE_NET_CAP: usize = 100;

/// A finite family of contractions on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphismNet {
    pub source: NormedSpace,
    pub target: NormedSpace,
    #[serde(with = "crate::real")]
    pub resolution: f64,
    #[serde(with = "crate::real")]
    pub pitch: f64,
    pub seed: u64,
    pub members: Vec<LinearMap>,
}

impl MorphismNet {
    /// `count` members drawn without replacement, in a seeded order.
    pub fn sample(&self, count: usize) -> Vec<LinearMap> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        shuffle(&mut rng(self.seed), &mut idx);
        idx.into_iter().take(count).map(|i| self.members[i].clone()).collect()
    }
}

/// All grid matrices with entries at multiples of
/// `pitch = resolution / (dim E · C)` that are contractions; `C` is the
/// largest norming-row 1-norm of the source (at least 1). Entry `(i, j)`
/// ranges over `[−‖e_j‖, ‖e_j‖]`, which contains every contraction.
pub fn build_morphism_net(source: &NormedSpace, target: &NormedSpace, resolution: f64, seed: u64) -> Result<MorphismNet> {
    build_morphism_net_capped(source, target, resolution, seed, NET_CAP)
}

/// [`build_morphism_net`] with an explicit cap on the grid cardinality.
pub fn build_morphism_net_capped(
    source: &NormedSpace,
    target: &NormedSpace,
    resolution: f64,
    seed: u64,
    cap: usize,
) -> Result<MorphismNet> {
    if !(resolution > 0.0) {
        return Err(Error::Precondition("net resolution must be positive".into()));
    }
    let c = source.row_bound().max(1.0);
    let pitch = resolution / (source.dim() as f64 * c);
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for j in 0..source.dim() {
        let mut e = vec![0.0; source.dim()];
        e[j] = 1.0;
        let b = source.norm(&e);
        let k = libm::floor(b / pitch + 1e-9) as i64;
        levels.push((-k..=k).map(|t| t as f64 * pitch).collect());
    }
    let mut cardinality: f64 = 1.0;
    for _ in 0..target.dim() {
        for l in &levels {
            cardinality *= l.len() as f64;
        }
    }
    if cardinality > cap as f64 {
        return Err(Error::Resource(format!(
            "net of {}-dim maps into dim {} at resolution {resolution} needs {cardinality} grid points (cap {cap})",
            source.dim(),
            target.dim()
        )));
    }
    let entries = source.dim() * target.dim();
    let mut members = Vec::new();
    let mut idx = vec![0usize; entries];
    'grid: loop {
        let data: Vec<f64> = (0..entries).map(|e| levels[e % source.dim()][idx[e]]).collect();
        let m = LinearMap::new(source.clone(), target.clone(), Matrix::from_row_major(target.dim(), source.dim(), data)?)?;
        if op_norm_with(default_engine(), &m)? <= 1.0 + 1e-12 {
            members.push(m);
        }
        for e in (0..entries).rev() {
            idx[e] += 1;
            if idx[e] < levels[e % source.dim()].len() {
                continue 'grid;
            }
            idx[e] = 0;
        }
        break;
    }
    Ok(MorphismNet { source: source.clone(), target: target.clone(), resolution, pitch, seed, members })
}

/// Which class of structures a chain approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    /// Real Banach spaces; the limit is the Gurarij space.
    Banach,
    /// Function systems with unit the constants vector; the limit is the
    /// function system of the Poulsen simplex.
    Unital,
}

impl Class {
    pub fn modulus(self) -> Modulus {
        match self {
            Class::Banach => Modulus::Banach,
            Class::Unital => Modulus::FunctionSystem,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub class: Class,
    pub depth: usize,
    pub dim_cap: usize,
    #[serde(with = "crate::real")]
    pub net_resolution: f64,
    pub seed: u64,
    /// Tolerance of the scheduled embeddings.
    #[serde(with = "crate::real")]
    pub delta: f64,
    /// Allowance on top of `ϖ(δ)` within which an obligation counts as met.
    #[serde(with = "crate::real")]
    pub slack: f64,
    /// New maps into the current stage scheduled per step once the stage
    /// net is too large to enumerate.
    pub maps_per_step: usize,
    pub start_dim: usize,
    pub sources: Vec<NormedSpace>,
    pub targets: Vec<NormedSpace>,
    /// Turn undischarged obligations into an error.
    pub fail_on_residual: bool,
}

impl ChainConfig {
    pub fn gurarij(depth: usize, dim_cap: usize, net_resolution: f64, seed: u64) -> Self {
        ChainConfig {
            class: Class::Banach,
            depth,
            dim_cap,
            net_resolution,
            seed,
            delta: 0.05,
            slack: 0.1,
            maps_per_step: 1,
            start_dim: 1,
            sources: vec![NormedSpace::linf(1)],
            targets: vec![NormedSpace::linf(2)],
            fail_on_residual: false,
        }
    }

    pub fn poulsen(depth: usize, dim_cap: usize, net_resolution: f64, seed: u64) -> Self {
        ChainConfig {
            class: Class::Unital,
            start_dim: 2,
            sources: vec![NormedSpace::linf(2)],
            targets: vec![NormedSpace::linf(3)],
            ..Self::gurarij(depth, dim_cap, net_resolution, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.depth >= 1
            && self.start_dim >= 1
            && self.dim_cap >= self.start_dim
            && self.net_resolution > 0.0
            && (0.0..1.0).contains(&self.delta)
            && self.slack >= 0.0;
        if !ok {
            return Err(Error::Precondition(format!("invalid chain configuration {self:?}")));
        }
        if self.class == Class::Unital && self.sources.iter().chain(&self.targets).any(|s| !s.is_linf()) {
            return Err(Error::Precondition("unital chains schedule l-infinity sources and targets only".into()));
        }
        Ok(())
    }
}

/// A scheduled requirement: some isometric `g: F → stage` with
/// `g∘φ ≈ J∘f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obligation {
    pub id: usize,
    /// `φ: E → F`.
    pub phi: LinearMap,
    /// `f: E → stage`.
    pub f: LinearMap,
    pub stage: usize,
    /// Step at which the obligation was first met, if ever.
    pub discharged_at: Option<usize>,
    /// Coordinates added to discharge it.
    pub added: usize,
    /// Measured defect of the best extension at the top stage.
    #[serde(with = "crate::real")]
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageChain {
    pub class: Class,
    pub dims: Vec<usize>,
    pub connectives: Vec<LinearMap>,
    pub seed: u64,
    #[serde(with = "crate::real")]
    pub net_resolution: f64,
    pub modulus: Modulus,
    #[serde(with = "crate::real")]
    pub delta: f64,
    #[serde(with = "crate::real")]
    pub slack: f64,
    pub ledger: Vec<Obligation>,
}

impl StageChain {
    /// A chain with a single stage and no obligations.
    pub fn single(class: Class, dim: usize) -> Self {
        StageChain {
            class,
            dims: vec![dim],
            connectives: Vec::new(),
            seed: 0,
            net_resolution: 1.0,
            modulus: class.modulus(),
            delta: 0.0,
            slack: 0.0,
            ledger: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.dims.len()
    }

    pub fn stage(&self, k: usize) -> NormedSpace {
        NormedSpace::linf(self.dims[k])
    }

    pub fn top(&self) -> usize {
        self.dims.len() - 1
    }

    /// The composite connective `stage_p → stage_m`.
    pub fn embedding(&self, p: usize, m: usize) -> Result<LinearMap> {
        if p > m || m >= self.depth() {
            return Err(Error::Precondition(format!("no embedding from stage {p} to stage {m}")));
        }
        let mut out = LinearMap::identity(&self.stage(p));
        for k in p..m {
            out = self.connectives[k].compose(&out)?;
        }
        Ok(out)
    }

    /// Obligation bound `ϖ(δ) + slack`.
    pub fn bound(&self) -> f64 {
        self.modulus.eval(self.delta) + self.slack
    }

    /// Ids of obligations whose residual exceeds the bound.
    pub fn uncovered(&self) -> Vec<usize> {
        self.ledger.iter().filter(|o| !(o.residual <= self.bound() + 1e-9)).map(|o| o.id).collect()
    }

    /// Largest connective distortion.
    pub fn connective_distortion(&self) -> Result<f64> {
        let mut m: f64 = 0.0;
        for c in &self.connectives {
            m = m.max(distortion_with(default_engine(), c)?);
        }
        Ok(m)
    }

    /// SHA-256 of the stage data and the ledger.
    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.tag(match self.class {
            Class::Banach => "banach",
            Class::Unital => "unital",
        });
        h.usize(self.dims.len());
        for d in &self.dims {
            h.usize(*d);
        }
        for c in &self.connectives {
            h.map(c);
        }
        h.usize(self.ledger.len());
        for o in &self.ledger {
            h.map(&o.phi);
            h.map(&o.f);
            h.usize(o.stage);
            h.usize(o.discharged_at.map_or(usize::MAX, |s| s));
            h.real(o.residual);
        }
        h.finish()
    }
}

/// Builds a chain approximating the Gurarij space.
pub fn build_gurarij_chain(depth: usize, dim_cap: usize, net_resolution: f64, seed: u64) -> Result<StageChain> {
    build_chain(&ChainConfig::gurarij(depth, dim_cap, net_resolution, seed))
}

/// Builds a stage chain. At each step every pending obligation (new
/// members of the stage nets paired with the test embeddings, and those
/// left over from earlier steps) is measured; the worst are discharged
/// first by amalgamating, until the step's share of the dimension cap is
/// spent.
///
/// A discharge is the near amalgamation of `J∘f` and `φ` with the `F` side
/// pruned to the norming rows of `F` that no stage coordinate already
/// matches within `ϖ(δ) + slack`: each unmatched row `u` becomes a new
/// coordinate extending `u∘φ` along `J∘f`.
pub fn build_chain(cfg: &ChainConfig) -> Result<StageChain> {
    build_chain_with(default_engine(), cfg)
}

pub fn build_chain_with(engine: LpEngine, cfg: &ChainConfig) -> Result<StageChain> {
    cfg.validate()?;
    let mut r = rng(cfg.seed);
    let mut chain = StageChain {
        class: cfg.class,
        dims: vec![cfg.start_dim],
        connectives: Vec::new(),
        seed: cfg.seed,
        net_resolution: cfg.net_resolution,
        modulus: cfg.class.modulus(),
        delta: cfg.delta,
        slack: cfg.slack,
        ledger: Vec::new(),
    };
    let threshold = chain.bound();
    let mut tests: Vec<(NormedSpace, Vec<LinearMap>)> = Vec::new();
    for e in &cfg.sources {
        for fsp in &cfg.targets {
            let phis = embedding_net(engine, cfg, e, fsp, false, &mut r)?;
            tests.push((e.clone(), phis));
        }
    }
    let mut pending: Vec<usize> = Vec::new();
    for step in 0..cfg.depth.saturating_sub(1) {
        let n = chain.dims[step];
        for (e, phis) in &tests {
            let fs = embedding_net(engine, cfg, e, &chain.stage(step), true, &mut r)?;
            for f in fs {
                for phi in phis {
                    let id = chain.ledger.len();
                    chain.ledger.push(Obligation {
                        id,
                        phi: phi.clone(),
                        f: f.clone(),
                        stage: step,
                        discharged_at: None,
                        added: 0,
                        residual: f64::INFINITY,
                    });
                    pending.push(id);
                }
            }
        }
        let remaining = cfg.depth - 1 - step;
        let budget = (cfg.dim_cap.saturating_sub(n) + remaining - 1) / remaining;
        let mut conn = Matrix::identity(n);
        let mut order: Vec<(usize, f64)> = Vec::with_capacity(pending.len());
        for &id in &pending {
            let jf = pushed_forward(&chain, &chain.ledger[id], step, &conn)?;
            let cost = cost_matrix(engine, cfg.class, &chain.ledger[id].phi, &jf)?;
            let worst = assign::bottleneck(&cost, jf.rows()).map_or(f64::INFINITY, |(_, b)| b);
            order.push((id, worst));
        }
        // Worst first; ties by age.
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut added = 0usize;
        let mut still: Vec<usize> = Vec::new();
        for (id, _) in order {
            let jf = pushed_forward(&chain, &chain.ledger[id], step, &conn)?;
            let phi = chain.ledger[id].phi.clone();
            let cost = cost_matrix(engine, cfg.class, &phi, &jf)?;
            let matched = assign::max_matching(&cost, jf.rows(), threshold);
            let unmatched: Vec<usize> = (0..matched.len()).filter(|&r| matched[r].is_none()).collect();
            if unmatched.is_empty() {
                let o = &mut chain.ledger[id];
                o.discharged_at.get_or_insert(step);
                continue;
            }
            if added + unmatched.len() > budget || conn.rows() + unmatched.len() > cfg.dim_cap {
                still.push(id);
                continue;
            }
            let rows = target_rows(&phi);
            let jf_map = LinearMap::new(phi.dom().clone(), NormedSpace::linf(jf.rows()), jf.clone())?;
            let mut h = Matrix::zeros(unmatched.len(), conn.rows());
            for (k, &r) in unmatched.iter().enumerate() {
                let target = phi.matrix().left_mul_vec(&rows[r]);
                let row = extend_row(engine, cfg.class, &jf_map, &target)?;
                h.row_mut(k).copy_from_slice(&row);
            }
            conn = conn.vstack(&h.mul(&conn));
            added += unmatched.len();
            let o = &mut chain.ledger[id];
            o.discharged_at.get_or_insert(step);
            o.added = unmatched.len();
        }
        pending = still;
        let next = NormedSpace::linf(conn.rows());
        chain.connectives.push(LinearMap::new(chain.stage(step), next, conn)?);
        chain.dims.push(chain.connectives[step].cod().dim());
    }
    let top = chain.top();
    for id in 0..chain.ledger.len() {
        let o = &chain.ledger[id];
        let ext = extension_at(engine, &chain, &o.phi, &o.f, o.stage, top)?;
        chain.ledger[id].residual = ext.defect;
    }
    if cfg.fail_on_residual {
        if let Some(&id) = chain.uncovered().first() {
            return Err(Error::Resource(format!(
                "obligation {id} undischarged: residual {} exceeds {}",
                chain.ledger[id].residual,
                chain.bound()
            )));
        }
    }
    Ok(chain)
}

/// Scheduled embeddings `E → X` for a stage or test target `X`: all
/// `δ`-embeddings in the net when it can be enumerated, otherwise
/// `maps_per_step` sampled ones.
fn embedding_net(
    engine: LpEngine,
    cfg: &ChainConfig,
    e: &NormedSpace,
    x: &NormedSpace,
    stage: bool,
    r: &mut SeededRng,
) -> Result<Vec<LinearMap>> {
    let cap = if stage { STAGE_NET_CAP } else { NET_CAP };
    let members = match cfg.class {
        Class::Banach => match build_morphism_net_capped(e, x, cfg.net_resolution, cfg.seed, cap) {
            Ok(net) => Some(net.members),
            Err(Error::Resource(_)) => None,
            Err(other) => return Err(other),
        },
        Class::Unital => unital_state_net(e.dim(), x.dim(), cfg.net_resolution, cap)?,
    };
    let mut out = Vec::new();
    match members {
        Some(ms) => {
            for m in ms {
                if distortion_unchecked(engine, &m)? <= cfg.delta + CONTRACTION_TOL {
                    out.push(m);
                }
            }
        }
        None => {
            for _ in 0..cfg.maps_per_step {
                out.push(sample_embedding(engine, cfg, e, x, r)?);
            }
        }
    }
    Ok(out)
}

/// A grid embedding drawn at random: the norming rows of `E` in random
/// coordinates (extreme states in the unital case), grid contractions
/// elsewhere.
fn sample_embedding(engine: LpEngine, cfg: &ChainConfig, e: &NormedSpace, x: &NormedSpace, r: &mut SeededRng) -> Result<LinearMap> {
    let steps = libm::round(1.0 / cfg.net_resolution).max(1.0);
    let snap = |v: f64| libm::round(v * steps) / steps;
    match cfg.class {
        Class::Banach => {
            let iso = random_isometry(r, e, x.dim())?;
            let rows = e.distinct_rows();
            let snapped = Matrix::from_row_major(
                x.dim(),
                e.dim(),
                iso.matrix().as_slice().iter().map(|v| snap(*v)).collect(),
            )?;
            let cand = LinearMap::new(e.clone(), x.clone(), snapped)?;
            let keep = rows.len() <= x.dim()
                && op_norm_with(engine, &cand)? <= 1.0 + 1e-12
                && distortion_unchecked(engine, &cand)? <= cfg.delta;
            Ok(if keep { cand } else { iso })
        }
        Class::Unital => {
            let a = e.dim();
            if x.dim() < a {
                return Err(Error::Resource(format!("stage of dim {} cannot hold l-infinity^{a}", x.dim())));
            }
            let mut slots: Vec<usize> = (0..x.dim()).collect();
            shuffle(r, &mut slots);
            let mut m = Matrix::zeros(x.dim(), a);
            for (k, &slot) in slots.iter().enumerate() {
                if k < a {
                    m[(slot, k)] = 1.0;
                } else {
                    let mut w: Vec<f64> = (0..a).map(|_| uniform(r, 0.0, 1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.iter_mut().for_each(|v| *v = snap(*v / s));
                    let fix: f64 = 1.0 - w[..a - 1].iter().sum::<f64>();
                    w[a - 1] = fix.max(0.0);
                    let s: f64 = w.iter().sum();
                    for (j, v) in w.iter().enumerate() {
                        m[(slot, j)] = v / s;
                    }
                }
            }
            LinearMap::new(e.clone(), x.clone(), m)
        }
    }
}

/// `C∘J∘f` as a matrix into the working stage of step `step`.
fn pushed_forward(chain: &StageChain, o: &Obligation, step: usize, conn: &Matrix) -> Result<Matrix> {
    let j = chain.embedding(o.stage, step)?;
    Ok(conn.mul(&j.matrix().mul(o.f.matrix())))
}

/// Norming rows of `F` distinct up to sign.
fn target_rows(phi: &LinearMap) -> Vec<Vec<f64>> {
    phi.cod().distinct_rows().into_iter().map(|r| phi.cod().norming().row(r).to_vec()).collect()
}

/// `cost[r][i]` = distance in `E*` between `±u_r∘φ` and coordinate `i` of
/// `jf`; signs only in the Banach case.
fn cost_matrix(engine: LpEngine, class: Class, phi: &LinearMap, jf: &Matrix) -> Result<Vec<Vec<f64>>> {
    let e = phi.dom();
    let rows = target_rows(phi);
    let mut cost = Vec::with_capacity(rows.len());
    for u in &rows {
        let up = phi.matrix().left_mul_vec(u);
        let mut line = Vec::with_capacity(jf.rows());
        for i in 0..jf.rows() {
            let c = jf.row(i);
            let plus: Vec<f64> = up.iter().zip(c).map(|(a, b)| a - b).collect();
            let mut best = e.dual_norm_with(engine, &plus)?;
            if class == Class::Banach {
                let minus: Vec<f64> = up.iter().zip(c).map(|(a, b)| -a - b).collect();
                best = best.min(e.dual_norm_with(engine, &minus)?);
            }
            line.push(best);
        }
        cost.push(line);
    }
    Ok(cost)
}

/// Extends the functional `target` on `E` along `j: E → X` to a
/// contraction on `X` (a state in the unital case).
fn extend_row(engine: LpEngine, class: Class, j: &LinearMap, target: &[f64]) -> Result<Vec<f64>> {
    match class {
        Class::Banach => {
            let ext = extend_functional_with(engine, j, target)?;
            let s = ext.coefficient_sum.max(1.0);
            Ok(ext.functional.iter().map(|v| v / s).collect())
        }
        Class::Unital => Ok(extend_state_with(engine, j, target)?.0),
    }
}

/// An isometric extension found at a given stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageExtension {
    pub stage: usize,
    pub g: LinearMap,
    /// `‖g∘φ − J∘f‖`.
    #[serde(with = "crate::real")]
    pub defect: f64,
    /// `I(g)`.
    #[serde(with = "crate::real")]
    pub distortion: f64,
}

/// Builds `g: F → stage_m` by assigning the norming rows of `F` (up to
/// sign) to distinct coordinates of `J∘f` with the least worst cost, and
/// extending the remaining coordinates of `J∘f` along `φ`.
fn extension_at(engine: LpEngine, chain: &StageChain, phi: &LinearMap, f: &LinearMap, p: usize, m: usize) -> Result<StageExtension> {
    let j = chain.embedding(p, m)?;
    let jf = j.matrix().mul(f.matrix());
    let stage = chain.stage(m);
    let rows = target_rows(phi);
    let cost = cost_matrix(engine, chain.class, phi, &jf)?;
    let assigned = assign::bottleneck(&cost, jf.rows()).map(|(a, _)| a);
    let mut g = Matrix::zeros(stage.dim(), phi.cod().dim());
    let mut used = vec![false; stage.dim()];
    if let Some(a) = &assigned {
        for (r, &i) in a.iter().enumerate() {
            let up = phi.matrix().left_mul_vec(&rows[r]);
            let c = jf.row(i);
            let plus: f64 = up.iter().zip(c).map(|(x, y)| (x - y).abs()).sum();
            let minus: f64 = up.iter().zip(c).map(|(x, y)| (x + y).abs()).sum();
            let s = if chain.class == Class::Banach && minus < plus { -1.0 } else { 1.0 };
            let s = if chain.class == Class::Banach {
                // Pick the sign by the true dual norm.
                let dp: Vec<f64> = up.iter().zip(c).map(|(x, y)| x - y).collect();
                let dm: Vec<f64> = up.iter().zip(c).map(|(x, y)| -x - y).collect();
                let (np, nm) = (phi.dom().dual_norm_with(engine, &dp)?, phi.dom().dual_norm_with(engine, &dm)?);
                if nm < np {
                    -1.0
                } else if np < nm {
                    1.0
                } else {
                    s
                }
            } else {
                1.0
            };
            for (k, v) in rows[r].iter().enumerate() {
                g[(i, k)] = s * v;
            }
            used[i] = true;
        }
    }
    for i in 0..stage.dim() {
        if !used[i] {
            let row = extend_row(engine, chain.class, phi, jf.row(i))?;
            g.row_mut(i).copy_from_slice(&row);
        }
    }
    let g = LinearMap::new(phi.cod().clone(), stage.clone(), g)?;
    let jf_map = LinearMap::new(f.dom().clone(), stage, jf)?;
    let defect = op_norm_with(engine, &g.compose(phi)?.sub(&jf_map)?)?;
    let distortion = distortion_unchecked(engine, &g)?;
    Ok(StageExtension { stage: m, g, defect, distortion })
}

/// Result of [`certify_extension`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCertificate {
    pub extension: StageExtension,
    /// `d(g∘φ, J∘f) ≤ ϖ(δ) + slack`.
    pub defect: Certificate,
    /// `I(g) ≤ ε + slack`.
    pub distortion: Certificate,
}

/// Searches stages `m ≥ p`, smallest first, for `g: F → stage_m` with
/// `g∘φ` close to the image of `f`. Returns the first stage meeting the
/// bound, or else the stage with the smallest defect.
pub fn certify_extension(chain: &StageChain, phi: &LinearMap, f: &LinearMap, p: usize, delta: f64, eps: f64) -> Result<ExtensionCertificate> {
    certify_extension_with(default_engine(), chain, phi, f, p, delta, eps)
}

pub fn certify_extension_with(
    engine: LpEngine,
    chain: &StageChain,
    phi: &LinearMap,
    f: &LinearMap,
    p: usize,
    delta: f64,
    eps: f64,
) -> Result<ExtensionCertificate> {
    if p >= chain.depth() || f.cod().dim() != chain.dims[p] || phi.dom() != f.dom() {
        return Err(Error::Shape("f must map E into the given stage".into()));
    }
    for (name, m) in [("phi", phi), ("f", f)] {
        let d = distortion_with(engine, m)?;
        if d > delta + CONTRACTION_TOL {
            return Err(Error::Precondition(format!("{name} has distortion {d} > {delta}")));
        }
    }
    let bound = chain.modulus.eval(delta) + chain.slack;
    let mut best: Option<StageExtension> = None;
    for m in p..chain.depth() {
        let ext = extension_at(engine, chain, phi, f, p, m)?;
        let done = ext.defect <= bound + CERT_TOL && ext.distortion <= eps + chain.slack + CERT_TOL;
        if done || best.as_ref().map_or(true, |b| ext.defect < b.defect - 1e-12) {
            best = Some(ext);
        }
        if done {
            break;
        }
    }
    let ext = best.expect("at least one stage");
    let jf = chain.embedding(p, ext.stage)?.compose(f)?;
    let chain_hash = chain.content_hash();
    let defect = Certificate::new(
        "extension defect d(g.phi, J.f) <= modulus(delta) + slack",
        bound,
        ext.defect,
        Witness::Chained {
            chain_hash: chain_hash.clone(),
            inner: Box::new(Witness::MapDistance { left: ext.g.compose(phi)?, right: jf }),
        },
    );
    let distortion = Certificate::new(
        "extension distortion I(g) <= eps + slack",
        eps + chain.slack,
        ext.distortion,
        Witness::Chained { chain_hash, inner: Box::new(Witness::Distortion { map: ext.g.clone() }) },
    );
    Ok(ExtensionCertificate { extension: ext, defect, distortion })
}

/// Partial forward and backward maps produced by [`back_and_forth`].
///
/// Maps live on subspaces of the top stage `T = ℓ∞^N`: `α_n` is the
/// restriction of the `N×N` matrix `alphas[n]` to the span of
/// `x_bases[n]`, and likewise for `β_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackAndForth {
    pub alphas: Vec<Matrix>,
    pub betas: Vec<Matrix>,
    pub x_bases: Vec<Matrix>,
    pub y_bases: Vec<Matrix>,
    /// `d(α_n∘φ, f)` per round.
    #[serde(with = "crate::real::vec")]
    pub trace: Vec<f64>,
    /// `‖β_n∘α_n − id‖` on `X_n`.
    #[serde(with = "crate::real::vec")]
    pub forth_defects: Vec<f64>,
    /// `‖α_{n+1}∘β_n − id‖` on `Y_n`.
    #[serde(with = "crate::real::vec")]
    pub back_defects: Vec<f64>,
    /// Allowed restriction error per round; the restrictions are exact.
    #[serde(with = "crate::real::vec")]
    pub deltas: Vec<f64>,
    pub certificate: Certificate,
}

/// Back-and-forth inside the top stage between `φ: E → stage_p` and
/// `f: E → stage_q`. Round `n` extends `α` to
/// `X_{n+1} = X_n + β_n[Y_n] + e_k` and `β` to
/// `Y_{n+1} = Y_n + α_{n+1}[X_{n+1}] + e_k`, each time keeping the previous
/// restriction exactly and minimizing the composition defect on a basis.
pub fn back_and_forth(chain: &StageChain, phi: &LinearMap, p: usize, f: &LinearMap, q: usize, delta: f64, rounds: usize) -> Result<BackAndForth> {
    back_and_forth_with(default_engine(), chain, phi, p, f, q, delta, rounds)
}

#[allow(clippy::too_many_arguments)]
pub fn back_and_forth_with(
    engine: LpEngine,
    chain: &StageChain,
    phi: &LinearMap,
    p: usize,
    f: &LinearMap,
    q: usize,
    delta: f64,
    rounds: usize,
) -> Result<BackAndForth> {
    if rounds == 0 {
        return Err(Error::Precondition("at least one round".into()));
    }
    for (name, m) in [("phi", phi), ("f", f)] {
        let d = distortion_with(engine, m)?;
        if d > delta + CONTRACTION_TOL {
            return Err(Error::Precondition(format!("{name} has distortion {d} > {delta}")));
        }
    }
    let top = chain.top();
    let phi_t = chain.embedding(p, top)?.compose(phi)?;
    let f_t = chain.embedding(q, top)?.compose(f)?;
    let t = chain.stage(top);
    let n = t.dim();
    let e_dim = phi.dom().dim();

    let mut x_basis: Vec<Vec<f64>> = (0..e_dim).map(|k| phi_t.matrix().column(k)).collect();
    let tests: Vec<(Vec<f64>, Vec<f64>)> =
        (0..e_dim).map(|k| (phi_t.matrix().column(k), f_t.matrix().column(k))).collect();
    let mut alpha = fit_contraction(engine, n, &[], None, &tests, Some((phi.dom(), e_dim)))?;
    let mut y_basis: Vec<Vec<f64>> = Vec::new();
    let mut beta = Matrix::zeros(n, n);
    let mut next_x = 0usize;
    let mut next_y = 0usize;
    let mut out = BackAndForth {
        alphas: Vec::new(),
        betas: Vec::new(),
        x_bases: Vec::new(),
        y_bases: Vec::new(),
        trace: Vec::new(),
        forth_defects: Vec::new(),
        back_defects: Vec::new(),
        deltas: Vec::new(),
        certificate: Certificate::new("", 0.0, 0.0, Witness::Constant { value: 0.0 }),
    };
    for round in 0..rounds {
        out.deltas.push(delta * libm::pow(2.0, -((round + 1) as f64)));
        let trace_map = LinearMap::new(phi.dom().clone(), t.clone(), alpha.mul(phi_t.matrix()))?;
        out.trace.push(op_norm_with(engine, &trace_map.sub(&f_t)?)?);
        // Backward map on Y_n = Y_{n-1} + α_n[X_n] + e.
        let old_y = y_basis.len();
        let images: Vec<Vec<f64>> = x_basis.iter().map(|x| alpha.mul_vec(x)).collect();
        extend_basis(&mut y_basis, &images);
        next_y = add_coordinate(&mut y_basis, n, next_y);
        let tests: Vec<(Vec<f64>, Vec<f64>)> = x_basis.iter().map(|x| (alpha.mul_vec(x), x.clone())).collect();
        beta = fit_contraction(engine, n, &y_basis[..old_y], Some(&beta), &tests, None)?;
        out.forth_defects.push(subspace_defect(engine, &x_basis, &beta.mul(&alpha))?);
        // Forward map on X_{n+1} = X_n + β_n[Y_n] + e.
        let old_x = x_basis.len();
        let images: Vec<Vec<f64>> = y_basis.iter().map(|y| beta.mul_vec(y)).collect();
        extend_basis(&mut x_basis, &images);
        next_x = add_coordinate(&mut x_basis, n, next_x);
        let tests: Vec<(Vec<f64>, Vec<f64>)> = y_basis.iter().map(|y| (beta.mul_vec(y), y.clone())).collect();
        alpha = fit_contraction(engine, n, &x_basis[..old_x], Some(&alpha), &tests, None)?;
        out.back_defects.push(subspace_defect(engine, &y_basis, &alpha.mul(&beta))?);
        out.alphas.push(alpha.clone());
        out.betas.push(beta.clone());
        out.x_bases.push(Matrix::from_columns(&x_basis, n)?);
        out.y_bases.push(Matrix::from_columns(&y_basis, n)?);
    }
    let last = LinearMap::new(phi.dom().clone(), t, alpha.mul(phi_t.matrix()))?;
    out.certificate = Certificate::new(
        "back-and-forth defect d(alpha.phi, f) <= modulus(delta) + slack",
        chain.modulus.eval(delta) + chain.slack,
        *out.trace.last().expect("rounds > 0"),
        Witness::Chained { chain_hash: chain.content_hash(), inner: Box::new(Witness::MapDistance { left: last, right: f_t }) },
    );
    Ok(out)
}

/// Appends the vectors that enlarge the span.
fn extend_basis(basis: &mut Vec<Vec<f64>>, vs: &[Vec<f64>]) {
    for v in vs {
        let n = v.len();
        let mut cand = basis.clone();
        cand.push(v.clone());
        if Matrix::from_columns(&cand, n).map(|m| m.rank(1e-9)).unwrap_or(0) == cand.len() {
            basis.push(v.clone());
        }
    }
}

/// Adds the next coordinate vector outside the span, scanning from
/// `start`; returns where to resume.
fn add_coordinate(basis: &mut Vec<Vec<f64>>, n: usize, start: usize) -> usize {
    for k in 0..n {
        let c = (start + k) % n;
        let before = basis.len();
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        extend_basis(basis, &[e]);
        if basis.len() > before {
            return c + 1;
        }
    }
    start
}

/// Finds an `n×n` matrix `Λ` with rows of 1-norm at most one (so `Λ` is a
/// contraction of `ℓ∞^n`), agreeing with `prev` on `keep`, that minimizes
/// the largest error `|Λv − w|` over the test pairs. With `dual`, the
/// error of each row is measured in the dual norm of `E` on the test
/// columns instead.
///
/// Rows are parametrized as `prev_i + N u` with `N` an orthonormal basis of
/// the complement of `keep`, so the restriction holds without equality
/// constraints that a float simplex can misjudge as infeasible.
fn fit_contraction(
    engine: LpEngine,
    n: usize,
    keep: &[Vec<f64>],
    prev: Option<&Matrix>,
    tests: &[(Vec<f64>, Vec<f64>)],
    dual: Option<(&NormedSpace, usize)>,
) -> Result<Matrix> {
    let free = if prev.is_some() { orthonormal_complement(keep, n) } else { identity_columns(n) };
    let c = free.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let base_row: Vec<f64> = prev.map(|m| m.row(i).to_vec()).unwrap_or_else(|| vec![0.0; n]);
        if c == 0 {
            out.row_mut(i).copy_from_slice(&base_row);
            continue;
        }
        // Variables: u (c, free), a (n, ≥ 0), t, then μ for the dual norm.
        let t_var = c + n;
        let width = c + n + 1;
        let mut lp = Lp::new(width);
        for v in c..width {
            lp.set_nonneg(v);
        }
        for j in 0..n {
            let mut row = vec![0.0; width];
            for (k, col) in free.iter().enumerate() {
                row[k] = col[j];
            }
            row[c + j] = -1.0;
            lp.add(row.clone(), Rel::Le, -base_row[j]);
            for v in row[..c].iter_mut() {
                *v = -*v;
            }
            lp.add(row, Rel::Le, base_row[j]);
        }
        let mut sum = vec![0.0; width];
        sum[c..c + n].iter_mut().for_each(|v| *v = 1.0);
        lp.add(sum, Rel::Le, l1_norm(&base_row).max(1.0));
        // λ·v = base·v + (Nᵀv)·u
        let project = |v: &[f64], len: usize| -> (Vec<f64>, f64) {
            let mut row = vec![0.0; len];
            for (k, col) in free.iter().enumerate() {
                row[k] = dot(col, v);
            }
            (row, dot(&base_row, v))
        };
        match dual {
            None => {
                for (v, w) in tests {
                    let (mut row, off) = project(v, width);
                    row[t_var] = -1.0;
                    lp.add(row.clone(), Rel::Le, w[i] - off);
                    for v in row[..c].iter_mut() {
                        *v = -*v;
                    }
                    lp.add(row, Rel::Le, off - w[i]);
                }
            }
            Some((e, e_dim)) => {
                // (λ·v_k − w_ki)_k = μ^T F_E with Σ|μ| ≤ t.
                let rows = e.num_rows();
                for _ in 0..2 * rows {
                    lp.add_var(true);
                }
                let total = lp.vars();
                for k in 0..e_dim {
                    let (mut row, off) = project(&tests[k].0, total);
                    for r in 0..rows {
                        row[width + r] = -e.norming()[(r, k)];
                        row[width + rows + r] = e.norming()[(r, k)];
                    }
                    lp.add(row, Rel::Eq, tests[k].1[i] - off);
                }
                let mut row = vec![0.0; total];
                row[width..].iter_mut().for_each(|v| *v = 1.0);
                row[t_var] = -1.0;
                lp.add(row, Rel::Le, 0.0);
            }
        }
        let mut obj = vec![0.0; lp.vars()];
        obj[t_var] = 1.0;
        lp.minimize(obj);
        let sol = lp.solve_with(engine)?;
        let mut lambda = base_row;
        for (k, col) in free.iter().enumerate() {
            for j in 0..n {
                lambda[j] += sol.x[k] * col[j];
            }
        }
        out.row_mut(i).copy_from_slice(&lambda);
    }
    Ok(out)
}

fn identity_columns(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect()
}

/// Orthonormal basis of the orthogonal complement of `span(vs)` in `R^n`.
fn orthonormal_complement(vs: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    const DROP: f64 = 1e-8;
    let mut q: Vec<Vec<f64>> = Vec::new();
    let push = |q: &mut Vec<Vec<f64>>, v: &[f64]| -> bool {
        let mut r = v.to_vec();
        let scale = libm::sqrt(dot(&r, &r));
        if scale == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for b in q.iter() {
                let d = dot(b, &r);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let len = libm::sqrt(dot(&r, &r));
        if len <= DROP * scale {
            return false;
        }
        r.iter_mut().for_each(|x| *x /= len);
        q.push(r);
        true
    };
    for v in vs {
        push(&mut q, v);
    }
    let spanned = q.len();
    for e in identity_columns(n) {
        if q.len() == n {
            break;
        }
        push(&mut q, &e);
    }
    q.split_off(spanned)
}

/// `‖(M − I)|_V‖` for `V` the span of `basis` inside `ℓ∞^n`.
fn subspace_defect(engine: LpEngine, basis: &[Vec<f64>], m: &Matrix) -> Result<f64> {
    let n = m.rows();
    let b = Matrix::from_columns(basis, n)?;
    let v = NormedSpace::new(b.clone(), "subspace")?;
    let d = m.sub(&Matrix::identity(n)).mul(&b);
    op_norm_with(engine, &LinearMap::new(v, NormedSpace::linf(n), d)?)
}

/// Result of [`nuclearity_witness`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuclearityWitness {
    pub gamma: LinearMap,
    pub rho: LinearMap,
    #[serde(with = "crate::real")]
    pub defect: f64,
    pub certificate: Certificate,
}

/// Contractions `γ: X → ℓ∞^n`, `ρ: ℓ∞^n → X` with `ρ∘γ` close to the
/// identity on a tuple. An `ℓ∞` space factors through itself exactly;
/// otherwise `γ` is the norming presentation and `ρ` is the best
/// contraction back, found by LP.
pub fn nuclearity_witness(x: &NormedSpace, tuple: &[Vec<f64>], eps: f64) -> Result<NuclearityWitness> {
    nuclearity_witness_with(default_engine(), x, tuple, eps)
}

pub fn nuclearity_witness_with(engine: LpEngine, x: &NormedSpace, tuple: &[Vec<f64>], eps: f64) -> Result<NuclearityWitness> {
    if tuple.is_empty() || tuple.iter().any(|a| a.len() != x.dim()) {
        return Err(Error::Shape("tuple vectors must lie in X".into()));
    }
    let (gamma, rho) = if x.is_linf() {
        (LinearMap::identity(x), LinearMap::identity(x))
    } else {
        let gamma = embed_linf(x);
        let rho = best_retraction(engine, x, &gamma, tuple)?;
        (gamma, rho)
    };
    let k = tuple.len();
    let l1 = l1_space(k)?;
    let a = LinearMap::new(l1, x.clone(), Matrix::from_columns(tuple, x.dim())?)?;
    let round = rho.compose(&gamma)?.compose(&a)?;
    let defect = op_norm_with(engine, &round.sub(&a)?)?;
    let certificate = Certificate::new(
        "nuclearity d(rho.gamma(a), a) <= eps",
        eps,
        defect,
        Witness::MapDistance { left: round, right: a },
    );
    Ok(NuclearityWitness { gamma, rho, defect, certificate })
}

/// `ℓ1^k`, normed by the sign vectors (one of each `±` pair).
pub fn l1_space(k: usize) -> Result<NormedSpace> {
    if k == 0 || k > 12 {
        return Err(Error::Resource(format!("l1 presentation of dimension {k}")));
    }
    let rows: Vec<Vec<f64>> = (0..1usize << (k - 1))
        .map(|s| (0..k).map(|i| if i > 0 && s >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect();
    NormedSpace::from_rows(&rows, &format!("l1_{k}"))
}

/// Contraction `ρ: ℓ∞^N → X` minimizing `max_k ‖ρ γ a_k − a_k‖`. The norm
/// of `ρ` is `max_i Σ_j |(F_X ρ)_{ij}|`.
fn best_retraction(engine: LpEngine, x: &NormedSpace, gamma: &LinearMap, tuple: &[Vec<f64>]) -> Result<LinearMap> {
    let (d, big_n, rows) = (x.dim(), gamma.cod().dim(), x.num_rows());
    let fx = x.norming();
    // Variables: ρ (d·N, free), s (rows·N, ≥ 0), t.
    let nr = d * big_n;
    let ns = rows * big_n;
    let total = nr + ns + 1;
    let mut lp = Lp::new(total);
    for v in nr..total {
        lp.set_nonneg(v);
    }
    for i in 0..rows {
        for j in 0..big_n {
            // (F ρ)_{ij} = Σ_a F_{ia} ρ_{aj}.
            let mut c = vec![0.0; total];
            for a in 0..d {
                c[a * big_n + j] = fx[(i, a)];
            }
            c[nr + i * big_n + j] = -1.0;
            lp.add(c.clone(), Rel::Le, 0.0);
            for a in 0..d {
                c[a * big_n + j] = -fx[(i, a)];
            }
            lp.add(c, Rel::Le, 0.0);
        }
        let mut c = vec![0.0; total];
        for j in 0..big_n {
            c[nr + i * big_n + j] = 1.0;
        }
        lp.add(c, Rel::Le, 1.0);
    }
    for a_k in tuple {
        let ga = gamma.apply(a_k);
        for i in 0..rows {
            // F_i (ρ γ a − a) within ±t.
            let mut c = vec![0.0; total];
            for a in 0..d {
                for j in 0..big_n {
                    c[a * big_n + j] = fx[(i, a)] * ga[j];
                }
            }
            let target = dot(fx.row(i), a_k);
            c[total - 1] = -1.0;
            lp.add(c.clone(), Rel::Le, target);
            for v in c.iter_mut().take(nr) {
                *v = -*v;
            }
            lp.add(c, Rel::Le, -target);
        }
    }
    let mut obj = vec![0.0; total];
    obj[total - 1] = 1.0;
    lp.minimize(obj);
    let sol = lp.solve_with(engine)?;
    let m = Matrix::from_row_major(d, big_n, sol.x[..nr].to_vec())?;
    LinearMap::new(gamma.cod().clone(), x.clone(), m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_net_at_half() {
        let l1 = NormedSpace::linf(1);
        let net = build_morphism_net(&l1, &l1, 0.5, 0).unwrap();
        assert_eq!(net.members.len(), 5);
        let coarse = build_morphism_net(&NormedSpace::l1_plane(), &NormedSpace::linf(2), 1.0, 0).unwrap();
        assert!(coarse.members.iter().any(|m| m.matrix().max_abs() == 0.0));
    }

    #[test]
    fn oversized_nets_report_their_size() {
        let err = build_morphism_net(&NormedSpace::linf(2), &NormedSpace::linf(6), 0.1, 0).unwrap_err();
        assert!(matches!(err, Error::Resource(ref s) if s.contains("grid points")));
    }

    #[test]
    fn depth_one_chain_is_a_single_stage() {
        let c = build_gurarij_chain(1, 12, 0.25, 3).unwrap();
        assert_eq!(c.dims, vec![1]);
        assert!(c.ledger.is_empty());
    }

    #[test]
    fn depth_two_chain_meets_its_line_obligations() {
        let mut cfg = ChainConfig::gurarij(2, 12, 0.5, 1);
        cfg.delta = 0.0;
        let c = build_chain(&cfg).unwrap();
        assert!(!c.ledger.is_empty());
        assert!(c.connective_distortion().unwrap() <= 1e-9);
        for o in &c.ledger {
            assert!(o.residual <= 0.5 + 1e-9, "obligation {} residual {}", o.id, o.residual);
        }
    }

    #[test]
    fn linf_spaces_are_their_own_witness() {
        let w = nuclearity_witness(&NormedSpace::linf(3), &[vec![1.0, 0.5, 0.0]], 0.0).unwrap();
        assert_eq!(w.defect, 0.0);
        assert!(w.certificate.pass);
    }

    #[test]
    fn l1_presentations() {
        let s = l1_space(3).unwrap();
        assert_eq!(s.num_rows(), 4);
        assert_eq!(s.norm(&[1.0, -2.0, 0.5]), 3.5);
    }
}
