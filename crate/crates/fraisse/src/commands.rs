//! The subcommands. Each returns a [`Report`]; configuration and resource
//! problems come back as errors.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fraisse_core::certificate::{Certificate, Witness};
use fraisse_core::function_systems::{
    averaging_map, biface_check, biface_counterexample_search, build_poulsen_chain, coordinate_projection, facial_quotient_check,
    kernel_samples, minimality_map_with, minimality_threshold, unit_samples, StateVector,
};
use fraisse_core::limit_builder::{back_and_forth_with, build_chain_with, certify_extension_with, ChainConfig, StageChain};
use fraisse_core::matrix_states::{
    blocks_for, ell_for, minimal_embedding, positive_net, random_density, MatrixState, MinimalityConfig,
};
use fraisse_core::normed_core::distortion_with;
use fraisse_core::sample::{random_near_embedding, random_plane, rng};
use fraisse_core::universal_maps::{
    build_operator_chain, build_universal_state_chain, check_universal_operator_property, check_universal_projection_property,
    kernel_stage, operator_battery, projection_battery, retraction_defects, unit_probes, ArrowChain, OperatorChainConfig, StateChain,
};
use fraisse_core::{LinearMap, LpEngine, NormedSpace};
use rand::Rng;

use crate::artifacts::RunDir;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub certificates: Vec<(String, Certificate)>,
    /// Checks that failed without producing a certificate.
    pub failed: usize,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn cert(&mut self, name: impl Into<String>, c: Certificate) {
        self.certificates.push((name.into(), c));
    }

    pub fn negatives(&self) -> usize {
        self.certificates.iter().filter(|(_, c)| !c.pass).count() + self.failed
    }

    /// 0 when every certificate passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.negatives() == 0 {
            0
        } else {
            1
        }
    }

    /// Writes every certificate and the summary.
    pub fn persist(&mut self, run: &mut RunDir) -> Result<()> {
        for (name, c) in &self.certificates {
            let p = run.write_json(&format!("certificate-{name}"), c)?;
            let verdict = if c.pass { "pass" } else { "FAIL" };
            self.lines.push(format!(
                "{verdict}  {name}: measured {:.6e} bound {:.6e}  [{}]",
                c.measured,
                c.bound,
                p.file_name().and_then(|n| n.to_str()).unwrap_or("")
            ));
        }
        self.lines.push(format!("{} certificates, {} negative results", self.certificates.len(), self.negatives()));
        run.write_summary(&self.lines)?;
        Ok(())
    }
}

/// A chain together with its content hash.
#[derive(Serialize, Deserialize)]
pub struct ChainFile<T> {
    pub hash: String,
    #[serde(flatten)]
    pub chain: T,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("--{name} must be positive, got {v}");
    }
    Ok(())
}

fn at_least_one(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!("--{name} must be at least 1");
    }
    Ok(())
}

fn connective_certificate(chain: &StageChain, engine: LpEngine) -> Result<Certificate> {
    let parts: Vec<Witness> = chain.connectives.iter().map(|c| Witness::Distortion { map: c.clone() }).collect();
    let witness = Witness::Chained { chain_hash: chain.content_hash(), inner: Box::new(Witness::Max { parts }) };
    let measured = witness.recompute(engine)?;
    Ok(Certificate::with_tolerance("connectives are isometric", 0.0, measured, 1e-9, witness))
}

fn coverage_certificate(chain: &StageChain) -> Certificate {
    let uncovered = chain.uncovered().len() as f64;
    Certificate::with_tolerance(
        "every scheduled obligation is met at the top stage (count of uncovered)",
        0.0,
        uncovered,
        0.0,
        Witness::Chained { chain_hash: chain.content_hash(), inner: Box::new(Witness::Constant { value: uncovered }) },
    )
}

fn chain_lines(report: &mut Report, chain: &StageChain) {
    report.line(format!("chain hash {}", chain.content_hash()));
    report.line(format!("dims {:?}", chain.dims));
    report.line(format!(
        "obligations {} (uncovered {}), bound {:.3}",
        chain.ledger.len(),
        chain.uncovered().len(),
        chain.bound()
    ));
}

pub fn build_gurarij(engine: LpEngine, run: &mut RunDir, depth: usize, dim_cap: usize, resolution: f64, seed: u64) -> Result<Report> {
    at_least_one("depth", depth)?;
    positive("resolution", resolution)?;
    let chain = build_chain_with(engine, &ChainConfig::gurarij(depth, dim_cap, resolution, seed))?;
    let mut r = Report::default();
    chain_lines(&mut r, &chain);
    run.write_json("chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    r.cert("connectives", connective_certificate(&chain, engine)?);
    r.cert("coverage", coverage_certificate(&chain));
    Ok(r)
}

pub fn build_poulsen(engine: LpEngine, run: &mut RunDir, depth: usize, dim_cap: usize, resolution: f64, seed: u64) -> Result<Report> {
    at_least_one("depth", depth)?;
    positive("resolution", resolution)?;
    let chain = build_poulsen_chain(depth, dim_cap, resolution, seed)?;
    let mut r = Report::default();
    chain_lines(&mut r, &chain);
    run.write_json("chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    r.cert("connectives", connective_certificate(&chain, engine)?);
    r.cert("coverage", coverage_certificate(&chain));
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn certify_extension(
    engine: LpEngine,
    run: &mut RunDir,
    depth: usize,
    dim_cap: usize,
    resolution: f64,
    seed: u64,
    battery: usize,
    eps: f64,
) -> Result<Report> {
    at_least_one("battery", battery)?;
    positive("eps", eps)?;
    let chain = build_chain_with(engine, &ChainConfig::gurarij(depth, dim_cap, resolution, seed))?;
    let mut r = Report::default();
    chain_lines(&mut r, &chain);
    run.write_json("chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    if chain.ledger.len() < battery {
        bail!("the chain schedules only {} obligations, fewer than --battery {battery}", chain.ledger.len());
    }
    for o in chain.ledger.iter().take(battery) {
        let c = certify_extension_with(engine, &chain, &o.phi, &o.f, o.stage, chain.delta, eps)?;
        r.line(format!("obligation {} (stage {}): met at stage {}", o.id, o.stage, c.extension.stage));
        r.cert(format!("extension-{}-defect", o.id), c.defect);
        r.cert(format!("extension-{}-distortion", o.id), c.distortion);
    }
    Ok(r)
}

/// Picks a stage of dimension at least `need`.
fn stage_with<R: Rng>(r: &mut R, chain: &StageChain, need: usize) -> Result<usize> {
    let ok: Vec<usize> = (0..chain.depth()).filter(|&k| chain.dims[k] >= need).collect();
    if ok.is_empty() {
        bail!("no stage has dimension {need}");
    }
    Ok(ok[r.gen_range(0..ok.len())])
}

/// Random planes and pairs of `δ`-embeddings into stages of the chain.
pub fn homogeneity_pairs(chain: &StageChain, pairs: usize, delta: f64, seed: u64) -> Result<Vec<(LinearMap, usize, LinearMap, usize)>> {
    let mut g = rng(seed);
    let mut out = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let rows = g.gen_range(2..=4);
        let e = random_plane(&mut g, rows);
        let need = e.distinct_rows().len();
        let p = stage_with(&mut g, chain, need)?;
        let q = stage_with(&mut g, chain, need)?;
        let phi = random_near_embedding(&mut g, &e, chain.dims[p], delta)?;
        let f = random_near_embedding(&mut g, &e, chain.dims[q], delta)?;
        out.push((phi, p, f, q));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn homogeneity(
    engine: LpEngine,
    run: &mut RunDir,
    depth: usize,
    dim_cap: usize,
    resolution: f64,
    seed: u64,
    pairs: usize,
    rounds: usize,
    delta: f64,
) -> Result<Report> {
    at_least_one("pairs", pairs)?;
    at_least_one("rounds", rounds)?;
    positive("delta", delta)?;
    let chain = build_chain_with(engine, &ChainConfig::gurarij(depth, dim_cap, resolution, seed))?;
    let mut r = Report::default();
    chain_lines(&mut r, &chain);
    run.write_json("chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    for (k, (phi, p, f, q)) in homogeneity_pairs(&chain, pairs, delta, seed ^ 0x5eed)?.into_iter().enumerate() {
        let b = back_and_forth_with(engine, &chain, &phi, p, &f, q, delta, rounds)?;
        r.line(format!("pair {k}: stages {p}/{q}, trace {:?}", b.trace.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()));
        r.cert(format!("homogeneity-{k}"), b.certificate);
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn universal_op(
    run: &mut RunDir,
    depth: usize,
    dom_cap: usize,
    cod_cap: usize,
    seed: u64,
    battery: usize,
    eps: f64,
    probes: usize,
) -> Result<Report> {
    at_least_one("depth", depth)?;
    positive("eps", eps)?;
    let chain = build_operator_chain(&OperatorChainConfig::new(depth, dom_cap, cod_cap, seed))?;
    let mut r = Report::default();
    r.line(format!("arrow chain hash {}", chain.content_hash()));
    r.line(format!("domain dims {:?}, codomain dims {:?}", chain.dom_chain.dims, chain.cod_chain.dims));
    let undischarged = chain.ledger.iter().filter(|o| o.discharged_at.is_none()).count();
    r.line(format!("scheduled arrows {} (undischarged {undischarged})", chain.ledger.len()));
    run.write_json("arrow-chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    for (k, item) in operator_battery(&chain, battery, seed ^ 0xba77)?.iter().enumerate() {
        let c = check_universal_operator_property(&chain, item, eps)?;
        r.line(format!("item {k}: met at stage {}", c.stage));
        r.cert(format!("operator-{k}"), c.certificate);
    }
    surjectivity_certificates(&mut r, &chain, probes, seed)?;
    let top = chain.intertwiners.last().expect("nonempty");
    let ker = kernel_stage(top, 1e-9)?;
    r.line(format!("kernel of the top stage: dimension {}", ker.basis.cols()));
    r.cert("kernel", ker.certificate);
    Ok(r)
}

/// One certificate per stage: the defect is at most that of the stage
/// before.
pub fn surjectivity_certificates(r: &mut Report, chain: &ArrowChain, probes: usize, seed: u64) -> Result<Vec<f64>> {
    let base = unit_probes(&chain.cod_chain.stage(0), probes, seed ^ 0x9b0b);
    let mut trace = Vec::new();
    for (k, t) in chain.intertwiners.iter().enumerate() {
        let j = chain.cod_chain.embedding(0, k)?;
        let pushed: Vec<Vec<f64>> = base.iter().map(|p| j.apply(p)).collect();
        let witness = Witness::Surjectivity { map: t.clone(), probes: pushed };
        let v = witness.recompute(fraisse_core::lp::default_engine())?;
        let bound = trace.last().copied().unwrap_or(1.0);
        r.cert(format!("surjectivity-{k}"), Certificate::new("surjectivity defect does not increase", bound, v, witness));
        trace.push(v);
    }
    r.line(format!("surjectivity trace {trace:?}"));
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
pub fn universal_state(run: &mut RunDir, d: usize, depth: usize, cap: usize, seed: u64, battery: usize, eps: f64) -> Result<Report> {
    at_least_one("d", d)?;
    at_least_one("depth", depth)?;
    positive("eps", eps)?;
    let chain: StateChain = build_universal_state_chain(d, depth, cap, seed)?;
    let mut r = Report::default();
    r.line(format!("state chain hash {}", chain.content_hash()));
    r.line(format!("dims {:?}", chain.chain.dims));
    run.write_json("state-chain", &ChainFile { hash: chain.content_hash(), chain: &chain })?;
    for (k, item) in projection_battery(&chain, battery, seed ^ 0xba77)?.iter().enumerate() {
        let c = check_universal_projection_property(&chain, item, eps)?;
        r.line(format!("item {k}: met at stage {}", c.stage));
        r.cert(format!("projection-{k}"), c.certificate);
    }
    let probes = unit_probes(&NormedSpace::linf(d), 20, seed);
    r.line(format!("retraction defects {:?}", retraction_defects(&chain, &probes)?));
    r.line(format!("state compatibility {:?}", chain.compatibility));
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn minimality(engine: LpEngine, run: &mut RunDir, d: usize, eps: f64, trials: usize, seed: u64, uniform: bool, m: Option<usize>) -> Result<Report> {
    at_least_one("d", d)?;
    at_least_one("trials", trials)?;
    positive("eps", eps)?;
    let m = m.unwrap_or_else(|| minimality_threshold(d, eps));
    let mut g = rng(seed);
    let mut r = Report::default();
    r.line(format!("d = {d}, eps = {eps}, m = {m} (threshold {})", minimality_threshold(d, eps)));
    for k in 0..trials {
        let (s, t) = if uniform {
            (StateVector::uniform(d), StateVector::uniform(m))
        } else {
            (StateVector::random(&mut g, d), StateVector::random(&mut g, m))
        };
        let map = minimality_map_with(engine, d, eps, &s, &t)?;
        let unit_gap = map.phi.apply(&vec![1.0; d]).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        let dist = distortion_with(engine, &map.phi)?;
        r.line(format!("trial {k}: defect {:.6e}, slots {:?}, unit gap {unit_gap:e}, distortion {dist:e}", map.defect, map.slots));
        if k == 0 {
            run.write_json("minimality-map", &map)?;
        }
        r.cert(format!("minimality-{k}"), map.certificate);
        r.cert(
            format!("minimality-{k}-isometric"),
            Certificate::with_tolerance("phi is isometric", 0.0, dist, 1e-12, Witness::Distortion { map: map.phi.clone() }),
        );
        if unit_gap != 0.0 {
            bail!("phi is not unital (gap {unit_gap})");
        }
    }
    Ok(r)
}

pub fn matrix_minimality(run: &mut RunDir, d: usize, eps: f64, seed: u64, samples: usize) -> Result<Report> {
    at_least_one("d", d)?;
    positive("eps", eps)?;
    let cfg = MinimalityConfig { samples, seed, ..MinimalityConfig::default() };
    let net = positive_net(d, &cfg.levels)?;
    let ell = ell_for(eps)?;
    let k = blocks_for(eps, net.len())?;
    let mut g = rng(seed);
    let (s, t) = matrix_instance(&mut g, d, k, ell)?;
    let e = minimal_embedding(d, eps, &s, &t, &cfg)?;
    let mut r = Report::default();
    r.line(format!("d = {d}, l = {ell}, |P| = {}, k = {k}, dimension {}", net.len(), k * d));
    r.line(format!("light block {} (recheck {})", e.light_block, e.light_recheck));
    r.line(format!("|a_light|_1 = {:.6e}, trace gap {:.6e}, termwise bound {:.6e}", e.light_norm, e.trace_gap, 8.0 / ell as f64));
    r.line(format!("unital {}, self-adjoint {}, isometry gap {:e}", e.unital, e.self_adjoint, e.isometry_gap));
    if !(e.light_recheck && e.unital && e.self_adjoint && e.isometry_gap <= 1e-10) {
        bail!("structural checks failed");
    }
    let termwise = e.light_norm.max(e.trace_gap);
    r.cert(
        "termwise",
        Certificate::with_tolerance("light block norm and trace gap <= 8/l", 8.0 / ell as f64, termwise, 0.0, Witness::Constant { value: termwise }),
    );
    run.write_json("states", &(&s, &t))?;
    r.cert("matrix-minimality", e.certificate);
    Ok(r)
}

/// A random `s` on `M_{kd}` with most of its mass on the first `ℓ − 1`
/// blocks, and a random `t` on `M_d`.
pub fn matrix_instance<R: Rng>(g: &mut R, d: usize, k: usize, ell: usize) -> Result<(MatrixState, MatrixState)> {
    let heavy = ell.saturating_sub(1).min(k - 1);
    let tau = 1.0 / (2.0 * ell as f64);
    let mut w = vec![0.0; k * d];
    for (i, wi) in w.iter_mut().enumerate() {
        let block = i / d;
        let mass = if block < heavy { (1.0 - tau) / (heavy * d) as f64 } else { tau / ((k - heavy) * d) as f64 };
        *wi = mass.sqrt();
    }
    let rank = 2 * d;
    let s = MatrixState::new(random_density(g, k * d, rank, Some(&w))?);
    let t = MatrixState::new(random_density(g, d, d, None)?);
    Ok((s, t))
}

pub fn check_face(run: &mut RunDir, n: usize, k: usize, samples: usize, eps: f64, seed: u64) -> Result<Report> {
    if k == 0 || k >= n {
        bail!("need 0 < k < n");
    }
    let p = coordinate_projection(n, k);
    let us = kernel_samples(&mut rng(seed), &p, samples);
    let c = facial_quotient_check(&p, &us, eps)?;
    run.write_json("map", &p)?;
    let mut r = Report::default();
    r.line(format!("coordinate projection l_inf^{n} -> l_inf^{k}, {samples} kernel samples"));
    r.cert("facial", c);
    Ok(r)
}

pub fn check_biface(run: &mut RunDir, n: usize, k: usize, samples: usize, eps: f64, seed: u64, averaging: bool) -> Result<Report> {
    let mut r = Report::default();
    let c = if averaging {
        let p = averaging_map();
        let u = vec![1.0, -1.0];
        let (y, found) = biface_counterexample_search(&p, &u, 256)?;
        r.line(format!("averaging map on l_inf^2; searched y = {y:?} needs eps {found:.6}"));
        run.write_json("map", &p)?;
        biface_check(&p, &[y], &[u], eps)?
    } else {
        if k == 0 || k >= n {
            bail!("need 0 < k < n");
        }
        let p = coordinate_projection(n, k);
        let mut g = rng(seed);
        let us = kernel_samples(&mut g, &p, samples);
        let ys = unit_samples(&mut g, p.dom(), samples);
        r.line(format!("coordinate projection l_inf^{n} -> l_inf^{k}, {samples} samples"));
        run.write_json("map", &p)?;
        biface_check(&p, &ys, &us, eps)?
    };
    r.cert("biface", c);
    Ok(r)
}

/// Any of the chain kinds, for checking a certificate's chain reference.
fn chain_hash_of(text: &str) -> Result<String> {
    if let Ok(c) = serde_json::from_str::<StageChain>(text) {
        return Ok(c.content_hash());
    }
    if let Ok(c) = serde_json::from_str::<ArrowChain>(text) {
        return Ok(c.content_hash());
    }
    if let Ok(c) = serde_json::from_str::<StateChain>(text) {
        return Ok(c.content_hash());
    }
    bail!("not a chain file")
}

pub fn verify(engine: LpEngine, certificate: &Path, chain: Option<&Path>) -> Result<Report> {
    let text = fs::read_to_string(certificate).with_context(|| format!("reading {}", certificate.display()))?;
    let cert: Certificate = serde_json::from_str(&text).context("parsing the certificate")?;
    let v = cert.verify(engine)?;
    let mut r = Report::default();
    r.line(format!("claim: {}", cert.claim));
    r.line(format!("stored {:.9e}, recomputed {:.9e}, bound {:.9e}", cert.measured, v.recomputed, cert.bound));
    r.line(format!("inputs hash {}, value {}, verdict {}", ok(v.hash_ok), ok(v.agrees), ok(v.pass == cert.pass)));
    let mut consistent = v.consistent;
    if let Some(path) = chain {
        let Witness::Chained { chain_hash, .. } = &cert.witness else {
            bail!("the certificate does not reference a chain");
        };
        let ctext = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let h = chain_hash_of(&ctext)?;
        r.line(format!("chain hash {}", ok(&h == chain_hash)));
        consistent &= &h == chain_hash;
    }
    let pass = consistent && v.pass;
    r.line(if pass { "verified: pass" } else { "verified: FAIL" });
    if !pass {
        r.failed += 1;
    }
    Ok(r)
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISMATCH"
    }
}
