//! Acceptance battery. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use fraisse::commands::{homogeneity_pairs, matrix_instance};
use fraisse_core::amalgamation::{arrow_pushout, nap_amalgamate, ArrowMap};
use fraisse_core::function_systems::{
    averaging_map, biface_check, biface_counterexample_search, coordinate_projection, facial_quotient_check, kernel_samples,
    minimality_map, minimality_threshold, unit_samples, StateVector,
};
use fraisse_core::limit_builder::{back_and_forth, build_gurarij_chain, certify_extension};
use fraisse_core::lp::LpEngine;
use fraisse_core::matrix_states::{blocks_for, ell_for, minimal_embedding, positive_net, MinimalityConfig};
use fraisse_core::normed_core::{
    agreement_defect, distortion, distortion_with, extend_morphism, hahn_banach_extend_with, op_norm_with, LinearMap, Modulus,
    NormedSpace,
};
use fraisse_core::sample::{
    random_contraction, random_isometry, random_near_embedding, random_plane, random_space, rng, uniform,
};
use fraisse_core::universal_maps::{
    build_operator_chain, check_universal_operator_property, operator_battery, surjectivity_trace, unit_probes,
    OperatorChainConfig,
};

/// Hash of `build_gurarij_chain(5, 12, 0.25, 7)`, frozen from a reference run.
const GURARIJ_HASH: &str = "654eaf59fe8739c807795fdde5e15f880c7af31d4e2c18e17360a40f83fc5cde";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let spent = start.elapsed();
    if spent > limit {
        o.pass = false;
    }
    o.detail.push_str(&format!("; {:.2}s (limit {}s)", spent.as_secs_f64(), limit.as_secs()));
    o
}

// --- criterion 1: vertex enumeration on planes --------------------------

fn vertices(s: &NormedSpace) -> Vec<[f64; 2]> {
    let f = s.norming();
    let mut out = Vec::new();
    for a in 0..f.rows() {
        for b in a + 1..f.rows() {
            let (p, q) = (f.row(a), f.row(b));
            let det = p[0] * q[1] - p[1] * q[0];
            if det.abs() < 1e-12 {
                continue;
            }
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let x = [(s1 * q[1] - s2 * p[1]) / det, (p[0] * s2 - q[0] * s1) / det];
                    if s.norm(&x) <= 1.0 + 1e-9 {
                        out.push(x);
                    }
                }
            }
        }
    }
    out
}

fn oracle_op_norm(t: &LinearMap) -> f64 {
    vertices(t.dom()).iter().map(|x| t.cod().norm(&t.apply(x))).fold(0.0, f64::max)
}

/// Minimum of `‖Tx‖` on the unit polygon, scanning edge endpoints and the
/// breakpoints of the piecewise linear norm along each edge.
fn oracle_distortion(t: &LinearMap) -> f64 {
    let verts = vertices(t.dom());
    let pulled = t.pulled_rows();
    let mut lines: Vec<[f64; 2]> = Vec::new();
    for j in 0..pulled.rows() {
        let a = [pulled[(j, 0)], pulled[(j, 1)]];
        lines.push(a);
        for k in j + 1..pulled.rows() {
            let b = [pulled[(k, 0)], pulled[(k, 1)]];
            lines.push([a[0] - b[0], a[1] - b[1]]);
            lines.push([a[0] + b[0], a[1] + b[1]]);
        }
    }
    let mut best = f64::INFINITY;
    let mut visit = |x: [f64; 2]| {
        let n = t.dom().norm(&x);
        if n > 1e-12 {
            best = best.min(t.cod().norm(&t.apply(&[x[0] / n, x[1] / n])));
        }
    };
    for (i, p) in verts.iter().enumerate() {
        for q in &verts[i + 1..] {
            visit(*p);
            for l in &lines {
                let d = l[0] * (q[0] - p[0]) + l[1] * (q[1] - p[1]);
                if d.abs() < 1e-15 {
                    continue;
                }
                let s = -(l[0] * p[0] + l[1] * p[1]) / d;
                if (0.0..=1.0).contains(&s) {
                    visit([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
                }
            }
        }
    }
    (2.0 * (1.0 - best)).max(0.0)
}

fn oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-7;
    let mut g = rng(101);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let x = random_plane(&mut g, 2 + case % 7);
        let y = random_plane(&mut g, 2 + (case / 7) % 7);
        let scale = uniform(&mut g, 0.3, 1.0);
        let t = random_contraction(&mut g, &x, &y, scale).unwrap();
        let n = op_norm_with(LpEngine::Float, &t).unwrap();
        let d = distortion_with(LpEngine::Float, &t).unwrap();
        worst = worst.max((n - oracle_op_norm(&t)).abs()).max((d - oracle_distortion(&t)).abs());
    }
    outcome(worst <= TOL, format!("200 planes, worst deviation {worst:.2e} (tol {TOL:e})"))
}

// --- criterion 2 ---------------------------------------------------------

fn nap_bound() -> Outcome {
    const TOL: f64 = 1e-7;
    const ISO_TOL: f64 = 1e-9;
    let mut g = rng(202);
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_iso: f64 = 0.0;
    for case in 0..100 {
        let delta = [0.0, 0.05, 0.1][case % 3];
        let dim = 1 + case % 2;
        let rows = g.gen_range(dim.max(2)..=4);
        let e = if dim == 2 { random_plane(&mut g, rows) } else { random_space(&mut g, 1, rows) };
        let need = e.distinct_rows().len();
        let nx = g.gen_range(need..=4);
        let ny = g.gen_range(need..=4);
        let fx = random_near_embedding(&mut g, &e, nx, delta).unwrap();
        let fy = random_near_embedding(&mut g, &e, ny, delta).unwrap();
        let r = nap_amalgamate(&e, &fx, &fy, delta).unwrap();
        worst_slack = worst_slack.max(r.defect - Modulus::Banach.eval(delta));
        worst_iso = worst_iso.max(distortion(&r.i).unwrap()).max(distortion(&r.j).unwrap());
    }
    outcome(
        worst_slack <= TOL && worst_iso <= ISO_TOL,
        format!("100 instances, max defect - modulus {worst_slack:.2e} (tol {TOL:e}), max distortion of i, j {worst_iso:.2e} (tol {ISO_TOL:e})"),
    )
}

// --- criterion 3 ---------------------------------------------------------

fn arrow_pushout_bound() -> Outcome {
    const DELTA: f64 = 0.05;
    const TOL: f64 = 1e-7;
    let mut g = rng(303);
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_square: f64 = 0.0;
    for _ in 0..50 {
        let rows = g.gen_range(2..=4);
        let x0 = random_plane(&mut g, rows);
        let x1 = NormedSpace::linf(2);
        let scale = uniform(&mut g, 0.3, 1.0);
        let t = random_contraction(&mut g, &x0, &x1, scale).unwrap();
        let n0 = x0.distinct_rows().len();
        let (a0, a1, b0, b1) = (n0 + g.gen_range(0..2), 2 + g.gen_range(0..2), n0 + g.gen_range(0..2), 2 + g.gen_range(0..2));
        let phi0 = random_near_embedding(&mut g, &x0, a0, DELTA).unwrap();
        let phi1 = random_near_embedding(&mut g, &x1, a1, DELTA).unwrap();
        let t_hat = extend_morphism(&phi0, &phi1.compose(&t).unwrap(), DELTA).unwrap();
        let f0 = random_near_embedding(&mut g, &x0, b0, DELTA).unwrap();
        let f1 = random_near_embedding(&mut g, &x1, b1, DELTA).unwrap();
        let s = extend_morphism(&f0, &f1.compose(&t).unwrap(), DELTA).unwrap();
        let phi = ArrowMap { p0: phi0, p1: phi1 };
        let f = ArrowMap { p0: f0, p1: f1 };
        let r = arrow_pushout(&t, &t_hat, &s, &phi, &f, DELTA).unwrap();
        worst_slack = worst_slack.max(r.defect - (Modulus::Banach.eval(DELTA) + 2.0 * DELTA));
        worst_square = worst_square.max(r.square_defect);
    }
    outcome(
        worst_slack <= TOL,
        format!("50 instances, max defect - (modulus + 2 delta) {worst_slack:.2e} (tol {TOL:e}), max square defect {worst_square:.2e}"),
    )
}

// --- criterion 4 ---------------------------------------------------------

fn extension_certification() -> Outcome {
    const EXTRA: f64 = 0.1;
    const BATTERY: usize = 24;
    let chain = build_gurarij_chain(5, 12, 0.25, 7).unwrap();
    let again = build_gurarij_chain(5, 12, 0.25, 7).unwrap();
    let hash = chain.content_hash();
    let same = hash == again.content_hash() && hash == GURARIJ_HASH;
    let bound = Modulus::Banach.eval(chain.delta) + EXTRA;
    let mut worst: f64 = 0.0;
    let mut met = 0;
    for o in chain.ledger.iter().take(BATTERY) {
        let c = certify_extension(&chain, &o.phi, &o.f, o.stage, chain.delta, EXTRA).unwrap();
        worst = worst.max(c.defect.measured);
        if c.defect.measured <= bound && c.defect.pass {
            met += 1;
        }
    }
    let n = chain.ledger.len().min(BATTERY);
    outcome(
        same && n >= 20 && met == n,
        format!("hash reproducible {same}, {met}/{n} obligations met, worst defect {worst:.4} (bound {bound:.3})"),
    )
}

// --- criterion 5 ---------------------------------------------------------

fn back_and_forth_convergence() -> Outcome {
    const DELTA: f64 = 0.05;
    const BOUND: f64 = 0.05 + 0.1;
    const MONO_TOL: f64 = 1e-9;
    let chain = build_gurarij_chain(5, 12, 0.25, 7).unwrap();
    let pairs = homogeneity_pairs(&chain, 20, DELTA, 7).unwrap();
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for (phi, p, f, q) in &pairs {
        let b = back_and_forth(&chain, phi, *p, f, *q, DELTA, 8).unwrap();
        let last = *b.trace.last().unwrap();
        let monotone = b.trace.windows(2).skip(1).all(|w| w[1] <= w[0] + MONO_TOL);
        worst = worst.max(last);
        if b.trace.len() <= 8 && last <= BOUND && monotone {
            ok += 1;
        }
    }
    outcome(ok == pairs.len(), format!("{ok}/{} pairs, worst final defect {worst:.4} (bound {BOUND})", pairs.len()))
}

// --- criterion 6 ---------------------------------------------------------

fn function_system_minimality() -> Outcome {
    const EPS: f64 = 0.5;
    let m = minimality_threshold(2, EPS);
    let mut g = rng(606);
    let mut worst: f64 = 0.0;
    let mut exact_maps = true;
    for _ in 0..100 {
        let s = StateVector::random(&mut g, 2);
        let t = StateVector::random(&mut g, m);
        let map = minimality_map(2, EPS, &s, &t).unwrap();
        let unital = map.phi.apply(&[1.0, 1.0]).iter().all(|&v| v == 1.0);
        let isometric = distortion_with(LpEngine::Exact, &map.phi).unwrap() == 0.0;
        exact_maps &= unital && isometric;
        worst = worst.max(map.certificate.witness.recompute(LpEngine::Exact).unwrap());
    }
    let closed = minimality_map(2, 1.0, &StateVector::uniform(2), &StateVector::uniform(6)).unwrap();
    let closed_defect = closed.certificate.witness.recompute(LpEngine::Exact).unwrap();
    outcome(
        m == 10 && exact_maps && worst <= EPS && closed_defect == 0.0,
        format!(
            "m = {m}, maps exactly unital isometric {exact_maps}, worst exact defect {worst:.4} (bound {EPS}), closed form {closed_defect:e}"
        ),
    )
}

// --- criterion 7 ---------------------------------------------------------

fn matrix_minimality() -> Outcome {
    const EPS: f64 = 1.0;
    let cfg = MinimalityConfig { samples: 1000, seed: 7, ..MinimalityConfig::default() };
    let net = positive_net(2, &cfg.levels).unwrap();
    let ell = ell_for(EPS).unwrap();
    let k = blocks_for(EPS, net.len()).unwrap();
    let (s, t) = matrix_instance(&mut rng(707), 2, k, ell).unwrap();
    let e = minimal_embedding(2, EPS, &s, &t, &cfg).unwrap();
    let term = 8.0 / ell as f64;
    let shape = ell == 16 && net.len() <= 12 && k == ell * net.len() + 1;
    let sampled = e.certificate.measured;
    outcome(
        shape && e.light_recheck && e.light_norm <= term && e.trace_gap <= term && sampled <= 1.0 && e.certificate.pass,
        format!(
            "l = {ell}, |P| = {}, k = {k}, light block {} recheck {}, |a| {:.4}, trace gap {:.4} (bound {term}), sampled defect {sampled:.4} (bound 1.0)",
            net.len(),
            e.light_block,
            e.light_recheck,
            e.light_norm,
            e.trace_gap
        ),
    )
}

// --- criterion 8 ---------------------------------------------------------

fn face_checkers() -> Outcome {
    let mut g = rng(808);
    let p = coordinate_projection(3, 1);
    let us = kernel_samples(&mut g, &p, 20);
    let facial = facial_quotient_check(&p, &us, 1e-6).unwrap();
    let q = coordinate_projection(4, 2);
    let us = kernel_samples(&mut g, &q, 20);
    let ys = unit_samples(&mut g, q.dom(), 20);
    let biface = biface_check(&q, &ys, &us, 1e-6).unwrap();
    let avg = averaging_map();
    let u = vec![1.0, -1.0];
    let (y, needed) = biface_counterexample_search(&avg, &u, 256).unwrap();
    let negative = biface_check(&avg, &[y], &[u], 0.1).unwrap();
    outcome(
        facial.pass && biface.pass && !negative.pass,
        format!(
            "facial {} ({:.1e}), biface {} ({:.1e}), averaging map rejected {} (needs eps {needed:.3})",
            facial.pass, facial.measured, biface.pass, biface.measured, !negative.pass
        ),
    )
}

// --- criterion 9 ---------------------------------------------------------

fn universal_operator() -> Outcome {
    const EPS: f64 = 0.2;
    const MONO_TOL: f64 = 1e-9;
    let chain = build_operator_chain(&OperatorChainConfig::new(4, 32, 16, 7)).unwrap();
    let battery = operator_battery(&chain, 10, 7 ^ 0xba77).unwrap();
    let mut met = 0;
    for item in &battery {
        if check_universal_operator_property(&chain, item, EPS).unwrap().certificate.pass {
            met += 1;
        }
    }
    let probes = unit_probes(&chain.cod_chain.stage(0), 20, 9);
    let trace = surjectivity_trace(&chain, &probes).unwrap();
    let monotone = trace.windows(2).all(|w| w[1] <= w[0] + MONO_TOL);
    outcome(
        battery.len() == 10 && met == 10 && monotone,
        format!("{met}/{} items at eps {EPS}, surjectivity trace {trace:.3?}", battery.len()),
    )
}

// --- criterion 10 --------------------------------------------------------

fn hahn_banach() -> Outcome {
    const TOL: f64 = 1e-9;
    const ENGINE_TOL: f64 = 1e-7;
    let mut g = rng(1010);
    let (mut agree, mut excess, mut engines): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
    for case in 0..200 {
        let dim = 1 + case % 2;
        let rows = g.gen_range(dim.max(2)..=4);
        let e = random_space(&mut g, dim, rows);
        let n = e.distinct_rows().len() + g.gen_range(0..3);
        let j = random_isometry(&mut g, &e, n).unwrap();
        let h: Vec<f64> = (0..dim).map(|_| uniform(&mut g, -1.0, 1.0)).collect();
        let c = e.dual_norm(&h).unwrap() * uniform(&mut g, 1.0, 1.5);
        let float = hahn_banach_extend_with(LpEngine::Float, &j, &h, c).unwrap();
        let exact = hahn_banach_extend_with(LpEngine::Exact, &j, &h, c).unwrap();
        agree = agree.max(agreement_defect(&j, &h, &float.functional));
        excess = excess.max(float.coefficient_sum - c);
        engines = engines.max((float.coefficient_sum - exact.coefficient_sum).abs());
    }
    outcome(
        agree <= TOL && excess <= TOL && engines <= ENGINE_TOL,
        format!("200 instances, agreement {agree:.2e}, sum - c {excess:.2e} (tol {TOL:e}), float vs exact {engines:.2e} (tol {ENGINE_TOL:e})"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("NAP bound", Duration::from_secs(60), nap_bound),
        ("arrow pushout", Duration::from_secs(600), arrow_pushout_bound),
        ("extension certification", Duration::from_secs(600), extension_certification),
        ("back-and-forth", Duration::from_secs(600), back_and_forth_convergence),
        ("function-system minimality", Duration::from_secs(600), function_system_minimality),
        ("matrix minimality", Duration::from_secs(60), matrix_minimality),
        ("face/biface checkers", Duration::from_secs(600), face_checkers),
        ("universal operator", Duration::from_secs(600), universal_operator),
        ("Hahn-Banach", Duration::from_secs(600), hahn_banach),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.into_iter().enumerate() {
        let o = timed(limit, run);
        println!("criterion {:>2} {name}: {} ({})", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
