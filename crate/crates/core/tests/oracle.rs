//! LP-based norms against brute-force vertex enumeration on planes.

use fraisse_core::linalg::Matrix;
use fraisse_core::lp::LpEngine;
use fraisse_core::normed_core::{distortion_with, op_norm_with, LinearMap, NormedSpace};
use fraisse_core::sample::{random_contraction, random_plane, rng, uniform};

/// Vertices of `{x : |f_i x| ≤ 1}` in the plane.
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

/// `‖Tx‖` is convex, so its maximum over the polygon is at a vertex.
fn oracle_op_norm(t: &LinearMap) -> f64 {
    vertices(t.dom()).iter().map(|x| t.cod().norm(&t.apply(x))).fold(0.0, f64::max)
}

/// `I(T) = 2(1 − min_{‖x‖=1} ‖Tx‖)`. On each edge of the polygon the
/// minimum of the piecewise linear `‖Tx‖` sits at an endpoint, at a zero
/// of some pulled row, or where two pulled rows agree in absolute value.
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
            let y = [x[0] / n, x[1] / n];
            best = best.min(t.cod().norm(&t.apply(&y)));
        }
    };
    for (i, p) in verts.iter().enumerate() {
        for q in &verts[i + 1..] {
            visit(*p);
            // Points p + s(q − p) with ℓ·(p + s(q − p)) = 0.
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

fn hexagon() -> NormedSpace {
    let h = 3f64.sqrt() / 2.0;
    NormedSpace::from_rows(&[vec![1.0, 0.0], vec![0.5, h], vec![-0.5, h]], "hexagon").unwrap()
}

#[test]
fn frozen_hexagon_values() {
    // Values from an independent vertex scan and a 2·10^6-point angular
    // grid.
    let m = Matrix::from_rows(&[vec![0.6, -0.3], vec![0.2, 0.5]], 2).unwrap();
    let t = LinearMap::new(hexagon(), NormedSpace::linf(2), m).unwrap();
    for engine in [LpEngine::Float, LpEngine::Exact] {
        assert!((op_norm_with(engine, &t).unwrap() - 0.773_205_080_756_887_8).abs() < 1e-12);
        assert!((distortion_with(engine, &t).unwrap() - 1.1).abs() < 1e-9);
    }
    assert!((oracle_distortion(&t) - 1.1).abs() < 1e-12);
}

#[test]
fn random_planes_match_vertex_enumeration() {
    let mut r = rng(20_241);
    for case in 0..200 {
        let rows = 2 + case % 7;
        let x = random_plane(&mut r, rows);
        let y = random_plane(&mut r, 2 + (case / 7) % 7);
        let scale = uniform(&mut r, 0.3, 1.0);
        let t = random_contraction(&mut r, &x, &y, scale).unwrap();
        let (on, od) = (oracle_op_norm(&t), oracle_distortion(&t));
        let n = op_norm_with(LpEngine::Float, &t).unwrap();
        let d = distortion_with(LpEngine::Float, &t).unwrap();
        assert!((n - on).abs() <= 1e-7, "case {case}: op_norm {n} vs {on}");
        assert!((d - od).abs() <= 1e-7, "case {case}: distortion {d} vs {od}");
    }
}
