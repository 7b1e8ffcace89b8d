use proptest::prelude::*;
use rand::Rng;

use fraisse_core::amalgamation::nap_amalgamate;
use fraisse_core::function_systems::{minimality_map, minimality_threshold, StateVector};
use fraisse_core::lp::LpEngine;
use fraisse_core::matrix_states::{block_compress, random_density, CMatrix};
use fraisse_core::normed_core::{
    agreement_defect, distortion, extend_morphism, hahn_banach_extend, map_distance, op_norm, NormedSpace,
};
use fraisse_core::real::{format_real, parse_real};
use fraisse_core::sample::{random_contraction, random_isometry, random_near_embedding, random_space, rng, uniform};
use fraisse_core::{Certificate, Witness};

const TOL: f64 = 1e-7;

fn space(g: &mut impl Rng, dim: usize) -> NormedSpace {
    let rows = g.gen_range(dim.max(2)..=dim + 3);
    random_space(g, dim, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn op_norm_is_submultiplicative(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let mut g = rng(seed);
        let (x, y, z) = (space(&mut g, a), space(&mut g, b), space(&mut g, c));
        let t = random_contraction(&mut g, &x, &y, 1.0).unwrap();
        let s = random_contraction(&mut g, &y, &z, 1.0).unwrap();
        let st = op_norm(&s.compose(&t).unwrap()).unwrap();
        prop_assert!(st <= op_norm(&s).unwrap() * op_norm(&t).unwrap() + TOL);
    }

    #[test]
    fn distortion_is_subadditive_under_composition(seed in any::<u64>(), a in 1usize..3) {
        let mut g = rng(seed);
        let x = space(&mut g, a);
        let n = x.distinct_rows().len();
        let t = random_near_embedding(&mut g, &x, n, 0.2).unwrap();
        let m = n + g.gen_range(0..2);
        let s = random_near_embedding(&mut g, t.cod(), m, 0.2).unwrap();
        let st = distortion(&s.compose(&t).unwrap()).unwrap();
        prop_assert!(st <= distortion(&s).unwrap() + distortion(&t).unwrap() + TOL);
    }

    #[test]
    fn hahn_banach_extension_agrees_and_keeps_norm(seed in any::<u64>(), a in 1usize..4) {
        let mut g = rng(seed);
        let e = space(&mut g, a);
        let n = e.distinct_rows().len() + g.gen_range(0..3);
        let j = random_isometry(&mut g, &e, n).unwrap();
        let h: Vec<f64> = (0..a).map(|_| uniform(&mut g, -2.0, 2.0)).collect();
        let c = e.dual_norm(&h).unwrap();
        let ext = hahn_banach_extend(&j, &h, c).unwrap();
        prop_assert!(agreement_defect(&j, &h, &ext.functional) <= 1e-9);
        prop_assert!(ext.coefficient_sum <= c + 1e-9);
        prop_assert!(ext.coefficient_sum >= c - 1e-9);
    }

    #[test]
    fn extended_morphisms_stay_within_delta(seed in any::<u64>(), a in 1usize..3, delta in 0.0f64..0.3) {
        let mut g = rng(seed);
        let x = space(&mut g, a);
        let n = x.distinct_rows().len();
        let phi = random_near_embedding(&mut g, &x, n + 1, delta).unwrap();
        let f = random_contraction(&mut g, &x, &NormedSpace::linf(3), 1.0).unwrap();
        let h = extend_morphism(&phi, &f, delta).unwrap();
        prop_assert!(op_norm(&h).unwrap() <= 1.0 + TOL);
        prop_assert!(map_distance(&h.compose(&phi).unwrap(), &f).unwrap() <= delta + TOL);
    }

    #[test]
    fn amalgams_embed_isometrically(seed in any::<u64>(), delta in 0.0f64..0.2) {
        let mut g = rng(seed);
        let e = space(&mut g, 2);
        let n = e.distinct_rows().len();
        let fx = random_near_embedding(&mut g, &e, n, delta).unwrap();
        let fy = random_near_embedding(&mut g, &e, n + 1, delta).unwrap();
        let r = nap_amalgamate(&e, &fx, &fy, delta).unwrap();
        prop_assert!(r.defect <= delta + TOL);
        prop_assert!(distortion(&r.i).unwrap() <= 1e-9);
        prop_assert!(distortion(&r.j).unwrap() <= 1e-9);
    }

    #[test]
    fn certificates_survive_serialization(seed in any::<u64>()) {
        let mut g = rng(seed);
        let x = space(&mut g, 2);
        let t = random_contraction(&mut g, &x, &NormedSpace::linf(2), 0.8).unwrap();
        let n = op_norm(&t).unwrap();
        let cert = Certificate::new("operator norm at most one", 1.0, n, Witness::OpNorm { map: t });
        let text = serde_json::to_string(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cert);
        let v = back.verify(LpEngine::Float).unwrap();
        prop_assert!(v.hash_ok && v.agrees && v.pass);
    }

    #[test]
    fn reals_round_trip_exactly(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(parse_real(&format_real(x)).unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn random_states_are_exact(seed in any::<u64>(), n in 1usize..20) {
        let s = StateVector::random(&mut rng(seed), n);
        prop_assert!(s.coefficients.iter().all(|&w| w >= 0.0));
        prop_assert_eq!(s.coefficients.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn minimality_meets_its_bound(seed in any::<u64>(), d in 1usize..4, eps in 0.3f64..1.5) {
        let mut g = rng(seed);
        let m = minimality_threshold(d, eps) + g.gen_range(0..3);
        let (s, t) = (StateVector::random(&mut g, d), StateVector::random(&mut g, m));
        let map = minimality_map(d, eps, &s, &t).unwrap();
        prop_assert!(map.defect <= eps + 1e-12);
        prop_assert!(map.phi.apply(&vec![1.0; d]).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn density_blocks_carry_the_trace(seed in any::<u64>(), d in 1usize..4, k in 1usize..5) {
        let mut g = rng(seed);
        let n = d * k;
        let rank = g.gen_range(1..=n);
        let rho = random_density(&mut g, n, rank, None).unwrap();
        let blocks = block_compress(&rho, d).unwrap();
        let total: f64 = blocks.iter().map(|b| b.trace().re).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for b in &blocks {
            prop_assert!(b.is_hermitian(1e-12));
            prop_assert!(b.hermitian_eigenvalues().iter().all(|&v| v >= -1e-12));
        }
        let id = CMatrix::identity(d);
        prop_assert!(blocks.iter().all(|b| b.trace_pair(&id).im.abs() <= 1e-12));
    }
}
