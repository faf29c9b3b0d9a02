use dimer_cff::dgauss::DiscreteGaussianLaw;
use dimer_cff::experiments::random_tuples;
use dimer_cff::height::{kenyon_moment, KenyonMomentRequest};
use dimer_cff::kasteleyn::KasteleynSystem;
use dimer_cff::lattice::{build_cylinder, build_rectangle, puncture, CylinderStyle, VertexId};
use dimer_cff::matchings::{count_matchings, empirical_moment, enumerate};
use dimer_cff::torus::{Theta, CHARACTERISTICS};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn puncture_order_is_irrelevant(i in 0usize..18, j in 0usize..18, m in 0usize..18) {
        let g = build_rectangle(6, 6).unwrap();
        let blacks: Vec<VertexId> = g.black_vertices().collect();
        let whites: Vec<VertexId> = g.white_vertices().collect();
        let (b, w, w2) = (blacks[i], whites[j], whites[m]);
        let one = puncture(&g, &[b, w]).unwrap();
        let other = puncture(&g, &[w, b]).unwrap();
        prop_assert_eq!(one.vertices(), other.vertices());
        prop_assert_eq!(one.edges().len(), other.edges().len());
        prop_assert_eq!(count_matchings(&one).unwrap(), count_matchings(&other).unwrap());
        // Removing two whites and one black is unbalanced whatever the order.
        if w2 != w {
            prop_assert!(puncture(&g, &[w2, b, w]).is_err());
        }
    }

    #[test]
    fn kenyon_moment_is_permutation_symmetric(seed in 0u64..1000, k in 2i32..4, dd in any::<bool>()) {
        let style = if dd { CylinderStyle::DD } else { CylinderStyle::ND };
        let g = build_cylinder(k, 1.0, style).unwrap();
        let ks = KasteleynSystem::new(&g).unwrap();
        for t in random_tuples(&g, &[3], 1, seed) {
            let a = kenyon_moment(&ks, &KenyonMomentRequest::new(&g, t.clone()).unwrap()).unwrap();
            let rotated = vec![t[2], t[0], t[1]];
            let b = kenyon_moment(&ks, &KenyonMomentRequest::new(&g, rotated).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kenyon_matches_enumeration_on_rectangles(seed in 0u64..1000, cols in 2i32..6, rows in 2i32..5) {
        prop_assume!(cols * rows % 2 == 0);
        let g = build_rectangle(cols, rows).unwrap();
        let ks = KasteleynSystem::new(&g).unwrap();
        let all = enumerate(&g, 100_000).unwrap();
        for t in random_tuples(&g, &[1, 2], 2, seed) {
            let det = kenyon_moment(&ks, &KenyonMomentRequest::new(&g, t.clone()).unwrap()).unwrap();
            let exact = empirical_moment(&g, &t, &all).unwrap();
            prop_assert!((det - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn reversing_a_dual_edge_flips_its_sign(e in 0usize..60) {
        let g = build_cylinder(3, 1.0, CylinderStyle::DD).unwrap();
        let e = e % g.edges().len();
        let [f0, f1] = g.edge_faces(e);
        let d = g.dual_edge(e, f0).unwrap();
        let r = g.dual_edge(e, f1).unwrap();
        prop_assert_eq!(d.sign, -r.sign);
        prop_assert_eq!(d.reversed(), r);
    }

    #[test]
    fn pmf_is_symmetric_and_shift_periodic(q in 0.2f64..4.0, n in -3i32..4) {
        let law = DiscreteGaussianLaw::new(vec![0.0], vec![vec![q]]).unwrap();
        let p = law.pmf(&[n as f64]).unwrap();
        prop_assert!((p - law.pmf(&[-n as f64]).unwrap()).abs() < 1e-15);
        let half = DiscreteGaussianLaw::new(vec![0.5], vec![vec![q]]).unwrap();
        let shifted = DiscreteGaussianLaw::new(vec![1.5], vec![vec![q]]).unwrap();
        let u = n as f64 + 0.5;
        prop_assert!((half.pmf(&[u]).unwrap() - shifted.pmf(&[u]).unwrap()).abs() < 1e-15);
        prop_assert!((half.pmf(&[u]).unwrap() - half.pmf(&[-u]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn theta_shift_by_one_is_a_character(re in -1.0f64..1.0, im in -0.6f64..0.6, t in 0.5f64..2.0) {
        let z = Complex64::new(re, im);
        for (a, _) in CHARACTERISTICS {
            let th = Theta::new(Complex64::new(0.0, t), a, 0.5 - a).unwrap();
            let expect = Complex64::from_polar(1.0, 2.0 * PI * a) * th.eval(z);
            let got = th.eval(z + 1.0);
            prop_assert!((got - expect).norm() < 1e-12 * got.norm().max(1.0));
        }
    }
}
