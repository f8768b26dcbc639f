use fgivental::algebra::{int, rat, Gen, Mat, Poly, Rat, SeriesMat};
use fgivental::fflat::{self, FlatFJet, Grid, MPoly};
use fgivental::ftft::AlgebraSpec;
use fgivental::givental::{self, act_on_tft, edge_cocycle_defect, random_element};
use fgivental::oracle0::kappa_psi_integral;
use fgivental::tautology::{mul_monomial, normalize, AmbientMonomial};
use fgivental::trees::{enumerate, enumerate_nodes, is_stable, moduli_dim};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_rat() -> impl Strategy<Value = Rat> {
    (-6i64..=6, 1i64..=5).prop_map(|(p, q)| rat(p, q))
}

fn nonzero_rat() -> impl Strategy<Value = Rat> {
    small_rat().prop_filter("nonzero", |x| *x != int(0))
}

fn ring() -> Vec<Gen> {
    vec![Gen::Kappa(1), Gen::Kappa(2), Gen::Psi(1)]
}

fn poly() -> impl Strategy<Value = Poly> {
    prop::collection::vec((prop::collection::vec(0u32..3, 3), small_rat()), 0..5).prop_map(|terms| {
        let mut p = Poly::zero(ring());
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    })
}

fn homogeneous_poly(d: u32) -> impl Strategy<Value = Poly> {
    poly().prop_map(move |p| p.homogeneous_part(d))
}

fn group_like(dim: usize, order: usize) -> impl Strategy<Value = SeriesMat> {
    prop::collection::vec(small_rat(), dim * dim * order).prop_map(move |xs| {
        let mut coeffs = vec![Mat::identity(dim)];
        for k in 0..order {
            let rows = (0..dim).map(|i| xs[(k * dim + i) * dim..(k * dim + i + 1) * dim].to_vec()).collect();
            coeffs.push(Mat::from_rows(rows));
        }
        SeriesMat::new(dim, coeffs).unwrap()
    })
}

fn to_grid(m: &Mat) -> Grid<Rat> {
    m.to_rows()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn poly_ring_axioms(a in poly(), b in poly(), c in poly()) {
        let ab_c = a.mul(&b).unwrap().mul(&c).unwrap();
        prop_assert_eq!(&ab_c, &a.mul(&b.mul(&c).unwrap()).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
        let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert!(a.sub(&a).unwrap().is_zero());
    }

    #[test]
    fn poly_text_round_trip(a in poly()) {
        prop_assert_eq!(Poly::parse(ring(), &a.to_string()).unwrap(), a);
    }

    #[test]
    fn poly_degree_is_additive(d in 0u32..3, e in 0u32..3, a in poly(), b in poly()) {
        let a = a.homogeneous_part(d);
        let b = b.homogeneous_part(e);
        let p = a.mul(&b).unwrap();
        if !p.is_zero() {
            prop_assert!(p.is_homogeneous());
            prop_assert_eq!(p.degree(), Some(d + e));
        }
    }

    #[test]
    fn homogeneous_parts_are_homogeneous(p in homogeneous_poly(2)) {
        prop_assert!(p.is_zero() || p.degree() == Some(2));
    }

    #[test]
    fn series_inverse_is_an_involution(r in (1usize..=3, 1usize..=4).prop_flat_map(|(d, o)| group_like(d, o))) {
        let inv = r.invert().unwrap();
        prop_assert_eq!(&inv.invert().unwrap(), &r);
        prop_assert_eq!(r.mul(&inv).unwrap(), SeriesMat::identity(r.dim, r.order()));
        let grid: Vec<Grid<Rat>> = r.coeffs.iter().map(to_grid).collect();
        let g_inv = fflat::series_inverse(&grid);
        let expect: Vec<Grid<Rat>> = inv.coeffs.iter().map(to_grid).collect();
        prop_assert_eq!(g_inv, expect);
    }

    #[test]
    fn scalar_log_inverts_exp(c in prop::collection::vec(small_rat(), 1..6)) {
        let e = givental::scalar_exp(&c, c.len());
        prop_assert_eq!(givental::scalar_log(&e), c);
    }

    #[test]
    fn edge_cocycle_on_random_pairs(seed in any::<u64>(), dim in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_element(&mut rng, dim, 4).r;
        let b = random_element(&mut rng, dim, 4).r;
        prop_assert_eq!(edge_cocycle_defect(&a, &b).unwrap(), 0);
    }

    #[test]
    fn enumerated_trees_are_stable(g in 0u32..=2, n in 0u32..=4) {
        prop_assume!(is_stable(g, n) && moduli_dim(g, n) <= 4);
        let nodes = enumerate_nodes(g, n).unwrap();
        let mut total = int(0);
        for t in &nodes {
            prop_assert!(t.all_vertices_stable());
            total += Rat::new(1.into(), t.aut_order().into());
        }
        prop_assert!(total > int(0));
        prop_assert_eq!(enumerate(g, n).unwrap().len(), nodes.len());
    }

    #[test]
    fn integrals_are_symmetric_in_psi(
        a in prop::collection::vec(0u32..3, 4..=6),
        kappa in prop::collection::vec(1u32..3, 0..3),
        shift in 0usize..6,
    ) {
        let mut b = a.clone();
        b.rotate_left(shift % a.len());
        let mut k2 = kappa.clone();
        k2.reverse();
        prop_assert_eq!(kappa_psi_integral(&a, &kappa), kappa_psi_integral(&b, &k2));
    }

    #[test]
    fn monomial_product_commutes_with_normalize(seed in any::<u64>(), psi in prop::collection::vec(0u32..2, 3), k in 0u32..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let elem = random_element(&mut rng, 1, 4);
        let spec = AlgebraSpec::rank_one(int(1), int(1));
        let s = act_on_tft(&elem, &spec, 1, 2).unwrap();
        let e = s.get(0, &[0, 0]).unwrap();
        let kappa: Vec<(u32, u32)> = if k > 0 { vec![(1, k)] } else { vec![] };
        let m = AmbientMonomial::new(psi, &kappa);
        let lhs = normalize(&mul_monomial(e, &m)).unwrap();
        let rhs = mul_monomial(&normalize(e).unwrap(), &m);
        prop_assert_eq!(&lhs, &rhs);
        for node in lhs.terms.keys() {
            prop_assert!(node.degree() <= moduli_dim(1, 2));
        }
    }

    #[test]
    fn tft_gluing_factorizes(
        alpha in prop::collection::vec(nonzero_rat(), 2),
        v in prop::collection::vec(small_rat(), 2),
        w in prop::collection::vec(small_rat(), 2),
        u in prop::collection::vec(small_rat(), 2),
        g1 in 0u32..3,
        g2 in 0u32..3,
    ) {
        let spec = AlgebraSpec::diagonal(alpha.clone());
        let inner = spec.evaluate(g2, &[w.clone(), u.clone()]).unwrap();
        let outer = spec.evaluate(g1, &[v.clone(), inner]).unwrap();
        prop_assert_eq!(&outer, &spec.evaluate(g1 + g2, &[v.clone(), w.clone(), u.clone()]).unwrap());
        for i in 0..2 {
            let mut expect = v[i].clone() * &w[i] * &u[i];
            for _ in 0..g1 + g2 {
                expect *= &alpha[i];
            }
            prop_assert_eq!(&outer[i], &expect);
        }
    }

    #[test]
    fn wdvv_with_unit_gives_unit_equation(c1 in nonzero_rat(), c2 in nonzero_rat(), k1 in 3i32..6, k2 in 3i32..6) {
        // Two decoupled one-dimensional potentials always satisfy WDVV.
        let f1 = MPoly::monomial(vec![k1, 0], c1.clone());
        let f2 = MPoly::monomial(vec![0, k2], c2.clone());
        let e1 = &c1 * int((k1 * (k1 - 1)) as i64);
        let e2 = &c2 * int((k2 * (k2 - 1)) as i64);
        let unit = vec![MPoly::monomial(vec![2 - k1, 0], e1.recip()), MPoly::monomial(vec![0, 2 - k2], e2.recip())];
        let j = FlatFJet::new(vec![f1, f2], vec![int(1), int(1)], Some(unit), None, None).unwrap();
        prop_assert!(fflat::wdvv_residual(&j).is_empty());
        prop_assert!(fflat::unit_residual(&j).is_empty());
    }

    #[test]
    fn diagonal_ambiguity_keeps_r_equation(r in 2u32..=4, d in prop::collection::vec(small_rat(), 3)) {
        let j = FlatFJet::rspin(r).unwrap();
        let frame = fflat::symbolic_frame_1d(&j).unwrap().direction();
        let series = givental::scalar_exp(&d, 3);
        let rr: Vec<Grid<MPoly>> = series.iter().map(|c| vec![vec![MPoly::constant(1, c.clone())]]).collect();
        prop_assert!(fflat::all_vanish(&fflat::r_equation_residual(&frame, &rr, &fflat::d_series(&rr, 0))));
    }
}
