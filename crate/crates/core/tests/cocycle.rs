use giet::cocycle::{
    canonical_tau, check_intertwine, cocycle_product, cone_cs, cone_cu, genus, hyperbolicity_probe, omega_matrix,
    psi_p, spectral_split, split_vector, theta_inverse, theta_matrix, CocycleError, IntMatrix,
};
use giet::combinatorics::{generate_k_bounded, rauzy_class, Permutation, Sequence};
use giet::exact::{self, Q};
use giet::fixtures;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn symmetric(d: usize) -> Permutation {
    let top: String = (0..d).map(|i| (b'A' + i as u8) as char).collect();
    let bottom: String = top.chars().rev().collect();
    Permutation::from_rows(&top, &bottom).unwrap()
}

fn class_member(d: usize, i: usize) -> Permutation {
    let class = rauzy_class(&symmetric(d));
    class[i % class.len()].clone()
}

fn qv(v: &[i64]) -> Vec<Q> {
    v.iter().map(|&x| exact::q(x)).collect()
}

#[test]
fn genus_of_symmetric_permutations() {
    for (d, g) in [(2, 1), (3, 1), (4, 2), (5, 2), (6, 3)] {
        assert_eq!(genus(&symmetric(d)), g, "d = {d}");
    }
}

#[test]
fn omega_is_antisymmetric() {
    for d in 2..6 {
        for p in rauzy_class(&symmetric(d)) {
            let om = omega_matrix(&p);
            for i in 0..d {
                for j in 0..d {
                    assert_eq!(om.get(i, j), &-om.get(j, i).clone());
                }
            }
        }
    }
}

#[test]
fn rotation_product_is_fibonacci() {
    let pi = symmetric(2);
    let seq = Sequence::from_types(&pi, &[0, 1].repeat(10)).unwrap();
    let m = cocycle_product(&seq, 0, 20);
    // (F_21, F_20; F_20, F_19) up to the order of the letters
    let mut entries: Vec<String> = m.rows_as_strings().concat();
    entries.sort_by_key(|s| s.parse::<u64>().unwrap());
    assert_eq!(entries, ["4181", "6765", "6765", "10946"]);
}

#[test]
fn fixture_loop_has_a_fixed_central_direction() {
    let lp = fixtures::d3_sequence(fixtures::D3_LOOP.len());
    let cs = psi_p(&lp).unwrap();
    let m = cocycle_product(&lp, 0, lp.len());
    let basis = cs.basis();
    assert_eq!(basis.len(), 1);
    assert_eq!(m.apply_q(&basis[0]), basis[0]);
    assert!(basis[0].iter().any(|x| !x.is_zero()));
    let open = Sequence::from_types(&fixtures::d3_pi(), &[1, 0, 1]).unwrap();
    assert!(matches!(psi_p(&open), Err(CocycleError::NotALoop)));
}

#[test]
fn golden_growth_rate() {
    let seq = Sequence::from_types(&symmetric(2), &[0, 1].repeat(20)).unwrap();
    let h = hyperbolicity_probe(&seq, 8, 3, 10).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((h.unstable.rate - phi).abs() / phi < 1e-6, "{}", h.unstable.rate);
    assert!((h.stable.rate - phi).abs() / phi < 1e-6, "{}", h.stable.rate);
}

#[test]
fn splitting_reconstructs_vectors() {
    let seq = fixtures::d3_sequence(120);
    let s = spectral_split(&seq, 6, 30).unwrap();
    for v in [[1.0, 2.0, -0.5], [0.2, -0.2, 0.2], [-3.0, 0.1, 0.7]] {
        let c = split_vector(&v, &s).unwrap();
        for i in 0..3 {
            let sum = c.stable[i] + c.central[i] + c.unstable[i];
            assert!((sum - v[i]).abs() < 1e-12, "{v:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn intertwining_on_random_paths(d in 2usize..7, i in 0usize..200, types in prop::collection::vec(0u8..2, 1..30)) {
        let seq = Sequence::from_types(&class_member(d, i), &types).unwrap();
        for st in &seq.steps {
            prop_assert!(check_intertwine(st).is_ok());
            prop_assert_eq!(theta_matrix(st).mul(&theta_inverse(st)), IntMatrix::identity(d));
        }
    }

    #[test]
    fn products_compose(i in 0usize..50, types in prop::collection::vec(0u8..2, 2..40), cut in 0usize..40) {
        let seq = Sequence::from_types(&class_member(4, i), &types).unwrap();
        let n = seq.len();
        let m = cut % (n + 1);
        let whole = cocycle_product(&seq, 0, n);
        prop_assert_eq!(whole.clone(), cocycle_product(&seq, m, n).mul(&cocycle_product(&seq, 0, m)));
        // unimodular: the rational inverse has integer entries
        let inv = whole.inverse_q().unwrap();
        prop_assert!(inv.iter().flatten().all(|x| x.is_integer()));
    }

    #[test]
    fn cones_are_invariant(seed in 0u64..500, perturb in prop::collection::vec(-2i64..=2, 3), w in prop::collection::vec(1i64..9, 3)) {
        let seq = generate_k_bounded(&fixtures::d3_pi(), 12, 4, seed).unwrap();
        let pi = seq.pi(0).clone();
        let tau: Vec<i64> = canonical_tau(&pi).iter().zip(&perturb).map(|(c, p)| 8 * c + p).collect();
        let tau_b: Vec<BigInt> = tau.iter().map(|&x| BigInt::from(x)).collect();
        let u: Vec<BigInt> = omega_matrix(&pi).apply(&tau_b).into_iter().map(|x| -x).collect();
        let u_q: Vec<Q> = u.iter().map(exact::qi).collect();
        prop_assume!(cone_cu(&pi, &u_q).unwrap());
        let forward = cocycle_product(&seq, 0, seq.len()).apply(&u);
        prop_assert!(cone_cu(seq.end(), &forward.iter().map(exact::qi).collect::<Vec<_>>()).unwrap());

        let end = seq.end().clone();
        let s: Vec<BigInt> = omega_matrix(&end).apply(&w.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>());
        prop_assert!(cone_cs(&end, &s.iter().map(exact::qi).collect::<Vec<_>>()).unwrap());
        let inv = cocycle_product(&seq, 0, seq.len()).inverse_q().unwrap();
        let back = exact::mat_vec(&inv, &s.iter().map(exact::qi).collect::<Vec<_>>());
        prop_assert!(cone_cs(&pi, &back).unwrap());
    }
}

#[test]
fn cone_membership_examples() {
    let pi = fixtures::d3_pi();
    let om = omega_matrix(&pi);
    let ones = vec![BigInt::one(); 3];
    let v: Vec<Q> = om.apply(&ones).iter().map(exact::qi).collect();
    assert!(cone_cs(&pi, &v).unwrap());
    assert!(!cone_cs(&pi, &qv(&[1, 1, 1])).unwrap());
    let neg: Vec<Q> = v.iter().map(|x| -x).collect();
    assert!(!cone_cs(&pi, &neg).unwrap());
}
