mod common;

use common::*;
use mwlab::spd::*;
use mwlab::weights::random_spd;
use proptest::prelude::*;

#[test]
fn op_norm_of_diagonal_is_largest_entry() {
    assert_eq!(op_norm(&Mat::diag(&[3.0, 0.5])).unwrap(), 3.0);
}

#[test]
fn product_norm_matches_closed_form_svd() {
    let mut r = rng(11);
    for _ in 0..200 {
        let a = random_spd(2, 2.0, &mut r);
        let b = random_spd(2, 2.0, &mut r);
        let p = a.matrix().mul(b.matrix());
        assert!(rel(op_norm(&p).unwrap(), svd2_max(&p)) < 1e-10);
    }
}

#[test]
fn fractional_power_of_rotated_diagonal() {
    let m = SpdMatrix::new(rotated(std::f64::consts::PI / 7.0, [2.0, 5.0])).unwrap();
    let got = m.power(1.5).unwrap();
    let want = rotated(std::f64::consts::PI / 7.0, [2f64.powf(1.5), 5f64.powf(1.5)]);
    assert!(got.matrix().sub(&want).frobenius() < 1e-12 * want.frobenius());
}

#[test]
fn cordes_example_against_dense_arithmetic() {
    let u = SpdMatrix::diag(&[10.0, 1.0]).unwrap();
    let v = SpdMatrix::new(rotated(std::f64::consts::FRAC_PI_4, [10.0, 1.0])).unwrap();
    let g = cordes_gap(&u, &v, 0.5).unwrap();
    let us = Mat::diag(&[10f64.sqrt(), 1.0]);
    let vs = rotated(std::f64::consts::FRAC_PI_4, [10f64.sqrt(), 1.0]);
    let lhs = svd2_max(&us.mul(&vs));
    let rhs = svd2_max(&u.matrix().mul(v.matrix())).sqrt();
    assert!(rel(g.lhs, lhs) < 1e-12 && rel(g.rhs, rhs) < 1e-12);
    assert!(g.gap > 0.0);
}

#[test]
fn orthonormal_triple_norm_equivalence() {
    let mut r = rng(5);
    for _ in 0..50 {
        let m = random_spd(3, 1.5, &mut r);
        let q = random_spd(3, 1.0, &mut r);
        let frame: Vec<Vec<f64>> = (0..3).map(|i| q.eigenvector(i)).collect();
        let e = norm_equiv_check(m.matrix(), &frame, 2.0).unwrap();
        // With r = 2 the sum is the Frobenius norm, whatever the frame.
        assert!(rel(e.lhs, m.matrix().frobenius()) < 1e-12);
        assert!(e.ratio_to_op_norm >= 1.0 - 1e-12 && e.ratio_to_op_norm <= 3f64.sqrt() + 1e-12);
    }
}

#[test]
fn non_commuting_pair_has_equal_product_norms() {
    let u = SpdMatrix::diag(&[4.0, 1.0]).unwrap();
    let v = SpdMatrix::new(rotated(0.3, [3.0, 0.2])).unwrap();
    let c = commute_norm_check(&u, &v);
    assert!(rel(c.uv, c.vu) < 1e-12);
    assert!(rel(c.uv, svd2_max(&v.matrix().mul(u.matrix()))) < 1e-12);
}

fn spd_strategy(d: usize) -> impl Strategy<Value = SpdMatrix> {
    (any::<u64>(), 0.0f64..3.0).prop_map(move |(seed, spread)| random_spd(d, spread, &mut rng(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jacobi_reconstructs(m in (2usize..=5).prop_flat_map(spd_strategy)) {
        let (vals, vecs) = jacobi_eigen(m.matrix());
        let d = m.dim();
        let mut back = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                back.set(i, j, (0..d).map(|k| vecs.get(i, k) * vals[k] * vecs.get(j, k)).sum());
            }
        }
        prop_assert!(back.sub(m.matrix()).frobenius() <= 1e-12 * m.matrix().frobenius());
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn powers_compose(m in (2usize..=4).prop_flat_map(spd_strategy), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let lhs = m.power(a).unwrap().matrix().mul(m.power(b).unwrap().matrix());
        let rhs = m.power(a + b).unwrap();
        prop_assert!(lhs.sub(rhs.matrix()).frobenius() <= 1e-9 * rhs.matrix().frobenius());
    }

    #[test]
    fn op_norm_matches_power_iteration(m in (2usize..=4).prop_flat_map(spd_strategy)) {
        prop_assert!(rel(op_norm(m.matrix()).unwrap(), power_iteration_norm(m.matrix())) < 1e-9);
    }

    #[test]
    fn commuting_pairs_close_the_cordes_gap(seed in any::<u64>(), d in 2usize..=4, s in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let u = random_spd(d, 2.0, &mut r);
        let v = u.power(r.gen_range(-1.5..1.5)).unwrap();
        let g = cordes_gap(&u, &v, s).unwrap();
        prop_assert!(g.gap.abs() <= 1e-10 * g.rhs.max(1.0));
    }
}

use rand::Rng;
