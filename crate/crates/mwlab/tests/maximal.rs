mod common;

use std::sync::Arc;

use common::*;
use mwlab::characteristics::characteristic;
use mwlab::convex::{convex_max, BodyField};
use mwlab::exponent::{Exponent, ExponentPair};
use mwlab::geometry::{BasisKind, BoxBasis, Grid, GridBox};
use mwlab::maximal::*;
use mwlab::mesh::DirectionMesh;
use mwlab::spd::{EigenTag, Mat, SpdMatrix};
use mwlab::weights::*;
use proptest::prelude::*;
use rand::Rng;

fn mesh2() -> Arc<DirectionMesh> {
    Arc::new(DirectionMesh::default_for(2))
}

fn random_vectors(g: &Grid, d: usize, seed: u64) -> VectorField {
    let mut r = rng(seed);
    VectorField::new(g, d, (0..d * g.atom_count()).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn degenerate_everywhere(g: &Grid, tag: EigenTag) -> MatrixWeightField {
    let m = tag_direction(&Mat::diag(&[1.0, 2.0]), 1, tag).unwrap();
    MatrixWeightField::degenerate(g, vec![m; g.atom_count()]).unwrap()
}

#[test]
fn scalar_weighted_maximal_function_factorizes() {
    let (g, b) = dyadic(1, 5);
    let mut r = rng(3);
    let w: Vec<f64> = (0..g.atom_count()).map(|_| r.gen_range(-1.0f64..1.0).exp()).collect();
    let f: Vec<f64> = (0..g.atom_count()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let got = christ_goldberg(&scalar_field(&g, &w), &b, &VectorField::new(&g, 1, f.clone()).unwrap()).unwrap();
    for x in 0..g.atom_count() {
        let m = b
            .covering(x)
            .iter()
            .map(|&bx| {
                let ys = b.box_atoms(bx as usize);
                ys.iter().map(|&y| (f[y as usize] / w[y as usize]).abs()).sum::<f64>() / ys.len() as f64
            })
            .fold(0.0, f64::max);
        assert!(rel(got[x], w[x] * m) < 1e-12);
    }
}

#[test]
fn infinite_direction_spreads_over_the_component() {
    let (g, b) = dyadic(1, 3);
    let w = degenerate_everywhere(&g, EigenTag::Infinite);
    let mut f = VectorField::zeros(&g, 2);
    f.set(3, &[0.0, 1.0]);
    let t = tilde_max(&w, &b, &f).unwrap();
    assert!(t.infinite.iter().all(|&i| i));
}

#[test]
fn zero_direction_contributes_nothing() {
    let (g, b) = dyadic(1, 3);
    let w = degenerate_everywhere(&g, EigenTag::Zero);
    let mut f = VectorField::zeros(&g, 2);
    for a in [1, 2, 6] {
        f.set(a, &[0.0, 1.0]);
    }
    let t = tilde_max(&w, &b, &f).unwrap();
    assert!(t.values.iter().all(|&v| v == 0.0));
}

#[test]
fn probe_bound_below_scalar_envelope() {
    let (g, b) = dyadic(1, 5);
    let w = sample_weight(&WeightFamilySpec::ScalarPower { a: 0.4, center: None, d: 1 }, &g).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let ap =
            characteristic(&w, &b, &ExponentPair::diagonal(Exponent::from_f64(p).unwrap()).unwrap()).unwrap().value;
        let rec = kp_lower_bound(&w, &b, p, &ProbeSpec::default()).unwrap();
        assert!(rec.bound >= 1.0 - 1e-12 && rec.bound <= kp_scalar_envelope(1, p, ap), "p = {p}");
    }
}

#[test]
fn linf_bound_holds_with_the_characteristic() {
    for seed in 0..10 {
        let (g, b) = dyadic(1, 4);
        let w = random_field(&g, 2, 1.5, seed);
        let rep = cg_linf_bound(&w, &b, &random_vectors(&g, 2, seed)).unwrap();
        assert!(rep.lhs <= rep.rhs + 1e-9);
    }
}

#[test]
fn four_atom_multiparameter_maximal() {
    let g = Grid::new(2, 1, Some(vec![1, 1])).unwrap();
    let b = basis(&g, BasisKind::Multiparam);
    let mut vals = vec![0.0; 8];
    vals[2 * g.atom_index(&[0, 0])] = 1.0;
    let f = BodyField::segments(&g, mesh2(), &vals).unwrap();
    let m = convex_max(&f, &b).unwrap();
    let e1 = [1.0, 0.0];
    for (coords, want) in [([0, 0], 1.0), ([1, 0], 0.5), ([0, 1], 0.5), ([1, 1], 0.25)] {
        let got = m.body(g.atom_index(&coords)).support(&e1);
        assert!((got - want).abs() < 1e-15, "{coords:?}");
    }
    let rep = containment_check(&f, &b).unwrap();
    assert!(rep.violation <= 1e-15);
}

#[test]
fn tensor_weight_slices_reduce_to_one_dimension() {
    let g = Grid::new(2, 3, Some(vec![1, 1])).unwrap();
    let b = basis(&g, BasisKind::Multiparam);
    let w1: Vec<f64> = (0..8).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
    let w2: Vec<f64> = (0..8).map(|i| 0.5 + 0.3 * i as f64).collect();
    let vals = (0..g.atom_count())
        .map(|a| {
            let c = g.atom_coords(a);
            SpdMatrix::scalar(2, w1[c[0]] * w2[c[1]]).unwrap()
        })
        .collect();
    let w = MatrixWeightField::new(&g, vals).unwrap();
    let rep = slice_characteristic_check(&w, &b, Exponent::int(2)).unwrap();
    assert!(rep.pass);
    let line = Grid::new(1, 3, None).unwrap();
    let cubes = basis(&line, BasisKind::Cubes);
    let e = ExponentPair::diagonal(Exponent::int(2)).unwrap();
    for (k, wk) in [(0, &w1), (1, &w2)] {
        let oracle = characteristic(&scalar_field(&line, wk), &cubes, &e).unwrap().value;
        assert!(rel(rep.blocks[k].max_slice, oracle) < 1e-12);
    }
}

#[test]
fn rotated_power_slices_within_envelope() {
    let g = Grid::new(2, 3, Some(vec![1, 1])).unwrap();
    let b = basis(&g, BasisKind::Multiparam);
    let spec = WeightFamilySpec::RotatedPower {
        a: 0.3,
        b: -0.3,
        theta: ThetaField::Linear { offset: 0.0, slope: vec![1.0, 2.0] },
        center: None,
    };
    let w = sample_weight(&spec, &g).unwrap();
    let rep = slice_characteristic_check(&w, &b, Exponent::int(2)).unwrap();
    assert!(rep.pass && rep.max_ratio <= SLICE_ENVELOPE + 1e-12);
}

#[test]
fn zero_tagged_direction_is_trivial() {
    let (g, b) = dyadic(1, 2);
    let w = degenerate_everywhere(&g, EigenTag::Zero);
    let v = triviality_classify(&w, &b, Exponent::int(2)).unwrap();
    match &v.components[0].verdict {
        Verdict::TrivialZero { direction, .. } => {
            assert!(direction[0].abs() < 1e-12 && (direction[1].abs() - 1.0).abs() < 1e-12)
        }
        other => panic!("{other:?}"),
    }
    assert!(v.kept.is_empty() && v.restricted_characteristic.is_none());
}

#[test]
fn degenerate_component_is_dropped() {
    let g = Grid::new(1, 3, None).unwrap();
    let left = GridBox::new(&g, vec![0], vec![4]).unwrap();
    let right = GridBox::new(&g, vec![4], vec![8]).unwrap();
    let half = GridBox::new(&g, vec![0], vec![2]).unwrap();
    let b = BoxBasis::from_boxes(&g, vec![left, half, right]).unwrap();
    let bad = tag_direction(&Mat::diag(&[1.0, 2.0]), 0, EigenTag::Infinite).unwrap();
    let vals = (0..8)
        .map(|a| {
            if a >= 4 {
                bad.clone()
            } else {
                mwlab::spd::ExtendedSpdMatrix::from_spd(SpdMatrix::diag(&[1.0, 1.0 + a as f64]).unwrap())
            }
        })
        .collect();
    let w = MatrixWeightField::degenerate(&g, vals).unwrap();
    let v = triviality_classify(&w, &b, Exponent::int(2)).unwrap();
    assert_eq!(v.components.len(), 2);
    assert_eq!(v.kept.len(), 1);
    let kept = &b.components()[v.kept[0]];
    assert!(kept.atoms.iter().all(|&a| a < 4));
    assert!(v.restricted_characteristic.is_some_and(f64::is_finite));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multiparameter_containment(seed in any::<u64>()) {
        let g = Grid::new(2, 2, Some(vec![1, 1])).unwrap();
        let b = basis(&g, BasisKind::Multiparam);
        let mut r = rng(seed);
        let vals: Vec<f64> = (0..2 * g.atom_count()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = BodyField::segments(&g, mesh2(), &vals).unwrap();
        prop_assert!(containment_check(&f, &b).unwrap().violation <= 1e-9);
    }

    #[test]
    fn christ_goldberg_dominated_by_convex_maximal(seed in any::<u64>()) {
        let (g, b) = dyadic(1, 4);
        let w = random_field(&g, 2, 1.5, seed);
        let rep = cg_domination_check(&w, &b, &random_vectors(&g, 2, seed), mesh2()).unwrap();
        prop_assert!(rep.violation <= 1e-9);
    }

    #[test]
    fn identity_weight_reduces_to_vector_maximal(seed in any::<u64>()) {
        let (g, b) = dyadic(1, 4);
        let w = MatrixWeightField::identity(&g, 2);
        let f = random_vectors(&g, 2, seed);
        let m = christ_goldberg(&w, &b, &f).unwrap();
        let mags = f.magnitudes();
        for x in 0..g.atom_count() {
            let want = b.covering(x).iter().map(|&bx| {
                let ys = b.box_atoms(bx as usize);
                ys.iter().map(|&y| mags[y as usize]).sum::<f64>() / ys.len() as f64
            }).fold(0.0, f64::max);
            prop_assert!(rel(m[x], want) < 1e-12);
        }
    }
}
