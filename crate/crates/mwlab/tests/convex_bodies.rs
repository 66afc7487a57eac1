mod common;

use std::sync::Arc;

use common::*;
use mwlab::characteristics::characteristic;
use mwlab::convex::*;
use mwlab::exponent::{Exponent, ExponentPair};
use mwlab::extrapolation::{rdf_series, series_properties, IterationOperator};
use mwlab::geometry::{Grid, GridBox};
use mwlab::mesh::DirectionMesh;
use mwlab::spd::{Mat, SpdMatrix};
use mwlab::weights::{random_spd, MatrixWeightField};
use proptest::prelude::*;
use rand::Rng;

fn mesh2() -> Arc<DirectionMesh> {
    Arc::new(DirectionMesh::default_for(2))
}

fn random_bodies(g: &Grid, mesh: &Arc<DirectionMesh>, seed: u64) -> BodyField {
    let mut r = rng(seed);
    let bodies = (0..g.atom_count())
        .map(|_| match r.gen_range(0..3) {
            0 => ConvexBody::Segment(vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]),
            1 => ConvexBody::Ellipsoid(*random_spd(2, 1.0, &mut r).matrix()),
            _ => ConvexBody::Segment(vec![r.gen_range(-1.0..1.0), 0.0]).to_sampled(mesh),
        })
        .collect();
    BodyField::new(g, mesh.clone(), bodies).unwrap()
}

#[test]
fn ellipsoid_norm_matches_svd() {
    let mut r = rng(2);
    for _ in 0..200 {
        let w = random_spd(2, 2.0, &mut r);
        let m = random_spd(2, 2.0, &mut r);
        let got = body_norm(&w, &ConvexBody::Ellipsoid(*m.matrix()));
        assert!(rel(got, svd2_max(&w.matrix().mul(m.matrix()))) < 1e-10);
    }
}

#[test]
fn aumann_average_of_two_segments_is_a_cross_polytope() {
    let g = Grid::new(1, 1, None).unwrap();
    let mesh = mesh2();
    let f = BodyField::segments(&g, mesh.clone(), &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let avg = aumann_average(&f, &GridBox::whole(&g));
    // Every selection f(0) ∈ {±e1}, f(1) ∈ {±e2}, averaged.
    let mut hull = Vec::new();
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            hull.push([s1 / 2.0, s2 / 2.0]);
        }
    }
    for u in mesh.iter() {
        let brute = hull.iter().map(|p| p[0] * u[0] + p[1] * u[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!((avg.support(u) - brute).abs() < 1e-10);
        assert!((brute - (u[0].abs() + u[1].abs()) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn exhaust_is_an_isometry() {
    let g = Grid::new(1, 4, None).unwrap();
    let mesh = mesh2();
    for seed in 0..10 {
        let w = random_field(&g, 2, 1.5, seed);
        let h = random_bodies(&g, &mesh, seed + 100);
        let n = exhaust(&w, &h).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert!(rel(n.lp_norm(&w, p).unwrap(), h.lp_norm(&w, p).unwrap()) < 1e-10);
        }
        // H ⊆ N_W H.
        assert!(containment_excess(&h, &n) <= 1e-12);
    }
}

#[test]
fn exhaust_is_sublinear() {
    let g = Grid::new(1, 3, None).unwrap();
    let mesh = mesh2();
    for seed in 0..10 {
        let w = random_field(&g, 2, 1.5, seed);
        let a = random_bodies(&g, &mesh, seed + 10);
        let b = random_bodies(&g, &mesh, seed + 20);
        let sum = BodyField::combination(&[(1.0, &a), (1.0, &b)]).unwrap();
        let lhs = exhaust(&w, &sum).unwrap();
        let rhs =
            BodyField::combination(&[(1.0, &exhaust(&w, &a).unwrap()), (1.0, &exhaust(&w, &b).unwrap())]).unwrap();
        assert!(containment_excess(&lhs, &rhs) <= 1e-12);
    }
}

#[test]
fn a1_for_bodies_tracks_the_matrix_constant() {
    let (g, basis) = dyadic(1, 4);
    let bump = SpdMatrix::new(rotated(0.7, [3.0, 1.2])).unwrap();
    let values = (0..g.atom_count()).map(|a| if a == 5 { bump.clone() } else { SpdMatrix::identity(2) }).collect();
    let w = MatrixWeightField::new(&g, values).unwrap();
    let a1 = characteristic(&w, &basis, &ExponentPair::diagonal(Exponent::ONE).unwrap()).unwrap().value;
    let k = a1k_constant(&BodyField::from_weight(&w, mesh2()).unwrap(), &basis).unwrap().value;
    assert!(k.is_finite());
    assert!(k <= a1 * (1.0 + 1e-12) && k >= a1 / 2.0, "{k} vs {a1}");
}

#[test]
fn series_of_a_constant_field_is_a_fixed_point() {
    let (g, basis) = dyadic(1, 3);
    let w = MatrixWeightField::identity(&g, 2);
    let t = IterationOperator::weighted(&w, 1.0, 2.0, &basis).unwrap().with_norm_bound(1.0).unwrap();
    let field = BodyField::constant(&g, mesh2(), &ConvexBody::unit_ball(2)).unwrap();
    let once = t.apply(&field).unwrap();
    assert!(containment_excess(&once, &field).abs() < 1e-15 && containment_excess(&field, &once).abs() < 1e-15);
    let s = rdf_series(&t, &field, 20).unwrap();
    for b in s.sum.bodies() {
        assert!((b.radius() - (2.0 - 2f64.powi(-20))).abs() < 1e-14);
    }
}

#[test]
fn invariance_defect_of_a_segment_series() {
    let (g, basis) = dyadic(1, 4);
    let mesh = mesh2();
    for seed in 0..5 {
        let w = random_field(&g, 2, 1.0, seed);
        let mut r = rng(seed);
        let vals: Vec<f64> = (0..2 * g.atom_count()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let field = BodyField::segments(&g, mesh.clone(), &vals).unwrap();
        let t = IterationOperator::weighted(&w, 1.0, 2.0, &basis).unwrap();
        let nb = t.estimate_norm_bound(&mesh, &[&field]).unwrap();
        let t = t.with_norm_bound(nb).unwrap();
        let s = rdf_series(&t, &field, 20).unwrap();
        let (ledger, rep) = series_properties(&t, &field, &s, "seg").unwrap();
        assert!(ledger.all_pass(), "{:?}", ledger.failures().collect::<Vec<_>>());
        assert!(rep.invariance_violation <= 2f64.powi(-19) * rep.norm_g, "{rep:?}");
    }
}

#[test]
fn truncation_keeps_small_bodies_near_the_origin() {
    let g = Grid::new(1, 3, None).unwrap();
    let mesh = mesh2();
    let f = BodyField::constant(&g, mesh, &ConvexBody::Ellipsoid(Mat::diag(&[0.5, 3.0]))).unwrap();
    let t = truncate(&f, 2.0);
    // Atom centers 0.5, 1.5 lie within 2; the rest are dropped.
    assert_eq!(t.bodies()[2], ConvexBody::zero(2));
    for u in f.mesh().iter() {
        let h = t.body(0).support(u);
        assert!(h <= 2.0 + 1e-12 && h <= f.body(0).support(u) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maximal_operator_is_monotone(seed in any::<u64>()) {
        let (g, basis) = dyadic(1, 4);
        let mesh = mesh2();
        let f = random_bodies(&g, &mesh, seed);
        let extra = random_bodies(&g, &mesh, seed ^ 0xABCD);
        let bigger = BodyField::combination(&[(1.0, &f), (0.5, &extra)]).unwrap();
        let (mf, mg) = (convex_max(&f, &basis).unwrap(), convex_max(&bigger, &basis).unwrap());
        prop_assert!(containment_excess(&mf, &mg) <= 1e-12);
        prop_assert!(containment_excess(&f, &mf) <= 1e-12);
    }

    #[test]
    fn sampled_norm_is_a_lower_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mesh = mesh2();
        let w = random_spd(2, 1.5, &mut r);
        let m = random_spd(2, 1.5, &mut r);
        let e = ConvexBody::Ellipsoid(*m.matrix());
        let exact = body_norm(&w, &e);
        let sampled = body_norm(&w, &e.to_sampled(&mesh));
        prop_assert!(sampled <= exact * (1.0 + 1e-12));
        // The sampled norm maximizes log|Mu| - log|W^{-1}u| over the mesh. For a
        // 2x2 SPD matrix with condition number k, log|Au(θ)| has second
        // derivative at most k^2 - 1, so the nearest mesh angle (within δ/2)
        // loses at most exp(-c δ^2 / 8).
        let cond2 = |a: &SpdMatrix| {
            let ev = a.eigenvalues();
            let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
            (hi / lo).powi(2) - 1.0
        };
        let delta = 2.0 * std::f64::consts::PI / mesh.len() as f64;
        let loss = (cond2(&w) + cond2(&m)) * delta * delta / 8.0;
        prop_assert!(sampled >= exact * (-loss).exp() * (1.0 - 1e-12), "{sampled} {exact} {loss}");
    }

    #[test]
    fn series_grows_with_the_order(seed in any::<u64>(), k in 1usize..12) {
        let (g, basis) = dyadic(1, 3);
        let mesh = mesh2();
        let w = random_field(&g, 2, 1.0, seed);
        let field = random_bodies(&g, &mesh, seed);
        let t = IterationOperator::weighted(&w, 1.5, 2.0, &basis).unwrap();
        let nb = t.estimate_norm_bound(&mesh, &[&field]).unwrap();
        let t = t.with_norm_bound(nb).unwrap();
        let a = rdf_series(&t, &field, k).unwrap();
        let b = rdf_series(&t, &field, k + 1).unwrap();
        prop_assert!(containment_excess(&a.sum, &b.sum) <= 1e-12);
        let ng = t.space_norm(&field).unwrap();
        prop_assert!(t.space_norm(&b.sum).unwrap() <= 2.0 * ng * (1.0 + 1e-12));
    }
}
