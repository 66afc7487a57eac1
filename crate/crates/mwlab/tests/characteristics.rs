mod common;

use common::*;
use mwlab::characteristics::*;
use mwlab::exponent::{Exponent, ExponentPair};
use mwlab::geometry::{BasisKind, BoxBasis, Grid};
use mwlab::mesh::DirectionMesh;
use mwlab::spd::{Mat, SpdMatrix};
use mwlab::weights::*;
use proptest::prelude::*;
use rand::Rng;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Scalar `[w]_{A_{p,q}}` over the given boxes, written from the
/// one-dimensional formulas.
fn scalar_apq(w: &[f64], basis: &BoxBasis, p: Exponent, q: Exponent) -> f64 {
    let mut best: f64 = 0.0;
    for b in 0..basis.len() {
        let v: Vec<f64> = basis.box_atoms(b).iter().map(|&a| w[a as usize]).collect();
        let val = if p.is_one() {
            let qf = q.to_f64();
            mean(&v.iter().map(|x| x.powf(qf)).collect::<Vec<_>>()).powf(1.0 / qf)
                / v.iter().cloned().fold(f64::INFINITY, f64::min)
        } else {
            let pc = if p.is_infinite() { 1.0 } else { p.to_f64() / (p.to_f64() - 1.0) };
            let inner = mean(&v.iter().map(|x| x.powf(-pc)).collect::<Vec<_>>()).powf(1.0 / pc);
            let outer = if q.is_infinite() {
                v.iter().cloned().fold(0.0, f64::max)
            } else {
                let qf = q.to_f64();
                mean(&v.iter().map(|x| x.powf(qf)).collect::<Vec<_>>()).powf(1.0 / qf)
            };
            inner * outer
        };
        best = best.max(val);
    }
    best
}

/// Classical `[v]_{A_p} = sup (mean v)(mean v^{-1/(p-1)})^{p-1}`.
fn muckenhoupt(v: &[f64], basis: &BoxBasis, p: f64) -> f64 {
    (0..basis.len())
        .map(|b| {
            let xs: Vec<f64> = basis.box_atoms(b).iter().map(|&a| v[a as usize]).collect();
            mean(&xs) * mean(&xs.iter().map(|x| x.powf(-1.0 / (p - 1.0))).collect::<Vec<_>>()).powf(p - 1.0)
        })
        .fold(0.0, f64::max)
}

fn pair(p: Exponent, q: Exponent) -> ExponentPair {
    ExponentPair::new(p, q).unwrap()
}

#[test]
fn two_valued_weight_on_two_atoms() {
    let (g, b) = dyadic(1, 1);
    let w = scalar_field(&g, &[1.0, 2.0]);
    let c = characteristic(&w, &b, &ExponentPair::diagonal(Exponent::int(2)).unwrap()).unwrap();
    assert!((c.value - 1.25).abs() < 1e-14);
}

#[test]
fn scalar_characteristic_is_the_classical_constant() {
    let (g, b) = dyadic(1, 5);
    let mut r = rng(21);
    for _ in 0..10 {
        let v: Vec<f64> = (0..g.atom_count()).map(|_| r.gen_range(-2.0f64..2.0).exp()).collect();
        let w = scalar_field(&g, &v);
        for p in [1.5f64, 2.0, 3.0] {
            let e = ExponentPair::diagonal(Exponent::from_f64(p).unwrap()).unwrap();
            let c = characteristic(&w, &b, &e).unwrap().value;
            let wp: Vec<f64> = v.iter().map(|x| x.powf(p)).collect();
            assert!(rel(c.powf(p), muckenhoupt(&wp, &b, p)) < 1e-12);
        }
    }
}

#[test]
fn scalar_oracle_on_every_branch() {
    let (g, b) = dyadic(1, 5);
    let mut r = rng(22);
    let pairs = [
        (Exponent::ONE, Exponent::int(2)),
        (Exponent::ratio(3, 2), Exponent::int(3)),
        (Exponent::int(2), Exponent::int(4)),
        (Exponent::int(2), Exponent::INF),
        (Exponent::INF, Exponent::INF),
    ];
    for _ in 0..10 {
        let v: Vec<f64> = (0..g.atom_count()).map(|_| r.gen_range(-1.5f64..1.5).exp()).collect();
        let w = scalar_field(&g, &v);
        for (p, q) in pairs {
            let c = characteristic(&w, &b, &pair(p, q)).unwrap().value;
            assert!(rel(c, scalar_apq(&v, &b, p, q)) < 1e-12, "({p},{q})");
        }
    }
}

#[test]
fn reverse_holder_two_atoms() {
    let (g, b) = dyadic(1, 1);
    let w = scalar_field(&g, &[1.0, 2.0]);
    let rh = rh_characteristic(&w, &b, 1.0, Exponent::int(2), &DirectionMesh::default_for(1)).unwrap();
    assert!(rel(rh.value, 2.5f64.sqrt() / 1.5) < 1e-12);
}

#[test]
fn reducing_operator_sandwich_on_the_mesh() {
    let g = Grid::new(1, 1, None).unwrap();
    let w =
        MatrixWeightField::new(&g, vec![SpdMatrix::diag(&[1.0, 2.0]).unwrap(), SpdMatrix::diag(&[2.0, 1.0]).unwrap()])
            .unwrap();
    let mesh = DirectionMesh::circle(360);
    let a = reducing_operator_on(&w, &[0, 1], Exponent::int(3), &mesh).unwrap();
    for v in mesh.iter() {
        let direct = ((w.value(0).apply_norm(v).powi(3) + w.value(1).apply_norm(v).powi(3)) / 2.0).cbrt();
        let av = a.apply_norm(v);
        assert!(av <= direct * (1.0 + 1e-9));
        assert!(direct <= 2f64.sqrt() * av * (1.0 + 1e-6));
    }
}

#[test]
fn reducing_operator_at_two_is_exact() {
    let (g, _) = dyadic(1, 3);
    let w = random_field(&g, 3, 1.0, 4);
    let atoms: Vec<u32> = (0..8).collect();
    let a = reducing_operator_on(&w, &atoms, Exponent::int(2), &DirectionMesh::default_for(3)).unwrap();
    let mut r = rng(1);
    for _ in 0..50 {
        let v: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let direct = (w.values().iter().map(|m| m.apply_norm(&v).powi(2)).sum::<f64>() / 8.0).sqrt();
        assert!(rel(a.apply_norm(&v), direct) < 1e-10);
    }
}

fn rotated_power_field(level: u32) -> (Grid, BoxBasis, MatrixWeightField) {
    let (g, b) = dyadic(1, level);
    let spec = WeightFamilySpec::RotatedPower {
        a: 0.3,
        b: -0.4,
        theta: ThetaField::Linear { offset: 0.0, slope: vec![2.0] },
        center: None,
    };
    let w = sample_weight(&spec, &g).unwrap();
    (g, b, w)
}

#[test]
fn reducing_ratio_within_envelope() {
    let (_, b, w) = rotated_power_field(4);
    let mesh = DirectionMesh::default_for(2);
    for p in [Exponent::int(2), Exponent::int(3)] {
        let rep = reducing_characteristic(&w, &b, p, &mesh).unwrap();
        assert!(rep.ratio >= rep.envelope.0 && rep.ratio <= rep.envelope.1, "p = {p}: {}", rep.ratio);
    }
}

#[test]
fn duality_ratio_within_envelope() {
    let (_, b, w) = rotated_power_field(4);
    let rep = duality_check(&w, &b, Exponent::int(3)).unwrap();
    assert!(rep.ratio >= rep.envelope.0 && rep.ratio <= rep.envelope.1);
}

#[test]
fn apq_relations_on_rotated_power() {
    let (_, b, w) = rotated_power_field(4);
    let mesh = DirectionMesh::default_for(2);
    let rel_ = apq_relation_check(&w, &b, &pair(Exponent::int(2), Exponent::int(4)), &mesh).unwrap();
    assert!(rel_.ledger.all_pass(), "{:?}", rel_.ledger.failures().collect::<Vec<_>>());
    let diag = apq_relation_check(&w, &b, &pair(Exponent::int(2), Exponent::int(2)), &mesh).unwrap();
    assert!(diag.ledger.iter().any(|c| c.check_id == "apq.i.equality"));
    assert!(diag.ledger.all_pass());
}

#[test]
fn identity_weight_on_all_bases() {
    let grids = [
        (Grid::new(2, 2, None).unwrap(), BasisKind::Cubes),
        (Grid::new(2, 2, None).unwrap(), BasisKind::Rectangles),
        (Grid::new(2, 2, Some(vec![1, 1])).unwrap(), BasisKind::Multiparam),
        (Grid::new(3, 2, None).unwrap(), BasisKind::Zygmund),
    ];
    for (g, kind) in grids {
        let b = basis(&g, kind);
        let w = MatrixWeightField::identity(&g, 2);
        let c = characteristic(&w, &b, &pair(Exponent::ratio(3, 2), Exponent::int(3))).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12, "{kind:?}");
    }
}

#[test]
fn scan_control_ratio_is_one() {
    let spec =
        ScanSpec { kappas: vec![1.0], amplitudes: vec![0.3], levels: vec![3, 4], control_amplitudes: vec![0.0, 0.6] };
    let rows = counterexample_scan(&spec, &pair(Exponent::int(2), Exponent::int(4))).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r.family == "control_d1") {
        assert!((r.ratio - 1.0).abs() < 1e-10 && !r.flagged);
    }
}

/// `[W]_{A_{p,q}}` from the definition, one atom pair at a time.
fn matrix_apq(w: &MatrixWeightField, basis: &BoxBasis, e: &ExponentPair) -> f64 {
    let winv = w.inverse().unwrap();
    let table: Vec<Vec<f64>> = (0..w.len())
        .map(|x| (0..w.len()).map(|y| power_iteration_norm(&w.value(x).matrix().mul(winv.value(y).matrix()))).collect())
        .collect();
    let n = |x: usize, y: usize| table[x][y];
    let (pc, q) = (e.p_conj.to_f64(), e.qf());
    let mut best: f64 = 0.0;
    for b in 0..basis.len() {
        let atoms: Vec<usize> = basis.box_atoms(b).iter().map(|&a| a as usize).collect();
        let inner = |x: usize| -> f64 {
            if e.p.is_one() {
                mean(&atoms.iter().map(|&y| n(y, x).powf(q)).collect::<Vec<_>>()).powf(1.0 / q)
            } else if pc.is_infinite() {
                atoms.iter().map(|&y| n(x, y)).fold(0.0, f64::max)
            } else {
                mean(&atoms.iter().map(|&y| n(x, y).powf(pc)).collect::<Vec<_>>()).powf(1.0 / pc)
            }
        };
        let vals: Vec<f64> = atoms.iter().map(|&x| inner(x)).collect();
        let val = if e.p.is_one() || q.is_infinite() {
            vals.iter().cloned().fold(0.0, f64::max)
        } else {
            mean(&vals.iter().map(|v| v.powf(q)).collect::<Vec<_>>()).powf(1.0 / q)
        };
        best = best.max(val);
    }
    best
}

#[test]
fn repeated_matrices_match_the_pairwise_definition() {
    // Constant on cells of level 2 inside a level-5 grid, so large boxes
    // carry only a few distinct matrices.
    let g = Grid::new(1, 5, None).unwrap();
    let b = basis(&g, BasisKind::Cubes);
    for seed in 0..3 {
        let spec = WeightFamilySpec::Random { d: 2, seed, spread: 1.2, cell_level: Some(2) };
        let w = sample_weight(&spec, &g).unwrap();
        for e in [
            pair(Exponent::ONE, Exponent::ONE),
            pair(Exponent::ONE, Exponent::int(3)),
            pair(Exponent::ratio(3, 2), Exponent::int(3)),
            pair(Exponent::int(2), Exponent::INF),
            pair(Exponent::INF, Exponent::INF),
        ] {
            let got = characteristic(&w, &b, &e).unwrap().value;
            assert!(rel(got, matrix_apq(&w, &b, &e)) < 1e-10, "seed {seed} {e}");
        }
    }
}

fn exponent_strategy() -> impl Strategy<Value = ExponentPair> {
    prop_oneof![
        Just(pair(Exponent::ONE, Exponent::int(2))),
        Just(pair(Exponent::ratio(3, 2), Exponent::ratio(3, 2))),
        Just(pair(Exponent::int(2), Exponent::int(3))),
        Just(pair(Exponent::int(3), Exponent::INF)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn characteristic_at_least_one(seed in any::<u64>(), e in exponent_strategy(), d in 1usize..=3) {
        let (g, b) = dyadic(1, 3);
        let w = random_field(&g, d, 1.5, seed);
        prop_assert!(characteristic(&w, &b, &e).unwrap().value >= 1.0 - 1e-12);
    }

    #[test]
    fn scale_and_rotation_invariance(seed in any::<u64>(), e in exponent_strategy(), c in 0.01f64..100.0, th in 0.0f64..6.3) {
        let (g, b) = dyadic(1, 3);
        let w = random_field(&g, 2, 1.5, seed);
        let base = characteristic(&w, &b, &e).unwrap().value;
        let scaled = characteristic(&w.scaled(c).unwrap(), &b, &e).unwrap().value;
        let u = Mat::rotation2(th);
        let conj = MatrixWeightField::new(&g, w.values().iter().map(|m| m.conjugated(&u).unwrap()).collect()).unwrap();
        let turned = characteristic(&conj, &b, &e).unwrap().value;
        prop_assert!(rel(scaled, base) < 1e-10);
        prop_assert!(rel(turned, base) < 1e-9);
    }

    #[test]
    fn scalar_power_identity(seed in any::<u64>()) {
        let (g, b) = dyadic(1, 4);
        let mut r = rng(seed);
        let v: Vec<f64> = (0..g.atom_count()).map(|_| r.gen_range(-1.0f64..1.0).exp()).collect();
        let w = scalar_field(&g, &v);
        let e = pair(Exponent::int(2), Exponent::int(4));
        let s = e.sf();
        let lhs = characteristic(&w, &b, &e).unwrap().value.powf(s);
        let rhs = characteristic(&w.power(s).unwrap(), &b, &ExponentPair::diagonal(e.r).unwrap()).unwrap().value;
        prop_assert!(rel(lhs, rhs) < 1e-10);
    }
}
