mod common;

use common::*;
use mwlab::geometry::{BasisKind, Grid};
use mwlab::spd::Mat;
use mwlab::weights::*;

#[test]
fn scalar_power_cell_values() {
    let g = Grid::new(1, 6, None).unwrap();
    let w = sample_weight(&WeightFamilySpec::ScalarPower { a: 0.3, center: Some(vec![0.0]), d: 1 }, &g).unwrap();
    for a in [0usize, 1, 17, 63] {
        let x = (a as f64 + 0.5) / 64.0;
        assert!(rel(w.value(a).matrix().get(0, 0), x.powf(0.3)) < 1e-14);
    }
}

#[test]
fn rotated_power_square_matches_spectral_formula() {
    let g = Grid::new(1, 4, None).unwrap();
    let (a, b) = (0.4, -0.7);
    let theta = ThetaField::Linear { offset: 0.2, slope: vec![3.0] };
    let w = sample_weight(&WeightFamilySpec::RotatedPower { a, b, theta, center: None }, &g).unwrap();
    let sq = field_power(&w, 2.0).unwrap();
    for i in 0..g.atom_count() {
        let x = (i as f64 + 0.5) / 16.0;
        let r = (x - 0.5).abs();
        let want = rotated(0.2 + 3.0 * x, [r.powf(2.0 * a), r.powf(2.0 * b)]);
        let got = sq.value(i).matrix();
        assert!(got.sub(&want).frobenius() <= 1e-12 * want.frobenius(), "atom {i}");
    }
}

#[test]
fn integrability_report_matches_direct_sums() {
    let g = Grid::new(1, 3, None).unwrap();
    let basis = basis(&g, BasisKind::Dyadic);
    let w = sample_weight(&WeightFamilySpec::ScalarPower { a: 0.3, center: None, d: 1 }, &g).unwrap();
    let rep = local_integrability_report(&w, &basis, 2.0).unwrap();
    assert_eq!(rep.len(), 1);
    let vals: Vec<f64> = (0..8).map(|i| ((i as f64 + 0.5) / 8.0 - 0.5f64).abs().powf(0.3)).collect();
    let mut mp: f64 = 0.0;
    let mut mq: f64 = 0.0;
    for k in 0..=3u32 {
        let len = 8 >> k;
        for start in (0..8).step_by(len) {
            let sl = &vals[start..start + len];
            mp = mp.max(sl.iter().map(|v| v * v).sum::<f64>() / len as f64);
            mq = mq.max(sl.iter().map(|v| v.powi(-2)).sum::<f64>() / len as f64);
        }
    }
    assert!(rel(rep[0].max_avg_norm_p, mp) < 1e-12);
    assert!(rel(rep[0].max_avg_inverse_norm_pconj, mq) < 1e-12);
}

#[test]
fn json_round_trip() {
    let g = Grid::new(1, 2, None).unwrap();
    let w = random_field(&g, 2, 1.0, 3);
    let back = MatrixWeightField::from_json(&w.to_json()).unwrap();
    assert_eq!(back.values(), w.values());
}

#[test]
fn asymmetric_explicit_weight_is_rejected() {
    let g = Grid::new(1, 1, None).unwrap();
    let atoms = vec![vec![1.0, 0.5, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]];
    assert!(sample_weight(&WeightFamilySpec::Explicit { d: 2, atoms }, &g).is_err());
    let _ = Mat::identity(2);
}
