#![allow(dead_code)]

use mwlab::geometry::{BasisKind, BoxBasis, EnumerationCaps, Grid};
use mwlab::spd::{Mat, SpdMatrix};
use mwlab::weights::{random_spd, MatrixWeightField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dyadic(n: usize, level: u32) -> (Grid, BoxBasis) {
    let g = Grid::new(n, level, None).unwrap();
    let b = BoxBasis::enumerate(&g, BasisKind::Dyadic, &EnumerationCaps::default()).unwrap();
    (g, b)
}

pub fn basis(g: &Grid, kind: BasisKind) -> BoxBasis {
    BoxBasis::enumerate(g, kind, &EnumerationCaps::default()).unwrap()
}

pub fn random_field(g: &Grid, d: usize, spread: f64, seed: u64) -> MatrixWeightField {
    let mut r = rng(seed);
    MatrixWeightField::new(g, (0..g.atom_count()).map(|_| random_spd(d, spread, &mut r)).collect()).unwrap()
}

pub fn scalar_field(g: &Grid, values: &[f64]) -> MatrixWeightField {
    MatrixWeightField::new(g, values.iter().map(|&v| SpdMatrix::scalar(1, v).unwrap()).collect()).unwrap()
}

pub fn rotated(theta: f64, diag: [f64; 2]) -> Mat {
    let r = Mat::rotation2(theta);
    r.mul(&Mat::diag(&diag)).mul(&r.transpose())
}

/// Largest singular value of a 2×2 matrix from `σ² = (T ± sqrt(T² - 4 det²)) / 2`.
pub fn svd2_max(m: &Mat) -> f64 {
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let t = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    ((t + (t * t - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

/// Largest singular value by the power method on `M^t M`, for any order.
/// Repeated squaring makes the iterate a multiple of the projector onto the
/// top eigenspace even when the spectral gap is tiny; a Rayleigh quotient
/// against the original `M^t M` then reads off the eigenvalue.
pub fn power_iteration_norm(m: &Mat) -> f64 {
    let g = m.transpose().mul(m);
    let d = m.dim();
    let mut p = g.clone();
    for _ in 0..64 {
        let f = p.frobenius();
        if f == 0.0 {
            return 0.0;
        }
        let q = p.scale(1.0 / f);
        p = q.mul(&q);
    }
    let col = (0..d)
        .max_by(|&a, &b| {
            let na: f64 = (0..d).map(|i| p.get(i, a).powi(2)).sum();
            let nb: f64 = (0..d).map(|i| p.get(i, b).powi(2)).sum();
            na.total_cmp(&nb)
        })
        .unwrap();
    let v: Vec<f64> = (0..d).map(|i| p.get(i, col)).collect();
    let gv = g.mul_vec(&v);
    let num: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

/// Neumaier-compensated mean.
pub fn compensated_mean(xs: &[f64]) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    (s + c) / xs.len() as f64
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    r.gen_range(lo..hi)
}
