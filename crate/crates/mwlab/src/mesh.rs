//! Fixed direction meshes on the unit sphere of `R^d`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spd::MAX_DIM;

/// Unit vectors shared by every body and every direction sup in one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionMesh {
    d: usize,
    points: Vec<f64>,
}

impl DirectionMesh {
    /// Default mesh: `{1}` in `d = 1`, 720 equispaced angles in `d = 2`,
    /// `64 d^2` low-discrepancy points for `d >= 3`.
    pub fn default_for(d: usize) -> DirectionMesh {
        match d {
            1 => DirectionMesh { d, points: vec![1.0] },
            2 => DirectionMesh::circle(720),
            _ => DirectionMesh::sphere(d, 64 * d * d),
        }
    }

    /// Mesh of a requested size; `size` is ignored in `d = 1`.
    pub fn with_size(d: usize, size: usize) -> Result<DirectionMesh> {
        if size == 0 {
            return Err(Error::Config("direction mesh must not be empty".into()));
        }
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::Config(format!("mesh dimension {d} unsupported")));
        }
        Ok(match d {
            1 => DirectionMesh::default_for(1),
            2 => DirectionMesh::circle(size),
            _ => DirectionMesh::sphere(d, size.max(d)),
        })
    }

    /// Equispaced angles on `[0, 2π)`.
    pub fn circle(count: usize) -> DirectionMesh {
        let mut points = Vec::with_capacity(2 * count);
        for k in 0..count {
            let (s, c) = (2.0 * PI * k as f64 / count as f64).sin_cos();
            points.extend_from_slice(&[c, s]);
        }
        DirectionMesh { d: 2, points }
    }

    /// Coordinate axes followed by a deterministic low-discrepancy set:
    /// a Fibonacci lattice when `d = 3`, otherwise a Kronecker sequence pushed
    /// through Box-Muller and normalized.
    pub fn sphere(d: usize, count: usize) -> DirectionMesh {
        let mut points = Vec::with_capacity(d * count);
        for i in 0..d.min(count) {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            points.extend_from_slice(&e);
        }
        let extra = count.saturating_sub(d);
        if d == 3 {
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..extra {
                let z = 1.0 - (2 * k + 1) as f64 / extra as f64;
                let rho = (1.0 - z * z).sqrt();
                let (s, c) = (golden * k as f64).sin_cos();
                points.extend_from_slice(&[rho * c, rho * s, z]);
            }
        } else {
            let m = 2 * d.div_ceil(2);
            let alpha = kronecker_alphas(m);
            for k in 1..=extra {
                let u: Vec<f64> = alpha.iter().map(|a| (0.5 + a * k as f64).fract()).collect();
                let mut g = Vec::with_capacity(m);
                for pair in u.chunks(2) {
                    let r = (-2.0 * (1.0 - pair[0]).ln()).sqrt();
                    let (s, c) = (2.0 * PI * pair[1]).sin_cos();
                    g.push(r * c);
                    g.push(r * s);
                }
                g.truncate(d);
                let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                g.iter_mut().for_each(|x| *x /= n);
                points.extend_from_slice(&g);
            }
        }
        DirectionMesh { d, points }
    }

    /// Mesh from explicit vectors, normalized.
    pub fn from_vectors(d: usize, vectors: &[Vec<f64>]) -> Result<DirectionMesh> {
        if vectors.is_empty() {
            return Err(Error::Config("direction mesh must not be empty".into()));
        }
        let mut points = Vec::with_capacity(d * vectors.len());
        for v in vectors {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if v.len() != d || !(n > 0.0 && n.is_finite()) {
                return Err(Error::Config("mesh vectors must be nonzero and of length d".into()));
            }
            points.extend(v.iter().map(|x| x / n));
        }
        Ok(DirectionMesh { d, points })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }
}

/// Generalized golden-ratio increments for an `m`-dimensional Kronecker set.
fn kronecker_alphas(m: usize) -> Vec<f64> {
    // phi_m is the positive root of x^{m+1} = x + 1.
    let mut x = 2.0f64;
    for _ in 0..60 {
        x = (1.0 + x).powf(1.0 / (m as f64 + 1.0));
    }
    (1..=m).map(|k| x.powi(-(k as i32)).fract()).collect()
}
