//! Closed symmetric convex bodies and the set-valued operators built on them.
//!
//! Ellipsoids `M·B̄` and segments `clconv{-v, v}` are kept symbolic. Every
//! other body is stored by its support function sampled on a shared
//! [`DirectionMesh`]; sums become sums of samples and hulls of unions become
//! pointwise maxima, which is exact on the mesh.
//!
//! The weighted size `|W K| = sup_{v ∈ K} |W v|` equals
//! `sup_u h_K(u) / |W^{-1} u|`. For sampled bodies the sup runs over mesh
//! directions only, which never exceeds the true value and keeps the
//! containment `K ⊆ |W K| W^{-1} B̄` exact on the mesh.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{domain, Error, Result};
use crate::geometry::{BoxBasis, Grid, GridBox};
use crate::mesh::DirectionMesh;
use crate::spd::{prod_op_norm, Mat, SpdMatrix};
use crate::stats::power_mean;
use crate::weights::MatrixWeightField;

/// Relative tolerance for recognizing proportional ellipsoids and segments.
const SHAPE_TOL: f64 = 1e-13;

/// A closed, bounded, symmetric convex body in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexBody {
    /// `M·B̄`; `h(u) = |M^t u|`.
    Ellipsoid(Mat),
    /// `clconv{-v, v}`; `h(u) = |<v, u>|`.
    Segment(Vec<f64>),
    /// Support values on the mesh, one per mesh point.
    Sampled(Arc<DirectionMesh>, Vec<f64>),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `t` with `b = t a`, if it exists up to `SHAPE_TOL`.
fn proportional(a: &[f64], b: &[f64]) -> Option<f64> {
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Some(0.0);
    }
    let (k, pivot) = a.iter().enumerate().fold((0, 0.0f64), |m, (i, x)| if x.abs() > m.1 { (i, x.abs()) } else { m });
    if pivot == 0.0 {
        return None;
    }
    let t = b[k] / a[k];
    a.iter().zip(b).all(|(x, y)| (y - t * x).abs() <= SHAPE_TOL * scale).then_some(t)
}

fn nearest_mesh_point(mesh: &DirectionMesh, u: &[f64]) -> (usize, f64) {
    mesh.iter().enumerate().map(|(k, p)| (k, dot(p, u).abs())).fold((0, f64::NEG_INFINITY), |m, x| {
        if x.1 > m.1 {
            x
        } else {
            m
        }
    })
}

impl ConvexBody {
    /// The closed unit ball of `R^d`.
    pub fn unit_ball(d: usize) -> ConvexBody {
        ConvexBody::Ellipsoid(Mat::identity(d))
    }

    /// `{0}`.
    pub fn zero(d: usize) -> ConvexBody {
        ConvexBody::Segment(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ellipsoid(m) => m.dim(),
            ConvexBody::Segment(v) => v.len(),
            ConvexBody::Sampled(mesh, _) => mesh.dim(),
        }
    }

    /// `h_K(u)`. Exact for symbolic bodies and for sampled bodies at mesh
    /// points; off the mesh a sampled body uses the nearest mesh direction.
    pub fn support(&self, u: &[f64]) -> f64 {
        match self {
            ConvexBody::Ellipsoid(m) => m.transpose().apply_norm(u),
            ConvexBody::Segment(v) => dot(v, u).abs(),
            ConvexBody::Sampled(mesh, h) => {
                let len = norm(u);
                if len == 0.0 {
                    return 0.0;
                }
                h[nearest_mesh_point(mesh, u).0] * len
            }
        }
    }

    /// Support values at every point of `mesh`.
    pub fn samples(&self, mesh: &DirectionMesh) -> Vec<f64> {
        match self {
            ConvexBody::Sampled(m, h) if m.as_ref() == mesh => h.clone(),
            _ => mesh.iter().map(|u| self.support(u)).collect(),
        }
    }

    /// Converts to the sampled representation on `mesh`.
    pub fn to_sampled(&self, mesh: &Arc<DirectionMesh>) -> ConvexBody {
        ConvexBody::Sampled(mesh.clone(), self.samples(mesh))
    }

    pub fn scaled(&self, c: f64) -> ConvexBody {
        let c = c.abs();
        match self {
            ConvexBody::Ellipsoid(m) => ConvexBody::Ellipsoid(m.scale(c)),
            ConvexBody::Segment(v) => ConvexBody::Segment(v.iter().map(|x| x * c).collect()),
            ConvexBody::Sampled(mesh, h) => ConvexBody::Sampled(mesh.clone(), h.iter().map(|x| x * c).collect()),
        }
    }

    /// `A K`. Sampled bodies are re-sampled through the nearest-direction
    /// rule, so only symbolic bodies transform exactly.
    pub fn transformed(&self, a: &Mat) -> ConvexBody {
        match self {
            ConvexBody::Ellipsoid(m) => ConvexBody::Ellipsoid(a.mul(m)),
            ConvexBody::Segment(v) => ConvexBody::Segment(a.mul_vec(v)),
            ConvexBody::Sampled(mesh, _) => {
                let at = a.transpose();
                let h = mesh.iter().map(|u| self.support(&at.mul_vec(u))).collect();
                ConvexBody::Sampled(mesh.clone(), h)
            }
        }
    }

    /// Euclidean radius `sup_{v ∈ K} |v|`.
    pub fn radius(&self) -> f64 {
        match self {
            ConvexBody::Sampled(_, h) => h.iter().copied().fold(0.0, f64::max),
            _ => body_norm(&SpdMatrix::identity(self.dim()), self),
        }
    }

    /// Minkowski sum `Σ c_i K_i` with `c_i >= 0`. Proportional ellipsoids and
    /// parallel segments stay symbolic; anything else is sampled on `mesh`.
    pub fn combination(terms: &[(f64, &ConvexBody)], mesh: &Arc<DirectionMesh>) -> ConvexBody {
        let d = mesh.dim();
        let live: Vec<(f64, &ConvexBody)> = terms.iter().copied().filter(|(c, _)| *c != 0.0).collect();
        let Some(&(_, first)) = live.first() else {
            return ConvexBody::zero(d);
        };
        match first {
            ConvexBody::Ellipsoid(m0) => {
                let mut total = 0.0;
                for (c, k) in &live {
                    match k {
                        ConvexBody::Ellipsoid(m) => match proportional(m0.entries(), m.entries()) {
                            Some(t) if t >= 0.0 => total += c.abs() * t,
                            _ => return sampled_sum(&live, mesh),
                        },
                        _ => return sampled_sum(&live, mesh),
                    }
                }
                ConvexBody::Ellipsoid(m0.scale(total))
            }
            ConvexBody::Segment(v0) => {
                let mut total = 0.0;
                for (c, k) in &live {
                    match k {
                        ConvexBody::Segment(v) => match proportional(v0, v) {
                            Some(t) => total += c.abs() * t.abs(),
                            None => return sampled_sum(&live, mesh),
                        },
                        _ => return sampled_sum(&live, mesh),
                    }
                }
                ConvexBody::Segment(v0.iter().map(|x| x * total).collect())
            }
            ConvexBody::Sampled(..) => sampled_sum(&live, mesh),
        }
    }

    /// `K ∩ kB̄`. Exact for segments and for bodies already inside `kB̄`;
    /// otherwise the support samples are clipped at `k`, which can only
    /// over-approximate the intersection.
    pub fn truncated(&self, k: f64, mesh: &Arc<DirectionMesh>) -> ConvexBody {
        match self {
            ConvexBody::Segment(v) => {
                let len = norm(v);
                if len <= k {
                    self.clone()
                } else {
                    self.scaled(k / len)
                }
            }
            _ if self.radius() <= k => self.clone(),
            _ => ConvexBody::Sampled(mesh.clone(), self.samples(mesh).into_iter().map(|h| h.min(k)).collect()),
        }
    }

    /// JSON `{mesh_id, representation, payload}`.
    pub fn to_json(&self, mesh: &DirectionMesh) -> Value {
        let (rep, payload) = match self {
            ConvexBody::Ellipsoid(m) => ("ellipsoid", json!(m.rows())),
            ConvexBody::Segment(v) => ("segment", json!(v)),
            ConvexBody::Sampled(_, h) => ("sampled", json!(h)),
        };
        json!({ "mesh_id": mesh_id(mesh), "representation": rep, "payload": payload })
    }
}

fn sampled_sum(terms: &[(f64, &ConvexBody)], mesh: &Arc<DirectionMesh>) -> ConvexBody {
    let mut h = vec![0.0; mesh.len()];
    for (c, k) in terms {
        for (acc, s) in h.iter_mut().zip(k.samples(mesh)) {
            *acc += c.abs() * s;
        }
    }
    ConvexBody::Sampled(mesh.clone(), h)
}

/// Stable identifier of a mesh, for exports.
pub fn mesh_id(mesh: &DirectionMesh) -> String {
    format!("d{}-n{}", mesh.dim(), mesh.len())
}

/// `|W K| = sup_{v ∈ K} |W v|` for a positive definite `W`.
///
/// Exact for ellipsoids (`|W M|_op`) and segments (`|W v|`); for sampled
/// bodies it is `max_k h_k / |W^{-1} u_k|` over the mesh.
pub fn body_norm(w: &SpdMatrix, k: &ConvexBody) -> f64 {
    match k {
        ConvexBody::Ellipsoid(m) => prod_op_norm(w.matrix(), m),
        ConvexBody::Segment(v) => w.apply_norm(v),
        ConvexBody::Sampled(mesh, h) => {
            let winv = w.inverse().expect("positive definite weight");
            mesh.iter().zip(h).map(|(u, &hk)| if hk == 0.0 { 0.0 } else { hk / winv.apply_norm(u) }).fold(0.0, f64::max)
        }
    }
}

/// Largest value of `h((u1 + u2)/|u1 + u2|)·|u1 + u2| - h(u1) - h(u2)` over
/// seeded pairs of mesh points whose normalized sum is again a mesh point.
/// Nonpositive values (up to rounding) mean the samples pass the audit.
pub fn subadditivity_violation(mesh: &DirectionMesh, h: &[f64], picks: usize, seed: u64) -> f64 {
    let n = mesh.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample(&mut rng, n, picks.min(n)).into_vec();
    let mut worst = f64::NEG_INFINITY;
    for &i in &idx {
        for &j in &idx {
            let s: Vec<f64> = mesh.point(i).iter().zip(mesh.point(j)).map(|(a, b)| a + b).collect();
            let len = norm(&s);
            if len < 1e-9 {
                continue;
            }
            let u: Vec<f64> = s.iter().map(|x| x / len).collect();
            let (k, c) = nearest_mesh_point(mesh, &u);
            if c < 1.0 - 1e-12 {
                continue;
            }
            worst = worst.max(h[k] * len - h[i] - h[j]);
        }
    }
    worst
}

/// A body at every atom of a grid, on one shared mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyField {
    grid: Grid,
    d: usize,
    mesh: Arc<DirectionMesh>,
    bodies: Vec<ConvexBody>,
}

impl BodyField {
    pub fn new(grid: &Grid, mesh: Arc<DirectionMesh>, bodies: Vec<ConvexBody>) -> Result<BodyField> {
        if bodies.len() != grid.atom_count() {
            return Err(domain(format!("body field has {} bodies for {} atoms", bodies.len(), grid.atom_count())));
        }
        let d = mesh.dim();
        if let Some(a) = bodies.iter().position(|b| b.dim() != d) {
            return Err(domain(format!("body at atom {a} has dimension {}, mesh has {d}", bodies[a].dim())));
        }
        Ok(BodyField { grid: grid.clone(), d, mesh, bodies })
    }

    /// `W(x)·B̄` at every atom.
    pub fn from_weight(w: &MatrixWeightField, mesh: Arc<DirectionMesh>) -> Result<BodyField> {
        let bodies = w.values().iter().map(|m| ConvexBody::Ellipsoid(*m.matrix())).collect();
        BodyField::new(w.grid(), mesh, bodies)
    }

    /// `clconv{-f(x), f(x)}` from row-major vectors, `d` entries per atom.
    pub fn segments(grid: &Grid, mesh: Arc<DirectionMesh>, values: &[f64]) -> Result<BodyField> {
        let d = mesh.dim();
        if values.len() != d * grid.atom_count() {
            return Err(domain("segment data does not match grid and dimension"));
        }
        let bodies = values.chunks(d).map(|v| ConvexBody::Segment(v.to_vec())).collect();
        BodyField::new(grid, mesh, bodies)
    }

    pub fn constant(grid: &Grid, mesh: Arc<DirectionMesh>, k: &ConvexBody) -> Result<BodyField> {
        BodyField::new(grid, mesh, vec![k.clone(); grid.atom_count()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mesh(&self) -> &Arc<DirectionMesh> {
        &self.mesh
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn body(&self, a: usize) -> &ConvexBody {
        &self.bodies[a]
    }

    pub fn bodies(&self) -> &[ConvexBody] {
        &self.bodies
    }

    fn with_bodies(&self, bodies: Vec<ConvexBody>) -> BodyField {
        BodyField { grid: self.grid.clone(), d: self.d, mesh: self.mesh.clone(), bodies }
    }

    pub fn scaled(&self, c: f64) -> BodyField {
        self.with_bodies(self.bodies.iter().map(|b| b.scaled(c)).collect())
    }

    /// Atomwise `c(x) F(x)`.
    pub fn scaled_by(&self, c: &[f64]) -> BodyField {
        self.with_bodies(self.bodies.iter().zip(c).map(|(b, &c)| b.scaled(c)).collect())
    }

    /// Atomwise `Σ c_i F_i(x)`.
    pub fn combination(terms: &[(f64, &BodyField)]) -> Result<BodyField> {
        let first = terms.first().ok_or_else(|| domain("empty combination of body fields"))?.1;
        if terms.iter().any(|(_, f)| !f.grid.same_atoms(&first.grid) || f.mesh != first.mesh) {
            return Err(domain("body fields live on different grids or meshes"));
        }
        let bodies = (0..first.len())
            .into_par_iter()
            .map(|a| {
                let t: Vec<(f64, &ConvexBody)> = terms.iter().map(|(c, f)| (*c, f.body(a))).collect();
                ConvexBody::combination(&t, &first.mesh)
            })
            .collect();
        Ok(first.with_bodies(bodies))
    }

    /// Support samples of every atom, `table[a][k] = h_{F(a)}(u_k)`.
    pub fn sample_table(&self) -> Vec<Vec<f64>> {
        self.bodies.par_iter().map(|b| b.samples(&self.mesh)).collect()
    }

    fn with_table(&self, table: Vec<Vec<f64>>) -> BodyField {
        let mesh = self.mesh.clone();
        self.with_bodies(table.into_iter().map(|h| ConvexBody::Sampled(mesh.clone(), h)).collect())
    }

    /// `|W(x) F(x)|` at every atom.
    pub fn norms(&self, w: &MatrixWeightField) -> Result<Vec<f64>> {
        self.check_weight(w)?;
        w.require_nondegenerate()?;
        Ok(self.bodies.par_iter().zip(w.values()).map(|(b, m)| body_norm(m, b)).collect())
    }

    /// `‖F‖_{L^p_K(W)} = (mean_x |W(x) F(x)|^p)^{1/p}`, `p = ∞` the maximum.
    pub fn lp_norm(&self, w: &MatrixWeightField, p: f64) -> Result<f64> {
        Ok(power_mean(&self.norms(w)?, p))
    }

    fn check_weight(&self, w: &MatrixWeightField) -> Result<()> {
        if !w.grid().same_atoms(&self.grid) || w.dim() != self.d {
            return Err(domain("weight and body field do not match"));
        }
        Ok(())
    }

    /// One JSON record per atom.
    pub fn to_json(&self) -> Value {
        Value::Array(self.bodies.iter().map(|b| b.to_json(&self.mesh)).collect())
    }
}

/// Largest support-sample excess of `a` over `b`, `max_{x,u} h_a - h_b`.
/// Nonpositive means `a ⊆ b` atomwise on the mesh.
pub fn containment_excess(a: &BodyField, b: &BodyField) -> f64 {
    let (ta, tb) = (a.sample_table(), b.sample_table());
    ta.iter().zip(&tb).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q)).fold(f64::NEG_INFINITY, f64::max)
}

/// Aumann average `⨍_B F`: mean of support functions over the atoms of `b`.
pub fn aumann_average(f: &BodyField, b: &GridBox) -> ConvexBody {
    let atoms = b.atoms(&f.grid);
    let c = 1.0 / atoms.len() as f64;
    let terms: Vec<(f64, &ConvexBody)> = atoms.iter().map(|&a| (c, f.body(a))).collect();
    ConvexBody::combination(&terms, &f.mesh)
}

/// Per-box mean support samples, then the pointwise maximum over the boxes
/// covering each atom. Uncovered atoms get `{0}`.
pub(crate) fn max_of_averages(table: &[Vec<f64>], basis: &BoxBasis, atoms: usize, len: usize) -> Vec<Vec<f64>> {
    let means: Vec<Vec<f64>> = (0..basis.len())
        .into_par_iter()
        .map(|b| {
            let ids = basis.box_atoms(b);
            let mut acc = vec![0.0; len];
            for &a in ids {
                for (s, h) in acc.iter_mut().zip(&table[a as usize]) {
                    *s += h;
                }
            }
            let c = 1.0 / ids.len() as f64;
            acc.iter_mut().for_each(|s| *s *= c);
            acc
        })
        .collect();
    (0..atoms)
        .into_par_iter()
        .map(|a| {
            let mut best = vec![0.0f64; len];
            for &b in basis.covering(a) {
                for (m, h) in best.iter_mut().zip(&means[b as usize]) {
                    *m = m.max(*h);
                }
            }
            best
        })
        .collect()
}

/// The set-valued maximal operator `M_B F(x) = clconv ⋃_{B ∋ x} ⨍_B F`,
/// realized as the pointwise maximum of averaged support functions.
pub fn convex_max(f: &BodyField, basis: &BoxBasis) -> Result<BodyField> {
    if !basis.grid().same_atoms(&f.grid) {
        return Err(domain("basis and body field live on different grids"));
    }
    let table = max_of_averages(&f.sample_table(), basis, f.len(), f.mesh.len());
    Ok(f.with_table(table))
}

/// The exhausting operator `N_W H(x) = |W(x) H(x)|·W(x)^{-1} B̄`.
pub fn exhaust(w: &MatrixWeightField, h: &BodyField) -> Result<BodyField> {
    let norms = h.norms(w)?;
    let bodies = w
        .values()
        .par_iter()
        .zip(&norms)
        .map(|(m, &c)| Ok(ConvexBody::Ellipsoid(m.inverse()?.matrix().scale(c))))
        .collect::<Result<Vec<_>>>()?;
    Ok(h.with_bodies(bodies))
}

/// Smallest `C` with `M_B F(x) ⊆ C F(x)` on the mesh.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A1kReport {
    pub value: f64,
    pub infinite: bool,
    /// Atom and mesh index attaining the value.
    pub witness: Option<(usize, usize)>,
}

/// `max_x max_u h_{M_B F(x)}(u) / h_{F(x)}(u)` over covered atoms; a zero
/// denominator under a nonzero numerator is reported as infinite.
pub fn a1k_constant(f: &BodyField, basis: &BoxBasis) -> Result<A1kReport> {
    let mf = convex_max(f, basis)?;
    let (num, den) = (mf.sample_table(), f.sample_table());
    let mut best = A1kReport { value: 0.0, infinite: false, witness: None };
    for a in (0..f.len()).filter(|&a| basis.is_covered(a)) {
        for (k, (&n, &d)) in num[a].iter().zip(&den[a]).enumerate() {
            let r = if d > 0.0 {
                n / d
            } else if n > 1e-300 {
                f64::INFINITY
            } else {
                continue;
            };
            if r > best.value || best.witness.is_none() {
                best = A1kReport { value: r, infinite: r.is_infinite(), witness: Some((a, k)) };
            }
        }
    }
    Ok(best)
}

/// `F_k(x) = (F(x) ∩ kB̄)·χ_{|x| <= k}`, with `|x|` the distance of the atom
/// center from the origin measured in atom side lengths.
pub fn truncate(f: &BodyField, k: f64) -> BodyField {
    let bodies = (0..f.len())
        .map(|a| {
            let c = f.grid.atom_coords(a);
            let r = c.iter().map(|&x| (x as f64 + 0.5).powi(2)).sum::<f64>().sqrt();
            if r <= k {
                f.body(a).truncated(k, &f.mesh)
            } else {
                ConvexBody::zero(f.d)
            }
        })
        .collect();
    f.with_bodies(bodies)
}

/// Checks that a user-supplied sampled body is even and mesh-subadditive.
pub fn validate_sampled(mesh: &DirectionMesh, h: &[f64], seed: u64) -> Result<()> {
    if h.len() != mesh.len() {
        return Err(Error::Construction(format!("{} support values for a mesh of {} points", h.len(), mesh.len())));
    }
    if h.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Construction("support values must be finite and nonnegative".into()));
    }
    let v = subadditivity_violation(mesh, h, 64, seed);
    if v > 1e-9 {
        return Err(Error::Construction(format!("support samples fail subadditivity by {v:e}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BasisKind, EnumerationCaps};

    fn mesh2() -> Arc<DirectionMesh> {
        Arc::new(DirectionMesh::default_for(2))
    }

    #[test]
    fn symbolic_norms() {
        let w = SpdMatrix::diag(&[3.0, 1.0]).unwrap();
        assert_eq!(body_norm(&w, &ConvexBody::Segment(vec![1.0, 0.0])), 3.0);
        let i = SpdMatrix::identity(2);
        assert!((body_norm(&i, &ConvexBody::unit_ball(2)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampled_norm_never_exceeds_exact() {
        let m = Mat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let w = SpdMatrix::from_rows(&[vec![1.5, -0.3], vec![-0.3, 0.7]]).unwrap();
        let e = ConvexBody::Ellipsoid(m);
        let s = e.to_sampled(&mesh2());
        let (exact, approx) = (body_norm(&w, &e), body_norm(&w, &s));
        assert!(approx <= exact * (1.0 + 1e-14));
        assert!(approx >= exact * (1.0 - 1e-4));
    }

    #[test]
    fn proportional_ellipsoids_stay_symbolic() {
        let m = Mat::diag(&[1.0, 2.0]);
        let a = ConvexBody::Ellipsoid(m);
        let b = ConvexBody::Ellipsoid(m.scale(3.0));
        match ConvexBody::combination(&[(1.0, &a), (0.5, &b)], &mesh2()) {
            ConvexBody::Ellipsoid(s) => assert!((s.get(1, 1) - 5.0).abs() < 1e-14),
            other => panic!("expected an ellipsoid, got {other:?}"),
        }
    }

    #[test]
    fn leftmost_segment_seen_from_the_right() {
        let g = Grid::new(1, 2, None).unwrap();
        let basis = BoxBasis::enumerate(&g, BasisKind::Dyadic, &EnumerationCaps::default()).unwrap();
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        let f = BodyField::segments(&g, mesh2(), &v).unwrap();
        let mf = convex_max(&f, &basis).unwrap();
        let e1 = [1.0, 0.0];
        assert!((mf.body(3).support(&e1) - 0.25).abs() < 1e-15);
        assert!((mf.body(0).support(&e1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn a1k_two_atoms() {
        let g = Grid::new(1, 1, None).unwrap();
        let mesh = Arc::new(DirectionMesh::default_for(1));
        let f = BodyField::segments(&g, mesh, &[1.0, 2.0]).unwrap();
        let basis = BoxBasis::enumerate(&g, BasisKind::Dyadic, &EnumerationCaps::default()).unwrap();
        let r = a1k_constant(&f, &basis).unwrap();
        assert!((r.value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_samples_are_subadditive() {
        let mesh = mesh2();
        let e = ConvexBody::Ellipsoid(Mat::diag(&[3.0, 0.2]));
        assert!(subadditivity_violation(&mesh, &e.samples(&mesh), 64, 1) <= 1e-12);
        let bad: Vec<f64> = mesh.iter().map(|u| u[0].abs().powi(2)).collect();
        assert!(validate_sampled(&mesh, &bad, 1).is_err());
    }
}
