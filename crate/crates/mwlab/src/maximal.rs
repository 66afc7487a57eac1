//! Christ–Goldberg maximal operator, operator-norm probes, multiparameter
//! iteration and the triviality classifier for degenerate weights.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::{characteristic, reducing_operator_on};
use crate::convex::{body_norm, convex_max, max_of_averages, BodyField, ConvexBody};
use crate::error::{domain, Result};
use crate::exponent::{Exponent, ExponentPair};
use crate::geometry::{BasisKind, BoxBasis, Grid, GridBox};
use crate::mesh::DirectionMesh;
use crate::spd::{EigenTag, Mat};
use crate::stats::{pairwise_mean, power_mean};
use crate::weights::MatrixWeightField;

/// A vector in `R^d` at every atom, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorField {
    #[serde(skip)]
    grid: Grid,
    d: usize,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: &Grid, d: usize, values: Vec<f64>) -> Result<VectorField> {
        if values.len() != d * grid.atom_count() {
            return Err(domain(format!("vector field needs {} entries, got {}", d * grid.atom_count(), values.len())));
        }
        Ok(VectorField { grid: grid.clone(), d, values })
    }

    pub fn zeros(grid: &Grid, d: usize) -> VectorField {
        VectorField { grid: grid.clone(), d, values: vec![0.0; d * grid.atom_count()] }
    }

    pub fn constant(grid: &Grid, v: &[f64]) -> VectorField {
        let values = v.iter().copied().cycle().take(v.len() * grid.atom_count()).collect();
        VectorField { grid: grid.clone(), d: v.len(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.grid.atom_count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, a: usize) -> &[f64] {
        &self.values[a * self.d..(a + 1) * self.d]
    }

    pub fn set(&mut self, a: usize, v: &[f64]) {
        self.values[a * self.d..(a + 1) * self.d].copy_from_slice(v);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField { grid: self.grid.clone(), d: self.d, values: self.values.iter().map(|x| x * c).collect() }
    }

    /// Atomwise `W(x) f(x)`.
    pub fn apply(&self, w: &MatrixWeightField) -> VectorField {
        let mut out = self.clone();
        for a in 0..self.len() {
            let v = w.value(a).mul_vec(self.at(a));
            out.set(a, &v);
        }
        out
    }

    /// `|f(x)|` at every atom.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.chunks(self.d).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }

    /// CSV with atom coordinates followed by the components.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n();
        let mut s = String::new();
        let head: Vec<String> = (0..n).map(|i| format!("x{i}")).chain((0..self.d).map(|i| format!("v{i}"))).collect();
        s.push_str(&head.join(","));
        s.push('\n');
        for a in 0..self.len() {
            let row: Vec<String> = self
                .grid
                .atom_coords(a)
                .iter()
                .map(|c| c.to_string())
                .chain(self.at(a).iter().map(|x| format!("{x:.17e}")))
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

fn check_grids(w: &MatrixWeightField, basis: &BoxBasis, f: &VectorField) -> Result<()> {
    if !w.grid().same_atoms(basis.grid()) || !f.grid.same_atoms(basis.grid()) {
        return Err(domain("weight, basis and vector field live on different grids"));
    }
    if w.dim() != f.d {
        return Err(domain("weight and vector field dimensions differ"));
    }
    Ok(())
}

/// `M_{W,B} f(x) = max_{B ∋ x} mean_{y ∈ B} |W(x) W^{-1}(y) f(y)|`; atoms
/// outside every box get 0.
pub fn christ_goldberg(w: &MatrixWeightField, basis: &BoxBasis, f: &VectorField) -> Result<Vec<f64>> {
    check_grids(w, basis, f)?;
    w.require_nondegenerate_on((0..w.len()).filter(|&a| basis.is_covered(a)))?;
    let winv = w.inverse()?;
    let g: Vec<Vec<f64>> = (0..f.len()).map(|y| winv.value(y).mul_vec(f.at(y))).collect();
    Ok((0..f.len())
        .into_par_iter()
        .map(|x| {
            let wx = w.value(x).matrix();
            let mut buf = Vec::new();
            basis
                .covering(x)
                .iter()
                .map(|&b| {
                    buf.clear();
                    buf.extend(basis.box_atoms(b as usize).iter().map(|&y| wx.apply_norm(&g[y as usize])));
                    pairwise_mean(&buf)
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Values of the degenerate-weight maximal operator with the atoms where
/// it is infinite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TildeMax {
    pub values: Vec<f64>,
    pub infinite: Vec<bool>,
}

/// `M̃_{W,B} f(x) = max_{B ∋ x} mean_{y ∈ B} |W(x) f(y)|` with `0·∞ = 0`.
pub fn tilde_max(w: &MatrixWeightField, basis: &BoxBasis, f: &VectorField) -> Result<TildeMax> {
    check_grids(w, basis, f)?;
    let values: Vec<f64> = (0..f.len())
        .into_par_iter()
        .map(|x| {
            let wx = w.extended(x);
            basis
                .covering(x)
                .iter()
                .map(|&b| {
                    let ys = basis.box_atoms(b as usize);
                    let terms: Vec<f64> = ys.iter().map(|&y| wx.apply_norm(f.at(y as usize))).collect();
                    if terms.iter().any(|t| t.is_infinite()) {
                        f64::INFINITY
                    } else {
                        pairwise_mean(&terms)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let infinite = values.iter().map(|v| v.is_infinite()).collect();
    Ok(TildeMax { values, infinite })
}

/// Fixed probe family for the operator-norm lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    /// Atoms whose indicators are probed (seeded subset when exceeded).
    pub max_atoms: usize,
    /// Leading basis boxes probed with reducing-operator directions.
    pub max_boxes: usize,
    /// Random-sign combinations on at most 8 atoms.
    pub rademacher: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec { max_atoms: 64, max_boxes: 32, rademacher: 16, seed: 0 }
    }
}

/// Certified lower bound for the norm of `M_{W,B}` on unweighted `L^p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KpRecord {
    pub bound: f64,
    pub witness: String,
    pub probes: usize,
}

/// Probe inputs `g`, labelled.
fn probe_family(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    p: f64,
    spec: &ProbeSpec,
) -> Result<Vec<(String, VectorField)>> {
    let grid = w.grid();
    let d = w.dim();
    let n = grid.atom_count();
    let mut out = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        out.push((format!("constant e{i}"), VectorField::constant(grid, &e)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let atoms: Vec<usize> = if n <= spec.max_atoms {
        (0..n).collect()
    } else {
        let mut v = sample(&mut rng, n, spec.max_atoms).into_vec();
        v.sort_unstable();
        v
    };
    for &a in &atoms {
        let m = w.value(a);
        for i in 0..d {
            let mut g = VectorField::zeros(grid, d);
            g.set(a, &m.eigenvector(i));
            out.push((format!("atom {a} eigenvector {i}"), g));
        }
    }
    if d > 1 {
        let mesh = DirectionMesh::default_for(d);
        let pe = Exponent::from_f64(p.clamp(1.0, 32.0))?;
        for b in 0..basis.len().min(spec.max_boxes) {
            let ids = basis.box_atoms(b);
            let r = reducing_operator_on(w, ids, pe, &mesh)?;
            for i in 0..d {
                let mut g = VectorField::zeros(grid, d);
                let v = r.eigenvector(i);
                for &a in ids {
                    g.set(a as usize, &v);
                }
                out.push((format!("box {b} reducing direction {i}"), g));
            }
        }
    }
    for r in 0..spec.rademacher {
        let k = n.min(8);
        let chosen = sample(&mut rng, n, k).into_vec();
        let mut g = VectorField::zeros(grid, d);
        for &a in &chosen {
            let mut v = vec![0.0; d];
            v[rng.gen_range(0..d)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            g.set(a, &v);
        }
        out.push((format!("rademacher {r}"), g));
    }
    Ok(out)
}

/// `max ‖M_{W,B} g‖_p / ‖g‖_p` over the probe family; `p = ∞` allowed.
///
/// The probe `g` plays the role of `W f`, so the ratio is the one in the
/// matrix Muckenhoupt basis condition.
pub fn kp_lower_bound(w: &MatrixWeightField, basis: &BoxBasis, p: f64, spec: &ProbeSpec) -> Result<KpRecord> {
    if !(p > 1.0) {
        return Err(domain(format!("operator-norm probes need p > 1, got {p}")));
    }
    let probes = probe_family(w, basis, p, spec)?;
    let ratios: Vec<(f64, usize)> = probes
        .par_iter()
        .enumerate()
        .map(|(i, (_, g))| {
            let den = power_mean(&g.magnitudes(), p);
            if den == 0.0 {
                return Ok((f64::NEG_INFINITY, i));
            }
            let num = power_mean(&christ_goldberg(w, basis, g)?, p);
            Ok((num / den, i))
        })
        .collect::<Result<Vec<_>>>()?;
    let (bound, i) = ratios.iter().copied().fold((0.0, 0), |m, x| if x.0 > m.0 { x } else { m });
    Ok(KpRecord { bound, witness: probes[i].0.clone(), probes: probes.len() })
}

/// Envelope for the scalar dyadic maximal function on `L^p(w^p)`:
/// `2^{n+1} e p' [w]_{A_p}^{p'}` in the normalization of this crate.
pub fn kp_scalar_envelope(n: usize, p: f64, w_ap: f64) -> f64 {
    let pc = p / (p - 1.0);
    2f64.powi(n as i32 + 1) * std::f64::consts::E * pc * w_ap.powf(pc)
}

/// Cubes inside block `k` times single atoms in the remaining axes.
pub fn slice_basis(grid: &Grid, k: usize) -> Result<BoxBasis> {
    let blocks = grid.blocks().ok_or_else(|| domain("slice bases need a grid with a block splitting α"))?;
    let axes = blocks.get(k).ok_or_else(|| domain(format!("no block {k}")))?;
    let n = grid.n();
    let m = grid.side();
    let others: Vec<usize> = (0..n).filter(|i| !axes.contains(i)).collect();
    let mut boxes = Vec::new();
    for s in 1..=m {
        let per = m - s + 1;
        let cube_count = per.pow(axes.len() as u32);
        let rest_count = m.pow(others.len() as u32);
        for c in 0..cube_count {
            for r in 0..rest_count {
                let mut lo = vec![0; n];
                let mut hi = vec![0; n];
                let (mut c, mut r) = (c, r);
                for &ax in axes {
                    lo[ax] = c % per;
                    hi[ax] = lo[ax] + s;
                    c /= per;
                }
                for &ax in &others {
                    lo[ax] = r % m;
                    hi[ax] = lo[ax] + 1;
                    r /= m;
                }
                boxes.push(GridBox::new(grid, lo, hi)?);
            }
        }
    }
    BoxBasis::from_boxes(grid, boxes)
}

/// `M^1 M^2 ⋯ M^j F`: the one-parameter cube maximal operator of each block
/// applied slice by slice, block `j` first.
pub fn iterated_max(f: &BodyField) -> Result<BodyField> {
    let blocks = f.grid().blocks().ok_or_else(|| domain("iterated maximal operator needs a grid with α"))?;
    let mut table = f.sample_table();
    for k in (0..blocks.len()).rev() {
        let basis = slice_basis(f.grid(), k)?;
        table = max_of_averages(&table, &basis, f.len(), f.mesh().len());
    }
    let mesh = f.mesh().clone();
    BodyField::new(f.grid(), mesh.clone(), table.into_iter().map(|h| ConvexBody::Sampled(mesh.clone(), h)).collect())
}

/// Largest excess of `M_{R^α} F` over `M^1 ⋯ M^j F` in support samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub violation: f64,
    pub atom: usize,
    pub direction: usize,
}

pub fn containment_check(f: &BodyField, basis: &BoxBasis) -> Result<ContainmentReport> {
    if basis.kind() != BasisKind::Multiparam {
        return Err(domain("containment check needs a multiparameter basis"));
    }
    let full = convex_max(f, basis)?.sample_table();
    let iter = iterated_max(f)?.sample_table();
    let mut rep = ContainmentReport { violation: f64::NEG_INFINITY, atom: 0, direction: 0 };
    for (a, (x, y)) in full.iter().zip(&iter).enumerate() {
        for (k, (p, q)) in x.iter().zip(y).enumerate() {
            if p - q > rep.violation {
                rep = ContainmentReport { violation: p - q, atom: a, direction: k };
            }
        }
    }
    Ok(rep)
}

/// Slice constants of one block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceBlock {
    pub block: usize,
    /// Largest one-parameter `A_p` characteristic over the slices.
    pub max_slice: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceReport {
    pub full: f64,
    pub blocks: Vec<SliceBlock>,
    pub max_ratio: f64,
    pub envelope: f64,
    pub pass: bool,
}

/// Every slice box `Q × {x̂}` is itself a rectangle of `R^α` on the grid, so
/// slice characteristics never exceed the full one.
pub const SLICE_ENVELOPE: f64 = 1.0;

/// One-parameter `A_p` characteristics of all slices against `[W]_{A_{p,R^α}}`.
pub fn slice_characteristic_check(w: &MatrixWeightField, basis: &BoxBasis, p: Exponent) -> Result<SliceReport> {
    if basis.kind() != BasisKind::Multiparam {
        return Err(domain("slice check needs a multiparameter basis"));
    }
    let e = ExponentPair::diagonal(p)?;
    let full = characteristic(w, basis, &e)?.value;
    let nblocks = w.grid().blocks().map_or(0, |b| b.len());
    let mut blocks = Vec::with_capacity(nblocks);
    for k in 0..nblocks {
        let sb = slice_basis(w.grid(), k)?;
        let max_slice = characteristic(w, &sb, &e)?.value;
        blocks.push(SliceBlock { block: k, max_slice, ratio: max_slice / full });
    }
    let max_ratio = blocks.iter().map(|b| b.ratio).fold(0.0, f64::max);
    Ok(SliceReport { full, blocks, max_ratio, envelope: SLICE_ENVELOPE, pass: max_ratio <= SLICE_ENVELOPE + 1e-12 })
}

/// Constant in `M_{W,B} f(x) <= c(d) |W(x) M_B(W^{-1}F)(x)|`: for vectors
/// `v_y`, `mean |v_y| <= Σ_i mean |<v_y, e_i>| <= d·sup_{|z|=1} mean |<v_y, z>|`.
pub fn cg_domination_constant(d: usize) -> f64 {
    d as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    pub violation: f64,
    pub atom: usize,
    pub constant: f64,
}

/// Largest `M_{W,B} f(x) - c(d)·|W(x) M_B(W^{-1}F)(x)|` with
/// `F = clconv{-f, f}`.
pub fn cg_domination_check(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    f: &VectorField,
    mesh: Arc<DirectionMesh>,
) -> Result<DominationReport> {
    let lhs = christ_goldberg(w, basis, f)?;
    let winv = w.inverse()?;
    let g = f.apply(&winv);
    let field = BodyField::segments(w.grid(), mesh, g.values())?;
    let mf = convex_max(&field, basis)?;
    let c = cg_domination_constant(w.dim());
    let mut rep = DominationReport { violation: f64::NEG_INFINITY, atom: 0, constant: c };
    for (a, l) in lhs.iter().enumerate() {
        let v = l - c * body_norm(w.value(a), mf.body(a));
        if v > rep.violation {
            rep = DominationReport { violation: v, atom: a, constant: c };
        }
    }
    Ok(rep)
}

/// `‖M_{W,B} g‖_∞` against `[W]_{A_{∞,B}} ‖g‖_∞`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinfBound {
    pub lhs: f64,
    pub a_inf: f64,
    pub rhs: f64,
}

pub fn cg_linf_bound(w: &MatrixWeightField, basis: &BoxBasis, g: &VectorField) -> Result<LinfBound> {
    let lhs = christ_goldberg(w, basis, g)?.into_iter().fold(0.0, f64::max);
    let a_inf = characteristic(w, basis, &ExponentPair::new(Exponent::INF, Exponent::INF)?)?.value;
    let sup = g.magnitudes().into_iter().fold(0.0, f64::max);
    Ok(LinfBound { lhs, a_inf, rhs: a_inf * sup })
}

/// Outcome on one overlap component.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Nontrivial,
    TrivialZero { direction: Vec<f64>, witness: usize },
    TrivialInfinite { direction: Vec<f64>, witness: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentVerdict {
    pub component: usize,
    pub atoms: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrivialityVerdict {
    pub components: Vec<ComponentVerdict>,
    /// Components kept in `B*`.
    pub kept: Vec<usize>,
    /// `[W]_{A_{p,B*}}`, absent when `B*` is empty.
    pub restricted_characteristic: Option<f64>,
}

/// Splits the basis into overlap components and decides each one: a
/// component is nontrivial iff no atom in it carries a zero or infinite
/// eigenvalue; otherwise the first tagged eigendirection is the witness.
pub fn triviality_classify(w: &MatrixWeightField, basis: &BoxBasis, p: Exponent) -> Result<TrivialityVerdict> {
    if !w.grid().same_atoms(basis.grid()) {
        return Err(domain("weight and basis live on different grids"));
    }
    let mut components = Vec::new();
    let mut kept = Vec::new();
    for (ci, comp) in basis.components().iter().enumerate() {
        let mut verdict = Verdict::Nontrivial;
        'atoms: for &a in &comp.atoms {
            if let Some(tags) = w.tags(a) {
                for (i, t) in tags.iter().enumerate() {
                    let direction = w.value(a).eigenvector(i);
                    match t {
                        EigenTag::Finite => {}
                        EigenTag::Zero => {
                            verdict = Verdict::TrivialZero { direction, witness: a };
                            break 'atoms;
                        }
                        EigenTag::Infinite => {
                            verdict = Verdict::TrivialInfinite { direction, witness: a };
                            break 'atoms;
                        }
                    }
                }
            }
        }
        if verdict == Verdict::Nontrivial {
            kept.push(ci);
        }
        components.push(ComponentVerdict { component: ci, atoms: comp.atoms.len(), verdict });
    }
    let restricted_characteristic = if kept.is_empty() {
        None
    } else {
        let sub = basis.restrict_to_components(&kept)?;
        Some(characteristic(w, &sub, &ExponentPair::diagonal(p)?)?.value)
    };
    Ok(TrivialityVerdict { components, kept, restricted_characteristic })
}

/// `W = diag(1, 0-tagged)`-style helper: the weight `m` with eigenvalue `i`
/// tagged, for building degenerate test fields.
pub fn tag_direction(m: &Mat, i: usize, tag: EigenTag) -> Result<crate::spd::ExtendedSpdMatrix> {
    let base = crate::spd::SpdMatrix::new(*m)?;
    let mut tags = vec![EigenTag::Finite; base.dim()];
    tags[i] = tag;
    crate::spd::ExtendedSpdMatrix::new(base, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EnumerationCaps;

    #[test]
    fn identity_weight_constant_vector() {
        let g = Grid::new(1, 3, None).unwrap();
        let basis = BoxBasis::enumerate(&g, BasisKind::Dyadic, &EnumerationCaps::default()).unwrap();
        let w = MatrixWeightField::identity(&g, 2);
        let f = VectorField::constant(&g, &[3.0, 4.0]);
        for v in christ_goldberg(&w, &basis, &f).unwrap() {
            assert!((v - 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_box_two_atoms() {
        let g = Grid::new(1, 1, None).unwrap();
        let basis = BoxBasis::from_boxes(&g, vec![GridBox::whole(&g)]).unwrap();
        let w = MatrixWeightField::new(
            &g,
            vec![crate::spd::SpdMatrix::scalar(1, 1.0).unwrap(), crate::spd::SpdMatrix::scalar(1, 2.0).unwrap()],
        )
        .unwrap();
        let f = VectorField::new(&g, 1, vec![1.0, 1.0]).unwrap();
        let m = christ_goldberg(&w, &basis, &f).unwrap();
        // mean(1/1, 1/2) = 3/4 at x = 0, twice that at x = 1.
        assert!((m[0] - 0.75).abs() < 1e-15);
        assert!((m[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn slice_basis_counts() {
        let g = Grid::new(2, 1, Some(vec![1, 1])).unwrap();
        // Intervals in a 2-point axis: 3; times 2 atoms in the other axis.
        assert_eq!(slice_basis(&g, 0).unwrap().len(), 6);
    }
}
