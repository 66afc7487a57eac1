//! Muckenhoupt-type characteristics of matrix weights, reducing operators
//! and the relations between them.
//!
//! All characteristics are evaluated from their definitions on the
//! piecewise-constant model: with `N(x,y) = |W(x) W^{-1}(y)|_op`,
//!
//! * `1 < p`, `q < ∞`: `(mean_x (mean_y N^{p'})^{q/p'})^{1/q}`;
//! * `q = ∞`: `max_x (mean_y N^{p'})^{1/p'}` (so `p = q = ∞` is `A_∞`);
//! * `p = 1`: `max_x (mean_y N(y,x)^q)^{1/q}` (so `q = 1` is `A_1`),
//!
//! each maximized over the boxes of the basis.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exponent::{Exponent, ExponentPair};
use crate::geometry::{BasisKind, BoxBasis, EnumerationMode, Grid, GridBox};
use crate::ledger::{Check, Ledger, STRUCT_TOL};
use crate::mesh::DirectionMesh;
use crate::mvee::{symmetric_mvee, DEFAULT_TOL};
use crate::spd::{prod_op_norm, Mat, SpdMatrix};
use crate::stats::{pairwise_mean, pairwise_sum};
use crate::weights::{sample_weight, MatrixWeightField, WeightFamilySpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportMeta {
    pub quantity: String,
    pub exponents: String,
    pub basis: BasisKind,
    pub basis_size: usize,
    pub mode: EnumerationMode,
    pub weight_id: Option<String>,
    /// Boxes whose atom pairs were subsampled.
    pub subsampled_boxes: usize,
}

/// Value of a characteristic with the box (and point) attaining it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicReport {
    pub value: f64,
    pub infinite: bool,
    pub extremal_box: Option<usize>,
    pub extremal_box_coords: Option<GridBox>,
    /// Atom realizing the essential supremum, for the `max_x` branches.
    pub extremal_point: Option<usize>,
    pub per_box: Option<Vec<f64>>,
    pub meta: ReportMeta,
}

impl CharacteristicReport {
    fn assemble(
        basis: &BoxBasis,
        quantity: &str,
        exponents: String,
        per_box: Vec<(f64, Option<usize>)>,
        keep: bool,
        subsampled_boxes: usize,
    ) -> CharacteristicReport {
        let mut best: Option<usize> = None;
        for (i, (v, _)) in per_box.iter().enumerate() {
            if best.is_none_or(|b| *v > per_box[b].0 || v.is_nan()) {
                best = Some(i);
            }
        }
        let value = best.map_or(0.0, |b| per_box[b].0);
        CharacteristicReport {
            value,
            infinite: value.is_infinite(),
            extremal_box: best,
            extremal_box_coords: best.map(|b| basis.boxes()[b].clone()),
            extremal_point: best.and_then(|b| per_box[b].1),
            per_box: keep.then(|| per_box.iter().map(|v| v.0).collect()),
            meta: ReportMeta {
                quantity: quantity.to_string(),
                exponents,
                basis: basis.kind(),
                basis_size: basis.len(),
                mode: basis.mode(),
                weight_id: None,
                subsampled_boxes,
            },
        }
    }

    pub fn with_weight_id(mut self, id: impl Into<String>) -> Self {
        self.meta.weight_id = Some(id.into());
        self
    }
}

/// Evaluation options for the double averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharOptions {
    /// Boxes with more than this many atom pairs use a seeded subsample of
    /// `sqrt(cap)` points in each variable. `None` means exhaustive.
    pub pair_cap: Option<usize>,
    pub seed: u64,
    pub keep_per_box: bool,
}

impl Default for CharOptions {
    fn default() -> Self {
        CharOptions { pair_cap: None, seed: 0, keep_per_box: true }
    }
}

#[derive(Clone, Copy, Debug)]
enum Branch {
    Interior { pc: f64, q: f64 },
    QInf { pc: f64 },
    POne { q: f64 },
}

fn branch(e: &ExponentPair) -> Result<Branch> {
    if e.p.is_one() && e.q.is_infinite() {
        return Err(domain("the pair p = 1, q = ∞ has no characteristic"));
    }
    Ok(if e.p.is_one() {
        Branch::POne { q: e.qf() }
    } else if e.q.is_infinite() {
        Branch::QInf { pc: e.p_conj.to_f64() }
    } else {
        Branch::Interior { pc: e.p_conj.to_f64(), q: e.qf() }
    })
}

fn power_mean_row(row: &[f64], r: f64, buf: &mut Vec<f64>) -> f64 {
    if r == 1.0 {
        return pairwise_mean(row);
    }
    if r.is_infinite() {
        return row.iter().copied().fold(0.0, f64::max);
    }
    buf.clear();
    buf.extend(row.iter().map(|x| x.powf(r)));
    pairwise_mean(buf).powf(1.0 / r)
}

/// Points of a box with multiplicities: atoms carrying the same matrix are
/// merged into their first occurrence.
struct Points {
    atoms: Vec<u32>,
    counts: Vec<f64>,
    total: f64,
}

impl Points {
    fn plain(atoms: Vec<u32>) -> Points {
        let total = atoms.len() as f64;
        Points { counts: vec![1.0; atoms.len()], atoms, total }
    }

    fn grouped(prep: &Prepared, atoms: &[u32]) -> Points {
        let mut slot: HashMap<u32, usize> = HashMap::new();
        let mut out = Points { atoms: Vec::new(), counts: Vec::new(), total: atoms.len() as f64 };
        for &a in atoms {
            let i = *slot.entry(prep.class[a as usize]).or_insert_with(|| {
                out.atoms.push(a);
                out.counts.push(0.0);
                out.atoms.len() - 1
            });
            out.counts[i] += 1.0;
        }
        out
    }

    fn len(&self) -> usize {
        self.atoms.len()
    }

    /// `(sum_i c_i x_i^r / sum_i c_i)^{1/r}`, the maximum for `r = ∞`.
    fn power_mean(&self, row: &[f64], r: f64, buf: &mut Vec<f64>) -> f64 {
        if r.is_infinite() {
            return row.iter().copied().fold(0.0, f64::max);
        }
        buf.clear();
        if r == 1.0 {
            buf.extend(row.iter().zip(&self.counts).map(|(x, c)| c * x));
            return pairwise_sum(buf) / self.total;
        }
        buf.extend(row.iter().zip(&self.counts).map(|(x, c)| c * x.powf(r)));
        (pairwise_sum(buf) / self.total).powf(1.0 / r)
    }
}

struct Prepared {
    w: Vec<Mat>,
    winv: Vec<Mat>,
    /// Atoms with bitwise equal matrices share a class.
    class: Vec<u32>,
    repeats: bool,
}

fn prepare(w: &MatrixWeightField, basis: &BoxBasis) -> Result<Prepared> {
    if !w.grid().same_atoms(basis.grid()) {
        return Err(domain("weight and basis live on different grids"));
    }
    w.require_nondegenerate_on((0..w.len()).filter(|&a| basis.is_covered(a)))?;
    let winv = w.inverse()?;
    let d = w.dim();
    let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
    let class: Vec<u32> = w
        .values()
        .iter()
        .map(|v| {
            let key = (0..d * d).map(|k| v.matrix().get(k / d, k % d).to_bits()).collect();
            let next = seen.len() as u32;
            *seen.entry(key).or_insert(next)
        })
        .collect();
    Ok(Prepared {
        w: w.values().iter().map(|v| *v.matrix()).collect(),
        winv: winv.values().iter().map(|v| *v.matrix()).collect(),
        repeats: seen.len() < w.len(),
        class,
    })
}

/// Points of a box used for the double average.
fn box_points(atoms: &[u32], opts: &CharOptions, box_index: usize) -> (Vec<u32>, Vec<u32>, bool) {
    let m = atoms.len();
    match opts.pair_cap {
        Some(cap) if m * m > cap => {
            let k = ((cap as f64).sqrt() as usize).clamp(1, m);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (box_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut xs: Vec<u32> = sample(&mut rng, m, k).into_iter().map(|i| atoms[i]).collect();
            let mut ys: Vec<u32> = sample(&mut rng, m, k).into_iter().map(|i| atoms[i]).collect();
            xs.sort_unstable();
            ys.sort_unstable();
            (xs, ys, true)
        }
        _ => (atoms.to_vec(), atoms.to_vec(), false),
    }
}

/// Merges repeated matrices when that at least halves the pair count.
fn group_points(prep: &Prepared, xs: Vec<u32>, ys: Vec<u32>) -> (Points, Points) {
    if prep.repeats && xs.len() * ys.len() >= 64 {
        let (gx, gy) = (Points::grouped(prep, &xs), Points::grouped(prep, &ys));
        if 2 * gx.len() * gy.len() <= xs.len() * ys.len() {
            return (gx, gy);
        }
    }
    (Points::plain(xs), Points::plain(ys))
}

fn eval_box(prep: &Prepared, xs: &Points, ys: &Points, branches: &[Branch]) -> Vec<(f64, Option<usize>)> {
    let need_cols = branches.iter().any(|b| matches!(b, Branch::POne { .. }));
    let per_x = |&x: &u32| -> Vec<f64> {
        let x = x as usize;
        let row: Vec<f64> = ys.atoms.iter().map(|&y| prod_op_norm(&prep.w[x], &prep.winv[y as usize])).collect();
        let col: Vec<f64> = if need_cols {
            ys.atoms.iter().map(|&y| prod_op_norm(&prep.w[y as usize], &prep.winv[x])).collect()
        } else {
            Vec::new()
        };
        let mut buf = Vec::with_capacity(ys.len());
        branches
            .iter()
            .map(|b| match *b {
                Branch::Interior { pc, q } => ys.power_mean(&row, pc, &mut buf).powf(q),
                Branch::QInf { pc } => ys.power_mean(&row, pc, &mut buf),
                Branch::POne { q } => ys.power_mean(&col, q, &mut buf),
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> =
        if xs.len() >= 64 { xs.atoms.par_iter().map(per_x).collect() } else { xs.atoms.iter().map(per_x).collect() };
    let mut buf = Vec::with_capacity(xs.len());
    branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let vals: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            match *b {
                Branch::Interior { q, .. } => (xs.power_mean(&vals, 1.0, &mut buf).powf(1.0 / q), None),
                _ => {
                    let (i, v) =
                        vals.iter()
                            .copied()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
                    (v, Some(xs.atoms[i] as usize))
                }
            }
        })
        .collect()
}

/// Several characteristics of one weight over one basis, sharing the
/// `N(x,y)` evaluations.
pub fn characteristics(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    pairs: &[ExponentPair],
    opts: &CharOptions,
) -> Result<Vec<CharacteristicReport>> {
    let branches = pairs.iter().map(branch).collect::<Result<Vec<_>>>()?;
    let prep = prepare(w, basis)?;
    let per_box: Vec<(Vec<(f64, Option<usize>)>, bool)> = (0..basis.len())
        .into_par_iter()
        .map(|b| {
            let (xs, ys, sub) = box_points(basis.box_atoms(b), opts, b);
            let (xs, ys) = group_points(&prep, xs, ys);
            (eval_box(&prep, &xs, &ys, &branches), sub)
        })
        .collect();
    let subsampled = per_box.iter().filter(|p| p.1).count();
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let vals = per_box.iter().map(|p| p.0[k]).collect();
            CharacteristicReport::assemble(basis, "A_pq", e.to_string(), vals, opts.keep_per_box, subsampled)
        })
        .collect())
}

/// `[W]_{A_{p,q}}` over the basis.
pub fn characteristic(w: &MatrixWeightField, basis: &BoxBasis, e: &ExponentPair) -> Result<CharacteristicReport> {
    characteristic_with(w, basis, e, &CharOptions::default())
}

pub fn characteristic_with(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    e: &ExponentPair,
    opts: &CharOptions,
) -> Result<CharacteristicReport> {
    Ok(characteristics(w, basis, std::slice::from_ref(e), opts)?.remove(0))
}

/// `[W]_{RH_{p,s}}`: supremum over mesh directions `v` and boxes of
/// `(mean |Wv|^{ps})^{1/(ps)} / (mean |Wv|^p)^{1/p}`.
pub fn rh_characteristic(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    p: f64,
    s: Exponent,
    mesh: &DirectionMesh,
) -> Result<CharacteristicReport> {
    if mesh.is_empty() {
        return Err(Error::Config("reverse Hölder constant needs a nonempty direction mesh".into()));
    }
    if !(p >= 1.0 && p.is_finite()) || s < Exponent::ONE {
        return Err(domain(format!("reverse Hölder exponents p = {p}, s = {s} out of range")));
    }
    w.require_nondegenerate_on((0..w.len()).filter(|&a| basis.is_covered(a)))?;
    let ps = p * s.to_f64();
    let k = mesh.len();
    // |W(a) v_k| for every atom and direction.
    let table: Vec<Vec<f64>> = w.values().par_iter().map(|v| mesh.iter().map(|u| v.apply_norm(u)).collect()).collect();
    let per_box: Vec<(f64, Option<usize>)> = (0..basis.len())
        .into_par_iter()
        .map(|b| {
            let atoms = basis.box_atoms(b);
            let mut best: f64 = 0.0;
            let mut col = Vec::with_capacity(atoms.len());
            let mut buf = Vec::with_capacity(atoms.len());
            for j in 0..k {
                col.clear();
                col.extend(atoms.iter().map(|&a| table[a as usize][j]));
                let den = power_mean_row(&col, p, &mut buf);
                let num = power_mean_row(&col, ps, &mut buf);
                if den > 0.0 {
                    best = best.max(num / den);
                }
            }
            (best, None)
        })
        .collect();
    Ok(CharacteristicReport::assemble(basis, "RH", format!("({p}, {s})"), per_box, true, 0))
}

/// `‖W v‖_{p,E}` for each mesh direction.
fn box_norms(w: &MatrixWeightField, atoms: &[u32], p: f64, mesh: &DirectionMesh) -> Vec<f64> {
    let mut col = Vec::with_capacity(atoms.len());
    let mut buf = Vec::with_capacity(atoms.len());
    mesh.iter()
        .map(|v| {
            col.clear();
            col.extend(atoms.iter().map(|&a| w.value(a as usize).apply_norm(v)));
            power_mean_row(&col, p, &mut buf)
        })
        .collect()
}

/// Reducing operator on an explicit atom set.
pub fn reducing_operator_on(
    w: &MatrixWeightField,
    atoms: &[u32],
    p: Exponent,
    mesh: &DirectionMesh,
) -> Result<SpdMatrix> {
    if atoms.is_empty() {
        return Err(domain("reducing operator of an empty set"));
    }
    w.require_nondegenerate_on(atoms.iter().map(|&a| a as usize))?;
    let first = w.value(atoms[0] as usize);
    if atoms.iter().all(|&a| w.value(a as usize) == first) {
        return Ok(first.clone());
    }
    let d = w.dim();
    let pf = p.to_f64();
    if d == 1 {
        let xs: Vec<f64> = atoms.iter().map(|&a| w.value(a as usize).matrix().get(0, 0)).collect();
        let mut buf = Vec::new();
        return SpdMatrix::scalar(1, power_mean_row(&xs, pf, &mut buf));
    }
    if pf == 2.0 {
        let mut acc = Mat::zeros(d);
        let grams: Vec<Mat> = atoms.iter().map(|&a| w.value(a as usize).matrix().gram()).collect();
        for i in 0..d {
            for j in 0..d {
                let xs: Vec<f64> = grams.iter().map(|g| g.get(i, j)).collect();
                acc.set(i, j, pairwise_mean(&xs));
            }
        }
        return SpdMatrix::new(acc)?.power(0.5);
    }
    let rho = box_norms(w, atoms, pf, mesh);
    let mut pts = Vec::with_capacity(d * mesh.len());
    for (v, r) in mesh.iter().zip(&rho) {
        pts.extend(v.iter().map(|x| x / r));
    }
    let fit = symmetric_mvee(d, &pts, DEFAULT_TOL)?;
    let a = fit.q.power(0.5)?;
    // Scale so that |Av| <= ρ(v) holds on the mesh with equality somewhere.
    let c = mesh.iter().zip(&rho).map(|(v, r)| a.apply_norm(v) / r).fold(0.0, f64::max);
    a.scaled(1.0 / c)
}

/// Reducing operator of `W` on `E` for the `L^p` average norm.
///
/// For `p = 2` and `d = 1` it is exact. Otherwise it is the John ellipsoid
/// of the unit ball of `v ↦ ‖Wv‖_{p,E}` sampled on the mesh, so that
/// `|Av| <= ‖Wv‖_{p,E} <= √d |Av|` on the mesh (the upper bound up to the
/// fit tolerance).
pub fn reducing_operator(w: &MatrixWeightField, e: &GridBox, p: Exponent, mesh: &DirectionMesh) -> Result<SpdMatrix> {
    let atoms: Vec<u32> = e.atoms(w.grid()).into_iter().map(|a| a as u32).collect();
    reducing_operator_on(w, &atoms, p, mesh)
}

/// Lowest and highest admissible values of `[W]^R_{A_p} / [W]_{A_p}`.
///
/// Each side is within a factor `√d` of `|A_B Ā_B|` (John), and replacing
/// the operator norm of `W(x)W^{-1}(y)` by norms on a basis costs `√d` per
/// averaged variable (orthonormal-basis equivalence with `r = 2`). The
/// bound `d^{-3} <= ratio <= d` collects these factors.
pub fn reducing_envelope(d: usize) -> (f64, f64) {
    let d = d as f64;
    (d.powi(-3), d)
}

/// Bounds for `[W]_{A_p} / [W^{-1}]_{A_{p'}}`: both are within the
/// reducing envelope of `|A_B Ā_B| = |Ā_B A_B|`.
pub fn duality_envelope(d: usize) -> (f64, f64) {
    let d = d as f64;
    (d.powi(-4), d.powi(4))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducingReport {
    pub report: CharacteristicReport,
    /// `[W]_{A_p}` over the same basis.
    pub ap: f64,
    pub ratio: f64,
    pub envelope: (f64, f64),
}

/// `sup_B |A_B(W, p) A_B(W^{-1}, p')|_op`.
pub fn reducing_characteristic(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    p: Exponent,
    mesh: &DirectionMesh,
) -> Result<ReducingReport> {
    let pc = p.conjugate()?;
    let winv = w.inverse()?;
    let per_box: Vec<(f64, Option<usize>)> = (0..basis.len())
        .into_par_iter()
        .map(|b| {
            let atoms = basis.box_atoms(b);
            let a = reducing_operator_on(w, atoms, p, mesh)?;
            let abar = reducing_operator_on(&winv, atoms, pc, mesh)?;
            Ok((prod_op_norm(a.matrix(), abar.matrix()), None))
        })
        .collect::<Result<_>>()?;
    let report = CharacteristicReport::assemble(basis, "A_p reducing", p.to_string(), per_box, true, 0);
    let ap_pair = ExponentPair::diagonal(p)?;
    let ap = characteristic_with(w, basis, &ap_pair, &CharOptions { keep_per_box: false, ..Default::default() })?.value;
    let ratio = report.value / ap;
    Ok(ReducingReport { report, ap, ratio, envelope: reducing_envelope(w.dim()) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub envelope: (f64, f64),
}

/// `[W]_{A_p}` against `[W^{-1}]_{A_{p'}}`.
pub fn duality_check(w: &MatrixWeightField, basis: &BoxBasis, p: Exponent) -> Result<DualityRecord> {
    let opts = CharOptions { keep_per_box: false, ..Default::default() };
    let lhs = characteristic_with(w, basis, &ExponentPair::diagonal(p)?, &opts)?.value;
    let rhs = characteristic_with(&w.inverse()?, basis, &ExponentPair::diagonal(p.conjugate()?)?, &opts)?.value;
    Ok(DualityRecord { lhs, rhs, ratio: lhs / rhs, envelope: duality_envelope(w.dim()) })
}

/// Constant in `[W]_{A_{p,q}} <= c [W]_{A_p} [W]_{RH_{p,q/p}}`.
///
/// Going through reducing operators: the inner `L^{p'}` average of
/// `|W(x)W^{-1}(y)|` is compared with `|W(x) Ā|` (factor `√d` for the
/// basis equivalence, `√d` for John), the reverse Hölder step acts on the
/// `d` columns `W(x) Ā e_i` (factor `d`), and the result is compared with
/// `[W]_{A_p}` through the reducing envelope (`d` more). For `p = 1` the
/// inner supremum is pointwise and only the column step (`d`) remains.
pub fn apq_upper_constant(d: usize, e: &ExponentPair) -> f64 {
    let d = d as f64;
    if e.p.is_one() {
        d
    } else {
        d.powf(3.5)
    }
}

/// Measured quantities of the `A_{p,q}` relation checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApqRelation {
    pub exponents: ExponentPair,
    pub apq: f64,
    pub ws_ar: f64,
    pub w_ar: f64,
    pub ap: f64,
    pub rh: f64,
    pub upper_constant: f64,
    pub ledger: Ledger,
}

/// Checks, for `s`, `r` derived from `(p, q)`:
/// (i) `[W]_{A_{p,q}}^s <= [W^s]_{A_r}`;
/// (ii) `[W]_{A_r} <= [W]_{A_{p,q}}`;
/// (iii) `max([W]_{A_p}, [W]_{RH_{p,q/p}}) <= [W]_{A_{p,q}}` and
/// `[W]_{A_{p,q}} <= c(d) [W]_{A_p} [W]_{RH_{p,q/p}}`.
///
/// When `p = q` the first two are equalities and are checked as such.
pub fn apq_relation_check(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    e: &ExponentPair,
    mesh: &DirectionMesh,
) -> Result<ApqRelation> {
    let opts = CharOptions { keep_per_box: false, ..Default::default() };
    let r_pair = ExponentPair::diagonal(e.r)?;
    let p_pair = ExponentPair::diagonal(e.p)?;
    let both = characteristics(w, basis, &[*e, r_pair, p_pair], &opts)?;
    let (apq, w_ar, ap) = (both[0].value, both[1].value, both[2].value);
    let sf = e.sf();
    let ws_ar = characteristic_with(&w.power(sf)?, basis, &r_pair, &opts)?.value;
    let s_tilde = e.q.div(e.p)?;
    let rh = rh_characteristic(w, basis, e.pf(), s_tilde, mesh)?.value;
    let c = apq_upper_constant(w.dim(), e);
    let mut ledger = Ledger::new();
    let apq_s = apq.powf(sf);
    if e.p == e.q {
        ledger.push(Check::eq("apq.i.equality", "apq-power-vs-ar", apq_s, ws_ar, 1e-12));
        ledger.push(Check::eq("apq.ii.equality", "ar-vs-apq", w_ar, apq, 1e-12));
    } else {
        ledger.push(Check::le("apq.i", "apq-power-vs-ar", apq_s, ws_ar, STRUCT_TOL));
        ledger.push(Check::le("apq.ii", "ar-vs-apq", w_ar, apq, STRUCT_TOL));
    }
    ledger.push(Check::le("apq.iii.ap", "apq-ap-rh-lower", ap, apq, STRUCT_TOL));
    ledger.push(Check::le("apq.iii.rh", "apq-ap-rh-lower", rh, apq, STRUCT_TOL));
    ledger.push(Check::le("apq.iii.upper", "apq-ap-rh-upper", apq, c * ap * rh, STRUCT_TOL));
    Ok(ApqRelation { exponents: *e, apq, ws_ar, w_ar, ap, rh, upper_constant: c, ledger })
}

/// Parameter grid of the spiral scan.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ScanSpec {
    pub kappas: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub levels: Vec<u32>,
    /// Exponents of the `d = 1` control family `|x - 1/2|^a`.
    pub control_amplitudes: Vec<f64>,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            kappas: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            amplitudes: vec![0.0, 0.3, 0.6, 0.9],
            levels: vec![3, 4, 5, 6, 7],
            control_amplitudes: vec![0.0, 0.3, 0.6, 0.9],
        }
    }
}

/// One row of the trend table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendRow {
    pub family: String,
    pub kappa: f64,
    pub a: f64,
    pub level: u32,
    /// `[W]_{A_{p,q}}` over dyadic cubes down to `level`.
    pub apq: f64,
    /// `[W^s]_{A_r}` over the same cubes.
    pub ws_ar: f64,
    /// `[W^s]_{A_r} / [W]_{A_{p,q}}^s`, identically 1 in `d = 1`.
    pub ratio: f64,
    pub flagged: bool,
}

/// Trend of `([W]_{A_{p,q}}, [W^s]_{A_r})` under refinement.
///
/// A parameter point is flagged when, between its last two levels, the
/// first column grows by less than 5% while the second grows by at least
/// 1.5x.
pub fn counterexample_scan(spec: &ScanSpec, e: &ExponentPair) -> Result<Vec<TrendRow>> {
    if e.q.is_infinite() {
        return Err(domain("the scan needs q < ∞"));
    }
    if spec.levels.is_empty() {
        return Err(Error::Config("scan needs at least one level".into()));
    }
    let mut levels = spec.levels.clone();
    levels.sort_unstable();
    let mut points: Vec<(String, f64, f64, WeightFamilySpec)> = Vec::new();
    for &kappa in &spec.kappas {
        for &a in &spec.amplitudes {
            points.push(("knv".into(), kappa, a, WeightFamilySpec::KnvExplorer { kappa, a, center: None }));
        }
    }
    for &a in &spec.control_amplitudes {
        points.push(("control_d1".into(), 0.0, a, WeightFamilySpec::ScalarPower { a, center: None, d: 1 }));
    }
    let opts = CharOptions { keep_per_box: false, ..Default::default() };
    let r_pair = ExponentPair::diagonal(e.r)?;
    let sf = e.sf();
    let mut rows = Vec::new();
    for (family, kappa, a, fam) in points {
        let mut block = Vec::new();
        for &level in &levels {
            let grid = Grid::new(1, level, None)?;
            let basis = BoxBasis::enumerate(&grid, BasisKind::Dyadic, &Default::default())?;
            let w = sample_weight(&fam, &grid)?;
            let apq = characteristic_with(&w, &basis, e, &opts)?.value;
            let ws_ar = characteristic_with(&w.power(sf)?, &basis, &r_pair, &opts)?.value;
            block.push(TrendRow {
                family: family.clone(),
                kappa,
                a,
                level,
                apq,
                ws_ar,
                ratio: ws_ar / apq.powf(sf),
                flagged: false,
            });
        }
        let flagged = block.len() >= 2 && {
            let (prev, last) = (&block[block.len() - 2], &block[block.len() - 1]);
            last.apq / prev.apq - 1.0 < 0.05 && last.ws_ar / prev.ws_ar >= 1.5
        };
        block.iter_mut().for_each(|r| r.flagged = flagged);
        rows.extend(block);
    }
    Ok(rows)
}
