//! The `verify` suites. Each returns ledger entries in canonical cell order;
//! cells run in parallel and are collected in order, so the output does not
//! depend on the thread count.

use std::sync::Arc;

use mwlab::characteristics::{apq_relation_check, duality_check, reducing_characteristic};
use mwlab::convex::{containment_excess, convex_max, exhaust, BodyField, ConvexBody};
use mwlab::exponent::{Exponent, ExponentPair};
use mwlab::extrapolation::{rdf_series, run_extrapolation, series_properties, ExtrapolationInputs, IterationOperator};
use mwlab::geometry::{BasisKind, BoxBasis};
use mwlab::ledger::{Check, Ledger, STRUCT_TOL};
use mwlab::maximal::{
    cg_domination_check, cg_linf_bound, containment_check, slice_characteristic_check, triviality_classify,
    VectorField, Verdict,
};
use mwlab::mesh::DirectionMesh;
use mwlab::spd::EigenTag;
use mwlab::weights::{random_spd, MatrixWeightField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, Suite};
use crate::report::Entry;

/// Containment defects of the convex maximal machinery.
const CONTAINMENT_TOL: f64 = 1e-12;
/// Norm identities under the exhaust map.
const ISOMETRY_TOL: f64 = 1e-10;
/// Multiparameter containment.
const MULTIPARAM_TOL: f64 = 1e-9;

impl Experiment {
    pub fn mesh(&self, d: usize) -> mwlab::Result<Arc<DirectionMesh>> {
        Ok(Arc::new(match self.config.mesh_size {
            Some(size) => DirectionMesh::with_size(d, size)?,
            None => DirectionMesh::default_for(d),
        }))
    }

    /// Seeded generator for instance `i` of job `job` in `suite`.
    fn rng(&self, suite: Suite, job: usize, i: usize) -> ChaCha8Rng {
        let tag = suite as u64;
        ChaCha8Rng::seed_from_u64(self.seed() ^ (tag << 56) ^ ((job as u64) << 20) ^ i as u64)
    }

    pub fn cell_id(&self, w: usize, b: usize) -> String {
        format!("{}@{}", self.weights[w].0, self.bases[b].0)
    }
}

fn pair_label(e: &ExponentPair) -> String {
    format!("p={} q={}", e.p, e.q)
}

fn collect(suite: Suite, cell: &str, what: &str, r: mwlab::Result<Ledger>) -> Vec<Entry> {
    match r {
        Ok(l) => Entry::from_ledger(suite.name(), cell, l),
        Err(e) => vec![Entry::error(suite.name(), cell, what, &e)],
    }
}

pub fn run(ex: &Experiment, suite: Suite) -> Vec<Entry> {
    match suite {
        Suite::Relations => relations(ex),
        Suite::Convex => convex(ex),
        Suite::Extrapolation => extrapolation(ex),
        Suite::Multiparam => multiparam(ex),
        Suite::Triviality => triviality(ex),
    }
}

fn nondegenerate_cells(ex: &Experiment) -> Vec<(usize, usize, usize)> {
    ex.cells
        .iter()
        .enumerate()
        .filter(|(_, (w, _))| !ex.weights[*w].1.is_degenerate())
        .map(|(j, &(w, b))| (j, w, b))
        .collect()
}

fn relations(ex: &Experiment) -> Vec<Entry> {
    let mut ps: Vec<Exponent> = ex.pairs.iter().map(|e| e.p).filter(|p| !p.is_one() && !p.is_infinite()).collect();
    ps.sort();
    ps.dedup();
    let mut jobs: Vec<(usize, usize, Option<ExponentPair>, Option<Exponent>)> = Vec::new();
    for (_, w, b) in nondegenerate_cells(ex) {
        jobs.extend(ex.pairs.iter().map(|e| (w, b, Some(*e), None)));
        jobs.extend(ps.iter().map(|p| (w, b, None, Some(*p))));
    }
    jobs.par_iter()
        .map(|&(w, b, pair, p)| {
            let (wf, basis) = (&ex.weights[w].1, &ex.bases[b].1);
            let cell = ex.cell_id(w, b);
            if let Some(e) = pair {
                let cell = format!("{cell} {}", pair_label(&e));
                let r = ex.mesh(wf.dim()).and_then(|m| apq_relation_check(wf, basis, &e, &m)).map(|r| r.ledger);
                return collect(Suite::Relations, &cell, "apq", r);
            }
            let p = p.expect("either a pair or an exponent");
            let cell = format!("{cell} p={p}");
            let r = (|| {
                let mut l = Ledger::new();
                let red = reducing_characteristic(wf, basis, p, &*ex.mesh(wf.dim())?)?;
                l.push(Check::le(
                    "reducing.lower",
                    "reducing-operator-envelope",
                    red.envelope.0,
                    red.ratio,
                    STRUCT_TOL,
                ));
                l.push(Check::le(
                    "reducing.upper",
                    "reducing-operator-envelope",
                    red.ratio,
                    red.envelope.1,
                    STRUCT_TOL,
                ));
                let dual = duality_check(wf, basis, p)?;
                l.push(Check::le("duality.lower", "duality-envelope", dual.envelope.0, dual.ratio, STRUCT_TOL));
                l.push(Check::le("duality.upper", "duality-envelope", dual.ratio, dual.envelope.1, STRUCT_TOL));
                Ok(l)
            })();
            collect(Suite::Relations, &cell, "reducing", r)
        })
        .flatten()
        .collect()
}

/// Random mixture of segments and ellipsoids, one body per atom.
fn random_bodies(w: &MatrixWeightField, mesh: &Arc<DirectionMesh>, rng: &mut ChaCha8Rng) -> mwlab::Result<BodyField> {
    let d = w.dim();
    let bodies = (0..w.len())
        .map(|_| {
            if rng.gen_bool(0.5) {
                ConvexBody::Segment((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            } else {
                ConvexBody::Ellipsoid(*random_spd(d, 1.0, rng).matrix())
            }
        })
        .collect();
    BodyField::new(w.grid(), mesh.clone(), bodies)
}

fn random_vectors(w: &MatrixWeightField, rng: &mut ChaCha8Rng) -> mwlab::Result<VectorField> {
    let values = (0..w.len() * w.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    VectorField::new(w.grid(), w.dim(), values)
}

fn convex_instance(
    ex: &Experiment,
    w: &MatrixWeightField,
    basis: &BoxBasis,
    rng: &mut ChaCha8Rng,
) -> mwlab::Result<Ledger> {
    let mesh = ex.mesh(w.dim())?;
    let mut l = Ledger::new();
    let h = random_bodies(w, &mesh, rng)?;
    let k = random_bodies(w, &mesh, rng)?;
    let nh = exhaust(w, &h)?;
    for p in [1.0, 2.0] {
        l.push(Check::eq(
            format!("exhaust.isometry.p{p}"),
            "exhaust-isometry",
            nh.lp_norm(w, p)?,
            h.lp_norm(w, p)?,
            ISOMETRY_TOL,
        ));
    }
    l.push(Check::le("exhaust.contains", "exhaust-containment", containment_excess(&h, &nh), 0.0, CONTAINMENT_TOL));
    let sum = BodyField::combination(&[(1.0, &h), (1.0, &k)])?;
    let split = BodyField::combination(&[(1.0, &nh), (1.0, &exhaust(w, &k)?)])?;
    l.push(Check::le(
        "exhaust.sublinear",
        "exhaust-sublinearity",
        containment_excess(&exhaust(w, &sum)?, &split),
        0.0,
        CONTAINMENT_TOL,
    ));
    if (0..w.len()).all(|a| basis.is_covered(a)) {
        let mh = convex_max(&h, basis)?;
        l.push(Check::le("max.contains", "maximal-containment", containment_excess(&h, &mh), 0.0, CONTAINMENT_TOL));
    }
    let segs = random_vectors(w, rng)?;
    let g = BodyField::segments(w.grid(), mesh.clone(), segs.values())?;
    let t = IterationOperator::weighted(w, 1.0, 2.0, basis)?;
    let nb = t.estimate_norm_bound(&mesh, &[&g])?;
    let t = t.with_norm_bound(nb)?;
    let s = rdf_series(&t, &g, ex.config.order)?;
    l.extend(series_properties(&t, &g, &s, "series")?.0);
    let dom = cg_domination_check(w, basis, &segs, mesh)?;
    l.push(Check::le("cg.domination", "convex-domination", dom.violation, 0.0, STRUCT_TOL));
    Ok(l)
}

fn convex(ex: &Experiment) -> Vec<Entry> {
    let jobs: Vec<(usize, usize, usize, usize)> = nondegenerate_cells(ex)
        .into_iter()
        .flat_map(|(j, w, b)| (0..ex.config.convex.instances).map(move |i| (j, w, b, i)))
        .collect();
    jobs.par_iter()
        .map(|&(j, w, b, i)| {
            let cell = format!("{} #{i}", ex.cell_id(w, b));
            let mut rng = ex.rng(Suite::Convex, j, i);
            collect(Suite::Convex, &cell, "convex", convex_instance(ex, &ex.weights[w].1, &ex.bases[b].1, &mut rng))
        })
        .flatten()
        .collect()
}

fn extrapolation(ex: &Experiment) -> Vec<Entry> {
    let Some(cfg) = &ex.config.extrapolation else { return Vec::new() };
    let pick = |ids: &Option<Vec<String>>, names: Vec<&String>| -> Vec<usize> {
        match ids {
            Some(ids) => ids.iter().map(|id| names.iter().position(|n| *n == id).expect("validated id")).collect(),
            None => (0..names.len()).collect(),
        }
    };
    let ws: Vec<usize> = pick(&cfg.weights, ex.weights.iter().map(|w| &w.0).collect())
        .into_iter()
        .filter(|&w| cfg.weights.is_some() || !ex.weights[w].1.is_degenerate())
        .collect();
    let bs: Vec<usize> = pick(&cfg.bases, ex.bases.iter().map(|b| &b.0).collect())
        .into_iter()
        .filter(|&b| cfg.bases.is_some() || ex.bases[b].1.kind() != BasisKind::Multiparam)
        .collect();
    let mut jobs = Vec::new();
    for &w in &ws {
        for &b in &bs {
            for c in &cfg.cases {
                for &op in &cfg.operators {
                    for i in 0..cfg.instances {
                        jobs.push((w, b, *c, op, i));
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(j, &(w, b, c, op, i))| {
            let wf = &ex.weights[w].1;
            let op_name = serde_json::to_value(op).ok().and_then(|v| v["kind"].as_str().map(String::from));
            let cell =
                format!("{} p0={} q0={} p={} {} #{i}", ex.cell_id(w, b), c.p0, c.q0, c.p, op_name.unwrap_or_default());
            let r = (|| {
                let mut rng = ex.rng(Suite::Extrapolation, j, 0);
                let inputs = ExtrapolationInputs {
                    w: wf.clone(),
                    basis: ex.bases[b].1.clone(),
                    p0: c.p0,
                    q0: c.q0,
                    p: c.p,
                    g: random_vectors(wf, &mut rng)?,
                    op,
                    order: ex.config.order,
                    mesh: ex.mesh(wf.dim())?,
                };
                Ok(run_extrapolation(&inputs)?.ledger)
            })();
            collect(Suite::Extrapolation, &cell, "extrapolation", r)
        })
        .flatten()
        .collect()
}

fn multiparam_cell(ex: &Experiment, j: usize, w: &MatrixWeightField, basis: &BoxBasis) -> mwlab::Result<Ledger> {
    let mesh = ex.mesh(w.dim())?;
    let mut l = Ledger::new();
    for i in 0..ex.config.multiparam.instances {
        let mut rng = ex.rng(Suite::Multiparam, j, i);
        let segs = random_vectors(w, &mut rng)?;
        let f = BodyField::segments(w.grid(), mesh.clone(), segs.values())?;
        let rep = containment_check(&f, basis)?;
        l.push(Check::le(
            format!("containment.{i}"),
            "iterated-maximal-containment",
            rep.violation,
            0.0,
            MULTIPARAM_TOL,
        ));
        let bound = cg_linf_bound(w, basis, &segs)?;
        l.push(Check::le(format!("linf.{i}"), "weighted-maximal-linf", bound.lhs, bound.rhs, MULTIPARAM_TOL));
    }
    let slice = slice_characteristic_check(w, basis, ex.config.multiparam.p)?;
    l.push(Check::le("slice.ratio", "slice-characteristics", slice.max_ratio, slice.envelope, 1e-12));
    Ok(l)
}

fn multiparam(ex: &Experiment) -> Vec<Entry> {
    nondegenerate_cells(ex)
        .into_par_iter()
        .filter(|&(_, _, b)| ex.bases[b].1.kind() == BasisKind::Multiparam)
        .map(|(j, w, b)| {
            let r = multiparam_cell(ex, j, &ex.weights[w].1, &ex.bases[b].1);
            collect(Suite::Multiparam, &ex.cell_id(w, b), "multiparam", r)
        })
        .flatten()
        .collect()
}

/// Verdicts against a direct scan of the eigenvalue tags.
fn triviality_cell(w: &MatrixWeightField, basis: &BoxBasis, p: Exponent) -> mwlab::Result<Ledger> {
    let v = triviality_classify(w, basis, p)?;
    let mut l = Ledger::new();
    for (cv, comp) in v.components.iter().zip(basis.components()) {
        let tagged = comp.atoms.iter().any(|&a| w.tags(a).is_some_and(|t| t.iter().any(|t| *t != EigenTag::Finite)));
        let id = format!("component.{}", cv.component);
        l.push(Check::holds(id.clone(), "triviality-verdict", tagged != (cv.verdict == Verdict::Nontrivial)));
        if let Verdict::TrivialZero { witness, .. } | Verdict::TrivialInfinite { witness, .. } = &cv.verdict {
            l.push(Check::holds(format!("{id}.witness"), "triviality-witness", comp.atoms.contains(witness)));
        }
    }
    if let Some(c) = v.restricted_characteristic {
        l.push(Check::finite("restricted.finite", "restricted-characteristic", c));
    }
    Ok(l)
}

fn triviality(ex: &Experiment) -> Vec<Entry> {
    let p = ex.config.triviality.p;
    ex.cells
        .par_iter()
        .map(|&(w, b)| {
            let r = triviality_cell(&ex.weights[w].1, &ex.bases[b].1, p);
            collect(Suite::Triviality, &ex.cell_id(w, b), "triviality", r)
        })
        .flatten()
        .collect()
}
