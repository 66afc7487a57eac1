//! Rubio de Francia iteration and the constructive off-diagonal
//! extrapolation argument, with every step recorded as a checked inequality.
//!
//! Integrals are means over the atoms of the unit domain. The hypothesis
//! constant `N_{p0,q0}` is data: for the pair at hand it is the measured
//! ratio `‖f‖_{L^{q0}(W0)} / ‖g‖_{L^{p0}(W0)}`, so the final inequality
//! exercises only the Hölder chain and the properties of `h̄1`, `h̄2`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::characteristic;
use crate::convex::{a1k_constant, containment_excess, convex_max, exhaust, BodyField, ConvexBody};
use crate::error::{domain, Error, Result};
use crate::exponent::{Exponent, ExponentPair, Rational};
use crate::geometry::BoxBasis;
use crate::ledger::{Check, Ledger, STRUCT_TOL};
use crate::maximal::{christ_goldberg, VectorField};
use crate::mesh::DirectionMesh;
use crate::spd::{Mat, SpdMatrix};
use crate::stats::{pairwise_mean, power_mean};
use crate::weights::MatrixWeightField;

/// Default truncation order of the series.
pub const DEFAULT_ORDER: usize = 40;

/// Padding applied to the probed operator norm.
pub const NORM_PADDING: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    /// `G ↦ G`, for calibrating the series.
    Identity,
    /// `P_W = N_{W^s} ∘ M_B` on `L^r_K(W^s)`.
    Weighted,
    /// `P'_I = N_I ∘ M'_s`, `M'_s H = W^{-s} M_B(W^s H)`, on unweighted `L^{r'}_K`.
    Dual,
}

/// A sublinear, monotone body operator together with the norm bound used
/// in its series.
#[derive(Clone, Debug)]
pub struct IterationOperator {
    kind: IterationKind,
    /// Weight of the space the operator acts on (`W^s` or `I`).
    space_weight: MatrixWeightField,
    ws: MatrixWeightField,
    wms: MatrixWeightField,
    basis: BoxBasis,
    /// Lebesgue exponent of the space.
    exponent: f64,
    norm_bound: f64,
}

impl IterationOperator {
    fn build(kind: IterationKind, w: &MatrixWeightField, s: f64, basis: &BoxBasis, exponent: f64) -> Result<Self> {
        if !w.grid().same_atoms(basis.grid()) {
            return Err(domain("weight and basis live on different grids"));
        }
        w.require_nondegenerate()?;
        let ws = w.power(s)?;
        let wms = ws.inverse()?;
        let space_weight = match kind {
            IterationKind::Weighted => ws.clone(),
            _ => MatrixWeightField::identity(w.grid(), w.dim()),
        };
        Ok(IterationOperator { kind, space_weight, ws, wms, basis: basis.clone(), exponent, norm_bound: 1.0 })
    }

    pub fn identity(w: &MatrixWeightField, basis: &BoxBasis, exponent: f64) -> Result<Self> {
        IterationOperator::build(IterationKind::Identity, w, 1.0, basis, exponent)
    }

    /// `P_W` on `L^r_K(W^s)`.
    pub fn weighted(w: &MatrixWeightField, s: f64, r: f64, basis: &BoxBasis) -> Result<Self> {
        IterationOperator::build(IterationKind::Weighted, w, s, basis, r)
    }

    /// `P'_I` on `L^{r'}_K`.
    pub fn dual(w: &MatrixWeightField, s: f64, r_conj: f64, basis: &BoxBasis) -> Result<Self> {
        IterationOperator::build(IterationKind::Dual, w, s, basis, r_conj)
    }

    pub fn kind(&self) -> IterationKind {
        self.kind
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn with_norm_bound(mut self, nb: f64) -> Result<Self> {
        if !(nb > 0.0 && nb.is_finite()) {
            return Err(Error::Config(format!("series norm bound must be positive, got {nb}")));
        }
        self.norm_bound = nb;
        Ok(self)
    }

    pub fn apply(&self, g: &BodyField) -> Result<BodyField> {
        match self.kind {
            IterationKind::Identity => Ok(g.clone()),
            IterationKind::Weighted => exhaust(&self.ws, &convex_max(g, &self.basis)?),
            IterationKind::Dual => {
                let lifted = BodyField::new(
                    g.grid(),
                    g.mesh().clone(),
                    g.bodies().iter().zip(self.ws.values()).map(|(b, m)| b.transformed(m.matrix())).collect(),
                )?;
                // N_I of W^{-s} M_B(W^s H): its radius times the unit ball.
                let radii = convex_max(&lifted, &self.basis)?.norms(&self.wms)?;
                let d = g.dim();
                BodyField::new(
                    g.grid(),
                    g.mesh().clone(),
                    radii.iter().map(|&c| ConvexBody::Ellipsoid(Mat::identity(d).scale(c))).collect(),
                )
            }
        }
    }

    /// Norm of `g` in the space the operator acts on.
    pub fn space_norm(&self, g: &BodyField) -> Result<f64> {
        g.lp_norm(&self.space_weight, self.exponent)
    }

    /// `NORM_PADDING · max(1, ‖T G‖/‖G‖)` over atom indicators of the
    /// space's unit ellipsoid, the constant field and `extra`.
    pub fn estimate_norm_bound(&self, mesh: &Arc<DirectionMesh>, extra: &[&BodyField]) -> Result<f64> {
        let grid = self.ws.grid();
        let d = self.ws.dim();
        let unit: Vec<ConvexBody> = (0..grid.atom_count())
            .map(|a| match self.kind {
                IterationKind::Weighted => ConvexBody::Ellipsoid(*self.wms.value(a).matrix()),
                _ => ConvexBody::unit_ball(d),
            })
            .collect();
        let mut probes = vec![BodyField::new(grid, mesh.clone(), unit.clone())?];
        for a in 0..grid.atom_count() {
            let bodies =
                (0..grid.atom_count()).map(|b| if a == b { unit[b].clone() } else { ConvexBody::zero(d) }).collect();
            probes.push(BodyField::new(grid, mesh.clone(), bodies)?);
        }
        probes.extend(extra.iter().map(|f| (*f).clone()));
        let ratios = probes
            .par_iter()
            .map(|g| {
                let den = self.space_norm(g)?;
                if den == 0.0 {
                    return Ok(0.0);
                }
                Ok(self.space_norm(&self.apply(g)?)? / den)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(NORM_PADDING * ratios.into_iter().fold(1.0, f64::max))
    }
}

/// Truncated series `S_K G = Σ_{k<=K} (2 nb)^{-k} T^k G`.
#[derive(Clone, Debug)]
pub struct Series {
    pub sum: BodyField,
    pub order: usize,
    /// `T^{K+1} G`, which bounds the omitted tail.
    pub next: BodyField,
    /// `‖T^k G‖` for `k = 0..=K+1`.
    pub term_norms: Vec<f64>,
}

pub fn rdf_series(t: &IterationOperator, g: &BodyField, order: usize) -> Result<Series> {
    if order == 0 {
        return Err(Error::Config("series truncation order must be at least 1".into()));
    }
    let nb = t.norm_bound;
    let mut terms = vec![g.clone()];
    for _ in 0..=order {
        let next = t.apply(terms.last().expect("nonempty"))?;
        terms.push(next);
    }
    let term_norms = terms.iter().map(|x| t.space_norm(x)).collect::<Result<Vec<_>>>()?;
    let next = terms.pop().expect("K + 2 terms");
    let weighted: Vec<(f64, &BodyField)> =
        terms.iter().enumerate().map(|(k, x)| ((2.0 * nb).powi(-(k as i32)), x)).collect();
    let sum = BodyField::combination(&weighted)?;
    Ok(Series { sum, order, next, term_norms })
}

/// Measured quantities behind the three series properties.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesReport {
    pub norm_bound: f64,
    /// `max (h_G - h_{SG})`, nonpositive when `G ⊆ SG`.
    pub containment: f64,
    pub norm_g: f64,
    pub norm_s: f64,
    /// `max (h_{T SG} - 2 nb h_{SG})` without tail allowance.
    pub invariance_violation: f64,
    /// Largest tail allowance `2 nb (2 nb)^{-(K+1)} h_{T^{K+1}G}`.
    pub tail: f64,
    /// Largest step ratio `‖T^{k+1}G‖ / ‖T^k G‖` seen along the orbit.
    pub max_step_ratio: f64,
}

/// Checks `G ⊆ SG`, `‖SG‖ <= 2‖G‖` and `T(SG) ⊆ 2 nb SG` up to the tail.
pub fn series_properties(
    t: &IterationOperator,
    g: &BodyField,
    s: &Series,
    label: &str,
) -> Result<(Ledger, SeriesReport)> {
    let nb = t.norm_bound;
    let mut ledger = Ledger::new();
    let containment = containment_excess(g, &s.sum);
    let norm_g = t.space_norm(g)?;
    let norm_s = t.space_norm(&s.sum)?;
    let ts = t.apply(&s.sum)?.sample_table();
    let st = s.sum.sample_table();
    let nt = s.next.sample_table();
    let coef = 2.0 * nb * (2.0 * nb).powi(-(s.order as i32 + 1));
    let mut violation = f64::NEG_INFINITY;
    let mut slack_violation = f64::NEG_INFINITY;
    let mut tail = 0.0f64;
    let mut scale = 0.0f64;
    for ((a, b), c) in ts.iter().zip(&st).zip(&nt) {
        for ((x, y), z) in a.iter().zip(b).zip(c) {
            let v = x - 2.0 * nb * y;
            violation = violation.max(v);
            slack_violation = slack_violation.max(v - coef * z);
            tail = tail.max(coef * z);
            scale = scale.max(2.0 * nb * y);
        }
    }
    let max_step_ratio = s.term_norms.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    ledger.push(Check::le(
        format!("{label}.norm_bound"),
        "series norm bound dominates the orbit",
        max_step_ratio,
        nb,
        STRUCT_TOL,
    ));
    ledger.push(Check::le(format!("{label}.contains"), "series contains its seed", containment, 0.0, STRUCT_TOL));
    ledger.push(Check::le(
        format!("{label}.norm"),
        "series at most doubles the norm",
        norm_s,
        2.0 * norm_g,
        STRUCT_TOL,
    ));
    ledger.push(Check::le(
        format!("{label}.invariance"),
        "series is almost invariant under the operator",
        slack_violation,
        0.0,
        STRUCT_TOL * scale.max(1.0),
    ));
    Ok((
        ledger,
        SeriesReport {
            norm_bound: nb,
            containment,
            norm_g,
            norm_s,
            invariance_violation: violation,
            tail,
            max_step_ratio,
        },
    ))
}

/// `h2 = φ^{r-1} / ‖φ‖_r^{r-1}` with `φ = |W f|^s`, so that `‖h2‖_{r'} = 1`
/// and `mean φ h2 = ‖φ‖_r`.
pub fn dual_extremal(f: &VectorField, w: &MatrixWeightField, s: f64, r: f64) -> Result<Vec<f64>> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(domain(format!("dual extremal needs 1 < r < ∞, got {r}")));
    }
    let phi: Vec<f64> = f.apply(w).magnitudes().into_iter().map(|x| x.powf(s)).collect();
    let norm = power_mean(&phi, r);
    if norm == 0.0 {
        return Err(domain("dual extremal of a zero function"));
    }
    Ok(phi.iter().map(|x| (x / norm).powf(r - 1.0)).collect())
}

/// The operator `T` generating the pairs `(f, g) = (T g, g)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairOperator {
    Identity,
    /// Average over the dyadic cube of the given level containing `x`.
    BoxAverage {
        level: u32,
    },
    /// `f = M_{W,B}(W g) · W^{-1} e_1`, so that
    /// `|W f(x)| = max_{B ∋ x} mean_B |W(x) g|`.
    ChristGoldberg,
}

pub fn make_pair(op: PairOperator, w: &MatrixWeightField, basis: &BoxBasis, g: &VectorField) -> Result<VectorField> {
    let grid = g.grid();
    match op {
        PairOperator::Identity => Ok(g.clone()),
        PairOperator::BoxAverage { level } => {
            if level > grid.level() {
                return Err(domain(format!("averaging level {level} is finer than the grid")));
            }
            let shift = grid.level() - level;
            let key = |a: usize| -> Vec<usize> { grid.atom_coords(a).iter().map(|c| c >> shift).collect() };
            let d = g.dim();
            let mut out = VectorField::zeros(grid, d);
            let mut groups: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = Default::default();
            for a in 0..grid.atom_count() {
                groups.entry(key(a)).or_default().push(a);
            }
            for atoms in groups.values() {
                let mean: Vec<f64> =
                    (0..d).map(|i| pairwise_mean(&atoms.iter().map(|&a| g.at(a)[i]).collect::<Vec<_>>())).collect();
                for &a in atoms {
                    out.set(a, &mean);
                }
            }
            Ok(out)
        }
        PairOperator::ChristGoldberg => {
            let m = christ_goldberg(w, basis, &g.apply(w))?;
            let winv = w.inverse()?;
            let d = g.dim();
            let mut out = VectorField::zeros(grid, d);
            for (a, &v) in m.iter().enumerate() {
                let col: Vec<f64> = (0..d).map(|i| winv.value(a).matrix().get(i, 0) * v).collect();
                out.set(a, &col);
            }
            Ok(out)
        }
    }
}

/// Which branch of the argument is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// `1 < p0 < q0 < ∞`.
    Interior,
    /// `p0 = 1`.
    EndpointOne,
    /// `q0 = ∞`.
    EndpointInfinity,
}

/// Inputs of one extrapolation run.
#[derive(Clone, Debug)]
pub struct ExtrapolationInputs {
    pub w: MatrixWeightField,
    pub basis: BoxBasis,
    pub p0: Exponent,
    pub q0: Exponent,
    /// Target lower exponent; `q` follows from `1/p - 1/q = 1/p0 - 1/q0`.
    pub p: Exponent,
    pub g: VectorField,
    pub op: PairOperator,
    pub order: usize,
    pub mesh: Arc<DirectionMesh>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunExponents {
    pub p0: String,
    pub q0: String,
    pub p: String,
    pub q: String,
    pub r: String,
    pub s: String,
    pub r0: String,
}

/// Everything produced by one run.
#[derive(Clone, Debug, Serialize)]
pub struct ExtrapolationRun {
    pub case: Case,
    pub exponents: RunExponents,
    pub f: VectorField,
    pub g: VectorField,
    pub h1: Option<Vec<f64>>,
    pub h1_bar: Option<Vec<f64>>,
    pub h2: Option<Vec<f64>>,
    pub h2_bar: Option<Vec<f64>>,
    /// `W0(x) = c(x) W(x)`: the scalar `c`.
    pub w0_factor: Vec<f64>,
    #[serde(skip)]
    pub w0: MatrixWeightField,
    #[serde(skip)]
    pub v1: Option<MatrixWeightField>,
    #[serde(skip)]
    pub v2: Option<MatrixWeightField>,
    pub series: Vec<SeriesReport>,
    pub n_hyp: f64,
    /// `C` in the final `‖f‖_{L^q(W)} <= C N ‖g‖_{L^p(W)}`.
    pub constant: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ledger: Ledger,
}

/// Exponents shared by the three cases.
struct Setup {
    e0: ExponentPair,
    e: ExponentPair,
    s: f64,
    q: f64,
    p: f64,
    r: f64,
    r_conj: f64,
    exps: RunExponents,
}

fn setup(inp: &ExtrapolationInputs) -> Result<Setup> {
    let e0 = ExponentPair::new(inp.p0, inp.q0)?;
    if inp.p0 == inp.q0 {
        return Err(domain("the off-diagonal construction needs p0 < q0"));
    }
    // 1/q = 1/p - 1/p0 + 1/q0, computed in rationals.
    let gap = inp.p0.reciprocal()? - inp.q0.reciprocal()?;
    let inv_q = inp.p.reciprocal()? - gap;
    if inv_q <= Rational::from_integer(0) {
        return Err(domain(format!("p = {} leaves no finite q for the gap {gap}", inp.p)));
    }
    let q = Exponent::from_reciprocal(inv_q)?;
    let e = ExponentPair::new(inp.p, q)?;
    if e.p.is_one() {
        return Err(domain("the target exponent p must exceed 1"));
    }
    if e.s != e0.s {
        return Err(domain("target and source pairs have different s"));
    }
    let exps = RunExponents {
        p0: e0.p.to_string(),
        q0: e0.q.to_string(),
        p: e.p.to_string(),
        q: e.q.to_string(),
        r: e.r.to_string(),
        s: e.s.to_string(),
        r0: e0.r.to_string(),
    };
    Ok(Setup { s: e.sf(), q: e.qf(), p: e.pf(), r: e.rf(), r_conj: e.r_conj.to_f64(), e0, e, exps })
}

fn lq_w(w: &MatrixWeightField, f: &VectorField, q: f64) -> f64 {
    power_mean(&f.apply(w).magnitudes(), q)
}

/// Stops at the first failed precondition.
fn require(ledger: &Ledger, stage: &str) -> Result<()> {
    match ledger.first_failure() {
        Some(c) => Err(domain(format!("{stage}: check {} failed (lhs {}, rhs {})", c.check_id, c.lhs, c.rhs))),
        None => Ok(()),
    }
}

fn weight_hypothesis(inp: &ExtrapolationInputs, st: &Setup, ledger: &mut Ledger) -> Result<MatrixWeightField> {
    let ws = inp.w.power(st.s)?;
    let ar = characteristic(&ws, &inp.basis, &ExponentPair::diagonal(st.e.r)?)?.value;
    ledger.push(Check::finite("hyp.ws_in_ar", "W^s belongs to A_r", ar));
    require(ledger, "hypothesis")?;
    Ok(ws)
}

/// `h̄1` and its properties; shared by the interior and `q0 = ∞` cases.
struct FirstIteration {
    h1: Vec<f64>,
    h1_bar: Vec<f64>,
    report: SeriesReport,
}

fn first_iteration(
    inp: &ExtrapolationInputs,
    st: &Setup,
    f: &VectorField,
    nf: f64,
    ng: f64,
    ledger: &mut Ledger,
) -> Result<FirstIteration> {
    let (s, q, p) = (st.s, st.q, st.p);
    let wf = f.apply(&inp.w).magnitudes();
    let wg = inp.g.apply(&inp.w).magnitudes();
    let h1: Vec<f64> = wf.iter().zip(&wg).map(|(a, b)| a / nf + b.powf(p / q) / ng.powf(p / q)).collect();
    let h1_norm = power_mean(&h1, q);
    ledger.push(Check::le("h1.norm", "h1 has L^q norm at most 2", h1_norm, 2.0, STRUCT_TOL));

    let wms = inp.w.power(-s)?;
    let seed = BodyField::new(
        inp.w.grid(),
        inp.mesh.clone(),
        wms.values().iter().zip(&h1).map(|(m, &c)| ConvexBody::Ellipsoid(m.matrix().scale(c.powf(s)))).collect(),
    )?;
    let op = IterationOperator::weighted(&inp.w, s, st.r, &inp.basis)?;
    let seed_norm = op.space_norm(&seed)?;
    ledger.push(Check::eq("h1s.norm", "weighted norm of H1^s is ‖h1‖_q^s", seed_norm, h1_norm.powf(s), 1e-10));
    ledger.push(Check::le("h1s.bound", "weighted norm of H1^s at most 2^s", seed_norm, 2f64.powf(s), STRUCT_TOL));

    let nb = op.estimate_norm_bound(&inp.mesh, &[&seed])?;
    let op = op.with_norm_bound(nb)?;
    let series = rdf_series(&op, &seed, inp.order)?;
    let (l, report) = series_properties(&op, &seed, &series, "rw")?;
    ledger.extend(l);

    let ws = inp.w.power(s)?;
    let coef = series.sum.norms(&ws)?;
    let h1_bar: Vec<f64> = coef.iter().map(|c| c.powf(1.0 / s)).collect();
    let excess = h1.iter().zip(&h1_bar).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    ledger.push(Check::le("A1", "h1 <= h1_bar", excess, 0.0, STRUCT_TOL));
    ledger.push(Check::le(
        "B1",
        "h1_bar has L^q norm at most 2^{1/s+1}",
        power_mean(&h1_bar, q),
        2f64.powf(1.0 / s + 1.0),
        STRUCT_TOL,
    ));
    let a1k = a1k_constant(&series.sum, &inp.basis)?;
    ledger.push(Check::le("C0", "R_W H1^s is A1 for convex bodies", a1k.value, 2.0 * nb, STRUCT_TOL));
    let v = wms.scaled_by(&coef)?;
    let a1 = characteristic(&v, &inp.basis, &ExponentPair::diagonal(Exponent::ONE)?)?.value;
    ledger.push(Check::finite("C1", "h1_bar^s W^{-s} belongs to A_1", a1));
    Ok(FirstIteration { h1, h1_bar, report })
}

struct SecondIteration {
    h2: Vec<f64>,
    h2_bar: Vec<f64>,
    report: SeriesReport,
}

fn second_iteration(
    inp: &ExtrapolationInputs,
    st: &Setup,
    f: &VectorField,
    nf: f64,
    ledger: &mut Ledger,
) -> Result<SecondIteration> {
    let (s, r, rc) = (st.s, st.r, st.r_conj);
    let h2 = dual_extremal(f, &inp.w, s, r)?;
    ledger.push(Check::eq("h2.norm", "dual extremal has unit L^{r'} norm", power_mean(&h2, rc), 1.0, 1e-10));
    let phi: Vec<f64> = f.apply(&inp.w).magnitudes().into_iter().map(|x| x.powf(s)).collect();
    let pairing = pairwise_mean(&phi.iter().zip(&h2).map(|(a, b)| a * b).collect::<Vec<_>>());
    ledger.push(Check::eq("h2.pairing", "dual extremal attains the L^r norm", pairing, nf.powf(s), 1e-10));

    let d = inp.w.dim();
    let seed = BodyField::new(
        inp.w.grid(),
        inp.mesh.clone(),
        h2.iter().map(|&c| ConvexBody::Ellipsoid(Mat::identity(d).scale(c))).collect(),
    )?;
    let op = IterationOperator::dual(&inp.w, s, rc, &inp.basis)?;
    let nb = op.estimate_norm_bound(&inp.mesh, &[&seed])?;
    let op = op.with_norm_bound(nb)?;
    let series = rdf_series(&op, &seed, inp.order)?;
    let (l, report) = series_properties(&op, &seed, &series, "rdual")?;
    ledger.extend(l);

    let h2_bar: Vec<f64> = series.sum.bodies().iter().map(|b| b.radius()).collect();
    let excess = h2.iter().zip(&h2_bar).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    ledger.push(Check::le("A1'", "h2 <= h2_bar", excess, 0.0, STRUCT_TOL));
    ledger.push(Check::le("B1'", "h2_bar has L^{r'} norm at most 2", power_mean(&h2_bar, rc), 2.0, STRUCT_TOL));
    let ws = inp.w.power(s)?;
    let lifted = BodyField::new(
        inp.w.grid(),
        inp.mesh.clone(),
        ws.values().iter().zip(&h2_bar).map(|(m, &c)| ConvexBody::Ellipsoid(m.matrix().scale(c))).collect(),
    )?;
    let a1k = a1k_constant(&lifted, &inp.basis)?;
    ledger.push(Check::le("C0'", "W^s R'_I H2 is A1 for convex bodies", a1k.value, 2.0 * nb, STRUCT_TOL));
    let v1 = ws.scaled_by(&h2_bar)?;
    let a1 = characteristic(&v1, &inp.basis, &ExponentPair::diagonal(Exponent::ONE)?)?.value;
    ledger.push(Check::finite("C1'", "h2_bar W^s belongs to A_1", a1));
    Ok(SecondIteration { h2, h2_bar, report })
}

/// Atomwise `|A - B|_F / |B|_F`.
fn max_rel_diff(a: &MatrixWeightField, b: &MatrixWeightField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x.matrix().sub(y.matrix()).frobenius() / y.matrix().frobenius())
        .fold(0.0, f64::max)
}

fn check_pair(inp: &ExtrapolationInputs, f: &VectorField, st: &Setup, ledger: &mut Ledger) -> Result<(f64, f64)> {
    let nf = lq_w(&inp.w, f, st.q);
    let ng = lq_w(&inp.w, &inp.g, st.p);
    ledger.push(Check::holds(
        "pair.admissible",
        "pair has finite nonzero norms",
        nf > 0.0 && nf.is_finite() && ng > 0.0 && ng.is_finite(),
    ));
    require(ledger, "pair")?;
    Ok((nf, ng))
}

/// Case `1 < p0 < q0 < ∞`.
pub fn build_case1(inp: &ExtrapolationInputs) -> Result<ExtrapolationRun> {
    let st = setup(inp)?;
    if inp.p0.is_one() || inp.q0.is_infinite() {
        return Err(domain("the interior case needs 1 < p0 < q0 < ∞"));
    }
    let mut ledger = Ledger::new();
    weight_hypothesis(inp, &st, &mut ledger)?;
    let f = make_pair(inp.op, &inp.w, &inp.basis, &inp.g)?;
    let (nf, ng) = check_pair(inp, &f, &st, &mut ledger)?;
    let (s, q, p) = (st.s, st.q, st.p);
    let (p0, q0) = (st.e0.pf(), st.e0.qf());
    let r0 = st.e0.rf();
    let r0c = st.e0.r_conj.to_f64();
    let rc = st.r_conj;

    let first = first_iteration(inp, &st, &f, nf, ng, &mut ledger)?;
    let second = second_iteration(inp, &st, &f, nf, &mut ledger)?;
    let (hb1, hb2) = (&first.h1_bar, &second.h2_bar);

    let wf = f.apply(&inp.w).magnitudes();
    let with_h2: Vec<f64> = wf.iter().zip(hb2).map(|(a, b)| a.powf(s) * b).collect();
    let step = pairwise_mean(&with_h2).powf(1.0 / s);
    ledger.push(Check::le("holder.dominate", "h2 may be replaced by h2_bar", nf, step, STRUCT_TOL));
    let i1 = pairwise_mean(
        &wf.iter().zip(hb1).zip(hb2).map(|((a, b), c)| a.powf(q0) * b.powf(-(q0 - s)) * c).collect::<Vec<_>>(),
    )
    .powf(1.0 / q0);
    let i2 = pairwise_mean(&hb1.iter().zip(hb2).map(|(a, b)| a.powf(s) * b).collect::<Vec<_>>());
    ledger.push(Check::le(
        "holder.split",
        "Hölder split into I1 and I2",
        step,
        i1 * i2.powf(1.0 / (r0c * s)),
        STRUCT_TOL,
    ));
    let i2_holder = power_mean(hb1, q).powf(s) * power_mean(hb2, rc);
    ledger.push(Check::le("I2.holder", "I2 by Hölder in r and r'", i2, i2_holder, STRUCT_TOL));
    ledger.push(Check::le("I2.bound", "I2 at most 2^{s+2}", i2, 2f64.powf(s + 2.0), STRUCT_TOL));
    ledger.push(Check::le("I1.bound", "I1^{q0} at most ‖f‖^{q0} I2", i1.powf(q0), nf.powf(q0) * i2, STRUCT_TOL));

    let factor: Vec<f64> = hb1.iter().zip(hb2).map(|(a, b)| a.powf(-(q0 - s) / q0) * b.powf(1.0 / q0)).collect();
    let w0 = inp.w.scaled_by(&factor)?;
    let f0 = lq_w(&w0, &f, q0);
    let g0 = lq_w(&w0, &inp.g, p0);
    ledger.push(Check::eq("I1.identity", "I1 is the L^{q0}(W0) norm of f", i1, f0, 1e-10));

    let ws = inp.w.power(s)?;
    let v1 = ws.scaled_by(hb2)?;
    let v2 = ws.scaled_by(&hb1.iter().map(|x| x.powf(-s)).collect::<Vec<_>>())?;
    let w0s = w0.power(s)?;
    let prod = MatrixWeightField::new(
        inp.w.grid(),
        v1.power(1.0 / r0)?
            .values()
            .iter()
            .zip(v2.power(1.0 / r0c)?.values())
            .map(|(a, b)| SpdMatrix::new(a.matrix().mul(b.matrix())))
            .collect::<Result<Vec<_>>>()?,
    )?;
    ledger.push(Check::le("V.identity", "V1^{1/r0} V2^{1/r0'} equals W0^s", max_rel_diff(&prod, &w0s), 0.0, 1e-8));
    let fact = factorization_check(&v1, &v2, st.e0.r, &inp.basis)?;
    ledger.push(Check::finite("W0s.ar0", "W0^s belongs to A_{r0}", fact.lhs));
    ledger.push(Check::le("factorization", "reverse factorization bound", fact.lhs, fact.rhs, STRUCT_TOL));

    let n_hyp = f0 / g0;
    let e = p0 * q / p - p0 * (q0 - s) / q0;
    let alpha = rc * q0 / p0;
    let alpha_c = alpha / (alpha - 1.0);
    ledger.push(Check::eq("alpha.identity", "α' times the h1_bar exponent is q", alpha_c * e, q, 1e-12));
    let weight_int = pairwise_mean(&hb1.iter().zip(hb2).map(|(a, b)| a.powf(e) * b.powf(p0 / q0)).collect::<Vec<_>>())
        .powf(1.0 / p0);
    ledger.push(Check::le(
        "g.transfer",
        "‖g‖_{L^{p0}(W0)} bounded through ‖g‖_{L^p(W)}",
        g0,
        ng * weight_int,
        STRUCT_TOL,
    ));
    let holder_alpha = pairwise_mean(&hb1.iter().map(|x| x.powf(q)).collect::<Vec<_>>()).powf(1.0 / (p0 * alpha_c))
        * pairwise_mean(&hb2.iter().map(|x| x.powf(rc)).collect::<Vec<_>>()).powf(1.0 / (rc * q0));
    ledger.push(Check::le("holder.alpha", "Hölder in α and α'", weight_int, holder_alpha, STRUCT_TOL));
    let c_i1 = 2f64.powf((1.0 + 1.0 / s) * q / (p0 * alpha_c) + 1.0 / q0);
    ledger.push(Check::le(
        "holder.alpha.bound",
        "the α-Hölder factor is at most its power of 2",
        holder_alpha,
        c_i1,
        STRUCT_TOL,
    ));
    let constant = c_i1 * 2f64.powf((s + 2.0) / (s * r0c));
    let lhs = nf;
    let rhs = constant * n_hyp * ng;
    ledger.push(Check::le("final", "extrapolated inequality", lhs, rhs, STRUCT_TOL));

    Ok(ExtrapolationRun {
        case: Case::Interior,
        exponents: st.exps,
        f,
        g: inp.g.clone(),
        h1: Some(first.h1),
        h1_bar: Some(first.h1_bar),
        h2: Some(second.h2),
        h2_bar: Some(second.h2_bar),
        w0_factor: factor,
        w0,
        v1: Some(v1),
        v2: Some(v2),
        series: vec![first.report, second.report],
        n_hyp,
        constant,
        lhs,
        rhs,
        ledger,
    })
}

/// Case `p0 = 1 < q0 < ∞`.
pub fn build_case2(inp: &ExtrapolationInputs) -> Result<ExtrapolationRun> {
    if !inp.p0.is_one() || inp.q0.is_infinite() {
        return Err(domain("the first endpoint case needs p0 = 1 and q0 < ∞"));
    }
    let st = setup(inp)?;
    let mut ledger = Ledger::new();
    weight_hypothesis(inp, &st, &mut ledger)?;
    let f = make_pair(inp.op, &inp.w, &inp.basis, &inp.g)?;
    let (nf, ng) = check_pair(inp, &f, &st, &mut ledger)?;
    let (q0, p) = (st.e0.qf(), st.p);
    let pc = p / (p - 1.0);
    ledger.push(Check::holds(
        "exponent.identity",
        "r' = p'/q0 in exact arithmetic",
        st.e.r_conj == st.e.p_conj.div(st.e0.q)?,
    ));

    let second = second_iteration(inp, &st, &f, nf, &mut ledger)?;
    let hb2 = &second.h2_bar;
    let wf = f.apply(&inp.w).magnitudes();
    let with_h2 = pairwise_mean(&wf.iter().zip(hb2).map(|(a, b)| a.powf(q0) * b).collect::<Vec<_>>());
    ledger.push(Check::le("holder.dominate", "h2 may be replaced by h2_bar", nf.powf(q0), with_h2, STRUCT_TOL));
    ledger.push(Check::le(
        "holder.r",
        "Hölder in r and r' with (B1')",
        with_h2,
        nf.powf(q0) * power_mean(hb2, st.r_conj),
        STRUCT_TOL,
    ));
    ledger.push(Check::le("holder.r.bound", "the same at most 2‖f‖^{q0}", with_h2, 2.0 * nf.powf(q0), STRUCT_TOL));

    let factor: Vec<f64> = hb2.iter().map(|x| x.powf(1.0 / q0)).collect();
    let w0 = inp.w.scaled_by(&factor)?;
    let w0q = w0.power(q0)?;
    let v1 = inp.w.power(q0)?.scaled_by(hb2)?;
    ledger.push(Check::le("V.identity", "W0^{q0} equals h2_bar W^{q0}", max_rel_diff(&w0q, &v1), 0.0, 1e-8));
    let a1 = characteristic(&w0q, &inp.basis, &ExponentPair::diagonal(Exponent::ONE)?)?.value;
    ledger.push(Check::finite("W0.a1", "W0^{q0} belongs to A_1", a1));

    let f0 = lq_w(&w0, &f, q0);
    let g0 = lq_w(&w0, &inp.g, 1.0);
    ledger.push(Check::le("f.transfer", "‖f‖_{L^q(W)} at most ‖f‖_{L^{q0}(W0)}", nf, f0, STRUCT_TOL));
    let h_int = pairwise_mean(&hb2.iter().map(|x| x.powf(pc / q0)).collect::<Vec<_>>()).powf(1.0 / pc);
    ledger.push(Check::le("holder.p", "Hölder in p and p'", g0, ng * h_int, STRUCT_TOL));
    ledger.push(Check::le(
        "holder.p.bound",
        "the h2_bar factor is at most 2^{1/q0}",
        h_int,
        2f64.powf(1.0 / q0),
        STRUCT_TOL,
    ));
    let n_hyp = f0 / g0;
    let constant = 2f64.powf(1.0 / q0);
    let rhs = constant * n_hyp * ng;
    ledger.push(Check::le("final", "extrapolated inequality", nf, rhs, STRUCT_TOL));

    Ok(ExtrapolationRun {
        case: Case::EndpointOne,
        exponents: st.exps,
        f,
        g: inp.g.clone(),
        h1: None,
        h1_bar: None,
        h2: Some(second.h2),
        h2_bar: Some(second.h2_bar),
        w0_factor: factor,
        w0,
        v1: Some(v1),
        v2: None,
        series: vec![second.report],
        n_hyp,
        constant,
        lhs: nf,
        rhs,
        ledger,
    })
}

/// Case `1 < p0 < q0 = ∞`.
pub fn build_case3(inp: &ExtrapolationInputs) -> Result<ExtrapolationRun> {
    if inp.p0.is_one() || !inp.q0.is_infinite() {
        return Err(domain("the second endpoint case needs 1 < p0 and q0 = ∞"));
    }
    let st = setup(inp)?;
    let mut ledger = Ledger::new();
    weight_hypothesis(inp, &st, &mut ledger)?;
    let f = make_pair(inp.op, &inp.w, &inp.basis, &inp.g)?;
    let (nf, ng) = check_pair(inp, &f, &st, &mut ledger)?;
    let (s, q, p) = (st.s, st.q, st.p);
    let p0 = st.e0.pf();
    let expo = match st.e.q.div(st.e.p)? {
        Exponent::Finite(x) => x - Rational::from_integer(1),
        Exponent::Infinite => return Err(domain("q/p must be finite")),
    };
    ledger.push(Check::holds(
        "exponent.identity",
        "p0 (q/p - 1) = q in exact arithmetic",
        st.e.q == Exponent::Finite(expo).mul(st.e0.p),
    ));

    let first = first_iteration(inp, &st, &f, nf, ng, &mut ledger)?;
    let hb1 = &first.h1_bar;
    let factor: Vec<f64> = hb1.iter().map(|x| 1.0 / x).collect();
    let w0 = inp.w.scaled_by(&factor)?;
    let wf = f.apply(&inp.w).magnitudes();
    let wg = inp.g.apply(&inp.w).magnitudes();
    let f_ptw = wf.iter().zip(hb1).map(|(a, b)| a / b).fold(0.0, f64::max);
    ledger.push(Check::le("f.pointwise", "|W f| / h1_bar at most ‖f‖_{L^q(W)}", f_ptw, nf, STRUCT_TOL));
    let g_excess = wg.iter().zip(hb1).map(|(a, b)| a / b - b.powf(q / p - 1.0) * ng).fold(f64::NEG_INFINITY, f64::max);
    ledger.push(Check::le(
        "g.pointwise",
        "|h1_bar^{-1} W g| at most h1_bar^{q/p-1} ‖g‖_{L^p(W)}",
        g_excess,
        0.0,
        STRUCT_TOL * ng.max(1.0),
    ));

    let w0s = w0.power(s)?;
    let v2 = inp.w.power(s)?.scaled_by(&hb1.iter().map(|x| x.powf(-s)).collect::<Vec<_>>())?;
    ledger.push(Check::le("V.identity", "W0^{p0'} equals h1_bar^{-s} W^s", max_rel_diff(&w0s, &v2), 0.0, 1e-8));
    let ainf = characteristic(&w0s, &inp.basis, &ExponentPair::new(Exponent::INF, Exponent::INF)?)?.value;
    ledger.push(Check::finite("W0.ainf", "W0^{p0'} belongs to A_∞", ainf));

    let f0 = lq_w(&w0, &f, f64::INFINITY);
    let g0 = lq_w(&w0, &inp.g, p0);
    ledger.push(Check::le("f.transfer", "‖f‖_{L^∞(W0)} at most ‖f‖_{L^q(W)}", f0, nf, STRUCT_TOL));
    let hq = power_mean(hb1, q);
    ledger.push(Check::le("holder.inf", "‖f‖_{L^q(W)} at most ‖f‖_{L^∞(W0)} ‖h1_bar‖_q", nf, f0 * hq, STRUCT_TOL));
    let b = 1.0 / st.e0.p_conj.to_f64() + 1.0;
    let g_int = pairwise_mean(&hb1.iter().map(|x| x.powf(p0 * (q / p - 1.0))).collect::<Vec<_>>()).powf(1.0 / p0);
    ledger.push(Check::le("g.transfer", "‖g‖_{L^{p0}(W0)} bounded through ‖g‖_{L^p(W)}", g0, ng * g_int, STRUCT_TOL));
    ledger.push(Check::le(
        "g.transfer.bound",
        "the h1_bar factor is at most 2^{(1/p0'+1) q/p0}",
        g_int,
        2f64.powf(b * q / p0),
        STRUCT_TOL,
    ));
    let n_hyp = f0 / g0;
    let constant = 2f64.powf(b) * 2f64.powf(b * q / p0);
    let rhs = constant * n_hyp * ng;
    ledger.push(Check::le("final", "extrapolated inequality", nf, rhs, STRUCT_TOL));

    Ok(ExtrapolationRun {
        case: Case::EndpointInfinity,
        exponents: st.exps,
        f,
        g: inp.g.clone(),
        h1: Some(first.h1),
        h1_bar: Some(first.h1_bar),
        h2: None,
        h2_bar: None,
        w0_factor: factor,
        w0,
        v1: None,
        v2: Some(v2),
        series: vec![first.report],
        n_hyp,
        constant,
        lhs: nf,
        rhs,
        ledger,
    })
}

/// Dispatches on the exponents.
pub fn run_extrapolation(inp: &ExtrapolationInputs) -> Result<ExtrapolationRun> {
    if inp.p0.is_one() {
        build_case2(inp)
    } else if inp.q0.is_infinite() {
        build_case3(inp)
    } else {
        build_case1(inp)
    }
}

/// Dimensional constant used in the reverse factorization bound.
pub fn factorization_constant(d: usize) -> f64 {
    (d * d) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorizationRecord {
    /// `[W0^{1/p} W1^{1/p'}]_{A_p}`.
    pub lhs: f64,
    pub a1: f64,
    pub ainf: f64,
    pub constant: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `[W0^{1/p} W1^{1/p'}]_{A_p} <= c(d) [W0]_{A_1}^{1/p} [W1]_{A_∞}^{1/p'}`
/// for atomwise commuting `W0`, `W1`.
pub fn factorization_check(
    w0: &MatrixWeightField,
    w1: &MatrixWeightField,
    p: Exponent,
    basis: &BoxBasis,
) -> Result<FactorizationRecord> {
    let pf = p.to_f64();
    if !(pf > 1.0 && pf.is_finite()) {
        return Err(domain(format!("factorization needs 1 < p < ∞, got {p}")));
    }
    for (a, (x, y)) in w0.values().iter().zip(w1.values()).enumerate() {
        let (x, y) = (x.matrix(), y.matrix());
        let c = x.mul(y).sub(&y.mul(x)).frobenius();
        if c > 1e-9 * x.frobenius() * y.frobenius() {
            return Err(domain(format!("factors do not commute at atom {a}")));
        }
    }
    let pc = p.conjugate()?.to_f64();
    let w = MatrixWeightField::new(
        w0.grid(),
        w0.power(1.0 / pf)?
            .values()
            .iter()
            .zip(w1.power(1.0 / pc)?.values())
            .map(|(a, b)| SpdMatrix::new(a.matrix().mul(b.matrix()).symmetrized()))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let lhs = characteristic(&w, basis, &ExponentPair::diagonal(p)?)?.value;
    let a1 = characteristic(w0, basis, &ExponentPair::diagonal(Exponent::ONE)?)?.value;
    let ainf = characteristic(w1, basis, &ExponentPair::new(Exponent::INF, Exponent::INF)?)?.value;
    let constant = factorization_constant(w0.dim());
    let rhs = constant * a1.powf(1.0 / pf) * ainf.powf(1.0 / pc);
    Ok(FactorizationRecord { lhs, a1, ainf, constant, rhs, pass: lhs <= rhs * (1.0 + STRUCT_TOL) })
}
