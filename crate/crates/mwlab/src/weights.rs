//! Piecewise-constant matrix weights on a grid and the built-in families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{construction, Error, Result};
use crate::geometry::{BoxBasis, Grid};
use crate::spd::{EigenTag, ExtendedSpdMatrix, Mat, SpdMatrix, MAX_DIM};
use crate::stats::pairwise_mean;

/// One SPD matrix per atom, optionally with spectral tags for degenerate
/// experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixWeightField {
    grid: Grid,
    d: usize,
    values: Vec<SpdMatrix>,
    tags: Option<Vec<Vec<EigenTag>>>,
}

impl MatrixWeightField {
    /// Nondegenerate field; every value must be strictly positive definite.
    pub fn new(grid: &Grid, values: Vec<SpdMatrix>) -> Result<MatrixWeightField> {
        let d = check_shape(grid, &values)?;
        for (a, v) in values.iter().enumerate() {
            if !v.is_positive_definite() {
                return Err(construction(format!(
                    "atom {a} {:?}: value is not positive definite (smallest eigenvalue {:e})",
                    grid.atom_coords(a),
                    v.min_eigenvalue()
                )));
            }
        }
        Ok(MatrixWeightField { grid: grid.clone(), d, values, tags: None })
    }

    /// Field whose atoms may carry zero or infinite eigen-directions.
    pub fn degenerate(grid: &Grid, values: Vec<ExtendedSpdMatrix>) -> Result<MatrixWeightField> {
        let bases: Vec<SpdMatrix> = values.iter().map(|v| v.base().clone()).collect();
        let d = check_shape(grid, &bases)?;
        let mut tags: Vec<Vec<EigenTag>> = values.iter().map(|v| v.tags().to_vec()).collect();
        for (t, b) in tags.iter_mut().zip(&bases) {
            for (tag, &l) in t.iter_mut().zip(b.eigenvalues()) {
                if *tag == EigenTag::Finite && l == 0.0 {
                    *tag = EigenTag::Zero;
                }
            }
        }
        let any = tags.iter().flatten().any(|t| *t != EigenTag::Finite);
        Ok(MatrixWeightField { grid: grid.clone(), d, values: bases, tags: any.then_some(tags) })
    }

    pub fn constant(grid: &Grid, m: &SpdMatrix) -> Result<MatrixWeightField> {
        MatrixWeightField::new(grid, vec![m.clone(); grid.atom_count()])
    }

    pub fn identity(grid: &Grid, d: usize) -> MatrixWeightField {
        MatrixWeightField { grid: grid.clone(), d, values: vec![SpdMatrix::identity(d); grid.atom_count()], tags: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, a: usize) -> &SpdMatrix {
        &self.values[a]
    }

    pub fn values(&self) -> &[SpdMatrix] {
        &self.values
    }

    pub fn tags(&self, a: usize) -> Option<&[EigenTag]> {
        self.tags.as_ref().map(|t| t[a].as_slice())
    }

    pub fn extended(&self, a: usize) -> ExtendedSpdMatrix {
        match &self.tags {
            Some(t) => ExtendedSpdMatrix::new(self.values[a].clone(), t[a].clone()).expect("tags match dimension"),
            None => ExtendedSpdMatrix::from_spd(self.values[a].clone()),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.tags.is_some()
    }

    pub fn atom_is_degenerate(&self, a: usize) -> bool {
        self.tags.as_ref().is_some_and(|t| t[a].iter().any(|x| *x != EigenTag::Finite))
    }

    /// Fails with `DegenerateWeight` if any of `atoms` is degenerate.
    pub fn require_nondegenerate_on(&self, atoms: impl IntoIterator<Item = usize>) -> Result<()> {
        if self.tags.is_none() {
            return Ok(());
        }
        for a in atoms {
            if self.atom_is_degenerate(a) {
                return Err(Error::DegenerateWeight(format!(
                    "atom {a} {:?} carries a zero or infinite eigenvalue",
                    self.grid.atom_coords(a)
                )));
            }
        }
        Ok(())
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        self.require_nondegenerate_on(0..self.len())
    }

    /// Atomwise `W^r`; tags follow `0^r` and `∞^r`.
    pub fn power(&self, r: f64) -> Result<MatrixWeightField> {
        if r == 1.0 {
            return Ok(self.clone());
        }
        let values = if let Some(tags) = &self.tags {
            // Tagged eigenvalues are stood in for by 1 so that the base stays
            // invertible; the tag carries the actual value.
            self.values
                .par_iter()
                .zip(tags)
                .map(|(v, t)| {
                    let evals: Vec<f64> = v
                        .eigenvalues()
                        .iter()
                        .zip(t)
                        .map(|(&l, tag)| if *tag == EigenTag::Finite { l.powf(r) } else { 1.0 })
                        .collect();
                    SpdMatrix::from_spectral(evals, *v.eigenvectors())
                })
                .collect()
        } else {
            self.values.par_iter().map(|v| v.power(r)).collect::<Result<Vec<_>>>()?
        };
        let tags = self.tags.as_ref().map(|all| {
            all.iter()
                .map(|t| {
                    t.iter()
                        .map(|tag| match (tag, r.partial_cmp(&0.0)) {
                            (EigenTag::Finite, _) | (_, Some(std::cmp::Ordering::Equal)) => EigenTag::Finite,
                            (EigenTag::Zero, Some(std::cmp::Ordering::Less)) => EigenTag::Infinite,
                            (EigenTag::Infinite, Some(std::cmp::Ordering::Less)) => EigenTag::Zero,
                            (t, _) => *t,
                        })
                        .collect()
                })
                .collect()
        });
        Ok(self.with_values(values, tags))
    }

    pub fn inverse(&self) -> Result<MatrixWeightField> {
        self.power(-1.0)
    }

    /// `c W`.
    pub fn scaled(&self, c: f64) -> Result<MatrixWeightField> {
        let values = self.values.iter().map(|v| v.scaled(c)).collect::<Result<Vec<_>>>()?;
        Ok(self.with_values(values, self.tags.clone()))
    }

    /// Atomwise `c(x) W(x)` for positive scalars `c`.
    pub fn scaled_by(&self, c: &[f64]) -> Result<MatrixWeightField> {
        let values = self.values.iter().zip(c).map(|(v, &s)| v.scaled(s)).collect::<Result<Vec<_>>>()?;
        Ok(self.with_values(values, self.tags.clone()))
    }

    fn with_values(&self, values: Vec<SpdMatrix>, tags: Option<Vec<Vec<EigenTag>>>) -> Self {
        MatrixWeightField { grid: self.grid.clone(), d: self.d, values, tags }
    }

    /// `|W(x)|_op` per atom, `∞` on infinite-tagged atoms.
    pub fn op_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|a| match self.tags(a) {
                Some(_) => self.extended(a).effective_eigenvalues().into_iter().fold(0.0, f64::max),
                None => self.values[a].norm(),
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "grid": {"n": self.grid.n(), "level": self.grid.level(), "alpha": self.grid.alpha()},
            "d": self.d,
            "atoms": self.values.iter().map(|v| v.matrix().entries().to_vec()).collect::<Vec<_>>(),
            "tags": self.tags,
        })
    }

    pub fn from_json(v: &Value) -> Result<MatrixWeightField> {
        #[derive(Deserialize)]
        struct GridSpec {
            n: usize,
            level: u32,
            alpha: Option<Vec<usize>>,
        }
        #[derive(Deserialize)]
        struct Raw {
            grid: GridSpec,
            d: usize,
            atoms: Vec<Vec<f64>>,
            tags: Option<Vec<Vec<EigenTag>>>,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let grid = Grid::new(raw.grid.n, raw.grid.level, raw.grid.alpha)?;
        let values = explicit_values(&grid, raw.d, &raw.atoms)?;
        match raw.tags {
            None => MatrixWeightField::new(&grid, values),
            Some(tags) => {
                let ext = values
                    .into_iter()
                    .zip(tags)
                    .map(|(v, t)| ExtendedSpdMatrix::new(v, t))
                    .collect::<Result<Vec<_>>>()?;
                MatrixWeightField::degenerate(&grid, ext)
            }
        }
    }

    /// One atom per row: atom index, coordinates, row-major entries.
    pub fn to_csv(&self) -> String {
        let d = self.d;
        let mut out = String::from("atom");
        for i in 0..self.grid.n() {
            out.push_str(&format!(",x{i}"));
        }
        for i in 0..d {
            for j in 0..d {
                out.push_str(&format!(",w{i}{j}"));
            }
        }
        out.push('\n');
        for (a, v) in self.values.iter().enumerate() {
            out.push_str(&a.to_string());
            for c in self.grid.atom_center(a) {
                out.push_str(&format!(",{c}"));
            }
            for e in v.matrix().entries() {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn check_shape(grid: &Grid, values: &[SpdMatrix]) -> Result<usize> {
    if values.len() != grid.atom_count() {
        return Err(construction(format!("{} values for a grid of {} atoms", values.len(), grid.atom_count())));
    }
    let d = values[0].dim();
    if values.iter().any(|v| v.dim() != d) {
        return Err(construction("atom values must share one dimension"));
    }
    Ok(d)
}

fn explicit_values(grid: &Grid, d: usize, atoms: &[Vec<f64>]) -> Result<Vec<SpdMatrix>> {
    if !(1..=MAX_DIM).contains(&d) {
        return Err(construction(format!("matrix dimension {d} unsupported")));
    }
    if atoms.len() != grid.atom_count() {
        return Err(construction(format!("{} atom values for a grid of {} atoms", atoms.len(), grid.atom_count())));
    }
    atoms
        .iter()
        .enumerate()
        .map(|(a, e)| {
            let m = Mat::from_row_major(d, e).map_err(|err| atom_error(grid, a, err))?;
            let asym = m.sub(&m.transpose()).max_abs();
            if asym > 1e-12 * m.max_abs().max(1.0) {
                return Err(construction(format!(
                    "atom {a} {:?}: matrix is not symmetric (asymmetry {asym:e})",
                    grid.atom_coords(a)
                )));
            }
            SpdMatrix::new(m).map_err(|err| atom_error(grid, a, err))
        })
        .collect()
}

fn atom_error(grid: &Grid, a: usize, err: Error) -> Error {
    construction(format!("atom {a} {:?}: {err}", grid.atom_coords(a)))
}

/// Angle field of the rotated power family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaField {
    Constant {
        theta: f64,
    },
    /// `theta(x) = offset + <slope, x>`.
    Linear {
        offset: f64,
        slope: Vec<f64>,
    },
    /// `theta(x) = kappa log|x - x0|`.
    LogSpiral {
        kappa: f64,
    },
}

/// Built-in weight families, evaluated at cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamilySpec {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `|x - x0|^a I_d`.
    ScalarPower {
        a: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        d: usize,
    },
    /// `R_θ diag(|x-x0|^a, |x-x0|^b) R_θ^t` in `d = 2`.
    RotatedPower {
        a: f64,
        b: f64,
        theta: ThetaField,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Block-diagonal assembly of smaller families.
    BlockDiag {
        blocks: Vec<WeightFamilySpec>,
    },
    /// Rotated power with `b = -a` and a log-spiral angle.
    KnvExplorer {
        kappa: f64,
        a: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Random SPD per atom: `R diag(e^{g_i}) R^t`, `g_i` uniform in
    /// `[-spread, spread]`, `R` a random rotation; constant on cells of
    /// `cell_level` (defaults to the grid level).
    Random {
        d: usize,
        seed: u64,
        spread: f64,
        #[serde(default)]
        cell_level: Option<u32>,
    },
    /// Row-major entries per atom.
    Explicit {
        d: usize,
        atoms: Vec<Vec<f64>>,
    },
}

fn one() -> usize {
    1
}

fn distance_to(x: &[f64], center: &Option<Vec<f64>>) -> Result<f64> {
    let dist = match center {
        Some(c) => {
            if c.len() != x.len() {
                return Err(construction("power-weight center must have n coordinates"));
            }
            x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        }
        None => x.iter().map(|a| (a - 0.5).powi(2)).sum::<f64>().sqrt(),
    };
    Ok(dist)
}

impl WeightFamilySpec {
    pub fn dim(&self) -> usize {
        match self {
            WeightFamilySpec::Constant { matrix } => matrix.len(),
            WeightFamilySpec::ScalarPower { d, .. } => *d,
            WeightFamilySpec::RotatedPower { .. } | WeightFamilySpec::KnvExplorer { .. } => 2,
            WeightFamilySpec::BlockDiag { blocks } => blocks.iter().map(|b| b.dim()).sum(),
            WeightFamilySpec::Random { d, .. } | WeightFamilySpec::Explicit { d, .. } => *d,
        }
    }

    fn values(&self, grid: &Grid) -> Result<Vec<SpdMatrix>> {
        let m = grid.atom_count();
        match self {
            WeightFamilySpec::Constant { matrix } => {
                let v = SpdMatrix::from_rows(matrix)?;
                Ok(vec![v; m])
            }
            WeightFamilySpec::ScalarPower { a, center, d } => (0..m)
                .map(|i| {
                    let r = distance_to(&grid.atom_center(i), center)?;
                    SpdMatrix::scalar(*d, r.powf(*a)).map_err(|e| atom_error(grid, i, e))
                })
                .collect(),
            WeightFamilySpec::RotatedPower { a, b, theta, center } => rotated_power(grid, *a, *b, theta, center),
            WeightFamilySpec::KnvExplorer { kappa, a, center } => {
                rotated_power(grid, *a, -*a, &ThetaField::LogSpiral { kappa: *kappa }, center)
            }
            WeightFamilySpec::BlockDiag { blocks } => {
                let parts = blocks.iter().map(|b| b.values(grid)).collect::<Result<Vec<_>>>()?;
                let d = self.dim();
                if d > MAX_DIM {
                    return Err(construction(format!("block dimension {d} exceeds {MAX_DIM}")));
                }
                (0..m)
                    .map(|i| {
                        let mut out = Mat::zeros(d);
                        let mut off = 0;
                        for p in &parts {
                            let bm = p[i].matrix();
                            for r in 0..bm.dim() {
                                for c in 0..bm.dim() {
                                    out.set(off + r, off + c, bm.get(r, c));
                                }
                            }
                            off += bm.dim();
                        }
                        SpdMatrix::new(out)
                    })
                    .collect()
            }
            WeightFamilySpec::Random { d, seed, spread, cell_level } => {
                random_values(grid, *d, *seed, *spread, *cell_level)
            }
            WeightFamilySpec::Explicit { d, atoms } => explicit_values(grid, *d, atoms),
        }
    }
}

fn rotated_power(grid: &Grid, a: f64, b: f64, theta: &ThetaField, center: &Option<Vec<f64>>) -> Result<Vec<SpdMatrix>> {
    (0..grid.atom_count())
        .map(|i| {
            let x = grid.atom_center(i);
            let r = distance_to(&x, center)?;
            let th = match theta {
                ThetaField::Constant { theta } => *theta,
                ThetaField::Linear { offset, slope } => offset + slope.iter().zip(&x).map(|(s, y)| s * y).sum::<f64>(),
                ThetaField::LogSpiral { kappa } => kappa * r.ln(),
            };
            let rot = Mat::rotation2(th);
            let m = rot.mul(&Mat::diag(&[r.powf(a), r.powf(b)])).mul(&rot.transpose());
            SpdMatrix::new(m).map_err(|e| atom_error(grid, i, e))
        })
        .collect()
}

/// Random rotation: Gram-Schmidt on Gaussian columns.
pub(crate) fn random_rotation(d: usize, rng: &mut impl Rng) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= dot * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut m = Mat::zeros(d);
    for (j, c) in cols.iter().enumerate() {
        for (i, x) in c.iter().enumerate() {
            m.set(i, j, *x);
        }
    }
    m
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Random SPD matrix with log-eigenvalues uniform in `[-spread, spread]`.
pub fn random_spd(d: usize, spread: f64, rng: &mut impl Rng) -> SpdMatrix {
    let r = random_rotation(d, rng);
    let evals: Vec<f64> = (0..d).map(|_| rng.gen_range(-spread..=spread).exp()).collect();
    SpdMatrix::from_spectral(evals, r)
}

fn random_values(grid: &Grid, d: usize, seed: u64, spread: f64, cell_level: Option<u32>) -> Result<Vec<SpdMatrix>> {
    if !(1..=MAX_DIM).contains(&d) || !(spread >= 0.0 && spread.is_finite()) {
        return Err(construction("random family needs 1 <= d <= 8 and a finite spread >= 0"));
    }
    let cl = cell_level.unwrap_or(grid.level()).min(grid.level());
    let coarse = Grid::new(grid.n(), cl, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<SpdMatrix> = (0..coarse.atom_count()).map(|_| random_spd(d, spread, &mut rng)).collect();
    let shift = grid.level() - cl;
    Ok((0..grid.atom_count())
        .map(|a| {
            let c: Vec<usize> = grid.atom_coords(a).into_iter().map(|x| x >> shift).collect();
            cells[coarse.atom_index(&c)].clone()
        })
        .collect())
}

/// Evaluates a family at every cell center.
pub fn sample_weight(spec: &WeightFamilySpec, grid: &Grid) -> Result<MatrixWeightField> {
    MatrixWeightField::new(grid, spec.values(grid)?)
}

/// Atomwise power.
pub fn field_power(w: &MatrixWeightField, r: f64) -> Result<MatrixWeightField> {
    w.power(r)
}

/// Per-component integrability summary of a weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentIntegrability {
    pub component: usize,
    /// `max_B mean_B |W|^p`.
    pub max_avg_norm_p: f64,
    /// `max_B mean_B |W^{-1}|^{p'}`.
    pub max_avg_inverse_norm_pconj: f64,
    pub infinite_tagged: bool,
    pub zero_tagged: bool,
    /// Some atom of the component is degenerate.
    pub trivial_candidate: bool,
}

pub fn local_integrability_report(
    w: &MatrixWeightField,
    basis: &BoxBasis,
    p: f64,
) -> Result<Vec<ComponentIntegrability>> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(crate::error::domain(format!("integrability exponent {p} outside (1,∞)")));
    }
    let pc = p / (p - 1.0);
    let norms = w.op_norms();
    let inv_norms: Vec<f64> = (0..w.len())
        .map(|a| {
            let e = w.extended(a).effective_eigenvalues();
            e.iter().fold(0.0, |m: f64, &l| m.max(if l == 0.0 { f64::INFINITY } else { 1.0 / l }))
        })
        .collect();
    let mut out = Vec::new();
    for (ci, comp) in basis.components().iter().enumerate() {
        let mut mp: f64 = 0.0;
        let mut mq: f64 = 0.0;
        for &b in &comp.boxes {
            let atoms = basis.box_atoms(b);
            let xs: Vec<f64> = atoms.iter().map(|&a| norms[a as usize].powf(p)).collect();
            let ys: Vec<f64> = atoms.iter().map(|&a| inv_norms[a as usize].powf(pc)).collect();
            mp = mp.max(pairwise_mean(&xs));
            mq = mq.max(pairwise_mean(&ys));
        }
        let tag_any = |t: EigenTag| comp.atoms.iter().any(|&a| w.tags(a).is_some_and(|ts| ts.contains(&t)));
        let infinite_tagged = tag_any(EigenTag::Infinite);
        let zero_tagged = tag_any(EigenTag::Zero);
        out.push(ComponentIntegrability {
            component: ci,
            max_avg_norm_p: mp,
            max_avg_inverse_norm_pconj: mq,
            infinite_tagged,
            zero_tagged,
            trivial_candidate: infinite_tagged || zero_tagged,
        });
    }
    Ok(out)
}
