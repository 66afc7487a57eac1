//! Small dense symmetric linear algebra.
//!
//! Everything here works on matrices of order at most [`MAX_DIM`], stored
//! inline so that the inner loops of the characteristic and maximal-operator
//! code never allocate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{construction, domain, Error, Result};

/// Largest supported matrix order.
pub const MAX_DIM: usize = 8;

/// Relative clamp window for slightly negative eigenvalues.
pub const CLAMP_TOL: f64 = 1e-10;

/// Jacobi stops once the off-diagonal Frobenius mass is below this fraction
/// of the trace.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense row-major `d x d` matrix with `d <= MAX_DIM`.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    d: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl Mat {
    pub fn zeros(d: usize) -> Mat {
        assert!((1..=MAX_DIM).contains(&d), "matrix order {d} outside 1..={MAX_DIM}");
        Mat { d, a: [0.0; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(d: usize) -> Mat {
        let mut m = Mat::zeros(d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Mat {
        let mut m = Mat::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Mat> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(construction(format!("matrix order {d} outside 1..={MAX_DIM}")));
        }
        if entries.len() != d * d {
            return Err(construction(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                entries.len()
            )));
        }
        let mut m = Mat::zeros(d);
        m.a[..d * d].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(construction("matrix rows must form a square array"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Mat::from_row_major(d, &flat)
    }

    /// Rotation by `theta` in the plane (order 2 only).
    pub fn rotation2(theta: f64) -> Mat {
        let (s, c) = theta.sin_cos();
        let mut m = Mat::zeros(2);
        m.a[0] = c;
        m.a[1] = -s;
        m.a[2] = s;
        m.a[3] = c;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.d + j] = v;
    }

    /// Row-major entries, `d * d` of them.
    pub fn entries(&self) -> &[f64] {
        &self.a[..self.d * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| self.entries()[i * self.d..(i + 1) * self.d].to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let d = self.d;
        let mut t = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                t.a[j * d + i] = self.a[i * d + j];
            }
        }
        t
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let d = self.d;
        debug_assert_eq!(d, o.d);
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let aik = self.a[i * d + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.a[i * d + j] += aik * o.a[k * d + j];
                }
            }
        }
        out
    }

    pub fn add(&self, o: &Mat) -> Mat {
        let mut out = *self;
        for (x, y) in out.a.iter_mut().zip(o.a.iter()) {
            *x += y;
        }
        out
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        let mut out = *self;
        for (x, y) in out.a.iter_mut().zip(o.a.iter()) {
            *x -= y;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat {
        let mut out = *self;
        for x in out.a.iter_mut().take(self.d * self.d) {
            *x *= c;
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.mul_vec_into(v, &mut out);
        out
    }

    #[inline]
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `|M v|` without allocating.
    #[inline]
    pub fn apply_norm(&self, v: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            let x: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            s += x * x;
        }
        s.sqrt()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|x| x.is_finite())
    }

    pub fn symmetrized(&self) -> Mat {
        self.add(&self.transpose()).scale(0.5)
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    /// `M^t M`.
    pub fn gram(&self) -> Mat {
        self.transpose().mul(self)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Cyclic Jacobi on a symmetric matrix. Returns eigenvalues sorted ascending
/// and the matrix whose columns are the matching unit eigenvectors.
pub fn jacobi_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let d = m.dim();
    let mut a = *m;
    let mut v = Mat::identity(d);
    let scale = (0..d).map(|i| a.get(i, i).abs()).sum::<f64>().max(a.max_abs());
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal(&a) <= JACOBI_TOL * scale || scale == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    // One polishing sweep: cheap, and it pushes eigenvector accuracy well
    // below the stopping threshold.
    for p in 0..d {
        for q in p + 1..d {
            rotate(&mut a, &mut v, p, q);
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let vals: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vecs = Mat::zeros(d);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..d {
            vecs.set(r, col, v.get(r, src));
        }
    }
    (vals, vecs)
}

fn off_diagonal(a: &Mat) -> f64 {
    let d = a.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut Mat, v: &mut Mat, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let d = a.dim();
    for k in 0..d {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..d {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..d {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Largest eigenvalue of a symmetric matrix.
#[inline]
pub(crate) fn sym_max_eigenvalue(m: &Mat) -> f64 {
    match m.dim() {
        1 => m.get(0, 0),
        2 => {
            let (a, b, c) = (m.get(0, 0), 0.5 * (m.get(0, 1) + m.get(1, 0)), m.get(1, 1));
            0.5 * (a + c) + (0.5 * (a - c)).hypot(b)
        }
        _ => *jacobi_eigen(m).0.last().unwrap(),
    }
}

/// Operator norm without the finiteness check, for inner loops.
#[inline]
pub(crate) fn op_norm_unchecked(m: &Mat) -> f64 {
    if m.dim() == 1 {
        return m.get(0, 0).abs();
    }
    sym_max_eigenvalue(&m.gram()).max(0.0).sqrt()
}

/// Largest singular value of a square matrix.
pub fn op_norm(m: &Mat) -> Result<f64> {
    if !m.is_finite() {
        return Err(domain("operator norm of a matrix with non-finite entries"));
    }
    Ok(op_norm_unchecked(m))
}

/// Symmetric positive semidefinite matrix with its eigendecomposition.
#[derive(Clone)]
pub struct SpdMatrix {
    m: Mat,
    evals: Vec<f64>,
    evecs: Mat,
}

/// Equality of entries; the cached decomposition may differ in the last ulp
/// depending on how the matrix was built.
impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix({:?}, eig={:?})", self.m, self.evals)
    }
}

impl SpdMatrix {
    /// Symmetrizes `m`, diagonalizes it and clamps tiny negative eigenvalues.
    pub fn new(m: Mat) -> Result<SpdMatrix> {
        if !m.is_finite() {
            return Err(construction("matrix has non-finite entries"));
        }
        let m = m.symmetrized();
        let (mut evals, evecs) = jacobi_eigen(&m);
        let top = evals.last().copied().unwrap_or(0.0).max(0.0);
        let mut clamped = false;
        for l in evals.iter_mut() {
            if *l < 0.0 {
                if *l >= -CLAMP_TOL * top {
                    *l = 0.0;
                    clamped = true;
                } else {
                    return Err(construction(format!("matrix is not positive semidefinite (eigenvalue {l:e})")));
                }
            }
        }
        if clamped {
            return Ok(SpdMatrix::from_spectral(evals, evecs));
        }
        Ok(SpdMatrix { m, evals, evecs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SpdMatrix> {
        SpdMatrix::new(Mat::from_rows(rows)?)
    }

    pub fn identity(d: usize) -> SpdMatrix {
        SpdMatrix { m: Mat::identity(d), evals: vec![1.0; d], evecs: Mat::identity(d) }
    }

    pub fn diag(values: &[f64]) -> Result<SpdMatrix> {
        SpdMatrix::new(Mat::diag(values))
    }

    /// `c * I`.
    pub fn scalar(d: usize, c: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(Mat::identity(d).scale(c))
    }

    /// Builds `U diag(evals) U^t`; `evals` need not be sorted.
    pub(crate) fn from_spectral(evals: Vec<f64>, evecs: Mat) -> SpdMatrix {
        let d = evecs.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| evals[i].total_cmp(&evals[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
        let mut u = Mat::zeros(d);
        for (col, &src) in order.iter().enumerate() {
            for r in 0..d {
                u.set(r, col, evecs.get(r, src));
            }
        }
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += u.get(i, k) * sorted[k] * u.get(j, k);
                }
                m.set(i, j, s);
            }
        }
        SpdMatrix { m: m.symmetrized(), evals: sorted, evecs: u }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.evals
    }

    /// Columns are unit eigenvectors matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &Mat {
        &self.evecs
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|r| self.evecs.get(r, i)).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.evals[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.evals.last().unwrap()
    }

    /// Equals the operator norm.
    pub fn norm(&self) -> f64 {
        self.max_eigenvalue()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    /// `M^r` with the same eigenvectors.
    pub fn power(&self, r: f64) -> Result<SpdMatrix> {
        if !r.is_finite() {
            return Err(domain("matrix power with non-finite exponent"));
        }
        if r == 1.0 {
            return Ok(self.clone());
        }
        if r == 0.0 {
            return Ok(SpdMatrix::identity(self.dim()));
        }
        if r < 0.0 && !self.is_positive_definite() {
            return Err(Error::Singular(format!("negative power {r} of a matrix with a zero eigenvalue")));
        }
        let evals = self.evals.iter().map(|l| l.powf(r)).collect();
        Ok(SpdMatrix::from_spectral(evals, self.evecs))
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        self.power(-1.0)
    }

    pub fn scaled(&self, c: f64) -> Result<SpdMatrix> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(domain(format!("scaling an SPD matrix by {c}")));
        }
        let evals = self.evals.iter().map(|l| l * c).collect();
        Ok(SpdMatrix::from_spectral(evals, self.evecs))
    }

    /// `R M R^t` for an orthogonal `R`.
    pub fn conjugated(&self, r: &Mat) -> Result<SpdMatrix> {
        SpdMatrix::new(r.mul(&self.m).mul(&r.transpose()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.m.mul_vec(v)
    }

    pub fn apply_norm(&self, v: &[f64]) -> f64 {
        self.m.apply_norm(v)
    }
}

/// Per-eigenvalue tag of an extended matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenTag {
    Finite,
    Zero,
    Infinite,
}

/// A positive semidefinite matrix whose eigenvalues may be replaced by
/// the symbols `0` and `∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSpdMatrix {
    base: SpdMatrix,
    tags: Vec<EigenTag>,
}

impl ExtendedSpdMatrix {
    pub fn new(base: SpdMatrix, tags: Vec<EigenTag>) -> Result<ExtendedSpdMatrix> {
        if tags.len() != base.dim() {
            return Err(construction(format!("{} eigenvalue tags for a matrix of order {}", tags.len(), base.dim())));
        }
        Ok(ExtendedSpdMatrix { base, tags })
    }

    /// All tags finite, except that exact zero eigenvalues are tagged zero.
    pub fn from_spd(base: SpdMatrix) -> ExtendedSpdMatrix {
        let tags =
            base.eigenvalues().iter().map(|&l| if l == 0.0 { EigenTag::Zero } else { EigenTag::Finite }).collect();
        ExtendedSpdMatrix { base, tags }
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    pub fn tags(&self) -> &[EigenTag] {
        &self.tags
    }

    pub fn is_degenerate(&self) -> bool {
        self.tags.iter().any(|t| *t != EigenTag::Finite)
    }

    /// Eigenvalues with tags applied (zero and `f64::INFINITY`).
    pub fn effective_eigenvalues(&self) -> Vec<f64> {
        self.base
            .eigenvalues()
            .iter()
            .zip(&self.tags)
            .map(|(&l, t)| match t {
                EigenTag::Finite => l,
                EigenTag::Zero => 0.0,
                EigenTag::Infinite => f64::INFINITY,
            })
            .collect()
    }

    /// `|W v|` under the convention `0 * ∞ = 0`.
    pub fn apply_norm(&self, v: &[f64]) -> f64 {
        let d = self.base.dim();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut s = 0.0;
        for i in 0..d {
            let c: f64 = (0..d).map(|r| self.base.eigenvectors().get(r, i) * v[r]).sum();
            match self.tags[i] {
                EigenTag::Zero => {}
                EigenTag::Infinite => {
                    if c.abs() > 1e-12 * vn {
                        return f64::INFINITY;
                    }
                }
                EigenTag::Finite => {
                    let l = self.base.eigenvalues()[i];
                    s += l * l * c * c;
                }
            }
        }
        s.sqrt()
    }
}

/// Both sides of the Cordes inequality `|U^s V^s| <= |U V|^s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CordesGap {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn cordes_gap(u: &SpdMatrix, v: &SpdMatrix, s: f64) -> Result<CordesGap> {
    if !(0.0..=1.0).contains(&s) {
        return Err(domain(format!("Cordes exponent {s} outside [0,1]")));
    }
    let lhs = op_norm(&u.power(s)?.matrix().mul(v.power(s)?.matrix()))?;
    let rhs = op_norm(&u.matrix().mul(v.matrix()))?.powf(s);
    Ok(CordesGap { lhs, rhs, gap: rhs - lhs })
}

/// `(sum_i |M v_i|^r)^{1/r}` for an orthonormal basis and its ratio to `|M|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub lhs: f64,
    pub ratio_to_op_norm: f64,
}

pub fn norm_equiv_check(m: &Mat, basis: &[Vec<f64>], r: f64) -> Result<NormEquivalence> {
    let d = m.dim();
    if !(r > 0.0) {
        return Err(domain(format!("exponent {r} must be positive")));
    }
    if basis.len() != d || basis.iter().any(|b| b.len() != d) {
        return Err(domain("basis must consist of d vectors of length d"));
    }
    for i in 0..d {
        for j in 0..d {
            let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-10 {
                return Err(domain("basis vectors are not orthonormal"));
            }
        }
    }
    let op = op_norm(m)?;
    let lhs = if r.is_infinite() {
        basis.iter().map(|v| m.apply_norm(v)).fold(0.0, f64::max)
    } else {
        basis.iter().map(|v| m.apply_norm(v).powf(r)).sum::<f64>().powf(1.0 / r)
    };
    let ratio_to_op_norm = if op == 0.0 { 1.0 } else { lhs / op };
    Ok(NormEquivalence { lhs, ratio_to_op_norm })
}

/// `|UV|` and `|VU|`, equal for self-adjoint factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommuteNorms {
    pub uv: f64,
    pub vu: f64,
}

pub fn commute_norm_check(u: &SpdMatrix, v: &SpdMatrix) -> CommuteNorms {
    CommuteNorms {
        uv: op_norm_unchecked(&u.matrix().mul(v.matrix())),
        vu: op_norm_unchecked(&v.matrix().mul(u.matrix())),
    }
}

/// Constant in `|AB| <= c(d) |CD|` when `|Av| <= |Cv|` and `|Bv| <= |Dv|`
/// are only known on a direction mesh: each of the two norm comparisons
/// goes through the orthonormal-basis equivalence at `r = 2`, costing `√d`.
pub fn sandwich_constant(d: usize) -> f64 {
    d as f64
}

/// `|A B|_op` with closed forms for orders 1 and 2.
#[inline]
pub(crate) fn prod_op_norm(a: &Mat, b: &Mat) -> f64 {
    match a.dim() {
        1 => (a.a[0] * b.a[0]).abs(),
        2 => {
            let p00 = a.a[0] * b.a[0] + a.a[1] * b.a[2];
            let p01 = a.a[0] * b.a[1] + a.a[1] * b.a[3];
            let p10 = a.a[2] * b.a[0] + a.a[3] * b.a[2];
            let p11 = a.a[2] * b.a[1] + a.a[3] * b.a[3];
            // Largest eigenvalue of P^t P.
            let g00 = p00 * p00 + p10 * p10;
            let g11 = p01 * p01 + p11 * p11;
            let g01 = p00 * p01 + p10 * p11;
            (0.5 * (g00 + g11) + (0.5 * (g00 - g11)).hypot(g01)).max(0.0).sqrt()
        }
        _ => op_norm_unchecked(&a.mul(b)),
    }
}
