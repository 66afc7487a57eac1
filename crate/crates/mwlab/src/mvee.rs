//! Minimum-volume enclosing ellipsoid of a centrally symmetric point set.
//!
//! Khachiyan's barycentric coordinate ascent with Wolfe-Atwood away steps.
//! For points `±z_k` the centered problem maximizes `log det M(u)` with
//! `M(u) = Σ u_k z_k z_k^t` over the simplex; the optimal ellipsoid is
//! `{x : x^t M^{-1} x <= d}`.
//!
//! Coordinate ascent slows to a crawl on dense samples of smooth curves, so
//! it only runs to `WARM_TOL`; a log-barrier Newton method on the entries of
//! `Q` then finishes, and the barrier multipliers give the dual certificate.

use crate::error::{construction, Result};
use crate::spd::{jacobi_eigen, Mat, SpdMatrix};

pub const DEFAULT_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 200_000;
/// Accuracy of the coordinate-ascent phase.
const WARM_TOL: f64 = 1e-2;

/// Result of the fit: the ellipsoid is `{x : x^t Q x <= 1}`.
#[derive(Clone, Debug)]
pub struct Mvee {
    pub q: SpdMatrix,
    pub iterations: usize,
    /// Duality measure `max_k z_k^t M(u)^{-1} z_k / d - 1` of the
    /// certificate `u`; the points lie in `Q`'s ellipsoid.
    pub residual: f64,
}

fn sym_inverse(m: &Mat) -> Option<Mat> {
    let (vals, vecs) = jacobi_eigen(m);
    if vals[0] <= 1e-300 || vals[0] <= 1e-14 * vals[vals.len() - 1] {
        return None;
    }
    let d = m.dim();
    let mut out = Mat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += vecs.get(i, k) * vecs.get(j, k) / vals[k];
            }
            out.set(i, j, s);
        }
    }
    Some(out)
}

fn quad(m: &Mat, z: &[f64]) -> f64 {
    let d = m.dim();
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += m.get(i, j) * z[j];
        }
        s += z[i] * r;
    }
    s
}

/// MVEE of `{±z_k}`; `points` is row-major with `d` entries per point.
pub fn symmetric_mvee(d: usize, points: &[f64], tol: f64) -> Result<Mvee> {
    let warm = khachiyan(d, points, tol.max(WARM_TOL))?;
    if tol >= WARM_TOL || warm.residual <= tol {
        return Ok(warm);
    }
    polish(d, points, &warm, tol)
}

fn khachiyan(d: usize, points: &[f64], tol: f64) -> Result<Mvee> {
    let n = points.len() / d;
    if n == 0 {
        return Err(construction("MVEE of an empty point set"));
    }
    let z = |k: usize| &points[k * d..(k + 1) * d];
    let mut u = vec![1.0 / n as f64; n];
    let build = |u: &[f64]| {
        let mut m = Mat::zeros(d);
        for (k, &w) in u.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let zk = z(k);
            for i in 0..d {
                for j in 0..d {
                    m.set(i, j, m.get(i, j) + w * zk[i] * zk[j]);
                }
            }
        }
        m
    };
    let df = d as f64;
    let mut m = build(&u);
    let mut iterations = 0;
    let mut g = vec![0.0; n];
    loop {
        let minv = sym_inverse(&m).ok_or_else(|| construction("MVEE points do not span the space"))?;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = quad(&minv, z(k));
        }
        let (jp, gp) =
            g.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, (k, x)| if x > a.1 { (k, x) } else { a });
        let (jm, gm) = g
            .iter()
            .copied()
            .enumerate()
            .filter(|(k, _)| u[*k] > 0.0)
            .fold((0, f64::INFINITY), |a, (k, x)| if x < a.1 { (k, x) } else { a });
        let eps_plus = gp / df - 1.0;
        let eps_minus = 1.0 - gm / df;
        if (eps_plus <= tol && eps_minus <= tol) || iterations >= MAX_ITERS {
            let q = SpdMatrix::new(minv.scale(1.0 / df))?;
            return Ok(Mvee { q, iterations, residual: eps_plus });
        }
        iterations += 1;
        if eps_plus >= eps_minus {
            let beta = (gp / df - 1.0) / (gp - 1.0);
            u.iter_mut().for_each(|x| *x *= 1.0 - beta);
            u[jp] += beta;
        } else {
            let cap = u[jm] / (1.0 - u[jm]);
            let beta = if gm > 1.0 { ((1.0 - gm / df) / (gm - 1.0)).min(cap) } else { cap };
            u.iter_mut().for_each(|x| *x *= 1.0 + beta);
            u[jm] -= beta;
            if u[jm] < 1e-15 {
                u[jm] = 0.0;
            }
        }
        // Rebuilding from the weights avoids drift from repeated rank-one updates.
        m = build(&u);
    }
}

/// Lower Cholesky factor, `None` unless `m` is positive definite.
fn cholesky(m: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= l[i * k + p] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= l[p * k + i] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    y
}

/// Khachiyan certificate of the dual weights `u` (any nonnegative scaling):
/// the ellipsoid of `M(u)` grown to cover every point, with its `ε`.
fn certificate(d: usize, points: &[f64], u: &[(usize, f64)], iterations: usize) -> Option<Mvee> {
    let total: f64 = u.iter().map(|x| x.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut mu = Mat::zeros(d);
    for &(k, w) in u {
        let z = &points[k * d..(k + 1) * d];
        for i in 0..d {
            for j in 0..d {
                mu.set(i, j, mu.get(i, j) + w / total * z[i] * z[j]);
            }
        }
    }
    let minv = sym_inverse(&mu)?;
    let n = points.len() / d;
    let gmax = (0..n).map(|k| quad(&minv, &points[k * d..(k + 1) * d])).fold(0.0, f64::max);
    let q = SpdMatrix::new(minv.scale(1.0 / gmax)).ok()?;
    Some(Mvee { q, iterations, residual: gmax / d as f64 - 1.0 })
}

/// The problem in the upper-triangle coordinates `x` of `Q`: the
/// constraint of point `k` is `c_k · x <= 1`.
struct Coords {
    d: usize,
    idx: Vec<(usize, usize)>,
    c: Vec<Vec<f64>>,
}

impl Coords {
    fn new(d: usize, points: &[f64]) -> Coords {
        let idx: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let c = points
            .chunks(d)
            .map(|z| idx.iter().map(|&(i, j)| if i == j { z[i] * z[i] } else { 2.0 * z[i] * z[j] }).collect())
            .collect();
        Coords { d, idx, c }
    }

    fn m(&self) -> usize {
        self.idx.len()
    }

    /// Points `z` and `-z` (and repeats) give the same constraint.
    fn same(&self, a: usize, b: usize) -> bool {
        let (ca, cb) = (&self.c[a], &self.c[b]);
        let scale = ca.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        ca.iter().zip(cb).all(|(x, y)| (x - y).abs() <= 1e-12 * scale)
    }

    fn slack(&self, k: usize, x: &[f64]) -> f64 {
        1.0 - self.c[k].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    fn q(&self, x: &[f64]) -> Mat {
        let mut q = Mat::zeros(self.d);
        for (&(i, j), &v) in self.idx.iter().zip(x) {
            q.set(i, j, v);
            q.set(j, i, v);
        }
        q
    }

    fn logdet(&self, x: &[f64]) -> Option<f64> {
        let d = self.d;
        let l = cholesky(self.q(x).entries(), d)?;
        Some((0..d).map(|i| 2.0 * l[i * d + i].ln()).sum())
    }

    /// Gradient and Hessian of `-log det Q`.
    fn logdet_derivatives(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = sym_inverse(&self.q(x))?;
        let m = self.m();
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        let unit = |i: usize, j: usize| -> Vec<(usize, usize)> {
            if i == j {
                vec![(i, i)]
            } else {
                vec![(i, j), (j, i)]
            }
        };
        for (a, &(i, j)) in self.idx.iter().enumerate() {
            grad[a] = -if i == j { p.get(i, i) } else { 2.0 * p.get(i, j) };
            let ea = unit(i, j);
            for (b, &(k, l)) in self.idx.iter().enumerate() {
                // tr(P E_a P E_b) for the symmetric unit matrices E.
                let mut h = 0.0;
                for &(r1, c1) in &ea {
                    for &(r2, c2) in &unit(k, l) {
                        h += p.get(c1, r2) * p.get(c2, r1);
                    }
                }
                hess[a * m + b] = h;
            }
        }
        Some((grad, hess))
    }

    /// `-t log det Q - Σ log s_k`, or `None` outside the domain.
    fn barrier(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut f = -t * self.logdet(x)?;
        for k in 0..self.c.len() {
            let s = self.slack(k, x);
            if !(s > 0.0) {
                return None;
            }
            f -= s.ln();
        }
        Some(f)
    }
}

/// Dense solve with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
        if a[piv * k + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            b.swap(piv, col);
        }
        for i in col + 1..k {
            let f = a[i * k + col] / a[col * k + col];
            for j in col..k {
                a[i * k + j] -= f * a[col * k + j];
            }
            b[i] -= f * b[col];
        }
    }
    for i in (0..k).rev() {
        for j in i + 1..k {
            b[i] -= a[i * k + j] * b[j];
        }
        b[i] /= a[i * k + i];
    }
    Some(b)
}

/// Path following for `min -log det Q` subject to `c_k · x <= 1`, from the
/// shrunken warm ellipsoid, until the multipliers `1 / (t s_k)` certify
/// `target` or round-off stops the centering. Returns the last iterate and
/// its multipliers with the best certificate seen.
fn barrier_path(p: &Coords, points: &[f64], warm: &Mvee, target: f64) -> Result<(Vec<f64>, Vec<f64>, Option<Mvee>)> {
    let (d, m, n) = (p.d, p.m(), p.c.len());
    let shrink = 1.0 / ((1.0 + warm.residual.max(0.0)) * 1.01);
    let mut x: Vec<f64> = p.idx.iter().map(|&(i, j)| warm.q.matrix().get(i, j) * shrink).collect();
    let mut t = n as f64 / (d as f64 * WARM_TOL);
    let mut steps = 0;
    let mut best: Option<Mvee> = None;
    let mut lambda = vec![0.0; n];
    loop {
        for _ in 0..100 {
            let (mut grad, mut hess) =
                p.logdet_derivatives(&x).ok_or_else(|| construction("barrier iterate left the cone"))?;
            grad.iter_mut().for_each(|g| *g *= t);
            hess.iter_mut().for_each(|h| *h *= t);
            for (k, ck) in p.c.iter().enumerate() {
                let s = p.slack(k, &x);
                for a in 0..m {
                    grad[a] += ck[a] / s;
                    for b in 0..m {
                        hess[a * m + b] += ck[a] * ck[b] / (s * s);
                    }
                }
            }
            let Some(l) = cholesky(&hess, m) else { break };
            let step: Vec<f64> = cholesky_solve(&l, m, &grad).into_iter().map(|v| -v).collect();
            let dec: f64 = -grad.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
            steps += 1;
            if dec < 1e-8 {
                break;
            }
            let f0 = p.barrier(&x, t).ok_or_else(|| construction("barrier iterate infeasible"))?;
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
                if p.barrier(&trial, t).is_some_and(|f| f <= f0 - 0.25 * alpha * dec) {
                    moved = trial != x;
                    x = trial;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        lambda = (0..n).map(|k| 1.0 / (t * p.slack(k, &x))).collect();
        let u: Vec<(usize, f64)> = lambda.iter().copied().enumerate().collect();
        if let Some(c) = certificate(d, points, &u, warm.iterations + steps) {
            if best.as_ref().is_none_or(|b| c.residual < b.residual) {
                best = Some(c);
            }
        }
        if best.as_ref().is_some_and(|b| b.residual <= target) || n as f64 / t < 1e-9 {
            return Ok((x, lambda, best));
        }
        t *= 8.0;
    }
}

/// Newton on `min -log det Q` with the constraints of `set` held as
/// equalities; returns the iterate and the multipliers of `set`.
fn equality_newton(p: &Coords, set: &[usize], x0: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = p.m();
    let k = m + set.len();
    let mut x = x0.to_vec();
    for _ in 0..50 {
        let (grad, hess) = p.logdet_derivatives(&x)?;
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for i in 0..m {
            for j in 0..m {
                a[i * k + j] = hess[i * m + j];
            }
            b[i] = -grad[i];
        }
        for (r, &s) in set.iter().enumerate() {
            for j in 0..m {
                a[(m + r) * k + j] = p.c[s][j];
                a[j * k + m + r] = p.c[s][j];
            }
            b[m + r] = p.slack(s, &x);
        }
        let sol = solve(a, b, k)?;
        let (dx, nu) = sol.split_at(m);
        let mut alpha = 1.0;
        while p.logdet(&x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect::<Vec<_>>()).is_none() {
            alpha *= 0.5;
            if alpha < 1e-12 {
                return None;
            }
        }
        let size = dx.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let norm = x.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        x.iter_mut().zip(dx).for_each(|(a, b)| *a += alpha * b);
        if alpha == 1.0 && size <= 1e-15 * norm {
            return Some((x, nu.to_vec()));
        }
    }
    None
}

/// Active-set finish: the constraints carrying the largest barrier
/// multipliers are held as equalities, then points are added while some
/// constraint is violated and dropped while a multiplier is negative.
fn active_set(p: &Coords, points: &[f64], x0: &[f64], lambda: &[f64], iterations: usize) -> Option<Mvee> {
    let m = p.m();
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let top = lambda[order[0]];
    let mut set: Vec<usize> = Vec::new();
    for &k in order.iter().take_while(|&&k| lambda[k] >= 1e-3 * top) {
        if set.len() < m && !set.iter().any(|&j| p.same(j, k)) {
            set.push(k);
        }
    }
    let mut x = x0.to_vec();
    for _ in 0..8 * m {
        let (xn, nu) = equality_newton(p, &set, &x)?;
        x = xn;
        let (neg, min_nu) =
            nu.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
        if min_nu < 0.0 {
            set.remove(neg);
            continue;
        }
        let (worst, viol) =
            (0..p.c.len())
                .map(|k| (k, -p.slack(k, &x)))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if viol <= 1e-14 || set.iter().any(|&k| p.same(k, worst)) {
            let u: Vec<(usize, f64)> = set.iter().copied().zip(nu).collect();
            return certificate(p.d, points, &u, iterations);
        }
        if set.len() == m {
            set.remove(neg);
        }
        set.push(worst);
    }
    None
}

/// Barrier path to a moderate accuracy, then the active-set finish; keeps
/// whichever certificate is better.
fn polish(d: usize, points: &[f64], warm: &Mvee, tol: f64) -> Result<Mvee> {
    let p = Coords::new(d, points);
    let (x, lambda, mut best) = barrier_path(&p, points, warm, tol.max(1e-5))?;
    if best.as_ref().is_none_or(|b| b.residual > tol) {
        let iterations = best.as_ref().map_or(warm.iterations, |b| b.iterations);
        if let Some(c) = active_set(&p, points, &x, &lambda, iterations) {
            if best.as_ref().is_none_or(|b| c.residual < b.residual) {
                best = Some(c);
            }
        }
    }
    Ok(best.unwrap_or_else(|| warm.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_points_give_the_unit_disc() {
        let mesh = crate::mesh::DirectionMesh::circle(64);
        let pts: Vec<f64> = mesh.iter().flatten().copied().collect();
        let fit = symmetric_mvee(2, &pts, 1e-9).unwrap();
        let q = fit.q.matrix();
        assert!((q.get(0, 0) - 1.0).abs() < 1e-6);
        assert!((q.get(1, 1) - 1.0).abs() < 1e-6);
        assert!(q.get(0, 1).abs() < 1e-6);
    }

    #[test]
    fn cross_polytope_vertices() {
        // {±e_i} has MVEE the unit ball.
        let pts = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let fit = symmetric_mvee(3, &pts, 1e-10).unwrap();
        for i in 0..3 {
            assert!((fit.q.matrix().get(i, i) - 1.0).abs() < 1e-8);
        }
    }

    /// Points on the ellipse `x^t A x = 1` have that ellipse as their MVEE;
    /// every point is active, the hardest case for the active-set finish.
    #[test]
    fn ellipse_points_recover_the_ellipse() {
        let a = SpdMatrix::new(Mat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap()).unwrap();
        let mesh = crate::mesh::DirectionMesh::circle(720);
        let pts: Vec<f64> = mesh
            .iter()
            .flat_map(|v| {
                let r = quad(a.matrix(), v).sqrt();
                v.iter().map(move |x| x / r)
            })
            .collect();
        let fit = symmetric_mvee(2, &pts, 1e-9).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((fit.q.matrix().get(i, j) - a.matrix().get(i, j)).abs() < 1e-7, "{:?}", fit.q);
            }
        }
    }

    #[test]
    fn dense_smooth_sets_converge_quickly() {
        // Unit sphere of an l^3 average of three ellipsoid norms in d = 3.
        let ws: Vec<Mat> = [[2.0, 1.0, 0.5], [0.7, 1.5, 1.0], [1.0, 0.4, 2.5]].iter().map(|d| Mat::diag(d)).collect();
        let mesh = crate::mesh::DirectionMesh::default_for(3);
        let pts: Vec<f64> = mesh
            .iter()
            .flat_map(|v| {
                let rho = (ws.iter().map(|w| w.apply_norm(v).powi(3)).sum::<f64>() / 3.0).cbrt();
                v.iter().map(move |x| x / rho)
            })
            .collect();
        let fit = symmetric_mvee(3, &pts, 1e-9).unwrap();
        assert!(fit.residual <= 1e-9, "{}", fit.residual);
        for z in pts.chunks(3) {
            assert!(quad(fit.q.matrix(), z) <= 1.0 + 1e-12);
        }
        // John: the shrunken ellipsoid lies inside the hull, so every
        // mesh direction sees support at least |A^{-1} v| / sqrt(d).
        let qinv = fit.q.inverse().unwrap();
        for v in mesh.iter() {
            let support =
                pts.chunks(3).map(|z| z.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs()).fold(0.0, f64::max);
            let ell = quad(qinv.matrix(), v).sqrt();
            assert!(support >= ell / 3f64.sqrt() * (1.0 - 1e-3), "{support} vs {ell}");
        }
    }
}
