//! Inner convex solvers.
//!
//! * [`pdhg_solve`]: diagonally preconditioned primal-dual hybrid gradient
//!   for `min_{u in [lo, hi]} sum_i |K_i u - y◇_i| + mu |u_S|_1
//!   [+ 1/(2 tau) |u - c|^2]`, stopped on a duality gap.
//! * [`qp_solve`]: accelerated projected gradient for convex quadratic
//!   models, stopped on a Frank-Wolfe gap.
//! * [`brute_force_subproblem`]: grid search plus line-search polish and
//!   vertex enumeration; a test oracle for tiny instances.

use std::ops::Range;

use crate::error::check_dim;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::models::{minimize_separable, Regularizer};
use crate::psd::max_eigenvalue;
use crate::sets::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProxTerm {
    pub tau: f64,
    pub center: DenseVector,
}

/// Convex piecewise-linear subproblem over a box.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearSubproblem {
    pub k: DenseMatrix,
    pub y_diamond: DenseVector,
    pub mu: f64,
    /// Coordinates carrying the `mu |.|` penalty.
    pub l1_range: Range<usize>,
    pub lo: DenseVector,
    pub hi: DenseVector,
    pub prox: Option<ProxTerm>,
}

impl PiecewiseLinearSubproblem {
    pub fn new(
        k: DenseMatrix,
        y_diamond: DenseVector,
        mu: f64,
        l1_range: Range<usize>,
        lo: DenseVector,
        hi: DenseVector,
        prox: Option<ProxTerm>,
    ) -> Result<Self> {
        let n = k.ncols();
        check_dim(k.nrows(), y_diamond.len())?;
        check_dim(n, lo.len())?;
        check_dim(n, hi.len())?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be non-negative, got {mu}")));
        }
        if l1_range.end > n {
            return Err(Error::InvalidParameter(format!("l1 range {l1_range:?} exceeds {n}")));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("empty box".into()));
        }
        if let Some(p) = &prox {
            check_dim(n, p.center.len())?;
            if !(p.tau > 0.0) {
                return Err(Error::InvalidParameter(format!("tau must be positive, got {}", p.tau)));
            }
        }
        Ok(Self {
            k,
            y_diamond,
            mu,
            l1_range,
            lo,
            hi,
            prox,
        })
    }

    pub fn dim(&self) -> usize {
        self.k.ncols()
    }

    fn weight(&self, j: usize) -> f64 {
        if self.l1_range.contains(&j) {
            self.mu
        } else {
            0.0
        }
    }

    pub fn objective(&self, u: &DenseVector) -> f64 {
        let r = &self.k * u - &self.y_diamond;
        self.objective_with_residual(u, &r)
    }

    fn objective_with_residual(&self, u: &DenseVector, r: &DenseVector) -> f64 {
        let mut v: f64 = r.iter().map(|x| x.abs()).sum();
        v += self.mu * u.as_slice()[self.l1_range.clone()].iter().map(|x| x.abs()).sum::<f64>();
        if let Some(p) = &self.prox {
            v += (u - &p.center).norm_squared() / (2.0 * p.tau);
        }
        v
    }

    fn project_box(&self, u: &DenseVector) -> DenseVector {
        DenseVector::from_fn(u.len(), |j, _| u[j].max(self.lo[j]).min(self.hi[j]))
    }
}

/// Per-coordinate step sizes with `sigma_i theta_j`-scaled `K` of norm <= 1.
pub fn precond_steps(k: &DenseMatrix, beta: f64) -> (DenseVector, DenseVector) {
    let (m, n) = k.shape();
    let mut row = vec![0.0; m];
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..m {
            let a = k[(i, j)].abs();
            if a > 0.0 {
                row[i] += a.powf(2.0 - beta);
                col[j] += a.powf(beta);
            }
        }
    }
    let inv = |s: f64| if s > 0.0 { 1.0 / s } else { 1.0 };
    (
        DenseVector::from_iterator(m, row.into_iter().map(inv)),
        DenseVector::from_iterator(n, col.into_iter().map(inv)),
    )
}

#[derive(Debug, Clone)]
pub struct PdState {
    pub u: DenseVector,
    pub p: DenseVector,
    pub u_bar: DenseVector,
    pub sigma: DenseVector,
    pub theta: DenseVector,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PdhgSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Gap evaluation period (each evaluation costs two extra products).
    pub check_every: usize,
    pub beta: f64,
}

impl Default for PdhgSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
            check_every: 10,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PdhgResult {
    /// Primal iterate with the smallest certified gap.
    pub u: DenseVector,
    /// Final state, for warm starting the next solve.
    pub state: PdState,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `argmin_{u in [lo, hi]} s u + w |u| [+ 1/(2 tau) (u - c)^2]` and its value.
fn coordinate_dual_min(s: f64, w: f64, lo: f64, hi: f64, prox: Option<(f64, f64)>) -> f64 {
    match prox {
        Some((tau, c)) => {
            let v = c - tau * s;
            let t = tau * w;
            let u = (v.signum() * (v.abs() - t).max(0.0)).max(lo).min(hi);
            s * u + w * u.abs() + (u - c) * (u - c) / (2.0 * tau)
        }
        None => {
            let phi = |u: f64| s * u + w * u.abs();
            let mut best = phi(lo).min(phi(hi));
            if lo < 0.0 && 0.0 < hi {
                best = best.min(0.0);
            }
            best
        }
    }
}

/// Primal objective at `u` minus the dual objective at `dual` (|dual_i| <= 1).
pub fn primal_dual_gap(p: &PiecewiseLinearSubproblem, u: &DenseVector, dual: &DenseVector) -> f64 {
    let r = &p.k * u - &p.y_diamond;
    let kt_p = p.k.tr_mul(dual);
    gap_from_products(p, u, &r, dual, &kt_p)
}

fn gap_from_products(
    p: &PiecewiseLinearSubproblem,
    u: &DenseVector,
    residual: &DenseVector,
    dual: &DenseVector,
    kt_p: &DenseVector,
) -> f64 {
    let primal = p.objective_with_residual(u, residual);
    let mut dual_val = -dual.dot(&p.y_diamond);
    for j in 0..u.len() {
        let prox = p.prox.as_ref().map(|pt| (pt.tau, pt.center[j]));
        dual_val += coordinate_dual_min(kt_p[j], p.weight(j), p.lo[j], p.hi[j], prox);
    }
    primal - dual_val
}

/// Preconditioned PDHG with gap-based stopping.
///
/// A warm state with matching dimensions seeds the primal and dual
/// variables; step sizes are always recomputed from the current `K`.
pub fn pdhg_solve(
    p: &PiecewiseLinearSubproblem,
    warm: Option<&PdState>,
    settings: &PdhgSettings,
) -> Result<PdhgResult> {
    if !(0.0..=2.0).contains(&settings.beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 2], got {}", settings.beta)));
    }
    let (m, n) = p.k.shape();
    let (sigma, theta) = precond_steps(&p.k, settings.beta);
    let (mut u, mut dual) = match warm {
        Some(w) if w.u.len() == n && w.p.len() == m => (p.project_box(&w.u), w.p.map(|v| v.clamp(-1.0, 1.0))),
        _ => {
            let start = match &p.prox {
                Some(pt) => p.project_box(&pt.center),
                None => p.lo.clone(),
            };
            (start, DenseVector::zeros(m))
        }
    };
    let mut u_bar = u.clone();
    let check_every = settings.check_every.max(1);

    let mut best_u = u.clone();
    let mut best_p = dual.clone();
    let mut best_gap = f64::INFINITY;
    let mut iterations = 0;
    // running averages since the last restart
    let mut sum_u = DenseVector::zeros(n);
    let mut sum_p = DenseVector::zeros(m);
    let mut count = 0usize;
    let mut restart_gap = f64::INFINITY;
    let mut since_restart = 0usize;

    let weights: Vec<f64> = (0..n).map(|j| p.weight(j)).collect();
    loop {
        if iterations % check_every == 0 || iterations == settings.max_iterations {
            let gap_cur = primal_dual_gap(p, &u, &dual).max(0.0);
            let (mut cand_u, mut cand_p, mut cand_gap) = (None, None, gap_cur);
            if count > 0 {
                // clamp away rounding drift outside the feasible sets
                let avg_u = p.project_box(&(&sum_u / count as f64));
                let avg_p = (&sum_p / count as f64).map(|v| v.clamp(-1.0, 1.0));
                let gap_avg = primal_dual_gap(p, &avg_u, &avg_p).max(0.0);
                if gap_avg < gap_cur {
                    cand_gap = gap_avg;
                    cand_u = Some(avg_u);
                    cand_p = Some(avg_p);
                }
            }
            if cand_gap < best_gap {
                best_gap = cand_gap;
                best_u.copy_from(cand_u.as_ref().unwrap_or(&u));
                best_p.copy_from(cand_p.as_ref().unwrap_or(&dual));
            }
            if best_gap <= settings.tolerance || iterations >= settings.max_iterations {
                break;
            }
            // restart from the better candidate once the gap has halved,
            // or after a long stretch without restart
            if cand_gap <= 0.5 * restart_gap || since_restart >= (iterations / 3).max(200) {
                if let (Some(cu), Some(cp)) = (cand_u, cand_p) {
                    u = cu;
                    dual = cp;
                }
                u_bar.copy_from(&u);
                sum_u.fill(0.0);
                sum_p.fill(0.0);
                count = 0;
                since_restart = 0;
                restart_gap = cand_gap;
            }
        }
        // dual ascent on the conjugate of the l1 data term
        let k_ubar = &p.k * &u_bar;
        for i in 0..m {
            dual[i] = (dual[i] + sigma[i] * (k_ubar[i] - p.y_diamond[i])).clamp(-1.0, 1.0);
        }
        // primal prox: shift, soft-threshold, clamp
        let kt_p = p.k.tr_mul(&dual);
        let u_old = u.clone();
        for j in 0..n {
            let mut v = u[j] - theta[j] * kt_p[j];
            let mut step = theta[j];
            if let Some(pt) = &p.prox {
                let ratio = theta[j] / pt.tau;
                v = (v + ratio * pt.center[j]) / (1.0 + ratio);
                step = theta[j] / (1.0 + ratio);
            }
            let t = step * weights[j];
            let s = v.signum() * (v.abs() - t).max(0.0);
            u[j] = s.max(p.lo[j]).min(p.hi[j]);
        }
        u_bar = &u * 2.0 - &u_old;
        sum_u += &u;
        sum_p += &dual;
        count += 1;
        since_restart += 1;
        iterations += 1;
    }

    Ok(PdhgResult {
        u: best_u.clone(),
        state: PdState {
            u_bar: best_u.clone(),
            u: best_u,
            p: best_p,
            sigma,
            theta,
            iterations: warm.map_or(0, |w| w.iterations) + iterations,
        },
        gap: best_gap,
        iterations,
        converged: best_gap <= settings.tolerance,
    })
}

/// Brute-force minimizer for `dim <= 4`: grid search with `resolution`
/// points per axis, polished by exact line minimization along coordinate
/// and pairwise diagonal directions. Without a proximal term the problem is
/// a linear program, so every vertex of the hyperplane arrangement is also
/// enumerated.
pub fn brute_force_subproblem(
    p: &PiecewiseLinearSubproblem,
    resolution: usize,
) -> Result<(DenseVector, f64)> {
    let n = p.dim();
    if n > 4 {
        return Err(Error::TooLarge(n));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let res = resolution.max(2);
    let mut best_u = p.lo.clone();
    let mut best = p.objective(&best_u);
    let mut idx = vec![0usize; n];
    loop {
        let u = DenseVector::from_fn(n, |j, _| {
            p.lo[j] + (p.hi[j] - p.lo[j]) * idx[j] as f64 / (res - 1) as f64
        });
        let v = p.objective(&u);
        if v < best {
            best = v;
            best_u = u;
        }
        let mut d = 0;
        while d < n {
            idx[d] += 1;
            if idx[d] < res {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }

    if p.prox.is_none() {
        if let Some((u, v)) = enumerate_vertices(p) {
            if v < best {
                best = v;
                best_u = u;
            }
        }
    }

    let mut dirs: Vec<DenseVector> = Vec::new();
    for i in 0..n {
        dirs.push(DenseVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }));
        for k in i + 1..n {
            for s in [1.0, -1.0] {
                dirs.push(DenseVector::from_fn(n, |j, _| {
                    if j == i {
                        1.0
                    } else if j == k {
                        s
                    } else {
                        0.0
                    }
                }));
            }
        }
    }
    for _ in 0..200 {
        let before = best;
        for d in &dirs {
            let (u, v) = line_minimize(p, &best_u, d);
            if v < best {
                best = v;
                best_u = u;
            }
        }
        if before - best <= 1e-15 * (1.0 + best.abs()) {
            break;
        }
    }
    Ok((best_u, best))
}

fn line_minimize(p: &PiecewiseLinearSubproblem, u: &DenseVector, d: &DenseVector) -> (DenseVector, f64) {
    let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..u.len() {
        if d[j] > 0.0 {
            t_lo = t_lo.max((p.lo[j] - u[j]) / d[j]);
            t_hi = t_hi.min((p.hi[j] - u[j]) / d[j]);
        } else if d[j] < 0.0 {
            t_lo = t_lo.max((p.hi[j] - u[j]) / d[j]);
            t_hi = t_hi.min((p.lo[j] - u[j]) / d[j]);
        }
    }
    let at = |t: f64| p.project_box(&(u + d * t));
    let phi = |t: f64| p.objective(&at(t));
    let (mut a, mut b) = (t_lo.min(0.0), t_hi.max(0.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (phi(c), phi(e));
    for _ in 0..120 {
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = phi(e);
        }
    }
    let t = 0.5 * (a + b);
    let cand = at(t);
    let v = p.objective(&cand);
    let base = p.objective(u);
    if v < base {
        (cand, v)
    } else {
        (u.clone(), base)
    }
}

fn enumerate_vertices(p: &PiecewiseLinearSubproblem) -> Option<(DenseVector, f64)> {
    let n = p.dim();
    let mut rows: Vec<(DenseVector, f64)> = Vec::new();
    for i in 0..p.k.nrows() {
        rows.push((p.k.row(i).transpose(), p.y_diamond[i]));
    }
    for j in 0..n {
        let e = DenseVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 });
        rows.push((e.clone(), p.lo[j]));
        rows.push((e.clone(), p.hi[j]));
        if p.lo[j] < 0.0 && 0.0 < p.hi[j] {
            rows.push((e, 0.0));
        }
    }
    let mut best: Option<(DenseVector, f64)> = None;
    let mut combo: Vec<usize> = (0..n).collect();
    let total = rows.len();
    if total < n {
        return None;
    }
    loop {
        let a = DenseMatrix::from_fn(n, n, |r, c| rows[combo[r]].0[c]);
        let b = DenseVector::from_fn(n, |r, _| rows[combo[r]].1);
        if let Some(u) = a.lu().solve(&b) {
            let feasible = u.iter().enumerate().all(|(j, v)| {
                v.is_finite() && *v >= p.lo[j] - 1e-9 && *v <= p.hi[j] + 1e-9
            });
            if feasible {
                let u = p.project_box(&u);
                let v = p.objective(&u);
                if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                    best = Some((u, v));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] < total - n + i {
                combo[i] += 1;
                for k in i + 1..n {
                    combo[k] = combo[k - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub point: DenseVector,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `<grad, x - a> + 1/2 (x - a)^T H (x - a) + reg(x)` over `set`
/// (`H` PSD) by FISTA with function-value restarts. The returned gap
/// `max_s <∇, x - s> + reg(x) - reg(s)` bounds the suboptimality.
pub fn qp_solve(
    h: &DenseMatrix,
    grad: &DenseVector,
    anchor: &DenseVector,
    reg: &Regularizer,
    set: &ConstraintSet,
    warm: Option<&DenseVector>,
    settings: &QpSettings,
) -> Result<QpResult> {
    let n = anchor.len();
    check_dim(n, grad.len())?;
    check_dim(n, h.nrows())?;
    check_dim(set.dim(), n)?;
    let lip = max_eigenvalue(h)?;
    if lip <= 1e-14 * (1.0 + h.amax()) {
        let point = minimize_separable(set, reg, anchor, &(grad + h * DenseVector::zeros(n)), None)?;
        return Ok(QpResult {
            point,
            gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let zero = DenseVector::zeros(n);
    let q = DenseVector::from_element(n, lip);
    let smooth_grad = |x: &DenseVector| grad + h * (x - anchor);
    let objective = |x: &DenseVector| {
        let d = x - anchor;
        grad.dot(&d) + 0.5 * d.dot(&(h * &d)) + reg.eval(x)
    };
    let fw_gap = |x: &DenseVector| -> Result<f64> {
        let g = smooth_grad(x);
        let s = minimize_separable(set, reg, anchor, &g, None)?;
        Ok((g.dot(&(x - &s)) + reg.eval(x) - reg.eval(&s)).max(0.0))
    };

    let mut x = match warm {
        Some(w) if w.len() == n => set.project(w)?,
        _ => anchor.clone(),
    };
    let mut fx = objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = x.clone();
    let mut best_gap = fw_gap(&x)?;
    let mut iterations = 0;
    while best_gap > settings.tolerance && iterations < settings.max_iterations {
        let g = smooth_grad(&y);
        let x_new = minimize_separable(set, reg, &(&y - g / lip), &zero, Some(&q))?;
        let f_new = objective(&x_new);
        iterations += 1;
        if f_new > fx {
            // restart momentum from the last accepted point
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        t = t_new;
        x = x_new;
        fx = f_new;
        if iterations % 5 == 0 {
            let gap = fw_gap(&x)?;
            if gap < best_gap {
                best_gap = gap;
                best.copy_from(&x);
            }
        }
    }
    Ok(QpResult {
        point: best,
        gap: best_gap,
        iterations,
        converged: best_gap <= settings.tolerance,
    })
}
