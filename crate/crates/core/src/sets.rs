//! Compact convex constraint sets: membership, diameter, linear
//! minimization oracles (LMOs), Euclidean projections and sampling.
//!
//! Matrix-valued variables are stored as flat vectors in column-major order
//! (the `nalgebra` layout), so a `rows x cols` block occupies `rows * cols`
//! consecutive coordinates.

use nalgebra::SVD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::{as_matrix, DenseMatrix, DenseVector};
use crate::{Error, Result};

/// Default relative residual for the nuclear-ball power iteration.
pub const POWER_TOL: f64 = 1e-9;
/// Default iteration cap for the nuclear-ball power iteration.
pub const POWER_MAX_ITERS: usize = 1000;

const RESTART_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    /// `lo <= x <= hi` coordinatewise.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Every column of a `rows x cols` matrix lies in the unit simplex.
    /// `cols == 1` is the plain simplex.
    Simplex { rows: usize, cols: usize },
    L1Ball { dim: usize, radius: f64 },
    /// Euclidean ball, optionally intersected with the mean-zero subspace.
    L2Ball {
        dim: usize,
        radius: f64,
        mean_zero: bool,
    },
    NuclearBall {
        rows: usize,
        cols: usize,
        radius: f64,
    },
    Product(Vec<ConstraintSet>),
}

impl ConstraintSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let s = ConstraintSet::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    /// `[lo, hi]^dim`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        Self::columnwise_simplex(dim, 1)
    }

    pub fn columnwise_simplex(rows: usize, cols: usize) -> Result<Self> {
        let s = ConstraintSet::Simplex { rows, cols };
        s.validate()?;
        Ok(s)
    }

    pub fn l1_ball(dim: usize, radius: f64) -> Result<Self> {
        let s = ConstraintSet::L1Ball { dim, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn l2_ball(dim: usize, radius: f64, mean_zero: bool) -> Result<Self> {
        let s = ConstraintSet::L2Ball {
            dim,
            radius,
            mean_zero,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn nuclear_ball(rows: usize, cols: usize, radius: f64) -> Result<Self> {
        let s = ConstraintSet::NuclearBall { rows, cols, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn product(sets: Vec<ConstraintSet>) -> Result<Self> {
        let s = ConstraintSet::Product(sets);
        s.validate()?;
        Ok(s)
    }

    /// Dictionary atoms: every column of a `rows x cols` matrix has
    /// Euclidean norm at most one, and every column after the first has
    /// zero mean.
    ///
    /// The first column is left unconstrained in its mean so one atom can
    /// carry the offset of the data.
    pub fn dictionary(rows: usize, cols: usize) -> Result<Self> {
        Self::product(
            (0..cols)
                .map(|j| ConstraintSet::L2Ball {
                    dim: rows,
                    radius: 1.0,
                    mean_zero: j >= 1,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            ConstraintSet::Box { lo, hi } => {
                check_dim(lo.len(), hi.len())?;
                if lo.is_empty() {
                    return Err(Error::EmptyInput);
                }
                for (l, h) in lo.iter().zip(hi) {
                    if !(l.is_finite() && h.is_finite() && l <= h) {
                        return bad(format!("box bounds must satisfy lo <= hi, got [{l}, {h}]"));
                    }
                }
                Ok(())
            }
            ConstraintSet::Simplex { rows, cols } => {
                if *rows == 0 || *cols == 0 {
                    return Err(Error::EmptyInput);
                }
                Ok(())
            }
            ConstraintSet::L1Ball { dim, radius }
            | ConstraintSet::L2Ball { dim, radius, .. } => {
                if *dim == 0 {
                    return Err(Error::EmptyInput);
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("ball radius must be positive, got {radius}"));
                }
                Ok(())
            }
            ConstraintSet::NuclearBall { rows, cols, radius } => {
                if *rows == 0 || *cols == 0 {
                    return Err(Error::EmptyInput);
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("ball radius must be positive, got {radius}"));
                }
                Ok(())
            }
            ConstraintSet::Product(sets) => {
                if sets.is_empty() {
                    return Err(Error::EmptyInput);
                }
                sets.iter().try_for_each(|s| s.validate())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::Simplex { rows, cols } => rows * cols,
            ConstraintSet::L1Ball { dim, .. } | ConstraintSet::L2Ball { dim, .. } => *dim,
            ConstraintSet::NuclearBall { rows, cols, .. } => rows * cols,
            ConstraintSet::Product(sets) => sets.iter().map(|s| s.dim()).sum(),
        }
    }

    /// Leaf sets of a (possibly nested) product, with their coordinate offsets.
    pub fn blocks(&self) -> Vec<(usize, &ConstraintSet)> {
        fn walk<'a>(s: &'a ConstraintSet, offset: &mut usize, out: &mut Vec<(usize, &'a ConstraintSet)>) {
            match s {
                ConstraintSet::Product(sets) => sets.iter().for_each(|b| walk(b, offset, out)),
                leaf => {
                    out.push((*offset, leaf));
                    *offset += leaf.dim();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut 0, &mut out);
        out
    }

    /// Upper bound on `sup ||x - y||` over the set.
    pub fn diameter(&self) -> f64 {
        match self {
            ConstraintSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| (h - l) * (h - l))
                .sum::<f64>()
                .sqrt(),
            ConstraintSet::Simplex { cols, .. } => (2.0 * *cols as f64).sqrt(),
            ConstraintSet::L1Ball { radius, .. }
            | ConstraintSet::L2Ball { radius, .. }
            | ConstraintSet::NuclearBall { radius, .. } => 2.0 * radius,
            ConstraintSet::Product(sets) => sets
                .iter()
                .map(|s| s.diameter().powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn contains(&self, x: &DenseVector, tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.contains_slice(x.as_slice(), tol)
    }

    fn contains_slice(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            ConstraintSet::Simplex { rows, .. } => x.chunks(*rows).all(|col| {
                col.iter().all(|v| *v >= -tol)
                    && (col.iter().sum::<f64>() - 1.0).abs() <= tol * (*rows as f64).max(1.0)
            }),
            ConstraintSet::L1Ball { radius, .. } => {
                x.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol
            }
            ConstraintSet::L2Ball {
                radius, mean_zero, ..
            } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                norm <= radius + tol && (!mean_zero || mean.abs() <= tol)
            }
            ConstraintSet::NuclearBall { rows, cols, radius } => {
                nuclear_norm(&as_matrix(x, *rows, *cols)) <= radius + tol * radius.max(1.0)
            }
            ConstraintSet::Product(sets) => {
                let mut offset = 0;
                sets.iter().all(|s| {
                    let d = s.dim();
                    let ok = s.contains_slice(&x[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
        }
    }

    /// `argmin_{x in C} <c, x>` with deterministic tie-breaking.
    pub fn lmo(&self, c: &DenseVector) -> Result<DenseVector> {
        check_dim(self.dim(), c.len())?;
        match self {
            ConstraintSet::Box { lo, hi } => lmo_box(
                c,
                &DenseVector::from_column_slice(lo),
                &DenseVector::from_column_slice(hi),
            ),
            ConstraintSet::Simplex { rows, cols } => {
                let mut out = DenseVector::zeros(c.len());
                for j in 0..*cols {
                    let col = c.rows(j * rows, *rows).into_owned();
                    out.rows_mut(j * rows, *rows).copy_from(&lmo_simplex(&col)?);
                }
                Ok(out)
            }
            ConstraintSet::L1Ball { radius, .. } => lmo_l1_ball(c, *radius),
            ConstraintSet::L2Ball {
                radius, mean_zero, ..
            } => lmo_l2_ball(c, *radius, *mean_zero),
            ConstraintSet::NuclearBall { rows, cols, radius } => {
                let g = as_matrix(c.as_slice(), *rows, *cols);
                if g.iter().all(|v| *v == 0.0) {
                    // Any point of the ball is optimal for a zero cost.
                    return Ok(DenseVector::zeros(c.len()));
                }
                let x = lmo_nuclear_ball(&g, *radius, POWER_TOL, POWER_MAX_ITERS)?;
                Ok(DenseVector::from_column_slice(x.as_slice()))
            }
            ConstraintSet::Product(sets) => lmo_product(sets, c),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &DenseVector) -> Result<DenseVector> {
        check_dim(self.dim(), x.len())?;
        match self {
            ConstraintSet::Box { lo, hi } => project_box(
                x,
                &DenseVector::from_column_slice(lo),
                &DenseVector::from_column_slice(hi),
            ),
            ConstraintSet::Simplex { rows, cols } => {
                let mut out = DenseVector::zeros(x.len());
                for j in 0..*cols {
                    let col = x.rows(j * rows, *rows).into_owned();
                    out.rows_mut(j * rows, *rows).copy_from(&project_simplex(&col)?);
                }
                Ok(out)
            }
            ConstraintSet::L1Ball { radius, .. } => project_l1_ball(x, *radius),
            ConstraintSet::L2Ball {
                radius, mean_zero, ..
            } => Ok(project_l2_ball(x, *radius, *mean_zero)),
            ConstraintSet::NuclearBall { rows, cols, radius } => {
                let m = project_nuclear_ball(&as_matrix(x.as_slice(), *rows, *cols), *radius)?;
                Ok(DenseVector::from_column_slice(m.as_slice()))
            }
            ConstraintSet::Product(sets) => {
                let mut out = DenseVector::zeros(x.len());
                let mut offset = 0;
                for s in sets {
                    let d = s.dim();
                    let block = x.rows(offset, d).into_owned();
                    out.rows_mut(offset, d).copy_from(&s.project(&block)?);
                    offset += d;
                }
                Ok(out)
            }
        }
    }

    /// A fixed feasible point: the box midpoint, the simplex barycenter,
    /// the center of a ball.
    pub fn center(&self) -> DenseVector {
        match self {
            ConstraintSet::Box { lo, hi } => {
                DenseVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)))
            }
            ConstraintSet::Simplex { rows, cols } => {
                DenseVector::from_element(rows * cols, 1.0 / *rows as f64)
            }
            ConstraintSet::L1Ball { dim, .. } | ConstraintSet::L2Ball { dim, .. } => {
                DenseVector::zeros(*dim)
            }
            ConstraintSet::NuclearBall { rows, cols, .. } => DenseVector::zeros(rows * cols),
            ConstraintSet::Product(sets) => {
                let parts: Vec<f64> = sets.iter().flat_map(|s| s.center().iter().copied().collect::<Vec<_>>()).collect();
                DenseVector::from_vec(parts)
            }
        }
    }

    /// Draws a random point of the set. Not uniform for every variant, but
    /// the support is the whole set.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DenseVector {
        match self {
            ConstraintSet::Box { lo, hi } => DenseVector::from_iterator(
                lo.len(),
                lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()),
            ),
            ConstraintSet::Simplex { rows, cols } => {
                let mut out = Vec::with_capacity(rows * cols);
                for _ in 0..*cols {
                    let e: Vec<f64> = (0..*rows).map(|_| Exp1.sample(rng)).collect();
                    let s: f64 = e.iter().sum();
                    out.extend(e.iter().map(|v| v / s));
                }
                DenseVector::from_vec(out)
            }
            ConstraintSet::L1Ball { dim, radius } => {
                // Uniform on the simplex with a slack coordinate, then random signs.
                let e: Vec<f64> = (0..=*dim).map(|_| Exp1.sample(rng)).collect();
                let s: f64 = e.iter().sum();
                DenseVector::from_iterator(
                    *dim,
                    e[..*dim].iter().map(|v| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        sign * radius * v / s
                    }),
                )
            }
            ConstraintSet::L2Ball {
                dim,
                radius,
                mean_zero,
            } => {
                let mut g = DenseVector::from_iterator(*dim, (0..*dim).map(|_| StandardNormal.sample(rng)));
                let mut eff_dim = *dim as f64;
                if *mean_zero {
                    let mean = g.mean();
                    g.add_scalar_mut(-mean);
                    eff_dim = (*dim as f64 - 1.0).max(1.0);
                }
                let n = g.norm();
                if n == 0.0 {
                    return DenseVector::zeros(*dim);
                }
                let scale = radius * rng.random::<f64>().powf(1.0 / eff_dim);
                g * (scale / n)
            }
            ConstraintSet::NuclearBall { rows, cols, radius } => {
                let g = DenseMatrix::from_fn(*rows, *cols, |_, _| StandardNormal.sample(rng));
                let n = nuclear_norm(&g);
                let scale = radius * rng.random::<f64>() / n;
                DenseVector::from_column_slice((g * scale).as_slice())
            }
            ConstraintSet::Product(sets) => {
                let parts: Vec<f64> = sets
                    .iter()
                    .flat_map(|s| s.sample(rng).iter().copied().collect::<Vec<_>>())
                    .collect();
                DenseVector::from_vec(parts)
            }
        }
    }

    /// Splits the set into `C1 x C2` with `dim(C1) == at`, when the boundary
    /// falls between product blocks or inside a box.
    pub fn split_at(&self, at: usize) -> Option<(ConstraintSet, ConstraintSet)> {
        if at == 0 || at >= self.dim() {
            return None;
        }
        match self {
            ConstraintSet::Box { lo, hi } => Some((
                ConstraintSet::Box {
                    lo: lo[..at].to_vec(),
                    hi: hi[..at].to_vec(),
                },
                ConstraintSet::Box {
                    lo: lo[at..].to_vec(),
                    hi: hi[at..].to_vec(),
                },
            )),
            ConstraintSet::Product(sets) => {
                let mut offset = 0;
                for (i, s) in sets.iter().enumerate() {
                    let d = s.dim();
                    if offset == at {
                        return Some((collapse(sets[..i].to_vec()), collapse(sets[i..].to_vec())));
                    }
                    if at < offset + d {
                        let (a, b) = s.split_at(at - offset)?;
                        let mut left = sets[..i].to_vec();
                        left.push(a);
                        let mut right = vec![b];
                        right.extend_from_slice(&sets[i + 1..]);
                        return Some((collapse(left), collapse(right)));
                    }
                    offset += d;
                }
                None
            }
            _ => None,
        }
    }
}

fn collapse(mut sets: Vec<ConstraintSet>) -> ConstraintSet {
    if sets.len() == 1 {
        sets.pop().unwrap()
    } else {
        ConstraintSet::Product(sets)
    }
}

/// Vertex of the box minimizing `<c, x>`; zero cost coordinates go to `lo`.
pub fn lmo_box(c: &DenseVector, lo: &DenseVector, hi: &DenseVector) -> Result<DenseVector> {
    check_dim(c.len(), lo.len())?;
    check_dim(c.len(), hi.len())?;
    Ok(DenseVector::from_iterator(
        c.len(),
        c.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(ci, (l, h))| if *ci < 0.0 { *h } else { *l }),
    ))
}

/// Unit vector at the smallest cost entry (lowest index on ties).
pub fn lmo_simplex(c: &DenseVector) -> Result<DenseVector> {
    if c.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if *v < c[best] {
            best = i;
        }
    }
    let mut out = DenseVector::zeros(c.len());
    out[best] = 1.0;
    Ok(out)
}

/// Signed vertex `-r sign(c_i) e_i` at the largest `|c_i|`; the origin for
/// a zero cost.
pub fn lmo_l1_ball(c: &DenseVector, radius: f64) -> Result<DenseVector> {
    if c.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = DenseVector::zeros(c.len());
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if v.abs() > c[best].abs() {
            best = i;
        }
    }
    if c[best] != 0.0 {
        out[best] = -radius * c[best].signum();
    }
    Ok(out)
}

pub fn lmo_l2_ball(c: &DenseVector, radius: f64, mean_zero: bool) -> Result<DenseVector> {
    if c.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ct = c.clone();
    if mean_zero {
        let mean = ct.mean();
        ct.add_scalar_mut(-mean);
    }
    let n = ct.norm();
    if n <= 1e-14 * c.norm() || n == 0.0 {
        return Ok(DenseVector::zeros(c.len()));
    }
    Ok(ct * (-radius / n))
}

/// Dominant singular triple `(u, sigma, v)` of `g` by power iteration on
/// `g^T g`, started from the normalized all-ones vector.
pub fn top_singular_pair(
    g: &DenseMatrix,
    tol: f64,
    max_iters: usize,
) -> Result<(DenseVector, f64, DenseVector)> {
    if g.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scale = g.amax();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate("power iteration needs a nonzero finite matrix"));
    }
    let n = g.ncols();
    let mut v = DenseVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let mut residual = f64::INFINITY;
    let mut restarts = 0;
    for _ in 0..max_iters {
        let w = g.tr_mul(&(g * &v));
        let lambda = v.dot(&w);
        if lambda <= f64::EPSILON * scale * scale {
            // Start vector (nearly) in the null space; restart at random.
            if restarts >= 8 {
                break;
            }
            restarts += 1;
            v = DenseVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            v.normalize_mut();
            continue;
        }
        residual = (&w - &v * lambda).norm() / lambda;
        v = &w / w.norm();
        if residual <= tol {
            let gv = g * &v;
            let sigma = gv.norm();
            return Ok((gv / sigma, sigma, v));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

/// Rank-one minimizer `-r u1 v1^T` of `<G, X>` over the nuclear-norm ball.
pub fn lmo_nuclear_ball(
    g: &DenseMatrix,
    radius: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DenseMatrix> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let (u, _, v) = top_singular_pair(g, tol, max_iters)?;
    Ok(u * v.transpose() * (-radius))
}

/// Blockwise LMO over a product; the cost vector is split by block dimension.
pub fn lmo_product(sets: &[ConstraintSet], c: &DenseVector) -> Result<DenseVector> {
    let total: usize = sets.iter().map(|s| s.dim()).sum();
    check_dim(total, c.len())?;
    let mut out = DenseVector::zeros(c.len());
    let mut offset = 0;
    for s in sets {
        let d = s.dim();
        let block = c.rows(offset, d).into_owned();
        out.rows_mut(offset, d).copy_from(&s.lmo(&block)?);
        offset += d;
    }
    Ok(out)
}

pub fn project_box(x: &DenseVector, lo: &DenseVector, hi: &DenseVector) -> Result<DenseVector> {
    check_dim(x.len(), lo.len())?;
    check_dim(x.len(), hi.len())?;
    Ok(DenseVector::from_iterator(
        x.len(),
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(v, (l, h))| v.max(*l).min(*h)),
    ))
}

/// Projection onto the unit simplex by sorting and thresholding.
pub fn project_simplex(x: &DenseVector) -> Result<DenseVector> {
    project_simplex_radius(x, 1.0)
}

fn project_simplex_radius(x: &DenseVector, radius: f64) -> Result<DenseVector> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - radius) / (i + 1) as f64;
        if *v - t > 0.0 {
            threshold = t;
        }
    }
    Ok(x.map(|v| (v - threshold).max(0.0)))
}

pub fn project_l1_ball(x: &DenseVector, radius: f64) -> Result<DenseVector> {
    if x.iter().map(|v| v.abs()).sum::<f64>() <= radius {
        return Ok(x.clone());
    }
    let mag = project_simplex_radius(&x.abs(), radius)?;
    Ok(DenseVector::from_iterator(
        x.len(),
        x.iter().zip(mag.iter()).map(|(v, m)| v.signum() * m),
    ))
}

pub fn project_l2_ball(x: &DenseVector, radius: f64, mean_zero: bool) -> DenseVector {
    let mut y = x.clone();
    if mean_zero {
        let mean = y.mean();
        y.add_scalar_mut(-mean);
    }
    let n = y.norm();
    if n > radius {
        y *= radius / n;
    }
    y
}

pub fn nuclear_norm(m: &DenseMatrix) -> f64 {
    SVD::new(m.clone(), false, false).singular_values.sum()
}

/// Projects the singular values onto `{s >= 0, sum s <= r}`.
pub fn project_nuclear_ball(m: &DenseMatrix, radius: f64) -> Result<DenseMatrix> {
    let svd = SVD::new(m.clone(), true, true);
    let s = &svd.singular_values;
    if s.sum() <= radius {
        return Ok(m.clone());
    }
    let s_proj = project_simplex_radius(s, radius)?;
    let u = svd.u.as_ref().ok_or(Error::EigenFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenFailure)?;
    Ok(u * DenseMatrix::from_diagonal(&s_proj) * v_t)
}
