//! Convex model functions anchored at the current iterate.
//!
//! A [`ModelOracle`] owns the problem data and produces, for every anchor
//! `x̄`, a [`ModelInstance`] `m` with `m(x̄) = f(x̄)`, `m` convex and
//! `|f(x) - m(x)| <= omega(|x - x̄|)` on the constraint set. The instance
//! also knows how to (approximately) minimize itself over a set.
//!
//! Every family is represented by one of two internal shapes:
//!
//! * composite: `c + <grad, x - x̄> + g(x) + 1/2 (x - x̄)^T Q (x - x̄)` with
//!   `Q` zero, diagonal or a dense PSD matrix. This covers the linear,
//!   additive composite, hybrid, Newton and least-squares Gauss-Newton models.
//! * piecewise linear: `sum_i |r̄_i + (K (x - x̄))_i| + mu |x_S|_1`, the
//!   Gauss-Newton model of an l1 data term, minimized by the primal-dual
//!   solver in [`crate::inner`].

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::check_dim;
use crate::growth::GrowthFunction;
use crate::inner::{self, PdState, PdhgSettings, PiecewiseLinearSubproblem, ProxTerm, QpSettings};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::psd::psd_projection;
use crate::sets::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Linear,
    AdditiveComposite,
    HybridProxCg,
    NewtonQuadratic,
    GaussNewton,
}

/// Convex, separable regularizer `g`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Regularizer {
    #[default]
    Zero,
    /// `weight * sum_{j in range} |x_j|`.
    L1 { weight: f64, range: Range<usize> },
}

impl Regularizer {
    pub fn l1(weight: f64, range: Range<usize>) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "l1 weight must be finite and non-negative, got {weight}"
            )));
        }
        Ok(Regularizer::L1 { weight, range })
    }

    pub fn eval(&self, x: &DenseVector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight, range } => {
                weight * x.as_slice()[range.clone()].iter().map(|v| v.abs()).sum::<f64>()
            }
        }
    }

    /// Penalty weight on coordinate `j`.
    pub fn weight_at(&self, j: usize) -> f64 {
        match self {
            Regularizer::L1 { weight, range } if range.contains(&j) => *weight,
            _ => 0.0,
        }
    }

    pub fn touches(&self, block: Range<usize>) -> bool {
        match self {
            Regularizer::Zero => false,
            Regularizer::L1 { weight, range } => {
                *weight > 0.0 && range.start < block.end && block.start < range.end
            }
        }
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if let Regularizer::L1 { weight, range } = self {
            if range.end > dim || range.start > range.end {
                return Err(Error::InvalidParameter(format!(
                    "l1 range {range:?} out of bounds for dimension {dim}"
                )));
            }
            if !(*weight >= 0.0 && weight.is_finite()) {
                return Err(Error::InvalidParameter(format!("l1 weight {weight}")));
            }
        }
        Ok(())
    }

    /// `(weight, range)` view used by the piecewise-linear subproblem.
    fn as_l1(&self) -> (f64, Range<usize>) {
        match self {
            Regularizer::Zero => (0.0, 0..0),
            Regularizer::L1 { weight, range } => (*weight, range.clone()),
        }
    }
}

/// Differentiable function handle.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DenseVector) -> f64;
    fn gradient(&self, x: &DenseVector) -> DenseVector;
    fn hessian(&self, _x: &DenseVector) -> Option<DenseMatrix> {
        None
    }
}

/// Differentiable vector-valued map `F: R^n -> R^m`.
pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &DenseVector) -> DenseVector;
    fn jacobian(&self, x: &DenseVector) -> DenseMatrix;
}

/// `1/2 x^T H x + <b, x> + c` with symmetric `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub hessian: DenseMatrix,
    pub linear: DenseVector,
    pub constant: f64,
}

impl Quadratic {
    pub fn new(hessian: DenseMatrix, linear: DenseVector, constant: f64) -> Result<Self> {
        check_dim(hessian.nrows(), hessian.ncols())?;
        check_dim(hessian.nrows(), linear.len())?;
        Ok(Self {
            hessian: (&hessian + hessian.transpose()) * 0.5,
            linear,
            constant,
        })
    }
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn value(&self, x: &DenseVector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }
    fn gradient(&self, x: &DenseVector) -> DenseVector {
        &self.hessian * x + &self.linear
    }
    fn hessian(&self, _x: &DenseVector) -> Option<DenseMatrix> {
        Some(self.hessian.clone())
    }
}

/// Outer convex function of a Gauss-Newton composition `g(F(x))`.
#[derive(Debug, Clone)]
pub enum OuterLoss {
    /// `sum_i |z_i - t_i|`
    L1 { targets: DenseVector },
    /// `1/2 |z - t|^2`
    HalfSquared { targets: DenseVector },
}

impl OuterLoss {
    fn targets(&self) -> &DenseVector {
        match self {
            OuterLoss::L1 { targets } | OuterLoss::HalfSquared { targets } => targets,
        }
    }

    fn of_residual(&self, r: &DenseVector) -> f64 {
        match self {
            OuterLoss::L1 { .. } => r.iter().map(|v| v.abs()).sum(),
            OuterLoss::HalfSquared { .. } => 0.5 * r.norm_squared(),
        }
    }
}

/// Quadratic part of a composite model.
#[derive(Debug, Clone)]
enum Curvature {
    None,
    /// `1/2 sum_j w_j (x_j - x̄_j)^2`, `w_j >= 0`.
    Diagonal(DenseVector),
    /// `1/2 d^T H d` with PSD `H`.
    Dense(DenseMatrix),
}

#[derive(Debug, Clone)]
enum ModelKind {
    Composite {
        base: f64,
        grad: DenseVector,
        reg: Regularizer,
        curvature: Curvature,
    },
    PiecewiseLinear {
        jacobian: DenseMatrix,
        residual: DenseVector,
        y_diamond: DenseVector,
        reg: Regularizer,
        prox_tau: Option<f64>,
    },
}

/// Result of (approximately) minimizing a model over a set.
#[derive(Debug, Clone)]
pub struct ModelMinimizer {
    pub point: DenseVector,
    /// Model value at `point`.
    pub value: f64,
    /// Certified bound on `value - min_C m`.
    pub accuracy: f64,
    pub inner_iterations: usize,
    /// Whether the requested accuracy was certified.
    pub converged: bool,
}

/// Accuracy request for one model minimization.
#[derive(Debug, Clone, Copy)]
pub struct InnerSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
        }
    }
}

/// Iterative inner-solver state carried between consecutive model
/// minimizations of one outer run.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub pd: Option<PdState>,
    pub qp: Option<DenseVector>,
}

/// A convex model `m` anchored at `x̄`.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    anchor: DenseVector,
    kind: ModelKind,
}

impl ModelInstance {
    pub fn anchor(&self) -> &DenseVector {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn eval(&self, x: &DenseVector) -> f64 {
        let d = x - &self.anchor;
        match &self.kind {
            ModelKind::Composite {
                base,
                grad,
                reg,
                curvature,
            } => {
                let quad = match curvature {
                    Curvature::None => 0.0,
                    Curvature::Diagonal(w) => {
                        0.5 * w.iter().zip(d.iter()).map(|(wi, di)| wi * di * di).sum::<f64>()
                    }
                    Curvature::Dense(h) => 0.5 * d.dot(&(h * &d)),
                };
                base + reg.eval(x) + grad.dot(&d) + quad
            }
            ModelKind::PiecewiseLinear {
                jacobian,
                residual,
                reg,
                prox_tau,
                ..
            } => {
                let lin = residual + jacobian * &d;
                let mut v = lin.iter().map(|z| z.abs()).sum::<f64>() + reg.eval(x);
                if let Some(tau) = prox_tau {
                    v += d.norm_squared() / (2.0 * tau);
                }
                v
            }
        }
    }

    /// `Δ(x̄, y) = m(x̄) - m(y)`.
    pub fn improvement(&self, y: &DenseVector) -> f64 {
        self.eval(&self.anchor) - self.eval(y)
    }

    /// Gradient of the smooth part at the anchor (composite shape only).
    pub fn anchor_gradient(&self) -> Option<&DenseVector> {
        match &self.kind {
            ModelKind::Composite { grad, .. } => Some(grad),
            ModelKind::PiecewiseLinear { .. } => None,
        }
    }

    /// Dense curvature matrix when present (Newton and least-squares models).
    pub fn curvature_matrix(&self) -> Option<&DenseMatrix> {
        match &self.kind {
            ModelKind::Composite {
                curvature: Curvature::Dense(h),
                ..
            } => Some(h),
            _ => None,
        }
    }

    /// `(K, y◇)` of a piecewise-linear model.
    pub fn linearization(&self) -> Option<(&DenseMatrix, &DenseVector)> {
        match &self.kind {
            ModelKind::PiecewiseLinear {
                jacobian,
                y_diamond,
                ..
            } => Some((jacobian, y_diamond)),
            ModelKind::Composite { .. } => None,
        }
    }

    /// Whether minimization is closed form (no inner iterations).
    pub fn is_closed_form(&self) -> bool {
        matches!(
            &self.kind,
            ModelKind::Composite {
                curvature: Curvature::None | Curvature::Diagonal(_),
                ..
            }
        )
    }

    /// The model plus `1/(2 tau) |x - x̄|^2`; still a valid model function.
    pub fn with_prox(&self, tau: f64) -> Result<ModelInstance> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let n = self.dim();
        let w = 1.0 / tau;
        let kind = match &self.kind {
            ModelKind::Composite {
                base,
                grad,
                reg,
                curvature,
            } => {
                let curvature = match curvature {
                    Curvature::None => Curvature::Diagonal(DenseVector::from_element(n, w)),
                    Curvature::Diagonal(d) => Curvature::Diagonal(d.add_scalar(w)),
                    Curvature::Dense(h) => {
                        Curvature::Dense(h + DenseMatrix::identity(n, n) * w)
                    }
                };
                ModelKind::Composite {
                    base: *base,
                    grad: grad.clone(),
                    reg: reg.clone(),
                    curvature,
                }
            }
            ModelKind::PiecewiseLinear {
                jacobian,
                residual,
                y_diamond,
                reg,
                prox_tau,
            } => {
                let combined = match prox_tau {
                    None => tau,
                    Some(t) => 1.0 / (1.0 / t + w),
                };
                ModelKind::PiecewiseLinear {
                    jacobian: jacobian.clone(),
                    residual: residual.clone(),
                    y_diamond: y_diamond.clone(),
                    reg: reg.clone(),
                    prox_tau: Some(combined),
                }
            }
        };
        Ok(ModelInstance {
            anchor: self.anchor.clone(),
            kind,
        })
    }

    /// Minimizes the model over `set` to the requested accuracy.
    pub fn minimize(
        &self,
        set: &ConstraintSet,
        settings: &InnerSettings,
        warm: &mut WarmStart,
    ) -> Result<ModelMinimizer> {
        check_dim(set.dim(), self.dim())?;
        match &self.kind {
            ModelKind::Composite {
                grad,
                reg,
                curvature,
                ..
            } => {
                let point = match curvature {
                    Curvature::None => minimize_separable(set, reg, &self.anchor, grad, None)?,
                    Curvature::Diagonal(w) => {
                        minimize_separable(set, reg, &self.anchor, grad, Some(w))?
                    }
                    Curvature::Dense(h) => {
                        let qp = inner::qp_solve(
                            h,
                            grad,
                            &self.anchor,
                            reg,
                            set,
                            warm.qp.as_ref(),
                            &QpSettings {
                                tolerance: settings.tolerance,
                                max_iterations: settings.max_iterations,
                            },
                        )?;
                        warm.qp = Some(qp.point.clone());
                        let value = self.eval(&qp.point);
                        return Ok(ModelMinimizer {
                            point: qp.point,
                            value,
                            accuracy: qp.gap,
                            inner_iterations: qp.iterations,
                            converged: qp.converged,
                        });
                    }
                };
                let value = self.eval(&point);
                Ok(ModelMinimizer {
                    point,
                    value,
                    accuracy: 0.0,
                    inner_iterations: 0,
                    converged: true,
                })
            }
            ModelKind::PiecewiseLinear {
                jacobian,
                y_diamond,
                reg,
                prox_tau,
                ..
            } => {
                let ConstraintSet::Box { lo, hi } = set else {
                    return Err(Error::Unsupported(
                        "piecewise-linear models are minimized over boxes only".into(),
                    ));
                };
                let (mu, l1_range) = reg.as_l1();
                let sub = PiecewiseLinearSubproblem::new(
                    jacobian.clone(),
                    y_diamond.clone(),
                    mu,
                    l1_range,
                    DenseVector::from_column_slice(lo),
                    DenseVector::from_column_slice(hi),
                    prox_tau.map(|tau| ProxTerm {
                        tau,
                        center: self.anchor.clone(),
                    }),
                )?;
                let res = inner::pdhg_solve(
                    &sub,
                    warm.pd.as_ref(),
                    &PdhgSettings {
                        tolerance: settings.tolerance,
                        max_iterations: settings.max_iterations,
                        ..PdhgSettings::default()
                    },
                )?;
                warm.pd = Some(res.state);
                let value = self.eval(&res.u);
                Ok(ModelMinimizer {
                    point: res.u,
                    value,
                    accuracy: res.gap,
                    inner_iterations: res.iterations,
                    converged: res.converged,
                })
            }
        }
    }
}

/// `argmin_{x in C} <c, x> + g(x) + 1/2 sum_j q_j (x_j - a_j)^2`.
///
/// `q = None` means all weights are zero (a linear-composite problem). Boxes
/// are handled coordinatewise for any weights and any l1 penalty; other
/// leaves need constant weights across the leaf and no penalty on them,
/// reducing to an LMO (`q = 0`) or a projection (`q > 0`).
pub fn minimize_separable(
    set: &ConstraintSet,
    reg: &Regularizer,
    anchor: &DenseVector,
    c: &DenseVector,
    q: Option<&DenseVector>,
) -> Result<DenseVector> {
    let n = set.dim();
    check_dim(n, c.len())?;
    check_dim(n, anchor.len())?;
    if let Some(q) = q {
        check_dim(n, q.len())?;
    }
    let mut out = DenseVector::zeros(n);
    for (offset, leaf) in set.blocks() {
        let d = leaf.dim();
        let range = offset..offset + d;
        if let ConstraintSet::Box { lo, hi } = leaf {
            for (i, j) in range.clone().enumerate() {
                let qj = q.map_or(0.0, |q| q[j]);
                out[j] = scalar_min(c[j], reg.weight_at(j), qj, anchor[j], lo[i], hi[i]);
            }
            continue;
        }
        if reg.touches(range.clone()) {
            return Err(Error::Unsupported(format!(
                "l1 penalty on a non-box block at offset {offset}"
            )));
        }
        let c_blk = c.rows(offset, d).into_owned();
        let q_blk = q.map(|q| q.rows(offset, d).into_owned());
        let block = match q_blk {
            Some(w) if w.iter().any(|v| *v != 0.0) => {
                let w0 = w[0];
                if w.iter().any(|v| *v != w0) || w0 < 0.0 {
                    return Err(Error::Unsupported(format!(
                        "non-uniform proximal weights on a non-box block at offset {offset}"
                    )));
                }
                let a_blk = anchor.rows(offset, d).into_owned();
                leaf.project(&(a_blk - c_blk / w0))?
            }
            _ => leaf.lmo(&c_blk)?,
        };
        out.rows_mut(offset, d).copy_from(&block);
    }
    Ok(out)
}

/// `argmin_{x in [lo, hi]} c x + w |x| + q/2 (x - a)^2` for scalars.
fn scalar_min(c: f64, w: f64, q: f64, a: f64, lo: f64, hi: f64) -> f64 {
    if q > 0.0 {
        // soft-threshold the unconstrained minimizer, then clamp; exact for
        // a 1-D convex function restricted to an interval
        let v = a - c / q;
        let t = w / q;
        let s = v.signum() * (v.abs() - t).max(0.0);
        return s.max(lo).min(hi);
    }
    let phi = |x: f64| c * x + w * x.abs();
    let mut best = lo;
    let mut best_val = phi(lo);
    if lo < 0.0 && 0.0 < hi && phi(0.0) < best_val {
        best = 0.0;
        best_val = phi(0.0);
    }
    if phi(hi) < best_val {
        best = hi;
    }
    best
}

/// Linear model `f(x̄) + <∇f(x̄), x - x̄>`.
pub fn build_linear_model(f_value: f64, grad: DenseVector, anchor: DenseVector) -> Result<ModelInstance> {
    check_dim(anchor.len(), grad.len())?;
    crate::linalg::ensure_finite(&grad, "gradient")?;
    Ok(ModelInstance {
        anchor,
        kind: ModelKind::Composite {
            base: f_value,
            grad,
            reg: Regularizer::Zero,
            curvature: Curvature::None,
        },
    })
}

/// `g(x) + h(x̄) + <∇h(x̄), x - x̄>`.
pub fn build_additive_composite_model(
    g: Regularizer,
    h_value: f64,
    h_grad: DenseVector,
    anchor: DenseVector,
) -> Result<ModelInstance> {
    check_dim(anchor.len(), h_grad.len())?;
    g.check(anchor.len())?;
    crate::linalg::ensure_finite(&h_grad, "gradient")?;
    Ok(ModelInstance {
        anchor,
        kind: ModelKind::Composite {
            base: h_value,
            grad: h_grad,
            reg: g,
            curvature: Curvature::None,
        },
    })
}

/// Additive composite model plus `1/(2 tau) |x_B - x̄_B|^2` on the
/// coordinate block `prox_block`. Minimizing it takes a proximal gradient
/// step on that block and a conditional gradient step on the rest.
pub fn build_hybrid_model(
    g: Regularizer,
    h_value: f64,
    h_grad: DenseVector,
    tau: f64,
    prox_block: Range<usize>,
    anchor: DenseVector,
) -> Result<ModelInstance> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let n = anchor.len();
    if prox_block.end > n || prox_block.start >= prox_block.end {
        return Err(Error::InvalidParameter(format!(
            "proximal block {prox_block:?} invalid for dimension {n}"
        )));
    }
    let mut m = build_additive_composite_model(g, h_value, h_grad, anchor)?;
    let w = DenseVector::from_fn(n, |j, _| if prox_block.contains(&j) { 1.0 / tau } else { 0.0 });
    if let ModelKind::Composite { curvature, .. } = &mut m.kind {
        *curvature = Curvature::Diagonal(w);
    }
    Ok(m)
}

/// Second order model with the Hessian projected onto the PSD cone.
pub fn build_newton_model(
    g: Regularizer,
    h_value: f64,
    h_grad: DenseVector,
    h_hess: &DenseMatrix,
    anchor: DenseVector,
) -> Result<ModelInstance> {
    check_dim(anchor.len(), h_hess.nrows())?;
    let h_plus = psd_projection(h_hess)?;
    let mut m = build_additive_composite_model(g, h_value, h_grad, anchor)?;
    if let ModelKind::Composite { curvature, .. } = &mut m.kind {
        *curvature = Curvature::Dense(h_plus);
    }
    Ok(m)
}

/// `outer(F(x̄) + J(x̄)(x - x̄)) + reg(x)`.
pub fn build_gauss_newton_model(
    outer: &OuterLoss,
    reg: Regularizer,
    f_value: &DenseVector,
    jacobian: DenseMatrix,
    anchor: DenseVector,
) -> Result<ModelInstance> {
    let targets = outer.targets();
    check_dim(targets.len(), f_value.len())?;
    check_dim(f_value.len(), jacobian.nrows())?;
    check_dim(anchor.len(), jacobian.ncols())?;
    reg.check(anchor.len())?;
    if jacobian.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jacobian"));
    }
    let residual = f_value - targets;
    let kind = match outer {
        OuterLoss::L1 { .. } => {
            // y◇ = t - F(x̄) + J x̄
            let y_diamond = &jacobian * &anchor - &residual;
            ModelKind::PiecewiseLinear {
                jacobian,
                residual,
                y_diamond,
                reg,
                prox_tau: None,
            }
        }
        OuterLoss::HalfSquared { .. } => ModelKind::Composite {
            base: outer.of_residual(&residual),
            grad: jacobian.tr_mul(&residual),
            reg,
            curvature: Curvature::Dense(jacobian.tr_mul(&jacobian)),
        },
    };
    Ok(ModelInstance { anchor, kind })
}

/// `Δ(x̄, y)` with `y` checked against the set.
pub fn model_improvement(m: &ModelInstance, set: &ConstraintSet, y: &DenseVector) -> Result<f64> {
    if !set.contains(y, 1e-9) {
        return Err(Error::OutsideSet);
    }
    Ok(m.improvement(y))
}

/// Factory of model functions for one problem `min_C f`.
pub trait ModelOracle: Send + Sync {
    fn family(&self) -> ModelFamily;
    fn dim(&self) -> usize;
    fn objective(&self, x: &DenseVector) -> f64;
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance>;
}

/// Linear model of a smooth objective.
pub struct LinearOracle<F> {
    pub f: F,
}

impl<F: SmoothFunction> ModelOracle for LinearOracle<F> {
    fn family(&self) -> ModelFamily {
        ModelFamily::Linear
    }
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn objective(&self, x: &DenseVector) -> f64 {
        self.f.value(x)
    }
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance> {
        build_linear_model(self.f.value(anchor), self.f.gradient(anchor), anchor.clone())
    }
}

/// `f = g + h` with `g` the convex regularizer and `h` smooth.
pub struct AdditiveCompositeOracle<H> {
    pub h: H,
    pub g: Regularizer,
}

impl<H: SmoothFunction> ModelOracle for AdditiveCompositeOracle<H> {
    fn family(&self) -> ModelFamily {
        ModelFamily::AdditiveComposite
    }
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn objective(&self, x: &DenseVector) -> f64 {
        self.h.value(x) + self.g.eval(x)
    }
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance> {
        build_additive_composite_model(
            self.g.clone(),
            self.h.value(anchor),
            self.h.gradient(anchor),
            anchor.clone(),
        )
    }
}

pub struct HybridOracle<H> {
    pub h: H,
    pub g: Regularizer,
    pub tau: f64,
    pub prox_block: Range<usize>,
}

impl<H: SmoothFunction> ModelOracle for HybridOracle<H> {
    fn family(&self) -> ModelFamily {
        ModelFamily::HybridProxCg
    }
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn objective(&self, x: &DenseVector) -> f64 {
        self.h.value(x) + self.g.eval(x)
    }
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance> {
        build_hybrid_model(
            self.g.clone(),
            self.h.value(anchor),
            self.h.gradient(anchor),
            self.tau,
            self.prox_block.clone(),
            anchor.clone(),
        )
    }
}

pub struct NewtonOracle<H> {
    pub h: H,
    pub g: Regularizer,
}

impl<H: SmoothFunction> ModelOracle for NewtonOracle<H> {
    fn family(&self) -> ModelFamily {
        ModelFamily::NewtonQuadratic
    }
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn objective(&self, x: &DenseVector) -> f64 {
        self.h.value(x) + self.g.eval(x)
    }
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance> {
        let hess = self
            .h
            .hessian(anchor)
            .ok_or_else(|| Error::Unsupported("Newton model needs a Hessian".into()))?;
        build_newton_model(
            self.g.clone(),
            self.h.value(anchor),
            self.h.gradient(anchor),
            &hess,
            anchor.clone(),
        )
    }
}

/// `outer(F(x)) + reg(x)` with its Gauss-Newton model.
pub struct GaussNewtonOracle<M> {
    pub map: M,
    pub outer: OuterLoss,
    pub reg: Regularizer,
}

impl<M: SmoothMap> GaussNewtonOracle<M> {
    pub fn new(map: M, outer: OuterLoss, reg: Regularizer) -> Result<Self> {
        check_dim(map.dim_out(), outer.targets().len())?;
        reg.check(map.dim_in())?;
        Ok(Self { map, outer, reg })
    }
}

impl<M: SmoothMap> ModelOracle for GaussNewtonOracle<M> {
    fn family(&self) -> ModelFamily {
        ModelFamily::GaussNewton
    }
    fn dim(&self) -> usize {
        self.map.dim_in()
    }
    fn objective(&self, x: &DenseVector) -> f64 {
        let r = self.map.eval(x) - self.outer.targets();
        self.outer.of_residual(&r) + self.reg.eval(x)
    }
    fn model_at(&self, anchor: &DenseVector) -> Result<ModelInstance> {
        build_gauss_newton_model(
            &self.outer,
            self.reg.clone(),
            &self.map.eval(anchor),
            self.map.jacobian(anchor),
            anchor.clone(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct ModelErrorReport {
    pub samples: usize,
    /// Largest `|f - m| - omega(|x - x̄|)` seen.
    pub max_violation: f64,
    /// Samples exceeding the bound beyond `1e-12 (1 + |f|)`.
    pub violations: usize,
    pub passed: bool,
}

/// Samples anchor/point pairs in `set` and checks
/// `|f(x) - m_x̄(x)| <= omega(|x - x̄|)`.
///
/// Half of the points are drawn near the anchor (log-uniform distance
/// scale) so the small-`t` regime of the bound is exercised.
pub fn verify_model_error(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    omega: &GrowthFunction,
    n_samples: usize,
    seed: u64,
) -> Result<ModelErrorReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    let anchors = (n_samples / 10).max(1);
    let mut done = 0;
    for a in 0..anchors {
        let anchor = set.sample(&mut rng);
        let m = oracle.model_at(&anchor)?;
        let per = n_samples / anchors + usize::from(a < n_samples % anchors);
        for s in 0..per {
            let far = set.sample(&mut rng);
            let x = if s % 2 == 0 {
                far
            } else {
                let scale = 10f64.powf(-6.0 * rng.random::<f64>());
                &anchor + (far - &anchor) * scale
            };
            let fx = oracle.objective(&x);
            let err = (fx - m.eval(&x)).abs();
            let bound = omega.eval((&x - &anchor).norm())?;
            let violation = err - bound;
            max_violation = max_violation.max(violation);
            if violation > 1e-12 * (1.0 + fx.abs()) {
                violations += 1;
            }
            done += 1;
        }
    }
    Ok(ModelErrorReport {
        samples: done,
        max_violation,
        violations,
        passed: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn half_norm_sq(n: usize) -> Quadratic {
        Quadratic::new(DenseMatrix::identity(n, n), DenseVector::zeros(n), 0.0).unwrap()
    }

    #[test]
    fn linear_model_anchor_identity() {
        let oracle = LinearOracle { f: half_norm_sq(2) };
        let x = dvector![1.0, 0.0];
        let m = oracle.model_at(&x).unwrap();
        assert_eq!(m.eval(&x), 0.5);
        assert_eq!(m.eval(&dvector![0.0, 0.0]), 0.5 + (-1.0));
        assert_eq!(m.improvement(&x), 0.0);
    }

    #[test]
    fn constant_function_has_zero_improvement() {
        let q = Quadratic::new(DenseMatrix::zeros(2, 2), DenseVector::zeros(2), 3.0).unwrap();
        let m = LinearOracle { f: q }.model_at(&dvector![0.2, 0.4]).unwrap();
        assert_eq!(m.improvement(&dvector![1.0, -1.0]), 0.0);
    }

    #[test]
    fn linear_improvement_is_gradient_inner_product() {
        let q = Quadratic::new(DenseMatrix::identity(2, 2) * 3.0, dvector![1.0, -2.0], 0.5).unwrap();
        let xbar = dvector![0.3, 0.7];
        let y = dvector![1.0, 0.0];
        let m = LinearOracle { f: q.clone() }.model_at(&xbar).unwrap();
        let expected = q.gradient(&xbar).dot(&(&xbar - &y));
        assert!((m.improvement(&y) - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_regularizer_reduces_additive_composite_to_linear() {
        let q = Quadratic::new(DenseMatrix::identity(2, 2), dvector![0.5, -1.0], 0.0).unwrap();
        let xbar = dvector![0.1, 0.9];
        let lin = LinearOracle { f: q.clone() }.model_at(&xbar).unwrap();
        let add = AdditiveCompositeOracle { h: q, g: Regularizer::Zero }.model_at(&xbar).unwrap();
        for y in [dvector![0.0, 0.0], dvector![1.0, 2.0], dvector![-3.0, 0.5]] {
            assert_eq!(lin.eval(&y), add.eval(&y));
        }
    }

    #[test]
    fn separable_min_box_with_l1() {
        let set = ConstraintSet::boxed(vec![-1.0, 0.0, -2.0], vec![1.0, 3.0, 2.0]).unwrap();
        let reg = Regularizer::l1(1.0, 0..3).unwrap();
        // coordinate 0: 0.5 x + |x| over [-1,1] -> 0
        // coordinate 1: -2 x + |x| over [0,3] -> 3
        // coordinate 2: 3 x + |x| over [-2,2] -> -2
        let c = dvector![0.5, -2.0, 3.0];
        let x = minimize_separable(&set, &reg, &DenseVector::zeros(3), &c, None).unwrap();
        assert_eq!(x, dvector![0.0, 3.0, -2.0]);
    }

    #[test]
    fn separable_min_rejects_l1_on_ball() {
        let set = ConstraintSet::l2_ball(2, 1.0, false).unwrap();
        let reg = Regularizer::l1(1.0, 0..2).unwrap();
        assert!(matches!(
            minimize_separable(&set, &reg, &DenseVector::zeros(2), &dvector![1.0, 1.0], None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn hybrid_with_zero_g_is_clamp_plus_lmo() {
        let h = Quadratic::new(DenseMatrix::identity(4, 4), dvector![1.0, -3.0, 2.0, -1.0], 0.0).unwrap();
        let set = ConstraintSet::product(vec![
            ConstraintSet::uniform_box(2, 0.0, 1.0).unwrap(),
            ConstraintSet::l1_ball(2, 2.0).unwrap(),
        ])
        .unwrap();
        let tau = 0.3;
        let xbar = dvector![0.5, 0.5, 0.0, 0.0];
        let oracle = HybridOracle { h: h.clone(), g: Regularizer::Zero, tau, prox_block: 0..2 };
        let m = oracle.model_at(&xbar).unwrap();
        let y = m.minimize(&set, &InnerSettings::default(), &mut WarmStart::default()).unwrap();
        let grad = h.gradient(&xbar);
        let y1: Vec<f64> = (0..2).map(|j| (xbar[j] - tau * grad[j]).clamp(0.0, 1.0)).collect();
        let y2 = lmo_of(&ConstraintSet::l1_ball(2, 2.0).unwrap(), &grad.rows(2, 2).into_owned());
        assert!((y.point[0] - y1[0]).abs() < 1e-15 && (y.point[1] - y1[1]).abs() < 1e-15);
        assert_eq!(y.point.rows(2, 2).into_owned(), y2);
        assert_eq!(m.eval(&xbar), oracle.objective(&xbar));
        assert!(build_hybrid_model(Regularizer::Zero, 0.0, grad, 0.0, 0..2, xbar).is_err());
    }

    fn lmo_of(set: &ConstraintSet, c: &DenseVector) -> DenseVector {
        set.lmo(c).unwrap()
    }

    #[test]
    fn hybrid_large_tau_approaches_cg_vertex() {
        let h = Quadratic::new(DenseMatrix::identity(2, 2) * 0.1, dvector![1.0, -1.0], 0.0).unwrap();
        let set = ConstraintSet::uniform_box(2, -1.0, 1.0).unwrap();
        let xbar = dvector![0.2, -0.3];
        let m = HybridOracle { h: h.clone(), g: Regularizer::Zero, tau: 1e6, prox_block: 0..2 }
            .model_at(&xbar)
            .unwrap();
        let y = m.minimize(&set, &InnerSettings::default(), &mut WarmStart::default()).unwrap();
        let vertex = set.lmo(&h.gradient(&xbar)).unwrap();
        assert!((y.point - vertex).norm() < 1e-9);
    }

    #[test]
    fn newton_model_clips_curvature() {
        let h = Quadratic::new(DenseMatrix::from_diagonal(&dvector![1.0, -1.0]), DenseVector::zeros(2), 0.0).unwrap();
        let m = NewtonOracle { h, g: Regularizer::Zero }.model_at(&dvector![0.0, 0.0]).unwrap();
        let c = m.curvature_matrix().unwrap();
        assert!((c - DenseMatrix::from_diagonal(&dvector![1.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn newton_step_with_interior_minimizer() {
        let hess = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = Quadratic::new(hess.clone(), dvector![-0.4, 0.3], 0.0).unwrap();
        let set = ConstraintSet::uniform_box(2, -5.0, 5.0).unwrap();
        let xbar = dvector![1.0, 1.0];
        let m = NewtonOracle { h: h.clone(), g: Regularizer::Zero }.model_at(&xbar).unwrap();
        let y = m
            .minimize(&set, &InnerSettings { tolerance: 1e-13, max_iterations: 100_000 }, &mut WarmStart::default())
            .unwrap();
        let newton = &xbar - hess.clone().try_inverse().unwrap() * h.gradient(&xbar);
        assert!((y.point - newton).norm() < 1e-6, "{}", y.accuracy);
    }

    #[test]
    fn gauss_newton_affine_map_is_exact() {
        struct Affine(DenseMatrix, DenseVector);
        impl SmoothMap for Affine {
            fn dim_in(&self) -> usize { self.0.ncols() }
            fn dim_out(&self) -> usize { self.0.nrows() }
            fn eval(&self, x: &DenseVector) -> DenseVector { &self.0 * x + &self.1 }
            fn jacobian(&self, _x: &DenseVector) -> DenseMatrix { self.0.clone() }
        }
        let a = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 0.3]);
        let map = Affine(a, dvector![0.1, -0.2, 0.4]);
        let oracle = GaussNewtonOracle::new(
            map,
            OuterLoss::L1 { targets: dvector![1.0, 0.0, -1.0] },
            Regularizer::Zero,
        )
        .unwrap();
        let m = oracle.model_at(&dvector![0.3, 0.1]).unwrap();
        for x in [dvector![1.0, 1.0], dvector![-0.5, 2.0], dvector![0.0, 0.0]] {
            assert!((m.eval(&x) - oracle.objective(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_newton_shape_mismatch() {
        let err = build_gauss_newton_model(
            &OuterLoss::L1 { targets: dvector![1.0, 2.0] },
            Regularizer::Zero,
            &dvector![1.0, 2.0, 3.0],
            DenseMatrix::zeros(3, 2),
            dvector![0.0, 0.0],
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn improvement_rejects_infeasible_point() {
        let set = ConstraintSet::simplex(2).unwrap();
        let m = LinearOracle { f: half_norm_sq(2) }.model_at(&dvector![0.5, 0.5]).unwrap();
        assert!(matches!(model_improvement(&m, &set, &dvector![1.0, 1.0]), Err(Error::OutsideSet)));
        assert_eq!(model_improvement(&m, &set, &dvector![0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn linear_model_on_kink_violates_bound() {
        // f = |x| is not smooth; a "linear model" built from a one-sided
        // derivative at 0 cannot satisfy a growth bound.
        struct Abs;
        impl SmoothFunction for Abs {
            fn dim(&self) -> usize { 1 }
            fn value(&self, x: &DenseVector) -> f64 { x[0].abs() }
            fn gradient(&self, x: &DenseVector) -> DenseVector { dvector![if x[0] >= 0.0 { 1.0 } else { -1.0 }] }
        }
        let set = ConstraintSet::uniform_box(1, -1.0, 1.0).unwrap();
        let omega = GrowthFunction::lipschitz(1.0).unwrap();
        let report = verify_model_error(&LinearOracle { f: Abs }, &set, &omega, 200, 3).unwrap();
        assert!(!report.passed);
        assert!(report.violations > 0);
    }
}
