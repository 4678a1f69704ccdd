//! Sparse robust regression with a sum of decaying exponentials.
//!
//! `f(a, b) = sum_i |F_i(a, b) - y_i| + mu |a|_1` over
//! `[0, a_max]^P x [0, b_max]^P`, with `F_i(a, b) = sum_j a_j exp(-b_j x_i)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::growth::GrowthFunction;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::models::{GaussNewtonOracle, OuterLoss, Regularizer, SmoothMap};
use crate::sets::ConstraintSet;
use crate::{Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionParams {
    /// Number of exponential terms.
    pub p: usize,
    /// Number of observations.
    pub m: usize,
    pub mu: f64,
    pub a_max: f64,
    pub b_max: f64,
    /// Fraction of zero coefficients in the ground truth `a`.
    pub sparsity: f64,
    /// Laplace noise scale.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self {
            p: 100,
            m: 1000,
            mu: 80.0,
            a_max: 20.0,
            b_max: 5.0,
            sparsity: 0.8,
            noise_scale: 0.5,
            seed: 0,
        }
    }
}

impl RegressionParams {
    /// Reduced instance used for quick comparisons.
    pub fn desk(seed: u64) -> Self {
        Self {
            p: 20,
            m: 200,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("P and M must be positive".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.a_max) || !positive(self.b_max) || !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need mu >= 0 and positive bounds, got mu={} a_max={} b_max={}",
                self.mu, self.a_max, self.b_max
            )));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::InvalidParameter(format!("sparsity {} not in [0,1)", self.sparsity)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale {}", self.noise_scale)));
        }
        Ok(())
    }

    /// `ceil(sparsity P)`, robust to `0.8 * 100 = 80.00000000000001`.
    pub fn zero_count(&self) -> usize {
        ((self.sparsity * self.p as f64 - 1e-9).ceil().max(0.0) as usize).min(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub schema_version: u32,
    pub params: RegressionParams,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub a_true: Vec<f64>,
    pub b_true: Vec<f64>,
}

/// Draws a dataset; identical `params` give bit-identical output.
pub fn generate_regression_data(params: &RegressionParams) -> Result<RegressionDataset> {
    params.validate()?;
    let RegressionParams { p, m, .. } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let x: Vec<f64> = if m == 1 {
        vec![0.0]
    } else {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    };
    let mut a: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..=params.a_max)).collect();
    let b: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..=params.b_max)).collect();
    for j in index::sample(&mut rng, p, params.zero_count()) {
        a[j] = 0.0;
    }
    let clean = eval_f(&a, &b, &x)?;
    let y = clean
        .iter()
        .map(|&fi| fi + laplace(&mut rng, params.noise_scale))
        .collect();
    Ok(RegressionDataset {
        schema_version: DATASET_SCHEMA_VERSION,
        params: params.clone(),
        x,
        y,
        a_true: a,
        b_true: b,
    })
}

/// Inverse-CDF Laplace sample with scale `s`.
fn laplace<R: Rng>(rng: &mut R, s: f64) -> f64 {
    // U = 0 maps to an infinite sample
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let c = u - 0.5;
    if s == 0.0 {
        return 0.0;
    }
    -s * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// `F_i(a, b) = sum_j a_j exp(-b_j x_i)` for every covariate.
pub fn eval_f(a: &[f64], b: &[f64], x: &[f64]) -> Result<DenseVector> {
    check_dim(a.len(), b.len())?;
    Ok(DenseVector::from_iterator(
        x.len(),
        x.iter().map(|&xi| {
            a.iter()
                .zip(b)
                .map(|(&aj, &bj)| aj * (-bj * xi).exp())
                .sum::<f64>()
        }),
    ))
}

/// `M x 2P` Jacobian of `F` in the variables `(a, b)`.
pub fn eval_jacobian(a: &[f64], b: &[f64], x: &[f64]) -> Result<DenseMatrix> {
    check_dim(a.len(), b.len())?;
    let p = a.len();
    let mut jac = DenseMatrix::zeros(x.len(), 2 * p);
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..p {
            let e = (-b[j] * xi).exp();
            jac[(i, j)] = e;
            jac[(i, p + j)] = -a[j] * xi * e;
        }
    }
    Ok(jac)
}

/// `u = (a, b) -> F(a, b)`.
#[derive(Debug, Clone)]
pub struct ExpSumMap {
    pub x: Vec<f64>,
    pub p: usize,
}

impl SmoothMap for ExpSumMap {
    fn dim_in(&self) -> usize {
        2 * self.p
    }
    fn dim_out(&self) -> usize {
        self.x.len()
    }
    fn eval(&self, u: &DenseVector) -> DenseVector {
        let (a, b) = u.as_slice().split_at(self.p);
        eval_f(a, b, &self.x).expect("split halves have equal length")
    }
    fn jacobian(&self, u: &DenseVector) -> DenseMatrix {
        let (a, b) = u.as_slice().split_at(self.p);
        eval_jacobian(a, b, &self.x).expect("split halves have equal length")
    }
}

/// `(K, y_diamond)` with `K = JF(u)` and `y_diamond = y - F(u) + K u`.
pub fn build_linearization(data: &RegressionDataset, u: &DenseVector) -> Result<(DenseMatrix, DenseVector)> {
    let p = data.params.p;
    check_dim(2 * p, u.len())?;
    let (a, b) = u.as_slice().split_at(p);
    let k = eval_jacobian(a, b, &data.x)?;
    let f = eval_f(a, b, &data.x)?;
    let y = DenseVector::from_column_slice(&data.y);
    let yd = &y - f + &k * u;
    Ok((k, yd))
}

/// Objective, model oracle and feasible set of one dataset.
pub struct RegressionProblem {
    pub oracle: GaussNewtonOracle<ExpSumMap>,
    pub set: ConstraintSet,
}

impl RegressionProblem {
    pub fn new(data: &RegressionDataset) -> Result<Self> {
        let prm = &data.params;
        prm.validate()?;
        check_dim(prm.m, data.x.len())?;
        check_dim(prm.m, data.y.len())?;
        let p = prm.p;
        let map = ExpSumMap { x: data.x.clone(), p };
        let oracle = GaussNewtonOracle::new(
            map,
            OuterLoss::L1 {
                targets: DenseVector::from_column_slice(&data.y),
            },
            Regularizer::l1(prm.mu, 0..p)?,
        )?;
        let mut hi = vec![prm.a_max; p];
        hi.extend(std::iter::repeat_n(prm.b_max, p));
        let set = ConstraintSet::boxed(vec![0.0; 2 * p], hi)?;
        Ok(Self { oracle, set })
    }

    /// Midpoint of the box.
    pub fn default_start(&self) -> DenseVector {
        self.set.center()
    }
}

/// Growth function bounding `|f - m|` for the Gauss-Newton model over the
/// box: the l1 outer loss is 1-Lipschitz per residual, and the Hessian of
/// each `F_i` is block diagonal with 2x2 blocks
/// `[[0, -x e], [-x e, a x^2 e]]`, `e = exp(-b x) <= 1`.
pub fn regression_growth(data: &RegressionDataset) -> Result<GrowthFunction> {
    let a_max = data.params.a_max;
    let c: f64 = data
        .x
        .iter()
        .map(|&xi| {
            let d = a_max * xi * xi;
            (d + (d * d + 4.0 * xi * xi).sqrt()) / 2.0
        })
        .sum();
    GrowthFunction::new(c.max(f64::MIN_POSITIVE), 1.0)
}
