//! Structured matrix factorization `min 1/2 |A - XY|_F^2 + g(X)` over
//! `X in 𝒳`, `Y in 𝒴`.
//!
//! Variables are stored as one flat vector `(vec X, vec Y)` with
//! column-major `vec`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{as_matrix, DenseMatrix, DenseVector};
use crate::models::{AdditiveCompositeOracle, HybridOracle, ModelOracle, Regularizer, SmoothFunction};
use crate::sets::ConstraintSet;
use crate::solver::{mcgm_solve, LineSearchParams, SolverConfig, SolverTrace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XSet {
    /// Unit-norm atoms; every column after the first has zero mean.
    Dictionary,
    /// Columns on the unit simplex.
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YSet {
    L1 { radius: f64 },
    Nuclear { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MfMode {
    /// Linearize both factors.
    FullCg,
    /// Add `1/(2 tau) |Y - Y^k|_F^2` to the model.
    Hybrid { tau: f64 },
}

#[derive(Debug, Clone)]
pub struct MfProblem {
    pub a: DenseMatrix,
    pub rank: usize,
    pub x_set: XSet,
    pub y_set: YSet,
    /// Penalty on the `X` block.
    pub g: Regularizer,
    pub mode: MfMode,
}

/// `h(X, Y) = 1/2 |A - XY|_F^2` on the flat variable.
#[derive(Debug, Clone)]
pub struct MfObjective {
    pub a: DenseMatrix,
    pub rank: usize,
}

impl MfObjective {
    pub fn split(&self, v: &DenseVector) -> (DenseMatrix, DenseMatrix) {
        let (m, n, r) = (self.a.nrows(), self.a.ncols(), self.rank);
        let (x, y) = v.as_slice().split_at(m * r);
        (as_matrix(x, m, r), as_matrix(y, r, n))
    }

    pub fn residual(&self, v: &DenseVector) -> DenseMatrix {
        let (x, y) = self.split(v);
        x * y - &self.a
    }
}

pub fn join(x: &DenseMatrix, y: &DenseMatrix) -> DenseVector {
    DenseVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
}

impl SmoothFunction for MfObjective {
    fn dim(&self) -> usize {
        self.rank * (self.a.nrows() + self.a.ncols())
    }
    fn value(&self, v: &DenseVector) -> f64 {
        0.5 * self.residual(v).norm_squared()
    }
    fn gradient(&self, v: &DenseVector) -> DenseVector {
        let (x, y) = self.split(v);
        let r = &x * &y - &self.a;
        join(&(&r * y.transpose()), &(x.transpose() * &r))
    }
}

impl MfProblem {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.a.is_empty() {
            return Err(Error::EmptyInput);
        }
        let radius = match self.y_set {
            YSet::L1 { radius } | YSet::Nuclear { radius } => radius,
        };
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("Y radius {radius}")));
        }
        if let MfMode::Hybrid { tau } = self.mode {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
            }
        }
        self.g.check(self.dim())?;
        if self.g.touches(self.y_block()) {
            return Err(Error::InvalidParameter("the penalty acts on X only".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rank * (self.a.nrows() + self.a.ncols())
    }

    pub fn x_block(&self) -> Range<usize> {
        0..self.a.nrows() * self.rank
    }

    pub fn y_block(&self) -> Range<usize> {
        self.a.nrows() * self.rank..self.dim()
    }

    pub fn objective(&self) -> MfObjective {
        MfObjective {
            a: self.a.clone(),
            rank: self.rank,
        }
    }

    pub fn set(&self) -> Result<ConstraintSet> {
        let (m, n, r) = (self.a.nrows(), self.a.ncols(), self.rank);
        let x = match self.x_set {
            XSet::Dictionary => ConstraintSet::dictionary(m, r)?,
            XSet::Simplex => ConstraintSet::columnwise_simplex(m, r)?,
        };
        let y = match self.y_set {
            YSet::L1 { radius } => ConstraintSet::l1_ball(r * n, radius)?,
            YSet::Nuclear { radius } => ConstraintSet::nuclear_ball(r, n, radius)?,
        };
        ConstraintSet::product(vec![x, y])
    }

    pub fn oracle(&self) -> Result<Box<dyn ModelOracle>> {
        self.validate()?;
        Ok(match self.mode {
            MfMode::FullCg => Box::new(AdditiveCompositeOracle {
                h: self.objective(),
                g: self.g.clone(),
            }),
            MfMode::Hybrid { tau } => Box::new(HybridOracle {
                h: self.objective(),
                g: self.g.clone(),
                tau,
                prox_block: self.y_block(),
            }),
        })
    }

    /// Seeded feasible start.
    pub fn random_start(&self, seed: u64) -> Result<DenseVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.set()?.sample(&mut rng))
    }
}

/// Rank-one `A = u v^T` with standard normal-ish entries.
pub fn rank_one_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DenseVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
    let v = DenseVector::from_fn(cols, |_, _| rng.random_range(-1.0..1.0));
    u * v.transpose()
}

#[derive(Debug, Clone)]
pub struct MfResult {
    pub trace: SolverTrace,
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

pub fn mf_demo(
    problem: &MfProblem,
    x0: &DenseVector,
    ls: &LineSearchParams,
    cfg: &SolverConfig,
) -> Result<MfResult> {
    let oracle = problem.oracle()?;
    let set = problem.set()?;
    let trace = mcgm_solve(oracle.as_ref(), &set, x0, ls, cfg)?;
    let (x, y) = problem.objective().split(&trace.x);
    Ok(MfResult { trace, x, y })
}
