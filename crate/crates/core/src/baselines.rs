//! Prox-linear reference methods.
//!
//! Both add `1/(2 tau) |x - x^k|^2` to the model at `x^k`. The line search
//! variant keeps `tau = tau0` and runs the same Armijo backtracking as the
//! conditional gradient method. The backtracking variant always takes the
//! full step and instead shrinks `tau` until the prox-model decrease is
//! realized by the objective.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::DenseVector;
use crate::models::{ModelOracle, WarmStart};
use crate::sets::ConstraintSet;
use crate::solver::{
    prepare_start, run_model_descent, IterationRecord, LineSearchParams, Schedule, SolverConfig,
    SolverStatus, SolverTrace,
};
use crate::{Error, Result};

/// Smallest proximal weight accepted before giving up.
pub const TAU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxLinearConfig {
    pub tau0: f64,
    /// Shrink factor for `tau` in the backtracking variant.
    pub eta: f64,
    /// Sufficient decrease fraction of the backtracking variant.
    pub rho_bt: f64,
    /// Growth factor applied to `tau` after an accepted step, capped at `tau0`.
    pub expand: f64,
    pub ls: LineSearchParams,
    pub solver: SolverConfig,
}

impl Default for ProxLinearConfig {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            eta: 0.5,
            rho_bt: 0.25,
            expand: 2.0,
            ls: LineSearchParams::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ProxLinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tau0.is_finite() || self.tau0 < TAU_FLOOR {
            return Err(Error::TauUnderflow { tau: self.tau0 });
        }
        if !(self.eta > 0.0 && self.eta < 1.0) || !(self.rho_bt > 0.0 && self.rho_bt < 1.0) || !(self.expand >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need eta, rho_bt in (0,1) and expand >= 1, got {} {} {}",
                self.eta, self.rho_bt, self.expand
            )));
        }
        self.ls.validate()?;
        self.solver.validate()
    }
}

/// Prox-linear with fixed `tau0` and Armijo line search.
pub fn prox_linear_ls_solve(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    cfg: &ProxLinearConfig,
) -> Result<SolverTrace> {
    prox_linear_ls_solve_with(oracle, set, x0, cfg, &mut |_| {})
}

pub fn prox_linear_ls_solve_with(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    cfg: &ProxLinearConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverTrace> {
    cfg.validate()?;
    let tau = cfg.tau0;
    run_model_descent(oracle, set, x0, &cfg.ls, &cfg.solver, &|m| m.with_prox(tau), observer)
}

/// Prox-linear with full steps and backtracking on `tau`.
pub fn prox_linear_bt_solve(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    cfg: &ProxLinearConfig,
) -> Result<SolverTrace> {
    prox_linear_bt_solve_with(oracle, set, x0, cfg, &mut |_| {})
}

pub fn prox_linear_bt_solve_with(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    cfg: &ProxLinearConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverTrace> {
    cfg.validate()?;
    check_dim(set.dim(), oracle.dim())?;
    let start = Instant::now();
    let budget = cfg.solver.time_budget.map(Duration::from_secs_f64);
    let mut x = prepare_start(set, x0)?;
    let mut f = oracle.objective(&x);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the initial point"));
    }
    let tol = cfg.solver.delta_tol.absolute(f);
    let mut schedule = Schedule::new(&cfg.solver);
    let mut warm = WarmStart::default();
    let mut tau = cfg.tau0;
    let mut records = Vec::new();

    for k in 0.. {
        let base = oracle.model_at(&x)?;
        let mut trials = 0;
        let mut inner_iterations = 0;
        let (accepted, last_delta) = loop {
            let model = base.with_prox(tau)?;
            let (sol, delta, iters) = schedule.solve_checked(k, &model, set, &mut warm, tol)?;
            trials += 1;
            inner_iterations += iters;
            // stationarity is only judged at the largest weight of the iteration
            if trials == 1 && delta <= tol {
                break (None, delta);
            }
            let f_y = oracle.objective(&sol.point);
            if f_y <= f - cfg.rho_bt * delta {
                break (Some((sol.point, f_y)), delta);
            }
            tau *= cfg.eta;
            if tau < TAU_FLOOR {
                return Err(Error::TauUnderflow { tau });
            }
        };
        let mut record = IterationRecord {
            k,
            f,
            delta: last_delta,
            gamma: 0.0,
            backtracks: trials - 1,
            inner_iterations,
            inner_solves: trials,
            elapsed: 0.0,
        };
        let status = match &accepted {
            None => Some(SolverStatus::Stationary),
            Some(_) if k >= cfg.solver.max_iterations => Some(SolverStatus::MaxIterations),
            Some(_) if budget.is_some_and(|b| start.elapsed() >= b) => Some(SolverStatus::TimeBudget),
            Some(_) => None,
        };
        if let Some(status) = status {
            record.elapsed = start.elapsed().as_secs_f64();
            observer(&record);
            records.push(record);
            return Ok(SolverTrace {
                records,
                status,
                x,
                rho: cfg.rho_bt,
            });
        }
        let (y, f_y) = accepted.expect("status is None only after an accepted step");
        x = y;
        f = f_y;
        schedule.record_delta(last_delta);
        tau = (tau * cfg.expand).min(cfg.tau0);
        record.gamma = 1.0;
        record.elapsed = start.elapsed().as_secs_f64();
        observer(&record);
        records.push(record);
    }
    unreachable!("the outer loop only exits by returning")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdditiveCompositeOracle, Quadratic, Regularizer, SmoothFunction};
    use crate::linalg::DenseMatrix;
    use crate::solver::{check_trace, DeltaTolerance};
    use nalgebra::dvector;

    /// Objective that is infinite away from x = 1.
    struct Spike;
    impl SmoothFunction for Spike {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &DenseVector) -> f64 {
            if x[0] == 1.0 { 0.0 } else { f64::INFINITY }
        }
        fn gradient(&self, _x: &DenseVector) -> DenseVector {
            dvector![-1.0]
        }
    }

    #[test]
    fn bt_underflow_is_reported() {
        let oracle = AdditiveCompositeOracle { h: Spike, g: Regularizer::Zero };
        let set = ConstraintSet::uniform_box(1, -10.0, 10.0).unwrap();
        let cfg = ProxLinearConfig {
            solver: SolverConfig { delta_tol: DeltaTolerance::Absolute(0.0), ..Default::default() },
            ..Default::default()
        };
        let err = prox_linear_bt_solve(&oracle, &set, &dvector![1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::TauUnderflow { .. }), "{err:?}");
    }

    #[test]
    fn tiny_tau0_is_rejected() {
        let q = Quadratic::new(DenseMatrix::identity(1, 1), dvector![0.0], 0.0).unwrap();
        let oracle = AdditiveCompositeOracle { h: q, g: Regularizer::Zero };
        let set = ConstraintSet::uniform_box(1, -1.0, 1.0).unwrap();
        let cfg = ProxLinearConfig { tau0: 1e-13, ..Default::default() };
        assert!(matches!(
            prox_linear_ls_solve(&oracle, &set, &dvector![0.5], &cfg),
            Err(Error::TauUnderflow { .. })
        ));
    }

    #[test]
    fn both_variants_solve_a_box_quadratic() {
        // 1/2 |x - (2, -0.3)|^2 over [-1,1]^2, minimizer (1, -0.3)
        let q = Quadratic::new(DenseMatrix::identity(2, 2), dvector![-2.0, 0.3], 0.0).unwrap();
        let oracle = AdditiveCompositeOracle { h: q, g: Regularizer::Zero };
        let set = ConstraintSet::uniform_box(2, -1.0, 1.0).unwrap();
        let cfg = ProxLinearConfig::default();
        for trace in [
            prox_linear_ls_solve(&oracle, &set, &dvector![0.0, 0.0], &cfg).unwrap(),
            prox_linear_bt_solve(&oracle, &set, &dvector![0.0, 0.0], &cfg).unwrap(),
        ] {
            assert_eq!(trace.status, SolverStatus::Stationary);
            assert!((trace.x[0] - 1.0).abs() < 1e-6 && (trace.x[1] + 0.3).abs() < 1e-6, "{}", trace.x);
            assert!(check_trace(&trace.records, trace.rho).passed());
        }
    }
}
