//! Model based conditional gradient method with Armijo backtracking.
//!
//! Each outer iteration builds the model `m_k` anchored at `x^k`, computes
//! an approximate minimizer `y^k` of `m_k` over `C`, and moves to
//! `x^{k+1} = x^k + gamma_k (y^k - x^k)`, where `gamma_k = gamma0 delta^j`
//! is the first step satisfying
//! `f(x^{k+1}) <= f(x^k) - rho gamma_k Δ(x^k, y^k)`.
//! The run stops once the model improvement falls below the tolerance.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::{ensure_finite, DenseVector};
use crate::models::{InnerSettings, ModelInstance, ModelMinimizer, ModelOracle, WarmStart};
use crate::sets::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchParams {
    /// Sufficient decrease fraction, in (0, 1).
    pub rho: f64,
    /// Backtracking factor, in (0, 1).
    pub delta: f64,
    /// First trial step, in (0, 1].
    pub gamma0: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            rho: 0.25,
            delta: 0.5,
            gamma0: 1.0,
            max_backtracks: 60,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.rho) || !open(self.delta) || !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "line search needs rho, delta in (0,1) and gamma0 in (0,1], got {self:?}"
            )));
        }
        Ok(())
    }
}

static EXHAUSTED_SEARCHES: AtomicUsize = AtomicUsize::new(0);

/// Number of line searches in this process that ran out of backtracks.
pub fn exhausted_line_searches() -> usize {
    EXHAUSTED_SEARCHES.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub gamma: f64,
    pub backtracks: usize,
    pub f_new: f64,
}

/// Finds the smallest `j >= 0` with
/// `f(x + gamma0 delta^j (y - x)) <= f(x) - rho gamma0 delta^j Δ`.
pub fn armijo_search(
    f: &dyn Fn(&DenseVector) -> f64,
    x: &DenseVector,
    f_x: f64,
    y: &DenseVector,
    model_delta: f64,
    params: &LineSearchParams,
) -> Result<ArmijoStep> {
    params.validate()?;
    check_dim(x.len(), y.len())?;
    if !(model_delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Armijo search needs a positive model improvement, got {model_delta}"
        )));
    }
    let dir = y - x;
    let mut f_trial = f_x;
    for j in 0..=params.max_backtracks {
        let gamma = params.gamma0 * params.delta.powi(j as i32);
        f_trial = f(&(x + &dir * gamma));
        if f_trial <= f_x - params.rho * gamma * model_delta {
            return Ok(ArmijoStep {
                gamma,
                backtracks: j,
                f_new: f_trial,
            });
        }
    }
    EXHAUSTED_SEARCHES.fetch_add(1, Ordering::Relaxed);
    Err(Error::LineSearchExhausted {
        backtracks: params.max_backtracks,
        delta: model_delta,
        f_x,
        f_trial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DeltaTolerance {
    Absolute(f64),
    /// Scaled by `1 + |f(x^0)|`.
    Relative(f64),
}

impl DeltaTolerance {
    pub fn absolute(&self, f0: f64) -> f64 {
        match *self {
            DeltaTolerance::Absolute(t) => t,
            DeltaTolerance::Relative(t) => t * (1.0 + f0.abs()),
        }
    }
}

/// Accuracy schedule `eps^k` for approximate model minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerSchedule {
    /// `eps^k = max(floor, min(eps^{k-1}, eps0 (k+1)^-power, fraction Δ^{k-1}))`.
    /// `eps0` defaults to `fraction` times an upper estimate of `Δ^0`.
    Decaying {
        initial: Option<f64>,
        power: f64,
        floor: f64,
        fraction: f64,
    },
    /// Fixed iteration budget `base + per_iteration * k`, no accuracy target.
    FixedBudget {
        base_iterations: usize,
        per_iteration: usize,
    },
}

impl Default for InnerSchedule {
    fn default() -> Self {
        InnerSchedule::Decaying {
            initial: None,
            power: 1.5,
            floor: 1e-12,
            fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub delta_tol: DeltaTolerance,
    pub schedule: InnerSchedule,
    /// Iteration cap of a single inner solve (decaying schedule).
    pub inner_max_iterations: usize,
    /// Wall-clock budget in seconds.
    pub time_budget: Option<f64>,
    /// Check `x^k in C` after every step.
    pub check_feasibility: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            delta_tol: DeltaTolerance::Relative(1e-8),
            schedule: InnerSchedule::default(),
            inner_max_iterations: 20_000,
            time_budget: None,
            check_feasibility: cfg!(debug_assertions),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let InnerSchedule::Decaying {
            initial,
            power,
            floor,
            fraction,
        } = self.schedule
        {
            if initial.is_some_and(|e| !(e > 0.0)) || !(power >= 0.0) || !(floor > 0.0) || !(fraction > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "inner schedule must be positive and non-increasing: {:?}",
                    self.schedule
                )));
            }
        }
        let tol = match self.delta_tol {
            DeltaTolerance::Absolute(t) | DeltaTolerance::Relative(t) => t,
        };
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta tolerance {tol}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `f(x^k)`
    pub f: f64,
    /// `Δ(x^k, y^k)`
    pub delta: f64,
    /// Accepted step; zero on the terminal record.
    pub gamma: f64,
    pub backtracks: usize,
    pub inner_iterations: usize,
    /// Model minimizations performed in this outer iteration.
    pub inner_solves: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Stationary,
    MaxIterations,
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolverStatus,
    pub x: DenseVector,
    /// Sufficient decrease constant the trace was produced with.
    pub rho: f64,
}

impl SolverTrace {
    pub fn f_final(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.f)
    }

    pub fn best_f(&self) -> f64 {
        self.records.iter().map(|r| r.f).fold(f64::INFINITY, f64::min)
    }

    pub fn final_delta(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.delta)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_inner_solves(&self) -> usize {
        self.records.iter().map(|r| r.inner_solves).sum()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn elapsed(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed)
    }
}

/// Tracks `eps^k` across outer iterations.
pub(crate) struct Schedule {
    kind: InnerSchedule,
    cap: usize,
    eps0: Option<f64>,
    eps_prev: f64,
    last_delta: f64,
}

impl Schedule {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        let eps0 = match cfg.schedule {
            InnerSchedule::Decaying { initial, .. } => initial,
            InnerSchedule::FixedBudget { .. } => None,
        };
        Self {
            kind: cfg.schedule,
            cap: cfg.inner_max_iterations,
            eps0,
            eps_prev: f64::INFINITY,
            last_delta: f64::INFINITY,
        }
    }

    /// Solves the model with the accuracy of outer iteration `k`.
    pub(crate) fn solve(
        &mut self,
        k: usize,
        model: &ModelInstance,
        set: &ConstraintSet,
        warm: &mut WarmStart,
    ) -> Result<ModelMinimizer> {
        match self.kind {
            InnerSchedule::FixedBudget {
                base_iterations,
                per_iteration,
            } => model.minimize(
                set,
                &InnerSettings {
                    tolerance: 0.0,
                    max_iterations: base_iterations + per_iteration * k,
                },
                warm,
            ),
            InnerSchedule::Decaying {
                power,
                floor,
                fraction,
                ..
            } => {
                let mut probe_iters = 0;
                if self.eps0.is_none() {
                    // upper estimate of the initial model improvement from a short probe
                    let probe = model.minimize(
                        set,
                        &InnerSettings {
                            tolerance: 0.0,
                            max_iterations: self.cap.min(50),
                        },
                        warm,
                    )?;
                    probe_iters = probe.inner_iterations;
                    let upper = model.eval(model.anchor()) - (probe.value - probe.accuracy);
                    self.eps0 = Some((fraction * upper).max(floor));
                    if probe.converged && probe.accuracy == 0.0 {
                        return Ok(probe);
                    }
                }
                let scheduled = self.eps0.unwrap_or(floor) * ((k + 1) as f64).powf(-power);
                let eps = scheduled
                    .min(self.eps_prev)
                    .min(fraction * self.last_delta)
                    .max(floor);
                self.eps_prev = eps;
                let mut sol = model.minimize(
                    set,
                    &InnerSettings {
                        tolerance: eps,
                        max_iterations: self.cap,
                    },
                    warm,
                )?;
                sol.inner_iterations += probe_iters;
                Ok(sol)
            }
        }
    }

    /// Solves at the scheduled accuracy, then keeps tightening it tenfold
    /// while the measured improvement is below the certified accuracy, so a
    /// loose solve cannot masquerade as stationarity.
    pub(crate) fn solve_checked(
        &mut self,
        k: usize,
        model: &ModelInstance,
        set: &ConstraintSet,
        warm: &mut WarmStart,
        tol: f64,
    ) -> Result<(ModelMinimizer, f64, usize)> {
        let mut sol = self.solve(k, model, set, warm)?;
        let mut iterations = sol.inner_iterations;
        let mut delta = model.improvement(&sol.point);
        if matches!(self.kind, InnerSchedule::FixedBudget { .. }) {
            return Ok((sol, delta, iterations));
        }
        while sol.accuracy > tol && delta < sol.accuracy {
            let eps = (0.1 * sol.accuracy).max(tol);
            self.eps_prev = self.eps_prev.min(eps);
            sol = model.minimize(
                set,
                &InnerSettings {
                    tolerance: eps,
                    max_iterations: self.cap,
                },
                warm,
            )?;
            iterations += sol.inner_iterations;
            delta = model.improvement(&sol.point);
            if !sol.converged {
                break;
            }
        }
        Ok((sol, delta, iterations))
    }

    pub(crate) fn record_delta(&mut self, delta: f64) {
        self.last_delta = delta;
    }
}

pub(crate) fn prepare_start(set: &ConstraintSet, x0: &DenseVector) -> Result<DenseVector> {
    check_dim(set.dim(), x0.len())?;
    ensure_finite(x0, "initial point")?;
    if set.contains(x0, 1e-12) {
        Ok(x0.clone())
    } else {
        set.project(x0)
    }
}

/// Runs the conditional gradient method on the models produced by
/// `oracle`. See [`mcgm_solve_with`] for a per-iteration observer.
pub fn mcgm_solve(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    ls: &LineSearchParams,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    mcgm_solve_with(oracle, set, x0, ls, cfg, &mut |_| {})
}

pub fn mcgm_solve_with(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    ls: &LineSearchParams,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverTrace> {
    run_model_descent(oracle, set, x0, ls, cfg, &|m| Ok(m), observer)
}

/// Shared outer loop; `shape` post-processes each model (the identity for
/// the conditional gradient method, a proximal term for prox-linear search).
pub(crate) fn run_model_descent(
    oracle: &dyn ModelOracle,
    set: &ConstraintSet,
    x0: &DenseVector,
    ls: &LineSearchParams,
    cfg: &SolverConfig,
    shape: &dyn Fn(ModelInstance) -> Result<ModelInstance>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverTrace> {
    ls.validate()?;
    cfg.validate()?;
    check_dim(set.dim(), oracle.dim())?;
    let start = Instant::now();
    let budget = cfg.time_budget.map(Duration::from_secs_f64);
    let mut x = prepare_start(set, x0)?;
    let mut f = oracle.objective(&x);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the initial point"));
    }
    let tol = cfg.delta_tol.absolute(f);
    let objective = |z: &DenseVector| oracle.objective(z);
    let mut warm = WarmStart::default();
    let mut schedule = Schedule::new(cfg);
    let mut records = Vec::new();

    for k in 0.. {
        let model = shape(oracle.model_at(&x)?)?;
        let (sol, delta, inner_iterations) = schedule.solve_checked(k, &model, set, &mut warm, tol)?;
        let mut record = IterationRecord {
            k,
            f,
            delta,
            gamma: 0.0,
            backtracks: 0,
            inner_iterations,
            inner_solves: 1,
            elapsed: 0.0,
        };
        let status = if delta <= tol {
            Some(SolverStatus::Stationary)
        } else if k >= cfg.max_iterations {
            Some(SolverStatus::MaxIterations)
        } else if budget.is_some_and(|b| start.elapsed() >= b) {
            Some(SolverStatus::TimeBudget)
        } else {
            None
        };
        if let Some(status) = status {
            record.elapsed = start.elapsed().as_secs_f64();
            observer(&record);
            records.push(record);
            return Ok(SolverTrace {
                records,
                status,
                x,
                rho: ls.rho,
            });
        }
        let step = armijo_search(&objective, &x, f, &sol.point, delta, ls)?;
        x = &x + (&sol.point - &x) * step.gamma;
        f = step.f_new;
        if cfg.check_feasibility && !set.contains(&x, 1e-9) {
            return Err(Error::OutsideSet);
        }
        schedule.record_delta(delta);
        record.gamma = step.gamma;
        record.backtracks = step.backtracks;
        record.elapsed = start.elapsed().as_secs_f64();
        observer(&record);
        records.push(record);
    }
    unreachable!("the outer loop only exits by returning")
}

/// `Δ(x, y*)` for an `eps`-approximate model minimizer `y*`; a value below
/// `eps` certifies approximate stationarity.
pub fn stationarity_measure(
    oracle: &dyn ModelOracle,
    x: &DenseVector,
    set: &ConstraintSet,
    eps: f64,
) -> Result<f64> {
    let m = oracle.model_at(x)?;
    let sol = m.minimize(
        set,
        &InnerSettings {
            tolerance: eps,
            max_iterations: 200_000,
        },
        &mut WarmStart::default(),
    )?;
    Ok(m.improvement(&sol.point))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub passed: bool,
    /// Largest `min_{i<=k} Δ^i / bound_k` over `k`.
    pub tightest_ratio: f64,
    pub first_failure: Option<usize>,
}

/// Checks `min_{i<=k} Δ^i <= (f(x^0) - f_lower) / (rho sum_{i<=k} gamma^i)`
/// at every `k`, with relative slack `1e-9`.
pub fn rate_certificate(records: &[IterationRecord], rho: f64, f_lower: f64) -> CertificateReport {
    let Some(first) = records.first() else {
        return CertificateReport {
            passed: true,
            tightest_ratio: 0.0,
            first_failure: None,
        };
    };
    let numerator = first.f - f_lower;
    let mut min_delta = f64::INFINITY;
    let mut gamma_sum = 0.0;
    let mut tightest = f64::NEG_INFINITY;
    let mut first_failure = None;
    for (k, r) in records.iter().enumerate() {
        min_delta = min_delta.min(r.delta);
        gamma_sum += r.gamma;
        let bound = if gamma_sum > 0.0 {
            numerator / (rho * gamma_sum)
        } else {
            f64::INFINITY
        };
        if bound.is_finite() {
            let ratio = if bound > 0.0 { min_delta / bound } else if min_delta <= 0.0 { 0.0 } else { f64::INFINITY };
            tightest = tightest.max(ratio);
        }
        let ok = min_delta <= bound + 1e-9 * bound.abs().max(min_delta.abs()).max(1.0);
        if !ok && first_failure.is_none() {
            first_failure = Some(k);
        }
    }
    CertificateReport {
        passed: first_failure.is_none(),
        tightest_ratio: if tightest.is_finite() { tightest } else { 0.0 },
        first_failure,
    }
}

/// Machine-checkable trace invariants: sufficient decrease between every
/// consecutive pair of records, positive improvement on accepted steps and
/// a status consistent with the terminal record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCheck {
    pub monotone: bool,
    pub sufficient_decrease: bool,
    pub positive_steps: bool,
    pub violations: Vec<usize>,
}

impl TraceCheck {
    pub fn passed(&self) -> bool {
        self.monotone && self.sufficient_decrease && self.positive_steps
    }
}

pub fn check_trace(records: &[IterationRecord], rho: f64) -> TraceCheck {
    let mut out = TraceCheck {
        monotone: true,
        sufficient_decrease: true,
        positive_steps: true,
        violations: Vec::new(),
    };
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut bad = false;
        if b.f > a.f {
            out.monotone = false;
            bad = true;
        }
        if b.f > a.f - rho * a.gamma * a.delta {
            out.sufficient_decrease = false;
            bad = true;
        }
        if !(a.delta > 0.0 && a.gamma > 0.0) {
            out.positive_steps = false;
            bad = true;
        }
        if bad {
            out.violations.push(a.k);
        }
    }
    out
}
