//! Runs the conditional gradient method and the two prox-linear methods on
//! one regression dataset and writes their traces.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{prox_linear_bt_solve, prox_linear_ls_solve, ProxLinearConfig};
use crate::harness::io::{write_json, write_trace_csv};
use crate::harness::regression::{RegressionDataset, RegressionProblem};
use crate::linalg::DenseVector;
use crate::solver::{
    check_trace, mcgm_solve, rate_certificate, LineSearchParams, SolverConfig, SolverStatus, SolverTrace,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mcgm,
    ProxlinLs,
    ProxlinBt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mcgm, Method::ProxlinLs, Method::ProxlinBt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mcgm => "mcgm",
            Method::ProxlinLs => "proxlin_ls",
            Method::ProxlinBt => "proxlin_bt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSettings {
    pub ls: LineSearchParams,
    pub solver: SolverConfig,
    pub tau0: f64,
    pub eta: f64,
    pub rho_bt: f64,
    pub expand: f64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        let p = ProxLinearConfig::default();
        Self {
            ls: LineSearchParams::default(),
            solver: SolverConfig::default(),
            tau0: p.tau0,
            eta: p.eta,
            rho_bt: p.rho_bt,
            expand: p.expand,
        }
    }
}

impl MethodSettings {
    pub fn prox(&self) -> ProxLinearConfig {
        ProxLinearConfig {
            tau0: self.tau0,
            eta: self.eta,
            rho_bt: self.rho_bt,
            expand: self.expand,
            ls: self.ls,
            solver: self.solver.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    pub settings: MethodSettings,
    /// Run the methods on separate threads; timings then interfere.
    pub parallel: bool,
    pub plot_script: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            settings: MethodSettings::default(),
            parallel: false,
            plot_script: true,
        }
    }
}

pub fn run_method(
    problem: &RegressionProblem,
    method: Method,
    x0: &DenseVector,
    settings: &MethodSettings,
) -> Result<SolverTrace> {
    match method {
        Method::Mcgm => mcgm_solve(&problem.oracle, &problem.set, x0, &settings.ls, &settings.solver),
        Method::ProxlinLs => prox_linear_ls_solve(&problem.oracle, &problem.set, x0, &settings.prox()),
        Method::ProxlinBt => prox_linear_bt_solve(&problem.oracle, &problem.set, x0, &settings.prox()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub status: SolverStatus,
    pub best_f: f64,
    pub final_delta: f64,
    pub iterations: usize,
    pub inner_solves: usize,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
    pub certificate_passed: bool,
    pub sufficient_decrease: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub f0: f64,
    pub f_lower: f64,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub traces: Vec<(Method, SolverTrace)>,
    pub summary: ComparisonSummary,
}

impl Comparison {
    pub fn trace(&self, method: Method) -> Option<&SolverTrace> {
        self.traces.iter().find(|(m, _)| *m == method).map(|(_, t)| t)
    }
}

/// Runs every requested method from the box midpoint. The objective error
/// of each trace is measured against the best value found by any method.
pub fn run_comparison(data: &RegressionDataset, cfg: &CompareConfig) -> Result<Comparison> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    let problem = RegressionProblem::new(data)?;
    let x0 = problem.default_start();
    let runs: Vec<Result<SolverTrace>> = if cfg.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = cfg
                .methods
                .iter()
                .map(|&m| {
                    let (problem, x0) = (&problem, &x0);
                    s.spawn(move || run_method(problem, m, x0, &cfg.settings))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect()
        })
    } else {
        cfg.methods
            .iter()
            .map(|&m| run_method(&problem, m, &x0, &cfg.settings))
            .collect()
    };
    let traces = cfg
        .methods
        .iter()
        .copied()
        .zip(runs)
        .map(|(m, r)| r.map(|t| (m, t)))
        .collect::<Result<Vec<_>>>()?;
    let f_lower = traces
        .iter()
        .map(|(_, t)| t.best_f())
        .fold(f64::INFINITY, f64::min);
    let f0 = traces[0].1.records[0].f;
    let methods = traces
        .iter()
        .map(|(m, t)| MethodSummary {
            method: *m,
            status: t.status,
            best_f: t.best_f(),
            final_delta: t.final_delta(),
            iterations: t.iterations(),
            inner_solves: t.total_inner_solves(),
            inner_iterations: t.total_inner_iterations(),
            wall_time_s: t.elapsed(),
            certificate_passed: rate_certificate(&t.records, t.rho, f_lower).passed,
            sufficient_decrease: check_trace(&t.records, t.rho).passed(),
        })
        .collect();
    Ok(Comparison {
        traces,
        summary: ComparisonSummary { f0, f_lower, methods },
    })
}

/// Writes `<method>.csv` per method, `summary.json` and optionally
/// `plot.py` into `dir`.
pub fn write_comparison(cmp: &Comparison, dir: &Path, plot_script: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (m, t) in &cmp.traces {
        write_trace_csv(&dir.join(format!("{m}.csv")), &t.records, cmp.summary.f_lower)?;
    }
    write_json(&dir.join("summary.json"), &cmp.summary)?;
    if plot_script {
        let names: Vec<String> = cmp.traces.iter().map(|(m, _)| format!("\"{m}\"")).collect();
        fs::write(dir.join("plot.py"), PLOT_SCRIPT.replace("@METHODS@", &names.join(", ")))?;
    }
    Ok(())
}

const PLOT_SCRIPT: &str = r#"import csv
import os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, (ax_err, ax_delta) = plt.subplots(1, 2, figsize=(11, 4))
for name in [@METHODS@]:
    with open(os.path.join(here, name + ".csv")) as fh:
        rows = list(csv.DictReader(fh))
    t = [float(r["time_s"]) for r in rows]
    err = [max(float(r["obj_err"]), 1e-16) for r in rows]
    delta = [max(float(r["delta"]), 1e-16) for r in rows]
    ax_err.semilogy(t, err, label=name)
    ax_delta.semilogy(t, delta, label=name)
ax_err.set_xlabel("time [s]")
ax_err.set_ylabel("f - f_lower")
ax_delta.set_xlabel("time [s]")
ax_delta.set_ylabel("model improvement")
ax_err.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "convergence.png"), dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("fista".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::ProxlinBt).unwrap(), "\"proxlin_bt\"");
    }
}
