//! Solution documents and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use ftgp_core::ftc::{schedule_by_name, FtcSolution, ProblemKind};
use ftgp_core::gp::SolveReport;
use ftgp_core::pdm::CaseStudy;
use ftgp_core::posy::VariableRegistry;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub status: String,
    pub objective_value: f64,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub newton_iterations: usize,
    pub phase1_iterations: usize,
    pub barrier_stages: usize,
    pub message: String,
    pub theta_star: BTreeMap<String, f64>,
    pub z_star: BTreeMap<String, f64>,
}

impl ReportDocument {
    pub fn new(report: &SolveReport, registry: &VariableRegistry) -> Self {
        let names = |values: &[f64]| -> BTreeMap<String, f64> {
            registry.iter().map(|(_, v)| v.name.clone()).zip(values.iter().copied()).collect()
        };
        Self {
            status: report.status.as_str().to_string(),
            objective_value: report.objective_value,
            max_constraint_violation: report.max_constraint_violation,
            kkt_residual: report.kkt_residual,
            duality_gap: report.duality_gap,
            newton_iterations: report.newton_iterations,
            phase1_iterations: report.phase1_iterations,
            barrier_stages: report.barrier_stages,
            message: report.message.clone(),
            theta_star: names(&report.theta_star),
            z_star: names(&report.z_star),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub status: String,
    pub kind: String,
    pub objective: f64,
    pub offset: f64,
    pub performance: f64,
    pub cost: f64,
    pub schedule: BTreeMap<String, f64>,
    /// `eps - ell(k)' x(k)` for `k = 1..T`.
    pub fts_margins: Vec<f64>,
    pub fts_pass: bool,
    pub trajectory: Vec<Vec<f64>>,
    pub solver: ReportDocument,
}

impl SolutionDocument {
    pub fn new(sol: &FtcSolution, kind: ProblemKind, model_registry: &VariableRegistry, program_registry: &VariableRegistry) -> Self {
        Self {
            status: sol.report.status.as_str().to_string(),
            kind: kind.as_str().to_string(),
            objective: sol.objective,
            offset: sol.offset,
            performance: sol.performance,
            cost: sol.cost,
            schedule: schedule_by_name(model_registry, &sol.schedule).into_iter().collect(),
            fts_margins: sol.fts_margins.clone(),
            fts_pass: sol.fts_pass,
            trajectory: sol.trajectory.states.clone(),
            solver: ReportDocument::new(&sol.report, program_registry),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<const N: usize>(dir: &Path, name: &str, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `trajectory.csv` (k, state, value) and `margins.csv` (k, margin).
pub fn write_solution_data(dir: &Path, sol: &FtcSolution) -> Result<()> {
    write_csv(
        dir,
        "trajectory.csv",
        ["k", "state", "value"],
        sol.trajectory.states.iter().enumerate().flat_map(|(k, x)| {
            x.iter().enumerate().map(move |(i, v)| [k.to_string(), (i + 1).to_string(), v.to_string()])
        }),
    )?;
    write_csv(
        dir,
        "margins.csv",
        ["k", "margin"],
        sol.fts_margins.iter().enumerate().map(|(k, m)| [(k + 1).to_string(), m.to_string()]),
    )
}

/// `fig1.csv`, `fig2.csv` and `fig3.csv`.
pub fn write_figures(dir: &Path, cs: &CaseStudy) -> Result<()> {
    write_csv(
        dir,
        "fig1.csv",
        ["k", "series", "log_x"],
        cs.fig1.iter().map(|r| [r.k.to_string(), r.series.clone(), r.log_x.to_string()]),
    )?;
    write_csv(
        dir,
        "fig2.csv",
        ["k", "task", "phi", "cost"],
        cs.fig2.iter().map(|r| [r.k.to_string(), r.task.clone(), r.phi.to_string(), r.cost.to_string()]),
    )?;
    write_csv(
        dir,
        "fig3.csv",
        ["k", "i", "j", "gamma", "cost"],
        cs.fig3
            .iter()
            .map(|r| [r.k.to_string(), r.i.to_string(), r.j.to_string(), r.gamma.to_string(), r.cost.to_string()]),
    )
}

/// Reads a schedule from a solution document or a bare `{name: value}` object.
pub fn read_schedule(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let map = match value.get("schedule") {
        Some(s) => s.clone(),
        None => value,
    };
    serde_json::from_value(map).map_err(|e| anyhow!("{}: schedule must map names to numbers ({e})", path.display()))
}
