//! Product-development case study: resource allocation over investment
//! rounds for an automotive appearance design process.
//!
//! The remaining work of ten development tasks evolves as `x(k) = A_k x(k-1)`
//! where `A_k` is the work transition matrix. Managers scale the diagonal
//! entries (task efficiency `phi`) per round and the off-diagonal entries
//! (transferred work `gamma`) cumulatively across rounds. Each scaling below
//! one costs `c (s^-p - Omega^-p)`.

use std::io::Read;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftc::{
    BudgetSpec, FtcProblem, FtcSolution, FtsMode, FtsSpec, NormOrder, PerformanceSpec, ProblemKind, StateRoute,
};
use crate::gp::SolverOptions;
use crate::posy::{Monomial, Posynomial, VarId, VariableRegistry};
use crate::system::{Gain, SystemModel};

const TABLE1: &str = include_str!("../data/table1.csv");

pub const TASKS: [&str; 10] = [
    "carpet",
    "center console",
    "door trim panel",
    "garnish trim",
    "overhead system",
    "instrument panel",
    "luggage trim",
    "package tray",
    "seats",
    "steering wheel",
];

/// Baseline work transition matrix (row-major) with task names.
#[derive(Debug, Clone, PartialEq)]
pub struct WtmBaseline {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl WtmBaseline {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Leading `m x m` block.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        let n = self.n();
        if m == 0 || m > n {
            return Err(Error::Table(format!("cannot truncate {n} tasks to {m}")));
        }
        Ok(Self {
            names: self.names[..m].to_vec(),
            values: (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect(),
        })
    }

    /// Number of off-diagonal entries that can be tuned.
    pub fn coupling_count(&self) -> usize {
        let n = self.n();
        (0..n * n).filter(|&idx| idx / n != idx % n && self.values[idx] > 0.0).count()
    }
}

/// The matrix bundled with the crate.
pub fn bundled_wtm() -> WtmBaseline {
    load_wtm(TABLE1.as_bytes()).expect("bundled table is valid")
}

/// Reads a 10 x 10 comma-separated table without header; blank cells are 0.
pub fn load_wtm(source: impl Read) -> Result<WtmBaseline> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut values = Vec::with_capacity(100);
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Table(e.to_string()))?;
        if record.len() != TASKS.len() {
            return Err(Error::Table(format!("row {} has {} columns, expected 10", r + 1, record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let v = if cell.is_empty() {
                0.0
            } else {
                cell.parse::<f64>()
                    .map_err(|_| Error::Table(format!("cell ({}, {}) is not a number: `{cell}`", r + 1, c + 1)))?
            };
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Table(format!("cell ({}, {}) = {v} outside [0, 1]", r + 1, c + 1)));
            }
            if r == c && v <= 0.0 {
                return Err(Error::Table(format!("diagonal cell ({}, {}) must be positive", r + 1, c + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != TASKS.len() {
        return Err(Error::Table(format!("{rows} rows, expected 10")));
    }
    Ok(WtmBaseline {
        names: TASKS.iter().map(|s| s.to_string()).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdmMode {
    #[default]
    Fixed,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdmConfig {
    /// Investment rounds `T`.
    pub rounds: usize,
    /// Leading tasks of the table to keep.
    pub tasks: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Diagonal disturbances; zeros when absent.
    pub delta: Option<Vec<f64>>,
    /// Draw `delta` uniformly from `[-delta_range, delta_range]` with this seed.
    pub delta_seed: Option<u64>,
    pub delta_range: f64,
    pub cost_c: f64,
    pub cost_p: f64,
    pub cost_omega: f64,
    /// Bound on the final remaining work as a fraction of the initial work.
    pub jbar_fraction: f64,
    pub epsilon: f64,
    /// Initial remaining work; all ones when absent.
    pub x0: Option<Vec<f64>>,
    pub margin: f64,
    pub mode: PdmMode,
}

impl Default for PdmConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            tasks: 10,
            s_min: 0.1,
            s_max: 1.0,
            delta: None,
            delta_seed: None,
            delta_range: 0.2,
            cost_c: 1.0,
            cost_p: 1.0,
            cost_omega: 1.0,
            jbar_fraction: 0.001,
            epsilon: 1.0,
            x0: None,
            margin: 1e-9,
            mode: PdmMode::Fixed,
        }
    }
}

impl PdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max && self.s_max.is_finite()) {
            return bad(format!("scaling bounds [{}, {}] invalid", self.s_min, self.s_max));
        }
        if !(self.cost_c > 0.0 && self.cost_p > 0.0 && self.cost_c.is_finite() && self.cost_p.is_finite()) {
            return bad("cost_c and cost_p must be positive".into());
        }
        if !(self.cost_omega >= self.s_max && self.cost_omega.is_finite()) {
            return bad(format!("cost_omega {} must be >= s_max {}", self.cost_omega, self.s_max));
        }
        if !(self.jbar_fraction > 0.0 && self.jbar_fraction.is_finite()) {
            return bad("jbar_fraction must be positive".into());
        }
        if !(self.delta_range >= 0.0 && self.delta_range.is_finite()) {
            return bad("delta_range must be nonnegative".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.tasks || x0.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!("x0 must hold {} positive entries", self.tasks));
            }
        }
        if let Some(d) = &self.delta {
            if d.len() != self.tasks || d.iter().any(|v| !v.is_finite()) {
                return bad(format!("delta must hold {} finite entries", self.tasks));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![1.0; self.tasks])
    }

    /// Effective disturbance vector.
    pub fn disturbance(&self) -> Vec<f64> {
        if let Some(seed) = self.delta_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = self.delta_range;
            return (0..self.tasks)
                .map(|_| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 })
                .collect();
        }
        self.delta.clone().unwrap_or_else(|| vec![0.0; self.tasks])
    }

    pub fn performance_bound(&self) -> f64 {
        self.jbar_fraction * self.initial_state().iter().sum::<f64>()
    }

    /// `ell(k) = exp(-k) x0`.
    pub fn fts_spec(&self) -> FtsSpec {
        let x0 = self.initial_state();
        FtsSpec {
            epsilon: self.epsilon,
            ell: (1..=self.rounds)
                .map(|k| x0.iter().map(|x| (-(k as f64)).exp() * x).collect())
                .collect(),
            mode: match self.mode {
                PdmMode::Fixed => FtsMode::Fixed,
                PdmMode::Robust => FtsMode::Robust { v: vec![1.0; self.tasks] },
            },
            x0,
            margin: self.margin,
        }
    }

    fn net_cost(&self, s: f64) -> f64 {
        self.cost_c * (s.powf(-self.cost_p) - self.cost_omega.powf(-self.cost_p))
    }
}

pub fn phi_name(i: usize, k: usize) -> String {
    format!("phi_{}_{}", i + 1, k)
}

pub fn gamma_name(i: usize, j: usize, k: usize) -> String {
    format!("gamma_{}_{}_{}", i + 1, j + 1, k)
}

fn fetch(registry: &VariableRegistry, name: &str) -> VarId {
    registry.get(name).expect("variable registered by the builder")
}

/// The registry holds `phi_{i}_{k}` for every task and `gamma_{i}_{j}_{k}`
/// for every nonzero off-diagonal entry, rounds `k = 1..T`. Round `k` is
/// the step `x(k-1) -> x(k)`: its diagonal is `(base_ii + delta_i) phi_{i,k}`
/// and its off-diagonal `base_ij gamma_{ij,1} ... gamma_{ij,k}`.
pub fn build_pdm_model(base: &WtmBaseline, cfg: &PdmConfig) -> Result<SystemModel> {
    cfg.validate()?;
    let n = base.n();
    if n != cfg.tasks {
        return Err(Error::InvalidSpec(format!("table has {n} tasks, config expects {}", cfg.tasks)));
    }
    let delta = cfg.disturbance();
    let diag: Vec<f64> = (0..n).map(|i| base.get(i, i) + delta[i]).collect();
    if let Some(i) = diag.iter().position(|&d| d < 0.0) {
        return Err(Error::InvalidModel(format!(
            "disturbance {} makes the efficiency of task {} negative",
            delta[i],
            i + 1
        )));
    }
    let mut registry = VariableRegistry::new();
    for k in 1..=cfg.rounds {
        for i in 0..n {
            registry.add_with_round(&phi_name(i, k), cfg.s_min, cfg.s_max, Some(k - 1))?;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && base.get(i, j) > 0.0 {
                    registry.add_with_round(&gamma_name(i, j, k), cfg.s_min, cfg.s_max, Some(k - 1))?;
                }
            }
        }
    }
    let mut gains = Vec::with_capacity(cfg.rounds);
    for k in 1..=cfg.rounds {
        let mut grid = vec![Gain::Absent; n * n];
        for i in 0..n {
            for j in 0..n {
                let g = if i == j {
                    if diag[i] == 0.0 {
                        continue;
                    }
                    Monomial::new(diag[i], [(fetch(&registry, &phi_name(i, k)), 1.0)])?
                } else {
                    let b = base.get(i, j);
                    if b == 0.0 {
                        continue;
                    }
                    Monomial::new(b, (1..=k).map(|l| (fetch(&registry, &gamma_name(i, j, l)), 1.0)))?
                };
                grid[i * n + j] = Gain::Posy(g.into());
            }
        }
        gains.push(grid);
    }
    SystemModel::new(n, vec![vec![0.0; n * n]; cfg.rounds], gains, registry)
}

/// `sum c s^-p` over every decision variable, with offset `-sum c Omega^-p`.
/// The bound is the performance cap `Jbar`.
pub fn build_pdm_cost(model: &SystemModel, cfg: &PdmConfig) -> Result<BudgetSpec> {
    cfg.validate()?;
    let terms = model
        .registry()
        .iter()
        .map(|(id, _)| Monomial::new(cfg.cost_c, [(id, -cfg.cost_p)]))
        .collect::<Result<Vec<_>>>()?;
    let count = terms.len() as f64;
    Ok(BudgetSpec {
        cost: Posynomial::from_terms(terms)?,
        offset: -count * cfg.cost_c * cfg.cost_omega.powf(-cfg.cost_p),
        bound: cfg.performance_bound(),
    })
}

/// The performance-constrained problem of the case study.
pub fn build_case_problem(base: &WtmBaseline, cfg: &PdmConfig, route: StateRoute) -> Result<FtcProblem> {
    let base = if base.n() == cfg.tasks { base.clone() } else { base.truncate(cfg.tasks)? };
    let model = Arc::new(build_pdm_model(&base, cfg)?);
    let budget = build_pdm_cost(&model, cfg)?;
    Ok(FtcProblem {
        fts: cfg.fts_spec(),
        performance: PerformanceSpec {
            order: NormOrder::Finite(1),
            times: vec![cfg.rounds],
            weights: vec![1.0; cfg.tasks],
        },
        budget,
        kind: ProblemKind::Performance,
        route,
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Row {
    pub k: usize,
    /// Task name, `mean` for `log(mean_i x_i(k))` or `fts_bound` for the
    /// finite-time line on the mean.
    pub series: String,
    pub log_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Row {
    pub k: usize,
    pub task: String,
    pub phi: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Row {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub config: PdmConfig,
    pub names: Vec<String>,
    pub problem: FtcProblem,
    pub solution: FtcSolution,
    pub fig1: Vec<Fig1Row>,
    pub fig2: Vec<Fig2Row>,
    pub fig3: Vec<Fig3Row>,
}

pub fn run_case_study(cfg: &PdmConfig, opts: &SolverOptions) -> Result<CaseStudy> {
    run_case_study_with(&bundled_wtm(), cfg, opts, StateRoute::default())
}

pub fn run_case_study_with(
    base: &WtmBaseline,
    cfg: &PdmConfig,
    opts: &SolverOptions,
    route: StateRoute,
) -> Result<CaseStudy> {
    let problem = build_case_problem(base, cfg, route)?;
    let solution = problem.solve(opts)?;
    let names: Vec<String> = base.names[..cfg.tasks].to_vec();
    let (fig1, fig2, fig3) = figure_rows(&problem, &solution.schedule, &names, cfg)?;
    Ok(CaseStudy {
        config: cfg.clone(),
        names,
        problem,
        solution,
        fig1,
        fig2,
        fig3,
    })
}

/// Plot data for a schedule of the case-study model.
pub fn figure_rows(
    problem: &FtcProblem,
    schedule: &[f64],
    names: &[String],
    cfg: &PdmConfig,
) -> Result<(Vec<Fig1Row>, Vec<Fig2Row>, Vec<Fig3Row>)> {
    let model = &problem.model;
    let n = model.n();
    let traj = model.propagate_numeric(schedule, &problem.fts.x0)?;
    let mut fig1 = Vec::new();
    for (k, x) in traj.states.iter().enumerate() {
        for (name, v) in names.iter().zip(x) {
            fig1.push(Fig1Row { k, series: name.clone(), log_x: v.ln() });
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        fig1.push(Fig1Row { k, series: "mean".into(), log_x: mean.ln() });
        if k >= 1 {
            let ell_sum: f64 = problem.fts.ell[k - 1].iter().sum();
            fig1.push(Fig1Row { k, series: "fts_bound".into(), log_x: (problem.fts.epsilon / ell_sum).ln() });
        }
    }
    let reg = model.registry();
    let mut fig2 = Vec::new();
    let mut fig3 = Vec::new();
    for k in 1..=cfg.rounds {
        for (i, name) in names.iter().enumerate() {
            let phi = schedule[fetch(reg, &phi_name(i, k)).0];
            fig2.push(Fig2Row { k, task: name.clone(), phi, cost: cfg.net_cost(phi) });
        }
        for i in 0..n {
            for j in 0..n {
                if let Some(id) = reg.get(&gamma_name(i, j, k)) {
                    let gamma = schedule[id.0];
                    fig3.push(Fig3Row { k, i: i + 1, j: j + 1, gamma, cost: cfg.net_cost(gamma) });
                }
            }
        }
    }
    Ok((fig1, fig2, fig3))
}
