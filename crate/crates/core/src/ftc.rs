//! Finite-time control problems as geometric programs.
//!
//! Two dual formulations are supported: minimizing the performance measure
//! `J` under a cost budget ([`ProblemKind::Budget`]) and minimizing the cost
//! `L` under a performance cap ([`ProblemKind::Performance`]). Both carry the
//! finite-time stability constraints `ell(k)' x(k) < eps` for `k = 1..T`,
//! realized as `ell(k)' x(k) <= eps (1 - delta)`.
//!
//! Functions of the state are posynomials in the parameters, but their
//! explicit expansion grows exponentially with the horizon. A
//! [`StateFunctional`] evaluates them through the forward recursion and
//! differentiates by a reverse sweep; it is expanded symbolically only when
//! the expansion stays small.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dual::{DualVec, Scalar};
use crate::error::{Error, Result};
use crate::gp::{self, GeometricProgram, GpFunction, LogConvexFunction, SolveReport, SolveStatus, SolverOptions};
use crate::posy::{Monomial, Posynomial, VarId, VariableRegistry};
use crate::system::{worst_case_weights, vertex_maximum, SymbolicState, SystemModel, Trajectory};

/// Name of the epigraph variable added for `p = infinity` objectives.
pub const EPIGRAPH_VAR: &str = "perf_epigraph";

#[derive(Debug, Clone, PartialEq)]
pub enum FtsMode {
    /// Constrain the single trajectory from the nominal initial state.
    Fixed,
    /// Constrain every initial state with `x0 >= 0`, `v' x0 <= 1`.
    Robust { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtsSpec {
    pub epsilon: f64,
    /// `ell[k - 1]` weights the state at step `k`.
    pub ell: Vec<Vec<f64>>,
    /// Nominal initial state; used by the performance measure in both modes.
    pub x0: Vec<f64>,
    pub mode: FtsMode,
    /// Strict-inequality margin `delta`.
    pub margin: f64,
}

impl FtsSpec {
    pub fn validate(&self, n: usize, horizon: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidSpec(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.margin >= 0.0 && self.margin < 1.0) {
            return Err(Error::InvalidSpec(format!("margin must be in [0, 1), got {}", self.margin)));
        }
        if self.ell.len() != horizon {
            return Err(Error::InvalidSpec(format!(
                "ell has {} entries, horizon is {horizon}",
                self.ell.len()
            )));
        }
        for (k, l) in self.ell.iter().enumerate() {
            if l.len() != n || l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidSpec(format!("ell({}) must be {n} positive entries", k + 1)));
            }
        }
        if self.x0.len() != n
            || self.x0.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.x0.iter().all(|&v| v == 0.0)
        {
            return Err(Error::InvalidSpec("x0 must be nonnegative, nonzero, length n".into()));
        }
        if let FtsMode::Robust { v } = &self.mode {
            if v.len() != n || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidSpec("robust ball vector v must be > 0".into()));
            }
        }
        Ok(())
    }

    fn bound(&self) -> f64 {
        self.epsilon * (1.0 - self.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    Finite(u32),
    Infinity,
}

/// `J = || (w_i x_i(k)) for k in times ||_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSpec {
    pub order: NormOrder,
    pub times: Vec<usize>,
    pub weights: Vec<f64>,
}

impl PerformanceSpec {
    /// Sum of the final state entries.
    pub fn final_sum(n: usize, horizon: usize) -> Self {
        Self {
            order: NormOrder::Finite(1),
            times: vec![horizon],
            weights: vec![1.0; n],
        }
    }

    pub fn validate(&self, n: usize, horizon: usize) -> Result<()> {
        if self.order == NormOrder::Finite(0) {
            return Err(Error::InvalidSpec("norm order must be >= 1".into()));
        }
        if self.times.is_empty() {
            return Err(Error::InvalidSpec("performance time set is empty".into()));
        }
        if let Some(&k) = self.times.iter().find(|&&k| k == 0 || k > horizon) {
            return Err(Error::InvalidSpec(format!("performance time {k} outside 1..={horizon}")));
        }
        if self.weights.len() != n || self.weights.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec("performance weights must be n positive entries".into()));
        }
        Ok(())
    }

    /// `J` along a trajectory.
    pub fn evaluate(&self, traj: &Trajectory) -> f64 {
        let vals = self
            .times
            .iter()
            .flat_map(|&k| traj.states[k].iter().zip(&self.weights).map(|(x, w)| w * x));
        match self.order {
            NormOrder::Finite(1) => vals.sum(),
            NormOrder::Finite(p) => vals.map(|v| v.powi(p as i32)).sum::<f64>().powf(1.0 / p as f64),
            NormOrder::Infinity => vals.fold(0.0, f64::max),
        }
    }
}

/// Cost `L(theta) + offset` and its bound (`Lbar` for the budget problem,
/// `Jbar` for the performance problem).
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSpec {
    pub cost: Posynomial,
    /// Constant part of the true cost that is not a posynomial.
    pub offset: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Budget,
    Performance,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Budget => "budget",
            ProblemKind::Performance => "performance",
        }
    }
}

/// How state functionals reach the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRoute {
    /// Expand symbolically when the expansion has at most `guard` terms,
    /// otherwise use the adjoint-backed black box.
    Auto { guard: usize },
    Symbolic { guard: usize },
    Adjoint,
}

impl Default for StateRoute {
    fn default() -> Self {
        StateRoute::Auto { guard: 10_000 }
    }
}

/// `coeff * (w' x(k))^power * monomial(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTerm {
    pub coeff: f64,
    pub k: usize,
    pub weights: Vec<f64>,
    pub power: u32,
    pub monomial: Option<Monomial>,
}

/// A sum of [`StateTerm`]s along the trajectory from `x0`, evaluated in
/// log-parameters.
#[derive(Debug, Clone)]
pub struct StateFunctional {
    model: Arc<SystemModel>,
    x0: Vec<f64>,
    terms: Vec<StateTerm>,
    dim: usize,
}

impl StateFunctional {
    pub fn new(model: Arc<SystemModel>, x0: Vec<f64>, terms: Vec<StateTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidSpec("state functional without terms".into()));
        }
        let mut dim = model.registry().len();
        for t in &terms {
            if !(t.coeff.is_finite() && t.coeff > 0.0) || t.power == 0 {
                return Err(Error::InvalidSpec("state term needs coeff > 0 and power >= 1".into()));
            }
            if t.k > model.horizon() || t.weights.len() != model.n() {
                return Err(Error::Shape(format!("state term at step {}", t.k)));
            }
            if let Some(&(v, _)) = t.monomial.as_ref().and_then(|m| m.exponents().last()) {
                dim = dim.max(v.0 + 1);
            }
        }
        if x0.len() != model.n() {
            return Err(Error::Shape("x0 length".into()));
        }
        Ok(Self { model, x0, terms, dim })
    }

    pub fn terms(&self) -> &[StateTerm] {
        &self.terms
    }

    fn log_value_grad_generic<S: Scalar>(&self, z: &[S]) -> (S, Vec<S>) {
        let fw = self.model.forward(&z[..self.model.registry().len()], &self.x0);
        let mut ys = Vec::with_capacity(self.terms.len());
        let mut grads = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut g = vec![S::cst(0.0); self.dim];
            let v = self.model.reverse(&fw, t.k, &t.weights, &mut g);
            let p = t.power as f64;
            let inv = S::cst(1.0) / v;
            for gi in g.iter_mut() {
                *gi = (*gi * inv).scale(p);
            }
            let mut y = v.ln().scale(p) + S::cst(t.coeff.ln());
            if let Some(m) = &t.monomial {
                y += S::cst(m.coeff().ln());
                for &(id, a) in m.exponents() {
                    y += z[id.0].scale(a);
                    g[id.0] += S::cst(a);
                }
            }
            ys.push(y);
            grads.push(g);
        }
        if ys.len() == 1 {
            return (ys.pop().unwrap(), grads.pop().unwrap());
        }
        let shift = ys.iter().map(|y| y.re()).fold(f64::NEG_INFINITY, f64::max);
        let ws: Vec<S> = ys.iter().map(|&y| (y - S::cst(shift)).exp()).collect();
        let mut total = S::cst(0.0);
        for &w in &ws {
            total += w;
        }
        let inv = S::cst(1.0) / total;
        let mut grad = vec![S::cst(0.0); self.dim];
        for (w, g) in ws.iter().zip(&grads) {
            let wn = *w * inv;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += wn * *gi;
            }
        }
        (total.ln() + S::cst(shift), grad)
    }

    /// Explicit posynomial, or [`Error::Blowup`] past `guard` terms.
    pub fn expand(&self, guard: usize) -> Result<Posynomial> {
        let sym = self.model.propagate_symbolic(&self.x0, guard)?;
        self.expand_from(&sym)
    }

    fn expand_from(&self, sym: &SymbolicState) -> Result<Posynomial> {
        let mut acc: Option<Posynomial> = None;
        for t in &self.terms {
            let mut lin: Option<Posynomial> = None;
            for (xi, &w) in sym[t.k].iter().zip(&t.weights) {
                let Some(xi) = xi else { continue };
                if w == 0.0 {
                    continue;
                }
                let s = xi.scale(w)?;
                lin = Some(match lin {
                    None => s,
                    Some(l) => l.add(&s),
                });
            }
            let lin = lin.ok_or(Error::DeadState { k: t.k })?;
            let mut term = lin.pow(t.power)?.scale(t.coeff)?;
            if let Some(m) = &t.monomial {
                term = term.mul_monomial(m);
            }
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term),
            });
        }
        acc.ok_or(Error::EmptyPosynomial)
    }
}

impl LogConvexFunction for StateFunctional {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_value(&self, z: &[f64]) -> f64 {
        let fw = self.model.forward(&z[..self.model.registry().len()], &self.x0);
        let ys: Vec<f64> = self
            .terms
            .iter()
            .map(|t| {
                let v: f64 = fw.states[t.k].iter().zip(&t.weights).map(|(x, w)| x * w).sum();
                let mut y = t.coeff.ln() + t.power as f64 * v.ln();
                if let Some(m) = &t.monomial {
                    y += m.log_eval(z);
                }
                y
            })
            .collect();
        crate::posy::log_sum_exp(&ys)
    }

    fn log_value_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        self.log_value_grad_generic(z)
    }

    /// Exact Hessian by forward-mode differentiation of the reverse sweep.
    fn add_log_hessian(&self, z: &[f64], weight: f64, h: &mut DMatrix<f64>) {
        const LANES: usize = 8;
        let mut zd: Vec<DualVec<LANES>> = z.iter().map(|&v| DualVec::cst(v)).collect();
        for start in (0..self.dim).step_by(LANES) {
            let end = (start + LANES).min(self.dim);
            for j in start..end {
                zd[j].eps[j - start] = 1.0;
            }
            let (_, g) = self.log_value_grad_generic(&zd);
            for j in start..end {
                zd[j].eps[j - start] = 0.0;
                for (i, gi) in g.iter().enumerate() {
                    h[(i, j)] += weight * gi.eps[j - start];
                }
            }
        }
    }
}

/// A built program together with what is needed to interpret its solution.
#[derive(Debug, Clone)]
pub struct FtcProgram {
    pub gp: GeometricProgram,
    pub kind: ProblemKind,
    /// Offset added to the cost posynomial.
    pub offset: f64,
    pub order: NormOrder,
    /// How many constraints of each family were emitted.
    pub fts_constraints: usize,
    pub performance_constraints: usize,
    pub budget_constraints: usize,
}

struct Builder<'a> {
    model: &'a Arc<SystemModel>,
    route: StateRoute,
    symbolic: BTreeMap<Vec<u64>, Option<SymbolicState>>,
    probe: Vec<f64>,
}

impl<'a> Builder<'a> {
    fn new(model: &'a Arc<SystemModel>, route: StateRoute) -> Self {
        Self {
            model,
            route,
            symbolic: BTreeMap::new(),
            probe: vec![1.0; model.registry().len()],
        }
    }

    /// `w' x(k)` from `x0` is zero for every parameter value.
    fn is_dead(&self, x0: &[f64], k: usize, w: &[f64]) -> Result<bool> {
        let traj = self.model.propagate_numeric(&self.probe, x0)?;
        Ok(traj.weighted(k, w) == 0.0)
    }

    fn realize(&mut self, f: StateFunctional) -> Result<GpFunction> {
        let guard = match self.route {
            StateRoute::Adjoint => return Ok(GpFunction::Implicit(Arc::new(f))),
            StateRoute::Auto { guard } | StateRoute::Symbolic { guard } => guard,
        };
        let key: Vec<u64> = f.x0.iter().map(|v| v.to_bits()).collect();
        if !self.symbolic.contains_key(&key) {
            let sym = match self.model.propagate_symbolic(&f.x0, guard) {
                Ok(s) => Some(s),
                Err(Error::Blowup { .. }) if matches!(self.route, StateRoute::Auto { .. }) => None,
                Err(e) => return Err(e),
            };
            self.symbolic.insert(key.clone(), sym);
        }
        match &self.symbolic[&key] {
            Some(sym) => Ok(GpFunction::Posy(f.expand_from(sym)?)),
            None => Ok(GpFunction::Implicit(Arc::new(f))),
        }
    }

    fn fts_constraints(&mut self, gp: &mut GeometricProgram, fts: &FtsSpec) -> Result<usize> {
        let scale = 1.0 / fts.bound();
        let mut seeds: Vec<(String, Vec<f64>, usize, Vec<f64>)> = Vec::new();
        match &fts.mode {
            FtsMode::Fixed => {
                for (idx, l) in fts.ell.iter().enumerate() {
                    seeds.push((format!("fts[k={}]", idx + 1), fts.x0.clone(), idx + 1, l.clone()));
                }
            }
            FtsMode::Robust { v } => {
                for s in worst_case_weights(&fts.ell, v)? {
                    let x0 = s.initial_state(self.model.n());
                    seeds.push((format!("fts[k={},vertex={}]", s.k, s.vertex + 1), x0, s.k, s.weights));
                }
            }
        }
        let mut count = 0;
        for (label, x0, k, w) in seeds {
            if self.is_dead(&x0, k, &w)? {
                continue;
            }
            let f = StateFunctional::new(
                Arc::clone(self.model),
                x0,
                vec![StateTerm { coeff: scale, k, weights: w, power: 1, monomial: None }],
            )?;
            let f = self.realize(f)?;
            gp.add_inequality(label, f);
            count += 1;
        }
        Ok(count)
    }

    /// Terms of `J^p` (finite `p`), scaled by `scale`.
    fn norm_terms(&self, perf: &PerformanceSpec, x0: &[f64], p: u32, scale: f64) -> Result<Vec<StateTerm>> {
        let n = self.model.n();
        let mut terms = Vec::new();
        for &k in &perf.times {
            if p == 1 {
                if !self.is_dead(x0, k, &perf.weights)? {
                    terms.push(StateTerm { coeff: scale, k, weights: perf.weights.clone(), power: 1, monomial: None });
                }
                continue;
            }
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                if self.is_dead(x0, k, &e)? {
                    continue;
                }
                terms.push(StateTerm {
                    coeff: scale * perf.weights[i].powi(p as i32),
                    k,
                    weights: e,
                    power: p,
                    monomial: None,
                });
            }
        }
        Ok(terms)
    }

    /// `(k, i)` pairs whose entry is not identically zero.
    fn live_entries(&self, perf: &PerformanceSpec, x0: &[f64]) -> Result<Vec<(usize, usize)>> {
        let traj = self.model.propagate_numeric(&self.probe, x0)?;
        Ok(perf
            .times
            .iter()
            .flat_map(|&k| (0..self.model.n()).map(move |i| (k, i)))
            .filter(|&(k, i)| traj.states[k][i] > 0.0)
            .collect())
    }
}

fn validate_inputs(model: &SystemModel, fts: &FtsSpec, perf: &PerformanceSpec, budget: &BudgetSpec) -> Result<()> {
    let violations = model.validate();
    if let Some(v) = violations.first() {
        return Err(Error::InvalidModel(format!("{v} ({} violation(s))", violations.len())));
    }
    fts.validate(model.n(), model.horizon())?;
    perf.validate(model.n(), model.horizon())?;
    if !budget.bound.is_finite() || !budget.offset.is_finite() {
        return Err(Error::InvalidSpec("budget bound and offset must be finite".into()));
    }
    if let Some(v) = budget.cost.max_var() {
        if !model.registry().contains(v) {
            return Err(Error::UnknownVariable(format!("#{}", v.0)));
        }
    }
    Ok(())
}

/// Minimizes `J^p` (or an epigraph variable for `p = infinity`) subject to
/// the finite-time bounds and `L(theta) + offset <= Lbar`.
pub fn build_budget_constrained(
    model: &Arc<SystemModel>,
    fts: &FtsSpec,
    perf: &PerformanceSpec,
    budget: &BudgetSpec,
    route: StateRoute,
) -> Result<FtcProgram> {
    validate_inputs(model, fts, perf, budget)?;
    let room = budget.bound - budget.offset;
    if !(room > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "budget bound {} leaves no room over the cost offset {}",
            budget.bound, budget.offset
        )));
    }
    let mut b = Builder::new(model, route);
    let mut registry = model.registry().clone();
    let (objective, epigraph) = match perf.order {
        NormOrder::Finite(p) => {
            let terms = b.norm_terms(perf, &fts.x0, p, 1.0)?;
            if terms.is_empty() {
                return Err(Error::InvalidSpec("performance measure is identically zero".into()));
            }
            let f = StateFunctional::new(Arc::clone(model), fts.x0.clone(), terms)?;
            (b.realize(f)?, None)
        }
        NormOrder::Infinity => {
            let live = b.live_entries(perf, &fts.x0)?;
            if live.is_empty() {
                return Err(Error::InvalidSpec("performance measure is identically zero".into()));
            }
            let entry_max = |theta: &[f64]| -> Result<f64> {
                let traj = model.propagate_numeric(theta, &fts.x0)?;
                Ok(live.iter().map(|&(k, i)| perf.weights[i] * traj.states[k][i]).fold(0.0, f64::max))
            };
            let lo = 0.5 * entry_max(&model.registry().lowers())?;
            let hi = 2.0 * entry_max(&model.registry().uppers())?;
            let t = registry.add(EPIGRAPH_VAR, lo, hi)?;
            (GpFunction::Posy(Posynomial::var(t)), Some((t, live)))
        }
    };
    let mut gp = GeometricProgram::new(registry, objective);
    let mut performance_constraints = 0;
    if let Some((t, live)) = epigraph {
        for (k, i) in live {
            let mut e = vec![0.0; model.n()];
            e[i] = perf.weights[i];
            let f = StateFunctional::new(
                Arc::clone(model),
                fts.x0.clone(),
                vec![StateTerm { coeff: 1.0, k, weights: e, power: 1, monomial: Some(Monomial::new(1.0, [(t, -1.0)])?) }],
            )?;
            gp.add_inequality(format!("epigraph[k={k},i={}]", i + 1), b.realize(f)?);
            performance_constraints += 1;
        }
    }
    let fts_constraints = b.fts_constraints(&mut gp, fts)?;
    gp.add_inequality("budget", budget.cost.scale(1.0 / room)?);
    Ok(FtcProgram {
        gp,
        kind: ProblemKind::Budget,
        offset: budget.offset,
        order: perf.order,
        fts_constraints,
        performance_constraints,
        budget_constraints: 1,
    })
}

/// Minimizes `L(theta)` subject to the finite-time bounds and `J <= Jbar`
/// (`budget.bound` is `Jbar`).
pub fn build_performance_constrained(
    model: &Arc<SystemModel>,
    fts: &FtsSpec,
    perf: &PerformanceSpec,
    budget: &BudgetSpec,
    route: StateRoute,
) -> Result<FtcProgram> {
    validate_inputs(model, fts, perf, budget)?;
    let jbar = budget.bound;
    if !(jbar > 0.0) {
        return Err(Error::InvalidSpec(format!("performance bound must be > 0, got {jbar}")));
    }
    let mut b = Builder::new(model, route);
    let mut gp = GeometricProgram::new(model.registry().clone(), budget.cost.clone());
    let mut performance_constraints = 0;
    match perf.order {
        NormOrder::Finite(p) => {
            let terms = b.norm_terms(perf, &fts.x0, p, jbar.powi(-(p as i32)))?;
            if !terms.is_empty() {
                let f = StateFunctional::new(Arc::clone(model), fts.x0.clone(), terms)?;
                gp.add_inequality("performance", b.realize(f)?);
                performance_constraints += 1;
            }
        }
        NormOrder::Infinity => {
            for (k, i) in b.live_entries(perf, &fts.x0)? {
                let mut e = vec![0.0; model.n()];
                e[i] = perf.weights[i] / jbar;
                let f = StateFunctional::new(
                    Arc::clone(model),
                    fts.x0.clone(),
                    vec![StateTerm { coeff: 1.0, k, weights: e, power: 1, monomial: None }],
                )?;
                gp.add_inequality(format!("performance[k={k},i={}]", i + 1), b.realize(f)?);
                performance_constraints += 1;
            }
        }
    }
    let fts_constraints = b.fts_constraints(&mut gp, fts)?;
    Ok(FtcProgram {
        gp,
        kind: ProblemKind::Performance,
        offset: budget.offset,
        order: perf.order,
        fts_constraints,
        performance_constraints,
        budget_constraints: 0,
    })
}

/// Per-step finite-time margins `eps - ell(k)' x(k)` (worst vertex in
/// robust mode).
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub pass: bool,
    pub margins: Vec<f64>,
}

impl Certificate {
    /// First step with a non-positive margin.
    pub fn first_violation(&self) -> Option<usize> {
        self.margins.iter().position(|&m| !(m > 0.0)).map(|i| i + 1)
    }
}

/// Checks `ell(k)' x(k) < eps` for `k = 1..T` by numeric propagation.
pub fn certify_fts(model: &SystemModel, schedule: &[f64], fts: &FtsSpec) -> Result<Certificate> {
    fts.validate(model.n(), model.horizon())?;
    let margins: Vec<f64> = match &fts.mode {
        FtsMode::Fixed => {
            let traj = model.propagate_numeric(schedule, &fts.x0)?;
            fts.ell
                .iter()
                .enumerate()
                .map(|(idx, l)| fts.epsilon - traj.weighted(idx + 1, l))
                .collect()
        }
        FtsMode::Robust { v } => fts
            .ell
            .iter()
            .enumerate()
            .map(|(idx, l)| Ok(fts.epsilon - vertex_maximum(model, schedule, l, v, idx + 1)?))
            .collect::<Result<_>>()?,
    };
    Ok(Certificate {
        pass: margins.iter().all(|&m| m > 0.0),
        margins,
    })
}

#[derive(Debug, Clone)]
pub struct FtcSolution {
    /// `theta*` over the model's registry.
    pub schedule: Vec<f64>,
    pub trajectory: Trajectory,
    /// `J(theta*)` for the budget problem, `L(theta*) + offset` for the
    /// performance problem.
    pub objective: f64,
    pub offset: f64,
    pub performance: f64,
    pub cost: f64,
    pub fts_margins: Vec<f64>,
    pub fts_pass: bool,
    pub report: SolveReport,
}

/// Full pipeline: build, solve, map back and certify.
#[derive(Debug, Clone)]
pub struct FtcProblem {
    pub model: Arc<SystemModel>,
    pub fts: FtsSpec,
    pub performance: PerformanceSpec,
    pub budget: BudgetSpec,
    pub kind: ProblemKind,
    pub route: StateRoute,
}

impl FtcProblem {
    pub fn build(&self) -> Result<FtcProgram> {
        match self.kind {
            ProblemKind::Budget => {
                build_budget_constrained(&self.model, &self.fts, &self.performance, &self.budget, self.route)
            }
            ProblemKind::Performance => {
                build_performance_constrained(&self.model, &self.fts, &self.performance, &self.budget, self.route)
            }
        }
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<FtcSolution> {
        let program = self.build()?;
        let mut sol = solve_ftc(&program.gp, &self.model, &self.fts, opts)?;
        sol.performance = self.performance.evaluate(&sol.trajectory);
        sol.cost = self.budget.cost.evaluate(&sol.schedule)? + self.budget.offset;
        sol.offset = self.budget.offset;
        sol.objective = match self.kind {
            ProblemKind::Budget => sol.performance,
            ProblemKind::Performance => sol.cost,
        };
        Ok(sol)
    }
}

/// Solves a program produced by the builders and maps `z*` back to the
/// per-round schedule. `objective` is the raw program objective; use
/// [`FtcProblem::solve`] for problem-level values.
pub fn solve_ftc(gp: &GeometricProgram, model: &SystemModel, fts: &FtsSpec, opts: &SolverOptions) -> Result<FtcSolution> {
    let report = gp::solve(gp, opts)?;
    let schedule = report.theta_star[..model.registry().len()].to_vec();
    let trajectory = model.propagate_numeric(&schedule, &fts.x0)?;
    let cert = certify_fts(model, &schedule, fts)?;
    if report.status == SolveStatus::Optimal && !cert.pass {
        return Err(Error::InvalidSpec(format!(
            "solver reported optimal but finite-time certification failed at k={:?}",
            cert.first_violation()
        )));
    }
    Ok(FtcSolution {
        schedule,
        trajectory,
        objective: report.objective_value,
        offset: 0.0,
        performance: f64::NAN,
        cost: f64::NAN,
        fts_margins: cert.margins,
        fts_pass: cert.pass,
        report,
    })
}

/// Registry entries belonging to the model, by name.
pub fn schedule_by_name(registry: &VariableRegistry, schedule: &[f64]) -> Vec<(String, f64)> {
    registry
        .iter()
        .map(|(id, v)| (v.name.clone(), schedule[id.0]))
        .collect()
}

/// `theta` from a name-keyed map; every registry variable must be present.
pub fn schedule_from_names(registry: &VariableRegistry, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    for name in values.keys() {
        if registry.get(name).is_none() && name != EPIGRAPH_VAR {
            return Err(Error::UnknownVariable(name.clone()));
        }
    }
    registry
        .iter()
        .map(|(VarId(i), v)| {
            let x = *values.get(&v.name).ok_or(Error::MissingAssignment(i))?;
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::NonPositiveValue { index: i, value: x });
            }
            Ok(x)
        })
        .collect()
}
