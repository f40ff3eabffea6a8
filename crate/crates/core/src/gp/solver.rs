//! Primal barrier method for the log-transformed program.
//!
//! Phase 2 minimizes `t F0(z) - sum log(-Fi(z)) - sum log(box slacks)` by
//! damped Newton steps, multiplying `t` by `mu` after each centering until
//! the duality-gap bound `m / t` drops below `tol_kkt`. A stage that does not
//! center quickly is retried from the previous center with a smaller factor. Phase 1 finds a
//! strictly feasible start by minimizing `s` subject to `Fi(z) <= s` with the
//! box relaxed by the same `s`. Affine equalities (monomial equalities and
//! fixed variables) are eliminated through a nullspace basis.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::convex::{to_convex, ConvexProgram};
use super::{check_feasible, GeometricProgram};
use crate::error::{Error, Result};

const NOISY_STEPS: usize = 3;
const NEWTON_TOL: f64 = 1e-10;
const MAX_STAGES: usize = 200;
/// Newton budget for a stage before it is retried with a smaller factor.
const RETRY_BUDGET: usize = 40;
const MIN_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_kkt: f64,
    /// Barrier weight growth per stage.
    pub mu: f64,
    /// Initial barrier weight.
    pub t0: f64,
    /// Newton iterations allowed per centering.
    pub max_newton_iter: usize,
    /// Armijo slope fraction.
    pub ls_alpha: f64,
    /// Backtracking shrink factor.
    pub ls_beta: f64,
    /// Strict-feasibility margin `delta`; phase 1 declares the program
    /// infeasible when no point with every `Fi <= -delta` exists.
    pub margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_kkt: 1e-8,
            mu: 20.0,
            t0: 1.0,
            max_newton_iter: 200,
            ls_alpha: 0.25,
            ls_beta: 0.5,
            margin: 1e-9,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_feas", self.tol_feas),
            ("tol_kkt", self.tol_kkt),
            ("t0", self.t0),
            ("margin", self.margin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidOptions(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.mu.is_finite() && self.mu > 1.0) {
            return Err(Error::InvalidOptions(format!("mu must be > 1, got {}", self.mu)));
        }
        if self.max_newton_iter == 0 {
            return Err(Error::InvalidOptions("max_newton_iter must be >= 1".into()));
        }
        if !(self.ls_alpha > 0.0 && self.ls_alpha < 0.5) {
            return Err(Error::InvalidOptions("ls_alpha must be in (0, 0.5)".into()));
        }
        if !(self.ls_beta > 0.0 && self.ls_beta < 1.0) {
            return Err(Error::InvalidOptions("ls_beta must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub z_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    /// `f0(theta*)`.
    pub objective_value: f64,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    /// Final duality-gap bound `m / t` in log-objective units.
    pub duality_gap: f64,
    pub newton_iterations: usize,
    pub phase1_iterations: usize,
    pub barrier_stages: usize,
    pub message: String,
}

/// Affine parametrization `z = z0 + B y` of the equality-feasible set.
#[derive(Debug, Clone)]
enum Basis {
    Identity,
    Select(Vec<usize>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
struct Space {
    z0: Vec<f64>,
    basis: Basis,
    dim: usize,
}

impl Space {
    fn z(&self, y: &[f64]) -> Vec<f64> {
        let mut z = self.z0.clone();
        match &self.basis {
            Basis::Identity => z.iter_mut().zip(y).for_each(|(a, b)| *a += b),
            Basis::Select(idx) => idx.iter().zip(y).for_each(|(&j, b)| z[j] += b),
            Basis::Dense(b) => {
                let bz = b * DVector::from_column_slice(y);
                z.iter_mut().zip(bz.iter()).for_each(|(a, b)| *a += b);
            }
        }
        z
    }

    fn grad(&self, gz: &[f64]) -> Vec<f64> {
        match &self.basis {
            Basis::Identity => gz.to_vec(),
            Basis::Select(idx) => idx.iter().map(|&j| gz[j]).collect(),
            Basis::Dense(b) => (b.transpose() * DVector::from_column_slice(gz)).as_slice().to_vec(),
        }
    }

    fn hess(&self, hz: DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Basis::Identity => hz,
            Basis::Select(idx) => DMatrix::from_fn(idx.len(), idx.len(), |i, j| hz[(idx[i], idx[j])]),
            Basis::Dense(b) => b.transpose() * hz * b,
        }
    }
}

/// Builds the elimination space, or `None` when the equalities are
/// inconsistent.
fn build_space(cp: &ConvexProgram) -> Option<Space> {
    let n = cp.dim;
    let mid: Vec<f64> = cp
        .log_lower
        .iter()
        .zip(&cp.log_upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let fixed: Vec<usize> = (0..n).filter(|&j| cp.log_lower[j] == cp.log_upper[j]).collect();
    if cp.equalities.is_empty() {
        if fixed.is_empty() {
            return Some(Space { z0: mid, basis: Basis::Identity, dim: n });
        }
        let free: Vec<usize> = (0..n).filter(|&j| cp.log_lower[j] != cp.log_upper[j]).collect();
        return Some(Space { z0: mid, dim: free.len(), basis: Basis::Select(free) });
    }
    let rows = cp.equalities.len() + fixed.len();
    let mut c = DMatrix::zeros(rows, n);
    let mut d = DVector::zeros(rows);
    for (r, e) in cp.equalities.iter().enumerate() {
        for &(j, a) in &e.coeffs {
            c[(r, j)] += a;
        }
        d[r] = -e.constant;
    }
    for (r, &j) in fixed.iter().enumerate() {
        let r = r + cp.equalities.len();
        c[(r, j)] = 1.0;
        d[r] = cp.log_lower[j];
    }
    let m = DVector::from_vec(mid);
    let pinv = c.clone().pseudo_inverse(1e-12).ok()?;
    let z0 = &m + &pinv * (&d - &c * &m);
    let resid = (&c * &z0 - &d).amax();
    if resid > 1e-9 * (1.0 + d.amax()) {
        return None;
    }
    let gram = c.transpose() * &c;
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-10 * scale).collect();
    let basis = DMatrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])]);
    Some(Space { z0: z0.as_slice().to_vec(), dim: cols.len(), basis: Basis::Dense(basis) })
}

struct Barrier<'a> {
    cp: &'a ConvexProgram,
    space: Space,
    boxes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Variables `(y, s)`.
    Feasibility,
    /// Variables `y`.
    Optimality,
}

struct Eval {
    f: f64,
    g: Vec<f64>,
    h: DMatrix<f64>,
}

enum Centering {
    Converged,
    IterationLimit,
    Failed(String),
}

impl<'a> Barrier<'a> {
    /// `|| grad F0 + sum lambda_i grad Fi ||_inf` over the free directions.
    ///
    /// Barrier multipliers `1 / (t r_i)` inherit the rounding error of tiny
    /// slacks `r_i`, so multipliers of near-active constraints are refit by
    /// least squares (clamped at zero) and the smaller residual is reported.
    fn stationarity(&self, y: &[f64], t: f64) -> f64 {
        const ACTIVE: f64 = 1e-6;
        let z = self.space.z(y);
        let d = self.space.dim;
        let (_, g0) = self.cp.objective.value_grad(&z);
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &self.cp.inequalities {
            let (fv, g) = c.value_grad(&z);
            rows.push((self.space.grad(&g), -fv));
        }
        for &j in &self.boxes {
            let mut e = vec![0.0; self.cp.dim];
            e[j] = 1.0;
            rows.push((self.space.grad(&e), self.cp.log_upper[j] - z[j]));
            e[j] = -1.0;
            rows.push((self.space.grad(&e), z[j] - self.cp.log_lower[j]));
        }
        if rows.iter().any(|(_, r)| !(*r > 0.0)) {
            return f64::INFINITY;
        }
        let base = DVector::from_vec(self.space.grad(&g0));
        let mut barrier = base.clone();
        let mut rest = base;
        let mut active = Vec::new();
        for (g, r) in &rows {
            let lambda = 1.0 / (t * r);
            let g = DVector::from_column_slice(g);
            barrier += lambda * &g;
            if *r <= ACTIVE {
                active.push(g);
            } else {
                rest += lambda * &g;
            }
        }
        let barrier_res = barrier.amax();
        if active.is_empty() || d == 0 {
            return barrier_res;
        }
        let a = DMatrix::from_columns(&active);
        let Ok(mut mu) = a.clone().svd(true, true).solve(&(-&rest), 1e-14) else {
            return barrier_res;
        };
        mu.iter_mut().for_each(|v| *v = v.max(0.0));
        let refit = (&a * mu + rest).amax();
        barrier_res.min(refit)
    }

    fn constraint_count(&self) -> usize {
        self.cp.inequalities.len() + 2 * self.boxes.len()
    }

    fn split<'x>(&self, phase: Phase, x: &'x [f64]) -> (&'x [f64], f64) {
        match phase {
            Phase::Feasibility => (&x[..x.len() - 1], x[x.len() - 1]),
            Phase::Optimality => (x, 0.0),
        }
    }

    /// Barrier value only; `None` outside the domain.
    fn value(&self, phase: Phase, x: &[f64], t: f64) -> Option<f64> {
        let (y, s) = self.split(phase, x);
        let z = self.space.z(y);
        let mut f = 0.0;
        for &j in &self.boxes {
            let (a, b) = (s + self.cp.log_upper[j] - z[j], s + z[j] - self.cp.log_lower[j]);
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            f -= a.ln() + b.ln();
        }
        for c in &self.cp.inequalities {
            let r = s - c.value(&z);
            if !(r > 0.0) {
                return None;
            }
            f -= r.ln();
        }
        f += match phase {
            Phase::Feasibility => t * s,
            Phase::Optimality => t * self.cp.objective.value(&z),
        };
        f.is_finite().then_some(f)
    }

    fn eval(&self, phase: Phase, x: &[f64], t: f64) -> Option<Eval> {
        let (y, s) = self.split(phase, x);
        let z = self.space.z(y);
        let n = z.len();
        let mut f = 0.0;
        let mut gz = vec![0.0; n];
        let mut hz = DMatrix::zeros(n, n);
        // cross terms with s and the s-s entry (phase 1 only)
        let mut hzs = vec![0.0; n];
        let mut gs = 0.0;
        let mut hss = 0.0;
        for &j in &self.boxes {
            let (a, b) = (s + self.cp.log_upper[j] - z[j], s + z[j] - self.cp.log_lower[j]);
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            f -= a.ln() + b.ln();
            gz[j] += 1.0 / a - 1.0 / b;
            hz[(j, j)] += 1.0 / (a * a) + 1.0 / (b * b);
            gs -= 1.0 / a + 1.0 / b;
            hzs[j] += 1.0 / (b * b) - 1.0 / (a * a);
            hss += 1.0 / (a * a) + 1.0 / (b * b);
        }
        for c in &self.cp.inequalities {
            let (fv, g) = c.value_grad(&z);
            let r = s - fv;
            if !(r > 0.0) {
                return None;
            }
            f -= r.ln();
            let support: Vec<usize> = (0..n).filter(|&i| g[i] != 0.0).collect();
            let r2 = r * r;
            for &p in &support {
                gz[p] += g[p] / r;
                hzs[p] -= g[p] / r2;
                for &q in &support {
                    hz[(p, q)] += g[p] * g[q] / r2;
                }
            }
            gs -= 1.0 / r;
            hss += 1.0 / r2;
            c.add_hessian(&z, 1.0 / r, &mut hz);
        }
        match phase {
            Phase::Feasibility => {
                f += t * s;
                gs += t;
            }
            Phase::Optimality => {
                let (f0, g0) = self.cp.objective.value_grad(&z);
                f += t * f0;
                gz.iter_mut().zip(&g0).for_each(|(a, b)| *a += t * b);
                self.cp.objective.add_hessian(&z, t, &mut hz);
            }
        }
        if !f.is_finite() || gz.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let gy = self.space.grad(&gz);
        let hy = self.space.hess(hz);
        match phase {
            Phase::Optimality => Some(Eval { f, g: gy, h: hy }),
            Phase::Feasibility => {
                let d = gy.len();
                let hys = self.space.grad(&hzs);
                let mut h = DMatrix::zeros(d + 1, d + 1);
                h.view_mut((0, 0), (d, d)).copy_from(&hy);
                for i in 0..d {
                    h[(i, d)] = hys[i];
                    h[(d, i)] = hys[i];
                }
                h[(d, d)] = hss;
                let mut g = gy;
                g.push(gs);
                Some(Eval { f, g, h })
            }
        }
    }

    fn newton_step(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
        let d = g.len();
        let mut h = 0.5 * (h + h.transpose());
        let rhs = -DVector::from_column_slice(g);
        let diag_scale = (0..d).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
        let mut reg = 0.0;
        for _ in 0..12 {
            if let Some(ch) = Cholesky::new(h.clone()) {
                let dx = ch.solve(&rhs);
                if dx.iter().all(|v| v.is_finite()) {
                    return Some(dx.as_slice().to_vec());
                }
            }
            let next = if reg == 0.0 { 1e-14 * diag_scale } else { reg * 100.0 };
            for i in 0..d {
                h[(i, i)] += next - reg;
            }
            reg = next;
        }
        None
    }

    fn center(
        &self,
        phase: Phase,
        x: &mut [f64],
        t: f64,
        opts: &SolverOptions,
        budget: usize,
        iterations: &mut usize,
    ) -> Centering {
        let mut noisy = 0;
        for _ in 0..budget {
            let Some(Eval { f, g, h }) = self.eval(phase, x, t) else {
                return Centering::Failed("iterate left the barrier domain".into());
            };
            let Some(dx) = Self::newton_step(&h, &g) else {
                return Centering::Failed("Newton system could not be factored".into());
            };
            let slope: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
            let decrement = -slope;
            if !decrement.is_finite() {
                return Centering::Failed("non-finite Newton decrement".into());
            }
            if decrement / 2.0 <= NEWTON_TOL {
                return Centering::Converged;
            }
            let mut step = 1.0;
            let mut trial = x.to_vec();
            loop {
                for ((ti, xi), di) in trial.iter_mut().zip(x.iter()).zip(&dx) {
                    *ti = xi + step * di;
                }
                if let Some(fnew) = self.value(phase, &trial, t) {
                    if fnew <= f + opts.ls_alpha * step * slope {
                        break;
                    }
                }
                step *= opts.ls_beta;
                if step < 1e-16 {
                    // Rounding in f swamps the predicted decrease.
                    let floor = 1e4 * f64::EPSILON * f.abs().max(1.0);
                    return if decrement <= floor.max(1e-6) {
                        Centering::Converged
                    } else {
                        Centering::Failed(format!("line search stalled (decrement {decrement:e})"))
                    };
                }
            }
            x.copy_from_slice(&trial);
            *iterations += 1;
            // Repeated damped steps at the rounding level of f are noise.
            if step < 1.0 && decrement / 2.0 <= 10.0 * f64::EPSILON * f.abs() {
                noisy += 1;
                if noisy >= NOISY_STEPS {
                    return Centering::Converged;
                }
            } else {
                noisy = 0;
            }
        }
        Centering::IterationLimit
    }
}

impl Barrier<'_> {
    /// Moves from the center `x` at weight `t` to the center at
    /// `t * factor`. A stage that stalls is restarted from `x` with the
    /// square root of the factor; successes let the factor grow back to `mu`.
    fn advance(
        &self,
        phase: Phase,
        x: &mut Vec<f64>,
        t: &mut f64,
        factor: &mut f64,
        opts: &SolverOptions,
        iterations: &mut usize,
    ) -> Centering {
        loop {
            let can_retry = *factor > MIN_FACTOR && RETRY_BUDGET < opts.max_newton_iter;
            let budget = if can_retry { RETRY_BUDGET } else { opts.max_newton_iter };
            let next = *t * *factor;
            let mut trial = x.clone();
            match self.center(phase, &mut trial, next, opts, budget, iterations) {
                Centering::Converged => {
                    *x = trial;
                    *t = next;
                    *factor = (*factor * *factor).min(opts.mu);
                    return Centering::Converged;
                }
                _ if can_retry => *factor = factor.sqrt(),
                other => return other,
            }
        }
    }
}

struct Outcome {
    status: SolveStatus,
    z: Vec<f64>,
    kkt: f64,
    gap: f64,
    newton: usize,
    phase1: usize,
    stages: usize,
    message: String,
}

fn run(cp: &ConvexProgram, opts: &SolverOptions) -> Outcome {
    let mut out = Outcome {
        status: SolveStatus::Optimal,
        z: cp
            .log_lower
            .iter()
            .zip(&cp.log_upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect(),
        kkt: 0.0,
        gap: 0.0,
        newton: 0,
        phase1: 0,
        stages: 0,
        message: String::new(),
    };
    let Some(space) = build_space(cp) else {
        out.status = SolveStatus::Infeasible;
        out.message = "equality constraints are inconsistent".into();
        return out;
    };
    let boxes: Vec<usize> = (0..cp.dim).filter(|&j| cp.log_lower[j] < cp.log_upper[j]).collect();
    let barrier = Barrier { cp, space, boxes };

    if barrier.space.dim == 0 {
        out.z = barrier.space.z(&[]);
        let worst = cp.inequalities.iter().map(|c| c.value(&out.z)).fold(f64::NEG_INFINITY, f64::max);
        if worst > 0.0 {
            out.status = SolveStatus::Infeasible;
            out.message = format!("no free variables and a constraint is violated (log value {worst:e})");
        }
        return out;
    }

    let mut y = vec![0.0; barrier.space.dim];
    let z0 = barrier.space.z(&y);
    let box_worst = barrier
        .boxes
        .iter()
        .map(|&j| (z0[j] - cp.log_upper[j]).max(cp.log_lower[j] - z0[j]))
        .fold(f64::NEG_INFINITY, f64::max);
    let ineq_worst = cp.inequalities.iter().map(|c| c.value(&z0)).fold(f64::NEG_INFINITY, f64::max);

    if box_worst >= 0.0 || ineq_worst >= 0.0 {
        // Phase 1.
        let mut x = y.clone();
        x.push(box_worst.max(ineq_worst).max(0.0) + 1.0);
        let m1 = barrier.constraint_count() as f64;
        let mut t = opts.t0;
        let mut factor = opts.mu;
        let mut stages = 0;
        let mut centering = barrier.center(Phase::Feasibility, &mut x, t, opts, opts.max_newton_iter, &mut out.phase1);
        loop {
            stages += 1;
            match centering {
                Centering::Converged => {}
                Centering::IterationLimit => {
                    out.status = SolveStatus::IterationLimit;
                    out.message = "phase 1 centering hit the Newton iteration limit".into();
                    out.z = barrier.space.z(&x[..x.len() - 1]);
                    return out;
                }
                Centering::Failed(msg) => {
                    out.status = SolveStatus::NumericalFailure;
                    out.message = format!("phase 1: {msg}");
                    out.z = barrier.space.z(&x[..x.len() - 1]);
                    return out;
                }
            }
            let s = x[x.len() - 1];
            if s < -opts.margin {
                break;
            }
            if s - m1 / t >= -opts.margin || m1 / t < opts.tol_kkt || stages >= MAX_STAGES {
                out.status = SolveStatus::Infeasible;
                out.message = format!("phase 1 optimum {s:e} is not below -{:e}", opts.margin);
                out.z = barrier.space.z(&x[..x.len() - 1]);
                return out;
            }
            centering = barrier.advance(Phase::Feasibility, &mut x, &mut t, &mut factor, opts, &mut out.phase1);
        }
        x.pop();
        y = x;
    }

    // Phase 2.
    let m = barrier.constraint_count() as f64;
    let mut t = opts.t0;
    let mut factor = opts.mu;
    let mut centering = barrier.center(Phase::Optimality, &mut y, t, opts, opts.max_newton_iter, &mut out.newton);
    loop {
        out.stages += 1;
        match centering {
            Centering::Converged => {}
            Centering::IterationLimit => {
                out.status = SolveStatus::IterationLimit;
                out.message = "centering hit the Newton iteration limit".into();
                break;
            }
            Centering::Failed(msg) => {
                out.status = SolveStatus::NumericalFailure;
                out.message = msg;
                break;
            }
        }
        if m == 0.0 || m / t < opts.tol_kkt || out.stages >= MAX_STAGES {
            break;
        }
        centering = barrier.advance(Phase::Optimality, &mut y, &mut t, &mut factor, opts, &mut out.newton);
    }
    out.z = barrier.space.z(&y);
    out.gap = if m == 0.0 { 0.0 } else { m / t };
    out.kkt = barrier.stationarity(&y, t);
    out
}

/// Solves `gp` through its log transform.
pub fn solve(gp: &GeometricProgram, opts: &SolverOptions) -> Result<SolveReport> {
    opts.validate()?;
    gp.validate()?;
    let cp = to_convex(gp);
    let out = run(&cp, opts);
    let theta: Vec<f64> = out.z.iter().map(|v| v.exp()).collect();
    let objective_value = cp.objective.value(&out.z).exp();
    let feas = check_feasible(gp, &theta)?;
    let mut status = out.status;
    let mut message = out.message;
    if status == SolveStatus::Optimal {
        if !objective_value.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            message = "non-finite solution".into();
        } else if feas.max_violation > opts.tol_feas {
            status = SolveStatus::NumericalFailure;
            message = format!("constraint violation {:e} exceeds tol_feas", feas.max_violation);
        } else if out.kkt > opts.tol_kkt {
            status = SolveStatus::NumericalFailure;
            message = format!("KKT residual {:e} exceeds tol_kkt", out.kkt);
        }
    }
    Ok(SolveReport {
        status,
        z_star: out.z,
        theta_star: theta,
        objective_value,
        max_constraint_violation: feas.max_violation,
        kkt_residual: out.kkt,
        duality_gap: out.gap,
        newton_iterations: out.newton,
        phase1_iterations: out.phase1,
        barrier_stages: out.stages,
        message,
    })
}
