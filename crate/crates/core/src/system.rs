//! The parametrized positive system `x(k+1) = (base(k) + K(k; theta)) x(k)`.
//!
//! `base(k)` is the constant nonnegative part (the controlled matrix shifted by
//! the entrywise infimum of the gain set) and every gain entry is either a
//! posynomial in the parameters or absent. States can be propagated
//! numerically, expanded symbolically into posynomials, or differentiated
//! in log-parameters by a reverse sweep through the recursion.

use std::sync::Arc;

use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::posy::{Monomial, Posynomial, VariableRegistry};

/// Default cap on the number of terms of a symbolic state expansion.
pub const DEFAULT_BLOWUP_GUARD: usize = 2_000_000;

/// A gain entry; `Absent` stands for the zero function, which is not a
/// posynomial.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Absent,
    Posy(Posynomial),
}

impl Gain {
    pub fn posy(&self) -> Option<&Posynomial> {
        match self {
            Gain::Absent => None,
            Gain::Posy(p) => Some(p),
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledGain {
    i: usize,
    j: usize,
    /// `(log coeff, exponents)` per term.
    terms: Vec<(f64, Vec<(usize, f64)>)>,
}

/// Row-major square matrix helper.
pub type Matrix = Vec<f64>;

#[derive(Debug, Clone)]
pub struct SystemModel {
    n: usize,
    base: Vec<Matrix>,
    gains: Vec<Vec<Gain>>,
    registry: VariableRegistry,
    k_min: Matrix,
    compiled: Vec<Vec<CompiledGain>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NegativeBase(f64),
    NonFiniteBase(f64),
    NonPositiveGainCoefficient(f64),
    /// The gain references a variable tagged for a later step.
    FutureVariable { var: String, round: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} entry ({}, {}): ", self.k, self.i, self.j)?;
        match &self.kind {
            ViolationKind::NegativeBase(v) => write!(f, "base entry {v} is negative"),
            ViolationKind::NonFiniteBase(v) => write!(f, "base entry {v} is not finite"),
            ViolationKind::NonPositiveGainCoefficient(c) => {
                write!(f, "gain coefficient {c} is not positive")
            }
            ViolationKind::FutureVariable { var, round } => {
                write!(f, "gain uses `{var}` which acts from step {round}")
            }
        }
    }
}

/// States `x(0..=T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn weighted(&self, k: usize, w: &[f64]) -> f64 {
        dot(&self.states[k], w)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symbolic state `x_i(k)`: `None` when identically zero.
pub type SymbolicState = Vec<Vec<Option<Posynomial>>>;

/// Intermediate values of a forward pass, kept for the reverse sweep.
#[derive(Debug, Clone)]
pub struct ForwardPass<S> {
    pub states: Vec<Vec<S>>,
    mats: Vec<Vec<S>>,
    term_vals: Vec<Vec<Vec<S>>>,
}

impl SystemModel {
    /// `base[k]` and `gains[k]` are row-major `n x n` grids for steps
    /// `k = 0..T`.
    pub fn new(
        n: usize,
        base: Vec<Matrix>,
        gains: Vec<Vec<Gain>>,
        registry: VariableRegistry,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("state dimension must be >= 1".into()));
        }
        if base.is_empty() {
            return Err(Error::Shape("horizon must be >= 1".into()));
        }
        if gains.len() != base.len() {
            return Err(Error::Shape(format!(
                "{} base matrices but {} gain grids",
                base.len(),
                gains.len()
            )));
        }
        for (k, (b, g)) in base.iter().zip(&gains).enumerate() {
            if b.len() != n * n || g.len() != n * n {
                return Err(Error::Shape(format!("step {k}: expected {} entries", n * n)));
            }
        }
        let mut compiled = Vec::with_capacity(gains.len());
        for grid in &gains {
            let mut step = Vec::new();
            for (idx, g) in grid.iter().enumerate() {
                let Some(p) = g.posy() else { continue };
                if let Some(v) = p.max_var() {
                    if !registry.contains(v) {
                        return Err(Error::UnknownVariable(format!("#{}", v.0)));
                    }
                }
                step.push(CompiledGain {
                    i: idx / n,
                    j: idx % n,
                    terms: p
                        .terms()
                        .iter()
                        .map(|t| {
                            (
                                t.coeff().ln(),
                                t.exponents().iter().map(|&(v, a)| (v.0, a)).collect(),
                            )
                        })
                        .collect(),
                });
            }
            compiled.push(step);
        }
        Ok(Self {
            n,
            base,
            gains,
            registry,
            k_min: vec![0.0; n * n],
            compiled,
        })
    }

    /// Builds from the controlled matrices `A(k)` and the entrywise gain
    /// infimum `k_min`, storing `base(k) = A(k) + k_min`.
    pub fn from_split(
        n: usize,
        a: Vec<Matrix>,
        k_min: Matrix,
        gains: Vec<Vec<Gain>>,
        registry: VariableRegistry,
    ) -> Result<Self> {
        if k_min.len() != n * n {
            return Err(Error::Shape("k_min must be n x n".into()));
        }
        let base = a
            .into_iter()
            .map(|m| m.iter().zip(&k_min).map(|(x, y)| x + y).collect())
            .collect();
        let mut model = Self::new(n, base, gains, registry)?;
        model.k_min = k_min;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of steps `T`.
    pub fn horizon(&self) -> usize {
        self.base.len()
    }

    pub fn registry(&self) -> &VariableRegistry {
        &self.registry
    }

    pub fn base(&self, k: usize) -> &[f64] {
        &self.base[k]
    }

    pub fn gains(&self, k: usize) -> &[Gain] {
        &self.gains[k]
    }

    pub fn gain(&self, k: usize, i: usize, j: usize) -> &Gain {
        &self.gains[k][i * self.n + j]
    }

    pub fn k_min(&self) -> &[f64] {
        &self.k_min
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// Positivity conditions of the model; empty when every base entry is
    /// nonnegative and every gain is a valid posynomial over earlier rounds.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.n;
        let mut out = Vec::new();
        for (k, (b, grid)) in self.base.iter().zip(&self.gains).enumerate() {
            for idx in 0..n * n {
                let (i, j) = (idx / n, idx % n);
                let v = b[idx];
                if !v.is_finite() {
                    out.push(Violation { k, i, j, kind: ViolationKind::NonFiniteBase(v) });
                } else if v < 0.0 {
                    out.push(Violation { k, i, j, kind: ViolationKind::NegativeBase(v) });
                }
                let Some(p) = grid[idx].posy() else { continue };
                for t in p.terms() {
                    if !(t.coeff() > 0.0) {
                        out.push(Violation {
                            k,
                            i,
                            j,
                            kind: ViolationKind::NonPositiveGainCoefficient(t.coeff()),
                        });
                    }
                    for &(var, _) in t.exponents() {
                        let info = self.registry.var(var);
                        if let Some(round) = info.round {
                            if round > k {
                                out.push(Violation {
                                    k,
                                    i,
                                    j,
                                    kind: ViolationKind::FutureVariable {
                                        var: info.name.clone(),
                                        round,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn check_x0(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.n {
            return Err(Error::Shape(format!(
                "initial state has {} entries, expected {}",
                x0.len(),
                self.n
            )));
        }
        if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSpec("initial state must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() < self.registry.len() {
            return Err(Error::MissingAssignment(theta.len()));
        }
        if let Some((index, &value)) = theta.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveValue { index, value });
        }
        Ok(())
    }

    /// `base(k) + K(k; theta)`.
    pub fn step_matrix(&self, k: usize, theta: &[f64]) -> Result<Matrix> {
        self.check_theta(theta)?;
        let mut m = self.base[k].clone();
        for (idx, g) in self.gains[k].iter().enumerate() {
            if let Some(p) = g.posy() {
                m[idx] += p.evaluate(theta)?;
            }
        }
        Ok(m)
    }

    pub fn propagate_numeric(&self, theta: &[f64], x0: &[f64]) -> Result<Trajectory> {
        self.check_x0(x0)?;
        self.check_theta(theta)?;
        let n = self.n;
        let mut states = Vec::with_capacity(self.horizon() + 1);
        states.push(x0.to_vec());
        for k in 0..self.horizon() {
            let m = self.step_matrix(k, theta)?;
            let x = states.last().unwrap();
            let next = (0..n).map(|i| dot(&m[i * n..(i + 1) * n], x)).collect();
            states.push(next);
        }
        Ok(Trajectory { states })
    }

    /// Expands every `x_i(k)` into an explicit posynomial of the parameters.
    pub fn propagate_symbolic(&self, x0: &[f64], guard: usize) -> Result<SymbolicState> {
        self.check_x0(x0)?;
        if x0.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidSpec("initial state must be nonzero".into()));
        }
        let n = self.n;
        let mut out: SymbolicState = Vec::with_capacity(self.horizon() + 1);
        out.push(
            x0.iter()
                .map(|&v| (v > 0.0).then(|| Posynomial::constant(v).unwrap()))
                .collect(),
        );
        for k in 0..self.horizon() {
            let prev = out.last().unwrap();
            let mut next = Vec::with_capacity(n);
            let mut total = 0usize;
            for i in 0..n {
                let mut terms: Vec<Monomial> = Vec::new();
                for (j, xj) in prev.iter().enumerate() {
                    let Some(xj) = xj else { continue };
                    let b = self.base[k][i * n + j];
                    if b > 0.0 {
                        terms.extend(xj.scale(b)?.terms().iter().cloned());
                    }
                    if let Some(g) = self.gains[k][i * n + j].posy() {
                        if total + terms.len() + g.len() * xj.len() > guard {
                            return Err(Error::Blowup { k: k + 1, limit: guard });
                        }
                        terms.extend(g.mul(xj).terms().iter().cloned());
                    }
                }
                let xi = if terms.is_empty() {
                    None
                } else {
                    Some(Posynomial::new(terms)?)
                };
                total += xi.as_ref().map_or(0, |p| p.len());
                if total > guard {
                    return Err(Error::Blowup { k: k + 1, limit: guard });
                }
                next.push(xi);
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Forward recursion in log-parameters `z` (`theta = exp[z]`).
    pub fn forward<S: Scalar>(&self, z: &[S], x0: &[f64]) -> ForwardPass<S> {
        let n = self.n;
        let mut states = Vec::with_capacity(self.horizon() + 1);
        states.push(x0.iter().map(|&v| S::cst(v)).collect::<Vec<S>>());
        let mut mats = Vec::with_capacity(self.horizon());
        let mut term_vals = Vec::with_capacity(self.horizon());
        for k in 0..self.horizon() {
            let mut m: Vec<S> = self.base[k].iter().map(|&v| S::cst(v)).collect();
            let mut vals_k = Vec::with_capacity(self.compiled[k].len());
            for g in &self.compiled[k] {
                let mut vals = Vec::with_capacity(g.terms.len());
                let mut sum = S::cst(0.0);
                for (lnc, exps) in &g.terms {
                    let mut e = S::cst(*lnc);
                    for &(p, a) in exps {
                        e += z[p].scale(a);
                    }
                    let v = e.exp();
                    sum += v;
                    vals.push(v);
                }
                m[g.i * n + g.j] += sum;
                vals_k.push(vals);
            }
            let x = states.last().unwrap();
            let next: Vec<S> = (0..n)
                .map(|i| {
                    let row = &m[i * n..(i + 1) * n];
                    let mut acc = S::cst(0.0);
                    for (a, b) in row.iter().zip(x) {
                        acc += *a * *b;
                    }
                    acc
                })
                .collect();
            states.push(next);
            mats.push(m);
            term_vals.push(vals_k);
        }
        ForwardPass {
            states,
            mats,
            term_vals,
        }
    }

    /// Reverse sweep for `g = w' x(k)`: returns `g` and adds `dg/dz` into
    /// `grad`.
    pub fn reverse<S: Scalar>(
        &self,
        fw: &ForwardPass<S>,
        k: usize,
        w: &[f64],
        grad: &mut [S],
    ) -> S {
        let n = self.n;
        let mut value = S::cst(0.0);
        for (x, &wi) in fw.states[k].iter().zip(w) {
            value += x.scale(wi);
        }
        let mut lambda: Vec<S> = w.iter().map(|&v| S::cst(v)).collect();
        for step in (0..k).rev() {
            let x = &fw.states[step];
            for (g, vals) in self.compiled[step].iter().zip(&fw.term_vals[step]) {
                let c = lambda[g.i] * x[g.j];
                for ((_, exps), v) in g.terms.iter().zip(vals) {
                    let cv = c * *v;
                    for &(p, a) in exps {
                        grad[p] += cv.scale(a);
                    }
                }
            }
            let m = &fw.mats[step];
            let mut next = vec![S::cst(0.0); n];
            for i in 0..n {
                let li = lambda[i];
                for j in 0..n {
                    next[j] += m[i * n + j] * li;
                }
            }
            lambda = next;
        }
        value
    }

    /// `log(w' x(k; exp[z]))` and its gradient in `z` for each `(k, w)` pair.
    pub fn log_state_adjoint(
        &self,
        z: &[f64],
        x0: &[f64],
        weights: &[(usize, Vec<f64>)],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        self.check_x0(x0)?;
        if z.len() < self.registry.len() {
            return Err(Error::MissingAssignment(z.len()));
        }
        let fw = self.forward(z, x0);
        weights
            .iter()
            .map(|(k, w)| {
                if *k > self.horizon() || w.len() != self.n {
                    return Err(Error::Shape(format!("weight pair at step {k}")));
                }
                let mut grad = vec![0.0; z.len()];
                let g = self.reverse(&fw, *k, w, &mut grad);
                if !(g > 0.0) {
                    return Err(Error::DeadState { k: *k });
                }
                grad.iter_mut().for_each(|v| *v /= g);
                Ok((g.ln(), grad))
            })
            .collect()
    }
}

/// A vertex constraint of the robust finite-time bound: the initial state is
/// `e_vertex` and the weight is `ell(k) / v_vertex`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSeed {
    pub k: usize,
    pub vertex: usize,
    pub weights: Vec<f64>,
}

impl VertexSeed {
    pub fn initial_state(&self, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[self.vertex] = 1.0;
        e
    }
}

/// Reduces `sup { ell(k)' x(k; x0) : x0 >= 0, v' x0 <= 1 }` to the `n`
/// vertices `x0 = e_i / v_i` of the feasible set. `ell[k-1]` is the weight
/// at step `k`.
pub fn worst_case_weights(ell: &[Vec<f64>], v: &[f64]) -> Result<Vec<VertexSeed>> {
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidSpec("ball vector v must be > 0".into()));
    }
    let mut out = Vec::with_capacity(ell.len() * v.len());
    for (idx, l) in ell.iter().enumerate() {
        if l.len() != v.len() {
            return Err(Error::Shape(format!("ell({}) has wrong length", idx + 1)));
        }
        if l.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidSpec(format!("ell({}) must be > 0", idx + 1)));
        }
        for (i, &vi) in v.iter().enumerate() {
            out.push(VertexSeed {
                k: idx + 1,
                vertex: i,
                weights: l.iter().map(|x| x / vi).collect(),
            });
        }
    }
    Ok(out)
}

/// Largest `ell' x(k)` over the initial-state set `{x0 >= 0, v' x0 <= 1}`.
pub fn vertex_maximum(
    model: &SystemModel,
    theta: &[f64],
    ell: &[f64],
    v: &[f64],
    k: usize,
) -> Result<f64> {
    let n = model.n();
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let mut x0 = vec![0.0; n];
        x0[i] = 1.0 / v[i];
        let traj = model.propagate_numeric(theta, &x0)?;
        best = best.max(traj.weighted(k, ell));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posy::VarId;

    fn scalar_model(a: f64, steps: usize) -> (SystemModel, Vec<VarId>) {
        let mut reg = VariableRegistry::new();
        let ids: Vec<VarId> = (0..steps)
            .map(|k| reg.add_with_round(&format!("t{}", k + 1), 0.1, 1.0, Some(k)).unwrap())
            .collect();
        let gains = ids.iter().map(|&id| vec![Gain::Posy(Posynomial::var(id))]).collect();
        let m = SystemModel::new(1, vec![vec![a]; steps], gains, reg).unwrap();
        (m, ids)
    }

    fn diag_half(steps: usize) -> SystemModel {
        SystemModel::new(
            2,
            vec![vec![0.5, 0.0, 0.0, 0.5]; steps],
            vec![vec![Gain::Absent; 4]; steps],
            VariableRegistry::new(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(diag_half(1).validate().is_empty());
        let bad = SystemModel::new(
            2,
            vec![vec![0.5, -0.1, 0.0, 0.5]],
            vec![vec![Gain::Absent; 4]],
            VariableRegistry::new(),
        )
        .unwrap();
        let v = bad.validate();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].k, v[0].i, v[0].j), (0, 0, 1));
        assert_eq!(v[0].kind, ViolationKind::NegativeBase(-0.1));
    }

    #[test]
    fn future_round_is_flagged() {
        let mut reg = VariableRegistry::new();
        let late = reg.add_with_round("late", 0.1, 1.0, Some(1)).unwrap();
        let m = SystemModel::new(
            1,
            vec![vec![0.5]; 2],
            vec![vec![Gain::Posy(Posynomial::var(late))], vec![Gain::Absent]],
            reg,
        )
        .unwrap();
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0].kind, ViolationKind::FutureVariable { .. }));
    }

    #[test]
    fn shape_errors() {
        assert!(SystemModel::new(2, vec![vec![0.0; 3]], vec![vec![Gain::Absent; 4]], VariableRegistry::new()).is_err());
        assert!(SystemModel::new(1, vec![], vec![], VariableRegistry::new()).is_err());
    }

    #[test]
    fn numeric_propagation() {
        let t = diag_half(2).propagate_numeric(&[], &[1.0, 1.0]).unwrap();
        assert_eq!(t.states[2], vec![0.25, 0.25]);

        let zero = SystemModel::new(
            2,
            vec![vec![0.0; 4]; 3],
            vec![vec![Gain::Absent; 4]; 3],
            VariableRegistry::new(),
        )
        .unwrap();
        let t = zero.propagate_numeric(&[], &[3.0, 1.0]).unwrap();
        assert!(t.states[1..].iter().all(|x| x.iter().all(|&v| v == 0.0)));

        let (m, _) = scalar_model(0.5, 1);
        assert_eq!(m.propagate_numeric(&[], &[1.0]), Err(Error::MissingAssignment(0)));
    }

    #[test]
    fn symbolic_expansion() {
        let (m, ids) = scalar_model(0.3, 2);
        let s = m.propagate_symbolic(&[1.0], DEFAULT_BLOWUP_GUARD).unwrap();
        let x1 = s[1][0].as_ref().unwrap();
        let expect = Posynomial::constant(0.3).unwrap().add(&Posynomial::var(ids[0]));
        assert_eq!(x1, &expect);
        let x2 = s[2][0].as_ref().unwrap();
        assert_eq!(x2.len(), 4);
        let theta = [0.2, 0.7];
        assert!((x2.evaluate(&theta).unwrap() - 0.5 * 1.0).abs() < 1e-15);

        assert_eq!(
            m.propagate_symbolic(&[1.0], 3),
            Err(Error::Blowup { k: 2, limit: 3 })
        );
    }

    #[test]
    fn adjoint_values() {
        let m = diag_half(2);
        let r = m.log_state_adjoint(&[], &[1.0, 2.0], &[(2, vec![1.0, 1.0])]).unwrap();
        assert!((r[0].0 - 0.75f64.ln()).abs() < 1e-15);
        assert!(r[0].1.is_empty());

        let (m, _) = scalar_model(0.5, 1);
        let z = [0.3f64];
        let r = m.log_state_adjoint(&z, &[1.0], &[(1, vec![1.0])]).unwrap();
        let e = z[0].exp();
        assert!((r[0].0 - (0.5 + e).ln()).abs() < 1e-15);
        assert!((r[0].1[0] - e / (0.5 + e)).abs() < 1e-15);

        let zero = SystemModel::new(1, vec![vec![0.0]], vec![vec![Gain::Absent]], VariableRegistry::new()).unwrap();
        assert_eq!(
            zero.log_state_adjoint(&[], &[1.0], &[(1, vec![1.0])]),
            Err(Error::DeadState { k: 1 })
        );
    }

    #[test]
    fn vertex_reduction() {
        let id = SystemModel::new(
            2,
            vec![vec![1.0, 0.0, 0.0, 1.0]],
            vec![vec![Gain::Absent; 4]],
            VariableRegistry::new(),
        )
        .unwrap();
        let seeds = worst_case_weights(&[vec![2.0, 3.0]], &[1.0, 1.0]).unwrap();
        assert_eq!(seeds.len(), 2);
        assert_eq!(vertex_maximum(&id, &[], &[2.0, 3.0], &[1.0, 1.0], 1).unwrap(), 3.0);
        assert_eq!(vertex_maximum(&id, &[], &[2.0, 3.0], &[2.0, 1.0], 1).unwrap(), 3.0);
        let seeds = worst_case_weights(&[vec![2.0, 3.0]], &[2.0, 1.0]).unwrap();
        assert_eq!(seeds[0].weights, vec![1.0, 1.5]);
        assert!(worst_case_weights(&[vec![2.0, 3.0]], &[0.0, 1.0]).is_err());
        assert!(worst_case_weights(&[vec![-2.0, 3.0]], &[1.0, 1.0]).is_err());
    }
}
