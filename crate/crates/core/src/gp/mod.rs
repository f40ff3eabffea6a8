//! Geometric programs in standard form and their solution.
//!
//! ```text
//! minimize    f0(theta)
//! subject to  fi(theta) <= 1    (posynomials)
//!             gj(theta)  = 1    (monomials)
//!             lower <= theta <= upper
//! ```
//!
//! Under `theta = exp[z]` the program becomes smooth and convex
//! ([`to_convex`]) and is solved by a primal barrier method ([`solve`]).

mod convex;
mod solver;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use convex::{to_convex, AffineEquality, ConvexFunction, ConvexProgram, LseFunction};
pub use solver::{solve, SolveReport, SolveStatus, SolverOptions};

use crate::error::{Error, Result};
use crate::posy::{Monomial, Posynomial, VariableRegistry};

/// A posynomial supplied as a black box in log-space: `F(z) = log f(exp[z])`.
///
/// Implementations must be convex in `z` and defined for every finite `z`
/// of length [`Self::dim`].
pub trait LogConvexFunction: fmt::Debug + Send + Sync {
    /// Number of log-variables the function reads.
    fn dim(&self) -> usize;

    fn log_value(&self, z: &[f64]) -> f64;

    fn log_value_grad(&self, z: &[f64]) -> (f64, Vec<f64>);

    /// Adds `weight * hessian(z)` to `h`. The default uses central
    /// differences of the gradient with step `1e-5`.
    fn add_log_hessian(&self, z: &[f64], weight: f64, h: &mut DMatrix<f64>) {
        const STEP: f64 = 1e-5;
        let n = self.dim();
        let mut zp = z.to_vec();
        let mut cols = DMatrix::zeros(n, n);
        for j in 0..n {
            zp[j] = z[j] + STEP;
            let (_, gp) = self.log_value_grad(&zp);
            zp[j] = z[j] - STEP;
            let (_, gm) = self.log_value_grad(&zp);
            zp[j] = z[j];
            for i in 0..n {
                cols[(i, j)] = (gp[i] - gm[i]) / (2.0 * STEP);
            }
        }
        for j in 0..n {
            for i in 0..n {
                h[(i, j)] += weight * 0.5 * (cols[(i, j)] + cols[(j, i)]);
            }
        }
    }
}

/// A function of the program: an explicit posynomial or a black box.
#[derive(Debug, Clone)]
pub enum GpFunction {
    Posy(Posynomial),
    Implicit(Arc<dyn LogConvexFunction>),
}

impl From<Posynomial> for GpFunction {
    fn from(p: Posynomial) -> Self {
        GpFunction::Posy(p)
    }
}

impl From<Monomial> for GpFunction {
    fn from(m: Monomial) -> Self {
        GpFunction::Posy(m.into())
    }
}

impl GpFunction {
    pub fn log_value(&self, z: &[f64]) -> f64 {
        match self {
            GpFunction::Posy(p) => p.log_space_eval(z),
            GpFunction::Implicit(f) => f.log_value(z),
        }
    }

    /// Value at `theta > 0`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        match self {
            GpFunction::Posy(p) => p.evaluate(theta),
            GpFunction::Implicit(f) => {
                let z: Vec<f64> = theta.iter().map(|v| v.ln()).collect();
                Ok(f.log_value(&z).exp())
            }
        }
    }

    fn check(&self, registry: &VariableRegistry) -> Result<()> {
        match self {
            GpFunction::Posy(p) => match p.max_var() {
                Some(v) if !registry.contains(v) => Err(Error::UnknownVariable(format!("#{}", v.0))),
                _ => Ok(()),
            },
            GpFunction::Implicit(f) if f.dim() > registry.len() => Err(Error::Shape(format!(
                "black-box function reads {} variables, registry has {}",
                f.dim(),
                registry.len()
            ))),
            GpFunction::Implicit(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub function: GpFunction,
}

#[derive(Debug, Clone)]
pub struct EqualityConstraint {
    pub label: String,
    pub monomial: Monomial,
}

#[derive(Debug, Clone)]
pub struct GeometricProgram {
    pub registry: VariableRegistry,
    pub objective: GpFunction,
    /// `f(theta) <= 1`.
    pub inequalities: Vec<Constraint>,
    /// `g(theta) = 1`.
    pub equalities: Vec<EqualityConstraint>,
}

impl GeometricProgram {
    pub fn new(registry: VariableRegistry, objective: impl Into<GpFunction>) -> Self {
        Self {
            registry,
            objective: objective.into(),
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn with_inequality(mut self, label: impl Into<String>, f: impl Into<GpFunction>) -> Self {
        self.add_inequality(label, f);
        self
    }

    pub fn with_equality(mut self, label: impl Into<String>, g: Monomial) -> Self {
        self.equalities.push(EqualityConstraint {
            label: label.into(),
            monomial: g,
        });
        self
    }

    pub fn add_inequality(&mut self, label: impl Into<String>, f: impl Into<GpFunction>) {
        self.inequalities.push(Constraint {
            label: label.into(),
            function: f.into(),
        });
    }

    pub fn validate(&self) -> Result<()> {
        if self.registry.is_empty() {
            return Err(Error::InvalidSpec("program has no variables".into()));
        }
        self.objective.check(&self.registry)?;
        for c in &self.inequalities {
            c.function.check(&self.registry)?;
        }
        for e in &self.equalities {
            if let Some(&(v, _)) = e.monomial.exponents().last() {
                if !self.registry.contains(v) {
                    return Err(Error::UnknownVariable(format!("#{}", v.0)));
                }
            }
        }
        Ok(())
    }
}

/// Constraint slacks at a candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Largest of `max(0, fi - 1)`, `|gj - 1|` and box excess.
    pub max_violation: f64,
    /// `1 - fi(theta)` per inequality.
    pub inequality_slacks: Vec<f64>,
    /// `|gj(theta) - 1|` per equality.
    pub equality_residuals: Vec<f64>,
    pub box_violation: f64,
}

pub fn check_feasible(gp: &GeometricProgram, theta: &[f64]) -> Result<FeasibilityReport> {
    let mut slacks = Vec::with_capacity(gp.inequalities.len());
    let mut max_violation: f64 = 0.0;
    for c in &gp.inequalities {
        let v = c.function.evaluate(theta)?;
        max_violation = max_violation.max(v - 1.0);
        slacks.push(1.0 - v);
    }
    let mut residuals = Vec::with_capacity(gp.equalities.len());
    for e in &gp.equalities {
        let r = (e.monomial.evaluate(theta)? - 1.0).abs();
        max_violation = max_violation.max(r);
        residuals.push(r);
    }
    let mut box_violation: f64 = 0.0;
    for (id, var) in gp.registry.iter() {
        let x = *theta.get(id.0).ok_or(Error::MissingAssignment(id.0))?;
        box_violation = box_violation.max(var.lower - x).max(x - var.upper);
    }
    Ok(FeasibilityReport {
        max_violation: max_violation.max(box_violation),
        inequality_slacks: slacks,
        equality_residuals: residuals,
        box_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posy::VarId;

    #[test]
    fn feasibility_slacks() {
        let mut reg = VariableRegistry::new();
        let x = reg.add("x", 0.5, 4.0).unwrap();
        let gp = GeometricProgram::new(reg, Posynomial::var(x)).with_inequality(
            "lower",
            Monomial::new(2.0, [(x, -1.0)]).unwrap(),
        );
        let r = check_feasible(&gp, &[2.0]).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert_eq!(r.inequality_slacks, vec![0.0]);

        let gp = GeometricProgram::new(gp.registry.clone(), Posynomial::var(x))
            .with_inequality("over", Monomial::new(0.75, [(x, 1.0)]).unwrap());
        let r = check_feasible(&gp, &[2.0]).unwrap();
        assert!((r.max_violation - 0.5).abs() < 1e-15);

        let gp = gp.with_equality("eq", Monomial::new(1.0, [(x, 1.0)]).unwrap());
        let r = check_feasible(&gp, &[3.0]).unwrap();
        assert_eq!(r.equality_residuals, vec![2.0]);
        assert_eq!(r.max_violation, 2.0);
    }

    #[test]
    fn validation_catches_unknown_variables() {
        let mut reg = VariableRegistry::new();
        reg.add("x", 0.5, 4.0).unwrap();
        let gp = GeometricProgram::new(reg, Posynomial::var(VarId(3)));
        assert!(gp.validate().is_err());
        let gp = GeometricProgram::new(VariableRegistry::new(), Posynomial::constant(1.0).unwrap());
        assert!(gp.validate().is_err());
    }
}
