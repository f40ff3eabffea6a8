//! Seeded random instances for property tests and benchmarks.

use rand::Rng;

use crate::posy::{Monomial, Posynomial, VarId, VariableRegistry};
use crate::system::{Gain, SystemModel};

/// A posynomial over `vars` variables with `1..=max_terms` terms, exponents
/// in `[-max_exp, max_exp]` and coefficients in `[0.1, 10]`.
pub fn posynomial(rng: &mut impl Rng, vars: usize, max_terms: usize, max_exp: f64) -> Posynomial {
    let terms = rng.random_range(1..=max_terms);
    let monos = (0..terms)
        .map(|_| {
            let coeff = 10f64.powf(rng.random_range(-1.0..=1.0));
            let mut exps = Vec::new();
            for v in 0..vars {
                if rng.random_bool(0.6) {
                    exps.push((VarId(v), rng.random_range(-max_exp..=max_exp)));
                }
            }
            Monomial::new(coeff, exps).expect("positive coefficient")
        })
        .collect();
    Posynomial::new(monos).expect("non-empty")
}

/// Uniform point in `[-scale, scale]^dim`.
pub fn point(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Nonnegative vector with at least one positive entry.
pub fn nonnegative(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.8) { rng.random_range(0.0..=1.0) } else { 0.0 })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    v
}

/// Positive vector with entries in `[lo, hi]`.
pub fn positive(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// A positive system with `vars_per_step` parameters `p{k}_{v}` per step in
/// `[0.2, 2]`. Base entries are sparse in `[0, 0.6]`; gains are sparse
/// posynomials of up to two terms over the parameters of the current and
/// earlier steps.
pub fn model(rng: &mut impl Rng, n: usize, horizon: usize, vars_per_step: usize) -> SystemModel {
    let mut registry = VariableRegistry::new();
    for k in 0..horizon {
        for v in 0..vars_per_step {
            registry
                .add_with_round(&format!("p{k}_{v}"), 0.2, 2.0, Some(k))
                .expect("fresh name");
        }
    }
    let mut base = Vec::with_capacity(horizon);
    let mut gains = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let visible = (k + 1) * vars_per_step;
        base.push(
            (0..n * n)
                .map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..=0.6) } else { 0.0 })
                .collect(),
        );
        gains.push(
            (0..n * n)
                .map(|_| {
                    if visible == 0 || !rng.random_bool(0.5) {
                        return Gain::Absent;
                    }
                    let terms = rng.random_range(1..=2);
                    let monos = (0..terms)
                        .map(|_| {
                            let vars = rng.random_range(1..=2.min(visible));
                            let exps: Vec<(VarId, f64)> = (0..vars)
                                .map(|_| {
                                    let e = [-1.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
                                    (VarId(rng.random_range(0..visible)), e)
                                })
                                .collect();
                            Monomial::new(rng.random_range(0.05..=0.4), exps).expect("positive coefficient")
                        })
                        .collect();
                    Gain::Posy(Posynomial::new(monos).expect("non-empty"))
                })
                .collect(),
        );
    }
    SystemModel::new(n, base, gains, registry).expect("consistent shapes")
}
