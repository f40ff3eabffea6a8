use std::sync::Arc;

use nalgebra::DMatrix;

use super::{GeometricProgram, GpFunction, LogConvexFunction};
use crate::posy::{log_sum_exp, softmax_into, Posynomial};

/// `log-sum-exp(A z + b)` with sparse rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LseFunction {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub offsets: Vec<f64>,
}

impl LseFunction {
    pub fn from_posynomial(p: &Posynomial) -> Self {
        let (rows, offsets) = p
            .terms()
            .iter()
            .map(|t| {
                (
                    t.exponents().iter().map(|&(v, a)| (v.0, a)).collect(),
                    t.coeff().ln(),
                )
            })
            .unzip();
        Self { rows, offsets }
    }

    fn affine(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(row, b)| row.iter().fold(*b, |acc, &(p, a)| acc + a * z[p]))
            .collect()
    }

    pub fn is_affine(&self) -> bool {
        self.rows.len() == 1
    }
}

#[derive(Debug, Clone)]
pub enum ConvexFunction {
    Lse(LseFunction),
    Implicit(Arc<dyn LogConvexFunction>),
}

impl ConvexFunction {
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            ConvexFunction::Lse(f) => log_sum_exp(&f.affine(z)),
            ConvexFunction::Implicit(f) => f.log_value(&z[..f.dim()]),
        }
    }

    pub fn value_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        match self {
            ConvexFunction::Lse(f) => {
                let ys = f.affine(z);
                let mut w = Vec::new();
                let v = softmax_into(&ys, &mut w);
                let mut g = vec![0.0; z.len()];
                for (row, wt) in f.rows.iter().zip(&w) {
                    for &(p, a) in row {
                        g[p] += wt * a;
                    }
                }
                (v, g)
            }
            ConvexFunction::Implicit(f) => {
                let (v, mut g) = f.log_value_grad(&z[..f.dim()]);
                g.resize(z.len(), 0.0);
                (v, g)
            }
        }
    }

    /// Adds `weight * hessian(z)` to `h`.
    pub fn add_hessian(&self, z: &[f64], weight: f64, h: &mut DMatrix<f64>) {
        match self {
            ConvexFunction::Lse(f) => {
                if f.is_affine() {
                    return;
                }
                let ys = f.affine(z);
                let mut w = Vec::new();
                softmax_into(&ys, &mut w);
                let mut g = vec![0.0; z.len()];
                for (row, wt) in f.rows.iter().zip(&w) {
                    let ww = weight * wt;
                    for &(p, a) in row {
                        g[p] += wt * a;
                        for &(q, b) in row {
                            h[(p, q)] += ww * a * b;
                        }
                    }
                }
                let support: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
                for &p in &support {
                    for &q in &support {
                        h[(p, q)] -= weight * g[p] * g[q];
                    }
                }
            }
            ConvexFunction::Implicit(f) => {
                let d = f.dim();
                if d == z.len() {
                    f.add_log_hessian(z, weight, h);
                } else {
                    let mut sub = DMatrix::zeros(d, d);
                    f.add_log_hessian(&z[..d], weight, &mut sub);
                    let mut view = h.view_mut((0, 0), (d, d));
                    view += &sub;
                }
            }
        }
    }
}

/// `coeffs' z + constant = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

/// The log-transformed program over `z = log[theta]`.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: ConvexFunction,
    /// `F(z) <= 0`.
    pub inequalities: Vec<ConvexFunction>,
    pub equalities: Vec<AffineEquality>,
    /// The box `log[lower] <= z <= log[upper]`.
    pub log_lower: Vec<f64>,
    pub log_upper: Vec<f64>,
}

impl ConvexProgram {
    /// The box as affine inequalities `z_j - log(upper_j) <= 0` and
    /// `log(lower_j) - z_j <= 0`.
    pub fn box_inequalities(&self) -> Vec<LseFunction> {
        let mut out = Vec::with_capacity(2 * self.dim);
        for j in 0..self.dim {
            out.push(LseFunction {
                rows: vec![vec![(j, 1.0)]],
                offsets: vec![-self.log_upper[j]],
            });
            out.push(LseFunction {
                rows: vec![vec![(j, -1.0)]],
                offsets: vec![self.log_lower[j]],
            });
        }
        out
    }
}

fn convexify(f: &GpFunction) -> ConvexFunction {
    match f {
        GpFunction::Posy(p) => ConvexFunction::Lse(LseFunction::from_posynomial(p)),
        GpFunction::Implicit(f) => ConvexFunction::Implicit(Arc::clone(f)),
    }
}

/// Logarithmic change of variables `theta = exp[z]`.
pub fn to_convex(gp: &GeometricProgram) -> ConvexProgram {
    ConvexProgram {
        dim: gp.registry.len(),
        objective: convexify(&gp.objective),
        inequalities: gp.inequalities.iter().map(|c| convexify(&c.function)).collect(),
        equalities: gp
            .equalities
            .iter()
            .map(|e| AffineEquality {
                coeffs: e.monomial.exponents().iter().map(|&(v, a)| (v.0, a)).collect(),
                constant: e.monomial.coeff().ln(),
            })
            .collect(),
        log_lower: gp.registry.lowers().iter().map(|v| v.ln()).collect(),
        log_upper: gp.registry.uppers().iter().map(|v| v.ln()).collect(),
    }
}
