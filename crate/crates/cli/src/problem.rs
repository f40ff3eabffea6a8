//! Problem-file schema and its conversion into core objects.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use ftgp_core::ftc::{BudgetSpec, FtcProblem, FtsMode, FtsSpec, NormOrder, PerformanceSpec, ProblemKind, StateRoute};
use ftgp_core::gp::{GeometricProgram, SolverOptions};
use ftgp_core::pdm::{build_case_problem, bundled_wtm, PdmConfig, PdmMode};
use ftgp_core::posy::{Posynomial, VariableRegistry};
use ftgp_core::system::{Gain, SystemModel};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: Option<KindField>,
    #[serde(default)]
    pub route: RouteField,
    #[serde(default)]
    pub variables: Vec<VariableDef>,
    pub system: Option<SystemDef>,
    pub fts: Option<FtsDef>,
    pub performance: Option<PerformanceDef>,
    pub budget: Option<BudgetDef>,
    pub gp: Option<GpDef>,
    pub casestudy: Option<PdmConfig>,
    #[serde(default)]
    pub solver: SolverDef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindField {
    Budget,
    Performance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteField {
    #[default]
    Auto,
    Symbolic,
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeField {
    #[default]
    Fixed,
    Robust,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub round: Option<usize>,
}

/// Matrices are dense row-major arrays, one per step; a single matrix is
/// reused for every step. Gains are keyed `"k,i,j"` (zero-based).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub n: usize,
    pub horizon: usize,
    pub base: Vec<Vec<f64>>,
    pub k_min: Option<Vec<f64>>,
    #[serde(default)]
    pub gains: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtsDef {
    pub epsilon: f64,
    /// `ell(k)` for `k = 1..T`.
    pub ell: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub mode: ModeField,
    pub v: Option<Vec<f64>>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OrderField {
    Finite(u32),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceDef {
    pub order: OrderField,
    pub times: Option<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetDef {
    pub cost: String,
    #[serde(default)]
    pub offset: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpDef {
    pub objective: String,
    #[serde(default)]
    pub inequalities: Vec<String>,
    #[serde(default)]
    pub equalities: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDef {
    pub tol_feas: Option<f64>,
    pub tol_kkt: Option<f64>,
    pub mu: Option<f64>,
    pub t0: Option<f64>,
    pub max_newton_iter: Option<usize>,
    pub ls_alpha: Option<f64>,
    pub ls_beta: Option<f64>,
    pub margin: Option<f64>,
}

impl SolverDef {
    pub fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            tol_feas: self.tol_feas.unwrap_or(d.tol_feas),
            tol_kkt: self.tol_kkt.unwrap_or(d.tol_kkt),
            mu: self.mu.unwrap_or(d.mu),
            t0: self.t0.unwrap_or(d.t0),
            max_newton_iter: self.max_newton_iter.unwrap_or(d.max_newton_iter),
            ls_alpha: self.ls_alpha.unwrap_or(d.ls_alpha),
            ls_beta: self.ls_beta.unwrap_or(d.ls_beta),
            margin: self.margin.unwrap_or(d.margin),
        }
    }
}

impl From<RouteField> for StateRoute {
    fn from(r: RouteField) -> Self {
        match r {
            RouteField::Auto => StateRoute::default(),
            RouteField::Symbolic => StateRoute::Symbolic { guard: usize::MAX },
            RouteField::Adjoint => StateRoute::Adjoint,
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn registry(&self) -> Result<VariableRegistry> {
        let mut reg = VariableRegistry::new();
        for v in &self.variables {
            reg.add_with_round(&v.name, v.lower, v.upper, v.round)
                .with_context(|| format!("variables: `{}`", v.name))?;
        }
        Ok(reg)
    }

    /// The bare program of the `[gp]` section.
    pub fn geometric_program(&self) -> Result<GeometricProgram> {
        let def = self.gp.as_ref().ok_or_else(|| anyhow!("missing [gp] section"))?;
        let reg = self.registry()?;
        if reg.is_empty() {
            bail!("variables: at least one variable is required");
        }
        let objective = Posynomial::parse(&def.objective, &reg).context("gp.objective")?;
        let mut gp = GeometricProgram::new(reg.clone(), objective);
        for (i, s) in def.inequalities.iter().enumerate() {
            let p = Posynomial::parse(s, &reg).with_context(|| format!("gp.inequalities[{i}]"))?;
            gp.add_inequality(format!("f{}", i + 1), p);
        }
        for (i, s) in def.equalities.iter().enumerate() {
            let p = Posynomial::parse(s, &reg).with_context(|| format!("gp.equalities[{i}]"))?;
            let m = p
                .as_monomial()
                .cloned()
                .ok_or_else(|| anyhow!("gp.equalities[{i}]: `{s}` is not a monomial"))?;
            gp = gp.with_equality(format!("g{}", i + 1), m);
        }
        gp.validate().context("gp")?;
        Ok(gp)
    }

    /// Case-study configuration with command-line overrides applied.
    pub fn casestudy_config(&self, seed: Option<u64>, mode: Option<ModeField>) -> Option<PdmConfig> {
        self.casestudy.clone().map(|cfg| apply_overrides(cfg, seed, mode))
    }

    pub fn ftc_problem(&self, seed: Option<u64>, mode: Option<ModeField>) -> Result<FtcProblem> {
        if let Some(cfg) = self.casestudy_config(seed, mode) {
            if self.kind == Some(KindField::Budget) {
                bail!("kind: the case study is performance-constrained");
            }
            cfg.validate().context("casestudy")?;
            return Ok(build_case_problem(&bundled_wtm(), &cfg, self.route.into())?);
        }
        let kind = match self.kind {
            Some(KindField::Budget) => ProblemKind::Budget,
            Some(KindField::Performance) => ProblemKind::Performance,
            None => bail!("kind: expected `budget` or `performance`"),
        };
        let model = Arc::new(self.model()?);
        let (n, horizon) = (model.n(), model.horizon());
        let fts = self.fts_spec(n, mode)?;
        fts.validate(n, horizon).context("fts")?;
        let performance = self.performance_spec(n, horizon)?;
        performance.validate(n, horizon).context("performance")?;
        let def = self.budget.as_ref().ok_or_else(|| anyhow!("missing [budget] section"))?;
        let cost = Posynomial::parse(&def.cost, model.registry()).context("budget.cost")?;
        if !(def.bound.is_finite() && def.bound > 0.0) {
            bail!("budget.bound must be > 0, got {}", def.bound);
        }
        Ok(FtcProblem {
            model,
            fts,
            performance,
            budget: BudgetSpec { cost, offset: def.offset, bound: def.bound },
            kind,
            route: self.route.into(),
        })
    }

    pub fn model(&self) -> Result<SystemModel> {
        let def = self.system.as_ref().ok_or_else(|| anyhow!("missing [system] section"))?;
        let reg = self.registry()?;
        let (n, horizon) = (def.n, def.horizon);
        if horizon == 0 {
            bail!("system.horizon must be >= 1");
        }
        let base = match def.base.len() {
            1 => vec![def.base[0].clone(); horizon],
            len if len == horizon => def.base.clone(),
            len => bail!("system.base: expected 1 or {horizon} matrices, got {len}"),
        };
        let mut gains = vec![vec![Gain::Absent; n * n]; horizon];
        for (key, text) in &def.gains {
            let idx: Vec<usize> = key
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("system.gains: key `{key}` is not \"k,i,j\""))?;
            let [k, i, j] = idx[..] else { bail!("system.gains: key `{key}` is not \"k,i,j\"") };
            if k >= horizon || i >= n || j >= n {
                bail!("system.gains: key `{key}` is out of range");
            }
            let p = Posynomial::parse(text, &reg).with_context(|| format!("system.gains.\"{key}\""))?;
            gains[k][i * n + j] = Gain::Posy(p);
        }
        let model = match &def.k_min {
            Some(k_min) => SystemModel::from_split(n, base, k_min.clone(), gains, reg),
            None => SystemModel::new(n, base, gains, reg),
        }
        .context("system")?;
        if let Some(v) = model.validate().first() {
            bail!("system: {v}");
        }
        Ok(model)
    }

    fn fts_spec(&self, n: usize, mode: Option<ModeField>) -> Result<FtsSpec> {
        let def = self.fts.as_ref().ok_or_else(|| anyhow!("missing [fts] section"))?;
        let mode = match mode.unwrap_or(def.mode) {
            ModeField::Fixed => FtsMode::Fixed,
            ModeField::Robust => FtsMode::Robust {
                v: def.v.clone().ok_or_else(|| anyhow!("fts.v is required in robust mode"))?,
            },
        };
        if def.x0.len() != n {
            bail!("fts.x0 must have {n} entries");
        }
        Ok(FtsSpec { epsilon: def.epsilon, ell: def.ell.clone(), x0: def.x0.clone(), mode, margin: def.margin })
    }

    fn performance_spec(&self, n: usize, horizon: usize) -> Result<PerformanceSpec> {
        let def = self.performance.as_ref().ok_or_else(|| anyhow!("missing [performance] section"))?;
        let order = match &def.order {
            OrderField::Finite(p) => NormOrder::Finite(*p),
            OrderField::Named(s) if s == "inf" || s == "infinity" => NormOrder::Infinity,
            OrderField::Named(s) => bail!("performance.order: expected an integer or \"inf\", got `{s}`"),
        };
        Ok(PerformanceSpec {
            order,
            times: def.times.clone().unwrap_or_else(|| vec![horizon]),
            weights: def.weights.clone().unwrap_or_else(|| vec![1.0; n]),
        })
    }
}

pub fn apply_overrides(mut cfg: PdmConfig, seed: Option<u64>, mode: Option<ModeField>) -> PdmConfig {
    if seed.is_some() {
        cfg.delta_seed = seed;
    }
    match mode {
        Some(ModeField::Fixed) => cfg.mode = PdmMode::Fixed,
        Some(ModeField::Robust) => cfg.mode = PdmMode::Robust,
        None => {}
    }
    cfg
}
