//! Command-line front end: parses problem files, runs the builders and the
//! solver, and writes solution documents and plot data.
//!
//! Exit codes: 0 optimal (or certified), 1 input error or failed
//! certification, 2 infeasible, 3 solver failure.

pub mod output;
pub mod problem;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ftgp_core::ftc::{certify_fts, schedule_from_names, FtcSolution};
use ftgp_core::gp::{solve, SolveStatus, SolverOptions};
use ftgp_core::pdm::{run_case_study, PdmConfig};

use output::{read_schedule, write_figures, write_json, write_solution_data, ReportDocument, SolutionDocument};
use problem::{apply_overrides, ModeField, ProblemFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ftgp", version, about = "Finite-time control of positive systems by geometric programming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a budget- or performance-constrained problem file.
    Solve { problem: PathBuf },
    /// Check a schedule against the finite-time bounds of a problem file.
    Certify { problem: PathBuf, schedule: PathBuf },
    /// Run the product-development case study (optional config file).
    Casestudy { config: Option<PathBuf> },
    /// Solve the bare `[gp]` section of a problem file.
    GpSolve { problem: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, default_value = "ftgp-out")]
    pub out: PathBuf,
    /// Seed for sampling the case-study disturbance.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol_feas: Option<f64>,
    #[arg(long, global = true)]
    pub tol_kkt: Option<f64>,
    /// Newton iterations per barrier stage.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeField>,
    /// Suppress standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

impl GlobalArgs {
    fn options(&self, base: SolverOptions) -> SolverOptions {
        SolverOptions {
            tol_feas: self.tol_feas.unwrap_or(base.tol_feas),
            tol_kkt: self.tol_kkt.unwrap_or(base.tol_kkt),
            max_newton_iter: self.max_iter.unwrap_or(base.max_newton_iter),
            ..base
        }
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let g = &cli.global;
    let result = match &cli.command {
        Command::Solve { problem } => cmd_solve(problem, g),
        Command::Certify { problem, schedule } => cmd_certify(problem, schedule, g),
        Command::Casestudy { config } => cmd_casestudy(config.as_deref(), g),
        Command::GpSolve { problem } => cmd_gp_solve(problem, g),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_INPUT
    })
}

pub fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::IterationLimit | SolveStatus::NumericalFailure => EXIT_SOLVER,
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn summarize(g: &GlobalArgs, sol: &FtcSolution) {
    g.say(format!("status: {}", sol.report.status));
    g.say(format!("objective: {}", sol.objective));
    for (k, m) in sol.fts_margins.iter().enumerate() {
        g.say(format!("margin k={}: {}", k + 1, m));
    }
}

pub fn cmd_solve(path: &Path, g: &GlobalArgs) -> Result<i32> {
    let file = ProblemFile::load(path)?;
    let problem = file.ftc_problem(g.seed, g.mode)?;
    let opts = g.options(file.solver.options());
    opts.validate().context("solver options")?;
    let program = problem.build()?;
    let sol = match problem.solve(&opts) {
        Ok(sol) => sol,
        Err(e) => {
            eprintln!("solver failure: {e}");
            return Ok(EXIT_SOLVER);
        }
    };
    prepare_out(&g.out)?;
    let doc = SolutionDocument::new(&sol, problem.kind, problem.model.registry(), &program.gp.registry);
    write_json(&g.out, "solution.json", &doc)?;
    write_solution_data(&g.out, &sol)?;
    summarize(g, &sol);
    if sol.report.status != SolveStatus::Optimal {
        eprintln!("{}: {}", sol.report.status, sol.report.message);
    }
    Ok(status_code(sol.report.status))
}

pub fn cmd_certify(path: &Path, schedule: &Path, g: &GlobalArgs) -> Result<i32> {
    let file = ProblemFile::load(path)?;
    let problem = file.ftc_problem(g.seed, g.mode)?;
    let values = read_schedule(schedule)?;
    let theta = schedule_from_names(problem.model.registry(), &values).context("schedule")?;
    let cert = certify_fts(&problem.model, &theta, &problem.fts)?;
    for (k, m) in cert.margins.iter().enumerate() {
        g.say(format!("margin k={}: {}", k + 1, m));
    }
    match cert.first_violation() {
        None => {
            g.say("certified");
            Ok(EXIT_OK)
        }
        Some(k) => {
            eprintln!("finite-time bound violated at k={k}");
            Ok(EXIT_INPUT)
        }
    }
}

pub fn cmd_casestudy(config: Option<&Path>, g: &GlobalArgs) -> Result<i32> {
    let cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<PdmConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PdmConfig::default(),
    };
    let cfg = apply_overrides(cfg, g.seed, g.mode);
    cfg.validate().context("config")?;
    let opts = g.options(SolverOptions::default());
    opts.validate().context("solver options")?;
    let cs = match run_case_study(&cfg, &opts) {
        Ok(cs) => cs,
        Err(e) => {
            eprintln!("solver failure: {e}");
            return Ok(EXIT_SOLVER);
        }
    };
    prepare_out(&g.out)?;
    let program = cs.problem.build()?;
    let doc = SolutionDocument::new(&cs.solution, cs.problem.kind, cs.problem.model.registry(), &program.gp.registry);
    write_json(&g.out, "solution.json", &doc)?;
    write_solution_data(&g.out, &cs.solution)?;
    write_figures(&g.out, &cs)?;
    summarize(g, &cs.solution);
    g.say(format!("cost: {}", cs.solution.cost));
    if cs.solution.report.status != SolveStatus::Optimal {
        eprintln!("{}: {}", cs.solution.report.status, cs.solution.report.message);
    }
    Ok(status_code(cs.solution.report.status))
}

pub fn cmd_gp_solve(path: &Path, g: &GlobalArgs) -> Result<i32> {
    let file = ProblemFile::load(path)?;
    let gp = file.geometric_program()?;
    let opts = g.options(file.solver.options());
    opts.validate().context("solver options")?;
    let report = solve(&gp, &opts)?;
    let doc = ReportDocument::new(&report, &gp.registry);
    prepare_out(&g.out)?;
    write_json(&g.out, "report.json", &doc)?;
    g.say(output::to_json(&doc)?.trim_end());
    if report.status != SolveStatus::Optimal {
        eprintln!("{}: {}", report.status, report.message);
    }
    Ok(status_code(report.status))
}
