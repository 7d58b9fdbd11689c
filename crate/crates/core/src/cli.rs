//! Command-line front end: `run`, `certify`, `oracle`, `diagnose`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_lemma2, check_theorem1, consensus_average, dual_objective, rate_report, relative_error, Lemma2Report,
    RateReport, SummaryRow, Theorem1Report,
};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::operators::{assemble, certify_step_sizes, Certificate};
use crate::oracle::{self, OracleMethod, OracleSolution};
use crate::problem::Problem;
use crate::scenario::{DelayModeSpec, Scenario};
use crate::solver::{RunReport, Solver, StateRow};

#[derive(Debug, Parser)]
#[command(name = "clusterdual", version, about = "Asynchronous distributed dual proximal gradient on clustered networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the delayed solver and write summary.csv, report.json and optionally state.csv.
    Run(RunArgs),
    /// Print c_max and the eigenvalue certificate.
    Certify(CommonArgs),
    /// Solve the primal problem centrally.
    Oracle(OracleArgs),
    /// Evaluate rate, Lemma-2, Theorem-1 and duality diagnostics on a finished run.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file; `simA` / `simB` select the bundled scenarios.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub qmax: Option<usize>,
    /// uniform | constant | table
    #[arg(long)]
    pub delay_mode: Option<String>,
    #[arg(long)]
    pub log_stride: Option<usize>,
    #[arg(long)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write state.csv at every logged stride.
    #[arg(long)]
    pub state: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// waterfilling | projected_gradient | grid; defaults to water-filling for one coupling row.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding summary.csv (and state.csv); report.json is written here.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub t_early: usize,
    #[arg(long, default_value_t = 4000)]
    pub t_late: usize,
}

/// Reference oracle: water-filling for a single coupling row, projected gradient otherwise.
pub fn reference_oracle(problem: &Problem) -> Result<OracleSolution> {
    if problem.rows() == 1 {
        oracle::waterfilling(problem)
    } else {
        oracle::projected_gradient(problem)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongDuality {
    pub h_consensus: f64,
    pub primal_value: f64,
    pub relative_gap: f64,
}

/// `-H` at the consensus-averaged dual against `F(x*)`.
pub fn strong_duality(
    ops: &crate::operators::SystemOperators,
    problem: &Problem,
    alpha: &[f64],
    oracle: &OracleSolution,
) -> Result<StrongDuality> {
    let avg = consensus_average(ops, alpha);
    let h = dual_objective(ops, problem, &avg)?;
    Ok(StrongDuality {
        h_consensus: h,
        primal_value: oracle.objective,
        relative_gap: relative_error(-h, oracle.objective),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub qmax: usize,
    pub delay_mode: String,
    pub elapsed_seconds: f64,
    pub oracle: Option<OracleSolution>,
    pub x_last: Vec<Vec<f64>>,
    pub x_ergodic: Vec<Vec<f64>>,
    pub linf_last_vs_oracle: Option<f64>,
    pub linf_ergodic_vs_oracle: Option<f64>,
    pub strong_duality: Option<StrongDuality>,
    pub run: RunReport,
}

pub fn linf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn parse_mode(s: &Option<String>) -> Result<Option<DelayModeSpec>> {
    s.as_deref().map(str::parse).transpose()
}

/// Loads, overrides and runs a scenario end to end.
pub fn execute(scenario: &Scenario, common: &CommonArgs, threads: Option<usize>, record_state: bool) -> Result<RunSummary> {
    let problem = scenario.problem()?;
    let schedule = scenario.schedule(common.seed, common.qmax, parse_mode(&common.delay_mode)?)?;
    let mut config = scenario.solver_config(common.max_iters)?;
    if let Some(s) = common.log_stride {
        if s == 0 {
            return Err(Error::Validation("--log-stride must be positive".into()));
        }
        config.log_stride = s;
    }
    if let Some(t) = threads {
        config.threads = t.max(1);
    }
    config.allow_uncertified = common.allow_uncertified;
    config.record_state = record_state;
    let reference = match reference_oracle(&problem) {
        Ok(o) => Some(o),
        Err(e) => {
            warn!("reference oracle unavailable: {e}");
            None
        }
    };
    config.reference_h = reference.as_ref().map(OracleSolution::h_star);
    let (seed, qmax, mode) = (schedule.seed, schedule.q, schedule.mode.name().to_owned());
    let start = Instant::now();
    let solver = Solver::new(&problem, schedule, config)?;
    let run = solver.run()?;
    let elapsed = start.elapsed().as_secs_f64();
    let strong = match &reference {
        Some(o) => Some(strong_duality(&solver.ops, &problem, &run.alpha, o)?),
        None => None,
    };
    Ok(RunSummary {
        scenario: scenario.name.clone(),
        seed,
        qmax,
        delay_mode: mode,
        elapsed_seconds: elapsed,
        linf_last_vs_oracle: reference.as_ref().map(|o| linf(&run.last.x, &o.x)),
        linf_ergodic_vs_oracle: reference.as_ref().map(|o| linf(&run.ergodic.x, &o.x)),
        oracle: reference,
        x_last: run.last.x.clone(),
        x_ergodic: run.ergodic.x.clone(),
        strong_duality: strong,
        run,
    })
}

/// Column labels for `state.csv`: `alpha` blocks (1-based cluster/agent labels) then `omega`.
pub fn state_header(layout: &Layout) -> Vec<String> {
    let mut h = vec!["t".to_owned()];
    for a in &layout.agents {
        let (i, j) = (a.cluster + 1, a.local + 1);
        h.extend((1..=layout.dim).map(|k| format!("mu_{i}_{j}_{k}")));
        h.extend((1..=a.cluster_size * layout.dim).map(|k| format!("gamma_{i}_{j}_{k}")));
        h.extend((1..=layout.rows).map(|k| format!("theta_{i}_{j}_{k}")));
    }
    h.extend((1..=layout.omega_len).map(|k| format!("omega_{k}")));
    h
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_states(path: &Path, layout: &Layout, states: &[StateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(state_header(layout))?;
    for s in states {
        let mut rec = vec![s.t.to_string()];
        rec.extend(s.alpha.iter().chain(&s.omega).map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_states(path: &Path, layout: &Layout) -> Result<Vec<StateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != state_header(layout) {
        return Err(Error::Validation(format!("{}: header does not match the scenario layout", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t = rec[0]
            .parse()
            .map_err(|_| Error::Validation(format!("bad step index '{}'", &rec[0])))?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|v| v.parse().map_err(|_| Error::Validation(format!("bad value '{v}'"))))
            .collect::<Result<_>>()?;
        let (alpha, omega) = vals.split_at(layout.alpha_len);
        out.push(StateRow {
            t,
            alpha: alpha.to_vec(),
            omega: omega.to_vec(),
        });
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = Scenario::load(&args.common.scenario)?;
    let summary = execute(&scenario, &args.common, args.threads, args.state)?;
    std::fs::create_dir_all(&args.out)?;
    write_summary(&args.out.join("summary.csv"), &summary.run.summary)?;
    if args.state {
        let problem = scenario.problem()?;
        let layout = Layout::new(&problem.network, problem.dim, problem.rows());
        write_states(&args.out.join("state.csv"), &layout, &summary.run.states)?;
    }
    std::fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
    writeln!(out, "scenario {} ({} iterations, {:.2} s)", summary.scenario, summary.run.iterations, summary.elapsed_seconds)?;
    writeln!(out, "x (last)     = {}", fmt_blocks(&summary.x_last))?;
    writeln!(out, "x (ergodic)  = {}", fmt_blocks(&summary.x_ergodic))?;
    if let Some(o) = &summary.oracle {
        writeln!(out, "x (oracle)   = {}", fmt_blocks(&o.x))?;
    }
    if let Some(sd) = &summary.strong_duality {
        writeln!(out, "duality gap  = {:.3e}", sd.relative_gap)?;
    }
    Ok(())
}

fn fmt_blocks(x: &[Vec<f64>]) -> String {
    let parts: Vec<String> = x.iter().flatten().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn certificate_for(common: &CommonArgs) -> Result<Certificate> {
    let scenario = Scenario::load(&common.scenario)?;
    let problem = scenario.problem()?;
    let schedule = scenario.schedule(common.seed, common.qmax, parse_mode(&common.delay_mode)?)?;
    let config = scenario.solver_config(None)?;
    let ops = assemble(&problem, schedule.d(), &config.pi)?;
    let requested = match &config.step {
        crate::solver::StepRule::Auto => None,
        crate::solver::StepRule::AutoPerAgent => Some(certify_step_sizes(&ops, None)?.per_agent_steps),
        crate::solver::StepRule::Uniform(c) => Some(vec![*c; ops.num_agents()]),
        crate::solver::StepRule::PerAgent(c) => Some(c.clone()),
    };
    certify_step_sizes(&ops, requested.as_deref())
}

fn cmd_certify(common: &CommonArgs, out: &mut dyn Write) -> Result<()> {
    let cert = certificate_for(common)?;
    writeln!(out, "c_max                     = {:.9e}", cert.c_max)?;
    writeln!(out, "h_max                     = {:.9e}", cert.h_max)?;
    writeln!(out, "tau_max(Z^T B Z) (eigen)  = {:.9e}", cert.tau_max_ztbz)?;
    writeln!(out, "tau_max(Z^T B Z) (power)  = {:.9e}", cert.tau_max_ztbz_power)?;
    writeln!(out, "min-eig(C^-1 - H - Z^T B Z) = {:.3e}", cert.min_eig_descent)?;
    writeln!(out, "min-eig(C^-1 - Z^T S Z)     = {:.3e}", cert.min_eig_metric)?;
    writeln!(out, "certified                 = {}", cert.certified)?;
    if !cert.certified && !common.allow_uncertified {
        return Err(Error::Uncertified("requested step sizes violate the certificate".into()));
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = Scenario::load(&args.common.scenario)?;
    let problem = scenario.problem()?;
    let sol = match &args.method {
        Some(m) => oracle::solve(&problem, m.parse::<OracleMethod>()?)?,
        None => reference_oracle(&problem)?,
    };
    writeln!(out, "x*      = {}", fmt_blocks(&sol.x))?;
    let lambda: Vec<String> = sol.lambda.iter().map(|v| format!("{v:.6}")).collect();
    writeln!(out, "lambda* = [{}]", lambda.join(", "))?;
    writeln!(out, "F(x*)   = {:.9}", sol.objective)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PassFlags {
    pub gap_ratio: bool,
    pub gap_slope: bool,
    pub z_ratio: bool,
    pub lemma2: Option<bool>,
    pub theorem1: Option<bool>,
    pub strong_duality: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub h_star: f64,
    pub rates: RateReport,
    pub lemma2: Option<Lemma2Report>,
    pub theorem1: Option<Theorem1Report>,
    pub strong_duality: Option<StrongDuality>,
    pub certificate: Certificate,
    pub pass: PassFlags,
}

/// Diagnostics over a finished run's `summary.csv` and optional `state.csv`.
pub fn diagnose(scenario: &Scenario, common: &CommonArgs, dir: &Path, t_early: usize, t_late: usize) -> Result<DiagnoseReport> {
    let problem = scenario.problem()?;
    let schedule = scenario.schedule(common.seed, common.qmax, parse_mode(&common.delay_mode)?)?;
    let config = scenario.solver_config(None)?;
    let ops = assemble(&problem, schedule.d(), &config.pi)?;
    let certificate = certificate_for(common)?;
    let rows = read_summary(&dir.join("summary.csv"))?;
    let reference = reference_oracle(&problem)?;
    let h_star = reference.h_star();
    let rates = rate_report(&rows, h_star, t_early, t_late);
    let state_path = dir.join("state.csv");
    let states = if state_path.exists() {
        read_states(&state_path, &ops.layout)?
    } else {
        Vec::new()
    };
    let (mut lemma2, mut theorem1, mut strong) = (None, None, None);
    if let (Some(first), Some(last)) = (states.first(), states.last()) {
        let consecutive = states.windows(2).all(|w| w[1].t == w[0].t + 1) && first.t == 0;
        if consecutive && last.t >= 2 * ops.d + 2 {
            let alphas: Vec<Vec<f64>> = states.iter().map(|s| s.alpha.clone()).collect();
            let omegas: Vec<Vec<f64>> = states.iter().map(|s| s.omega.clone()).collect();
            lemma2 = Some(check_lemma2(&ops, &alphas, &omegas)?);
        }
        let star = consensus_average(&ops, &last.alpha);
        theorem1 = Some(check_theorem1(
            &ops,
            &problem,
            &rows,
            &certificate.steps,
            &first.alpha,
            &first.omega,
            &star,
            &last.omega,
        )?);
        strong = Some(strong_duality(&ops, &problem, &last.alpha, &reference)?);
    }
    let pass = PassFlags {
        gap_ratio: rates.gap_ratio_ok,
        gap_slope: rates.gap_slope.is_some_and(|s| s <= -0.8),
        z_ratio: rates.z_ratio_ok,
        lemma2: lemma2.as_ref().map(|l| l.c2_min_slack >= -1e-9 && l.omega_bound_min_slack >= -1e-9),
        theorem1: theorem1.as_ref().map(|t| t.holds),
        strong_duality: strong.as_ref().map(|s| s.relative_gap <= 1e-4),
    };
    Ok(DiagnoseReport {
        h_star,
        rates,
        lemma2,
        theorem1,
        strong_duality: strong,
        certificate,
        pass,
    })
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = Scenario::load(&args.common.scenario)?;
    let report = diagnose(&scenario, &args.common, &args.out, args.t_early, args.t_late)?;
    let path = args.out.join("report.json");
    let mut doc = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)?,
        Err(_) => serde_json::json!({}),
    };
    doc["diagnostics"] = serde_json::to_value(&report)?;
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report.pass)?)?;
    Ok(())
}

/// Parses `argv` and runs the selected subcommand; returns the process exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = if informational {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return if informational { 0 } else { 1 };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Certify(a) => cmd_certify(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
