//! Command-line front end: evaluation, solving, solvability checks,
//! theorem verification, and reproduction of the library's expected
//! values.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use robust_mdp::bellman::{
    extract_greedy_policy, fixed_point, OperatorKind, DEFAULT_FIXED_POINT_TOL,
    DEFAULT_MAX_ITER,
};
use robust_mdp::library::{
    builtin_names, check_expected, resolve_instance, NamedInstance,
};
use robust_mdp::mdp::{evaluate_exact, weighted_value, MdpInstance, Policy};
use robust_mdp::oracle::{
    duality_gap, max_min_oracle, nonstationary_adversary_dp, policy_dominance_check,
    verify_tractability, worst_case_oracle, Comparison, TractMode,
};
use robust_mdp::params::SetSpec;
use robust_mdp::report::{ResultRow, RunReport};
use robust_mdp::ssp::{falsify_ssp, SspMode};
use robust_mdp::uncertainty::DEFAULT_VERTEX_CAP;
use robust_mdp::{Error, Result};

#[derive(Parser)]
#[command(name = "rmdp", version, about = "Robust MDP evaluation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Emit the report as JSON instead of a text table.
    #[arg(long, global = true)]
    json: bool,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a fixed policy: exact, robust fixed points, or oracle.
    Evaluate(EvaluateArgs),
    /// Solve for the optimal robust value and policy.
    Solve(SolveArgs),
    /// Check a simultaneous-solvability property by falsification search.
    CheckSsp(CheckSspArgs),
    /// Verify a structural result against the slow oracle.
    VerifyTheorem(VerifyArgs),
    /// Re-run the expected values recorded with built-in instances.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    /// Exact evaluation under one concrete kernel.
    ExactP,
    /// Fixed point of the per-state robust operator.
    RobustS,
    /// Fixed point of the per-(state, action) robust operator.
    RobustSa,
    /// Grid-plus-refinement worst-case search.
    Oracle,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Builtin name or path to an instance JSON file.
    #[arg(long)]
    instance: String,
    /// Path to a policy JSON matrix [[p(a|s)]].
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Inline policy: state rows split by ';', entries by ','.
    #[arg(long, conflicts_with = "policy")]
    policy_inline: Option<String>,
    #[arg(long, value_enum, default_value_t = EvalMode::RobustS)]
    mode: EvalMode,
    /// Kernel index for exact-p on finite sets.
    #[arg(long)]
    kernel_index: Option<usize>,
    /// Parameter assignment for exact-p on parametric sets, e.g. "p=0.75".
    #[arg(long)]
    params: Option<String>,
    /// Fixed-point stopping tolerance.
    #[arg(long, default_value_t = DEFAULT_FIXED_POINT_TOL)]
    tol: f64,
    /// Oracle grid resolution per parameter axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Fixed-point iteration budget.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: String,
    #[arg(long, default_value_t = DEFAULT_FIXED_POINT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Oracle grid resolution per parameter axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Policy grid resolution for the max-min oracle.
    #[arg(long)]
    policy_grid: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SspModeArg {
    StrongS,
    StrongSa,
    WeakS,
    WeakSa,
}

impl From<SspModeArg> for SspMode {
    fn from(m: SspModeArg) -> Self {
        match m {
            SspModeArg::StrongS => SspMode::StrongS,
            SspModeArg::StrongSa => SspMode::StrongSa,
            SspModeArg::WeakS => SspMode::WeakS,
            SspModeArg::WeakSa => SspMode::WeakSa,
        }
    }
}

#[derive(Args)]
struct CheckSspArgs {
    #[arg(long)]
    instance: String,
    #[arg(long, value_enum, default_value_t = SspModeArg::StrongS)]
    mode: SspModeArg,
    /// Sampled objectives in the falsification search.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TheoremCheck {
    /// Fixed point vs oracle worst case for a fixed policy.
    Tractability,
    /// max-min vs min-max by grid oracles.
    Duality,
    /// Finite-horizon adversary DP against the stationary fixed point.
    Nonstationary,
    /// Greedy-vs-optimal and random-policy dominance.
    Dominance,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TractModeArg {
    S,
    Sa,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: String,
    #[arg(long, value_enum)]
    check: TheoremCheck,
    /// Rectangularization mode for tractability checks.
    #[arg(long, value_enum, default_value_t = TractModeArg::S)]
    mode: TractModeArg,
    /// Horizon for the non-stationary adversary DP.
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    /// Policy grid resolution for max-min oracles.
    #[arg(long)]
    policy_grid: Option<usize>,
    /// Seed for sampled policies and distributions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Re-check every built-in instance.
    #[arg(long, conflicts_with = "name")]
    all: bool,
    /// Re-check one built-in instance.
    #[arg(long)]
    name: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    match run(&cli.command) {
        Ok(mut report) => {
            report.wall_time_seconds = started.elapsed().as_secs_f64();
            if let Err(e) = emit(&cli, &report) {
                eprintln!("error: {}", e);
                std::process::exit(2);
            }
            std::process::exit(if report.all_passed() { 0 } else { 1 });
        }
        Err(e) => {
            eprintln!("error: {}", e);
            let code = match e {
                Error::Invalid(_) => 2,
                Error::Budget(_) => 3,
                Error::Numerical(_) => 1,
            };
            std::process::exit(code);
        }
    }
}

fn emit(cli: &Cli, report: &RunReport) -> Result<()> {
    let text = if cli.json {
        serde_json::to_string_pretty(report)
            .map_err(|e| Error::numerical(format!("report serialization: {}", e)))?
    } else {
        report.render_text()
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| Error::invalid(format!("cannot write {}: {}", path.display(), e))),
        None => {
            println!("{}", text);
            Ok(())
        }
    }
}

fn run(command: &Command) -> Result<RunReport> {
    match command {
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::CheckSsp(args) => cmd_check_ssp(args),
        Command::VerifyTheorem(args) => cmd_verify_theorem(args),
        Command::Reproduce(args) => cmd_reproduce(args),
    }
}

fn load_policy(
    mdp: &MdpInstance,
    path: &Option<PathBuf>,
    inline: &Option<String>,
) -> Result<Policy> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {}: {}", path.display(), e)))?;
        let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("policy JSON: {}", e)))?;
        return Policy::new(rows);
    }
    if let Some(inline) = inline {
        let rows = inline
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|e| {
                            Error::invalid(format!("policy entry '{}': {}", x.trim(), e))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        return Policy::new(rows);
    }
    Ok(Policy::uniform(mdp.num_states, mdp.num_actions))
}

/// "p=0.75,xi=0.5" against the declared parameters; absent names default
/// to the midpoint of their range.
fn parse_theta(spec: &SetSpec, text: &Option<String>) -> Result<Vec<f64>> {
    let params = match spec {
        SetSpec::Parametric(ps) => &ps.parameters,
        SetSpec::Model(_) => {
            return Err(Error::invalid("--params applies to parametric instances only"))
        }
    };
    let mut theta: Vec<f64> =
        params.iter().map(|p| 0.5 * (p.low + p.high)).collect();
    if let Some(text) = text {
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad parameter binding '{}'", part)))?;
            let idx = params
                .iter()
                .position(|p| p.name == name.trim())
                .ok_or_else(|| Error::invalid(format!("unknown parameter '{}'", name)))?;
            theta[idx] = value
                .trim()
                .parse()
                .map_err(|e| Error::invalid(format!("parameter '{}': {}", name, e)))?;
        }
    }
    Ok(theta)
}

fn vector_rows(rows: &mut Vec<ResultRow>, prefix: &str, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        rows.push(ResultRow::info(format!("{}_s{}", prefix, i), *v));
    }
}

fn policy_rows(rows: &mut Vec<ResultRow>, prefix: &str, policy: &Policy) {
    let total = policy.num_states() * policy.num_actions();
    if total > 64 {
        return;
    }
    for (s, row) in policy.action_probs.iter().enumerate() {
        for (a, p) in row.iter().enumerate() {
            rows.push(ResultRow::info(format!("{}_s{}_a{}", prefix, s, a), *p));
        }
    }
}

fn comparison_rows(rows: &mut Vec<ResultRow>, comparisons: &[Comparison]) {
    for c in comparisons {
        match c.pass {
            Some(pass) => rows.push(ResultRow {
                quantity: c.quantity.clone(),
                value: c.fast_value,
                expected: Some(c.oracle_value),
                tolerance: None,
                pass: Some(pass),
            }),
            None => {
                rows.push(ResultRow::info(format!("{}_fast", c.quantity), c.fast_value));
                rows.push(ResultRow::info(
                    format!("{}_oracle", c.quantity),
                    c.oracle_value,
                ));
            }
        }
    }
}

fn oracle_location_rows(
    rows: &mut Vec<ResultRow>,
    inst: &NamedInstance,
    report: &robust_mdp::oracle::OracleReport,
) {
    match &inst.set {
        SetSpec::Parametric(ps) => {
            for (i, p) in ps.parameters.iter().enumerate() {
                if let Some(v) = report.argmin_params.get(i) {
                    rows.push(ResultRow::info(format!("worst_param_{}", p.name), *v));
                }
            }
        }
        SetSpec::Model(_) => {
            if let Some(idx) = report.argmin_vertex {
                rows.push(ResultRow::info("worst_vertex_index", idx as f64));
            }
        }
    }
    rows.push(ResultRow::info("oracle_refinement_width", report.refinement_width));
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunReport> {
    let inst = resolve_instance(&args.instance)?;
    let policy = load_policy(&inst.mdp, &args.policy, &args.policy_inline)?;
    let mode_name = match args.mode {
        EvalMode::ExactP => "exact-p",
        EvalMode::RobustS => "robust-s",
        EvalMode::RobustSa => "robust-sa",
        EvalMode::Oracle => "oracle",
    };
    let mut report = RunReport::new(
        "evaluate",
        json!({"instance": args.instance, "mode": mode_name}),
    );
    match args.mode {
        EvalMode::ExactP => {
            let kernel = match &inst.set {
                SetSpec::Model(set) => {
                    let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP)?;
                    let idx = args.kernel_index.unwrap_or(0);
                    verts
                        .get(idx)
                        .cloned()
                        .ok_or_else(|| {
                            Error::invalid(format!(
                                "kernel index {} out of range ({} vertices)",
                                idx,
                                verts.len()
                            ))
                        })?
                }
                SetSpec::Parametric(ps) => {
                    let theta = parse_theta(&inst.set, &args.params)?;
                    for (i, v) in theta.iter().enumerate() {
                        report.results.push(ResultRow::info(
                            format!("theta_{}", ps.parameters[i].name),
                            *v,
                        ));
                    }
                    ps.kernel_at(&theta)?
                }
            };
            let value = evaluate_exact(&inst.mdp, &policy, &kernel)?;
            report.results.push(ResultRow::info(
                "mu_value",
                weighted_value(&inst.mdp.initial_dist, &value.values),
            ));
            vector_rows(&mut report.results, "value", &value.values);
            report.results.push(ResultRow::info("residual", value.residual));
        }
        EvalMode::RobustS | EvalMode::RobustSa => {
            let kind = if args.mode == EvalMode::RobustS {
                OperatorKind::PolicyS
            } else {
                OperatorKind::PolicySa
            };
            let set = inst.set.as_operator_set()?;
            let fp = fixed_point(kind, &inst.mdp, &set, Some(&policy), args.tol, args.max_iter)?;
            report.results.push(ResultRow::info(
                "mu_value",
                weighted_value(&inst.mdp.initial_dist, &fp.value.values),
            ));
            vector_rows(&mut report.results, "value", &fp.value.values);
            report.results.push(ResultRow::info("iterations", fp.iterations as f64));
            report.results.push(ResultRow::info("residual", fp.final_residual));
        }
        EvalMode::Oracle => {
            let oracle = worst_case_oracle(&inst.mdp, &inst.set, &policy, args.grid)?;
            report.results.push(ResultRow::info("oracle_min", oracle.min_value));
            oracle_location_rows(&mut report.results, &inst, &oracle);
        }
    }
    Ok(report)
}

fn cmd_solve(args: &SolveArgs) -> Result<RunReport> {
    let inst = resolve_instance(&args.instance)?;
    let mut report =
        RunReport::new("solve", json!({"instance": args.instance}));
    let set = inst.set.as_operator_set()?;
    let fp = fixed_point(
        OperatorKind::Optimal,
        &inst.mdp,
        &set,
        None,
        args.tol,
        args.max_iter,
    )?;
    report.results.push(ResultRow::info(
        "value_fixed_point",
        weighted_value(&inst.mdp.initial_dist, &fp.value.values),
    ));
    vector_rows(&mut report.results, "ustar", &fp.value.values);
    report.results.push(ResultRow::info("iterations", fp.iterations as f64));
    report.results.push(ResultRow::info("residual", fp.final_residual));
    let greedy = extract_greedy_policy(&inst.mdp, &set, &fp.value.values, args.tol)?;
    report.results.push(ResultRow::info(
        "deterministic_greedy",
        if greedy.is_deterministic(1e-9) { 1.0 } else { 0.0 },
    ));
    policy_rows(&mut report.results, "greedy", &greedy);

    let oracle = max_min_oracle(&inst.mdp, &inst.set, args.policy_grid)?;
    report.results.push(ResultRow::info("value_maxmin_oracle", oracle.min_value));
    oracle_location_rows(&mut report.results, &inst, &oracle);
    if let Some(policy) = &oracle.policy {
        policy_rows(&mut report.results, "maxmin_policy", policy);
    }
    let _ = args.grid;
    Ok(report)
}

fn cmd_check_ssp(args: &CheckSspArgs) -> Result<RunReport> {
    let inst = resolve_instance(&args.instance)?;
    let mode: SspMode = args.mode.into();
    let mut report = RunReport::new(
        "check-ssp",
        json!({
            "instance": args.instance,
            "mode": mode.as_str(),
            "samples": args.samples,
            "seed": args.seed,
        }),
    );
    let set = inst.set.as_operator_set()?;
    // structural shortcuts first: rectangularity settles the strong modes
    if let Ok(s_rect) = set.is_s_rectangular(DEFAULT_VERTEX_CAP) {
        report
            .results
            .push(ResultRow::info("s_rectangular", if s_rect { 1.0 } else { 0.0 }));
    }
    if let Ok(sa_rect) = set.is_sa_rectangular(DEFAULT_VERTEX_CAP) {
        report
            .results
            .push(ResultRow::info("sa_rectangular", if sa_rect { 1.0 } else { 0.0 }));
    }
    let verdict = falsify_ssp(&set, mode, args.samples, args.seed, DEFAULT_VERTEX_CAP)?;
    report
        .results
        .push(ResultRow::info("holds", if verdict.holds { 1.0 } else { 0.0 }));
    report.results.push(ResultRow::info(
        "exhaustive",
        if verdict.exhaustive { 1.0 } else { 0.0 },
    ));
    if let Some(n) = verdict.samples_checked {
        report.results.push(ResultRow::info("samples_checked", n as f64));
    }
    report.results.push(ResultRow::info(
        "witness_found",
        if verdict.witness_objective.is_some() { 1.0 } else { 0.0 },
    ));
    Ok(report)
}

fn cmd_verify_theorem(args: &VerifyArgs) -> Result<RunReport> {
    let inst = resolve_instance(&args.instance)?;
    let check_name = match args.check {
        TheoremCheck::Tractability => "tractability",
        TheoremCheck::Duality => "duality",
        TheoremCheck::Nonstationary => "nonstationary",
        TheoremCheck::Dominance => "dominance",
    };
    let mut report = RunReport::new(
        "verify-theorem",
        json!({"instance": args.instance, "check": check_name, "seed": args.seed}),
    );
    match args.check {
        TheoremCheck::Tractability => {
            let mode = match args.mode {
                TractModeArg::S => TractMode::S,
                TractModeArg::Sa => TractMode::Sa,
            };
            let policy = Policy::uniform(inst.mdp.num_states, inst.mdp.num_actions);
            let oracle = verify_tractability(&inst.mdp, &inst.set, &policy, mode)?;
            comparison_rows(&mut report.results, &oracle.comparisons);
        }
        TheoremCheck::Duality => {
            let oracle = duality_gap(&inst.mdp, &inst.set, args.policy_grid)?;
            comparison_rows(&mut report.results, &oracle.comparisons);
        }
        TheoremCheck::Nonstationary => {
            let set = inst.set.as_operator_set()?;
            let policy = Policy::uniform(inst.mdp.num_states, inst.mdp.num_actions);
            let dp = nonstationary_adversary_dp(&inst.mdp, &set, &policy, args.horizon)?;
            let fp = fixed_point(
                OperatorKind::PolicyS,
                &inst.mdp,
                &set,
                Some(&policy),
                DEFAULT_FIXED_POINT_TOL,
                DEFAULT_MAX_ITER,
            )?;
            let dist = dp
                .values
                .iter()
                .zip(&fp.value.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let g = inst.mdp.discount;
            let bound = if g > 0.0 {
                g.powi(args.horizon as i32) * inst.mdp.max_abs_reward() / (1.0 - g)
            } else {
                0.0
            };
            report.results.push(ResultRow::info("horizon", args.horizon as f64));
            report.results.push(ResultRow {
                quantity: "dp_distance_to_fixed_point".to_string(),
                value: dist,
                expected: Some(bound),
                tolerance: None,
                pass: Some(dist <= bound + 1e-9),
            });
        }
        TheoremCheck::Dominance => {
            let s_n = inst.mdp.num_states;
            let mut starts = vec![];
            for s in 0..s_n.min(2) {
                let mut mu = vec![0.0; s_n];
                mu[s] = 1.0;
                starts.push(mu);
            }
            let oracle = policy_dominance_check(&inst.mdp, &inst.set, &starts, args.seed)?;
            comparison_rows(&mut report.results, &oracle.comparisons);
        }
    }
    Ok(report)
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<RunReport> {
    let names: Vec<String> = if args.all {
        builtin_names().iter().map(|s| s.to_string()).collect()
    } else {
        match &args.name {
            Some(name) => vec![name.clone()],
            None => return Err(Error::invalid("reproduce: pass --all or --name <instance>")),
        }
    };
    let mut report = RunReport::new("reproduce", json!({"instances": names.clone()}));
    for name in &names {
        let inst = resolve_instance(name)?;
        for mut row in check_expected(&inst)? {
            row.quantity = format!("{}.{}", name, row.quantity);
            report.results.push(row);
        }
    }
    Ok(report)
}
