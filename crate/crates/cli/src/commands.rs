use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde_json::json;

use tugwar_core::continuum::{harmonic_measure_ladder, unit_disk};
use tugwar_core::scenario::{self, Boundary, ScenarioSpec, REGISTRY};
use tugwar_core::simulator::{drift_check, simulate as run_trials, Functional, Strategy, ValueEstimate};
use tugwar_core::space::{build_complex, convergence_study, solve_u_eps, SpaceSpec};
use tugwar_core::{
    build_game, solve_f0_exact, value_iteration, Direction, GameGraph, GameSpec, IterOptions,
    SolveReport,
};

use crate::output::{Artifacts, Status};
use crate::Common;

type CmdResult = Result<Artifacts, String>;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn load_graph(path: &Path) -> Result<GameGraph, String> {
    let spec = GameSpec::from_json(&read(path)?).map_err(|e| e.to_string())?;
    build_game(&spec).map_err(|e| e.to_string())
}

fn load_space(path: &Path) -> Result<SpaceSpec, String> {
    serde_json::from_str(&read(path)?).map_err(|e| format!("schema violation: {e}"))
}

fn iter_options(common: &Common) -> IterOptions {
    let mut o = IterOptions::default();
    if let Some(t) = common.tol {
        o.tol = t;
    }
    if let Some(m) = common.max_iter {
        o.max_iter = m;
    }
    o
}

/// `linear-x`, `const:V`, `cap:δ`, `cantor:δ` or `first-terminal`.
fn parse_data(s: &str) -> Result<Boundary, String> {
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number in --data {s}"));
    match s.split_once(':') {
        None if s == "linear-x" => Ok(Boundary::LinearX),
        None if s == "first-terminal" => Ok(Boundary::FirstTerminal),
        Some(("const", v)) => Ok(Boundary::Constant { value: num(v)? }),
        Some(("cap", v)) => Ok(Boundary::Cap { deltas: vec![num(v)?] }),
        Some(("cantor", v)) => Ok(Boundary::Cantor { deltas: vec![num(v)?] }),
        _ => Err(format!("unknown boundary data `{s}`")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    /// Exact algorithm when `f ≡ 0`, otherwise iteration from below.
    Auto,
    Exact,
    Below,
    Above,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Graph interchange JSON.
    #[arg(long, conflicts_with = "space")]
    pub graph: Option<PathBuf>,
    /// Metric-space JSON (`{"kind": "segment", ...}`).
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Boundary data for `--space`.
    #[arg(long, default_value = "linear-x")]
    pub data: String,
    /// Constant running payoff for `--space`.
    #[arg(long, default_value_t = 0.0)]
    pub running: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
}

fn solve_graph(g: &GameGraph, method: MethodArg, opts: &IterOptions) -> Result<SolveReport, String> {
    let r = match method {
        MethodArg::Auto if g.f_is_zero() => solve_f0_exact(g),
        MethodArg::Exact => solve_f0_exact(g),
        MethodArg::Auto | MethodArg::Below => value_iteration(g, Direction::Below, opts),
        MethodArg::Above => value_iteration(g, Direction::Above, opts),
    };
    r.map_err(|e| e.to_string())
}

pub fn solve(a: &SolveArgs, common: &Common) -> CmdResult {
    let opts = iter_options(common);
    let start = Instant::now();
    if let Some(path) = &a.graph {
        let g = load_graph(path)?;
        let rep = solve_graph(&g, a.method, &opts)?;
        let rows = (0..g.n())
            .map(|x| format!("{x},{},{}", g.label(x), rep.values()[x]))
            .collect();
        return Ok(Artifacts {
            stem: "solution".into(),
            report: json!({"command": "solve", "method": rep.method, "states": g.n(),
                "residual": rep.residual_sup, "iterations": rep.iterations,
                "converged": rep.converged, "warning": rep.warning, "values": rep.values(),
                "runtime_s": start.elapsed().as_secs_f64()}),
            table: Some(("state,label,value".into(), rows)),
            meta: vec![
                ("method".into(), format!("{:?}", rep.method)),
                ("residual".into(), format!("{:e}", rep.residual_sup)),
                ("converged".into(), rep.converged.to_string()),
            ],
            status: Status::from_flags(rep.converged, true),
        });
    }
    let path = a.space.as_ref().ok_or("solve needs --graph or --space")?;
    let spec = load_space(path)?;
    let eps = common.eps.unwrap_or(4.5 * spec.spacing());
    let c = build_complex(&spec, eps).map_err(|e| e.to_string())?;
    let big_f = scenario::boundary_values(&c, &parse_data(&a.data)?).map_err(|e| e.to_string())?;
    let rep = solve_u_eps(&c, &big_f, &vec![a.running; c.n()], &opts).map_err(|e| e.to_string())?;
    let rows = (0..c.n())
        .map(|i| {
            let p = &c.points[i];
            format!("{i},{},{},{},{}", p.x, p.y, c.is_terminal(i) as u8, rep.values()[i])
        })
        .collect();
    Ok(Artifacts {
        stem: "solution".into(),
        report: json!({"command": "solve", "space": spec, "eps": eps, "spacing": c.spacing,
            "points": c.n(), "residual": rep.residual_sup, "iterations": rep.iterations,
            "converged": rep.converged, "runtime_s": start.elapsed().as_secs_f64()}),
        table: Some(("point,x,y,terminal,value".into(), rows)),
        meta: vec![
            ("eps".into(), eps.to_string()),
            ("residual".into(), format!("{:e}", rep.residual_sup)),
            ("converged".into(), rep.converged.to_string()),
        ],
        status: Status::from_flags(rep.converged, true),
    })
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Starting state index.
    #[arg(long)]
    pub start: usize,
    /// Player I: `greedy`, `random`, `pull:STATE` or `eps-greedy:P`.
    #[arg(long, default_value = "greedy")]
    pub s1: String,
    /// Player II: `greedy`, `random`, `pull:STATE`, `eps-greedy:P` or `backtracking`.
    #[arg(long, default_value = "greedy")]
    pub s2: String,
    #[arg(long = "max-steps", default_value_t = 100_000)]
    pub max_steps: usize,
    /// Threshold δ₀ for the backtracking strategy.
    #[arg(long, default_value_t = 1e-3)]
    pub delta0: f64,
}

fn parse_strategy(
    s: &str,
    g: &GameGraph,
    field: &[f64],
    maximize: bool,
    delta0: f64,
) -> Result<Strategy, String> {
    let st = match s.split_once(':') {
        None if s == "greedy" && maximize => Strategy::GreedyMax { field: field.to_vec() },
        None if s == "greedy" => Strategy::GreedyMin { field: field.to_vec() },
        None if s == "random" => Strategy::RandomNeighbor,
        None if s == "backtracking" && !maximize => {
            Strategy::backtracking(g, field.to_vec(), delta0).map_err(|e| e.to_string())?
        }
        Some(("pull", t)) => {
            let t: usize = t.parse().map_err(|_| format!("bad state in `{s}`"))?;
            Strategy::pull_toward(g, &[t]).map_err(|e| e.to_string())?
        }
        Some(("eps-greedy", p)) => Strategy::EpsilonGreedy {
            field: field.to_vec(),
            eps: p.parse().map_err(|_| format!("bad probability in `{s}`"))?,
            maximize,
        },
        _ => return Err(format!("unknown strategy `{s}`")),
    };
    Ok(st)
}

pub fn simulate(a: &SimulateArgs, common: &Common) -> CmdResult {
    let g = load_graph(&a.graph)?;
    if a.start >= g.n() {
        return Err(format!("start state {} out of range", a.start));
    }
    let opts = iter_options(common);
    let sol = solve_graph(&g, MethodArg::Auto, &opts)?;
    let field = sol.values().to_vec();
    let s1 = parse_strategy(&a.s1, &g, &field, true, a.delta0)?;
    let s2 = parse_strategy(&a.s2, &g, &field, false, a.delta0)?;
    let trials = common.trials.unwrap_or(10_000);
    let seed = common.seed.unwrap_or(0);
    if trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let ts = run_trials(&g, &s1, &s2, a.start, trials, seed, a.max_steps).map_err(|e| e.to_string())?;
    let est = ValueEstimate::from_trajectories(&ts);
    let functional = match (s1.name().as_str(), s2.name().as_str()) {
        (_, "backtracking") => Some(Functional::Backtracking {
            field: field.clone(),
            delta0: a.delta0,
        }),
        ("greedy_max", "greedy_min") => Some(Functional::Greedy { field: field.clone() }),
        _ => None,
    };
    let drift = match &functional {
        Some(f) => Some(drift_check(&g, &ts, f).map_err(|e| e.to_string())?),
        None => None,
    };
    let rows = ts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!("{i},{},{},{},{}", t.steps, t.terminated as u8, t.states.last().unwrap(), t.payoff)
        })
        .collect();
    let holds = drift.as_ref().is_none_or(|d| d.pass);
    Ok(Artifacts {
        stem: "simulation".into(),
        report: json!({"command": "simulate", "start": a.start, "strategies": [s1.name(), s2.name()],
            "trials": trials, "seed": seed, "estimate": est, "solver_value": field[a.start],
            "solver_residual": sol.residual_sup, "drift": drift}),
        table: Some(("trial,steps,terminated,final_state,payoff".into(), rows)),
        meta: vec![
            ("seed".into(), seed.to_string()),
            ("trials".into(), trials.to_string()),
            ("solver_residual".into(), format!("{:e}", sol.residual_sup)),
        ],
        status: Status::from_flags(sol.converged, holds),
    })
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    /// Metric-space JSON; its spacing is used at the first rung.
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value = "linear-x")]
    pub data: String,
    #[arg(long, default_value_t = 0.0)]
    pub running: f64,
    /// Comma-separated decreasing ε values.
    #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
    pub ladder: String,
}

pub fn converge(a: &ConvergeArgs, common: &Common) -> CmdResult {
    let spec = load_space(&a.space)?;
    let ladder = parse_list(&a.ladder)?;
    if ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.is_empty() {
        return Err("--ladder must be a nonempty decreasing list".into());
    }
    let data = parse_data(&a.data)?;
    let coarse = build_complex(&spec, ladder[0]).map_err(|e| e.to_string())?;
    let eval_at: Vec<(f64, f64)> = coarse.interior().map(|i| (coarse.points[i].x, coarse.points[i].y)).collect();
    let big_f = move |p: &tugwar_core::space::Point| -> f64 {
        match &data {
            Boundary::LinearX => p.x,
            Boundary::Constant { value } => *value,
            Boundary::Cap { deltas } => tugwar_core::continuum::cap_data(p, deltas[0]),
            _ => f64::NAN,
        }
    };
    if big_f(&coarse.points[0]).is_nan() {
        return Err(format!("--data {} is not supported by converge", a.data));
    }
    let running = a.running;
    let study = convergence_study(&spec, &big_f, &move |_| running, &ladder, &eval_at, &iter_options(common))
        .map_err(|e| e.to_string())?;
    let rows = study
        .rows
        .iter()
        .map(|r| format!("{},{},{},{},{}", r.eps, r.spacing, r.points, r.sup_diff, r.residual))
        .collect();
    let converged = study.rows.iter().all(|r| r.converged);
    let residual = study.rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let runtimes: Vec<f64> = study.rows.iter().map(|r| r.runtime_s).collect();
    Ok(Artifacts {
        stem: "convergence".into(),
        report: json!({"command": "converge", "space": spec, "ladder": ladder,
            "eval_points": eval_at.len(), "order": study.order, "r_squared": study.r_squared,
            "max_residual": residual, "converged": converged,
            "rows": study.rows.iter().map(|r| json!({"eps": r.eps, "spacing": r.spacing,
                "points": r.points, "sup_diff": r.sup_diff, "residual": r.residual,
                "runtime_s": r.runtime_s})).collect::<Vec<_>>()}),
        table: Some(("eps,spacing,points,sup_diff,residual".into(), rows)),
        meta: vec![
            ("max_residual".into(), format!("{residual:e}")),
            ("runtime_s".into(), format!("{runtimes:?}")),
        ],
        status: Status::from_flags(converged, true),
    })
}

#[derive(Args, Debug)]
pub struct HmeasureArgs {
    #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
    pub deltas: String,
    #[arg(long, default_value_t = 0.02)]
    pub spacing: f64,
}

pub fn hmeasure(a: &HmeasureArgs, common: &Common) -> CmdResult {
    let deltas = parse_list(&a.deltas)?;
    let eps = common.eps.unwrap_or(0.08);
    let mut opts = iter_options(common);
    if common.tol.is_none() {
        opts.tol = 1e-9;
    }
    unit_disk(a.spacing, eps).map_err(|e| e.to_string())?;
    let res = harmonic_measure_ladder(&deltas, a.spacing, eps, &opts).map_err(|e| e.to_string())?;
    let rows = res
        .entries
        .iter()
        .map(|e| format!("{},{},{},{}", e.delta, e.u0, e.residual, e.g_ratio))
        .collect();
    let converged = res.entries.iter().all(|e| e.converged);
    let mut sorted = res.entries.clone();
    sorted.sort_by(|x, y| x.delta.total_cmp(&y.delta));
    let monotone = sorted.windows(2).all(|w| w[0].u0 <= w[1].u0 + 10.0 * opts.tol);
    let residual = res.entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(Artifacts {
        stem: "hmeasure".into(),
        report: json!({"command": "hmeasure", "result": res, "monotone_in_delta": monotone,
            "note": "the absolute constants of the cube-root law are unspecified; the exponent band absorbs them and discretization bias"}),
        table: Some(("delta,u0,residual,g_ratio".into(), rows)),
        meta: vec![
            ("eps".into(), eps.to_string()),
            ("spacing".into(), a.spacing.to_string()),
            ("max_residual".into(), format!("{residual:e}")),
        ],
        status: Status::from_flags(converged, monotone),
    })
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Registry name, or `list`.
    #[arg(required_unless_present = "spec")]
    pub name: Option<String>,
    /// Scenario JSON instead of a registry name.
    #[arg(long, conflicts_with = "name")]
    pub spec: Option<PathBuf>,
}

pub fn print_list() {
    for name in REGISTRY {
        println!("{name}");
    }
}

pub fn scenario(a: &ScenarioArgs, common: &Common) -> CmdResult {
    let mut spec = match (&a.name, &a.spec) {
        (Some(name), _) => scenario::registry_spec(name).map_err(|e| e.to_string())?,
        (None, Some(path)) => ScenarioSpec::from_json(&read(path)?).map_err(|e| e.to_string())?,
        (None, None) => return Err("scenario needs a name or --spec".into()),
    };
    if let Some(t) = common.tol {
        spec.solver.tol = t;
    }
    if let Some(m) = common.max_iter {
        spec.solver.max_iter = m;
    }
    if let Some(e) = common.eps {
        spec.solver.eps = Some(e);
    }
    if let Some(sim) = spec.simulation.as_mut() {
        if let Some(t) = common.trials {
            sim.trials = t;
        }
        if let Some(s) = common.seed {
            sim.seed = s;
        }
    }
    let start = Instant::now();
    let out = scenario::run_scenario(&spec).map_err(|e| e.to_string())?;
    let mut report = out.report;
    if let Some(obj) = report.as_object_mut() {
        obj.insert("spec".into(), serde_json::to_value(&spec).expect("spec serializes"));
        obj.insert("runtime_s".into(), start.elapsed().as_secs_f64().into());
        obj.insert("converged".into(), out.converged.into());
        obj.insert("invariants_hold".into(), out.invariants_hold.into());
    }
    Ok(Artifacts {
        stem: spec.name.clone(),
        report,
        table: out.table,
        meta: vec![("scenario".into(), spec.name.clone())],
        status: Status::from_flags(out.converged, out.invariants_hold),
    })
}
