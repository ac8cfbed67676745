use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;
use tlps_core::demo;
use tlps_core::filter::{filtered_rollout_with, guarantee_applicable, HashNominal, Nominal, PolicyNominal, ScriptNominal};
use tlps_core::formula::{prepare, Formula, PrepareError};
use tlps_core::oracle::{check_equivalence, SuiteConfig};
use tlps_core::policy::{PolicyError, PolicyTree, Variant};
use tlps_core::robustness::eval;
use tlps_core::system::{build_grid, GridSpec};
use tlps_core::TransitionSystem;

#[derive(Parser)]
#[command(name = "tlps", version, about = "Robustness-optimal temporal logic policies and filters")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct Problem {
    /// Grid spec or transition system JSON.
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    spec: String,
    /// Start state index; defaults to the grid start (or 0).
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, default_value = "timer")]
    variant: Variant,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the value tables and print the start value.
    Solve {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out the optimal policy until the run closes into a lasso.
    Rollout {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a nominal controller through the specification filter.
    Filter {
        #[command(flatten)]
        problem: Problem,
        /// `random`, `random(SEED)`, `script(A,B,...)` or a formula whose policy acts as nominal.
        #[arg(long)]
        nominal: String,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        /// Hand control to the fallback policy after this many steps.
        #[arg(long)]
        handover: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the solver against the brute-force oracle on random instances.
    Verify {
        /// Suite config JSON; fields left out take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP gateway.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Run a bundled scenario: counterexample, witness, drone, two-agent.
    Demo {
        name: String,
        #[arg(long, default_value_t = demo::HANDOVER)]
        handover: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Fail {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl ToString) -> Fail {
    Fail { code, msg: msg.to_string() }
}

const USAGE: u8 = 1;
const PARSE: u8 = 2;
const NOT_IN_S: u8 = 3;
const IO: u8 = 4;
const HORIZON: u8 = 5;
const DISCREPANCY: u8 = 6;

fn io_fail(e: io::Error) -> Fail {
    fail(IO, e)
}

struct Loaded {
    ts: Arc<TransitionSystem>,
    grid: Option<GridSpec>,
    f: Formula,
    x0: usize,
}

fn load(p: &Problem) -> Result<Loaded, Fail> {
    let text = fs::read_to_string(&p.system).map_err(|e| fail(IO, format!("{}: {e}", p.system.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(IO, format!("{}: {e}", p.system.display())))?;
    let (ts, grid) = if value.get("rows").is_some() {
        let grid: GridSpec = serde_json::from_value(value).map_err(|e| fail(IO, e))?;
        (build_grid(&grid).map_err(|e| fail(IO, e))?, Some(grid))
    } else {
        let ts: TransitionSystem = serde_json::from_value(value).map_err(|e| fail(IO, e))?;
        let problems = ts.validate();
        if !problems.is_empty() {
            return Err(fail(IO, problems.join("; ")));
        }
        (ts, None)
    };
    let f = prepare(&p.spec).map_err(|e| match e {
        PrepareError::Parse(e) => fail(PARSE, format!("{}: {e}", p.spec)),
        PrepareError::NotInS(e) => fail(NOT_IN_S, e),
    })?;
    let unbound = ts.validate_for(&f);
    if !unbound.is_empty() {
        return Err(fail(USAGE, unbound.join("; ")));
    }
    let x0 = p.start.unwrap_or_else(|| grid.as_ref().map_or(0, GridSpec::start_state));
    if x0 >= ts.n {
        return Err(fail(USAGE, format!("start state {x0} out of range")));
    }
    Ok(Loaded { ts: Arc::new(ts), grid, f, x0 })
}

fn build(l: &Loaded, variant: Variant) -> Result<PolicyTree, Fail> {
    PolicyTree::build(l.ts.clone(), &l.f, variant).map_err(|e| fail(USAGE, e))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Fail> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(io_fail)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn line(w: &mut dyn Write, v: &serde_json::Value) -> Result<(), Fail> {
    writeln!(w, "{v}").map_err(io_fail)
}

fn horizon_fail(e: PolicyError) -> Fail {
    match e {
        PolicyError::Horizon(_) => fail(HORIZON, e),
        e => fail(USAGE, e),
    }
}

fn parse_nominal(text: &str, seed: u64, l: &Loaded, variant: Variant) -> Result<Box<dyn Nominal>, Fail> {
    let text = text.trim();
    if text == "random" {
        return Ok(Box::new(HashNominal { seed, m: l.ts.m }));
    }
    let args = |prefix: &str| text.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
    if let Some(s) = args("random(") {
        let seed = s.trim().parse().map_err(|_| fail(USAGE, format!("bad seed in {text:?}")))?;
        return Ok(Box::new(HashNominal { seed, m: l.ts.m }));
    }
    if let Some(s) = args("script(") {
        let actions: Vec<usize> = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|_| fail(USAGE, format!("bad action {t:?}"))))
            .collect::<Result<_, _>>()?;
        if let Some(a) = actions.iter().find(|&&a| a >= l.ts.m) {
            return Err(fail(USAGE, format!("action {a} out of range")));
        }
        let last = actions.last().copied().unwrap_or(0);
        return Ok(Box::new(ScriptNominal::new(actions, last)));
    }
    let f = prepare(text).map_err(|e| match e {
        PrepareError::Parse(e) => fail(PARSE, format!("{text}: {e}")),
        PrepareError::NotInS(e) => fail(NOT_IN_S, e),
    })?;
    let p = PolicyTree::build(l.ts.clone(), &f, variant).map_err(|e| fail(USAGE, e))?;
    Ok(Box::new(PolicyNominal::new(p, l.x0)))
}

fn positions(l: &Loaded, x: usize) -> serde_json::Value {
    l.grid.as_ref().map_or(serde_json::Value::Null, |g| json!(g.positions(x)))
}

fn run(cmd: Cmd) -> Result<(), Fail> {
    match cmd {
        Cmd::Solve { problem, out } => {
            let l = load(&problem)?;
            let pt = build(&l, problem.variant)?;
            let root = pt.root();
            let mut w = sink(&out)?;
            writeln!(w, "{}", serde_json::to_string_pretty(&pt.values.dump()).unwrap()).map_err(io_fail)?;
            w.flush().map_err(io_fail)?;
            eprintln!("V({}) = {}", l.x0, root.v_inf[l.x0]);
            if let Some(t) = root.t_conv() {
                eprintln!("T_conv = {t}");
            }
        }
        Cmd::Rollout { problem, horizon, out } => {
            let l = load(&problem)?;
            let pt = build(&l, problem.variant)?;
            let (tr, info) = pt.rollout_from(pt.init(l.x0), l.x0, horizon, true).map_err(horizon_fail)?;
            let rho = eval(&l.f, &l.ts, &tr).map_err(|e| fail(USAGE, e))?;
            let mut w = sink(&out)?;
            for (k, (x, a)) in tr.states.iter().zip(&tr.actions).enumerate() {
                line(&mut *w, &json!({"step": k, "state": x, "positions": positions(&l, *x), "action": a, "inspect": info[k]}))?;
            }
            line(&mut *w, &json!({"rho": rho, "loop_start": tr.loop_start, "length": tr.states.len()}))?;
            w.flush().map_err(io_fail)?;
            eprintln!("rho = {rho}, lasso {}..{}", tr.loop_start.unwrap_or(0), tr.states.len());
        }
        Cmd::Filter { problem, nominal, horizon, handover, seed, out } => {
            let l = load(&problem)?;
            let pt = build(&l, problem.variant)?;
            let mut nom = parse_nominal(&nominal, seed, &l, problem.variant)?;
            let mut w = sink(&out)?;
            let mut k = 0;
            let mut x = l.x0;
            let mut err = Ok(());
            let run = filtered_rollout_with(&pt, nom.as_mut(), l.x0, horizon, handover, |v, next| {
                if err.is_ok() {
                    err = line(&mut *w, &json!({"step": k, "state": x, "positions": positions(&l, x), "verdict": v}));
                }
                k += 1;
                x = next;
            })
            .map_err(horizon_fail)?;
            err?;
            let rho = eval(&l.f, &l.ts, &run.trace).map_err(|e| fail(USAGE, e))?;
            let interventions = run.verdicts.iter().filter(|v| v.intervened).count();
            line(
                &mut *w,
                &json!({
                    "rho": rho, "interventions": interventions, "loop_start": run.trace.loop_start,
                    "handover_at": run.handover_at, "guarantee_applicable": guarantee_applicable(&l.f),
                }),
            )?;
            w.flush().map_err(io_fail)?;
            eprintln!("rho = {rho}, interventions = {interventions}");
        }
        Cmd::Verify { config, seed, instances, out } => {
            let mut cfg: SuiteConfig = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(io_fail)?;
                    serde_json::from_str(&text).map_err(|e| fail(IO, format!("{}: {e}", p.display())))?
                }
                None => SuiteConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = instances {
                cfg.instances = n;
            }
            let report = check_equivalence(&cfg);
            let mut w = sink(&out)?;
            writeln!(w, "{}", serde_json::to_string(&report).unwrap()).map_err(io_fail)?;
            w.flush().map_err(io_fail)?;
            eprintln!(
                "{} instances, {} value checks, {} history checks, {} discrepancies",
                report.instances,
                report.value_checks,
                report.history_checks,
                report.discrepancies.len()
            );
            if let Some(d) = report.discrepancies.first() {
                eprintln!("first: instance {} (seed {}): {} {}: {}", d.instance, d.instance_seed, d.kind, d.formula, d.detail);
                return Err(fail(DISCREPANCY, "oracle disagreement"));
            }
        }
        Cmd::Serve { port } => {
            let rt = tokio::runtime::Runtime::new().map_err(io_fail)?;
            rt.block_on(tlps_gateway::serve(port)).map_err(io_fail)?;
        }
        Cmd::Demo { name, handover, out } => {
            let mut w = sink(&out)?;
            run_demo(&name, handover, &mut *w)?;
            w.flush().map_err(io_fail)?;
        }
    }
    Ok(())
}

fn run_demo(name: &str, handover: usize, w: &mut dyn Write) -> Result<(), Fail> {
    let demo_fail = |e: demo::DemoError| fail(USAGE, e);
    match name {
        "counterexample" => {
            let ts = Arc::new(demo::counterexample());
            let f = Formula::finally(Formula::atom("one"));
            for variant in [Variant::Timer, Variant::Markov] {
                let pt = PolicyTree::build(ts.clone(), &f, variant).map_err(|e| fail(USAGE, e))?;
                let tr = pt.rollout(0, 1000, true).map_err(horizon_fail)?;
                let rho = eval(&f, &ts, &tr).map_err(|e| fail(USAGE, e))?;
                line(w, &json!({"variant": variant, "v": pt.root().v_inf, "q": pt.q_all(&pt.init(0), 0), "trace": tr, "rho": rho}))?;
            }
        }
        "witness" => {
            let (ts, f) = demo::witness_comparison();
            let ts = Arc::new(ts);
            for variant in [Variant::Timer, Variant::Markov] {
                let pt = PolicyTree::build(ts.clone(), &f, variant).map_err(|e| fail(USAGE, e))?;
                let tr = pt.rollout(0, 1000, true).map_err(horizon_fail)?;
                let rho = eval(&f, &ts, &tr).map_err(|e| fail(USAGE, e))?;
                let witness = tlps_core::robustness::witness_time(&f, &ts, &tr).map_err(|e| fail(USAGE, e))?;
                line(w, &json!({"variant": variant, "trace": tr, "rho": rho, "witness": witness}))?;
            }
        }
        "drone" => {
            for o in demo::drone_scenarios(handover).map_err(demo_fail)? {
                line(w, &serde_json::to_value(&o).unwrap())?;
            }
        }
        "two-agent" => {
            let d = demo::TwoAgent::solve().map_err(demo_fail)?;
            for o in d.scenarios(handover).map_err(demo_fail)? {
                line(w, &serde_json::to_value(&o).unwrap())?;
            }
        }
        other => return Err(fail(USAGE, demo::DemoError::Unknown(other.to_string()))),
    }
    Ok(())
}

fn main() -> ExitCode {
    let filter = tracing_subscriber::EnvFilter::try_from_env("TLPS_LOG").unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(io::stderr).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
