//! Bundled systems and scenarios: the two-state counterexample, a witness-time comparison
//! instance, and two original gridworlds with their filter scenarios.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::filter::{filtered_rollout, HashNominal, Nominal, PolicyNominal};
use crate::formula::{parse, prepare, rewrite_conjunction, Formula, ParseError, PrepareError, RewriteError};
use crate::policy::{ExecState, PolicyError, PolicyTree, Variant};
use crate::robustness::{eval, EvalError};
use crate::score::{fin, Score};
use crate::system::{build_grid, GridSpec, SystemError, TransitionSystem, Trace};

pub const DRONE_GRID_JSON: &str = include_str!("../../../demos/drone.json");
pub const TWO_AGENT_GRID_JSON: &str = include_str!("../../../demos/two_agent.json");

pub const DRONE_SPEC: &str = "F[0,50] r_ws & G(F r_wd & F r_sw) & (!r_d U r_k) & G r_safe";
pub const DRONE_NOMINAL: &str = "F r_ws";
pub const SAFE_ONLY: &str = "G r_safe";
pub const COFFEE_SPEC: &str = "F r_coffee & G hit_wall";
pub const TEA_SPEC: &str = "F r_tea & G hit_wall";
pub const TWO_AGENT_BOUND: u32 = 12;
/// Steps the nominal controller acts before the fallback policy takes over.
pub const HANDOVER: usize = 20;
pub const HORIZON: usize = 100_000;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("grid file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown demo {0:?}")]
    Unknown(String),
}

/// Two states, `f(x, a) = a`, atom `one` scoring 0 and 1.
pub fn counterexample() -> TransitionSystem {
    TransitionSystem::from_fn(2, 2, |_, a| a).with_label("one", vec![fin(0), fin(1)])
}

/// Six states where the best value of `q U r` is reachable by a short path through a
/// low `q` state or a longer one that keeps `q` high.
///
/// From 0 both actions lead to 1; from 1 action 0 takes the long branch 3, 4, 5 and
/// action 1 the short branch 2. States 2 and 5 are absorbing.
pub fn witness_comparison() -> (TransitionSystem, Formula) {
    let succ = [[1, 1], [3, 2], [2, 2], [4, 4], [5, 5], [5, 5]];
    let ts = TransitionSystem::from_fn(6, 2, |x, a| succ[x][a])
        .with_label("q", vec![fin(1), fin(3), fin(3), fin(3), fin(3), fin(3)])
        .with_label("r", vec![fin(-1), fin(-1), fin(1), fin(-1), fin(-1), fin(3)]);
    (ts, Formula::until(Formula::atom("q"), Formula::atom("r")))
}

pub fn drone_grid() -> GridSpec {
    serde_json::from_str(DRONE_GRID_JSON).expect("bundled grid")
}

pub fn two_agent_grid() -> GridSpec {
    serde_json::from_str(TWO_AGENT_GRID_JSON).expect("bundled grid")
}

/// Two-agent mission: reach the worksite within the bound, collect gear before entering,
/// settle in the worksite, keep visiting wood and saw, fetch the key before any door,
/// and keep the agents exactly `safe_distance` apart.
pub fn two_agent_spec() -> String {
    let ws = "(r_ws_1 | r_wd_1 | r_sw_1) & (r_ws_2 | r_wd_2 | r_sw_2)";
    format!(
        "F[0,{TWO_AGENT_BOUND}] ({ws}) & (!({ws}) U (r_g_1 | r_g_2)) & F G({ws}) \
         & G(F(r_wd_1 | r_wd_2) & F(r_sw_1 | r_sw_2)) & (!(r_d_1 | r_d_2) U (r_k_1 | r_k_2)) & G r_safe"
    )
}

/// Parses `text` and rewrites conjunctions into the fragment.
pub fn solvable(text: &str) -> Result<Formula, DemoError> {
    Ok(prepare(text)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    /// Robustness of the full mission on the run.
    pub rho: Score,
    /// Robustness of `G r_safe` on the run.
    pub safe_rho: Score,
    pub interventions: usize,
    pub handover_at: Option<usize>,
    pub trace: Trace,
}

impl ScenarioOutcome {
    fn new(name: &str, mission: &Formula, ts: &TransitionSystem, trace: Trace) -> Result<Self, DemoError> {
        Ok(ScenarioOutcome {
            name: name.to_string(),
            rho: eval(mission, ts, &trace)?,
            safe_rho: eval(&Formula::globally(Formula::atom("r_safe")), ts, &trace)?,
            interventions: 0,
            handover_at: None,
            trace,
        })
    }
}

/// Single-agent scenarios: the reach-only nominal unfiltered, filtered by `G r_safe`, and
/// filtered by the full mission. Filtered runs hand over to the fallback after `handover` steps.
pub fn drone_scenarios(handover: usize) -> Result<Vec<ScenarioOutcome>, DemoError> {
    let grid = drone_grid();
    let ts = Arc::new(build_grid(&grid)?);
    let x0 = grid.start_state();
    let mission = parse(DRONE_SPEC)?;
    let nominal = PolicyTree::build(ts.clone(), &solvable(DRONE_NOMINAL)?, Variant::Timer)?;
    let mut out = vec![ScenarioOutcome::new("unfiltered", &mission, &ts, nominal.rollout(x0, HORIZON, true)?)?];
    for (name, spec) in [("safe_only", SAFE_ONLY), ("full", DRONE_SPEC)] {
        let filter = PolicyTree::build(ts.clone(), &solvable(spec)?, Variant::Timer)?;
        let mut nom = PolicyNominal::new(nominal.clone(), x0);
        let run = filtered_rollout(&filter, &mut nom, x0, HORIZON, Some(handover))?;
        let mut o = ScenarioOutcome::new(name, &mission, &ts, run.trace)?;
        o.interventions = run.verdicts.iter().filter(|v| v.intervened).count();
        o.handover_at = run.handover_at;
        out.push(o);
    }
    Ok(out)
}

/// Agent 1 follows a single-agent policy on its own projection; agent 2 takes its part of
/// the joint policy's action.
#[derive(Clone, Debug)]
pub struct JointNominal {
    pub agent1: PolicyNominal,
    pub joint: PolicyNominal,
    /// Cells per agent.
    pub cells: usize,
    /// Actions per agent.
    pub moves: usize,
}

impl Nominal for JointNominal {
    fn action(&mut self, x: usize, es: &ExecState) -> usize {
        let a1 = self.agent1.action(x / self.cells, es);
        let a2 = self.joint.action(x, es) % self.moves;
        a1 * self.moves + a2
    }

    fn fingerprint(&self) -> Option<u64> {
        let (a, b) = (self.agent1.fingerprint()?, self.joint.fingerprint()?);
        Some(a.rotate_left(1) ^ b)
    }

    fn applied(&mut self, x: usize, a: usize) {
        self.agent1.applied(x / self.cells, a / self.moves);
        self.joint.applied(x, a);
    }
}

/// Solved two-agent mission: system, start state and optimal policy.
pub struct TwoAgent {
    pub grid: GridSpec,
    pub ts: Arc<TransitionSystem>,
    pub x0: usize,
    pub mission: Formula,
    pub policy: PolicyTree,
}

impl TwoAgent {
    pub fn solve() -> Result<Self, DemoError> {
        let grid = two_agent_grid();
        let ts = Arc::new(build_grid(&grid)?);
        let x0 = grid.start_state();
        let mission = parse(&two_agent_spec())?;
        let policy = PolicyTree::build(ts.clone(), &rewrite_conjunction(&mission)?, Variant::Timer)?;
        Ok(TwoAgent { grid, ts, x0, mission, policy })
    }

    /// Nominal where agent 1 pursues `errand` alone and agent 2 follows the mission policy.
    pub fn errand_nominal(&self, errand: &str) -> Result<JointNominal, DemoError> {
        let mut single = self.grid.clone();
        single.agents.truncate(1);
        single.safe_distance = None;
        let sts = Arc::new(build_grid(&single)?);
        let cells = sts.n;
        let p1 = PolicyTree::build(sts, &solvable(errand)?, Variant::Timer)?;
        Ok(JointNominal {
            agent1: PolicyNominal::new(p1, self.x0 / cells),
            joint: PolicyNominal::new(self.policy.clone(), self.x0),
            cells,
            moves: 5,
        })
    }

    /// Optimal rollout, the coffee and tea errands filtered by the mission, and the coffee
    /// errand filtered by `G r_safe` alone.
    pub fn scenarios(&self, handover: usize) -> Result<Vec<ScenarioOutcome>, DemoError> {
        let mut out = vec![ScenarioOutcome::new(
            "optimal",
            &self.mission,
            &self.ts,
            self.policy.rollout(self.x0, HORIZON, true)?,
        )?];
        let safe = PolicyTree::build(self.ts.clone(), &solvable(SAFE_ONLY)?, Variant::Timer)?;
        for (name, errand, filter) in
            [("coffee", COFFEE_SPEC, &self.policy), ("tea", TEA_SPEC, &self.policy), ("safe_only", COFFEE_SPEC, &safe)]
        {
            let mut nom = self.errand_nominal(errand)?;
            let run = filtered_rollout(filter, &mut nom, self.x0, HORIZON, Some(handover))?;
            let mut o = ScenarioOutcome::new(name, &self.mission, &self.ts, run.trace)?;
            o.interventions = run.verdicts.iter().filter(|v| v.intervened).count();
            o.handover_at = run.handover_at;
            out.push(o);
        }
        Ok(out)
    }
}

/// Seeded random nominal for a system with `m` actions.
pub fn random_nominal(seed: u64, m: usize) -> HashNominal {
    HashNominal { seed, m }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grids_round_trip() {
        assert_eq!(drone_grid().to_json(), DRONE_GRID_JSON);
        assert_eq!(two_agent_grid().to_json(), TWO_AGENT_GRID_JSON);
    }

    #[test]
    fn spec_strings_parse() {
        for s in [DRONE_SPEC, DRONE_NOMINAL, SAFE_ONLY, COFFEE_SPEC, TEA_SPEC, &two_agent_spec()] {
            parse(s).unwrap();
        }
    }
}
