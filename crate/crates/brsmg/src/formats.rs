//! CSV and TOML formats for policies, demonstrations, learned parameters,
//! learning traces, rollouts and evaluation reports.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the tables bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use brsmg_core::forward::{LevelPolicySet, LevelSolution};
use brsmg_core::gridworld::Outcome;
use brsmg_core::inverse::{Demonstration, Step};
use brsmg_core::metrics::EvalReport;
use brsmg_core::params::ParamLayout;
use brsmg_core::{Agent, RiskMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn agent_id(agent: Agent) -> u8 {
    agent.index() as u8 + 1
}

fn agent_from_id(path: &Path, id: u8) -> Result<Agent> {
    match id {
        1 => Ok(Agent::One),
        2 => Ok(Agent::Two),
        _ => Err(Error::format(path, format!("agent {id} is not 1 or 2"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyRow {
    agent: u8,
    level: usize,
    state: usize,
    action: usize,
    q: f64,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueRow {
    agent: u8,
    level: usize,
    state: usize,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnchorRow {
    agent: u8,
    state: usize,
    leader: usize,
    action: usize,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResidualRow {
    agent: u8,
    level: usize,
    sweep: usize,
    residual: f64,
}

pub const POLICY_FILES: [&str; 4] = ["policies.csv", "values.csv", "anchor.csv", "convergence.csv"];

/// Writes the four tables of a policy set into `dir`.
pub fn write_policy_set(dir: &Path, set: &LevelPolicySet) -> Result<()> {
    let n_s = set.n_states();
    let mut policies = Vec::new();
    let mut values = Vec::new();
    let mut residuals = Vec::new();
    let mut anchor = Vec::new();
    for agent in Agent::BOTH {
        let id = agent_id(agent);
        let (n_own, n_opp) = (set.n_actions(agent), set.n_actions(agent.opponent()));
        for k in 1..=set.k_max() {
            let lv = set.level(agent, k);
            for s in 0..n_s {
                values.push(ValueRow {
                    agent: id,
                    level: k,
                    state: s,
                    value: lv.value[s],
                });
                for a in 0..n_own {
                    policies.push(PolicyRow {
                        agent: id,
                        level: k,
                        state: s,
                        action: a,
                        q: lv.q[s * n_own + a],
                        prob: lv.policy[s * n_own + a],
                    });
                }
            }
            for (i, &r) in lv.residuals.iter().enumerate() {
                residuals.push(ResidualRow {
                    agent: id,
                    level: k,
                    sweep: i + 1,
                    residual: r,
                });
            }
        }
        let table = set.anchor(agent);
        for s in 0..n_s {
            for leader in 0..n_opp {
                for a in 0..n_own {
                    anchor.push(AnchorRow {
                        agent: id,
                        state: s,
                        leader,
                        action: a,
                        prob: table[(s * n_opp + leader) * n_own + a],
                    });
                }
            }
        }
    }
    write_csv(&dir.join(POLICY_FILES[0]), policies)?;
    write_csv(&dir.join(POLICY_FILES[1]), values)?;
    write_csv(&dir.join(POLICY_FILES[2]), anchor)?;
    write_csv(&dir.join(POLICY_FILES[3]), residuals)
}

/// Reads a policy set written by [`write_policy_set`]. Rows may come in any
/// order but every index must be present exactly once.
pub fn read_policy_set(dir: &Path) -> Result<LevelPolicySet> {
    let p_path = dir.join(POLICY_FILES[0]);
    let policies: Vec<PolicyRow> = read_csv(&p_path)?;
    let v_path = dir.join(POLICY_FILES[1]);
    let values: Vec<ValueRow> = read_csv(&v_path)?;
    let a_path = dir.join(POLICY_FILES[2]);
    let anchor: Vec<AnchorRow> = read_csv(&a_path)?;
    let r_path = dir.join(POLICY_FILES[3]);
    let residuals: Vec<ResidualRow> = read_csv(&r_path)?;

    let n_states = values.iter().map(|r| r.state + 1).max().unwrap_or(0);
    let k_max = values.iter().map(|r| r.level).max().unwrap_or(0);
    if n_states == 0 || k_max == 0 {
        return Err(Error::format(&v_path, "no value rows"));
    }
    let mut n_actions = [0usize; 2];
    for r in &policies {
        let i = agent_from_id(&p_path, r.agent)?.index();
        n_actions[i] = n_actions[i].max(r.action + 1);
    }
    let empty = |agent: Agent| LevelSolution {
        value: vec![f64::NAN; n_states],
        q: vec![f64::NAN; n_states * n_actions[agent.index()]],
        policy: vec![f64::NAN; n_states * n_actions[agent.index()]],
        sweeps: 0,
        residuals: Vec::new(),
    };
    let mut levels: Vec<[LevelSolution; 2]> = (0..k_max).map(|_| [empty(Agent::One), empty(Agent::Two)]).collect();
    let check_level = |path: &Path, k: usize| {
        if k == 0 || k > k_max {
            Err(Error::format(path, format!("level {k} outside 1..={k_max}")))
        } else {
            Ok(())
        }
    };
    for r in &values {
        let agent = agent_from_id(&v_path, r.agent)?;
        check_level(&v_path, r.level)?;
        levels[r.level - 1][agent.index()].value[r.state] = r.value;
    }
    for r in &policies {
        let agent = agent_from_id(&p_path, r.agent)?;
        check_level(&p_path, r.level)?;
        let n = n_actions[agent.index()];
        if r.state >= n_states {
            return Err(Error::format(&p_path, format!("state {} out of range", r.state)));
        }
        let lv = &mut levels[r.level - 1][agent.index()];
        lv.q[r.state * n + r.action] = r.q;
        lv.policy[r.state * n + r.action] = r.prob;
    }
    let mut sorted: Vec<&ResidualRow> = residuals.iter().collect();
    sorted.sort_by_key(|r| (r.agent, r.level, r.sweep));
    for r in sorted {
        let agent = agent_from_id(&r_path, r.agent)?;
        check_level(&r_path, r.level)?;
        let lv = &mut levels[r.level - 1][agent.index()];
        lv.residuals.push(r.residual);
        lv.sweeps = lv.residuals.len();
    }
    let mut tables = [
        vec![f64::NAN; n_states * n_actions[1] * n_actions[0]],
        vec![f64::NAN; n_states * n_actions[0] * n_actions[1]],
    ];
    for r in &anchor {
        let agent = agent_from_id(&a_path, r.agent)?;
        let (n_own, n_opp) = (n_actions[agent.index()], n_actions[agent.opponent().index()]);
        if r.state >= n_states || r.leader >= n_opp || r.action >= n_own {
            return Err(Error::format(&a_path, "index out of range"));
        }
        tables[agent.index()][(r.state * n_opp + r.leader) * n_own + r.action] = r.prob;
    }
    let missing = levels
        .iter()
        .flat_map(|l| l.iter())
        .any(|lv| lv.value.iter().chain(&lv.q).chain(&lv.policy).any(|x| x.is_nan()))
        || tables.iter().any(|t| t.iter().any(|x| x.is_nan()));
    if missing {
        return Err(Error::format(dir, "policy dump is incomplete"));
    }
    Ok(LevelPolicySet::from_parts(n_states, n_actions, tables, levels)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoRow {
    demo_id: usize,
    t: usize,
    state: usize,
    action_1: usize,
    action_2: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoMetaRow {
    demo_id: usize,
    seed: Option<u64>,
    level_1: Option<usize>,
    level_2: Option<usize>,
}

/// Metadata file stored next to a demo file: `demos.csv` -> `demos_meta.csv`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("demos");
    path.with_file_name(format!("{stem}_meta.csv"))
}

pub fn write_demos(path: &Path, demos: &[Demonstration]) -> Result<()> {
    let rows = demos.iter().enumerate().flat_map(|(i, d)| {
        d.steps.iter().enumerate().map(move |(t, st)| DemoRow {
            demo_id: i,
            t,
            state: st.state,
            action_1: st.actions[0],
            action_2: st.actions[1],
        })
    });
    write_csv(path, rows)?;
    let meta = demos.iter().enumerate().map(|(i, d)| DemoMetaRow {
        demo_id: i,
        seed: d.seed,
        level_1: d.true_levels.map(|l| l[0]),
        level_2: d.true_levels.map(|l| l[1]),
    });
    write_csv(&meta_path(path), meta)
}

/// Reads demos; the metadata file is optional. Demo ids must be `0..M`
/// and time indices `0..N` within each demo.
pub fn read_demos(path: &Path) -> Result<Vec<Demonstration>> {
    let rows: Vec<DemoRow> = read_csv(path)?;
    let mut by_id: BTreeMap<usize, Vec<DemoRow>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.demo_id).or_default().push(r);
    }
    let mut demos = Vec::with_capacity(by_id.len());
    for (expect, (id, mut steps)) in by_id.into_iter().enumerate() {
        if id != expect {
            return Err(Error::format(path, format!("demo ids skip {expect}")));
        }
        steps.sort_by_key(|r| r.t);
        if steps.iter().enumerate().any(|(t, r)| r.t != t) {
            return Err(Error::format(path, format!("demo {id}: time indices are not 0..N")));
        }
        demos.push(Demonstration::new(
            steps.iter().map(|r| Step::new(r.state, r.action_1, r.action_2)).collect(),
        ));
    }
    let mp = meta_path(path);
    if mp.exists() {
        for m in read_csv::<DemoMetaRow>(&mp)? {
            let d = demos
                .get_mut(m.demo_id)
                .ok_or_else(|| Error::format(&mp, format!("unknown demo {}", m.demo_id)))?;
            d.seed = m.seed;
            d.true_levels = match (m.level_1, m.level_2) {
                (Some(a), Some(b)) => Some([a, b]),
                _ => None,
            };
        }
    }
    Ok(demos)
}

/// Learned parameters in named form. `gamma` is empty for methods that do
/// not learn it, holds one entry when shared and two otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedParams {
    pub method: String,
    pub gamma: Vec<f64>,
    pub omega_1: Vec<f64>,
    pub omega_2: Vec<f64>,
}

impl LearnedParams {
    pub fn from_theta(method: &str, layout: &ParamLayout, theta: &[f64]) -> Self {
        Self {
            method: method.into(),
            gamma: theta[..layout.n_gamma()].to_vec(),
            omega_1: layout.omega(theta, Agent::One).to_vec(),
            omega_2: layout.omega(theta, Agent::Two).to_vec(),
        }
    }

    /// Full parameter vector, if the learned gammas fit `layout`.
    pub fn theta(&self, layout: &ParamLayout) -> Option<Vec<f64>> {
        if self.gamma.len() != layout.n_gamma()
            || self.omega_1.len() != layout.feature_dim()
            || self.omega_2.len() != layout.feature_dim()
        {
            return None;
        }
        Some([self.gamma.as_slice(), &self.omega_1, &self.omega_2].concat())
    }

    /// `omega_1 ++ omega_2`.
    pub fn omegas(&self) -> Vec<f64> {
        [self.omega_1.as_slice(), &self.omega_2].concat()
    }
}

/// One row of the learning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: usize,
    pub epoch: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub gamma: f64,
    pub ppe_gamma: f64,
    pub ppe_omega_1: f64,
    pub ppe_omega_2: f64,
    pub ppe: f64,
    pub pl: f64,
}

/// One simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub scenario: String,
    pub risk_mode: RiskMode,
    pub episode: usize,
    pub seed: u64,
    pub level_1: usize,
    pub level_2: usize,
    pub outcome: Outcome,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub risk_mode: RiskMode,
    pub episodes: usize,
    pub rs: f64,
}

#[derive(Debug, Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: f64,
}

/// Flattens a report into `(metric, value)` pairs.
pub fn report_rows(r: &EvalReport) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(p) = &r.ppe {
        out.extend([
            ("ppe_gamma".into(), p.gamma),
            ("ppe_omega_1".into(), p.omega_1),
            ("ppe_omega_2".into(), p.omega_2),
            ("ppe".into(), p.aggregate),
        ]);
    }
    if let Some(pl) = r.pl {
        out.extend([("pl_1".into(), pl[0]), ("pl_2".into(), pl[1]), ("pl".into(), pl[2])]);
    }
    for s in &r.rs {
        let mode = match s.risk_mode {
            RiskMode::Cpt => "cpt",
            RiskMode::Neutral => "neutral",
        };
        out.push((format!("rs_{mode}_{}", s.scenario), s.rs));
    }
    if let Some(a) = r.id_accuracy {
        out.extend([("id_accuracy_1".into(), a[0]), ("id_accuracy_2".into(), a[1])]);
    }
    if let Some(c) = &r.correlations {
        out.extend([
            ("scc_1".into(), c.scc[0]),
            ("scc_2".into(), c.scc[1]),
            ("scc_avg".into(), c.scc_avg),
            ("scc_joint".into(), c.scc_joint),
            ("pcc_1".into(), c.pcc[0]),
            ("pcc_2".into(), c.pcc[1]),
            ("pcc_avg".into(), c.pcc_avg),
            ("pcc_joint".into(), c.pcc_joint),
        ]);
    }
    out
}

/// Writes `report.toml` and `report.csv` into `dir`.
pub fn write_report(dir: &Path, r: &EvalReport) -> Result<()> {
    write_toml(&dir.join("report.toml"), r)?;
    let rows = report_rows(r);
    write_csv(
        &dir.join("report.csv"),
        rows.iter().map(|(m, v)| MetricRow { metric: m, value: *v }),
    )
}
